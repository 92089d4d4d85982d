//! Dice scoring, per-slice reports and cohort summaries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryMask;
use crate::pipeline::{PipelineConfig, PipelineMode, SegmentationResult};

pub const REPORT_SCHEMA: &str = "1";

/// `2|a ∩ b| / (|a| + |b|)`. Two empty masks score 1.0.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "dice of {}x{} and {}x{} masks",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(dice_from_counts(a.intersection_count(b), a.count(), b.count()))
}

fn dice_from_counts(inter: usize, na: usize, nb: usize) -> f64 {
    if na + nb == 0 {
        log::warn!("dice of two empty masks, scoring 1.0");
        return 1.0;
    }
    (2 * inter) as f64 / (na + nb) as f64
}

/// Hyperparameters echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: PipelineMode,
    pub seed: u64,
    pub rf_trees: usize,
    pub rf_min_samples_leaf: usize,
    pub rf_mtry: usize,
    pub rf_bootstrap: bool,
    pub mf_trees: usize,
    pub mf_min_samples_leaf: usize,
    /// `None` stands for an infinite lifetime.
    pub mf_lifetime: Option<f64>,
    pub mf_smoothing_alpha: f64,
}

impl From<&PipelineConfig> for ConfigEcho {
    fn from(c: &PipelineConfig) -> Self {
        ConfigEcho {
            mode: c.mode,
            seed: c.seed,
            rf_trees: c.rf_params.n_trees,
            rf_min_samples_leaf: c.rf_params.min_samples_leaf,
            rf_mtry: c.rf_params.mtry,
            rf_bootstrap: c.rf_params.bootstrap,
            mf_trees: c.mf_params.n_trees,
            mf_min_samples_leaf: c.mf_params.min_samples_leaf,
            mf_lifetime: c.mf_params.lifetime.is_finite().then_some(c.mf_params.lifetime),
            mf_smoothing_alpha: c.mf_params.smoothing_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDice {
    /// 1-based slice number.
    pub slice: usize,
    pub dice_mf: Option<f64>,
    pub dice_rf: Option<f64>,
    pub dice_combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub mf: Option<f64>,
    pub rf: Option<f64>,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub schema: String,
    pub config: Option<ConfigEcho>,
    /// Slices 2..=N; slice 1 is the given label.
    pub per_slice: Vec<SliceDice>,
    /// Mean of the per-slice Dice values.
    pub overall_mean: ModelScores,
    /// Dice of all inferred slices pooled into one pixel set.
    pub overall_pooled: ModelScores,
    pub wall_seconds: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// One scored slice: ground truth and whatever predictions are available.
#[derive(Debug, Clone, Copy)]
pub struct SliceOutcome<'a> {
    pub slice: usize,
    pub truth: &'a BinaryMask,
    pub combined: &'a BinaryMask,
    pub mf: Option<&'a BinaryMask>,
    pub rf: Option<&'a BinaryMask>,
}

#[derive(Default)]
struct Pool {
    inter: usize,
    pred: usize,
    truth: usize,
}

impl Pool {
    fn add(&mut self, pred: &BinaryMask, truth: &BinaryMask) {
        self.inter += pred.intersection_count(truth);
        self.pred += pred.count();
        self.truth += truth.count();
    }

    fn dice(&self) -> f64 {
        dice_from_counts(self.inter, self.pred, self.truth)
    }
}

impl SegmentationReport {
    pub fn from_outcomes(
        outcomes: &[SliceOutcome<'_>],
        config: Option<ConfigEcho>,
        wall_seconds: f64,
        warnings: Vec<String>,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::invalid("no slices to score"));
        }
        let has_mf = outcomes.iter().all(|o| o.mf.is_some());
        let has_rf = outcomes.iter().all(|o| o.rf.is_some());
        let mut per_slice = Vec::with_capacity(outcomes.len());
        let (mut pool_mf, mut pool_rf, mut pool_c) = (Pool::default(), Pool::default(), Pool::default());
        for o in outcomes {
            let dice_combined = dice(o.combined, o.truth)?;
            pool_c.add(o.combined, o.truth);
            let dice_mf = match o.mf.filter(|_| has_mf) {
                Some(m) => {
                    pool_mf.add(m, o.truth);
                    Some(dice(m, o.truth)?)
                }
                None => None,
            };
            let dice_rf = match o.rf.filter(|_| has_rf) {
                Some(m) => {
                    pool_rf.add(m, o.truth);
                    Some(dice(m, o.truth)?)
                }
                None => None,
            };
            per_slice.push(SliceDice {
                slice: o.slice,
                dice_mf,
                dice_rf,
                dice_combined,
            });
        }
        let n = per_slice.len() as f64;
        let mean_of = |f: &dyn Fn(&SliceDice) -> Option<f64>| -> Option<f64> {
            per_slice.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
        };
        let overall_mean = ModelScores {
            mf: mean_of(&|s| s.dice_mf),
            rf: mean_of(&|s| s.dice_rf),
            combined: mean_of(&|s| Some(s.dice_combined)).unwrap_or(0.0),
        };
        let overall_pooled = ModelScores {
            mf: has_mf.then(|| pool_mf.dice()),
            rf: has_rf.then(|| pool_rf.dice()),
            combined: pool_c.dice(),
        };
        Ok(SegmentationReport {
            schema: REPORT_SCHEMA.to_string(),
            config,
            per_slice,
            overall_mean,
            overall_pooled,
            wall_seconds,
            warnings,
        })
    }

    /// Score a pipeline run against per-slice ground truth (index 0 = slice 1).
    pub fn from_result(
        result: &SegmentationResult,
        truth: &[BinaryMask],
        config: &PipelineConfig,
        wall_seconds: f64,
    ) -> Result<Self> {
        if truth.len() != result.masks.len() {
            return Err(Error::invalid(format!(
                "{} ground-truth masks for {} slices",
                truth.len(),
                result.masks.len()
            )));
        }
        let outcomes: Vec<SliceOutcome<'_>> = (1..truth.len())
            .map(|k| SliceOutcome {
                slice: k + 1,
                truth: &truth[k],
                combined: &result.masks[k],
                mf: Some(&result.mf_masks[k]),
                rf: Some(&result.rf_masks[k]),
            })
            .collect();
        let warnings = result
            .warnings
            .iter()
            .map(|w| format!("slice {}: {}", w.slice + 1, w.message))
            .collect();
        Self::from_outcomes(&outcomes, Some(ConfigEcho::from(config)), wall_seconds, warnings)
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanSd {
            mean,
            sd: var.sqrt(),
            n: values.len(),
        })
    }
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    /// `None` for reports without a run configuration.
    pub mode: Option<PipelineMode>,
    pub mf: Option<MeanSd>,
    pub rf: Option<MeanSd>,
    pub combined: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub rows: Vec<CohortRow>,
}

impl fmt::Display for CohortSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>15} {:>15} {:>15}", "mode", "mondrian", "random", "combined")?;
        for r in &self.rows {
            let cell = |v: &Option<MeanSd>| v.map_or("-".to_string(), |m| m.to_string());
            writeln!(
                f,
                "{:<12} {:>15} {:>15} {:>15}",
                r.mode.as_ref().map_or("-", PipelineMode::as_str),
                cell(&r.mf),
                cell(&r.rf),
                r.combined
            )?;
        }
        Ok(())
    }
}

/// Per mode and model, mean ± sd of each report's `overall_mean`.
pub fn aggregate(reports: &[SegmentationReport]) -> Result<CohortSummary> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot aggregate zero reports"));
    }
    let mut groups: BTreeMap<Option<PipelineMode>, Vec<&SegmentationReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.config.as_ref().map(|c| c.mode)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|(mode, rs)| {
            let collect = |f: fn(&SegmentationReport) -> Option<f64>| -> Option<MeanSd> {
                let vals: Option<Vec<f64>> = rs.iter().map(|r| f(r)).collect();
                vals.and_then(|v| MeanSd::of(&v))
            };
            CohortRow {
                mode,
                mf: collect(|r| r.overall_mean.mf),
                rf: collect(|r| r.overall_mean.rf),
                combined: collect(|r| Some(r.overall_mean.combined)).expect("group is nonempty"),
            }
        })
        .collect();
    Ok(CohortSummary { rows })
}
