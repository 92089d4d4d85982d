//! Slice-by-slice propagation of the first slice's label.
//!
//! Both forests learn slice 1. For every following slice each forest labels
//! the pixels it thinks are more likely foreground than background, the two
//! masks are optionally cleaned against the previous slice's result, and their
//! union becomes the new slice's mask. In [`PipelineMode::Full`] the random
//! forest is then retrained from scratch on the Mondrian forest's mask for the
//! slice just labeled. The Mondrian forest is never refit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{
    attach_labels, decide_mask, extract_features, mask_union, BinaryMask, CineStack,
};
use crate::mforest::{mf_fit, mf_predict_proba, MfParams, MondrianForest};
use crate::par;
use crate::postprocess::post_process;
use crate::rforest::{rf_fit, rf_predict_proba, RandomForest, RfParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    /// Raw per-model decisions, no cleanup, no retraining.
    Basic,
    /// Cleanup of each model's mask, no retraining.
    #[serde(rename = "postprocess")]
    PostProcess,
    /// Cleanup plus random forest retraining on each new slice.
    Full,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [PipelineMode::Basic, PipelineMode::PostProcess, PipelineMode::Full];

    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineMode::Basic => "basic",
            PipelineMode::PostProcess => "postprocess",
            PipelineMode::Full => "full",
        }
    }

    pub fn post_processes(self) -> bool {
        !matches!(self, PipelineMode::Basic)
    }

    pub fn retrains(self) -> bool {
        matches!(self, PipelineMode::Full)
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(PipelineMode::Basic),
            "post" | "postprocess" => Ok(PipelineMode::PostProcess),
            "full" => Ok(PipelineMode::Full),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub rf_params: RfParams,
    pub mf_params: MfParams,
    pub mode: PipelineMode,
    /// Master seed. The per-forest `seed` fields are ignored and derived from it.
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(mode: PipelineMode, seed: u64) -> Self {
        PipelineConfig {
            rf_params: RfParams::default(),
            mf_params: MfParams::default(),
            mode,
            seed,
        }
    }

    pub fn with_trees(mut self, n: usize) -> Self {
        self.rf_params.n_trees = n;
        self.mf_params.n_trees = n;
        self
    }

    pub fn with_min_leaf(mut self, n: usize) -> Self {
        self.rf_params.min_samples_leaf = n;
        self.mf_params.min_samples_leaf = n;
        self
    }

    /// Random forest parameters for the model trained on `slice` (0-based).
    pub fn rf_params_for(&self, slice: usize) -> RfParams {
        RfParams {
            seed: derive_seed(derive_seed(self.seed, 1), slice as u64),
            ..self.rf_params.clone()
        }
    }

    pub fn mf_params_seeded(&self) -> MfParams {
        MfParams {
            seed: derive_seed(self.seed, 2),
            ..self.mf_params.clone()
        }
    }
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceWarning {
    /// 0-based slice index.
    pub slice: usize,
    pub message: String,
}

/// Where the random forest used at one step came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfTraining {
    /// 0-based slice whose pixels trained it.
    pub slice: usize,
    pub labels: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Combined mask per slice; `masks[0]` is the given label.
    pub masks: Vec<BinaryMask>,
    /// Mondrian forest mask per slice (after cleanup when enabled); `[0]` is the given label.
    pub mf_masks: Vec<BinaryMask>,
    /// Random forest mask per slice (after cleanup when enabled); `[0]` is the given label.
    pub rf_masks: Vec<BinaryMask>,
    pub warnings: Vec<SliceWarning>,
    /// Every random forest trained during the run, in order.
    pub rf_history: Vec<RfTraining>,
    /// `rf_used[k]` indexes `rf_history` for the model that labeled slice `k`; `None` for slice 0.
    pub rf_used: Vec<Option<usize>>,
}

/// A run in progress; advance it with [`Propagation::step`].
pub struct Propagation<'a> {
    stack: &'a CineStack,
    config: PipelineConfig,
    stack_max: u16,
    mf: MondrianForest,
    rf: RandomForest,
    result: SegmentationResult,
}

impl<'a> Propagation<'a> {
    /// Validate inputs and fit both forests on the first slice.
    pub fn start(stack: &'a CineStack, first_lv: &BinaryMask, config: PipelineConfig) -> Result<Self> {
        check_inputs(stack, first_lv)?;
        let feats = extract_features(&stack.slices()[0], stack.max_intensity())?;
        let labeled = attach_labels(&feats, first_lv)?;
        let rf_params = config.rf_params_for(0);
        let mf_params = config.mf_params_seeded();
        let (mf, rf) = par::join(|| mf_fit(&labeled, &mf_params), || rf_fit(&labeled, &rf_params));
        Self::with_models(stack, first_lv, config, mf?, rf?)
    }

    /// Start from forests already fit on the first slice.
    pub fn with_models(
        stack: &'a CineStack,
        first_lv: &BinaryMask,
        config: PipelineConfig,
        mf: MondrianForest,
        rf: RandomForest,
    ) -> Result<Self> {
        check_inputs(stack, first_lv)?;
        let result = SegmentationResult {
            masks: vec![first_lv.clone()],
            mf_masks: vec![first_lv.clone()],
            rf_masks: vec![first_lv.clone()],
            warnings: Vec::new(),
            rf_history: vec![RfTraining {
                slice: 0,
                labels: first_lv.clone(),
            }],
            rf_used: vec![None],
        };
        Ok(Propagation {
            stack,
            config,
            stack_max: stack.max_intensity(),
            mf,
            rf,
            result,
        })
    }

    pub fn mondrian(&self) -> &MondrianForest {
        &self.mf
    }

    pub fn random_forest(&self) -> &RandomForest {
        &self.rf
    }

    /// Index of the next slice to label, or `None` when done.
    pub fn next_slice(&self) -> Option<usize> {
        let k = self.result.masks.len();
        (k < self.stack.len()).then_some(k)
    }

    /// Label the next slice. Returns its index, or `None` if the stack is exhausted.
    pub fn step(&mut self) -> Result<Option<usize>> {
        let Some(next) = self.next_slice() else {
            return Ok(None);
        };
        let (w, h) = (self.stack.width(), self.stack.height());
        let feats = extract_features(&self.stack.slices()[next], self.stack_max)?;
        let (p_mf, p_rf) = par::join(
            || mf_predict_proba(&self.mf, &feats),
            || rf_predict_proba(&self.rf, &feats),
        );
        let raw_mf = decide_mask(&p_mf?, w, h)?;
        let raw_rf = decide_mask(&p_rf?, w, h)?;

        let prev = &self.result.masks[next - 1];
        let mut warnings = Vec::new();
        let (mf_mask, rf_mask) = if self.config.mode.post_processes() {
            let (a, b) = par::join(|| post_process(&raw_mf, prev), || post_process(&raw_rf, prev));
            let (a, b) = (a?, b?);
            for (name, c) in [("mondrian", &a), ("random", &b)] {
                if c.used_fallback {
                    warnings.push(format!(
                        "{name} forest output does not overlap the previous slice; reusing it"
                    ));
                }
            }
            (a.mask, b.mask)
        } else {
            for (name, m) in [("mondrian", &raw_mf), ("random", &raw_rf)] {
                if m.is_empty() {
                    warnings.push(format!("{name} forest labeled no foreground pixels"));
                }
            }
            (raw_mf, raw_rf)
        };
        let combined = mask_union(&mf_mask, &rf_mask)?;
        if combined.is_empty() {
            warnings.push("combined mask is empty".to_string());
        }
        for message in warnings {
            log::warn!("slice {}: {}", next + 1, message);
            self.result.warnings.push(SliceWarning { slice: next, message });
        }

        self.result.rf_used.push(Some(self.result.rf_history.len() - 1));
        if self.config.mode.retrains() && next + 1 < self.stack.len() {
            let labeled = attach_labels(&feats, &mf_mask)?;
            self.rf = rf_fit(&labeled, &self.config.rf_params_for(next))?;
            self.result.rf_history.push(RfTraining {
                slice: next,
                labels: mf_mask.clone(),
            });
        }

        self.result.masks.push(combined);
        self.result.mf_masks.push(mf_mask);
        self.result.rf_masks.push(rf_mask);
        Ok(Some(next))
    }

    pub fn run(mut self) -> Result<SegmentationResult> {
        while self.step()?.is_some() {}
        Ok(self.result)
    }

    pub fn finish(self) -> SegmentationResult {
        self.result
    }
}

fn check_inputs(stack: &CineStack, first_lv: &BinaryMask) -> Result<()> {
    if first_lv.width() != stack.width() || first_lv.height() != stack.height() {
        return Err(Error::invalid(format!(
            "first mask is {}x{}, stack is {}x{}",
            first_lv.width(),
            first_lv.height(),
            stack.width(),
            stack.height()
        )));
    }
    if first_lv.is_empty() {
        return Err(Error::invalid("first mask has no foreground pixels"));
    }
    Ok(())
}

pub fn segment_stack(
    stack: &CineStack,
    first_lv: &BinaryMask,
    config: &PipelineConfig,
) -> Result<SegmentationResult> {
    Propagation::start(stack, first_lv, config.clone())?.run()
}

/// Run all three modes with the same seed. Slice-1 models are fit once and shared.
pub fn run_experiments(
    stack: &CineStack,
    first_lv: &BinaryMask,
    base: &PipelineConfig,
) -> Result<Vec<(PipelineConfig, SegmentationResult)>> {
    let first = Propagation::start(stack, first_lv, base.clone())?;
    let (mf, rf) = (first.mf, first.rf);
    PipelineMode::ALL
        .iter()
        .map(|&mode| {
            let config = PipelineConfig { mode, ..base.clone() };
            let run = Propagation::with_models(stack, first_lv, config.clone(), mf.clone(), rf.clone())?.run()?;
            Ok((config, run))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageSlice;

    fn small_stack(n: usize) -> (CineStack, BinaryMask) {
        let w = 24;
        let slice = |shift: usize| {
            let px = (0..w * w)
                .map(|i| {
                    let (c, r) = (i % w, i / w);
                    if (6 + shift..16 + shift).contains(&c) && (7..17).contains(&r) {
                        200
                    } else {
                        40
                    }
                })
                .collect();
            ImageSlice::new(w, w, 8, px).unwrap()
        };
        let stack = CineStack::new((0..n).map(|k| slice(k % 2)).collect()).unwrap();
        let first = BinaryMask::from_fn(w, w, |c, r| (6..16).contains(&c) && (7..17).contains(&r));
        (stack, first)
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("post".parse::<PipelineMode>().unwrap(), PipelineMode::PostProcess);
        assert_eq!("full".parse::<PipelineMode>().unwrap(), PipelineMode::Full);
        assert!("fancy".parse::<PipelineMode>().is_err());
    }

    #[test]
    fn rejects_bad_first_mask() {
        let (stack, _) = small_stack(3);
        let cfg = PipelineConfig::new(PipelineMode::Full, 1).with_trees(3);
        assert!(segment_stack(&stack, &BinaryMask::empty(24, 24), &cfg).is_err());
        assert!(segment_stack(&stack, &BinaryMask::full(24, 23), &cfg).is_err());
    }

    #[test]
    fn full_mode_records_provenance() {
        let (stack, first) = small_stack(5);
        let cfg = PipelineConfig::new(PipelineMode::Full, 3).with_trees(5);
        let res = segment_stack(&stack, &first, &cfg).unwrap();
        assert_eq!(res.masks.len(), 5);
        assert_eq!(res.masks[0], first);
        // trained on slices 0..=3; the last slice never trains
        assert_eq!(res.rf_history.len(), 4);
        for k in 1..5 {
            let used = &res.rf_history[res.rf_used[k].unwrap()];
            assert_eq!(used.slice, k - 1);
            if k >= 2 {
                assert_eq!(used.labels, res.mf_masks[k - 1]);
            }
            assert_eq!(res.masks[k], mask_union(&res.mf_masks[k], &res.rf_masks[k]).unwrap());
        }
    }

    #[test]
    fn non_full_modes_never_retrain() {
        let (stack, first) = small_stack(4);
        for mode in [PipelineMode::Basic, PipelineMode::PostProcess] {
            let res = segment_stack(&stack, &first, &PipelineConfig::new(mode, 2).with_trees(4)).unwrap();
            assert_eq!(res.rf_history.len(), 1);
            assert!(res.rf_used[1..].iter().all(|u| *u == Some(0)));
        }
    }

    #[test]
    fn stepping_by_hand_matches_run() {
        let (stack, first) = small_stack(4);
        let cfg = PipelineConfig::new(PipelineMode::Full, 9).with_trees(4);
        let mut p = Propagation::start(&stack, &first, cfg.clone()).unwrap();
        assert_eq!(p.next_slice(), Some(1));
        while p.step().unwrap().is_some() {}
        assert_eq!(p.step().unwrap(), None);
        assert_eq!(p.finish(), segment_stack(&stack, &first, &cfg).unwrap());
    }

    #[test]
    fn experiments_cover_all_modes() {
        let (stack, first) = small_stack(3);
        let runs = run_experiments(&stack, &first, &PipelineConfig::new(PipelineMode::Basic, 5).with_trees(4)).unwrap();
        let modes: Vec<_> = runs.iter().map(|(c, _)| c.mode).collect();
        assert_eq!(modes, PipelineMode::ALL.to_vec());
        for (_, r) in &runs {
            assert_eq!(r.masks[0], first);
        }
    }
}
