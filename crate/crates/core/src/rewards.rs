//! Verifiable task rewards.
//!
//! Detection responses earn an average max-IoU reward plus an F1 reward from
//! greedy category-aware matching; grounding responses earn a linear frame
//! decay plus the 3D IoU of the prediction transformed into the aligned
//! global frame; reasoning responses earn exact-match (multiple choice) or
//! mean relative accuracy (numeric). Every task total also includes the
//! binary format reward, summed unweighted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou3d, transform_box, Box9DoF, RigidTransform};
use crate::parser::{
    parse_response, ChoiceAnswer, DetectedObject, GroundingAnswer, Payload, TaskKind,
};

/// Matching and decay thresholds, with the default values used throughout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardConfig {
    /// IoU a pair must exceed to count as a match.
    pub tau_f1: f64,
    /// Frame-distance tolerance of the temporal decay.
    pub tau_frame: u32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tau_f1: 0.25,
            tau_frame: 5,
        }
    }
}

/// Format reward plus named task components; `total` is always their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub components: BTreeMap<String, f64>,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(format: f64, components: BTreeMap<String, f64>) -> Self {
        let total = format + components.values().sum::<f64>();
        Self {
            format,
            components,
            total,
        }
    }

    fn zeroed(component_names: &[&str]) -> Self {
        Self::new(
            0.0,
            component_names
                .iter()
                .map(|n| (n.to_string(), 0.0))
                .collect(),
        )
    }
}

/// Outcome of greedy prediction/ground-truth matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(pred index, gt index, iou)` for each matched pair.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Per-frame camera-to-global extrinsics plus the scene alignment transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub extrinsics: Vec<RigidTransform>,
    pub align: RigidTransform,
}

impl SceneMeta {
    pub fn frame_count(&self) -> u32 {
        self.extrinsics.len() as u32
    }

    /// Combined local-to-aligned-global transform for one frame.
    pub fn frame_to_global(&self, frame: u32) -> Option<RigidTransform> {
        self.extrinsics
            .get(frame as usize)
            .map(|ext| self.align.compose(ext))
    }
}

/// Grounding ground truth: target frame plus the box in the aligned global
/// frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundingGt {
    pub frame_index: u32,
    pub bbox_3d: Box9DoF,
}

/// Reasoning ground truth, labeled by question type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReasoningGt {
    MultipleChoice { choice: char },
    Numeric { value: f64 },
}

impl ReasoningGt {
    pub fn task_kind(&self) -> TaskKind {
        match self {
            ReasoningGt::MultipleChoice { .. } => TaskKind::MultipleChoice,
            ReasoningGt::Numeric { .. } => TaskKind::Numeric,
        }
    }
}

/// Category-aware IoU matrix; entries for differing categories are 0.
fn iou_matrix(preds: &[DetectedObject], gts: &[DetectedObject]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    if p.category == g.category {
                        iou3d(&p.bbox_3d, &g.bbox_3d)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn avg_iou_from_matrix(matrix: &[Vec<f64>]) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    let sum: f64 = matrix
        .iter()
        .map(|row| row.iter().copied().fold(0.0f64, f64::max))
        .sum();
    sum / matrix.len() as f64
}

fn match_from_matrix(
    matrix: &[Vec<f64>],
    n_preds: usize,
    n_gts: usize,
    tau: f64,
) -> MatchResult {
    // Candidates sorted by IoU descending; ties break toward the lower pred
    // index, then the lower gt index.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, row) in matrix.iter().enumerate() {
        for (gi, iou) in row.iter().enumerate() {
            if *iou > tau {
                candidates.push((*iou, pi, gi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut pred_used = vec![false; n_preds];
    let mut gt_used = vec![false; n_gts];
    let mut pairs = Vec::new();
    for (iou, pi, gi) in candidates {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            pairs.push((pi, gi, iou));
        }
    }
    let tp = pairs.len();
    MatchResult {
        tp,
        fp: n_preds - tp,
        fn_: n_gts - tp,
        pairs,
    }
}

/// Mean over predictions of the maximum IoU against same-category ground
/// truths; 0 when there are no predictions.
pub fn avg_iou_reward(preds: &[DetectedObject], gts: &[DetectedObject]) -> f64 {
    avg_iou_from_matrix(&iou_matrix(preds, gts))
}

/// Greedy one-to-one matching of same-category pairs with IoU above `tau`.
pub fn match_f1(preds: &[DetectedObject], gts: &[DetectedObject], tau: f64) -> MatchResult {
    match_from_matrix(&iou_matrix(preds, gts), preds.len(), gts.len(), tau)
}

/// `2 TP / (2 TP + FP + FN)`; an entirely empty instance counts as perfect
/// vacuous agreement.
pub fn f1_reward(m: &MatchResult) -> f64 {
    if m.tp + m.fp + m.fn_ == 0 {
        return 1.0;
    }
    2.0 * m.tp as f64 / (2.0 * m.tp as f64 + m.fp as f64 + m.fn_ as f64)
}

/// Full detection reward for a raw response: format + avg IoU + F1.
pub fn detection_reward(
    response: &str,
    gts: &[DetectedObject],
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let parsed = match parse_response(response, TaskKind::Detection) {
        Ok(resp) => resp,
        Err(_) => return RewardBreakdown::zeroed(&["f1", "iou_avg"]),
    };
    let preds = match parsed.payload {
        Payload::Detection(d) => d.objects,
        _ => unreachable!("detection parse yields detection payload"),
    };
    let matrix = iou_matrix(&preds, gts);
    let iou_avg = avg_iou_from_matrix(&matrix);
    let f1 = f1_reward(&match_from_matrix(&matrix, preds.len(), gts.len(), cfg.tau_f1));
    RewardBreakdown::new(
        1.0,
        BTreeMap::from([("iou_avg".to_string(), iou_avg), ("f1".to_string(), f1)]),
    )
}

/// Linear decay in frame distance: `max(0, 1 - |Δf| / tau_frame)`.
pub fn frame_reward(f_pred: u32, f_gt: u32, tau_frame: u32) -> f64 {
    debug_assert!(tau_frame >= 1);
    let delta = f_pred.abs_diff(f_gt) as f64;
    (1.0 - delta / tau_frame as f64).max(0.0)
}

/// IoU of the predicted local box after transforming it through the predicted
/// frame's extrinsics and the scene alignment. A frame index outside the
/// scene yields 0.
pub fn grounding_iou_reward(
    answer: &GroundingAnswer,
    scene: &SceneMeta,
    gt_box: &Box9DoF,
) -> f64 {
    match scene.frame_to_global(answer.frame_index) {
        Some(to_global) => iou3d(&transform_box(&answer.bbox_3d, &to_global), gt_box),
        None => 0.0,
    }
}

/// Full grounding reward for a raw response: format + frame decay + global
/// IoU.
pub fn grounding_reward(
    response: &str,
    scene: &SceneMeta,
    gt: &GroundingGt,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let parsed = match parse_response(response, TaskKind::Grounding) {
        Ok(resp) => resp,
        Err(_) => return RewardBreakdown::zeroed(&["frame", "iou_grd"]),
    };
    let answer = match parsed.payload {
        Payload::Grounding(g) => g,
        _ => unreachable!("grounding parse yields grounding payload"),
    };
    let frame = frame_reward(answer.frame_index, gt.frame_index, cfg.tau_frame);
    let iou_grd = grounding_iou_reward(&answer, scene, &gt.bbox_3d);
    RewardBreakdown::new(
        1.0,
        BTreeMap::from([("frame".to_string(), frame), ("iou_grd".to_string(), iou_grd)]),
    )
}

/// Exact-match indicator over choice letters.
pub fn mc_reward(pred: &ChoiceAnswer, gt: &ChoiceAnswer) -> f64 {
    if pred.choice == gt.choice {
        1.0
    } else {
        0.0
    }
}

/// Mean relative accuracy over the threshold ladder {0.50, 0.55, …, 0.95}.
///
/// A ground truth of exactly 0 cannot be scored relatively, so it degrades to
/// exact match.
pub fn mra_reward(pred: f64, gt: f64) -> f64 {
    if gt == 0.0 {
        return if pred == 0.0 { 1.0 } else { 0.0 };
    }
    let rel_err = (pred - gt).abs() / gt.abs();
    let passed = (0..10)
        .filter(|k| {
            let tau = 0.50 + 0.05 * *k as f64;
            rel_err < 1.0 - tau
        })
        .count();
    passed as f64 / 10.0
}

/// Full reasoning reward for a raw response: format + accuracy, where the
/// verifier is dispatched on the ground-truth question type.
pub fn reasoning_reward(response: &str, gt: &ReasoningGt) -> RewardBreakdown {
    let parsed = match parse_response(response, gt.task_kind()) {
        Ok(resp) => resp,
        Err(_) => return RewardBreakdown::zeroed(&["acc"]),
    };
    let acc = match (&parsed.payload, gt) {
        (Payload::Choice(pred), ReasoningGt::MultipleChoice { choice }) => {
            mc_reward(pred, &ChoiceAnswer { choice: *choice })
        }
        (Payload::Numeric(pred), ReasoningGt::Numeric { value }) => mra_reward(pred.value, *value),
        _ => unreachable!("parse task kind follows the gt label"),
    };
    RewardBreakdown::new(1.0, BTreeMap::from([("acc".to_string(), acc)]))
}
