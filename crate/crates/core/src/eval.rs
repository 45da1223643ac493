//! Benchmark-protocol metrics.
//!
//! Detection is scored by greedy per-episode matching with TP/FP/FN
//! accumulated globally (micro) and per class; the headline P/R/F1 are the
//! micro values, with a macro average over classes reported alongside.
//! Grounding is scored by transforming each prediction into the aligned
//! global frame and thresholding the 3D IoU at 0.25 and 0.5. Reasoning is
//! split into multiple-choice exact match and numeric mean relative accuracy.
//!
//! Reports serialize to JSON with an explicit `schema_version`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Box9DoF;
use crate::parser::{ChoiceAnswer, DetectedObject, GroundingAnswer, Payload};
use crate::rewards::{grounding_iou_reward, match_f1, mc_reward, mra_reward, ReasoningGt, SceneMeta};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction and ground-truth episode ids differ: {0}")]
    EpisodeMismatch(String),
}

/// Detection predictions or ground truths for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionEpisode {
    pub episode_id: String,
    pub objects: Vec<DetectedObject>,
}

/// Grounding prediction for one episode; `None` when the response failed to
/// parse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundingPredEpisode {
    pub episode_id: String,
    pub answer: Option<GroundingAnswer>,
}

/// Grounding ground truth for one episode, stored pre-aligned in the global
/// frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundingGtEpisode {
    pub episode_id: String,
    pub scene_ref: String,
    pub frame_index: u32,
    pub bbox_3d: Box9DoF,
}

/// Reasoning prediction for one episode; `None` when the response failed to
/// parse.
#[derive(Debug, Clone)]
pub struct ReasoningPredEpisode {
    pub episode_id: String,
    pub payload: Option<Payload>,
}

/// Reasoning ground truth for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningGtEpisode {
    pub episode_id: String,
    pub gt: ReasoningGt,
}

/// Precision/recall/F1 triple with the counts that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfCounts {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub episodes: usize,
    pub tau: f64,
    /// Headline metrics from globally accumulated counts.
    pub micro: PrfCounts,
    /// Unweighted mean of the per-class metrics, as an auxiliary view.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, PrfCounts>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundingReport {
    pub schema_version: u32,
    pub episodes: usize,
    #[serde(rename = "acc_at_0.25")]
    pub acc_at_25: f64,
    #[serde(rename = "acc_at_0.5")]
    pub acc_at_50: f64,
    pub mean_iou: f64,
    /// Episodes scored 0 because their scene was missing.
    pub flagged_missing_scene: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningReport {
    pub schema_version: u32,
    pub episodes: usize,
    pub overall_accuracy: f64,
    pub multiple_choice: TypeAccuracy,
    pub numeric: TypeAccuracy,
    /// Episodes scored 0 because the prediction type did not match the
    /// ground-truth label (or did not parse).
    pub flagged_type_mismatch: usize,
}

/// Task-tagged report envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum MetricReport {
    Detection(DetectionReport),
    Grounding(GroundingReport),
    Reasoning(ReasoningReport),
}

fn check_aligned_ids<'a>(
    preds: impl Iterator<Item = &'a str>,
    gts: impl Iterator<Item = &'a str>,
) -> Result<(), EvalError> {
    let pred_ids: BTreeSet<&str> = preds.collect();
    let gt_ids: BTreeSet<&str> = gts.collect();
    if pred_ids != gt_ids {
        let missing: Vec<&&str> = gt_ids.difference(&pred_ids).collect();
        let extra: Vec<&&str> = pred_ids.difference(&gt_ids).collect();
        return Err(EvalError::EpisodeMismatch(format!(
            "missing={missing:?} extra={extra:?}"
        )));
    }
    Ok(())
}

/// Class-aware detection metrics at one IoU threshold.
pub fn eval_detection(
    preds: &[DetectionEpisode],
    gts: &[DetectionEpisode],
    tau: f64,
) -> Result<MetricReport, EvalError> {
    check_aligned_ids(
        preds.iter().map(|e| e.episode_id.as_str()),
        gts.iter().map(|e| e.episode_id.as_str()),
    )?;
    let by_id: BTreeMap<&str, &DetectionEpisode> =
        preds.iter().map(|e| (e.episode_id.as_str(), e)).collect();

    let mut class_counts: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    for gt in gts {
        let pred = by_id[gt.episode_id.as_str()];
        let m = match_f1(&pred.objects, &gt.objects, tau);
        let mut matched_preds = vec![false; pred.objects.len()];
        let mut matched_gts = vec![false; gt.objects.len()];
        for (pi, gi, _) in &m.pairs {
            matched_preds[*pi] = true;
            matched_gts[*gi] = true;
            class_counts
                .entry(pred.objects[*pi].category.clone())
                .or_default()
                .0 += 1;
        }
        for (pi, obj) in pred.objects.iter().enumerate() {
            if !matched_preds[pi] {
                class_counts.entry(obj.category.clone()).or_default().1 += 1;
            }
        }
        for (gi, obj) in gt.objects.iter().enumerate() {
            if !matched_gts[gi] {
                class_counts.entry(obj.category.clone()).or_default().2 += 1;
            }
        }
    }

    let per_class: BTreeMap<String, PrfCounts> = class_counts
        .iter()
        .map(|(c, (tp, fp, fn_))| (c.clone(), PrfCounts::from_counts(*tp, *fp, *fn_)))
        .collect();
    let (tp, fp, fn_) = class_counts
        .values()
        .fold((0, 0, 0), |acc, (tp, fp, fn_)| {
            (acc.0 + tp, acc.1 + fp, acc.2 + fn_)
        });
    let n_classes = per_class.len().max(1) as f64;
    let macro_precision = per_class.values().map(|c| c.precision).sum::<f64>() / n_classes;
    let macro_recall = per_class.values().map(|c| c.recall).sum::<f64>() / n_classes;
    let macro_f1 = per_class.values().map(|c| c.f1).sum::<f64>() / n_classes;

    Ok(MetricReport::Detection(DetectionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        episodes: gts.len(),
        tau,
        micro: PrfCounts::from_counts(tp, fp, fn_),
        macro_precision,
        macro_recall,
        macro_f1,
        per_class,
    }))
}

/// Grounding accuracy at IoU 0.25 and 0.5 in the aligned global frame.
pub fn eval_grounding(
    preds: &[GroundingPredEpisode],
    gts: &[GroundingGtEpisode],
    scenes: &BTreeMap<String, SceneMeta>,
) -> Result<MetricReport, EvalError> {
    check_aligned_ids(
        preds.iter().map(|e| e.episode_id.as_str()),
        gts.iter().map(|e| e.episode_id.as_str()),
    )?;
    let by_id: BTreeMap<&str, &GroundingPredEpisode> =
        preds.iter().map(|e| (e.episode_id.as_str(), e)).collect();

    let mut hits_25 = 0usize;
    let mut hits_50 = 0usize;
    let mut iou_sum = 0.0;
    let mut flagged = 0usize;
    for gt in gts {
        let pred = by_id[gt.episode_id.as_str()];
        let iou = match (&pred.answer, scenes.get(&gt.scene_ref)) {
            (Some(answer), Some(scene)) => grounding_iou_reward(answer, scene, &gt.bbox_3d),
            (Some(_), None) => {
                log::warn!("episode {}: scene {} missing", gt.episode_id, gt.scene_ref);
                flagged += 1;
                0.0
            }
            (None, _) => 0.0,
        };
        iou_sum += iou;
        if iou > 0.25 {
            hits_25 += 1;
        }
        if iou > 0.5 {
            hits_50 += 1;
        }
    }
    let n = gts.len().max(1) as f64;
    Ok(MetricReport::Grounding(GroundingReport {
        schema_version: REPORT_SCHEMA_VERSION,
        episodes: gts.len(),
        acc_at_25: hits_25 as f64 / n,
        acc_at_50: hits_50 as f64 / n,
        mean_iou: iou_sum / n,
        flagged_missing_scene: flagged,
    }))
}

/// Reasoning accuracy split by question type.
pub fn eval_reasoning(
    preds: &[ReasoningPredEpisode],
    gts: &[ReasoningGtEpisode],
) -> Result<MetricReport, EvalError> {
    check_aligned_ids(
        preds.iter().map(|e| e.episode_id.as_str()),
        gts.iter().map(|e| e.episode_id.as_str()),
    )?;
    let by_id: BTreeMap<&str, &ReasoningPredEpisode> =
        preds.iter().map(|e| (e.episode_id.as_str(), e)).collect();

    let mut mc = (0usize, 0.0f64);
    let mut numeric = (0usize, 0.0f64);
    let mut flagged = 0usize;
    for gt in gts {
        let pred = by_id[gt.episode_id.as_str()];
        let (bucket, score) = match (&gt.gt, &pred.payload) {
            (ReasoningGt::MultipleChoice { choice }, Some(Payload::Choice(p))) => {
                (&mut mc, mc_reward(p, &ChoiceAnswer { choice: *choice }))
            }
            (ReasoningGt::Numeric { value }, Some(Payload::Numeric(p))) => {
                (&mut numeric, mra_reward(p.value, *value))
            }
            (ReasoningGt::MultipleChoice { .. }, _) => {
                flagged += 1;
                (&mut mc, 0.0)
            }
            (ReasoningGt::Numeric { .. }, _) => {
                flagged += 1;
                (&mut numeric, 0.0)
            }
        };
        bucket.0 += 1;
        bucket.1 += score;
    }
    let mean = |(count, sum): (usize, f64)| if count == 0 { 0.0 } else { sum / count as f64 };
    let overall = (mc.1 + numeric.1) / gts.len().max(1) as f64;
    Ok(MetricReport::Reasoning(ReasoningReport {
        schema_version: REPORT_SCHEMA_VERSION,
        episodes: gts.len(),
        overall_accuracy: overall,
        multiple_choice: TypeAccuracy {
            count: mc.0,
            accuracy: mean(mc),
        },
        numeric: TypeAccuracy {
            count: numeric.0,
            accuracy: mean(numeric),
        },
        flagged_type_mismatch: flagged,
    }))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::parser::NumericAnswer;
    use crate::rewards::RewardConfig;
    use crate::geometry::RigidTransform;

    fn obj(category: &str, center: [f64; 3]) -> DetectedObject {
        DetectedObject {
            category: category.to_string(),
            bbox_3d: Box9DoF::axis_aligned(center, [1.0; 3]).unwrap(),
        }
    }

    fn det_episode(id: &str, objects: Vec<DetectedObject>) -> DetectionEpisode {
        DetectionEpisode {
            episode_id: id.to_string(),
            objects,
        }
    }

    fn unwrap_detection(report: MetricReport) -> DetectionReport {
        match report {
            MetricReport::Detection(d) => d,
            other => panic!("expected detection report, got {other:?}"),
        }
    }

    #[test]
    fn perfect_detection_scores_one_everywhere() {
        let gts = vec![
            det_episode("a", vec![obj("chair", [0.0; 3]), obj("table", [3.0, 0.0, 0.0])]),
            det_episode("b", vec![obj("chair", [5.0, 0.0, 0.0])]),
        ];
        let report = unwrap_detection(eval_detection(&gts, &gts, 0.25).unwrap());
        assert_eq!(report.micro.precision, 1.0);
        assert_eq!(report.micro.recall, 1.0);
        assert_eq!(report.micro.f1, 1.0);
        for class in report.per_class.values() {
            assert_eq!(class.f1, 1.0);
        }
    }

    #[test]
    fn empty_predictions_use_zero_conventions() {
        let gts = vec![det_episode("a", vec![obj("chair", [0.0; 3])])];
        let preds = vec![det_episode("a", vec![])];
        let report = unwrap_detection(eval_detection(&preds, &gts, 0.25).unwrap());
        assert_eq!(report.micro.precision, 0.0);
        assert_eq!(report.micro.recall, 0.0);
        assert_eq!(report.micro.f1, 0.0);
    }

    #[test]
    fn mixed_corpus_equals_hand_accumulated_counts() {
        // Oracle: accumulate per-episode MatchResults by hand.
        let gts = vec![
            det_episode("a", vec![obj("chair", [0.0; 3]), obj("chair", [4.0, 0.0, 0.0])]),
            det_episode("b", vec![obj("table", [0.0; 3])]),
        ];
        let preds = vec![
            det_episode("a", vec![obj("chair", [0.1, 0.0, 0.0]), obj("chair", [9.0, 0.0, 0.0])]),
            det_episode("b", vec![obj("table", [0.05, 0.0, 0.0]), obj("bed", [0.0; 3])]),
        ];
        let cfg = RewardConfig::default();
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (p, g) in preds.iter().zip(&gts) {
            let m = match_f1(&p.objects, &g.objects, cfg.tau_f1);
            tp += m.tp as u64;
            fp += m.fp as u64;
            fn_ += m.fn_ as u64;
        }
        let report = unwrap_detection(eval_detection(&preds, &gts, cfg.tau_f1).unwrap());
        assert_eq!((report.micro.tp, report.micro.fp, report.micro.fn_), (tp, fp, fn_));
        // Per-class counts must sum back to the micro counts.
        let sums = report
            .per_class
            .values()
            .fold((0, 0, 0), |acc, c| (acc.0 + c.tp, acc.1 + c.fp, acc.2 + c.fn_));
        assert_eq!(sums, (tp, fp, fn_));
    }

    #[test]
    fn micro_differs_from_per_episode_mean_protocol() {
        // Episode a: 1 TP out of 1 pred/1 gt. Episode b: 1 TP, 9 FP.
        // Per-episode F1 mean = (1.0 + 2/11)/2; micro = 2TP/(2TP+FP).
        let gts = vec![
            det_episode("a", vec![obj("chair", [0.0; 3])]),
            det_episode("b", vec![obj("chair", [0.0; 3])]),
        ];
        let mut spam = vec![obj("chair", [0.0; 3])];
        for k in 0..9 {
            spam.push(obj("chair", [10.0 + 3.0 * k as f64, 0.0, 0.0]));
        }
        let preds = vec![det_episode("a", vec![obj("chair", [0.0; 3])]), det_episode("b", spam)];

        let report = unwrap_detection(eval_detection(&preds, &gts, 0.25).unwrap());
        let micro_expected = 2.0 * 2.0 / (2.0 * 2.0 + 9.0);
        let per_episode_mean = (1.0 + 2.0 / 11.0) / 2.0;
        assert_abs_diff_eq!(report.micro.f1, micro_expected, epsilon = 1e-12);
        assert!((report.micro.f1 - per_episode_mean).abs() > 0.05);
    }

    #[test]
    fn episode_order_does_not_matter() {
        let gts = vec![
            det_episode("a", vec![obj("chair", [0.0; 3])]),
            det_episode("b", vec![obj("table", [0.0; 3])]),
        ];
        let preds = vec![
            det_episode("a", vec![obj("chair", [0.2, 0.0, 0.0])]),
            det_episode("b", vec![]),
        ];
        let forward = unwrap_detection(eval_detection(&preds, &gts, 0.25).unwrap());
        let mut preds_rev = preds.clone();
        preds_rev.reverse();
        let mut gts_rev = gts.clone();
        gts_rev.reverse();
        let backward = unwrap_detection(eval_detection(&preds_rev, &gts_rev, 0.25).unwrap());
        assert_eq!(forward.micro, backward.micro);
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let gts = vec![det_episode("a", vec![])];
        let preds = vec![det_episode("zzz", vec![])];
        assert!(matches!(
            eval_detection(&preds, &gts, 0.25),
            Err(EvalError::EpisodeMismatch(_))
        ));
    }

    fn grounding_corpus(ious: &[(u32, f64)]) -> (
        Vec<GroundingPredEpisode>,
        Vec<GroundingGtEpisode>,
        BTreeMap<String, SceneMeta>,
    ) {
        // Construct per-episode predictions whose global IoU is controlled by
        // sliding an offset cube: offset o along x gives IoU (1-o)/(1+o).
        let scenes = BTreeMap::from([(
            "s0".to_string(),
            SceneMeta {
                extrinsics: vec![RigidTransform::identity(); 8],
                align: RigidTransform::identity(),
            },
        )]);
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for (k, (frame, iou)) in ious.iter().enumerate() {
            let offset = (1.0 - iou) / (1.0 + iou);
            preds.push(GroundingPredEpisode {
                episode_id: format!("e{k}"),
                answer: Some(GroundingAnswer {
                    frame_index: *frame,
                    bbox_3d: Box9DoF::axis_aligned([offset, 0.0, 0.0], [1.0; 3]).unwrap(),
                }),
            });
            gts.push(GroundingGtEpisode {
                episode_id: format!("e{k}"),
                scene_ref: "s0".to_string(),
                frame_index: *frame,
                bbox_3d: Box9DoF::axis_aligned([0.0; 3], [1.0; 3]).unwrap(),
            });
        }
        (preds, gts, scenes)
    }

    #[test]
    fn grounding_threshold_counting() {
        let (preds, gts, scenes) = grounding_corpus(&[(0, 0.3), (1, 0.6), (2, 0.1)]);
        let report = match eval_grounding(&preds, &gts, &scenes).unwrap() {
            MetricReport::Grounding(g) => g,
            other => panic!("unexpected {other:?}"),
        };
        assert_abs_diff_eq!(report.acc_at_25, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.acc_at_50, 1.0 / 3.0, epsilon = 1e-12);
        assert!(report.acc_at_50 <= report.acc_at_25);
        assert_abs_diff_eq!(report.mean_iou, (0.3 + 0.6 + 0.1) / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn grounding_missing_scene_is_flagged() {
        let (preds, mut gts, scenes) = grounding_corpus(&[(0, 1.0), (1, 1.0)]);
        gts[1].scene_ref = "nope".to_string();
        let report = match eval_grounding(&preds, &gts, &scenes).unwrap() {
            MetricReport::Grounding(g) => g,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(report.flagged_missing_scene, 1);
        assert_abs_diff_eq!(report.acc_at_25, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reasoning_mix_of_types() {
        let gts = vec![
            ReasoningGtEpisode {
                episode_id: "m0".into(),
                gt: ReasoningGt::MultipleChoice { choice: 'C' },
            },
            ReasoningGtEpisode {
                episode_id: "n0".into(),
                gt: ReasoningGt::Numeric { value: 10.0 },
            },
            ReasoningGtEpisode {
                episode_id: "n1".into(),
                gt: ReasoningGt::Numeric { value: 10.0 },
            },
        ];
        let preds = vec![
            ReasoningPredEpisode {
                episode_id: "m0".into(),
                payload: Some(Payload::Choice(ChoiceAnswer { choice: 'C' })),
            },
            ReasoningPredEpisode {
                episode_id: "n0".into(),
                payload: Some(Payload::Numeric(NumericAnswer { value: 12.0 })),
            },
            ReasoningPredEpisode {
                episode_id: "n1".into(),
                payload: Some(Payload::Numeric(NumericAnswer { value: 10.0 })),
            },
        ];
        let report = match eval_reasoning(&preds, &gts).unwrap() {
            MetricReport::Reasoning(r) => r,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(report.multiple_choice.count, 1);
        assert_eq!(report.multiple_choice.accuracy, 1.0);
        assert_abs_diff_eq!(report.numeric.accuracy, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(report.overall_accuracy, (1.0 + 0.6 + 1.0) / 3.0, epsilon = 1e-12);
        assert_eq!(report.flagged_type_mismatch, 0);
    }

    #[test]
    fn reasoning_unparseable_and_mismatch_score_zero() {
        let gts = vec![
            ReasoningGtEpisode {
                episode_id: "a".into(),
                gt: ReasoningGt::Numeric { value: 3.0 },
            },
            ReasoningGtEpisode {
                episode_id: "b".into(),
                gt: ReasoningGt::MultipleChoice { choice: 'A' },
            },
        ];
        let preds = vec![
            ReasoningPredEpisode {
                episode_id: "a".into(),
                payload: Some(Payload::Choice(ChoiceAnswer { choice: 'A' })),
            },
            ReasoningPredEpisode {
                episode_id: "b".into(),
                payload: None,
            },
        ];
        let report = match eval_reasoning(&preds, &gts).unwrap() {
            MetricReport::Reasoning(r) => r,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(report.overall_accuracy, 0.0);
        assert_eq!(report.flagged_type_mismatch, 2);
    }

    #[test]
    fn micro_f1_is_harmonic_mean_of_micro_p_and_r() {
        let prf = PrfCounts::from_counts(7, 3, 5);
        let harmonic = 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall);
        assert_abs_diff_eq!(prf.f1, harmonic, epsilon = 1e-12);
    }
}
