//! JSONL interchange records.
//!
//! Corpora are exchanged as one JSON object per line, UTF-8. Episode records
//! carry either a raw `response` string (prediction files) or a typed `gt`
//! payload (ground-truth files); grounding episodes reference their scene by
//! `scene_ref`. Unknown fields are ignored with a warning. Output files are
//! written to a temporary sibling and renamed into place, so partially
//! written files are never observed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{
    DetectionEpisode, GroundingGtEpisode, GroundingPredEpisode, ReasoningGtEpisode,
    ReasoningPredEpisode,
};
use crate::geometry::RigidTransform;
use crate::parser::{parse_response, DetectionAnswer, Payload, TaskKind};
use crate::rewards::{GroundingGt, ReasoningGt, SceneMeta};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// The three task families of the interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Detection,
    Grounding,
    Reasoning,
}

impl std::str::FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detection" => Ok(TaskFamily::Detection),
            "grounding" => Ok(TaskFamily::Grounding),
            "reasoning" => Ok(TaskFamily::Reasoning),
            other => Err(format!(
                "unknown task {other:?}, expected detection|grounding|reasoning"
            )),
        }
    }
}

impl std::fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskFamily::Detection => "detection",
            TaskFamily::Grounding => "grounding",
            TaskFamily::Reasoning => "reasoning",
        };
        f.write_str(s)
    }
}

/// One line of an episode corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub task: TaskFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Raw model response with `<think>`/`<answer>` tags (prediction files).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Typed ground-truth payload (ground-truth files).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_ref: Option<String>,
    #[serde(flatten, skip_serializing)]
    pub unknown: BTreeMap<String, serde_json::Value>,
}

/// One line of a scene corpus: per-frame camera-to-global extrinsics plus the
/// scene alignment matrix, each as 16 row-major floats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub frame_count: usize,
    pub extrinsics: Vec<RigidTransform>,
    pub align: RigidTransform,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.frame_count != self.extrinsics.len() {
            return Err(RecordError::Invalid(format!(
                "scene {}: frame_count {} but {} extrinsics",
                self.scene_id,
                self.frame_count,
                self.extrinsics.len()
            )));
        }
        Ok(())
    }

    pub fn into_meta(self) -> SceneMeta {
        SceneMeta {
            extrinsics: self.extrinsics,
            align: self.align,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RecordError {
    RecordError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read a JSONL file into typed records.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Serialize records to JSONL, writing through a temporary file in the same
/// directory and renaming into place.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RecordError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)
            .map_err(|e| RecordError::Invalid(format!("serialize: {e}")))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Write bytes through a temp-file-and-rename in the target directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RecordError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path)
        .map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Read an episode corpus, warning about unknown fields and checking the
/// expected task family.
pub fn read_episode_records(
    path: &Path,
    expected: TaskFamily,
) -> Result<Vec<EpisodeRecord>, RecordError> {
    let records: Vec<EpisodeRecord> = read_jsonl(path)?;
    for (idx, record) in records.iter().enumerate() {
        for key in record.unknown.keys() {
            log::warn!(
                "{}:{}: ignoring unknown field {key:?}",
                path.display(),
                idx + 1
            );
        }
        if record.task != expected {
            return Err(RecordError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected task {expected}, found {}", record.task),
            });
        }
    }
    Ok(records)
}

/// Read a scene corpus into a map keyed by scene id.
pub fn read_scenes(path: &Path) -> Result<BTreeMap<String, SceneMeta>, RecordError> {
    let records: Vec<SceneRecord> = read_jsonl(path)?;
    let mut map = BTreeMap::new();
    for record in records {
        record.validate()?;
        if map.contains_key(&record.scene_id) {
            return Err(RecordError::Invalid(format!(
                "duplicate scene id {}",
                record.scene_id
            )));
        }
        map.insert(record.scene_id.clone(), record.into_meta());
    }
    Ok(map)
}

fn gt_value(record: &EpisodeRecord) -> Result<&serde_json::Value, RecordError> {
    record.gt.as_ref().ok_or_else(|| {
        RecordError::Invalid(format!("episode {}: missing gt payload", record.episode_id))
    })
}

fn decode_gt<T: DeserializeOwned>(record: &EpisodeRecord) -> Result<T, RecordError> {
    serde_json::from_value(gt_value(record)?.clone()).map_err(|e| {
        RecordError::Invalid(format!("episode {}: bad gt payload: {e}", record.episode_id))
    })
}

/// Typed detection ground truths from gt records.
pub fn detection_gts(records: &[EpisodeRecord]) -> Result<Vec<DetectionEpisode>, RecordError> {
    records
        .iter()
        .map(|r| {
            let answer: DetectionAnswer = decode_gt(r)?;
            Ok(DetectionEpisode {
                episode_id: r.episode_id.clone(),
                objects: answer.objects,
            })
        })
        .collect()
}

/// Detection predictions parsed from raw responses; an unparseable response
/// counts as an empty prediction set.
pub fn detection_preds(records: &[EpisodeRecord]) -> Result<Vec<DetectionEpisode>, RecordError> {
    records
        .iter()
        .map(|r| {
            let response = response_text(r)?;
            let objects = match parse_response(response, TaskKind::Detection) {
                Ok(resp) => match resp.payload {
                    Payload::Detection(d) => d.objects,
                    _ => Vec::new(),
                },
                Err(_) => Vec::new(),
            };
            Ok(DetectionEpisode {
                episode_id: r.episode_id.clone(),
                objects,
            })
        })
        .collect()
}

/// Typed grounding ground truths (global-frame boxes) from gt records.
pub fn grounding_gts(records: &[EpisodeRecord]) -> Result<Vec<GroundingGtEpisode>, RecordError> {
    records
        .iter()
        .map(|r| {
            let gt: GroundingGt = decode_gt(r)?;
            let scene_ref = r.scene_ref.clone().ok_or_else(|| {
                RecordError::Invalid(format!("episode {}: missing scene_ref", r.episode_id))
            })?;
            Ok(GroundingGtEpisode {
                episode_id: r.episode_id.clone(),
                scene_ref,
                frame_index: gt.frame_index,
                bbox_3d: gt.bbox_3d,
            })
        })
        .collect()
}

/// Grounding predictions parsed from raw responses.
pub fn grounding_preds(
    records: &[EpisodeRecord],
) -> Result<Vec<GroundingPredEpisode>, RecordError> {
    records
        .iter()
        .map(|r| {
            let response = response_text(r)?;
            let answer = match parse_response(response, TaskKind::Grounding) {
                Ok(resp) => match resp.payload {
                    Payload::Grounding(g) => Some(g),
                    _ => None,
                },
                Err(_) => None,
            };
            Ok(GroundingPredEpisode {
                episode_id: r.episode_id.clone(),
                answer,
            })
        })
        .collect()
}

/// Typed reasoning ground truths from gt records.
pub fn reasoning_gts(records: &[EpisodeRecord]) -> Result<Vec<ReasoningGtEpisode>, RecordError> {
    records
        .iter()
        .map(|r| {
            let gt: ReasoningGt = decode_gt(r)?;
            Ok(ReasoningGtEpisode {
                episode_id: r.episode_id.clone(),
                gt,
            })
        })
        .collect()
}

/// Reasoning predictions parsed from raw responses under the ground truth's
/// question type.
pub fn reasoning_preds(
    records: &[EpisodeRecord],
    gts: &[ReasoningGtEpisode],
) -> Result<Vec<ReasoningPredEpisode>, RecordError> {
    let kinds: BTreeMap<&str, TaskKind> = gts
        .iter()
        .map(|g| (g.episode_id.as_str(), g.gt.task_kind()))
        .collect();
    records
        .iter()
        .map(|r| {
            let response = response_text(r)?;
            let payload = kinds.get(r.episode_id.as_str()).and_then(|kind| {
                parse_response(response, *kind).ok().map(|resp| resp.payload)
            });
            Ok(ReasoningPredEpisode {
                episode_id: r.episode_id.clone(),
                payload,
            })
        })
        .collect()
}

fn response_text(record: &EpisodeRecord) -> Result<&str, RecordError> {
    record.response.as_deref().ok_or_else(|| {
        RecordError::Invalid(format!(
            "episode {}: missing response text",
            record.episode_id
        ))
    })
}

/// Convenience constructors for the gt payloads the generator emits.
pub fn grounding_gt_value(gt: &GroundingGt) -> serde_json::Value {
    serde_json::to_value(gt).expect("grounding gt serializes")
}

pub fn detection_gt_value(answer: &DetectionAnswer) -> serde_json::Value {
    serde_json::to_value(answer).expect("detection gt serializes")
}

pub fn reasoning_gt_value(gt: &ReasoningGt) -> serde_json::Value {
    serde_json::to_value(gt).expect("reasoning gt serializes")
}
