//! JSON bodies of the `/v1` API.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use deal_core::data::Dataset;
use deal_core::engine::{LabelRejection, QueryItem, RoundRecord, TrainingProgress};
use deal_core::model::Prediction;
use deal_core::FieldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    AwaitingLabels,
    Training,
    Finished,
    /// Training raised an error; the session accepts no further labels.
    Failed,
}

/// Sample content. Images are row-major bytes with channels interleaved
/// (`0..=255`, base64); everything else is the raw feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturePayload {
    Image { width: usize, height: usize, channels: usize, data: String },
    Vector { values: Vec<f64> },
}

impl FeaturePayload {
    pub fn of(ds: &Dataset, index: usize) -> Self {
        let row = ds.row(index);
        match ds.image_shape {
            Some(shape) => {
                let plane = shape.height * shape.width;
                let mut bytes = Vec::with_capacity(shape.len());
                for pixel in 0..plane {
                    for c in 0..shape.channels {
                        bytes.push((row[c * plane + pixel] * 255.0).round().clamp(0.0, 255.0) as u8);
                    }
                }
                FeaturePayload::Image {
                    width: shape.width,
                    height: shape.height,
                    channels: shape.channels,
                    data: base64::engine::general_purpose::STANDARD.encode(bytes),
                }
            }
            None => FeaturePayload::Vector { values: row.to_vec() },
        }
    }
}

/// A queried sample as shown to the labeler. Opinion fields are absent for
/// the random initial batch, and `belief`/`uncertainty` are absent for
/// softmax models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItemView {
    pub pool_index: usize,
    pub features: FeaturePayload,
    pub expected_probs: Option<Vec<f64>>,
    pub belief: Option<Vec<f64>>,
    pub uncertainty: Option<f64>,
    pub score: Option<f64>,
    pub labeled: bool,
    pub label: Option<usize>,
}

impl QueryItemView {
    pub fn of(ds: &Dataset, item: &QueryItem) -> Self {
        let (expected_probs, belief, uncertainty) = match &item.prediction {
            Some(Prediction::Evidential(o)) => {
                (Some(o.expected_probs.clone()), Some(o.belief.clone()), Some(o.uncertainty))
            }
            Some(Prediction::Softmax { probs }) => (Some(probs.clone()), None, None),
            None => (None, None, None),
        };
        Self {
            pool_index: item.pool_index,
            features: FeaturePayload::of(ds, item.pool_index),
            expected_probs,
            belief,
            uncertainty,
            score: item.score,
            labeled: item.label.is_some(),
            label: item.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueriesResponse {
    pub session_id: String,
    pub round: usize,
    pub num_classes: usize,
    pub remaining: usize,
    pub items: Vec<QueryItemView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedResponse {
    pub session_id: String,
    pub status: StatusResponse,
    pub queries: QueriesResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPair {
    pub pool_index: usize,
    pub class: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelsRequest {
    pub labels: Vec<LabelPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLabel {
    pub pool_index: usize,
    pub class: usize,
    /// HTTP status this item alone would have produced (409 or 422).
    pub status: u16,
    pub error: LabelRejection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub accepted: Vec<LabelPair>,
    pub rejected: Vec<RejectedLabel>,
    pub remaining: usize,
    pub phase: SessionPhase,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub session_id: String,
    pub phase: SessionPhase,
    pub round: usize,
    pub num_rounds: usize,
    pub unlabeled: usize,
    pub labeled: usize,
    pub remaining: usize,
    pub curve: Vec<RoundRecord>,
    pub progress: Option<TrainingProgress>,
    pub error: Option<String>,
}

/// One line of the append-only audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub round: usize,
    pub pool_index: usize,
    pub class: usize,
    pub accepted: bool,
    pub rejection: Option<LabelRejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<SessionPhase>,
}
