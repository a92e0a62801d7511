//! Training, anomaly scoring, threshold search and evaluation metrics.

pub mod baseline;
mod metrics;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::{HeteroGraph, NodeType};
use crate::model::{forward, loss_terms, GraphIndex, Mode, ModelError, ModelParams, ModelShape, NodeFilter};
use crate::numerics::{AdamW, Backend, Eval, NumericsError, OptimState, Tape};

pub use metrics::{
    best_threshold, classify, confusion_and_rates, pr_curve_auc, roc_curve_auc, Confusion, PrCurve, RocCurve,
    ThresholdSearch, Verdict,
};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training graph has no transactions")]
    EmptyGraph,
    #[error("{node_type:?} features have width {got}, model expects {expected}")]
    DimMismatch {
        node_type: NodeType,
        expected: usize,
        got: usize,
    },
    #[error("labels must contain both classes")]
    DegenerateLabels,
    #[error("labels contain no positives")]
    NoPositives,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score is not a number: {0}")]
    NonFiniteScore(f64),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl From<ModelError> for DetectorError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::DimMismatch {
                node_type,
                expected,
                got,
            } => DetectorError::DimMismatch {
                node_type,
                expected,
                got,
            },
            other => DetectorError::Model(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub heads: usize,
    pub encoder_depth: usize,
    pub decoder_width: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub kl_beta: f64,
    /// Epochs without a better genuine validation loss before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 16,
            encoder_depth: 2,
            decoder_width: 64,
            dropout: 0.4,
            weight_decay: 0.01,
            learning_rate: 1e-3,
            epochs: 200,
            seed: 0,
            kl_beta: 0.0,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::InvalidConfig(m));
        if self.heads == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            ));
        }
        if self.encoder_depth == 0 || self.decoder_width == 0 {
            return bad("encoder_depth and decoder_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be nonnegative", self.weight_decay));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return bad(format!("kl_beta {} must be nonnegative", self.kl_beta));
        }
        Ok(())
    }

    pub fn model_shape(&self, feature_dims: [usize; 3]) -> ModelShape {
        ModelShape {
            dim: self.dim,
            heads: self.heads,
            encoder_depth: self.encoder_depth,
            decoder_width: self.decoder_width,
            feature_dims,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean transaction score of genuine validation transactions.
    pub val_genuine: Option<f64>,
    /// Mean transaction score of fraudulent validation transactions.
    pub val_fraud: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub early_stopped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Validation graph with one label per transaction node.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub graph: &'a HeteroGraph,
    pub labels: &'a [bool],
}

pub fn train(
    graph: &HeteroGraph,
    validation: Option<Validation>,
    config: &TrainConfig,
) -> Result<TrainOutcome, DetectorError> {
    train_with(graph, validation, config, |_| {})
}

/// Full-batch AdamW training on `graph`. With a validation graph, early
/// stopping watches the genuine validation score and the best snapshot is
/// returned; otherwise the final parameters are.
pub fn train_with(
    graph: &HeteroGraph,
    validation: Option<Validation>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, DetectorError> {
    config.validate()?;
    if graph.node_count(NodeType::Transaction) == 0 {
        return Err(DetectorError::EmptyGraph);
    }
    if let Some(v) = validation {
        if v.labels.len() != v.graph.node_count(NodeType::Transaction) {
            return Err(DetectorError::LengthMismatch {
                scores: v.graph.node_count(NodeType::Transaction),
                labels: v.labels.len(),
            });
        }
    }
    let feature_dims = NodeType::ALL.map(|t| graph.feature_dim(t));
    let mut params = ModelParams::init(config.model_shape(feature_dims), config.seed)?;
    let mut optim = OptimState::new(AdamW::new(config.learning_rate, config.weight_decay), params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let index = GraphIndex::new(graph);
    let mode = Mode::Training {
        dropout: config.dropout,
    };

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let bound = params.map(|t| tape.param(t.clone()));
        let pass = forward(&mut tape, &bound, graph, &index, mode, &mut rng)?;
        let terms = loss_terms(
            &mut tape,
            &pass.inputs,
            &pass.reconstruction,
            Some((pass.latent(), config.kl_beta)),
            NodeFilter::all(),
        )?;
        let loss = tape.value(&terms.total).get(0, 0);
        if !loss.is_finite() {
            return Err(DetectorError::NonFiniteLoss { epoch });
        }
        let grads = tape.backward(terms.total)?;
        let grads: Vec<_> = bound.tensors().into_iter().map(|v| grads.get(*v)).collect();
        drop(tape);
        optim.step(&mut params.tensors_mut(), &grads)?;

        let mut record = EpochRecord {
            epoch,
            train_loss: loss,
            val_genuine: None,
            val_fraud: None,
        };
        if let Some(v) = validation {
            let scores = transaction_losses(&params, v.graph)?;
            if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
                return Err(DetectorError::NonFiniteScore(*bad));
            }
            record.val_genuine = class_mean(&scores, v.labels, false);
            record.val_fraud = class_mean(&scores, v.labels, true);
        }
        history.epochs.push(record);
        on_epoch(&record);

        let Some(current) = record.val_genuine else {
            history.best_epoch = Some(epoch);
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| current < *b) {
            best = Some((current, params.clone()));
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                history.early_stopped = true;
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        params = snapshot;
    }
    Ok(TrainOutcome { params, history })
}

fn class_mean(scores: &[f64], labels: &[bool], class: bool) -> Option<f64> {
    let picked: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == class)
        .map(|(s, _)| *s)
        .collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Reconstruction error of every transaction node, in node order, from a
/// deterministic encode/decode pass over the whole graph.
pub fn transaction_losses(params: &ModelParams, graph: &HeteroGraph) -> Result<Vec<f64>, DetectorError> {
    Ok(node_losses(params, graph)?[NodeType::Transaction.code()].clone())
}

/// Reconstruction error of every node of every type.
pub fn node_losses(params: &ModelParams, graph: &HeteroGraph) -> Result<[Vec<f64>; 3], DetectorError> {
    // Inference draws no randomness; the stream is only a placeholder.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let index = GraphIndex::new(graph);
    let mut b = Eval;
    let pass = forward(&mut b, params, graph, &index, Mode::Inference, &mut rng)?;
    let terms = loss_terms(&mut b, &pass.inputs, &pass.reconstruction, None, NodeFilter::all())?;
    Ok(terms.per_node.map(|t| t.into_data()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTransaction {
    pub trans_id: String,
    pub loss: f64,
}

/// Per-transaction anomaly score keyed by transaction id.
pub fn score_transactions(params: &ModelParams, graph: &HeteroGraph) -> Result<Vec<ScoredTransaction>, DetectorError> {
    let losses = transaction_losses(params, graph)?;
    Ok(graph
        .keys(NodeType::Transaction)
        .iter()
        .zip(losses)
        .map(|(id, loss)| ScoredTransaction {
            trans_id: id.clone(),
            loss,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdMethod {
    BestF1,
    /// Validation held no fraud; the 99th percentile of genuine scores.
    GenuinePercentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub method: ThresholdMethod,
    pub search: Option<ThresholdSearch>,
}

/// Best-F1 threshold on validation scores, or the 99th percentile of the
/// genuine scores when only one class is present.
pub fn fit_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdChoice, DetectorError> {
    match best_threshold(scores, labels) {
        Ok(search) => Ok(ThresholdChoice {
            threshold: search.threshold,
            method: ThresholdMethod::BestF1,
            search: Some(search),
        }),
        Err(DetectorError::DegenerateLabels) => {
            let mut genuine: Vec<f64> = scores
                .iter()
                .zip(labels)
                .filter(|(_, &l)| !l)
                .map(|(s, _)| *s)
                .collect();
            if genuine.is_empty() {
                return Err(DetectorError::DegenerateLabels);
            }
            genuine.sort_by(f64::total_cmp);
            let rank = ((genuine.len() as f64 * 0.99).ceil() as usize).clamp(1, genuine.len());
            Ok(ThresholdChoice {
                threshold: genuine[rank - 1],
                method: ThresholdMethod::GenuinePercentile,
                search: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trans_id: String,
    pub loss: f64,
    pub label: bool,
    pub verdict: Verdict,
}

/// Verdicts and metrics for a scored, labelled set of transactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<ReportRow>,
    pub threshold: f64,
    pub confusion: Confusion,
    /// Absent when the labels hold a single class.
    pub roc: Option<RocCurve>,
    /// Absent when the labels hold no fraud.
    pub pr: Option<PrCurve>,
}

impl ScoreReport {
    pub fn new(scored: &[ScoredTransaction], labels: &[bool], threshold: f64) -> Result<Self, DetectorError> {
        if scored.len() != labels.len() {
            return Err(DetectorError::LengthMismatch {
                scores: scored.len(),
                labels: labels.len(),
            });
        }
        let scores: Vec<f64> = scored.iter().map(|s| s.loss).collect();
        let verdicts = classify(&scores, threshold);
        let confusion = confusion_and_rates(&verdicts, labels)?;
        let roc = match roc_curve_auc(&scores, labels) {
            Ok(r) => Some(r),
            Err(DetectorError::DegenerateLabels) => None,
            Err(e) => return Err(e),
        };
        let pr = match pr_curve_auc(&scores, labels) {
            Ok(r) => Some(r),
            Err(DetectorError::NoPositives) => None,
            Err(e) => return Err(e),
        };
        let rows = scored
            .iter()
            .zip(labels)
            .zip(verdicts)
            .map(|((s, &label), verdict)| ReportRow {
                trans_id: s.trans_id.clone(),
                loss: s.loss,
                label,
                verdict,
            })
            .collect();
        Ok(Self {
            rows,
            threshold,
            confusion,
            roc,
            pr,
        })
    }
}
