//! Plain tabular auto-encoder over transaction features, ignoring the graph.
//!
//! A single-hidden-layer MLP (`features → hidden → features`, ReLU) trained
//! full-batch with AdamW on genuine rows; the anomaly score is the per-row
//! mean squared reconstruction error, directly comparable to
//! [`super::transaction_losses`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::model::glorot;
use crate::numerics::{AdamW, Backend, Eval, OptimState, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            learning_rate: 1e-2,
            weight_decay: 0.01,
            epochs: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularAutoencoder {
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    pub dec_w: Tensor,
    pub dec_b: Tensor,
}

impl TabularAutoencoder {
    pub fn init(features: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            enc_w: glorot(features, hidden, &mut rng),
            enc_b: Tensor::zeros(1, hidden),
            dec_w: glorot(hidden, features, &mut rng),
            dec_b: Tensor::zeros(1, features),
        }
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.enc_w, &self.enc_b, &self.dec_w, &self.dec_b]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.enc_w, &mut self.enc_b, &mut self.dec_w, &mut self.dec_b]
    }

    /// Mean squared reconstruction error of each row.
    pub fn row_losses(&self, x: &Tensor) -> Result<Vec<f64>, DetectorError> {
        check_width(x, self.enc_w.rows())?;
        let mut b = Eval;
        let p = self.tensors().map(Tensor::clone);
        Ok(per_row_error(&mut b, &p, x.clone())?.into_data())
    }
}

fn check_width(x: &Tensor, expected: usize) -> Result<(), DetectorError> {
    if x.cols() != expected {
        return Err(DetectorError::InvalidConfig(format!(
            "feature width {} does not match the model's {expected}",
            x.cols()
        )));
    }
    Ok(())
}

fn per_row_error<B: Backend>(b: &mut B, p: &[B::Value; 4], x: Tensor) -> Result<B::Value, DetectorError> {
    let x = b.constant(x);
    let h = b.matmul(&x, &p[0])?;
    let h = b.add_row(&h, &p[1])?;
    let h = b.relu(&h);
    let y = b.matmul(&h, &p[2])?;
    let y = b.add_row(&y, &p[3])?;
    let diff = b.sub(&y, &x)?;
    let sq = b.mul(&diff, &diff)?;
    Ok(b.mean_rows(&sq))
}

/// Trains on the rows of `x` (one transaction per row) and returns the model
/// with its per-epoch mean loss.
pub fn train_tabular(x: &Tensor, config: &TabularConfig) -> Result<(TabularAutoencoder, Vec<f64>), DetectorError> {
    if x.rows() == 0 {
        return Err(DetectorError::EmptyGraph);
    }
    if config.hidden == 0 {
        return Err(DetectorError::InvalidConfig("hidden width must be positive".into()));
    }
    let mut model = TabularAutoencoder::init(x.cols(), config.hidden, config.seed);
    let mut optim = OptimState::new(AdamW::new(config.learning_rate, config.weight_decay), model.tensors());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let p = model.tensors().map(|t| tape.param(t.clone()));
        let rows = per_row_error(&mut tape, &p, x.clone())?;
        let total = tape.sum(&rows);
        let loss = tape.scale(&total, 1.0 / x.rows() as f64);
        let value = tape.value(&loss).get(0, 0);
        if !value.is_finite() {
            return Err(DetectorError::NonFiniteLoss { epoch });
        }
        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = p.iter().map(|v| grads.get(*v)).collect();
        optim.step(&mut model.tensors_mut(), &grads)?;
        history.push(value);
    }
    Ok((model, history))
}
