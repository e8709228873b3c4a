//! Inter-arrival regression from comment vectors.
//!
//! Targets are `log(1 + Δt)` standardized by training-set statistics; the
//! regressor is `tanh(c W₁ + b₁) W₂ + b₂`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{inter_arrival_times, Session};
use crate::error::{Result, UcdError};
use crate::params::{fan_in_uniform, Bound, ParamGroup, ParamId, ParamStore};
use crate::text::{encoded_comments, HanDims, SessionEncoding};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalParams {
    pub hidden_weight: ParamId,
    pub hidden_bias: ParamId,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl TemporalParams {
    pub fn init<R: Rng>(store: &mut ParamStore, rng: &mut R, input: usize, hidden: usize) -> Self {
        Self {
            hidden_weight: store.add("time.hidden.weight", ParamGroup::Temporal, fan_in_uniform(rng, input, hidden)),
            hidden_bias: store.add("time.hidden.bias", ParamGroup::Temporal, Array2::zeros((1, hidden))),
            out_weight: store.add("time.out.weight", ParamGroup::Temporal, fan_in_uniform(rng, hidden, 1)),
            out_bias: store.add("time.out.bias", ParamGroup::Temporal, Array2::zeros((1, 1))),
        }
    }

    /// One prediction per row of `comment_vectors`, as a column.
    pub fn predict_on_tape(&self, tape: &mut Tape, bound: &Bound, comment_vectors: Var) -> Var {
        let h = tape.matmul(comment_vectors, bound.var(self.hidden_weight));
        let h = tape.add_row(h, bound.var(self.hidden_bias));
        let h = tape.tanh(h);
        let o = tape.matmul(h, bound.var(self.out_weight));
        tape.add_row(o, bound.var(self.out_bias))
    }
}

/// `Δt ↦ (ln(1+Δt) − mean) / std`, fitted on training gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetTransform {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl TargetTransform {
    pub fn fit<'a>(sessions: impl Iterator<Item = &'a Session>, dims: &HanDims) -> Self {
        let logs: Vec<f64> = sessions
            .flat_map(|s| session_targets_raw(s, dims))
            .map(f64::ln_1p)
            .collect();
        if logs.is_empty() {
            return Self::default();
        }
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn apply(&self, dt: f64) -> f64 {
        (dt.ln_1p() - self.mean) / self.std
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y * self.std + self.mean).exp_m1()
    }
}

/// Raw gaps for the comments the encoder reads.
pub fn session_targets_raw(session: &Session, dims: &HanDims) -> Vec<f64> {
    let n = encoded_comments(session, dims).len();
    let mut gaps = inter_arrival_times(session);
    gaps.truncate(n);
    gaps
}

/// `½ Σᵢ (predᵢ − yᵢ)²` against already-transformed targets.
pub fn squared_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(UcdError::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(0.5 * predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>())
}

/// `½ Σᵢ (predᵢ − transform(Δtᵢ))²`.
pub fn time_loss(predictions: &[f64], targets_dt: &[f64], transform: &TargetTransform) -> Result<f64> {
    let t: Vec<f64> = targets_dt.iter().map(|&d| transform.apply(d)).collect();
    squared_loss(predictions, &t)
}

pub fn predict_intervals(encoding: &SessionEncoding, store: &ParamStore, params: &TemporalParams) -> Vec<f64> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let c = tape.leaf(encoding.comment_vectors.clone());
    let p = params.predict_on_tape(&mut tape, &bound, c);
    tape.value(p).column(0).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_predict_bias() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TemporalParams::init(&mut store, &mut rng, 4, 3);
        store.get_mut(p.out_weight).fill(0.0);
        store.get_mut(p.out_bias).fill(0.75);
        let enc = SessionEncoding {
            comment_vectors: crate::params::uniform(&mut rng, (3, 4), 1.0),
            word_attention_weights: vec![],
            comment_attention_weights: ndarray::Array1::zeros(3),
            text_vector: ndarray::Array1::zeros(2),
            social_vector: ndarray::Array1::zeros(1),
            combined: ndarray::Array1::zeros(3),
        };
        assert_eq!(predict_intervals(&enc, &store, &p), vec![0.75; 3]);
    }

    #[test]
    fn loss_examples() {
        let id = TargetTransform::default();
        assert_eq!(squared_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(squared_loss(&[0.0], &[2.0]).unwrap(), 2.0);
        assert!(time_loss(&[0.0], &[1.0, 2.0], &id).is_err());
        // identity-standardized transform of e²−1 seconds is 2
        let dt = 2f64.exp() - 1.0;
        assert!((time_loss(&[0.0], &[dt], &id).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transform_roundtrip() {
        let t = TargetTransform { mean: 2.0, std: 1.5 };
        for dt in [0.0, 0.5, 60.0, 1e6] {
            assert!((t.invert(t.apply(dt)) - dt).abs() < 1e-9 * dt.max(1.0));
        }
    }
}
