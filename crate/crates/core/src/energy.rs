//! Membership network, Gaussian-mixture estimation from soft memberships,
//! per-session energy and threshold classification.
//!
//! Given memberships `m̂` (N×K) for a batch of representations `ss` (N×d):
//!
//! ```text
//! φ̂ₖ = Σᵢ m̂ᵢₖ / N
//! μ̂ₖ = Σᵢ m̂ᵢₖ ssᵢ / Σᵢ m̂ᵢₖ
//! Σ̂ₖ = Σᵢ m̂ᵢₖ (ssᵢ − μ̂ₖ)(ssᵢ − μ̂ₖ)ᵀ / Σᵢ m̂ᵢₖ  + εI
//! E(ss) = −log Σₖ φ̂ₖ N(ss; μ̂ₖ, Σ̂ₖ)
//! ```
//!
//! Energies are evaluated in the log domain through Cholesky factors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, UcdError};
use crate::linalg;
use crate::params::{fan_in_uniform, Bound, ParamGroup, ParamId, ParamStore};

/// Diagonal jitter added to every estimated covariance.
pub const COVARIANCE_JITTER: f64 = 1e-6;

/// Components whose membership mass falls below this are degenerate.
pub const MIN_COMPONENT_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipNet {
    /// `(weight, bias)` per layer; tanh between layers, none after the last.
    pub layers: Vec<(ParamId, ParamId)>,
    pub input_width: usize,
    pub components: usize,
}

impl MembershipNet {
    pub fn init<R: Rng>(store: &mut ParamStore, rng: &mut R, input_width: usize, hidden: &[usize], components: usize) -> Self {
        let mut widths = vec![input_width];
        widths.extend_from_slice(hidden);
        widths.push(components);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                (
                    store.add(format!("mln.layer{i}.weight"), ParamGroup::Membership, fan_in_uniform(rng, w[0], w[1])),
                    store.add(format!("mln.layer{i}.bias"), ParamGroup::Membership, Array2::zeros((1, w[1]))),
                )
            })
            .collect();
        Self {
            layers,
            input_width,
            components,
        }
    }

    pub fn logits_on_tape(&self, tape: &mut Tape, bound: &Bound, ss: Var) -> Var {
        let mut h = ss;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let a = tape.matmul(h, bound.var(w));
            h = tape.add_row(a, bound.var(b));
            if i + 1 < self.layers.len() {
                h = tape.tanh(h);
            }
        }
        h
    }

    pub fn memberships_on_tape(&self, tape: &mut Tape, bound: &Bound, ss: Var) -> Var {
        let logits = self.logits_on_tape(tape, bound, ss);
        let valid = Array2::from_elem(tape.shape(logits), true);
        tape.masked_softmax_rows(logits, &valid)
    }
}

/// Softmax memberships for a batch (`N×d` → `N×K`).
pub fn memberships(batch: &Array2<f64>, store: &ParamStore, net: &MembershipNet) -> Array2<f64> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let x = tape.leaf(batch.clone());
    let m = net.memberships_on_tape(&mut tape, &bound, x);
    tape.value(m).clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmState {
    pub phi: Array1<f64>,
    /// `K×d`.
    pub mu: Array2<f64>,
    pub sigma: Vec<Array2<f64>>,
    /// Components that fell back to the batch mean and identity covariance.
    #[serde(default)]
    pub degenerate: Vec<usize>,
}

impl GmmState {
    pub fn components(&self) -> usize {
        self.phi.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }
}

/// Mixture statistics from soft memberships, with jitter `ε` on every
/// covariance diagonal.
pub fn estimate_gmm(batch: ArrayView2<f64>, m: ArrayView2<f64>, jitter: f64) -> Result<GmmState> {
    let (n, d) = batch.dim();
    if m.nrows() != n || n == 0 {
        return Err(UcdError::Shape(format!(
            "batch has {n} rows, memberships {}",
            m.nrows()
        )));
    }
    let k = m.ncols();
    let mass = m.sum_axis(Axis(0));
    let phi = &mass / n as f64;
    let batch_mean = batch.mean_axis(Axis(0)).expect("nonempty batch");
    let mut mu = Array2::zeros((k, d));
    let mut sigma = Vec::with_capacity(k);
    let mut degenerate = Vec::new();
    for c in 0..k {
        if mass[c] < MIN_COMPONENT_MASS {
            degenerate.push(c);
            mu.row_mut(c).assign(&batch_mean);
            sigma.push(Array2::eye(d) * (1.0 + jitter));
            continue;
        }
        let w = m.column(c);
        let mean = w.dot(&batch) / mass[c];
        let centered = &batch - &mean;
        let weighted = &centered * &w.insert_axis(Axis(1));
        let mut cov = weighted.t().dot(&centered) / mass[c];
        cov.diag_mut().mapv_inplace(|v| v + jitter);
        mu.row_mut(c).assign(&mean);
        sigma.push(cov);
    }
    Ok(GmmState {
        phi,
        mu,
        sigma,
        degenerate,
    })
}

/// Cached factorization of a [`GmmState`] for repeated energy evaluation.
#[derive(Debug, Clone)]
pub struct FactoredGmm {
    log_phi: Vec<f64>,
    mu: Array2<f64>,
    chol: Vec<Array2<f64>>,
    log_norm: Vec<f64>,
}

impl FactoredGmm {
    pub fn new(gmm: &GmmState) -> Result<Self> {
        let d = gmm.dim() as f64;
        let mut chol = Vec::with_capacity(gmm.components());
        let mut log_norm = Vec::with_capacity(gmm.components());
        for (k, s) in gmm.sigma.iter().enumerate() {
            let l = linalg::cholesky(s).ok_or(UcdError::NotPositiveDefinite { component: k })?;
            log_norm.push(-0.5 * (d * (2.0 * std::f64::consts::PI).ln() + linalg::cholesky_log_det(&l)));
            chol.push(l);
        }
        Ok(Self {
            log_phi: gmm.phi.iter().map(|p| p.ln()).collect(),
            mu: gmm.mu.clone(),
            chol,
            log_norm,
        })
    }

    pub fn energy(&self, ss: ArrayView1<f64>) -> f64 {
        let terms = (0..self.chol.len()).map(|k| {
            let r = &ss - &self.mu.row(k);
            let w = linalg::cholesky_solve(&self.chol[k], r.view());
            self.log_phi[k] + self.log_norm[k] - 0.5 * r.dot(&w)
        });
        let terms: Vec<f64> = terms.collect();
        -linalg::log_sum_exp(terms.iter().copied())
    }
}

/// `E(ss) = −log Σₖ φ̂ₖ N(ss; μ̂ₖ, Σ̂ₖ)`; higher means less likely.
pub fn energy(ss: ArrayView1<f64>, gmm: &GmmState) -> Result<f64> {
    Ok(FactoredGmm::new(gmm)?.energy(ss))
}

pub fn energies(batch: ArrayView2<f64>, gmm: &GmmState) -> Result<Vec<f64>> {
    let f = FactoredGmm::new(gmm)?;
    Ok(batch.outer_iter().map(|row| f.energy(row)).collect())
}

/// `P(Σ̂) = Σₖ Σⱼ 1/Σ̂ₖⱼⱼ`.
pub fn singularity_penalty(gmm: &GmmState) -> Result<f64> {
    let mut total = 0.0;
    for (k, s) in gmm.sigma.iter().enumerate() {
        for (j, &v) in s.diag().iter().enumerate() {
            if v == 0.0 {
                return Err(UcdError::ZeroDiagonal { component: k, index: j });
            }
            total += 1.0 / v;
        }
    }
    Ok(total)
}

/// Differentiable mixture statistics and energies for one batch.
#[derive(Debug, Clone)]
pub struct TapeGmm {
    pub phi: Var,
    pub mu: Vec<Var>,
    pub sigma: Vec<Var>,
    /// `N×1` per-sample energies.
    pub energies: Var,
    /// `1×1` singularity penalty.
    pub penalty: Var,
    pub degenerate: Vec<usize>,
}

pub fn gmm_on_tape(tape: &mut Tape, ss: Var, m: Var, jitter: f64) -> Result<TapeGmm> {
    let (n, d) = tape.shape(ss);
    let k = tape.shape(m).1;
    let mass = tape.sum_rows(m);
    let phi = tape.scale(mass, 1.0 / n as f64);
    let mass_values = tape.value(mass).row(0).to_owned();
    let mut mus = Vec::with_capacity(k);
    let mut sigmas = Vec::with_capacity(k);
    let mut degenerate = Vec::new();
    let mut log_terms = Vec::with_capacity(k);
    let log_phi = tape.log(phi);
    let mut penalty: Option<Var> = None;
    for c in 0..k {
        let (mu, sigma) = if mass_values[c] < MIN_COMPONENT_MASS {
            degenerate.push(c);
            let mean = tape.value(ss).mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0));
            (tape.leaf(mean), tape.leaf(Array2::eye(d) * (1.0 + jitter)))
        } else {
            let w = tape.slice_cols(m, c, c + 1);
            let wsum = tape.slice_cols(mass, c, c + 1);
            let wt = tape.transpose(w);
            let num = tape.matmul(wt, ss);
            let mu = tape.div_scalar(num, wsum);
            let centered = tape.sub_row(ss, mu);
            let weighted = tape.mul_col(centered, w);
            let wct = tape.transpose(weighted);
            let cov = tape.matmul(wct, centered);
            let cov = tape.div_scalar(cov, wsum);
            (mu, tape.add_diag(cov, jitter))
        };
        if tape.value(sigma).iter().any(|v| !v.is_finite()) {
            // overflowed statistics are a diverged run, not a geometry problem
            return Err(UcdError::NonFiniteLoss {
                term: "energy_term",
                epoch: 0,
                batch: 0,
            });
        }
        let lp = tape
            .gaussian_log_pdf(ss, mu, sigma)
            .map_err(|e| match e {
                UcdError::NotPositiveDefinite { .. } => UcdError::NotPositiveDefinite { component: c },
                other => other,
            })?;
        let lphi = tape.slice_cols(log_phi, c, c + 1);
        let ones = tape.leaf(Array2::ones((n, 1)));
        let lphi_col = tape.matmul(ones, lphi);
        log_terms.push(tape.add(lp, lphi_col));
        let p = tape.diag_recip_sum(sigma);
        penalty = Some(match penalty {
            None => p,
            Some(acc) => tape.add(acc, p),
        });
        mus.push(mu);
        sigmas.push(sigma);
    }
    let all = tape.concat_cols(&log_terms);
    let lse = tape.log_sum_exp_rows(all);
    let energies = tape.scale(lse, -1.0);
    Ok(TapeGmm {
        phi,
        mu: mus,
        sigma: sigmas,
        energies,
        penalty: penalty.expect("K >= 1"),
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prediction {
    Bullying,
    NonBullying,
}

impl Prediction {
    pub fn is_bullying(self) -> bool {
        matches!(self, Prediction::Bullying)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::Bullying => "bullying",
            Prediction::NonBullying => "non-bullying",
        }
    }
}

/// Number of sessions flagged out of `n` at threshold `τ`: `⌈(1−τ)·n⌉`.
pub fn flagged_count(n: usize, tau: f64) -> usize {
    // guard against 1 − 0.99 = 0.010000000000000009 style round-off
    let raw = (1.0 - tau) * n as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// The `τ`-quantile of `energies`: the largest value that leaves
/// `⌈(1−τ)·n⌉` entries strictly above it when values are distinct.
pub fn quantile_cutoff(energies: &[f64], tau: f64) -> f64 {
    assert!(!energies.is_empty(), "quantile of empty energy list");
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = flagged_count(n, tau);
    if k == n {
        f64::NEG_INFINITY
    } else {
        sorted[n - k - 1]
    }
}

/// Sessions with energy strictly above `cutoff` are bullying.
pub fn classify_with_cutoff(energies: &[f64], cutoff: f64) -> Vec<Prediction> {
    energies
        .iter()
        .map(|&e| {
            if e > cutoff {
                Prediction::Bullying
            } else {
                Prediction::NonBullying
            }
        })
        .collect()
}

/// Labels sessions above the `τ`-quantile of this same energy list.
pub fn classify(energies: &[f64], tau: f64) -> Vec<Prediction> {
    classify_with_cutoff(energies, quantile_cutoff(energies, tau))
}
