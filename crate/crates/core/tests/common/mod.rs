//! Independent reference implementations and small fixtures shared by the
//! integration suites. Oracles use plain loops over `Vec`s and avoid the
//! library's linear algebra.
#![allow(dead_code)]

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucd::data::{Comment, Corpus, Label, Session, SocialGraph, Vocabulary};
use ucd::synth::SynthSpec;
use ucd::text::HanDims;
use ucd::trainer::{ModelDims, TrainConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// `B Bᵀ + floor·I` with uniform `B`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize, floor: f64) -> Array2<f64> {
    let b = random_matrix(rng, d, d, 1.0);
    let mut s = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += b[[i, k]] * b[[j, k]];
            }
            s[[i, j]] = acc + if i == j { floor } else { 0.0 };
        }
    }
    s
}

/// Rows on the probability simplex, strictly positive.
pub fn random_simplex_rows<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.05..1.0));
    for mut r in m.rows_mut() {
        let s: f64 = r.iter().sum();
        r.mapv_inplace(|v| v / s);
    }
    m
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(1.0)
}

/// Determinant and inverse by Gauss–Jordan elimination with partial pivoting.
pub fn det_and_inverse(a: &Array2<f64>) -> (f64, Vec<Vec<f64>>) {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[[i, j]]).collect()).collect();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if pivot != col {
            m.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col];
        det *= p;
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                for j in 0..n {
                    m[row][j] -= f * m[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    (det, inv)
}

/// `−ln Σₖ φₖ (2π)^{−d/2} |Σₖ|^{−1/2} exp(−½ rᵀ Σₖ⁻¹ r)` summed directly.
pub fn brute_energy(ss: &[f64], phi: &[f64], mu: &[Vec<f64>], sigma: &[Array2<f64>]) -> f64 {
    let d = ss.len();
    let mut density = 0.0;
    for k in 0..phi.len() {
        let (det, inv) = det_and_inverse(&sigma[k]);
        let r: Vec<f64> = (0..d).map(|j| ss[j] - mu[k][j]).collect();
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += r[i] * inv[i][j] * r[j];
            }
        }
        let norm = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) * det.sqrt();
        density += phi[k] * (-0.5 * quad).exp() / norm;
    }
    -density.ln()
}

pub struct NaiveGmm {
    pub phi: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<Vec<f64>>>,
}

/// Mixture statistics by explicit loops over samples.
pub fn naive_gmm(x: &Array2<f64>, m: &Array2<f64>) -> NaiveGmm {
    let (n, d) = x.dim();
    let k = m.ncols();
    let mut out = NaiveGmm {
        phi: vec![0.0; k],
        mu: vec![vec![0.0; d]; k],
        sigma: vec![vec![vec![0.0; d]; d]; k],
    };
    for c in 0..k {
        let mut mass = 0.0;
        for i in 0..n {
            mass += m[[i, c]];
        }
        out.phi[c] = mass / n as f64;
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += m[[i, c]] * x[[i, j]];
            }
            out.mu[c][j] = acc / mass;
        }
        for a in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += m[[i, c]] * (x[[i, a]] - out.mu[c][a]) * (x[[i, b]] - out.mu[c][b]);
                }
                out.sigma[c][a][b] = acc / mass;
            }
        }
    }
    out
}

/// Pairwise AUROC: a tie between a positive and a negative counts half.
pub fn pairwise_auroc(scores: &[f64], positives: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positives[i] && !positives[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `½ Σᵢ Σⱼ (Aᵢⱼ − σ(zᵢ·zⱼ))²`.
pub fn naive_reconstruction_loss(adj: &Array2<f64>, z: &Array2<f64>) -> f64 {
    let n = adj.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..z.ncols() {
                dot += z[[i, k]] * z[[j, k]];
            }
            total += (adj[[i, j]] - sigmoid(dot)).powi(2);
        }
    }
    0.5 * total
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Two-layer graph convolution with symmetric normalization and self-loops.
pub fn naive_gae_embeddings(n: usize, edges: &[(usize, usize)], x: &Array2<f64>, w1: &Array2<f64>, w2: &Array2<f64>) -> Array2<f64> {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(s, d) in edges {
        a[s][d] = 1.0;
        a[d][s] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let norm: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect();
    let h = matmul(&matmul(&norm, &to_rows(x)), &to_rows(w1));
    let h: Vec<Vec<f64>> = h.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let z = matmul(&matmul(&norm, &h), &to_rows(w2));
    Array2::from_shape_fn((n, z[0].len()), |(i, j)| z[i][j])
}

/// `½ Σᵢ (predᵢ − (ln(1+Δtᵢ) − mean)/std)²`.
pub fn naive_time_loss(predictions: &[f64], gaps: &[f64], mean: f64, std: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..predictions.len() {
        let y = ((1.0 + gaps[i]).ln() - mean) / std;
        total += (predictions[i] - y) * (predictions[i] - y);
    }
    total / 2.0
}

pub fn naive_penalty(sigma: &[Array2<f64>]) -> f64 {
    let mut total = 0.0;
    for s in sigma {
        for j in 0..s.nrows() {
            total += 1.0 / s[[j, j]];
        }
    }
    total
}

/// Gaps `tᵢ − tᵢ₋₁` with `t₀ = 0`, over the timestamps as given.
pub fn naive_gaps(timestamps: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = 0.0;
    for &t in timestamps {
        out.push(t - prev);
        prev = t;
    }
    out
}

/// Lloyd iterations from given centroids: assign to the nearest (lowest index
/// on ties), recompute means, keep empty clusters in place.
pub fn naive_lloyd(x: &Array2<f64>, init: &Array2<f64>, max_iter: usize) -> Vec<usize> {
    let (n, d) = x.dim();
    let mut c: Vec<Vec<f64>> = to_rows(init);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, cj) in c.iter().enumerate() {
                let dist: f64 = (0..d).map(|t| (x[[i, t]] - cj[t]).powi(2)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (j, cj) in c.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            for t in 0..d {
                cj[t] = members.iter().map(|&i| x[[i, t]]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    assign
}

pub fn comment(tokens: &[usize], t: f64) -> Comment {
    Comment {
        tokens: tokens.to_vec(),
        timestamp: t,
        author_id: "a".into(),
        text: String::new(),
    }
}

/// A handcrafted corpus: three sessions over a vocabulary of six tokens and
/// a two-user graph with a single edge.
pub fn micro_corpus() -> Corpus {
    let sessions = vec![
        Session::new("s0", "u0", vec![comment(&[1, 2, 3], 5.0), comment(&[4, 1], 9.0)], 3, 1, Some(Label::NonBullying)).unwrap(),
        Session::new(
            "s1",
            "u1",
            vec![comment(&[5], 1.0), comment(&[2, 2, 4, 1], 2.5), comment(&[3, 5], 30.0)],
            10,
            0,
            Some(Label::Bullying),
        )
        .unwrap(),
        Session::new("s2", "u0", vec![comment(&[1, 4, 5], 12.0)], 0, 4, Some(Label::NonBullying)).unwrap(),
    ];
    let features = Array2::from_shape_vec((2, 4), vec![0.3, -0.2, 0.8, 0.1, -0.5, 0.4, 0.2, 0.9]).unwrap();
    let graph = SocialGraph::new(vec!["u0".into(), "u1".into()], features, vec![(0, 1)]).unwrap();
    let tokens: Vec<String> = ["<oov>", "w1", "w2", "w3", "w4", "w5"].iter().map(|s| s.to_string()).collect();
    Corpus {
        sessions,
        graph: Some(Arc::new(graph)),
        vocabulary: Arc::new(Vocabulary::from_parts(tokens, vec![1; 6])),
    }
}

/// `d = 2 (graph) + 4 (text) + 2 (social) = 8`, `K = 2`.
pub fn micro_config() -> TrainConfig {
    TrainConfig {
        k: 2,
        batch_size: 3,
        dims: ModelDims {
            han: HanDims {
                embedding: 3,
                word_hidden: 2,
                comment_hidden: 2,
                social: 2,
                max_tokens: 16,
                max_comments: 16,
            },
            gae_hidden: 4,
            gae_embedding: 2,
            membership_hidden: vec![4],
            temporal_hidden: 5,
        },
        ..TrainConfig::default()
    }
}

/// A small synthetic corpus for fast end-to-end tests.
pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_sessions: 120,
        n_users: 40,
        vocab_size: 120,
        profane_vocab_size: 10,
        seed,
        ..SynthSpec::default()
    }
}

pub fn small_config() -> TrainConfig {
    TrainConfig {
        k: 3,
        batch_size: 16,
        epochs: 2,
        dims: ModelDims {
            han: HanDims {
                embedding: 8,
                word_hidden: 6,
                comment_hidden: 6,
                social: 4,
                max_tokens: 32,
                max_comments: 32,
            },
            gae_hidden: 8,
            gae_embedding: 4,
            membership_hidden: vec![8],
            temporal_hidden: 6,
        },
        ..TrainConfig::default()
    }
}
