//! Labeled synthetic corpora with planted bullying structure.
//!
//! Bullying sessions differ from clean ones in three ways: more tokens drawn
//! from a small profane vocabulary, exponential comment gaps with a shorter
//! mean, and owners drawn from one block of a two-block stochastic block
//! model graph.

use std::sync::Arc;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CommentRecord, Corpus, Label, SessionRecord, SocialGraph, VocabularyPolicy};
use crate::error::{Result, UcdError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_sessions: usize,
    pub bully_fraction: f64,
    /// Total word types, profane ones included.
    pub vocab_size: usize,
    pub profane_vocab_size: usize,
    pub profane_rate_bully: f64,
    pub profane_rate_clean: f64,
    /// Bullying gaps have mean `clean_mean_gap / burst_rate_ratio`.
    pub burst_rate_ratio: f64,
    pub n_users: usize,
    /// Fraction of expected edges that stay inside a block.
    pub homophily: f64,
    pub seed: u64,
    pub clean_mean_gap: f64,
    pub mean_comments: f64,
    pub mean_comment_len: f64,
    pub mean_degree: f64,
    pub user_features: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_sessions: 1000,
            bully_fraction: 0.3,
            vocab_size: 400,
            profane_vocab_size: 25,
            profane_rate_bully: 0.15,
            profane_rate_clean: 0.01,
            burst_rate_ratio: 4.0,
            n_users: 200,
            homophily: 0.9,
            seed: 0,
            clean_mean_gap: 60.0,
            mean_comments: 8.0,
            mean_comment_len: 6.0,
            mean_degree: 6.0,
            user_features: 4,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UcdError::InvalidArgument(m));
        if self.n_sessions == 0 {
            return bad("n_sessions must be positive".into());
        }
        if !(self.bully_fraction > 0.0 && self.bully_fraction < 0.5) {
            return bad(format!(
                "bully_fraction must be in (0, 0.5) so bullying is the minority class, got {}",
                self.bully_fraction
            ));
        }
        if self.vocab_size <= self.profane_vocab_size {
            return bad(format!(
                "vocab_size ({}) must exceed profane_vocab_size ({})",
                self.vocab_size, self.profane_vocab_size
            ));
        }
        if self.profane_vocab_size == 0 {
            return bad("profane_vocab_size must be positive".into());
        }
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.profane_rate_bully) || !rate_ok(self.profane_rate_clean) {
            return bad("profane rates must lie in [0, 1]".into());
        }
        if !(self.profane_rate_bully > self.profane_rate_clean) {
            return bad("profane_rate_bully must exceed profane_rate_clean".into());
        }
        if !(self.burst_rate_ratio > 1.0) {
            return bad(format!("burst_rate_ratio must be > 1, got {}", self.burst_rate_ratio));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return bad(format!("homophily must be in [0, 1], got {}", self.homophily));
        }
        if self.n_users < 2 {
            return bad("n_users must be at least 2".into());
        }
        if !(self.clean_mean_gap > 0.0) || !(self.mean_comments >= 1.0) || !(self.mean_comment_len >= 1.0) {
            return bad("clean_mean_gap > 0, mean_comments >= 1 and mean_comment_len >= 1 required".into());
        }
        if !(self.mean_degree >= 0.0) {
            return bad("mean_degree must be non-negative".into());
        }
        Ok(())
    }

    pub fn benign_vocab_size(&self) -> usize {
        self.vocab_size - self.profane_vocab_size
    }

    /// Users `0..bully_block_size()` form the block that owns bullying sessions.
    pub fn bully_block_size(&self) -> usize {
        ((self.n_users as f64 * self.bully_fraction).round() as usize).clamp(1, self.n_users - 1)
    }
}

pub fn benign_word(i: usize) -> String {
    format!("w{i}")
}

pub fn profane_word(i: usize) -> String {
    format!("x{i}")
}

pub fn is_profane_word(token: &str) -> bool {
    token.starts_with('x') && token[1..].chars().all(|c| c.is_ascii_digit()) && token.len() > 1
}

/// Raw generator output: file-ready records plus the graph.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub records: Vec<SessionRecord>,
    pub graph: SocialGraph,
}

fn user_id(i: usize) -> String {
    format!("u{i}")
}

fn generate_graph(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<SocialGraph> {
    let n = spec.n_users;
    let b1 = spec.bully_block_size();
    let block = |u: usize| usize::from(u >= b1);
    let sizes = [b1, n - b1];
    let p_in = |b: usize| {
        if sizes[b] < 2 {
            0.0
        } else {
            (spec.mean_degree * spec.homophily / (sizes[b] - 1) as f64).min(1.0)
        }
    };
    // A node in the smaller block expects mean_degree·(1−h) cross edges.
    let p_out = (spec.mean_degree * (1.0 - spec.homophily) / sizes[0].max(sizes[1]) as f64).min(1.0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block(u) == block(v) { p_in(block(u)) } else { p_out };
            if p > 0.0 && rng.random::<f64>() < p {
                match rng.random_range(0..4) {
                    0 | 1 => {
                        edges.push((u, v));
                        edges.push((v, u));
                    }
                    2 => edges.push((u, v)),
                    _ => edges.push((v, u)),
                }
            }
        }
    }
    let mut followers = vec![0usize; n];
    let mut followees = vec![0usize; n];
    for &(s, d) in &edges {
        followees[s] += 1;
        followers[d] += 1;
    }
    let dim = spec.user_features.max(2);
    let mut features = Array2::zeros((n, dim));
    for u in 0..n {
        features[[u, 0]] = (1.0 + followers[u] as f64).ln();
        features[[u, 1]] = (1.0 + followees[u] as f64).ln();
        for j in 2..dim {
            features[[u, j]] = StandardNormal.sample(rng);
        }
    }
    SocialGraph::new((0..n).map(user_id).collect(), features, edges)
}

/// File-level generator output. Deterministic under `spec.seed`.
pub fn generate_records(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let graph = generate_graph(spec, &mut rng)?;

    let n_bully = (spec.n_sessions as f64 * spec.bully_fraction).round() as usize;
    let mut bully_flags: Vec<bool> = (0..spec.n_sessions).map(|i| i < n_bully).collect();
    bully_flags.shuffle(&mut rng);

    let benign = spec.benign_vocab_size();
    let zipf = WeightedIndex::new((0..benign).map(|r| 1.0 / (r as f64 + 1.0)))
        .expect("benign vocabulary is nonempty");
    let extra_comments = Poisson::new(spec.mean_comments - 1.0).ok();
    let extra_tokens = Poisson::new(spec.mean_comment_len - 1.0).ok();
    let likes_dist = LogNormal::<f64>::new(3.0, 1.0).expect("valid lognormal");
    let clean_gap = Exp::new(1.0 / spec.clean_mean_gap).expect("positive rate");
    let bully_gap = Exp::new(spec.burst_rate_ratio / spec.clean_mean_gap).expect("positive rate");
    let b1 = spec.bully_block_size();

    let draw_count = |rng: &mut ChaCha8Rng, d: &Option<Poisson<f64>>| -> usize {
        1 + d.as_ref().map(|p| p.sample(rng) as usize).unwrap_or(0)
    };

    let mut records = Vec::with_capacity(spec.n_sessions);
    for (i, &bully) in bully_flags.iter().enumerate() {
        let owner = if bully {
            rng.random_range(0..b1)
        } else {
            rng.random_range(b1..spec.n_users)
        };
        let rate = if bully {
            spec.profane_rate_bully
        } else {
            spec.profane_rate_clean
        };
        let n_comments = draw_count(&mut rng, &extra_comments);
        let mut t = 0.0;
        let mut comments = Vec::with_capacity(n_comments);
        for _ in 0..n_comments {
            t += if bully {
                bully_gap.sample(&mut rng)
            } else {
                clean_gap.sample(&mut rng)
            };
            let len = draw_count(&mut rng, &extra_tokens);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        profane_word(rng.random_range(0..spec.profane_vocab_size))
                    } else {
                        benign_word(zipf.sample(&mut rng))
                    }
                })
                .collect();
            comments.push(CommentRecord {
                author_id: user_id(rng.random_range(0..spec.n_users)),
                timestamp: t,
                text: words.join(" "),
            });
        }
        let likes = likes_dist.sample(&mut rng).floor() as u64;
        let shares = if likes == 0 {
            0
        } else {
            Binomial::new(likes, 0.1).expect("valid binomial").sample(&mut rng)
        };
        records.push(SessionRecord {
            session_id: format!("s{i:05}"),
            owner_id: user_id(owner),
            likes,
            shares,
            label: Some(if bully {
                Label::Bullying
            } else {
                Label::NonBullying
            }),
            posted_at: None,
            comments,
        });
    }
    Ok(SynthOutput { records, graph })
}

/// Generates an in-memory corpus (vocabulary built with `min_token_freq = 1`).
pub fn generate(spec: &SynthSpec) -> Result<Corpus> {
    let out = generate_records(spec)?;
    let (corpus, _) = Corpus::from_records(
        out.records,
        Some(Arc::new(out.graph)),
        VocabularyPolicy::Build { min_token_freq: 1 },
    )?;
    Ok(corpus)
}
