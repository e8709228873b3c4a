//! Hierarchical attention encoder over words and comments, plus the
//! like/share projection.
//!
//! Word level: a bidirectional GRU reads each comment's embedded tokens; the
//! states `s_t = [→s_t, ←s_t]` are pooled with attention weights
//! `α_t = softmax_t(tanh(s_t W + b) · u_w)` into a comment vector `c_i`.
//! Comment level: the same construction over `c_1 … c_C` (with its own
//! context vector `u_c`) gives the session text vector `v`. The social vector
//! `p` is an affine map of `(ln(1+likes), ln(1+shares))`, and `o = [v, p]`.
//!
//! Everything is batched: all comments of a batch run through the word GRU
//! together (right-padded, masked), then all sessions run through the
//! comment GRU together.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{Comment, Session};
use crate::error::{Result, UcdError};
use crate::params::{fan_in_uniform, orthogonal, uniform, Bound, ParamGroup, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HanDims {
    pub embedding: usize,
    pub word_hidden: usize,
    pub comment_hidden: usize,
    pub social: usize,
    pub max_tokens: usize,
    pub max_comments: usize,
}

impl Default for HanDims {
    fn default() -> Self {
        Self {
            embedding: 32,
            word_hidden: 32,
            comment_hidden: 32,
            social: 8,
            max_tokens: 64,
            max_comments: 128,
        }
    }
}

impl HanDims {
    pub fn comment_width(&self) -> usize {
        2 * self.word_hidden
    }

    pub fn text_width(&self) -> usize {
        2 * self.comment_hidden
    }

    pub fn combined_width(&self) -> usize {
        self.text_width() + self.social
    }
}

/// Gate weights are packed `[update | reset | candidate]` along columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruParams {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl GruParams {
    fn init<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, input: usize, hidden: usize) -> Self {
        let mut w = Array2::zeros((input, 3 * hidden));
        let mut u = Array2::zeros((hidden, 3 * hidden));
        for gate in 0..3 {
            let cols = gate * hidden..(gate + 1) * hidden;
            w.slice_mut(ndarray::s![.., cols.clone()])
                .assign(&fan_in_uniform(rng, input, hidden));
            u.slice_mut(ndarray::s![.., cols]).assign(&orthogonal(rng, hidden));
        }
        Self {
            input: store.add(format!("{name}.input"), ParamGroup::Text, w),
            recurrent: store.add(format!("{name}.recurrent"), ParamGroup::Text, u),
            bias: store.add(format!("{name}.bias"), ParamGroup::Text, Array2::zeros((1, 3 * hidden))),
            hidden,
        }
    }

    /// Runs over packed `inputs`: step `t` holds the first `n_t` rows, with
    /// `n_t` non-increasing, so rows are sorted by length, longest first.
    /// Returns the `n_t×hidden` states of the active rows at every step. A
    /// reverse pass starts each row from zero at its own last element.
    fn run(&self, tape: &mut Tape, bound: &Bound, inputs: &[Var], reverse: bool) -> Vec<Var> {
        let h = self.hidden;
        let rows = tape.shape(inputs[0]).0;
        let w = bound.var(self.input);
        let b = bound.var(self.bias);
        let u = bound.var(self.recurrent);
        let u_gates = tape.slice_cols(u, 0, 2 * h);
        let u_cand = tape.slice_cols(u, 2 * h, 3 * h);
        let mut state = tape.leaf(Array2::zeros((rows, h)));
        let mut out = vec![state; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            let active = tape.shape(inputs[t]).0;
            let prev = tape.head_rows(state, active);
            let xw = tape.matmul(inputs[t], w);
            let xw = tape.add_row(xw, b);
            let x_gates = tape.slice_cols(xw, 0, 2 * h);
            let x_cand = tape.slice_cols(xw, 2 * h, 3 * h);
            let hu = tape.matmul(prev, u_gates);
            let pre = tape.add(x_gates, hu);
            let gates = tape.sigmoid(pre);
            let update = tape.slice_cols(gates, 0, h);
            let reset = tape.slice_cols(gates, h, 2 * h);
            let rh = tape.mul(reset, prev);
            let rhu = tape.matmul(rh, u_cand);
            let cand = tape.add(x_cand, rhu);
            let cand = tape.tanh(cand);
            let delta = tape.sub(cand, prev);
            let step = tape.mul(update, delta);
            let next = tape.add(prev, step);
            out[t] = next;
            state = if active == rows {
                next
            } else {
                let padded = tape.pad_rows(step, rows);
                tape.add(state, padded)
            };
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionParams {
    pub proj: ParamId,
    pub proj_bias: ParamId,
    pub context: ParamId,
}

impl AttentionParams {
    fn init<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, width: usize) -> Self {
        Self {
            proj: store.add(format!("{name}.proj"), ParamGroup::Text, fan_in_uniform(rng, width, width)),
            proj_bias: store.add(format!("{name}.proj_bias"), ParamGroup::Text, Array2::zeros((1, width))),
            context: store.add(format!("{name}.context"), ParamGroup::Text, fan_in_uniform(rng, width, 1)),
        }
    }

    /// Pools packed per-step states into `(pooled rows×width, weights rows×T)`.
    fn pool(&self, tape: &mut Tape, bound: &Bound, states: &[Var], valid: &Array2<bool>) -> (Var, Var) {
        let rows = valid.nrows();
        let proj = bound.var(self.proj);
        let bias = bound.var(self.proj_bias);
        let ctx = bound.var(self.context);
        let logits: Vec<Var> = states
            .iter()
            .map(|&s| {
                let a = tape.matmul(s, proj);
                let a = tape.add_row(a, bias);
                let a = tape.tanh(a);
                let l = tape.matmul(a, ctx);
                tape.pad_rows(l, rows)
            })
            .collect();
        let logits = tape.concat_cols(&logits);
        let weights = tape.masked_softmax_rows(logits, valid);
        let mut pooled = None;
        for (t, &s) in states.iter().enumerate() {
            let active = tape.shape(s).0;
            let wt = tape.slice_cols(weights, t, t + 1);
            let wt = tape.head_rows(wt, active);
            let term = tape.mul_col(s, wt);
            let term = tape.pad_rows(term, rows);
            pooled = Some(match pooled {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        (pooled.expect("at least one step"), weights)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HanParams {
    pub dims: HanDims,
    pub vocab_size: usize,
    pub embedding: ParamId,
    pub word_forward: GruParams,
    pub word_backward: GruParams,
    pub word_attention: AttentionParams,
    pub comment_forward: GruParams,
    pub comment_backward: GruParams,
    pub comment_attention: AttentionParams,
    pub social_weight: ParamId,
    pub social_bias: ParamId,
}

impl HanParams {
    pub fn init<R: Rng>(store: &mut ParamStore, rng: &mut R, vocab_size: usize, dims: HanDims) -> Self {
        let embedding = store.add(
            "han.embedding",
            ParamGroup::Text,
            uniform(rng, (vocab_size, dims.embedding), 0.05),
        );
        let word_forward = GruParams::init(store, rng, "han.word_fwd", dims.embedding, dims.word_hidden);
        let word_backward = GruParams::init(store, rng, "han.word_bwd", dims.embedding, dims.word_hidden);
        let word_attention = AttentionParams::init(store, rng, "han.word_attn", dims.comment_width());
        let cw = dims.comment_width();
        let comment_forward = GruParams::init(store, rng, "han.comment_fwd", cw, dims.comment_hidden);
        let comment_backward = GruParams::init(store, rng, "han.comment_bwd", cw, dims.comment_hidden);
        let comment_attention = AttentionParams::init(store, rng, "han.comment_attn", dims.text_width());
        let social_weight = store.add("han.social_weight", ParamGroup::Text, fan_in_uniform(rng, 2, dims.social));
        let social_bias = store.add("han.social_bias", ParamGroup::Text, Array2::zeros((1, dims.social)));
        Self {
            dims,
            vocab_size,
            embedding,
            word_forward,
            word_backward,
            word_attention,
            comment_forward,
            comment_backward,
            comment_attention,
            social_weight,
            social_bias,
        }
    }
}

/// Tape handles for one encoded batch.
#[derive(Debug, Clone)]
pub struct BatchEncoding {
    /// All (truncated) comments of the batch, session after session.
    pub comment_vectors: Var,
    /// `comment_offsets[b]..comment_offsets[b+1]` are session `b`'s rows.
    pub comment_offsets: Vec<usize>,
    pub word_attention: Var,
    pub comment_attention: Var,
    pub text: Var,
    pub social: Var,
}

pub fn social_inputs(session: &Session) -> [f64; 2] {
    [(session.likes as f64).ln_1p(), (session.shares as f64).ln_1p()]
}

/// Comments the encoder actually reads, after truncation.
pub fn encoded_comments<'a>(session: &'a Session, dims: &HanDims) -> &'a [Comment] {
    let n = session.comments.len().min(dims.max_comments);
    &session.comments[..n]
}

/// Rows sorted by length, longest first (stable), for packed recurrences.
struct Packing {
    /// `order[k]` is the original row at sorted position `k`.
    order: Vec<usize>,
    /// `position[i]` is the sorted position of original row `i`.
    position: Vec<usize>,
    /// Number of rows still active at each step.
    active: Vec<usize>,
    /// `valid[[k, t]]` for sorted row `k`.
    valid: Array2<bool>,
}

impl Packing {
    fn new(lengths: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(lengths[i]));
        let mut position = vec![0; lengths.len()];
        for (k, &i) in order.iter().enumerate() {
            position[i] = k;
        }
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let active = (0..steps).map(|t| lengths.iter().filter(|&&l| l > t).count()).collect();
        let valid = Array2::from_shape_fn((lengths.len(), steps), |(k, t)| t < lengths[order[k]]);
        Self {
            order,
            position,
            active,
            valid,
        }
    }

    /// Puts sorted rows back in original order.
    fn unsort(&self, tape: &mut Tape, v: Var) -> Var {
        if self.order.iter().enumerate().all(|(k, &i)| k == i) {
            return v;
        }
        tape.gather_rows(v, self.position.iter().map(|&k| Some(k)).collect())
    }
}

fn bigru(tape: &mut Tape, bound: &Bound, fwd: &GruParams, bwd: &GruParams, inputs: &[Var]) -> Vec<Var> {
    let f = fwd.run(tape, bound, inputs, false);
    let b = bwd.run(tape, bound, inputs, true);
    f.into_iter()
        .zip(b)
        .map(|(f, b)| tape.concat_cols(&[f, b]))
        .collect()
}

/// Encodes a batch of sessions on `tape`.
pub fn encode_batch(
    tape: &mut Tape,
    bound: &Bound,
    params: &HanParams,
    sessions: &[&Session],
) -> Result<BatchEncoding> {
    assert!(!sessions.is_empty(), "encode_batch on empty batch");
    let dims = &params.dims;
    let mut offsets = vec![0];
    let mut token_rows: Vec<&[usize]> = Vec::new();
    for s in sessions {
        for c in encoded_comments(s, dims) {
            if let Some(&bad) = c.tokens.iter().find(|&&t| t >= params.vocab_size) {
                return Err(UcdError::TokenOutOfRange {
                    id: bad,
                    vocab_size: params.vocab_size,
                });
            }
            let n = c.tokens.len().min(dims.max_tokens);
            token_rows.push(&c.tokens[..n]);
        }
        offsets.push(token_rows.len());
    }

    // word level
    let lengths: Vec<usize> = token_rows.iter().map(|t| t.len()).collect();
    let pack = Packing::new(&lengths);
    let embedding = bound.var(params.embedding);
    let inputs: Vec<Var> = pack
        .active
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let idx = pack.order[..n].iter().map(|&r| Some(token_rows[r][t])).collect();
            tape.gather_rows(embedding, idx)
        })
        .collect();
    let states = bigru(tape, bound, &params.word_forward, &params.word_backward, &inputs);
    let (pooled, weights) = params.word_attention.pool(tape, bound, &states, &pack.valid);
    let comment_vectors = pack.unsort(tape, pooled);
    let word_attention = pack.unsort(tape, weights);

    // comment level
    let counts: Vec<usize> = offsets.windows(2).map(|w| w[1] - w[0]).collect();
    let pack = Packing::new(&counts);
    let inputs: Vec<Var> = pack
        .active
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let idx = pack.order[..n].iter().map(|&b| Some(offsets[b] + i)).collect();
            tape.gather_rows(comment_vectors, idx)
        })
        .collect();
    let states = bigru(tape, bound, &params.comment_forward, &params.comment_backward, &inputs);
    let (pooled, weights) = params.comment_attention.pool(tape, bound, &states, &pack.valid);
    let text = pack.unsort(tape, pooled);
    let comment_attention = pack.unsort(tape, weights);

    // social content
    let social_in = Array2::from_shape_fn((sessions.len(), 2), |(b, j)| social_inputs(sessions[b])[j]);
    let social_in = tape.leaf(social_in);
    let sw = bound.var(params.social_weight);
    let sb = bound.var(params.social_bias);
    let social = tape.matmul(social_in, sw);
    let social = tape.add_row(social, sb);

    Ok(BatchEncoding {
        comment_vectors,
        comment_offsets: offsets,
        word_attention,
        comment_attention,
        text,
        social,
    })
}

/// Plain-array view of one encoded session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEncoding {
    pub comment_vectors: Array2<f64>,
    pub word_attention_weights: Vec<Array1<f64>>,
    pub comment_attention_weights: Array1<f64>,
    pub text_vector: Array1<f64>,
    pub social_vector: Array1<f64>,
    pub combined: Array1<f64>,
}

pub fn encode_session(session: &Session, store: &ParamStore, params: &HanParams) -> Result<SessionEncoding> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let enc = encode_batch(&mut tape, &bound, params, &[session])?;
    Ok(read_session(&tape, &enc, session, &params.dims, 0))
}

/// Extracts session `b` of a batch encoding.
pub fn read_session(tape: &Tape, enc: &BatchEncoding, session: &Session, dims: &HanDims, b: usize) -> SessionEncoding {
    let (start, end) = (enc.comment_offsets[b], enc.comment_offsets[b + 1]);
    let cv = tape.value(enc.comment_vectors).slice(ndarray::s![start..end, ..]).to_owned();
    let wa = tape.value(enc.word_attention);
    let word_attention_weights = encoded_comments(session, dims)
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let n = c.tokens.len().min(dims.max_tokens);
            wa.row(start + i).slice(ndarray::s![..n]).to_owned()
        })
        .collect();
    let comment_attention_weights = tape
        .value(enc.comment_attention)
        .row(b)
        .slice(ndarray::s![..end - start])
        .to_owned();
    let text_vector = tape.value(enc.text).row(b).to_owned();
    let social_vector = tape.value(enc.social).row(b).to_owned();
    let combined = ndarray::concatenate(ndarray::Axis(0), &[text_vector.view(), social_vector.view()])
        .expect("1-d concat");
    SessionEncoding {
        comment_vectors: cv,
        word_attention_weights,
        comment_attention_weights,
        text_vector,
        social_vector,
        combined,
    }
}

/// Word-level pass for a single comment: `(states L×2d_w, comment vector)`.
pub fn encode_words(comment: &Comment, store: &ParamStore, params: &HanParams) -> Result<(Array2<f64>, Array1<f64>, Array1<f64>)> {
    if comment.tokens.is_empty() {
        return Err(UcdError::InvalidArgument("comment has no tokens".into()));
    }
    if let Some(&bad) = comment.tokens.iter().find(|&&t| t >= params.vocab_size) {
        return Err(UcdError::TokenOutOfRange {
            id: bad,
            vocab_size: params.vocab_size,
        });
    }
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let n = comment.tokens.len().min(params.dims.max_tokens);
    let valid = Array2::from_elem((1, n), true);
    let embedding = bound.var(params.embedding);
    let inputs: Vec<Var> = (0..n)
        .map(|t| tape.gather_rows(embedding, vec![Some(comment.tokens[t])]))
        .collect();
    let states = bigru(&mut tape, &bound, &params.word_forward, &params.word_backward, &inputs);
    let (pooled, weights) = params.word_attention.pool(&mut tape, &bound, &states, &valid);
    let mut state_matrix = Array2::zeros((n, params.dims.comment_width()));
    for (t, &s) in states.iter().enumerate() {
        state_matrix.row_mut(t).assign(&tape.value(s).row(0));
    }
    Ok((
        state_matrix,
        tape.value(pooled).row(0).to_owned(),
        tape.value(weights).row(0).to_owned(),
    ))
}

/// Attention weights of one session, as exported for case studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub session_id: String,
    pub comments: Vec<CommentAttention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentAttention {
    pub weight: f64,
    pub tokens: Vec<String>,
    pub word_weights: Vec<f64>,
}

pub fn attention_export(
    session: &Session,
    enc: &SessionEncoding,
    vocabulary: &crate::data::Vocabulary,
    dims: &HanDims,
) -> AttentionExport {
    let comments = encoded_comments(session, dims)
        .iter()
        .zip(&enc.word_attention_weights)
        .zip(enc.comment_attention_weights.iter())
        .map(|((c, ww), &w)| CommentAttention {
            weight: w,
            tokens: c
                .tokens
                .iter()
                .take(ww.len())
                .map(|&t| vocabulary.token(t).unwrap_or("<oov>").to_string())
                .collect(),
            word_weights: ww.to_vec(),
        })
        .collect();
    AttentionExport {
        session_id: session.session_id.clone(),
        comments,
    }
}
