//! Joint training of the text encoder, graph auto-encoder, membership
//! network and inter-arrival regressor.
//!
//! Per batch of `N` sessions the objective is
//!
//! ```text
//! J = Σₙ Σᵢ ½ (f(cᵢₙ) − yᵢₙ)²  +  λ₁/N Σₙ E(ssₙ)  +  λ₂ · ½‖A − Â‖²  +  λ₃ Σₖ Σⱼ 1/Σ̂ₖⱼⱼ
//! ```
//!
//! with `ss = [z, v, p]`, GMM statistics estimated from the batch's own
//! memberships, and the graph term evaluated on the full graph.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{Corpus, Session, SocialGraph, Vocabulary};
use crate::energy::{self, gmm_on_tape, GmmState, MembershipNet, COVARIANCE_JITTER};
use crate::error::{Result, UcdError};
use crate::graph::{encode_graph_on_tape, GaeParams, GraphInputs};
use crate::params::{Adam, AdamConfig, Bound, ParamGroup, ParamStore};
use crate::temporal::{session_targets_raw, TargetTransform, TemporalParams};
use crate::text::{encode_batch, HanDims, HanParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub no_text: bool,
    pub no_time: bool,
    pub no_graph: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "UCD")]
    Full,
    #[serde(rename = "UCDXtext")]
    NoText,
    #[serde(rename = "UCDXtime")]
    NoTime,
    #[serde(rename = "UCDXgraph")]
    NoGraph,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoText, Variant::NoTime, Variant::NoGraph];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "UCD",
            Variant::NoText => "UCDXtext",
            Variant::NoTime => "UCDXtime",
            Variant::NoGraph => "UCDXgraph",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the classification cutoff comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// `τ`-quantile of the energies being classified (test energies).
    #[default]
    TestQuantile,
    /// `τ`-quantile of the training energies, applied as an absolute cutoff.
    TrainQuantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub han: HanDims,
    pub gae_hidden: usize,
    pub gae_embedding: usize,
    pub membership_hidden: Vec<usize>,
    pub temporal_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            han: HanDims::default(),
            gae_hidden: 32,
            gae_embedding: 16,
            membership_hidden: vec![16],
            temporal_hidden: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub k: usize,
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub ablations: Ablations,
    pub dims: ModelDims,
    pub jitter: f64,
    pub threshold: ThresholdMode,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1e-4,
            lambda2: 0.01,
            lambda3: 1e-9,
            k: 5,
            tau: 0.65,
            batch_size: 32,
            epochs: 50,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            ablations: Ablations::default(),
            dims: ModelDims::default(),
            jitter: COVARIANCE_JITTER,
            threshold: ThresholdMode::TestQuantile,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UcdError::InvalidArgument(m));
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must be in (0, 1), got {}", self.tau));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if !(self.jitter > 0.0) {
            return bad("jitter must be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.ablations.no_text && self.ablations.no_graph {
            return bad("no_text and no_graph together leave only the like/share vector".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn uses_graph(&self) -> bool {
        !self.ablations.no_graph
    }

    pub fn variant(&self) -> Option<Variant> {
        match (self.ablations.no_text, self.ablations.no_time, self.ablations.no_graph) {
            (false, false, false) => Some(Variant::Full),
            (true, false, false) => Some(Variant::NoText),
            (false, true, false) => Some(Variant::NoTime),
            (false, false, true) => Some(Variant::NoGraph),
            _ => None,
        }
    }
}

/// Config with one component switched off.
pub fn ablate(config: &TrainConfig, variant: Variant) -> TrainConfig {
    let mut c = config.clone();
    c.ablations = match variant {
        Variant::Full => Ablations::default(),
        Variant::NoText => Ablations {
            no_text: true,
            ..Ablations::default()
        },
        Variant::NoTime => Ablations {
            no_time: true,
            ..Ablations::default()
        },
        Variant::NoGraph => Ablations {
            no_graph: true,
            ..Ablations::default()
        },
    };
    c
}

/// Unweighted objective terms plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total_j: f64,
    pub time_term: f64,
    pub energy_term: f64,
    pub graph_term: f64,
    pub penalty_term: f64,
}

impl LossReport {
    pub fn recombine(&self, config: &TrainConfig) -> f64 {
        self.time_term
            + config.lambda1 * self.energy_term
            + config.lambda2 * self.graph_term
            + config.lambda3 * self.penalty_term
    }

    fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut m = LossReport::default();
        for r in reports {
            m.total_j += r.total_j / n;
            m.time_term += r.time_term / n;
            m.energy_term += r.energy_term / n;
            m.graph_term += r.graph_term / n;
            m.penalty_term += r.penalty_term / n;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub batches: usize,
    pub mean: LossReport,
}

/// Learned user embeddings, frozen after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEmbeddings {
    pub user_ids: Vec<String>,
    pub z: Array2<f64>,
}

impl UserEmbeddings {
    fn rows_for(&self, sessions: &[&Session]) -> Vec<Option<usize>> {
        let index: std::collections::HashMap<&str, usize> =
            self.user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        sessions.iter().map(|s| index.get(s.owner_id.as_str()).copied()).collect()
    }
}

/// All parameter groups plus their layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub store: ParamStore,
    pub han: HanParams,
    pub gae: Option<GaeParams>,
    pub membership: MembershipNet,
    pub temporal: TemporalParams,
    pub ablations: Ablations,
}

impl Model {
    pub fn init(vocab_size: usize, graph_features: Option<usize>, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Model> {
        let mut store = ParamStore::new();
        let dims = &config.dims;
        let han = HanParams::init(&mut store, rng, vocab_size, dims.han);
        let gae = match (config.uses_graph(), graph_features) {
            (true, Some(d)) => Some(GaeParams::init(&mut store, rng, d, dims.gae_hidden, dims.gae_embedding)),
            (true, None) => return Err(UcdError::MissingGraph("the graph encoder needs a social graph".into())),
            (false, _) => None,
        };
        let width = Self::representation_width_for(config);
        let membership = MembershipNet::init(&mut store, rng, width, &dims.membership_hidden, config.k);
        let temporal = TemporalParams::init(&mut store, rng, dims.han.comment_width(), dims.temporal_hidden);
        Ok(Model {
            store,
            han,
            gae,
            membership,
            temporal,
            ablations: config.ablations,
        })
    }

    pub fn representation_width_for(config: &TrainConfig) -> usize {
        let d = &config.dims;
        let mut w = d.han.social;
        if config.uses_graph() {
            w += d.gae_embedding;
        }
        if !config.ablations.no_text {
            w += d.han.text_width();
        }
        w
    }

    pub fn representation_width(&self) -> usize {
        self.membership.input_width
    }
}

/// The graph-side input to a forward pass.
enum GraphSource<'a> {
    /// Re-encode `Z` on the tape (training).
    Live {
        inputs: &'a GraphInputs,
        graph: &'a SocialGraph,
    },
    /// Use frozen embeddings (scoring).
    Frozen(&'a UserEmbeddings),
    None,
}

struct Forward {
    ss: Var,
    comment_vectors: Var,
    graph_loss: Option<Var>,
}

fn forward(tape: &mut Tape, bound: &Bound, model: &Model, sessions: &[&Session], graph: &GraphSource<'_>) -> Result<Forward> {
    let enc = encode_batch(tape, bound, &model.han, sessions)?;
    let mut parts = Vec::with_capacity(3);
    let mut graph_loss = None;
    match graph {
        GraphSource::Live { inputs, graph } => {
            let gae = model.gae.as_ref().expect("graph params present when a graph is used");
            let gv = encode_graph_on_tape(tape, bound, gae, inputs);
            let rows = sessions.iter().map(|s| graph.user_row(&s.owner_id)).collect();
            parts.push(tape.gather_rows(gv.z, rows));
            graph_loss = Some(gv.loss);
        }
        GraphSource::Frozen(emb) => {
            let z = tape.leaf(emb.z.clone());
            parts.push(tape.gather_rows(z, emb.rows_for(sessions)));
        }
        GraphSource::None => {}
    }
    if !model.ablations.no_text {
        parts.push(enc.text);
    }
    parts.push(enc.social);
    let ss = tape.concat_cols(&parts);
    Ok(Forward {
        ss,
        comment_vectors: enc.comment_vectors,
        graph_loss,
    })
}

/// One batch objective on a fresh tape.
pub struct BatchObjective {
    pub tape: Tape,
    pub bound: Bound,
    pub total: Var,
    pub report: LossReport,
}

pub struct ObjectiveInputs<'a> {
    pub graph: Option<(&'a GraphInputs, &'a SocialGraph)>,
    pub transform: TargetTransform,
}

pub fn batch_objective(model: &Model, config: &TrainConfig, sessions: &[&Session], inputs: &ObjectiveInputs<'_>) -> Result<BatchObjective> {
    let mut tape = Tape::new();
    let bound = model.store.bind(&mut tape);
    let source = match (model.gae.is_some(), inputs.graph) {
        (true, Some((gi, g))) => GraphSource::Live { inputs: gi, graph: g },
        (true, None) => return Err(UcdError::MissingGraph("batch objective needs the social graph".into())),
        (false, _) => GraphSource::None,
    };
    let fwd = forward(&mut tape, &bound, model, sessions, &source)?;
    if tape.value(fwd.ss).iter().any(|v| !v.is_finite()) {
        // the caller knows the epoch and batch
        return Err(UcdError::NonFiniteLoss {
            term: "representation",
            epoch: 0,
            batch: 0,
        });
    }
    let n = sessions.len();

    let m = model.membership.memberships_on_tape(&mut tape, &bound, fwd.ss);
    let gmm = gmm_on_tape(&mut tape, fwd.ss, m, config.jitter)?;
    let e_sum = tape.sum_all(gmm.energies);
    let energy_term = tape.scale(e_sum, 1.0 / n as f64);

    let mut terms: Vec<Var> = Vec::with_capacity(4);
    let mut report = LossReport::default();

    if !config.ablations.no_time {
        let preds = model.temporal.predict_on_tape(&mut tape, &bound, fwd.comment_vectors);
        let targets: Array1<f64> = sessions
            .iter()
            .flat_map(|s| session_targets_raw(s, &config.dims.han))
            .map(|dt| inputs.transform.apply(dt))
            .collect();
        let targets = tape.leaf(targets.insert_axis(Axis(1)));
        let diff = tape.sub(preds, targets);
        let sq = tape.mul(diff, diff);
        let s = tape.sum_all(sq);
        let time_term = tape.scale(s, 0.5);
        report.time_term = tape.scalar(time_term);
        terms.push(time_term);
    }

    report.energy_term = tape.scalar(energy_term);
    if config.lambda1 != 0.0 {
        terms.push(tape.scale(energy_term, config.lambda1));
    }
    if let Some(g) = fwd.graph_loss {
        report.graph_term = tape.scalar(g);
        if config.lambda2 != 0.0 {
            terms.push(tape.scale(g, config.lambda2));
        }
    }
    report.penalty_term = tape.scalar(gmm.penalty);
    if config.lambda3 != 0.0 {
        terms.push(tape.scale(gmm.penalty, config.lambda3));
    }

    let total = match terms.split_first() {
        None => tape.constant_scalar(0.0),
        Some((&first, rest)) => rest.iter().fold(first, |acc, &t| tape.add(acc, t)),
    };
    report.total_j = tape.scalar(total);
    Ok(BatchObjective {
        tape,
        bound,
        total,
        report,
    })
}

fn check_finite(report: &LossReport, epoch: usize, batch: usize) -> Result<()> {
    for (term, v) in [
        ("time_term", report.time_term),
        ("energy_term", report.energy_term),
        ("graph_term", report.graph_term),
        ("penalty_term", report.penalty_term),
        ("total_j", report.total_j),
    ] {
        if !v.is_finite() {
            return Err(UcdError::NonFiniteLoss { term, epoch, batch });
        }
    }
    Ok(())
}

/// Session index batches for one epoch; a trailing batch smaller than `k`
/// is merged into the one before it.
pub fn make_batches(order: &[usize], batch_size: usize, k: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().map(|b| b.len() < k).unwrap_or(false) {
        let last = batches.pop().expect("len > 1");
        batches.last_mut().expect("len > 0").extend(last);
    }
    batches
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub model: Model,
    pub gmm: GmmState,
    pub transform: TargetTransform,
    pub vocabulary: Vocabulary,
    pub user_embeddings: Option<UserEmbeddings>,
    /// Energies of the training sessions under the frozen mixture.
    pub train_energies: Vec<f64>,
    pub steps: Vec<LossReport>,
    pub epochs: Vec<EpochReport>,
}

/// Trains on every session of `corpus`.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(UcdError::InvalidArgument("cannot train on an empty corpus".into()));
    }
    if config.uses_graph() && corpus.graph.is_none() {
        let what = if config.ablations.no_text {
            "UCDXtext needs a social graph"
        } else {
            "corpus has no social graph; use the UCDXgraph variant"
        };
        return Err(UcdError::MissingGraph(what.into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph = if config.uses_graph() { corpus.graph.as_deref() } else { None };
    let mut model = Model::init(corpus.vocabulary.len(), graph.map(SocialGraph::feature_dim), config, &mut rng)?;
    let graph_inputs = graph.map(GraphInputs::new);
    let inputs = ObjectiveInputs {
        graph: graph_inputs.as_ref().zip(graph),
        transform: TargetTransform::fit(corpus.sessions.iter(), &config.dims.han),
    };
    let mut adam = Adam::new(&model.store, config.adam());
    let mut steps = Vec::new();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let batches = make_batches(&order, config.batch_size, config.k);
        let mut epoch_reports = Vec::with_capacity(batches.len());
        for (b, idx) in batches.iter().enumerate() {
            let sessions: Vec<&Session> = idx.iter().map(|&i| &corpus.sessions[i]).collect();
            let obj = batch_objective(&model, config, &sessions, &inputs).map_err(|e| match e {
                UcdError::NonFiniteLoss { term, .. } => UcdError::NonFiniteLoss { term, epoch, batch: b },
                other => other,
            })?;
            check_finite(&obj.report, epoch, b)?;
            let grads = obj.tape.backward(obj.total);
            let grads = obj.bound.collect(&model.store, grads);
            if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(UcdError::NonFiniteLoss {
                    term: "gradient",
                    epoch,
                    batch: b,
                });
            }
            adam.update(&mut model.store, &grads);
            epoch_reports.push(obj.report);
        }
        epochs.push(EpochReport {
            epoch,
            batches: epoch_reports.len(),
            mean: LossReport::mean(&epoch_reports),
        });
        steps.extend(epoch_reports);
    }

    let user_embeddings = match (&model.gae, graph, &graph_inputs) {
        (Some(gae), Some(g), Some(gi)) => {
            let mut tape = Tape::new();
            let bound = model.store.bind(&mut tape);
            let gv = encode_graph_on_tape(&mut tape, &bound, gae, gi);
            Some(UserEmbeddings {
                user_ids: g.users().to_vec(),
                z: tape.value(gv.z).clone(),
            })
        }
        _ => None,
    };

    let mut trained = TrainedModel {
        config: config.clone(),
        model,
        gmm: GmmState {
            phi: Array1::zeros(0),
            mu: Array2::zeros((0, 0)),
            sigma: vec![],
            degenerate: vec![],
        },
        transform: inputs.transform,
        vocabulary: (*corpus.vocabulary).clone(),
        user_embeddings,
        train_energies: vec![],
        steps,
        epochs,
    };
    let reps = trained.representations(&corpus.sessions)?;
    let m = energy::memberships(&reps, &trained.model.store, &trained.model.membership);
    trained.gmm = energy::estimate_gmm(reps.view(), m.view(), config.jitter)?;
    trained.train_energies = energy::energies(reps.view(), &trained.gmm)?;
    Ok(trained)
}

const SCORING_BATCH: usize = 64;

impl TrainedModel {
    pub fn vocabulary(&self) -> Arc<Vocabulary> {
        Arc::new(self.vocabulary.clone())
    }

    /// `ss` for each session, using the frozen user embeddings.
    pub fn representations(&self, sessions: &[Session]) -> Result<Array2<f64>> {
        let width = self.model.representation_width();
        let mut out = Array2::zeros((sessions.len(), width));
        let source = match &self.user_embeddings {
            Some(e) => GraphSource::Frozen(e),
            None if self.model.gae.is_some() => {
                return Err(UcdError::MissingGraph("model has no stored user embeddings".into()))
            }
            None => GraphSource::None,
        };
        for (chunk_idx, chunk) in sessions.chunks(SCORING_BATCH).enumerate() {
            let refs: Vec<&Session> = chunk.iter().collect();
            let mut tape = Tape::new();
            let bound = self.model.store.bind(&mut tape);
            let fwd = forward(&mut tape, &bound, &self.model, &refs, &source)?;
            let start = chunk_idx * SCORING_BATCH;
            out.slice_mut(ndarray::s![start..start + chunk.len(), ..])
                .assign(tape.value(fwd.ss));
        }
        Ok(out)
    }

    pub fn energies(&self, sessions: &[Session]) -> Result<Vec<f64>> {
        let reps = self.representations(sessions)?;
        energy::energies(reps.view(), &self.gmm)
    }

    /// Classification cutoff for the given energies under the configured mode.
    pub fn cutoff(&self, energies: &[f64], tau: f64) -> f64 {
        match self.config.threshold {
            ThresholdMode::TestQuantile => energy::quantile_cutoff(energies, tau),
            ThresholdMode::TrainQuantile => energy::quantile_cutoff(&self.train_energies, tau),
        }
    }

    /// Predicted vs. actual transformed gaps for one session.
    pub fn interval_predictions(&self, session: &Session) -> Result<Vec<(f64, f64)>> {
        let mut tape = Tape::new();
        let bound = self.model.store.bind(&mut tape);
        let enc = encode_batch(&mut tape, &bound, &self.model.han, &[session])?;
        let preds = self.model.temporal.predict_on_tape(&mut tape, &bound, enc.comment_vectors);
        let targets = session_targets_raw(session, &self.config.dims.han);
        Ok(tape
            .value(preds)
            .column(0)
            .iter()
            .zip(targets)
            .map(|(&p, t)| (self.transform.invert(p), t))
            .collect())
    }

    /// Mean per-session time loss in transformed space.
    pub fn session_time_loss(&self, session: &Session) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.model.store.bind(&mut tape);
        let enc = encode_batch(&mut tape, &bound, &self.model.han, &[session])?;
        let preds = self.model.temporal.predict_on_tape(&mut tape, &bound, enc.comment_vectors);
        let p: Vec<f64> = tape.value(preds).column(0).to_vec();
        crate::temporal::time_loss(&p, &session_targets_raw(session, &self.config.dims.han), &self.transform)
    }

    pub fn group_scalars(&self, group: ParamGroup) -> usize {
        self.model
            .store
            .iter()
            .filter(|(_, p)| p.group == group)
            .map(|(_, p)| p.value.len())
            .sum()
    }
}
