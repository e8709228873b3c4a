//! Metrics, the k-means baseline, repeated-run aggregation and embedding
//! export.

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_corpus, Corpus, Label, Session};
use crate::energy::{classify, classify_with_cutoff, Prediction};
use crate::error::{Result, UcdError};
use crate::trainer::{train, TrainConfig, TrainedModel};

/// Area under the ROC curve by the rank-sum statistic, ties at midrank.
pub fn auroc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(UcdError::Shape(format!("{} scores for {} labels", scores.len(), positives.len())));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(UcdError::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(UcdError::InvalidArgument("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positives[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn count(predictions: &[Prediction], labels: &[Label]) -> Confusion {
        let mut c = Confusion::default();
        for (p, l) in predictions.iter().zip(labels) {
            match (p.is_bullying(), l.is_bullying()) {
                (true, true) => c.true_positive += 1,
                (true, false) => c.false_positive += 1,
                (false, false) => c.true_negative += 1,
                (false, true) => c.false_negative += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Metrics of a single run, bullying as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
}

impl Metrics {
    pub fn from_predictions(scores: &[f64], predictions: &[Prediction], labels: &[Label]) -> Result<Metrics> {
        let positives: Vec<bool> = labels.iter().map(|l| l.is_bullying()).collect();
        let c = Confusion::count(predictions, labels);
        Ok(Metrics {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            auroc: auroc(scores, &positives)?,
        })
    }

    fn fields(&self) -> [f64; 4] {
        [self.precision, self.recall, self.f1, self.auroc]
    }

    fn from_fields(f: [f64; 4]) -> Metrics {
        Metrics {
            precision: f[0],
            recall: f[1],
            f1: f[2],
            auroc: f[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_runs: usize,
    pub mean: Metrics,
    /// Sample standard deviation; zero for a single run.
    pub std: Metrics,
    pub runs: Vec<Metrics>,
}

impl MetricsReport {
    pub fn aggregate(runs: Vec<Metrics>) -> MetricsReport {
        let n = runs.len();
        let mut mean = [0.0; 4];
        for r in &runs {
            for (m, v) in mean.iter_mut().zip(r.fields()) {
                *m += v / n as f64;
            }
        }
        let mut var = [0.0; 4];
        if n > 1 {
            for r in &runs {
                for ((s, v), m) in var.iter_mut().zip(r.fields()).zip(mean) {
                    *s += (v - m).powi(2) / (n - 1) as f64;
                }
            }
        }
        MetricsReport {
            n_runs: n,
            mean: Metrics::from_fields(mean),
            std: Metrics::from_fields(var.map(f64::sqrt)),
            runs,
        }
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>8} {:>8}\n", "metric", "mean", "std");
        for (name, m, d) in [
            ("precision", self.mean.precision, self.std.precision),
            ("recall", self.mean.recall, self.std.recall),
            ("f1", self.mean.f1, self.std.f1),
            ("auroc", self.mean.auroc, self.std.auroc),
        ] {
            s.push_str(&format!("{name:<10} {m:>8.4} {d:>8.4}\n"));
        }
        s.push_str(&format!("runs: {}\n", self.n_runs));
        s
    }
}

fn align<'a>(scores: &'a [(String, f64)], labels: &[(String, Label)]) -> Result<(Vec<f64>, Vec<Label>)> {
    if scores.len() != labels.len() {
        return Err(UcdError::InvalidArgument(format!(
            "{} scored sessions but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let by_id: HashMap<&str, Label> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    if by_id.len() != labels.len() {
        return Err(UcdError::InvalidArgument("duplicate session id among labels".into()));
    }
    let mut s = Vec::with_capacity(scores.len());
    let mut l = Vec::with_capacity(scores.len());
    for (id, score) in scores {
        let label = by_id
            .get(id.as_str())
            .ok_or_else(|| UcdError::InvalidArgument(format!("session {id} has a score but no label")))?;
        s.push(*score);
        l.push(*label);
    }
    Ok((s, l))
}

/// Metrics with the cutoff at the `tau`-quantile of the given scores.
pub fn evaluate(scores: &[(String, f64)], labels: &[(String, Label)], tau: f64) -> Result<MetricsReport> {
    let (s, l) = align(scores, labels)?;
    let preds = classify(&s, tau);
    Ok(MetricsReport::aggregate(vec![Metrics::from_predictions(&s, &preds, &l)?]))
}

/// Metrics with a fixed energy cutoff.
pub fn evaluate_with_cutoff(scores: &[(String, f64)], labels: &[(String, Label)], cutoff: f64) -> Result<MetricsReport> {
    let (s, l) = align(scores, labels)?;
    let preds = classify_with_cutoff(&s, cutoff);
    Ok(MetricsReport::aggregate(vec![Metrics::from_predictions(&s, &preds, &l)?]))
}

/// Ground truth for evaluation. Sessions without a label are an error.
pub fn session_labels(sessions: &[Session]) -> Result<Vec<(String, Label)>> {
    sessions
        .iter()
        .map(|s| {
            s.label_for_evaluation()
                .map(|l| (s.session_id.clone(), l))
                .ok_or_else(|| UcdError::InvalidArgument(format!("session {} has no label", s.session_id)))
        })
        .collect()
}

/// Energies, predictions and metrics of a trained model on held-out sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub session_ids: Vec<String>,
    pub energies: Vec<f64>,
    pub cutoff: f64,
    pub predictions: Vec<Prediction>,
}

impl ScoredSet {
    pub fn pairs(&self) -> Vec<(String, f64)> {
        self.session_ids.iter().cloned().zip(self.energies.iter().copied()).collect()
    }

    pub fn flagged(&self) -> usize {
        self.predictions.iter().filter(|p| p.is_bullying()).count()
    }
}

/// Scores `sessions`; labels are not consulted.
pub fn score_sessions(model: &TrainedModel, sessions: &[Session], tau: f64) -> Result<ScoredSet> {
    let energies = model.energies(sessions)?;
    let cutoff = model.cutoff(&energies, tau);
    Ok(ScoredSet {
        session_ids: sessions.iter().map(|s| s.session_id.clone()).collect(),
        predictions: classify_with_cutoff(&energies, cutoff),
        energies,
        cutoff,
    })
}

pub fn evaluate_model(model: &TrainedModel, test: &Corpus, tau: f64) -> Result<(ScoredSet, MetricsReport)> {
    let scored = score_sessions(model, &test.sessions, tau)?;
    let labels = session_labels(&test.sessions)?;
    let report = evaluate_with_cutoff(&scored.pairs(), &labels, scored.cutoff)?;
    Ok((scored, report))
}

// ---------------------------------------------------------------------------
// k-means baseline

/// Raw, unscaled per-session features: bag-of-words counts, likes,
/// shares, mean inter-arrival gap and the owner's graph features (zeros for
/// unknown owners or when there is no graph).
pub fn kmeans_features(corpus: &Corpus) -> Array2<f64> {
    let v = corpus.vocabulary.len();
    let g = corpus.graph.as_ref().map(|g| g.feature_dim()).unwrap_or(0);
    let width = v + 3 + g;
    let mut x = Array2::zeros((corpus.len(), width));
    for (i, s) in corpus.sessions.iter().enumerate() {
        for c in &s.comments {
            for &t in &c.tokens {
                if t < v {
                    x[[i, t]] += 1.0;
                }
            }
        }
        x[[i, v]] = s.likes as f64;
        x[[i, v + 1]] = s.shares as f64;
        let gaps = crate::data::inter_arrival_times(s);
        x[[i, v + 2]] = if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
        if let Some(graph) = &corpus.graph {
            if let Some(r) = graph.user_row(&s.owner_id) {
                x.row_mut(i).slice_mut(ndarray::s![v + 3..]).assign(&graph.features().row(r));
            }
        }
    }
    x
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k-means++ seeding; `None` when every point coincides with the first seed.
pub fn kmeans_pp_seeds<R: Rng>(x: &Array2<f64>, k: usize, rng: &mut R) -> Option<Vec<usize>> {
    let n = x.nrows();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(seeds[0]))).collect();
    while seeds.len() < k {
        let pick = WeightedIndex::new(&d2).ok()?.sample(rng);
        seeds.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    Some(seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

const LLOYD_MAX_ITERS: usize = 300;

/// Lloyd iterations from the given centroids until assignments stop
/// changing. An empty cluster keeps its previous centroid.
pub fn lloyd(x: &Array2<f64>, mut centroids: Array2<f64>) -> Clustering {
    let (n, k) = (x.nrows(), centroids.nrows());
    let nearest = |c: &Array2<f64>, i: usize| {
        (0..k)
            .map(|j| (j, sq_dist(x.row(i), c.row(j))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("k ≥ 1")
    };
    let mut assignments: Vec<usize> = (0..n).map(|i| nearest(&centroids, i).0).collect();
    for _ in 0..LLOYD_MAX_ITERS {
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &x.row(i);
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = &sums.row(j) / counts[j] as f64;
                centroids.row_mut(j).assign(&mean);
            }
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(&centroids, i).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centroids.row(assignments[i]))).sum();
    Clustering {
        assignments,
        centroids,
        inertia,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansBaseline {
    pub clustering: Clustering,
    /// Cluster labeled bullying: the smaller one, index 0 on a tie.
    pub bullying_cluster: usize,
    pub predictions: Vec<Prediction>,
    /// Distance to the non-bullying centroid minus distance to the bullying one.
    pub scores: Vec<f64>,
}

pub const KMEANS_RESTARTS: usize = 50;

pub fn kmeans_baseline(x: &Array2<f64>, seed: u64) -> Result<KMeansBaseline> {
    let n = x.nrows();
    if n < 2 {
        return Err(UcdError::InvalidArgument("k-means baseline needs at least two sessions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..KMEANS_RESTARTS {
        let Some(seeds) = kmeans_pp_seeds(x, 2, &mut rng) else {
            // every point identical
            return Ok(KMeansBaseline {
                clustering: Clustering {
                    assignments: vec![0; n],
                    centroids: Array2::from_shape_fn((2, x.ncols()), |(_, j)| x[[0, j]]),
                    inertia: 0.0,
                },
                bullying_cluster: 1,
                predictions: vec![Prediction::NonBullying; n],
                scores: vec![0.0; n],
            });
        };
        let init = Array2::from_shape_fn((2, x.ncols()), |(j, c)| x[[seeds[j], c]]);
        let c = lloyd(x, init);
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    let clustering = best.expect("at least one restart");
    let size0 = clustering.assignments.iter().filter(|&&a| a == 0).count();
    let bullying_cluster = if size0 <= n - size0 { 0 } else { 1 };
    let clean = 1 - bullying_cluster;
    let predictions = clustering
        .assignments
        .iter()
        .map(|&a| if a == bullying_cluster { Prediction::Bullying } else { Prediction::NonBullying })
        .collect();
    let scores = (0..n)
        .map(|i| {
            sq_dist(x.row(i), clustering.centroids.row(clean)).sqrt()
                - sq_dist(x.row(i), clustering.centroids.row(bullying_cluster)).sqrt()
        })
        .collect();
    Ok(KMeansBaseline {
        clustering,
        bullying_cluster,
        predictions,
        scores,
    })
}

// ---------------------------------------------------------------------------
// Repeated runs

/// Outcome of one train/evaluate cycle.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub metrics: Metrics,
    pub baseline: Metrics,
    pub scored: ScoredSet,
    pub model: TrainedModel,
}

/// Split with `seed`, train with `seed`, evaluate on the held-out part; the
/// k-means baseline is fitted on the same held-out sessions.
pub fn single_run(corpus: &Corpus, config: &TrainConfig, seed: u64) -> Result<RunOutcome> {
    let (train_set, test_set) = split_corpus(corpus, config.train_fraction, seed)?;
    let cfg = TrainConfig { seed, ..config.clone() };
    let model = train(&train_set, &cfg)?;
    let (scored, report) = evaluate_model(&model, &test_set, cfg.tau)?;
    let km = kmeans_baseline(&kmeans_features(&test_set), seed)?;
    let labels: Vec<Label> = session_labels(&test_set.sessions)?.into_iter().map(|(_, l)| l).collect();
    let baseline = Metrics::from_predictions(&km.scores, &km.predictions, &labels)?;
    Ok(RunOutcome {
        seed,
        metrics: report.mean,
        baseline,
        scored,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct RepeatedRuns {
    pub report: MetricsReport,
    pub baseline: MetricsReport,
    pub outcomes: Vec<RunOutcome>,
}

/// Runs seeds `config.seed + i` for `i < n_runs`, in parallel; results are
/// ordered by seed.
pub fn repeated_runs(corpus: &Corpus, config: &TrainConfig, n_runs: usize) -> Result<RepeatedRuns> {
    if n_runs == 0 {
        return Err(UcdError::InvalidArgument("n_runs must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let outcomes = run_parallel(&seeds, |s| single_run(corpus, config, *s))?;
    Ok(RepeatedRuns {
        report: MetricsReport::aggregate(outcomes.iter().map(|o| o.metrics).collect()),
        baseline: MetricsReport::aggregate(outcomes.iter().map(|o| o.baseline).collect()),
        outcomes,
    })
}

/// Maps `f` over `items` on scoped threads, preserving order.
pub fn run_parallel<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<U>>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

// ---------------------------------------------------------------------------
// Embedding export

/// CSV with header `session_id,label,x0,…`; values printed with 17
/// significant digits.
pub fn export_embeddings(path: &Path, session_ids: &[String], labels: &[Option<Label>], reps: &Array2<f64>) -> Result<()> {
    if session_ids.len() != reps.nrows() || labels.len() != reps.nrows() {
        return Err(UcdError::Shape(format!(
            "{} ids, {} labels, {} rows",
            session_ids.len(),
            labels.len(),
            reps.nrows()
        )));
    }
    let err = |e| UcdError::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(err)?);
    write!(w, "session_id,label").map_err(err)?;
    for j in 0..reps.ncols() {
        write!(w, ",x{j}").map_err(err)?;
    }
    writeln!(w).map_err(err)?;
    for ((id, label), row) in session_ids.iter().zip(labels).zip(reps.outer_iter()) {
        write!(w, "{},{}", csv_field(id), label.map(Label::as_str).unwrap_or("")).map_err(err)?;
        for v in row {
            write!(w, ",{v:.16e}").map_err(err)?;
        }
        writeln!(w).map_err(err)?;
    }
    w.flush().map_err(err)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Exported embeddings read back.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub session_ids: Vec<String>,
    pub labels: Vec<Option<Label>>,
    pub values: Array2<f64>,
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| UcdError::io(path, e))?;
    let parse_err = |line: usize, message: String| UcdError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?
        .map_err(|e| UcdError::io(path, e))?;
    let width = header.split(',').count().saturating_sub(2);
    let (mut ids, mut labels, mut data) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| UcdError::io(path, e))?;
        let lineno = i + 2;
        let (id, rest) = split_csv_id(&line).ok_or_else(|| parse_err(lineno, "malformed row".into()))?;
        let fields: Vec<&str> = rest.split(',').collect();
        if fields.len() != width + 1 {
            return Err(parse_err(lineno, format!("expected {} value columns", width)));
        }
        labels.push(match fields[0] {
            "" => None,
            "bullying" => Some(Label::Bullying),
            "non-bullying" => Some(Label::NonBullying),
            other => return Err(parse_err(lineno, format!("unknown label {other:?}"))),
        });
        for f in &fields[1..] {
            data.push(f.parse::<f64>().map_err(|e| parse_err(lineno, e.to_string()))?);
        }
        ids.push(id);
    }
    let values = Array2::from_shape_vec((ids.len(), width), data).map_err(|e| UcdError::Shape(e.to_string()))?;
    Ok(EmbeddingTable {
        session_ids: ids,
        labels,
        values,
    })
}

fn split_csv_id(line: &str) -> Option<(String, &str)> {
    if let Some(body) = line.strip_prefix('"') {
        let mut id = String::new();
        let mut chars = body.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c == '"' {
                if matches!(chars.peek(), Some((_, '"'))) {
                    id.push('"');
                    chars.next();
                } else {
                    return body[i + 1..].strip_prefix(',').map(|rest| (id, rest));
                }
            } else {
                id.push(c);
            }
        }
        None
    } else {
        line.split_once(',').map(|(a, b)| (a.to_string(), b))
    }
}

/// Mean silhouette coefficient of a two-or-more-way partition, Euclidean.
pub fn silhouette(x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(UcdError::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let k = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let sizes: Vec<usize> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(UcdError::SingleClass);
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sq_dist(x.row(i), x.row(j)).sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Representations of each session of `corpus` under `model`.
pub fn session_representations(model: &TrainedModel, corpus: &Corpus) -> Result<(Vec<String>, Vec<Option<Label>>, Array2<f64>)> {
    let reps = model.representations(&corpus.sessions)?;
    Ok((
        corpus.sessions.iter().map(|s| s.session_id.clone()).collect(),
        corpus.sessions.iter().map(Session::label_for_evaluation).collect(),
        reps,
    ))
}
