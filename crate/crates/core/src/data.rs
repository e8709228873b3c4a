//! Session and social-graph data model, file formats, tokenization and
//! train/test splitting.
//!
//! Sessions are read from line-delimited JSON, one session per line:
//!
//! ```text
//! {"session_id":"s1","owner_id":"u3","likes":12,"shares":1,"label":"bullying",
//!  "comments":[{"author_id":"u9","timestamp":4.5,"text":"you are a loser"}]}
//! ```
//!
//! `label` and `posted_at` are optional. When `posted_at` is present, comment
//! timestamps are taken as absolute and re-expressed relative to it.
//!
//! The graph file is plain text: a `users <U> features <D>` header, `U` node
//! lines `user_id f1 … fD`, then `src dst` edge lines.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UcdError};

pub type TokenId = usize;

/// Id shared by every out-of-vocabulary token.
pub const OOV: TokenId = 0;
pub const OOV_TOKEN: &str = "<oov>";

static LABEL_READS: AtomicUsize = AtomicUsize::new(0);

/// Number of times any session label has been read since process start.
///
/// Training code must never move this counter; tests snapshot it around
/// `train` calls.
pub fn label_reads() -> usize {
    LABEL_READS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Bullying,
    NonBullying,
}

impl Label {
    pub fn is_bullying(self) -> bool {
        matches!(self, Label::Bullying)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bullying => "bullying",
            Label::NonBullying => "non-bullying",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comment {
    pub tokens: Vec<TokenId>,
    /// Seconds since session start.
    pub timestamp: f64,
    pub author_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub owner_id: String,
    /// Sorted by timestamp, never empty.
    pub comments: Vec<Comment>,
    pub likes: u64,
    pub shares: u64,
    label: Option<Label>,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        owner_id: impl Into<String>,
        mut comments: Vec<Comment>,
        likes: u64,
        shares: u64,
        label: Option<Label>,
    ) -> Result<Self> {
        let session_id = session_id.into();
        if comments.is_empty() {
            return Err(UcdError::InvalidArgument(format!(
                "session {session_id} has no comments"
            )));
        }
        if let Some(c) = comments
            .iter()
            .find(|c| !(c.timestamp >= 0.0) || !c.timestamp.is_finite())
        {
            return Err(UcdError::InvalidArgument(format!(
                "session {session_id} has invalid timestamp {}",
                c.timestamp
            )));
        }
        if comments.iter().any(|c| c.tokens.is_empty()) {
            return Err(UcdError::InvalidArgument(format!(
                "session {session_id} has an empty comment"
            )));
        }
        comments.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Ok(Self {
            session_id,
            owner_id: owner_id.into(),
            comments,
            likes,
            shares,
            label,
        })
    }

    /// The ground-truth label. Evaluation only; every call is counted by
    /// [`label_reads`].
    pub fn label_for_evaluation(&self) -> Option<Label> {
        LABEL_READS.fetch_add(1, Ordering::SeqCst);
        self.label
    }

    pub fn n_comments(&self) -> usize {
        self.comments.len()
    }

    pub fn to_record(&self) -> SessionRecord {
        SessionRecord {
            session_id: self.session_id.clone(),
            owner_id: self.owner_id.clone(),
            likes: self.likes,
            shares: self.shares,
            label: self.label,
            posted_at: None,
            comments: self
                .comments
                .iter()
                .map(|c| CommentRecord {
                    author_id: c.author_id.clone(),
                    timestamp: c.timestamp,
                    text: c.text.clone(),
                })
                .collect(),
        }
    }
}

/// `Δtᵢ = tᵢ − tᵢ₋₁` with `t₀ = 0`.
pub fn inter_arrival_times(session: &Session) -> Vec<f64> {
    let mut prev = 0.0;
    session
        .comments
        .iter()
        .map(|c| {
            let gap = c.timestamp - prev;
            prev = c.timestamp;
            gap
        })
        .collect()
}

/// One line of the sessions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub session_id: String,
    pub owner_id: String,
    pub likes: u64,
    pub shares: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posted_at: Option<f64>,
    pub comments: Vec<CommentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommentRecord {
    pub author_id: String,
    pub timestamp: f64,
    pub text: String,
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x2300..=0x23FF | 0x3030 | 0x303D)
}

fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32, 0x200D | 0xFE0E | 0xFE0F | 0x1F3FB..=0x1F3FF | 0xE0020..=0xE007F)
}

/// Lowercases and splits on whitespace and punctuation. Emoji (with any
/// joiners, variation selectors or skin-tone modifiers) become single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut emoji = String::new();
    let mut joining = false;
    for ch in text.chars() {
        if is_emoji_modifier(ch) && !emoji.is_empty() {
            emoji.push(ch);
            joining = ch == '\u{200D}';
            continue;
        }
        if is_emoji(ch) {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !joining && !emoji.is_empty() {
                tokens.push(std::mem::take(&mut emoji));
            }
            emoji.push(ch);
            joining = false;
            continue;
        }
        if !emoji.is_empty() {
            tokens.push(std::mem::take(&mut emoji));
            joining = false;
        }
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    if !emoji.is_empty() {
        tokens.push(emoji);
    }
    tokens
}

/// Token → id map. Id 0 is the shared out-of-vocabulary id; known tokens are
/// numbered by descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn build<'a>(words: impl Iterator<Item = &'a str>, min_token_freq: u64) -> Self {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for w in words {
            *freq.entry(w).or_default() += 1;
        }
        let mut oov = 0;
        let mut kept: Vec<(&str, u64)> = Vec::new();
        for (w, c) in freq {
            if c >= min_token_freq {
                kept.push((w, c));
            } else {
                oov += c;
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![OOV_TOKEN.to_string()];
        let mut counts = vec![oov];
        for (w, c) in kept {
            tokens.push(w.to_string());
            counts.push(c);
        }
        Self::from_parts(tokens, counts)
    }

    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            counts,
            index,
        }
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        *self = Self::from_parts(std::mem::take(&mut self.tokens), std::mem::take(&mut self.counts));
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    users: Vec<String>,
    user_index: HashMap<String, usize>,
    /// Directed edges `(src, dst)`, sorted and deduplicated, no self-loops.
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
}

impl SocialGraph {
    pub fn new(users: Vec<String>, features: Array2<f64>, edges: Vec<(usize, usize)>) -> Result<Self> {
        if features.nrows() != users.len() {
            return Err(UcdError::Shape(format!(
                "{} users but {} feature rows",
                users.len(),
                features.nrows()
            )));
        }
        let mut user_index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if user_index.insert(u.clone(), i).is_some() {
                return Err(UcdError::InvalidArgument(format!("duplicate user {u}")));
            }
        }
        let n = users.len();
        let mut edges: Vec<(usize, usize)> = edges.into_iter().filter(|(s, d)| s != d).collect();
        if let Some(&(s, d)) = edges.iter().find(|(s, d)| *s >= n || *d >= n) {
            return Err(UcdError::InvalidArgument(format!("edge ({s}, {d}) out of range")));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            users,
            user_index,
            edges,
            features,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn user_row(&self, user_id: &str) -> Option<usize> {
        self.user_index.get(user_id).copied()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Stored (directed) adjacency `A` as a dense 0/1 matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.n_users();
        let mut a = Array2::zeros((n, n));
        for &(s, d) in &self.edges {
            a[[s, d]] = 1.0;
        }
        a
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| UcdError::io(path, e))?;
        let parse_err = |line: usize, message: String| UcdError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = BufReader::new(file)
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty graph file".into()))?;
        let header = header.map_err(|e| UcdError::io(path, e))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (n_users, dim) = match h.as_slice() {
            ["users", u, "features", d] => (
                u.parse::<usize>()
                    .map_err(|e| parse_err(hline, format!("bad user count: {e}")))?,
                d.parse::<usize>()
                    .map_err(|e| parse_err(hline, format!("bad feature dimension: {e}")))?,
            ),
            _ => {
                return Err(parse_err(
                    hline,
                    "expected header `users <U> features <D>`".into(),
                ))
            }
        };

        let mut users = Vec::with_capacity(n_users);
        let mut features = Array2::zeros((n_users, dim));
        let mut index = HashMap::new();
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| UcdError::io(path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if users.len() < n_users {
                if fields.len() != dim + 1 {
                    return Err(parse_err(
                        lineno,
                        format!(
                            "node line has {} features, header declares {dim}",
                            fields.len().saturating_sub(1)
                        ),
                    ));
                }
                let row = users.len();
                for (j, f) in fields[1..].iter().enumerate() {
                    features[[row, j]] = f
                        .parse::<f64>()
                        .map_err(|e| parse_err(lineno, format!("bad feature value {f:?}: {e}")))?;
                }
                if index.insert(fields[0].to_string(), row).is_some() {
                    return Err(parse_err(lineno, format!("duplicate user {}", fields[0])));
                }
                users.push(fields[0].to_string());
            } else {
                if fields.len() != 2 {
                    return Err(parse_err(lineno, "edge line must be `src dst`".into()));
                }
                let lookup = |u: &str| {
                    index
                        .get(u)
                        .copied()
                        .ok_or_else(|| parse_err(lineno, format!("edge references unknown user {u}")))
                };
                edges.push((lookup(fields[0])?, lookup(fields[1])?));
            }
        }
        if users.len() != n_users {
            return Err(parse_err(
                0,
                format!("header declares {n_users} users, found {}", users.len()),
            ));
        }
        Self::new(users, features, edges)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| UcdError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| UcdError::io(path, e);
        writeln!(w, "users {} features {}", self.n_users(), self.feature_dim()).map_err(io)?;
        for (u, row) in self.users.iter().zip(self.features.outer_iter()) {
            write!(w, "{u}").map_err(io)?;
            for v in row {
                write!(w, " {v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        for &(s, d) in &self.edges {
            writeln!(w, "{} {}", self.users[s], self.users[d]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    pub graph: Option<Arc<SocialGraph>>,
    pub vocabulary: Arc<Vocabulary>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub dropped_comments: usize,
    pub dropped_sessions: usize,
}

/// How token ids are assigned when building a corpus.
#[derive(Debug, Clone)]
pub enum VocabularyPolicy {
    /// Build a fresh vocabulary from the records.
    Build { min_token_freq: u64 },
    /// Reuse a trained vocabulary; unseen tokens become OOV.
    Fixed(Arc<Vocabulary>),
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Same vocabulary and graph, different sessions.
    pub fn with_sessions(&self, sessions: Vec<Session>) -> Corpus {
        Corpus {
            sessions,
            graph: self.graph.clone(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn without_graph(&self) -> Corpus {
        Corpus {
            graph: None,
            ..self.clone()
        }
    }

    pub fn from_records(
        records: Vec<SessionRecord>,
        graph: Option<Arc<SocialGraph>>,
        policy: VocabularyPolicy,
    ) -> Result<(Corpus, IngestReport)> {
        let tokenized: Vec<Vec<Vec<String>>> = records
            .iter()
            .map(|r| r.comments.iter().map(|c| tokenize(&c.text)).collect())
            .collect();
        let vocabulary = match policy {
            VocabularyPolicy::Build { min_token_freq } => {
                if min_token_freq < 1 {
                    return Err(UcdError::InvalidArgument("min_token_freq must be >= 1".into()));
                }
                Arc::new(Vocabulary::build(
                    tokenized.iter().flatten().flatten().map(String::as_str),
                    min_token_freq,
                ))
            }
            VocabularyPolicy::Fixed(v) => v,
        };
        let mut report = IngestReport::default();
        let mut sessions = Vec::with_capacity(records.len());
        for (record, words) in records.into_iter().zip(tokenized) {
            let offset = record.posted_at.unwrap_or(0.0);
            let mut comments = Vec::with_capacity(record.comments.len());
            for (c, w) in record.comments.into_iter().zip(words) {
                if w.is_empty() {
                    report.dropped_comments += 1;
                    continue;
                }
                comments.push(Comment {
                    tokens: w.iter().map(|t| vocabulary.id(t)).collect(),
                    timestamp: c.timestamp - offset,
                    author_id: c.author_id,
                    text: c.text,
                });
            }
            if comments.is_empty() {
                report.dropped_sessions += 1;
                continue;
            }
            sessions.push(Session::new(
                record.session_id,
                record.owner_id,
                comments,
                record.likes,
                record.shares,
                record.label,
            )?);
        }
        Ok((
            Corpus {
                sessions,
                graph,
                vocabulary,
            },
            report,
        ))
    }

    pub fn records(&self) -> Vec<SessionRecord> {
        self.sessions.iter().map(Session::to_record).collect()
    }

    /// Owners missing from the graph (all owners when there is no graph).
    pub fn unknown_owners(&self) -> Vec<&str> {
        self.sessions
            .iter()
            .filter(|s| {
                self.graph
                    .as_ref()
                    .map(|g| g.user_row(&s.owner_id).is_none())
                    .unwrap_or(true)
            })
            .map(|s| s.owner_id.as_str())
            .collect()
    }
}

pub fn read_session_records(path: &Path) -> Result<Vec<SessionRecord>> {
    let file = File::open(path).map_err(|e| UcdError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| UcdError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord = serde_json::from_str(&line).map_err(|e| UcdError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let bad_time = rec
            .comments
            .iter()
            .map(|c| c.timestamp - rec.posted_at.unwrap_or(0.0))
            .any(|t| !(t >= 0.0) || !t.is_finite());
        if bad_time {
            return Err(UcdError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "comment timestamp precedes session start or is not finite".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_session_records(path: &Path, records: &[SessionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| UcdError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("session record serializes");
        writeln!(w, "{line}").map_err(|e| UcdError::io(path, e))?;
    }
    w.flush().map_err(|e| UcdError::io(path, e))
}

fn load_graph(graph_path: Option<&Path>) -> Result<Option<Arc<SocialGraph>>> {
    graph_path
        .map(|p| SocialGraph::read(p).map(Arc::new))
        .transpose()
}

/// Reads a sessions file (and optionally a graph file) into a corpus with a
/// freshly built vocabulary.
pub fn ingest_corpus(
    sessions_path: &Path,
    graph_path: Option<&Path>,
    min_token_freq: u64,
) -> Result<(Corpus, IngestReport)> {
    let records = read_session_records(sessions_path)?;
    let graph = load_graph(graph_path)?;
    Corpus::from_records(records, graph, VocabularyPolicy::Build { min_token_freq })
}

/// Like [`ingest_corpus`] but tokens are mapped through an existing vocabulary.
pub fn ingest_with_vocabulary(
    sessions_path: &Path,
    graph_path: Option<&Path>,
    vocabulary: Arc<Vocabulary>,
) -> Result<(Corpus, IngestReport)> {
    let records = read_session_records(sessions_path)?;
    let graph = load_graph(graph_path)?;
    Corpus::from_records(records, graph, VocabularyPolicy::Fixed(vocabulary))
}

/// Deterministic session-level split. Both halves share vocabulary and graph.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(UcdError::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(UcdError::InvalidArgument(format!(
            "cannot split a corpus of {n} session(s)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * train_fraction).floor() as usize).clamp(1, n - 1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus.sessions[i].clone()).collect();
    Ok((
        corpus.with_sessions(pick(&order[..n_train])),
        corpus.with_sessions(pick(&order[n_train..])),
    ))
}
