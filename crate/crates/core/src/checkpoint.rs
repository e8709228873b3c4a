//! Checkpoint files: every parameter group as named arrays with shapes, the
//! frozen mixture, target-transform statistics, the vocabulary and the
//! learned user embeddings, bundled in one JSON document.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UcdError};
use crate::trainer::TrainedModel;

pub const FORMAT: &str = "ucd-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format: &'a str,
    version: u32,
    crate_version: &'a str,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: TrainedModel,
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    let err = |e| UcdError::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(err)?);
    let env = EnvelopeRef {
        format: FORMAT,
        version: VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        model,
    };
    serde_json::to_writer(&mut w, &env).map_err(|e| UcdError::Checkpoint(e.to_string()))?;
    w.flush().map_err(err)
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    let file = std::fs::File::open(path).map_err(|e| UcdError::io(path, e))?;
    let env: Envelope = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| UcdError::Checkpoint(format!("{}: {e}", path.display())))?;
    if env.format != FORMAT {
        return Err(UcdError::Checkpoint(format!("not a checkpoint (format {:?})", env.format)));
    }
    if env.version != VERSION {
        return Err(UcdError::Checkpoint(format!("unsupported checkpoint version {}", env.version)));
    }
    let mut model = env.model;
    model.vocabulary.reindex();
    validate(&model)?;
    Ok(model)
}

fn validate(m: &TrainedModel) -> Result<()> {
    let bad = |s: String| Err(UcdError::Checkpoint(s));
    if !m.model.store.all_finite() {
        return bad("non-finite parameter values".into());
    }
    if m.model.han.vocab_size != m.vocabulary.len() {
        return bad(format!(
            "embedding has {} rows but the vocabulary has {} tokens",
            m.model.han.vocab_size,
            m.vocabulary.len()
        ));
    }
    if m.model.store.get(m.model.han.embedding).nrows() != m.model.han.vocab_size {
        return bad("embedding shape does not match its declared vocabulary size".into());
    }
    let d = m.model.representation_width();
    if m.gmm.dim() != d || m.gmm.components() != m.model.membership.components {
        return bad(format!(
            "mixture is {}×{} but the model expects {}×{d}",
            m.gmm.components(),
            m.gmm.dim(),
            m.model.membership.components
        ));
    }
    match (&m.model.gae, &m.user_embeddings) {
        (Some(g), Some(e)) if e.z.ncols() == g.embedding_width && e.z.nrows() == e.user_ids.len() => Ok(()),
        (None, None) => Ok(()),
        _ => bad("user embeddings do not match the graph encoder".into()),
    }
}
