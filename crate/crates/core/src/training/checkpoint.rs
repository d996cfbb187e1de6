//! Checkpoint directory layout:
//! - `manifest.json`: tensor names, shapes, dtype, blob file and byte offsets,
//!   hyperparameters, relation names, seed and an echo of the run config
//! - `params.bin`: all tensors as little-endian `f64`, concatenated
//! - `vocab.txt`: encoder vocabulary, one word per line in id order
//!
//! Nothing time-dependent is written, so identical runs give identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::encoder::{Hyperparams, WordVocab};
use crate::error::{Error, Result};
use crate::seed;

pub const CHECKPOINT_DTYPE: &str = "f64";
const MANIFEST: &str = "manifest.json";
const BLOB: &str = "params.bin";
const VOCAB: &str = "vocab.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
    /// Byte offset into `file`.
    pub offset: usize,
}

/// Run context stored alongside the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub relations: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    hyperparams: Hyperparams,
    vocab_file: String,
    tensors: Vec<TensorEntry>,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, params: &ModelParams, vocab: &WordVocab, meta: &CheckpointMeta) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape, data) in params.tensors() {
        tensors.push(TensorEntry {
            name: name.to_owned(),
            shape,
            dtype: CHECKPOINT_DTYPE.to_owned(),
            file: BLOB.to_owned(),
            offset: blob.len(),
        });
        for x in data {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        hyperparams: params.hp,
        vocab_file: VOCAB.to_owned(),
        tensors,
        meta: meta.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    let mut words = vocab.words().join("\n");
    words.push('\n');
    for (name, bytes) in [(MANIFEST, json.into_bytes()), (BLOB, blob), (VOCAB, words.into_bytes())] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelParams, WordVocab, CheckpointMeta)> {
    let dir = dir.as_ref();
    let fail = |message: String| Error::Checkpoint {
        path: dir.into(),
        message,
    };
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| Error::io(path, e))
    };
    let manifest: Manifest =
        serde_json::from_slice(&read(MANIFEST)?).map_err(|e| fail(format!("bad manifest: {e}")))?;
    let words = String::from_utf8(read(&manifest.vocab_file)?).map_err(|e| fail(e.to_string()))?;
    let vocab = WordVocab::from_words(words.lines().map(str::to_owned));
    let blob = read(BLOB)?;

    let hp = manifest.hyperparams;
    let n_rel = manifest.meta.relations.len();
    if vocab.len() < 2 || n_rel < 2 {
        return Err(fail("vocabulary or relation list too short".into()));
    }
    // Shapes come from the hyperparameters; every value is then overwritten.
    let mut params = ModelParams::init(hp, vocab.len(), n_rel, &mut seed::rng(0))?;
    let expected: Vec<(String, Vec<usize>)> =
        params.tensors().into_iter().map(|(n, s, _)| (n.to_owned(), s)).collect();
    if manifest.tensors.len() != expected.len() {
        return Err(fail(format!("expected {} tensors, found {}", expected.len(), manifest.tensors.len())));
    }
    for ((entry, (name, shape)), (_, dst)) in manifest.tensors.iter().zip(&expected).zip(params.tensors_mut()) {
        if &entry.name != name || &entry.shape != shape || entry.dtype != CHECKPOINT_DTYPE || entry.file != BLOB {
            return Err(fail(format!("tensor {:?} does not match the model layout", entry.name)));
        }
        let end = entry.offset + dst.len() * 8;
        let bytes = blob
            .get(entry.offset..end)
            .ok_or_else(|| fail(format!("tensor {:?} runs past the end of {BLOB}", entry.name)))?;
        for (x, b) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
            *x = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
    }
    Ok((params, vocab, manifest.meta))
}
