//! Corpus interchange: `NAME.sot` holds one SoT document per line and
//! `NAME.meta.jsonl` holds the matching metadata record per line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::io::{from_jsonl, read_input, to_jsonl, write_atomic};

/// Verdict recorded before filtration.
pub const UNFILTERED: &str = "unfiltered";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub question_id: String,
    pub image_id: String,
    pub ground_truth: String,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub document: String,
    pub meta: CorpusMeta,
}

/// Sidecar path for a `.sot` file.
pub fn meta_path(sot: &Path) -> PathBuf {
    sot.with_extension("meta.jsonl")
}

pub fn write_corpus(sot: &Path, entries: &[CorpusEntry]) -> Result<(), PipelineError> {
    let mut docs = String::new();
    for e in entries {
        // Documents are single-line by construction; stray line breaks from
        // annotation text would split a record, and parsing ignores them.
        docs.push_str(&e.document.replace(['\n', '\r'], " "));
        docs.push('\n');
    }
    let metas: Vec<&CorpusMeta> = entries.iter().map(|e| &e.meta).collect();
    write_atomic(sot, docs.as_bytes())?;
    write_atomic(&meta_path(sot), to_jsonl(&metas).as_bytes())
}

pub fn read_corpus(sot: &Path) -> Result<Vec<CorpusEntry>, PipelineError> {
    let docs = read_input(sot)?;
    let mpath = meta_path(sot);
    let metas: Vec<CorpusMeta> = from_jsonl(&read_input(&mpath)?, &mpath)?;
    let docs: Vec<&str> = docs.lines().collect();
    if docs.len() != metas.len() {
        return Err(PipelineError::Input(format!(
            "{}: {} documents but {} metadata records",
            sot.display(),
            docs.len(),
            metas.len()
        )));
    }
    Ok(docs
        .into_iter()
        .zip(metas)
        .map(|(d, meta)| CorpusEntry {
            document: d.to_string(),
            meta,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.sot");
        let entries = vec![CorpusEntry {
            document: "<subtask>select(a)<answer>None".into(),
            meta: CorpusMeta {
                question_id: "q".into(),
                image_id: "i".into(),
                ground_truth: "no".into(),
                verdict: UNFILTERED.into(),
            },
        }];
        write_corpus(&p, &entries).unwrap();
        assert!(dir.path().join("c.meta.jsonl").exists());
        assert_eq!(read_corpus(&p).unwrap(), entries);
        std::fs::write(dir.path().join("c.meta.jsonl"), "").unwrap();
        assert!(matches!(read_corpus(&p), Err(PipelineError::Input(_))));
    }
}
