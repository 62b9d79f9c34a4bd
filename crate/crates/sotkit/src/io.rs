//! File loading and atomic writes.

use std::io::Write;
use std::path::Path;

use sot_core::{parse_questions, parse_scene_graphs, IngestWarning, QuestionRecord, SceneGraph};

use crate::error::PipelineError;

pub fn read_input(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let internal = |e: std::io::Error| PipelineError::Internal(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(internal)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(internal)?;
    tmp.write_all(bytes).map_err(internal)?;
    tmp.as_file().sync_all().map_err(internal)?;
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

pub fn load_scene_graphs(path: &Path) -> Result<(Vec<SceneGraph>, Vec<IngestWarning>), PipelineError> {
    parse_scene_graphs(&read_input(path)?)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

pub fn load_questions(path: &Path) -> Result<(Vec<QuestionRecord>, Vec<IngestWarning>), PipelineError> {
    parse_questions(&read_input(path)?)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// One JSON document per line.
pub fn to_jsonl<T: serde::Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn from_jsonl<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}
