//! Labeled text records and their JSON-lines on-disk form.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One classification example. `label` must be in `[0, n_classes)` of
/// whatever model consumes it; that bound is checked at use sites because the
/// record itself does not know the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: usize,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, label: usize) -> Self {
        LabeledText { text: text.into(), label }
    }

    /// Character count (Unicode scalars), the unit of modification rates.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Reads a JSON-lines dataset: one `{"text": ..., "label": ...}` per line.
/// Blank lines are rejected, not skipped: a truncated file should not load.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<LabeledText>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let rec: LabeledText = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, i + 1, format!("bad dataset line: {e}")))?;
        if rec.text.is_empty() {
            return Err(Error::parse(path, i + 1, "empty text"));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 0, "dataset has no records"));
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, data: &[LabeledText]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for rec in data {
        serde_json::to_writer(&mut buf, rec)
            .map_err(|e| Error::Internal(format!("serializing dataset record: {e}")))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let data = vec![LabeledText::new("你好", 0), LabeledText::new("再见", 1)];
        write_jsonl(&p, &data).unwrap();
        assert_eq!(load_jsonl(&p).unwrap(), data);
    }

    #[test]
    fn rejects_empty_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, "{\"text\":\"\",\"label\":0}\n").unwrap();
        assert!(load_jsonl(&p).is_err());
    }

    #[test]
    fn reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, "{\"text\":\"好\",\"label\":0}\nnot json\n").unwrap();
        match load_jsonl(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
