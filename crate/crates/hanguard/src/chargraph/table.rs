//! Character table and visual-feature TSV parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::CharacterRecord;

/// Parses a `U+XXXX` codepoint token into a char.
pub(crate) fn parse_codepoint(tok: &str) -> Option<char> {
    let hex = tok.strip_prefix("U+")?;
    if hex.is_empty() || hex.len() > 6 {
        return None;
    }
    let v = u32::from_str_radix(hex, 16).ok()?;
    char::from_u32(v)
}

pub(crate) fn format_codepoint(c: char) -> String {
    format!("U+{:04X}", c as u32)
}

/// CJK Unified Ideographs blocks (base block plus extensions).
pub fn is_cjk_ideograph(c: char) -> bool {
    matches!(u32::from(c),
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0x2B820..=0x2CEAF
        | 0x2CEB0..=0x2EBEF
        | 0x30000..=0x3134F)
}

/// Lowercases, maps ü→v, strips trailing tone digits. Returns None when the
/// normalized syllable is not plain `[a-z]+`.
fn normalize_pinyin(raw: &str) -> Option<String> {
    let mut s: String = raw.trim().to_lowercase().replace('ü', "v");
    while s.ends_with(|c: char| c.is_ascii_digit()) {
        s.pop();
    }
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase()) {
        Some(s)
    } else {
        None
    }
}

/// Loads the character table TSV:
/// `codepoint<TAB>pinyin1,pinyin2,...<TAB>strokecode[<TAB>freq_rank]`,
/// `#`-prefixed comment lines and blank lines skipped.
pub fn load_character_table(path: impl AsRef<Path>) -> Result<Vec<CharacterRecord>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 || cols.len() > 4 {
            return Err(Error::parse(path, lineno, format!("expected 3 or 4 columns, got {}", cols.len())));
        }
        let codepoint = parse_codepoint(cols[0])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad codepoint {:?}", cols[0])))?;
        if !is_cjk_ideograph(codepoint) {
            return Err(Error::parse(path, lineno, format!("{} is not a CJK unified ideograph", cols[0])));
        }
        if !seen.insert(codepoint) {
            return Err(Error::parse(path, lineno, format!("duplicate codepoint {}", cols[0])));
        }
        let mut pinyins = BTreeSet::new();
        for part in cols[1].split(',') {
            let p = normalize_pinyin(part)
                .ok_or_else(|| Error::parse(path, lineno, format!("bad pinyin {part:?}")))?;
            pinyins.insert(p);
        }
        if pinyins.is_empty() {
            return Err(Error::parse(path, lineno, "no pinyin readings"));
        }
        let stroke_col = cols[2].trim();
        if stroke_col.is_empty() {
            return Err(Error::parse(path, lineno, "empty stroke code"));
        }
        let mut stroke_code = Vec::with_capacity(stroke_col.len());
        for ch in stroke_col.chars() {
            match ch.to_digit(10) {
                Some(d @ 1..=9) => stroke_code.push(d as u8),
                _ => return Err(Error::parse(path, lineno, format!("bad stroke digit {ch:?}"))),
            }
        }
        let frequency_rank = match cols.get(3) {
            None => None,
            Some(s) => Some(
                s.trim()
                    .parse::<u32>()
                    .ok()
                    .filter(|&r| r >= 1)
                    .ok_or_else(|| Error::parse(path, lineno, format!("bad frequency rank {s:?}")))?,
            ),
        };
        records.push(CharacterRecord { codepoint, pinyins, stroke_code, frequency_rank, visual_feature: None });
    }
    if records.is_empty() {
        return Err(Error::parse(path, 0, "character table has no records"));
    }
    Ok(records)
}

/// Loads the optional visual-feature TSV `codepoint<TAB>f1,f2,...,fk`.
/// All rows must carry the same dimensionality.
pub fn load_visual_features(path: impl AsRef<Path>) -> Result<BTreeMap<char, Vec<f64>>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut dim = None;
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (cp_tok, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected 2 columns"))?;
        let codepoint = parse_codepoint(cp_tok)
            .ok_or_else(|| Error::parse(path, lineno, format!("bad codepoint {cp_tok:?}")))?;
        let mut feat = Vec::new();
        for part in rest.split(',') {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad feature value {part:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite feature value"));
            }
            feat.push(v);
        }
        match dim {
            None => dim = Some(feat.len()),
            Some(d) if d != feat.len() => {
                return Err(Error::parse(path, lineno, format!("feature length {} != {}", feat.len(), d)))
            }
            _ => {}
        }
        if out.insert(codepoint, feat).is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate codepoint {cp_tok}")));
        }
    }
    Ok(out)
}

/// Attaches visual features to matching records; returns how many matched.
pub fn attach_visual_features(records: &mut [CharacterRecord], feats: &BTreeMap<char, Vec<f64>>) -> usize {
    let mut n = 0;
    for rec in records.iter_mut() {
        if let Some(f) = feats.get(&rec.codepoint) {
            rec.visual_feature = Some(f.clone());
            n += 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chars.tsv");
        fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn parses_the_documented_example() {
        let (_d, p) = write_tmp("U+535A\tbo2\t12345112154\n");
        let recs = load_character_table(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].codepoint, '博');
        assert!(recs[0].pinyins.contains("bo"));
        assert_eq!(recs[0].stroke_code, vec![1, 2, 3, 4, 5, 1, 1, 2, 1, 5, 4]);
        assert_eq!(recs[0].frequency_rank, None);
    }

    #[test]
    fn parses_optional_rank_and_multiple_pinyins() {
        let (_d, p) = write_tmp("# comment\nU+884C\txing2,HANG2\t33212\t77\n");
        let recs = load_character_table(&p).unwrap();
        let pys: Vec<_> = recs[0].pinyins.iter().cloned().collect();
        assert_eq!(pys, vec!["hang".to_string(), "xing".to_string()]);
        assert_eq!(recs[0].frequency_rank, Some(77));
    }

    #[test]
    fn rejects_duplicates() {
        let (_d, p) = write_tmp("U+535A\tbo\t12\nU+535A\tbo\t12\n");
        match load_character_table(&p) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_stroke_digit() {
        let (_d, p) = write_tmp("U+535A\tbo\t120\n");
        assert!(load_character_table(&p).is_err());
    }

    #[test]
    fn rejects_empty_table() {
        let (_d, p) = write_tmp("# only a comment\n");
        assert!(load_character_table(&p).is_err());
    }

    #[test]
    fn rejects_non_cjk() {
        let (_d, p) = write_tmp("U+0041\ta\t1\n");
        assert!(load_character_table(&p).is_err());
    }

    #[test]
    fn visual_features_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vis.tsv");
        fs::write(&p, "U+535A\t0.5,0.25\nU+83E0\t1.0,0.0\n").unwrap();
        let feats = load_visual_features(&p).unwrap();
        assert_eq!(feats[&'博'], vec![0.5, 0.25]);
        assert_eq!(feats.len(), 2);
    }

    #[test]
    fn visual_features_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vis.tsv");
        fs::write(&p, "U+535A\t0.5,0.25\nU+83E0\t1.0\n").unwrap();
        assert!(load_visual_features(&p).is_err());
    }
}
