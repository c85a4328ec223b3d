//! Dictionary word segmentation.
//!
//! Attacks perturb words, not characters, so texts are tiled into word
//! spans first: greedy forward longest match against a dictionary, with
//! any character that starts no dictionary word becoming a one-character
//! word. The spans always concatenate back to the input exactly.

use std::collections::HashSet;
use std::path::Path;

use crate::{Error, Result};

pub struct Segmenter {
    words: HashSet<String>,
    // longest dictionary word, in chars; bounds the match probe
    max_chars: usize,
}

impl Segmenter {
    /// Dictionary file: UTF-8, one word per line, blank lines ignored.
    pub fn from_dict_file(path: impl AsRef<Path>) -> Result<Segmenter> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_words(raw.lines().map(|l| l.trim().to_string())))
    }

    pub fn from_words(words: impl IntoIterator<Item = String>) -> Segmenter {
        let words: HashSet<String> = words.into_iter().filter(|w| !w.is_empty()).collect();
        let max_chars = words.iter().map(|w| w.chars().count()).max().unwrap_or(1);
        Segmenter { words, max_chars }
    }

    /// Empty dictionary: every character is its own word.
    pub fn empty() -> Segmenter {
        Segmenter::from_words(std::iter::empty())
    }

    pub fn dict_len(&self) -> usize {
        self.words.len()
    }

    /// Word spans tiling `text`, as slices of it.
    pub fn segment<'a>(&self, text: &'a str) -> Vec<&'a str> {
        // byte offset of each char plus the end sentinel
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        let n = offsets.len() - 1;

        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let limit = self.max_chars.min(n - i);
            let mut took = 1;
            for k in (2..=limit).rev() {
                if self.words.contains(&text[offsets[i]..offsets[i + k]]) {
                    took = k;
                    break;
                }
            }
            out.push(&text[offsets[i]..offsets[i + took]]);
            i += took;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_wins() {
        let seg = Segmenter::from_words(["AB".into(), "ABC".into(), "C".into()]);
        assert_eq!(seg.segment("ABC"), vec!["ABC"]);
        let seg = Segmenter::from_words(["AB".into(), "C".into()]);
        assert_eq!(seg.segment("ABC"), vec!["AB", "C"]);
    }

    #[test]
    fn empty_dict_falls_back_to_single_chars() {
        let seg = Segmenter::empty();
        assert_eq!(seg.segment("ABC"), vec!["A", "B", "C"]);
    }

    #[test]
    fn spans_tile_the_text() {
        let seg = Segmenter::from_words(["微博".into(), "不错".into()]);
        let text = "微博真不错！";
        let words = seg.segment(text);
        assert_eq!(words.concat(), text);
        assert_eq!(words, vec!["微博", "真", "不错", "！"]);
    }

    #[test]
    fn empty_text_gives_no_spans() {
        let seg = Segmenter::empty();
        assert!(seg.segment("").is_empty());
    }
}
