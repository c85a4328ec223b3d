//! Plain-text graph persistence.
//!
//! ```text
//! ADVGRAPH v1
//! N U+XXXX                       (one line per node, codepoint-sorted)
//! E U+XXXX U+YYYY <kind> <score> (one line per edge, canonical pairs, sorted)
//! ```
//!
//! Scores carry six decimals; the file stores topology, kinds and scores but
//! not the underlying character records.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::table::{format_codepoint, parse_codepoint};
use super::{AdvGraph, EdgeKind};

impl AdvGraph {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let inner = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
            writeln!(w, "ADVGRAPH v1")?;
            for &c in &self.nodes {
                writeln!(w, "N {}", format_codepoint(c))?;
            }
            for (&(a, b), &(kind, score)) in &self.edges {
                writeln!(
                    w,
                    "E {} {} {} {:.6}",
                    format_codepoint(a),
                    format_codepoint(b),
                    kind.as_str(),
                    score
                )?;
            }
            w.flush()
        };
        inner(&mut w).map_err(|e| Error::io(path, e))
    }

    /// Loads a graph saved by [`save`](Self::save). Records are not stored
    /// in the file, so [`record`](Self::record) returns `None` on the
    /// result; neighbor lists are rebuilt uncapped.
    pub fn load(path: &Path) -> Result<AdvGraph> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();

        let (_, header) = match lines.next() {
            Some((i, Ok(line))) => (i, line),
            Some((_, Err(e))) => return Err(Error::io(path, e)),
            None => return Err(Error::parse(path, 1, "empty file, expected ADVGRAPH v1 header")),
        };
        if header.trim() != "ADVGRAPH v1" {
            return Err(Error::parse(path, 1, format!("bad header {header:?}, expected \"ADVGRAPH v1\"")));
        }

        let mut nodes = BTreeSet::new();
        let mut edges: BTreeMap<(char, char), (EdgeKind, f64)> = BTreeMap::new();
        for (i, line) in lines {
            let lno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            let cp = |tok: &str| -> Result<char> {
                parse_codepoint(tok).ok_or_else(|| Error::parse(path, lno, format!("bad codepoint {tok:?}")))
            };
            match parts[0] {
                "N" => {
                    if parts.len() != 2 {
                        return Err(Error::parse(path, lno, format!("expected \"N <codepoint>\", got {trimmed:?}")));
                    }
                    let c = cp(parts[1])?;
                    if !nodes.insert(c) {
                        return Err(Error::parse(path, lno, format!("duplicate node {}", parts[1])));
                    }
                }
                "E" => {
                    if parts.len() != 5 {
                        return Err(Error::parse(
                            path,
                            lno,
                            format!("expected \"E <cp> <cp> <kind> <score>\", got {trimmed:?}"),
                        ));
                    }
                    let a = cp(parts[1])?;
                    let b = cp(parts[2])?;
                    if a == b {
                        return Err(Error::parse(path, lno, format!("self-loop on {}", parts[1])));
                    }
                    let kind = match parts[3] {
                        "phonetic" => EdgeKind::Phonetic,
                        "glyph" => EdgeKind::Glyph,
                        "both" => EdgeKind::Both,
                        other => return Err(Error::parse(path, lno, format!("unknown edge kind {other:?}"))),
                    };
                    let score: f64 = parts[4]
                        .parse()
                        .map_err(|_| Error::parse(path, lno, format!("bad score {:?}", parts[4])))?;
                    if !(0.0..=1.0).contains(&score) {
                        return Err(Error::parse(path, lno, format!("score {score} outside [0, 1]")));
                    }
                    let pair = if a < b { (a, b) } else { (b, a) };
                    if edges.insert(pair, (kind, score)).is_some() {
                        return Err(Error::parse(path, lno, format!("duplicate edge {} {}", parts[1], parts[2])));
                    }
                }
                other => {
                    return Err(Error::parse(path, lno, format!("unknown line tag {other:?}")));
                }
            }
        }
        for &(a, b) in edges.keys() {
            for c in [a, b] {
                if !nodes.contains(&c) {
                    return Err(Error::parse(
                        path,
                        0,
                        format!("edge endpoint {} has no node line", format_codepoint(c)),
                    ));
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::parse(path, 0, "graph file declares no nodes"));
        }
        Ok(AdvGraph::from_parts(nodes, edges))
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::rec;
    use super::super::{build_graph, AdvGraph, NeighborFilter};

    #[test]
    fn roundtrip_preserves_topology_and_scores() {
        let recs = vec![
            rec('微', &["wei"], &[1, 2, 3, 4]),
            rec('薇', &["wei"], &[1, 2, 3, 4, 5]),
            rec('博', &["bo"], &[5, 5, 5]),
        ];
        let g = build_graph(&recs, 0.5, usize::MAX).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        g.save(&path).unwrap();
        let loaded = AdvGraph::load(&path).unwrap();
        assert_eq!(loaded.node_count(), g.node_count());
        assert_eq!(loaded.edge_count(), g.edge_count());
        for (a, b, kind, score) in g.edges() {
            let (k2, s2) = loaded.edge(a, b).unwrap();
            assert_eq!(kind, k2);
            assert!((score - s2).abs() < 5e-7); // six written decimals
        }
        assert!(loaded.record('微').is_none());
        assert_eq!(
            loaded.neighbors('微', NeighborFilter::All).unwrap().len(),
            g.neighbors('微', NeighborFilter::All).unwrap().len()
        );
    }

    #[test]
    fn save_is_deterministic() {
        let recs = vec![
            rec('微', &["wei"], &[1, 2, 3, 4]),
            rec('薇', &["wei"], &[1, 2, 3, 4, 5]),
            rec('博', &["bo"], &[1, 2, 1, 2]),
        ];
        let g = build_graph(&recs, 0.5, usize::MAX).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
        g.save(&p1).unwrap();
        g.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_corrupted_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "ADVGRAPH v2\nN U+535A\n").unwrap();
        assert!(AdvGraph::load(&path).is_err()); // wrong version
        std::fs::write(&path, "ADVGRAPH v1\nN U+535A\nE U+535A U+83E0 phonetic 0.5\n").unwrap();
        assert!(AdvGraph::load(&path).is_err()); // endpoint without node line
        std::fs::write(&path, "ADVGRAPH v1\nN U+535A\nN U+83E0\nE U+535A U+83E0 weird 0.5\n").unwrap();
        assert!(AdvGraph::load(&path).is_err()); // unknown kind
        std::fs::write(&path, "ADVGRAPH v1\nN U+535A\nN U+83E0\nE U+535A U+83E0 phonetic 1.5\n").unwrap();
        assert!(AdvGraph::load(&path).is_err()); // score out of range
    }
}
