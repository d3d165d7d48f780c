//! Graph file formats: a small JSON schema and graph6.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{non_edge_key, user_label_key, GraphError, LabelledGraph};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid graph JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid graph6: {0}")]
    Graph6(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// On-disk JSON graph: 0-based edges, omitted pairs are non-edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_labels: Option<Vec<String>>,
}

const TAG_WITH_VERTICES: u8 = 0x05;

fn push_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

impl GraphFile {
    /// The complete labelled graph described by the file, not normalized.
    pub fn to_graph(&self) -> Result<LabelledGraph, IoError> {
        let Some(vertex_labels) = &self.vertex_labels else {
            return Ok(LabelledGraph::from_labelled_edges(self.n, &self.edges)?);
        };
        if self.n == 0 {
            return Err(GraphError::Empty.into());
        }
        if vertex_labels.len() != self.n {
            return Err(GraphError::LengthMismatch { expected: self.n, got: vertex_labels.len() }.into());
        }
        // Validate edges through the plain constructor, then fold vertex
        // labels into every key.
        let plain = LabelledGraph::from_labelled_edges(self.n, &self.edges)?;
        let n = self.n;
        let mut keys = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut key = vec![TAG_WITH_VERTICES];
                push_prefixed(&mut key, plain.key(i, j));
                push_prefixed(&mut key, vertex_labels[i].as_bytes());
                push_prefixed(&mut key, vertex_labels[j].as_bytes());
                keys.push(key);
            }
        }
        Ok(LabelledGraph::from_key_matrix(n, &keys)?)
    }

    /// Exports a graph with its interned label ids as label strings. Every
    /// pair is listed, so re-importing yields the same partition.
    pub fn from_graph(g: &LabelledGraph) -> Self {
        let n = g.n();
        let mut edges = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                edges.push((i, j, g.label(i, j).index().to_string()));
            }
        }
        GraphFile { n, edges, vertex_labels: None }
    }
}

pub fn parse_json_graph(text: &str) -> Result<LabelledGraph, IoError> {
    serde_json::from_str::<GraphFile>(text)?.to_graph()
}

/// Undirected adjacency matrix (row-major) from a graph6 string.
pub fn decode_graph6(text: &str) -> Result<(usize, Vec<bool>), IoError> {
    let text = text.trim();
    let text = text.strip_prefix(">>graph6<<").unwrap_or(text);
    let bytes: Vec<u8> = text.bytes().collect();
    if bytes.is_empty() {
        return Err(IoError::Graph6("empty input".into()));
    }
    if let Some(b) = bytes.iter().find(|&&b| !(63..=126).contains(&b)) {
        return Err(IoError::Graph6(format!("byte {b} outside 63..=126")));
    }
    let six = |slice: &[u8]| slice.iter().fold(0usize, |acc, &b| (acc << 6) | usize::from(b - 63));
    let (n, rest) = if bytes[0] < 126 {
        (usize::from(bytes[0] - 63), &bytes[1..])
    } else if bytes.len() >= 4 && bytes[1] < 126 {
        (six(&bytes[1..4]), &bytes[4..])
    } else if bytes.len() >= 8 {
        (six(&bytes[2..8]), &bytes[8..])
    } else {
        return Err(IoError::Graph6("truncated size field".into()));
    };
    let bits_needed = n * n.saturating_sub(1) / 2;
    let expected = bits_needed.div_ceil(6);
    if rest.len() != expected {
        return Err(IoError::Graph6(format!("expected {expected} data bytes for n = {n}, got {}", rest.len())));
    }
    let mut adj = vec![false; n * n];
    let mut k = 0;
    for j in 1..n {
        for i in 0..j {
            let bit = (rest[k / 6] - 63) >> (5 - k % 6) & 1 == 1;
            adj[i * n + j] = bit;
            adj[j * n + i] = bit;
            k += 1;
        }
    }
    Ok((n, adj))
}

/// graph6 encoding of an undirected adjacency matrix (`n < 258048`).
pub fn encode_graph6(n: usize, adjacent: impl Fn(usize, usize) -> bool) -> String {
    let mut out: Vec<u8> = Vec::new();
    if n < 63 {
        out.push(n as u8 + 63);
    } else {
        out.push(126);
        out.extend((0..3).rev().map(|s| ((n >> (6 * s)) & 63) as u8 + 63));
    }
    let mut acc = 0u8;
    let mut filled = 0;
    for j in 1..n {
        for i in 0..j {
            acc = (acc << 1) | u8::from(adjacent(i, j));
            filled += 1;
            if filled == 6 {
                out.push(acc + 63);
                acc = 0;
                filled = 0;
            }
        }
    }
    if filled > 0 {
        out.push((acc << (6 - filled)) + 63);
    }
    String::from_utf8(out).expect("ascii")
}

/// graph6 import with uniform vertex labels.
pub fn parse_graph6(text: &str) -> Result<LabelledGraph, IoError> {
    let (n, adj) = decode_graph6(text)?;
    Ok(LabelledGraph::from_vertex_labels(n, &vec![""; n], |i, j| adj[i * n + j])?)
}

/// JSON when the content starts with `{`, graph6 otherwise.
pub fn parse_graph(text: &str) -> Result<LabelledGraph, IoError> {
    if text.trim_start().starts_with('{') {
        parse_json_graph(text)
    } else {
        parse_graph6(text)
    }
}

pub fn load_graph(path: &Path) -> Result<LabelledGraph, IoError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    parse_graph(&text)
}

/// Whether the key is the reserved non-edge label.
pub fn is_non_edge(key: &[u8]) -> bool {
    key == non_edge_key().as_slice()
}

/// Whether the key is a plain user label.
pub fn is_user_label(key: &[u8], label: &str) -> bool {
    key == user_label_key(label.as_bytes()).as_slice()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_preserves_partition() {
        let g = parse_json_graph(r#"{"n": 3, "edges": [[0, 1, "x"], [1, 0, "y"], [1, 2, "x"]]}"#).unwrap();
        assert!(is_user_label(g.key(0, 1), "x"));
        assert!(is_non_edge(g.key(2, 0)));
        let back = GraphFile::from_graph(&g).to_graph().unwrap();
        assert!(back.labelling().equivalent(&g.labelling()).unwrap());
    }

    #[test]
    fn json_errors() {
        assert!(matches!(parse_json_graph(r#"{"n": 0, "edges": []}"#), Err(IoError::Graph(GraphError::Empty))));
        assert!(matches!(parse_json_graph(r#"{"n": 2, "edges": [[0, 2, "x"]]}"#), Err(IoError::Graph(_))));
        assert!(matches!(parse_json_graph(r#"{"n": 2, "edges": [[0, 1]]}"#), Err(IoError::Json(_))));
        assert!(matches!(parse_json_graph(r#"{"n": 2, "edges": [], "extra": 1}"#), Err(IoError::Json(_))));
    }

    #[test]
    fn vertex_labels_split_classes() {
        let g = parse_json_graph(r#"{"n": 3, "edges": [], "vertex_labels": ["a", "b", "a"]}"#).unwrap();
        let l = g.normalize().labelling();
        // loops a/b, plus ordered pairs ab, ba, aa
        assert_eq!(l.class_count(), 5);
        assert!(parse_json_graph(r#"{"n": 2, "edges": [], "vertex_labels": ["a"]}"#).is_err());
    }

    #[test]
    fn graph6_known_strings() {
        // K4 and the 5-cycle 0-1-2-3-4-0
        let (n, adj) = decode_graph6("C~").unwrap();
        assert_eq!(n, 4);
        assert_eq!(adj.iter().filter(|&&b| b).count(), 12);
        let c5 = |i: usize, j: usize| (i + 1) % 5 == j || (j + 1) % 5 == i;
        assert_eq!(encode_graph6(5, c5), "Dhc");
        let (n, adj) = decode_graph6(">>graph6<<Dhc\n").unwrap();
        assert_eq!(n, 5);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(adj[i * 5 + j], c5(i, j));
            }
        }
    }

    #[test]
    fn graph6_large_size_field() {
        let s = encode_graph6(70, |i, j| i + 1 == j);
        assert!(s.starts_with('~'));
        let (n, adj) = decode_graph6(&s).unwrap();
        assert_eq!(n, 70);
        assert!(adj[3 * 70 + 4] && !adj[3 * 70 + 5]);
    }

    #[test]
    fn graph6_errors() {
        assert!(decode_graph6("").is_err());
        assert!(decode_graph6("Dh").is_err());
        assert!(decode_graph6("D\u{7f}c").is_err());
        assert!(matches!(parse_graph6("?"), Err(IoError::Graph(GraphError::Empty))));
    }
}
