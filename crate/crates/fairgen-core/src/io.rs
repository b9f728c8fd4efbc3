//! Text file formats: edge lists ("u v" per line, `#` comments), label
//! files ("node<TAB>class"), protected-group files (one node per line),
//! walk batches ("origin<TAB>n0 n1 ..."), and score triples ("i j count").
//! All files are UTF-8. Node tokens are external ids.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{Graph, GraphError, GroupMembership, LabelSet};
use crate::walk::{BatchRole, SampleError, Walk, WalkBatch, WalkOrigin};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected}, got {got:?}")]
    Malformed {
        line: usize,
        expected: &'static str,
        got: String,
    },
    #[error("edge list contains no nodes")]
    EmptyGraph,
    #[error("node {node} is isolated after dropping self-loops; rerun with allow_isolated to keep it")]
    Isolated { node: String },
    #[error("line {line}: unknown node {node}")]
    UnknownNode { line: usize, node: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Walks(#[from] SampleError),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub allow_isolated: bool,
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, String)>, LoadError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((idx + 1, trimmed.to_string()));
    }
    Ok(lines.into_iter())
}

/// Loads an undirected edge list. Duplicate edges and self-loops are
/// dropped; dense ids are assigned by first appearance. Isolated nodes
/// (possible when a node appears only in self-loops) are rejected unless
/// `allow_isolated` is set.
pub fn load_edge_list_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Graph, LoadError> {
    let path = path.as_ref();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut external: Vec<String> = Vec::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut intern = |token: &str, external: &mut Vec<String>, index: &mut HashMap<String, u32>| {
        if let Some(&id) = index.get(token) {
            return id;
        }
        let id = external.len() as u32;
        external.push(token.to_string());
        index.insert(token.to_string(), id);
        id
    };
    for (line, text) in data_lines(path)? {
        let mut parts = text.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(LoadError::Malformed {
                    line,
                    expected: "two whitespace-separated node tokens",
                    got: text,
                })
            }
        };
        let u = intern(a, &mut external, &mut index);
        let v = intern(b, &mut external, &mut index);
        edges.push((u, v));
    }
    if external.is_empty() {
        return Err(LoadError::EmptyGraph);
    }
    let g = Graph::from_parts(external, &edges)?;
    if !opts.allow_isolated {
        if let Some(&u) = g.isolated_nodes().first() {
            return Err(LoadError::Isolated {
                node: g.external_id(u).to_string(),
            });
        }
    }
    Ok(g)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph, LoadError> {
    load_edge_list_with(path, LoadOptions::default())
}

/// Writes the graph as "u v" lines in external ids, ascending dense order.
pub fn save_edge_list(path: impl AsRef<Path>, g: &Graph) -> Result<(), LoadError> {
    let mut out = File::create(path)?;
    for (u, v) in g.edges() {
        writeln!(out, "{} {}", g.external_id(u), g.external_id(v))?;
    }
    Ok(())
}

/// Loads "node<TAB>class" label lines; classes must be non-negative
/// integers and nodes must exist in the graph.
pub fn load_labels(path: impl AsRef<Path>, g: &Graph) -> Result<LabelSet, LoadError> {
    let mut pairs = Vec::new();
    for (line, text) in data_lines(path.as_ref())? {
        let mut parts = text.split('\t');
        let (node_tok, class_tok) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(LoadError::Malformed {
                    line,
                    expected: "node<TAB>class",
                    got: text,
                })
            }
        };
        let node = g.node_by_external(node_tok).ok_or_else(|| LoadError::UnknownNode {
            line,
            node: node_tok.to_string(),
        })?;
        let class: usize = class_tok.parse().map_err(|_| LoadError::Malformed {
            line,
            expected: "non-negative integer class",
            got: class_tok.to_string(),
        })?;
        pairs.push((node, class));
    }
    Ok(LabelSet::new(&pairs))
}

/// Loads a protected-group file: one node per line.
pub fn load_protected(path: impl AsRef<Path>, g: &Graph) -> Result<GroupMembership, LoadError> {
    let mut nodes = Vec::new();
    for (line, text) in data_lines(path.as_ref())? {
        let tok = text.trim();
        let node = g.node_by_external(tok).ok_or_else(|| LoadError::UnknownNode {
            line,
            node: tok.to_string(),
        })?;
        nodes.push(node);
    }
    Ok(GroupMembership::new(g.n(), &nodes)?)
}

fn origin_token(origin: WalkOrigin) -> String {
    match origin {
        WalkOrigin::UniformStart => "uniform-start".to_string(),
        WalkOrigin::LabelStart(c) => format!("label-start:{c}"),
        WalkOrigin::Generated => "generated".to_string(),
    }
}

fn parse_origin(token: &str, line: usize) -> Result<WalkOrigin, LoadError> {
    if token == "uniform-start" {
        return Ok(WalkOrigin::UniformStart);
    }
    if token == "generated" {
        return Ok(WalkOrigin::Generated);
    }
    if let Some(class) = token.strip_prefix("label-start:") {
        let class = class.parse().map_err(|_| LoadError::Malformed {
            line,
            expected: "label-start:<class>",
            got: token.to_string(),
        })?;
        return Ok(WalkOrigin::LabelStart(class));
    }
    Err(LoadError::Malformed {
        line,
        expected: "uniform-start, label-start:<class>, or generated",
        got: token.to_string(),
    })
}

/// Writes one walk per line: "origin<TAB>n0 n1 ... n(T-1)" in external ids.
pub fn save_walks(path: impl AsRef<Path>, batch: &WalkBatch, g: &Graph) -> Result<(), LoadError> {
    let mut out = File::create(path)?;
    for walk in batch.walks() {
        let nodes: Vec<&str> = walk.nodes.iter().map(|&u| g.external_id(u)).collect();
        writeln!(out, "{}\t{}", origin_token(walk.origin), nodes.join(" "))?;
    }
    Ok(())
}

pub fn load_walks(
    path: impl AsRef<Path>,
    g: &Graph,
    role: BatchRole,
) -> Result<WalkBatch, LoadError> {
    let mut walks = Vec::new();
    for (line, text) in data_lines(path.as_ref())? {
        let (origin_tok, rest) = match text.split_once('\t') {
            Some(pair) => pair,
            None => {
                return Err(LoadError::Malformed {
                    line,
                    expected: "origin<TAB>node list",
                    got: text,
                })
            }
        };
        let origin = parse_origin(origin_tok, line)?;
        let mut nodes = Vec::new();
        for tok in rest.split_whitespace() {
            let node = g.node_by_external(tok).ok_or_else(|| LoadError::UnknownNode {
                line,
                node: tok.to_string(),
            })?;
            nodes.push(node);
        }
        walks.push(Walk { nodes, origin });
    }
    Ok(WalkBatch::from_walks(role, walks)?)
}

/// Writes score triples "i j count" in external ids, sorted by dense pair.
pub fn save_scores(
    path: impl AsRef<Path>,
    entries: &[(u32, u32, u64)],
    g: &Graph,
) -> Result<(), LoadError> {
    let mut out = File::create(path)?;
    for &(u, v, c) in entries {
        writeln!(out, "{} {} {}", g.external_id(u), g.external_id(v), c)?;
    }
    Ok(())
}

pub fn load_scores(path: impl AsRef<Path>, g: &Graph) -> Result<Vec<(u32, u32, u64)>, LoadError> {
    let mut entries = Vec::new();
    for (line, text) in data_lines(path.as_ref())? {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(LoadError::Malformed {
                line,
                expected: "i j count",
                got: text,
            });
        }
        let u = g.node_by_external(parts[0]).ok_or_else(|| LoadError::UnknownNode {
            line,
            node: parts[0].to_string(),
        })?;
        let v = g.node_by_external(parts[1]).ok_or_else(|| LoadError::UnknownNode {
            line,
            node: parts[1].to_string(),
        })?;
        let count: u64 = parts[2].parse().map_err(|_| LoadError::Malformed {
            line,
            expected: "non-negative integer count",
            got: parts[2].to_string(),
        })?;
        entries.push((u, v, count));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn triangle_by_construction() {
        let f = write_temp("0 1\n1 2\n0 2\n");
        let g = load_edge_list(f.path()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 3);
    }

    #[test]
    fn dedup_and_self_loop_rule() {
        let f = write_temp("0 1\n1 0\n0 0\n");
        let g = load_edge_list(f.path()).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.m(), 1);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let f = write_temp("# header\n\na b\n# tail\nb c\n");
        let g = load_edge_list(f.path()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 2);
        assert_eq!(g.external_id(0), "a");
    }

    #[test]
    fn malformed_line_reports_number() {
        let f = write_temp("0 1\n2\n");
        match load_edge_list(f.path()) {
            Err(LoadError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        let f = write_temp("# nothing\n");
        assert!(matches!(load_edge_list(f.path()), Err(LoadError::EmptyGraph)));
    }

    #[test]
    fn self_loop_only_node_is_isolated() {
        let f = write_temp("0 1\nlone lone\n");
        match load_edge_list(f.path()) {
            Err(LoadError::Isolated { node }) => assert_eq!(node, "lone"),
            other => panic!("expected isolated error, got {other:?}"),
        }
        let g = load_edge_list_with(f.path(), LoadOptions { allow_isolated: true }).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 1);
    }

    #[test]
    fn first_appearance_id_assignment() {
        let f = write_temp("x y\ny z\nz x\n");
        let g = load_edge_list(f.path()).unwrap();
        assert_eq!(g.external_id(0), "x");
        assert_eq!(g.external_id(1), "y");
        assert_eq!(g.external_id(2), "z");
    }

    #[test]
    fn labels_and_protected_roundtrip() {
        let ef = write_temp("a b\nb c\nc a\n");
        let g = load_edge_list(ef.path()).unwrap();
        let lf = write_temp("a\t0\nc\t1\n");
        let labels = load_labels(lf.path(), &g).unwrap();
        assert_eq!(labels.class_of(0), Some(0));
        assert_eq!(labels.class_of(2), Some(1));
        assert_eq!(labels.classes(), 2);

        let pf = write_temp("b\n");
        let groups = load_protected(pf.path(), &g).unwrap();
        assert_eq!(groups.protected(), &[1]);

        let bad = write_temp("ghost\t0\n");
        assert!(matches!(
            load_labels(bad.path(), &g),
            Err(LoadError::UnknownNode { .. })
        ));
    }

    #[test]
    fn walks_roundtrip() {
        let ef = write_temp("a b\nb c\nc a\n");
        let g = load_edge_list(ef.path()).unwrap();
        let batch = WalkBatch::from_walks(
            BatchRole::Positive,
            vec![
                Walk {
                    nodes: vec![0, 1, 2],
                    origin: WalkOrigin::UniformStart,
                },
                Walk {
                    nodes: vec![2, 1, 0],
                    origin: WalkOrigin::LabelStart(3),
                },
                Walk {
                    nodes: vec![1, 2, 0],
                    origin: WalkOrigin::Generated,
                },
            ],
        )
        .unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save_walks(tmp.path(), &batch, &g).unwrap();
        let text = std::fs::read_to_string(tmp.path()).unwrap();
        assert!(text.contains("uniform-start\ta b c"));
        assert!(text.contains("label-start:3\tc b a"));
        let loaded = load_walks(tmp.path(), &g, BatchRole::Positive).unwrap();
        assert_eq!(loaded.walks(), batch.walks());
    }

    #[test]
    fn scores_roundtrip() {
        let ef = write_temp("a b\nb c\nc a\n");
        let g = load_edge_list(ef.path()).unwrap();
        let entries = vec![(0u32, 1u32, 5u64), (1, 2, 2)];
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save_scores(tmp.path(), &entries, &g).unwrap();
        let loaded = load_scores(tmp.path(), &g).unwrap();
        assert_eq!(loaded, entries);
    }
}
