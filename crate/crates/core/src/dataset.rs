//! Line-delimited dataset files and DOT export.
//!
//! One graph per line as a UTF-8 JSON record with fields `n` (active node
//! count), `labels` (node types of the active nodes, `1..=d`), and `edges`
//! (triples `[i, j, k]` with `i < j < n` and `k` in `1..=t`). Active nodes
//! are listed first; padding up to the schema's maximum node count is
//! implicit. Serialization compacts a graph's active nodes to the front, so
//! graphs already stored that way — including everything the generators and
//! readers produce — round-trip exactly, and others round-trip up to node
//! order.
//!
//! A ghost node with an incident edge has no representation in this format
//! and is rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphOneHot, GraphSchema};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph has an edge incident to ghost node {node}; not serializable")]
    GhostEdge { node: usize },
}

#[derive(Serialize, Deserialize)]
struct Record {
    n: usize,
    labels: Vec<usize>,
    edges: Vec<[usize; 3]>,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One graph as a single JSON line (no trailing newline).
pub fn graph_to_line(g: &GraphOneHot) -> Result<String, DatasetError> {
    let schema = g.schema();
    let mut compact = Vec::new(); // old index -> new index, active nodes first
    let mut labels = Vec::new();
    let mut remap = vec![usize::MAX; schema.max_nodes];
    for i in 0..schema.max_nodes {
        if !g.is_ghost(i) {
            remap[i] = compact.len();
            compact.push(i);
            labels.push(g.node_label(i));
        } else if g.degree(i) > 0 {
            return Err(DatasetError::GhostEdge { node: i });
        }
    }
    let mut edges = Vec::new();
    for (i, j, k) in g.edge_triples() {
        let (a, b) = (remap[i], remap[j]);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        edges.push([a, b, k]);
    }
    edges.sort_unstable();
    let record = Record {
        n: labels.len(),
        labels,
        edges,
    };
    Ok(serde_json::to_string(&record).expect("record serialization cannot fail"))
}

/// Parse one JSON line into a graph padded to the schema.
pub fn graph_from_line(line: &str, schema: GraphSchema) -> Result<GraphOneHot, DatasetError> {
    graph_from_line_at(line, schema, 1)
}

fn parse_err(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        line,
        message: message.into(),
    }
}

fn graph_from_line_at(
    line: &str,
    schema: GraphSchema,
    line_no: usize,
) -> Result<GraphOneHot, DatasetError> {
    let record: Record = serde_json::from_str(line)
        .map_err(|e| parse_err(line_no, format!("malformed record: {e}")))?;
    if record.n > schema.max_nodes {
        return Err(parse_err(
            line_no,
            format!(
                "field 'n': {} nodes exceed the schema maximum {}",
                record.n, schema.max_nodes
            ),
        ));
    }
    if record.labels.len() != record.n {
        return Err(parse_err(
            line_no,
            format!(
                "field 'labels': {} entries for n = {}",
                record.labels.len(),
                record.n
            ),
        ));
    }
    let mut g = GraphOneHot::empty(schema);
    for (i, &label) in record.labels.iter().enumerate() {
        if label == 0 || label > schema.node_types {
            return Err(parse_err(
                line_no,
                format!(
                    "field 'labels[{i}]': label {label} outside 1..={}",
                    schema.node_types
                ),
            ));
        }
        g.set_node_label(i, label);
    }
    let mut seen = std::collections::HashSet::new();
    for (idx, &[i, j, k]) in record.edges.iter().enumerate() {
        if i >= j || j >= record.n {
            return Err(parse_err(
                line_no,
                format!("field 'edges[{idx}]': endpoints [{i}, {j}] need i < j < n = {}", record.n),
            ));
        }
        if k == 0 || k > schema.edge_types {
            return Err(parse_err(
                line_no,
                format!(
                    "field 'edges[{idx}]': edge type {k} outside 1..={}",
                    schema.edge_types
                ),
            ));
        }
        if !seen.insert((i, j)) {
            return Err(parse_err(
                line_no,
                format!("field 'edges[{idx}]': duplicate edge [{i}, {j}]"),
            ));
        }
        g.set_edge_label(i, j, k);
    }
    Ok(g)
}

/// Write graphs to `path`, one line each. Returns the number written.
pub fn write_dataset<'a>(
    path: &Path,
    graphs: impl IntoIterator<Item = &'a GraphOneHot>,
) -> Result<usize, DatasetError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut count = 0;
    for g in graphs {
        let line = graph_to_line(g)?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
        count += 1;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(count)
}

/// Read every graph from `path`. Blank lines are ignored; the first
/// malformed line aborts with its position.
pub fn read_dataset(path: &Path, schema: GraphSchema) -> Result<Vec<GraphOneHot>, DatasetError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_dataset_from(BufReader::new(file), schema, path)
}

fn read_dataset_from(
    reader: impl Read,
    schema: GraphSchema,
    path: &Path,
) -> Result<Vec<GraphOneHot>, DatasetError> {
    let mut graphs = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        graphs.push(graph_from_line_at(&line, schema, idx + 1)?);
    }
    Ok(graphs)
}

/// Graphviz DOT rendering; ghost nodes are omitted, node labels become text
/// labels and edge types become `label=` attributes (omitted for type 1).
pub fn to_dot(g: &GraphOneHot, name: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("graph \"{name}\" {{\n"));
    out.push_str("  node [shape=circle];\n");
    for i in 0..g.schema().max_nodes {
        if !g.is_ghost(i) {
            out.push_str(&format!("  v{i} [label=\"{}\"];\n", g.node_label(i)));
        }
    }
    for (i, j, k) in g.edge_triples() {
        if k == 1 {
            out.push_str(&format!("  v{i} -- v{j};\n"));
        } else {
            out.push_str(&format!("  v{i} -- v{j} [label=\"{k}\"];\n"));
        }
    }
    out.push_str("}\n");
    out
}
