//! Permutation-canonical form for discrete labeled graphs.
//!
//! Two graphs receive identical canonical byte strings exactly when one can
//! be turned into the other by permuting nodes while respecting node and
//! edge labels. Isolated ghost nodes are padding and are dropped first, so
//! the same structural graph embedded in schemas of different widths — or at
//! different positions — canonicalizes identically.
//!
//! The construction is iterative color refinement seeded with node labels,
//! followed by brute-force enumeration of node orders within the residual
//! color classes, keeping the lexicographically smallest encoding. Cells
//! whose nodes have no incident edges are interchangeable and are never
//! enumerated. The remaining enumeration is exponential in cell size, so
//! oversized cells (and oversized products of cell enumerations) are
//! rejected with an explicit error instead of hanging.

use thiserror::Error;

use crate::graph::GraphOneHot;

/// Largest refinement cell the enumeration will accept.
pub const DEFAULT_MAX_CELL: usize = 8;

/// Largest total number of candidate orders the enumeration will accept.
const MAX_TOTAL_ORDERS: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonError {
    #[error("canonicalization too expensive: {0}")]
    TooExpensive(String),
}

/// Canonical byte string of `g` under the default cell bound.
pub fn canonical_form(g: &GraphOneHot) -> Result<Vec<u8>, CanonError> {
    canonical_form_with(g, DEFAULT_MAX_CELL)
}

/// Canonical byte string of `g`, rejecting refinement cells larger than
/// `max_cell` nodes (unless the cell is edge-free and needs no enumeration).
pub fn canonical_form_with(g: &GraphOneHot, max_cell: usize) -> Result<Vec<u8>, CanonError> {
    let schema = g.schema();
    // Padding removal: a ghost node with no incident edges carries no
    // structure. Ghosts that do touch an edge (invalid graphs) are kept so
    // that such graphs stay distinguishable from their ghost-free versions.
    let keep: Vec<usize> = (0..schema.max_nodes)
        .filter(|&i| !g.is_ghost(i) || g.degree(i) > 0)
        .collect();
    let n = keep.len();
    let label = |v: usize| g.node_label(keep[v]);
    let edge = |v: usize, u: usize| g.edge_label(keep[v], keep[u]);

    let mut out = vec![schema.node_types as u8, schema.edge_types as u8, n as u8];
    if n == 0 {
        return Ok(out);
    }

    let colors = refine_colors(n, &label, &edge);

    // Group nodes into cells by final color, cells in color order.
    let cell_count = colors.iter().max().unwrap() + 1;
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); cell_count];
    for v in 0..n {
        cells[colors[v]].push(v);
    }

    // Edge-free cells are sets of indistinguishable nodes (same label, no
    // incident edges anywhere): any internal order yields the same encoding.
    let mut total: u64 = 1;
    let mut choices: Vec<Vec<Vec<usize>>> = Vec::with_capacity(cells.len());
    for cell in &cells {
        let inert = cell.iter().all(|&v| (0..n).all(|u| u == v || edge(v, u) == 0));
        if inert || cell.len() == 1 {
            choices.push(vec![cell.clone()]);
            continue;
        }
        if cell.len() > max_cell {
            return Err(CanonError::TooExpensive(format!(
                "a refinement cell has {} nodes (bound {max_cell})",
                cell.len()
            )));
        }
        let perms = permutations(cell);
        total = total.saturating_mul(perms.len() as u64);
        if total > MAX_TOTAL_ORDERS {
            return Err(CanonError::TooExpensive(format!(
                "more than {MAX_TOTAL_ORDERS} candidate node orders"
            )));
        }
        choices.push(perms);
    }

    // Walk the cartesian product of per-cell orders, keeping the smallest
    // encoding of labels followed by upper-triangle edge labels.
    let mut pick = vec![0usize; choices.len()];
    let mut best: Option<Vec<u8>> = None;
    let mut order = Vec::with_capacity(n);
    loop {
        order.clear();
        for (cell_idx, perms) in choices.iter().enumerate() {
            order.extend_from_slice(&perms[pick[cell_idx]]);
        }
        let mut enc = Vec::with_capacity(n + n * (n - 1) / 2);
        for &v in &order {
            enc.push(label(v) as u8);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                enc.push(edge(order[i], order[j]) as u8);
            }
        }
        if best.as_ref().is_none_or(|b| enc < *b) {
            best = Some(enc);
        }
        // Advance the mixed-radix counter over per-cell choices.
        let mut done = true;
        for (slot, perms) in pick.iter_mut().zip(&choices) {
            *slot += 1;
            if *slot < perms.len() {
                done = false;
                break;
            }
            *slot = 0;
        }
        if done {
            break;
        }
    }
    out.extend(best.expect("at least one candidate order"));
    Ok(out)
}

/// Iterative color refinement over the complete labeled graph: a node's
/// signature is its current color plus the multiset of (edge label, neighbor
/// color) pairs over *all* other nodes, absent edges included. Colors are
/// re-ranked from sorted signatures each round, which keeps them
/// isomorphism-invariant, and refinement stops when the partition is stable.
fn refine_colors(
    n: usize,
    label: &impl Fn(usize) -> usize,
    edge: &impl Fn(usize, usize) -> usize,
) -> Vec<usize> {
    // Initial colors: rank of the node label.
    let mut sorted_labels: Vec<usize> = (0..n).map(label).collect();
    sorted_labels.sort_unstable();
    sorted_labels.dedup();
    let mut colors: Vec<usize> = (0..n)
        .map(|v| sorted_labels.binary_search(&label(v)).unwrap())
        .collect();

    loop {
        let mut signatures: Vec<(Vec<usize>, usize)> = (0..n)
            .map(|v| {
                let mut pairs: Vec<(usize, usize)> = (0..n)
                    .filter(|&u| u != v)
                    .map(|u| (edge(v, u), colors[u]))
                    .collect();
                pairs.sort_unstable();
                let mut sig = Vec::with_capacity(1 + 2 * pairs.len());
                sig.push(colors[v]);
                for (e, c) in pairs {
                    sig.push(e);
                    sig.push(c);
                }
                (sig, v)
            })
            .collect();
        signatures.sort();
        let mut next = vec![0usize; n];
        let mut rank = 0;
        for w in 0..signatures.len() {
            if w > 0 && signatures[w].0 != signatures[w - 1].0 {
                rank += 1;
            }
            next[signatures[w].1] = rank;
        }
        let classes_before = colors.iter().max().unwrap() + 1;
        let classes_after = rank + 1;
        colors = next;
        if classes_after == classes_before {
            return colors;
        }
    }
}

/// All orderings of `items`, in a deterministic order.
fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &head) in items.iter().enumerate() {
        let mut rest: Vec<usize> = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}
