//! Label-preserving isomorphism of plumbing graphs.
//!
//! The canonical form is computed by colour refinement on (label, signed
//! incidence multiset) followed by an individualisation search over the
//! refined partition. The lexicographically smallest leaf encoding is the
//! canonical form. Automorphisms discovered along the way prune branches
//! that are images of already explored ones, which keeps graphs with many
//! interchangeable pendant pieces tractable.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{EdgeId, PlumbingGraph, Sign, ValidityReport, VertexId, VertexLabel};

/// Colour, sorted neighbourhood `(colour, sign, loop)` multiset, vertex.
type Signature = (u32, Vec<(u32, i8, bool)>, usize);

/// Byte string identifying an isomorphism class exactly.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm(Vec<u8>);

impl CanonicalForm {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for CanonicalForm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsoError {
    #[error("invalid graph: {0}")]
    Invalid(ValidityReport),
    #[error("brute force limited to {limit} vertices, got {vertices}")]
    TooLarge { vertices: usize, limit: usize },
}

/// A vertex and edge bijection between two isomorphic graphs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Isomorphism {
    pub vertices: HashMap<VertexId, VertexId>,
    pub edges: HashMap<EdgeId, EdgeId>,
}

pub const BRUTE_FORCE_LIMIT: usize = 8;

fn check(graph: &PlumbingGraph) -> Result<(), IsoError> {
    let report = graph.validate();
    if report.is_valid() {
        Ok(())
    } else {
        Err(IsoError::Invalid(report))
    }
}

pub fn canonical_form(graph: &PlumbingGraph) -> Result<CanonicalForm, IsoError> {
    check(graph)?;
    Ok(canonical_form_unchecked(graph))
}

/// Canonical form without the validity check; callers guarantee the graph
/// came out of a validity-preserving rewrite.
pub(crate) fn canonical_form_unchecked(graph: &PlumbingGraph) -> CanonicalForm {
    let ix = Indexed::new(graph);
    CanonicalForm(Canonizer::run(&ix).0)
}

pub fn are_isomorphic(g1: &PlumbingGraph, g2: &PlumbingGraph) -> Result<bool, IsoError> {
    check(g1)?;
    check(g2)?;
    Ok(quick_invariants(g1) == quick_invariants(g2)
        && canonical_form_unchecked(g1) == canonical_form_unchecked(g2))
}

fn quick_invariants(g: &PlumbingGraph) -> (usize, usize, usize) {
    (g.vertex_count(), g.edge_count(), g.loop_count())
}

/// Returns an explicit isomorphism `g1 -> g2` if one exists.
pub fn find_isomorphism(g1: &PlumbingGraph, g2: &PlumbingGraph) -> Option<Isomorphism> {
    if quick_invariants(g1) != quick_invariants(g2) {
        return None;
    }
    let (ix1, ix2) = (Indexed::new(g1), Indexed::new(g2));
    let (enc1, order1) = Canonizer::run(&ix1);
    let (enc2, order2) = Canonizer::run(&ix2);
    if enc1 != enc2 {
        return None;
    }
    let mut map = vec![0usize; ix1.ids.len()];
    for (&a, &b) in order1.iter().zip(&order2) {
        map[a] = b;
    }
    let vertices: HashMap<VertexId, VertexId> =
        (0..map.len()).map(|i| (ix1.ids[i], ix2.ids[map[i]])).collect();

    let key = |u: VertexId, v: VertexId, s: Sign| if u <= v { (u, v, s) } else { (v, u, s) };
    let mut pool: HashMap<(VertexId, VertexId, Sign), Vec<EdgeId>> = HashMap::new();
    for (id, e) in g2.edges() {
        pool.entry(key(e.u, e.v, e.sign)).or_default().push(id);
    }
    let mut edges = HashMap::new();
    for (id, e) in g1.edges() {
        let target = pool.get_mut(&key(vertices[&e.u], vertices[&e.v], e.sign))?.pop()?;
        edges.insert(id, target);
    }
    Some(Isomorphism { vertices, edges })
}

/// Exhaustive reference check over all label-preserving vertex bijections.
pub fn brute_force_isomorphic(g1: &PlumbingGraph, g2: &PlumbingGraph) -> Result<bool, IsoError> {
    for g in [g1, g2] {
        if g.vertex_count() > BRUTE_FORCE_LIMIT {
            return Err(IsoError::TooLarge { vertices: g.vertex_count(), limit: BRUTE_FORCE_LIMIT });
        }
    }
    if g1.vertex_count() != g2.vertex_count() || g1.edge_count() != g2.edge_count() {
        return Ok(false);
    }
    let (a, b) = (Indexed::new(g1), Indexed::new(g2));
    let mut target: Vec<(usize, usize, i8)> = b.edges.clone();
    target.sort_unstable();
    let mut used = vec![false; b.ids.len()];
    let mut perm = Vec::with_capacity(a.ids.len());
    Ok(extend_bijection(&a, &b, &target, &mut perm, &mut used))
}

fn extend_bijection(
    a: &Indexed,
    b: &Indexed,
    target: &[(usize, usize, i8)],
    perm: &mut Vec<usize>,
    used: &mut [bool],
) -> bool {
    let i = perm.len();
    if i == a.ids.len() {
        let mut mapped: Vec<(usize, usize, i8)> = a
            .edges
            .iter()
            .map(|&(u, v, s)| {
                let (pu, pv) = (perm[u], perm[v]);
                (pu.min(pv), pu.max(pv), s)
            })
            .collect();
        mapped.sort_unstable();
        return mapped == target;
    }
    for j in 0..b.ids.len() {
        if used[j] || a.labels[i] != b.labels[j] {
            continue;
        }
        used[j] = true;
        perm.push(j);
        let found = extend_bijection(a, b, target, perm, used);
        perm.pop();
        used[j] = false;
        if found {
            return true;
        }
    }
    false
}

/// Dense-index view of a graph.
struct Indexed {
    ids: Vec<VertexId>,
    labels: Vec<VertexLabel>,
    // (neighbour, sign, is_loop); a loop is listed once on its vertex.
    adj: Vec<Vec<(usize, i8, bool)>>,
    // (u, v, sign) with u <= v.
    edges: Vec<(usize, usize, i8)>,
}

impl Indexed {
    fn new(g: &PlumbingGraph) -> Self {
        let mut ids = Vec::with_capacity(g.vertex_count());
        let mut labels = Vec::with_capacity(g.vertex_count());
        let mut index = vec![usize::MAX; g.next_vertex_id().0 as usize];
        for (id, label) in g.vertices() {
            index[id.0 as usize] = ids.len();
            ids.push(id);
            labels.push(label);
        }
        let mut adj = vec![Vec::new(); ids.len()];
        let mut edges = Vec::with_capacity(g.edge_count());
        for (_, e) in g.edges() {
            let (u, v) = (index[e.u.0 as usize], index[e.v.0 as usize]);
            let s = e.sign.value() as i8;
            if u == v {
                adj[u].push((u, s, true));
            } else {
                adj[u].push((v, s, false));
                adj[v].push((u, s, false));
            }
            edges.push((u.min(v), u.max(v), s));
        }
        Indexed { ids, labels, adj, edges }
    }

    fn n(&self) -> usize {
        self.ids.len()
    }

    fn initial_colors(&self) -> Vec<u32> {
        let mut distinct = self.labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        self.labels
            .iter()
            .map(|l| distinct.binary_search(l).expect("label present") as u32)
            .collect()
    }

    /// Refines colours to the coarsest stable partition. Colours stay dense
    /// ranks and never reorder existing cells.
    fn refine(&self, colors: &mut [u32]) {
        let n = self.n();
        let mut cells = cell_count(colors);
        let mut sigs: Vec<Signature> = Vec::with_capacity(n);
        loop {
            sigs.clear();
            for v in 0..n {
                let mut nb: Vec<(u32, i8, bool)> =
                    self.adj[v].iter().map(|&(w, s, lp)| (colors[w], s, lp)).collect();
                nb.sort_unstable();
                sigs.push((colors[v], nb, v));
            }
            sigs.sort_unstable_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
            let mut rank = 0u32;
            for i in 0..n {
                if i > 0 && (sigs[i].0, &sigs[i].1) != (sigs[i - 1].0, &sigs[i - 1].1) {
                    rank += 1;
                }
                colors[sigs[i].2] = rank;
            }
            let new_cells = if n == 0 { 0 } else { rank as usize + 1 };
            if new_cells == cells {
                return;
            }
            cells = new_cells;
        }
    }

    fn encode(&self, order: &[usize]) -> Vec<u8> {
        let n = self.n();
        let mut pos = vec![0u32; n];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p as u32;
        }
        let mut edges: Vec<(u32, u32, i8)> = self
            .edges
            .iter()
            .map(|&(u, v, s)| {
                let (pu, pv) = (pos[u], pos[v]);
                (pu.min(pv), pu.max(pv), s)
            })
            .collect();
        edges.sort_unstable();
        let mut out = Vec::with_capacity(8 + 24 * n + 9 * edges.len());
        out.extend_from_slice(&(n as u32).to_be_bytes());
        for &v in order {
            let l = self.labels[v];
            for x in [l.e, l.g, l.r] {
                // Offset so that byte order matches numeric order.
                out.extend_from_slice(&((x as u64) ^ (1 << 63)).to_be_bytes());
            }
        }
        out.extend_from_slice(&(edges.len() as u32).to_be_bytes());
        for (u, v, s) in edges {
            out.extend_from_slice(&u.to_be_bytes());
            out.extend_from_slice(&v.to_be_bytes());
            out.push(s as u8);
        }
        out
    }
}

fn cell_count(colors: &[u32]) -> usize {
    colors.iter().max().map_or(0, |&m| m as usize + 1)
}

const MAX_STORED_AUTOMORPHISMS: usize = 256;

struct Canonizer<'a> {
    ix: &'a Indexed,
    best: Option<(Vec<u8>, Vec<usize>)>,
    // encoding -> (vertex order, individualisation prefix)
    leaves: HashMap<Vec<u8>, (Vec<usize>, Vec<usize>)>,
    automorphisms: Vec<Vec<usize>>,
}

impl<'a> Canonizer<'a> {
    fn run(ix: &'a Indexed) -> (Vec<u8>, Vec<usize>) {
        let mut c = Canonizer { ix, best: None, leaves: HashMap::new(), automorphisms: Vec::new() };
        let mut colors = ix.initial_colors();
        ix.refine(&mut colors);
        c.search(colors, &mut Vec::new());
        c.best.expect("search visits at least one leaf")
    }

    /// Returns `Some(level)` when the remaining work down to `level` is an
    /// automorphic image of work already done.
    fn search(&mut self, colors: Vec<u32>, prefix: &mut Vec<usize>) -> Option<usize> {
        let n = self.ix.n();
        if cell_count(&colors) == n {
            return self.leaf(&colors, prefix);
        }
        let cell = target_cell(&colors);
        let mut explored: Vec<usize> = Vec::new();
        for &w in &cell {
            if !explored.is_empty() && self.in_explored_orbit(w, &explored, prefix) {
                continue;
            }
            explored.push(w);
            let mut next: Vec<u32> = {
                let keys: Vec<(u32, bool)> = (0..n).map(|x| (colors[x], x != w)).collect();
                let mut sorted = keys.clone();
                sorted.sort_unstable();
                sorted.dedup();
                keys.iter().map(|k| sorted.binary_search(k).expect("key present") as u32).collect()
            };
            self.ix.refine(&mut next);
            prefix.push(w);
            let jump = self.search(next, prefix);
            prefix.pop();
            if let Some(level) = jump {
                if level < prefix.len() {
                    return Some(level);
                }
            }
        }
        None
    }

    fn leaf(&mut self, colors: &[u32], prefix: &[usize]) -> Option<usize> {
        let mut order = vec![0usize; colors.len()];
        for (v, &c) in colors.iter().enumerate() {
            order[c as usize] = v;
        }
        let enc = self.ix.encode(&order);
        if let Some((other_order, other_prefix)) = self.leaves.get(&enc) {
            let mut gamma = vec![0usize; order.len()];
            for (&a, &b) in other_order.iter().zip(&order) {
                gamma[a] = b;
            }
            if self.automorphisms.len() < MAX_STORED_AUTOMORPHISMS {
                self.automorphisms.push(gamma);
            }
            let common = prefix.iter().zip(other_prefix).take_while(|(a, b)| a == b).count();
            return Some(common);
        }
        if self.best.as_ref().is_none_or(|(b, _)| enc < *b) {
            self.best = Some((enc.clone(), order.clone()));
        }
        self.leaves.insert(enc, (order, prefix.to_vec()));
        None
    }

    fn in_explored_orbit(&self, w: usize, explored: &[usize], prefix: &[usize]) -> bool {
        let n = self.ix.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut any = false;
        for gamma in &self.automorphisms {
            if prefix.iter().any(|&p| gamma[p] != p) {
                continue;
            }
            any = true;
            for (x, &y) in gamma.iter().enumerate() {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx] = ry;
                }
            }
        }
        if !any {
            return false;
        }
        let rw = find(&mut parent, w);
        explored.iter().any(|&x| find(&mut parent, x) == rw)
    }
}

/// Vertices of the smallest non-singleton cell (lowest colour on ties).
fn target_cell(colors: &[u32]) -> Vec<usize> {
    let mut sizes = vec![0usize; cell_count(colors)];
    for &c in colors {
        sizes[c as usize] += 1;
    }
    let target = sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1)
        .min_by_key(|&(c, &s)| (s, c))
        .map(|(c, _)| c as u32)
        .expect("non-discrete partition has a non-singleton cell");
    (0..colors.len()).filter(|&v| colors[v] == target).collect()
}
