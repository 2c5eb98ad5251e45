//! The von Neumann moves R0-R5 and R8, their implemented inverses, and
//! enumeration of every place a move applies.
//!
//! Move tables (left side -> right side):
//!
//! * R0 reversal at `v`: negate every non-loop edge at `v`; if `g(v) < 0`
//!   loops are negated too.
//! * R1 blowing down a `(ρ,0,0)` vertex `w`, `ρ = ±1`, no loops:
//!   - one neighbour `a`: delete `w`, `e(a) -= ρ`;
//!   - two edge-ends to `a`, `b` with signs `ε1`, `ε2`: delete `w`, join
//!     `a`-`b` with `ε0 = -ρ ε1 ε2`, `e(a) -= ρ`, `e(b) -= ρ` (a loop when
//!     `a = b`).
//! * R2 RP² absorption: `v -- c(0,0,0)` where `c` has exactly two further
//!   neighbours, leaves `(2δ1,0,0)` and `(2δ2,0,0)`: delete `c` and both
//!   leaves, `e(v) -= δ` with `δ = (δ1+δ2)/2`, `g(v) = g(v) # -1`.
//! * R3 0-chain absorption: `a -ε- u(0,0,0) -ε̄- b`, `a != b`: delete `u`,
//!   merge `b` into `a` with label `(ea+eb, ga#gb, ra+rb)`; every edge that
//!   was not a loop before the merge is multiplied by `-ε ε̄`.
//! * R4 / R5 handle absorption: `u(0,0,0)` joined to a single vertex `v` by
//!   exactly two edges. Equal signs (non-orientable handle, R4) give
//!   `g(v) # -2`; opposite signs (orientable handle, R5) give `g(v) # 1`.
//! * R8 annulus absorption: a degree-one `(0,0,1)` vertex is deleted and
//!   its neighbour gains a boundary component.
//!
//! Euler numbers on vertices with `r > 0` are normalised to zero after every
//! rewrite. Inverses exist for R1 (leaf insertion or edge subdivision) and
//! R3 (vertex splitting through a new 0-chain); R0 is its own inverse.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{genus_add, EdgeId, GraphError, PlumbingGraph, Sign, VertexId, VertexLabel};
use crate::iso::Isomorphism;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    R0,
    R1,
    R2,
    R3,
    R4,
    R5,
    R8,
}

impl MoveKind {
    pub const ALL: [MoveKind; 7] = [
        MoveKind::R0,
        MoveKind::R1,
        MoveKind::R2,
        MoveKind::R3,
        MoveKind::R4,
        MoveKind::R5,
        MoveKind::R8,
    ];

    /// Kinds with an implemented `Inverse` direction.
    pub const WITH_INVERSE: [MoveKind; 2] = [MoveKind::R1, MoveKind::R3];

    pub fn has_inverse(self) -> bool {
        Self::WITH_INVERSE.contains(&self)
    }

    /// Whether an application of this kind can be undone by some move
    /// application (R0 undoes itself).
    pub fn is_reversible(self) -> bool {
        self == MoveKind::R0 || self.has_inverse()
    }

    pub fn parse(s: &str) -> Option<MoveKind> {
        Self::ALL.into_iter().find(|k| k.to_string().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "fwd")]
    Forward,
    #[serde(rename = "inv")]
    Inverse,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Inverse];
}

/// Vertex and edge ids matched by a move pattern.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeId>,
    /// R3 inverse only: loops at the split vertex that become edges between
    /// the two halves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bridges: Vec<EdgeId>,
}

/// Move-specific parameters. Unused fields stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_bar: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_a: Option<VertexLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_b: Option<VertexLabel>,
}

/// A fully instantiated move. Serialized as
/// `{"kind": "R3", "dir": "fwd", "site": {...}, "params": {...}}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MoveApplication {
    pub kind: MoveKind,
    #[serde(rename = "dir")]
    pub direction: Direction,
    #[serde(default)]
    pub site: Site,
    #[serde(default)]
    pub params: Params,
}

impl MoveApplication {
    pub fn r0(vertex: VertexId) -> Self {
        MoveApplication {
            kind: MoveKind::R0,
            direction: Direction::Forward,
            site: Site { vertices: vec![vertex], ..Site::default() },
            params: Params::default(),
        }
    }

    /// Renames every id through an isomorphism of the graph it applies to.
    pub fn remap(&self, iso: &Isomorphism) -> Option<MoveApplication> {
        let vertices =
            self.site.vertices.iter().map(|v| iso.vertices.get(v).copied()).collect::<Option<_>>()?;
        let map = |es: &[EdgeId]| -> Option<Vec<EdgeId>> {
            es.iter().map(|e| iso.edges.get(e).copied()).collect()
        };
        let mut edges = map(&self.site.edges)?;
        let mut bridges = map(&self.site.bridges)?;
        let mut params = self.params.clone();
        match (self.kind, self.direction) {
            // Ordered pairs: keep them ascending and swap the paired parameters.
            (MoveKind::R3 | MoveKind::R4 | MoveKind::R5, Direction::Forward) if edges.len() == 2 => {
                if edges[0] > edges[1] {
                    edges.swap(0, 1);
                    std::mem::swap(&mut params.eps, &mut params.eps_bar);
                }
            }
            (MoveKind::R2, _) if edges.len() == 3 => {
                if edges[1] > edges[2] {
                    edges.swap(1, 2);
                    std::mem::swap(&mut params.delta1, &mut params.delta2);
                }
            }
            (MoveKind::R1, Direction::Inverse) => {}
            _ => edges.sort_unstable(),
        }
        bridges.sort_unstable();
        Some(MoveApplication { kind: self.kind, direction: self.direction, site: Site { vertices, edges, bridges }, params })
    }

    /// [`remap`](Self::remap) from `source` onto `target`, also fixing the
    /// one orientation-dependent parameter: subdividing an edge that the
    /// isomorphism stores reversed puts the `eps` side at the other end.
    pub fn transport(
        &self,
        iso: &Isomorphism,
        source: &PlumbingGraph,
        target: &PlumbingGraph,
    ) -> Option<MoveApplication> {
        let mut out = self.remap(iso)?;
        if self.kind == MoveKind::R1 && self.direction == Direction::Inverse {
            if let (Some(&x), Some(&y)) = (self.site.edges.first(), out.site.edges.first()) {
                let (from, to) = (source.edge(x).ok()?, target.edge(y).ok()?);
                if !from.is_loop() && iso.vertices.get(&from.u) != Some(&to.u) {
                    let (rho, eps) = (self.params.rho?, self.params.eps?);
                    out.params.eps = Some(-(rho * eps * from.sign));
                }
            }
        }
        Some(out)
    }
}

impl fmt::Display for MoveApplication {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::Forward => "fwd",
            Direction::Inverse => "inv",
        };
        write!(f, "{}/{} at", self.kind, dir)?;
        for v in &self.site.vertices {
            write!(f, " {v}")?;
        }
        for e in &self.site.edges {
            write!(f, " {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MoveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{kind} pattern mismatch: {reason}")]
    PatternMismatch { kind: MoveKind, reason: String },
    #[error("{kind} parameters do not match the site: {reason}")]
    ParamMismatch { kind: MoveKind, reason: String },
    #[error("{0} has no implemented inverse")]
    NoInverse(MoveKind),
}

fn mismatch(kind: MoveKind, reason: impl Into<String>) -> MoveError {
    MoveError::PatternMismatch { kind, reason: reason.into() }
}

fn bad_params(kind: MoveKind, reason: impl Into<String>) -> MoveError {
    MoveError::ParamMismatch { kind, reason: reason.into() }
}

fn sign_of(kind: MoveKind, x: i64) -> Result<Sign, MoveError> {
    Sign::from_value(x).ok_or_else(|| mismatch(kind, format!("expected ±1, found {x}")))
}

fn require(kind: MoveKind, p: Option<Sign>, name: &str) -> Result<Sign, MoveError> {
    p.ok_or_else(|| bad_params(kind, format!("missing parameter {name}")))
}

fn expect_param(kind: MoveKind, given: Option<Sign>, actual: Sign, name: &str) -> Result<(), MoveError> {
    match given {
        Some(s) if s == actual => Ok(()),
        Some(s) => Err(bad_params(kind, format!("{name} = {} but site has {}", s.value(), actual.value()))),
        None => Err(bad_params(kind, format!("missing parameter {name}"))),
    }
}

fn shift_euler(g: &mut PlumbingGraph, v: VertexId, delta: i64) -> Result<(), GraphError> {
    let l = g.label(v)?;
    g.set_label(v, VertexLabel { e: l.e + delta, ..l }.normalized())
}

fn site_shape(app: &MoveApplication, vertices: usize, edges: usize) -> Result<(), MoveError> {
    if app.site.vertices.len() != vertices || app.site.edges.len() != edges || !app.site.bridges.is_empty() {
        return Err(mismatch(
            app.kind,
            format!("site must name {vertices} vertices and {edges} edges"),
        ));
    }
    Ok(())
}

fn only_params(app: &MoveApplication, allowed: Params) -> Result<(), MoveError> {
    // `allowed` mirrors the app's params with permitted fields kept.
    if allowed != app.params {
        return Err(bad_params(app.kind, "unexpected parameters for this move"));
    }
    Ok(())
}

/// Applies a move and returns the rewritten graph.
pub fn apply_move(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    let mut g = graph.clone();
    apply_move_in_place(&mut g, app)?;
    Ok(g)
}

/// In-place variant of [`apply_move`]. On error the graph is left unchanged.
pub fn apply_move_in_place(graph: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    if app.direction == Direction::Inverse && !app.kind.has_inverse() {
        return Err(MoveError::NoInverse(app.kind));
    }
    match (app.kind, app.direction) {
        (MoveKind::R0, _) => {
            site_shape(app, 1, 0)?;
            only_params(app, Params::default())?;
            reverse(graph, app.site.vertices[0])
        }
        (MoveKind::R1, Direction::Forward) => blow_down(graph, app),
        (MoveKind::R1, Direction::Inverse) => blow_up(graph, app),
        (MoveKind::R2, _) => rp2_absorb(graph, app),
        (MoveKind::R3, Direction::Forward) => zero_chain_absorb(graph, app),
        (MoveKind::R3, Direction::Inverse) => zero_chain_split(graph, app),
        (MoveKind::R4 | MoveKind::R5, _) => handle_absorb(graph, app),
        (MoveKind::R8, _) => annulus_absorb(graph, app),
    }
}

pub fn apply_r0(graph: &PlumbingGraph, vertex: VertexId) -> Result<PlumbingGraph, MoveError> {
    let mut g = graph.clone();
    reverse(&mut g, vertex)?;
    Ok(g)
}

fn apply_kind(graph: &PlumbingGraph, app: &MoveApplication, kind: MoveKind) -> Result<PlumbingGraph, MoveError> {
    if app.kind != kind {
        return Err(mismatch(kind, format!("application is {}", app.kind)));
    }
    apply_move(graph, app)
}

pub fn apply_r1(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    apply_kind(graph, app, MoveKind::R1)
}

pub fn apply_r2(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    apply_kind(graph, app, MoveKind::R2)
}

pub fn apply_r3(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    apply_kind(graph, app, MoveKind::R3)
}

pub fn apply_r4(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    apply_kind(graph, app, MoveKind::R4)
}

pub fn apply_r5(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    apply_kind(graph, app, MoveKind::R5)
}

pub fn apply_r8(graph: &PlumbingGraph, app: &MoveApplication) -> Result<PlumbingGraph, MoveError> {
    apply_kind(graph, app, MoveKind::R8)
}

fn reverse(g: &mut PlumbingGraph, v: VertexId) -> Result<(), MoveError> {
    let label = g.label(v)?;
    let incident = g.incident_edges(v)?.to_vec();
    for e in incident {
        let edge = *g.edge(e)?;
        if !edge.is_loop() || label.g < 0 {
            g.set_sign(e, -edge.sign)?;
        }
    }
    Ok(())
}

/// Checks that `site_edges` is exactly the incidence list of `v`.
fn exact_incidence(g: &PlumbingGraph, kind: MoveKind, v: VertexId, site_edges: &[EdgeId]) -> Result<(), MoveError> {
    let mut sorted = site_edges.to_vec();
    sorted.sort_unstable();
    if g.incident_edges(v)? != sorted.as_slice() {
        return Err(mismatch(kind, format!("site edges are not exactly the edges at {v}")));
    }
    for &e in site_edges {
        if g.edge(e)?.is_loop() {
            return Err(mismatch(kind, format!("{e} is a loop")));
        }
    }
    Ok(())
}

struct BlowDown {
    w: VertexId,
    rho: Sign,
    ends: Vec<(VertexId, Sign)>,
}

fn match_blow_down(g: &PlumbingGraph, app: &MoveApplication) -> Result<BlowDown, MoveError> {
    let kind = MoveKind::R1;
    if app.site.vertices.len() != 1 || !(1..=2).contains(&app.site.edges.len()) || !app.site.bridges.is_empty() {
        return Err(mismatch(kind, "site must name one vertex and its one or two edges"));
    }
    let w = app.site.vertices[0];
    let l = g.label(w)?;
    if l.g != 0 || l.r != 0 || l.e.abs() != 1 {
        return Err(mismatch(kind, format!("{w} must be (±1,0,0), found {l}")));
    }
    let rho = sign_of(kind, l.e)?;
    exact_incidence(g, kind, w, &app.site.edges)?;
    expect_param(kind, app.params.rho, rho, "rho")?;
    only_params(app, Params { rho: Some(rho), ..Params::default() })?;
    let ends = app
        .site
        .edges
        .iter()
        .map(|&e| {
            let edge = g.edge(e)?;
            Ok((edge.other(w), edge.sign))
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    Ok(BlowDown { w, rho, ends })
}

fn blow_down(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let m = match_blow_down(g, app)?;
    let rho = m.rho.value();
    g.remove_vertex(m.w)?;
    if let [(a, e1), (b, e2)] = m.ends[..] {
        g.add_edge(a, b, -(m.rho * e1 * e2))?;
    }
    for &(a, _) in &m.ends {
        shift_euler(g, a, -rho)?;
    }
    Ok(())
}

fn blow_up(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let kind = MoveKind::R1;
    let rho = require(kind, app.params.rho, "rho")?;
    let eps = require(kind, app.params.eps, "eps")?;
    only_params(app, Params { rho: Some(rho), eps: Some(eps), ..Params::default() })?;
    let new_label = VertexLabel::new(rho.value(), 0, 0);
    match (&app.site.vertices[..], &app.site.edges[..]) {
        ([a], []) if app.site.bridges.is_empty() => {
            let a = *a;
            g.label(a)?;
            let w = g.add_vertex(new_label);
            g.add_edge(a, w, eps)?;
            shift_euler(g, a, rho.value())?;
        }
        ([], [x]) if app.site.bridges.is_empty() => {
            let edge = *g.edge(*x)?;
            g.remove_edge(*x)?;
            let w = g.add_vertex(new_label);
            g.add_edge(edge.u, w, eps)?;
            g.add_edge(w, edge.v, -(rho * eps * edge.sign))?;
            shift_euler(g, edge.u, rho.value())?;
            shift_euler(g, edge.v, rho.value())?;
        }
        _ => return Err(mismatch(kind, "inverse site must be one vertex or one edge")),
    }
    Ok(())
}

struct Rp2 {
    c: VertexId,
    v: VertexId,
    leaves: [VertexId; 2],
    deltas: [Sign; 2],
}

fn match_rp2(g: &PlumbingGraph, app: &MoveApplication) -> Result<Rp2, MoveError> {
    let kind = MoveKind::R2;
    site_shape(app, 2, 3)?;
    let (c, v) = (app.site.vertices[0], app.site.vertices[1]);
    let lc = g.label(c)?;
    if lc != VertexLabel::new(0, 0, 0) {
        return Err(mismatch(kind, format!("{c} must be (0,0,0), found {lc}")));
    }
    exact_incidence(g, kind, c, &app.site.edges)?;
    let [evc, e1, e2] = [app.site.edges[0], app.site.edges[1], app.site.edges[2]];
    if e1 >= e2 {
        return Err(mismatch(kind, "leaf edges must be listed in ascending order"));
    }
    if g.edge(evc)?.other(c) != v {
        return Err(mismatch(kind, format!("{evc} does not join {c} to {v}")));
    }
    let mut leaves = [c; 2];
    let mut deltas = [Sign::Plus; 2];
    for (i, e) in [e1, e2].into_iter().enumerate() {
        let leaf = g.edge(e)?.other(c);
        let l = g.label(leaf)?;
        if l.g != 0 || l.r != 0 || l.e.abs() != 2 || g.degree(leaf)? != 1 {
            return Err(mismatch(kind, format!("{leaf} must be a (±2,0,0) leaf, found {l}")));
        }
        leaves[i] = leaf;
        deltas[i] = sign_of(kind, l.e / 2)?;
    }
    if v == leaves[0] || v == leaves[1] || leaves[0] == leaves[1] {
        return Err(mismatch(kind, "neighbours of the centre must be distinct"));
    }
    expect_param(kind, app.params.delta1, deltas[0], "delta1")?;
    expect_param(kind, app.params.delta2, deltas[1], "delta2")?;
    only_params(
        app,
        Params { delta1: Some(deltas[0]), delta2: Some(deltas[1]), ..Params::default() },
    )?;
    Ok(Rp2 { c, v, leaves, deltas })
}

fn rp2_absorb(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let m = match_rp2(g, app)?;
    let delta = (m.deltas[0].value() + m.deltas[1].value()) / 2;
    for x in [m.c, m.leaves[0], m.leaves[1]] {
        g.remove_vertex(x)?;
    }
    let l = g.label(m.v)?;
    g.set_label(
        m.v,
        VertexLabel { e: l.e - delta, g: genus_add(l.g, -1), r: l.r }.normalized(),
    )?;
    Ok(())
}

struct ChainVertex {
    u: VertexId,
    ends: [(VertexId, EdgeId, Sign); 2],
}

/// Shared matcher for R3, R4 and R5: a `(0,0,0)` vertex with exactly two
/// non-loop edges.
fn match_chain_vertex(g: &PlumbingGraph, app: &MoveApplication) -> Result<ChainVertex, MoveError> {
    let kind = app.kind;
    site_shape(app, 1, 2)?;
    let u = app.site.vertices[0];
    let l = g.label(u)?;
    if l != VertexLabel::new(0, 0, 0) {
        return Err(mismatch(kind, format!("{u} must be (0,0,0), found {l}")));
    }
    let (e1, e2) = (app.site.edges[0], app.site.edges[1]);
    if e1 >= e2 {
        return Err(mismatch(kind, "edges must be listed in ascending order"));
    }
    exact_incidence(g, kind, u, &app.site.edges)?;
    let end = |e: EdgeId| -> Result<(VertexId, EdgeId, Sign), MoveError> {
        let edge = g.edge(e)?;
        Ok((edge.other(u), e, edge.sign))
    };
    let ends = [end(e1)?, end(e2)?];
    expect_param(kind, app.params.eps, ends[0].2, "eps")?;
    expect_param(kind, app.params.eps_bar, ends[1].2, "eps_bar")?;
    only_params(
        app,
        Params { eps: Some(ends[0].2), eps_bar: Some(ends[1].2), ..Params::default() },
    )?;
    Ok(ChainVertex { u, ends })
}

fn zero_chain_absorb(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let m = match_chain_vertex(g, app)?;
    let [(a, _, eps), (b, _, eps_bar)] = m.ends;
    if a == b {
        return Err(mismatch(MoveKind::R3, "both chain edges end at the same vertex"));
    }
    let twist = -(eps * eps_bar);
    let (la, lb) = (g.label(a)?, g.label(b)?);
    g.remove_vertex(m.u)?;
    let touched: BTreeSet<EdgeId> =
        g.incident_edges(a)?.iter().chain(g.incident_edges(b)?).copied().collect();
    for e in touched {
        let edge = *g.edge(e)?;
        if !edge.is_loop() {
            g.set_sign(e, twist * edge.sign)?;
        }
        let relink = |x: VertexId| if x == b { a } else { x };
        g.rewire(e, relink(edge.u), relink(edge.v))?;
    }
    g.remove_vertex(b)?;
    g.set_label(
        a,
        VertexLabel { e: la.e + lb.e, g: genus_add(la.g, lb.g), r: la.r + lb.r }.normalized(),
    )?;
    Ok(())
}

fn zero_chain_split(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let kind = MoveKind::R3;
    if app.site.vertices.len() != 1 {
        return Err(mismatch(kind, "inverse site must name the vertex to split"));
    }
    let m = app.site.vertices[0];
    let lm = g.label(m)?;
    let eps = require(kind, app.params.eps, "eps")?;
    let eps_bar = require(kind, app.params.eps_bar, "eps_bar")?;
    let la = app.params.label_a.ok_or_else(|| bad_params(kind, "missing label_a"))?;
    let lb = app.params.label_b.ok_or_else(|| bad_params(kind, "missing label_b"))?;
    only_params(
        app,
        Params { eps: Some(eps), eps_bar: Some(eps_bar), label_a: Some(la), label_b: Some(lb), ..Params::default() },
    )?;
    if !la.is_valid() || !lb.is_valid() {
        return Err(bad_params(kind, "split labels must be valid vertex labels"));
    }
    if la.r + lb.r != lm.r || genus_add(la.g, lb.g) != lm.g || (lm.r == 0 && la.e + lb.e != lm.e) {
        return Err(bad_params(kind, format!("{la} and {lb} do not merge to {lm}")));
    }
    let incident = g.incident_edges(m)?.to_vec();
    let moved: BTreeSet<EdgeId> = app.site.edges.iter().copied().collect();
    let bridges: BTreeSet<EdgeId> = app.site.bridges.iter().copied().collect();
    if moved.len() != app.site.edges.len() || bridges.len() != app.site.bridges.len() {
        return Err(mismatch(kind, "duplicate edge ids in site"));
    }
    for e in moved.iter().chain(&bridges) {
        if !incident.contains(e) {
            return Err(mismatch(kind, format!("{e} is not incident to {m}")));
        }
    }
    if !moved.is_disjoint(&bridges) {
        return Err(mismatch(kind, "an edge cannot both move and bridge"));
    }
    for &e in &bridges {
        if !g.edge(e)?.is_loop() {
            return Err(mismatch(kind, format!("bridge {e} must be a loop at {m}")));
        }
    }

    let twist = -(eps * eps_bar);
    let b = g.add_vertex(lb.normalized());
    let u = g.add_vertex(VertexLabel::default());
    for e in incident {
        let edge = *g.edge(e)?;
        let was_loop = edge.is_loop();
        if bridges.contains(&e) {
            g.rewire(e, m, b)?;
        } else if moved.contains(&e) {
            let relink = |x: VertexId| if x == m { b } else { x };
            g.rewire(e, relink(edge.u), relink(edge.v))?;
        }
        if !was_loop || bridges.contains(&e) {
            g.set_sign(e, twist * edge.sign)?;
        }
    }
    g.set_label(m, la.normalized())?;
    g.add_edge(m, u, eps)?;
    g.add_edge(u, b, eps_bar)?;
    Ok(())
}

fn handle_absorb(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let kind = app.kind;
    let m = match_chain_vertex(g, app)?;
    let [(v, _, eps), (w, _, eps_bar)] = m.ends;
    if v != w {
        return Err(mismatch(kind, "both edges must join the same vertex"));
    }
    let handle = match (kind, eps == eps_bar) {
        (MoveKind::R4, true) => -2,
        (MoveKind::R5, false) => 1,
        (MoveKind::R4, false) => return Err(mismatch(kind, "edge signs must agree")),
        _ => return Err(mismatch(kind, "edge signs must differ")),
    };
    g.remove_vertex(m.u)?;
    let l = g.label(v)?;
    g.set_label(v, VertexLabel { g: genus_add(l.g, handle), ..l })?;
    Ok(())
}

fn annulus_absorb(g: &mut PlumbingGraph, app: &MoveApplication) -> Result<(), MoveError> {
    let kind = MoveKind::R8;
    site_shape(app, 1, 1)?;
    only_params(app, Params::default())?;
    let w = app.site.vertices[0];
    let l = g.label(w)?;
    if l.g != 0 || l.r != 1 {
        return Err(mismatch(kind, format!("{w} must be (0,0,1), found {l}")));
    }
    exact_incidence(g, kind, w, &app.site.edges)?;
    let v = g.edge(app.site.edges[0])?.other(w);
    g.remove_vertex(w)?;
    let lv = g.label(v)?;
    g.set_label(v, VertexLabel { r: lv.r + 1, ..lv }.normalized())?;
    Ok(())
}

/// The application that undoes `app`, expressed on `apply_move(before, app)`.
pub fn inverse_of(before: &PlumbingGraph, app: &MoveApplication) -> Result<MoveApplication, MoveError> {
    let next_v = before.next_vertex_id();
    let next_e = before.next_edge_id();
    let fresh_edges = |k: u32| -> Vec<EdgeId> { (0..k).map(|i| EdgeId(next_e.0 + i)).collect() };
    match (app.kind, app.direction) {
        (MoveKind::R0, _) => {
            site_shape(app, 1, 0)?;
            before.label(app.site.vertices[0])?;
            Ok(app.clone())
        }
        (MoveKind::R1, Direction::Forward) => {
            let m = match_blow_down(before, app)?;
            let params = Params { rho: Some(m.rho), eps: Some(m.ends[0].1), ..Params::default() };
            let site = if m.ends.len() == 1 {
                Site { vertices: vec![m.ends[0].0], ..Site::default() }
            } else {
                Site { edges: vec![next_e], ..Site::default() }
            };
            Ok(MoveApplication { kind: MoveKind::R1, direction: Direction::Inverse, site, params })
        }
        (MoveKind::R1, Direction::Inverse) => {
            let rho = require(MoveKind::R1, app.params.rho, "rho")?;
            let count = if app.site.edges.is_empty() { 1 } else { 2 };
            Ok(MoveApplication {
                kind: MoveKind::R1,
                direction: Direction::Forward,
                site: Site { vertices: vec![next_v], edges: fresh_edges(count), ..Site::default() },
                params: Params { rho: Some(rho), ..Params::default() },
            })
        }
        (MoveKind::R3, Direction::Forward) => {
            let m = match_chain_vertex(before, app)?;
            let [(a, e1, eps), (b, e2, eps_bar)] = m.ends;
            if a == b {
                return Err(mismatch(MoveKind::R3, "both chain edges end at the same vertex"));
            }
            let mut moved = Vec::new();
            let mut bridges = Vec::new();
            for &e in before.incident_edges(b)? {
                if e == e1 || e == e2 {
                    continue;
                }
                if before.edge(e)?.other(b) == a {
                    bridges.push(e);
                } else {
                    moved.push(e);
                }
            }
            Ok(MoveApplication {
                kind: MoveKind::R3,
                direction: Direction::Inverse,
                site: Site { vertices: vec![a], edges: moved, bridges },
                params: Params {
                    eps: Some(eps),
                    eps_bar: Some(eps_bar),
                    label_a: Some(before.label(a)?),
                    label_b: Some(before.label(b)?),
                    ..Params::default()
                },
            })
        }
        (MoveKind::R3, Direction::Inverse) => Ok(MoveApplication {
            kind: MoveKind::R3,
            direction: Direction::Forward,
            // The split adds the new half first, then the chain vertex.
            site: Site { vertices: vec![VertexId(next_v.0 + 1)], edges: fresh_edges(2), ..Site::default() },
            params: Params { eps: app.params.eps, eps_bar: app.params.eps_bar, ..Params::default() },
        }),
        (kind, _) => Err(MoveError::NoInverse(kind)),
    }
}

/// Vertices a move reads or rewrites: site vertices plus endpoints of site
/// edges.
pub fn involved_vertices(graph: &PlumbingGraph, app: &MoveApplication) -> BTreeSet<VertexId> {
    let mut out: BTreeSet<VertexId> = app.site.vertices.iter().copied().collect();
    for e in app.site.edges.iter().chain(&app.site.bridges) {
        if let Ok(edge) = graph.edge(*e) {
            out.insert(edge.u);
            out.insert(edge.v);
        }
    }
    out
}

fn touches(graph: &PlumbingGraph, app: &MoveApplication, vertex: VertexId) -> bool {
    app.site.vertices.contains(&vertex)
        || app.site.edges.iter().chain(&app.site.bridges).any(|&e| graph.edge(e).is_ok_and(|x| x.touches(vertex)))
}

#[derive(Clone, Copy, Debug)]
struct Filter {
    kinds: [bool; 7],
    forward: bool,
    inverse: bool,
}

impl Filter {
    fn new(kinds: &[MoveKind], directions: &[Direction]) -> Self {
        let mut k = [false; 7];
        for kind in kinds {
            k[MoveKind::ALL.iter().position(|x| x == kind).expect("known kind")] = true;
        }
        Filter {
            kinds: k,
            forward: directions.contains(&Direction::Forward),
            inverse: directions.contains(&Direction::Inverse),
        }
    }

    fn fwd(&self, kind: MoveKind) -> bool {
        self.forward && self.has(kind)
    }

    fn inv(&self, kind: MoveKind) -> bool {
        self.inverse && kind.has_inverse() && self.has(kind)
    }

    fn has(&self, kind: MoveKind) -> bool {
        self.kinds[MoveKind::ALL.iter().position(|&x| x == kind).expect("known kind")]
    }
}

/// Every application matching in `graph`, sorted by kind, direction, site
/// and parameters, without duplicates.
///
/// Forward moves are enumerated completely. Inverse moves are generative and
/// are enumerated over a finite family: R1 inverses at every vertex and edge
/// with all `ρ` and `ε`; R3 inverses that split a vertex `m` into `m` (same
/// label) and a new `(0,0,0)` vertex carrying either no edge or one non-loop
/// edge of `m`, for all `ε`, `ε̄`. Other R3 splittings can still be applied
/// explicitly.
pub fn enumerate_moves(
    graph: &PlumbingGraph,
    kinds: &[MoveKind],
    directions: &[Direction],
) -> Vec<MoveApplication> {
    let filter = Filter::new(kinds, directions);
    let mut out = Vec::new();
    for c in graph.vertex_ids() {
        collect_at(graph, c, filter, None, &mut out);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// The subset of [`enumerate_moves`] whose involved vertices include
/// `vertex`.
pub fn enumerate_moves_at(
    graph: &PlumbingGraph,
    vertex: VertexId,
    kinds: &[MoveKind],
    directions: &[Direction],
) -> Result<Vec<MoveApplication>, GraphError> {
    let filter = Filter::new(kinds, directions);
    let mut centers = graph.neighbors(vertex)?;
    centers.push(vertex);
    let mut out = Vec::new();
    for c in centers {
        collect_at(graph, c, filter, Some(vertex), &mut out);
    }
    out.retain(|app| touches(graph, app, vertex));
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Applications centred at `c`. With `touch` set, the generative families
/// skip candidates that cannot involve that vertex before building them.
fn collect_at(g: &PlumbingGraph, c: VertexId, f: Filter, touch: Option<VertexId>, out: &mut Vec<MoveApplication>) {
    let at_centre = touch.is_none_or(|t| t == c);
    let edge_wanted = |e: &crate::graph::Edge| touch.is_none_or(|t| e.touches(t));
    let label = g.label(c).expect("centre exists");
    let incident = g.incident_edges(c).expect("centre exists");
    let edges: Vec<(EdgeId, crate::graph::Edge)> =
        incident.iter().map(|&e| (e, *g.edge(e).expect("incident edge"))).collect();
    let has_loop = edges.iter().any(|(_, e)| e.is_loop());
    let fwd = |kind, site, params| MoveApplication { kind, direction: Direction::Forward, site, params };
    let inv = |kind, site, params| MoveApplication { kind, direction: Direction::Inverse, site, params };

    if f.fwd(MoveKind::R0) && at_centre {
        out.push(MoveApplication::r0(c));
    }

    if f.fwd(MoveKind::R1) && label.g == 0 && label.r == 0 && label.e.abs() == 1 && !has_loop && (1..=2).contains(&edges.len()) {
        out.push(fwd(
            MoveKind::R1,
            Site { vertices: vec![c], edges: incident.to_vec(), ..Site::default() },
            Params { rho: Sign::from_value(label.e), ..Params::default() },
        ));
    }

    if f.inv(MoveKind::R1) {
        for rho in Sign::BOTH {
            for eps in Sign::BOTH {
                let params = Params { rho: Some(rho), eps: Some(eps), ..Params::default() };
                if at_centre {
                    out.push(inv(MoveKind::R1, Site { vertices: vec![c], ..Site::default() }, params.clone()));
                }
                for (id, e) in &edges {
                    if e.u.min(e.v) == c && edge_wanted(e) {
                        out.push(inv(MoveKind::R1, Site { edges: vec![*id], ..Site::default() }, params.clone()));
                    }
                }
            }
        }
    }

    let zero = label == VertexLabel::new(0, 0, 0);

    if f.fwd(MoveKind::R2) && zero && edges.len() == 3 && !has_loop {
        for i in 0..3 {
            let v = edges[i].1.other(c);
            let mut leaves: Vec<(EdgeId, VertexId)> = (0..3)
                .filter(|&j| j != i)
                .map(|j| (edges[j].0, edges[j].1.other(c)))
                .collect();
            leaves.sort_unstable();
            if v == leaves[0].1 || v == leaves[1].1 || leaves[0].1 == leaves[1].1 {
                continue;
            }
            let deltas: Option<Vec<Sign>> = leaves
                .iter()
                .map(|&(_, leaf)| {
                    let l = g.label(leaf).ok()?;
                    let ok = l.g == 0 && l.r == 0 && l.e.abs() == 2 && g.degree(leaf).ok()? == 1;
                    ok.then(|| Sign::from_value(l.e / 2)).flatten()
                })
                .collect();
            if let Some(d) = deltas {
                out.push(fwd(
                    MoveKind::R2,
                    Site { vertices: vec![c, v], edges: vec![edges[i].0, leaves[0].0, leaves[1].0], ..Site::default() },
                    Params { delta1: Some(d[0]), delta2: Some(d[1]), ..Params::default() },
                ));
            }
        }
    }

    if zero && edges.len() == 2 && !has_loop {
        let (a, b) = (edges[0].1.other(c), edges[1].1.other(c));
        let (eps, eps_bar) = (edges[0].1.sign, edges[1].1.sign);
        let kind = match (a == b, eps == eps_bar) {
            (false, _) => MoveKind::R3,
            (true, true) => MoveKind::R4,
            (true, false) => MoveKind::R5,
        };
        if f.fwd(kind) {
            out.push(fwd(
                kind,
                Site { vertices: vec![c], edges: vec![edges[0].0, edges[1].0], ..Site::default() },
                Params { eps: Some(eps), eps_bar: Some(eps_bar), ..Params::default() },
            ));
        }
    }

    if f.fwd(MoveKind::R8) && label.g == 0 && label.r == 1 && edges.len() == 1 && !has_loop {
        out.push(fwd(
            MoveKind::R8,
            Site { vertices: vec![c], edges: vec![edges[0].0], ..Site::default() },
            Params::default(),
        ));
    }

    if f.inv(MoveKind::R3) {
        let mut options: Vec<Vec<EdgeId>> = if at_centre { vec![Vec::new()] } else { Vec::new() };
        options.extend(edges.iter().filter(|(_, e)| !e.is_loop() && edge_wanted(e)).map(|(id, _)| vec![*id]));
        for moved in options {
            for eps in Sign::BOTH {
                for eps_bar in Sign::BOTH {
                    out.push(inv(
                        MoveKind::R3,
                        Site { vertices: vec![c], edges: moved.clone(), ..Site::default() },
                        Params {
                            eps: Some(eps),
                            eps_bar: Some(eps_bar),
                            label_a: Some(label),
                            label_b: Some(VertexLabel::default()),
                            ..Params::default()
                        },
                    ));
                }
            }
        }
    }
}
