//! Bounded bidirectional search for move sequences between two plumbing
//! graphs, and replay-based certificate checking.
//!
//! The search never claims two graphs are inequivalent: running out of
//! budget yields [`Verdict::Unknown`].

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, PlumbingGraph};
use crate::iso::{are_isomorphic, canonical_form_unchecked, find_isomorphism};
use crate::moves::{apply_move, enumerate_moves, inverse_of, Direction, MoveApplication, MoveKind};

/// A replayable witness that `start` and `end` are related by moves.
///
/// Normally `moves` leads from `start` to a graph isomorphic to `end`. When
/// part of the path could not be inverted, `end_moves` holds that part as
/// recorded from `end`, and the certificate holds if both replays meet up to
/// isomorphism.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub start: PlumbingGraph,
    pub moves: Vec<MoveApplication>,
    pub end: PlumbingGraph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_moves: Option<Vec<MoveApplication>>,
}

impl Certificate {
    pub fn len(&self) -> usize {
        self.moves.len() + self.end_moves.as_ref().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_inverse_replay(&self) -> bool {
        self.end_moves.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Moves,
    EndMoves,
}

/// Why a certificate failed to replay.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ReplayFailure {
    #[error("step {step} of {half:?} failed: {reason}")]
    Step { half: Half, step: usize, reason: String },
    #[error("replayed graph is invalid: {0}")]
    Invalid(String),
    #[error("replayed graphs are not isomorphic")]
    Mismatch,
}

fn replay(graph: &PlumbingGraph, moves: &[MoveApplication], half: Half) -> Result<PlumbingGraph, ReplayFailure> {
    let mut g = graph.clone();
    for (step, m) in moves.iter().enumerate() {
        g = apply_move(&g, m).map_err(|e| ReplayFailure::Step { half, step, reason: e.to_string() })?;
    }
    Ok(g)
}

/// Replays a certificate and reports the first failure.
pub fn check_certificate(cert: &Certificate) -> Result<(), ReplayFailure> {
    let invalid = |e: &dyn fmt::Display| ReplayFailure::Invalid(e.to_string());
    cert.start.ensure_valid().map_err(|e| invalid(&e))?;
    cert.end.ensure_valid().map_err(|e| invalid(&e))?;
    let left = replay(&cert.start, &cert.moves, Half::Moves)?;
    let right = match &cert.end_moves {
        Some(moves) => replay(&cert.end, moves, Half::EndMoves)?,
        None => cert.end.clone(),
    };
    match are_isomorphic(&left, &right) {
        Ok(true) => Ok(()),
        Ok(false) => Err(ReplayFailure::Mismatch),
        Err(e) => Err(invalid(&e)),
    }
}

pub fn verify_certificate(cert: &Certificate) -> bool {
    check_certificate(cert).is_ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_states: usize,
    pub max_depth: usize,
    pub time_limit: Duration,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_states: 100_000, max_depth: 6, time_limit: Duration::from_secs(60) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnknownReason {
    #[serde(rename = "states exhausted")]
    StatesExhausted,
    #[serde(rename = "time limit")]
    TimeLimit,
    #[serde(rename = "depth exhausted")]
    DepthExhausted,
    #[serde(rename = "search space exhausted")]
    SpaceExhausted,
}

impl fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnknownReason::StatesExhausted => "states exhausted",
            UnknownReason::TimeLimit => "time limit",
            UnknownReason::DepthExhausted => "depth exhausted",
            UnknownReason::SpaceExhausted => "search space exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Equivalent { certificate: Certificate, states_explored: usize },
    Unknown { states_explored: usize, reason: UnknownReason },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent { .. })
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Verdict::Equivalent { certificate, .. } => Some(certificate),
            Verdict::Unknown { .. } => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("invalid input graph: {0}")]
    Invalid(#[from] GraphError),
}

struct Node {
    graph: PlumbingGraph,
    parent: Option<usize>,
    via: Option<MoveApplication>,
    depth: usize,
}

/// `(vertices, edges, canonical form, node)`: smaller graphs first.
type Priority = (usize, usize, Vec<u8>, usize);

#[derive(Default)]
struct Side {
    nodes: Vec<Node>,
    seen: HashMap<Vec<u8>, usize>,
    frontier: BinaryHeap<Reverse<Priority>>,
}

impl Side {
    fn push(&mut self, node: Node, canon: Vec<u8>) -> usize {
        let id = self.nodes.len();
        let key = (node.graph.vertex_count(), node.graph.edge_count(), canon.clone(), id);
        self.seen.insert(canon, id);
        self.frontier.push(Reverse(key));
        self.nodes.push(node);
        id
    }

    /// Moves from the root to `id`, in application order.
    fn path(&self, mut id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(parent) = self.nodes[id].parent {
            out.push(id);
            id = parent;
        }
        out.reverse();
        out
    }
}

/// Searches outward from both graphs, smallest graphs first, until the two
/// explored regions share an isomorphism class.
///
/// Every side applies all forward moves; inverse moves are enabled for the
/// kinds in `invertible_kinds` that have one.
pub fn bounded_search(
    g1: &PlumbingGraph,
    g2: &PlumbingGraph,
    budget: SearchBudget,
    invertible_kinds: &[MoveKind],
) -> Result<Verdict, OracleError> {
    g1.ensure_valid()?;
    g2.ensure_valid()?;
    let started = Instant::now();
    // Certificates are exchanged as JSON, which renumbers ids densely.
    let (g1, g2) = (g1.compacted(), g2.compacted());
    let mut inverse_kinds: Vec<MoveKind> =
        invertible_kinds.iter().copied().filter(|k| k.has_inverse()).collect();
    inverse_kinds.sort_unstable();
    inverse_kinds.dedup();

    let mut sides = [Side::default(), Side::default()];
    for (side, g) in sides.iter_mut().zip([&g1, &g2]) {
        let canon = canonical_form_unchecked(g).into_bytes();
        side.push(Node { graph: g.clone(), parent: None, via: None, depth: 0 }, canon);
    }
    if let Some(&other) = sides[1].seen.get(&sides[0].frontier.peek().expect("root").0 .2) {
        return Ok(equivalent(&sides, 0, other, &g1, &g2, 2));
    }

    let mut states = 2;
    let mut depth_pruned = false;
    let mut turn = 0;
    loop {
        if sides.iter().all(|s| s.frontier.is_empty()) {
            let reason = if depth_pruned { UnknownReason::DepthExhausted } else { UnknownReason::SpaceExhausted };
            return Ok(Verdict::Unknown { states_explored: states, reason });
        }
        if sides[turn].frontier.is_empty() {
            turn = 1 - turn;
        }
        let Reverse((_, _, _, id)) = sides[turn].frontier.pop().expect("non-empty frontier");
        let depth = sides[turn].nodes[id].depth;
        if depth >= budget.max_depth {
            depth_pruned = true;
            turn = 1 - turn;
            continue;
        }
        let graph = sides[turn].nodes[id].graph.clone();
        let mut apps = enumerate_moves(&graph, &MoveKind::ALL, &[Direction::Forward]);
        if !inverse_kinds.is_empty() {
            apps.extend(enumerate_moves(&graph, &inverse_kinds, &[Direction::Inverse]));
        }
        for app in apps {
            if states >= budget.max_states {
                return Ok(Verdict::Unknown { states_explored: states, reason: UnknownReason::StatesExhausted });
            }
            if started.elapsed() >= budget.time_limit {
                return Ok(Verdict::Unknown { states_explored: states, reason: UnknownReason::TimeLimit });
            }
            let next = apply_move(&graph, &app).expect("enumerated moves apply");
            let canon = canonical_form_unchecked(&next).into_bytes();
            if sides[turn].seen.contains_key(&canon) {
                continue;
            }
            let meet = sides[1 - turn].seen.get(&canon).copied();
            let node = sides[turn].push(Node { graph: next, parent: Some(id), via: Some(app), depth: depth + 1 }, canon);
            states += 1;
            if let Some(other) = meet {
                if depth + 1 + sides[1 - turn].nodes[other].depth <= budget.max_depth {
                    let (a, b) = if turn == 0 { (node, other) } else { (other, node) };
                    return Ok(equivalent(&sides, a, b, &g1, &g2, states));
                }
            }
        }
        turn = 1 - turn;
    }
}

fn equivalent(
    sides: &[Side; 2],
    a: usize,
    b: usize,
    g1: &PlumbingGraph,
    g2: &PlumbingGraph,
    states: usize,
) -> Verdict {
    let certificate = stitch(sides, a, b, g1, g2);
    debug_assert!(verify_certificate(&certificate), "search produced a failing certificate");
    Verdict::Equivalent { certificate, states_explored: states }
}

/// Joins the path `g1 -> X` with the reversed path `g2 -> Y`, `X ≅ Y`.
fn stitch(sides: &[Side; 2], a: usize, b: usize, g1: &PlumbingGraph, g2: &PlumbingGraph) -> Certificate {
    let [front, back] = sides;
    let mut moves: Vec<MoveApplication> =
        front.path(a).into_iter().map(|i| front.nodes[i].via.clone().expect("non-root")).collect();
    let back_path = back.path(b);
    let back_moves: Vec<MoveApplication> =
        back_path.iter().map(|&i| back.nodes[i].via.clone().expect("non-root")).collect();

    if back_moves.iter().all(|m| m.kind.is_reversible()) {
        let mut current = front.nodes[a].graph.clone();
        let mut undo = Vec::new();
        for &i in back_path.iter().rev() {
            let node = &back.nodes[i];
            let before = &back.nodes[node.parent.expect("non-root")].graph;
            let inverse = inverse_of(before, node.via.as_ref().expect("non-root")).expect("reversible move");
            let iso = find_isomorphism(&node.graph, &current).expect("stitched graphs stay isomorphic");
            let mapped = inverse.transport(&iso, &node.graph, &current).expect("isomorphism covers the site");
            current = apply_move(&current, &mapped).expect("transported inverse applies");
            undo.push(mapped);
        }
        moves.extend(undo);
        return Certificate { start: g1.clone(), moves, end: g2.clone(), end_moves: None };
    }
    Certificate { start: g1.clone(), moves, end: g2.clone(), end_moves: Some(back_moves) }
}

/// Greedily applies vertex-removing forward moves, first in enumeration
/// order, for at most `budget.max_states` steps.
pub fn reduce(graph: &PlumbingGraph, budget: SearchBudget) -> (PlumbingGraph, Vec<MoveApplication>) {
    let mut g = graph.clone();
    let mut log = Vec::new();
    let started = Instant::now();
    while log.len() < budget.max_states && started.elapsed() < budget.time_limit {
        let n = g.vertex_count();
        let step = enumerate_moves(&g, &MoveKind::ALL, &[Direction::Forward])
            .into_iter()
            .filter(|m| m.kind != MoveKind::R0)
            .find_map(|m| {
                let h = apply_move(&g, &m).ok()?;
                (h.vertex_count() < n).then_some((h, m))
            });
        match step {
            Some((h, m)) => {
                g = h;
                log.push(m);
            }
            None => break,
        }
    }
    (g, log)
}
