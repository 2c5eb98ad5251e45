//! Plumbing graphs: connected, undirected, labelled multigraphs with loops.
//!
//! Vertices carry a triple `(e, g, r)` (Euler number, genus, removed disks),
//! edges carry an orientation sign. Ids are never reused within the lifetime
//! of a graph value, so move applications can name their sites by id.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Edge orientation, serialized as `1` / `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl Neg for Sign {
    type Output = Sign;

    fn neg(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl TryFrom<i64> for Sign {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Sign::from_value(v).ok_or_else(|| format!("edge sign must be 1 or -1, got {v}"))
    }
}

impl From<Sign> for i64 {
    fn from(s: Sign) -> i64 {
        s.value()
    }
}

/// The vertex triple `(e, g, r)`. Serialized as `[e, g, r]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 3]", into = "[i64; 3]")]
pub struct VertexLabel {
    /// Euler number.
    pub e: i64,
    /// Genus; negative values denote non-orientable surfaces.
    pub g: i64,
    /// Number of removed open disks.
    pub r: i64,
}

impl VertexLabel {
    pub const fn new(e: i64, g: i64, r: i64) -> Self {
        VertexLabel { e, g, r }
    }

    pub fn is_valid(&self) -> bool {
        self.r >= 0 && (self.r == 0 || self.e == 0)
    }

    /// The Euler number is meaningless once the surface has boundary, so it
    /// is forced to zero whenever `r > 0`.
    pub fn normalized(self) -> Self {
        if self.r > 0 {
            VertexLabel { e: 0, ..self }
        } else {
            self
        }
    }
}

impl From<[i64; 3]> for VertexLabel {
    fn from([e, g, r]: [i64; 3]) -> Self {
        VertexLabel { e, g, r }
    }
}

impl From<VertexLabel> for [i64; 3] {
    fn from(l: VertexLabel) -> Self {
        [l.e, l.g, l.r]
    }
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.e, self.g, self.r)
    }
}

/// Genus composition under absorption moves.
///
/// Same-sign (or zero) genera add; attaching a non-orientable piece to an
/// orientable one converts each handle into two cross-caps.
pub fn genus_add(g1: i64, g2: i64) -> i64 {
    if g1 > 0 && g2 < 0 {
        -2 * g1 + g2
    } else if g1 < 0 && g2 > 0 {
        g1 - 2 * g2
    } else {
        g1 + g2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub sign: Sign,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.u == self.v
    }

    /// The endpoint opposite to `x`; for loops this is `x` itself.
    pub fn other(&self, x: VertexId) -> VertexId {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, x: VertexId) -> bool {
        self.u == x || self.v == x
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Vertex {
    label: VertexLabel,
    // Sorted; a loop is listed once.
    incident: Vec<EdgeId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge {index} references node {node}, but only {nodes} nodes exist")]
    NodeIndexOutOfRange { index: usize, node: usize, nodes: usize },
    #[error("invalid graph: {0}")]
    Invalid(ValidityReport),
}

/// A plumbing graph value.
///
/// Cloning is cheap enough for search; every public rewriting operation
/// returns a new value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlumbingGraph {
    vertices: Vec<Option<Vertex>>,
    edges: Vec<Option<Edge>>,
    vertex_count: usize,
    edge_count: usize,
}

impl PlumbingGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from labels and `(u, v, sign)` index triples. Ids are
    /// assigned in input order.
    pub fn from_parts(
        labels: &[VertexLabel],
        edges: &[(usize, usize, Sign)],
    ) -> Result<Self, GraphError> {
        let mut g = PlumbingGraph::new();
        let ids: Vec<VertexId> = labels.iter().map(|&l| g.add_vertex(l)).collect();
        for (index, &(u, v, sign)) in edges.iter().enumerate() {
            for node in [u, v] {
                if node >= ids.len() {
                    return Err(GraphError::NodeIndexOutOfRange { index, node, nodes: ids.len() });
                }
            }
            g.add_edge(ids[u], ids[v], sign)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, label: VertexLabel) -> VertexId {
        let id = VertexId(self.vertices.len() as u32);
        self.vertices.push(Some(Vertex { label, incident: Vec::new() }));
        self.vertex_count += 1;
        id
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId, sign: Sign) -> Result<EdgeId, GraphError> {
        self.vertex(u)?;
        self.vertex(v)?;
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(Some(Edge { u, v, sign }));
        self.edge_count += 1;
        self.vertex_mut(u)?.incident.push(id);
        if u != v {
            self.vertex_mut(v)?.incident.push(id);
        }
        Ok(id)
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Result<Edge, GraphError> {
        let edge = self
            .edges
            .get_mut(id.0 as usize)
            .and_then(Option::take)
            .ok_or(GraphError::UnknownEdge(id))?;
        self.edge_count -= 1;
        for x in [edge.u, edge.v] {
            if let Ok(vx) = self.vertex_mut(x) {
                vx.incident.retain(|&e| e != id);
            }
        }
        Ok(edge)
    }

    /// Removes a vertex together with all of its incident edges.
    pub fn remove_vertex(&mut self, id: VertexId) -> Result<VertexLabel, GraphError> {
        let incident = self.vertex(id)?.incident.clone();
        for e in incident {
            self.remove_edge(e)?;
        }
        let vx = self.vertices[id.0 as usize].take().ok_or(GraphError::UnknownVertex(id))?;
        self.vertex_count -= 1;
        Ok(vx.label)
    }

    /// Replaces the endpoints of an edge, keeping its id and sign.
    pub(crate) fn rewire(&mut self, id: EdgeId, u: VertexId, v: VertexId) -> Result<(), GraphError> {
        let edge = *self.edge(id)?;
        self.vertex(u)?;
        self.vertex(v)?;
        for x in [edge.u, edge.v] {
            self.vertex_mut(x)?.incident.retain(|&e| e != id);
        }
        self.edges[id.0 as usize] = Some(Edge { u, v, sign: edge.sign });
        for x in [u, v] {
            let inc = &mut self.vertex_mut(x)?.incident;
            if let Err(pos) = inc.binary_search(&id) {
                inc.insert(pos, id);
            }
        }
        Ok(())
    }

    pub fn set_sign(&mut self, id: EdgeId, sign: Sign) -> Result<(), GraphError> {
        self.edges
            .get_mut(id.0 as usize)
            .and_then(Option::as_mut)
            .ok_or(GraphError::UnknownEdge(id))?
            .sign = sign;
        Ok(())
    }

    pub fn set_label(&mut self, id: VertexId, label: VertexLabel) -> Result<(), GraphError> {
        self.vertex_mut(id)?.label = label;
        Ok(())
    }

    fn vertex(&self, id: VertexId) -> Result<&Vertex, GraphError> {
        self.vertices
            .get(id.0 as usize)
            .and_then(Option::as_ref)
            .ok_or(GraphError::UnknownVertex(id))
    }

    fn vertex_mut(&mut self, id: VertexId) -> Result<&mut Vertex, GraphError> {
        self.vertices
            .get_mut(id.0 as usize)
            .and_then(Option::as_mut)
            .ok_or(GraphError::UnknownVertex(id))
    }

    pub fn contains_vertex(&self, id: VertexId) -> bool {
        self.vertex(id).is_ok()
    }

    pub fn label(&self, id: VertexId) -> Result<VertexLabel, GraphError> {
        Ok(self.vertex(id)?.label)
    }

    pub fn edge(&self, id: EdgeId) -> Result<&Edge, GraphError> {
        self.edges
            .get(id.0 as usize)
            .and_then(Option::as_ref)
            .ok_or(GraphError::UnknownEdge(id))
    }

    /// Incident edge ids in ascending order; loops appear once.
    pub fn incident_edges(&self, id: VertexId) -> Result<&[EdgeId], GraphError> {
        Ok(&self.vertex(id)?.incident)
    }

    /// Number of incident edge-ends. A loop contributes two.
    pub fn degree(&self, id: VertexId) -> Result<usize, GraphError> {
        let vx = self.vertex(id)?;
        Ok(vx
            .incident
            .iter()
            .map(|&e| if self.edges[e.0 as usize].is_some_and(|e| e.is_loop()) { 2 } else { 1 })
            .sum())
    }

    /// Distinct neighbours other than the vertex itself, ascending.
    pub fn neighbors(&self, id: VertexId) -> Result<Vec<VertexId>, GraphError> {
        let mut out: Vec<VertexId> = self
            .incident_edges(id)?
            .iter()
            .map(|&e| self.edges[e.0 as usize].expect("incident edge exists").other(id))
            .filter(|&x| x != id)
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .map(|(i, _)| VertexId(i as u32))
    }

    pub fn vertices(&self) -> impl Iterator<Item = (VertexId, VertexLabel)> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_ref().map(|v| (VertexId(i as u32), v.label)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|e| (EdgeId(i as u32), e)))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn loop_count(&self) -> usize {
        self.edges().filter(|(_, e)| e.is_loop()).count()
    }

    /// Id the next added vertex will receive.
    pub fn next_vertex_id(&self) -> VertexId {
        VertexId(self.vertices.len() as u32)
    }

    /// Id the next added edge will receive.
    pub fn next_edge_id(&self) -> EdgeId {
        EdgeId(self.edges.len() as u32)
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            vertex_count: self.vertex_count,
            edge_count: self.edge_count,
            loop_count: self.loop_count(),
            degrees: self.vertex_ids().map(|v| self.degree(v).expect("live vertex")).collect(),
        }
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.vertices.len()];
        let mut components = 0;
        for start in self.vertex_ids() {
            if seen[start.0 as usize] {
                continue;
            }
            components += 1;
            seen[start.0 as usize] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(x) = queue.pop_front() {
                for &e in &self.vertex(x).expect("live vertex").incident {
                    let y = self.edges[e.0 as usize].expect("incident edge exists").other(x);
                    if !seen[y.0 as usize] {
                        seen[y.0 as usize] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Reports every violated invariant. An empty report means the graph is
    /// a valid plumbing graph.
    pub fn validate(&self) -> ValidityReport {
        let mut violations = Vec::new();
        if self.vertex_count == 0 {
            violations.push(Violation::Empty);
        }
        for (id, label) in self.vertices() {
            if label.r < 0 {
                violations.push(Violation::NegativeBoundary { vertex: id, r: label.r });
            } else if label.r > 0 && label.e != 0 {
                violations.push(Violation::EulerWithBoundary { vertex: id, e: label.e });
            }
        }
        let components = self.component_count();
        if components > 1 {
            violations.push(Violation::Disconnected { components });
        }
        ValidityReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(GraphError::Invalid(report))
        }
    }

    /// The same graph with ids renumbered densely in their current order.
    /// Equivalent to a round trip through [`GraphJson`].
    pub fn compacted(&self) -> PlumbingGraph {
        let json = GraphJson::from(self);
        PlumbingGraph::try_from(json).expect("compaction of a well-formed graph")
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson::from(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStats {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub loop_count: usize,
    /// Degrees in vertex-id order.
    pub degrees: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    NegativeBoundary { vertex: VertexId, r: i64 },
    /// `e` must vanish when `r > 0`.
    EulerWithBoundary { vertex: VertexId, e: i64 },
    Disconnected { components: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "graph has no vertices"),
            Violation::NegativeBoundary { vertex, r } => write!(f, "{vertex}: r = {r} is negative"),
            Violation::EulerWithBoundary { vertex, e } => {
                write!(f, "{vertex}: e must vanish when r > 0 (e = {e})")
            }
            Violation::Disconnected { components } => {
                write!(f, "disconnected ({components} components)")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// External graph format: `{"nodes": [[e,g,r], ...], "edges": [[u,v,sign], ...]}`
/// with 0-based node indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<VertexLabel>,
    pub edges: Vec<(usize, usize, Sign)>,
}

impl From<&PlumbingGraph> for GraphJson {
    fn from(g: &PlumbingGraph) -> Self {
        let mut index = vec![usize::MAX; g.vertices.len()];
        let mut nodes = Vec::with_capacity(g.vertex_count);
        for (i, (id, label)) in g.vertices().enumerate() {
            index[id.0 as usize] = i;
            nodes.push(label);
        }
        let edges = g
            .edges()
            .map(|(_, e)| (index[e.u.0 as usize], index[e.v.0 as usize], e.sign))
            .collect();
        GraphJson { nodes, edges }
    }
}

impl TryFrom<GraphJson> for PlumbingGraph {
    type Error = GraphError;

    fn try_from(json: GraphJson) -> Result<Self, Self::Error> {
        PlumbingGraph::from_parts(&json.nodes, &json.edges)
    }
}

impl Serialize for PlumbingGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PlumbingGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = GraphJson::deserialize(deserializer)?;
        PlumbingGraph::try_from(json).map_err(serde::de::Error::custom)
    }
}
