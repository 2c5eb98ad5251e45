//! Plumbing graphs, the von Neumann plumbing calculus, and tooling for
//! deciding and certifying equivalence of plumbing graphs.

pub mod graph;
pub mod iso;
pub mod moves;
pub mod oracle;
pub mod datagen;
pub mod cli;

pub use graph::{genus_add, Edge, EdgeId, GraphError, PlumbingGraph, Sign, VertexId, VertexLabel};
pub use iso::{are_isomorphic, canonical_form, find_isomorphism, CanonicalForm, Isomorphism};
pub use moves::{apply_move, enumerate_moves, Direction, MoveApplication, MoveError, MoveKind, Params, Site};
pub use oracle::{bounded_search, verify_certificate, Certificate, SearchBudget, Verdict};
pub use datagen::{build_dataset, Counts, GenParams, PairRecord, Source};
