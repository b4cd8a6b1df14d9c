//! Carleson embeddings on finite dyadic trees and bi-trees.
//!
//! The crate computes test and embedding constants for measures on the
//! dyadic tree, checks the Bellman-function inequalities behind the
//! embedding theorem, runs the stopping-time construction for the maximal
//! theorem, and does the same bookkeeping on the bi-tree of dyadic rectangles.

pub mod bellman;
pub mod bitree;
pub mod carleson;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod io;
pub mod limits;
pub mod maximal;
pub mod sampling;
pub mod tree;

pub use bellman::{bellman_value, BellmanPoint, TreeCertificate};
pub use bitree::{build_bitree, BiMeasure, BiTreeShape, BoundaryFunction, Rect, RectVector};
pub use carleson::AlphaSequence;
pub use error::{Error, Result};
pub use maximal::StoppingDecomposition;
pub use tree::{build_tree, NodeValues, NodeVector, SupportMode, TreeMeasure, TreeShape};
