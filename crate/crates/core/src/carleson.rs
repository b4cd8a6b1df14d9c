//! Carleson test constants and embedding norms on a single dyadic tree.
//!
//! For a measure `mu` on the nodes, the test constant is
//! `max_R sum_{Q <= R} mu(Q)^2 / mu(R)` with `mu(Q)` the subtree mass, and the
//! embedding constant is the best `C` in
//! `sum_Q (sum_{P <= Q} phi(P) mu_P)^2 <= C sum_R phi(R)^2 mu_R`.
//! The two always satisfy `C_test <= C_emb <= 4 C_test`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_largest_eigenvalue, power_iteration, PowerIteration};
use crate::error::{Error, Result};
use crate::tree::{hardy_down, hardy_up, NodeValues, NodeVector, TreeMeasure, TreeShape};

/// Relative slack used by the sandwich `C_test <= C_emb <= 4 C_test`.
pub const SANDWICH_SLACK: f64 = 1e-9;

/// Largest support for which [`dense_embedding_constant`] builds a matrix.
pub const DENSE_ORACLE_LIMIT: usize = 1 << 12;

/// Nonnegative weights `alpha_I` on the nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSequence {
    shape: TreeShape,
    values: Vec<f64>,
}

impl AlphaSequence {
    pub fn new(shape: TreeShape, values: Vec<f64>) -> Result<Self> {
        let v = NodeVector::new(shape, values)?;
        if let Some(i) = v.values().iter().position(|&a| a < 0.0) {
            return Err(Error::NegativeMass {
                position: format!("alpha at node {}", i + 1),
                value: v.values()[i],
            });
        }
        Ok(Self {
            shape,
            values: v.into_values(),
        })
    }

    /// `alpha_I = |I|^2`, which turns the weighted test into the one-box test.
    pub fn squared_lengths(shape: TreeShape) -> Self {
        Self {
            shape,
            values: shape
                .nodes()
                .map(|k| TreeShape::interval_length(k).powi(2))
                .collect(),
        }
    }

    pub fn zeros(shape: TreeShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.node_count()],
        }
    }

    pub fn indicator(shape: TreeShape, node: usize) -> Result<Self> {
        let v = NodeVector::indicator(shape, node)?;
        Ok(Self {
            shape,
            values: v.into_values(),
        })
    }
}

impl NodeValues for AlphaSequence {
    fn shape(&self) -> TreeShape {
        self.shape
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-node test ratios together with their maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlesonRatios {
    pub ratios: NodeVector,
    pub test_constant: f64,
    pub argmax_node: usize,
}

/// Both sides of the tree embedding theorem for one measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub test_constant: f64,
    pub embedding_constant: f64,
    pub argmax_node: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of checking `C_test <= C_emb <= 4 C_test`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub report: EmbeddingReport,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

impl PairCheck {
    pub fn holds(&self) -> bool {
        self.lower_holds && self.upper_holds
    }

    /// `C_emb / C_test`, or 0 for the zero measure.
    pub fn ratio(&self) -> f64 {
        if self.report.test_constant > 0.0 {
            self.report.embedding_constant / self.report.test_constant
        } else {
            0.0
        }
    }
}

/// Left and right sides of `sum_I alpha_I (phi Lambda)_I^2 <= 4 (phi^2 Lambda)_{I0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSides {
    pub lhs: f64,
    pub rhs: f64,
}

fn argmax(values: &[f64]) -> (f64, usize) {
    let mut best = (0.0, TreeShape::ROOT);
    for (i, &v) in values.iter().enumerate() {
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    best
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Per-node ratio `sum_{Q <= R} mu(Q)^2 / mu(R)` and the test constant.
///
/// Subtree masses and subtree sums of their squares are accumulated in a
/// single leaf-to-root pass. Null boxes get ratio 0.
pub fn carleson_ratios(mu: &TreeMeasure) -> CarlesonRatios {
    let shape = mu.shape();
    let n = shape.node_count();
    let mut mass = mu.masses().to_vec();
    let mut squares = vec![0.0; n];
    for k in (1..=n).rev() {
        if let Some((l, r)) = shape.children(k) {
            mass[k - 1] += mass[l - 1] + mass[r - 1];
            squares[k - 1] += squares[l - 1] + squares[r - 1];
        }
        squares[k - 1] += mass[k - 1] * mass[k - 1];
    }
    let ratios: Vec<f64> = squares
        .iter()
        .zip(&mass)
        .map(|(&s, &m)| safe_ratio(s, m))
        .collect();
    let (test_constant, argmax_node) = argmax(&ratios);
    CarlesonRatios {
        ratios: NodeVector::new(shape, ratios).expect("ratios are finite"),
        test_constant,
        argmax_node,
    }
}

/// `max_I (1/|I|) sum_{K <= I} alpha_K (Lambda)_K^2 / (Lambda)_I`.
pub fn alpha_test_constant(lambda: &TreeMeasure, alpha: &AlphaSequence) -> Result<(f64, usize)> {
    let shape = lambda.shape();
    shape.ensure_same(&alpha.shape())?;
    let mass = hardy_down(lambda);
    let weighted = NodeVector::from_fn(shape, |k| {
        let avg = mass.at(k) / TreeShape::interval_length(k);
        alpha.at(k) * avg * avg
    });
    let sums = hardy_down(&weighted);
    // (1/|I|) S / (Lambda(I)/|I|) = S / Lambda(I)
    let ratios: Vec<f64> = shape
        .nodes()
        .map(|k| safe_ratio(sums.at(k), mass.at(k)))
        .collect();
    Ok(argmax(&ratios))
}

/// Applies `psi -> sqrt(mu) I I* (sqrt(mu) psi)` on the support of `mu`.
struct TreeEmbeddingOperator {
    shape: TreeShape,
    support: Vec<usize>,
    roots: Vec<f64>,
}

impl TreeEmbeddingOperator {
    fn new(mu: &TreeMeasure) -> Self {
        let support = mu.support();
        let roots = support.iter().map(|&k| mu.at(k).sqrt()).collect();
        Self {
            shape: mu.shape(),
            support,
            roots,
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut w = NodeVector::zeros(self.shape).into_values();
        for ((&k, &s), &xi) in self.support.iter().zip(&self.roots).zip(x) {
            w[k - 1] = s * xi;
        }
        let w = NodeVector::new(self.shape, w).expect("finite input");
        let v = hardy_up(&hardy_down(&w));
        for ((&k, &s), yi) in self.support.iter().zip(&self.roots).zip(y.iter_mut()) {
            *yi = s * v.at(k);
        }
    }
}

/// Best constant in the adjoint embedding inequality, by power iteration.
pub fn embedding_constant(mu: &TreeMeasure, tol: f64, max_iter: usize) -> EmbeddingReport {
    let ratios = carleson_ratios(mu);
    let op = TreeEmbeddingOperator::new(mu);
    let result = power_iteration(
        op.support.len(),
        |x, y| op.apply(x, y),
        PowerIteration { tol, max_iter },
    );
    EmbeddingReport {
        test_constant: ratios.test_constant,
        embedding_constant: result.value,
        argmax_node: ratios.argmax_node,
        iterations: result.iterations,
        converged: result.converged,
    }
}

/// Depth of the deepest common ancestor of two nodes.
fn common_ancestor_depth(p: usize, q: usize) -> u32 {
    let (dp, dq) = (TreeShape::node_depth(p), TreeShape::node_depth(q));
    let d = dp.min(dq);
    let (mut a, mut b) = (p >> (dp - d), q >> (dq - d));
    while a != b {
        a >>= 1;
        b >>= 1;
    }
    TreeShape::node_depth(a)
}

/// Dense reference for [`embedding_constant`].
///
/// Builds the Gram matrix `sqrt(mu_p mu_q) * #{Q : p <= Q, q <= Q}` on the
/// support directly from ancestor counts, without the Hardy operators.
pub fn dense_embedding_constant(mu: &TreeMeasure) -> Result<f64> {
    let support = mu.support();
    if support.len() > DENSE_ORACLE_LIMIT {
        return Err(Error::TooLarge {
            kind: "dense embedding matrix",
            requested: support.len() as u128,
            limit: DENSE_ORACLE_LIMIT as u128,
        });
    }
    let n = support.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let (p, q) = (support[i], support[j]);
        let shared = f64::from(common_ancestor_depth(p, q) + 1);
        (mu.at(p) * mu.at(q)).sqrt() * shared
    });
    Ok(dense_largest_eigenvalue(matrix))
}

/// Checks `C_test <= C_emb <= 4 C_test` with relative slack [`SANDWICH_SLACK`].
pub fn embedding_pair_check(mu: &TreeMeasure) -> PairCheck {
    embedding_pair_check_with(mu, PowerIteration::default())
}

/// [`embedding_pair_check`] with explicit power-iteration settings.
pub fn embedding_pair_check_with(mu: &TreeMeasure, opts: PowerIteration) -> PairCheck {
    let report = embedding_constant(mu, opts.tol, opts.max_iter);
    let slack = SANDWICH_SLACK * report.test_constant.max(report.embedding_constant);
    PairCheck {
        lower_holds: report.test_constant <= report.embedding_constant + slack,
        upper_holds: report.embedding_constant <= 4.0 * report.test_constant + 4.0 * slack,
        report,
    }
}

/// `sum_I alpha_I (phi Lambda)_I^2` and `(phi^2 Lambda)_{I0}`.
pub fn embedding_lhs(
    phi: &NodeVector,
    lambda: &TreeMeasure,
    alpha: &AlphaSequence,
) -> Result<EmbeddingSides> {
    let shape = lambda.shape();
    shape.ensure_same(&phi.shape())?;
    shape.ensure_same(&alpha.shape())?;
    let weighted = NodeVector::from_fn(shape, |k| phi.at(k) * lambda.at(k));
    let integrals = hardy_down(&weighted);
    let lhs = shape
        .nodes()
        .map(|k| {
            let avg = integrals.at(k) / TreeShape::interval_length(k);
            alpha.at(k) * avg * avg
        })
        .sum();
    let rhs = shape
        .nodes()
        .map(|k| phi.at(k) * phi.at(k) * lambda.at(k))
        .sum::<f64>()
        / TreeShape::interval_length(TreeShape::ROOT);
    Ok(EmbeddingSides { lhs, rhs })
}

/// Rescales `mu` so its test constant becomes 1 (identity for the zero measure).
pub fn normalize_test_constant(mu: &TreeMeasure) -> TreeMeasure {
    let c = carleson_ratios(mu).test_constant;
    if c > 0.0 {
        mu.scaled(1.0 / c)
    } else {
        mu.clone()
    }
}

/// Rescales `lambda` so its `alpha`-weighted test constant becomes 1.
pub fn normalize_alpha_test(lambda: &TreeMeasure, alpha: &AlphaSequence) -> Result<TreeMeasure> {
    let (c, _) = alpha_test_constant(lambda, alpha)?;
    Ok(if c > 0.0 {
        lambda.scaled(1.0 / c)
    } else {
        lambda.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_tree, SupportMode};

    #[test]
    fn ratios_uniform_and_point() {
        let s = build_tree(2).unwrap();
        let uniform = TreeMeasure::uniform_boundary(s, 1.0).unwrap();
        let r = carleson_ratios(&uniform);
        assert_eq!(r.test_constant, 1.75);
        assert_eq!(r.argmax_node, 1);

        let point = TreeMeasure::point_mass(s, 5, 1.0).unwrap();
        let r = carleson_ratios(&point);
        assert_eq!(r.test_constant, 3.0);
        assert_eq!(r.argmax_node, 1);
    }

    #[test]
    fn ratios_zero_measure() {
        let s = build_tree(3).unwrap();
        let r = carleson_ratios(&TreeMeasure::zero(s, SupportMode::AllNodes));
        assert_eq!(r.test_constant, 0.0);
        assert!(r.ratios.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alpha_test_examples() {
        let s = build_tree(2).unwrap();
        let uniform = TreeMeasure::uniform_boundary(s, 1.0).unwrap();
        let (c, at) = alpha_test_constant(&uniform, &AlphaSequence::squared_lengths(s)).unwrap();
        assert_eq!((c, at), (1.75, 1));
        let (c, _) = alpha_test_constant(&uniform, &AlphaSequence::zeros(s)).unwrap();
        assert_eq!(c, 0.0);

        // Root term only: alpha (Lambda)_{I0}^2 / (Lambda)_{I0} = (Lambda)_{I0}.
        let lam = uniform.scaled(3.0);
        let (c, _) = alpha_test_constant(&lam, &AlphaSequence::indicator(s, 1).unwrap()).unwrap();
        assert_eq!(c, 3.0);
    }

    #[test]
    fn alpha_shape_mismatch() {
        let lam = TreeMeasure::uniform_boundary(build_tree(2).unwrap(), 1.0).unwrap();
        let alpha = AlphaSequence::zeros(build_tree(3).unwrap());
        assert!(matches!(
            alpha_test_constant(&lam, &alpha),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn embedding_zero_and_single_node() {
        let s = build_tree(3).unwrap();
        let r = embedding_constant(&TreeMeasure::zero(s, SupportMode::BoundaryOnly), 1e-12, 100);
        assert_eq!(r.embedding_constant, 0.0);

        let s0 = build_tree(0).unwrap();
        let r = embedding_constant(&TreeMeasure::point_mass(s0, 1, 1.0).unwrap(), 1e-12, 100);
        assert!((r.embedding_constant - 1.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_matches_dense_reference_depth2() {
        let s = build_tree(2).unwrap();
        // Uniform boundary measure: Gram matrix (1/4) * [[3,2,1,1],[2,3,1,1],[1,1,3,2],[1,1,2,3]],
        // top eigenvector all-ones with eigenvalue (3+2+1+1)/4 = 7/4.
        let uniform = TreeMeasure::uniform_boundary(s, 1.0).unwrap();
        let r = embedding_constant(&uniform, 1e-12, 100_000);
        assert!((r.embedding_constant - 1.75).abs() < 1e-10);
        assert!((dense_embedding_constant(&uniform).unwrap() - 1.75).abs() < 1e-12);

        // A leaf atom sees its N+1 ancestors.
        let point = TreeMeasure::point_mass(s, 4, 1.0).unwrap();
        let r = embedding_constant(&point, 1e-12, 100_000);
        assert!((r.embedding_constant - 3.0).abs() < 1e-12);
        assert!((dense_embedding_constant(&point).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pair_check_examples() {
        let s = build_tree(2).unwrap();
        let uniform = embedding_pair_check(&TreeMeasure::uniform_boundary(s, 1.0).unwrap());
        assert!(uniform.holds());
        assert_eq!(uniform.report.test_constant, 1.75);
        let point = embedding_pair_check(&TreeMeasure::point_mass(s, 6, 1.0).unwrap());
        assert!(point.holds());
        assert_eq!(point.report.test_constant, 3.0);
        let zero = embedding_pair_check(&TreeMeasure::zero(s, SupportMode::AllNodes));
        assert!(zero.holds());
        assert_eq!(zero.report.embedding_constant, 0.0);
    }

    #[test]
    fn embedding_lhs_examples() {
        let s = build_tree(2).unwrap();
        let uniform = TreeMeasure::uniform_boundary(s, 1.0).unwrap();
        let ones = NodeVector::constant(s, 1.0);
        let zero = NodeVector::zeros(s);
        let sq = AlphaSequence::squared_lengths(s);

        assert_eq!(embedding_lhs(&zero, &uniform, &sq).unwrap().lhs, 0.0);
        let root = AlphaSequence::indicator(s, 1).unwrap();
        assert_eq!(embedding_lhs(&ones, &uniform, &root).unwrap().lhs, 1.0);
        let sides = embedding_lhs(&ones, &uniform, &sq).unwrap();
        assert_eq!(sides.lhs, 1.75);
        assert_eq!(sides.rhs, 1.0);
    }

    #[test]
    fn normalization() {
        let s = build_tree(3).unwrap();
        let mu = TreeMeasure::uniform_boundary(s, 5.0).unwrap();
        let unit = normalize_test_constant(&mu);
        assert!((carleson_ratios(&unit).test_constant - 1.0).abs() < 1e-15);
    }

    #[test]
    fn common_ancestor_depths() {
        assert_eq!(common_ancestor_depth(4, 5), 1);
        assert_eq!(common_ancestor_depth(4, 7), 0);
        assert_eq!(common_ancestor_depth(4, 2), 1);
        assert_eq!(common_ancestor_depth(9, 9), 3);
    }
}
