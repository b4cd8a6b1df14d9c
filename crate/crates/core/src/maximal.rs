//! Stopping-time decomposition behind the maximal theorem on a tree.
//!
//! For a node `K` write `r(K) = (phi Lambda)_K / (Lambda)_K`, the
//! `Lambda`-average of `phi` over the subtree at `K` (0 on null subtrees).
//! Starting from the root, every stopping vertex `H` owns the region `O_H`
//! of its subtree that lies above the first descendants `J` with
//! `r(J) >= 2 r(H)`; those `J` become the next generation.

use serde::{Deserialize, Serialize};

use crate::carleson::{alpha_test_constant, carleson_ratios, AlphaSequence};
use crate::error::{Error, Result};
use crate::tree::{hardy_down, NodeValues, NodeVector, TreeMeasure, TreeShape};

const RATIO_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-9;

fn subtree_ratios(lambda: &TreeMeasure, phi: &NodeVector) -> (NodeVector, NodeVector) {
    let shape = lambda.shape();
    let mass = hardy_down(lambda);
    let weighted = hardy_down(&NodeVector::from_fn(shape, |k| phi.at(k) * lambda.at(k)));
    let ratios = NodeVector::from_fn(shape, |k| {
        if mass.at(k) > 0.0 {
            weighted.at(k) / mass.at(k)
        } else {
            0.0
        }
    });
    (ratios, mass)
}

/// `m_I = max_{K >= I} r(K)`, by a running maximum from the root.
pub fn maximal_ratios(lambda: &TreeMeasure, phi: &NodeVector) -> Result<NodeVector> {
    let shape = lambda.shape();
    shape.ensure_same(&phi.shape())?;
    let (ratios, _) = subtree_ratios(lambda, phi);
    let mut out = ratios.into_values();
    for k in 2..=shape.node_count() {
        out[k - 1] = out[k - 1].max(out[k / 2 - 1]);
    }
    NodeVector::new(shape, out)
}

/// One stopping vertex `H` with its region `O_H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingVertex {
    pub node: usize,
    pub generation: usize,
    /// The stopping vertex whose region this one was found under.
    pub parent: Option<usize>,
    /// `O_H`: `H` and its descendants outside `E_H`.
    pub region: Vec<usize>,
    /// `beta_H = Lambda(O_H)`.
    pub beta: f64,
    /// `r(H)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingDecomposition {
    pub shape: TreeShape,
    pub generations: Vec<Vec<usize>>,
    pub vertices: Vec<StoppingVertex>,
    /// Owning stopping vertex of every node, indexed by `node - 1`.
    pub owner: Vec<usize>,
}

impl StoppingDecomposition {
    pub fn vertex(&self, node: usize) -> Option<&StoppingVertex> {
        self.vertices.iter().find(|v| v.node == node)
    }
}

fn stops(child_ratio: f64, parent_ratio: f64) -> bool {
    if parent_ratio == 0.0 {
        child_ratio > 0.0
    } else {
        child_ratio >= 2.0 * parent_ratio
    }
}

/// Builds the stopping vertices generation by generation.
///
/// Subtrees of zero `Lambda`-mass stay in the current region and never stop.
/// When `r(H) = 0` the threshold is strict, otherwise every child of a null
/// ratio would stop at once.
pub fn stopping_decomposition(lambda: &TreeMeasure, phi: &NodeVector) -> Result<StoppingDecomposition> {
    let shape = lambda.shape();
    shape.ensure_same(&phi.shape())?;
    let (ratios, mass) = subtree_ratios(lambda, phi);
    let mut owner = vec![0usize; shape.node_count()];
    let mut vertices = Vec::new();
    let mut generations = Vec::new();
    let mut current = vec![(TreeShape::ROOT, None)];

    while !current.is_empty() {
        let generation = generations.len();
        let mut next = Vec::new();
        for &(h, parent) in &current {
            let r_h = ratios.at(h);
            let mut region = Vec::new();
            let mut stack = vec![h];
            while let Some(k) = stack.pop() {
                owner[k - 1] = h;
                region.push(k);
                let Some((l, r)) = shape.children(k) else {
                    continue;
                };
                for child in [r, l] {
                    if mass.at(child) > 0.0 && stops(ratios.at(child), r_h) {
                        next.push((child, Some(h)));
                    } else {
                        stack.push(child);
                    }
                }
            }
            region.sort_unstable();
            let beta = region.iter().map(|&k| lambda.at(k)).sum();
            vertices.push(StoppingVertex {
                node: h,
                generation,
                parent,
                region,
                beta,
                ratio: r_h,
            });
        }
        next.sort_unstable();
        generations.push(current.iter().map(|&(h, _)| h).collect());
        current = next;
    }
    Ok(StoppingDecomposition {
        shape,
        generations,
        vertices,
        owner,
    })
}

/// Result of one invariant: whether it held and the smallest margin seen
/// (negative margins are violations).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantOutcome {
    pub passed: bool,
    pub worst_margin: f64,
}

impl InvariantOutcome {
    fn from_margins(margins: impl IntoIterator<Item = f64>, tol: f64) -> Self {
        let worst = margins.into_iter().fold(f64::INFINITY, f64::min);
        Self {
            passed: worst >= -tol,
            worst_margin: worst,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    /// Regions are pairwise disjoint and cover every node.
    pub partition: InvariantOutcome,
    /// `Lambda(E_H) <= Lambda(H) / 2`.
    pub half_mass: InvariantOutcome,
    /// `sum_{H <= K} beta_H <= Lambda(K)` for every node `K`.
    pub packing: InvariantOutcome,
    /// `r(H) >= 2 r(parent stopping vertex)`.
    pub chain_growth: InvariantOutcome,
    /// `r(I) < 2 r(owner(I))`.
    pub ownership: InvariantOutcome,
    /// `m_I <= 2 r(owner(I))`.
    pub maximal_bound: InvariantOutcome,
    /// Test constant of `alpha_H = beta_H / (Lambda)_H^2` is at most 1.
    pub alpha_test: InvariantOutcome,
}

impl StoppingReport {
    pub fn passes(&self) -> bool {
        [
            self.partition,
            self.half_mass,
            self.packing,
            self.chain_growth,
            self.ownership,
            self.maximal_bound,
            self.alpha_test,
        ]
        .iter()
        .all(|o| o.passed)
    }
}

fn scaled(tol: f64, magnitude: f64) -> f64 {
    tol * magnitude.abs().max(1.0)
}

/// The `alpha_H = beta_H / (Lambda)_H^2` weights carried by stopping vertices.
pub fn stopping_alpha(dec: &StoppingDecomposition, lambda: &TreeMeasure) -> AlphaSequence {
    let shape = dec.shape;
    let mass = hardy_down(lambda);
    let mut values = vec![0.0; shape.node_count()];
    for v in &dec.vertices {
        let avg = mass.at(v.node) / TreeShape::interval_length(v.node);
        if avg > 0.0 {
            values[v.node - 1] = v.beta / (avg * avg);
        }
    }
    AlphaSequence::new(shape, values).expect("nonnegative weights")
}

/// Checks every structural invariant of a decomposition.
pub fn verify_stopping_invariants(
    dec: &StoppingDecomposition,
    lambda: &TreeMeasure,
    phi: &NodeVector,
) -> Result<StoppingReport> {
    let shape = lambda.shape();
    shape.ensure_same(&phi.shape())?;
    shape.ensure_same(&dec.shape)?;
    let (ratios, mass) = subtree_ratios(lambda, phi);
    let maximal = maximal_ratios(lambda, phi)?;

    let mut cover = vec![0usize; shape.node_count()];
    for v in &dec.vertices {
        for &k in &v.region {
            shape.check_node(k)?;
            cover[k - 1] += 1;
        }
    }
    let partition = InvariantOutcome::from_margins(
        cover.iter().map(|&c| if c == 1 { 0.0 } else { -1.0 }),
        0.0,
    );

    let half_mass = InvariantOutcome::from_margins(
        dec.vertices.iter().map(|v| {
            let region_mass: f64 = v.region.iter().map(|&k| lambda.at(k)).sum();
            let below = mass.at(v.node) - region_mass;
            let margin = 0.5 * mass.at(v.node) - below;
            margin / mass.at(v.node).max(1.0)
        }),
        RATIO_TOL,
    );

    let mut beta_under = NodeVector::zeros(shape).into_values();
    for v in &dec.vertices {
        beta_under[v.node - 1] += v.beta;
    }
    let beta_under = hardy_down(&NodeVector::new(shape, beta_under)?);
    let packing = InvariantOutcome::from_margins(
        shape
            .nodes()
            .map(|k| (mass.at(k) - beta_under.at(k)) / mass.at(k).max(1.0)),
        RATIO_TOL,
    );

    let chain_growth = InvariantOutcome::from_margins(
        dec.vertices.iter().filter_map(|v| {
            let p = dec.vertex(v.parent?)?;
            let margin = if p.ratio == 0.0 {
                if v.ratio > 0.0 {
                    0.0
                } else {
                    -1.0
                }
            } else {
                v.ratio - 2.0 * p.ratio
            };
            Some(margin / scaled(1.0, p.ratio))
        }),
        RATIO_TOL,
    );

    let owner_ratio = |k: usize| ratios.at(dec.owner[k - 1]);
    let ownership = InvariantOutcome::from_margins(
        shape.nodes().filter(|&k| dec.owner[k - 1] != k).map(|k| {
            let r = owner_ratio(k);
            (2.0 * r - ratios.at(k)) / scaled(1.0, r)
        }),
        RATIO_TOL,
    );
    let maximal_bound = InvariantOutcome::from_margins(
        shape.nodes().map(|k| {
            let r = owner_ratio(k);
            (2.0 * r - maximal.at(k)) / scaled(1.0, r)
        }),
        RATIO_TOL,
    );

    let (alpha_constant, _) = alpha_test_constant(lambda, &stopping_alpha(dec, lambda))?;
    let alpha_test = InvariantOutcome::from_margins([1.0 - alpha_constant], RATIO_TOL);

    Ok(StoppingReport {
        partition,
        half_mass,
        packing,
        chain_growth,
        ownership,
        maximal_bound,
        alpha_test,
    })
}

/// Both sides of the maximal inequality and the intermediate stopping bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalCheck {
    /// `(1/|I0|) sum_I |I|^2 (Lambda)_I^2 m_I^2`.
    pub lhs: f64,
    /// `(phi^2 Lambda)_{I0}`.
    pub rhs: f64,
    /// `lhs / rhs`, 0 when both vanish.
    pub ratio: f64,
    /// `8 sum_{H} r(H)^2 Lambda(O_H)`.
    pub stopping_bound: f64,
    /// `(8/|I0|) sum_H alpha_H (phi Lambda)_H^2`.
    pub alpha_bound: f64,
    pub passes_stopping_bound: bool,
    pub passes: bool,
}

/// Constant of the final maximal inequality.
pub const MAXIMAL_CONSTANT: f64 = 32.0;

/// Constant of the intermediate stopping-time bound.
pub const STOPPING_CONSTANT: f64 = 8.0;

/// Evaluates the maximal inequality on a measure with one-box constant at most 1.
pub fn maximal_theorem_check(lambda: &TreeMeasure, phi: &NodeVector) -> Result<MaximalCheck> {
    let shape = lambda.shape();
    shape.ensure_same(&phi.shape())?;
    let ratios = carleson_ratios(lambda);
    if ratios.test_constant > 1.0 + RATIO_TOL {
        return Err(Error::NotNormalized {
            measured: ratios.test_constant,
            location: format!("node {}", ratios.argmax_node),
        });
    }
    let mass = hardy_down(lambda);
    let maximal = maximal_ratios(lambda, phi)?;
    let root_len = TreeShape::interval_length(TreeShape::ROOT);
    let lhs = shape
        .nodes()
        .map(|k| {
            let len = TreeShape::interval_length(k);
            let avg = mass.at(k) / len;
            len * len * avg * avg * maximal.at(k).powi(2)
        })
        .sum::<f64>()
        / root_len;
    let rhs = shape
        .nodes()
        .map(|k| phi.at(k).powi(2) * lambda.at(k))
        .sum::<f64>()
        / root_len;

    let dec = stopping_decomposition(lambda, phi)?;
    let stopping_bound = STOPPING_CONSTANT
        * dec
            .vertices
            .iter()
            .map(|v| v.ratio * v.ratio * v.beta)
            .sum::<f64>();
    let alpha = stopping_alpha(&dec, lambda);
    let weighted = hardy_down(&NodeVector::from_fn(shape, |k| phi.at(k) * lambda.at(k)));
    let alpha_bound = STOPPING_CONSTANT
        * shape
            .nodes()
            .map(|k| alpha.at(k) * (weighted.at(k) / TreeShape::interval_length(k)).powi(2))
            .sum::<f64>()
        / root_len;

    let tol = |x: f64| scaled(BOUND_TOL, x);
    Ok(MaximalCheck {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        stopping_bound,
        alpha_bound,
        passes_stopping_bound: lhs <= stopping_bound + tol(stopping_bound),
        passes: lhs <= MAXIMAL_CONSTANT * rhs + tol(rhs),
    })
}
