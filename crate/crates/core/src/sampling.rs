//! Seeded generators: admissible Bellman witnesses and random tree / bi-tree data.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit seed; parallel
//! trials use [`trial_rng`], which selects an independent ChaCha stream per
//! trial index so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bellman::{mi99_parent, BellmanPoint, SplitWitness};
use crate::bitree::{BiMeasure, BiTreeShape, BoundaryFunction};
use crate::carleson::AlphaSequence;
use crate::error::{Error, Result};
use crate::tree::{NodeVector, SupportMode, TreeMeasure, TreeShape};

/// Rejection budget per witness.
pub const MAX_RETRIES: usize = 10_000;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Mi99,
    Mi18,
    Neutr,
}

impl std::str::FromStr for SampleMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mi99" => Ok(Self::Mi99),
            "mi18" => Ok(Self::Mi18),
            "neutr" => Ok(Self::Neutr),
            other => Err(format!("unknown sample mode `{other}` (mi99, mi18, neutr)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Witness {
    Mi99 {
        left: BellmanPoint,
        right: BellmanPoint,
        m: f64,
    },
    Mi18(SplitWitness),
    Neutr {
        parent: BellmanPoint,
        a: f64,
        b: f64,
        c: f64,
    },
}

/// Why candidate witnesses were thrown away.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub mixed_bound: u64,
    pub carleson_bound: u64,
    pub other: u64,
}

impl RejectionStats {
    fn record(&mut self, err: &Error) {
        match err {
            Error::Domain {
                constraint: "f^2 <= F v",
                ..
            } => self.mixed_bound += 1,
            Error::Domain {
                constraint: "A <= v",
                ..
            } => self.carleson_bound += 1,
            _ => self.other += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.mixed_bound + self.carleson_bound + self.other
    }
}

/// Deterministic stream of admissible witnesses.
pub struct AdmissibleSampler {
    rng: ChaCha8Rng,
    mode: SampleMode,
    rejections: RejectionStats,
}

/// Uniform on `[lo, hi]`, returning an endpoint exactly one time in ten.
fn uniform_with_edges(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    match rng.random_range(0..20) {
        0 => lo,
        1 => hi,
        _ => lo + (hi - lo) * rng.random::<f64>(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn exponential(rng: &mut ChaCha8Rng) -> f64 {
    Exp1.sample(rng)
}

impl AdmissibleSampler {
    pub fn new(seed: u64, mode: SampleMode) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode,
            rejections: RejectionStats::default(),
        }
    }

    pub fn rejections(&self) -> RejectionStats {
        self.rejections
    }

    /// F, v exponential(1); A uniform on [0, v]; f uniform on [-sqrt(Fv), sqrt(Fv)].
    fn child(&mut self) -> BellmanPoint {
        let energy = exponential(&mut self.rng);
        let weight = exponential(&mut self.rng);
        let carleson = uniform_with_edges(&mut self.rng, 0.0, weight);
        let bound = (energy * weight).sqrt();
        let mixed = uniform_with_edges(&mut self.rng, -bound, bound);
        BellmanPoint {
            energy,
            mixed,
            carleson,
            weight,
        }
    }

    fn split(&mut self) -> SplitWitness {
        let left = self.child();
        let right = self.child();
        let a = gaussian(&mut self.rng).abs();
        let b = gaussian(&mut self.rng);
        let mid = left.midpoint(&right);
        let room = (mid.weight + a * a - mid.carleson).max(0.0);
        let c = uniform_with_edges(&mut self.rng, 0.0, room);
        SplitWitness {
            left,
            right,
            a,
            b,
            c,
        }
    }

    fn candidate(&mut self) -> Result<Witness> {
        match self.mode {
            SampleMode::Mi99 => {
                let left = self.child();
                let right = self.child();
                let mid = left.midpoint(&right);
                let m = uniform_with_edges(&mut self.rng, 0.0, (mid.weight - mid.carleson).max(0.0));
                left.validate()?;
                right.validate()?;
                mi99_parent(&left, &right, m).validate()?;
                Ok(Witness::Mi99 { left, right, m })
            }
            SampleMode::Mi18 => {
                let w = self.split();
                w.left.validate()?;
                w.right.validate()?;
                w.parent().validate()?;
                Ok(Witness::Mi18(w))
            }
            SampleMode::Neutr => {
                let w = self.split();
                w.left.validate()?;
                w.right.validate()?;
                let parent = w.parent();
                parent.validate()?;
                // The reduced point (F~, f~, A - c, v~) is the children midpoint.
                w.left.midpoint(&w.right).validate()?;
                Ok(Witness::Neutr {
                    parent,
                    a: w.a,
                    b: w.b,
                    c: w.c,
                })
            }
        }
    }

    pub fn next_witness(&mut self) -> Result<Witness> {
        for _ in 0..MAX_RETRIES {
            match self.candidate() {
                Ok(w) => return Ok(w),
                Err(e) => self.rejections.record(&e),
            }
        }
        Err(Error::SamplerExhausted(MAX_RETRIES))
    }
}

impl Iterator for AdmissibleSampler {
    type Item = Result<Witness>;
    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_witness())
    }
}

/// `count` admissible witnesses from `seed`.
pub fn sample_admissible(seed: u64, count: usize, mode: SampleMode) -> Result<Vec<Witness>> {
    AdmissibleSampler::new(seed, mode).take(count).collect()
}

/// Random point in the Bellman domain, drawn like the sampler's children.
pub fn random_bellman_point(rng: &mut ChaCha8Rng) -> BellmanPoint {
    let energy = exponential(rng);
    let weight = exponential(rng);
    let carleson = uniform_with_edges(rng, 0.0, weight);
    let bound = (energy * weight).sqrt();
    let mixed = uniform_with_edges(rng, -bound, bound);
    BellmanPoint {
        energy,
        mixed,
        carleson,
        weight,
    }
}

/// Heavy-tailed mass with an atom at zero.
fn sparse_lognormal(rng: &mut ChaCha8Rng, zero_probability: f64, spread: f64) -> f64 {
    if rng.random::<f64>() < zero_probability {
        0.0
    } else {
        (spread * gaussian(rng)).exp()
    }
}

/// Random measure on a tree; never identically zero.
pub fn random_tree_measure(rng: &mut ChaCha8Rng, shape: TreeShape, mode: SupportMode) -> TreeMeasure {
    let zero_probability = rng.random_range(0.0..0.7);
    let spread = rng.random_range(0.2..2.5);
    let mut masses: Vec<f64> = shape
        .nodes()
        .map(|k| match mode {
            SupportMode::BoundaryOnly if !shape.is_leaf(k) => 0.0,
            _ => sparse_lognormal(rng, zero_probability, spread),
        })
        .collect();
    if masses.iter().all(|&m| m == 0.0) {
        let leaf = rng.random_range(shape.leaf_count()..=shape.node_count());
        masses[leaf - 1] = 1.0;
    }
    TreeMeasure::new(shape, masses, mode).expect("generated masses are valid")
}

/// Random test function on the nodes; nonnegative on request.
pub fn random_node_function(rng: &mut ChaCha8Rng, shape: TreeShape, nonnegative: bool) -> NodeVector {
    let spread = rng.random_range(0.2..2.0);
    NodeVector::from_fn(shape, |_| {
        if nonnegative {
            sparse_lognormal(rng, 0.3, spread)
        } else {
            gaussian(rng) * spread
        }
    })
}

/// Random nonnegative weights.
pub fn random_alpha(rng: &mut ChaCha8Rng, shape: TreeShape) -> AlphaSequence {
    let values = shape
        .nodes()
        .map(|k| sparse_lognormal(rng, 0.3, 1.0) * TreeShape::interval_length(k))
        .collect();
    AlphaSequence::new(shape, values).expect("generated weights are valid")
}

/// Random boundary measure on a bi-tree; never identically zero.
pub fn random_bimeasure(rng: &mut ChaCha8Rng, shape: BiTreeShape) -> BiMeasure {
    let zero_probability = rng.random_range(0.0..0.7);
    let spread = rng.random_range(0.2..2.5);
    let mut cells: Vec<f64> = (0..shape.cell_count())
        .map(|_| sparse_lognormal(rng, zero_probability, spread))
        .collect();
    if cells.iter().all(|&m| m == 0.0) {
        let i = rng.random_range(0..cells.len());
        cells[i] = 1.0;
    }
    BiMeasure::new(shape, cells).expect("generated masses are valid")
}

/// Random function on the boundary cells of a bi-tree.
pub fn random_boundary_function(rng: &mut ChaCha8Rng, shape: BiTreeShape, nonnegative: bool) -> BoundaryFunction {
    let spread = rng.random_range(0.2..2.0);
    let values = (0..shape.cell_count())
        .map(|_| {
            if nonnegative {
                sparse_lognormal(rng, 0.3, spread)
            } else {
                gaussian(rng) * spread
            }
        })
        .collect();
    BoundaryFunction::new(shape, values).expect("generated values are finite")
}
