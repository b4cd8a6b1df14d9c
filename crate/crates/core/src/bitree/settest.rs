//! Carleson test over sets of boundary cells.
//!
//! For `E` a set of cells, a rectangle `Q` counts as inside `E` when every
//! cell under `Q` belongs to `E`. The set test ratio is
//! `sum_{Q inside E} mu(Q)^2 / mu(E)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BiMeasure, CellPrefixSums, Rect};
use crate::error::{Error, Result};
use crate::sampling::trial_rng;

/// Largest cell count accepted by the exhaustive strategy.
pub const EXHAUSTIVE_CELL_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum SetStrategy {
    /// Every subset of the boundary.
    Exhaustive,
    /// Unions of at most `k` rectangles' cell sets.
    RectUnions { k: usize },
    /// Seeded random subsets with a random inclusion rate per trial.
    RandomSubsets { trials: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetTest {
    pub value: f64,
    /// Row-major indices of the maximizing set's cells.
    pub witness: Vec<usize>,
    pub sets_evaluated: u64,
}

/// Ratio for one set given as a membership mask over row-major cells.
pub fn set_ratio(mu: &BiMeasure, members: &[bool]) -> Result<f64> {
    let shape = mu.shape();
    if members.len() != shape.cell_count() {
        return Err(Error::ShapeMismatch {
            expected: shape.cell_count(),
            found: members.len(),
        });
    }
    let masses = mu.rect_masses();
    Ok(ratio_with(mu, &masses.values, members))
}

fn ratio_with(mu: &BiMeasure, rect_masses: &[f64], members: &[bool]) -> f64 {
    let shape = mu.shape();
    let indicator: Vec<f64> = members.iter().map(|&b| f64::from(u8::from(b))).collect();
    let counts = CellPrefixSums::new(shape, &indicator);
    let set_mass: f64 = mu
        .cells()
        .iter()
        .zip(members)
        .filter(|(_, &b)| b)
        .map(|(m, _)| m)
        .sum();
    if set_mass <= 0.0 {
        return 0.0;
    }
    let mut inside = 0.0;
    for (i, &m) in rect_masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let r = shape.rect(i);
        let (rows, cols) = shape.cell_ranges(r);
        let area = (rows.len() * cols.len()) as f64;
        if counts.block(rows, cols) == area {
            inside += m * m;
        }
    }
    inside / set_mass
}

fn members_to_witness(members: &[bool]) -> Vec<usize> {
    (0..members.len()).filter(|&i| members[i]).collect()
}

/// Maximizes the set test ratio with the requested search strategy.
pub fn set_test_constant(mu: &BiMeasure, strategy: SetStrategy) -> Result<SetTest> {
    match strategy {
        SetStrategy::Exhaustive => exhaustive(mu),
        SetStrategy::RectUnions { k } => rect_unions(mu, k),
        SetStrategy::RandomSubsets { trials, seed } => random_subsets(mu, trials, seed),
    }
}

/// All `2^cells` subsets. Inner sums come from a subset-sum (zeta) transform
/// over the cell masks of the rectangles.
fn exhaustive(mu: &BiMeasure) -> Result<SetTest> {
    let shape = mu.shape();
    let cells = shape.cell_count();
    if cells > EXHAUSTIVE_CELL_LIMIT {
        return Err(Error::TooLarge {
            kind: "exhaustive set search over cells",
            requested: cells as u128,
            limit: EXHAUSTIVE_CELL_LIMIT as u128,
        });
    }
    let size = 1usize << cells;
    let cols = shape.grid().1;
    let masses = mu.rect_masses();
    let mut inside = vec![0.0f64; size];
    for r in shape.rects() {
        let (rows, cs) = shape.cell_ranges(r);
        let mut mask = 0usize;
        for row in rows {
            for c in cs.clone() {
                mask |= 1 << (row * cols + c);
            }
        }
        inside[mask] += masses.at(r).powi(2);
    }
    for bit in 0..cells {
        let b = 1usize << bit;
        for mask in 0..size {
            if mask & b != 0 {
                inside[mask] += inside[mask ^ b];
            }
        }
    }
    let mut set_mass = vec![0.0f64; size];
    let mut best = (0.0, 0usize);
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        set_mass[mask] = set_mass[mask & (mask - 1)] + mu.cells()[low];
        if set_mass[mask] > 0.0 {
            let ratio = inside[mask] / set_mass[mask];
            if ratio > best.0 {
                best = (ratio, mask);
            }
        }
    }
    Ok(SetTest {
        value: best.0,
        witness: (0..cells).filter(|&i| best.1 >> i & 1 == 1).collect(),
        sets_evaluated: size as u64,
    })
}

fn rect_unions(mu: &BiMeasure, k: usize) -> Result<SetTest> {
    if k == 0 {
        return Err(Error::Precondition("rectangle unions need k >= 1".into()));
    }
    let shape = mu.shape();
    let masses = mu.rect_masses();
    let rects: Vec<Rect> = shape.rects().collect();
    let mut best = SetTest {
        value: 0.0,
        witness: Vec::new(),
        sets_evaluated: 0,
    };
    let mut chosen: Vec<usize> = Vec::with_capacity(k);

    fn visit(
        start: usize,
        k: usize,
        chosen: &mut Vec<usize>,
        rects: &[Rect],
        mu: &BiMeasure,
        masses: &[f64],
        best: &mut SetTest,
    ) {
        if !chosen.is_empty() {
            let shape = mu.shape();
            let mut members = vec![false; shape.cell_count()];
            for &i in chosen.iter() {
                let (rows, cols) = shape.cell_ranges(rects[i]);
                for row in rows {
                    for c in cols.clone() {
                        members[shape.cell_index(row, c)] = true;
                    }
                }
            }
            let ratio = ratio_with(mu, masses, &members);
            best.sets_evaluated += 1;
            if ratio > best.value {
                best.value = ratio;
                best.witness = members_to_witness(&members);
            }
        }
        if chosen.len() == k {
            return;
        }
        for i in start..rects.len() {
            chosen.push(i);
            visit(i + 1, k, chosen, rects, mu, masses, best);
            chosen.pop();
        }
    }

    visit(0, k, &mut chosen, &rects, mu, &masses.values, &mut best);
    Ok(best)
}

fn random_subsets(mu: &BiMeasure, trials: usize, seed: u64) -> Result<SetTest> {
    let masses = mu.rect_masses();
    let mut rng = trial_rng(seed, 0);
    let mut best = SetTest {
        value: 0.0,
        witness: Vec::new(),
        sets_evaluated: 0,
    };
    for _ in 0..trials {
        let rate: f64 = rng.random();
        let members: Vec<bool> = (0..mu.shape().cell_count())
            .map(|_| rng.random::<f64>() < rate)
            .collect();
        let ratio = ratio_with(mu, &masses.values, &members);
        best.sets_evaluated += 1;
        if ratio > best.value {
            best.value = ratio;
            best.witness = members_to_witness(&members);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitree::{build_bitree, one_box_constant};

    #[test]
    fn full_boundary_recovers_root_ratio() {
        let s = build_bitree(1, 1).unwrap();
        let mu = BiMeasure::uniform(s, 1.0);
        assert_eq!(set_ratio(&mu, &[true; 4]).unwrap(), 2.25);
        let best = set_test_constant(&mu, SetStrategy::Exhaustive).unwrap();
        assert!(best.value >= 2.25);
        assert_eq!(best.sets_evaluated, 16);
    }

    #[test]
    fn singleton_under_point_mass() {
        let s = build_bitree(2, 1).unwrap();
        let mu = BiMeasure::point_mass(s, 3, 0, 1.0).unwrap();
        let mut members = vec![false; s.cell_count()];
        members[s.cell_index(3, 0)] = true;
        assert_eq!(set_ratio(&mu, &members).unwrap(), 1.0);
    }

    #[test]
    fn zero_measure() {
        let s = build_bitree(1, 2).unwrap();
        let mu = BiMeasure::zero(s);
        for strategy in [
            SetStrategy::Exhaustive,
            SetStrategy::RectUnions { k: 2 },
            SetStrategy::RandomSubsets { trials: 20, seed: 1 },
        ] {
            assert_eq!(set_test_constant(&mu, strategy).unwrap().value, 0.0);
        }
    }

    #[test]
    fn exhaustive_agrees_with_direct_evaluation() {
        let s = build_bitree(1, 2).unwrap();
        let cells = vec![0.3, 0.0, 1.2, 0.5, 0.05, 2.0, 0.0, 0.7];
        let mu = BiMeasure::new(s, cells).unwrap();
        let best = set_test_constant(&mu, SetStrategy::Exhaustive).unwrap();
        let mut brute: f64 = 0.0;
        for mask in 0u32..256 {
            let members: Vec<bool> = (0..8).map(|i| mask >> i & 1 == 1).collect();
            brute = brute.max(set_ratio(&mu, &members).unwrap());
        }
        assert!((best.value - brute).abs() < 1e-12);
        let mut members = vec![false; 8];
        best.witness.iter().for_each(|&i| members[i] = true);
        assert!((set_ratio(&mu, &members).unwrap() - best.value).abs() < 1e-12);
    }

    #[test]
    fn single_rectangles_never_beat_unions() {
        let s = build_bitree(2, 1).unwrap();
        let cells = vec![0.3, 0.9, 1.2, 0.5, 0.05, 2.0, 0.1, 0.7];
        let mu = BiMeasure::new(s, cells).unwrap();
        let one = set_test_constant(&mu, SetStrategy::RectUnions { k: 1 }).unwrap();
        let two = set_test_constant(&mu, SetStrategy::RectUnions { k: 2 }).unwrap();
        let all = set_test_constant(&mu, SetStrategy::Exhaustive).unwrap();
        assert!(one.value >= one_box_constant(&mu).value - 1e-12);
        assert!(two.value >= one.value);
        assert!(all.value >= two.value - 1e-12);
    }

    #[test]
    fn exhaustive_size_guard() {
        let s = build_bitree(3, 3).unwrap();
        assert!(matches!(
            set_test_constant(&BiMeasure::uniform(s, 1.0), SetStrategy::Exhaustive),
            Err(Error::TooLarge { .. })
        ));
    }
}
