//! Rectangle-by-rectangle Bellman certificate for the `|Q|^3` embedding.
//!
//! Per rectangle `R`, with `B(x) = F - f^2/(v + A)`:
//!
//! * `F_R = (1/|R|) int_R phi^2 dmu`, `f_R = (1/|R|) int_R phi dmu`,
//!   `v_R = mu(R)/|R|` split as martingales over the half-rectangles;
//! * `A_R = (1/|R|) sum_{Q <= R} mu(Q)^2` gains at least `mu(R)^2/|R|` over
//!   the children average;
//! * `|R|^2 B(x_R) - sum_children |child|^2 B(x_child) >= |R| (int_R phi dmu)^2 / 4`.
//!
//! Summing the last line, each rectangle appears once with `+` and once per
//! parent with `-`: the root keeps `+1`, edge rectangles cancel and interior
//! rectangles keep `-1`, which only helps since `B >= 0`.

use serde::{Deserialize, Serialize};

use super::{box_sums, ensure_one_box, rect_integrals, BiMeasure, BiTreeShape, BoundaryFunction, Rect};
use crate::bellman::BellmanPoint;
use crate::error::Result;

const EXACT_TOL: f64 = 1e-12;

/// Constant `c` in the per-rectangle inequality.
pub const GAIN_FACTOR: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectRow {
    pub rect: Rect,
    pub point: BellmanPoint,
    pub children: usize,
    /// Largest relative deviation of F, f, v from their children averages.
    pub martingale_residual: f64,
    /// `A_R - mean(A_children)`.
    pub carleson_gain: f64,
    /// `mu(R)^2 / |R|`.
    pub gain_floor: f64,
    /// `|R|^2 B(x_R) - sum_children |child|^2 B(x_child)`.
    pub local_drop: f64,
    /// `|R| (int_R phi dmu)^2 / 4`.
    pub local_target: f64,
    pub martingale_ok: bool,
    pub gain_ok: bool,
    pub inequality_ok: bool,
}

impl RectRow {
    pub fn passes(&self) -> bool {
        self.martingale_ok && self.gain_ok && self.inequality_ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiCertificate {
    pub rows: Vec<RectRow>,
    /// `sum_R |R| (int_R phi dmu)^2`.
    pub total: f64,
    /// `sum_R local_drop`.
    pub telescoped: f64,
    /// `sum_R (1 - #parents(R)) |R|^2 B(x_R)`; equals `telescoped`.
    pub telescoped_by_coefficient: f64,
    /// `|R0|^2 B(x_R0)`.
    pub root_value: f64,
    /// `4 |R0|^2 F_R0`.
    pub bound: f64,
    pub bookkeeping_ok: bool,
    pub global_ok: bool,
}

impl BiCertificate {
    pub fn holds(&self) -> bool {
        self.bookkeeping_ok && self.global_ok && self.rows.iter().all(RectRow::passes)
    }

    pub fn failing_rows(&self) -> impl Iterator<Item = &RectRow> {
        self.rows.iter().filter(|r| !r.passes())
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Certifies the `|Q|^3` embedding on a boundary measure with one-box constant at most 1.
pub fn bitree_bellman_certify(mu: &BiMeasure, phi: &BoundaryFunction) -> Result<BiCertificate> {
    ensure_one_box(mu)?;
    let shape: BiTreeShape = mu.shape();
    let (square_sums, masses) = box_sums(mu);
    let integrals = rect_integrals(mu, phi)?;
    let energies = {
        let sq = BoundaryFunction::new(shape, phi.values().iter().map(|p| p * p).collect())?;
        rect_integrals(mu, &sq)?
    };

    let mut points = Vec::with_capacity(shape.rect_count());
    for r in shape.rects() {
        let area = r.area();
        let p = BellmanPoint {
            energy: energies.at(r) / area,
            mixed: integrals.at(r) / area,
            carleson: square_sums.at(r) / area,
            weight: masses.at(r) / area,
        };
        p.validate()?;
        points.push(p);
    }
    let point = |r: Rect| points[shape.index(r)];
    let value = |r: Rect| point(r).unscaled_value();

    let mut rows = Vec::with_capacity(shape.rect_count());
    let mut telescoped = 0.0;
    let mut telescoped_by_coefficient = 0.0;
    let mut total = 0.0;
    for r in shape.rects() {
        let area = r.area();
        let here = point(r);
        let children = shape.children(r);
        let k = children.len() as f64;
        let mean = |coord: fn(&BellmanPoint) -> f64| {
            if children.is_empty() {
                0.0
            } else {
                children.iter().map(|&c| coord(&point(c))).sum::<f64>() / k
            }
        };
        let martingale_residual = if children.is_empty() {
            0.0
        } else {
            rel_gap(here.energy, mean(|p| p.energy))
                .max(rel_gap(here.mixed, mean(|p| p.mixed)))
                .max(rel_gap(here.weight, mean(|p| p.weight)))
        };
        let carleson_gain = here.carleson - mean(|p| p.carleson);
        let gain_floor = masses.at(r).powi(2) / area;
        let children_drop: f64 = children
            .iter()
            .map(|&c| c.area().powi(2) * value(c))
            .sum();
        let local_drop = area * area * value(r) - children_drop;
        let integral = integrals.at(r);
        let local_target = GAIN_FACTOR * area * integral * integral;
        let scale = (area * area * here.energy).max(local_target);

        rows.push(RectRow {
            rect: r,
            point: here,
            children: children.len(),
            martingale_residual,
            carleson_gain,
            gain_floor,
            local_drop,
            local_target,
            martingale_ok: martingale_residual <= EXACT_TOL,
            gain_ok: carleson_gain - gain_floor >= -EXACT_TOL * here.carleson.max(1.0),
            inequality_ok: local_drop - local_target >= -EXACT_TOL * scale.max(1.0),
        });
        telescoped += local_drop;
        let coefficient = 1.0 - BiTreeShape::parent_count(r) as f64;
        telescoped_by_coefficient += coefficient * area * area * value(r);
        total += area * integral * integral;
    }

    let root = point(Rect::ROOT);
    let root_value = Rect::ROOT.area().powi(2) * root.unscaled_value();
    let bound = 4.0 * Rect::ROOT.area().powi(2) * root.energy;
    let tol = EXACT_TOL * bound.max(1.0);
    let bookkeeping_ok = rel_gap(telescoped, telescoped_by_coefficient) <= 1e-9;
    let global_ok = telescoped <= root_value + tol
        && total <= 4.0 * telescoped + tol
        && total <= bound + tol;
    Ok(BiCertificate {
        rows,
        total,
        telescoped,
        telescoped_by_coefficient,
        root_value,
        bound,
        bookkeeping_ok,
        global_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitree::build_bitree;
    use crate::error::Error;

    #[test]
    fn zero_function_certifies() {
        let s = build_bitree(2, 2).unwrap();
        let mu = BiMeasure::uniform(s, 1.0).normalized();
        let cert = bitree_bellman_certify(&mu, &BoundaryFunction::constant(s, 0.0)).unwrap();
        assert!(cert.holds());
        assert!(cert.rows.iter().all(|r| r.point.mixed == 0.0));
        assert_eq!(cert.total, 0.0);
    }

    #[test]
    fn rejects_one_box_violation() {
        let s = build_bitree(1, 1).unwrap();
        let mu = BiMeasure::uniform(s, 1.0);
        let err = bitree_bellman_certify(&mu, &BoundaryFunction::constant(s, 1.0)).unwrap_err();
        match err {
            Error::NotNormalized { location, .. } => assert!(location.contains("(1, 1)")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn point_mass_rows_match_direct_sums() {
        let s = build_bitree(1, 1).unwrap();
        // One-box constant of a unit atom is (1+1)(1+1) = 4.
        let mu = BiMeasure::point_mass(s, 0, 1, 1.0).unwrap().normalized();
        let t = 0.25;
        let cert = bitree_bellman_certify(&mu, &BoundaryFunction::constant(s, 1.0)).unwrap();
        assert_eq!(cert.rows.len(), 9);
        assert!(cert.holds());
        let atom = s.cell_rect(0, 1);
        for row in &cert.rows {
            let area = row.rect.area();
            let holds_atom = row.rect.contains(&atom);
            let mass = if holds_atom { t } else { 0.0 };
            // Rectangles containing the atom: each has mu(Q) = t.
            let carleson = if holds_atom {
                s.rects().filter(|q| row.rect.contains(q) && q.contains(&atom)).count() as f64 * t * t
            } else {
                0.0
            };
            assert_eq!(row.point.weight, mass / area);
            assert_eq!(row.point.energy, mass / area);
            assert_eq!(row.point.mixed, mass / area);
            assert!((row.point.carleson - carleson / area).abs() < 1e-15);
            assert!(row.passes(), "{row:?}");
        }
    }
}
