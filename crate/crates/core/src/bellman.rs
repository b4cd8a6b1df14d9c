//! The Bellman function `B(F, f, A, v) = 4 (F - f^2 / (v + A))` and the
//! inequalities that make it telescope over a dyadic tree.
//!
//! Coordinates of a [`BellmanPoint`]:
//!
//! * `energy` (F): average of `phi^2`,
//! * `mixed` (f): average of `phi * sqrt(Lambda)`,
//! * `carleson` (A): normalized Carleson sum `(1/|I|) sum alpha_K (Lambda)_K^2`,
//! * `weight` (v): average of the measure.
//!
//! The domain is `f^2 <= F v`, `0 <= A <= v`.

use serde::{Deserialize, Serialize};

use crate::carleson::{alpha_test_constant, AlphaSequence};
use crate::error::{Error, Result};
use crate::tree::{NodeValues, NodeVector, TreeMeasure, TreeShape};

/// Additive tolerance (relative to the magnitude of the compared terms) on
/// domain membership and exact identities.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Tolerance for chained inequalities.
pub const INEQUALITY_TOL: f64 = 1e-9;

/// Scale factor in front of the Bellman function.
pub const BELLMAN_SCALE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellmanPoint {
    pub energy: f64,
    pub mixed: f64,
    pub carleson: f64,
    pub weight: f64,
}

fn tol_for(tol: f64, scale: f64) -> f64 {
    tol * scale.abs().max(1.0)
}

impl BellmanPoint {
    /// Validated constructor.
    pub fn new(energy: f64, mixed: f64, carleson: f64, weight: f64) -> Result<Self> {
        let p = Self {
            energy,
            mixed,
            carleson,
            weight,
        };
        p.validate()?;
        Ok(p)
    }

    pub const ZERO: BellmanPoint = BellmanPoint {
        energy: 0.0,
        mixed: 0.0,
        carleson: 0.0,
        weight: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let coords = [self.energy, self.mixed, self.carleson, self.weight];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("{self:?}")));
        }
        let checks: [(&'static str, f64, f64); 5] = [
            ("F >= 0", -self.energy, self.energy),
            ("v >= 0", -self.weight, self.weight),
            ("A >= 0", -self.carleson, self.carleson),
            (
                "f^2 <= F v",
                self.mixed * self.mixed - self.energy * self.weight,
                self.energy * self.weight,
            ),
            ("A <= v", self.carleson - self.weight, self.weight),
        ];
        for (constraint, excess, scale) in checks {
            if excess > tol_for(DOMAIN_TOL, scale) {
                return Err(Error::Domain { constraint, excess });
            }
        }
        Ok(())
    }

    fn denominator(&self) -> f64 {
        self.weight + self.carleson
    }

    /// `F - f^2/(v + A)`, extended by `F` where `v + A = 0`.
    pub fn unscaled_value(&self) -> f64 {
        let d = self.denominator();
        if d > 0.0 {
            self.energy - self.mixed * self.mixed / d
        } else {
            self.energy
        }
    }

    /// Closed-form gradient of the (scaled) Bellman function, ordered (F, f, A, v).
    pub fn gradient(&self) -> [f64; 4] {
        let d = self.denominator();
        if d > 0.0 {
            let q = self.mixed / d;
            [BELLMAN_SCALE, -2.0 * BELLMAN_SCALE * q, BELLMAN_SCALE * q * q, BELLMAN_SCALE * q * q]
        } else {
            [BELLMAN_SCALE, 0.0, 0.0, 0.0]
        }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.energy, self.mixed, self.carleson, self.weight]
    }

    pub fn from_coords(c: [f64; 4]) -> Self {
        Self {
            energy: c[0],
            mixed: c[1],
            carleson: c[2],
            weight: c[3],
        }
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        let (a, b) = (self.coords(), other.coords());
        Self::from_coords([0, 1, 2, 3].map(|i| 0.5 * (a[i] + b[i])))
    }
}

/// `B(p) = 4 (F - f^2/(v + A))`; rejects points outside the domain.
pub fn bellman_value(p: &BellmanPoint) -> Result<f64> {
    p.validate()?;
    Ok(bellman_unchecked(p))
}

pub(crate) fn bellman_unchecked(p: &BellmanPoint) -> f64 {
    BELLMAN_SCALE * p.unscaled_value()
}

/// Parent of a plain dyadic split: half-sums, plus `m` on the Carleson coordinate.
pub fn mi99_parent(left: &BellmanPoint, right: &BellmanPoint, m: f64) -> BellmanPoint {
    let mut p = left.midpoint(right);
    p.carleson += m;
    p
}

fn concentration(p: &BellmanPoint) -> f64 {
    if p.weight > 0.0 {
        (p.mixed / p.weight).powi(2)
    } else {
        0.0
    }
}

/// `B(parent) - (B(left) + B(right))/2 - (f^2/v^2) m` for the half-sum parent.
pub fn mi99_check(left: &BellmanPoint, right: &BellmanPoint, m: f64) -> Result<f64> {
    if m < 0.0 {
        return Err(Error::Precondition(format!("m = {m} must be nonnegative")));
    }
    let parent = mi99_parent(left, right, m);
    let b_parent = bellman_value(&parent)?;
    let children = 0.5 * (bellman_value(left)? + bellman_value(right)?);
    Ok(b_parent - children - concentration(&parent) * m)
}

/// Two children plus the mass `a`, value `b` and Carleson increment `c`
/// contributed by the parent node itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitWitness {
    pub left: BellmanPoint,
    pub right: BellmanPoint,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SplitWitness {
    /// `F = F~ + b^2, f = f~ + ab, A = A~ + c, v = v~ + a^2` with `~` the half-sums.
    pub fn parent(&self) -> BellmanPoint {
        let mid = self.left.midpoint(&self.right);
        BellmanPoint {
            energy: mid.energy + self.b * self.b,
            mixed: mid.mixed + self.a * self.b,
            carleson: mid.carleson + self.c,
            weight: mid.weight + self.a * self.a,
        }
    }
}

/// `B(parent) - (B(left) + B(right))/2 - c f^2/v^2` for the tree split.
pub fn mi18_check(w: &SplitWitness) -> Result<f64> {
    if w.a < 0.0 || w.c < 0.0 {
        return Err(Error::Precondition(format!(
            "a = {} and c = {} must be nonnegative",
            w.a, w.c
        )));
    }
    let parent = w.parent();
    let b_parent = bellman_value(&parent)?;
    let children = 0.5 * (bellman_value(&w.left)? + bellman_value(&w.right)?);
    Ok(b_parent - children - w.c * concentration(&parent))
}

/// `(B(F~, f~, A-c, v~) - B(F, f, A-c, v)) / 4` with `F~ = F - b^2`,
/// `f~ = f - ab`, `v~ = v - a^2`. Never positive on the domain.
pub fn neutr_check(parent: &BellmanPoint, a: f64, b: f64, c: f64) -> Result<f64> {
    let shifted = BellmanPoint::new(parent.energy, parent.mixed, parent.carleson - c, parent.weight)?;
    let reduced = BellmanPoint::new(
        parent.energy - b * b,
        parent.mixed - a * b,
        parent.carleson - c,
        parent.weight - a * a,
    )?;
    Ok(0.25 * (bellman_unchecked(&reduced) - bellman_unchecked(&shifted)))
}

/// `B((p+q)/2) - (B(p) + B(q))/2`; nonnegative up to rounding by concavity.
pub fn midpoint_concavity_gap(p: &BellmanPoint, q: &BellmanPoint) -> Result<f64> {
    let mid = p.midpoint(q);
    Ok(bellman_value(&mid)? - 0.5 * (bellman_value(p)? + bellman_value(q)?))
}

/// `grad B(x*) . (x - x*) - (B(x) - B(x*))`; nonnegative for a concave `B`.
pub fn first_order_gap(x: &BellmanPoint, anchor: &BellmanPoint) -> Result<f64> {
    let grad = anchor.gradient();
    let (xc, ac) = (x.coords(), anchor.coords());
    let linear: f64 = (0..4).map(|i| grad[i] * (xc[i] - ac[i])).sum();
    Ok(linear - (bellman_value(x)? - bellman_value(anchor)?))
}

/// `(B(F,f,A,v) - B(F,f,A-c,v))/4 - c f^2/(4 v^2)` for `0 <= c <= A`.
pub fn carleson_increment_gap(p: &BellmanPoint, c: f64) -> Result<f64> {
    if !(0.0..=p.carleson).contains(&c) {
        return Err(Error::Precondition(format!(
            "c = {c} must lie in [0, A = {}]",
            p.carleson
        )));
    }
    let lowered = BellmanPoint::new(p.energy, p.mixed, p.carleson - c, p.weight)?;
    let gain = 0.25 * (bellman_value(p)? - bellman_value(&lowered)?);
    let bound = if p.weight > 0.0 {
        c * p.mixed * p.mixed / (4.0 * p.weight * p.weight)
    } else {
        0.0
    };
    Ok(gain - bound)
}

/// Finite-difference partial derivatives and their expected signs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    /// Central differences, ordered (F, f, A, v).
    pub numeric: [f64; 4],
    pub closed_form: [f64; 4],
    pub energy_is_four: bool,
    pub carleson_nonnegative: bool,
    pub weight_nonnegative: bool,
    pub mixed_opposes_sign: bool,
}

impl GradientReport {
    pub fn passes(&self) -> bool {
        self.energy_is_four
            && self.carleson_nonnegative
            && self.weight_nonnegative
            && self.mixed_opposes_sign
    }
}

/// Minimum distance from the domain boundary required by [`gradient_signs_check`].
pub const INTERIOR_MARGIN: f64 = 1e-6;

pub fn gradient_signs_check(p: &BellmanPoint) -> Result<GradientReport> {
    p.validate()?;
    let margins = [
        ("F", p.energy),
        ("v", p.weight),
        ("A", p.carleson),
        ("v - A", p.weight - p.carleson),
        ("F v - f^2", p.energy * p.weight - p.mixed * p.mixed),
    ];
    for (name, margin) in margins {
        if margin < INTERIOR_MARGIN {
            return Err(Error::Precondition(format!(
                "{name} = {margin:e} is within {INTERIOR_MARGIN:e} of the domain boundary"
            )));
        }
    }
    let base = p.coords();
    let mut numeric = [0.0; 4];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let h = 1e-6 * base[i].abs().max(1.0);
        let (mut up, mut down) = (base, base);
        up[i] += h;
        down[i] -= h;
        let fu = bellman_unchecked(&BellmanPoint::from_coords(up));
        let fd = bellman_unchecked(&BellmanPoint::from_coords(down));
        *slot = (fu - fd) / (2.0 * h);
    }
    let mixed_opposes_sign = if p.mixed > 0.0 {
        numeric[1] < 1e-8
    } else if p.mixed < 0.0 {
        numeric[1] > -1e-8
    } else {
        numeric[1].abs() < 1e-6
    };
    Ok(GradientReport {
        numeric,
        closed_form: p.gradient(),
        energy_is_four: (numeric[0] - BELLMAN_SCALE).abs() < 1e-4,
        carleson_nonnegative: numeric[2] >= -1e-8,
        weight_nonnegative: numeric[3] >= -1e-8,
        mixed_opposes_sign,
    })
}

/// Per-node line of the telescoping certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub node: usize,
    pub point: BellmanPoint,
    /// `|I| B(x_I) - |I-| B(x_I-) - |I+| B(x_I+) - alpha_I f_I^2`.
    pub slack: f64,
    /// `|I| B(x_I)`.
    pub weighted_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeCertificate {
    pub rows: Vec<CertificateRow>,
    /// `sum_I alpha_I f_I^2`.
    pub total: f64,
    /// `|I0| B(x_I0)`.
    pub root_value: f64,
    /// `4 |I0| F_I0`.
    pub bound: f64,
    pub min_slack: f64,
}

impl TreeCertificate {
    pub fn holds(&self) -> bool {
        let tol = tol_for(INEQUALITY_TOL, self.bound);
        self.min_slack >= -INEQUALITY_TOL
            && self.total <= self.root_value + tol
            && self.root_value <= self.bound + tol
    }
}

/// Telescoping certificate for the weighted tree embedding.
///
/// Builds `(F_I, f_I, A_I, v_I)` bottom-up from `a_I = sqrt(lambda_I/|I|)`,
/// `b_I = phi(I)/sqrt(|I|)`, `c_I = alpha_I (Lambda)_I^2 / |I|` and records the
/// slack of `alpha_I f_I^2 <= |I| B(x_I) - |I-| B(x_I-) - |I+| B(x_I+)` at every
/// node. Requires the `alpha`-weighted test constant to be at most 1.
pub fn certify_tree_embedding(
    lambda: &TreeMeasure,
    phi: &NodeVector,
    alpha: &AlphaSequence,
) -> Result<TreeCertificate> {
    let shape = lambda.shape();
    shape.ensure_same(&phi.shape())?;
    shape.ensure_same(&alpha.shape())?;
    let (test, at) = alpha_test_constant(lambda, alpha)?;
    if test > 1.0 + DOMAIN_TOL {
        return Err(Error::NotNormalized {
            measured: test,
            location: format!("node {at}"),
        });
    }

    let n = shape.node_count();
    let mut points = vec![BellmanPoint::ZERO; n];
    let mut values = vec![0.0; n];
    let mut rows = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        let len = TreeShape::interval_length(k);
        let (mid, children_value) = match shape.children(k) {
            Some((l, r)) => (
                points[l - 1].midpoint(&points[r - 1]),
                0.5 * len * (values[l - 1] + values[r - 1]),
            ),
            None => (BellmanPoint::ZERO, 0.0),
        };
        let a = (lambda.at(k) / len).sqrt();
        let b = phi.at(k) / len.sqrt();
        let weight = a * a + mid.weight;
        let c = alpha.at(k) * weight * weight / len;
        let point = BellmanPoint::new(
            b * b + mid.energy,
            a * b + mid.mixed,
            c + mid.carleson,
            weight,
        )?;
        let value = bellman_unchecked(&point);
        let weighted_value = len * value;
        let slack = weighted_value - children_value - alpha.at(k) * point.mixed * point.mixed;
        points[k - 1] = point;
        values[k - 1] = value;
        rows.push(CertificateRow {
            node: k,
            point,
            slack,
            weighted_value,
        });
    }
    rows.reverse();

    let total = shape
        .nodes()
        .map(|k| alpha.at(k) * points[k - 1].mixed.powi(2))
        .sum();
    let root_len = TreeShape::interval_length(TreeShape::ROOT);
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(TreeCertificate {
        total,
        root_value: root_len * values[0],
        bound: BELLMAN_SCALE * root_len * points[0].energy,
        min_slack,
        rows,
    })
}
