//! Dyadic rectangles of the unit square as nodes of the bi-tree `T x T`.
//!
//! A rectangle is a pair of heap-numbered tree nodes `(x, y)`; its area is
//! `2^-(depth(x) + depth(y))` and `Q <= R` means coordinatewise subtree order.
//! Measures live on the `2^n x 2^m` boundary cells, stored row-major with the
//! row index running along the first coordinate.

mod certify;
mod gap;
mod settest;

pub use certify::{bitree_bellman_certify, BiCertificate, RectRow};
pub use gap::{gap_probe, GapConfig, GapOptimizer, GapReport, GapStep};
pub use settest::{set_ratio, set_test_constant, SetStrategy, SetTest, EXHAUSTIVE_CELL_LIMIT};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_largest_eigenvalue, power_iteration, PowerIteration};
use crate::error::{Error, Result};
use crate::limits;
use crate::tree::{dyadic_length, TreeShape};

/// Rectangle index geometry for depths `(n, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BiTreeShape {
    x: TreeShape,
    y: TreeShape,
}

/// A dyadic rectangle `I_x times J_y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rectangle ({}, {})", self.x, self.y)
    }
}

impl Rect {
    pub const ROOT: Rect = Rect { x: 1, y: 1 };

    pub fn area(&self) -> f64 {
        dyadic_length(TreeShape::node_depth(self.x) + TreeShape::node_depth(self.y))
    }

    pub fn contains(&self, other: &Rect) -> bool {
        TreeShape::is_descendant(other.x, self.x) && TreeShape::is_descendant(other.y, self.y)
    }
}

pub fn build_bitree(n: u32, m: u32) -> Result<BiTreeShape> {
    BiTreeShape::with_limit(n, m, limits::bitree_rect_limit())
}

impl BiTreeShape {
    pub fn with_limit(n: u32, m: u32, max_rects: u128) -> Result<Self> {
        let x = TreeShape::with_limit(n, u128::MAX);
        let y = TreeShape::with_limit(m, u128::MAX);
        let too_large = |requested| Error::TooLarge {
            kind: "bi-tree",
            requested,
            limit: max_rects,
        };
        let (x, y) = match (x, y) {
            (Ok(x), Ok(y)) => (x, y),
            _ => return Err(too_large(u128::MAX)),
        };
        let requested = x.node_count() as u128 * y.node_count() as u128;
        if requested > max_rects {
            return Err(too_large(requested));
        }
        Ok(Self { x, y })
    }

    pub fn depths(&self) -> (u32, u32) {
        (self.x.depth(), self.y.depth())
    }

    pub fn x_tree(&self) -> TreeShape {
        self.x
    }

    pub fn y_tree(&self) -> TreeShape {
        self.y
    }

    pub fn rect_count(&self) -> usize {
        self.x.node_count() * self.y.node_count()
    }

    /// Number of boundary cells, `2^n * 2^m`.
    pub fn cell_count(&self) -> usize {
        self.x.leaf_count() * self.y.leaf_count()
    }

    /// `(rows, columns)` of the boundary grid.
    pub fn grid(&self) -> (usize, usize) {
        (self.x.leaf_count(), self.y.leaf_count())
    }

    pub fn index(&self, r: Rect) -> usize {
        (r.x - 1) * self.y.node_count() + (r.y - 1)
    }

    pub fn rect(&self, index: usize) -> Rect {
        let ny = self.y.node_count();
        Rect {
            x: index / ny + 1,
            y: index % ny + 1,
        }
    }

    pub fn contains(&self, r: Rect) -> bool {
        self.x.contains(r.x) && self.y.contains(r.y)
    }

    pub fn rects(&self) -> impl Iterator<Item = Rect> + '_ {
        (0..self.rect_count()).map(|i| self.rect(i))
    }

    /// The bottom rectangle over cell `(row, col)`.
    pub fn cell_rect(&self, row: usize, col: usize) -> Rect {
        Rect {
            x: self.x.leaf_count() + row,
            y: self.y.leaf_count() + col,
        }
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.y.leaf_count() + col
    }

    /// Half-rectangles of `r`: left/right when `r.x` is not a leaf, then
    /// bottom/top when `r.y` is not a leaf.
    pub fn children(&self, r: Rect) -> Vec<Rect> {
        let mut out = Vec::with_capacity(4);
        if let Some((a, b)) = self.x.children(r.x) {
            out.push(Rect { x: a, y: r.y });
            out.push(Rect { x: b, y: r.y });
        }
        if let Some((a, b)) = self.y.children(r.y) {
            out.push(Rect { x: r.x, y: a });
            out.push(Rect { x: r.x, y: b });
        }
        out
    }

    /// Number of rectangles having `r` as a half-rectangle.
    pub fn parent_count(r: Rect) -> usize {
        usize::from(r.x > 1) + usize::from(r.y > 1)
    }

    /// Row and column ranges of the cells under `r`.
    pub fn cell_ranges(&self, r: Rect) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let span = |tree: TreeShape, node: usize| {
            let shift = tree.depth() - TreeShape::node_depth(node);
            let start = (node << shift) - tree.leaf_count();
            start..start + (1usize << shift)
        };
        (span(self.x, r.x), span(self.y, r.y))
    }

    fn check_cells(&self, found: usize) -> Result<()> {
        if found == self.cell_count() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.cell_count(),
                found,
            })
        }
    }

    pub(crate) fn ensure_same(&self, other: &BiTreeShape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.rect_count(),
                found: other.rect_count(),
            })
        }
    }

    /// Embeds cell values as the bottom rectangles of a zero rectangle array.
    pub fn lift_cells(&self, cells: &[f64]) -> Vec<f64> {
        let (rows, cols) = self.grid();
        let mut out = vec![0.0; self.rect_count()];
        for row in 0..rows {
            for col in 0..cols {
                out[self.index(self.cell_rect(row, col))] = cells[self.cell_index(row, col)];
            }
        }
        out
    }

    /// In place: each rectangle receives the sum over all rectangles below it.
    pub fn accumulate_down(&self, values: &mut [f64]) {
        let ny = self.y.node_count();
        for x in (2..=self.x.node_count()).rev() {
            let (src, dst) = ((x - 1) * ny, (x / 2 - 1) * ny);
            for j in 0..ny {
                values[dst + j] += values[src + j];
            }
        }
        for row in values.chunks_exact_mut(ny) {
            for y in (2..=ny).rev() {
                row[y / 2 - 1] += row[y - 1];
            }
        }
    }

    /// In place: each rectangle receives the sum over all rectangles above it.
    pub fn accumulate_up(&self, values: &mut [f64]) {
        let ny = self.y.node_count();
        for x in 2..=self.x.node_count() {
            let (dst, src) = ((x - 1) * ny, (x / 2 - 1) * ny);
            for j in 0..ny {
                values[dst + j] += values[src + j];
            }
        }
        for row in values.chunks_exact_mut(ny) {
            for y in 2..=ny {
                row[y - 1] += row[y / 2 - 1];
            }
        }
    }
}

/// Dense real values indexed by rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectVector {
    shape: BiTreeShape,
    values: Vec<f64>,
}

impl RectVector {
    pub fn new(shape: BiTreeShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.rect_count() {
            return Err(Error::ShapeMismatch {
                expected: shape.rect_count(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(shape.rect(i).to_string()));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> BiTreeShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, r: Rect) -> f64 {
        self.values[self.shape.index(r)]
    }
}

fn validate_cells(shape: BiTreeShape, cells: &[f64], what: &str, nonnegative: bool) -> Result<()> {
    shape.check_cells(cells.len())?;
    let cols = shape.grid().1;
    for (i, &v) in cells.iter().enumerate() {
        let position = || format!("{what} cell ({}, {})", i / cols, i % cols);
        if !v.is_finite() {
            return Err(Error::NonFinite(position()));
        }
        if nonnegative && v < 0.0 {
            return Err(Error::NegativeMass {
                position: position(),
                value: v,
            });
        }
    }
    Ok(())
}

/// Nonnegative masses on the boundary cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiMeasure {
    shape: BiTreeShape,
    cells: Vec<f64>,
}

impl BiMeasure {
    pub fn new(shape: BiTreeShape, cells: Vec<f64>) -> Result<Self> {
        validate_cells(shape, &cells, "mass at", true)?;
        Ok(Self { shape, cells })
    }

    pub fn uniform(shape: BiTreeShape, total: f64) -> Self {
        let per_cell = total / shape.cell_count() as f64;
        Self {
            shape,
            cells: vec![per_cell; shape.cell_count()],
        }
    }

    pub fn point_mass(shape: BiTreeShape, row: usize, col: usize, mass: f64) -> Result<Self> {
        let mut cells = vec![0.0; shape.cell_count()];
        let (rows, cols) = shape.grid();
        if row >= rows || col >= cols {
            return Err(Error::Precondition(format!(
                "cell ({row}, {col}) outside the {rows} x {cols} grid"
            )));
        }
        cells[shape.cell_index(row, col)] = mass;
        Self::new(shape, cells)
    }

    pub fn zero(shape: BiTreeShape) -> Self {
        Self {
            shape,
            cells: vec![0.0; shape.cell_count()],
        }
    }

    pub fn shape(&self) -> BiTreeShape {
        self.shape
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|&m| m == 0.0)
    }

    pub fn scaled(&self, t: f64) -> Self {
        assert!(t >= 0.0 && t.is_finite(), "scale factor must be finite and nonnegative");
        Self {
            shape: self.shape,
            cells: self.cells.iter().map(|m| m * t).collect(),
        }
    }

    /// `mu(Q)` for every rectangle, by double leaf-to-root accumulation.
    pub fn rect_masses(&self) -> RectVector {
        let mut values = self.shape.lift_cells(&self.cells);
        self.shape.accumulate_down(&mut values);
        RectVector {
            shape: self.shape,
            values,
        }
    }

    /// Cells with positive mass, as row-major indices.
    pub fn support(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i] > 0.0).collect()
    }

    /// Rescales so the one-box constant becomes 1 (identity for the zero measure).
    pub fn normalized(&self) -> Self {
        let c = one_box_constant(self).value;
        if c > 0.0 {
            self.scaled(1.0 / c)
        } else {
            self.clone()
        }
    }
}

/// Real function on the boundary cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunction {
    shape: BiTreeShape,
    values: Vec<f64>,
}

impl BoundaryFunction {
    pub fn new(shape: BiTreeShape, values: Vec<f64>) -> Result<Self> {
        validate_cells(shape, &values, "value at", false)?;
        Ok(Self { shape, values })
    }

    pub fn constant(shape: BiTreeShape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.cell_count()],
        }
    }

    pub fn shape(&self) -> BiTreeShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Summed-area table over the boundary grid.
pub struct CellPrefixSums {
    shape: BiTreeShape,
    cols: usize,
    table: Vec<f64>,
}

impl CellPrefixSums {
    pub fn new(shape: BiTreeShape, cells: &[f64]) -> Self {
        let (rows, cols) = shape.grid();
        let stride = cols + 1;
        let mut table = vec![0.0; (rows + 1) * stride];
        for r in 0..rows {
            let mut running = 0.0;
            for c in 0..cols {
                running += cells[r * cols + c];
                table[(r + 1) * stride + c + 1] = table[r * stride + c + 1] + running;
            }
        }
        Self {
            shape,
            cols: stride,
            table,
        }
    }

    /// Sum over rows `[r0, r1)` and columns `[c0, c1)`.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
        let at = |r: usize, c: usize| self.table[r * self.cols + c];
        at(rows.end, cols.end) - at(rows.start, cols.end) - at(rows.end, cols.start)
            + at(rows.start, cols.start)
    }

    pub fn rect(&self, r: Rect) -> f64 {
        let (rows, cols) = self.shape.cell_ranges(r);
        self.block(rows, cols)
    }
}

/// Maximum of the one-box test ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneBox {
    pub value: f64,
    pub argmax: Rect,
}

/// Per-rectangle `sum_{Q <= R} mu(Q)^2` and `mu(R)`.
pub(crate) fn box_sums(mu: &BiMeasure) -> (RectVector, RectVector) {
    let masses = mu.rect_masses();
    let mut squares: Vec<f64> = masses.values.iter().map(|m| m * m).collect();
    mu.shape.accumulate_down(&mut squares);
    (
        RectVector {
            shape: mu.shape,
            values: squares,
        },
        masses,
    )
}

/// `max_R sum_{Q <= R} mu(Q)^2 / mu(R)`, with null rectangles scoring 0.
pub fn one_box_constant(mu: &BiMeasure) -> OneBox {
    let (squares, masses) = box_sums(mu);
    let mut best = OneBox {
        value: 0.0,
        argmax: Rect::ROOT,
    };
    for (i, (&s, &m)) in squares.values.iter().zip(&masses.values).enumerate() {
        if m > 0.0 && s / m > best.value {
            best = OneBox {
                value: s / m,
                argmax: mu.shape.rect(i),
            };
        }
    }
    best
}

/// `int_Q phi dmu` for every rectangle.
pub fn rect_integrals(mu: &BiMeasure, phi: &BoundaryFunction) -> Result<RectVector> {
    mu.shape.ensure_same(&phi.shape)?;
    let products: Vec<f64> = mu.cells.iter().zip(&phi.values).map(|(m, p)| m * p).collect();
    let mut values = mu.shape.lift_cells(&products);
    mu.shape.accumulate_down(&mut values);
    Ok(RectVector {
        shape: mu.shape,
        values,
    })
}

/// Constant of the `|Q|^3` embedding under the one-box condition.
pub const CUBE_CONSTANT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeCheck {
    /// `sum_Q |Q| (int_Q phi dmu)^2`.
    pub lhs: f64,
    /// `int phi^2 dmu`.
    pub rhs: f64,
    pub ratio: f64,
    pub passes: bool,
}

pub(crate) fn ensure_one_box(mu: &BiMeasure) -> Result<()> {
    let ob = one_box_constant(mu);
    if ob.value > 1.0 + 1e-12 {
        return Err(Error::NotNormalized {
            measured: ob.value,
            location: ob.argmax.to_string(),
        });
    }
    Ok(())
}

/// Checks `sum_Q <phi mu>_Q^2 |Q|^3 <= 4 <phi^2 mu>_{R0} |R0|` on a measure
/// with one-box constant at most 1.
pub fn cube_embedding_check(mu: &BiMeasure, phi: &BoundaryFunction) -> Result<CubeCheck> {
    ensure_one_box(mu)?;
    let integrals = rect_integrals(mu, phi)?;
    let lhs = mu
        .shape
        .rects()
        .map(|r| r.area() * integrals.at(r).powi(2))
        .sum::<f64>();
    let rhs = mu
        .cells
        .iter()
        .zip(&phi.values)
        .map(|(m, p)| m * p * p)
        .sum::<f64>();
    Ok(CubeCheck {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        passes: lhs <= CUBE_CONSTANT * rhs + 1e-9 * rhs.max(1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiEmbedding {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Best `C` in `sum_Q (int_Q phi dmu)^2 <= C int phi^2 dmu`, by power iteration
/// over the cells of positive mass.
pub fn bi_embedding_constant(mu: &BiMeasure, tol: f64, max_iter: usize) -> BiEmbedding {
    let shape = mu.shape;
    let support = mu.support();
    let roots: Vec<f64> = support.iter().map(|&i| mu.cells[i].sqrt()).collect();
    let (_, cols) = shape.grid();
    let slots: Vec<usize> = support
        .iter()
        .map(|&i| shape.index(shape.cell_rect(i / cols, i % cols)))
        .collect();
    let mut work = vec![0.0; shape.rect_count()];
    let result = power_iteration(
        support.len(),
        |x, y| {
            work.iter_mut().for_each(|w| *w = 0.0);
            for ((&slot, &s), &xi) in slots.iter().zip(&roots).zip(x) {
                work[slot] = s * xi;
            }
            shape.accumulate_down(&mut work);
            shape.accumulate_up(&mut work);
            for ((&slot, &s), yi) in slots.iter().zip(&roots).zip(y.iter_mut()) {
                *yi = s * work[slot];
            }
        },
        PowerIteration { tol, max_iter },
    );
    BiEmbedding {
        value: result.value,
        iterations: result.iterations,
        converged: result.converged,
    }
}

/// Largest active-cell count accepted by [`dense_bi_embedding_constant`].
pub const DENSE_CELL_LIMIT: usize = 1 << 12;

/// Dense reference for [`bi_embedding_constant`]: the kernel between two
/// cells counts common ancestor rectangles, `(d_x + 1)(d_y + 1)` with `d`
/// the depth of the deepest common ancestor in each coordinate.
pub fn dense_bi_embedding_constant(mu: &BiMeasure) -> Result<f64> {
    let support = mu.support();
    if support.len() > DENSE_CELL_LIMIT {
        return Err(Error::TooLarge {
            kind: "dense bi-tree embedding matrix",
            requested: support.len() as u128,
            limit: DENSE_CELL_LIMIT as u128,
        });
    }
    let (n, m) = mu.shape.depths();
    let cols = mu.shape.grid().1;
    let shared = |a: usize, b: usize, depth: u32| -> f64 {
        let differing = usize::BITS - (a ^ b).leading_zeros();
        f64::from(depth - differing + 1)
    };
    let k = support.len();
    let matrix = DMatrix::from_fn(k, k, |i, j| {
        let (p, q) = (support[i], support[j]);
        let count = shared(p / cols, q / cols, n) * shared(p % cols, q % cols, m);
        (mu.cells[p] * mu.cells[q]).sqrt() * count
    });
    Ok(dense_largest_eigenvalue(matrix))
}
