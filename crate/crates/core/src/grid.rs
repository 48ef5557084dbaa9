//! Tensor-product grids with Dirichlet boundaries and finite-difference
//! building blocks.
//!
//! Interior nodes only: the wavefunction is zero on (and beyond) the domain
//! edge. Node `(i, j)` of a 2D grid sits at `(xmin + (i+1)hx, ymin + (j+1)hy)`
//! and has linear index `i + nx·j`.
//!
//! Besides nodes there are links: the cell edges joining neighbouring nodes
//! along one axis, including the two end links that reach the zero boundary
//! values. Along x a row of `nx` nodes owns `nx + 1` links; link `l` joins
//! nodes `l − 1` and `l` and sits at `xmin + (l + ½)hx`. The forward
//! difference onto links and its negative adjoint form a compact pair whose
//! product is the three-point second difference.

use serde::{Deserialize, Serialize};

use crate::error::{PdmError, Result};
use crate::fields::ScalarField;
use crate::linop::{LinearOperator, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Anything that enumerates interior nodes and provides derivative matrices.
///
/// Builders in [`crate::operators`] are generic over this so the same code
/// assembles 1D and 2D operators; a 1D domain places its nodes at `(x, 0)`.
pub trait Domain {
    fn dim(&self) -> usize;
    fn axes(&self) -> &'static [Axis];
    fn node(&self, index: usize) -> (f64, f64);
    fn spacing(&self, axis: Axis) -> Result<f64>;
    /// Quadrature weight of one node.
    fn measure(&self) -> f64;
    /// Number of nodes between `index` and the nearest edge, along any axis.
    fn boundary_depth(&self, index: usize) -> usize;
    fn derivative(&self, axis: Axis, order: u8) -> Result<LinearOperator>;
    fn link_count(&self, axis: Axis) -> Result<usize>;
    fn link_midpoint(&self, axis: Axis, link: usize) -> (f64, f64);
    /// Forward difference from nodes onto the links along `axis`.
    fn link_difference(&self, axis: Axis) -> Result<LinearOperator>;
    /// Two-point average from nodes onto the links along `axis`.
    fn link_average(&self, axis: Axis) -> Result<LinearOperator>;

    fn nodes(&self) -> Vec<(f64, f64)> {
        (0..self.dim()).map(|k| self.node(k)).collect()
    }
}

/// Uniform 1D grid of `n` interior nodes on `(xmin, xmax)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub n: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub h: f64,
}

impl Grid1D {
    pub fn new(n: usize, xmin: f64, xmax: f64) -> Result<Self> {
        if n < 3 {
            return Err(PdmError::InvalidGrid(format!(
                "need at least 3 interior points, got {n}"
            )));
        }
        if !(xmin.is_finite() && xmax.is_finite() && xmax > xmin) {
            return Err(PdmError::InvalidGrid(format!(
                "degenerate bounds [{xmin}, {xmax}]"
            )));
        }
        Ok(Self {
            n,
            xmin,
            xmax,
            h: (xmax - xmin) / (n + 1) as f64,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xmin + (i + 1) as f64 * self.h
    }

    /// The 1D stencil matrix of the given order.
    pub fn stencil(&self, order: u8) -> Result<LinearOperator> {
        let n = self.n;
        let h = self.h;
        let mut t = Vec::with_capacity(3 * n);
        match order {
            1 => {
                let w = 1.0 / (2.0 * h);
                for i in 0..n {
                    if i > 0 {
                        t.push((i, i - 1, C64::new(-w, 0.0)));
                    }
                    if i + 1 < n {
                        t.push((i, i + 1, C64::new(w, 0.0)));
                    }
                }
            }
            2 => {
                let w = 1.0 / (h * h);
                for i in 0..n {
                    if i > 0 {
                        t.push((i, i - 1, C64::new(w, 0.0)));
                    }
                    t.push((i, i, C64::new(-2.0 * w, 0.0)));
                    if i + 1 < n {
                        t.push((i, i + 1, C64::new(w, 0.0)));
                    }
                }
            }
            other => {
                return Err(PdmError::Unsupported(format!(
                    "derivative order {other} (only 1 and 2)"
                )))
            }
        }
        LinearOperator::from_triplets(n, t)
    }

    pub fn link_x(&self, l: usize) -> f64 {
        self.xmin + (l as f64 + 0.5) * self.h
    }

    /// `(n+1) × n` matrix with `wl` on the left node and `wr` on the right
    /// node of every link.
    fn link_stencil(&self, wl: f64, wr: f64) -> LinearOperator {
        let n = self.n;
        let mut t = Vec::with_capacity(2 * n);
        for l in 0..=n {
            if l > 0 {
                t.push((l, l - 1, C64::new(wl, 0.0)));
            }
            if l < n {
                t.push((l, l, C64::new(wr, 0.0)));
            }
        }
        LinearOperator::from_triplets_rect(n + 1, n, t).expect("link indices in range")
    }

    pub fn forward_difference(&self) -> LinearOperator {
        self.link_stencil(-1.0 / self.h, 1.0 / self.h)
    }

    pub fn link_mean(&self) -> LinearOperator {
        self.link_stencil(0.5, 0.5)
    }
}

impl Domain for Grid1D {
    fn dim(&self) -> usize {
        self.n
    }

    fn axes(&self) -> &'static [Axis] {
        &[Axis::X]
    }

    fn node(&self, index: usize) -> (f64, f64) {
        (self.x(index), 0.0)
    }

    fn spacing(&self, axis: Axis) -> Result<f64> {
        match axis {
            Axis::X => Ok(self.h),
            Axis::Y => Err(PdmError::Unsupported("y axis on a 1D grid".into())),
        }
    }

    fn measure(&self) -> f64 {
        self.h
    }

    fn boundary_depth(&self, index: usize) -> usize {
        index.min(self.n - 1 - index)
    }

    fn derivative(&self, axis: Axis, order: u8) -> Result<LinearOperator> {
        self.spacing(axis)?;
        Ok(self.stencil(order)?.with_measure(self.h))
    }

    fn link_count(&self, axis: Axis) -> Result<usize> {
        self.spacing(axis)?;
        Ok(self.n + 1)
    }

    fn link_midpoint(&self, _axis: Axis, link: usize) -> (f64, f64) {
        (self.link_x(link), 0.0)
    }

    fn link_difference(&self, axis: Axis) -> Result<LinearOperator> {
        self.spacing(axis)?;
        Ok(self.forward_difference().with_measure(self.h))
    }

    fn link_average(&self, axis: Axis) -> Result<LinearOperator> {
        self.spacing(axis)?;
        Ok(self.link_mean().with_measure(self.h))
    }
}

/// Rectangular 2D grid with `nx × ny` interior nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Grid1D,
    pub y: Grid1D,
}

/// `bounds = [xmin, xmax, ymin, ymax]`.
pub fn make_grid(nx: usize, ny: usize, bounds: [f64; 4]) -> Result<Grid2D> {
    Ok(Grid2D {
        x: Grid1D::new(nx, bounds[0], bounds[1])?,
        y: Grid1D::new(ny, bounds[2], bounds[3])?,
    })
}

impl Grid2D {
    pub fn nx(&self) -> usize {
        self.x.n
    }

    pub fn ny(&self) -> usize {
        self.y.n
    }

    pub fn hx(&self) -> f64 {
        self.x.h
    }

    pub fn hy(&self) -> f64 {
        self.y.h
    }

    pub fn bounds(&self) -> [f64; 4] {
        [self.x.xmin, self.x.xmax, self.y.xmin, self.y.xmax]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.x.n * j
    }

    pub fn node_ij(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x.x(i), self.y.x(j))
    }
}

impl Domain for Grid2D {
    fn dim(&self) -> usize {
        self.x.n * self.y.n
    }

    fn axes(&self) -> &'static [Axis] {
        &[Axis::X, Axis::Y]
    }

    fn node(&self, index: usize) -> (f64, f64) {
        self.node_ij(index % self.x.n, index / self.x.n)
    }

    fn spacing(&self, axis: Axis) -> Result<f64> {
        Ok(match axis {
            Axis::X => self.x.h,
            Axis::Y => self.y.h,
        })
    }

    fn measure(&self) -> f64 {
        self.x.h * self.y.h
    }

    fn boundary_depth(&self, index: usize) -> usize {
        let i = index % self.x.n;
        let j = index / self.x.n;
        self.x.boundary_depth(i).min(self.y.boundary_depth(j))
    }

    fn derivative(&self, axis: Axis, order: u8) -> Result<LinearOperator> {
        let op = match axis {
            Axis::X => LinearOperator::kron(&LinearOperator::identity(self.y.n), &self.x.stencil(order)?),
            Axis::Y => LinearOperator::kron(&self.y.stencil(order)?, &LinearOperator::identity(self.x.n)),
        };
        Ok(op.with_measure(self.measure()))
    }

    fn link_count(&self, axis: Axis) -> Result<usize> {
        Ok(match axis {
            Axis::X => (self.x.n + 1) * self.y.n,
            Axis::Y => self.x.n * (self.y.n + 1),
        })
    }

    fn link_midpoint(&self, axis: Axis, link: usize) -> (f64, f64) {
        match axis {
            Axis::X => {
                let (l, j) = (link % (self.x.n + 1), link / (self.x.n + 1));
                (self.x.link_x(l), self.y.x(j))
            }
            Axis::Y => {
                let (i, l) = (link % self.x.n, link / self.x.n);
                (self.x.x(i), self.y.link_x(l))
            }
        }
    }

    fn link_difference(&self, axis: Axis) -> Result<LinearOperator> {
        Ok(self.along(axis, self.x.forward_difference(), self.y.forward_difference()))
    }

    fn link_average(&self, axis: Axis) -> Result<LinearOperator> {
        Ok(self.along(axis, self.x.link_mean(), self.y.link_mean()))
    }
}

impl Grid2D {
    fn along(&self, axis: Axis, opx: LinearOperator, opy: LinearOperator) -> LinearOperator {
        let op = match axis {
            Axis::X => LinearOperator::kron(&LinearOperator::identity(self.y.n), &opx),
            Axis::Y => LinearOperator::kron(&opy, &LinearOperator::identity(self.x.n)),
        };
        op.with_measure(self.measure())
    }
}

/// Derivative matrix of order 1 (antisymmetric central difference) or 2
/// (symmetric three-point Laplacian stencil) along `axis`.
pub fn build_derivative<D: Domain + ?Sized>(grid: &D, axis: Axis, order: u8) -> Result<LinearOperator> {
    grid.derivative(axis, order)
}

/// Diagonal multiplication operator by `f(node)`.
pub fn sample_with<D, F>(grid: &D, f: F) -> Result<LinearOperator>
where
    D: Domain + ?Sized,
    F: Fn(f64, f64) -> f64,
{
    let diag = sample_values(grid, f)?;
    Ok(LinearOperator::real_diagonal(&diag).with_measure(grid.measure()))
}

/// Samples `f` on every node, failing on the first non-finite value.
pub fn sample_values<D, F>(grid: &D, f: F) -> Result<Vec<f64>>
where
    D: Domain + ?Sized,
    F: Fn(f64, f64) -> f64,
{
    (0..grid.dim())
        .map(|k| {
            let (x, y) = grid.node(k);
            let value = f(x, y);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(PdmError::NonFinite { x, y, value })
            }
        })
        .collect()
}

/// Samples `f` at the midpoint of every link along `axis`.
pub fn sample_link_values<D, F>(grid: &D, axis: Axis, f: F) -> Result<Vec<f64>>
where
    D: Domain + ?Sized,
    F: Fn(f64, f64) -> f64,
{
    (0..grid.link_count(axis)?)
        .map(|k| {
            let (x, y) = grid.link_midpoint(axis, k);
            let value = f(x, y);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(PdmError::NonFinite { x, y, value })
            }
        })
        .collect()
}

/// Diagonal multiplication operator by a scalar field.
pub fn sample_diagonal<D: Domain + ?Sized>(grid: &D, field: &ScalarField) -> Result<LinearOperator> {
    sample_with(grid, |x, y| field.evaluate(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::MassProfile;

    fn re(op: &LinearOperator) -> Vec<Vec<f64>> {
        let n = op.dim();
        (0..n).map(|r| (0..n).map(|c| op.get(r, c).re).collect()).collect()
    }

    #[test]
    fn grid_spacing_and_nodes() {
        let g = make_grid(3, 3, [-2.0, 2.0, -2.0, 2.0]).unwrap();
        assert_eq!(g.hx(), 1.0);
        assert_eq!(g.hy(), 1.0);
        assert_eq!(g.node(0), (-1.0, -1.0));
        assert_eq!(g.node(g.index(2, 1)), (1.0, 0.0));

        let g = make_grid(3, 5, [0.0, 4.0, 0.0, 6.0]).unwrap();
        assert_eq!((g.hx(), g.hy()), (1.0, 1.0));
        assert_eq!(g.dim(), 15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(2, 3, [0.0, 1.0, 0.0, 1.0]).is_err());
        assert!(make_grid(3, 3, [1.0, 1.0, 0.0, 1.0]).is_err());
        assert!(make_grid(3, 3, [0.0, 1.0, 2.0, -1.0]).is_err());
    }

    #[test]
    fn first_derivative_stencil() {
        let g = Grid1D::new(3, 0.0, 2.0).unwrap();
        assert_eq!(g.h, 0.5);
        let d = build_derivative(&g, Axis::X, 1).unwrap();
        assert_eq!(
            re(&d),
            vec![vec![0.0, 1.0, 0.0], vec![-1.0, 0.0, 1.0], vec![0.0, -1.0, 0.0]]
        );
    }

    #[test]
    fn second_derivative_stencil() {
        let g = Grid1D::new(3, 0.0, 4.0).unwrap();
        let d = build_derivative(&g, Axis::X, 2).unwrap();
        assert_eq!(
            re(&d),
            vec![vec![-2.0, 1.0, 0.0], vec![1.0, -2.0, 1.0], vec![0.0, 1.0, -2.0]]
        );
    }

    #[test]
    fn unsupported_order_or_axis() {
        let g = Grid1D::new(5, 0.0, 1.0).unwrap();
        assert!(build_derivative(&g, Axis::X, 3).is_err());
        assert!(build_derivative(&g, Axis::Y, 1).is_err());
    }

    #[test]
    fn transpose_symmetry_is_exact() {
        let g = make_grid(6, 7, [-1.0, 2.0, -3.0, 0.5]).unwrap();
        for axis in [Axis::X, Axis::Y] {
            let d1 = build_derivative(&g, axis, 1).unwrap();
            assert_eq!(d1.transpose(), d1.scale(C64::new(-1.0, 0.0)));
            let d2 = build_derivative(&g, axis, 2).unwrap();
            assert_eq!(d2.transpose(), d2);
        }
    }

    #[test]
    fn kronecker_structure() {
        let g = make_grid(4, 5, [0.0, 1.0, 0.0, 2.0]).unwrap();
        let dx = build_derivative(&g, Axis::X, 1).unwrap();
        let dy = build_derivative(&g, Axis::Y, 1).unwrap();
        let d1x = g.x.stencil(1).unwrap();
        let d1y = g.y.stencil(1).unwrap();
        for j in 0..5 {
            for i in 0..4 {
                for jj in 0..5 {
                    for ii in 0..4 {
                        let want_x = if j == jj { d1x.get(i, ii) } else { C64::new(0.0, 0.0) };
                        assert_eq!(dx.get(g.index(i, j), g.index(ii, jj)), want_x);
                        let want_y = if i == ii { d1y.get(j, jj) } else { C64::new(0.0, 0.0) };
                        assert_eq!(dy.get(g.index(i, j), g.index(ii, jj)), want_y);
                    }
                }
            }
        }
    }

    fn max_error_first_derivative(n: usize, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
        let g = Grid1D::new(n, -1.0, 1.0).unwrap();
        let d = build_derivative(&g, Axis::X, 1).unwrap();
        let samples: Vec<C64> = (0..n).map(|i| C64::new(f(g.x(i)), 0.0)).collect();
        let out = d.matvec(&samples);
        (1..n - 1)
            .map(|i| (out[i].re - df(g.x(i))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn first_derivative_converges_at_second_order() {
        // x² is differentiated exactly by central differences away from the
        // edge, so use x³ whose error is h² and scales by 4 under halving.
        let e1 = max_error_first_derivative(39, |x| x.powi(3), |x| 3.0 * x * x);
        let e2 = max_error_first_derivative(79, |x| x.powi(3), |x| 3.0 * x * x);
        assert!((e1 / e2 - 4.0).abs() < 0.05, "ratio {}", e1 / e2);
        let exact = max_error_first_derivative(21, |x| x * x, |x| 2.0 * x);
        assert!(exact < 1e-12);
    }

    #[test]
    fn first_derivative_of_sine_within_truncation_bound() {
        let k = 3.0;
        let n = 101;
        let g = Grid1D::new(n, -2.0, 2.0).unwrap();
        let d = build_derivative(&g, Axis::X, 1).unwrap();
        let samples: Vec<C64> = (0..n).map(|i| C64::new((k * g.x(i)).sin(), 0.0)).collect();
        let out = d.matvec(&samples);
        let bound = (k * g.h).powi(2) * k / 6.0 * 1.1;
        for i in 1..n - 1 {
            assert!((out[i].re - k * (k * g.x(i)).cos()).abs() <= bound);
        }
    }

    #[test]
    fn diagonal_sampling() {
        let g = make_grid(4, 3, [-2.0, 2.0, -1.0, 1.0]).unwrap();
        let c = sample_diagonal(&g, &ScalarField::Constant { c: 1.5 }).unwrap();
        assert_eq!(c, LinearOperator::identity(12).scale(C64::new(1.5, 0.0)).with_measure(g.measure()));

        let g = make_grid(3, 3, [-2.0, 2.0, -2.0, 2.0]).unwrap();
        let m = MassProfile::quadratic(1.0, 1.0).unwrap();
        let d = sample_with(&g, |x, y| m.evaluate(x, y)).unwrap();
        assert_eq!(d.get(g.index(2, 1), g.index(2, 1)).re, 2.0);
        assert_eq!(d.hermiticity_defect(), 0.0);

        let four = MassProfile::constant(4.0).unwrap();
        let inv_sqrt = sample_with(&g, |x, y| four.evaluate(x, y).powf(-0.5)).unwrap();
        assert_eq!(inv_sqrt, LinearOperator::identity(9).scale(C64::new(0.5, 0.0)).with_measure(g.measure()));
    }

    #[test]
    fn link_pair_reproduces_the_laplacian() {
        let g = make_grid(5, 4, [-1.0, 2.0, 0.0, 1.5]).unwrap();
        for axis in [Axis::X, Axis::Y] {
            let gd = g.link_difference(axis).unwrap();
            assert_eq!(gd.shape(), (g.link_count(axis).unwrap(), g.dim()));
            let lap = gd.adjoint().matmul(&gd).unwrap().scale(C64::new(-1.0, 0.0));
            let d2 = build_derivative(&g, axis, 2).unwrap();
            assert!(lap.sub(&d2).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn links_sit_between_nodes() {
        let g = make_grid(3, 4, [0.0, 4.0, 0.0, 5.0]).unwrap();
        assert_eq!(g.link_midpoint(Axis::X, 0), (0.5, 1.0));
        assert_eq!(g.link_midpoint(Axis::X, 3), (3.5, 1.0));
        assert_eq!(g.link_midpoint(Axis::X, 4), (0.5, 2.0));
        assert_eq!(g.link_midpoint(Axis::Y, 1), (2.0, 0.5));
        assert_eq!(g.link_midpoint(Axis::Y, 3), (1.0, 1.5));
        // first x-link of the second row joins nothing on the left and node (0,1)
        let gd = g.link_difference(Axis::X).unwrap();
        assert_eq!(gd.row(4).collect::<Vec<_>>(), vec![(g.index(0, 1), C64::new(1.0, 0.0))]);
        let avg = g.link_average(Axis::Y).unwrap();
        let ones = vec![C64::new(1.0, 0.0); g.dim()];
        let a = avg.matvec(&ones);
        assert_eq!(a[0].re, 0.5);
        assert_eq!(a[3 + 3].re, 1.0);
        let vals = sample_link_values(&g, Axis::X, |x, y| x + 10.0 * y).unwrap();
        assert_eq!(vals[5], 1.5 + 20.0);
    }

    #[test]
    fn link_difference_is_second_order_at_midpoints() {
        let err = |n: usize| {
            let g = Grid1D::new(n, -1.0, 1.0).unwrap();
            let gd = g.link_difference(Axis::X).unwrap();
            let f: Vec<C64> = (0..n).map(|i| C64::new(g.x(i).sin(), 0.0)).collect();
            let out = gd.matvec(&f);
            (1..n).map(|l| (out[l].re - g.link_x(l).cos()).abs()).fold(0.0, f64::max)
        };
        let r = err(40) / err(81);
        assert!((r - 4.0).abs() < 0.2, "ratio {r}");
    }

    #[test]
    fn non_finite_sample_is_an_error() {
        let g = Grid1D::new(3, -1.0, 1.0).unwrap();
        // node at x = 0 makes 1/x blow up
        assert!(matches!(
            sample_with(&g, |x, _| 1.0 / x),
            Err(PdmError::NonFinite { .. })
        ));
    }
}
