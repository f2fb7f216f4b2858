//! Small C¹ functions in the kernel of a finite-rank functional.
//!
//! For `lambda psi = L(psi · e_nu)` we pick preimages of a basis of the
//! image of `lambda` among the Hermite cardinal functions, use them to build
//! the projection `P` onto `ker lambda` along their span, and apply `P` to a
//! function with slope 1 at `t = 0` and tiny sup norm. After normalizing the
//! slope at 0 the result has
//!
//! * `lambda psi = 0`,
//! * `psi'(0) = 1` exactly,
//! * `|psi|_C < eps` as long as the grid is fine enough.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fnspace::{DofFunctional, Grid, GridFn1};
use crate::system::SystemDef;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Columns whose residual norm falls below `rank_tol_rel` times the
    /// largest column norm are treated as dependent.
    pub rank_tol_rel: f64,
    /// Smallest admissible `|(P phi)'(0)|` before normalizing.
    pub theta: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            rank_tol_rel: 1e-9,
            theta: 0.1,
        }
    }
}

/// Preimage basis and projection data for one scalar functional `lambda`.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    grid: Grid,
    rows: Vec<DofFunctional>,
    pivots: Vec<usize>,
    matrix: DMatrix<f64>,
    pinv: DMatrix<f64>,
    options: KernelOptions,
}

impl KernelBasis {
    /// Basis for `lambda_nu psi = L(psi · e_nu)` (`nu` 0-based).
    pub fn build(sys: &SystemDef, nu: usize, options: KernelOptions) -> Result<Self> {
        if nu >= sys.n() {
            return Err(Error::Component {
                index: nu + 1,
                n: sys.n(),
            });
        }
        Self::from_rows(sys.grid(), sys.l().restrict(nu, sys.grid())?, options)
    }

    /// Basis for an arbitrary list of functionals on the degrees of freedom.
    pub fn from_rows(grid: Grid, rows: Vec<DofFunctional>, options: KernelOptions) -> Result<Self> {
        let m = rows.len();
        let dofs = 2 * grid.nodes();
        let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.dense(grid)).collect();
        let column = |j: usize| -> Vec<f64> { dense.iter().map(|row| row[j]).collect() };

        // The slope at t = 0 is the degree of freedom the projection must
        // not remove, so that column is only used when nothing else is left.
        let reserved = grid.nodes() + grid.intervals();
        let mut residual: Vec<Vec<f64>> = (0..dofs).map(column).collect();
        let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let largest = residual.iter().map(|c| norm(c)).fold(0.0, f64::max);
        let tol = options.rank_tol_rel * largest;

        let mut pivots = Vec::new();
        let mut taken = vec![false; dofs];
        while pivots.len() < m && largest > 0.0 {
            let pick = |allow_reserved: bool| {
                let mut best: Option<(usize, f64)> = None;
                for (j, c) in residual.iter().enumerate() {
                    if taken[j] || (j == reserved && !allow_reserved) {
                        continue;
                    }
                    let nj = norm(c);
                    if nj > tol && best.is_none_or(|(_, b)| nj > b) {
                        best = Some((j, nj));
                    }
                }
                best
            };
            let Some((j, nj)) = pick(false).or_else(|| pick(true)) else {
                break;
            };
            taken[j] = true;
            pivots.push(j);
            let q: Vec<f64> = residual[j].iter().map(|x| x / nj).collect();
            for (i, c) in residual.iter_mut().enumerate() {
                if taken[i] {
                    continue;
                }
                let dot: f64 = c.iter().zip(&q).map(|(a, b)| a * b).sum();
                if dot != 0.0 {
                    for (a, b) in c.iter_mut().zip(&q) {
                        *a -= dot * b;
                    }
                }
            }
        }

        let rho = pivots.len();
        let matrix = DMatrix::from_fn(m, rho, |i, j| dense[i][pivots[j]]);
        let pinv = if rho == 0 {
            DMatrix::zeros(0, m)
        } else {
            matrix
                .clone()
                .pseudo_inverse(0.0)
                .map_err(|e| Error::Config(format!("pseudo-inverse failed: {e}")))?
        };
        Ok(KernelBasis {
            grid,
            rows,
            pivots,
            matrix,
            pinv,
            options,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Rank `rho` of `lambda`.
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Degrees of freedom whose cardinal functions form the preimage basis.
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// The preimage basis `psi_j`.
    pub fn preimages(&self) -> Vec<GridFn1> {
        self.pivots.iter().map(|&k| GridFn1::cardinal(self.grid, k)).collect()
    }

    /// `M = [lambda psi_j]`, an `m × rho` matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Frobenius norm of `M`.
    pub fn matrix_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn options(&self) -> KernelOptions {
        self.options
    }

    pub fn apply(&self, phi: &GridFn1) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(phi)).collect()
    }

    /// `P phi = phi - Σ c_j psi_j` with `M c = lambda phi`.
    pub fn project(&self, phi: &GridFn1) -> Result<GridFn1> {
        self.grid.check_same(&phi.grid())?;
        let mut out = phi.clone();
        if self.pivots.is_empty() {
            return Ok(out);
        }
        let b = nalgebra::DVector::from_vec(self.apply(phi));
        let c = &self.pinv * b;
        for (&k, cj) in self.pivots.iter().zip(c.iter()) {
            *out.dof_mut(k) -= cj;
        }
        Ok(out)
    }

    /// `psi` with `lambda psi = 0`, `psi'(0) = 1`, `|psi|_C < eps`, built
    /// from the slope cardinal function.
    pub fn make_psi(&self, eps: f64) -> Result<GridFn1> {
        self.make_psi_width(eps, 1)
    }

    /// As [`KernelBasis::make_psi`], starting from [`GridFn1::slope_bump`]
    /// of the given width (in grid spacings).
    pub fn make_psi_width(&self, eps: f64, width: usize) -> Result<GridFn1> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        let projected = self.project(&GridFn1::slope_bump(self.grid, width))?;
        let q = projected.slope_at_zero();
        let too_coarse = |achieved: f64| {
            let n = self.grid.intervals();
            let ratio = if achieved.is_finite() { achieved / eps } else { 2.0 };
            Error::GridTooCoarse {
                eps,
                achieved,
                grid: n,
                suggested: (n as f64 * ratio).floor() as usize + 1,
            }
        };
        if q.abs() < self.options.theta {
            return Err(too_coarse(f64::INFINITY));
        }
        let values = projected.values().iter().map(|v| v / q).collect();
        let slopes = projected.slopes().iter().map(|w| w / q).collect();
        let psi = GridFn1::new(self.grid, values, slopes)?;
        let norm = psi.sup_norm();
        if norm >= eps {
            return Err(too_coarse(norm));
        }
        Ok(psi)
    }

    /// The widest slope bump whose normalized projection still satisfies the
    /// bound. Returns the function and its width in grid spacings.
    pub fn make_psi_widest(&self, eps: f64) -> Result<(GridFn1, usize)> {
        let h = self.grid.spacing();
        let mut width = ((27.0 * eps / (8.0 * h)).floor() as usize).clamp(1, self.grid.intervals());
        loop {
            match self.make_psi_width(eps, width) {
                Ok(psi) => return Ok((psi, width)),
                Err(e) if width == 1 => return Err(e),
                Err(_) => width /= 2,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    fn basis(g: Grid, rows: Vec<DofFunctional>) -> KernelBasis {
        KernelBasis::from_rows(g, rows, KernelOptions::default()).unwrap()
    }

    #[test]
    fn ev0_rank_one_with_value_pivot() {
        let g = grid(16);
        let b = basis(g, vec![DofFunctional::point(g, 0.0).unwrap()]);
        assert_eq!(b.rank(), 1);
        assert_eq!(b.pivots(), &[16]);
        assert_eq!(b.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn zero_functional_has_rank_zero() {
        let g = grid(16);
        let b = basis(g, vec![DofFunctional::zero()]);
        assert_eq!(b.rank(), 0);
        let phi = GridFn1::from_fn(g, f64::sin, f64::cos);
        assert_eq!(b.project(&phi).unwrap(), phi);
        let psi = b.make_psi(0.01).unwrap();
        assert_eq!(psi, GridFn1::slope_cardinal(g));
    }

    #[test]
    fn two_point_evaluations() {
        let g = grid(16);
        let b = basis(
            g,
            vec![
                DofFunctional::point(g, 0.0).unwrap(),
                DofFunctional::point(g, -1.0).unwrap(),
            ],
        );
        assert_eq!(b.rank(), 2);
    }

    #[test]
    fn project_constant_against_ev0() {
        let g = grid(10);
        let b = basis(g, vec![DofFunctional::point(g, 0.0).unwrap()]);
        let p = b.project(&GridFn1::constant(g, 1.0)).unwrap();
        let expected = GridFn1::constant(g, 1.0).sub(&GridFn1::cardinal(g, 10)).unwrap();
        assert_eq!(p, expected);
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        let psi = b.make_psi(0.1).unwrap();
        assert_eq!(psi, GridFn1::slope_cardinal(g));
    }

    #[test]
    fn projection_is_idempotent_and_annihilates() {
        let g = grid(24);
        let rows = vec![DofFunctional::point(g, -0.37).unwrap(), DofFunctional::integral(g)];
        let b = basis(g, rows);
        assert_eq!(b.rank(), 2);
        let phi = GridFn1::from_fn(g, |t| (2.0 * t).exp(), |t| 2.0 * (2.0 * t).exp());
        let p = b.project(&phi).unwrap();
        assert!(b.apply(&p).iter().all(|x| x.abs() < 1e-14));
        let pp = b.project(&p).unwrap();
        for (a, c) in pp.values().iter().zip(p.values()) {
            assert!((a - c).abs() < 1e-14);
        }
        let psi = b.make_psi(0.05).unwrap();
        assert_eq!(psi.slope_at_zero(), 1.0);
        assert!(b.apply(&psi).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn grid_too_coarse_reports_required_n() {
        let g = grid(100);
        let b = basis(g, vec![DofFunctional::zero()]);
        let eps = 1e-3;
        match b.make_psi(eps) {
            Err(Error::GridTooCoarse { suggested, .. }) => {
                let needed = 4.0 / (27.0 * eps);
                assert_eq!(suggested, needed.floor() as usize + 1);
                let fine = basis(grid(suggested), vec![DofFunctional::zero()]);
                assert!(fine.make_psi(eps).is_ok());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn widest_bump_respects_bound() {
        let g = grid(256);
        let b = basis(g, vec![DofFunctional::point(g, 0.0).unwrap()]);
        let (psi, width) = b.make_psi_widest(4e-3).unwrap();
        assert!(width > 1);
        assert!(psi.sup_norm() < 4e-3);
        assert_eq!(psi.slope_at_zero(), 1.0);
    }
}
