//! Piecewise cubic Hermite functions on the history interval `[-r, 0]`.
//!
//! A function is stored as node values and node slopes on a uniform grid
//! `t_i = -r + i * r / N`. Between nodes it is the cubic Hermite interpolant,
//! so the represented function is globally C¹ and `phi'(0)` is a stored
//! degree of freedom rather than an estimate.
//!
//! Norms are exact: per interval the extrema of the cubic (and of its
//! quadratic derivative) are found in closed form.

use crate::error::{Error, Result};

/// Uniform grid on `[-r, 0]` with `intervals` subintervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    r: f64,
    intervals: usize,
}

impl Grid {
    pub fn new(r: f64, intervals: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Config(format!("r must be positive and finite, got {r}")));
        }
        if intervals < 2 {
            return Err(Error::Config(format!("N must be at least 2, got {intervals}")));
        }
        Ok(Grid { r, intervals })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Number of subintervals `N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes `N + 1`.
    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn spacing(&self) -> f64 {
        self.r / self.intervals as f64
    }

    /// Node time `t_i`; the last node is exactly `0`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            0.0
        } else {
            -self.r + i as f64 * self.spacing()
        }
    }

    /// Interval index and local coordinate `s ∈ [0, 1]` of `t`.
    ///
    /// Times within a few ulps of a node snap onto it so that evaluation at
    /// nodes reproduces stored data exactly.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let slack = 1e-12 * self.r;
        if !t.is_finite() || t < -self.r - slack || t > slack {
            return Err(Error::Domain { t, r: self.r });
        }
        let x = ((t + self.r) / self.spacing()).clamp(0.0, self.intervals as f64);
        let nearest = x.round();
        if (x - nearest).abs() <= 64.0 * f64::EPSILON * nearest.max(1.0) {
            let j = nearest as usize;
            return Ok(if j == self.intervals { (j - 1, 1.0) } else { (j, 0.0) });
        }
        let i = (x.floor() as usize).min(self.intervals - 1);
        Ok((i, x - i as f64))
    }

    fn describe(&self) -> String {
        format!("r = {}, N = {}", self.r, self.intervals)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.describe(), other.describe()))
        }
    }
}

/// Cubic Hermite basis `(h00, h10, h01, h11)` at `s`.
#[inline]
pub(crate) fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

/// Derivatives of the Hermite basis with respect to `s`.
#[inline]
pub(crate) fn hermite_basis_deriv(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        6.0 * s2 - 6.0 * s,
        3.0 * s2 - 4.0 * s + 1.0,
        -6.0 * s2 + 6.0 * s,
        3.0 * s2 - 2.0 * s,
    ]
}

/// Power-basis coefficients `[a, b, c, d]` of `p(s) = a + b s + c s² + d s³`
/// for the Hermite cubic with end data `(v0, w0)`, `(v1, w1)` on an interval
/// of length `h`.
#[inline]
pub(crate) fn cubic_coefficients(v0: f64, w0: f64, v1: f64, w1: f64, h: f64) -> [f64; 4] {
    let m0 = h * w0;
    let m1 = h * w1;
    [
        v0,
        m0,
        -3.0 * v0 - 2.0 * m0 + 3.0 * v1 - m1,
        2.0 * v0 + m0 - 2.0 * v1 + m1,
    ]
}

#[inline]
fn poly(c: &[f64; 4], s: f64) -> f64 {
    ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
}

/// `∫_0^s p(u) du` for the power-basis cubic.
#[inline]
pub(crate) fn poly_antiderivative(c: &[f64; 4], s: f64) -> f64 {
    (((c[3] / 4.0 * s + c[2] / 3.0) * s + c[1] / 2.0) * s + c[0]) * s
}

/// Real roots of `a s² + b s + c` (numerically stable form).
fn quadratic_roots(a: f64, b: f64, c: f64) -> ([f64; 2], usize) {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return ([0.0; 2], 0);
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return ([0.0; 2], 0);
        }
        return ([-c / b, 0.0], 1);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return ([0.0; 2], 0);
    }
    let sign = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    if q == 0.0 {
        return ([0.0, 0.0], 1);
    }
    ([q / a, c / q], 2)
}

/// A linear functional on the `2(N+1)` Hermite degrees of freedom of a
/// scalar grid function. Index `i <= N` addresses value `i`, index
/// `N + 1 + i` addresses slope `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofFunctional {
    terms: Vec<(usize, f64)>,
}

impl DofFunctional {
    pub fn zero() -> Self {
        DofFunctional { terms: Vec::new() }
    }

    /// Point evaluation `phi ↦ phi(t)`.
    pub fn point(grid: Grid, t: f64) -> Result<Self> {
        let (i, s) = grid.locate(t)?;
        let b = hermite_basis(s);
        let h = grid.spacing();
        let slope = grid.nodes();
        let terms = [
            (i, b[0]),
            (slope + i, h * b[1]),
            (i + 1, b[2]),
            (slope + i + 1, h * b[3]),
        ]
        .into_iter()
        .filter(|&(_, c)| c != 0.0)
        .collect();
        Ok(DofFunctional { terms })
    }

    /// `phi ↦ ∫_{-r}^0 phi`.
    pub fn integral(grid: Grid) -> Self {
        let h = grid.spacing();
        let n = grid.intervals();
        let mut terms: Vec<(usize, f64)> = (0..=n)
            .map(|i| (i, if i == 0 || i == n { 0.5 * h } else { h }))
            .collect();
        terms.push((grid.nodes(), h * h / 12.0));
        terms.push((grid.nodes() + n, -h * h / 12.0));
        DofFunctional { terms }
    }

    /// `phi ↦ phi'(0)`.
    pub fn slope_at_zero(grid: Grid) -> Self {
        DofFunctional {
            terms: vec![(grid.nodes() + grid.intervals(), 1.0)],
        }
    }

    /// `self + w * other`.
    pub fn add_scaled(&mut self, w: f64, other: &DofFunctional) {
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, w * c)));
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms
    }

    pub fn apply(&self, f: &GridFn1) -> f64 {
        self.terms.iter().map(|&(i, c)| c * f.dof(i)).sum()
    }

    /// Dense coefficient vector of length `2(N+1)`.
    pub fn dense(&self, grid: Grid) -> Vec<f64> {
        let mut out = vec![0.0; 2 * grid.nodes()];
        for &(i, c) in &self.terms {
            out[i] += c;
        }
        out
    }
}

/// A scalar C¹ function on `[-r, 0]` in cubic Hermite form.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn1 {
    grid: Grid,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl GridFn1 {
    pub fn new(grid: Grid, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        let n = grid.nodes();
        if values.len() != n || slopes.len() != n {
            return Err(Error::Config(format!(
                "expected {n} values and slopes, got {} and {}",
                values.len(),
                slopes.len()
            )));
        }
        if values.iter().chain(&slopes).any(|x| !x.is_finite()) {
            return Err(Error::Config("function data must be finite".into()));
        }
        Ok(GridFn1 { grid, values, slopes })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFn1 {
            grid,
            values: vec![c; grid.nodes()],
            slopes: vec![0.0; grid.nodes()],
        }
    }

    /// Samples `f` and its derivative `df` at the nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.nodes()).map(|i| f(grid.node(i))).collect();
        let slopes = (0..grid.nodes()).map(|i| df(grid.node(i))).collect();
        GridFn1 { grid, values, slopes }
    }

    /// The function `t ↦ t`.
    pub fn identity(grid: Grid) -> Self {
        Self::from_fn(grid, |t| t, |_| 1.0)
    }

    /// Hermite cardinal function: all node values and slopes zero except
    /// slope 1 at `t = 0`. Supported in `[-r/N, 0]` with sup norm `4r/(27N)`.
    pub fn slope_cardinal(grid: Grid) -> Self {
        let mut f = Self::zeros(grid);
        f.slopes[grid.intervals()] = 1.0;
        f
    }

    /// The cubic `t (1 + t/w)²` on `[-w, 0]`, zero to the left of `-w`,
    /// with `w = width` grid spacings. It has value 0 and slope 1 at `t = 0`,
    /// sup norm `4w/27`, and coincides with [`GridFn1::slope_cardinal`] for
    /// `width = 1`. Being a single cubic on `[-w, 0]` it is represented
    /// exactly.
    pub fn slope_bump(grid: Grid, width: usize) -> Self {
        let width = width.clamp(1, grid.intervals());
        let w = width as f64 * grid.spacing();
        let first = grid.intervals() - width;
        let mut f = Self::zeros(grid);
        for i in first..grid.nodes() {
            let t = if i == first { -w } else { grid.node(i) };
            let u = 1.0 + t / w;
            f.values[i] = if i == first { 0.0 } else { t * u * u };
            f.slopes[i] = if i == first { 0.0 } else { u * u + 2.0 * t * u / w };
        }
        f.values[grid.intervals()] = 0.0;
        f.slopes[grid.intervals()] = 1.0;
        f
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slopes_mut(&mut self) -> &mut [f64] {
        &mut self.slopes
    }

    /// Degree of freedom `k` in the [`DofFunctional`] numbering.
    pub fn dof(&self, k: usize) -> f64 {
        let n = self.grid.nodes();
        if k < n {
            self.values[k]
        } else {
            self.slopes[k - n]
        }
    }

    pub fn dof_mut(&mut self, k: usize) -> &mut f64 {
        let n = self.grid.nodes();
        if k < n {
            &mut self.values[k]
        } else {
            &mut self.slopes[k - n]
        }
    }

    /// The Hermite cardinal function of degree of freedom `k`.
    pub fn cardinal(grid: Grid, k: usize) -> Self {
        let mut f = Self::zeros(grid);
        *f.dof_mut(k) = 1.0;
        f
    }

    /// `phi(0)`.
    pub fn value_at_zero(&self) -> f64 {
        self.values[self.grid.intervals()]
    }

    /// `phi'(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        self.slopes[self.grid.intervals()]
    }

    fn coefficients(&self, i: usize) -> [f64; 4] {
        cubic_coefficients(
            self.values[i],
            self.slopes[i],
            self.values[i + 1],
            self.slopes[i + 1],
            self.grid.spacing(),
        )
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (i, s) = self.grid.locate(t)?;
        Ok(self.eval_local(i, s))
    }

    pub fn eval_deriv(&self, t: f64) -> Result<f64> {
        let (i, s) = self.grid.locate(t)?;
        Ok(self.eval_deriv_local(i, s))
    }

    pub(crate) fn eval_local(&self, i: usize, s: f64) -> f64 {
        let b = hermite_basis(s);
        let h = self.grid.spacing();
        b[0] * self.values[i] + b[1] * h * self.slopes[i] + b[2] * self.values[i + 1] + b[3] * h * self.slopes[i + 1]
    }

    pub(crate) fn eval_deriv_local(&self, i: usize, s: f64) -> f64 {
        if s == 0.0 {
            return self.slopes[i];
        }
        if s == 1.0 {
            return self.slopes[i + 1];
        }
        let b = hermite_basis_deriv(s);
        let h = self.grid.spacing();
        (b[0] * self.values[i] + b[2] * self.values[i + 1]) / h + b[1] * self.slopes[i] + b[3] * self.slopes[i + 1]
    }

    /// `max |phi(t)|` over `[-r, 0]` together with a maximizing `t`.
    pub fn sup_norm_arg(&self) -> (f64, f64) {
        let h = self.grid.spacing();
        let mut best = (self.values[0].abs(), self.grid.node(0));
        for i in 0..self.grid.intervals() {
            let end = self.values[i + 1].abs();
            if end > best.0 {
                best = (end, self.grid.node(i + 1));
            }
            let c = self.coefficients(i);
            let (roots, count) = quadratic_roots(3.0 * c[3], 2.0 * c[2], c[1]);
            for &s in &roots[..count] {
                if s > 0.0 && s < 1.0 {
                    let value = poly(&c, s).abs();
                    if value > best.0 {
                        best = (value, self.grid.node(i) + s * h);
                    }
                }
            }
        }
        best
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm_arg().0
    }

    /// `max |phi'(t)|` over `[-r, 0]` together with a maximizing `t`.
    pub fn deriv_sup_norm_arg(&self) -> (f64, f64) {
        let h = self.grid.spacing();
        let mut best = (self.slopes[0].abs(), self.grid.node(0));
        for i in 0..self.grid.intervals() {
            let end = self.slopes[i + 1].abs();
            if end > best.0 {
                best = (end, self.grid.node(i + 1));
            }
            let c = self.coefficients(i);
            if c[3] != 0.0 {
                let s = -c[2] / (3.0 * c[3]);
                if s > 0.0 && s < 1.0 {
                    let value = ((c[1] + 2.0 * c[2] * s + 3.0 * c[3] * s * s) / h).abs();
                    if value > best.0 {
                        best = (value, self.grid.node(i) + s * h);
                    }
                }
            }
        }
        best
    }

    pub fn deriv_sup_norm(&self) -> f64 {
        self.deriv_sup_norm_arg().0
    }

    /// `|phi|_C + |phi'|_C`.
    pub fn c1_norm(&self) -> f64 {
        self.sup_norm() + self.deriv_sup_norm()
    }

    /// Exact `∫_{-r}^0 phi(t) dt`.
    pub fn integral(&self) -> f64 {
        let h = self.grid.spacing();
        (0..self.grid.intervals())
            .map(|i| {
                h * (0.5 * (self.values[i] + self.values[i + 1]) + h * (self.slopes[i] - self.slopes[i + 1]) / 12.0)
            })
            .sum()
    }

    /// Exact `∫_a^b phi(t) dt` for `-r <= a <= b <= 0`.
    pub fn integral_between(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Ok(-self.integral_between(b, a)?);
        }
        let (ia, sa) = self.grid.locate(a)?;
        let (ib, sb) = self.grid.locate(b)?;
        let h = self.grid.spacing();
        let piece = |i: usize, s0: f64, s1: f64| {
            let c = self.coefficients(i);
            h * (poly_antiderivative(&c, s1) - poly_antiderivative(&c, s0))
        };
        if ia == ib {
            return Ok(piece(ia, sa, sb));
        }
        let mut total = piece(ia, sa, 1.0);
        for i in ia + 1..ib {
            total += piece(i, 0.0, 1.0);
        }
        total += piece(ib, 0.0, sb);
        Ok(total)
    }

    pub fn scale(&self, a: f64) -> Self {
        GridFn1 {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
            slopes: self.slopes.iter().map(|w| a * w).collect(),
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &GridFn1) -> Result<()> {
        self.grid.check_same(&x.grid)?;
        for (y, x) in self.values.iter_mut().zip(&x.values) {
            *y += a * x;
        }
        for (y, x) in self.slopes.iter_mut().zip(&x.slopes) {
            *y += a * x;
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFn1) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &GridFn1) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }
}

/// A function `[-r, 0] → ℝⁿ`; every component lives on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFnN {
    components: Vec<GridFn1>,
}

impl GridFnN {
    pub fn new(components: Vec<GridFn1>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Config("a function needs at least one component".into()))?;
        for c in &components[1..] {
            first.grid.check_same(&c.grid)?;
        }
        Ok(GridFnN { components })
    }

    pub fn zeros(grid: Grid, n: usize) -> Self {
        GridFnN {
            components: vec![GridFn1::zeros(grid); n],
        }
    }

    /// Constant function with value `c ∈ ℝⁿ`.
    pub fn constant(grid: Grid, c: &[f64]) -> Self {
        GridFnN {
            components: c.iter().map(|&x| GridFn1::constant(grid, x)).collect(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.components[0].grid
    }

    /// Number of components `n`.
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GridFn1] {
        &self.components
    }

    pub fn component(&self, nu: usize) -> Result<&GridFn1> {
        self.components.get(nu).ok_or(Error::Component {
            index: nu + 1,
            n: self.components.len(),
        })
    }

    pub fn component_mut(&mut self, nu: usize) -> Result<&mut GridFn1> {
        let n = self.components.len();
        self.components.get_mut(nu).ok_or(Error::Component { index: nu + 1, n })
    }

    pub fn into_components(self) -> Vec<GridFn1> {
        self.components
    }

    /// Component `nu` (0-based) at `t`.
    pub fn eval(&self, t: f64, nu: usize) -> Result<f64> {
        self.component(nu)?.eval(t)
    }

    pub fn eval_deriv(&self, t: f64, nu: usize) -> Result<f64> {
        self.component(nu)?.eval_deriv(t)
    }

    pub fn eval_vec(&self, t: f64) -> Result<Vec<f64>> {
        let (i, s) = self.grid().locate(t)?;
        Ok(self.components.iter().map(|c| c.eval_local(i, s)).collect())
    }

    pub fn value_at_zero(&self) -> Vec<f64> {
        self.components.iter().map(GridFn1::value_at_zero).collect()
    }

    /// `phi'(0) ∈ ℝⁿ`.
    pub fn slope_at_zero(&self) -> Vec<f64> {
        self.components.iter().map(GridFn1::slope_at_zero).collect()
    }

    /// `|phi|_C` with the max-norm on ℝⁿ.
    pub fn sup_norm(&self) -> f64 {
        self.components.iter().map(GridFn1::sup_norm).fold(0.0, f64::max)
    }

    pub fn deriv_sup_norm(&self) -> f64 {
        self.components.iter().map(GridFn1::deriv_sup_norm).fold(0.0, f64::max)
    }

    pub fn c1_norm(&self) -> f64 {
        self.sup_norm() + self.deriv_sup_norm()
    }

    pub fn scale(&self, a: f64) -> Self {
        GridFnN {
            components: self.components.iter().map(|c| c.scale(a)).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &GridFnN) -> Result<()> {
        if self.dim() != x.dim() {
            return Err(Error::GridMismatch(
                format!("n = {}", self.dim()),
                format!("n = {}", x.dim()),
            ));
        }
        for (y, x) in self.components.iter_mut().zip(&x.components) {
            y.axpy(a, x)?;
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFnN) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &GridFnN) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }
}

/// `(phi · q)_nu = q_nu phi`: a scalar function times a vector.
pub fn scalar_vec_product(phi: &GridFn1, q: &[f64]) -> GridFnN {
    GridFnN {
        components: q.iter().map(|&qn| phi.scale(qn)).collect(),
    }
}

/// `(q · phi)_nu = q_nu phi_nu`: componentwise scaling.
pub fn hadamard(q: &[f64], phi: &GridFnN) -> Result<GridFnN> {
    if q.len() != phi.dim() {
        return Err(Error::GridMismatch(
            format!("q has {} entries", q.len()),
            format!("n = {}", phi.dim()),
        ));
    }
    Ok(GridFnN {
        components: phi.components.iter().zip(q).map(|(c, &qn)| c.scale(qn)).collect(),
    })
}
