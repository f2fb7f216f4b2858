//! The delay system
//!
//! ```text
//! x'(t) = g(x(t - d_1(L x_t)), ..., x(t - d_k(L x_t)))
//! ```
//!
//! with a linear map `L` built from point evaluations and integrals, delay
//! functions `d_κ : W → [0, r]`, and `g : V → ℝⁿ`.
//!
//! Delayed values are stacked as `v[κ n + ν] = phi_ν(-d_κ(L phi))` (0-based).
//! Distances on ℝ^{nk} and on the image space of `L` use the max-norm.

use crate::error::{Error, Result};
use crate::exprdiff::Expression;
use crate::fnspace::{DofFunctional, Grid, GridFn1, GridFnN};

/// One term of a row of `L`.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// `weight * phi_component(time)`
    Point { component: usize, time: f64, weight: f64 },
    /// `weight * ∫_{-r}^0 phi_component`
    Integral { component: usize, weight: f64 },
}

impl Atom {
    pub fn component(&self) -> usize {
        match *self {
            Atom::Point { component, .. } | Atom::Integral { component, .. } => component,
        }
    }
}

/// A row of `L`: a finite sum of weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    atoms: Vec<Atom>,
}

impl Functional {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Config("a row of L needs at least one atom".into()));
        }
        Ok(Functional { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn apply(&self, phi: &GridFnN) -> Result<f64> {
        self.atoms.iter().try_fold(0.0, |acc, atom| {
            Ok(acc
                + match *atom {
                    Atom::Point {
                        component,
                        time,
                        weight,
                    } => weight * phi.eval(time, component)?,
                    Atom::Integral { component, weight } => weight * phi.component(component)?.integral(),
                })
        })
    }

    /// The scalar functional `psi ↦ self(psi · e_nu)` on the Hermite degrees
    /// of freedom.
    pub fn restrict(&self, nu: usize, grid: Grid) -> Result<DofFunctional> {
        let mut out = DofFunctional::zero();
        for atom in self.atoms.iter().filter(|a| a.component() == nu) {
            match *atom {
                Atom::Point { time, weight, .. } => out.add_scaled(weight, &DofFunctional::point(grid, time)?),
                Atom::Integral { weight, .. } => out.add_scaled(weight, &DofFunctional::integral(grid)),
            }
        }
        Ok(out)
    }
}

/// The linear map `L : C_n → ℝᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapL {
    rows: Vec<Functional>,
}

impl MapL {
    pub fn new(rows: Vec<Functional>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("L needs at least one row".into()));
        }
        Ok(MapL { rows })
    }

    pub fn rows(&self) -> &[Functional] {
        &self.rows
    }

    /// Dimension `m` of the image space.
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, phi: &GridFnN) -> Result<Vec<f64>> {
        self.rows.iter().map(|row| row.apply(phi)).collect()
    }

    /// Rows of `lambda_nu : psi ↦ L(psi · e_nu)`.
    pub fn restrict(&self, nu: usize, grid: Grid) -> Result<Vec<DofFunctional>> {
        self.rows.iter().map(|row| row.restrict(nu, grid)).collect()
    }
}

/// Open subsets of ℝᵖ with closed-form max-norm distance to the complement.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Full,
    /// Open max-norm ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl DomainSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            DomainSpec::Full => Ok(()),
            DomainSpec::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::Config(format!(
                        "ball center has {} entries, expected {dim}",
                        center.len()
                    )));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Config("ball radius must be positive".into()));
                }
                Ok(())
            }
            DomainSpec::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::Config(format!("box bounds must have {dim} entries")));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Config("box needs lo < hi componentwise".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, DomainSpec::Full)
    }

    /// Bounds of the set as a box (a max-norm ball is a cube).
    pub fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            DomainSpec::Full => None,
            DomainSpec::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            DomainSpec::Box { lo, hi } => Some((lo.clone(), hi.clone())),
        }
    }

    /// Signed max-norm margin: positive inside, `+∞` for the full space.
    pub fn margin(&self, v: &[f64]) -> f64 {
        match self {
            DomainSpec::Full => f64::INFINITY,
            DomainSpec::Ball { center, radius } => {
                radius - v.iter().zip(center).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max)
            }
            DomainSpec::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (a, b))| (x - a).min(b - x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().all(|x| x.is_finite()) && self.margin(v) > 0.0
    }

    /// `dist(v, ℝᵖ \ D)` in the max-norm (zero outside, `+∞` for the full space).
    pub fn dist_to_complement(&self, v: &[f64]) -> f64 {
        self.margin(v).max(0.0)
    }
}

/// The delayed values of a function together with the data they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Hat {
    pub eta: Vec<f64>,
    pub delays: Vec<f64>,
    pub v: Vec<f64>,
}

/// A concrete instance of the delay system.
#[derive(Debug, Clone)]
pub struct SystemDef {
    name: String,
    n: usize,
    k: usize,
    grid: Grid,
    l: MapL,
    delays: Vec<Expression>,
    g: Vec<Expression>,
    v_domain: DomainSpec,
    w_domain: DomainSpec,
    witness: GridFnN,
}

/// Builder arguments for [`SystemDef::new`].
#[derive(Debug, Clone)]
pub struct SystemParts {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub grid: Grid,
    pub l: MapL,
    pub delays: Vec<Expression>,
    pub g: Vec<Expression>,
    pub v_domain: DomainSpec,
    pub w_domain: DomainSpec,
    pub witness: GridFnN,
}

impl SystemDef {
    /// Validates dimensions and checks that the witness lies in `U`.
    pub fn new(parts: SystemParts) -> Result<Self> {
        let SystemParts {
            name,
            n,
            k,
            grid,
            l,
            delays,
            g,
            v_domain,
            w_domain,
            witness,
        } = parts;
        if n == 0 || k == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        let m = l.dim();
        for row in l.rows() {
            for atom in row.atoms() {
                if atom.component() >= n {
                    return Err(Error::Component {
                        index: atom.component() + 1,
                        n,
                    });
                }
                if let Atom::Point { time, .. } = atom {
                    grid.locate(*time)?;
                }
            }
        }
        if delays.len() != k {
            return Err(Error::Config(format!(
                "expected {k} delay expressions, got {}",
                delays.len()
            )));
        }
        if delays.iter().any(|d| d.arity() != m) {
            return Err(Error::Config(format!("delay expressions must take {m} variables")));
        }
        if g.len() != n {
            return Err(Error::Config(format!("expected {n} components of g, got {}", g.len())));
        }
        if g.iter().any(|e| e.arity() != n * k) {
            return Err(Error::Config(format!("g must take {} variables", n * k)));
        }
        v_domain.validate(n * k)?;
        w_domain.validate(m)?;
        if witness.dim() != n {
            return Err(Error::Config(format!("witness must have {n} components")));
        }
        grid.check_same(&witness.grid())?;
        let sys = SystemDef {
            name,
            n,
            k,
            grid,
            l,
            delays,
            g,
            v_domain,
            w_domain,
            witness,
        };
        sys.g_at(&sys.hat(&sys.witness)?)?;
        Ok(sys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `n k`, the dimension of the delayed-value space.
    pub fn nk(&self) -> usize {
        self.n * self.k
    }

    /// Dimension `m` of the image of `L`.
    pub fn m(&self) -> usize {
        self.l.dim()
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn r(&self) -> f64 {
        self.grid.r()
    }

    pub fn l(&self) -> &MapL {
        &self.l
    }

    pub fn delay_exprs(&self) -> &[Expression] {
        &self.delays
    }

    pub fn g_exprs(&self) -> &[Expression] {
        &self.g
    }

    pub fn v_domain(&self) -> &DomainSpec {
        &self.v_domain
    }

    pub fn w_domain(&self) -> &DomainSpec {
        &self.w_domain
    }

    /// A function satisfying condition (V): `L phi ∈ W`, `hat(phi) ∈ V`.
    pub fn witness(&self) -> &GridFnN {
        &self.witness
    }

    /// Position of `x_nu(t - d_kappa)` in the delayed-value vector.
    pub fn index(&self, kappa: usize, nu: usize) -> usize {
        kappa * self.n + nu
    }

    pub fn apply_l(&self, phi: &GridFnN) -> Result<Vec<f64>> {
        self.check_shape(phi)?;
        self.l.apply(phi)
    }

    fn check_shape(&self, phi: &GridFnN) -> Result<()> {
        self.grid.check_same(&phi.grid())?;
        if phi.dim() != self.n {
            return Err(Error::GridMismatch(
                format!("n = {}", self.n),
                format!("n = {}", phi.dim()),
            ));
        }
        Ok(())
    }

    /// `d_κ(η)` for all κ; each must land in `[0, r]`.
    pub fn delays(&self, eta: &[f64]) -> Result<Vec<f64>> {
        if !self.w_domain.contains(eta) {
            return Err(Error::OutsideW { eta: eta.to_vec() });
        }
        let r = self.r();
        self.delays
            .iter()
            .enumerate()
            .map(|(kappa, d)| {
                let value = d.eval(eta)?;
                let slack = 1e-12 * r;
                if !(value >= -slack && value <= r + slack) {
                    return Err(Error::DelayRange {
                        index: kappa + 1,
                        value,
                        r,
                    });
                }
                Ok(value.clamp(0.0, r))
            })
            .collect()
    }

    pub fn hat_full(&self, phi: &GridFnN) -> Result<Hat> {
        let eta = self.apply_l(phi)?;
        let delays = self.delays(&eta)?;
        let mut v = Vec::with_capacity(self.nk());
        for &d in &delays {
            v.extend(phi.eval_vec(-d)?);
        }
        Ok(Hat { eta, delays, v })
    }

    /// `hat(phi) = (phi(-d_1(L phi)), ..., phi(-d_k(L phi)))`.
    pub fn hat(&self, phi: &GridFnN) -> Result<Vec<f64>> {
        Ok(self.hat_full(phi)?.v)
    }

    pub fn g_at(&self, v: &[f64]) -> Result<Vec<f64>> {
        if !self.v_domain.contains(v) {
            return Err(Error::OutsideV { v: v.to_vec() });
        }
        self.g.iter().map(|g| g.eval(v)).collect()
    }

    /// Values of `g` and the Jacobian rows `∂_ι g_ν(v)`.
    pub fn g_jacobian(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if !self.v_domain.contains(v) {
            return Err(Error::OutsideV { v: v.to_vec() });
        }
        let mut values = Vec::with_capacity(self.n);
        let mut rows = Vec::with_capacity(self.n);
        for g in &self.g {
            let (value, grad) = g.eval_grad(v)?;
            values.push(value);
            rows.push(grad);
        }
        Ok((values, rows))
    }

    /// `f(phi) = g(hat(phi))`.
    pub fn f_of(&self, phi: &GridFnN) -> Result<Vec<f64>> {
        self.g_at(&self.hat(phi)?)
    }

    pub fn in_u(&self, phi: &GridFnN) -> bool {
        self.hat(phi).is_ok_and(|v| self.v_domain.contains(&v))
    }

    /// `phi'(0) - f(phi)`; zero exactly on the solution manifold.
    pub fn manifold_residual(&self, phi: &GridFnN) -> Result<Vec<f64>> {
        let f = self.f_of(phi)?;
        Ok(phi.slope_at_zero().iter().zip(&f).map(|(s, f)| s - f).collect())
    }

    /// Constant function with value `c` in every component.
    pub fn constant(&self, c: &[f64]) -> GridFnN {
        GridFnN::constant(self.grid, c)
    }

    pub fn zero_scalar(&self) -> GridFn1 {
        GridFn1::zeros(self.grid)
    }
}

/// `phi'(0) = 0`, tested exactly.
pub fn in_x0(phi: &GridFnN) -> bool {
    phi.slope_at_zero().iter().all(|&s| s == 0.0)
}

/// Max-norm of a vector.
pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
