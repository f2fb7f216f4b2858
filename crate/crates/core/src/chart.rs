//! The almost-graph chart `A : U → C¹`, `A(φ) = φ − g(φ̂)·H(φ̂)`, and its
//! inverse `B` on `𝒪`.
//!
//! Everything reduces to the finite-dimensional map
//! `S_η(v) = v − R(η, v)` with `R_ι(η, v) = g_ν(v) · H_ν(v)(−d_κ(η))`,
//! inverted by the contraction `v ← y + R(η, v)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::blend::{Blend, HFamily, HOptions};
use crate::error::{Error, Result};
use crate::fnspace::GridFnN;
use crate::system::{in_x0, max_norm, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartOptions {
    /// Stop once `|v_{i+1} − v_i|_∞ <= fp_tol`.
    pub fp_tol: f64,
    /// Defaults to `⌈log2(1/fp_tol)⌉ + 16`.
    pub max_iter: Option<usize>,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            fp_tol: 1e-12,
            max_iter: None,
        }
    }
}

impl ChartOptions {
    pub fn iteration_cap(&self) -> usize {
        self.max_iter
            .unwrap_or_else(|| (1.0 / self.fp_tol).log2().ceil().max(0.0) as usize + 16)
    }
}

/// Iterates `v_0 = y, v_1, …` of the fixed-point map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointTrace {
    pub iterates: Vec<Vec<f64>>,
    /// `|v_{i+1} − v_i| / |v_i − v_{i−1}|`, recorded when the denominator is positive.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl FixedPointTrace {
    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().fold(0.0, |m, &r| m.max(r))
    }
}

/// Result of `B`, with the preimage `v = S_η⁻¹(χ̂)`.
#[derive(Debug, Clone)]
pub struct BOutput {
    pub phi: GridFnN,
    pub eta: Vec<f64>,
    pub v: Vec<f64>,
    pub trace: FixedPointTrace,
}

#[derive(Debug, Clone)]
pub struct Lift {
    pub phi: GridFnN,
    /// `φ − ζ = g(v)·H(v)`
    pub alpha: GridFnN,
    pub v: Vec<f64>,
    pub trace: FixedPointTrace,
}

/// `(I − D₂R)⁻¹` at a solved point, with the measured size of `D₂R`.
#[derive(Debug, Clone)]
pub struct InverseJacobian {
    pub inverse: DMatrix<f64>,
    pub d2r: DMatrix<f64>,
    pub v: Vec<f64>,
}

/// Norms of `D₂R(η, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionNorms {
    /// Operator norm induced by the max-norm (largest absolute row sum).
    pub max_row_sum: f64,
    /// `Σ_{ι,j} |∂_j R_ι|`
    pub entry_sum: f64,
}

pub fn contraction_norms(d2r: &DMatrix<f64>) -> ContractionNorms {
    let max_row_sum = d2r
        .row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    ContractionNorms {
        max_row_sum,
        entry_sum: d2r.iter().map(|x| x.abs()).sum(),
    }
}

#[derive(Debug)]
pub struct ChartContext {
    sys: Arc<SystemDef>,
    families: Vec<HFamily>,
    options: ChartOptions,
}

impl ChartContext {
    pub fn new(sys: Arc<SystemDef>, h: HOptions, options: ChartOptions) -> Result<Self> {
        if !(options.fp_tol > 0.0) {
            return Err(Error::Config("fp_tol must be positive".into()));
        }
        let families = (0..sys.n())
            .map(|nu| HFamily::build(sys.clone(), nu, h))
            .collect::<Result<_>>()?;
        Ok(ChartContext { sys, families, options })
    }

    pub fn system(&self) -> &SystemDef {
        &self.sys
    }

    pub fn system_arc(&self) -> Arc<SystemDef> {
        self.sys.clone()
    }

    pub fn family(&self, nu: usize) -> &HFamily {
        &self.families[nu]
    }

    pub fn families(&self) -> &[HFamily] {
        &self.families
    }

    pub fn options(&self) -> ChartOptions {
        self.options
    }

    fn blends(&self, v: &[f64]) -> Result<Vec<Blend>> {
        self.families.iter().map(|f| f.blend(v)).collect()
    }

    /// `φ + sign · Σ_ν g_ν(v) H_ν(v) e_ν`; components with `g_ν(v) = 0` are untouched.
    fn correct(&self, phi: &GridFnN, v: &[f64], sign: f64) -> Result<GridFnN> {
        let g = self.sys.g_at(v)?;
        let mut out = phi.clone();
        for (nu, &gn) in g.iter().enumerate() {
            if gn != 0.0 {
                let h = self.families[nu].h_eval(v)?;
                out.component_mut(nu)?.axpy(sign * gn, &h)?;
            }
        }
        Ok(out)
    }

    /// `A(φ) = φ − g(φ̂)·H(φ̂)`.
    pub fn a_map(&self, phi: &GridFnN) -> Result<GridFnN> {
        let v = self.sys.hat(phi)?;
        self.correct(phi, &v, -1.0)
    }

    fn r_with_delays(&self, delays: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let g = self.sys.g_at(v)?;
        let blends = self.blends(v)?;
        let n = self.sys.n();
        let mut out = vec![0.0; self.sys.nk()];
        for (kappa, &d) in delays.iter().enumerate() {
            for nu in 0..n {
                if g[nu] != 0.0 {
                    out[self.sys.index(kappa, nu)] = g[nu] * blends[nu].value_at(-d)?;
                }
            }
        }
        Ok(out)
    }

    /// `R(η, v)`
    pub fn r_map(&self, eta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let delays = self.sys.delays(eta)?;
        self.r_with_delays(&delays, v)
    }

    /// `S(η, v) = v − R(η, v)`
    pub fn s_map(&self, eta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let r = self.r_map(eta, v)?;
        Ok(v.iter().zip(&r).map(|(a, b)| a - b).collect())
    }

    /// Solve `S(η, v) = y` by iterating `v ← y + R(η, v)` from `v = y`.
    pub fn invert_s(&self, eta: &[f64], y: &[f64]) -> Result<(Vec<f64>, FixedPointTrace)> {
        let delays = self.sys.delays(eta)?;
        let cap = self.options.iteration_cap();
        let mut v = y.to_vec();
        let mut trace = FixedPointTrace {
            iterates: vec![v.clone()],
            ratios: Vec::new(),
            converged: false,
        };
        let mut previous_step = f64::NAN;
        for i in 0..cap {
            let r = match self.r_with_delays(&delays, &v) {
                Ok(r) => r,
                Err(Error::OutsideV { .. } | Error::LevelCap { .. }) => {
                    return Err(Error::Diverged { iterations: i, v });
                }
                Err(e) => return Err(e),
            };
            let next: Vec<f64> = y.iter().zip(&r).map(|(a, b)| a + b).collect();
            let step = max_norm(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
            if previous_step > 0.0 {
                trace.ratios.push(step / previous_step);
            }
            previous_step = step;
            v = next;
            trace.iterates.push(v.clone());
            if step <= self.options.fp_tol {
                if !self.sys.v_domain().contains(&v) {
                    return Err(Error::Diverged { iterations: i + 1, v });
                }
                trace.converged = true;
                return Ok((v, trace));
            }
        }
        Err(Error::NoConvergence {
            iterations: cap,
            last_step: previous_step,
        })
    }

    /// `D₂R(η, v)`, row `ι = κn + ν`, column `j`.
    pub fn d2r(&self, eta: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let delays = self.sys.delays(eta)?;
        let (g, jac) = self.sys.g_jacobian(v)?;
        let blends = self.blends(v)?;
        let (n, p) = (self.sys.n(), self.sys.nk());
        let mut out = DMatrix::zeros(p, p);
        for (kappa, &d) in delays.iter().enumerate() {
            for nu in 0..n {
                let iota = self.sys.index(kappa, nu);
                let h = blends[nu].value_at(-d)?;
                for j in 0..p {
                    let mut entry = jac[nu][j] * h;
                    if g[nu] != 0.0 {
                        entry += g[nu] * blends[nu].deriv_at(j, -d)?;
                    }
                    out[(iota, j)] = entry;
                }
            }
        }
        Ok(out)
    }

    /// Derivative of `y ↦ S_η⁻¹(y)`: `(I − D₂R(η, v))⁻¹` at `v = S_η⁻¹(y)`.
    pub fn dsinv(&self, eta: &[f64], y: &[f64]) -> Result<InverseJacobian> {
        let (v, _) = self.invert_s(eta, y)?;
        let d2r = self.d2r(eta, &v)?;
        let p = d2r.nrows();
        let m = DMatrix::identity(p, p) - &d2r;
        let norm = contraction_norms(&d2r).max_row_sum;
        let inverse = m.lu().try_inverse().ok_or(Error::Singular { norm })?;
        if inverse.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular { norm });
        }
        Ok(InverseJacobian { inverse, d2r, v })
    }

    /// `B(χ) = χ + g(v)·H(v)` with `v = S_η⁻¹(χ̂)`, `η = Lχ`.
    pub fn b_map_traced(&self, chi: &GridFnN) -> Result<BOutput> {
        let hat = self.sys.hat_full(chi)?;
        let (v, trace) = self.invert_s(&hat.eta, &hat.v)?;
        let phi = self.correct(chi, &v, 1.0)?;
        Ok(BOutput {
            phi,
            eta: hat.eta,
            v,
            trace,
        })
    }

    pub fn b_map(&self, chi: &GridFnN) -> Result<GridFnN> {
        Ok(self.b_map_traced(chi)?.phi)
    }

    /// The point of `X_f` over `ζ ∈ X₀ ∩ 𝒪`.
    pub fn lift(&self, zeta: &GridFnN) -> Result<Lift> {
        if !in_x0(zeta) {
            return Err(Error::NotInX0 {
                slope: zeta.slope_at_zero(),
            });
        }
        let b = self.b_map_traced(zeta)?;
        let alpha = b.phi.sub(zeta)?;
        Ok(Lift {
            phi: b.phi,
            alpha,
            v: b.v,
            trace: b.trace,
        })
    }
}
