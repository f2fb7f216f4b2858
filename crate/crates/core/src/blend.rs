//! The correction directions `H_nu : V → C¹`.
//!
//! `V` is exhausted by nested open sets `V_{j1} ⊂⊂ V_{j2} ⊂⊂ V_j ⊂⊂ V_{j+1,1}`.
//! Level `j` carries a C¹ bump `a_j` (1 on `V_{j1}`, 0 off `V_{j2}`), a bound
//! `A_j` on `1 + Σ_μ max |∂_μ a_j|`, a lower bound `h_j` for `h` on `V_j`, and a
//! kernel function `psi_j` with `|psi_j|_C < h_j / (2 A_j)`. On
//! `V_j \ closure(V_{j-1,2})`
//!
//! ```text
//! H(v) = a_j(v) psi_j + (1 - a_j(v)) psi_{j+1}
//! ```
//!
//! so every value of `H` is annihilated by `L(· e_nu)`, has slope 1 at 0,
//! and `|H(v)|_C`, `|∂_μ H(v)|_C` stay below `h(v)`.
//!
//! Level sets are `{ v : dist(v, ℝ^{nk} \ V) > δ, |v - c|_2 < R }`; for
//! bounded `V` only the distance margin is used, for `V = ℝ^{nk}` only the
//! radius (centered at the delayed values of the witness).

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fnspace::GridFn1;
use crate::kernel_basis::{KernelBasis, KernelOptions};
use crate::system::{max_norm, DomainSpec, SystemDef};

/// `h(v) = min{1, dist(v, ∁V)} / (2 (nk)² (1 + max |∂_ι g_ν(v)| + max |g_ν(v)|))`,
/// without the distance factor when `V = ℝ^{nk}`.
pub fn h_of(sys: &SystemDef, v: &[f64]) -> Result<f64> {
    let (g, jac) = sys.g_jacobian(v)?;
    let nk = sys.nk() as f64;
    let max_grad = jac.iter().map(|row| max_norm(row)).fold(0.0, f64::max);
    let denom = 2.0 * nk * nk * (1.0 + max_grad + max_norm(&g));
    let numer = match sys.v_domain() {
        DomainSpec::Full => 1.0,
        d => d.dist_to_complement(v).min(1.0),
    };
    Ok(numer / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyMode {
    /// Level-by-level construction.
    Adaptive,
    /// One `psi` for all `v`; valid when `inf_V h >= h_min`.
    Constant { h_min: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiWidth {
    /// Widest admissible slope bump per level, so that `psi_j` varies with `j`.
    Widest,
    /// Always the one-interval slope cardinal.
    Narrowest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HOptions {
    pub mode: FamilyMode,
    pub psi_width: PsiWidth,
    /// Initial distance margin; defaults to half the witness's margin.
    pub delta0: Option<f64>,
    /// Initial radius for `V = ℝ^{nk}`.
    pub r0: f64,
    pub samples_per_level: usize,
    pub j_max: usize,
    pub kernel: KernelOptions,
}

impl Default for HOptions {
    fn default() -> Self {
        HOptions {
            mode: FamilyMode::Adaptive,
            psi_width: PsiWidth::Widest,
            delta0: None,
            r0: 1.0,
            samples_per_level: 256,
            j_max: 12,
            kernel: KernelOptions::default(),
        }
    }
}

/// `{ v : dist(v, ∁V) > margin, |v - c|_2 < radius }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub margin: f64,
    pub radius: f64,
}

/// One materialized exhaustion level.
#[derive(Debug, Clone)]
pub struct Level {
    pub index: usize,
    /// `V_{j1}`
    pub inner: Shell,
    /// `V_{j2}`
    pub middle: Shell,
    /// `V_j`
    pub outer: Shell,
    /// `A_j`
    pub a_bound: f64,
    /// `h_j`
    pub h_min: f64,
    /// `h_j / (2 A_j)`
    pub eps: f64,
    pub psi: GridFn1,
    /// Width of the slope bump behind `psi`, in grid spacings.
    pub width: usize,
}

#[inline]
fn smoothstep(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u))
    }
}

/// Blend weights of `H` at one point.
#[derive(Debug, Clone)]
pub struct Blend {
    pub level: Arc<Level>,
    /// `None` when `a == 1`, where the next level is not needed.
    pub next: Option<Arc<Level>>,
    pub a: f64,
    pub grad_a: Vec<f64>,
}

impl Blend {
    /// `H(v)(t)`
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let here = self.level.psi.eval(t)?;
        Ok(match &self.next {
            None => here,
            Some(next) => self.a * here + (1.0 - self.a) * next.psi.eval(t)?,
        })
    }

    /// `(∂_μ H(v) 1)(t)`
    pub fn deriv_at(&self, mu: usize, t: f64) -> Result<f64> {
        match &self.next {
            None => Ok(0.0),
            Some(next) => Ok(self.grad_a[mu] * (self.level.psi.eval(t)? - next.psi.eval(t)?)),
        }
    }

    pub fn function(&self) -> GridFn1 {
        match &self.next {
            None => self.level.psi.clone(),
            Some(next) if self.a == 0.0 => next.psi.clone(),
            Some(next) => {
                let mut out = self.level.psi.scale(self.a);
                out.axpy(1.0 - self.a, &next.psi).expect("levels share the grid");
                out
            }
        }
    }

    pub fn deriv_function(&self, mu: usize) -> GridFn1 {
        match &self.next {
            None => GridFn1::zeros(self.level.psi.grid()),
            Some(next) => {
                let mut out = self.level.psi.scale(self.grad_a[mu]);
                out.axpy(-self.grad_a[mu], &next.psi).expect("levels share the grid");
                out
            }
        }
    }
}

/// The family `H_nu` for one component.
#[derive(Debug)]
pub struct HFamily {
    sys: Arc<SystemDef>,
    nu: usize,
    options: HOptions,
    kernel: KernelBasis,
    center: Vec<f64>,
    delta0: f64,
    constant: Option<Arc<Level>>,
    levels: Vec<OnceLock<Result<Arc<Level>>>>,
}

impl HFamily {
    pub fn build(sys: Arc<SystemDef>, nu: usize, options: HOptions) -> Result<Self> {
        let kernel = KernelBasis::build(&sys, nu, options.kernel)?;
        let center = sys.hat(sys.witness())?;
        let witness_margin = sys.v_domain().dist_to_complement(&center);
        let delta0 = match (sys.v_domain(), options.delta0) {
            (DomainSpec::Full, _) => 0.0,
            (_, None) => 0.5 * witness_margin,
            (_, Some(d)) => d.min(0.8 * witness_margin),
        };
        if !(options.r0 > 0.0) {
            return Err(Error::Config("R0 must be positive".into()));
        }
        let constant = match options.mode {
            FamilyMode::Adaptive => None,
            FamilyMode::Constant { h_min } => {
                if !(h_min > 0.0) {
                    return Err(Error::Config("h_min must be positive".into()));
                }
                let (psi, width) = match options.psi_width {
                    PsiWidth::Widest => kernel.make_psi_widest(h_min)?,
                    PsiWidth::Narrowest => (kernel.make_psi(h_min)?, 1),
                };
                let everywhere = Shell {
                    margin: 0.0,
                    radius: f64::INFINITY,
                };
                Some(Arc::new(Level {
                    index: 0,
                    inner: everywhere,
                    middle: everywhere,
                    outer: everywhere,
                    a_bound: 1.0,
                    h_min,
                    eps: h_min,
                    psi,
                    width,
                }))
            }
        };
        let levels = (0..options.j_max + 2).map(|_| OnceLock::new()).collect();
        Ok(HFamily {
            sys,
            nu,
            options,
            kernel,
            center,
            delta0,
            constant,
            levels,
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn options(&self) -> &HOptions {
        &self.options
    }

    pub fn kernel(&self) -> &KernelBasis {
        &self.kernel
    }

    pub fn system(&self) -> &SystemDef {
        &self.sys
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// Levels built so far (in order); the single level in constant mode.
    pub fn materialized(&self) -> Vec<Arc<Level>> {
        if let Some(level) = &self.constant {
            return vec![level.clone()];
        }
        self.levels
            .iter()
            .skip(1)
            .map_while(|l| l.get().and_then(|r| r.as_ref().ok()).cloned())
            .collect()
    }

    fn shell(&self, j: usize, theta: f64) -> Shell {
        let bounded = self.sys.v_domain().is_bounded();
        let margin = if bounded {
            let prev = self.delta0 * 0.5f64.powi(j as i32 - 1);
            let cur = self.delta0 * 0.5f64.powi(j as i32);
            prev + theta * (cur - prev)
        } else {
            f64::NEG_INFINITY
        };
        let radius = if bounded {
            f64::INFINITY
        } else {
            let prev = self.options.r0 * 2f64.powi(j as i32 - 1);
            let cur = self.options.r0 * 2f64.powi(j as i32);
            prev + theta * (cur - prev)
        };
        Shell { margin, radius }
    }

    fn radius_of(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt()
    }

    pub fn shell_contains(&self, shell: &Shell, v: &[f64]) -> bool {
        self.sys.v_domain().dist_to_complement(v) > shell.margin && self.radius_of(v) < shell.radius
    }

    /// Level `j >= 1`, built on first use.
    pub fn level(&self, j: usize) -> Result<Arc<Level>> {
        if j == 0 {
            return Err(Error::Config("levels are numbered from 1".into()));
        }
        if j > self.options.j_max + 1 {
            return Err(Error::LevelCap {
                level: j,
                cap: self.options.j_max,
            });
        }
        self.levels[j].get_or_init(|| self.construct(j).map(Arc::new)).clone()
    }

    fn construct(&self, j: usize) -> Result<Level> {
        let previous = if j > 1 { Some(self.level(j - 1)?) } else { None };
        let inner = self.shell(j, 1.0 / 3.0);
        let middle = self.shell(j, 2.0 / 3.0);
        let outer = self.shell(j, 1.0);
        let nk = self.sys.nk() as f64;

        let mut formula = 1.0;
        if self.sys.v_domain().is_bounded() {
            formula += nk * 3.0 / (inner.margin - middle.margin);
        } else {
            let (r1, r2) = (inner.radius, middle.radius);
            formula += nk * 3.0 * r2 / (r2 * r2 - r1 * r1);
        }
        let a_bound = previous.as_ref().map_or(formula, |p| formula.max(p.a_bound)) + 0.5f64.powi(j as i32);

        let sampled = self.sampled_h_min(j, &outer)?;
        let h_min = previous.as_ref().map_or(0.5 * sampled, |p| p.h_min.min(0.5 * sampled));
        let eps = h_min / (2.0 * a_bound);
        let (psi, width) = match self.options.psi_width {
            PsiWidth::Widest => self.kernel.make_psi_widest(eps)?,
            PsiWidth::Narrowest => (self.kernel.make_psi(eps)?, 1),
        };
        Ok(Level {
            index: j,
            inner,
            middle,
            outer,
            a_bound,
            h_min,
            eps,
            psi,
            width,
        })
    }

    /// Minimum of `h` over sample points of `closure(V_j)`.
    fn sampled_h_min(&self, j: usize, outer: &Shell) -> Result<f64> {
        let p = self.sys.nk();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ ((self.nu as u64) << 32) ^ j as u64);
        let mut points: Vec<Vec<f64>> = Vec::new();
        match self.sys.v_domain().as_box() {
            Some((lo, hi)) => {
                let lo: Vec<f64> = lo.iter().map(|x| x + outer.margin).collect();
                let hi: Vec<f64> = hi.iter().map(|x| x - outer.margin).collect();
                points.push(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect());
                if p <= 10 {
                    for mask in 0..(1usize << p) {
                        points.push((0..p).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
                    }
                }
                for _ in 0..self.options.samples_per_level {
                    points.push((0..p).map(|i| lo[i] + rng.random::<f64>() * (hi[i] - lo[i])).collect());
                }
            }
            None => {
                points.push(self.center.clone());
                for s in 0..self.options.samples_per_level {
                    let dir: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                    let len = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt().max(1e-300);
                    let scale = if s % 2 == 0 {
                        outer.radius
                    } else {
                        outer.radius * rng.random::<f64>().powf(1.0 / p as f64)
                    };
                    points.push(dir.iter().zip(&self.center).map(|(d, c)| c + scale * d / len).collect());
                }
            }
        }
        points
            .iter()
            .try_fold(f64::INFINITY, |m, v| Ok(m.min(h_of(&self.sys, v)?)))
    }

    /// `a_j(v)` and its gradient.
    pub fn bump(&self, level: &Level, v: &[f64]) -> (f64, Vec<f64>) {
        let p = v.len();
        let mut factors = vec![1.0; p];
        let mut slopes = vec![0.0; p];
        let mut radial = (1.0, vec![0.0; p]);
        match self.sys.v_domain().as_box() {
            Some((lo, hi)) => {
                let (d1, d2) = (level.inner.margin, level.middle.margin);
                let width = d1 - d2;
                for i in 0..p {
                    let (s_lo, ds_lo) = smoothstep((v[i] - lo[i] - d2) / width);
                    let (s_hi, ds_hi) = smoothstep((hi[i] - v[i] - d2) / width);
                    factors[i] = s_lo * s_hi;
                    slopes[i] = (ds_lo * s_hi - s_lo * ds_hi) / width;
                }
            }
            None => {
                let (r1, r2) = (level.inner.radius, level.middle.radius);
                let span = r2 * r2 - r1 * r1;
                let rho2: f64 = v.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
                let (s, ds) = smoothstep((r2 * r2 - rho2) / span);
                radial = (
                    s,
                    v.iter()
                        .zip(&self.center)
                        .map(|(a, c)| -2.0 * ds * (a - c) / span)
                        .collect(),
                );
            }
        }
        let product: f64 = factors.iter().product();
        let a = product * radial.0;
        let grad = (0..p)
            .map(|mu| {
                let others: f64 = factors
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != mu)
                    .map(|(_, f)| f)
                    .product();
                slopes[mu] * others * radial.0 + product * radial.1[mu]
            })
            .collect();
        (a, grad)
    }

    /// Smallest `j` with `v ∈ V_j`.
    pub fn locate(&self, v: &[f64]) -> Result<usize> {
        if !self.sys.v_domain().contains(v) {
            return Err(Error::OutsideV { v: v.to_vec() });
        }
        (1..=self.options.j_max)
            .find(|&j| self.shell_contains(&self.shell(j, 1.0), v))
            .ok_or(Error::LevelCap {
                level: self.options.j_max + 1,
                cap: self.options.j_max,
            })
    }

    /// Blend weights at `v` using the formula of level `j` (no location step).
    pub fn blend_at_level(&self, j: usize, v: &[f64]) -> Result<Blend> {
        let level = self.level(j)?;
        let (a, grad_a) = self.bump(&level, v);
        let next = if a == 1.0 && grad_a.iter().all(|&g| g == 0.0) {
            None
        } else {
            Some(self.level(j + 1)?)
        };
        Ok(Blend { level, next, a, grad_a })
    }

    pub fn blend(&self, v: &[f64]) -> Result<Blend> {
        if let Some(level) = &self.constant {
            if !self.sys.v_domain().contains(v) {
                return Err(Error::OutsideV { v: v.to_vec() });
            }
            return Ok(Blend {
                level: level.clone(),
                next: None,
                a: 1.0,
                grad_a: vec![0.0; v.len()],
            });
        }
        self.blend_at_level(self.locate(v)?, v)
    }

    /// `H_nu(v)`
    pub fn h_eval(&self, v: &[f64]) -> Result<GridFn1> {
        Ok(self.blend(v)?.function())
    }

    /// `D_μ H_nu(v) 1`
    pub fn dh_eval(&self, mu: usize, v: &[f64]) -> Result<GridFn1> {
        if mu >= v.len() {
            return Err(Error::Component {
                index: mu + 1,
                n: v.len(),
            });
        }
        Ok(self.blend(v)?.deriv_function(mu))
    }
}
