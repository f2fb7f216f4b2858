//! Seeded sampling of test inputs.
//!
//! Every draw takes its own generator, `stream(seed, purpose, index)`, so
//! samples can be produced in parallel and in any order with identical results.
//!
//! Random functions are the witness plus a smooth random perturbation with
//! small nodal noise. Membership (in `U`, `𝒪`, ...) is enforced by pulling
//! the candidate toward the witness until the relevant chart operation
//! succeeds.

use std::ops::Add;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blend::{HFamily, Level};
use crate::chart::ChartContext;
use crate::error::{Error, Result};
use crate::fnspace::{DofFunctional, GridFn1, GridFnN};
use crate::kernel_basis::KernelBasis;
use crate::system::{DomainSpec, SystemDef};

/// Independent generator for sample `index` of kind `purpose`.
pub fn stream(seed: u64, purpose: u32, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 40) ^ index);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `scale · (2 c + Σ_m (a_m cos + b_m sin)(mπt/r) / (1 + m))` per component
/// with standard normal `c, a_m, b_m`, plus nodal noise of relative size 1/50.
///
/// The constant offset spreads `L φ` widely, so that small delays (where the
/// correction `H` is supported) are reached regularly.
pub fn random_perturbation(sys: &SystemDef, rng: &mut ChaCha8Rng, scale: f64) -> GridFnN {
    let grid = sys.grid();
    let r = grid.r();
    let components = (0..sys.n())
        .map(|_| {
            let offset = 2.0 * normal(rng);
            let modes: Vec<(f64, f64)> = (0..5).map(|_| (normal(rng), normal(rng))).collect();
            let w = std::f64::consts::PI / r;
            let mut f = GridFn1::from_fn(
                grid,
                |t| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(m, (a, b))| {
                            let x = m as f64 * w * t;
                            (a * x.cos() + b * x.sin()) / (1.0 + m as f64)
                        })
                        .sum::<f64>()
                        .add(offset)
                        * scale
                },
                |t| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(m, (a, b))| {
                            let k = m as f64 * w;
                            let x = k * t;
                            k * (b * x.cos() - a * x.sin()) / (1.0 + m as f64)
                        })
                        .sum::<f64>()
                        * scale
                },
            );
            for v in f.values_mut() {
                *v += scale / 50.0 * normal(rng);
            }
            for s in f.slopes_mut() {
                *s += scale / 50.0 * normal(rng);
            }
            f
        })
        .collect();
    GridFnN::new(components).expect("components share the grid")
}

fn toward_witness(sys: &SystemDef, delta: &GridFnN, lambda: f64) -> GridFnN {
    let mut phi = sys.witness().clone();
    phi.axpy(lambda, delta).expect("same grid");
    phi
}

const SHRINK_STEPS: usize = 24;
const ATTEMPTS: usize = 64;

/// Draws `witness + λ·δ`, halving `λ` until `accept` succeeds.
fn draw<T>(
    sys: &SystemDef,
    rng: &mut ChaCha8Rng,
    scale: f64,
    what: &str,
    mut prepare: impl FnMut(GridFnN) -> GridFnN,
    mut accept: impl FnMut(&GridFnN) -> Result<T>,
) -> Result<(GridFnN, T)> {
    for _ in 0..ATTEMPTS {
        let delta = random_perturbation(sys, rng, scale);
        let mut lambda = 1.0;
        for _ in 0..SHRINK_STEPS {
            let phi = prepare(toward_witness(sys, &delta, lambda));
            match accept(&phi) {
                Ok(t) => return Ok((phi, t)),
                Err(Error::GridTooCoarse { .. }) | Err(Error::LevelCap { .. }) => {}
                Err(e) if e.is_outside_domain() => {}
                Err(Error::OutsideW { .. }) | Err(Error::DelayRange { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
    }
    Err(Error::Config(format!("could not draw a sample in {what}")))
}

/// Random `φ ∈ U` on which `A` can be evaluated.
pub fn sample_u(ctx: &ChartContext, rng: &mut ChaCha8Rng, scale: f64) -> Result<GridFnN> {
    Ok(draw(ctx.system(), rng, scale, "U", |p| p, |p| ctx.a_map(p))?.0)
}

/// Random `χ ∈ 𝒪` (the fixed-point iteration for `B` converges in `V`).
pub fn sample_o(ctx: &ChartContext, rng: &mut ChaCha8Rng, scale: f64) -> Result<GridFnN> {
    Ok(draw(ctx.system(), rng, scale, "O", |p| p, |p| ctx.b_map_traced(p))?.0)
}

/// Sets `φ'(0) = 0` in every component.
pub fn flatten_at_zero(mut phi: GridFnN) -> GridFnN {
    let last = phi.grid().intervals();
    for nu in 0..phi.dim() {
        phi.component_mut(nu).expect("in range").slopes_mut()[last] = 0.0;
    }
    phi
}

/// Random `ζ ∈ X₀ ∩ 𝒪`.
pub fn sample_x0_o(ctx: &ChartContext, rng: &mut ChaCha8Rng, scale: f64) -> Result<GridFnN> {
    Ok(draw(ctx.system(), rng, scale, "X0 ∩ O", flatten_at_zero, |p| ctx.lift(p))?.0)
}

/// Random `v ∈ V` at which every `H_ν` can be evaluated.
pub fn sample_v(ctx: &ChartContext, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let sys = ctx.system();
    let center = sys.hat(sys.witness())?;
    for _ in 0..ATTEMPTS {
        let mut v: Vec<f64> = match sys.v_domain().as_box() {
            Some((lo, hi)) => lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| a + rng.random::<f64>() * (b - a))
                .collect(),
            None => center.iter().map(|c| c + 4.0 * normal(rng)).collect(),
        };
        for _ in 0..SHRINK_STEPS {
            if ctx.families().iter().all(|f| f.blend(&v).is_ok()) {
                return Ok(v);
            }
            for (x, c) in v.iter_mut().zip(&center) {
                *x = c + 0.5 * (*x - c);
            }
        }
    }
    Err(Error::Config("could not draw a point of V".into()))
}

/// A point of `V` with signed margin `margin` and radius `radius` from the
/// family's center: one coordinate is placed at the requested margin, the rest
/// stay deep inside.
fn shell_point(fam: &HFamily, deep: &Level, margin: f64, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sys = fam.system();
    let center = sys.hat(sys.witness()).expect("witness lies in U");
    let p = center.len();
    match sys.v_domain().as_box() {
        Some((lo, hi)) => {
            let inner = deep.inner.margin;
            let mut v: Vec<f64> = (0..p)
                .map(|i| {
                    let (a, b) = (lo[i] + inner, hi[i] - inner);
                    let mid = 0.5 * (a + b);
                    mid + 0.5 * (b - a) * (2.0 * rng.random::<f64>() - 1.0) * 0.9
                })
                .collect();
            let i = rng.random_range(0..p);
            v[i] = if rng.random::<bool>() {
                lo[i] + margin
            } else {
                hi[i] - margin
            };
            v
        }
        None => {
            let dir: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            center.iter().zip(&dir).map(|(c, d)| c + radius * d / len).collect()
        }
    }
}

/// A point of `V_j \ closure(V_{j2})`, where levels `j` and `j + 1` must agree.
pub fn overlap_point(fam: &HFamily, j: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let level = fam.level(j)?;
    let u = 0.05 + 0.9 * rng.random::<f64>();
    let margin = level.outer.margin + u * (level.middle.margin - level.outer.margin);
    let radius = level.middle.radius + u * (level.outer.radius - level.middle.radius);
    let deep = fam.level(1)?;
    Ok(shell_point(fam, &deep, margin, radius, rng))
}

/// A point of `V_{j2} \ closure(V_{j1})` where the bump of level `j` is
/// strictly between 0 and 1, away from its kinks.
pub fn transition_point(fam: &HFamily, j: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let level = fam.level(j)?;
    let u = 0.1 + 0.8 * rng.random::<f64>();
    let margin = level.middle.margin + u * (level.inner.margin - level.middle.margin);
    let (r1, r2) = (level.inner.radius, level.middle.radius);
    let radius = (r2 * r2 - u * (r2 * r2 - r1 * r1)).sqrt();
    let deep = fam.level(1)?;
    Ok(shell_point(fam, &deep, margin, radius, rng))
}

/// Random `η ∈ W` with all delays in range.
pub fn sample_eta(sys: &SystemDef, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let center = sys.apply_l(sys.witness())?;
    for _ in 0..ATTEMPTS {
        let eta: Vec<f64> = match sys.w_domain() {
            DomainSpec::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a + rng.random::<f64>() * (b - a))
                .collect(),
            DomainSpec::Ball { center, radius } => center
                .iter()
                .map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
            DomainSpec::Full => center.iter().map(|c| c + 3.0 * normal(rng)).collect(),
        };
        if sys.delays(&eta).is_ok() {
            return Ok(eta);
        }
    }
    Err(Error::Config("could not draw a point of W".into()))
}

/// Newton's method for `g(c, …, c) = 0`, started at `start`.
pub fn equilibrium(sys: &SystemDef, start: &[f64]) -> Result<Vec<f64>> {
    let (n, k) = (sys.n(), sys.k());
    let stack = |c: &[f64]| -> Vec<f64> { (0..k).flat_map(|_| c.iter().copied()).collect() };
    let mut c = start.to_vec();
    for _ in 0..50 {
        let (g, jac) = sys.g_jacobian(&stack(&c))?;
        if g.iter().all(|x| x.abs() <= 1e-15) {
            return Ok(c);
        }
        let j = DMatrix::from_fn(n, n, |nu, mu| (0..k).map(|kappa| jac[nu][sys.index(kappa, mu)]).sum());
        let step = j
            .lu()
            .solve(&DVector::from_vec(g.clone()))
            .ok_or(Error::Singular { norm: f64::NAN })?;
        for (x, s) in c.iter_mut().zip(step.iter()) {
            *x -= s;
        }
        if step.amax() <= 1e-15 * (1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            return Ok(c);
        }
    }
    Err(Error::NoConvergence {
        iterations: 50,
        last_step: f64::NAN,
    })
}

/// A member of `X₀ ∩ X_f`: `c + p` with `c` an equilibrium and `p` a random
/// function with `λ_ν p_ν = 0`, `p(−d_κ(Lc)) = 0` and `p'(0) = 0`.
pub fn constructed_member(sys: &SystemDef, c: &[f64], rng: &mut ChaCha8Rng, scale: f64) -> Result<GridFnN> {
    let grid = sys.grid();
    let base = sys.constant(c);
    let taus = sys.delays(&sys.apply_l(&base)?)?;
    let p = random_perturbation(sys, rng, scale);
    let components = (0..sys.n())
        .map(|nu| {
            let mut rows = sys.l().restrict(nu, grid)?;
            for &d in &taus {
                rows.push(DofFunctional::point(grid, -d)?);
            }
            rows.push(DofFunctional::slope_at_zero(grid));
            let basis = KernelBasis::from_rows(grid, rows, Default::default())?;
            let mut out = basis.project(p.component(nu)?)?;
            out.slopes_mut()[grid.intervals()] = 0.0;
            for v in out.values_mut() {
                *v += c[nu];
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    GridFnN::new(components)
}
