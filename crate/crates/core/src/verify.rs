//! The invariant suite behind `almostgraph verify`.
//!
//! Every check is a list of per-sample values compared against a tolerance.
//! Samples are drawn from independent seeded streams and evaluated in
//! parallel; results are collected in index order, so a report depends only on
//! the configuration and the seed.

use rayon::prelude::*;
use serde::Serialize;

use crate::blend::h_of;
use crate::chart::{contraction_norms, ChartContext, FixedPointTrace};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::fnspace::GridFnN;
use crate::integrator::{derivative_jump, integrate, IntegrateOptions};
use crate::sample::{
    constructed_member, equilibrium, overlap_point, sample_eta, sample_o, sample_u, sample_v, sample_x0_o, stream,
    transition_point,
};
use crate::system::{max_norm, SystemDef};

pub const REPORT_SCHEMA: &str = "almostgraph-report/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    /// Largest observed value; `null` if there were none.
    pub worst: Option<f64>,
    pub tolerance: f64,
    /// `true` when values must stay strictly below the tolerance.
    pub strict: bool,
    pub worst_sample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub kind: &'static str,
    pub index: usize,
    pub error: f64,
    pub steps: usize,
    pub max_ratio: f64,
    /// `H` and `DH` bounded by `h` at every iterate.
    pub h_bounds_verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub nu: usize,
    pub level: usize,
    pub a_bound: f64,
    pub h_min: f64,
    pub eps: f64,
    pub width: usize,
    pub psi_sup_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionSummary {
    pub traces: usize,
    pub nontrivial_traces: usize,
    pub max_observed_ratio: f64,
    /// Largest `|D₂R|` in the max-norm-induced operator norm at solved points.
    pub max_operator_norm: f64,
    /// Largest `Σ |∂_j R_ι|` at solved points.
    pub max_entry_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartReport {
    pub schema: &'static str,
    pub system: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub contraction: Option<ContractionSummary>,
    pub levels: Vec<LevelSummary>,
    pub samples: Vec<SampleRecord>,
}

impl ChartReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    strict: bool,
    values: Vec<(usize, f64)>,
    errors: Vec<String>,
    note: Option<String>,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally {
            name,
            tolerance,
            strict: false,
            values: Vec::new(),
            errors: Vec::new(),
            note: None,
        }
    }

    fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    fn push(&mut self, index: usize, value: f64) {
        self.values.push((index, value));
    }

    fn fail(&mut self, index: usize, e: &Error) {
        self.errors.push(format!("sample {index}: {e}"));
    }

    fn finish(self) -> Check {
        let worst = self
            .values
            .iter()
            .copied()
            .fold(None, |w: Option<(usize, f64)>, (i, v)| match w {
                Some((_, x)) if !(v > x || v.is_nan()) => w,
                _ => Some((i, v)),
            });
        let ok = |v: f64| {
            if self.strict {
                v < self.tolerance
            } else {
                v <= self.tolerance
            }
        };
        let passed = self.errors.is_empty() && self.values.iter().all(|&(_, v)| ok(v));
        let note = self.errors.first().cloned().or(self.note);
        Check {
            name: self.name.into(),
            passed,
            samples: self.values.len(),
            worst: worst.map(|w| w.1),
            tolerance: self.tolerance,
            strict: self.strict,
            worst_sample: worst.map(|w| w.0),
            note,
        }
    }
}

fn l_change(sys: &SystemDef, before: &GridFnN, after: &GridFnN) -> Result<f64> {
    let a = sys.apply_l(before)?;
    let b = sys.apply_l(after)?;
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(max_norm(&diff) / (1.0 + max_norm(&a)))
}

/// `max_ν |x_ν − y_ν|_{C¹} / (1 + |y|_{C¹})`
fn c1_error(x: &GridFnN, y: &GridFnN) -> Result<f64> {
    let diff = x.sub(y)?;
    let worst = diff.components().iter().map(|c| c.c1_norm()).fold(0.0, f64::max);
    Ok(worst / (1.0 + y.c1_norm()))
}

/// `|H_ν(v)|` and `|D_μ H_ν(v) 1|` stay below `h(v)` for all `ν, μ`.
pub fn h_bounds_hold(ctx: &ChartContext, v: &[f64]) -> Result<bool> {
    let h = h_of(ctx.system(), v)?;
    for fam in ctx.families() {
        let b = fam.blend(v)?;
        if b.function().sup_norm() > h + 1e-12 {
            return Ok(false);
        }
        for mu in 0..v.len() {
            if b.deriv_function(mu).sup_norm() > h + 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

struct TraceInfo {
    max_ratio: f64,
    steps: usize,
    nontrivial: bool,
    verified: bool,
    norms: (f64, f64),
}

fn trace_info(ctx: &ChartContext, eta: &[f64], v: &[f64], trace: &FixedPointTrace) -> Result<TraceInfo> {
    let mut verified = true;
    for it in &trace.iterates {
        if !h_bounds_hold(ctx, it)? {
            verified = false;
            break;
        }
    }
    let norms = contraction_norms(&ctx.d2r(eta, v)?);
    Ok(TraceInfo {
        max_ratio: trace.max_ratio(),
        steps: trace.steps(),
        nontrivial: !trace.ratios.is_empty(),
        verified,
        norms: (norms.max_row_sum, norms.entry_sum),
    })
}

struct Suite<'a> {
    ctx: &'a ChartContext,
    config: &'a Config,
    seed: u64,
    checks: Vec<Check>,
    samples: Vec<SampleRecord>,
    traces: Vec<TraceInfo>,
}

const IDENTITY_TOL: f64 = 1e-8;
const L_TOL: f64 = 1e-10;

impl Suite<'_> {
    fn scale(&self) -> f64 {
        self.config.verify.scale
    }

    fn identities(&mut self) {
        let ctx = self.ctx;
        let sys = ctx.system();
        let n = self.config.verify.identity_samples;
        let (seed, scale) = (self.seed, self.scale());

        let forward: Vec<Result<(f64, f64, TraceInfo)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let phi = sample_u(ctx, &mut stream(seed, 1, i as u64), scale)?;
                let chi = ctx.a_map(&phi)?;
                let b = ctx.b_map_traced(&chi)?;
                let info = trace_info(ctx, &b.eta, &b.v, &b.trace)?;
                Ok((c1_error(&b.phi, &phi)?, l_change(sys, &phi, &chi)?, info))
            })
            .collect();
        let mut ba = Tally::new("chart.b_after_a", IDENTITY_TOL);
        let mut la = Tally::new("chart.l_invariance_a", L_TOL);
        for (i, r) in forward.into_iter().enumerate() {
            match r {
                Ok((e, l, info)) => {
                    ba.push(i, e);
                    la.push(i, l);
                    self.record("b_after_a", i, e, &info);
                    self.traces.push(info);
                }
                Err(e) => ba.fail(i, &e),
            }
        }

        let backward: Vec<Result<(f64, f64, TraceInfo, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let chi = sample_o(ctx, &mut stream(seed, 2, i as u64), scale)?;
                let b = ctx.b_map_traced(&chi)?;
                let back = ctx.a_map(&b.phi)?;
                let info = trace_info(ctx, &b.eta, &b.v, &b.trace)?;
                let fd = if i < 20 {
                    dsinv_fd_error(ctx, &b.eta, &sys.hat(&chi)?)?
                } else {
                    f64::NAN
                };
                Ok((c1_error(&back, &chi)?, l_change(sys, &chi, &b.phi)?, info, fd))
            })
            .collect();
        let mut ab = Tally::new("chart.a_after_b", IDENTITY_TOL);
        let mut lb = Tally::new("chart.l_invariance_b", L_TOL);
        let mut fd = Tally::new("chart.dsinv_fd", 1e-5);
        for (i, r) in backward.into_iter().enumerate() {
            match r {
                Ok((e, l, info, f)) => {
                    ab.push(i, e);
                    lb.push(i, l);
                    if !f.is_nan() {
                        fd.push(i, f);
                    }
                    self.record("a_after_b", i, e, &info);
                    self.traces.push(info);
                }
                Err(e) => ab.fail(i, &e),
            }
        }
        self.checks
            .extend([ba.finish(), ab.finish(), la.finish(), lb.finish(), fd.finish()]);
    }

    fn record(&mut self, kind: &'static str, index: usize, error: f64, info: &TraceInfo) {
        self.samples.push(SampleRecord {
            kind,
            index,
            error,
            steps: info.steps,
            max_ratio: info.max_ratio,
            h_bounds_verified: info.verified,
        });
    }

    fn lifts(&mut self) {
        let ctx = self.ctx;
        let sys = ctx.system();
        let (seed, scale) = (self.seed, self.scale());
        let results: Vec<Result<[f64; 5]>> = (0..self.config.verify.lift_samples)
            .into_par_iter()
            .map(|i| {
                let zeta = sample_x0_o(ctx, &mut stream(seed, 5, i as u64), scale)?;
                let lift = ctx.lift(&zeta)?;
                let a = ctx.a_map(&lift.phi)?;
                Ok([
                    max_norm(&sys.manifold_residual(&lift.phi)?),
                    max_norm(&a.slope_at_zero()),
                    c1_error(&a, &zeta)?,
                    derivative_jump(sys, &lift.phi)?,
                    l_change(sys, &zeta, &lift.phi)?,
                ])
            })
            .collect();
        let mut tallies = [
            Tally::new("chart.flat_to_manifold", 1e-9),
            Tally::new("chart.manifold_to_flat", 1e-10),
            Tally::new("chart.lift_inverse", IDENTITY_TOL),
            Tally::new("integrator.lift_jump", 1e-9),
            Tally::new("chart.l_invariance_lift", L_TOL),
        ];
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(values) => {
                    for (t, v) in tallies.iter_mut().zip(values) {
                        t.push(i, v);
                    }
                }
                Err(e) => tallies.iter_mut().for_each(|t| t.fail(i, &e)),
            }
        }
        self.checks.extend(tallies.map(Tally::finish));
    }

    fn members(&mut self) {
        let ctx = self.ctx;
        let sys = ctx.system();
        let (seed, scale) = (self.seed, self.scale());
        let mut fixed = Tally::new("chart.fixed_set", 1e-10);
        let mut steady = Tally::new("integrator.equilibrium", 1e-14);
        match equilibrium(sys, &sys.witness().value_at_zero()) {
            Ok(c) => {
                let results: Vec<Result<f64>> = (0..self.config.verify.member_samples)
                    .into_par_iter()
                    .map(|i| {
                        let phi = constructed_member(sys, &c, &mut stream(seed, 6, i as u64), scale)?;
                        let a = ctx.a_map(&phi)?;
                        Ok(a.sub(&phi)?.c1_norm())
                    })
                    .collect();
                for (i, r) in results.into_iter().enumerate() {
                    match r {
                        Ok(v) => fixed.push(i, v),
                        Err(e) => fixed.fail(i, &e),
                    }
                }
                let options = IntegrateOptions {
                    t_end: 10.0 * sys.r(),
                    step: sys.r() / 8.0,
                    ..IntegrateOptions::default()
                };
                match integrate(sys, &sys.constant(&c), options) {
                    Ok(traj) => {
                        let drift = traj
                            .states()
                            .iter()
                            .map(|x| x.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                            .fold(0.0, f64::max);
                        steady.push(0, drift / (1.0 + max_norm(&c)));
                    }
                    Err(e) => steady.fail(0, &e),
                }
            }
            Err(e) => {
                let note = Some(format!("no equilibrium found: {e}"));
                fixed.note = note.clone();
                steady.note = note;
            }
        }
        self.checks.extend([fixed.finish(), steady.finish()]);
    }

    fn blend(&mut self) {
        let ctx = self.ctx;
        let sys = ctx.system();
        let seed = self.seed;
        let results: Vec<Result<[f64; 4]>> = (0..self.config.verify.v_samples)
            .into_par_iter()
            .map(|i| {
                let v = sample_v(ctx, &mut stream(seed, 3, i as u64))?;
                let h = h_of(sys, &v)?;
                let mut out = [0.0f64; 4];
                for fam in ctx.families() {
                    let b = fam.blend(&v)?;
                    let f = b.function();
                    let kernel = fam.kernel();
                    out[0] = out[0].max(max_norm(&kernel.apply(&f)) / (1.0 + kernel.matrix_norm()));
                    out[1] = out[1].max((f.slope_at_zero() - 1.0).abs());
                    out[2] = out[2].max(f.sup_norm() - h);
                    for mu in 0..v.len() {
                        out[3] = out[3].max(b.deriv_function(mu).sup_norm() - h);
                    }
                }
                Ok(out)
            })
            .collect();
        let mut tallies = [
            Tally::new("blend.annihilation", 1e-10),
            Tally::new("blend.slope_at_zero", 1e-12),
            Tally::new("blend.h_bound", 1e-12),
            Tally::new("blend.dh_bound", 1e-12),
        ];
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(values) => {
                    for (t, v) in tallies.iter_mut().zip(values) {
                        t.push(i, v);
                    }
                }
                Err(e) => tallies.iter_mut().for_each(|t| t.fail(i, &e)),
            }
        }
        self.checks.extend(tallies.map(Tally::finish));

        let mut overlap = Tally::new("blend.overlap", 1e-12);
        let mut dh_fd = Tally::new("blend.dh_fd", 1e-5);
        for fam in ctx.families() {
            if fam.is_constant() {
                overlap.note = Some("single level".into());
                dh_fd.note = Some("H is constant".into());
                continue;
            }
            let levels = fam.materialized().len();
            for j in 1..levels {
                for q in 0..10u64 {
                    let index = fam.nu() * 10_000 + j * 100 + q as usize;
                    let mut rng = stream(seed, 4, index as u64);
                    let r = overlap_point(fam, j, &mut rng).and_then(|v| {
                        let lower = fam.blend_at_level(j, &v)?.function();
                        let upper = fam.blend_at_level(j + 1, &v)?.function();
                        Ok(lower.sub(&upper)?.sup_norm())
                    });
                    match r {
                        Ok(d) => overlap.push(index, d),
                        Err(e) => overlap.fail(index, &e),
                    }
                    let r = transition_point(fam, j, &mut rng).and_then(|v| dh_fd_error(fam, &v));
                    match r {
                        Ok(d) => dh_fd.push(index, d),
                        Err(e) => dh_fd.fail(index, &e),
                    }
                }
            }
        }
        self.checks.extend([overlap.finish(), dh_fd.finish()]);
    }

    fn r_bound(&mut self) {
        let ctx = self.ctx;
        let sys = ctx.system();
        let mut tally = Tally::new("chart.r_bound", 1.0).strict();
        if !sys.v_domain().is_bounded() {
            tally.note = Some("V is the whole space".into());
            self.checks.push(tally.finish());
            return;
        }
        let seed = self.seed;
        let results: Vec<Result<f64>> = (0..self.config.verify.r_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, 7, i as u64);
                let eta = sample_eta(sys, &mut rng)?;
                let v = sample_v(ctx, &mut rng)?;
                let r = ctx.r_map(&eta, &v)?;
                Ok(max_norm(&r) / (0.5 * sys.v_domain().dist_to_complement(&v)))
            })
            .collect();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => tally.push(i, v),
                Err(e) => tally.fail(i, &e),
            }
        }
        self.checks.push(tally.finish());
    }

    fn derivatives(&mut self) {
        let ctx = self.ctx;
        let sys = ctx.system();
        let seed = self.seed;
        let results: Vec<Result<f64>> = (0..50usize)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, 8, i as u64);
                let v = sample_v(ctx, &mut rng)?;
                let eta = sample_eta(sys, &mut rng)?;
                let mut worst = 0.0f64;
                for e in sys.g_exprs() {
                    worst = worst.max(grad_fd_error(|x| e.eval(x), &e.grad(&v)?, &v)?);
                }
                for e in sys.delay_exprs() {
                    worst = worst.max(grad_fd_error(|x| e.eval(x), &e.grad(&eta)?, &eta)?);
                }
                Ok(worst)
            })
            .collect();
        let mut tally = Tally::new("exprdiff.grad_fd", 1e-6);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => tally.push(i, v),
                Err(e) => tally.fail(i, &e),
            }
        }
        self.checks.push(tally.finish());

        let (seed, scale) = (self.seed, self.scale());
        let results: Vec<Result<f64>> = (0..20usize)
            .into_par_iter()
            .map(|i| {
                let phi = sample_u(ctx, &mut stream(seed, 9, i as u64), scale)?;
                let jump = derivative_jump(sys, &phi)?;
                Ok((jump - max_norm(&sys.manifold_residual(&phi)?)).abs())
            })
            .collect();
        let mut tally = Tally::new("integrator.jump_formula", 1e-10);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => tally.push(i, v),
                Err(e) => tally.fail(i, &e),
            }
        }
        self.checks.push(tally.finish());
    }

    fn contraction(&mut self) -> ContractionSummary {
        let mut all = Tally::new("chart.contraction", 0.55);
        let mut verified = Tally::new("chart.contraction_verified", 0.501);
        for (i, t) in self.traces.iter().enumerate() {
            all.push(i, t.max_ratio);
            if t.verified {
                verified.push(i, t.max_ratio);
            }
        }
        self.checks.extend([all.finish(), verified.finish()]);
        ContractionSummary {
            traces: self.traces.len(),
            nontrivial_traces: self.traces.iter().filter(|t| t.nontrivial).count(),
            max_observed_ratio: self.traces.iter().map(|t| t.max_ratio).fold(0.0, f64::max),
            max_operator_norm: self.traces.iter().map(|t| t.norms.0).fold(0.0, f64::max),
            max_entry_sum: self.traces.iter().map(|t| t.norms.1).fold(0.0, f64::max),
        }
    }

    fn kernel(&mut self) -> Vec<LevelSummary> {
        let mut lam = Tally::new("kernel.annihilation", 1e-10);
        let mut slope = Tally::new("kernel.slope_at_zero", 1e-12);
        let mut bound = Tally::new("kernel.eps_bound", 1.0).strict();
        let mut levels = Vec::new();
        for fam in self.ctx.families() {
            let kernel = fam.kernel();
            for level in fam.materialized() {
                let index = fam.nu() * 100 + level.index;
                lam.push(
                    index,
                    max_norm(&kernel.apply(&level.psi)) / (1.0 + kernel.matrix_norm()),
                );
                slope.push(index, (level.psi.slope_at_zero() - 1.0).abs());
                bound.push(index, level.psi.sup_norm() / level.eps);
                levels.push(LevelSummary {
                    nu: fam.nu() + 1,
                    level: level.index,
                    a_bound: level.a_bound,
                    h_min: level.h_min,
                    eps: level.eps,
                    width: level.width,
                    psi_sup_norm: level.psi.sup_norm(),
                });
            }
        }
        self.checks.extend([lam.finish(), slope.finish(), bound.finish()]);
        levels
    }
}

/// `max |J − J_fd| / max |J|` for `J = (I − D₂R)⁻¹` against central differences of `S_η⁻¹`.
pub fn dsinv_fd_error(ctx: &ChartContext, eta: &[f64], y: &[f64]) -> Result<f64> {
    let j = ctx.dsinv(eta, y)?.inverse;
    let p = y.len();
    let mut worst = 0.0f64;
    for col in 0..p {
        let step = 1e-6 * (1.0 + y[col].abs());
        let mut plus = y.to_vec();
        let mut minus = y.to_vec();
        plus[col] += step;
        minus[col] -= step;
        let a = ctx.invert_s(eta, &plus)?.0;
        let b = ctx.invert_s(eta, &minus)?.0;
        for row in 0..p {
            let fd = (a[row] - b[row]) / (2.0 * step);
            worst = worst.max((fd - j[(row, col)]).abs());
        }
    }
    Ok(worst / j.amax())
}

/// `max_μ |D_μH(v) − FD_μ|_sup / max_μ |D_μH(v)|_sup` for one family.
pub fn dh_fd_error(fam: &crate::blend::HFamily, v: &[f64]) -> Result<f64> {
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for mu in 0..v.len() {
        let dh = fam.dh_eval(mu, v)?;
        let step = 1e-6 * (1.0 + v[mu].abs());
        let mut plus = v.to_vec();
        let mut minus = v.to_vec();
        plus[mu] += step;
        minus[mu] -= step;
        let mut fd = fam.h_eval(&plus)?.sub(&fam.h_eval(&minus)?)?;
        fd = fd.scale(1.0 / (2.0 * step));
        scale = scale.max(dh.sup_norm());
        worst = worst.max(fd.sub(&dh)?.sup_norm());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// `|∇f − FD|_∞ / max(|∇f|_∞, 1e−3)`.
pub fn grad_fd_error(f: impl Fn(&[f64]) -> Result<f64>, grad: &[f64], x: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let step = 1e-6 * (1.0 + x[i].abs());
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += step;
        minus[i] -= step;
        let fd = (f(&plus)? - f(&minus)?) / (2.0 * step);
        worst = worst.max((fd - grad[i]).abs());
    }
    Ok(worst / max_norm(grad).max(1e-3))
}

/// Runs the whole suite. Failure to build the system becomes a failed
/// `system.load` check rather than an error.
pub fn run(config: &Config, seed: u64) -> ChartReport {
    let mut report = ChartReport {
        schema: REPORT_SCHEMA,
        system: config.system.name.clone(),
        seed,
        passed: false,
        checks: Vec::new(),
        contraction: None,
        levels: Vec::new(),
        samples: Vec::new(),
    };
    let ctx = match config.context() {
        Ok(ctx) => ctx,
        Err(e) => {
            let mut load = Tally::new("system.load", 0.0);
            load.fail(0, &e);
            report.checks.push(load.finish());
            return report;
        }
    };
    let mut suite = Suite {
        ctx: &ctx,
        config,
        seed,
        checks: Vec::new(),
        samples: Vec::new(),
        traces: Vec::new(),
    };
    suite.identities();
    suite.lifts();
    suite.members();
    suite.blend();
    suite.r_bound();
    suite.derivatives();
    let contraction = suite.contraction();
    let levels = suite.kernel();
    report.passed = suite.checks.iter().all(|c| c.passed);
    report.checks = suite.checks;
    report.samples = suite.samples;
    report.contraction = Some(contraction);
    report.levels = levels;
    report
}

pub fn report_json(report: &ChartReport) -> String {
    serde_json::to_string_pretty(report).expect("plain data serializes")
}
