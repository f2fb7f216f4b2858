//! Acceptance criteria 1–10 on the bundled systems, seeds 42, 43 and 44.
//!
//! Errors are measured with oracles written in this file (exact cubic extrema,
//! the functionals of `L`, finite differences, closed-form solutions) rather
//! than with the library's own norms. Prints one line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::E;
use std::process::ExitCode;
use std::time::Instant;

use almostgraph::chart::{ChartContext, FixedPointTrace};
use almostgraph::config::{bundled, Config, BUNDLED};
use almostgraph::fnspace::{GridFn1, GridFnN};
use almostgraph::integrator::{integrate, IntegrateOptions};
use almostgraph::kernel_basis::{KernelBasis, KernelOptions};
use almostgraph::sample::{
    constructed_member, equilibrium, overlap_point, sample_eta, sample_o, sample_u, sample_v, sample_x0_o, stream,
    transition_point,
};
use almostgraph::system::{Atom, SystemDef};
use almostgraph::Result;

const SEEDS: [u64; 3] = [42, 43, 44];

// ---------------------------------------------------------------- oracles

/// Power-basis coefficients of the Hermite cubic on one interval, in the
/// local coordinate `s ∈ [0, 1]`.
fn cubic(v0: f64, v1: f64, s0: f64, s1: f64, h: f64) -> [f64; 4] {
    [
        v0,
        h * s0,
        3.0 * (v1 - v0) - h * (2.0 * s0 + s1),
        2.0 * (v0 - v1) + h * (s0 + s1),
    ]
}

fn poly(c: &[f64; 4], s: f64) -> f64 {
    ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
}

fn dpoly(c: &[f64; 4], s: f64) -> f64 {
    (3.0 * c[3] * s + 2.0 * c[2]) * s + c[1]
}

/// Pieces of `a − b` (or of `a` when `b` is `None`).
fn pieces(a: &GridFn1, b: Option<&GridFn1>) -> Vec<[f64; 4]> {
    let grid = a.grid();
    let h = grid.spacing();
    let dof = |i: usize| {
        let (v, s) = (a.values(), a.slopes());
        match b {
            Some(b) => (v[i] - b.values()[i], s[i] - b.slopes()[i]),
            None => (v[i], s[i]),
        }
    };
    (0..grid.intervals())
        .map(|i| {
            let (v0, s0) = dof(i);
            let (v1, s1) = dof(i + 1);
            cubic(v0, v1, s0, s1, h)
        })
        .collect()
}

fn sup_of(pieces: &[[f64; 4]]) -> f64 {
    let mut best = 0.0f64;
    for c in pieces {
        best = best.max(c[0].abs()).max(poly(c, 1.0).abs());
        // p'(s) = c1 + 2 c2 s + 3 c3 s²
        let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
        let mut roots = Vec::new();
        if qa.abs() > 1e-300 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                roots.push((-qb + sq) / (2.0 * qa));
                roots.push((-qb - sq) / (2.0 * qa));
            }
        } else if qb.abs() > 1e-300 {
            roots.push(-qc / qb);
        }
        for s in roots {
            if (0.0..=1.0).contains(&s) {
                best = best.max(poly(c, s).abs());
            }
        }
    }
    best
}

fn deriv_sup_of(pieces: &[[f64; 4]], h: f64) -> f64 {
    let mut best = 0.0f64;
    for c in pieces {
        best = best.max(dpoly(c, 0.0).abs()).max(dpoly(c, 1.0).abs());
        if c[3] != 0.0 {
            let s = -c[2] / (3.0 * c[3]);
            if (0.0..=1.0).contains(&s) {
                best = best.max(dpoly(c, s).abs());
            }
        }
    }
    best / h
}

fn sup(f: &GridFn1) -> f64 {
    sup_of(&pieces(f, None))
}

fn c1(f: &GridFn1) -> f64 {
    let p = pieces(f, None);
    sup_of(&p) + deriv_sup_of(&p, f.grid().spacing())
}

fn sup_diff(a: &GridFn1, b: &GridFn1) -> f64 {
    sup_of(&pieces(a, Some(b)))
}

fn c1_diff(a: &GridFn1, b: &GridFn1) -> f64 {
    let p = pieces(a, Some(b));
    sup_of(&p) + deriv_sup_of(&p, a.grid().spacing())
}

fn c1_vec(f: &GridFnN) -> f64 {
    f.components().iter().map(c1).fold(0.0, f64::max)
}

/// Worst per-component `|x_ν − y_ν|_{C¹}` relative to `1 + |y|_{C¹}`.
fn c1_rel(x: &GridFnN, y: &GridFnN) -> f64 {
    let worst = x
        .components()
        .iter()
        .zip(y.components())
        .map(|(a, b)| c1_diff(a, b))
        .fold(0.0, f64::max);
    worst / (1.0 + c1_vec(y))
}

fn eval(f: &GridFn1, t: f64) -> f64 {
    let grid = f.grid();
    let h = grid.spacing();
    let x = ((t + grid.r()) / h).clamp(0.0, grid.intervals() as f64);
    let i = (x.floor() as usize).min(grid.intervals() - 1);
    let c = cubic(f.values()[i], f.values()[i + 1], f.slopes()[i], f.slopes()[i + 1], h);
    poly(&c, x - i as f64)
}

fn integral(f: &GridFn1) -> f64 {
    let h = f.grid().spacing();
    let (v, s) = (f.values(), f.slopes());
    (0..f.grid().intervals())
        .map(|i| h * (v[i] + v[i + 1]) / 2.0 + h * h * (s[i] - s[i + 1]) / 12.0)
        .sum()
}

fn apply_l(sys: &SystemDef, phi: &GridFnN) -> Vec<f64> {
    sys.l()
        .rows()
        .iter()
        .map(|row| {
            row.atoms()
                .iter()
                .map(|atom| match *atom {
                    Atom::Point {
                        component,
                        time,
                        weight,
                    } => weight * eval(&phi.components()[component], time),
                    Atom::Integral { component, weight } => weight * integral(&phi.components()[component]),
                })
                .sum()
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l_rel(sys: &SystemDef, before: &GridFnN, after: &GridFnN) -> f64 {
    let a = apply_l(sys, before);
    let b = apply_l(sys, after);
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    max_abs(&diff) / (1.0 + max_abs(&a))
}

fn hat(sys: &SystemDef, phi: &GridFnN) -> Result<Vec<f64>> {
    let eta = apply_l(sys, phi);
    let mut v = Vec::new();
    for d in sys.delay_exprs() {
        let delay = d.eval(&eta)?;
        v.extend(phi.components().iter().map(|c| eval(c, -delay)));
    }
    Ok(v)
}

fn slope0(phi: &GridFnN) -> Vec<f64> {
    phi.components().iter().map(|c| *c.slopes().last().unwrap()).collect()
}

/// `φ'(0) − g(φ̂)`.
fn residual(sys: &SystemDef, phi: &GridFnN) -> Result<Vec<f64>> {
    let v = hat(sys, phi)?;
    sys.g_exprs()
        .iter()
        .zip(slope0(phi))
        .map(|(g, s)| Ok(s - g.eval(&v)?))
        .collect()
}

/// `h(v)` with the gradient of `g` taken by central differences.
fn h_bound(sys: &SystemDef, v: &[f64]) -> Result<f64> {
    let nk = sys.nk() as f64;
    let mut max_g = 0.0f64;
    let mut max_grad = 0.0f64;
    for g in sys.g_exprs() {
        max_g = max_g.max(g.eval(v)?.abs());
        max_grad = max_grad.max(max_abs(&fd_grad(|x| g.eval(x), v)?));
    }
    let numer = match sys.v_domain().as_box() {
        Some((lo, hi)) => box_dist(&lo, &hi, v).min(1.0),
        None => 1.0,
    };
    Ok(numer / (2.0 * nk * nk * (1.0 + max_grad + max_g)))
}

fn box_dist(lo: &[f64], hi: &[f64], v: &[f64]) -> f64 {
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(x, (a, b))| (x - a).min(b - x))
        .fold(f64::INFINITY, f64::min)
}

fn fd_grad(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64]) -> Result<Vec<f64>> {
    (0..x.len())
        .map(|i| {
            let step = 1e-6 * (1.0 + x[i].abs());
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += step;
            minus[i] -= step;
            Ok((f(&plus)? - f(&minus)?) / (2.0 * step))
        })
        .collect()
}

fn trace_ratio(trace: &FixedPointTrace) -> f64 {
    let steps: Vec<f64> = trace
        .iterates
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();
    steps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// `H` and every `D_μ H` bounded by `h` at every iterate.
fn h_bounds_hold(ctx: &ChartContext, trace: &FixedPointTrace) -> Result<bool> {
    for v in &trace.iterates {
        let h = h_bound(ctx.system(), v)?;
        for fam in ctx.families() {
            let b = fam.blend(v)?;
            if sup(&b.function()) > h + 1e-12 {
                return Ok(false);
            }
            for mu in 0..v.len() {
                if sup(&b.deriv_function(mu)) > h + 1e-12 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------- tallies

struct Part {
    name: String,
    tolerance: f64,
    strict: bool,
    worst: f64,
    samples: usize,
    failures: usize,
    first_failure: Option<String>,
}

impl Part {
    fn ok(&self, v: f64) -> bool {
        if self.strict {
            v < self.tolerance
        } else {
            v <= self.tolerance
        }
    }
}

struct Criterion {
    id: usize,
    title: &'static str,
    parts: Vec<Part>,
    notes: Vec<String>,
}

impl Criterion {
    fn note(&mut self, note: String) {
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }
}

impl Criterion {
    fn new(id: usize, title: &'static str) -> Self {
        Criterion {
            id,
            title,
            parts: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn part(&mut self, name: &str, tolerance: f64, strict: bool) -> &mut Part {
        let index = match self.parts.iter().position(|p| p.name == name) {
            Some(i) => i,
            None => {
                self.parts.push(Part {
                    name: name.into(),
                    tolerance,
                    strict,
                    worst: f64::NEG_INFINITY,
                    samples: 0,
                    failures: 0,
                    first_failure: None,
                });
                self.parts.len() - 1
            }
        };
        &mut self.parts[index]
    }

    fn record(&mut self, name: &str, tolerance: f64, where_: &str, value: Result<f64>) {
        self.record_with(name, tolerance, false, where_, value);
    }

    fn record_strict(&mut self, name: &str, tolerance: f64, where_: &str, value: Result<f64>) {
        self.record_with(name, tolerance, true, where_, value);
    }

    fn record_with(&mut self, name: &str, tolerance: f64, strict: bool, where_: &str, value: Result<f64>) {
        let part = self.part(name, tolerance, strict);
        part.samples += 1;
        let failure = match value {
            Ok(v) => {
                if v > part.worst || v.is_nan() {
                    part.worst = v;
                }
                (!part.ok(v)).then(|| format!("{where_}: {v:.3e}"))
            }
            Err(e) => Some(format!("{where_}: {e}")),
        };
        if let Some(f) = failure {
            part.failures += 1;
            part.first_failure.get_or_insert(f);
        }
    }

    fn passed(&self) -> bool {
        !self.parts.is_empty() && self.parts.iter().all(|p| p.failures == 0)
    }

    fn print(&self) {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let parts: Vec<String> = self
            .parts
            .iter()
            .map(|p| {
                let cmp = if p.strict { "<" } else { "<=" };
                let tol = if p.tolerance >= 0.01 {
                    format!("{}", p.tolerance)
                } else {
                    format!("{:.0e}", p.tolerance)
                };
                format!("{} {:.2e} {cmp} {tol} (n={})", p.name, p.worst, p.samples)
            })
            .collect();
        println!(
            "criterion {:>2} {verdict}  {}: {}",
            self.id,
            self.title,
            parts.join("; ")
        );
        for p in self.parts.iter().filter(|p| p.failures > 0) {
            println!(
                "             {} failing sample(s) in {}, first {}",
                p.failures,
                p.name,
                p.first_failure.as_deref().unwrap_or("?")
            );
        }
        for n in &self.notes {
            println!("             {n}");
        }
    }
}

// ---------------------------------------------------------------- criteria

struct Run<'a> {
    name: &'a str,
    seed: u64,
    config: &'a Config,
    ctx: &'a ChartContext,
}

impl Run<'_> {
    fn at(&self, what: &str, i: usize) -> String {
        format!("{} seed {} {what} #{i}", self.name, self.seed)
    }

    fn scale(&self) -> f64 {
        self.config.verify.scale
    }
}

fn trace_parts(c3: &mut Criterion, ctx: &ChartContext, trace: &FixedPointTrace, at: &str) {
    let ratio = trace_ratio(trace);
    c3.record("all traces", 0.55, at, Ok(ratio));
    match h_bounds_hold(ctx, trace) {
        Ok(true) => c3.record("h-verified traces", 0.501, at, Ok(ratio)),
        Ok(false) => {}
        Err(e) => c3.record("h-verified traces", 0.501, at, Err(e)),
    }
}

fn identities(run: &Run, c1: &mut Criterion, c3: &mut Criterion, c6: &mut Criterion, c8: &mut Criterion) {
    let ctx = run.ctx;
    let sys = ctx.system();
    let samples = run.config.verify.identity_samples;
    for i in 0..samples {
        let at = run.at("U", i);
        let r = sample_u(ctx, &mut stream(run.seed, 1, i as u64), run.scale()).and_then(|phi| {
            let chi = ctx.a_map(&phi)?;
            let b = ctx.b_map_traced(&chi)?;
            Ok((phi, chi, b))
        });
        match r {
            Ok((phi, chi, b)) => {
                c1.record("B(A(phi))", 1e-8, &at, Ok(c1_rel(&b.phi, &phi)));
                c6.record("A", 1e-10, &at, Ok(l_rel(sys, &phi, &chi)));
                trace_parts(c3, ctx, &b.trace, &at);
            }
            Err(e) => c1.record("B(A(phi))", 1e-8, &at, Err(e)),
        }
    }
    for i in 0..samples {
        let at = run.at("O", i);
        let r = sample_o(ctx, &mut stream(run.seed, 2, i as u64), run.scale()).and_then(|chi| {
            let b = ctx.b_map_traced(&chi)?;
            let back = ctx.a_map(&b.phi)?;
            Ok((chi, b, back))
        });
        match r {
            Ok((chi, b, back)) => {
                c1.record("A(B(chi))", 1e-8, &at, Ok(c1_rel(&back, &chi)));
                c6.record("B", 1e-10, &at, Ok(l_rel(sys, &chi, &b.phi)));
                trace_parts(c3, ctx, &b.trace, &at);
                if i < 20 {
                    c8.record("dSinv", 1e-5, &at, dsinv_fd(ctx, &b.eta, &chi));
                }
            }
            Err(e) => c1.record("A(B(chi))", 1e-8, &at, Err(e)),
        }
    }
}

/// `(I − D₂R)⁻¹` against central differences of `y ↦ S_η⁻¹(y)` at `y = χ̂`.
fn dsinv_fd(ctx: &ChartContext, eta: &[f64], chi: &GridFnN) -> Result<f64> {
    let y = hat(ctx.system(), chi)?;
    let j = ctx.dsinv(eta, &y)?.inverse;
    let mut worst = 0.0f64;
    for col in 0..y.len() {
        let step = 1e-6 * (1.0 + y[col].abs());
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[col] += step;
        minus[col] -= step;
        let a = ctx.invert_s(eta, &plus)?.0;
        let b = ctx.invert_s(eta, &minus)?.0;
        for row in 0..y.len() {
            worst = worst.max(((a[row] - b[row]) / (2.0 * step) - j[(row, col)]).abs());
        }
    }
    Ok(worst / j.amax())
}

fn lifts(run: &Run, c2: &mut Criterion, c6: &mut Criterion, c9: &mut Criterion) {
    let ctx = run.ctx;
    let sys = ctx.system();
    for i in 0..run.config.verify.lift_samples {
        let at = run.at("X0", i);
        let r = sample_x0_o(ctx, &mut stream(run.seed, 5, i as u64), run.scale()).and_then(|zeta| {
            let lift = ctx.lift(&zeta)?;
            let a = ctx.a_map(&lift.phi)?;
            Ok((zeta, lift.phi, a))
        });
        let (zeta, phi, a) = match r {
            Ok(x) => x,
            Err(e) => {
                c2.record("residual of B(zeta)", 1e-9, &at, Err(e));
                continue;
            }
        };
        c2.record(
            "residual of B(zeta)",
            1e-9,
            &at,
            residual(sys, &phi).map(|r| max_abs(&r)),
        );
        c2.record("A(phi)'(0) on X_f", 1e-10, &at, Ok(max_abs(&slope0(&a))));
        c6.record("lift", 1e-10, &at, Ok(l_rel(sys, &zeta, &phi)));
        // x'(0+) is the first recorded slope; a tiny step keeps the stages inside U.
        let options = IntegrateOptions {
            t_end: 1e-6 * sys.r(),
            step: 1e-6 * sys.r(),
            ..IntegrateOptions::default()
        };
        let jump = integrate(sys, &phi, options).map(|traj| {
            let diff: Vec<f64> = traj.slopes()[0].iter().zip(slope0(&phi)).map(|(a, b)| a - b).collect();
            max_abs(&diff)
        });
        c9.record("lifted jump", 1e-9, &at, jump);
    }
}

fn members(run: &Run, c7: &mut Criterion) {
    let ctx = run.ctx;
    let sys = ctx.system();
    let c = match equilibrium(sys, &sys.witness().value_at_zero()) {
        Ok(c) => c,
        Err(e) => {
            c7.record("A(phi) - phi", 1e-10, &run.at("equilibrium", 0), Err(e));
            return;
        }
    };
    for i in 0..run.config.verify.member_samples {
        let at = run.at("member", i);
        let r = constructed_member(sys, &c, &mut stream(run.seed, 6, i as u64), run.scale()).and_then(|phi| {
            let a = ctx.a_map(&phi)?;
            Ok((phi, a))
        });
        match r {
            Ok((phi, a)) => {
                let moved = phi
                    .components()
                    .iter()
                    .zip(a.components())
                    .map(|(x, y)| c1_diff(y, x))
                    .fold(0.0, f64::max);
                c7.record("A(phi) - phi", 1e-10, &at, Ok(moved));
                let membership = residual(sys, &phi).map(|r| max_abs(&r).max(max_abs(&slope0(&phi))));
                c7.record("member in X0 and X_f", 1e-10, &at, membership);
            }
            Err(e) => c7.record("A(phi) - phi", 1e-10, &at, Err(e)),
        }
    }
}

fn blend(run: &Run, c5: &mut Criterion, c8: &mut Criterion) {
    let ctx = run.ctx;
    let sys = ctx.system();
    for i in 0..run.config.verify.v_samples {
        let at = run.at("v", i);
        let v = match sample_v(ctx, &mut stream(run.seed, 3, i as u64)) {
            Ok(v) => v,
            Err(e) => {
                c5.record("annihilation", 1e-10, &at, Err(e));
                continue;
            }
        };
        let h = match h_bound(sys, &v) {
            Ok(h) => h,
            Err(e) => {
                c5.record("|H| - h", 1e-12, &at, Err(e));
                continue;
            }
        };
        for fam in ctx.families() {
            let b = match fam.blend(&v) {
                Ok(b) => b,
                Err(e) => {
                    c5.record("annihilation", 1e-10, &at, Err(e));
                    continue;
                }
            };
            let f = b.function();
            let mut embedded = GridFnN::zeros(sys.grid(), sys.n()).into_components();
            embedded[fam.nu()] = f.clone();
            let embedded = GridFnN::new(embedded).unwrap();
            c5.record("annihilation", 1e-10, &at, Ok(max_abs(&apply_l(sys, &embedded))));
            c5.record("H'(0) - 1", 1e-12, &at, Ok((f.slopes().last().unwrap() - 1.0).abs()));
            c5.record("|H| - h", 1e-12, &at, Ok(sup(&f) - h));
            let dh = (0..v.len()).map(|mu| sup(&b.deriv_function(mu))).fold(0.0, f64::max);
            c5.record("|DH| - h", 1e-12, &at, Ok(dh - h));
        }
    }
    let mut adjacent = 0;
    for fam in ctx.families() {
        if fam.is_constant() {
            continue;
        }
        for j in 1..fam.materialized().len() {
            adjacent += 1;
            for q in 0..10u64 {
                let index = fam.nu() * 10_000 + j * 100 + q as usize;
                let at = run.at("level boundary", index);
                let mut rng = stream(run.seed, 4, index as u64);
                let overlap = overlap_point(fam, j, &mut rng).and_then(|v| {
                    let lower = fam.blend_at_level(j, &v)?.function();
                    let upper = fam.blend_at_level(j + 1, &v)?.function();
                    Ok(sup_diff(&lower, &upper))
                });
                c5.record("overlap", 1e-12, &at, overlap);
                let fd = transition_point(fam, j, &mut rng).and_then(|v| dh_fd(fam, &v));
                c8.record("DH", 1e-5, &at, fd);
            }
        }
    }
    if adjacent == 0 {
        c5.note(format!("{}: single level, no overlaps to compare", run.name));
    }
}

fn dh_fd(fam: &almostgraph::blend::HFamily, v: &[f64]) -> Result<f64> {
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for mu in 0..v.len() {
        let dh = fam.dh_eval(mu, v)?;
        let step = 1e-6 * (1.0 + v[mu].abs());
        let mut plus = v.to_vec();
        let mut minus = v.to_vec();
        plus[mu] += step;
        minus[mu] -= step;
        let hp = fam.h_eval(&plus)?;
        let hm = fam.h_eval(&minus)?;
        let fd = GridFn1::new(
            hp.grid(),
            hp.values()
                .iter()
                .zip(hm.values())
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect(),
            hp.slopes()
                .iter()
                .zip(hm.slopes())
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect(),
        )?;
        scale = scale.max(sup(&dh));
        worst = worst.max(sup_diff(&fd, &dh));
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

fn grads(run: &Run, c8: &mut Criterion) {
    let ctx = run.ctx;
    let sys = ctx.system();
    for i in 0..50usize {
        let at = run.at("gradient", i);
        let mut rng = stream(run.seed, 8, i as u64);
        let r = sample_v(ctx, &mut rng).and_then(|v| Ok((sample_eta(sys, &mut rng)?, v)));
        let (eta, v) = match r {
            Ok(x) => x,
            Err(e) => {
                c8.record("grad", 1e-6, &at, Err(e));
                continue;
            }
        };
        let exprs = sys
            .g_exprs()
            .iter()
            .map(|e| (e, &v))
            .chain(sys.delay_exprs().iter().map(|e| (e, &eta)));
        for (e, x) in exprs {
            let err = e.grad(x).and_then(|g| {
                let fd = fd_grad(|y| e.eval(y), x)?;
                let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
                Ok(max_abs(&diff) / max_abs(&g).max(1e-3))
            });
            c8.record("grad", 1e-6, &at, err);
        }
    }
}

fn r_bound(run: &Run, c10: &mut Criterion) {
    let ctx = run.ctx;
    let sys = ctx.system();
    let Some((lo, hi)) = sys.v_domain().as_box() else {
        c10.note(format!("{}: V is the whole space, criterion does not apply", run.name));
        return;
    };
    for i in 0..run.config.verify.r_samples {
        let at = run.at("(eta, v)", i);
        let mut rng = stream(run.seed, 7, i as u64);
        let ratio = sample_eta(sys, &mut rng).and_then(|eta| {
            let v = sample_v(ctx, &mut rng)?;
            let r = ctx.r_map(&eta, &v)?;
            Ok(max_abs(&r) / (0.5 * box_dist(&lo, &hi, &v)))
        });
        c10.record_strict("|R| / (dist/2)", 1.0, &at, ratio);
    }
}

/// `λψ`, `ψ'(0)` and `|ψ|_C` for `ε` down to `1e−4` at `N = 512`, `r = 1`.
fn psi_criterion(c4: &mut Criterion) {
    for (name, _) in BUNDLED {
        let mut config = bundled(name).unwrap();
        config.system.r = 1.0;
        config.system.intervals = 512;
        let sys = match config.build_system() {
            Ok(s) => s,
            Err(e) => {
                c4.record("lambda psi", 1e-10, name, Err(e));
                continue;
            }
        };
        for nu in 0..sys.n() {
            let basis = match KernelBasis::build(&sys, nu, KernelOptions::default()) {
                Ok(b) => b,
                Err(e) => {
                    c4.record("lambda psi", 1e-10, name, Err(e));
                    continue;
                }
            };
            for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
                let at = format!("{name} nu={} eps={eps:.0e}", nu + 1);
                match basis.make_psi(eps) {
                    Ok(psi) => {
                        let mut embedded = GridFnN::zeros(sys.grid(), sys.n()).into_components();
                        embedded[nu] = psi.clone();
                        let lam = max_abs(&apply_l(&sys, &GridFnN::new(embedded).unwrap()));
                        c4.record(
                            "lambda psi / (1+|M|)",
                            1e-10,
                            &at,
                            Ok(lam / (1.0 + basis.matrix_norm())),
                        );
                        c4.record(
                            "psi'(0) - 1",
                            1e-12,
                            &at,
                            Ok((psi.slopes().last().unwrap() - 1.0).abs()),
                        );
                        c4.record_strict("|psi| / eps", 1.0, &at, Ok(sup(&psi) / eps));
                    }
                    Err(e) => c4.record_strict("|psi| / eps", 1.0, &at, Err(e)),
                }
            }
        }
    }
    let h = 1.0 / 512.0;
    c4.note(format!(
        "a cubic with slope 1 at 0 on an interval of length h has sup >= h/18 (Markov) = {:.3e}; \
         the one-interval slope cardinal gives (4/27)h = {:.3e}",
        h / 18.0,
        4.0 / 27.0 * h
    ));
}

fn hand_system(intervals: usize) -> SystemDef {
    let text = format!(
        r#"
        [system]
        name = "constant_delay"
        n = 1
        k = 1
        r = 1.0
        N = {intervals}
        delays = ["1"]
        g = ["-y1"]
        V = {{ kind = "full" }}
        W = {{ kind = "full" }}
        witness = {{ constant = [1.0] }}
        [[system.L]]
        atoms = [{{ kind = "point", component = 1, time = 0.0 }}]
        "#
    );
    Config::from_toml(&text, None).unwrap().build_system().unwrap()
}

fn integrator_criterion(c9: &mut Criterion) {
    // x' = −x(t − 1), φ ≡ 1: x(t) = 1 − t on [0, 1].
    let sys = hand_system(64);
    let options = IntegrateOptions {
        t_end: 1.0,
        step: 1e-3,
        ..IntegrateOptions::default()
    };
    let err = integrate(&sys, &sys.constant(&[1.0]), options).and_then(|traj| {
        let mut worst = 0.0f64;
        for (t, x) in traj.times().iter().zip(traj.states()) {
            worst = worst.max((x[0] - (1.0 - t)).abs());
        }
        for i in 0..1000 {
            let t = (i as f64 + 0.37) / 1000.0;
            worst = worst.max((traj.eval(t, 0)? - (1.0 - t)).abs());
        }
        Ok(worst)
    });
    c9.record("x = 1 - t", 1e-6, "h_s=1e-3", err);

    // Same equation, φ(s) = e^s: x = 1 + 1/e − e^{t−1} on [0, 1] and
    // x = e^{t−2} − (1 + 1/e)(t − 1) on [1, 2].
    let sys = hand_system(1024);
    let phi = GridFnN::new(vec![GridFn1::from_fn(sys.grid(), f64::exp, f64::exp)]).unwrap();
    let exact = |t: f64| {
        if t <= 1.0 {
            1.0 + 1.0 / E - (t - 1.0).exp()
        } else {
            (t - 2.0).exp() - (1.0 + 1.0 / E) * (t - 1.0)
        }
    };
    let floor = 1e-11;
    let mut errors = Vec::new();
    for k in 0..8 {
        let step = 0.25 / f64::powi(2.0, k);
        let options = IntegrateOptions {
            t_end: 2.0,
            step,
            ..IntegrateOptions::default()
        };
        match integrate(&sys, &phi, options) {
            Ok(traj) => {
                let e = traj
                    .times()
                    .iter()
                    .zip(traj.states())
                    .map(|(t, x)| (x[0] - exact(*t)).abs())
                    .fold(0.0, f64::max);
                errors.push((step, e));
                if e < floor {
                    break;
                }
            }
            Err(e) => {
                c9.record("halving ratio", 8.0, "order study", Err(e));
                return;
            }
        }
    }
    let mut pairs = 0;
    for w in errors.windows(2) {
        let ((h0, e0), (_, e1)) = (w[0], w[1]);
        if e1 < floor {
            break;
        }
        pairs += 1;
        // Recorded as 8 / ratio so that "at most 1" means "ratio at least 8".
        c9.record("8/halving ratio", 1.0, &format!("h_s={h0}"), Ok(8.0 * e1 / e0));
    }
    if pairs == 0 {
        c9.record(
            "8/halving ratio",
            1.0,
            "order study",
            Err(almostgraph::Error::Config("no step pair above the floor".into())),
        );
    }
    let listing: Vec<String> = errors.iter().map(|(h, e)| format!("{h}:{e:.1e}")).collect();
    c9.note(format!("order study errors (h_s:max error) {}", listing.join(" ")));
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut c1 = Criterion::new(1, "inverse identities");
    let mut c2 = Criterion::new(2, "chart maps manifold to flat space");
    let mut c3 = Criterion::new(3, "fixed-point rate");
    let mut c4 = Criterion::new(4, "psi construction");
    let mut c5 = Criterion::new(5, "H bounds");
    let mut c6 = Criterion::new(6, "L-invariance");
    let mut c7 = Criterion::new(7, "fixed set");
    let mut c8 = Criterion::new(8, "derivative checks");
    let mut c9 = Criterion::new(9, "integrator");
    let mut c10 = Criterion::new(10, "R bound on bounded V");

    psi_criterion(&mut c4);
    integrator_criterion(&mut c9);
    for (name, _) in BUNDLED {
        let config = bundled(name).unwrap();
        let ctx = match config.context() {
            Ok(ctx) => ctx,
            Err(e) => {
                c1.record("B(A(phi))", 1e-8, name, Err(e));
                continue;
            }
        };
        for seed in SEEDS {
            let run = Run {
                name,
                seed,
                config: &config,
                ctx: &ctx,
            };
            identities(&run, &mut c1, &mut c3, &mut c6, &mut c8);
            lifts(&run, &mut c2, &mut c6, &mut c9);
            members(&run, &mut c7);
            blend(&run, &mut c5, &mut c8);
            grads(&run, &mut c8);
            r_bound(&run, &mut c10);
        }
    }

    let all = [&c1, &c2, &c3, &c4, &c5, &c6, &c7, &c8, &c9, &c10];
    for c in all {
        c.print();
    }
    let failed: Vec<usize> = all.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!(
        "acceptance: {}/10 criteria passed in {:.1} s",
        10 - failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
