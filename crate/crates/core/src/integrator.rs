//! Method of steps for `x'(t) = g(x(t − d_1(L x_t)), …, x(t − d_k(L x_t)))`.
//!
//! Classic RK4 on a uniform step. The solution is kept as a dense cubic
//! Hermite history (node values plus `x' = f(x_t)` as slopes). Delayed
//! arguments that fall inside the step being taken are read off the previous
//! segment's cubic, extrapolated; a zero lag uses the stage value itself.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fnspace::{cubic_coefficients, poly_antiderivative, GridFn1, GridFnN};
use crate::system::{max_norm, Atom, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    /// Upper bound for the step; the actual step is `t_end / ⌈t_end / step⌉`.
    pub step: f64,
    /// Abort with `Unstable` once `|x(t)|_∞` exceeds this.
    pub norm_bound: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            t_end: 1.0,
            step: 1e-3,
            norm_bound: 1e8,
        }
    }
}

/// Cubic `p(s)` on `[t0, t0 + len]`, `s = (t − t0) / len`, one per component.
#[derive(Debug, Clone)]
struct Piece {
    t0: f64,
    len: f64,
    coeffs: Vec<[f64; 4]>,
}

impl Piece {
    fn new(t0: f64, len: f64, x0: &[f64], dx0: &[f64], x1: &[f64], dx1: &[f64]) -> Self {
        let coeffs = (0..x0.len())
            .map(|nu| cubic_coefficients(x0[nu], dx0[nu], x1[nu], dx1[nu], len))
            .collect();
        Piece { t0, len, coeffs }
    }

    fn local(&self, t: f64) -> f64 {
        (t - self.t0) / self.len
    }

    fn value(&self, nu: usize, t: f64) -> f64 {
        let c = &self.coeffs[nu];
        let s = self.local(t);
        ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
    }

    fn deriv(&self, nu: usize, t: f64) -> f64 {
        let c = &self.coeffs[nu];
        let s = self.local(t);
        ((3.0 * c[3] * s + 2.0 * c[2]) * s + c[1]) / self.len
    }

    fn integral(&self, nu: usize, a: f64, b: f64) -> f64 {
        let c = &self.coeffs[nu];
        self.len * (poly_antiderivative(c, self.local(b)) - poly_antiderivative(c, self.local(a)))
    }
}

/// A computed solution on `[−r, T]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    initial: GridFnN,
    step: f64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
    delays: Vec<Vec<f64>>,
    extrapolated: usize,
    bound: f64,
}

impl Trajectory {
    fn start(sys: &SystemDef, phi: &GridFnN, step: f64) -> Result<Self> {
        let mut traj = Trajectory {
            initial: phi.clone(),
            step,
            times: vec![0.0],
            states: vec![phi.value_at_zero()],
            slopes: Vec::new(),
            delays: Vec::new(),
            extrapolated: 0,
            bound: f64::INFINITY,
        };
        let (slope, delays) = traj.rhs(sys, 0.0, &phi.value_at_zero())?;
        traj.slopes.push(slope);
        traj.delays.push(delays);
        Ok(traj)
    }

    pub fn initial(&self) -> &GridFnN {
        &self.initial
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// `x'(t_i) = f(x_{t_i})`; at `t = 0` this is the right derivative.
    pub fn slopes(&self) -> &[Vec<f64>] {
        &self.slopes
    }

    /// `d_κ(L x_{t_i})`
    pub fn delays(&self) -> &[Vec<f64>] {
        &self.delays
    }

    /// Number of stage evaluations that read an extrapolated delayed value.
    pub fn extrapolated(&self) -> usize {
        self.extrapolated
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    fn n(&self) -> usize {
        self.initial.dim()
    }

    fn piece(&self, i: usize) -> Piece {
        Piece::new(
            self.times[i],
            self.times[i + 1] - self.times[i],
            &self.states[i],
            &self.slopes[i],
            &self.states[i + 1],
            &self.slopes[i + 1],
        )
    }

    /// The piece ending at the last accepted time, used for extrapolation.
    fn last_piece(&self) -> Piece {
        let m = self.times.len() - 1;
        if m > 0 {
            return self.piece(m - 1);
        }
        let grid = self.initial.grid();
        let h = grid.spacing();
        let t = grid.node(grid.intervals() - 1);
        let x0: Vec<f64> = self
            .initial
            .components()
            .iter()
            .map(|c| c.values()[grid.intervals() - 1])
            .collect();
        let dx0: Vec<f64> = self
            .initial
            .components()
            .iter()
            .map(|c| c.slopes()[grid.intervals() - 1])
            .collect();
        Piece::new(t, h, &x0, &dx0, &self.states[0], &self.slopes[0])
    }

    fn index_of(&self, t: f64) -> usize {
        let m = self.times.len() - 1;
        ((t / self.step).floor() as usize).min(m.saturating_sub(1))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let r = self.initial.grid().r();
        if !(t >= -r && t <= self.t_end()) {
            return Err(Error::Domain { t, r });
        }
        Ok(())
    }

    /// `x_nu(t)` for `−r <= t <= T`; the left branch is used at `t = 0`.
    pub fn eval(&self, t: f64, nu: usize) -> Result<f64> {
        self.check_time(t)?;
        if t <= 0.0 {
            return self.initial.eval(t, nu);
        }
        Ok(self.piece(self.index_of(t)).value(nu, t))
    }

    /// `x_nu'(t)`; at `t = 0` this is `phi'(0)`.
    pub fn eval_deriv(&self, t: f64, nu: usize) -> Result<f64> {
        self.check_time(t)?;
        if t <= 0.0 {
            return self.initial.eval_deriv(t, nu);
        }
        let i = self.index_of(t);
        if t == self.times[i + 1] {
            return Ok(self.slopes[i + 1][nu]);
        }
        Ok(self.piece(i).deriv(nu, t))
    }

    /// `x_t` resampled onto the grid of the initial function.
    pub fn segment(&self, t: f64) -> Result<GridFnN> {
        if !(t >= 0.0 && t <= self.t_end()) {
            return Err(Error::Domain { t, r: self.t_end() });
        }
        if t == 0.0 {
            return Ok(self.initial.clone());
        }
        let grid = self.initial.grid();
        let components = (0..self.n())
            .map(|nu| {
                let mut values = Vec::with_capacity(grid.nodes());
                let mut slopes = Vec::with_capacity(grid.nodes());
                for i in 0..grid.nodes() {
                    let s = (t + grid.node(i)).min(self.t_end());
                    values.push(self.eval(s, nu)?);
                    slopes.push(self.eval_deriv(s, nu)?);
                }
                GridFn1::new(grid, values, slopes)
            })
            .collect::<Result<_>>()?;
        GridFnN::new(components)
    }

    /// `x_nu(tau − lag)` while a step from the last accepted time is in progress.
    fn lagged(
        &self,
        nu: usize,
        tau: f64,
        lag: f64,
        stage: &[f64],
        extra: Option<&Piece>,
        used: &mut bool,
    ) -> Result<f64> {
        if lag == 0.0 {
            return Ok(stage[nu]);
        }
        let u = tau - lag;
        if u <= self.t_end() {
            return self.eval(u.max(-self.initial.grid().r()), nu);
        }
        *used = true;
        Ok(extra.expect("history has a last piece").value(nu, u))
    }

    /// `∫_a^b x_nu` with `b` possibly beyond the last accepted time.
    fn integral(&self, nu: usize, a: f64, b: f64, extra: Option<&Piece>, used: &mut bool) -> Result<f64> {
        let mut total = 0.0;
        if a < 0.0 {
            total += self.initial.component(nu)?.integral_between(a, b.min(0.0))?;
        }
        let known_end = b.min(self.t_end());
        let mut lo = a.max(0.0);
        if known_end > lo {
            let m = self.times.len() - 1;
            let mut i = self.index_of(lo);
            while i < m && lo < known_end {
                let hi = self.times[i + 1].min(known_end);
                total += self.piece(i).integral(nu, lo, hi);
                lo = hi;
                i += 1;
            }
        }
        let start = a.max(self.t_end());
        if b > start {
            *used = true;
            total += extra.expect("history has a last piece").integral(nu, start, b);
        }
        Ok(total)
    }

    /// `f(x_tau)` where `x(tau) = stage` and the part after the last accepted time
    /// is extrapolated. Returns the slope and the delays.
    fn rhs(&mut self, sys: &SystemDef, tau: f64, stage: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        // At t = 0 the slope there is what is being computed; nothing is extrapolated then.
        let extra = (self.slopes.len() == self.times.len()).then(|| self.last_piece());
        let extra = extra.as_ref();
        let r = sys.r();
        let mut used = false;
        let eta = sys
            .l()
            .rows()
            .iter()
            .map(|row| {
                row.atoms().iter().try_fold(0.0, |acc, atom| {
                    Ok(acc
                        + match *atom {
                            Atom::Point {
                                component,
                                time,
                                weight,
                            } => weight * self.lagged(component, tau, -time, stage, extra, &mut used)?,
                            Atom::Integral { component, weight } => {
                                weight * self.integral(component, tau - r, tau, extra, &mut used)?
                            }
                        })
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let delays = sys.delays(&eta).map_err(|e| match e {
            Error::OutsideW { .. } => Error::LeftU {
                t: tau,
                reason: e.to_string(),
            },
            other => other,
        })?;
        let mut v = Vec::with_capacity(sys.nk());
        for &d in &delays {
            for nu in 0..sys.n() {
                v.push(self.lagged(nu, tau, d, stage, extra, &mut used)?);
            }
        }
        let slope = sys.g_at(&v).map_err(|e| match e {
            Error::OutsideV { .. } => Error::LeftU {
                t: tau,
                reason: e.to_string(),
            },
            other => other,
        })?;
        if used {
            self.extrapolated += 1;
        }
        Ok((slope, delays))
    }

    fn advance(&mut self, sys: &SystemDef, h: f64, t_next: f64) -> Result<()> {
        let t = self.t_end();
        let x = self.states.last().expect("nonempty").clone();
        let k1 = self.slopes.last().expect("nonempty").clone();
        let shifted = |k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
        let (k2, _) = self.rhs(sys, t + 0.5 * h, &shifted(&k1, 0.5 * h))?;
        let (k3, _) = self.rhs(sys, t + 0.5 * h, &shifted(&k2, 0.5 * h))?;
        let (k4, _) = self.rhs(sys, t + h, &shifted(&k3, h))?;
        let next: Vec<f64> = (0..x.len())
            .map(|nu| x[nu] + h / 6.0 * (k1[nu] + 2.0 * k2[nu] + 2.0 * k3[nu] + k4[nu]))
            .collect();
        if next.iter().any(|v| !v.is_finite()) || max_norm(&next) > self.bound {
            return Err(Error::Unstable {
                t: t_next,
                norm: max_norm(&next),
            });
        }
        // Provisional slope so the new node can serve as the latest point of the history.
        self.times.push(t_next);
        self.states.push(next.clone());
        self.slopes.push(k4);
        let (slope, delays) = self.rhs(sys, t_next, &next)?;
        *self.slopes.last_mut().expect("pushed") = slope;
        self.delays.push(delays);
        Ok(())
    }

    /// CSV with columns `t, x1..xn, dx1..dxn, d1..dk`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let n = self.n();
        let k = self.delays.first().map_or(0, Vec::len);
        writeln!(out, "# almostgraph-trajectory v1")?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("dx{i}")));
        header.extend((1..=k).map(|i| format!("d{i}")));
        writeln!(out, "{}", header.join(","))?;
        // `+ 0.0` turns -0 into 0.
        let cell = |x: &f64| (x + 0.0).to_string();
        for i in 0..self.times.len() {
            let mut row = vec![cell(&self.times[i])];
            row.extend(self.states[i].iter().map(cell));
            row.extend(self.slopes[i].iter().map(cell));
            row.extend(self.delays[i].iter().map(cell));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Solve from the initial segment `phi` up to `options.t_end`.
pub fn integrate(sys: &SystemDef, phi: &GridFnN, options: IntegrateOptions) -> Result<Trajectory> {
    if !(options.t_end > 0.0) || !options.t_end.is_finite() {
        return Err(Error::Config("T must be positive".into()));
    }
    if !(options.step > 0.0 && options.step <= sys.r() / 4.0) {
        return Err(Error::Config(format!(
            "step {} must lie in (0, r/4] = (0, {}]",
            options.step,
            sys.r() / 4.0
        )));
    }
    sys.hat(phi).and_then(|v| sys.g_at(&v)).map_err(|e| match e {
        Error::OutsideW { .. } | Error::OutsideV { .. } => Error::LeftU {
            t: 0.0,
            reason: e.to_string(),
        },
        other => other,
    })?;
    let steps = (options.t_end / options.step - 1e-9).ceil().max(1.0) as usize;
    let h = options.t_end / steps as f64;
    let mut traj = Trajectory::start(sys, phi, h)?;
    traj.bound = options.norm_bound;
    for i in 1..=steps {
        let t_next = if i == steps { options.t_end } else { i as f64 * h };
        traj.advance(sys, t_next - traj.t_end(), t_next)?;
    }
    Ok(traj)
}

/// `|x'(0+) − phi'(0)|_∞`, with `x'(0+)` from the integrator's right-hand side.
pub fn derivative_jump(sys: &SystemDef, phi: &GridFnN) -> Result<f64> {
    let traj = Trajectory::start(sys, phi, sys.r() / 4.0)?;
    let jump: Vec<f64> = traj.slopes[0]
        .iter()
        .zip(phi.slope_at_zero())
        .map(|(a, b)| a - b)
        .collect();
    Ok(max_norm(&jump))
}
