//! Fixed-seed verification suites.
//!
//! Each suite measures residuals of exact identities and convergence rates
//! of the integrators and compares them with pinned limits. The measurement
//! functions are public so that other harnesses can apply their own limits.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::calibration::{calibrate, cosine_similarity, synthetic_trajectories, CalibrationConfig, PSD_TOLERANCE};
use crate::diagnostics::{
    bkm_update, delta_striking_suite, norm_equivalence_probe, operator_identity_suite_with, DiagRecord,
    IdentityReport, NormSample,
};
use crate::error::{Error, Result};
use crate::field::{random_field, Grid, RandomFieldSpec, VectorField};
use crate::lagrangian::{
    cauchy_check, circulation, run_tracked, stage_field, FieldSampler, FlowState, MaterialLoop, Tracker,
};
use crate::noise::{
    build_fourier_basis, ck0_constants, sample_path, shell_decay_exponent, summability_check, BrownianPath,
    NoiseBasis,
};
use crate::operators::{biot_savart, lie_bracket, lie_derivative, solenoidal_bracket, LieOperand};
use crate::rng::splitmix64;
use crate::stepper::{run, smooth_cutoff, step, RunStatus, Scheme, SimConfig, SimState};

/// Default noise basis: `kmax = 2`, `α = 3`.
pub fn default_basis(grid: &Arc<Grid>) -> Result<NoiseBasis> {
    build_fourier_basis(grid, 2, 3.0, 0)
}

/// Arnold-Beltrami-Childress field with `A = B = C = 1`; `curl u = u`.
pub fn abc_flow(grid: &Arc<Grid>) -> VectorField {
    VectorField::from_fn(grid.clone(), |x| {
        [x[2].sin() + x[1].cos(), x[0].sin() + x[2].cos(), x[1].sin() + x[0].cos()]
    })
}

/// Single-constant-field basis.
pub fn constant_basis(grid: &Arc<Grid>, dir: [f64; 3]) -> Result<NoiseBasis> {
    NoiseBasis::from_fields(grid.clone(), vec![("const".into(), 1.0, VectorField::from_fn(grid.clone(), |_| dir))])
}

/// `log₂` ratios of consecutive errors.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
}

/// One measured quantity against its limit.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    /// Wall time spent on the measurement, in seconds.
    pub seconds: f64,
}

impl Check {
    /// NaN never passes.
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost(l) => self.value <= l,
            Bound::AtLeast(l) => self.value >= l,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (op, l) = match self.bound {
            Bound::AtMost(l) => ("<=", l),
            Bound::AtLeast(l) => (">=", l),
        };
        write!(
            f,
            "{} {:<10} {:<44} {:>12.4e} {op} {:<10.3e} ({:.1}s)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            l,
            self.seconds
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Operators,
    Stepper,
    Lagrangian,
    Noise,
    All,
}

impl Suite {
    pub const EACH: [Suite; 4] = [Suite::Operators, Suite::Stepper, Suite::Lagrangian, Suite::Noise];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Operators => "operators",
            Suite::Stepper => "stepper",
            Suite::Lagrangian => "lagrangian",
            Suite::Noise => "noise",
            Suite::All => "all",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operators" => Ok(Suite::Operators),
            "stepper" => Ok(Suite::Stepper),
            "lagrangian" => Ok(Suite::Lagrangian),
            "noise" => Ok(Suite::Noise),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite `{other}` (expected operators, stepper, lagrangian, noise or all)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub grid_n: usize,
    /// Random field pairs in the first-order identity checks; the
    /// Laplacian-level check uses half as many fields.
    pub trials: usize,
    pub seed: u64,
    /// Test hook: perturbs every `S₄` table by this relative amount.
    pub corrupt_s4: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid_n: 32,
            trials: 100,
            seed: 0x5eed,
            corrupt_s4: None,
        }
    }
}

/// Runs `suite` and reports each check to `sink` as soon as it is measured.
pub fn run_suite(suite: Suite, opts: &VerifyOptions, sink: &mut dyn FnMut(&Check)) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let list: Vec<Suite> = if suite == Suite::All { Suite::EACH.to_vec() } else { vec![suite] };
    for s in list {
        let mut rec = Recorder {
            suite: s,
            out: &mut out,
            sink,
            clock: Instant::now(),
        };
        match s {
            Suite::Operators => operators_suite(opts, &mut rec)?,
            Suite::Stepper => stepper_suite(opts, &mut rec)?,
            Suite::Lagrangian => lagrangian_suite(opts, &mut rec)?,
            Suite::Noise => noise_suite(opts, &mut rec)?,
            Suite::All => unreachable!("expanded above"),
        }
    }
    Ok(out)
}

struct Recorder<'a> {
    suite: Suite,
    out: &'a mut Vec<Check>,
    sink: &'a mut dyn FnMut(&Check),
    clock: Instant,
}

impl Recorder<'_> {
    fn record(&mut self, name: &str, value: f64, bound: Bound) {
        let c = Check {
            suite: self.suite,
            name: name.to_owned(),
            value,
            bound,
            seconds: self.clock.elapsed().as_secs_f64(),
        };
        (self.sink)(&c);
        self.out.push(c);
        self.clock = Instant::now();
    }
}

/// First-order identities on every mode of the default basis.
pub fn identity_residuals(grid: &Arc<Grid>, trials: usize, seed: u64, corrupt_s4: Option<f64>) -> Result<IdentityReport> {
    let basis = default_basis(grid)?;
    match corrupt_s4 {
        None => operator_identity_suite_with(&basis, trials, seed, |op| op),
        Some(eps) => operator_identity_suite_with(&basis, trials, seed, move |op| op.with_corrupted_s4(eps)),
    }
}

fn seeded(grid: &Arc<Grid>, bandwidth: u32, seed: u64, trial: usize) -> Result<VectorField> {
    random_field(grid, RandomFieldSpec::new(bandwidth, splitmix64(seed ^ trial as u64)))
}

/// Worst `‖curl BS(ω) − ω‖ / ‖ω‖` over random solenoidal mean-zero fields.
pub fn biot_savart_round_trip(grid: &Arc<Grid>, trials: usize, seed: u64) -> Result<f64> {
    let bw = grid.dealias_cutoff() as u32;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let w = seeded(grid, 1 + (t as u32 % bw), seed, t)?;
        worst = worst.max(biot_savart(&w).field.curl().rel_l2_distance(&w));
    }
    Ok(worst)
}

/// Range of `‖v‖_{W^{3,2}} / ‖ω‖_{W^{2,2}}` over random fields of every
/// bandwidth.
pub fn norm_equivalence_band(grid: &Arc<Grid>, trials: usize, seed: u64) -> Result<(f64, f64)> {
    let bw = grid.dealias_cutoff() as u32;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for t in 0..trials {
        let w = seeded(grid, 1 + (t as u32 % bw), seed ^ 0x4e, t)?;
        if let Some(r) = norm_equivalence_probe(&w) {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

/// `curl(w × u)` against the gradient form of `[u, w]`, and the sparse
/// operator route against grid products.
pub fn bracket_route_agreement(grid: &Arc<Grid>, seed: u64) -> Result<(f64, f64)> {
    let bw = (grid.dealias_cutoff() / 2) as u32;
    let u = seeded(grid, bw, seed, 1)?;
    let w = seeded(grid, bw, seed, 2)?;
    let bracket = solenoidal_bracket(&u, &w)?.rel_l2_distance(&lie_bracket(&u, &w)?);
    let basis = default_basis(grid)?;
    let f = seeded(grid, 6.min(grid.dealias_cutoff() as u32 - 4), seed, 3)?;
    let mut route: f64 = 0.0;
    for k in [0, basis.len() / 2, basis.len() - 1] {
        let sparse = basis.operand(k)?;
        let dense = LieOperand::new(basis.field(k))?.without_sparse_path();
        route = route.max(lie_derivative(&sparse, &f)?.rel_l2_distance(&lie_derivative(&dense, &f)?));
    }
    Ok((bracket, route))
}

fn operators_suite(opts: &VerifyOptions, rec: &mut Recorder) -> Result<()> {
    let grid = Grid::periodic(opts.grid_n)?;
    let r = identity_residuals(&grid, opts.trials, opts.seed, opts.corrupt_s4)?;
    rec.record("duality <Lf,g> = <f,L*g>", r.duality, Bound::AtMost(1e-10));
    rec.record("adjoint L* = -L + S2", r.adjoint_identity, Bound::AtMost(1e-10));
    rec.record("commutator L S2 = S2 L - S4", r.commutator, Bound::AtMost(1e-10));
    rec.record("first striking identity", r.striking, Bound::AtMost(1e-9));
    rec.record("striking bound ratio vs C_k(0)", r.bound_ratio, Bound::AtMost(1.0));
    let basis = default_basis(&grid)?;
    let d = delta_striking_suite(&basis, (opts.trials / 2).max(1), opts.seed)?;
    rec.record("second striking identity (Laplacian level)", d.identity, Bound::AtMost(1e-8));
    rec.record("curl of Biot-Savart is identity", biot_savart_round_trip(&grid, 100, opts.seed)?, Bound::AtMost(1e-12));
    let (lo, hi) = norm_equivalence_band(&grid, 40, opts.seed)?;
    rec.record("norm equivalence band lower end", lo, Bound::AtLeast(1e-3));
    rec.record("norm equivalence band upper end", hi, Bound::AtMost(1e3));
    let (bracket, route) = bracket_route_agreement(&grid, opts.seed)?;
    rec.record("curl(w x u) matches [u,w]", bracket, Bound::AtMost(1e-12));
    rec.record("sparse route matches grid products", route, Bound::AtMost(1e-12));
    Ok(())
}

/// `‖ω(t) − ω₀‖ / ‖ω₀‖` for the steady ABC flow without noise.
pub fn beltrami_drift(grid: &Arc<Grid>, dt: f64, horizon: f64) -> Result<f64> {
    let w0 = abc_flow(grid);
    let cfg = SimConfig {
        dt,
        horizon,
        diag_every: usize::MAX,
        ..Default::default()
    };
    let tr = run(&cfg, &NoiseBasis::empty(grid.clone()), w0.clone())?;
    Ok(tr.final_state.omega.rel_l2_distance(&w0))
}

/// Root-mean-square over `seeds` paths of the relative L² error of Heun
/// against the exact translate `ω₀(x − ξB_t)` for constant `ξ` at `t = 0.25`,
/// with `dt = 4e-3, 2e-3, 1e-3, 5e-4` on nested paths.
pub fn exact_transport_errors(grid: &Arc<Grid>, seeds: u64) -> Result<Vec<f64>> {
    const T: f64 = 0.25;
    let dir = [0.15, -0.25, 0.4];
    let basis = constant_basis(grid, dir)?;
    let w0 = random_field(grid, RandomFieldSpec::new(4, 3))?;
    let cfg = SimConfig {
        advect: false,
        ..Default::default()
    };
    let mut sq = vec![0.0; 4];
    for seed in 0..seeds {
        // 63 coarse steps cover t = 0.25 = 62.5 steps of 4e-3.
        let mut paths = vec![BrownianPath::sample(1, 63, 4e-3, seed)?];
        for _ in 0..3 {
            let p = paths.last().expect("nonempty").refine();
            paths.push(p);
        }
        for (lvl, p) in paths.iter().enumerate() {
            let dt = p.dt();
            let full = (T / dt).floor() as usize;
            let mut s = SimState::new(w0.clone())?;
            for j in 0..full {
                s = step(&s, &basis, p.increment(j), &cfg, dt)?;
            }
            let mut b = p.value_at(full)[0];
            if (full as f64 * dt - T).abs() > 1e-12 {
                // Finish with the half step of the next level.
                let db = paths[lvl + 1].increment(2 * full);
                s = step(&s, &basis, db, &cfg, dt / 2.0)?;
                b += db[0];
            }
            let exact = w0.translated(dir.map(|c| c * b));
            sq[lvl] += s.omega.rel_l2_distance(&exact).powi(2);
        }
    }
    Ok(sq.into_iter().map(|s| (s / seeds as f64).sqrt()).collect())
}

/// Relative L² gap between Euler-Maruyama with the Itô correction and Heun
/// on the same path at `t = 0.1`, for `dt = 4e-3, 2e-3, 1e-3, 5e-4`.
pub fn ito_stratonovich_gaps(grid: &Arc<Grid>, seed: u64) -> Result<Vec<f64>> {
    let basis = default_basis(grid)?;
    let w0 = random_field(grid, RandomFieldSpec::new(4, 3))?;
    let mut p = sample_path(&basis, 25, 4e-3, seed)?;
    let ito = SimConfig {
        scheme: Scheme::ItoEm,
        ..Default::default()
    };
    let strat = SimConfig::default();
    let mut gaps = Vec::new();
    for _ in 0..4 {
        let mut a = SimState::new(w0.clone())?;
        let mut b = a.clone();
        for j in 0..p.nsteps() {
            a = step(&a, &basis, p.increment(j), &ito, p.dt())?;
            b = step(&b, &basis, p.increment(j), &strat, p.dt())?;
        }
        gaps.push(a.omega.rel_l2_distance(&b.omega));
        p = p.refine();
    }
    Ok(gaps)
}

/// `|a − e^{-ν|k|¹⁰dt} a₀| / |a₀|` after one hyperviscous step of a single
/// `|k| = 2` mode with no drift and no noise.
pub fn hyperviscous_factor_error(grid: &Arc<Grid>) -> Result<f64> {
    let (nu, dt) = (1e-3, 1e-2);
    let w0 = VectorField::from_fn(grid.clone(), |x| [0.0, (2.0 * x[0]).sin(), 0.0]);
    let cfg = SimConfig {
        nu,
        dt,
        advect: false,
        ..Default::default()
    };
    let s = step(&SimState::new(w0.clone())?, &NoiseBasis::empty(grid.clone()), &[], &cfg, dt)?;
    let want = w0.scaled((-nu * 2f64.powi(10) * dt).exp());
    Ok(s.omega.rel_l2_distance(&want))
}

/// Largest deviation of `κ_R` from its exact values at probes below `R` and
/// above `R + 1`.
pub fn kappa_probe_error() -> f64 {
    let mut worst: f64 = 0.0;
    for r in [0.5, 3.0, 40.0] {
        for x in [0.0, 0.25 * r, r] {
            worst = worst.max((smooth_cutoff(x, r) - 1.0).abs());
        }
        for x in [r + 1.0, r + 1.5, 10.0 * r + 2.0] {
            worst = worst.max(smooth_cutoff(x, r).abs());
        }
    }
    worst
}

/// Runs a growing deterministic flow freely and with the stopping rule set
/// between its initial and peak `W^{2,2}` norms. Returns the step and time
/// mismatch between the stop and the first free-run crossing.
pub fn stopping_mismatch(grid: &Arc<Grid>) -> Result<(f64, f64)> {
    let basis = NoiseBasis::empty(grid.clone());
    let w = random_field(grid, RandomFieldSpec::new(3, 11))?.scaled(4.0);
    let free_cfg = SimConfig {
        dt: 2e-3,
        horizon: 0.2,
        ..Default::default()
    };
    let free = run(&free_cfg, &basis, w.clone())?;
    let norms: Vec<f64> = free.records.iter().map(|r| r.w22).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    if top <= free.initial.w22 {
        return Err(Error::Config("probe flow does not grow".into()));
    }
    let r = 1e6;
    let threshold = 0.5 * (free.initial.w22 + top);
    let first = norms.iter().position(|&n| n >= threshold).expect("top crosses");
    let cfg = SimConfig {
        cutoff: Some(r),
        c_bs: Some(r / threshold),
        ..free_cfg
    };
    let stopped = run(&cfg, &basis, w)?;
    match stopped.stop.status {
        RunStatus::Stopped { tau, .. } => Ok((
            (stopped.stop.steps as f64 - (first + 1) as f64).abs(),
            (tau - free.records[first].t).abs(),
        )),
        _ => Ok((f64::INFINITY, f64::INFINITY)),
    }
}

/// Accumulates the BKM integral over a synthetic `‖ω‖_∞` series and
/// compares it with the trapezoid sum. Returns the worst relative error and
/// whether the integral never decreased.
pub fn bkm_oracle() -> (f64, bool) {
    let dt = 0.01;
    let sup = |j: usize| 2.0 + (0.7 * j as f64).sin() + 0.05 * j as f64;
    let sample = |j: usize| NormSample {
        l2: 1.0,
        w22: 1.0,
        sup: sup(j),
        gradv_sup: 1.0,
        alpha_t: 2.0,
    };
    let mut rec = DiagRecord::start(0.0, &sample(0), 1.0);
    let (mut oracle, mut worst, mut monotone) = (0.0, 0.0f64, true);
    for j in 1..=500 {
        let next = bkm_update(&rec, &sample(j), 1.0, dt, 1);
        oracle += 0.5 * dt * (sup(j - 1) + sup(j));
        worst = worst.max((next.bkm_integral - oracle).abs() / oracle);
        monotone &= next.bkm_integral >= rec.bkm_integral;
        rec = next;
    }
    (worst, monotone)
}

fn stepper_suite(opts: &VerifyOptions, rec: &mut Recorder) -> Result<()> {
    let grid = Grid::periodic(opts.grid_n)?;
    rec.record("Beltrami steady state, t = 1", beltrami_drift(&grid, 1e-3, 1.0)?, Bound::AtMost(1e-6));
    let e = exact_transport_errors(&grid, 8)?;
    let o = orders(&e).into_iter().fold(f64::INFINITY, f64::min);
    rec.record("exact transport strong order (min)", o, Bound::AtLeast(0.8));
    let g = ito_stratonovich_gaps(&grid, opts.seed)?;
    let o = orders(&g).into_iter().fold(f64::INFINITY, f64::min);
    rec.record("Ito/Stratonovich gap order (min)", o, Bound::AtLeast(0.5));
    rec.record("hyperviscous factor on one mode", hyperviscous_factor_error(&grid)?, Bound::AtMost(1e-14));
    rec.record("cutoff values at probes", kappa_probe_error(), Bound::AtMost(0.0));
    let (steps, tau) = stopping_mismatch(&Grid::periodic(16)?)?;
    rec.record("stop step vs first crossing", steps, Bound::AtMost(0.0));
    rec.record("stop time vs first crossing", tau, Bound::AtMost(1e-12));
    let (bkm, monotone) = bkm_oracle();
    rec.record("BKM integral vs trapezoid oracle", bkm, Bound::AtMost(1e-12));
    rec.record("BKM integral non-decreasing", if monotone { 1.0 } else { 0.0 }, Bound::AtLeast(1.0));
    Ok(())
}

/// Initial vorticity of the Lagrangian checks: band 3, scaled so that the
/// grid maximum of its velocity is 1.
pub fn lagrangian_initial(grid: &Arc<Grid>) -> Result<VectorField> {
    let w = random_field(grid, RandomFieldSpec::new(3, 5))?;
    let vmax = biot_savart(&w).field.grid_max_norm();
    Ok(w.scaled(1.0 / vmax))
}

/// Largest `|I(t) − I(0)| / |I(0)|` for a 64-marker circle advected with a
/// default-basis run to `t_end`, sampled every step.
pub fn kelvin_drift(grid: &Arc<Grid>, seed: u64, dt: f64, t_end: f64) -> Result<f64> {
    let basis = default_basis(grid)?;
    let w0 = lagrangian_initial(grid)?;
    let steps = (t_end / dt).round() as usize;
    let cfg = SimConfig { dt, ..Default::default() };
    let path = sample_path(&basis, steps, dt, seed)?;
    let lp = MaterialLoop::circle([3.0, 3.0, 3.0], 1.0, 2, 64, grid.length(), MaterialLoop::default_spacing(grid))?;
    let mut tracker = Tracker {
        flow: None,
        loops: vec![lp],
        jacobian: false,
    };
    let mut i0 = None;
    let mut worst: f64 = 0.0;
    run_tracked(&cfg, &basis, w0, &path, steps, &mut tracker, |s, tr| {
        let i = circulation(&tr.loops[0], &s.v);
        let base = *i0.get_or_insert(i);
        worst = worst.max((i - base).abs() / base.abs());
        Ok(())
    })?;
    Ok(worst)
}

/// Cauchy residual for constant `ξ`: tracked markers and Jacobians against
/// the exact translate of `ω₀`.
pub fn cauchy_constant_noise(grid: &Arc<Grid>, seed: u64) -> Result<f64> {
    let dir = [0.2, -0.1, 0.3];
    let basis = constant_basis(grid, dir)?;
    let w0 = random_field(grid, RandomFieldSpec::new(4, 1))?;
    let (dt, steps) = (2e-3, 100);
    let path = BrownianPath::sample(1, steps, dt, seed)?;
    let mut flow = FlowState::lattice(grid, 4);
    for j in 0..steps {
        let f = stage_field(None, &basis, path.increment(j), dt)?;
        let u = FieldSampler::new(&f, true);
        flow = flow.heun_step(&u, &u, dt, true)?;
    }
    let b = path.value_at(steps)[0];
    let exact = w0.translated(dir.map(|c| c * b));
    Ok(cauchy_check(&flow, &exact, &w0).rel_error)
}

/// Cauchy residual of a default-basis run at `t = 0.2` for
/// `dt = 2e-3, 1e-3, 5e-4` on nested paths.
pub fn cauchy_general(grid: &Arc<Grid>, seed: u64) -> Result<Vec<(f64, f64)>> {
    let basis = default_basis(grid)?;
    let w0 = lagrangian_initial(grid)?;
    let mut path = sample_path(&basis, 100, 2e-3, seed)?;
    let mut out = Vec::new();
    for _ in 0..3 {
        let dt = path.dt();
        let cfg = SimConfig { dt, ..Default::default() };
        let mut tracker = Tracker {
            flow: Some(FlowState::lattice(grid, 4)),
            loops: Vec::new(),
            jacobian: true,
        };
        let end = run_tracked(&cfg, &basis, w0.clone(), &path, path.nsteps(), &mut tracker, |_, _| Ok(()))?;
        let r = cauchy_check(tracker.flow.as_ref().expect("flow tracked"), &end.omega, &w0);
        out.push((dt, r.rel_error));
        path = path.refine();
    }
    Ok(out)
}

/// Circulation of a smooth field on a fine circle before and after
/// resampling at half the spacing, and after a cyclic relabelling.
pub fn circulation_resampling_change(grid: &Arc<Grid>) -> Result<f64> {
    let v = VectorField::from_fn(grid.clone(), |x| [-x[1].sin(), x[0].sin(), 0.0]);
    let l = grid.length();
    let lp = MaterialLoop::circle([0.0; 3], 0.5, 2, 4096, l, 0.2)?;
    let mut fine = lp.clone();
    fine.max_spacing = 0.5 * fine.max_segment();
    fine.resample();
    let mut shifted = lp.flow.positions.clone();
    shifted.rotate_left(1000);
    let relabelled = MaterialLoop::new(shifted, l, 0.2)?;
    let a = circulation(&lp, &v);
    let b = circulation(&fine, &v);
    let c = circulation(&relabelled, &v);
    Ok(((a - b).abs().max((a - c).abs())) / a.abs())
}

fn lagrangian_suite(opts: &VerifyOptions, rec: &mut Recorder) -> Result<()> {
    let grid = Grid::periodic(opts.grid_n)?;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        worst = worst.max(kelvin_drift(&grid, opts.seed + seed, 1e-3, 0.5)?);
    }
    rec.record("Kelvin circulation drift, 5 seeds", worst, Bound::AtMost(0.02));
    rec.record("Cauchy relation, constant noise", cauchy_constant_noise(&grid, opts.seed)?, Bound::AtMost(1e-8));
    let c = cauchy_general(&grid, opts.seed)?;
    rec.record("Cauchy relation, general run dt = 1e-3", c[1].1, Bound::AtMost(5e-2));
    let ratio = c.windows(2).map(|w| w[1].1 / w[0].1).fold(0.0, f64::max);
    rec.record("Cauchy error ratio under dt halving (max)", ratio, Bound::AtMost(1.0));
    rec.record("circulation under resampling", circulation_resampling_change(&grid)?, Bound::AtMost(1e-6));
    Ok(())
}

/// Least-squares slope of the `C_k⁽⁰⁾` shell sums of a `kmax`, `α = 3`
/// basis; below `-1` the partial sums stabilize.
pub fn ck0_shell_exponent(grid: &Arc<Grid>, kmax: u32) -> Result<f64> {
    let basis = build_fourier_basis(grid, kmax, 3.0, 0)?;
    let c = ck0_constants(&basis);
    shell_decay_exponent(&basis, &c.constants).ok_or_else(|| Error::Config("too few shells".into()))
}

/// Largest `|Var(ΔB)/dt − 1|` over modes, and the largest `|mean|/√dt`.
pub fn brownian_moments(nmodes: usize, nsteps: usize, seed: u64) -> Result<(f64, f64)> {
    let dt = 1e-3;
    let p = BrownianPath::sample(nmodes, nsteps, dt, seed)?;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for j in 0..nsteps {
        for &d in p.increment(j) {
            sum += d;
            sq += d * d;
        }
    }
    let n = (nmodes * nsteps) as f64;
    Ok(((sq / n / dt - 1.0).abs(), (sum / n).abs() / dt.sqrt()))
}

/// Refines a path three times and coarsens back; 1 when bit-identical.
pub fn brownian_refinement_exact(seed: u64) -> Result<bool> {
    let p = BrownianPath::sample(8, 64, 1e-3, seed)?;
    let back = p.refine().refine().refine().coarsen().and_then(|q| q.coarsen()).and_then(|q| q.coarsen());
    Ok(back.as_ref() == Some(&p))
}

/// Calibration round trip on a known single-mode flow: cosine similarity
/// of the leading recovered field with the truth.
pub fn calibration_round_trip(grid_n: usize, seed: u64) -> Result<f64> {
    let grid = Grid::periodic(grid_n)?;
    let full = build_fourier_basis(&grid, 1, 3.0, 0)?;
    let k = full
        .modes()
        .iter()
        .position(|m| m.label == "(0,1,0) sin p1")
        .expect("mode present");
    let truth = full.field(k).scaled(8.0);
    let basis = NoiseBasis::from_fields(grid.clone(), vec![("truth".into(), 1.0, truth.clone())])?;
    let traj = synthetic_trajectories(&basis, 1000, 40, 5, 2e-3, seed)?;
    // The truth varies along y only, so drifters never change y-cells and
    // coverage rests on the starting positions; 4³ cells keep every cell
    // well visited.
    let cfg = CalibrationConfig {
        grid_n,
        coarse_n: 4,
        top_m: 3,
        ..Default::default()
    };
    let (model, out) = calibrate(&traj, &cfg)?;
    if model.raw_min_eigenvalue < -PSD_TOLERANCE * model.eigenvalues[0] {
        return Err(Error::Calibration("covariance is not positive semi-definite".into()));
    }
    out.basis.check_invariants()?;
    Ok(cosine_similarity(&out.basis.field(0), &truth))
}

fn noise_suite(opts: &VerifyOptions, rec: &mut Recorder) -> Result<()> {
    let grid = Grid::periodic(opts.grid_n)?;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let a3 = summability_check(&build_fourier_basis(&grid, 2, 3.0, 0)?);
    rec.record("summability converges for alpha = 3", flag(a3.converged), Bound::AtLeast(1.0));
    let a2 = summability_check(&build_fourier_basis(&grid, 2, 2.0, 0)?);
    rec.record("summability fails for alpha = 2", flag(!a2.converged), Bound::AtLeast(1.0));
    let slope = ck0_shell_exponent(&Grid::periodic(48)?, 8)?;
    rec.record("C_k(0) shell-sum decay exponent", slope, Bound::AtMost(-1.0));
    rec.record("default basis invariants", flag(default_basis(&grid)?.check_invariants().is_ok()), Bound::AtLeast(1.0));
    let (var, mean) = brownian_moments(64, 2000, opts.seed)?;
    rec.record("Brownian increment variance / dt - 1", var, Bound::AtMost(0.03));
    rec.record("Brownian increment mean / sqrt(dt)", mean, Bound::AtMost(0.02));
    rec.record("Brownian refine/coarsen bit-exact", flag(brownian_refinement_exact(opts.seed)?), Bound::AtLeast(1.0));
    rec.record(
        "calibration round-trip similarity",
        calibration_round_trip(opts.grid_n, opts.seed)?,
        Bound::AtLeast(0.95),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.iter().chain([&Suite::All]) {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), *s);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn check_bounds() {
        let c = |value, bound| Check {
            suite: Suite::Noise,
            name: "x".into(),
            value,
            bound,
            seconds: 0.0,
        };
        assert!(c(1.0, Bound::AtMost(1.0)).passed());
        assert!(!c(1.1, Bound::AtMost(1.0)).passed());
        assert!(c(0.9, Bound::AtLeast(0.8)).passed());
        assert!(!c(f64::NAN, Bound::AtLeast(0.8)).passed());
        assert!(!c(f64::NAN, Bound::AtMost(0.8)).passed());
        assert!(c(0.5, Bound::AtMost(1.0)).to_string().starts_with("PASS"));
    }

    #[test]
    fn cheap_oracles() {
        assert_eq!(kappa_probe_error(), 0.0);
        let (err, monotone) = bkm_oracle();
        assert!(err < 1e-12 && monotone);
        assert!(brownian_refinement_exact(1).unwrap());
        assert_eq!(orders(&[4.0, 2.0, 0.5]), vec![1.0, 2.0]);
    }

    #[test]
    fn hyperviscosity_and_translation() {
        let g = Grid::periodic(16).unwrap();
        assert!(hyperviscous_factor_error(&g).unwrap() < 1e-14);
        let w = random_field(&g, RandomFieldSpec::new(3, 2)).unwrap();
        let s = [0.3, -1.1, 2.0];
        let moved = w.translated(s);
        let p = [0.4, 1.0, 5.5];
        let a = FieldSampler::new(&moved, false).value(p);
        let b = FieldSampler::new(&w, false).value([p[0] - s[0], p[1] - s[1], p[2] - s[2]]);
        for d in 0..3 {
            assert!((a[d] - b[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_s4_is_detected_on_a_small_grid() {
        let g = Grid::periodic(16).unwrap();
        let basis = build_fourier_basis(&g, 1, 3.0, 0).unwrap();
        let clean = operator_identity_suite_with(&basis, 2, 1, |op| op).unwrap();
        let bad = operator_identity_suite_with(&basis, 2, 1, |op| op.with_corrupted_s4(1e-3)).unwrap();
        assert!(clean.commutator < 1e-10 && bad.commutator > 1e-6);
    }
}
