//! Time integration of the vorticity equation with transport noise.
//!
//! Two schemes share one Brownian path: Euler-Maruyama on the Itô form with
//! the explicit correction `½Σℒ²_{ξ_k}ω`, and stochastic Heun on the
//! Stratonovich form. Hyperviscosity `νΔ⁵` is applied as the exact factor
//! `exp(-ν|k|¹⁰dt)` after each step.

use crate::diagnostics::{biot_savart_constant, bkm_update, stopping_check, DiagRecord, NormSample, StopDecision};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::noise::{sample_path, BrownianPath, NoiseBasis};
use crate::operators::{biot_savart, ito_correction, lie_derivative, solenoidal_bracket, LieOperand};
use crate::rng::splitmix64;

/// Tolerance on the relative divergence of admissible initial data.
pub const INITIAL_DIVERGENCE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    ItoEm,
    #[default]
    StratHeun,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ito_em" => Ok(Self::ItoEm),
            "strat_heun" => Ok(Self::StratHeun),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected ito_em or strat_heun)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Cutoff level `R` on `‖∇v‖_∞`; `None` disables both the cutoff and the
    /// stopping rule.
    pub cutoff: Option<f64>,
    pub nu: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Snapshot every this many steps; `None` keeps only the final state.
    pub snapshot_every: Option<usize>,
    /// Diagnostics row every this many steps.
    pub diag_every: usize,
    /// Include `-κℒ_vω`; off gives pure transport by the noise.
    pub advect: bool,
    /// Biot-Savart constant of the stopping rule; measured on the grid when
    /// absent.
    pub c_bs: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            cutoff: None,
            nu: 0.0,
            scheme: Scheme::StratHeun,
            seed: 0,
            snapshot_every: None,
            diag_every: 1,
            advect: true,
            c_bs: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be non-negative, got {}", self.horizon)));
        }
        if let Some(r) = self.cutoff {
            if !(r > 0.0) || r.is_nan() {
                return Err(Error::Config(format!("cutoff R must be positive, got {r}")));
            }
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be non-negative, got {}", self.nu)));
        }
        if self.diag_every == 0 || self.snapshot_every == Some(0) {
            return Err(Error::Config("cadences must be at least one step".into()));
        }
        if let Some(c) = self.c_bs {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("c_bs must be positive, got {c}")));
            }
        }
        self.steps()?;
        Ok(())
    }

    /// Number of steps covering the horizon; the horizon must be a whole
    /// number of steps.
    pub fn steps(&self) -> Result<usize> {
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(self.dt) {
            return Err(Error::Config(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }

    fn cutoff_level(&self) -> Option<f64> {
        self.cutoff.filter(|r| r.is_finite())
    }
}

/// Seed of ensemble member `member` under master seed `seed`.
pub fn member_seed(seed: u64, member: usize) -> u64 {
    splitmix64(seed ^ splitmix64(0x6d65_6d62_0000_0000 ^ member as u64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunStatus {
    Running,
    /// Stopping rule `‖ω‖_{W^{2,2}} ≥ R/C` fired.
    Stopped { tau: f64, norm: f64, threshold: f64 },
    /// The state stopped being finite.
    NonFinite { t: f64 },
    Completed,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub step: usize,
    pub omega: VectorField,
    /// Biot-Savart velocity of `omega`.
    pub v: VectorField,
    pub status: RunStatus,
}

impl SimState {
    /// Rejects data that is not divergence-free, mean-zero and dealiased.
    pub fn new(omega: VectorField) -> Result<Self> {
        let r = omega.divergence_residual();
        if r > INITIAL_DIVERGENCE_TOLERANCE {
            return Err(Error::NotSolenoidal(r));
        }
        let peak = omega.max_coefficient();
        if omega.mean().iter().any(|m| m.abs() > 1e-12 * peak.max(f64::MIN_POSITIVE)) {
            return Err(Error::Config("initial vorticity has nonzero mean".into()));
        }
        if !omega.is_finite() {
            return Err(Error::Config("initial vorticity is not finite".into()));
        }
        let trimmed = omega.dealias().without_mean();
        if omega.lincomb(1.0, &trimmed, -1.0).max_coefficient() > 1e-12 * peak {
            return Err(Error::Config("initial vorticity is not band-limited below the dealiasing cutoff".into()));
        }
        Ok(Self::at(0.0, 0, trimmed))
    }

    fn at(t: f64, step: usize, omega: VectorField) -> Self {
        let v = biot_savart(&omega).field;
        Self {
            t,
            step,
            omega,
            v,
            status: RunStatus::Running,
        }
    }
}

/// Quintic smoothstep bump: 1 on `[0, r]`, 0 on `[r+1, ∞)`, C² and
/// non-increasing in between.
pub fn smooth_cutoff(x: f64, r: f64) -> f64 {
    let s = x - r;
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `κ_R(ω) = f_R(‖∇v‖_∞)`; identically 1 without a cutoff.
pub fn cutoff_kappa(omega: &VectorField, r: Option<f64>) -> f64 {
    match r.filter(|r| r.is_finite()) {
        None => 1.0,
        Some(r) => smooth_cutoff(biot_savart(omega).field.grad_sup_norm(), r),
    }
}

fn kappa_of(v: &VectorField, cfg: &SimConfig) -> f64 {
    match cfg.cutoff_level() {
        None => 1.0,
        Some(r) => smooth_cutoff(v.grad_sup_norm(), r),
    }
}

/// Dealiased, divergence-free, mean-zero part of `f`; non-finite input is an
/// integration error at time `t`.
fn finish(f: VectorField, t: f64, what: &str) -> Result<VectorField> {
    if !f.is_finite() {
        return Err(Error::Integration {
            t,
            detail: format!("{what} is not finite (max coefficient {})", f.max_coefficient()),
        });
    }
    Ok(f.leray_project().without_mean())
}

/// `ℒ_u w` for divergence-free `u` and `w`, by sparse convolution when `u`
/// has few modes.
fn transport(u: VectorField, w: &VectorField) -> Result<VectorField> {
    let op = LieOperand::new(u)?;
    if op.is_sparse() {
        lie_derivative(&op, w)
    } else {
        solenoidal_bracket(op.field(), w)
    }
}

/// Transport field `κ dt v + Σ_k ΔB^k ξ_k` of one step, or `None` when it
/// vanishes.
fn step_field(v: &VectorField, cfg: &SimConfig, dt: f64, noise: Option<&VectorField>) -> Option<VectorField> {
    let kdt = if cfg.advect { kappa_of(v, cfg) * dt } else { 0.0 };
    match (kdt != 0.0, noise) {
        (false, None) => None,
        (true, None) => Some(v.scaled(kdt)),
        (false, Some(x)) => Some(x.clone()),
        (true, Some(x)) => Some(v.lincomb(kdt, x, 1.0)),
    }
}

/// Itô drift `-κ_R(ω)ℒ_vω + ½Σℒ²_{ξ_k}ω`.
pub fn drift(state: &SimState, basis: &NoiseBasis, cfg: &SimConfig) -> Result<VectorField> {
    let mut a = match step_field(&state.v, cfg, 1.0, None) {
        Some(u) => transport(u, &state.omega)?.scaled(-1.0),
        None => VectorField::zeros(state.omega.grid().clone()),
    };
    if !basis.is_empty() {
        a.add_scaled(1.0, &ito_correction(basis, &state.omega)?);
    }
    finish(a, state.t, "drift")
}

/// `Σ_k ΔB^k ξ_k`, or `None` when it vanishes.
fn noise_field(basis: &NoiseBasis, db: &[f64]) -> Result<Option<VectorField>> {
    if db.len() != basis.len() {
        return Err(Error::Config(format!(
            "{} Brownian increments for {} noise modes",
            db.len(),
            basis.len()
        )));
    }
    if basis.is_empty() || db.iter().all(|&b| b == 0.0) {
        return Ok(None);
    }
    Ok(Some(basis.effective_field(db)))
}

fn check_cfl(state: &SimState, cfg: &SimConfig, dt: f64) -> Result<()> {
    if !cfg.advect {
        return Ok(());
    }
    let g = state.omega.grid();
    let courant = dt * state.v.grid_max_norm() * g.n() as f64 / g.length();
    if courant > 1.0 {
        let dt_max = dt / courant;
        return Err(Error::Cfl { courant, dt_max });
    }
    Ok(())
}

/// Multiplies every mode by `exp(-ν|k|¹⁰dt)`.
pub fn apply_hyperviscosity(f: &VectorField, nu: f64, dt: f64) -> VectorField {
    if nu == 0.0 {
        return f.clone();
    }
    let g = f.grid().clone();
    f.map_symbol(|idx| (-nu * g.ksq(idx).powi(5) * dt).exp())
}

fn advance(state: &SimState, omega: VectorField, cfg: &SimConfig, dt: f64) -> Result<SimState> {
    let omega = finish(apply_hyperviscosity(&omega, cfg.nu, dt), state.t + dt, "state")?;
    Ok(SimState::at(state.t + dt, state.step + 1, omega))
}

/// `ω ← ω + dt·drift − ℒ_{ΣΔB^kξ_k}ω`, then the hyperviscous factor.
pub fn step_ito_em(state: &SimState, basis: &NoiseBasis, db: &[f64], cfg: &SimConfig, dt: f64) -> Result<SimState> {
    check_cfl(state, cfg, dt)?;
    let noise = noise_field(basis, db)?;
    let w = &state.omega;
    let mut next = match step_field(&state.v, cfg, dt, noise.as_ref()) {
        Some(u) => w.lincomb(1.0, &transport(u, w)?, -1.0),
        None => w.clone(),
    };
    if !basis.is_empty() {
        next.add_scaled(dt, &ito_correction(basis, w)?);
    }
    advance(state, next, cfg, dt)
}

/// Stochastic Heun on the Stratonovich form, then the hyperviscous factor.
/// Drift and noise share one transport field per stage, since `ℒ_u` is
/// linear in `u`.
pub fn step_strat_heun(
    state: &SimState,
    basis: &NoiseBasis,
    db: &[f64],
    cfg: &SimConfig,
    dt: f64,
) -> Result<SimState> {
    check_cfl(state, cfg, dt)?;
    let noise = noise_field(basis, db)?;
    let w = &state.omega;
    let Some(u0) = step_field(&state.v, cfg, dt, noise.as_ref()) else {
        return advance(state, w.clone(), cfg, dt);
    };
    let slope0 = transport(u0, w)?;
    let pred = finish(w.lincomb(1.0, &slope0, -1.0), state.t + dt, "predictor")?;
    let pred_v = biot_savart(&pred).field;
    let mut next = w.lincomb(1.0, &slope0, -0.5);
    if let Some(u1) = step_field(&pred_v, cfg, dt, noise.as_ref()) {
        next.add_scaled(-0.5, &transport(u1, &pred)?);
    }
    advance(state, next, cfg, dt)
}

pub fn step(state: &SimState, basis: &NoiseBasis, db: &[f64], cfg: &SimConfig, dt: f64) -> Result<SimState> {
    match cfg.scheme {
        Scheme::ItoEm => step_ito_em(state, basis, db, cfg, dt),
        Scheme::StratHeun => step_strat_heun(state, basis, db, cfg, dt),
    }
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopInfo {
    pub status: RunStatus,
    pub t: f64,
    pub steps: usize,
    /// Threshold `R / C` of the stopping rule, when enabled.
    pub threshold: Option<f64>,
    pub c_bs: Option<f64>,
}

impl StopInfo {
    pub fn stopped(&self) -> bool {
        matches!(self.status, RunStatus::Stopped { .. } | RunStatus::NonFinite { .. })
    }

    /// `key = value` lines describing the stop.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let (kind, extra) = match self.status {
            RunStatus::Stopped { tau, norm, threshold } => {
                ("stopping_rule", format!("tau = {tau:e}\nnorm_w22 = {norm:e}\nrule_threshold = {threshold:e}\n"))
            }
            RunStatus::NonFinite { t } => ("non_finite", format!("tau = {t:e}\n")),
            RunStatus::Completed => ("completed", String::new()),
            RunStatus::Running => ("running", String::new()),
        };
        s.push_str(&format!("status = \"{kind}\"\nt = {:e}\nsteps = {}\n", self.t, self.steps));
        s.push_str(&extra);
        if let Some(c) = self.c_bs {
            s.push_str(&format!("c_bs = {c:e}\n"));
        }
        s
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Record of the initial state.
    pub initial: DiagRecord,
    /// One record per diagnostics interval, plus the final step if it falls
    /// between intervals.
    pub records: Vec<DiagRecord>,
    pub snapshots: Vec<(f64, VectorField)>,
    pub stop: StopInfo,
    pub final_state: SimState,
}

/// Integrates to the horizon on a freshly sampled Brownian path seeded by
/// `cfg.seed`, collecting snapshots in memory.
pub fn run(cfg: &SimConfig, basis: &NoiseBasis, omega0: VectorField) -> Result<Trajectory> {
    let path = sample_path(basis, cfg.steps()?, cfg.dt, cfg.seed)?;
    let mut snaps = Vec::new();
    let mut traj = run_with_path(cfg, basis, omega0, &path, |s| {
        snaps.push((s.t, s.omega.clone()));
        Ok(())
    })?;
    traj.snapshots = snaps;
    Ok(traj)
}

/// Integrates along `path`, whose step must equal `cfg.dt`. `on_snapshot` is
/// called with the initial state and then at the snapshot cadence.
pub fn run_with_path(
    cfg: &SimConfig,
    basis: &NoiseBasis,
    omega0: VectorField,
    path: &BrownianPath,
    mut on_snapshot: impl FnMut(&SimState) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let nsteps = cfg.steps()?;
    if (path.dt() - cfg.dt).abs() > 1e-12 * cfg.dt || path.nsteps() < nsteps || path.nmodes() != basis.len() {
        return Err(Error::Config(format!(
            "Brownian path ({} steps of {}, {} modes) does not cover {nsteps} steps of {} for {} modes",
            path.nsteps(),
            path.dt(),
            path.nmodes(),
            cfg.dt,
            basis.len()
        )));
    }
    if !omega0.grid().same_as(basis.grid()) {
        return Err(Error::GridMismatch("initial vorticity and noise basis".into()));
    }
    let mut state = SimState::new(omega0)?;
    let rule = cfg.cutoff_level();
    let c_bs = match (rule, cfg.c_bs) {
        (None, c) => c,
        (Some(_), Some(c)) => Some(c),
        (Some(_), None) => Some(biot_savart_constant(state.omega.grid())?),
    };
    let threshold = rule.zip(c_bs).map(|(r, c)| r / c);

    let initial = DiagRecord::start(0.0, &NormSample::measure(&state.omega, &state.v), kappa_of(&state.v, cfg));
    let mut last = initial;
    let mut records = Vec::new();
    if cfg.snapshot_every.is_some() {
        on_snapshot(&state)?;
    }

    let mut status = RunStatus::Completed;
    if let Some(th) = threshold {
        let w22 = state.omega.sobolev_norm(2.0);
        if w22 >= th {
            status = RunStatus::Stopped { tau: 0.0, norm: w22, threshold: th };
        }
    }
    while status == RunStatus::Completed && state.step < nsteps {
        let next = match step(&state, basis, path.increment(state.step), cfg, cfg.dt) {
            Ok(s) => s,
            Err(Error::Integration { t, detail }) => {
                log::warn!("integration failed at t = {t}: {detail}");
                status = RunStatus::NonFinite { t };
                break;
            }
            Err(e) => return Err(e),
        };
        state = next;
        let due = state.step % cfg.diag_every == 0 || state.step == nsteps;
        let mut fired = None;
        if threshold.is_some() {
            let mut probe = last;
            probe.t = state.t;
            probe.w22 = state.omega.sobolev_norm(2.0);
            if let StopDecision::Stop { tau, norm, threshold } = stopping_check(&probe, rule, c_bs.unwrap_or(1.0)) {
                fired = Some(RunStatus::Stopped { tau, norm, threshold });
            }
        }
        if due || fired.is_some() {
            let sample = NormSample::measure(&state.omega, &state.v);
            let span = state.t - last.t;
            last = bkm_update(&last, &sample, kappa_of(&state.v, cfg), span, state.step - last.step);
            records.push(last);
        }
        if cfg.snapshot_every.is_some_and(|k| state.step % k == 0) || (fired.is_some() && cfg.snapshot_every.is_some()) {
            on_snapshot(&state)?;
        }
        if let Some(f) = fired {
            status = f;
        }
    }
    state.status = status;
    Ok(Trajectory {
        initial,
        records,
        snapshots: Vec::new(),
        stop: StopInfo {
            status,
            t: state.t,
            steps: state.step,
            threshold,
            c_bs,
        },
        final_state: state,
    })
}
