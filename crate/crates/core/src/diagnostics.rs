//! Norm tracking, the Beale-Kato-Majda functional, the stopping rule and
//! numerical probes of the a priori estimates.
//!
//! Probes report empirical constants; they never assert a particular value.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{random_field, Grid, RandomFieldSpec, VectorField};
use crate::noise::{ck0_constants, NoiseBasis};
use crate::operators::{
    biot_savart, lie_adjoint, lie_bracket, lie_derivative, s1_apply, s2_apply, s3_apply, s4_apply, LieOperand,
};
use crate::rng::splitmix64;

/// Norms of one vorticity sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormSample {
    pub l2: f64,
    pub w22: f64,
    /// Oversampled `‖ω‖_∞`.
    pub sup: f64,
    /// Oversampled `‖∇v‖_∞`.
    pub gradv_sup: f64,
    /// `‖ω‖²_{L²} + ‖Δω‖²_{L²}`.
    pub alpha_t: f64,
}

impl NormSample {
    pub fn measure(omega: &VectorField, v: &VectorField) -> Self {
        Self::measure_with(omega, v.grad_sup_norm())
    }

    /// Uses an already computed `‖∇v‖_∞`.
    pub fn measure_with(omega: &VectorField, gradv_sup: f64) -> Self {
        let l2 = omega.l2_norm();
        let lap = omega.laplacian().l2_norm();
        Self {
            l2,
            w22: omega.sobolev_norm(2.0),
            sup: omega.sup_norm(),
            gradv_sup,
            alpha_t: l2 * l2 + lap * lap,
        }
    }

    /// Measures `ω` together with its Biot-Savart velocity.
    pub fn of_vorticity(omega: &VectorField) -> Self {
        Self::measure(omega, &biot_savart(omega).field)
    }
}

/// One row of the diagnostics time series.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiagRecord {
    pub step: usize,
    pub t: f64,
    pub l2: f64,
    pub w22: f64,
    pub sup: f64,
    pub gradv_sup: f64,
    pub kappa: f64,
    /// Trapezoidal `∫₀ᵗ ‖ω‖_∞ ds` over the recorded samples.
    pub bkm_integral: f64,
    /// Running maximum of `‖ω‖_∞`.
    pub sup_max: f64,
    pub alpha_t: f64,
}

impl DiagRecord {
    /// Column order of [`DiagRecord::csv_row`].
    pub const CSV_HEADER: &'static str = "step,t,l2,w22,sup,gradv_sup,kappa,bkm_integral,alpha_t";

    pub fn start(t: f64, sample: &NormSample, kappa: f64) -> Self {
        Self {
            step: 0,
            t,
            l2: sample.l2,
            w22: sample.w22,
            sup: sample.sup,
            gradv_sup: sample.gradv_sup,
            kappa,
            bkm_integral: 0.0,
            sup_max: sample.sup,
            alpha_t: sample.alpha_t,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.step, self.t, self.l2, self.w22, self.sup, self.gradv_sup, self.kappa, self.bkm_integral, self.alpha_t
        )
    }
}

/// Advances the record by `steps` steps spanning `dt`, accumulating the
/// trapezoid `½ dt (‖ω‖_∞(t) + ‖ω‖_∞(t+dt))`.
pub fn bkm_update(prev: &DiagRecord, sample: &NormSample, kappa: f64, dt: f64, steps: usize) -> DiagRecord {
    DiagRecord {
        step: prev.step + steps,
        t: prev.t + dt,
        l2: sample.l2,
        w22: sample.w22,
        sup: sample.sup,
        gradv_sup: sample.gradv_sup,
        kappa,
        bkm_integral: prev.bkm_integral + 0.5 * dt * (prev.sup + sample.sup),
        sup_max: prev.sup_max.max(sample.sup),
        alpha_t: sample.alpha_t,
    }
}

/// Outcome of the stopping rule `‖ω‖_{W^{2,2}} ≥ R / C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopDecision {
    Continue,
    Stop { tau: f64, norm: f64, threshold: f64 },
}

/// `r = None` disables the rule.
pub fn stopping_check(record: &DiagRecord, r: Option<f64>, c_bs: f64) -> StopDecision {
    let Some(r) = r else {
        return StopDecision::Continue;
    };
    let threshold = r / c_bs;
    if record.w22 >= threshold {
        StopDecision::Stop {
            tau: record.t,
            norm: record.w22,
            threshold,
        }
    } else {
        StopDecision::Continue
    }
}

/// Largest `‖∇v‖_∞ / ‖ω‖_{W^{2,2}}` over a fixed family of probe vorticities.
pub fn biot_savart_constant(grid: &std::sync::Arc<Grid>) -> Result<f64> {
    let top = (grid.dealias_cutoff() as u32).min(8);
    let mut best: f64 = 0.0;
    for bw in 1..=top {
        for (j, decay) in [0.0, 1.0, 2.0, 3.0].into_iter().enumerate() {
            let spec = RandomFieldSpec::new(bw, 0x0b5c_0000 + 16 * bw as u64 + j as u64).decay(decay);
            let w = random_field(grid, spec)?;
            let v = biot_savart(&w).field;
            best = best.max(v.grad_sup_norm() / w.sobolev_norm(2.0));
        }
    }
    Ok(best)
}

/// Both sides of `‖∇v‖_∞ ≤ C(1 + log(‖ω‖²_{2,2} + e))‖ω‖_∞` with `C = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogInequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

pub fn log_inequality_probe(omega: &VectorField, v: &VectorField) -> LogInequalityReport {
    let lhs = v.grad_sup_norm();
    let w = omega.sobolev_norm(2.0);
    let rhs = (1.0 + (w * w + std::f64::consts::E).ln()) * omega.sup_norm();
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    LogInequalityReport { lhs, rhs, ratio }
}

/// Terms of `|∫Δℒ_uω·Δω| ≤ C‖∇u‖_∞‖ω‖²_{2,2} + C‖ω‖_∞‖∇u‖_{2,2}‖ω‖_{2,2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnReport {
    pub lhs: f64,
    pub gradient_term: f64,
    pub sup_term: f64,
    /// `lhs / (gradient_term + sup_term)`, zero when both sides vanish.
    pub constant: f64,
}

pub fn gn_estimate_probe(u: &VectorField, omega: &VectorField) -> Result<GnReport> {
    let lap = omega.laplacian();
    let lhs = lie_bracket(u, omega)?.laplacian().l2_inner(&lap).abs();
    let w = omega.sobolev_norm(2.0);
    let gradient_term = u.grad_sup_norm() * w * w;
    let sup_term = omega.sup_norm() * gradient_sobolev_norm(u, 2.0) * w;
    let denom = gradient_term + sup_term;
    let constant = if denom > 0.0 { lhs / denom } else { 0.0 };
    Ok(GnReport {
        lhs,
        gradient_term,
        sup_term,
        constant,
    })
}

/// `‖∇u‖_{W^{s,2}}` from the spectrum.
fn gradient_sobolev_norm(u: &VectorField, s: f64) -> f64 {
    let g = u.grid();
    let spec = u.spectral();
    let mut acc = 0.0;
    for idx in 0..g.len() {
        let k = g.kd(idx);
        let kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if kk == 0.0 {
            continue;
        }
        let m2: f64 = spec.iter().map(|c| c[idx].norm_sqr()).sum();
        acc += (1.0 + g.ksq(idx)).powf(s) * kk * m2;
    }
    (acc * g.volume()).sqrt()
}

/// `‖v‖_{W^{3,2}} / ‖ω‖_{W^{2,2}}` for `v` the Biot-Savart velocity; `None`
/// for `ω = 0`.
pub fn norm_equivalence_probe(omega: &VectorField) -> Option<f64> {
    let w = omega.sobolev_norm(2.0);
    (w > 0.0).then(|| biot_savart(omega).field.sobolev_norm(3.0) / w)
}

/// Largest bandwidth of test fields for which every product in the suites
/// stays below the dealiasing cutoff.
fn test_bandwidth(basis: &NoiseBasis, cap: u32) -> Result<u32> {
    let cutoff = basis.grid().dealias_cutoff() as i64;
    let room = cutoff - 2 * basis.bandwidth() as i64;
    if room < 1 {
        return Err(Error::Config(format!(
            "noise bandwidth {} leaves no room below the dealiasing cutoff {cutoff}",
            basis.bandwidth()
        )));
    }
    Ok((room as u32).min(cap))
}

fn trial_field(grid: &std::sync::Arc<Grid>, bandwidth: u32, seed: u64, trial: usize, which: u64) -> Result<VectorField> {
    let s = splitmix64(seed ^ splitmix64(((trial as u64) << 2) | which));
    random_field(grid, RandomFieldSpec::new(bandwidth, s))
}

/// Relative discrepancy, floored so that two round-off-sized values compare
/// as equal.
fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst residuals of the first-order operator identities over all modes and
/// trials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdentityReport {
    pub modes: usize,
    pub trials: usize,
    pub field_bandwidth: u32,
    /// `|⟨ℒf,g⟩ − ⟨f,ℒ*g⟩| / (‖f‖‖g‖)`.
    pub duality: f64,
    /// `‖ℒ*g + ℒg − S₂g‖ / ‖ℒ*g‖`.
    pub adjoint_identity: f64,
    /// `‖ℒS₂f − S₂ℒf + S₄f‖` over the largest of the three norms.
    pub commutator: f64,
    /// `⟨ℒ²f,f⟩ + ⟨ℒf,ℒf⟩` against `½⟨f,(S₂²+S₄)f⟩`.
    pub striking: f64,
    /// Largest `|⟨ℒ²f,f⟩ + ⟨ℒf,ℒf⟩| / (C_k⁽⁰⁾‖f‖²)`.
    pub bound_ratio: f64,
}

impl IdentityReport {
    fn merge(mut self, o: &Self) -> Self {
        self.duality = self.duality.max(o.duality);
        self.adjoint_identity = self.adjoint_identity.max(o.adjoint_identity);
        self.commutator = self.commutator.max(o.commutator);
        self.striking = self.striking.max(o.striking);
        self.bound_ratio = self.bound_ratio.max(o.bound_ratio);
        self
    }
}

/// Checks duality, `ℒ* = −ℒ + S₂`, `ℒS₂ = S₂ℒ − S₄`, the first striking
/// identity and its `C_k⁽⁰⁾` bound for every mode against `trials` random
/// pairs `(f, g)`.
pub fn operator_identity_suite(basis: &NoiseBasis, trials: usize, seed: u64) -> Result<IdentityReport> {
    operator_identity_suite_with(basis, trials, seed, |op| op)
}

/// As [`operator_identity_suite`], with a hook that may alter each operand.
#[doc(hidden)]
pub fn operator_identity_suite_with(
    basis: &NoiseBasis,
    trials: usize,
    seed: u64,
    hook: impl Fn(LieOperand) -> LieOperand + Sync,
) -> Result<IdentityReport> {
    let grid = basis.grid();
    let bw = test_bandwidth(basis, 6)?;
    let ck0 = ck0_constants(basis).constants;
    let ops: Vec<LieOperand> = (0..basis.len())
        .map(|k| basis.operand(k).map(&hook))
        .collect::<Result<_>>()?;
    let base = IdentityReport {
        modes: basis.len(),
        trials,
        field_bandwidth: bw,
        ..Default::default()
    };
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<IdentityReport> {
            let f = trial_field(grid, bw, seed, t, 0)?;
            let g = trial_field(grid, bw, seed, t, 1)?;
            let (fn2, gn) = (f.l2_norm().powi(2), g.l2_norm());
            let mut r = IdentityReport::default();
            for (xi, c0) in ops.iter().zip(&ck0) {
                let lf = lie_derivative(xi, &f)?;
                let lf2 = lf.l2_norm().powi(2);
                let s2f = s2_apply(xi, &f)?;
                let s4f = s4_apply(xi, &f)?;

                let lhs = lie_derivative(xi, &lf)?.l2_inner(&f) + lf2;
                let rhs = 0.5 * (s2_apply(xi, &s2f)?.l2_inner(&f) + s4f.l2_inner(&f));
                r.striking = r.striking.max(rel(lhs, rhs, 1e-12 * lf2));
                if *c0 > 0.0 && fn2 > 0.0 {
                    r.bound_ratio = r.bound_ratio.max(lhs.abs() / (c0 * fn2));
                }

                let ls2 = lie_derivative(xi, &s2f)?;
                let s2l = s2_apply(xi, &lf)?;
                let resid = ls2.lincomb(1.0, &s2l, -1.0).lincomb(1.0, &s4f, 1.0).l2_norm();
                let scale = ls2.l2_norm().max(s2l.l2_norm()).max(s4f.l2_norm());
                if scale > 0.0 {
                    r.commutator = r.commutator.max(resid / scale);
                }

                let adj = lie_adjoint(xi, &g)?;
                let lg = lie_derivative(xi, &g)?;
                let s2g = s2_apply(xi, &g)?;
                let resid = adj.lincomb(1.0, &lg, 1.0).lincomb(1.0, &s2g, -1.0).l2_norm();
                let scale = adj.l2_norm();
                if scale > 0.0 {
                    r.adjoint_identity = r.adjoint_identity.max(resid / scale);
                }
                let d = (lf.l2_inner(&g) - adj.l2_inner(&f)).abs();
                r.duality = r.duality.max(d / (fn2.sqrt() * gn));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial.iter().fold(base, |acc, r| acc.merge(r)))
}

/// Residual of the second-order striking identity and the measured
/// `C_k⁽²⁾` per mode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeltaStrikingReport {
    pub trials: usize,
    pub field_bandwidth: u32,
    /// `⟨Δℒ²f,Δf⟩ + ⟨Δℒf,Δℒf⟩` against its S₁–S₄ assembly.
    pub identity: f64,
    /// `max_f |⟨Δℒ²f,Δf⟩ + ⟨Δℒf,Δℒf⟩| / ‖f‖²_{W^{2,2}}` per mode.
    pub ck2: Vec<f64>,
}

/// `⟨Δℒ²f,Δf⟩ + ⟨Δℒf,Δℒf⟩`.
fn delta_lhs(xi: &LieOperand, f: &VectorField) -> Result<(f64, VectorField)> {
    let lf = lie_derivative(xi, f)?;
    let dlf = lf.laplacian();
    let lhs = lie_derivative(xi, &lf)?.laplacian().l2_inner(&f.laplacian()) + dlf.l2_norm().powi(2);
    Ok((lhs, dlf))
}

/// Evaluates
/// `⟨Δℒ²f,Δf⟩ + ⟨Δℒf,Δℒf⟩ = ⟨Δf,S₃f⟩ + ⟨Δf,S₂S₁f⟩ + ⟨S₁f,S₁f⟩
///  + ½⟨S₄Δf,Δf⟩ + ½⟨S₂²Δf,Δf⟩ + ⟨S₂Δf,S₁f⟩`
/// for every mode and `trials` random fields.
pub fn delta_striking_suite(basis: &NoiseBasis, trials: usize, seed: u64) -> Result<DeltaStrikingReport> {
    let grid = basis.grid();
    let bw = test_bandwidth(basis, 6)?;
    let ops: Vec<LieOperand> = (0..basis.len()).map(|k| basis.operand(k)).collect::<Result<_>>()?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, Vec<f64>)> {
            let f = trial_field(grid, bw, seed, t, 2)?;
            let w22 = f.sobolev_norm(2.0).powi(2);
            let df = f.laplacian();
            let mut worst: f64 = 0.0;
            let mut ck2 = Vec::with_capacity(ops.len());
            for xi in &ops {
                let (lhs, dlf) = delta_lhs(xi, &f)?;
                let s1f = s1_apply(xi, &f)?;
                let s2df = s2_apply(xi, &df)?;
                let rhs = df.l2_inner(&s3_apply(xi, &f)?)
                    + df.l2_inner(&s2_apply(xi, &s1f)?)
                    + s1f.l2_norm().powi(2)
                    + 0.5 * s4_apply(xi, &df)?.l2_inner(&df)
                    + 0.5 * s2_apply(xi, &s2df)?.l2_inner(&df)
                    + s2df.l2_inner(&s1f);
                worst = worst.max(rel(lhs, rhs, 1e-12 * dlf.l2_norm().powi(2)));
                ck2.push(lhs.abs() / w22);
            }
            Ok((worst, ck2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = DeltaStrikingReport {
        trials,
        field_bandwidth: bw,
        identity: 0.0,
        ck2: vec![0.0; basis.len()],
    };
    for (w, c) in &per_trial {
        report.identity = report.identity.max(*w);
        for (a, b) in report.ck2.iter_mut().zip(c) {
            *a = a.max(*b);
        }
    }
    Ok(report)
}

/// Measured `C_k⁽²⁾` only; cheaper than the full second-order suite.
pub fn ck2_constants(basis: &NoiseBasis, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let grid = basis.grid();
    let bw = test_bandwidth(basis, 6)?;
    let ops: Vec<LieOperand> = (0..basis.len()).map(|k| basis.operand(k)).collect::<Result<_>>()?;
    let mut out = vec![0.0f64; ops.len()];
    for t in 0..trials {
        let f = trial_field(grid, bw, seed, t, 2)?;
        let w22 = f.sobolev_norm(2.0).powi(2);
        for (o, xi) in out.iter_mut().zip(&ops) {
            *o = o.max(delta_lhs(xi, &f)?.0.abs() / w22);
        }
    }
    Ok(out)
}

/// Both striking suites at once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StrikingReport {
    pub first: IdentityReport,
    pub second: DeltaStrikingReport,
}

pub fn striking_suite(basis: &NoiseBasis, trials: usize, seed: u64) -> Result<StrikingReport> {
    Ok(StrikingReport {
        first: operator_identity_suite(basis, trials, seed)?,
        second: delta_striking_suite(basis, trials, seed)?,
    })
}

/// Empirical ratios `Σ_k‖ℒ_k f‖² / ‖f‖²_{2,2}` and `‖Σ_kℒ²_k f‖² / ‖f‖²_{2,2}`
/// over random fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseBoundReport {
    pub first_order: (f64, f64),
    pub second_order: (f64, f64),
}

pub fn noise_bound_probe(basis: &NoiseBasis, trials: usize, seed: u64) -> Result<NoiseBoundReport> {
    let grid = basis.grid();
    let bw = test_bandwidth(basis, 6)?;
    let ops: Vec<LieOperand> = (0..basis.len()).map(|k| basis.operand(k)).collect::<Result<_>>()?;
    let mut first = (f64::INFINITY, 0.0f64);
    let mut second = (f64::INFINITY, 0.0f64);
    for t in 0..trials {
        let f = trial_field(grid, bw, seed, t, 3)?;
        let w22 = f.sobolev_norm(2.0).powi(2);
        let mut s = 0.0;
        for xi in &ops {
            s += lie_derivative(xi, &f)?.l2_norm().powi(2);
        }
        let r1 = s / w22;
        // The Itô correction is half the sum of double Lie derivatives.
        let r2 = (2.0 * crate::operators::ito_correction(basis, &f)?.l2_norm()).powi(2) / w22;
        first = (first.0.min(r1), first.1.max(r1));
        second = (second.0.min(r2), second.1.max(r2));
    }
    Ok(NoiseBoundReport {
        first_order: first,
        second_order: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::build_fourier_basis;

    #[test]
    fn trapezoid_accumulation() {
        let mut r = DiagRecord::start(0.0, &NormSample { sup: 2.0, ..Default::default() }, 1.0);
        for _ in 0..10 {
            r = bkm_update(&r, &NormSample { sup: 2.0, ..Default::default() }, 1.0, 0.1, 1);
        }
        assert!((r.bkm_integral - 2.0).abs() < 1e-14);

        let dt = 1e-3;
        let mut r = DiagRecord::start(0.0, &NormSample::default(), 1.0);
        for j in 1..=1000 {
            let s = NormSample { sup: j as f64 * dt, ..Default::default() };
            let next = bkm_update(&r, &s, 1.0, dt, 1);
            assert!(next.bkm_integral >= r.bkm_integral);
            r = next;
        }
        assert!((r.bkm_integral - 0.5).abs() < 1e-6);
        assert_eq!(r.step, 1000);
    }

    #[test]
    fn zero_vorticity_has_zero_integral() {
        let g = Grid::periodic(8).unwrap();
        let w = VectorField::zeros(g);
        let s = NormSample::of_vorticity(&w);
        let mut r = DiagRecord::start(0.0, &s, 1.0);
        for _ in 0..5 {
            r = bkm_update(&r, &NormSample::of_vorticity(&w), 1.0, 0.1, 1);
        }
        assert_eq!(r.bkm_integral, 0.0);
    }

    #[test]
    fn stopping_rule_fires_at_first_crossing() {
        let mut r = DiagRecord::default();
        let mut fired = None;
        for j in 0..100 {
            r.t = j as f64 * 0.01;
            r.w22 = 1.0 + j as f64;
            if let StopDecision::Stop { tau, .. } = stopping_check(&r, Some(57.5), 1.0) {
                fired = Some((j, tau));
                break;
            }
        }
        let (j, tau) = fired.unwrap();
        assert_eq!(j, 57);
        assert!((tau - 0.57).abs() < 1e-15);
        r.w22 = 1e300;
        assert_eq!(stopping_check(&r, None, 1.0), StopDecision::Continue);
    }

    #[test]
    fn log_probe_single_mode_closed_form() {
        let g = Grid::periodic(16).unwrap();
        // ω = (0, 0, cos x) has v = (0, sin x, 0), ∇v = cos x e₂⊗e₁.
        let w = VectorField::from_fn(g.clone(), |x| [0.0, 0.0, x[0].cos()]);
        let v = biot_savart(&w).field;
        let r = log_inequality_probe(&w, &v);
        let w22 = (16.0 * std::f64::consts::PI.powi(3)).sqrt();
        let rhs = 1.0 + (w22 * w22 + std::f64::consts::E).ln();
        assert!((r.lhs - 1.0).abs() < 1e-12);
        assert!((r.rhs - rhs).abs() < 1e-10);
        let zero = VectorField::zeros(g);
        assert_eq!(log_inequality_probe(&zero, &zero).ratio, 0.0);
    }

    #[test]
    fn gn_probe_vanishes_for_constant_transport() {
        let g = Grid::periodic(16).unwrap();
        let u = VectorField::from_fn(g.clone(), |_| [0.3, -1.0, 0.7]);
        let w = random_field(&g, RandomFieldSpec::new(4, 9)).unwrap();
        let r = gn_estimate_probe(&u, &w).unwrap();
        assert!(r.lhs < 1e-10 * w.sobolev_norm(2.0).powi(2));
        let r0 = gn_estimate_probe(&u, &VectorField::zeros(g)).unwrap();
        assert_eq!((r0.lhs, r0.constant), (0.0, 0.0));
    }

    #[test]
    fn norm_equivalence_single_mode_and_scaling() {
        let g = Grid::periodic(16).unwrap();
        let w = VectorField::from_fn(g.clone(), |x| [0.0, 0.0, x[0].cos()]);
        let r = norm_equivalence_probe(&w).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let r2 = norm_equivalence_probe(&w.scaled(2.0)).unwrap();
        assert!((r - r2).abs() < 1e-14);
        assert!(norm_equivalence_probe(&VectorField::zeros(g)).is_none());
    }

    #[test]
    fn suites_pass_on_small_basis() {
        let g = Grid::periodic(16).unwrap();
        let basis = build_fourier_basis(&g, 1, 3.0, 0).unwrap();
        let r = operator_identity_suite(&basis, 3, 1).unwrap();
        assert_eq!(r.field_bandwidth, 3);
        assert!(r.duality < 1e-12, "{r:?}");
        assert!(r.adjoint_identity < 1e-12, "{r:?}");
        assert!(r.commutator < 1e-12, "{r:?}");
        assert!(r.striking < 1e-10, "{r:?}");
        assert!(r.bound_ratio <= 1.0, "{r:?}");
        let d = delta_striking_suite(&basis, 2, 1).unwrap();
        assert!(d.identity < 1e-9, "{d:?}");
        assert!(d.ck2.iter().all(|c| c.is_finite() && *c > 0.0));
        assert_eq!(ck2_constants(&basis, 2, 1).unwrap(), d.ck2);
    }

    #[test]
    fn corrupted_s4_is_detected() {
        let g = Grid::periodic(16).unwrap();
        let basis = build_fourier_basis(&g, 1, 3.0, 0).unwrap();
        let r = operator_identity_suite_with(&basis, 1, 1, |op| op.with_corrupted_s4(1e-3)).unwrap();
        assert!(r.commutator > 1e-6);
        assert!(r.striking > 1e-6);
    }
}
