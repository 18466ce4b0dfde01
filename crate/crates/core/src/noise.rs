//! Transport-noise bases `ξ_k = λ_k e_k` and the Brownian motions that drive
//! them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Complex, Grid, Snapshot, VectorField};
use crate::operators::{ItoTensors, LieOperand, DIVERGENCE_TOLERANCE};
use crate::rng::CounterRng;

/// The universal constant in `C_k⁽⁰⁾ = c(‖ξ‖_∞‖Δξ‖_∞ + ‖∇ξ‖²_∞)`.
pub const CK0_CONSTANT: f64 = 48.0;

/// Coefficients below this fraction of a mode's peak are treated as zero
/// when a mode is stored sparsely.
const SPARSE_CUTOFF: f64 = 1e-13;

/// Trigonometric profile of a Fourier noise mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Sin,
    Cos,
}

/// One noise field `ξ_k`, stored as its nonzero spectral coefficients.
#[derive(Clone, Debug)]
pub struct NoiseMode {
    pub label: String,
    /// Integer wavevector for Fourier modes.
    pub wavevector: Option<[i64; 3]>,
    pub lambda: f64,
    entries: Vec<(usize, [Complex; 3])>,
}

impl NoiseMode {
    /// Nonzero spectral coefficients of `ξ_k` as `(flat index, vector)`.
    pub fn entries(&self) -> &[(usize, [Complex; 3])] {
        &self.entries
    }

    fn from_field(label: String, wavevector: Option<[i64; 3]>, lambda: f64, xi: &VectorField) -> Self {
        let s = xi.spectral();
        let peak = xi.max_coefficient();
        let entries = (0..xi.grid().len())
            .filter_map(|i| {
                let c = [s[0][i], s[1][i], s[2][i]];
                (peak > 0.0 && c.iter().any(|z| z.norm() > SPARSE_CUTOFF * peak)).then_some((i, c))
            })
            .collect();
        Self {
            label,
            wavevector,
            lambda,
            entries,
        }
    }
}

/// Ordered family of divergence-free transport fields on one grid.
#[derive(Debug)]
pub struct NoiseBasis {
    grid: Arc<Grid>,
    modes: Vec<NoiseMode>,
    alpha: Option<f64>,
    kmax: Option<u32>,
    seed: u64,
    ito: OnceLock<ItoTensors>,
}

impl Clone for NoiseBasis {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            modes: self.modes.clone(),
            alpha: self.alpha,
            kmax: self.kmax,
            seed: self.seed,
            ito: OnceLock::new(),
        }
    }
}

impl NoiseBasis {
    pub fn empty(grid: Arc<Grid>) -> Self {
        Self::assemble(grid, Vec::new(), None, None, 0)
    }

    fn assemble(grid: Arc<Grid>, modes: Vec<NoiseMode>, alpha: Option<f64>, kmax: Option<u32>, seed: u64) -> Self {
        Self {
            grid,
            modes,
            alpha,
            kmax,
            seed,
            ito: OnceLock::new(),
        }
    }

    /// Basis from explicit shapes `e_k` and amplitudes `λ_k`; each shape must
    /// be divergence-free.
    pub fn from_fields(grid: Arc<Grid>, fields: Vec<(String, f64, VectorField)>) -> Result<Self> {
        let mut modes = Vec::with_capacity(fields.len());
        for (label, lambda, e) in fields {
            if !e.grid().same_as(&grid) {
                return Err(Error::GridMismatch(format!("noise mode {label}")));
            }
            let r = e.divergence_residual();
            if r > DIVERGENCE_TOLERANCE {
                return Err(Error::NotSolenoidal(r));
            }
            modes.push(NoiseMode::from_field(label, None, lambda, &e.scaled(lambda)));
        }
        Ok(Self::assemble(grid, modes, None, None, 0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn kmax(&self) -> Option<u32> {
        self.kmax
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dense `ξ_k`.
    pub fn field(&self, k: usize) -> VectorField {
        self.combination(&[(k, 1.0)])
    }

    pub fn operand(&self, k: usize) -> Result<LieOperand> {
        LieOperand::new(self.field(k))
    }

    /// `Σ_k w_k ξ_k`.
    pub fn effective_field(&self, weights: &[f64]) -> VectorField {
        assert_eq!(weights.len(), self.len(), "one weight per noise mode");
        let pairs: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
        self.combination(&pairs)
    }

    fn combination(&self, pairs: &[(usize, f64)]) -> VectorField {
        let n = self.grid.len();
        let mut spec: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![Complex::default(); n]);
        for &(k, w) in pairs {
            if w == 0.0 {
                continue;
            }
            for (idx, c) in &self.modes[k].entries {
                for d in 0..3 {
                    spec[d][*idx] += c[d] * w;
                }
            }
        }
        VectorField::from_spectral(self.grid.clone(), spec).with_band(self.bandwidth() as usize)
    }

    /// Pointwise tensors for the Itô correction (built on first use).
    pub fn ito_tensors(&self) -> &ItoTensors {
        self.ito.get_or_init(|| ItoTensors::new(self))
    }

    /// Largest integer wavenumber component of any mode.
    pub fn bandwidth(&self) -> u64 {
        self.modes
            .iter()
            .flat_map(|m| m.entries.iter())
            .flat_map(|(i, _)| self.grid.mode_of(*i))
            .map(|c| c.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Checks that every mode is divergence-free, mean-zero and real.
    pub fn check_invariants(&self) -> Result<()> {
        for (k, m) in self.modes.iter().enumerate() {
            let f = self.field(k);
            let r = f.divergence_residual();
            if r > DIVERGENCE_TOLERANCE {
                return Err(Error::NotSolenoidal(r));
            }
            let peak = f.max_coefficient();
            if f.mean().iter().any(|c| c.abs() > 1e-12 * peak) {
                return Err(Error::Config(format!("noise mode {} has nonzero mean", m.label)));
            }
            let s = f.spectral();
            for &(i, c) in &m.entries {
                let j = self.grid.negated(i);
                for d in 0..3 {
                    if (c[d] - s[d][j].conj()).norm() > 1e-12 * peak {
                        return Err(Error::Config(format!("noise mode {} is not real", m.label)));
                    }
                }
            }
            if !f.is_finite() {
                return Err(Error::Config(format!("noise mode {} is not finite", m.label)));
            }
        }
        Ok(())
    }
}

/// Representatives of `±m` pairs with `0 < |m| <= kmax`, ordered by `|m|²`
/// then lexicographically.
fn half_space_wavevectors(kmax: u32) -> Vec<[i64; 3]> {
    let k = kmax as i64;
    let mut out = Vec::new();
    for x in -k..=k {
        for y in -k..=k {
            for z in -k..=k {
                let m = [x, y, z];
                let r2 = x * x + y * y + z * z;
                if r2 == 0 || r2 > k * k {
                    continue;
                }
                if m.iter().copied().find(|&c| c != 0).is_some_and(|c| c > 0) {
                    out.push(m);
                }
            }
        }
    }
    out.sort_by_key(|m| (m[0] * m[0] + m[1] * m[1] + m[2] * m[2], *m));
    out
}

/// Orthonormal pair spanning the plane orthogonal to `m`: Gram-Schmidt of the
/// axis with the smallest `|m_j|` (lowest index on ties), then `m̂ × p₁`.
pub fn polarizations(m: [i64; 3]) -> [[f64; 3]; 2] {
    let norm = ((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).sqrt();
    let k = [m[0] as f64 / norm, m[1] as f64 / norm, m[2] as f64 / norm];
    let axis = (0..3).min_by_key(|&j| m[j].unsigned_abs()).unwrap();
    let mut p1 = [0.0; 3];
    p1[axis] = 1.0;
    let dot = k[axis];
    for d in 0..3 {
        p1[d] -= dot * k[d];
    }
    let pn = (p1[0] * p1[0] + p1[1] * p1[1] + p1[2] * p1[2]).sqrt();
    for v in &mut p1 {
        *v /= pn;
    }
    let p2 = [
        k[1] * p1[2] - k[2] * p1[1],
        k[2] * p1[0] - k[0] * p1[2],
        k[0] * p1[1] - k[1] * p1[0],
    ];
    [p1, p2]
}

/// Sine and cosine modes `λ_m e` with `e = c p sin(2π m·x/L)` or
/// `c p cos(2π m·x/L)`, `c = √(2/L³)` so that every `e` has unit L² norm, for
/// every wavevector pair `0 < |m| <= kmax` and both polarizations, with
/// `λ_m = |m|^{-alpha}`.
pub fn build_fourier_basis(grid: &Arc<Grid>, kmax: u32, alpha: f64, seed: u64) -> Result<NoiseBasis> {
    if 6 * kmax as usize > grid.n() {
        return Err(Error::Config(format!(
            "noise kmax = {kmax} exceeds n/6 for n = {}",
            grid.n()
        )));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!("noise exponent alpha = {alpha} must be positive")));
    }
    let unit = (2.0 / grid.length().powi(3)).sqrt();
    let mut modes = Vec::new();
    for m in half_space_wavevectors(kmax) {
        let r = ((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).sqrt();
        let lambda = r.powf(-alpha);
        let amp = unit * lambda;
        let pos = grid.index_of_mode(m).expect("kmax checked");
        let neg = grid.index_of_mode([-m[0], -m[1], -m[2]]).expect("kmax checked");
        for profile in [Profile::Sin, Profile::Cos] {
            for (pi, p) in polarizations(m).iter().enumerate() {
                // sin θ = (e^{iθ} - e^{-iθ}) / 2i, cos θ = (e^{iθ} + e^{-iθ}) / 2
                let c = match profile {
                    Profile::Sin => Complex::new(0.0, -0.5 * amp),
                    Profile::Cos => Complex::new(0.5 * amp, 0.0),
                };
                let cp: [Complex; 3] = std::array::from_fn(|d| c * p[d]);
                let cn: [Complex; 3] = std::array::from_fn(|d| cp[d].conj());
                let entries = if lambda == 0.0 { Vec::new() } else { vec![(pos, cp), (neg, cn)] };
                modes.push(NoiseMode {
                    label: format!(
                        "({},{},{}) {} p{}",
                        m[0],
                        m[1],
                        m[2],
                        if profile == Profile::Sin { "sin" } else { "cos" },
                        pi + 1
                    ),
                    wavevector: Some(m),
                    lambda,
                    entries,
                });
            }
        }
    }
    Ok(NoiseBasis::assemble(grid.clone(), modes, Some(alpha), Some(kmax), seed))
}

/// Result of the `Σ λ_k² |k|² < ∞` check.
#[derive(Clone, Debug, PartialEq)]
pub struct SummabilityReport {
    /// Sum over the modes actually present.
    pub sum_lambda_k2_k2: f64,
    /// Integral-test estimate of the omitted tail (infinite when divergent).
    pub tail_estimate: f64,
    pub converged: bool,
}

/// `Σ_k λ_k² |k|²` over the basis plus an integral-test tail.
///
/// For Fourier bases `|k|` is the integer wavevector length and the tail
/// beyond `kmax` is `2∫ 4πr² r^{2-2α} dr`, two modes per lattice point; it is
/// finite exactly when `α > 5/2`. Other bases are finite sums, and there
/// `|k|²` is the Rayleigh quotient `‖∇ξ_k‖²/‖ξ_k‖²` in integer units.
pub fn summability_check(basis: &NoiseBasis) -> SummabilityReport {
    let scale = basis.grid().wavenumber_scale();
    let mut sum = 0.0;
    for (k, m) in basis.modes().iter().enumerate() {
        sum += match m.wavevector {
            Some(w) => m.lambda * m.lambda * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) as f64,
            None => {
                let f = basis.field(k);
                let g = f.sobolev_norm(1.0).powi(2) - f.sobolev_norm(0.0).powi(2);
                let l2 = f.l2_norm().powi(2);
                if l2 == 0.0 {
                    0.0
                } else {
                    m.lambda * m.lambda * g / l2 / (scale * scale)
                }
            }
        };
    }
    let (tail, converged) = match (basis.alpha(), basis.kmax()) {
        (Some(alpha), Some(kmax)) => {
            if alpha > 2.5 {
                let r = kmax as f64 + 0.5;
                (8.0 * std::f64::consts::PI * r.powf(5.0 - 2.0 * alpha) / (2.0 * alpha - 5.0), true)
            } else {
                (f64::INFINITY, false)
            }
        }
        _ => (0.0, sum.is_finite()),
    };
    SummabilityReport {
        sum_lambda_k2_k2: sum,
        tail_estimate: tail,
        converged,
    }
}

/// Per-mode `C_k⁽⁰⁾` with running partial sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Ck0Report {
    pub constants: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

impl Ck0Report {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

/// Sup of `|2 Re(c e^{iθ})|` over θ, `c` stacked over components.
fn single_pair_sup(c: &[Complex]) -> f64 {
    let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
    for z in c {
        a += z.re * z.re;
        b += z.im * z.im;
        ab += z.re * z.im;
    }
    let top = 0.5 * (a + b) + (0.25 * (a - b) * (a - b) + ab * ab).sqrt();
    2.0 * top.sqrt()
}

/// `(‖ξ‖_∞, ‖∇ξ‖_∞, ‖Δξ‖_∞)` for one mode.
fn mode_sup_norms(basis: &NoiseBasis, k: usize) -> [f64; 3] {
    let g = basis.grid();
    let e = &basis.modes[k].entries;
    let single_pair = e.len() == 2 && g.negated(e[0].0) == e[1].0 && e[0].0 != e[1].0;
    if single_pair {
        // Supported on one ±k pair: the sup over the torus is the sup over the
        // phase θ = k·x, which is available in closed form.
        let (idx, c) = e[0];
        let kd = g.kd(idx);
        let k2 = g.ksq(idx);
        let grad: Vec<Complex> = (0..9).map(|p| Complex::new(0.0, kd[p % 3]) * c[p / 3]).collect();
        let lap: Vec<Complex> = c.iter().map(|z| -z * k2).collect();
        [single_pair_sup(&c), single_pair_sup(&grad), single_pair_sup(&lap)]
    } else if e.is_empty() {
        [0.0; 3]
    } else {
        let f = basis.field(k);
        [f.sup_norm(), f.grad_sup_norm(), f.laplacian().sup_norm()]
    }
}

/// `C_k⁽⁰⁾ = 48(‖ξ_k‖_∞‖Δξ_k‖_∞ + ‖∇ξ_k‖²_∞)` per mode; `∇` uses the pointwise
/// Frobenius norm.
pub fn ck0_constants(basis: &NoiseBasis) -> Ck0Report {
    let constants: Vec<f64> = (0..basis.len())
        .map(|k| {
            let [s, g, l] = mode_sup_norms(basis, k);
            CK0_CONSTANT * (s * l + g * g)
        })
        .collect();
    let partial_sums = constants
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect();
    Ck0Report {
        constants,
        partial_sums,
    }
}

/// Least-squares slope of `log(shell increment)` against `log(K)`, where the
/// shell `K` collects Fourier modes with `K-1 < |k| <= K`. A slope below `-1`
/// means the partial sums of `values` stabilize.
pub fn shell_decay_exponent(basis: &NoiseBasis, values: &[f64]) -> Option<f64> {
    let mut shells: BTreeMap<u64, f64> = BTreeMap::new();
    for (m, v) in basis.modes().iter().zip(values) {
        let w = m.wavevector?;
        let r = ((w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) as f64).sqrt();
        *shells.entry(r.ceil() as u64).or_default() += v;
    }
    let pts: Vec<(f64, f64)> = shells
        .into_iter()
        .filter(|&(k, v)| k >= 2 && v > 0.0)
        .map(|(k, v)| ((k as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

const BROWNIAN_DOMAIN: u64 = 0xb20_3a11;

/// Discretized Brownian increments for `nmodes` independent motions.
///
/// Increments are rounded to a power-of-two quantum (about `2⁻⁴⁰√dt`) that
/// halves at each refinement level. All arithmetic on them is then exact, so
/// the two halves produced by [`BrownianPath::refine`] sum bit-exactly to the
/// coarse increment.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    seed: u64,
    dt: f64,
    nsteps: usize,
    nmodes: usize,
    level: u32,
    quantum: f64,
    increments: Vec<f64>,
}

fn quantize(x: f64, q: f64) -> f64 {
    (x / q).round() * q
}

impl BrownianPath {
    pub fn sample(nmodes: usize, nsteps: usize, dt: f64, seed: u64) -> Result<Self> {
        if nsteps == 0 {
            return Err(Error::Config("Brownian path needs at least one step".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("time step {dt} must be positive")));
        }
        let quantum = 2f64.powi(dt.sqrt().log2().ceil() as i32 - 40);
        let rng = CounterRng::derive(seed, BROWNIAN_DOMAIN);
        let sd = dt.sqrt();
        let mut increments = vec![0.0; nmodes * nsteps];
        for k in 0..nmodes {
            for j in 0..nsteps {
                increments[j * nmodes + k] = quantize(sd * rng.normal(k as u64, j as u64), quantum);
            }
        }
        Ok(Self {
            seed,
            dt,
            nsteps,
            nmodes,
            level: 0,
            quantum,
            increments,
        })
    }

    /// The same path at half the step, via Brownian-bridge midpoints.
    pub fn refine(&self) -> Self {
        let level = self.level + 1;
        let quantum = self.quantum * 0.5;
        let rng = CounterRng::derive(self.seed, BROWNIAN_DOMAIN);
        let sd = (self.dt / 4.0).sqrt();
        let m = self.nmodes;
        let mut increments = vec![0.0; 2 * self.increments.len()];
        for k in 0..m {
            let stream = ((level as u64) << 32) | k as u64;
            for j in 0..self.nsteps {
                let db = self.increments[j * m + k];
                let h1 = quantize(0.5 * db + sd * rng.normal(stream, j as u64), quantum);
                increments[2 * j * m + k] = h1;
                increments[(2 * j + 1) * m + k] = db - h1;
            }
        }
        Self {
            seed: self.seed,
            dt: self.dt * 0.5,
            nsteps: 2 * self.nsteps,
            nmodes: m,
            level,
            quantum,
            increments,
        }
    }

    /// Pair sums of consecutive increments, i.e. the path at twice the step.
    pub fn coarsen(&self) -> Option<Self> {
        if self.level == 0 || self.nsteps % 2 != 0 {
            return None;
        }
        let m = self.nmodes;
        let mut increments = vec![0.0; self.increments.len() / 2];
        for j in 0..self.nsteps / 2 {
            for k in 0..m {
                increments[j * m + k] = self.increments[2 * j * m + k] + self.increments[(2 * j + 1) * m + k];
            }
        }
        Some(Self {
            seed: self.seed,
            dt: self.dt * 2.0,
            nsteps: self.nsteps / 2,
            nmodes: m,
            level: self.level - 1,
            quantum: self.quantum * 2.0,
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nsteps(&self) -> usize {
        self.nsteps
    }

    pub fn nmodes(&self) -> usize {
        self.nmodes
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `ΔB^k` for step `j`, one entry per mode.
    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.nmodes..(step + 1) * self.nmodes]
    }

    /// `B^k(steps·dt)`.
    pub fn value_at(&self, steps: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.nmodes];
        for j in 0..steps {
            for (acc, d) in b.iter_mut().zip(self.increment(j)) {
                *acc += d;
            }
        }
        b
    }
}

/// Brownian path with one motion per basis mode.
pub fn sample_path(basis: &NoiseBasis, nsteps: usize, dt: f64, seed: u64) -> Result<BrownianPath> {
    BrownianPath::sample(basis.len(), nsteps, dt, seed)
}

#[derive(Serialize, Deserialize)]
struct BasisManifest {
    n: usize,
    length: f64,
    alpha: Option<f64>,
    kmax: Option<u32>,
    seed: u64,
    #[serde(default, rename = "mode")]
    modes: Vec<ModeEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModeEntry {
    label: String,
    lambda: f64,
    file: String,
    wavevector: Option<[i64; 3]>,
}

/// Name of the manifest inside an exported basis directory.
pub const BASIS_MANIFEST: &str = "basis.toml";

/// Writes every `ξ_k` as a snapshot plus a `basis.toml` manifest.
pub fn export_basis(basis: &NoiseBasis, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(basis.len());
    for (k, m) in basis.modes().iter().enumerate() {
        let file = format!("mode_{k:04}.seu");
        Snapshot::from_field(&basis.field(k), 0.0).write(&dir.join(&file))?;
        entries.push(ModeEntry {
            label: m.label.clone(),
            lambda: m.lambda,
            file,
            wavevector: m.wavevector,
        });
    }
    let manifest = BasisManifest {
        n: basis.grid().n(),
        length: basis.grid().length(),
        alpha: basis.alpha(),
        kmax: basis.kmax(),
        seed: basis.seed(),
        modes: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(BASIS_MANIFEST), text)?;
    Ok(())
}

/// Reads a basis written by [`export_basis`] onto `grid`.
pub fn import_basis(dir: &Path, grid: &Arc<Grid>) -> Result<NoiseBasis> {
    let path = dir.join(BASIS_MANIFEST);
    let text = std::fs::read_to_string(&path)?;
    let manifest: BasisManifest = toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.n != grid.n() || manifest.length != grid.length() {
        return Err(Error::GridMismatch(format!(
            "basis built for n = {}, L = {}",
            manifest.n, manifest.length
        )));
    }
    let mut modes = Vec::with_capacity(manifest.modes.len());
    for e in manifest.modes {
        let xi = Snapshot::read(&dir.join(&e.file))?.into_field(grid)?;
        let r = xi.divergence_residual();
        if r > DIVERGENCE_TOLERANCE {
            return Err(Error::NotSolenoidal(r));
        }
        modes.push(NoiseMode::from_field(e.label, e.wavevector, e.lambda, &xi));
    }
    Ok(NoiseBasis::assemble(grid.clone(), modes, manifest.alpha, manifest.kmax, manifest.seed))
}
