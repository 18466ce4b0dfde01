//! Periodic fields on the torus `[0, L)³` and their spectral calculus.
//!
//! Spectral coefficients are Fourier-series coefficients: the forward
//! transform carries the `1/n³` factor, so `f(x) = Σ_k f̂(k) e^{ik·x}` and
//! `∫ f·g dx = L³ Σ_k Re(f̂(k) conj ĝ(k))`.
//!
//! First derivatives use the wavenumber `2πm/L` with the Nyquist index
//! zeroed (odd symbols must vanish there to keep real fields real); even
//! symbols such as the Laplacian use the full `|k|²`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft3;
use crate::rng::CounterRng;

pub type Complex = Complex64;

const ZERO: Complex = Complex::new(0.0, 0.0);

/// Spectral multiplier applied while packing inverse transforms.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Symbol {
    One,
    /// `i k_j`
    D(usize),
    /// `-k_a k_b`
    DD(usize, usize),
}

impl Symbol {
    #[inline]
    fn apply(self, k: &[f64; 3], c: Complex) -> Complex {
        match self {
            Symbol::One => c,
            Symbol::D(j) => Complex::new(-c.im * k[j], c.re * k[j]),
            Symbol::DD(a, b) => c * (-k[a] * k[b]),
        }
    }
}

/// Uniform periodic grid with `n` points per axis.
#[derive(Debug)]
pub struct Grid {
    n: usize,
    length: f64,
    mode: Vec<i64>,
    keep: Vec<bool>,
    kd_flat: Vec<[f64; 3]>,
    ksq_flat: Vec<f64>,
    neg_flat: Vec<u32>,
    keep_flat: Vec<bool>,
    fft: Fft3,
    fine: OnceLock<Fft3>,
}

impl Grid {
    /// `n` must be even, at least 8 and have no prime factors other than 2
    /// and 3.
    pub fn new(n: usize, length: f64) -> Result<Arc<Self>> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::Config(format!("grid size n = {n} must be even and >= 8")));
        }
        let mut r = n;
        for p in [2, 3] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r != 1 {
            return Err(Error::Config(format!(
                "grid size n = {n} must factor into 2s and 3s"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!("domain length {length} must be positive")));
        }
        let scale = std::f64::consts::TAU / length;
        let mode: Vec<i64> = (0..n)
            .map(|i| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let kd: Vec<f64> = mode
            .iter()
            .map(|&m| if 2 * m.unsigned_abs() as usize == n { 0.0 } else { m as f64 * scale })
            .collect();
        let ksq: Vec<f64> = mode.iter().map(|&m| (m as f64 * scale).powi(2)).collect();
        let keep: Vec<bool> = mode.iter().map(|&m| 3 * m.unsigned_abs() as usize <= n).collect();
        let neg: Vec<usize> = (0..n).map(|i| (n - i) % n).collect();
        let total = n * n * n;
        let mut kd_flat = Vec::with_capacity(total);
        let mut ksq_flat = Vec::with_capacity(total);
        let mut neg_flat = Vec::with_capacity(total);
        let mut keep_flat = Vec::with_capacity(total);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    kd_flat.push([kd[a], kd[b], kd[c]]);
                    ksq_flat.push(ksq[a] + ksq[b] + ksq[c]);
                    neg_flat.push(((neg[a] * n + neg[b]) * n + neg[c]) as u32);
                    keep_flat.push(keep[a] && keep[b] && keep[c]);
                }
            }
        }
        Ok(Arc::new(Self {
            n,
            length,
            mode,
            keep,
            kd_flat,
            ksq_flat,
            neg_flat,
            keep_flat,
            fft: Fft3::new(n),
            fine: OnceLock::new(),
        }))
    }

    /// Grid on the standard `2π` torus.
    pub fn periodic(n: usize) -> Result<Arc<Self>> {
        Self::new(n, std::f64::consts::TAU)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of grid points, `n³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// `2π/L`, the wavenumber of integer mode 1.
    pub fn wavenumber_scale(&self) -> f64 {
        std::f64::consts::TAU / self.length
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    /// Integer wavenumber triple of a flat spectral index.
    pub fn mode_of(&self, idx: usize) -> [i64; 3] {
        let [a, b, c] = self.unindex(idx);
        [self.mode[a], self.mode[b], self.mode[c]]
    }

    /// Flat spectral index of an integer wavenumber triple.
    pub fn index_of_mode(&self, m: [i64; 3]) -> Option<usize> {
        let n = self.n as i64;
        let mut out = [0usize; 3];
        for (o, &mi) in out.iter_mut().zip(&m) {
            if mi > n / 2 || mi <= -n / 2 {
                return None;
            }
            *o = mi.rem_euclid(n) as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    /// Derivative wavenumber vector at a flat index.
    #[inline]
    pub fn kd(&self, idx: usize) -> [f64; 3] {
        self.kd_flat[idx]
    }

    /// Full `|k|²` at a flat index.
    #[inline]
    pub fn ksq(&self, idx: usize) -> f64 {
        self.ksq_flat[idx]
    }

    /// Whether the 2/3 rule keeps this mode.
    #[inline]
    pub fn keeps(&self, idx: usize) -> bool {
        self.keep_flat[idx]
    }

    /// Largest integer wavenumber that survives dealiasing.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    #[inline]
    pub fn negated(&self, idx: usize) -> usize {
        self.neg_flat[idx] as usize
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let [a, b, c] = self.unindex(idx);
        [a as f64 * h, b as f64 * h, c as f64 * h]
    }

    /// Calls `f(idx)` for every flat index with all `|m_i| <= b`.
    #[inline]
    pub(crate) fn for_each_in_box(&self, b: usize, mut f: impl FnMut(usize)) {
        let n = self.n;
        if 2 * b >= n {
            (0..self.len()).for_each(f);
            return;
        }
        let axis = || (0..=b).chain(n - b..n);
        for ix in axis() {
            for iy in axis() {
                let row = (ix * n + iy) * n;
                for iz in axis() {
                    f(row + iz);
                }
            }
        }
    }

    pub(crate) fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.length == other.length)
    }

    /// Inverse transforms of Hermitian spectra, two per complex FFT.
    pub fn inverse_many(&self, specs: &[&[Complex]]) -> Vec<Vec<f64>> {
        let items: Vec<(&[Complex], Symbol)> = specs.iter().map(|s| (*s, Symbol::One)).collect();
        self.inverse_symbols(&items)
    }

    /// Inverse transforms of `symbol(k) * spec(k)`, two per complex FFT.
    pub(crate) fn inverse_symbols(&self, items: &[(&[Complex], Symbol)]) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut out = Vec::with_capacity(items.len());
        let mut data = vec![ZERO; n];
        for pair in items.chunks(2) {
            let (a, sa) = pair[0];
            match pair.get(1) {
                Some(&(b, sb)) => {
                    for idx in 0..n {
                        let (x, y) = (a[idx], b[idx]);
                        data[idx] = if x == ZERO && y == ZERO {
                            ZERO
                        } else {
                            let k = &self.kd_flat[idx];
                            sa.apply(k, x) + Complex::i() * sb.apply(k, y)
                        };
                    }
                }
                None => {
                    for idx in 0..n {
                        let x = a[idx];
                        data[idx] = if x == ZERO { ZERO } else { sa.apply(&self.kd_flat[idx], x) };
                    }
                }
            }
            self.fft.inverse(&mut data);
            out.push(data.iter().map(|c| c.re).collect());
            if pair.len() == 2 {
                out.push(data.iter().map(|c| c.im).collect());
            }
        }
        out
    }

    /// Forward transforms of real arrays, two per complex FFT. With
    /// `dealias` the 2/3 rule is applied to the output.
    pub fn forward_many(&self, phys: &[&[f64]], dealias: bool) -> Vec<Vec<Complex>> {
        let norm = 1.0 / self.len() as f64;
        let keep = dealias.then_some(self.keep.as_slice());
        let mut out = Vec::with_capacity(phys.len());
        for pair in phys.chunks(2) {
            let mut data: Vec<Complex> = match pair {
                [a, b] => a.iter().zip(b.iter()).map(|(&a, &b)| Complex::new(a, b)).collect(),
                [a] => a.iter().map(|&a| Complex::new(a, 0.0)).collect(),
                _ => unreachable!(),
            };
            self.fft.forward(&mut data, keep);
            if pair.len() == 1 {
                // Symmetrize so the result is exactly Hermitian.
                let mut a = vec![ZERO; data.len()];
                for (i, ai) in a.iter_mut().enumerate() {
                    if dealias && !self.keep_flat[i] {
                        continue;
                    }
                    let zn = data[self.neg_flat[i] as usize].conj();
                    *ai = (data[i] + zn) * (0.5 * norm);
                }
                out.push(a);
            } else {
                let mut a = vec![ZERO; data.len()];
                let mut b = vec![ZERO; data.len()];
                for i in 0..data.len() {
                    if dealias && !self.keep_flat[i] {
                        continue;
                    }
                    let z = data[i];
                    let zn = data[self.neg_flat[i] as usize].conj();
                    a[i] = (z + zn) * (0.5 * norm);
                    b[i] = (z - zn) * Complex::new(0.0, -0.5 * norm);
                }
                out.push(a);
                out.push(b);
            }
        }
        out
    }

    /// Maximum over a 2× oversampled grid of the Euclidean norm of the
    /// stacked components (a vector field, or a 3×3 tensor field for the
    /// Frobenius norm).
    pub fn oversampled_max_norm(&self, specs: &[&[Complex]]) -> f64 {
        let n = self.n;
        let nf = 2 * n;
        let fine = self.fine.get_or_init(|| Fft3::new(nf));
        // Each coarse axis index maps to one fine index, or two half-weight
        // indices for the Nyquist mode.
        let targets: Vec<Vec<(usize, f64)>> = self
            .mode
            .iter()
            .map(|&m| {
                if 2 * m.unsigned_abs() as usize == n {
                    vec![(n / 2, 0.5), (nf - n / 2, 0.5)]
                } else {
                    vec![(m.rem_euclid(nf as i64) as usize, 1.0)]
                }
            })
            .collect();
        let mut acc = vec![0.0f64; nf * nf * nf];
        for pair in specs.chunks(2) {
            let mut data = vec![ZERO; nf * nf * nf];
            for idx in 0..self.len() {
                let mut v = pair[0][idx];
                if let Some(b) = pair.get(1) {
                    v += Complex::i() * b[idx];
                }
                if v == ZERO {
                    continue;
                }
                let [a, b, c] = self.unindex(idx);
                for &(fa, wa) in &targets[a] {
                    for &(fb, wb) in &targets[b] {
                        for &(fc, wc) in &targets[c] {
                            data[(fa * nf + fb) * nf + fc] += v * (wa * wb * wc);
                        }
                    }
                }
            }
            fine.inverse(&mut data);
            for (s, d) in acc.iter_mut().zip(&data) {
                *s += d.re * d.re + if pair.len() == 2 { d.im * d.im } else { 0.0 };
            }
        }
        acc.into_iter().fold(0.0, f64::max).sqrt()
    }
}

/// Real scalar field, stored spectrally.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    spec: Vec<Complex>,
}

impl ScalarField {
    pub fn from_spectral(grid: Arc<Grid>, spec: Vec<Complex>) -> Self {
        assert_eq!(spec.len(), grid.len());
        Self { grid, spec }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let phys: Vec<f64> = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        let spec = grid.forward_many(&[&phys], false).pop().unwrap();
        Self { grid, spec }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spectral(&self) -> &[Complex] {
        &self.spec
    }

    pub fn physical(&self) -> Vec<f64> {
        self.grid.inverse_many(&[&self.spec]).pop().unwrap()
    }

    pub fn grad(&self) -> VectorField {
        let g = &self.grid;
        let mut out: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        for (idx, &c) in self.spec.iter().enumerate() {
            let k = g.kd(idx);
            for d in 0..3 {
                out[d][idx] = Complex::new(0.0, k[d]) * c;
            }
        }
        VectorField::from_spectral(self.grid.clone(), out)
    }

    /// Largest coefficient modulus.
    pub fn max_coefficient(&self) -> f64 {
        self.spec.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Outcome of an operation that removes the mean of its input.
#[derive(Clone, Debug)]
pub struct MeanProjected {
    pub field: VectorField,
    /// Mean that was removed, if it was not already zero.
    pub removed_mean: Option<[f64; 3]>,
}

/// Real 3-component field. The spectral form is canonical; physical values
/// and the physical gradient are computed on first use and cached until the
/// field is mutated.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<Grid>,
    spec: [Vec<Complex>; 3],
    phys: OnceLock<[Vec<f64>; 3]>,
    grad: OnceLock<Box<[Vec<f64>; 9]>>,
    /// Bound on `max_i |m_i|` over nonzero coefficients.
    band: OnceLock<usize>,
}

impl VectorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let spec = std::array::from_fn(|_| vec![ZERO; grid.len()]);
        Self::from_spectral(grid, spec)
    }

    pub fn from_spectral(grid: Arc<Grid>, spec: [Vec<Complex>; 3]) -> Self {
        for c in &spec {
            assert_eq!(c.len(), grid.len(), "spectral array size does not match grid");
        }
        Self {
            grid,
            spec,
            phys: OnceLock::new(),
            grad: OnceLock::new(),
            band: OnceLock::new(),
        }
    }

    /// Exact transform of physical samples (no dealiasing).
    pub fn from_physical(grid: Arc<Grid>, phys: [Vec<f64>; 3]) -> Self {
        let mut s = grid.forward_many(&[&phys[0], &phys[1], &phys[2]], false).into_iter();
        let spec = [s.next().unwrap(), s.next().unwrap(), s.next().unwrap()];
        let out = Self::from_spectral(grid, spec);
        let _ = out.phys.set(phys);
        out
    }

    /// Transform of pointwise values that are then dealiased. The result
    /// does not cache the (pre-dealias) physical values.
    pub fn from_physical_dealiased(grid: Arc<Grid>, phys: [&[f64]; 3]) -> Self {
        let mut s = grid.forward_many(&phys, true).into_iter();
        let spec = [s.next().unwrap(), s.next().unwrap(), s.next().unwrap()];
        let cutoff = grid.dealias_cutoff();
        Self::from_spectral(grid, spec).with_band(cutoff)
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut phys: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
        for i in 0..grid.len() {
            let v = f(grid.position(i));
            for d in 0..3 {
                phys[d].push(v[d]);
            }
        }
        Self::from_physical(grid, phys)
    }

    /// Spectral-to-physical view (cached).
    pub fn to_physical(&self) -> &[Vec<f64>; 3] {
        self.physical()
    }

    pub fn physical(&self) -> &[Vec<f64>; 3] {
        self.phys.get_or_init(|| {
            let items: Vec<(&[Complex], Symbol)> = self.spec.iter().map(|s| (s.as_slice(), Symbol::One)).collect();
            let mut v = self.grid.inverse_symbols(&items).into_iter();
            std::array::from_fn(|_| v.next().unwrap())
        })
    }

    /// Physical gradient, entry `3*i + j` holding `∂_j f_i` (cached).
    pub fn gradient(&self) -> &[Vec<f64>; 9] {
        self.grad.get_or_init(|| {
            let mut items: Vec<(&[Complex], Symbol)> = Vec::with_capacity(12);
            for i in 0..3 {
                for j in 0..3 {
                    items.push((&self.spec[i], Symbol::D(j)));
                }
            }
            // Fill the physical cache in the same batch when it is cold.
            let with_phys = self.phys.get().is_none();
            if with_phys {
                items.extend(self.spec.iter().map(|s| (s.as_slice(), Symbol::One)));
            }
            let mut it = self.grid.inverse_symbols(&items).into_iter();
            let grad: [Vec<f64>; 9] = std::array::from_fn(|_| it.next().unwrap());
            if with_phys {
                let _ = self.phys.set(std::array::from_fn(|_| it.next().unwrap()));
            }
            Box::new(grad)
        })
    }

    /// Spectral gradient, entry `3*i + j` holding `ik_j f̂_i`.
    pub fn spectral_gradient(&self) -> [Vec<Complex>; 9] {
        let g = &self.grid;
        std::array::from_fn(|p| {
            let (i, j) = (p / 3, p % 3);
            self.spec[i]
                .iter()
                .zip(&g.kd_flat)
                .map(|(&c, k)| Symbol::D(j).apply(k, c))
                .collect()
        })
    }

    /// Physical second derivatives, entry `6*i + p` holding `∂_a∂_b f_i` for
    /// the p-th pair of [`HESSIAN_PAIRS`].
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let mut items: Vec<(&[Complex], Symbol)> = Vec::with_capacity(18);
        for i in 0..3 {
            for &(a, b) in &HESSIAN_PAIRS {
                items.push((&self.spec[i], Symbol::DD(a, b)));
            }
        }
        self.grid.inverse_symbols(&items)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spectral(&self) -> &[Vec<Complex>; 3] {
        &self.spec
    }

    pub fn into_spectral(self) -> [Vec<Complex>; 3] {
        self.spec
    }

    /// Mutable spectral access; drops the cached physical data.
    pub fn spectral_mut(&mut self) -> &mut [Vec<Complex>; 3] {
        self.phys = OnceLock::new();
        self.grad = OnceLock::new();
        self.band = OnceLock::new();
        &mut self.spec
    }

    /// Records a known bound on the spectral support.
    pub(crate) fn with_band(self, b: usize) -> Self {
        let _ = self.band.set(b.min(self.grid.n / 2));
        self
    }

    /// Bound on the largest `max_i |m_i|` among nonzero coefficients.
    pub fn bandwidth(&self) -> usize {
        *self.band.get_or_init(|| {
            let g = &self.grid;
            let mut b = 0;
            for idx in 0..g.len() {
                if self.spec.iter().any(|c| c[idx] != ZERO) {
                    let m = g.mode_of(idx);
                    b = b.max(m.iter().map(|v| v.unsigned_abs() as usize).max().unwrap());
                }
            }
            b
        })
    }

    /// Support bound if already known, otherwise the whole grid.
    pub(crate) fn known_band(&self) -> usize {
        self.band.get().copied().unwrap_or(self.grid.n / 2)
    }

    pub(crate) fn check_grid(&self, other: &VectorField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "n = {} / L = {} vs n = {} / L = {}",
                self.grid.n, self.grid.length, other.grid.n, other.grid.length
            )))
        }
    }

    /// Spectral multiplier applied to every component.
    pub fn map_symbol(&self, symbol: impl Fn(usize) -> f64) -> Self {
        let g = &self.grid;
        let band = self.known_band();
        let mut spec: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        for (out, x) in spec.iter_mut().zip(&self.spec) {
            g.for_each_in_box(band, |i| {
                if x[i] != ZERO {
                    out[i] = x[i] * symbol(i);
                }
            });
        }
        Self::from_spectral(g.clone(), spec).with_band(band)
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map_symbol(|_| a)
    }

    /// `x ↦ self(x - shift)` by phase rotation; exact when the Nyquist planes
    /// are empty.
    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let g = &self.grid;
        let band = self.known_band();
        let mut spec: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        for (out, x) in spec.iter_mut().zip(&self.spec) {
            g.for_each_in_box(band, |i| {
                if x[i] != ZERO {
                    let k = g.kd(i);
                    out[i] = x[i] * Complex::from_polar(1.0, -(k[0] * shift[0] + k[1] * shift[1] + k[2] * shift[2]));
                }
            });
        }
        Self::from_spectral(g.clone(), spec).with_band(band)
    }

    /// `a*self + b*other`.
    pub fn lincomb(&self, a: f64, other: &VectorField, b: f64) -> Self {
        debug_assert!(self.grid.same_as(&other.grid));
        let band = self.known_band().max(other.known_band());
        let mut spec: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![ZERO; self.grid.len()]);
        for (d, out) in spec.iter_mut().enumerate() {
            let (x, y) = (&self.spec[d], &other.spec[d]);
            self.grid.for_each_in_box(band, |i| out[i] = x[i] * a + y[i] * b);
        }
        Self::from_spectral(self.grid.clone(), spec).with_band(band)
    }

    /// In-place `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &VectorField) {
        debug_assert!(self.grid.same_as(&other.grid));
        let band = self.known_band().max(other.known_band());
        let g = self.grid.clone();
        for (s, o) in self.spectral_mut().iter_mut().zip(&other.spec) {
            g.for_each_in_box(band, |i| s[i] += o[i] * a);
        }
        let _ = self.band.set(band.min(g.n / 2));
    }

    /// 2/3-rule truncation.
    pub fn dealias(&self) -> Self {
        let g = self.grid.clone();
        self.map_symbol(move |idx| if g.keeps(idx) { 1.0 } else { 0.0 })
    }

    pub fn is_dealiased(&self) -> bool {
        (0..self.grid.len())
            .filter(|&i| !self.grid.keeps(i))
            .all(|i| self.spec.iter().all(|c| c[i] == ZERO))
    }

    pub fn mean(&self) -> [f64; 3] {
        std::array::from_fn(|d| self.spec[d][0].re)
    }

    pub fn without_mean(&self) -> Self {
        let band = self.known_band();
        let mut out = self.clone();
        for c in out.spectral_mut().iter_mut() {
            c[0] = ZERO;
        }
        out.with_band(band)
    }

    pub fn div(&self) -> ScalarField {
        let g = &self.grid;
        let spec = (0..g.len())
            .map(|idx| {
                let k = g.kd(idx);
                Complex::i() * (0..3).map(|d| self.spec[d][idx] * k[d]).sum::<Complex>()
            })
            .collect();
        ScalarField::from_spectral(g.clone(), spec)
    }

    pub fn curl(&self) -> Self {
        let g = &self.grid;
        let band = self.known_band();
        let mut out: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![ZERO; g.len()]);
        let [fx, fy, fz] = &self.spec;
        g.for_each_in_box(band, |idx| {
            let k = g.kd(idx);
            let i = Complex::i();
            out[0][idx] = i * (fz[idx] * k[1] - fy[idx] * k[2]);
            out[1][idx] = i * (fx[idx] * k[2] - fz[idx] * k[0]);
            out[2][idx] = i * (fy[idx] * k[0] - fx[idx] * k[1]);
        });
        Self::from_spectral(g.clone(), out).with_band(band)
    }

    pub fn laplacian(&self) -> Self {
        let g = self.grid.clone();
        self.map_symbol(move |idx| -g.ksq(idx))
    }

    /// `Δ⁻¹` with symbol `-1/|k|²`; the mean mode is zeroed and reported.
    pub fn inv_laplacian(&self) -> MeanProjected {
        let mean = self.mean();
        // Round-off level means from physical-space construction are not flagged.
        let tol = 1e-13 * self.max_coefficient();
        let removed_mean = mean.iter().any(|&m| m.abs() > tol).then_some(mean);
        let g = self.grid.clone();
        let field = self.map_symbol(move |idx| {
            let k2 = g.ksq(idx);
            if k2 == 0.0 {
                0.0
            } else {
                -1.0 / k2
            }
        });
        MeanProjected {
            field,
            removed_mean,
        }
    }

    /// Orthogonal projection onto divergence-free fields.
    pub fn leray_project(&self) -> Self {
        let g = &self.grid;
        let band = self.known_band();
        let mut out = self.spec.clone();
        g.for_each_in_box(band, |idx| {
            let k = g.kd(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                return;
            }
            let kf = (0..3).map(|d| self.spec[d][idx] * k[d]).sum::<Complex>() / k2;
            for d in 0..3 {
                out[d][idx] -= kf * k[d];
            }
        });
        Self::from_spectral(g.clone(), out).with_band(band)
    }

    /// `max_k |k·f̂(k)| / max_k |f̂(k)|` (0 for the zero field).
    pub fn divergence_residual(&self) -> f64 {
        let g = &self.grid;
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        g.for_each_in_box(self.known_band(), |idx| {
            let k = g.kd(idx);
            let kf = (0..3).map(|d| self.spec[d][idx] * k[d]).sum::<Complex>();
            num = num.max(kf.norm());
            for d in 0..3 {
                den = den.max(self.spec[d][idx].norm());
            }
        });
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn l2_inner(&self, other: &VectorField) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        let band = self.known_band().min(other.known_band());
        let mut s = [0.0; 3];
        for (d, acc) in s.iter_mut().enumerate() {
            let (x, y) = (&self.spec[d], &other.spec[d]);
            self.grid.for_each_in_box(band, |i| *acc += x[i].re * y[i].re + x[i].im * y[i].im);
        }
        (s[0] + s[1] + s[2]) * self.grid.volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).max(0.0).sqrt()
    }

    /// `‖(1-Δ)^{s/2} f‖_{L²}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        g.for_each_in_box(self.known_band(), |idx| {
            let m2: f64 = (0..3).map(|d| self.spec[d][idx].norm_sqr()).sum();
            if m2 != 0.0 {
                acc += (1.0 + g.ksq(idx)).powf(s) * m2;
            }
        });
        (acc * g.volume()).sqrt()
    }

    /// Sup of the pointwise Euclidean norm on the 2× oversampled grid.
    pub fn sup_norm(&self) -> f64 {
        self.grid
            .oversampled_max_norm(&[&self.spec[0], &self.spec[1], &self.spec[2]])
    }

    /// Sup of the pointwise Frobenius norm of `∇f` on the 2× oversampled grid.
    pub fn grad_sup_norm(&self) -> f64 {
        let g = self.spectral_gradient();
        let refs: Vec<&[Complex]> = g.iter().map(|v| v.as_slice()).collect();
        self.grid.oversampled_max_norm(&refs)
    }

    /// Largest pointwise Euclidean norm on the grid itself.
    pub fn grid_max_norm(&self) -> f64 {
        let p = self.physical();
        (0..self.grid.len())
            .map(|i| p[0][i] * p[0][i] + p[1][i] * p[1][i] + p[2][i] * p[2][i])
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        for x in &self.spec {
            self.grid.for_each_in_box(self.known_band(), |i| ok &= x[i].re.is_finite() && x[i].im.is_finite());
        }
        ok
    }

    /// Largest modulus of any spectral coefficient.
    pub fn max_coefficient(&self) -> f64 {
        let mut m: f64 = 0.0;
        for x in &self.spec {
            self.grid.for_each_in_box(self.known_band(), |i| m = m.max(x[i].norm()));
        }
        m
    }

    /// Relative L² distance `‖self - other‖ / ‖other‖` (absolute when `other`
    /// vanishes).
    pub fn rel_l2_distance(&self, other: &VectorField) -> f64 {
        let d = self.lincomb(1.0, other, -1.0).l2_norm();
        let r = other.l2_norm();
        if r == 0.0 {
            d
        } else {
            d / r
        }
    }
}

/// Index pairs `(a, b)` with `a <= b` used for second derivatives.
pub const HESSIAN_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Position of `(a, b)` in [`HESSIAN_PAIRS`].
pub fn hessian_slot(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Parameters for deterministic random band-limited test fields.
///
/// The coefficients are keyed by integer wavenumber, so the same spec yields
/// the same continuous field on every grid that can represent it.
#[derive(Clone, Copy, Debug)]
pub struct RandomFieldSpec {
    /// Largest `|m_i|` of any excited mode.
    pub bandwidth: u32,
    pub seed: u64,
    /// Project onto divergence-free fields.
    pub solenoidal: bool,
    /// Amplitude decays like `(1+|m|²)^{-decay/2}`.
    pub decay: f64,
}

impl RandomFieldSpec {
    pub fn new(bandwidth: u32, seed: u64) -> Self {
        Self {
            bandwidth,
            seed,
            solenoidal: true,
            decay: 2.0,
        }
    }

    pub fn solenoidal(mut self, yes: bool) -> Self {
        self.solenoidal = yes;
        self
    }

    pub fn decay(mut self, decay: f64) -> Self {
        self.decay = decay;
        self
    }
}

/// Mean-zero random field with modes `0 < max|m_i| <= bandwidth`.
pub fn random_field(grid: &Arc<Grid>, spec: RandomFieldSpec) -> Result<VectorField> {
    let k = spec.bandwidth as i64;
    if 2 * k >= grid.n() as i64 {
        return Err(Error::Config(format!(
            "bandwidth {k} not representable on n = {}",
            grid.n()
        )));
    }
    let rng = CounterRng::derive(spec.seed, 0x5eed_f1e1d);
    let mut out: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![ZERO; grid.len()]);
    for mx in -k..=k {
        for my in -k..=k {
            for mz in -k..=k {
                let m = [mx, my, mz];
                // One representative of each ±m pair.
                let first = m.iter().copied().find(|&c| c != 0);
                if first.is_none_or(|c| c < 0) {
                    continue;
                }
                let stream = (((mx + 512) as u64) << 20) | (((my + 512) as u64) << 10) | (mz + 512) as u64;
                let m2 = (mx * mx + my * my + mz * mz) as f64;
                let w = (1.0 + m2).powf(-spec.decay / 2.0);
                let mut c: [Complex; 3] = std::array::from_fn(|d| {
                    Complex::new(rng.normal(stream, 2 * d as u64), rng.normal(stream, 2 * d as u64 + 1)) * w
                });
                if spec.solenoidal {
                    let dot: Complex = (0..3).map(|d| c[d] * m[d] as f64).sum::<Complex>() / m2;
                    for d in 0..3 {
                        c[d] -= dot * m[d] as f64;
                    }
                }
                let pos = grid.index_of_mode(m).expect("bandwidth checked");
                let neg = grid.index_of_mode([-mx, -my, -mz]).expect("bandwidth checked");
                for d in 0..3 {
                    out[d][pos] = c[d];
                    out[d][neg] = c[d].conj();
                }
            }
        }
    }
    Ok(VectorField::from_spectral(grid.clone(), out).with_band(k as usize))
}

/// Evaluates band-limited fields at arbitrary points by direct summation of
/// their Fourier series, which is exact up to round-off.
#[derive(Clone, Debug)]
pub struct PointEvaluator {
    modes: Vec<[i64; 3]>,
    coeffs: Vec<Vec<Complex>>,
    ncomp: usize,
    lo: i64,
    hi: i64,
    scale: f64,
}

impl PointEvaluator {
    /// Collects the nonzero modes of the given spectral components. A mode
    /// whose mirror `-m` carries the conjugate coefficients is folded into a
    /// single doubled term.
    pub fn new(grid: &Grid, specs: &[&[Complex]]) -> Self {
        let mut modes = Vec::new();
        let mut coeffs = Vec::new();
        let (mut lo, mut hi) = (0, 0);
        for idx in 0..grid.len() {
            if specs.iter().all(|s| s[idx] == ZERO) {
                continue;
            }
            let m = grid.mode_of(idx);
            let j = grid.negated(idx);
            let mirrored = j != idx
                && grid.mode_of(j) == m.map(|c| -c)
                && specs.iter().all(|s| s[j] == s[idx].conj());
            let weight = match (mirrored, idx < j) {
                (true, true) => 2.0,
                (true, false) => continue,
                (false, _) => 1.0,
            };
            for &c in &m {
                lo = lo.min(c);
                hi = hi.max(c);
            }
            modes.push(m);
            coeffs.push(specs.iter().map(|s| s[idx] * weight).collect());
        }
        Self {
            modes,
            coeffs,
            ncomp: specs.len(),
            lo,
            hi,
            scale: grid.wavenumber_scale(),
        }
    }

    pub fn for_field(field: &VectorField) -> Self {
        let s = field.spectral();
        Self::new(field.grid(), &[&s[0], &s[1], &s[2]])
    }

    /// Evaluator for the nine entries `∂_j f_i` (index `3*i + j`).
    pub fn for_gradient(field: &VectorField) -> Self {
        let g = field.spectral_gradient();
        let refs: Vec<&[Complex]> = g.iter().map(|v| v.as_slice()).collect();
        Self::new(field.grid(), &refs)
    }

    pub fn components(&self) -> usize {
        self.ncomp
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Writes the component values at `x` into `out`.
    pub fn eval_into(&self, x: [f64; 3], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.modes.is_empty() {
            return;
        }
        let width = (self.hi - self.lo + 1) as usize;
        let tables: [Vec<Complex>; 3] = std::array::from_fn(|d| {
            (0..width)
                .map(|j| Complex::from_polar(1.0, (self.lo + j as i64) as f64 * self.scale * x[d]))
                .collect()
        });
        let mut acc = vec![ZERO; self.ncomp];
        for (m, c) in self.modes.iter().zip(&self.coeffs) {
            let ph = tables[0][(m[0] - self.lo) as usize]
                * tables[1][(m[1] - self.lo) as usize]
                * tables[2][(m[2] - self.lo) as usize];
            for (a, &ci) in acc.iter_mut().zip(c) {
                *a += ci * ph;
            }
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.re;
        }
    }

    pub fn eval(&self, x: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval3(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.eval_into(x, &mut out);
        out
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"SEU1";

/// Contents of a binary snapshot file.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub n: usize,
    pub length: f64,
    pub time: f64,
    pub components: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn from_field(field: &VectorField, time: f64) -> Self {
        Self {
            n: field.grid().n(),
            length: field.grid().length(),
            time,
            components: field.physical().to_vec(),
        }
    }

    /// Rebuilds a vector field on `grid`, which must match the header.
    pub fn into_field(self, grid: &Arc<Grid>) -> Result<VectorField> {
        if self.n != grid.n() || self.length != grid.length() {
            return Err(Error::GridMismatch(format!(
                "snapshot has n = {}, L = {}; grid has n = {}, L = {}",
                self.n,
                self.length,
                grid.n(),
                grid.length()
            )));
        }
        let [a, b, c]: [Vec<f64>; 3] = self
            .components
            .try_into()
            .map_err(|v: Vec<Vec<f64>>| Error::Config(format!("expected 3 components, found {}", v.len())))?;
        Ok(VectorField::from_physical(grid.clone(), [a, b, c]))
    }

    /// Little-endian header `"SEU1", n: u32, L: f64, ncomp: u32, t: f64`,
    /// then each component's n³ values in row-major `[x][y][z]` order.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.length.to_le_bytes())?;
        w.write_all(&(self.components.len() as u32).to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        for c in &self.components {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let bad = |d: &str| Error::format(path, d);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(|_| bad("truncated header"))?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
        let length = f64::from_le_bytes(b8);
        r.read_exact(&mut b4).map_err(|_| bad("truncated header"))?;
        let ncomp = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
        let time = f64::from_le_bytes(b8);
        if n == 0 || n > 4096 || ncomp > 64 {
            return Err(bad("implausible header"));
        }
        let mut components = Vec::with_capacity(ncomp);
        let mut raw = vec![0u8; n * n * n * 8];
        for _ in 0..ncomp {
            r.read_exact(&mut raw).map_err(|_| bad("truncated data"))?;
            components.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        if r.read(&mut b4)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            n,
            length,
            time,
            components,
        })
    }
}

/// Writes `field` at time `t` as a binary snapshot.
pub fn write_snapshot(path: &Path, field: &VectorField, time: f64) -> Result<()> {
    Snapshot::from_field(field, time).write(path)
}

/// Reads a snapshot onto `grid`, returning the field and its time stamp.
pub fn read_snapshot(path: &Path, grid: &Arc<Grid>) -> Result<(VectorField, f64)> {
    let s = Snapshot::read(path)?;
    let t = s.time;
    Ok((s.into_field(grid)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn grid(n: usize) -> Arc<Grid> {
        Grid::periodic(n).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::periodic(6).is_err());
        assert!(Grid::periodic(20).is_err());
        assert!(Grid::periodic(33).is_err());
        assert!(Grid::new(16, -1.0).is_err());
        for n in [8, 12, 16, 24, 32, 48] {
            assert!(Grid::periodic(n).is_ok());
        }
    }

    #[test]
    fn wavenumber_ordering_is_consistent_with_transform() {
        let g = grid(8);
        for idx in 0..g.len() {
            let m = g.mode_of(idx);
            assert_eq!(g.index_of_mode(m), Some(idx));
            let back = g.mode_of(g.negated(idx));
            for d in 0..3 {
                if m[d].abs() != 4 {
                    assert_eq!(back[d], -m[d]);
                }
            }
        }
        // Dealias keeps |m| <= n/3.
        assert!(g.keeps(g.index_of_mode([2, -2, 0]).unwrap()));
        assert!(!g.keeps(g.index_of_mode([3, 0, 0]).unwrap()));
    }

    #[test]
    fn sine_is_a_single_conjugate_pair() {
        let g = grid(16);
        let f = VectorField::from_fn(g.clone(), |x| [x[0].sin(), 0.0, 0.0]);
        let s = &f.spectral()[0];
        let p = g.index_of_mode([1, 0, 0]).unwrap();
        let m = g.index_of_mode([-1, 0, 0]).unwrap();
        assert!((s[p] - Complex::new(0.0, -0.5)).norm() < 1e-15);
        assert!((s[m] - Complex::new(0.0, 0.5)).norm() < 1e-15);
        let others = s
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != p && i != m)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(others < 1e-15);
        assert!(f.spectral()[1].iter().chain(&f.spectral()[2]).all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = grid(16);
        let f = random_field(&g, RandomFieldSpec::new(5, 3).solenoidal(false)).unwrap();
        let phys = f.physical().clone();
        let back = VectorField::from_physical(g.clone(), phys.clone());
        let scale = phys.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        for d in 0..3 {
            let again = g.inverse_many(&[&back.spectral()[d]]).pop().unwrap();
            assert!(max_diff(&again, &phys[d]) <= 1e-13 * scale);
        }
        // Parseval against direct quadrature.
        let quad: f64 = phys.iter().flatten().map(|v| v * v).sum::<f64>() * g.spacing().powi(3);
        let spec = f.l2_norm().powi(2);
        assert!((quad - spec).abs() <= 1e-12 * quad);
    }

    #[test]
    fn curl_grad_div_laplacian_on_closed_forms() {
        let g = grid(16);
        let f = VectorField::from_fn(g.clone(), |x| [0.0, x[0].sin(), 0.0]);
        let c = f.curl();
        let expect = VectorField::from_fn(g.clone(), |x| [0.0, 0.0, x[0].cos()]);
        assert!(c.lincomb(1.0, &expect, -1.0).max_coefficient() < 1e-14);

        let s = VectorField::from_fn(g.clone(), |x| [x[0].sin(), 0.0, 0.0]);
        let lap = s.laplacian();
        assert!(lap.lincomb(1.0, &s, 1.0).max_coefficient() < 1e-14);

        let c3 = VectorField::from_fn(g.clone(), |x| [0.0, 0.0, x[0].cos()]);
        let inv = c3.inv_laplacian();
        assert!(inv.removed_mean.is_none());
        assert!(inv.field.lincomb(1.0, &c3, 1.0).max_coefficient() < 1e-14);

        let zero = VectorField::zeros(g.clone());
        assert_eq!(zero.inv_laplacian().field.max_coefficient(), 0.0);
    }

    #[test]
    fn vector_identities_on_random_fields() {
        let g = grid(16);
        let f = random_field(&g, RandomFieldSpec::new(5, 11).solenoidal(false)).unwrap();
        let scale = f.max_coefficient();
        assert!(f.curl().div().max_coefficient() <= 1e-12 * scale);
        let phi = ScalarField::from_fn(g.clone(), |x| (x[0] + 2.0 * x[1]).sin() * x[2].cos());
        assert!(phi.grad().curl().max_coefficient() <= 1e-12);
        // Δ(Δ⁻¹ f) = f - mean(f)
        let r = f.inv_laplacian().field.laplacian();
        assert!(r.lincomb(1.0, &f.without_mean(), -1.0).max_coefficient() <= 1e-12 * scale);
    }

    #[test]
    fn inv_laplacian_flags_nonzero_mean() {
        let g = grid(8);
        let f = VectorField::from_fn(g, |x| [1.0 + x[0].cos(), 0.0, 0.0]);
        let r = f.inv_laplacian();
        let m = r.removed_mean.expect("mean flagged");
        assert!((m[0] - 1.0).abs() < 1e-14);
        assert_eq!(r.field.mean(), [0.0; 3]);
    }

    #[test]
    fn leray_projection_properties() {
        let g = grid(16);
        let f = random_field(&g, RandomFieldSpec::new(5, 5).solenoidal(false)).unwrap();
        let p = f.leray_project();
        assert!(p.divergence_residual() < 1e-14);
        let pp = p.leray_project();
        assert!(pp.lincomb(1.0, &p, -1.0).l2_norm() <= 1e-13 * p.l2_norm());
        // Orthogonality ⟨Pf, f - Pf⟩ ≈ 0.
        let rest = f.lincomb(1.0, &p, -1.0);
        assert!(p.l2_inner(&rest).abs() <= 1e-10 * f.l2_norm().powi(2));
        // Gradients vanish, curls survive.
        let phi = ScalarField::from_fn(g.clone(), |x| (x[0] - x[2]).cos() + (2.0 * x[1]).sin());
        assert!(phi.grad().leray_project().max_coefficient() < 1e-14);
        let c = f.curl();
        assert!(c.leray_project().lincomb(1.0, &c, -1.0).max_coefficient() < 1e-13 * c.max_coefficient());
    }

    #[test]
    fn dealiasing_is_idempotent_and_commutes_with_linear_ops() {
        let g = grid(16);
        let f = random_field(&g, RandomFieldSpec::new(7, 9).solenoidal(false)).unwrap();
        let d = f.dealias();
        assert!(d.is_dealiased());
        assert_eq!(d.dealias().spectral(), d.spectral());
        let a = f.curl().dealias();
        let b = f.dealias().curl();
        assert!(a.lincomb(1.0, &b, -1.0).max_coefficient() < 1e-15);
    }

    #[test]
    fn norms_of_sine() {
        let g = grid(16);
        let f = VectorField::from_fn(g.clone(), |x| [x[0].sin(), 0.0, 0.0]);
        let vol = TAU.powi(3);
        assert!((f.sobolev_norm(0.0).powi(2) - vol / 2.0).abs() < 1e-10);
        // Quadrature oracle for the same quantity.
        let quad: f64 = f.physical()[0].iter().map(|v| v * v).sum::<f64>() * g.spacing().powi(3);
        assert!((quad - vol / 2.0).abs() < 1e-10);
        assert!((f.sobolev_norm(0.0) - f.l2_norm()).abs() < 1e-12);
        // Single mode |k| = 1: W^{s,2} norm scales like 2^{s/2}.
        assert!((f.sobolev_norm(2.0) / f.l2_norm() - 2.0).abs() < 1e-12);
        assert!((f.sup_norm() - 1.0).abs() < 1e-12);
        let zero = VectorField::zeros(g);
        for s in [-3.0, 0.0, 4.5] {
            assert_eq!(zero.sobolev_norm(s), 0.0);
        }
    }

    #[test]
    fn sup_norm_matches_dense_sampling() {
        let g = grid(8);
        let f = VectorField::from_fn(g.clone(), |x| [(x[0] + 0.3).sin(), (2.0 * x[1]).cos() * 0.5, 0.0]);
        // Dense oracle through the point evaluator.
        let ev = PointEvaluator::for_field(&f);
        let m = 40;
        let mut best: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [TAU * i as f64 / m as f64, TAU * j as f64 / m as f64, 0.0];
                let v = ev.eval3(x);
                best = best.max((v[0] * v[0] + v[1] * v[1]).sqrt());
            }
        }
        let s = f.sup_norm();
        assert!(s <= best + 1e-12);
        assert!((s - best).abs() < 0.02 * best, "{s} vs {best}");
    }

    #[test]
    fn point_evaluation_is_exact() {
        let g = grid(16);
        let f = VectorField::from_fn(g.clone(), |x| [x[0].sin(), 0.0, 0.0]);
        let ev = PointEvaluator::for_field(&f);
        assert!((ev.eval3([PI / 2.0, 0.0, 0.0])[0] - 1.0).abs() < 1e-12);
        let r = random_field(&g, RandomFieldSpec::new(4, 1)).unwrap();
        let ev = PointEvaluator::for_field(&r);
        let p = r.physical();
        for idx in (0..g.len()).step_by(97) {
            let v = ev.eval3(g.position(idx));
            for d in 0..3 {
                assert!((v[d] - p[d][idx]).abs() < 1e-12);
            }
        }
        let c = VectorField::from_fn(g, |_| [0.5, -1.0, 2.0]);
        let ev = PointEvaluator::for_field(&c);
        let v = ev.eval3([0.123, 4.5, 2.2]);
        assert!((v[0] - 0.5).abs() < 1e-14 && (v[1] + 1.0).abs() < 1e-14 && (v[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn random_field_is_grid_independent() {
        let a = random_field(&grid(16), RandomFieldSpec::new(4, 77)).unwrap();
        let b = random_field(&grid(24), RandomFieldSpec::new(4, 77)).unwrap();
        for s in [0.0, 1.0, 2.0] {
            assert!((a.sobolev_norm(s) - b.sobolev_norm(s)).abs() <= 1e-12 * a.sobolev_norm(s));
        }
        assert!(a.divergence_residual() < 1e-14);
        assert_eq!(a.mean(), [0.0; 3]);
        assert!(random_field(&grid(8), RandomFieldSpec::new(4, 1)).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid(8);
        let f = random_field(&g, RandomFieldSpec::new(2, 4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.seu");
        write_snapshot(&path, &f, 0.25).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SEU1");
        assert_eq!(bytes.len(), 28 + 3 * 512 * 8);
        let (back, t) = read_snapshot(&path, &g).unwrap();
        assert_eq!(t, 0.25);
        assert!(back.lincomb(1.0, &f, -1.0).max_coefficient() < 1e-15);
        assert!(read_snapshot(&path, &grid(16)).is_err());
        std::fs::write(&path, &bytes[..40]).unwrap();
        assert!(Snapshot::read(&path).is_err());
    }
}
