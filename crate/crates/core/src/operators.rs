//! Lie derivative calculus for transport noise.
//!
//! Products are formed pointwise in physical space from spectrally computed
//! derivatives and then 2/3-dealiased. When the inputs are band-limited far
//! enough below the cutoff, every identity here holds to round-off.
//!
//! A transport field with only a few nonzero Fourier coefficients takes a
//! faster route with the same result: the transform of a grid product is the
//! cyclic convolution of the factors' transforms, which is cheap when one
//! factor is sparse.

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::field::{hessian_slot, Complex, Grid, MeanProjected, VectorField, HESSIAN_PAIRS};
use crate::noise::NoiseBasis;

/// Relative divergence tolerance for transport fields.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-10;

/// A divergence-free transport field with lazily computed coefficient tables.
#[derive(Clone, Debug)]
pub struct LieOperand {
    xi: VectorField,
    lap: OnceLock<VectorField>,
    hess: OnceLock<Vec<Vec<f64>>>,
    a: OnceLock<[Vec<f64>; 6]>,
    s4: OnceLock<[Vec<f64>; 9]>,
    s4_scale: f64,
    /// Flat indices of the nonzero coefficients of ξ, if there are few.
    support: Option<Vec<usize>>,
    kernels: OnceLock<Box<[SparseKernel; 3]>>,
    s4_kernel: OnceLock<SparseKernel>,
}

impl LieOperand {
    pub fn new(xi: VectorField) -> Result<Self> {
        let r = xi.divergence_residual();
        if r > DIVERGENCE_TOLERANCE {
            return Err(Error::NotSolenoidal(r));
        }
        let spec = xi.spectral();
        let nonzero: Vec<usize> = (0..xi.grid().len())
            .filter(|&i| spec.iter().any(|c| c[i] != Complex::default()))
            .take(SPARSE_LIMIT + 1)
            .collect();
        let support = (nonzero.len() <= SPARSE_LIMIT).then_some(nonzero);
        Ok(Self {
            xi,
            lap: OnceLock::new(),
            hess: OnceLock::new(),
            a: OnceLock::new(),
            s4: OnceLock::new(),
            s4_scale: 1.0,
            support,
            kernels: OnceLock::new(),
            s4_kernel: OnceLock::new(),
        })
    }

    /// Test hook: scales the S₄ coefficient table by `1 + eps`.
    #[doc(hidden)]
    pub fn with_corrupted_s4(mut self, eps: f64) -> Self {
        self.s4 = OnceLock::new();
        self.kernels = OnceLock::new();
        self.s4_kernel = OnceLock::new();
        self.s4_scale = 1.0 + eps;
        self
    }

    /// Same operand, always evaluated with grid products.
    #[doc(hidden)]
    pub fn without_sparse_path(mut self) -> Self {
        self.support = None;
        self.kernels = OnceLock::new();
        self.s4_kernel = OnceLock::new();
        self
    }

    /// Whether products use the sparse convolution route.
    pub fn is_sparse(&self) -> bool {
        self.support.is_some()
    }

    /// Kernels for ℒ, ℒ* and S₂, in that order.
    fn kernels(&self) -> Option<&[SparseKernel; 3]> {
        let support = self.support.as_ref()?;
        Some(self.kernels.get_or_init(|| Box::new(self.build_kernels(support))))
    }

    fn s4_kernel(&self) -> Option<&SparseKernel> {
        let support = self.support.as_ref()?;
        Some(self.s4_kernel.get_or_init(|| self.build_s4_kernel(support)))
    }

    fn build_kernels(&self, support: &[usize]) -> [SparseKernel; 3] {
        let grid = self.grid();
        let x = self.xi.spectral();
        let zero = Complex::default();
        let mut lie = SparseKernel::default();
        let mut adj = SparseKernel::default();
        let mut s2 = SparseKernel::default();
        for &p in support {
            let k = grid.kd(p);
            let xh = [x[0][p], x[1][p], x[2][p]];
            // (∂_j ξ^i)^ = i k_j ξ̂_i
            let g = |i: usize, j: usize| Complex::new(0.0, k[j]) * xh[i];
            let m_lie = std::array::from_fn(|e| -g(e / 3, e % 3));
            let m_adj = std::array::from_fn(|e| -g(e % 3, e / 3));
            let m_s2 = std::array::from_fn(|e| -(g(e / 3, e % 3) + g(e % 3, e / 3)));
            lie.push(grid, p, m_lie, xh);
            adj.push(grid, p, m_adj, xh.map(|c| -c));
            s2.push(grid, p, m_s2, [zero; 3]);
        }
        [lie, adj, s2]
    }

    fn build_s4_kernel(&self, support: &[usize]) -> SparseKernel {
        let grid = self.grid();
        let zero = Complex::default();
        // S₄ coefficients are products of two factors supported on `support`.
        let mut sums: Vec<usize> = Vec::new();
        for &p in support {
            for &q in support {
                let (a, b) = (grid.mode_of(p), grid.mode_of(q));
                let m = [0, 1, 2].map(|d| {
                    let n = grid.n() as i64;
                    let v = (a[d] + b[d]).rem_euclid(n);
                    if v > n / 2 { v - n } else { v }
                });
                if let Some(i) = grid.index_of_mode(m) {
                    sums.push(i);
                }
            }
        }
        sums.sort_unstable();
        sums.dedup();
        let e = self.s4_table();
        let refs: Vec<&[f64]> = e.iter().map(|v| v.as_slice()).collect();
        let eh = grid.forward_many(&refs, false);
        let mut s4 = SparseKernel::default();
        for &p in &sums {
            s4.push(grid, p, std::array::from_fn(|e| eh[e][p]), [zero; 3]);
        }
        s4
    }

    pub fn field(&self) -> &VectorField {
        &self.xi
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.xi.grid()
    }

    pub fn laplacian(&self) -> &VectorField {
        self.lap.get_or_init(|| self.xi.laplacian())
    }

    fn hessian(&self) -> &Vec<Vec<f64>> {
        self.hess.get_or_init(|| self.xi.hessian())
    }

    /// Symmetric table `a_ij = -(∂_iξ^j + ∂_jξ^i)` in [`HESSIAN_PAIRS`] order.
    pub fn a_table(&self) -> &[Vec<f64>; 6] {
        self.a.get_or_init(|| {
            let g = self.xi.gradient();
            std::array::from_fn(|p| {
                let (i, j) = HESSIAN_PAIRS[p];
                g[3 * j + i]
                    .iter()
                    .zip(&g[3 * i + j])
                    .map(|(x, y)| -(x + y))
                    .collect()
            })
        })
    }

    /// Matrix `e_il` with `(S₄f)_i = Σ_l e_il f_l`, entry `3*i + l`.
    pub fn s4_table(&self) -> &[Vec<f64>; 9] {
        self.s4.get_or_init(|| {
            let n = self.grid().len();
            let x = self.xi.physical();
            let g = self.xi.gradient();
            let h = self.hessian();
            let a = self.a_table();
            // e_il = Σ_j [ξ^j(∂_j∂_iξ^l + ∂_j∂_lξ^i) + a_jl ∂_jξ^i - a_ij ∂_lξ^j],
            // using ∂_j a_il = -(∂_j∂_iξ^l + ∂_j∂_lξ^i).
            std::array::from_fn(|p| {
                let (i, l) = (p / 3, p % 3);
                let mut e = vec![0.0; n];
                for j in 0..3 {
                    mac(&mut e, &x[j], &h[6 * l + hessian_slot(i, j)], 1.0);
                    mac(&mut e, &x[j], &h[6 * i + hessian_slot(l, j)], 1.0);
                    mac(&mut e, &a[hessian_slot(j, l)], &g[3 * i + j], 1.0);
                    mac(&mut e, &a[hessian_slot(i, j)], &g[3 * j + l], -1.0);
                }
                if self.s4_scale != 1.0 {
                    e.iter_mut().for_each(|v| *v *= self.s4_scale);
                }
                e
            })
        })
    }
}

/// Largest number of nonzero coefficients of ξ that selects the sparse route.
const SPARSE_LIMIT: usize = 16;

/// `out_i = Σ_j M_ij w_j + Σ_a V_a ∂_a w_i` with coefficient fields `M`, `V`
/// given by their few nonzero Fourier coefficients.
#[derive(Clone, Debug, Default)]
struct SparseKernel {
    /// Axis indices of `p`, `M̂(p)` row-major and `V̂(p)`.
    terms: Vec<([usize; 3], [Complex; 9], [Complex; 3])>,
    has_transport: bool,
    /// Largest `max_i |p_i|` over the terms.
    band: usize,
}

impl SparseKernel {
    fn push(&mut self, grid: &Grid, p: usize, m: [Complex; 9], v: [Complex; 3]) {
        let zero = Complex::default();
        if m.iter().chain(&v).all(|c| *c == zero) {
            return;
        }
        self.has_transport |= v.iter().any(|c| *c != zero);
        let b = grid.mode_of(p).iter().map(|v| v.unsigned_abs() as usize).max().unwrap();
        self.band = self.band.max(b);
        self.terms.push((grid.unindex(p), m, v));
    }

    /// Dealiased cyclic convolution with the spectrum of `w`.
    fn apply(&self, w: &VectorField) -> VectorField {
        let grid = w.grid();
        let n = grid.n();
        let ws = w.spectral();
        let zero = Complex::default();
        let mut out: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![zero; grid.len()]);
        let band = w.bandwidth();
        grid.for_each_in_box(band, |q| {
            let wq = [ws[0][q], ws[1][q], ws[2][q]];
            if wq == [zero; 3] {
                return;
            }
            let [qx, qy, qz] = grid.unindex(q);
            let k = grid.kd(q);
            let wrap = |a: usize, b: usize| if a + b >= n { a + b - n } else { a + b };
            for (p, m, v) in &self.terms {
                let t = grid.index(wrap(qx, p[0]), wrap(qy, p[1]), wrap(qz, p[2]));
                if !grid.keeps(t) {
                    continue;
                }
                let mut r: [Complex; 3] = std::array::from_fn(|i| {
                    m[3 * i] * wq[0] + m[3 * i + 1] * wq[1] + m[3 * i + 2] * wq[2]
                });
                if self.has_transport {
                    let d = v[0] * k[0] + v[1] * k[1] + v[2] * k[2];
                    let d = Complex::new(-d.im, d.re);
                    for i in 0..3 {
                        r[i] += d * wq[i];
                    }
                }
                for i in 0..3 {
                    out[i][t] += r[i];
                }
            }
        });
        let out_band = (band + self.band).min(grid.dealias_cutoff());
        VectorField::from_spectral(grid.clone(), out).with_band(out_band)
    }
}

/// Points per block of the pointwise kernels; keeps every operand in cache.
const CHUNK: usize = 1024;

/// `o += s * a * b` elementwise.
#[inline]
fn mac(o: &mut [f64], a: &[f64], b: &[f64], s: f64) {
    for ((o, a), b) in o.iter_mut().zip(a).zip(b) {
        *o += s * a * b;
    }
}

/// Runs `body` over cache-sized blocks of points, then transforms with
/// dealiasing.
fn assemble(grid: &Arc<Grid>, body: impl Fn(Range<usize>, &mut [&mut [f64]; 3])) -> VectorField {
    let n = grid.len();
    let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n]);
    {
        let [o0, o1, o2] = &mut out;
        let blocks = o0.chunks_mut(CHUNK).zip(o1.chunks_mut(CHUNK)).zip(o2.chunks_mut(CHUNK));
        for (b, ((c0, c1), c2)) in blocks.enumerate() {
            let r = b * CHUNK..b * CHUNK + c0.len();
            body(r, &mut [c0, c1, c2]);
        }
    }
    VectorField::from_physical_dealiased(grid.clone(), [&out[0], &out[1], &out[2]])
}

/// `[u, w] = (u·∇)w - (w·∇)u` for arbitrary `u`, dealiased.
pub fn lie_bracket(u: &VectorField, w: &VectorField) -> Result<VectorField> {
    u.check_grid(w)?;
    let (up, ug) = (u.physical(), u.gradient());
    let (wp, wg) = (w.physical(), w.gradient());
    Ok(assemble(u.grid(), |r, o| {
        for i in 0..3 {
            for j in 0..3 {
                mac(o[i], &up[j][r.clone()], &wg[3 * i + j][r.clone()], 1.0);
                mac(o[i], &wp[j][r.clone()], &ug[3 * i + j][r.clone()], -1.0);
            }
        }
    }))
}

/// `[u, w]` for divergence-free `u` and `w`, evaluated as `curl(w × u)`.
/// Needs no gradients, so it costs a third of [`lie_bracket`]; the two agree
/// to round-off on dealiased inputs.
pub fn solenoidal_bracket(u: &VectorField, w: &VectorField) -> Result<VectorField> {
    u.check_grid(w)?;
    let (up, wp) = (u.physical(), w.physical());
    let cross = assemble(u.grid(), |r, o| {
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            mac(o[i], &wp[j][r.clone()], &up[k][r.clone()], 1.0);
            mac(o[i], &wp[k][r.clone()], &up[j][r.clone()], -1.0);
        }
    });
    Ok(cross.curl())
}

/// `ℒ_ξ w = (ξ·∇)w - (w·∇)ξ`.
pub fn lie_derivative(xi: &LieOperand, w: &VectorField) -> Result<VectorField> {
    match xi.kernels() {
        Some(k) => {
            xi.field().check_grid(w)?;
            Ok(k[0].apply(w))
        }
        None => lie_bracket(xi.field(), w),
    }
}

/// `(ℒ*_ξ g)_i = -Σ_j (ξ^j ∂_j g_i + g_j ∂_i ξ^j)`, the L² adjoint of `ℒ_ξ`.
pub fn lie_adjoint(xi: &LieOperand, g: &VectorField) -> Result<VectorField> {
    xi.field().check_grid(g)?;
    if let Some(k) = xi.kernels() {
        return Ok(k[1].apply(g));
    }
    let (xp, xg) = (xi.field().physical(), xi.field().gradient());
    let (gp, gg) = (g.physical(), g.gradient());
    Ok(assemble(g.grid(), |r, o| {
        for i in 0..3 {
            for j in 0..3 {
                mac(o[i], &xp[j][r.clone()], &gg[3 * i + j][r.clone()], -1.0);
                mac(o[i], &gp[j][r.clone()], &xg[3 * j + i][r.clone()], -1.0);
            }
        }
    }))
}

/// `ℒ²_ξ w = ℒ_ξ(ℒ_ξ w)`.
pub fn double_lie(xi: &LieOperand, w: &VectorField) -> Result<VectorField> {
    let once = lie_derivative(xi, w)?;
    lie_derivative(xi, &once)
}

/// Velocity `v = -curl Δ⁻¹ ω`, i.e. `v̂ = i k × ω̂ / |k|²`. A nonzero mean of
/// `ω` is dropped and reported.
pub fn biot_savart(w: &VectorField) -> MeanProjected {
    let g = w.grid();
    let mean = w.mean();
    let tol = 1e-13 * w.max_coefficient();
    let removed_mean = mean.iter().any(|m| m.abs() > tol).then_some(mean);
    let s = w.spectral();
    let band = w.known_band();
    let mut out: [Vec<_>; 3] = std::array::from_fn(|_| vec![Default::default(); g.len()]);
    g.for_each_in_box(band, |idx| {
        let k = g.kd(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            return;
        }
        let i = num_complex::Complex64::new(0.0, 1.0 / k2);
        out[0][idx] = i * (s[2][idx] * k[1] - s[1][idx] * k[2]);
        out[1][idx] = i * (s[0][idx] * k[2] - s[2][idx] * k[0]);
        out[2][idx] = i * (s[1][idx] * k[0] - s[0][idx] * k[1]);
    });
    MeanProjected {
        field: VectorField::from_spectral(g.clone(), out).with_band(band),
        removed_mean,
    }
}

/// `(S₂f)_i = Σ_j a_ij f_j`.
pub fn s2_apply(xi: &LieOperand, f: &VectorField) -> Result<VectorField> {
    xi.field().check_grid(f)?;
    if let Some(k) = xi.kernels() {
        return Ok(k[2].apply(f));
    }
    let a = xi.a_table();
    let fp = f.physical();
    Ok(assemble(f.grid(), |r, o| {
        for i in 0..3 {
            for j in 0..3 {
                mac(o[i], &a[hessian_slot(i, j)][r.clone()], &fp[j][r.clone()], 1.0);
            }
        }
    }))
}

/// `(S₄f)_i = -Σ_l (b_il + c_il) f_l`.
pub fn s4_apply(xi: &LieOperand, f: &VectorField) -> Result<VectorField> {
    xi.field().check_grid(f)?;
    if let Some(k) = xi.s4_kernel() {
        return Ok(k.apply(f));
    }
    let e = xi.s4_table();
    let fp = f.physical();
    Ok(assemble(f.grid(), |r, o| {
        for i in 0..3 {
            for l in 0..3 {
                mac(o[i], &e[3 * i + l][r.clone()], &fp[l][r.clone()], 1.0);
            }
        }
    }))
}

/// `S₁f = Δℒ_ξ f - ℒ_ξ Δf`.
pub fn s1_apply(xi: &LieOperand, f: &VectorField) -> Result<VectorField> {
    let a = lie_derivative(xi, f)?.laplacian();
    let b = lie_derivative(xi, &f.laplacian())?;
    Ok(a.lincomb(1.0, &b, -1.0))
}

/// `S₃f = S₁ℒ_ξ f - ℒ_ξ S₁f`.
pub fn s3_apply(xi: &LieOperand, f: &VectorField) -> Result<VectorField> {
    let a = s1_apply(xi, &lie_derivative(xi, f)?)?;
    let b = lie_derivative(xi, &s1_apply(xi, f)?)?;
    Ok(a.lincomb(1.0, &b, -1.0))
}

/// Pointwise tensors summed over a basis so that
/// `Σ_k (ℒ²_k ω)_i = Q^{aj}∂_a∂_jω_i + P^j∂_jω_i - 2M^{aij}∂_aω_j + N^{ij}ω_j`.
#[derive(Clone, Debug)]
pub struct ItoTensors {
    grid: Arc<Grid>,
    /// `Σ ξ^a ξ^j`, [`HESSIAN_PAIRS`] order.
    q: [Vec<f64>; 6],
    /// `Σ ξ^a ∂_a ξ^j`.
    p: [Vec<f64>; 3],
    /// `Σ ξ^a ∂_j ξ^i`, entry `9a + 3i + j`.
    m: Vec<Vec<f64>>,
    /// `Σ (∂_j ξ^b ∂_b ξ^i - ξ^a ∂_a∂_j ξ^i)`, entry `3i + j`.
    nn: [Vec<f64>; 9],
    empty: bool,
}

impl ItoTensors {
    pub fn new(basis: &NoiseBasis) -> Self {
        let grid = basis.grid().clone();
        let n = grid.len();
        let z = || vec![0.0; n];
        let mut q: [Vec<f64>; 6] = std::array::from_fn(|_| z());
        let mut pv: [Vec<f64>; 3] = std::array::from_fn(|_| z());
        let mut m: Vec<Vec<f64>> = (0..27).map(|_| z()).collect();
        let mut nn: [Vec<f64>; 9] = std::array::from_fn(|_| z());
        let mut empty = true;
        for k in 0..basis.len() {
            let xi = basis.field(k);
            if xi.max_coefficient() == 0.0 {
                continue;
            }
            empty = false;
            let x = xi.physical();
            let g = xi.gradient();
            let h = xi.hessian();
            for (s, &(a, j)) in HESSIAN_PAIRS.iter().enumerate() {
                mac(&mut q[s], &x[a], &x[j], 1.0);
            }
            for j in 0..3 {
                for a in 0..3 {
                    mac(&mut pv[j], &x[a], &g[3 * j + a], 1.0);
                }
            }
            for a in 0..3 {
                for ij in 0..9 {
                    mac(&mut m[9 * a + ij], &x[a], &g[ij], 1.0);
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    for b in 0..3 {
                        mac(&mut nn[3 * i + j], &g[3 * b + j], &g[3 * i + b], 1.0);
                        mac(&mut nn[3 * i + j], &x[b], &h[6 * i + hessian_slot(b, j)], -1.0);
                    }
                }
            }
        }
        Self {
            grid,
            q,
            p: pv,
            m,
            nn,
            empty,
        }
    }

    /// `½ Σ_k ℒ²_{ξ_k} w`.
    pub fn apply(&self, w: &VectorField) -> Result<VectorField> {
        if !self.grid.same_as(w.grid()) {
            return Err(Error::GridMismatch("Itô tensors built on another grid".into()));
        }
        if self.empty {
            return Ok(VectorField::zeros(w.grid().clone()));
        }
        let wp = w.physical();
        let wg = w.gradient();
        let wh = w.hessian();
        Ok(assemble(w.grid(), |r, o| {
            for i in 0..3 {
                for (slot, &(a, j)) in HESSIAN_PAIRS.iter().enumerate() {
                    let mult = if a == j { 0.5 } else { 1.0 };
                    mac(o[i], &self.q[slot][r.clone()], &wh[6 * i + slot][r.clone()], mult);
                }
                for j in 0..3 {
                    mac(o[i], &self.p[j][r.clone()], &wg[3 * i + j][r.clone()], 0.5);
                    mac(o[i], &self.nn[3 * i + j][r.clone()], &wp[j][r.clone()], 0.5);
                    for a in 0..3 {
                        mac(o[i], &self.m[9 * a + 3 * i + j][r.clone()], &wg[3 * j + a][r.clone()], -1.0);
                    }
                }
            }
        }))
    }
}

/// `½ Σ_k ℒ²_{ξ_k} w`, using the basis' cached tensors.
pub fn ito_correction(basis: &NoiseBasis, w: &VectorField) -> Result<VectorField> {
    basis.ito_tensors().apply(w)
}

/// `½ Σ_k ℒ²_{ξ_k} w` as a literal sum of double Lie derivatives.
pub fn ito_correction_direct(basis: &NoiseBasis, w: &VectorField) -> Result<VectorField> {
    let mut acc = VectorField::zeros(w.grid().clone());
    for k in 0..basis.len() {
        let op = basis.operand(k)?;
        acc.add_scaled(0.5, &double_lie(&op, w)?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{random_field, RandomFieldSpec};

    fn grid(n: usize) -> Arc<Grid> {
        Grid::periodic(n).unwrap()
    }

    fn operand(g: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> LieOperand {
        LieOperand::new(VectorField::from_fn(g.clone(), f)).unwrap()
    }

    fn close(a: &VectorField, b: &VectorField, tol: f64) {
        let d = a.lincomb(1.0, b, -1.0).max_coefficient();
        let s = a.max_coefficient().max(b.max_coefficient()).max(1.0);
        assert!(d <= tol * s, "difference {d} (scale {s})");
    }

    #[test]
    fn constant_transport_differentiates() {
        let g = grid(16);
        let xi = operand(&g, |_| [0.0, 0.0, 1.0]);
        let w = VectorField::from_fn(g.clone(), |x| [x[2].sin(), 0.0, 0.0]);
        close(
            &lie_derivative(&xi, &w).unwrap(),
            &VectorField::from_fn(g.clone(), |x| [x[2].cos(), 0.0, 0.0]),
            1e-13,
        );
        close(
            &double_lie(&xi, &w).unwrap(),
            &VectorField::from_fn(g.clone(), |x| [-x[2].sin(), 0.0, 0.0]),
            1e-13,
        );
        close(
            &lie_adjoint(&xi, &w).unwrap(),
            &VectorField::from_fn(g.clone(), |x| [-x[2].cos(), 0.0, 0.0]),
            1e-13,
        );
        for s in [
            s1_apply(&xi, &w).unwrap(),
            s2_apply(&xi, &w).unwrap(),
            s3_apply(&xi, &w).unwrap(),
            s4_apply(&xi, &w).unwrap(),
        ] {
            assert!(s.max_coefficient() < 1e-13);
        }
    }

    #[test]
    fn bracket_antisymmetry_and_self_bracket() {
        let g = grid(16);
        let a = random_field(&g, RandomFieldSpec::new(2, 1)).unwrap();
        let b = random_field(&g, RandomFieldSpec::new(3, 2)).unwrap();
        close(
            &lie_bracket(&a, &b).unwrap(),
            &lie_bracket(&b, &a).unwrap().scaled(-1.0),
            1e-12,
        );
        let op = LieOperand::new(a.clone()).unwrap();
        assert!(lie_derivative(&op, &a).unwrap().max_coefficient() < 1e-13);
        assert!(double_lie(&op, &a).unwrap().max_coefficient() < 1e-13);
        assert!(lie_adjoint(&op, &VectorField::zeros(g)).unwrap().max_coefficient() == 0.0);
    }

    #[test]
    fn rejects_compressible_transport() {
        let g = grid(8);
        let f = VectorField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]);
        assert!(matches!(LieOperand::new(f), Err(Error::NotSolenoidal(_))));
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = LieOperand::new(random_field(&grid(8), RandomFieldSpec::new(1, 1)).unwrap()).unwrap();
        let b = random_field(&grid(16), RandomFieldSpec::new(1, 1)).unwrap();
        assert!(matches!(lie_derivative(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn lie_derivative_preserves_solenoidality() {
        let g = grid(32);
        let xi = LieOperand::new(random_field(&g, RandomFieldSpec::new(2, 5)).unwrap()).unwrap();
        let w = random_field(&g, RandomFieldSpec::new(6, 6)).unwrap();
        assert!(lie_derivative(&xi, &w).unwrap().divergence_residual() < 1e-8);
    }

    #[test]
    fn biot_savart_closed_forms() {
        let g = grid(16);
        let w = VectorField::from_fn(g.clone(), |x| [0.0, 0.0, x[0].cos()]);
        let v = biot_savart(&w);
        assert!(v.removed_mean.is_none());
        close(&v.field, &VectorField::from_fn(g.clone(), |x| [0.0, x[0].sin(), 0.0]), 1e-14);
        let abc = VectorField::from_fn(g.clone(), |x| {
            [
                x[2].sin() + x[1].cos(),
                x[0].sin() + x[2].cos(),
                x[1].sin() + x[0].cos(),
            ]
        });
        close(&abc.curl(), &abc, 1e-13);
        close(&biot_savart(&abc).field, &abc, 1e-13);
        assert_eq!(biot_savart(&VectorField::zeros(g.clone())).field.max_coefficient(), 0.0);
        let shifted = VectorField::from_fn(g, |x| [1.0, 0.0, x[0].cos()]);
        assert!(biot_savart(&shifted).removed_mean.is_some());
    }

    #[test]
    fn s2_symmetry_and_adjoint_identity() {
        let g = grid(32);
        let xi = LieOperand::new(random_field(&g, RandomFieldSpec::new(2, 8)).unwrap()).unwrap();
        let a = xi.a_table();
        assert_eq!(a.len(), 6);
        let f = random_field(&g, RandomFieldSpec::new(6, 9)).unwrap();
        let h = random_field(&g, RandomFieldSpec::new(6, 10)).unwrap();
        let l = f.l2_inner(&s2_apply(&xi, &h).unwrap());
        let r = s2_apply(&xi, &f).unwrap().l2_inner(&h);
        assert!((l - r).abs() <= 1e-11 * f.l2_norm() * h.l2_norm() * a[0].len() as f64);
        let lhs = lie_adjoint(&xi, &f).unwrap();
        let rhs = lie_derivative(&xi, &f).unwrap().lincomb(-1.0, &s2_apply(&xi, &f).unwrap(), 1.0);
        close(&lhs, &rhs, 1e-12);
    }

    #[test]
    fn corrupted_s4_changes_output() {
        let g = grid(16);
        let xi = LieOperand::new(random_field(&g, RandomFieldSpec::new(2, 3)).unwrap()).unwrap();
        let f = random_field(&g, RandomFieldSpec::new(3, 4)).unwrap();
        let good = s4_apply(&xi, &f).unwrap();
        let bad = s4_apply(&xi.clone().with_corrupted_s4(1e-3), &f).unwrap();
        let d = good.rel_l2_distance(&bad);
        assert!((d - 1e-3 / (1.0 + 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn solenoidal_bracket_matches_gradient_form() {
        let g = Grid::periodic(24).unwrap();
        let u = random_field(&g, RandomFieldSpec::new(7, 1)).unwrap();
        let w = random_field(&g, RandomFieldSpec::new(7, 2)).unwrap();
        let a = lie_bracket(&u, &w).unwrap();
        let b = solenoidal_bracket(&u, &w).unwrap();
        assert!(b.rel_l2_distance(&a) < 1e-13);
    }

    #[test]
    fn sparse_route_matches_grid_products() {
        let g = grid(16);
        let basis = crate::noise::build_fourier_basis(&g, 2, 3.0, 0).unwrap();
        // Bandwidth 7 reaches past the cutoff, so aliasing is exercised too.
        let w = random_field(&g, RandomFieldSpec::new(7, 11).solenoidal(false)).unwrap();
        for k in [0, 13, basis.len() - 1] {
            let sparse = basis.operand(k).unwrap();
            assert!(sparse.is_sparse());
            let dense = sparse.clone().without_sparse_path();
            close(&lie_derivative(&sparse, &w).unwrap(), &lie_derivative(&dense, &w).unwrap(), 1e-13);
            close(&lie_adjoint(&sparse, &w).unwrap(), &lie_adjoint(&dense, &w).unwrap(), 1e-13);
            close(&s2_apply(&sparse, &w).unwrap(), &s2_apply(&dense, &w).unwrap(), 1e-13);
            close(&s4_apply(&sparse, &w).unwrap(), &s4_apply(&dense, &w).unwrap(), 1e-13);
        }
    }
}
