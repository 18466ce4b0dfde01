//! Stochastic flow map `dη = v dt + Σ_k ξ_k(η)∘dB^k`, its Jacobian, material
//! loops, and the Kelvin and Cauchy checks.
//!
//! Markers are advanced by stochastic Heun with the Eulerian velocity at both
//! ends of the step, so a tracker driven alongside the stepper consumes the
//! same Brownian increments.

use std::io::Write;
use std::path::Path;

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Complex, Grid, PointEvaluator, VectorField};
use crate::noise::{BrownianPath, NoiseBasis};
use crate::stepper::{step, SimConfig, SimState};

/// Wraps a point into `[0, L)³`.
pub fn wrap(x: [f64; 3], length: f64) -> [f64; 3] {
    x.map(|c| {
        let w = c.rem_euclid(length);
        if w >= length { 0.0 } else { w }
    })
}

/// Representative of `d` in `[-L/2, L/2)³`.
pub fn min_image(d: [f64; 3], length: f64) -> [f64; 3] {
    d.map(|c| c - length * (c / length).round())
}

fn add(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Off-grid evaluation of a field and optionally its gradient by
/// trigonometric interpolation, exact for band-limited fields.
#[derive(Clone, Debug)]
pub struct FieldSampler {
    ev: PointEvaluator,
    gradient: bool,
}

impl FieldSampler {
    pub fn new(field: &VectorField, gradient: bool) -> Self {
        let s = field.spectral();
        let ev = if gradient {
            let g = field.spectral_gradient();
            let refs: Vec<&[Complex]> = s.iter().chain(g.iter()).map(|v| v.as_slice()).collect();
            PointEvaluator::new(field.grid(), &refs)
        } else {
            PointEvaluator::for_field(field)
        };
        Self { ev, gradient }
    }

    pub fn value(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 12];
        let n = self.ev.components();
        self.ev.eval_into(x, &mut out[..n]);
        [out[0], out[1], out[2]]
    }

    /// Value and `∇u` with entry `(i, j) = ∂_j u_i`; the gradient is zero
    /// for a sampler built without one.
    pub fn value_and_gradient(&self, x: [f64; 3]) -> ([f64; 3], Matrix3<f64>) {
        if !self.gradient {
            return (self.value(x), Matrix3::zeros());
        }
        let mut out = [0.0; 12];
        self.ev.eval_into(x, &mut out);
        ([out[0], out[1], out[2]], Matrix3::from_row_slice(&out[3..]))
    }
}

/// Values of `field` at `points`.
pub fn interp_velocity(field: &VectorField, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let s = FieldSampler::new(field, false);
    points.par_iter().map(|&x| s.value(x)).collect()
}

/// Marker positions `η_t(X)`, labels `X` and Jacobians `∂η/∂X`.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub labels: Vec<[f64; 3]>,
    /// Wrapped into `[0, L)³`.
    pub positions: Vec<[f64; 3]>,
    pub jacobians: Vec<Matrix3<f64>>,
    length: f64,
}

impl FlowState {
    /// Identity map on `labels` at `t = 0`.
    pub fn new(labels: Vec<[f64; 3]>, length: f64) -> Self {
        let positions = labels.iter().map(|&x| wrap(x, length)).collect();
        let jacobians = vec![Matrix3::identity(); labels.len()];
        Self {
            t: 0.0,
            labels,
            positions,
            jacobians,
            length,
        }
    }

    /// Markers on a regular `m³` lattice offset from the grid points.
    pub fn lattice(grid: &Grid, m: usize) -> Self {
        let h = grid.length() / m as f64;
        let mut labels = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    labels.push([(i as f64 + 0.37) * h, (j as f64 + 0.61) * h, (k as f64 + 0.13) * h]);
                }
            }
        }
        Self::new(labels, grid.length())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn determinants(&self) -> Vec<f64> {
        self.jacobians.iter().map(|j| j.determinant()).collect()
    }

    /// `max |det J - 1|`.
    pub fn max_det_deviation(&self) -> f64 {
        self.determinants().into_iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Every Jacobian is finite with positive determinant.
    pub fn healthy(&self) -> bool {
        self.determinants().into_iter().all(|d| d > 0.0 && d.is_finite())
    }

    /// One Heun step driven by the stage fields `u0` (start) and `u1` (end),
    /// each already multiplied through by its time and noise increments.
    pub fn heun_step(&self, u0: &FieldSampler, u1: &FieldSampler, dt: f64, jacobian: bool) -> Result<Self> {
        let l = self.length;
        let moved: Vec<([f64; 3], Matrix3<f64>)> = self
            .positions
            .par_iter()
            .zip(&self.jacobians)
            .map(|(&x, &j)| {
                if jacobian {
                    let (a, g0) = u0.value_and_gradient(x);
                    let pred = add(x, a, 1.0);
                    let jp = j + g0 * j;
                    let (b, g1) = u1.value_and_gradient(pred);
                    let next = add(add(x, a, 0.5), b, 0.5);
                    (wrap(next, l), j + (g0 * j + g1 * jp) * 0.5)
                } else {
                    let a = u0.value(x);
                    let b = u1.value(add(x, a, 1.0));
                    (wrap(add(add(x, a, 0.5), b, 0.5), l), j)
                }
            })
            .collect();
        let mut out = self.clone();
        out.t += dt;
        for (k, (x, j)) in moved.into_iter().enumerate() {
            out.positions[k] = x;
            out.jacobians[k] = j;
        }
        if jacobian {
            if let Some((k, d)) = out.determinants().into_iter().enumerate().find(|(_, d)| !(*d > 0.0)) {
                return Err(Error::Integration {
                    t: out.t,
                    detail: format!("flow breakdown: det J = {d} at marker {k}"),
                });
            }
        }
        Ok(out)
    }
}

/// Stage field `v dt + Σ_k ΔB^k ξ_k`; `v = None` leaves only the noise.
pub fn stage_field(v: Option<&VectorField>, basis: &NoiseBasis, db: &[f64], dt: f64) -> Result<VectorField> {
    if db.len() != basis.len() {
        return Err(Error::Config(format!(
            "{} Brownian increments for {} noise modes",
            db.len(),
            basis.len()
        )));
    }
    let noise = basis.effective_field(db);
    Ok(match v {
        Some(v) => v.lincomb(dt, &noise, 1.0),
        None => noise,
    })
}

/// Heun update of marker positions; Jacobians are left as they are.
/// `v0` and `v1` are the velocities at the start and end of the step.
pub fn advect(
    flow: &FlowState,
    v0: Option<&VectorField>,
    v1: Option<&VectorField>,
    basis: &NoiseBasis,
    db: &[f64],
    dt: f64,
) -> Result<FlowState> {
    let u0 = FieldSampler::new(&stage_field(v0, basis, db, dt)?, false);
    let u1 = FieldSampler::new(&stage_field(v1, basis, db, dt)?, false);
    flow.heun_step(&u0, &u1, dt, false)
}

/// Heun update of positions together with `dJ = (∇v dt + Σ∇ξ_k∘dB^k) J`.
pub fn evolve_jacobian(
    flow: &FlowState,
    v0: Option<&VectorField>,
    v1: Option<&VectorField>,
    basis: &NoiseBasis,
    db: &[f64],
    dt: f64,
) -> Result<FlowState> {
    let u0 = FieldSampler::new(&stage_field(v0, basis, db, dt)?, true);
    let u1 = FieldSampler::new(&stage_field(v1, basis, db, dt)?, true);
    flow.heun_step(&u0, &u1, dt, true)
}

/// Closed polygon of markers kept below a maximum spacing by insertion.
#[derive(Clone, Debug)]
pub struct MaterialLoop {
    pub flow: FlowState,
    pub max_spacing: f64,
}

impl MaterialLoop {
    /// A quarter of the shortest resolved wavelength `L / k_cut`.
    pub fn default_spacing(grid: &Grid) -> f64 {
        grid.length() / grid.dealias_cutoff() as f64 / 4.0
    }

    pub fn new(points: Vec<[f64; 3]>, length: f64, max_spacing: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Config("a material loop needs at least three markers".into()));
        }
        if !(max_spacing > 0.0 && max_spacing < 0.25 * length) {
            return Err(Error::Config(format!("loop spacing {max_spacing} out of range")));
        }
        let mut l = Self {
            flow: FlowState::new(points, length),
            max_spacing,
        };
        l.resample();
        Ok(l)
    }

    /// Circle of `markers` points around `center` in the plane normal to
    /// coordinate axis `axis`.
    pub fn circle(
        center: [f64; 3],
        radius: f64,
        axis: usize,
        markers: usize,
        length: f64,
        max_spacing: f64,
    ) -> Result<Self> {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let pts = (0..markers)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / markers as f64;
                let mut p = center;
                p[a] += radius * th.cos();
                p[b] += radius * th.sin();
                p
            })
            .collect();
        Self::new(pts, length, max_spacing)
    }

    pub fn len(&self) -> usize {
        self.flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flow.is_empty()
    }

    /// Minimum-image displacement from marker `i` to its successor.
    fn segment(&self, i: usize) -> [f64; 3] {
        let p = &self.flow.positions;
        let q = p[(i + 1) % p.len()];
        min_image(add(q, p[i], -1.0), self.flow.length)
    }

    pub fn max_segment(&self) -> f64 {
        (0..self.len()).map(|i| dot(self.segment(i), self.segment(i)).sqrt()).fold(0.0, f64::max)
    }

    /// Drops coincident neighbours and splits every segment longer than the
    /// spacing at its Catmull-Rom midpoint; labels are interpolated the same
    /// way. Returns the number of inserted markers.
    pub fn resample(&mut self) -> usize {
        let l = self.flow.length;
        let tiny = 1e-12 * l;
        let mut inserted = 0;
        loop {
            let keep: Vec<usize> = (0..self.len())
                .filter(|&i| i == 0 || dot(self.segment(i - 1), self.segment(i - 1)).sqrt() > tiny)
                .collect();
            if keep.len() != self.len() {
                let f = &self.flow;
                self.flow = FlowState {
                    t: f.t,
                    labels: keep.iter().map(|&i| f.labels[i]).collect(),
                    positions: keep.iter().map(|&i| f.positions[i]).collect(),
                    jacobians: keep.iter().map(|&i| f.jacobians[i]).collect(),
                    length: l,
                };
            }
            let n = self.len();
            let long: Vec<bool> = (0..n)
                .map(|i| dot(self.segment(i), self.segment(i)).sqrt() > self.max_spacing)
                .collect();
            if !long.contains(&true) {
                return inserted;
            }
            let f = &self.flow;
            let mid = |pts: &[[f64; 3]], i: usize| -> [f64; 3] {
                let b = pts[i];
                let a = add(b, min_image(add(pts[(i + n - 1) % n], b, -1.0), l), 1.0);
                let c = add(b, min_image(add(pts[(i + 1) % n], b, -1.0), l), 1.0);
                let d = add(c, min_image(add(pts[(i + 2) % n], pts[(i + 1) % n], -1.0), l), 1.0);
                std::array::from_fn(|k| (-a[k] + 9.0 * b[k] + 9.0 * c[k] - d[k]) / 16.0)
            };
            let mut next = FlowState {
                t: f.t,
                labels: Vec::with_capacity(2 * n),
                positions: Vec::with_capacity(2 * n),
                jacobians: Vec::with_capacity(2 * n),
                length: l,
            };
            for i in 0..n {
                next.labels.push(f.labels[i]);
                next.positions.push(f.positions[i]);
                next.jacobians.push(f.jacobians[i]);
                if long[i] {
                    next.labels.push(mid(&f.labels, i));
                    next.positions.push(wrap(mid(&f.positions, i), l));
                    next.jacobians.push((f.jacobians[i] + f.jacobians[(i + 1) % n]) * 0.5);
                    inserted += 1;
                }
            }
            self.flow = next;
        }
    }

    /// Advects the markers by one Heun step, then resamples.
    pub fn advance(&mut self, u0: &FieldSampler, u1: &FieldSampler, dt: f64) -> Result<()> {
        self.flow = self.flow.heun_step(u0, u1, dt, false)?;
        self.resample();
        Ok(())
    }
}

/// `∮ v·dx` by the midpoint rule on the polygon.
pub fn circulation(lp: &MaterialLoop, v: &VectorField) -> f64 {
    circulation_with(lp, &FieldSampler::new(v, false))
}

/// Segment terms are evaluated in parallel and summed in order, so the
/// result does not depend on the thread count.
pub fn circulation_with(lp: &MaterialLoop, v: &FieldSampler) -> f64 {
    let terms: Vec<f64> = (0..lp.len())
        .into_par_iter()
        .map(|i| {
            let d = lp.segment(i);
            dot(v.value(add(lp.flow.positions[i], d, 0.5)), d)
        })
        .collect();
    terms.iter().sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyReport {
    /// `max |ω(η(X)) - J ω₀(X)| / sup|ω₀|`.
    pub rel_error: f64,
    pub max_abs: f64,
}

/// Compares `ω_t` at the markers with the initial vorticity pushed forward by
/// the Jacobians.
pub fn cauchy_check(flow: &FlowState, omega_t: &VectorField, omega0: &VectorField) -> CauchyReport {
    let now = FieldSampler::new(omega_t, false);
    let then = FieldSampler::new(omega0, false);
    let max_abs = flow
        .positions
        .par_iter()
        .zip(&flow.labels)
        .zip(&flow.jacobians)
        .map(|((&x, &x0), j)| {
            let w = now.value(x);
            let w0 = then.value(x0);
            let push = j * nalgebra::Vector3::from(w0);
            ((w[0] - push[0]).powi(2) + (w[1] - push[1]).powi(2) + (w[2] - push[2]).powi(2)).sqrt()
        })
        .reduce(|| 0.0, f64::max);
    let scale = omega0.sup_norm();
    CauchyReport {
        rel_error: if scale > 0.0 { max_abs / scale } else { max_abs },
        max_abs,
    }
}

/// Lagrangian objects advanced in lockstep with an Eulerian run.
#[derive(Clone, Debug, Default)]
pub struct Tracker {
    pub flow: Option<FlowState>,
    pub loops: Vec<MaterialLoop>,
    /// Evolve the flow's Jacobians as well as its positions.
    pub jacobian: bool,
}

impl Tracker {
    /// Advances everything across the Eulerian step `before → after`.
    pub fn step(
        &mut self,
        before: &SimState,
        after: &SimState,
        cfg: &SimConfig,
        basis: &NoiseBasis,
        db: &[f64],
    ) -> Result<()> {
        let dt = after.t - before.t;
        let (v0, v1) = if cfg.advect { (Some(&before.v), Some(&after.v)) } else { (None, None) };
        let f0 = stage_field(v0, basis, db, dt)?;
        let f1 = stage_field(v1, basis, db, dt)?;
        let u0 = FieldSampler::new(&f0, self.jacobian);
        let u1 = FieldSampler::new(&f1, self.jacobian);
        if let Some(flow) = &self.flow {
            self.flow = Some(flow.heun_step(&u0, &u1, dt, self.jacobian)?);
        }
        for lp in &mut self.loops {
            lp.advance(&u0, &u1, dt)?;
        }
        Ok(())
    }
}

/// Runs the stepper along `path` for `steps` steps of `cfg.dt`, advancing
/// the tracker in lockstep. `observe` sees every step's state.
pub fn run_tracked(
    cfg: &SimConfig,
    basis: &NoiseBasis,
    omega0: VectorField,
    path: &BrownianPath,
    steps: usize,
    tracker: &mut Tracker,
    mut observe: impl FnMut(&SimState, &Tracker) -> Result<()>,
) -> Result<SimState> {
    if path.nsteps() < steps || (path.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::Config("Brownian path does not match the tracked run".into()));
    }
    let mut state = SimState::new(omega0)?;
    observe(&state, tracker)?;
    for j in 0..steps {
        let db = path.increment(j);
        let next = step(&state, basis, db, cfg, cfg.dt)?;
        tracker.step(&state, &next, cfg, basis, db)?;
        state = next;
        observe(&state, tracker)?;
    }
    Ok(state)
}

/// Header of [`write_markers_csv`] rows.
pub const MARKER_CSV_HEADER: [&str; 5] = ["t", "marker", "x", "y", "z"];

/// Appends one `t,marker,x,y,z` row per marker.
pub fn write_markers_csv<W: Write>(w: &mut csv::Writer<W>, flow: &FlowState) -> Result<()> {
    for (i, p) in flow.positions.iter().enumerate() {
        w.write_record(&[
            format!("{:.17e}", flow.t),
            i.to_string(),
            format!("{:.17e}", p[0]),
            format!("{:.17e}", p[1]),
            format!("{:.17e}", p[2]),
        ])?;
    }
    Ok(())
}

/// Writes a `t,circulation` series.
pub fn write_circulation_csv(path: &Path, series: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "circulation"])?;
    for (t, c) in series {
        w.write_record(&[format!("{t:.17e}"), format!("{c:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{random_field, RandomFieldSpec};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::periodic(n).unwrap()
    }

    fn constant_basis(g: &Arc<Grid>, dir: [f64; 3]) -> NoiseBasis {
        let xi = VectorField::from_fn(g.clone(), |_| dir);
        NoiseBasis::from_fields(g.clone(), vec![("const".into(), 1.0, xi)]).unwrap()
    }

    #[test]
    fn interpolation_closed_forms() {
        let g = grid(16);
        let f = VectorField::from_fn(g.clone(), |x| [x[0].sin(), 0.0, 0.0]);
        let v = interp_velocity(&f, &[[PI / 2.0, 0.0, 0.0]]);
        assert!((v[0][0] - 1.0).abs() < 1e-12 && v[0][1].abs() < 1e-12);

        let w = random_field(&g, RandomFieldSpec::new(5, 2)).unwrap();
        let phys = w.physical();
        let s = FieldSampler::new(&w, false);
        for idx in [0, 17, 999, 4095] {
            let got = s.value(g.position(idx));
            for d in 0..3 {
                assert!((got[d] - phys[d][idx]).abs() < 1e-12);
            }
        }
        let c = VectorField::from_fn(g, |_| [0.5, -1.0, 2.0]);
        assert_eq!(interp_velocity(&c, &[[1.234, 5.0, 0.1]])[0].map(|x| (x * 1e12).round() / 1e12), [0.5, -1.0, 2.0]);
    }

    #[test]
    fn sampler_gradient_matches_grid_gradient() {
        let g = grid(16);
        let w = random_field(&g, RandomFieldSpec::new(4, 8)).unwrap();
        let s = FieldSampler::new(&w, true);
        let grad = w.gradient();
        let idx = 1234;
        let (_, m) = s.value_and_gradient(g.position(idx));
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - grad[3 * i + j][idx]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn constant_noise_translates_exactly() {
        let g = grid(8);
        let basis = constant_basis(&g, [0.0, 0.0, 1.0]);
        let mut flow = FlowState::new(vec![[1.0, 2.0, 3.0], [6.0, 0.1, 6.2]], g.length());
        let mut b = 0.0;
        for db in [0.3, -0.05, 0.7] {
            flow = evolve_jacobian(&flow, None, None, &basis, &[db], 0.01).unwrap();
            b += db;
        }
        for (x, x0) in flow.positions.iter().zip(&flow.labels) {
            let d = min_image(add(*x, add(*x0, [0.0, 0.0, b], 1.0), -1.0), g.length());
            assert!(dot(d, d).sqrt() < 1e-12);
        }
        assert!(flow.jacobians.iter().all(|j| (j - Matrix3::identity()).norm() < 1e-12));
    }

    #[test]
    fn zero_and_uniform_velocity() {
        let g = grid(8);
        let basis = NoiseBasis::empty(g.clone());
        let zero = VectorField::zeros(g.clone());
        let flow = FlowState::new(vec![[1.0, 1.0, 1.0]], g.length());
        let same = advect(&flow, Some(&zero), Some(&zero), &basis, &[], 0.1).unwrap();
        assert_eq!(same.positions, flow.positions);
        let e1 = VectorField::from_fn(g.clone(), |_| [1.0, 0.0, 0.0]);
        let mut f = flow;
        for _ in 0..10 {
            f = advect(&f, Some(&e1), Some(&e1), &basis, &[], 0.05).unwrap();
        }
        assert!((f.positions[0][0] - 1.5).abs() < 1e-12);
        assert!((f.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shear_jacobian_matches_matrix_exponential() {
        // v = (ε sin y, 0, 0) near y = 0 is the shear (εy, 0, 0) to first order.
        let g = grid(16);
        let eps = 1e-3;
        let v = VectorField::from_fn(g.clone(), |x| [eps * x[1].sin(), 0.0, 0.0]);
        let basis = NoiseBasis::empty(g.clone());
        let mut f = FlowState::new(vec![[0.0, 0.0, 0.0]], g.length());
        let (dt, steps) = (0.01, 100);
        for _ in 0..steps {
            f = evolve_jacobian(&f, Some(&v), Some(&v), &basis, &[], dt).unwrap();
        }
        let t = dt * steps as f64;
        let mut expect = Matrix3::identity();
        expect[(0, 1)] = eps * t;
        assert!((f.jacobians[0] - expect).norm() < 1e-12);
        assert!((f.determinants()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circulation_closed_forms_and_resampling() {
        let g = grid(16);
        let c = VectorField::from_fn(g.clone(), |_| [1.0, 0.0, 0.0]);
        let lp = MaterialLoop::circle([3.0, 3.0, 3.0], 1.0, 2, 64, g.length(), 0.2).unwrap();
        assert!(circulation(&lp, &c).abs() < 1e-12);

        // v = (-sin y, sin x, 0): ∮ over a circle of radius r about the
        // origin equals ∫∫ (cos x + cos y) dA = 4π r J₁(r).
        let v = VectorField::from_fn(g.clone(), |x| [-x[1].sin(), x[0].sin(), 0.0]);
        let r = 0.5;
        let coarse = MaterialLoop::circle([0.0; 3], r, 2, 4096, g.length(), 0.2).unwrap();
        let fine = MaterialLoop::circle([0.0; 3], r, 2, 1024, g.length(), 0.2).unwrap();
        let bessel_j1 = |x: f64| {
            (0..30).fold(0.0, |acc, m| {
                let mf = (1..=m).map(|k| k as f64).product::<f64>();
                let mf1 = mf * (m + 1) as f64;
                acc + (-1f64).powi(m) / (mf * mf1) * (x / 2.0).powi(2 * m + 1)
            })
        };
        let exact = 4.0 * PI * r * bessel_j1(r);
        // Polygon area deficit is O(h²).
        assert!((circulation(&fine, &v) - exact).abs() < 1e-4 * exact.abs());
        let mut resampled = MaterialLoop::circle([0.0; 3], r, 2, 4096, g.length(), 0.2).unwrap();
        resampled.max_spacing = 0.5 * resampled.max_segment();
        assert!(resampled.resample() > 0);
        let (a, b) = (circulation(&coarse, &v), circulation(&resampled, &v));
        assert!((a - b).abs() < 1e-6 * a.abs(), "{a} {b}");
    }

    #[test]
    fn coincident_markers_are_dropped() {
        let g = grid(8);
        let pts = vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.1, 1.0, 1.0], [1.0, 1.1, 1.0]];
        let lp = MaterialLoop::new(pts, g.length(), 0.5).unwrap();
        assert_eq!(lp.len(), 3);
    }

    #[test]
    fn cauchy_identity_for_constant_noise() {
        let g = grid(16);
        let basis = constant_basis(&g, [0.2, -0.1, 0.3]);
        let w0 = random_field(&g, RandomFieldSpec::new(4, 1)).unwrap();
        let cfg = SimConfig { advect: false, dt: 1e-2, ..Default::default() };
        let path = BrownianPath::sample(1, 10, 1e-2, 3).unwrap();
        let mut tracker = Tracker {
            flow: Some(FlowState::lattice(&g, 4)),
            loops: Vec::new(),
            jacobian: true,
        };
        let mut at_zero = None;
        let end = run_tracked(&cfg, &basis, w0.clone(), &path, 10, &mut tracker, |s, tr| {
            if s.step == 0 {
                at_zero = Some(cauchy_check(tr.flow.as_ref().unwrap(), &s.omega, &w0).rel_error);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(at_zero, Some(0.0));
        // Heun is not exact for the Eulerian field, so only check the flow side
        // against the exact shifted field.
        let b = path.value_at(10)[0];
        let mut exact = w0.clone();
        for c in exact.spectral_mut().iter_mut() {
            for (idx, z) in c.iter_mut().enumerate() {
                let k = g.kd(idx);
                *z *= Complex::from_polar(1.0, -(0.2 * k[0] - 0.1 * k[1] + 0.3 * k[2]) * b);
            }
        }
        let r = cauchy_check(tracker.flow.as_ref().unwrap(), &exact, &w0);
        assert!(r.rel_error < 1e-10, "{r:?}");
        assert!(end.omega.rel_l2_distance(&exact) < 1e-2);
    }
}
