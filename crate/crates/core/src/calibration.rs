//! Noise fields estimated from drifter trajectories.
//!
//! Velocities are finite differences of the recorded positions. Samples that
//! share an observation time form one snapshot of the fluctuation field on a
//! coarse grid of cells; the covariance between cells is averaged over the
//! snapshots in which both cells are observed. Its leading eigenvectors,
//! interpolated to the simulation grid and Leray-projected, become the
//! transport fields `ξ_i = λ_i e_i`.
//!
//! Finite-difference velocities of a white-noise drifter model have
//! covariance `Σ ξ_i ξ_iᵀ / τ` with `τ = 2Δt_obs` for central differences,
//! so amplitudes are `λ_i = √(μ_i τ)` for covariance eigenvalues `μ_i`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{Complex, Grid, VectorField};
use crate::lagrangian::{min_image, stage_field, wrap, FieldSampler, FlowState};
use crate::noise::{ck0_constants, sample_path, summability_check, Ck0Report, NoiseBasis, SummabilityReport};
use crate::rng::CounterRng;

/// Column names required in trajectory CSV input, in order.
pub const TRAJECTORY_HEADER: [&str; 5] = ["id", "t", "x", "y", "z"];

/// Eigenfields keeping less than this fraction of their norm under Leray
/// projection are skipped.
pub const MIN_RETAINED: f64 = 1e-6;

/// Relative tolerance for negative covariance eigenvalues.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Calibration settings, read from the `calibrate` config file.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Torus side length of the trajectory coordinates.
    pub length: f64,
    /// Cells per side of the covariance grid.
    pub coarse_n: usize,
    /// Minimum velocity samples per cell.
    pub min_visits: usize,
    /// Number of eigenfields to export.
    pub top_m: usize,
    /// Simulation grid size for the exported fields.
    pub grid_n: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            length: TAU,
            coarse_n: 8,
            min_visits: 10,
            top_m: 4,
            grid_n: 32,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::Config(format!("length = {} must be positive", self.length)));
        }
        if self.coarse_n < 2 {
            return Err(Error::Config("coarse_n must be at least 2".into()));
        }
        let g = Grid::new(self.grid_n, self.length)?;
        if (self.coarse_n - 1) / 2 > g.dealias_cutoff() {
            return Err(Error::Config(format!(
                "coarse_n = {} resolves more modes than grid_n = {} keeps",
                self.coarse_n, self.grid_n
            )));
        }
        Ok(())
    }
}

/// One drifter's time-sorted record.
#[derive(Clone, Debug, PartialEq)]
pub struct Drifter {
    pub id: String,
    /// Strictly increasing.
    pub times: Vec<f64>,
    /// Wrapped to `[0, L)³`.
    pub positions: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub length: f64,
    /// In order of first appearance.
    pub drifters: Vec<Drifter>,
    /// Records dropped for repeating a drifter's timestamp.
    pub rejected: usize,
}

impl TrajectorySet {
    /// Groups `(id, t, x)` records by drifter, sorts each by time and drops
    /// records whose timestamp repeats an earlier one.
    pub fn from_records(length: f64, records: impl IntoIterator<Item = (String, f64, [f64; 3])>) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!("torus length {length} must be positive")));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut raw: Vec<(String, Vec<(f64, [f64; 3])>)> = Vec::new();
        for (id, t, x) in records {
            if !(t.is_finite() && x.iter().all(|c| c.is_finite())) {
                return Err(Error::Calibration(format!("non-finite record for drifter {id}")));
            }
            let k = *index.entry(id.clone()).or_insert_with(|| {
                raw.push((id, Vec::new()));
                raw.len() - 1
            });
            raw[k].1.push((t, wrap(x, length)));
        }
        let mut rejected = 0;
        let drifters = raw
            .into_iter()
            .map(|(id, mut recs)| {
                recs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let before = recs.len();
                recs.dedup_by(|b, a| a.0 == b.0);
                if recs.len() < before {
                    log::warn!("drifter {id}: {} records with duplicate timestamps rejected", before - recs.len());
                    rejected += before - recs.len();
                }
                Drifter {
                    id,
                    times: recs.iter().map(|r| r.0).collect(),
                    positions: recs.iter().map(|r| r.1).collect(),
                }
            })
            .collect();
        Ok(Self {
            length,
            drifters,
            rejected,
        })
    }

    /// Parses `id,t,x,y,z` CSV with a header row.
    pub fn read_csv(reader: impl Read, length: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header.iter().all(String::is_empty) {
            return Err(Error::Calibration("trajectory file is empty".into()));
        }
        if header != TRAJECTORY_HEADER {
            return Err(Error::Calibration(format!(
                "trajectory header must be `{}`, found `{}`",
                TRAJECTORY_HEADER.join(","),
                header.join(",")
            )));
        }
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| {
                    Error::Calibration(format!("data row {}: column `{}` is not a number", line + 1, TRAJECTORY_HEADER[i]))
                })
            };
            records.push((rec[0].to_owned(), num(1)?, [num(2)?, num(3)?, num(4)?]));
        }
        if records.is_empty() {
            return Err(Error::Calibration("trajectory file has no records".into()));
        }
        Self::from_records(length, records)
    }

    pub fn read_csv_file(path: &Path, length: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, length)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(TRAJECTORY_HEADER)?;
        for d in &self.drifters {
            for (t, x) in d.times.iter().zip(&d.positions) {
                wr.write_record([
                    d.id.clone(),
                    format!("{t:e}"),
                    format!("{:e}", x[0]),
                    format!("{:e}", x[1]),
                    format!("{:e}", x[2]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.drifters.iter().map(|d| d.times.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Median spacing between consecutive samples of the same drifter.
    pub fn sampling_interval(&self) -> Option<f64> {
        let mut gaps: Vec<f64> = self
            .drifters
            .iter()
            .flat_map(|d| d.times.windows(2).map(|w| w[1] - w[0]))
            .collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        Some(gaps[gaps.len() / 2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocitySample {
    /// Index into [`TrajectorySet::drifters`].
    pub drifter: usize,
    pub t: f64,
    pub x: [f64; 3],
    pub u: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Velocities {
    pub samples: Vec<VelocitySample>,
    /// Ids of drifters with a single sample.
    pub dropped: Vec<String>,
}

/// Second-order finite differences of each drifter's unwrapped path: the
/// three-point formula on the interior and one-sided three-point formulas at
/// the ends. Two-sample drifters get one forward difference.
pub fn estimate_velocities(traj: &TrajectorySet) -> Velocities {
    let l = traj.length;
    let per: Vec<Vec<VelocitySample>> = traj
        .drifters
        .par_iter()
        .enumerate()
        .map(|(k, d)| {
            let n = d.times.len();
            if n < 2 {
                return Vec::new();
            }
            let mut y = Vec::with_capacity(n);
            y.push(d.positions[0]);
            for j in 1..n {
                let step = min_image(sub(d.positions[j], d.positions[j - 1]), l);
                y.push(add(y[j - 1], step, 1.0));
            }
            let t = &d.times;
            (0..n)
                .map(|j| {
                    let u = if n == 2 {
                        scale(sub(y[1], y[0]), 1.0 / (t[1] - t[0]))
                    } else {
                        let (i0, w) = if j == 0 {
                            let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
                            (0, [-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))])
                        } else if j == n - 1 {
                            let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
                            (n - 3, [h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2.0 * h2 + h1) / (h2 * (h1 + h2))])
                        } else {
                            let (h1, h2) = (t[j] - t[j - 1], t[j + 1] - t[j]);
                            (j - 1, [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))])
                        };
                        let mut u = [0.0; 3];
                        for (o, wi) in w.iter().enumerate() {
                            u = add(u, y[i0 + o], *wi);
                        }
                        u
                    };
                    VelocitySample {
                        drifter: k,
                        t: t[j],
                        x: d.positions[j],
                        u,
                    }
                })
                .collect()
        })
        .collect();
    let mut dropped = Vec::new();
    for (d, s) in traj.drifters.iter().zip(&per) {
        if s.is_empty() {
            log::warn!("drifter {} has a single sample and is dropped", d.id);
            dropped.push(d.id.clone());
        }
    }
    Velocities {
        samples: per.into_iter().flatten().collect(),
        dropped,
    }
}

/// Empirical velocity covariance between the cells of a coarse grid.
#[derive(Clone, Debug)]
pub struct CorrelationModel {
    pub coarse_n: usize,
    pub length: f64,
    pub sampling_interval: f64,
    /// Per-cell mean velocity.
    pub mean: Vec<[f64; 3]>,
    /// Velocity samples per cell.
    pub visits: Vec<usize>,
    /// Cells with fewer than the required samples, as `[ix, iy, iz]`.
    pub undersampled: Vec<[usize; 3]>,
    /// Number of distinct observation times.
    pub snapshots: usize,
    /// Symmetric PSD `3C × 3C` matrix; row `3c + a` is component `a` in
    /// cell `c = (ix·n + iy)·n + iz`.
    pub covariance: DMatrix<f64>,
    /// Smallest eigenvalue before negative ones were clipped to zero.
    pub raw_min_eigenvalue: f64,
    /// Descending and non-negative.
    pub eigenvalues: Vec<f64>,
    /// Unit columns matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl CorrelationModel {
    pub fn cells(&self) -> usize {
        self.coarse_n.pow(3)
    }

    pub fn is_partial(&self) -> bool {
        !self.undersampled.is_empty()
    }

    /// Fails with the list of undersampled cells, if any.
    pub fn require_coverage(&self) -> Result<()> {
        if !self.is_partial() {
            return Ok(());
        }
        let listing: Vec<String> = self
            .undersampled
            .iter()
            .map(|c| {
                let i = (c[0] * self.coarse_n + c[1]) * self.coarse_n + c[2];
                format!("({},{},{}):{}", c[0], c[1], c[2], self.visits[i])
            })
            .collect();
        Err(Error::Calibration(format!(
            "{} of {} cells are undersampled (cell:visits): {}",
            self.undersampled.len(),
            self.cells(),
            listing.join(" ")
        )))
    }

    /// Noise time `τ` relating velocity covariance to `Σ ξ ξᵀ`.
    pub fn noise_time(&self) -> f64 {
        2.0 * self.sampling_interval
    }

    /// Eigenvector `i` as one vector per cell.
    pub fn eigenfield(&self, i: usize) -> Vec<[f64; 3]> {
        let v = self.eigenvectors.column(i);
        (0..self.cells()).map(|c| [v[3 * c], v[3 * c + 1], v[3 * c + 2]]).collect()
    }
}

fn cell_of(x: [f64; 3], n: usize, length: f64) -> usize {
    let idx = |c: f64| ((c / length * n as f64).floor() as usize).min(n - 1);
    (idx(x[0]) * n + idx(x[1])) * n + idx(x[2])
}

/// Snapshots accumulated per batch, bounding the data matrix size.
const SNAPSHOT_BATCH: usize = 256;

/// Bins velocities on a `coarse_n³` grid, removes each cell's mean and
/// estimates the covariance between cells from simultaneous observations.
pub fn build_correlation(traj: &TrajectorySet, coarse_n: usize, min_visits: usize) -> Result<CorrelationModel> {
    if coarse_n < 2 {
        return Err(Error::Config("coarse_n must be at least 2".into()));
    }
    let dt_obs = traj
        .sampling_interval()
        .ok_or_else(|| Error::Calibration("no drifter has two samples".into()))?;
    let vel = estimate_velocities(traj);
    let l = traj.length;
    let nc = coarse_n.pow(3);
    let dim = 3 * nc;

    let cells: Vec<usize> = vel.samples.iter().map(|s| cell_of(s.x, coarse_n, l)).collect();
    let mut visits = vec![0usize; nc];
    let mut mean = vec![[0.0; 3]; nc];
    for (s, &c) in vel.samples.iter().zip(&cells) {
        visits[c] += 1;
        mean[c] = add(mean[c], s.u, 1.0);
    }
    for (m, &v) in mean.iter_mut().zip(&visits) {
        if v > 0 {
            *m = scale(*m, 1.0 / v as f64);
        }
    }
    let undersampled = (0..nc)
        .filter(|&c| visits[c] < min_visits)
        .map(|c| [c / (coarse_n * coarse_n), (c / coarse_n) % coarse_n, c % coarse_n])
        .collect();

    let mut by_time: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, s) in vel.samples.iter().enumerate() {
        by_time.entry((s.t / dt_obs).round() as i64).or_default().push(i);
    }
    let snapshots: Vec<&Vec<usize>> = by_time.values().collect();

    let mut num = DMatrix::<f64>::zeros(dim, dim);
    let mut count = DMatrix::<f64>::zeros(nc, nc);
    for batch in snapshots.chunks(SNAPSHOT_BATCH) {
        let mut x = DMatrix::<f64>::zeros(dim, batch.len());
        let mut m = DMatrix::<f64>::zeros(nc, batch.len());
        for (j, members) in batch.iter().enumerate() {
            let mut hits = vec![0usize; nc];
            for &i in members.iter() {
                let c = cells[i];
                let f = sub(vel.samples[i].u, mean[c]);
                for a in 0..3 {
                    x[(3 * c + a, j)] += f[a];
                }
                hits[c] += 1;
            }
            for (c, &h) in hits.iter().enumerate() {
                if h > 0 {
                    m[(c, j)] = 1.0;
                    for a in 0..3 {
                        x[(3 * c + a, j)] /= h as f64;
                    }
                }
            }
        }
        num.gemm(1.0, &x, &x.transpose(), 1.0);
        count.gemm(1.0, &m, &m.transpose(), 1.0);
    }
    let mut cov = DMatrix::from_fn(dim, dim, |r, c| {
        let n = count[(r / 3, c / 3)];
        if n > 0.0 { num[(r, c)] / n } else { 0.0 }
    });
    cov = (&cov + cov.transpose()) * 0.5;

    let eig = cov.symmetric_eigen();
    let raw_min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    for mut col in eigenvectors.column_iter_mut() {
        // Sign fixed by the largest-magnitude entry, lowest index on ties.
        let lead = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    let weighted = DMatrix::from_fn(dim, dim, |r, c| eigenvectors[(r, c)] * eigenvalues[c]);
    let mut covariance = &weighted * eigenvectors.transpose();
    covariance = (&covariance + covariance.transpose()) * 0.5;

    Ok(CorrelationModel {
        coarse_n,
        length: l,
        sampling_interval: dt_obs,
        mean,
        visits,
        undersampled,
        snapshots: snapshots.len(),
        covariance,
        raw_min_eigenvalue,
        eigenvalues,
        eigenvectors,
    })
}

/// Exported basis with its diagnostics.
#[derive(Clone, Debug)]
pub struct CalibratedBasis {
    pub basis: NoiseBasis,
    /// Eigenfield index of every exported mode.
    pub source: Vec<usize>,
    /// `‖P φ‖ / ‖φ‖` under Leray projection, per exported mode.
    pub retained: Vec<f64>,
    /// Eigenfields dropped for losing their norm to the projection.
    pub skipped: Vec<usize>,
    pub ck0: Ck0Report,
    pub summability: SummabilityReport,
}

/// Trigonometric interpolant of cell-centred values, returned as spectral
/// coefficients on `grid`. Nyquist modes of an even coarse grid are dropped.
pub fn interpolate_cells(values: &[[f64; 3]], coarse_n: usize, grid: &Arc<Grid>) -> Result<VectorField> {
    let n = coarse_n;
    assert_eq!(values.len(), n * n * n, "one value per cell");
    let kmax = (n as i64 - 1) / 2;
    if kmax as usize > grid.n() / 2 - 1 {
        return Err(Error::Config(format!("coarse grid {n} too fine for n = {}", grid.n())));
    }
    let modes: Vec<i64> = (-kmax..=kmax).collect();
    let nm = modes.len();
    // e[a][i] = exp(-2πi m_a (i + 1/2) / n) / n
    let e: Vec<Vec<Complex>> = modes
        .iter()
        .map(|&m| {
            (0..n)
                .map(|i| Complex::from_polar(1.0 / n as f64, -TAU * m as f64 * (i as f64 + 0.5) / n as f64))
                .collect()
        })
        .collect();
    let mut spec: [Vec<Complex>; 3] = std::array::from_fn(|_| vec![Complex::default(); grid.len()]);
    for d in 0..3 {
        let mut g1 = vec![Complex::default(); n * n * nm];
        for ij in 0..n * n {
            for (c, ec) in e.iter().enumerate() {
                g1[ij * nm + c] = (0..n).map(|l| ec[l] * values[ij * n + l][d]).sum();
            }
        }
        let mut g2 = vec![Complex::default(); n * nm * nm];
        for i in 0..n {
            for (b, eb) in e.iter().enumerate() {
                for c in 0..nm {
                    g2[(i * nm + b) * nm + c] = (0..n).map(|j| eb[j] * g1[(i * n + j) * nm + c]).sum();
                }
            }
        }
        for (a, ea) in e.iter().enumerate() {
            for b in 0..nm {
                for c in 0..nm {
                    let v: Complex = (0..n).map(|i| ea[i] * g2[(i * nm + b) * nm + c]).sum();
                    let idx = grid.index_of_mode([modes[a], modes[b], modes[c]]).expect("mode range checked");
                    spec[d][idx] = v;
                }
            }
        }
    }
    Ok(VectorField::from_spectral(grid.clone(), spec))
}

/// Turns the leading `top_m` eigenpairs into noise modes on `grid`:
/// `e_i` is the projected, mean-free interpolant of the L²-normalized
/// eigenfield and `λ_i = √(μ_i τ)` with `μ_i` the eigenvalue of the integral
/// covariance operator.
pub fn export_basis(model: &CorrelationModel, top_m: usize, grid: &Arc<Grid>) -> Result<CalibratedBasis> {
    if top_m > model.eigenvalues.len() {
        return Err(Error::Config(format!(
            "top_m = {top_m} exceeds the {} available eigenpairs",
            model.eigenvalues.len()
        )));
    }
    if (grid.length() - model.length).abs() > 1e-12 * model.length {
        return Err(Error::GridMismatch(format!(
            "trajectories on L = {}, grid L = {}",
            model.length,
            grid.length()
        )));
    }
    let cell_volume = (model.length / model.coarse_n as f64).powi(3);
    let mut fields = Vec::with_capacity(top_m);
    let (mut source, mut retained, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..top_m {
        let phi: Vec<[f64; 3]> = model
            .eigenfield(i)
            .into_iter()
            .map(|v| scale(v, 1.0 / cell_volume.sqrt()))
            .collect();
        let raw = interpolate_cells(&phi, model.coarse_n, grid)?;
        let e = raw.leray_project().without_mean();
        let before = raw.l2_norm();
        let r = if before > 0.0 { e.l2_norm() / before } else { 0.0 };
        if r < MIN_RETAINED {
            log::warn!("eigenfield {} keeps {r:.2e} of its norm after projection and is skipped", i + 1);
            skipped.push(i);
            continue;
        }
        let mu = model.eigenvalues[i] * cell_volume;
        fields.push((format!("eof {}", i + 1), (mu * model.noise_time()).sqrt(), e));
        source.push(i);
        retained.push(r);
    }
    let basis = NoiseBasis::from_fields(grid.clone(), fields)?;
    basis.check_invariants()?;
    let ck0 = ck0_constants(&basis);
    if ck0.constants.iter().any(|c| !c.is_finite()) {
        return Err(Error::Calibration("non-finite C_k constant in the exported basis".into()));
    }
    let summability = summability_check(&basis);
    Ok(CalibratedBasis {
        basis,
        source,
        retained,
        skipped,
        ck0,
        summability,
    })
}

/// Full pipeline: coverage-checked correlation model and exported basis.
pub fn calibrate(traj: &TrajectorySet, cfg: &CalibrationConfig) -> Result<(CorrelationModel, CalibratedBasis)> {
    cfg.validate()?;
    if (traj.length - cfg.length).abs() > 1e-12 * cfg.length {
        return Err(Error::Config("trajectory length differs from the config".into()));
    }
    let model = build_correlation(traj, cfg.coarse_n, cfg.min_visits)?;
    model.require_coverage()?;
    let grid = Grid::new(cfg.grid_n, cfg.length)?;
    let exported = export_basis(&model, cfg.top_m, &grid)?;
    Ok((model, exported))
}

/// Drifters advected by the pure-noise flow `dη = Σ ξ_k(η)∘dB^k` of `basis`
/// from uniformly random starts, recorded every `record_every` steps of `dt`.
pub fn synthetic_trajectories(
    basis: &NoiseBasis,
    drifters: usize,
    records: usize,
    record_every: usize,
    dt: f64,
    seed: u64,
) -> Result<TrajectorySet> {
    if records < 2 || record_every == 0 {
        return Err(Error::Config("need at least two records of at least one step".into()));
    }
    let l = basis.grid().length();
    let rng = CounterRng::derive(seed, 0xd71f);
    let starts: Vec<[f64; 3]> = (0..drifters)
        .map(|i| std::array::from_fn(|d| l * rng.uniform(d as u64, i as u64)))
        .collect();
    let steps = (records - 1) * record_every;
    let path = sample_path(basis, steps, dt, seed)?;
    let mut flow = FlowState::new(starts, l);
    let mut out: Vec<(String, f64, [f64; 3])> = Vec::with_capacity(drifters * records);
    let mut record = |flow: &FlowState, t: f64| {
        for (i, x) in flow.positions.iter().enumerate() {
            out.push((format!("d{i}"), t, *x));
        }
    };
    record(&flow, 0.0);
    for j in 0..steps {
        let f = stage_field(None, basis, path.increment(j), dt)?;
        let u = FieldSampler::new(&f, false);
        flow = flow.heun_step(&u, &u, dt, false)?;
        if (j + 1) % record_every == 0 {
            record(&flow, (j + 1) as f64 * dt);
        }
    }
    TrajectorySet::from_records(l, out)
}

/// `|⟨a, b⟩| / (‖a‖ ‖b‖)`.
pub fn cosine_similarity(a: &VectorField, b: &VectorField) -> f64 {
    let d = a.l2_norm() * b.l2_norm();
    if d == 0.0 { 0.0 } else { a.l2_inner(b).abs() / d }
}

fn add(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    add(a, b, -1.0)
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
