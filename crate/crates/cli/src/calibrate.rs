//! `seuler calibrate`: drifter CSV to exported noise basis.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stoch_euler::calibration::{calibrate, cosine_similarity, CalibrationConfig, TrajectorySet};
use stoch_euler::field::Grid;
use stoch_euler::noise::{export_basis, import_basis};

pub struct CalibrateArgs<'a> {
    pub csv: &'a Path,
    pub config: &'a Path,
    pub out: Option<&'a Path>,
    /// Basis whose first field is compared with the recovered leading mode.
    pub truth: Option<&'a Path>,
}

pub fn read_config(path: &Path) -> Result<CalibrationConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: CalibrationConfig = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{}", e.to_string().trim_end()))
        .with_context(|| format!("invalid calibration config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<PathBuf> {
    let cfg = read_config(args.config)?;
    let out = match args.out {
        Some(p) => p.to_path_buf(),
        None => args.config.parent().unwrap_or(Path::new(".")).join("basis"),
    };
    if out.exists() {
        bail!("output directory {} already exists", out.display());
    }
    let traj = TrajectorySet::read_csv_file(args.csv, cfg.length)?;
    println!(
        "read {} records of {} drifters from {} ({} rejected)",
        traj.len(),
        traj.drifters.len(),
        args.csv.display(),
        traj.rejected
    );
    let (model, cal) = calibrate(&traj, &cfg)?;
    println!(
        "coarse grid {}^3, {} snapshots, sampling interval {:.6e}, noise time {:.6e}",
        model.coarse_n,
        model.snapshots,
        model.sampling_interval,
        model.noise_time()
    );
    println!("leading covariance eigenvalues:");
    for (i, mu) in model.eigenvalues.iter().take(cfg.top_m.max(1)).enumerate() {
        println!("  mu[{i}] = {mu:.6e}");
    }
    if model.raw_min_eigenvalue < 0.0 {
        println!("clipped negative eigenvalues down to {:.3e}", model.raw_min_eigenvalue);
    }
    for s in &cal.skipped {
        println!("skipped eigenvector {s}: nothing survives the projection");
    }
    println!("retained energy fraction after projection:");
    for (m, r) in cal.basis.modes().iter().zip(&cal.retained) {
        println!("  {:<12} lambda = {:.6e}  retained = {r:.4}", m.label, m.lambda);
    }
    println!("C_k(0) per mode:");
    for (m, c) in cal.basis.modes().iter().zip(&cal.ck0.constants) {
        println!("  {:<12} {c:.6e}", m.label);
    }
    println!("sum C_k(0) = {:.6e}", cal.ck0.total());
    println!(
        "summability: sum lambda_k^2 |k|^2 = {:.6e}, tail = {:.3e}, converged = {}",
        cal.summability.sum_lambda_k2_k2, cal.summability.tail_estimate, cal.summability.converged
    );
    if let Some(t) = args.truth {
        let grid = Grid::new(cfg.grid_n, cfg.length)?;
        let truth = import_basis(t, &grid).with_context(|| format!("reading truth basis {}", t.display()))?;
        if truth.is_empty() || cal.basis.is_empty() {
            bail!("similarity needs a nonempty truth and recovered basis");
        }
        let sim = cosine_similarity(&cal.basis.field(0), &truth.field(0));
        println!("similarity with truth = {sim:.6}");
    }
    export_basis(&cal.basis, &out)?;
    println!("wrote {} mode(s) to {}", cal.basis.len(), out.display());
    Ok(out)
}
