//! `seuler run`: ensemble execution into an atomically published directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use stoch_euler::diagnostics::DiagRecord;
use stoch_euler::field::write_snapshot;
use stoch_euler::noise::{sample_path, NoiseBasis};
use stoch_euler::stepper::{member_seed, run_with_path, StopInfo};

use crate::manifest::Loaded;

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "SEULER_WORKERS";

/// Ensemble outcome: `stopped` counts members whose stopping rule fired or
/// whose state became non-finite.
#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub members: usize,
    pub stopped: usize,
}

pub fn member_dir_name(member: usize) -> String {
    format!("member_{member:04}")
}

fn workers(loaded: &Loaded) -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("{WORKERS_ENV} must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(loaded
            .manifest
            .ensemble
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))),
    }
}

pub fn cmd_run(manifest: &Path) -> Result<Outcome> {
    let loaded = Loaded::read(manifest)?;
    let grid = loaded.grid()?;
    let basis = loaded.basis(&grid)?;
    let omega0 = loaded.initial(&grid)?;
    let members = loaded.manifest.ensemble.members;
    let master = loaded.manifest.sim.seed;
    let nworkers = workers(&loaded)?;

    let dest = loaded.output_dir();
    let parent = dest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let name = dest.file_name().context("[output] dir has no final component")?.to_string_lossy();
    let staging = tempfile::Builder::new()
        .prefix(&format!(".{name}.partial-"))
        .tempdir_in(parent)
        .with_context(|| format!("creating staging directory in {}", parent.display()))?;

    fs::write(staging.path().join("manifest.toml"), &loaded.text)?;
    fs::write(staging.path().join("provenance.toml"), provenance(&loaded, &basis, nworkers, master, members))?;

    log::info!("running {members} member(s) on {nworkers} worker(s)");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(nworkers).build()?;
    let stops: Vec<StopInfo> = pool.install(|| {
        (0..members)
            .into_par_iter()
            .map(|m| run_member(&loaded, &basis, &omega0, master, m, staging.path()))
            .collect::<Result<_>>()
    })?;

    let mut summary = String::new();
    for (m, s) in stops.iter().enumerate() {
        writeln!(summary, "[[member]]\nindex = {m}\nseed = {}", member_seed(master, m))?;
        summary.push_str(&s.to_record());
        summary.push('\n');
    }
    fs::write(staging.path().join("ensemble.toml"), summary)?;

    let staged = staging.keep();
    fs::rename(&staged, &dest).with_context(|| format!("publishing {}", dest.display()))?;
    Ok(Outcome {
        dir: dest,
        members,
        stopped: stops.iter().filter(|s| s.stopped()).count(),
    })
}

fn run_member(
    loaded: &Loaded,
    basis: &NoiseBasis,
    omega0: &stoch_euler::field::VectorField,
    master: u64,
    member: usize,
    root: &Path,
) -> Result<StopInfo> {
    let seed = member_seed(master, member);
    let cfg = loaded.sim_config(seed)?;
    let dir = root.join(member_dir_name(member));
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    let path = sample_path(basis, cfg.steps()?, cfg.dt, seed)?;
    let traj = run_with_path(&cfg, basis, omega0.clone(), &path, |s| {
        write_snapshot(&snaps.join(format!("step_{:08}.seu", s.step)), &s.omega, s.t)
    })
    .with_context(|| format!("member {member}"))?;

    let mut w = BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?);
    writeln!(w, "{}", DiagRecord::CSV_HEADER)?;
    for r in &traj.records {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    let mut initial = BufWriter::new(fs::File::create(dir.join("initial.csv"))?);
    writeln!(initial, "{}\n{}", DiagRecord::CSV_HEADER, traj.initial.csv_row())?;
    initial.flush()?;
    write_snapshot(&dir.join("final.seu"), &traj.final_state.omega, traj.final_state.t)?;
    fs::write(dir.join("stop.toml"), format!("seed = {seed}\n{}", traj.stop.to_record()))?;
    if traj.stop.stopped() {
        log::warn!("member {member} stopped at t = {:e}", traj.stop.t);
    }
    Ok(traj.stop)
}

fn provenance(loaded: &Loaded, basis: &NoiseBasis, workers: usize, master: u64, members: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seuler_version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "stoch_euler_version = \"{}\"", stoch_euler::VERSION);
    let _ = writeln!(s, "manifest = \"manifest.toml\"");
    let _ = writeln!(s, "master_seed = {master}");
    let _ = writeln!(s, "basis_seed = {}", basis.seed());
    let _ = writeln!(s, "basis_modes = {}", basis.len());
    let _ = writeln!(s, "workers = {workers}");
    let seeds: Vec<String> = (0..members).map(|m| member_seed(master, m).to_string()).collect();
    let _ = writeln!(s, "member_seeds = [{}]", seeds.join(", "));
    let _ = writeln!(s, "grid_n = {}", loaded.manifest.grid.n);
    s
}
