//! Writes drifter trajectories from a known single-mode noise field, the
//! matching truth basis and a calibration config:
//!
//! ```text
//! cargo run --release --example synthetic_drifters -- <out-dir> [drifters] [records] [seed]
//! ```

use std::path::PathBuf;

use stoch_euler::calibration::synthetic_trajectories;
use stoch_euler::field::Grid;
use stoch_euler::noise::{build_fourier_basis, export_basis, NoiseBasis};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> stoch_euler::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().expect("usage: synthetic_drifters <out-dir> [drifters] [records] [seed]"));
    let mut num = |d: u64| args.next().map_or(d, |a| a.parse().expect("integer argument"));
    let (drifters, records, seed) = (num(320) as usize, num(12) as usize, num(1));

    let grid = Grid::periodic(16)?;
    let full = build_fourier_basis(&grid, 1, 3.0, 0)?;
    let k = full
        .modes()
        .iter()
        .position(|m| m.label == "(0,1,0) sin p1")
        .expect("mode present");
    let truth = NoiseBasis::from_fields(grid.clone(), vec![("truth".into(), 1.0, full.field(k).scaled(8.0))])?;

    std::fs::create_dir_all(&out)?;
    let traj = synthetic_trajectories(&truth, drifters, records, 5, 2e-3, seed)?;
    traj.write_csv(std::fs::File::create(out.join("drifters.csv"))?)?;
    export_basis(&truth, &out.join("truth"))?;
    std::fs::write(
        out.join("calibration.toml"),
        "coarse_n = 4\nmin_visits = 10\ntop_m = 2\ngrid_n = 16\n",
    )?;
    println!("wrote {drifters} drifters x {records} records to {}", out.display());
    Ok(())
}
