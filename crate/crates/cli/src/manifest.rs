//! Run manifest: a TOML document with fixed sections. The grammar is
//! documented in `docs/manifest.md`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use stoch_euler::field::{random_field, read_snapshot, Grid, RandomFieldSpec, VectorField};
use stoch_euler::noise::{build_fourier_basis, import_basis, NoiseBasis, BASIS_MANIFEST};
use stoch_euler::stepper::{Scheme, SimConfig};
use stoch_euler::verify::abc_flow;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub grid: GridSection,
    pub sim: SimSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    pub basis: BasisSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(default = "two_pi")]
    pub length: f64,
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub nu: f64,
    /// Cutoff level `R`; absent means no cutoff and no stopping rule.
    pub cutoff: Option<f64>,
    pub c_bs: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub advect: bool,
}

fn default_scheme() -> String {
    "strat_heun".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "one")]
    pub every: usize,
    pub snapshot_every: Option<usize>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            every: 1,
            snapshot_every: None,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum BasisSection {
    None,
    Generated {
        kmax: u32,
        #[serde(default = "three")]
        alpha: f64,
        #[serde(default)]
        seed: u64,
    },
    Imported {
        path: PathBuf,
    },
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSection {
    /// `A = B = C = 1` ABC flow times `amplitude`.
    Beltrami {
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Random {
        bandwidth: u32,
        seed: u64,
        #[serde(default = "two")]
        decay: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Snapshot {
        path: PathBuf,
    },
}

fn unit() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "one")]
    pub members: usize,
    /// Worker threads; the `SEULER_WORKERS` environment variable wins.
    pub workers: Option<usize>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            members: 1,
            workers: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

/// A parsed manifest with every relative path resolved against the
/// manifest's directory.
#[derive(Debug)]
pub struct Loaded {
    pub text: String,
    pub manifest: RunManifest,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest = parse(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { text, manifest, base };
        loaded.check()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Validates values and the existence of every referenced file.
    fn check(&self) -> Result<()> {
        let m = &self.manifest;
        self.sim_config(0)?.validate().context("[sim]")?;
        if m.ensemble.members == 0 {
            bail!("[ensemble] members must be at least 1");
        }
        if m.ensemble.workers == Some(0) {
            bail!("[ensemble] workers must be at least 1");
        }
        if let BasisSection::Imported { path } = &m.basis {
            let dir = self.resolve(path);
            if !dir.join(BASIS_MANIFEST).is_file() {
                bail!("[basis] path: no {BASIS_MANIFEST} in {}", dir.display());
            }
        }
        if let InitialSection::Snapshot { path } = &m.initial {
            let f = self.resolve(path);
            if !f.is_file() {
                bail!("[initial] path: {} does not exist", f.display());
            }
        }
        let out = self.output_dir();
        if out.exists() {
            bail!("[output] dir: {} already exists", out.display());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.manifest.output.dir)
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.manifest.grid.n, self.manifest.grid.length).context("[grid]")
    }

    /// Simulation settings with the given member seed.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig> {
        let s = &self.manifest.sim;
        let d = &self.manifest.diagnostics;
        let scheme: Scheme = s.scheme.parse().context("[sim] scheme")?;
        Ok(SimConfig {
            dt: s.dt,
            horizon: s.horizon,
            cutoff: s.cutoff,
            nu: s.nu,
            scheme,
            seed,
            snapshot_every: d.snapshot_every,
            diag_every: d.every,
            advect: s.advect,
            c_bs: s.c_bs,
        })
    }

    pub fn basis(&self, grid: &Arc<Grid>) -> Result<NoiseBasis> {
        match &self.manifest.basis {
            BasisSection::None => Ok(NoiseBasis::empty(grid.clone())),
            BasisSection::Generated { kmax, alpha, seed } => {
                build_fourier_basis(grid, *kmax, *alpha, *seed).context("[basis]")
            }
            BasisSection::Imported { path } => import_basis(&self.resolve(path), grid).context("[basis] path"),
        }
    }

    pub fn initial(&self, grid: &Arc<Grid>) -> Result<VectorField> {
        match &self.manifest.initial {
            InitialSection::Beltrami { amplitude } => Ok(abc_flow(grid).scaled(*amplitude)),
            InitialSection::Random {
                bandwidth,
                seed,
                decay,
                amplitude,
            } => {
                let w = random_field(grid, RandomFieldSpec::new(*bandwidth, *seed).decay(*decay)).context("[initial]")?;
                Ok(w.scaled(*amplitude / w.l2_norm()))
            }
            InitialSection::Snapshot { path } => {
                let (w, _) = read_snapshot(&self.resolve(path), grid).context("[initial] path")?;
                Ok(w)
            }
        }
    }
}

/// Parses manifest text; errors carry the TOML position and the offending
/// key.
pub fn parse(text: &str) -> Result<RunManifest> {
    toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", e.to_string().trim_end()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
n = 16

[sim]
dt = 1e-3
horizon = 1e-2

[basis]
source = "none"

[initial]
kind = "beltrami"

[output]
dir = "out"
"#;

    #[test]
    fn minimal_manifest_takes_defaults() {
        let m = parse(MINIMAL).unwrap();
        assert_eq!(m.grid.length, std::f64::consts::TAU);
        assert_eq!(m.sim.scheme, "strat_heun");
        assert_eq!(m.ensemble.members, 1);
        assert_eq!(m.diagnostics.every, 1);
        assert!(matches!(m.basis, BasisSection::None));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("dt = 1e-3", "dtt = 1e-3");
        let e = parse(&text).unwrap_err().to_string();
        assert!(e.contains("dtt"), "{e}");
    }

    #[test]
    fn wrong_type_points_at_the_key() {
        let text = MINIMAL.replace("n = 16", "n = \"sixteen\"");
        let e = parse(&text).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("n = \"sixteen\""), "{e}");
    }

    #[test]
    fn tagged_sections() {
        let text = MINIMAL.replace("source = \"none\"", "source = \"generated\"\nkmax = 2");
        match parse(&text).unwrap().basis {
            BasisSection::Generated { kmax, alpha, seed } => assert_eq!((kmax, alpha, seed), (2, 3.0, 0)),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("source = \"none\"", "source = \"fourier\"");
        assert!(parse(&text).unwrap_err().to_string().contains("fourier"));
    }
}
