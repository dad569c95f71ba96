//! Named experiments and their output files.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::correlation::correlation_experiment;
use crate::error::{Error, Result};
use crate::sweep::{run_sweep, SeResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// UL/DL spectrum correlation ECDF over band gaps.
    Fig2,
    /// Array-size sweep with two streams per user.
    Fig5,
    /// All estimators, one stream per user.
    Fig6,
    /// UL estimation error sweep.
    Fig7,
    /// Azimuth grid size sweep.
    Fig8,
    /// Elevation grid size sweep.
    Fig9,
    /// Whatever the config describes.
    #[default]
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Fig2,
        Preset::Fig5,
        Preset::Fig6,
        Preset::Fig7,
        Preset::Fig8,
        Preset::Fig9,
        Preset::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
            Self::Fig8 => "fig8",
            Self::Fig9 => "fig9",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub preset: Preset,
    pub seed: u64,
    pub trials: usize,
    pub config_hash: String,
    pub version: String,
    pub outputs: Vec<String>,
    /// Canonical config; parsing it back reproduces the run.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetRun {
    pub csv_files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Each row next to the row of the reference sweep point at the same
/// estimator and SNR.
pub fn write_relative_csv<W: Write>(result: &SeResult, reference: &str, mut w: W) -> Result<()> {
    writeln!(w, "estimator,sweep_var,snr_db,mean_se,reference_se,delta_se")?;
    for row in &result.rows {
        let Some(r) = result.get(row.estimator, reference, row.snr_db) else {
            return Err(Error::invalid(format!("reference point `{reference}` missing from the result")));
        };
        writeln!(
            w,
            "{},{},{},{:.9},{:.9},{:.9}",
            row.estimator,
            row.sweep_var,
            row.snr_db,
            row.mean_se,
            r.mean_se,
            row.mean_se - r.mean_se
        )?;
    }
    Ok(())
}

/// Runs the experiment of `config.preset` and writes its CSVs and a JSON
/// manifest into `out_dir`.
pub fn run_preset(config: &ExperimentConfig, out_dir: &Path) -> Result<PresetRun> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let name = config.preset.name();
    let mut csv_files = Vec::new();

    if config.preset == Preset::Fig2 {
        let result = correlation_experiment(
            &config.scenario(),
            config.q,
            config.u,
            &config.omegas_hz,
            config.trials,
            config.seed,
        )?;
        let path = out_dir.join(format!("{name}.csv"));
        let mut w = create(&path)?;
        result.write_csv(&mut w)?;
        w.flush()?;
        csv_files.push(path);
    } else {
        let result = run_sweep(&config.sweep_config()?)?;
        let path = out_dir.join(format!("{name}.csv"));
        let mut w = create(&path)?;
        result.write_csv(&mut w)?;
        w.flush()?;
        csv_files.push(path);
        if config.preset == Preset::Fig8 {
            let reference = config.sweep_q.iter().max().expect("validated non-empty").to_string();
            let path = out_dir.join(format!("{name}_relative.csv"));
            let mut w = create(&path)?;
            write_relative_csv(&result, &reference, &mut w)?;
            w.flush()?;
            csv_files.push(path);
        }
    }

    let manifest = Manifest {
        preset: config.preset,
        seed: config.seed,
        trials: config.trials,
        config_hash: config.hash()?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: csv_files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        config: config.to_toml()?,
    };
    let manifest_path = out_dir.join(format!("{name}_manifest.json"));
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    log::info!("{name}: wrote {} CSV file(s) to {}", csv_files.len(), out_dir.display());
    Ok(PresetRun {
        csv_files,
        manifest: manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small(preset: Preset) -> ExperimentConfig {
        parse_config(
            "trials = 3\nsnr_grid_db = [10]\nq = 16\nomegas_hz = [0, 2e8]\nsweep_q = [8, 16]\nsweep_u = [1, 2]",
            Some(preset),
        )
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("fig3".parse::<Preset>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn fig6_writes_six_series_and_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_preset(&small(Preset::Fig6), dir.path()).unwrap();
        let csv = fs::read_to_string(&run.csv_files[0]).unwrap();
        let series: std::collections::BTreeSet<&str> =
            csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(series.len(), 6);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&run.manifest).unwrap()).unwrap();
        assert_eq!(manifest.outputs, vec!["fig6.csv"]);
        let echoed = parse_config(&manifest.config, None).unwrap();
        assert_eq!(echoed, small(Preset::Fig6));
    }

    #[test]
    fn fig8_is_referenced_to_the_largest_q() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_preset(&small(Preset::Fig8), dir.path()).unwrap();
        let rel = fs::read_to_string(&run.csv_files[1]).unwrap();
        let at_ref: Vec<&str> = rel.lines().filter(|l| l.split(',').nth(1) == Some("16")).collect();
        assert!(!at_ref.is_empty());
        for line in at_ref {
            assert_eq!(line.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn fig2_writes_ecdf() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_preset(&small(Preset::Fig2), dir.path()).unwrap();
        let csv = fs::read_to_string(&run.csv_files[0]).unwrap();
        assert!(csv.starts_with("omega_hz,rho,cdf\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn unwritable_output_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        assert!(matches!(run_preset(&small(Preset::Fig6), &blocker.join("sub")), Err(Error::Io(_))));
    }
}
