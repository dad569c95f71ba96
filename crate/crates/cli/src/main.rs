use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dsce_core::array::Link;
use dsce_core::channel::{draw_channel_pair, ChannelPair};
use dsce_core::codebook::build_fd_codebook;
use dsce_core::config::{load_config, parse_config, ExperimentConfig};
use dsce_core::dsce::run_dsce;
use dsce_core::plot::emit_plot_script;
use dsce_core::presets::{run_preset, Preset};
use dsce_core::rng::{stream, tag};
use dsce_core::spectrum::{capon_spectrum, default_loading};

#[derive(Parser)]
#[command(name = "dsce", version, about = "FDD FD-MIMO downlink channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML config; absent keys take the preset defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write its CSVs and manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write a gnuplot script per CSV.
        #[arg(long)]
        plot: bool,
    },
    /// Dump the UL spatial spectrum of one random channel.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Store the drawn channel pair as JSON for `estimate`.
        #[arg(long)]
        save_channel: Option<PathBuf>,
    },
    /// Run the estimator once on a stored channel pair.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        channel: PathBuf,
    },
    /// UL/DL spectrum correlation ECDF over the configured band gaps.
    Ecdf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plot: bool,
    },
}

fn resolve(common: &Common, forced: Option<Preset>) -> Result<(ExperimentConfig, PathBuf)> {
    let preset = match (&common.preset, forced) {
        (_, Some(p)) => Some(p),
        (Some(name), None) => Some(name.parse::<Preset>()?),
        (None, None) => None,
    };
    let mut config = match &common.config {
        Some(path) => load_config(path, preset).with_context(|| format!("loading {}", path.display()))?,
        None => parse_config("", preset)?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.to_string_lossy().into_owned();
    }
    config.validate()?;
    let out = PathBuf::from(&config.out_dir);
    Ok((config, out))
}

fn simulate(config: &ExperimentConfig, out: &Path, plot: bool) -> Result<()> {
    let run = run_preset(config, out)?;
    for csv in &run.csv_files {
        println!("{}", csv.display());
        if plot {
            println!("{}", emit_plot_script(csv, config.preset)?.display());
        }
    }
    println!("{}", run.manifest.display());
    Ok(())
}

fn spectrum(config: &ExperimentConfig, out: &Path, save_channel: Option<&Path>) -> Result<()> {
    let scenario = config.scenario();
    let pair = draw_channel_pair(&scenario, &mut stream(config.seed, &[0, 0, tag::CHANNEL]))?;
    let cb = build_fd_codebook(&scenario.array, config.q, config.u, Link::Ul, &scenario.sector)?;
    let loading = config.capon_loading.unwrap_or_else(|| default_loading(&pair.h_ul));
    let power = capon_spectrum(&pair.h_ul, &cb, loading)?;
    fs::create_dir_all(out)?;
    let path = out.join("spectrum.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    power.write_csv(&mut w)?;
    w.flush()?;
    println!("{}", path.display());
    if let Some(p) = save_channel {
        fs::write(p, serde_json::to_string(&pair)?)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn estimate(config: &ExperimentConfig, out: &Path, channel: &Path) -> Result<()> {
    let text = fs::read_to_string(channel).with_context(|| format!("reading {}", channel.display()))?;
    let pair: ChannelPair = serde_json::from_str(&text).context("parsing the stored channel")?;
    let array = config.array();
    if pair.h_ul.nrows() != array.n_t() {
        anyhow::bail!("stored channel has {} antennas but the config describes {}", pair.h_ul.nrows(), array.n_t());
    }
    let cb = build_fd_codebook(&array, config.q, config.u, Link::Ul, &config.scenario().sector)?;
    let report = run_dsce(&pair.h_ul, Some(&pair.h_dl), &cb, &config.dsce())?;
    fs::create_dir_all(out)?;
    let json = out.join("dsce_report.json");
    fs::write(&json, report.to_json()?)?;
    let csv = out.join("dsce_selection.csv");
    let mut w = BufWriter::new(File::create(&csv)?);
    report.write_selection_csv(&mut w)?;
    w.flush()?;
    if let Some(m) = report.metrics {
        println!(
            "elevation {:.2} deg; cosine H1 {:.4}, H2 {:.4}; relative MSE H1 {:.4}, H2 {:.4}",
            report.phi_hat, m.cosine_h1, m.cosine_h2, m.mse_h1, m.mse_h2
        );
    }
    println!("{}\n{}", json.display(), csv.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate { common, plot } => {
            let (config, out) = resolve(common, None)?;
            simulate(&config, &out, *plot)
        }
        Command::Spectrum { common, save_channel } => {
            let (config, out) = resolve(common, None)?;
            spectrum(&config, &out, save_channel.as_deref())
        }
        Command::Estimate { common, channel } => {
            let (config, out) = resolve(common, None)?;
            estimate(&config, &out, channel)
        }
        Command::Ecdf { common, plot } => {
            let (config, out) = resolve(common, Some(Preset::Fig2))?;
            simulate(&config, &out, *plot)
        }
    }
}
