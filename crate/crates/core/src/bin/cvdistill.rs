use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cvdistill::channel::{ChannelPreset, DEFAULT_LEVELS, PRESET_NAMES};
use cvdistill::scenario::{ingest_and_distill, mc_validate, run_scenario, IngestConfig, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "cvdistill",
    version,
    about = "Heralded distillation of fluctuating-loss entanglement"
)]
struct Cli {
    /// Scenario (sweep, mc-validate) or ingest configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed; overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic threshold sweep, with a sampled cross-check when mc.enable is set.
    Sweep,
    /// Compare every closed-form quantity with sampled estimates.
    McValidate {
        /// Number of sampled records; overrides mc.samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Concatenate record files by weight and distill them empirically.
    Ingest,
    /// List channel presets and their default levels.
    Presets {
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
    },
}

fn config_path(cli: &Cli) -> Result<&Path> {
    match &cli.config {
        Some(p) => Ok(p),
        None => bail!("--config is required for this command"),
    }
}

fn load_scenario(cli: &Cli) -> Result<ScenarioConfig> {
    let path = config_path(cli)?;
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    Ok(cfg)
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:>11.4e}")
    } else {
        format!("{:>11}", "nan")
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Sweep => {
            let cfg = load_scenario(&cli)?;
            let out = cfg.output.resolve_dir(cli.out.as_deref())?;
            let summary = run_scenario(&cfg, &out)?;
            println!(
                "{:>8} {:>11} {:>11} {:>11} {:>11}",
                "x_th", "p_success", "ln", "ln_err", "lower"
            );
            for l in &summary.lines {
                println!(
                    "{:>8.3} {} {} {} {}",
                    l.x_th,
                    fmt(l.p_success),
                    fmt(l.ln_gaussian),
                    fmt(l.ln_err),
                    fmt(l.lower_bound)
                );
            }
            println!(
                "upper bound before distillation: {:.6}",
                summary.rows[0].upper_bound_before
            );
            println!("wrote {} files to {}", summary.artifacts.len(), out.display());
        }
        Command::McValidate { samples } => {
            let mut cfg = load_scenario(&cli)?;
            if let Some(n) = samples {
                cfg.mc.samples = *n;
            }
            let out = cfg.output.resolve_dir(cli.out.as_deref())?;
            let rows = mc_validate(&cfg, &out)?;
            let within = rows.iter().filter(|r| r.within(3.0)).count();
            for r in rows.iter().filter(|r| !r.within(3.0)) {
                println!(
                    "x_th={} {}: analytic {:.6e} sampled {:.6e} z={:.2}",
                    r.threshold,
                    r.quantity.label(),
                    r.analytic,
                    r.sampled,
                    r.z()
                );
            }
            println!("{within}/{} comparisons within 3 SE", rows.len());
            if rows.is_empty() || (within as f64) < 0.95 * rows.len() as f64 {
                bail!("fewer than 95% of comparisons agree within 3 SE");
            }
        }
        Command::Ingest => {
            let path = config_path(&cli)?;
            let mut cfg = IngestConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out = cfg.output.resolve_dir(cli.out.as_deref())?;
            let summary = ingest_and_distill(&cfg, &out)?;
            println!("{} records concatenated", summary.data.records.len());
            println!(
                "{:>8} {:>9} {:>11} {:>11} {:>11}",
                "x_th", "accepted", "p_success", "ln", "ln_err"
            );
            for r in &summary.rows {
                println!(
                    "{:>8.3} {:>9} {} {} {}",
                    r.threshold,
                    r.accepted,
                    fmt(r.p_success),
                    fmt(r.ln_gaussian),
                    fmt(r.ln_err)
                );
            }
            println!("wrote {} files to {}", summary.artifacts.len(), out.display());
        }
        Command::Presets { levels } => {
            for name in PRESET_NAMES {
                let preset = ChannelPreset::named(name, *levels)?;
                let channel = preset.build()?;
                println!(
                    "{name}: {} levels, <eta> = {:.4}, <sqrt eta> = {:.4}",
                    channel.len(),
                    channel.mean_eta(),
                    channel.mean_sqrt_eta()
                );
                println!("  {}", toml::to_string(&preset)?.trim().replace('\n', "\n  "));
            }
        }
    }
    Ok(())
}
