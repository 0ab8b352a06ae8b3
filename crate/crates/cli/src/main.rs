use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use smlct::config::RunConfig;
use smlct::pipeline;

#[derive(Parser)]
#[command(
    name = "smlct",
    version,
    about = "Geometric self-calibration for multi-segment linear-scan CT"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project the configured phantom and write one sinogram per segment.
    Simulate(Common),
    /// Estimate the geometric errors, then write corrected and uncorrected
    /// reconstructions.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Sinograms written by `simulate`; simulated on the fly when omitted.
        #[arg(long)]
        sinograms: Option<PathBuf>,
    },
    /// Inject each error term in turn and tabulate RMSE and SSIM.
    Sweep(Common),
    /// Estimate the detector-centre offset of a rotated half scan.
    RctCor(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Expected number of segments; rejected if the geometry's layout differs.
    #[arg(long)]
    segments: Option<usize>,
    /// Disable photon noise even if the config enables it.
    #[arg(long)]
    no_noise: bool,
    /// Bow-tie half-angle in degrees.
    #[arg(long)]
    mask_alpha_deg: Option<f64>,
    /// Rows zeroed at the top and bottom of the bow-tie mask.
    #[arg(long)]
    mask_u0: Option<usize>,
}

impl Common {
    /// The config with command-line overrides applied, plus the directory
    /// relative paths in it resolve against.
    fn resolve(&self, rct: bool) -> Result<(RunConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(path) => {
                let cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
                (cfg, path.parent().unwrap_or(Path::new(".")).to_path_buf())
            }
            None => (RunConfig::default(), PathBuf::from(".")),
        };
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.noise.seed = seed;
        }
        if self.segments.is_some() {
            cfg.geometry.t_segments = self.segments;
        }
        if self.no_noise {
            cfg.noise.enabled = false;
        }
        if rct {
            cfg.rct.alpha_band_deg = self.mask_alpha_deg.or(cfg.rct.alpha_band_deg);
            cfg.rct.u0 = self.mask_u0.or(cfg.rct.u0);
        } else {
            cfg.registration.alpha_band_deg = self.mask_alpha_deg.or(cfg.registration.alpha_band_deg);
            cfg.registration.u0 = self.mask_u0.or(cfg.registration.u0);
        }
        cfg.validate()?;
        Ok((cfg, base))
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(c) => {
            let (cfg, base) = c.resolve(false)?;
            let sim = pipeline::cmd_simulate(&cfg, &base, &cfg.output)?;
            info!("wrote {} sinograms to {}", sim.sinograms.len(), cfg.output.display());
        }
        Command::Calibrate { common, sinograms } => {
            let (cfg, base) = common.resolve(false)?;
            let report = pipeline::cmd_calibrate(&cfg, &base, sinograms.as_deref(), &cfg.output)?;
            println!("{}", serde_json::to_string_pretty(&summary(&report))?);
        }
        Command::Sweep(c) => {
            let (cfg, base) = c.resolve(false)?;
            let rows = pipeline::cmd_sweep(&cfg, &base, &cfg.output)?;
            println!("{:<14}{:>8} {:<4}{:>12}{:>10}", "term", "value", "", "rmse", "ssim");
            for r in rows {
                println!(
                    "{:<14}{:>8} {:<4}{:>12.4e}{:>10.4}",
                    r.term, r.value, r.unit, r.rmse, r.ssim
                );
            }
        }
        Command::RctCor(c) => {
            let (cfg, base) = c.resolve(true)?;
            let report = pipeline::cmd_rct_cor(&cfg, &base, &cfg.output)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn summary(report: &pipeline::CalibrationReport) -> serde_json::Value {
    let r = &report.result;
    serde_json::json!({
        "offsets": r.np_final,
        "dl_hat_mm": r.dl_hat,
        "ds_hat_mm": r.ds_hat,
        "flagged_pairs": r.flagged_pairs,
        "rmse": report.uncorrected.as_ref().zip(report.corrected.as_ref()).map(|(u, c)| (u.rmse, c.rmse)),
        "ssim": report.uncorrected.as_ref().zip(report.corrected.as_ref()).map(|(u, c)| (u.ssim, c.ssim)),
    })
}
