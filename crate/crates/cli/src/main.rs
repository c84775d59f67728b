//! `ghicast` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ghicast::ingest::{scan_image_directory, split, ImageRecord};
use ghicast::pipeline::{
    evaluate, forecast_latest, load_bundle, load_bundle_strict, load_dataset, save_bundle, train,
    tune, PipelineConfig,
};
use ghicast::synth::{generate, SynthConfig};
use ghicast::{GhiError, Result};

#[derive(Parser)]
#[command(name = "ghicast", version, about = "Sky-image GHI nowcasting and forecasting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Directory of sky images.
    #[arg(long, global = true)]
    images: Option<PathBuf>,
    /// GHI measurement CSV.
    #[arg(long, global = true)]
    ghi: Option<PathBuf>,
    /// Saved model bundle directory.
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Horizons as steps or durations, e.g. `1h,2h` or `6,12`.
    #[arg(long, global = true)]
    horizons: Option<String>,
    /// Truncated-SVD rank.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Look-back window length in minutes.
    #[arg(long = "lookback-min", global = true)]
    lookback_min: Option<i64>,
    /// knn or rf.
    #[arg(long, global = true)]
    regressor: Option<String>,
    /// chrono, random, or a full policy such as `chrono:0.8` or `years:2016`.
    #[arg(long, global = true)]
    split: Option<String>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and print alignment counts.
    Check,
    /// Train on the training split and save a bundle to --out.
    Train,
    /// Evaluate a bundle on the held-out split and write reports to --out.
    Evaluate {
        /// Fail if the bundle's configuration differs from the resolved one.
        #[arg(long)]
        strict: bool,
    },
    /// Sweep SVD rank and look-back depth; writes tuning.csv to --out.
    Tune {
        /// Ranks to try.
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
        grid_k: Vec<usize>,
        /// Look-back depths to try, in frames.
        #[arg(long, value_delimiter = ',', default_value = "3,6,12")]
        grid_m: Vec<usize>,
    },
    /// Predict every horizon from the most recent frames in --images.
    Forecast {
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dataset into --out.
    Synth {
        #[arg(long, default_value_t = 3)]
        days: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 64)]
        image_side: u32,
        #[arg(long, default_value_t = 10)]
        cadence_min: i64,
        #[arg(long, default_value_t = 0.9)]
        cloud_correlation: f64,
        /// Omit the moving sun marker.
        #[arg(long)]
        no_sun_marker: bool,
    },
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| GhiError::Config(format!("--{flag} is required for this command")))
}

fn resolve_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for assignment in &g.overrides {
        cfg.apply_override(assignment)?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(h) = &g.horizons {
        cfg.set("horizons", h)?;
    }
    if let Some(k) = g.k {
        cfg.k = k;
    }
    if let Some(minutes) = g.lookback_min {
        cfg.set("lookback_min", &minutes.to_string())?;
    }
    if let Some(r) = &g.regressor {
        cfg.set("regressor", r)?;
    }
    if let Some(s) = &g.split {
        cfg.set("split", s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| GhiError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| GhiError::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Check => {
            let cfg = resolve_config(g)?;
            let data = load_dataset(require(&g.images, "images")?, require(&g.ghi, "ghi")?, &cfg)?;
            let s = &data.summary;
            println!("images found        {}", s.images_found);
            println!("files skipped       {}", s.files_skipped);
            println!("duplicate images    {}", s.duplicate_images);
            println!("ghi readings        {}", s.readings);
            println!("negative clamped    {}", s.clamped_readings);
            println!("aligned pairs       {}", s.aligned);
            println!("dropped unmatched   {}", s.dropped_unmatched);
            println!("removed at night    {}", s.removed_night);
            println!("usable samples      {}", s.samples);
            println!("gaps > 1.5·cadence  {}", s.gaps);
            if s.aligned == 0 {
                return Err(GhiError::EmptyInput("no image aligned with a GHI reading".into()));
            }
        }
        Command::Train => {
            let cfg = resolve_config(g)?;
            let out = require(&g.out, "out")?;
            let data = load_dataset(require(&g.images, "images")?, require(&g.ghi, "ghi")?, &cfg)?;
            let (train_set, test_set) = split(&data.samples, &cfg.split_policy()?)?;
            log::info!(
                "split {}: {} train, {} test",
                cfg.split,
                train_set.len(),
                test_set.len()
            );
            let bundle = train(&cfg, &train_set)?;
            save_bundle(&bundle, out)?;
            println!(
                "trained {} horizons on {} samples; bundle written to {}",
                bundle.horizons.len() + 1,
                bundle.meta.train_samples,
                out.display()
            );
        }
        Command::Evaluate { strict } => {
            let dir = require(&g.bundle, "bundle")?;
            let bundle = if *strict {
                load_bundle_strict(dir, &resolve_config(g)?)?
            } else {
                load_bundle(dir)?
            };
            let out = require(&g.out, "out")?;
            let cfg = &bundle.config;
            let data = load_dataset(require(&g.images, "images")?, require(&g.ghi, "ghi")?, cfg)?;
            let (_, test_set) = split(&data.samples, &cfg.split_policy()?)?;
            let evaluation = evaluate(&bundle, &test_set)?;
            evaluation.write(out)?;
            for (i, r) in evaluation.reports.iter().enumerate() {
                let baseline = i
                    .checked_sub(1)
                    .and_then(|j| evaluation.baselines.get(j))
                    .map(|b| format!("  persistence {:.2}%", b.nmape_pct))
                    .unwrap_or_default();
                println!(
                    "{:<8} nMAPE {:>6.2}%  RMSE {:>7.1} W/m2  n={}{baseline}",
                    r.horizon, r.nmape_pct, r.rmse_wm2, r.n_samples
                );
            }
        }
        Command::Tune { grid_k, grid_m } => {
            let cfg = resolve_config(g)?;
            let out = require(&g.out, "out")?;
            let data = load_dataset(require(&g.images, "images")?, require(&g.ghi, "ghi")?, &cfg)?;
            let (train_set, _) = split(&data.samples, &cfg.split_policy()?)?;
            let report = tune(&cfg, grid_k, grid_m, &train_set)?;
            create_dir(out)?;
            write_file(&out.join("tuning.csv"), &report.to_csv())?;
            write_file(
                &out.join("tuning.json"),
                &(serde_json::to_string_pretty(&report).expect("report serialises") + "\n"),
            )?;
            match report.argmin {
                Some((k, minutes)) => println!("best k={k} lookback={minutes}min"),
                None => println!("no grid cell could be scored"),
            }
        }
        Command::Forecast { json } => {
            let bundle = load_bundle(require(&g.bundle, "bundle")?)?;
            let images = require(&g.images, "images")?;
            let records: Vec<ImageRecord> =
                match scan_image_directory(images, &bundle.config.pattern()?) {
                    Ok(scan) => scan.records,
                    Err(GhiError::EmptyInput(_)) => Vec::new(),
                    Err(e) => return Err(e),
                };
            let forecast = forecast_latest(&bundle, &records)?;
            let json_text =
                serde_json::to_string_pretty(&forecast).expect("forecast serialises") + "\n";
            if *json {
                print!("{json_text}");
            } else {
                print!("{}", forecast.to_text());
            }
            if let Some(out) = &g.out {
                create_dir(out)?;
                write_file(&out.join("forecast.json"), &json_text)?;
            }
        }
        Command::Synth {
            days,
            noise_sd,
            image_side,
            cadence_min,
            cloud_correlation,
            no_sun_marker,
        } => {
            let out = require(&g.out, "out")?;
            let mut cfg = SynthConfig {
                days: *days,
                noise_sd: *noise_sd,
                image_side: *image_side,
                cadence_min: *cadence_min,
                cloud_correlation: *cloud_correlation,
                sun_marker: !no_sun_marker,
                ..SynthConfig::default()
            };
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            create_dir(out)?;
            let output = generate(&cfg, out)?;
            println!(
                "wrote {} frames to {}",
                output.frames.len(),
                output.images_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
