//! `stegscrub` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod args;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{
    required, BaselineArgs, Cli, Command, ConfigFile, EdgesArgs, EmbedArgs, EvaluateArgs, ExtractArgs,
    GenCorpusArgs, PurifyArgs, SweepArgs, TrainArgs,
};
use stegscrub::analyzer::{self, load_weights, save_weights, Analyzer, AnalyzerConfig};
use stegscrub::baselines::BaselineConfig;
use stegscrub::eraser::{self, EraserConfig, EraserMode, PixelModel};
use stegscrub::sweep::{self, RunReport, SweepConfig, SweepOptions, DEFAULT_WINDOW};
use stegscrub::{load_image, metrics, prewitt, save_image, Error, ErrorKind, Image, LsbConfig, Result};

const DEFAULT_EPSILON: u32 = 4;
const DEFAULT_CORPUS_COUNT: usize = 50;
const DEFAULT_CORPUS_SIDE: usize = 32;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(|e| match e {
            Error::NotFound(p) => Error::Config(format!("config file {} not found", p.display())),
            other => other,
        })?,
        None => ConfigFile::default(),
    };
    match file.apply(cli.command) {
        Command::Train(a) => train(a),
        Command::Embed(a) => embed(a),
        Command::Extract(a) => extract(a),
        Command::Edges(a) => edges(a),
        Command::Purify(a) => purify(a),
        Command::Baseline(a) => baseline(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Ablate(a) => ablate(a),
        Command::Time(a) => time(a),
        Command::GenCorpus(a) => gen_corpus(a),
    }
}

fn lsb_config(k: Option<u8>) -> Result<LsbConfig> {
    match k {
        Some(k) => LsbConfig::new(k).map_err(|e| Error::Config(e.to_string())),
        None => Ok(LsbConfig::default()),
    }
}

fn load_analyzer(path: &Path) -> Result<Analyzer> {
    Analyzer::new(load_weights(path)?)
}

/// Every `*.pgm` directly inside `dir`, in name order.
fn load_image_dir(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidImage(format!("no .pgm images in {}", dir.display())));
    }
    paths.iter().map(load_image).collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let data_dir = required(a.data, "data")?;
    let out = required(a.out, "out")?;
    let images = load_image_dir(&data_dir)?;
    let (h, w) = images[0].dims();
    if h != w {
        return Err(Error::InvalidImage(format!("training images must be square, got {w}x{h}")));
    }
    let d = AnalyzerConfig::default();
    let cfg = AnalyzerConfig {
        side: h,
        components: a.components.unwrap_or(d.components),
        hidden: a.hidden.unwrap_or(d.hidden),
        residual_blocks: a.residual_blocks.unwrap_or(d.residual_blocks),
        edge_hidden: a.edge_hidden.unwrap_or(d.edge_hidden),
        kernel: a.kernel.unwrap_or(d.kernel),
        lambda_image: a.lambda_image.unwrap_or(d.lambda_image),
        lambda_edge: a.lambda_edge.unwrap_or(d.lambda_edge),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        epochs: a.epochs.unwrap_or(d.epochs),
        seed: a.seed.unwrap_or(d.seed),
        optimizer: a.optimizer.unwrap_or(d.optimizer),
    };
    let initial = a.init.as_deref().map(load_weights).transpose()?;
    let outcome = analyzer::train_with(&images, &cfg, initial, |log| {
        eprintln!(
            "epoch {:>3}: L = {:.4} (L_I {:.4}, L_E {:.6})",
            log.epoch, log.report.total, log.report.image, log.report.edge
        );
    })?;
    save_weights(&outcome.weights, &out)?;
    if let Some(log) = a.log {
        let file = fs::File::create(&log).map_err(|e| Error::io(&log, e))?;
        analyzer::write_training_log(&outcome.epochs, file)?;
    }
    eprintln!("wrote {} ({} parameters)", out.display(), outcome.weights.parameter_count());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let cover = load_image(required(a.cover, "cover")?)?;
    let secret = load_image(required(a.secret, "secret")?)?;
    let stego = stegscrub::lsb::embed(&cover, &secret, lsb_config(a.k)?)?;
    save_image(&stego, required(a.out, "out")?)
}

fn extract(a: ExtractArgs) -> Result<()> {
    let stego = load_image(required(a.stego, "stego")?)?;
    save_image(&stegscrub::lsb::extract(&stego, lsb_config(a.k)?), required(a.out, "out")?)
}

fn edges(a: EdgesArgs) -> Result<()> {
    let img = load_image(required(a.input, "input")?)?;
    let out = required(a.out, "out")?;
    let map = match a.weights {
        Some(w) => load_analyzer(&w)?.predicted_edges(&img)?,
        None => prewitt(&img),
    };
    save_image(&map.to_image(), out)
}

fn purify(a: PurifyArgs) -> Result<()> {
    let stego = load_image(required(a.input, "input")?)?;
    let model = load_analyzer(&required(a.weights, "weights")?)?;
    let out = required(a.out, "out")?;
    let mut cfg = EraserConfig::new(a.epsilon.unwrap_or(DEFAULT_EPSILON), a.mode.unwrap_or(EraserMode::Approx))?;
    cfg.edge_guided = !a.no_edge.unwrap_or(false);
    if let Some(path) = a.dist_out {
        model.pixel_distribution(&stego)?.save(path)?;
    }
    let result = eraser::purify(&stego, &model, &cfg)?;
    let (lo, hi) = result.e_norm_bounds();
    eprintln!(
        "max change {} (budget {}), e_norm in [{lo}, {hi}]",
        result.max_abs_change(&stego),
        cfg.epsilon_max()
    );
    save_image(&result.image, out)
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let img = load_image(required(a.input, "input")?)?;
    let cfg = BaselineConfig {
        method: required(a.method, "method")?,
        epsilon: a.epsilon.unwrap_or(DEFAULT_EPSILON),
        window: a.window.unwrap_or(DEFAULT_WINDOW),
        seed: a.seed.unwrap_or(0),
    };
    save_image(&cfg.apply(&img)?, required(a.out, "out")?)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let cover = load_image(required(a.cover, "cover")?)?;
    let stego = load_image(required(a.stego, "stego")?)?;
    let purified = load_image(required(a.purified, "purified")?)?;
    let secret = load_image(required(a.secret, "secret")?)?;
    let d_o = load_image(required(a.decoded_original, "decoded-original")?)?;
    let d_d = load_image(required(a.decoded_destroyed, "decoded-destroyed")?)?;
    let row = [
        metrics::psnr(&cover, &purified)?,
        metrics::psnr(&stego, &purified)?,
        metrics::ssim(&cover, &purified)?,
        metrics::ssim(&stego, &purified)?,
        metrics::decoded_rate(&secret, &d_d)?,
        metrics::destruction_rate(&d_o, &d_d)?,
    ];
    let mut out = std::io::stdout().lock();
    let mut write = || -> std::io::Result<()> {
        if !a.no_header.unwrap_or(false) {
            writeln!(
                out,
                "psnr_cover_purified,psnr_stego_purified,ssim_cover_purified,ssim_stego_purified,decoded_rate,destruction_rate"
            )?;
        }
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))
    };
    write().map_err(|e| Error::io("stdout", e))
}

fn sweep_config(a: SweepArgs) -> Result<SweepConfig> {
    let defaults = SweepOptions::default();
    Ok(SweepConfig {
        options: SweepOptions {
            epsilons: a.epsilons.unwrap_or(defaults.epsilons),
            methods: a.methods.unwrap_or(defaults.methods),
            lsb: lsb_config(a.k)?,
            window: a.window.unwrap_or(defaults.window),
            seed: a.seed.unwrap_or(defaults.seed),
        },
        dataset: required(a.dataset, "dataset")?,
        weights: a.weights,
        output: required(a.out, "out")?,
    })
}

fn print_summary(report: &RunReport) {
    println!(
        "{:<20} {:>4} {:>4} {:>10} {:>10} {:>8} {:>8} {:>8}",
        "method", "eps", "ok", "psnr_cov", "psnr_stg", "ssim_stg", "DC", "DT"
    );
    for a in &report.aggregates {
        println!(
            "{:<20} {:>4} {:>4} {:>10.3} {:>10.3} {:>8.4} {:>8.4} {:>8.4}",
            a.method.name(),
            a.epsilon,
            a.ok,
            a.psnr_cover_purified.mean,
            a.psnr_stego_purified.mean,
            a.ssim_stego_purified.mean,
            a.decoded_rate.mean,
            a.destruction_rate.mean
        );
    }
    let failures = report.failures().count();
    if failures > 0 {
        eprintln!("{failures} cells failed; see the status column");
    }
    for v in report.budget_violations() {
        eprintln!("budget violation: {v:?}");
    }
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let cfg = sweep_config(a)?;
    let report = sweep::run_sweep(&cfg)?;
    print_summary(&report);
    Ok(())
}

fn ablate(a: SweepArgs) -> Result<()> {
    let cfg = sweep_config(a)?;
    let report = sweep::run_ablation_no_edge(&cfg)?;
    print_summary(&report);
    Ok(())
}

fn time(a: SweepArgs) -> Result<()> {
    let cfg = sweep_config(a)?;
    let report = sweep::time_modes(&cfg)?;
    for r in &report.rows {
        println!(
            "{} eps {}: approx {:.2} ms, exact {:.1} ms, {} pixels differ (max {}, mean {:.3})",
            r.image, r.epsilon, r.approx_ms, r.exact_ms, r.differing_pixels, r.max_abs_difference, r.mean_abs_difference
        );
    }
    println!(
        "median approx {:.2} ms, median exact {:.1} ms",
        report.median_approx_ms, report.median_exact_ms
    );
    Ok(())
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let out = required(a.out, "out")?;
    let side = a.side.unwrap_or(DEFAULT_CORPUS_SIDE);
    if side < 3 {
        return Err(Error::Config(format!("side {side} is too small")));
    }
    let pairs = sweep::synthetic_pairs(
        a.count.unwrap_or(DEFAULT_CORPUS_COUNT),
        side,
        a.seed.unwrap_or(0),
        a.edge_rich.unwrap_or(false),
    );
    sweep::write_dataset(&out, &pairs)?;
    eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
    Ok(())
}
