//! Benchmark harness: dataset sweeps over ε and methods, the edge-guidance
//! ablation and the exact-versus-approximate timing comparison.
//!
//! A dataset is a directory of `<name>.cover.pgm` / `<name>.secret.pgm`
//! pairs. Each pair is embedded with LSB, attacked by every configured
//! method at every ε, decoded and scored. Cells are independent and run
//! concurrently; each draws randomness from a stream derived from
//! `(seed, image, method, ε)`, so the report does not depend on scheduling.
//!
//! Results CSV columns, one row per `(image, method, ε)` in that order:
//!
//! `image,method,epsilon,status,psnr_cover_purified,psnr_stego_purified,`
//! `ssim_cover_purified,ssim_stego_purified,decoded_rate,destruction_rate,`
//! `max_abs_change,e_norm_min,e_norm_max`
//!
//! `status` is `ok` or the error that stopped the cell, in which case the
//! metric fields are empty. The `e_norm_*` fields are empty for baselines.
//! Wall-clock times go to a separate timing CSV so that the results file is
//! reproducible byte for byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analyzer::{load_weights, Analyzer};
use crate::baselines::{gaussian_noise, median_filter, wiener_restore, BaselineMethod};
use crate::eraser::{self, EraserConfig, EraserMode, PixelModel};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, Image};
use crate::lsb::{self, LsbConfig};
use crate::metrics;
use crate::synth::derive_seed;

pub const COVER_SUFFIX: &str = ".cover.pgm";
pub const SECRET_SUFFIX: &str = ".secret.pgm";
pub const DEFAULT_EPSILONS: [u32; 4] = [1, 2, 4, 8];
pub const DEFAULT_WINDOW: usize = 3;

/// An attack evaluated by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Eraser { mode: EraserMode, edge_guided: bool },
    Baseline(BaselineMethod),
}

impl Method {
    pub const OURS_APPROX: Method = Method::Eraser {
        mode: EraserMode::Approx,
        edge_guided: true,
    };
    pub const OURS_EXACT: Method = Method::Eraser {
        mode: EraserMode::Exact,
        edge_guided: true,
    };
    pub const GAUSSIAN: Method = Method::Baseline(BaselineMethod::Gaussian);
    pub const MEDIAN: Method = Method::Baseline(BaselineMethod::Median);
    pub const WIENER: Method = Method::Baseline(BaselineMethod::Wiener);

    pub fn name(&self) -> &'static str {
        match self {
            Method::Eraser { mode: EraserMode::Approx, edge_guided: true } => "ours-approx",
            Method::Eraser { mode: EraserMode::Exact, edge_guided: true } => "ours-exact",
            Method::Eraser { mode: EraserMode::Approx, edge_guided: false } => "ours-approx-noedge",
            Method::Eraser { mode: EraserMode::Exact, edge_guided: false } => "ours-exact-noedge",
            Method::Baseline(BaselineMethod::Gaussian) => "gaussian",
            Method::Baseline(BaselineMethod::Median) => "median",
            Method::Baseline(BaselineMethod::Wiener) => "wiener",
        }
    }

    pub fn is_eraser(&self) -> bool {
        matches!(self, Method::Eraser { .. })
    }

    /// Stable per-method stream id for seed derivation.
    fn stream(&self) -> u64 {
        match self {
            Method::Eraser { mode: EraserMode::Approx, edge_guided: true } => 1,
            Method::Eraser { mode: EraserMode::Exact, edge_guided: true } => 2,
            Method::Eraser { mode: EraserMode::Approx, edge_guided: false } => 3,
            Method::Eraser { mode: EraserMode::Exact, edge_guided: false } => 4,
            Method::Baseline(BaselineMethod::Gaussian) => 5,
            Method::Baseline(BaselineMethod::Median) => 6,
            Method::Baseline(BaselineMethod::Wiener) => 7,
        }
    }

    /// The same eraser with edge guidance disabled; `None` for baselines.
    pub fn without_edges(&self) -> Option<Method> {
        match *self {
            Method::Eraser { mode, .. } => Some(Method::Eraser {
                mode,
                edge_guided: false,
            }),
            Method::Baseline(_) => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Method::OURS_APPROX,
            Method::OURS_EXACT,
            Method::OURS_APPROX.without_edges().unwrap(),
            Method::OURS_EXACT.without_edges().unwrap(),
            Method::GAUSSIAN,
            Method::MEDIAN,
            Method::WIENER,
        ];
        all.into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub cover: Image,
    pub secret: Image,
}

/// Reads every `<name>.cover.pgm` with its matching secret, sorted by name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<ImagePair>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str().and_then(|f| f.strip_suffix(COVER_SUFFIX)) {
            names.push(name.to_string());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidImage(format!(
            "no *{COVER_SUFFIX} files in {}",
            dir.display()
        )));
    }
    names
        .into_iter()
        .map(|name| {
            let cover = load_image(dir.join(format!("{name}{COVER_SUFFIX}")))?;
            let secret = load_image(dir.join(format!("{name}{SECRET_SUFFIX}")))?;
            Ok(ImagePair { name, cover, secret })
        })
        .collect()
}

pub fn write_dataset(dir: impl AsRef<Path>, pairs: &[ImagePair]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for p in pairs {
        save_image(&p.cover, dir.join(format!("{}{COVER_SUFFIX}", p.name)))?;
        save_image(&p.secret, dir.join(format!("{}{SECRET_SUFFIX}", p.name)))?;
    }
    Ok(())
}

/// Synthetic pairs: natural-looking covers and unrelated natural secrets.
pub fn synthetic_pairs(count: usize, side: usize, seed: u64, edge_rich: bool) -> Vec<ImagePair> {
    let scene = if edge_rich {
        crate::synth::edge_rich
    } else {
        crate::synth::natural
    };
    (0..count as u64)
        .map(|i| ImagePair {
            name: format!("img{i:04}"),
            cover: scene(side, derive_seed(seed, 0xC0, i)),
            secret: crate::synth::natural(side, derive_seed(seed, 0x5E, i)),
        })
        .collect()
}

/// Sweep parameters independent of where data comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub epsilons: Vec<u32>,
    pub methods: Vec<Method>,
    pub lsb: LsbConfig,
    /// Window side for median and Wiener.
    pub window: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            epsilons: DEFAULT_EPSILONS.to_vec(),
            methods: vec![
                Method::OURS_APPROX,
                Method::GAUSSIAN,
                Method::MEDIAN,
                Method::WIENER,
            ],
            lsb: LsbConfig::default(),
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

impl SweepOptions {
    /// ε = 0 is accepted only when no eraser method is configured (a
    /// zero-σ Gaussian is the identity attack).
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("no epsilon values configured".into()));
        }
        let has_eraser = self.methods.iter().any(Method::is_eraser);
        for &e in &self.epsilons {
            if e > 255 || (e == 0 && has_eraser) {
                return Err(Error::Config(format!(
                    "epsilon {e} is out of range for the configured methods"
                )));
            }
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods must be distinct".into()));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window {} must be odd and at least 3",
                self.window
            )));
        }
        Ok(())
    }

    pub fn needs_model(&self) -> bool {
        self.methods.iter().any(Method::is_eraser)
    }
}

/// A full sweep: options plus the dataset, weights and output locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub options: SweepOptions,
    pub dataset: PathBuf,
    /// Required when an eraser method is configured.
    pub weights: Option<PathBuf>,
    /// Results CSV; the summary and timing files are written next to it.
    pub output: PathBuf,
}

impl SweepConfig {
    pub fn summary_path(&self) -> PathBuf {
        sibling(&self.output, "summary")
    }

    pub fn timing_path(&self) -> PathBuf {
        sibling(&self.output, "timing")
    }

    fn load(&self) -> Result<(Vec<ImagePair>, Option<Analyzer>)> {
        self.options.validate()?;
        let pairs = load_dataset(&self.dataset)?;
        let model = if self.options.needs_model() {
            let path = self.weights.as_ref().ok_or_else(|| {
                Error::Config("eraser methods need a weights file".into())
            })?;
            Some(Analyzer::new(load_weights(path)?)?)
        } else {
            None
        };
        Ok((pairs, model))
    }
}

/// `dir/stem.csv` → `dir/stem.<tag>.csv`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMetrics {
    pub psnr_cover_purified: f64,
    pub psnr_stego_purified: f64,
    pub ssim_cover_purified: f64,
    pub ssim_stego_purified: f64,
    pub decoded_rate: f64,
    pub destruction_rate: f64,
    pub max_abs_change: u32,
    /// Smallest and largest `e_norm` used; eraser methods only.
    pub e_norm: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub image: String,
    pub method: Method,
    pub epsilon: u32,
    pub outcome: std::result::Result<CellMetrics, String>,
    pub wall_time_ms: f64,
}

impl CellRecord {
    /// Budget breaches: change beyond `2ε`, `e_norm` outside `[ε, 2ε]`, or
    /// an unguided `e_norm` other than `ε`.
    pub fn budget_violation(&self) -> Option<String> {
        let Method::Eraser { edge_guided, .. } = self.method else {
            return None;
        };
        let m = self.outcome.as_ref().ok()?;
        let eps = self.epsilon;
        let (lo, hi) = m.e_norm?;
        if m.max_abs_change > 2 * eps {
            return Some(format!("change {} exceeds {}", m.max_abs_change, 2 * eps));
        }
        if lo < eps || hi > 2 * eps {
            return Some(format!("e_norm range [{lo}, {hi}] outside [{eps}, {}]", 2 * eps));
        }
        if !edge_guided && (lo, hi) != (eps, eps) {
            return Some(format!("unguided e_norm range [{lo}, {hi}] is not {eps}"));
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Per-`(method, ε)` aggregates over the images whose cell succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub method: Method,
    pub epsilon: u32,
    pub ok: usize,
    pub failed: usize,
    pub psnr_cover_purified: MeanStd,
    pub psnr_stego_purified: MeanStd,
    pub ssim_cover_purified: MeanStd,
    pub ssim_stego_purified: MeanStd,
    pub decoded_rate: MeanStd,
    pub destruction_rate: MeanStd,
    pub median_wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Ordered by image, then method (configured order), then ε.
    pub records: Vec<CellRecord>,
    /// Ordered by method, then ε.
    pub aggregates: Vec<CellAggregate>,
}

impl RunReport {
    fn assemble(records: Vec<CellRecord>, methods: &[Method], epsilons: &[u32]) -> Self {
        let mut aggregates = Vec::new();
        for &method in methods {
            for &epsilon in epsilons {
                let cells: Vec<&CellRecord> = records
                    .iter()
                    .filter(|r| r.method == method && r.epsilon == epsilon)
                    .collect();
                let ok: Vec<&CellMetrics> = cells.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let stat = |f: fn(&CellMetrics) -> f64| MeanStd::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
                let times: Vec<f64> = cells.iter().map(|r| r.wall_time_ms).collect();
                aggregates.push(CellAggregate {
                    method,
                    epsilon,
                    ok: ok.len(),
                    failed: cells.len() - ok.len(),
                    psnr_cover_purified: stat(|m| m.psnr_cover_purified),
                    psnr_stego_purified: stat(|m| m.psnr_stego_purified),
                    ssim_cover_purified: stat(|m| m.ssim_cover_purified),
                    ssim_stego_purified: stat(|m| m.ssim_stego_purified),
                    decoded_rate: stat(|m| m.decoded_rate),
                    destruction_rate: stat(|m| m.destruction_rate),
                    median_wall_time_ms: median(&times),
                });
            }
        }
        Self {
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, method: Method, epsilon: u32) -> Option<&CellAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.epsilon == epsilon)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellRecord> {
        self.records.iter().filter(|r| r.outcome.is_err())
    }

    pub fn budget_violations(&self) -> Vec<(String, Method, u32, String)> {
        self.records
            .iter()
            .filter_map(|r| {
                r.budget_violation()
                    .map(|v| (r.image.clone(), r.method, r.epsilon, v))
            })
            .collect()
    }

    pub fn write_results_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "image",
            "method",
            "epsilon",
            "status",
            "psnr_cover_purified",
            "psnr_stego_purified",
            "ssim_cover_purified",
            "ssim_stego_purified",
            "decoded_rate",
            "destruction_rate",
            "max_abs_change",
            "e_norm_min",
            "e_norm_max",
        ])?;
        for r in &self.records {
            let mut row = vec![r.image.clone(), r.method.to_string(), r.epsilon.to_string()];
            match &r.outcome {
                Ok(m) => {
                    row.push("ok".into());
                    for v in [
                        m.psnr_cover_purified,
                        m.psnr_stego_purified,
                        m.ssim_cover_purified,
                        m.ssim_stego_purified,
                        m.decoded_rate,
                        m.destruction_rate,
                    ] {
                        row.push(v.to_string());
                    }
                    row.push(m.max_abs_change.to_string());
                    match m.e_norm {
                        Some((lo, hi)) => {
                            row.push(lo.to_string());
                            row.push(hi.to_string());
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                Err(e) => {
                    row.push(e.clone());
                    row.extend(std::iter::repeat_n(String::new(), 9));
                }
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("results csv", e))?;
        Ok(())
    }

    /// `method,epsilon,ok,failed` then `mean_*` / `std_*` per metric.
    pub fn write_summary_csv(&self, out: impl std::io::Write) -> Result<()> {
        let metrics = [
            "psnr_cover_purified",
            "psnr_stego_purified",
            "ssim_cover_purified",
            "ssim_stego_purified",
            "decoded_rate",
            "destruction_rate",
        ];
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_string(), "epsilon".into(), "ok".into(), "failed".into()];
        for m in metrics {
            header.push(format!("mean_{m}"));
            header.push(format!("std_{m}"));
        }
        w.write_record(&header)?;
        for a in &self.aggregates {
            let mut row = vec![
                a.method.to_string(),
                a.epsilon.to_string(),
                a.ok.to_string(),
                a.failed.to_string(),
            ];
            for s in [
                a.psnr_cover_purified,
                a.psnr_stego_purified,
                a.ssim_cover_purified,
                a.ssim_stego_purified,
                a.decoded_rate,
                a.destruction_rate,
            ] {
                row.push(s.mean.to_string());
                row.push(s.std.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("summary csv", e))?;
        Ok(())
    }

    /// `image,method,epsilon,wall_time_ms`.
    pub fn write_timing_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image", "method", "epsilon", "wall_time_ms"])?;
        for r in &self.records {
            w.write_record([
                r.image.clone(),
                r.method.to_string(),
                r.epsilon.to_string(),
                format!("{:.3}", r.wall_time_ms),
            ])?;
        }
        w.flush().map_err(|e| Error::io("timing csv", e))?;
        Ok(())
    }

    /// Writes the results, summary and timing CSVs for `cfg`.
    pub fn write_all(&self, cfg: &SweepConfig) -> Result<()> {
        let create = |p: &Path| fs::File::create(p).map_err(|e| Error::io(p, e));
        self.write_results_csv(create(&cfg.output)?)?;
        self.write_summary_csv(create(&cfg.summary_path())?)?;
        self.write_timing_csv(create(&cfg.timing_path())?)
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Seed of the random stream for one cell.
pub fn cell_seed(seed: u64, image: &str, method: Method, epsilon: u32) -> u64 {
    let image_id = crc32fast::hash(image.as_bytes()) as u64;
    derive_seed(seed, method.stream(), (image_id << 16) ^ epsilon as u64)
}

/// Applies one attack; eraser methods also return their `e_norm` bounds.
fn attack(
    stego: &Image,
    method: Method,
    epsilon: u32,
    seed: u64,
    window: usize,
    model: Option<&dyn PixelModel>,
) -> Result<(Image, Option<(u32, u32)>)> {
    match method {
        Method::Eraser { mode, edge_guided } => {
            let model = model.ok_or_else(|| Error::Config("eraser method without a model".into()))?;
            let mut cfg = EraserConfig::new(epsilon, mode)?;
            cfg.edge_guided = edge_guided;
            let out = eraser::purify(stego, model, &cfg)?;
            let bounds = out.e_norm_bounds();
            Ok((out.image, Some(bounds)))
        }
        Method::Baseline(BaselineMethod::Gaussian) => Ok((gaussian_noise(stego, epsilon, seed), None)),
        Method::Baseline(BaselineMethod::Median) => Ok((median_filter(stego, window)?, None)),
        Method::Baseline(BaselineMethod::Wiener) => Ok((wiener_restore(stego, window)?, None)),
    }
}

struct Prepared<'a> {
    pair: &'a ImagePair,
    stego: Image,
    decoded_original: Image,
}

fn evaluate_cell(
    p: &Prepared<'_>,
    method: Method,
    epsilon: u32,
    opts: &SweepOptions,
    model: Option<&dyn PixelModel>,
) -> Result<CellMetrics> {
    let seed = cell_seed(opts.seed, &p.pair.name, method, epsilon);
    let (purified, e_norm) = attack(&p.stego, method, epsilon, seed, opts.window, model)?;
    let decoded = lsb::extract(&purified, opts.lsb);
    let max_abs_change = purified
        .pixels()
        .iter()
        .zip(p.stego.pixels())
        .map(|(&a, &b)| a.abs_diff(b) as u32)
        .max()
        .unwrap_or(0);
    Ok(CellMetrics {
        psnr_cover_purified: metrics::psnr(&p.pair.cover, &purified)?,
        psnr_stego_purified: metrics::psnr(&p.stego, &purified)?,
        ssim_cover_purified: metrics::ssim(&p.pair.cover, &purified)?,
        ssim_stego_purified: metrics::ssim(&p.stego, &purified)?,
        decoded_rate: metrics::decoded_rate(&p.pair.secret, &decoded)?,
        destruction_rate: metrics::destruction_rate(&p.decoded_original, &decoded)?,
        max_abs_change,
        e_norm,
    })
}

/// Runs every `(image, method, ε)` cell over in-memory pairs. Failures are
/// recorded per cell; the sweep itself only fails on invalid options.
pub fn run_sweep_on(
    pairs: &[ImagePair],
    model: Option<&dyn PixelModel>,
    opts: &SweepOptions,
) -> Result<RunReport> {
    opts.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if opts.needs_model() && model.is_none() {
        return Err(Error::Config("eraser methods need a model".into()));
    }
    let prepared: Vec<std::result::Result<Prepared, String>> = pairs
        .iter()
        .map(|pair| {
            let stego = lsb::embed(&pair.cover, &pair.secret, opts.lsb).map_err(|e| e.to_string())?;
            let decoded_original = lsb::extract(&stego, opts.lsb);
            Ok(Prepared {
                pair,
                stego,
                decoded_original,
            })
        })
        .collect();
    let mut cells = Vec::with_capacity(pairs.len() * opts.methods.len() * opts.epsilons.len());
    for i in 0..pairs.len() {
        for &m in &opts.methods {
            for &e in &opts.epsilons {
                cells.push((i, m, e));
            }
        }
    }
    let records = crate::par::map(&cells, |&(i, method, epsilon)| {
        let start = Instant::now();
        let outcome = match &prepared[i] {
            Ok(p) => evaluate_cell(p, method, epsilon, opts, model).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        CellRecord {
            image: pairs[i].name.clone(),
            method,
            epsilon,
            outcome,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    });
    Ok(RunReport::assemble(records, &opts.methods, &opts.epsilons))
}

/// Loads the dataset and weights, runs the sweep and writes its CSVs.
pub fn run_sweep(cfg: &SweepConfig) -> Result<RunReport> {
    let (pairs, model) = cfg.load()?;
    let report = run_sweep_on(&pairs, model.as_ref().map(|m| m as &dyn PixelModel), &cfg.options)?;
    report.write_all(cfg)?;
    Ok(report)
}

/// Options for the edge-guidance ablation: every configured eraser method
/// followed by its unguided twin. Baselines are dropped.
pub fn ablation_options(opts: &SweepOptions) -> Result<SweepOptions> {
    let mut methods = Vec::new();
    for m in opts.methods.iter().filter(|m| m.is_eraser()) {
        let guided = match *m {
            Method::Eraser { mode, .. } => Method::Eraser {
                mode,
                edge_guided: true,
            },
            Method::Baseline(_) => unreachable!(),
        };
        for candidate in [guided, guided.without_edges().expect("eraser method")] {
            if !methods.contains(&candidate) {
                methods.push(candidate);
            }
        }
    }
    if methods.is_empty() {
        return Err(Error::Config("the ablation needs at least one eraser method".into()));
    }
    Ok(SweepOptions {
        methods,
        ..opts.clone()
    })
}

pub fn run_ablation_no_edge_on(
    pairs: &[ImagePair],
    model: &dyn PixelModel,
    opts: &SweepOptions,
) -> Result<RunReport> {
    run_sweep_on(pairs, Some(model), &ablation_options(opts)?)
}

/// The sweep with and without edge guidance, side by side.
pub fn run_ablation_no_edge(cfg: &SweepConfig) -> Result<RunReport> {
    let ablation = SweepConfig {
        options: ablation_options(&cfg.options)?,
        ..cfg.clone()
    };
    run_sweep(&ablation)
}

/// Exact-versus-approximate comparison for one image at one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub image: String,
    pub epsilon: u32,
    pub approx_ms: f64,
    pub exact_ms: f64,
    /// Pixels where the two modes disagree.
    pub differing_pixels: usize,
    pub max_abs_difference: u32,
    pub mean_abs_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub median_approx_ms: f64,
    pub median_exact_ms: f64,
}

impl TimingReport {
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("timing csv", e))?;
        Ok(())
    }
}

/// Times both eraser modes image by image. Images are processed one at a
/// time so the measurements do not compete with each other.
pub fn time_modes_on(
    pairs: &[ImagePair],
    model: &dyn PixelModel,
    opts: &SweepOptions,
) -> Result<TimingReport> {
    if pairs.is_empty() || opts.epsilons.is_empty() {
        return Err(Error::Config("timing needs images and epsilon values".into()));
    }
    let mut rows = Vec::new();
    for pair in pairs {
        let stego = lsb::embed(&pair.cover, &pair.secret, opts.lsb)?;
        for &epsilon in &opts.epsilons {
            let approx_cfg = EraserConfig::new(epsilon, EraserMode::Approx)?;
            let exact_cfg = EraserConfig::new(epsilon, EraserMode::Exact)?;
            let start = Instant::now();
            let approx = eraser::purify(&stego, model, &approx_cfg)?.image;
            let approx_ms = start.elapsed().as_secs_f64() * 1e3;
            let start = Instant::now();
            let exact = eraser::purify(&stego, model, &exact_cfg)?.image;
            let exact_ms = start.elapsed().as_secs_f64() * 1e3;
            let diffs: Vec<u32> = approx
                .pixels()
                .iter()
                .zip(exact.pixels())
                .map(|(&a, &b)| a.abs_diff(b) as u32)
                .collect();
            rows.push(TimingRow {
                image: pair.name.clone(),
                epsilon,
                approx_ms,
                exact_ms,
                differing_pixels: diffs.iter().filter(|&&d| d > 0).count(),
                max_abs_difference: diffs.iter().copied().max().unwrap_or(0),
                mean_abs_difference: diffs.iter().sum::<u32>() as f64 / diffs.len() as f64,
            });
        }
    }
    let approx: Vec<f64> = rows.iter().map(|r| r.approx_ms).collect();
    let exact: Vec<f64> = rows.iter().map(|r| r.exact_ms).collect();
    Ok(TimingReport {
        median_approx_ms: median(&approx),
        median_exact_ms: median(&exact),
        rows,
    })
}

pub fn time_modes(cfg: &SweepConfig) -> Result<TimingReport> {
    let options = SweepOptions {
        methods: vec![Method::OURS_APPROX, Method::OURS_EXACT],
        ..cfg.options.clone()
    };
    let cfg = SweepConfig {
        options,
        ..cfg.clone()
    };
    let (pairs, model) = cfg.load()?;
    let model = model.expect("eraser methods load a model");
    let report = time_modes_on(&pairs, &model, &cfg.options)?;
    let path = &cfg.output;
    report.write_csv(fs::File::create(path).map_err(|e| Error::io(path, e))?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::EdgeMap;
    use crate::mixture::PixelDistribution;

    /// Every pixel is predicted to be mid-grey; no edges.
    struct Flat;

    impl PixelModel for Flat {
        fn pixel_distribution(&self, img: &Image) -> Result<PixelDistribution> {
            Ok(PixelDistribution::point_masses(img.height(), img.width(), |_, _| 128))
        }

        fn edge_map(&self, img: &Image) -> Result<EdgeMap> {
            Ok(EdgeMap::zeros(img.width(), img.height()))
        }
    }

    /// Mid-grey prediction with edges from the image itself.
    struct FlatWithEdges;

    impl PixelModel for FlatWithEdges {
        fn pixel_distribution(&self, img: &Image) -> Result<PixelDistribution> {
            Flat.pixel_distribution(img)
        }

        fn edge_map(&self, img: &Image) -> Result<EdgeMap> {
            Ok(crate::edge::prewitt(img))
        }
    }

    fn opts(methods: Vec<Method>, epsilons: Vec<u32>) -> SweepOptions {
        SweepOptions {
            methods,
            epsilons,
            seed: 9,
            ..SweepOptions::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for name in [
            "ours-approx",
            "ours-exact",
            "ours-approx-noedge",
            "ours-exact-noedge",
            "gaussian",
            "median",
            "wiener",
        ] {
            assert_eq!(name.parse::<Method>().unwrap().name(), name);
        }
        assert!("ours".parse::<Method>().is_err());
    }

    #[test]
    fn zero_sigma_gaussian_is_the_unattacked_pipeline() {
        let pairs = synthetic_pairs(3, 16, 1, false);
        let report = run_sweep_on(&pairs, None, &opts(vec![Method::GAUSSIAN], vec![0])).unwrap();
        for (r, p) in report.records.iter().zip(&pairs) {
            let stego = lsb::embed(&p.cover, &p.secret, LsbConfig::default()).unwrap();
            let unattacked = metrics::decoded_rate(&p.secret, &lsb::extract(&stego, LsbConfig::default())).unwrap();
            let m = r.outcome.as_ref().unwrap();
            assert_eq!(m.decoded_rate, unattacked);
            assert_eq!(m.destruction_rate, 0.0);
        }
    }

    #[test]
    fn row_count_and_order() {
        let pairs = synthetic_pairs(3, 16, 2, false);
        let o = opts(vec![Method::OURS_APPROX, Method::GAUSSIAN, Method::MEDIAN], vec![1, 2]);
        let report = run_sweep_on(&pairs, Some(&Flat), &o).unwrap();
        assert_eq!(report.records.len(), 3 * 3 * 2);
        assert_eq!(report.aggregates.len(), 3 * 2);
        let keys: Vec<(String, Method, u32)> = report
            .records
            .iter()
            .map(|r| (r.image.clone(), r.method, r.epsilon))
            .collect();
        assert_eq!(keys[0], ("img0000".into(), Method::OURS_APPROX, 1));
        assert_eq!(keys[1], ("img0000".into(), Method::OURS_APPROX, 2));
        assert_eq!(keys[2], ("img0000".into(), Method::GAUSSIAN, 1));
        assert_eq!(keys[17], ("img0002".into(), Method::MEDIAN, 2));
        let mut csv = Vec::new();
        report.write_results_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 18);
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        let mut pairs = synthetic_pairs(2, 16, 3, false);
        pairs[1].secret = Image::filled(12, 16, 0).unwrap();
        // too small for SSIM: every cell of the third pair fails later
        pairs.push(ImagePair {
            name: "tiny".into(),
            cover: Image::filled(8, 8, 10).unwrap(),
            secret: Image::filled(8, 8, 200).unwrap(),
        });
        let report = run_sweep_on(&pairs, None, &opts(vec![Method::GAUSSIAN, Method::WIENER], vec![2])).unwrap();
        assert_eq!(report.records.len(), 6);
        let failed: Vec<&str> = report.failures().map(|r| r.image.as_str()).collect();
        assert_eq!(failed, ["img0001", "img0001", "tiny", "tiny"]);
        let agg = report.aggregate(Method::GAUSSIAN, 2).unwrap();
        assert_eq!((agg.ok, agg.failed), (1, 2));
        let mut csv = Vec::new();
        report.write_results_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(3).unwrap().contains("dimension"));
    }

    #[test]
    fn option_validation() {
        assert!(opts(vec![], vec![1]).validate().is_err());
        assert!(opts(vec![Method::GAUSSIAN], vec![]).validate().is_err());
        assert!(opts(vec![Method::OURS_APPROX], vec![0]).validate().is_err());
        assert!(opts(vec![Method::GAUSSIAN, Method::GAUSSIAN], vec![1]).validate().is_err());
        assert!(opts(vec![Method::GAUSSIAN], vec![0, 1]).validate().is_ok());
        let pairs = synthetic_pairs(1, 16, 0, false);
        assert!(run_sweep_on(&pairs, None, &opts(vec![Method::OURS_APPROX], vec![1])).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_seeded() {
        let pairs = synthetic_pairs(4, 16, 4, false);
        let o = opts(vec![Method::OURS_APPROX, Method::GAUSSIAN], vec![1, 3]);
        let csv = |o: &SweepOptions| {
            let mut buf = Vec::new();
            run_sweep_on(&pairs, Some(&Flat), o).unwrap().write_results_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(csv(&o), csv(&o));
        assert_ne!(csv(&o), csv(&SweepOptions { seed: 10, ..o.clone() }));
    }

    #[test]
    fn unguided_budget_and_zero_edge_coincidence() {
        let pairs = synthetic_pairs(3, 16, 5, true);
        let o = opts(vec![Method::OURS_APPROX], vec![1, 2]);
        let report = run_ablation_no_edge_on(&pairs, &FlatWithEdges, &o).unwrap();
        assert!(report.budget_violations().is_empty());
        let unguided = Method::OURS_APPROX.without_edges().unwrap();
        for r in report.records.iter().filter(|r| r.method == unguided) {
            let m = r.outcome.as_ref().unwrap();
            assert_eq!(m.e_norm, Some((r.epsilon, r.epsilon)));
        }
        // a model without edges makes both runs identical
        let flat = run_ablation_no_edge_on(&pairs, &Flat, &o).unwrap();
        for chunk in flat.records.chunks(4) {
            assert_eq!(chunk[0].outcome, chunk[2].outcome);
            assert_eq!(chunk[1].outcome, chunk[3].outcome);
        }
    }

    #[test]
    fn ablation_needs_an_eraser() {
        assert!(ablation_options(&opts(vec![Method::GAUSSIAN], vec![1])).is_err());
        let a = ablation_options(&opts(vec![Method::OURS_EXACT, Method::MEDIAN], vec![1])).unwrap();
        assert_eq!(a.methods, [Method::OURS_EXACT, Method::OURS_EXACT.without_edges().unwrap()]);
    }

    #[test]
    fn timing_rows_compare_modes() {
        let pairs = synthetic_pairs(2, 8, 6, false);
        let report = time_modes_on(&pairs, &Flat, &opts(vec![], vec![2])).unwrap();
        assert_eq!(report.rows.len(), 2);
        // a frozen model gives the same answer in both modes
        for row in &report.rows {
            assert_eq!(row.differing_pixels, 0);
            assert!(row.approx_ms >= 0.0 && row.exact_ms >= 0.0);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = synthetic_pairs(3, 12, 7, false);
        write_dataset(dir.path(), &pairs).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), pairs);
        std::fs::remove_file(dir.path().join("img0001.secret.pgm")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::NotFound(_))));
        let empty = tempfile::tempdir().unwrap();
        assert!(load_dataset(empty.path()).is_err());
    }

    #[test]
    fn mean_std_and_median() {
        let s = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(MeanStd::of(&[]).mean.is_nan());
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn sibling_paths() {
        let cfg = SweepConfig {
            options: SweepOptions::default(),
            dataset: "d".into(),
            weights: None,
            output: "out/run.csv".into(),
        };
        assert_eq!(cfg.summary_path(), PathBuf::from("out/run.summary.csv"));
        assert_eq!(cfg.timing_path(), PathBuf::from("out/run.timing.csv"));
    }
}
