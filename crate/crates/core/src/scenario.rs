//! Scenario configuration, analytic and Monte-Carlo runs, record ingestion,
//! and the files they write.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [source]
//! v_s = 0.1
//! v_a = 10.0
//! t_s = 0.5
//!
//! [channel]
//! preset = "erasure"     # or uniform, one_peak, two_peak, exp_decay, explicit
//! eta_hi = 1.0
//! eta_lo = 0.25
//! p_hi = 0.5
//!
//! [tap]
//! transmittivity = 0.93
//! thresholds = [0.0, 2.0, 4.0, 6.0, 9.0]
//!
//! [mc]                   # optional
//! enable = true
//! samples = 1000000
//! seed = 7
//! write_records = false
//!
//! [error]                # optional
//! element_sigma = 0.03
//! trials = 1000
//! nominal_records = 2.4e8
//!
//! [output]               # optional
//! dir = "out"
//! formats = ["csv", "json"]
//! ```
//!
//! All files are staged in a temporary directory next to the output directory
//! and moved into place only after every file has been written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{mixture_from_channel, subchannel_cm, ChannelPreset, GaussianMixture, Quadrature, SourceParams};
use crate::distill::{distill, ln_error_monte_carlo, threshold_sweep, SweepRow, TapConfig};
use crate::error::{Error, Result};
use crate::gaussian::{
    conditional_entropy_lower_bound, gaussian_log_negativity, upper_bound_ln_mixture, validate_weights,
    TwoModeCovariance,
};
use crate::montecarlo::{empirical_cm, EstimatedCM, QuadratureRecord, Sampler, BLOCK_LEN};
use crate::records::{RecordHeader, RecordReader, RecordWriter};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const MC_SWEEP_CSV: &str = "mc_sweep.csv";
pub const VALIDATION_CSV: &str = "mc_validation.csv";
pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.txt";
const HIST_BINS: usize = 80;
const HIST_HALF_WIDTH_SD: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source: SourceParams,
    pub channel: ChannelPreset,
    pub tap: TapSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub error: ErrorSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSection {
    pub transmittivity: f64,
    /// Strictly ascending, finite.
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub enable: bool,
    pub samples: usize,
    pub seed: u64,
    /// Also write every sampled record to `records.txt`.
    pub write_records: bool,
    /// Batches for the batch-means error of the sampled log-negativity.
    pub batches: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            enable: false,
            samples: 1_000_000,
            seed: 1,
            write_records: false,
            batches: 20,
        }
    }
}

/// Log-negativity error model: per-element covariance error plus the
/// finite-sample term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorSection {
    pub element_sigma: f64,
    pub trials: usize,
    /// Records assumed before post-selection when no samples are available;
    /// the post-selected count is this times `p_success`.
    pub nominal_records: f64,
}

impl Default for ErrorSection {
    fn default() -> Self {
        Self {
            element_sigma: 0.03,
            trials: 1000,
            nominal_records: 2.4e8,
        }
    }
}

impl ErrorSection {
    fn validate(&self) -> Result<()> {
        if !(self.element_sigma >= 0.0 && self.element_sigma.is_finite()) {
            return Err(Error::Config(format!("error.element_sigma = {}", self.element_sigma)));
        }
        if self.trials < 100 {
            return Err(Error::Config(format!(
                "error.trials = {} (need at least 100)",
                self.trials
            )));
        }
        if !(self.nominal_records > 1.0 && self.nominal_records.is_finite()) {
            return Err(Error::Config(format!(
                "error.nominal_records = {}",
                self.nominal_records
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![OutputFormat::Csv],
        }
    }
}

impl OutputSection {
    fn validate(&self) -> Result<()> {
        if self.formats.is_empty() {
            return Err(Error::Config("output.formats is empty".into()));
        }
        Ok(())
    }

    fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    /// `--out` wins over the configured directory.
    pub fn resolve_dir(&self, cli: Option<&Path>) -> Result<PathBuf> {
        cli.map(Path::to_path_buf)
            .or_else(|| self.dir.clone())
            .ok_or_else(|| Error::Config("no output directory (set output.dir or pass --out)".into()))
    }
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold list is empty".into()));
    }
    if thresholds.iter().any(|h| !h.is_finite()) {
        return Err(Error::Config("thresholds must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("thresholds must be strictly ascending".into()));
    }
    Ok(())
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate().map_err(config_err)?;
        self.channel.build().map_err(config_err)?;
        TapConfig::new(self.tap.transmittivity, 0.0).map_err(config_err)?;
        validate_thresholds(&self.tap.thresholds)?;
        if self.mc.enable && self.mc.samples < 2 {
            return Err(Error::Config(format!(
                "mc.samples = {} (need at least 2)",
                self.mc.samples
            )));
        }
        if self.mc.batches < 2 {
            return Err(Error::Config(format!(
                "mc.batches = {} (need at least 2)",
                self.mc.batches
            )));
        }
        self.error.validate()?;
        self.output.validate()
    }

    pub fn mixture(&self) -> Result<GaussianMixture> {
        mixture_from_channel(&self.source, &self.channel.build()?)
    }
}

/// Run metadata written next to every set of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// The configuration that produced the run.
    pub config: serde_json::Value,
    /// `(eta, p)` of each mixture component, in the order of the weight
    /// columns.
    pub levels: Vec<(f64, f64)>,
    pub upper_bound_before: f64,
    pub artifacts: Vec<String>,
}

impl Manifest {
    fn new(
        command: &str,
        seed: u64,
        config: &impl Serialize,
        levels: Vec<(f64, f64)>,
        upper_bound_before: f64,
    ) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
            levels,
            upper_bound_before,
            artifacts: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Output files written into a hidden sibling directory, then moved into the
/// target. Dropping an uncommitted stage deletes everything in it.
struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".cvdistill-stage-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(&parent, e))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let mut w = self.create(name)?;
        let path = self.path(name);
        w.write_all(contents.as_bytes()).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        let finals: Vec<PathBuf> = self.files.iter().map(|f| self.target.join(f)).collect();
        if !self.target.exists() {
            let staged = self.dir.keep();
            fs::rename(&staged, &self.target).map_err(|e| {
                let _ = fs::remove_dir_all(&staged);
                Error::io(&self.target, e)
            })?;
        } else {
            for (name, dest) in self.files.iter().zip(&finals) {
                let src = self.dir.path().join(name);
                fs::rename(&src, dest).map_err(|e| Error::io(dest, e))?;
            }
        }
        Ok(finals)
    }
}

/// Full-precision CSV cell.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn io_at(path: PathBuf) -> impl Fn(std::io::Error) -> Error {
    move |e| Error::io(&path, e)
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLine {
    pub x_th: f64,
    pub p_success: f64,
    pub ln_gaussian: f64,
    pub ln_err: f64,
    pub lower_bound: f64,
    pub upper_bound_before: f64,
    pub posterior_weights: Vec<f64>,
}

fn weight_label(eta: f64) -> String {
    format!("w_eta_{eta}")
}

fn write_sweep(stage: &mut Staging, output: &OutputSection, levels: &[(f64, f64)], lines: &[SweepLine]) -> Result<()> {
    if output.wants(OutputFormat::Csv) {
        let mut w = stage.create(SWEEP_CSV)?;
        let err = io_at(stage.path(SWEEP_CSV));
        let mut header = vec![
            "x_th".to_string(),
            "p_success".into(),
            "ln_gaussian".into(),
            "ln_err".into(),
            "lower_bound".into(),
            "upper_bound_before".into(),
        ];
        header.extend(levels.iter().map(|(eta, _)| weight_label(*eta)));
        writeln!(w, "{}", header.join(",")).map_err(&err)?;
        for l in lines {
            let mut cells = vec![
                num(l.x_th),
                num(l.p_success),
                num(l.ln_gaussian),
                num(l.ln_err),
                num(l.lower_bound),
                num(l.upper_bound_before),
            ];
            cells.extend(l.posterior_weights.iter().map(|&v| num(v)));
            writeln!(w, "{}", cells.join(",")).map_err(&err)?;
        }
        w.flush().map_err(&err)?;
    }
    if output.wants(OutputFormat::Json) {
        let text = serde_json::to_string_pretty(lines).map_err(|e| Error::Config(e.to_string()))?;
        stage.write(SWEEP_JSON, &text)?;
    }
    Ok(())
}

/// `weights_<k>.csv`, `k` counting thresholds from 1.
fn write_weights(stage: &mut Staging, k: usize, levels: &[(f64, f64)], posterior: &[f64]) -> Result<()> {
    let mut text = String::from("eta,prior,posterior\n");
    for ((eta, prior), post) in levels.iter().zip(posterior) {
        text.push_str(&format!("{},{},{}\n", num(*eta), num(*prior), num(*post)));
    }
    stage.write(&format!("weights_{k}.csv"), &text)
}

/// Per-quadrature histogram specification derived from a Gaussian reference.
struct Marginals {
    /// `(mean, sd)` of each quadrature in [`Quadrature::ALL`] order.
    reference: Vec<(f64, f64)>,
    counts: Vec<Vec<u64>>,
    total: u64,
}

impl Marginals {
    fn new(mean: &Vector4<f64>, cm: &nalgebra::Matrix4<f64>) -> Self {
        let reference = Quadrature::ALL
            .iter()
            .map(|q| {
                let w = q.coefficients();
                (w.dot(mean), (w.transpose() * cm * w)[(0, 0)].max(0.0).sqrt())
            })
            .collect();
        Self {
            reference,
            counts: vec![vec![0; HIST_BINS]; Quadrature::ALL.len()],
            total: 0,
        }
    }

    fn range(&self, i: usize) -> (f64, f64) {
        let (m, sd) = self.reference[i];
        let half = HIST_HALF_WIDTH_SD * sd.max(1e-6);
        (m - half, m + half)
    }

    fn push(&mut self, r: &QuadratureRecord) {
        self.total += 1;
        for (i, q) in Quadrature::ALL.iter().enumerate() {
            let v = q.eval(r.x_a, r.p_a, r.x_b, r.p_b);
            let (lo, hi) = self.range(i);
            let bin = ((v - lo) / (hi - lo) * HIST_BINS as f64).floor();
            if bin >= 0.0 && bin < HIST_BINS as f64 {
                self.counts[i][bin as usize] += 1;
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        self.total += other.total;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// `marginals_<k>.csv`: Gaussian reference density and, when records were
    /// pushed, the sampled density.
    fn write(&self, stage: &mut Staging, k: usize, sampled: bool) -> Result<()> {
        let mut text = String::from("quadrature,bin_center,gaussian,sampled\n");
        for (i, q) in Quadrature::ALL.iter().enumerate() {
            let (lo, hi) = self.range(i);
            let width = (hi - lo) / HIST_BINS as f64;
            let (m, sd) = self.reference[i];
            for b in 0..HIST_BINS {
                let x = lo + (b as f64 + 0.5) * width;
                let z = (x - m) / sd;
                let gauss = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let sampled_cell = if sampled && self.total > 0 {
                    num(self.counts[i][b] as f64 / (self.total as f64 * width))
                } else {
                    String::new()
                };
                text.push_str(&format!("{},{},{},{}\n", q.name(), num(x), num(gauss), sampled_cell));
            }
        }
        stage.write(&format!("marginals_{k}.csv"), &text)
    }
}

/// Key for the error-model generator of threshold `k`, distinct from the
/// sampler's key.
fn error_seed(seed: u64, k: usize) -> u64 {
    seed ^ 0x6c6e_5f65_7272_0000 ^ ((k as u64) << 32)
}

fn ln_err_or_nan(cm: &TwoModeCovariance, error: &ErrorSection, n_post: f64, seed: u64) -> f64 {
    match ln_error_monte_carlo(cm, error.element_sigma, n_post, error.trials, seed) {
        Ok(e) => e.ln_std,
        Err(e) => {
            log::warn!("log-negativity error unavailable: {e}");
            f64::NAN
        }
    }
}

/// Sampled counterpart of one sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub threshold: f64,
    pub accepted: u64,
    pub p_success: f64,
    pub p_success_se: f64,
    pub ln: f64,
    pub ln_se: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioSummary {
    pub rows: Vec<SweepRow>,
    pub lines: Vec<SweepLine>,
    pub mc: Option<Vec<McRow>>,
    pub artifacts: Vec<PathBuf>,
}

/// Analytic sweep, optional Monte-Carlo cross-check, and all their files.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioSummary> {
    cfg.validate()?;
    let channel = cfg.channel.build()?;
    let mix = mixture_from_channel(&cfg.source, &channel)?;
    let rows = threshold_sweep(&mix, cfg.tap.transmittivity, &cfg.tap.thresholds)?;
    let levels = channel.levels().to_vec();
    let upper = rows[0].upper_bound_before;
    let mut stage = Staging::new(out_dir)?;

    let mut marginals: Vec<Marginals> = rows
        .iter()
        .map(|r| Marginals::new(&distill_mean(&mix, cfg, r.threshold), r.cm_post.matrix()))
        .collect();
    let mc = if cfg.mc.enable {
        Some(sample_scenario(cfg, &mix, &mut marginals, &mut stage, &levels)?)
    } else {
        None
    };

    let lines: Vec<SweepLine> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let n_post = match &mc {
                Some(m) => m[k].accepted as f64,
                None => cfg.error.nominal_records * r.p_success,
            };
            SweepLine {
                x_th: r.threshold,
                p_success: r.p_success,
                ln_gaussian: r.ln_gaussian,
                ln_err: ln_err_or_nan(&r.cm_post, &cfg.error, n_post, error_seed(cfg.mc.seed, k)),
                lower_bound: r.lower_bound,
                upper_bound_before: r.upper_bound_before,
                posterior_weights: r.posterior_weights.clone(),
            }
        })
        .collect();
    write_sweep(&mut stage, &cfg.output, &levels, &lines)?;
    for (k, r) in rows.iter().enumerate() {
        write_weights(&mut stage, k + 1, &levels, &r.posterior_weights)?;
        marginals[k].write(&mut stage, k + 1, mc.is_some())?;
    }
    if let Some(m) = &mc {
        let mut text = String::from("x_th,accepted,p_success,p_success_se,ln_gaussian,ln_se\n");
        for row in m {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                num(row.threshold),
                row.accepted,
                num(row.p_success),
                num(row.p_success_se),
                num(row.ln),
                num(row.ln_se)
            ));
        }
        stage.write(MC_SWEEP_CSV, &text)?;
    }
    let mut manifest = Manifest::new("sweep", cfg.mc.seed, cfg, levels, upper)?;
    manifest.artifacts = stage.files.clone();
    manifest.artifacts.push(MANIFEST.to_string());
    stage.write(
        MANIFEST,
        &serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    let artifacts = stage.commit()?;
    Ok(ScenarioSummary {
        rows,
        lines,
        mc,
        artifacts,
    })
}

fn distill_mean(mix: &GaussianMixture, cfg: &ScenarioConfig, threshold: f64) -> Vector4<f64> {
    TapConfig::new(cfg.tap.transmittivity, threshold)
        .and_then(|tap| distill(mix, &tap))
        .map(|r| r.mean_post)
        .unwrap_or_else(|_| Vector4::zeros())
}

fn sample_scenario(
    cfg: &ScenarioConfig,
    mix: &GaussianMixture,
    marginals: &mut [Marginals],
    stage: &mut Staging,
    levels: &[(f64, f64)],
) -> Result<Vec<McRow>> {
    let sampler = Sampler::new(mix, cfg.tap.transmittivity, cfg.mc.seed)?;
    let n = cfg.mc.samples;
    let thresholds = &cfg.tap.thresholds;
    let tally = sampler.tally(n, thresholds, cfg.mc.batches);

    let per_block = sampler.map_blocks(n, |records| {
        thresholds
            .iter()
            .zip(marginals.iter())
            .map(|(&h, m)| {
                let mut local = Marginals {
                    reference: m.reference.clone(),
                    counts: vec![vec![0; HIST_BINS]; Quadrature::ALL.len()],
                    total: 0,
                };
                records.iter().filter(|r| r.x_t >= h).for_each(|r| local.push(r));
                local
            })
            .collect::<Vec<_>>()
    });
    for block in per_block {
        for (m, local) in marginals.iter_mut().zip(block) {
            m.merge(&local);
        }
    }

    if cfg.mc.write_records {
        let header = RecordHeader::new(
            cfg.tap.transmittivity,
            Some(cfg.source),
            levels.to_vec(),
            Some(cfg.mc.seed),
        );
        let path = stage.path(RECORDS);
        let mut w = RecordWriter::new(stage.create(RECORDS)?, &header)?;
        for b in 0..n.div_ceil(BLOCK_LEN) {
            let len = BLOCK_LEN.min(n - b * BLOCK_LEN);
            for r in sampler.block(b as u64, len) {
                w.write(&r).map_err(|e| relabel_io(e, &path))?;
            }
        }
        w.finish().map_err(|e| relabel_io(e, &path))?;
    }

    Ok(tally
        .per_threshold
        .iter()
        .map(|t| {
            let (p, p_se) = t.acceptance(tally.n_total);
            let (ln, ln_se) = t.ln_with_batch_se().unwrap_or_else(|e| {
                log::warn!("x_th = {}: sampled log-negativity unavailable: {e}", t.threshold);
                (f64::NAN, f64::NAN)
            });
            McRow {
                threshold: t.threshold,
                accepted: t.moments.count(),
                p_success: p,
                p_success_se: p_se,
                ln,
                ln_se,
            }
        })
        .collect())
}

fn relabel_io(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// What a closed-form vs sampled comparison refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    PSuccess,
    Mean(usize),
    Element(usize, usize),
    LogNegativity,
}

impl Quantity {
    pub fn label(self) -> String {
        match self {
            Quantity::PSuccess => "p_success".into(),
            Quantity::Mean(i) => format!("mean[{i}]"),
            Quantity::Element(i, j) => format!("cm[{i}][{j}]"),
            Quantity::LogNegativity => "ln_gaussian".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub threshold: f64,
    pub quantity: Quantity,
    pub analytic: f64,
    pub sampled: f64,
    pub se: f64,
}

impl ValidationRow {
    /// Standardized difference; zero when both agree exactly.
    pub fn z(&self) -> f64 {
        let d = self.sampled - self.analytic;
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }

    pub fn within(&self, n_se: f64) -> bool {
        self.z().abs() <= n_se
    }
}

/// Compares every closed-form quantity of the heralded state with a sampled
/// estimate from `n` records. Thresholds with a degenerate closed form or
/// fewer than two accepted records are skipped.
pub fn validate_against_mc(
    mix: &GaussianMixture,
    transmittivity: f64,
    thresholds: &[f64],
    n: usize,
    seed: u64,
    batches: usize,
) -> Result<Vec<ValidationRow>> {
    validate_thresholds(thresholds)?;
    let sampler = Sampler::new(mix, transmittivity, seed)?;
    let tally = sampler.tally(n, thresholds, batches);
    let mut out = Vec::new();
    for t in &tally.per_threshold {
        let analytic = match distill(mix, &TapConfig::new(transmittivity, t.threshold)?) {
            Ok(r) => r,
            Err(Error::DegenerateSelection(_)) => continue,
            Err(e) => return Err(e),
        };
        let est = match t.moments.estimate() {
            Ok(e) => e,
            Err(Error::TooFewAccepted { .. }) => continue,
            Err(e) => return Err(e),
        };
        let row = |quantity, analytic, sampled, se| ValidationRow {
            threshold: t.threshold,
            quantity,
            analytic,
            sampled,
            se,
        };
        let (p, p_se) = t.acceptance(tally.n_total);
        out.push(row(Quantity::PSuccess, analytic.p_success, p, p_se));
        for i in 0..4 {
            let se = (est.matrix[(i, i)] / est.n as f64).sqrt();
            out.push(row(Quantity::Mean(i), analytic.mean_post[i], est.mean[i], se));
        }
        for i in 0..4 {
            for j in i..4 {
                out.push(row(
                    Quantity::Element(i, j),
                    analytic.cm_post.get(i, j),
                    est.matrix[(i, j)],
                    est.se[(i, j)],
                ));
            }
        }
        if let Ok((ln, ln_se)) = t.ln_with_batch_se() {
            out.push(row(Quantity::LogNegativity, analytic.ln_gaussian, ln, ln_se));
        }
    }
    Ok(out)
}

/// Runs [`validate_against_mc`] for a scenario and writes
/// `mc_validation.csv` and the manifest.
pub fn mc_validate(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<ValidationRow>> {
    cfg.validate()?;
    let channel = cfg.channel.build()?;
    let mix = mixture_from_channel(&cfg.source, &channel)?;
    let upper = upper_bound_ln_mixture(mix.components())?;
    let rows = validate_against_mc(
        &mix,
        cfg.tap.transmittivity,
        &cfg.tap.thresholds,
        cfg.mc.samples,
        cfg.mc.seed,
        cfg.mc.batches,
    )?;
    let mut stage = Staging::new(out_dir)?;
    let mut text = String::from("x_th,quantity,analytic,sampled,se,z,within_3se\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            num(r.threshold),
            r.quantity.label(),
            num(r.analytic),
            num(r.sampled),
            num(r.se),
            num(r.z()),
            r.within(3.0)
        ));
    }
    stage.write(VALIDATION_CSV, &text)?;
    let mut manifest = Manifest::new("mc-validate", cfg.mc.seed, cfg, channel.levels().to_vec(), upper)?;
    manifest.artifacts = vec![VALIDATION_CSV.into(), MANIFEST.into()];
    stage.write(
        MANIFEST,
        &serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    stage.commit()?;
    Ok(rows)
}

/// Record files and their concatenation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub inputs: Vec<IngestInput>,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub error: ErrorSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestInput {
    pub path: PathBuf,
    pub weight: f64,
}

impl IngestConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative input paths are taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            for input in &mut cfg.inputs {
                if input.path.is_relative() {
                    input.path = base.join(&input.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no input record files".into()));
        }
        validate_weights(self.inputs.iter().map(|i| i.weight)).map_err(config_err)?;
        validate_thresholds(&self.thresholds)?;
        self.error.validate()?;
        self.output.validate()
    }
}

/// Records drawn from several files by weighted sequential concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct Concatenated {
    pub records: Vec<QuadratureRecord>,
    pub tap_transmittivity: f64,
    /// `(eta, p_file * p_level)` for every level of every file, in file
    /// order; record component indices point into this list.
    pub levels: Vec<(f64, f64)>,
    /// Covariance matrices of the levels, when every file declares its source.
    pub components: Option<Vec<(f64, TwoModeCovariance)>>,
}

/// Builds one record stream from several files. Each draw picks file `i` with
/// probability `weights[i]` and takes that file's next record; the stream ends
/// when a picked file is exhausted. With a single file the result is that
/// file's records in order.
pub fn concatenate_weighted(paths: &[PathBuf], weights: &[f64], seed: u64) -> Result<Concatenated> {
    if paths.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} record files but {} weights",
            paths.len(),
            weights.len()
        )));
    }
    validate_weights(weights.iter().copied())?;
    let mut readers = paths
        .iter()
        .map(|p| RecordReader::open(p))
        .collect::<Result<Vec<_>>>()?;
    let first = readers[0].header().clone();
    let mut levels = Vec::new();
    let mut components = Some(Vec::new());
    let mut offsets = Vec::new();
    for (reader, (&w, path)) in readers.iter().zip(weights.iter().zip(paths)) {
        let h = reader.header();
        if h.units != first.units {
            return Err(Error::UnitsMismatch(format!(
                "{}: units {} vs {}",
                path.display(),
                h.units,
                first.units
            )));
        }
        if h.tap_transmittivity != first.tap_transmittivity {
            return Err(Error::UnitsMismatch(format!(
                "{}: tap transmittivity {} vs {}",
                path.display(),
                h.tap_transmittivity,
                first.tap_transmittivity
            )));
        }
        offsets.push(levels.len() as u32);
        for &(eta, p) in &h.levels {
            levels.push((eta, w * p));
        }
        components = match (components, h.source) {
            (Some(mut c), Some(src)) => {
                for &(eta, p) in &h.levels {
                    c.push((w * p, subchannel_cm(&src, eta)?));
                }
                Some(c)
            }
            _ => None,
        };
    }

    let mut cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    *cumulative.last_mut().unwrap() = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    loop {
        let i = if readers.len() == 1 {
            0
        } else {
            let u: f64 = rng.random();
            cumulative.partition_point(|&c| c <= u)
        };
        match readers[i].next_record()? {
            Some(mut r) => {
                r.component += offsets[i];
                records.push(r);
            }
            None => break,
        }
    }
    Ok(Concatenated {
        records,
        tap_transmittivity: first.tap_transmittivity,
        levels,
        components,
    })
}

/// Empirical post-selection result for one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRow {
    pub threshold: f64,
    pub accepted: usize,
    pub p_success: f64,
    pub p_success_se: f64,
    pub estimate: Option<EstimatedCM>,
    pub ln_gaussian: f64,
    pub ln_err: f64,
    pub lower_bound: f64,
    pub posterior_weights: Vec<f64>,
}

/// Post-selects `records` at each threshold and estimates the heralded
/// covariance matrix, its log-negativity with error bar, and the lower bound.
/// Quantities that cannot be evaluated are NaN.
pub fn empirical_sweep(
    records: &[QuadratureRecord],
    n_levels: usize,
    thresholds: &[f64],
    error: &ErrorSection,
    seed: u64,
) -> Result<Vec<EmpiricalRow>> {
    validate_thresholds(thresholds)?;
    if records.is_empty() {
        return Err(Error::TooFewAccepted { accepted: 0, needed: 2 });
    }
    let total = records.len() as f64;
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let mut counts = vec![0usize; n_levels];
            let mut accepted = 0usize;
            for r in records.iter().filter(|r| r.x_t >= h) {
                accepted += 1;
                counts[r.component as usize] += 1;
            }
            let p = accepted as f64 / total;
            let estimate = empirical_cm(records, h).ok();
            let cm = estimate.as_ref().and_then(|e| e.covariance().ok());
            let (ln, lower, ln_err) = match &cm {
                Some(cm) => (
                    gaussian_log_negativity(cm).unwrap_or(f64::NAN),
                    conditional_entropy_lower_bound(cm).unwrap_or(f64::NAN),
                    ln_err_or_nan(cm, error, accepted as f64, error_seed(seed, k)),
                ),
                None => {
                    log::warn!("x_th = {h}: no valid covariance estimate from {accepted} records");
                    (f64::NAN, f64::NAN, f64::NAN)
                }
            };
            EmpiricalRow {
                threshold: h,
                accepted,
                p_success: p,
                p_success_se: (p * (1.0 - p) / total).sqrt(),
                estimate,
                ln_gaussian: ln,
                ln_err,
                lower_bound: lower,
                posterior_weights: counts
                    .iter()
                    .map(|&c| {
                        if accepted > 0 {
                            c as f64 / accepted as f64
                        } else {
                            f64::NAN
                        }
                    })
                    .collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub data: Concatenated,
    pub rows: Vec<EmpiricalRow>,
    pub upper_bound_before: f64,
    pub artifacts: Vec<PathBuf>,
}

/// Concatenates record files, post-selects them at each threshold and writes
/// the same files as [`run_scenario`].
pub fn ingest_and_distill(cfg: &IngestConfig, out_dir: &Path) -> Result<IngestSummary> {
    cfg.validate()?;
    let paths: Vec<PathBuf> = cfg.inputs.iter().map(|i| i.path.clone()).collect();
    let weights: Vec<f64> = cfg.inputs.iter().map(|i| i.weight).collect();
    let data = concatenate_weighted(&paths, &weights, cfg.seed)?;
    let rows = empirical_sweep(&data.records, data.levels.len(), &cfg.thresholds, &cfg.error, cfg.seed)?;
    let upper = match &data.components {
        Some(c) => upper_bound_ln_mixture(c)?,
        None => {
            log::warn!("record headers lack source parameters; upper bound unavailable");
            f64::NAN
        }
    };

    let mut stage = Staging::new(out_dir)?;
    let lines: Vec<SweepLine> = rows
        .iter()
        .map(|r| SweepLine {
            x_th: r.threshold,
            p_success: r.p_success,
            ln_gaussian: r.ln_gaussian,
            ln_err: r.ln_err,
            lower_bound: r.lower_bound,
            upper_bound_before: upper,
            posterior_weights: r.posterior_weights.clone(),
        })
        .collect();
    write_sweep(&mut stage, &cfg.output, &data.levels, &lines)?;
    for (k, r) in rows.iter().enumerate() {
        write_weights(&mut stage, k + 1, &data.levels, &r.posterior_weights)?;
        let (mean, cm) = match &r.estimate {
            Some(e) => (e.mean, e.matrix),
            None => (Vector4::zeros(), nalgebra::Matrix4::identity()),
        };
        let mut m = Marginals::new(&mean, &cm);
        data.records
            .iter()
            .filter(|x| x.x_t >= r.threshold)
            .for_each(|x| m.push(x));
        m.write(&mut stage, k + 1, true)?;
    }
    let mut manifest = Manifest::new("ingest", cfg.seed, cfg, data.levels.clone(), upper)?;
    manifest.artifacts = stage.files.clone();
    manifest.artifacts.push(MANIFEST.to_string());
    stage.write(
        MANIFEST,
        &serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    let artifacts = stage.commit()?;
    Ok(IngestSummary {
        data,
        rows,
        upper_bound_before: upper,
        artifacts,
    })
}
