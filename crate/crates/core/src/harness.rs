//! Experiment runner behind the `blpp` binary.
//!
//! A run takes an [`ExperimentConfig`] and produces one [`Record`]: the resolved
//! config, a version string, result rows and pass/fail verdicts. Records are
//! written one JSON object per line; result rows also go to CSV.

use crate::continuum_kernels::{
    heat_kernel, k_extended, s_hypo, s_mt, s_mt_hermite, Composition, ContinuumContour, ContinuumIC, HittingConfig,
    KernelSpec, LineContour,
};
use crate::contour::Contour;
use crate::discrete_kernels::{johansson_transition, k_geometric, q_pow, r_pm, s_bar, s_star, schutz_transition};
use crate::discrete_model::{embed_continuum_ic, DiscreteIC, EventSpec, GeomParams};
use crate::error::{Error, Result};
use crate::fredholm::{solve_continuum, solve_continuum_fixed, solve_discrete, ContinuumQuery, ContinuumSolverConfig, DiscreteQuery, WindowConfig};
use crate::scaling::{lemma_check, product_check, standard_probes, summarize, LemmaOptions, ScalingRow, StarScaling};
use crate::simulate::{
    blpp_mc_coupled, blpp_mc_direct, empirical_cdf, empirical_joint, glpp_event_probability, gue_lambda_max, DirectConfig,
    MCEstimate,
};
use crate::special::normal_cdf;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// `<crate version>+<git describe>` of the build.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("BLPP_GIT_DESCRIBE"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    KernelEval,
    FredholmDiscrete,
    FredholmContinuum,
    McBlpp,
    McGlpp,
    GueOracle,
    LemmaCheck,
    ProductCheck,
    ValidateAll,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::KernelEval => "kernel-eval",
            Experiment::FredholmDiscrete => "fredholm-discrete",
            Experiment::FredholmContinuum => "fredholm-continuum",
            Experiment::McBlpp => "mc-blpp",
            Experiment::McGlpp => "mc-glpp",
            Experiment::GueOracle => "gue-oracle",
            Experiment::LemmaCheck => "lemma-check",
            Experiment::ProductCheck => "product-check",
            Experiment::ValidateAll => "validate-all",
        }
    }
}

/// Initial data. Continuum kinds are embedded at `scale` when a discrete model
/// needs them; the narrow wedge then becomes step data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IcSpec {
    NarrowWedge,
    Flat { level: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    Step { sites: usize },
    Discrete { values: Vec<i64> },
}

impl IcSpec {
    pub fn continuum(&self) -> Result<ContinuumIC> {
        let ic = match self {
            IcSpec::NarrowWedge => ContinuumIC::NarrowWedge,
            IcSpec::Flat { level } => ContinuumIC::Flat(*level),
            IcSpec::PiecewiseLinear { knots } => ContinuumIC::PiecewiseLinear(knots.clone()),
            _ => return Err(Error::Config("a Brownian experiment needs narrow-wedge, flat or piecewise-linear data".into())),
        };
        ic.validate()?;
        Ok(ic)
    }

    pub fn discrete(&self, scale: usize, params: &GeomParams) -> Result<DiscreteIC> {
        match self {
            IcSpec::Step { sites } => Ok(DiscreteIC::step(*sites)),
            IcSpec::Discrete { values } => DiscreteIC::new(values.clone()),
            IcSpec::NarrowWedge => Ok(DiscreteIC::step(scale)),
            other => embed_continuum_ic(&other.continuum()?, scale, params),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `heat(t - s, x, y)`.
    Heat,
    /// `S_{±m, t-s}(x, y)`.
    SMt,
    /// `S^{hypo(X)}_{m,t}(x, y)`.
    Hypo,
    /// Brownian extended kernel `K(s, x; t, y)`.
    Extended,
    /// Geometric kernel `K(n1, z1; n2, z2)`, points read as integers.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McBackend {
    Direct,
    Coupled,
}

/// Everything a run depends on. Unset keys take the defaults below and the
/// record echoes the resolved values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub q: f64,
    pub theta: f64,
    pub m: u32,
    /// `N`: embedding scale and discrete horizon.
    pub scale: usize,
    pub ic: IcSpec,
    /// Brownian query: times with thresholds. One time and several thresholds
    /// means a one-point scan; equal lengths mean one joint query.
    pub times: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Geometric query: columns `n_i` with levels `a_i` for `G(m, n_i) < a_i`.
    pub columns: Vec<usize>,
    pub levels: Vec<i64>,
    /// Fixed Nyström node count per slice; refinement when absent.
    pub nodes: Option<usize>,
    pub tolerance: f64,
    pub samples: usize,
    pub mesh: f64,
    pub backend: McBackend,
    pub kernel: KernelKind,
    pub negative_index: bool,
    /// Kernel arguments `(s, x, t, y)`.
    pub points: Vec<[f64; 4]>,
    pub lemmas: Vec<u8>,
    pub scales: Vec<usize>,
    pub star_scaling: StarScaling,
    pub quick: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            q: 0.5,
            theta: 0.5,
            m: 1,
            scale: 100,
            ic: IcSpec::NarrowWedge,
            times: vec![1.0],
            thresholds: vec![0.0],
            columns: vec![4],
            levels: vec![8],
            nodes: None,
            tolerance: 1e-4,
            samples: 100_000,
            mesh: 1e-3,
            backend: McBackend::Direct,
            kernel: KernelKind::Extended,
            negative_index: false,
            points: vec![[0.5, 0.0, 1.0, 0.0]],
            lemmas: vec![1, 2, 3, 4],
            scales: vec![100, 400, 1600],
            star_scaling: StarScaling::TwoN,
            quick: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn params(&self) -> Result<GeomParams> {
        GeomParams::new(self.q, self.theta)
    }

    /// `(times, thresholds)` of each query the config asks for.
    fn queries(&self) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        match (self.times.len(), self.thresholds.len()) {
            (0, _) | (_, 0) => Ok(Vec::new()),
            (1, k) if k > 1 => Ok(self.thresholds.iter().map(|&a| (self.times.clone(), vec![a])).collect()),
            (a, b) if a == b => Ok(vec![(self.times.clone(), self.thresholds.clone())]),
            (a, b) => Err(Error::Config(format!("{a} times do not match {b} thresholds"))),
        }
    }

    fn discrete_query(&self) -> Result<Vec<(usize, i64)>> {
        if self.columns.len() != self.levels.len() {
            return Err(Error::Config(format!(
                "{} columns do not match {} levels",
                self.columns.len(),
                self.levels.len()
            )));
        }
        Ok(self.columns.iter().copied().zip(self.levels.iter().copied()).collect())
    }
}

/// One computed quantity. Probabilities are labelled by their query so that
/// records from different backends can be matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub times: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub value: f64,
    pub stderr: f64,
    /// 99% DKW half-width for Monte Carlo frequencies.
    pub band: Option<f64>,
    pub certificate: Option<f64>,
    pub extra: BTreeMap<String, f64>,
}

impl ResultRow {
    fn new(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            times: Vec::new(),
            thresholds: Vec::new(),
            value,
            stderr: 0.0,
            band: None,
            certificate: None,
            extra: BTreeMap::new(),
        }
    }

    fn probability(times: &[f64], thresholds: &[f64], value: f64) -> Self {
        Self {
            times: times.to_vec(),
            thresholds: thresholds.to_vec(),
            ..Self::new("probability", value)
        }
    }

    fn from_estimate(times: &[f64], thresholds: &[f64], e: &MCEstimate) -> Self {
        Self {
            stderr: e.stderr,
            band: Some(e.dkw_band),
            ..Self::probability(times, thresholds, e.value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Wall-clock data; the only part of a record that changes between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub unix_seconds: u64,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: Experiment,
    pub version: String,
    pub seed: u64,
    /// `"probability"` for determinant and Monte Carlo rows, otherwise the table kind.
    pub quantity: String,
    pub m: u32,
    pub config: ExperimentConfig,
    pub results: Vec<ResultRow>,
    pub verdicts: Vec<Verdict>,
    pub timing: Timing,
}

impl Record {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Run one experiment. `experiment` overrides the config's own field, and the
/// two must agree when both are set.
pub fn run(experiment: Experiment, config: &ExperimentConfig) -> Result<Record> {
    if let Some(e) = config.experiment {
        if e != experiment {
            return Err(Error::Config(format!(
                "config is for {} but {} was requested",
                e.name(),
                experiment.name()
            )));
        }
    }
    let mut config = config.clone();
    config.experiment = Some(experiment);
    let start = Instant::now();
    let (quantity, results, verdicts) = match experiment {
        Experiment::KernelEval => ("kernel", kernel_eval(&config)?, Vec::new()),
        Experiment::FredholmDiscrete => ("probability", fredholm_discrete(&config)?, Vec::new()),
        Experiment::FredholmContinuum => ("probability", fredholm_continuum(&config)?, Vec::new()),
        Experiment::McBlpp => ("probability", mc_blpp(&config)?, Vec::new()),
        Experiment::McGlpp => ("probability", mc_glpp(&config)?, Vec::new()),
        Experiment::GueOracle => ("probability", gue_oracle(&config)?, Vec::new()),
        Experiment::LemmaCheck => {
            let (rows, verdicts) = lemma_tables(&config)?;
            ("scaling-error", rows, verdicts)
        }
        Experiment::ProductCheck => {
            let (rows, verdicts) = product_table(&config)?;
            ("scaling-error", rows, verdicts)
        }
        Experiment::ValidateAll => {
            let verdicts = validate_all(&config);
            let rows = verdicts
                .iter()
                .map(|v| ResultRow::new(v.name.clone(), if v.pass { 1.0 } else { 0.0 }))
                .collect();
            ("verdict", rows, verdicts)
        }
    };
    Ok(Record {
        experiment,
        version: VERSION.into(),
        seed: config.seed,
        quantity: quantity.into(),
        m: config.m,
        results,
        verdicts,
        timing: Timing {
            unix_seconds: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            runtime_seconds: start.elapsed().as_secs_f64(),
        },
        config,
    })
}

fn kernel_eval(c: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let params = c.params()?;
    let mut geometric_ic = None;
    c.points
        .iter()
        .map(|&[s, x, t, y]| {
            let mut row = ResultRow::new(format!("{:?}", c.kernel).to_lowercase(), 0.0);
            for (k, v) in [("s", s), ("x", x), ("t", t), ("y", y)] {
                row.extra.insert(k.into(), v);
            }
            match c.kernel {
                KernelKind::Heat => row.value = heat_kernel(t - s, x, y)?,
                KernelKind::SMt => {
                    let m = if c.negative_index { -(c.m as i64) } else { c.m as i64 };
                    row.value = s_mt(m, t - s, x, y, &ContinuumContour::Auto)?;
                }
                KernelKind::Hypo => {
                    let v = s_hypo(c.m, t, x, y, &c.ic.continuum()?, &hitting(c), c.seed)?;
                    row.value = v.value;
                    row.stderr = v.stderr;
                }
                KernelKind::Extended => {
                    let v = k_extended(s, x, t, y, c.m, &c.ic.continuum()?, &hitting(c), c.seed)?;
                    row.value = v.value;
                    row.stderr = v.stderr;
                }
                KernelKind::Geometric => {
                    if geometric_ic.is_none() {
                        geometric_ic = Some(c.ic.discrete(c.scale, &params)?);
                    }
                    let ic = geometric_ic.as_ref().expect("set above");
                    let ints = [s, x, t, y];
                    if ints.iter().any(|v| v.fract() != 0.0) || s < 1.0 || t < 1.0 {
                        return Err(Error::Config("geometric kernel points must be integers (n1, z1, n2, z2) with n >= 1".into()));
                    }
                    let v = k_geometric(s as usize, x as i64, t as usize, y as i64, c.m, ic, &params)?;
                    row.value = v.value;
                    row.certificate = Some(v.tail_bound);
                }
            }
            Ok(row)
        })
        .collect()
}

fn hitting(c: &ExperimentConfig) -> HittingConfig {
    HittingConfig {
        mesh: c.mesh,
        samples: c.samples,
        ..HittingConfig::default()
    }
}

fn solver(c: &ExperimentConfig) -> ContinuumSolverConfig {
    ContinuumSolverConfig {
        tolerance: c.tolerance,
        hitting: hitting(c),
        seed: c.seed,
        ..ContinuumSolverConfig::default()
    }
}

fn fredholm_discrete(c: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let params = c.params()?;
    let ic = c.ic.discrete(c.scale, &params)?;
    let pairs = c.discrete_query()?;
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let q = DiscreteQuery {
        m: c.m,
        pairs: pairs.iter().map(|&(n, a)| (n as i64, a)).collect(),
    };
    let v = solve_discrete(&q, &ic, &params, &WindowConfig::default())?;
    let mut row = discrete_row(&pairs, v.value);
    row.certificate = v.certificate;
    row.extra.insert("size".into(), v.size as f64);
    Ok(vec![row])
}

fn discrete_row(pairs: &[(usize, i64)], value: f64) -> ResultRow {
    let times: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
    let levels: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
    ResultRow::probability(&times, &levels, value)
}

fn fredholm_continuum(c: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let ic = c.ic.continuum()?;
    let cfg = solver(c);
    c.queries()?
        .into_iter()
        .map(|(times, thresholds)| {
            let q = ContinuumQuery {
                m: c.m,
                pairs: times.iter().copied().zip(thresholds.iter().copied()).collect(),
            };
            let v = match c.nodes {
                Some(n) => solve_continuum_fixed(&q, &ic, n, &cfg)?,
                None => solve_continuum(&q, &ic, &cfg)?.0,
            };
            let mut row = ResultRow::probability(&times, &thresholds, v.value);
            row.stderr = v.stderr;
            row.certificate = v.certificate;
            row.extra.insert("size".into(), v.size as f64);
            Ok(row)
        })
        .collect()
}

fn mc_blpp(c: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let ic = c.ic.continuum()?;
    let queries = c.queries()?;
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    let times = &queries[0].0;
    let samples = match c.backend {
        McBackend::Direct => {
            let cfg = DirectConfig {
                mesh: c.mesh,
                ..DirectConfig::default()
            };
            blpp_mc_direct(&ic, c.m, times, c.samples, &cfg, c.seed)?
        }
        McBackend::Coupled => blpp_mc_coupled(&ic, c.m, times, c.scale, &c.params()?, c.samples, c.seed)?,
    };
    queries
        .iter()
        .map(|(t, a)| Ok(ResultRow::from_estimate(t, a, &empirical_joint(&samples, a, c.seed)?)))
        .collect()
}

fn mc_glpp(c: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let params = c.params()?;
    let ic = c.ic.discrete(c.scale, &params)?;
    let pairs = c.discrete_query()?;
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let e = glpp_event_probability(&ic, c.m, &EventSpec::new(pairs.clone())?, &params, c.samples, c.seed)?;
    let row = discrete_row(&pairs, e.value);
    Ok(vec![ResultRow {
        stderr: e.stderr,
        band: Some(e.dkw_band),
        ..row
    }])
}

fn gue_oracle(c: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if c.times.iter().any(|&t| t != 1.0) {
        return Err(Error::Config("the GUE oracle describes the narrow wedge at t = 1 only".into()));
    }
    let lambda = gue_lambda_max(c.m as usize, c.samples, c.seed)?;
    let cdf = empirical_cdf(&lambda, &c.thresholds, c.seed)?;
    Ok(c.thresholds
        .iter()
        .zip(&cdf)
        .map(|(&a, e)| ResultRow::from_estimate(&[1.0], &[a], e))
        .collect())
}

fn scaling_rows(rows: &[ScalingRow]) -> Vec<ResultRow> {
    rows.iter()
        .map(|r| {
            let mut out = ResultRow::new(format!("check-{}", r.check), r.error);
            for (k, v) in [
                ("scale", r.scale as f64),
                ("m", r.probe.m as f64),
                ("s", r.s),
                ("t", r.t),
                ("x", r.x),
                ("y", r.y),
                ("discrete", r.discrete),
                ("continuum", r.continuum),
            ] {
                out.extra.insert(k.into(), v);
            }
            out
        })
        .collect()
}

fn rate_verdict(name: String, rows: &[ScalingRow], need_rate: bool) -> Result<(Verdict, ResultRow)> {
    let s = summarize(rows)?;
    let pass = s.decreasing && (!need_rate || (0.3..=0.7).contains(&s.rate));
    let detail = format!("max errors {:?} over N = {:?}, rate {:.3}", s.max_errors, s.scales, s.rate);
    let mut row = ResultRow::new(format!("{name}-rate"), s.rate);
    for (n, e) in s.scales.iter().zip(&s.max_errors) {
        row.extra.insert(format!("max_error_{n}"), *e);
    }
    Ok((Verdict::new(name, pass, detail), row))
}

fn lemma_tables(c: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<Verdict>)> {
    let opts = LemmaOptions {
        star_scaling: c.star_scaling,
        ic: match &c.ic {
            IcSpec::NarrowWedge => ContinuumIC::Flat(0.0),
            other => other.continuum()?,
        },
    };
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &lemma in &c.lemmas {
        let table = lemma_check(lemma, &c.scales, &standard_probes(lemma), &opts)?;
        let (v, summary) = rate_verdict(format!("check-{lemma}"), &table, c.scales.len() >= 2)?;
        rows.extend(scaling_rows(&table));
        rows.push(summary);
        verdicts.push(v);
    }
    Ok((rows, verdicts))
}

fn product_table(c: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<Verdict>)> {
    let table = product_check(&c.scales, &standard_probes(0), &c.ic.continuum()?)?;
    let (v, summary) = rate_verdict("product".into(), &table, false)?;
    let mut rows = scaling_rows(&table);
    rows.push(summary);
    Ok((rows, vec![v]))
}

/// Tolerances for [`compare`]: `|a - b| <= sigmas·√(se_a² + se_b²) + absolute`
/// plus any certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub sigmas: f64,
    pub absolute: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            sigmas: 3.0,
            absolute: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub times: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub allowed: f64,
    pub band_a: Option<f64>,
    pub band_b: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// No rows were compared, so the pass carries no information.
    pub vacuous: bool,
    pub diagnostics: Vec<String>,
    pub pass: bool,
}

/// Row-by-row comparison of two probability records.
pub fn compare(a: &Record, b: &Record, tol: &Tolerance) -> Result<CompareReport> {
    if a.quantity != "probability" || b.quantity != "probability" {
        return Err(Error::Incomparable(format!(
            "only probability records compare, got {} and {}",
            a.quantity, b.quantity
        )));
    }
    if a.results.len() != b.results.len() {
        return Err(Error::Incomparable(format!(
            "{} rows against {} rows",
            a.results.len(),
            b.results.len()
        )));
    }
    let mut diagnostics = Vec::new();
    if a.m != b.m {
        diagnostics.push(format!("records are for different m: {} and {}", a.m, b.m));
    }
    let mut rows = Vec::new();
    for (x, y) in a.results.iter().zip(&b.results) {
        if x.times != y.times || x.thresholds != y.thresholds {
            return Err(Error::Incomparable(format!(
                "query ({:?}, {:?}) against ({:?}, {:?})",
                x.times, x.thresholds, y.times, y.thresholds
            )));
        }
        let delta = (x.value - y.value).abs();
        let allowed = tol.sigmas * x.stderr.hypot(y.stderr)
            + tol.absolute
            + x.certificate.unwrap_or(0.0)
            + y.certificate.unwrap_or(0.0);
        let pass = delta <= allowed;
        if !pass {
            diagnostics.push(format!(
                "at times {:?}, thresholds {:?}: |{} - {}| = {delta:.3e} exceeds {allowed:.3e}",
                x.times, x.thresholds, x.value, y.value
            ));
        }
        rows.push(CompareRow {
            times: x.times.clone(),
            thresholds: x.thresholds.clone(),
            a: x.value,
            b: y.value,
            delta,
            allowed,
            band_a: x.band,
            band_b: y.band,
            pass,
        });
    }
    let vacuous = rows.is_empty();
    if vacuous {
        diagnostics.push("no thresholds to compare; the pass is vacuous".into());
    }
    let pass = a.m == b.m && rows.iter().all(|r| r.pass);
    Ok(CompareReport {
        rows,
        vacuous,
        diagnostics,
        pass,
    })
}

/// Read every record from a line-delimited file.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Append the record to `<dir>/<experiment>.jsonl` and write its rows to
/// `<dir>/<experiment>.csv`. Returns both paths.
pub fn write_outputs(record: &Record, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let name = record.experiment.name();
    let jsonl = dir.join(format!("{name}.jsonl"));
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&jsonl)?;
    writeln!(f, "{}", record.to_json_line()?)?;

    let csv_path = dir.join(format!("{name}.csv"));
    let keys: Vec<String> = {
        let mut k: Vec<String> = record.results.iter().flat_map(|r| r.extra.keys().cloned()).collect();
        k.sort();
        k.dedup();
        k
    };
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Io(e.to_string()))?;
    let mut header = vec!["label", "times", "thresholds", "value", "stderr", "band", "certificate"];
    header.extend(keys.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &record.results {
        let mut line = vec![
            r.label.clone(),
            join(&r.times),
            join(&r.thresholds),
            r.value.to_string(),
            r.stderr.to_string(),
            opt(r.band),
            opt(r.certificate),
        ];
        line.extend(keys.iter().map(|k| opt(r.extra.get(k).copied())));
        w.write_record(&line).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok((jsonl, csv_path))
}

/// Property suites at desk scale; `quick` shrinks sample counts.
pub fn validate_all(c: &ExperimentConfig) -> Vec<Verdict> {
    type Suite = fn(&ExperimentConfig) -> Result<Verdict>;
    let suites: [(&str, Suite); 10] = [
        ("schutz-equals-johansson", suite_schutz),
        ("transition-normalised", suite_normalised),
        ("operator-relations", suite_relations),
        ("continuum-identities", suite_continuum),
        ("gaussian-oracles", suite_oracles),
        ("gue-vs-determinant", suite_gue),
        ("discrete-vs-monte-carlo", suite_discrete_mc),
        ("scaling-rates", suite_scaling),
        ("determinism-and-bounds", suite_determinism),
        ("flat-multi-time-law", suite_flat_multi_time),
    ];
    suites
        .iter()
        .map(|(name, f)| match f(c) {
            Ok(v) => v,
            Err(e) => Verdict::new(*name, false, format!("error: {e}")),
        })
        .collect()
}

fn suite_schutz(c: &ExperimentConfig) -> Result<Verdict> {
    let mut rng = crate::rng::Rng::seed_from_u64(c.seed);
    let count = if c.quick { 30 } else { 100 };
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(1..=4usize);
        let m = rng.random_range(1..=3u32);
        let mut x = vec![rng.random_range(-2..=2i64)];
        for _ in 1..n {
            let last = x[x.len() - 1];
            x.push(last + rng.random_range(0..=2));
        }
        let mut y: Vec<i64> = x.iter().map(|v| v + rng.random_range(0..=4)).collect();
        for j in 1..n {
            y[j] = y[j].max(y[j - 1]);
        }
        let (x, y) = (DiscreteIC::new(x)?, DiscreteIC::new(y)?);
        let a = schutz_transition(&x, &y, m, 0.5, &Contour::Auto)?;
        let b = johansson_transition(&x, &y, m, 0.5)?;
        worst = worst.max((a - b).abs());
    }
    Ok(Verdict::new(
        "schutz-equals-johansson",
        worst < 1e-10,
        format!("{count} instances, worst difference {worst:.2e}"),
    ))
}

fn suite_normalised(_: &ExperimentConfig) -> Result<Verdict> {
    let x = DiscreteIC::new(vec![0, 1])?;
    let mut total = 0.0;
    for y1 in 0..80 {
        for y2 in y1.max(1)..80 {
            total += johansson_transition(&x, &DiscreteIC::new(vec![y1, y2])?, 2, 0.5)?;
        }
    }
    Ok(Verdict::new(
        "transition-normalised",
        (total - 1.0).abs() < 1e-8,
        format!("two sites, two steps: total mass {total:.12}"),
    ))
}

fn suite_relations(_: &ExperimentConfig) -> Result<Verdict> {
    // Q^{-n} is supported on [-n, 0] and R_{-m} on [-m, 0], so both relations are finite sums
    let p = GeomParams::new(0.4, 0.6)?;
    let auto = Contour::Auto;
    let mut worst = 0.0f64;
    for m in 0..=3i64 {
        for n in 0..=3i64 {
            for d in [-9i64, -4, -1, 0, 2] {
                let mut sum = 0.0;
                for k in -n..=0 {
                    sum += q_pow(-n, k, 0, p.theta, &auto)? * r_pm(m, d - k, 0, &p, &auto)?;
                }
                worst = worst.max((p.alpha() * sum - s_star(m, n, d, 0, &p, &auto)?).abs());
                let mut sum = 0.0;
                for k in -m..=0 {
                    sum += s_bar(0, n, d - k, 0, &p, &auto)? * r_pm(-m, k, 0, &p, &auto)?;
                }
                worst = worst.max((sum - s_bar(m, n, d, 0, &p, &auto)?).abs());
            }
        }
    }
    Ok(Verdict::new("operator-relations", worst < 1e-8, format!("worst residual {worst:.2e}")))
}

fn suite_continuum(_: &ExperimentConfig) -> Result<Verdict> {
    let mut heat = 0.0f64;
    let mut contour = 0.0f64;
    for (t, x, y) in [(0.3, 0.1, -0.4), (1.0, 0.0, 0.7), (2.5, -1.0, 1.5)] {
        heat = heat.max((s_mt(0, t, x, y, &ContinuumContour::Auto)? - heat_kernel(t, x, y)?).abs());
        for m in 0..=4 {
            let line = s_mt(m, t, x, y, &ContinuumContour::Line(LineContour::default()))?;
            contour = contour.max((line - s_mt_hermite(m, t, x, y)?).abs());
        }
    }
    let comp = Composition::new(KernelSpec::S { m: 2, t: 0.4 }, KernelSpec::S { m: -1, t: 0.5 }, None, 64)?;
    let semigroup = (comp.eval(0.2, -0.3)? - s_mt_hermite(1, 0.9, 0.2, -0.3)?).abs();
    let pass = heat < 1e-10 && contour < 1e-9 && semigroup < 1e-6;
    Ok(Verdict::new(
        "continuum-identities",
        pass,
        format!("heat {heat:.1e}, contour vs Hermite {contour:.1e}, semigroup {semigroup:.1e}"),
    ))
}

fn suite_oracles(_: &ExperimentConfig) -> Result<Verdict> {
    let cfg = ContinuumSolverConfig::default();
    let one = |ic: ContinuumIC, a: f64| -> Result<f64> {
        Ok(solve_continuum(&ContinuumQuery { m: 1, pairs: vec![(1.0, a)] }, &ic, &cfg)?.0.value)
    };
    let wedge = one(ContinuumIC::NarrowWedge, 0.0)?;
    let flat0 = one(ContinuumIC::Flat(0.0), 0.0)?;
    let flat1 = one(ContinuumIC::Flat(0.0), 1.0)?;
    let exact1 = 2.0 * normal_cdf(1.0) - 1.0;
    let pass = (wedge - 0.5).abs() < 2e-3 && flat0.abs() < 1e-2 && (flat1 - exact1).abs() < 1e-2;
    Ok(Verdict::new(
        "gaussian-oracles",
        pass,
        format!("wedge {wedge:.6} (0.5), flat {flat0:.6} (0), {flat1:.6} ({exact1:.6})"),
    ))
}

fn suite_gue(c: &ExperimentConfig) -> Result<Verdict> {
    let samples = if c.quick { 20_000 } else { 200_000 };
    let thresholds = [-0.5, 0.5, 1.0, 1.5, 2.5];
    let lambda = gue_lambda_max(2, samples, c.seed)?;
    let cdf = empirical_cdf(&lambda, &thresholds, c.seed)?;
    let cfg = ContinuumSolverConfig::default();
    let mut worst = 0.0f64;
    for (&a, e) in thresholds.iter().zip(&cdf) {
        let v = solve_continuum(&ContinuumQuery { m: 2, pairs: vec![(1.0, a)] }, &ContinuumIC::NarrowWedge, &cfg)?.0;
        let z = (v.value - e.value).abs() / (e.stderr.max(1e-12) + v.certificate.unwrap_or(0.0));
        worst = worst.max(z);
    }
    Ok(Verdict::new(
        "gue-vs-determinant",
        worst < 3.0,
        format!("m = 2, {samples} matrices, worst deviation {worst:.2} standard errors"),
    ))
}

fn suite_discrete_mc(c: &ExperimentConfig) -> Result<Verdict> {
    let samples = if c.quick { 40_000 } else { 400_000 };
    let p = GeomParams::half();
    let ic = DiscreteIC::step(6);
    let mut worst = 0.0f64;
    for (m, n, a) in [(2u32, 3usize, 6i64), (3, 6, 10), (3, 2, 5)] {
        let det = solve_discrete(&DiscreteQuery { m, pairs: vec![(n as i64, a)] }, &ic, &p, &WindowConfig::default())?;
        let mc = glpp_event_probability(&ic, m, &EventSpec::new(vec![(n, a)])?, &p, samples, c.seed)?;
        worst = worst.max((det.value - mc.value).abs() / mc.stderr.max(1e-12));
    }
    Ok(Verdict::new(
        "discrete-vs-monte-carlo",
        worst < 3.0,
        format!("step data, {samples} samples, worst deviation {worst:.2} standard errors"),
    ))
}

fn suite_scaling(_: &ExperimentConfig) -> Result<Verdict> {
    let scales = [100, 400, 1600];
    let mut details = Vec::new();
    let mut pass = true;
    for lemma in 1..=4u8 {
        let rows = lemma_check(lemma, &scales, &standard_probes(lemma), &LemmaOptions::default())?;
        let s = summarize(&rows)?;
        pass &= s.decreasing && (0.3..=0.7).contains(&s.rate);
        details.push(format!("check {lemma} rate {:.2}", s.rate));
    }
    let product = summarize(&product_check(&scales, &standard_probes(0), &ContinuumIC::NarrowWedge)?)?;
    pass &= product.decreasing;
    details.push(format!("product rate {:.2}", product.rate));
    Ok(Verdict::new("scaling-rates", pass, details.join(", ")))
}

fn suite_determinism(c: &ExperimentConfig) -> Result<Verdict> {
    let cfg = ContinuumSolverConfig::default();
    // values and certificates from the refining solver, solved twice
    let scan = |ic: &ContinuumIC, pairs: &dyn Fn(f64) -> Vec<(f64, f64)>| -> Result<(Vec<(f64, f64)>, bool)> {
        let mut values = Vec::new();
        let mut repeatable = true;
        for a in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let q = ContinuumQuery { m: 2, pairs: pairs(a) };
            let v = solve_continuum(&q, ic, &cfg)?.0;
            repeatable &= v == solve_continuum(&q, ic, &cfg)?.0;
            values.push((v.value, v.certificate.unwrap_or(0.0)));
        }
        Ok((values, repeatable))
    };
    let (wedge, r1) = scan(&ContinuumIC::NarrowWedge, &|a| vec![(0.5, a), (1.0, a + 0.3)])?;
    let (flat, r2) = scan(&ContinuumIC::Flat(0.3), &|a| vec![(1.0, a)])?;
    let ordered = |v: &[(f64, f64)]| {
        v.iter().all(|&(x, c)| x >= -c - 1e-12 && x <= 1.0 + c + 1e-12)
            && v.windows(2).all(|w| w[1].0 >= w[0].0 - w[0].1 - w[1].1 - 1e-12)
    };
    let show = |v: &[(f64, f64)]| v.iter().map(|p| format!("{:.6}", p.0)).collect::<Vec<_>>().join(" ");
    let small = ExperimentConfig {
        samples: 2000,
        mesh: 1e-2,
        seed: c.seed,
        ..ExperimentConfig::default()
    };
    let mc_repeatable = mc_blpp(&small)? == mc_blpp(&small)?;
    Ok(Verdict::new(
        "determinism-and-bounds",
        r1 && r2 && mc_repeatable && ordered(&wedge) && ordered(&flat),
        format!(
            "repeatable {}, wedge two-time [{}], flat one-time [{}]",
            r1 && r2 && mc_repeatable,
            show(&wedge),
            show(&flat)
        ),
    ))
}

/// `P(R(t1) <= a1, R(t2) <= a2)` for reflected Brownian motion from 0.
fn reflected_joint(t1: f64, a1: f64, t2: f64, a2: f64) -> f64 {
    let d = (t2 - t1).sqrt();
    crate::quadrature::gauss_legendre(64, 0.0, a1).integrate(|x| {
        2.0 * crate::special::normal_pdf(x / t1.sqrt()) / t1.sqrt()
            * (normal_cdf((a2 - x) / d) - normal_cdf((-a2 - x) / d))
    })
}

/// With flat data and `m = 1` the last passage value is reflected Brownian motion,
/// so the two-time law is explicit.
fn suite_flat_multi_time(_: &ExperimentConfig) -> Result<Verdict> {
    let cfg = ContinuumSolverConfig::default();
    let mut worst = 0.0f64;
    let mut report = Vec::new();
    for (a1, a2) in [(0.5, 0.8), (1.0, 0.5), (1.5, 0.5), (0.2, 1.0)] {
        let q = ContinuumQuery { m: 1, pairs: vec![(0.5, a1), (1.0, a2)] };
        let v = solve_continuum(&q, &ContinuumIC::Flat(0.0), &cfg)?.0.value;
        let exact = reflected_joint(0.5, a1, 1.0, a2);
        worst = worst.max((v - exact).abs());
        report.push(format!("({a1}, {a2}): {v:.6} vs {exact:.6}"));
    }
    Ok(Verdict::new(
        "flat-multi-time-law",
        worst < 1e-3,
        format!("m = 1, times 0.5 and 1, determinant vs reflected Brownian motion: {}", report.join(", ")),
    ))
}
