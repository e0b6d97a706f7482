//! Monte Carlo level/power studies, consistency trends and screening reports.
//!
//! Replication `i` uses the seed `derive_seed(master_seed, i)` for both its
//! warm start and its path, and results are reduced in index order, so a
//! study's output does not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::exprlang::{FunctionExpr, ParseError};
use crate::gof::{GofError, GofTest};
use crate::model::{DiffusionModel, EsReport, ModelError, RpReport};
use crate::nulldist::NullLaw;
use crate::simulate::{derive_seed, format_g17, simulate_stationary_path, SimulationError};
use crate::stationary::{EngineOptions, StationaryEngine, StationaryError};
use crate::statistic::ConditionC;

/// Condition-C probe grid: 401 points over `[-10, 10]`.
pub const PROBE_GRID: (f64, f64, usize) = (-10.0, 10.0, 401);
const WILSON_Z: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { key: String, line: usize },
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("key '{key}': cannot parse '{value}' as {expected}")]
    TypeMismatch {
        key: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("key '{key}': {message}")]
    Range { key: &'static str, message: String },
    #[error("key '{key}': {source}")]
    Expression {
        key: &'static str,
        #[source]
        source: ParseError,
    },
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("true model: {0}")]
    TrueModel(String),
    #[error(transparent)]
    Null(#[from] GofError),
    #[error("replication {index} (seed {seed}) failed: {message}")]
    Replication {
        index: usize,
        seed: u64,
        message: String,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ModelError> for StudyError {
    fn from(e: ModelError) -> Self {
        StudyError::TrueModel(e.to_string())
    }
}

impl From<StationaryError> for StudyError {
    fn from(e: StationaryError) -> Self {
        StudyError::TrueModel(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub true_drift: String,
    pub null_drift: String,
    pub sigma: String,
    pub horizon: f64,
    pub dt: f64,
    pub reps: usize,
    pub eps: f64,
    pub master_seed: u64,
    pub out_path: String,
    /// States at which `V_T(x)` is recorded for every replication.
    pub probes: Vec<f64>,
}

const KEYS: [&str; 10] = [
    "true_drift",
    "null_drift",
    "sigma",
    "T",
    "dt",
    "reps",
    "eps",
    "master_seed",
    "out_path",
    "probes",
];

impl StudyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.reps < 1 {
            return Err(ConfigError::Range {
                key: "reps",
                message: "must be at least 1".into(),
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::Range {
                key: "T",
                message: format!("must be positive, got {}", self.horizon),
            });
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(ConfigError::Range {
                key: "dt",
                message: format!("need 0 < dt <= T, got dt = {}", self.dt),
            });
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(ConfigError::Range {
                key: "eps",
                message: format!("need 0 < eps < 1, got {}", self.eps),
            });
        }
        for (key, src) in [
            ("true_drift", &self.true_drift),
            ("null_drift", &self.null_drift),
            ("sigma", &self.sigma),
        ] {
            FunctionExpr::parse(src).map_err(|source| ConfigError::Expression { key, source })?;
        }
        Ok(())
    }

    /// Serializes back to the `key = value` format.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "true_drift = \"{}\"", self.true_drift);
        let _ = writeln!(s, "null_drift = \"{}\"", self.null_drift);
        let _ = writeln!(s, "sigma = \"{}\"", self.sigma);
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "eps = {}", self.eps);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "out_path = \"{}\"", self.out_path);
        if !self.probes.is_empty() {
            let list: Vec<String> = self.probes.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(s, "probes = {}", list.join(","));
        }
        s
    }

    /// Per-replication CSV path next to `out_path`.
    pub fn replications_path(&self) -> PathBuf {
        let p = PathBuf::from(&self.out_path);
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        p.with_file_name(format!("{stem}_replications.csv"))
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2
        && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\'')))
    {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

/// Parses the flat `key = value` format: `#` starts a comment, string values
/// may be quoted, unknown keys are errors.
pub fn parse_config(text: &str) -> Result<StudyConfig, ConfigError> {
    let mut map: BTreeMap<&'static str, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: line_no });
        };
        let k = k.trim();
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(ConfigError::UnknownKey {
                key: k.to_string(),
                line: line_no,
            });
        };
        if map.insert(key, unquote(v).to_string()).is_some() {
            return Err(ConfigError::DuplicateKey {
                key: k.to_string(),
                line: line_no,
            });
        }
    }
    let get = |key: &'static str| map.get(key).cloned().ok_or(ConfigError::MissingKey(key));
    fn num<V: std::str::FromStr>(
        key: &'static str,
        v: String,
        expected: &'static str,
    ) -> Result<V, ConfigError> {
        v.trim().parse().map_err(|_| ConfigError::TypeMismatch {
            key,
            value: v,
            expected,
        })
    }
    let probes = match map.get("probes") {
        Some(list) if !list.trim().is_empty() => list
            .split(',')
            .map(|p| num::<f64>("probes", p.to_string(), "a comma-separated list of reals"))
            .collect::<Result<Vec<_>, _>>()?,
        _ => Vec::new(),
    };
    let cfg = StudyConfig {
        true_drift: get("true_drift")?,
        null_drift: get("null_drift")?,
        sigma: get("sigma")?,
        horizon: num("T", get("T")?, "a real")?,
        dt: num("dt", get("dt")?, "a real")?,
        reps: num("reps", get("reps")?, "a positive integer")?,
        eps: num("eps", get("eps")?, "a real")?,
        master_seed: num(
            "master_seed",
            get("master_seed")?,
            "an unsigned 64-bit integer",
        )?,
        out_path: get("out_path")?,
        probes,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Removes a trailing `#` comment that is not inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, c) in line.char_indices() {
        match (quote, c) {
            (None, '#') => return &line[..i],
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            _ => {}
        }
    }
    line
}

pub fn load_config(path: impl AsRef<FsPath>) -> Result<StudyConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub statistic: f64,
    pub normalized: f64,
    pub reject: bool,
    pub arg_sup: f64,
    /// `V_T` at the configured probe states.
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rejections: usize,
    pub reps: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean of the normalized statistic over replications.
    pub mean_statistic: f64,
    /// `sup |A(x)|` over the probe grid; NaN when the true and null drifts coincide.
    pub condition_c_sup: f64,
}

impl StudyResult {
    pub const CSV_HEADER: &'static str =
        "rejections,reps,rate,ci_low,ci_high,mean_statistic,condition_c_sup";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.rejections,
            self.reps,
            format_g17(self.rate),
            format_g17(self.ci_low),
            format_g17(self.ci_high),
            format_g17(self.mean_statistic),
            format_g17(self.condition_c_sup)
        )
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub result: StudyResult,
    pub replications: Vec<Replication>,
    pub critical: f64,
    pub g_inf: f64,
    pub probes: Vec<f64>,
}

impl StudyOutcome {
    /// Rejection rate of the same replications at another level.
    pub fn rejection_rate_at(&self, eps: f64) -> Result<f64, StudyError> {
        let c = NullLaw::<f64>::default()
            .critical_value(eps)
            .map_err(GofError::from)?;
        let n = self
            .replications
            .iter()
            .filter(|r| r.normalized > c)
            .count();
        Ok(n as f64 / self.replications.len() as f64)
    }

    pub fn replications_csv(&self) -> String {
        let mut s = String::from("index,seed,statistic,normalized,reject,arg_sup");
        for p in &self.probes {
            let _ = write!(s, ",v_at_{}", format_g17(*p));
        }
        s.push('\n');
        for r in &self.replications {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.index,
                r.seed,
                format_g17(r.statistic),
                format_g17(r.normalized),
                u8::from(r.reject),
                format_g17(r.arg_sup)
            );
            for v in &r.probes {
                let _ = write!(s, ",{}", format_g17(*v));
            }
            s.push('\n');
        }
        s
    }

    /// Writes the summary to `cfg.out_path` and the replications next to it.
    pub fn write(&self, cfg: &StudyConfig) -> std::io::Result<()> {
        std::fs::write(&cfg.out_path, self.result.to_csv())?;
        std::fs::write(cfg.replications_path(), self.replications_csv())
    }
}

fn parse_expr(key: &'static str, src: &str) -> Result<FunctionExpr, ConfigError> {
    FunctionExpr::parse(src).map_err(|source| ConfigError::Expression { key, source })
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, StudyError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| StudyError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

struct Prepared {
    true_engine: StationaryEngine<f64>,
    test: GofTest<f64>,
    null_drift: FunctionExpr,
    same: bool,
}

fn prepare(cfg: &StudyConfig) -> Result<Prepared, StudyError> {
    cfg.validate()?;
    let true_drift = parse_expr("true_drift", &cfg.true_drift)?;
    let null_drift = parse_expr("null_drift", &cfg.null_drift)?;
    let sigma = parse_expr("sigma", &cfg.sigma)?;
    let same = true_drift.same_function(&null_drift);
    let test = GofTest::new(null_drift.clone(), sigma.clone(), EngineOptions::default())?;
    let true_engine = if same {
        test.engine().clone()
    } else {
        let model = DiffusionModel::new(true_drift, sigma)?;
        let rp = model.check_condition_rp(&EngineOptions::default());
        if !rp.ok {
            return Err(StudyError::TrueModel(
                rp.diagnostic
                    .unwrap_or_else(|| "recurrence screen failed".into()),
            ));
        }
        StationaryEngine::with_defaults(model)?
    };
    Ok(Prepared {
        true_engine,
        test,
        null_drift,
        same,
    })
}

fn replicate(
    prep: &Prepared,
    cfg: &StudyConfig,
    horizon: f64,
    critical: f64,
) -> Result<Vec<Replication>, StudyError> {
    (0..cfg.reps)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(cfg.master_seed, index as u64);
            let fail = |message: String| StudyError::Replication {
                index,
                seed,
                message,
            };
            let path = simulate_stationary_path(&prep.true_engine, horizon, cfg.dt, seed)
                .map_err(|e: SimulationError| fail(e.to_string()))?;
            let v = prep
                .test
                .score_process(&path)
                .map_err(|e| fail(e.to_string()))?;
            let r = prep.test.decide(&v, &path, cfg.eps, critical);
            Ok(Replication {
                index,
                seed,
                statistic: r.statistic,
                normalized: r.normalized,
                reject: r.reject,
                arg_sup: r.arg_sup,
                probes: cfg.probes.iter().map(|&x| v.eval(x)).collect(),
            })
        })
        .collect()
}

fn ordered_mean(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var.sqrt(), n)
}

/// Runs `cfg.reps` warm-started replications under the true drift and tests
/// each against the null drift.
pub fn run_study(cfg: &StudyConfig, workers: usize) -> Result<StudyOutcome, StudyError> {
    let prep = prepare(cfg)?;
    let critical = prep.test.critical_value(cfg.eps)?;
    let replications = with_pool(workers, || replicate(&prep, cfg, cfg.horizon, critical))??;
    let rejections = replications.iter().filter(|r| r.reject).count();
    let (ci_low, ci_high) = wilson_interval(rejections, cfg.reps);
    let (mean_statistic, _, _) = ordered_mean(replications.iter().map(|r| r.normalized));
    let condition_c_sup = if prep.same {
        f64::NAN
    } else {
        condition_c_sup(&prep.true_engine, &prep.null_drift)
    };
    Ok(StudyOutcome {
        result: StudyResult {
            rejections,
            reps: cfg.reps,
            rate: rejections as f64 / cfg.reps as f64,
            ci_low,
            ci_high,
            mean_statistic,
            condition_c_sup,
        },
        replications,
        critical,
        g_inf: prep.test.g_inf(),
        probes: cfg.probes.clone(),
    })
}

/// `sup |A(x)|` over [`PROBE_GRID`].
pub fn condition_c_sup(true_engine: &StationaryEngine<f64>, null_drift: &FunctionExpr) -> f64 {
    let (lo, hi, n) = PROBE_GRID;
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    ConditionC::new(true_engine, null_drift).sup_abs_on(&grid).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub horizon: f64,
    pub mean_normalized: f64,
    pub sd_normalized: f64,
    pub rejection_rate: f64,
    pub reps: usize,
}

/// Mean normalized statistic at each horizon (same seeds at every horizon).
pub fn consistency_trend(
    cfg: &StudyConfig,
    horizons: &[f64],
    workers: usize,
) -> Result<Vec<TrendRow>, StudyError> {
    let prep = prepare(cfg)?;
    let critical = prep.test.critical_value(cfg.eps)?;
    horizons
        .iter()
        .map(|&horizon| {
            let probe = StudyConfig {
                horizon,
                ..cfg.clone()
            };
            probe.validate()?;
            let reps = with_pool(workers, || replicate(&prep, &probe, horizon, critical))??;
            let (mean, sd, n) = ordered_mean(reps.iter().map(|r| r.normalized));
            let rejected = reps.iter().filter(|r| r.reject).count();
            Ok(TrendRow {
                horizon,
                mean_normalized: mean,
                sd_normalized: sd,
                rejection_rate: rejected as f64 / n as f64,
                reps: n,
            })
        })
        .collect()
}

pub fn trend_csv(rows: &[TrendRow]) -> String {
    let mut s = String::from("T,mean_normalized,sd_normalized,rejection_rate,reps\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            format_g17(r.horizon),
            format_g17(r.mean_normalized),
            format_g17(r.sd_normalized),
            format_g17(r.rejection_rate),
            r.reps
        );
    }
    s
}

/// Growth, recurrence and (optionally) separation screens for one model.
#[derive(Debug, Clone)]
pub struct ScreenReport {
    pub es: EsReport<f64>,
    pub rp: RpReport<f64>,
    pub g_inf_sq: Option<f64>,
    /// `(sup |A(x)|, location)` against the alternative drift.
    pub condition_c: Option<(f64, f64)>,
}

impl ScreenReport {
    pub fn ok(&self) -> bool {
        self.es.ok && self.rp.ok && self.condition_c.is_none_or(|(s, _)| s > 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,value\n");
        let g = |v: f64| format_g17(v);
        let _ = writeln!(s, "es_ok,{}", u8::from(self.es.ok));
        let _ = writeln!(s, "es_witness_a,{}", g(self.es.witness_a));
        let _ = writeln!(s, "es_growth_warning,{}", u8::from(self.es.growth_warning));
        let _ = writeln!(
            s,
            "es_violation_x,{}",
            self.es.violation_x.map_or(String::new(), g)
        );
        let _ = writeln!(s, "sigma_sq_max,{}", g(self.es.sigma_sq_max));
        let _ = writeln!(s, "rp_ok,{}", u8::from(self.rp.ok));
        let _ = writeln!(s, "p_left,{}", g(self.rp.p_left));
        let _ = writeln!(s, "p_right,{}", g(self.rp.p_right));
        let _ = writeln!(s, "m_total,{}", g(self.rp.m_total));
        if let Some(v) = self.g_inf_sq {
            let _ = writeln!(s, "g_inf_sq,{}", g(v));
        }
        if let Some(d) = &self.rp.diagnostic {
            let _ = writeln!(s, "rp_diagnostic,\"{}\"", d.replace('"', "'"));
        }
        if let Some((sup, at)) = self.condition_c {
            let _ = writeln!(s, "condition_c_sup,{}", g(sup));
            let _ = writeln!(s, "condition_c_argsup,{}", g(at));
        }
        s
    }
}

/// Screens `(drift, sigma)`; with `alternative`, also evaluates condition C
/// for `drift` as the null against `alternative` as the truth.
pub fn screen(
    drift: &str,
    sigma: &str,
    alternative: Option<&str>,
) -> Result<ScreenReport, StudyError> {
    let model = DiffusionModel::<f64>::from_sources(drift, sigma)?;
    let es = model
        .check_condition_es(
            crate::model::DEFAULT_SCREEN_HALF_WIDTH,
            crate::model::DEFAULT_SCREEN_POINTS,
        )
        .expect("default grid is valid");
    let opts = EngineOptions::default();
    let engine = StationaryEngine::new(model.clone(), opts.clone());
    let (rp, g_inf_sq) = match &engine {
        Ok(e) => (e.check_condition_rp(), Some(e.g_inf_sq())),
        Err(_) => (model.check_condition_rp(&opts), None),
    };
    let condition_c = match alternative {
        Some(alt) => {
            let alt_model = model.with_drift(parse_expr("alternative", alt)?)?;
            let alt_engine = StationaryEngine::with_defaults(alt_model)?;
            let (lo, hi, n) = PROBE_GRID;
            let grid: Vec<f64> = (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect();
            let sup = ConditionC::new(&alt_engine, model.drift()).sup_abs_on(&grid);
            Some(sup)
        }
        None => None,
    };
    Ok(ScreenReport {
        es,
        rp,
        g_inf_sq,
        condition_c,
    })
}
