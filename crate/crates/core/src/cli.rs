//! Command-line front end.
//!
//! Every parameter can come from a flag, from the TOML config file (one table
//! per subcommand, global keys at the top level) or from the built-in default,
//! in that order of precedence. Reports embed the resolved configuration.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::acceptance;
use crate::closed_form::{IndicatorLimit, Side};
use crate::error::{Error, Result};
use crate::exact::to_f64;
use crate::hypothesis::{
    calibrate_interval, coverage, optimize_ab, power_curve, size_power_simulation, symmetric_error_model,
    test_decision, test_statistic, wrong_acceptance, Calibration, TestSpec, Theta,
};
use crate::measures::{coin_example, validate_measure_set, AmbiguityInterval, MeasureSet, DEFAULT_TOL_VAR};
use crate::pde::{indicator_estimate, PdeGrid, DEFAULT_BANDWIDTHS, DEFAULT_EPSILONS};
use crate::quadrature::gaussian_expectation;
use crate::statistics::{path_trace, read_path_csv, SwitchRule, Variant};
use crate::terminal::TerminalFunction;
use crate::worst_case::{
    convergence_report, mc_policy_value, worst_case_value, DpConfig, DriftPolicy, LatticeModel, Sense, Statistic,
    DEFAULT_STATE_CAP,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "ambiclt", version, about = "Ambiguity-robust CLT toolkit")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Include wall-clock timings (makes payloads run-dependent).
    #[arg(long, global = true)]
    pub timings: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Declares the flag struct (every field optional) and the resolved
/// parameter struct (with defaults) for one subcommand.
macro_rules! params {
    (
        $flags:ident => $params:ident {
            $( $(#[$meta:meta])* $field:ident : $fty:ty => $pty:ty = $default:expr ),* $(,)?
        }
    ) => {
        #[derive(Args, Debug, Default, Serialize)]
        #[serde(rename_all = "kebab-case")]
        pub struct $flags {
            $(
                $(#[$meta])*
                #[arg(long, allow_hyphen_values = true)]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$fty>,
            )*
        }

        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        pub struct $params {
            $( pub $field: $pty, )*
        }

        impl Default for $params {
            fn default() -> Self {
                $params { $( $field: $default, )* }
            }
        }
    };
}

params!(ClosedFormFlags => ClosedFormParams {
    mu_lo: f64 => f64 = 0.0,
    mu_hi: f64 => f64 = 0.0,
    sigma: f64 => f64 = 1.0,
    a: f64 => f64 = -1.0,
    b: f64 => f64 = 1.0,
    /// upper, lower or both
    side: String => String = "upper".into(),
});

params!(PdeFlags => PdeParams {
    mu_lo: f64 => f64 = 0.0,
    mu_hi: f64 => f64 = 0.0,
    a: f64 => f64 = -1.0,
    b: f64 => f64 = 1.0,
    side: String => String = "upper".into(),
    x_min: f64 => f64 = -10.0,
    x_max: f64 => f64 = 10.0,
    nx: usize => usize = 2001,
    nt: usize => usize = 2000,
    #[arg(value_delimiter = ',')]
    epsilons: Vec<f64> => Vec<f64> = DEFAULT_EPSILONS.to_vec(),
    #[arg(value_delimiter = ',')]
    bandwidths: Vec<f64> => Vec<f64> = DEFAULT_BANDWIDTHS.to_vec(),
});

params!(DpFlags => DpParams {
    /// TOML file with a `laws` array; the coin example otherwise
    measures: String => Option<String> = None,
    #[arg(value_delimiter = ',')]
    coin: Vec<f64> => Vec<f64> = vec![0.6, 0.3],
    /// clt, special, tilde, deviation, lln or scaled
    theorem: String => String = "clt".into(),
    center: f64 => f64 = 0.0,
    alpha: f64 => f64 = 1.0,
    beta: f64 => f64 = 1.0,
    a: f64 => f64 = -1.0,
    b: f64 => f64 = 1.0,
    /// mollification bandwidth; sharp indicator when absent
    h: f64 => Option<f64> = None,
    #[arg(value_delimiter = ',')]
    n: Vec<usize> => Vec<usize> = vec![10],
    sense: String => String = "sup".into(),
    /// exact rational values (needs a rational lattice and a sharp indicator)
    #[arg(num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    exact: bool => bool = false,
    state_cap: usize => usize = DEFAULT_STATE_CAP,
    horizon_cap: usize => Option<usize> = None,
});

params!(McFlags => McParams {
    measures: String => Option<String> = None,
    #[arg(value_delimiter = ',')]
    coin: Vec<f64> => Vec<f64> = vec![0.6, 0.3],
    theorem: String => String = "special".into(),
    center: f64 => f64 = 0.0,
    alpha: f64 => f64 = 1.0,
    beta: f64 => f64 = 1.0,
    a: f64 => f64 = -1.0,
    b: f64 => f64 = 1.0,
    h: f64 => Option<f64> = None,
    n: usize => usize = 20,
    /// a built-in policy name, or `all`
    policy: String => String = "all".into(),
    paths: usize => usize = 10_000,
    /// also report the exact DP supremum
    #[arg(num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    dp_bound: bool => bool = true,
});

params!(LlnFlags => LlnParams {
    measures: String => Option<String> = None,
    #[arg(value_delimiter = ',')]
    coin: Vec<f64> => Vec<f64> = vec![0.6, 0.3],
    a: f64 => f64 = 0.1,
    b: f64 => f64 = 0.5,
    h: f64 => Option<f64> = None,
    #[arg(value_delimiter = ',')]
    n: Vec<usize> => Vec<usize> = vec![100, 200, 400],
});

params!(HyptestFlags => HyptestParams {
    kappa: f64 => f64 = 0.0,
    sigma: f64 => f64 = 1.0,
    alpha: f64 => f64 = 0.05,
    xi: f64 => f64 = 1.0,
    theta0: f64 => f64 = 0.0,
    n: usize => usize = 400,
    /// Monte Carlo paths for size and power; 0 skips the simulation
    paths: usize => usize = 10_000,
    /// CSV of observations to test
    data: String => Option<String> = None,
    /// fix the lower endpoint instead of a symmetric interval
    a_lower: f64 => Option<f64> = None,
    #[arg(value_delimiter = ',')]
    xis: Vec<f64> => Vec<f64> = (-8..=8).map(|i| i as f64 * 0.5).collect(),
    /// also solve for the interval minimizing wrong acceptance at xi
    #[arg(num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    optimize: bool => bool = false,
    policy: String => String = "threshold".into(),
});

params!(ReportFlags => ReportParams {
    /// acceptance or convergence
    suite: String => String = "acceptance".into(),
    #[arg(value_delimiter = ',')]
    criteria: Vec<u8> => Vec<u8> = Vec::new(),
    measures: String => Option<String> = None,
    #[arg(value_delimiter = ',')]
    coin: Vec<f64> => Vec<f64> = vec![0.6, 0.3],
    theorem: String => String = "special".into(),
    center: f64 => f64 = 0.0,
    alpha: f64 => f64 = 1.0,
    beta: f64 => f64 = 1.0,
    a: f64 => f64 = -1.0,
    b: f64 => f64 = 1.0,
    h: f64 => Option<f64> = None,
    #[arg(value_delimiter = ',')]
    n_list: Vec<usize> => Vec<usize> = vec![10, 20, 30, 40],
    sense: String => String = "sup".into(),
    /// limit to measure gaps against; derived from the theorem when absent
    reference: f64 => Option<f64> = None,
});

params!(TraceFlags => TraceParams {
    /// CSV of observations (first column)
    data: String => Option<String> = None,
    mu_lo: f64 => f64 = 0.0,
    mu_hi: f64 => f64 = 0.0,
    sigma: f64 => f64 = 1.0,
    center: f64 => f64 = 0.0,
    /// M or tilde
    variant: String => String = "M".into(),
    /// horizon; the number of observations when absent
    n: usize => Option<usize> = None,
});

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form limit of an interval indicator.
    ClosedForm(ClosedFormFlags),
    /// PDE estimate of the indicator limit with ε and bandwidth extrapolation.
    Pde(PdeFlags),
    /// Exact finite-n worst case by backward dynamic programming.
    Dp(DpFlags),
    /// Monte Carlo values of drift policies.
    Mc(McFlags),
    /// Law of large numbers: worst case of the sample mean.
    Lln(LlnFlags),
    /// Calibrate, evaluate and simulate the robust location test.
    Hyptest(HyptestFlags),
    /// Acceptance suite or convergence table.
    Report(ReportFlags),
    /// Step-by-step statistic along an observed path.
    Trace(TraceFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ClosedForm(_) => "closed-form",
            Command::Pde(_) => "pde",
            Command::Dp(_) => "dp",
            Command::Mc(_) => "mc",
            Command::Lln(_) => "lln",
            Command::Hyptest(_) => "hyptest",
            Command::Report(_) => "report",
            Command::Trace(_) => "trace",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Command::Report(_) | Command::Trace(_) => Format::Csv,
            _ => Format::Json,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GlobalParams {
    pub format: Option<Format>,
    pub seed: u64,
    pub threads: usize,
    pub output: Option<String>,
    pub timings: bool,
}

const SECTIONS: [&str; 8] = ["closed-form", "pde", "dp", "mc", "lln", "hyptest", "report", "trace"];

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Overlays `layers` (later wins) on the defaults of `P`.
fn resolve<P: Default + Serialize + DeserializeOwned>(layers: &[Option<Value>], name: &str) -> Result<P> {
    let mut merged = serde_json::to_value(P::default()).map_err(config_err)?;
    let target = merged.as_object_mut().expect("parameter structs serialize to objects");
    for layer in layers.iter().flatten() {
        let Value::Object(map) = layer else {
            return Err(Error::Config(format!("[{name}] must be a table")));
        };
        for (k, v) in map {
            target.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(merged).map_err(|e| Error::Config(format!("[{name}]: {e}")))
}

fn load_config(path: Option<&PathBuf>) -> Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = serde_json::to_value(table).map_err(config_err)? else {
        unreachable!("a TOML table is an object");
    };
    Ok(map)
}

/// Splits the config into global keys and the section for `command`,
/// rejecting unknown top-level keys.
fn split_config(mut config: Map<String, Value>, command: &str) -> Result<(Value, Option<Value>)> {
    let section = config.remove(command);
    for s in SECTIONS {
        config.remove(s);
    }
    for key in config.keys() {
        if !["format", "seed", "threads", "output", "timings"].contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
    }
    Ok((Value::Object(config), section))
}

struct Report {
    summary: Option<Value>,
    rows: Vec<Map<String, Value>>,
}

fn row(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("rows are built from object literals"),
    }
}

fn parse_side(s: &str) -> Result<Vec<Side>> {
    match s {
        "upper" => Ok(vec![Side::Upper]),
        "lower" => Ok(vec![Side::Lower]),
        "both" => Ok(vec![Side::Upper, Side::Lower]),
        other => Err(Error::Config(format!("side must be upper, lower or both, got `{other}`"))),
    }
}

fn parse_sense(s: &str) -> Result<Sense> {
    match s {
        "sup" => Ok(Sense::Sup),
        "inf" => Ok(Sense::Inf),
        other => Err(Error::Config(format!("sense must be sup or inf, got `{other}`"))),
    }
}

fn parse_statistic(theorem: &str, center: f64, alpha: f64, beta: f64) -> Result<Statistic> {
    Statistic::from_name(theorem, center, alpha, beta).ok_or_else(|| {
        Error::Config(format!("theorem must be clt, special, tilde, deviation, lln or scaled, got `{theorem}`"))
    })
}

fn parse_policy(name: &str, center: f64) -> Result<Vec<DriftPolicy>> {
    let all = DriftPolicy::builtins(center);
    if name == "all" {
        return Ok(all);
    }
    all.into_iter()
        .find(|p| p.name() == name)
        .map(|p| vec![p])
        .ok_or_else(|| Error::Config(format!("unknown policy `{name}`")))
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Upper => "upper",
        Side::Lower => "lower",
    }
}

fn load_measures(path: &Option<String>, coin: &[f64]) -> Result<MeasureSet> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{p}: {e}")))?;
            MeasureSet::from_toml_str(&text)
        }
        None => match coin {
            [p, q] => coin_example(*p, *q),
            _ => Err(Error::Config("coin needs exactly two probabilities p,q".into())),
        },
    }
}

fn terminal(a: f64, b: f64, h: Option<f64>) -> Result<TerminalFunction> {
    match h {
        Some(h) => TerminalFunction::smoothed_indicator(a, b, h),
        None => TerminalFunction::indicator(a, b),
    }
}

fn closed_form_cmd(p: &ClosedFormParams) -> Result<Report> {
    let iv = AmbiguityInterval::new(p.mu_lo, p.mu_hi, p.sigma)?;
    let mut rows = Vec::new();
    for side in parse_side(&p.side)? {
        let lim = IndicatorLimit::new(iv, p.a, p.b, side).evaluate()?;
        rows.push(row(json!({
            "module": "closed_form",
            "operation": format!("{}_indicator_limit", side_name(side)),
            "side": side_name(side),
            "value": lim.value,
            "branch": lim.branch,
            "kappa": lim.kappa,
            "center": lim.center,
        })));
    }
    Ok(Report { summary: None, rows })
}

fn pde_cmd(p: &PdeParams) -> Result<Report> {
    let iv = AmbiguityInterval::new(p.mu_lo, p.mu_hi, 1.0)?;
    let grid = PdeGrid::new(p.x_min, p.x_max, p.nx, p.nt)?;
    let mut rows = Vec::new();
    for side in parse_side(&p.side)? {
        let est = indicator_estimate(&iv, p.a, p.b, side, &grid, &p.epsilons, &p.bandwidths)?;
        for (h, sweep) in est.bandwidths.iter().zip(&est.sweeps) {
            for (eps, v) in sweep.epsilons.iter().zip(&sweep.values) {
                rows.push(row(json!({
                    "module": "pde", "operation": "solve_g_expectation", "side": side_name(side),
                    "h": h, "epsilon": eps, "value": v,
                })));
            }
            rows.push(row(json!({
                "module": "pde", "operation": "epsilon_extrapolate", "side": side_name(side),
                "h": h, "epsilon": 0.0, "value": sweep.extrapolated,
            })));
        }
        rows.push(row(json!({
            "module": "pde", "operation": "indicator_estimate", "side": side_name(side),
            "h": 0.0, "epsilon": 0.0, "value": est.extrapolated,
            "closed_form": est.closed_form, "gap": est.gap,
        })));
    }
    Ok(Report { summary: None, rows })
}

fn dp_cmd(p: &DpParams) -> Result<Report> {
    let set = load_measures(&p.measures, &p.coin)?;
    let model = LatticeModel::new(&set)?;
    let stat = parse_statistic(&p.theorem, p.center, p.alpha, p.beta)?;
    let sense = parse_sense(&p.sense)?;
    let phi = terminal(p.a, p.b, p.h)?;
    let cfg = DpConfig { state_cap: p.state_cap, horizon_cap: p.horizon_cap };
    let mut rows = Vec::new();
    for &n in &p.n {
        let mut r = json!({
            "module": "worst_case", "operation": "worst_case_value",
            "theorem": stat.name(), "sense": p.sense, "n": n,
        });
        let fields = r.as_object_mut().expect("object");
        if p.exact {
            let out = worst_case_value::<crate::exact::Rational>(&model, stat, &phi, n, sense, &cfg)?;
            fields.insert("value".into(), json!(to_f64(&out.value)));
            fields.insert("value_exact".into(), json!(out.value.to_string()));
            fields.insert("states".into(), json!(out.states));
            fields.insert("max_layer".into(), json!(out.max_layer));
            fields.insert("exact".into(), json!(out.exact));
        } else {
            let out = worst_case_value::<f64>(&model, stat, &phi, n, sense, &cfg)?;
            fields.insert("value".into(), json!(out.value));
            fields.insert("states".into(), json!(out.states));
            fields.insert("max_layer".into(), json!(out.max_layer));
            fields.insert("exact".into(), json!(out.exact));
        }
        rows.push(row(r));
    }
    Ok(Report { summary: None, rows })
}

fn mc_cmd(p: &McParams, seed: u64) -> Result<Report> {
    let set = load_measures(&p.measures, &p.coin)?;
    let model = LatticeModel::new(&set)?;
    let stat = parse_statistic(&p.theorem, p.center, p.alpha, p.beta)?;
    let phi = terminal(p.a, p.b, p.h)?;
    let bound = if p.dp_bound {
        Some(worst_case_value::<f64>(&model, stat, &phi, p.n, Sense::Sup, &DpConfig::default())?.value)
    } else {
        None
    };
    let mut rows = Vec::new();
    for policy in parse_policy(&p.policy, p.center)? {
        let est = mc_policy_value(&model, &policy, &phi, stat, p.n, p.paths, seed)?;
        rows.push(row(json!({
            "module": "worst_case", "operation": "mc_policy_value",
            "theorem": stat.name(), "policy": policy.name(), "n": p.n,
            "estimate": est.estimate, "stderr": est.stderr, "paths": est.paths,
            "dp_bound": bound,
        })));
    }
    Ok(Report { summary: None, rows })
}

fn lln_cmd(p: &LlnParams) -> Result<Report> {
    let set = load_measures(&p.measures, &p.coin)?;
    let iv = validate_measure_set(&set, DEFAULT_TOL_VAR)?;
    let model = LatticeModel::new(&set)?;
    let phi = terminal(p.a, p.b, p.h)?;
    // sup of φ over the mean interval
    let limit = (0..=1000)
        .map(|i| iv.mu_lower + (iv.mu_upper - iv.mu_lower) * i as f64 / 1000.0)
        .chain(phi.breakpoints().into_iter().filter(|x| (iv.mu_lower..=iv.mu_upper).contains(x)))
        .map(|x| phi.eval(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut rows = Vec::new();
    for &n in &p.n {
        let out = worst_case_value::<f64>(&model, Statistic::Lln, &phi, n, Sense::Sup, &DpConfig::default())?;
        rows.push(row(json!({
            "module": "worst_case", "operation": "sup_dp_lln", "n": n,
            "value": out.value, "limit": limit, "gap": (out.value - limit).abs(), "states": out.states,
        })));
    }
    Ok(Report { summary: None, rows })
}

fn hyptest_cmd(p: &HyptestParams, seed: u64) -> Result<Report> {
    let spec = TestSpec::new(p.kappa, p.sigma, p.alpha, p.theta0, p.xi)?;
    let mode = p.a_lower.map_or(Calibration::Symmetric, Calibration::GivenLower);
    let (a, b) = calibrate_interval(&spec, mode)?;
    let cov = coverage(&spec, a, b)?;
    let curve = power_curve(&spec, a, b, &p.xis)?;
    let rows: Vec<_> = curve
        .iter()
        .map(|(xi, v)| row(json!({"module": "hypothesis", "operation": "wrong_acceptance", "xi": xi, "value": v})))
        .collect();

    let (statistic, decision, observations) = match &p.data {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            let xs = read_path_csv(file)?;
            let m = test_statistic(&xs, &spec, a, b)?;
            let d = test_decision(m, a, b, &Theta::Point { value: p.theta0 })?;
            (Some(m), Some(d), Some(xs.len()))
        }
        None => (None, None, None),
    };

    let (size, power) = if p.paths > 0 {
        let errors = symmetric_error_model(p.kappa, p.sigma)?;
        // the policy follows the test's own switching rule in both runs
        let policy = parse_policy(&p.policy, 0.5 * (a + b))?.remove(0);
        let sim = |theta| size_power_simulation(&errors, &spec, a, b, theta, p.n, p.paths, seed, &policy);
        (Some(sim(p.theta0)?), Some(sim(p.theta0 + p.xi)?))
    } else {
        (None, None)
    };
    let optimal = if p.optimize { Some(optimize_ab(&spec, p.xi)?) } else { None };

    let summary = json!({
        "a": a,
        "b": b,
        "coverage": cov,
        "wrong_acceptance": wrong_acceptance(&spec, a, b, p.xi)?,
        "power_curve": curve.iter().map(|(xi, v)| json!({"xi": xi, "value": v})).collect::<Vec<_>>(),
        "decision": decision,
        "statistic": statistic,
        "observations": observations,
        "size": size,
        "power": power,
        "optimal": optimal,
    });
    Ok(Report { summary: Some(summary), rows })
}

fn report_cmd(p: &ReportParams, timings: bool) -> Result<Report> {
    match p.suite.as_str() {
        "acceptance" => {
            let results = acceptance::run_suite(&p.criteria);
            let rows = results
                .iter()
                .map(|r| {
                    let mut m = row(json!({
                        "id": r.id, "name": r.name, "status": r.status(),
                        "metric": r.metric, "tolerance": r.tolerance, "limit_s": r.limit_s,
                        "detail": r.detail,
                    }));
                    if timings {
                        m.insert("runtime_s".into(), json!(r.runtime_s));
                    }
                    m
                })
                .collect();
            let passed = results.iter().filter(|r| r.passed).count();
            let summary = json!({"passed": passed, "failed": results.len() - passed});
            Ok(Report { summary: Some(summary), rows })
        }
        "convergence" => {
            let set = load_measures(&p.measures, &p.coin)?;
            let iv = validate_measure_set(&set, DEFAULT_TOL_VAR)?;
            let stat = parse_statistic(&p.theorem, p.center, p.alpha, p.beta)?;
            let sense = parse_sense(&p.sense)?;
            let phi = terminal(p.a, p.b, p.h)?;
            let reference = match p.reference {
                Some(r) => r,
                None => default_reference(&iv, stat, sense, p)?,
            };
            let rep = convergence_report(
                &LatticeModel::new(&set)?,
                stat,
                sense,
                &phi,
                &p.n_list,
                reference,
                &DpConfig::default(),
                timings,
            )?;
            let rows = rep
                .rows
                .iter()
                .map(|r| {
                    let mut m = row(json!({
                        "module": "worst_case", "operation": "convergence_report",
                        "n": r.n, "dp_value": r.dp_value, "reference": reference, "gap": r.gap,
                        "product_value": r.product_value, "states": r.states,
                    }));
                    if let Some(ms) = r.runtime_ms {
                        m.insert("runtime_ms".into(), json!(ms));
                    }
                    m
                })
                .collect();
            Ok(Report { summary: Some(json!({"monotone_gaps": rep.monotone_gaps, "reference": reference})), rows })
        }
        other => Err(Error::Config(format!("suite must be acceptance or convergence, got `{other}`"))),
    }
}

/// Limit implied by the theorem: closed form for sharp indicators, Gaussian
/// quadrature for the deviation statistic.
fn default_reference(iv: &AmbiguityInterval, stat: Statistic, sense: Sense, p: &ReportParams) -> Result<f64> {
    let side = match sense {
        Sense::Sup => Side::Upper,
        Sense::Inf => Side::Lower,
    };
    match (stat, p.h) {
        (Statistic::Deviation, h) => {
            let phi = terminal(p.a, p.b, h)?;
            Ok(gaussian_expectation(|x| phi.eval(x), 0.0, &phi.breakpoints()))
        }
        (Statistic::Clt | Statistic::Special { .. } | Statistic::Tilde { .. }, None) => {
            Ok(IndicatorLimit::new(*iv, p.a, p.b, side).evaluate()?.value)
        }
        _ => Err(Error::Config("no built-in reference for this case; pass --reference".into())),
    }
}

fn trace_cmd(p: &TraceParams) -> Result<Report> {
    let path = p.data.as_ref().ok_or_else(|| Error::Config("trace needs --data".into()))?;
    let file = fs::File::open(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    let xs = read_path_csv(file)?;
    let variant = match p.variant.as_str() {
        "M" | "m" => Variant::M,
        "tilde" | "M-tilde" => Variant::Tilde,
        other => return Err(Error::Config(format!("variant must be M or tilde, got `{other}`"))),
    };
    let rule = SwitchRule::new(p.center, AmbiguityInterval::new(p.mu_lo, p.mu_hi, p.sigma)?);
    let n = p.n.unwrap_or(xs.len());
    let rows = path_trace(&xs, n, &rule, variant)?
        .iter()
        .map(|r| row(json!({"m": r.m, "mu_m": r.mu_m, "M_m": r.value})))
        .collect();
    Ok(Report { summary: None, rows })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

fn render(report: &Report, format: Format, command: &str, config: &Value) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut doc = json!({
                "version": VERSION,
                "command": command,
                "config": config,
            });
            let m = doc.as_object_mut().expect("object");
            if let Some(s) = &report.summary {
                m.insert("summary".into(), s.clone());
            }
            m.insert("results".into(), Value::Array(report.rows.iter().cloned().map(Value::Object).collect()));
            let mut out = serde_json::to_vec_pretty(&doc).map_err(config_err)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut header: Vec<String> = Vec::new();
            for r in &report.rows {
                for k in r.keys() {
                    if !header.contains(k) {
                        header.push(k.clone());
                    }
                }
            }
            let mut out = format!("# ambiclt {VERSION} {command} config={config}\n").into_bytes();
            if let Some(s) = &report.summary {
                out.extend(format!("# summary={s}\n").bytes());
            }
            {
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(&header)?;
                for r in &report.rows {
                    w.write_record(header.iter().map(|k| r.get(k).map(cell).unwrap_or_default()))?;
                }
                w.flush()?;
            }
            Ok(out)
        }
    }
}

fn execute(cli: Cli) -> Result<(Vec<u8>, Option<PathBuf>)> {
    let command = cli.command.name();
    let (global_cfg, section) = split_config(load_config(cli.config.as_ref())?, command)?;
    let global_flags = json!({
        "format": cli.format,
        "seed": cli.seed,
        "threads": cli.threads,
        "output": cli.output.as_ref().map(|p| p.display().to_string()),
        "timings": if cli.timings { Some(true) } else { None },
    });
    let global_flags = Value::Object(
        global_flags
            .as_object()
            .expect("object")
            .iter()
            .filter(|(_, v)| !v.is_null())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    );
    let global: GlobalParams = resolve(&[Some(global_cfg), Some(global_flags)], "global")?;
    let format = global.format.unwrap_or(cli.command.default_format());

    macro_rules! resolved {
        ($flags:expr, $ty:ty) => {{
            let flags = serde_json::to_value($flags).map_err(config_err)?;
            resolve::<$ty>(&[section.clone(), Some(flags)], command)?
        }};
    }
    let (report, params) = {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(global.threads).build().map_err(config_err)?;
        pool.install(|| -> Result<(Report, Value)> {
            Ok(match &cli.command {
                Command::ClosedForm(f) => {
                    let p = resolved!(f, ClosedFormParams);
                    (closed_form_cmd(&p)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Pde(f) => {
                    let p = resolved!(f, PdeParams);
                    (pde_cmd(&p)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Dp(f) => {
                    let p = resolved!(f, DpParams);
                    (dp_cmd(&p)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Mc(f) => {
                    let p = resolved!(f, McParams);
                    (mc_cmd(&p, global.seed)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Lln(f) => {
                    let p = resolved!(f, LlnParams);
                    (lln_cmd(&p)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Hyptest(f) => {
                    let p = resolved!(f, HyptestParams);
                    (hyptest_cmd(&p, global.seed)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Report(f) => {
                    let p = resolved!(f, ReportParams);
                    (report_cmd(&p, global.timings)?, serde_json::to_value(p).map_err(config_err)?)
                }
                Command::Trace(f) => {
                    let p = resolved!(f, TraceParams);
                    (trace_cmd(&p)?, serde_json::to_value(p).map_err(config_err)?)
                }
            })
        })?
    };
    let config = json!({"global": global, command: params});
    let payload = render(&report, format, command, &config)?;
    Ok((payload, global.output.map(PathBuf::from)))
}

/// `{"kind", "message", "exit_code"}` on one line.
pub fn error_record(e: &Error) -> String {
    json!({"kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()}).to_string()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Nothing is written to `stdout` or the output file
/// unless the whole run succeeds.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let err = Error::Config(first);
            let _ = writeln!(stderr, "{}", error_record(&err));
            return err.exit_code();
        }
    };
    let outcome = execute(cli).and_then(|(payload, output)| match output {
        Some(path) => fs::write(&path, &payload).map_err(Error::from),
        None => stdout.write_all(&payload).map_err(Error::from),
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_record(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("ambiclt").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn defaults_serialize_and_resolve() {
        let p: DpParams = resolve(&[], "dp").unwrap();
        assert_eq!(p, DpParams::default());
        let p: HyptestParams = resolve(&[Some(json!({"kappa": 0.3})), Some(json!({"kappa": 0.1}))], "hyptest").unwrap();
        assert_eq!(p.kappa, 0.1);
        assert!(resolve::<HyptestParams>(&[Some(json!({"kapa": 0.3}))], "hyptest").is_err());
    }

    #[test]
    fn negative_flag_values() {
        let (code, out, _) =
            run_capture(&["closed-form", "--mu-lo", "-0.3", "--mu-hi", "0.3", "--a", "-1", "--b", "1"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        let value = v["results"][0]["value"].as_f64().unwrap();
        assert!((value - 0.770407047562559).abs() < 1e-12);
    }

    #[test]
    fn unknown_flag() {
        let (code, out, err) = run_capture(&["closed-form", "--bogus", "1"]);
        assert_eq!(code, 2);
        assert!(out.is_empty());
        let rec: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(rec["kind"], "ConfigError");
        assert_eq!(rec["exit_code"], 2);
    }

    #[test]
    fn module_errors_map_to_codes() {
        let (code, out, err) = run_capture(&["closed-form", "--a", "1", "--b", "0"]);
        assert_eq!(code, 5);
        assert!(out.is_empty());
        assert!(err.contains("BadInterval"));
    }
}
