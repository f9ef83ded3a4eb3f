//! Scenario runner: configuration, validation and the CSV report bundle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{AbatementPolicy, DiceModel, Trajectory};
use crate::error::DiceError;
use crate::optimizer::{calibrate, Calibration, OptimizerSettings};
use crate::params::{ModelParameters, Violation, DEFAULT_PARAMETER_SET};
use crate::pricing::{price_report, PriceReport, SccBumps};
use crate::rate::{decomposition_check, r_scc_curve, DecompositionCheck, RateReport};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DICECARBON_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "dicecarbon-output";
/// Periods averaged for the headline r^SCC number.
pub const EARLY_RATE_PERIODS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySource {
    pub calibrate: bool,
    /// CSV with columns period, year, mu.
    pub load: Option<PathBuf>,
    /// Starting ramp for calibration: initial value, final value, years.
    pub initial_ramp: [f64; 3],
}

impl Default for PolicySource {
    fn default() -> Self {
        Self {
            calibrate: true,
            load: None,
            initial_ramp: [0.03, 1.0, 150.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSettings {
    pub prices: bool,
    pub rates: bool,
    /// Horizons (years) for the par-price sweep.
    pub horizons: Vec<f64>,
    pub scc_emission_bump: f64,
    pub scc_consumption_bump: f64,
    /// μ bump for cost sensitivities.
    pub sensitivity_bump: f64,
    /// Cost bump ($T/yr) for utility weights.
    pub cost_bump: f64,
}

impl Default for AnalyticsSettings {
    fn default() -> Self {
        let bumps = SccBumps::default();
        Self {
            prices: true,
            rates: true,
            horizons: (1..=10).map(|i| 50.0 * i as f64).collect(),
            scc_emission_bump: bumps.emission,
            scc_consumption_bump: bumps.consumption,
            sensitivity_bump: crate::rate::DEFAULT_BUMP,
            cost_bump: crate::rate::DEFAULT_COST_BUMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Builtin parameter set name or path to a parameter file.
    pub parameters: String,
    /// Overrides applied on top of the parameter file, same layout.
    pub model: toml::Table,
    pub policy: PolicySource,
    pub optimizer: OptimizerSettings,
    pub analytics: AnalyticsSettings,
    /// Falls back to `$DICECARBON_OUTPUT_DIR`, then `dicecarbon-output`.
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            parameters: DEFAULT_PARAMETER_SET.to_string(),
            model: toml::Table::new(),
            policy: PolicySource::default(),
            optimizer: OptimizerSettings::default(),
            analytics: AnalyticsSettings::default(),
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Calibration,
    Analytics,
    Io,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ScenarioError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ScenarioError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Calibration => 3,
            ErrorKind::Analytics => 4,
            ErrorKind::Io => 5,
        }
    }
}

/// Sets `key` (dotted path) in a TOML table. The value is parsed as a TOML
/// literal when possible and kept as a string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed key `{key}`"));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| format!("`{key}`: `{part}` is not a section"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Self::from_table(
            text.parse::<toml::Table>()
                .map_err(|e| ScenarioError::new(ErrorKind::Config, format!("config: {e}")))?,
        )
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ScenarioError> {
        Self::deserialize(toml::Value::Table(table))
            .map_err(|e| ScenarioError::new(ErrorKind::Config, format!("config: {e}")))
    }

    /// Reads a config file (or the defaults when `path` is `None`) and
    /// applies dotted-key overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let mut table = match path {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| ScenarioError::new(ErrorKind::Config, format!("{}: {e}", p.display())))?
                .parse::<toml::Table>()
                .map_err(|e| {
                    ScenarioError::new(ErrorKind::Config, format!("{}: {e}", p.display()))
                })?,
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            apply_override(&mut table, key, value)
                .map_err(|e| ScenarioError::new(ErrorKind::Config, e))?;
        }
        Self::from_table(table)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Model parameters with the `model` overrides applied.
    pub fn parameters(&self) -> Result<ModelParameters, DiceError> {
        let base = ModelParameters::load(&self.parameters)?;
        if self.model.is_empty() {
            return Ok(base);
        }
        let mut table: toml::Table = base
            .to_toml_string()
            .parse()
            .map_err(|e: toml::de::Error| DiceError::Parse(e.to_string()))?;
        merge(&mut table, &self.model);
        ModelParameters::deserialize(toml::Value::Table(table))
            .map_err(|e| DiceError::Parse(e.to_string()))
    }

    pub fn scc_bumps(&self) -> SccBumps {
        SccBumps {
            emission: self.analytics.scc_emission_bump,
            consumption: self.analytics.scc_consumption_bump,
        }
    }
}

fn merge(into: &mut toml::Table, from: &toml::Table) {
    for (k, v) in from {
        match (into.get_mut(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            _ => {
                into.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Every violated invariant of the config and the model parameters it
/// names. I/O problems are reported as violations.
pub fn validate_config(config: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let params = match config.parameters() {
        Ok(p) => {
            out.extend(p.validate());
            Some(p)
        }
        Err(e) => {
            out.push(Violation::new("parameters", e.to_string()));
            None
        }
    };
    out.extend(config.optimizer.validate("optimizer."));

    match (&config.policy.load, config.policy.calibrate) {
        (Some(_), true) => out.push(Violation::new(
            "policy",
            "exactly one source: set calibrate = false when loading a policy",
        )),
        (None, false) => out.push(Violation::new(
            "policy",
            "exactly one source: calibrate or load a policy file",
        )),
        _ => {}
    }
    let [mu0, mu1, years] = config.policy.initial_ramp;
    if !(0.0..=1.0).contains(&mu0) || !(0.0..=1.0).contains(&mu1) || !(years > 0.0) {
        out.push(Violation::new(
            "policy.initial_ramp",
            "values must lie in [0, 1] and the ramp length must be > 0",
        ));
    }
    if let (Some(path), Some(p)) = (&config.policy.load, &params) {
        match read_policy(path) {
            Ok(policy) if policy.len() != p.periods() => out.push(Violation::new(
                "policy.load",
                format!("policy has {} periods, model has {}", policy.len(), p.periods()),
            )),
            Ok(policy) => {
                if let Err(e) = policy.check(p.periods(), p.max_abatement) {
                    out.push(Violation::new("policy.load", e.to_string()));
                }
            }
            Err(e) => out.push(Violation::new("policy.load", e.message)),
        }
    }

    let a = &config.analytics;
    let horizon = params.as_ref().map(|p| p.time_horizon_years as f64);
    for (i, &h) in a.horizons.iter().enumerate() {
        let bad = !(h > 0.0) || horizon.is_some_and(|t| h > t);
        if bad {
            out.push(Violation::new(
                format!("analytics.horizons[{i}]"),
                format!(
                    "horizon {h} must lie in (0, {}]",
                    horizon.map_or("model horizon".into(), |t| t.to_string())
                ),
            ));
        }
    }
    for (value, field) in [
        (a.scc_emission_bump, "analytics.scc_emission_bump"),
        (a.scc_consumption_bump, "analytics.scc_consumption_bump"),
        (a.sensitivity_bump, "analytics.sensitivity_bump"),
        (a.cost_bump, "analytics.cost_bump"),
    ] {
        if !(value.is_finite() && value > 0.0) {
            out.push(Violation::new(field, "must be > 0"));
        }
    }
    if let Err(rule) = check_writable(&config.output_dir()) {
        out.push(Violation::new("output_dir", rule));
    }
    out
}

fn check_writable(dir: &Path) -> Result<(), String> {
    let mut probe = dir;
    loop {
        if probe.exists() {
            let meta = fs::metadata(probe).map_err(|e| format!("{}: {e}", probe.display()))?;
            if !meta.is_dir() {
                return Err(format!("{} is not a directory", probe.display()));
            }
            if meta.permissions().readonly() {
                return Err(format!("{} is not writable", probe.display()));
            }
            return Ok(());
        }
        match probe.parent() {
            Some(p) if !p.as_os_str().is_empty() => probe = p,
            _ => return Ok(()),
        }
    }
}

/// Decimal with 10 significant digits.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::new(ErrorKind::Io, format!("{}: {e}", path.display()))
}

/// Writes `policy.csv`; μ uses shortest round-trip formatting so a reloaded
/// policy is bit-identical.
pub fn write_policy(path: &Path, model: &DiceModel, policy: &AbatementPolicy) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(["period", "year", "mu"])?;
        for (i, mu) in policy.mu.iter().enumerate() {
            w.write_record([
                i.to_string(),
                format_number(model.params().year(i)),
                mu.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| io_error(path, e))
}

pub fn read_policy(path: &Path) -> Result<AbatementPolicy, ScenarioError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| ScenarioError::new(ErrorKind::Config, format!("{}: {e}", path.display())))?;
    let bad = |msg: String| ScenarioError::new(ErrorKind::Config, format!("{}: {msg}", path.display()));
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = headers
        .iter()
        .position(|h| h.trim() == "mu")
        .ok_or_else(|| bad("missing `mu` column".into()))?;
    let mut mu = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let value = record
            .get(column)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| bad(format!("row {}: unreadable mu", line + 1)))?;
        mu.push(value);
    }
    Ok(AbatementPolicy::new(mu))
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn write(&self, path: &Path) -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
        w.write_record(&self.header).map_err(|e| io_error(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| io_error(path, e))?;
        }
        w.flush().map_err(|e| io_error(path, e))
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

/// Everything a scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub policy: AbatementPolicy,
    pub calibration: Option<Calibration>,
    pub prices: Option<PriceReport>,
    pub rates: Option<RateReport>,
    pub decomposition: Option<DecompositionCheck>,
}

impl ScenarioOutcome {
    pub fn early_rate_average(&self) -> Option<f64> {
        self.rates.as_ref()?.early_average(EARLY_RATE_PERIODS)
    }
}

/// Which stages to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    CalibrateOnly,
    Full,
}

fn analytics_error(e: DiceError) -> ScenarioError {
    ScenarioError::new(ErrorKind::Analytics, e.to_string())
}

fn obtain_policy(
    config: &ScenarioConfig,
    model: &DiceModel,
) -> Result<(AbatementPolicy, Option<Calibration>), ScenarioError> {
    if let Some(path) = &config.policy.load {
        return Ok((read_policy(path)?, None));
    }
    let [mu0, mu1, years] = config.policy.initial_ramp;
    let init = AbatementPolicy::ramp(model.params(), mu0, mu1, years);
    let c = calibrate(model, &init, &config.optimizer)
        .map_err(|e| ScenarioError::new(ErrorKind::Calibration, e.to_string()))?;
    if !c.converged {
        return Err(ScenarioError::new(
            ErrorKind::Calibration,
            format!(
                "calibration stopped after {} iterations with projected gradient {:.3e} > tolerance {:.1e}; raise optimizer.max_iterations or optimizer.tolerance",
                c.iterations, c.projected_gradient_norm, config.optimizer.tolerance
            ),
        ));
    }
    Ok((c.policy.clone(), Some(c)))
}

/// Runs the scenario and writes the report bundle.
pub fn run_scenario(config: &ScenarioConfig, stage: Stage) -> Result<ScenarioOutcome, ScenarioError> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(ScenarioError::new(
            ErrorKind::Config,
            format!("invalid configuration:\n  {}", list.join("\n  ")),
        ));
    }
    let params = config
        .parameters()
        .map_err(|e| ScenarioError::new(ErrorKind::Config, e.to_string()))?;
    let model = DiceModel::new(params).map_err(|e| ScenarioError::new(ErrorKind::Config, e.to_string()))?;
    let (policy, calibration) = obtain_policy(config, &model)?;

    let dir = config.output_dir();
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let mut outcome = ScenarioOutcome {
        output_dir: dir.clone(),
        files: Vec::new(),
        policy,
        calibration,
        prices: None,
        rates: None,
        decomposition: None,
    };
    let policy_path = dir.join("policy.csv");
    write_policy(&policy_path, &model, &outcome.policy)?;
    outcome.files.push(policy_path);

    if stage == Stage::Full {
        let trajectory = model.simulate(&outcome.policy).map_err(analytics_error)?;
        if config.analytics.prices {
            let report = price_report(&model, &outcome.policy, config.scc_bumps(), &config.analytics.horizons)
                .map_err(analytics_error)?;
            let counterfactual = model
                .simulate(&model.policy_of(model.params().max_abatement.min(1.0)))
                .map_err(analytics_error)?;
            write_prices(&dir, &report, &trajectory, &counterfactual, &mut outcome.files)?;
            outcome.prices = Some(report);
        }
        if config.analytics.rates {
            let periods: Vec<usize> = (0..model.periods()).collect();
            let report = r_scc_curve(&model, &outcome.policy, &periods, config.analytics.sensitivity_bump)
                .map_err(analytics_error)?;
            let check = decomposition_check(
                &model,
                &outcome.policy,
                0,
                config.analytics.sensitivity_bump,
                config.analytics.cost_bump,
            )
            .map_err(analytics_error)?;
            write_rates(&dir, &report, &check, &trajectory, &mut outcome.files)?;
            outcome.rates = Some(report);
            outcome.decomposition = Some(check);
        }
    }

    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, summary_text(&outcome)).map_err(|e| io_error(&summary_path, e))?;
    outcome.files.push(summary_path);
    Ok(outcome)
}

fn write_prices(
    dir: &Path,
    report: &PriceReport,
    trajectory: &Trajectory,
    counterfactual: &Trajectory,
    files: &mut Vec<PathBuf>,
) -> Result<(), ScenarioError> {
    let f = format_number;
    let mut emit = |name: &str, table: Table| -> Result<(), ScenarioError> {
        let path = dir.join(name);
        table.write(&path)?;
        files.push(path);
        Ok(())
    };

    let mut summary = Table::new(&["k_par", "k_par_star", "k_scc", "scc_initial", "gap_at_zero"]);
    summary.row(vec![
        f(report.k_par),
        f(report.k_par_star),
        f(report.k_scc),
        f(report.scc_initial),
        f(report.gap_at_zero),
    ]);
    emit("prices_summary.csv", summary)?;

    let mut scc = Table::new(&["period", "year", "scc", "numeraire", "discounted_scc"]);
    for (i, s) in report.scc_curve.iter().enumerate() {
        let n = trajectory.numeraire[i];
        scc.row(vec![i.to_string(), f(trajectory.year(i)), f(*s), f(n), f(s / n)]);
    }
    emit("scc_curve.csv", scc)?;

    let mut deviation = Table::new(&[
        "period",
        "year",
        "discounted_scc_minus_k_scc",
        "k_scc_minus_discounted_scc",
        "emissions",
    ]);
    for (i, d) in report.deviation_curve.iter().enumerate() {
        deviation.row(vec![
            i.to_string(),
            f(trajectory.year(i)),
            f(*d),
            f(-d),
            f(trajectory.emissions[i]),
        ]);
    }
    emit("deviation_curve.csv", deviation)?;

    let mut sweep = Table::new(&["horizon_years", "k_par", "k_par_star"]);
    for h in &report.horizon_curve {
        sweep.row(vec![f(h.horizon_years), optional(h.k_par), optional(h.k_par_star)]);
    }
    emit("horizon_sweep.csv", sweep)?;

    let mut flows = Table::new(&[
        "period",
        "year",
        "emissions",
        "abatement_cost",
        "damage_cost",
        "total_cost",
        "numeraire",
        "discounted_cost",
        "full_abatement_damage_cost",
    ]);
    for i in 0..trajectory.len() {
        let n = trajectory.numeraire[i];
        flows.row(vec![
            i.to_string(),
            f(trajectory.year(i)),
            f(trajectory.emissions[i]),
            f(trajectory.abatement_cost[i]),
            f(trajectory.damage_cost[i]),
            f(trajectory.total_cost[i]),
            f(n),
            f(trajectory.total_cost[i] / n),
            f(counterfactual.damage_cost[i]),
        ]);
    }
    emit("cost_emission.csv", flows)
}

fn write_rates(
    dir: &Path,
    report: &RateReport,
    check: &DecompositionCheck,
    trajectory: &Trajectory,
    files: &mut Vec<PathBuf>,
) -> Result<(), ScenarioError> {
    let f = format_number;
    let mut curve = Table::new(&[
        "period",
        "year",
        "r_scc",
        "discount_rate",
        "no_root_flag",
        "time_preference_rate",
        "utility_rate",
        "abatement_sensitivity",
        "welfare_gradient",
    ]);
    for p in &report.points {
        curve.row(vec![
            p.period.to_string(),
            f(p.year),
            optional(p.r_scc),
            f(report.discount_rate),
            u8::from(p.r_scc.is_none()).to_string(),
            f(report.time_preference_rate),
            f(p.utility_rate),
            f(p.abatement_sensitivity),
            f(p.welfare_gradient),
        ]);
    }
    let path = dir.join("r_scc_curve.csv");
    curve.write(&path)?;
    files.push(path);

    let mut row = Table::new(&[
        "period",
        "year",
        "abatement_sensitivity",
        "damage_sensitivity",
        "rate_discount_factor",
        "utility_weight_ratio",
    ]);
    let dt = trajectory.step_size;
    for (k, ratio) in check.weight_ratios.iter().enumerate() {
        let principal = if k == 0 { check.principal } else { 0.0 };
        let damage = report
            .damage_sensitivities
            .first()
            .and_then(|r| r.get(k))
            .copied()
            .unwrap_or(0.0);
        row.row(vec![
            k.to_string(),
            f(trajectory.year(k)),
            f(principal),
            f(damage),
            f((-check.r_scc * k as f64 * dt).exp()),
            f(*ratio),
        ]);
    }
    let path = dir.join("sensitivities_t0.csv");
    row.write(&path)?;
    files.push(path);
    Ok(())
}

fn summary_text(outcome: &ScenarioOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dicecarbon scenario summary");
    if let Some(c) = &outcome.calibration {
        let _ = writeln!(
            s,
            "calibration: {} iterations, projected gradient {:.3e}, welfare {:.6}",
            c.iterations, c.projected_gradient_norm, c.welfare
        );
    } else {
        let _ = writeln!(s, "policy: loaded from file");
    }
    let _ = writeln!(s, "initial abatement: {:.4}", outcome.policy.mu[0]);
    if let Some(p) = &outcome.prices {
        let _ = writeln!(s, "SCC(start) [$/tCO2]: {:.2}", p.scc_initial);
        let _ = writeln!(s, "K_SCC [$/tCO2]: {:.2}", p.k_scc);
        let _ = writeln!(s, "K_par [$/tCO2]: {:.2}", p.k_par);
        let _ = writeln!(s, "K_par* [$/tCO2]: {:.2}", p.k_par_star);
        let _ = writeln!(s, "V_Gap(0) [$T]: {:.4}", p.gap_at_zero);
        for h in &p.horizon_curve {
            let _ = writeln!(
                s,
                "K_par({}) [$/tCO2]: {}",
                h.horizon_years,
                h.k_par.map_or("undefined".into(), |v| format!("{v:.2}"))
            );
        }
    }
    if let Some(avg) = outcome.early_rate_average() {
        let _ = writeln!(
            s,
            "r_SCC mean over first {EARLY_RATE_PERIODS} periods [%/yr]: {:.3}",
            100.0 * avg
        );
    }
    if let Some(r) = &outcome.rates {
        let missing = r.points.iter().filter(|p| p.r_scc.is_none()).count();
        if missing > 0 {
            let _ = writeln!(s, "r_SCC undefined in {missing} periods");
        }
    }
    if let Some(d) = &outcome.decomposition {
        let _ = writeln!(
            s,
            "rate decomposition gap at start [relative]: {:.3e}",
            d.relative_gap()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_has_ten_significant_digits() {
        assert_eq!(format_number(523.4187654321), "523.4187654");
        assert_eq!(format_number(0.0012345678912), "0.001234567891");
        assert_eq!(format_number(-1.5), "-1.500000000");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(12345678901.0), "12345678901");
    }

    #[test]
    fn overrides_parse_literals_and_nest() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "model.numeraire_rate", "0.02").unwrap();
        apply_override(&mut t, "analytics.horizons", "[150]").unwrap();
        apply_override(&mut t, "parameters", "custom.toml").unwrap();
        assert_eq!(t["model"]["numeraire_rate"].as_float(), Some(0.02));
        assert_eq!(t["analytics"]["horizons"].as_array().unwrap().len(), 1);
        assert_eq!(t["parameters"].as_str(), Some("custom.toml"));
        assert!(apply_override(&mut t, "parameters.x", "1").is_err());
    }

    fn default_config() -> ScenarioConfig {
        ScenarioConfig {
            output_dir: Some(std::env::temp_dir().join("dicecarbon-unit")),
            ..Default::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        assert_eq!(validate_config(&default_config()), vec![]);
    }

    #[test]
    fn negative_numeraire_rate_is_named() {
        let mut c = default_config();
        apply_override(&mut c.model, "numeraire_rate", "-0.01").unwrap();
        let v = validate_config(&c);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "numeraire_rate");
    }

    #[test]
    fn horizon_beyond_model_is_a_violation() {
        let mut c = default_config();
        c.analytics.horizons = vec![150.0, 600.0];
        let v = validate_config(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "analytics.horizons[1]");
    }

    #[test]
    fn unreadable_files_become_violations() {
        let mut c = default_config();
        c.parameters = "/nonexistent/params.toml".into();
        c.policy.calibrate = false;
        c.policy.load = Some("/nonexistent/policy.csv".into());
        let fields: Vec<String> = validate_config(&c).into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&"parameters".to_string()));
    }

    #[test]
    fn exactly_one_policy_source() {
        let mut c = default_config();
        c.policy.load = Some("policy.csv".into());
        assert!(validate_config(&c).iter().any(|v| v.field == "policy"));
        c.policy.load = None;
        c.policy.calibrate = false;
        assert!(validate_config(&c).iter().any(|v| v.field == "policy"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let e = ScenarioConfig::from_toml_str("[analytics]\nprice = true\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn file_output_dir_is_not_writable() {
        let file = std::env::temp_dir().join("dicecarbon-unit-file");
        fs::write(&file, "x").unwrap();
        let c = ScenarioConfig {
            output_dir: Some(file.join("sub")),
            ..Default::default()
        };
        assert!(validate_config(&c).iter().any(|v| v.field == "output_dir"));
    }
}
