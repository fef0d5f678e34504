//! Scenario files, report serialization and the model catalog.
//!
//! Scenarios are TOML. Unknown keys are rejected, optional keys fall back to
//! the defaults documented on each field, and [`scenario_to_toml`] writes the
//! fully resolved form so a loaded scenario round-trips unchanged.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelModel, CqiTable, Regime, Trajectory, DEFAULT_SPEED_MPS};
use crate::cost_model::{even_freq_levels, CostOptions, DeviceProfile, Phase, ServerProfile};
use crate::kd_numerics::KdLossConfig;
use crate::model_profile::ModelSpec;
use crate::planner::SchedulingPolicy;
use crate::simulator::{DeviceSetup, RoundOutcome, Scenario, SimError, TrialSet, Workload};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

const DEFAULT_SCENARIO: &str = include_str!("../data/default_scenario.toml");
const CATALOG_CSV: &str = include_str!("../data/catalog.csv");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("catalog data is corrupt: {0}")]
    Catalog(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

fn default_local_epochs() -> u32 {
    1
}
fn default_precision() -> u32 {
    2
}
fn default_ratio() -> f64 {
    1.0
}
fn default_exponent() -> f64 {
    2.9
}
fn default_ref_distance() -> f64 {
    1.0
}
fn default_fpc() -> f64 {
    2.0
}
fn default_util() -> f64 {
    0.4
}
fn default_speed() -> f64 {
    DEFAULT_SPEED_MPS
}
fn default_true() -> bool {
    true
}
fn default_level_count() -> usize {
    8
}
fn default_min_fraction() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    pub delay_budget_s: f64,
    #[serde(default)]
    pub scheduling: SchedulingPolicy,
    pub workload: WorkloadFile,
    #[serde(default)]
    pub cost: CostFile,
    #[serde(default)]
    pub distillation: KdLossConfig,
    pub student: ModelSpec,
    pub teacher: ModelSpec,
    pub channel: ChannelFile,
    pub server: ServerFile,
    pub devices: Vec<DeviceFile>,
}

fn default_regime() -> Regime {
    Regime::Good
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub seq_len: u64,
    pub batch_size: u64,
    pub batches_per_epoch: u32,
    pub rounds_per_device: u32,
    /// Applied to devices that do not set their own. Default 1.
    #[serde(default = "default_local_epochs")]
    pub local_epochs: u32,
    /// Default 2 (16-bit activations).
    #[serde(default = "default_precision")]
    pub precision_bytes: u32,
    /// Default 1.0 (no compression).
    #[serde(default = "default_ratio")]
    pub activation_compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(default = "default_true")]
    pub include_server_static_energy: bool,
}

impl Default for CostFile {
    fn default() -> Self {
        Self {
            include_server_static_energy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub bandwidth_hz: f64,
    pub device_tx_power_dbm: f64,
    pub server_tx_power_dbm: f64,
    pub pathloss_ref_db: f64,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_ref_distance")]
    pub ref_distance_m: f64,
    #[serde(default)]
    pub cqi_margin_db: f64,
    #[serde(default)]
    pub shadowing_sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerFile {
    pub name: String,
    /// Explicit DVFS levels. When absent, `freq_level_count` levels are
    /// spread evenly from `freq_min_fraction * max_gpu_freq_hz` to the max.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_levels_hz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gpu_freq_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_level_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_min_fraction: Option<f64>,
    pub cores: u32,
    #[serde(default = "default_fpc")]
    pub flops_per_cycle_per_core: f64,
    #[serde(default = "default_util")]
    pub compute_utilization: f64,
    pub effective_capacitance: f64,
    pub static_power_w: f64,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub name: String,
    pub max_gpu_freq_hz: f64,
    pub cores: u32,
    #[serde(default = "default_fpc")]
    pub flops_per_cycle_per_core: f64,
    #[serde(default = "default_util")]
    pub compute_utilization: f64,
    pub effective_capacitance: f64,
    pub static_power_w: f64,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_epochs: Option<u32>,
    pub trajectory: TrajectoryFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub start_distance_m: f64,
    pub closest_approach_m: f64,
    /// Default 30 km/h.
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    pub duration_s: f64,
}

impl ServerFile {
    fn levels(&self) -> Result<Vec<f64>, ConfigError> {
        match (&self.freq_levels_hz, self.max_gpu_freq_hz) {
            (Some(levels), max) => {
                if self.freq_level_count.is_some() || self.freq_min_fraction.is_some() {
                    return Err(invalid(
                        "server.freq_levels_hz",
                        "cannot be combined with freq_level_count/freq_min_fraction",
                    ));
                }
                if let (Some(max), Some(last)) = (max, levels.last()) {
                    if max != *last {
                        return Err(invalid("server.max_gpu_freq_hz", "must equal the last frequency level"));
                    }
                }
                Ok(levels.clone())
            }
            (None, Some(max)) => {
                let n = self.freq_level_count.unwrap_or_else(default_level_count);
                let lo = self.freq_min_fraction.unwrap_or_else(default_min_fraction);
                if n == 0 {
                    return Err(invalid("server.freq_level_count", "must be positive"));
                }
                if !(lo > 0.0 && lo <= 1.0) {
                    return Err(invalid("server.freq_min_fraction", "must be in (0, 1]"));
                }
                Ok(even_freq_levels(max, lo, n))
            }
            (None, None) => Err(invalid(
                "server",
                "either freq_levels_hz or max_gpu_freq_hz is required",
            )),
        }
    }
}

fn sim_to_config(e: SimError) -> ConfigError {
    match e {
        SimError::Invalid(reason) => invalid("scenario", reason),
        SimError::Cost(e) => invalid("profile", e.to_string()),
        SimError::Channel(e) => invalid("channel", e.to_string()),
        SimError::Profile(e) => invalid("model", e.to_string()),
        other => invalid("scenario", other.to_string()),
    }
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<Scenario, ConfigError> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
                expected: SCENARIO_SCHEMA_VERSION,
            });
        }
        if !(self.delay_budget_s > 0.0 && !self.delay_budget_s.is_nan()) {
            return Err(invalid("delay_budget_s", "must be positive"));
        }
        if self.devices.is_empty() {
            return Err(invalid("devices", "at least one device is required"));
        }
        if self.workload.local_epochs == 0 {
            return Err(invalid("workload.local_epochs", "must be positive"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        let s = &self.server;
        let server = ServerProfile {
            name: s.name.clone(),
            freq_levels_hz: s.levels()?,
            cores: s.cores,
            flops_per_cycle_per_core: s.flops_per_cycle_per_core,
            compute_utilization: s.compute_utilization,
            effective_capacitance: s.effective_capacitance,
            static_power_w: s.static_power_w,
            tx_power_w: s.tx_power_w,
            rx_power_w: s.rx_power_w,
        };
        let devices = self
            .devices
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let epochs = d.local_epochs.unwrap_or(self.workload.local_epochs);
                if epochs == 0 {
                    return Err(invalid(format!("devices[{i}].local_epochs"), "must be positive"));
                }
                Ok(DeviceSetup {
                    profile: DeviceProfile {
                        name: d.name.clone(),
                        max_gpu_freq_hz: d.max_gpu_freq_hz,
                        cores: d.cores,
                        flops_per_cycle_per_core: d.flops_per_cycle_per_core,
                        compute_utilization: d.compute_utilization,
                        effective_capacitance: d.effective_capacitance,
                        static_power_w: d.static_power_w,
                        tx_power_w: d.tx_power_w,
                        rx_power_w: d.rx_power_w,
                    },
                    trajectory: Trajectory {
                        start_distance_m: d.trajectory.start_distance_m,
                        closest_approach_m: d.trajectory.closest_approach_m,
                        speed_mps: d.trajectory.speed_mps,
                        duration_s: d.trajectory.duration_s,
                    },
                    local_epochs: epochs,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let c = &self.channel;
        let scenario = Scenario {
            name: self.name.clone(),
            seed: self.seed,
            regime: self.regime,
            delay_budget_s: self.delay_budget_s,
            scheduling: self.scheduling,
            workload: Workload {
                seq_len: self.workload.seq_len,
                batch_size: self.workload.batch_size,
                batches_per_epoch: self.workload.batches_per_epoch,
                rounds_per_device: self.workload.rounds_per_device,
                precision_bytes: self.workload.precision_bytes,
                activation_compression_ratio: self.workload.activation_compression_ratio,
            },
            cost: CostOptions {
                include_server_static_energy: self.cost.include_server_static_energy,
            },
            distillation: self.distillation,
            student: self.student.clone(),
            teacher: self.teacher.clone(),
            channel: ChannelModel {
                noise_density_dbm_per_hz: self.regime.noise_density_dbm_per_hz(),
                bandwidth_hz: c.bandwidth_hz,
                device_tx_power_dbm: c.device_tx_power_dbm,
                server_tx_power_dbm: c.server_tx_power_dbm,
                pathloss_ref_db: c.pathloss_ref_db,
                pathloss_exponent: c.pathloss_exponent,
                ref_distance_m: c.ref_distance_m,
                cqi_margin_db: c.cqi_margin_db,
                cqi_table: CqiTable::nr_table1(),
            },
            shadowing_sigma_db: c.shadowing_sigma_db,
            server,
            devices,
        };
        scenario.validate().map_err(sim_to_config)?;
        Ok(scenario)
    }

    /// Fully explicit file form of a resolved scenario.
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: s.name.clone(),
            seed: s.seed,
            regime: s.regime,
            delay_budget_s: s.delay_budget_s,
            scheduling: s.scheduling,
            workload: WorkloadFile {
                seq_len: s.workload.seq_len,
                batch_size: s.workload.batch_size,
                batches_per_epoch: s.workload.batches_per_epoch,
                rounds_per_device: s.workload.rounds_per_device,
                local_epochs: default_local_epochs(),
                precision_bytes: s.workload.precision_bytes,
                activation_compression_ratio: s.workload.activation_compression_ratio,
            },
            cost: CostFile {
                include_server_static_energy: s.cost.include_server_static_energy,
            },
            distillation: s.distillation,
            student: s.student.clone(),
            teacher: s.teacher.clone(),
            channel: ChannelFile {
                bandwidth_hz: s.channel.bandwidth_hz,
                device_tx_power_dbm: s.channel.device_tx_power_dbm,
                server_tx_power_dbm: s.channel.server_tx_power_dbm,
                pathloss_ref_db: s.channel.pathloss_ref_db,
                pathloss_exponent: s.channel.pathloss_exponent,
                ref_distance_m: s.channel.ref_distance_m,
                cqi_margin_db: s.channel.cqi_margin_db,
                shadowing_sigma_db: s.shadowing_sigma_db,
            },
            server: ServerFile {
                name: s.server.name.clone(),
                freq_levels_hz: Some(s.server.freq_levels_hz.clone()),
                max_gpu_freq_hz: None,
                freq_level_count: None,
                freq_min_fraction: None,
                cores: s.server.cores,
                flops_per_cycle_per_core: s.server.flops_per_cycle_per_core,
                compute_utilization: s.server.compute_utilization,
                effective_capacitance: s.server.effective_capacitance,
                static_power_w: s.server.static_power_w,
                tx_power_w: s.server.tx_power_w,
                rx_power_w: s.server.rx_power_w,
            },
            devices: s
                .devices
                .iter()
                .map(|d| DeviceFile {
                    name: d.profile.name.clone(),
                    max_gpu_freq_hz: d.profile.max_gpu_freq_hz,
                    cores: d.profile.cores,
                    flops_per_cycle_per_core: d.profile.flops_per_cycle_per_core,
                    compute_utilization: d.profile.compute_utilization,
                    effective_capacitance: d.profile.effective_capacitance,
                    static_power_w: d.profile.static_power_w,
                    tx_power_w: d.profile.tx_power_w,
                    rx_power_w: d.profile.rx_power_w,
                    local_epochs: Some(d.local_epochs),
                    trajectory: TrajectoryFile {
                        start_distance_m: d.trajectory.start_distance_m,
                        closest_approach_m: d.trajectory.closest_approach_m,
                        speed_mps: d.trajectory.speed_mps,
                        duration_s: d.trajectory.duration_s,
                    },
                })
                .collect(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    file.resolve()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

/// The shipped case-study scenario.
pub fn default_scenario() -> Scenario {
    parse_scenario(DEFAULT_SCENARIO).expect("shipped default scenario is valid")
}

pub fn default_scenario_text() -> &'static str {
    DEFAULT_SCENARIO
}

pub fn scenario_to_toml(s: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from_scenario(s)).expect("scenario serializes to TOML")
}

/// Formats `x` with 9 significant digits, `%.9g` style.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("exponent digits");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let (mant, _) = sci.split_at(sci.find('e').expect("exponent"));
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{exp}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// CSV, one row per device-round.
    TableRows,
    /// Fixed-width method x regime comparison.
    SummaryText,
}

pub fn table_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "method",
        "regime",
        "device",
        "device_name",
        "round",
        "t_start_s",
        "distance_m",
        "cqi_up",
        "cqi_down",
        "bitrate_up_bps",
        "bitrate_down_bps",
        "status",
        "cut_index",
        "gpu_frequency_hz",
        "candidates",
        "delay_s",
        "device_energy_j",
        "server_energy_j",
        "comm_energy_j",
        "total_energy_j",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for p in Phase::ALL {
        cols.push(format!("delay_{p}_s"));
    }
    for p in Phase::ALL {
        cols.push(format!("energy_{p}_j"));
    }
    cols
}

fn table_rows(set: &TrialSet) -> Vec<u8> {
    let mut out = format!("# splitkd round table, schema_version={REPORT_SCHEMA_VERSION}\n").into_bytes();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(table_columns()).expect("in-memory write");
    for trial in &set.trials {
        for r in &trial.rounds {
            let mut row = vec![
                r.method.to_string(),
                r.regime.to_string(),
                r.device.to_string(),
                r.device_name.clone(),
                r.round.to_string(),
                fmt_sig(r.t_start_s),
                opt(r.link.map(|l| l.distance_m)),
                r.link.map(|l| l.cqi_up.to_string()).unwrap_or_default(),
                r.link.map(|l| l.cqi_down.to_string()).unwrap_or_default(),
                opt(r.link.map(|l| l.bitrate_up_bps)),
                opt(r.link.map(|l| l.bitrate_down_bps)),
                r.status().to_string(),
            ];
            match &r.outcome {
                RoundOutcome::Completed {
                    metrics: m,
                    evaluated_candidates,
                    ..
                } => {
                    row.push(m.plan.cut_index.to_string());
                    row.push(fmt_sig(m.plan.gpu_frequency_hz));
                    row.push(evaluated_candidates.to_string());
                    for v in [
                        m.delay_s,
                        m.device_energy_j,
                        m.server_energy_j,
                        m.comm_energy_j,
                        m.total_energy_j,
                    ] {
                        row.push(fmt_sig(v));
                    }
                    row.extend(m.phases.iter().map(|p| fmt_sig(p.delay_s)));
                    row.extend(m.phases.iter().map(|p| fmt_sig(p.energy_j)));
                }
                RoundOutcome::Unavailable(_) => row.extend(std::iter::repeat_n(String::new(), 8 + 12)),
            }
            w.write_record(&row).expect("in-memory write");
        }
    }
    out.extend(w.into_inner().expect("flush in-memory writer"));
    out
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}%", 100.0 * v))
        .unwrap_or_else(|| "-".to_string())
}

fn summary_text(set: &TrialSet) -> Vec<u8> {
    let mut s = String::new();
    let _ = writeln!(s, "# splitkd summary, schema_version={REPORT_SCHEMA_VERSION}");
    let _ = writeln!(s, "# scenario: {}", set.scenario_name);
    let _ = writeln!(s, "# seed: {}", set.seed);
    let _ = writeln!(s, "# delay_budget_s: {}", fmt_sig(set.delay_budget_s));
    let _ = writeln!(s, "# means over feasible rounds; excluded = infeasible rounds left out");
    let _ = writeln!(
        s,
        "{:<8} {:<12} {:>6} {:>8} {:>8} {:>16} {:>16} {:>12} {:>12} {:>12} {:>12}",
        "regime",
        "method",
        "rounds",
        "feasible",
        "excluded",
        "mean_delay_s",
        "mean_energy_j",
        "d_delay_so",
        "d_energy_so",
        "d_delay_do",
        "d_energy_do"
    );
    for row in set.summary_rows() {
        let a = row.aggregate;
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:>6} {:>8} {:>8} {:>16} {:>16} {:>12} {:>12} {:>12} {:>12}",
            row.regime.as_str(),
            row.method.as_str(),
            a.rounds,
            a.feasible_rounds,
            a.excluded_rounds,
            a.mean_delay_s.map(fmt_sig).unwrap_or_else(|| "-".into()),
            a.mean_energy_j.map(fmt_sig).unwrap_or_else(|| "-".into()),
            pct(row.delay_reduction_vs_server_only),
            pct(row.energy_reduction_vs_server_only),
            pct(row.delay_reduction_vs_device_only),
            pct(row.energy_reduction_vs_device_only),
        );
    }
    s.into_bytes()
}

/// Deterministic serialization of a trial set.
pub fn emit_report(set: &TrialSet, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::TableRows => table_rows(set),
        ReportFormat::SummaryText => summary_text(set),
    }
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> std::io::Result<()> {
    let path = path.as_ref();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const RESOLVED_SCENARIO_FILE: &str = "scenario.resolved.toml";

/// Writes the round table, the summary and the resolved scenario into `dir`.
pub fn write_reports(dir: impl AsRef<Path>, scenario: &Scenario, set: &TrialSet) -> std::io::Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let files = [
        (ROUNDS_FILE, emit_report(set, ReportFormat::TableRows)),
        (SUMMARY_FILE, emit_report(set, ReportFormat::SummaryText)),
        (RESOLVED_SCENARIO_FILE, scenario_to_toml(scenario).into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// One row of the informational distillation catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub teacher: String,
    pub teacher_size_gb: f64,
    pub distillation_type: String,
    pub student: String,
    pub student_size_gb: f64,
    pub compression_rate: u32,
    pub performance: String,
}

impl CatalogEntry {
    pub fn size_ratio(&self) -> f64 {
        self.teacher_size_gb / self.student_size_gb
    }

    /// Published sizes are rounded, so the stated rate is matched within 5%.
    pub fn rate_consistent(&self) -> bool {
        let rate = f64::from(self.compression_rate);
        (self.size_ratio() - rate).abs() <= 0.05 * rate
    }
}

pub fn parse_catalog(text: &str) -> Result<Vec<CatalogEntry>, ConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let entries = reader
        .deserialize::<CatalogEntry>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ConfigError::Catalog(e.to_string()))?;
    if let Some(bad) = entries
        .iter()
        .find(|e| !(e.student_size_gb > 0.0 && e.teacher_size_gb > 0.0))
    {
        return Err(ConfigError::Catalog(format!("non-positive size for {}", bad.student)));
    }
    Ok(entries)
}

pub fn catalog_list() -> Result<Vec<CatalogEntry>, ConfigError> {
    parse_catalog(CATALOG_CSV)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(2.52e9), "2.52e9");
        assert_eq!(fmt_sig(123_456_789.0), "123456789");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(-2.5e-7), "-2.5e-7");
        assert_eq!(fmt_sig(99.999_999_999), "100");
        assert_eq!(fmt_sig(0.000_123_456_789_123), "0.000123456789");
    }

    #[test]
    fn catalog_rows() {
        let c = catalog_list().unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(c[0].teacher_size_gb, 700.0);
        assert_eq!(c[0].student, "MT-CoT");
        assert_eq!(c[0].student_size_gb, 12.0);
        assert_eq!(c[0].compression_rate, 58);
        assert!(c.iter().all(CatalogEntry::rate_consistent));
    }

    #[test]
    fn corrupt_catalog() {
        assert!(parse_catalog("teacher,teacher_size_gb\nx,notanumber\n").is_err());
    }

    #[test]
    fn default_scenario_loads() {
        let s = default_scenario();
        assert_eq!(s.devices.len(), 10);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = default_scenario_text().replacen("seed =", "mystery = 3\nseed =", 1);
        assert!(matches!(parse_scenario(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn zero_budget_rejected() {
        let mut file: ScenarioFile = toml::from_str(default_scenario_text()).unwrap();
        file.delay_budget_s = 0.0;
        match file.resolve() {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "delay_budget_s"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_version_checked() {
        let mut file: ScenarioFile = toml::from_str(default_scenario_text()).unwrap();
        file.schema_version = 9;
        assert!(matches!(
            file.resolve(),
            Err(ConfigError::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn round_trip() {
        let s = default_scenario();
        let again = parse_scenario(&scenario_to_toml(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_scenario("/nonexistent/x.toml"),
            Err(ConfigError::Io { .. })
        ));
    }
}
