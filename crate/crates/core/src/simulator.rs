//! Trial execution.
//!
//! The server trains with one device at a time ("line manner"): each device
//! runs all of its rounds back to back before the next device is selected.
//! The simulated clock advances by every completed round's delay and the
//! channel is re-evaluated from each vehicle's trajectory at round start.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    distance_at, link_snapshot, ChannelError, ChannelModel, LinkSnapshot, Regime, Shadowing, Trajectory,
};
use crate::cost_model::{CostError, CostOptions, DeviceProfile, RoundMetrics, RoundShape, ServerProfile};
use crate::kd_numerics::KdLossConfig;
use crate::model_profile::{ModelProfile, ModelSpec, ProfileError};
use crate::planner::{
    baseline, optimize, select_next_device, BaselineMode, PlanError, PlanningProblem, SchedulingPolicy,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("device index {0} out of range")]
    NoSuchDevice(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    ServerOnly,
    DeviceOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::ServerOnly, Method::DeviceOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ServerOnly => "server-only",
            Method::DeviceOnly => "device-only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "server-only" | "server_only" => Ok(Method::ServerOnly),
            "device-only" | "device_only" => Ok(Method::DeviceOnly),
            _ => Err(SimError::Invalid(format!("unknown method `{s}`"))),
        }
    }
}

/// One vehicle: hardware, motion and local training length.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSetup {
    pub profile: DeviceProfile,
    pub trajectory: Trajectory,
    pub local_epochs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload {
    pub seq_len: u64,
    pub batch_size: u64,
    pub batches_per_epoch: u32,
    pub rounds_per_device: u32,
    /// Activation/gradient bytes per element on the wire.
    pub precision_bytes: u32,
    pub activation_compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Regime used when a single one is requested without naming it.
    pub regime: Regime,
    pub delay_budget_s: f64,
    pub scheduling: SchedulingPolicy,
    pub workload: Workload,
    pub cost: CostOptions,
    pub distillation: KdLossConfig,
    pub student: ModelSpec,
    pub teacher: ModelSpec,
    /// Noise density is overridden per trial by the regime preset.
    pub channel: ChannelModel,
    /// Log-normal shadowing standard deviation; 0 disables it.
    pub shadowing_sigma_db: f64,
    pub server: ServerProfile,
    pub devices: Vec<DeviceSetup>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: &str| Err(SimError::Invalid(m.to_string()));
        if self.devices.is_empty() {
            return invalid("at least one device is required");
        }
        if self.delay_budget_s.is_nan() || self.delay_budget_s <= 0.0 {
            return invalid("delay_budget_s must be positive");
        }
        let w = &self.workload;
        if w.seq_len == 0 || w.batch_size == 0 || w.batches_per_epoch == 0 || w.precision_bytes == 0 {
            return invalid("workload counts must be positive");
        }
        if !(w.activation_compression_ratio > 0.0 && w.activation_compression_ratio <= 1.0) {
            return invalid("activation_compression_ratio must be in (0, 1]");
        }
        if !(self.shadowing_sigma_db >= 0.0 && self.shadowing_sigma_db.is_finite()) {
            return invalid("shadowing_sigma_db must be >= 0");
        }
        self.distillation
            .validate()
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        self.channel.validate()?;
        self.server.validate()?;
        for d in &self.devices {
            d.profile.validate()?;
            d.trajectory.validate()?;
            if d.local_epochs == 0 {
                return invalid("local_epochs must be positive");
            }
        }
        self.build_models()?;
        Ok(())
    }

    pub fn build_models(&self) -> Result<(ModelProfile, ModelProfile), ProfileError> {
        let w = &self.workload;
        Ok((
            self.student.build(w.seq_len, w.precision_bytes)?,
            self.teacher.build(w.seq_len, w.precision_bytes)?,
        ))
    }

    fn shadowing(&self) -> Shadowing {
        Shadowing {
            sigma_db: self.shadowing_sigma_db,
            seed: self.seed,
        }
    }
}

/// Why a round produced no metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unavailable {
    /// CQI 0 on a link that has data to move.
    LinkOutage,
    /// Round start lies past the end of the vehicle's trajectory.
    OutOfCoverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum RoundOutcome {
    Completed {
        metrics: RoundMetrics,
        /// Delay within the round budget.
        feasible: bool,
        evaluated_candidates: usize,
    },
    Unavailable(Unavailable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub method: Method,
    pub regime: Regime,
    pub device: usize,
    pub device_name: String,
    pub round: u32,
    pub t_start_s: f64,
    pub link: Option<LinkSnapshot>,
    pub outcome: RoundOutcome,
}

impl RoundRecord {
    pub fn metrics(&self) -> Option<&RoundMetrics> {
        match &self.outcome {
            RoundOutcome::Completed { metrics, .. } => Some(metrics),
            RoundOutcome::Unavailable(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.outcome, RoundOutcome::Completed { feasible: true, .. })
    }

    /// Metrics of a round that met its budget.
    pub fn feasible_metrics(&self) -> Option<&RoundMetrics> {
        self.metrics().filter(|_| self.is_feasible())
    }

    pub fn status(&self) -> &'static str {
        match &self.outcome {
            RoundOutcome::Completed { feasible: true, .. } => "ok",
            RoundOutcome::Completed { feasible: false, .. } => "over_budget",
            RoundOutcome::Unavailable(Unavailable::LinkOutage) => "link_outage",
            RoundOutcome::Unavailable(Unavailable::OutOfCoverage) => "out_of_coverage",
        }
    }
}

/// Means over the feasible rounds of a trial; infeasible rounds are counted
/// in `excluded_rounds` and left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rounds: usize,
    pub feasible_rounds: usize,
    pub excluded_rounds: usize,
    pub mean_delay_s: Option<f64>,
    pub mean_energy_j: Option<f64>,
    pub mean_device_energy_j: Option<f64>,
    pub mean_server_energy_j: Option<f64>,
    pub mean_comm_energy_j: Option<f64>,
}

impl Aggregate {
    pub fn from_records(records: &[RoundRecord]) -> Self {
        let feasible: Vec<&RoundMetrics> = records.iter().filter_map(RoundRecord::feasible_metrics).collect();
        let mean = |f: fn(&RoundMetrics) -> f64| {
            if feasible.is_empty() {
                None
            } else {
                Some(feasible.iter().map(|m| f(m)).sum::<f64>() / feasible.len() as f64)
            }
        };
        Self {
            rounds: records.len(),
            feasible_rounds: feasible.len(),
            excluded_rounds: records.len() - feasible.len(),
            mean_delay_s: mean(|m| m.delay_s),
            mean_energy_j: mean(|m| m.total_energy_j),
            mean_device_energy_j: mean(|m| m.device_energy_j),
            mean_server_energy_j: mean(|m| m.server_energy_j),
            mean_comm_energy_j: mean(|m| m.comm_energy_j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: Method,
    pub regime: Regime,
    /// Records in service order.
    pub rounds: Vec<RoundRecord>,
    pub aggregate: Aggregate,
    /// Simulated time at the end of the trial.
    pub wall_clock_s: f64,
}

impl TrialReport {
    /// True when the trial had rounds and none of them met the budget.
    pub fn infeasible_everywhere(&self) -> bool {
        self.aggregate.rounds > 0 && self.aggregate.feasible_rounds == 0
    }
}

struct TrialContext<'a> {
    scenario: &'a Scenario,
    channel: ChannelModel,
    student: ModelProfile,
    teacher: ModelProfile,
    shadowing: Shadowing,
}

impl<'a> TrialContext<'a> {
    fn new(scenario: &'a Scenario, regime: Regime) -> Result<Self, SimError> {
        scenario.validate()?;
        let (student, teacher) = scenario.build_models()?;
        Ok(Self {
            scenario,
            channel: scenario.channel.with_regime(regime),
            student,
            teacher,
            shadowing: scenario.shadowing(),
        })
    }

    fn link(&self, device: usize, round: u32, t_s: f64) -> Result<Option<LinkSnapshot>, SimError> {
        let traj = &self.scenario.devices[device].trajectory;
        if t_s > traj.duration_s {
            return Ok(None);
        }
        let distance = distance_at(traj, t_s)?;
        let shadow = self.shadowing.sample_db(device, round as usize);
        Ok(Some(link_snapshot(&self.channel, distance, shadow)?))
    }

    fn round(
        &self,
        device: usize,
        round: u32,
        t_start_s: f64,
        regime: Regime,
        method: Method,
    ) -> Result<RoundRecord, SimError> {
        let setup = self
            .scenario
            .devices
            .get(device)
            .ok_or(SimError::NoSuchDevice(device))?;
        let link = self.link(device, round, t_start_s)?;
        let mut record = RoundRecord {
            method,
            regime,
            device,
            device_name: setup.profile.name.clone(),
            round,
            t_start_s,
            link,
            outcome: RoundOutcome::Unavailable(Unavailable::OutOfCoverage),
        };
        let Some(link) = link else {
            return Ok(record);
        };
        let w = &self.scenario.workload;
        let problem = PlanningProblem {
            device: &setup.profile,
            server: &self.scenario.server,
            student: &self.student,
            teacher: &self.teacher,
            bitrate_up_bps: link.bitrate_up_bps,
            bitrate_down_bps: link.bitrate_down_bps,
            delay_budget_s: self.scenario.delay_budget_s,
            shape: RoundShape {
                local_epochs: setup.local_epochs,
                batches_per_epoch: w.batches_per_epoch,
            },
            batch_size: w.batch_size,
            precision_bytes: w.precision_bytes,
            compression_ratio: w.activation_compression_ratio,
            cost: self.scenario.cost,
        };
        let planned = match method {
            Method::Proposed => optimize(&problem),
            Method::ServerOnly => baseline(&problem, BaselineMode::ServerOnly),
            Method::DeviceOnly => baseline(&problem, BaselineMode::DeviceOnly),
        };
        record.outcome = match planned {
            Ok(r) => RoundOutcome::Completed {
                metrics: r.metrics,
                feasible: r.feasible,
                evaluated_candidates: r.evaluated_candidates,
            },
            Err(e) if e.is_link_outage() => RoundOutcome::Unavailable(Unavailable::LinkOutage),
            Err(e) => return Err(e.into()),
        };
        Ok(record)
    }
}

/// Runs a single round for `device` starting at `t_start_s`.
pub fn run_round(
    scenario: &Scenario,
    device: usize,
    round: u32,
    t_start_s: f64,
    regime: Regime,
    method: Method,
) -> Result<RoundRecord, SimError> {
    TrialContext::new(scenario, regime)?.round(device, round, t_start_s, regime, method)
}

pub fn run_trial(scenario: &Scenario, regime: Regime, method: Method) -> Result<TrialReport, SimError> {
    let ctx = TrialContext::new(scenario, regime)?;
    let n = scenario.devices.len();
    let mut served = vec![false; n];
    let mut clock = 0.0;
    let mut rounds = Vec::with_capacity(n * scenario.workload.rounds_per_device as usize);

    for _ in 0..n {
        let rates = (0..n)
            .map(|d| {
                if served[d] {
                    return Ok(0.0);
                }
                Ok(ctx.link(d, 0, clock)?.map_or(0.0, |l| l.bitrate_up_bps))
            })
            .collect::<Result<Vec<f64>, SimError>>()?;
        let device = select_next_device(&rates, &served, scenario.scheduling)?;
        served[device] = true;
        for r in 0..scenario.workload.rounds_per_device {
            let record = ctx.round(device, r, clock, regime, method)?;
            if let Some(m) = record.metrics() {
                clock += m.delay_s;
            }
            rounds.push(record);
        }
    }

    Ok(TrialReport {
        method,
        regime,
        aggregate: Aggregate::from_records(&rounds),
        rounds,
        wall_clock_s: clock,
    })
}

/// Trials of several methods and regimes on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub scenario_name: String,
    pub seed: u64,
    pub delay_budget_s: f64,
    /// Ordered by regime, then method.
    pub trials: Vec<TrialReport>,
}

/// One line of the method comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub regime: Regime,
    pub method: Method,
    pub aggregate: Aggregate,
    /// `(baseline - this) / baseline`, for the proposed method only.
    pub delay_reduction_vs_server_only: Option<f64>,
    pub energy_reduction_vs_server_only: Option<f64>,
    pub delay_reduction_vs_device_only: Option<f64>,
    pub energy_reduction_vs_device_only: Option<f64>,
}

fn reduction(baseline: Option<f64>, ours: Option<f64>) -> Option<f64> {
    match (baseline, ours) {
        (Some(b), Some(o)) if b != 0.0 => Some((b - o) / b),
        _ => None,
    }
}

impl TrialSet {
    pub fn trial(&self, regime: Regime, method: Method) -> Option<&TrialReport> {
        self.trials.iter().find(|t| t.regime == regime && t.method == method)
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.trials
            .iter()
            .map(|t| {
                let base = |m: Method| self.trial(t.regime, m).map(|b| b.aggregate);
                let (so, d) = (base(Method::ServerOnly), base(Method::DeviceOnly));
                let ours = t.aggregate;
                let is_proposed = t.method == Method::Proposed;
                let red = |b: Option<Aggregate>, f: fn(&Aggregate) -> Option<f64>| {
                    if is_proposed {
                        b.and_then(|b| reduction(f(&b), f(&ours)))
                    } else {
                        None
                    }
                };
                SummaryRow {
                    regime: t.regime,
                    method: t.method,
                    aggregate: ours,
                    delay_reduction_vs_server_only: red(so, |a| a.mean_delay_s),
                    energy_reduction_vs_server_only: red(so, |a| a.mean_energy_j),
                    delay_reduction_vs_device_only: red(d, |a| a.mean_delay_s),
                    energy_reduction_vs_device_only: red(d, |a| a.mean_energy_j),
                }
            })
            .collect()
    }

    pub fn infeasible_everywhere(&self) -> bool {
        self.trials.iter().any(TrialReport::infeasible_everywhere)
    }
}

/// Runs `methods` under each regime on the same scenario and seed.
pub fn run_trials(scenario: &Scenario, regimes: &[Regime], methods: &[Method]) -> Result<TrialSet, SimError> {
    let mut regimes = regimes.to_vec();
    regimes.sort();
    regimes.dedup();
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    // independent trials; merge in (regime, method) order
    let trials = std::thread::scope(|s| {
        let handles: Vec<_> = regimes
            .iter()
            .flat_map(|&r| methods.iter().map(move |&m| (r, m)))
            .map(|(r, m)| s.spawn(move || run_trial(scenario, r, m)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;

    Ok(TrialSet {
        scenario_name: scenario.name.clone(),
        seed: scenario.seed,
        delay_budget_s: scenario.delay_budget_s,
        trials,
    })
}

/// Proposed, server-only and device-only under each regime.
pub fn compare_methods(scenario: &Scenario, regimes: &[Regime]) -> Result<TrialSet, SimError> {
    run_trials(scenario, regimes, &Method::ALL)
}
