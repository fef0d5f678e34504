//! Cut-layer and server-frequency selection.
//!
//! The search space is small (cuts x DVFS levels), so [`optimize`] evaluates
//! every candidate and picks the minimum-energy plan that meets the round
//! delay budget.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{round_cost, CostError, CostOptions, DeviceProfile, RoundMetrics, RoundShape, ServerProfile};
use crate::model_profile::{split_workload, CutPlan, ModelProfile, ProfileError, WorkloadSplit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("delay budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("every device has already been served")]
    AllServed,
    #[error("device set is empty")]
    NoDevices,
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
}

impl PlanError {
    pub fn is_link_outage(&self) -> bool {
        matches!(self, PlanError::Cost(CostError::LinkOutage { .. }))
    }
}

/// Everything needed to plan one round for one device.
#[derive(Debug, Clone, Copy)]
pub struct PlanningProblem<'a> {
    pub device: &'a DeviceProfile,
    pub server: &'a ServerProfile,
    pub student: &'a ModelProfile,
    pub teacher: &'a ModelProfile,
    pub bitrate_up_bps: f64,
    pub bitrate_down_bps: f64,
    /// D_max, seconds per round.
    pub delay_budget_s: f64,
    pub shape: RoundShape,
    pub batch_size: u64,
    pub precision_bytes: u32,
    pub compression_ratio: f64,
    pub cost: CostOptions,
}

impl PlanningProblem<'_> {
    fn validate(&self) -> Result<(), PlanError> {
        if self.delay_budget_s.is_nan() || self.delay_budget_s <= 0.0 {
            return Err(PlanError::InvalidBudget(self.delay_budget_s));
        }
        self.student.validate()?;
        Ok(())
    }

    fn split(&self, cut_index: usize) -> Result<WorkloadSplit, ProfileError> {
        let plan = CutPlan {
            cut_index,
            gpu_frequency_hz: self.server.max_freq_hz(),
        };
        split_workload(
            self.student,
            self.teacher,
            &plan,
            self.batch_size,
            self.precision_bytes,
            self.compression_ratio,
        )
    }

    fn evaluate(&self, split: &WorkloadSplit, plan: &CutPlan) -> Result<RoundMetrics, CostError> {
        round_cost(
            split,
            self.device,
            self.server,
            plan,
            self.bitrate_up_bps,
            self.bitrate_down_bps,
            self.shape,
            self.cost,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: CutPlan,
    pub metrics: RoundMetrics,
    /// `metrics.delay_s <= delay_budget_s`.
    pub feasible: bool,
    pub evaluated_candidates: usize,
}

/// All `(cut, frequency)` pairs, cut-major, both ascending.
pub fn enumerate_candidates(problem: &PlanningProblem<'_>) -> Vec<CutPlan> {
    let cuts = 1..=problem.student.max_cut();
    cuts.flat_map(|c| {
        problem.server.freq_levels_hz.iter().map(move |&f| CutPlan {
            cut_index: c,
            gpu_frequency_hz: f,
        })
    })
    .collect()
}

fn plan_order(a: &CutPlan, b: &CutPlan) -> Ordering {
    a.cut_index
        .cmp(&b.cut_index)
        .then(a.gpu_frequency_hz.total_cmp(&b.gpu_frequency_hz))
}

/// Feasible before infeasible; feasible ranked by (energy, delay), infeasible
/// by (delay, energy); then cut, then frequency.
fn rank(a: &PlanResult, b: &PlanResult) -> Ordering {
    let primary = match (a.feasible, b.feasible) {
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        (true, true) => a
            .metrics
            .total_energy_j
            .total_cmp(&b.metrics.total_energy_j)
            .then(a.metrics.delay_s.total_cmp(&b.metrics.delay_s)),
        (false, false) => a
            .metrics
            .delay_s
            .total_cmp(&b.metrics.delay_s)
            .then(a.metrics.total_energy_j.total_cmp(&b.metrics.total_energy_j)),
    };
    primary.then_with(|| plan_order(&a.plan, &b.plan))
}

/// Exhaustive search for the minimum-energy feasible plan.
///
/// If no candidate meets the budget the fastest candidate is returned with
/// `feasible = false`. A link outage is returned as an error since every
/// candidate moves data over the link.
pub fn optimize(problem: &PlanningProblem<'_>) -> Result<PlanResult, PlanError> {
    problem.validate()?;
    let candidates = enumerate_candidates(problem);
    let count = candidates.len();
    let mut best: Option<PlanResult> = None;
    let mut split_cache: Option<(usize, WorkloadSplit)> = None;

    for plan in candidates {
        let split = match split_cache {
            Some((c, s)) if c == plan.cut_index => s,
            _ => {
                let s = problem.split(plan.cut_index)?;
                split_cache = Some((plan.cut_index, s));
                s
            }
        };
        let metrics = problem.evaluate(&split, &plan)?;
        let result = PlanResult {
            plan,
            feasible: metrics.delay_s <= problem.delay_budget_s,
            metrics,
            evaluated_candidates: count,
        };
        best = match best {
            Some(current) if rank(&current, &result) != Ordering::Greater => Some(current),
            _ => Some(result),
        };
    }
    Ok(best.expect("at least one candidate: student has >= 2 blocks and server >= 1 level"))
}

/// Fixed-cut comparison methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Device trains only the first student block.
    ServerOnly,
    /// Device trains every student block but the last.
    DeviceOnly,
}

/// Evaluates a baseline at the server's maximum frequency.
pub fn baseline(problem: &PlanningProblem<'_>, mode: BaselineMode) -> Result<PlanResult, PlanError> {
    problem.validate()?;
    let cut_index = match mode {
        BaselineMode::ServerOnly => 1,
        BaselineMode::DeviceOnly => problem.student.max_cut(),
    };
    let plan = CutPlan {
        cut_index,
        gpu_frequency_hz: problem.server.max_freq_hz(),
    };
    let split = problem.split(cut_index)?;
    let metrics = problem.evaluate(&split, &plan)?;
    Ok(PlanResult {
        plan,
        feasible: metrics.delay_s <= problem.delay_budget_s,
        metrics,
        evaluated_candidates: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulingPolicy {
    #[default]
    RoundRobin,
    BestChannelFirst,
}

impl SchedulingPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulingPolicy::RoundRobin => "round_robin",
            SchedulingPolicy::BestChannelFirst => "best_channel_first",
        }
    }
}

impl fmt::Display for SchedulingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulingPolicy {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round_robin" | "round-robin" => Ok(Self::RoundRobin),
            "best_channel_first" | "best-channel-first" => Ok(Self::BestChannelFirst),
            _ => Err(PlanError::UnknownName {
                kind: "scheduling policy",
                value: s.to_string(),
            }),
        }
    }
}

/// Picks the next device to serve among those with `served[i] == false`.
///
/// `bitrate_up_bps[i]` is device `i`'s current uplink rate. Ties go to the
/// lower index.
pub fn select_next_device(
    bitrate_up_bps: &[f64],
    served: &[bool],
    policy: SchedulingPolicy,
) -> Result<usize, PlanError> {
    if served.is_empty() {
        return Err(PlanError::NoDevices);
    }
    let mut unserved = served.iter().enumerate().filter(|(_, s)| !**s).map(|(i, _)| i);
    match policy {
        SchedulingPolicy::RoundRobin => unserved.next().ok_or(PlanError::AllServed),
        SchedulingPolicy::BestChannelFirst => unserved
            .reduce(|best, i| {
                if bitrate_up_bps[i] > bitrate_up_bps[best] {
                    i
                } else {
                    best
                }
            })
            .ok_or(PlanError::AllServed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::even_freq_levels;
    use crate::model_profile::{build_transformer_profile, TransformerDims};

    struct Fixture {
        device: DeviceProfile,
        server: ServerProfile,
        student: ModelProfile,
        teacher: ModelProfile,
    }

    fn fixture() -> Fixture {
        let dims = |h, n| TransformerDims {
            hidden_dim: h,
            num_blocks: n,
            seq_len: 128,
            vocab: 32_000,
            precision_bytes: 2,
        };
        Fixture {
            device: DeviceProfile {
                name: "dev".into(),
                max_gpu_freq_hz: 1.3e9,
                cores: 2048,
                flops_per_cycle_per_core: 2.0,
                compute_utilization: 0.4,
                effective_capacitance: 3e-27,
                static_power_w: 2.0,
                tx_power_w: 1.0,
                rx_power_w: 0.5,
            },
            server: ServerProfile {
                name: "srv".into(),
                freq_levels_hz: even_freq_levels(2.52e9, 0.4, 8),
                cores: 16384,
                flops_per_cycle_per_core: 2.0,
                compute_utilization: 0.4,
                effective_capacitance: 2.5e-26,
                static_power_w: 60.0,
                tx_power_w: 2.0,
                rx_power_w: 1.0,
            },
            student: build_transformer_profile("s", &dims(2048, 12)).unwrap(),
            teacher: build_transformer_profile("t", &dims(4096, 64)).unwrap(),
        }
    }

    fn problem(fx: &Fixture, budget: f64) -> PlanningProblem<'_> {
        PlanningProblem {
            device: &fx.device,
            server: &fx.server,
            student: &fx.student,
            teacher: &fx.teacher,
            bitrate_up_bps: 1e9,
            bitrate_down_bps: 2e9,
            delay_budget_s: budget,
            shape: RoundShape {
                local_epochs: 1,
                batches_per_epoch: 4,
            },
            batch_size: 4,
            precision_bytes: 2,
            compression_ratio: 1.0,
            cost: CostOptions::default(),
        }
    }

    #[test]
    fn candidate_grid() {
        let fx = fixture();
        let p = problem(&fx, 10.0);
        let cands = enumerate_candidates(&p);
        assert_eq!(cands.len(), 88);
        assert_eq!(cands[0].cut_index, 1);
        assert_eq!(cands[0].gpu_frequency_hz, fx.server.freq_levels_hz[0]);
        assert_eq!(cands[87].cut_index, 11);
        assert!(cands.windows(2).all(|w| plan_order(&w[0], &w[1]) == Ordering::Less));
        assert_eq!(cands, enumerate_candidates(&p));

        let mut single = fixture();
        single.server.freq_levels_hz = vec![2.52e9];
        assert_eq!(enumerate_candidates(&problem(&single, 10.0)).len(), 11);
    }

    #[test]
    fn unbounded_budget_dominates_every_candidate() {
        let fx = fixture();
        let p = problem(&fx, f64::INFINITY);
        let best = optimize(&p).unwrap();
        assert!(best.feasible);
        assert_eq!(best.evaluated_candidates, 88);
        for plan in enumerate_candidates(&p) {
            let m = p.evaluate(&p.split(plan.cut_index).unwrap(), &plan).unwrap();
            assert!(best.metrics.total_energy_j <= m.total_energy_j);
        }
        for mode in [BaselineMode::ServerOnly, BaselineMode::DeviceOnly] {
            assert!(best.metrics.total_energy_j <= baseline(&p, mode).unwrap().metrics.total_energy_j);
        }
    }

    #[test]
    fn tight_budget_is_infeasible() {
        let fx = fixture();
        let p = problem(&fx, 1e-6);
        let r = optimize(&p).unwrap();
        assert!(!r.feasible);
        // diagnostic is the fastest candidate
        for plan in enumerate_candidates(&p) {
            let m = p.evaluate(&p.split(plan.cut_index).unwrap(), &plan).unwrap();
            assert!(r.metrics.delay_s <= m.delay_s);
        }
    }

    #[test]
    fn budget_relaxation_never_hurts() {
        let fx = fixture();
        let mut last = f64::INFINITY;
        for budget in [2.0, 3.0, 5.0, 8.0, 13.0, 1e9] {
            let r = optimize(&problem(&fx, budget)).unwrap();
            if r.feasible {
                assert!(r.metrics.delay_s <= budget);
                assert!(r.metrics.total_energy_j <= last);
                last = r.metrics.total_energy_j;
            }
        }
    }

    #[test]
    fn baselines_fix_cut_and_frequency() {
        let fx = fixture();
        let p = problem(&fx, 100.0);
        let so = baseline(&p, BaselineMode::ServerOnly).unwrap();
        let d = baseline(&p, BaselineMode::DeviceOnly).unwrap();
        assert_eq!(so.plan.cut_index, 1);
        assert_eq!(d.plan.cut_index, 11);
        assert_eq!(so.plan.gpu_frequency_hz, 2.52e9);
        let cands = enumerate_candidates(&p);
        assert!(cands.contains(&so.plan));
        assert!(cands.contains(&d.plan));
    }

    #[test]
    fn outage_is_an_error() {
        let fx = fixture();
        let mut p = problem(&fx, 100.0);
        p.bitrate_up_bps = 0.0;
        assert!(optimize(&p).unwrap_err().is_link_outage());
        assert!(baseline(&p, BaselineMode::ServerOnly).unwrap_err().is_link_outage());
    }

    #[test]
    fn invalid_budget() {
        let fx = fixture();
        assert_eq!(optimize(&problem(&fx, 0.0)).unwrap_err(), PlanError::InvalidBudget(0.0));
    }

    #[test]
    fn deterministic() {
        let fx = fixture();
        assert_eq!(
            optimize(&problem(&fx, 6.0)).unwrap(),
            optimize(&problem(&fx, 6.0)).unwrap()
        );
    }

    #[test]
    fn round_robin_order() {
        let mut served = vec![false; 10];
        let rates = vec![1.0; 10];
        let mut order = Vec::new();
        while let Ok(i) = select_next_device(&rates, &served, SchedulingPolicy::RoundRobin) {
            order.push(i);
            served[i] = true;
        }
        assert_eq!(order, (0..10).collect::<Vec<_>>());
        assert_eq!(
            select_next_device(&rates, &served, SchedulingPolicy::RoundRobin),
            Err(PlanError::AllServed)
        );
    }

    #[test]
    fn best_channel_order_and_ties() {
        let rates = vec![3.0, 9.0, 1.0, 7.0, 5.0];
        let mut served = vec![false; 5];
        let mut order = Vec::new();
        while let Ok(i) = select_next_device(&rates, &served, SchedulingPolicy::BestChannelFirst) {
            order.push(i);
            served[i] = true;
        }
        assert_eq!(order, vec![1, 3, 4, 0, 2]);

        let mut tied = vec![1.0; 10];
        tied[3] = 5.0;
        tied[7] = 5.0;
        assert_eq!(
            select_next_device(&tied, &[false; 10], SchedulingPolicy::BestChannelFirst),
            Ok(3)
        );
        assert_eq!(
            select_next_device(&[], &[], SchedulingPolicy::RoundRobin),
            Err(PlanError::NoDevices)
        );
    }
}
