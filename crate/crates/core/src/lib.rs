//! Delay and energy simulation of split knowledge distillation between a
//! server-hosted teacher and vehicle-hosted students, plus a planner that
//! picks the cut layer and server GPU frequency for each training round.

pub mod channel;
pub mod cost_model;
pub mod kd_numerics;
pub mod model_profile;
pub mod planner;
pub mod scenario_io;
pub mod simulator;

pub use channel::{ChannelModel, CqiTable, LinkSnapshot, Regime, Trajectory};
pub use cost_model::{CostOptions, DeviceProfile, Phase, RoundMetrics, RoundShape, ServerProfile};
pub use kd_numerics::{KdLossConfig, LogitVector};
pub use model_profile::{CutPlan, ModelProfile, ModelSpec, WorkloadSplit};
pub use planner::{BaselineMode, PlanError, PlanResult, PlanningProblem, SchedulingPolicy};
pub use scenario_io::{default_scenario, emit_report, load_scenario, ConfigError, ReportFormat};
pub use simulator::{compare_methods, run_trials, Method, Scenario, SimError, TrialSet};
