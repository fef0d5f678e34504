//! Command-line front end for the split distillation simulator.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use splitkd::channel::{distance_at, link_snapshot, Regime};
use splitkd::cost_model::RoundShape;
use splitkd::kd_numerics::run_selftest;
use splitkd::planner::{baseline, optimize, BaselineMode, PlanResult, PlanningProblem};
use splitkd::scenario_io::{catalog_list, emit_report, fmt_sig, load_scenario, write_reports, ReportFormat};
use splitkd::simulator::{run_trials, Method, Scenario, TrialSet};

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "splitkd",
    version,
    about = "Split knowledge distillation delay/energy simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one method under one regime (or all)
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        method: Method,
    },
    /// Simulate proposed, server-only and device-only side by side
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Plan a single round for one device
    Plan {
        #[command(flatten)]
        common: Common,
        /// Zero-based device index
        #[arg(long, default_value_t = 0)]
        device: usize,
        /// Time along the device trajectory, seconds
        #[arg(long, conflicts_with = "distance")]
        time: Option<f64>,
        /// Device-server distance in metres, overriding the trajectory
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Check the distillation loss kernels on random inputs
    KdSelftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the bundled distillation catalog
    Catalog,
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled case study when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// good, normal, poor or all
    #[arg(long)]
    regime: Option<String>,
    /// Directory for report files; the summary goes to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

impl Common {
    fn scenario(&self) -> Result<Scenario, Failure> {
        let mut s = match &self.scenario {
            Some(path) => load_scenario(path).map_err(config_err)?,
            None => splitkd::default_scenario(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn regimes(&self, fallback: &[Regime]) -> Result<Vec<Regime>, Failure> {
        match self.regime.as_deref() {
            None => Ok(fallback.to_vec()),
            Some("all") => Ok(Regime::ALL.to_vec()),
            Some(name) => Ok(vec![name.parse().map_err(config_err)?]),
        }
    }
}

fn finish(common: &Common, scenario: &Scenario, set: &TrialSet) -> Result<(), Failure> {
    match &common.out {
        Some(dir) => {
            for path in write_reports(dir, scenario, set).map_err(config_err)? {
                println!("wrote {}", path.display());
            }
        }
        None => {
            let text = emit_report(set, ReportFormat::SummaryText);
            std::io::stdout().write_all(&text).map_err(config_err)?;
        }
    }
    if set.infeasible_everywhere() {
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            message: "no round met the delay budget in at least one trial".into(),
        });
    }
    Ok(())
}

fn describe(label: &str, r: &PlanResult) {
    let m = &r.metrics;
    println!(
        "{label:<12} cut={:<2} f_hz={:<10} delay_s={:<12} energy_j={:<12} device_j={:<12} server_j={:<12} comm_j={:<12} feasible={}",
        m.plan.cut_index,
        fmt_sig(m.plan.gpu_frequency_hz),
        fmt_sig(m.delay_s),
        fmt_sig(m.total_energy_j),
        fmt_sig(m.device_energy_j),
        fmt_sig(m.server_energy_j),
        fmt_sig(m.comm_energy_j),
        r.feasible
    );
}

fn plan(common: &Common, device: usize, time: Option<f64>, distance: Option<f64>) -> Result<(), Failure> {
    let scenario = common.scenario()?;
    let regimes = common.regimes(&[scenario.regime])?;
    let setup = scenario.devices.get(device).ok_or_else(|| {
        config_err(format!(
            "device index {device} out of range (0..{})",
            scenario.devices.len()
        ))
    })?;
    let (student, teacher) = scenario.build_models().map_err(config_err)?;
    let distance = match distance {
        Some(d) => d,
        None => distance_at(&setup.trajectory, time.unwrap_or(0.0)).map_err(config_err)?,
    };
    for regime in regimes {
        let channel = scenario.channel.with_regime(regime);
        let link = link_snapshot(&channel, distance, 0.0).map_err(config_err)?;
        println!(
            "regime={regime} device={device} name=\"{}\" distance_m={} cqi_up={} cqi_down={} bitrate_up_bps={} bitrate_down_bps={}",
            setup.profile.name,
            fmt_sig(link.distance_m),
            link.cqi_up,
            link.cqi_down,
            fmt_sig(link.bitrate_up_bps),
            fmt_sig(link.bitrate_down_bps)
        );
        let w = &scenario.workload;
        let problem = PlanningProblem {
            device: &setup.profile,
            server: &scenario.server,
            student: &student,
            teacher: &teacher,
            bitrate_up_bps: link.bitrate_up_bps,
            bitrate_down_bps: link.bitrate_down_bps,
            delay_budget_s: scenario.delay_budget_s,
            shape: RoundShape {
                local_epochs: setup.local_epochs,
                batches_per_epoch: w.batches_per_epoch,
            },
            batch_size: w.batch_size,
            precision_bytes: w.precision_bytes,
            compression_ratio: w.activation_compression_ratio,
            cost: scenario.cost,
        };
        let results = [
            ("proposed", optimize(&problem)),
            ("server-only", baseline(&problem, BaselineMode::ServerOnly)),
            ("device-only", baseline(&problem, BaselineMode::DeviceOnly)),
        ];
        for (label, r) in results {
            match r {
                Ok(r) => describe(label, &r),
                Err(e) if e.is_link_outage() => println!("{label:<12} link outage"),
                Err(e) => return Err(config_err(e)),
            }
        }
    }
    Ok(())
}

fn selftest(seed: u64) -> Result<(), Failure> {
    let checks = run_selftest(&Default::default(), seed).map_err(config_err)?;
    let mut ok = true;
    for c in &checks {
        println!(
            "{} {:<20} trials={} failures={} worst={:e} tolerance={:e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.trials,
            c.failures,
            c.worst,
            c.tolerance
        );
        ok &= c.passed();
    }
    if ok {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CONFIG,
            message: "kd self-test failed".into(),
        })
    }
}

fn catalog() -> Result<(), Failure> {
    for e in catalog_list().map_err(config_err)? {
        println!(
            "{} ({} GB) -> {} ({} GB), {}, {}x, {}",
            e.teacher,
            e.teacher_size_gb,
            e.student,
            e.student_size_gb,
            e.distillation_type,
            e.compression_rate,
            e.performance
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, method } => {
            let scenario = common.scenario()?;
            let regimes = common.regimes(&[scenario.regime])?;
            let set = run_trials(&scenario, &regimes, &[method]).map_err(config_err)?;
            finish(&common, &scenario, &set)
        }
        Command::Compare { common } => {
            let scenario = common.scenario()?;
            let regimes = common.regimes(&Regime::ALL)?;
            let set = run_trials(&scenario, &regimes, &Method::ALL).map_err(config_err)?;
            finish(&common, &scenario, &set)
        }
        Command::Plan {
            common,
            device,
            time,
            distance,
        } => plan(&common, device, time, distance),
        Command::KdSelftest { seed } => selftest(seed),
        Command::Catalog => catalog(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
