//! Random planning problems shared by the reference-planner checks.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splitkd::cost_model::{even_freq_levels, CostOptions, DeviceProfile, RoundShape, ServerProfile};
use splitkd::model_profile::{build_transformer_profile, ModelProfile, TransformerDims};
use splitkd::planner::{optimize, PlanResult, PlanningProblem};

use crate::brute_force::{self, Problem};

pub fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let max_srv = rng.random_range(1.5e9..3.0e9);
    let lo = rng.random_range(0.3..0.6);
    let levels = rng.random_range(1..=10);
    let mut p = Problem {
        student_hidden: *[256u64, 512, 1024, 2048].choose(rng).unwrap(),
        student_blocks: rng.random_range(2..=16),
        teacher_hidden: *[512u64, 1024, 2048, 4096].choose(rng).unwrap(),
        teacher_blocks: rng.random_range(4..=64),
        vocab: rng.random_range(1000..=128_256),
        seq_len: *[32u64, 64, 128, 256, 512].choose(rng).unwrap(),
        precision: *[1u64, 2, 4].choose(rng).unwrap(),
        batch: rng.random_range(1..=16),
        ratio: rng.random_range(0.05..=1.0),
        epochs: rng.random_range(1..=3),
        batches_per_epoch: rng.random_range(1..=10),
        dev_freq: rng.random_range(0.5e9..1.5e9),
        dev_cores: *[256u32, 512, 1024, 2048].choose(rng).unwrap(),
        dev_fpc: *[2.0, 16.0].choose(rng).unwrap(),
        dev_util: rng.random_range(0.2..0.9),
        dev_kappa: rng.random_range(1e-27..2e-26),
        dev_static: rng.random_range(0.0..5.0),
        dev_tx: rng.random_range(0.2..2.0),
        dev_rx: rng.random_range(0.1..1.0),
        srv_levels: even_freq_levels(max_srv, lo, levels),
        srv_cores: rng.random_range(4096..=16384),
        srv_fpc: *[2.0, 8.0].choose(rng).unwrap(),
        srv_util: rng.random_range(0.2..0.9),
        srv_kappa: rng.random_range(1e-26..5e-26),
        srv_static: rng.random_range(20.0..100.0),
        srv_tx: rng.random_range(0.5..3.0),
        srv_rx: rng.random_range(0.2..1.5),
        rate_up: rng.random_range(1e7..2e9),
        rate_down: rng.random_range(1e7..2e9),
        budget: 1.0,
        server_static_counted: rng.random_bool(0.7),
    };
    // budgets between "nothing fits" and "everything fits"
    let fastest = brute_force::cost(&p, 1, max_srv).0;
    p.budget = fastest * rng.random_range(0.8..3.0);
    p
}

pub fn problems(seed: u64, n: usize) -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_problem(&mut rng)).collect()
}

fn model(name: &str, hidden: u64, blocks: usize, p: &Problem) -> ModelProfile {
    build_transformer_profile(
        name,
        &TransformerDims {
            hidden_dim: hidden,
            num_blocks: blocks,
            seq_len: p.seq_len,
            vocab: p.vocab,
            precision_bytes: p.precision as u32,
        },
    )
    .unwrap()
}

/// Solves `p` with the library planner.
pub fn library_solve(p: &Problem) -> PlanResult {
    let device = DeviceProfile {
        name: "device".into(),
        max_gpu_freq_hz: p.dev_freq,
        cores: p.dev_cores,
        flops_per_cycle_per_core: p.dev_fpc,
        compute_utilization: p.dev_util,
        effective_capacitance: p.dev_kappa,
        static_power_w: p.dev_static,
        tx_power_w: p.dev_tx,
        rx_power_w: p.dev_rx,
    };
    let server = ServerProfile {
        name: "server".into(),
        freq_levels_hz: p.srv_levels.clone(),
        cores: p.srv_cores,
        flops_per_cycle_per_core: p.srv_fpc,
        compute_utilization: p.srv_util,
        effective_capacitance: p.srv_kappa,
        static_power_w: p.srv_static,
        tx_power_w: p.srv_tx,
        rx_power_w: p.srv_rx,
    };
    let student = model("student", p.student_hidden, p.student_blocks, p);
    let teacher = model("teacher", p.teacher_hidden, p.teacher_blocks, p);
    optimize(&PlanningProblem {
        device: &device,
        server: &server,
        student: &student,
        teacher: &teacher,
        bitrate_up_bps: p.rate_up,
        bitrate_down_bps: p.rate_down,
        delay_budget_s: p.budget,
        shape: RoundShape {
            local_epochs: p.epochs,
            batches_per_epoch: p.batches_per_epoch,
        },
        batch_size: p.batch,
        precision_bytes: p.precision as u32,
        compression_ratio: p.ratio,
        cost: CostOptions {
            include_server_static_energy: p.server_static_counted,
        },
    })
    .unwrap()
}
