//! Stand-alone brute-force planner used as a reference.
//!
//! Everything here is written from the closed-form cost equations and
//! deliberately does not call into the library.

#[derive(Debug, Clone)]
pub struct Problem {
    pub student_hidden: u64,
    pub student_blocks: usize,
    pub teacher_hidden: u64,
    pub teacher_blocks: usize,
    pub vocab: u64,
    pub seq_len: u64,
    pub precision: u64,
    pub batch: u64,
    pub ratio: f64,
    pub epochs: u32,
    pub batches_per_epoch: u32,
    pub dev_freq: f64,
    pub dev_cores: u32,
    pub dev_fpc: f64,
    pub dev_util: f64,
    pub dev_kappa: f64,
    pub dev_static: f64,
    pub dev_tx: f64,
    pub dev_rx: f64,
    pub srv_levels: Vec<f64>,
    pub srv_cores: u32,
    pub srv_fpc: f64,
    pub srv_util: f64,
    pub srv_kappa: f64,
    pub srv_static: f64,
    pub srv_tx: f64,
    pub srv_rx: f64,
    pub rate_up: f64,
    pub rate_down: f64,
    pub budget: f64,
    pub server_static_counted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub cut: usize,
    pub freq: f64,
    pub delay: f64,
    pub energy: f64,
    pub feasible: bool,
}

fn seconds(flops: f64, f: f64, cores: u32, fpc: f64, util: f64) -> f64 {
    flops / (f * cores as f64 * fpc * util)
}

#[allow(clippy::too_many_arguments)]
fn joules(flops: f64, f: f64, cores: u32, fpc: f64, util: f64, kappa: f64, stat: f64, with_static: bool) -> f64 {
    let cycles = flops / (cores as f64 * fpc * util);
    let dynamic = kappa * cycles * f * f;
    if with_static {
        dynamic + stat * seconds(flops, f, cores, fpc, util)
    } else {
        dynamic
    }
}

fn airtime(bytes: u64, rate: f64) -> f64 {
    if bytes == 0 {
        0.0
    } else {
        8.0 * bytes as f64 / rate
    }
}

/// Per-candidate delay and total energy.
pub fn cost(p: &Problem, cut: usize, freq: f64) -> (f64, f64) {
    let (s, v, b) = (p.seq_len as f64, p.vocab as f64, p.batch as f64);
    let hs = p.student_hidden as f64;
    let ht = p.teacher_hidden as f64;
    let block_fwd = |h: f64| 24.0 * s * h * h + 4.0 * s * s * h;

    // per sample
    let dev_fwd = s * ht + s * hs + cut as f64 * block_fwd(hs);
    let dev_bwd = 2.0 * s * hs + cut as f64 * 2.0 * block_fwd(hs);
    let srv = p.teacher_blocks as f64 * block_fwd(ht)
        + 2.0 * s * ht * v
        + 3.0 * (p.student_blocks - cut) as f64 * block_fwd(hs)
        + 3.0 * 2.0 * s * hs * v;

    let act = p.batch * p.seq_len * p.student_hidden * p.precision;
    let up_bytes = (act as f64 * p.ratio).round() as u64 + p.batch * p.seq_len * p.teacher_hidden * p.precision;
    let down_bytes = act;
    let param_bytes =
        p.vocab * p.student_hidden * p.precision + cut as u64 * 12 * p.student_hidden * p.student_hidden * p.precision;

    let t_df = seconds(b * dev_fwd, p.dev_freq, p.dev_cores, p.dev_fpc, p.dev_util);
    let t_db = seconds(b * dev_bwd, p.dev_freq, p.dev_cores, p.dev_fpc, p.dev_util);
    let t_s = seconds(b * srv, freq, p.srv_cores, p.srv_fpc, p.srv_util);
    let t_up = airtime(up_bytes, p.rate_up);
    let t_down = airtime(down_bytes, p.rate_down);
    let t_params = airtime(param_bytes, p.rate_up);

    let e_dev = joules(
        b * dev_fwd,
        p.dev_freq,
        p.dev_cores,
        p.dev_fpc,
        p.dev_util,
        p.dev_kappa,
        p.dev_static,
        true,
    ) + joules(
        b * dev_bwd,
        p.dev_freq,
        p.dev_cores,
        p.dev_fpc,
        p.dev_util,
        p.dev_kappa,
        p.dev_static,
        true,
    );
    let e_srv = joules(
        b * srv,
        freq,
        p.srv_cores,
        p.srv_fpc,
        p.srv_util,
        p.srv_kappa,
        p.srv_static,
        p.server_static_counted,
    );
    let e_radio = t_up * (p.dev_tx + p.srv_rx) + t_down * (p.srv_tx + p.dev_rx);

    let n = p.epochs as f64 * p.batches_per_epoch as f64;
    let delay = n * (t_df + t_up + t_s + t_down + t_db) + t_params;
    let energy = n * (e_dev + e_srv + e_radio) + t_params * (p.dev_tx + p.srv_rx);
    (delay, energy)
}

/// Minimum energy within the budget; fastest overall when nothing fits.
pub fn solve(p: &Problem) -> Choice {
    let mut all = Vec::new();
    for cut in 1..p.student_blocks {
        for &freq in &p.srv_levels {
            let (delay, energy) = cost(p, cut, freq);
            all.push(Choice {
                cut,
                freq,
                delay,
                energy,
                feasible: delay <= p.budget,
            });
        }
    }
    let feasible: Vec<&Choice> = all.iter().filter(|c| c.feasible).collect();
    let mut best = if feasible.is_empty() {
        all.iter().collect()
    } else {
        feasible
    };
    // stable sort keeps enumeration order (cut, then frequency) among exact ties
    if best[0].feasible {
        best.sort_by(|a, b| {
            a.energy
                .partial_cmp(&b.energy)
                .unwrap()
                .then(a.delay.partial_cmp(&b.delay).unwrap())
        });
    } else {
        best.sort_by(|a, b| {
            a.delay
                .partial_cmp(&b.delay)
                .unwrap()
                .then(a.energy.partial_cmp(&b.energy).unwrap())
        });
    }
    *best[0]
}
