//! Per-phase delay and energy of one training round.
//!
//! Compute follows an effective-capacitance DVFS model: a workload of
//! `cycles = flops / (cores * flops_per_cycle_per_core * utilization)` takes
//! `cycles / f` seconds and burns `kappa * cycles * f^2` joules of dynamic
//! energy plus `static_power * time`. Radio energy is power times airtime.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_profile::{CutPlan, WorkloadSplit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invalid compute parameter `{0}`: must be finite and positive")]
    InvalidCompute(&'static str),
    #[error("link outage: {bytes} bytes to send at 0 bit/s")]
    LinkOutage { bytes: u64 },
    #[error("invalid bitrate {0}")]
    InvalidBitrate(f64),
    #[error("server frequency {freq} Hz outside [{min}, {max}] Hz")]
    FrequencyOutOfRange { freq: f64, min: f64, max: f64 },
    #[error("local_epochs and batches_per_epoch must be positive")]
    EmptyRound,
    #[error("invalid profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub max_gpu_freq_hz: f64,
    pub cores: u32,
    pub flops_per_cycle_per_core: f64,
    pub compute_utilization: f64,
    /// kappa_d, J per cycle per Hz^2.
    pub effective_capacitance: f64,
    pub static_power_w: f64,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerProfile {
    pub name: String,
    /// Discrete DVFS levels, strictly increasing.
    pub freq_levels_hz: Vec<f64>,
    pub cores: u32,
    pub flops_per_cycle_per_core: f64,
    pub compute_utilization: f64,
    /// kappa_s, J per cycle per Hz^2.
    pub effective_capacitance: f64,
    pub static_power_w: f64,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
}

/// `n` evenly spaced levels from `lo_frac * max` to `max`.
pub fn even_freq_levels(max_hz: f64, lo_frac: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![max_hz],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    max_hz
                } else {
                    max_hz * (lo_frac + (1.0 - lo_frac) * i as f64 / (n - 1) as f64)
                }
            })
            .collect(),
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn check(name: &str, ok: bool, reason: &str) -> Result<(), CostError> {
    if ok {
        Ok(())
    } else {
        Err(CostError::InvalidProfile {
            name: name.to_string(),
            reason: reason.to_string(),
        })
    }
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), CostError> {
        let n = &self.name;
        check(n, positive(self.max_gpu_freq_hz), "max_gpu_freq_hz must be positive")?;
        check(n, self.cores > 0, "cores must be positive")?;
        check(
            n,
            positive(self.flops_per_cycle_per_core),
            "flops_per_cycle_per_core must be positive",
        )?;
        check(
            n,
            positive(self.compute_utilization) && self.compute_utilization <= 1.0,
            "compute_utilization must be in (0, 1]",
        )?;
        check(
            n,
            non_negative(self.effective_capacitance),
            "effective_capacitance must be >= 0",
        )?;
        check(n, non_negative(self.static_power_w), "static_power_w must be >= 0")?;
        check(n, non_negative(self.tx_power_w), "tx_power_w must be >= 0")?;
        check(n, non_negative(self.rx_power_w), "rx_power_w must be >= 0")?;
        Ok(())
    }

    pub fn processor(&self) -> Processor {
        Processor {
            cores: self.cores,
            flops_per_cycle_per_core: self.flops_per_cycle_per_core,
            utilization: self.compute_utilization,
            effective_capacitance: self.effective_capacitance,
            static_power_w: self.static_power_w,
        }
    }
}

impl ServerProfile {
    pub fn validate(&self) -> Result<(), CostError> {
        let n = &self.name;
        check(n, !self.freq_levels_hz.is_empty(), "freq_levels_hz must not be empty")?;
        check(
            n,
            self.freq_levels_hz.iter().all(|f| positive(*f)),
            "frequency levels must be positive",
        )?;
        check(
            n,
            self.freq_levels_hz.windows(2).all(|w| w[1] > w[0]),
            "frequency levels must be strictly increasing",
        )?;
        check(n, self.cores > 0, "cores must be positive")?;
        check(
            n,
            positive(self.flops_per_cycle_per_core),
            "flops_per_cycle_per_core must be positive",
        )?;
        check(
            n,
            positive(self.compute_utilization) && self.compute_utilization <= 1.0,
            "compute_utilization must be in (0, 1]",
        )?;
        check(
            n,
            non_negative(self.effective_capacitance),
            "effective_capacitance must be >= 0",
        )?;
        check(n, non_negative(self.static_power_w), "static_power_w must be >= 0")?;
        check(n, non_negative(self.tx_power_w), "tx_power_w must be >= 0")?;
        check(n, non_negative(self.rx_power_w), "rx_power_w must be >= 0")?;
        Ok(())
    }

    pub fn max_freq_hz(&self) -> f64 {
        *self.freq_levels_hz.last().expect("validated non-empty")
    }

    pub fn min_freq_hz(&self) -> f64 {
        self.freq_levels_hz[0]
    }

    pub fn processor(&self) -> Processor {
        Processor {
            cores: self.cores,
            flops_per_cycle_per_core: self.flops_per_cycle_per_core,
            utilization: self.compute_utilization,
            effective_capacitance: self.effective_capacitance,
            static_power_w: self.static_power_w,
        }
    }
}

/// Compute constants shared by devices and the server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Processor {
    pub cores: u32,
    pub flops_per_cycle_per_core: f64,
    pub utilization: f64,
    pub effective_capacitance: f64,
    pub static_power_w: f64,
}

impl Processor {
    fn cycles(&self, flops: f64) -> f64 {
        flops / (f64::from(self.cores) * self.flops_per_cycle_per_core * self.utilization)
    }
}

pub fn compute_time_s(
    flops: f64,
    freq_hz: f64,
    cores: u32,
    flops_per_cycle_per_core: f64,
    utilization: f64,
) -> Result<f64, CostError> {
    if !non_negative(flops) {
        return Err(CostError::InvalidCompute("flops"));
    }
    if !positive(freq_hz) {
        return Err(CostError::InvalidCompute("freq_hz"));
    }
    if cores == 0 {
        return Err(CostError::InvalidCompute("cores"));
    }
    if !positive(flops_per_cycle_per_core) {
        return Err(CostError::InvalidCompute("flops_per_cycle_per_core"));
    }
    if !(positive(utilization) && utilization <= 1.0) {
        return Err(CostError::InvalidCompute("utilization"));
    }
    Ok(flops / (freq_hz * f64::from(cores) * flops_per_cycle_per_core * utilization))
}

/// Energy of one compute burst, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeEnergy {
    pub dynamic_j: f64,
    pub static_j: f64,
}

impl ComputeEnergy {
    pub fn total_j(&self) -> f64 {
        self.dynamic_j + self.static_j
    }
}

pub fn compute_energy_j(flops: f64, freq_hz: f64, proc: &Processor) -> Result<ComputeEnergy, CostError> {
    let time = compute_time_s(
        flops,
        freq_hz,
        proc.cores,
        proc.flops_per_cycle_per_core,
        proc.utilization,
    )?;
    Ok(ComputeEnergy {
        dynamic_j: proc.effective_capacitance * proc.cycles(flops) * freq_hz * freq_hz,
        static_j: proc.static_power_w * time,
    })
}

/// Airtime and radio energy of a single transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub delay_s: f64,
    pub sender_energy_j: f64,
    pub receiver_energy_j: f64,
}

pub fn comm_cost(bytes: u64, bitrate_bps: f64, tx_power_w: f64, rx_power_w: f64) -> Result<Transfer, CostError> {
    if bytes == 0 {
        return Ok(Transfer {
            delay_s: 0.0,
            sender_energy_j: 0.0,
            receiver_energy_j: 0.0,
        });
    }
    if !non_negative(bitrate_bps) {
        return Err(CostError::InvalidBitrate(bitrate_bps));
    }
    if bitrate_bps == 0.0 {
        return Err(CostError::LinkOutage { bytes });
    }
    let delay_s = 8.0 * bytes as f64 / bitrate_bps;
    Ok(Transfer {
        delay_s,
        sender_energy_j: tx_power_w * delay_s,
        receiver_energy_j: rx_power_w * delay_s,
    })
}

/// Stages of one training round in workflow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    DeviceForward,
    UplinkSmashed,
    ServerForwardBackward,
    DownlinkGradients,
    DeviceBackward,
    UplinkParams,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::DeviceForward,
        Phase::UplinkSmashed,
        Phase::ServerForwardBackward,
        Phase::DownlinkGradients,
        Phase::DeviceBackward,
        Phase::UplinkParams,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::DeviceForward => "device_forward",
            Phase::UplinkSmashed => "uplink_smashed",
            Phase::ServerForwardBackward => "server_forward_backward",
            Phase::DownlinkGradients => "downlink_gradients",
            Phase::DeviceBackward => "device_backward",
            Phase::UplinkParams => "uplink_params",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub phase: Phase,
    pub delay_s: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostOptions {
    /// Count the server's static power in its compute energy.
    pub include_server_static_energy: bool,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self {
            include_server_static_energy: true,
        }
    }
}

/// Delay and energy of one round.
///
/// `comm_energy_j` is the device's radio energy; the server's radio energy
/// is part of `server_energy_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub plan: CutPlan,
    pub delay_s: f64,
    pub device_energy_j: f64,
    pub server_energy_j: f64,
    pub comm_energy_j: f64,
    pub total_energy_j: f64,
    /// Round totals per phase, in workflow order.
    pub phases: [PhaseCost; 6],
}

impl RoundMetrics {
    pub fn phase(&self, phase: Phase) -> &PhaseCost {
        &self.phases[phase as usize]
    }
}

/// Round workload sizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundShape {
    pub local_epochs: u32,
    pub batches_per_epoch: u32,
}

/// Costs a round: `local_epochs * batches_per_epoch` strictly sequential
/// batches followed by one parameter upload.
#[allow(clippy::too_many_arguments)]
pub fn round_cost(
    split: &WorkloadSplit,
    device: &DeviceProfile,
    server: &ServerProfile,
    plan: &CutPlan,
    bitrate_up: f64,
    bitrate_down: f64,
    shape: RoundShape,
    opts: CostOptions,
) -> Result<RoundMetrics, CostError> {
    if shape.local_epochs == 0 || shape.batches_per_epoch == 0 {
        return Err(CostError::EmptyRound);
    }
    let (min, max) = (server.min_freq_hz(), server.max_freq_hz());
    let f_srv = plan.gpu_frequency_hz;
    if !(f_srv >= min && f_srv <= max) {
        return Err(CostError::FrequencyOutOfRange { freq: f_srv, min, max });
    }
    let f_dev = device.max_gpu_freq_hz;
    let dev = device.processor();
    let srv = server.processor();

    let dev_fwd_t = compute_time_s(
        split.device_forward_flops,
        f_dev,
        dev.cores,
        dev.flops_per_cycle_per_core,
        dev.utilization,
    )?;
    let dev_fwd_e = compute_energy_j(split.device_forward_flops, f_dev, &dev)?.total_j();
    let up = comm_cost(split.smashed_bytes_up, bitrate_up, device.tx_power_w, server.rx_power_w)?;
    let srv_t = compute_time_s(
        split.server_flops,
        f_srv,
        srv.cores,
        srv.flops_per_cycle_per_core,
        srv.utilization,
    )?;
    let srv_e = compute_energy_j(split.server_flops, f_srv, &srv)?;
    let srv_e = if opts.include_server_static_energy {
        srv_e.total_j()
    } else {
        srv_e.dynamic_j
    };
    let down = comm_cost(
        split.gradient_bytes_down,
        bitrate_down,
        server.tx_power_w,
        device.rx_power_w,
    )?;
    let dev_bwd_t = compute_time_s(
        split.device_backward_flops,
        f_dev,
        dev.cores,
        dev.flops_per_cycle_per_core,
        dev.utilization,
    )?;
    let dev_bwd_e = compute_energy_j(split.device_backward_flops, f_dev, &dev)?.total_j();
    let params = comm_cost(
        split.device_param_bytes_up,
        bitrate_up,
        device.tx_power_w,
        server.rx_power_w,
    )?;

    let n = f64::from(shape.local_epochs) * f64::from(shape.batches_per_epoch);
    let phases = [
        PhaseCost {
            phase: Phase::DeviceForward,
            delay_s: n * dev_fwd_t,
            energy_j: n * dev_fwd_e,
        },
        PhaseCost {
            phase: Phase::UplinkSmashed,
            delay_s: n * up.delay_s,
            energy_j: n * up.sender_energy_j + n * up.receiver_energy_j,
        },
        PhaseCost {
            phase: Phase::ServerForwardBackward,
            delay_s: n * srv_t,
            energy_j: n * srv_e,
        },
        PhaseCost {
            phase: Phase::DownlinkGradients,
            delay_s: n * down.delay_s,
            energy_j: n * down.sender_energy_j + n * down.receiver_energy_j,
        },
        PhaseCost {
            phase: Phase::DeviceBackward,
            delay_s: n * dev_bwd_t,
            energy_j: n * dev_bwd_e,
        },
        PhaseCost {
            phase: Phase::UplinkParams,
            delay_s: params.delay_s,
            energy_j: params.sender_energy_j + params.receiver_energy_j,
        },
    ];

    let per_batch_delay = dev_fwd_t + up.delay_s + srv_t + down.delay_s + dev_bwd_t;
    let delay_s = n * per_batch_delay + params.delay_s;

    let device_energy_j = n * (dev_fwd_e + dev_bwd_e);
    let comm_energy_j = n * (up.sender_energy_j + down.receiver_energy_j) + params.sender_energy_j;
    let server_energy_j = n * (srv_e + up.receiver_energy_j + down.sender_energy_j) + params.receiver_energy_j;

    Ok(RoundMetrics {
        plan: *plan,
        delay_s,
        device_energy_j,
        server_energy_j,
        comm_energy_j,
        total_energy_j: device_energy_j + server_energy_j + comm_energy_j,
        phases,
    })
}
