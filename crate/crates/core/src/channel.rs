//! Link model: log-distance path loss, SNR against a noise spectral density,
//! CQI selection by Shannon-efficiency thresholding, and bitrate from the NR
//! CQI table.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const CQI_TABLE_CSV: &str = include_str!("../data/cqi_table.csv");

/// Version of the shipped CQI table file format.
pub const CQI_TABLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("CQI {0} out of range 0..=15")]
    CqiOutOfRange(u8),
    #[error("time {t} s outside trajectory duration [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid CQI table: {0}")]
    InvalidTable(String),
    #[error("invalid channel parameter `{0}`")]
    InvalidParameter(&'static str),
    #[error("unknown channel regime `{0}` (expected good, normal or poor)")]
    UnknownRegime(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiEntry {
    pub cqi_index: u8,
    pub modulation: String,
    pub code_rate_x1024: u32,
    /// bits/s/Hz
    pub spectral_efficiency: f64,
}

/// The 15 non-zero rows of a CQI table, ordered by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiTable {
    entries: Vec<CqiEntry>,
}

impl CqiTable {
    pub fn new(entries: Vec<CqiEntry>) -> Result<Self, ChannelError> {
        if entries.len() != 15 {
            return Err(ChannelError::InvalidTable(format!(
                "expected 15 entries, found {}",
                entries.len()
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if usize::from(e.cqi_index) != i + 1 {
                return Err(ChannelError::InvalidTable(format!(
                    "row {} has index {}",
                    i + 1,
                    e.cqi_index
                )));
            }
            if !(e.spectral_efficiency.is_finite() && e.spectral_efficiency > 0.0) {
                return Err(ChannelError::InvalidTable(format!(
                    "row {} has invalid efficiency",
                    i + 1
                )));
            }
        }
        if entries
            .windows(2)
            .any(|w| w[1].spectral_efficiency <= w[0].spectral_efficiency)
        {
            return Err(ChannelError::InvalidTable(
                "spectral efficiency must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_csv(text: &str) -> Result<Self, ChannelError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let entries = reader
            .deserialize::<CqiEntry>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ChannelError::InvalidTable(e.to_string()))?;
        Self::new(entries)
    }

    /// The 64QAM NR table shipped in `data/cqi_table.csv`.
    pub fn nr_table1() -> Self {
        Self::from_csv(CQI_TABLE_CSV).expect("shipped CQI table is valid")
    }

    pub fn entries(&self) -> &[CqiEntry] {
        &self.entries
    }

    pub fn efficiency(&self, cqi: u8) -> Result<f64, ChannelError> {
        match cqi {
            0 => Ok(0.0),
            1..=15 => Ok(self.entries[usize::from(cqi) - 1].spectral_efficiency),
            _ => Err(ChannelError::CqiOutOfRange(cqi)),
        }
    }
}

impl Default for CqiTable {
    fn default() -> Self {
        Self::nr_table1()
    }
}

/// Named noise-density presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Good,
    Normal,
    Poor,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Good, Regime::Normal, Regime::Poor];

    pub fn noise_density_dbm_per_hz(self) -> f64 {
        match self {
            Regime::Good => -166.0,
            Regime::Normal => -163.0,
            Regime::Poor => -160.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Good => "good",
            Regime::Normal => "normal",
            Regime::Poor => "poor",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "good" => Ok(Regime::Good),
            "normal" => Ok(Regime::Normal),
            "poor" => Ok(Regime::Poor),
            _ => Err(ChannelError::UnknownRegime(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub noise_density_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub device_tx_power_dbm: f64,
    pub server_tx_power_dbm: f64,
    /// Loss at `ref_distance_m`, antenna gains folded in.
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    pub ref_distance_m: f64,
    /// Subtracted from the SNR before CQI selection.
    pub cqi_margin_db: f64,
    pub cqi_table: CqiTable,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let finite = [
            self.noise_density_dbm_per_hz,
            self.device_tx_power_dbm,
            self.server_tx_power_dbm,
            self.pathloss_ref_db,
            self.cqi_margin_db,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ChannelError::InvalidParameter("non-finite value"));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(ChannelError::InvalidParameter("bandwidth_hz"));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 2.0) {
            return Err(ChannelError::InvalidParameter("pathloss_exponent"));
        }
        if !(self.ref_distance_m.is_finite() && self.ref_distance_m > 0.0) {
            return Err(ChannelError::InvalidParameter("ref_distance_m"));
        }
        Ok(())
    }

    /// Copy of this model with the regime's noise density.
    pub fn with_regime(&self, regime: Regime) -> Self {
        Self {
            noise_density_dbm_per_hz: regime.noise_density_dbm_per_hz(),
            ..self.clone()
        }
    }

    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_density_dbm_per_hz + 10.0 * self.bandwidth_hz.log10()
    }
}

/// Log-distance path loss; distances inside the reference distance are
/// clamped to the reference loss.
pub fn path_loss_db(model: &ChannelModel, distance_m: f64) -> Result<f64, ChannelError> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    if distance_m <= model.ref_distance_m {
        return Ok(model.pathloss_ref_db);
    }
    Ok(model.pathloss_ref_db + 10.0 * model.pathloss_exponent * (distance_m / model.ref_distance_m).log10())
}

pub fn snr_db(model: &ChannelModel, tx_power_dbm: f64, distance_m: f64) -> Result<f64, ChannelError> {
    Ok(tx_power_dbm - path_loss_db(model, distance_m)? - model.noise_power_dbm())
}

/// Largest CQI whose efficiency does not exceed the Shannon efficiency of
/// `snr_db - cqi_margin_db`; 0 when no entry is supported.
pub fn snr_to_cqi(model: &ChannelModel, snr_db: f64) -> u8 {
    let linear = 10f64.powf((snr_db - model.cqi_margin_db) / 10.0);
    let shannon = (1.0 + linear).log2();
    model
        .cqi_table
        .entries()
        .iter()
        .take_while(|e| e.spectral_efficiency <= shannon)
        .last()
        .map_or(0, |e| e.cqi_index)
}

pub fn bitrate_bps(model: &ChannelModel, cqi: u8) -> Result<f64, ChannelError> {
    Ok(model.cqi_table.efficiency(cqi)? * model.bandwidth_hz)
}

/// Uplink and downlink rates for one channel snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSnapshot {
    pub distance_m: f64,
    pub cqi_up: u8,
    pub cqi_down: u8,
    pub bitrate_up_bps: f64,
    pub bitrate_down_bps: f64,
}

/// Evaluates both directions at `distance_m`, adding `shadowing_db` of extra
/// loss to each.
pub fn link_snapshot(model: &ChannelModel, distance_m: f64, shadowing_db: f64) -> Result<LinkSnapshot, ChannelError> {
    let up = snr_db(model, model.device_tx_power_dbm, distance_m)? - shadowing_db;
    let down = snr_db(model, model.server_tx_power_dbm, distance_m)? - shadowing_db;
    let cqi_up = snr_to_cqi(model, up);
    let cqi_down = snr_to_cqi(model, down);
    Ok(LinkSnapshot {
        distance_m,
        cqi_up,
        cqi_down,
        bitrate_up_bps: bitrate_bps(model, cqi_up)?,
        bitrate_down_bps: bitrate_bps(model, cqi_down)?,
    })
}

/// Straight-line drive past the base station.
///
/// The vehicle starts `start_distance_m` away, passes at `closest_approach_m`
/// and keeps going at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_distance_m: f64,
    pub closest_approach_m: f64,
    pub speed_mps: f64,
    pub duration_s: f64,
}

/// 30 km/h.
pub const DEFAULT_SPEED_MPS: f64 = 30.0 / 3.6;

impl Trajectory {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.closest_approach_m > 0.0 && self.closest_approach_m.is_finite()) {
            return Err(ChannelError::InvalidParameter("closest_approach_m"));
        }
        if !(self.start_distance_m >= self.closest_approach_m && self.start_distance_m.is_finite()) {
            return Err(ChannelError::InvalidParameter("start_distance_m"));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(ChannelError::InvalidParameter("speed_mps"));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(ChannelError::InvalidParameter("duration_s"));
        }
        Ok(())
    }

    fn start_offset(&self) -> f64 {
        (self.start_distance_m.powi(2) - self.closest_approach_m.powi(2)).sqrt()
    }

    /// Time of closest approach (infinite for a parked vehicle that is not
    /// already there).
    pub fn closest_approach_time_s(&self) -> f64 {
        let offset = self.start_offset();
        if offset == 0.0 {
            0.0
        } else {
            offset / self.speed_mps
        }
    }
}

pub fn distance_at(traj: &Trajectory, t_s: f64) -> Result<f64, ChannelError> {
    if !(t_s >= 0.0 && t_s <= traj.duration_s) {
        return Err(ChannelError::TimeOutOfRange {
            t: t_s,
            duration: traj.duration_s,
        });
    }
    if t_s == 0.0 {
        return Ok(traj.start_distance_m);
    }
    let offset = traj.start_offset() - traj.speed_mps * t_s;
    Ok(traj.closest_approach_m.hypot(offset))
}

/// Seeded log-normal shadowing, one independent draw per (device, round).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shadowing {
    pub sigma_db: f64,
    pub seed: u64,
}

impl Shadowing {
    pub fn sample_db(&self, device: usize, round: usize) -> f64 {
        if self.sigma_db <= 0.0 {
            return 0.0;
        }
        let stream = ((device as u64) << 32) ^ round as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Normal::new(0.0, self.sigma_db)
            .expect("sigma is positive and finite")
            .sample(&mut rng)
    }
}
