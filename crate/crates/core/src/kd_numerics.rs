//! Distillation loss on synthetic logits: tempered softmax, KL divergence,
//! the combined KD + cross-entropy loss and its analytic gradient.
//!
//! ```text
//! L = lambda * T^2 * KL(softmax(z_t / T) || softmax(z_s / T))
//!   + (1 - lambda) * CE(y, softmax(z_s))
//!
//! dL/dz_s = lambda * T * (softmax(z_s / T) - softmax(z_t / T))
//!         + (1 - lambda) * (softmax(z_s) - onehot(y))
//! ```
//!
//! Natural logarithms throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KdError {
    #[error("logit vector needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("temperature must be finite and positive, got {0}")]
    InvalidTemperature(f64),
    #[error("kd weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("not a probability vector: {0}")]
    NotADistribution(String),
    #[error("KL divergence undefined: q[{0}] = 0 where p[{0}] > 0")]
    SupportViolation(usize),
}

/// Finite logits over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self, KdError> {
        if values.len() < 2 {
            return Err(KdError::TooFewClasses(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KdError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = KdError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdLossConfig {
    pub temperature: f64,
    /// Weight of the distillation term; `1 - kd_weight` goes to cross-entropy.
    pub kd_weight: f64,
}

impl Default for KdLossConfig {
    fn default() -> Self {
        Self {
            temperature: 2.0,
            kd_weight: 0.5,
        }
    }
}

impl KdLossConfig {
    pub fn validate(&self) -> Result<(), KdError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(KdError::InvalidTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.kd_weight) {
            return Err(KdError::InvalidWeight(self.kd_weight));
        }
        Ok(())
    }
}

pub fn softmax_t(z: &LogitVector, temperature: f64) -> Result<Vec<f64>, KdError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(KdError::InvalidTemperature(temperature));
    }
    let max = z.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.0.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

fn check_distribution(p: &[f64]) -> Result<(), KdError> {
    if let Some(i) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(KdError::NotADistribution(format!("entry {i} is {}", p[i])));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(KdError::NotADistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// `sum p_i ln(p_i / q_i)` with `0 ln(0 / q) = 0`.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64, KdError> {
    if p.len() != q.len() {
        return Err(KdError::LengthMismatch(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(KdError::SupportViolation(i));
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc)
}

fn check_pair(teacher: &LogitVector, student: &LogitVector, label: usize, cfg: &KdLossConfig) -> Result<(), KdError> {
    cfg.validate()?;
    if teacher.len() != student.len() {
        return Err(KdError::LengthMismatch(teacher.len(), student.len()));
    }
    if label >= student.len() {
        return Err(KdError::LabelOutOfRange {
            label,
            classes: student.len(),
        });
    }
    Ok(())
}

pub fn kd_loss(teacher: &LogitVector, student: &LogitVector, label: usize, cfg: &KdLossConfig) -> Result<f64, KdError> {
    check_pair(teacher, student, label, cfg)?;
    let t = cfg.temperature;
    let soft_teacher = softmax_t(teacher, t)?;
    let soft_student = softmax_t(student, t)?;
    let kl = kl_div(&soft_teacher, &soft_student)?;
    let hard_student = softmax_t(student, 1.0)?;
    let ce = -hard_student[label].ln();
    Ok(cfg.kd_weight * t * t * kl + (1.0 - cfg.kd_weight) * ce)
}

/// Gradient of [`kd_loss`] with respect to the student logits.
pub fn kd_loss_grad(
    teacher: &LogitVector,
    student: &LogitVector,
    label: usize,
    cfg: &KdLossConfig,
) -> Result<Vec<f64>, KdError> {
    check_pair(teacher, student, label, cfg)?;
    let t = cfg.temperature;
    let lam = cfg.kd_weight;
    let soft_teacher = softmax_t(teacher, t)?;
    let soft_student = softmax_t(student, t)?;
    let hard_student = softmax_t(student, 1.0)?;
    Ok((0..student.len())
        .map(|i| {
            let onehot = if i == label { 1.0 } else { 0.0 };
            lam * t * (soft_student[i] - soft_teacher[i]) + (1.0 - lam) * (hard_student[i] - onehot)
        })
        .collect())
}

/// Outcome of one self-test property.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestCheck {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Worst observed error for the property.
    pub worst: f64,
    pub tolerance: f64,
}

impl SelfTestCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_logits(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> LogitVector {
    LogitVector((0..k).map(|_| rng.random_range(-scale..scale)).collect())
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Runs the KL, normalization and gradient property checks on seeded random
/// instances.
pub fn run_selftest(cfg: &KdLossConfig, seed: u64) -> Result<Vec<SelfTestCheck>, KdError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // KL >= 0
    let mut kl_neg = SelfTestCheck {
        name: "kl_nonnegative",
        trials: 1000,
        failures: 0,
        worst: 0.0,
        tolerance: 0.0,
    };
    for _ in 0..kl_neg.trials {
        let k = rng.random_range(2..=32);
        let p = random_distribution(&mut rng, k);
        let q = random_distribution(&mut rng, k);
        let d = kl_div(&p, &q)?;
        if d < 0.0 {
            kl_neg.failures += 1;
            kl_neg.worst = kl_neg.worst.max(-d);
        }
    }
    checks.push(kl_neg);

    // KL(p, p) = 0
    let mut kl_self = SelfTestCheck {
        name: "kl_self_zero",
        trials: 1000,
        failures: 0,
        worst: 0.0,
        tolerance: 1e-12,
    };
    for _ in 0..kl_self.trials {
        let k = rng.random_range(2..=32);
        let p = random_distribution(&mut rng, k);
        let d = kl_div(&p, &p)?;
        kl_self.worst = kl_self.worst.max(d.abs());
        if d.abs() > kl_self.tolerance {
            kl_self.failures += 1;
        }
    }
    checks.push(kl_self);

    // sum softmax = 1
    let mut norm = SelfTestCheck {
        name: "softmax_normalized",
        trials: 1000,
        failures: 0,
        worst: 0.0,
        tolerance: 1e-12,
    };
    for _ in 0..norm.trials {
        let k = rng.random_range(2..=64);
        let z = random_logits(&mut rng, k, 50.0);
        let t = rng.random_range(0.1..10.0);
        let err = (softmax_t(&z, t)?.iter().sum::<f64>() - 1.0).abs();
        norm.worst = norm.worst.max(err);
        if err > norm.tolerance {
            norm.failures += 1;
        }
    }
    checks.push(norm);

    // analytic gradient vs central differences
    let mut grad = SelfTestCheck {
        name: "gradient_matches_finite_differences",
        trials: 200,
        failures: 0,
        worst: 0.0,
        tolerance: 1e-5,
    };
    let h = 1e-5;
    for _ in 0..grad.trials {
        let k = rng.random_range(2..=10);
        let teacher = random_logits(&mut rng, k, 3.0);
        let student = random_logits(&mut rng, k, 3.0);
        let label = rng.random_range(0..k);
        let analytic = kd_loss_grad(&teacher, &student, label, cfg)?;
        let mut numeric = vec![0.0; k];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = student.0.clone();
            let mut minus = student.0.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = kd_loss(&teacher, &LogitVector(plus), label, cfg)?;
            let lm = kd_loss(&teacher, &LogitVector(minus), label, cfg)?;
            *slot = (lp - lm) / (2.0 * h);
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
            .max(1e-8);
        let rel = diff / scale;
        grad.worst = grad.worst.max(rel);
        if rel > grad.tolerance {
            grad.failures += 1;
        }
    }
    checks.push(grad);

    Ok(checks)
}
