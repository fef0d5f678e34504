//! Layer-level cost records for the teacher and student networks, and the
//! device/server workload split induced by a cut layer.
//!
//! All FLOP counts come from the dense-transformer estimate used by
//! [`build_transformer_profile`]:
//!
//! ```text
//! block forward  = 24 * s * h^2 + 4 * s^2 * h
//! block params   = 12 * h^2          (elements)
//! block output   = s * h             (elements)
//! embedding fwd  = s * h             (gather)
//! head forward   = 2 * s * h * V
//! ```
//!
//! with `s` the sequence length, `h` the hidden width and `V` the vocabulary.
//! Backward cost defaults to twice the forward cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("invalid model dimension `{field}`: must be > 0")]
    InvalidDimension { field: &'static str },
    #[error("cut index {cut} out of range 1..={max}")]
    CutOutOfRange { cut: usize, max: usize },
    #[error("model `{0}` has fewer than two blocks; no valid cut exists")]
    TooFewBlocks(String),
    #[error("activation compression ratio {0} outside (0, 1]")]
    InvalidCompression(f64),
    #[error("invalid layer cost in `{0}`: values must be finite and non-negative")]
    InvalidLayer(String),
    #[error("block override index {index} out of range for {blocks} blocks")]
    OverrideOutOfRange { index: usize, blocks: usize },
}

/// Cost record for one layer, for one sample at the reference sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub flops_forward: f64,
    pub flops_backward: f64,
    pub param_bytes: u64,
    pub activation_bytes_per_sample: u64,
}

impl LayerProfile {
    /// Layer whose backward pass costs twice its forward pass.
    pub fn new(flops_forward: f64, param_bytes: u64, activation_bytes_per_sample: u64) -> Self {
        Self {
            flops_forward,
            flops_backward: 2.0 * flops_forward,
            param_bytes,
            activation_bytes_per_sample,
        }
    }

    pub fn with_backward(mut self, flops_backward: f64) -> Self {
        self.flops_backward = flops_backward;
        self
    }

    pub fn training_flops(&self) -> f64 {
        self.flops_forward + self.flops_backward
    }

    fn is_valid(&self) -> bool {
        self.flops_forward.is_finite()
            && self.flops_backward.is_finite()
            && self.flops_forward >= 0.0
            && self.flops_backward >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    /// Bytes per element used for the activation sizes stored in the layers.
    pub precision_bytes: u32,
    pub embedding: LayerProfile,
    pub blocks: Vec<LayerProfile>,
    pub head: LayerProfile,
}

impl ModelProfile {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Largest valid cut index (`blocks - 1`).
    pub fn max_cut(&self) -> usize {
        self.blocks.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.blocks.len() < 2 {
            return Err(ProfileError::TooFewBlocks(self.name.clone()));
        }
        if self.precision_bytes == 0 {
            return Err(ProfileError::InvalidDimension {
                field: "precision_bytes",
            });
        }
        let all = std::iter::once(&self.embedding)
            .chain(self.blocks.iter())
            .chain(std::iter::once(&self.head));
        if all.into_iter().any(|l| !l.is_valid()) {
            return Err(ProfileError::InvalidLayer(self.name.clone()));
        }
        Ok(())
    }

    /// Activation bytes at the output of block `cut` (1-based), re-expressed at
    /// `wire_precision` bytes per element.
    fn boundary_bytes(&self, cut: usize, wire_precision: u32) -> u64 {
        let stored = self.blocks[cut - 1].activation_bytes_per_sample;
        stored * u64::from(wire_precision) / u64::from(self.precision_bytes)
    }
}

/// Architecture dimensions for [`build_transformer_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerDims {
    pub hidden_dim: u64,
    pub num_blocks: usize,
    pub seq_len: u64,
    pub vocab: u64,
    pub precision_bytes: u32,
}

/// Builds a uniform-width dense transformer profile.
pub fn build_transformer_profile(
    name: impl Into<String>,
    dims: &TransformerDims,
) -> Result<ModelProfile, ProfileError> {
    let checks: [(&'static str, bool); 5] = [
        ("hidden_dim", dims.hidden_dim > 0),
        ("num_blocks", dims.num_blocks > 0),
        ("seq_len", dims.seq_len > 0),
        ("vocab", dims.vocab > 0),
        ("precision_bytes", dims.precision_bytes > 0),
    ];
    if let Some((field, _)) = checks.iter().find(|(_, ok)| !ok) {
        return Err(ProfileError::InvalidDimension { field });
    }

    let h = dims.hidden_dim;
    let s = dims.seq_len;
    let v = dims.vocab;
    let p = u64::from(dims.precision_bytes);
    let (hf, sf, vf) = (h as f64, s as f64, v as f64);

    let block_flops = 24.0 * sf * hf * hf + 4.0 * sf * sf * hf;
    let block = LayerProfile::new(block_flops, 12 * h * h * p, s * h * p);
    let embedding = LayerProfile::new(sf * hf, v * h * p, s * h * p);
    let head = LayerProfile::new(2.0 * sf * hf * vf, v * h * p, s * v * p);

    Ok(ModelProfile {
        name: name.into(),
        precision_bytes: dims.precision_bytes,
        embedding,
        blocks: vec![block; dims.num_blocks],
        head,
    })
}

/// Per-block cost override. `index` is 1-based. A forward override without a
/// backward override resets backward to twice the new forward cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockOverride {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops_forward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops_backward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_bytes_per_sample: Option<u64>,
}

/// Config-side description of a model: dimensions plus optional overrides.
/// Sequence length and precision are workload properties and supplied at
/// build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub hidden_dim: u64,
    pub num_blocks: usize,
    pub vocab: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<BlockOverride>,
}

impl ModelSpec {
    pub fn build(&self, seq_len: u64, precision_bytes: u32) -> Result<ModelProfile, ProfileError> {
        let dims = TransformerDims {
            hidden_dim: self.hidden_dim,
            num_blocks: self.num_blocks,
            seq_len,
            vocab: self.vocab,
            precision_bytes,
        };
        let mut profile = build_transformer_profile(self.name.clone(), &dims)?;
        for o in &self.overrides {
            let blocks = profile.blocks.len();
            if o.index == 0 || o.index > blocks {
                return Err(ProfileError::OverrideOutOfRange { index: o.index, blocks });
            }
            let layer = &mut profile.blocks[o.index - 1];
            if let Some(f) = o.flops_forward {
                *layer = LayerProfile {
                    flops_forward: f,
                    flops_backward: 2.0 * f,
                    ..*layer
                };
            }
            if let Some(b) = o.flops_backward {
                layer.flops_backward = b;
            }
            if let Some(p) = o.param_bytes {
                layer.param_bytes = p;
            }
            if let Some(a) = o.activation_bytes_per_sample {
                layer.activation_bytes_per_sample = a;
            }
        }
        profile.validate()?;
        Ok(profile)
    }
}

/// Decision variables of one training round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutPlan {
    /// Number of student blocks trained on the device.
    pub cut_index: usize,
    pub gpu_frequency_hz: f64,
}

/// Per-batch work and traffic for a given cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSplit {
    pub device_forward_flops: f64,
    pub device_backward_flops: f64,
    /// `device_forward_flops + device_backward_flops`.
    pub device_flops: f64,
    pub server_flops: f64,
    /// Compressed student activations at the cut boundary.
    pub smashed_compressible_bytes: u64,
    /// Teacher embedding output; never compressed.
    pub smashed_fixed_bytes: u64,
    pub smashed_bytes_up: u64,
    pub gradient_bytes_down: u64,
    pub device_param_bytes_up: u64,
}

/// Splits one batch of split-distillation training between device and server.
///
/// Device: teacher embedding (forward only), student embedding and blocks
/// `1..=c` (forward and backward). Server: remaining teacher layers (forward
/// only), student blocks `c+1..` and the student head (forward and backward).
pub fn split_workload(
    student: &ModelProfile,
    teacher: &ModelProfile,
    plan: &CutPlan,
    batch_size: u64,
    precision_bytes: u32,
    activation_compression_ratio: f64,
) -> Result<WorkloadSplit, ProfileError> {
    let c = plan.cut_index;
    let max = student.max_cut();
    if c < 1 || c > max {
        return Err(ProfileError::CutOutOfRange { cut: c, max });
    }
    if !(activation_compression_ratio > 0.0 && activation_compression_ratio <= 1.0) {
        return Err(ProfileError::InvalidCompression(activation_compression_ratio));
    }
    if precision_bytes == 0 {
        return Err(ProfileError::InvalidDimension {
            field: "precision_bytes",
        });
    }
    let b = batch_size as f64;
    let (device_blocks, server_blocks) = student.blocks.split_at(c);

    let device_fwd = teacher.embedding.flops_forward
        + student.embedding.flops_forward
        + device_blocks.iter().map(|l| l.flops_forward).sum::<f64>();
    let device_bwd = student.embedding.flops_backward + device_blocks.iter().map(|l| l.flops_backward).sum::<f64>();

    let teacher_rest = teacher.blocks.iter().map(|l| l.flops_forward).sum::<f64>() + teacher.head.flops_forward;
    let student_rest =
        server_blocks.iter().map(LayerProfile::training_flops).sum::<f64>() + student.head.training_flops();

    let boundary = batch_size * student.boundary_bytes(c, precision_bytes);
    let compressible = (boundary as f64 * activation_compression_ratio).round() as u64;
    let fixed = batch_size * teacher.embedding.activation_bytes_per_sample * u64::from(precision_bytes)
        / u64::from(teacher.precision_bytes);

    let device_param_bytes_up =
        student.embedding.param_bytes + device_blocks.iter().map(|l| l.param_bytes).sum::<u64>();

    Ok(WorkloadSplit {
        device_forward_flops: b * device_fwd,
        device_backward_flops: b * device_bwd,
        device_flops: b * device_fwd + b * device_bwd,
        server_flops: b * (teacher_rest + student_rest),
        smashed_compressible_bytes: compressible,
        smashed_fixed_bytes: fixed,
        smashed_bytes_up: compressible + fixed,
        gradient_bytes_down: boundary,
        device_param_bytes_up,
    })
}
