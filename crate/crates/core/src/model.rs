//! Transformer workload configurations, derived tensor shapes and byte-size
//! accounting.
//!
//! Every other module derives its shapes from [`ModelConfig`]: the partition
//! planner slices along the head and intermediate dimensions, the executor
//! materializes weights at these shapes, and the performance model sizes its
//! kernels and memory traffic from the same numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inference mode of a Transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One token per step; prior keys/values come from the KV-cache.
    /// The dominant kernels are GEMVs.
    Autoregressive,
    /// A full sequence in one pass; the dominant kernels are GEMMs.
    Prompt,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Autoregressive => "autoregressive",
            Mode::Prompt => "prompt",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autoregressive" | "ar" => Ok(Mode::Autoregressive),
            "prompt" => Ok(Mode::Prompt),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// Row-wise normalization variant used by the executor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    LayerNorm,
    RmsNorm,
}

/// GELU variant used by the executor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeluKind {
    /// Exact formulation via the Gauss error function.
    Erf,
    /// Common tanh approximation.
    Tanh,
}

/// Hyperparameters of one Transformer block workload.
///
/// Dimension names follow the usual convention: `S` sequence length,
/// `E` embedding dimension, `P` per-head projection dimension, `H` head
/// count, `F` intermediate (feed-forward) dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sequence length S (tokens). In autoregressive mode this is the
    /// sequence being generated; each step still processes one token.
    pub seq_len: usize,
    /// Embedding dimension E.
    pub embed_dim: usize,
    /// Projection dimension P (columns per head of W_query/W_key/W_value).
    pub head_dim: usize,
    /// Number of attention heads H.
    pub num_heads: usize,
    /// Intermediate dimension F of the fully-connected stage.
    pub intermediate_dim: usize,
    /// Number of Transformer blocks L in the full model.
    pub num_blocks: usize,
    /// Inference mode.
    pub mode: Mode,
    /// Bytes per weight/activation element on the target platform.
    pub bytes_per_elem: usize,
    /// KV-cache capacity C in tokens (autoregressive mode only).
    pub kv_cache_len: usize,
    /// Causal attention masking (decoder semantics). Off for encoders.
    pub causal: bool,
    /// Row-wise normalization variant.
    pub norm_kind: NormKind,
    /// GELU variant.
    pub gelu_kind: GeluKind,
}

impl ModelConfig {
    /// Rows processed per inference step: `S` in prompt mode, 1 per
    /// autoregressive step.
    pub fn query_len(&self) -> usize {
        match self.mode {
            Mode::Autoregressive => 1,
            Mode::Prompt => self.seq_len,
        }
    }

    /// Key/value positions attended per step at the measurement point:
    /// `S` in prompt mode, the full cache depth `C` in autoregressive mode
    /// (worst-case step).
    pub fn attended_len(&self) -> usize {
        match self.mode {
            Mode::Autoregressive => self.kv_cache_len,
            Mode::Prompt => self.seq_len,
        }
    }

    /// Total weight-matrix columns of the fused Q/K/V projections, `P*H`.
    pub fn proj_cols(&self) -> usize {
        self.head_dim * self.num_heads
    }
}

/// One violated invariant reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Result of configuration validation. Warnings do not make the config
/// invalid; violations do.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn violate(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation { field: field.into(), message: message.into() });
    }
}

/// Check all [`ModelConfig`] invariants without mutating anything.
///
/// `embed_dim == head_dim * num_heads` is reported as a warning only: the
/// partitioning scheme merely requires the W_O input dimension to be `P*H`.
pub fn validate(cfg: &ModelConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if cfg.seq_len < 1 {
        report.violate("seq_len", "seq_len ≥ 1");
    }
    if cfg.embed_dim < 1 {
        report.violate("embed_dim", "embed_dim ≥ 1");
    }
    if cfg.head_dim < 1 {
        report.violate("head_dim", "head_dim ≥ 1");
    }
    if cfg.num_heads < 1 {
        report.violate("num_heads", "num_heads ≥ 1");
    }
    if cfg.intermediate_dim < 1 {
        report.violate("intermediate_dim", "intermediate_dim ≥ 1");
    }
    if cfg.num_blocks < 1 {
        report.violate("num_blocks", "num_blocks ≥ 1");
    }
    if !matches!(cfg.bytes_per_elem, 1 | 2 | 4) {
        report.violate("bytes_per_elem", "bytes_per_elem ∈ {1, 2, 4}");
    }
    if cfg.mode == Mode::Autoregressive && cfg.kv_cache_len < 1 {
        report.violate("kv_cache_len", "kv_cache_len ≥ 1 in autoregressive mode");
    }
    if cfg.embed_dim != cfg.head_dim * cfg.num_heads {
        report.warnings.push(format!(
            "embed_dim {} != head_dim*num_heads {} (general scheme still applies)",
            cfg.embed_dim,
            cfg.head_dim * cfg.num_heads
        ));
    }
    report
}

/// Total weight bytes of one block: `(4*E*P*H + 2*E*F + 2*E) * b`.
///
/// The four `E x (P*H)`-sized projections (Q, K, V and the transposed-shape
/// W_O), the two FC matrices, and the two length-`E` normalization vectors.
/// Independent of any partitioning.
pub fn block_weight_bytes(cfg: &ModelConfig) -> u64 {
    (block_param_count(cfg) as u64) * cfg.bytes_per_elem as u64
}

/// Total parameter count of one block, `4*E*P*H + 2*E*F + 2*E`.
pub fn block_param_count(cfg: &ModelConfig) -> usize {
    4 * cfg.embed_dim * cfg.proj_cols() + 2 * cfg.embed_dim * cfg.intermediate_dim
        + 2 * cfg.embed_dim
}

/// Bytes of the sliced weight matrices only (normalization vectors excluded);
/// this is the quantity that is scattered across chips with no duplication.
pub fn sliced_weight_bytes(cfg: &ModelConfig) -> u64 {
    ((4 * cfg.embed_dim * cfg.proj_cols() + 2 * cfg.embed_dim * cfg.intermediate_dim) as u64)
        * cfg.bytes_per_elem as u64
}

/// Bytes of the two normalization parameter vectors, `2*E*b`. These live on
/// the chip performing normalization only and are excluded from the
/// no-duplication accounting.
pub fn norm_param_bytes(cfg: &ModelConfig) -> u64 {
    (2 * cfg.embed_dim * cfg.bytes_per_elem) as u64
}

/// Per-chip activation bytes under an `n_chips`-way head split:
/// local Q/K/V slices, the partial output (`q x E`), the input copy
/// (`q x E`), and in autoregressive mode the local KV-cache slice
/// `2*C*P*(H/n)*b`.
pub fn activation_bytes(cfg: &ModelConfig, n_chips: usize) -> Result<u64> {
    if n_chips == 0 || !cfg.num_heads.is_multiple_of(n_chips) {
        return Err(Error::IndivisibleHeads { num_heads: cfg.num_heads, n_chips });
    }
    let q = cfg.query_len() as u64;
    let b = cfg.bytes_per_elem as u64;
    let e = cfg.embed_dim as u64;
    let p = cfg.head_dim as u64;
    let local_heads = (cfg.num_heads / n_chips) as u64;

    let qkv_slices = 3 * q * p * local_heads * b;
    let partial_out = q * e * b;
    let input_copy = q * e * b;
    let kv_slice = match cfg.mode {
        Mode::Autoregressive => 2 * cfg.kv_cache_len as u64 * p * local_heads * b,
        Mode::Prompt => 0,
    };
    Ok(qkv_slices + partial_out + input_copy + kv_slice)
}

/// Per-chip scratch bytes beyond [`activation_bytes`]: the largest per-head
/// attention score slice (`q x kv`) plus the FC intermediate (`q x F/n`).
/// Heads are processed one at a time, so one score buffer suffices.
pub fn scratch_bytes(cfg: &ModelConfig, n_chips: usize) -> Result<u64> {
    if n_chips == 0 || !cfg.intermediate_dim.is_multiple_of(n_chips) {
        return Err(Error::IndivisibleIntermediate {
            intermediate_dim: cfg.intermediate_dim,
            n_chips,
        });
    }
    let q = cfg.query_len() as u64;
    let kv = cfg.attended_len() as u64;
    let b = cfg.bytes_per_elem as u64;
    let scores = q * kv * b;
    let fc_inter = q * (cfg.intermediate_dim / n_chips) as u64 * b;
    Ok(scores + fc_inter)
}

// ---------------------------------------------------------------------------
// Workload presets
// ---------------------------------------------------------------------------

/// A named workload preset.
#[derive(Debug, Clone)]
pub struct WorkloadPreset {
    pub name: &'static str,
    pub config: ModelConfig,
}

/// Names of the shipped presets.
pub const PRESET_NAMES: [&str; 3] = ["tinyllama", "mobilebert", "tinyllama-scaled"];

/// Look up a preset by name for the given inference mode.
///
/// * `tinyllama` — decoder block: E=512, P=64, H=8, F=2048, 8 blocks,
///   causal; S=128 with a full 128-token KV-cache in autoregressive mode,
///   S=16 in prompt mode.
/// * `mobilebert` — encoder block: E=512, P=128, H=4, F=512, 24 blocks,
///   S=268, prompt mode only, no causal mask.
/// * `tinyllama-scaled` — the 64-head scalability variant of `tinyllama`
///   with per-block size unchanged (P=8 so that P*H stays 512).
pub fn preset(name: &str, mode: Mode) -> Result<ModelConfig> {
    let base = ModelConfig {
        seq_len: 0,
        embed_dim: 512,
        head_dim: 0,
        num_heads: 0,
        intermediate_dim: 0,
        num_blocks: 0,
        mode,
        bytes_per_elem: 2,
        kv_cache_len: 0,
        causal: true,
        norm_kind: NormKind::LayerNorm,
        gelu_kind: GeluKind::Erf,
    };
    match name {
        "tinyllama" | "tinyllama-scaled" => {
            let (head_dim, num_heads) = if name == "tinyllama" { (64, 8) } else { (8, 64) };
            let (seq_len, kv_cache_len) = match mode {
                Mode::Autoregressive => (128, 128),
                Mode::Prompt => (16, 0),
            };
            Ok(ModelConfig {
                seq_len,
                head_dim,
                num_heads,
                intermediate_dim: 2048,
                num_blocks: 8,
                kv_cache_len,
                ..base
            })
        }
        "mobilebert" => {
            if mode == Mode::Autoregressive {
                return Err(Error::InvalidConfig(
                    "mobilebert is an encoder preset; only prompt mode is defined".into(),
                ));
            }
            Ok(ModelConfig {
                seq_len: 268,
                head_dim: 128,
                num_heads: 4,
                intermediate_dim: 512,
                num_blocks: 24,
                causal: false,
                ..base
            })
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown preset '{other}' (expected one of {PRESET_NAMES:?})"
        ))),
    }
}

/// All shipped presets in their default modes (autoregressive where defined).
pub fn all_presets() -> Vec<WorkloadPreset> {
    vec![
        WorkloadPreset { name: "tinyllama", config: preset("tinyllama", Mode::Autoregressive).unwrap() },
        WorkloadPreset { name: "mobilebert", config: preset("mobilebert", Mode::Prompt).unwrap() },
        WorkloadPreset {
            name: "tinyllama-scaled",
            config: preset("tinyllama-scaled", Mode::Autoregressive).unwrap(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tinyllama_preset_validates_ok() {
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        let report = validate(&cfg);
        assert!(report.is_ok(), "violations: {:?}", report.violations);
        // E = P*H holds for the shipped decoder presets.
        assert!(report.warnings.is_empty());
        assert_eq!(cfg.proj_cols(), 512);
    }

    #[test]
    fn e_equals_ph_satisfied() {
        let mut cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        cfg.embed_dim = 512;
        cfg.head_dim = 64;
        cfg.num_heads = 8;
        let report = validate(&cfg);
        assert!(report.is_ok());
        assert!(report.warnings.is_empty(), "64*8 = 512 = E");
    }

    #[test]
    fn zero_heads_is_a_violation() {
        let mut cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        cfg.num_heads = 0;
        let report = validate(&cfg);
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| v.field == "num_heads"));
    }

    #[test]
    fn mismatched_e_is_only_a_warning() {
        let mut cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        cfg.embed_dim = 500;
        let report = validate(&cfg);
        assert!(report.is_ok());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn tinyllama_block_weight_bytes() {
        // (4*512*512 + 2*512*2048 + 2*512) * 2 = 6,293,504
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        assert_eq!(block_weight_bytes(&cfg), 6_293_504);
    }

    #[test]
    fn unit_dims_block_weight_bytes() {
        let cfg = ModelConfig {
            seq_len: 1,
            embed_dim: 1,
            head_dim: 1,
            num_heads: 1,
            intermediate_dim: 1,
            num_blocks: 1,
            mode: Mode::Prompt,
            bytes_per_elem: 1,
            kv_cache_len: 0,
            causal: false,
            norm_kind: NormKind::LayerNorm,
            gelu_kind: GeluKind::Erf,
        };
        assert_eq!(block_weight_bytes(&cfg), 8); // 4 + 2 + 2
    }

    #[test]
    fn mobilebert_block_weight_bytes_b1() {
        let mut cfg = preset("mobilebert", Mode::Prompt).unwrap();
        cfg.bytes_per_elem = 1;
        // 4*512*512 + 2*512*512 + 2*512 = 1,573,888
        assert_eq!(block_weight_bytes(&cfg), 1_573_888);
    }

    #[test]
    #[allow(clippy::identity_op)]
    fn tinyllama_kv_slice_bytes_at_8_chips() {
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        let total = activation_bytes(&cfg, 8).unwrap();
        // KV slice alone: 2*128*64*1*2 = 32,768
        let kv = 2 * 128 * 64 * 1 * 2;
        let rest = 3 * 1 * 64 * 1 * 2 + 2 * (1 * 512 * 2);
        assert_eq!(total, (kv + rest) as u64);
    }

    #[test]
    fn one_head_per_chip_at_n_equals_h() {
        // At n = H each chip's Q/K/V slice holds exactly one head.
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        let bytes = activation_bytes(&cfg, cfg.num_heads).unwrap();
        let q = cfg.query_len();
        let b = cfg.bytes_per_elem;
        let one_head_qkv = 3 * q * cfg.head_dim * b;
        let io_copies = 2 * q * cfg.embed_dim * b;
        let kv = 2 * cfg.kv_cache_len * cfg.head_dim * b;
        assert_eq!(bytes, (one_head_qkv + io_copies + kv) as u64);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        assert_eq!(
            activation_bytes(&cfg, 3),
            Err(Error::IndivisibleHeads { num_heads: 8, n_chips: 3 })
        );
    }

    #[test]
    fn byte_accounting_linear_in_b() {
        let mut cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        cfg.bytes_per_elem = 1;
        let b1 = block_weight_bytes(&cfg);
        cfg.bytes_per_elem = 4;
        assert_eq!(block_weight_bytes(&cfg), 4 * b1);
    }

    #[test]
    fn mobilebert_rejects_autoregressive() {
        assert!(preset("mobilebert", Mode::Autoregressive).is_err());
    }

    #[test]
    fn exactly_three_presets_ship() {
        let presets = all_presets();
        assert_eq!(presets.len(), 3);
        let names: Vec<&str> = presets.iter().map(|p| p.name).collect();
        assert_eq!(names, PRESET_NAMES);
        for p in &presets {
            assert!(validate(&p.config).is_ok(), "{} must validate", p.name);
        }
        assert!(preset("gpt-xxl", Mode::Prompt).is_err());
    }

    #[test]
    fn preset_dimensions_are_pinned() {
        let tl = preset("tinyllama", Mode::Autoregressive).unwrap();
        assert_eq!((tl.embed_dim, tl.intermediate_dim, tl.num_heads, tl.head_dim), (512, 2048, 8, 64));
        assert_eq!((tl.seq_len, tl.kv_cache_len), (128, 128));
        assert_eq!(preset("tinyllama", Mode::Prompt).unwrap().seq_len, 16);
        let mb = preset("mobilebert", Mode::Prompt).unwrap();
        assert_eq!((mb.embed_dim, mb.intermediate_dim, mb.num_heads, mb.seq_len), (512, 512, 4, 268));
        assert!(!mb.causal);
        let sc = preset("tinyllama-scaled", Mode::Autoregressive).unwrap();
        assert_eq!(sc.num_heads, 64);
        assert_eq!(sc.embed_dim, sc.head_dim * sc.num_heads);
    }

    #[test]
    fn scaled_preset_keeps_block_size() {
        let base = preset("tinyllama", Mode::Autoregressive).unwrap();
        let scaled = preset("tinyllama-scaled", Mode::Autoregressive).unwrap();
        assert_eq!(scaled.num_heads, 64);
        assert_eq!(block_weight_bytes(&base), block_weight_bytes(&scaled));
    }
}
