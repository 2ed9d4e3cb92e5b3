//! Kernel descriptors and the cycle-count model.
//!
//! Each chip executes the same dataflow: Q/K/V projections, per-head
//! attention, the W_O slice, then the FC pair, with the skip-add and
//! normalization running on the tree root only. Cycle counts follow
//! `fixed_overhead + work / (cores * macs_per_cycle * util(n))` where
//! `util(n) = u_max * n / (n + k_half)` saturates in the kernel's free
//! output dimension: narrow per-chip output slices under-fill the cores,
//! which is what makes kernel runtime scale sub-linearly as tensors are
//! partitioned ever thinner.

use serde::Serialize;

use crate::model::ModelConfig;
use crate::partition::{PartitionPlan, TensorName};

use super::{ChipSpec, PerfParams};

/// Scalar-op weights for the non-MAC kernels, relative to one MAC.
pub const SOFTMAX_OPS_PER_ELEM: u64 = 4;
pub const GELU_OPS_PER_ELEM: u64 = 8;
pub const NORM_OPS_PER_ELEM: u64 = 5;
pub const ADD_OPS_PER_ELEM: u64 = 1;

/// Kernel classes distinguished by the cycle model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gemm,
    Gemv,
    Softmax,
    Gelu,
    Norm,
    Elementwise,
}

/// One kernel instance on one chip: dims, operand byte counts and the weight
/// tensor it consumes (if any).
#[derive(Debug, Clone, Serialize)]
pub struct KernelDesc {
    pub kind: KernelKind,
    pub label: String,
    /// Rows of the output (query length for the block kernels).
    pub m: usize,
    /// Free output dimension; the utilization argument.
    pub n: usize,
    /// Contraction length (1 for row-wise kernels).
    pub k: usize,
    pub weight: Option<TensorName>,
    pub weight_bytes: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

impl KernelDesc {
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        label: impl Into<String>,
        m: usize,
        n: usize,
        k: usize,
        weight: Option<TensorName>,
        weight_bytes: u64,
        input_bytes: u64,
        output_bytes: u64,
    ) -> Self {
        Self {
            kind: if m == 1 { KernelKind::Gemv } else { KernelKind::Gemm },
            label: label.into(),
            m,
            n,
            k,
            weight,
            weight_bytes,
            input_bytes,
            output_bytes,
        }
    }

    fn row_op(kind: KernelKind, label: impl Into<String>, rows: usize, len: usize, bytes_per_elem: usize) -> Self {
        let io = (rows * len * bytes_per_elem) as u64;
        let input_bytes = if kind == KernelKind::Elementwise { 2 * io } else { io };
        Self {
            kind,
            label: label.into(),
            m: rows,
            n: len,
            k: 1,
            weight: None,
            weight_bytes: 0,
            input_bytes,
            output_bytes: io,
        }
    }

    /// MAC count of the kernel (zero for the row-wise kernels).
    pub fn work_macs(&self) -> u64 {
        match self.kind {
            KernelKind::Gemm | KernelKind::Gemv => (self.m * self.n * self.k) as u64,
            _ => 0,
        }
    }

    /// Scalar work units fed to the cycle model.
    pub fn work_units(&self) -> u64 {
        match self.kind {
            KernelKind::Gemm | KernelKind::Gemv => self.work_macs(),
            KernelKind::Softmax => SOFTMAX_OPS_PER_ELEM * (self.m * self.n) as u64,
            KernelKind::Gelu => GELU_OPS_PER_ELEM * (self.m * self.n) as u64,
            KernelKind::Norm => NORM_OPS_PER_ELEM * (self.m * self.n) as u64,
            KernelKind::Elementwise => ADD_OPS_PER_ELEM * (self.m * self.n) as u64,
        }
    }

    /// Bytes moved through L1 for this kernel (weights + inputs + outputs).
    pub fn operand_bytes(&self) -> u64 {
        self.weight_bytes + self.input_bytes + self.output_bytes
    }
}

/// Saturating utilization in the free output dimension.
pub fn util(n: usize, params: &PerfParams) -> f64 {
    params.util_max * n as f64 / (n as f64 + params.util_k_half)
}

/// Cycle count of one kernel on one chip.
pub fn kernel_cycles(kernel: &KernelDesc, chip: &ChipSpec, params: &PerfParams) -> u64 {
    let peak = (chip.cores * chip.macs_per_core_per_cycle) as f64;
    let rate = peak * util(kernel.n, params);
    params.fixed_overhead_cycles + (kernel.work_units() as f64 / rate).ceil() as u64
}

/// Seconds one kernel takes on one chip.
pub fn kernel_seconds(kernel: &KernelDesc, chip: &ChipSpec, params: &PerfParams) -> f64 {
    kernel_cycles(kernel, chip, params) as f64 / chip.clock_hz
}

/// The per-chip kernel lists of one block, split at the two sync points.
#[derive(Debug, Clone)]
pub struct ChipKernels {
    /// Projections, per-head attention and the W_O slice.
    pub mhsa: Vec<KernelDesc>,
    /// Skip-add and normalization after the MHSA reduce (root chip only).
    pub sync1_root: Vec<KernelDesc>,
    /// FC1, GELU, FC2.
    pub fc: Vec<KernelDesc>,
    /// Skip-add and normalization after the FC reduce (root chip only).
    pub sync2_root: Vec<KernelDesc>,
}

impl ChipKernels {
    pub fn all(&self) -> impl Iterator<Item = &KernelDesc> {
        self.mhsa
            .iter()
            .chain(self.sync1_root.iter())
            .chain(self.fc.iter())
            .chain(self.sync2_root.iter())
    }
}

/// Enumerate the kernels chip `chip_id` runs for one block under `plan`.
pub fn chip_kernels(cfg: &ModelConfig, plan: &PartitionPlan, chip_id: usize) -> ChipKernels {
    let q = cfg.query_len();
    let kv = cfg.attended_len();
    let b = cfg.bytes_per_elem;
    let e = cfg.embed_dim;
    let p = cfg.head_dim;
    let local_heads = cfg.num_heads / plan.n_chips;
    let ph_c = p * local_heads;
    let f_c = cfg.intermediate_dim / plan.n_chips;

    let mut mhsa = Vec::new();
    for (tensor, label) in [
        (TensorName::WQuery, "proj_q"),
        (TensorName::WKey, "proj_k"),
        (TensorName::WValue, "proj_v"),
    ] {
        mhsa.push(KernelDesc::gemm(
            label,
            q,
            ph_c,
            e,
            Some(tensor),
            (e * ph_c * b) as u64,
            (q * e * b) as u64,
            (q * ph_c * b) as u64,
        ));
    }
    for h in 0..local_heads {
        mhsa.push(KernelDesc::gemm(
            format!("scores_h{h}"),
            q,
            kv,
            p,
            None,
            0,
            ((q * p + kv * p) * b) as u64,
            (q * kv * b) as u64,
        ));
        mhsa.push(KernelDesc::row_op(KernelKind::Softmax, format!("softmax_h{h}"), q, kv, b));
        mhsa.push(KernelDesc::gemm(
            format!("attnv_h{h}"),
            q,
            p,
            kv,
            None,
            0,
            ((q * kv + kv * p) * b) as u64,
            (q * p * b) as u64,
        ));
    }
    mhsa.push(KernelDesc::gemm(
        "proj_out",
        q,
        e,
        ph_c,
        Some(TensorName::WOut),
        (ph_c * e * b) as u64,
        (q * ph_c * b) as u64,
        (q * e * b) as u64,
    ));

    let root_ops = |tag: &str| {
        vec![
            KernelDesc::row_op(KernelKind::Elementwise, format!("skip_{tag}"), q, e, b),
            KernelDesc::row_op(KernelKind::Norm, format!("norm_{tag}"), q, e, b),
        ]
    };
    let is_root = chip_id == plan.tree.root;

    let fc = vec![
        KernelDesc::gemm(
            "fc1",
            q,
            f_c,
            e,
            Some(TensorName::WL1),
            (e * f_c * b) as u64,
            (q * e * b) as u64,
            (q * f_c * b) as u64,
        ),
        KernelDesc::row_op(KernelKind::Gelu, "gelu", q, f_c, b),
        KernelDesc::gemm(
            "fc2",
            q,
            e,
            f_c,
            Some(TensorName::WL2),
            (f_c * e * b) as u64,
            (q * f_c * b) as u64,
            (q * e * b) as u64,
        ),
    ];

    ChipKernels {
        mhsa,
        sync1_root: if is_root { root_ops("mhsa") } else { Vec::new() },
        fc,
        sync2_root: if is_root { root_ops("fc") } else { Vec::new() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Mode};
    use crate::partition::plan_partition;

    fn defaults() -> (ChipSpec, PerfParams) {
        (ChipSpec::default(), PerfParams::default())
    }

    #[test]
    fn minimal_gemm_is_overhead_dominated() {
        let (chip, params) = defaults();
        let k = KernelDesc::gemm("t", 1, 1, 1, None, 0, 0, 0);
        let rate = 16.0 * util(1, &params);
        let expected = params.fixed_overhead_cycles + (1.0 / rate).ceil() as u64;
        assert_eq!(kernel_cycles(&k, &chip, &params), expected);
        assert_eq!(k.kind, KernelKind::Gemv);
    }

    #[test]
    fn doubling_k_doubles_the_work_term() {
        let (chip, params) = defaults();
        let a = KernelDesc::gemm("a", 4, 32, 64, None, 0, 0, 0);
        let b = KernelDesc::gemm("b", 4, 32, 128, None, 0, 0, 0);
        assert_eq!(b.work_macs(), 2 * a.work_macs());
        let wa = kernel_cycles(&a, &chip, &params) - params.fixed_overhead_cycles;
        let wb = kernel_cycles(&b, &chip, &params) - params.fixed_overhead_cycles;
        // util depends on n only, so the cycle work term doubles exactly
        // (up to the ceil).
        assert!(wb == 2 * wa || wb == 2 * wa - 1 || wb == 2 * wa + 1, "{wa} vs {wb}");
    }

    #[test]
    fn gemv_scales_sub_linearly_in_n() {
        let (chip, params) = defaults();
        let wide = KernelDesc::gemm("wide", 1, 512, 512, None, 0, 0, 0);
        let narrow = KernelDesc::gemm("narrow", 1, 64, 512, None, 0, 0, 0);
        let ratio =
            kernel_cycles(&wide, &chip, &params) as f64 / kernel_cycles(&narrow, &chip, &params) as f64;
        assert!(ratio < 8.0, "8x less work must cost less than 8x fewer cycles, got {ratio}");
        assert!(ratio > 1.0);
    }

    #[test]
    fn cycles_monotone_in_each_dim() {
        let (chip, params) = defaults();
        let base = KernelDesc::gemm("b", 4, 32, 64, None, 0, 0, 0);
        let c0 = kernel_cycles(&base, &chip, &params);
        for (m, n, k) in [(8, 32, 64), (4, 64, 64), (4, 32, 128)] {
            let k2 = KernelDesc::gemm("b", m, n, k, None, 0, 0, 0);
            assert!(kernel_cycles(&k2, &chip, &params) >= c0);
        }
    }

    #[test]
    fn total_macs_are_partition_invariant() {
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        let totals: Vec<u64> = [1usize, 2, 4, 8]
            .iter()
            .map(|&n| {
                let plan = plan_partition(&cfg, n).unwrap();
                (0..n)
                    .map(|c| chip_kernels(&cfg, &plan, c).all().map(|k| k.work_macs()).sum::<u64>())
                    .sum()
            })
            .collect();
        assert!(totals.windows(2).all(|w| w[0] == w[1]), "{totals:?}");
    }

    #[test]
    fn root_runs_the_normalization_kernels() {
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        let plan = plan_partition(&cfg, 4).unwrap();
        let root = chip_kernels(&cfg, &plan, 0);
        let other = chip_kernels(&cfg, &plan, 1);
        assert_eq!(root.sync1_root.len(), 2);
        assert_eq!(root.sync2_root.len(), 2);
        assert!(other.sync1_root.is_empty() && other.sync2_root.is_empty());
    }

    #[test]
    fn autoregressive_kernels_are_gemv() {
        let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
        let plan = plan_partition(&cfg, 1).unwrap();
        let kernels = chip_kernels(&cfg, &plan, 0);
        assert!(kernels
            .mhsa
            .iter()
            .filter(|k| matches!(k.kind, KernelKind::Gemm | KernelKind::Gemv))
            .all(|k| k.kind == KernelKind::Gemv));
    }
}
