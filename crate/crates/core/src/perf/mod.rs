//! Deterministic timing simulation of N chips executing one Transformer
//! block under a partition plan.
//!
//! The model covers compute kernels (with a saturating-utilization cycle
//! model), the L2/L3 memory hierarchy with shard residency, double-buffered
//! weight prefetch, per-kernel L3 streaming for shards that do not fit, and
//! chip-to-chip reduce/broadcast transfers scheduled along the hierarchical
//! tree.

pub mod kernel;
pub mod residency;
pub mod sim;
pub mod timeline;

pub use kernel::{chip_kernels, kernel_cycles, kernel_seconds, ChipKernels, KernelDesc, KernelKind};
pub use residency::{plan_residency, ResidencyPlan, ShardHome};
pub use sim::{simulate_block, sweep, SweepOutcome, SweepResult};
pub use timeline::{Category, CategoryTimes, Event, Timeline};

use serde::Serialize;

/// One Siracusa-class chip: an eight-core cluster at 500 MHz with 256 KiB
/// of L1 and 2 MiB of L2 scratchpad.
#[derive(Debug, Clone, Serialize)]
pub struct ChipSpec {
    pub cores: usize,
    pub clock_hz: f64,
    pub macs_per_core_per_cycle: usize,
    pub l1_bytes: u64,
    pub l2_bytes: u64,
    /// Aggregate core-to-L1 bandwidth in bits per cycle. L1 refills are
    /// double-buffered behind compute, so this enters the byte accounting
    /// only; see the L2 traffic notes in [`sim`].
    pub l1_bandwidth_bits_per_cycle: u64,
}

impl Default for ChipSpec {
    fn default() -> Self {
        Self {
            cores: 8,
            clock_hz: 5e8,
            macs_per_core_per_cycle: 2,
            l1_bytes: 256 * 1024,
            l2_bytes: 2 * 1024 * 1024,
            l1_bandwidth_bits_per_cycle: 256,
        }
    }
}

impl ChipSpec {
    /// Basic sanity of the chip parameters.
    pub fn is_valid(&self) -> bool {
        self.cores > 0
            && self.clock_hz > 0.0
            && self.macs_per_core_per_cycle > 0
            && self.l1_bytes > 0
            && self.l1_bytes < self.l2_bytes
    }
}

/// Chip-to-chip serial link (MIPI-class): 0.5 GB/s and 100 pJ/B.
#[derive(Debug, Clone, Serialize)]
pub struct LinkSpec {
    pub bandwidth_bytes_per_s: f64,
    pub per_message_latency_s: f64,
    pub energy_per_byte_j: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            bandwidth_bytes_per_s: 5e8,
            per_message_latency_s: 1e-6,
            energy_per_byte_j: 1e-10,
        }
    }
}

impl LinkSpec {
    /// Wire time of one message.
    pub fn message_seconds(&self, bytes: u64) -> f64 {
        bytes as f64 / self.bandwidth_bytes_per_s + self.per_message_latency_s
    }
}

/// Calibration knobs of the performance model. The platform gives no L3
/// bandwidth or kernel-efficiency figures, so these are documented
/// calibration values rather than datasheet numbers.
#[derive(Debug, Clone, Serialize)]
pub struct PerfParams {
    /// Off-chip (L3) bandwidth per chip, single shared port.
    pub l3_bandwidth_bytes_per_s: f64,
    /// Per-kernel launch/tiling overhead in cycles.
    pub fixed_overhead_cycles: u64,
    /// Utilization ceiling of the cycle model.
    pub util_max: f64,
    /// Half-saturation constant of `util(n) = u_max * n / (n + k_half)`.
    pub util_k_half: f64,
    /// Output rows processed per pass when weights stream from L3; a full
    /// weight pass is re-streamed for every `stream_tile_rows` output rows.
    pub stream_tile_rows: usize,
    /// L2 bytes reserved for streaming bounce buffers, code and stack when
    /// shards do not fit residently.
    pub l2_stream_reserve_bytes: u64,
    /// Reduction group size of the hierarchical all-reduce.
    pub fan_in: usize,
}

impl Default for PerfParams {
    fn default() -> Self {
        Self {
            l3_bandwidth_bytes_per_s: 1.0e9,
            fixed_overhead_cycles: 500,
            util_max: 0.8,
            util_k_half: 16.0,
            stream_tile_rows: 64,
            l2_stream_reserve_bytes: 512 * 1024,
            fan_in: 4,
        }
    }
}
