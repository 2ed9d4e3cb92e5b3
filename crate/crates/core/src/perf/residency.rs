//! Shard residency planning: which weight shards live in on-chip L2 during
//! steady-state inference and which stream from off-chip L3.
//!
//! Decision ladder per chip (shards are equal across chips, so one decision
//! covers all):
//!
//! 1. all blocks fit (`L*W + A <= L2`): everything stays resident across the
//!    whole model, no prefetch, zero L3 traffic.
//! 2. two block shares fit (`2*W + A <= L2`): the current block runs from
//!    L2 while the next block's shard prefetches into the second buffer in a
//!    double-buffered fashion; the transfer hides behind compute, its energy
//!    does not.
//! 3. otherwise shards are placed greedily into what L2 leaves free after
//!    activations and a streaming reserve. Resident shards must be reloaded
//!    serially between blocks (there is no room for a prefetch buffer);
//!    shards that do not fit stream from L3 per kernel, re-reading the full
//!    slice once per `stream_tile_rows` output rows. If even the activations
//!    plus the reserve overflow L2, the whole working set thrashes: nothing
//!    is held resident and kernel inputs/outputs spill to L3 too.

use serde::Serialize;

use crate::error::Result;
use crate::model::{self, ModelConfig};
use crate::partition::{PartitionPlan, TensorName};

use super::{ChipSpec, PerfParams};

/// Steady-state home level of one weight shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardHome {
    L2Resident,
    L3Streamed,
}

/// Residency decision for one block under one plan (symmetric across chips).
#[derive(Debug, Clone, Serialize)]
pub struct ResidencyPlan {
    pub n_chips: usize,
    /// Home level per sliced weight tensor, in tensor order.
    pub homes: Vec<(TensorName, ShardHome)>,
    /// Next-block weights prefetch into a second L2 buffer during execution.
    pub double_buffer: bool,
    /// Every block's shard fits on-chip at once; no L3 traffic at all.
    pub all_blocks_resident: bool,
    /// Activations overflow L2; kernel inputs and outputs spill to L3.
    pub activations_spilled: bool,
    /// Per-chip sliced weight bytes of one block.
    pub per_chip_shard_bytes: u64,
    /// Persistent activation bytes (plus scratch) the plan reserves.
    pub activation_bytes: u64,
    /// Per-chip bytes of shards held resident.
    pub resident_bytes: u64,
    /// Per-chip bytes of shards streamed per block (before re-read factors).
    pub streamed_bytes: u64,
}

impl ResidencyPlan {
    pub fn home(&self, tensor: TensorName) -> ShardHome {
        self.homes
            .iter()
            .find(|(t, _)| *t == tensor)
            .map(|(_, h)| *h)
            .unwrap_or(ShardHome::L3Streamed)
    }

    /// Bytes reloaded serially at the start of each block (resident shards
    /// without a double buffer).
    pub fn refill_bytes(&self) -> u64 {
        if self.all_blocks_resident || self.double_buffer {
            0
        } else {
            self.resident_bytes
        }
    }

    /// Bytes prefetched concurrently with execution (double buffering).
    pub fn prefetch_bytes(&self) -> u64 {
        if self.double_buffer {
            self.per_chip_shard_bytes
        } else {
            0
        }
    }
}

/// Decide shard residency for `plan` on `chip`-class hardware.
pub fn plan_residency(
    cfg: &ModelConfig,
    plan: &PartitionPlan,
    chip: &ChipSpec,
    params: &PerfParams,
) -> Result<ResidencyPlan> {
    let n = plan.n_chips;
    let w = plan.per_chip_weight_bytes;
    let act = model::activation_bytes(cfg, n)? + model::scratch_bytes(cfg, n)?;
    let l2 = chip.l2_bytes;
    let blocks = cfg.num_blocks as u64;

    let shard_bytes: Vec<(TensorName, u64)> = TensorName::ALL
        .iter()
        .map(|&t| {
            let s = plan.shard(0, t).expect("plan has all shards");
            (t, (s.elems() * cfg.bytes_per_elem) as u64)
        })
        .collect();

    let all_resident = |db: bool, abr: bool| ResidencyPlan {
        n_chips: n,
        homes: shard_bytes.iter().map(|&(t, _)| (t, ShardHome::L2Resident)).collect(),
        double_buffer: db,
        all_blocks_resident: abr,
        activations_spilled: false,
        per_chip_shard_bytes: w,
        activation_bytes: act,
        resident_bytes: w,
        streamed_bytes: 0,
    };

    if blocks * w + act <= l2 {
        return Ok(all_resident(false, true));
    }
    if 2 * w + act <= l2 {
        return Ok(all_resident(true, false));
    }

    // Streaming regime.
    if act + params.l2_stream_reserve_bytes > l2 {
        // Working set blown: nothing persists across kernels.
        return Ok(ResidencyPlan {
            n_chips: n,
            homes: shard_bytes.iter().map(|&(t, _)| (t, ShardHome::L3Streamed)).collect(),
            double_buffer: false,
            all_blocks_resident: false,
            activations_spilled: true,
            per_chip_shard_bytes: w,
            activation_bytes: act,
            resident_bytes: 0,
            streamed_bytes: w,
        });
    }

    let budget = l2 - params.l2_stream_reserve_bytes - act;
    let mut homes = Vec::with_capacity(shard_bytes.len());
    let mut resident_bytes = 0u64;
    let mut streamed_bytes = 0u64;
    for &(tensor, bytes) in &shard_bytes {
        if resident_bytes + bytes <= budget {
            resident_bytes += bytes;
            homes.push((tensor, ShardHome::L2Resident));
        } else {
            streamed_bytes += bytes;
            homes.push((tensor, ShardHome::L3Streamed));
        }
    }

    Ok(ResidencyPlan {
        n_chips: n,
        homes,
        double_buffer: false,
        all_blocks_resident: false,
        activations_spilled: false,
        per_chip_shard_bytes: w,
        activation_bytes: act,
        resident_bytes,
        streamed_bytes,
    })
}
