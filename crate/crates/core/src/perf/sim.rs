//! Event construction: one Transformer block on N chips.
//!
//! Scheduling rules, all deterministic:
//!
//! * Per-chip kernels run in dataflow order. A kernel whose weight shard is
//!   L3-streamed first stages its slice through the chip's single L3 port,
//!   serialized against that chip's compute; the slice is re-streamed once
//!   per `stream_tile_rows` output rows. When the residency plan reports
//!   spilled activations, kernel inputs and outputs stage through L3 too.
//! * Resident shards without a prefetch buffer reload serially at block
//!   start; with double buffering the next block's shard prefetches on the
//!   otherwise idle L3 port concurrently with the whole block, so the
//!   steady-state block time is max(execution, prefetch).
//! * L2<->L1 traffic is fully double-buffered behind compute: zero-duration
//!   events carry the byte counts, charged as energy only.
//! * Reduce/broadcast messages occupy their directed link for
//!   `bytes/bandwidth + latency`. Disjoint groups of one tree level transfer
//!   concurrently; a receiver holds the payload when its last inbound
//!   message ends, and normalization runs only on the root between the
//!   reduce and the broadcast.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::partition::{plan_partition_with_fan_in, PartitionPlan};

use super::kernel::{chip_kernels, kernel_seconds, ChipKernels, KernelDesc};
use super::residency::{plan_residency, ResidencyPlan, ShardHome};
use super::timeline::{Category, CategoryTimes, Event, Timeline};
use super::{ChipSpec, LinkSpec, PerfParams};

#[allow(clippy::too_many_arguments)]
fn push_kernel_events(
    tl: &mut Timeline,
    cursor: &mut [f64],
    c: usize,
    list: &[KernelDesc],
    residency: &ResidencyPlan,
    chip: &ChipSpec,
    params: &PerfParams,
    stream_factor: u64,
) {
    for k in list {
        let mut stage_bytes = 0u64;
        if let Some(w) = k.weight {
            if residency.home(w) == ShardHome::L3Streamed {
                stage_bytes += k.weight_bytes * stream_factor;
            }
        }
        if residency.activations_spilled {
            stage_bytes += k.input_bytes + k.output_bytes;
        }
        if stage_bytes > 0 {
            let t = stage_bytes as f64 / params.l3_bandwidth_bytes_per_s;
            tl.push(Event {
                chip: c,
                start: cursor[c],
                end: cursor[c] + t,
                category: Category::L3,
                label: format!("stage {}", k.label),
                bytes: stage_bytes,
            });
            cursor[c] += t;
        }
        tl.push(Event {
            chip: c,
            start: cursor[c],
            end: cursor[c],
            category: Category::L2,
            label: format!("l1io {}", k.label),
            bytes: k.operand_bytes(),
        });
        let t = kernel_seconds(k, chip, params);
        tl.push(Event {
            chip: c,
            start: cursor[c],
            end: cursor[c] + t,
            category: Category::Compute,
            label: k.label.clone(),
            bytes: 0,
        });
        cursor[c] += t;
    }
}

#[allow(clippy::too_many_arguments)]
fn sync_phase(
    tl: &mut Timeline,
    cursor: &mut [f64],
    plan: &PartitionPlan,
    phase: usize,
    msg_bytes: u64,
    root_kernels: &[KernelDesc],
    residency: &ResidencyPlan,
    chip: &ChipSpec,
    link: &LinkSpec,
    params: &PerfParams,
    stream_factor: u64,
) {
    let msg_t = link.message_seconds(msg_bytes);
    let root = plan.tree.root;

    // Reduce: level by level up the tree. Senders within a group use
    // disjoint links and transfer concurrently; the receiver holds the
    // accumulated partial once its slowest inbound message lands.
    for level in &plan.tree.levels {
        for group in &level.groups {
            let mut ready = cursor[group.receiver];
            for &s in &group.senders {
                let start = cursor[s];
                let end = start + msg_t;
                tl.push(Event {
                    chip: s,
                    start,
                    end,
                    category: Category::C2c,
                    label: format!("reduce{phase} {s}->{}", group.receiver),
                    bytes: msg_bytes,
                });
                ready = ready.max(end);
            }
            cursor[group.receiver] = ready;
        }
    }

    // Skip-add and normalization on the root only.
    push_kernel_events(tl, cursor, root, root_kernels, residency, chip, params, stream_factor);

    // Broadcast along the reversed tree. A chip forwards only after it holds
    // the payload; its own sends at consecutive levels serialize.
    for level in plan.tree.levels.iter().rev() {
        for group in &level.groups {
            let start = cursor[group.receiver];
            for &s in &group.senders {
                let end = start + msg_t;
                tl.push(Event {
                    chip: group.receiver,
                    start,
                    end,
                    category: Category::C2c,
                    label: format!("bcast{phase} {}->{s}", group.receiver),
                    bytes: msg_bytes,
                });
                cursor[s] = cursor[s].max(end);
            }
            cursor[group.receiver] = start + msg_t;
        }
    }
}

/// Simulate one block under `plan` and `residency`; returns the full event
/// trace with counters.
pub fn simulate_block(
    cfg: &ModelConfig,
    plan: &PartitionPlan,
    residency: &ResidencyPlan,
    chip: &ChipSpec,
    link: &LinkSpec,
    params: &PerfParams,
) -> Result<Timeline> {
    if residency.n_chips != plan.n_chips {
        return Err(Error::InconsistentPlan(format!(
            "residency for {} chips, plan for {}",
            residency.n_chips, plan.n_chips
        )));
    }
    if !chip.is_valid() {
        return Err(Error::InconsistentPlan("chip spec fails validity checks".into()));
    }
    if !cfg.num_heads.is_multiple_of(plan.n_chips) {
        return Err(Error::InconsistentPlan("plan does not divide the head count".into()));
    }

    let n = plan.n_chips;
    let q = cfg.query_len();
    let stream_factor = q.div_ceil(params.stream_tile_rows.max(1)).max(1) as u64;
    let msg_bytes = (q * cfg.embed_dim * cfg.bytes_per_elem) as u64;

    let mut tl = Timeline::new(n);
    let mut cursor = vec![0.0f64; n];
    let kernels: Vec<ChipKernels> = (0..n).map(|c| chip_kernels(cfg, plan, c)).collect();

    // Serial reload of resident shards between blocks (no prefetch buffer).
    let refill = residency.refill_bytes();
    if refill > 0 {
        let t = refill as f64 / params.l3_bandwidth_bytes_per_s;
        for (c, cur) in cursor.iter_mut().enumerate() {
            tl.push(Event {
                chip: c,
                start: *cur,
                end: *cur + t,
                category: Category::L3,
                label: "weight_refill".into(),
                bytes: refill,
            });
            *cur += t;
        }
    }

    for (c, k) in kernels.iter().enumerate() {
        push_kernel_events(&mut tl, &mut cursor, c, &k.mhsa, residency, chip, params, stream_factor);
    }
    sync_phase(
        &mut tl, &mut cursor, plan, 1, msg_bytes, &kernels[plan.tree.root].sync1_root,
        residency, chip, link, params, stream_factor,
    );
    for (c, k) in kernels.iter().enumerate() {
        push_kernel_events(&mut tl, &mut cursor, c, &k.fc, residency, chip, params, stream_factor);
    }
    sync_phase(
        &mut tl, &mut cursor, plan, 2, msg_bytes, &kernels[plan.tree.root].sync2_root,
        residency, chip, link, params, stream_factor,
    );

    // Double-buffered prefetch of the next block's shard: overlaps the whole
    // block on the otherwise idle L3 port, bounding the steady-state block
    // time from below.
    let prefetch = residency.prefetch_bytes();
    if prefetch > 0 {
        for c in 0..n {
            let t = prefetch as f64 / params.l3_bandwidth_bytes_per_s;
            tl.push(Event {
                chip: c,
                start: 0.0,
                end: t,
                category: Category::L3,
                label: "prefetch_next_block".into(),
                bytes: prefetch,
            });
        }
    }

    Ok(tl)
}

/// Result row of one sweep point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepOutcome {
    pub n_chips: usize,
    pub makespan_s: f64,
    /// `makespan(1 chip) / makespan(n chips)`.
    pub speedup: f64,
    pub times: CategoryTimes,
    pub c2c_bytes: u64,
    pub c2c_messages: u64,
    pub l3_bytes: u64,
    pub l2_l1_bytes: u64,
    pub double_buffer: bool,
    pub all_blocks_resident: bool,
    pub activations_spilled: bool,
    pub streamed_tensors: usize,
    #[serde(skip)]
    pub timeline: Timeline,
    #[serde(skip)]
    pub residency: ResidencyPlan,
}

/// A chip-count sweep with its single-chip baseline.
#[derive(Debug)]
pub struct SweepResult {
    pub baseline_makespan_s: f64,
    /// Per requested chip count: the outcome, or the per-entry error
    /// (e.g. an indivisible head count) without aborting the sweep.
    pub entries: Vec<(usize, Result<SweepOutcome>)>,
}

fn run_point(
    cfg: &ModelConfig,
    n: usize,
    chip: &ChipSpec,
    link: &LinkSpec,
    params: &PerfParams,
) -> Result<(Timeline, ResidencyPlan)> {
    let plan = plan_partition_with_fan_in(cfg, n, params.fan_in)?;
    let residency = plan_residency(cfg, &plan, chip, params)?;
    let tl = simulate_block(cfg, &plan, &residency, chip, link, params)?;
    Ok((tl, residency))
}

/// Simulate each requested chip count and report speedups against the
/// single-chip baseline (simulated regardless of whether 1 is requested).
pub fn sweep(
    cfg: &ModelConfig,
    n_chips_list: &[usize],
    chip: &ChipSpec,
    link: &LinkSpec,
    params: &PerfParams,
) -> Result<SweepResult> {
    let (baseline_tl, _) = run_point(cfg, 1, chip, link, params)?;
    let baseline = baseline_tl.makespan;
    let mut entries = Vec::with_capacity(n_chips_list.len());
    for &n in n_chips_list {
        let entry = run_point(cfg, n, chip, link, params).map(|(tl, residency)| {
            let streamed = residency
                .homes
                .iter()
                .filter(|(_, h)| *h == ShardHome::L3Streamed)
                .count();
            SweepOutcome {
                n_chips: n,
                makespan_s: tl.makespan,
                speedup: baseline / tl.makespan,
                times: tl.category_times(),
                c2c_bytes: tl.c2c_bytes,
                c2c_messages: tl.c2c_messages,
                l3_bytes: tl.total_l3_bytes(),
                l2_l1_bytes: tl.total_l2_l1_bytes(),
                double_buffer: residency.double_buffer,
                all_blocks_resident: residency.all_blocks_resident,
                activations_spilled: residency.activations_spilled,
                streamed_tensors: streamed,
                timeline: tl,
                residency,
            }
        });
        entries.push((n, entry));
    }
    Ok(SweepResult { baseline_makespan_s: baseline, entries })
}
