//! Weight partitioning across chips and the per-block communication schedule.
//!
//! The scheme shards the attention projections (W_query, W_key, W_value and
//! W_O) along the head dimension and the two FC matrices along the
//! intermediate dimension F, so that no weight element is replicated on more
//! than one chip. Each chip then produces a full-width `q x E` partial output
//! for both the MHSA and the FC stage, and the block needs exactly two
//! synchronizations: a hierarchical all-reduce (fan-in 4 groups by default)
//! after the MHSA and another after the FC layer, each followed by
//! single-chip normalization and a broadcast along the reversed tree. The
//! skip connection is folded into the reduction since every chip holds the
//! full block input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelConfig};

/// Default reduction group size.
pub const DEFAULT_FAN_IN: usize = 4;

/// The six sliced weight tensors of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorName {
    WQuery,
    WKey,
    WValue,
    WOut,
    WL1,
    WL2,
}

impl TensorName {
    pub const ALL: [TensorName; 6] = [
        TensorName::WQuery,
        TensorName::WKey,
        TensorName::WValue,
        TensorName::WOut,
        TensorName::WL1,
        TensorName::WL2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TensorName::WQuery => "w_query",
            TensorName::WKey => "w_key",
            TensorName::WValue => "w_value",
            TensorName::WOut => "w_out",
            TensorName::WL1 => "w_l1",
            TensorName::WL2 => "w_l2",
        }
    }
}

/// Axis label of a slice range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisLabel {
    /// The embedding dimension E.
    Embed,
    /// The concatenated projection dimension P*H (whole-head granularity).
    ProjHeads,
    /// The intermediate dimension F.
    Intermediate,
}

/// Half-open range `[start, end)` along one labelled axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSlice {
    pub label: AxisLabel,
    pub start: usize,
    pub end: usize,
}

impl AxisSlice {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One chip's slice of one weight tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSpec {
    pub chip_id: usize,
    pub tensor: TensorName,
    /// Row range of the slice within the full tensor.
    pub rows: AxisSlice,
    /// Column range of the slice within the full tensor.
    pub cols: AxisSlice,
}

impl ShardSpec {
    /// Number of weight elements in this shard.
    pub fn elems(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

/// Hierarchical reduction tree over chips.
///
/// Chips are grouped in `fan_in`-sized runs per level; the lowest id in each
/// group receives and accumulates, and survivors are regrouped until one
/// root remains. Every non-root chip sends exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReduceTree {
    pub fan_in: usize,
    pub root: usize,
    pub levels: Vec<TreeLevel>,
}

/// One level of the tree: disjoint groups that transfer concurrently.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub groups: Vec<TreeGroup>,
}

/// A receiver and the chips sending to it at this level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeGroup {
    pub receiver: usize,
    pub senders: Vec<usize>,
}

impl ReduceTree {
    /// Total number of messages in one full reduction (= senders over all
    /// levels, which is `n_chips - 1`).
    pub fn message_count(&self) -> usize {
        self.levels.iter().flat_map(|l| &l.groups).map(|g| g.senders.len()).sum()
    }
}

/// Build the reduction tree for `n_chips` with groups of `fan_in`.
///
/// Deterministic: groups are formed over ascending chip ids and the lowest
/// id of each group receives. A single chip yields a zero-level tree.
pub fn build_reduce_tree(n_chips: usize, fan_in: usize) -> ReduceTree {
    assert!(n_chips >= 1, "n_chips must be >= 1");
    assert!(fan_in >= 2, "fan_in must be >= 2");
    let mut levels = Vec::new();
    let mut active: Vec<usize> = (0..n_chips).collect();
    while active.len() > 1 {
        let mut groups = Vec::new();
        let mut survivors = Vec::new();
        for chunk in active.chunks(fan_in) {
            let receiver = chunk[0];
            let senders: Vec<usize> = chunk[1..].to_vec();
            survivors.push(receiver);
            if !senders.is_empty() {
                groups.push(TreeGroup { receiver, senders });
            }
        }
        levels.push(TreeLevel { groups });
        active = survivors;
    }
    ReduceTree { fan_in, root: 0, levels }
}

/// Label of a synchronization point within one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncLabel {
    PostMhsa,
    PostFc,
}

/// One chip-to-chip transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    pub payload: String,
}

/// One synchronization: a tree reduction of partial outputs (with the skip
/// connection folded in), normalization on a single chip, and a broadcast of
/// the normalized result along the reversed tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncPoint {
    pub label: SyncLabel,
    pub reduce: Vec<Message>,
    pub norm_chip: usize,
    pub broadcast: Vec<Message>,
}

/// The ordered communication schedule of one block: exactly two sync points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommSchedule {
    pub syncs: Vec<SyncPoint>,
}

impl CommSchedule {
    /// Sum of bytes over all messages in the schedule.
    pub fn total_bytes(&self) -> u64 {
        self.syncs
            .iter()
            .flat_map(|s| s.reduce.iter().chain(s.broadcast.iter()))
            .map(|m| m.bytes)
            .sum()
    }

    /// Total message count.
    pub fn message_count(&self) -> usize {
        self.syncs.iter().map(|s| s.reduce.len() + s.broadcast.len()).sum()
    }
}

/// A complete partitioning of one block across `n_chips`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub n_chips: usize,
    pub shards: Vec<ShardSpec>,
    pub tree: ReduceTree,
    pub schedule: CommSchedule,
    /// Sliced weight bytes held by each chip (equal across chips).
    pub per_chip_weight_bytes: u64,
    /// Normalization parameter bytes, held once on the root chip.
    pub norm_param_bytes: u64,
}

impl PartitionPlan {
    /// Shards belonging to one chip, in tensor order.
    pub fn chip_shards(&self, chip_id: usize) -> Vec<&ShardSpec> {
        self.shards.iter().filter(|s| s.chip_id == chip_id).collect()
    }

    /// The shard of `tensor` on `chip_id`.
    pub fn shard(&self, chip_id: usize, tensor: TensorName) -> Option<&ShardSpec> {
        self.shards.iter().find(|s| s.chip_id == chip_id && s.tensor == tensor)
    }

    /// Head range `[start, end)` assigned to `chip_id`.
    pub fn head_range(&self, chip_id: usize, cfg: &ModelConfig) -> (usize, usize) {
        let per_chip = cfg.num_heads / self.n_chips;
        (chip_id * per_chip, (chip_id + 1) * per_chip)
    }

    /// Serialize to the documented JSON layout.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("plan json: {e}")))
    }
}

fn reduce_messages(tree: &ReduceTree, bytes: u64, payload: &str) -> Vec<Message> {
    let mut msgs = Vec::new();
    for level in &tree.levels {
        for group in &level.groups {
            for &s in &group.senders {
                msgs.push(Message {
                    src: s,
                    dst: group.receiver,
                    bytes,
                    payload: payload.to_string(),
                });
            }
        }
    }
    msgs
}

fn broadcast_messages(tree: &ReduceTree, bytes: u64, payload: &str) -> Vec<Message> {
    let mut msgs = Vec::new();
    for level in tree.levels.iter().rev() {
        for group in &level.groups {
            for &s in &group.senders {
                msgs.push(Message {
                    src: group.receiver,
                    dst: s,
                    bytes,
                    payload: payload.to_string(),
                });
            }
        }
    }
    msgs
}

/// Build the partition plan for `cfg` over `n_chips` chips.
///
/// Chip `k` receives the contiguous head run `[k*H/n, (k+1)*H/n)` of
/// W_query/W_key/W_value (output columns) and W_O (input rows), and the
/// contiguous F-range `[k*F/n, (k+1)*F/n)` of W_L1 (columns) and W_L2 (rows).
/// `n_chips == 1` degenerates to one full-coverage shard per tensor and an
/// empty schedule.
pub fn plan_partition(cfg: &ModelConfig, n_chips: usize) -> Result<PartitionPlan> {
    plan_partition_with_fan_in(cfg, n_chips, DEFAULT_FAN_IN)
}

/// [`plan_partition`] with an explicit reduction group size.
pub fn plan_partition_with_fan_in(
    cfg: &ModelConfig,
    n_chips: usize,
    fan_in: usize,
) -> Result<PartitionPlan> {
    if n_chips == 0 || !cfg.num_heads.is_multiple_of(n_chips) {
        return Err(Error::IndivisibleHeads { num_heads: cfg.num_heads, n_chips });
    }
    if !cfg.intermediate_dim.is_multiple_of(n_chips) {
        return Err(Error::IndivisibleIntermediate {
            intermediate_dim: cfg.intermediate_dim,
            n_chips,
        });
    }

    let e = cfg.embed_dim;
    let p = cfg.head_dim;
    let f = cfg.intermediate_dim;
    let heads_per_chip = cfg.num_heads / n_chips;
    let f_per_chip = f / n_chips;

    let mut shards = Vec::with_capacity(6 * n_chips);
    for chip in 0..n_chips {
        let h0 = chip * heads_per_chip * p;
        let h1 = (chip + 1) * heads_per_chip * p;
        let f0 = chip * f_per_chip;
        let f1 = (chip + 1) * f_per_chip;

        let full_e = AxisSlice { label: AxisLabel::Embed, start: 0, end: e };
        let head_run = AxisSlice { label: AxisLabel::ProjHeads, start: h0, end: h1 };
        let f_run = AxisSlice { label: AxisLabel::Intermediate, start: f0, end: f1 };

        for tensor in [TensorName::WQuery, TensorName::WKey, TensorName::WValue] {
            shards.push(ShardSpec { chip_id: chip, tensor, rows: full_e, cols: head_run });
        }
        shards.push(ShardSpec {
            chip_id: chip,
            tensor: TensorName::WOut,
            rows: head_run,
            cols: full_e,
        });
        shards.push(ShardSpec { chip_id: chip, tensor: TensorName::WL1, rows: full_e, cols: f_run });
        shards.push(ShardSpec { chip_id: chip, tensor: TensorName::WL2, rows: f_run, cols: full_e });
    }

    let tree = build_reduce_tree(n_chips, fan_in);
    let msg_bytes = (cfg.query_len() * e * cfg.bytes_per_elem) as u64;
    let syncs = vec![
        SyncPoint {
            label: SyncLabel::PostMhsa,
            reduce: reduce_messages(&tree, msg_bytes, "mhsa_partial"),
            norm_chip: tree.root,
            broadcast: broadcast_messages(&tree, msg_bytes, "mhsa_normed"),
        },
        SyncPoint {
            label: SyncLabel::PostFc,
            reduce: reduce_messages(&tree, msg_bytes, "fc_partial"),
            norm_chip: tree.root,
            broadcast: broadcast_messages(&tree, msg_bytes, "block_out"),
        },
    ];

    let per_chip_weight_bytes = model::sliced_weight_bytes(cfg) / n_chips as u64;
    Ok(PartitionPlan {
        n_chips,
        shards,
        tree,
        schedule: CommSchedule { syncs },
        per_chip_weight_bytes,
        norm_param_bytes: model::norm_param_bytes(cfg),
    })
}

/// Chip-to-chip bytes of one block: two syncs, each a reduce plus a
/// broadcast of `n_chips - 1` messages of `query_len * E * b` bytes.
pub fn comm_bytes_per_block(plan: &PartitionPlan, _cfg: &ModelConfig) -> u64 {
    plan.schedule.total_bytes()
}

/// Closed form for [`comm_bytes_per_block`]:
/// `2 syncs * 2 phases * (n-1) * query_len * E * b`.
pub fn comm_bytes_closed_form(cfg: &ModelConfig, n_chips: usize) -> u64 {
    4 * (n_chips as u64 - 1) * (cfg.query_len() * cfg.embed_dim * cfg.bytes_per_elem) as u64
}

// ---------------------------------------------------------------------------
// Plan verification
// ---------------------------------------------------------------------------

/// Kind of plan violation, used both for reporting and for targeted tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanViolationKind {
    Duplication,
    Coverage,
    EmptySlice,
    OutOfBounds,
    UnequalBytes,
    SyncCount,
    MessageCount,
    MessageBytes,
    TreeShape,
}

/// One violated plan invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanViolation {
    pub kind: PlanViolationKind,
    pub message: String,
}

/// Result of [`verify_plan`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct PlanReport {
    pub violations: Vec<PlanViolation>,
}

impl PlanReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: PlanViolationKind, message: impl Into<String>) {
        self.violations.push(PlanViolation { kind, message: message.into() });
    }
}

fn tensor_dims(cfg: &ModelConfig, tensor: TensorName) -> (usize, usize) {
    let (e, ph, f) = (cfg.embed_dim, cfg.proj_cols(), cfg.intermediate_dim);
    match tensor {
        TensorName::WQuery | TensorName::WKey | TensorName::WValue => (e, ph),
        TensorName::WOut => (ph, e),
        TensorName::WL1 => (e, f),
        TensorName::WL2 => (f, e),
    }
}

/// The sliced axis of each tensor; the other axis must be fully covered by
/// every shard.
fn sliced_axis_is_cols(tensor: TensorName) -> bool {
    matches!(
        tensor,
        TensorName::WQuery | TensorName::WKey | TensorName::WValue | TensorName::WL1
    )
}

/// Check the plan invariants: slices in bounds and non-empty, whole-head /
/// aligned slicing, pairwise-disjoint shards covering every tensor exactly
/// once, equal per-chip bytes, and a two-sync schedule with `n-1` messages
/// of `query_len*E*b` bytes per phase. Pure; never mutates the plan.
pub fn verify_plan(plan: &PartitionPlan, cfg: &ModelConfig) -> PlanReport {
    let mut report = PlanReport::default();
    let b = cfg.bytes_per_elem as u64;

    // Per-tensor shard geometry.
    for tensor in TensorName::ALL {
        let (rows, cols) = tensor_dims(cfg, tensor);
        let shards: Vec<&ShardSpec> =
            plan.shards.iter().filter(|s| s.tensor == tensor).collect();
        if shards.is_empty() {
            report.push(PlanViolationKind::Coverage, format!("{}: no shards", tensor.as_str()));
            continue;
        }
        let mut intervals = Vec::new();
        for s in &shards {
            if s.rows.is_empty() || s.cols.is_empty() {
                report.push(
                    PlanViolationKind::EmptySlice,
                    format!("{} chip {}: empty slice", tensor.as_str(), s.chip_id),
                );
            }
            if s.rows.end > rows || s.cols.end > cols {
                report.push(
                    PlanViolationKind::OutOfBounds,
                    format!("{} chip {}: slice exceeds {}x{}", tensor.as_str(), s.chip_id, rows, cols),
                );
                continue;
            }
            let (full, sliced) = if sliced_axis_is_cols(tensor) {
                (s.rows, s.cols)
            } else {
                (s.cols, s.rows)
            };
            let full_len = if sliced_axis_is_cols(tensor) { rows } else { cols };
            if full.start != 0 || full.end != full_len {
                report.push(
                    PlanViolationKind::Coverage,
                    format!(
                        "{} chip {}: unsliced axis not fully covered",
                        tensor.as_str(),
                        s.chip_id
                    ),
                );
            }
            // Attention tensors are sliced at whole-head granularity.
            if matches!(
                tensor,
                TensorName::WQuery | TensorName::WKey | TensorName::WValue | TensorName::WOut
            ) && (sliced.start % cfg.head_dim != 0 || sliced.end % cfg.head_dim != 0)
            {
                report.push(
                    PlanViolationKind::Coverage,
                    format!("{} chip {}: slice not head-aligned", tensor.as_str(), s.chip_id),
                );
            }
            intervals.push(sliced);
        }
        // Disjointness and coverage of the sliced axis.
        intervals.sort_by_key(|i| (i.start, i.end));
        let sliced_len = if sliced_axis_is_cols(tensor) { cols } else { rows };
        let mut cursor = 0usize;
        for iv in &intervals {
            if iv.start < cursor {
                report.push(
                    PlanViolationKind::Duplication,
                    format!(
                        "{}: duplication, ranges overlap at {}..{}",
                        tensor.as_str(),
                        iv.start,
                        cursor.min(iv.end)
                    ),
                );
            } else if iv.start > cursor {
                report.push(
                    PlanViolationKind::Coverage,
                    format!("{}: gap at {}..{}", tensor.as_str(), cursor, iv.start),
                );
            }
            cursor = cursor.max(iv.end);
        }
        if cursor != sliced_len {
            report.push(
                PlanViolationKind::Coverage,
                format!("{}: covered {} of {}", tensor.as_str(), cursor, sliced_len),
            );
        }
        // The two F-ranges on one chip must be identical.
        if tensor == TensorName::WL2 {
            for chip in 0..plan.n_chips {
                let l1 = plan.shard(chip, TensorName::WL1).map(|s| s.cols);
                let l2 = plan.shard(chip, TensorName::WL2).map(|s| s.rows);
                if let (Some(l1), Some(l2)) = (l1, l2) {
                    if (l1.start, l1.end) != (l2.start, l2.end) {
                        report.push(
                            PlanViolationKind::Coverage,
                            format!("chip {chip}: W_L1 and W_L2 F-ranges differ"),
                        );
                    }
                }
            }
        }
    }

    // Equal per-chip bytes.
    let mut per_chip = vec![0u64; plan.n_chips];
    for s in &plan.shards {
        if s.chip_id < plan.n_chips {
            per_chip[s.chip_id] += s.elems() as u64 * b;
        }
    }
    if let (Some(&min), Some(&max)) = (per_chip.iter().min(), per_chip.iter().max()) {
        if min != max {
            report.push(
                PlanViolationKind::UnequalBytes,
                format!("per-chip bytes range {min}..{max}"),
            );
        }
        if max != plan.per_chip_weight_bytes {
            report.push(
                PlanViolationKind::UnequalBytes,
                format!(
                    "per-chip bytes {} != declared {}",
                    max, plan.per_chip_weight_bytes
                ),
            );
        }
    }

    // Schedule shape.
    if plan.schedule.syncs.len() != 2 {
        report.push(
            PlanViolationKind::SyncCount,
            format!("sync count {} != 2", plan.schedule.syncs.len()),
        );
    }
    let expected_bytes = (cfg.query_len() * cfg.embed_dim * cfg.bytes_per_elem) as u64;
    for sync in &plan.schedule.syncs {
        for (phase, msgs) in [("reduce", &sync.reduce), ("broadcast", &sync.broadcast)] {
            if msgs.len() != plan.n_chips - 1 {
                report.push(
                    PlanViolationKind::MessageCount,
                    format!(
                        "{:?} {phase}: {} messages != n_chips-1 = {}",
                        sync.label,
                        msgs.len(),
                        plan.n_chips - 1
                    ),
                );
            }
            for m in msgs.iter() {
                if m.bytes != expected_bytes {
                    report.push(
                        PlanViolationKind::MessageBytes,
                        format!("{:?} {phase}: message bytes {} != {}", sync.label, m.bytes, expected_bytes),
                    );
                }
            }
        }
    }

    // Tree shape: every non-root chip sends exactly once; groups bounded by
    // fan_in; the root transitively receives from everyone.
    let mut send_count = vec![0usize; plan.n_chips];
    for level in &plan.tree.levels {
        for group in &level.groups {
            if group.senders.len() + 1 > plan.tree.fan_in {
                report.push(
                    PlanViolationKind::TreeShape,
                    format!("group at receiver {} exceeds fan_in", group.receiver),
                );
            }
            for &s in &group.senders {
                if s < plan.n_chips {
                    send_count[s] += 1;
                } else {
                    report.push(PlanViolationKind::TreeShape, format!("sender {s} out of range"));
                }
            }
        }
    }
    for (chip, &c) in send_count.iter().enumerate() {
        let expected = usize::from(chip != plan.tree.root);
        if c != expected {
            report.push(
                PlanViolationKind::TreeShape,
                format!("chip {chip} sends {c} times, expected {expected}"),
            );
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Mode};

    fn tinyllama() -> ModelConfig {
        preset("tinyllama", Mode::Autoregressive).unwrap()
    }

    #[test]
    fn eight_chips_one_head_each() {
        let cfg = tinyllama();
        let plan = plan_partition(&cfg, 8).unwrap();
        for chip in 0..8 {
            let wq = plan.shard(chip, TensorName::WQuery).unwrap();
            assert_eq!(wq.cols.len(), 64, "one head of width P");
            assert_eq!(wq.rows.len(), 512);
            let wo = plan.shard(chip, TensorName::WOut).unwrap();
            assert_eq!(wo.rows.len(), 64);
            let wl1 = plan.shard(chip, TensorName::WL1).unwrap();
            assert_eq!(wl1.cols.len(), 256, "F/8 = 2048/8");
            let wl2 = plan.shard(chip, TensorName::WL2).unwrap();
            assert_eq!(wl2.rows.len(), 256);
        }
        assert!(verify_plan(&plan, &cfg).is_ok());
    }

    #[test]
    fn single_chip_plan_is_degenerate() {
        let cfg = tinyllama();
        let plan = plan_partition(&cfg, 1).unwrap();
        assert_eq!(plan.schedule.message_count(), 0);
        assert_eq!(plan.tree.levels.len(), 0);
        assert_eq!(plan.tree.root, 0);
        let wq = plan.shard(0, TensorName::WQuery).unwrap();
        assert_eq!((wq.rows.len(), wq.cols.len()), (512, 512));
        assert!(verify_plan(&plan, &cfg).is_ok());
    }

    #[test]
    fn indivisible_heads_error() {
        let cfg = tinyllama();
        assert_eq!(
            plan_partition(&cfg, 3).unwrap_err(),
            Error::IndivisibleHeads { num_heads: 8, n_chips: 3 }
        );
    }

    #[test]
    fn indivisible_intermediate_error() {
        let mut cfg = tinyllama();
        cfg.num_heads = 12;
        cfg.intermediate_dim = 2048;
        // H divisible by 3, F not.
        assert!(matches!(
            plan_partition(&cfg, 3).unwrap_err(),
            Error::IndivisibleIntermediate { .. }
        ));
    }

    #[test]
    fn tree_16_chips_fan_4() {
        let tree = build_reduce_tree(16, 4);
        assert_eq!(tree.levels.len(), 2);
        assert_eq!(tree.levels[0].groups.len(), 4);
        assert_eq!(tree.levels[1].groups.len(), 1);
        assert_eq!(tree.levels[1].groups[0].receiver, 0);
        assert_eq!(tree.levels[1].groups[0].senders, vec![4, 8, 12]);
        assert_eq!(tree.root, 0);
    }

    #[test]
    fn tree_single_chip() {
        let tree = build_reduce_tree(1, 4);
        assert_eq!(tree.levels.len(), 0);
        assert_eq!(tree.message_count(), 0);
    }

    #[test]
    fn tree_8_chips_message_count() {
        // Brute-force count of senders across levels.
        let tree = build_reduce_tree(8, 4);
        let mut senders = 0;
        for level in &tree.levels {
            for group in &level.groups {
                senders += group.senders.len();
            }
        }
        assert_eq!(senders, 7);
        assert_eq!(tree.message_count(), 7);
    }

    #[test]
    fn comm_bytes_autoregressive_8_chips() {
        let cfg = tinyllama();
        let plan = plan_partition(&cfg, 8).unwrap();
        // Independent oracle: enumerate schedule messages.
        let by_walk: u64 = plan
            .schedule
            .syncs
            .iter()
            .flat_map(|s| s.reduce.iter().chain(s.broadcast.iter()))
            .map(|m| m.bytes)
            .sum();
        assert_eq!(by_walk, 28_672); // 4*7*1*512*2
        assert_eq!(comm_bytes_per_block(&plan, &cfg), 28_672);
        assert_eq!(comm_bytes_closed_form(&cfg, 8), 28_672);
    }

    #[test]
    fn comm_bytes_single_chip_is_zero() {
        let cfg = tinyllama();
        let plan = plan_partition(&cfg, 1).unwrap();
        assert_eq!(comm_bytes_per_block(&plan, &cfg), 0);
    }

    #[test]
    fn comm_bytes_prompt_8_chips() {
        let cfg = preset("tinyllama", Mode::Prompt).unwrap();
        let plan = plan_partition(&cfg, 8).unwrap();
        assert_eq!(comm_bytes_per_block(&plan, &cfg), 458_752); // 4*7*16*512*2
        assert_eq!(comm_bytes_closed_form(&cfg, 8), 458_752);
    }

    #[test]
    fn duplicated_head_detected() {
        let cfg = tinyllama();
        let mut plan = plan_partition(&cfg, 8).unwrap();
        // Assign chip 1's W_query head range to overlap chip 0's.
        for s in plan.shards.iter_mut() {
            if s.chip_id == 1 && s.tensor == TensorName::WQuery {
                s.cols.start = 0;
                s.cols.end = 64;
            }
        }
        let report = verify_plan(&plan, &cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == PlanViolationKind::Duplication));
    }

    #[test]
    fn extra_sync_detected() {
        let cfg = tinyllama();
        let mut plan = plan_partition(&cfg, 8).unwrap();
        let extra = plan.schedule.syncs[0].clone();
        plan.schedule.syncs.push(extra);
        let report = verify_plan(&plan, &cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == PlanViolationKind::SyncCount));
    }

    #[test]
    fn plan_is_deterministic() {
        let cfg = tinyllama();
        let a = plan_partition(&cfg, 8).unwrap();
        let b = plan_partition(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn per_chip_bytes_match_block_total() {
        let cfg = tinyllama();
        for n in [1, 2, 4, 8] {
            let plan = plan_partition(&cfg, n).unwrap();
            let sharded: u64 =
                plan.shards.iter().map(|s| s.elems() as u64 * cfg.bytes_per_elem as u64).sum();
            assert_eq!(
                sharded + plan.norm_param_bytes,
                crate::model::block_weight_bytes(&cfg)
            );
            assert_eq!(plan.per_chip_weight_bytes * n as u64, sharded);
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = tinyllama();
        let plan = plan_partition(&cfg, 4).unwrap();
        let json = plan.to_json();
        let back = PartitionPlan::from_json(&json).unwrap();
        assert_eq!(plan, back);
    }
}
