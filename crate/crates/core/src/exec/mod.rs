//! Numerical reference for one Transformer block.
//!
//! Two execution paths over the same kernels: a monolithic single-device
//! run, and a partitioned run that mirrors the multi-chip dataflow (per-chip
//! partial MHSA and FC, hierarchical reduction with the skip connection
//! folded in, single-chip normalization at the tree root, broadcast). The
//! partitioned path exists to prove the partitioning semantics-preserving;
//! both prompt and autoregressive (KV-cached) modes are covered.

pub mod ops;
pub mod testvec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Mode, ModelConfig};
use crate::partition::{PartitionPlan, TensorName};
use crate::tensor::TensorView;

use ops::{gelu_inplace, matmul, norm_row};

/// Affine parameters of one row-wise normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl NormParams {
    /// Identity normalization parameters (gamma = 1, beta = 0).
    pub fn identity(dim: usize) -> Self {
        Self { gamma: vec![1.0; dim], beta: vec![0.0; dim] }
    }
}

/// Full weights of one Transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    /// `E x (P*H)`.
    pub w_query: TensorView,
    /// `E x (P*H)`.
    pub w_key: TensorView,
    /// `E x (P*H)`.
    pub w_value: TensorView,
    /// `(P*H) x E`.
    pub w_out: TensorView,
    /// `E x F`.
    pub w_l1: TensorView,
    /// `F x E`.
    pub w_l2: TensorView,
    pub norm1: NormParams,
    pub norm2: NormParams,
}

impl BlockWeights {
    /// All-zero weight matrices with identity normalization parameters.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (e, ph, f) = (cfg.embed_dim, cfg.proj_cols(), cfg.intermediate_dim);
        Self {
            w_query: TensorView::zeros(e, ph),
            w_key: TensorView::zeros(e, ph),
            w_value: TensorView::zeros(e, ph),
            w_out: TensorView::zeros(ph, e),
            w_l1: TensorView::zeros(e, f),
            w_l2: TensorView::zeros(f, e),
            norm1: NormParams::identity(e),
            norm2: NormParams::identity(e),
        }
    }

    /// Random weights, uniform in `[-s, s]` with `s = 1/sqrt(E)`, plus
    /// identity-centered random normalization parameters.
    pub fn random<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (e, ph, f) = (cfg.embed_dim, cfg.proj_cols(), cfg.intermediate_dim);
        let s = 1.0 / (e as f64).sqrt();
        fn mat<R: Rng>(rng: &mut R, s: f64, rows: usize, cols: usize) -> TensorView {
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect();
            TensorView::from_vec(rows, cols, data).expect("finite random weights")
        }
        fn norm<R: Rng>(rng: &mut R, dim: usize) -> NormParams {
            NormParams {
                gamma: (0..dim).map(|_| 1.0 + rng.gen_range(-0.1..=0.1)).collect(),
                beta: (0..dim).map(|_| rng.gen_range(-0.1..=0.1)).collect(),
            }
        }
        Self {
            w_query: mat(rng, s, e, ph),
            w_key: mat(rng, s, e, ph),
            w_value: mat(rng, s, e, ph),
            w_out: mat(rng, s, ph, e),
            w_l1: mat(rng, s, e, f),
            w_l2: mat(rng, s, f, e),
            norm1: norm(rng, e),
            norm2: norm(rng, e),
        }
    }

    /// Total parameter count, `4*E*P*H + 2*E*F + 2*E`.
    pub fn param_count(&self) -> usize {
        let mats = [&self.w_query, &self.w_key, &self.w_value, &self.w_out, &self.w_l1, &self.w_l2];
        mats.iter().map(|m| m.rows() * m.cols()).sum::<usize>()
            + self.norm1.gamma.len()
            + self.norm2.beta.len()
    }

    fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let (e, ph, f) = (cfg.embed_dim, cfg.proj_cols(), cfg.intermediate_dim);
        let expect = [
            (self.w_query.shape(), (e, ph), "w_query"),
            (self.w_key.shape(), (e, ph), "w_key"),
            (self.w_value.shape(), (e, ph), "w_value"),
            (self.w_out.shape(), (ph, e), "w_out"),
            (self.w_l1.shape(), (e, f), "w_l1"),
            (self.w_l2.shape(), (f, e), "w_l2"),
        ];
        for (got, want, name) in expect {
            if got != want {
                return Err(Error::ShapeMismatch {
                    expected: format!("{name} {}x{}", want.0, want.1),
                    got: format!("{}x{}", got.0, got.1),
                });
            }
        }
        Ok(())
    }
}

/// Per-head key/value cache of previously processed positions.
///
/// Rows are append-only within one sequence; every head advances in
/// lockstep, one row per autoregressive step.
#[derive(Debug, Clone, PartialEq)]
pub struct KVCache {
    head_dim: usize,
    capacity: usize,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl KVCache {
    pub fn new(num_heads: usize, head_dim: usize, capacity: usize) -> Self {
        Self {
            head_dim,
            capacity,
            k: vec![Vec::new(); num_heads],
            v: vec![Vec::new(); num_heads],
        }
    }

    pub fn num_heads(&self) -> usize {
        self.k.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Filled rows of head `h`.
    pub fn filled(&self, h: usize) -> usize {
        self.k[h].len() / self.head_dim
    }

    /// Append one key/value row to head `h`.
    pub fn append(&mut self, h: usize, k_row: &[f64], v_row: &[f64]) -> Result<()> {
        if k_row.len() != self.head_dim || v_row.len() != self.head_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {}", self.head_dim),
                got: format!("{} / {}", k_row.len(), v_row.len()),
            });
        }
        if self.filled(h) >= self.capacity {
            return Err(Error::CacheFull { capacity: self.capacity });
        }
        self.k[h].extend_from_slice(k_row);
        self.v[h].extend_from_slice(v_row);
        Ok(())
    }

    /// Cached keys of head `h` as a `(filled x P)` tensor.
    pub fn k_matrix(&self, h: usize) -> TensorView {
        TensorView::from_vec(self.filled(h), self.head_dim, self.k[h].clone())
            .expect("cache rows are finite")
    }

    /// Cached values of head `h` as a `(filled x P)` tensor.
    pub fn v_matrix(&self, h: usize) -> TensorView {
        TensorView::from_vec(self.filled(h), self.head_dim, self.v[h].clone())
            .expect("cache rows are finite")
    }

    /// Bytes this cache slice occupies at element width `b`.
    pub fn bytes(&self, bytes_per_elem: usize) -> u64 {
        let elems: usize = self.k.iter().chain(self.v.iter()).map(|r| r.len()).sum();
        (elems * bytes_per_elem) as u64
    }
}

/// Weights and state materialized on one chip under a partition plan.
#[derive(Debug, Clone)]
pub struct ChipState {
    pub chip_id: usize,
    /// Local column slice of W_query/W_key/W_value (`E x P*local_heads`).
    pub w_query: TensorView,
    pub w_key: TensorView,
    pub w_value: TensorView,
    /// Local row slice of W_O (`P*local_heads x E`).
    pub w_out: TensorView,
    /// Local column slice of W_L1 (`E x F/n`).
    pub w_l1: TensorView,
    /// Local row slice of W_L2 (`F/n x E`).
    pub w_l2: TensorView,
    /// Normalization parameters, held by the tree root only.
    pub norms: Option<(NormParams, NormParams)>,
    /// Local KV-cache covering this chip's heads (autoregressive mode).
    pub cache: Option<KVCache>,
}

impl ChipState {
    /// Sliced weight bytes held by this chip (normalization vectors excluded).
    pub fn weight_bytes(&self, bytes_per_elem: usize) -> u64 {
        let mats = [&self.w_query, &self.w_key, &self.w_value, &self.w_out, &self.w_l1, &self.w_l2];
        mats.iter().map(|m| (m.rows() * m.cols() * bytes_per_elem) as u64).sum()
    }
}

/// Materialize per-chip states from full block weights and a plan.
///
/// Each chip holds exactly the shards assigned to it; in autoregressive mode
/// it also gets an empty KV-cache slice for its heads.
pub fn make_chip_states(
    w: &BlockWeights,
    plan: &PartitionPlan,
    cfg: &ModelConfig,
) -> Result<Vec<ChipState>> {
    w.check_shapes(cfg)?;
    let mut states = Vec::with_capacity(plan.n_chips);
    for chip in 0..plan.n_chips {
        let slice = |tensor: TensorName, full: &TensorView| -> Result<TensorView> {
            let shard = plan
                .shard(chip, tensor)
                .ok_or_else(|| Error::PlanMismatch(format!("missing shard {tensor:?} on chip {chip}")))?;
            let t = full.slice_rows(shard.rows.start, shard.rows.end);
            Ok(t.slice_cols(shard.cols.start, shard.cols.end))
        };
        let local_heads = cfg.num_heads / plan.n_chips;
        let cache = match cfg.mode {
            Mode::Autoregressive => Some(KVCache::new(local_heads, cfg.head_dim, cfg.kv_cache_len)),
            Mode::Prompt => None,
        };
        states.push(ChipState {
            chip_id: chip,
            w_query: slice(TensorName::WQuery, &w.w_query)?,
            w_key: slice(TensorName::WKey, &w.w_key)?,
            w_value: slice(TensorName::WValue, &w.w_value)?,
            w_out: slice(TensorName::WOut, &w.w_out)?,
            w_l1: slice(TensorName::WL1, &w.w_l1)?,
            w_l2: slice(TensorName::WL2, &w.w_l2)?,
            norms: (chip == plan.tree.root)
                .then(|| (w.norm1.clone(), w.norm2.clone())),
            cache,
        });
    }
    Ok(states)
}

fn norm_rows(x: &TensorView, params: &NormParams, cfg: &ModelConfig) -> TensorView {
    let mut out = TensorView::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = norm_row(x.row(r), &params.gamma, &params.beta, cfg.norm_kind);
        out.row_mut(r).copy_from_slice(&row);
    }
    out
}

/// Partial MHSA over a contiguous run of heads: projections, per-head
/// attention (appending to the cache in autoregressive mode) and the local
/// W_O slice. Output is a full-width `q x E` partial sum.
fn mhsa_partial(
    x: &TensorView,
    w_query: &TensorView,
    w_key: &TensorView,
    w_value: &TensorView,
    w_out: &TensorView,
    cfg: &ModelConfig,
    mut cache: Option<&mut KVCache>,
) -> Result<TensorView> {
    let p = cfg.head_dim;
    let local_heads = w_query.cols() / p;
    let q_full = matmul(x, w_query)?;
    let k_full = matmul(x, w_key)?;
    let v_full = matmul(x, w_value)?;

    let mut concat = TensorView::zeros(x.rows(), local_heads * p);
    for h in 0..local_heads {
        let q_h = q_full.slice_cols(h * p, (h + 1) * p);
        let k_h = k_full.slice_cols(h * p, (h + 1) * p);
        let v_h = v_full.slice_cols(h * p, (h + 1) * p);
        let attn = match cache.as_deref_mut() {
            Some(cache) => {
                for r in 0..x.rows() {
                    cache.append(h, k_h.row(r), v_h.row(r))?;
                }
                let k_att = cache.k_matrix(h);
                let v_att = cache.v_matrix(h);
                ops::attention(&q_h, &k_att, &v_att, p, cfg.causal)?
            }
            None => ops::attention(&q_h, &k_h, &v_h, p, cfg.causal)?,
        };
        for r in 0..x.rows() {
            concat.row_mut(r)[h * p..(h + 1) * p].copy_from_slice(attn.row(r));
        }
    }
    matmul(&concat, w_out)
}

/// Partial FC stage over a local F-slice: `gelu(x W_L1_c) W_L2_c`, again a
/// full-width `q x E` partial sum.
fn fc_partial(
    x: &TensorView,
    w_l1: &TensorView,
    w_l2: &TensorView,
    cfg: &ModelConfig,
) -> Result<TensorView> {
    let mut hidden = matmul(x, w_l1)?;
    gelu_inplace(&mut hidden, cfg.gelu_kind);
    matmul(&hidden, w_l2)
}

fn check_input(x: &TensorView, cfg: &ModelConfig) -> Result<()> {
    if x.cols() != cfg.embed_dim {
        return Err(Error::ShapeMismatch {
            expected: format!("input with {} columns", cfg.embed_dim),
            got: format!("{}x{}", x.rows(), x.cols()),
        });
    }
    if cfg.mode == Mode::Autoregressive && x.rows() != 1 {
        return Err(Error::ShapeMismatch {
            expected: "1 row per autoregressive step".into(),
            got: format!("{} rows", x.rows()),
        });
    }
    Ok(())
}

/// Run one block monolithically: MHSA + skip + norm, FC + skip + norm
/// (post-norm). In autoregressive mode the new key/value rows are appended
/// to `cache` and attention spans all cached positions.
pub fn run_block_monolithic(
    x: &TensorView,
    w: &BlockWeights,
    cfg: &ModelConfig,
    cache: Option<&mut KVCache>,
) -> Result<TensorView> {
    check_input(x, cfg)?;
    w.check_shapes(cfg)?;
    if cfg.mode == Mode::Autoregressive && cache.is_none() {
        return Err(Error::InvalidConfig("autoregressive mode requires a KV-cache".into()));
    }
    let mhsa = mhsa_partial(x, &w.w_query, &w.w_key, &w.w_value, &w.w_out, cfg, cache)?;
    let y1 = x.add(&mhsa)?;
    let y1n = norm_rows(&y1, &w.norm1, cfg);
    let fc = fc_partial(&y1n, &w.w_l1, &w.w_l2, cfg)?;
    let y2 = y1n.add(&fc)?;
    Ok(norm_rows(&y2, &w.norm2, cfg))
}

/// Reduce per-chip partials along the tree, accumulating at each receiver in
/// sender order. Returns the fully reduced tensor (left at the root slot).
fn tree_reduce(partials: &mut [Option<TensorView>], plan: &PartitionPlan) -> Result<TensorView> {
    for level in &plan.tree.levels {
        for group in &level.groups {
            let mut acc = partials[group.receiver]
                .take()
                .ok_or_else(|| Error::PlanMismatch("receiver partial consumed twice".into()))?;
            for &s in &group.senders {
                let sent = partials[s]
                    .take()
                    .ok_or_else(|| Error::PlanMismatch("sender partial consumed twice".into()))?;
                acc.add_assign(&sent)?;
            }
            partials[group.receiver] = Some(acc);
        }
    }
    partials[plan.tree.root]
        .take()
        .ok_or_else(|| Error::PlanMismatch("root partial missing".into()))
}

/// Run one block under a partition plan using prepared per-chip states.
///
/// Executes per-chip partial MHSA and FC, the hierarchical reduction with
/// the skip connection merged in, single-chip normalization at the root, and
/// the broadcast. Returns the root's final output (which the broadcast makes
/// available to every chip). A sequential deterministic schedule: per-chip
/// work runs in chip order, accumulation in tree order.
pub fn run_block_partitioned_with_states(
    x: &TensorView,
    plan: &PartitionPlan,
    cfg: &ModelConfig,
    states: &mut [ChipState],
) -> Result<TensorView> {
    check_input(x, cfg)?;
    if states.len() != plan.n_chips {
        return Err(Error::PlanMismatch(format!(
            "{} chip states for a {}-chip plan",
            states.len(),
            plan.n_chips
        )));
    }
    let root = plan.tree.root;
    let (norm1, norm2) = states[root]
        .norms
        .clone()
        .ok_or_else(|| Error::PlanMismatch("root chip is missing normalization params".into()))?;

    // Every reduced/broadcast tensor is a full-width q x E partial; the
    // schedule must account exactly those bytes per message.
    let expected_msg_bytes = (x.rows() * cfg.embed_dim * cfg.bytes_per_elem) as u64;
    for sync in &plan.schedule.syncs {
        for m in sync.reduce.iter().chain(sync.broadcast.iter()) {
            if m.bytes != expected_msg_bytes {
                return Err(Error::PlanMismatch(format!(
                    "schedule message carries {} bytes, partial outputs are {} bytes",
                    m.bytes, expected_msg_bytes
                )));
            }
        }
    }

    // Stage 1: local partial MHSA on every chip.
    let mut partials: Vec<Option<TensorView>> = Vec::with_capacity(plan.n_chips);
    for st in states.iter_mut() {
        let p = mhsa_partial(
            x,
            &st.w_query,
            &st.w_key,
            &st.w_value,
            &st.w_out,
            cfg,
            st.cache.as_mut(),
        )?;
        partials.push(Some(p));
    }

    // Sync 1: reduce, merge the skip (all chips hold x), normalize, broadcast.
    let reduced = tree_reduce(&mut partials, plan)?;
    let y1 = x.add(&reduced)?;
    let y1n = norm_rows(&y1, &norm1, cfg);

    // Stage 2: local partial FC on every chip (y1n was broadcast).
    let mut partials: Vec<Option<TensorView>> = Vec::with_capacity(plan.n_chips);
    for st in states.iter() {
        partials.push(Some(fc_partial(&y1n, &st.w_l1, &st.w_l2, cfg)?));
    }

    // Sync 2: reduce with skip (all chips hold y1n), normalize, broadcast.
    let reduced = tree_reduce(&mut partials, plan)?;
    let y2 = y1n.add(&reduced)?;
    Ok(norm_rows(&y2, &norm2, cfg))
}

/// One-shot convenience wrapper: shard `w` per `plan`, run one block, and
/// discard the per-chip states (fresh caches in autoregressive mode).
pub fn run_block_partitioned(
    x: &TensorView,
    w: &BlockWeights,
    plan: &PartitionPlan,
    cfg: &ModelConfig,
) -> Result<TensorView> {
    let mut states = make_chip_states(w, plan, cfg)?;
    run_block_partitioned_with_states(x, plan, cfg, &mut states)
}
