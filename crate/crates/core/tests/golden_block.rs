//! Golden numeric check: a stored input/weight set must reproduce the
//! stored block output bit-for-bit modulo tiny float noise, monolithically
//! and under every divisor partitioning.

use std::path::Path;

use shardsim::exec::{run_block_monolithic, run_block_partitioned, testvec, BlockWeights, NormParams};
use shardsim::model::{GeluKind, Mode, ModelConfig, NormKind};
use shardsim::partition::plan_partition;
use shardsim::tensor::TensorView;

fn fixture_cfg() -> ModelConfig {
    ModelConfig {
        seq_len: 4,
        embed_dim: 8,
        head_dim: 2,
        num_heads: 4,
        intermediate_dim: 8,
        num_blocks: 1,
        mode: Mode::Prompt,
        bytes_per_elem: 2,
        kv_cache_len: 0,
        causal: true,
        norm_kind: NormKind::LayerNorm,
        gelu_kind: GeluKind::Erf,
    }
}

#[test]
fn stored_block_vector_reproduces() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let tensors = testvec::load(&dir, "block_prompt_small").unwrap();
    let get = |name: &str| -> TensorView {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("fixture tensor '{name}'"))
            .1
            .clone()
    };

    let cfg = fixture_cfg();
    let w = BlockWeights {
        w_query: get("w_query"),
        w_key: get("w_key"),
        w_value: get("w_value"),
        w_out: get("w_out"),
        w_l1: get("w_l1"),
        w_l2: get("w_l2"),
        norm1: NormParams {
            gamma: get("norm1_gamma").data().to_vec(),
            beta: get("norm1_beta").data().to_vec(),
        },
        norm2: NormParams {
            gamma: get("norm2_gamma").data().to_vec(),
            beta: get("norm2_beta").data().to_vec(),
        },
    };
    let x = get("input");
    let expected = get("expected_output");

    let mono = run_block_monolithic(&x, &w, &cfg, None).unwrap();
    assert_eq!(mono, expected, "monolithic output drifted from the golden vector");

    for n in [1, 2, 4] {
        let plan = plan_partition(&cfg, n).unwrap();
        let part = run_block_partitioned(&x, &w, &plan, &cfg).unwrap();
        assert!(
            part.rel_error(&expected) <= 1e-5,
            "n={n}: relative error {}",
            part.rel_error(&expected)
        );
    }
}
