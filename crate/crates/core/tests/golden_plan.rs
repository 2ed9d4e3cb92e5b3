//! Golden-file check of the plan JSON layout.
//!
//! The fixture pins the serialized shape of an 8-chip TinyLlama plan;
//! regenerate it deliberately when the schema changes.

use shardsim::model::{preset, Mode};
use shardsim::partition::{plan_partition, PartitionPlan};

const GOLDEN: &str = include_str!("fixtures/plan_tinyllama_8chips.json");

#[test]
fn tinyllama_8_chip_plan_matches_golden_json() {
    let cfg = preset("tinyllama", Mode::Autoregressive).unwrap();
    let plan = plan_partition(&cfg, 8).unwrap();
    let got: serde_json::Value = serde_json::from_str(&plan.to_json()).unwrap();
    let expected: serde_json::Value = serde_json::from_str(GOLDEN).unwrap();
    assert_eq!(got, expected, "plan JSON layout drifted from the golden file");
}

#[test]
fn golden_json_round_trips_through_the_parser() {
    let plan = PartitionPlan::from_json(GOLDEN).unwrap();
    assert_eq!(plan.n_chips, 8);
    assert_eq!(plan.shards.len(), 48);
    assert_eq!(plan.schedule.syncs.len(), 2);
    assert_eq!(plan.tree.fan_in, 4);
}
