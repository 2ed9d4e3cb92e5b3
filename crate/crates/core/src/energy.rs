//! Analytical energy model over timeline counters, and the energy-delay
//! product.
//!
//! Total energy of one block is the chip-to-chip traffic term plus, per
//! chip, the busy-compute term and the two memory-traffic terms:
//! `E = N_c2c*e_c2c + sum_j (P_chip*T_comp_j + N_l3_j*e_l3 + N_l2_j*e_l2)`
//! with `P_chip = core_power * cores_per_chip`. A chip stalled on
//! communication or memory draws no compute power here; idle/leakage power
//! is not modeled. Hidden double-buffer prefetch traffic still pays its L3
//! energy even though its time does not appear in the makespan.

use serde::Serialize;

use crate::perf::Timeline;

/// Energy constants of the platform model.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyConstants {
    /// Chip-to-chip link energy, J/B.
    pub e_c2c_j_per_byte: f64,
    /// L3<->L2 transfer energy, J/B.
    pub e_l3_l2_j_per_byte: f64,
    /// L2<->L1 transfer energy, J/B.
    pub e_l2_l1_j_per_byte: f64,
    /// Average active power of one core, W.
    pub core_power_w: f64,
    /// Cores per chip cluster.
    pub cores_per_chip: usize,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            e_c2c_j_per_byte: 1e-10,
            e_l3_l2_j_per_byte: 1e-10,
            e_l2_l1_j_per_byte: 2e-12,
            core_power_w: 1.3e-2,
            cores_per_chip: 8,
        }
    }
}

/// Energy of one chip, by component.
#[derive(Debug, Clone, Serialize)]
pub struct ChipEnergy {
    pub chip: usize,
    pub compute_s: f64,
    pub compute_j: f64,
    pub l3_l2_j: f64,
    pub l2_l1_j: f64,
}

/// Component-wise energy of one block (or one inference step).
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub per_chip: Vec<ChipEnergy>,
    pub c2c_j: f64,
    pub compute_j: f64,
    pub l3_l2_j: f64,
    pub l2_l1_j: f64,
    pub total_j: f64,
}

/// Evaluate the energy model over a timeline's counters.
pub fn energy_total(timeline: &Timeline, k: &EnergyConstants) -> EnergyReport {
    let p_chip = k.core_power_w * k.cores_per_chip as f64;
    let mut per_chip = Vec::with_capacity(timeline.n_chips);
    let (mut compute_j, mut l3_j, mut l2_j) = (0.0, 0.0, 0.0);
    for chip in 0..timeline.n_chips {
        let t_comp = timeline.compute_seconds(chip);
        let counters = timeline.per_chip[chip];
        let ce = ChipEnergy {
            chip,
            compute_s: t_comp,
            compute_j: p_chip * t_comp,
            l3_l2_j: counters.l3_bytes as f64 * k.e_l3_l2_j_per_byte,
            l2_l1_j: counters.l2_l1_bytes as f64 * k.e_l2_l1_j_per_byte,
        };
        compute_j += ce.compute_j;
        l3_j += ce.l3_l2_j;
        l2_j += ce.l2_l1_j;
        per_chip.push(ce);
    }
    let c2c_j = timeline.c2c_bytes as f64 * k.e_c2c_j_per_byte;
    EnergyReport {
        per_chip,
        c2c_j,
        compute_j,
        l3_l2_j: l3_j,
        l2_l1_j: l2_j,
        total_j: c2c_j + compute_j + l3_j + l2_j,
    }
}

/// Energy-delay product in J*s.
pub fn edp(report: &EnergyReport, makespan_s: f64) -> f64 {
    report.total_j * makespan_s
}

impl EnergyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV rows: one per chip plus a totals row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chip,compute_s,compute_j,l3_l2_j,l2_l1_j,c2c_j,total_j\n");
        for c in &self.per_chip {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},,\n",
                c.chip, c.compute_s, c.compute_j, c.l3_l2_j, c.l2_l1_j
            ));
        }
        out.push_str(&format!(
            "total,,{:e},{:e},{:e},{:e},{:e}\n",
            self.compute_j, self.l3_l2_j, self.l2_l1_j, self.c2c_j, self.total_j
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::{Category, Event, Timeline};

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    fn timeline_with(events: Vec<Event>, n_chips: usize) -> Timeline {
        let mut tl = Timeline::new(n_chips);
        for e in events {
            tl.push(e);
        }
        tl
    }

    #[test]
    fn empty_timeline_has_zero_energy() {
        let tl = Timeline::new(1);
        let report = energy_total(&tl, &EnergyConstants::default());
        assert_eq!(report.total_j, 0.0);
    }

    #[test]
    fn one_millisecond_of_compute_costs_104_microjoules() {
        // Direct substitution: 8 cores * 13 mW * 1 ms = 104 uJ.
        let tl = timeline_with(
            vec![Event {
                chip: 0,
                start: 0.0,
                end: 1e-3,
                category: Category::Compute,
                label: "k".into(),
                bytes: 0,
            }],
            1,
        );
        let report = energy_total(&tl, &EnergyConstants::default());
        assert!(rel_close(report.total_j, 1.04e-4, 1e-12), "{}", report.total_j);
        assert_eq!(report.c2c_j, 0.0);
    }

    #[test]
    fn c2c_bytes_at_100_pj_per_byte() {
        // 28,672 bytes * 100 pJ/B = 2.8672 uJ.
        let tl = timeline_with(
            vec![Event {
                chip: 0,
                start: 0.0,
                end: 1e-6,
                category: Category::C2c,
                label: "reduce1 1->0".into(),
                bytes: 28_672,
            }],
            2,
        );
        let report = energy_total(&tl, &EnergyConstants::default());
        assert!(rel_close(report.c2c_j, 2.8672e-6, 1e-12));
    }

    #[test]
    fn edp_of_zero_energy_is_zero() {
        let tl = Timeline::new(1);
        let report = energy_total(&tl, &EnergyConstants::default());
        assert_eq!(edp(&report, 1.0), 0.0);
    }

    #[test]
    fn edp_headline_arithmetic() {
        // 0.64 mJ at 0.54 ms is an EDP of 3.456e-7 J*s.
        let report = EnergyReport {
            per_chip: vec![],
            c2c_j: 0.0,
            compute_j: 0.64e-3,
            l3_l2_j: 0.0,
            l2_l1_j: 0.0,
            total_j: 0.64e-3,
        };
        let got = edp(&report, 0.54e-3);
        assert_eq!(got, 0.64e-3 * 0.54e-3);
        assert!(rel_close(got, 3.456e-7, 1e-12));
    }

    #[test]
    fn edp_is_bilinear() {
        let report = EnergyReport {
            per_chip: vec![],
            c2c_j: 0.0,
            compute_j: 2.0,
            l3_l2_j: 0.0,
            l2_l1_j: 0.0,
            total_j: 2.0,
        };
        let doubled = EnergyReport { total_j: 4.0, ..report.clone() };
        assert_eq!(edp(&doubled, 2.0), 4.0 * edp(&report, 1.0));
    }

    #[test]
    fn traffic_terms_scale_linearly() {
        let mk = |bytes: u64| {
            timeline_with(
                vec![
                    Event {
                        chip: 0,
                        start: 0.0,
                        end: 1e-6,
                        category: Category::L3,
                        label: "stage".into(),
                        bytes,
                    },
                    Event {
                        chip: 0,
                        start: 0.0,
                        end: 0.0,
                        category: Category::L2,
                        label: "l1io".into(),
                        bytes,
                    },
                ],
                1,
            )
        };
        let k = EnergyConstants::default();
        let one = energy_total(&mk(1000), &k);
        let five = energy_total(&mk(5000), &k);
        assert!(rel_close(five.l3_l2_j, 5.0 * one.l3_l2_j, 1e-12));
        assert!(rel_close(five.l2_l1_j, 5.0 * one.l2_l1_j, 1e-12));
    }

    #[test]
    fn total_is_the_sum_of_nonnegative_components() {
        use crate::config::Setup;
        use crate::model::Mode;
        use crate::partition::plan_partition;
        use crate::perf::{plan_residency, simulate_block};

        let setup = Setup::for_preset("tinyllama", Mode::Autoregressive).unwrap();
        let plan = plan_partition(&setup.model, 8).unwrap();
        let residency =
            plan_residency(&setup.model, &plan, &setup.chip, &setup.perf).unwrap();
        let tl =
            simulate_block(&setup.model, &plan, &residency, &setup.chip, &setup.link, &setup.perf)
                .unwrap();
        let report = energy_total(&tl, &setup.energy);
        let parts = [report.c2c_j, report.compute_j, report.l3_l2_j, report.l2_l1_j];
        assert!(parts.iter().all(|&p| p >= 0.0));
        let sum: f64 = parts.iter().sum();
        assert!(rel_close(report.total_j, sum, 1e-12));
        // Per-chip components roll up to the totals.
        let per_chip_compute: f64 = report.per_chip.iter().map(|c| c.compute_j).sum();
        assert!(rel_close(per_chip_compute, report.compute_j, 1e-12));
    }

    #[test]
    fn report_serializes_to_csv_and_json() {
        let tl = timeline_with(
            vec![Event {
                chip: 0,
                start: 0.0,
                end: 2e-3,
                category: Category::Compute,
                label: "k".into(),
                bytes: 0,
            }],
            1,
        );
        let report = energy_total(&tl, &EnergyConstants::default());
        let csv = report.to_csv();
        assert!(csv.starts_with("chip,compute_s,"));
        assert_eq!(csv.lines().count(), 3, "header, one chip, totals");
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["per_chip"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn stalled_chip_draws_no_compute_energy() {
        // A chip with only c2c activity contributes zero compute joules.
        let tl = timeline_with(
            vec![Event {
                chip: 1,
                start: 0.0,
                end: 5.0,
                category: Category::C2c,
                label: "reduce1 1->0".into(),
                bytes: 10,
            }],
            2,
        );
        let report = energy_total(&tl, &EnergyConstants::default());
        assert_eq!(report.per_chip[1].compute_j, 0.0);
    }
}
