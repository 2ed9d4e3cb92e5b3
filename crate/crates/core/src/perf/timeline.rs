//! Per-chip event traces and traffic counters produced by the simulator.

use serde::Serialize;

/// Resource category of one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Compute,
    C2c,
    L2,
    L3,
}

/// One scheduled interval. `bytes` labels traffic events; L2 events are
/// zero-duration markers (L1 refills hide behind compute and cost energy
/// only), kept so counters stay checkable against the event list.
#[derive(Debug, Clone, Serialize)]
pub struct Event {
    pub chip: usize,
    pub start: f64,
    pub end: f64,
    pub category: Category,
    pub label: String,
    pub bytes: u64,
}

/// Per-chip traffic counters.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ChipCounters {
    pub l3_bytes: u64,
    pub l2_l1_bytes: u64,
}

/// Busy seconds per category, summed over chips (c2c counted once per
/// message, on the sending side).
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CategoryTimes {
    pub compute: f64,
    pub c2c: f64,
    pub l2: f64,
    pub l3: f64,
}

/// The deterministic event trace of one block.
#[derive(Debug, Clone, Serialize)]
pub struct Timeline {
    pub n_chips: usize,
    pub events: Vec<Event>,
    pub c2c_messages: u64,
    pub c2c_bytes: u64,
    pub per_chip: Vec<ChipCounters>,
    pub makespan: f64,
}

impl Timeline {
    /// Empty timeline; events are appended via [`Timeline::push`].
    pub fn new(n_chips: usize) -> Self {
        Self {
            n_chips,
            events: Vec::new(),
            c2c_messages: 0,
            c2c_bytes: 0,
            per_chip: vec![ChipCounters::default(); n_chips],
            makespan: 0.0,
        }
    }

    /// Append an event, updating counters and the makespan.
    pub fn push(&mut self, ev: Event) {
        match ev.category {
            Category::C2c => {
                self.c2c_messages += 1;
                self.c2c_bytes += ev.bytes;
            }
            Category::L3 => self.per_chip[ev.chip].l3_bytes += ev.bytes,
            Category::L2 => self.per_chip[ev.chip].l2_l1_bytes += ev.bytes,
            Category::Compute => {}
        }
        self.makespan = self.makespan.max(ev.end);
        self.events.push(ev);
    }

    /// Events of one chip in schedule order.
    pub fn chip_events(&self, chip: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.chip == chip)
    }

    /// Busy compute seconds of one chip (the `T_comp,j` of the energy model;
    /// stalls on communication or memory contribute nothing).
    pub fn compute_seconds(&self, chip: usize) -> f64 {
        self.chip_events(chip)
            .filter(|e| e.category == Category::Compute)
            .map(|e| e.end - e.start)
            .sum()
    }

    /// Busy seconds per category summed over chips.
    pub fn category_times(&self) -> CategoryTimes {
        let mut t = CategoryTimes::default();
        for e in &self.events {
            let d = e.end - e.start;
            match e.category {
                Category::Compute => t.compute += d,
                Category::C2c => t.c2c += d,
                Category::L2 => t.l2 += d,
                Category::L3 => t.l3 += d,
            }
        }
        t
    }

    pub fn total_l3_bytes(&self) -> u64 {
        self.per_chip.iter().map(|c| c.l3_bytes).sum()
    }

    pub fn total_l2_l1_bytes(&self) -> u64 {
        self.per_chip.iter().map(|c| c.l2_l1_bytes).sum()
    }

    /// Count events of a category.
    pub fn count(&self, cat: Category) -> usize {
        self.events.iter().filter(|e| e.category == cat).count()
    }

    /// Verify that no two events overlap on one resource: a chip's compute,
    /// a chip's L3 port, or a directed link (keyed by label). Used by tests.
    pub fn check_no_overlap(&self) -> Result<(), String> {
        let eps = 1e-12;
        for chip in 0..self.n_chips {
            for cat in [Category::Compute, Category::L3] {
                let mut spans: Vec<(f64, f64)> = self
                    .chip_events(chip)
                    .filter(|e| e.category == cat)
                    .map(|e| (e.start, e.end))
                    .collect();
                spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for w in spans.windows(2) {
                    if w[1].0 < w[0].1 - eps {
                        return Err(format!(
                            "chip {chip} {cat:?} events overlap: {:?} then {:?}",
                            w[0], w[1]
                        ));
                    }
                }
            }
        }
        // Directed links: label carries "src->dst".
        let mut link_spans: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
            std::collections::BTreeMap::new();
        for e in self.events.iter().filter(|e| e.category == Category::C2c) {
            if let Some(pair) = e.label.split_whitespace().last() {
                link_spans.entry(pair.to_string()).or_default().push((e.start, e.end));
            }
        }
        for (link, mut spans) in link_spans {
            spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in spans.windows(2) {
                if w[1].0 < w[0].1 - eps {
                    return Err(format!("link {link} events overlap"));
                }
            }
        }
        Ok(())
    }
}
