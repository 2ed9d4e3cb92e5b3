//! Run-report rows and their CSV/JSON encodings.
//!
//! One row per simulated chip count, combining the timing sweep with the
//! energy model. Encoders are deterministic: identical inputs produce
//! byte-identical text. Every platform constant in effect is echoed into
//! the output header so results stay reproducible from the file alone.

use serde::Serialize;

use crate::config::Setup;
use crate::energy::{edp, energy_total};
use crate::error::Error;
use crate::perf::sweep;

/// Output schema version for the JSON/CSV encodings.
pub const SCHEMA_VERSION: u32 = 1;

/// One sweep point with its energy figures.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub label: String,
    pub preset: String,
    pub mode: String,
    pub n_chips: usize,
    pub makespan_s: f64,
    pub speedup: f64,
    pub t_compute_s: f64,
    pub t_c2c_s: f64,
    pub t_l3_s: f64,
    pub t_l2_s: f64,
    pub c2c_bytes: u64,
    pub c2c_messages: u64,
    pub l3_bytes: u64,
    pub l2_l1_bytes: u64,
    pub e_compute_j: f64,
    pub e_c2c_j: f64,
    pub e_l3_l2_j: f64,
    pub e_l2_l1_j: f64,
    pub e_total_j: f64,
    pub edp_js: f64,
    pub double_buffer: bool,
    pub all_blocks_resident: bool,
    pub activations_spilled: bool,
    pub streamed_tensors: usize,
}

/// A full run report: resolved constants plus per-n rows and per-n errors.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub label: String,
    pub preset: String,
    pub mode: String,
    pub seed: u64,
    pub constants: Vec<(String, String)>,
    pub rows: Vec<RunRow>,
    pub errors: Vec<(usize, String)>,
}

/// Simulate `n_chips_list` under `setup` and assemble the report.
///
/// Chip counts that fail (e.g. indivisible head counts) land in `errors`
/// without aborting the remaining entries.
pub fn build_report(
    setup: &Setup,
    preset: &str,
    label: &str,
    seed: u64,
    n_chips_list: &[usize],
) -> Result<RunReport, Error> {
    let result = sweep(&setup.model, n_chips_list, &setup.chip, &setup.link, &setup.perf)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (n, entry) in result.entries {
        match entry {
            Ok(o) => {
                let energy = energy_total(&o.timeline, &setup.energy);
                rows.push(RunRow {
                    label: label.to_string(),
                    preset: preset.to_string(),
                    mode: setup.model.mode.as_str().to_string(),
                    n_chips: o.n_chips,
                    makespan_s: o.makespan_s,
                    speedup: o.speedup,
                    t_compute_s: o.times.compute,
                    t_c2c_s: o.times.c2c,
                    t_l3_s: o.times.l3,
                    t_l2_s: o.times.l2,
                    c2c_bytes: o.c2c_bytes,
                    c2c_messages: o.c2c_messages,
                    l3_bytes: o.l3_bytes,
                    l2_l1_bytes: o.l2_l1_bytes,
                    e_compute_j: energy.compute_j,
                    e_c2c_j: energy.c2c_j,
                    e_l3_l2_j: energy.l3_l2_j,
                    e_l2_l1_j: energy.l2_l1_j,
                    e_total_j: energy.total_j,
                    edp_js: edp(&energy, o.makespan_s),
                    double_buffer: o.double_buffer,
                    all_blocks_resident: o.all_blocks_resident,
                    activations_spilled: o.activations_spilled,
                    streamed_tensors: o.streamed_tensors,
                });
            }
            Err(e) => errors.push((n, e.to_string())),
        }
    }
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        label: label.to_string(),
        preset: preset.to_string(),
        mode: setup.model.mode.as_str().to_string(),
        seed,
        constants: setup.echo_constants(),
        rows,
        errors,
    })
}

/// CSV column names, in output order.
pub const CSV_COLUMNS: &str = "label,preset,mode,n_chips,makespan_s,speedup,\
t_compute_s,t_c2c_s,t_l3_s,t_l2_s,c2c_bytes,c2c_messages,l3_bytes,l2_l1_bytes,\
e_compute_j,e_c2c_j,e_l3_l2_j,e_l2_l1_j,e_total_j,edp_js,\
double_buffer,all_blocks_resident,activations_spilled,streamed_tensors";

fn csv_row(row: &RunRow) -> String {
    format!(
        "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
        row.label,
        row.preset,
        row.mode,
        row.n_chips,
        row.makespan_s,
        row.speedup,
        row.t_compute_s,
        row.t_c2c_s,
        row.t_l3_s,
        row.t_l2_s,
        row.c2c_bytes,
        row.c2c_messages,
        row.l3_bytes,
        row.l2_l1_bytes,
        row.e_compute_j,
        row.e_c2c_j,
        row.e_l3_l2_j,
        row.e_l2_l1_j,
        row.e_total_j,
        row.edp_js,
        row.double_buffer,
        row.all_blocks_resident,
        row.activations_spilled,
        row.streamed_tensors,
    )
}

impl RunReport {
    /// CSV with `#`-prefixed header lines echoing all constants.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# schema_version = {}\n", self.schema_version));
        out.push_str(&format!("# label = {}\n", self.label));
        out.push_str(&format!("# preset = {}\n", self.preset));
        out.push_str(&format!("# seed = {}\n", self.seed));
        for (k, v) in &self.constants {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for (n, e) in &self.errors {
            out.push_str(&format!("# error: n_chips={n}: {e}\n"));
        }
        out.push_str(CSV_COLUMNS);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_row(row));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<RunReportOwned, Error> {
        serde_json::from_str(text).map_err(|e| Error::Io(format!("report json: {e}")))
    }
}

/// Deserialized form of a written report (for merging).
#[derive(Debug, Clone, serde::Deserialize)]
pub struct RunReportOwned {
    pub schema_version: u32,
    pub label: String,
    pub preset: String,
    pub mode: String,
    pub seed: u64,
    #[serde(default)]
    pub constants: Vec<(String, String)>,
    pub rows: Vec<RunRowOwned>,
    #[serde(default)]
    pub errors: Vec<(usize, String)>,
}

/// Deserialized row; mirrors [`RunRow`].
#[derive(Debug, Clone, serde::Deserialize)]
pub struct RunRowOwned {
    pub label: String,
    pub preset: String,
    pub mode: String,
    pub n_chips: usize,
    pub makespan_s: f64,
    pub speedup: f64,
    pub t_compute_s: f64,
    pub t_c2c_s: f64,
    pub t_l3_s: f64,
    pub t_l2_s: f64,
    pub c2c_bytes: u64,
    pub c2c_messages: u64,
    pub l3_bytes: u64,
    pub l2_l1_bytes: u64,
    pub e_compute_j: f64,
    pub e_c2c_j: f64,
    pub e_l3_l2_j: f64,
    pub e_l2_l1_j: f64,
    pub e_total_j: f64,
    pub edp_js: f64,
    pub double_buffer: bool,
    pub all_blocks_resident: bool,
    pub activations_spilled: bool,
    pub streamed_tensors: usize,
}

/// Merge previously written JSON reports into one CSV suitable for plotting
/// speedup curves and stacked runtime breakdowns.
pub fn merge_reports_to_csv(reports: &[RunReportOwned]) -> Result<String, Error> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no report files to merge".into()));
    }
    let mut out = String::new();
    out.push_str(&format!("# schema_version = {SCHEMA_VERSION}\n"));
    out.push_str(&format!("# merged_reports = {}\n", reports.len()));
    out.push_str(CSV_COLUMNS);
    out.push('\n');
    for report in reports {
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "report '{}' has schema_version {}, expected {}",
                report.label, report.schema_version, SCHEMA_VERSION
            )));
        }
        for row in &report.rows {
            let as_row = RunRow {
                label: row.label.clone(),
                preset: row.preset.clone(),
                mode: row.mode.clone(),
                n_chips: row.n_chips,
                makespan_s: row.makespan_s,
                speedup: row.speedup,
                t_compute_s: row.t_compute_s,
                t_c2c_s: row.t_c2c_s,
                t_l3_s: row.t_l3_s,
                t_l2_s: row.t_l2_s,
                c2c_bytes: row.c2c_bytes,
                c2c_messages: row.c2c_messages,
                l3_bytes: row.l3_bytes,
                l2_l1_bytes: row.l2_l1_bytes,
                e_compute_j: row.e_compute_j,
                e_c2c_j: row.e_c2c_j,
                e_l3_l2_j: row.e_l3_l2_j,
                e_l2_l1_j: row.e_l2_l1_j,
                e_total_j: row.e_total_j,
                edp_js: row.edp_js,
                double_buffer: row.double_buffer,
                all_blocks_resident: row.all_blocks_resident,
                activations_spilled: row.activations_spilled,
                streamed_tensors: row.streamed_tensors,
            };
            out.push_str(&csv_row(&as_row));
            out.push('\n');
        }
    }
    Ok(out)
}
