//! Key-value configuration files and the fully resolved simulation setup.
//!
//! The file format is plain `key = value` lines with `#` comments. Keys are
//! dotted paths into the model and the platform constants, e.g.
//!
//! ```text
//! # decoder step with a deeper cache
//! model.S = 256
//! model.kv_cache_len = 256
//! perf.l3_bandwidth_bytes_per_s = 0.5e9
//! ```
//!
//! Unknown keys are rejected so typos cannot silently fall back to
//! defaults; every constant that reaches an output file is traceable to
//! either a preset or an explicit override.

use crate::energy::EnergyConstants;
use crate::error::{Error, Result};
use crate::model::{GeluKind, Mode, ModelConfig, NormKind};
use crate::perf::{ChipSpec, LinkSpec, PerfParams};

/// A fully resolved simulation setup: workload plus platform constants.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: ModelConfig,
    pub chip: ChipSpec,
    pub link: LinkSpec,
    pub perf: PerfParams,
    pub energy: EnergyConstants,
}

impl Setup {
    /// Default platform constants around a preset workload.
    pub fn for_preset(name: &str, mode: Mode) -> Result<Self> {
        Ok(Self {
            model: crate::model::preset(name, mode)?,
            chip: ChipSpec::default(),
            link: LinkSpec::default(),
            perf: PerfParams::default(),
            energy: EnergyConstants::default(),
        })
    }

    /// Apply the overrides of a config file (see module docs for the format).
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.apply_override(key.trim(), value.trim()).map_err(|e| {
                Error::InvalidConfig(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(())
    }

    /// Apply one `key = value` override.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        fn usize_of(key: &str, v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: expected an integer, got '{v}'")))
        }
        fn u64_of(key: &str, v: &str) -> Result<u64> {
            // Accept scientific notation for byte counts as well.
            if let Ok(x) = v.parse::<u64>() {
                return Ok(x);
            }
            v.parse::<f64>()
                .map(|x| x as u64)
                .map_err(|_| Error::InvalidConfig(format!("{key}: expected an integer, got '{v}'")))
        }
        fn f64_of(key: &str, v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: expected a number, got '{v}'")))
        }
        fn bool_of(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "on" => Ok(true),
                "false" | "0" | "off" => Ok(false),
                _ => Err(Error::InvalidConfig(format!("{key}: expected a bool, got '{v}'"))),
            }
        }

        match key {
            "model.S" => self.model.seq_len = usize_of(key, value)?,
            "model.E" => self.model.embed_dim = usize_of(key, value)?,
            "model.P" => self.model.head_dim = usize_of(key, value)?,
            "model.H" => self.model.num_heads = usize_of(key, value)?,
            "model.F" => self.model.intermediate_dim = usize_of(key, value)?,
            "model.L" => self.model.num_blocks = usize_of(key, value)?,
            "model.mode" => self.model.mode = value.parse()?,
            "model.bytes_per_elem" => self.model.bytes_per_elem = usize_of(key, value)?,
            "model.kv_cache_len" => self.model.kv_cache_len = usize_of(key, value)?,
            "model.causal" => self.model.causal = bool_of(key, value)?,
            "model.norm" => {
                self.model.norm_kind = match value {
                    "layernorm" => NormKind::LayerNorm,
                    "rmsnorm" => NormKind::RmsNorm,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "model.norm: expected layernorm|rmsnorm, got '{value}'"
                        )))
                    }
                }
            }
            "model.gelu" => {
                self.model.gelu_kind = match value {
                    "erf" => GeluKind::Erf,
                    "tanh" => GeluKind::Tanh,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "model.gelu: expected erf|tanh, got '{value}'"
                        )))
                    }
                }
            }
            "chip.cores" => self.chip.cores = usize_of(key, value)?,
            "chip.clock_hz" => self.chip.clock_hz = f64_of(key, value)?,
            "chip.macs_per_core_per_cycle" => {
                self.chip.macs_per_core_per_cycle = usize_of(key, value)?
            }
            "chip.l1_bytes" => self.chip.l1_bytes = u64_of(key, value)?,
            "chip.l2_bytes" => self.chip.l2_bytes = u64_of(key, value)?,
            "chip.l1_bandwidth_bits_per_cycle" => {
                self.chip.l1_bandwidth_bits_per_cycle = u64_of(key, value)?
            }
            "link.bandwidth_bytes_per_s" => self.link.bandwidth_bytes_per_s = f64_of(key, value)?,
            "link.per_message_latency_s" => {
                self.link.per_message_latency_s = f64_of(key, value)?
            }
            "link.energy_per_byte_j" => self.link.energy_per_byte_j = f64_of(key, value)?,
            "perf.l3_bandwidth_bytes_per_s" => {
                self.perf.l3_bandwidth_bytes_per_s = f64_of(key, value)?
            }
            "perf.fixed_overhead_cycles" => {
                self.perf.fixed_overhead_cycles = u64_of(key, value)?
            }
            "perf.util_max" => self.perf.util_max = f64_of(key, value)?,
            "perf.util_k_half" => self.perf.util_k_half = f64_of(key, value)?,
            "perf.stream_tile_rows" => self.perf.stream_tile_rows = usize_of(key, value)?,
            "perf.l2_stream_reserve_bytes" => {
                self.perf.l2_stream_reserve_bytes = u64_of(key, value)?
            }
            "perf.fan_in" => self.perf.fan_in = usize_of(key, value)?,
            "energy.e_c2c_j_per_byte" => self.energy.e_c2c_j_per_byte = f64_of(key, value)?,
            "energy.e_l3_l2_j_per_byte" => self.energy.e_l3_l2_j_per_byte = f64_of(key, value)?,
            "energy.e_l2_l1_j_per_byte" => self.energy.e_l2_l1_j_per_byte = f64_of(key, value)?,
            "energy.core_power_w" => self.energy.core_power_w = f64_of(key, value)?,
            "energy.cores_per_chip" => self.energy.cores_per_chip = usize_of(key, value)?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Every constant in effect, as ordered key/value pairs. Echoed into
    /// output headers so no default stays hidden.
    pub fn echo_constants(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let c = &self.chip;
        let l = &self.link;
        let p = &self.perf;
        let e = &self.energy;
        let norm = match m.norm_kind {
            NormKind::LayerNorm => "layernorm",
            NormKind::RmsNorm => "rmsnorm",
        };
        let gelu = match m.gelu_kind {
            GeluKind::Erf => "erf",
            GeluKind::Tanh => "tanh",
        };
        vec![
            ("model.S".into(), m.seq_len.to_string()),
            ("model.E".into(), m.embed_dim.to_string()),
            ("model.P".into(), m.head_dim.to_string()),
            ("model.H".into(), m.num_heads.to_string()),
            ("model.F".into(), m.intermediate_dim.to_string()),
            ("model.L".into(), m.num_blocks.to_string()),
            ("model.mode".into(), m.mode.as_str().into()),
            ("model.bytes_per_elem".into(), m.bytes_per_elem.to_string()),
            ("model.kv_cache_len".into(), m.kv_cache_len.to_string()),
            ("model.causal".into(), m.causal.to_string()),
            ("model.norm".into(), norm.into()),
            ("model.gelu".into(), gelu.into()),
            ("chip.cores".into(), c.cores.to_string()),
            ("chip.clock_hz".into(), format!("{:e}", c.clock_hz)),
            ("chip.macs_per_core_per_cycle".into(), c.macs_per_core_per_cycle.to_string()),
            ("chip.l1_bytes".into(), c.l1_bytes.to_string()),
            ("chip.l2_bytes".into(), c.l2_bytes.to_string()),
            ("chip.l1_bandwidth_bits_per_cycle".into(), c.l1_bandwidth_bits_per_cycle.to_string()),
            ("link.bandwidth_bytes_per_s".into(), format!("{:e}", l.bandwidth_bytes_per_s)),
            ("link.per_message_latency_s".into(), format!("{:e}", l.per_message_latency_s)),
            ("link.energy_per_byte_j".into(), format!("{:e}", l.energy_per_byte_j)),
            ("perf.l3_bandwidth_bytes_per_s".into(), format!("{:e}", p.l3_bandwidth_bytes_per_s)),
            ("perf.fixed_overhead_cycles".into(), p.fixed_overhead_cycles.to_string()),
            ("perf.util_max".into(), format!("{}", p.util_max)),
            ("perf.util_k_half".into(), format!("{}", p.util_k_half)),
            ("perf.stream_tile_rows".into(), p.stream_tile_rows.to_string()),
            ("perf.l2_stream_reserve_bytes".into(), p.l2_stream_reserve_bytes.to_string()),
            ("perf.fan_in".into(), p.fan_in.to_string()),
            ("energy.e_c2c_j_per_byte".into(), format!("{:e}", e.e_c2c_j_per_byte)),
            ("energy.e_l3_l2_j_per_byte".into(), format!("{:e}", e.e_l3_l2_j_per_byte)),
            ("energy.e_l2_l1_j_per_byte".into(), format!("{:e}", e.e_l2_l1_j_per_byte)),
            ("energy.core_power_w".into(), format!("{:e}", e.core_power_w)),
            ("energy.cores_per_chip".into(), e.cores_per_chip.to_string()),
        ]
    }
}
