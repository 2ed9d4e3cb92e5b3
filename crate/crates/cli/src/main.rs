//! Command-line harness: run chip-count sweeps, verify partitioned
//! execution against the monolithic reference, and merge run reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use shardsim::config::Setup;
use shardsim::exec::{
    make_chip_states, run_block_monolithic, run_block_partitioned_with_states, BlockWeights,
    KVCache,
};
use shardsim::model::Mode;
use shardsim::partition::{plan_partition_with_fan_in, verify_plan};
use shardsim::report::{build_report, merge_reports_to_csv, RunReport};
use shardsim::tensor::TensorView;

/// Environment variable naming the default directory for `--config` files.
const CONFIG_DIR_ENV: &str = "SHARDSIM_CONFIG_DIR";

const VERIFY_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(
    name = "shardsim",
    about = "Simulate and verify tensor-parallel Transformer blocks on multi-chip MCU systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a chip-count sweep and write per-n latency/energy rows.
    Run(RunArgs),
    /// Check partitioned-vs-monolithic numerical equivalence per chip count.
    Verify(VerifyArgs),
    /// Merge JSON run reports into one CSV for plotting.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliMode {
    Autoregressive,
    Prompt,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Autoregressive => Mode::Autoregressive,
            CliMode::Prompt => Mode::Prompt,
        }
    }
}

#[derive(Args)]
struct SetupArgs {
    /// Workload preset: tinyllama | mobilebert | tinyllama-scaled.
    #[arg(long, default_value = "tinyllama")]
    preset: String,

    /// Inference mode.
    #[arg(long, value_enum, default_value = "autoregressive")]
    mode: CliMode,

    /// Config file with `key = value` overrides (searched in
    /// $SHARDSIM_CONFIG_DIR if not found as given).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Single `key=value` override; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl SetupArgs {
    fn build(&self) -> Result<Setup> {
        let mut setup = Setup::for_preset(&self.preset, self.mode.into())
            .with_context(|| format!("preset '{}'", self.preset))?;
        if let Some(path) = &self.config {
            let resolved = resolve_config_path(path)?;
            let text = fs::read_to_string(&resolved)
                .with_context(|| format!("reading config {}", resolved.display()))?;
            setup
                .apply_file(&text)
                .with_context(|| format!("config {}", resolved.display()))?;
        }
        for kv in &self.sets {
            let (key, value) = kv
                .split_once('=')
                .with_context(|| format!("--set '{kv}': expected KEY=VALUE"))?;
            setup.apply_override(key.trim(), value.trim())?;
        }
        let validation = shardsim::model::validate(&setup.model);
        for warning in &validation.warnings {
            eprintln!("warning: {warning}");
        }
        if !validation.is_ok() {
            for v in &validation.violations {
                eprintln!("error: config violates '{}': {}", v.field, v.message);
            }
            bail!("invalid model configuration");
        }
        Ok(setup)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    setup: SetupArgs,

    /// Chip counts: comma-separated values and power-of-two ranges,
    /// e.g. `1,2,4,8` or `1..64`.
    #[arg(long, default_value = "1,2,4,8")]
    chips: String,

    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,

    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed echoed into the report (simulation itself is deterministic).
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Series label for merged reports; defaults to `<preset>-<mode>`.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    setup: SetupArgs,

    /// Chip counts to verify (same syntax as `run --chips`).
    #[arg(long, default_value = "1,2,4,8")]
    chips: String,

    /// Seed for the random weights and inputs.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Autoregressive only: cache rows to prefill before the step.
    #[arg(long, default_value_t = 4)]
    prefill: usize,

    /// Fault injection for negative testing: corrupts the plan before
    /// verification, which must then fail.
    #[arg(long, value_enum, default_value = "none")]
    inject: Inject,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Inject {
    None,
    DuplicateShard,
    ExtraSync,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON run reports written by `shardsim run --format json`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output CSV file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_config_path(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    bail!("config file {} not found (also tried ${CONFIG_DIR_ENV})", path.display());
}

/// Parse `1,2,4..16` into chip counts; `A..B` expands powers of two.
fn parse_chip_list(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.trim().parse().with_context(|| format!("range start '{lo}'"))?;
            let hi: usize = hi.trim().parse().with_context(|| format!("range end '{hi}'"))?;
            if lo == 0 || hi < lo {
                bail!("invalid chip range '{part}'");
            }
            let mut n = lo;
            while n <= hi {
                out.push(n);
                n *= 2;
            }
        } else {
            let n: usize = part.parse().with_context(|| format!("chip count '{part}'"))?;
            if n == 0 {
                bail!("chip counts must be >= 1");
            }
            out.push(n);
        }
    }
    if out.is_empty() {
        bail!("no chip counts given");
    }
    Ok(out)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let setup = args.setup.build()?;
    let chips = parse_chip_list(&args.chips)?;
    let label = args
        .label
        .clone()
        .unwrap_or_else(|| format!("{}-{}", args.setup.preset, setup.model.mode.as_str()));
    let report = build_report(&setup, &args.setup.preset, &label, args.seed, &chips)?;
    for (n, err) in &report.errors {
        eprintln!("warning: n_chips={n}: {err}");
    }
    let text = match args.format {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => report.to_json(),
    };
    write_or_print(args.out.as_deref(), &text)?;
    if report.rows.is_empty() {
        eprintln!("error: no chip count produced a result");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn random_tensor(rng: &mut StdRng, rows: usize, cols: usize) -> TensorView {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    TensorView::from_vec(rows, cols, data).expect("finite random input")
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let setup = args.setup.build()?;
    let cfg = &setup.model;
    let chips = parse_chip_list(&args.chips)?;
    let mut rng = StdRng::seed_from_u64(args.seed);
    let weights = BlockWeights::random(cfg, &mut rng);
    let x = random_tensor(&mut rng, cfg.query_len(), cfg.embed_dim);

    let mut failed = false;
    let mut worst = 0.0f64;
    for &n in &chips {
        let mut plan = match plan_partition_with_fan_in(cfg, n, setup.perf.fan_in) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("n={n}: config error: {e}");
                failed = true;
                continue;
            }
        };
        match args.inject {
            Inject::None => {}
            Inject::DuplicateShard => {
                if let Some(shard) = plan.shards.iter().position(|s| s.chip_id == n - 1) {
                    let donor = plan.shards[0].clone();
                    let chip_id = plan.shards[shard].chip_id;
                    plan.shards[shard] = donor;
                    plan.shards[shard].chip_id = chip_id;
                }
            }
            Inject::ExtraSync => {
                let extra = plan.schedule.syncs[0].clone();
                plan.schedule.syncs.push(extra);
            }
        }

        let report = verify_plan(&plan, cfg);
        if !report.is_ok() {
            for v in &report.violations {
                eprintln!("n={n}: plan violation [{:?}]: {}", v.kind, v.message);
            }
            failed = true;
            continue;
        }

        let err = match cfg.mode {
            Mode::Prompt => {
                let mono = run_block_monolithic(&x, &weights, cfg, None)?;
                let mut states = make_chip_states(&weights, &plan, cfg)?;
                let part = run_block_partitioned_with_states(&x, &plan, cfg, &mut states)?;
                part.rel_error(&mono)
            }
            Mode::Autoregressive => {
                let prefill = args.prefill.min(cfg.kv_cache_len.saturating_sub(1));
                let mut mono_cache = KVCache::new(cfg.num_heads, cfg.head_dim, cfg.kv_cache_len);
                let mut states = make_chip_states(&weights, &plan, cfg)?;
                let local_heads = cfg.num_heads / n;
                let mut fill_rng = StdRng::seed_from_u64(args.seed ^ 0xFEED);
                for _ in 0..prefill {
                    let k = random_tensor(&mut fill_rng, 1, cfg.proj_cols());
                    let v = random_tensor(&mut fill_rng, 1, cfg.proj_cols());
                    for h in 0..cfg.num_heads {
                        let ks = &k.row(0)[h * cfg.head_dim..(h + 1) * cfg.head_dim];
                        let vs = &v.row(0)[h * cfg.head_dim..(h + 1) * cfg.head_dim];
                        mono_cache.append(h, ks, vs)?;
                        states[h / local_heads]
                            .cache
                            .as_mut()
                            .expect("autoregressive chip state has a cache")
                            .append(h % local_heads, ks, vs)?;
                    }
                }
                let mono = run_block_monolithic(&x, &weights, cfg, Some(&mut mono_cache))?;
                let part = run_block_partitioned_with_states(&x, &plan, cfg, &mut states)?;
                part.rel_error(&mono)
            }
        };
        worst = worst.max(err);
        let ok = err <= VERIFY_TOLERANCE;
        println!(
            "n={n}: plan ok, max relative error {err:.3e} {}",
            if ok { "<= 1e-5" } else { "EXCEEDS 1e-5" }
        );
        failed |= !ok;
    }
    println!(
        "verify: {} (worst relative error {worst:.3e})",
        if failed { "FAIL" } else { "PASS" }
    );
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let mut reports = Vec::new();
    for path in &args.inputs {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading report {}", path.display()))?;
        let report = RunReport::from_json(&text)
            .with_context(|| format!("parsing report {}", path.display()))?;
        reports.push(report);
    }
    let csv = merge_reports_to_csv(&reports)?;
    write_or_print(args.out.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
