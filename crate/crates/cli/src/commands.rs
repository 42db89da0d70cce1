use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use fdht_core::ht::{
    compression_ratio, count_params, format_complexity, lstm_dense_params, write_checkpoint,
    Format, HtConfig,
};
use fdht_core::lstm::{train_toy, LstmError, ToyConfig};
use fdht_core::sim::{
    layer_trace, simulate_layer, trace_csv, CycleReport, HwConfig, SimError, TimingModel,
};
use fdht_core::transform::{check_bijection, index_map, literal_type_ii_map, TransformSpec};
use fdht_core::verify::{run_suite, Scope};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, FormatsArgs, Kind, ParamsArgs, Preset, ScopeArg, SimulateArgs, TransformArgs};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

/// Raw input length of both video presets before zero padding.
const PRESET_INPUT: usize = 57_600;

#[derive(Debug)]
pub enum AppError {
    Config(String),
    Verify(String),
    Runtime(String),
}

impl AppError {
    pub fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Verify(_) => EXIT_VERIFY,
            AppError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config: {m}"),
            AppError::Verify(m) => write!(f, "verification failed: {m}"),
            AppError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

type Result<T> = std::result::Result<T, AppError>;

fn config_err(e: impl fmt::Display) -> AppError {
    AppError::Config(e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: PathBuf,
}

impl Ctx<'_> {
    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| AppError::Runtime(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Prints `summary`, or the JSON of `value` under `--json`.
    fn report<T: Serialize>(&self, summary: &str, value: &T) {
        if self.cli.quiet {
            return;
        }
        if self.cli.json {
            println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
        } else {
            print!("{summary}");
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(path) = &cli.config {
        if !path.is_file() {
            return Err(config_err(format!("config file {} not found", path.display())));
        }
    }
    if cli.out.exists() && !cli.out.is_dir() {
        return Err(config_err(format!("{} is not a directory", cli.out.display())));
    }
    if let Command::Simulate(args) = &cli.command {
        if let Some(hw) = &args.hw {
            if !hw.is_file() {
                return Err(config_err(format!("hardware config {} not found", hw.display())));
            }
        }
    }
    fs::create_dir_all(&cli.out)
        .map_err(|e| config_err(format!("creating {}: {e}", cli.out.display())))?;
    let ctx = Ctx {
        cli,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Params(a) => params(&ctx, a),
        Command::Formats(a) => formats(&ctx, a),
        Command::Verify { scope } => verify(&ctx, *scope),
        Command::TrainToy { epochs } => train(&ctx, *epochs),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Transform(a) => transform(&ctx, a),
    }
}

/// Model file accepted by `params` and `simulate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    leaf_ranks: Vec<usize>,
    non_leaf_rank: usize,
    root_rank: usize,
    #[serde(default)]
    input_size: Option<usize>,
}

fn preset_config(p: Preset) -> HtConfig {
    match p {
        Preset::Ucf11 => HtConfig::ucf11(),
        Preset::Ytc => HtConfig::ytc(),
    }
}

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::Ucf11 => "ucf11",
        Preset::Ytc => "ytc",
    }
}

/// The model from `--config` or `--preset` (default ucf11), with its raw
/// input length.
fn resolve_model(cli: &Cli, preset: Option<Preset>) -> Result<(String, HtConfig, usize)> {
    match (&cli.config, preset) {
        (Some(_), Some(_)) => Err(config_err("give either --config or --preset, not both")),
        (Some(path), None) => {
            let f: ModelFile = read_json(path)?;
            let cfg = HtConfig {
                in_dims: f.in_dims,
                out_dims: f.out_dims,
                leaf_ranks: f.leaf_ranks,
                non_leaf_rank: f.non_leaf_rank,
                root_rank: f.root_rank,
            };
            cfg.validate().map_err(config_err)?;
            let input = f.input_size.unwrap_or_else(|| cfg.input_size());
            if input == 0 || input > cfg.input_size() {
                return Err(config_err(format!(
                    "input_size {input} must be in 1..={}",
                    cfg.input_size()
                )));
            }
            Ok((path.display().to_string(), cfg, input))
        }
        (None, p) => {
            let p = p.unwrap_or(Preset::Ucf11);
            Ok((preset_name(p).to_string(), preset_config(p), PRESET_INPUT))
        }
    }
}

#[derive(Debug, Serialize)]
struct ParamsReport {
    model: String,
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    input_size: usize,
    hidden: usize,
    ht_params: usize,
    /// Four-gate dense LSTM with the same input and hidden sizes, biases included.
    dense_params: u128,
    compression_ratio: f64,
}

fn params(ctx: &Ctx, a: &ParamsArgs) -> Result<()> {
    let (model, cfg, mut input) = resolve_model(ctx.cli, a.preset)?;
    if let Some(n) = a.input_size {
        if n == 0 || n > cfg.input_size() {
            return Err(config_err(format!("--input-size must be in 1..={}", cfg.input_size())));
        }
        input = n;
    }
    let ht = count_params(&cfg).map_err(config_err)?;
    let hidden = cfg.output_size();
    let dense = lstm_dense_params(input, hidden);
    let report = ParamsReport {
        model,
        in_dims: cfg.in_dims.clone(),
        out_dims: cfg.out_dims.clone(),
        input_size: input,
        hidden,
        ht_params: ht,
        dense_params: dense,
        compression_ratio: compression_ratio(dense, ht),
    };
    ctx.write_json("params.json", &report)?;
    let summary = format!(
        "model={}\nparams={}\ndense={}\nratio={:.0}x ({:.2})\n",
        report.model, ht, dense, report.compression_ratio, report.compression_ratio
    );
    ctx.report(&summary, &report);
    Ok(())
}

#[derive(Debug, Serialize)]
struct FormatsReport {
    d: usize,
    in_max: usize,
    out_max: usize,
    rows: usize,
    /// Ranks where HT is not strictly below every other format.
    ht_not_smallest: Vec<usize>,
    csv: PathBuf,
}

fn formats(ctx: &Ctx, a: &FormatsArgs) -> Result<()> {
    if a.rmin == 0 || a.rmin > a.rmax {
        return Err(config_err(format!("bad rank range {}..{}", a.rmin, a.rmax)));
    }
    if a.d == 0 || a.in_max == 0 || a.out_max == 0 {
        return Err(config_err("d, in-max and out-max must be positive"));
    }
    let mut csv = String::from("R,TT,TR,BT,HT\n");
    let mut not_smallest = Vec::new();
    for r in a.rmin..=a.rmax {
        let v: Vec<u128> = Format::COMPRESSED
            .iter()
            .map(|&f| format_complexity(f, a.d, a.in_max, a.out_max, r))
            .collect::<std::result::Result<_, _>>()
            .map_err(config_err)?;
        csv.push_str(&format!("{r},{},{},{},{}\n", v[0], v[1], v[2], v[3]));
        if !v[..3].iter().all(|&other| v[3] < other) {
            not_smallest.push(r);
        }
    }
    let path = ctx.write("formats.csv", csv.as_bytes())?;
    let report = FormatsReport {
        d: a.d,
        in_max: a.in_max,
        out_max: a.out_max,
        rows: a.rmax - a.rmin + 1,
        ht_not_smallest: not_smallest,
        csv: path,
    };
    let mut summary = format!("wrote {} rows to {}\n", report.rows, report.csv.display());
    if report.ht_not_smallest.is_empty() {
        summary.push_str("HT is smallest at every rank\n");
    } else {
        summary.push_str(&format!("HT is not smallest at R = {:?}\n", report.ht_not_smallest));
    }
    ctx.report(&summary, &report);
    Ok(())
}

fn verify(ctx: &Ctx, scope: ScopeArg) -> Result<()> {
    let scope = match scope {
        ScopeArg::Tensor => Scope::Tensor,
        ScopeArg::Layer => Scope::Layer,
        ScopeArg::Lstm => Scope::Lstm,
        ScopeArg::Transform => Scope::Transform,
        ScopeArg::Sram => Scope::Sram,
        ScopeArg::All => Scope::All,
    };
    let report = run_suite(scope, ctx.cli.seed);
    ctx.write_json("verify.json", &report)?;
    let mut summary = String::new();
    for c in &report.checks {
        summary.push_str(&format!("{c}\n"));
    }
    let total: f64 = report.checks.iter().map(|c| c.seconds).sum();
    summary.push_str(&format!(
        "{}: {} checks, {} failed, {total:.3}s\n",
        if report.passed() { "PASS" } else { "FAIL" },
        report.checks.len(),
        report.failures()
    ));
    ctx.report(&summary, &report);
    if report.passed() {
        Ok(())
    } else {
        Err(AppError::Verify(format!("{} of {} checks", report.failures(), report.checks.len())))
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    seed: u64,
    epochs: usize,
    final_loss: f64,
    final_accuracy: f64,
    /// First epoch with accuracy at least 0.95.
    first_epoch_at_95: Option<usize>,
    metrics: PathBuf,
    checkpoint: PathBuf,
}

fn train(ctx: &Ctx, epochs: Option<usize>) -> Result<()> {
    let mut cfg = match &ctx.cli.config {
        Some(path) => read_json::<ToyConfig>(path)?,
        None => ToyConfig::default(),
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let rep = train_toy(&cfg, ctx.cli.seed).map_err(|e| match e {
        LstmError::Diverged { .. } => AppError::Runtime(e.to_string()),
        LstmError::Config(_)
        | LstmError::RootRank(_)
        | LstmError::HiddenSize { .. }
        | LstmError::InputSize { .. }
        | LstmError::Ht(_) => config_err(e),
        other => AppError::Runtime(other.to_string()),
    })?;
    let metrics = ctx.write("metrics.csv", rep.metrics_csv().as_bytes())?;
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &rep.checkpoint()).map_err(|e| AppError::Runtime(e.to_string()))?;
    let checkpoint = ctx.write("checkpoint.fdht", &bytes)?;
    ctx.write_json("toy_config.json", &cfg)?;
    let last = rep.metrics.last().expect("epoch 0 is always recorded");
    let summary = TrainSummary {
        seed: ctx.cli.seed,
        epochs: cfg.epochs,
        final_loss: last.loss,
        final_accuracy: last.accuracy,
        first_epoch_at_95: rep.metrics.iter().find(|m| m.accuracy >= 0.95).map(|m| m.epoch),
        metrics,
        checkpoint,
    };
    let text = format!(
        "epochs={} final_loss={:.6} final_accuracy={:.4} first_epoch_at_0.95={}\n",
        summary.epochs,
        summary.final_loss,
        summary.final_accuracy,
        summary.first_epoch_at_95.map_or("none".into(), |e| e.to_string())
    );
    ctx.report(&text, &summary);
    Ok(())
}

/// `A..B` (inclusive) or `a,b,c`.
pub fn parse_ranks(s: &str) -> std::result::Result<Vec<usize>, String> {
    let bad = || format!("bad rank list '{s}'");
    let ranks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?
    };
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(bad());
    }
    Ok(ranks)
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<CycleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    model: String,
    hw: HwConfig,
    points: Vec<SweepPoint>,
}

fn sim_err(e: SimError) -> AppError {
    match e {
        SimError::Config(_) => config_err(e),
        e => AppError::Runtime(e.to_string()),
    }
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let hw = match &a.hw {
        Some(path) => read_json::<HwConfig>(path)?,
        None => HwConfig::reference(),
    };
    hw.validate().map_err(config_err)?;
    let (model, cfg, _) = resolve_model(ctx.cli, a.preset)?;
    let ranks = match &a.sweep {
        Some(s) => parse_ranks(s).map_err(config_err)?,
        None => vec![cfg.non_leaf_rank],
    };
    let timing = if a.overlap {
        TimingModel::Overlap
    } else {
        TimingModel::Serial
    };
    let mut points = Vec::new();
    for &r in &ranks {
        let mut c = cfg.clone();
        c.non_leaf_rank = r;
        points.push(match simulate_layer(&c, &hw, a.batch, timing) {
            Ok(rep) => SweepPoint {
                rank: r,
                report: Some(rep),
                error: None,
            },
            Err(e) => SweepPoint {
                rank: r,
                report: None,
                error: Some(e.to_string()),
            },
        });
    }
    let report = SimulateReport {
        model,
        hw: hw.clone(),
        points,
    };
    ctx.write_json("report.json", &report)?;
    if a.trace {
        let mut c = cfg.clone();
        c.non_leaf_rank = ranks[0];
        let trace = layer_trace(&c, &hw, a.batch).map_err(sim_err)?;
        ctx.write("trace.csv", trace_csv(&trace).as_bytes())?;
    }
    let mut summary = String::from("rank  totalCycles  macCycles  writeCycles  readCycles  macUtil  bufferBytes\n");
    for p in &report.points {
        match (&p.report, &p.error) {
            (Some(r), _) => summary.push_str(&format!(
                "{:>4}  {:>11}  {:>9}  {:>11}  {:>10}  {:>7.4}  {:>11}\n",
                p.rank,
                r.total_cycles,
                r.mac_cycles,
                r.mem_write_cycles,
                r.mem_read_cycles,
                r.mac_utilization,
                r.peak_assemble_buffer_bytes
            )),
            (None, Some(e)) => summary.push_str(&format!("{:>4}  error: {e}\n", p.rank)),
            (None, None) => unreachable!(),
        }
    }
    ctx.report(&summary, &report);
    let failed: Vec<usize> = report.points.iter().filter(|p| p.error.is_some()).map(|p| p.rank).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AppError::Runtime(format!("simulation failed at rank(s) {failed:?}")))
    }
}

#[derive(Debug, Serialize)]
struct TransformReport {
    spec: TransformSpec,
    literal: bool,
    entries: usize,
    bijective: bool,
    defect: Option<String>,
    table: PathBuf,
}

fn transform(ctx: &Ctx, a: &TransformArgs) -> Result<()> {
    let d = &a.dims;
    let want = match a.kind {
        Kind::I => 3,
        Kind::Ii => 5,
        Kind::Iii => 4,
    };
    if d.len() != want {
        return Err(config_err(format!("--dims needs {want} values, got {}", d.len())));
    }
    let spec = match a.kind {
        Kind::I => TransformSpec::TypeI {
            a: d[0],
            b1: d[1],
            b2: d[2],
        },
        Kind::Ii => TransformSpec::TypeII {
            a1: d[0],
            a2: d[1],
            a3: d[2],
            b1: d[3],
            b2: d[4],
        },
        Kind::Iii => TransformSpec::TypeIII {
            a1: d[0],
            a2: d[1],
            a3: d[2],
            b: d[3],
        },
    };
    spec.validate().map_err(config_err)?;
    if a.literal && a.kind != Kind::Ii {
        return Err(config_err("--literal applies to type ii only"));
    }
    let table = if a.literal {
        literal_type_ii_map(d[0], d[1], d[2], d[3], d[4])
    } else {
        index_map(&spec)
    };
    let mut csv = String::from("m,n,p,q\n");
    for e in &table {
        csv.push_str(&format!("{},{},{},{}\n", e.m, e.n, e.p, e.q));
    }
    let path = ctx.write("transform_table.csv", csv.as_bytes())?;
    let check = check_bijection(&table, spec.output_shape());
    let report = TransformReport {
        spec,
        literal: a.literal,
        entries: table.len(),
        bijective: check.is_ok(),
        defect: check.as_ref().err().map(|d| format!("{d:?}")),
        table: path,
    };
    let summary = match &report.defect {
        None => format!("{} entries, bijective\n", report.entries),
        Some(d) => format!("{} entries, NOT bijective: {d}\n", report.entries),
    };
    ctx.report(&summary, &report);
    match check {
        Ok(()) => Ok(()),
        Err(d) => Err(AppError::Verify(format!("index map is not a bijection: {d:?}"))),
    }
}
