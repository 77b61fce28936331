//! Command-line driver. Every command runs one two-party session in process
//! and writes a JSON report (or CSV for the segment sweep).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use vgbdt_core::checks::{self, Check};
use vgbdt_core::data::{breast_cancer, load_csv, split_train_test, Dataset, VerticalSplit, DEFAULT_LABEL};
use vgbdt_core::fss::DcfMode;
use vgbdt_core::pipeline::{self, accuracy, Mode, RunResult, Traffic};
use vgbdt_core::trainer::{PartyModel, PlainModel, TrainConfig};
use vgbdt_core::transport::{Meter, NetProfile};
use vgbdt_core::RingConfig;

const REPORT_SCHEMA: &str = "vgbdt-report/1";
const TRAIN_RATIO: f64 = 0.8;

#[derive(Parser)]
#[command(name = "vgbdt", version, about = "Two-party vertical gradient-boosted trees over secret sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on an 80/20 split and report accuracy and traffic.
    Train(TrainArgs),
    /// Score a dataset with a saved plain model or a pair of party models.
    Predict(PredictArgs),
    /// Meter one compressed aggregation against the per-element formula.
    BenchAgg(BenchAggArgs),
    /// Meter sigmoid, leaf weight and gain against their cost formulas.
    BenchMicro(BenchMicroArgs),
    /// Train once per segment count and emit (n, accuracy) as CSV.
    SweepSegments(SweepArgs),
    /// Run the exhaustive small-ring oracles; exits nonzero on any mismatch.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Lan,
    Wan,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Secure,
    Mirror,
    Exact,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Secure => Mode::Secure,
            ModeArg::Mirror => Mode::Mirror,
            ModeArg::Exact => Mode::Exact,
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV with a header row; defaults to the bundled breast-cancer file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_LABEL)]
    label_col: String,
    /// Number of leading feature columns held by P0 (default: half, rounded up).
    #[arg(long)]
    split_cols: Option<usize>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    trees: usize,
    #[arg(long, default_value_t = 8)]
    buckets: usize,
    #[arg(long, default_value_t = 12)]
    segments: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 64)]
    ring_bits: u32,
    #[arg(long, default_value_t = 16)]
    frac_bits: u32,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Session seed for the dealer and the data split (up to 128 bits).
    #[arg(long, default_value_t = 1)]
    seed: u128,
    /// Cost model for the time estimate; both LAN and WAN when omitted.
    #[arg(long, value_enum)]
    net_profile: Option<ProfileArg>,
    #[arg(long, value_enum, default_value = "secure")]
    mode: ModeArg,
}

impl ModelArgs {
    fn config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            trees: self.trees,
            depth: self.depth,
            buckets: self.buckets,
            segments: self.segments,
            gamma: self.gamma,
            eta: self.eta,
            ring: RingConfig::new(self.ring_bits, self.frac_bits)?,
            seed: self.seed,
            dcf: DcfMode::Tree,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for report.json and the model documents; report to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Plain model document, scored in the clear.
    #[arg(long, conflicts_with = "party_models")]
    model: Option<PathBuf>,
    /// Both party model documents, scored with secure prediction.
    #[arg(long, num_args = 2, value_names = ["P0", "P1"])]
    party_models: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = 1)]
    seed: u128,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchAggArgs {
    #[arg(long, default_value_t = 10_000)]
    elements: usize,
    #[arg(long, default_value_t = 64)]
    ring_bits: u32,
    #[arg(long, default_value_t = 16)]
    frac_bits: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchMicroArgs {
    #[arg(long, default_value_t = 12)]
    segments: usize,
    /// Inputs per protocol.
    #[arg(long, default_value_t = 1000)]
    inputs: usize,
    /// Sample count that sets the gain truncation.
    #[arg(long, default_value_t = 559)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 4)]
    from: usize,
    #[arg(long, default_value_t = 16)]
    to: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Predict(a) => predict(a).map(|_| true),
        Command::BenchAgg(a) => bench_agg(a),
        Command::BenchMicro(a) => bench_micro(a),
        Command::SweepSegments(a) => sweep(a).map(|_| true),
        Command::Selftest(a) => selftest(a),
    }
}

fn load(data: &DataArgs) -> Result<(Dataset, String)> {
    match &data.dataset {
        Some(path) => Ok((load_csv(path, &data.label_col).with_context(|| format!("loading {}", path.display()))?, path.display().to_string())),
        None => Ok((breast_cancer(), "breast-cancer (bundled)".into())),
    }
}

fn profiles(arg: Option<ProfileArg>) -> Vec<NetProfile> {
    match arg {
        None => vec![NetProfile::LAN, NetProfile::WAN],
        Some(ProfileArg::Lan) => vec![NetProfile::LAN],
        Some(ProfileArg::Wan) => vec![NetProfile::WAN],
        Some(ProfileArg::None) => vec![],
    }
}

/// Estimated seconds per profile, taking the slower party.
fn estimates(meters: &[&Meter], profiles: &[NetProfile]) -> Value {
    let mut out = serde_json::Map::new();
    for p in profiles {
        let worst = meters.iter().map(|m| p.estimate_seconds(m)).fold(0.0, f64::max);
        out.insert(p.name.to_string(), json!(worst));
    }
    Value::Object(out)
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn to_json(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn traffic_report(t: &Traffic, profiles: &[NetProfile]) -> Value {
    let training = {
        let mut m = Meter::default();
        t.per_tree.iter().for_each(|x| m.add(x));
        m
    };
    json!({
        "total": t.total,
        "training": training,
        "prediction": t.prediction,
        "per_tree": t.per_tree.iter().zip(&t.tree_seconds).map(|(m, s)| json!({
            "seconds": s,
            "rounds": m.rounds,
            "bits": m.bits,
            "bytes": m.bytes,
            "estimated_seconds": estimates(&[m], profiles),
        })).collect::<Vec<_>>(),
        "dealer": t.dealer,
        "estimated_seconds": {
            "training": estimates(&[&training], profiles),
            "prediction": estimates(&[&t.prediction], profiles),
            "total": estimates(&[&t.total], profiles),
        },
    })
}

struct Trained {
    result: RunResult,
    train: Dataset,
    test: Dataset,
    seconds: f64,
    source: String,
    features: usize,
    p0_features: usize,
}

fn train_once(data: &DataArgs, cfg: &TrainConfig, mode: Mode) -> Result<Trained> {
    let (ds, source) = load(data)?;
    let split = VerticalSplit::new(ds.n_features(), data.split_cols)?;
    let (train, test) = split_train_test(&ds, TRAIN_RATIO, cfg.seed);
    let started = Instant::now();
    let result = pipeline::run(&train, &test, &split, cfg, mode)?;
    Ok(Trained { result, seconds: started.elapsed().as_secs_f64(), source, features: ds.n_features(), p0_features: split.p0_features, train, test })
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.model.config()?;
    let mode = Mode::from(a.model.mode);
    let t = train_once(&a.data, &cfg, mode)?;
    let profiles = profiles(a.model.net_profile);
    let r = &t.result;
    let budget = cfg.validate(t.train.len())?;
    let report = json!({
        "schema": REPORT_SCHEMA,
        "command": "train",
        "mode": mode.name(),
        "config": cfg,
        "gain_shift": budget.gain_shift,
        "dataset": {
            "source": t.source,
            "label_col": a.data.label_col,
            "features": t.features,
            "p0_features": t.p0_features,
            "train_rows": t.train.len(),
            "test_rows": t.test.len(),
            "train_ratio": TRAIN_RATIO,
        },
        "accuracy": {
            "train": accuracy(&r.train_margins, &t.train.labels),
            "test": accuracy(&r.test_margins, &t.test.labels),
        },
        "timing": {
            "total_seconds": t.seconds,
            "per_tree_seconds": r.traffic.as_ref().map(|tr| tr[0].tree_seconds.clone()),
        },
        "traffic": r.traffic.as_ref().map(|tr| tr.iter().map(|x| traffic_report(x, &profiles)).collect::<Vec<_>>()),
    });
    if let Some(dir) = &a.out {
        emit(Some(dir), "model.json", &to_json(&r.model)?)?;
        if let Some(pm) = &r.party_models {
            emit(Some(dir), "party0.json", &to_json(&pm[0])?)?;
            emit(Some(dir), "party1.json", &to_json(&pm[1])?)?;
        }
    }
    emit(a.out.as_deref(), "report.json", &to_json(&report)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn predict(a: PredictArgs) -> Result<()> {
    let (ds, source) = load(&a.data)?;
    let (margins, traffic) = match (&a.model, &a.party_models) {
        (Some(path), None) => {
            let model: PlainModel = read_json(path)?;
            if model.layout.features != ds.n_features() {
                bail!("model expects {} features, dataset has {}", model.layout.features, ds.n_features());
            }
            (ds.rows.iter().map(|r| model.margin(r)).collect::<Vec<_>>(), None)
        }
        (None, Some(paths)) => {
            let m0: PartyModel = read_json(&paths[0])?;
            let m1: PartyModel = read_json(&paths[1])?;
            let (margins, meters) = pipeline::predict_secure([&m0, &m1], &ds, a.seed)?;
            (margins, Some(meters))
        }
        _ => bail!("pass either --model or --party-models"),
    };
    let report = json!({
        "schema": REPORT_SCHEMA,
        "command": "predict",
        "dataset": { "source": source, "rows": ds.len() },
        "accuracy": accuracy(&margins, &ds.labels),
        "predictions": margins.iter().map(|&m| (m >= 0.0) as u8).collect::<Vec<_>>(),
        "margins": margins,
        "traffic": traffic,
        "estimated_seconds": traffic.as_ref().map(|m| estimates(&[&m[0], &m[1]], &profiles(None))),
    });
    emit(a.out.as_deref(), "predictions.json", &to_json(&report)?)
}

fn bench_agg(a: BenchAggArgs) -> Result<bool> {
    let ring = RingConfig::new(a.ring_bits, a.frac_bits)?;
    let b = checks::bench_agg(ring, a.elements, a.seed)?;
    let ok = b.matches_formula();
    let report = json!({
        "schema": REPORT_SCHEMA,
        "command": "bench-agg",
        "ring": ring,
        "result": b,
        "matches_formula": ok,
        "estimated_seconds": estimates(&[&b.meter], &profiles(None)),
    });
    emit(a.out.as_deref(), "bench-agg.json", &to_json(&report)?)?;
    Ok(ok)
}

fn bench_micro(a: BenchMicroArgs) -> Result<bool> {
    let ring = RingConfig::DEFAULT;
    let l = ring.bits as u64;
    let sig = checks::bench_sigmoid(ring, a.segments, a.inputs, a.seed)?;
    let gain = checks::bench_gain(ring, a.inputs, a.samples, a.seed)?;
    let agg = checks::bench_agg(ring, a.inputs, a.seed)?;
    let leaf = checks::leaf_range(ring, a.segments, a.inputs, a.seed)?;
    let sig_ok = sig.meter.rounds == 1 && sig.meter.bits == sig.formula_bits && sig.table_mismatches == 0;
    let gain_ok = gain.meter.rounds <= 5 && gain.meter.bits <= 9 * l * a.inputs as u64 && gain.fixed_mismatches == 0 && gain.sign_violations == 0;
    let ok = sig_ok && gain_ok && agg.matches_formula() && leaf.passed();
    let report = json!({
        "schema": REPORT_SCHEMA,
        "command": "bench-micro",
        "sigmoid": {
            "result": sig,
            "rounds": sig.meter.rounds,
            "bits_per_input": sig.meter.bits as f64 / a.inputs as f64,
            "formula_bits_per_input": a.segments as u64 * l,
            "ok": sig_ok,
        },
        "gain": {
            "result": gain,
            "rounds": gain.meter.rounds,
            "bits_per_candidate": gain.meter.bits as f64 / a.inputs as f64,
            "bound_bits_per_candidate": 9 * l,
            "ok": gain_ok,
        },
        "aggregation": { "result": agg, "ok": agg.matches_formula() },
        "leaf_weight": leaf,
        "ok": ok,
    });
    emit(a.out.as_deref(), "bench-micro.json", &to_json(&report)?)?;
    Ok(ok)
}

fn sweep(a: SweepArgs) -> Result<()> {
    if a.from == 0 || a.from > a.to {
        bail!("segment range must satisfy 1 <= from <= to");
    }
    let mode = Mode::from(a.model.mode);
    let mut csv = String::from("segments,accuracy\n");
    for n in a.from..=a.to {
        let cfg = TrainConfig { segments: n, ..a.model.config()? };
        let t = train_once(&a.data, &cfg, mode)?;
        let acc = accuracy(&t.result.test_margins, &t.test.labels);
        eprintln!("segments {n}: {acc:.2}% ({:.1} s)", t.seconds);
        csv.push_str(&format!("{n},{acc:.4}\n"));
    }
    emit(a.out.as_deref(), "sweep.csv", csv.trim_end())
}

fn selftest(a: SelftestArgs) -> Result<bool> {
    let results: Vec<Check> = checks::selftest(a.seed)?;
    for c in &results {
        eprintln!("{} {} ({} cases, {} mismatches, {:.2} s)", if c.passed() { "PASS" } else { "FAIL" }, c.name, c.cases, c.mismatches, c.seconds);
    }
    let ok = results.iter().all(Check::passed);
    let report = json!({ "schema": REPORT_SCHEMA, "command": "selftest", "checks": results, "ok": ok });
    emit(a.out.as_deref(), "selftest.json", &to_json(&report)?)?;
    Ok(ok)
}
