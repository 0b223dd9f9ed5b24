use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{DataSource, ExperimentConfig};
use super::plot::render_svg;
use super::{EXIT_NUMERIC, EXIT_OK};
use crate::daal::LineSegmentSet;
use crate::data::{self, LabeledDataset};
use crate::error::{Error, Result};
use crate::gradcheck::{self, Suite, TOLERANCE};
use crate::metrics::{self, EvalReport};
use crate::model::{self, EpochRecord, LossKind, NetworkState, TrainOutcome};

/// What a command hands back to the dispatcher.
#[derive(Debug, Clone)]
pub struct Output {
    pub json: Value,
    pub text: String,
    pub code: i32,
}

impl Output {
    fn ok(json: Value, text: String) -> Self {
        Output { json, text, code: EXIT_OK }
    }
}

const NETWORK_FILE: &str = "network.json";
const SEGMENTS_FILE: &str = "segments.json";
const HISTORY_FILE: &str = "history.json";
const TEST_FILE: &str = "test.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Resolved config and its hash, the header of every output document.
fn echo(cfg: &ExperimentConfig) -> (Value, String) {
    (cfg.to_value(), cfg.hash())
}

pub fn generate(cfg: &ExperimentConfig) -> Result<Output> {
    let DataSource::Synthetic(_) = &cfg.data else {
        return Err(Error::Config("generate needs a synthetic data source".into()));
    };
    let ds = cfg.load_data()?;
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("data.csv");
    data::save_features_csv(&ds, &path)?;
    let (config, config_hash) = echo(cfg);
    let json = json!({
        "config": config,
        "config_hash": config_hash,
        "path": path,
        "rows": ds.len(),
        "classes": ds.num_classes,
        "dim": ds.dim(),
    });
    let text = format!(
        "wrote {} rows, {} classes, {} features to {}\n",
        ds.len(),
        ds.num_classes,
        ds.dim(),
        path.display()
    );
    Ok(Output::ok(json, text))
}

struct Trained {
    outcome: TrainOutcome,
    test: LabeledDataset,
}

fn run_training(cfg: &ExperimentConfig) -> Result<Trained> {
    let ds = cfg.load_data()?;
    let (train_set, test) = data::stratified_split(&ds, cfg.test_fraction, cfg.seed)?;
    let spec = cfg.network.spec(ds.dim(), ds.num_classes);
    let outcome = model::train(&spec, &train_set, &cfg.train)?;
    Ok(Trained { outcome, test })
}

fn evaluate(cfg: &ExperimentConfig, network: &NetworkState, ds: &LabeledDataset) -> Result<EvalReport> {
    let embeddings = network.embed(&ds.features)?;
    metrics::evaluate(&embeddings, &ds.labels, &cfg.eval, cfg.seed, &cfg.hash())
}

pub fn train(cfg: &ExperimentConfig) -> Result<Output> {
    let Trained { outcome, test } = run_training(cfg)?;
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    write_text(&dir.join(NETWORK_FILE), &(outcome.network.to_json()? + "\n"))?;
    let segments_path = dir.join(SEGMENTS_FILE);
    match &outcome.segments {
        Some(segs) => write_text(&segments_path, &(segs.to_json()? + "\n"))?,
        // A stale file from an earlier DAAL run would be picked up by eval and plot.
        None if segments_path.exists() => std::fs::remove_file(&segments_path).map_err(|e| Error::io(&segments_path, e))?,
        None => {}
    }
    data::save_features_csv(&test, dir.join(TEST_FILE))?;
    let (config, config_hash) = echo(cfg);
    let history = json!({
        "config": config,
        "config_hash": config_hash,
        "network": outcome.network.spec,
        "history": outcome.history,
    });
    write_json(&dir.join(HISTORY_FILE), &history)?;

    let mut artifacts = vec![NETWORK_FILE, HISTORY_FILE, TEST_FILE];
    if outcome.segments.is_some() {
        artifacts.push(SEGMENTS_FILE);
    }
    let last: Option<&EpochRecord> = outcome.history.last();
    let json = json!({
        "config": config,
        "config_hash": config_hash,
        "out_dir": dir,
        "artifacts": artifacts,
        "final": last,
    });
    let mut text = format!("trained {} for {} epochs\n", cfg.train.loss.name(), outcome.history.len());
    if let Some(r) = last {
        writeln!(text, "final total {:.6}  classification {:.6}  auxiliary {:.6}", r.total, r.softmax, r.daal).unwrap();
    }
    writeln!(text, "artifacts in {}: {}", dir.display(), artifacts.join(", ")).unwrap();
    Ok(Output::ok(json, text))
}

fn load_checkpoint(dir: &Path) -> Result<NetworkState> {
    NetworkState::from_json(&read_text(&dir.join(NETWORK_FILE))?)
}

/// Loads a feature file and checks it against the checkpoint's shape.
fn load_matching(network: &NetworkState, path: &Path) -> Result<LabeledDataset> {
    let ds = data::load_features_csv(path, Some(network.spec.num_classes))?;
    if ds.dim() != network.spec.input_dim {
        return Err(Error::Config(format!(
            "checkpoint expects {} input features, {} has {}",
            network.spec.input_dim,
            path.display(),
            ds.dim()
        )));
    }
    Ok(ds)
}

fn checkpoint_paths(cfg: &ExperimentConfig, checkpoint: Option<&Path>, data: Option<&Path>) -> (PathBuf, PathBuf) {
    let dir = checkpoint.map_or_else(|| cfg.out_dir.clone(), Path::to_path_buf);
    let data = data.map_or_else(|| dir.join(TEST_FILE), Path::to_path_buf);
    (dir, data)
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<Output> {
    let (dir, data_path) = checkpoint_paths(cfg, checkpoint, data);
    let network = load_checkpoint(&dir)?;
    let ds = load_matching(&network, &data_path)?;
    let report = evaluate(cfg, &network, &ds)?;
    let (config, config_hash) = echo(cfg);
    let json = json!({
        "config": config,
        "config_hash": config_hash,
        "checkpoint": dir,
        "data": data_path,
        "report": report,
    });
    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("eval.json"), &json)?;
    let text = metrics::render_table(&[(cfg.train.loss.name(), &report)]);
    Ok(Output::ok(json, text))
}

pub fn gradcheck(loss: &str, seed: u64, points: usize) -> Result<Output> {
    if points == 0 {
        return Err(Error::Config("gradcheck needs at least one point".into()));
    }
    let suites = if loss == "all" { Suite::ALL.to_vec() } else { vec![Suite::from_name(loss)?] };
    let results: Vec<_> = suites.iter().map(|&s| gradcheck::run_suite(s, seed, points)).collect();
    let passed = results.iter().all(|r| r.passed);
    let json = json!({
        "config": { "loss": loss, "seed": seed, "points": points, "tolerance": TOLERANCE },
        "results": results,
        "passed": passed,
    });
    let mut text = String::new();
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        writeln!(text, "{verdict} {:<20} max rel err {:.3e} over {} points", r.loss, r.max_rel_error, r.points).unwrap();
    }
    Ok(Output {
        json,
        text,
        code: if passed { EXIT_OK } else { EXIT_NUMERIC },
    })
}

#[derive(Debug, Clone, Serialize)]
struct Scores {
    nmi: f64,
    recall_at: BTreeMap<usize, f64>,
    recall_average: f64,
}

impl Scores {
    fn of(r: &EvalReport) -> Self {
        Scores {
            nmi: r.nmi,
            recall_at: r.recall_at.clone(),
            recall_average: r.recall_average,
        }
    }

    fn minus(&self, base: &Scores) -> Scores {
        Scores {
            nmi: self.nmi - base.nmi,
            recall_at: self.recall_at.iter().map(|(k, v)| (*k, v - base.recall_at[k])).collect(),
            recall_average: self.recall_average - base.recall_average,
        }
    }

    fn mean(all: &[Scores]) -> Scores {
        let n = all.len() as f64;
        Scores {
            nmi: all.iter().map(|s| s.nmi).sum::<f64>() / n,
            recall_at: all[0]
                .recall_at
                .keys()
                .map(|k| (*k, all.iter().map(|s| s.recall_at[k]).sum::<f64>() / n))
                .collect(),
            recall_average: all.iter().map(|s| s.recall_average).sum::<f64>() / n,
        }
    }

    fn as_report(&self) -> EvalReport {
        EvalReport {
            nmi: self.nmi,
            recall_at: self.recall_at.clone(),
            recall_average: self.recall_average,
            seed: 0,
            config_fingerprint: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ArmResult {
    loss: LossKind,
    report: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
struct SeedRow {
    seed: u64,
    arms: Vec<ArmResult>,
    /// Each later arm minus the first.
    deltas: Vec<Scores>,
}

#[derive(Debug, Clone, Serialize)]
struct ArmSummary {
    loss: LossKind,
    mean: Scores,
    mean_delta: Option<Scores>,
    /// Seeds where this arm's NMI is at least the first arm's.
    nmi_not_worse: usize,
}

/// Paired runs: per seed, every arm sees the same data, split and initialization.
pub fn compare(cfg: &ExperimentConfig) -> Result<Output> {
    let arms = &cfg.compare.arms;
    let mut rows = Vec::with_capacity(cfg.compare.seeds.len());
    for &seed in &cfg.compare.seeds {
        let mut results = Vec::with_capacity(arms.len());
        for &loss in arms {
            let mut run = cfg.clone();
            run.set_seed(seed);
            run.train.loss = loss;
            let Trained { outcome, test } = run_training(&run)?;
            results.push(ArmResult { loss, report: evaluate(&run, &outcome.network, &test)? });
        }
        let base = Scores::of(&results[0].report);
        let deltas = results[1..].iter().map(|a| Scores::of(&a.report).minus(&base)).collect();
        rows.push(SeedRow { seed, arms: results, deltas });
    }
    let summaries: Vec<ArmSummary> = arms
        .iter()
        .enumerate()
        .map(|(i, &loss)| {
            let scores: Vec<Scores> = rows.iter().map(|r| Scores::of(&r.arms[i].report)).collect();
            let (mean_delta, nmi_not_worse) = if i == 0 {
                (None, rows.len())
            } else {
                let deltas: Vec<Scores> = rows.iter().map(|r| r.deltas[i - 1].clone()).collect();
                (Some(Scores::mean(&deltas)), deltas.iter().filter(|d| d.nmi >= 0.0).count())
            };
            ArmSummary { loss, mean: Scores::mean(&scores), mean_delta, nmi_not_worse }
        })
        .collect();

    let (config, config_hash) = echo(cfg);
    let json = json!({
        "config": config,
        "config_hash": config_hash,
        "rows": rows,
        "summary": summaries,
    });
    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("compare.json"), &json)?;

    let mut table_rows: Vec<(String, EvalReport)> = Vec::new();
    for row in &rows {
        for arm in &row.arms {
            table_rows.push((format!("seed {} {}", row.seed, arm.loss.name()), arm.report.clone()));
        }
    }
    for s in &summaries {
        table_rows.push((format!("mean {}", s.loss.name()), s.mean.as_report()));
    }
    for s in summaries.iter().skip(1) {
        if let Some(d) = &s.mean_delta {
            table_rows.push((format!("delta {}", s.loss.name()), d.as_report()));
        }
    }
    let borrowed: Vec<(&str, &EvalReport)> = table_rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let mut text = metrics::render_table(&borrowed);
    for s in summaries.iter().skip(1) {
        writeln!(
            text,
            "{} NMI >= {} in {}/{} seeds",
            s.loss.name(),
            arms[0].name(),
            s.nmi_not_worse,
            rows.len()
        )
        .unwrap();
    }
    Ok(Output::ok(json, text))
}

pub fn plot(cfg: &ExperimentConfig, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<Output> {
    let (dir, data_path) = checkpoint_paths(cfg, checkpoint, data);
    let network = load_checkpoint(&dir)?;
    if network.spec.embedding_dim != 2 {
        return Err(Error::Config(format!(
            "plot needs a 2-D embedding but the checkpoint has embedding_dim = {}; retrain with network.embedding_dim = 2",
            network.spec.embedding_dim
        )));
    }
    let ds = load_matching(&network, &data_path)?;
    let segments_path = dir.join(SEGMENTS_FILE);
    let segments = if segments_path.exists() {
        let set = LineSegmentSet::from_json(&read_text(&segments_path)?)?;
        if set.dim() != 2 || set.num_classes() != network.spec.num_classes {
            return Err(Error::Config("segments do not match the checkpoint".into()));
        }
        Some(set)
    } else {
        None
    };
    let embeddings = network.embed(&ds.features)?;
    let svg = render_svg(&embeddings, &ds.labels, segments.as_ref());
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("plot.svg");
    write_text(&path, &svg)?;
    let (config, config_hash) = echo(cfg);
    let json = json!({
        "config": config,
        "config_hash": config_hash,
        "path": path,
        "points": ds.len(),
        "segments": segments.as_ref().map_or(0, |s| s.num_classes()),
    });
    Ok(Output::ok(json, format!("wrote {}\n", path.display())))
}
