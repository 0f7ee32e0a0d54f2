use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use graph2graph::data::{
    derive_seed, detect_tu_name, generate, limited_label_subsets, parse_tu, Dataset, Split, SyntheticConfig,
    MANIFEST_FILE, ORACLE_MAX_NODES,
};
use graph2graph::graph::read_jsonl;
use graph2graph::metrics::{write_metrics_csv, EpisodeMetrics};
use graph2graph::model::{load_checkpoint, save_checkpoint, EncoderMode, G2GModel, ModelConfig};
use graph2graph::train::{evaluate, train, whole_input_baseline, EvalReport, Task, TrainConfig, TrainOutcome};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::args::{
    AblateArg, ClassifyArgs, Command, EncodeArgs, EvalArgs, GenDataArgs, PredictArgs, TrainArgs,
};
use crate::classifier::{train_classifier, ClassifierConfig};

pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const LATENTS_FILE: &str = "latents.csv";
pub const LIMITED_FILE: &str = "limited_labels.csv";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const EVAL_FILE: &str = "eval.json";

/// Everything needed to rerun a command: written as `run.json` next to its
/// outputs and accepted back through `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub command: Command,
    /// SHA-256 of each input file, by role.
    pub inputs: BTreeMap<String, String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
}

/// Runs `command` and records it in `out/run.json`.
pub fn execute(command: &Command, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let inputs = match command {
        Command::GenData(a) => gen_data(a, seed, out)?,
        Command::Train(a) => train_cmd(a, seed, out)?,
        Command::Encode(a) => encode(a, out)?,
        Command::ClassifyLimited(a) => classify_limited(a, seed, out)?,
        Command::Predict(a) => predict(a, out)?,
        Command::Eval(a) => eval(a, out)?,
    };
    let manifest = RunManifest {
        tool: "g2g".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        command: command.clone(),
        inputs,
    };
    write_json(&out.join(RUN_FILE), &manifest)
}

type Inputs = BTreeMap<String, String>;

fn gen_data(a: &GenDataArgs, seed: u64, out: &Path) -> Result<Inputs> {
    ensure!(a.split.len() == 3, "--split needs three shares, got {}", a.split.len());
    let fractions = [a.split[0], a.split[1], a.split[2]];
    let mut inputs = Inputs::new();
    let mut ds = match &a.from_tu {
        Some(dir) => {
            let name = match &a.tu_name {
                Some(n) => n.clone(),
                None => detect_tu_name(dir)?,
            };
            for suffix in ["A", "graph_indicator", "graph_labels"] {
                let p = dir.join(format!("{name}_{suffix}.txt"));
                if p.exists() {
                    inputs.insert(format!("tu_{suffix}"), file_digest(&p)?);
                }
            }
            parse_tu(dir, &name)?
        }
        None => {
            let cfg = SyntheticConfig {
                kind: a.kind.into(),
                count: a.count,
                n_min: a.n_min,
                n_max: a.n_max,
                clique_min: a.clique_min,
                clique_max: a.clique_max,
                edge_prob: a.edge_prob,
                seed,
            };
            generate(&cfg)?
        }
    };
    if let Some(cap) = a.max_nodes {
        let removed = ds.cap_nodes(cap)?;
        log::info!("dropped {removed} graphs above {cap} nodes");
    }
    if let Some(min) = a.min_clique {
        let removed = ds.exclude_small_cliques(min)?;
        log::info!("dropped {removed} graphs with maximum clique below {min}");
    }
    if ds.targets.is_none() {
        ensure!(
            ds.width() <= ORACLE_MAX_NODES,
            "graphs have up to {} nodes; cap them with --max-nodes {ORACLE_MAX_NODES} or less",
            ds.width()
        );
        ds = ds.with_oracle_targets()?;
    }
    ds.split(fractions, derive_seed(seed, 0, 1))?;
    ds.save(out)?;
    log::info!("wrote {} graphs of width {} to {}", ds.len(), ds.width(), out.display());
    Ok(inputs)
}

fn load_dataset(dir: &Path, inputs: &mut Inputs) -> Result<Dataset> {
    inputs.insert("dataset_manifest".into(), file_digest(&dir.join(MANIFEST_FILE))?);
    Dataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

pub fn infer_task(config: &ModelConfig) -> Task {
    match config.encoder {
        EncoderMode::ForwardOnly => Task::Autoencoder,
        EncoderMode::Bidirectional => Task::MaxClique,
    }
}

#[derive(Serialize)]
struct SplitSummary {
    loss: f64,
    accuracy: f64,
    edge_iou: f64,
    any_max_clique_accuracy: Option<f64>,
}

impl From<&EvalReport> for SplitSummary {
    fn from(r: &EvalReport) -> Self {
        SplitSummary {
            loss: r.metrics.loss,
            accuracy: r.metrics.accuracy,
            edge_iou: r.metrics.edge_iou,
            any_max_clique_accuracy: r.any_max_clique_accuracy,
        }
    }
}

fn train_one(ds: &Dataset, config: ModelConfig, tcfg: &TrainConfig, out: &Path) -> Result<(TrainOutcome, EvalReport)> {
    fs::create_dir_all(out)?;
    let outcome = train(ds, config, tcfg)?;
    save_checkpoint(&outcome.model, out.join(CHECKPOINT_FILE))?;
    let mut rows = outcome.metric_rows();
    let test = evaluate(&outcome.model, ds, Split::Test, tcfg)?;
    rows.push(EpisodeMetrics {
        epoch: outcome.best_epoch,
        ..test.metrics.clone()
    });
    write_metrics_csv(fs::File::create(out.join(METRICS_FILE))?, &rows)?;
    let baseline = match tcfg.task {
        Task::MaxClique => {
            let (accuracy, edge_iou) = whole_input_baseline(ds, Split::Test)?;
            Some(json!({ "accuracy": accuracy, "edge_iou": edge_iou }))
        }
        Task::Autoencoder => None,
    };
    let summary = json!({
        "task": tcfg.task,
        "best_epoch": outcome.best_epoch,
        "parameters": outcome.model.params().num_scalars(),
        "model": outcome.model.config(),
        "model_digest": outcome.model.config().digest(),
        "train": tcfg,
        "test": SplitSummary::from(&test),
        "whole_input_baseline": baseline,
    });
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok((outcome, test))
}

fn train_cmd(a: &TrainArgs, seed: u64, out: &Path) -> Result<Inputs> {
    let mut inputs = Inputs::new();
    let ds = load_dataset(&a.data, &mut inputs)?;
    let width = a.width.unwrap_or(ds.width()).max(2);
    let task: Task = a.task.into();
    let tcfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        gamma: a.gamma,
        seed: derive_seed(seed, 0, 2),
        task,
        threshold: a.threshold,
        ..TrainConfig::default()
    };
    let model_seed = derive_seed(seed, 0, 3);
    if !a.ablation_study {
        train_one(&ds, a.model_config(width, model_seed), &tcfg, out)?;
        return Ok(inputs);
    }

    let variants: [(&str, &[AblateArg]); 3] = [
        ("full", &[]),
        ("no_node_attn", &[AblateArg::NodeAttn]),
        ("no_edge_attn", &[AblateArg::EdgeAttn]),
    ];
    let mut table = csv::Writer::from_path(out.join(ABLATION_FILE))?;
    table.write_record([
        "variant",
        "node_context",
        "edge_context",
        "parameters",
        "best_epoch",
        "test_loss",
        "test_accuracy",
        "test_edge_iou",
        "test_any_max_clique_accuracy",
    ])?;
    for (name, extra) in variants {
        let mut args = a.clone();
        args.ablate.extend_from_slice(extra);
        args.ablate.sort();
        args.ablate.dedup();
        let config = args.model_config(width, model_seed);
        let (outcome, test) = train_one(&ds, config.clone(), &tcfg, &out.join(name))?;
        let ctx = |c| serde_json::to_value(c).map(|v| v.as_str().unwrap_or_default().to_string());
        table.write_record([
            name.to_string(),
            ctx(config.node_context)?,
            ctx(config.edge_context)?,
            outcome.model.params().num_scalars().to_string(),
            outcome.best_epoch.to_string(),
            test.metrics.loss.to_string(),
            test.metrics.accuracy.to_string(),
            test.metrics.edge_iou.to_string(),
            test.any_max_clique_accuracy.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    table.flush()?;
    Ok(inputs)
}

fn load_model(path: &Path, inputs: &mut Inputs) -> Result<G2GModel> {
    inputs.insert("checkpoint".into(), file_digest(path)?);
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn encode(a: &EncodeArgs, out: &Path) -> Result<Inputs> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.checkpoint, &mut inputs)?;
    ensure!(
        model.config().encoder == EncoderMode::ForwardOnly,
        "{} is not an autoencoder checkpoint",
        a.checkpoint.display()
    );
    let ds = load_dataset(&a.data, &mut inputs)?;
    let dim = model.config().latent_dim();
    let mut w = csv::Writer::from_path(out.join(LATENTS_FILE))?;
    let mut header = vec!["graph_id".to_string(), "split".into(), "label".into()];
    header.extend((0..dim).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    for (i, g) in ds.graphs.iter().enumerate() {
        let z = model.encode_latent(g)?;
        let split = ds.splits.as_ref().and_then(|s| s.of(i)).map_or("none", Split::as_str);
        let mut row = vec![i.to_string(), split.to_string(), g.label().map_or(String::new(), |l| l.to_string())];
        row.extend(z.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(inputs)
}

/// Latent rows of one split.
#[derive(Default)]
struct Rows {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

impl Rows {
    fn refs(&self) -> Vec<&[f64]> {
        self.x.iter().map(Vec::as_slice).collect()
    }
}

fn read_latents(path: &Path) -> Result<(Rows, Rows, Rows, usize)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut raw = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        ensure!(rec.len() > 3, "latents row has no features");
        let split = rec[1].to_string();
        let label: i64 = rec[2]
            .parse()
            .map_err(|_| anyhow!("graph {} has no integer label", &rec[0]))?;
        let x = rec.iter().skip(3).map(str::parse).collect::<Result<Vec<f64>, _>>()?;
        raw.push((split, label, x));
    }
    let classes: Vec<i64> = {
        let mut c: Vec<i64> = raw.iter().map(|r| r.1).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let (mut train, mut val, mut test) = (Rows::default(), Rows::default(), Rows::default());
    for (split, label, x) in raw {
        let y = classes.binary_search(&label).expect("label was collected");
        let dest = match split.as_str() {
            "train" => &mut train,
            "val" => &mut val,
            "test" => &mut test,
            _ => continue,
        };
        dest.x.push(x);
        dest.y.push(y);
    }
    Ok((train, val, test, classes.len()))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn classify_limited(a: &ClassifyArgs, seed: u64, out: &Path) -> Result<Inputs> {
    let mut inputs = Inputs::new();
    inputs.insert("latents".into(), file_digest(&a.latents)?);
    let (train, val, test, classes) = read_latents(&a.latents)?;
    ensure!(!train.x.is_empty(), "no training rows in {}", a.latents.display());
    ensure!(!test.x.is_empty(), "no test rows in {}", a.latents.display());

    let mut hist = vec![0usize; classes];
    train.y.iter().for_each(|&y| hist[y] += 1);
    let majority = (0..classes).max_by_key(|&c| (hist[c], std::cmp::Reverse(c))).unwrap_or(0);
    let majority_acc = test.y.iter().filter(|&&y| y == majority).count() as f64 / test.y.len() as f64;

    let subsets = limited_label_subsets(train.x.len(), &a.fractions, a.repeats, seed)?;
    let (train_x, test_x, val_x) = (train.refs(), test.refs(), val.refs());
    let mut w = csv::Writer::from_path(out.join(LIMITED_FILE))?;
    w.write_record([
        "fraction",
        "repeat",
        "seed",
        "train_size",
        "degenerate",
        "best_epoch",
        "accuracy",
        "accuracy_std",
        "majority_accuracy",
    ])?;
    let mut per_fraction: BTreeMap<usize, (f64, usize, usize, Vec<f64>)> = BTreeMap::new();
    for (k, sub) in subsets.iter().enumerate() {
        let xs: Vec<&[f64]> = sub.indices.iter().map(|&i| train_x[i]).collect();
        let ys: Vec<usize> = sub.indices.iter().map(|&i| train.y[i]).collect();
        let single = ys.iter().all(|&y| y == ys[0]);
        let (acc, best_epoch) = if single {
            let acc = test.y.iter().filter(|&&y| y == ys[0]).count() as f64 / test.y.len() as f64;
            (acc, 0)
        } else {
            let cfg = ClassifierConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                lr: a.lr,
                seed: sub.seed,
            };
            let (vx, vy) = if val_x.is_empty() { (&xs[..], &ys[..]) } else { (&val_x[..], &val.y[..]) };
            let fit = train_classifier((&xs, &ys), (vx, vy), classes, &cfg)?;
            (fit.head.accuracy(&test_x, &test.y)?, fit.best_epoch)
        };
        w.write_record([
            sub.fraction.to_string(),
            sub.repeat.to_string(),
            sub.seed.to_string(),
            xs.len().to_string(),
            single.to_string(),
            best_epoch.to_string(),
            acc.to_string(),
            String::new(),
            majority_acc.to_string(),
        ])?;
        let fi = k / a.repeats.max(1);
        let entry = per_fraction.entry(fi).or_insert((sub.fraction, xs.len(), 0, Vec::new()));
        entry.2 += single as usize;
        entry.3.push(acc);
    }
    for (fraction, size, degenerate, accs) in per_fraction.into_values() {
        let (mean, std) = mean_std(&accs);
        w.write_record([
            fraction.to_string(),
            "summary".into(),
            String::new(),
            size.to_string(),
            degenerate.to_string(),
            String::new(),
            mean.to_string(),
            std.to_string(),
            majority_acc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(inputs)
}

fn predict(a: &PredictArgs, out: &Path) -> Result<Inputs> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.checkpoint, &mut inputs)?;
    inputs.insert("input".into(), file_digest(&a.input)?);
    let file = fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let graphs = read_jsonl(BufReader::new(file))?;
    let mut entries = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        let p = model
            .run_model(g, a.threshold, a.mask_input)
            .with_context(|| format!("graph {i}"))?;
        let edges: Vec<[usize; 2]> = p.graph.edges().map(|(i, j)| [j, i]).collect();
        let probs: Vec<serde_json::Value> = p.probabilities.iter().map(|&(u, v, q)| json!([u, v, q])).collect();
        entries.push(json!({
            "index": i,
            "n": g.n(),
            "label": g.label(),
            "edges": edges,
            "probabilities": probs,
        }));
    }
    write_json(
        &out.join(PREDICTIONS_FILE),
        &json!({ "threshold": a.threshold, "mask_input": a.mask_input, "graphs": entries }),
    )?;
    Ok(inputs)
}

fn eval(a: &EvalArgs, out: &Path) -> Result<Inputs> {
    let mut inputs = Inputs::new();
    let model = load_model(&a.checkpoint, &mut inputs)?;
    let ds = load_dataset(&a.data, &mut inputs)?;
    let task = a.task.map_or_else(|| infer_task(model.config()), Task::from);
    let cfg = TrainConfig {
        task,
        threshold: a.threshold,
        mask_output: !a.no_mask,
        ..TrainConfig::default()
    };
    let split: Split = a.split.into();
    let report = evaluate(&model, &ds, split, &cfg)?;
    write_metrics_csv(fs::File::create(out.join(METRICS_FILE))?, std::slice::from_ref(&report.metrics))?;
    let baseline = match task {
        Task::MaxClique => Some(whole_input_baseline(&ds, split)?),
        Task::Autoencoder => None,
    };
    write_json(
        &out.join(EVAL_FILE),
        &json!({
            "split": split,
            "task": task,
            "graphs": report.predictions.len(),
            "metrics": SplitSummary::from(&report),
            "whole_input_baseline": baseline.map(|(accuracy, edge_iou)| json!({ "accuracy": accuracy, "edge_iou": edge_iou })),
        }),
    )?;
    Ok(inputs)
}

/// Resolves the command and seed from flags or a replayed manifest.
pub fn resolve(config: Option<&PathBuf>, command: Option<Command>, seed: Option<u64>) -> Result<(Command, u64)> {
    match (config, command) {
        (Some(_), Some(_)) => bail!("--config replays a recorded command; drop the subcommand"),
        (Some(path), None) => {
            let m = read_manifest(path)?;
            Ok((m.command, seed.unwrap_or(m.seed)))
        }
        (None, Some(c)) => Ok((c, seed.unwrap_or(0))),
        (None, None) => bail!("no command given; see --help"),
    }
}
