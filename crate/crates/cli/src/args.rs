use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graph2graph::data::{Split, SyntheticKind};
use graph2graph::model::{ContextMode, EdgeKeys, EncoderMode, ModelConfig};
use graph2graph::train::{Ablation, Task};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "g2g", version, about = "Graph-to-graph learning experiments")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Replays a `run.json` written by an earlier command.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory receiving the command's outputs.
    #[arg(long = "out-dir", visible_alias = "out", global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic corpus or import a TU dataset.
    GenData(GenDataArgs),
    /// Train a model and write its checkpoint and metrics.
    Train(TrainArgs),
    /// Export latent vectors of an autoencoder checkpoint.
    Encode(EncodeArgs),
    /// Classify from latents with few labels.
    ClassifyLimited(ClassifyArgs),
    /// Decode graphs and dump edge probabilities.
    Predict(PredictArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Encode(_) => "encode",
            Command::ClassifyLimited(_) => "classify-limited",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    PlantedClique,
    TwoClass,
}

impl From<KindArg> for SyntheticKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::PlantedClique => SyntheticKind::PlantedClique,
            KindArg::TwoClass => SyntheticKind::TwoClass,
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "planted-clique")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 8)]
    pub n_min: usize,
    #[arg(long, default_value_t = 14)]
    pub n_max: usize,
    #[arg(long, default_value_t = 4)]
    pub clique_min: usize,
    #[arg(long, default_value_t = 6)]
    pub clique_max: usize,
    #[arg(long, default_value_t = 0.15)]
    pub edge_prob: f64,
    /// Train, validation and test shares.
    #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.2, 0.2])]
    pub split: Vec<f64>,
    /// Import a TU-layout directory instead of generating.
    #[arg(long, value_name = "DIR")]
    pub from_tu: Option<PathBuf>,
    /// Dataset name inside the TU directory; detected when omitted.
    #[arg(long)]
    pub tu_name: Option<String>,
    /// Drop graphs with more nodes than this.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Drop graphs whose maximum clique is smaller than this.
    #[arg(long)]
    pub min_clique: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    MaxClique,
    Autoencoder,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::MaxClique => Task::MaxClique,
            TaskArg::Autoencoder => Task::Autoencoder,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblateArg {
    NodeAttn,
    EdgeAttn,
}

impl From<AblateArg> for Ablation {
    fn from(a: AblateArg) -> Self {
        match a {
            AblateArg::NodeAttn => Ablation::NodeAttn,
            AblateArg::EdgeAttn => Ablation::EdgeAttn,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionArg {
    Fixed,
    Learned,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKeysArg {
    Row,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "max-clique")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.003)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Focal loss exponent.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Context inputs to switch off.
    #[arg(long, value_enum)]
    pub ablate: Vec<AblateArg>,
    /// Attention used at both decoder levels (max-clique task).
    #[arg(long, value_enum, default_value = "fixed")]
    pub attention: AttentionArg,
    #[arg(long, value_enum, default_value = "row")]
    pub edge_keys: EdgeKeysArg,
    /// Padded node count; the dataset's largest graph when omitted.
    #[arg(long)]
    pub width: Option<usize>,
    /// Train the full model and each single ablation side by side.
    #[arg(long)]
    pub ablation_study: bool,
}

impl TrainArgs {
    pub fn model_config(&self, width: usize, seed: u64) -> ModelConfig {
        let task: Task = self.task.into();
        let mut c = task.model_config(width);
        c.seed = seed;
        if task == Task::MaxClique {
            let mode = match self.attention {
                AttentionArg::Fixed => ContextMode::Fixed,
                AttentionArg::Learned => ContextMode::Learned,
            };
            c.node_context = mode;
            c.edge_context = mode;
            c.encoder = EncoderMode::Bidirectional;
        }
        c.edge_keys = match self.edge_keys {
            EdgeKeysArg::Row => EdgeKeys::Row,
            EdgeKeysArg::All => EdgeKeys::All,
        };
        for &a in &self.ablate {
            Ablation::from(a).apply(&mut c);
        }
        c
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Autoencoder checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyArgs {
    /// Latents CSV written by encode.
    #[arg(long, value_name = "FILE")]
    pub latents: PathBuf,
    /// Shares of the labelled training split to use.
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.0025, 0.005, 0.01, 0.05, 0.1, 1.0])]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.003)]
    pub lr: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// JSON-lines graphs to decode.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Never emit edges missing from the input.
    #[arg(long)]
    pub mask_input: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Task of the checkpoint; inferred from its encoder when omitted.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Let max-clique outputs contain edges absent from the input.
    #[arg(long)]
    pub no_mask: bool,
}
