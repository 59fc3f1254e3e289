use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "euslm", version, about = "Monolingual encoder pretraining and evaluation toolkit")]
#[command(args_override_self = true)]
pub struct Cli {
    /// TOML file: top-level keys set global flags, `[command]` sections set that command's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 1 is the deterministic mode.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Artifact directory [default: euslm-out/<command>]
    #[arg(long, global = true, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Clean and merge raw corpus files.
    Ingest(IngestArgs),
    /// Per-source document, paragraph and token counts.
    Stats(StatsArgs),
    /// Document-level random partition.
    Split(SplitArgs),
    /// Train a unigram subword vocabulary.
    VocabTrain(VocabTrainArgs),
    /// Segment text with a vocabulary.
    Tokenize(TokenizeArgs),
    /// Mean pieces per word.
    Fertility(FertilityArgs),
    /// Generate masked LM and next-sentence examples.
    PretrainData(PretrainDataArgs),
    /// Pretrain an encoder.
    Pretrain(PretrainArgs),
    /// Compare backprop with finite differences on a tiny encoder.
    GradCheck(GradCheckArgs),
    /// Train a character language model.
    CharlmTrain(CharlmTrainArgs),
    /// Contextual string embeddings of tokenized sentences.
    Embed(EmbedArgs),
    /// Train a BiLSTM-CRF tagger.
    TagTrain(TagTrainArgs),
    /// Train a recurrent document classifier.
    ClassifyTrain(ClassifyTrainArgs),
    /// Fine-tune a pretrained encoder.
    Finetune(FinetuneArgs),
    /// Score a prediction file.
    Eval(EvalArgs),
    /// Average runs and tabulate results.
    Compare(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Stats(_) => "stats",
            Command::Split(_) => "split",
            Command::VocabTrain(_) => "vocab-train",
            Command::Tokenize(_) => "tokenize",
            Command::Fertility(_) => "fertility",
            Command::PretrainData(_) => "pretrain-data",
            Command::Pretrain(_) => "pretrain",
            Command::GradCheck(_) => "grad-check",
            Command::CharlmTrain(_) => "charlm-train",
            Command::Embed(_) => "embed",
            Command::TagTrain(_) => "tag-train",
            Command::ClassifyTrain(_) => "classify-train",
            Command::Finetune(_) => "finetune",
            Command::Eval(_) => "eval",
            Command::Compare(_) => "compare",
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    /// Raw text files, optionally tagged as `SOURCE=PATH`; untagged files use their file stem.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,

    /// Partition ratios summing to 1.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    pub ratios: Vec<f64>,

    /// Partition file names, one per ratio [default: train,dev,test for three ratios, else part0…].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VocabTrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,

    /// Final vocabulary size, specials included.
    #[arg(long, default_value_t = 50_000)]
    pub target_size: usize,

    /// Share of character occurrences the alphabet must cover.
    #[arg(long, default_value_t = 0.9995)]
    pub coverage: f64,

    #[arg(long, default_value_t = 16)]
    pub max_piece_len: usize,

    /// Share of pieces kept per pruning round.
    #[arg(long, default_value_t = 0.75)]
    pub shrink_factor: f64,

    /// EM iterations between pruning rounds.
    #[arg(long, default_value_t = 2)]
    pub em_iterations: usize,

    /// Seed candidate count [default: 10 × target size]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_size: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TokenizeArgs {
    #[arg(long)]
    pub vocab: PathBuf,

    /// Text file, one paragraph per line.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FertilityArgs {
    #[arg(long)]
    pub vocab: PathBuf,

    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleFormat {
    Jsonl,
    Binary,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PretrainDataArgs {
    #[arg(long)]
    pub corpus: PathBuf,

    #[arg(long)]
    pub vocab: PathBuf,

    /// Sequence-length phases as `len:fraction,…`.
    #[arg(long, default_value = "128:0.9,512:0.1")]
    pub seq_len: String,

    /// Total examples across phases.
    #[arg(long, default_value_t = 10_000)]
    pub examples: usize,

    /// Share of maskable tokens chosen as prediction targets.
    #[arg(long, default_value_t = 0.15)]
    pub mask_prob: f64,

    /// Whole-word masking.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub wwm: bool,

    #[arg(long, value_enum, default_value_t = ExampleFormat::Jsonl)]
    pub format: ExampleFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Desk-scale sizes.
    Toy,
    /// Reference sizes.
    Full,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PretrainArgs {
    /// Directory written by `pretrain-data`.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub vocab: PathBuf,

    /// Fills every size and optimizer flag not given explicitly.
    #[arg(long, value_enum, default_value_t = Preset::Toy)]
    pub preset: Preset,

    /// Transformer layers [toy 2, full 12]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,

    /// Hidden size [toy 64, full 768]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,

    /// Attention heads [toy 2, full 12]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,

    /// Feed-forward size [toy 256, full 3072]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<usize>,

    /// Position embeddings [toy 128, full 512]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_positions: Option<usize>,

    /// Dropout [0.1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,

    /// Peak learning rate [toy 1e-3, full 1e-4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,

    /// Warmup steps [toy 200, full 10000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_steps: Option<usize>,

    /// Training steps [toy 2000, full 1000000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,

    /// Sequences per step [toy 16, full 256]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,

    /// Decoupled weight decay [0.01]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,

    /// Save a checkpoint every this many steps; 0 saves only the final one.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 1)]
    pub layers: usize,

    #[arg(long, default_value_t = 8)]
    pub hidden: usize,

    #[arg(long, default_value_t = 2)]
    pub heads: usize,

    #[arg(long, default_value_t = 16)]
    pub intermediate: usize,

    #[arg(long, default_value_t = 20)]
    pub vocab_size: usize,

    /// Sequences in the random batch.
    #[arg(long, default_value_t = 2)]
    pub batch: usize,

    /// Length of each random sequence.
    #[arg(long, default_value_t = 8)]
    pub seq_len: usize,

    #[arg(long, default_value_t = 0.3)]
    pub init_std: f64,

    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Forward,
    Backward,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CharlmTrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,

    #[arg(long, value_enum)]
    pub direction: DirectionArg,

    #[arg(long, value_enum, default_value_t = Preset::Toy)]
    pub preset: Preset,

    /// LSTM size [toy 64, full 2048]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,

    /// Character embedding size [toy 32, full 100]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,

    /// Characters per truncated backpropagation chunk [toy 50, full 250]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<usize>,

    /// Parallel streams [toy 16, full 100]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,

    /// [toy 2, full 5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,

    /// Adam learning rate [3e-3]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,

    /// Characters rarer than this map to the unknown symbol.
    #[arg(long, default_value_t = 1)]
    pub min_char_count: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingArg {
    Mean,
    Min,
    Max,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbedArgs {
    #[arg(long)]
    pub forward: PathBuf,

    #[arg(long)]
    pub backward: PathBuf,

    /// Tokenized sentences, one per line, tokens separated by spaces.
    #[arg(long)]
    pub input: PathBuf,

    /// Pool each word over its earlier occurrences.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<PoolingArg>,
}

/// Word representation for `tag-train` and `classify-train`: either static
/// vectors or a forward/backward character LM pair.
#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbedderArgs {
    /// Static vectors in `count dim` text format.
    #[arg(long, conflicts_with_all = ["forward", "backward", "pooled"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,

    #[arg(long, requires = "backward")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<PathBuf>,

    #[arg(long, requires = "forward")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward: Option<PathBuf>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<PoolingArg>,

    /// Family recorded in evaluation reports [default: from the embedder kind]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,

    /// Model name recorded in evaluation reports.
    #[arg(long, default_value = "model")]
    pub model_name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    /// Span F1 for BIO tag sets, accuracy otherwise.
    Auto,
    Accuracy,
    SpanF1,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TagTrainArgs {
    /// `token<TAB>tag` sentences.
    #[arg(long)]
    pub train: PathBuf,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub embedder: EmbedderArgs,

    /// Task name recorded in evaluation reports.
    #[arg(long, default_value = "tagging")]
    pub task: String,

    #[arg(long, default_value_t = 256)]
    pub hidden: usize,

    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub reproject: bool,

    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,

    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,

    /// Epochs without dev improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub patience: usize,

    #[arg(long, value_enum, default_value_t = MetricArg::Auto)]
    pub metric: MetricArg,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClassifyTrainArgs {
    /// `label<TAB>text` lines.
    #[arg(long)]
    pub train: PathBuf,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub embedder: EmbedderArgs,

    #[arg(long, default_value = "classification")]
    pub task: String,

    #[arg(long, default_value_t = 128)]
    pub hidden: usize,

    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub reproject: bool,

    #[arg(long, default_value_t = 0.3068)]
    pub dropout: f64,

    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,

    #[arg(long, default_value_t = 3)]
    pub patience: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneTask {
    Sequence,
    Token,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FinetuneArgs {
    #[arg(long, value_enum)]
    pub task: FinetuneTask,

    /// Encoder checkpoint written by `pretrain`.
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long)]
    pub vocab: PathBuf,

    /// `label<TAB>text` lines (sequence) or `token<TAB>tag` sentences (token).
    #[arg(long)]
    pub train: PathBuf,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,

    /// Task name recorded in evaluation reports.
    #[arg(long, default_value = "finetune")]
    pub task_name: String,

    #[arg(long, default_value = "model")]
    pub model_name: String,

    #[arg(long, default_value_t = 3)]
    pub epochs: usize,

    #[arg(long, default_value_t = 2e-5)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.1)]
    pub warmup_fraction: f64,

    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    /// Entity spans from BIO tags; three-column file.
    Ner,
    /// Token accuracy; three-column file.
    Pos,
    /// Micro and macro F1; two-column file.
    Classification,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: EvalTask,

    /// `token gold predicted` lines (ner, pos) or `gold predicted` lines (classification).
    #[arg(long)]
    pub predictions: PathBuf,

    /// Task name recorded in the report [default: the --task value]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_name: Option<String>,

    #[arg(long, default_value = "model")]
    pub model_name: String,

    #[arg(long, default_value = "baseline")]
    pub family: String,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompareArgs {
    /// Report files written by `eval` or the training commands.
    #[arg(long, required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,

    /// Runs expected per model and task.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,

    /// Metric to tabulate [default: f1, else accuracy, else micro_f1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}
