//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns what should be printed and the exit code; the
//! `dre` binary is a thin wrapper around it.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::codebook::{load_codebook, save_codebook, Codebook, RefineRules};
use crate::encoder::{Encoder, ModelParams};
use crate::graph::{load_dataset, write_dataset, Graph};
use crate::prompt::{render_prompt, PromptRecord};
use crate::synthetic::{generate, SyntheticConfig};
use crate::trainer::{
    ablate, ablation_ladder, evaluate, full_toggle_matrix, sweep_views, train, MetricsLog, TrainConfig,
};

const VOCAB_FILE: &str = "vocab.tsv";
const EMBEDDING_FILE: &str = "embeddings.bin";
const CHECKPOINT_FILE: &str = "checkpoint.bin";
const CONFIG_FILE: &str = "config.json";
const METRICS_FILE: &str = "metrics.jsonl";

/// Outcome of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 on success, 1 on domain errors, 2 on usage errors.
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Parser, Debug)]
#[command(name = "dre", version, about = "Encode graph nodes as sequences of vocabulary tokens")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a dataset directory and print its statistics.
    Ingest {
        dir: PathBuf,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// `cora` (2708 nodes) or `small` (300 nodes).
        #[arg(long, default_value = "cora")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Codebook utilities.
    #[command(subcommand)]
    Codebook(CodebookCommand),
    /// Train a model; writes checkpoint, metrics and resolved config under --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Accuracy of a checkpoint on one split.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Emit code ids and token strings per view as JSON lines.
    Encode {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        select: NodeSelect,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit classification prompts as JSON lines.
    Prompt {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        select: NodeSelect,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train over several view counts and seeds.
    SweepViews {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        views: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the toggle ablation and print one row per configuration.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// All 32 combinations instead of the cumulative ladder.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics log utilities.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

#[derive(Subcommand, Debug)]
enum CodebookCommand {
    /// Write a seeded synthetic codebook.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1024)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mix in non-semantic tokens for refinement to remove.
        #[arg(long)]
        mixed: bool,
    },
    /// Write the refined subset of a codebook, keeping original token ids.
    Refine {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print size, dimension and refinement statistics.
    Inspect {
        #[arg(long)]
        codebook: PathBuf,
        /// Number of leading tokens to list.
        #[arg(long, default_value_t = 10)]
        tokens: usize,
    },
}

#[derive(Subcommand, Debug)]
enum MetricsCommand {
    /// Print a metrics log as CSV for plotting.
    PlotData {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Inputs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Codebook directory holding vocab.tsv and embeddings.bin.
    #[arg(long)]
    codebook: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to config.json next to the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct NodeSelect {
    #[arg(long)]
    node: Option<usize>,
    #[arg(long)]
    all: bool,
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                CommandResult {
                    exit_code: 2,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                CommandResult {
                    exit_code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(stdout) => CommandResult {
            exit_code: 0,
            stdout,
            stderr: String::new(),
        },
        Err(e) => {
            let msg = one_line(&e);
            CommandResult {
                exit_code: 1,
                stdout: String::new(),
                stderr: format!("error: {msg}\n"),
            }
        }
    }
}

/// Error chain on one line, skipping causes whose text the outer message
/// already includes.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}

fn configure_threads() {
    if let Some(n) = std::env::var("DRE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Ingest { dir } => ingest(&dir),
        Command::Synth { out, preset, seed } => synth(&out, &preset, seed),
        Command::Codebook(c) => codebook_cmd(c),
        Command::Train {
            config,
            inputs,
            out,
            seed,
        } => train_cmd(&config, &inputs, &out, seed),
        Command::Eval { model, split } => {
            let m = LoadedModel::load(&model)?;
            let acc = evaluate(&m.params, &m.graph, &split, &m.config, &m.codebook)?;
            Ok(format!("split\t{split}\naccuracy\t{acc:.4}\n"))
        }
        Command::Encode { model, select, out } => encode_cmd(&model, &select, out.as_deref(), false),
        Command::Prompt { model, select, out } => encode_cmd(&model, &select, out.as_deref(), true),
        Command::SweepViews {
            config,
            inputs,
            views,
            seeds,
            out,
        } => {
            let cfg = TrainConfig::from_json_file(&config)?;
            let (g, cb) = load_inputs(&inputs)?;
            let report = sweep_views(&g, &cfg, &cb, &views, &seeds)?;
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            let mut s = String::from("views\tval_mean\tval_std\ttest_mean\ttest_std\tnormalized\n");
            for r in &report.rows {
                writeln!(
                    s,
                    "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                    r.views, r.val_mean, r.val_std, r.test_mean, r.test_std, r.normalized
                )?;
            }
            Ok(s)
        }
        Command::Ablate {
            config,
            inputs,
            seeds,
            full,
            out,
        } => {
            let cfg = TrainConfig::from_json_file(&config)?;
            let (g, cb) = load_inputs(&inputs)?;
            let configs = if full { full_toggle_matrix() } else { ablation_ladder() };
            let rows = ablate(&g, &cfg, &cb, &configs, &seeds)?;
            if let Some(p) = out {
                write_json(&p, &rows)?;
            }
            let mut s = String::from("config\tmulti_view\tquantization\tintra_residual\tinter_residual\ttoken_refinement\ttest_mean\ttest_std\n");
            for r in &rows {
                let t = r.toggles;
                writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}",
                    r.label, t.multi_view, t.quantization, t.intra_residual, t.inter_residual, t.token_refinement, r.test_mean, r.test_std
                )?;
            }
            Ok(s)
        }
        Command::Metrics(MetricsCommand::PlotData { log, out }) => {
            let m = MetricsLog::read_jsonl(&log)?;
            let csv = m.plot_csv();
            match out {
                Some(p) => {
                    fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?;
                    Ok(format!("wrote {}\n", p.display()))
                }
                None => Ok(csv),
            }
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_cb(dir: &Path) -> Result<Codebook> {
    Ok(load_codebook(dir.join(VOCAB_FILE), dir.join(EMBEDDING_FILE))?)
}

fn load_inputs(inputs: &Inputs) -> Result<(Graph, Codebook)> {
    let g = load_dataset(&inputs.data)?;
    let cb = load_cb(&inputs.codebook)?;
    Ok((g, cb))
}

fn ingest(dir: &Path) -> Result<String> {
    let g = load_dataset(dir)?;
    let s = g.stats();
    let mut out = String::new();
    writeln!(out, "nodes\t{}", s.nodes)?;
    writeln!(out, "edges\t{}", s.edges)?;
    writeln!(out, "features\t{}", s.features)?;
    writeln!(out, "classes\t{}", s.classes)?;
    writeln!(out, "sparsity_permyriad\t{:.4}", s.sparsity_permyriad)?;
    writeln!(out, "train\t{}", s.train)?;
    writeln!(out, "val\t{}", s.val)?;
    writeln!(out, "test\t{}", s.test)?;
    Ok(out)
}

fn synth(out: &Path, preset: &str, seed: u64) -> Result<String> {
    let cfg = match preset {
        "cora" => SyntheticConfig::cora_like(seed),
        "small" => SyntheticConfig::small(seed),
        other => bail!("unknown preset {other:?} (expected cora or small)"),
    };
    let g = generate(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_dataset(&g, out)?;
    Ok(format!("wrote {} nodes and {} edges to {}\n", g.num_nodes(), g.num_edges(), out.display()))
}

fn codebook_cmd(cmd: CodebookCommand) -> Result<String> {
    match cmd {
        CodebookCommand::Gen {
            out,
            count,
            dim,
            seed,
            mixed,
        } => {
            if count == 0 || dim == 0 {
                bail!("count and dim must be positive");
            }
            let cb = if mixed {
                Codebook::synthetic_mixed(count, dim, seed)
            } else {
                Codebook::synthetic(count, dim, seed)
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_codebook(&cb, out.join(VOCAB_FILE), out.join(EMBEDDING_FILE))?;
            Ok(format!("wrote {count} codes of dim {dim} to {}\n", out.display()))
        }
        CodebookCommand::Refine { codebook, out } => {
            let cb = load_cb(&codebook)?;
            let refined = cb.refine(&RefineRules::default())?;
            let keep: Vec<usize> = refined.active_codes().collect();
            let d = cb.dim();
            let mut emb = Vec::with_capacity(keep.len() * d);
            for &c in &keep {
                emb.extend_from_slice(cb.embedding(c));
            }
            let compact = Codebook::new(
                keep.iter().map(|&c| cb.token_id(c)).collect(),
                keep.iter().map(|&c| cb.token(c).to_string()).collect(),
                d,
                emb,
                cb.metric(),
            )?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_codebook(&compact, out.join(VOCAB_FILE), out.join(EMBEDDING_FILE))?;
            Ok(format!("kept {} of {} tokens\n", keep.len(), cb.len()))
        }
        CodebookCommand::Inspect { codebook, tokens } => {
            let cb = load_cb(&codebook)?;
            let refined = cb.refine(&RefineRules::default());
            let mut s = String::new();
            writeln!(s, "codes\t{}", cb.len())?;
            writeln!(s, "dim\t{}", cb.dim())?;
            writeln!(s, "refined\t{}", refined.as_ref().map_or(0, |r| r.active_len()))?;
            for c in 0..tokens.min(cb.len()) {
                let kept = refined.as_ref().is_ok_and(|r| r.is_active(c));
                writeln!(s, "{c}\t{}\t{:?}\t{}", cb.token_id(c), cb.token(c), if kept { "keep" } else { "drop" })?;
            }
            Ok(s)
        }
    }
}

fn train_cmd(config: &Path, inputs: &Inputs, out: &Path, seed: Option<u64>) -> Result<String> {
    let mut cfg = TrainConfig::from_json_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (g, cb) = load_inputs(inputs)?;
    let outcome = train(&g, &cfg, &cb)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    outcome.params.save(out.join(CHECKPOINT_FILE))?;
    outcome.log.write_jsonl(out.join(METRICS_FILE))?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    let val = outcome.log.last().and_then(|r| r.val_accuracy);
    let mut s = String::new();
    writeln!(s, "epochs\t{}", outcome.log.len())?;
    if let Some(v) = val {
        writeln!(s, "val_accuracy\t{v:.4}")?;
    }
    writeln!(s, "checkpoint\t{}", out.join(CHECKPOINT_FILE).display())?;
    Ok(s)
}

struct LoadedModel {
    params: ModelParams,
    config: TrainConfig,
    graph: Graph,
    /// Prepared as in training (metric and refinement applied).
    codebook: Codebook,
}

impl LoadedModel {
    fn load(args: &ModelArgs) -> Result<Self> {
        let config_path = match &args.config {
            Some(p) => p.clone(),
            None => args
                .checkpoint
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(CONFIG_FILE),
        };
        let config = TrainConfig::from_json_file(&config_path)?;
        let params = ModelParams::load(&args.checkpoint)?;
        let (graph, raw) = load_inputs(&args.inputs)?;
        let expect = config.encoder_config().model_shape(graph.num_features(), graph.num_classes());
        if params.shape() != expect {
            bail!(
                "checkpoint shape {:?} does not match the config and dataset ({:?})",
                params.shape(),
                expect
            );
        }
        let codebook = config.prepare_codebook(&raw)?;
        Ok(LoadedModel {
            params,
            config,
            graph,
            codebook,
        })
    }
}

#[derive(Serialize)]
struct EncodeRecord<'a> {
    node: usize,
    /// Code indices per view, 1-hop first.
    codes: Vec<Vec<usize>>,
    token_ids: Vec<Vec<u32>>,
    tokens: Vec<Vec<&'a str>>,
}

fn encode_cmd(args: &ModelArgs, select: &NodeSelect, out: Option<&Path>, prompts: bool) -> Result<String> {
    let m = LoadedModel::load(args)?;
    let nodes: Vec<usize> = match select.node {
        Some(v) => {
            m.graph.check_node(v)?;
            vec![v]
        }
        None => (0..m.graph.num_nodes()).collect(),
    };
    let enc_cfg = m.config.encoder_config();
    let encoder = Encoder::new(&m.graph, &m.codebook, &enc_cfg)?;
    let seed = m.config.eval_seed();
    let mut text = String::new();
    for chunk in nodes.chunks(512) {
        for e in encoder.encode_nodes(&m.params, chunk, seed)? {
            let line = if prompts {
                let prompt = render_prompt(&e, &m.codebook, m.graph.label_names())?;
                let label = m.graph.label_names()[m.graph.label(e.center)].clone();
                serde_json::to_string(&PromptRecord {
                    node: e.center,
                    prompt,
                    label,
                })?
            } else {
                let codes = e.code_ids();
                let token_ids = codes
                    .iter()
                    .map(|v| v.iter().map(|&c| m.codebook.token_id(c)).collect())
                    .collect();
                serde_json::to_string(&EncodeRecord {
                    node: e.center,
                    token_ids,
                    tokens: e.tokens(&m.codebook),
                    codes,
                })?
            };
            text.push_str(&line);
            text.push('\n');
        }
    }
    match out {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            Ok(format!("wrote {} records to {}\n", nodes.len(), p.display()))
        }
        None => Ok(text),
    }
}
