//! Command-line entry point: corpus generation, example extraction,
//! splitting, training, evaluation, completion and gradient checking.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use slm::dataset::{
    extract_examples, gen_synthetic_corpus, read_jsonl, split, write_jsonl, CorpusSpec,
    SplitRatios,
};
use slm::metrics::eval_report;
use slm::minilang::parse;
use slm::model::check::{gradcheck_micro, CHECK_EPS, CHECK_SEED};
use slm::model::checkpoint;
use slm::model::train::{train, TrainConfig};
use slm::model::vocab::{count_subtokens, Vocab};
use slm::model::{CompletionSite, GenerationCaps, Hyperparams, SlmModel};

#[derive(Parser)]
#[command(name = "slm", version, about = "Structural language modeling toolkit for tree-based code completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file with defaults for seed, preset and hyperparameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; falls back to the config file, then SLM_SEED, then 1.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Insist on bit-reproducible runs (single-threaded reductions).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads for evaluation; forced to 1 under --deterministic.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of mini-language methods.
    GenCorpus(GenCorpusArgs),
    /// Extract completion examples from a corpus file.
    Extract(ExtractArgs),
    /// Split an examples file into train/dev/test at method granularity.
    Split(SplitArgs),
    /// Train a model on extracted examples.
    Train(TrainArgs),
    /// Evaluate a checkpoint: acc/tree/one-subtoken/one-token at k.
    Eval(EvalArgs),
    /// Complete the /*HOLE*/ marker in a source file.
    Complete(CompleteArgs),
    /// Check model gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    methods: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    /// Use the low-entropy, name-heavy corpus family.
    #[arg(long)]
    name_heavy: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Print filter statistics to stderr.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated train,dev,test fractions summing to 1.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Evaluate accuracy every n epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    /// Stop once training acc@1 reaches this value.
    #[arg(long)]
    target_train_acc: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    /// Disable the copy mechanism (vocabulary-only prediction).
    #[arg(long)]
    no_copy: bool,
    /// Use max pooling instead of root-path attention.
    #[arg(long)]
    no_root_attention: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    examples: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long, default_value = "1,5")]
    k: String,
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    model: PathBuf,
    /// Mini-language source containing one /*HOLE*/ marker.
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = CHECK_SEED)]
    check_seed: u64,
    #[arg(long, default_value_t = CHECK_EPS)]
    eps: f64,
}

/// Optional config file; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    preset: Option<String>,
    deterministic: Option<bool>,
    hyperparams: Option<serde_json::Value>,
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn resolve_seed(cli_seed: Option<u64>, config: &RunConfig) -> u64 {
    cli_seed
        .or(config.seed)
        .or_else(|| std::env::var("SLM_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
}

fn preset_by_name(name: &str) -> Result<Hyperparams> {
    match name {
        "desk" => Ok(Hyperparams::desk()),
        "paper" => Ok(Hyperparams::paper()),
        "micro" => Ok(Hyperparams::micro()),
        other => bail!("unknown preset {other:?} (expected desk, paper or micro)"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &config);
    let deterministic = cli.deterministic || config.deterministic.unwrap_or(false);
    let jobs = if deterministic { 1 } else { cli.jobs.max(1) };
    match cli.command {
        Command::GenCorpus(args) => {
            let spec = if args.name_heavy {
                CorpusSpec::name_heavy(seed, args.methods)
            } else {
                CorpusSpec {
                    seed,
                    method_count: args.methods,
                    max_depth: args.max_depth,
                    ..CorpusSpec::default()
                }
            };
            let text = gen_synthetic_corpus(&spec)?;
            std::fs::write(&args.out, text)?;
            eprintln!("wrote {} methods to {}", args.methods, args.out.display());
            Ok(())
        }
        Command::Extract(args) => {
            let text = std::fs::read_to_string(&args.corpus)?;
            let unit = parse(&text).map_err(|e| anyhow!("{e}"))?;
            let (examples, stats) = extract_examples(&unit.methods)?;
            std::fs::write(&args.out, write_jsonl(&examples))?;
            if args.stats {
                eprintln!("{stats:?}");
            }
            eprintln!("wrote {} examples to {}", examples.len(), args.out.display());
            Ok(())
        }
        Command::Split(args) => {
            let parts: Vec<f64> = args
                .ratios
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("parsing --ratios"))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                bail!("--ratios needs exactly three comma-separated numbers");
            }
            let ratios = SplitRatios::new(parts[0], parts[1], parts[2])?;
            let examples = read_jsonl(&std::fs::read_to_string(&args.examples)?)?;
            let (tr, dv, te) = split(&examples, ratios, seed);
            std::fs::write(&args.train, write_jsonl(&tr))?;
            std::fs::write(&args.dev, write_jsonl(&dv))?;
            std::fs::write(&args.test, write_jsonl(&te))?;
            eprintln!("split {} examples into {}/{}/{}", examples.len(), tr.len(), dv.len(), te.len());
            Ok(())
        }
        Command::Train(args) => {
            let preset_name = args
                .preset
                .clone()
                .or_else(|| config.preset.clone())
                .unwrap_or_else(|| "desk".to_string());
            let mut hyper = preset_by_name(&preset_name)?;
            if let Some(hv) = &config.hyperparams {
                // config-file overrides merge over the preset
                let mut merged = serde_json::to_value(&hyper)?;
                let obj = merged.as_object_mut().expect("hyperparams serialize to an object");
                let overrides = hv.as_object().context("config hyperparams must be an object")?;
                for (key, value) in overrides {
                    if !obj.contains_key(key) {
                        bail!("unknown hyperparameter {key:?} in config");
                    }
                    obj.insert(key.clone(), value.clone());
                }
                hyper = serde_json::from_value(merged)?;
            }
            if let Some(lr) = args.lr {
                hyper.adam.lr = lr;
            }
            if let Some(v) = args.vocab_size {
                hyper.vocab_size = v;
            }
            if let Some(d) = args.d_model {
                hyper.d_model = d;
                hyper.d_type = d * 3 / 4;
            }
            if args.no_copy {
                hyper.copy_enabled = false;
            }
            if args.no_root_attention {
                hyper.root_attention = false;
            }
            let train_set = read_jsonl(&std::fs::read_to_string(&args.train)?)?;
            let dev_set = match &args.dev {
                Some(p) => read_jsonl(&std::fs::read_to_string(p)?)?,
                None => Vec::new(),
            };
            let golds: Vec<slm::ast::Tree> = train_set
                .iter()
                .flat_map(|e| [e.context.clone(), e.gold.clone()])
                .collect();
            let vocab = Vocab::build(&count_subtokens(&golds), hyper.vocab_size);
            let mut model: SlmModel<f32> = SlmModel::new(hyper, vocab, seed)?;
            let cfg = TrainConfig {
                epochs: args.epochs,
                seed,
                eval_every: (args.eval_every > 0).then_some(args.eval_every),
                target_train_acc: args.target_train_acc,
                beam_width: 5,
            };
            let mut log_cb = |log: &slm::model::train::EpochLog| {
                eprintln!(
                    "epoch {:3}  loss {:.4}  lr {:.2e}{}{}",
                    log.epoch,
                    log.mean_loss,
                    log.learning_rate,
                    log.train_acc.map(|a| format!("  train acc@1 {a:.3}")).unwrap_or_default(),
                    log.dev_acc.map(|a| format!("  dev acc@1 {a:.3}")).unwrap_or_default(),
                );
            };
            let report = train(&mut model, &train_set, &dev_set, &cfg, Some(&mut log_cb))?;
            std::fs::write(&args.out, checkpoint::save(&model))?;
            eprintln!(
                "trained {} steps over {} epochs; checkpoint written to {}",
                report.steps,
                report.epochs.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Eval(args) => {
            let model = checkpoint::load(&std::fs::read(&args.model)?)?;
            let examples = read_jsonl(&std::fs::read_to_string(&args.examples)?)?;
            let ks: Vec<usize> = args
                .k
                .split(',')
                .map(|s| s.trim().parse::<usize>().context("parsing --k"))
                .collect::<Result<_>>()?;
            let max_k = ks.iter().copied().max().unwrap_or(1);
            let records = decode_parallel(&model, &examples, args.width, max_k, jobs)?;
            let report = eval_report(&records, &ks)?;
            let text = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(p) => std::fs::write(p, &text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Complete(args) => {
            let model = checkpoint::load(&std::fs::read(&args.model)?)?;
            let text = std::fs::read_to_string(&args.source)?;
            let unit = parse(&text).map_err(|e| anyhow!("{e}"))?;
            let method = unit
                .methods
                .iter()
                .find(|m| m.contains_kind(slm::ast::NodeKind::Hole))
                .context("no /*HOLE*/ marker found in any method")?;
            let site = CompletionSite::prepare(method)?;
            let caps = GenerationCaps::from_hyper(&model.hyper);
            let beam = slm::decoder::beam_search(&model, &site, args.width, args.k, &caps)?;
            if let Some(diag) = &beam.diagnostic {
                eprintln!("warning: {diag}");
            }
            let mut rank = 0usize;
            for (tree, logprob) in &beam.results {
                // an unconstrained decoder can propose structurally
                // ill-formed trees; only code-shaped candidates are usable
                let Ok(code) = slm::minilang::print_expression(tree) else {
                    eprintln!("warning: skipping an unprintable candidate (logprob {logprob:.3})");
                    continue;
                };
                rank += 1;
                let line = serde_json::json!({
                    "rank": rank,
                    "logprob": logprob,
                    "code": code,
                    "tree": slm::ast::to_json(tree),
                });
                println!("{line}");
            }
            Ok(())
        }
        Command::Gradcheck(args) => {
            let report = gradcheck_micro(args.check_seed, args.eps)?;
            println!(
                "max relative error {:.3e} over {} coordinates (relu margin {:.2e})",
                report.max_rel_err, report.coords, report.relu_margin
            );
            if report.max_rel_err >= 1e-6 {
                bail!("gradient check failed: {:.3e} >= 1e-6", report.max_rel_err);
            }
            Ok(())
        }
    }
}

/// Order-preserving parallel decode; falls back to sequential for jobs <= 1.
fn decode_parallel(
    model: &SlmModel<f32>,
    examples: &[slm::dataset::Example],
    width: usize,
    k: usize,
    jobs: usize,
) -> Result<Vec<slm::metrics::EvalRecord>> {
    if jobs <= 1 || examples.len() < 2 {
        return slm::eval::decode_examples(model, examples, width, k).map_err(|e| anyhow!("{e}"));
    }
    let chunk = examples.len().div_ceil(jobs);
    let results: Vec<Result<Vec<slm::metrics::EvalRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = examples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    slm::eval::decode_examples(model, part, width, k).map_err(|e| anyhow!("{e}"))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(examples.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
