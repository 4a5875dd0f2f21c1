use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::{
    build_encoder, load_pairs, load_sentences, load_tables, split_holdout, HarnessError, RunConfig, EXIT_OK,
    EXIT_USAGE,
};
use crate::corruptor::{generate_pairs, write_pairs, PairFilter, PseudoPair};
use crate::embedder::{EmbeddingCache, Encoder};
use crate::policy::{FeatureMap, Policy};
use crate::reward::score_candidates;
use crate::textcore::Sentence;
use crate::theory;
use crate::trainer::{evaluate, initial_checkpoint, train, Checkpoint, Metrics, TrainingSet};

#[derive(Debug, Parser)]
#[command(name = "selfplay-csc", version, about = "Label-free self-play training for text correction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set alpha=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corrupt a clean corpus into pseudo-pairs.
    Corrupt {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        copies: Option<usize>,
        /// Keep every attempt regardless of edit distance and similarity.
        #[arg(long)]
        no_filter: bool,
    },
    /// Build the binary embedding cache for a sentence file.
    EncodeCache {
        /// One sentence per line; defaults to the configured corpus.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the correction policy.
    Train {
        /// Pseudo-pairs; generated from the corpus when absent.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        total_updates: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Evaluate a checkpoint on a pair file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        tables: Option<PathBuf>,
        /// Score only the held-out tenth of the file.
        #[arg(long)]
        holdout: bool,
    },
    /// Score candidate corrections against a reference.
    RewardScore {
        /// JSON lines of `{"reference": .., "candidates": [..]}`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run the theory verification suite.
    TheoryCheck,
}

#[derive(Debug, Deserialize)]
struct ScoreRequest {
    reference: Sentence,
    candidates: Vec<Sentence>,
}

#[derive(Debug, Serialize)]
struct ScoreRecord<'a> {
    record: usize,
    candidate: usize,
    text: &'a Sentence,
    r_pair: f64,
    r_cons: f64,
    reward: f64,
}

#[derive(Debug, Serialize)]
struct TrainEval {
    train_records: usize,
    test_records: usize,
    untrained: Option<Metrics>,
    trained: Option<Metrics>,
}

/// Parse `args` (program name first), run the subcommand and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn path_override(key: &str, p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| format!("{key}={}", toml::Value::String(p.display().to_string())))
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    let mut overrides = cli.common.overrides.clone();
    if let Some(s) = cli.common.seed {
        overrides.push(format!("seed={s}"));
    }
    overrides.extend(path_override("out", &cli.common.out));
    match &cli.command {
        Command::Corrupt {
            corpus,
            tables,
            copies,
            no_filter,
        } => {
            overrides.extend(path_override("corpus", corpus));
            overrides.extend(path_override("tables", tables));
            overrides.extend(copies.map(|c| format!("copies={c}")));
            if *no_filter {
                overrides.push("filter=false".into());
            }
        }
        Command::EncodeCache { .. } | Command::TheoryCheck => {}
        Command::Train {
            pairs,
            corpus,
            tables,
            total_updates,
            batch_size,
        } => {
            overrides.extend(path_override("pairs", pairs));
            overrides.extend(path_override("corpus", corpus));
            overrides.extend(path_override("tables", tables));
            overrides.extend(total_updates.map(|t| format!("total_updates={t}")));
            overrides.extend(batch_size.map(|b| format!("batch_size={b}")));
        }
        Command::Eval { pairs, tables, .. } => {
            overrides.extend(path_override("pairs", pairs));
            overrides.extend(path_override("tables", tables));
        }
        Command::RewardScore { alpha, .. } => {
            overrides.extend(alpha.map(|a| format!("alpha={a}")));
        }
    }
    let cfg = RunConfig::resolve(cli.common.config.as_deref(), &overrides)?;
    fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    write_file(&cfg.out.join("config.toml"), cfg.to_toml().as_bytes())?;

    match cli.command {
        Command::Corrupt { .. } => corrupt(&cfg),
        Command::EncodeCache { input } => encode_cache(&cfg, input.as_deref()),
        Command::Train { .. } => train_cmd(&cfg),
        Command::Eval { checkpoint, holdout, .. } => eval_cmd(&cfg, &checkpoint, holdout),
        Command::RewardScore { input, .. } => reward_score(&cfg, &input),
        Command::TheoryCheck => theory_check(&cfg),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn make_pairs(cfg: &RunConfig, encoder: &dyn Encoder) -> Result<(Vec<PseudoPair>, serde_json::Value), HarnessError> {
    let corpus = load_sentences(cfg.corpus.as_deref())?;
    let tables = load_tables(cfg)?;
    let filter = PairFilter {
        encoder,
        max_edit_distance: cfg.max_edit_distance,
        min_cosine: cfg.min_cosine,
    };
    let generated = generate_pairs(
        &corpus,
        &tables,
        &cfg.prior(),
        cfg.copies,
        cfg.seed,
        cfg.filter.then_some(&filter),
    )
    .map_err(HarnessError::data)?;
    let stats = &generated.stats;
    let mut summary = serde_json::to_value(stats).expect("serializable");
    let shares: Vec<f64> = stats
        .operators
        .iter()
        .map(|o| o.attempts as f64 / stats.generated.max(1) as f64)
        .collect();
    summary["operator_share"] = serde_json::json!(shares);
    Ok((generated.pairs, summary))
}

fn corrupt(cfg: &RunConfig) -> Result<(), HarnessError> {
    let encoder = build_encoder(cfg)?;
    let (pairs, summary) = make_pairs(cfg, encoder.as_ref())?;
    let mut buf = Vec::new();
    write_pairs(&mut buf, &pairs).expect("in-memory write");
    write_file(&cfg.out.join("pairs.jsonl"), &buf)?;
    let text = to_json(&summary);
    write_file(&cfg.out.join("corrupt_stats.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn encode_cache(cfg: &RunConfig, input: Option<&Path>) -> Result<(), HarnessError> {
    let sentences = load_sentences(input.or(cfg.corpus.as_deref()))?;
    let encoder = crate::embedder::NgramEncoder::new(cfg.encoder_dim);
    let cache = EmbeddingCache::build(&encoder, &sentences);
    let path = cfg.out.join("embeddings.cece");
    cache.write(&path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    println!("{} sentences, {} entries, dim {}", sentences.len(), cache.len(), cache.dim());
    Ok(())
}

fn train_cmd(cfg: &RunConfig) -> Result<(), HarnessError> {
    let encoder = build_encoder(cfg)?;
    let tables = load_tables(cfg)?;
    let pairs = match &cfg.pairs {
        Some(p) => load_pairs(p)?,
        None => make_pairs(cfg, encoder.as_ref())?.0,
    };
    let (train_pairs, test_pairs) = split_holdout(&pairs);
    let fmap = FeatureMap::new(cfg.feature_buckets);
    let tcfg = cfg.trainer();
    let set = TrainingSet::new(train_pairs, &tables, &fmap).map_err(HarnessError::data)?;
    let policy = Policy::new(&tables, fmap);
    let score = |ckpt: &Checkpoint| -> Result<Option<Metrics>, HarnessError> {
        if test_pairs.is_empty() {
            return Ok(None);
        }
        evaluate(&policy, &ckpt.params, &test_pairs)
            .map(Some)
            .map_err(HarnessError::data)
    };
    let untrained = score(&initial_checkpoint(&tcfg, &fmap, cfg.seed))?;

    let every = (tcfg.total_updates / 10).max(1);
    let outcome = train(&tcfg, &cfg.reward(), &set, encoder.as_ref(), &fmap, cfg.seed, |log, _| {
        if log.t % every == 0 || log.t + 1 == tcfg.total_updates {
            eprintln!("update {:>5}  reward {:.4}  grad {:.4}", log.t, log.mean_reward, log.grad_norm);
        }
    })
    .map_err(HarnessError::data)?;

    let ckpt_path = cfg.out.join("checkpoint.cecp");
    outcome
        .checkpoint
        .write(&ckpt_path)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", ckpt_path.display())))?;
    let mut log = String::new();
    for entry in &outcome.log {
        log.push_str(&serde_json::to_string(entry).expect("serializable"));
        log.push('\n');
    }
    write_file(&cfg.out.join("train_log.jsonl"), log.as_bytes())?;
    write_file(&cfg.out.join("telemetry.json"), to_json(&outcome.telemetry).as_bytes())?;

    let report = TrainEval {
        train_records: set.len(),
        test_records: test_pairs.len(),
        untrained,
        trained: score(&outcome.checkpoint.quantized())?,
    };
    let text = to_json(&report);
    write_file(&cfg.out.join("eval.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, checkpoint: &Path, holdout: bool) -> Result<(), HarnessError> {
    let pairs_path = cfg
        .pairs
        .as_deref()
        .ok_or_else(|| HarnessError::Usage("eval needs --pairs".into()))?;
    let mut pairs = load_pairs(pairs_path)?;
    if holdout {
        pairs = split_holdout(&pairs).1;
    }
    let ckpt =
        Checkpoint::read(checkpoint).map_err(|e| HarnessError::Data(format!("{}: {e}", checkpoint.display())))?;
    if ckpt.params.dim() != cfg.feature_buckets {
        return Err(HarnessError::Config(format!(
            "checkpoint has {} feature buckets, config has feature_buckets = {}",
            ckpt.params.dim(),
            cfg.feature_buckets
        )));
    }
    let tables = load_tables(cfg)?;
    let policy = Policy::new(&tables, FeatureMap::new(cfg.feature_buckets));
    let metrics = evaluate(&policy, &ckpt.params, &pairs).map_err(HarnessError::data)?;
    let text = to_json(&metrics);
    write_file(&cfg.out.join("eval.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn reward_score(cfg: &RunConfig, input: &Path) -> Result<(), HarnessError> {
    let encoder = build_encoder(cfg)?;
    let reward_cfg = cfg.reward();
    let file = fs::File::open(input).map_err(|e| HarnessError::io(input, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req: ScoreRequest = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Data(format!("{}:{}: {e}", input.display(), i + 1)))?;
        let scores = score_candidates(encoder.as_ref(), &req.candidates, &req.reference, &reward_cfg)
            .map_err(|e| HarnessError::Data(format!("{}:{}: {e}", input.display(), i + 1)))?;
        for (j, (text, s)) in req.candidates.iter().zip(&scores).enumerate() {
            let rec = ScoreRecord {
                record: i,
                candidate: j,
                text,
                r_pair: s.r_pair,
                r_cons: s.r_cons,
                reward: s.reward,
            };
            serde_json::to_writer(&mut out, &rec).expect("serializable");
            out.push(b'\n');
        }
    }
    write_file(&cfg.out.join("rewards.jsonl"), &out)?;
    std::io::stdout()
        .write_all(&out)
        .map_err(|e| HarnessError::io(Path::new("<stdout>"), e))
}

fn theory_check(cfg: &RunConfig) -> Result<(), HarnessError> {
    let records = theory::run_suite(&cfg.reward(), cfg.seed).map_err(HarnessError::data)?;
    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    write_file(&cfg.out.join("theory.jsonl"), out.as_bytes())?;
    print!("{out}");
    match records.iter().filter(|r| !r.pass).count() {
        0 => Ok(()),
        n => Err(HarnessError::TheoryFailed(n)),
    }
}
