use std::fmt;
use std::path::{Path, PathBuf};

use cfsd::data::{k_core_filter, parse_amazon_jsonl, parse_yelp_reviews, Corpus, CorpusConfig, ParseOutcome};
use cfsd::debias::{analyze, beta_sweep, DebiasConfig, Selection, SweepTable};
use cfsd::sentiment::{Lexicon, PolarityProfile};
use cfsd::stats::{wilcoxon_signed_rank, WilcoxonResult};
use cfsd::synth::{generate, write_amazon_jsonl, SynthConfig};
use cfsd::train::{model_from_checkpoint, train, TrainConfig};
use cfsd::{Checkpoint64, Error};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::manifest::{fingerprint, RunManifest};
use crate::{Cli, Command, Common, SourceType, DATA_ROOT_ENV};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
}

impl CliError {
    pub fn is_usage(&self) -> bool {
        match self {
            CliError::Core(e) => e.is_usage(),
            CliError::Usage(_) => true,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Configuration problems are the caller's fault, not a computation failure.
fn usage(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Core(other),
    }
}

fn input(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if path.is_relative() => Path::new(&root).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_config<T: DeserializeOwned + Default>(common: &Common) -> Result<T> {
    match &common.config {
        None => Ok(T::default()),
        Some(p) => {
            let p = input(p);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok(serde_json::from_str(&text).map_err(Error::from)?)
        }
    }
}

fn out_dir(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(&common.out)
}

fn lexicon(path: Option<&Path>) -> Result<Lexicon> {
    Ok(match path {
        Some(p) => Lexicon::load(&input(p))?,
        None => Lexicon::default_english(),
    })
}

fn load_corpus(path: &Path) -> Result<(Corpus, String)> {
    let p = input(path);
    let corpus = Corpus::load(&p)?;
    Ok((corpus, fingerprint(&p)?))
}

fn load_model(path: &Path) -> Result<(cfsd::model::Model<f64>, TrainConfig)> {
    let ckpt = Checkpoint64::load(&input(path))?;
    Ok(model_from_checkpoint(&ckpt)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    match cli.command {
        Command::Ingest {
            source,
            source_type,
            k,
            ratios,
            max_tokens,
        } => ingest(&common, &source, source_type, k, ratios, max_tokens),
        Command::Train {
            corpus,
            epochs,
            lr,
            batch_size,
        } => cmd_train(&common, &corpus, epochs, lr, batch_size),
        Command::SweepBeta {
            checkpoint,
            corpus,
            split,
            betas,
            tradeoff_lambda,
            lexicon,
        } => sweep(&common, &checkpoint, &corpus, split, betas, tradeoff_lambda, lexicon.as_deref()),
        Command::Analyze {
            checkpoint,
            corpus,
            beta,
            split,
            clip,
            lexicon,
        } => cmd_analyze(&common, &checkpoint, &corpus, beta, split, clip, lexicon.as_deref()),
        Command::Wilcoxon {
            csv,
            a,
            b,
            alternative,
            mode,
        } => wilcoxon(&common, &csv, &a, b.as_deref(), alternative, mode),
        Command::GenSynth {
            users,
            items,
            per_user,
            bias_strength,
            max_tokens,
        } => gen_synth(&common, users, items, per_user, bias_strength, max_tokens),
    }
}

#[derive(Serialize)]
struct IngestRecord<'a> {
    source_type: &'a str,
    k: usize,
    corpus: &'a CorpusConfig,
    synth: Option<&'a SynthConfig>,
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn print_summary(name: &str, corpus: &Corpus, skipped: usize) {
    let s = corpus.stats();
    println!(
        "{:<24} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "dataset", "users", "items", "reviews", "train", "val", "test", "vocab", "skipped"
    );
    println!(
        "{:<24} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}",
        name,
        thousands(s.users),
        thousands(s.items),
        thousands(s.reviews),
        thousands(s.train),
        thousands(s.val),
        thousands(s.test),
        thousands(s.vocab),
        thousands(skipped)
    );
    println!("users={} items={} reviews={}", thousands(s.users), thousands(s.items), thousands(s.reviews));
}

fn ingest(
    common: &Common,
    source: &Path,
    source_type: SourceType,
    k: usize,
    ratios: Option<Vec<f64>>,
    max_tokens: Option<usize>,
) -> Result<()> {
    let source = input(source);
    let mut ccfg: CorpusConfig = load_config(common)?;
    if let Some(r) = ratios {
        ccfg.ratios = [r[0], r[1], r[2]];
    }
    if let Some(m) = max_tokens {
        ccfg.max_tokens = m;
    }
    if let Some(s) = common.seed {
        ccfg.seed = s;
    }
    let name = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let dir = out_dir(common)?;
    let mut synth_cfg = None;
    let (corpus, skipped, truth) = match source_type {
        SourceType::Amazon | SourceType::Yelp => {
            let ParseOutcome { interactions, skipped } = if source_type == SourceType::Amazon {
                parse_amazon_jsonl(&source)?
            } else {
                parse_yelp_reviews(&source)?
            };
            let kept = k_core_filter(interactions, k).map_err(usage)?;
            (Corpus::build(kept, ccfg.clone()).map_err(usage)?, skipped, None)
        }
        SourceType::Synthetic => {
            let text = std::fs::read_to_string(&source).map_err(|e| Error::io(&source, e))?;
            let mut scfg: SynthConfig = serde_json::from_str(&text).map_err(Error::from)?;
            if let Some(s) = common.seed {
                scfg.seed = s;
            }
            let (corpus, truth) = generate(&scfg, &Lexicon::default_english(), ccfg.clone()).map_err(usage)?;
            synth_cfg = Some(scfg);
            (corpus, 0, Some(truth))
        }
    };
    let type_name = format!("{source_type:?}").to_lowercase();
    let mut m = RunManifest::new(
        "ingest",
        &IngestRecord {
            source_type: &type_name,
            k,
            corpus: &ccfg,
            synth: synth_cfg.as_ref(),
        },
    )?;
    corpus.save(&dir.join("corpus.json"))?;
    m.artifact("corpus", "corpus.json");
    if let Some(t) = truth {
        t.save(&dir.join("truth.json"))?;
        m.artifact("truth", "truth.json");
    }
    m.dataset_fingerprint = Some(fingerprint(&source)?);
    m.seeds = vec![ccfg.seed];
    m.write(dir)?;
    print_summary(&name, &corpus, skipped);
    Ok(())
}

fn gen_synth(
    common: &Common,
    users: Option<usize>,
    items: Option<usize>,
    per_user: Option<usize>,
    bias_strength: Option<f64>,
    max_tokens: Option<usize>,
) -> Result<()> {
    let mut cfg: SynthConfig = load_config(common)?;
    if let Some(v) = users {
        cfg.n_users = v;
    }
    if let Some(v) = items {
        cfg.n_items = v;
    }
    if let Some(v) = per_user {
        cfg.per_user = v;
    }
    if let Some(v) = bias_strength {
        cfg.bias_strength = v;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    let mut ccfg = CorpusConfig {
        seed: cfg.seed,
        ..CorpusConfig::default()
    };
    if let Some(m) = max_tokens {
        ccfg.max_tokens = m;
    }
    let dir = out_dir(common)?;
    let (corpus, truth) = generate(&cfg, &Lexicon::default_english(), ccfg.clone())?;
    #[derive(Serialize)]
    struct Record<'a> {
        synth: &'a SynthConfig,
        corpus: &'a CorpusConfig,
    }
    let mut m = RunManifest::new(
        "gen-synth",
        &Record {
            synth: &cfg,
            corpus: &ccfg,
        },
    )?;
    write_amazon_jsonl(&corpus.interactions, &dir.join("synth.jsonl"))?;
    corpus.save(&dir.join("corpus.json"))?;
    truth.save(&dir.join("truth.json"))?;
    m.artifact("reviews", "synth.jsonl");
    m.artifact("corpus", "corpus.json");
    m.artifact("truth", "truth.json");
    m.dataset_fingerprint = Some(fingerprint(&dir.join("corpus.json"))?);
    m.seeds = vec![cfg.seed];
    m.write(dir)?;
    print_summary("synthetic", &corpus, 0);
    Ok(())
}

fn cmd_train(
    common: &Common,
    corpus_path: &Path,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
) -> Result<()> {
    let mut cfg: TrainConfig = load_config(common)?;
    if let Some(v) = epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = lr {
        cfg.lr = v;
    }
    if let Some(v) = batch_size {
        cfg.batch_size = v;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    let (corpus, fp) = load_corpus(corpus_path)?;
    let dir = out_dir(common)?;
    let outcome = train::<f64>(&corpus, &cfg)?;
    let mut m = RunManifest::new("train", &cfg)?;
    outcome.checkpoint(&cfg)?.save(&dir.join("checkpoint.bin"))?;
    outcome.history.write_csv(&dir.join("history.csv"))?;
    m.artifact("checkpoint", "checkpoint.bin");
    m.artifact("history", "history.csv");
    m.dataset_fingerprint = Some(fp);
    m.seeds = vec![cfg.seed];
    m.write(dir)?;
    let best = outcome.history.best();
    println!(
        "epochs={} best_epoch={} {}_mse={:.6} time={:.1}s",
        outcome.history.epochs.len(),
        best.epoch,
        outcome.history.selection_split,
        best.val_mse,
        outcome.history.wall_time_secs
    );
    Ok(())
}

fn print_sweep(t: &SweepTable) {
    println!("{:>6} {:>10} {:>10} {:>10}  selected", "beta", "mse", "bu", "bi");
    for r in &t.rows {
        println!(
            "{:>6} {:>10.6} {:>10.6} {:>10.6}  {}",
            r.beta,
            r.mse,
            r.bu,
            r.bi,
            if r.selected { "*" } else { "" }
        );
    }
    println!("selected beta={} on {}", t.selected_beta, t.split);
}

fn sweep(
    common: &Common,
    ckpt: &Path,
    corpus_path: &Path,
    split: cfsd::data::Split,
    betas: Option<Vec<f64>>,
    lambda: Option<f64>,
    lex: Option<&Path>,
) -> Result<()> {
    let mut cfg: DebiasConfig = load_config(common)?;
    if let Some(b) = betas {
        cfg.sweep = b;
    }
    if let Some(lambda) = lambda {
        cfg.selection = Selection::MseBiasTradeoff { lambda };
    }
    cfg.validate().map_err(usage)?;
    let (corpus, fp) = load_corpus(corpus_path)?;
    let (model, tcfg) = load_model(ckpt)?;
    let profile = PolarityProfile::from_corpus(&corpus, &lexicon(lex)?)?;
    let dir = out_dir(common)?;
    let table = beta_sweep(&model, &corpus, split, &profile, &cfg)?;
    #[derive(Serialize)]
    struct Record<'a> {
        debias: &'a DebiasConfig,
        split: cfsd::data::Split,
    }
    let mut m = RunManifest::new("sweep-beta", &Record { debias: &cfg, split })?;
    table.write_csv(&dir.join("sweep.csv"))?;
    m.artifact("sweep", "sweep.csv");
    m.dataset_fingerprint = Some(fp);
    m.seeds = vec![tcfg.seed];
    m.write(dir)?;
    print_sweep(&table);
    Ok(())
}

fn cmd_analyze(
    common: &Common,
    ckpt: &Path,
    corpus_path: &Path,
    beta: Option<f64>,
    split: cfsd::data::Split,
    clip: bool,
    lex: Option<&Path>,
) -> Result<()> {
    let mut cfg: DebiasConfig = load_config(common)?;
    if let Some(b) = beta {
        cfg.beta = b;
    }
    cfg.clip |= clip;
    cfg.validate().map_err(usage)?;
    let (corpus, fp) = load_corpus(corpus_path)?;
    let (model, tcfg) = load_model(ckpt)?;
    let profile = PolarityProfile::from_corpus(&corpus, &lexicon(lex)?)?;
    let dir = out_dir(common)?;
    let report = analyze(&model, &corpus, split, &profile, cfg.beta, cfg.clip)?;
    #[derive(Serialize)]
    struct Record {
        beta: f64,
        clip: bool,
        split: cfsd::data::Split,
    }
    let mut m = RunManifest::new(
        "analyze",
        &Record {
            beta: cfg.beta,
            clip: cfg.clip,
            split,
        },
    )?;
    for p in report.write(dir)? {
        let name = p.file_name().expect("report files have names").to_owned();
        let key = Path::new(&name).file_stem().unwrap().to_string_lossy().into_owned();
        m.artifact(&key, PathBuf::from(name));
    }
    m.dataset_fingerprint = Some(fp);
    m.seeds = vec![tcfg.seed];
    m.write(dir)?;
    println!(
        "split={} beta={} mse={:.6} bu={:.6} bi={:.6} spearman={:.4}",
        report.split, report.beta, report.mse, report.bu, report.bi, report.correlation.spearman
    );
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::Usage(format!("no column named '{name}'")))
}

fn wilcoxon(
    common: &Common,
    path: &Path,
    a: &str,
    b: Option<&str>,
    alternative: cfsd::stats::Alternative,
    mode: cfsd::stats::WilcoxonMode,
) -> Result<()> {
    let path = input(path);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(Error::from)?.clone();
    let ia = column(&headers, a)?;
    let ib = b.map(|b| column(&headers, b)).transpose()?;
    let num = |rec: &csv::StringRecord, i: usize| -> Result<f64> {
        let s = rec.get(i).unwrap_or("").trim();
        s.parse()
            .map_err(|_| CliError::Usage(format!("{}: '{s}' is not a number", path.display())))
    };
    let mut diffs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(Error::from)?;
        let x = num(&rec, ia)?;
        diffs.push(match ib {
            Some(ib) => x - num(&rec, ib)?,
            None => x,
        });
    }
    let res: WilcoxonResult = wilcoxon_signed_rank(&diffs, alternative, mode)?;
    let dir = out_dir(common)?;
    #[derive(Serialize)]
    struct Record<'a> {
        a: &'a str,
        b: Option<&'a str>,
        alternative: cfsd::stats::Alternative,
        mode: cfsd::stats::WilcoxonMode,
    }
    let mut m = RunManifest::new(
        "wilcoxon",
        &Record {
            a,
            b,
            alternative,
            mode,
        },
    )?;
    let out = dir.join("wilcoxon.json");
    std::fs::write(&out, serde_json::to_string_pretty(&res).map_err(Error::from)? + "\n").map_err(|e| Error::io(&out, e))?;
    m.artifact("result", "wilcoxon.json");
    m.dataset_fingerprint = Some(fingerprint(&path)?);
    m.write(dir)?;
    let z = res.z.map(|z| format!(" z={z:.4}")).unwrap_or_default();
    println!(
        "n={} W-={} W+={}{z} p={:.4} ({:?}, {:?})",
        res.n, res.w_minus, res.w_plus, res.p, res.mode, res.alternative
    );
    Ok(())
}
