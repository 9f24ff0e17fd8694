//! Command-line entry point: convert, induce-brown, induce-kmeans,
//! train, tag, eval and cv-search subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every successful
//! run writes a JSON manifest next to each output file recording the
//! resolved options, input/output content digests, tool version and
//! wall time.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus_io::{
    corpus_stats, parse_absa_xml, read_column, to_bio, write_column, Sentence,
};
use crate::cvsearch::{config_name, search, SearchSpace};
use crate::evaluate::{error_report, evaluate};
use crate::features::FeatureConfig;
use crate::kmeans::{kmeans, load_vectors, to_lexicon, Metric};
use crate::lexicon::{load_brown_paths, load_flat_classes, Casing, ClusterLexicon, LexiconFamily};
use crate::tagger::{load_model, save_model, tag_file, train};
use crate::{brown, Error, Result};

#[derive(Parser)]
#[command(name = "ote", version, about = "Opinion target extraction toolkit")]
pub struct Cli {
    /// Maximum worker threads (upper bound; stages currently run
    /// single-threaded for determinism).
    #[arg(long, global = true, default_value_t = default_threads())]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
pub enum Command {
    /// Convert ABSA XML reviews to the BIO column format.
    Convert(ConvertArgs),
    /// Induce a Brown bit-path lexicon from a plain-text corpus.
    InduceBrown(InduceBrownArgs),
    /// Cluster word vectors with k-means into a flat lexicon.
    InduceKmeans(InduceKmeansArgs),
    /// Train an averaged-perceptron tagging model.
    Train(TrainArgs),
    /// Tag a column or XML file with a trained model.
    Tag(TagArgs),
    /// Exact-span evaluation of predictions against gold.
    Eval(EvalArgs),
    /// Two-stage cross-validated search over lexicon combinations.
    CvSearch(CvSearchArgs),
}

#[derive(Args)]
pub struct ConvertArgs {
    /// ABSA XML input (2014 or 2015/2016 layout).
    #[arg(long)]
    pub xml: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Resolve overlapping target spans in favour of the earlier span
    /// instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Print corpus statistics to stdout.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Args)]
pub struct InduceBrownArgs {
    /// Plain-text corpus; whitespace-separated tokens.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub classes: usize,
    /// Active-set size of the windowed greedy merger.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip lowercasing during preprocessing.
    #[arg(long)]
    pub no_lowercase: bool,
    /// Skip digit normalization (digits -> 0) during preprocessing.
    #[arg(long)]
    pub no_digit_norm: bool,
}

#[derive(Args)]
pub struct InduceKmeansArgs {
    /// Word vectors in the word2vec text format.
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "euclidean")]
    pub metric: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training corpus: column format or ABSA XML.
    #[arg(long)]
    pub train: PathBuf,
    /// Feature config file (key=value lines). Defaults to all local
    /// templates plus the supplied lexicons.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lexicon as NAME=PATH or NAME=FAMILY:PATH (family: brown, clark,
    /// w2v; detected from content when omitted).
    #[arg(long = "lexicon")]
    pub lexicons: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TagArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Lexicons named inside the model, as NAME=PATH or NAME=FAMILY:PATH.
    #[arg(long = "lexicon")]
    pub lexicons: Vec<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Also print the top-K false positive and negative surfaces.
    #[arg(long)]
    pub errors: Option<usize>,
    /// Emit the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct CvSearchArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long = "clark")]
    pub clark: Vec<String>,
    #[arg(long = "w2v")]
    pub w2v: Vec<String>,
    #[arg(long = "brown")]
    pub brown: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    options: Vec<String>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    tool_version: String,
    wall_time_ms: u128,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    let hash: String = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hash,
    })
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(
    subcommand: &str,
    options: &[String],
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        subcommand: subcommand.to_owned(),
        options: options.to_vec(),
        inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<_>>()?,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        wall_time_ms: started.elapsed().as_millis(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    for out in outputs {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        write_atomic(&out.with_file_name(name), &json)?;
    }
    Ok(())
}

/// Reads a corpus file, accepting either the column format or ABSA XML.
pub fn read_corpus(path: &Path, lenient: bool) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('<') {
        let parsed = parse_absa_xml(text.as_bytes())?;
        for w in &parsed.warnings {
            log::warn!("{}: {}", w.sentence_id, w.message);
        }
        parsed
            .sentences
            .iter()
            .map(|raw| to_bio(raw, lenient))
            .collect()
    } else {
        read_column(&text)
    }
}

fn parse_lexicon_flag(flag: &str) -> Result<(String, Option<LexiconFamily>, PathBuf)> {
    let (name, rest) = flag.split_once('=').ok_or_else(|| {
        Error::Invalid(format!("lexicon flag {flag:?} must be NAME=PATH"))
    })?;
    let (family, path) = match rest.split_once(':') {
        Some(("brown", p)) => (Some(LexiconFamily::Brown), p),
        Some(("clark", p)) => (Some(LexiconFamily::Clark), p),
        Some(("w2v", p)) => (Some(LexiconFamily::Word2vecKMeans), p),
        _ => (None, rest),
    };
    Ok((name.to_owned(), family, PathBuf::from(path)))
}

/// Loads a lexicon file, sniffing Brown vs flat layout when the family
/// is not given explicitly.
pub fn load_lexicon_file(
    name: &str,
    family: Option<LexiconFamily>,
    path: &Path,
) -> Result<ClusterLexicon> {
    let bytes = std::fs::read(path)?;
    match family {
        Some(LexiconFamily::Brown) => load_brown_paths(&bytes, name, Casing::Lowercase),
        Some(f) => load_flat_classes(&bytes, name, f, Casing::Lowercase),
        None => load_brown_paths(&bytes, name, Casing::Lowercase).or_else(|_| {
            load_flat_classes(&bytes, name, LexiconFamily::Clark, Casing::Lowercase)
        }),
    }
}

fn load_lexicon_flags(flags: &[String]) -> Result<(Vec<String>, HashMap<String, ClusterLexicon>)> {
    let mut names = Vec::new();
    let mut map = HashMap::new();
    for flag in flags {
        let (name, family, path) = parse_lexicon_flag(flag)?;
        let lex = load_lexicon_file(&name, family, &path)?;
        names.push(name.clone());
        map.insert(name, lex);
    }
    Ok((names, map))
}

fn lexicon_paths(flags: &[String]) -> Result<Vec<PathBuf>> {
    flags
        .iter()
        .map(|f| parse_lexicon_flag(f).map(|(_, _, p)| p))
        .collect()
}

/// Parses argv and runs the requested subcommand.
/// Returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints --help/--version output itself
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(command: Command) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Convert(a) => {
            let sentences = read_corpus(&a.xml, a.lenient)?;
            write_atomic(&a.out, write_column(&sentences, true).as_bytes())?;
            if a.stats {
                let st = corpus_stats(&sentences);
                println!(
                    "tokens\t{}\nb_targets\t{}\ni_targets\t{}\nmultiword_fraction\t{:.4}",
                    st.tokens, st.b_targets, st.i_targets, st.multiword_target_fraction
                );
            }
            write_manifest(
                "convert",
                &[format!("lenient={}", a.lenient)],
                &[a.xml],
                &[a.out],
                started,
            )
        }
        Command::InduceBrown(a) => {
            let text = std::fs::read_to_string(&a.corpus)?;
            let tokens: Vec<String> = text
                .split_whitespace()
                .map(|t| {
                    let t = if a.no_lowercase {
                        t.to_owned()
                    } else {
                        t.to_lowercase()
                    };
                    if a.no_digit_norm {
                        t
                    } else {
                        t.chars()
                            .map(|c| if c.is_ascii_digit() { '0' } else { c })
                            .collect()
                    }
                })
                .collect();
            let stats = brown::count_bigrams(&tokens, a.min_count)?;
            let tree = brown::brown_cluster(&stats, a.classes, a.window)?;
            let name = a
                .out
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "brown".to_owned());
            let lex = brown::emit_paths(&tree, &name)?;
            write_atomic(&a.out, crate::lexicon::serialize(&lex).as_bytes())?;
            write_manifest(
                "induce-brown",
                &[
                    format!("classes={}", a.classes),
                    format!("window={}", a.window),
                    format!("min_count={}", a.min_count),
                ],
                &[a.corpus],
                &[a.out],
                started,
            )
        }
        Command::InduceKmeans(a) => {
            let table = load_vectors(&std::fs::read(&a.vectors)?)?;
            let metric: Metric = a.metric.parse()?;
            let res = kmeans(&table, a.k, a.seed, metric)?;
            let name = a
                .out
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "w2v".to_owned());
            let lex = to_lexicon(&table, &res, &name)?;
            write_atomic(&a.out, crate::lexicon::serialize(&lex).as_bytes())?;
            log::info!("k-means inertia: {:.6}", res.inertia);
            write_manifest(
                "induce-kmeans",
                &[
                    format!("k={}", a.k),
                    format!("seed={}", a.seed),
                    format!("metric={}", a.metric),
                ],
                &[a.vectors],
                &[a.out],
                started,
            )
        }
        Command::Train(a) => {
            let corpus = read_corpus(&a.train, true)?;
            let (names, lexicons) = load_lexicon_flags(&a.lexicons)?;
            let config = match &a.config {
                Some(path) => FeatureConfig::from_config_text(&std::fs::read_to_string(path)?)?,
                None => FeatureConfig::with_lexicons(names),
            };
            let model = train(&corpus, &config, &lexicons, a.epochs, a.seed)?;
            write_atomic(&a.out, &save_model(&model)?)?;
            let mut inputs = vec![a.train];
            inputs.extend(lexicon_paths(&a.lexicons)?);
            if let Some(cfg) = a.config {
                inputs.push(cfg);
            }
            write_manifest(
                "train",
                &[format!("epochs={}", a.epochs), format!("seed={}", a.seed)],
                &inputs,
                &[a.out],
                started,
            )
        }
        Command::Tag(a) => {
            let model = load_model(&std::fs::read(&a.model)?)?;
            let (_, lexicons) = load_lexicon_flags(&a.lexicons)?;
            for warning in model.verify_lexicons(&lexicons) {
                log::warn!("{warning}");
            }
            let input = std::fs::read_to_string(&a.input)?;
            let output = tag_file(&model, &lexicons, &input)?;
            write_atomic(&a.out, output.as_bytes())?;
            let mut inputs = vec![a.model, a.input];
            inputs.extend(lexicon_paths(&a.lexicons)?);
            write_manifest("tag", &[], &inputs, &[a.out], started)
        }
        Command::Eval(a) => {
            let gold = read_corpus(&a.gold, true)?;
            let pred = read_corpus(&a.pred, true)?;
            let report = evaluate(&gold, &pred)?;
            if a.json {
                #[derive(Serialize)]
                struct JsonReport<'a> {
                    #[serde(flatten)]
                    report: &'a crate::evaluate::EvalReport,
                    top_fp: Vec<(String, usize)>,
                    top_fn: Vec<(String, usize)>,
                }
                let k = a.errors.unwrap_or(5);
                let (top_fp, top_fn) = error_report(&report, k);
                println!(
                    "{}",
                    serde_json::to_string_pretty(&JsonReport {
                        report: &report,
                        top_fp,
                        top_fn,
                    })?
                );
            } else {
                println!(
                    "P {:.4}  R {:.4}  F1 {:.4}  (tp {} fp {} fn {})",
                    report.precision, report.recall, report.f1, report.tp, report.fp, report.fn_
                );
                if let Some(k) = a.errors {
                    let (top_fp, top_fn) = error_report(&report, k);
                    println!("top false positives:");
                    for (surface, n) in top_fp {
                        println!("  {n}\t{surface}");
                    }
                    println!("top false negatives:");
                    for (surface, n) in top_fn {
                        println!("  {n}\t{surface}");
                    }
                }
            }
            Ok(())
        }
        Command::CvSearch(a) => {
            let corpus = read_corpus(&a.train, true)?;
            let mut lexicons = HashMap::new();
            let mut load_group = |flags: &[String], family: LexiconFamily| -> Result<Vec<String>> {
                let mut names = Vec::new();
                for flag in flags {
                    let (name, _, path) = parse_lexicon_flag(flag)?;
                    let lex = load_lexicon_file(&name, Some(family), &path)?;
                    names.push(name.clone());
                    lexicons.insert(name, lex);
                }
                Ok(names)
            };
            let space = SearchSpace {
                clark: load_group(&a.clark, LexiconFamily::Clark)?,
                w2v: load_group(&a.w2v, LexiconFamily::Word2vecKMeans)?,
                brown: load_group(&a.brown, LexiconFamily::Brown)?,
                folds: a.folds,
                epochs: a.epochs,
                seed: a.seed,
            };
            let result = search(&corpus, &space, &lexicons)?;
            println!(
                "winner: {} (mean F1 {:.4})",
                config_name(&result.winner_lexicons),
                result.ranked[0].mean_f1
            );
            write_atomic(&a.report, serde_json::to_vec_pretty(&result)?.as_slice())?;
            let mut inputs = vec![a.train];
            for group in [&a.clark, &a.w2v, &a.brown] {
                inputs.extend(lexicon_paths(group)?);
            }
            write_manifest(
                "cv-search",
                &[
                    format!("folds={}", a.folds),
                    format!("epochs={}", a.epochs),
                    format!("seed={}", a.seed),
                ],
                &inputs,
                &[a.report],
                started,
            )
        }
    }
}
