//! Averaged-perceptron sequence labelling over the three BIO labels.
//!
//! Training decodes each sentence with the current weights and applies
//! per-position updates against the gold labels, including first-order
//! transition features keyed `prev=<label>`. The running average over
//! all update steps is maintained lazily; a naive accumulator is kept as
//! a reference for tests. Decoding is exact Viterbi with the hard BIO
//! constraint that I-target never follows O or sentence start.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::{parse_absa_xml, read_column, to_bio, write_column, Label, Sentence};
use crate::features::{extract, FeatureConfig, FeatureSet};
use crate::lexicon::{self, ClusterLexicon};
use crate::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

const N_LABELS: usize = 3;

fn label_index(l: Label) -> usize {
    match l {
        Label::O => 0,
        Label::B => 1,
        Label::I => 2,
    }
}

fn trans_key(prev: Label) -> String {
    format!("prev={}", prev.as_str())
}

#[derive(Debug, Clone)]
pub struct PerceptronModel {
    pub config: FeatureConfig,
    /// Averaged weights, (feature key, label) -> value.
    weights: HashMap<String, [f64; N_LABELS]>,
    /// Content hashes of the lexicons the model was trained with.
    pub lexicon_fingerprints: BTreeMap<String, String>,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decode {
    pub labels: Vec<Label>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Timestamp-based lazy averaging.
    Lazy,
    /// Full accumulator after every sentence. Reference implementation.
    Naive,
}

/// SHA-256 of a lexicon's canonical serialization.
pub fn lexicon_fingerprint(lex: &ClusterLexicon) -> String {
    let digest = Sha256::digest(lexicon::serialize(lex).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl PerceptronModel {
    /// Builds a model directly from a weight map. Used by tests that
    /// probe decoding with arbitrary weights.
    pub fn from_weights(
        config: FeatureConfig,
        weights: HashMap<String, [f64; N_LABELS]>,
    ) -> PerceptronModel {
        PerceptronModel {
            config,
            weights,
            lexicon_fingerprints: BTreeMap::new(),
            epochs: 0,
            seed: 0,
        }
    }

    pub fn weights(&self) -> &HashMap<String, [f64; N_LABELS]> {
        &self.weights
    }

    /// Returns a warning per lexicon whose content hash differs from the
    /// fingerprint stored at training time.
    pub fn verify_lexicons(&self, lexicons: &HashMap<String, ClusterLexicon>) -> Vec<String> {
        let mut warnings = Vec::new();
        for (name, stored) in &self.lexicon_fingerprints {
            match lexicons.get(name) {
                Some(lex) => {
                    if &lexicon_fingerprint(lex) != stored {
                        warnings.push(format!(
                            "lexicon {name:?} content differs from the one used at training"
                        ));
                    }
                }
                None => warnings.push(format!("lexicon {name:?} not supplied")),
            }
        }
        warnings
    }
}

fn emission_scores(weights: &HashMap<String, [f64; N_LABELS]>, feats: &FeatureSet) -> [f64; N_LABELS] {
    let mut scores = [0.0; N_LABELS];
    for f in feats {
        if let Some(w) = weights.get(f) {
            for (s, v) in scores.iter_mut().zip(w) {
                *s += v;
            }
        }
    }
    scores
}

/// Exact Viterbi over the 3-label lattice. Transitions O->I and BOS->I
/// are hard-blocked; ties prefer O, then B-target, then I-target.
fn viterbi(
    weights: &HashMap<String, [f64; N_LABELS]>,
    feats: &[FeatureSet],
) -> (Vec<Label>, f64) {
    let n = feats.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let trans: [[f64; N_LABELS]; N_LABELS] = {
        let mut t = [[0.0; N_LABELS]; N_LABELS];
        for (pi, prev) in Label::ALL.iter().enumerate() {
            if let Some(w) = weights.get(&trans_key(*prev)) {
                t[pi] = *w;
            }
            t[pi][label_index(Label::I)] = if *prev == Label::O {
                f64::NEG_INFINITY
            } else {
                t[pi][label_index(Label::I)]
            };
        }
        t
    };

    let mut dp = vec![[f64::NEG_INFINITY; N_LABELS]; n];
    let mut back = vec![[0usize; N_LABELS]; n];
    let emit0 = emission_scores(weights, &feats[0]);
    for l in 0..N_LABELS {
        if l == label_index(Label::I) {
            continue; // BOS -> I blocked
        }
        dp[0][l] = emit0[l];
    }
    for i in 1..n {
        let emit = emission_scores(weights, &feats[i]);
        for l in 0..N_LABELS {
            let mut best_p = 0;
            let mut best = f64::NEG_INFINITY;
            for p in 0..N_LABELS {
                let cand = dp[i - 1][p] + trans[p][l];
                if cand > best {
                    best = cand;
                    best_p = p;
                }
            }
            dp[i][l] = best + emit[l];
            back[i][l] = best_p;
        }
    }

    let mut last = 0;
    let mut best = f64::NEG_INFINITY;
    for l in 0..N_LABELS {
        if dp[n - 1][l] > best {
            best = dp[n - 1][l];
            last = l;
        }
    }
    let mut path = vec![last; n];
    for i in (1..n).rev() {
        path[i - 1] = back[i][path[i]];
    }
    (path.into_iter().map(|l| Label::ALL[l]).collect(), best)
}

struct Trainer {
    weights: HashMap<String, [f64; N_LABELS]>,
    totals: HashMap<String, [f64; N_LABELS]>,
    stamps: HashMap<String, [u64; N_LABELS]>,
    tick: u64,
    averaging: Averaging,
    naive_acc: HashMap<String, [f64; N_LABELS]>,
}

impl Trainer {
    fn new(averaging: Averaging) -> Trainer {
        Trainer {
            weights: HashMap::new(),
            totals: HashMap::new(),
            stamps: HashMap::new(),
            tick: 0,
            averaging,
            naive_acc: HashMap::new(),
        }
    }

    fn update(&mut self, key: &str, label: usize, delta: f64) {
        if self.averaging == Averaging::Lazy {
            let w = self.weights.get(key).map_or(0.0, |v| v[label]);
            let stamp = self.stamps.entry(key.to_owned()).or_default();
            let total = self.totals.entry(key.to_owned()).or_default();
            total[label] += w * (self.tick - stamp[label]) as f64;
            stamp[label] = self.tick;
        }
        self.weights.entry(key.to_owned()).or_default()[label] += delta;
    }

    /// Called once after each sentence, correct or not.
    fn end_sentence(&mut self) {
        self.tick += 1;
        if self.averaging == Averaging::Naive {
            for (key, w) in &self.weights {
                let acc = self.naive_acc.entry(key.clone()).or_default();
                for (a, v) in acc.iter_mut().zip(w) {
                    *a += v;
                }
            }
        }
    }

    fn finalize(mut self) -> HashMap<String, [f64; N_LABELS]> {
        let ticks = self.tick.max(1) as f64;
        match self.averaging {
            Averaging::Lazy => {
                let mut avg = HashMap::new();
                for (key, w) in &self.weights {
                    let stamp = self.stamps.get(key).copied().unwrap_or_default();
                    let total = self.totals.entry(key.clone()).or_default();
                    let mut row = [0.0; N_LABELS];
                    for l in 0..N_LABELS {
                        row[l] = (total[l] + w[l] * (self.tick - stamp[l]) as f64) / ticks;
                    }
                    avg.insert(key.clone(), row);
                }
                avg
            }
            Averaging::Naive => {
                let mut avg = self.naive_acc;
                for row in avg.values_mut() {
                    for v in row {
                        *v /= ticks;
                    }
                }
                avg
            }
        }
    }
}

fn sentence_features(
    sent: &Sentence,
    config: &FeatureConfig,
    lexicons: &HashMap<String, ClusterLexicon>,
) -> Result<Vec<FeatureSet>> {
    (0..sent.len())
        .map(|i| extract(sent, i, config, lexicons))
        .collect()
}

/// Trains an averaged perceptron. Sentences are shuffled each epoch with
/// the seeded generator; the result is deterministic for a fixed
/// (corpus, config, epochs, seed).
pub fn train(
    corpus: &[Sentence],
    config: &FeatureConfig,
    lexicons: &HashMap<String, ClusterLexicon>,
    epochs: usize,
    seed: u64,
) -> Result<PerceptronModel> {
    train_with_averaging(corpus, config, lexicons, epochs, seed, Averaging::Lazy)
}

pub fn train_with_averaging(
    corpus: &[Sentence],
    config: &FeatureConfig,
    lexicons: &HashMap<String, ClusterLexicon>,
    epochs: usize,
    seed: u64,
    averaging: Averaging,
) -> Result<PerceptronModel> {
    if corpus.is_empty() {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    if epochs < 1 {
        return Err(Error::Invalid("epochs must be >= 1".into()));
    }
    for s in corpus {
        if !s.valid_bio() {
            return Err(Error::Invalid(format!(
                "sentence {}: invalid BIO labels in training data",
                s.id
            )));
        }
    }
    for name in &config.lexicons {
        if !lexicons.contains_key(name) {
            return Err(Error::UnknownLexicon(name.clone()));
        }
    }

    let feats: Vec<Vec<FeatureSet>> = corpus
        .iter()
        .map(|s| sentence_features(s, config, lexicons))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trainer = Trainer::new(averaging);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &si in &order {
            let sent = &corpus[si];
            if sent.is_empty() {
                trainer.end_sentence();
                continue;
            }
            let (pred, _) = viterbi(&trainer.weights, &feats[si]);
            for i in 0..sent.len() {
                if pred[i] != sent.labels[i] {
                    for f in &feats[si][i] {
                        trainer.update(f, label_index(sent.labels[i]), 1.0);
                        trainer.update(f, label_index(pred[i]), -1.0);
                    }
                }
                if i > 0 {
                    let gold_edge = (sent.labels[i - 1], sent.labels[i]);
                    let pred_edge = (pred[i - 1], pred[i]);
                    if gold_edge != pred_edge {
                        trainer.update(&trans_key(gold_edge.0), label_index(gold_edge.1), 1.0);
                        trainer.update(&trans_key(pred_edge.0), label_index(pred_edge.1), -1.0);
                    }
                }
            }
            trainer.end_sentence();
        }
    }

    let mut fingerprints = BTreeMap::new();
    for name in &config.lexicons {
        fingerprints.insert(name.clone(), lexicon_fingerprint(&lexicons[name]));
    }
    Ok(PerceptronModel {
        config: config.clone(),
        weights: trainer.finalize(),
        lexicon_fingerprints: fingerprints,
        epochs,
        seed,
    })
}

/// Viterbi-decodes one sentence under the model's averaged weights.
pub fn decode(
    model: &PerceptronModel,
    sent: &Sentence,
    lexicons: &HashMap<String, ClusterLexicon>,
) -> Result<Decode> {
    let feats = sentence_features(sent, &model.config, lexicons)?;
    let (labels, score) = viterbi(&model.weights, &feats);
    Ok(Decode { labels, score })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: String,
    labels: Vec<String>,
    weights: HashMap<String, [f64; N_LABELS]>,
    lexicon_fingerprints: BTreeMap<String, String>,
    epochs: usize,
    seed: u64,
}

pub fn save_model(model: &PerceptronModel) -> Result<Vec<u8>> {
    let file = ModelFile {
        version: MODEL_VERSION,
        config: model.config.to_config_text(),
        labels: Label::ALL.iter().map(|l| l.as_str().to_owned()).collect(),
        weights: model.weights.clone(),
        lexicon_fingerprints: model.lexicon_fingerprints.clone(),
        epochs: model.epochs,
        seed: model.seed,
    };
    Ok(serde_json::to_vec(&file)?)
}

pub fn load_model(bytes: &[u8]) -> Result<PerceptronModel> {
    let file: ModelFile = serde_json::from_slice(bytes)?;
    if file.version != MODEL_VERSION {
        return Err(Error::ModelVersion {
            found: file.version,
            expected: MODEL_VERSION,
        });
    }
    let expected: Vec<String> = Label::ALL.iter().map(|l| l.as_str().to_owned()).collect();
    if file.labels != expected {
        return Err(Error::Invalid(format!(
            "unexpected label set {:?}",
            file.labels
        )));
    }
    Ok(PerceptronModel {
        config: FeatureConfig::from_config_text(&file.config)?,
        weights: file.weights,
        lexicon_fingerprints: file.lexicon_fingerprints,
        epochs: file.epochs,
        seed: file.seed,
    })
}

/// Tags a column or XML input, emitting the column format with predicted
/// labels and character offsets preserved.
pub fn tag_file(
    model: &PerceptronModel,
    lexicons: &HashMap<String, ClusterLexicon>,
    input: &str,
) -> Result<String> {
    let sentences = if input.trim_start().starts_with('<') {
        let parsed = parse_absa_xml(input.as_bytes())?;
        parsed
            .sentences
            .iter()
            .map(|raw| to_bio(raw, true))
            .collect::<Result<Vec<_>>>()?
    } else {
        read_column(input)?
    };
    let mut tagged = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let dec = decode(model, s, lexicons)?;
        tagged.push(Sentence {
            id: s.id.clone(),
            tokens: s.tokens.clone(),
            labels: dec.labels,
        });
    }
    Ok(write_column(&tagged, true))
}
