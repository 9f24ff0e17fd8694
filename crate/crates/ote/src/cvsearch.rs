//! Two-stage cross-validated search over clustering-lexicon combinations.
//!
//! Stage 1 scores every subset of the Clark and word2vec lexicons
//! (including the empty, local-only baseline) by k-fold mean span-F1.
//! Stage 2 takes the stage-1 winner and scores its union with every
//! subset of the Brown lexicons. The overall best configuration wins;
//! ties go to fewer lexicons, then to the lexicographically smaller
//! config name.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus_io::Sentence;
use crate::evaluate::evaluate;
use crate::features::FeatureConfig;
use crate::lexicon::ClusterLexicon;
use crate::tagger::{decode, train, PerceptronModel};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub clark: Vec<String>,
    pub w2v: Vec<String>,
    pub brown: Vec<String>,
    pub folds: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            clark: Vec::new(),
            w2v: Vec::new(),
            brown: Vec::new(),
            folds: 5,
            epochs: 10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigScore {
    pub name: String,
    pub lexicons: Vec<String>,
    pub mean_f1: f64,
    pub fold_f1: Vec<f64>,
    pub stage: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    /// Every evaluated config exactly once, best mean F1 first.
    pub ranked: Vec<ConfigScore>,
    pub winner_lexicons: Vec<String>,
    pub stage1_evals: usize,
    pub stage2_evals: usize,
}

impl SearchResult {
    pub fn winner_config(&self) -> FeatureConfig {
        FeatureConfig::with_lexicons(self.winner_lexicons.iter().cloned())
    }
}

pub fn config_name(lexicons: &[String]) -> String {
    if lexicons.is_empty() {
        "local".to_owned()
    } else {
        lexicons.join("+")
    }
}

/// Splits a corpus into k (train, dev) partitions: a seeded shuffle
/// followed by k near-equal contiguous blocks, each serving once as dev.
pub fn make_folds(
    corpus: &[Sentence],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<Sentence>, Vec<Sentence>)>> {
    if k < 2 {
        return Err(Error::Invalid("folds must be >= 2".into()));
    }
    if corpus.len() < k {
        return Err(Error::Invalid(format!(
            "corpus has {} sentences, need at least {k}",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = corpus.len() / k;
    let extra = corpus.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let dev_idx = &order[cursor..cursor + size];
        cursor += size;
        let dev: Vec<Sentence> = dev_idx.iter().map(|&i| corpus[i].clone()).collect();
        let train: Vec<Sentence> = order[..cursor - size]
            .iter()
            .chain(&order[cursor..])
            .map(|&i| corpus[i].clone())
            .collect();
        folds.push((train, dev));
    }
    Ok(folds)
}

fn cv_score(
    folds: &[(Vec<Sentence>, Vec<Sentence>)],
    lexicon_names: &[String],
    lexicons: &HashMap<String, ClusterLexicon>,
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let config = FeatureConfig::with_lexicons(lexicon_names.iter().cloned());
    let mut scores = Vec::with_capacity(folds.len());
    for (train_set, dev_set) in folds {
        let model = train(train_set, &config, lexicons, epochs, seed)?;
        let mut pred = Vec::with_capacity(dev_set.len());
        for s in dev_set {
            let dec = decode(&model, s, lexicons)?;
            pred.push(Sentence {
                id: s.id.clone(),
                tokens: s.tokens.clone(),
                labels: dec.labels,
            });
        }
        scores.push(evaluate(dev_set, &pred)?.f1);
    }
    Ok(scores)
}

fn subsets(names: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::with_capacity(1 << names.len());
    for mask in 0u32..(1 << names.len()) {
        out.push(
            names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| n.clone())
                .collect(),
        );
    }
    out
}

fn better(a: &ConfigScore, b: &ConfigScore) -> std::cmp::Ordering {
    b.mean_f1
        .partial_cmp(&a.mean_f1)
        .unwrap()
        .then_with(|| a.lexicons.len().cmp(&b.lexicons.len()))
        .then_with(|| a.name.cmp(&b.name))
}

/// Runs the two-stage search and returns every evaluated configuration
/// ranked by mean F1.
pub fn search(
    corpus: &[Sentence],
    space: &SearchSpace,
    lexicons: &HashMap<String, ClusterLexicon>,
) -> Result<SearchResult> {
    if corpus.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    for name in space
        .clark
        .iter()
        .chain(&space.w2v)
        .chain(&space.brown)
    {
        if !lexicons.contains_key(name) {
            return Err(Error::UnknownLexicon(name.clone()));
        }
    }
    let folds = make_folds(corpus, space.folds, space.seed)?;

    let mut flat: Vec<String> = space.clark.clone();
    flat.extend(space.w2v.iter().cloned());

    let mut scores: Vec<ConfigScore> = Vec::new();
    let mut stage1_evals = 0;
    for subset in subsets(&flat) {
        let fold_f1 = cv_score(&folds, &subset, lexicons, space.epochs, space.seed)?;
        let mean_f1 = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
        scores.push(ConfigScore {
            name: config_name(&subset),
            lexicons: subset,
            mean_f1,
            fold_f1,
            stage: 1,
        });
        stage1_evals += 1;
    }
    let stage1_winner = scores.iter().min_by(|a, b| better(a, b)).unwrap().clone();

    let mut stage2_evals = 0;
    for brown_subset in subsets(&space.brown) {
        let mut combined = stage1_winner.lexicons.clone();
        combined.extend(brown_subset);
        let name = config_name(&combined);
        let fold_f1 = cv_score(&folds, &combined, lexicons, space.epochs, space.seed)?;
        let mean_f1 = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
        stage2_evals += 1;
        if scores.iter().any(|s| s.name == name) {
            continue; // the stage-1 winner itself, already listed
        }
        scores.push(ConfigScore {
            name,
            lexicons: combined,
            mean_f1,
            fold_f1,
            stage: 2,
        });
    }

    scores.sort_by(better);
    let winner_lexicons = scores[0].lexicons.clone();
    Ok(SearchResult {
        ranked: scores,
        winner_lexicons,
        stage1_evals,
        stage2_evals,
    })
}

/// Trains the final model on the full corpus with the winning config.
pub fn final_train(
    corpus: &[Sentence],
    winner: &FeatureConfig,
    lexicons: &HashMap<String, ClusterLexicon>,
    epochs: usize,
    seed: u64,
) -> Result<PerceptronModel> {
    train(corpus, winner, lexicons, epochs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{tokenize, Label};

    fn sent(id: usize, text: &str, target_tok: Option<usize>) -> Sentence {
        let tokens = tokenize(text);
        let mut labels = vec![Label::O; tokens.len()];
        if let Some(t) = target_tok {
            labels[t] = Label::B;
        }
        Sentence {
            id: format!("s{id}"),
            tokens,
            labels,
        }
    }

    fn small_corpus(n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| sent(i, &format!("token{i} pizza good"), Some(1)))
            .collect()
    }

    #[test]
    fn folds_partition_the_corpus() {
        let corpus = small_corpus(10);
        let folds = make_folds(&corpus, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all_dev: Vec<String> = Vec::new();
        for (train, dev) in &folds {
            assert_eq!(dev.len(), 2);
            assert_eq!(train.len(), 8);
            all_dev.extend(dev.iter().map(|s| s.id.clone()));
        }
        all_dev.sort();
        let mut expected: Vec<String> = corpus.iter().map(|s| s.id.clone()).collect();
        expected.sort();
        assert_eq!(all_dev, expected);
    }

    #[test]
    fn folds_are_deterministic_and_sized() {
        let corpus = small_corpus(13);
        let f1 = make_folds(&corpus, 4, 9).unwrap();
        let f2 = make_folds(&corpus, 4, 9).unwrap();
        for ((_, d1), (_, d2)) in f1.iter().zip(&f2) {
            let ids1: Vec<&str> = d1.iter().map(|s| s.id.as_str()).collect();
            let ids2: Vec<&str> = d2.iter().map(|s| s.id.as_str()).collect();
            assert_eq!(ids1, ids2);
        }
        let sizes: Vec<usize> = f1.iter().map(|(_, d)| d.len()).collect();
        assert_eq!(sizes, [4, 3, 3, 3]);
        assert!(make_folds(&corpus, 14, 0).is_err());
    }

    #[test]
    fn enumeration_counts() {
        let corpus = small_corpus(10);
        let mut lexicons = HashMap::new();
        for (name, family) in [
            ("C1", crate::lexicon::LexiconFamily::Clark),
            ("W1", crate::lexicon::LexiconFamily::Word2vecKMeans),
        ] {
            lexicons.insert(
                name.to_string(),
                crate::lexicon::load_flat_classes(
                    b"pizza\t1\n",
                    name,
                    family,
                    crate::lexicon::Casing::Lowercase,
                )
                .unwrap(),
            );
        }
        lexicons.insert(
            "B1".to_string(),
            crate::lexicon::load_brown_paths(b"0101\tpizza\t1\n", "B1", crate::lexicon::Casing::Lowercase)
                .unwrap(),
        );
        let space = SearchSpace {
            clark: vec!["C1".into()],
            w2v: vec!["W1".into()],
            brown: vec!["B1".into()],
            folds: 5,
            epochs: 2,
            seed: 1,
        };
        let result = search(&corpus, &space, &lexicons).unwrap();
        assert_eq!(result.stage1_evals, 4);
        assert_eq!(result.stage2_evals, 2);
        // ranked list has no duplicate configs
        let mut names: Vec<&str> = result.ranked.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        let before = names.len();
        names.dedup();
        assert_eq!(names.len(), before);
    }

    #[test]
    fn local_only_winner_trains_like_plain_train() {
        let corpus = small_corpus(8);
        let lexicons = HashMap::new();
        let config = FeatureConfig::default();
        let direct = train(&corpus, &config, &lexicons, 3, 2).unwrap();
        let via_final = final_train(&corpus, &config, &lexicons, 3, 2).unwrap();
        assert_eq!(direct.weights(), via_final.weights());
        assert!(via_final.lexicon_fingerprints.is_empty());
    }
}
