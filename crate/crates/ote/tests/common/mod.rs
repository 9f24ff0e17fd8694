//! Shared generators for the integration suites: a synthetic corpus with
//! planted word clusters, random labelled corpora, and a linearly
//! separable toy corpus.

#![allow(dead_code)]

use std::collections::HashMap;

use ote::corpus_io::{Label, Sentence, Token};
use ote::lexicon::{Casing, ClusterClass, ClusterLexicon, LexiconFamily};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random lowercase word, 4..=8 letters, drawn from a fixed alphabet so
/// target and distractor vocabularies share one character distribution.
pub fn random_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(4..=8);
    (0..len)
        .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
        .collect()
}

/// Builds a sentence from whitespace-joined tokens with consistent
/// character offsets and the given labels.
pub fn sentence_from_tokens(id: &str, tokens: &[&str], labels: &[Label]) -> Sentence {
    assert_eq!(tokens.len(), labels.len());
    let mut toks = Vec::new();
    let mut pos = 0usize;
    for t in tokens {
        let n = t.chars().count();
        toks.push(Token {
            surface: (*t).to_string(),
            start: pos,
            end: pos + n,
        });
        pos += n + 1;
    }
    Sentence {
        id: id.to_string(),
        tokens: toks,
        labels: labels.to_vec(),
    }
}

pub struct PlantedCorpus {
    pub train: Vec<Sentence>,
    pub test: Vec<Sentence>,
    /// Flat lexicon mapping target words to one class and distractor
    /// words to another.
    pub lexicon: ClusterLexicon,
}

const TEMPLATES: [(&[&str], usize); 4] = [
    (&["the", "", "was", "great"], 1),
    (&["i", "really", "liked", "the", ""], 4),
    (&["the", "", "tasted", "fine", "tonight"], 1),
    (&["try", "the", "", "next", "time"], 2),
];

fn fill_template(id: &str, n: usize, word: &str, is_target: bool) -> Sentence {
    let (slots, hole) = TEMPLATES[n % TEMPLATES.len()];
    let tokens: Vec<&str> = slots
        .iter()
        .enumerate()
        .map(|(i, s)| if i == hole { word } else { *s })
        .collect();
    let labels: Vec<Label> = (0..tokens.len())
        .map(|i| {
            if i == hole && is_target {
                Label::B
            } else {
                Label::O
            }
        })
        .collect();
    sentence_from_tokens(id, &tokens, &labels)
}

/// Synthetic corpus with planted clusters. Target and distractor words
/// come from the same character distribution and appear in identical
/// sentence templates, so nothing orthographic or contextual separates
/// them; only identity (for seen words) or the planted lexicon (for all
/// words) can. 30% of the distinct target surface forms in the test set
/// never occur in training.
pub fn planted_corpus(seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = std::collections::HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let w = random_word(rng);
        if vocab.insert(w.clone()) {
            return w;
        }
    };
    let targets: Vec<String> = (0..200).map(|_| fresh(&mut rng)).collect();
    let distractors: Vec<String> = (0..200).map(|_| fresh(&mut rng)).collect();
    // first 140 target words may appear in training; the rest are held out
    let (seen, unseen) = targets.split_at(140);

    let mut train = Vec::new();
    let mut used_in_train = Vec::new();
    for i in 0..350 {
        let s = if i % 2 == 0 {
            let w = &seen[rng.random_range(0..seen.len())];
            used_in_train.push(w.clone());
            fill_template(&format!("tr{i}"), i / 2, w, true)
        } else {
            let w = &distractors[rng.random_range(0..distractors.len())];
            fill_template(&format!("tr{i}"), i / 2, w, false)
        };
        train.push(s);
    }
    used_in_train.sort();
    used_in_train.dedup();

    // test target surfaces: 35 distinct seen + 15 distinct unseen = 30%
    let test_seen: Vec<&String> = used_in_train.choose_multiple(&mut rng, 35).collect();
    let test_unseen: Vec<&String> = unseen.choose_multiple(&mut rng, 15).collect();
    let mut test_words: Vec<&String> = test_seen.into_iter().chain(test_unseen).collect();
    test_words.shuffle(&mut rng);
    let mut test = Vec::new();
    for i in 0..150 {
        let s = if i % 2 == 0 {
            let w = test_words[(i / 2) % test_words.len()];
            fill_template(&format!("te{i}"), i / 2, w, true)
        } else {
            let w = &distractors[rng.random_range(0..distractors.len())];
            fill_template(&format!("te{i}"), i / 2, w, false)
        };
        test.push(s);
    }

    let mut entries = HashMap::new();
    for w in &targets {
        entries.insert(w.clone(), ClusterClass::Flat(1));
    }
    for w in &distractors {
        entries.insert(w.clone(), ClusterClass::Flat(2));
    }
    let lexicon =
        ClusterLexicon::new("planted", LexiconFamily::Clark, Casing::Lowercase, entries).unwrap();
    PlantedCorpus {
        train,
        test,
        lexicon,
    }
}

/// Uniformly random valid BIO labelling of length `n`.
pub fn random_bio_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    let mut labels = Vec::with_capacity(n);
    let mut prev = Label::O;
    for _ in 0..n {
        let choices: &[Label] = if prev == Label::O {
            &[Label::O, Label::B]
        } else {
            &[Label::O, Label::B, Label::I]
        };
        let l = *choices.choose(rng).unwrap();
        labels.push(l);
        prev = l;
    }
    labels
}

/// Random sentence over a small vocabulary with a uniformly random valid
/// BIO labelling.
pub fn random_labelled_sentence(rng: &mut ChaCha8Rng, id: &str) -> Sentence {
    let n = rng.random_range(1..=12);
    let words: Vec<String> = (0..n).map(|_| random_word(rng)).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let labels = random_bio_labels(rng, n);
    sentence_from_tokens(id, &refs, &labels)
}

/// Corpus where a single surface feature perfectly predicts the target:
/// linearly separable, so the perceptron must fit it exactly.
pub fn separable_corpus() -> Vec<Sentence> {
    let mut out = Vec::new();
    let foods = ["pasta", "pizza", "soup", "salad"];
    let others = ["decor", "noise", "music", "queue"];
    for (i, f) in foods.iter().enumerate() {
        out.push(sentence_from_tokens(
            &format!("f{i}"),
            &["the", f, "was", "terrific"],
            &[Label::O, Label::B, Label::O, Label::O],
        ));
    }
    for (i, o) in others.iter().enumerate() {
        out.push(sentence_from_tokens(
            &format!("o{i}"),
            &["the", o, "was", "terrific"],
            &[Label::O, Label::O, Label::O, Label::O],
        ));
    }
    out.push(sentence_from_tokens(
        "m0",
        &["pasta", "and", "pizza", "rule"],
        &[Label::B, Label::O, Label::B, Label::O],
    ));
    out
}
