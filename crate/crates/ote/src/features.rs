//! Sparse feature extraction over a 5-token window.
//!
//! Local templates cover surfaces, lowercased forms, word shapes,
//! prefixes/suffixes of the focus token and lowercase token bigrams.
//! Clustering features query any number of lexicons at every window
//! slot; lexicon stacking and combining are nothing more than the order
//! of the config's lexicon list. Every key has the form
//! `template=value@offset`.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus_io::Sentence;
use crate::lexicon::{ClusterLexicon, Lookup};
use crate::{Error, Result};

pub const PAD_BOS: &str = "*BOS*";
pub const PAD_EOS: &str = "*EOS*";
pub const NOT_FOUND: &str = "<NOTFOUND>";

/// Which local template families are active. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalTemplates {
    pub surfaces: bool,
    pub shapes: bool,
    pub affixes: bool,
    pub bigrams: bool,
}

impl Default for LocalTemplates {
    fn default() -> Self {
        LocalTemplates {
            surfaces: true,
            shapes: true,
            affixes: true,
            bigrams: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureConfig {
    pub local: LocalTemplates,
    /// Context window radius in tokens; 2 means a 5-token window.
    pub window_radius: usize,
    /// Maximum prefix/suffix length of the focus token.
    pub affix_max: usize,
    /// Active lexicons, in order. Multiple names of one family stack;
    /// names of different families combine.
    pub lexicons: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            local: LocalTemplates::default(),
            window_radius: 2,
            affix_max: 4,
            lexicons: Vec::new(),
        }
    }
}

impl FeatureConfig {
    pub fn with_lexicons<S: Into<String>>(names: impl IntoIterator<Item = S>) -> FeatureConfig {
        FeatureConfig {
            lexicons: names.into_iter().map(Into::into).collect(),
            ..FeatureConfig::default()
        }
    }

    /// Serializes as key=value lines, the format stored inside models.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "surfaces={}", self.local.surfaces);
        let _ = writeln!(out, "shapes={}", self.local.shapes);
        let _ = writeln!(out, "affixes={}", self.local.affixes);
        let _ = writeln!(out, "bigrams={}", self.local.bigrams);
        let _ = writeln!(out, "window_radius={}", self.window_radius);
        let _ = writeln!(out, "affix_max={}", self.affix_max);
        let _ = writeln!(out, "lexicons={}", self.lexicons.join(","));
        out
    }

    pub fn from_config_text(text: &str) -> Result<FeatureConfig> {
        let mut cfg = FeatureConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
                line: lineno + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let bad = |v: &str| Error::Format {
                line: lineno + 1,
                msg: format!("bad value {v:?} for {key}"),
            };
            match key {
                "surfaces" => cfg.local.surfaces = value.parse().map_err(|_| bad(value))?,
                "shapes" => cfg.local.shapes = value.parse().map_err(|_| bad(value))?,
                "affixes" => cfg.local.affixes = value.parse().map_err(|_| bad(value))?,
                "bigrams" => cfg.local.bigrams = value.parse().map_err(|_| bad(value))?,
                "window_radius" => cfg.window_radius = value.parse().map_err(|_| bad(value))?,
                "affix_max" => cfg.affix_max = value.parse().map_err(|_| bad(value))?,
                "lexicons" => {
                    cfg.lexicons = value
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_owned)
                        .collect()
                }
                other => {
                    return Err(Error::Format {
                        line: lineno + 1,
                        msg: format!("unknown config key {other:?}"),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

/// Sparse binary feature set, keyed `template=value@offset`.
pub type FeatureSet = BTreeSet<String>;

/// Word shape: uppercase runs -> X, lowercase -> x, digits -> 0,
/// anything else -> ‡, with runs collapsed.
pub fn word_shape(word: &str) -> String {
    let mut out = String::new();
    let mut last = '\0';
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() {
            '0'
        } else {
            '‡'
        };
        if s != last {
            out.push(s);
            last = s;
        }
    }
    out
}

fn surface_at(sent: &Sentence, pos: isize) -> &str {
    if pos < 0 {
        PAD_BOS
    } else if pos as usize >= sent.len() {
        PAD_EOS
    } else {
        &sent.tokens[pos as usize].surface
    }
}

/// Shallow templates for the token at `i`.
pub fn local_features(sent: &Sentence, i: usize, config: &FeatureConfig) -> FeatureSet {
    assert!(i < sent.len(), "position out of range");
    let mut set = FeatureSet::new();
    let r = config.window_radius as isize;
    let at = |o: isize| surface_at(sent, i as isize + o);

    for o in -r..=r {
        let w = at(o);
        if config.local.surfaces {
            set.insert(format!("w={w}@{o}"));
            set.insert(format!("wl={}@{o}", w.to_lowercase()));
        }
        if config.local.shapes {
            set.insert(format!("shape={}@{o}", word_shape(w)));
        }
    }
    if config.local.affixes {
        let focus: Vec<char> = at(0).chars().collect();
        for n in 1..=config.affix_max.min(focus.len()) {
            let pre: String = focus[..n].iter().collect();
            let suf: String = focus[focus.len() - n..].iter().collect();
            set.insert(format!("pre{n}={pre}@0"));
            set.insert(format!("suf{n}={suf}@0"));
        }
    }
    if config.local.bigrams {
        for o in -r..r {
            set.insert(format!(
                "bg={}_{}@{o}",
                at(o).to_lowercase(),
                at(o + 1).to_lowercase()
            ));
        }
    }
    if i == 0 {
        set.insert("bos=1@0".to_owned());
    }
    set
}

/// Clustering features for the token at `i`: one lookup per lexicon and
/// window slot. Absence is emitted as an explicit NOT_FOUND feature.
pub fn cluster_features(
    sent: &Sentence,
    i: usize,
    config: &FeatureConfig,
    lexicons: &HashMap<String, ClusterLexicon>,
) -> Result<FeatureSet> {
    assert!(i < sent.len(), "position out of range");
    let mut set = FeatureSet::new();
    let r = config.window_radius as isize;
    for name in &config.lexicons {
        let lex = lexicons
            .get(name)
            .ok_or_else(|| Error::UnknownLexicon(name.clone()))?;
        for o in -r..=r {
            let w = surface_at(sent, i as isize + o);
            match lex.lookup(w) {
                Lookup::Found(feats) => {
                    for (key, value) in feats {
                        set.insert(format!("{key}={value}@{o}"));
                    }
                }
                Lookup::NotFound => {
                    set.insert(format!("cluster:{name}={NOT_FOUND}@{o}"));
                }
            }
        }
    }
    Ok(set)
}

/// Union of local and clustering features.
pub fn extract(
    sent: &Sentence,
    i: usize,
    config: &FeatureConfig,
    lexicons: &HashMap<String, ClusterLexicon>,
) -> Result<FeatureSet> {
    let mut set = local_features(sent, i, config);
    set.extend(cluster_features(sent, i, config, lexicons)?);
    Ok(set)
}

/// Splits a feature key back into (template, value, offset).
pub fn parse_key(key: &str) -> Option<(&str, &str, isize)> {
    let (template, rest) = key.split_once('=')?;
    let at = rest.rfind('@')?;
    let offset: isize = rest[at + 1..].parse().ok()?;
    Some((template, &rest[..at], offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{tokenize, Label};

    pub(crate) fn sent(text: &str) -> Sentence {
        let tokens = tokenize(text);
        let labels = vec![Label::O; tokens.len()];
        Sentence {
            id: "t".into(),
            tokens,
            labels,
        }
    }

    #[test]
    fn shape_examples() {
        assert_eq!(word_shape("Chow"), "Xx");
        assert_eq!(word_shape("McDonald's"), "XxXx‡x");
        assert_eq!(word_shape("IBM360"), "X0");
        assert_eq!(word_shape(""), "");
    }

    #[test]
    fn example_sentence_features() {
        let s = sent("Chow fun was dry");
        let f = local_features(&s, 0, &FeatureConfig::default());
        assert!(f.contains("shape=Xx@0"));
        assert!(f.contains("suf2=ow@0"));
        assert!(f.contains("bg=chow_fun@0"));
        assert!(f.contains("bos=1@0"));
        assert!(f.contains("w=*BOS*@-1"));
    }

    #[test]
    fn single_token_sentence_pads_all_slots() {
        let s = sent("hi");
        let f = local_features(&s, 0, &FeatureConfig::default());
        for o in [-2isize, -1] {
            assert!(f.contains(&format!("w={PAD_BOS}@{o}")));
        }
        for o in [1isize, 2] {
            assert!(f.contains(&format!("w={PAD_EOS}@{o}")));
        }
    }

    fn flat_lex(pairs: &[(&str, u64)], name: &str) -> ClusterLexicon {
        let text: String = pairs
            .iter()
            .map(|(w, c)| format!("{w}\t{c}\n"))
            .collect();
        crate::lexicon::load_flat_classes(
            text.as_bytes(),
            name,
            crate::lexicon::LexiconFamily::Clark,
            crate::lexicon::Casing::Lowercase,
        )
        .unwrap()
    }

    #[test]
    fn one_flat_lexicon_yields_exactly_five_cluster_features() {
        let s = sent("the salmon was very good");
        let lex = flat_lex(&[("salmon", 17)], "C");
        let mut lexicons = HashMap::new();
        lexicons.insert("C".to_string(), lex);
        let config = FeatureConfig::with_lexicons(["C"]);
        let f = cluster_features(&s, 1, &config, &lexicons).unwrap();
        assert_eq!(f.len(), 5);
        assert!(f.contains("clark:C=17@0"));
        assert!(f.contains(&format!("cluster:C={NOT_FOUND}@-1")));
    }

    #[test]
    fn brown_lexicon_full_paths_give_twenty_features() {
        let path = "0".repeat(20);
        let words = ["a", "b", "c", "d", "e"];
        let text: String = words
            .iter()
            .enumerate()
            .map(|(i, w)| format!("{}{}\t{w}\t1\n", &path[..19], i % 2))
            .collect();
        let lex = crate::lexicon::load_brown_paths(
            text.as_bytes(),
            "BY",
            crate::lexicon::Casing::Lowercase,
        )
        .unwrap();
        let mut lexicons = HashMap::new();
        lexicons.insert("BY".to_string(), lex);
        let s = sent("a b c d e");
        let config = FeatureConfig::with_lexicons(["BY"]);
        let f = cluster_features(&s, 2, &config, &lexicons).unwrap();
        assert_eq!(f.len(), 20); // 4 prefixes x 5 slots
    }

    #[test]
    fn same_cluster_gives_same_feature_value() {
        let s1 = sent("the noodles were good");
        let s2 = sent("the french-onions were good");
        let lex = flat_lex(&[("noodles", 3), ("french-onions", 3)], "C");
        let mut lexicons = HashMap::new();
        lexicons.insert("C".to_string(), lex);
        let config = FeatureConfig::with_lexicons(["C"]);
        let f1 = cluster_features(&s1, 1, &config, &lexicons).unwrap();
        let f2 = cluster_features(&s2, 1, &config, &lexicons).unwrap();
        assert!(f1.contains("clark:C=3@0"));
        assert!(f2.contains("clark:C=3@0"));
    }

    #[test]
    fn empty_lexicon_list_reduces_to_local() {
        let s = sent("a b c");
        let config = FeatureConfig::default();
        assert_eq!(
            extract(&s, 1, &config, &HashMap::new()).unwrap(),
            local_features(&s, 1, &config)
        );
    }

    #[test]
    fn unknown_lexicon_is_an_error() {
        let s = sent("a");
        let config = FeatureConfig::with_lexicons(["missing"]);
        assert!(matches!(
            extract(&s, 0, &config, &HashMap::new()),
            Err(Error::UnknownLexicon(_))
        ));
    }

    #[test]
    fn locality_only_window_matters() {
        let s1 = sent("a b c d e f g");
        let mut s2 = s1.clone();
        s2.tokens[5].surface = "ZZZ".into(); // i+3 for i=2
        let config = FeatureConfig::default();
        assert_eq!(
            local_features(&s1, 2, &config),
            local_features(&s2, 2, &config)
        );
    }

    #[test]
    fn monotone_composition() {
        let s = sent("the salmon was very good");
        let lex = flat_lex(&[("salmon", 17)], "C");
        let mut lexicons = HashMap::new();
        lexicons.insert("C".to_string(), lex);
        let base = extract(&s, 1, &FeatureConfig::default(), &lexicons).unwrap();
        let bigger = extract(&s, 1, &FeatureConfig::with_lexicons(["C"]), &lexicons).unwrap();
        assert!(base.is_subset(&bigger));
    }

    #[test]
    fn every_key_parses_back() {
        let s = sent("Chow fun was dry ;");
        let lex = flat_lex(&[("fun", 1)], "C");
        let mut lexicons = HashMap::new();
        lexicons.insert("C".to_string(), lex);
        let config = FeatureConfig::with_lexicons(["C"]);
        for i in 0..s.len() {
            for key in extract(&s, i, &config, &lexicons).unwrap() {
                let parsed = parse_key(&key);
                assert!(parsed.is_some(), "unparseable key {key:?}");
            }
        }
    }

    #[test]
    fn config_text_round_trip() {
        let config = FeatureConfig::with_lexicons(["BY", "CYF100", "W2VW400"]);
        let text = config.to_config_text();
        assert_eq!(FeatureConfig::from_config_text(&text).unwrap(), config);
    }
}
