//! Clustering lexicons: Brown bit-paths and flat word classes.
//!
//! A lexicon maps words to cluster identities. Brown lookups expand into
//! path prefixes at depths 4, 8, 12 and 20; flat lookups (Clark or
//! word2vec k-means classes) return a single class feature. Absence is a
//! reified NOT_FOUND value, itself usable as a feature.

use std::collections::HashMap;
use std::io::Read;

use crate::{Error, Result};

/// Brown prefix depths, the "4th, 8th, 12th and 20th node" of the path.
pub const BROWN_PREFIX_LENGTHS: [usize; 4] = [4, 8, 12, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LexiconFamily {
    Brown,
    Clark,
    Word2vecKMeans,
}

impl LexiconFamily {
    /// Short tag used in feature keys and CLI flags.
    pub fn tag(&self) -> &'static str {
        match self {
            LexiconFamily::Brown => "brown",
            LexiconFamily::Clark => "clark",
            LexiconFamily::Word2vecKMeans => "w2v",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterClass {
    /// Binary left/right path through the Brown merge tree.
    Path(String),
    /// Flat class identifier.
    Flat(u64),
}

impl ClusterClass {
    pub fn as_feature_value(&self) -> String {
        match self {
            ClusterClass::Path(p) => p.clone(),
            ClusterClass::Flat(id) => id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Casing {
    Preserve,
    Lowercase,
}

#[derive(Debug, Clone)]
pub struct ClusterLexicon {
    pub name: String,
    pub family: LexiconFamily,
    pub casing: Casing,
    entries: HashMap<String, ClusterClass>,
}

/// Result of a lexicon lookup: feature keys with class values, or the
/// reified absence marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Found(Vec<(String, String)>),
    NotFound,
}

impl ClusterLexicon {
    pub fn new(
        name: impl Into<String>,
        family: LexiconFamily,
        casing: Casing,
        entries: HashMap<String, ClusterClass>,
    ) -> Result<ClusterLexicon> {
        let lex = ClusterLexicon {
            name: name.into(),
            family,
            casing,
            entries,
        };
        if lex.entries.is_empty() {
            return Err(Error::Invalid(format!("lexicon {:?} is empty", lex.name)));
        }
        for (w, c) in &lex.entries {
            match (family, c) {
                (LexiconFamily::Brown, ClusterClass::Path(p)) => {
                    if p.is_empty() || !p.bytes().all(|b| b == b'0' || b == b'1') {
                        return Err(Error::Invalid(format!(
                            "lexicon {:?}: word {w:?} has non-binary path {p:?}",
                            lex.name
                        )));
                    }
                }
                (LexiconFamily::Brown, ClusterClass::Flat(_)) => {
                    return Err(Error::Invalid(format!(
                        "lexicon {:?}: flat class in a Brown lexicon",
                        lex.name
                    )));
                }
                (_, ClusterClass::Path(_)) => {
                    return Err(Error::Invalid(format!(
                        "lexicon {:?}: bit path in a flat lexicon",
                        lex.name
                    )));
                }
                (_, ClusterClass::Flat(_)) => {}
            }
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &HashMap<String, ClusterClass> {
        &self.entries
    }

    fn normalize<'a>(&self, word: &'a str) -> std::borrow::Cow<'a, str> {
        match self.casing {
            Casing::Preserve => std::borrow::Cow::Borrowed(word),
            Casing::Lowercase => std::borrow::Cow::Owned(word.to_lowercase()),
        }
    }

    /// Looks up a word's cluster class.
    ///
    /// Brown entries yield one feature per prefix depth not exceeding the
    /// path length, keyed `brown:<name>:<len>`; a path shorter than the
    /// smallest depth is returned whole under that depth. Flat entries
    /// yield a single feature keyed `<family>:<name>`.
    pub fn lookup(&self, word: &str) -> Lookup {
        let key = self.normalize(word);
        let Some(class) = self.entries.get(key.as_ref()) else {
            return Lookup::NotFound;
        };
        match class {
            ClusterClass::Path(path) => {
                let mut feats = Vec::new();
                for &len in &BROWN_PREFIX_LENGTHS {
                    if len <= path.len() {
                        feats.push((
                            format!("brown:{}:{}", self.name, len),
                            path[..len].to_owned(),
                        ));
                    }
                }
                if feats.is_empty() {
                    feats.push((
                        format!("brown:{}:{}", self.name, BROWN_PREFIX_LENGTHS[0]),
                        path.clone(),
                    ));
                }
                Lookup::Found(feats)
            }
            ClusterClass::Flat(id) => Lookup::Found(vec![(
                format!("{}:{}", self.family.tag(), self.name),
                id.to_string(),
            )]),
        }
    }
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

fn decompress_if_gzip(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(bytes).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

fn to_text(bytes: &[u8]) -> Result<String> {
    let raw = decompress_if_gzip(bytes)?;
    String::from_utf8(raw).map_err(|_| Error::Invalid("lexicon file is not UTF-8".into()))
}

/// Loads a Brown-paths file: `bitpath<TAB>word<TAB>count` per line.
/// The count column is validated as numeric and otherwise ignored.
pub fn load_brown_paths(bytes: &[u8], name: &str, casing: Casing) -> Result<ClusterLexicon> {
    let text = to_text(bytes)?;
    let mut entries = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(path), Some(word)) = (cols.next(), cols.next()) else {
            return Err(Error::Format {
                line: lineno,
                msg: "expected bitpath<TAB>word[<TAB>count]".into(),
            });
        };
        if path.is_empty() || !path.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::Format {
                line: lineno,
                msg: format!("non-binary path {path:?}"),
            });
        }
        if let Some(count) = cols.next() {
            if count.parse::<u64>().is_err() {
                return Err(Error::Format {
                    line: lineno,
                    msg: format!("non-numeric count {count:?}"),
                });
            }
        }
        if entries
            .insert(word.to_owned(), ClusterClass::Path(path.to_owned()))
            .is_some()
        {
            return Err(Error::Format {
                line: lineno,
                msg: format!("duplicate word {word:?}"),
            });
        }
    }
    ClusterLexicon::new(name, LexiconFamily::Brown, casing, entries)
}

/// Loads a flat word-class file: `word<TAB>classid` per line. Clark's
/// native space-separated "word class freq" layout is tolerated; the
/// frequency column is ignored.
pub fn load_flat_classes(
    bytes: &[u8],
    name: &str,
    family: LexiconFamily,
    casing: Casing,
) -> Result<ClusterLexicon> {
    if family == LexiconFamily::Brown {
        return Err(Error::Invalid(
            "Brown lexicons use load_brown_paths".into(),
        ));
    }
    let text = to_text(bytes)?;
    let mut entries = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut cols = if line.contains('\t') {
            line.split('\t')
        } else {
            line.split(' ')
        };
        let (Some(word), Some(class)) = (cols.next(), cols.next()) else {
            return Err(Error::Format {
                line: lineno,
                msg: "expected word<TAB>classid".into(),
            });
        };
        let class_id: u64 = class.parse().map_err(|_| Error::Format {
            line: lineno,
            msg: format!("non-integer class id {class:?}"),
        })?;
        if entries
            .insert(word.to_owned(), ClusterClass::Flat(class_id))
            .is_some()
        {
            return Err(Error::Format {
                line: lineno,
                msg: format!("duplicate word {word:?}"),
            });
        }
    }
    ClusterLexicon::new(name, family, casing, entries)
}

/// Serializes a lexicon back to its on-disk format.
pub fn serialize(lex: &ClusterLexicon) -> String {
    let mut lines: Vec<String> = lex
        .entries
        .iter()
        .map(|(w, c)| match c {
            ClusterClass::Path(p) => format!("{p}\t{w}\t1"),
            ClusterClass::Flat(id) => format!("{w}\t{id}"),
        })
        .collect();
    lines.sort();
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
