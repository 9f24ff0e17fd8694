//! ABSA review ingestion and the BIO column format.
//!
//! Reviews arrive as XML in either the 2014 `aspectTerm` layout or the
//! 2015/2016 `Opinion` layout; both normalize to [`RawSentence`]. A
//! deterministic rule-based tokenizer assigns character offsets, target
//! spans snap outward to token boundaries, and the result is a
//! [`Sentence`] of BIO-labelled tokens that round-trips through a
//! two-or-three-column TSV format.

use std::collections::BTreeSet;
use std::fmt;

use crate::xml;
use crate::{Error, Result};

/// Sentinel target string for implicit (span-less) opinions.
pub const NULL_TARGET: &str = "NULL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpinionAnnotation {
    pub target: String,
    pub category: String,
    pub polarity: String,
    /// Inclusive character offset.
    pub from: usize,
    /// Exclusive character offset.
    pub to: usize,
}

impl OpinionAnnotation {
    pub fn is_null(&self) -> bool {
        self.target == NULL_TARGET && self.from == 0 && self.to == 0
    }
}

/// A sentence as annotated in the corpus, before tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSentence {
    pub id: String,
    pub text: String,
    pub opinions: Vec<OpinionAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Character offset of the first character.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    O,
    B,
    I,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::O, Label::B, Label::I];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::O => "O",
            Label::B => "B-target",
            Label::I => "I-target",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "O" => Some(Label::O),
            "B-target" => Some(Label::B),
            "I-target" => Some(Label::I),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A tokenized, BIO-labelled sentence. The unit of training and decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub labels: Vec<Label>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks the BIO validity invariant: no I at position 0, no O→I.
    pub fn valid_bio(&self) -> bool {
        let mut prev = Label::O;
        for (i, &l) in self.labels.iter().enumerate() {
            if l == Label::I && (i == 0 || prev == Label::O) {
                return false;
            }
            prev = l;
        }
        self.labels.len() == self.tokens.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub tokens: usize,
    /// Number of opinion targets (B-target labels).
    pub b_targets: usize,
    /// Number of multiword targets (spans containing at least one I token).
    pub i_targets: usize,
    pub multiword_target_fraction: f64,
}

/// Warnings collected while parsing, one per suspicious annotation.
#[derive(Debug, Clone)]
pub struct ParseWarning {
    pub sentence_id: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ParsedCorpus {
    pub sentences: Vec<RawSentence>,
    pub warnings: Vec<ParseWarning>,
}

fn char_slice(text: &str, from: usize, to: usize) -> String {
    text.chars().skip(from).take(to.saturating_sub(from)).collect()
}

/// Parses ABSA review XML in either the 2014 or the 2015/2016 layout.
///
/// Annotations whose span text disagrees with the `target` attribute are
/// kept (offsets are ground truth) and reported as warnings.
pub fn parse_absa_xml(bytes: &[u8]) -> Result<ParsedCorpus> {
    let root = xml::parse(bytes)?;
    let mut nodes = Vec::new();
    if root.name == "sentence" {
        nodes.push(&root);
    }
    root.descendants("sentence", &mut nodes);

    let mut sentences = Vec::new();
    let mut warnings = Vec::new();
    for node in nodes {
        let id = node
            .attr("id")
            .map(str::to_owned)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Xml {
                line: node.line,
                msg: "sentence without id".into(),
            })?;
        let text = node
            .child("text")
            .map(|t| t.text.clone())
            .unwrap_or_default();
        let text_len = text.chars().count();

        let mut ann_nodes = Vec::new();
        node.descendants("Opinion", &mut ann_nodes);
        node.descendants("aspectTerm", &mut ann_nodes);

        let mut opinions = Vec::new();
        for a in ann_nodes {
            let target = a
                .attr("target")
                .or_else(|| a.attr("term"))
                .unwrap_or(NULL_TARGET)
                .to_owned();
            let category = a.attr("category").unwrap_or("").to_owned();
            let polarity = a.attr("polarity").unwrap_or("").to_owned();
            let parse_off = |name: &str| -> Result<usize> {
                a.attr(name)
                    .unwrap_or("0")
                    .parse::<usize>()
                    .map_err(|_| Error::Xml {
                        line: a.line,
                        msg: format!("non-numeric {name:?} offset"),
                    })
            };
            let from = parse_off("from")?;
            let to = parse_off("to")?;
            let op = OpinionAnnotation {
                target,
                category,
                polarity,
                from,
                to,
            };
            if !op.is_null() {
                if op.from >= op.to || op.to > text_len {
                    warnings.push(ParseWarning {
                        sentence_id: id.clone(),
                        message: format!(
                            "span ({},{}) out of range for sentence of length {}",
                            op.from, op.to, text_len
                        ),
                    });
                } else {
                    let covered = char_slice(&text, op.from, op.to);
                    if covered != op.target {
                        warnings.push(ParseWarning {
                            sentence_id: id.clone(),
                            message: format!(
                                "span text {:?} does not match target {:?}",
                                covered, op.target
                            ),
                        });
                    }
                }
            }
            opinions.push(op);
        }
        sentences.push(RawSentence { id, text, opinions });
    }
    Ok(ParsedCorpus {
        sentences,
        warnings,
    })
}

/// Rule-based tokenizer: split on whitespace, then peel leading and
/// trailing punctuation into single-character tokens. Interior
/// apostrophes and hyphens stay attached. Offsets are character offsets.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let end = i;

        let mut lead = start;
        while lead < end && !chars[lead].is_alphanumeric() {
            lead += 1;
        }
        let mut trail = end;
        while trail > lead && !chars[trail - 1].is_alphanumeric() {
            trail -= 1;
        }
        for p in start..lead {
            tokens.push(tok(&chars, p, p + 1));
        }
        if lead < trail {
            tokens.push(tok(&chars, lead, trail));
        }
        for p in trail..end {
            tokens.push(tok(&chars, p, p + 1));
        }
    }
    tokens
}

fn tok(chars: &[char], start: usize, end: usize) -> Token {
    Token {
        surface: chars[start..end].iter().collect(),
        start,
        end,
    }
}

/// Converts an annotated sentence to BIO labels over its tokens.
///
/// Spans snap outward: every token a target span overlaps gets labelled.
/// Duplicate spans collapse. Distinct overlapping spans are a conflict
/// unless `lenient` is set, in which case the earlier-starting span wins.
pub fn to_bio(s: &RawSentence, lenient: bool) -> Result<Sentence> {
    let tokens = tokenize(&s.text);
    let text_len = s.text.chars().count();

    let mut spans: BTreeSet<(usize, usize)> = BTreeSet::new();
    for op in &s.opinions {
        if op.is_null() || op.from >= op.to || op.to > text_len {
            continue;
        }
        spans.insert((op.from, op.to));
    }

    let mut kept: Vec<(usize, usize)> = Vec::new();
    for &(from, to) in &spans {
        if let Some(&(pf, pt)) = kept.last() {
            if from < pt {
                if lenient {
                    continue; // earlier-starting span wins
                }
                return Err(Error::SpanConflict {
                    id: s.id.clone(),
                    a: (pf, pt),
                    b: (from, to),
                });
            }
        }
        kept.push((from, to));
    }

    let mut labels = vec![Label::O; tokens.len()];
    for (from, to) in kept {
        let mut first = true;
        for (ti, t) in tokens.iter().enumerate() {
            if t.start < to && t.end > from {
                labels[ti] = if first { Label::B } else { Label::I };
                first = false;
            }
        }
    }
    Ok(Sentence {
        id: s.id.clone(),
        tokens,
        labels,
    })
}

/// Serializes sentences as "surface<TAB>label[<TAB>start-end]" lines,
/// blank line between sentences.
pub fn write_column(sentences: &[Sentence], offsets: bool) -> String {
    let mut out = String::new();
    for s in sentences {
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            out.push_str(&t.surface);
            out.push('\t');
            out.push_str(l.as_str());
            if offsets {
                out.push('\t');
                out.push_str(&format!("{}-{}", t.start, t.end));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn looks_like_offsets(s: &str) -> bool {
    s.split_once('-')
        .is_some_and(|(a, b)| !a.is_empty() && !b.is_empty()
            && a.bytes().all(|c| c.is_ascii_digit())
            && b.bytes().all(|c| c.is_ascii_digit()))
}

/// Reads the column format back. Sentence ids are positional ("s0",
/// "s1", ...). Lines may be surface-only (label defaults to O), surface
/// plus label, or surface, label and "start-end" offsets. When offsets
/// are absent they are synthesized by joining surfaces with single
/// spaces so that downstream span evaluation stays well-defined.
pub fn read_column(input: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut explicit: Vec<bool> = Vec::new();

    let finish = |tokens: &mut Vec<Token>,
                      labels: &mut Vec<Label>,
                      explicit: &mut Vec<bool>,
                      sentences: &mut Vec<Sentence>| {
        if tokens.is_empty() {
            return;
        }
        if explicit.iter().any(|&e| !e) {
            let mut cursor = 0;
            for t in tokens.iter_mut() {
                t.start = cursor;
                t.end = cursor + t.surface.chars().count();
                cursor = t.end + 1;
            }
        }
        sentences.push(Sentence {
            id: format!("s{}", sentences.len()),
            tokens: std::mem::take(tokens),
            labels: std::mem::take(labels),
        });
        explicit.clear();
    };

    for (lineno, line) in input.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            finish(&mut tokens, &mut labels, &mut explicit, &mut sentences);
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |msg: String| Error::Format { line: lineno, msg };
        let (surface, label, offs) = match cols.as_slice() {
            [w] => (*w, None, None),
            [w, second] => {
                if looks_like_offsets(second) && Label::parse(second).is_none() {
                    (*w, None, Some(*second))
                } else {
                    (*w, Some(*second), None)
                }
            }
            [w, l, o] => (*w, Some(*l), Some(*o)),
            _ => return Err(bad(format!("expected 1-3 columns, got {}", cols.len()))),
        };
        let label = match label {
            Some(l) => {
                Label::parse(l).ok_or_else(|| bad(format!("unknown label {l:?}")))?
            }
            None => Label::O,
        };
        let (start, end, explicit_off) = match offs {
            Some(o) => {
                let (a, b) = o
                    .split_once('-')
                    .ok_or_else(|| bad(format!("bad offsets {o:?}")))?;
                let start: usize =
                    a.parse().map_err(|_| bad(format!("bad offsets {o:?}")))?;
                let end: usize =
                    b.parse().map_err(|_| bad(format!("bad offsets {o:?}")))?;
                if start >= end {
                    return Err(bad(format!("empty span in offsets {o:?}")));
                }
                (start, end, true)
            }
            None => (0, 0, false),
        };
        tokens.push(Token {
            surface: surface.to_owned(),
            start,
            end,
        });
        labels.push(label);
        explicit.push(explicit_off);
    }
    finish(&mut tokens, &mut labels, &mut explicit, &mut sentences);

    for (si, s) in sentences.iter().enumerate() {
        if !s.valid_bio() {
            return Err(Error::Invalid(format!(
                "sentence {} (index {}): invalid BIO label sequence",
                s.id, si
            )));
        }
    }
    Ok(sentences)
}

/// Token, target and multiword-target counts over a BIO corpus.
pub fn corpus_stats(sentences: &[Sentence]) -> CorpusStats {
    let mut tokens = 0;
    let mut b_targets = 0;
    let mut i_targets = 0;
    for s in sentences {
        tokens += s.len();
        let mut run_has_i = false;
        let mut in_run = false;
        for &l in &s.labels {
            match l {
                Label::B => {
                    if in_run && run_has_i {
                        i_targets += 1;
                    }
                    b_targets += 1;
                    in_run = true;
                    run_has_i = false;
                }
                Label::I => run_has_i = true,
                Label::O => {
                    if in_run && run_has_i {
                        i_targets += 1;
                    }
                    in_run = false;
                    run_has_i = false;
                }
            }
        }
        if in_run && run_has_i {
            i_targets += 1;
        }
    }
    CorpusStats {
        tokens,
        b_targets,
        i_targets,
        multiword_target_fraction: if b_targets > 0 {
            i_targets as f64 / b_targets as f64
        } else {
            0.0
        },
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const FIG1: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<Reviews><Review rid="1016296"><sentences>
<sentence id="1016296:4">
    <text>Chow fun was dry; pork shu mai was more than usually greasy and had to share a table with loud and rude family</text>
    <Opinions>
        <Opinion target="Chow fun" category="FOOD#QUALITY" polarity="negative" from="0" to="8"/>
        <Opinion target="pork shu mai" category="FOOD#QUALITY" polarity="negative" from="18" to="30"/>
        <Opinion target="NULL" category="AMBIENCE#GENERAL" polarity="negative" from="0" to="0"/>
    </Opinions>
</sentence>
</sentences></Review></Reviews>"#;

    #[test]
    fn parses_fig1_layout() {
        let parsed = parse_absa_xml(FIG1.as_bytes()).unwrap();
        assert_eq!(parsed.sentences.len(), 1);
        assert!(parsed.warnings.is_empty());
        let s = &parsed.sentences[0];
        assert_eq!(s.id, "1016296:4");
        assert_eq!(s.opinions.len(), 3);
        assert_eq!((s.opinions[0].from, s.opinions[0].to), (0, 8));
        assert_eq!((s.opinions[1].from, s.opinions[1].to), (18, 30));
        assert!(s.opinions[2].is_null());
    }

    #[test]
    fn parses_2014_layout() {
        let doc = r#"<sentences>
<sentence id="11">
  <text>The fajitas were great.</text>
  <aspectTerms>
    <aspectTerm term="fajitas" polarity="positive" from="4" to="11"/>
  </aspectTerms>
</sentence>
<sentence id="12"><text>Nice.</text></sentence>
</sentences>"#;
        let parsed = parse_absa_xml(doc.as_bytes()).unwrap();
        assert_eq!(parsed.sentences.len(), 2);
        assert_eq!(parsed.sentences[0].opinions[0].target, "fajitas");
        assert!(parsed.sentences[1].opinions.is_empty());
    }

    #[test]
    fn empty_opinions_element() {
        let doc = r#"<sentence id="x"><text>Hi.</text><Opinions/></sentence>"#;
        let parsed = parse_absa_xml(doc.as_bytes()).unwrap();
        assert!(parsed.sentences[0].opinions.is_empty());
    }

    #[test]
    fn span_mismatch_is_a_warning_not_an_error() {
        let doc = r#"<sentence id="x"><text>abcdef</text><Opinions>
            <Opinion target="zzz" category="c" polarity="p" from="0" to="3"/>
        </Opinions></sentence>"#;
        let parsed = parse_absa_xml(doc.as_bytes()).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.sentences[0].opinions.len(), 1);
    }

    #[test]
    fn tokenize_splits_trailing_punctuation() {
        let toks = tokenize("Chow fun was dry;");
        let surfaces: Vec<&str> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, ["Chow", "fun", "was", "dry", ";"]);
        let spans: Vec<(usize, usize)> = toks.iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(spans, [(0, 4), (5, 8), (9, 12), (13, 16), (16, 17)]);
    }

    #[test]
    fn tokenize_empty_and_interior_chars() {
        assert!(tokenize("").is_empty());
        let toks = tokenize("McDonald's well-known \"spot\"...");
        let surfaces: Vec<&str> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(
            surfaces,
            ["McDonald's", "well-known", "\"", "spot", "\"", ".", ".", "."]
        );
    }

    #[test]
    fn tokenize_covers_fig1_target_spans() {
        let text = "Chow fun was dry; pork shu mai was more than usually greasy and had to share a table with loud and rude family";
        let toks = tokenize(text);
        // both targets must be exactly covered by token boundaries
        for (from, to) in [(0usize, 8usize), (18, 30)] {
            assert!(toks.iter().any(|t| t.start == from));
            assert!(toks.iter().any(|t| t.end == to));
        }
    }

    #[test]
    fn to_bio_matches_example_labelling() {
        let parsed = parse_absa_xml(FIG1.as_bytes()).unwrap();
        let s = to_bio(&parsed.sentences[0], false).unwrap();
        assert!(s.valid_bio());
        let lab: Vec<(&str, Label)> = s
            .tokens
            .iter()
            .map(|t| t.surface.as_str())
            .zip(s.labels.iter().copied())
            .collect();
        assert_eq!(lab[0], ("Chow", Label::B));
        assert_eq!(lab[1], ("fun", Label::I));
        assert_eq!(lab[2], ("was", Label::O));
        let pork = s.tokens.iter().position(|t| t.surface == "pork").unwrap();
        assert_eq!(s.labels[pork], Label::B);
        assert_eq!(s.labels[pork + 1], Label::I);
        assert_eq!(s.labels[pork + 2], Label::I);
        assert_eq!(s.labels.iter().filter(|&&l| l == Label::B).count(), 2);
        assert_eq!(s.labels.iter().filter(|&&l| l == Label::I).count(), 3);
    }

    #[test]
    fn null_opinion_produces_all_o() {
        let s = RawSentence {
            id: "n".into(),
            text: "very nice place".into(),
            opinions: vec![OpinionAnnotation {
                target: NULL_TARGET.into(),
                category: "c".into(),
                polarity: "p".into(),
                from: 0,
                to: 0,
            }],
        };
        let bio = to_bio(&s, false).unwrap();
        assert!(bio.labels.iter().all(|&l| l == Label::O));
    }

    #[test]
    fn spans_snap_outward_to_token_boundaries() {
        // target ends mid-token: "shu ma" inside "pork shu mai"
        let s = RawSentence {
            id: "snap".into(),
            text: "pork shu mai".into(),
            opinions: vec![OpinionAnnotation {
                target: "shu ma".into(),
                category: "c".into(),
                polarity: "p".into(),
                from: 5,
                to: 11,
            }],
        };
        let bio = to_bio(&s, false).unwrap();
        assert_eq!(bio.labels, vec![Label::O, Label::B, Label::I]);
    }

    #[test]
    fn duplicate_spans_collapse_and_overlap_conflicts() {
        let mk = |spans: Vec<(usize, usize)>| RawSentence {
            id: "d".into(),
            text: "one two three".into(),
            opinions: spans
                .into_iter()
                .map(|(from, to)| OpinionAnnotation {
                    target: char_slice("one two three", from, to),
                    category: String::new(),
                    polarity: String::new(),
                    from,
                    to,
                })
                .collect(),
        };
        let dup = to_bio(&mk(vec![(0, 3), (0, 3)]), false).unwrap();
        assert_eq!(dup.labels.iter().filter(|&&l| l == Label::B).count(), 1);

        let err = to_bio(&mk(vec![(0, 7), (4, 13)]), false);
        assert!(matches!(err, Err(Error::SpanConflict { .. })));
        let lenient = to_bio(&mk(vec![(0, 7), (4, 13)]), true).unwrap();
        assert_eq!(lenient.labels, vec![Label::B, Label::I, Label::O]);
    }

    #[test]
    fn column_format_definition() {
        let s = Sentence {
            id: "s0".into(),
            tokens: vec![Token {
                surface: "Chow".into(),
                start: 0,
                end: 4,
            }],
            labels: vec![Label::B],
        };
        assert_eq!(write_column(&[s], true), "Chow\tB-target\t0-4\n\n");
    }

    #[test]
    fn column_rejects_bad_labels_and_ragged_lines() {
        match read_column("x\tB-foo\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(read_column("a\tO\tb\tc\td\n").is_err());
        // I-target at sentence start is invalid BIO
        assert!(read_column("x\tI-target\n").is_err());
    }

    #[test]
    fn read_column_synthesizes_offsets_when_absent() {
        let ss = read_column("ab\tO\ncde\tO\n").unwrap();
        let t = &ss[0].tokens;
        assert_eq!((t[0].start, t[0].end), (0, 2));
        assert_eq!((t[1].start, t[1].end), (3, 6));
    }

    #[test]
    fn stats_count_targets_and_multiwords() {
        let parsed = parse_absa_xml(FIG1.as_bytes()).unwrap();
        let bio = to_bio(&parsed.sentences[0], false).unwrap();
        let st = corpus_stats(&[bio]);
        assert_eq!(st.b_targets, 2);
        assert_eq!(st.i_targets, 2); // both targets are multiword
        assert!((st.multiword_target_fraction - 1.0).abs() < 1e-12);

        let empty = corpus_stats(&[]);
        assert_eq!(
            (empty.tokens, empty.b_targets, empty.i_targets),
            (0, 0, 0)
        );
        assert_eq!(empty.multiword_target_fraction, 0.0);
    }
}
