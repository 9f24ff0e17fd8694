//! Desk-scale Brown clustering.
//!
//! Greedy agglomerative merging of word classes, choosing at each step
//! the merge that maximizes the average mutual information of
//! adjacent-class bigrams,
//!
//! ```text
//!   I = sum over (c, c') of p(c,c') * log( p(c,c') / (pl(c) * pr(c')) )
//! ```
//!
//! with probabilities and marginals taken from adjacent-pair counts. The
//! frequency-windowed variant keeps an active set of at most `window`
//! classes while words are inserted in descending frequency order; once
//! `num_classes` classes cover the vocabulary, a second phase merges them
//! down to a single root so that every word reads off a binary path.

use std::collections::HashMap;

use crate::lexicon::{Casing, ClusterClass, ClusterLexicon, LexiconFamily};
use crate::{Error, Result};

/// Reserved class for words below the frequency cutoff.
pub const RARE: &str = "<RARE>";

#[derive(Debug, Clone)]
pub struct BigramStats {
    /// Word types in descending frequency order (ties lexicographic).
    pub vocab: Vec<String>,
    /// Unigram counts aligned with `vocab`.
    pub unigrams: Vec<u64>,
    /// Adjacent-pair counts keyed by `vocab` indices (left, right).
    pub pairs: HashMap<(u32, u32), u64>,
    /// Total token count of the stream.
    pub total: u64,
}

/// Counts unigrams and adjacent bigrams over a token stream. Words seen
/// fewer than `min_count` times collapse into the [`RARE`] class.
pub fn count_bigrams<S: AsRef<str>>(tokens: &[S], min_count: u64) -> Result<BigramStats> {
    if tokens.is_empty() {
        return Err(Error::Invalid("empty token stream".into()));
    }
    if min_count < 1 {
        return Err(Error::Invalid("min_count must be >= 1".into()));
    }
    let mut raw: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        *raw.entry(t.as_ref()).or_default() += 1;
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for (w, n) in &raw {
        let key = if *n < min_count { RARE } else { w };
        *counts.entry(key).or_default() += n;
    }
    let mut vocab: Vec<(&str, u64)> = counts.into_iter().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, u32> = vocab
        .iter()
        .enumerate()
        .map(|(i, (w, _))| (*w, i as u32))
        .collect();
    let map = |w: &str| -> u32 {
        if raw[w] < min_count {
            index[RARE]
        } else {
            index[w]
        }
    };

    let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
    for pair in tokens.windows(2) {
        let l = map(pair[0].as_ref());
        let r = map(pair[1].as_ref());
        *pairs.entry((l, r)).or_default() += 1;
    }
    Ok(BigramStats {
        vocab: vocab.iter().map(|(w, _)| (*w).to_owned()).collect(),
        unigrams: vocab.iter().map(|(_, n)| *n).collect(),
        pairs,
        total: tokens.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    /// Index into the stats vocabulary.
    Leaf(usize),
    /// Children are tree node indices; `left` is the earlier-created class.
    Internal { left: usize, right: usize },
}

/// One greedy merge step: the two class ids merged (creation order;
/// singleton classes are numbered in vocabulary order, merged classes
/// sequentially after) and the partition AMI after the merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRecord {
    pub first: usize,
    pub second: usize,
    pub ami_after: f64,
}

#[derive(Debug, Clone)]
pub struct MergeTree {
    pub nodes: Vec<Node>,
    pub root: usize,
    pub vocab: Vec<String>,
    /// Number of classes at the end of phase 1.
    pub phase1_classes: usize,
    /// Every merge in order, across both phases.
    pub merges: Vec<MergeRecord>,
}

struct ClassSet {
    /// Class id -> tree node, in creation order; merged classes removed.
    active: Vec<(usize, usize)>,
    next_id: usize,
    /// Adjacent-pair counts between active classes, keyed by class id.
    pairs: HashMap<(usize, usize), f64>,
    lmarg: HashMap<usize, f64>,
    rmarg: HashMap<usize, f64>,
    /// Total inserted pair mass.
    mass: f64,
}

impl ClassSet {
    fn n(&self, a: usize, b: usize) -> f64 {
        self.pairs.get(&(a, b)).copied().unwrap_or(0.0)
    }

    fn q(&self, n: f64, l: f64, r: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        let p = n / self.mass;
        p * (p / ((l / self.mass) * (r / self.mass))).ln()
    }

    fn ami(&self) -> f64 {
        let mut total = 0.0;
        for (&(a, b), &n) in &self.pairs {
            total += self.q(n, self.lmarg[&a], self.rmarg[&b]);
        }
        total
    }

    /// Sum of AMI terms whose row or column is class `c` (the diagonal
    /// term counted once).
    fn rowcol(&self, c: usize) -> f64 {
        let mut total = 0.0;
        for &(id, _) in &self.active {
            total += self.q(self.n(c, id), self.lmarg[&c], self.rmarg[&id]);
            if id != c {
                total += self.q(self.n(id, c), self.lmarg[&id], self.rmarg[&c]);
            }
        }
        total
    }

    /// AMI of the partition obtained by merging classes `a` and `b`,
    /// given the current AMI.
    fn merged_ami(&self, current: f64, a: usize, b: usize) -> f64 {
        if self.mass <= 0.0 {
            return 0.0;
        }
        let mut out = current - self.rowcol(a) - self.rowcol(b)
            + self.q(self.n(a, b), self.lmarg[&a], self.rmarg[&b])
            + self.q(self.n(b, a), self.lmarg[&b], self.rmarg[&a]);
        let lm = self.lmarg[&a] + self.lmarg[&b];
        let rm = self.rmarg[&a] + self.rmarg[&b];
        for &(id, _) in &self.active {
            if id == a || id == b {
                continue;
            }
            out += self.q(self.n(a, id) + self.n(b, id), lm, self.rmarg[&id]);
            out += self.q(self.n(id, a) + self.n(id, b), self.lmarg[&id], rm);
        }
        out += self.q(
            self.n(a, a) + self.n(a, b) + self.n(b, a) + self.n(b, b),
            lm,
            rm,
        );
        out
    }

    /// Merges the pair of active classes maximizing post-merge AMI. Ties
    /// resolve to the lexicographically smallest (i, j) class-id pair.
    fn merge_best(&mut self, nodes: &mut Vec<Node>) -> (usize, usize) {
        let current = self.ami();
        let mut ids: Vec<usize> = self.active.iter().map(|&(id, _)| id).collect();
        ids.sort_unstable();
        let mut best: Option<(f64, usize, usize)> = None;
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                let score = self.merged_ami(current, a, b);
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("merge_best needs at least two classes");
        self.merge(a, b, nodes);
        (a, b)
    }

    fn merge(&mut self, a: usize, b: usize, nodes: &mut Vec<Node>) {
        debug_assert!(a < b);
        let node_of = |active: &[(usize, usize)], id: usize| {
            active.iter().find(|&&(i, _)| i == id).unwrap().1
        };
        let left = node_of(&self.active, a);
        let right = node_of(&self.active, b);
        nodes.push(Node::Internal { left, right });
        let new_node = nodes.len() - 1;
        let new_id = self.next_id;
        self.next_id += 1;

        let others: Vec<usize> = self
            .active
            .iter()
            .map(|&(id, _)| id)
            .filter(|&id| id != a && id != b)
            .collect();
        let mut new_pairs: Vec<((usize, usize), f64)> = Vec::new();
        for &d in &others {
            let nl = self.n(a, d) + self.n(b, d);
            if nl > 0.0 {
                new_pairs.push(((new_id, d), nl));
            }
            let nr = self.n(d, a) + self.n(d, b);
            if nr > 0.0 {
                new_pairs.push(((d, new_id), nr));
            }
        }
        let diag = self.n(a, a) + self.n(a, b) + self.n(b, a) + self.n(b, b);
        if diag > 0.0 {
            new_pairs.push(((new_id, new_id), diag));
        }
        self.pairs
            .retain(|&(x, y), _| x != a && x != b && y != a && y != b);
        self.pairs.extend(new_pairs);

        let lm = self.lmarg.remove(&a).unwrap() + self.lmarg.remove(&b).unwrap();
        let rm = self.rmarg.remove(&a).unwrap() + self.rmarg.remove(&b).unwrap();
        self.lmarg.insert(new_id, lm);
        self.rmarg.insert(new_id, rm);

        self.active.retain(|&(id, _)| id != a && id != b);
        self.active.push((new_id, new_node));
    }
}

/// Runs windowed greedy Brown clustering over precomputed bigram stats.
pub fn brown_cluster(stats: &BigramStats, num_classes: usize, window: usize) -> Result<MergeTree> {
    let v = stats.vocab.len();
    if num_classes < 2 || num_classes > v {
        return Err(Error::Invalid(format!(
            "num_classes must be in [2, {v}], got {num_classes}"
        )));
    }
    if window < num_classes {
        return Err(Error::Invalid(format!(
            "window ({window}) must be >= num_classes ({num_classes})"
        )));
    }

    // word-level adjacency, so each insertion only touches its own pairs
    let mut by_word: HashMap<u32, Vec<(u32, u32, f64)>> = HashMap::new();
    for (&(l, r), &n) in &stats.pairs {
        by_word.entry(l).or_default().push((l, r, n as f64));
        if r != l {
            by_word.entry(r).or_default().push((l, r, n as f64));
        }
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut merges: Vec<MergeRecord> = Vec::new();
    let mut set = ClassSet {
        active: Vec::new(),
        next_id: 0,
        pairs: HashMap::new(),
        lmarg: HashMap::new(),
        rmarg: HashMap::new(),
        mass: 0.0,
    };
    let mut word_class: Vec<Option<usize>> = vec![None; v];
    // class id of each word is tracked through merges via this map
    let mut class_alias: HashMap<usize, usize> = HashMap::new();

    let resolve = |alias: &HashMap<usize, usize>, mut id: usize| {
        while let Some(&next) = alias.get(&id) {
            id = next;
        }
        id
    };

    for w in 0..v {
        nodes.push(Node::Leaf(w));
        let id = set.next_id;
        set.next_id += 1;
        set.active.push((id, nodes.len() - 1));
        set.lmarg.insert(id, 0.0);
        set.rmarg.insert(id, 0.0);
        word_class[w] = Some(id);

        if let Some(adj) = by_word.get(&(w as u32)) {
            for &(l, r, n) in adj {
                // count each pair exactly once: at the insertion of its
                // later-inserted (higher vocab index) endpoint
                if l.max(r) != w as u32 {
                    continue;
                }
                let lc = resolve(&class_alias, word_class[l as usize].unwrap());
                let rc = resolve(&class_alias, word_class[r as usize].unwrap());
                *set.pairs.entry((lc, rc)).or_default() += n;
                *set.lmarg.get_mut(&lc).unwrap() += n;
                *set.rmarg.get_mut(&rc).unwrap() += n;
                set.mass += n;
            }
        }

        while set.active.len() > window {
            let (a, b) = set.merge_best(&mut nodes);
            class_alias.insert(a, set.next_id - 1);
            class_alias.insert(b, set.next_id - 1);
            merges.push(MergeRecord {
                first: a,
                second: b,
                ami_after: set.ami(),
            });
        }
    }

    while set.active.len() > num_classes {
        let (a, b) = set.merge_best(&mut nodes);
        class_alias.insert(a, set.next_id - 1);
        class_alias.insert(b, set.next_id - 1);
        merges.push(MergeRecord {
            first: a,
            second: b,
            ami_after: set.ami(),
        });
    }
    let phase1_classes = set.active.len();
    while set.active.len() > 1 {
        let (a, b) = set.merge_best(&mut nodes);
        merges.push(MergeRecord {
            first: a,
            second: b,
            ami_after: set.ami(),
        });
    }
    let root = set.active[0].1;
    Ok(MergeTree {
        nodes,
        root,
        vocab: stats.vocab.clone(),
        phase1_classes,
        merges,
    })
}

/// Reads bit-paths off the merge tree (left = 0) and emits a Brown
/// lexicon. The [`RARE`] sentinel is clustered but not emitted.
pub fn emit_paths(tree: &MergeTree, name: &str) -> Result<ClusterLexicon> {
    let mut entries = HashMap::new();
    let mut stack: Vec<(usize, String)> = vec![(tree.root, String::new())];
    while let Some((node, path)) = stack.pop() {
        match tree.nodes[node] {
            Node::Leaf(w) => {
                let word = &tree.vocab[w];
                if word != RARE {
                    let path = if path.is_empty() { "0".to_owned() } else { path };
                    entries.insert(word.clone(), ClusterClass::Path(path));
                }
            }
            Node::Internal { left, right } => {
                stack.push((left, format!("{path}0")));
                stack.push((right, format!("{path}1")));
            }
        }
    }
    ClusterLexicon::new(name, LexiconFamily::Brown, Casing::Lowercase, entries)
}

/// Word -> bit-path map read off the tree, RARE included. Test helper
/// and the basis of [`emit_paths`].
pub fn paths_of(tree: &MergeTree) -> HashMap<String, String> {
    let mut out = HashMap::new();
    let mut stack: Vec<(usize, String)> = vec![(tree.root, String::new())];
    while let Some((node, path)) = stack.pop() {
        match tree.nodes[node] {
            Node::Leaf(w) => {
                let path = if path.is_empty() { "0".to_owned() } else { path };
                out.insert(tree.vocab[w].clone(), path);
            }
            Node::Internal { left, right } => {
                stack.push((left, format!("{path}0")));
                stack.push((right, format!("{path}1")));
            }
        }
    }
    out
}
