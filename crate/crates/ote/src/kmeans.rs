//! K-means over pre-trained word vectors, producing flat word-class
//! lexicons of the word2vec family.
//!
//! Vectors arrive in the word2vec text format. Clustering is k-means++
//! seeded Lloyd iteration; under the cosine metric vectors are
//! unit-normalized first, after which squared euclidean ordering matches
//! cosine ordering.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::lexicon::{Casing, ClusterClass, ClusterLexicon, LexiconFamily};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct VectorTable {
    pub dimension: usize,
    /// Word/vector rows in file order.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl VectorTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Metric> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Invalid(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Row index -> centroid index, aligned with the table's rows.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration, for monotonicity checks.
    pub inertia_trace: Vec<f64>,
}

/// Parses the word2vec text format: a "count dim" header line, then one
/// "word v1 ... vd" line per vector.
pub fn load_vectors(bytes: &[u8]) -> Result<VectorTable> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Invalid("vector file is not UTF-8".into()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Format {
        line: 1,
        msg: "missing header".into(),
    })?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format {
            line: 1,
            msg: "bad count in header".into(),
        })?;
    let dimension: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format {
            line: 1,
            msg: "bad dimension in header".into(),
        })?;

    let mut rows = Vec::with_capacity(count);
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().ok_or_else(|| Error::Format {
            line: lineno,
            msg: "empty line".into(),
        })?;
        let vec: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Format {
                    line: lineno,
                    msg: format!("non-numeric component {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if vec.len() != dimension {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected {dimension} components, got {}", vec.len()),
            });
        }
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format {
                line: lineno,
                msg: "non-finite component".into(),
            });
        }
        rows.push((word.to_owned(), vec));
    }
    if rows.len() != count {
        return Err(Error::Invalid(format!(
            "header promises {count} vectors, file has {}",
            rows.len()
        )));
    }
    Ok(VectorTable { dimension, rows })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Lloyd's algorithm with k-means++ initialization from `seed`.
/// Iterates to an assignment fixpoint or 100 iterations. An emptied
/// cluster is re-seeded at the point farthest from its own centroid.
pub fn kmeans(table: &VectorTable, k: usize, seed: u64, metric: Metric) -> Result<KMeansResult> {
    let n = table.len();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!(
            "k must be in [1, {n}], got {k}"
        )));
    }
    let points: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|(_, v)| {
            let mut v = v.clone();
            if metric == Metric::Cosine {
                normalize(&mut v);
            }
            v
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            WeightedIndex::new(&d2)
                .map(|dist| dist.sample(&mut rng))
                .unwrap_or_else(|_| rng.random_range(0..n))
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
    }

    let mut assignment = vec![0usize; n];
    let mut inertia_trace = Vec::new();
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0; table.dimension]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                centroids[c] = std::mem::take(&mut sums[c]);
            } else {
                // re-seed at the point farthest from its assigned centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignment[a]]);
                        let db = sq_dist(&points[b], &centroids[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
                changed = true;
            }
        }

        let inertia: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &c)| sq_dist(p, &centroids[c]))
            .sum();
        inertia_trace.push(inertia);
        if !changed {
            break;
        }
    }

    // final reassignment so the nearest-centroid postcondition holds
    for (i, p) in points.iter().enumerate() {
        let best = (0..k)
            .min_by(|&a, &b| {
                sq_dist(p, &centroids[a])
                    .partial_cmp(&sq_dist(p, &centroids[b]))
                    .unwrap()
            })
            .unwrap();
        assignment[i] = best;
    }
    let inertia: f64 = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();

    Ok(KMeansResult {
        centroids,
        assignment,
        inertia,
        inertia_trace,
    })
}

/// Packages a clustering as a flat word2vec-family lexicon.
pub fn to_lexicon(table: &VectorTable, res: &KMeansResult, name: &str) -> Result<ClusterLexicon> {
    let mut entries = HashMap::new();
    for ((word, _), &c) in table.rows.iter().zip(&res.assignment) {
        entries.insert(word.clone(), ClusterClass::Flat(c as u64));
    }
    ClusterLexicon::new(name, LexiconFamily::Word2vecKMeans, Casing::Lowercase, entries)
}
