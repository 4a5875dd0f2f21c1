//! DBSCAN over cosine distance `1 - cos(u, v)`.

use std::collections::VecDeque;

use super::RewardError;
use crate::embedder::{cosine_unchecked, Embedding};

/// A set of candidate indices and their L2-normalized mean embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Sorted ascending, never empty.
    pub members: Vec<usize>,
    pub centroid: Embedding,
}

impl Cluster {
    pub fn from_members(mut members: Vec<usize>, vectors: &[Embedding]) -> Self {
        members.sort_unstable();
        let centroid = Embedding::mean(members.iter().map(|&i| &vectors[i]))
            .expect("cluster has at least one member")
            .normalized();
        Cluster { members, centroid }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Mean cosine over unordered member pairs; 1 for a singleton.
    pub fn mean_pairwise_cosine(&self, vectors: &[Embedding]) -> f64 {
        let m = &self.members;
        if m.len() < 2 {
            return 1.0;
        }
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                total += cosine_unchecked(&vectors[i], &vectors[j]);
                pairs += 1;
            }
        }
        total / pairs as f64
    }
}

pub fn cosine_distance(u: &Embedding, v: &Embedding) -> f64 {
    1.0 - cosine_unchecked(u, v)
}

/// Partition `vectors` with DBSCAN.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `radius`. Points are visited in index order; a border point joins
/// the first cluster that reaches it. Noise points come back as singleton
/// clusters. The result is sorted by smallest member index.
pub fn dbscan(vectors: &[Embedding], radius: f64, min_pts: usize) -> Result<Vec<Cluster>, RewardError> {
    if vectors.is_empty() {
        return Err(RewardError::EmptyCandidates);
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(RewardError::DimMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let n = vectors.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| i == j || cosine_distance(&vectors[i], &vectors[j]) <= radius)
                .collect()
        })
        .collect();
    let is_core = |i: usize| neighbors[i].len() >= min_pts;

    const UNASSIGNED: usize = usize::MAX;
    let mut label = vec![UNASSIGNED; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if label[start] != UNASSIGNED || !is_core(start) {
            continue;
        }
        let id = groups.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            if !is_core(p) {
                continue;
            }
            for &q in &neighbors[p] {
                if label[q] == UNASSIGNED {
                    label[q] = id;
                    members.push(q);
                    queue.push_back(q);
                }
            }
        }
        groups.push(members);
    }
    for (i, l) in label.iter().enumerate() {
        if *l == UNASSIGNED {
            groups.push(vec![i]);
        }
    }
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|m| Cluster::from_members(m, vectors))
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    Ok(clusters)
}

/// The cluster with the most members; ties go to the higher mean pairwise
/// cosine, then to the lowest smallest member index.
pub fn largest_cluster<'c>(clusters: &'c [Cluster], vectors: &[Embedding]) -> Option<&'c Cluster> {
    let mut best: Option<(&Cluster, f64)> = None;
    for c in clusters {
        let tight = c.mean_pairwise_cosine(vectors);
        best = match best {
            None => Some((c, tight)),
            Some((b, bt)) => {
                let better = c.len() > b.len()
                    || (c.len() == b.len()
                        && (tight > bt || (tight == bt && c.members[0] < b.members[0])));
                if better {
                    Some((c, tight))
                } else {
                    Some((b, bt))
                }
            }
        };
    }
    best.map(|(c, _)| c)
}
