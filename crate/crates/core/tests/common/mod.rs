#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use selfplay_csc::corruptor::{generate_pairs, ConfusionTables, OperatorPrior, PairFilter, PseudoPair};
use selfplay_csc::embedder::{Embedding, NgramEncoder};
use selfplay_csc::harness::{split_holdout, toy};
use selfplay_csc::policy::{FeaturizedLattice, PolicyParams};
use selfplay_csc::reward::dbscan;
use selfplay_csc::rng::{mix_seed, stream};
use selfplay_csc::Sentence;

/// Small tables over the letters a..f with every kind of rule.
pub fn tiny_tables() -> ConfusionTables {
    let mut t = ConfusionTables::new(vec!['#', '@']).unwrap();
    t.add_homophone('a', &['x']).unwrap();
    t.add_homophone('b', &['x']).unwrap();
    t.add_near_glyph('c', &['y', 'z']).unwrap();
    t.add_radical('d', 'y').unwrap();
    t.add_split('e', &['u', 'v']).unwrap();
    t
}

pub fn random_sentence<R: Rng>(rng: &mut R, alphabet: &[char], min: usize, max: usize) -> Sentence {
    let n = rng.gen_range(min..=max);
    Sentence::from_chars((0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect())
}

pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = Embedding::new(v);
        if e.norm() > 1e-3 {
            return e.normalized();
        }
    }
}

/// Toy pairs generated the way `train` does with default settings.
pub fn toy_pairs(copies: usize, seed: u64) -> Vec<PseudoPair> {
    let encoder = NgramEncoder::default();
    let filter = PairFilter::standard(&encoder);
    generate_pairs(
        &toy::corpus(),
        &toy::tables(),
        &OperatorPrior::uniform(),
        copies,
        seed,
        Some(&filter),
    )
    .unwrap()
    .pairs
}

pub fn toy_split(copies: usize, seed: u64) -> (Vec<PseudoPair>, Vec<PseudoPair>) {
    split_holdout(&toy_pairs(copies, seed))
}

/// Brute-force reference: connected components of the core-point graph,
/// border points attached to the adjacent component whose smallest core
/// index is lowest, everything else a singleton.
pub fn oracle(v: &[Embedding], radius: f64, min_pts: usize) -> BTreeSet<Vec<usize>> {
    let n = v.len();
    let close = |i: usize, j: usize| {
        let d = 1.0 - v[i].dot(&v[j]) / (v[i].norm() * v[j].norm());
        i == j || d <= radius
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && close(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    // component id = smallest core index in it
    let mut min_core = vec![usize::MAX; n];
    for i in (0..n).filter(|&i| core[i]) {
        let r = find(&mut parent, i);
        min_core[r] = min_core[r].min(i);
    }
    let mut owner = vec![usize::MAX; n];
    for i in 0..n {
        owner[i] = if core[i] {
            min_core[find(&mut parent, i)]
        } else {
            (0..n)
                .filter(|&j| core[j] && close(i, j))
                .map(|j| min_core[find(&mut parent, j)])
                .min()
                .unwrap_or(usize::MAX)
        };
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = Default::default();
    let mut out = BTreeSet::new();
    for i in 0..n {
        if owner[i] == usize::MAX {
            out.insert(vec![i]);
        } else {
            groups.entry(owner[i]).or_default().push(i);
        }
    }
    out.extend(groups.into_values());
    out
}

pub fn partition(v: &[Embedding], radius: f64, min_pts: usize) -> BTreeSet<Vec<usize>> {
    dbscan(v, radius, min_pts)
        .unwrap()
        .into_iter()
        .map(|c| c.members)
        .collect()
}

/// Points drawn around a few random centres so that instances contain real
/// clusters, border points and noise.
pub fn clustered_instance(seed: u64) -> (Vec<Embedding>, f64, usize) {
    let mut r = stream(mix_seed(seed, 0xdb, 0));
    let n = r.gen_range(1..=25);
    let centres: Vec<Embedding> = (0..r.gen_range(1..=4)).map(|_| random_unit(&mut r, 8)).collect();
    let spread = r.gen_range(0.05..0.6);
    let pts = (0..n)
        .map(|_| {
            let c = &centres[r.gen_range(0..centres.len())];
            let noise = random_unit(&mut r, 8).scaled(spread);
            Embedding::new(c.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect())
        })
        .collect();
    (pts, r.gen_range(0.02..0.3), r.gen_range(1..=4))
}

/// Largest relative error between the analytic gradient and central
/// differences of `logprob` over every coordinate.
pub fn max_fd_error(lat: &FeaturizedLattice, params: &PolicyParams, choices: &[usize]) -> f64 {
    const H: f64 = 1e-5;
    let analytic = lat.grad_logprob(params, choices).unwrap().to_dense(params.dim());
    let mut worst: f64 = 0.0;
    for k in 0..params.dim() {
        let mut plus = params.clone();
        plus.theta[k] += H;
        let mut minus = params.clone();
        minus.theta[k] -= H;
        let fd = (lat.logprob(&plus, choices).unwrap() - lat.logprob(&minus, choices).unwrap()) / (2.0 * H);
        let scale = analytic[k].abs().max(fd.abs());
        let err = if scale > 1e-6 {
            (analytic[k] - fd).abs() / scale
        } else {
            (analytic[k] - fd).abs()
        };
        worst = worst.max(err);
    }
    worst
}
