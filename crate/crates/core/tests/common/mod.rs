//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;
pub mod text;

use std::collections::BTreeSet;

use kgalign_core::alignment::{AlignSpace, AlignmentState, Metric, NeighborQuery};
use kgalign_core::embedding::EmbeddingTable;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
pub fn random_orthogonal(rng: &mut impl Rng, k: usize) -> Array2<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((k, k), |(i, j)| q[(i, j)] * r[(j, j)].signum())
}

pub fn unit_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / n);
    }
    out
}

pub fn table(prefix: &str, entities: Array2<f64>, lexemes: Array2<f64>) -> EmbeddingTable {
    EmbeddingTable {
        entity_ids: (0..entities.nrows()).map(|i| format!("{prefix}_e{i}")).collect(),
        lexeme_ids: (0..lexemes.nrows()).map(|i| format!("{prefix}_w{i}")).collect(),
        entities,
        lexemes,
    }
}

pub fn state_from(src: &EmbeddingTable, tgt: &EmbeddingTable) -> AlignmentState {
    AlignmentState::new(
        AlignSpace::from_table(src).unwrap(),
        AlignSpace::from_table(tgt).unwrap(),
    )
    .unwrap()
}

/// Isomorphic pair of spaces: target entity `perm[i]` is `Q x_i + noise`.
pub struct Rotated {
    pub source: EmbeddingTable,
    pub target: EmbeddingTable,
    pub perm: Vec<usize>,
    pub lex_perm: Vec<usize>,
    pub q: Array2<f64>,
}

pub fn rotated_fixture(rng: &mut impl Rng, n: usize, n_lex: usize, k: usize, noise: f64) -> Rotated {
    use rand::seq::SliceRandom;
    let q = random_orthogonal(rng, k);
    let src_e = gaussian(rng, n, k);
    let src_w = gaussian(rng, n_lex, k);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut lex_perm: Vec<usize> = (0..n_lex).collect();
    lex_perm.shuffle(rng);
    let mut tgt_e = Array2::zeros((n, k));
    for i in 0..n {
        let y = q.dot(&src_e.row(i)) + gaussian(rng, 1, k).row(0).mapv(|v| v * noise);
        tgt_e.row_mut(perm[i]).assign(&y);
    }
    let mut tgt_w = Array2::zeros((n_lex, k));
    for i in 0..n_lex {
        let y = q.dot(&src_w.row(i)) + gaussian(rng, 1, k).row(0).mapv(|v| v * noise);
        tgt_w.row_mut(lex_perm[i]).assign(&y);
    }
    Rotated {
        source: table("s", src_e, src_w),
        target: table("t", tgt_e, tgt_w),
        perm,
        lex_perm,
        q,
    }
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mean of the `k` largest values, found by a full sort.
fn mean_top(mut v: Vec<f64>, k: usize) -> f64 {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = k.min(v.len());
    v[..k].iter().sum::<f64>() / k as f64
}

/// Score of every (source row, target row) pair, computed element by element.
pub fn brute_scores(sources: &[Vec<f64>], targets: &[Vec<f64>], q: &NeighborQuery) -> Vec<Vec<f64>> {
    let c: Vec<Vec<f64>> = sources.iter().map(|s| targets.iter().map(|t| cos(s, t)).collect()).collect();
    match q.metric {
        Metric::L2 => c
            .iter()
            .map(|row| row.iter().map(|&x| -(2.0 - 2.0 * x).max(0.0).sqrt()).collect())
            .collect(),
        Metric::Csls => {
            let r_t: Vec<f64> = c.iter().map(|row| mean_top(row.clone(), q.csls_k)).collect();
            let r_s: Vec<f64> = (0..targets.len())
                .map(|j| mean_top(c.iter().map(|row| row[j]).collect(), q.csls_k))
                .collect();
            c.iter()
                .enumerate()
                .map(|(i, row)| row.iter().enumerate().map(|(j, &x)| 2.0 * x - r_t[i] - r_s[j]).collect())
                .collect()
        }
    }
}

pub fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, j| if v[j] > v[best] { j } else { best })
}

/// Mutual nearest neighbours recomputed from scratch: pools of unaligned
/// entities plus the `top_f` first lexemes on each side, kind-matched pairs
/// only, lexeme pairs already held dropped.
pub fn mutual_oracle(state: &AlignmentState, q: &NeighborQuery, top_f: usize) -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>) {
    let m = &state.transform;
    let pool = |space: &AlignSpace, aligned: &dyn Fn(usize) -> bool, map: bool| {
        let mut items = Vec::new();
        let mut vecs = Vec::new();
        let mut push = |kind: u8, i: usize, v: ndarray::ArrayView1<'_, f64>| {
            items.push((kind, i));
            vecs.push(if map { m.dot(&v).to_vec() } else { v.to_vec() });
        };
        for e in 0..space.entities.nrows() {
            if !aligned(e) {
                push(0, e, space.entities.row(e));
            }
        }
        for w in 0..space.lexemes.nrows().min(top_f) {
            push(1, w, space.lexemes.row(w));
        }
        (items, vecs)
    };
    let (si, sv) = pool(&state.source, &|e| state.is_source_aligned(e), true);
    let (ti, tv) = pool(&state.target, &|e| state.is_target_aligned(e), false);
    let held: BTreeSet<(usize, usize)> = state.lexeme_pairs().iter().copied().collect();
    let mut ents = BTreeSet::new();
    let mut lexs = BTreeSet::new();
    if si.is_empty() || ti.is_empty() {
        return (ents, lexs);
    }
    let s = brute_scores(&sv, &tv, q);
    for i in 0..si.len() {
        let j = argmax(&s[i]);
        let col: Vec<f64> = s.iter().map(|r| r[j]).collect();
        if argmax(&col) != i {
            continue;
        }
        match (si[i], ti[j]) {
            ((0, a), (0, b)) => {
                ents.insert((a, b));
            }
            ((1, a), (1, b)) if !held.contains(&(a, b)) => {
                lexs.insert((a, b));
            }
            _ => {}
        }
    }
    (ents, lexs)
}
