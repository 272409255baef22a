//! Cross-domain similarity local scaling and plain-distance retrieval.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Csls,
    L2,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csls" => Ok(Metric::Csls),
            "l2" => Ok(Metric::L2),
            other => Err(Error::Config(format!("unknown metric {other:?} (expected csls or l2)"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Csls => "csls",
            Metric::L2 => "l2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborQuery {
    pub metric: Metric,
    /// Neighborhood size for the CSLS penalty terms.
    pub csls_k: usize,
}

impl Default for NeighborQuery {
    fn default() -> Self {
        NeighborQuery {
            metric: Metric::Csls,
            csls_k: 10,
        }
    }
}

impl NeighborQuery {
    pub fn validate(&self) -> Result<()> {
        if self.csls_k < 1 {
            return Err(Error::Config("csls_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rows scaled to unit length. Zero rows are an error.
pub fn normalize_rows(m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = m.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Input(format!("row {i} has norm {n}; cannot normalize")));
        }
        row /= n;
    }
    Ok(out)
}

/// Cosine similarities between every row of `a` and every row of `b`.
pub fn cosine_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(normalize_rows(a)?.dot(&normalize_rows(b)?.t()))
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Input("cosine of a zero-norm vector".into()));
    }
    Ok(a.dot(&b) / (na * nb))
}

/// Mean of the `k` largest values (all of them when fewer than `k`).
fn top_k_mean(values: impl Iterator<Item = f64>, k: usize) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    let k = k.min(v.len());
    v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    v[..k].iter().sum::<f64>() / k as f64
}

/// Local-density penalties for one (mapped source set, target set) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CslsContext {
    /// `r_T`: mean cosine of each mapped source to its `k` nearest targets.
    pub source_penalty: Vec<f64>,
    /// `r_S`: mean cosine of each target to its `k` nearest mapped sources.
    pub target_penalty: Vec<f64>,
}

impl CslsContext {
    pub fn from_cosines(cos: ArrayView2<'_, f64>, k: usize) -> Self {
        let source_penalty = cos.rows().into_iter().map(|r| top_k_mean(r.iter().copied(), k)).collect();
        let target_penalty = cos.columns().into_iter().map(|c| top_k_mean(c.iter().copied(), k)).collect();
        CslsContext {
            source_penalty,
            target_penalty,
        }
    }

    pub fn new(mapped_sources: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, k: usize) -> Result<Self> {
        Ok(Self::from_cosines(cosine_matrix(mapped_sources, targets)?.view(), k))
    }
}

/// `2 cos(Mx, y) − r_T(Mx) − r_S(y)`
pub fn csls_score(mapped_source: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>, r_t: f64, r_s: f64) -> Result<f64> {
    Ok(2.0 * cosine(mapped_source, target)? - r_t - r_s)
}

/// Score matrix between mapped sources (rows) and targets (columns); higher is closer.
pub fn score_matrix(mapped_sources: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, q: &NeighborQuery) -> Result<Array2<f64>> {
    let cos = cosine_matrix(mapped_sources, targets)?;
    Ok(match q.metric {
        Metric::Csls => {
            let ctx = CslsContext::from_cosines(cos.view(), q.csls_k);
            let mut s = cos * 2.0;
            for (i, mut row) in s.rows_mut().into_iter().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v -= ctx.source_penalty[i] + ctx.target_penalty[j];
                }
            }
            s
        }
        // unit vectors: ‖a − b‖ = √(2 − 2 cos)
        Metric::L2 => cos.mapv(|c| -(2.0 - 2.0 * c).max(0.0).sqrt()),
    })
}

/// Sorts candidate positions by descending score, ties by ascending position.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_cloud_scores_zero() {
        let v = array![[0.3, 0.4, 0.5], [0.3, 0.4, 0.5], [0.3, 0.4, 0.5]];
        let ctx = CslsContext::new(v.view(), v.view(), 2).unwrap();
        let s = csls_score(v.row(0), v.row(1), ctx.source_penalty[0], ctx.target_penalty[1]).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        let a = array![0.0, 0.0];
        let b = array![1.0, 0.0];
        assert!(csls_score(a.view(), b.view(), 0.0, 0.0).is_err());
        assert!(normalize_rows(array![[0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn top_k_mean_handles_short_rows() {
        assert_eq!(top_k_mean([1.0, 3.0, 2.0].into_iter(), 2), 2.5);
        assert_eq!(top_k_mean([1.0, 3.0].into_iter(), 10), 2.0);
    }

    #[test]
    fn l2_scores_order_like_distance() {
        let s = array![[1.0, 0.0]];
        let t = array![[0.0, 1.0], [1.0, 0.1], [-1.0, 0.0]];
        let q = NeighborQuery {
            metric: Metric::L2,
            csls_k: 1,
        };
        let m = score_matrix(s.view(), t.view(), &q).unwrap();
        assert_eq!(rank_descending(m.row(0).as_slice().unwrap()), vec![1, 0, 2]);
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(rank_descending(&[0.5, 1.0, 0.5, 1.0]), vec![1, 3, 0, 2]);
    }
}
