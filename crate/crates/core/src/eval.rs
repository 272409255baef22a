//! Ranking metrics for entity alignment: H@1, H@p and MRR.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::alignment::{AlignmentState, NeighborQuery, Retriever};
use crate::error::{Error, Result};

/// Which target entities compete for each test query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateMode {
    /// Gold targets of the test set only.
    #[default]
    Test,
    All,
}

impl FromStr for CandidateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(CandidateMode::Test),
            "all" => Ok(CandidateMode::All),
            other => Err(Error::Config(format!("unknown candidate mode {other:?} (expected test or all)"))),
        }
    }
}

impl fmt::Display for CandidateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateMode::Test => "test",
            CandidateMode::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub h1: f64,
    pub h_p: f64,
    pub p: usize,
    pub mrr: f64,
    pub n: usize,
    /// 1-based gold ranks in test-pair order.
    pub ranks: Vec<usize>,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<usize>, p: usize) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Input("empty test set".into()));
        }
        if p < 1 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        let n = ranks.len();
        let frac = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
        Ok(EvalReport {
            h1: frac(1),
            h_p: frac(p),
            p,
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n as f64,
            n,
            ranks,
        })
    }

    /// `metric<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        format!(
            "h1\t{:.4}\nh_p\t{:.4}\nmrr\t{:.4}\nn\t{}\n",
            self.h1, self.h_p, self.mrr, self.n
        )
    }
}

/// Resolves `(source id, target id)` test pairs to entity indices.
pub fn resolve_pairs<S: AsRef<str>>(state: &AlignmentState, pairs: &[(S, S)]) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|(s, t)| {
            let (s, t) = (s.as_ref(), t.as_ref());
            let a = state
                .source
                .entity_ids
                .get(s)
                .ok_or_else(|| Error::Input(format!("unknown source entity {s:?} in test set")))?;
            let b = state
                .target
                .entity_ids
                .get(t)
                .ok_or_else(|| Error::Input(format!("gold target {t:?} missing from the target entities")))?;
            Ok((a, b))
        })
        .collect()
}

pub fn candidates_for(state: &AlignmentState, test: &[(usize, usize)], mode: CandidateMode) -> Vec<usize> {
    match mode {
        CandidateMode::All => (0..state.target.entities.nrows()).collect(),
        CandidateMode::Test => {
            let mut seen = HashSet::new();
            let mut c: Vec<usize> = test.iter().map(|&(_, t)| t).filter(|t| seen.insert(*t)).collect();
            c.sort_unstable();
            c
        }
    }
}

pub fn evaluate(
    test: &[(usize, usize)],
    state: &AlignmentState,
    q: &NeighborQuery,
    p: usize,
    mode: CandidateMode,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let retriever = Retriever::new(state, q, candidates_for(state, test, mode))?;
    let ranks = test
        .iter()
        .map(|&(s, t)| retriever.rank_of(s, t))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_ranks(ranks, p)
}
