//! Retrofitted cross-space alignment.
//!
//! Both embedding spaces stay fixed. An orthogonal map `M` is re-solved in
//! closed form from the current alignment set, new entity and lexeme pairs are
//! proposed under a mutual-nearest-neighbor constraint, and the loop repeats
//! until the number of new entity pairs falls below a fraction of the source
//! entity vocabulary.

mod csls;
mod procrustes;
mod state_io;

pub use csls::{
    cosine_matrix, csls_score, normalize_rows, rank_descending, score_matrix, CslsContext, Metric, NeighborQuery,
};
pub use procrustes::{orthogonality_error, procrustes_solve};
pub use state_io::{read_pairs, write_predictions, LoadedState};

use std::collections::HashSet;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::Vocab;

/// Unit-normalized fixed vectors of one language.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignSpace {
    pub entity_ids: Vocab,
    pub entities: Array2<f64>,
    /// Ordered by descending corpus frequency.
    pub lexeme_ids: Vocab,
    pub lexemes: Array2<f64>,
}

impl AlignSpace {
    pub fn from_table(table: &EmbeddingTable) -> Result<Self> {
        for (ids, m) in [(&table.entity_ids, &table.entities), (&table.lexeme_ids, &table.lexemes)] {
            if let Some(i) = m.rows().into_iter().position(|r| !(r.dot(&r) > 0.0)) {
                return Err(Error::Numerical(format!(
                    "{} has a zero vector and cannot be aligned (all ReLU outputs dead?)",
                    ids[i]
                )));
            }
        }
        Ok(AlignSpace {
            entity_ids: table.entity_ids.iter().collect(),
            entities: normalize_rows(table.entities.view())?,
            lexeme_ids: table.lexeme_ids.iter().collect(),
            lexemes: if table.lexemes.nrows() == 0 {
                table.lexemes.clone()
            } else {
                normalize_rows(table.lexemes.view())?
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.entities.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemKind {
    Entity,
    Lexeme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationRecord {
    pub entity_proposals: usize,
    pub lexeme_proposals: usize,
    /// Whether the proposals were inserted (false on the stopping iteration).
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Proposals {
    pub entities: Vec<(usize, usize)>,
    pub lexemes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfLearnOptions {
    /// Stop once an iteration proposes fewer than this fraction of |source entities|.
    pub stop_fraction: f64,
    pub max_iterations: usize,
    /// Only the `lexicon_top_f` most frequent lexemes of each side may be proposed.
    pub lexicon_top_f: usize,
}

impl Default for SelfLearnOptions {
    fn default() -> Self {
        SelfLearnOptions {
            stop_fraction: 0.01,
            max_iterations: 50,
            lexicon_top_f: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentState {
    pub source: AlignSpace,
    pub target: AlignSpace,
    entity_pairs: Vec<(usize, usize)>,
    aligned_source: HashSet<usize>,
    aligned_target: HashSet<usize>,
    lexeme_pairs: Vec<(usize, usize)>,
    lexeme_set: HashSet<(usize, usize)>,
    /// `M`, applied as `M x` to source column vectors.
    pub transform: Array2<f64>,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl AlignmentState {
    pub fn new(source: AlignSpace, target: AlignSpace) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::Input(format!(
                "source dimension {} differs from target dimension {}",
                source.dim(),
                target.dim()
            )));
        }
        let k = source.dim();
        Ok(AlignmentState {
            source,
            target,
            entity_pairs: Vec::new(),
            aligned_source: HashSet::new(),
            aligned_target: HashSet::new(),
            lexeme_pairs: Vec::new(),
            lexeme_set: HashSet::new(),
            transform: Array2::eye(k),
            iterations: 0,
            history: Vec::new(),
        })
    }

    pub fn entity_pairs(&self) -> &[(usize, usize)] {
        &self.entity_pairs
    }

    pub fn lexeme_pairs(&self) -> &[(usize, usize)] {
        &self.lexeme_pairs
    }

    pub fn is_source_aligned(&self, e: usize) -> bool {
        self.aligned_source.contains(&e)
    }

    pub fn is_target_aligned(&self, e: usize) -> bool {
        self.aligned_target.contains(&e)
    }

    /// Adds an entity pair unless either side is already aligned.
    pub fn add_entity_pair(&mut self, source: usize, target: usize) -> bool {
        if self.aligned_source.contains(&source) || self.aligned_target.contains(&target) {
            return false;
        }
        self.aligned_source.insert(source);
        self.aligned_target.insert(target);
        self.entity_pairs.push((source, target));
        true
    }

    pub fn add_lexeme_pair(&mut self, source: usize, target: usize) -> bool {
        if !self.lexeme_set.insert((source, target)) {
            return false;
        }
        self.lexeme_pairs.push((source, target));
        true
    }

    /// Seeds entity pairs by id; returns how many were skipped (unknown id or not 1-to-1).
    pub fn seed_entities<S: AsRef<str>>(&mut self, pairs: &[(S, S)]) -> usize {
        let mut skipped = 0;
        for (s, t) in pairs {
            match (self.source.entity_ids.get(s.as_ref()), self.target.entity_ids.get(t.as_ref())) {
                (Some(s), Some(t)) if self.add_entity_pair(s, t) => {}
                _ => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} seed entity pairs skipped (unknown id or conflicting with 1-to-1)");
        }
        skipped
    }

    pub fn seed_lexemes<S: AsRef<str>>(&mut self, pairs: &[(S, S)]) -> usize {
        let mut skipped = 0;
        for (s, t) in pairs {
            match (self.source.lexeme_ids.get(s.as_ref()), self.target.lexeme_ids.get(t.as_ref())) {
                (Some(s), Some(t)) => {
                    self.add_lexeme_pair(s, t);
                }
                _ => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} seed lexicon pairs skipped (lexeme not in vocabulary)");
        }
        skipped
    }

    /// Source entity vectors after applying `M` (rows).
    pub fn mapped_source_entities(&self) -> Array2<f64> {
        self.source.entities.dot(&self.transform.t())
    }

    /// Re-solves `M` from every entity and lexeme pair currently in the set.
    pub fn solve(&mut self) -> Result<()> {
        let (src, tgt) = (&self.source, &self.target);
        let pairs = self
            .entity_pairs
            .iter()
            .map(|&(s, t)| (src.entities.row(s), tgt.entities.row(t)))
            .chain(
                self.lexeme_pairs
                    .iter()
                    .map(|&(s, t)| (src.lexemes.row(s), tgt.lexemes.row(t))),
            );
        self.transform = procrustes_solve(pairs)?;
        Ok(())
    }
}

/// Candidate pool for one side: unaligned entities plus the most frequent lexemes.
struct Pool {
    items: Vec<(ItemKind, usize)>,
    vectors: Array2<f64>,
}

fn pool(space: &AlignSpace, aligned: &HashSet<usize>, top_f: usize) -> Pool {
    let entities: Vec<usize> = (0..space.entities.nrows()).filter(|e| !aligned.contains(e)).collect();
    let n_lex = space.lexemes.nrows().min(top_f);
    let mut items: Vec<(ItemKind, usize)> = entities.iter().map(|&e| (ItemKind::Entity, e)).collect();
    items.extend((0..n_lex).map(|w| (ItemKind::Lexeme, w)));
    let ent = space.entities.select(Axis(0), &entities);
    let vectors = concatenate(Axis(0), &[ent.view(), space.lexemes.slice(s![..n_lex, ..])]).expect("same width");
    Pool { items, vectors }
}

fn row_argmax(m: ArrayView2<'_, f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mutual 1-NN pairs of the same kind between the current pools.
pub fn propose_pairs(state: &AlignmentState, q: &NeighborQuery, lexicon_top_f: usize) -> Result<Proposals> {
    q.validate()?;
    let src = pool(&state.source, &state.aligned_source, lexicon_top_f);
    let tgt = pool(&state.target, &state.aligned_target, lexicon_top_f);
    let mut out = Proposals::default();
    if src.items.is_empty() || tgt.items.is_empty() {
        return Ok(out);
    }
    let mapped = src.vectors.dot(&state.transform.t());
    let scores = score_matrix(mapped.view(), tgt.vectors.view(), q)?;
    let best_target = row_argmax(scores.view());
    let best_source = row_argmax(scores.t());
    for (i, &j) in best_target.iter().enumerate() {
        if best_source[j] != i {
            continue;
        }
        match (src.items[i], tgt.items[j]) {
            ((ItemKind::Entity, s), (ItemKind::Entity, t)) => out.entities.push((s, t)),
            ((ItemKind::Lexeme, s), (ItemKind::Lexeme, t)) => {
                if !state.lexeme_set.contains(&(s, t)) {
                    out.lexemes.push((s, t));
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// A single Procrustes solve on the seed set, with no proposal loop.
pub fn solve_only(mut state: AlignmentState) -> Result<AlignmentState> {
    if state.entity_pairs.is_empty() {
        return Err(Error::Input("alignment needs at least one seed entity pair".into()));
    }
    state.solve()?;
    state.iterations = 1;
    Ok(state)
}

pub fn self_learn(state: AlignmentState, q: &NeighborQuery, opts: &SelfLearnOptions) -> Result<AlignmentState> {
    self_learn_observed(state, q, opts, |_, _| {})
}

/// [`self_learn`], calling `observe` with the state and its proposals before
/// each insertion decision.
pub fn self_learn_observed<F>(mut state: AlignmentState, q: &NeighborQuery, opts: &SelfLearnOptions, mut observe: F) -> Result<AlignmentState>
where
    F: FnMut(&AlignmentState, &Proposals),
{
    if state.entity_pairs.is_empty() {
        return Err(Error::Input("self-learning needs at least one seed entity pair".into()));
    }
    if !(opts.stop_fraction > 0.0 && opts.stop_fraction <= 1.0) {
        return Err(Error::Config("stop fraction must lie in (0, 1]".into()));
    }
    if opts.max_iterations < 1 {
        return Err(Error::Config("max iterations must be at least 1".into()));
    }
    let threshold = opts.stop_fraction * state.source.entities.nrows() as f64;
    let mut stale = false;
    for it in 1..=opts.max_iterations {
        state.solve()?;
        stale = false;
        state.iterations = it;
        let p = propose_pairs(&state, q, opts.lexicon_top_f)?;
        observe(&state, &p);
        let stop = (p.entities.len() as f64) < threshold;
        state.history.push(IterationRecord {
            entity_proposals: p.entities.len(),
            lexeme_proposals: p.lexemes.len(),
            accepted: !stop,
        });
        log::debug!(
            "self-learning iteration {it}: {} entity / {} lexeme proposals{}",
            p.entities.len(),
            p.lexemes.len(),
            if stop { " (stop)" } else { "" }
        );
        if stop {
            break;
        }
        for (s, t) in p.entities {
            state.add_entity_pair(s, t);
        }
        for (s, t) in p.lexemes {
            state.add_lexeme_pair(s, t);
        }
        stale = true;
    }
    if stale {
        // iteration cap reached with fresh pairs: refit so M reflects the final set
        state.solve()?;
    }
    Ok(state)
}

/// Ranks a candidate set of target entities for source-entity queries.
pub struct Retriever<'a> {
    state: &'a AlignmentState,
    q: NeighborQuery,
    candidates: Vec<usize>,
    candidate_vectors: Array2<f64>,
    mapped: Array2<f64>,
    context: Option<CslsContext>,
}

impl<'a> Retriever<'a> {
    /// CSLS penalties are computed between all mapped source entities and the candidates.
    pub fn new(state: &'a AlignmentState, q: &NeighborQuery, candidates: Vec<usize>) -> Result<Self> {
        q.validate()?;
        if candidates.is_empty() {
            return Err(Error::Input("empty candidate set".into()));
        }
        if let Some(&bad) = candidates.iter().find(|&&c| c >= state.target.entities.nrows()) {
            return Err(Error::Input(format!("candidate index {bad} out of range")));
        }
        let candidate_vectors = state.target.entities.select(Axis(0), &candidates);
        let mapped = normalize_rows(state.mapped_source_entities().view())?;
        let context = match q.metric {
            Metric::Csls => Some(CslsContext::new(mapped.view(), candidate_vectors.view(), q.csls_k)?),
            Metric::L2 => None,
        };
        Ok(Retriever {
            state,
            q: *q,
            candidates,
            candidate_vectors,
            mapped,
            context,
        })
    }

    pub fn all_targets(state: &'a AlignmentState, q: &NeighborQuery) -> Result<Self> {
        Self::new(state, q, (0..state.target.entities.nrows()).collect())
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Scores of every candidate for one source entity (higher is better).
    pub fn scores(&self, query: usize) -> Vec<f64> {
        let cos = self.candidate_vectors.dot(&self.mapped.row(query));
        match (&self.q.metric, &self.context) {
            (Metric::Csls, Some(ctx)) => cos
                .iter()
                .zip(&ctx.target_penalty)
                .map(|(c, r_s)| 2.0 * c - ctx.source_penalty[query] - r_s)
                .collect(),
            _ => cos.iter().map(|c| -(2.0 - 2.0 * c).max(0.0).sqrt()).collect(),
        }
    }

    /// Candidates best-first as `(target entity, score)`; ties by target index.
    pub fn ranked(&self, query: usize) -> Vec<(usize, f64)> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(self.candidates[a].cmp(&self.candidates[b]))
        });
        order.into_iter().map(|i| (self.candidates[i], scores[i])).collect()
    }

    /// 1-based rank of `gold` among the candidates for `query`.
    pub fn rank_of(&self, query: usize, gold: usize) -> Result<usize> {
        let pos = self
            .candidates
            .iter()
            .position(|&c| c == gold)
            .ok_or_else(|| Error::Input(format!("gold target {} is not a candidate", self.state.target.entity_ids.id(gold))))?;
        let scores = self.scores(query);
        let g = scores[pos];
        let ahead = scores
            .iter()
            .zip(&self.candidates)
            .filter(|&(&s, &c)| s > g || (s == g && c < gold))
            .count();
        Ok(ahead + 1)
    }
}

/// Ranked target entity ids for one source entity id.
pub fn infer(state: &AlignmentState, query: &str, q: &NeighborQuery, candidates: &[usize]) -> Result<Vec<(String, f64)>> {
    let e = state
        .source
        .entity_ids
        .get(query)
        .ok_or_else(|| Error::Input(format!("unknown source entity {query:?}")))?;
    let r = Retriever::new(state, q, candidates.to_vec())?;
    Ok(r.ranked(e)
        .into_iter()
        .map(|(t, s)| (state.target.entity_ids.id(t).to_owned(), s))
        .collect())
}
