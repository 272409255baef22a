use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::NegativeSampler;
use crate::error::{Error, Result};
use crate::grounding::{GroundedCorpus, Token};
use crate::kg::{KnowledgeGraph, RelationStat, Triple};

const MAX_RESAMPLE: usize = 1000;

/// Bernoulli corruption: replace the head with probability `tph / (tph + hpt)`,
/// otherwise the tail, by a uniform random entity. Corruptions that exist in the
/// KG are redrawn.
pub fn negative_triples(
    triple: Triple,
    stat: RelationStat,
    kg: &KnowledgeGraph,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>> {
    let n = kg.n_entities();
    if n < 2 {
        return Err(Error::Input("negative sampling needs at least two entities".into()));
    }
    let p_head = stat.head_corruption_prob();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..MAX_RESAMPLE {
            let e = rng.random_range(0..n);
            let cand = if rng.random_bool(p_head) {
                Triple { head: e, ..triple }
            } else {
                Triple { tail: e, ..triple }
            };
            if !kg.contains(&cand) && cand != triple {
                found = Some(cand);
                break;
            }
        }
        out.push(found.ok_or_else(|| {
            Error::Input(format!("no unobserved corruption found for triple {triple:?}"))
        })?);
    }
    Ok(out)
}

/// Every ordered `(center, context)` pair within `radius` positions, per document.
pub fn context_pairs(corpus: &GroundedCorpus, radius: usize) -> impl Iterator<Item = (Token, Token)> + '_ {
    corpus.documents.iter().flat_map(move |doc| {
        (0..doc.len()).flat_map(move |i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(doc.len().saturating_sub(1));
            (lo..=hi).filter(move |&j| j != i).map(move |j| (doc[i], doc[j]))
        })
    })
}

/// Draws negative tokens from the combined entity + lexeme vocabulary.
#[derive(Debug, Clone)]
pub struct TokenSampler {
    n_entities: usize,
    n_lexemes: usize,
    weights: Option<WeightedIndex<f64>>,
}

impl TokenSampler {
    pub fn new(corpus: &GroundedCorpus, n_entities: usize, kind: NegativeSampler) -> Result<Self> {
        let n_lexemes = corpus.lexicon.len();
        if n_entities + n_lexemes == 0 {
            return Err(Error::Input("empty token vocabulary".into()));
        }
        let weights = match kind {
            NegativeSampler::Uniform => None,
            NegativeSampler::Unigram => {
                let mut counts = vec![0.0f64; n_entities + n_lexemes];
                for tok in corpus.documents.iter().flatten() {
                    if let Token::Entity(e) = tok {
                        counts[*e] += 1.0;
                    }
                }
                for (i, f) in corpus.lexeme_freq.iter().enumerate() {
                    counts[n_entities + i] = *f as f64;
                }
                let w = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75)))
                    .map_err(|e| Error::Input(format!("unigram sampler: {e}")))?;
                Some(w)
            }
        };
        Ok(TokenSampler {
            n_entities,
            n_lexemes,
            weights,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.n_entities + self.n_lexemes
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Token {
        let i = match &self.weights {
            Some(w) => w.sample(rng),
            None => rng.random_range(0..self.vocab_size()),
        };
        if i < self.n_entities {
            Token::Entity(i)
        } else {
            Token::Lexeme(i - self.n_entities)
        }
    }
}
