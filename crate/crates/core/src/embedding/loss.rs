//! Sampled log-softmax objectives for triples and token contexts.
//!
//! Both losses put the positive logit in the softmax denominator, so each
//! per-sample term is `-log p(positive)` over `1 + negatives` candidates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use super::{gcn_backward, gcn_forward_cached, EmbeddingSpace, Gradients};
use crate::error::Result;
use crate::grounding::Token;
use crate::kg::{GraphStructure, Triple};

#[derive(Debug, Clone, PartialEq)]
pub struct KgSample {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextSample {
    pub center: Token,
    pub context: Token,
    pub negatives: Vec<Token>,
}

/// `‖h + r − t‖₂`; lower means more plausible.
pub fn triple_score(h: ArrayView1<'_, f64>, r: ArrayView1<'_, f64>, t: ArrayView1<'_, f64>) -> f64 {
    assert_eq!(h.len(), r.len());
    assert_eq!(h.len(), t.len());
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| {
            let d = h + r - t;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `-log softmax(logits)[0]` and `d loss / d logits`.
fn softmax_nll(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - logits[0];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[0] -= 1.0;
    (loss, grad)
}

/// Unit direction of `v` (zero for a zero vector) and its norm.
fn direction(v: Array1<f64>) -> (Array1<f64>, f64) {
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        (v / norm, norm)
    } else {
        (v, 0.0)
    }
}

/// KG loss against explicit entity outputs. Accumulates into the gradient buffers
/// and returns the batch-mean loss.
pub(crate) fn kg_loss_on(
    batch: &[KgSample],
    entities: ArrayView2<'_, f64>,
    relations: ArrayView2<'_, f64>,
    bias: f64,
    mut d_entities: ArrayViewMut2<'_, f64>,
    mut d_relations: ArrayViewMut2<'_, f64>,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for sample in batch {
        let triples: Vec<&Triple> = std::iter::once(&sample.positive).chain(&sample.negatives).collect();
        let mut dirs = Vec::with_capacity(triples.len());
        let mut logits = Vec::with_capacity(triples.len());
        for t in &triples {
            let diff = &entities.row(t.head) + &relations.row(t.relation) - entities.row(t.tail);
            let (u, f) = direction(diff);
            logits.push(bias - f);
            dirs.push(u);
        }
        let (loss, d_logits) = softmax_nll(&logits);
        total += loss;
        for ((t, u), dz) in triples.iter().zip(&dirs).zip(&d_logits) {
            // logit = b - f, so d loss / d f = -dz
            let c = -dz * scale;
            d_entities.row_mut(t.head).scaled_add(c, u);
            d_relations.row_mut(t.relation).scaled_add(c, u);
            d_entities.row_mut(t.tail).scaled_add(-c, u);
        }
    }
    total * scale
}

fn token_row<'a>(entities: &'a ArrayView2<'_, f64>, lexemes: &'a ArrayView2<'_, f64>, tok: Token) -> ArrayView1<'a, f64> {
    match tok {
        Token::Entity(e) => entities.row(e),
        Token::Lexeme(w) => lexemes.row(w),
    }
}

pub(crate) fn text_loss_on(
    batch: &[TextSample],
    entities: ArrayView2<'_, f64>,
    lexemes: ArrayView2<'_, f64>,
    mut d_entities: ArrayViewMut2<'_, f64>,
    mut d_lexemes: ArrayViewMut2<'_, f64>,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for sample in batch {
        let center = token_row(&entities, &lexemes, sample.center);
        let others: Vec<Token> = std::iter::once(sample.context).chain(sample.negatives.iter().copied()).collect();
        let mut dirs = Vec::with_capacity(others.len());
        let mut logits = Vec::with_capacity(others.len());
        for &tok in &others {
            let diff = &center - &token_row(&entities, &lexemes, tok);
            let (u, d) = direction(diff);
            logits.push(-d);
            dirs.push(u);
        }
        let (loss, d_logits) = softmax_nll(&logits);
        total += loss;
        for ((&tok, u), dz) in others.iter().zip(&dirs).zip(&d_logits) {
            // logit = -d(center, tok); d d / d center = u, d d / d tok = -u
            let c = -dz * scale;
            add_row(&mut d_entities, &mut d_lexemes, sample.center, c, u);
            add_row(&mut d_entities, &mut d_lexemes, tok, -c, u);
        }
    }
    total * scale
}

fn add_row(
    d_entities: &mut ArrayViewMut2<'_, f64>,
    d_lexemes: &mut ArrayViewMut2<'_, f64>,
    tok: Token,
    c: f64,
    u: &Array1<f64>,
) {
    match tok {
        Token::Entity(e) => d_entities.row_mut(e).scaled_add(c, u),
        Token::Lexeme(w) => d_lexemes.row_mut(w).scaled_add(c, u),
    }
}

/// Runs the entity encoder, evaluates `f` on its output, and backpropagates the
/// output gradient `f` produced into `E^(0)` and the GCN weights.
fn through_encoder<F>(space: &EmbeddingSpace, graph: &GraphStructure, f: F) -> Result<(f64, Gradients)>
where
    F: FnOnce(ArrayView2<'_, f64>, &mut Array2<f64>, &mut Gradients) -> f64,
{
    let mut grads = Gradients::zeros_like(space);
    let mut d_out = Array2::zeros(space.entity_base.raw_dim());
    if space.gcn_enabled {
        let cache = gcn_forward_cached(space, graph)?;
        let loss = f(cache.output.view(), &mut d_out, &mut grads);
        let (d_base, d_weights) = gcn_backward(space, graph, &cache, d_out);
        grads.entity_base = d_base;
        grads.gcn_weights = d_weights;
        Ok((loss, grads))
    } else {
        let loss = f(space.entity_base.view(), &mut d_out, &mut grads);
        grads.entity_base = d_out;
        Ok((loss, grads))
    }
}

/// Batch-mean translational loss with gradients for every trainable table.
pub fn kg_loss(
    batch: &[KgSample],
    space: &EmbeddingSpace,
    graph: &GraphStructure,
    bias: f64,
) -> Result<(f64, Gradients)> {
    through_encoder(space, graph, |entities, d_out, grads| {
        kg_loss_on(
            batch,
            entities,
            space.relations.view(),
            bias,
            d_out.view_mut(),
            grads.relations.view_mut(),
        )
    })
}

/// Batch-mean skip-gram loss with gradients for every trainable table.
pub fn text_loss(batch: &[TextSample], space: &EmbeddingSpace, graph: &GraphStructure) -> Result<(f64, Gradients)> {
    for s in batch {
        space.check_token(s.center)?;
        space.check_token(s.context)?;
        for &n in &s.negatives {
            space.check_token(n)?;
        }
    }
    through_encoder(space, graph, |entities, d_out, grads| {
        text_loss_on(
            batch,
            entities,
            space.lexemes.view(),
            d_out.view_mut(),
            grads.lexemes.view_mut(),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn score_examples() {
        assert_eq!(triple_score(array![1.0, 0.0].view(), array![0.0, 1.0].view(), array![1.0, 1.0].view()), 0.0);
        assert_eq!(triple_score(array![0.0, 0.0].view(), array![0.0, 0.0].view(), array![3.0, 4.0].view()), 5.0);
        let h = array![0.2, -0.7, 1.5];
        assert_eq!(triple_score(h.view(), Array1::zeros(3).view(), h.view()), 0.0);
    }

    fn kg_loss_raw(ent: &Array2<f64>, rel: &Array2<f64>, batch: &[KgSample], b: f64) -> f64 {
        let mut de = Array2::zeros(ent.raw_dim());
        let mut dr = Array2::zeros(rel.raw_dim());
        kg_loss_on(batch, ent.view(), rel.view(), b, de.view_mut(), dr.view_mut())
    }

    #[test]
    fn equal_scores_give_ln6() {
        // every entity at the origin: all six candidate scores are ‖r‖
        let ent = Array2::zeros((7, 2));
        let rel = array![[0.6, 0.8]];
        let pos = Triple::new(0, 0, 1);
        let negatives = (2..7).map(|t| Triple::new(0, 0, t)).collect();
        let batch = vec![KgSample { positive: pos, negatives }];
        for b in [0.5, 2.0, 10.0] {
            let loss = kg_loss_raw(&ent, &rel, &batch, b);
            assert!((loss - 6f64.ln()).abs() < 1e-12, "b={b}: {loss}");
        }
    }

    #[test]
    fn dominant_positive_drives_loss_to_zero() {
        let mut ent = Array2::zeros((3, 2));
        ent[[2, 0]] = 1e4;
        let rel = array![[0.0, 0.0]];
        let batch = vec![KgSample {
            positive: Triple::new(0, 0, 1),
            negatives: vec![Triple::new(0, 0, 2); 5],
        }];
        let loss = kg_loss_raw(&ent, &rel, &batch, 2.0);
        assert!(loss >= 0.0 && loss < 1e-12, "{loss}");
    }

    fn text_loss_raw(ent: &Array2<f64>, lex: &Array2<f64>, batch: &[TextSample]) -> f64 {
        let mut de = Array2::zeros(ent.raw_dim());
        let mut dl = Array2::zeros(lex.raw_dim());
        text_loss_on(batch, ent.view(), lex.view(), de.view_mut(), dl.view_mut())
    }

    #[test]
    fn text_equal_distances_give_ln6() {
        let ent = array![[0.0, 0.0]];
        // six lexemes on the unit circle around the entity
        let lex = Array2::from_shape_fn((6, 2), |(i, j)| {
            let a = i as f64;
            if j == 0 {
                a.cos()
            } else {
                a.sin()
            }
        });
        let batch = vec![TextSample {
            center: Token::Entity(0),
            context: Token::Lexeme(0),
            negatives: (1..6).map(Token::Lexeme).collect(),
        }];
        assert!((text_loss_raw(&ent, &lex, &batch) - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn text_far_negatives_drive_loss_to_zero() {
        let ent = array![[0.0, 0.0]];
        let lex = array![[0.0, 0.0], [1e4, 0.0]];
        let batch = vec![TextSample {
            center: Token::Entity(0),
            context: Token::Lexeme(0),
            negatives: vec![Token::Lexeme(1); 5],
        }];
        assert!(text_loss_raw(&ent, &lex, &batch) < 1e-12);
    }

    #[test]
    fn text_loss_is_not_scale_invariant() {
        let ent = array![[0.1, 0.2], [0.5, -0.3]];
        let lex = array![[0.4, 0.4], [-0.6, 0.1], [0.0, 0.9]];
        let batch = vec![TextSample {
            center: Token::Entity(0),
            context: Token::Entity(1),
            negatives: vec![Token::Lexeme(0), Token::Lexeme(1), Token::Lexeme(2)],
        }];
        let a = text_loss_raw(&ent, &lex, &batch);
        let b = text_loss_raw(&(&ent * 2.0), &(&lex * 2.0), &batch);
        assert!((a - b).abs() > 1e-3, "{a} vs {b}");
        assert!(a > 0.0 && b > 0.0);
    }
}
