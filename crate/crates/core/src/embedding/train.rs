use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{kg_loss, text_loss, KgSample, TextSample};
use super::sampling::{context_pairs, negative_triples, TokenSampler};
use super::{AmsGrad, EmbeddingSpace, Gradients, OptimizerConfig};
use crate::error::{Error, Result};
use crate::grounding::{GroundedCorpus, Token};
use crate::kg::{build_graph_structure, relation_stats, GraphStructure, KnowledgeGraph, RelationStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Kg,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean batch loss over the epoch; `None` when that loss is disabled.
    pub kg: Option<f64>,
    pub text: Option<f64>,
}

impl EpochLoss {
    pub fn total(&self) -> f64 {
        self.kg.unwrap_or(0.0) + self.text.unwrap_or(0.0)
    }
}

/// Cyclic shuffled stream of indices.
#[derive(Debug, Clone)]
struct Stream {
    order: Vec<usize>,
    cursor: usize,
}

impl Stream {
    fn new(len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Stream { order, cursor: 0 }
    }

    fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let end = (self.cursor + size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        batch
    }
}

/// Alternating KG / text optimizer over one language.
///
/// One epoch is one pass over the triples; every iteration runs one KG batch
/// followed by one text batch. The text stream cycles independently of epochs.
pub struct Trainer<'a> {
    kg: &'a KnowledgeGraph,
    graph: GraphStructure,
    stats: RelationStats,
    pairs: Vec<(Token, Token)>,
    sampler: TokenSampler,
    cfg: OptimizerConfig,
    rng: ChaCha8Rng,
    space: EmbeddingSpace,
    opt: AmsGrad,
    kg_stream: Stream,
    text_stream: Stream,
    next: StepKind,
    kg_steps: u64,
    text_steps: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(kg: &'a KnowledgeGraph, corpus: &GroundedCorpus, cfg: &OptimizerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if let Some(bad) = corpus.documents.iter().flatten().find_map(|t| match t {
            Token::Entity(e) if *e >= kg.n_entities() => Some(*e),
            _ => None,
        }) {
            return Err(Error::Input(format!("corpus references entity index {bad} outside the KG")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = EmbeddingSpace::init(kg.n_entities(), kg.n_relations(), corpus.lexicon.len(), cfg, &mut rng);
        let graph = build_graph_structure(kg);
        let stats = relation_stats(kg);
        let pairs: Vec<(Token, Token)> = if cfg.text_loss {
            context_pairs(corpus, cfg.context_radius).collect()
        } else {
            Vec::new()
        };
        if cfg.text_loss && pairs.is_empty() {
            log::warn!("corpus yields no context pairs; text steps will be skipped");
        }
        let sampler = TokenSampler::new(corpus, kg.n_entities(), cfg.negative_sampler)?;
        let kg_stream = Stream::new(kg.triples().len(), &mut rng);
        let text_stream = Stream::new(pairs.len(), &mut rng);
        let next = if cfg.kg_loss { StepKind::Kg } else { StepKind::Text };
        Ok(Trainer {
            kg,
            graph,
            stats,
            pairs,
            sampler,
            opt: AmsGrad::new(cfg.lr, cfg.beta1, cfg.beta2),
            cfg: cfg.clone(),
            rng,
            space,
            kg_stream,
            text_stream,
            next,
            kg_steps: 0,
            text_steps: 0,
        })
    }

    pub fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    pub fn graph(&self) -> &GraphStructure {
        &self.graph
    }

    pub fn kg_steps(&self) -> u64 {
        self.kg_steps
    }

    pub fn text_steps(&self) -> u64 {
        self.text_steps
    }

    /// Iterations per epoch: one pass over the triples.
    pub fn iterations_per_epoch(&self) -> usize {
        self.kg.triples().len().div_ceil(self.cfg.batch_size)
    }

    fn text_active(&self) -> bool {
        self.cfg.text_loss && !self.pairs.is_empty()
    }

    fn kg_batch(&mut self) -> Result<Vec<KgSample>> {
        let idx = self.kg_stream.next_batch(self.cfg.batch_size, &mut self.rng);
        idx.into_iter()
            .map(|i| {
                let positive = self.kg.triples()[i];
                let negatives = negative_triples(
                    positive,
                    self.stats.get(positive.relation),
                    self.kg,
                    self.cfg.neg_samples,
                    &mut self.rng,
                )?;
                Ok(KgSample { positive, negatives })
            })
            .collect()
    }

    fn text_batch(&mut self) -> Vec<TextSample> {
        let idx = self.text_stream.next_batch(self.cfg.batch_size, &mut self.rng);
        idx.into_iter()
            .map(|i| {
                let (center, context) = self.pairs[i];
                let negatives = (0..self.cfg.neg_samples)
                    .map(|_| loop {
                        let t = self.sampler.sample(&mut self.rng);
                        if t != center || self.sampler.vocab_size() == 1 {
                            break t;
                        }
                    })
                    .collect();
                TextSample {
                    center,
                    context,
                    negatives,
                }
            })
            .collect()
    }

    fn apply(&mut self, grads: &Gradients) {
        let s = &mut self.space;
        let mut params: Vec<&mut ndarray::Array2<f64>> = vec![&mut s.entity_base, &mut s.relations, &mut s.lexemes];
        params.extend(s.gcn_weights.iter_mut());
        let mut g: Vec<&ndarray::Array2<f64>> = vec![&grads.entity_base, &grads.relations, &grads.lexemes];
        g.extend(grads.gcn_weights.iter());
        self.opt.step(&mut params, &g);
        if !s.gcn_enabled {
            s.entity_output.assign(&s.entity_base);
        }
    }

    /// Runs a single optimizer step of the given kind and returns its batch loss.
    pub fn step_kind(&mut self, kind: StepKind) -> Result<f64> {
        let (loss, grads) = match kind {
            StepKind::Kg => {
                let batch = self.kg_batch()?;
                kg_loss(&batch, &self.space, &self.graph, self.cfg.bias_b)?
            }
            StepKind::Text => {
                let batch = self.text_batch();
                text_loss(&batch, &self.space, &self.graph)?
            }
        };
        let step = self.kg_steps + self.text_steps + 1;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("{kind:?} loss is {loss} at optimizer step {step}")));
        }
        self.apply(&grads);
        match kind {
            StepKind::Kg => self.kg_steps += 1,
            StepKind::Text => self.text_steps += 1,
        }
        Ok(loss)
    }

    /// Next step in the alternating schedule.
    pub fn step(&mut self) -> Result<(StepKind, f64)> {
        let kind = match (self.cfg.kg_loss, self.text_active()) {
            (true, true) => self.next,
            (true, false) => StepKind::Kg,
            (false, true) => StepKind::Text,
            (false, false) => return Err(Error::Config("no loss to optimize".into())),
        };
        let loss = self.step_kind(kind)?;
        self.next = match kind {
            StepKind::Kg => StepKind::Text,
            StepKind::Text => StepKind::Kg,
        };
        Ok((kind, loss))
    }

    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochLoss> {
        let mut kg_sum = 0.0;
        let mut kg_n = 0usize;
        let mut text_sum = 0.0;
        let mut text_n = 0usize;
        let steps_per_iter = usize::from(self.cfg.kg_loss) + usize::from(self.text_active());
        for _ in 0..self.iterations_per_epoch() * steps_per_iter {
            match self.step()? {
                (StepKind::Kg, l) => {
                    kg_sum += l;
                    kg_n += 1;
                }
                (StepKind::Text, l) => {
                    text_sum += l;
                    text_n += 1;
                }
            }
        }
        if !self.space.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
        Ok(EpochLoss {
            epoch,
            kg: (kg_n > 0).then(|| kg_sum / kg_n as f64),
            text: (text_n > 0).then(|| text_sum / text_n as f64),
        })
    }

    pub fn run(mut self) -> Result<(EmbeddingSpace, Vec<EpochLoss>)> {
        let mut history = Vec::with_capacity(self.cfg.epochs);
        for epoch in 0..self.cfg.epochs {
            let l = self.run_epoch(epoch)?;
            if epoch % 50 == 0 || epoch + 1 == self.cfg.epochs {
                log::debug!("epoch {epoch}: kg {:?} text {:?}", l.kg, l.text);
            }
            history.push(l);
        }
        Ok((self.finish()?, history))
    }

    /// Materializes the entity outputs and returns the trained space.
    pub fn finish(mut self) -> Result<EmbeddingSpace> {
        self.space.refresh_output(&self.graph)?;
        if !self.space.is_finite() {
            return Err(Error::Numerical("non-finite entity outputs".into()));
        }
        Ok(self.space)
    }
}

/// Trains one language's space from a seed; deterministic for a fixed seed.
pub fn train(kg: &KnowledgeGraph, corpus: &GroundedCorpus, cfg: &OptimizerConfig, seed: u64) -> Result<EmbeddingSpace> {
    Ok(Trainer::new(kg, corpus, cfg, seed)?.run()?.0)
}
