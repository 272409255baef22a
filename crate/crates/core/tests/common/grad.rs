//! Random small instances and a finite-difference gradient checker.

use kgalign_core::embedding::{kg_loss, text_loss, Activation, EmbeddingSpace, KgSample, OptimizerConfig, TextSample};
use kgalign_core::grounding::Token;
use kgalign_core::kg::{build_graph_structure, GraphStructure, KnowledgeGraph, Triple};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

pub struct Instance {
    pub kg: KnowledgeGraph,
    pub graph: GraphStructure,
    pub space: EmbeddingSpace,
    pub kg_batch: Vec<KgSample>,
    pub text_batch: Vec<TextSample>,
}

pub fn random_instance(seed: u64, gcn: bool, activation: Activation) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10);
    let k = rng.random_range(2..=8);
    let n_rel = rng.random_range(1..=3);
    let mut kg = KnowledgeGraph::new("xx");
    for e in 0..n {
        kg.entities.get_or_insert(&format!("e{e}"));
    }
    for _ in 0..2 * n {
        let (h, t) = (rng.random_range(0..n), rng.random_range(0..n));
        if h != t {
            kg.insert(&format!("e{h}"), &format!("r{}", rng.random_range(0..n_rel)), &format!("e{t}"));
        }
    }
    if kg.triples().is_empty() {
        kg.insert("e0", "r0", "e1");
    }
    let n_rel = kg.n_relations();
    let n_lex = rng.random_range(1..=5);
    let cfg = OptimizerConfig {
        dim: k,
        gcn_layers: rng.random_range(1..=2),
        gcn_enabled: gcn,
        activation,
        ..OptimizerConfig::default()
    };
    let mut space = EmbeddingSpace::init(n, n_rel, n_lex, &cfg, &mut rng);
    // shift away from zero so ReLU kinks are unlikely to sit within ±H
    space.entity_base.mapv_inplace(|v| v + 0.3);
    let graph = build_graph_structure(&kg);
    let triples = kg.triples().to_vec();
    let rand_triple = |rng: &mut ChaCha8Rng| Triple::new(rng.random_range(0..n), rng.random_range(0..n_rel), rng.random_range(0..n));
    let kg_batch = (0..3)
        .map(|_| KgSample {
            positive: triples[rng.random_range(0..triples.len())],
            negatives: (0..4).map(|_| rand_triple(&mut rng)).collect(),
        })
        .collect();
    let rand_token = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            Token::Entity(rng.random_range(0..n))
        } else {
            Token::Lexeme(rng.random_range(0..n_lex))
        }
    };
    let text_batch = (0..3)
        .map(|_| TextSample {
            center: rand_token(&mut rng),
            context: rand_token(&mut rng),
            negatives: (0..4).map(|_| rand_token(&mut rng)).collect(),
        })
        .collect();
    Instance {
        kg,
        graph,
        space,
        kg_batch,
        text_batch,
    }
}

#[derive(Clone, Copy)]
pub enum Which {
    Kg,
    Text,
}

pub fn loss(inst: &Instance, space: &EmbeddingSpace, which: Which) -> f64 {
    match which {
        Which::Kg => kg_loss(&inst.kg_batch, space, &inst.graph, 2.0).unwrap().0,
        Which::Text => text_loss(&inst.text_batch, space, &inst.graph).unwrap().0,
    }
}

/// Worst relative error over every trainable coordinate.
pub fn check(inst: &Instance, which: Which) -> f64 {
    let (_, grads) = match which {
        Which::Kg => kg_loss(&inst.kg_batch, &inst.space, &inst.graph, 2.0).unwrap(),
        Which::Text => text_loss(&inst.text_batch, &inst.space, &inst.graph).unwrap(),
    };
    let mut tables: Vec<(usize, &Array2<f64>)> = vec![(0, &grads.entity_base), (1, &grads.relations), (2, &grads.lexemes)];
    for (l, g) in grads.gcn_weights.iter().enumerate() {
        tables.push((3 + l, g));
    }
    let mut worst: f64 = 0.0;
    for (table, analytic) in tables {
        for ((i, j), &g) in analytic.indexed_iter() {
            let perturbed = |delta: f64| {
                let mut s = inst.space.clone();
                let t = match table {
                    0 => &mut s.entity_base,
                    1 => &mut s.relations,
                    2 => &mut s.lexemes,
                    l => &mut s.gcn_weights[l - 3],
                };
                t[[i, j]] += delta;
                loss(inst, &s, which)
            };
            let numeric = (perturbed(H) - perturbed(-H)) / (2.0 * H);
            let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}
