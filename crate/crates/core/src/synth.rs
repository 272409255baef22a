//! Synthetic bilingual benchmark at desk scale.
//!
//! The source KG grows by preferential attachment. The target KG is a
//! relabeled copy in which a fraction of triples is replaced by random ones.
//! Each entity carries a few descriptor concepts; every concept has one lexeme
//! per language, which gives a gold lexicon. Corpora are random walks over each
//! KG that emit entity surface forms interleaved with descriptor lexemes and
//! filler words, drawn independently per language.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub entities: usize,
    pub triples: usize,
    pub relations: usize,
    /// Fraction of target triples replaced by random ones.
    pub edge_drop: f64,
    pub concepts: usize,
    pub descriptors_per_entity: usize,
    pub fillers: usize,
    pub walks_per_entity: usize,
    pub walk_length: usize,
    /// Fraction of entities whose name extends another entity's name.
    pub nested_fraction: f64,
    /// Probability that an emitted descriptor is swapped for a random concept.
    pub text_noise: f64,
    /// Fraction of the gold lexicon published as the seed lexicon.
    pub seed_lexicon_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            entities: 500,
            triples: 2000,
            relations: 20,
            edge_drop: 0.1,
            concepts: 200,
            descriptors_per_entity: 3,
            fillers: 10,
            walks_per_entity: 20,
            walk_length: 10,
            nested_fraction: 0.2,
            text_noise: 0.1,
            seed_lexicon_fraction: 0.3,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.entities < 20 {
            return fail(format!("entity count {} below 20", self.entities));
        }
        if self.triples < self.entities {
            return fail(format!("triple count {} below entity count {}", self.triples, self.entities));
        }
        let max = self.entities * (self.entities - 1) * self.relations.max(1);
        if self.triples > max / 2 {
            return fail(format!("triple count {} too dense for {} entities", self.triples, self.entities));
        }
        if self.relations < 1 || self.concepts < 1 || self.walk_length < 1 {
            return fail("relations, concepts and walk_length must be positive".into());
        }
        for (name, v) in [
            ("edge_drop", self.edge_drop),
            ("nested_fraction", self.nested_fraction),
            ("text_noise", self.text_noise),
            ("seed_lexicon_fraction", self.seed_lexicon_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthSide {
    pub kg: KnowledgeGraph,
    /// `(entity id, surface form)`.
    pub forms: Vec<(String, String)>,
    pub corpus: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub params: SynthParams,
    pub seed: u64,
    pub source: SynthSide,
    pub target: SynthSide,
    pub gold_entities: Vec<(String, String)>,
    pub gold_lexicon: Vec<(String, String)>,
    pub seed_lexicon: Vec<(String, String)>,
}

/// Paths of a benchmark written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkPaths {
    pub source_triples: PathBuf,
    pub source_forms: PathBuf,
    pub source_corpus: PathBuf,
    pub target_triples: PathBuf,
    pub target_forms: PathBuf,
    pub target_corpus: PathBuf,
    pub gold_entities: PathBuf,
    pub gold_lexicon: PathBuf,
    pub seed_lexicon: PathBuf,
}

impl BenchmarkPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        BenchmarkPaths {
            source_triples: d.join("src_triples.tsv"),
            source_forms: d.join("src_forms.tsv"),
            source_corpus: d.join("src_corpus.txt"),
            target_triples: d.join("tgt_triples.tsv"),
            target_forms: d.join("tgt_forms.tsv"),
            target_corpus: d.join("tgt_corpus.txt"),
            gold_entities: d.join("gold_entities.tsv"),
            gold_lexicon: d.join("gold_lexicon.tsv"),
            seed_lexicon: d.join("seed_lexicon.tsv"),
        }
    }
}

fn pairs_tsv(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}

fn corpus_txt(docs: &[Vec<String>]) -> String {
    docs.iter().map(|d| d.join(" ") + "\n").collect()
}

impl SyntheticBenchmark {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<BenchmarkPaths> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = BenchmarkPaths::in_dir(dir);
        let files = [
            (&paths.source_triples, self.source.kg.to_tsv()),
            (&paths.source_forms, pairs_tsv(&self.source.forms)),
            (&paths.source_corpus, corpus_txt(&self.source.corpus)),
            (&paths.target_triples, self.target.kg.to_tsv()),
            (&paths.target_forms, pairs_tsv(&self.target.forms)),
            (&paths.target_corpus, corpus_txt(&self.target.corpus)),
            (&paths.gold_entities, pairs_tsv(&self.gold_entities)),
            (&paths.gold_lexicon, pairs_tsv(&self.gold_lexicon)),
            (&paths.seed_lexicon, pairs_tsv(&self.seed_lexicon)),
        ];
        for (p, text) in files {
            fs::write(p, text).map_err(|e| Error::io(p, e))?;
        }
        let p = &self.params;
        let mut meta = String::new();
        writeln!(meta, "seed = {}", self.seed).unwrap();
        for (k, v) in [
            ("entities", p.entities.to_string()),
            ("triples", p.triples.to_string()),
            ("relations", p.relations.to_string()),
            ("edge_drop", p.edge_drop.to_string()),
            ("concepts", p.concepts.to_string()),
            ("descriptors_per_entity", p.descriptors_per_entity.to_string()),
            ("fillers", p.fillers.to_string()),
            ("walks_per_entity", p.walks_per_entity.to_string()),
            ("walk_length", p.walk_length.to_string()),
            ("nested_fraction", p.nested_fraction.to_string()),
            ("text_noise", p.text_noise.to_string()),
            ("seed_lexicon_fraction", p.seed_lexicon_fraction.to_string()),
        ] {
            writeln!(meta, "{k} = {v}").unwrap();
        }
        let mp = dir.join("params.txt");
        fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))?;
        Ok(paths)
    }
}

/// Entity-level triples `(head, relation, tail)` over indices.
type RawTriples = Vec<(usize, usize, usize)>;

fn preferential_graph(p: &SynthParams, rng: &mut ChaCha8Rng) -> RawTriples {
    let n = p.entities;
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut triples = Vec::with_capacity(p.triples);
    // endpoint list: sampling from it is degree-proportional
    let mut ends: Vec<usize> = Vec::with_capacity(2 * p.triples);
    let push = |h: usize, t: usize, triples: &mut RawTriples, ends: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        triples.push((h, rng.random_range(0..p.relations), t));
        ends.push(h);
        ends.push(t);
    };
    for i in 1..n {
        let j = if ends.is_empty() || rng.random_bool(0.2) {
            rng.random_range(0..i)
        } else {
            *ends.choose(rng).unwrap()
        };
        let (h, t) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
        seen.insert((h.min(t), h.max(t)));
        push(h, t, &mut triples, &mut ends, rng);
    }
    while triples.len() < p.triples {
        let a = rng.random_range(0..n);
        let b = *ends.choose(rng).unwrap();
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        push(a, b, &mut triples, &mut ends, rng);
    }
    triples
}

/// Replaces exactly `floor(edge_drop · |T|)` triples, never isolating an entity.
fn perturb(p: &SynthParams, source: &RawTriples, rng: &mut ChaCha8Rng) -> RawTriples {
    let n = p.entities;
    let k = (p.edge_drop * source.len() as f64).floor() as usize;
    let mut degree = vec![0usize; n];
    for &(h, _, t) in source {
        degree[h] += 1;
        degree[t] += 1;
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(rng);
    let mut drop = HashSet::new();
    for &i in &order {
        if drop.len() == k {
            break;
        }
        let (h, _, t) = source[i];
        if degree[h] > 1 && degree[t] > 1 {
            degree[h] -= 1;
            degree[t] -= 1;
            drop.insert(i);
        }
    }
    let mut kept: RawTriples = source
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, &x)| x)
        .collect();
    let mut present: HashSet<(usize, usize)> = source.iter().map(|&(h, _, t)| (h.min(t), h.max(t))).collect();
    let mut added = 0;
    while added < drop.len() {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a == b || !present.insert((a.min(b), a.max(b))) {
            continue;
        }
        kept.push((a, rng.random_range(0..p.relations), b));
        added += 1;
    }
    kept
}

fn adjacency(n: usize, triples: &RawTriples) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(h, _, t) in triples {
        adj[h].push(t);
        adj[t].push(h);
    }
    adj
}

/// Random-walk documents over entity indices, rendered by the caller's vocabulary.
#[allow(clippy::too_many_arguments)]
fn walk_corpus(
    p: &SynthParams,
    adj: &[Vec<usize>],
    names: &[Vec<String>],
    descriptors: &[Vec<usize>],
    concept_word: &dyn Fn(usize) -> String,
    filler_word: &dyn Fn(usize) -> String,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<String>> {
    let mut starts: Vec<usize> = (0..adj.len()).flat_map(|e| std::iter::repeat_n(e, p.walks_per_entity)).collect();
    starts.shuffle(rng);
    let mut docs = Vec::with_capacity(starts.len());
    for start in starts {
        let mut doc = Vec::new();
        let mut e = start;
        for step in 0..p.walk_length {
            if step > 0 && p.fillers > 0 && rng.random_bool(0.3) {
                doc.push(filler_word(rng.random_range(0..p.fillers)));
            }
            doc.extend(names[e].iter().cloned());
            if let Some(&c) = descriptors[e].choose(rng) {
                let c = if rng.random_bool(p.text_noise) {
                    rng.random_range(0..p.concepts)
                } else {
                    c
                };
                doc.push(concept_word(c));
            }
            match adj[e].choose(rng) {
                Some(&next) => e = next,
                None => break,
            }
        }
        docs.push(doc);
    }
    docs
}

/// Names of the form `<prefix>n<i>`, with nested ones extending an earlier name.
fn entity_names(n: usize, nested: &[Option<usize>], prefix: &str, label: &[usize]) -> Vec<Vec<String>> {
    let mut names: Vec<Vec<String>> = vec![Vec::new(); n];
    for e in 0..n {
        let own = format!("{prefix}n{}", label[e]);
        names[e] = match nested[e] {
            Some(parent) => {
                let mut v = names[parent].clone();
                v.push(own);
                v
            }
            None => vec![own],
        };
    }
    names
}

fn build_kg(lang: &str, triples: &RawTriples, entity_id: &dyn Fn(usize) -> String, relation_id: &dyn Fn(usize) -> String) -> KnowledgeGraph {
    let rendered: Vec<(String, String, String)> = triples
        .iter()
        .map(|&(h, r, t)| (entity_id(h), relation_id(r), entity_id(t)))
        .collect();
    KnowledgeGraph::from_triples(lang, rendered.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())))
}

pub fn generate_benchmark(params: &SynthParams, seed: u64) -> Result<SyntheticBenchmark> {
    params.validate()?;
    let p = params;
    let n = p.entities;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let src_triples = preferential_graph(p, &mut rng);
    let mut tgt_triples = perturb(p, &src_triples, &mut rng);
    tgt_triples.shuffle(&mut rng);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut rel_perm: Vec<usize> = (0..p.relations).collect();
    rel_perm.shuffle(&mut rng);
    let mut concept_perm: Vec<usize> = (0..p.concepts).collect();
    concept_perm.shuffle(&mut rng);

    // nested names only extend entities that are themselves plain
    let mut nested: Vec<Option<usize>> = vec![None; n];
    for e in 1..n {
        if rng.random_bool(p.nested_fraction) {
            let parent = rng.random_range(0..e);
            if nested[parent].is_none() {
                nested[e] = Some(parent);
            }
        }
    }
    // Zipf-like concept popularity
    let weights: Vec<f64> = (0..p.concepts).map(|c| 1.0 / (c as f64 + 1.0).powf(0.8)).collect();
    let dist = rand::distr::weighted::WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let descriptors: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut d: Vec<usize> = (0..p.descriptors_per_entity).map(|_| rng.sample(&dist)).collect();
            d.sort_unstable();
            d.dedup();
            d
        })
        .collect();

    let identity: Vec<usize> = (0..n).collect();
    let src_names = entity_names(n, &nested, "s", &identity);
    let tgt_names = entity_names(n, &nested, "t", &perm);

    let src_eid = |e: usize| format!("src_e{e}");
    let tgt_eid = |e: usize| format!("tgt_e{}", perm[e]);
    let source_kg = build_kg("src", &src_triples, &src_eid, &|r| format!("src_r{r}"));
    let target_kg = build_kg("tgt", &tgt_triples, &tgt_eid, &|r| format!("tgt_r{}", rel_perm[r]));

    let mut src_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut tgt_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let src_word = |c: usize| format!("sw{c}");
    let tgt_word = |c: usize| format!("tw{}", concept_perm[c]);
    let src_filler = |f: usize| format!("sf{f}");
    let tgt_filler = |f: usize| format!("tf{f}");
    let source_corpus = walk_corpus(p, &adjacency(n, &src_triples), &src_names, &descriptors, &src_word, &src_filler, &mut src_rng);
    let target_corpus = walk_corpus(p, &adjacency(n, &tgt_triples), &tgt_names, &descriptors, &tgt_word, &tgt_filler, &mut tgt_rng);

    let forms = |names: &[Vec<String>], id: &dyn Fn(usize) -> String| -> Vec<(String, String)> {
        (0..n).map(|e| (id(e), names[e].join(" "))).collect()
    };
    let gold_entities: Vec<(String, String)> = (0..n).map(|e| (src_eid(e), tgt_eid(e))).collect();
    let mut gold_lexicon: Vec<(String, String)> = (0..p.concepts).map(|c| (src_word(c), tgt_word(c))).collect();
    gold_lexicon.extend((0..p.fillers).map(|f| (src_filler(f), tgt_filler(f))));
    let mut shuffled = gold_lexicon.clone();
    shuffled.shuffle(&mut rng);
    shuffled.truncate((p.seed_lexicon_fraction * gold_lexicon.len() as f64).floor() as usize);

    Ok(SyntheticBenchmark {
        params: p.clone(),
        seed,
        source: SynthSide {
            kg: source_kg,
            forms: forms(&src_names, &src_eid),
            corpus: source_corpus,
        },
        target: SynthSide {
            kg: target_kg,
            forms: forms(&tgt_names, &tgt_eid),
            corpus: target_corpus,
        },
        gold_entities,
        gold_lexicon,
        seed_lexicon: shuffled,
    })
}
