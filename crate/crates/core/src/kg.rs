//! Language-specific knowledge graphs and the graph structure fed to the GCN encoder.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Ordered id vocabulary; indices follow first insertion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }
}

impl<S: AsRef<str>> FromIterator<S> for Vocab {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut v = Vocab::new();
        for s in iter {
            v.get_or_insert(s.as_ref());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub lang: String,
    pub entities: Vocab,
    pub relations: Vocab,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    duplicates: usize,
}

impl KnowledgeGraph {
    pub fn new(lang: impl Into<String>) -> Self {
        KnowledgeGraph {
            lang: lang.into(),
            entities: Vocab::new(),
            relations: Vocab::new(),
            triples: Vec::new(),
            triple_set: HashSet::new(),
            duplicates: 0,
        }
    }

    /// Inserts a triple by id, growing the vocabularies. Returns `false` for a duplicate.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entities.get_or_insert(head);
        let r = self.relations.get_or_insert(relation);
        let t = self.entities.get_or_insert(tail);
        let triple = Triple::new(h, r, t);
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            self.duplicates += 1;
            false
        }
    }

    pub fn from_triples<'a, I>(lang: &str, triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut kg = KnowledgeGraph::new(lang);
        for (h, r, t) in triples {
            kg.insert(h, r, t);
        }
        kg
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    /// Number of duplicate triples dropped during construction.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Serializes back to the tab-separated triples format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(self.entities.id(t.head));
            out.push('\t');
            out.push_str(self.relations.id(t.relation));
            out.push('\t');
            out.push_str(self.entities.id(t.tail));
            out.push('\n');
        }
        out
    }
}

/// Reads a `head<TAB>relation<TAB>tail` file.
pub fn load_kg(path: impl AsRef<Path>, lang: &str) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kg = KnowledgeGraph::new(lang);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::parse(path, lineno + 1, "empty id"));
        }
        kg.insert(fields[0], fields[1], fields[2]);
    }
    if kg.triples.is_empty() {
        return Err(Error::Input(format!("{}: no triples", path.display())));
    }
    if kg.duplicates > 0 {
        log::info!("{}: dropped {} duplicate triples", path.display(), kg.duplicates);
    }
    Ok(kg)
}

/// Undirected, untyped view of a KG plus its symmetric-normalized propagation matrix.
#[derive(Debug, Clone)]
pub struct GraphStructure {
    /// 0/1 adjacency without self-loops.
    pub adjacency: CsrMatrix,
    /// Degrees of `A + I`.
    pub degree: Vec<f64>,
    /// `D^{-1/2} (A + I) D^{-1/2}`
    pub norm_adjacency: CsrMatrix,
}

impl GraphStructure {
    pub fn n_nodes(&self) -> usize {
        self.degree.len()
    }

    /// `A + I` as a sparse matrix.
    pub fn self_looped(&self) -> CsrMatrix {
        let n = self.n_nodes();
        let mut entries = Vec::with_capacity(self.adjacency.nnz() + n);
        for i in 0..n {
            entries.extend(self.adjacency.row(i).map(|(j, v)| (i, j, v)));
            entries.push((i, i, 1.0));
        }
        CsrMatrix::from_triplets(n, n, entries)
    }
}

pub fn build_graph_structure(kg: &KnowledgeGraph) -> GraphStructure {
    let n = kg.n_entities();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for t in kg.triples() {
        if t.head != t.tail {
            edges.insert((t.head, t.tail));
            edges.insert((t.tail, t.head));
        }
    }
    let adjacency = CsrMatrix::from_triplets(n, n, edges.iter().map(|&(i, j)| (i, j, 1.0)).collect());
    let degree: Vec<f64> = (0..n).map(|i| adjacency.row_sum(i) + 1.0).collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut entries: Vec<(usize, usize, f64)> = edges
        .iter()
        .map(|&(i, j)| (i, j, inv_sqrt[i] * inv_sqrt[j]))
        .collect();
    entries.extend((0..n).map(|i| (i, i, inv_sqrt[i] * inv_sqrt[i])));
    let norm_adjacency = CsrMatrix::from_triplets(n, n, entries);
    GraphStructure {
        adjacency,
        degree,
        norm_adjacency,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationStat {
    /// Mean number of distinct tails per distinct head.
    pub tph: f64,
    /// Mean number of distinct heads per distinct tail.
    pub hpt: f64,
}

impl RelationStat {
    /// Probability of corrupting the head under Bernoulli sampling.
    pub fn head_corruption_prob(&self) -> f64 {
        self.tph / (self.tph + self.hpt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationStats {
    pub per_relation: Vec<RelationStat>,
}

impl RelationStats {
    pub fn get(&self, relation: usize) -> RelationStat {
        self.per_relation[relation]
    }
}

pub fn relation_stats(kg: &KnowledgeGraph) -> RelationStats {
    let nr = kg.n_relations();
    let mut tails_of: Vec<BTreeMap<usize, BTreeSet<usize>>> = vec![BTreeMap::new(); nr];
    let mut heads_of: Vec<BTreeMap<usize, BTreeSet<usize>>> = vec![BTreeMap::new(); nr];
    for t in kg.triples() {
        tails_of[t.relation].entry(t.head).or_default().insert(t.tail);
        heads_of[t.relation].entry(t.tail).or_default().insert(t.head);
    }
    let mean = |m: &BTreeMap<usize, BTreeSet<usize>>| {
        if m.is_empty() {
            1.0
        } else {
            m.values().map(|s| s.len() as f64).sum::<f64>() / m.len() as f64
        }
    };
    let per_relation = (0..nr)
        .map(|r| RelationStat {
            tph: mean(&tails_of[r]),
            hpt: mean(&heads_of[r]),
        })
        .collect();
    RelationStats { per_relation }
}
