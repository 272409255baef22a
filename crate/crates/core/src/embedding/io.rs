//! Text embedding files: a `<count> <dim>` header, then `<token> <v1> ... <vk>` lines.
//!
//! Entities come first (KG order) as `@ent:<id>`, then lexemes in lexicon order
//! (descending frequency). Relation vectors go to a sibling `.rel` file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use super::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::grounding::{GroundedCorpus, ENTITY_PREFIX};
use crate::kg::KnowledgeGraph;

pub fn entity_path(prefix: &Path) -> PathBuf {
    PathBuf::from(format!("{}.emb", prefix.display()))
}

pub fn relation_path(prefix: &Path) -> PathBuf {
    PathBuf::from(format!("{}.rel", prefix.display()))
}

fn render<'a>(rows: impl Iterator<Item = (String, ndarray::ArrayView1<'a, f64>)>, count: usize, dim: usize) -> String {
    let mut out = String::new();
    writeln!(out, "{count} {dim}").unwrap();
    for (token, v) in rows {
        out.push_str(&token);
        for x in v {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Renders the token and relation files as strings.
pub fn render_embeddings(space: &EmbeddingSpace, kg: &KnowledgeGraph, corpus: &GroundedCorpus) -> (String, String) {
    let entities = space.entity_output.view();
    let lexemes = space.lexemes.view();
    let rows = (0..entities.nrows())
        .map(|e| (format!("{ENTITY_PREFIX}{}", kg.entities.id(e)), entities.row(e)))
        .chain((0..lexemes.nrows()).map(|w| (corpus.lexicon.id(w).to_owned(), lexemes.row(w))));
    let tokens = render(rows, entities.nrows() + lexemes.nrows(), space.dim);
    let rel = space.relations.view();
    let rows = (0..rel.nrows()).map(|r| (kg.relations.id(r).to_owned(), rel.row(r)));
    let relations = render(rows, rel.nrows(), space.dim);
    (tokens, relations)
}

pub fn write_embeddings(
    prefix: impl AsRef<Path>,
    space: &EmbeddingSpace,
    kg: &KnowledgeGraph,
    corpus: &GroundedCorpus,
) -> Result<()> {
    let prefix = prefix.as_ref();
    let (tokens, relations) = render_embeddings(space, kg, corpus);
    let p = entity_path(prefix);
    fs::write(&p, tokens).map_err(|e| Error::io(&p, e))?;
    let p = relation_path(prefix);
    fs::write(&p, relations).map_err(|e| Error::io(&p, e))?;
    Ok(())
}

/// Fixed vectors of one language as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub entity_ids: Vec<String>,
    pub entities: Array2<f64>,
    /// In file order, i.e. by descending corpus frequency.
    pub lexeme_ids: Vec<String>,
    pub lexemes: Array2<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.entities.ncols()
    }

    pub fn from_parts(entity_ids: Vec<String>, entities: Array2<f64>, lexeme_ids: Vec<String>, lexemes: Array2<f64>) -> Self {
        assert_eq!(entity_ids.len(), entities.nrows());
        assert_eq!(lexeme_ids.len(), lexemes.nrows());
        EmbeddingTable {
            entity_ids,
            entities,
            lexeme_ids,
            lexemes,
        }
    }

    pub fn entities(&self) -> ArrayView2<'_, f64> {
        self.entities.view()
    }
}

fn parse_vectors(path: &Path) -> Result<(Vec<String>, Vec<f64>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut h = header.split_whitespace().map(str::parse::<usize>);
    let (count, dim) = match (h.next(), h.next(), h.next()) {
        (Some(Ok(c)), Some(Ok(d)), None) => (c, d),
        _ => return Err(Error::parse(path, 1, "header must be `<count> <dim>`")),
    };
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let mut fields = line.split(' ');
        let token = fields.next().filter(|t| !t.is_empty()).ok_or_else(|| Error::parse(path, lineno, "missing token"))?;
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {f:?}")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::parse(path, lineno, format!("expected {dim} values, found {}", data.len() - before)));
        }
        ids.push(token.to_owned());
    }
    if ids.len() != count {
        return Err(Error::parse(path, 1, format!("header announces {count} vectors, file has {}", ids.len())));
    }
    Ok((ids, data, dim))
}

pub fn read_embeddings(prefix: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = entity_path(prefix.as_ref());
    let (ids, data, dim) = parse_vectors(&path)?;
    let mut entity_ids = Vec::new();
    let mut entity_data = Vec::new();
    let mut lexeme_ids = Vec::new();
    let mut lexeme_data = Vec::new();
    for (i, id) in ids.into_iter().enumerate() {
        let row = &data[i * dim..(i + 1) * dim];
        match id.strip_prefix(ENTITY_PREFIX) {
            Some(e) => {
                entity_ids.push(e.to_owned());
                entity_data.extend_from_slice(row);
            }
            None => {
                lexeme_ids.push(id);
                lexeme_data.extend_from_slice(row);
            }
        }
    }
    let entities = Array2::from_shape_vec((entity_ids.len(), dim), entity_data).expect("shape checked");
    let lexemes = Array2::from_shape_vec((lexeme_ids.len(), dim), lexeme_data).expect("shape checked");
    Ok(EmbeddingTable {
        entity_ids,
        entities,
        lexeme_ids,
        lexemes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::OptimizerConfig;
    use crate::grounding::{ground_documents, SurfaceFormIndex};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn written_vectors_read_back_exactly() {
        let kg = KnowledgeGraph::from_triples("en", [("a", "r", "b"), ("b", "s", "c")]);
        let mut index = SurfaceFormIndex::new(true);
        index.insert("a", 0);
        let docs = vec![vec!["a", "x", "y", "x"]];
        let corpus = ground_documents("en", &docs, &index, 1);
        let cfg = OptimizerConfig {
            dim: 4,
            ..OptimizerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = EmbeddingSpace::init(3, 2, corpus.lexicon.len(), &cfg, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("en");
        write_embeddings(&prefix, &space, &kg, &corpus).unwrap();
        let table = read_embeddings(&prefix).unwrap();
        assert_eq!(table.entity_ids, ["a", "b", "c"]);
        assert_eq!(table.lexeme_ids, ["x", "y"]);
        assert_eq!(table.entities, space.entity_output);
        assert_eq!(table.lexemes, space.lexemes);
        let rel = fs::read_to_string(relation_path(&prefix)).unwrap();
        assert!(rel.starts_with("2 4\nr "));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("x");
        fs::write(entity_path(&prefix), "2 2\n@ent:a 1 2\n").unwrap();
        assert!(matches!(read_embeddings(&prefix), Err(Error::Parse { .. })));
        fs::write(entity_path(&prefix), "1 2\n@ent:a 1\n").unwrap();
        assert!(matches!(read_embeddings(&prefix), Err(Error::Parse { line: 2, .. })));
    }
}
