//! On-disk alignment state.
//!
//! A state directory holds `state.txt` (`key=value`), `transform.txt` (one row
//! of `M` per line), `entity_pairs.tsv` and `lexeme_pairs.tsv`. Embedding
//! prefixes are stored relative to the state directory when possible so a
//! directory tree can be moved as a whole.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{AlignSpace, AlignmentState, IterationRecord, Metric, NeighborQuery, Retriever};
use crate::embedding::read_embeddings;
use crate::error::{Error, Result};

/// `source<TAB>target` pairs, one per line; blank lines are skipped.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split('\t');
        match (f.next(), f.next(), f.next()) {
            (Some(s), Some(t), None) if !s.is_empty() && !t.is_empty() => out.push((s.to_owned(), t.to_owned())),
            _ => return Err(Error::parse(path, i + 1, "expected `source<TAB>target`")),
        }
    }
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stored_path(prefix: &Path, dir: &Path) -> PathBuf {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    pathdiff::diff_paths(abs(prefix), abs(dir)).unwrap_or_else(|| prefix.to_path_buf())
}

/// A state read back from disk along with its provenance.
#[derive(Debug, Clone)]
pub struct LoadedState {
    pub state: AlignmentState,
    pub query: NeighborQuery,
    pub source_prefix: PathBuf,
    pub target_prefix: PathBuf,
}

impl AlignmentState {
    pub fn save(&self, dir: impl AsRef<Path>, source_prefix: &Path, target_prefix: &Path, q: &NeighborQuery) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut meta = String::new();
        writeln!(meta, "source_emb={}", stored_path(source_prefix, dir).display()).unwrap();
        writeln!(meta, "target_emb={}", stored_path(target_prefix, dir).display()).unwrap();
        writeln!(meta, "metric={}", q.metric).unwrap();
        writeln!(meta, "csls_k={}", q.csls_k).unwrap();
        writeln!(meta, "iterations={}", self.iterations).unwrap();
        let hist: Vec<String> = self
            .history
            .iter()
            .map(|h| format!("{}/{}/{}", h.entity_proposals, h.lexeme_proposals, u8::from(h.accepted)))
            .collect();
        writeln!(meta, "history={}", hist.join(",")).unwrap();
        write(&dir.join("state.txt"), &meta)?;

        let mut m = String::new();
        for row in self.transform.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(m, "{}", cells.join(" ")).unwrap();
        }
        write(&dir.join("transform.txt"), &m)?;

        let render = |pairs: &[(usize, usize)], s: &crate::kg::Vocab, t: &crate::kg::Vocab| {
            pairs
                .iter()
                .map(|&(a, b)| format!("{}\t{}\n", s.id(a), t.id(b)))
                .collect::<String>()
        };
        write(
            &dir.join("entity_pairs.tsv"),
            &render(self.entity_pairs(), &self.source.entity_ids, &self.target.entity_ids),
        )?;
        write(
            &dir.join("lexeme_pairs.tsv"),
            &render(self.lexeme_pairs(), &self.source.lexeme_ids, &self.target.lexeme_ids),
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<LoadedState> {
        let dir = dir.as_ref();
        let meta_path = dir.join("state.txt");
        let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut get = std::collections::HashMap::new();
        for (i, line) in meta.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&meta_path, i + 1, "expected key=value"))?;
            get.insert(k.to_owned(), v.to_owned());
        }
        let field = |k: &str| {
            get.get(k)
                .cloned()
                .ok_or_else(|| Error::parse(&meta_path, 1, format!("missing key {k}")))
        };
        let bad = |k: &str| Error::parse(&meta_path, 1, format!("bad value for {k}"));
        let source_prefix = dir.join(field("source_emb")?);
        let target_prefix = dir.join(field("target_emb")?);
        let query = NeighborQuery {
            metric: field("metric")?.parse::<Metric>()?,
            csls_k: field("csls_k")?.parse().map_err(|_| bad("csls_k"))?,
        };
        let iterations = field("iterations")?.parse().map_err(|_| bad("iterations"))?;
        let mut history = Vec::new();
        for h in field("history")?.split(',').filter(|h| !h.is_empty()) {
            let p: Vec<usize> = h
                .split('/')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("history"))?;
            if p.len() != 3 {
                return Err(bad("history"));
            }
            history.push(IterationRecord {
                entity_proposals: p[0],
                lexeme_proposals: p[1],
                accepted: p[2] == 1,
            });
        }

        let source = AlignSpace::from_table(&read_embeddings(&source_prefix)?)?;
        let target = AlignSpace::from_table(&read_embeddings(&target_prefix)?)?;
        let mut state = AlignmentState::new(source, target)?;

        let tpath = dir.join("transform.txt");
        let ttext = fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
        let k = state.source.dim();
        let mut values = Vec::with_capacity(k * k);
        for (i, line) in ttext.lines().enumerate() {
            for v in line.split(' ') {
                values.push(v.parse::<f64>().map_err(|_| Error::parse(&tpath, i + 1, format!("bad number {v:?}")))?);
            }
        }
        state.transform =
            Array2::from_shape_vec((k, k), values).map_err(|_| Error::parse(&tpath, 1, format!("expected a {k}x{k} matrix")))?;

        for (s, t) in read_pairs(dir.join("entity_pairs.tsv"))? {
            let (a, b) = (state.source.entity_ids.get(&s), state.target.entity_ids.get(&t));
            match (a, b) {
                (Some(a), Some(b)) if state.add_entity_pair(a, b) => {}
                _ => return Err(Error::Input(format!("stored entity pair {s}\t{t} does not fit the embeddings"))),
            }
        }
        for (s, t) in read_pairs(dir.join("lexeme_pairs.tsv"))? {
            match (state.source.lexeme_ids.get(&s), state.target.lexeme_ids.get(&t)) {
                (Some(a), Some(b)) => {
                    state.add_lexeme_pair(a, b);
                }
                _ => return Err(Error::Input(format!("stored lexeme pair {s}\t{t} does not fit the embeddings"))),
            }
        }
        state.iterations = iterations;
        state.history = history;
        Ok(LoadedState {
            state,
            query,
            source_prefix,
            target_prefix,
        })
    }
}

/// `source<TAB>top1<TAB>id1,..,idP<TAB>s1,..,sP` for every source entity.
pub fn write_predictions(path: impl AsRef<Path>, retriever: &Retriever<'_>, state: &AlignmentState, p: usize) -> Result<()> {
    let mut out = String::new();
    for e in 0..state.source.entities.nrows() {
        let ranked = retriever.ranked(e);
        let top: Vec<_> = ranked.iter().take(p.max(1)).collect();
        let ids: Vec<&str> = top.iter().map(|&&(t, _)| state.target.entity_ids.id(t)).collect();
        let scores: Vec<String> = top.iter().map(|&&(_, s)| format!("{s:.6}")).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            state.source.entity_ids.id(e),
            ids[0],
            ids.join(","),
            scores.join(",")
        )
        .unwrap();
    }
    write(path.as_ref(), &out)
}
