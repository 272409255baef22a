//! Surface-form grounding of a monolingual corpus against a KG.
//!
//! Entity surface forms are stored in a token-level completion trie. A corpus
//! is scanned left to right; at every position the longest surface form that
//! matches is collapsed into a single entity token and the scan resumes after
//! it. Everything else stays a lexeme. No disambiguation is attempted.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Vocab};

/// Prefix used for entity tokens in grounded corpora and embedding files.
pub const ENTITY_PREFIX: &str = "@ent:";
/// Stand-in for lexemes below the frequency threshold.
pub const RARE_TOKEN: &str = "<rare>";

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    entity: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexStats {
    pub inserted: usize,
    /// Surface forms already claimed by another entity.
    pub collisions: usize,
    /// Lines whose entity id is not in the KG.
    pub unknown_ids: usize,
}

#[derive(Debug, Clone)]
pub struct SurfaceFormIndex {
    nodes: Vec<TrieNode>,
    case_fold: bool,
    pub stats: IndexStats,
}

impl SurfaceFormIndex {
    pub fn new(case_fold: bool) -> Self {
        SurfaceFormIndex {
            nodes: vec![TrieNode::default()],
            case_fold,
            stats: IndexStats::default(),
        }
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }

    fn normalize(&self, token: &str) -> String {
        if self.case_fold {
            token.to_lowercase()
        } else {
            token.to_owned()
        }
    }

    /// Inserts a whitespace-tokenized surface form. First insertion wins on collision;
    /// returns whether this entity now owns the form.
    pub fn insert(&mut self, surface: &str, entity: usize) -> bool {
        let mut node = 0;
        let mut any = false;
        for tok in surface.split_whitespace() {
            any = true;
            let key = self.normalize(tok);
            node = match self.nodes[node].children.get(&key) {
                Some(&next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(key, next);
                    next
                }
            };
        }
        assert!(any, "empty surface form");
        match self.nodes[node].entity {
            Some(owner) => {
                if owner != entity {
                    self.stats.collisions += 1;
                }
                false
            }
            None => {
                self.nodes[node].entity = Some(entity);
                self.stats.inserted += 1;
                true
            }
        }
    }

    /// Exact lookup of a token sequence.
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S]) -> Option<usize> {
        let mut node = 0;
        for tok in tokens {
            node = *self.nodes[node].children.get(&self.normalize(tok.as_ref()))?;
        }
        self.nodes[node].entity
    }

    /// Longest surface form starting at `tokens[0]`: `(entity, length in tokens)`.
    pub fn longest_match<S: AsRef<str>>(&self, tokens: &[S]) -> Option<(usize, usize)> {
        let mut node = 0;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate() {
            match self.nodes[node].children.get(&self.normalize(tok.as_ref())) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some(e) = self.nodes[node].entity {
                best = Some((e, i + 1));
            }
        }
        best
    }
}

/// Reads `entity-id<TAB>surface form` lines; unknown ids are skipped and counted.
pub fn build_index(path: impl AsRef<Path>, kg: &KnowledgeGraph, case_fold: bool) -> Result<SurfaceFormIndex> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut index = SurfaceFormIndex::new(case_fold);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let (id, surface) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno + 1, "expected entity-id<TAB>surface form"))?;
        if surface.split_whitespace().next().is_none() {
            return Err(Error::parse(path, lineno + 1, "empty surface form"));
        }
        match kg.entities.get(id) {
            Some(e) => {
                index.insert(surface, e);
            }
            None => {
                index.stats.unknown_ids += 1;
                log::warn!("{}:{}: unknown entity id {id:?}, skipped", path.display(), lineno + 1);
            }
        }
    }
    if index.stats.collisions > 0 {
        log::info!("{}: {} ambiguous surface forms kept their first entity", path.display(), index.stats.collisions);
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Entity(usize),
    Lexeme(usize),
}

/// One span of a scanned document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Entity { entity: usize, start: usize, len: usize },
    Lexeme { pos: usize },
}

/// Greedy left-to-right longest-match segmentation of one token sequence.
pub fn segment<S: AsRef<str>>(index: &SurfaceFormIndex, tokens: &[S]) -> Vec<Segment> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    while pos < tokens.len() {
        match index.longest_match(&tokens[pos..]) {
            Some((entity, len)) => {
                out.push(Segment::Entity { entity, start: pos, len });
                pos += len;
            }
            None => {
                out.push(Segment::Lexeme { pos });
                pos += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedCorpus {
    pub lang: String,
    pub documents: Vec<Vec<Token>>,
    /// Lexemes ordered by descending frequency, ties by first appearance.
    pub lexicon: Vocab,
    pub lexeme_freq: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundingStats {
    /// Fraction of KG entities mentioned at least once.
    pub coverage: f64,
    /// Mean mentions per covered entity (0 when nothing is covered).
    pub avg_match: f64,
    pub mentions: usize,
}

enum RawToken {
    Entity(usize),
    Lexeme(String),
}

impl GroundedCorpus {
    fn from_raw(lang: &str, raw_docs: Vec<Vec<RawToken>>, min_freq: u64) -> Self {
        let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
        let mut order = 0usize;
        for doc in &raw_docs {
            for tok in doc {
                if let RawToken::Lexeme(w) = tok {
                    let entry = counts.entry(w.as_str()).or_insert_with(|| {
                        order += 1;
                        (0, order)
                    });
                    entry.0 += 1;
                }
            }
        }
        let mut rare_count = 0u64;
        let mut rare_first = usize::MAX;
        let mut kept: Vec<(&str, u64, usize)> = Vec::new();
        for (&w, &(c, first)) in &counts {
            if c < min_freq {
                rare_count += c;
                rare_first = rare_first.min(first);
            } else {
                kept.push((w, c, first));
            }
        }
        if rare_count > 0 {
            kept.push((RARE_TOKEN, rare_count, rare_first));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let lexicon: Vocab = kept.iter().map(|k| k.0).collect();
        let lexeme_freq = kept.iter().map(|k| k.1).collect();

        let rare_idx = lexicon.get(RARE_TOKEN);
        let documents = raw_docs
            .iter()
            .map(|doc| {
                doc.iter()
                    .map(|tok| match tok {
                        RawToken::Entity(e) => Token::Entity(*e),
                        RawToken::Lexeme(w) => {
                            let idx = if counts[w.as_str()].0 < min_freq {
                                rare_idx
                            } else {
                                lexicon.get(w)
                            };
                            Token::Lexeme(idx.expect("lexicon covers every lexeme"))
                        }
                    })
                    .collect()
            })
            .collect();
        GroundedCorpus {
            lang: lang.to_owned(),
            documents,
            lexicon,
            lexeme_freq,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn stats(&self, kg: &KnowledgeGraph) -> GroundingStats {
        let mut mentions = vec![0usize; kg.n_entities()];
        for tok in self.documents.iter().flatten() {
            if let Token::Entity(e) = tok {
                mentions[*e] += 1;
            }
        }
        let covered = mentions.iter().filter(|&&m| m > 0).count();
        let total: usize = mentions.iter().sum();
        GroundingStats {
            coverage: if kg.n_entities() == 0 {
                0.0
            } else {
                covered as f64 / kg.n_entities() as f64
            },
            avg_match: if covered == 0 {
                0.0
            } else {
                total as f64 / covered as f64
            },
            mentions: total,
        }
    }

    pub fn token_str<'a>(&'a self, kg: &'a KnowledgeGraph, tok: Token) -> std::borrow::Cow<'a, str> {
        match tok {
            Token::Entity(e) => format!("{ENTITY_PREFIX}{}", kg.entities.id(e)).into(),
            Token::Lexeme(w) => self.lexicon.id(w).into(),
        }
    }

    /// Serializes in the grounded-corpus text format (one document per line).
    pub fn to_text(&self, kg: &KnowledgeGraph) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            for (i, tok) in doc.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&self.token_str(kg, *tok));
            }
            out.push('\n');
        }
        out
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
        .collect())
}

/// Grounds pre-tokenized text held in memory (one document per entry).
pub fn ground_documents<S: AsRef<str>>(
    lang: &str,
    documents: &[Vec<S>],
    index: &SurfaceFormIndex,
    min_freq: u64,
) -> GroundedCorpus {
    let raw = documents
        .iter()
        .map(|tokens| {
            segment(index, tokens)
                .into_iter()
                .map(|seg| match seg {
                    Segment::Entity { entity, .. } => RawToken::Entity(entity),
                    Segment::Lexeme { pos } => RawToken::Lexeme(tokens[pos].as_ref().to_owned()),
                })
                .collect()
        })
        .collect();
    GroundedCorpus::from_raw(lang, raw, min_freq)
}

pub fn ground_corpus(
    path: impl AsRef<Path>,
    index: &SurfaceFormIndex,
    kg: &KnowledgeGraph,
    min_freq: u64,
) -> Result<(GroundedCorpus, GroundingStats)> {
    let lines = read_lines(path.as_ref())?;
    let docs: Vec<Vec<&str>> = lines.iter().map(|l| l.split_whitespace().collect()).collect();
    let corpus = ground_documents(&kg.lang, &docs, index, min_freq);
    let stats = corpus.stats(kg);
    Ok((corpus, stats))
}

/// Reads a corpus already in the grounded format. Markers naming unknown entities
/// are kept as plain lexemes.
pub fn load_pregrounded(path: impl AsRef<Path>, kg: &KnowledgeGraph) -> Result<GroundedCorpus> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let mut demoted = 0usize;
    let mut raw = Vec::with_capacity(lines.len());
    for (lineno, line) in lines.iter().enumerate() {
        let mut doc = Vec::new();
        for tok in line.split_whitespace() {
            match tok.strip_prefix(ENTITY_PREFIX) {
                Some("") => return Err(Error::parse(path, lineno + 1, "entity marker without id")),
                Some(id) => match kg.entities.get(id) {
                    Some(e) => doc.push(RawToken::Entity(e)),
                    None => {
                        demoted += 1;
                        log::warn!("{}:{}: unknown entity {id:?} kept as lexeme", path.display(), lineno + 1);
                        doc.push(RawToken::Lexeme(tok.to_owned()));
                    }
                },
                None => doc.push(RawToken::Lexeme(tok.to_owned())),
            }
        }
        raw.push(doc);
    }
    if demoted > 0 {
        log::warn!("{}: {demoted} unknown entity markers demoted", path.display());
    }
    Ok(GroundedCorpus::from_raw(&kg.lang, raw, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn kg(ids: &[&str]) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new("en");
        for id in ids {
            kg.entities.get_or_insert(id);
        }
        kg
    }

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn words(corpus: &GroundedCorpus, kg: &KnowledgeGraph, doc: usize) -> Vec<String> {
        corpus.documents[doc]
            .iter()
            .map(|t| corpus.token_str(kg, *t).into_owned())
            .collect()
    }

    #[test]
    fn case_folded_multi_token_form() {
        let kg = kg(&["e1"]);
        let f = tmp("e1\tNew York\n");
        let index = build_index(f.path(), &kg, true).unwrap();
        assert_eq!(index.lookup(&["new", "york"]), Some(0));
        assert_eq!(index.lookup(&["NEW", "York"]), Some(0));
        assert_eq!(index.lookup(&["new"]), None);
    }

    #[test]
    fn no_case_fold_is_exact() {
        let kg = kg(&["e1"]);
        let f = tmp("e1\tNew York\n");
        let index = build_index(f.path(), &kg, false).unwrap();
        assert_eq!(index.lookup(&["new", "york"]), None);
        assert_eq!(index.lookup(&["New", "York"]), Some(0));
    }

    #[test]
    fn identical_forms_first_wins() {
        let kg = kg(&["e1", "e2"]);
        let f = tmp("e1\tParis\ne2\tparis\n");
        let index = build_index(f.path(), &kg, true).unwrap();
        assert_eq!(index.lookup(&["paris"]), Some(0));
        assert_eq!(index.stats.collisions, 1);
    }

    #[test]
    fn unknown_id_skipped() {
        let kg = kg(&["e1"]);
        let f = tmp("e1\tfoo\nzz\tbar\n");
        let index = build_index(f.path(), &kg, true).unwrap();
        assert_eq!(index.stats.unknown_ids, 1);
        assert_eq!(index.stats.inserted, 1);
        assert_eq!(index.lookup(&["bar"]), None);
    }

    #[test]
    fn empty_surface_form_rejected() {
        let kg = kg(&["e1"]);
        let f = tmp("e1\t  \n");
        assert!(matches!(build_index(f.path(), &kg, true), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn longest_match_wins() {
        let kg = kg(&["e1", "e2"]);
        let mut index = SurfaceFormIndex::new(true);
        index.insert("new york", 0);
        index.insert("new york city", 1);
        let docs = vec![vec!["new", "york", "city", "is", "big"]];
        let c = ground_documents("en", &docs, &index, 1);
        assert_eq!(words(&c, &kg, 0), ["@ent:e2", "is", "big"]);
    }

    #[test]
    fn greedy_scan_resumes_after_match() {
        let mut index = SurfaceFormIndex::new(true);
        index.insert("a b", 0);
        index.insert("a", 1);
        let docs = vec![vec!["a", "b", "a"]];
        let c = ground_documents("en", &docs, &index, 1);
        assert_eq!(c.documents[0], vec![Token::Entity(0), Token::Entity(1)]);
    }

    #[test]
    fn falls_back_to_shorter_prefix() {
        let mut index = SurfaceFormIndex::new(true);
        index.insert("a", 0);
        index.insert("a b c", 1);
        // "a b" is a trie path but not a form: the scan must fall back to "a"
        let segs = segment(&index, &["a", "b", "x"]);
        assert_eq!(
            segs,
            vec![
                Segment::Entity { entity: 0, start: 0, len: 1 },
                Segment::Lexeme { pos: 1 },
                Segment::Lexeme { pos: 2 },
            ]
        );
    }

    #[test]
    fn no_match_gives_zero_coverage() {
        let kg = kg(&["e1"]);
        let mut index = SurfaceFormIndex::new(true);
        index.insert("zzz", 0);
        let docs = vec![vec!["a", "b"]];
        let c = ground_documents("en", &docs, &index, 1);
        assert!(c.documents[0].iter().all(|t| matches!(t, Token::Lexeme(_))));
        let s = c.stats(&kg);
        assert_eq!(s.coverage, 0.0);
        assert_eq!(s.avg_match, 0.0);
    }

    #[test]
    fn rare_lexemes_pruned_but_entities_kept() {
        let kg = kg(&["e1"]);
        let mut index = SurfaceFormIndex::new(true);
        index.insert("x", 0);
        let docs = vec![vec!["a", "a", "b", "x"], vec!["a", "c"]];
        let c = ground_documents("en", &docs, &index, 2);
        assert_eq!(c.lexicon.iter().collect::<Vec<_>>(), ["a", RARE_TOKEN]);
        assert_eq!(c.lexeme_freq, vec![3, 2]);
        assert_eq!(words(&c, &kg, 0), ["a", "a", RARE_TOKEN, "@ent:e1"]);
        let s = c.stats(&kg);
        assert_eq!((s.coverage, s.avg_match), (1.0, 1.0));
    }

    #[test]
    fn lexicon_frequencies_match_counts() {
        let index = SurfaceFormIndex::new(true);
        let docs = vec![vec!["b", "a", "b"], vec!["c", "a", "b"]];
        let c = ground_documents("en", &docs, &index, 1);
        assert_eq!(c.lexicon.iter().collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(c.lexeme_freq, vec![3, 2, 1]);
    }

    #[test]
    fn pregrounded_resolution_and_demotion() {
        let kg = kg(&["e1"]);
        let f = tmp("@ent:e1 is big\n@ent:unknown x\n\n");
        let c = load_pregrounded(f.path(), &kg).unwrap();
        assert_eq!(c.documents.len(), 3);
        assert_eq!(words(&c, &kg, 0), ["@ent:e1", "is", "big"]);
        assert_eq!(words(&c, &kg, 1), ["@ent:unknown", "x"]);
        assert!(c.documents[2].is_empty());
    }

    #[test]
    fn pregrounded_malformed_marker() {
        let kg = kg(&["e1"]);
        let f = tmp("ok\nbad @ent: here\n");
        assert!(matches!(load_pregrounded(f.path(), &kg), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn text_round_trips_through_pregrounded() {
        let kg = kg(&["e1", "e2"]);
        let mut index = SurfaceFormIndex::new(true);
        index.insert("new york", 0);
        index.insert("paris", 1);
        let docs = vec![vec!["new", "york", "and", "paris"], vec![], vec!["and", "and"]];
        let c = ground_documents("en", &docs, &index, 1);
        let f = tmp(&c.to_text(&kg));
        let back = load_pregrounded(f.path(), &kg).unwrap();
        assert_eq!(back, c);
    }
}
