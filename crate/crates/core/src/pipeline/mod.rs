//! End-to-end orchestration: ground, train, align, evaluate.
//!
//! Every stage persists its artifacts under one run directory and records a
//! SHA-256 digest of them, so runs can be compared stage by stage and resumed
//! from any stage whose inputs are already on disk.

mod config;

pub use config::{PipelineConfig, CONFIG_KEYS};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::alignment::{read_pairs, self_learn, solve_only, write_predictions, AlignSpace, AlignmentState, Retriever};
use crate::embedding::{entity_path, read_embeddings, relation_path, write_embeddings, Trainer};
use crate::error::{Error, Result, StageExt};
use crate::eval::{candidates_for, evaluate, resolve_pairs, EvalReport};
use crate::grounding::{build_index, ground_corpus, load_pregrounded, GroundedCorpus, GroundingStats};
use crate::kg::{load_kg, KnowledgeGraph};
use crate::synth::BenchmarkPaths;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ground,
    Train,
    Align,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Ground, Stage::Train, Stage::Align, Stage::Eval];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Ground => "ground",
            Stage::Train => "train",
            Stage::Align => "align",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusInput {
    /// Raw tokenized corpus grounded with a surface-form file.
    Raw { forms: PathBuf, corpus: PathBuf },
    Pregrounded(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInput {
    pub lang: String,
    pub triples: PathBuf,
    pub corpus: CorpusInput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineInputs {
    pub source: SideInput,
    pub target: SideInput,
    /// Gold entity pairs, split into seeds and test pairs by the run seed.
    pub gold_entities: PathBuf,
    pub seed_lexicon: Option<PathBuf>,
}

impl PipelineInputs {
    pub fn from_benchmark(paths: &BenchmarkPaths) -> Self {
        PipelineInputs {
            source: SideInput {
                lang: "src".into(),
                triples: paths.source_triples.clone(),
                corpus: CorpusInput::Raw {
                    forms: paths.source_forms.clone(),
                    corpus: paths.source_corpus.clone(),
                },
            },
            target: SideInput {
                lang: "tgt".into(),
                triples: paths.target_triples.clone(),
                corpus: CorpusInput::Raw {
                    forms: paths.target_forms.clone(),
                    corpus: paths.target_corpus.clone(),
                },
            },
            gold_entities: paths.gold_entities.clone(),
            seed_lexicon: Some(paths.seed_lexicon.clone()),
        }
    }
}

/// File layout of one run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn grounded(&self, side: &str) -> PathBuf {
        self.root.join("ground").join(format!("{side}.grounded.txt"))
    }

    pub fn embedding_prefix(&self, side: &str) -> PathBuf {
        self.root.join("emb").join(side)
    }

    pub fn seed_pairs(&self) -> PathBuf {
        self.root.join("split").join("seed.tsv")
    }

    pub fn test_pairs(&self) -> PathBuf {
        self.root.join("split").join("test.tsv")
    }

    pub fn state_dir(&self) -> PathBuf {
        self.root.join("align")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.tsv")
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.tsv")
    }

    pub fn hashes(&self) -> PathBuf {
        self.root.join("hashes.tsv")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    /// Files whose digest identifies each stage's output.
    pub fn stage_files(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::Ground => vec![self.grounded("src"), self.grounded("tgt")],
            Stage::Train => ["src", "tgt"]
                .iter()
                .flat_map(|s| {
                    let p = self.embedding_prefix(s);
                    [entity_path(&p), relation_path(&p)]
                })
                .collect(),
            Stage::Align => {
                let d = self.state_dir();
                vec![
                    self.seed_pairs(),
                    self.test_pairs(),
                    d.join("state.txt"),
                    d.join("transform.txt"),
                    d.join("entity_pairs.tsv"),
                    d.join("lexeme_pairs.tsv"),
                ]
            }
            Stage::Eval => vec![self.report(), self.predictions()],
        }
    }

    pub fn stage_hash(&self, stage: Stage) -> Result<String> {
        let mut h = Sha256::new();
        for p in self.stage_files(stage) {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            h.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-stage seeds derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub source_training: u64,
    pub target_training: u64,
    pub split: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RunSeeds {
            source_training: rng.random(),
            target_training: rng.random(),
            split: rng.random(),
        }
    }
}

/// Shuffles the gold pairs and splits off the first `fraction` as seeds.
pub fn split_gold(gold: &[(String, String)], fraction: f64, seed: u64) -> (Vec<(String, String)>, Vec<(String, String)>) {
    let mut shuffled = gold.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_seed = ((fraction * gold.len() as f64).round() as usize).clamp(1, gold.len().saturating_sub(1).max(1));
    let test = shuffled.split_off(n_seed);
    (shuffled, test)
}

fn pairs_tsv(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}

/// Loads one side's KG and grounds (or reads) its corpus.
pub fn ground_side(input: &SideInput, cfg: &PipelineConfig) -> Result<(KnowledgeGraph, GroundedCorpus, GroundingStats)> {
    let kg = load_kg(&input.triples, &input.lang)?;
    match &input.corpus {
        CorpusInput::Raw { forms, corpus } => {
            let index = build_index(forms, &kg, cfg.case_fold)?;
            let (c, stats) = ground_corpus(corpus, &index, &kg, cfg.min_freq)?;
            Ok((kg, c, stats))
        }
        CorpusInput::Pregrounded(path) => {
            let c = load_pregrounded(path, &kg)?;
            let stats = c.stats(&kg);
            Ok((kg, c, stats))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: EvalReport,
    pub grounding: Option<[GroundingStats; 2]>,
    /// `(stage, sha256 of its artifacts)` in pipeline order.
    pub hashes: Vec<(Stage, String)>,
    pub alignment_iterations: usize,
    pub aligned_entities: usize,
}

fn run_ground(inputs: &PipelineInputs, cfg: &PipelineConfig, layout: &RunLayout) -> Result<[GroundingStats; 2]> {
    let mut stats = Vec::new();
    for (side, input) in [("src", &inputs.source), ("tgt", &inputs.target)] {
        let (kg, corpus, s) = ground_side(input, cfg)?;
        log::info!(
            "{side}: {} entities, {} triples, coverage {:.4}, avg-match {:.4}",
            kg.n_entities(),
            kg.triples().len(),
            s.coverage,
            s.avg_match
        );
        write_file(&layout.grounded(side), &corpus.to_text(&kg))?;
        stats.push(s);
    }
    Ok([stats[0], stats[1]])
}

fn run_train(inputs: &PipelineInputs, cfg: &PipelineConfig, layout: &RunLayout, seeds: &RunSeeds) -> Result<()> {
    for (side, input, seed) in [
        ("src", &inputs.source, seeds.source_training),
        ("tgt", &inputs.target, seeds.target_training),
    ] {
        let kg = load_kg(&input.triples, &input.lang)?;
        let corpus = load_pregrounded(layout.grounded(side), &kg)?;
        let (mut space, history) = Trainer::new(&kg, &corpus, &cfg.optimizer, seed)?.run()?;
        if let Some(last) = history.last() {
            log::info!("{side}: trained {} epochs, final kg {:?} text {:?}", history.len(), last.kg, last.text);
        }
        if !cfg.optimizer.text_loss {
            // untrained lexeme vectors carry no signal; keep them out of alignment
            space.lexemes = Array2::zeros((0, space.dim));
        }
        let prefix = layout.embedding_prefix(side);
        create_parent(&prefix)?;
        write_embeddings(&prefix, &space, &kg, &corpus)?;
    }
    Ok(())
}

/// Builds the seeded alignment state from persisted embeddings.
pub fn initial_state(
    source_prefix: &Path,
    target_prefix: &Path,
    seeds: &[(String, String)],
    lexicon: Option<&[(String, String)]>,
) -> Result<AlignmentState> {
    let source = AlignSpace::from_table(&read_embeddings(source_prefix)?)?;
    let target = AlignSpace::from_table(&read_embeddings(target_prefix)?)?;
    let mut state = AlignmentState::new(source, target)?;
    state.seed_entities(seeds);
    if let Some(lex) = lexicon {
        state.seed_lexemes(lex);
    }
    Ok(state)
}

/// Runs the alignment loop (or a single solve) configured by `cfg`.
pub fn align(state: AlignmentState, cfg: &PipelineConfig) -> Result<AlignmentState> {
    if cfg.self_learning {
        self_learn(state, &cfg.query, &cfg.learn)
    } else {
        solve_only(state)
    }
}

fn run_align(inputs: &PipelineInputs, cfg: &PipelineConfig, layout: &RunLayout, seeds: &RunSeeds) -> Result<AlignmentState> {
    let gold = read_pairs(&inputs.gold_entities)?;
    if gold.len() < 2 {
        return Err(Error::Input("gold alignment needs at least two pairs".into()));
    }
    let (seed_pairs, test_pairs) = split_gold(&gold, cfg.seed_fraction, seeds.split);
    write_file(&layout.seed_pairs(), &pairs_tsv(&seed_pairs))?;
    write_file(&layout.test_pairs(), &pairs_tsv(&test_pairs))?;
    let lexicon = match (&inputs.seed_lexicon, cfg.seed_lexicon) {
        (Some(p), true) => Some(read_pairs(p)?),
        (None, true) => return Err(Error::Config("seed_lexicon is set but no seed lexicon file was given".into())),
        (_, false) => None,
    };
    let (src, tgt) = (layout.embedding_prefix("src"), layout.embedding_prefix("tgt"));
    let state = initial_state(&src, &tgt, &seed_pairs, lexicon.as_deref())?;
    let state = align(state, cfg)?;
    log::info!(
        "alignment: {} iterations, {} entity pairs, {} lexeme pairs",
        state.iterations,
        state.entity_pairs().len(),
        state.lexeme_pairs().len()
    );
    state.save(layout.state_dir(), &src, &tgt, &cfg.query)?;
    Ok(state)
}

fn run_eval(cfg: &PipelineConfig, layout: &RunLayout) -> Result<(EvalReport, AlignmentState)> {
    let loaded = AlignmentState::load(layout.state_dir())?;
    let state = loaded.state;
    let test = resolve_pairs(&state, &read_pairs(layout.test_pairs())?)?;
    let report = evaluate(&test, &state, &cfg.query, cfg.p, cfg.candidates)?;
    write_file(&layout.report(), &report.to_tsv())?;
    let retriever = Retriever::new(&state, &cfg.query, candidates_for(&state, &test, cfg.candidates))?;
    write_predictions(layout.predictions(), &retriever, &state, cfg.p)?;
    Ok((report, state))
}

/// Runs every stage from `from` onward; earlier stages' artifacts must already exist.
pub fn run_pipeline(cfg: &PipelineConfig, inputs: &PipelineInputs, root: impl AsRef<Path>, seed: u64, from: Stage) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let layout = RunLayout::new(root.as_ref());
    fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    write_file(&layout.config(), &format!("# seed = {seed}\n{}", cfg.render()))?;
    let seeds = RunSeeds::derive(seed);

    let grounding = if from <= Stage::Ground {
        Some(run_ground(inputs, cfg, &layout).stage("ground")?)
    } else {
        None
    };
    if from <= Stage::Train {
        run_train(inputs, cfg, &layout, &seeds).stage("train")?;
    }
    if from <= Stage::Align {
        run_align(inputs, cfg, &layout, &seeds).stage("align")?;
    }
    let (report, state) = run_eval(cfg, &layout).stage("eval")?;

    let mut hashes = Vec::new();
    let mut listing = String::new();
    for st in Stage::ALL {
        let h = layout.stage_hash(st).stage(st.label())?;
        listing.push_str(&format!("{st}\t{h}\n"));
        hashes.push((st, h));
    }
    write_file(&layout.hashes(), &listing)?;
    Ok(PipelineOutcome {
        report,
        grounding,
        hashes,
        alignment_iterations: state.iterations,
        aligned_entities: state.entity_pairs().len(),
    })
}

/// One row of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: &'static str,
    pub config: PipelineConfig,
}

/// The full model and one variant per ablation flag.
pub fn ablation_variants(base: &PipelineConfig) -> Vec<Variant> {
    let v = |name: &'static str, f: &dyn Fn(&mut PipelineConfig)| {
        let mut c = base.clone();
        f(&mut c);
        Variant { name, config: c }
    };
    vec![
        v("full", &|_| {}),
        v("w/o self-learning", &|c| c.self_learning = false),
        v("w/o GCN", &|c| c.optimizer.gcn_enabled = false),
        v("w/o text", &|c| c.optimizer.text_loss = false),
        v("w/o KG", &|c| c.optimizer.kg_loss = false),
        v("w/o CSLS", &|c| c.query.metric = crate::alignment::Metric::L2),
        v("w/ seed lexicon", &|c| c.seed_lexicon = true),
    ]
}

/// Whether two configs produce identical ground and train artifacts.
fn same_embeddings(a: &PipelineConfig, b: &PipelineConfig) -> bool {
    a.optimizer == b.optimizer && a.min_freq == b.min_freq && a.case_fold == b.case_fold
}

fn copy_stage(from: &RunLayout, to: &RunLayout, stages: &[Stage]) -> Result<()> {
    for &st in stages {
        for src in from.stage_files(st) {
            let rel = src.strip_prefix(&from.root).expect("layout file under root");
            let dst = to.root.join(rel);
            create_parent(&dst)?;
            fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
        }
    }
    Ok(())
}

/// Runs each variant under `root/<index>-<slug>`, reusing trained spaces across
/// variants that differ only after training. A failing variant is reported in
/// its row and does not stop the grid.
pub fn run_ablation(
    variants: &[Variant],
    inputs: &PipelineInputs,
    root: impl AsRef<Path>,
    seed: u64,
) -> Vec<(&'static str, Result<PipelineOutcome>)> {
    let root = root.as_ref();
    let mut done: Vec<(PipelineConfig, RunLayout)> = Vec::new();
    let mut out = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let slug: String = v
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
            .collect();
        let layout = RunLayout::new(root.join(format!("{i}-{slug}")));
        let reuse = done.iter().find(|(c, _)| same_embeddings(c, &v.config)).map(|(_, l)| l.clone());
        let outcome = match reuse {
            Some(prev) => copy_stage(&prev, &layout, &[Stage::Ground, Stage::Train])
                .and_then(|()| run_pipeline(&v.config, inputs, &layout.root, seed, Stage::Align)),
            None => run_pipeline(&v.config, inputs, &layout.root, seed, Stage::Ground),
        };
        match &outcome {
            Ok(o) => {
                log::info!("{}: h1 {:.4} mrr {:.4}", v.name, o.report.h1, o.report.mrr);
                done.push((v.config.clone(), layout));
            }
            Err(e) => log::error!("{}: {e}", v.name),
        }
        out.push((v.name, outcome));
    }
    out
}

/// Plain-text comparison table of ablation results.
pub fn render_ablation(rows: &[(&str, Result<PipelineOutcome>)]) -> String {
    let mut s = format!("{:<20}\t{:>6}\t{:>6}\t{:>6}\n", "variant", "h1", "h_p", "mrr");
    for (name, o) in rows {
        match o {
            Ok(o) => s.push_str(&format!(
                "{:<20}\t{:>6.4}\t{:>6.4}\t{:>6.4}\n",
                name, o.report.h1, o.report.h_p, o.report.mrr
            )),
            Err(e) => s.push_str(&format!("{name:<20}\tfailed: {e}\n")),
        }
    }
    s
}
