use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kgalign_core::alignment::{read_pairs, write_predictions, AlignmentState, Metric, NeighborQuery, Retriever};
use kgalign_core::embedding::{write_embeddings, Trainer};
use kgalign_core::eval::{candidates_for, evaluate, resolve_pairs, CandidateMode};
use kgalign_core::grounding::{build_index, ground_corpus, load_pregrounded};
use kgalign_core::kg::load_kg;
use kgalign_core::pipeline::{
    ablation_variants, align, initial_state, render_ablation, run_ablation, run_pipeline, CorpusInput, PipelineConfig,
    PipelineInputs, SideInput, Stage,
};
use kgalign_core::synth::{generate_benchmark, BenchmarkPaths, SynthParams};
use kgalign_core::{Error, Result};

#[derive(Parser)]
#[command(name = "kgalign", version, about = "Cross-lingual entity alignment from KGs and text")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Standard,
    Desk,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file applied on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "standard")]
    profile: Profile,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let base = match self.profile {
            Profile::Standard => PipelineConfig::default(),
            Profile::Desk => PipelineConfig::desk(),
        };
        match &self.config {
            Some(p) => PipelineConfig::load(p, base),
            None => Ok(base),
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Directory written by `kgalign synth`; replaces the individual paths below.
    #[arg(long)]
    bench: Option<PathBuf>,
    #[arg(long)]
    src_kg: Option<PathBuf>,
    #[arg(long)]
    src_forms: Option<PathBuf>,
    /// Raw corpus (needs --src-forms) or a pre-grounded corpus.
    #[arg(long)]
    src_corpus: Option<PathBuf>,
    #[arg(long)]
    tgt_kg: Option<PathBuf>,
    #[arg(long)]
    tgt_forms: Option<PathBuf>,
    #[arg(long)]
    tgt_corpus: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    seed_lexicon: Option<PathBuf>,
}

impl DataArgs {
    fn inputs(&self) -> Result<PipelineInputs> {
        if let Some(dir) = &self.bench {
            return Ok(PipelineInputs::from_benchmark(&BenchmarkPaths::in_dir(dir)));
        }
        let need = |p: &Option<PathBuf>, flag: &str| p.clone().ok_or_else(|| Error::Input(format!("--{flag} is required without --bench")));
        let side = |lang: &str, kg: &Option<PathBuf>, forms: &Option<PathBuf>, corpus: &Option<PathBuf>| -> Result<SideInput> {
            let corpus = need(corpus, &format!("{lang}-corpus"))?;
            Ok(SideInput {
                lang: lang.to_owned(),
                triples: need(kg, &format!("{lang}-kg"))?,
                corpus: match forms {
                    Some(f) => CorpusInput::Raw {
                        forms: f.clone(),
                        corpus,
                    },
                    None => CorpusInput::Pregrounded(corpus),
                },
            })
        };
        Ok(PipelineInputs {
            source: side("src", &self.src_kg, &self.src_forms, &self.src_corpus)?,
            target: side("tgt", &self.tgt_kg, &self.tgt_forms, &self.tgt_corpus)?,
            gold_entities: need(&self.gold, "gold")?,
            seed_lexicon: self.seed_lexicon.clone(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bilingual benchmark.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        entities: usize,
        #[arg(long, default_value_t = 2000)]
        triples: usize,
        #[arg(long)]
        edge_drop: Option<f64>,
        #[arg(long)]
        text_noise: Option<f64>,
        #[arg(long)]
        walks_per_entity: Option<usize>,
        #[arg(long)]
        walk_length: Option<usize>,
    },
    /// Ground a tokenized corpus against a KG's surface forms.
    Ground {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        forms: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_case_fold: bool,
        #[arg(long, default_value_t = 5)]
        min_freq: u64,
        #[arg(long, default_value = "xx")]
        lang: String,
    },
    /// Train one language's joint embedding space.
    Train {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        grounded: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes `<prefix>.emb` and `<prefix>.rel`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_gcn: bool,
        #[arg(long)]
        no_text: bool,
        #[arg(long)]
        no_kg: bool,
        #[arg(long, default_value = "xx")]
        lang: String,
    },
    /// Self-learn the alignment between two trained spaces.
    Align {
        /// Prefix given to `train --out`.
        #[arg(long)]
        src_emb: PathBuf,
        #[arg(long)]
        tgt_emb: PathBuf,
        #[arg(long)]
        seed_entities: PathBuf,
        #[arg(long)]
        seed_lexicon: Option<PathBuf>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        csls_k: Option<usize>,
        #[arg(long)]
        stop_frac: Option<f64>,
        #[arg(long)]
        no_self_learning: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// State directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an alignment state on test pairs.
    Eval {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 10)]
        p: usize,
        /// Defaults to the metric stored with the state.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long, default_value = "test")]
        candidates: String,
        /// Also write ranked predictions for every source entity.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Full pipeline: ground, train, align, evaluate.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resume from this stage, reusing earlier artifacts under --out.
        #[arg(long, default_value = "ground")]
        from: String,
    },
    /// Run the ablation grid and print a comparison table.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            seed,
            entities,
            triples,
            edge_drop,
            text_noise,
            walks_per_entity,
            walk_length,
        } => {
            let d = SynthParams::default();
            let params = SynthParams {
                entities,
                triples,
                edge_drop: edge_drop.unwrap_or(d.edge_drop),
                text_noise: text_noise.unwrap_or(d.text_noise),
                walks_per_entity: walks_per_entity.unwrap_or(d.walks_per_entity),
                walk_length: walk_length.unwrap_or(d.walk_length),
                ..d
            };
            let bench = generate_benchmark(&params, seed)?;
            bench.write(&out)?;
            println!("wrote benchmark to {}", out.display());
        }
        Command::Ground {
            kg,
            forms,
            corpus,
            out,
            no_case_fold,
            min_freq,
            lang,
        } => {
            let kg = load_kg(&kg, &lang)?;
            let index = build_index(&forms, &kg, !no_case_fold)?;
            let (grounded, stats) = ground_corpus(&corpus, &index, &kg, min_freq)?;
            write(&out, &grounded.to_text(&kg))?;
            println!("coverage\t{:.4}\navg_match\t{:.4}", stats.coverage, stats.avg_match);
        }
        Command::Train {
            kg,
            grounded,
            cfg,
            seed,
            out,
            no_gcn,
            no_text,
            no_kg,
            lang,
        } => {
            let mut c = cfg.load()?;
            c.optimizer.gcn_enabled &= !no_gcn;
            c.optimizer.text_loss &= !no_text;
            c.optimizer.kg_loss &= !no_kg;
            c.validate()?;
            let kg = load_kg(&kg, &lang)?;
            let corpus = load_pregrounded(&grounded, &kg)?;
            let (space, history) = Trainer::new(&kg, &corpus, &c.optimizer, seed)?.run()?;
            if let Some(last) = history.last() {
                log::info!("final epoch: kg {:?} text {:?}", last.kg, last.text);
            }
            ensure_parent(&out)?;
            write_embeddings(&out, &space, &kg, &corpus)?;
            println!("wrote {}.emb and {}.rel", out.display(), out.display());
        }
        Command::Align {
            src_emb,
            tgt_emb,
            seed_entities,
            seed_lexicon,
            metric,
            csls_k,
            stop_frac,
            no_self_learning,
            cfg,
            out,
        } => {
            let mut c = cfg.load()?;
            if let Some(m) = metric {
                c.query.metric = m.parse()?;
            }
            if let Some(k) = csls_k {
                c.query.csls_k = k;
            }
            if let Some(f) = stop_frac {
                c.learn.stop_fraction = f;
            }
            c.self_learning &= !no_self_learning;
            c.validate()?;
            let seeds = read_pairs(&seed_entities)?;
            let lexicon = seed_lexicon.as_ref().map(read_pairs).transpose()?;
            let state = initial_state(&src_emb, &tgt_emb, &seeds, lexicon.as_deref())?;
            let state = align(state, &c)?;
            state.save(&out, &src_emb, &tgt_emb, &c.query)?;
            println!(
                "iterations\t{}\nentity_pairs\t{}\nlexeme_pairs\t{}",
                state.iterations,
                state.entity_pairs().len(),
                state.lexeme_pairs().len()
            );
        }
        Command::Eval {
            state,
            test,
            p,
            metric,
            candidates,
            predictions,
        } => {
            let loaded = AlignmentState::load(&state)?;
            let q = NeighborQuery {
                metric: match metric {
                    Some(m) => m.parse::<Metric>()?,
                    None => loaded.query.metric,
                },
                ..loaded.query
            };
            let mode: CandidateMode = candidates.parse()?;
            let test = resolve_pairs(&loaded.state, &read_pairs(&test)?)?;
            let report = evaluate(&test, &loaded.state, &q, p, mode)?;
            if let Some(path) = predictions {
                let r = Retriever::new(&loaded.state, &q, candidates_for(&loaded.state, &test, mode))?;
                write_predictions(path, &r, &loaded.state, p)?;
            }
            print!("{}", report.to_tsv());
        }
        Command::Run {
            data,
            cfg,
            out,
            seed,
            from,
        } => {
            let c = cfg.load()?;
            let outcome = run_pipeline(&c, &data.inputs()?, &out, seed, from.parse::<Stage>()?)?;
            print!("{}", outcome.report.to_tsv());
        }
        Command::Ablate { data, cfg, out, seed } => {
            let c = cfg.load()?;
            let rows = run_ablation(&ablation_variants(&c), &data.inputs()?, &out, seed);
            let table = render_ablation(&rows);
            write(&out.join("ablation.tsv"), &table)?;
            print!("{table}");
            if let Some((name, Err(e))) = rows.into_iter().find(|(_, r)| r.is_err()) {
                return Err(Error::Stage {
                    stage: name,
                    source: Box::new(e),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log))
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!("\n  caused by: {s}"));
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
