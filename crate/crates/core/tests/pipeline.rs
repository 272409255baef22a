//! End-to-end pipeline on a tiny benchmark: determinism, resumption, and the
//! stage each ablation flag touches.

use std::fs;
use std::path::Path;

use kgalign_core::alignment::Metric;
use kgalign_core::pipeline::{ablation_variants, run_ablation, run_pipeline, PipelineConfig, PipelineInputs, RunLayout, Stage};
use kgalign_core::synth::{generate_benchmark, BenchmarkPaths, SynthParams};
use kgalign_core::Error;

fn tiny_bench(dir: &Path) -> PipelineInputs {
    let p = SynthParams {
        entities: 60,
        triples: 240,
        relations: 5,
        concepts: 30,
        ..SynthParams::default()
    };
    let paths: BenchmarkPaths = generate_benchmark(&p, 5).unwrap().write(dir).unwrap();
    PipelineInputs::from_benchmark(&paths)
}

fn tiny_config() -> PipelineConfig {
    let mut c = PipelineConfig::desk();
    c.optimizer.dim = 8;
    c.optimizer.epochs = 4;
    c.optimizer.batch_size = 32;
    c.min_freq = 1;
    c
}

fn hashes(root: &Path) -> Vec<String> {
    let l = RunLayout::new(root);
    Stage::ALL.iter().map(|&s| l.stage_hash(s).unwrap()).collect()
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = tiny_bench(&dir.path().join("bench"));
    let cfg = tiny_config();
    let a = run_pipeline(&cfg, &inputs, dir.path().join("a"), 3, Stage::Ground).unwrap();
    let b = run_pipeline(&cfg, &inputs, dir.path().join("b"), 3, Stage::Ground).unwrap();
    assert_eq!(a, b);
    assert_eq!(hashes(&dir.path().join("a")), hashes(&dir.path().join("b")));
    let c = run_pipeline(&cfg, &inputs, dir.path().join("c"), 4, Stage::Ground).unwrap();
    assert_ne!(a.hashes[1], c.hashes[1]);
}

#[test]
fn resuming_from_any_stage_reproduces_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = tiny_bench(&dir.path().join("bench"));
    let cfg = tiny_config();
    let root = dir.path().join("run");
    let first = run_pipeline(&cfg, &inputs, &root, 1, Stage::Ground).unwrap();
    let report = fs::read(RunLayout::new(&root).report()).unwrap();
    for from in [Stage::Train, Stage::Align, Stage::Eval] {
        let again = run_pipeline(&cfg, &inputs, &root, 1, from).unwrap();
        assert_eq!(again.hashes, first.hashes, "from {from}");
        assert_eq!(again.report, first.report);
        assert_eq!(fs::read(RunLayout::new(&root).report()).unwrap(), report);
    }
}

#[test]
fn each_flag_first_changes_its_own_stage() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = tiny_bench(&dir.path().join("bench"));
    let base = tiny_config();
    let reference = run_pipeline(&base, &inputs, dir.path().join("ref"), 2, Stage::Ground).unwrap();
    let variant = |f: &dyn Fn(&mut PipelineConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let cases: Vec<(&str, PipelineConfig, Stage)> = vec![
        ("no_self_learning", variant(&|c| c.self_learning = false), Stage::Align),
        ("no_gcn", variant(&|c| c.optimizer.gcn_enabled = false), Stage::Train),
        ("no_text", variant(&|c| c.optimizer.text_loss = false), Stage::Train),
        ("no_kg", variant(&|c| c.optimizer.kg_loss = false), Stage::Train),
        ("metric", variant(&|c| c.query.metric = Metric::L2), Stage::Align),
    ];
    for (name, cfg, stage) in cases {
        let o = run_pipeline(&cfg, &inputs, dir.path().join(name), 2, Stage::Ground).unwrap();
        for (i, st) in Stage::ALL.iter().enumerate() {
            if *st < stage {
                assert_eq!(o.hashes[i], reference.hashes[i], "{name} changed {st}");
            }
        }
        let idx = Stage::ALL.iter().position(|s| *s == stage).unwrap();
        assert_ne!(o.hashes[idx], reference.hashes[idx], "{name} left {stage} unchanged");
    }
}

#[test]
fn seed_lexicon_only_touches_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = tiny_bench(&dir.path().join("bench"));
    let base = tiny_config();
    let a = run_pipeline(&base, &inputs, dir.path().join("a"), 2, Stage::Ground).unwrap();
    let mut cfg = base.clone();
    cfg.seed_lexicon = true;
    let b = run_pipeline(&cfg, &inputs, dir.path().join("b"), 2, Stage::Ground).unwrap();
    assert_eq!(a.hashes[..2], b.hashes[..2]);
    assert_ne!(a.hashes[2], b.hashes[2]);
}

#[test]
fn ablation_grid_reuses_training() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = tiny_bench(&dir.path().join("bench"));
    let base = tiny_config();
    let variants = ablation_variants(&base);
    let rows = run_ablation(&variants, &inputs, dir.path().join("grid"), 7);
    assert_eq!(rows.len(), variants.len());
    let ok: Vec<_> = rows.iter().map(|(n, r)| (*n, r.as_ref().unwrap())).collect();
    let full = ok.iter().find(|(n, _)| *n == "full").unwrap().1;
    for (name, o) in &ok {
        let same_training = matches!(*name, "w/o self-learning" | "w/o CSLS" | "w/ seed lexicon");
        assert_eq!(o.hashes[1] == full.hashes[1], same_training || *name == "full", "{name}");
    }
    // a rerun of the full row alone matches the grid's copy
    let solo = run_pipeline(&base, &inputs, dir.path().join("solo"), 7, Stage::Ground).unwrap();
    assert_eq!(&solo, full);
}

#[test]
fn nothing_to_train_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = tiny_bench(&dir.path().join("bench"));
    let mut cfg = tiny_config();
    cfg.optimizer.kg_loss = false;
    cfg.optimizer.text_loss = false;
    let err = run_pipeline(&cfg, &inputs, dir.path().join("x"), 0, Stage::Ground).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn missing_input_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = tiny_bench(&dir.path().join("bench"));
    inputs.gold_entities = dir.path().join("nope.tsv");
    let err = run_pipeline(&tiny_config(), &inputs, dir.path().join("x"), 0, Stage::Ground).unwrap_err();
    assert!(err.to_string().contains("align"), "{err}");
    assert_eq!(err.exit_code(), 1);
}
