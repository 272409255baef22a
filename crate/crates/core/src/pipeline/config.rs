//! `key = value` configuration shared by every subcommand.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! rejected so a typo cannot silently fall back to a default.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::alignment::{Metric, NeighborQuery, SelfLearnOptions};
use crate::embedding::{Activation, NegativeSampler, OptimizerConfig};
use crate::error::{Error, Result};
use crate::eval::CandidateMode;

/// Every accepted key, in the order [`PipelineConfig::render`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "dim",
    "gcn_layers",
    "activation",
    "neg_samples",
    "context_radius",
    "bias_b",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "epochs",
    "min_freq",
    "negative_sampler",
    "case_fold",
    "metric",
    "csls_k",
    "stop_frac",
    "max_iter",
    "lexicon_top_f",
    "seed_fraction",
    "p",
    "candidates",
    "no_self_learning",
    "no_gcn",
    "no_text",
    "no_kg",
    "seed_lexicon",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub optimizer: OptimizerConfig,
    pub min_freq: u64,
    pub case_fold: bool,
    pub query: NeighborQuery,
    pub self_learning: bool,
    pub learn: SelfLearnOptions,
    /// Share of gold entity pairs handed to alignment as seeds; the rest is the test set.
    pub seed_fraction: f64,
    pub p: usize,
    pub candidates: CandidateMode,
    /// Add the seed lexicon to the Procrustes stack when one is supplied.
    pub seed_lexicon: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            optimizer: OptimizerConfig::default(),
            min_freq: 5,
            case_fold: true,
            query: NeighborQuery::default(),
            self_learning: true,
            learn: SelfLearnOptions::default(),
            seed_fraction: 0.3,
            p: 10,
            candidates: CandidateMode::Test,
            seed_lexicon: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value {value:?} for {key} (expected true or false)"))),
    }
}

impl PipelineConfig {
    /// Desk-scale profile: 32-dimensional spaces, batches of 64, 300 epochs.
    pub fn desk() -> Self {
        PipelineConfig {
            optimizer: OptimizerConfig::desk(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let o = &mut self.optimizer;
        match key {
            "dim" => o.dim = parse_value(key, value)?,
            "gcn_layers" => o.gcn_layers = parse_value(key, value)?,
            "activation" => o.activation = value.parse::<Activation>()?,
            "neg_samples" => o.neg_samples = parse_value(key, value)?,
            "context_radius" => o.context_radius = parse_value(key, value)?,
            "bias_b" => o.bias_b = parse_value(key, value)?,
            "batch_size" => o.batch_size = parse_value(key, value)?,
            "lr" => o.lr = parse_value(key, value)?,
            "beta1" => o.beta1 = parse_value(key, value)?,
            "beta2" => o.beta2 = parse_value(key, value)?,
            "epochs" => o.epochs = parse_value(key, value)?,
            "negative_sampler" => o.negative_sampler = value.parse::<NegativeSampler>()?,
            "no_gcn" => o.gcn_enabled = !parse_bool(key, value)?,
            "no_text" => o.text_loss = !parse_bool(key, value)?,
            "no_kg" => o.kg_loss = !parse_bool(key, value)?,
            "min_freq" => self.min_freq = parse_value(key, value)?,
            "case_fold" => self.case_fold = parse_bool(key, value)?,
            "metric" => self.query.metric = value.parse::<Metric>()?,
            "csls_k" => self.query.csls_k = parse_value(key, value)?,
            "stop_frac" => self.learn.stop_fraction = parse_value(key, value)?,
            "max_iter" => self.learn.max_iterations = parse_value(key, value)?,
            "lexicon_top_f" => self.learn.lexicon_top_f = parse_value(key, value)?,
            "seed_fraction" => self.seed_fraction = parse_value(key, value)?,
            "p" => self.p = parse_value(key, value)?,
            "candidates" => self.candidates = value.parse::<CandidateMode>()?,
            "no_self_learning" => self.self_learning = !parse_bool(key, value)?,
            "seed_lexicon" => self.seed_lexicon = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply(mut self, text: &str) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {}: key {key:?} repeated", i + 1)));
            }
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("invalid configuration: "))))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: impl AsRef<Path>, base: Self) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        base.apply(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.query.validate()?;
        if self.min_freq < 1 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction < 1.0) {
            return Err(Error::Config("seed_fraction must lie in (0, 1)".into()));
        }
        if !(self.learn.stop_fraction > 0.0 && self.learn.stop_fraction <= 1.0) {
            return Err(Error::Config("stop_frac must lie in (0, 1]".into()));
        }
        if self.learn.max_iterations < 1 || self.p < 1 {
            return Err(Error::Config("max_iter and p must be at least 1".into()));
        }
        Ok(())
    }

    /// Full `key = value` listing that [`PipelineConfig::apply`] reads back unchanged.
    pub fn render(&self) -> String {
        let o = &self.optimizer;
        let values: Vec<String> = vec![
            o.dim.to_string(),
            o.gcn_layers.to_string(),
            o.activation.to_string(),
            o.neg_samples.to_string(),
            o.context_radius.to_string(),
            o.bias_b.to_string(),
            o.batch_size.to_string(),
            o.lr.to_string(),
            o.beta1.to_string(),
            o.beta2.to_string(),
            o.epochs.to_string(),
            self.min_freq.to_string(),
            o.negative_sampler.to_string(),
            self.case_fold.to_string(),
            self.query.metric.to_string(),
            self.query.csls_k.to_string(),
            self.learn.stop_fraction.to_string(),
            self.learn.max_iterations.to_string(),
            self.learn.lexicon_top_f.to_string(),
            self.seed_fraction.to_string(),
            self.p.to_string(),
            self.candidates.to_string(),
            (!self.self_learning).to_string(),
            (!o.gcn_enabled).to_string(),
            (!o.text_loss).to_string(),
            (!o.kg_loss).to_string(),
            self.seed_lexicon.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut cfg = PipelineConfig::desk();
        cfg.query.metric = Metric::L2;
        cfg.self_learning = false;
        cfg.optimizer.activation = Activation::Tanh;
        let back = PipelineConfig::default().apply(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_and_repeated_keys_rejected() {
        let base = PipelineConfig::default();
        assert!(base.clone().apply("dimm = 3").is_err());
        assert!(base.clone().apply("dim = 3\ndim = 4").is_err());
        assert!(base.clone().apply("dim 3").is_err());
        assert!(base.apply("# comment\n\ndim = 8 # trailing\n").is_ok());
    }

    #[test]
    fn no_kg_with_no_text_is_an_error() {
        let err = PipelineConfig::default().apply("no_kg = true\nno_text = true").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = PipelineConfig::default();
        let text = cfg.render();
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
    }
}
