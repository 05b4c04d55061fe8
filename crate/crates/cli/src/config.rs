//! `key = value` configuration with built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use wdht::datastore::SyntheticSpec;
use wdht::hashnet::{HyperParams, LossMode};
use wdht::tagvec::Aggregation;

use crate::CliError;

/// A configuration key: name, default value, help text. An empty default
/// means "unset".
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const KEYS: &[Key] = &[
    key("seed", "0", "seed for initialization, shuffling, splits and synthetic data"),
    key("lambda1", "1", "weight of the pairwise tag-similarity loss"),
    key("lambda2", "10", "weight of the tag-vector hinge loss"),
    key("lambda3", "1", "weight of the quantization loss"),
    key("lambda4", "1", "weight of the contrastive loss (binary_tag mode)"),
    key("margin_hinge", "0.1", "margin of the hinge loss"),
    key("margin_contrastive", "1", "margin of the contrastive loss"),
    key("lr", "0.001", "learning rate"),
    key("momentum", "0.9", "momentum rate"),
    key("batch_size", "32", "mini-batch size"),
    key("epochs", "50", "training epochs"),
    key("mode", "wdht", "loss mode: wdht | binary_tag"),
    key("aggregation", "mean", "tag aggregation: mean | tf | itf"),
    key("bits", "32", "hash code length"),
    key("hidden", "256", "width of the hidden layer"),
    key("features", "", "feature matrix (FVEC)"),
    key("tags", "", "tags file, one sample per line"),
    key("labels", "", "labels file"),
    key("embeddings", "", "word embedding table"),
    key("tag_vectors", "", "aggregated tag vectors (FVEC from `aggregate`)"),
    key("checkpoint", "", "model checkpoint (WDHM)"),
    key("loss_csv", "", "loss history CSV [default: <checkpoint>.loss.csv]"),
    key("codes", "", "output codes file (WDHC)"),
    key("db_codes", "", "database codes (WDHC)"),
    key("query_codes", "", "query codes (WDHC)"),
    key("db_labels", "", "database labels file"),
    key("query_labels", "", "query labels file"),
    key("rankings", "", "query results TSV, used instead of codes"),
    key("output", "", "output file"),
    key("report", "", "mAP report CSV"),
    key("pr", "", "precision-recall CSV"),
    key("out_dir", "", "output directory"),
    key("k", "5000,50000", "comma-separated K values for mAP@K"),
    key("topk", "100", "results per query; K of the grid search mAP"),
    key("clusters", "4", "synthetic clusters"),
    key("per_cluster", "500", "synthetic samples per cluster"),
    key("feature_dim", "64", "synthetic feature dimension"),
    key("feature_noise", "1", "synthetic feature noise (std dev)"),
    key("vocab_per_cluster", "20", "synthetic tag vocabulary per cluster"),
    key("tags_per_sample", "4", "synthetic tags per sample"),
    key("embed_dim", "32", "synthetic embedding dimension"),
    key("embed_noise", "0.5", "synthetic embedding noise"),
    key("tag_noise", "0", "synthetic share of tags from other clusters"),
    key("query_count", "200", "synthetic query samples"),
    key("gradcheck_seeds", "20", "random networks checked by `gradcheck`"),
    key("gradcheck_tol", "1e-4", "max relative error accepted by `gradcheck`"),
    key("lambda2_grid", "0.01,0.1,1,10,100", "lambda2 values of the grid search"),
    key("lambda3_grid", "0.01,0.1,1,10,100", "lambda3 values of the grid search"),
    key("validation_fraction", "0.1", "share of samples held out by the grid search"),
];

pub fn find_key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect(),
        }
    }
}

impl Config {
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), CliError> {
        let key = find_key(name).ok_or_else(|| CliError::Usage(format!("unknown key '{name}'")))?;
        self.values.insert(key.name, value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("no config key {name}"))
    }

    pub fn parse<T: FromStr>(&self, name: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(name);
        v.parse()
            .map_err(|e| CliError::Usage(format!("bad value for {name} '{v}': {e}")))
    }

    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(name)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Usage(format!("bad value in {name} '{s}': {e}")))
            })
            .collect()
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let v = self.raw(name);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, name: &str) -> Result<PathBuf, CliError> {
        self.path(name)
            .ok_or_else(|| CliError::Usage(format!("missing required key {name}")))
    }

    pub fn hyper(&self) -> Result<HyperParams, CliError> {
        let h = HyperParams {
            lambda1: self.parse("lambda1")?,
            lambda2: self.parse("lambda2")?,
            lambda3: self.parse("lambda3")?,
            lambda4: self.parse("lambda4")?,
            margin_hinge: self.parse("margin_hinge")?,
            margin_contrastive: self.parse("margin_contrastive")?,
            learning_rate: self.parse("lr")?,
            momentum: self.parse("momentum")?,
            batch_size: self.parse("batch_size")?,
            epochs: self.parse("epochs")?,
            seed: self.parse("seed")?,
            mode: self.parse::<LossMode>("mode")?,
        };
        h.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(h)
    }

    pub fn aggregation(&self) -> Result<Aggregation, CliError> {
        self.parse("aggregation")
    }

    pub fn synth_spec(&self) -> Result<SyntheticSpec, CliError> {
        Ok(SyntheticSpec {
            clusters: self.parse("clusters")?,
            per_cluster: self.parse("per_cluster")?,
            feature_dim: self.parse("feature_dim")?,
            feature_noise: self.parse("feature_noise")?,
            vocab_per_cluster: self.parse("vocab_per_cluster")?,
            tags_per_sample: self.parse("tags_per_sample")?,
            embed_dim: self.parse("embed_dim")?,
            embed_noise: self.parse("embed_noise")?,
            tag_noise: self.parse("tag_noise")?,
            seed: self.parse("seed")?,
        })
    }
}
