//! One function per subcommand. Each returns the text printed on success.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use wdht::codec::CodeMatrix;
use wdht::datastore::{
    load_tags, save_dataset, split_counts, synth_generate, Dataset, FeatureMatrix, LabelMatrix,
    SampleSet,
};
use wdht::eval::experiments::{grid_search, GridSearchConfig};
use wdht::eval::{map_at_k, map_at_k_codes, pr_curve, pr_curve_codes, write_report_csv, ReportRow};
use wdht::hashnet::gradcheck::run_suite;
use wdht::hashnet::train::write_history_csv;
use wdht::hashnet::{
    encode, train_sized, LayerSizes, LossMode, NetworkParams, Supervision, TrainingSet,
};
use wdht::retrieval::{write_results_tsv, HammingIndex};
use wdht::tagvec::{aggregate_corpus, WordEmbeddingTable};

use crate::config::Config;
use crate::CliError;

type CmdResult = Result<String, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(|e| io_err(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Sidecar listing the source sample index of each aggregated row.
pub fn ids_path(tag_vectors: &Path) -> PathBuf {
    with_suffix(tag_vectors, ".ids")
}

pub fn dropped_path(tag_vectors: &Path) -> PathBuf {
    with_suffix(tag_vectors, ".dropped")
}

fn write_ids(path: &Path, ids: &[usize]) -> Result<(), CliError> {
    write_with(path, |w| ids.iter().try_for_each(|i| writeln!(w, "{i}")))
}

fn read_ids(path: &Path) -> Result<Vec<usize>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut ids = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        ids.push(line.parse().map_err(|_| {
            CliError::Data(format!("{} line {}: bad sample id '{line}'", path.display(), n + 1))
        })?);
    }
    Ok(ids)
}

pub fn cmd_aggregate(cfg: &Config) -> CmdResult {
    let table = WordEmbeddingTable::load(cfg.require_path("embeddings")?)?;
    let tags = load_tags(cfg.require_path("tags")?)?;
    let out = cfg.require_path("output")?;
    let mode = cfg.aggregation()?;
    let corpus = aggregate_corpus(&tags, &table, mode)?;
    if corpus.vectors.is_empty() {
        return Err(CliError::Data("no sample has an in-vocabulary tag".into()));
    }
    let mut w = Array2::<f64>::zeros((corpus.vectors.len(), table.dim()));
    for (row, v) in corpus.vectors.iter().enumerate() {
        w.row_mut(row).assign(&ndarray::ArrayView1::from(&v.w));
    }
    FeatureMatrix::from_f64(&w)?.save(&out)?;
    let kept: Vec<usize> = corpus.vectors.iter().map(|v| v.sample_id).collect();
    write_ids(&ids_path(&out), &kept)?;
    write_ids(&dropped_path(&out), &corpus.dropped)?;
    let mut msg = format!(
        "aggregated {} of {} samples ({mode}) into {}\n",
        kept.len(),
        tags.len(),
        out.display()
    );
    if !corpus.dropped.is_empty() {
        let ids: Vec<String> = corpus.dropped.iter().map(|i| i.to_string()).collect();
        writeln!(msg, "dropped (no in-vocabulary tag): {}", ids.join(" ")).unwrap();
    }
    Ok(msg)
}

/// Features plus the supervision the configured mode needs.
fn load_training_set(cfg: &Config, mode: LossMode) -> Result<TrainingSet, CliError> {
    let features = FeatureMatrix::load(cfg.require_path("features")?)?.to_f64();
    let n = features.nrows();
    let check = |what: &str, count: usize| {
        if count == n {
            Ok(())
        } else {
            Err(CliError::Data(format!(
                "sample counts disagree: {n} feature rows, {count} {what}"
            )))
        }
    };
    match mode {
        LossMode::BinaryTag => {
            let tags = load_tags(cfg.require_path("tags")?)?;
            check("tag lines", tags.len())?;
            Ok(TrainingSet {
                features,
                supervision: Supervision::TagSets(tags),
            })
        }
        LossMode::Wdht => {
            let (w, ids) = if let Some(path) = cfg.path("tag_vectors") {
                let w = FeatureMatrix::load(&path)?.to_f64();
                let sidecar = ids_path(&path);
                let ids = if sidecar.exists() {
                    read_ids(&sidecar)?
                } else {
                    (0..w.nrows()).collect()
                };
                (w, ids)
            } else {
                let tags = load_tags(cfg.require_path("tags")?)?;
                check("tag lines", tags.len())?;
                let table = WordEmbeddingTable::load(cfg.require_path("embeddings")?)?;
                let corpus = aggregate_corpus(&tags, &table, cfg.aggregation()?)?;
                let mut w = Array2::zeros((corpus.vectors.len(), table.dim()));
                for (row, v) in corpus.vectors.iter().enumerate() {
                    w.row_mut(row).assign(&ndarray::ArrayView1::from(&v.w));
                }
                (w, corpus.vectors.iter().map(|v| v.sample_id).collect())
            };
            if ids.len() != w.nrows() {
                return Err(CliError::Data(format!(
                    "{} tag vectors but {} sample ids",
                    w.nrows(),
                    ids.len()
                )));
            }
            if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
                return Err(CliError::Data(format!(
                    "tag vector for sample {bad}, but only {n} feature rows"
                )));
            }
            if w.nrows() == 0 {
                return Err(CliError::Data("no sample has a tag vector".into()));
            }
            Ok(TrainingSet {
                features: features.select(Axis(0), &ids),
                supervision: Supervision::TagVectors(w),
            })
        }
    }
}

pub fn cmd_train(cfg: &Config) -> CmdResult {
    let hyper = cfg.hyper()?;
    let checkpoint = cfg.require_path("checkpoint")?;
    let loss_csv = cfg
        .path("loss_csv")
        .unwrap_or_else(|| with_suffix(&checkpoint, ".loss.csv"));
    let data = load_training_set(cfg, hyper.mode)?;
    let sizes = LayerSizes {
        input: data.features.ncols(),
        hidden: cfg.parse("hidden")?,
        bits: cfg.parse("bits")?,
        embed: data.embed_dim(),
    };
    let out = train_sized(&data, sizes, &hyper)?;
    out.params.save(&checkpoint)?;
    write_with(&loss_csv, |w| write_history_csv(w, &out.history))?;
    let mut msg = format!(
        "trained {} on {} samples, {} bits, {} epochs\n",
        hyper.mode,
        data.len(),
        sizes.bits,
        out.history.len()
    );
    if let (Some(first), Some(last)) = (out.history.first(), out.history.last()) {
        writeln!(
            msg,
            "loss: epoch 1 {:.6}, epoch {} {:.6}",
            first.losses.total, last.epoch, last.losses.total
        )
        .unwrap();
    }
    writeln!(msg, "checkpoint: {}\nloss history: {}", checkpoint.display(), loss_csv.display()).unwrap();
    Ok(msg)
}

pub fn cmd_encode(cfg: &Config) -> CmdResult {
    let params = NetworkParams::load(cfg.require_path("checkpoint")?)?;
    let features = FeatureMatrix::load(cfg.require_path("features")?)?;
    let out = cfg.require_path("codes")?;
    let codes = encode(&params, features.to_f64().view())?;
    codes.save(&out)?;
    Ok(format!(
        "encoded {} samples into {}-bit codes: {}\n",
        codes.len(),
        codes.bits(),
        out.display()
    ))
}

pub fn cmd_query(cfg: &Config) -> CmdResult {
    let db = CodeMatrix::load(cfg.require_path("db_codes")?)?;
    let queries = CodeMatrix::load(cfg.require_path("query_codes")?)?;
    let out = cfg.require_path("output")?;
    let k: usize = cfg.parse("topk")?;
    let index = HammingIndex::new(db);
    let results = index.query_batch(&queries, k)?;
    let ids: Vec<u64> = (0..queries.len() as u64).collect();
    write_with(&out, |w| write_results_tsv(w, &ids, &results))?;
    Ok(format!(
        "ranked {} queries against {} codes (top {k}): {}\n",
        queries.len(),
        index.len(),
        out.display()
    ))
}

/// Reads `query_id<TAB>rank<TAB>db_id<TAB>distance` rows into per-query
/// database positions ordered by rank.
pub fn read_rankings(path: &Path, queries: usize, db_len: usize) -> Result<Vec<Vec<usize>>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); queries];
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::Data(format!("{} line {}: malformed result row", path.display(), n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let q: usize = f[0].parse().map_err(|_| bad())?;
        let rank: usize = f[1].parse().map_err(|_| bad())?;
        let db: usize = f[2].parse().map_err(|_| bad())?;
        if q >= queries || db >= db_len {
            return Err(CliError::Data(format!(
                "{} line {}: query {q} or database item {db} out of range",
                path.display(),
                n + 1
            )));
        }
        rows[q].push((rank, db));
    }
    Ok(rows
        .into_iter()
        .map(|mut r| {
            r.sort_unstable();
            r.into_iter().map(|(_, db)| db).collect()
        })
        .collect())
}

pub fn cmd_eval(cfg: &Config) -> CmdResult {
    let db_labels = LabelMatrix::load(cfg.require_path("db_labels")?)?;
    let query_labels = LabelMatrix::load(cfg.require_path("query_labels")?)?;
    let ks: Vec<usize> = cfg.list("k")?;
    if ks.is_empty() {
        return Err(CliError::Usage("k needs at least one value".into()));
    }
    let mode = cfg.raw("mode").to_string();
    let mut rows = Vec::new();
    let curve;
    if let Some(path) = cfg.path("rankings") {
        let rankings = read_rankings(&path, query_labels.len(), db_labels.len())?;
        let bits: usize = cfg.parse("bits")?;
        for &k in &ks {
            let map = map_at_k(&rankings, &query_labels, &db_labels, k)?;
            rows.push(ReportRow { bits, mode: mode.clone(), k, map });
        }
        curve = match cfg.path("pr") {
            Some(_) if rankings.iter().any(|r| r.len() != db_labels.len()) => {
                return Err(CliError::Data(
                    "a precision-recall curve needs full rankings (topk >= database size)".into(),
                ))
            }
            Some(_) => Some(pr_curve(&rankings, &query_labels, &db_labels)?),
            None => None,
        };
    } else {
        let index = HammingIndex::new(CodeMatrix::load(cfg.require_path("db_codes")?)?);
        let queries = CodeMatrix::load(cfg.require_path("query_codes")?)?;
        for &k in &ks {
            let map = map_at_k_codes(&index, &queries, &query_labels, &db_labels, k)?;
            rows.push(ReportRow { bits: index.bits(), mode: mode.clone(), k, map });
        }
        curve = match cfg.path("pr") {
            Some(_) => Some(pr_curve_codes(&index, &queries, &query_labels, &db_labels)?),
            None => None,
        };
    }

    let mut report = Vec::new();
    write_report_csv(&mut report, &rows).expect("in-memory write");
    let mut msg = String::from_utf8(report.clone()).expect("ascii csv");
    if let Some(path) = cfg.path("report") {
        write_with(&path, |w| w.write_all(&report))?;
        writeln!(msg, "report: {}", path.display()).unwrap();
    }
    if let (Some(path), Some(curve)) = (cfg.path("pr"), curve) {
        write_with(&path, |w| curve.write_csv(w))?;
        writeln!(msg, "precision-recall ({} queries): {}", curve.queries_used, path.display()).unwrap();
    }
    Ok(msg)
}

pub fn cmd_synth(cfg: &Config) -> CmdResult {
    let spec = cfg.synth_spec()?;
    let dir = cfg.require_path("out_dir")?;
    let n_query: usize = cfg.parse("query_count")?;
    let data = synth_generate(&spec)?;
    let parts = split_counts(data.samples.len(), n_query, spec.seed)?;
    let dataset = Dataset {
        train: data.samples.select(&parts.train),
        query: data.samples.select(&parts.query),
        table: data.table,
    };
    save_dataset(&dir, &dataset)?;
    Ok(format!(
        "synthetic dataset: {} train, {} query, {} clusters, {} tags in vocabulary: {}\n",
        dataset.train.len(),
        dataset.query.len(),
        spec.clusters,
        dataset.table.len(),
        dir.display()
    ))
}

pub fn cmd_gradcheck(cfg: &Config) -> CmdResult {
    let seed: u64 = cfg.parse("seed")?;
    let n: u64 = cfg.parse("gradcheck_seeds")?;
    let tol: f64 = cfg.parse("gradcheck_tol")?;
    let outcomes = run_suite(seed..seed + n)?;
    let worst = outcomes
        .iter()
        .max_by(|a, b| a.report.max_rel_err.total_cmp(&b.report.max_rel_err))
        .ok_or_else(|| CliError::Usage("gradcheck_seeds must be positive".into()))?;
    let err = worst.report.max_rel_err;
    let detail = format!(
        "max_rel_err={err:.3e} ({} checks, worst {} seed {})",
        outcomes.len(),
        worst.combo,
        worst.seed
    );
    if err <= tol {
        Ok(format!("PASS {detail}\n"))
    } else {
        Err(CliError::Numeric(format!("FAIL {detail} exceeds {tol:e}")))
    }
}

pub fn cmd_gridsearch(cfg: &Config) -> CmdResult {
    let hyper = cfg.hyper()?;
    let samples = SampleSet::new(
        FeatureMatrix::load(cfg.require_path("features")?)?,
        load_tags(cfg.require_path("tags")?)?,
        LabelMatrix::load(cfg.require_path("labels")?)?,
    )?;
    let table = WordEmbeddingTable::load(cfg.require_path("embeddings")?)?;
    let out = cfg.require_path("output")?;
    let grid = GridSearchConfig {
        lambda2_values: cfg.list("lambda2_grid")?,
        lambda3_values: cfg.list("lambda3_grid")?,
        validation_fraction: cfg.parse("validation_fraction")?,
        bits: cfg.parse("bits")?,
        hidden: cfg.parse("hidden")?,
        k: cfg.parse("topk")?,
        aggregation: cfg.aggregation()?,
    };
    let result = grid_search(&samples, &table, &hyper, &grid)?;
    write_with(&out, |w| {
        writeln!(w, "lambda2,lambda3,mAP")?;
        result
            .cells
            .iter()
            .try_for_each(|c| writeln!(w, "{},{},{}", c.lambda2, c.lambda3, c.map))
    })?;
    let b = result.best;
    Ok(format!(
        "{} cells written to {}\nbest lambda2={} lambda3={} mAP@{}={:.4}\n",
        result.cells.len(),
        out.display(),
        b.lambda2,
        b.lambda3,
        grid.k,
        b.map
    ))
}
