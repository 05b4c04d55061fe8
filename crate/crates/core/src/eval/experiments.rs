//! Train-and-evaluate loops: aggregation comparison and loss-weight grid
//! search.

use ndarray::Array2;

use super::map_at_k_codes;
use crate::datastore::{split, Dataset, SampleSet};
use crate::error::{Error, Result};
use crate::hashnet::params::{LayerSizes, NetworkParams};
use crate::hashnet::train::{train_sized, Supervision, TrainOutcome, TrainingSet};
use crate::hashnet::{encode, HyperParams, LossMode};
use crate::retrieval::HammingIndex;
use crate::tagvec::{aggregate_corpus, Aggregation, WordEmbeddingTable};

/// Builds the training set for `hyper.mode`. In WDHT mode samples without
/// any in-vocabulary tag are left out; the kept row indices are returned.
pub fn training_set(
    samples: &SampleSet,
    table: &WordEmbeddingTable,
    mode: LossMode,
    aggregation: Aggregation,
) -> Result<(TrainingSet, Vec<usize>)> {
    let features = samples.features.to_f64();
    match mode {
        LossMode::BinaryTag => Ok((
            TrainingSet {
                features,
                supervision: Supervision::TagSets(samples.tags.clone()),
            },
            (0..samples.len()).collect(),
        )),
        LossMode::Wdht => {
            let corpus = aggregate_corpus(&samples.tags, table, aggregation)?;
            if corpus.vectors.is_empty() {
                return Err(Error::Data("no sample has an in-vocabulary tag".into()));
            }
            let kept: Vec<usize> = corpus.vectors.iter().map(|v| v.sample_id).collect();
            let mut w = Array2::zeros((kept.len(), table.dim()));
            for (row, v) in corpus.vectors.iter().enumerate() {
                w.row_mut(row).assign(&ndarray::ArrayView1::from(&v.w));
            }
            let features = features.select(ndarray::Axis(0), &kept);
            Ok((
                TrainingSet {
                    features,
                    supervision: Supervision::TagVectors(w),
                },
                kept,
            ))
        }
    }
}

/// Trains a model of `bits` bits on `samples`.
pub fn fit(
    samples: &SampleSet,
    table: &WordEmbeddingTable,
    hyper: &HyperParams,
    bits: usize,
    hidden: usize,
    aggregation: Aggregation,
) -> Result<TrainOutcome> {
    let (data, _) = training_set(samples, table, hyper.mode, aggregation)?;
    let sizes = LayerSizes {
        input: data.features.ncols(),
        hidden,
        bits,
        embed: data.embed_dim(),
    };
    train_sized(&data, sizes, hyper)
}

/// mAP@K of `params` with `database` encoded as the index and `queries`
/// as the queries.
pub fn evaluate_model(
    params: &NetworkParams,
    database: &SampleSet,
    queries: &SampleSet,
    k: usize,
) -> Result<f64> {
    let db_codes = encode(params, database.features.to_f64().view())?;
    let q_codes = encode(params, queries.features.to_f64().view())?;
    let index = HammingIndex::new(db_codes);
    map_at_k_codes(&index, &q_codes, &queries.labels, &database.labels, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub aggregation: Aggregation,
    pub bits: usize,
    pub map: f64,
}

/// One WDHT model per `(aggregation, bits)` pair, all with `hyper.seed`,
/// scored by mAP@`k` of the query split against the training split.
pub fn compare_aggregations(
    data: &Dataset,
    hyper: &HyperParams,
    aggregations: &[Aggregation],
    bit_widths: &[usize],
    hidden: usize,
    k: usize,
) -> Result<Vec<AggregationResult>> {
    let hyper = HyperParams {
        mode: LossMode::Wdht,
        ..hyper.clone()
    };
    let mut rows = Vec::new();
    for &aggregation in aggregations {
        for &bits in bit_widths {
            let model = fit(&data.train, &data.table, &hyper, bits, hidden, aggregation)?;
            let map = evaluate_model(&model.params, &data.train, &data.query, k)?;
            rows.push(AggregationResult {
                aggregation,
                bits,
                map,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lambda2: f64,
    pub lambda3: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    pub best: GridCell,
}

#[derive(Debug, Clone)]
pub struct GridSearchConfig {
    pub lambda2_values: Vec<f64>,
    pub lambda3_values: Vec<f64>,
    /// Share of the training samples held out as validation queries.
    pub validation_fraction: f64,
    pub bits: usize,
    pub hidden: usize,
    pub k: usize,
    pub aggregation: Aggregation,
}

/// Grid over `(λ2, λ3)` with `λ1 = 1`. Each cell trains on the fitting
/// part of `samples` and is scored by validation mAP@K against it. The
/// best cell maximizes mAP; ties go to the smaller λ3, then the smaller λ2.
pub fn grid_search(
    samples: &SampleSet,
    table: &WordEmbeddingTable,
    hyper: &HyperParams,
    config: &GridSearchConfig,
) -> Result<GridSearchResult> {
    if config.lambda2_values.is_empty() || config.lambda3_values.is_empty() {
        return Err(Error::Param("grid search needs non-empty λ2 and λ3 grids".into()));
    }
    let parts = split(samples.len(), config.validation_fraction, hyper.seed)?;
    let fitting = samples.select(&parts.train);
    let validation = samples.select(&parts.query);

    let mut cells = Vec::new();
    for &lambda2 in &config.lambda2_values {
        for &lambda3 in &config.lambda3_values {
            let cell_hyper = HyperParams {
                lambda1: 1.0,
                lambda2,
                lambda3,
                mode: LossMode::Wdht,
                ..hyper.clone()
            };
            let model = fit(&fitting, table, &cell_hyper, config.bits, config.hidden, config.aggregation)?;
            let map = evaluate_model(&model.params, &fitting, &validation, config.k)?;
            log::info!("grid cell λ2={lambda2} λ3={lambda3}: mAP {map:.4}");
            cells.push(GridCell {
                lambda2,
                lambda3,
                map,
            });
        }
    }
    let best = best_cell(&cells).expect("non-empty grid");
    Ok(GridSearchResult { cells, best })
}

/// Highest mAP; ties go to the smaller λ3, then the smaller λ2.
pub fn best_cell(cells: &[GridCell]) -> Option<GridCell> {
    cells
        .iter()
        .max_by(|a, b| {
            a.map
                .total_cmp(&b.map)
                .then(b.lambda3.total_cmp(&a.lambda3))
                .then(b.lambda2.total_cmp(&a.lambda2))
        })
        .copied()
}
