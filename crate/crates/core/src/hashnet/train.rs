use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array2, Axis};

use super::backward::{loss_and_gradient, Batch, Target};
use super::loss::{HyperParams, LossMode, LossValues};
use super::optim::{sgd_momentum_step, MomentumState};
use super::params::{init_glorot, LayerSizes, NetworkParams, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::tagvec::TagSet;

/// Mixed into the seed for the shuffling stream so it differs from the
/// initialization stream.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4521;

#[derive(Debug, Clone)]
pub enum Supervision {
    /// One aggregated tag vector per sample (WDHT).
    TagVectors(Array2<f64>),
    /// Raw tag sets; two samples are similar when they share a tag.
    TagSets(Vec<TagSet>),
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Array2<f64>,
    pub supervision: Supervision,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Width H2 needs for this supervision; 0 when there is no H2 head.
    pub fn embed_dim(&self) -> usize {
        match &self.supervision {
            Supervision::TagVectors(w) => w.ncols(),
            Supervision::TagSets(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sums over the epoch's mini-batches.
    pub losses: LossValues,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<EpochLoss>,
}

/// Network shape for a training set: `bits` hash bits over a hidden layer
/// of `hidden` units.
pub fn sizes_for(data: &TrainingSet, bits: usize, hidden: usize) -> LayerSizes {
    LayerSizes {
        input: data.features.ncols(),
        hidden,
        bits,
        embed: data.embed_dim(),
    }
}

/// Tag sets reduced to sorted integer ids for fast overlap tests.
struct TagIndex {
    ids: Vec<Vec<u32>>,
}

impl TagIndex {
    fn new(sets: &[TagSet]) -> Self {
        let mut vocab: HashMap<&str, u32> = HashMap::new();
        let ids = sets
            .iter()
            .map(|s| {
                let mut v: Vec<u32> = s
                    .tags()
                    .iter()
                    .map(|t| {
                        let next = vocab.len() as u32;
                        *vocab.entry(t.as_str()).or_insert(next)
                    })
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Self { ids }
    }

    fn share(&self, a: usize, b: usize) -> bool {
        let (x, y) = (&self.ids[a], &self.ids[b]);
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// `S_ij = 1` when samples share a tag; `S_ii = 1`.
    fn similarity(&self, rows: &[usize]) -> Array2<f64> {
        let k = rows.len();
        Array2::from_shape_fn((k, k), |(i, j)| {
            if i == j || self.share(rows[i], rows[j]) {
                1.0
            } else {
                0.0
            }
        })
    }
}

enum Prepared<'a> {
    Vectors(&'a Array2<f64>),
    Tags(TagIndex),
}

fn prepare<'a>(data: &'a TrainingSet, hyper: &HyperParams) -> Result<Prepared<'a>> {
    let n = data.len();
    match (&data.supervision, hyper.mode) {
        (Supervision::TagVectors(w), LossMode::Wdht) => {
            if w.nrows() != n {
                return Err(Error::Data(format!(
                    "{} tag vectors for {n} feature rows",
                    w.nrows()
                )));
            }
            if w.ncols() == 0 {
                return Err(Error::Data("tag vectors have zero dimension".into()));
            }
            let invalid = w
                .rows()
                .into_iter()
                .filter(|r| {
                    let norm = r.dot(r);
                    !(norm > 0.0 && norm.is_finite())
                })
                .count();
            if invalid == n {
                return Err(Error::Data("every tag vector is invalid".into()));
            }
            if invalid > 0 {
                return Err(Error::Data(format!(
                    "{invalid} samples have zero or non-finite tag vectors; drop them first"
                )));
            }
            Ok(Prepared::Vectors(w))
        }
        (Supervision::TagSets(sets), LossMode::BinaryTag) => {
            if sets.len() != n {
                return Err(Error::Data(format!(
                    "{} tag sets for {n} feature rows",
                    sets.len()
                )));
            }
            Ok(Prepared::Tags(TagIndex::new(sets)))
        }
        (_, mode) => Err(Error::Param(format!(
            "{mode} mode cannot use the given supervision"
        ))),
    }
}

fn make_batch(data: &TrainingSet, prepared: &Prepared<'_>, rows: &[usize]) -> Batch {
    let features = data.features.select(Axis(0), rows);
    let target = match prepared {
        Prepared::Vectors(w) => Target::TagVectors(w.select(Axis(0), rows)),
        Prepared::Tags(index) => Target::Similarity(index.similarity(rows)),
    };
    Batch { features, target }
}

/// Mini-batch training with momentum SGD from a Glorot initialization.
pub fn train(data: &TrainingSet, bits: usize, hyper: &HyperParams) -> Result<TrainOutcome> {
    let sizes = sizes_for(data, bits, DEFAULT_HIDDEN);
    train_sized(data, sizes, hyper)
}

pub fn train_sized(data: &TrainingSet, sizes: LayerSizes, hyper: &HyperParams) -> Result<TrainOutcome> {
    let params = init_glorot(sizes, hyper.seed)?;
    train_from(params, data, hyper)
}

/// Continues training from `params`. Epoch `e` shuffles the samples with
/// the stream seeded from `hyper.seed`, then walks them in `batch_size`
/// chunks; a trailing chunk with fewer than two samples is skipped.
pub fn train_from(
    mut params: NetworkParams,
    data: &TrainingSet,
    hyper: &HyperParams,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let n = data.len();
    if data.features.ncols() != params.sizes().input {
        return Err(Error::Shape(format!(
            "features have {} columns, network expects {}",
            data.features.ncols(),
            params.sizes().input
        )));
    }
    if n < hyper.batch_size {
        return Err(Error::Data(format!(
            "{n} valid samples, fewer than the batch size {}",
            hyper.batch_size
        )));
    }
    let prepared = prepare(data, hyper)?;
    if hyper.mode == LossMode::Wdht && params.sizes().embed != data.embed_dim() {
        return Err(Error::Shape(format!(
            "H2 has {} outputs, tag vectors have {} dimensions",
            params.sizes().embed,
            data.embed_dim()
        )));
    }

    let mut rng = PortableRng::new(hyper.seed ^ SHUFFLE_STREAM);
    let mut state = MomentumState::new(&params);
    let mut order: Vec<usize> = (0..n).collect();
    let min_batch = hyper.batch_size.min(2);
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 1..=hyper.epochs {
        rng.shuffle(&mut order);
        let mut sum = LossValues::default();
        for rows in order.chunks(hyper.batch_size) {
            if rows.len() < min_batch {
                continue;
            }
            let batch = make_batch(data, &prepared, rows);
            let g = loss_and_gradient(&params, &batch, hyper)?;
            if !g.losses.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            sum += g.losses;
            sgd_momentum_step(&mut params, &mut state, &g.grads, hyper);
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: total loss {:.6}", sum.total);
        history.push(EpochLoss { epoch, losses: sum });
    }
    Ok(TrainOutcome { params, history })
}

/// `epoch,L1,L2,L3,L4,total`
pub fn write_history_csv<W: Write>(mut out: W, history: &[EpochLoss]) -> std::io::Result<()> {
    writeln!(out, "epoch,L1,L2,L3,L4,total")?;
    for e in history {
        let l = &e.losses;
        writeln!(out, "{},{},{},{},{},{}", e.epoch, l.l1, l.l2, l.l3, l.l4, l.total)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PortableRng;

    fn toy(n: usize, seed: u64) -> TrainingSet {
        let mut rng = PortableRng::new(seed);
        let features = Array2::from_shape_fn((n, 6), |(i, _)| (i % 2) as f64 * 2.0 - 1.0 + 0.3 * rng.normal());
        let w = Array2::from_shape_fn((n, 3), |(i, c)| if c == i % 2 { 1.0 } else { 0.1 });
        TrainingSet {
            features,
            supervision: Supervision::TagVectors(w),
        }
    }

    fn hyper() -> HyperParams {
        HyperParams {
            batch_size: 8,
            epochs: 5,
            learning_rate: 0.01,
            seed: 3,
            ..HyperParams::default()
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let data = toy(16, 1);
        let h = HyperParams { epochs: 0, ..hyper() };
        let sizes = sizes_for(&data, 4, 10);
        let out = train_sized(&data, sizes, &h).unwrap();
        assert_eq!(out.params, init_glorot(sizes, h.seed).unwrap());
        assert!(out.history.is_empty());
    }

    #[test]
    fn same_seed_same_result() {
        let data = toy(20, 1);
        let sizes = sizes_for(&data, 4, 10);
        let a = train_sized(&data, sizes, &hyper()).unwrap();
        let b = train_sized(&data, sizes, &hyper()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 5);
    }

    #[test]
    fn binary_tag_mode_trains() {
        let n = 20;
        let mut data = toy(n, 2);
        data.supervision = Supervision::TagSets(
            (0..n)
                .map(|i| TagSet::new([if i % 2 == 0 { "even" } else { "odd" }]))
                .collect(),
        );
        let h = HyperParams {
            mode: LossMode::BinaryTag,
            ..hyper()
        };
        let out = train_sized(&data, sizes_for(&data, 4, 10), &h).unwrap();
        assert_eq!(out.params.sizes().embed, 0);
        assert!(out.history.iter().all(|e| e.losses.l1 == 0.0 && e.losses.l4 > 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = toy(4, 1);
        let sizes = sizes_for(&data, 4, 10);
        assert!(train_sized(&data, sizes, &hyper()).is_err());

        let mut data = toy(16, 1);
        if let Supervision::TagVectors(w) = &mut data.supervision {
            w.row_mut(3).fill(0.0);
        }
        assert!(train_sized(&data, sizes, &hyper()).is_err());

        let data = toy(16, 1);
        let h = HyperParams {
            mode: LossMode::BinaryTag,
            ..hyper()
        };
        assert!(train_sized(&data, sizes, &h).is_err());
    }

    #[test]
    fn similarity_from_shared_tags() {
        let sets = vec![
            TagSet::new(["a", "b"]),
            TagSet::new(["b"]),
            TagSet::new(["c"]),
            TagSet::default(),
        ];
        let s = TagIndex::new(&sets).similarity(&[0, 1, 2, 3]);
        let want = ndarray::array![
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0]
        ];
        assert_eq!(s, want);
    }

    #[test]
    fn history_csv() {
        let h = vec![EpochLoss {
            epoch: 1,
            losses: LossValues {
                l1: 1.0,
                l2: 2.0,
                l3: -0.5,
                l4: 0.0,
                total: 20.5,
            },
        }];
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &h).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,L1,L2,L3,L4,total\n1,1,2,-0.5,0,20.5\n"
        );
    }
}
