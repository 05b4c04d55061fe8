use wdht::datastore::{split_counts, synth_generate, SyntheticSpec};
use wdht::eval::experiments::{evaluate_model, fit, training_set};
use wdht::hashnet::{HyperParams, LossMode};
use wdht::tagvec::Aggregation;

fn synthetic() -> wdht::datastore::SyntheticData {
    synth_generate(&SyntheticSpec::default()).unwrap()
}

#[test]
fn synthetic_loss_decreases_over_30_epochs() {
    let data = synthetic();
    let hyper = HyperParams {
        lambda1: 1.0,
        lambda2: 10.0,
        lambda3: 1.0,
        epochs: 30,
        learning_rate: 1e-5,
        batch_size: 128,
        ..HyperParams::default()
    };
    let out = fit(&data.samples, &data.table, &hyper, 16, 256, Aggregation::Mean).unwrap();
    assert_eq!(out.history.len(), 30);
    let first = out.history[0].losses.total;
    let last = out.history[29].losses.total;
    assert!(last.is_finite());
    assert!(last < first, "epoch 1 {first}, epoch 30 {last}");
}

#[test]
fn default_hyperparameters_learn_the_default_synthetic_set() {
    let data = synthetic();
    let parts = split_counts(data.samples.len(), 200, 0).unwrap();
    let train = data.samples.select(&parts.train);
    let query = data.samples.select(&parts.query);
    let hyper = HyperParams::default();
    let out = fit(&train, &data.table, &hyper, 32, 256, Aggregation::Mean).unwrap();
    let first = out.history.first().unwrap().losses.total;
    let last = out.history.last().unwrap().losses.total;
    assert!(last < first, "epoch 1 {first}, last {last}");
    assert!(evaluate_model(&out.params, &train, &query, 100).unwrap() > 0.95);
}

#[test]
fn same_seed_same_model() {
    let data = synthetic();
    let hyper = HyperParams {
        epochs: 3,
        ..HyperParams::default()
    };
    let a = fit(&data.samples, &data.table, &hyper, 16, 64, Aggregation::Tf).unwrap();
    let b = fit(&data.samples, &data.table, &hyper, 16, 64, Aggregation::Tf).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);

    let other = HyperParams { seed: 1, ..hyper };
    let c = fit(&data.samples, &data.table, &other, 16, 64, Aggregation::Tf).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn baseline_mode_trains_without_tag_vectors() {
    let data = synthetic();
    let hyper = HyperParams {
        mode: LossMode::BinaryTag,
        epochs: 5,
        ..HyperParams::default()
    };
    let out = fit(&data.samples, &data.table, &hyper, 16, 64, Aggregation::Mean).unwrap();
    assert_eq!(out.params.sizes().embed, 0);
    let h = &out.history;
    assert!(h.iter().all(|e| e.losses.l1 == 0.0 && e.losses.l2 == 0.0));
    assert!(h.last().unwrap().losses.total < h[0].losses.total);
}

#[test]
fn wdht_training_set_drops_untagged_samples() {
    let mut data = synthetic();
    data.samples.tags[3] = wdht::tagvec::TagSet::new(["unknown-tag"]);
    data.samples.tags[10] = wdht::tagvec::TagSet::default();
    let (set, kept) = training_set(&data.samples, &data.table, LossMode::Wdht, Aggregation::Itf).unwrap();
    assert_eq!(set.len(), data.samples.len() - 2);
    assert!(!kept.contains(&3) && !kept.contains(&10));
    let (set, _) = training_set(&data.samples, &data.table, LossMode::BinaryTag, Aggregation::Itf).unwrap();
    assert_eq!(set.len(), data.samples.len());
}
