use super::*;
use crate::crossl::{ExtractorManifest, ExtractorSpec, FeatureExtractor};
use crate::matrix::Matrix;
use crate::nnkit::{finite_diff_check, GradCheckConfig, Mode, Parameterized, TrainConfig};
use crate::pipeline::{Dataset, DatasetMeta, Provenance, Split, SplitRatios};
use crate::rng::RandomStream;
use crate::types::{MaskSet, MultiStationSample};

/// Labels depend smoothly on station 0 and 2 blocks; station 1 is sometimes
/// missing.
fn toy_labeled(n: usize, seed: u64) -> Dataset {
    let (n_st, k) = (3, 5);
    let mut rng = RandomStream::new(seed, "toy-labeled");
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.uniform_range(0.2, 0.8);
        let blocks: Vec<Option<Vec<f32>>> = (0..n_st)
            .map(|d| {
                if d == 1 && rng.bernoulli(0.2) {
                    None
                } else {
                    Some((0..k).map(|j| (1.0 + (y * (d + j + 1) as f64 * 2.0).sin() + 0.05 * rng.standard_normal()) as f32).collect())
                }
            })
            .collect();
        samples.push(MultiStationSample::from_stations(&blocks, k).unwrap());
        labels.push(y as f32);
    }
    let meta = DatasetMeta {
        split: Split::Train,
        n_stations: n_st,
        k,
        provenance: Provenance { scenario_hash: 0, seed },
        split_ratios: SplitRatios::default(),
    };
    Dataset::new(meta, samples, Some(labels), Vec::new()).unwrap()
}

fn quick_tc() -> TrainConfig {
    TrainConfig { max_epochs: 40, min_last_batch: 2, ..TrainConfig::new(3e-3, 32) }
}

fn fresh_model(mode: TrainMode, seed: u64) -> SensingModel {
    let mut rng = RandomStream::new(seed, "model");
    let fx = FeatureExtractor::new(&ExtractorSpec::identity_encoders(3, 5, vec![12, 8], 0.3), &mut rng).unwrap();
    SensingModel::new(fx, mode, &mut rng).unwrap()
}

#[test]
fn frozen_mode_leaves_extractor_bitwise_unchanged() {
    let data = toy_labeled(200, 1);
    let model = fresh_model(TrainMode::Frozen, 1);
    let before = model.extractor.clone();
    let aug = AugmentConfig::sma(0.5, AugStrategy::Online);
    let (trained, _) = train_downstream(model, &data, &aug, &quick_tc(), &RandomStream::new(2, "t")).unwrap();
    assert_eq!(trained.extractor, before);
    assert_ne!(trained.head.flat_params(), fresh_model(TrainMode::Frozen, 1).head.flat_params());
}

#[test]
fn sma_with_zero_rate_matches_no_augmentation() {
    let data = toy_labeled(150, 2);
    let tc = TrainConfig { max_epochs: 8, ..quick_tc() };
    let plain = train_downstream(fresh_model(TrainMode::Joint, 3), &data, &AugmentConfig::none(), &tc, &RandomStream::new(4, "t"))
        .unwrap();
    let sma0 = AugmentConfig::sma(0.0, AugStrategy::Online);
    let masked = train_downstream(fresh_model(TrainMode::Joint, 3), &data, &sma0, &tc, &RandomStream::new(4, "t")).unwrap();
    assert_eq!(plain.0, masked.0);
}

#[test]
fn offline_doubling_exact_and_labels_preserved() {
    let data = toy_labeled(37, 3);
    let set = TrainingSet::from_dataset(&data).unwrap();
    let aug = AugmentConfig::sma(0.5, AugStrategy::OfflineDouble);
    let doubled = set.doubled_for_test(&aug, &mut RandomStream::new(0, "d")).unwrap();
    assert_eq!(doubled.len(), 74);
    assert_eq!(&doubled.y[..37], &set.y[..]);
    assert_eq!(&doubled.y[37..], &set.y[..]);
    assert_eq!(doubled.x.select_rows(&(0..37).collect::<Vec<_>>()), set.x);
}

#[test]
fn joint_training_beats_constant() {
    let data = toy_labeled(400, 5);
    let test = toy_labeled(200, 6);
    let (model, _) = train_downstream(fresh_model(TrainMode::Joint, 7), &data, &AugmentConfig::none(), &quick_tc(), &RandomStream::new(8, "t"))
        .unwrap();
    let labels = test.labels_f64();
    let preds = model.predict_rows(&test.features()).unwrap();
    let constant = ConstantPredictor::default().predict_rows(&test.features()).unwrap();
    let rmse = |p: &[f64]| (p.iter().zip(&labels).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / labels.len() as f64).sqrt();
    assert!(rmse(&preds) < 0.7 * rmse(&constant), "{} vs {}", rmse(&preds), rmse(&constant));
}

#[test]
fn predict_is_deterministic_and_finite_when_all_missing() {
    let model = fresh_model(TrainMode::Joint, 9);
    let x = toy_labeled(1, 9).samples[0].clone();
    let a = model.predict(&x).unwrap();
    assert_eq!(a, model.predict(&x).unwrap());
    assert_eq!(a, model.predict(&crate::masking::apply_input_mask(&x, MaskSet::empty())).unwrap());
    let gone = crate::masking::apply_input_mask(&x, MaskSet::full(3));
    assert!(model.predict(&gone).unwrap().is_finite());
}

#[test]
fn constant_baseline_values() {
    let c = constant_baseline();
    let x = toy_labeled(4, 1).features();
    assert_eq!(c.predict_rows(&x).unwrap(), vec![0.5; 4]);
    let analytic = constant_rmse_uniform(0.166, 0.854, 0.5);
    // Midpoint-rule oracle of the same integral.
    let n = 200_000;
    let mean_sq: f64 =
        (0..n).map(|i| 0.166 + (i as f64 + 0.5) * (0.854 - 0.166) / n as f64).map(|y| (y - 0.5f64).powi(2)).sum::<f64>() / n as f64;
    assert!((analytic - mean_sq.sqrt()).abs() < 1e-9);
    assert!((analytic - 0.1986).abs() < 5e-4, "{analytic}");
    assert!(constant_rmse_uniform(0.5 - 1e-9, 0.5 + 1e-9, 0.5) < 1e-8);
}

#[test]
fn raw_input_naive_width() {
    let m = SensingModel::raw_input(8, 52, &mut RandomStream::new(0, "n")).unwrap();
    assert_eq!(m.input_width(), 416);
    assert_eq!(m.extractor.embedding_dim(), 416);
}

#[test]
fn fresh_extractor_naive_equals_joint_downstream() {
    let data = toy_labeled(80, 10);
    let spec = ExtractorSpec::identity_encoders(3, 5, vec![12, 8], 0.3);
    let tc = TrainConfig { max_epochs: 5, ..quick_tc() };
    let rng = RandomStream::new(11, "naive");
    let (a, _) = train_naive(&data, &NaiveVariant::FreshExtractor { spec: spec.clone() }, &AugmentConfig::none(), &tc, &rng).unwrap();
    let mut init = rng.derive("init");
    let fx = FeatureExtractor::new(&spec, &mut init).unwrap();
    let model = SensingModel::new(fx, TrainMode::Joint, &mut init).unwrap();
    let (b, _) = train_downstream(model, &data, &AugmentConfig::none(), &tc, &rng.derive("train")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ensemble_mean_and_isolation() {
    let data = toy_labeled(120, 12);
    let tc = TrainConfig { max_epochs: 5, ..quick_tc() };
    let (ens, reports) = train_ensemble(&data, &AugmentConfig::none(), &tc, &RandomStream::new(1, "e")).unwrap();
    assert_eq!(reports.len(), 3);
    let x = data.features().select_rows(&[0, 1, 2, 3]);
    let per = ens.member_predictions(&x).unwrap();
    let mean = ens.predict_rows(&x).unwrap();
    for i in 0..4 {
        let vals: Vec<f64> = per.iter().map(|p| p[i]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo - 1e-12 <= mean[i] && mean[i] <= hi + 1e-12);
    }
    let masked = crate::harness::mask_rows(&x, MaskSet::from_bits(0b010), 5);
    let per_masked = ens.member_predictions(&masked).unwrap();
    assert_eq!(per_masked[0], per[0]);
    assert_eq!(per_masked[2], per[2]);
}

#[test]
fn single_station_ensemble_is_its_member() {
    let m = SensingModel::raw_input(1, 4, &mut RandomStream::new(0, "one")).unwrap();
    let ens = OutputEnsemble::new(vec![m.clone()], 4).unwrap();
    let x = Matrix::from_fn(3, 4, |i, j| (i + j) as f64 * 0.1);
    assert_eq!(ens.predict_rows(&x).unwrap(), m.predict_rows(&x).unwrap());
}

#[test]
fn dae_loss_decreases_and_handles_empty_masks() {
    let data = toy_labeled(400, 13);
    let spec = ExtractorSpec::identity_encoders(3, 5, vec![16, 8], 0.3);
    let tc = TrainConfig { max_epochs: 6, ..quick_tc() };
    let (_, report) = train_dae(&data, &spec, 0.5, &tc, &RandomStream::new(1, "dae")).unwrap();
    for w in report.history.windows(2).take(5) {
        assert!(w[1] < w[0], "{:?}", report.history);
    }
    let w = reconstruction_weights(&[MaskSet::empty(), MaskSet::from_bits(0b11)], &[MaskSet::empty(), MaskSet::from_bits(0b01)], 3, 5);
    assert!(w.row(0).iter().all(|&v| v == 0.0));
    assert_eq!(w.row(1), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn full_mask_dae_loss_is_full_input_mse() {
    let data = toy_labeled(10, 14);
    let spec = ExtractorSpec::identity_encoders(3, 5, vec![6], 0.0);
    let dae = Dae::new(&spec, &mut RandomStream::new(0, "dae")).unwrap();
    let x = data.features();
    let masks = vec![MaskSet::full(3); 10];
    let observed = vec![MaskSet::empty(); 10];
    let w = reconstruction_weights(&masks, &observed, 3, 5);
    let zeros = Matrix::zeros(10, 15);
    let eval = dae_evaluation(&dae, &x, &zeros, &w, Mode::Inference, 0).unwrap();
    let recon = dae.reconstruct(&zeros).unwrap();
    let mse = recon.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 150.0;
    assert!((eval.loss - mse).abs() < 1e-12);
}

#[test]
fn dae_gradient_check() {
    let data = toy_labeled(12, 15);
    let spec = ExtractorSpec::identity_encoders(3, 5, vec![10, 6], 0.0);
    let dae = Dae::new(&spec, &mut RandomStream::new(2, "dae")).unwrap();
    let x = data.features();
    let masks: Vec<MaskSet> = (0..12).map(|i| MaskSet::from_bits((i % 7) as u64)).collect();
    let observed: Vec<MaskSet> = data.samples.iter().map(|s| s.observed_missing()).collect();
    let input = (0..12).fold(x.clone(), |m, i| {
        let mut m = m;
        for d in masks[i].iter() {
            m.row_mut(i)[d * 5..(d + 1) * 5].iter_mut().for_each(|v| *v = 0.0);
        }
        m
    });
    let w = reconstruction_weights(&masks, &observed, 3, 5);
    let rep = finite_diff_check(&dae, &GradCheckConfig::default(), &mut RandomStream::new(3, "c"), |d| {
        dae_evaluation(d, &x, &input, &w, Mode::Train, 1)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn inpainting_only_touches_missing_blocks() {
    let data = toy_labeled(60, 16);
    let spec = ExtractorSpec::identity_encoders(3, 5, vec![8], 0.0);
    let tc = TrainConfig { max_epochs: 5, ..quick_tc() };
    let (dae, _) = train_dae(&data, &spec, 0.5, &tc, &RandomStream::new(0, "i")).unwrap();
    let (model, _) = train_naive(&data, &NaiveVariant::RawConcat, &AugmentConfig::none(), &tc, &RandomStream::new(1, "i")).unwrap();
    let ip = InpaintingPredictor { reconstructor: dae, model: model.clone() };
    let x = data.features().select_rows(&[0, 1, 2, 3, 4]);
    let full: Vec<usize> = (0..5).filter(|&i| !data.samples[i].observed_missing().contains(1)).collect();
    let xf = x.select_rows(&full);
    assert_eq!(ip.predict_rows(&xf).unwrap(), model.predict_rows(&xf).unwrap());
    let masked = crate::harness::mask_rows(&x, MaskSet::from_bits(0b100), 5);
    let filled = ip.inpaint(&masked).unwrap();
    for i in 0..5 {
        assert_eq!(&filled.row(i)[..5], &masked.row(i)[..5]);
        assert_ne!(&filled.row(i)[10..], &[0.0; 5]);
    }
    assert_ne!(ip.predict_rows(&masked).unwrap(), model.predict_rows(&masked).unwrap());
}

#[test]
fn model_checkpoint_roundtrip_predicts_identically() {
    let data = toy_labeled(40, 7);
    let mut rng = RandomStream::new(7, "ckpt");
    let fx = FeatureExtractor::new(&ExtractorSpec::identity_encoders(3, 5, vec![12, 6], 0.0), &mut rng).unwrap();
    let model = SensingModel::new(fx, TrainMode::Frozen, &mut rng).unwrap();
    let manifest = ModelManifest {
        extractor: ExtractorManifest::describe(&model.extractor),
        mode: TrainMode::Frozen,
        augmentation: Some(AugmentConfig::sma(0.5, AugStrategy::Online)),
        label_ratio: Some(0.5),
        seed: Some(7),
    };
    let ckpt = model_checkpoint(&model, &manifest).unwrap();
    let (back, m2) = model_from_checkpoint(&crate::nnkit::Checkpoint::decode(&ckpt.encode().unwrap()).unwrap()).unwrap();
    assert_eq!(m2, manifest);
    let x = data.features();
    let a = model.predict_rows(&x).unwrap();
    let b = back.predict_rows(&x).unwrap();
    // Payload is f32, so predictions agree to single precision.
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-4, "{p} vs {q}");
    }
}
