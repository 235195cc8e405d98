mod common;

use common::{naive_covariance, naive_invariance, naive_variance};
use csi_fusion::crossl::{vicreg_covariance, vicreg_invariance, vicreg_loss, vicreg_variance, VicregWeights};
use csi_fusion::downstream::{random_erase, sma_augment, Predictor, SensingModel};
use csi_fusion::harness::{binomial, combinations, eval_at_availability, rmse, CombinationPolicy};
use csi_fusion::pipeline::{detect_missing, normalize_power};
use csi_fusion::rng::RandomStream;
use csi_fusion::{apply_input_mask, AmplitudeVector, EmbeddingBatch, MaskSet, Matrix, MultiStationSample};
use proptest::prelude::*;

fn sample(n_st: usize, k: usize, values: Vec<f32>, missing_bits: u64) -> MultiStationSample {
    let missing = MaskSet::from_bits(missing_bits & ((1 << n_st) - 1));
    MultiStationSample::from_flat(n_st, k, values, missing).unwrap()
}

fn arb_sample() -> impl Strategy<Value = MultiStationSample> {
    (1usize..=8, 1usize..=6).prop_flat_map(|(n, k)| {
        (prop::collection::vec(0.01f32..3.0, n * k), any::<u64>()).prop_map(move |(v, m)| sample(n, k, v, m))
    })
}

fn batch(rows: &[Vec<f64>]) -> EmbeddingBatch {
    EmbeddingBatch::new(Matrix::from_rows(rows).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn normalized_power_is_one(a in prop::collection::vec(1e-3f64..1e3, 1..64), scale in 1e-3f64..1e3) {
        let n = normalize_power(&AmplitudeVector(a.clone()));
        prop_assert!(!n.degenerate);
        prop_assert!((n.vector.mean_power() - 1.0).abs() < 1e-9);
        let scaled = normalize_power(&AmplitudeVector(a.iter().map(|v| v * scale).collect()));
        for (x, y) in n.vector.0.iter().zip(&scaled.vector.0) {
            prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn vicreg_terms_match_loop_oracle(
        z in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 8),
        z2 in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 8),
    ) {
        let (b1, b2) = (batch(&z), batch(&z2));
        prop_assert!((vicreg_variance(&b1, 1.0, 1e-4) - naive_variance(&z, 1.0, 1e-4)).abs() < 1e-12);
        prop_assert!((vicreg_invariance(&b1, &b2).unwrap() - naive_invariance(&z, &z2)).abs() < 1e-12);
        prop_assert!((vicreg_covariance(&b1) - naive_covariance(&z)).abs() < 1e-12);
        let w = VicregWeights::office();
        let t = vicreg_loss(&b1, &b2, &w).unwrap();
        let expect = w.lambda * (naive_variance(&z, w.gamma, w.epsilon) + naive_variance(&z2, w.gamma, w.epsilon))
            + w.mu * naive_invariance(&z, &z2)
            + w.nu * (naive_covariance(&z) + naive_covariance(&z2));
        prop_assert!((t.total - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn masked_stations_are_detected(x in arb_sample(), bits in any::<u64>()) {
        let m = MaskSet::from_bits(bits & ((1 << x.n_stations()) - 1));
        let y = apply_input_mask(&x, m);
        prop_assert!(m.is_subset(detect_missing(&y)));
        prop_assert!(detect_missing(&x).is_subset(detect_missing(&y)));
        for d in 0..x.n_stations() {
            if !m.contains(d) {
                prop_assert_eq!(x.block(d), y.block(d));
            } else {
                prop_assert!(y.block(d).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn augmentations_only_remove_information(x in arb_sample(), p in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = RandomStream::new(seed, "aug");
        let y = sma_augment(&x, p, &mut rng).unwrap();
        prop_assert!(detect_missing(&x).is_subset(detect_missing(&y)));
        for d in 0..x.n_stations() {
            if !detect_missing(&y).contains(d) {
                prop_assert_eq!(x.block(d), y.block(d));
            }
        }
        let e = random_erase(&x, 0.2, 0.6, &mut rng).unwrap();
        prop_assert_eq!(detect_missing(&e), detect_missing(&x));
        for (a, b) in x.values().iter().zip(e.values()) {
            prop_assert!(*b == *a || *b == 0.0);
        }
    }

    #[test]
    fn combination_sets_are_distinct_and_sized(n in 1usize..=8, r in 0usize..=8) {
        let r = r.min(n);
        let c = combinations(n, r);
        prop_assert_eq!(c.len() as u64, binomial(n, r));
        prop_assert!(c.iter().all(|m| m.len() == r && m.span() <= n));
        let mut bits: Vec<u64> = c.iter().map(|m| m.bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        prop_assert_eq!(bits.len(), c.len());
    }
}

fn random_model_and_data(seed: u64, rows: usize) -> (SensingModel, Matrix, Vec<f64>) {
    let mut rng = RandomStream::new(seed, "props");
    let model = SensingModel::raw_input(4, 5, &mut rng).unwrap();
    let x = Matrix::from_fn(rows, 20, |_, _| rng.uniform_range(0.2, 1.8));
    let labels = (0..rows).map(|_| rng.uniform()).collect();
    (model, x, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_availability_is_plain_rmse(seed in any::<u64>()) {
        let (model, x, labels) = random_model_and_data(seed, 30);
        let r = eval_at_availability(&model, &x, &labels, 4, 4, CombinationPolicy::Exhaustive, false, &mut RandomStream::new(0, "e")).unwrap();
        prop_assert_eq!(r.combinations, 1);
        prop_assert_eq!(r.rmse, rmse(&model.predict_rows(&x).unwrap(), &labels).unwrap());
    }

    #[test]
    fn evaluation_ignores_test_order(seed in any::<u64>(), k in 1usize..=4, pooled in any::<bool>()) {
        let (model, x, labels) = random_model_and_data(seed, 24);
        let mut order: Vec<usize> = (0..24).collect();
        RandomStream::new(seed, "perm").shuffle(&mut order);
        let xp = x.select_rows(&order);
        let lp: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
        let eval = |x: &Matrix, l: &[f64]| {
            eval_at_availability(&model, x, l, 4, k, CombinationPolicy::Exhaustive, pooled, &mut RandomStream::new(0, "e")).unwrap()
        };
        let (a, b) = (eval(&x, &labels), eval(&xp, &lp));
        prop_assert_eq!(a.combinations, b.combinations);
        prop_assert!((a.rmse - b.rmse).abs() < 1e-9);
    }
}
