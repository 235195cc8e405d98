mod common;

use common::{brute_window, covered_by_outage, station_outages, window_has_frame};
use csi_fusion::harness::simulate;
use csi_fusion::pipeline::{
    build_labeled_dataset, build_unlabeled_dataset, detect_missing, preprocess_stream, reference_grid, Preprocessor,
    Provenance, SplitRatios, WindowSpec,
};
use csi_fusion::rng::RandomStream;
use csi_fusion::synth::{OutageSpec, Scenario};
use csi_fusion::MultiStationSample;

fn all_samples(scenario: &Scenario, seed: u64, spec: &WindowSpec) -> (Vec<MultiStationSample>, Vec<f64>) {
    let (traj, streams) = simulate(scenario, seed).unwrap();
    let pre = Preprocessor::new(scenario.k_raw);
    let processed: Vec<_> = streams.iter().map(|s| preprocess_stream(s, &pre).unwrap()).collect();
    let splits = build_labeled_dataset(
        &processed,
        &traj,
        spec,
        scenario.duration_s,
        SplitRatios::default(),
        Provenance { scenario_hash: 0, seed },
    )
    .unwrap();
    let mut samples = splits.train.samples;
    samples.extend(splits.val.samples);
    samples.extend(splits.test.samples);
    let mut times = splits.train.times;
    times.extend(splits.val.times);
    times.extend(splits.test.times);
    (samples, times)
}

/// Long outages so that fully silent windows are common.
fn outage_heavy() -> Scenario {
    Scenario { outage: OutageSpec { enabled: true, mean_gap_s: 20.0, mean_len_s: 5.0 }, ..Scenario::default() }
}

#[test]
fn construction_matches_brute_force_scan() {
    for scenario in [Scenario::default(), outage_heavy()] {
        let seed = 11;
        let spec = WindowSpec::new(2.0, 30.0).unwrap();
        let (samples, times) = all_samples(&scenario, seed, &spec);
        assert_eq!(times, reference_grid(0.0, scenario.duration_s, &spec));
        let (_, streams) = simulate(&scenario, seed).unwrap();
        let keep = Preprocessor::new(scenario.k_raw).keep;
        let mut rng = RandomStream::new(0, "windows");
        let mut missing_seen = 0;
        for _ in 0..1000 {
            let i = rng.below(samples.len());
            for (d, stream) in streams.iter().enumerate() {
                let block = samples[i].block(d);
                match brute_window(stream, &keep, times[i], spec.width_s) {
                    Some(v) => {
                        let expect: Vec<f32> = v.iter().map(|&x| x as f32).collect();
                        assert_eq!(block, expect.as_slice(), "sample {i} station {d}");
                        assert!(!samples[i].observed_missing().contains(d));
                    }
                    None => {
                        assert!(block.iter().all(|&v| v == 0.0));
                        assert!(samples[i].observed_missing().contains(d));
                        missing_seen += 1;
                    }
                }
            }
        }
        if scenario.outage.mean_len_s > 3.0 {
            assert!(missing_seen > 100, "{missing_seen} missing slots");
        }
    }
}

#[test]
fn detect_missing_matches_interval_overlap() {
    let scenario = outage_heavy();
    let seed = 3;
    let spec = WindowSpec::new(2.0, 30.0).unwrap();
    let (samples, times) = all_samples(&scenario, seed, &spec);
    let (_, streams) = simulate(&scenario, seed).unwrap();
    let frame_times: Vec<Vec<f64>> = streams.iter().map(|s| s.timestamps().collect()).collect();
    let outages: Vec<_> = (0..scenario.n_stations).map(|d| station_outages(&scenario, seed, d)).collect();
    for (d, out) in outages.iter().enumerate() {
        assert!(!out.is_empty());
        for &t in &frame_times[d] {
            assert!(!out.iter().any(|&(s, e)| s <= t && t < e), "frame at {t} inside an outage");
        }
    }
    let mut covered = 0;
    for (x, &c) in samples.iter().zip(&times) {
        let m = detect_missing(x);
        for d in 0..scenario.n_stations {
            assert_eq!(m.contains(d), !window_has_frame(&frame_times[d], c, spec.width_s), "t={c} station {d}");
            if covered_by_outage(&outages[d], c, spec.width_s) {
                assert!(m.contains(d));
                covered += 1;
            }
        }
    }
    assert!(covered > 1000, "{covered}");
}

#[test]
fn ssl_rate_must_exceed_label_rate() {
    let scenario = Scenario { duration_s: 60.0, ..Scenario::default() };
    let (_, streams) = simulate(&scenario, 0).unwrap();
    let pre = Preprocessor::new(scenario.k_raw);
    let processed: Vec<_> = streams.iter().map(|s| preprocess_stream(s, &pre).unwrap()).collect();
    let prov = Provenance { scenario_hash: 0, seed: 0 };
    let slow = WindowSpec::new(2.0, 10.0).unwrap();
    assert!(build_unlabeled_dataset(&processed, &slow, 30.0, 40.0, prov).is_err());
    let fast = WindowSpec::new(2.0, 160.0).unwrap();
    let unlabeled = build_unlabeled_dataset(&processed, &fast, 30.0, 40.0, prov).unwrap();
    assert!(unlabeled.times.iter().all(|&t| t <= 40.0 + 1e-9));
    let labeled = WindowSpec::new(2.0, 30.0).unwrap();
    let splits = build_labeled_dataset(&processed, &streams_labels(), &labeled, 60.0, SplitRatios::default(), prov).unwrap();
    assert!(unlabeled.len() > splits.train.len());
}

fn streams_labels() -> csi_fusion::synth::SampledLabels {
    csi_fusion::synth::SampledLabels::new(vec![0.0, 60.0], vec![0.2, 0.8]).unwrap()
}
