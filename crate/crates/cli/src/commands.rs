use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use csi_fusion::crossl::{load_extractor, pretrain, save_extractor, ExtractorManifest, FeatureExtractor};
use csi_fusion::downstream::{
    constant_baseline, load_model, save_model, train_downstream, AugStrategy, AugmentConfig, ModelManifest, Predictor,
    SensingModel, TrainMode,
};
use csi_fusion::harness::{
    build_experiment_data, build_from_streams, eval_at_availability, file_digest, heatmap, label_ratio_subset,
    mask_rows, pca_rows, read_metrics_csv, run_grid, simulate, summarize, write_csv, write_pca_csv, CombinationPolicy,
    ExperimentConfig, MetricsRow, ModelCache, Pca,
};
use csi_fusion::pipeline::{export_csv, load_dataset, save_dataset, Dataset};
use csi_fusion::synth::{read_frames_csv, read_metadata, write_frames_csv, write_metadata, write_trajectory_csv, SimMetadata};
use csi_fusion::{MaskSet, Matrix, RandomStream};

use crate::config::{self, RunManifest};
use crate::{AugArg, Cli, Command, ModeArg, StrategyArg};

pub fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"lo,hi\"")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

pub fn parse_policy(s: &str) -> std::result::Result<CombinationPolicy, String> {
    match s {
        "exhaustive" => Ok(CombinationPolicy::Exhaustive),
        "auto" => Ok(CombinationPolicy::default()),
        _ => {
            let draws = s.strip_prefix("mc:").ok_or("expected exhaustive, auto or mc:<draws>")?;
            let draws: usize = draws.parse().map_err(|e| format!("{e}"))?;
            if draws == 0 {
                return Err("mc needs at least one draw".into());
            }
            Ok(CombinationPolicy::MonteCarlo { draws })
        }
    }
}

/// Files read and written by one command, for the run manifest.
struct Ledger {
    out_dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Ledger {
    fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self { out_dir: out_dir.to_path_buf(), inputs: BTreeMap::new(), outputs: BTreeMap::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn read(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn wrote(&mut self, path: &Path) -> Result<()> {
        log::info!("wrote {}", path.display());
        self.outputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    fn finish(self, command: &str, cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
        let path = self.path("manifest.toml");
        RunManifest {
            command: command.to_string(),
            seed: cli.seed,
            crate_version: env!("CARGO_PKG_VERSION"),
            inputs: self.inputs,
            outputs: self.outputs,
            config: cfg,
        }
        .write(&path)
    }
}

fn load_input(ledger: &mut Ledger, path: &Path) -> Result<Dataset> {
    ledger.read(path)?;
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = config::load(cli.config.as_deref())?;
    let mut ledger = Ledger::new(&cli.out_dir)?;
    let name = match &cli.command {
        Command::Simulate => {
            let (trajectory, streams) = simulate(&cfg.data.scenario, cli.seed)?;
            let frames = ledger.path("frames.csv");
            write_frames_csv(&frames, &streams, cfg.data.scenario.k_raw)?;
            ledger.wrote(&frames)?;
            let traj = ledger.path("trajectory.csv");
            write_trajectory_csv(&traj, &trajectory, cfg.data.window.rate_hz)?;
            ledger.wrote(&traj)?;
            let meta = ledger.path("scenario.json");
            let sim = SimMetadata {
                scenario_hash: cfg.data.scenario.content_hash(),
                scenario: cfg.data.scenario.clone(),
                seed: cli.seed,
                trajectory,
            };
            write_metadata(&meta, &sim)?;
            ledger.wrote(&meta)?;
            "simulate"
        }
        Command::BuildDataset(a) => {
            let data = match (&a.frames, &a.metadata) {
                (Some(frames), Some(meta_path)) => {
                    ledger.read(meta_path)?;
                    ledger.read(frames)?;
                    let meta = read_metadata(meta_path)?;
                    cfg.data.scenario = meta.scenario;
                    let streams = read_frames_csv(frames, cfg.data.scenario.n_stations, cfg.data.scenario.k_raw)?;
                    build_from_streams(&cfg.data, meta.trajectory, &streams, meta.seed)?
                }
                (None, None) => build_experiment_data(&cfg.data, cli.seed)?,
                _ => bail!("--frames and --metadata go together"),
            };
            for (name, d) in [("unlabeled", &data.unlabeled), ("train", &data.train), ("val", &data.val), ("test", &data.test)] {
                let path = ledger.path(&format!("{name}.csid"));
                save_dataset(d, &path)?;
                ledger.wrote(&path)?;
                log::info!("{name}: {} samples, {:.2}% station slots missing", d.len(), 100.0 * d.missing_rate());
            }
            "build-dataset"
        }
        Command::Export(a) => {
            let d = load_input(&mut ledger, &a.dataset)?;
            let out = a.out.clone().unwrap_or_else(|| ledger.path("dataset.csv"));
            export_csv(&d, &out)?;
            ledger.wrote(&out)?;
            "export"
        }
        Command::Pretrain(a) => {
            let d = load_input(&mut ledger, &a.dataset)?;
            let m = &mut cfg.methods;
            let w = &mut m.vicreg;
            for (slot, v) in [(&mut w.lambda, a.lambda), (&mut w.mu, a.mu), (&mut w.nu, a.nu), (&mut w.gamma, a.gamma), (&mut w.epsilon, a.epsilon)] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            if let Some(p) = a.p_mask {
                m.pretrain_p_mask = p;
            }
            override_train(&mut m.pretrain, a.lr, a.batch, a.epochs);
            cfg.validate()?;
            let m = &cfg.methods;
            let rng = RandomStream::new(cli.seed, "pretrain");
            let fx = FeatureExtractor::new(&m.extractor_spec(d.meta.n_stations, d.meta.k), &mut rng.derive("init"))?;
            let (fx, report) = pretrain(fx, &d, m.pretrain_p_mask, &m.vicreg, &m.pretrain, &rng.derive("train"))?;
            log::info!("pre-training: {} epochs, best loss {:.5} at epoch {}", report.history.len(), report.best_loss, report.best_epoch);
            let manifest = ExtractorManifest {
                p_mask: Some(m.pretrain_p_mask),
                weights: Some(m.vicreg),
                seed: Some(cli.seed),
                ..ExtractorManifest::describe(&fx)
            };
            let out = a.out.clone().unwrap_or_else(|| ledger.path("extractor.ckpt"));
            save_extractor(&out, &fx, &manifest)?;
            ledger.wrote(&out)?;
            "pretrain"
        }
        Command::Train(a) => {
            let full = load_input(&mut ledger, &a.labeled)?;
            let labeled = label_ratio_subset(&full, a.label_ratio, cli.seed)?;
            let m = &mut cfg.methods;
            override_train(&mut m.downstream, a.lr, a.batch, a.epochs);
            if let Some(mode) = a.mode {
                m.mode = match mode {
                    ModeArg::Frozen => TrainMode::Frozen,
                    ModeArg::Joint => TrainMode::Joint,
                };
            }
            let mut aug = match a.aug {
                AugArg::None => AugmentConfig::none(),
                AugArg::Sma => m.sma,
                AugArg::Re => m.erase,
            };
            if let Some(p) = a.p_mask {
                aug.p_mask = p;
            }
            if let Some(r) = a.erase_range {
                aug.erase_range = r;
            }
            if let Some(s) = a.aug_strategy {
                aug.strategy = match s {
                    StrategyArg::Offline => AugStrategy::OfflineDouble,
                    StrategyArg::Online => AugStrategy::Online,
                };
            }
            aug.validate()?;
            cfg.validate()?;
            let m = &cfg.methods;
            let rng = RandomStream::new(cli.seed, "train");
            let (n_st, k) = (labeled.meta.n_stations, labeled.meta.k);
            let model = match a.extractor.as_str() {
                "identity" => SensingModel::raw_input(n_st, k, &mut rng.derive("head"))?,
                "fresh" => {
                    let fx = FeatureExtractor::new(&m.extractor_spec(n_st, k), &mut rng.derive("init"))?;
                    SensingModel::new(fx, TrainMode::Joint, &mut rng.derive("head"))?
                }
                path => {
                    let path = Path::new(path);
                    ledger.read(path)?;
                    let (fx, _) = load_extractor(path).with_context(|| format!("loading extractor {}", path.display()))?;
                    if (fx.n_stations(), fx.k()) != (n_st, k) {
                        bail!("extractor expects {}x{} inputs, dataset has {n_st}x{k}", fx.n_stations(), fx.k());
                    }
                    SensingModel::new(fx, m.mode, &mut rng.derive("head"))?
                }
            };
            let (model, report) = train_downstream(model, &labeled, &aug, &m.downstream, &rng.derive("fit"))?;
            log::info!(
                "trained on {} samples: {} epochs, best loss {:.5}",
                labeled.len(),
                report.history.len(),
                report.best_loss
            );
            let manifest = ModelManifest {
                extractor: ExtractorManifest::describe(&model.extractor),
                mode: model.mode,
                augmentation: (!aug.is_none()).then_some(aug),
                label_ratio: Some(a.label_ratio),
                seed: Some(cli.seed),
            };
            let out = a.out.clone().unwrap_or_else(|| ledger.path("model.ckpt"));
            save_model(&out, &model, &manifest)?;
            ledger.wrote(&out)?;
            "train"
        }
        Command::Evaluate(a) => {
            let test = load_input(&mut ledger, &a.test)?;
            let (model, name): (Arc<dyn Predictor>, String) = match (&a.model, a.constant) {
                (Some(path), false) => {
                    ledger.read(path)?;
                    let (m, _) = load_model(path)?;
                    let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
                    (Arc::new(m), a.name.clone().unwrap_or(stem))
                }
                (None, true) => (Arc::new(constant_baseline()), a.name.clone().unwrap_or_else(|| "constant".into())),
                _ => bail!("give exactly one of --model or --constant"),
            };
            let n_st = test.meta.n_stations;
            let ks: Vec<usize> = if a.k.is_empty() { (1..=n_st).collect() } else { a.k.clone() };
            let x = test.features();
            let labels = test.labels_f64();
            let mut rows = Vec::new();
            for k in ks {
                let t = std::time::Instant::now();
                let mut rng = RandomStream::new(cli.seed, &format!("eval/k={k}"));
                let r = eval_at_availability(model.as_ref(), &x, &labels, n_st, k, a.policy, a.pooled, &mut rng)?;
                log::info!("k={k}: RMSE {:.5} over {} combinations", r.rmse, r.combinations);
                rows.push(MetricsRow {
                    method: name.clone(),
                    available: k,
                    label_ratio: 1.0,
                    seed: cli.seed,
                    pretrain_p_mask: None,
                    sma_p_mask: None,
                    rmse: Some(r.rmse),
                    combinations: r.combinations,
                    error: None,
                    runtime_s: t.elapsed().as_secs_f64(),
                });
            }
            write_rows(&mut ledger, "metrics.csv", &rows)?;
            "evaluate"
        }
        Command::Sweep(a) => {
            if !a.methods.is_empty() {
                cfg.run = a.methods.clone();
            }
            if !a.seeds.is_empty() {
                cfg.sweep.seeds = a.seeds.clone();
            }
            cfg.validate()?;
            let data_cfg = cfg.data.clone();
            let mut source = |seed: u64| build_experiment_data(&data_cfg, seed).map(Arc::new);
            let mut cache = ModelCache::new();
            let rows = run_grid(&cfg.sweep, &cfg.run, &cfg.methods, &mut source, &mut cache)?;
            let failed = rows.iter().filter(|r| r.rmse.is_none()).count();
            if failed > 0 {
                log::warn!("{failed} of {} cells failed; see the error column", rows.len());
            }
            write_rows(&mut ledger, "metrics.csv", &rows)?;
            write_reports(&mut ledger, &rows)?;
            "sweep"
        }
        Command::PcaExport(a) => {
            ledger.read(&a.extractor)?;
            let (fx, _) = load_extractor(&a.extractor)?;
            let train = load_input(&mut ledger, &a.train)?;
            let test = load_input(&mut ledger, &a.test)?;
            let n_st = fx.n_stations();
            let pca = Pca::fit(&fx.embed(&train.features())?, 2)?;
            let mut rows = pca_rows("train", &pca.transform(&fx.embed(&train.features())?)?, &train.labels_f64(), &format!("k={n_st}"))?;
            let ks: Vec<usize> = if a.k.is_empty() { vec![n_st] } else { a.k.clone() };
            let mut rng = RandomStream::new(cli.seed, "pca/masks");
            for k in ks {
                if k == 0 || k > n_st {
                    bail!("availability {k} outside [1, {n_st}]");
                }
                let x = random_availability(&test.features(), n_st, k, &mut rng)?;
                rows.extend(pca_rows("test", &pca.transform(&fx.embed(&x)?)?, &test.labels_f64(), &format!("k={k}"))?);
            }
            let path = ledger.path("pca.csv");
            write_pca_csv(BufWriter::new(File::create(&path)?), &rows)?;
            ledger.wrote(&path)?;
            "pca-export"
        }
        Command::Report(a) => {
            ledger.read(&a.metrics)?;
            let rows = read_metrics_csv(File::open(&a.metrics)?)?;
            write_reports(&mut ledger, &rows)?;
            "report"
        }
    };
    ledger.finish(name, cli, &cfg)
}

fn override_train(tc: &mut csi_fusion::nnkit::TrainConfig, lr: Option<f64>, batch: Option<usize>, epochs: Option<usize>) {
    if let Some(v) = lr {
        tc.learning_rate = v;
    }
    if let Some(v) = batch {
        tc.batch_size = v;
    }
    if let Some(v) = epochs {
        tc.max_epochs = v;
    }
}

/// Each row keeps a uniformly random set of `k` stations.
fn random_availability(x: &Matrix, n_st: usize, k: usize, rng: &mut RandomStream) -> Result<Matrix> {
    let width = x.cols() / n_st;
    let mut out = x.clone();
    for i in 0..x.rows() {
        let mut ids: Vec<usize> = (0..n_st).collect();
        rng.shuffle(&mut ids);
        let mask = MaskSet::from_indices(ids[k..].iter().copied(), n_st)?;
        out.row_mut(i).copy_from_slice(mask_rows(&x.select_rows(&[i]), mask, width).row(0));
    }
    Ok(out)
}

fn write_rows<T: serde::Serialize>(ledger: &mut Ledger, name: &str, rows: &[T]) -> Result<()> {
    let path = ledger.path(name);
    write_csv(BufWriter::new(File::create(&path)?), rows)?;
    ledger.wrote(&path)
}

fn write_reports(ledger: &mut Ledger, rows: &[MetricsRow]) -> Result<()> {
    let summary = summarize(rows);
    write_rows(ledger, "summary.csv", &summary)?;
    let cells = heatmap(&summary);
    if !cells.is_empty() {
        write_rows(ledger, "heatmap.csv", &cells)?;
    }
    Ok(())
}
