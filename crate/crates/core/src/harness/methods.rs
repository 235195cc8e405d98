use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::crossl::{pretrain, EncoderKind, ExtractorSpec, FeatureExtractor, VicregWeights};
use crate::downstream::{
    train_dae, train_downstream, train_ensemble, train_naive, AugStrategy, AugmentConfig, ConstantPredictor,
    InpaintingPredictor, NaiveVariant, Predictor, SensingModel, TrainMode,
};
use crate::error::{Error, Result};
use crate::nnkit::TrainConfig;
use crate::pipeline::Dataset;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Constant,
    #[serde(rename = "naive")]
    NaiveSupervised,
    #[serde(rename = "ensemble")]
    OutputEnsemble,
    Sma,
    RandomErase,
    Inpainting,
    Dae,
    #[serde(rename = "crossl")]
    CrossL,
    /// Pre-training with embedding masking, then downstream training with
    /// station-wise masking augmentation.
    Proposed,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Constant,
        Method::NaiveSupervised,
        Method::OutputEnsemble,
        Method::Sma,
        Method::RandomErase,
        Method::Inpainting,
        Method::Dae,
        Method::CrossL,
        Method::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Constant => "constant",
            Method::NaiveSupervised => "naive",
            Method::OutputEnsemble => "ensemble",
            Method::Sma => "sma",
            Method::RandomErase => "random_erase",
            Method::Inpainting => "inpainting",
            Method::Dae => "dae",
            Method::CrossL => "crossl",
            Method::Proposed => "proposed",
        }
    }

    /// Whether training consumes a pre-trained extractor.
    pub fn uses_pretraining(self) -> bool {
        matches!(self, Method::CrossL | Method::Proposed)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaiveKind {
    RawConcat,
    FreshExtractor,
}

/// Every knob the methods need. Presets cover the two reference
/// environments and a reduced desk-scale variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub encoder: EncoderKind,
    pub aggregator_widths: Vec<usize>,
    pub dropout: f64,
    pub vicreg: VicregWeights,
    pub pretrain_p_mask: f64,
    pub pretrain: TrainConfig,
    pub dae_p_mask: f64,
    pub dae: TrainConfig,
    pub downstream: TrainConfig,
    /// Training mode for methods built on a pre-trained extractor.
    pub mode: TrainMode,
    pub sma: AugmentConfig,
    pub erase: AugmentConfig,
    pub naive: NaiveKind,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl MethodConfig {
    /// Office environment: frozen extractor, offline augmentation doubling
    /// the training set, head on raw input for the naive baseline.
    pub fn office() -> Self {
        let big = |lr| TrainConfig { min_last_batch: 2, ..TrainConfig::new(lr, 4096) };
        Self {
            encoder: EncoderKind::Identity,
            aggregator_widths: vec![256, 256, 128],
            dropout: 0.3,
            vicreg: VicregWeights::office(),
            pretrain_p_mask: 0.5,
            pretrain: big(1.1e-4),
            dae_p_mask: 0.5,
            dae: big(1.6e-4),
            downstream: big(1e-3),
            mode: TrainMode::Frozen,
            sma: AugmentConfig::sma(0.5, AugStrategy::OfflineDouble),
            erase: AugmentConfig::random_erase(0.4, 0.6, AugStrategy::OfflineDouble),
            naive: NaiveKind::RawConcat,
        }
    }

    /// Factory environment: joint training, online augmentation.
    pub fn factory() -> Self {
        let big = |lr| TrainConfig { min_last_batch: 2, ..TrainConfig::new(lr, 4096) };
        Self {
            vicreg: VicregWeights::factory(),
            pretrain: big(7.8e-4),
            dae: big(6.6e-3),
            downstream: big(2.0e-5),
            mode: TrainMode::Joint,
            sma: AugmentConfig::sma(0.5, AugStrategy::Online),
            erase: AugmentConfig::random_erase(0.4, 0.6, AugStrategy::Online),
            naive: NaiveKind::FreshExtractor,
            ..Self::office()
        }
    }

    /// Office protocol shrunk for a few thousand samples on one CPU core:
    /// narrower aggregator, small batches, capped epochs.
    ///
    /// Dropout is off and the loss weights are the balanced ones: with
    /// dropout on the output embedding the two views can never agree, and
    /// under the office weights training then runs into collapse. Downstream
    /// batches are small so that a 50-label subset still gets several updates
    /// per epoch.
    pub fn desk() -> Self {
        let small = |lr, batch, epochs| TrainConfig {
            max_epochs: epochs,
            patience: 20,
            min_last_batch: 2,
            ..TrainConfig::new(lr, batch)
        };
        Self {
            aggregator_widths: vec![128, 128, 64],
            dropout: 0.0,
            vicreg: VicregWeights::standard(),
            pretrain: small(3e-4, 128, 300),
            dae: small(1e-3, 128, 100),
            downstream: small(1e-3, 16, 400),
            ..Self::office()
        }
    }

    pub fn extractor_spec(&self, n_stations: usize, k: usize) -> ExtractorSpec {
        ExtractorSpec {
            n_stations,
            k,
            encoder: self.encoder.clone(),
            aggregator_widths: self.aggregator_widths.clone(),
            dropout: self.dropout,
        }
    }

    /// FNV-1a of the JSON form; used in cache keys and manifests.
    pub fn content_hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        json.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

/// Pre-trained extractors keyed by (embedding masking rate bits, seed),
/// shared between cells of a grid.
#[derive(Debug, Default)]
pub struct PretrainCache {
    inner: Mutex<BTreeMap<(u64, u64, u64), Arc<FeatureExtractor>>>,
}

impl PretrainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The extractor pre-trained on `unlabeled` with `p_mask` and `seed`,
    /// training it on first use.
    pub fn get_or_train(
        &self,
        cfg: &MethodConfig,
        unlabeled: &Dataset,
        p_mask: f64,
        seed: u64,
    ) -> Result<Arc<FeatureExtractor>> {
        let key = (p_mask.to_bits(), seed, cfg.content_hash());
        if let Some(fx) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(fx));
        }
        let fx = Arc::new(pretrain_extractor(cfg, unlabeled, p_mask, seed)?);
        self.inner.lock().expect("cache lock").insert(key, Arc::clone(&fx));
        Ok(fx)
    }
}

pub fn pretrain_extractor(cfg: &MethodConfig, unlabeled: &Dataset, p_mask: f64, seed: u64) -> Result<FeatureExtractor> {
    let rng = RandomStream::new(seed, &format!("pretrain/p={p_mask}"));
    let spec = cfg.extractor_spec(unlabeled.meta.n_stations, unlabeled.meta.k);
    let fx = FeatureExtractor::new(&spec, &mut rng.derive("init"))?;
    let (fx, report) = pretrain(fx, unlabeled, p_mask, &cfg.vicreg, &cfg.pretrain, &rng.derive("train"))?;
    log::info!(
        "pre-trained extractor (p_mask {p_mask}, seed {seed}): {} epochs, best loss {:.4}",
        report.history.len(),
        report.best_loss
    );
    Ok(fx)
}

/// Training inputs of one grid cell.
pub struct TrainInputs<'a> {
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Dataset,
    pub seed: u64,
    /// Overrides the configured pre-training masking rate.
    pub pretrain_p_mask: Option<f64>,
    /// Overrides the configured SMA masking rate.
    pub sma_p_mask: Option<f64>,
}

/// Trains `method` and returns it as a predictor.
pub fn train_method(
    method: Method,
    cfg: &MethodConfig,
    inputs: &TrainInputs<'_>,
    cache: &PretrainCache,
) -> Result<Arc<dyn Predictor>> {
    let labeled = inputs.labeled;
    let (n_st, k) = (labeled.meta.n_stations, labeled.meta.k);
    let rng = RandomStream::new(inputs.seed, &format!("method/{method}"));
    let none = AugmentConfig::none();
    let mut sma = cfg.sma;
    if let Some(p) = inputs.sma_p_mask {
        sma.p_mask = p;
    }
    let naive_variant = match cfg.naive {
        NaiveKind::RawConcat => NaiveVariant::RawConcat,
        NaiveKind::FreshExtractor => NaiveVariant::FreshExtractor { spec: cfg.extractor_spec(n_st, k) },
    };
    let downstream_on = |fx: FeatureExtractor, aug: &AugmentConfig| -> Result<SensingModel> {
        let model = SensingModel::new(fx, cfg.mode, &mut rng.derive("head"))?;
        Ok(train_downstream(model, labeled, aug, &cfg.downstream, &rng.derive("train"))?.0)
    };
    Ok(match method {
        Method::Constant => Arc::new(ConstantPredictor::default()),
        Method::NaiveSupervised => Arc::new(train_naive(labeled, &naive_variant, &none, &cfg.downstream, &rng)?.0),
        Method::Sma => Arc::new(train_naive(labeled, &naive_variant, &sma, &cfg.downstream, &rng)?.0),
        Method::RandomErase => Arc::new(train_naive(labeled, &naive_variant, &cfg.erase, &cfg.downstream, &rng)?.0),
        Method::OutputEnsemble => Arc::new(train_ensemble(labeled, &none, &cfg.downstream, &rng)?.0),
        Method::Dae => {
            let spec = cfg.extractor_spec(n_st, k);
            let (dae, _) = train_dae(inputs.unlabeled, &spec, cfg.dae_p_mask, &cfg.dae, &rng.derive("dae"))?;
            Arc::new(downstream_on(dae.encoder, &none)?)
        }
        Method::Inpainting => {
            let spec = cfg.extractor_spec(n_st, k);
            let (dae, _) = train_dae(inputs.unlabeled, &spec, cfg.dae_p_mask, &cfg.dae, &rng.derive("inpainter"))?;
            let (model, _) = train_naive(labeled, &naive_variant, &none, &cfg.downstream, &rng)?;
            Arc::new(InpaintingPredictor { reconstructor: dae, model })
        }
        Method::CrossL | Method::Proposed => {
            let p = inputs.pretrain_p_mask.unwrap_or(cfg.pretrain_p_mask);
            let fx = cache.get_or_train(cfg, inputs.unlabeled, p, inputs.seed)?;
            let aug = if method == Method::Proposed { sma } else { none };
            Arc::new(downstream_on((*fx).clone(), &aug)?)
        }
    })
}
