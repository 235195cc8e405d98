use super::augment::AugmentConfig;
use super::model::{train_on_set, Predictor, SensingModel, TrainingSet};
use crate::crossl::{ExtractorSpec, ExtractorTape, FeatureExtractor};
use crate::error::{Error, Result};
use crate::masking::MaskSampler;
use crate::matrix::Matrix;
use crate::nnkit::{
    fit, AdamConfig, AdamState, BatchNorm, Dense, Evaluation, FitReport, Grads, Layer, LossFn, MaskedMse, MlpStack, Mode,
    Parameterized, Tape, TrainConfig,
};
use crate::pipeline::Dataset;
use crate::rng::RandomStream;
use crate::types::{MaskSet, MultiStationSample};

/// One single-station model per station; predictions are averaged over all
/// members, including those of missing stations (which see zero input).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputEnsemble {
    pub members: Vec<SensingModel>,
    k: usize,
}

impl OutputEnsemble {
    pub fn new(members: Vec<SensingModel>, k: usize) -> Result<Self> {
        if members.is_empty() || members.iter().any(|m| m.input_width() != k) {
            return Err(Error::Shape("ensemble members must each take one station block".into()));
        }
        Ok(Self { members, k })
    }

    /// Per-member predictions, one vector per station.
    pub fn member_predictions(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        if x.cols() != self.members.len() * self.k {
            return Err(Error::Shape(format!("ensemble expects {} columns", self.members.len() * self.k)));
        }
        self.members.iter().enumerate().map(|(d, m)| m.predict_rows(&x.columns(d * self.k, self.k))).collect()
    }
}

impl Predictor for OutputEnsemble {
    fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        let per = self.member_predictions(x)?;
        let count = per.len() as f64;
        Ok((0..x.rows()).map(|i| per.iter().map(|p| p[i]).sum::<f64>() / count).collect())
    }
}

pub fn train_ensemble(
    labeled: &Dataset,
    aug: &AugmentConfig,
    tc: &TrainConfig,
    rng: &RandomStream,
) -> Result<(OutputEnsemble, Vec<FitReport>)> {
    let set = TrainingSet::from_dataset(labeled)?;
    let mut members = Vec::with_capacity(set.n_stations);
    let mut reports = Vec::with_capacity(set.n_stations);
    for d in 0..set.n_stations {
        let member_rng = rng.derive(&format!("member-{d}"));
        let model = SensingModel::raw_input(1, set.k, &mut member_rng.derive("init"))?;
        let (m, r) = train_on_set(model, &set.station(d), aug, tc, &member_rng.derive("train"))?;
        members.push(m);
        reports.push(r);
    }
    Ok((OutputEnsemble::new(members, set.k)?, reports))
}

/// Encoder-decoder trained to reconstruct masked stations. Only the encoder
/// is kept as a feature extractor; the full pair is also used for
/// inpainting.
#[derive(Debug, Clone, PartialEq)]
pub struct Dae {
    pub encoder: FeatureExtractor,
    pub decoder: MlpStack,
}

impl Dae {
    /// Encoder per `spec`; decoder `dense -> ReLU -> BN -> dropout -> dense`
    /// back to the flattened input width.
    pub fn new(spec: &ExtractorSpec, rng: &mut RandomStream) -> Result<Self> {
        let encoder = FeatureExtractor::new(spec, &mut rng.derive("encoder"))?;
        let l = encoder.embedding_dim();
        let hidden = spec.aggregator_widths.first().copied().unwrap_or(l);
        let out = encoder.input_width();
        let mut dr = rng.derive("decoder");
        let decoder = MlpStack::new(
            l,
            vec![
                Layer::Dense(Dense::init(l, hidden, &mut dr)),
                Layer::Relu,
                Layer::BatchNorm(BatchNorm::new(hidden)),
                Layer::Dropout { rate: spec.dropout },
                Layer::Dense(Dense::init(hidden, out, &mut dr)),
            ],
        )?;
        Ok(Self { encoder, decoder })
    }

    /// Inference-mode reconstruction of every row.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decoder.infer(&self.encoder.embed(x)?)
    }
}

impl Parameterized for Dae {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        self.encoder.visit_params(f);
        self.decoder.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_params_mut(f);
        self.decoder.visit_params_mut(f);
    }
}

/// Per-row coordinates that count towards the reconstruction loss: stations
/// masked by `masks` that were observed in the original sample.
pub fn reconstruction_weights(
    masks: &[MaskSet],
    observed_missing: &[MaskSet],
    n_stations: usize,
    k: usize,
) -> Matrix {
    let mut w = Matrix::zeros(masks.len(), n_stations * k);
    for (i, (m, om)) in masks.iter().zip(observed_missing).enumerate() {
        let row = w.row_mut(i);
        for d in m.difference(*om).iter() {
            row[d * k..(d + 1) * k].iter_mut().for_each(|v| *v = 1.0);
        }
    }
    w
}

struct DaeStep {
    loss: f64,
    grads: Grads,
    encoder_tape: ExtractorTape,
    decoder_tape: Tape,
}

fn dae_step(dae: &Dae, x: &Matrix, masked_input: &Matrix, weights: &Matrix, mode: Mode, rng: &mut RandomStream) -> Result<DaeStep> {
    let (z, encoder_tape) = dae.encoder.forward(masked_input, None, mode, rng)?;
    let (recon, decoder_tape) = dae.decoder.forward(&z, mode, rng)?;
    let (loss, g) = MaskedMse::new(x, weights)?.evaluate(&recon)?;
    let (dz, dec_grads) = dae.decoder.backward(&decoder_tape, &g)?;
    let mut grads = dae.encoder.backward(&encoder_tape, &dz)?;
    grads.extend(dec_grads);
    Ok(DaeStep { loss, grads, encoder_tape, decoder_tape })
}

/// Masked reconstruction loss of `dae` on a corrupted batch, with gradients.
/// Dropout masks are redrawn from `seed` on every call.
pub fn dae_evaluation(dae: &Dae, x: &Matrix, masked_input: &Matrix, weights: &Matrix, mode: Mode, seed: u64) -> Result<Evaluation> {
    let s = dae_step(dae, x, masked_input, weights, mode, &mut RandomStream::new(seed, "dae-eval"))?;
    Ok(Evaluation {
        loss: s.loss,
        grads: s.grads.flat(),
        kink_signature: s.encoder_tape.kink_signature() ^ s.decoder_tape.kink_signature().rotate_left(23),
    })
}

/// Trains a denoising autoencoder whose corruption is station-wise masking
/// with probability `p_mask`.
pub fn train_dae(
    unlabeled: &Dataset,
    spec: &ExtractorSpec,
    p_mask: f64,
    tc: &TrainConfig,
    rng: &RandomStream,
) -> Result<(Dae, FitReport)> {
    if unlabeled.meta.n_stations != spec.n_stations || unlabeled.meta.k != spec.k {
        return Err(Error::Shape("dataset layout does not match the encoder spec".into()));
    }
    let n = unlabeled.len();
    if n < 2 {
        return Err(Error::Empty(format!("DAE training needs at least 2 samples, got {n}")));
    }
    let sampler = MaskSampler::new(p_mask, spec.n_stations)?;
    let x = unlabeled.features();
    let observed: Vec<_> = unlabeled.samples.iter().map(MultiStationSample::observed_missing).collect();
    let tc = TrainConfig { batch_size: tc.batch_size.min(n), min_last_batch: tc.min_last_batch.max(2), ..tc.clone() };
    let adam = AdamConfig::new(tc.learning_rate);
    let mut model = Dae::new(spec, &mut rng.derive("init"))?;
    let mut opt = AdamState::new(&model);
    let mut mask_rng = rng.derive("masks");
    let mut drop_rng = rng.derive("dropout");
    let mut batch_rng = rng.derive("batches");
    let (ns, k) = (spec.n_stations, spec.k);
    let report = fit(&mut model, n, &tc, &mut batch_rng, |m, idx| {
        let xb = x.select_rows(idx);
        let masks: Vec<_> = idx.iter().map(|_| sampler.sample(&mut mask_rng)).collect();
        let obs: Vec<_> = idx.iter().map(|&i| observed[i]).collect();
        let mut input = xb.clone();
        for (r, mask) in masks.iter().enumerate() {
            let row = input.row_mut(r);
            for d in mask.iter() {
                row[d * k..(d + 1) * k].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let w = reconstruction_weights(&masks, &obs, ns, k);
        let step = dae_step(m, &xb, &input, &w, Mode::Train, &mut drop_rng)?;
        opt.step(&adam, m, &step.grads)?;
        m.encoder.commit_batch_stats(&step.encoder_tape);
        m.decoder.commit_batch_stats(&step.decoder_tape);
        Ok(step.loss)
    })?;
    Ok((model, report))
}

/// Reconstructs missing stations with a DAE, splices them into the input and
/// then runs a supervised model.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintingPredictor {
    pub reconstructor: Dae,
    pub model: SensingModel,
}

impl InpaintingPredictor {
    /// Copy of `x` where every all-zero station block is replaced by its
    /// reconstruction. Other coordinates are untouched.
    pub fn inpaint(&self, x: &Matrix) -> Result<Matrix> {
        let (n_st, k) = (self.reconstructor.encoder.n_stations(), self.reconstructor.encoder.k());
        let missing: Vec<Vec<usize>> = (0..x.rows())
            .map(|i| (0..n_st).filter(|&d| x.row(i)[d * k..(d + 1) * k].iter().all(|&v| v == 0.0)).collect())
            .collect();
        if missing.iter().all(Vec::is_empty) {
            return Ok(x.clone());
        }
        let recon = self.reconstructor.reconstruct(x)?;
        let mut out = x.clone();
        for (i, stations) in missing.iter().enumerate() {
            for &d in stations {
                out.row_mut(i)[d * k..(d + 1) * k].copy_from_slice(&recon.row(i)[d * k..(d + 1) * k]);
            }
        }
        Ok(out)
    }
}

impl Predictor for InpaintingPredictor {
    fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.model.predict_rows(&self.inpaint(x)?)
    }
}
