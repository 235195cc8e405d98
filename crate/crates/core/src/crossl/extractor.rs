use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nnkit::{Grads, MlpStack, Mode, Parameterized, Tape};
use crate::rng::RandomStream;
use crate::types::{MaskSet, MultiStationSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderKind {
    Identity,
    /// Per-station `dense -> ReLU -> BN -> dropout` blocks of these widths.
    Mlp { widths: Vec<usize> },
}

/// Architecture of a [`FeatureExtractor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub n_stations: usize,
    pub k: usize,
    pub encoder: EncoderKind,
    /// Aggregator block widths; the last one is the embedding dimension.
    /// Empty means the aggregator is the identity.
    pub aggregator_widths: Vec<usize>,
    pub dropout: f64,
}

impl ExtractorSpec {
    pub fn identity_encoders(n_stations: usize, k: usize, aggregator_widths: Vec<usize>, dropout: f64) -> Self {
        Self { n_stations, k, encoder: EncoderKind::Identity, aggregator_widths, dropout }
    }
}

/// Per-station encoders followed by a shared aggregator over the
/// concatenated station embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    n_stations: usize,
    k: usize,
    encoders: Vec<MlpStack>,
    aggregator: MlpStack,
}

/// Intermediates of an extractor forward pass.
#[derive(Debug, Clone)]
pub struct ExtractorTape {
    encoders: Vec<Tape>,
    aggregator: Tape,
    masks: Option<Vec<MaskSet>>,
}

impl ExtractorTape {
    pub fn kink_signature(&self) -> u64 {
        self.encoders.iter().chain(std::iter::once(&self.aggregator)).fold(0u64, |h, t| {
            h.rotate_left(13) ^ t.kink_signature()
        })
    }
}

/// Per-station embeddings of a batch: one `n x q` matrix per station.
#[derive(Debug, Clone)]
pub struct StationEmbeddings {
    pub blocks: Vec<Matrix>,
    tapes: Vec<Tape>,
}

impl StationEmbeddings {
    pub fn kink_signature(&self) -> u64 {
        self.tapes.iter().fold(0u64, |h, t| h.rotate_left(13) ^ t.kink_signature())
    }
}

impl FeatureExtractor {
    pub fn new(spec: &ExtractorSpec, rng: &mut RandomStream) -> Result<Self> {
        if spec.n_stations == 0 || spec.k == 0 {
            return Err(Error::Config("extractor needs at least one station and one subcarrier".into()));
        }
        let mut encoders = Vec::with_capacity(spec.n_stations);
        for d in 0..spec.n_stations {
            encoders.push(match &spec.encoder {
                EncoderKind::Identity => MlpStack::identity(spec.k),
                EncoderKind::Mlp { widths } => {
                    MlpStack::blocks(spec.k, widths, spec.dropout, &mut rng.derive(&format!("encoder-{d}")))?
                }
            });
        }
        let q = encoders[0].output_width();
        let aggregator =
            MlpStack::blocks(spec.n_stations * q, &spec.aggregator_widths, spec.dropout, &mut rng.derive("aggregator"))?;
        Self::from_parts(spec.n_stations, spec.k, encoders, aggregator)
    }

    pub fn from_parts(n_stations: usize, k: usize, encoders: Vec<MlpStack>, aggregator: MlpStack) -> Result<Self> {
        if encoders.len() != n_stations || n_stations == 0 {
            return Err(Error::Shape(format!("{} encoders for {n_stations} stations", encoders.len())));
        }
        let q = encoders[0].output_width();
        if encoders.iter().any(|e| e.input_width() != k || e.output_width() != q) {
            return Err(Error::Shape("encoder widths are inconsistent".into()));
        }
        if aggregator.input_width() != n_stations * q {
            return Err(Error::Shape(format!(
                "aggregator expects {} inputs, stations provide {}",
                aggregator.input_width(),
                n_stations * q
            )));
        }
        Ok(Self { n_stations, k, encoders, aggregator })
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input_width(&self) -> usize {
        self.n_stations * self.k
    }

    /// Width of one station embedding.
    pub fn station_width(&self) -> usize {
        self.encoders[0].output_width()
    }

    pub fn embedding_dim(&self) -> usize {
        self.aggregator.output_width()
    }

    pub fn encoders(&self) -> &[MlpStack] {
        &self.encoders
    }

    pub fn aggregator(&self) -> &MlpStack {
        &self.aggregator
    }

    pub fn has_identity_encoders(&self) -> bool {
        self.encoders.iter().all(|e| e.layers().is_empty())
    }

    pub fn into_parts(self) -> (Vec<MlpStack>, MlpStack) {
        (self.encoders, self.aggregator)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!("extractor expects {} columns, got {}", self.input_width(), x.cols())));
        }
        Ok(())
    }

    /// Encodes each station block of `x` (rows are flattened samples).
    pub fn encode_batch(&self, x: &Matrix, mode: Mode, rng: &mut RandomStream) -> Result<StationEmbeddings> {
        self.check_input(x)?;
        let mut blocks = Vec::with_capacity(self.n_stations);
        let mut tapes = Vec::with_capacity(self.n_stations);
        for (d, enc) in self.encoders.iter().enumerate() {
            let (q, tape) = enc.forward(&x.columns(d * self.k, self.k), mode, rng)?;
            blocks.push(q);
            tapes.push(tape);
        }
        Ok(StationEmbeddings { blocks, tapes })
    }

    /// Zeroes masked station embeddings row by row, concatenates in station
    /// order and runs the aggregator.
    pub fn aggregate_batch(
        &self,
        q: &StationEmbeddings,
        masks: Option<&[MaskSet]>,
        mode: Mode,
        rng: &mut RandomStream,
    ) -> Result<(Matrix, Tape)> {
        let mut cat = Matrix::hconcat(&q.blocks)?;
        if let Some(masks) = masks {
            if masks.len() != cat.rows() {
                return Err(Error::Shape(format!("{} masks for {} rows", masks.len(), cat.rows())));
            }
            zero_masked_blocks(&mut cat, masks, self.station_width());
        }
        self.aggregator.forward(&cat, mode, rng)
    }

    /// Full forward with optional per-row embedding masks.
    pub fn forward(
        &self,
        x: &Matrix,
        masks: Option<&[MaskSet]>,
        mode: Mode,
        rng: &mut RandomStream,
    ) -> Result<(Matrix, ExtractorTape)> {
        let q = self.encode_batch(x, mode, rng)?;
        let (z, agg_tape) = self.aggregate_batch(&q, masks, mode, rng)?;
        Ok((z, ExtractorTape { encoders: q.tapes, aggregator: agg_tape, masks: masks.map(<[MaskSet]>::to_vec) }))
    }

    /// Inference-mode embeddings of every row of `x`.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let blocks: Vec<Matrix> = self
            .encoders
            .iter()
            .enumerate()
            .map(|(d, e)| e.infer(&x.columns(d * self.k, self.k)))
            .collect::<Result<_>>()?;
        self.aggregator.infer(&Matrix::hconcat(&blocks)?)
    }

    /// Gradient of the aggregator for one view, returned as gradients with
    /// respect to each (unmasked) station embedding plus aggregator grads.
    pub fn aggregator_backward(
        &self,
        tape: &Tape,
        masks: Option<&[MaskSet]>,
        grad_z: &Matrix,
    ) -> Result<(Vec<Matrix>, Grads)> {
        let (mut d_cat, grads) = self.aggregator.backward(tape, grad_z)?;
        let q = self.station_width();
        if let Some(masks) = masks {
            zero_masked_blocks(&mut d_cat, masks, q);
        }
        Ok(((0..self.n_stations).map(|d| d_cat.columns(d * q, q)).collect(), grads))
    }

    /// Backward through the encoders given per-station embedding gradients.
    /// Returns gradients in parameter order (encoders, then `agg_grads`).
    pub fn encoders_backward(&self, q: &StationEmbeddings, d_q: &[Matrix], agg_grads: Grads) -> Result<Grads> {
        let mut out = Grads(Vec::new());
        for ((enc, tape), g) in self.encoders.iter().zip(&q.tapes).zip(d_q) {
            out.extend(enc.backward(tape, g)?.1);
        }
        out.extend(agg_grads);
        Ok(out)
    }

    /// Reverse pass of [`forward`](Self::forward).
    pub fn backward(&self, tape: &ExtractorTape, grad_z: &Matrix) -> Result<Grads> {
        let (d_q, agg) = self.aggregator_backward(&tape.aggregator, tape.masks.as_deref(), grad_z)?;
        let mut out = Grads(Vec::new());
        for ((enc, t), g) in self.encoders.iter().zip(&tape.encoders).zip(&d_q) {
            out.extend(enc.backward(t, g)?.1);
        }
        out.extend(agg);
        Ok(out)
    }

    pub fn commit_encoder_stats(&mut self, q: &StationEmbeddings) {
        for (enc, tape) in self.encoders.iter_mut().zip(&q.tapes) {
            enc.commit_batch_stats(tape);
        }
    }

    pub fn commit_aggregator_stats(&mut self, tape: &Tape) {
        self.aggregator.commit_batch_stats(tape);
    }

    pub fn commit_batch_stats(&mut self, tape: &ExtractorTape) {
        for (enc, t) in self.encoders.iter_mut().zip(&tape.encoders) {
            enc.commit_batch_stats(t);
        }
        self.aggregator.commit_batch_stats(&tape.aggregator);
    }

    /// Per-station embeddings of a single sample. Missing stations are encoded
    /// from their zero placeholder like any other block.
    pub fn encode_stations(&self, x: &MultiStationSample, mode: Mode, rng: &mut RandomStream) -> Result<Vec<Vec<f64>>> {
        self.check_sample(x)?;
        let row = sample_row(x);
        let q = self.encode_batch(&row, mode, rng)?;
        Ok(q.blocks.into_iter().map(Matrix::into_vec).collect())
    }

    /// Global embedding from a list of (already masked) station embeddings.
    pub fn aggregate(&self, q: &[Vec<f64>], mode: Mode, rng: &mut RandomStream) -> Result<Vec<f64>> {
        let width = self.station_width();
        if q.len() != self.n_stations || q.iter().any(|v| v.len() != width) {
            return Err(Error::Shape(format!("expected {} station embeddings of width {width}", self.n_stations)));
        }
        let cat = Matrix::from_vec(1, self.n_stations * width, q.concat())?;
        Ok(self.aggregator.forward(&cat, mode, rng)?.0.into_vec())
    }

    fn check_sample(&self, x: &MultiStationSample) -> Result<()> {
        if x.n_stations() != self.n_stations || x.k() != self.k {
            return Err(Error::Shape(format!(
                "sample is {}x{}, extractor expects {}x{}",
                x.n_stations(),
                x.k(),
                self.n_stations,
                self.k
            )));
        }
        Ok(())
    }
}

fn zero_masked_blocks(m: &mut Matrix, masks: &[MaskSet], width: usize) {
    for (i, mask) in masks.iter().enumerate() {
        let row = m.row_mut(i);
        for d in mask.iter() {
            row[d * width..(d + 1) * width].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// A single sample as a one-row matrix.
pub fn sample_row(x: &MultiStationSample) -> Matrix {
    Matrix::from_vec(1, x.values().len(), x.values().iter().map(|&v| f64::from(v)).collect())
        .expect("row length matches")
}

impl Parameterized for FeatureExtractor {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        for e in &self.encoders {
            e.visit_params(f);
        }
        self.aggregator.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for e in &mut self.encoders {
            e.visit_params_mut(f);
        }
        self.aggregator.visit_params_mut(f);
    }
}
