//! Binary checkpoints: magic, version, a JSON manifest describing every
//! stack, then little-endian `f32` tensors, then a CRC32 of everything before
//! it.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::adam::AdamState;
use super::layers::{BatchNorm, Dense, Layer, LayerSpec};
use super::params::{Grads, Parameterized};
use super::stack::MlpStack;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 8] = b"CSIFCKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Caller-defined metadata (architecture choices, configuration, seed).
    pub manifest: serde_json::Value,
    pub stacks: Vec<MlpStack>,
    /// Optimizer moments for the concatenation of all stacks, in order.
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct StackManifest {
    input_width: usize,
    layers: Vec<LayerSpec>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    user: serde_json::Value,
    stacks: Vec<StackManifest>,
    adam: bool,
}

fn put(out: &mut Vec<u8>, xs: &[f64]) {
    for &x in xs {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect())
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            user: self.manifest.clone(),
            stacks: self
                .stacks
                .iter()
                .map(|s| StackManifest { input_width: s.input_width(), layers: s.layers().iter().map(Layer::spec).collect() })
                .collect(),
            adam: self.adam.is_some(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for s in &self.stacks {
            for l in s.layers() {
                match l {
                    Layer::Dense(d) => {
                        put(&mut out, d.weight.as_slice());
                        put(&mut out, &d.bias);
                    }
                    Layer::BatchNorm(b) => {
                        put(&mut out, &b.gamma);
                        put(&mut out, &b.beta);
                        put(&mut out, &b.running_mean);
                        put(&mut out, &b.running_var);
                    }
                    Layer::Relu | Layer::Dropout { .. } => {}
                }
            }
        }
        if let Some(a) = &self.adam {
            let expected: usize = self.stacks.iter().map(|s| Grads::zeros_like(s).0.len()).sum();
            if a.m.len() != expected || a.v.len() != expected {
                return Err(Error::Shape("optimizer state does not match the stacks".into()));
            }
            out.extend_from_slice(&a.t.to_le_bytes());
            for t in a.m.iter().chain(&a.v) {
                put(&mut out, t);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 2 + 8 + 4 {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 10 };
        let len_bytes = r.take(8)?;
        let json_len = usize::try_from(u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")))
            .map_err(|_| Error::Format("manifest length overflow".into()))?;
        let header: Header = serde_json::from_slice(r.take(json_len)?)?;
        let mut stacks = Vec::with_capacity(header.stacks.len());
        for sm in &header.stacks {
            let mut layers = Vec::with_capacity(sm.layers.len());
            for spec in &sm.layers {
                layers.push(match *spec {
                    LayerSpec::Dense { input, output } => {
                        let weight = Matrix::from_vec(input, output, r.f32s(input * output)?)?;
                        Layer::Dense(Dense { weight, bias: r.f32s(output)? })
                    }
                    LayerSpec::BatchNorm { width } => {
                        let mut b = BatchNorm::new(width);
                        b.gamma = r.f32s(width)?;
                        b.beta = r.f32s(width)?;
                        b.running_mean = r.f32s(width)?;
                        b.running_var = r.f32s(width)?;
                        Layer::BatchNorm(b)
                    }
                    LayerSpec::Relu => Layer::Relu,
                    LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                });
            }
            stacks.push(MlpStack::new(sm.input_width, layers)?);
        }
        let adam = if header.adam {
            let t = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            let shapes: Vec<usize> =
                stacks.iter().flat_map(|s| Grads::zeros_like(s).0.into_iter().map(|g| g.len())).collect();
            let mut m = Vec::with_capacity(shapes.len());
            for &n in &shapes {
                m.push(r.f32s(n)?);
            }
            let mut v = Vec::with_capacity(shapes.len());
            for &n in &shapes {
                v.push(r.f32s(n)?);
            }
            Some(AdamState { m, v, t })
        } else {
            None
        };
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", body.len() - r.pos)));
        }
        Ok(Self { manifest: header.user, stacks, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Total trainable parameters across all stacks.
    pub fn param_count(&self) -> usize {
        self.stacks.iter().map(Parameterized::param_count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn sample() -> Checkpoint {
        let mut r = RandomStream::new(0, "ckpt");
        let a = MlpStack::blocks(5, &[4, 3], 0.3, &mut r).unwrap();
        let b = MlpStack::mlp_head(3, 6, 1, &mut r).unwrap();
        let mut adam = AdamState::new(&a);
        let more = AdamState::new(&b);
        adam.m.extend(more.m);
        adam.v.extend(more.v);
        adam.t = 7;
        adam.m[0][1] = 0.25;
        Checkpoint { manifest: serde_json::json!({"method": "demo", "seed": 3}), stacks: vec![a, b], adam: Some(adam) }
    }

    /// Rounds every tensor through f32, which is what the payload stores.
    fn rounded(c: &Checkpoint) -> Checkpoint {
        let mut c = c.clone();
        for s in &mut c.stacks {
            for l in s.layers_mut() {
                if let Layer::BatchNorm(b) = l {
                    for t in [&mut b.running_mean, &mut b.running_var] {
                        t.iter_mut().for_each(|x| *x = f64::from(*x as f32));
                    }
                }
            }
            s.visit_params_mut(&mut |t| t.iter_mut().for_each(|x| *x = f64::from(*x as f32)));
        }
        c
    }

    #[test]
    fn roundtrip_preserves_f32_payload() {
        let c = sample();
        let back = Checkpoint::decode(&c.encode().unwrap()).unwrap();
        assert_eq!(back, rounded(&c));
        assert_eq!(back.encode().unwrap(), c.encode().unwrap());
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().encode().unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0x10;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = sample().encode().unwrap();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Version { found: 9, .. })));
        assert!(matches!(Checkpoint::decode(b"NOTACKPT0000000000000000"), Err(Error::Format(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let c = sample();
        c.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), rounded(&c));
    }
}
