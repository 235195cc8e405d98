//! Binary dataset files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CSIFDSET" | version u16 | split u8 | labeled u8 | n_stations u32 | k u32
//! | count u64 | scenario_hash u64 | seed u64 | split ratios 3 x f32
//! | count x ( n_stations*k x f32 amplitudes | n_stations x u8 missing flags | [f32 label] )
//! | crc32 u32 over every preceding byte
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::dataset::{Dataset, DatasetMeta, Provenance, Split, SplitRatios};
use crate::error::{Error, Result};
use crate::types::{MaskSet, MultiStationSample, MAX_STATIONS};

pub const FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 8] = b"CSIFDSET";
const HEADER_LEN: usize = 56;

fn record_len(n_stations: usize, k: usize, labeled: bool) -> usize {
    n_stations * k * 4 + n_stations + if labeled { 4 } else { 0 }
}

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let m = &d.meta;
    let labeled = d.labels.is_some();
    let mut buf = Vec::with_capacity(HEADER_LEN + d.len() * record_len(m.n_stations, m.k, labeled) + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(m.split.code());
    buf.push(u8::from(labeled));
    buf.extend_from_slice(&(m.n_stations as u32).to_le_bytes());
    buf.extend_from_slice(&(m.k as u32).to_le_bytes());
    buf.extend_from_slice(&(d.len() as u64).to_le_bytes());
    buf.extend_from_slice(&m.provenance.scenario_hash.to_le_bytes());
    buf.extend_from_slice(&m.provenance.seed.to_le_bytes());
    for r in m.split_ratios.0 {
        buf.extend_from_slice(&(r as f32).to_le_bytes());
    }
    debug_assert_eq!(buf.len(), HEADER_LEN);
    for (i, s) in d.samples.iter().enumerate() {
        for v in s.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let missing = s.observed_missing();
        buf.extend((0..m.n_stations).map(|st| u8::from(missing.contains(st))));
        if let Some(labels) = &d.labels {
            buf.extend_from_slice(&labels[i].to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    d.validate()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_dataset(d))?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Format(format!("truncated file: {} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let mut c = Cursor { buf: bytes, pos: 8 };
    let version = c.u16();
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let split = Split::from_code(c.u8())?;
    let labeled = match c.u8() {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad labeled flag {other}"))),
    };
    let n_stations = c.u32() as usize;
    let k = c.u32() as usize;
    let count = c.u64() as usize;
    let scenario_hash = c.u64();
    let seed = c.u64();
    let ratios = [f64::from(c.f32()), f64::from(c.f32()), f64::from(c.f32())];
    if n_stations == 0 || n_stations > MAX_STATIONS {
        return Err(Error::Format(format!("station count {n_stations} out of range")));
    }
    let expected = count
        .checked_mul(record_len(n_stations, k, labeled))
        .and_then(|p| p.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if expected != bytes.len() {
        return Err(Error::Format(format!(
            "payload is {} bytes but the header ({count} samples of {n_stations}x{k}) implies {expected}",
            bytes.len()
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut samples = Vec::with_capacity(count);
    let mut labels = labeled.then(|| Vec::with_capacity(count));
    for i in 0..count {
        let values: Vec<f32> = (0..n_stations * k).map(|_| c.f32()).collect();
        let mut missing = MaskSet::empty();
        for st in 0..n_stations {
            match c.u8() {
                0 => {}
                1 => missing = missing.union(MaskSet::from_bits(1 << st)),
                other => return Err(Error::Format(format!("sample {i}: bad missing flag {other}"))),
            }
        }
        if missing.iter().any(|st| values[st * k..(st + 1) * k].iter().any(|&v| v != 0.0)) {
            return Err(Error::Format(format!("sample {i}: missing station with non-zero values")));
        }
        samples.push(MultiStationSample::from_flat(n_stations, k, values, missing)?);
        if let Some(l) = labels.as_mut() {
            l.push(c.f32());
        }
    }
    let meta = DatasetMeta {
        split,
        n_stations,
        k,
        provenance: Provenance { scenario_hash, seed },
        split_ratios: SplitRatios(ratios),
    };
    Dataset::new(meta, samples, labels, Vec::new())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

/// Human-readable dump: one row per sample with label (if any), per-station
/// missing flags and amplitudes.
pub fn export_csv(d: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    let (n, k) = (d.meta.n_stations, d.meta.k);
    let mut header = vec!["index".to_string(), "time".to_string(), "label".to_string()];
    header.extend((0..n).map(|s| format!("sta{}_missing", s + 1)));
    for s in 0..n {
        header.extend((0..k).map(|j| format!("sta{}_k{j}", s + 1)));
    }
    w.write_record(&header)?;
    for (i, s) in d.samples.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            d.times.get(i).map_or_else(String::new, |t| t.to_string()),
            d.labels.as_ref().map_or_else(String::new, |l| l[i].to_string()),
        ];
        rec.extend((0..n).map(|st| u8::from(s.observed_missing().contains(st)).to_string()));
        rec.extend(s.values().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
