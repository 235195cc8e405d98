//! Text formats written by the `simulate` command.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CsiStream, Scenario, Trajectory};
use crate::error::{Error, Result};
use crate::types::{CsiFrame, StationId};

/// Sidecar describing a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetadata {
    pub scenario: Scenario,
    pub seed: u64,
    pub scenario_hash: u64,
    pub trajectory: Trajectory,
}

pub fn write_metadata(path: &Path, meta: &SimMetadata) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, meta)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<SimMetadata> {
    let meta: SimMetadata = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    meta.scenario.validate()?;
    Ok(meta)
}

/// One row per frame: `station,timestamp,re0,im0,re1,im1,...`. Floats use the
/// shortest representation that parses back to the identical value.
pub fn write_frames_csv(path: &Path, streams: &[CsiStream], k_raw: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["station".to_string(), "timestamp".to_string()];
    for k in 0..k_raw {
        header.push(format!("re{k}"));
        header.push(format!("im{k}"));
    }
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(2 + 2 * k_raw);
    for stream in streams {
        for f in &stream.frames {
            rec.clear();
            rec.push(f.station.index().to_string());
            rec.push(f.timestamp.to_string());
            for v in &f.values {
                rec.push(v.re.to_string());
                rec.push(v.im.to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_frames_csv(path: &Path, n_stations: usize, k_raw: usize) -> Result<Vec<CsiStream>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut streams: Vec<CsiStream> = (0..n_stations)
        .map(|d| Ok(CsiStream { station: StationId::new(d, n_stations)?, frames: Vec::new() }))
        .collect::<Result<_>>()?;
    let parse = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}"))) };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 + 2 * k_raw {
            return Err(Error::Format(format!("row {line}: {} columns, expected {}", rec.len(), 2 + 2 * k_raw)));
        }
        let d: usize = rec[0].parse().map_err(|_| Error::Format(format!("row {line}: bad station")))?;
        let station = StationId::new(d, n_stations)?;
        let timestamp = parse(&rec[1])?;
        let values = (0..k_raw)
            .map(|k| Ok(Complex64::new(parse(&rec[2 + 2 * k])?, parse(&rec[3 + 2 * k])?)))
            .collect::<Result<Vec<_>>>()?;
        let stream = &mut streams[d];
        if stream.frames.last().is_some_and(|f| f.timestamp >= timestamp) {
            return Err(Error::Format(format!("row {line}: timestamps not increasing for {station}")));
        }
        stream.frames.push(CsiFrame { station, timestamp, values });
    }
    Ok(streams)
}

/// `t,x,y,label` rows sampled at `rate_hz`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, rate_hz: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["t", "x", "y", "label"])?;
    let n = (traj.duration_s * rate_hz).floor() as usize;
    for i in 0..=n {
        let t = i as f64 / rate_hz;
        let [x, y] = traj.position(t);
        w.write_record([t.to_string(), x.to_string(), y.to_string(), traj.label(t).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
