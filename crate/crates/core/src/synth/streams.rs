use num_complex::Complex64;

use super::{channel_response, OutageSpec, Scenario, Trajectory};
use crate::error::Result;
use crate::par;
use crate::rng::RandomStream;
use crate::types::{CsiFrame, StationId};

/// All frames received from one station, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiStream {
    pub station: StationId,
    pub frames: Vec<CsiFrame>,
}

impl CsiStream {
    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().map(|f| f.timestamp)
    }
}

/// Silent intervals `[start, end)` of the on/off outage process over
/// `[0, duration]`. Empty when outages are disabled.
pub fn outage_intervals(spec: &OutageSpec, duration: f64, rng: &mut RandomStream) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if !spec.enabled {
        return out;
    }
    let mut t = 0.0;
    loop {
        t += rng.exponential(spec.mean_gap_s);
        if t >= duration {
            break;
        }
        let start = t;
        t += rng.exponential(spec.mean_len_s);
        out.push((start, t.min(duration)));
    }
    out
}

/// Generates one frame stream per station.
///
/// Arrivals are Poisson at `mean_rate_hz`, thinned by the outage process; each
/// frame carries the static paths and the body-scattered path at the walker's position plus circular
/// complex Gaussian noise with `E|n|^2 = noise_std^2`. Every station draws
/// from its own sub-streams, so stations can be generated in parallel.
pub fn gen_csi_streams(scenario: &Scenario, traj: &Trajectory, rng: &RandomStream) -> Result<Vec<CsiStream>> {
    scenario.validate()?;
    par::try_map_indexed(scenario.n_stations, |d| {
        let station = StationId::new(d, scenario.n_stations)?;
        let base = rng.derive(&format!("station-{d}"));
        let mut arrivals = base.derive("arrivals");
        let mut outage_rng = base.derive("outage");
        let mut noise = base.derive("noise");
        let outages = outage_intervals(&scenario.outage, scenario.duration_s, &mut outage_rng);
        let component_std = scenario.noise_std / std::f64::consts::SQRT_2;

        let mut frames = Vec::new();
        let mut t = 0.0;
        let mut next_outage = 0;
        loop {
            t += arrivals.exponential(1.0 / scenario.mean_rate_hz);
            if t > scenario.duration_s {
                break;
            }
            while next_outage < outages.len() && outages[next_outage].1 <= t {
                next_outage += 1;
            }
            if next_outage < outages.len() && outages[next_outage].0 <= t {
                continue;
            }
            if frames.last().is_some_and(|f: &CsiFrame| f.timestamp >= t) {
                continue;
            }
            let mut values = channel_response(traj.position(t), station, scenario)?;
            if scenario.noise_std > 0.0 {
                for v in &mut values {
                    *v += Complex64::new(
                        component_std * noise.standard_normal(),
                        component_std * noise.standard_normal(),
                    );
                }
            }
            frames.push(CsiFrame { station, timestamp: t, values });
        }
        Ok(CsiStream { station, frames })
    })
}
