use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::MAX_STATIONS;

/// Exponential on/off outage process. A station is up for `Exp(mean_gap_s)`
/// seconds, then silent for `Exp(mean_len_s)` seconds, and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageSpec {
    pub enabled: bool,
    pub mean_gap_s: f64,
    pub mean_len_s: f64,
}

/// Attenuation of static propagation paths by the pedestrian's body: a path
/// passing at distance `rho` from the pedestrian is scaled by
/// `1 - depth * exp(-rho^2 / (2 width_m^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowSpec {
    pub depth: f64,
    pub width_m: f64,
}

impl ShadowSpec {
    pub fn disabled() -> Self {
        Self { depth: 0.0, width_m: 0.2 }
    }
}

impl Default for ShadowSpec {
    fn default() -> Self {
        Self { depth: 0.8, width_m: 0.5 }
    }
}

fn default_wall_reflection() -> f64 {
    0.3
}

fn default_body_radius() -> f64 {
    0.3
}

impl OutageSpec {
    pub fn disabled() -> Self {
        Self { enabled: false, mean_gap_s: 120.0, mean_len_s: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_stations: usize,
    pub k_raw: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub ap_position: [f64; 2],
    pub station_positions: Vec<[f64; 2]>,
    /// `(x_max, y_max)` in meters; the room spans `[0, x_max] x [0, y_max]`.
    pub room_extent: [f64; 2],
    pub duration_s: f64,
    pub mean_rate_hz: f64,
    pub outage: OutageSpec,
    pub noise_std: f64,
    /// Amplitude factor of the body-scattered path relative to free space.
    pub scattering_coef: f64,
    /// Closest the walker gets to the side walls, as a fraction of `x_max`.
    pub walk_margin: f64,
    /// Amplitude reflection coefficient of the four walls (first-order
    /// reflections only); 0 leaves line of sight as the only static path.
    #[serde(default = "default_wall_reflection")]
    pub wall_reflection: f64,
    #[serde(default)]
    pub shadowing: ShadowSpec,
    /// Softens the scattered path's distance terms so its amplitude stays
    /// finite when the walker passes next to the AP or a station.
    #[serde(default = "default_body_radius")]
    pub body_radius_m: f64,
}

impl Default for Scenario {
    /// Office-like room: AP in the middle, eight stations around the edge.
    fn default() -> Self {
        let (w, h) = (3.4, 3.0);
        let station_positions = vec![
            [0.1, 0.1],
            [w / 2.0, 0.1],
            [w - 0.1, 0.1],
            [w - 0.1, h / 2.0],
            [w - 0.1, h - 0.1],
            [w / 2.0, h - 0.1],
            [0.1, h - 0.1],
            [0.1, h / 2.0],
        ];
        Self {
            n_stations: 8,
            k_raw: 64,
            carrier_hz: 2.437e9,
            bandwidth_hz: 20e6,
            ap_position: [w / 2.0, h / 2.0],
            station_positions,
            room_extent: [w, h],
            duration_s: 600.0,
            mean_rate_hz: 20.0,
            outage: OutageSpec { enabled: true, mean_gap_s: 60.0, mean_len_s: 3.0 },
            noise_std: 0.02,
            scattering_coef: 0.02,
            walk_margin: 0.166,
            wall_reflection: default_wall_reflection(),
            shadowing: ShadowSpec::default(),
            body_radius_m: default_body_radius(),
        }
    }
}

impl Scenario {
    /// The bare two-path channel: line of sight plus the body-scattered path,
    /// without wall reflections or shadowing.
    pub fn two_path(mut self) -> Self {
        self.wall_reflection = 0.0;
        self.shadowing = ShadowSpec::disabled();
        self
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.room_extent[0]).contains(&p[0]) && (0.0..=self.room_extent[1]).contains(&p[1])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_stations == 0 || self.n_stations > MAX_STATIONS {
            return bad(format!("n_stations {} not in 1..={MAX_STATIONS}", self.n_stations));
        }
        if self.station_positions.len() != self.n_stations {
            return bad(format!(
                "{} station positions for {} stations",
                self.station_positions.len(),
                self.n_stations
            ));
        }
        if self.k_raw == 0 {
            return bad("k_raw must be positive".into());
        }
        if !(self.room_extent[0] > 0.0 && self.room_extent[1] > 0.0) {
            return bad("room extent must be positive".into());
        }
        if !self.contains(self.ap_position) {
            return bad("AP outside the room".into());
        }
        if let Some(p) = self.station_positions.iter().find(|p| !self.contains(**p)) {
            return bad(format!("station at {p:?} outside the room"));
        }
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        if !(self.mean_rate_hz > 0.0) {
            return bad("mean_rate_hz must be positive".into());
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return bad("carrier and bandwidth must be positive".into());
        }
        if !(self.noise_std >= 0.0 && self.scattering_coef >= 0.0) {
            return bad("noise_std and scattering_coef must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.wall_reflection) {
            return bad("wall_reflection must lie in [0, 1]".into());
        }
        if !((0.0..=1.0).contains(&self.shadowing.depth) && self.shadowing.width_m > 0.0) {
            return bad("shadowing depth must lie in [0, 1] and width be positive".into());
        }
        if !(self.body_radius_m >= 0.0) {
            return bad("body_radius_m must be non-negative".into());
        }
        if self.outage.enabled && !(self.outage.mean_gap_s > 0.0 && self.outage.mean_len_s > 0.0) {
            return bad("outage means must be positive".into());
        }
        if !(0.0..0.5).contains(&self.walk_margin) {
            return bad("walk_margin must lie in [0, 0.5)".into());
        }
        Ok(())
    }

    /// Stable content hash used as dataset provenance.
    pub fn content_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        Scenario::default().validate().unwrap();
    }

    #[test]
    fn rejects_station_outside_room() {
        let mut s = Scenario::default();
        s.station_positions[0] = [5.0, 1.0];
        assert!(s.validate().is_err());
        let s = Scenario { duration_s: 0.0, ..Scenario::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::default();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.noise_std = 0.5;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
