use std::f64::consts::TAU;

use num_complex::Complex64;

use super::Scenario;
use crate::error::{Error, Result};
use crate::types::StationId;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distances below this are clamped to keep path loss finite.
const MIN_DISTANCE_M: f64 = 0.05;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt().max(MIN_DISTANCE_M)
}

/// Absolute frequency of every raw subcarrier, spaced `bandwidth / k_raw`
/// apart with the DC subcarrier (index `k_raw / 2`) at the carrier.
pub fn subcarrier_frequencies(scenario: &Scenario) -> Vec<f64> {
    let spacing = scenario.bandwidth_hz / scenario.k_raw as f64;
    let dc = (scenario.k_raw / 2) as f64;
    (0..scenario.k_raw)
        .map(|k| scenario.carrier_hz + (k as f64 - dc) * spacing)
        .collect()
}

/// A fixed propagation path between AP and station.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticPath {
    pub length_m: f64,
    /// Amplitude before body shadowing.
    pub amplitude: f64,
    /// Polyline vertices from AP to station.
    pub vertices: Vec<[f64; 2]>,
}

/// Line of sight plus the first-order reflections off the four walls
/// (image method), with inverse-distance amplitudes along the unfolded path.
pub fn static_paths(ap: [f64; 2], sta: [f64; 2], scenario: &Scenario) -> Vec<StaticPath> {
    let d_los = dist(ap, sta);
    let mut paths = vec![StaticPath { length_m: d_los, amplitude: 1.0 / d_los, vertices: vec![ap, sta] }];
    let rho = scenario.wall_reflection;
    if rho == 0.0 {
        return paths;
    }
    let [w, h] = scenario.room_extent;
    // (axis, wall coordinate)
    for (axis, wall) in [(0usize, 0.0), (0, w), (1, 0.0), (1, h)] {
        let mut image = sta;
        image[axis] = 2.0 * wall - sta[axis];
        let denom = image[axis] - ap[axis];
        if denom.abs() < 1e-12 {
            continue;
        }
        let s = (wall - ap[axis]) / denom;
        let hit = [ap[0] + s * (image[0] - ap[0]), ap[1] + s * (image[1] - ap[1])];
        let length = dist(ap, image);
        paths.push(StaticPath { length_m: length, amplitude: rho / length, vertices: vec![ap, hit, sta] });
    }
    paths
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

/// Body-shadowing factor of `path` with the pedestrian at `pos`.
pub fn shadow_factor(path: &StaticPath, pos: [f64; 2], scenario: &Scenario) -> f64 {
    let spec = scenario.shadowing;
    if spec.depth == 0.0 {
        return 1.0;
    }
    let rho = path.vertices.windows(2).map(|s| segment_distance(pos, s[0], s[1])).fold(f64::INFINITY, f64::min);
    1.0 - spec.depth * (-rho * rho / (2.0 * spec.width_m * spec.width_m)).exp()
}

/// Channel frequency response between `station` and the AP with the
/// pedestrian at `pos`: static paths (line of sight and wall reflections,
/// each shadowed by the body) plus one path scattered off the body.
pub fn channel_response(pos: [f64; 2], station: StationId, scenario: &Scenario) -> Result<Vec<Complex64>> {
    channel_response_with(pos, station, scenario, scenario.scattering_coef)
}

/// [`channel_response`] with an explicit scattering coefficient.
///
/// Each leg follows inverse-distance free-space loss, so the scattered path
/// amplitude is `coef / (d(AP, pos) * d(pos, station))` against
/// `1 / d(AP, station)` for line of sight, with each scattering distance
/// softened to `sqrt(d^2 + r^2)` by the body radius `r`. With no wall reflection and no
/// shadowing this is the plain two-path model.
pub fn channel_response_with(
    pos: [f64; 2],
    station: StationId,
    scenario: &Scenario,
    scattering_coef: f64,
) -> Result<Vec<Complex64>> {
    if !scenario.contains(pos) {
        return Err(Error::Config(format!("position {pos:?} outside the room")));
    }
    let sta = *scenario
        .station_positions
        .get(station.index())
        .ok_or(Error::OutOfRange { index: station.index(), limit: scenario.n_stations })?;
    let ap = scenario.ap_position;
    let paths: Vec<(f64, f64)> = static_paths(ap, sta, scenario)
        .iter()
        .map(|p| (p.amplitude * shadow_factor(p, pos, scenario), p.length_m / SPEED_OF_LIGHT))
        .collect();
    let d_in = dist(ap, pos);
    let d_out = dist(pos, sta);
    let tau_sc = (d_in + d_out) / SPEED_OF_LIGHT;
    let soft = |d: f64| (d * d + scenario.body_radius_m * scenario.body_radius_m).sqrt();
    let a_sc = scattering_coef / (soft(d_in) * soft(d_out));
    Ok(subcarrier_frequencies(scenario)
        .into_iter()
        .map(|f| {
            paths.iter().map(|&(a, tau)| Complex64::from_polar(a, -TAU * f * tau)).sum::<Complex64>()
                + Complex64::from_polar(a_sc, -TAU * f * tau_sc)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sta(i: usize) -> StationId {
        StationId::new(i, 8).unwrap()
    }

    #[test]
    fn single_path_has_flat_magnitude() {
        let s = Scenario::default().two_path();
        let h = channel_response_with([1.0, 1.2], sta(3), &s, 0.0).unwrap();
        let m0 = h[0].norm();
        assert!(h.iter().all(|c| (c.norm() - m0).abs() < 1e-12));
    }

    #[test]
    fn scattered_delay_grows_with_path_length() {
        // Moving away from both AP and station along a line lengthens the path.
        let s = Scenario::default();
        let station = s.station_positions[0];
        let ap = s.ap_position;
        let mut last = 0.0;
        for i in 0..20 {
            let pos = [ap[0] + 0.05 * i as f64, ap[1] + 0.05 * i as f64];
            let path = dist(ap, pos) + dist(pos, station);
            assert!(path > last);
            last = path;
        }
    }

    #[test]
    fn subcarrier_grid() {
        let s = Scenario::default();
        let f = subcarrier_frequencies(&s);
        assert_eq!(f.len(), 64);
        assert_eq!(f[32], s.carrier_hz);
        assert!((f[1] - f[0] - 312_500.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_position_outside_room() {
        let s = Scenario::default();
        assert!(channel_response([-0.1, 1.0], sta(0), &s).is_err());
    }
}
