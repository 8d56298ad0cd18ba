//! Synthetic presence rasters with a daily cycle.
//!
//! Each cell mixes a residential profile (high at night, lower during the
//! day) and a business profile (night trough, daytime plateau, evening
//! decline). Both are two-harmonic Fourier series in the time of day. A cell
//! shifts both profiles by its own offset of up to three hours, so the clean
//! data span every retained harmonic and stay low rank.
//! Multiplicative Gaussian noise is added per value.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::TestdataError;
use crate::data::SnapshotSet;
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresenceSpec {
    pub frames_per_day: usize,
    /// Seconds between frames.
    pub dt: f64,
    /// Standard deviation of the multiplicative noise.
    pub noise: f64,
    /// Rescales the mean total presence per frame to this value.
    pub total: Option<f64>,
    /// Lowers business presence on days 6 and 7 of each week.
    pub weekly: bool,
}

impl Default for PresenceSpec {
    fn default() -> Self {
        PresenceSpec {
            frames_per_day: 96,
            dt: 900.0,
            noise: 0.01,
            total: None,
            weekly: false,
        }
    }
}

/// Business presence at hour `tau` of the day.
pub fn business_profile(tau: f64) -> f64 {
    let p = 2.0 * PI * tau / 24.0;
    0.55 - 0.35 * (p - 0.35).cos() - 0.1 * (2.0 * p - 0.7).cos()
}

/// Residential presence at hour `tau` of the day.
pub fn residential_profile(tau: f64) -> f64 {
    let p = 2.0 * PI * tau / 24.0;
    0.9 + 0.25 * (p - 0.2).cos() + 0.05 * (2.0 * p).cos()
}

/// Largest per-cell shift of the daily profiles, in hours.
const MAX_SHIFT: f64 = 3.0;

pub fn synth_presence(
    grid: &GridSpec,
    days: usize,
    seed: u64,
    spec: &PresenceSpec,
) -> Result<SnapshotSet, TestdataError> {
    if days == 0 || spec.frames_per_day < 2 || !(spec.dt > 0.0) || !(spec.noise >= 0.0) {
        return Err(TestdataError::BadSpec(format!("{days} days, {spec:?}")));
    }
    grid.validate()?;
    let n = grid.node_count();
    let frames = days * spec.frames_per_day;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Smooth residential share across the grid plus a random tilt.
    let phase = rng.random_range(0.0..2.0 * PI);
    let population = LogNormal::new(3.0, 0.6).expect("valid lognormal");
    let mut weight = Vec::with_capacity(n);
    let mut base = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for j in 0..n {
        let (r, c) = grid.row_col(j);
        let u = (r as f64 + 0.5) / grid.n_rows as f64;
        let v = (c as f64 + 0.5) / grid.n_cols as f64;
        let w = 0.5 + 0.4 * (2.0 * PI * u + phase).sin() * (PI * v).cos();
        weight.push(w.clamp(0.05, 0.95));
        base.push(population.sample(&mut rng));
        shift.push([
            rng.random_range(-MAX_SHIFT..MAX_SHIFT),
            rng.random_range(-MAX_SHIFT..MAX_SHIFT),
        ]);
    }

    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let day_seconds = spec.frames_per_day as f64 * spec.dt;
    let mut data = DMatrix::zeros(n, frames);
    for f in 0..frames {
        let t = f as f64 * spec.dt;
        let day = (t / day_seconds).floor() as usize;
        let tau = 24.0 * (t - day as f64 * day_seconds) / day_seconds;
        let weekend = spec.weekly && day % 7 >= 5;
        let scale = if weekend { 0.6 } else { 1.0 };
        for j in 0..n {
            let [sr, sb] = shift[j];
            let r = residential_profile(tau - sr);
            let b = business_profile(tau - sb) * scale;
            let clean = base[j] * (weight[j] * r + (1.0 - weight[j]) * b);
            let eps: f64 = noise.sample(&mut rng);
            data[(j, f)] = (clean * (1.0 + spec.noise * eps)).max(0.0);
        }
    }
    if let Some(total) = spec.total {
        let mean = data.sum() / frames as f64;
        if mean > 0.0 {
            data *= total / mean;
        }
    }
    Ok(SnapshotSet::new(data, 0.0, spec.dt, Some(*grid))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(6, 5, 130.0, 140.0, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_presence(&grid(), 1, 7, &PresenceSpec::default()).unwrap();
        let b = synth_presence(&grid(), 1, 7, &PresenceSpec::default()).unwrap();
        let c = synth_presence(&grid(), 1, 8, &PresenceSpec::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data(), c.data());
        assert_eq!(a.n_frames(), 96);
        assert_eq!(a.dt(), 900.0);
    }

    #[test]
    fn profiles_are_positive_with_expected_shape() {
        for i in 0..96 {
            let tau = i as f64 * 0.25;
            assert!(business_profile(tau) > 0.0);
            assert!(residential_profile(tau) > 0.0);
        }
        assert!(business_profile(13.0) > 3.0 * business_profile(3.0));
        assert!(business_profile(21.0) < business_profile(15.0));
        assert!(residential_profile(2.0) > residential_profile(13.0));
    }

    #[test]
    fn total_scale_and_nonnegativity() {
        let spec = PresenceSpec {
            total: Some(1.3e6),
            weekly: true,
            ..Default::default()
        };
        let s = synth_presence(&grid(), 7, 1, &spec).unwrap();
        let mean = s.data().sum() / s.n_frames() as f64;
        assert!((mean - 1.3e6).abs() < 1e-3);
        assert!(s.data().iter().all(|&v| v >= 0.0));
        // Weekend business hours are lighter than weekday ones.
        let weekday_noon = s.total_mass(48);
        let saturday_noon = s.total_mass(5 * 96 + 48);
        assert!(saturday_noon < weekday_noon);
    }
}
