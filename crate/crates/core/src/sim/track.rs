use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::derived_rng;

pub const TRACK_LENGTH_M: f64 = 100.0;
pub const TRACK_SPACING_M: f64 = 0.001;
/// Samples including both end points (0 m and 100 m).
pub const TRACK_POINTS: usize = 100_001;

const COMPONENTS: usize = 200;
const MIN_WAVELENGTH_M: f64 = 1.0;
const MAX_WAVELENGTH_M: f64 = 30.0;
const PEAK_MM: f64 = 2.0;

/// One sinusoid of a track profile. Its wavelength is `TRACK_LENGTH_M / cycles`
/// so the profile is exactly periodic over the simulated stretch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackComponent {
    pub cycles: u32,
    pub amplitude_m: f64,
    pub phase_rad: f64,
}

impl TrackComponent {
    pub fn wavelength_m(&self) -> f64 {
        TRACK_LENGTH_M / f64::from(self.cycles)
    }
}

/// Vertical rail irregularity over 100 m at 1 mm spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackIrregularityProfile {
    pub profile_id: u32,
    pub seed: u64,
    pub samples_mm: Vec<f64>,
    pub components: Vec<TrackComponent>,
}

impl TrackIrregularityProfile {
    /// Elevation in metres at longitudinal position `x_m` (periodic in 100 m).
    pub fn elevation_m(&self, x_m: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude_m * (2.0 * PI * x_m / c.wavelength_m() + c.phase_rad).sin())
            .sum()
    }

    /// Second derivative of the elevation with respect to position, 1/m.
    pub fn curvature(&self, x_m: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let k = 2.0 * PI / c.wavelength_m();
                -c.amplitude_m * k * k * (k * x_m + c.phase_rad).sin()
            })
            .sum()
    }
}

impl TrackIrregularityProfile {
    /// `curvature(x0 + i·dx)` for `i in 0..n`, evaluated by phase rotation
    /// with periodic resynchronisation.
    pub fn curvature_series(&self, x0_m: f64, dx_m: f64, n: usize) -> Vec<f64> {
        const RESYNC: usize = 512;
        let mut out = vec![0.0; n];
        for c in &self.components {
            let k = 2.0 * PI / c.wavelength_m();
            let scale = -c.amplitude_m * k * k;
            let (ds, dc) = (k * dx_m).sin_cos();
            let mut start = 0;
            while start < n {
                let (mut s, mut co) = (k * (x0_m + start as f64 * dx_m) + c.phase_rad).sin_cos();
                for slot in &mut out[start..(start + RESYNC).min(n)] {
                    *slot += scale * s;
                    let next_s = s * dc + co * ds;
                    co = co * dc - s * ds;
                    s = next_s;
                }
                start += RESYNC;
            }
        }
        out
    }
}

/// Superposes random-phase sinusoids with log-uniform wavelengths in
/// [1, 30] m (snapped to whole cycles over the 100 m stretch) and amplitudes
/// proportional to wavelength, then rescales so the peak is 2 mm.
pub fn gen_track_irregularity(profile_id: u32, seed: u64) -> TrackIrregularityProfile {
    let mut rng = derived_rng(seed, "track-profile", u64::from(profile_id));
    let min_cycles = (TRACK_LENGTH_M / MAX_WAVELENGTH_M).ceil() as u32;
    let max_cycles = (TRACK_LENGTH_M / MIN_WAVELENGTH_M).floor() as u32;
    let (ln_lo, ln_hi) = (MIN_WAVELENGTH_M.ln(), MAX_WAVELENGTH_M.ln());

    let mut components: Vec<TrackComponent> = (0..COMPONENTS)
        .map(|_| {
            let wavelength = rng.random_range(ln_lo..=ln_hi).exp();
            let cycles = ((TRACK_LENGTH_M / wavelength).round() as u32).clamp(min_cycles, max_cycles);
            let envelope = TRACK_LENGTH_M / f64::from(cycles);
            TrackComponent {
                cycles,
                amplitude_m: envelope * rng.random_range(0.2..=1.0),
                phase_rad: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect();

    // Exact periodicity lets every sample come from one sin/cos table.
    let period = TRACK_POINTS - 1;
    let (sin_table, cos_table): (Vec<f64>, Vec<f64>) = (0..period)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / period as f64;
            (a.sin(), a.cos())
        })
        .unzip();
    let mut samples = vec![0.0; TRACK_POINTS];
    for c in &components {
        let (sp, cp) = c.phase_rad.sin_cos();
        let (a_cos, a_sin) = (c.amplitude_m * cp, c.amplitude_m * sp);
        let step = c.cycles as usize;
        let mut idx = 0usize;
        for value in samples.iter_mut() {
            *value += a_cos * sin_table[idx] + a_sin * cos_table[idx];
            idx += step;
            if idx >= period {
                idx -= period;
            }
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = PEAK_MM * 1e-3 / peak;
    for c in &mut components {
        c.amplitude_m *= scale;
    }
    let samples_mm = samples
        .into_iter()
        .map(|v| (v * scale * 1e3).clamp(-PEAK_MM, PEAK_MM))
        .collect();

    TrackIrregularityProfile {
        profile_id,
        seed,
        samples_mm,
        components,
    }
}

/// Track profiles referenced by a benchmark, keyed by profile id.
#[derive(Clone, Debug, Default)]
pub struct TrackBank {
    profiles: BTreeMap<u32, TrackIrregularityProfile>,
}

impl TrackBank {
    pub fn generate(ids: impl IntoIterator<Item = u32>, seed: u64) -> Self {
        let profiles = ids
            .into_iter()
            .map(|id| (id, gen_track_irregularity(id, seed)))
            .collect();
        Self { profiles }
    }

    pub fn get(&self, id: u32) -> Option<&TrackIrregularityProfile> {
        self.profiles.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.profiles.keys().copied()
    }
}
