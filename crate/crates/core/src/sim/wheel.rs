use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of harmonic orders in a polygonized wheel profile.
pub const HARMONICS: usize = 20;

/// Spacing used when measuring profile severity around the circumference.
const PROFILE_STEP_M: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WheelGeometry {
    pub radius_m: f64,
}

impl Default for WheelGeometry {
    fn default() -> Self {
        Self { radius_m: 0.434 }
    }
}

impl WheelGeometry {
    pub fn new(radius_m: f64) -> Result<Self> {
        let wheel = Self { radius_m };
        wheel.validate()?;
        Ok(wheel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m.is_finite() && self.radius_m > 0.0) {
            return Err(Error::invalid(format!(
                "wheel radius must be positive, got {}",
                self.radius_m
            )));
        }
        Ok(())
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius_m
    }
}

/// Depth of a wheel flat of chord length `length_m`: `L² / (16 R)`.
pub fn flat_depth(length_m: f64, wheel: &WheelGeometry) -> Result<f64> {
    wheel.validate()?;
    if !(length_m.is_finite() && length_m > 0.0) {
        return Err(Error::invalid(format!(
            "flat length must be positive, got {length_m}"
        )));
    }
    Ok(length_m * length_m / (16.0 * wheel.radius_m))
}

/// Flat length interval class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatSeverity {
    /// 25–50 mm
    L1,
    /// 50–100 mm
    L2,
}

impl FlatSeverity {
    pub fn length_interval_m(self) -> (f64, f64) {
        match self {
            FlatSeverity::L1 => (0.025, 0.050),
            FlatSeverity::L2 => (0.050, 0.100),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatDefect {
    pub length_m: f64,
    pub depth_m: f64,
}

impl FlatDefect {
    pub fn new(length_m: f64, wheel: &WheelGeometry) -> Result<Self> {
        let depth_m = flat_depth(length_m, wheel)?;
        if length_m > wheel.circumference() {
            return Err(Error::invalid("flat longer than the wheel circumference"));
        }
        Ok(Self { length_m, depth_m })
    }

    /// Draws a flat whose length is uniform within the severity interval.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        severity: FlatSeverity,
        wheel: &WheelGeometry,
    ) -> Result<Self> {
        let (lo, hi) = severity.length_interval_m();
        Self::new(rng.random_range(lo..=hi), wheel)
    }
}

/// Vertical deviation of the tread at circumferential coordinate `x_m`.
///
/// The flat occupies the last `L` metres of the circumference. Inside that
/// window the profile is a raised-cosine dip in the local coordinate
/// `ξ = x − (2πR − L)`, reaching `−D` at the window midpoint.
pub fn flat_profile(defect: &FlatDefect, wheel: &WheelGeometry, x_m: f64) -> Result<f64> {
    wheel.validate()?;
    let circumference = wheel.circumference();
    if !(0.0..=circumference).contains(&x_m) {
        return Err(Error::invalid(format!(
            "x = {x_m} m outside the wheel circumference [0, {circumference}]"
        )));
    }
    let xi = x_m - (circumference - defect.length_m);
    // H(0) = 1
    if xi < 0.0 {
        return Ok(0.0);
    }
    Ok(-0.5 * defect.depth_m * (1.0 - (2.0 * PI * xi / defect.length_m).cos()))
}

/// Wavelength of harmonic `order` on the wheel: `2πR / θ`.
pub fn harmonic_wavelength(order: u32, wheel: &WheelGeometry) -> Result<f64> {
    wheel.validate()?;
    if order < 1 {
        return Err(Error::invalid("harmonic order must be at least 1"));
    }
    Ok(wheel.circumference() / f64::from(order))
}

/// Sine amplitude in metres for an irregularity level in dB re 1 µm.
pub fn harmonic_amplitude(level_db: f64) -> f64 {
    std::f64::consts::SQRT_2 * 10f64.powf(level_db / 20.0) * 1e-6
}

/// Out-of-roundness described by one level and phase per harmonic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonDefect {
    pub levels_db: Vec<f64>,
    pub phases_rad: Vec<f64>,
}

impl PolygonDefect {
    pub fn new(levels_db: Vec<f64>, phases_rad: Vec<f64>) -> Result<Self> {
        if levels_db.len() != HARMONICS || phases_rad.len() != HARMONICS {
            return Err(Error::invalid(format!(
                "polygon defect needs {HARMONICS} levels and phases"
            )));
        }
        if phases_rad.iter().any(|p| !(0.0..2.0 * PI).contains(p)) {
            return Err(Error::invalid("polygon phases must lie in [0, 2π)"));
        }
        Ok(Self {
            levels_db,
            phases_rad,
        })
    }

    /// Level template in dB: rises towards a peak on orders 6–8 and decays
    /// past it. Orders 6–8 sit at least 8 dB above every other order.
    pub fn template_db(order: u32) -> f64 {
        match order {
            6 | 8 => 44.0,
            7 => 46.0,
            o if o < 6 => 36.0 - 2.0 * f64::from(6 - o),
            o => 36.0 - 2.0 * f64::from(o - 8),
        }
    }

    /// Draws a profile: template levels with ±2 dB jitter, uniform phases,
    /// then a common dB offset so the peak-to-peak severity equals a value
    /// drawn uniformly from `severity_band_m`.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        wheel: &WheelGeometry,
        severity_band_m: (f64, f64),
    ) -> Result<Self> {
        wheel.validate()?;
        let (lo, hi) = severity_band_m;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::invalid("severity band must be positive and ordered"));
        }
        let mut levels: Vec<f64> = (1..=HARMONICS as u32)
            .map(|order| Self::template_db(order) + rng.random_range(-2.0..=2.0))
            .collect();
        let phases: Vec<f64> = (0..HARMONICS)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        let target = rng.random_range(lo..=hi);

        let unscaled = Self {
            levels_db: levels.clone(),
            phases_rad: phases.clone(),
        };
        let offset_db = 20.0 * (target / unscaled.severity_pp(wheel)).log10();
        for level in &mut levels {
            *level += offset_db;
        }
        Self::new(levels, phases)
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.levels_db.iter().map(|&l| harmonic_amplitude(l)).collect()
    }

    /// Peak-to-peak radial deviation sampled every millimetre around the wheel.
    pub fn severity_pp(&self, wheel: &WheelGeometry) -> f64 {
        let amplitudes = self.amplitudes();
        let steps = (wheel.circumference() / PROFILE_STEP_M).ceil() as usize;
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..steps {
            let x = i as f64 * PROFILE_STEP_M;
            let w = self.eval_with(&amplitudes, wheel, x);
            min = min.min(w);
            max = max.max(w);
        }
        max - min
    }

    fn eval_with(&self, amplitudes: &[f64], wheel: &WheelGeometry, x_m: f64) -> f64 {
        let circumference = wheel.circumference();
        amplitudes
            .iter()
            .zip(&self.phases_rad)
            .enumerate()
            .map(|(i, (&a, &phi))| {
                let wavelength = circumference / (i + 1) as f64;
                a * (2.0 * PI * x_m / wavelength + phi).sin()
            })
            .sum()
    }
}

/// Radial deviation of a polygonized wheel at coordinate `x_m ≥ 0`.
pub fn polygon_profile(defect: &PolygonDefect, wheel: &WheelGeometry, x_m: f64) -> Result<f64> {
    wheel.validate()?;
    if !(x_m.is_finite() && x_m >= 0.0) {
        return Err(Error::invalid(format!("x must be non-negative, got {x_m}")));
    }
    Ok(defect.eval_with(&defect.amplitudes(), wheel, x_m))
}
