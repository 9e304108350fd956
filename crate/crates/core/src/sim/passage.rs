use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::domain::{ClassLabel, DomainSpec, LoadScheme, TrainType, MIN_SPEED_KMH};
use super::track::{TrackBank, TrackIrregularityProfile};
use super::wheel::{FlatDefect, FlatSeverity, PolygonDefect, WheelGeometry};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Rail acceleration, m/s².
    AccelMs2,
    /// Rail strain, µε.
    StrainUe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f32>,
    pub sample_rate_hz: f64,
    pub channel: Channel,
}

impl TimeSeries {
    pub fn new(values: Vec<f32>, sample_rate_hz: f64, channel: Channel) -> Result<Self> {
        let series = Self {
            values,
            sample_rate_hz,
            channel,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("time series contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Constants of the analytic vehicle/track response.
///
/// Acceleration: `c_a · v² · z''(x0 + v t)` from the rail irregularity, plus
/// one decaying `f_c` sinusoid of amplitude `k_f · v · D · load_factor` per
/// wheel revolution for flats, plus the second time-derivative magnitude
/// `Σ A (2πv/λ)² sin(2πvt/λ + φ)` for polygonization, plus Gaussian noise.
/// Strain: one raised-cosine bending pulse per axle plus
/// `strain_defect_coupling` times the defect term, plus noise. Noise standard
/// deviation is `base_noise_frac · RMS(defect-free channel) · noise_std_scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    pub c_a: f64,
    pub k_f: f64,
    pub tau_s: f64,
    pub f_c_hz: f64,
    pub base_noise_frac: f64,
    pub sample_rate_hz: f64,
    pub window_s: f64,
    pub strain_ue_per_ton: f64,
    pub strain_defect_coupling: f64,
    /// Half-length of the rail bending influence line, m.
    pub influence_length_m: f64,
    /// Wheel load at which `load_factor == 1`, tons.
    pub reference_wheel_tons: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            c_a: 1.0,
            k_f: 5000.0,
            tau_s: 0.002,
            f_c_hz: 900.0,
            base_noise_frac: 0.05,
            sample_rate_hz: 10_000.0,
            window_s: 0.5,
            strain_ue_per_ton: 10.0,
            strain_defect_coupling: 0.1,
            influence_length_m: 1.5,
            reference_wheel_tons: 10.0,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("surrogate.tau_s", self.tau_s),
            ("surrogate.f_c_hz", self.f_c_hz),
            ("surrogate.sample_rate_hz", self.sample_rate_hz),
            ("surrogate.window_s", self.window_s),
            ("surrogate.influence_length_m", self.influence_length_m),
            ("surrogate.reference_wheel_tons", self.reference_wheel_tons),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        let non_negative = [
            ("surrogate.c_a", self.c_a),
            ("surrogate.k_f", self.k_f),
            ("surrogate.base_noise_frac", self.base_noise_frac),
            ("surrogate.strain_ue_per_ton", self.strain_ue_per_ton),
            ("surrogate.strain_defect_coupling", self.strain_defect_coupling),
        ];
        for (field, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::config(field, "must be non-negative"));
            }
        }
        if self.samples_per_window() < 2 {
            return Err(Error::config("surrogate.window_s", "window shorter than two samples"));
        }
        Ok(())
    }

    pub fn samples_per_window(&self) -> usize {
        (self.window_s * self.sample_rate_hz).round() as usize
    }

    /// Samples after an impact during which its pulse is rendered.
    fn pulse_samples(&self) -> usize {
        (10.0 * self.tau_s * self.sample_rate_hz).ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RailSide {
    Left,
    Right,
}

/// Where the defective wheel sits on the train. Only one sensor pair is
/// simulated, so this is bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectLocation {
    pub wagon: u8,
    pub wheel: u8,
    pub side: RailSide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defect {
    None,
    Flat {
        severity: FlatSeverity,
        flat: FlatDefect,
        /// Time of the first impact inside the window, s.
        impact_phase_s: f64,
        location: DefectLocation,
    },
    Polygon {
        polygon: PolygonDefect,
        severity_m: f64,
        location: DefectLocation,
    },
}

impl Defect {
    pub fn label(&self) -> ClassLabel {
        match self {
            Defect::None => ClassLabel::Healthy,
            Defect::Flat { .. } => ClassLabel::Flat,
            Defect::Polygon { .. } => ClassLabel::Polygon,
        }
    }
}

/// Fully specified operating point of one passage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageConditions {
    pub train_type: TrainType,
    pub speed_kmh: f64,
    pub load: LoadScheme,
    pub track_profile_id: u32,
    /// Position on the track profile at the start of the window, m.
    pub track_offset_m: f64,
    pub defect: Defect,
}

impl PassageConditions {
    pub fn speed_ms(&self) -> f64 {
        self.speed_kmh / 3.6
    }

    /// Static load of the monitored (left) wheel, tons.
    pub fn wheel_load_tons(&self) -> f64 {
        self.train_type.tare_wheel_tons() + self.load.per_side_tons().0 / 4.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageRecord {
    pub accel: TimeSeries,
    pub strain: TimeSeries,
    pub label: ClassLabel,
    pub domain_id: u32,
    pub seed: u64,
    pub noise_std_scale: f64,
    pub conditions: PassageConditions,
}

/// Renders passages for a fixed wheel, surrogate and track bank.
#[derive(Clone, Copy, Debug)]
pub struct PassageSynth<'a> {
    pub wheel: WheelGeometry,
    pub params: SurrogateParams,
    pub polygon_severity_m: (f64, f64),
    pub tracks: &'a TrackBank,
}

impl<'a> PassageSynth<'a> {
    pub fn new(
        wheel: WheelGeometry,
        params: SurrogateParams,
        polygon_severity_m: (f64, f64),
        tracks: &'a TrackBank,
    ) -> Self {
        Self {
            wheel,
            params,
            polygon_severity_m,
            tracks,
        }
    }

    /// Synthesizes a passage whose label is drawn from the domain's class mix.
    pub fn synth_passage(&self, domain: &DomainSpec, draw_seed: u64) -> Result<PassageRecord> {
        let mut rng = rng_from_seed(draw_seed);
        let label = domain.class_mix.sample(&mut rng);
        self.synth_labeled(domain, label, draw_seed)
    }

    /// Synthesizes a passage of the given class; deterministic in
    /// `(domain, label, draw_seed)`.
    pub fn synth_labeled(
        &self,
        domain: &DomainSpec,
        label: ClassLabel,
        draw_seed: u64,
    ) -> Result<PassageRecord> {
        let mut rng = rng_from_seed(draw_seed ^ 0x5eed_0f_c1a55);
        let conditions = self.draw_conditions(domain, label, &mut rng)?;
        let (accel, strain) = self.render(&conditions, domain.noise_std_scale, &mut rng)?;
        Ok(PassageRecord {
            accel,
            strain,
            label,
            domain_id: domain.domain_id,
            seed: draw_seed,
            noise_std_scale: domain.noise_std_scale,
            conditions,
        })
    }

    pub fn draw_conditions<R: Rng + ?Sized>(
        &self,
        domain: &DomainSpec,
        label: ClassLabel,
        rng: &mut R,
    ) -> Result<PassageConditions> {
        let train_type = domain.train_type_mix.sample(rng);
        let (lo, hi) = domain.speed_range_for(train_type);
        let speed_kmh = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let load = domain.load_mix.sample(rng);
        let ids = &domain.irregularity_profile_ids;
        if ids.is_empty() {
            return Err(Error::config(
                format!("domains[{}].irregularity_profile_ids", domain.domain_id),
                "empty",
            ));
        }
        let track_profile_id = ids[rng.random_range(0..ids.len())];
        let track_offset_m = rng.random_range(0.0..super::track::TRACK_LENGTH_M);

        let defect = match label {
            ClassLabel::Healthy => Defect::None,
            ClassLabel::Flat => {
                let severity = if rng.random_bool(0.5) {
                    FlatSeverity::L1
                } else {
                    FlatSeverity::L2
                };
                let flat = FlatDefect::sample(rng, severity, &self.wheel)?;
                let period = self.wheel.circumference() / (speed_kmh / 3.6);
                let impact_phase_s = rng.random_range(0.0..period);
                let wheel = if rng.random_bool(0.5) { 1 } else { 3 };
                Defect::Flat {
                    severity,
                    flat,
                    impact_phase_s,
                    location: DefectLocation {
                        wagon: 3,
                        wheel,
                        side: RailSide::Left,
                    },
                }
            }
            ClassLabel::Polygon => {
                let polygon = PolygonDefect::sample(rng, &self.wheel, self.polygon_severity_m)?;
                let severity_m = polygon.severity_pp(&self.wheel);
                Defect::Polygon {
                    polygon,
                    severity_m,
                    location: DefectLocation {
                        wagon: 1,
                        wheel: 1,
                        side: RailSide::Right,
                    },
                }
            }
        };
        Ok(PassageConditions {
            train_type,
            speed_kmh,
            load,
            track_profile_id,
            track_offset_m,
            defect,
        })
    }

    fn track(&self, id: u32) -> Result<&TrackIrregularityProfile> {
        self.tracks
            .get(id)
            .ok_or_else(|| Error::invalid(format!("track profile {id} not generated")))
    }

    /// Rail acceleration due to track irregularity alone, m/s².
    pub fn track_response(&self, conditions: &PassageConditions) -> Result<Vec<f64>> {
        let track = self.track(conditions.track_profile_id)?;
        let v = conditions.speed_ms();
        let n = self.params.samples_per_window();
        let dx = v / self.params.sample_rate_hz;
        Ok(track
            .curvature_series(conditions.track_offset_m, dx, n)
            .into_iter()
            .map(|z2| self.params.c_a * v * v * z2)
            .collect())
    }

    /// Acceleration contributed by the wheel defect, m/s². Zero for healthy wheels.
    pub fn defect_response(&self, conditions: &PassageConditions) -> Vec<f64> {
        let p = &self.params;
        let n = p.samples_per_window();
        let fs = p.sample_rate_hz;
        let v = conditions.speed_ms();
        let mut out = vec![0.0; n];
        match &conditions.defect {
            Defect::None => {}
            Defect::Flat {
                flat,
                impact_phase_s,
                ..
            } => {
                let period = self.wheel.circumference() / v;
                let load_factor = conditions.wheel_load_tons() / p.reference_wheel_tons;
                let amplitude = p.k_f * v * flat.depth_m * load_factor;
                let mut impact = *impact_phase_s;
                while impact < p.window_s {
                    let first = (impact * fs).ceil() as usize;
                    for (i, slot) in out
                        .iter_mut()
                        .enumerate()
                        .skip(first)
                        .take(p.pulse_samples())
                    {
                        let dt = i as f64 / fs - impact;
                        *slot += amplitude * (-dt / p.tau_s).exp() * (2.0 * PI * p.f_c_hz * dt).sin();
                    }
                    impact += period;
                }
            }
            Defect::Polygon { polygon, .. } => {
                let circumference = self.wheel.circumference();
                for (order, (&a, &phi)) in polygon
                    .amplitudes()
                    .iter()
                    .zip(&polygon.phases_rad)
                    .enumerate()
                {
                    let wavelength = circumference / (order + 1) as f64;
                    let omega = 2.0 * PI * v / wavelength;
                    let scale = a * omega * omega;
                    for (i, slot) in out.iter_mut().enumerate() {
                        let t = i as f64 / fs;
                        *slot += scale * (omega * t + phi).sin();
                    }
                }
            }
        }
        out
    }

    /// Rail strain from axle loads alone, µε. The monitored axle crosses the
    /// sensor at the centre of the window.
    pub fn bending_response(&self, conditions: &PassageConditions) -> Vec<f64> {
        let p = &self.params;
        let n = p.samples_per_window();
        let fs = p.sample_rate_hz;
        let v = conditions.speed_ms();
        let amplitude = p.strain_ue_per_ton * conditions.wheel_load_tons();
        let (vehicle_len, axles) = conditions.train_type.axle_layout();
        let reference = axles[0];
        let centre = p.window_s / 2.0;
        let reach = v * p.window_s / 2.0 + p.influence_length_m;
        let vehicles = (reach / vehicle_len).ceil() as i32 + 1;

        let mut out = vec![0.0; n];
        for vehicle in -vehicles..=vehicles {
            for &offset in axles {
                let d = f64::from(vehicle) * vehicle_len + offset - reference;
                if d.abs() > reach {
                    continue;
                }
                let t_axle = centre + d / v;
                for (i, slot) in out.iter_mut().enumerate() {
                    let dist = (i as f64 / fs - t_axle) * v;
                    if dist.abs() < p.influence_length_m {
                        *slot += amplitude * 0.5 * (1.0 + (PI * dist / p.influence_length_m).cos());
                    }
                }
            }
        }
        out
    }

    /// Renders both channels for fixed conditions; the RNG supplies noise only.
    pub fn render<R: Rng + ?Sized>(
        &self,
        conditions: &PassageConditions,
        noise_std_scale: f64,
        rng: &mut R,
    ) -> Result<(TimeSeries, TimeSeries)> {
        if conditions.speed_kmh < MIN_SPEED_KMH
            || conditions.speed_kmh > conditions.train_type.max_speed_kmh()
        {
            return Err(Error::invalid(format!(
                "speed {} km/h outside the {:?} range",
                conditions.speed_kmh, conditions.train_type
            )));
        }
        if !(noise_std_scale.is_finite() && noise_std_scale >= 0.0) {
            return Err(Error::invalid("noise scale must be non-negative"));
        }
        let track = self.track_response(conditions)?;
        let defect = self.defect_response(conditions);
        let bending = self.bending_response(conditions);
        let p = &self.params;

        let accel_std = p.base_noise_frac * rms(&track) * noise_std_scale;
        let strain_std = p.base_noise_frac * rms(&bending) * noise_std_scale;
        let accel_noise = noise(rng, accel_std, track.len())?;
        let strain_noise = noise(rng, strain_std, bending.len())?;

        let accel: Vec<f32> = track
            .iter()
            .zip(&defect)
            .zip(&accel_noise)
            .map(|((&t, &d), &e)| (t + d + e) as f32)
            .collect();
        let strain: Vec<f32> = bending
            .iter()
            .zip(&defect)
            .zip(&strain_noise)
            .map(|((&b, &d), &e)| (b + p.strain_defect_coupling * d + e) as f32)
            .collect();
        Ok((
            TimeSeries::new(accel, p.sample_rate_hz, Channel::AccelMs2)?,
            TimeSeries::new(strain, p.sample_rate_hz, Channel::StrainUe)?,
        ))
    }
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn noise<R: Rng + ?Sized>(rng: &mut R, std: f64, n: usize) -> Result<Vec<f64>> {
    if std == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..n).map(|_| normal.sample(rng)).collect())
}
