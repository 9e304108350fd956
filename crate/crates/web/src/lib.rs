//! WebAssembly bindings for the static demo page in `www/`.

use std::f64::consts::PI;

use boltrm_core::mtf::mtf;
use boltrm_core::seed::rng_from_seed;
use boltrm_core::sim::{
    flat_profile, polygon_profile, BenchmarkConfig, ClassLabel, FlatDefect, PassageSynth, PolygonDefect,
    WheelGeometry,
};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_class(name: &str) -> Result<ClassLabel, JsError> {
    match name {
        "healthy" => Ok(ClassLabel::Healthy),
        "flat" => Ok(ClassLabel::Flat),
        "polygon" => Ok(ClassLabel::Polygon),
        other => Err(JsError::new(&format!("unknown class `{other}`"))),
    }
}

#[wasm_bindgen]
pub struct Passage {
    accel: Vec<f32>,
    strain: Vec<f32>,
    sample_rate_hz: f64,
    speed_kmh: f64,
    wheel_load_tons: f64,
}

#[wasm_bindgen]
impl Passage {
    #[wasm_bindgen(getter)]
    pub fn accel(&self) -> Vec<f32> {
        self.accel.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn strain(&self) -> Vec<f32> {
        self.strain.clone()
    }

    #[wasm_bindgen(getter, js_name = sampleRateHz)]
    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    #[wasm_bindgen(getter, js_name = speedKmh)]
    pub fn speed_kmh(&self) -> f64 {
        self.speed_kmh
    }

    #[wasm_bindgen(getter, js_name = wheelLoadTons)]
    pub fn wheel_load_tons(&self) -> f64 {
        self.wheel_load_tons
    }
}

/// One passage of the default benchmark's domain `domain` (1-based) with the
/// given class.
#[wasm_bindgen(js_name = passageSignal)]
pub fn passage_signal(domain: u32, class: &str, seed: u32) -> Result<Passage, JsError> {
    let label = parse_class(class)?;
    let cfg = BenchmarkConfig::default();
    let spec = cfg
        .domains
        .get((domain as usize).wrapping_sub(1))
        .ok_or_else(|| JsError::new(&format!("domain must be in 1..={}", cfg.domains.len())))?;
    let tracks = cfg.track_bank(seed as u64);
    let synth = PassageSynth::new(
        cfg.wheel,
        cfg.surrogate,
        (cfg.polygon_severity_m[0], cfg.polygon_severity_m[1]),
        &tracks,
    );
    let rec = synth.synth_labeled(spec, label, seed as u64).map_err(js_err)?;
    Ok(Passage {
        sample_rate_hz: rec.accel.sample_rate_hz,
        speed_kmh: rec.conditions.speed_kmh,
        wheel_load_tons: rec.conditions.wheel_load_tons(),
        accel: rec.accel.values,
        strain: rec.strain.values,
    })
}

/// Row-major `size × size` Markov transition field of `values`.
#[wasm_bindgen(js_name = mtfImage)]
pub fn mtf_image(values: &[f32], q: usize, size: usize) -> Result<Vec<f64>, JsError> {
    mtf(values, q, size).map(|img| img.data).map_err(js_err)
}

/// Tread deviation in mm at `points` evenly spaced positions around the
/// wheel. `kind` is `flat` (uses `flat_length_mm`) or `polygon` (draws a
/// profile from `seed`).
#[wasm_bindgen(js_name = wheelProfile)]
pub fn wheel_profile(kind: &str, radius_m: f64, flat_length_mm: f64, seed: u32, points: usize) -> Result<Vec<f64>, JsError> {
    let wheel = WheelGeometry::new(radius_m).map_err(js_err)?;
    if points < 2 {
        return Err(JsError::new("need at least 2 points"));
    }
    let circumference = 2.0 * PI * radius_m;
    let xs = (0..points).map(|i| circumference * i as f64 / (points - 1) as f64);
    let mm = |v: f64| v * 1000.0;
    match kind {
        "flat" => {
            let defect = FlatDefect::new(flat_length_mm / 1000.0, &wheel).map_err(js_err)?;
            xs.map(|x| flat_profile(&defect, &wheel, x).map(mm).map_err(js_err)).collect()
        }
        "polygon" => {
            let cfg = BenchmarkConfig::default();
            let band = (cfg.polygon_severity_m[0], cfg.polygon_severity_m[1]);
            let defect = PolygonDefect::sample(&mut rng_from_seed(seed as u64), &wheel, band).map_err(js_err)?;
            xs.map(|x| polygon_profile(&defect, &wheel, x).map(mm).map_err(js_err)).collect()
        }
        other => Err(JsError::new(&format!("unknown profile kind `{other}`"))),
    }
}
