use rand::Rng;
use serde::{Deserialize, Serialize};

use super::passage::SurrogateParams;
use super::wheel::WheelGeometry;
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;
pub(crate) const MIN_SPEED_KMH: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Healthy,
    Flat,
    Polygon,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Healthy, ClassLabel::Flat, ClassLabel::Polygon];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown class label {index}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Peak,
    OffPeak,
    SummerBoom,
    WinterBust,
    Balanced,
}

impl Season {
    pub const CYCLE: [Season; 5] = [
        Season::Peak,
        Season::OffPeak,
        Season::SummerBoom,
        Season::WinterBust,
        Season::Balanced,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainType {
    /// Passenger tilting train.
    Alfa,
    /// Freight wagon.
    Laagrss,
}

impl TrainType {
    pub fn max_speed_kmh(self) -> f64 {
        match self {
            TrainType::Alfa => 220.0,
            TrainType::Laagrss => 120.0,
        }
    }

    /// Unladen load carried by one wheel, tons.
    pub fn tare_wheel_tons(self) -> f64 {
        match self {
            TrainType::Alfa => 6.5,
            TrainType::Laagrss => 3.5,
        }
    }

    /// Vehicle length and axle positions measured from the vehicle front, m.
    pub fn axle_layout(self) -> (f64, &'static [f64]) {
        match self {
            TrainType::Alfa => (25.9, &[3.45, 6.15, 19.75, 22.45]),
            TrainType::Laagrss => (13.5, &[2.75, 10.75]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadScheme {
    Empty,
    Half,
    Full,
    Unbalance1,
    Unbalance2,
    Unbalance3,
}

impl LoadScheme {
    pub const ALL: [LoadScheme; 6] = [
        LoadScheme::Empty,
        LoadScheme::Half,
        LoadScheme::Full,
        LoadScheme::Unbalance1,
        LoadScheme::Unbalance2,
        LoadScheme::Unbalance3,
    ];

    /// Payload on the (left, right) side in tons.
    pub fn per_side_tons(self) -> (f64, f64) {
        match self {
            LoadScheme::Empty => (0.0, 0.0),
            LoadScheme::Half => (7.5, 7.5),
            LoadScheme::Full => (15.0, 15.0),
            LoadScheme::Unbalance1 => (15.0, 7.5),
            LoadScheme::Unbalance2 => (15.0, 3.0),
            LoadScheme::Unbalance3 => (15.0, 0.0),
        }
    }
}

fn check_probabilities(field: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::config(field, "probabilities must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::config(field, format!("probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last nonzero entry.
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainTypeMix {
    pub alfa: f64,
    pub laagrss: f64,
}

impl TrainTypeMix {
    pub fn probabilities(&self) -> [f64; 2] {
        [self.alfa, self.laagrss]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrainType {
        [TrainType::Alfa, TrainType::Laagrss][sample_index(rng, &self.probabilities())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadMix {
    pub empty: f64,
    pub half: f64,
    pub full: f64,
    pub unbalance1: f64,
    pub unbalance2: f64,
    pub unbalance3: f64,
}

impl LoadMix {
    pub fn probabilities(&self) -> [f64; 6] {
        [
            self.empty,
            self.half,
            self.full,
            self.unbalance1,
            self.unbalance2,
            self.unbalance3,
        ]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LoadScheme {
        LoadScheme::ALL[sample_index(rng, &self.probabilities())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMix {
    pub healthy: f64,
    pub flat: f64,
    pub polygon: f64,
}

impl ClassMix {
    pub fn probabilities(&self) -> [f64; 3] {
        [self.healthy, self.flat, self.polygon]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ClassLabel {
        ClassLabel::ALL[sample_index(rng, &self.probabilities())]
    }
}

impl Default for ClassMix {
    fn default() -> Self {
        Self {
            healthy: 0.5,
            flat: 0.25,
            polygon: 0.25,
        }
    }
}

/// Operating conditions of one domain in the sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub domain_id: u32,
    pub season: Season,
    pub train_type_mix: TrainTypeMix,
    pub speed_range_kmh: [f64; 2],
    pub load_mix: LoadMix,
    pub irregularity_profile_ids: Vec<u32>,
    pub noise_std_scale: f64,
    pub class_mix: ClassMix,
}

impl DomainSpec {
    /// Seasonal operating profile used by the default benchmark.
    pub fn seasonal(domain_id: u32, season: Season, noise_std_scale: f64) -> Self {
        let (alfa, speed, load, profiles) = match season {
            Season::Peak => (
                0.8,
                [100.0, 220.0],
                [0.1, 0.4, 0.2, 0.2, 0.1, 0.0],
                vec![0, 1],
            ),
            Season::OffPeak => (
                0.3,
                [40.0, 120.0],
                [0.3, 0.3, 0.1, 0.1, 0.1, 0.1],
                vec![2, 3],
            ),
            Season::SummerBoom => (
                0.6,
                [120.0, 200.0],
                [0.0, 0.1, 0.7, 0.2, 0.0, 0.0],
                vec![4, 5],
            ),
            Season::WinterBust => (
                0.4,
                [40.0, 80.0],
                [0.4, 0.3, 0.0, 0.0, 0.15, 0.15],
                vec![6, 7],
            ),
            Season::Balanced => (
                0.5,
                [80.0, 140.0],
                [0.15, 0.25, 0.25, 0.15, 0.1, 0.1],
                vec![8, 9],
            ),
        };
        Self {
            domain_id,
            season,
            train_type_mix: TrainTypeMix {
                alfa,
                laagrss: 1.0 - alfa,
            },
            speed_range_kmh: speed,
            load_mix: LoadMix {
                empty: load[0],
                half: load[1],
                full: load[2],
                unbalance1: load[3],
                unbalance2: load[4],
                unbalance3: load[5],
            },
            irregularity_profile_ids: profiles,
            noise_std_scale,
            class_mix: ClassMix::default(),
        }
    }

    /// Speed interval for one train type: the domain range capped at the
    /// type's maximum speed.
    pub fn speed_range_for(&self, train_type: TrainType) -> (f64, f64) {
        let cap = train_type.max_speed_kmh();
        let [lo, hi] = self.speed_range_kmh;
        let hi = hi.min(cap);
        (lo.min(hi), hi)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("domains[{}].{name}", self.domain_id);
        check_probabilities(&field("train_type_mix"), &self.train_type_mix.probabilities())?;
        check_probabilities(&field("load_mix"), &self.load_mix.probabilities())?;
        check_probabilities(&field("class_mix"), &self.class_mix.probabilities())?;

        let [lo, hi] = self.speed_range_kmh;
        if !(lo.is_finite() && hi.is_finite() && MIN_SPEED_KMH <= lo && lo <= hi) {
            return Err(Error::config(
                field("speed_range_kmh"),
                format!("expected 40 <= lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        if hi > TrainType::Alfa.max_speed_kmh() {
            return Err(Error::config(field("speed_range_kmh"), "speeds above 220 km/h"));
        }
        if self.train_type_mix.laagrss > 0.0 && lo > TrainType::Laagrss.max_speed_kmh() {
            return Err(Error::config(
                field("speed_range_kmh"),
                "range excludes Laagrss speeds but Laagrss has nonzero weight",
            ));
        }
        if self.irregularity_profile_ids.is_empty() {
            return Err(Error::config(field("irregularity_profile_ids"), "empty"));
        }
        if !(self.noise_std_scale.is_finite() && self.noise_std_scale >= 1.0) {
            return Err(Error::config(field("noise_std_scale"), "must be >= 1"));
        }
        Ok(())
    }
}

/// Everything needed to synthesize a multi-domain benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub domains: Vec<DomainSpec>,
    pub train_per_domain: usize,
    pub test_per_domain: usize,
    pub track_profiles: u32,
    pub wheel: WheelGeometry,
    pub polygon_severity_m: [f64; 2],
    pub surrogate: SurrogateParams,
}

impl Default for BenchmarkConfig {
    /// Ten domains: the five seasons in order, twice; the second cycle has
    /// doubled noise.
    fn default() -> Self {
        let domains = (0..2)
            .flat_map(|cycle| {
                Season::CYCLE.iter().enumerate().map(move |(i, &season)| {
                    let id = (cycle * Season::CYCLE.len() + i + 1) as u32;
                    let noise = if cycle == 0 { 1.0 } else { 2.0 };
                    DomainSpec::seasonal(id, season, noise)
                })
            })
            .collect();
        Self {
            domains,
            train_per_domain: 500,
            test_per_domain: 200,
            track_profiles: 10,
            wheel: WheelGeometry::default(),
            polygon_severity_m: [0.0008, 0.0012],
            surrogate: SurrogateParams::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::config("domains", "at least one domain required"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            if d.domain_id as usize != i + 1 {
                return Err(Error::config(
                    "domains",
                    format!("domain ids must run 1..D in order; position {} has id {}", i + 1, d.domain_id),
                ));
            }
            d.validate()?;
            if let Some(&bad) = d
                .irregularity_profile_ids
                .iter()
                .find(|&&p| p >= self.track_profiles)
            {
                return Err(Error::config(
                    format!("domains[{}].irregularity_profile_ids", d.domain_id),
                    format!("profile {bad} >= track_profiles ({})", self.track_profiles),
                ));
            }
        }
        if self.train_per_domain == 0 {
            return Err(Error::config("train_per_domain", "must be positive"));
        }
        if self.test_per_domain == 0 {
            return Err(Error::config("test_per_domain", "must be positive"));
        }
        self.wheel
            .validate()
            .map_err(|e| Error::config("wheel.radius_m", e.to_string()))?;
        let [lo, hi] = self.polygon_severity_m;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::config("polygon_severity_m", "expected 0 < lo <= hi"));
        }
        self.surrogate.validate()
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_schemes_match_table() {
        let expected = [
            (0.0, 0.0),
            (7.5, 7.5),
            (15.0, 15.0),
            (15.0, 7.5),
            (15.0, 3.0),
            (15.0, 0.0),
        ];
        for (scheme, tons) in LoadScheme::ALL.iter().zip(expected) {
            assert_eq!(scheme.per_side_tons(), tons);
        }
    }

    #[test]
    fn default_benchmark_is_valid_and_paired() {
        let cfg = BenchmarkConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_domains(), 10);
        for (a, b) in [(3usize, 8usize), (4, 9)] {
            let (da, db) = (&cfg.domains[a - 1], &cfg.domains[b - 1]);
            assert_eq!(da.season, db.season);
            assert_eq!(da.speed_range_kmh, db.speed_range_kmh);
            assert_eq!(da.load_mix, db.load_mix);
            assert_eq!(da.noise_std_scale, 1.0);
            assert_eq!(db.noise_std_scale, 2.0);
        }
    }

    #[test]
    fn speed_caps() {
        let d = DomainSpec::seasonal(1, Season::Peak, 1.0);
        assert_eq!(d.speed_range_for(TrainType::Laagrss), (100.0, 120.0));
        assert_eq!(d.speed_range_for(TrainType::Alfa), (100.0, 220.0));
        let d = DomainSpec::seasonal(3, Season::SummerBoom, 1.0);
        assert_eq!(d.speed_range_for(TrainType::Laagrss), (120.0, 120.0));
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = BenchmarkConfig::default();
        cfg.domains[2].class_mix.flat = 0.3;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("domains[3].class_mix"), "{err}");

        let mut cfg = BenchmarkConfig::default();
        cfg.domains[0].speed_range_kmh = [30.0, 100.0];
        assert!(cfg.validate().unwrap_err().to_string().contains("speed_range_kmh"));

        let mut cfg = BenchmarkConfig::default();
        cfg.domains[0].speed_range_kmh = [130.0, 200.0];
        assert!(cfg.validate().is_err());

        let mut cfg = BenchmarkConfig::default();
        cfg.domains.swap(0, 1);
        assert!(cfg.validate().is_err());
    }
}
