use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::domain::{BenchmarkConfig, ClassLabel, ClassMix, DomainSpec};
use super::passage::{PassageRecord, PassageSynth};
use super::track::TrackBank;
use crate::error::Result;
use crate::seed::{derive_seed, derived_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainData {
    pub spec: DomainSpec,
    pub train: Vec<PassageRecord>,
    pub test: Vec<PassageRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub config: BenchmarkConfig,
    pub domains: Vec<DomainData>,
}

/// Per-class sample counts for `n` samples: largest-remainder rounding, so
/// each count is within one of `mix · n`.
pub fn class_counts(mix: &ClassMix, n: usize) -> [usize; ClassLabel::COUNT] {
    let p = mix.probabilities();
    let exact: Vec<f64> = p.iter().map(|&w| w * n as f64).collect();
    let mut counts = [0usize; ClassLabel::COUNT];
    for (c, &e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ClassLabel::COUNT).collect();
    // largest fractional part first, ties to the lower class index
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn shuffled_labels(mix: &ClassMix, n: usize, seed: u64, split: &str, domain_id: u32) -> Vec<ClassLabel> {
    let mut labels: Vec<ClassLabel> = class_counts(mix, n)
        .iter()
        .zip(ClassLabel::ALL)
        .flat_map(|(&count, label)| std::iter::repeat_n(label, count))
        .collect();
    labels.shuffle(&mut derived_rng(seed, &format!("labels/{split}"), u64::from(domain_id)));
    labels
}

/// Seed of the track-profile bank for a benchmark seed.
pub fn track_seed(seed: u64) -> u64 {
    derive_seed(seed, "tracks", 0)
}

/// Seed of one passage: a function of (benchmark seed, domain id, sample
/// index) only, with test indices following the train indices.
pub fn passage_seed(seed: u64, domain_id: u32, sample_index: usize) -> u64 {
    derive_seed(seed, &format!("passage/{domain_id}"), sample_index as u64)
}

impl BenchmarkConfig {
    pub fn track_bank(&self, seed: u64) -> TrackBank {
        TrackBank::generate(0..self.track_profiles, track_seed(seed))
    }
}

/// Generates one domain's train and test passages.
pub fn build_domain(
    config: &BenchmarkConfig,
    tracks: &TrackBank,
    domain_index: usize,
    seed: u64,
) -> Result<DomainData> {
    let spec = config.domains[domain_index].clone();
    let synth = PassageSynth::new(
        config.wheel,
        config.surrogate,
        (config.polygon_severity_m[0], config.polygon_severity_m[1]),
        tracks,
    );
    let id = spec.domain_id;
    let train_labels = shuffled_labels(&spec.class_mix, config.train_per_domain, seed, "train", id);
    let test_labels = shuffled_labels(&spec.class_mix, config.test_per_domain, seed, "test", id);

    let train = train_labels
        .iter()
        .enumerate()
        .map(|(i, &label)| synth.synth_labeled(&spec, label, passage_seed(seed, id, i)))
        .collect::<Result<Vec<_>>>()?;
    let offset = config.train_per_domain;
    let test = test_labels
        .iter()
        .enumerate()
        .map(|(i, &label)| synth.synth_labeled(&spec, label, passage_seed(seed, id, offset + i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainData { spec, train, test })
}

/// Generates the whole benchmark in memory. A pure function of
/// `(config, seed)`.
pub fn build_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let tracks = config.track_bank(seed);
    let domains = (0..config.num_domains())
        .map(|i| build_domain(config, &tracks, i, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        seed,
        config: config.clone(),
        domains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::domain::TrainType;

    fn small_config() -> BenchmarkConfig {
        let mut cfg = BenchmarkConfig::default();
        cfg.train_per_domain = 13;
        cfg.test_per_domain = 7;
        cfg.surrogate.window_s = 0.05;
        cfg
    }

    #[test]
    fn class_counts_within_one() {
        let mixes = [
            ClassMix::default(),
            ClassMix { healthy: 1.0 / 3.0, flat: 1.0 / 3.0, polygon: 1.0 / 3.0 },
            ClassMix { healthy: 0.7, flat: 0.2, polygon: 0.1 },
        ];
        for mix in mixes {
            for n in [1usize, 2, 7, 13, 100, 500, 999] {
                let counts = class_counts(&mix, n);
                assert_eq!(counts.iter().sum::<usize>(), n);
                for (c, p) in counts.iter().zip(mix.probabilities()) {
                    assert!((*c as f64 - p * n as f64).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn benchmark_is_reproducible_and_honours_mix() {
        let cfg = small_config();
        let a = build_benchmark(&cfg, 5).unwrap();
        let b = build_benchmark(&cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.domains.len(), 10);
        for d in &a.domains {
            assert_eq!(d.train.len(), 13);
            assert_eq!(d.test.len(), 7);
            for (split, n) in [(&d.train, 13usize), (&d.test, 7)] {
                let mut counts = [0usize; 3];
                for r in split.iter() {
                    counts[r.label.index()] += 1;
                    assert_eq!(r.domain_id, d.spec.domain_id);
                    assert_eq!(r.conditions.defect.label(), r.label);
                }
                for (c, p) in counts.iter().zip(d.spec.class_mix.probabilities()) {
                    assert!((*c as f64 - p * n as f64).abs() <= 1.0);
                }
            }
        }
        let c = build_benchmark(&cfg, 6).unwrap();
        assert_ne!(a.domains[0].train[0].accel, c.domains[0].train[0].accel);
    }

    #[test]
    fn speeds_respect_train_type_caps() {
        let cfg = small_config();
        let data = build_benchmark(&cfg, 9).unwrap();
        for d in &data.domains {
            for r in d.train.iter().chain(&d.test) {
                let s = r.conditions.speed_kmh;
                assert!(s >= 40.0);
                match r.conditions.train_type {
                    TrainType::Alfa => assert!(s <= 220.0),
                    TrainType::Laagrss => assert!(s <= 120.0),
                }
            }
        }
    }
}
