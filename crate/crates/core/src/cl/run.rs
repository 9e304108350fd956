use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::select::nll_of;
use super::{
    select_domains, weights_from_nll, DomainWeights, EnsembleModel, EpisodeModel, Rehearsal, ReplayBuffer,
    RunConfig, RunMode,
};
use crate::cl::to_batch;
use crate::error::{Error, Result};
use crate::metrics::AccuracyMatrix;
use crate::mtf::{DomainImages, EncodedSample};
use crate::nn::{loss_and_grads, sgd_step, FeatureGenerator, HeadClassifier, OptimState};
use crate::seed::{derive_seed, derived_rng};

/// Init seed of episode `k`'s feature generator.
pub fn trunk_seed(run_seed: u64, k: u32) -> u64 {
    derive_seed(run_seed, "trunk", u64::from(k))
}

/// Init seed of the head for domain `d` in episode `k`.
pub fn head_seed(run_seed: u64, k: u32, d: u32) -> u64 {
    derive_seed(run_seed, &format!("head/{k}"), u64::from(d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Domains that received a head, the new one included.
    pub trained: Vec<u32>,
    /// Replayed samples per earlier domain.
    pub replay_counts: BTreeMap<u32, usize>,
    pub samples_seen: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Trains episode `k` on the current domain plus buffered samples of the
/// other `selected` domains and appends it to `model`. `train_sets[i]` holds
/// the training samples of domain `i + 1`. Earlier episodes are not touched.
pub fn train_episode(
    train_sets: &[&[EncodedSample]],
    buffer: &ReplayBuffer,
    model: &mut EnsembleModel,
    cfg: &RunConfig,
    k: u32,
    selected: &BTreeSet<u32>,
) -> Result<EpisodeStats> {
    let current = *train_sets
        .get(k as usize - 1)
        .ok_or_else(|| Error::invalid(format!("no training data for domain {k}")))?;
    if current.is_empty() {
        return Err(Error::invalid(format!("domain {k} has no training samples")));
    }
    let mut data: BTreeMap<u32, Vec<&EncodedSample>> = BTreeMap::new();
    data.insert(k, current.iter().collect());
    let mut replay_counts = BTreeMap::new();
    for &d in selected.iter().filter(|&&d| d != k) {
        let available = buffer.count(d);
        if available == 0 {
            warn!("episode {k}: no buffered samples for domain {d}; training without it");
            continue;
        }
        let want = available.min(current.len());
        let scores = match buffer.config.rehearsal {
            Rehearsal::UniformBalanced => None,
            policy => Some(replay_scores(model, buffer, d, policy)?),
        };
        let mut rng = derived_rng(cfg.seed, &format!("replay/{d}"), k as u64);
        let drawn: Vec<&EncodedSample> = buffer
            .draw(d, want, scores.as_deref(), &mut rng)
            .into_iter()
            .map(|s| &s.sample)
            .collect();
        replay_counts.insert(d, drawn.len());
        data.insert(d, drawn);
    }

    let net = model.net;
    let mut trunk = FeatureGenerator::init(net, trunk_seed(cfg.seed, k))?;
    let mut heads = BTreeMap::new();
    let mut head_opts = BTreeMap::new();
    for &d in data.keys() {
        heads.insert(d, HeadClassifier::init(net, head_seed(cfg.seed, k, d))?);
        head_opts.insert(d, OptimState::new(cfg.optim));
    }
    let mut trunk_opt = OptimState::new(cfg.optim);
    let mut rng = derived_rng(cfg.seed, "batches", k as u64);
    let (mut loss_sum, mut seen, mut steps) = (0.0, 0usize, 0usize);
    for _ in 0..cfg.epochs_per_episode {
        let mut batches: Vec<(u32, Vec<&EncodedSample>)> = Vec::new();
        for (&d, samples) in &data {
            let mut order = samples.clone();
            order.shuffle(&mut rng);
            batches.extend(order.chunks(cfg.batch_size).map(|c| (d, c.to_vec())));
        }
        batches.shuffle(&mut rng);
        for (d, batch) in batches {
            let x = to_batch(batch.iter().copied(), &net)?;
            let labels: Vec<usize> = batch.iter().map(|s| s.label.index()).collect();
            let head = heads.get_mut(&d).expect("head exists for every data domain");
            let (loss, grads, cache) = loss_and_grads(&trunk, head, &x, &labels)?;
            if !loss.is_finite() {
                return Err(Error::invalid(format!("episode {k}: loss diverged")));
            }
            trunk.update_running_stats(&cache);
            sgd_step(&mut trunk.trainable_mut(), &grads.trunk, &mut trunk_opt)?;
            sgd_step(&mut head.trainable_mut(), &grads.head, head_opts.get_mut(&d).unwrap())?;
            loss_sum += loss * labels.len() as f64;
            seen += labels.len();
            steps += 1;
        }
    }
    model.episodes.push(EpisodeModel {
        index: k,
        trunk,
        heads,
    });
    Ok(EpisodeStats {
        trained: data.keys().copied().collect(),
        replay_counts,
        samples_seen: seen,
        steps,
        mean_loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
    })
}

/// Higher = replay first. Falls back to zeros when no episode covers the
/// domain yet.
fn replay_scores(model: &EnsembleModel, buffer: &ReplayBuffer, d: u32, policy: Rehearsal) -> Result<Vec<f64>> {
    let stored: Vec<EncodedSample> = buffer.samples(d).into_iter().map(|s| s.sample.clone()).collect();
    let probs = match model.predict_batch(&stored, d) {
        Ok(p) => p,
        Err(Error::DomainNotTrained(_)) => return Ok(vec![0.0; stored.len()]),
        Err(e) => return Err(e),
    };
    let k = model.net.num_classes;
    Ok(probs
        .chunks(k)
        .zip(&stored)
        .map(|(row, s)| match policy {
            Rehearsal::MinConfidence => 1.0 - row.iter().copied().fold(0.0, f64::max),
            _ => -row[s.label.index()].max(f64::MIN_POSITIVE).ln(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u32,
    pub stats: EpisodeStats,
    /// Row of the accuracy matrix filled after this episode.
    pub accuracies: Vec<f64>,
    /// Weights computed after this episode, used to select for the next.
    pub weights: DomainWeights,
    pub checkpoint_sha256: String,
}

/// Final ensemble output on one domain's test split.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPredictions {
    pub domain_id: u32,
    pub labels: Vec<usize>,
    /// Row-major `[N, num_classes]`.
    pub probs: Vec<f64>,
    pub num_classes: usize,
}

impl DomainPredictions {
    /// Arg-max class per sample, ties to the lower class.
    pub fn predicted(&self) -> Vec<usize> {
        self.probs.chunks(self.num_classes).map(argmax).collect()
    }

    pub fn accuracy(&self) -> f64 {
        accuracy(&self.probs, &self.labels, self.num_classes)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy(probs: &[f64], labels: &[usize], k: usize) -> f64 {
    let hits = probs
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    hits as f64 / labels.len() as f64
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub model: EnsembleModel,
    pub accuracy: AccuracyMatrix,
    pub episodes: Vec<EpisodeRecord>,
    pub predictions: Vec<DomainPredictions>,
    /// Checkpoint hashes of episodes `1..=k` taken right after episode `k`.
    pub hashes_mid_run: Vec<Vec<String>>,
}

/// Running sum of the per-episode probabilities for one domain.
struct Accumulator {
    test: Vec<f64>,
    val: Vec<f64>,
    models: usize,
}

impl Accumulator {
    fn mean(sum: &[f64], models: usize) -> Vec<f64> {
        sum.iter().map(|s| s / models as f64).collect()
    }
}

/// Number of trailing train samples held out for the domain weights.
fn validation_len(n: usize, fraction: f64) -> usize {
    if fraction <= 0.0 || n < 2 {
        return 0;
    }
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// The full episode loop over domains `1..=D` in order.
pub fn run_sequence(domains: &[DomainImages], image_size: usize, cfg: &RunConfig) -> Result<RunOutput> {
    let d_total = domains.len();
    cfg.validate(d_total)?;
    for (i, d) in domains.iter().enumerate() {
        if d.domain_id as usize != i + 1 {
            return Err(Error::config("domains", format!("expected domain {} at position {i}", i + 1)));
        }
        if d.test.is_empty() {
            return Err(Error::config("benchmark.test_per_domain", format!("domain {} has no test samples", i + 1)));
        }
    }
    let plane = image_size * image_size;
    let per_sample = domains
        .first()
        .and_then(|d| d.train.first())
        .map(|s| s.planes.len())
        .ok_or_else(|| Error::config("domains", "no training samples"))?;
    if plane == 0 || per_sample % plane != 0 {
        return Err(Error::config("encoder.image_size", "does not match the stored images"));
    }
    let net = cfg.net_config(per_sample / plane, image_size);
    net.validate()?;

    let mut train_sets: Vec<&[EncodedSample]> = Vec::with_capacity(d_total);
    let mut val_sets: Vec<&[EncodedSample]> = Vec::with_capacity(d_total);
    for d in domains {
        let cut = d.train.len() - validation_len(d.train.len(), cfg.validation_fraction);
        train_sets.push(&d.train[..cut]);
        val_sets.push(&d.train[cut..]);
    }
    let k_classes = net.num_classes;
    let mut acc_state: Vec<Accumulator> = domains
        .iter()
        .enumerate()
        .map(|(i, d)| Accumulator {
            test: vec![0.0; d.test.len() * k_classes],
            val: vec![0.0; val_sets[i].len() * k_classes],
            models: 0,
        })
        .collect();
    let test_labels: Vec<Vec<usize>> = domains
        .iter()
        .map(|d| d.test.iter().map(|s| s.label.index()).collect())
        .collect();

    let mut model = EnsembleModel::new(net);
    let mut buffer = ReplayBuffer::new(cfg.buffer);
    let mut matrix = AccuracyMatrix::new();
    let mut episodes = Vec::with_capacity(d_total);
    let mut hashes_mid_run = Vec::with_capacity(d_total);
    let mut weights = DomainWeights { w: vec![0.0; d_total] };

    for k in 1..=d_total as u32 {
        let selected = match cfg.mode {
            RunMode::Isolated => BTreeSet::from([k]),
            RunMode::Bolt => {
                let mut rng = derived_rng(cfg.seed, "select", k as u64);
                select_domains(&weights, k, cfg.b, cfg.selection, &mut rng)
            }
        };
        let stats = train_episode(&train_sets, &buffer, &mut model, cfg, k, &selected)?;
        let episode = model.episodes.last().expect("episode just trained");
        for d in episode.trained_domains() {
            let i = d as usize - 1;
            let slot = &mut acc_state[i];
            for (s, p) in slot.test.iter_mut().zip(episode.probs(&domains[i].test, d)?) {
                *s += p;
            }
            for (s, p) in slot.val.iter_mut().zip(episode.probs(val_sets[i], d)?) {
                *s += p;
            }
            slot.models += 1;
        }
        let row: Vec<f64> = (0..k as usize)
            .map(|i| {
                let slot = &acc_state[i];
                accuracy(&Accumulator::mean(&slot.test, slot.models), &test_labels[i], k_classes)
            })
            .collect();
        matrix.push_row(row.clone())?;

        let nll: Vec<f64> = (0..k as usize)
            .map(|i| {
                let slot = &acc_state[i];
                if val_sets[i].is_empty() {
                    return Err(Error::config(
                        "run.validation_fraction",
                        format!("domain {} has an empty validation slice", i + 1),
                    ));
                }
                let labels = val_sets[i].iter().map(|s| s.label.index());
                Ok(nll_of(&Accumulator::mean(&slot.val, slot.models), labels, k_classes))
            })
            .collect::<Result<_>>()?;
        weights = weights_from_nll(&nll, d_total)?;

        if cfg.mode == RunMode::Bolt {
            let mut rng = derived_rng(cfg.seed, "buffer", k as u64);
            buffer.insert(k, train_sets[k as usize - 1], &mut rng);
        }
        let hashes = model
            .episodes
            .iter()
            .map(|e| e.checkpoint_hash())
            .collect::<Result<Vec<_>>>()?;
        info!(
            "episode {k}: trained {:?}, {} samples, loss {:.4}, row mean {:.3}",
            stats.trained,
            stats.samples_seen,
            stats.mean_loss,
            row.iter().sum::<f64>() / row.len() as f64
        );
        episodes.push(EpisodeRecord {
            index: k,
            stats,
            accuracies: row,
            weights: weights.clone(),
            checkpoint_sha256: hashes.last().cloned().unwrap_or_default(),
        });
        hashes_mid_run.push(hashes);
    }

    let predictions = domains
        .iter()
        .enumerate()
        .map(|(i, d)| DomainPredictions {
            domain_id: d.domain_id,
            labels: test_labels[i].clone(),
            probs: Accumulator::mean(&acc_state[i].test, acc_state[i].models),
            num_classes: k_classes,
        })
        .collect();
    Ok(RunOutput {
        model,
        accuracy: matrix,
        episodes,
        predictions,
        hashes_mid_run,
    })
}
