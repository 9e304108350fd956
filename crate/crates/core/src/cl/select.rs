use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EnsembleModel, Selection};
use crate::error::{Error, Result};
use crate::mtf::EncodedSample;
use crate::seed::Rng;

/// Replay weights over all `D` domains; zero for domains not yet seen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainWeights {
    pub w: Vec<f64>,
}

impl DomainWeights {
    /// Weight of a 1-based domain id.
    pub fn get(&self, domain_id: u32) -> f64 {
        self.w.get(domain_id as usize - 1).copied().unwrap_or(0.0)
    }
}

/// `w_i ∝ exp(mean NLL_i)` for the first `mean_nll.len()` domains.
pub fn weights_from_nll(mean_nll: &[f64], num_domains: usize) -> Result<DomainWeights> {
    if mean_nll.is_empty() || mean_nll.len() > num_domains {
        return Err(Error::invalid(format!(
            "{} losses for {num_domains} domains",
            mean_nll.len()
        )));
    }
    if mean_nll.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("mean NLL must be finite and non-negative"));
    }
    // shift by the maximum so large losses cannot overflow
    let top = mean_nll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = mean_nll.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut w = vec![0.0; num_domains];
    for (slot, r) in w.iter_mut().zip(&raw) {
        *slot = r / total;
    }
    Ok(DomainWeights { w })
}

/// Mean negative log-likelihood of the ensemble on each evaluation set.
/// `eval_sets[i]` belongs to domain `i + 1`; probabilities are floored at
/// the smallest positive double so a confident miss stays finite.
pub fn mean_nll(model: &EnsembleModel, eval_sets: &[&[EncodedSample]]) -> Result<Vec<f64>> {
    eval_sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let domain = i as u32 + 1;
            if set.is_empty() {
                return Err(Error::config(
                    "run.validation_fraction",
                    format!("domain {domain} has an empty evaluation set"),
                ));
            }
            let probs = model.predict_batch(set, domain)?;
            Ok(nll_of(&probs, set.iter().map(|s| s.label.index()), model.net.num_classes))
        })
        .collect()
}

pub(crate) fn nll_of(probs: &[f64], labels: impl Iterator<Item = usize>, k: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (row, y) in probs.chunks(k).zip(labels) {
        total -= row[y].max(f64::MIN_POSITIVE).ln();
        n += 1;
    }
    total / n as f64
}

/// Weights after episode `k` from the ensemble's loss on domains `1..=k`.
pub fn compute_weights(
    model: &EnsembleModel,
    eval_sets: &[&[EncodedSample]],
    k: usize,
    num_domains: usize,
) -> Result<DomainWeights> {
    if eval_sets.len() < k {
        return Err(Error::invalid(format!("need {k} evaluation sets, got {}", eval_sets.len())));
    }
    weights_from_nll(&mean_nll(model, &eval_sets[..k])?, num_domains)
}

fn ranked(candidates: &[u32], weights: &DomainWeights, heaviest_first: bool) -> Vec<u32> {
    let mut v = candidates.to_vec();
    v.sort_by(|&a, &b| {
        let (wa, wb) = (weights.get(a), weights.get(b));
        let by_weight = if heaviest_first { wb.total_cmp(&wa) } else { wa.total_cmp(&wb) };
        by_weight.then(a.cmp(&b))
    });
    v
}

/// Slots given to the minority side of the 10/90 splits.
fn tenth(slots: usize) -> usize {
    if slots < 2 {
        0
    } else {
        ((slots as f64 * 0.1).round() as usize).max(1)
    }
}

/// Domains trained in episode `k_next`: the new one plus up to `b − 1` of
/// the earlier ones.
pub fn select_domains(
    weights: &DomainWeights,
    k_next: u32,
    b: usize,
    selection: Selection,
    rng: &mut Rng,
) -> BTreeSet<u32> {
    let mut chosen = BTreeSet::from([k_next]);
    let candidates: Vec<u32> = (1..k_next).collect();
    let slots = b.saturating_sub(1).min(candidates.len());
    if slots == 0 {
        return chosen;
    }
    let mut take_split = |high: usize| {
        let heavy = ranked(&candidates, weights, true);
        chosen.extend(heavy.iter().take(high));
        let light = ranked(&candidates, weights, false);
        let rest: Vec<u32> = light.into_iter().filter(|d| !heavy[..high].contains(d)).collect();
        chosen.extend(rest.iter().take(slots - high));
    };
    match selection {
        Selection::Highest => take_split(slots),
        Selection::Split50 => take_split(slots.div_ceil(2)),
        Selection::Split10High => take_split(tenth(slots)),
        Selection::Split10Low => take_split(slots - tenth(slots)),
        Selection::Multinomial => {
            let mut pool = candidates.clone();
            for _ in 0..slots {
                let total: f64 = pool.iter().map(|&d| weights.get(d)).sum();
                let pick = if total > 0.0 {
                    let mut u = rng.random::<f64>() * total;
                    // rounding can leave u ≥ 0 after the loop; fall back to the
                    // last domain that actually has weight
                    let mut idx = pool.iter().rposition(|&d| weights.get(d) > 0.0).unwrap_or(0);
                    for (i, &d) in pool.iter().enumerate() {
                        u -= weights.get(d);
                        if u < 0.0 {
                            idx = i;
                            break;
                        }
                    }
                    idx
                } else {
                    rng.random_range(0..pool.len())
                };
                chosen.insert(pool.remove(pick));
            }
        }
    }
    chosen
}
