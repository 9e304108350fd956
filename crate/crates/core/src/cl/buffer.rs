use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{BufferConfig, Maintenance, Rehearsal};
use crate::mtf::EncodedSample;
use crate::seed::Rng;
use crate::sim::ClassLabel;

/// A buffered sample and its position in the domain's stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Stored {
    pub stream_index: usize,
    pub sample: EncodedSample,
}

#[derive(Clone, Debug, Default)]
struct ClassReservoir {
    seen: usize,
    items: Vec<Stored>,
}

#[derive(Clone, Debug)]
enum DomainStore {
    Reservoir([ClassReservoir; ClassLabel::COUNT]),
    Fifo(VecDeque<Stored>),
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    pub config: BufferConfig,
    stores: BTreeMap<u32, DomainStore>,
    streamed: BTreeMap<u32, usize>,
}

/// Splits `total` slots in proportion to `weights`; leftover slots go to the
/// largest fractional shares, ties to the lower index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

impl ReplayBuffer {
    pub fn new(config: BufferConfig) -> Self {
        Self {
            config,
            stores: BTreeMap::new(),
            streamed: BTreeMap::new(),
        }
    }

    pub fn count(&self, domain_id: u32) -> usize {
        match self.stores.get(&domain_id) {
            Some(DomainStore::Reservoir(classes)) => classes.iter().map(|c| c.items.len()).sum(),
            Some(DomainStore::Fifo(q)) => q.len(),
            None => 0,
        }
    }

    pub fn domains(&self) -> impl Iterator<Item = u32> + '_ {
        self.stores.keys().copied()
    }

    /// Buffered samples of a domain, ordered by class then slot.
    pub fn samples(&self, domain_id: u32) -> Vec<&Stored> {
        match self.stores.get(&domain_id) {
            Some(DomainStore::Reservoir(classes)) => classes.iter().flat_map(|c| &c.items).collect(),
            Some(DomainStore::Fifo(q)) => q.iter().collect(),
            None => Vec::new(),
        }
    }

    pub fn insert(&mut self, domain_id: u32, samples: &[EncodedSample], rng: &mut Rng) {
        let cap = self.config.capacity_per_domain;
        let offset = *self.streamed.get(&domain_id).unwrap_or(&0);
        *self.streamed.entry(domain_id).or_default() += samples.len();
        let store = self.stores.entry(domain_id).or_insert_with(|| match self.config.maintenance {
            Maintenance::Reservoir => DomainStore::Reservoir(Default::default()),
            Maintenance::Fifo => DomainStore::Fifo(VecDeque::new()),
        });
        match store {
            DomainStore::Fifo(queue) => {
                for (i, s) in samples.iter().enumerate() {
                    if queue.len() == cap {
                        queue.pop_front();
                    }
                    queue.push_back(Stored {
                        stream_index: offset + i,
                        sample: s.clone(),
                    });
                }
            }
            DomainStore::Reservoir(classes) => {
                let mut totals = [0usize; ClassLabel::COUNT];
                for (t, c) in totals.iter_mut().zip(classes.iter()) {
                    *t = c.seen;
                }
                for s in samples {
                    totals[s.label.index()] += 1;
                }
                let weights: Vec<f64> = totals.iter().map(|&t| t as f64).collect();
                let caps = largest_remainder(&weights, cap);
                for (class, &c) in classes.iter_mut().zip(&caps) {
                    while class.items.len() > c {
                        let victim = rng.random_range(0..class.items.len());
                        class.items.swap_remove(victim);
                    }
                }
                for (i, s) in samples.iter().enumerate() {
                    let k = s.label.index();
                    let class = &mut classes[k];
                    class.seen += 1;
                    let item = Stored {
                        stream_index: offset + i,
                        sample: s.clone(),
                    };
                    if class.items.len() < caps[k] {
                        class.items.push(item);
                    } else {
                        let j = rng.random_range(0..class.seen);
                        if j < caps[k] {
                            class.items[j] = item;
                        }
                    }
                }
            }
        }
    }

    /// Picks `n` buffered samples of a domain. `scores` (one per entry of
    /// [`Self::samples`], higher = more useful) is required by the
    /// confidence- and loss-driven policies.
    pub fn draw(&self, domain_id: u32, n: usize, scores: Option<&[f64]>, rng: &mut Rng) -> Vec<&Stored> {
        let all = self.samples(domain_id);
        let n = n.min(all.len());
        match (self.config.rehearsal, scores) {
            (Rehearsal::MinConfidence | Rehearsal::MaxLoss, Some(scores)) => {
                let mut order: Vec<usize> = (0..all.len()).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                order.into_iter().take(n).map(|i| all[i]).collect()
            }
            _ => {
                let mut by_class: Vec<Vec<&Stored>> = vec![Vec::new(); ClassLabel::COUNT];
                for s in &all {
                    by_class[s.sample.label.index()].push(s);
                }
                for group in &mut by_class {
                    group.shuffle(rng);
                }
                let mut out = Vec::with_capacity(n);
                let mut round = 0;
                while out.len() < n {
                    for group in &by_class {
                        if let Some(s) = group.get(round) {
                            if out.len() < n {
                                out.push(*s);
                            }
                        }
                    }
                    round += 1;
                }
                out
            }
        }
    }
}

pub fn buffer_insert(buffer: &mut ReplayBuffer, domain_id: u32, samples: &[EncodedSample], rng: &mut Rng) {
    buffer.insert(domain_id, samples, rng);
}
