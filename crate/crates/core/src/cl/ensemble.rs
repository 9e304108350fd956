use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::formats::{checkpoint_map, read_checkpoint, write_checkpoint};
use crate::mtf::EncodedSample;
use crate::nn::{FeatureGenerator, HeadClassifier, Mode, NetConfig, Tensor};
use crate::seed::sha256_hex;

/// Inference chunk; bounds the activation memory of a forward pass.
const EVAL_CHUNK: usize = 64;

/// Stacks samples into an `[N, C, S, S]` tensor.
pub fn to_batch<'a>(samples: impl IntoIterator<Item = &'a EncodedSample>, net: &NetConfig) -> Result<Tensor> {
    let per = net.in_channels * net.image_size * net.image_size;
    let mut data = Vec::new();
    let mut n = 0;
    for s in samples {
        if s.planes.len() != per {
            return Err(Error::shape(
                "input",
                format!("sample has {} values, network expects {per}", s.planes.len()),
            ));
        }
        data.extend(s.planes.iter().map(|&v| v as f64));
        n += 1;
    }
    Tensor::from_vec(&[n, net.in_channels, net.image_size, net.image_size], data)
}

/// One trunk plus a head for every domain trained in that episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeModel {
    /// 1-based episode number, equal to the domain it introduced.
    pub index: u32,
    pub trunk: FeatureGenerator,
    pub heads: BTreeMap<u32, HeadClassifier>,
}

impl EpisodeModel {
    pub fn trained_domains(&self) -> impl Iterator<Item = u32> + '_ {
        self.heads.keys().copied()
    }

    pub fn covers(&self, domain_id: u32) -> bool {
        self.heads.contains_key(&domain_id)
    }

    /// Row-major `[N, num_classes]` probabilities of this episode's head for
    /// `domain_id`.
    pub fn probs(&self, samples: &[EncodedSample], domain_id: u32) -> Result<Vec<f64>> {
        let head = self
            .heads
            .get(&domain_id)
            .ok_or(Error::DomainNotTrained(domain_id))?;
        let mut out = Vec::with_capacity(samples.len() * self.trunk.config.num_classes);
        for chunk in samples.chunks(EVAL_CHUNK) {
            let batch = to_batch(chunk, &self.trunk.config)?;
            let (features, _) = self.trunk.features(&batch, Mode::Eval)?;
            out.extend(head.probs(&features)?.data);
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.heads.values().map(|h| h.param_count()).sum::<usize>()
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .trunk
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("trunk.{n}"), t))
            .collect();
        for (d, head) in &self.heads {
            out.extend(head.named_tensors().into_iter().map(|(n, t)| (format!("head.{d}.{n}"), t)));
        }
        out
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        write_checkpoint(&self.named_tensors())
    }

    pub fn checkpoint_hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.checkpoint_bytes()?))
    }

    pub fn from_checkpoint(index: u32, net: NetConfig, bytes: &[u8]) -> Result<Self> {
        let mut tensors = checkpoint_map(read_checkpoint(bytes)?)?;
        let mut trunk_tensors = BTreeMap::new();
        let mut head_tensors: BTreeMap<u32, BTreeMap<String, Tensor>> = BTreeMap::new();
        for (name, t) in std::mem::take(&mut tensors) {
            if let Some(rest) = name.strip_prefix("trunk.") {
                trunk_tensors.insert(rest.to_string(), t);
            } else if let Some(rest) = name.strip_prefix("head.") {
                let (d, field) = rest
                    .split_once('.')
                    .ok_or_else(|| Error::Format(format!("bad head tensor name `{name}`")))?;
                let d: u32 = d
                    .parse()
                    .map_err(|_| Error::Format(format!("bad domain in `{name}`")))?;
                head_tensors.entry(d).or_default().insert(field.to_string(), t);
            } else {
                return Err(Error::Format(format!("unexpected tensor `{name}`")));
            }
        }
        let trunk = FeatureGenerator::from_named(net, &trunk_tensors)?;
        let mut heads = BTreeMap::new();
        for (d, mut fields) in head_tensors {
            let mut head = HeadClassifier::zeros(net);
            for (field, slot) in [("weight", &mut head.weight), ("bias", &mut head.bias)] {
                let t = fields
                    .remove(field)
                    .ok_or_else(|| Error::Format(format!("head {d} lacks `{field}`")))?;
                if t.dims != slot.dims {
                    return Err(Error::Format(format!("head {d} `{field}` has dims {:?}", t.dims)));
                }
                *slot = t;
            }
            heads.insert(d, head);
        }
        Ok(Self { index, trunk, heads })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    pub net: NetConfig,
    pub episodes: Vec<EpisodeModel>,
}

impl EnsembleModel {
    pub fn new(net: NetConfig) -> Self {
        Self {
            net,
            episodes: Vec::new(),
        }
    }

    pub fn covering(&self, domain_id: u32) -> impl Iterator<Item = &EpisodeModel> {
        self.episodes.iter().filter(move |e| e.covers(domain_id))
    }

    /// Mean class distribution over every episode that trained `domain_id`.
    pub fn predict(&self, sample: &EncodedSample, domain_id: u32) -> Result<Vec<f64>> {
        self.predict_batch(std::slice::from_ref(sample), domain_id)
    }

    /// Row-major `[N, num_classes]` ensemble probabilities.
    pub fn predict_batch(&self, samples: &[EncodedSample], domain_id: u32) -> Result<Vec<f64>> {
        let mut sum = vec![0.0; samples.len() * self.net.num_classes];
        let mut count = 0usize;
        for episode in self.covering(domain_id) {
            for (s, p) in sum.iter_mut().zip(episode.probs(samples, domain_id)?) {
                *s += p;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::DomainNotTrained(domain_id));
        }
        sum.iter_mut().for_each(|s| *s /= count as f64);
        Ok(sum)
    }

    /// Trainable parameters across every trunk and head.
    pub fn param_count(&self) -> usize {
        self.episodes.iter().map(|e| e.param_count()).sum()
    }
}
