//! Markov transition field encoding.
//!
//! A series is quantized into `q` equal-frequency states, a first-order
//! transition matrix `W` is estimated (row `i` is the distribution of the
//! state following state `i`), and the field `F[t][t'] = W[s_t][s_t']` is
//! reduced to an `S × S` image by non-overlapping block means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ClassLabel, DomainData, PassageRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct StateSequence {
    pub states: Vec<usize>,
    pub q: usize,
    /// Distinct upper bin boundaries; a value equal to an edge falls in the
    /// lower bin. Fewer than `q - 1` edges when quantiles coincide.
    pub bin_edges: Vec<f64>,
}

/// Assigns each value to an equal-frequency bin.
pub fn quantize<T: Copy + Into<f64>>(values: &[T], q: usize) -> Result<StateSequence> {
    if q < 2 {
        return Err(Error::invalid(format!("q must be at least 2, got {q}")));
    }
    if values.len() < 2 {
        return Err(Error::invalid("series needs at least two samples"));
    }
    let values: Vec<f64> = values.iter().map(|&v| v.into()).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    let mut bin_edges: Vec<f64> = Vec::with_capacity(q - 1);
    for j in 1..q {
        // The r-th smallest of n distinct values lands in bin floor(r q / n).
        let idx = (j * n).div_ceil(q) - 1;
        let edge = sorted[idx];
        if bin_edges.last().is_none_or(|&last| edge > last) {
            bin_edges.push(edge);
        }
    }
    let states = values
        .iter()
        .map(|&v| bin_edges.partition_point(|&e| e < v))
        .collect();
    Ok(StateSequence {
        states,
        q,
        bin_edges,
    })
}

/// Row-stochastic `q × q` transition matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub q: usize,
    w: Vec<f64>,
}

impl TransitionMatrix {
    /// Probability that state `j` follows state `i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.q + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.q..(i + 1) * self.q]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

/// Counts first-order transitions; rows never visited become uniform.
pub fn transition_matrix(states: &StateSequence) -> Result<TransitionMatrix> {
    let q = states.q;
    if states.states.len() < 2 {
        return Err(Error::invalid("need at least two states"));
    }
    if let Some(&bad) = states.states.iter().find(|&&s| s >= q) {
        return Err(Error::invalid(format!("state {bad} out of range for q = {q}")));
    }
    let mut counts = vec![0usize; q * q];
    for pair in states.states.windows(2) {
        counts[pair[0] * q + pair[1]] += 1;
    }
    let mut w = vec![0.0; q * q];
    for i in 0..q {
        let row = &counts[i * q..(i + 1) * q];
        let total: usize = row.iter().sum();
        for j in 0..q {
            w[i * q + j] = if total == 0 {
                1.0 / q as f64
            } else {
                row[j] as f64 / total as f64
            };
        }
    }
    Ok(TransitionMatrix { q, w })
}

/// The full `T × T` field, row-major. Quadratic in the series length; meant
/// for inspection and small series.
pub fn markov_field(states: &StateSequence, w: &TransitionMatrix) -> Vec<f64> {
    let s = &states.states;
    let mut field = Vec::with_capacity(s.len() * s.len());
    for &a in s {
        for &b in s {
            field.push(w.get(a, b));
        }
    }
    field
}

#[derive(Clone, Debug, PartialEq)]
pub struct MtfImage {
    pub size: usize,
    pub q: usize,
    pub source_len: usize,
    /// Row-major `size × size`, entries in [0, 1].
    pub data: Vec<f64>,
}

impl MtfImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }
}

/// Markov transition field of `values` reduced to `image_size × image_size`.
///
/// The series is trimmed at the start to a multiple of `image_size`; each
/// pixel is the mean of the field over one block of time pairs. The block
/// mean factorizes as `p_aᵀ W p_b / n²` with `p_a` the state histogram of
/// time block `a`, which avoids materializing the field.
pub fn mtf<T: Copy + Into<f64>>(values: &[T], q: usize, image_size: usize) -> Result<MtfImage> {
    if image_size < 2 {
        return Err(Error::invalid("image size must be at least 2"));
    }
    if values.len() < image_size {
        return Err(Error::invalid(format!(
            "series of length {} shorter than image size {image_size}",
            values.len()
        )));
    }
    let trimmed = &values[values.len() % image_size..];
    let states = quantize(trimmed, q)?;
    let w = transition_matrix(&states)?;
    let block = trimmed.len() / image_size;

    // histograms[a * q + i]: occurrences of state i in time block a
    let mut histograms = vec![0.0f64; image_size * q];
    for (t, &s) in states.states.iter().enumerate() {
        histograms[(t / block) * q + s] += 1.0;
    }
    // projected[a * q + j] = Σ_i hist[a][i] · W[i][j]
    let mut projected = vec![0.0f64; image_size * q];
    for a in 0..image_size {
        for i in 0..q {
            let h = histograms[a * q + i];
            if h == 0.0 {
                continue;
            }
            for j in 0..q {
                projected[a * q + j] += h * w.get(i, j);
            }
        }
    }
    let norm = (block * block) as f64;
    let mut data = vec![0.0; image_size * image_size];
    for a in 0..image_size {
        for b in 0..image_size {
            let mut acc = 0.0;
            for j in 0..q {
                acc += projected[a * q + j] * histograms[b * q + j];
            }
            data[a * image_size + b] = (acc / norm).clamp(0.0, 1.0);
        }
    }
    Ok(MtfImage {
        size: image_size,
        q,
        source_len: trimmed.len(),
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFusion {
    /// Acceleration plane followed by strain plane.
    TwoChannel,
    AccelOnly,
    StrainOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub q: usize,
    pub image_size: usize,
    pub fusion: ChannelFusion,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            q: 8,
            image_size: 32,
            fusion: ChannelFusion::TwoChannel,
        }
    }
}

impl EncoderConfig {
    pub fn channels(&self) -> usize {
        match self.fusion {
            ChannelFusion::TwoChannel => 2,
            ChannelFusion::AccelOnly | ChannelFusion::StrainOnly => 1,
        }
    }

    /// Floats per encoded sample.
    pub fn sample_len(&self) -> usize {
        self.channels() * self.image_size * self.image_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::config("encoder.q", "must be at least 2"));
        }
        if self.image_size < 2 || self.image_size > u16::MAX as usize {
            return Err(Error::config("encoder.image_size", "must be in [2, 65535]"));
        }
        Ok(())
    }
}

/// Classifier input: `channels × size × size` planes plus the label.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub label: ClassLabel,
    pub planes: Vec<f32>,
}

pub fn encode_passage(record: &PassageRecord, cfg: &EncoderConfig) -> Result<EncodedSample> {
    encode_series(record.label, &record.accel.values, &record.strain.values, cfg)
}

/// Same as [`encode_passage`] for bare channel values, e.g. read back from
/// a dataset file.
pub fn encode_series(label: ClassLabel, accel: &[f32], strain: &[f32], cfg: &EncoderConfig) -> Result<EncodedSample> {
    let series: Vec<&[f32]> = match cfg.fusion {
        ChannelFusion::TwoChannel => vec![accel, strain],
        ChannelFusion::AccelOnly => vec![accel],
        ChannelFusion::StrainOnly => vec![strain],
    };
    let mut planes = Vec::with_capacity(cfg.sample_len());
    for values in series {
        let image = mtf(values, cfg.q, cfg.image_size)?;
        planes.extend(image.data.iter().map(|&v| v as f32));
    }
    Ok(EncodedSample { label, planes })
}

/// Encoded train and test splits of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainImages {
    pub domain_id: u32,
    pub train: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
}

pub fn encode_domain(data: &DomainData, cfg: &EncoderConfig) -> Result<DomainImages> {
    let encode = |records: &[PassageRecord]| {
        records
            .iter()
            .map(|r| encode_passage(r, cfg))
            .collect::<Result<Vec<_>>>()
    };
    Ok(DomainImages {
        domain_id: data.spec.domain_id,
        train: encode(&data.train)?,
        test: encode(&data.test)?,
    })
}
