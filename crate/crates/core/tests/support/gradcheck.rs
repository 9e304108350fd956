//! Central finite-difference oracle for the network gradients.

use boltrm_core::nn::{init_params, loss_and_grads, FeatureGenerator, HeadClassifier, NetConfig, Tensor};
use rand::seq::index::sample;
use rand::Rng;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`. Below a norm of 1e-8 both sides count as
/// zero and only the absolute difference is compared.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-8)
}

/// Central difference of `f` with respect to `x[i]` for each listed `i`.
pub fn numeric_grad(x: &mut [f64], coords: &[usize], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + eps;
            let up = f(x);
            x[i] = orig - eps;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn pick(len: usize, limit: Option<usize>, rng: &mut impl Rng) -> Vec<usize> {
    match limit {
        Some(k) if k < len => {
            let mut v = sample(rng, len, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

pub struct TensorCheck {
    pub name: String,
    pub rel_error: f64,
    pub compared: usize,
    /// Coordinates whose ±ε probes changed the ReLU/max-pool routing; the
    /// loss is not differentiable between the probes there.
    pub skipped: usize,
}

/// Checks every trainable tensor (trunk first, then the head's weight and
/// bias). With `limit`, only that many random coordinates per tensor.
pub fn check_network(
    h: &FeatureGenerator,
    g: &HeadClassifier,
    batch: &Tensor,
    labels: &[usize],
    eps: f64,
    limit: Option<usize>,
    skip_kinks: bool,
    rng: &mut impl Rng,
) -> Vec<TensorCheck> {
    let (_, grads, base_cache) = loss_and_grads(h, g, batch, labels).unwrap();
    let base_routing = base_cache.routing();
    let analytic: Vec<Tensor> = grads.trunk.into_iter().chain(grads.head).collect();
    let n_trunk = h.trainable().len();
    let mut out = Vec::new();
    for (t, grad) in analytic.iter().enumerate() {
        let coords = pick(grad.len(), limit, rng);
        let mut h2 = h.clone();
        let mut g2 = g.clone();
        let mut probe = |i: usize, value: f64| {
            let tensor = if t < n_trunk {
                h2.trainable_mut().swap_remove(t)
            } else {
                g2.trainable_mut().swap_remove(t - n_trunk)
            };
            let orig = tensor.data[i];
            tensor.data[i] = value;
            let (loss, _, cache) = loss_and_grads(&h2, &g2, batch, labels).unwrap();
            let tensor = if t < n_trunk {
                h2.trainable_mut().swap_remove(t)
            } else {
                g2.trainable_mut().swap_remove(t - n_trunk)
            };
            tensor.data[i] = orig;
            (loss, cache.routing())
        };
        let (mut analytic_kept, mut numeric_kept) = (Vec::new(), Vec::new());
        let mut skipped = 0;
        for &i in &coords {
            let x = grad_source(h, g, t, n_trunk).data[i];
            let (up, r_up) = probe(i, x + eps);
            let (down, r_down) = probe(i, x - eps);
            if skip_kinks && (r_up != base_routing || r_down != base_routing) {
                skipped += 1;
                continue;
            }
            analytic_kept.push(grad.data[i]);
            numeric_kept.push((up - down) / (2.0 * eps));
        }
        out.push(TensorCheck {
            name: tensor_name(h, t, n_trunk),
            rel_error: rel_error(&analytic_kept, &numeric_kept),
            compared: analytic_kept.len(),
            skipped,
        });
    }
    out
}

fn grad_source<'a>(h: &'a FeatureGenerator, g: &'a HeadClassifier, t: usize, n_trunk: usize) -> &'a Tensor {
    if t < n_trunk {
        h.trainable()[t]
    } else if t == n_trunk {
        &g.weight
    } else {
        &g.bias
    }
}

fn tensor_name(h: &FeatureGenerator, t: usize, n_trunk: usize) -> String {
    if t >= n_trunk {
        return ["head.weight", "head.bias"][t - n_trunk].to_string();
    }
    let mut names = Vec::new();
    for i in 1..=h.convs.len() {
        names.push(format!("conv{i}.weight"));
        names.push(format!("conv{i}.bias"));
        if i <= h.bns.len() {
            names.push(format!("bn{i}.gamma"));
            names.push(format!("bn{i}.beta"));
        }
    }
    names[t].clone()
}

/// Parameters for a gradient check: the training init with conv weights
/// widened to the ReLU-gain bound `√(6/fan_in)`, so pre-activations sit far
/// from the ReLU and max-pool ties relative to ε.
pub fn check_params(config: NetConfig, seed: u64) -> (FeatureGenerator, HeadClassifier) {
    let (mut h, g) = init_params(config, seed).expect("valid config");
    for t in h.trainable_mut() {
        if t.dims.len() == 4 {
            let gain = 6f64.sqrt();
            t.data.iter_mut().for_each(|w| *w *= gain);
        }
    }
    (h, g)
}
