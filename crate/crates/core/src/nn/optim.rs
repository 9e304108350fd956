use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            momentum: 0.85,
            weight_decay: 5e-5,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optim.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("optim.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("optim.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

/// SGD with momentum and L2 weight decay. Velocities are created on the
/// first step to match the parameter list.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub config: OptimConfig,
    pub velocity: Vec<Tensor>,
}

impl OptimState {
    pub fn new(config: OptimConfig) -> Self {
        Self {
            config,
            velocity: Vec::new(),
        }
    }
}

/// `v ← m·v − lr·(g + wd·p)`, then `p ← p + v`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], opt: &mut OptimState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dims != g.dims {
            return Err(Error::invalid(format!(
                "tensor {i}: parameter dims {:?} vs gradient dims {:?}",
                p.dims, g.dims
            )));
        }
    }
    if opt.velocity.is_empty() {
        opt.velocity = params.iter().map(|p| Tensor::zeros(&p.dims)).collect();
    } else if opt.velocity.len() != params.len()
        || opt.velocity.iter().zip(params.iter()).any(|(v, p)| v.dims != p.dims)
    {
        return Err(Error::invalid("optimizer state does not match parameters"));
    }
    let OptimConfig {
        lr,
        momentum,
        weight_decay,
    } = opt.config;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(opt.velocity.iter_mut()) {
        for ((pv, gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
            *vv = momentum * *vv - lr * (gv + weight_decay * *pv);
            *pv += *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    fn opt(lr: f64, momentum: f64, weight_decay: f64) -> OptimState {
        OptimState::new(OptimConfig {
            lr,
            momentum,
            weight_decay,
        })
    }

    #[test]
    fn zero_grad_is_fixed_point() {
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut o = opt(0.1, 0.9, 0.0);
        sgd_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut o).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn plain_step() {
        let mut p = scalar(1.0);
        let mut o = opt(0.005, 0.0, 0.0);
        sgd_step(&mut [&mut p], &[scalar(1.0)], &mut o).unwrap();
        assert!((p.data[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn momentum_unrolls() {
        let (lr, m, g) = (0.005, 0.85, 2.0);
        let mut p = scalar(0.0);
        let mut o = opt(lr, m, 0.0);
        sgd_step(&mut [&mut p], &[scalar(g)], &mut o).unwrap();
        let after_first = p.data[0];
        sgd_step(&mut [&mut p], &[scalar(g)], &mut o).unwrap();
        let second = p.data[0] - after_first;
        assert!((second - (-lr * g * (1.0 + m))).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_to_zero() {
        let mut p = scalar(2.0);
        let mut o = opt(0.1, 0.0, 0.5);
        sgd_step(&mut [&mut p], &[scalar(0.0)], &mut o).unwrap();
        assert!((p.data[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar(1.0);
        let mut o = opt(0.1, 0.0, 0.0);
        assert!(sgd_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut o).is_err());
        assert!(sgd_step(&mut [&mut p], &[], &mut o).is_err());
    }
}
