//! Learnable parameters, small layers, and the momentum-SGD trainer core.
//!
//! Layers are stateless in the forward pass: they return the activation
//! together with an explicit cache that the matching `backward` consumes.
//! Parameter gradients accumulate into `Param::grad` and are zeroed by the
//! optimizer at the start of each step.

use crate::error::Result;
use crate::ops;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// A learnable tensor with its accumulated gradient.
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }
}

/// He-normal initialization, std = sqrt(2 / fan_in).
pub fn he_normal<T: Scalar>(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| T::from_f64(rng.normal() * std)).collect())
        .expect("init shape")
}

// ---------------------------------------------------------------------------
// Conv layer (CHW single-sample convenience over ops::conv2d)
// ---------------------------------------------------------------------------

pub struct Conv2d<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
}

pub struct ConvCache<T: Scalar> {
    input: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        rng: &mut Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                he_normal(rng, &[out_ch, in_ch, kernel, kernel], fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_ch])),
            stride,
            pad,
        }
    }

    pub fn zero_init(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[out_ch, in_ch, kernel, kernel])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_ch])),
            stride,
            pad,
        }
    }

    /// x is C x H x W.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let [c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2]];
        let x4 = x.reshape(&[1, c, h, w])?;
        let y = ops::conv2d(&x4, &self.weight.value, Some(&self.bias.value), self.stride, self.pad)?;
        let ys = [y.shape()[1], y.shape()[2], y.shape()[3]];
        Ok((y.reshape(&ys)?, ConvCache { input: x4 }))
    }

    /// Accumulates weight/bias gradients, returns the input gradient (C x H x W).
    pub fn backward(&mut self, cache: &ConvCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let [c, h, w] = [grad_out.shape()[0], grad_out.shape()[1], grad_out.shape()[2]];
        let g4 = grad_out.reshape(&[1, c, h, w])?;
        let (dx, dw, db) = ops::conv2d_backward(&cache.input, &self.weight.value, &g4, self.stride, self.pad);
        self.weight.grad.add_assign(&dw)?;
        self.bias.grad.add_assign(&db)?;
        let ds = [dx.shape()[1], dx.shape()[2], dx.shape()[3]];
        dx.reshape(&ds)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Linear layer
// ---------------------------------------------------------------------------

pub struct Linear<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

pub struct LinearCache<T: Scalar> {
    input: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(rng: &mut Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), he_normal(rng, &[out_dim, in_dim], in_dim)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
        }
    }

    /// x is N x I.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LinearCache<T>)> {
        let y = ops::linear(x, &self.weight.value, &self.bias.value)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    pub fn backward(&mut self, cache: &LinearCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (dx, dw, db) = ops::linear_backward(&cache.input, &self.weight.value, grad_out);
        self.weight.grad.add_assign(&dw)?;
        self.bias.grad.add_assign(&db)?;
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

/// Momentum SGD; velocity buffers are keyed by parameter position, so callers
/// must always pass parameters in the same order.
pub struct SgdMomentum<T: Scalar> {
    pub momentum: T,
    velocities: Vec<Tensor<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(momentum: f64) -> Self {
        Self { momentum: T::from_f64(momentum), velocities: Vec::new() }
    }

    pub fn zero_grads(&mut self, params: &mut [&mut Param<T>]) {
        for p in params.iter_mut() {
            p.zero_grad();
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>], lr: f64) {
        if self.velocities.is_empty() {
            self.velocities = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        }
        assert_eq!(self.velocities.len(), params.len(), "parameter set changed between steps");
        let lr = T::from_f64(lr);
        for (p, v) in params.iter_mut().zip(self.velocities.iter_mut()) {
            for ((vi, &gi), pi) in v
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(p.value.data_mut().iter_mut())
            {
                *vi = self.momentum * *vi + gi;
                *pi -= lr * *vi;
            }
        }
    }
}

/// Linear warmup over the first `warmup_frac` of steps, then cosine decay to
/// zero.
#[derive(Debug, Clone)]
pub struct WarmupCosine {
    pub base_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
}

impl WarmupCosine {
    pub fn new(base_lr: f64, total_steps: usize) -> Self {
        Self { base_lr, total_steps, warmup_frac: 0.05 }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let warmup = ((self.total_steps as f64 * self.warmup_frac).ceil() as usize).max(1);
        if step < warmup {
            self.base_lr * (step + 1) as f64 / warmup as f64
        } else {
            let span = (self.total_steps - warmup).max(1) as f64;
            let t = (step - warmup) as f64 / span;
            self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t.min(1.0)).cos())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::assert_grad_check;

    #[test]
    fn conv_layer_gradcheck() {
        let mut rng = Rng::seed_from(5);
        let layer = Conv2d::<f64>::new(&mut rng, "c", 2, 3, 3, 2, 1);
        let mut data_rng = Rng::seed_from(6);
        let x = Tensor::from_vec(&[2, 6, 6], (0..72).map(|_| data_rng.normal()).collect()).unwrap();
        let w0 = layer.weight.value.clone();
        let inputs = [x, w0];
        assert_grad_check(
            |ins| {
                let l = Conv2d::<f64> {
                    weight: Param::new("w", ins[1].clone()),
                    bias: Param::new("b", Tensor::zeros(&[3])),
                    stride: 2,
                    pad: 1,
                };
                l.forward(&ins[0]).unwrap().0
            },
            |ins, g| {
                let mut l = Conv2d::<f64> {
                    weight: Param::new("w", ins[1].clone()),
                    bias: Param::new("b", Tensor::zeros(&[3])),
                    stride: 2,
                    pad: 1,
                };
                let (_, cache) = l.forward(&ins[0]).unwrap();
                let dx = l.backward(&cache, g).unwrap();
                vec![dx, l.weight.grad.clone()]
            },
            &inputs,
            1e-7,
            "conv layer",
        );
    }

    #[test]
    fn linear_layer_gradcheck() {
        let mut rng = Rng::seed_from(9);
        let layer = Linear::<f64>::new(&mut rng, "l", 4, 3);
        let x = Tensor::from_vec(&[2, 4], (0..8).map(|_| rng.normal()).collect()).unwrap();
        let inputs = [x, layer.weight.value.clone()];
        assert_grad_check(
            |ins| {
                let l = Linear::<f64> {
                    weight: Param::new("w", ins[1].clone()),
                    bias: Param::new("b", Tensor::zeros(&[3])),
                };
                l.forward(&ins[0]).unwrap().0
            },
            |ins, g| {
                let mut l = Linear::<f64> {
                    weight: Param::new("w", ins[1].clone()),
                    bias: Param::new("b", Tensor::zeros(&[3])),
                };
                let (_, cache) = l.forward(&ins[0]).unwrap();
                let dx = l.backward(&cache, g).unwrap();
                vec![dx, l.weight.grad.clone()]
            },
            &inputs,
            1e-7,
            "linear layer",
        );
    }

    #[test]
    fn schedule_shape() {
        let s = WarmupCosine::new(1e-3, 100);
        assert!(s.lr_at(0) > 0.0);
        assert!(s.lr_at(0) < s.lr_at(4));
        assert!((s.lr_at(5) - 1e-3).abs() < 1e-9); // warmup = 5 steps
        assert!(s.lr_at(60) < 1e-3);
        assert!(s.lr_at(99) < s.lr_at(60));
    }

    #[test]
    fn sgd_descends_quadratic() {
        // minimize 0.5 * x^2 elementwise
        let mut p = Param::new("x", Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap());
        let mut opt = SgdMomentum::new(0.9);
        for _ in 0..200 {
            {
                let mut ps = [&mut p];
                opt.zero_grads(&mut ps);
            }
            let g = p.value.clone();
            p.grad.add_assign(&g).unwrap();
            let mut ps = [&mut p];
            opt.step(&mut ps, 0.05);
        }
        assert!(p.value.data().iter().all(|x| x.abs() < 1e-3));
    }
}
