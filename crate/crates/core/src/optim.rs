//! Adam with bias correction, plus the named parameter set it updates.

use crate::error::{Result, TensorError};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<T>) -> usize {
        debug_assert!(!self.names.iter().any(|n| n == name), "duplicate parameter {}", name);
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    /// Uniform init in +-sqrt(1/fan_in).
    pub fn add_uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, rng: &mut SplitMix64) -> usize {
        let bound = (1.0 / fan_in as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data: Vec<T> = (0..numel).map(|_| T::from_f64(rng.uniform(-bound, bound))).collect();
        self.add(name, Tensor::new(shape, data).expect("init shape"))
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> usize {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, idx: usize) -> &Tensor<T> {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    /// Register every parameter as a tape leaf, in order.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<TensorId> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(|t| t.cast()).collect() }
    }
}

/// Adam state: one pair of moment buffers per parameter.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: (0..params.len()).map(|i| vec![T::ZERO; params.get(i).numel()]).collect(),
            v: (0..params.len()).map(|i| vec![T::ZERO; params.get(i).numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `grads[i]` pairs with parameter i; a
    /// missing gradient leaves that parameter untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<&[T]>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(TensorError::invalid(
                "adam_step",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.len() != params.get(i).numel() {
                    return Err(TensorError::shape(
                        "adam_step",
                        format!("gradient length {} vs parameter {}", g.len(), params.get(i).numel()),
                    ));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::NonFinite {
                        op: "adam_step",
                        detail: format!("gradient of parameter {}", params.names()[i]),
                    });
                }
            }
        }
        self.step += 1;
        let bc1 = T::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (lr, eps) = (T::from_f64(self.lr), T::from_f64(self.eps));
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.get_mut(i).data_mut();
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (T::ONE - b1) * g[j];
                v[j] = b2 * v[j] + (T::ONE - b2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
