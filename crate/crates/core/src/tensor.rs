use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Dense row-major tensor of rank 1..=5 with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 5 {
            return Err(TensorError::invalid(
                "tensor",
                format!("rank must be 1..=5, got {}", shape.len()),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::shape(
                "tensor",
                format!("shape {:?} implies {} elements, data has {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![T::ZERO; numel], grad: None }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![value; numel], grad: None }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value], grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated (zeroed) on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        if self.grad.is_none() {
            self.grad = Some(vec![T::ZERO; self.data.len()]);
        }
        self.grad.as_deref_mut().unwrap()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    pub fn accumulate_grad(&mut self, contribution: &[T]) {
        debug_assert_eq!(contribution.len(), self.data.len());
        let g = self.grad_mut();
        for (a, b) in g.iter_mut().zip(contribution) {
            *a += *b;
        }
    }

    pub(crate) fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    pub(crate) fn set_grad(&mut self, grad: Vec<T>) {
        debug_assert_eq!(grad.len(), self.data.len());
        self.grad = Some(grad);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret as (B, C, H, W).
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        if self.shape.len() != 4 {
            return Err(TensorError::shape("dims4", format!("expected rank 4, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3]))
    }

    /// Reinterpret as (B, C, D, H, W).
    pub fn dims5(&self) -> Result<(usize, usize, usize, usize, usize)> {
        if self.shape.len() != 5 {
            return Err(TensorError::shape("dims5", format!("expected rank 5, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3], self.shape[4]))
    }

    /// Convert element type, dropping any gradient buffer.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            grad: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_agreement_enforced() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![1; 6], vec![0.0]).is_err());
    }

    #[test]
    fn grad_lazily_allocated_matches_shape() {
        let mut t = Tensor::<f64>::zeros(vec![2, 2]);
        assert!(t.grad().is_none());
        t.grad_mut()[3] = 1.5;
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0, 0.0, 1.5]);
        t.accumulate_grad(&[1.0, 0.0, 0.0, 0.5]);
        assert_eq!(t.grad().unwrap(), &[1.0, 0.0, 0.0, 2.0]);
    }
}
