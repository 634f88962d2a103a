//! Dense n-dimensional array of f64 in row-major order.
//!
//! Arithmetic runs in f64 throughout the crate; 32-bit storage only appears
//! at the checkpoint boundary (see `model::checkpoint`).

use crate::error::{CtaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CtaError::shape(
                "Tensor::from_vec",
                format!("{expected} values for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the same buffer under a new shape of equal volume.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn bit_identical(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Collects the given rows of the leading axis into a new tensor.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let Some((&n, rest)) = self.shape.split_first() else {
            return Err(CtaError::shape("gather_rows", "rank >= 1", "rank 0"));
        };
        let row = rest.iter().product::<usize>();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            if i >= n {
                return Err(CtaError::invalid("gather_rows", format!("index {i} out of {n} rows")));
            }
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor::from_vec(&shape, data)
    }

    /// Snaps every value onto the f32 grid (the checkpoint storage precision).
    ///
    /// Parameter stores keep committed values on this grid so that the f32
    /// checkpoint format round-trips bit-exactly.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_volume() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn quantize_is_idempotent() {
        let mut t = Tensor::from_vec(&[3], vec![0.1, 1.0 / 3.0, -2.7182818284590455]).unwrap();
        t.quantize_f32();
        let once = t.clone();
        t.quantize_f32();
        assert!(t.bit_identical(&once));
    }
}
