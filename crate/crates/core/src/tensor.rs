//! Dense linear algebra and differentiable layer primitives.
//!
//! Every forward function here has a matching `*_backward` that maps an
//! upstream gradient to input (and parameter) gradients. The network in
//! [`crate::model`] is written entirely in terms of these pairs, so the
//! gradient of the full loss is exact up to floating point.
//!
//! Vectors are plain `&[f64]` / `Vec<f64>`. Matrices are row-major [`Matrix`].

use std::fmt;

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}, {:?})", self.rows, self.cols, self.data)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("Matrix::from_rows", "ragged rows", c));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(
                "matvec",
                format!("{}x{}", self.rows, self.cols),
                format!("vector of length {}", x.len()),
            ));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn matvec_transposed(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += a bᵀ`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, &bc) in row.iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W x + b`.
pub fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if b.len() != w.rows() {
        return Err(Error::shape(
            "affine",
            format!("W {}x{}", w.rows(), w.cols()),
            format!("bias of length {}", b.len()),
        ));
    }
    let mut y = w.matvec(x)?;
    for (yi, bi) in y.iter_mut().zip(b) {
        *yi += bi;
    }
    Ok(y)
}

/// Backward pass of [`affine`]. Accumulates `∂W += g xᵀ` and `∂b += g`
/// and returns `∂x = Wᵀ g`.
pub fn affine_backward(w: &Matrix, x: &[f64], grad_y: &[f64], grad_w: &mut Matrix, grad_b: &mut [f64]) -> Vec<f64> {
    grad_w.add_outer(grad_y, x);
    for (gb, g) in grad_b.iter_mut().zip(grad_y) {
        *gb += g;
    }
    w.matvec_transposed(grad_y)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Subgradient at exactly zero is 0.
pub fn relu_backward(x: &[f64], grad_y: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(grad_y)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

/// Max-shifted softmax. Returns an empty vector for empty input.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Given `α = softmax(z)` and `∂L/∂α`, returns `∂L/∂z = α ⊙ (g − ⟨α, g⟩)`.
pub fn softmax_backward(alpha: &[f64], grad_alpha: &[f64]) -> Vec<f64> {
    let mean = dot(alpha, grad_alpha);
    alpha.iter().zip(grad_alpha).map(|(a, g)| a * (g - mean)).collect()
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape("hadamard", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

pub fn concat(parts: &[&[f64]]) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::Empty("concat input"));
    }
    Ok(parts.concat())
}

/// Mean squared error `(1/M) Σ (pᵢ − tᵢ)²`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("mse", pred, target)?;
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// `∂ mse / ∂ predᵢ = 2 (pᵢ − tᵢ) / M`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_pair("mse_grad", pred, target)?;
    let m = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / m).collect())
}

fn check_pair(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty("prediction vector"));
    }
    Ok(())
}

/// A fully connected layer `y = W x + b` with its backward rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        affine(&self.weight, &self.bias, x)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂x`.
    pub fn backward(&self, x: &[f64], grad_y: &[f64], grads: &mut Dense) -> Vec<f64> {
        affine_backward(&self.weight, x, grad_y, &mut grads.weight, &mut grads.bias)
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }
}
