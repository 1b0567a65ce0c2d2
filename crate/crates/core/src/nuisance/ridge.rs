use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cholesky_in_place, cholesky_solve, dot, Matrix};
use crate::{Error, Result};

/// Linear model `w'x + b` fit by penalized least squares; the bias is not penalized.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// Minimizes `sum (y - w'x - b)^2 + lambda * |w|^2` in closed form.
///
/// The normal equations are formed on centered data, which removes the bias
/// from the system, and solved by Cholesky. Zero entries are skipped when
/// accumulating the Gram matrix, so sparse rows such as hashed text
/// embeddings are cheap.
pub fn fit_ridge<R: AsRef<[f64]>>(xs: &[R], ys: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: ys.len() });
    }
    if n == 0 {
        return Err(Error::InvalidInput("ridge needs at least one row".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let d = xs[0].as_ref().len();
    if lambda == 0.0 && n < d + 1 {
        return Err(Error::InvalidInput(format!(
            "unpenalized ridge needs at least {} rows, got {n}; use lambda > 0",
            d + 1
        )));
    }
    let mut mean_x = vec![0.0; d];
    let mut mean_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let x = x.as_ref();
        if x.len() != d {
            return Err(Error::LengthMismatch { expected: d, found: x.len() });
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("y"));
        }
        for (m, v) in mean_x.iter_mut().zip(x) {
            if !v.is_finite() {
                return Err(Error::NonFinite("x"));
            }
            *m += v;
        }
        mean_y += y;
    }
    let nf = n as f64;
    mean_x.iter_mut().for_each(|m| *m /= nf);
    mean_y /= nf;

    // Lower triangle of sum x x' and sum x y, then centering corrections.
    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    let mut nz: Vec<(usize, f64)> = Vec::with_capacity(d);
    for (x, y) in xs.iter().zip(ys) {
        nz.clear();
        nz.extend(x.as_ref().iter().copied().enumerate().filter(|(_, v)| *v != 0.0));
        for (a, &(i, vi)) in nz.iter().enumerate() {
            rhs[i] += vi * y;
            for &(j, vj) in &nz[..=a] {
                gram.add(i, j, vi * vj);
            }
        }
    }
    for i in 0..d {
        rhs[i] -= nf * mean_x[i] * mean_y;
        for j in 0..=i {
            let v = gram.get(i, j) - nf * mean_x[i] * mean_x[j];
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
        gram.add(i, i, lambda);
    }
    cholesky_in_place(&mut gram).map_err(|e| match e {
        Error::Singular(msg) if lambda == 0.0 => {
            Error::Singular(format!("{msg}; features are collinear, use lambda > 0"))
        }
        other => other,
    })?;
    let weights = cholesky_solve(&gram, &rhs);
    let bias = mean_y - dot(&weights, &mean_x);
    Ok(RidgeModel { weights, bias, lambda })
}
