//! Reconstruction and classification losses with analytic gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Mean square error `(1/N) Σ (x_j - x'_j)^2` and its gradient w.r.t. the
/// reconstruction, `2 (x' - x) / N`.
pub fn mse_loss(x: ArrayView1<f64>, x_rec: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
    if x.len() != x_rec.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x_rec.len(),
            context: "mse_loss operands".into(),
        });
    }
    let n = x.len() as f64;
    let diff = &x_rec.to_owned() - &x;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.mapv(|d| 2.0 * d / n);
    Ok((loss, grad))
}

/// Batch MSE: mean of per-record MSE over the batch; gradient carries both
/// the 1/N and 1/batch factors.
pub fn mse_loss_batch(x: ArrayView2<f64>, x_rec: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if x.dim() != x_rec.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: x_rec.ncols(),
            context: "mse_loss_batch operands".into(),
        });
    }
    let n = x.ncols() as f64;
    let b = x.nrows() as f64;
    let diff = &x_rec.to_owned() - &x;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (n * b);
    let grad = diff.mapv(|d| 2.0 * d / (n * b));
    Ok((loss, grad))
}

/// Negative log-likelihood `-log_probs[label]` and its gradient.
pub fn nll_loss(log_probs: ArrayView1<f64>, label: usize) -> Result<(f64, Array1<f64>)> {
    if label >= log_probs.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: log_probs.len(),
        });
    }
    let loss = -log_probs[label];
    let mut grad = Array1::zeros(log_probs.len());
    grad[label] = -1.0;
    Ok((loss, grad))
}

/// Batch NLL: mean over records of `-log_probs[i, labels[i]]`.
pub fn nll_loss_batch(log_probs: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if labels.len() != log_probs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: log_probs.nrows(),
            got: labels.len(),
            context: "nll_loss_batch labels".into(),
        });
    }
    let b = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(log_probs.dim());
    for (i, &label) in labels.iter().enumerate() {
        if label >= log_probs.ncols() {
            return Err(Error::InvalidLabel {
                label,
                classes: log_probs.ncols(),
            });
        }
        loss -= log_probs[[i, label]];
        grad[[i, label]] = -1.0 / b;
    }
    Ok((loss / b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn mse_of_identical_vectors_is_zero() {
        let x = array![0.2, 0.7, 0.5];
        let (loss, grad) = mse_loss(x.view(), x.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_of_unit_offset() {
        let x = array![1.0, 1.0];
        let xr = array![0.0, 0.0];
        let (loss, _) = mse_loss(x.view(), xr.view()).unwrap();
        assert_abs_diff_eq!(loss, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mse_rejects_length_mismatch() {
        assert!(mse_loss(array![1.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn nll_certain_correct_prediction_is_zero() {
        let lp = array![0.0, -30.0];
        let (loss, _) = nll_loss(lp.view(), 0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn nll_uniform_prediction_is_ln2() {
        let ln2 = 2.0_f64.ln();
        let lp = array![-ln2, -ln2];
        let (loss, _) = nll_loss(lp.view(), 1).unwrap();
        assert_abs_diff_eq!(loss, ln2, epsilon = 1e-15);
    }

    #[test]
    fn nll_rejects_invalid_label() {
        assert!(nll_loss(array![-0.5, -1.0].view(), 2).is_err());
    }

    // Central finite differences as an independent oracle for the loss
    // gradients.
    fn fd_grad(f: impl Fn(&Array1<f64>) -> f64, at: &Array1<f64>, h: f64) -> Array1<f64> {
        let mut g = Array1::zeros(at.len());
        for i in 0..at.len() {
            let mut plus = at.clone();
            let mut minus = at.clone();
            plus[i] += h;
            minus[i] -= h;
            g[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let x = array![0.11, 0.92, -0.4, 0.67];
        let xr = array![0.3, 0.5, 0.1, -0.2];
        let (_, grad) = mse_loss(x.view(), xr.view()).unwrap();
        let fd = fd_grad(
            |v| mse_loss(x.view(), v.view()).unwrap().0,
            &xr,
            1e-6,
        );
        for (a, b) in grad.iter().zip(fd.iter()) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-8);
        }
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let lp = array![-0.3, -1.8, -2.4];
        let (_, grad) = nll_loss(lp.view(), 1).unwrap();
        let fd = fd_grad(|v| nll_loss(v.view(), 1).unwrap().0, &lp, 1e-6);
        for (a, b) in grad.iter().zip(fd.iter()) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-8);
        }
    }

    #[test]
    fn batch_losses_average_per_record_values() {
        let x = array![[1.0, 1.0], [0.0, 0.0]];
        let xr = array![[0.0, 0.0], [0.0, 0.0]];
        let (loss, _) = mse_loss_batch(x.view(), xr.view()).unwrap();
        assert_abs_diff_eq!(loss, 0.5, epsilon = 1e-15);

        let ln2 = 2.0_f64.ln();
        let lp = array![[0.0, -30.0], [-ln2, -ln2]];
        let (loss, _) = nll_loss_batch(lp.view(), &[0, 1]).unwrap();
        assert_abs_diff_eq!(loss, ln2 / 2.0, epsilon = 1e-15);
    }
}
