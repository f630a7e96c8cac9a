use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn same_len(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "metric over {} predicted and {} true values",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    mse(pred, truth).map(f64::sqrt)
}

/// `√(Σ|c − ĉ|² / Σ|c|²)` for one image.
pub fn relative_error_one(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    let energy: f64 = truth.iter().map(|t| t * t).sum();
    if energy == 0.0 {
        return Err(Error::InvalidArgument(
            "relative error of an all-zero true image".into(),
        ));
    }
    let err: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((err / energy).sqrt())
}

/// Mean over images of [`relative_error_one`].
pub fn relative_error(preds: &[&[f64]], truths: &[&[f64]]) -> Result<f64> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Dimension(format!(
            "relative error over {} predictions and {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        total += relative_error_one(p, t)?;
    }
    Ok(total / preds.len() as f64)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable "valid" filtering of an `nz×nx` image.
fn filter(img: &[f64], nz: usize, nx: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let (oz, ox) = (nz - k + 1, nx - k + 1);
    let mut rows = vec![0.0; nz * ox];
    for z in 0..nz {
        for x in 0..ox {
            rows[z * ox + x] = (0..k).map(|j| w[j] * img[z * nx + x + j]).sum();
        }
    }
    let mut out = vec![0.0; oz * ox];
    for z in 0..oz {
        for x in 0..ox {
            out[z * ox + x] = (0..k).map(|j| w[j] * rows[(z + j) * ox + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of two `nz×nx` images with an 11×11 Gaussian
/// window (σ = 1.5), evaluated where the window fits, and constants
/// `C1 = (0.01·L)²`, `C2 = (0.03·L)²` for dynamic range `L`.
pub fn ssim(pred: &[f64], truth: &[f64], nz: usize, nx: usize, range: f64) -> Result<f64> {
    same_len(pred, truth)?;
    if pred.len() != nz * nx || nz < SSIM_WINDOW || nx < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs an image of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {nz}x{nx} with {} values",
            pred.len()
        )));
    }
    if !(range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ssim dynamic range {range}"
        )));
    }
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let w = gaussian_window();
    let xy: Vec<f64> = pred.iter().zip(truth).map(|(a, b)| a * b).collect();
    let xx: Vec<f64> = pred.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = truth.iter().map(|b| b * b).collect();
    let mx = filter(pred, nz, nx, &w);
    let my = filter(truth, nz, nx, &w);
    let sxy = filter(&xy, nz, nx, &w);
    let sxx = filter(&xx, nz, nx, &w);
    let syy = filter(&yy, nz, nx, &w);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let cov = sxy[i] - a * b;
            let va = sxx[i] - a * a;
            let vb = syy[i] - b * b;
            ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}
