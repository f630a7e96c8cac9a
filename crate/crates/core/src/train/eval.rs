use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::predict_samples;
use super::metrics;
use crate::datagen::{Bounds, Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{write_atomic, ModelParams};

/// Metrics of one predicted image. `mae`/`rmse` are in normalized units,
/// the `_mps` variants in m/s; `ssim` and `re` use m/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub index: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mae_mps: f64,
    pub rmse_mps: f64,
    pub ssim: f64,
    pub re: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub split: String,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mae_mps: f64,
    pub rmse_mps: f64,
    pub ssim: f64,
    pub re: f64,
    pub per_sample: Vec<SampleScore>,
}

impl EvalReport {
    /// Averages per-sample scores after ordering them by sample index.
    pub fn from_scores(
        config_fingerprint: String,
        split: &str,
        mut scores: Vec<SampleScore>,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "split {split:?} has no samples"
            )));
        }
        scores.sort_by_key(|s| s.index);
        let n = scores.len() as f64;
        let mean = |f: fn(&SampleScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            config_fingerprint,
            split: split.to_string(),
            n: scores.len(),
            mae: mean(|s| s.mae),
            rmse: mean(|s| s.rmse * s.rmse).sqrt(),
            mae_mps: mean(|s| s.mae_mps),
            rmse_mps: mean(|s| s.rmse_mps * s.rmse_mps).sqrt(),
            ssim: mean(|s| s.ssim),
            re: mean(|s| s.re),
            per_sample: scores,
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(path.as_ref(), |w| writeln!(w, "{json}"))
    }
}

/// Scores a normalized `nz×nx` prediction against a normalized truth.
pub fn score_image(
    index: usize,
    pred: &[f32],
    truth: &[f32],
    velocity: Bounds,
    (nz, nx): (usize, usize),
) -> Result<SampleScore> {
    let p: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
    let t: Vec<f64> = truth.iter().map(|&v| v as f64).collect();
    let pp: Vec<f64> = p.iter().map(|&v| velocity.denormalize(v)).collect();
    let tp: Vec<f64> = t.iter().map(|&v| velocity.denormalize(v)).collect();
    Ok(SampleScore {
        index,
        mae: metrics::mae(&p, &t)?,
        rmse: metrics::rmse(&p, &t)?,
        mae_mps: metrics::mae(&pp, &tp)?,
        rmse_mps: metrics::rmse(&pp, &tp)?,
        ssim: metrics::ssim(&pp, &tp, nz, nx, velocity.hi - velocity.lo)?,
        re: metrics::relative_error_one(&pp, &tp)?,
    })
}

/// Scores `predict` over a split. `predict` maps a chunk of samples to one
/// normalized image per sample.
pub fn evaluate_with<F>(
    ds: &Dataset,
    split: &str,
    config_fingerprint: String,
    predict: F,
) -> Result<EvalReport>
where
    F: Fn(&[&Sample]) -> Result<Vec<Vec<f32>>> + Sync,
{
    const CHUNK: usize = 16;
    let range = ds.manifest.split.range(split)?;
    let bounds = ds.manifest.normalization.velocity()?;
    let shape = (ds.manifest.family.nz, ds.manifest.family.nx);
    let starts: Vec<usize> = range.clone().step_by(CHUNK).collect();
    let scores: Vec<Vec<SampleScore>> = starts
        .into_par_iter()
        .map(|start| {
            let samples = ds.load_range(start..(start + CHUNK).min(range.end))?;
            let refs: Vec<&Sample> = samples.iter().collect();
            let preds = predict(&refs)?;
            if preds.len() != refs.len() {
                return Err(Error::Dimension(format!(
                    "{} predictions for {} samples",
                    preds.len(),
                    refs.len()
                )));
            }
            refs.iter()
                .zip(&preds)
                .map(|(s, p)| score_image(s.index, p, s.velocity.data(), bounds, shape))
                .collect()
        })
        .collect::<Result<_>>()?;
    EvalReport::from_scores(config_fingerprint, split, scores.concat())
}

/// Eval-mode metrics of a model over a split.
pub fn evaluate(
    params: &ModelParams,
    ds: &Dataset,
    split: &str,
    config_fingerprint: String,
) -> Result<EvalReport> {
    params
        .preset()
        .check_data(ds.manifest.kind, &ds.manifest.grid)?;
    evaluate_with(ds, split, config_fingerprint, |s| {
        predict_samples(params, s)
    })
}

/// Mean velocity, m/s, over every cell of the training split.
pub fn mean_velocity(ds: &Dataset) -> Result<f64> {
    let range = ds.manifest.split.train();
    if range.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let (mut total, mut n) = (0.0f64, 0usize);
    for i in range {
        let v = ds.velocity_raw(i)?;
        total += v.data().iter().map(|&x| x as f64).sum::<f64>();
        n += v.numel();
    }
    Ok(total / n as f64)
}

/// Scores the constant prediction `velocity_mps` over a split.
pub fn evaluate_constant(
    ds: &Dataset,
    split: &str,
    velocity_mps: f64,
    config_fingerprint: String,
) -> Result<EvalReport> {
    let value = ds
        .manifest
        .normalization
        .velocity()?
        .normalize(velocity_mps) as f32;
    evaluate_with(ds, split, config_fingerprint, |s| {
        Ok(s.iter().map(|x| vec![value; x.velocity.numel()]).collect())
    })
}

/// The "predict the dataset-mean velocity everywhere" baseline.
pub fn mean_baseline(ds: &Dataset, split: &str) -> Result<EvalReport> {
    let v = mean_velocity(ds)?;
    evaluate_constant(ds, split, v, format!("mean-velocity-baseline:{v}"))
}
