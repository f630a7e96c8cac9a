use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::{AdamWConfig, OptimState};
use crate::datagen::{Dataset, DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::model::{load_with, save_with, write_atomic, ModelParams, ModelPreset, Scale, Session};
use crate::tensor::{NormMode, Tape, Tensor};

pub const LAST_CHECKPOINT: &str = "last.fwit";
pub const BEST_CHECKPOINT: &str = "best.fwit";
pub const OPTIM_STATE: &str = "optim.fwit";
pub const LOSS_CURVE: &str = "loss.csv";
const CSV_HEADER: &str = "epoch,lr,train_mae,val_mae";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: ModelPreset,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_epoch: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// Train on the first `n` samples of the training split only.
    #[serde(default)]
    pub train_limit: Option<usize>,
}

impl TrainConfig {
    /// 120 epochs of batch 128 at 1e-3, dropping tenfold after epoch 60.
    pub fn paper(preset: ModelPreset) -> Self {
        Self {
            preset,
            batch_size: 128,
            epochs: 120,
            lr: 1e-3,
            lr_drop_factor: 10.0,
            lr_drop_epoch: 60,
            optimizer: AdamWConfig::default(),
            seed: 0,
            train_limit: None,
        }
    }

    /// 200 epochs of batch 10, dropping tenfold after epoch 100.
    pub fn desk(preset: ModelPreset) -> Self {
        Self {
            batch_size: 10,
            epochs: 200,
            lr_drop_epoch: 100,
            ..Self::paper(preset)
        }
    }

    pub fn for_preset(preset: ModelPreset) -> Self {
        match preset.scale {
            Scale::Paper => Self::paper(preset),
            Scale::Desk => Self::desk(preset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size < 2 {
            return bad(format!(
                "batch size {} (batch norm needs at least 2)",
                self.batch_size
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.lr_drop_factor > 0.0) {
            return bad(format!(
                "learning rate {} / drop factor {}",
                self.lr, self.lr_drop_factor
            ));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
            || !(o.eps > 0.0)
            || o.weight_decay < 0.0
        {
            return bad(format!("optimizer settings {o:?}"));
        }
        Ok(())
    }
}

/// Step schedule: `lr` before `lr_drop_epoch`, `lr / lr_drop_factor` from it on.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.lr_drop_epoch {
        cfg.lr
    } else {
        cfg.lr / cfg.lr_drop_factor
    }
}

/// Hex SHA-256 over the training config and the dataset manifest. Paths do
/// not enter, so identical runs in different directories agree.
pub fn config_fingerprint(cfg: &impl Serialize, manifest: &DatasetManifest) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    h.update(b"\n");
    h.update(serde_json::to_vec(manifest)?);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mae: f64,
    pub val_mae: Option<f64>,
}

impl EpochRecord {
    fn csv(&self) -> String {
        let val = self.val_mae.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{}", self.epoch, self.lr, self.train_mae, val)
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Format(format!("loss curve row {line:?}"));
        let f: Vec<&str> = line.split(',').collect();
        let [e, lr, tr, val] = f[..] else {
            return Err(bad());
        };
        Ok(Self {
            epoch: e.parse().map_err(|_| bad())?,
            lr: lr.parse().map_err(|_| bad())?,
            train_mae: tr.parse().map_err(|_| bad())?,
            val_mae: if val.is_empty() {
                None
            } else {
                Some(val.parse().map_err(|_| bad())?)
            },
        })
    }
}

/// Progress stored in the index of `last.fwit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Progress {
    config_fingerprint: String,
    epochs_done: usize,
    best_epoch: Option<usize>,
    best_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub config_fingerprint: String,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
}

/// Stacks samples into `[B,S,T,R]` gathers, `[B,L]` source parameters and
/// `[B,1,nz,nx]` velocities.
pub fn stack(samples: &[&Sample]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let b = samples.len();
    let cat = |f: &dyn Fn(&Sample) -> &[f32]| {
        samples
            .iter()
            .flat_map(|s| f(s).to_vec())
            .collect::<Vec<f32>>()
    };
    let mut gs = vec![b];
    gs.extend_from_slice(first.gather.shape());
    let mut vs = vec![b];
    vs.extend_from_slice(first.velocity.shape());
    let g = Tensor::new(gs, cat(&|s| s.gather.data()))?;
    let v = Tensor::new(vs, cat(&|s| s.velocity.data()))?;
    let xi = Tensor::new(vec![b, first.xi.len()], cat(&|s| &s.xi))?;
    Ok((g, xi, v))
}

/// Eval-mode predictions, one flattened image per sample.
pub fn predict_samples(params: &ModelParams, samples: &[&Sample]) -> Result<Vec<Vec<f32>>> {
    const CHUNK: usize = 8;
    let mut p = params.clone();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let (g, xi, _) = stack(chunk)?;
        let xi = (p.preset().xi_len() > 0).then_some(xi);
        let y = p.predict(&g, xi.as_ref())?;
        let per = y.numel() / chunk.len();
        out.extend(y.data().chunks(per).map(<[f32]>::to_vec));
    }
    Ok(out)
}

fn batch_mae(pred: &[Vec<f32>], samples: &[&Sample]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, s) in pred.iter().zip(samples) {
        total += p
            .iter()
            .zip(s.velocity.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>();
        n += p.len();
    }
    total / n as f64
}

fn write_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{CSV_HEADER}")?;
        for r in curve {
            writeln!(w, "{}", r.csv())?;
        }
        Ok(())
    })
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format(format!(
            "{} lacks the loss-curve header",
            path.display()
        )));
    }
    lines.map(EpochRecord::parse).collect()
}

/// Trains `cfg.preset` on the dataset in `data`, writing checkpoints and
/// the loss curve into `out`. With `resume`, continues from `out/last.fwit`
/// when it exists and was written under the same config and dataset.
pub fn train(
    cfg: &TrainConfig,
    data: impl AsRef<Path>,
    out: impl AsRef<Path>,
    resume: bool,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let out = out.as_ref();
    let ds = Dataset::open(data)?;
    cfg.preset.check_data(ds.manifest.kind, &ds.manifest.grid)?;
    // The horizon does not enter, so a finished run can be extended.
    let horizon_free = TrainConfig {
        epochs: 0,
        ..cfg.clone()
    };
    let fingerprint = config_fingerprint(&horizon_free, &ds.manifest)?;

    let mut train_range = ds.manifest.split.train();
    if let Some(n) = cfg.train_limit {
        train_range.end = train_range.end.min(train_range.start + n);
    }
    if train_range.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training split has {} samples; at least 2 are needed",
            train_range.len()
        )));
    }
    let train_set = ds.load_range(train_range)?;
    let val_set = ds.load_range(ds.manifest.split.val())?;
    let val_refs: Vec<&Sample> = val_set.iter().collect();

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (last, best, optim_path, curve_path) = (
        out.join(LAST_CHECKPOINT),
        out.join(BEST_CHECKPOINT),
        out.join(OPTIM_STATE),
        out.join(LOSS_CURVE),
    );

    let (mut params, mut optim, mut progress, mut curve) = if resume && last.exists() {
        let (params, extra) = load_with(&last)?;
        let progress: Progress = serde_json::from_value(extra).map_err(|e| {
            Error::Format(format!("{}: no training progress ({e})", last.display()))
        })?;
        if progress.config_fingerprint != fingerprint {
            return Err(Error::State(format!(
                "{} was written under a different config or dataset",
                last.display()
            )));
        }
        let optim = OptimState::load(&optim_path)?;
        let mut curve = read_curve(&curve_path)?;
        curve.truncate(progress.epochs_done);
        (params, optim, progress, curve)
    } else {
        let params = ModelParams::init(cfg.preset, cfg.seed);
        let lengths: Vec<usize> = params.params().iter().map(|p| p.value.numel()).collect();
        let progress = Progress {
            config_fingerprint: fingerprint.clone(),
            epochs_done: 0,
            best_epoch: None,
            best_score: None,
        };
        (
            params,
            OptimState::new(cfg.optimizer, &lengths),
            progress,
            Vec::new(),
        )
    };
    if params.preset() != cfg.preset {
        return Err(Error::PresetMismatch {
            expected: cfg.preset.id(),
            found: params.preset().id(),
        });
    }

    let batches_per_epoch = (train_set.len() / cfg.batch_size
        + usize::from(train_set.len() % cfg.batch_size >= 2)) as u64;
    if optim.step != progress.epochs_done as u64 * batches_per_epoch {
        return Err(Error::State(format!(
            "optimizer state at step {} does not match {} completed epochs",
            optim.step, progress.epochs_done
        )));
    }

    let use_xi = cfg.preset.xi_len() > 0;
    for epoch in progress.epochs_done..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let (mut loss_sum, mut seen) = (0.0f64, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (g, xi, v) = stack(&batch)?;
            let mut tape = Tape::new();
            let grads = {
                let mut s = Session::bind(&mut tape, &mut params, NormMode::Train);
                let gv = tape.constant(g);
                let xv = use_xi.then(|| tape.constant(xi));
                let y = s.image(&mut tape, gv, xv)?;
                let t = tape.constant(v);
                let loss = tape.mae(y, t)?;
                let value = tape.value(loss).data()[0] as f64;
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss at epoch {epoch}, batch {b}; last good checkpoint is {}",
                        last.display()
                    )));
                }
                loss_sum += value * idx.len() as f64;
                seen += idx.len();
                tape.backward(loss)?;
                s.grads(&tape)?
            };
            let grad_refs: Vec<&[f32]> = grads.iter().map(|t| t.data()).collect();
            let mut ps: Vec<&mut [f32]> = params
                .params_mut()
                .iter_mut()
                .map(|p| p.value.data_mut())
                .collect();
            optim.update(lr, &mut ps, &grad_refs)?;
        }
        params.check_finite()?;

        let train_mae = loss_sum / seen as f64;
        let val_mae = if val_refs.is_empty() {
            None
        } else {
            Some(batch_mae(&predict_samples(&params, &val_refs)?, &val_refs))
        };
        curve.push(EpochRecord {
            epoch,
            lr,
            train_mae,
            val_mae,
        });
        log::info!(
            "epoch {epoch}: lr {lr:e}, train MAE {train_mae:.5}, val MAE {}",
            val_mae.map_or("-".into(), |v| format!("{v:.5}"))
        );

        let score = val_mae.unwrap_or(train_mae);
        progress.epochs_done = epoch + 1;
        if progress.best_score.map_or(true, |b| score < b) {
            progress.best_score = Some(score);
            progress.best_epoch = Some(epoch);
        }
        let extra = serde_json::to_value(&progress)?;
        if progress.best_epoch == Some(epoch) {
            save_with(&params, &extra, &best)?;
        }
        optim.save(&optim_path)?;
        write_curve(&curve_path, &curve)?;
        save_with(&params, &extra, &last)?;
    }

    Ok(TrainSummary {
        out_dir: out.to_path_buf(),
        config_fingerprint: fingerprint,
        curve,
        best_epoch: progress.best_epoch,
        best_score: progress.best_score,
    })
}

/// Fingerprint stored in a checkpoint written by [`train`], if any.
pub fn checkpoint_fingerprint(extra: &serde_json::Value) -> Option<String> {
    extra
        .get("config_fingerprint")
        .and_then(|v| v.as_str())
        .map(str::to_string)
}
