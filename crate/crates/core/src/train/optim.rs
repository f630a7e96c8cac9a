use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::write_atomic;
use crate::tensor::fwit::{self, Record};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moment buffers of AdamW with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T = f32> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> OptimState<T> {
    /// Zeroed moments for parameters of the given lengths.
    pub fn new(config: AdamWConfig, lengths: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// One update at learning rate `lr`. Every gradient is checked before
    /// any parameter changes, so a non-finite gradient leaves the state and
    /// the parameters untouched.
    pub fn update(&mut self, lr: f64, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[k].len() || g.len() != self.m[k].len() {
                return Err(Error::Dimension(format!(
                    "tensor {k}: parameter {} / gradient {} / moments {}",
                    p.len(),
                    g.len(),
                    self.m[k].len()
                )));
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of tensor {k} at entry {i}"
                )));
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let decay = T::of(1.0 - lr * c.weight_decay);
        let step_size = T::of(lr / bc1);
        let sqrt_bc2 = T::of(bc2.sqrt());
        let eps = T::of(c.eps);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let denom = v[i].sqrt() / sqrt_bc2 + eps;
                p[i] = p[i] * decay - step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct OptimIndex {
    config: AdamWConfig,
    step: u64,
    lengths: Vec<usize>,
}

impl OptimState<f32> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let index = OptimIndex {
            config: self.config,
            step: self.step,
            lengths: self.m.iter().map(Vec::len).collect(),
        };
        let json = serde_json::to_string(&index)?;
        write_atomic(path.as_ref(), |w| {
            fwit::write_json(w, &json)?;
            for buf in self.m.iter().chain(&self.v) {
                let t = Tensor::new(vec![buf.len()], buf.clone()).expect("1-D");
                fwit::write_tensor(w, &t)?;
            }
            Ok(())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let index: OptimIndex = match fwit::read_record(&mut r)? {
            Some(Record::Json(s)) => serde_json::from_str(&s)?,
            _ => {
                return Err(Error::Format(format!(
                    "{} is not an optimizer state",
                    path.display()
                )))
            }
        };
        let mut bufs = Vec::with_capacity(2 * index.lengths.len());
        for k in 0..2 * index.lengths.len() {
            let n = index.lengths[k % index.lengths.len()];
            match fwit::read_record(&mut r)? {
                Some(Record::Tensor(t)) if t.numel() == n => bufs.push(t.into_data()),
                _ => {
                    return Err(Error::Format(format!(
                        "optimizer buffer {k} missing or mis-sized"
                    )))
                }
            }
        }
        let v = bufs.split_off(index.lengths.len());
        Ok(Self {
            config: index.config,
            step: index.step,
            m: bufs,
            v,
        })
    }
}
