use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::preset::ModelPreset;
use super::spec::ConvBlockSpec;
use crate::error::{Error, Result};
use crate::tensor::{BatchNormState, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<T = f32> {
    pub name: String,
    pub state: BatchNormState<T>,
}

/// Named parameters and batch-norm statistics of one model, in a fixed
/// registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Scalar = f32> {
    pub(crate) preset: ModelPreset,
    pub(crate) params: Vec<Param<T>>,
    pub(crate) norms: Vec<Norm<T>>,
    index: HashMap<String, usize>,
    norm_index: HashMap<String, usize>,
}

/// Shape-only description of the registry, used by both initialization and
/// checkpoint validation.
pub(crate) struct Layout {
    pub params: Vec<(String, Vec<usize>, Init)>,
    pub norms: Vec<(String, usize)>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// He-uniform with the given fan-in.
    Weight(usize),
    /// Uniform in ±1/√fan_in.
    Bias(usize),
    Ones,
    Zeros,
}

impl Layout {
    fn block(&mut self, prefix: &str, in_ch: usize, b: &ConvBlockSpec, transpose: bool) {
        let (kh, kw) = b.kernel;
        let shape = if transpose {
            vec![in_ch, b.out_channels, kh, kw]
        } else {
            vec![b.out_channels, in_ch, kh, kw]
        };
        let fan_in = in_ch * kh * kw;
        self.params
            .push((format!("{prefix}.weight"), shape, Init::Weight(fan_in)));
        self.params
            .push((format!("{prefix}.gamma"), vec![b.out_channels], Init::Ones));
        self.params
            .push((format!("{prefix}.beta"), vec![b.out_channels], Init::Zeros));
        self.norms.push((prefix.to_string(), b.out_channels));
    }

    pub fn of(preset: &ModelPreset) -> Layout {
        let mut l = Layout {
            params: Vec::new(),
            norms: Vec::new(),
        };
        let enc = preset.encoder();
        let mut ch = enc.input[0];
        for (i, b) in enc.blocks.iter().enumerate() {
            l.block(&format!("encoder.{i}"), ch, b, false);
            ch = b.out_channels;
        }
        if let Some(trunk) = preset.trunk() {
            let mut width = trunk.input;
            for (i, &w) in trunk.widths.iter().enumerate() {
                l.params.push((
                    format!("trunk.{i}.weight"),
                    vec![w, width],
                    Init::Weight(width),
                ));
                l.params
                    .push((format!("trunk.{i}.bias"), vec![w], Init::Bias(width)));
                width = w;
            }
        }
        if let Some(dec) = preset.decoder() {
            let mut ch = dec.in_channels;
            for (i, s) in dec.stages.iter().enumerate() {
                l.block(&format!("decoder.{i}.up"), ch, s, true);
                l.block(
                    &format!("decoder.{i}.conv"),
                    s.out_channels,
                    &ConvBlockSpec::same3(s.out_channels),
                    false,
                );
                ch = s.out_channels;
            }
            l.block("decoder.head", ch, &ConvBlockSpec::same3(1), false);
        }
        l
    }
}

impl ModelParams<f32> {
    /// Fresh parameters drawn from `seed`.
    pub fn init(preset: ModelPreset, seed: u64) -> Self {
        let layout = Layout::of(&preset);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout
            .params
            .into_iter()
            .map(|(name, shape, init)| {
                let value = match init {
                    Init::Weight(fan) => {
                        let bound = (6.0 / fan as f64).sqrt() as f32;
                        Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
                    }
                    Init::Bias(fan) => {
                        let bound = (1.0 / fan as f64).sqrt() as f32;
                        Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
                    }
                    Init::Ones => Tensor::ones(shape),
                    Init::Zeros => Tensor::zeros(shape),
                };
                Param { name, value }
            })
            .collect();
        let norms = layout
            .norms
            .into_iter()
            .map(|(name, c)| Norm {
                name,
                state: BatchNormState::new(c),
            })
            .collect();
        Self::from_parts(preset, params, norms).expect("layout names are unique")
    }
}

impl<T: Scalar> ModelParams<T> {
    pub(crate) fn from_parts(
        preset: ModelPreset,
        params: Vec<Param<T>>,
        norms: Vec<Norm<T>>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate parameter {}", p.name)));
            }
        }
        let mut norm_index = HashMap::with_capacity(norms.len());
        for (i, n) in norms.iter().enumerate() {
            if norm_index.insert(n.name.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate norm {}", n.name)));
            }
        }
        Ok(Self {
            preset,
            params,
            norms,
            index,
            norm_index,
        })
    }

    pub fn preset(&self) -> ModelPreset {
        self.preset
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn norms(&self) -> &[Norm<T>] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [Norm<T>] {
        &mut self.norms
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.params[self.position(name)?].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self.position(name)?;
        Ok(&mut self.params[i].value)
    }

    pub(crate) fn norm_mut(&mut self, name: &str) -> Result<&mut BatchNormState<T>> {
        let i = *self
            .norm_index
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no batch norm named {name}")))?;
        Ok(&mut self.norms[i].state)
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            p.value.check_finite(&p.name)?;
        }
        for n in &self.norms {
            let s = &n.state;
            if s.running_mean
                .iter()
                .chain(&s.running_var)
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite(format!(
                    "running statistics of {}",
                    n.name
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            preset: self.preset,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|n| Norm {
                    name: n.name.clone(),
                    state: n.state.cast(),
                })
                .collect(),
            index: self.index.clone(),
            norm_index: self.norm_index.clone(),
        }
    }
}
