use super::params::ModelParams;
use super::preset::Architecture;
use super::spec::ConvBlockSpec;
use crate::error::{Error, Result};
use crate::tensor::{Activation, NormMode, Scalar, Tape, Tensor, Var};

/// Element-wise product of a `[N,C,1,1]` feature map with a `[N,C]` vector.
pub fn fuse<T: Scalar>(tape: &mut Tape<T>, branch: Var, trunk: Var) -> Result<Var> {
    let (b, t) = (tape.shape(branch).to_vec(), tape.shape(trunk).to_vec());
    if b.len() != 4 || b[2..] != [1, 1] || t.len() != 2 || b[..2] != t[..] {
        return Err(Error::Dimension(format!(
            "cannot fuse branch {b:?} with trunk {t:?}"
        )));
    }
    tape.mul(branch, trunk)
}

/// `[nz·nx, 2]` table of `(x, z)` pairs on `[-1, 1]`, row-major over depth.
pub fn coordinate_grid(nz: usize, nx: usize) -> Tensor<f32> {
    let axis = |i: usize, n: usize| {
        if n > 1 {
            2.0 * i as f32 / (n - 1) as f32 - 1.0
        } else {
            0.0
        }
    };
    let mut data = Vec::with_capacity(nz * nx * 2);
    for iz in 0..nz {
        for ix in 0..nx {
            data.push(axis(ix, nx));
            data.push(axis(iz, nz));
        }
    }
    Tensor::new(vec![nz * nx, 2], data).expect("consistent size")
}

/// One forward pass of a model recorded on a tape.
///
/// Binding copies every parameter onto the tape as a gradient-carrying leaf;
/// [`Session::grads`] reads the gradients back in registry order after
/// `tape.backward`.
pub struct Session<'p, T: Scalar> {
    params: &'p mut ModelParams<T>,
    vars: Vec<Var>,
    mode: NormMode,
}

impl<'p, T: Scalar> Session<'p, T> {
    pub fn bind(tape: &mut Tape<T>, params: &'p mut ModelParams<T>, mode: NormMode) -> Self {
        let vars = params.params.iter().map(|p| tape.param(&p.value)).collect();
        Self { params, vars, mode }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn var(&self, name: &str) -> Result<Var> {
        Ok(self.vars[self.params.position(name)?])
    }

    /// Gradients of every parameter, in registry order.
    pub fn grads(&self, tape: &Tape<T>) -> Result<Vec<Tensor<T>>> {
        self.params
            .params
            .iter()
            .zip(&self.vars)
            .map(|(p, &v)| {
                let g = tape
                    .grad(v)
                    .ok_or_else(|| Error::Graph(format!("no gradient for {}", p.name)))?;
                Tensor::new(p.value.shape().to_vec(), g.to_vec())
            })
            .collect()
    }

    fn block(
        &mut self,
        tape: &mut Tape<T>,
        x: Var,
        prefix: &str,
        spec: &ConvBlockSpec,
        transpose: bool,
        act: Activation,
    ) -> Result<Var> {
        let w = self.var(&format!("{prefix}.weight"))?;
        let y = if transpose {
            tape.conv_transpose2d(x, w, None, spec.geom())?
        } else {
            tape.conv2d(x, w, None, spec.geom())?
        };
        let gamma = self.var(&format!("{prefix}.gamma"))?;
        let beta = self.var(&format!("{prefix}.beta"))?;
        let mode = self.mode;
        let y = tape.batch_norm2d(y, gamma, beta, self.params.norm_mut(prefix)?, mode)?;
        Ok(tape.activation(act, y))
    }

    /// `[N,S,T,R]` gather to `[N,C,1,1]` features.
    pub fn encoder(&mut self, tape: &mut Tape<T>, gather: Var) -> Result<Var> {
        let spec = self.params.preset.encoder();
        let s = tape.shape(gather);
        if s.len() != 4 || s[1..] != spec.input {
            return Err(Error::Dimension(format!(
                "encoder expects [N, {}, {}, {}] input, got {s:?}",
                spec.input[0], spec.input[1], spec.input[2]
            )));
        }
        let mut x = gather;
        for (i, b) in spec.blocks.iter().enumerate() {
            x = self.block(
                tape,
                x,
                &format!("encoder.{i}"),
                b,
                false,
                Activation::leaky(),
            )?;
        }
        Ok(x)
    }

    /// `[N,D]` input to `[N,K]` non-negative features.
    pub fn trunk(&mut self, tape: &mut Tape<T>, input: Var) -> Result<Var> {
        let spec = self
            .params
            .preset
            .trunk()
            .ok_or_else(|| Error::State(format!("{} has no trunk", self.params.preset)))?;
        let s = tape.shape(input);
        if s.len() != 2 || s[1] != spec.input {
            return Err(Error::Dimension(format!(
                "trunk of {} expects [N, {}] input, got {s:?}",
                self.params.preset, spec.input
            )));
        }
        let mut x = input;
        for i in 0..spec.widths.len() {
            let w = self.var(&format!("trunk.{i}.weight"))?;
            let b = self.var(&format!("trunk.{i}.bias"))?;
            let y = tape.linear(x, w, Some(b))?;
            x = tape.activation(Activation::Relu, y);
        }
        Ok(x)
    }

    /// `[N,C,1,1]` features to a `[N,1,70,70]` image in `(-1, 1)`.
    pub fn decoder(&mut self, tape: &mut Tape<T>, fused: Var) -> Result<Var> {
        let spec = self
            .params
            .preset
            .decoder()
            .ok_or_else(|| Error::State(format!("{} has no decoder", self.params.preset)))?;
        let s = tape.shape(fused);
        if s.len() != 4 || s[1..] != [spec.in_channels, 1, 1] {
            return Err(Error::Dimension(format!(
                "decoder expects [N, {}, 1, 1] input, got {s:?}",
                spec.in_channels
            )));
        }
        let leaky = Activation::leaky();
        let mut x = fused;
        for (i, st) in spec.stages.iter().enumerate() {
            x = self.block(tape, x, &format!("decoder.{i}.up"), st, true, leaky)?;
            let same = ConvBlockSpec::same3(st.out_channels);
            x = self.block(tape, x, &format!("decoder.{i}.conv"), &same, false, leaky)?;
        }
        let x = tape.slice2d(x, spec.slice)?;
        self.block(
            tape,
            x,
            "decoder.head",
            &ConvBlockSpec::same3(1),
            false,
            Activation::Tanh,
        )
    }

    /// Decoder applied to the fused encoder and trunk features.
    pub fn inversion(&mut self, tape: &mut Tape<T>, gather: Var, xi: Var) -> Result<Var> {
        let branch = self.encoder(tape, gather)?;
        let trunk = self.trunk(tape, xi)?;
        let fused = fuse(tape, branch, trunk)?;
        self.decoder(tape, fused)
    }

    /// `[N,M]` values at `coords` (`[M,2]`): branch features dotted with the
    /// trunk features of each coordinate.
    pub fn vanilla(&mut self, tape: &mut Tape<T>, gather: Var, coords: Var) -> Result<Var> {
        let branch = self.encoder(tape, gather)?;
        let s = tape.shape(branch).to_vec();
        let branch = tape.reshape(branch, vec![s[0], s[1]])?;
        let trunk = self.trunk(tape, coords)?;
        tape.linear(branch, trunk, None)
    }

    /// `[N,1,nz,nx]` image for any architecture. `xi` is required by
    /// Inversion-DeepONet and ignored otherwise.
    pub fn image(&mut self, tape: &mut Tape<T>, gather: Var, xi: Option<Var>) -> Result<Var> {
        match self.params.preset.arch {
            Architecture::InversionDeepOnet => {
                let xi = xi.ok_or_else(|| {
                    Error::InvalidArgument("Inversion-DeepONet needs source parameters".into())
                })?;
                self.inversion(tape, gather, xi)
            }
            Architecture::EncoderDecoder => {
                let branch = self.encoder(tape, gather)?;
                self.decoder(tape, branch)
            }
            Architecture::VanillaDeepOnet => {
                let (nz, nx) = self.params.preset.output_shape();
                let coords = tape.constant(coordinate_grid(nz, nx).cast());
                let n = tape.shape(gather)[0];
                let y = self.vanilla(tape, gather, coords)?;
                tape.reshape(y, vec![n, 1, nz, nx])
            }
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Eval-mode prediction, `[N,1,70,70]`.
    pub fn predict(&mut self, gather: &Tensor<T>, xi: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let mut s = Session::bind(&mut tape, self, NormMode::Eval);
        let g = tape.constant(gather.clone());
        let xi = xi.map(|x| tape.constant(x.clone()));
        let y = s.image(&mut tape, g, xi)?;
        let mut out = tape.value(y).clone();
        out.set_grad(None)?;
        Ok(out.with_requires_grad(false))
    }
}
