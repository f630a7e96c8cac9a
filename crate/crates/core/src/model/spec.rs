use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::kernels::ConvGeom;

/// One convolution (or transposed convolution) followed by batch norm and an
/// activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvBlockSpec {
    pub const fn new(
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// 3×3, stride 1, padding 1: keeps the spatial extent.
    pub const fn same3(out_channels: usize) -> Self {
        Self::new(out_channels, (3, 3), (1, 1), (1, 1))
    }

    pub fn geom(&self) -> ConvGeom {
        ConvGeom::new(self.stride, self.padding)
    }
}

/// Shape `(channels, height, width)` of one sample.
pub type Chw = [usize; 3];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input: Chw,
    pub blocks: Vec<ConvBlockSpec>,
}

impl EncoderSpec {
    /// Output shape after every block.
    pub fn shape_chain(&self) -> Result<Vec<Chw>> {
        let mut cur = self.input;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let (h, w) = b
                .geom()
                .conv_out(cur[1], cur[2], b.kernel.0, b.kernel.1)
                .map_err(|e| Error::Dimension(format!("encoder block {i}: {e}")))?;
            cur = [b.out_channels, h, w];
            out.push(cur);
        }
        Ok(out)
    }

    pub fn output(&self) -> Result<Chw> {
        Ok(self.shape_chain()?.last().copied().unwrap_or(self.input))
    }
}

/// Fully connected layers, each followed by ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkSpec {
    pub input: usize,
    pub widths: Vec<usize>,
}

impl TrunkSpec {
    pub fn output(&self) -> usize {
        self.widths.last().copied().unwrap_or(self.input)
    }
}

/// Upsampling stages, each a transposed-conv block then a channel-preserving
/// 3×3 conv block; then a centered slice and a final conv + BN + tanh to one
/// channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub in_channels: usize,
    pub stages: Vec<ConvBlockSpec>,
    pub slice: (usize, usize),
}

impl DecoderSpec {
    /// Shape after each stage, starting from a `1×1` map.
    pub fn shape_chain(&self) -> Result<Vec<Chw>> {
        let mut cur = [self.in_channels, 1, 1];
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let (h, w) = s
                .geom()
                .conv_transpose_out(cur[1], cur[2], s.kernel.0, s.kernel.1)
                .map_err(|e| Error::Dimension(format!("decoder stage {i}: {e}")))?;
            cur = [s.out_channels, h, w];
            out.push(cur);
        }
        Ok(out)
    }

    pub fn pre_slice(&self) -> Result<Chw> {
        Ok(self
            .shape_chain()?
            .last()
            .copied()
            .unwrap_or([self.in_channels, 1, 1]))
    }

    pub fn last_channels(&self) -> usize {
        self.stages
            .last()
            .map_or(self.in_channels, |s| s.out_channels)
    }
}

const fn tall(ch: usize, stride_h: usize) -> ConvBlockSpec {
    ConvBlockSpec::new(ch, (3, 1), (stride_h, 1), (1, 0))
}

const fn down2(ch: usize) -> ConvBlockSpec {
    ConvBlockSpec::new(ch, (3, 3), (2, 2), (1, 1))
}

const fn double(ch: usize) -> ConvBlockSpec {
    ConvBlockSpec::new(ch, (4, 4), (2, 2), (1, 1))
}

pub(crate) fn paper_encoder() -> EncoderSpec {
    let mut blocks = vec![
        ConvBlockSpec::new(32, (7, 1), (2, 1), (3, 0)),
        tall(32, 2),
        tall(64, 1),
        tall(64, 2),
        tall(128, 1),
        tall(128, 2),
        tall(256, 1),
        down2(256),
        down2(256),
        down2(512),
        down2(512),
        down2(512),
        down2(512),
    ];
    let mut spec = EncoderSpec {
        input: [5, 1000, 70],
        blocks: blocks.clone(),
    };
    let [_, h, w] = spec.output().expect("static ladder");
    blocks.push(ConvBlockSpec::new(512, (h, w), (1, 1), (0, 0)));
    spec.blocks = blocks;
    spec
}

pub(crate) fn desk_encoder() -> EncoderSpec {
    EncoderSpec {
        input: [5, 250, 70],
        blocks: vec![
            ConvBlockSpec::new(8, (7, 1), (2, 1), (3, 0)),
            tall(16, 2),
            tall(16, 1),
            tall(32, 2),
            down2(32),
            ConvBlockSpec::same3(64),
            down2(64),
            down2(128),
            down2(128),
            ConvBlockSpec::new(128, (2, 5), (1, 1), (0, 0)),
        ],
    }
}

pub(crate) fn paper_decoder() -> DecoderSpec {
    DecoderSpec {
        in_channels: 512,
        stages: vec![
            ConvBlockSpec::new(256, (5, 5), (1, 1), (0, 0)),
            double(128),
            double(64),
            double(32),
            double(16),
        ],
        slice: (70, 70),
    }
}

pub(crate) fn desk_decoder() -> DecoderSpec {
    DecoderSpec {
        in_channels: 128,
        stages: vec![
            ConvBlockSpec::new(64, (10, 10), (1, 1), (0, 0)),
            double(32),
            double(16),
            double(8),
        ],
        slice: (70, 70),
    }
}

pub(crate) fn trunk(input: usize, widths: &[usize]) -> TrunkSpec {
    TrunkSpec {
        input,
        widths: widths.to_vec(),
    }
}
