use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::{self, DecoderSpec, EncoderSpec, TrunkSpec};
use crate::datagen::DatasetKind;
use crate::error::{Error, Result};
use crate::wavesim::SimGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Encoder, trunk over source parameters, element-wise fusion, decoder.
    InversionDeepOnet,
    /// Encoder straight into decoder; no source parameters.
    EncoderDecoder,
    /// Encoder as branch, trunk over output coordinates, dot product.
    VanillaDeepOnet,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::InversionDeepOnet,
        Architecture::EncoderDecoder,
        Architecture::VanillaDeepOnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::InversionDeepOnet => "inversion-deeponet",
            Architecture::EncoderDecoder => "encoder-decoder",
            Architecture::VanillaDeepOnet => "vanilla-deeponet",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 1000 time samples, 512 features.
    Paper,
    /// 250 time samples, 128 features; trainable on one CPU core.
    Desk,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }

    pub fn grid(self) -> SimGrid {
        match self {
            Scale::Paper => SimGrid::paper(),
            Scale::Desk => SimGrid::desk(),
        }
    }

    fn trunk_widths(self) -> &'static [usize] {
        match self {
            Scale::Paper => &[128, 256, 512, 512],
            Scale::Desk => &[32, 64, 128, 128],
        }
    }
}

/// Architecture, size and dataset kind; written into checkpoints as
/// `arch/scale/kind`, e.g. `inversion-deeponet/desk/F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ModelPreset {
    pub arch: Architecture,
    pub scale: Scale,
    pub kind: DatasetKind,
}

impl ModelPreset {
    pub fn new(arch: Architecture, scale: Scale, kind: DatasetKind) -> Self {
        Self { arch, scale, kind }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn encoder(&self) -> EncoderSpec {
        match self.scale {
            Scale::Paper => spec::paper_encoder(),
            Scale::Desk => spec::desk_encoder(),
        }
    }

    pub fn trunk(&self) -> Option<TrunkSpec> {
        let widths = self.scale.trunk_widths();
        match self.arch {
            Architecture::InversionDeepOnet => Some(spec::trunk(self.kind.xi_len(), widths)),
            Architecture::EncoderDecoder => None,
            Architecture::VanillaDeepOnet => Some(spec::trunk(2, widths)),
        }
    }

    pub fn decoder(&self) -> Option<DecoderSpec> {
        match (self.arch, self.scale) {
            (Architecture::VanillaDeepOnet, _) => None,
            (_, Scale::Paper) => Some(spec::paper_decoder()),
            (_, Scale::Desk) => Some(spec::desk_decoder()),
        }
    }

    /// `(sources, time samples, receivers)` of one input gather.
    pub fn input_shape(&self) -> [usize; 3] {
        self.encoder().input
    }

    /// `(nz, nx)` of the predicted velocity image.
    pub fn output_shape(&self) -> (usize, usize) {
        (70, 70)
    }

    /// Length of the source-parameter vector the model consumes; zero for
    /// models without a trunk over ξ.
    pub fn xi_len(&self) -> usize {
        match self.arch {
            Architecture::InversionDeepOnet => self.kind.xi_len(),
            _ => 0,
        }
    }

    /// Errors unless a dataset recorded on `grid` with `kind` fits this preset.
    pub fn check_data(&self, kind: DatasetKind, grid: &SimGrid) -> Result<()> {
        let [s, t, r] = self.input_shape();
        let found = [crate::datagen::N_SOURCES, grid.n_record(), grid.nx];
        if kind != self.kind || found != [s, t, r] {
            return Err(Error::PresetMismatch {
                expected: format!("{self} with gathers {s}x{t}x{r}"),
                found: format!(
                    "kind {kind} with gathers {}x{}x{}",
                    found[0], found[1], found[2]
                ),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.arch.name(),
            self.scale.name(),
            self.kind
        )
    }
}

impl FromStr for ModelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown model preset {s:?}"));
        let parts: Vec<&str> = s.split('/').collect();
        let [arch, scale, kind] = parts[..] else {
            return Err(bad());
        };
        let arch = Architecture::ALL
            .into_iter()
            .find(|a| a.name() == arch)
            .ok_or_else(bad)?;
        let scale = match scale {
            "paper" => Scale::Paper,
            "desk" => Scale::Desk,
            _ => return Err(bad()),
        };
        Ok(Self::new(arch, scale, kind.parse()?))
    }
}

impl From<ModelPreset> for String {
    fn from(p: ModelPreset) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for ModelPreset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
