use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Bounds;
use crate::error::{Error, Result};
use crate::wavesim::{Source, SourceSet};

pub const N_SOURCES: usize = 5;
pub const FIXED_FREQUENCY: f64 = 15.0;
pub const FREQUENCY_RANGE: (f64, f64) = (5.0, 25.0);
pub const FIXED_LOCATIONS: [f64; N_SOURCES] = [0.0, 172.5, 345.0, 517.5, 690.0];
pub const LOCATION_WINDOWS: [(f64, f64); N_SOURCES] = [
    (0.0, 50.0),
    (122.5, 222.5),
    (295.0, 395.0),
    (467.5, 567.5),
    (640.0, 690.0),
];

/// Which source parameters vary between samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    /// Per-source frequency varies, locations fixed.
    F,
    /// Per-source location varies inside its window, frequency fixed.
    L,
    FL,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::F, DatasetKind::L, DatasetKind::FL];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::F => "F",
            DatasetKind::L => "L",
            DatasetKind::FL => "FL",
        }
    }

    pub fn varies_frequency(self) -> bool {
        matches!(self, DatasetKind::F | DatasetKind::FL)
    }

    pub fn varies_location(self) -> bool {
        matches!(self, DatasetKind::L | DatasetKind::FL)
    }

    /// Length of the encoded source-parameter vector.
    pub fn xi_len(self) -> usize {
        match self {
            DatasetKind::F | DatasetKind::L => N_SOURCES,
            DatasetKind::FL => 2 * N_SOURCES,
        }
    }

    pub fn frequency_bounds(self, _source: usize) -> (f64, f64) {
        if self.varies_frequency() {
            FREQUENCY_RANGE
        } else {
            (FIXED_FREQUENCY, FIXED_FREQUENCY)
        }
    }

    pub fn location_bounds(self, source: usize) -> (f64, f64) {
        if self.varies_location() {
            LOCATION_WINDOWS[source]
        } else {
            (FIXED_LOCATIONS[source], FIXED_LOCATIONS[source])
        }
    }

    /// Errors unless every source lies inside the windows of this kind.
    pub fn check(self, sources: &SourceSet) -> Result<()> {
        if sources.len() != N_SOURCES {
            return Err(Error::InvalidArgument(format!(
                "{} sources, expected {N_SOURCES}",
                sources.len()
            )));
        }
        for (i, s) in sources.sources.iter().enumerate() {
            let (f0, f1) = self.frequency_bounds(i);
            let (x0, x1) = self.location_bounds(i);
            if !(f0..=f1).contains(&s.frequency) || !(x0..=x1).contains(&s.x) {
                return Err(Error::InvalidArgument(format!(
                    "source {i} (f={} Hz, xs={} m) outside kind {self} windows \
                     f∈[{f0}, {f1}], xs∈[{x0}, {x1}]",
                    s.frequency, s.x
                )));
            }
        }
        Ok(())
    }

    /// Trunk input: normalized frequencies for F, normalized locations for
    /// L, both (frequencies first) for FL.
    pub fn encode(self, sources: &SourceSet) -> Result<Vec<f32>> {
        self.check(sources)?;
        let freq = Bounds::new(FREQUENCY_RANGE.0, FREQUENCY_RANGE.1)?;
        let mut xi = Vec::with_capacity(self.xi_len());
        if self.varies_frequency() {
            xi.extend(
                sources
                    .sources
                    .iter()
                    .map(|s| freq.normalize(s.frequency) as f32),
            );
        }
        if self.varies_location() {
            for (i, s) in sources.sources.iter().enumerate() {
                let (lo, hi) = LOCATION_WINDOWS[i];
                xi.push(Bounds::new(lo, hi)?.normalize(s.x) as f32);
            }
        }
        Ok(xi)
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset kind {s:?}")))
    }
}

/// Five independent uniform draws inside the windows of `kind`.
pub fn sample_sources(kind: DatasetKind, seed: u64) -> SourceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    };
    let sources = (0..N_SOURCES)
        .map(|i| {
            let frequency = draw(&mut rng, kind.frequency_bounds(i));
            let x = draw(&mut rng, kind.location_bounds(i));
            Source { frequency, x }
        })
        .collect();
    SourceSet::new(sources)
}
