use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavesim::{VelocityModel, V_CEIL, V_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    FlatVel,
    CurveVel,
    FlatFault,
    CurveFault,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [
        FamilyKind::FlatVel,
        FamilyKind::CurveVel,
        FamilyKind::FlatFault,
        FamilyKind::CurveFault,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::FlatVel => "flat_vel",
            FamilyKind::CurveVel => "curve_vel",
            FamilyKind::FlatFault => "flat_fault",
            FamilyKind::CurveFault => "curve_fault",
        }
    }

    fn curved(self) -> bool {
        matches!(self, FamilyKind::CurveVel | FamilyKind::CurveFault)
    }

    fn faulted(self) -> bool {
        matches!(self, FamilyKind::FlatFault | FamilyKind::CurveFault)
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown velocity family {s:?}")))
    }
}

/// Parameter ranges of one procedural velocity family. Ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub nx: usize,
    pub nz: usize,
    pub layers: (usize, usize),
    pub v_min: f64,
    pub v_max: f64,
    /// Interface undulation amplitude, cells.
    pub curvature: (f64, f64),
    /// Vertical fault offset, cells.
    pub throw: (usize, usize),
}

impl FamilySpec {
    pub fn preset(kind: FamilyKind) -> Self {
        Self {
            kind,
            nx: 70,
            nz: 70,
            layers: (2, 5),
            v_min: 1500.0,
            v_max: 4500.0,
            curvature: if kind.curved() {
                (3.0, 10.0)
            } else {
                (0.0, 0.0)
            },
            throw: if kind.faulted() { (5, 20) } else { (0, 0) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.nx < 2 || self.nz < 4 {
            return bad(format!("family grid {}x{} too small", self.nx, self.nz));
        }
        if self.layers.0 < 2 || self.layers.0 > self.layers.1 || self.layers.1 > self.nz / 2 {
            return bad(format!("layer count range {:?}", self.layers));
        }
        if self.v_min < V_FLOOR || self.v_max > V_CEIL || self.v_min >= self.v_max {
            return bad(format!("velocity range [{}, {}]", self.v_min, self.v_max));
        }
        let (c0, c1) = self.curvature;
        if !(c0 >= 0.0 && c0 <= c1 && c1.is_finite()) {
            return bad(format!("curvature range {:?}", self.curvature));
        }
        if self.throw.0 > self.throw.1 || self.throw.1 >= self.nz {
            return bad(format!("throw range {:?}", self.throw));
        }
        Ok(())
    }
}

/// Dipping line through `(x0, z0)`; cells at or right of it are shifted
/// down by `throw` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    pub x0: f64,
    pub z0: f64,
    /// Angle from horizontal, radians.
    pub dip: f64,
    pub throw: usize,
}

impl Fault {
    pub fn downthrown(&self, ix: usize, iz: usize) -> bool {
        ix as f64 >= self.x0 + (iz as f64 - self.z0) / self.dip.tan()
    }
}

/// Draws one layered model.
pub fn generate_velocity(spec: &FamilySpec, seed: u64) -> Result<VelocityModel> {
    generate_velocity_with_fault(spec, seed).map(|(m, _)| m)
}

/// Like [`generate_velocity`], also returning the fault it applied.
///
/// The draw order is fixed (layering, then curvature, then faulting) so a
/// curved family with zero amplitude yields exactly the flat model for the
/// same seed.
pub fn generate_velocity_with_fault(
    spec: &FamilySpec,
    seed: u64,
) -> Result<(VelocityModel, Option<Fault>)> {
    spec.validate()?;
    let (nx, nz) = (spec.nx, spec.nz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_layers = rng.gen_range(spec.layers.0..=spec.layers.1);
    let depths = interface_depths(&mut rng, n_layers - 1, nz);
    let velocities = layer_velocities(&mut rng, n_layers, spec.v_min, spec.v_max);

    let shift: Vec<f64> = if spec.kind.curved() {
        undulation(&mut rng, nx, spec.curvature)
    } else {
        vec![0.0; nx]
    };

    let mut data = vec![0.0f32; nx * nz];
    for ix in 0..nx {
        for iz in 0..nz {
            let layer = depths
                .iter()
                .filter(|&&d| iz as f64 >= (d as f64 + shift[ix]).round())
                .count();
            data[iz * nx + ix] = velocities[layer];
        }
    }

    let fault = spec.kind.faulted().then(|| Fault {
        throw: rng.gen_range(spec.throw.0..=spec.throw.1),
        x0: rng.gen_range(0.25 * nx as f64..=0.75 * nx as f64),
        dip: rng.gen_range(60f64..=120.0).to_radians(),
        z0: nz as f64 / 2.0,
    });
    if let Some(f) = &fault {
        let base = data.clone();
        for iz in 0..nz {
            for ix in 0..nx {
                if f.downthrown(ix, iz) {
                    data[iz * nx + ix] = base[iz.saturating_sub(f.throw) * nx + ix];
                }
            }
        }
    }

    let (lo, hi) = (spec.v_min as f32, spec.v_max as f32);
    for v in &mut data {
        *v = v.clamp(lo, hi);
    }
    Ok((
        VelocityModel::new(nx, nz, data, spec.v_min, spec.v_max)?,
        fault,
    ))
}

/// Distinct sorted depths in `2..nz-1`.
fn interface_depths(rng: &mut ChaCha8Rng, n: usize, nz: usize) -> Vec<usize> {
    let candidates: Vec<usize> = (2..nz - 1).collect();
    let mut picked = rand::seq::index::sample(rng, candidates.len(), n)
        .into_iter()
        .map(|i| candidates[i])
        .collect::<Vec<_>>();
    picked.sort_unstable();
    picked
}

/// Top layer uniform in range; each interface steps up with probability 0.8.
fn layer_velocities(rng: &mut ChaCha8Rng, n: usize, v_min: f64, v_max: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(n);
    let mut v = rng.gen_range(v_min..=v_max);
    out.push(v as f32);
    for _ in 1..n {
        v = if rng.gen_bool(0.8) {
            rng.gen_range(v..=v_max)
        } else {
            rng.gen_range(v_min..=v)
        };
        out.push(v as f32);
    }
    out
}

/// Sum of one or two sinusoids whose amplitudes add up to at most the drawn
/// amplitude.
fn undulation(rng: &mut ChaCha8Rng, nx: usize, range: (f64, f64)) -> Vec<f64> {
    let amplitude = rng.gen_range(range.0..=range.1);
    let harmonics = rng.gen_range(1..=2usize);
    let terms: Vec<(f64, f64, f64)> = (0..harmonics)
        .map(|_| {
            let cycles = rng.gen_range(0.5..=2.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (amplitude / harmonics as f64, cycles, phase)
        })
        .collect();
    (0..nx)
        .map(|ix| {
            terms
                .iter()
                .map(|&(a, k, p)| a * (std::f64::consts::TAU * k * ix as f64 / nx as f64 + p).sin())
                .sum()
        })
        .collect()
}
