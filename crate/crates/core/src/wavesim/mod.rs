//! Explicit finite-difference modeling of the constant-density 2-D acoustic
//! wave equation `∂²p/∂t² = c²∇²p - c²s`, recorded at surface receivers.

mod solver;
mod wavelet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use solver::{forward_model, simulate_shot, simulate_traces, Propagator};
pub use wavelet::{default_delay, ricker_at, ricker_wavelet, RICKER_DELAY_PERIODS};

/// Courant number applied to the 2-D stability bound of the 5-point scheme.
pub const CFL: f64 = 0.9;

/// Physical velocity limits accepted by the modeling code, m/s.
pub const V_FLOOR: f64 = 1000.0;
pub const V_CEIL: f64 = 5000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CflReport {
    pub stable: bool,
    pub max_dt: f64,
}

/// Largest stable step is `CFL·min(dx,dz)/(v_max·√2)`.
pub fn cfl_check(v_max: f64, dx: f64, dz: f64, dt: f64) -> CflReport {
    let max_dt = CFL * dx.min(dz) / (v_max * std::f64::consts::SQRT_2);
    CflReport {
        stable: dt <= max_dt,
        max_dt,
    }
}

/// Discretization of the modeled region and the recording schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub nt_sim: usize,
    pub dt_sim: f64,
    pub record_stride: usize,
    pub sponge_width: usize,
    pub sponge_strength: f64,
}

impl SimGrid {
    pub const SPONGE_WIDTH: usize = 20;
    pub const SPONGE_STRENGTH: f64 = 0.005;

    /// Picks the largest internal step that is stable for `v_max` and divides
    /// `dt_record` an integer number of times.
    pub fn new(
        nx: usize,
        nz: usize,
        spacing: f64,
        dt_record: f64,
        n_record: usize,
        v_max: f64,
    ) -> Result<Self> {
        if nx < 3 || nz < 3 || !(spacing > 0.0) || !(dt_record > 0.0) || n_record == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid grid {nx}x{nz}, spacing {spacing}, dt_record {dt_record}, T {n_record}"
            )));
        }
        let max_dt = cfl_check(v_max, spacing, spacing, 0.0).max_dt;
        let stride = (dt_record / max_dt).ceil().max(1.0) as usize;
        Ok(Self {
            nx,
            nz,
            dx: spacing,
            dz: spacing,
            nt_sim: n_record * stride,
            dt_sim: dt_record / stride as f64,
            record_stride: stride,
            sponge_width: Self::SPONGE_WIDTH,
            sponge_strength: Self::SPONGE_STRENGTH,
        })
    }

    /// 70×70 cells of 10 m, 1000 samples at 1 ms.
    pub fn paper() -> Self {
        Self::new(70, 70, 10.0, 1e-3, 1000, V_CEIL).expect("valid preset")
    }

    /// 70×70 cells of 10 m, 250 samples at 4 ms (same 1 s record).
    pub fn desk() -> Self {
        Self::new(70, 70, 10.0, 4e-3, 250, V_CEIL).expect("valid preset")
    }

    pub fn n_record(&self) -> usize {
        self.nt_sim / self.record_stride
    }

    pub fn dt_record(&self) -> f64 {
        self.dt_sim * self.record_stride as f64
    }

    pub fn width(&self) -> f64 {
        (self.nx - 1) as f64 * self.dx
    }

    pub fn receiver_x(&self) -> Vec<f64> {
        (0..self.nx).map(|i| i as f64 * self.dx).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_stride == 0 || self.nt_sim % self.record_stride != 0 {
            return Err(Error::InvalidArgument(format!(
                "nt_sim {} is not a multiple of record_stride {}",
                self.nt_sim, self.record_stride
            )));
        }
        if self.nx < 3
            || self.nz < 3
            || !(self.dx > 0.0)
            || !(self.dz > 0.0)
            || !(self.dt_sim > 0.0)
        {
            return Err(Error::InvalidArgument(format!("degenerate grid {self:?}")));
        }
        Ok(())
    }
}

/// Wave speed on a depth-major grid: `data[iz * nx + ix]`, m/s.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    pub nx: usize,
    pub nz: usize,
    pub data: Vec<f32>,
    pub v_min: f64,
    pub v_max: f64,
}

impl VelocityModel {
    pub fn new(nx: usize, nz: usize, data: Vec<f32>, v_min: f64, v_max: f64) -> Result<Self> {
        let model = Self {
            nx,
            nz,
            data,
            v_min,
            v_max,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn homogeneous(nx: usize, nz: usize, c: f64) -> Self {
        Self::new(nx, nz, vec![c as f32; nx * nz], c, c).expect("homogeneous model within limits")
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.nx * self.nz || self.nx == 0 || self.nz == 0 {
            return Err(Error::Dimension(format!(
                "velocity {}x{} holds {} cells",
                self.nx,
                self.nz,
                self.data.len()
            )));
        }
        if self.v_min < V_FLOOR || self.v_max > V_CEIL || self.v_min > self.v_max {
            return Err(Error::InvalidArgument(format!(
                "velocity bounds [{}, {}] outside [{V_FLOOR}, {V_CEIL}]",
                self.v_min, self.v_max
            )));
        }
        if let Some(v) = self
            .data
            .iter()
            .find(|&&v| !(v as f64 >= self.v_min - 1e-3 && v as f64 <= self.v_max + 1e-3))
        {
            return Err(Error::InvalidArgument(format!(
                "velocity {v} outside [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    pub fn at(&self, ix: usize, iz: usize) -> f32 {
        self.data[iz * self.nx + ix]
    }

    pub fn max_velocity(&self) -> f64 {
        self.data.iter().fold(0.0f32, |a, &b| a.max(b)) as f64
    }

    /// `[nz, nx]` tensor in m/s.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.nz, self.nx], self.data.clone()).expect("consistent model")
    }

    pub fn from_tensor(t: &Tensor<f32>, v_min: f64, v_max: f64) -> Result<Self> {
        match *t.shape() {
            [nz, nx] | [1, nz, nx] | [1, 1, nz, nx] => {
                Self::new(nx, nz, t.data().to_vec(), v_min, v_max)
            }
            ref s => Err(Error::Dimension(format!("velocity tensor of shape {s:?}"))),
        }
    }
}

/// One surface source: peak frequency (Hz) and horizontal position (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    #[serde(rename = "f")]
    pub frequency: f64,
    #[serde(rename = "xs")]
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    pub sources: Vec<Source>,
}

impl SourceSet {
    pub fn new(sources: Vec<Source>) -> Self {
        Self { sources }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.frequency).collect()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.x).collect()
    }
}

/// Receiver recordings, `data[(s * nt + t) * nr + r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotGather {
    pub n_sources: usize,
    pub nt: usize,
    pub nr: usize,
    pub data: Vec<f32>,
    pub receiver_x: Vec<f64>,
    pub dt_record: f64,
}

impl ShotGather {
    pub fn shape(&self) -> [usize; 3] {
        [self.n_sources, self.nt, self.nr]
    }

    pub fn shot(&self, s: usize) -> &[f32] {
        &self.data[s * self.nt * self.nr..(s + 1) * self.nt * self.nr]
    }

    pub fn trace(&self, s: usize, r: usize) -> Vec<f32> {
        self.shot(s)
            .iter()
            .skip(r)
            .step_by(self.nr)
            .copied()
            .collect()
    }

    pub fn abs_max(&self) -> f32 {
        self.data.iter().fold(0.0f32, |a, &b| a.max(b.abs()))
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(self.shape().to_vec(), self.data.clone()).expect("consistent gather")
    }

    pub fn from_tensor(t: &Tensor<f32>, receiver_x: Vec<f64>, dt_record: f64) -> Result<Self> {
        let [s, nt, nr] = *t.shape() else {
            return Err(Error::Dimension(format!(
                "gather tensor must be S×T×R, got {:?}",
                t.shape()
            )));
        };
        if receiver_x.len() != nr {
            return Err(Error::Dimension(format!(
                "{} receiver positions for {nr} traces",
                receiver_x.len()
            )));
        }
        Ok(Self {
            n_sources: s,
            nt,
            nr,
            data: t.data().to_vec(),
            receiver_x,
            dt_record,
        })
    }
}
