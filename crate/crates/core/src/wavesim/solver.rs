use rayon::prelude::*;

use super::wavelet::{default_delay, ricker_wavelet};
use super::{cfl_check, ShotGather, SimGrid, SourceSet, VelocityModel};
use crate::error::{Error, Result};

/// Time stepper for one velocity field on a (possibly sponge-padded) grid.
///
/// Fields are depth-major `nz × nx` buffers over the padded grid. Waves
/// leave through a multiplicative taper band backed by a one-way condition
/// on the outermost ring.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub dt: f64,
    /// Offset of model cell (0, 0) inside the padded grid.
    pub pad: usize,
    c2dt2: Vec<f64>,
    damp: Option<Vec<f64>>,
}

impl Propagator {
    /// Builds a stepper over `velocity` (`nz × nx`, m/s), padding every side
    /// with `sponge_width` cells that replicate the edge velocity.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        velocity: &[f64],
        nx: usize,
        nz: usize,
        dx: f64,
        dz: f64,
        dt: f64,
        sponge_width: usize,
        sponge_strength: f64,
    ) -> Self {
        assert_eq!(velocity.len(), nx * nz, "velocity buffer size");
        let pad = sponge_width;
        let (px, pz) = (nx + 2 * pad, nz + 2 * pad);
        let mut c2dt2 = vec![0.0; px * pz];
        for iz in 0..pz {
            let mz = iz.saturating_sub(pad).min(nz - 1);
            for ix in 0..px {
                let mx = ix.saturating_sub(pad).min(nx - 1);
                let c = velocity[mz * nx + mx];
                c2dt2[iz * px + ix] = (c * dt).powi(2);
            }
        }
        let damp = (pad > 0).then(|| {
            // i counts cells from the outer edge; interior cells are undamped.
            let profile = |i: usize| -> f64 {
                if i >= pad {
                    1.0
                } else {
                    (-(sponge_strength * (pad - i) as f64).powi(2)).exp()
                }
            };
            let axis = |n: usize, i: usize| profile(i.min(n - 1 - i));
            let mut d = vec![1.0; px * pz];
            for iz in 0..pz {
                for ix in 0..px {
                    d[iz * px + ix] = axis(px, ix) * axis(pz, iz);
                }
            }
            d
        });
        Self {
            nx: px,
            nz: pz,
            dx,
            dz,
            dt,
            pad,
            c2dt2,
            damp,
        }
    }

    pub fn homogeneous(nx: usize, nz: usize, dx: f64, dz: f64, dt: f64, c: f64) -> Self {
        Self::new(&vec![c; nx * nz], nx, nz, dx, dz, dt, 0, 0.0)
    }

    /// Stepper for `model` on `grid`, refusing steps beyond the stability limit.
    pub fn for_model(model: &VelocityModel, grid: &SimGrid) -> Result<Self> {
        grid.validate()?;
        if (model.nx, model.nz) != (grid.nx, grid.nz) {
            return Err(Error::Dimension(format!(
                "model is {}x{} but grid is {}x{}",
                model.nx, model.nz, grid.nx, grid.nz
            )));
        }
        let cfl = cfl_check(model.max_velocity(), grid.dx, grid.dz, grid.dt_sim);
        if !cfl.stable {
            return Err(Error::Cfl {
                dt: grid.dt_sim,
                max_dt: cfl.max_dt,
            });
        }
        let v: Vec<f64> = model.data.iter().map(|&c| c as f64).collect();
        Ok(Self::new(
            &v,
            model.nx,
            model.nz,
            grid.dx,
            grid.dz,
            grid.dt_sim,
            grid.sponge_width,
            grid.sponge_strength,
        ))
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Padded-grid index of model cell `(ix, iz)`.
    pub fn cell(&self, ix: usize, iz: usize) -> usize {
        (iz + self.pad) * self.nx + ix + self.pad
    }

    /// One leapfrog update:
    /// `next = 2·cur - prev + (c·dt)²·∇²cur - (c·dt)²·s·δ(source)`,
    /// with the one-way update on the outer ring, followed by the sponge taper
    /// on `cur` and `next`.
    pub fn step(
        &self,
        prev: &[f64],
        cur: &mut [f64],
        next: &mut [f64],
        source: Option<(usize, f64)>,
    ) {
        let (nx, nz) = (self.nx, self.nz);
        let (idx2, idz2) = (1.0 / (self.dx * self.dx), 1.0 / (self.dz * self.dz));
        for iz in 1..nz - 1 {
            let row = iz * nx;
            for ix in 1..nx - 1 {
                let k = row + ix;
                let c = cur[k];
                let lap = (cur[k - 1] - 2.0 * c + cur[k + 1]) * idx2
                    + (cur[k - nx] - 2.0 * c + cur[k + nx]) * idz2;
                next[k] = 2.0 * c - prev[k] + self.c2dt2[k] * lap;
            }
        }
        // First-order one-way condition on the outer ring.
        let courant = |k: usize, h: f64| self.c2dt2[k].sqrt() / h;
        for iz in 1..nz - 1 {
            let (l, r) = (iz * nx, iz * nx + nx - 1);
            next[l] = cur[l] + courant(l, self.dx) * (cur[l + 1] - cur[l]);
            next[r] = cur[r] + courant(r, self.dx) * (cur[r - 1] - cur[r]);
        }
        for ix in 0..nx {
            let (t, b) = (ix, (nz - 1) * nx + ix);
            next[t] = cur[t] + courant(t, self.dz) * (cur[t + nx] - cur[t]);
            next[b] = cur[b] + courant(b, self.dz) * (cur[b - nx] - cur[b]);
        }
        if let Some((k, s)) = source {
            next[k] -= self.c2dt2[k] * s;
        }
        if let Some(damp) = &self.damp {
            for ((c, n), &d) in cur.iter_mut().zip(next.iter_mut()).zip(damp) {
                *c *= d;
                *n *= d;
            }
        }
    }
}

/// Runs `propagator` for `wavelet.len()` steps with an additive point source
/// at padded index `source`, recording the padded cells `receivers` every
/// `stride` steps. Output is `T × R`, row-major.
pub fn simulate_traces(
    propagator: &Propagator,
    source: usize,
    wavelet: &[f64],
    receivers: &[usize],
    stride: usize,
) -> Vec<f64> {
    let n = propagator.len();
    let (mut prev, mut cur, mut next) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut out = Vec::with_capacity(wavelet.len() / stride * receivers.len());
    for (step, &w) in wavelet.iter().enumerate() {
        if step % stride == 0 {
            out.extend(receivers.iter().map(|&r| cur[r]));
        }
        propagator.step(&prev, &mut cur, &mut next, Some((source, w)));
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

/// One shot: Ricker source of peak frequency `f` at surface position `xs`,
/// recorded by a receiver at every surface column. Returns `T × R`.
pub fn simulate_shot(model: &VelocityModel, f: f64, xs: f64, grid: &SimGrid) -> Result<Vec<f32>> {
    let prop = Propagator::for_model(model, grid)?;
    let width = grid.width();
    if !(0.0..=width + 1e-9).contains(&xs) {
        return Err(Error::InvalidArgument(format!(
            "source at {xs} m outside the model [0, {width}] m"
        )));
    }
    let column = ((xs / grid.dx).round() as usize).min(grid.nx - 1);
    let wavelet = ricker_wavelet(f, grid.dt_sim, grid.nt_sim, default_delay(f))?;
    let receivers: Vec<usize> = (0..grid.nx).map(|ix| prop.cell(ix, 0)).collect();
    let traces = simulate_traces(
        &prop,
        prop.cell(column, 0),
        &wavelet,
        &receivers,
        grid.record_stride,
    );
    Ok(traces.into_iter().map(|v| v as f32).collect())
}

/// All shots of `sources`, stacked in source order.
pub fn forward_model(
    model: &VelocityModel,
    sources: &SourceSet,
    grid: &SimGrid,
) -> Result<ShotGather> {
    let shots = sources
        .sources
        .par_iter()
        .map(|s| simulate_shot(model, s.frequency, s.x, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShotGather {
        n_sources: sources.len(),
        nt: grid.n_record(),
        nr: grid.nx,
        data: shots.concat(),
        receiver_x: grid.receiver_x(),
        dt_record: grid.dt_record(),
    })
}
