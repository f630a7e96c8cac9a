//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use fwi_onet::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares the tape gradient of `build` against central differences for
/// every entry of every input. `build` returns a scalar loss.
///
/// Returns the largest relative error seen.
pub fn check_op<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).unwrap().to_vec())
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).data()[0]
    };

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k][i], numeric));
        }
    }
    worst
}

/// `Σ r ⊙ y` with a fixed random projection `r`, so that gradients do not
/// cancel the way they do under a plain sum (e.g. through batch norm).
pub fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let mut rng = rng(seed);
    let r = random_tensor(&mut rng, tape.shape(y));
    let r = tape.constant(r);
    let prod = tape.mul(y, r).unwrap();
    tape.sum(prod)
}

/// Analytic 2-D free-space response to a point source with time function
/// `w`, at distance `r` and time `t`:
/// `p(r,t) = (1/2π) ∫_{r/c}^{t} w(t-τ) / √(τ² - r²/c²) dτ`.
///
/// The substitution `τ = (r/c)·cosh u` removes the inverse-square-root
/// singularity at the wavefront; the integral vanishes for `t < r/c`.
pub fn green_2d(w: &dyn Fn(f64) -> f64, r: f64, c: f64, t: f64) -> f64 {
    let t_arr = r / c;
    if t <= t_arr || r <= 0.0 {
        return 0.0;
    }
    let u_max = (t / t_arr).acosh();
    let n = 1000;
    let du = u_max / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let u = i as f64 * du;
        let weight = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += weight * w(t - t_arr * u.cosh());
    }
    acc * du / (2.0 * std::f64::consts::PI)
}

/// Index of the first sample whose magnitude exceeds `frac` of the trace
/// maximum, linearly interpolated between samples.
pub fn first_break(trace: &[f64], frac: f64) -> Option<f64> {
    let peak = trace.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if peak == 0.0 {
        return None;
    }
    let level = frac * peak;
    let i = trace.iter().position(|v| v.abs() > level)?;
    if i == 0 {
        return Some(0.0);
    }
    let (a, b) = (trace[i - 1].abs(), trace[i].abs());
    Some((i - 1) as f64 + (level - a) / (b - a))
}

/// Per-receiver first-arrival error (seconds) of a homogeneous-medium shot
/// against the analytic 2-D response, both picked at 1 % of their own peak.
pub fn homogeneous_arrival_errors(
    c: f64,
    f: f64,
    xs: f64,
    grid: &fwi_onet::wavesim::SimGrid,
) -> Vec<f64> {
    use fwi_onet::wavesim::{default_delay, ricker_at, simulate_shot, VelocityModel};
    let model = VelocityModel::homogeneous(grid.nx, grid.nz, c);
    let traces = simulate_shot(&model, f, xs, grid).unwrap();
    let (nt, nr, dt) = (grid.n_record(), grid.nx, grid.dt_record());
    let t0 = default_delay(f);
    let wavelet = move |t: f64| ricker_at(f, t - t0);
    let column = (xs / grid.dx).round();
    (0..nr)
        .map(|r| {
            let numeric: Vec<f64> = (0..nt).map(|k| traces[k * nr + r] as f64).collect();
            let d = ((r as f64 - column).abs() * grid.dx).max(0.5 * grid.dx);
            let analytic: Vec<f64> = (0..nt)
                .map(|k| green_2d(&wavelet, d, c, k as f64 * dt))
                .collect();
            let tn = first_break(&numeric, 0.01).expect("signal reached receiver");
            let ta = first_break(&analytic, 0.01).expect("analytic signal");
            (tn - ta).abs() * dt
        })
        .collect()
}

/// Gaussian pulse released from rest on a Dirichlet box, no sponge.
fn gaussian_pulse_field(
    h: f64,
    length: f64,
    c: f64,
    courant: f64,
    t_end: f64,
) -> (Vec<f64>, usize) {
    use fwi_onet::wavesim::Propagator;
    let n = (length / h).round() as usize + 1;
    let dt = courant * h / c;
    let steps = (t_end / dt).round() as usize;
    let p = Propagator::homogeneous(n, n, h, h, dt, c);
    let sigma = 40.0f64;
    let centre = length / 2.0;
    let mut cur = vec![0.0; n * n];
    let mut prev = vec![0.0; n * n];
    for iz in 0..n {
        for ix in 0..n {
            let r2 = (ix as f64 * h - centre).powi(2) + (iz as f64 * h - centre).powi(2);
            let g = (-r2 / (2.0 * sigma * sigma)).exp();
            let lap = g * (r2 / sigma.powi(4) - 2.0 / (sigma * sigma));
            cur[iz * n + ix] = g;
            prev[iz * n + ix] = g + 0.5 * (c * dt).powi(2) * lap;
        }
    }
    let mut next = vec![0.0; n * n];
    for _ in 0..steps {
        p.step(&prev, &mut cur, &mut next, None);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    (cur, n)
}

/// RMS error at h over RMS error at h/2, both against an h/8 reference on
/// the coarse points. About 4 for a second-order scheme.
pub fn refinement_ratio() -> f64 {
    let (length, c, courant, t_end) = (1200.0, 2000.0, 0.5, 0.15);
    let h = 10.0;
    let (coarse, nc) = gaussian_pulse_field(h, length, c, courant, t_end);
    let (mid, nm) = gaussian_pulse_field(h / 2.0, length, c, courant, t_end);
    let (fine, nf) = gaussian_pulse_field(h / 8.0, length, c, courant, t_end);
    let err = |field: &[f64], n: usize| -> f64 {
        let (s, sf) = ((n - 1) / (nc - 1), (nf - 1) / (nc - 1));
        let mut acc = 0.0;
        for iz in 0..nc {
            for ix in 0..nc {
                let a = field[iz * s * n + ix * s];
                let b = fine[iz * sf * nf + ix * sf];
                acc += (a - b).powi(2);
            }
        }
        (acc / (nc * nc) as f64).sqrt()
    };
    err(&coarse, nc) / err(&mid, nm)
}

/// Eval-mode loss `Σ r ⊙ y` of a model in 64-bit.
fn projected_loss(
    params: &mut fwi_onet::model::ModelParams<f64>,
    g: &Tensor<f64>,
    xi: &Tensor<f64>,
    r: &Tensor<f64>,
) -> f64 {
    use fwi_onet::model::Session;
    use fwi_onet::tensor::NormMode;
    let mut tape = Tape::new();
    let mut s = Session::bind(&mut tape, params, NormMode::Eval);
    let gv = tape.constant(g.clone());
    let xv = tape.constant(xi.clone());
    let y = s.image(&mut tape, gv, Some(xv)).unwrap();
    let rv = tape.constant(r.clone());
    let prod = tape.mul(y, rv).unwrap();
    let l = tape.sum(prod);
    tape.value(l).data()[0]
}

/// Gradient check of the desk FL model: the tape gradient of a random
/// projection of the output against central differences at 10 random
/// coordinates of every parameter tensor. Returns the worst relative
/// error and where it occurred.
pub fn desk_gradient_check(seed: u64) -> (f64, String) {
    use fwi_onet::datagen::DatasetKind;
    use fwi_onet::model::{Architecture, ModelParams, ModelPreset, Scale, Session};
    use fwi_onet::tensor::NormMode;

    let preset = ModelPreset::new(
        Architecture::InversionDeepOnet,
        Scale::Desk,
        DatasetKind::FL,
    );
    let mut base = ModelParams::init(preset, seed);
    // Move the running statistics away from their initial values.
    for k in 0..40 {
        let mut tape = Tape::new();
        let mut sess = Session::bind(&mut tape, &mut base, NormMode::Train);
        let g = tape.constant(random_tensor(&mut rng(seed + 100 + 2 * k), &[2, 5, 250, 70]).cast());
        let xi = tape.constant(random_tensor(&mut rng(seed + 101 + 2 * k), &[2, 10]).cast());
        sess.image(&mut tape, g, Some(xi)).unwrap();
    }
    let mut params = base.cast::<f64>();
    let mut r = rng(seed + 1);
    let g = random_tensor(&mut r, &[1, 5, 250, 70]);
    let xi = random_tensor(&mut r, &[1, 10]);
    let proj = random_tensor(&mut r, &[1, 1, 70, 70]);

    let mut tape = Tape::new();
    let grads = {
        let mut s = Session::bind(&mut tape, &mut params, NormMode::Eval);
        let gv = tape.constant(g.clone());
        let xv = tape.constant(xi.clone());
        let y = s.image(&mut tape, gv, Some(xv)).unwrap();
        let rv = tape.constant(proj.clone());
        let prod = tape.mul(y, rv).unwrap();
        let l = tape.sum(prod);
        tape.backward(l).unwrap();
        s.grads(&tape).unwrap()
    };

    let h = 1e-6;
    let mut worst = (0.0f64, String::new());
    for k in 0..params.params().len() {
        let n = params.params()[k].value.numel();
        let picks: Vec<usize> = (0..10).map(|_| r.gen_range(0..n)).collect();
        for i in picks {
            let orig = params.params()[k].value.data()[i];
            params.params_mut()[k].value.data_mut()[i] = orig + h;
            let plus = projected_loss(&mut params, &g, &xi, &proj);
            params.params_mut()[k].value.data_mut()[i] = orig - h;
            let minus = projected_loss(&mut params, &g, &xi, &proj);
            params.params_mut()[k].value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let e = rel_err(grads[k].data()[i], numeric);
            if e > worst.0 {
                worst = (e, format!("{}[{i}]", params.params()[k].name));
            }
        }
    }
    worst
}
