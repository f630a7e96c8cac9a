//! End-to-end acceptance criteria. Each prints one PASS/FAIL line; the
//! process exits non-zero when any criterion fails.
//!
//! Run alone with `cargo test -p fwi-onet-suite --test acceptance`. A
//! single criterion can be selected by number, e.g. `-- 3 5`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{
    check_op, desk_gradient_check, homogeneous_arrival_errors, project, random_tensor,
    refinement_ratio, rng,
};
use fwi_onet::datagen::{
    build_dataset, dataset_dir, denormalize, generate_velocity, normalize, sample_sources, Dataset,
    DatasetKind, DatasetRequest, FamilyKind, FamilySpec,
};
use fwi_onet::model::{load_params, Architecture, ModelParams, ModelPreset, Scale};
use fwi_onet::tensor::kernels::ConvGeom;
use fwi_onet::tensor::{Activation, BatchNormState, NormMode, Tensor};
use fwi_onet::train::{
    evaluate, mean_baseline, metrics, paper_scenarios, probe_generalization, train, TrainConfig,
    BEST_CHECKPOINT, LAST_CHECKPOINT, LOSS_CURVE, OPTIM_STATE,
};
use fwi_onet::wavesim::{
    default_delay, ricker_wavelet, simulate_traces, Propagator, SimGrid, VelocityModel,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

const SHAPES_PER_OP: usize = 20;
const OP_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

/// Values in ±[0.05, 1], so central differences never straddle a kink.
fn off_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = r.gen_range(0.05..1.0);
        if r.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn dims(r: &mut ChaCha8Rng, rank: usize, max: usize) -> Vec<usize> {
    (0..rank).map(|_| r.gen_range(1..=max)).collect()
}

/// Worst error of `case` over `SHAPES_PER_OP` random draws.
fn sweep(seed: u64, mut case: impl FnMut(&mut ChaCha8Rng, u64) -> f64) -> f64 {
    let mut r = rng(seed);
    (0..SHAPES_PER_OP as u64)
        .map(|k| case(&mut r, seed * 1000 + k))
        .fold(0.0, f64::max)
}

fn conv_case(r: &mut ChaCha8Rng, seed: u64) -> f64 {
    let (n, ci, co) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
    let (kh, kw) = (r.gen_range(1..=4), r.gen_range(1..=4));
    let geom = ConvGeom::new(
        (r.gen_range(1..=2), r.gen_range(1..=2)),
        (r.gen_range(0..=kh / 2), r.gen_range(0..=kw / 2)),
    );
    let (h, w) = (kh + r.gen_range(0..4), kw + r.gen_range(0..4));
    let x = random_tensor(r, &[n, ci, h, w]);
    let wt = random_tensor(r, &[co, ci, kh, kw]);
    let bias = r.gen_bool(0.5);
    let mut inputs = vec![x, wt];
    if bias {
        inputs.push(random_tensor(r, &[co]));
    }
    check_op(&inputs, FD_STEP, |t, v| {
        let y = t.conv2d(v[0], v[1], v.get(2).copied(), geom).unwrap();
        project(t, y, seed)
    })
}

fn conv_transpose_case(r: &mut ChaCha8Rng, seed: u64) -> f64 {
    let (n, ci, co) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
    let (kh, kw) = (r.gen_range(1..=4), r.gen_range(1..=4));
    let geom = ConvGeom::new(
        (r.gen_range(1..=2), r.gen_range(1..=2)),
        (r.gen_range(0..=(kh - 1) / 2), r.gen_range(0..=(kw - 1) / 2)),
    );
    let (h, w) = (r.gen_range(1..=4), r.gen_range(1..=4));
    let x = random_tensor(r, &[n, ci, h, w]);
    let wt = random_tensor(r, &[ci, co, kh, kw]);
    let bias = r.gen_bool(0.5);
    let mut inputs = vec![x, wt];
    if bias {
        inputs.push(random_tensor(r, &[co]));
    }
    check_op(&inputs, FD_STEP, |t, v| {
        let y = t
            .conv_transpose2d(v[0], v[1], v.get(2).copied(), geom)
            .unwrap();
        project(t, y, seed)
    })
}

fn batch_norm_case(mode: NormMode) -> impl FnMut(&mut ChaCha8Rng, u64) -> f64 {
    move |r, seed| {
        let mut shape = dims(r, 4, 3);
        if shape[0] * shape[2] * shape[3] < 2 {
            shape[0] = 2;
        }
        let c = shape[1];
        let x = random_tensor(r, &shape);
        let g = random_tensor(r, &[c]);
        let b = random_tensor(r, &[c]);
        let mean: Vec<f64> = (0..c).map(|_| r.gen_range(-0.5..0.5)).collect();
        let var: Vec<f64> = (0..c).map(|_| r.gen_range(0.2..2.0)).collect();
        check_op(&[x, g, b], FD_STEP, |t, v| {
            let mut st = BatchNormState::new(c);
            st.running_mean = mean.clone();
            st.running_var = var.clone();
            let y = t.batch_norm2d(v[0], v[1], v[2], &mut st, mode).unwrap();
            project(t, y, seed)
        })
    }
}

fn activation_case(kind: Activation) -> impl FnMut(&mut ChaCha8Rng, u64) -> f64 {
    move |r, seed| {
        let rank = r.gen_range(1..=4);
        let shape = dims(r, rank, 4);
        let x = off_zero(r, &shape);
        check_op(&[x], FD_STEP, |t, v| {
            let y = t.activation(kind, v[0]);
            project(t, y, seed)
        })
    }
}

fn linear_case(r: &mut ChaCha8Rng, seed: u64) -> f64 {
    let (n, i, o) = (r.gen_range(1..=4), r.gen_range(1..=6), r.gen_range(1..=6));
    let mut inputs = vec![random_tensor(r, &[n, i]), random_tensor(r, &[o, i])];
    if r.gen_bool(0.5) {
        inputs.push(random_tensor(r, &[o]));
    }
    check_op(&inputs, FD_STEP, |t, v| {
        let y = t.linear(v[0], v[1], v.get(2).copied()).unwrap();
        project(t, y, seed)
    })
}

fn mul_case(r: &mut ChaCha8Rng, seed: u64) -> f64 {
    let (a, b) = if r.gen_bool(0.5) {
        let rank = r.gen_range(1..=4);
        let s = dims(r, rank, 4);
        (s.clone(), s)
    } else {
        let (n, c) = (r.gen_range(1..=3), r.gen_range(1..=5));
        (vec![n, c, 1, 1], vec![n, c])
    };
    let inputs = [random_tensor(r, &a), random_tensor(r, &b)];
    check_op(&inputs, FD_STEP, |t, v| {
        let y = t.mul(v[0], v[1]).unwrap();
        project(t, y, seed)
    })
}

fn slice_case(r: &mut ChaCha8Rng, seed: u64) -> f64 {
    let shape = dims(r, 4, 5);
    let target = (r.gen_range(1..=shape[2]), r.gen_range(1..=shape[3]));
    let x = random_tensor(r, &shape);
    check_op(&[x], FD_STEP, |t, v| {
        let y = t.slice2d(v[0], target).unwrap();
        project(t, y, seed)
    })
}

fn mae_case(r: &mut ChaCha8Rng, _seed: u64) -> f64 {
    let rank = r.gen_range(1..=4);
    let shape = dims(r, rank, 4);
    let q = random_tensor(r, &shape);
    // Keep |p - q| away from zero, where |·| has its kink.
    let d = off_zero(r, &shape);
    let p = Tensor::from_fn(shape.clone(), |i| q.data()[i] + d.data()[i]);
    check_op(&[p, q], FD_STEP, |t, v| t.mae(v[0], v[1]).unwrap())
}

fn sum_case(r: &mut ChaCha8Rng, _seed: u64) -> f64 {
    let rank = r.gen_range(1..=4);
    let shape = dims(r, rank, 5);
    let x = random_tensor(r, &shape);
    check_op(&[x], FD_STEP, |t, v| t.sum(v[0]))
}

fn reshape_case(r: &mut ChaCha8Rng, seed: u64) -> f64 {
    let rank = r.gen_range(1..=4);
    let shape = dims(r, rank, 4);
    let mut target = shape.clone();
    target.reverse();
    if r.gen_bool(0.5) {
        target = vec![shape.iter().product()];
    }
    let x = random_tensor(r, &shape);
    check_op(&[x], FD_STEP, |t, v| {
        let y = t.reshape(v[0], target.clone()).unwrap();
        project(t, y, seed)
    })
}

fn criterion_autodiff() -> Outcome {
    let start = Instant::now();
    type Case = Box<dyn FnMut(&mut ChaCha8Rng, u64) -> f64>;
    let ops: Vec<(&str, Case)> = vec![
        ("conv2d", Box::new(conv_case)),
        ("conv_transpose2d", Box::new(conv_transpose_case)),
        (
            "batch_norm2d/train",
            Box::new(batch_norm_case(NormMode::Train)),
        ),
        (
            "batch_norm2d/eval",
            Box::new(batch_norm_case(NormMode::Eval)),
        ),
        ("leaky_relu", Box::new(activation_case(Activation::leaky()))),
        ("relu", Box::new(activation_case(Activation::Relu))),
        ("tanh", Box::new(activation_case(Activation::Tanh))),
        ("linear", Box::new(linear_case)),
        ("mul", Box::new(mul_case)),
        ("slice2d", Box::new(slice_case)),
        ("mae", Box::new(mae_case)),
        ("sum", Box::new(sum_case)),
        ("reshape", Box::new(reshape_case)),
    ];
    let mut worst_op = (0.0f64, "");
    let mut failed = Vec::new();
    for (k, (name, case)) in ops.into_iter().enumerate() {
        let e = sweep(k as u64 + 1, case);
        if e >= OP_TOL {
            failed.push(format!("{name} {e:.1e}"));
        }
        if e > worst_op.0 {
            worst_op = (e, name);
        }
    }
    let (model_err, at) = desk_gradient_check(12);
    let elapsed = start.elapsed();
    let detail = format!(
        "13 ops x {SHAPES_PER_OP} shapes, worst {:.1e} ({}); desk model {model_err:.1e} at {at}; {:.0}s{}",
        worst_op.0,
        worst_op.1,
        elapsed.as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; over tolerance: {}", failed.join(", ")) }
    );
    verdict(
        failed.is_empty() && model_err < 1e-3 && elapsed < Duration::from_secs(300),
        detail,
    )
}

// ---------------------------------------------------------------- 2

fn criterion_physics() -> Outcome {
    let start = Instant::now();
    let grid = SimGrid::paper();
    let limit = 2.0 * grid.dt_record();
    let mut r = rng(2);
    let mut worst = (0.0f64, 0.0, 0.0, 0.0);
    let mut misses = 0;
    for _ in 0..10 {
        let c = r.gen_range(1500.0..=4500.0);
        let f = r.gen_range(5.0..=25.0);
        let xs = r.gen_range(0.0..=690.0);
        let e = homogeneous_arrival_errors(c, f, xs, &grid)
            .into_iter()
            .fold(0.0, f64::max);
        if e > limit {
            misses += 1;
        }
        if e > worst.0 {
            worst = (e, c, f, xs);
        }
    }

    let model = VelocityModel::homogeneous(70, 70, 2500.0);
    let prop = Propagator::for_model(&model, &grid).unwrap();
    let w = ricker_wavelet(15.0, grid.dt_sim, grid.nt_sim, default_delay(15.0)).unwrap();
    let (a, b) = (prop.cell(8, 0), prop.cell(51, 33));
    let ab = simulate_traces(&prop, a, &w, &[b], grid.record_stride);
    let ba = simulate_traces(&prop, b, &w, &[a], grid.record_stride);
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let diff: Vec<f64> = ab.iter().zip(&ba).map(|(x, y)| x - y).collect();
    let reciprocity = rms(&diff) / rms(&ab);

    let ratio = refinement_ratio();
    let elapsed = start.elapsed();
    let detail = format!(
        "first arrivals: {misses}/10 pairs over {:.0} ms, worst {:.1} ms (c={:.0} f={:.1} x={:.0}); \
         reciprocity {reciprocity:.1e}; refinement ratio {ratio:.2}; {:.0}s",
        limit * 1e3,
        worst.0 * 1e3,
        worst.1,
        worst.2,
        worst.3,
        elapsed.as_secs_f64()
    );
    verdict(
        misses == 0
            && reciprocity < 1e-3
            && (3.2..=4.8).contains(&ratio)
            && elapsed < Duration::from_secs(600),
        detail,
    )
}

// ---------------------------------------------------------------- 3

fn criterion_dataset() -> Outcome {
    const FREQ: (f64, f64) = (5.0, 25.0);
    const WINDOWS: [(f64, f64); 5] = [
        (0.0, 50.0),
        (122.5, 222.5),
        (295.0, 395.0),
        (467.5, 567.5),
        (640.0, 690.0),
    ];
    const FIXED: [f64; 5] = [0.0, 172.5, 345.0, 517.5, 690.0];
    let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
    let mut bad = Vec::new();
    for kind in DatasetKind::ALL {
        for seed in 0..10_000u64 {
            let s = sample_sources(kind, seed);
            let ok = s.sources.len() == 5
                && s.sources.iter().enumerate().all(|(i, src)| {
                    let f_ok = if kind.varies_frequency() {
                        inside(src.frequency, FREQ)
                    } else {
                        src.frequency == 15.0
                    };
                    let x_ok = if kind.varies_location() {
                        inside(src.x, WINDOWS[i])
                    } else {
                        src.x == FIXED[i]
                    };
                    f_ok && x_ok
                });
            if !ok {
                bad.push(format!("{kind:?} seed {seed}"));
                break;
            }
        }
    }
    let f_locations = sample_sources(DatasetKind::F, 0).locations();

    let mut r = rng(3);
    let mut worst_rt = 0.0f64;
    for _ in 0..1000 {
        let lo = r.gen_range(1000.0..2000.0);
        let hi = lo + r.gen_range(500.0..4000.0);
        let x: Vec<f32> = (0..70).map(|_| r.gen_range(lo..=hi) as f32).collect();
        let back = denormalize(&normalize(&x, lo, hi).unwrap(), lo, hi).unwrap();
        for (a, b) in x.iter().zip(&back) {
            worst_rt = worst_rt.max(((a - b) / a).abs() as f64);
        }
    }
    let detail = format!(
        "3 kinds x 10^4 source sets{}; F locations {f_locations:?}; round-trip {worst_rt:.1e}",
        if bad.is_empty() {
            " inside windows".to_string()
        } else {
            format!(", outside: {}", bad.join(", "))
        }
    );
    verdict(
        bad.is_empty() && f_locations == FIXED && worst_rt <= 1e-6,
        detail,
    )
}

// ---------------------------------------------------------------- 4

fn criterion_architecture() -> Outcome {
    let mut problems = Vec::new();
    let p = ModelPreset::new(
        Architecture::InversionDeepOnet,
        Scale::Paper,
        DatasetKind::FL,
    );
    let enc = p.encoder();
    if enc.input != [5, 1000, 70]
        || enc.blocks.len() != 14
        || enc.output().ok() != Some([512, 1, 1])
    {
        problems.push(format!(
            "encoder {:?} -> {:?} in {} blocks",
            enc.input,
            enc.output(),
            enc.blocks.len()
        ));
    }
    for (kind, len) in [
        (DatasetKind::F, 5),
        (DatasetKind::L, 5),
        (DatasetKind::FL, 10),
    ] {
        let trunk = ModelPreset { kind, ..p }.trunk().unwrap();
        if (trunk.input, trunk.widths.len(), trunk.output()) != (len, 4, 512) {
            problems.push(format!(
                "{kind:?} trunk {} -> {}",
                trunk.input,
                trunk.output()
            ));
        }
    }
    let dec = p.decoder().unwrap();
    let pre = dec.pre_slice().unwrap();
    if dec.in_channels != 512
        || dec.stages.len() != 5
        || pre[1..] != [80, 80]
        || dec.slice != (70, 70)
    {
        problems.push(format!(
            "decoder {} -> {pre:?} -> {:?}",
            dec.in_channels, dec.slice
        ));
    }
    let mut max_abs = 0.0f32;
    for kind in [DatasetKind::F, DatasetKind::FL] {
        let mut params = ModelParams::init(ModelPreset { kind, ..p }, 4);
        let mut r = rng(4);
        let g = Tensor::from_fn(vec![1, 5, 1000, 70], |_| r.gen_range(-1.0f32..1.0));
        let xi = Tensor::from_fn(vec![1, kind.xi_len()], |_| r.gen_range(-1.0f32..1.0));
        let y = params.predict(&g, Some(&xi)).unwrap();
        if y.shape() != [1, 1, 70, 70] {
            problems.push(format!("{kind:?} output {:?}", y.shape()));
        }
        max_abs = y.data().iter().fold(max_abs, |m, v| m.max(v.abs()));
    }
    if max_abs >= 1.0 {
        problems.push(format!("output magnitude {max_abs}"));
    }
    let detail = format!(
        "(5,1000,70) -> (512,1,1), trunk 5|10 -> 512, decoder -> {pre:?} -> (1,70,70), max |y| {max_abs:.3}{}",
        if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
    );
    verdict(problems.is_empty(), detail)
}

// ---------------------------------------------------------------- 5

fn criterion_metrics() -> Outcome {
    let x = [3.0, 4.0];
    let identity = metrics::relative_error(&[&x], &[&x]).unwrap();
    let unit = metrics::relative_error(&[&[0.0, 0.0]], &[&x]).unwrap();
    let mut r = rng(5);
    let img: Vec<f64> = (0..70 * 70).map(|_| r.gen_range(1500.0..4500.0)).collect();
    let self_ssim = metrics::ssim(&img, &img, 70, 70, 3000.0).unwrap();
    let mut violations = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..200);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        if metrics::mae(&a, &b).unwrap() > metrics::rmse(&a, &b).unwrap() {
            violations += 1;
        }
    }
    let detail = format!(
        "RE identity {identity:e}, RE [0,0] vs [3,4] {unit}, SSIM(x,x) {self_ssim}, MAE > RMSE in {violations}/1000"
    );
    verdict(
        identity.abs() <= 1e-7
            && (unit - 1.0).abs() <= 1e-7
            && (self_ssim - 1.0).abs() <= 1e-12
            && violations == 0,
        detail,
    )
}

// ---------------------------------------------------------------- 6 and 7

const CAPACITY_FAMILY: FamilyKind = FamilyKind::CurveVel;
const CAPACITY_SAMPLES: usize = 64;
const CAPACITY_SEED: u64 = 7;

fn capacity_dataset() -> PathBuf {
    let root = scratch("capacity");
    let req = DatasetRequest {
        kind: DatasetKind::F,
        family: FamilySpec::preset(CAPACITY_FAMILY),
        n_samples: CAPACITY_SAMPLES,
        seed: CAPACITY_SEED,
        grid: SimGrid::desk(),
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    build_dataset(&root, &req, jobs).unwrap();
    dataset_dir(&root, CAPACITY_FAMILY, DatasetKind::F)
}

fn desk_f(arch: Architecture) -> TrainConfig {
    TrainConfig::desk(ModelPreset::new(arch, Scale::Desk, DatasetKind::F))
}

fn criterion_capacity(data: &Path) -> Outcome {
    let ds = Dataset::open(data).unwrap();
    let cfg = desk_f(Architecture::InversionDeepOnet);
    let start = Instant::now();
    let summary = train(&cfg, data, data.with_file_name("run-inversion"), false)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let params = load_params(summary.out_dir.join(LAST_CHECKPOINT)).unwrap();
    let fit = evaluate(&params, &ds, "train", String::new()).unwrap();
    let held_out = evaluate(&params, &ds, "test", String::new()).unwrap();
    let baseline = mean_baseline(&ds, "test").unwrap();
    let logged = summary.curve.last().map_or(f64::NAN, |r| r.train_mae);
    let detail = format!(
        "{} samples, {} epochs in {:.0}s: train MAE {:.4} (last logged epoch {logged:.4}); \
         test MAE {:.4} vs mean baseline {:.4}",
        fit.n,
        summary.curve.len(),
        elapsed.as_secs_f64(),
        fit.mae,
        held_out.mae,
        baseline.mae
    );
    verdict(
        fit.n == 50
            && fit.mae < 0.05
            && summary.curve.len() <= 200
            && elapsed < Duration::from_secs(1800)
            && held_out.mae < baseline.mae,
        detail,
    )
}

fn criterion_mechanism(data: &Path) -> Outcome {
    let ds = Dataset::open(data).unwrap();
    let inversion = data.with_file_name("run-inversion").join(LAST_CHECKPOINT);
    if !inversion.exists() {
        train(
            &desk_f(Architecture::InversionDeepOnet),
            data,
            data.with_file_name("run-inversion"),
            false,
        )
        .map_err(|e| e.to_string())?;
    }
    let ablation = train(
        &desk_f(Architecture::EncoderDecoder),
        data,
        data.with_file_name("run-ablation"),
        false,
    )
    .map_err(|e| e.to_string())?;
    let ours = load_params(inversion).unwrap();
    let theirs = load_params(ablation.out_dir.join(LAST_CHECKPOINT)).unwrap();

    let scenarios = paper_scenarios();
    let fresh = DatasetRequest {
        seed: 1_000_003,
        ..ds.manifest.request()
    };
    let (norm, grid) = (&ds.manifest.normalization, &ds.manifest.grid);
    let mut wins = 0;
    let mut spreads = Vec::new();
    for k in 0..10 {
        let v = generate_velocity(&ds.manifest.family, fresh.sample_seeds(k).0).unwrap();
        let a = probe_generalization(&ours, &v, &scenarios, norm, grid)
            .unwrap()
            .mae_spread;
        let b = probe_generalization(&theirs, &v, &scenarios, norm, grid)
            .unwrap()
            .mae_spread;
        if a < b {
            wins += 1;
        }
        spreads.push(format!("{a:.3}/{b:.3}"));
    }
    let detail = format!(
        "inversion/ablation MAE spread: {}; smaller on {wins}/10",
        spreads.join(" ")
    );
    verdict(wins >= 8, detail)
}

// ---------------------------------------------------------------- 8

fn pipeline(root: &Path) -> Vec<(String, Vec<u8>)> {
    let req = DatasetRequest {
        kind: DatasetKind::F,
        family: FamilySpec::preset(FamilyKind::FlatFault),
        n_samples: 9,
        seed: 8,
        grid: SimGrid::desk(),
    };
    build_dataset(root, &req, 2).unwrap();
    let data = dataset_dir(root, FamilyKind::FlatFault, DatasetKind::F);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        lr_drop_epoch: 1,
        ..desk_f(Architecture::InversionDeepOnet)
    };
    let run = root.join("run");
    let summary = train(&cfg, &data, &run, false).unwrap();
    let params = load_params(run.join(BEST_CHECKPOINT)).unwrap();
    let ds = Dataset::open(&data).unwrap();
    evaluate(&params, &ds, "test", summary.config_fingerprint)
        .unwrap()
        .write(root.join("report.json"))
        .unwrap();
    let mut files = vec![data.join("manifest.json"), root.join("report.json")];
    files.extend([LAST_CHECKPOINT, BEST_CHECKPOINT, OPTIM_STATE, LOSS_CURVE].map(|f| run.join(f)));
    files
        .into_iter()
        .map(|p| {
            (
                p.strip_prefix(root).unwrap().display().to_string(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn criterion_determinism() -> Outcome {
    let a = pipeline(&scratch("pipeline-a"));
    let b = pipeline(&scratch("pipeline-b"));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let detail = format!(
        "{} files compared ({}){}",
        a.len(),
        a.iter()
            .map(|f| f.0.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        if differing.is_empty() {
            String::new()
        } else {
            format!("; differ: {}", differing.join(", "))
        }
    );
    verdict(differing.is_empty() && a.len() == b.len(), detail)
}

// ----------------------------------------------------------------

fn main() {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: usize| picked.is_empty() || picked.contains(&n);
    let mut capacity_data = None;
    let mut data = || capacity_data.get_or_insert_with(capacity_dataset).clone();

    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {name}: {tag}: {detail}");
    };
    if wanted(1) {
        report(1, "autodiff", criterion_autodiff());
    }
    if wanted(2) {
        report(2, "solver physics", criterion_physics());
    }
    if wanted(3) {
        report(3, "dataset contract", criterion_dataset());
    }
    if wanted(4) {
        report(4, "architecture contract", criterion_architecture());
    }
    if wanted(5) {
        report(5, "metric fidelity", criterion_metrics());
    }
    if wanted(6) {
        report(6, "learning capacity", criterion_capacity(&data()));
    }
    if wanted(7) {
        report(7, "generalization mechanism", criterion_mechanism(&data()));
    }
    if wanted(8) {
        report(8, "determinism", criterion_determinism());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
