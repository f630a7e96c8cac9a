//! Python bindings: forward modeling, dataset generation, models,
//! training and metrics. Arrays cross the boundary as flat lists of
//! floats plus a shape; reports come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fwi_onet::datagen::{self, Dataset, DatasetKind, DatasetRequest, FamilyKind, FamilySpec};
use fwi_onet::model::{self, ModelParams, ModelPreset, Scale};
use fwi_onet::train::{self, metrics, TrainConfig};
use fwi_onet::wavesim::{self, SimGrid, Source, SourceSet, VelocityModel};
use fwi_onet::{Error, Tensor};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NonFinite(_) | Error::Graph(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn grid(scale: &str) -> PyResult<SimGrid> {
    match scale {
        "desk" => Ok(Scale::Desk.grid()),
        "paper" => Ok(Scale::Paper.grid()),
        other => Err(PyValueError::new_err(format!(
            "unknown scale {other:?} (desk, paper)"
        ))),
    }
}

fn json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Largest stable time step for the given speed and spacing.
#[pyfunction]
fn cfl_max_dt(v_max: f64, dx: f64) -> f64 {
    wavesim::cfl_check(v_max, dx, dx, 0.0).max_dt
}

/// Random velocity model of `family`; returns `(values, (nz, nx))` in m/s.
#[pyfunction]
fn generate_velocity(family: &str, seed: u64) -> PyResult<(Vec<f32>, (usize, usize))> {
    let spec = FamilySpec::preset(parse::<FamilyKind>(family)?);
    let v = datagen::generate_velocity(&spec, seed).map_err(err)?;
    Ok((v.data, (v.nz, v.nx)))
}

/// Simulates one gather per `(frequency, x)` source over a 70×70
/// velocity model. Returns `(values, (sources, time, receivers))`.
#[pyfunction]
#[pyo3(signature = (velocity, sources, scale = "desk"))]
fn forward_model(
    velocity: Vec<f32>,
    sources: Vec<(f64, f64)>,
    scale: &str,
) -> PyResult<(Vec<f32>, (usize, usize, usize))> {
    let g = grid(scale)?;
    let (lo, hi) = velocity
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v as f64), b.max(v as f64))
        });
    let model = VelocityModel::new(g.nx, g.nz, velocity, lo, hi).map_err(err)?;
    let set = SourceSet::new(
        sources
            .into_iter()
            .map(|(frequency, x)| Source { frequency, x })
            .collect(),
    );
    let gather = wavesim::forward_model(&model, &set, &g).map_err(err)?;
    let [s, t, r] = gather.shape();
    Ok((gather.data, (s, t, r)))
}

/// Builds (or completes) a dataset under `root`; returns its directory.
#[pyfunction]
#[pyo3(signature = (root, family, kind, count, seed = 0, scale = "desk", jobs = 1))]
fn generate_dataset(
    root: PathBuf,
    family: &str,
    kind: &str,
    count: usize,
    seed: u64,
    scale: &str,
    jobs: usize,
) -> PyResult<String> {
    let family = parse::<FamilyKind>(family)?;
    let kind = parse::<DatasetKind>(kind)?;
    let req = DatasetRequest {
        kind,
        family: FamilySpec::preset(family),
        n_samples: count,
        seed,
        grid: grid(scale)?,
    };
    datagen::build_dataset(&root, &req, jobs).map_err(err)?;
    Ok(datagen::dataset_dir(&root, family, kind)
        .display()
        .to_string())
}

/// Network weights for one preset, e.g. `inversion-deeponet/desk/F`.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (preset, seed = 0))]
    fn new(preset: &str, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: ModelParams::init(parse::<ModelPreset>(preset)?, seed),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: model::load_params(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model::save_params(&self.inner, path).map_err(err)
    }

    #[getter]
    fn preset(&self) -> String {
        self.inner.preset().id()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.count()
    }

    /// `(sources, time, receivers)` expected by [`predict`].
    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        let [s, t, r] = self.inner.preset().input_shape();
        (s, t, r)
    }

    /// Eval-mode prediction for one normalized gather; returns the
    /// normalized 70×70 image, row-major.
    #[pyo3(signature = (gather, xi = None))]
    fn predict(&mut self, gather: Vec<f32>, xi: Option<Vec<f32>>) -> PyResult<Vec<f32>> {
        let [s, t, r] = self.inner.preset().input_shape();
        let g = Tensor::new(vec![1, s, t, r], gather).map_err(err)?;
        let xi = xi
            .map(|x| Tensor::new(vec![1, x.len()], x))
            .transpose()
            .map_err(err)?;
        let y = self.inner.predict(&g, xi.as_ref()).map_err(err)?;
        Ok(y.into_data())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({:?}, {} parameters)",
            self.inner.preset().id(),
            self.inner.count()
        )
    }
}

/// Trains `preset` on the dataset in `data`; returns the loss curve.
/// `overrides` replaces fields of the preset's default config.
#[pyfunction]
#[pyo3(signature = (preset, data, out, overrides = None, resume = false))]
fn train_model<'py>(
    py: Python<'py>,
    preset: &str,
    data: PathBuf,
    out: PathBuf,
    overrides: Option<&Bound<'py, PyAny>>,
    resume: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = serde_json::to_value(TrainConfig::for_preset(parse::<ModelPreset>(preset)?))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(o) = overrides {
        let text: String = py.import("json")?.call_method1("dumps", (o,))?.extract()?;
        let o: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let (Some(base), Some(o)) = (cfg.as_object_mut(), o.as_object()) else {
            return Err(PyValueError::new_err("overrides must be a dict"));
        };
        for (k, v) in o {
            base.insert(k.clone(), v.clone());
        }
    }
    let cfg: TrainConfig =
        serde_json::from_value(cfg).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let summary = train::train(&cfg, data, out, resume).map_err(err)?;
    json(py, &summary.curve)
}

/// Metrics of a checkpoint over a dataset split, as a dict.
#[pyfunction]
#[pyo3(signature = (checkpoint, data, split = "test"))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint: PathBuf,
    data: PathBuf,
    split: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let (params, extra) = model::load_with(checkpoint).map_err(err)?;
    let ds = Dataset::open(data).map_err(err)?;
    let fp = train::checkpoint_fingerprint(&extra).unwrap_or_default();
    json(py, &train::evaluate(&params, &ds, split, fp).map_err(err)?)
}

#[pyfunction]
fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::mae(&pred, &truth).map_err(err)
}

#[pyfunction]
fn rmse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::rmse(&pred, &truth).map_err(err)
}

#[pyfunction]
fn relative_error(preds: Vec<Vec<f64>>, truths: Vec<Vec<f64>>) -> PyResult<f64> {
    let p: Vec<&[f64]> = preds.iter().map(Vec::as_slice).collect();
    let t: Vec<&[f64]> = truths.iter().map(Vec::as_slice).collect();
    metrics::relative_error(&p, &t).map_err(err)
}

#[pyfunction]
fn ssim(pred: Vec<f64>, truth: Vec<f64>, shape: (usize, usize), data_range: f64) -> PyResult<f64> {
    metrics::ssim(&pred, &truth, shape.0, shape.1, data_range).map_err(err)
}

#[pymodule]
fn pyfwi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(cfl_max_dt, m)?)?;
    m.add_function(wrap_pyfunction!(generate_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(forward_model, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    Ok(())
}
