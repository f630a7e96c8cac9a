use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{generate_velocity, FamilyKind, FamilySpec};
use super::sources::{sample_sources, DatasetKind};
use super::Bounds;
use crate::error::{Error, Result};
use crate::tensor::{fwit, Tensor};
use crate::wavesim::{forward_model, SimGrid, Source, SourceSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Everything that determines the content of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRequest {
    pub kind: DatasetKind,
    pub family: FamilySpec,
    pub n_samples: usize,
    pub seed: u64,
    pub grid: SimGrid,
}

impl DatasetRequest {
    /// Velocity seed and source seed of sample `index`.
    pub fn sample_seeds(&self, index: usize) -> (u64, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        (rng.next_u64(), rng.next_u64())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub v_min: f64,
    pub v_max: f64,
    /// Largest absolute gather amplitude over the training split.
    pub p_absmax: f64,
}

impl Normalization {
    pub fn velocity(&self) -> Result<Bounds> {
        Bounds::new(self.v_min, self.v_max)
    }

    pub fn gather(&self) -> Result<Bounds> {
        Bounds::symmetric(self.p_absmax)
    }
}

/// Train is `[0, n_train - n_val)`, validation the rest of the first
/// `n_train` samples, test the final `n_test`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl SplitBounds {
    /// One seventh held out for testing, a tenth of the rest for validation.
    pub fn for_count(n: usize) -> Self {
        let n_test = (n as f64 / 7.0).round() as usize;
        let n_train = n - n_test;
        Self {
            n_train,
            n_val: n_train / 10,
            n_test,
        }
    }

    pub fn train(&self) -> std::ops::Range<usize> {
        0..self.n_train - self.n_val
    }

    pub fn val(&self) -> std::ops::Range<usize> {
        self.n_train - self.n_val..self.n_train
    }

    pub fn test(&self) -> std::ops::Range<usize> {
        self.n_train..self.n_train + self.n_test
    }

    pub fn range(&self, name: &str) -> Result<std::ops::Range<usize>> {
        match name {
            "train" => Ok(self.train()),
            "val" => Ok(self.val()),
            "test" => Ok(self.test()),
            "all" => Ok(0..self.n_train + self.n_test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (train, val, test, all)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub velocity: String,
    pub gather: String,
    pub meta: String,
    pub absmax: f64,
}

/// Per-sample sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub family: FamilyKind,
    pub kind: DatasetKind,
    pub seed: u64,
    pub velocity_seed: u64,
    pub source_seed: u64,
    pub sources: Vec<Source>,
    pub xi: Vec<f32>,
    pub grid: SimGrid,
    pub v_min: f64,
    pub v_max: f64,
    pub absmax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub family: FamilySpec,
    pub n_samples: usize,
    pub seed: u64,
    pub grid: SimGrid,
    pub normalization: Normalization,
    pub split: SplitBounds,
    pub complete: bool,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn request(&self) -> DatasetRequest {
        DatasetRequest {
            kind: self.kind,
            family: self.family.clone(),
            n_samples: self.n_samples,
            seed: self.seed,
            grid: self.grid.clone(),
        }
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "manifest version {} (supported: {MANIFEST_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// `<root>/<family>-<kind>`.
pub fn dataset_dir(root: impl AsRef<Path>, family: FamilyKind, kind: DatasetKind) -> PathBuf {
    root.as_ref().join(format!("{family}-{kind}"))
}

fn sample_paths(index: usize) -> (String, String, String) {
    (
        format!("velocity/{index:05}.fwit"),
        format!("gather/{index:05}.fwit"),
        format!("meta/{index:05}.json"),
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("part");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tensor_bytes(t: &Tensor<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 8 * t.ndim() + 4 * t.numel());
    fwit::write_tensor(&mut buf, t).expect("writing to a Vec cannot fail");
    buf
}

/// Reads back a finished sample, or `None` if it must be (re)generated.
fn existing_sample(dir: &Path, req: &DatasetRequest, index: usize) -> Option<SampleEntry> {
    let (v, g, m) = sample_paths(index);
    if !dir.join(&v).is_file() || !dir.join(&g).is_file() {
        return None;
    }
    let meta: SampleMeta = serde_json::from_str(&fs::read_to_string(dir.join(&m)).ok()?).ok()?;
    let (vs, ss) = req.sample_seeds(index);
    let matches = meta.index == index
        && meta.seed == req.seed
        && meta.velocity_seed == vs
        && meta.source_seed == ss
        && meta.kind == req.kind
        && meta.family == req.family.kind
        && meta.grid == req.grid;
    matches.then_some(SampleEntry {
        index,
        velocity: v,
        gather: g,
        meta: m,
        absmax: meta.absmax,
    })
}

fn generate_sample(dir: &Path, req: &DatasetRequest, index: usize) -> Result<SampleEntry> {
    let (velocity_seed, source_seed) = req.sample_seeds(index);
    let model = generate_velocity(&req.family, velocity_seed)?;
    let sources = sample_sources(req.kind, source_seed);
    let gather = forward_model(&model, &sources, &req.grid)?;
    let absmax = gather.abs_max() as f64;
    if !absmax.is_finite() {
        return Err(Error::NonFinite(format!("gather of sample {index}")));
    }
    let meta = SampleMeta {
        index,
        family: req.family.kind,
        kind: req.kind,
        seed: req.seed,
        velocity_seed,
        source_seed,
        xi: req.kind.encode(&sources)?,
        sources: sources.sources,
        grid: req.grid.clone(),
        v_min: req.family.v_min,
        v_max: req.family.v_max,
        absmax,
    };
    let (v, g, m) = sample_paths(index);
    write_atomic(&dir.join(&v), &tensor_bytes(&model.to_tensor()))?;
    write_atomic(&dir.join(&g), &tensor_bytes(&gather.to_tensor()))?;
    // The sidecar goes last: its presence marks the sample complete.
    write_atomic(
        &dir.join(&m),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    Ok(SampleEntry {
        index,
        velocity: v,
        gather: g,
        meta: m,
        absmax,
    })
}

fn assemble_manifest(
    req: &DatasetRequest,
    samples: Vec<SampleEntry>,
    complete: bool,
) -> DatasetManifest {
    let split = SplitBounds::for_count(req.n_samples);
    let p_absmax = samples
        .iter()
        .filter(|s| s.index < split.n_train)
        .fold(0.0f64, |a, s| a.max(s.absmax));
    DatasetManifest {
        format_version: MANIFEST_VERSION,
        kind: req.kind,
        family: req.family.clone(),
        n_samples: req.n_samples,
        seed: req.seed,
        grid: req.grid.clone(),
        normalization: Normalization {
            v_min: req.family.v_min,
            v_max: req.family.v_max,
            p_absmax,
        },
        split,
        complete,
        samples,
    }
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

/// Generates (or completes) the dataset of `req` under
/// `<root>/<family>-<kind>`, using at most `jobs` worker threads.
///
/// Samples already on disk with matching seeds are kept. When a sample
/// fails, the manifest lists the finished samples with `complete: false`
/// and the first error is returned.
pub fn build_dataset(
    root: impl AsRef<Path>,
    req: &DatasetRequest,
    jobs: usize,
) -> Result<DatasetManifest> {
    if req.n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    req.family.validate()?;
    req.grid.validate()?;
    if (req.grid.nx, req.grid.nz) != (req.family.nx, req.family.nz) {
        return Err(Error::Dimension(format!(
            "family models are {}x{} but the grid is {}x{}",
            req.family.nx, req.family.nz, req.grid.nx, req.grid.nz
        )));
    }
    let dir = dataset_dir(root, req.family.kind, req.kind);
    for sub in ["velocity", "gather", "meta"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let results: Vec<Result<SampleEntry>> = pool.install(|| {
        (0..req.n_samples)
            .into_par_iter()
            .map(|i| match existing_sample(&dir, req, i) {
                Some(entry) => {
                    log::debug!("sample {i} already complete");
                    Ok(entry)
                }
                None => generate_sample(&dir, req, i),
            })
            .collect()
    });

    let mut samples = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::error!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let manifest = assemble_manifest(req, samples, first_err.is_none());
    write_manifest(&dir, &manifest)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub samples: usize,
    pub files: usize,
}

/// Checks that every listed file exists, parses and matches the declared
/// shapes, bounds and seeds, and that the normalization record is
/// reproducible from the files.
pub fn verify(dir: impl AsRef<Path>) -> Result<VerifyReport> {
    let dir = dir.as_ref();
    let m = DatasetManifest::load(dir)?;
    let req = m.request();
    let mut problems = Vec::new();
    if !m.complete {
        problems.push("manifest is flagged incomplete".to_string());
    }
    if m.samples.len() != m.n_samples {
        problems.push(format!(
            "{} samples listed, {} declared",
            m.samples.len(),
            m.n_samples
        ));
    }
    if m.split != SplitBounds::for_count(m.n_samples) {
        problems.push(format!(
            "split {:?} does not follow the split rule",
            m.split
        ));
    }
    let gather_shape = [super::N_SOURCES, m.grid.n_record(), m.grid.nx];
    let mut p_absmax = 0.0f64;
    for (pos, s) in m.samples.iter().enumerate() {
        let fail = |what: String| format!("sample {}: {what}", s.index);
        if s.index != pos {
            problems.push(fail(format!("listed at position {pos}")));
        }
        match fwit::load(dir.join(&s.velocity)) {
            Ok(v) if v.shape() != [m.grid.nz, m.grid.nx] => {
                problems.push(fail(format!("velocity shape {:?}", v.shape())))
            }
            Ok(v) => {
                let (lo, hi) = (m.normalization.v_min as f32, m.normalization.v_max as f32);
                if v.data().iter().any(|&x| !(lo..=hi).contains(&x)) {
                    problems.push(fail("velocity outside bounds".into()));
                }
            }
            Err(e) => problems.push(fail(e.to_string())),
        }
        match fwit::load(dir.join(&s.gather)) {
            Ok(g) if g.shape() != gather_shape => {
                problems.push(fail(format!("gather shape {:?}", g.shape())))
            }
            Ok(g) => {
                let a = g.max_abs() as f64;
                if a != s.absmax {
                    problems.push(fail(format!("absmax {a} but manifest says {}", s.absmax)));
                }
                if s.index < m.split.n_train {
                    p_absmax = p_absmax.max(a);
                }
            }
            Err(e) => problems.push(fail(e.to_string())),
        }
        let meta = fs::read_to_string(dir.join(&s.meta))
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<SampleMeta>(&t).map_err(|e| e.to_string()));
        match meta {
            Ok(meta) => {
                let (vs, ss) = req.sample_seeds(s.index);
                if (meta.velocity_seed, meta.source_seed) != (vs, ss) || meta.index != s.index {
                    problems.push(fail("sidecar seeds do not match".into()));
                }
                let set = SourceSet::new(meta.sources.clone());
                match m.kind.encode(&set) {
                    Ok(xi) if xi == meta.xi => {}
                    Ok(_) => problems.push(fail("sidecar xi does not match its sources".into())),
                    Err(e) => problems.push(fail(e.to_string())),
                }
            }
            Err(e) => problems.push(fail(format!("sidecar: {e}"))),
        }
    }
    if m.complete && p_absmax != m.normalization.p_absmax {
        problems.push(format!(
            "p_absmax {} does not match the training files ({p_absmax})",
            m.normalization.p_absmax
        ));
    }
    if problems.is_empty() {
        Ok(VerifyReport {
            samples: m.samples.len(),
            files: 3 * m.samples.len() + 1,
        })
    } else {
        Err(Error::Manifest(problems.join("; ")))
    }
}

/// One normalized training example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub index: usize,
    /// `[S, T, R]` in `[-1, 1]` (test samples may exceed it slightly).
    pub gather: Tensor<f32>,
    /// `[1, nz, nx]` in `[-1, 1]`.
    pub velocity: Tensor<f32>,
    pub xi: Vec<f32>,
    pub sources: SourceSet,
}

/// Read access to a built dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = DatasetManifest::load(&dir)?;
        if !manifest.complete {
            return Err(Error::Manifest(format!(
                "{} is incomplete; rerun generation",
                dir.display()
            )));
        }
        Ok(Self { dir, manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn meta(&self, index: usize) -> Result<SampleMeta> {
        let entry = self.entry(index)?;
        let path = self.dir.join(&entry.meta);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn entry(&self, index: usize) -> Result<&SampleEntry> {
        self.manifest
            .samples
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("sample {index} out of range")))
    }

    /// Raw velocity in m/s, `[nz, nx]`.
    pub fn velocity_raw(&self, index: usize) -> Result<Tensor<f32>> {
        fwit::load(self.dir.join(&self.entry(index)?.velocity))
    }

    pub fn load(&self, index: usize) -> Result<Sample> {
        let entry = self.entry(index)?;
        let norm = self.manifest.normalization;
        let (vb, gb) = (norm.velocity()?, norm.gather()?);
        let v = fwit::load(self.dir.join(&entry.velocity))?;
        let g = fwit::load(self.dir.join(&entry.gather))?;
        let meta = self.meta(index)?;
        let (nz, nx) = (v.shape()[0], v.shape()[1]);
        let velocity = Tensor::new(
            vec![1, nz, nx],
            v.data()
                .iter()
                .map(|&x| vb.normalize(x as f64) as f32)
                .collect(),
        )?;
        let gather = Tensor::new(
            g.shape().to_vec(),
            g.data()
                .iter()
                .map(|&x| gb.normalize(x as f64) as f32)
                .collect(),
        )?;
        Ok(Sample {
            index,
            gather,
            velocity,
            xi: meta.xi,
            sources: SourceSet::new(meta.sources),
        })
    }

    pub fn load_range(&self, range: std::ops::Range<usize>) -> Result<Vec<Sample>> {
        range.into_par_iter().map(|i| self.load(i)).collect()
    }
}
