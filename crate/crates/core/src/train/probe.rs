use serde::{Deserialize, Serialize};

use super::eval::{score_image, SampleScore};
use crate::datagen::{Normalization, FIXED_LOCATIONS, FREQUENCY_RANGE, N_SOURCES};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;
use crate::wavesim::{forward_model, SimGrid, Source, SourceSet, VelocityModel};

/// Per-source frequencies, Hz, at the fixed source locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub frequencies: [f64; N_SOURCES],
}

impl Scenario {
    pub fn new(name: &str, frequencies: [f64; N_SOURCES]) -> Self {
        Self {
            name: name.to_string(),
            frequencies,
        }
    }

    pub fn sources(&self) -> Result<SourceSet> {
        let (lo, hi) = FREQUENCY_RANGE;
        if let Some(f) = self.frequencies.iter().find(|f| !(lo..=hi).contains(*f)) {
            return Err(Error::InvalidArgument(format!(
                "scenario {:?}: frequency {f} Hz outside [{lo}, {hi}]",
                self.name
            )));
        }
        Ok(SourceSet::new(
            self.frequencies
                .iter()
                .zip(FIXED_LOCATIONS)
                .map(|(&frequency, x)| Source { frequency, x })
                .collect(),
        ))
    }
}

/// Identical, random, moderately variable and extremely variable
/// frequency sets.
pub fn paper_scenarios() -> Vec<Scenario> {
    vec![
        Scenario::new("identical", [15.0; 5]),
        Scenario::new("random", [19.9, 9.7, 10.0, 16.4, 5.2]),
        Scenario::new("moderate", [10.0, 15.0, 20.0, 15.0, 10.0]),
        Scenario::new("extreme", [5.0, 15.0, 25.0, 15.0, 5.0]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub score: SampleScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub preset: String,
    pub scenarios: Vec<ScenarioResult>,
    /// Largest minus smallest scenario MAE (normalized units).
    pub mae_spread: f64,
    /// Largest absolute difference between any two scenario predictions
    /// (normalized units).
    pub max_pairwise_deviation: f64,
}

/// Simulates `velocity` under each scenario, predicts with the matching
/// source parameters and scores every prediction.
pub fn probe_generalization(
    params: &ModelParams,
    velocity: &VelocityModel,
    scenarios: &[Scenario],
    norm: &Normalization,
    grid: &SimGrid,
) -> Result<ProbeReport> {
    let preset = params.preset();
    if !preset.kind.varies_frequency() {
        return Err(Error::InvalidArgument(format!(
            "{preset} was trained with fixed frequencies; probes need kind F or FL"
        )));
    }
    preset.check_data(preset.kind, grid)?;
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument("no probe scenarios".into()));
    }
    let (vb, gb) = (norm.velocity()?, norm.gather()?);
    let (nz, nx) = (velocity.nz, velocity.nx);
    let truth: Vec<f32> = velocity
        .data
        .iter()
        .map(|&v| vb.normalize(v as f64) as f32)
        .collect();

    let mut model = params.clone();
    let mut results = Vec::with_capacity(scenarios.len());
    let mut preds = Vec::with_capacity(scenarios.len());
    for (k, sc) in scenarios.iter().enumerate() {
        let sources = sc.sources()?;
        let gather = forward_model(velocity, &sources, grid)?;
        let mut shape = vec![1];
        shape.extend_from_slice(&gather.shape());
        let g = Tensor::new(
            shape,
            gather
                .data
                .iter()
                .map(|&x| gb.normalize(x as f64) as f32)
                .collect(),
        )?;
        let xi_values = preset.kind.encode(&sources)?;
        let xi = Tensor::new(vec![1, xi_values.len()], xi_values)?;
        let use_xi = preset.xi_len() > 0;
        let y = model.predict(&g, use_xi.then_some(&xi))?;
        let score = score_image(k, y.data(), &truth, vb, (nz, nx))?;
        results.push(ScenarioResult {
            scenario: sc.clone(),
            score,
        });
        preds.push(y.into_data());
    }

    let maes: Vec<f64> = results.iter().map(|r| r.score.mae).collect();
    let spread = maes.iter().cloned().fold(f64::MIN, f64::max)
        - maes.iter().cloned().fold(f64::MAX, f64::min);
    let mut deviation = 0.0f64;
    for a in 0..preds.len() {
        for b in a + 1..preds.len() {
            for (x, y) in preds[a].iter().zip(&preds[b]) {
                deviation = deviation.max((x - y).abs() as f64);
            }
        }
    }
    Ok(ProbeReport {
        preset: preset.id(),
        scenarios: results,
        mae_spread: spread,
        max_pairwise_deviation: deviation,
    })
}
