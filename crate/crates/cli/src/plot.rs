use fwi_onet::Tensor;

use crate::config::ConfigError;

/// The 2-D field to draw: `[H,W]`, `[1,H,W]`, or slice `s` of `[S,H,W]`.
pub fn field(
    t: &Tensor<f32>,
    slice: Option<usize>,
) -> Result<(usize, usize, Vec<f32>), ConfigError> {
    match (t.shape(), slice) {
        (&[h, w], None) => Ok((h, w, t.data().to_vec())),
        (&[1, h, w], None) => Ok((h, w, t.data().to_vec())),
        (&[s, h, w], Some(i)) if i < s => Ok((h, w, t.data()[i * h * w..(i + 1) * h * w].to_vec())),
        (&[s, _, _], Some(i)) => Err(ConfigError(format!(
            "slice {i} out of range for {s} slices"
        ))),
        (shape, None) => Err(ConfigError(format!(
            "cannot plot a tensor of shape {shape:?} without --slice"
        ))),
        (shape, Some(_)) => Err(ConfigError(format!(
            "cannot slice a tensor of shape {shape:?}"
        ))),
    }
}

/// Binary 8-bit PGM, row-major, minimum to 0 and maximum to 255. A
/// constant field is all zeros.
pub fn pgm(h: usize, w: usize, values: &[f32]) -> Vec<u8> {
    let lo = values.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
    let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if hi > lo {
            ((v as f64 - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}
