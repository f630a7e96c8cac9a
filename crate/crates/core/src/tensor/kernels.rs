//! Raw convolution kernels on flat buffers (im2col + GEMM).
//!
//! Layouts are NCHW for activations, `F×C×kh×kw` for convolution weights and
//! `C×F×kh×kw` for transposed-convolution weights.

use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Stride and zero padding of a 2-D convolution, `(rows, cols)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeom {
    pub const fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Self { stride, padding }
    }

    pub const fn unit() -> Self {
        Self::new((1, 1), (0, 0))
    }

    /// Output extent of a convolution over an input of extent `(h, w)`.
    pub fn conv_out(&self, h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize)> {
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::Dimension(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * ph,
                w + 2 * pw
            )));
        }
        Ok((
            (h + 2 * ph - kh) / self.stride.0 + 1,
            (w + 2 * pw - kw) / self.stride.1 + 1,
        ))
    }

    /// Output extent of a transposed convolution over an input of extent `(h, w)`.
    pub fn conv_transpose_out(
        &self,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
    ) -> Result<(usize, usize)> {
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        let full_h = (h - 1) * self.stride.0 + kh;
        let full_w = (w - 1) * self.stride.1 + kw;
        let (ph, pw) = self.padding;
        if full_h <= 2 * ph || full_w <= 2 * pw {
            return Err(Error::Dimension(format!(
                "padding {:?} consumes the whole transposed output {full_h}x{full_w}",
                self.padding
            )));
        }
        Ok((full_h - 2 * ph, full_w - 2 * pw))
    }
}

/// Sizes of one convolution, seen from the "image" side (`h×w`, `c` channels)
/// and the "column" side (`ho×wo`).
#[derive(Clone, Copy, Debug)]
struct Patch {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    geom: ConvGeom,
}

impl Patch {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Scalar>(x: &[T], p: &Patch, cols: &mut [T]) {
    let (sh, sw) = p.geom.stride;
    let (ph, pw) = p.geom.padding;
    let plane = p.cols();
    for ci in 0..p.c {
        let img = &x[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ki in 0..p.kh {
            for kj in 0..p.kw {
                let row = ((ci * p.kh + ki) * p.kw + kj) * plane;
                for oy in 0..p.ho {
                    let dst = &mut cols[row + oy * p.wo..row + (oy + 1) * p.wo];
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= p.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &img[iy as usize * p.w..(iy as usize + 1) * p.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *d = if ix >= 0 && ix < p.w as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds columns back onto an image (adjoint of [`im2col`]).
fn col2im<T: Scalar>(cols: &[T], p: &Patch, x: &mut [T]) {
    let (sh, sw) = p.geom.stride;
    let (ph, pw) = p.geom.padding;
    let plane = p.cols();
    for ci in 0..p.c {
        let img = &mut x[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ki in 0..p.kh {
            for kj in 0..p.kw {
                let row = ((ci * p.kh + ki) * p.kw + kj) * plane;
                for oy in 0..p.ho {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= p.h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * p.wo..row + (oy + 1) * p.wo];
                    let dst = &mut img[iy as usize * p.w..(iy as usize + 1) * p.w];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < p.w as isize {
                            dst[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Shape bookkeeping shared by the forward and backward kernels.
#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub n: usize,
    /// Channels of the spatially larger side (conv input / transposed-conv output).
    pub c_img: usize,
    /// Channels of the spatially smaller side (conv output / transposed-conv input).
    pub c_col: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub ho: usize,
    pub wo: usize,
    pub geom: ConvGeom,
}

impl ConvShape {
    /// Shape of a convolution `x[N,C,H,W] * w[F,C,kh,kw]`.
    pub fn conv(x: &[usize], w: &[usize], geom: ConvGeom) -> Result<Self> {
        if x.len() != 4 || w.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d expects 4-D input and weight, got {x:?} and {w:?}"
            )));
        }
        if x[1] != w[1] {
            return Err(Error::Dimension(format!(
                "conv2d input has {} channels but weight expects {}",
                x[1], w[1]
            )));
        }
        let (ho, wo) = geom.conv_out(x[2], x[3], w[2], w[3])?;
        Ok(Self {
            n: x[0],
            c_img: x[1],
            c_col: w[0],
            h: x[2],
            w: x[3],
            kh: w[2],
            kw: w[3],
            ho,
            wo,
            geom,
        })
    }

    /// Shape of a transposed convolution `x[N,C,H,W] * w[C,F,kh,kw]`.
    pub fn conv_transpose(x: &[usize], w: &[usize], geom: ConvGeom) -> Result<Self> {
        if x.len() != 4 || w.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv_transpose2d expects 4-D input and weight, got {x:?} and {w:?}"
            )));
        }
        if x[1] != w[0] {
            return Err(Error::Dimension(format!(
                "conv_transpose2d input has {} channels but weight expects {}",
                x[1], w[0]
            )));
        }
        let (h, wd) = geom.conv_transpose_out(x[2], x[3], w[2], w[3])?;
        // The transposed output, convolved with the same geometry, must land
        // back on the input grid.
        let (ho, wo) = geom.conv_out(h, wd, w[2], w[3])?;
        if (ho, wo) != (x[2], x[3]) {
            return Err(Error::Dimension(format!(
                "transposed geometry {geom:?} is not invertible for input {x:?}"
            )));
        }
        Ok(Self {
            n: x[0],
            c_img: w[1],
            c_col: x[1],
            h,
            w: wd,
            kh: w[2],
            kw: w[3],
            ho,
            wo,
            geom,
        })
    }

    fn patch(&self) -> Patch {
        Patch {
            c: self.c_img,
            h: self.h,
            w: self.w,
            kh: self.kh,
            kw: self.kw,
            ho: self.ho,
            wo: self.wo,
            geom: self.geom,
        }
    }

    pub fn img_len(&self) -> usize {
        self.c_img * self.h * self.w
    }

    pub fn col_len(&self) -> usize {
        self.c_col * self.ho * self.wo
    }
}

/// `y = conv(x, w) + b`, `x` on the image side, `y` on the column side.
pub fn conv_forward<T: Scalar>(s: &ConvShape, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let p = s.patch();
    let mut cols = vec![T::zero(); p.rows() * p.cols()];
    let mut y = vec![T::zero(); s.n * s.col_len()];
    for n in 0..s.n {
        let xn = &x[n * s.img_len()..(n + 1) * s.img_len()];
        let yn = &mut y[n * s.col_len()..(n + 1) * s.col_len()];
        im2col(xn, &p, &mut cols);
        T::gemm(
            s.c_col,
            p.rows(),
            p.cols(),
            w,
            false,
            &cols,
            false,
            yn,
            false,
        );
        if let Some(b) = b {
            add_channel_bias(yn, b, p.cols());
        }
    }
    y
}

/// Adjoint of [`conv_forward`] with respect to its image-side input.
pub fn conv_backward_input<T: Scalar>(s: &ConvShape, gy: &[T], w: &[T]) -> Vec<T> {
    let p = s.patch();
    let mut cols = vec![T::zero(); p.rows() * p.cols()];
    let mut gx = vec![T::zero(); s.n * s.img_len()];
    for n in 0..s.n {
        let gyn = &gy[n * s.col_len()..(n + 1) * s.col_len()];
        T::gemm(
            p.rows(),
            s.c_col,
            p.cols(),
            w,
            true,
            gyn,
            false,
            &mut cols,
            false,
        );
        col2im(&cols, &p, &mut gx[n * s.img_len()..(n + 1) * s.img_len()]);
    }
    gx
}

/// Gradient of `<gy, conv(x, w)>` with respect to `w` (layout `c_col × c_img·kh·kw`).
pub fn conv_backward_weight<T: Scalar>(s: &ConvShape, x: &[T], gy: &[T]) -> Vec<T> {
    let p = s.patch();
    let mut cols = vec![T::zero(); p.rows() * p.cols()];
    let mut gw = vec![T::zero(); s.c_col * p.rows()];
    for n in 0..s.n {
        im2col(&x[n * s.img_len()..(n + 1) * s.img_len()], &p, &mut cols);
        let gyn = &gy[n * s.col_len()..(n + 1) * s.col_len()];
        T::gemm(
            s.c_col,
            p.cols(),
            p.rows(),
            gyn,
            false,
            &cols,
            true,
            &mut gw,
            true,
        );
    }
    gw
}

/// `y = conv_transpose(x, w) + b`: `x` on the column side, `y` on the image side.
pub fn conv_transpose_forward<T: Scalar>(
    s: &ConvShape,
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
) -> Vec<T> {
    // The transposed weight `C×F×kh×kw` reads as `c_col × c_img·kh·kw`, exactly
    // the layout the convolution adjoint expects.
    let mut y = conv_backward_input(s, x, w);
    if let Some(b) = b {
        for yn in y.chunks_mut(s.img_len()) {
            add_channel_bias(yn, b, s.h * s.w);
        }
    }
    y
}

/// Adjoint of [`conv_transpose_forward`] with respect to its input.
pub fn conv_transpose_backward_input<T: Scalar>(s: &ConvShape, gy: &[T], w: &[T]) -> Vec<T> {
    conv_forward(s, gy, w, None)
}

/// Gradient with respect to the transposed-convolution weight.
pub fn conv_transpose_backward_weight<T: Scalar>(s: &ConvShape, x: &[T], gy: &[T]) -> Vec<T> {
    conv_backward_weight(s, gy, x)
}

fn add_channel_bias<T: Scalar>(y: &mut [T], b: &[T], plane: usize) {
    for (chunk, &bias) in y.chunks_mut(plane).zip(b) {
        chunk.iter_mut().for_each(|v| *v += bias);
    }
}

/// Per-channel sum over `N` and the spatial plane, i.e. the bias gradient.
pub fn channel_sums<T: Scalar>(g: &[T], n: usize, c: usize, plane: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c];
    for sample in g.chunks(c * plane).take(n) {
        for (o, chunk) in out.iter_mut().zip(sample.chunks(plane)) {
            *o += chunk.iter().copied().sum::<T>();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution, the reference for the im2col path.
    fn naive_conv(
        x: &[f64],
        (n, c, h, w): (usize, usize, usize, usize),
        wt: &[f64],
        (f, kh, kw): (usize, usize, usize),
        geom: ConvGeom,
    ) -> (Vec<f64>, usize, usize) {
        let (ho, wo) = geom.conv_out(h, w, kh, kw).unwrap();
        let mut y = vec![0.0; n * f * ho * wo];
        for b in 0..n {
            for fo in 0..f {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy =
                                        (oy * geom.stride.0 + i) as isize - geom.padding.0 as isize;
                                    let ix =
                                        (ox * geom.stride.1 + j) as isize - geom.padding.1 as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += x[((b * c + ci) * h + iy as usize) * w + ix as usize]
                                        * wt[((fo * c + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                        y[((b * f + fo) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        (y, ho, wo)
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn im2col_matches_naive_loops() {
        for &(geom, kh, kw) in &[
            (ConvGeom::new((1, 1), (0, 0)), 3, 3),
            (ConvGeom::new((2, 1), (3, 0)), 7, 1),
            (ConvGeom::new((2, 2), (1, 1)), 3, 3),
            (ConvGeom::new((1, 2), (2, 1)), 2, 4),
        ] {
            let dims = (2, 3, 9, 8);
            let x = pseudo(2 * 3 * 9 * 8, 1);
            let wt = pseudo(4 * 3 * kh * kw, 2);
            let (reference, ho, wo) = naive_conv(&x, dims, &wt, (4, kh, kw), geom);
            let s = ConvShape::conv(&[2, 3, 9, 8], &[4, 3, kh, kw], geom).unwrap();
            assert_eq!((s.ho, s.wo), (ho, wo));
            let y = conv_forward(&s, &x, &wt, None);
            for (a, b) in y.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_extents() {
        let g = ConvGeom::new((2, 2), (1, 1));
        assert_eq!(g.conv_transpose_out(5, 5, 4, 4).unwrap(), (10, 10));
        assert_eq!(g.conv_out(10, 10, 4, 4).unwrap(), (5, 5));
        assert_eq!(
            ConvGeom::unit().conv_transpose_out(1, 1, 5, 5).unwrap(),
            (5, 5)
        );
        assert!(ConvGeom::unit().conv_out(2, 2, 3, 3).is_err());
        assert!(ConvGeom::new((0, 1), (0, 0)).conv_out(4, 4, 1, 1).is_err());
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let g = ConvGeom::unit();
        assert!(matches!(
            ConvShape::conv(&[1, 2, 4, 4], &[3, 3, 1, 1], g),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            ConvShape::conv_transpose(&[1, 2, 4, 4], &[3, 3, 1, 1], g),
            Err(Error::Dimension(_))
        ));
    }
}
