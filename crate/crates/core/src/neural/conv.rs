//! 2-D cross-correlation and its adjoints, lowered to matrix products.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

use super::tensor::Tensor4;

/// Zero padding added on each side before correlating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        top: 0,
        left: 0,
        bottom: 0,
        right: 0,
    };

    pub fn uniform(p: usize) -> Self {
        Self {
            top: p,
            left: p,
            bottom: p,
            right: p,
        }
    }

    /// Output size equals input size at stride 1. Even kernels put the
    /// extra row/column after.
    pub fn same(k: usize) -> Self {
        let before = (k - 1) / 2;
        let after = k - 1 - before;
        Self {
            top: before,
            left: before,
            bottom: after,
            right: after,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub grad_x: Option<Tensor4>,
    pub grad_w: Option<Tensor4>,
    pub grad_b: Vec<f64>,
}

fn out_len(n: usize, before: usize, after: usize, k: usize, stride: usize) -> Result<usize> {
    let padded = n + before + after;
    if padded < k {
        return Err(Error::ShapeMismatch(format!(
            "kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Output shape of a convolution, validating channel counts.
pub fn conv2d_output_shape(x: [usize; 4], w: [usize; 4], stride: usize, pad: Padding) -> Result<[usize; 4]> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    if x[1] != w[1] {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, kernel expects {}",
            x[1], w[1]
        )));
    }
    Ok([
        x[0],
        w[0],
        out_len(x[2], pad.top, pad.bottom, w[2], stride)?,
        out_len(x[3], pad.left, pad.right, w[3], stride)?,
    ])
}

/// Range of output columns whose tap `k` lands inside `[0, width)`.
#[inline]
fn col_range(k: usize, before: usize, stride: usize, width: usize, out_w: usize) -> (usize, usize) {
    // ix = ox * stride + k - before
    let lo = if before > k { (before - k).div_ceil(stride) } else { 0 };
    let hi = if width + before > k {
        ((width + before - k - 1) / stride + 1).min(out_w)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Visits every (output row, input row) pair that kernel row `ky` touches.
#[inline]
fn rows(ky: usize, pad: Padding, stride: usize, h: usize, oh: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..oh).filter_map(move |oy| {
        let iy = (oy * stride + ky) as isize - pad.top as isize;
        (iy >= 0 && (iy as usize) < h).then_some((oy, iy as usize))
    })
}

/// Column budget per product, in entries. Inputs with many channels are
/// unrolled a channel group at a time.
const COLUMN_BUDGET: usize = 1 << 20;

/// Unrolls the receptive fields of channels `chans` of sample `n` into a
/// `(chans.len()*kh*kw, oh*ow)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(x: &Tensor4, n: usize, chans: Range<usize>, kh: usize, kw: usize, stride: usize, pad: Padding, oh: usize, ow: usize, cols: &mut Vec<f64>) {
    let [_, _, h, wd] = x.shape();
    cols.clear();
    cols.resize(chans.len() * kh * kw * oh * ow, 0.0);
    for (ci, ic) in chans.enumerate() {
        let xin = x.plane_slice(n, ic);
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                let (lo, hi) = col_range(kx, pad.left, stride, wd, ow);
                if lo >= hi {
                    continue;
                }
                for (oy, iy) in rows(ky, pad, stride, h, oh) {
                    let xrow = &xin[iy * wd..(iy + 1) * wd];
                    let drow = &mut dst[oy * ow + lo..oy * ow + hi];
                    if stride == 1 {
                        let start = lo + kx - pad.left;
                        drow.copy_from_slice(&xrow[start..start + (hi - lo)]);
                    } else {
                        for (j, d) in drow.iter_mut().enumerate() {
                            *d = xrow[(lo + j) * stride + kx - pad.left];
                        }
                    }
                }
            }
        }
    }
}

/// Scatters a column matrix back onto channels `chans` of sample `n`.
#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], gx: &mut Tensor4, n: usize, chans: Range<usize>, kh: usize, kw: usize, stride: usize, pad: Padding, oh: usize, ow: usize) {
    let [_, _, h, wd] = gx.shape();
    for (ci, ic) in chans.enumerate() {
        let gplane = gx.plane_slice_mut(n, ic);
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                let (lo, hi) = col_range(kx, pad.left, stride, wd, ow);
                if lo >= hi {
                    continue;
                }
                for (oy, iy) in rows(ky, pad, stride, h, oh) {
                    let grow = &mut gplane[iy * wd..(iy + 1) * wd];
                    let srow = &src[oy * ow + lo..oy * ow + hi];
                    if stride == 1 {
                        let start = lo + kx - pad.left;
                        for (g, s) in grow[start..start + (hi - lo)].iter_mut().zip(srow) {
                            *g += s;
                        }
                    } else {
                        for (j, s) in srow.iter().enumerate() {
                            grow[(lo + j) * stride + kx - pad.left] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Output channel count at or below which the direct loops beat unrolling.
const DIRECT_MAX_OUT: usize = 2;

fn direct_forward(x: &Tensor4, w: &Tensor4, out: &mut Tensor4, stride: usize, pad: Padding) {
    let [batch, ci, h, wd] = x.shape();
    let [co, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = out.shape();
    for n in 0..batch {
        for oc in 0..co {
            for ic in 0..ci {
                let xin = x.plane_slice(n, ic);
                let wk = &w.data()[(oc * ci + ic) * kh * kw..(oc * ci + ic + 1) * kh * kw];
                let dst = out.plane_slice_mut(n, oc);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wk[ky * kw + kx];
                        let (lo, hi) = col_range(kx, pad.left, stride, wd, ow);
                        if lo >= hi || wv == 0.0 {
                            continue;
                        }
                        for (oy, iy) in rows(ky, pad, stride, h, oh) {
                            let xrow = &xin[iy * wd..(iy + 1) * wd];
                            let orow = &mut dst[oy * ow + lo..oy * ow + hi];
                            if stride == 1 {
                                let start = lo + kx - pad.left;
                                for (o, v) in orow.iter_mut().zip(&xrow[start..start + (hi - lo)]) {
                                    *o += wv * v;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wv * xrow[(lo + j) * stride + kx - pad.left];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() / 4 * 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn direct_backward(x: &Tensor4, w: &Tensor4, g: &Tensor4, stride: usize, pad: Padding, gx: Option<&mut Tensor4>, gw: Option<&mut Tensor4>) {
    let [batch, ci, h, wd] = x.shape();
    let [co, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = g.shape();
    let mut gx = gx;
    let mut gw = gw;
    for n in 0..batch {
        for oc in 0..co {
            let gout = g.plane_slice(n, oc);
            for ic in 0..ci {
                let base = (oc * ci + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let (lo, hi) = col_range(kx, pad.left, stride, wd, ow);
                        if lo >= hi {
                            continue;
                        }
                        let tap = base + ky * kw + kx;
                        let wv = w.data()[tap];
                        let mut acc = 0.0;
                        for (oy, iy) in rows(ky, pad, stride, h, oh) {
                            let grow = &gout[oy * ow + lo..oy * ow + hi];
                            let start = lo * stride + kx - pad.left;
                            if let Some(gx) = gx.as_deref_mut() {
                                let xrow = &mut gx.plane_slice_mut(n, ic)[iy * wd..(iy + 1) * wd];
                                if stride == 1 {
                                    for (o, gv) in xrow[start..start + grow.len()].iter_mut().zip(grow) {
                                        *o += wv * gv;
                                    }
                                } else {
                                    for (o, gv) in xrow[start..].iter_mut().step_by(stride).zip(grow) {
                                        *o += wv * gv;
                                    }
                                }
                            }
                            if gw.is_some() {
                                let xrow = &x.plane_slice(n, ic)[iy * wd..(iy + 1) * wd];
                                acc += if stride == 1 {
                                    dot(grow, &xrow[start..start + grow.len()])
                                } else {
                                    grow.iter().zip(xrow[start..].iter().step_by(stride)).map(|(a, b)| a * b).sum()
                                };
                            }
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            gw.data_mut()[tap] += acc;
                        }
                    }
                }
            }
        }
    }
}

fn is_pointwise(w: &Tensor4, stride: usize, pad: Padding) -> bool {
    let [_, _, kh, kw] = w.shape();
    kh == 1 && kw == 1 && stride == 1 && pad == Padding::NONE
}

/// Splits the input channels into groups whose unrolled columns fit the
/// budget.
fn channel_groups(ci: usize, taps: usize, hw: usize, pointwise: bool) -> Vec<Range<usize>> {
    let step = if pointwise {
        ci
    } else {
        (COLUMN_BUDGET / (taps * hw).max(1)).clamp(1, ci)
    };
    (0..ci).step_by(step).map(|a| a..(a + step).min(ci)).collect()
}

/// Columns for channels `chans` of sample `n`: the input planes themselves
/// for 1x1 kernels.
#[allow(clippy::too_many_arguments)]
fn columns<'a>(x: &'a Tensor4, kh: usize, kw: usize, n: usize, chans: Range<usize>, stride: usize, pad: Padding, oh: usize, ow: usize, pointwise: bool, buf: &'a mut Vec<f64>) -> &'a [f64] {
    if pointwise {
        let off = x.plane_offset(n, chans.start);
        &x.data()[off..off + chans.len() * oh * ow]
    } else {
        im2col(x, n, chans, kh, kw, stride, pad, oh, ow, buf);
        buf
    }
}

pub fn conv2d_forward(x: &Tensor4, w: &Tensor4, b: Option<&[f64]>, stride: usize, pad: Padding) -> Result<Tensor4> {
    let out_shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad)?;
    let [batch, ci, _, _] = x.shape();
    let [co, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = out_shape;
    if let Some(b) = b {
        if b.len() != co {
            return Err(Error::ShapeMismatch(format!("bias has {} entries, expected {co}", b.len())));
        }
    }
    let taps = kh * kw;
    let hw = oh * ow;
    let pointwise = is_pointwise(w, stride, pad);
    let groups = channel_groups(ci, taps, hw, pointwise);
    let wmat = ArrayView2::from_shape((co, ci * taps), w.data()).expect("kernel layout");
    let mut out = Tensor4::zeros(out_shape);
    if co <= DIRECT_MAX_OUT {
        if let Some(b) = b {
            for n in 0..batch {
                for (oc, &bv) in b.iter().enumerate() {
                    out.plane_slice_mut(n, oc).fill(bv);
                }
            }
        }
        direct_forward(x, w, &mut out, stride, pad);
        return Ok(out);
    }
    let mut buf = Vec::new();
    for n in 0..batch {
        let off = out.plane_offset(n, 0);
        let dst = &mut out.data_mut()[off..off + co * hw];
        if let Some(b) = b {
            for (oc, chunk) in dst.chunks_mut(hw).enumerate() {
                chunk.fill(b[oc]);
            }
        }
        let mut omat = ArrayViewMut2::from_shape((co, hw), dst).expect("output layout");
        for chans in &groups {
            let cols = columns(x, kh, kw, n, chans.clone(), stride, pad, oh, ow, pointwise, &mut buf);
            let cmat = ArrayView2::from_shape((chans.len() * taps, hw), cols).expect("column layout");
            let wpart = wmat.slice(s![.., chans.start * taps..chans.end * taps]);
            general_mat_mul(1.0, &wpart, &cmat, 1.0, &mut omat);
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, kernel and bias.
pub fn conv2d_backward(x: &Tensor4, w: &Tensor4, grad_out: &Tensor4, stride: usize, pad: Padding) -> Result<ConvGrads> {
    conv2d_backward_select(x, w, grad_out, stride, pad, true, true)
}

/// Like [`conv2d_backward`], skipping the input or kernel gradient when not
/// needed.
pub fn conv2d_backward_select(
    x: &Tensor4,
    w: &Tensor4,
    grad_out: &Tensor4,
    stride: usize,
    pad: Padding,
    need_x: bool,
    need_w: bool,
) -> Result<ConvGrads> {
    let out_shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad)?;
    if grad_out.shape() != out_shape {
        return Err(Error::ShapeMismatch(format!(
            "gradient shape {:?} does not match output {:?}",
            grad_out.shape(),
            out_shape
        )));
    }
    let [batch, ci, _, _] = x.shape();
    let [co, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = out_shape;
    let taps = kh * kw;
    let hw = oh * ow;
    let pointwise = is_pointwise(w, stride, pad);
    let groups = channel_groups(ci, taps, hw, pointwise);
    let mut gx = need_x.then(|| Tensor4::zeros(x.shape()));
    let mut gw = need_w.then(|| Tensor4::zeros(w.shape()));
    let mut gb = vec![0.0; co];
    if co <= DIRECT_MAX_OUT {
        for n in 0..batch {
            for (oc, b) in gb.iter_mut().enumerate() {
                *b += grad_out.plane_slice(n, oc).iter().sum::<f64>();
            }
        }
        direct_backward(x, w, grad_out, stride, pad, gx.as_mut(), gw.as_mut());
        return Ok(ConvGrads {
            grad_x: gx,
            grad_w: gw,
            grad_b: gb,
        });
    }
    let wmat = ArrayView2::from_shape((co, ci * taps), w.data()).expect("kernel layout");
    let mut buf = Vec::new();
    let mut gcols = Vec::new();

    for n in 0..batch {
        let goff = grad_out.plane_offset(n, 0);
        let g = &grad_out.data()[goff..goff + co * hw];
        for (oc, chunk) in g.chunks(hw).enumerate() {
            gb[oc] += chunk.iter().sum::<f64>();
        }
        let gmat = ArrayView2::from_shape((co, hw), g).expect("gradient layout");
        for chans in &groups {
            let rows = chans.len() * taps;
            let wcols = chans.start * taps..chans.end * taps;
            if let Some(gw) = gw.as_mut() {
                let cols = columns(x, kh, kw, n, chans.clone(), stride, pad, oh, ow, pointwise, &mut buf);
                let cmat = ArrayView2::from_shape((rows, hw), cols).expect("column layout");
                let mut gwmat = ArrayViewMut2::from_shape((co, ci * taps), gw.data_mut()).expect("kernel layout");
                let mut gwpart = gwmat.slice_mut(s![.., wcols.clone()]);
                general_mat_mul(1.0, &gmat, &cmat.t(), 1.0, &mut gwpart);
            }
            if let Some(gx) = gx.as_mut() {
                let wpart = wmat.slice(s![.., wcols]);
                if pointwise {
                    let off = gx.plane_offset(n, chans.start);
                    let dst = &mut gx.data_mut()[off..off + rows * hw];
                    let mut dmat = ArrayViewMut2::from_shape((rows, hw), dst).expect("input layout");
                    general_mat_mul(1.0, &wpart.t(), &gmat, 0.0, &mut dmat);
                } else {
                    gcols.clear();
                    gcols.resize(rows * hw, 0.0);
                    let mut cmat = ArrayViewMut2::from_shape((rows, hw), gcols.as_mut_slice()).expect("column layout");
                    general_mat_mul(1.0, &wpart.t(), &gmat, 0.0, &mut cmat);
                    col2im(&gcols, gx, n, chans.clone(), kh, kw, stride, pad, oh, ow);
                }
            }
        }
    }
    Ok(ConvGrads {
        grad_x: gx,
        grad_w: gw,
        grad_b: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        let n = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Straightforward six-loop reference.
    fn reference(x: &Tensor4, w: &Tensor4, b: &[f64], stride: usize, pad: Padding) -> Tensor4 {
        let shape = conv2d_output_shape(x.shape(), w.shape(), stride, pad).unwrap();
        let [_, ci, h, wd] = x.shape();
        let [_, _, kh, kw] = w.shape();
        let mut out = Tensor4::zeros(shape);
        for n in 0..shape[0] {
            for oc in 0..shape[1] {
                for oy in 0..shape[2] {
                    for ox in 0..shape[3] {
                        let mut acc = b[oc];
                        for ic in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad.top as isize;
                                    let ix = (ox * stride + kx) as isize - pad.left as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += w.get([oc, ic, ky, kx]) * x.get([n, ic, iy as usize, ix as usize]);
                                    }
                                }
                            }
                        }
                        out.set([n, oc, oy, ox], acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random([2, 1, 5, 6], &mut rng);
        let one = Tensor4::full([1, 1, 1, 1], 1.0);
        assert_eq!(conv2d_forward(&x, &one, None, 1, Padding::NONE).unwrap(), x);
        let mut delta = Tensor4::zeros([1, 1, 3, 3]);
        delta.set([0, 0, 1, 1], 1.0);
        assert_eq!(conv2d_forward(&x, &delta, None, 1, Padding::same(3)).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums() {
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor4::full([1, 1, 2, 2], 1.0);
        let y = conv2d_forward(&x, &w, None, 1, Padding::NONE).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.data()[0], 10.0);
    }

    #[test]
    fn matches_reference_for_strides_and_paddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cases = [
            (1, Padding::same(3), 3),
            (2, Padding::uniform(1), 3),
            (1, Padding::same(8), 8),
            (
                1,
                Padding {
                    top: 4,
                    left: 4,
                    bottom: 3,
                    right: 3,
                },
                8,
            ),
            (3, Padding { top: 0, left: 2, bottom: 1, right: 0 }, 2),
            (1, Padding::NONE, 1),
        ];
        for (stride, pad, k) in cases {
            for co in [1, 2, 4] {
                let x = random([2, 3, 11, 9], &mut rng);
                let w = random([co, 3, k, k], &mut rng);
                let b: Vec<f64> = (0..co).map(|_| rng.gen()).collect();
                let got = conv2d_forward(&x, &w, Some(&b), stride, pad).unwrap();
                let want = reference(&x, &w, &b, stride, pad);
                assert_eq!(got.shape(), want.shape());
                for (a, b) in got.data().iter().zip(want.data()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn channel_groups_match_reference() {
        // 20 channels of 8x8 taps over 40x40 exceed one column block.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random([1, 20, 40, 40], &mut rng);
        let w = random([3, 20, 8, 8], &mut rng);
        assert!(channel_groups(20, 64, 1600, false).len() > 1);
        let got = conv2d_forward(&x, &w, None, 1, Padding::same(8)).unwrap();
        let want = reference(&x, &w, &[0.0; 3], 1, Padding::same(8));
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <conv(x), g> must equal <x, grad_x> and <w, grad_w> (linearity).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases = [
            (1, Padding::same(3), 3, 3),
            (2, Padding::uniform(1), 3, 3),
            (1, Padding::same(3), 3, 1),
            (2, Padding::uniform(1), 3, 2),
            (1, Padding::NONE, 1, 3),
            (1, Padding::NONE, 1, 1),
        ];
        for (stride, pad, k, co) in cases {
            let x = random([2, 2, 8, 7], &mut rng);
            let w = random([co, 2, k, k], &mut rng);
            let y = conv2d_forward(&x, &w, None, stride, pad).unwrap();
            let g = random(y.shape(), &mut rng);
            let grads = conv2d_backward(&x, &w, &g, stride, pad).unwrap();
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let gx = grads.grad_x.unwrap();
            let gw = grads.grad_w.unwrap();
            let rx: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            let rw: f64 = w.data().iter().zip(gw.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rx).abs() < 1e-10);
            assert!((lhs - rw).abs() < 1e-10);
            assert!((grads.grad_b.iter().sum::<f64>() - g.sum()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random([1, 2, 5, 5], &mut rng);
        let w = random([2, 2, 3, 3], &mut rng);
        let g = Tensor4::zeros([1, 2, 5, 5]);
        let grads = conv2d_backward(&x, &w, &g, 1, Padding::same(3)).unwrap();
        assert_eq!(grads.grad_x.unwrap().max_abs(), 0.0);
        assert_eq!(grads.grad_w.unwrap().max_abs(), 0.0);
        assert!(grads.grad_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let x = Tensor4::zeros([1, 2, 4, 4]);
        let w = Tensor4::zeros([1, 3, 3, 3]);
        assert!(conv2d_forward(&x, &w, None, 1, Padding::NONE).is_err());
        let w = Tensor4::zeros([1, 2, 5, 5]);
        assert!(conv2d_forward(&x, &w, None, 1, Padding::NONE).is_err());
        assert!(conv2d_forward(&x, &Tensor4::zeros([1, 2, 1, 1]), None, 0, Padding::NONE).is_err());
    }
}
