//! Convolution, transposed convolution and dense layers via im2col + GEMM.
//!
//! Padding is always `k / 2` on every side, so a stride-1 convolution keeps
//! the spatial size and a stride-2 convolution produces `ceil(H / 2)`.
//! Batches are processed one sample at a time in index order; the reduction
//! order of every accumulated gradient is therefore fixed.

use super::gemm::{gemm, MatRef};
use super::Var;
use crate::error::{Result, TcnnError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    in_h: usize,
    in_w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(channels: usize, in_h: usize, in_w: usize, k: usize, stride: usize) -> Self {
        Geometry {
            channels,
            in_h,
            in_w,
            k,
            stride,
            pad: k / 2,
            out_h: in_h.div_ceil(stride),
            out_w: in_w.div_ceil(stride),
        }
    }

    fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Output columns `ow` whose tap `kj` lands inside the input row.
    fn valid_ow(&self, kj: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if kj >= p { 0 } else { (p - kj).div_ceil(s) };
        // iw = ow*s + kj - p < in_w  <=>  ow*s < in_w + p - kj
        let limit = (self.in_w + p).saturating_sub(kj);
        let hi = limit.div_ceil(s).min(self.out_w);
        (lo.min(hi), hi)
    }
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let plane = g.col_cols();
    for c in 0..g.channels {
        let src = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = g.valid_ow(kj);
                for oh in 0..g.out_h {
                    let line = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih as usize >= g.in_h {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &src[ih as usize * g.in_w..(ih as usize + 1) * g.in_w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    if g.stride == 1 {
                        let start = lo + kj - g.pad;
                        line[lo..hi].copy_from_slice(&src_row[start..start + (hi - lo)]);
                    } else {
                        for ow in lo..hi {
                            line[ow] = src_row[ow * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlaps.
fn col2im(cols: &[f64], g: &Geometry, x: &mut [f64]) {
    x.fill(0.0);
    let plane = g.col_cols();
    for c in 0..g.channels {
        let dst = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = g.valid_ow(kj);
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih as usize >= g.in_h {
                        continue;
                    }
                    let line = &src[oh * g.out_w..(oh + 1) * g.out_w];
                    let dst_row = &mut dst[ih as usize * g.in_w..(ih as usize + 1) * g.in_w];
                    for ow in lo..hi {
                        dst_row[ow * g.stride + kj - g.pad] += line[ow];
                    }
                }
            }
        }
    }
}

fn check_kernel(weight: &Tensor, stride: usize) -> Result<(usize, usize, usize)> {
    let (a, b, kh, kw) = weight.dims4()?;
    if kh != kw || kh % 2 == 0 {
        return Err(TcnnError::invalid(format!(
            "kernel must be square with odd size, got {kh}x{kw}"
        )));
    }
    if stride != 1 && stride != 2 {
        return Err(TcnnError::invalid(format!("stride must be 1 or 2, got {stride}")));
    }
    Ok((a, b, kh))
}

fn check_bias(bias: &Tensor, len: usize) -> Result<()> {
    if bias.shape() != [len] {
        return Err(TcnnError::invalid(format!(
            "bias shape {:?} does not match {len} outputs",
            bias.shape()
        )));
    }
    Ok(())
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums(g: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    let mut db = vec![0.0; channels];
    for (i, chunk) in g.chunks(plane).enumerate() {
        db[i % channels] += chunk.iter().sum::<f64>();
    }
    db
}

/// 2-D convolution of `[N, C, H, W]` input with `[F, C, k, k]` weights.
pub fn conv2d(input: &Var, weight: &Var, bias: &Var, stride: usize) -> Result<Var> {
    let (n, c, h, w) = input.value().dims4()?;
    let (f, wc, k) = check_kernel(weight.value(), stride)?;
    if wc != c {
        return Err(TcnnError::invalid(format!(
            "conv2d: input has {c} channels, weight expects {wc}"
        )));
    }
    check_bias(bias.value(), f)?;
    let geo = Geometry::new(c, h, w, k, stride);
    let (rows, plane) = (geo.col_rows(), geo.col_cols());
    let in_len = c * h * w;

    let x = input.value().data();
    let wm = MatRef::row_major(weight.value().data(), f, rows);
    let mut out = vec![0.0; n * f * plane];
    let mut cols = vec![0.0; rows * plane];
    for b in 0..n {
        im2col(&x[b * in_len..(b + 1) * in_len], &geo, &mut cols);
        gemm(
            1.0,
            wm,
            MatRef::row_major(&cols, rows, plane),
            0.0,
            &mut out[b * f * plane..(b + 1) * f * plane],
        );
    }
    add_channel_bias(&mut out, bias.value().data(), plane);
    let value = Tensor::new(vec![n, f, geo.out_h, geo.out_w], out)?;

    Ok(Var::from_op(
        value,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |g, ps, _| {
            let x = ps[0].value().data();
            let wdata = ps[1].value().data();
            let wm = MatRef::row_major(wdata, f, rows);
            let mut dx = ps[0].requires_grad().then(|| vec![0.0; n * in_len]);
            let mut dw = ps[1].requires_grad().then(|| vec![0.0; f * rows]);
            let mut cols = vec![0.0; rows * plane];
            for b in 0..n {
                let gb = MatRef::row_major(&g[b * f * plane..(b + 1) * f * plane], f, plane);
                if let Some(dw) = dw.as_mut() {
                    im2col(&x[b * in_len..(b + 1) * in_len], &geo, &mut cols);
                    gemm(1.0, gb, MatRef::row_major(&cols, rows, plane).t(), 1.0, dw);
                }
                if let Some(dx) = dx.as_mut() {
                    gemm(1.0, wm.t(), gb, 0.0, &mut cols);
                    col2im(&cols, &geo, &mut dx[b * in_len..(b + 1) * in_len]);
                }
            }
            let db = ps[2].requires_grad().then(|| channel_sums(g, f, plane));
            vec![dx, dw, db]
        }),
    ))
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same weight
/// tensor. Input `[N, Fin, H, W]`, weights `[Fin, Cout, k, k]`, output
/// `[N, Cout, H*stride, W*stride]`.
pub fn conv_transpose2d(input: &Var, weight: &Var, bias: &Var, stride: usize) -> Result<Var> {
    let (n, fin, h, w) = input.value().dims4()?;
    let (wf, cout, k) = check_kernel(weight.value(), stride)?;
    if wf != fin {
        return Err(TcnnError::invalid(format!(
            "conv_transpose2d: input has {fin} channels, weight expects {wf}"
        )));
    }
    check_bias(bias.value(), cout)?;
    let (out_h, out_w) = (h * stride, w * stride);
    // Geometry of the forward convolution this operator is the adjoint of.
    let geo = Geometry::new(cout, out_h, out_w, k, stride);
    debug_assert_eq!((geo.out_h, geo.out_w), (h, w));
    let (rows, plane) = (geo.col_rows(), geo.col_cols());
    let in_len = fin * plane;
    let out_len = cout * out_h * out_w;

    let y = input.value().data();
    let wm = MatRef::row_major(weight.value().data(), fin, rows);
    let mut out = vec![0.0; n * out_len];
    let mut cols = vec![0.0; rows * plane];
    for b in 0..n {
        gemm(
            1.0,
            wm.t(),
            MatRef::row_major(&y[b * in_len..(b + 1) * in_len], fin, plane),
            0.0,
            &mut cols,
        );
        col2im(&cols, &geo, &mut out[b * out_len..(b + 1) * out_len]);
    }
    add_channel_bias(&mut out, bias.value().data(), out_h * out_w);
    let value = Tensor::new(vec![n, cout, out_h, out_w], out)?;

    Ok(Var::from_op(
        value,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |g, ps, _| {
            let y = ps[0].value().data();
            let wm = MatRef::row_major(ps[1].value().data(), fin, rows);
            let mut dy = ps[0].requires_grad().then(|| vec![0.0; n * in_len]);
            let mut dw = ps[1].requires_grad().then(|| vec![0.0; fin * rows]);
            let mut gcols = vec![0.0; rows * plane];
            for b in 0..n {
                im2col(&g[b * out_len..(b + 1) * out_len], &geo, &mut gcols);
                let gc = MatRef::row_major(&gcols, rows, plane);
                if let Some(dy) = dy.as_mut() {
                    gemm(1.0, wm, gc, 0.0, &mut dy[b * in_len..(b + 1) * in_len]);
                }
                if let Some(dw) = dw.as_mut() {
                    let yb = MatRef::row_major(&y[b * in_len..(b + 1) * in_len], fin, plane);
                    gemm(1.0, yb, gc.t(), 1.0, dw);
                }
            }
            let db = ps[2]
                .requires_grad()
                .then(|| channel_sums(g, cout, out_h * out_w));
            vec![dy, dw, db]
        }),
    ))
}

/// Affine map `x W + b` for `[N, D]` input, `[D, M]` weights, `[M]` bias.
pub fn linear(input: &Var, weight: &Var, bias: &Var) -> Result<Var> {
    let (n, d) = match *input.shape() {
        [n, d] => (n, d),
        _ => {
            return Err(TcnnError::invalid(format!(
                "linear: input must be rank 2, got {:?}",
                input.shape()
            )))
        }
    };
    let (wd, m) = match *weight.shape() {
        [a, b] => (a, b),
        _ => {
            return Err(TcnnError::invalid(format!(
                "linear: weight must be rank 2, got {:?}",
                weight.shape()
            )))
        }
    };
    if wd != d {
        return Err(TcnnError::invalid(format!(
            "linear: input has {d} features, weight expects {wd}"
        )));
    }
    check_bias(bias.value(), m)?;

    let mut out = vec![0.0; n * m];
    for row in out.chunks_mut(m) {
        row.copy_from_slice(bias.value().data());
    }
    gemm(
        1.0,
        MatRef::row_major(input.value().data(), n, d),
        MatRef::row_major(weight.value().data(), d, m),
        1.0,
        &mut out,
    );
    let value = Tensor::new(vec![n, m], out)?;

    Ok(Var::from_op(
        value,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |g, ps, _| {
            let gm = MatRef::row_major(g, n, m);
            let dx = ps[0].requires_grad().then(|| {
                let mut dx = vec![0.0; n * d];
                gemm(1.0, gm, MatRef::row_major(ps[1].value().data(), d, m).t(), 0.0, &mut dx);
                dx
            });
            let dw = ps[1].requires_grad().then(|| {
                let mut dw = vec![0.0; d * m];
                gemm(1.0, MatRef::row_major(ps[0].value().data(), n, d).t(), gm, 0.0, &mut dw);
                dw
            });
            let db = ps[2].requires_grad().then(|| {
                let mut db = vec![0.0; m];
                for row in g.chunks(m) {
                    db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                db
            });
            vec![dx, dw, db]
        }),
    ))
}
