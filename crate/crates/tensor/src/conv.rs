//! Strided 2-D convolution (cross-correlation, no kernel flip) and its
//! adjoint, the transposed convolution.
//!
//! Layouts: activations are `[N, C, H, W]`; a convolution kernel is
//! `[C_out, C_in, kh, kw]`. A transposed convolution reuses the kernel of the
//! convolution it is the adjoint of, so its kernel is `[C_in_t, C_out_t, kh, kw]`.

use crate::error::{Result, TensorError};
use crate::tape::{Op, Var};

/// Shape bookkeeping for one forward convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn input_len(&self) -> usize {
        self.batch * self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_channels * self.out_h * self.out_w
    }

    pub fn kernel_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }
}

/// Output extent of a convolution along one axis, or `None` if the kernel
/// does not fit the padded input.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output extent of a transposed convolution along one axis.
pub fn conv_transpose_out_len(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    let full = (input.checked_sub(1)?) * stride + kernel + output_padding;
    full.checked_sub(2 * padding).filter(|&n| n > 0)
}

fn expect_rank4(op: &'static str, what: &str, shape: &[usize]) -> Result<()> {
    if shape.len() != 4 {
        return Err(TensorError::dim(
            op,
            format!("{what} must have 4 axes [N, C, H, W], got {shape:?}"),
        ));
    }
    Ok(())
}

/// `[N, C_in, H, W] ⋆ [C_out, C_in, kh, kw] -> [N, C_out, H', W']` with
/// `H' = floor((H + 2·padding − kh) / stride) + 1`.
pub fn conv2d<'t>(input: Var<'t>, kernel: Var<'t>, stride: usize, padding: usize) -> Result<Var<'t>> {
    const OP: &str = "conv2d";
    if !input.same_tape(&kernel) {
        return Err(TensorError::invalid(OP, "operands live on different tapes"));
    }
    let xs = input.shape();
    let ks = kernel.shape();
    expect_rank4(OP, "input", &xs)?;
    expect_rank4(OP, "kernel", &ks)?;
    if stride == 0 {
        return Err(TensorError::invalid(OP, "stride must be at least 1"));
    }
    if xs[1] != ks[1] {
        return Err(TensorError::dim(
            OP,
            format!(
                "input channels (input axis 1) = {} but kernel expects {} (kernel axis 1)",
                xs[1], ks[1]
            ),
        ));
    }
    let out_h = conv_out_len(xs[2], ks[2], stride, padding).ok_or_else(|| {
        TensorError::dim(
            OP,
            format!(
                "kernel height (kernel axis 2) = {} exceeds padded input height (input axis 2) = {}",
                ks[2],
                xs[2] + 2 * padding
            ),
        )
    })?;
    let out_w = conv_out_len(xs[3], ks[3], stride, padding).ok_or_else(|| {
        TensorError::dim(
            OP,
            format!(
                "kernel width (kernel axis 3) = {} exceeds padded input width (input axis 3) = {}",
                ks[3],
                xs[3] + 2 * padding
            ),
        )
    })?;
    let geom = ConvGeometry {
        batch: xs[0],
        in_channels: xs[1],
        in_h: xs[2],
        in_w: xs[3],
        out_channels: ks[0],
        kernel_h: ks[2],
        kernel_w: ks[3],
        stride,
        padding,
        out_h,
        out_w,
    };
    let value = forward(&input.value(), &kernel.value(), &geom);
    let requires_grad = input.requires_grad() || kernel.requires_grad();
    Ok(input.tape().push(
        vec![geom.batch, geom.out_channels, out_h, out_w],
        value,
        Op::Conv2d {
            input: input.id(),
            kernel: kernel.id(),
            geom,
        },
        requires_grad,
    ))
}

/// Adjoint of [`conv2d`] with the same kernel, stride and padding.
///
/// `[N, C_in_t, H, W]` with kernel `[C_in_t, C_out_t, kh, kw]` gives
/// `[N, C_out_t, (H−1)·stride − 2·padding + kh + output_padding, …]`.
pub fn conv2d_transpose<'t>(
    input: Var<'t>,
    kernel: Var<'t>,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Var<'t>> {
    const OP: &str = "conv2d_transpose";
    if !input.same_tape(&kernel) {
        return Err(TensorError::invalid(OP, "operands live on different tapes"));
    }
    let xs = input.shape();
    let ks = kernel.shape();
    expect_rank4(OP, "input", &xs)?;
    expect_rank4(OP, "kernel", &ks)?;
    if stride == 0 {
        return Err(TensorError::invalid(OP, "stride must be at least 1"));
    }
    if output_padding >= stride {
        return Err(TensorError::invalid(
            OP,
            format!("output_padding {output_padding} must be smaller than stride {stride}"),
        ));
    }
    if xs[1] != ks[0] {
        return Err(TensorError::dim(
            OP,
            format!(
                "input channels (input axis 1) = {} but kernel expects {} (kernel axis 0)",
                xs[1], ks[0]
            ),
        ));
    }
    let out_h = conv_transpose_out_len(xs[2], ks[2], stride, padding, output_padding)
        .ok_or_else(|| TensorError::dim(OP, format!("non-positive output height (axis 2) for input {xs:?}")))?;
    let out_w = conv_transpose_out_len(xs[3], ks[3], stride, padding, output_padding)
        .ok_or_else(|| TensorError::dim(OP, format!("non-positive output width (axis 3) for input {xs:?}")))?;
    // The forward convolution this op is the adjoint of.
    let geom = ConvGeometry {
        batch: xs[0],
        in_channels: ks[1],
        in_h: out_h,
        in_w: out_w,
        out_channels: ks[0],
        kernel_h: ks[2],
        kernel_w: ks[3],
        stride,
        padding,
        out_h: xs[2],
        out_w: xs[3],
    };
    debug_assert_eq!(conv_out_len(out_h, ks[2], stride, padding), Some(xs[2]));
    let value = backward_input(&input.value(), &kernel.value(), &geom);
    let requires_grad = input.requires_grad() || kernel.requires_grad();
    Ok(input.tape().push(
        vec![geom.batch, geom.in_channels, out_h, out_w],
        value,
        Op::ConvTranspose2d {
            input: input.id(),
            kernel: kernel.id(),
            geom,
        },
        requires_grad,
    ))
}

/// Output positions `o` in `[lo, hi)` for which `o·stride + k − padding`
/// indexes inside an axis of length `len_in`.
fn valid_range(k: usize, padding: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let d = k as isize - padding as isize;
    let s = stride as isize;
    let lo = if d >= 0 { 0 } else { (-d + s - 1) / s };
    let last = len_in as isize - 1 - d;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last / s + 1).min(len_out as isize);
    if lo >= hi {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// Unfolds one image `[C_in, H, W]` into a `[C_in·kh·kw, H'·W']` patch
/// matrix; out-of-bounds taps are zero.
fn im2col(x: &[f64], g: &ConvGeometry, col: &mut [f64]) {
    let (s, p) = (g.stride, g.padding);
    let positions = g.out_h * g.out_w;
    col.fill(0.0);
    for ci in 0..g.in_channels {
        let plane = &x[ci * g.in_h * g.in_w..(ci + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel_h {
            let (oy_lo, oy_hi) = valid_range(ky, p, s, g.in_h, g.out_h);
            for kx in 0..g.kernel_w {
                let (ox_lo, ox_hi) = valid_range(kx, p, s, g.in_w, g.out_w);
                let r = (ci * g.kernel_h + ky) * g.kernel_w + kx;
                let row = &mut col[r * positions..(r + 1) * positions];
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let src = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let dst = &mut row[oy * g.out_w..(oy + 1) * g.out_w];
                    for ox in ox_lo..ox_hi {
                        dst[ox] = src[ox * s + kx - p];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto one image.
fn col2im(col: &[f64], g: &ConvGeometry, x: &mut [f64]) {
    let (s, p) = (g.stride, g.padding);
    let positions = g.out_h * g.out_w;
    for ci in 0..g.in_channels {
        let plane = &mut x[ci * g.in_h * g.in_w..(ci + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel_h {
            let (oy_lo, oy_hi) = valid_range(ky, p, s, g.in_h, g.out_h);
            for kx in 0..g.kernel_w {
                let (ox_lo, ox_hi) = valid_range(kx, p, s, g.in_w, g.out_w);
                let r = (ci * g.kernel_h + ky) * g.kernel_w + kx;
                let row = &col[r * positions..(r + 1) * positions];
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let dst = &mut plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let src = &row[oy * g.out_w..(oy + 1) * g.out_w];
                    for ox in ox_lo..ox_hi {
                        dst[ox * s + kx - p] += src[ox];
                    }
                }
            }
        }
    }
}

/// `c = alpha·op(a)·op(b) + beta·c` on row-major buffers, where `op`
/// optionally transposes.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the debug-asserted lengths cover every index the strides reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn patch_rows(g: &ConvGeometry) -> usize {
    g.in_channels * g.kernel_h * g.kernel_w
}

pub(crate) fn forward(x: &[f64], k: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let rows = patch_rows(g);
    let positions = g.out_h * g.out_w;
    let in_len = g.in_channels * g.in_h * g.in_w;
    let out_len = g.out_channels * positions;
    let mut out = vec![0.0; g.output_len()];
    let mut col = vec![0.0; rows * positions];
    for n in 0..g.batch {
        im2col(&x[n * in_len..(n + 1) * in_len], g, &mut col);
        gemm(
            g.out_channels,
            rows,
            positions,
            k,
            false,
            &col,
            false,
            0.0,
            &mut out[n * out_len..(n + 1) * out_len],
        );
    }
    out
}

/// Gradient of [`forward`] with respect to its input; also the forward pass
/// of the transposed convolution.
pub(crate) fn backward_input(gout: &[f64], k: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let rows = patch_rows(g);
    let positions = g.out_h * g.out_w;
    let in_len = g.in_channels * g.in_h * g.in_w;
    let out_len = g.out_channels * positions;
    let mut gin = vec![0.0; g.input_len()];
    let mut col = vec![0.0; rows * positions];
    for n in 0..g.batch {
        gemm(
            rows,
            g.out_channels,
            positions,
            k,
            true,
            &gout[n * out_len..(n + 1) * out_len],
            false,
            0.0,
            &mut col,
        );
        col2im(&col, g, &mut gin[n * in_len..(n + 1) * in_len]);
    }
    gin
}

pub(crate) fn backward_kernel(x: &[f64], gout: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let rows = patch_rows(g);
    let positions = g.out_h * g.out_w;
    let in_len = g.in_channels * g.in_h * g.in_w;
    let out_len = g.out_channels * positions;
    let mut gk = vec![0.0; g.kernel_len()];
    let mut col = vec![0.0; rows * positions];
    for n in 0..g.batch {
        im2col(&x[n * in_len..(n + 1) * in_len], g, &mut col);
        gemm(
            g.out_channels,
            positions,
            rows,
            &gout[n * out_len..(n + 1) * out_len],
            false,
            &col,
            true,
            1.0,
            &mut gk,
        );
    }
    gk
}
