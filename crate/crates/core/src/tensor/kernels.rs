//! Raw 3D convolution kernels over flat `f64` slices.
//!
//! Three routines cover forward and backward of both convolution flavors:
//!
//! * [`conv_forward`] — strided cross-correlation (no kernel flip).
//! * [`conv_input_grad`] — the adjoint: scatters output-space values back to
//!   input space, written as a gather so every element is a private
//!   reduction. This is also the forward pass of the transposed convolution.
//! * [`conv_weight_grad`] — accumulates the weight gradient.
//!
//! All routines take a [`ConvGeom`] describing one convolution; the
//! transposed convolution reuses them with input/output roles swapped.

use crate::parallel;
use rayon::prelude::*;

/// Geometry of a single convolution: shapes, kernel, stride, padding.
///
/// Weight layout is `[co][ci][k0][k1][k2]`, activations `[n][c][d0][d1][d2]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub co: usize,
    pub di: [usize; 3],
    pub dout: [usize; 3],
    pub k: [usize; 3],
    pub s: [usize; 3],
    pub p: [usize; 3],
}

impl ConvGeom {
    pub fn in_spatial(&self) -> usize {
        self.di[0] * self.di[1] * self.di[2]
    }
    pub fn out_spatial(&self) -> usize {
        self.dout[0] * self.dout[1] * self.dout[2]
    }
    pub fn kernel_len(&self) -> usize {
        self.k[0] * self.k[1] * self.k[2]
    }
}

/// Output extent of a strided convolution along one axis, if the kernel fits.
pub(crate) fn conv_out_dim(d: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let ext = d + 2 * p;
    if ext < k {
        None
    } else {
        Some((ext - k) / s + 1)
    }
}

/// Output extent of a transposed convolution along one axis.
pub(crate) fn conv_transpose_out_dim(d: usize, k: usize, s: usize, p: usize, op: usize) -> usize {
    (d - 1) * s + k + op - 2 * p
}

/// Valid kernel-tap range `[lo, hi)` for output coordinate `o`:
/// taps where `o*s - p + t` lands inside `[0, d)`.
#[inline]
fn tap_range(o: usize, d: usize, k: usize, s: usize, p: usize) -> (usize, usize, isize) {
    let start = o as isize * s as isize - p as isize;
    let lo = (-start).max(0) as usize;
    let hi = (d as isize - start).clamp(0, k as isize) as usize;
    (lo, hi, start)
}

fn for_each_plane(out: &mut [f64], plane_len: usize, work: impl Fn(usize, &mut [f64]) + Sync) {
    if parallel::enabled() {
        parallel::install(|| {
            out.par_chunks_mut(plane_len)
                .enumerate()
                .for_each(|(i, buf)| work(i, buf));
        });
    } else {
        for (i, buf) in out.chunks_mut(plane_len).enumerate() {
            work(i, buf);
        }
    }
}

/// Strided cross-correlation. Returns `[n][co][dout]`.
pub(crate) fn conv_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let spatial = g.out_spatial();
    let mut out = vec![0.0; g.n * g.co * spatial];
    for_each_plane(&mut out, spatial, |plane, buf| {
        conv_forward_plane(x, w, bias, g, plane / g.co, plane % g.co, buf);
    });
    out
}

fn conv_forward_plane(
    x: &[f64],
    w: &[f64],
    bias: Option<&[f64]>,
    g: &ConvGeom,
    b: usize,
    oc: usize,
    buf: &mut [f64],
) {
    let [di0, di1, di2] = g.di;
    let [do0, do1, do2] = g.dout;
    let [k0, k1, k2] = g.k;
    let in_spatial = g.in_spatial();
    let x_batch = &x[b * g.ci * in_spatial..][..g.ci * in_spatial];
    let w_oc = &w[oc * g.ci * g.kernel_len()..][..g.ci * g.kernel_len()];
    let bias_v = bias.map_or(0.0, |bb| bb[oc]);

    let mut idx = 0;
    for od in 0..do0 {
        let (kd_lo, kd_hi, id_start) = tap_range(od, di0, k0, g.s[0], g.p[0]);
        for oh in 0..do1 {
            let (kh_lo, kh_hi, ih_start) = tap_range(oh, di1, k1, g.s[1], g.p[1]);
            for ow in 0..do2 {
                let (kw_lo, kw_hi, iw_start) = tap_range(ow, di2, k2, g.s[2], g.p[2]);
                let mut acc = bias_v;
                for ic in 0..g.ci {
                    for kd in kd_lo..kd_hi {
                        let id = (id_start + kd as isize) as usize;
                        for kh in kh_lo..kh_hi {
                            let ih = (ih_start + kh as isize) as usize;
                            let x_row = &x_batch[((ic * di0 + id) * di1 + ih) * di2..][..di2];
                            let w_row = &w_oc[((ic * k0 + kd) * k1 + kh) * k2..][..k2];
                            for kw in kw_lo..kw_hi {
                                let iw = (iw_start + kw as isize) as usize;
                                acc += x_row[iw] * w_row[kw];
                            }
                        }
                    }
                }
                buf[idx] = acc;
                idx += 1;
            }
        }
    }
}

/// Taps `(t, o)` along one axis such that `o*s - p + t == i`, for each `i`.
fn adjoint_taps(di: usize, dout: usize, k: usize, s: usize, p: usize) -> Vec<Vec<(usize, usize)>> {
    let mut taps = vec![Vec::new(); di];
    for (i, row) in taps.iter_mut().enumerate() {
        for t in 0..k {
            let num = i as isize + p as isize - t as isize;
            if num >= 0 && num % s as isize == 0 {
                let o = (num / s as isize) as usize;
                if o < dout {
                    row.push((t, o));
                }
            }
        }
    }
    taps
}

/// Adjoint of [`conv_forward`] with respect to its input: maps an
/// output-space field `gout` (`[n][co][dout]`) back to input space
/// (`[n][ci][di]`). Also the forward pass of the transposed convolution.
pub(crate) fn conv_input_grad(gout: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let spatial = g.in_spatial();
    let mut out = vec![0.0; g.n * g.ci * spatial];
    let taps0 = adjoint_taps(g.di[0], g.dout[0], g.k[0], g.s[0], g.p[0]);
    let taps1 = adjoint_taps(g.di[1], g.dout[1], g.k[1], g.s[1], g.p[1]);
    let taps2 = adjoint_taps(g.di[2], g.dout[2], g.k[2], g.s[2], g.p[2]);

    let [_, do1, do2] = g.dout;
    let [_, k1, k2] = g.k;
    let out_spatial = g.out_spatial();
    let klen = g.kernel_len();

    for_each_plane(&mut out, spatial, |plane, buf| {
        let b = plane / g.ci;
        let ic = plane % g.ci;
        let g_batch = &gout[b * g.co * out_spatial..][..g.co * out_spatial];
        let mut idx = 0;
        for taps_d in &taps0 {
            for taps_h in &taps1 {
                for taps_w in &taps2 {
                    let mut acc = 0.0;
                    for oc in 0..g.co {
                        let g_ch = &g_batch[oc * out_spatial..][..out_spatial];
                        let w_ch = &w[(oc * g.ci + ic) * klen..][..klen];
                        for &(kd, od) in taps_d {
                            for &(kh, oh) in taps_h {
                                for &(kw, ow) in taps_w {
                                    acc += g_ch[(od * do1 + oh) * do2 + ow]
                                        * w_ch[(kd * k1 + kh) * k2 + kw];
                                }
                            }
                        }
                    }
                    buf[idx] = acc;
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, spatial);
    });
    out
}

/// Weight gradient: `gw[oc][ic][k] = sum over batch and output positions of
/// gout * x` at the matching input offsets. Parallel over `oc`; accumulation
/// order per element is fixed, so results do not depend on thread count.
pub(crate) fn conv_weight_grad(x: &[f64], gout: &[f64], g: &ConvGeom) -> Vec<f64> {
    let klen = g.kernel_len();
    let per_oc = g.ci * klen;
    let mut gw = vec![0.0; g.co * per_oc];
    let [di0, di1, di2] = g.di;
    let [do0, do1, do2] = g.dout;
    let [k0, k1, k2] = g.k;
    let in_spatial = g.in_spatial();
    let out_spatial = g.out_spatial();

    for_each_plane(&mut gw, per_oc, |oc, buf| {
        for b in 0..g.n {
            let x_batch = &x[b * g.ci * in_spatial..][..g.ci * in_spatial];
            let g_ch = &gout[(b * g.co + oc) * out_spatial..][..out_spatial];
            let mut oidx = 0;
            for od in 0..do0 {
                let (kd_lo, kd_hi, id_start) = tap_range(od, di0, k0, g.s[0], g.p[0]);
                for oh in 0..do1 {
                    let (kh_lo, kh_hi, ih_start) = tap_range(oh, di1, k1, g.s[1], g.p[1]);
                    for ow in 0..do2 {
                        let (kw_lo, kw_hi, iw_start) = tap_range(ow, di2, k2, g.s[2], g.p[2]);
                        let gv = g_ch[oidx];
                        oidx += 1;
                        for ic in 0..g.ci {
                            for kd in kd_lo..kd_hi {
                                let id = (id_start + kd as isize) as usize;
                                for kh in kh_lo..kh_hi {
                                    let ih = (ih_start + kh as isize) as usize;
                                    let x_row =
                                        &x_batch[((ic * di0 + id) * di1 + ih) * di2..][..di2];
                                    let w_row =
                                        &mut buf[((ic * k0 + kd) * k1 + kh) * k2..][..k2];
                                    for kw in kw_lo..kw_hi {
                                        let iw = (iw_start + kw as isize) as usize;
                                        w_row[kw] += gv * x_row[iw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gw
}

/// Per-channel sum over batch and spatial positions (bias gradient).
pub(crate) fn channel_sum(v: &[f64], n: usize, c: usize, spatial: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for b in 0..n {
        for (ch, acc) in out.iter_mut().enumerate() {
            let base = (b * c + ch) * spatial;
            for &val in &v[base..base + spatial] {
                *acc += val;
            }
        }
    }
    out
}
