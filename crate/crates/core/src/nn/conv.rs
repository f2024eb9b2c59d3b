use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Tensor3;
use crate::error::{Error, Result};

/// Kernels with at least this many taps per map pair go through the FFT.
pub const FFT_MIN_TAPS: usize = 256;

/// Valid cross-correlation with bias:
/// `out[t'][v'][l'] = b[l'] + Σ W[t][v][l][l'] · X[t'+t][v'+v][l]`.
///
/// `w` is in `[t][v][l][l']` order.
pub fn conv_forward(x: &Tensor3, w: &[f64], b: &[f64], shape: [usize; 4]) -> Result<Tensor3> {
    let out = check_shapes(x.dims(), w, b, shape)?;
    if uses_fft(shape) {
        let plan = FftCorrelator::new(x.dims(), w, shape);
        Ok(plan.forward(x, b).0)
    } else {
        Ok(direct_forward(x, w, b, shape, out))
    }
}

pub(crate) fn uses_fft(shape: [usize; 4]) -> bool {
    shape[0] * shape[1] >= FFT_MIN_TAPS
}

pub(crate) fn check_shapes(dims: [usize; 3], w: &[f64], b: &[f64], shape: [usize; 4]) -> Result<[usize; 3]> {
    let [t1, v1, l, n1] = shape;
    if dims[2] != l || dims[0] < t1 || dims[1] < v1 || t1 == 0 || v1 == 0 {
        return Err(Error::Shape(format!("conv {shape:?} on input {dims:?}")));
    }
    if w.len() != t1 * v1 * l * n1 || b.len() != n1 {
        return Err(Error::Shape(format!(
            "conv {shape:?} given {} weights and {} biases",
            w.len(),
            b.len()
        )));
    }
    Ok([dims[0] - t1 + 1, dims[1] - v1 + 1, n1])
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn direct_forward(x: &Tensor3, w: &[f64], b: &[f64], shape: [usize; 4], out: [usize; 3]) -> Tensor3 {
    let [t1, v1, l_in, n1] = shape;
    let [n, m, _] = x.dims();
    let [no, mo, _] = out;
    let xp = x.to_planar();
    let mut planes = vec![vec![0.0; no * mo]; n1];
    for (lo, plane) in planes.iter_mut().enumerate() {
        plane.fill(b[lo]);
        for (li, xplane) in xp.iter().enumerate() {
            for dt in 0..t1 {
                for dv in 0..v1 {
                    let wv = w[((dt * v1 + dv) * l_in + li) * n1 + lo];
                    if wv == 0.0 {
                        continue;
                    }
                    for to in 0..no {
                        let src = &xplane[(to + dt) * m + dv..(to + dt) * m + dv + mo];
                        axpy(wv, src, &mut plane[to * mo..(to + 1) * mo]);
                    }
                }
            }
        }
    }
    let _ = n;
    Tensor3::from_planar(out, &planes)
}

/// Gradients of a convolution given the upstream gradient `dz`.
pub(crate) struct ConvGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dx: Option<Tensor3>,
}

pub(crate) fn direct_backward(x: &Tensor3, w: &[f64], shape: [usize; 4], dz: &Tensor3, need_dx: bool) -> ConvGrads {
    let [t1, v1, l_in, n1] = shape;
    let [n, m, _] = x.dims();
    let [no, mo, _] = dz.dims();
    let xp = x.to_planar();
    let dzp = dz.to_planar();
    let mut dw = vec![0.0; w.len()];
    let db: Vec<f64> = dzp.iter().map(|p| p.iter().sum()).collect();
    let mut dxp = if need_dx { vec![vec![0.0; n * m]; l_in] } else { Vec::new() };
    for (lo, gplane) in dzp.iter().enumerate() {
        for li in 0..l_in {
            for dt in 0..t1 {
                for dv in 0..v1 {
                    let wi = ((dt * v1 + dv) * l_in + li) * n1 + lo;
                    let mut acc = 0.0;
                    for to in 0..no {
                        let g = &gplane[to * mo..(to + 1) * mo];
                        let start = (to + dt) * m + dv;
                        acc += dot(g, &xp[li][start..start + mo]);
                        if need_dx && w[wi] != 0.0 {
                            axpy(w[wi], g, &mut dxp[li][start..start + mo]);
                        }
                    }
                    dw[wi] = acc;
                }
            }
        }
    }
    ConvGrads {
        dw,
        db,
        dx: need_dx.then(|| Tensor3::from_planar([n, m, l_in], &dxp)),
    }
}

fn smooth_size(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

/// Plans and kernel spectra for FFT-based correlation on one input size.
pub(crate) struct FftCorrelator {
    shape: [usize; 4],
    dims: [usize; 3],
    np: usize,
    mp: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    /// Spectrum of each zero-padded kernel plane, indexed `l * n1 + l'`.
    kernel_spec: Vec<Vec<Complex<f64>>>,
}

/// Input spectra kept from the forward pass for the backward pass.
pub(crate) struct FftCache {
    input_spec: Vec<Vec<Complex<f64>>>,
}

impl FftCorrelator {
    pub fn new(dims: [usize; 3], w: &[f64], shape: [usize; 4]) -> Self {
        let [t1, v1, l_in, n1] = shape;
        let np = smooth_size(dims[0]);
        let mp = smooth_size(dims[1]);
        let mut planner = FftPlanner::new();
        let mut me = Self {
            shape,
            dims,
            np,
            mp,
            row_fwd: planner.plan_fft_forward(mp),
            row_inv: planner.plan_fft_inverse(mp),
            col_fwd: planner.plan_fft_forward(np),
            col_inv: planner.plan_fft_inverse(np),
            kernel_spec: Vec::with_capacity(l_in * n1),
        };
        for li in 0..l_in {
            for lo in 0..n1 {
                let mut buf = vec![Complex::default(); np * mp];
                for dt in 0..t1 {
                    for dv in 0..v1 {
                        buf[dt * mp + dv].re = w[((dt * v1 + dv) * l_in + li) * n1 + lo];
                    }
                }
                me.fft2(&mut buf, false);
                me.kernel_spec.push(buf);
            }
        }
        me
    }

    fn fft2(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        let mut column = vec![Complex::default(); self.np];
        for v in 0..self.mp {
            for t in 0..self.np {
                column[t] = buf[t * self.mp + v];
            }
            col.process(&mut column);
            for t in 0..self.np {
                buf[t * self.mp + v] = column[t];
            }
        }
    }

    fn padded(&self, plane: &[f64], rows: usize, cols: usize) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::default(); self.np * self.mp];
        for t in 0..rows {
            for v in 0..cols {
                buf[t * self.mp + v].re = plane[t * cols + v];
            }
        }
        buf
    }

    pub fn forward(&self, x: &Tensor3, b: &[f64]) -> (Tensor3, FftCache) {
        let [_, _, l_in, n1] = self.shape;
        let [n, m, _] = self.dims;
        let no = n - self.shape[0] + 1;
        let mo = m - self.shape[1] + 1;
        let scale = 1.0 / (self.np * self.mp) as f64;
        let input_spec: Vec<Vec<Complex<f64>>> = x
            .to_planar()
            .iter()
            .map(|p| {
                let mut buf = self.padded(p, n, m);
                self.fft2(&mut buf, false);
                buf
            })
            .collect();
        let mut planes = vec![vec![0.0; no * mo]; n1];
        let mut acc = vec![Complex::default(); self.np * self.mp];
        for (lo, plane) in planes.iter_mut().enumerate() {
            acc.iter_mut().for_each(|c| *c = Complex::default());
            for (li, fx) in input_spec.iter().enumerate() {
                let fw = &self.kernel_spec[li * n1 + lo];
                for ((a, x), w) in acc.iter_mut().zip(fx).zip(fw) {
                    *a += x * w.conj();
                }
            }
            self.fft2(&mut acc, true);
            for t in 0..no {
                for v in 0..mo {
                    plane[t * mo + v] = acc[t * self.mp + v].re * scale + b[lo];
                }
            }
        }
        let _ = l_in;
        (Tensor3::from_planar([no, mo, n1], &planes), FftCache { input_spec })
    }

    pub fn backward(&self, cache: &FftCache, dz: &Tensor3, need_dx: bool) -> ConvGrads {
        let [t1, v1, l_in, n1] = self.shape;
        let [n, m, _] = self.dims;
        let [no, mo, _] = dz.dims();
        let scale = 1.0 / (self.np * self.mp) as f64;
        let dzp = dz.to_planar();
        let db: Vec<f64> = dzp.iter().map(|p| p.iter().sum()).collect();
        let dz_spec: Vec<Vec<Complex<f64>>> = dzp
            .iter()
            .map(|p| {
                let mut buf = self.padded(p, no, mo);
                self.fft2(&mut buf, false);
                buf
            })
            .collect();
        let mut dw = vec![0.0; t1 * v1 * l_in * n1];
        let mut buf = vec![Complex::default(); self.np * self.mp];
        for (li, fx) in cache.input_spec.iter().enumerate() {
            for (lo, fg) in dz_spec.iter().enumerate() {
                for ((o, x), g) in buf.iter_mut().zip(fx).zip(fg) {
                    *o = x * g.conj();
                }
                self.fft2(&mut buf, true);
                for dt in 0..t1 {
                    for dv in 0..v1 {
                        dw[((dt * v1 + dv) * l_in + li) * n1 + lo] = buf[dt * self.mp + dv].re * scale;
                    }
                }
            }
        }
        let dx = need_dx.then(|| {
            let mut planes = vec![vec![0.0; n * m]; l_in];
            for (li, plane) in planes.iter_mut().enumerate() {
                buf.iter_mut().for_each(|c| *c = Complex::default());
                for (lo, fg) in dz_spec.iter().enumerate() {
                    let fw = &self.kernel_spec[li * n1 + lo];
                    for ((o, g), w) in buf.iter_mut().zip(fg).zip(fw) {
                        *o += g * w;
                    }
                }
                self.fft2(&mut buf, true);
                for t in 0..n {
                    for v in 0..m {
                        plane[t * m + v] = buf[t * self.mp + v].re * scale;
                    }
                }
            }
            Tensor3::from_planar([n, m, l_in], &planes)
        });
        ConvGrads { dw, db, dx }
    }
}
