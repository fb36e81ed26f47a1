//! Zero-padded 2D convolution of planar `f32` channels with a disc kernel.
//!
//! Small kernels run directly; larger ones go through a 2D FFT. Both paths
//! compute the same linear convolution (up to rounding). Pairs of real
//! channels share one complex transform.

use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::kernel::Kernel;

/// Kernels with a side at or below this run through the direct path.
pub const DIRECT_MAX_SIDE: usize = 9;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if forward {
        p.plan_fft_forward(len)
    } else {
        p.plan_fft_inverse(len)
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub fn fft_friendly_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Convolves every channel with `kernel`, treating samples outside the
/// raster as zero.
pub fn convolve_channels(channels: &[Vec<f32>], w: usize, h: usize, kernel: &Kernel) -> Vec<Vec<f32>> {
    if kernel.is_identity() {
        return channels.to_vec();
    }
    if kernel.side() <= DIRECT_MAX_SIDE {
        channels.par_iter().map(|c| convolve_direct(c, w, h, kernel)).collect()
    } else {
        convolve_fft(channels, w, h, kernel)
    }
}

pub fn convolve_direct(src: &[f32], w: usize, h: usize, kernel: &Kernel) -> Vec<f32> {
    let r = kernel.half() as isize;
    let side = kernel.side();
    let weights = kernel.weights();
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for ky in 0..side {
                let sy = y as isize + ky as isize - r;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                let base = sy as usize * w;
                for kx in 0..side {
                    let sx = x as isize + kx as isize - r;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    acc += weights[ky * side + kx] * src[base + sx as usize] as f64;
                }
            }
            *o = acc as f32;
        }
    });
    out
}

struct Grid2d {
    pw: usize,
    ph: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Grid2d {
    fn new(pw: usize, ph: usize) -> Self {
        Self {
            pw,
            ph,
            row_fwd: plan(pw, true),
            row_inv: plan(pw, false),
            col_fwd: plan(ph, true),
            col_inv: plan(ph, false),
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let (rows, cols) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        buf.par_chunks_mut(self.pw).for_each(|row| rows.process(row));
        let mut t = transpose(buf, self.pw, self.ph);
        t.par_chunks_mut(self.ph).for_each(|col| cols.process(col));
        let back = transpose(&t, self.ph, self.pw);
        buf.copy_from_slice(&back);
    }
}

fn transpose(src: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut dst = vec![Complex::new(0.0, 0.0); w * h];
    const B: usize = 32;
    for by in (0..h).step_by(B) {
        for bx in (0..w).step_by(B) {
            for y in by..(by + B).min(h) {
                for x in bx..(bx + B).min(w) {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
    }
    dst
}

pub fn convolve_fft(channels: &[Vec<f32>], w: usize, h: usize, kernel: &Kernel) -> Vec<Vec<f32>> {
    let r = kernel.half();
    let pw = fft_friendly_size(w + r);
    let ph = fft_friendly_size(h + r);
    let grid = Grid2d::new(pw, ph);

    // Kernel spectrum: center at the origin with wrap-around.
    let mut kspec = vec![Complex::new(0.0, 0.0); pw * ph];
    let ri = r as isize;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let wgt = kernel.at(dx, dy);
            if wgt == 0.0 {
                continue;
            }
            let x = dx.rem_euclid(pw as isize) as usize;
            let y = dy.rem_euclid(ph as isize) as usize;
            kspec[y * pw + x].re += wgt;
        }
    }
    grid.transform(&mut kspec, true);
    let scale = 1.0 / (pw * ph) as f64;

    let mut out: Vec<Vec<f32>> = Vec::with_capacity(channels.len());
    for pair in channels.chunks(2) {
        let mut buf = vec![Complex::new(0.0, 0.0); pw * ph];
        for y in 0..h {
            for x in 0..w {
                let re = pair[0][y * w + x] as f64;
                let im = pair.get(1).map_or(0.0, |c| c[y * w + x] as f64);
                buf[y * pw + x] = Complex::new(re, im);
            }
        }
        grid.transform(&mut buf, true);
        buf.par_iter_mut().zip(kspec.par_iter()).for_each(|(b, k)| *b *= *k);
        grid.transform(&mut buf, false);
        let mut a = vec![0.0f32; w * h];
        let mut b = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let v = buf[y * pw + x] * scale;
                a[y * w + x] = v.re as f32;
                b[y * w + x] = v.im as f32;
            }
        }
        out.push(a);
        if pair.len() == 2 {
            out.push(b);
        }
    }
    out
}
