//! Small raster helpers shared across modules: distance transforms, disc
//! morphology, connected components, Gaussian smoothing.

use std::collections::VecDeque;

use crate::buffer::Mask;

const INF: f64 = 1e20;

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest selected
/// pixel of `mask`. Pixels are infinitely far when the mask is empty.
pub fn squared_distance_to(mask: &Mask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let mut grid: Vec<f64> = mask.data().iter().map(|v| if *v > 0.5 { 0.0 } else { INF }).collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

/// Binary dilation by the disc `{(dx, dy) : dx² + dy² ≤ r²}`.
pub fn dilate_disc(mask: &Mask, radius: f64) -> Mask {
    if radius <= 0.0 {
        return mask.binarize();
    }
    let r2 = radius * radius + 1e-9;
    let dist = squared_distance_to(mask);
    let (w, h) = mask.dims();
    Mask::new(w, h, dist.iter().map(|d| if *d <= r2 { 1.0 } else { 0.0 }).collect()).expect("same dims")
}

/// Binary erosion by the same disc; pixels outside the raster count as
/// unselected.
pub fn erode_disc(mask: &Mask, radius: f64) -> Mask {
    if radius <= 0.0 {
        return mask.binarize();
    }
    let (w, h) = mask.dims();
    // Pad by one pixel so the frame counts as background.
    let padded = Mask::from_predicate(w + 2, h + 2, |x, y| {
        !(x >= 1 && y >= 1 && x <= w && y <= h && mask.is_set(x - 1, y - 1))
    });
    let grown = dilate_disc(&padded, radius);
    Mask::from_predicate(w, h, |x, y| !grown.is_set(x + 1, y + 1))
}

/// Integer offsets inside a disc of the given radius.
pub fn disc_offsets(radius: f64) -> Vec<(isize, isize)> {
    let r = radius.floor() as isize;
    let r2 = radius * radius + 1e-9;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Gray-level max (`dilate = true`) or min filter over a disc, clamping at
/// the borders.
pub fn gray_morphology(data: &[f32], w: usize, h: usize, radius: f64, dilate: bool) -> Vec<f32> {
    if radius <= 0.0 {
        return data.to_vec();
    }
    let offsets = disc_offsets(radius);
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = if dilate { f32::NEG_INFINITY } else { f32::INFINITY };
            for (dx, dy) in &offsets {
                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let v = data[sy * w + sx];
                acc = if dilate { acc.max(v) } else { acc.min(v) };
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Separable Gaussian blur with replicate borders; kernel truncated at 3σ.
pub fn gaussian_blur(data: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut dst = vec![0.0f32; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for (j, kv) in k.iter().enumerate() {
                    let o = j as isize - r;
                    let (sx, sy) = if horizontal {
                        ((x as isize + o).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + o).clamp(0, h as isize - 1) as usize)
                    };
                    acc += kv * src[sy * w + sx] as f64;
                }
                dst[y * w + x] = acc as f32;
            }
        }
        dst
    };
    pass(&pass(data, true), false)
}

/// 8-connected components of a binary mask.
#[derive(Clone, Debug)]
pub struct Components {
    /// Per-pixel label; `0` marks unselected pixels, components are `1..=count`.
    pub labels: Vec<u32>,
    /// Pixel count per component, indexed by `label - 1`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn connected_components(mask: &Mask) -> Components {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if labels[start] != 0 || !mask.is_set_at(start) {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 && mask.is_set_at(j) {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}
