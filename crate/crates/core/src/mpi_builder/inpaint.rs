//! Harmonic (membrane) inpainting.
//!
//! Unknown pixels solve the discrete Laplace equation with known neighbors
//! as fixed boundary values. Known pixels that are not allowed as sources act
//! as insulating walls. A push-pull pass seeds the unknowns, then SOR sweeps
//! run until the relative change drops below [`REL_TOL`].

use rayon::prelude::*;

use crate::buffer::{DisparityMap, ImageBuffer, Mask};
use crate::error::Result;
use crate::filter::connected_components;

pub const REL_TOL: f64 = 1e-4;
pub const DEFAULT_INPAINT_ITERS: usize = 2000;
const OMEGA: f64 = 1.8;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Unknown,
    Source,
    Wall,
}

/// Push-pull fill: average the sources down a pyramid and pull coarse values
/// back into empty pixels.
fn push_pull(values: &[f64], weights: &[f64], w: usize, h: usize) -> Vec<f64> {
    if w <= 1 && h <= 1 {
        return if weights[0] > 0.0 {
            vec![values[0] / weights[0]]
        } else {
            vec![0.0]
        };
    }
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut cv = vec![0.0; cw * ch];
    let mut cwt = vec![0.0; cw * ch];
    for y in 0..h {
        for x in 0..w {
            let c = (y / 2) * cw + x / 2;
            cv[c] += values[y * w + x];
            cwt[c] += weights[y * w + x];
        }
    }
    let coarse = push_pull(&cv, &cwt, cw, ch);
    (0..w * h)
        .map(|i| {
            if weights[i] > 0.0 {
                values[i] / weights[i]
            } else {
                coarse[((i / w) / 2) * cw + (i % w) / 2]
            }
        })
        .collect()
}

fn solve_channel(src: &[f32], roles: &[Role], w: usize, h: usize, iters: usize) -> Vec<f32> {
    let mut v: Vec<f64> = src.iter().map(|x| *x as f64).collect();
    let unknown: Vec<usize> = (0..w * h).filter(|i| roles[*i] == Role::Unknown).collect();
    if unknown.is_empty() {
        return src.to_vec();
    }
    let pv: Vec<f64> = (0..w * h)
        .map(|i| if roles[i] == Role::Source { v[i] } else { 0.0 })
        .collect();
    let pw: Vec<f64> = roles.iter().map(|r| (*r == Role::Source) as u8 as f64).collect();
    let seed = push_pull(&pv, &pw, w, h);
    for &i in &unknown {
        v[i] = seed[i];
    }
    // Precomputed neighbor lists; walls and the frame are skipped.
    let neighbors: Vec<[usize; 4]> = unknown
        .iter()
        .map(|&i| {
            let (x, y) = (i % w, i / w);
            let mut n = [usize::MAX; 4];
            let cand = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for (slot, c) in n.iter_mut().zip(cand) {
                if let Some(j) = c.filter(|j| roles[*j] != Role::Wall) {
                    *slot = j;
                }
            }
            n
        })
        .collect();
    for _ in 0..iters {
        let mut change = 0.0;
        let mut total = 0.0;
        for (k, &i) in unknown.iter().enumerate() {
            let mut s = 0.0;
            let mut c = 0u32;
            for &j in &neighbors[k] {
                if j != usize::MAX {
                    s += v[j];
                    c += 1;
                }
            }
            if c == 0 {
                continue;
            }
            let target = s / c as f64;
            let next = v[i] + OMEGA * (target - v[i]);
            change += (next - v[i]).abs();
            total += next.abs();
            v[i] = next;
        }
        if change <= REL_TOL * total.max(1e-12) {
            break;
        }
    }
    v.into_iter().map(|x| x.clamp(0.0, 1.0) as f32).collect()
}

fn roles_for(mask: &Mask, sources: Option<&Mask>) -> Vec<Role> {
    (0..mask.data().len())
        .map(|i| {
            if mask.is_set_at(i) {
                Role::Unknown
            } else if sources.map_or(true, |s| s.is_set_at(i)) {
                Role::Source
            } else {
                Role::Wall
            }
        })
        .collect()
}

fn inpaint_planar(channels: Vec<Vec<f32>>, w: usize, h: usize, roles: &[Role], iters: usize) -> Vec<Vec<f32>> {
    channels
        .into_par_iter()
        .map(|c| solve_channel(&c, roles, w, h, iters))
        .collect()
}

/// Fills masked pixels by isotropic diffusion from every unmasked neighbor.
/// Unmasked pixels are returned unchanged.
pub fn inpaint(img: &ImageBuffer, mask: &Mask, iters: usize) -> Result<ImageBuffer> {
    inpaint_with_sources(img, mask, None, iters)
}

/// Like [`inpaint`], but only unmasked pixels selected by `sources` feed the
/// fill; other unmasked pixels are walls.
pub fn inpaint_with_sources(
    img: &ImageBuffer,
    mask: &Mask,
    sources: Option<&Mask>,
    iters: usize,
) -> Result<ImageBuffer> {
    crate::buffer::ensure_same_dims(img.dims(), mask.dims())?;
    if mask.is_empty() {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let roles = roles_for(mask, sources);
    let chans = (0..img.channels()).map(|c| img.channel(c)).collect();
    let filled = inpaint_planar(chans, w, h, &roles, iters);
    ImageBuffer::from_fn(w, h, img.channels(), img.space(), |x, y, c| filled[c][y * w + x])
}

pub fn inpaint_disparity(d: &DisparityMap, mask: &Mask, sources: Option<&Mask>, iters: usize) -> Result<DisparityMap> {
    crate::buffer::ensure_same_dims(d.dims(), mask.dims())?;
    if mask.is_empty() {
        return Ok(d.clone());
    }
    let (w, h) = d.dims();
    let roles = roles_for(mask, sources);
    let out = solve_channel(d.data(), &roles, w, h, iters);
    DisparityMap::new(w, h, out)
}

/// Background sources for each masked region: unmasked pixels touching a
/// mask component, minus those on the near side of that component's
/// boundary when its disparity range exceeds `tau`.
pub fn background_sources(d: &DisparityMap, mask: &Mask, tau: f64) -> Mask {
    let (w, h) = d.dims();
    let comps = connected_components(mask);
    let n = comps.count();
    // Boundary ring per component (4-neighbors of masked pixels).
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut ring: Vec<(usize, u32)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = comps.labels[i];
            if l == 0 {
                continue;
            }
            for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
                if nx >= w || ny >= h {
                    continue;
                }
                let j = ny * w + nx;
                if comps.labels[j] == 0 {
                    let v = d.data()[j] as f64;
                    lo[l as usize - 1] = lo[l as usize - 1].min(v);
                    hi[l as usize - 1] = hi[l as usize - 1].max(v);
                    ring.push((j, l));
                }
            }
        }
    }
    let mut out = vec![0.0f32; w * h];
    for (j, l) in ring {
        let k = l as usize - 1;
        let v = d.data()[j] as f64;
        if hi[k] - lo[k] <= tau || v <= 0.5 * (lo[k] + hi[k]) {
            out[j] = 1.0;
        }
    }
    Mask::new(w, h, out).expect("sized")
}
