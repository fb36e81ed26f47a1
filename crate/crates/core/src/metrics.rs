//! PSNR, SSIM, occluding-boundary bands, and dataset evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::buffer::{ensure_same_dims, DisparityMap, ImageBuffer, Mask};
use crate::error::{Error, Result};
use crate::filter::{connected_components, dilate_disc};
use crate::io::{load_disparity, load_image};
use crate::occlusion::{disparity_gradient, initial_mask, OcclusionConfig};
use crate::synth::{load_manifest, Manifest};

/// Version tag of the boundary band construction, echoed in reports.
pub const BAND_VERSION: &str = "edge-dilate-v1";
pub const MIN_BAND_RADIUS: f64 = 8.0;
const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn selected(mask: Option<&Mask>, i: usize) -> bool {
    mask.map_or(true, |m| m.is_set_at(i))
}

/// Peak signal-to-noise ratio in dB with peak 1 over the color channels of
/// the selected pixels. Identical inputs give `+∞`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    if let Some(m) = mask {
        ensure_same_dims(a.dims(), m.dims())?;
    }
    let (ca, cb) = (a.color_channels(), b.color_channels());
    if ca != cb {
        return Err(Error::Channels(cb));
    }
    let mut se = 0.0f64;
    let mut n = 0usize;
    for (i, (pa, pb)) in a
        .data()
        .chunks_exact(a.channels())
        .zip(b.data().chunks_exact(b.channels()))
        .enumerate()
    {
        if !selected(mask, i) {
            continue;
        }
        for c in 0..ca {
            let e = pa[c] as f64 - pb[c] as f64;
            se += e * e;
        }
        n += ca;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn gaussian_window() -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filter: output is `(w − 10) × (h − 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|j| k[j] * src[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| k[j] * tmp[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// SSIM map of one channel over valid window positions.
fn ssim_map(a: &[f64], b: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = gaussian_window();
    let c1 = (K1 * 1.0f64).powi(2);
    let c2 = (K2 * 1.0f64).powi(2);
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let aa: Vec<f64> = a.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|x| x * x).collect();
    let [mu_a, mu_b, e_aa, e_bb, e_ab] = [a, b, &aa[..], &bb[..], &ab[..]].map(|s| filter_valid(s, w, h, &k));
    (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect()
}

/// Mean structural similarity: 11×11 Gaussian window (σ = 1.5), computed per
/// color channel at valid window positions and averaged. A mask selects the
/// window centers that are averaged.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    if let Some(m) = mask {
        ensure_same_dims(a.dims(), m.dims())?;
    }
    let (w, h) = a.dims();
    let side = 2 * SSIM_RADIUS + 1;
    if w < side || h < side {
        return Err(Error::param(
            "size",
            format!("{w}x{h} is smaller than the {side}x{side} window"),
        ));
    }
    let ch = a.color_channels();
    if b.color_channels() != ch {
        return Err(Error::Channels(b.color_channels()));
    }
    let ow = w - 2 * SSIM_RADIUS;
    let oh = h - 2 * SSIM_RADIUS;
    let centers: Vec<usize> = (0..ow * oh)
        .filter(|i| {
            let (x, y) = (i % ow + SSIM_RADIUS, i / ow + SSIM_RADIUS);
            selected(mask, y * w + x)
        })
        .collect();
    if centers.is_empty() {
        return Err(Error::EmptyMask);
    }
    let per_channel: Vec<f64> = (0..ch)
        .into_par_iter()
        .map(|c| {
            let pa: Vec<f64> = a.channel(c).iter().map(|v| *v as f64).collect();
            let pb: Vec<f64> = b.channel(c).iter().map(|v| *v as f64).collect();
            let m = ssim_map(&pa, &pb, w, h);
            centers.iter().map(|i| m[*i]).sum::<f64>() / centers.len() as f64
        })
        .collect();
    Ok(per_channel.iter().sum::<f64>() / ch as f64)
}

/// Pixels near occluding boundaries: each edge component of the thresholded
/// disparity gradient, dilated by `max(8, ⌈A·Δd⌉)` where `Δd` is the largest
/// step along that component.
pub fn boundary_band(d: &DisparityMap, blur_amount: f64, cfg: &OcclusionConfig) -> Mask {
    boundary_band_with(d, blur_amount, cfg, MIN_BAND_RADIUS)
}

/// [`boundary_band`] with a different lower bound on the dilation radius.
pub fn boundary_band_with(d: &DisparityMap, blur_amount: f64, cfg: &OcclusionConfig, min_radius: f64) -> Mask {
    let g = disparity_gradient(d);
    let edges = initial_mask(&g, cfg.grad_threshold);
    let comps = connected_components(&edges);
    let (w, h) = d.dims();
    let mut band = Mask::empty(w, h);
    for k in 0..comps.count() {
        let label = k as u32 + 1;
        let step = (0..w * h)
            .filter(|i| comps.labels[*i] == label)
            .map(|i| g.magnitude_at(i) as f64)
            .fold(0.0, f64::max);
        let part = Mask::from_predicate(w, h, |x, y| comps.labels[y * w + x] == label);
        let r = min_radius.max((blur_amount * step).ceil());
        band = band.union(&dilate_disc(&part, r)).expect("same dims");
    }
    band
}

fn ser_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

fn de_db<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum V {
        N(f64),
        S(String),
    }
    match Option::<V>::deserialize(d)? {
        None => Ok(None),
        Some(V::N(x)) => Ok(Some(x)),
        Some(V::S(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
        Some(V::S(s)) => Err(serde::de::Error::custom(format!("bad dB value {s:?}"))),
    }
}

/// Scores of one prediction. Boundary scores are `None` when the band is
/// empty; PSNR values may be `+∞` (written as `"inf"`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_ob: Option<f64>,
    pub ssim_ob: Option<f64>,
    pub band_coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub path: String,
    pub blur_amount: f64,
    pub refocus_disparity: f64,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub band: String,
    pub images: Vec<ImageScore>,
    pub mean: Scores,
    pub missing: Vec<String>,
}

/// Rounds to the 8-bit grid, as saved outputs are.
fn quantized(img: &ImageBuffer) -> ImageBuffer {
    img.to_rgb().quantize8()
}

/// All four scores of `pred` against `gt`, both quantized to 8 bits first.
pub fn score_pair(pred: &ImageBuffer, gt: &ImageBuffer, band: &Mask) -> Result<Scores> {
    let (p, g) = (quantized(pred), quantized(gt));
    let has_band = !band.is_empty();
    let ob = |f: fn(&ImageBuffer, &ImageBuffer, Option<&Mask>) -> Result<f64>| -> Result<Option<f64>> {
        if !has_band {
            return Ok(None);
        }
        match f(&p, &g, Some(band)) {
            Ok(v) => Ok(Some(v)),
            Err(Error::EmptyMask) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(Scores {
        psnr: Some(psnr(&p, &g, None)?),
        ssim: Some(ssim(&p, &g, None)?),
        psnr_ob: ob(psnr)?,
        ssim_ob: ob(ssim)?,
        band_coverage: band.coverage(),
    })
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub method: String,
    pub band: OcclusionConfig,
    pub min_band_radius: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            method: "prediction".into(),
            band: OcclusionConfig::default(),
            min_band_radius: MIN_BAND_RADIUS,
        }
    }
}

/// Scores every manifest bokeh image that has a same-named file under
/// `pred_dir`; absent predictions are listed, not fatal.
pub fn evaluate(pred_dir: impl AsRef<Path>, manifest_path: impl AsRef<Path>, opts: &EvalOptions) -> Result<EvalReport> {
    let manifest_path = manifest_path.as_ref();
    let manifest: Manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let pred_dir = pred_dir.as_ref();
    let mut jobs = Vec::new();
    let mut missing = Vec::new();
    for s in &manifest.scenes {
        for b in &s.bokeh {
            if pred_dir.join(&b.path).is_file() {
                jobs.push((s.disparity.clone(), b.clone()));
            } else {
                missing.push(b.path.clone());
            }
        }
    }
    let images: Vec<ImageScore> = jobs
        .par_iter()
        .map(|(disp, b)| {
            let d = load_disparity(root.join(disp))?;
            let gt = load_image(root.join(&b.path))?;
            let pred = load_image(pred_dir.join(&b.path))?;
            let band = boundary_band_with(&d, b.blur_amount, &opts.band, opts.min_band_radius);
            Ok(ImageScore {
                path: b.path.clone(),
                blur_amount: b.blur_amount,
                refocus_disparity: b.refocus_disparity,
                scores: score_pair(&pred, &gt, &band)?,
            })
        })
        .collect::<Result<_>>()?;
    let mean = Scores {
        psnr: mean_of(images.iter().map(|i| i.scores.psnr)),
        ssim: mean_of(images.iter().map(|i| i.scores.ssim)),
        psnr_ob: mean_of(images.iter().map(|i| i.scores.psnr_ob)),
        ssim_ob: mean_of(images.iter().map(|i| i.scores.ssim_ob)),
        band_coverage: images.iter().map(|i| i.scores.band_coverage).sum::<f64>() / images.len().max(1) as f64,
    };
    Ok(EvalReport {
        method: opts.method.clone(),
        band: format!("{BAND_VERSION} min_radius={}", opts.min_band_radius),
        images,
        mean,
        missing,
    })
}

fn cell(v: Option<f64>, prec: usize) -> String {
    match v {
        None => "-".into(),
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.prec$}"),
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}  band: {}", self.method, self.band);
        let _ = writeln!(
            s,
            "{:<40} {:>6} {:>7} {:>8} {:>7} {:>8} {:>7} {:>6}",
            "image", "A", "d_f", "PSNR", "SSIM", "PSNR_ob", "SSIM_ob", "band"
        );
        let row = |s: &mut String, name: &str, a: String, f: String, sc: &Scores| {
            let _ = writeln!(
                s,
                "{:<40} {:>6} {:>7} {:>8} {:>7} {:>8} {:>7} {:>6.3}",
                name,
                a,
                f,
                cell(sc.psnr, 2),
                cell(sc.ssim, 4),
                cell(sc.psnr_ob, 2),
                cell(sc.ssim_ob, 4),
                sc.band_coverage
            );
        };
        for i in &self.images {
            row(
                &mut s,
                &i.path,
                format!("{}", i.blur_amount),
                format!("{:.4}", i.refocus_disparity),
                &i.scores,
            );
        }
        row(&mut s, "mean", String::new(), String::new(), &self.mean);
        if !self.missing.is_empty() {
            let _ = writeln!(s, "missing {} prediction(s):", self.missing.len());
            for m in &self.missing {
                let _ = writeln!(s, "  {m}");
            }
        }
        s
    }
}
