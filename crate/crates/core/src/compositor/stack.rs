use crate::buffer::{ColorSpace, ImageBuffer, Mask};
use crate::error::{Error, Result};

/// Disparity of plane `i` (1-based) in an `n`-plane stack: `(i − 0.5)/n`.
#[inline]
pub fn plane_disparity(i: usize, n: usize) -> f64 {
    (i as f64 - 0.5) / n as f64
}

/// One fronto-parallel layer of an MPI.
#[derive(Clone, Debug, PartialEq)]
pub struct MpiPlane {
    /// Straight (not premultiplied) linear RGB.
    pub color: ImageBuffer,
    pub alpha: Mask,
    /// Background-blend weight; kept for inspection only.
    pub blend: Option<Mask>,
    pub disparity: f64,
}

impl MpiPlane {
    /// Fully transparent black plane.
    pub fn transparent(width: usize, height: usize, disparity: f64) -> Self {
        Self {
            color: ImageBuffer::filled(width, height, 3, ColorSpace::Linear, 0.0).expect("nonempty dims"),
            alpha: Mask::empty(width, height),
            blend: None,
            disparity,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.data().iter().all(|a| *a == 0.0)
    }
}

/// Planes ordered back to front with `d_i = (i − 0.5)/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpiStack {
    planes: Vec<MpiPlane>,
    width: usize,
    height: usize,
}

impl MpiStack {
    pub fn new(planes: Vec<MpiPlane>) -> Result<Self> {
        let n = planes.len();
        if n < 2 {
            return Err(Error::param("planes", format!("need at least 2, got {n}")));
        }
        let dims = planes[0].alpha.dims();
        for (k, p) in planes.iter().enumerate() {
            if p.color.channels() != 3 {
                return Err(Error::Channels(p.color.channels()));
            }
            if p.color.space() != ColorSpace::Linear {
                return Err(Error::ColorSpace {
                    expected: ColorSpace::Linear,
                    found: p.color.space(),
                });
            }
            for found in [p.color.dims(), p.alpha.dims()]
                .into_iter()
                .chain(p.blend.as_ref().map(|b| b.dims()))
            {
                if found != dims {
                    return Err(Error::DimensionMismatch { expected: dims, found });
                }
            }
            let want = plane_disparity(k + 1, n);
            if (p.disparity - want).abs() > 1e-9 {
                return Err(Error::param(
                    "disparity",
                    format!("plane {} has {}, expected {want}", k + 1, p.disparity),
                ));
            }
        }
        Ok(Self {
            planes,
            width: dims.0,
            height: dims.1,
        })
    }

    pub fn planes(&self) -> &[MpiPlane] {
        &self.planes
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn into_planes(self) -> Vec<MpiPlane> {
        self.planes
    }
}
