//! Spherical projection of a scan into an intensity + range image and the
//! image-space preprocessing used before 2D detection.

mod blur;
mod export;

pub use blur::{blur_grid, gaussian_kernel};

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use thiserror::Error;

use crate::cloud::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds { u: i64, v: i64, width: usize, height: usize },
    #[error("pixel ({u}, {v}) is unobserved")]
    Unobserved { u: usize, v: usize },
    #[error("invalid projection config: {0}")]
    InvalidConfig(&'static str),
}

/// Angular resolutions, pixel offsets and image size.
///
/// A direction with azimuth θ and inclination φ lands on column
/// `round(θ/Θ_a) + u_o` and row `round(φ/Θ_i) + v_o`. Rows grow upward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub theta_a: f64,
    pub theta_i: f64,
    pub u_o: i64,
    pub v_o: i64,
    pub width: usize,
    pub height: usize,
}

impl ProjectionConfig {
    /// Offsets at the image center.
    pub fn centered(theta_a: f64, theta_i: f64, width: usize, height: usize) -> Self {
        Self { theta_a, theta_i, u_o: (width / 2) as i64, v_o: (height / 2) as i64, width, height }
    }

    /// Sizes the image to the cloud's angular extent and centers it.
    ///
    /// The azimuth span is the shortest arc covering all points, so clouds
    /// straddling ±π are handled. One spare column/row is kept on each side.
    pub fn fit(cloud: &PointCloud, theta_a: f64, theta_i: f64) -> Result<Self, ImageError> {
        if cloud.is_empty() {
            return Err(ImageError::EmptyCloud);
        }
        if !(theta_a > 0.0 && theta_i > 0.0) {
            return Err(ImageError::InvalidConfig("angular resolutions must be positive"));
        }
        let mut az: Vec<f64> = Vec::with_capacity(cloud.len());
        let (mut lo_i, mut hi_i) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in cloud.iter() {
            let (t, f, r) = spherical(&p.position);
            if r <= 0.0 {
                continue;
            }
            az.push(t);
            lo_i = lo_i.min(f);
            hi_i = hi_i.max(f);
        }
        if az.is_empty() {
            return Err(ImageError::EmptyCloud);
        }
        az.sort_by(f64::total_cmp);
        // largest empty gap on the circle; the covered arc starts after it
        let mut gap = az[0] + TAU - az[az.len() - 1];
        let mut start = az[0];
        for w in az.windows(2) {
            if w[1] - w[0] > gap {
                gap = w[1] - w[0];
                start = w[1];
            }
        }
        let span_a = TAU - gap;
        let mid_a = wrap_pi(start + 0.5 * span_a);
        let span_i = hi_i - lo_i;
        let mid_i = 0.5 * (hi_i + lo_i);

        let width = ((span_a / theta_a).round() as usize + 3).max(1);
        let height = ((span_i / theta_i).round() as usize + 3).max(1);
        let u_o = (width / 2) as i64 - (mid_a / theta_a).round() as i64;
        let v_o = (height / 2) as i64 - (mid_i / theta_i).round() as i64;
        Ok(Self { theta_a, theta_i, u_o, v_o, width, height })
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        if !(self.theta_a > 0.0 && self.theta_i > 0.0) {
            return Err(ImageError::InvalidConfig("angular resolutions must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ImageError::InvalidConfig("image must be non-empty"));
        }
        Ok(())
    }

    /// Azimuth at the horizontal image center. Azimuths are wrapped to within
    /// ±π of it before quantization.
    pub fn center_azimuth(&self) -> f64 {
        ((self.width / 2) as i64 - self.u_o) as f64 * self.theta_a
    }

    /// Continuous pixel coordinates of a direction, before rounding.
    pub fn pixel_of(&self, p: &Vector3<f64>) -> (f64, f64) {
        let (t, f, _) = spherical(p);
        let c = self.center_azimuth();
        let t = c + wrap_pi(t - c);
        (t / self.theta_a + self.u_o as f64, f / self.theta_i + self.v_o as f64)
    }

    /// (azimuth, inclination) of a (possibly fractional) pixel.
    pub fn angles_of(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.u_o as f64) * self.theta_a, (v - self.v_o as f64) * self.theta_i)
    }

    /// Unit ray through a (possibly fractional) pixel.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let (t, f) = self.angles_of(u, v);
        Vector3::new(f.cos() * t.cos(), f.cos() * t.sin(), f.sin())
    }
}

/// (azimuth, inclination, range).
pub fn spherical(p: &Vector3<f64>) -> (f64, f64, f64) {
    (p.y.atan2(p.x), p.z.atan2(p.x.hypot(p.y)), p.norm())
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Row-major (v, u) grid access shared by the image kinds.
pub trait Grid {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn index(&self, u: usize, v: usize) -> usize {
        v * self.width() + u
    }
    fn in_bounds(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width() && (v as usize) < self.height()
    }
}

/// Projected scan. Unobserved pixels carry intensity 0 and range 0.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    pub config: ProjectionConfig,
    pub intensity: Vec<f64>,
    pub range: Vec<f64>,
    pub observed: Vec<bool>,
}

impl Grid for IntensityImage {
    fn width(&self) -> usize {
        self.config.width
    }
    fn height(&self) -> usize {
        self.config.height
    }
}

impl IntensityImage {
    pub fn empty(config: ProjectionConfig) -> Self {
        let n = config.width * config.height;
        Self { config, intensity: vec![0.0; n], range: vec![0.0; n], observed: vec![false; n] }
    }

    pub fn is_observed(&self, u: usize, v: usize) -> bool {
        self.observed[self.index(u, v)]
    }

    pub fn intensity_at(&self, u: usize, v: usize) -> f64 {
        self.intensity[self.index(u, v)]
    }

    pub fn range_at(&self, u: usize, v: usize) -> Option<f64> {
        let i = self.index(u, v);
        self.observed[i].then_some(self.range[i])
    }

    pub fn set(&mut self, u: usize, v: usize, intensity: f64, range: f64) {
        let i = self.index(u, v);
        self.intensity[i] = intensity;
        self.range[i] = range;
        self.observed[i] = true;
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Observed intensities, sorted and deduplicated.
    pub fn distinct_intensities(&self) -> Vec<f64> {
        let mut v: Vec<f64> =
            self.intensity.iter().zip(&self.observed).filter(|(_, &o)| o).map(|(&i, _)| i).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Inverse projection of a pixel center.
    pub fn unproject(&self, u: i64, v: i64) -> Result<Vector3<f64>, ImageError> {
        if !self.in_bounds(u, v) {
            return Err(ImageError::OutOfBounds { u, v, width: self.width(), height: self.height() });
        }
        let (u, v) = (u as usize, v as usize);
        match self.range_at(u, v) {
            Some(r) => Ok(self.config.ray(u as f64, v as f64) * r),
            None => Err(ImageError::Unobserved { u, v }),
        }
    }

    pub fn binarize(&self, lambda: f64) -> BinaryImage {
        let bits = self
            .intensity
            .iter()
            .zip(&self.observed)
            .map(|(&i, &o)| u8::from(o && i > lambda))
            .collect();
        BinaryImage { config: self.config, bits }
    }

    /// Blurs intensity over observed pixels only (normalized convolution);
    /// the observed mask and ranges are unchanged.
    pub fn gaussian_blur(&self, sigma: f64) -> IntensityImage {
        let (w, h) = (self.width(), self.height());
        let weights: Vec<f64> = self.observed.iter().map(|&o| f64::from(u8::from(o))).collect();
        let weighted: Vec<f64> = self.intensity.iter().zip(&weights).map(|(i, m)| i * m).collect();
        let num = blur_grid(&weighted, w, h, sigma);
        let den = blur_grid(&weights, w, h, sigma);
        let intensity = (0..w * h)
            .map(|k| if self.observed[k] && den[k] > 1e-12 { num[k] / den[k] } else { self.intensity[k] })
            .collect();
        IntensityImage { intensity, ..self.clone() }
    }

    pub fn flip_horizontal(&self) -> IntensityImage {
        let w = self.width();
        IntensityImage {
            config: self.config,
            intensity: flip_rows(&self.intensity, w),
            range: flip_rows(&self.range, w),
            observed: flip_rows(&self.observed, w),
        }
    }
}

/// Projects a cloud; when several points share a pixel the nearest wins.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<IntensityImage, ImageError> {
    if cloud.is_empty() {
        return Err(ImageError::EmptyCloud);
    }
    cfg.validate()?;
    let mut img = IntensityImage::empty(*cfg);
    for p in cloud.iter() {
        let r = p.position.norm();
        if !(r > 0.0) || !r.is_finite() {
            continue;
        }
        let (fu, fv) = cfg.pixel_of(&p.position);
        let (u, v) = (fu.round() as i64, fv.round() as i64);
        if !img.in_bounds(u, v) {
            continue;
        }
        let k = img.index(u as usize, v as usize);
        if !img.observed[k] || r < img.range[k] {
            img.intensity[k] = p.intensity;
            img.range[k] = r;
            img.observed[k] = true;
        }
    }
    Ok(img)
}

/// Binarized image; 1 is bright.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryImage {
    pub config: ProjectionConfig,
    pub bits: Vec<u8>,
}

impl Grid for BinaryImage {
    fn width(&self) -> usize {
        self.config.width
    }
    fn height(&self) -> usize {
        self.config.height
    }
}

impl BinaryImage {
    pub fn new(config: ProjectionConfig, bits: Vec<u8>) -> Self {
        assert_eq!(bits.len(), config.width * config.height, "bit grid size mismatch");
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        Self { config, bits }
    }

    pub fn zeros(config: ProjectionConfig) -> Self {
        Self { bits: vec![0; config.width * config.height], config }
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.bits[self.index(u, v)]
    }

    pub fn set(&mut self, u: usize, v: usize, b: u8) {
        let i = self.index(u, v);
        self.bits[i] = u8::from(b != 0);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Blur followed by re-thresholding at 0.5, which removes isolated
    /// speckle and smooths ragged edges.
    pub fn gaussian_blur(&self, sigma: f64) -> BinaryImage {
        let src: Vec<f64> = self.bits.iter().map(|&b| b as f64).collect();
        let out = blur_grid(&src, self.width(), self.height(), sigma);
        BinaryImage { config: self.config, bits: out.iter().map(|&x| u8::from(x >= 0.5)).collect() }
    }

    pub fn flip_horizontal(&self) -> BinaryImage {
        BinaryImage { config: self.config, bits: flip_rows(&self.bits, self.width()) }
    }
}

fn flip_rows<T: Copy>(data: &[T], width: usize) -> Vec<T> {
    data.chunks(width).flat_map(|row| row.iter().rev().copied()).collect()
}
