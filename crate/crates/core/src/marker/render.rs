//! Rasterizes tags straight into binary images, with the same orientation
//! convention as a spherical projection viewed from the tag's front: marker
//! `+x` runs toward decreasing `u`, marker `+y` toward increasing `v`.

use nalgebra::Vector2;

use super::TagFamily;
use crate::image::{BinaryImage, ProjectionConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TagRender {
    pub width: usize,
    pub height: usize,
    /// Tag center in pixels.
    pub center: (f64, f64),
    pub px_per_cell: f64,
    /// In-plane rotation of the tag about its normal, radians.
    pub angle: f64,
}

impl Default for TagRender {
    fn default() -> Self {
        Self { width: 140, height: 130, center: (70.3, 64.6), px_per_cell: 12.0, angle: 0.0 }
    }
}

/// Renders tag `id` on a white background. Returns the image and the true
/// corner positions in canonical order.
pub fn render_tag(family: &TagFamily, id: usize, r: &TagRender) -> (BinaryImage, [Vector2<f64>; 4]) {
    let scale = r.px_per_cell * family.total_cells() as f64;
    let (s, c) = r.angle.sin_cos();
    let to_px = |x: f64, y: f64| {
        let (xr, yr) = (c * x - s * y, s * x + c * y);
        Vector2::new(r.center.0 - scale * xr, r.center.1 + scale * yr)
    };
    let cfg = ProjectionConfig::centered(1e-3, 1e-3, r.width, r.height);
    let mut img = BinaryImage::zeros(cfg);
    for v in 0..r.height {
        for u in 0..r.width {
            let xr = -(u as f64 - r.center.0) / scale;
            let yr = (v as f64 - r.center.1) / scale;
            let (x, y) = (c * xr + s * yr, -s * xr + c * yr);
            let white = family.white_at(id, 1.0, x, y).unwrap_or(true);
            img.set(u, v, u8::from(white));
        }
    }
    let corners = super::detect::UNIT_CORNERS.map(|k| to_px(k[0], k[1]));
    (img, corners)
}

/// Paints tag `id` into an intensity image, surrounded by a `margin_cells`
/// wide band of the white level. Painted pixels become observed with range 1.
pub fn paint_tag(
    img: &mut crate::image::IntensityImage,
    family: &TagFamily,
    id: usize,
    r: &TagRender,
    black: f64,
    white: f64,
    margin_cells: f64,
) {
    let n = family.total_cells() as f64;
    let scale = r.px_per_cell * n;
    let (s, c) = r.angle.sin_cos();
    let half = 0.5 + margin_cells / n;
    for v in 0..img.config.height {
        for u in 0..img.config.width {
            let xr = -(u as f64 - r.center.0) / scale;
            let yr = (v as f64 - r.center.1) / scale;
            let (x, y) = (c * xr + s * yr, -s * xr + c * yr);
            if x.abs() > half || y.abs() > half {
                continue;
            }
            let white_px = family.white_at(id, 1.0, x, y).unwrap_or(true);
            img.set(u, v, if white_px { white } else { black }, 1.0);
        }
    }
}
