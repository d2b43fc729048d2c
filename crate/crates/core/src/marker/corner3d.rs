use nalgebra::{Vector2, Vector3};

use super::MarkerError;
use crate::image::{Grid, ImageError, IntensityImage};

/// Rows searched on each side of an unobserved corner pixel.
pub const SYMMETRIC_WINDOW: usize = 8;

/// Relative range spread above which neighboring pixels are not treated as
/// one surface for interpolation.
const RANGE_SPREAD: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CornerSource {
    /// Nearest pixel was observed and unprojected directly.
    Observed,
    /// Bilinear blend of the four surrounding observed pixels.
    Interpolated,
    /// Unobserved pixel recovered from a symmetric observed pair in its column.
    Bisector { upper: Vector3<f64>, lower: Vector3<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner3D {
    pub position: Vector3<f64>,
    pub source: CornerSource,
}

/// Point on segment `[p_u, p_d]` hit by the bisector of the angle they
/// subtend at the origin.
///
/// With `μ = ‖p_d‖/‖p_u‖` the bisector splits the segment so that
/// `|p_k p_d| / |p_u p_k| = μ`, giving `p_k = (μ p_u + p_d) / (1 + μ)`.
pub fn bisector_point(p_u: &Vector3<f64>, p_d: &Vector3<f64>) -> Vector3<f64> {
    let mu = p_d.norm() / p_u.norm();
    p_u * (mu / (1.0 + mu)) + p_d * (1.0 / (1.0 + mu))
}

/// Recovers the 3D point of a (sub-pixel) image corner.
pub fn corner_to_3d(img: &IntensityImage, corner: &Vector2<f64>) -> Result<Corner3D, MarkerError> {
    let (u, v) = (corner.x, corner.y);
    let (ui, vi) = (u.round() as i64, v.round() as i64);
    if !img.in_bounds(ui, vi) {
        return Err(ImageError::OutOfBounds { u: ui, v: vi, width: img.width(), height: img.height() }.into());
    }
    if img.is_observed(ui as usize, vi as usize) {
        if let Some(p) = bilinear(img, u, v) {
            return Ok(Corner3D { position: p, source: CornerSource::Interpolated });
        }
        return Ok(Corner3D { position: img.unproject(ui, vi)?, source: CornerSource::Observed });
    }
    for d in 1..=SYMMETRIC_WINDOW as i64 {
        let (up, dn) = (vi + d, vi - d);
        if !img.in_bounds(ui, up) || !img.in_bounds(ui, dn) {
            break;
        }
        if let (Ok(p_u), Ok(p_d)) = (img.unproject(ui, up), img.unproject(ui, dn)) {
            return Ok(Corner3D {
                position: bisector_point(&p_u, &p_d),
                source: CornerSource::Bisector { upper: p_u, lower: p_d },
            });
        }
    }
    Err(MarkerError::NoSymmetricPair { u: ui as usize, v: vi as usize })
}

fn bilinear(img: &IntensityImage, u: f64, v: f64) -> Option<Vector3<f64>> {
    let (u0, v0) = (u.floor() as i64, v.floor() as i64);
    let (fu, fv) = (u - u0 as f64, v - v0 as f64);
    if fu == 0.0 && fv == 0.0 {
        return None;
    }
    let mut pts = [Vector3::zeros(); 4];
    for (k, (du, dv)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        pts[k] = img.unproject(u0 + du, v0 + dv).ok()?;
    }
    let ranges = pts.map(|p| p.norm());
    let (lo, hi) = ranges.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    if hi - lo > RANGE_SPREAD * lo {
        return None;
    }
    Some(
        pts[0] * ((1.0 - fu) * (1.0 - fv))
            + pts[1] * (fu * (1.0 - fv))
            + pts[2] * ((1.0 - fu) * fv)
            + pts[3] * (fu * fv),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ProjectionConfig;

    #[test]
    fn bisector_examples() {
        let p = bisector_point(&Vector3::new(1.0, 0.0, 1.0), &Vector3::new(1.0, 0.0, -1.0));
        assert!((p - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let (pu, pd) = (Vector3::new(1.0, 0.0, 1.0), Vector3::new(2.0, 0.0, -2.0));
        let p = bisector_point(&pu, &pd);
        // rays at ±45° bisect along the x axis; the segment crosses it at x = 4/3
        assert!((p - Vector3::new(4.0 / 3.0, 0.0, 0.0)).norm() < 1e-12);
        // split ratio |p_k p_d| / |p_u p_k| equals the range ratio
        assert!(((p - pd).norm() / (pu - p).norm() - pd.norm() / pu.norm()).abs() < 1e-12);
        // collinear and between the pair
        assert!((p - pu).cross(&(pd - pu)).norm() < 1e-12);
        assert!((p - pu).dot(&(pd - p)) > 0.0);
    }

    #[test]
    fn bisector_ray_halves_the_angle() {
        let (pu, pd) = (Vector3::new(3.0, 0.4, 1.2), Vector3::new(5.0, 0.7, -2.5));
        let p = bisector_point(&pu, &pd).normalize();
        let a1 = p.angle(&pu);
        let a2 = p.angle(&pd);
        assert!((a1 - a2).abs() < 1e-12);
    }

    fn plane_image() -> IntensityImage {
        // plane x = 4 seen on a centered 1° grid, with pixel (20, 15) missing
        let cfg = ProjectionConfig::centered(0.5f64.to_radians(), 0.5f64.to_radians(), 41, 31);
        let mut img = IntensityImage::empty(cfg);
        for v in 0..31 {
            for u in 0..41 {
                if (u, v) == (20, 15) || (u, v) == (25, 9) || (u, v) == (25, 10) || (u, v) == (25, 8) {
                    continue;
                }
                let ray = cfg.ray(u as f64, v as f64);
                img.set(u, v, 100.0, 4.0 / ray.x);
            }
        }
        img
    }

    #[test]
    fn observed_unobserved_and_interpolated_paths() {
        let img = plane_image();
        let c = corner_to_3d(&img, &Vector2::new(10.0, 10.0)).unwrap();
        assert_eq!(c.source, CornerSource::Observed);
        assert_eq!(c.position, img.unproject(10, 10).unwrap());

        let c = corner_to_3d(&img, &Vector2::new(20.0, 15.0)).unwrap();
        assert!(matches!(c.source, CornerSource::Bisector { .. }));
        assert!((c.position.x - 4.0).abs() < 1e-9);
        assert!((c.position - img.config.ray(20.0, 15.0) * c.position.norm()).norm() < 1e-9);

        // three unobserved rows in one column: pair found at distance 2
        let c = corner_to_3d(&img, &Vector2::new(25.2, 9.1)).unwrap();
        match c.source {
            CornerSource::Bisector { upper, lower } => {
                assert!((upper - img.unproject(25, 11).unwrap()).norm() < 1e-12);
                assert!((lower - img.unproject(25, 7).unwrap()).norm() < 1e-12);
            }
            s => panic!("unexpected source {s:?}"),
        }

        let c = corner_to_3d(&img, &Vector2::new(5.3, 6.6)).unwrap();
        assert_eq!(c.source, CornerSource::Interpolated);
        assert!((c.position.x - 4.0).abs() < 1e-3);
    }

    #[test]
    fn no_pair_is_an_error() {
        let cfg = ProjectionConfig::centered(0.01, 0.01, 5, 40);
        let mut img = IntensityImage::empty(cfg);
        img.set(2, 30, 1.0, 2.0);
        assert_eq!(corner_to_3d(&img, &Vector2::new(2.0, 20.0)), Err(MarkerError::NoSymmetricPair { u: 2, v: 20 }));
        assert!(corner_to_3d(&img, &Vector2::new(-3.0, 20.0)).is_err());
    }
}
