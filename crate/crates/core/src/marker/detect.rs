use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, SymmetricEigen, Vector2, Vector3};

use super::TagFamily;
use crate::image::{BinaryImage, Grid};

/// A decoded tag in pixel coordinates (`u` right, `v` up, pixel centers at
/// integers).
///
/// `corners_px[s]` is the image of canonical marker corner `s`
/// (`(−a/2,−a/2)`, `(a/2,−a/2)`, `(a/2,a/2)`, `(−a/2,a/2)`), i.e. the order
/// is counter-clockwise in the marker frame. Azimuth grows right-to-left in
/// the image, so the same order appears clockwise in `(u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection2D {
    pub id: usize,
    pub corners_px: [Vector2<f64>; 4],
    /// Bit errors of the accepted code.
    pub hamming: u32,
    /// Distance gap between the best and second-best dictionary match.
    pub margin: u32,
}

impl Detection2D {
    /// Signed shoelace area in `(u, v)`; negative for the expected winding.
    pub fn signed_area(&self) -> f64 {
        shoelace(&self.corners_px)
    }
}

/// Finds and decodes tags in a binary image.
pub trait Detector2D: Sync {
    fn detect(&self, img: &BinaryImage) -> Vec<Detection2D>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadParams {
    /// Shortest accepted quad side, pixels.
    pub min_side_px: f64,
    /// Bit errors accepted when decoding.
    pub max_hamming: u32,
    /// Border cells allowed to read white.
    pub max_border_errors: usize,
    /// Boundary pixels may deviate from the quad by this many pixels plus
    /// `hull_rel_tolerance` × mean side.
    pub hull_tolerance_px: f64,
    pub hull_rel_tolerance: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            min_side_px: 10.0,
            max_hamming: 1,
            max_border_errors: 2,
            hull_tolerance_px: 1.5,
            hull_rel_tolerance: 0.06,
        }
    }
}

/// Dark-region quad detector for a [`TagFamily`].
#[derive(Clone, Debug)]
pub struct QuadDetector {
    pub family: TagFamily,
    pub params: QuadParams,
}

impl QuadDetector {
    pub fn new(family: TagFamily) -> Self {
        Self { family, params: QuadParams::default() }
    }
}

impl Detector2D for QuadDetector {
    fn detect(&self, img: &BinaryImage) -> Vec<Detection2D> {
        let mut out: Vec<Detection2D> = Vec::new();
        for comp in dark_components(img) {
            let Some(quad) = fit_quad(img, &comp, &self.params) else { continue };
            if let Some(det) = decode(img, &quad, &self.family, &self.params) {
                if !out.iter().any(|d| d.id == det.id) {
                    out.push(det);
                }
            }
        }
        out
    }
}

struct Component {
    pixels: Vec<(usize, usize)>,
    lo: (usize, usize),
    hi: (usize, usize),
}

/// 4-connected dark components that do not touch the image border.
fn dark_components(img: &BinaryImage) -> Vec<Component> {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || img.bits[start] != 0 {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let mut touches = false;
        let (mut lo, mut hi) = ((usize::MAX, usize::MAX), (0, 0));
        while let Some(k) = queue.pop_front() {
            let (u, v) = (k % w, k / w);
            pixels.push((u, v));
            lo = (lo.0.min(u), lo.1.min(v));
            hi = (hi.0.max(u), hi.1.max(v));
            if u == 0 || v == 0 || u + 1 == w || v + 1 == h {
                touches = true;
            }
            let mut push = |n: usize| {
                if !seen[n] && img.bits[n] == 0 {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if u > 0 {
                push(k - 1);
            }
            if u + 1 < w {
                push(k + 1);
            }
            if v > 0 {
                push(k - w);
            }
            if v + 1 < h {
                push(k + w);
            }
        }
        if !touches && pixels.len() >= 16 {
            out.push(Component { pixels, lo, hi });
        }
    }
    out
}

/// Quad in `(u, v)`, clockwise.
type Quad = [Vector2<f64>; 4];

fn shoelace(q: &[Vector2<f64>; 4]) -> f64 {
    0.5 * (0..4).map(|k| q[k].perp(&q[(k + 1) % 4])).sum::<f64>()
}

fn fit_quad(img: &BinaryImage, comp: &Component, params: &QuadParams) -> Option<Quad> {
    // local grid with a one-pixel ring; 1 = component, 2 = outside
    let (u0, v0) = (comp.lo.0 as i64 - 1, comp.lo.1 as i64 - 1);
    let lw = comp.hi.0 - comp.lo.0 + 3;
    let lh = comp.hi.1 - comp.lo.1 + 3;
    let mut local = vec![0u8; lw * lh];
    for &(u, v) in &comp.pixels {
        local[(v as i64 - v0) as usize * lw + (u as i64 - u0) as usize] = 1;
    }
    let mut queue = VecDeque::new();
    for k in 0..lw * lh {
        let (x, y) = (k % lw, k / lw);
        if (x == 0 || y == 0 || x + 1 == lw || y + 1 == lh) && local[k] == 0 {
            local[k] = 2;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (x, y) = (k % lw, k / lw);
        let nb = [
            (x > 0).then(|| k - 1),
            (x + 1 < lw).then(|| k + 1),
            (y > 0).then(|| k - lw),
            (y + 1 < lh).then(|| k + lw),
        ];
        for n in nb.into_iter().flatten() {
            if local[n] == 0 {
                local[n] = 2;
                queue.push_back(n);
            }
        }
    }

    let mut boundary: Vec<Vector2<f64>> = Vec::new();
    let mut edges: Vec<Vector2<f64>> = Vec::new();
    for &(u, v) in &comp.pixels {
        let (x, y) = ((u as i64 - u0) as usize, (v as i64 - v0) as usize);
        let mut on_boundary = false;
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nx, ny) = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
            if local[ny * lw + nx] == 2 {
                on_boundary = true;
                let (iu, iv) = (u as i64 + dx, v as i64 + dy);
                if img.in_bounds(iu, iv) && img.get(iu as usize, iv as usize) == 1 {
                    edges.push(Vector2::new(u as f64 + 0.5 * dx as f64, v as f64 + 0.5 * dy as f64));
                }
            }
        }
        if on_boundary {
            boundary.push(Vector2::new(u as f64, v as f64));
        }
    }
    if boundary.len() < 8 {
        return None;
    }

    let centroid = boundary.iter().sum::<Vector2<f64>>() / boundary.len() as f64;
    let far = |from: Vector2<f64>| {
        *boundary
            .iter()
            .max_by(|a, b| (*a - from).norm_squared().total_cmp(&(*b - from).norm_squared()))
            .unwrap()
    };
    let c0 = far(centroid);
    let c2 = far(c0);
    let diag = c2 - c0;
    if diag.norm() < params.min_side_px {
        return None;
    }
    let side_of = |p: &Vector2<f64>| diag.perp(&(p - c0));
    let c1 = *boundary.iter().max_by(|a, b| side_of(a).total_cmp(&side_of(b)))?;
    let c3 = *boundary.iter().min_by(|a, b| side_of(a).total_cmp(&side_of(b)))?;
    if side_of(&c1) <= 0.0 || side_of(&c3) >= 0.0 {
        return None;
    }
    let mut quad: Quad = [c0, c1, c2, c3];
    if shoelace(&quad) > 0.0 {
        quad = [c0, c3, c2, c1];
    }
    if !is_convex(&quad) {
        return None;
    }
    let sides: Vec<f64> = (0..4).map(|k| (quad[(k + 1) % 4] - quad[k]).norm()).collect();
    let mean_side = sides.iter().sum::<f64>() / 4.0;
    if sides.iter().any(|&s| s < params.min_side_px) {
        return None;
    }
    let tol = params.hull_tolerance_px + params.hull_rel_tolerance * mean_side;
    if boundary.iter().any(|p| nearest_side(&quad, p).1 > tol) {
        return None;
    }
    refine_corners(&quad, &edges, tol).filter(|r| {
        is_convex(r) && (0..4).all(|k| (r[k] - quad[k]).norm() <= tol + 2.0)
    })
}

fn is_convex(q: &Quad) -> bool {
    let s: Vec<f64> = (0..4)
        .map(|k| {
            let a = q[(k + 1) % 4] - q[k];
            let b = q[(k + 2) % 4] - q[(k + 1) % 4];
            a.perp(&b)
        })
        .collect();
    s.iter().all(|&x| x < 0.0) || s.iter().all(|&x| x > 0.0)
}

/// (side index, distance, position along the side in [0,1]).
fn nearest_side(q: &Quad, p: &Vector2<f64>) -> (usize, f64, f64) {
    (0..4)
        .map(|k| {
            let (a, b) = (q[k], q[(k + 1) % 4]);
            let d = b - a;
            let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (k, (a + d * t - p).norm(), t)
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
}

/// Total-least-squares line through each side's edge samples, corners at
/// the intersections of adjacent lines.
fn refine_corners(q: &Quad, samples: &[Vector2<f64>], tol: f64) -> Option<Quad> {
    let mut groups: [Vec<Vector2<f64>>; 4] = Default::default();
    for s in samples {
        let (k, d, t) = nearest_side(q, s);
        if d <= tol && (0.12..=0.88).contains(&t) {
            groups[k].push(*s);
        }
    }
    let mut lines = [(Vector2::zeros(), Vector2::zeros()); 4];
    for k in 0..4 {
        if groups[k].len() < 3 {
            return None;
        }
        let n = groups[k].len() as f64;
        let c = groups[k].iter().sum::<Vector2<f64>>() / n;
        let cov = groups[k].iter().fold(Matrix2::zeros(), |a, p| a + (p - c) * (p - c).transpose());
        let eig = SymmetricEigen::new(cov);
        let i = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
        lines[k] = (c, eig.eigenvectors.column(i).into_owned());
    }
    let mut out = *q;
    for k in 0..4 {
        let (p1, d1) = lines[(k + 3) % 4];
        let (p2, d2) = lines[k];
        let den = d1.perp(&d2);
        if den.abs() < 1e-9 {
            return None;
        }
        let t = (p2 - p1).perp(&d2) / den;
        out[k] = p1 + d1 * t;
    }
    Some(out)
}

/// Homography taking `src[k]` to `dst[k]`.
pub fn homography(src: &[Vector2<f64>; 4], dst: &[Vector2<f64>; 4]) -> Option<Matrix3<f64>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let (x, y) = (src[k].x, src[k].y);
        let (u, v) = (dst[k].x, dst[k].y);
        a.set_row(2 * k, &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(2 * k + 1, &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[2 * k] = u;
        b[2 * k + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Some(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

fn apply(h: &Matrix3<f64>, p: Vector2<f64>) -> Vector2<f64> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Normalized canonical corners of a unit tag.
pub(crate) const UNIT_CORNERS: [[f64; 2]; 4] = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]];

fn decode(img: &BinaryImage, quad: &Quad, family: &TagFamily, params: &QuadParams) -> Option<Detection2D> {
    let n = family.total_cells();
    let g = family.grid;
    let unit: [Vector2<f64>; 4] = UNIT_CORNERS.map(|c| Vector2::new(c[0], c[1]));

    let read = |h: &Matrix3<f64>| -> Vec<bool> {
        let step = 1.0 / n as f64;
        let mut cells = vec![false; n * n];
        for row in 0..n {
            for col in 0..n {
                let cx = -0.5 + (col as f64 + 0.5) * step;
                let cy = 0.5 - (row as f64 + 0.5) * step;
                let mut white = 0;
                for oy in [-0.25, 0.0, 0.25] {
                    for ox in [-0.25, 0.0, 0.25] {
                        let p = apply(h, Vector2::new(cx + ox * step, cy + oy * step));
                        let (u, v) = (p.x.round() as i64, p.y.round() as i64);
                        if img.in_bounds(u, v) && img.get(u as usize, v as usize) == 1 {
                            white += 1;
                        }
                    }
                }
                cells[row * n + col] = white >= 5;
            }
        }
        cells
    };

    let mut best: Option<(u32, usize, usize)> = None;
    let mut second = u32::MAX;
    let mut border_checked = false;
    for k in 0..4 {
        let dst: Quad = std::array::from_fn(|s| quad[(s + k) % 4]);
        let h = homography(&unit, &dst)?;
        let cells = read(&h);
        if !border_checked {
            let b = family.border;
            let errors = (0..n * n)
                .filter(|&i| {
                    let (r, c) = (i / n, i % n);
                    (r < b || c < b || r >= n - b || c >= n - b) && cells[i]
                })
                .count();
            if errors > params.max_border_errors {
                return None;
            }
            border_checked = true;
        }
        let code = (0..g * g).fold(0u64, |acc, i| {
            let (r, c) = (i / g + family.border, i % g + family.border);
            acc | (u64::from(cells[r * n + c]) << i)
        });
        for (id, &c) in family.codes.iter().enumerate() {
            let d = (c ^ code).count_ones();
            match best {
                Some((bd, _, _)) if d >= bd => second = second.min(d),
                _ => {
                    if let Some((bd, _, _)) = best {
                        second = second.min(bd);
                    }
                    best = Some((d, id, k));
                }
            }
        }
    }
    let (d, id, k) = best?;
    if d > params.max_hamming {
        return None;
    }
    Some(Detection2D {
        id,
        corners_px: std::array::from_fn(|s| quad[(s + k) % 4]),
        hamming: d,
        margin: second.saturating_sub(d),
    })
}
