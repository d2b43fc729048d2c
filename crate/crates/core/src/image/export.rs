use std::fmt::Write;

use super::{BinaryImage, Grid, IntensityImage};

/// ASCII PGM (P2) with the top row first. Rows are flipped because row
/// indices grow upward with inclination.
fn pgm(width: usize, height: usize, value: impl Fn(usize, usize) -> u8) -> String {
    let mut s = format!("P2\n{width} {height}\n255\n");
    for v in (0..height).rev() {
        let row: Vec<String> = (0..width).map(|u| value(u, v).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

impl IntensityImage {
    /// Intensity layer as PGM; unobserved pixels are written as 0.
    pub fn to_pgm(&self) -> String {
        pgm(self.width(), self.height(), |u, v| {
            let k = self.index(u, v);
            if self.observed[k] {
                self.intensity[k].round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
    }

    /// Range layer as whitespace-separated meters, top row first; 0 is unobserved.
    pub fn range_grid_text(&self) -> String {
        let mut s = String::new();
        for v in (0..self.height()).rev() {
            for u in 0..self.width() {
                if u > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{:.4}", self.range[self.index(u, v)]);
            }
            s.push('\n');
        }
        s
    }
}

impl BinaryImage {
    pub fn to_pgm(&self) -> String {
        pgm(self.width(), self.height(), |u, v| self.get(u, v) * 255)
    }
}
