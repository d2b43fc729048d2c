//! Minimal SVG plots.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Top-down (x, y) positions of truth and estimate, one marker per scan.
pub fn trajectory_svg(truth: &[[f64; 2]], estimate: &[Option<[f64; 2]>]) -> String {
    let all: Vec<[f64; 2]> = truth.iter().copied().chain(estimate.iter().flatten().copied()).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &all {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-3);
    let scale = ((W - 2.0 * PAD).min(H - 2.0 * PAD)) / span;
    let map = |p: [f64; 2]| (PAD + (p[0] - lo[0]) * scale, H - PAD - (p[1] - lo[1]) * scale);
    let mut s = header("scan positions (top view)");
    let line = |pts: Vec<(f64, f64)>, color: &str| {
        let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        format!("<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>\n", d.join(" "))
    };
    s += &line(truth.iter().map(|p| map(*p)).collect(), "#888");
    for (i, p) in truth.iter().enumerate() {
        let (x, y) = map(*p);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"none\" stroke=\"black\"/>");
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">{i}</text>", x + 7.0, y - 7.0);
    }
    for p in estimate.iter().flatten() {
        let (x, y) = map(*p);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"#c33\"/>");
    }
    let _ = writeln!(s, "<text x=\"{PAD}\" y=\"{}\">open: truth, filled: estimate</text>", H - 12.0);
    s.push_str("</svg>\n");
    s
}

/// Histogram of `values` in `bins` equal bins from 0 to the maximum.
pub fn histogram_svg(values: &[f64], bins: usize, title: &str, unit: &str) -> String {
    let bins = bins.max(1);
    let max = values.iter().copied().fold(0.0, f64::max).max(1e-12);
    let mut counts = vec![0usize; bins];
    for v in values {
        counts[(((v / max) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (W - 2.0 * PAD) / bins as f64;
    let mut s = header(title);
    for (k, c) in counts.iter().enumerate() {
        let h = (H - 2.0 * PAD) * *c as f64 / top;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"#4a7\" stroke=\"white\"/>",
            PAD + k as f64 * bw,
            H - PAD - h,
            bw
        );
    }
    let _ = writeln!(s, "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>", H - PAD, W - PAD);
    let _ = writeln!(s, "<text x=\"{PAD}\" y=\"{}\">0</text>", H - PAD + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{max:.3e} {}</text>", W - PAD, H - PAD + 14.0, escape(unit));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">max count {top}</text>", PAD - 4.0, PAD);
    s.push_str("</svg>\n");
    s
}
