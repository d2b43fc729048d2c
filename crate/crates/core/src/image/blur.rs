/// Normalized 1D Gaussian with half-width `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let half = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-half..=half).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Separable Gaussian convolution of a row-major `w × h` grid with edge clamp.
pub fn blur_grid(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(src.len(), w * h);
    let kern = gaussian_kernel(sigma);
    let half = (kern.len() / 2) as i64;
    let clamp = |x: i64, n: usize| x.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for v in 0..h {
        let row = &src[v * w..(v + 1) * w];
        for u in 0..w {
            tmp[v * w + u] = kern
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * row[clamp(u as i64 + k as i64 - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            out[v * w + u] = kern
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * tmp[clamp(v as i64 + k as i64 - half, h) * w + u])
                .sum();
        }
    }
    out
}
