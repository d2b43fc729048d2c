use super::{Detection2D, Detector2D};
use crate::image::IntensityImage;

pub const DEFAULT_SCOPE: usize = 256;
pub const DEFAULT_STEP: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct QueuedDetection {
    pub detection: Detection2D,
    /// Threshold at which the id entered the queue.
    pub lambda: f64,
}

/// Outcome of the threshold sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSearch {
    pub scope: usize,
    pub step: f64,
    pub queue: Vec<QueuedDetection>,
    /// Last threshold whose detection count reached the queue length.
    pub lambda_star: f64,
    /// Detector invocations actually performed (identical binarizations are
    /// reused).
    pub evaluations: usize,
}

impl ThresholdSearch {
    pub fn ids(&self) -> Vec<usize> {
        self.queue.iter().map(|q| q.detection.id).collect()
    }

    pub fn get(&self, id: usize) -> Option<&QueuedDetection> {
        self.queue.iter().find(|q| q.detection.id == id)
    }
}

/// Binarizes `raw` at `lambda`, optionally blurs, and detects.
pub fn detect_at(raw: &IntensityImage, detector: &dyn Detector2D, lambda: f64, blur: Option<f64>) -> Vec<Detection2D> {
    let mut bin = raw.binarize(lambda);
    if let Some(s) = blur {
        bin = bin.gaussian_blur(s);
    }
    detector.detect(&bin)
}

/// Sweeps `λ = step·i` for `i < scope`. Whenever a threshold yields at least
/// as many detections as the queue holds, its unseen ids are appended and
/// `λ*` is updated. The queue is never pruned. Thresholds with no detections
/// at all never move `λ*`, so a markerless image reports `λ* = 0`.
pub fn adaptive_detect(
    raw: &IntensityImage,
    detector: &dyn Detector2D,
    scope: usize,
    step: f64,
    blur: Option<f64>,
) -> ThresholdSearch {
    assert!(scope >= 1 && step > 0.0, "search needs scope >= 1 and step > 0");
    let levels = raw.distinct_intensities();
    let mut out = ThresholdSearch { scope, step, queue: Vec::new(), lambda_star: 0.0, evaluations: 0 };
    let mut cached: Option<(f64, Vec<Detection2D>)> = None;
    for i in 0..scope {
        let lambda = step * i as f64;
        // binarization only changes when an observed value lies in (λ_prev, λ]
        let reuse = match &cached {
            Some((prev, _)) => {
                let k = levels.partition_point(|&x| x <= *prev);
                !(k < levels.len() && levels[k] <= lambda)
            }
            None => false,
        };
        if !reuse {
            out.evaluations += 1;
            cached = Some((lambda, detect_at(raw, detector, lambda, blur)));
        } else if let Some(c) = cached.as_mut() {
            c.0 = lambda;
        }
        let dets = &cached.as_ref().expect("populated above").1;
        if !dets.is_empty() && dets.len() >= out.queue.len() {
            for d in dets {
                if out.get(d.id).is_none() {
                    out.queue.push(QueuedDetection { detection: d.clone(), lambda });
                }
            }
            out.lambda_star = lambda;
        }
    }
    out
}
