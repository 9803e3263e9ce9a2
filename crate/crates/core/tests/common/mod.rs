//! Shared helpers for the integration tests: a direct per-pixel reference
//! extractor and small dataset builders.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sph::descriptor::SphParams;
use sph::imageio::{Dataset, GrayImage, Sample};

/// Every non-constant sign pattern over (TL, TR, BL, BR), enumerated with the
/// first bin varying slowest and `+1` before `-1`.
pub fn reference_templates() -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for a in [1.0, -1.0] {
        for b in [1.0, -1.0] {
            for c in [1.0, -1.0] {
                for d in [1.0, -1.0] {
                    let t = [a, b, c, d];
                    if t.iter().all(|&v| v == a) {
                        continue;
                    }
                    out.push(t);
                }
            }
        }
    }
    out
}

fn quadrant_sum(img: &GrayImage, x0: usize, y0: usize, side: usize) -> f64 {
    let mut s = 0.0;
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            s += img.get(x, y) as f64;
        }
    }
    s
}

/// `(primitive index 1..=15, vote)` of the `f`x`f` cell at `(x, y)`.
pub fn reference_cell(img: &GrayImage, x: usize, y: usize, f: usize, k: f64) -> (usize, f64) {
    let h = f / 2;
    let p = [
        quadrant_sum(img, x, y, h),
        quadrant_sum(img, x + h, y, h),
        quadrant_sum(img, x, y + h, h),
        quadrant_sum(img, x + h, y + h, h),
    ];
    let mean = (p[0] + p[1] + p[2] + p[3]) / 4.0;
    let mut best = (0, f64::NEG_INFINITY);
    for (j, t) in reference_templates().iter().enumerate() {
        let norm = t.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let s: f64 = (0..4).map(|i| t[i] * (p[i] - mean)).sum::<f64>() / norm;
        if s > best.1 {
            best = (j + 1, s);
        }
    }
    let eps = k * (h as f64) * (h as f64);
    if best.1 > eps {
        best
    } else {
        (15, eps - best.1 + 1.0)
    }
}

fn stride(window: usize, overlap: f64) -> usize {
    ((window as f64 * (1.0 - overlap)).floor() as usize).max(1)
}

fn offsets(extent: usize, window: usize, step: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut o = 0;
    while o + window <= extent {
        v.push(o);
        o += step;
    }
    v
}

/// Unnormalized histograms of every block, row-major.
pub fn reference_raw(img: &GrayImage, p: &SphParams) -> Vec<[f64; 15]> {
    let b = p.block_size;
    let f = p.cell_size;
    let bs = stride(b, p.block_overlap.fraction());
    let cs = stride(f, p.cell_overlap.fraction());
    let mut out = Vec::new();
    for by in offsets(img.height(), b, bs) {
        for bx in offsets(img.width(), b, bs) {
            let mut hist = [0.0; 15];
            for cy in offsets(b, f, cs) {
                for cx in offsets(b, f, cs) {
                    let (j, v) = reference_cell(img, bx + cx, by + cy, f, p.k);
                    hist[j - 1] += v;
                }
            }
            out.push(hist);
        }
    }
    out
}

/// Normalized, concatenated descriptor over all scales.
pub fn reference_descriptor(img: &GrayImage, scales: &[SphParams]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in scales {
        for h in reference_raw(img, p) {
            let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.extend(h.iter().map(|v| v / n));
        }
    }
    out
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    let pixels = (0..w * h).map(|_| rng.gen::<u8>()).collect();
    GrayImage::new(w, h, pixels).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dataset from `(label, image)` pairs, labels dense from 0.
pub fn dataset_from(items: Vec<(usize, GrayImage)>) -> Dataset {
    let classes = items.iter().map(|(l, _)| l + 1).max().unwrap_or(0);
    let mut ds = Dataset {
        samples: Vec::new(),
        label_names: (0..classes).map(|c| format!("s{}", c + 1)).collect(),
    };
    for (i, (label, image)) in items.into_iter().enumerate() {
        ds.samples.push(Sample {
            image,
            label,
            path: format!("s{}/{i}.pgm", label + 1).into(),
        });
    }
    ds
}
