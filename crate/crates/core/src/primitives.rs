//! Shape primitives and per-cell matching.
//!
//! A cell is a square of `f`x`f` pixels split into four quadrant bins, ordered
//! top-left, top-right, bottom-left, bottom-right. Each of the 14 non-flat
//! primitives is a sign pattern over those bins; the 15th primitive is the
//! virtual "flat" pattern assigned when no template scores above the loose
//! factor.
//!
//! Scores are computed on mean-removed bin sums, `P'_i = P_i - mean(P)`, so a
//! constant cell scores exactly zero against every template. Templates whose
//! weights do not sum to zero would otherwise respond to plain brightness.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::imageio::IntegralImage;

pub const NUM_TEMPLATES: usize = 14;
/// Histogram bins per block: 14 templates plus flat.
pub const NUM_PRIMITIVES: usize = 15;
/// 1-based index of the flat primitive.
pub const FLAT: u8 = 15;

/// One signed 2x2 weight pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapePrimitiveTemplate {
    index: u8,
    weights: [i32; 4],
}

impl ShapePrimitiveTemplate {
    /// 1-based index, 1..=14.
    pub fn index(&self) -> u8 {
        self.index
    }

    /// Weights over the TL, TR, BL, BR bins.
    pub fn weights(&self) -> [i32; 4] {
        self.weights
    }

    /// Largest absolute weight.
    pub fn norm(&self) -> i32 {
        self.weights.iter().map(|w| w.abs()).max().unwrap_or(1)
    }

    pub fn negated(&self) -> [i32; 4] {
        self.weights.map(|w| -w)
    }
}

/// The 14 non-constant `{-1, +1}` patterns over four bins.
///
/// Patterns are enumerated by the 4-bit code `b1 b2 b3 b4` (b1 most
/// significant), where bit 0 means `+1` and bit 1 means `-1`; codes `0000`
/// and `1111` are skipped. The template index is the code itself, so the
/// complement of template `i` is template `15 - i`.
pub fn generate_templates() -> Vec<ShapePrimitiveTemplate> {
    (1u8..15)
        .map(|code| {
            let mut weights = [0i32; 4];
            for (bin, w) in weights.iter_mut().enumerate() {
                *w = if code >> (3 - bin) & 1 == 1 { -1 } else { 1 };
            }
            ShapePrimitiveTemplate {
                index: code,
                weights,
            }
        })
        .collect()
}

/// Shared read-only template set.
pub fn templates() -> &'static [ShapePrimitiveTemplate] {
    static TEMPLATES: OnceLock<Vec<ShapePrimitiveTemplate>> = OnceLock::new();
    TEMPLATES.get_or_init(generate_templates)
}

/// Gray-value sums of the four quadrants of a cell (TL, TR, BL, BR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinSums(pub [u64; 4]);

impl BinSums {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Quadrant sums of the `f`x`f` cell whose top-left pixel is `(x, y)`.
pub fn bin_sums(integral: &IntegralImage, x: usize, y: usize, f: usize) -> Result<BinSums> {
    if f < 2 || f % 2 != 0 {
        return Err(Error::Params(format!("cell size {f} must be even and >= 2")));
    }
    if x + f > integral.width() || y + f > integral.height() {
        return Err(Error::Geometry(format!(
            "cell at ({x},{y}) of size {f} outside {}x{} image",
            integral.width(),
            integral.height()
        )));
    }
    Ok(bin_sums_unchecked(integral, x, y, f))
}

#[inline]
pub(crate) fn bin_sums_unchecked(integral: &IntegralImage, x: usize, y: usize, f: usize) -> BinSums {
    let h = f / 2;
    let (xm, ym, x1, y1) = (x + h, y + h, x + f, y + f);
    // nine table lookups shared by the four quadrants
    let t = |xx, yy| integral.at(xx, yy);
    let (a, b, c) = (t(x, y), t(xm, y), t(x1, y));
    let (d, e, g) = (t(x, ym), t(xm, ym), t(x1, ym));
    let (i, j, k) = (t(x, y1), t(xm, y1), t(x1, y1));
    BinSums([
        e + a - b - d,
        g + b - c - e,
        j + d - e - i,
        k + e - g - j,
    ])
}

/// Matching score of every template against `sums`, in template order.
///
/// `S_j = (1 / n_j) * sum_i h_i^(j) * (P_i - mean(P))`. With unit weights every
/// score is a multiple of 1/2 and is represented exactly.
pub fn match_scores(sums: &BinSums, templates: &[ShapePrimitiveTemplate]) -> Vec<f64> {
    templates.iter().map(|t| score(sums, t)).collect()
}

/// `4 * P'_i = 4 * P_i - total` keeps the arithmetic in integers.
#[inline]
fn centered(sums: &BinSums) -> [i64; 4] {
    let total = sums.total() as i64;
    sums.0.map(|p| 4 * p as i64 - total)
}

#[inline]
fn score_centered(c: &[i64; 4], weights: &[i32; 4], norm: i32) -> f64 {
    let scaled: i64 = c.iter().zip(weights).map(|(&v, &h)| v * h as i64).sum();
    scaled as f64 / (4 * norm) as f64
}

#[inline]
fn score(sums: &BinSums, t: &ShapePrimitiveTemplate) -> f64 {
    score_centered(&centered(sums), &t.weights, t.norm())
}

/// Non-negative flat/non-flat threshold, `k * (f/2)^2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Epsilon(value))
        } else {
            Err(Error::Params(format!("loose factor must be >= 0, got {value}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// The primitive assigned to one cell and its histogram vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMatch {
    /// 1-based primitive index; [`FLAT`] for flat cells.
    pub primitive: u8,
    pub vote: f64,
    pub max_score: f64,
}

/// Picks the best-scoring template, or flat when no score exceeds `eps`.
///
/// Ties go to the lowest template index. Flat cells vote `eps - M + 1`.
pub fn select_primitive(scores: &[f64], eps: Epsilon) -> CellMatch {
    let (best, max_score) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, &s)| {
            if s > bm {
                (i, s)
            } else {
                (bi, bm)
            }
        });
    let eps = eps.value();
    if max_score > eps {
        CellMatch {
            primitive: best as u8 + 1,
            vote: max_score,
            max_score,
        }
    } else {
        CellMatch {
            primitive: FLAT,
            vote: eps - max_score + 1.0,
            max_score,
        }
    }
}

/// Scores and selects in one pass without allocating.
#[inline]
pub fn match_cell(sums: &BinSums, eps: Epsilon) -> CellMatch {
    static TABLE: OnceLock<[([i32; 4], i32); NUM_TEMPLATES]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let ts = templates();
        std::array::from_fn(|j| (ts[j].weights, ts[j].norm()))
    });
    let c = centered(sums);
    let mut scores = [0.0; NUM_TEMPLATES];
    for (s, (w, n)) in scores.iter_mut().zip(table) {
        *s = score_centered(&c, w, *n);
    }
    select_primitive(&scores, eps)
}
