//! SPH and multi-scale SPH extraction.
//!
//! An image is tiled into square blocks; each block is tiled into cells. Every
//! cell is matched to one of the 15 shape primitives and votes into its
//! block's 15-bin histogram. Each block histogram is L2-normalized and the
//! histograms are concatenated block-row-major. Partial blocks and cells at the
//! image border are dropped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{integral, GrayImage, IntegralImage};
use crate::primitives::{bin_sums_unchecked, match_cell, CellMatch, Epsilon, NUM_PRIMITIVES};

/// Overlap between neighbouring windows, in quarters of the window size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "OverlapRepr", into = "String")]
pub struct Overlap(u8);

impl Overlap {
    pub const NONE: Overlap = Overlap(0);
    pub const QUARTER: Overlap = Overlap(1);
    pub const HALF: Overlap = Overlap(2);
    pub const THREE_QUARTERS: Overlap = Overlap(3);

    pub fn quarters(&self) -> u8 {
        self.0
    }

    pub fn fraction(&self) -> f64 {
        self.0 as f64 / 4.0
    }

    /// `floor(window * (1 - overlap))`, at least 1.
    pub fn stride(&self, window: usize) -> usize {
        (window * (4 - self.0 as usize) / 4).max(1)
    }

    /// True when `window * (1 - overlap)` is a whole number of pixels.
    pub fn divides(&self, window: usize) -> bool {
        window * (4 - self.0 as usize) % 4 == 0
    }
}

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "0",
            1 => "1/4",
            2 => "1/2",
            _ => "3/4",
        })
    }
}

impl FromStr for Overlap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" | "0.0" | "none" => Ok(Overlap::NONE),
            "1/4" | "0.25" => Ok(Overlap::QUARTER),
            "1/2" | "0.5" => Ok(Overlap::HALF),
            "3/4" | "0.75" => Ok(Overlap::THREE_QUARTERS),
            other => Err(Error::Params(format!(
                "overlap must be one of 0, 1/4, 1/2, 3/4; got {other:?}"
            ))),
        }
    }
}

impl TryFrom<f64> for Overlap {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        let q = v * 4.0;
        if (0.0..=3.0).contains(&q) && q.fract() == 0.0 {
            Ok(Overlap(q as u8))
        } else {
            Err(Error::Params(format!(
                "overlap must be one of 0, 0.25, 0.5, 0.75; got {v}"
            )))
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OverlapRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<OverlapRepr> for Overlap {
    type Error = Error;

    fn try_from(r: OverlapRepr) -> Result<Self> {
        match r {
            OverlapRepr::Number(v) => Overlap::try_from(v),
            OverlapRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Overlap> for String {
    fn from(o: Overlap) -> String {
        o.to_string()
    }
}

/// Block/cell geometry and loose-factor coefficient for one SPH scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphParams {
    pub block_size: usize,
    pub block_overlap: Overlap,
    pub cell_size: usize,
    pub cell_overlap: Overlap,
    pub k: f64,
}

impl Default for SphParams {
    fn default() -> Self {
        SphParams::new(8, Overlap::HALF, 2, Overlap::HALF, 1.0)
    }
}

impl SphParams {
    pub const fn new(
        block_size: usize,
        block_overlap: Overlap,
        cell_size: usize,
        cell_overlap: Overlap,
        k: f64,
    ) -> Self {
        SphParams {
            block_size,
            block_overlap,
            cell_size,
            cell_overlap,
            k,
        }
    }

    /// Three-scale configuration: (8, 2), (16, 4), (32, 8), all with 1/2
    /// overlaps and `k = 1`.
    pub fn msph_default() -> Vec<SphParams> {
        [(8, 2), (16, 4), (32, 8)]
            .into_iter()
            .map(|(b, f)| SphParams::new(b, Overlap::HALF, f, Overlap::HALF, 1.0))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.cell_size;
        if f < 2 || f % 2 != 0 {
            return Err(Error::Params(format!("cell size {f} must be even and >= 2")));
        }
        if f > self.block_size {
            return Err(Error::Params(format!(
                "cell size {f} exceeds block size {}",
                self.block_size
            )));
        }
        if !matches!(self.cell_overlap, Overlap::NONE | Overlap::HALF) {
            return Err(Error::Params(format!(
                "cell overlap must be 0 or 1/2, got {}",
                self.cell_overlap
            )));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::Params(format!("k must be >= 0, got {}", self.k)));
        }
        Ok(())
    }

    pub fn block_stride(&self) -> usize {
        self.block_overlap.stride(self.block_size)
    }

    pub fn cell_stride(&self) -> usize {
        self.cell_overlap.stride(self.cell_size)
    }

    pub fn epsilon(&self) -> Result<Epsilon> {
        epsilon(self.k, self.cell_size)
    }

    /// Descriptor length for a `width`x`height` image.
    pub fn dims(&self, width: usize, height: usize) -> Result<usize> {
        let (bx, by) = self.block_grid(width, height)?;
        Ok(bx.len() * by.len() * NUM_PRIMITIVES)
    }

    fn block_grid(&self, width: usize, height: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate()?;
        Ok((
            grid_positions(width, self.block_size, self.block_stride())?,
            grid_positions(height, self.block_size, self.block_stride())?,
        ))
    }
}

/// Compact form used in descriptor-file headers: `b=8,bo=1/2,f=2,fo=1/2,k=1`.
impl fmt::Display for SphParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "b={},bo={},f={},fo={},k={}",
            self.block_size, self.block_overlap, self.cell_size, self.cell_overlap, self.k
        )
    }
}

impl FromStr for SphParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = SphParams::default();
        for field in s.split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Params(format!("malformed scale field {field:?}")))?;
            let bad = |_| Error::Params(format!("bad value in {field:?}"));
            match key.trim() {
                "b" => p.block_size = value.trim().parse().map_err(bad)?,
                "bo" => p.block_overlap = value.parse()?,
                "f" => p.cell_size = value.trim().parse().map_err(bad)?,
                "fo" => p.cell_overlap = value.parse()?,
                "k" => {
                    p.k = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::Params(format!("bad value in {field:?}")))?
                }
                other => return Err(Error::Params(format!("unknown scale key {other:?}"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Loose factor for cell size `f`: `k * (f/2)^2`.
pub fn epsilon(k: f64, f: usize) -> Result<Epsilon> {
    if f < 2 || f % 2 != 0 {
        return Err(Error::Params(format!("cell size {f} must be even and >= 2")));
    }
    if k < 0.0 {
        return Err(Error::Params(format!("k must be >= 0, got {k}")));
    }
    let half = (f / 2) as f64;
    Epsilon::new(k * half * half)
}

/// Window offsets `0, stride, 2*stride, ...` with `offset + window <= extent`.
pub fn grid_positions(extent: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window == 0 || stride == 0 {
        return Err(Error::Geometry("window and stride must be positive".into()));
    }
    if window > extent {
        return Err(Error::Geometry(format!(
            "window {window} larger than extent {extent}"
        )));
    }
    Ok((0..=extent - window).step_by(stride).collect())
}

pub type BlockHistogram = [f64; NUM_PRIMITIVES];

/// Accumulates the unnormalized histogram of the block at `(block_x, block_y)`.
pub fn block_votes(
    integral: &IntegralImage,
    block_x: usize,
    block_y: usize,
    params: &SphParams,
    eps: Epsilon,
) -> Result<BlockHistogram> {
    params.validate()?;
    let b = params.block_size;
    if block_x + b > integral.width() || block_y + b > integral.height() {
        return Err(Error::Geometry(format!(
            "block at ({block_x},{block_y}) of size {b} outside {}x{} image",
            integral.width(),
            integral.height()
        )));
    }
    let cells = grid_positions(b, params.cell_size, params.cell_stride())?;
    let mut hist = [0.0; NUM_PRIMITIVES];
    for &cy in &cells {
        for &cx in &cells {
            let sums = bin_sums_unchecked(integral, block_x + cx, block_y + cy, params.cell_size);
            let m = match_cell(&sums, eps);
            hist[m.primitive as usize - 1] += m.vote;
        }
    }
    Ok(hist)
}

/// The L2-normalized histogram of one block.
pub fn block_histogram(
    integral: &IntegralImage,
    block_x: usize,
    block_y: usize,
    params: &SphParams,
    eps: Epsilon,
) -> Result<BlockHistogram> {
    let mut h = block_votes(integral, block_x, block_y, params, eps)?;
    normalize(&mut h);
    Ok(h)
}

/// Scales `h` to unit L2 norm. Votes are strictly positive, so a block
/// histogram is never all zero.
pub fn normalize(h: &mut [f64]) {
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        h.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Position of one scale's blocks inside a descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLayout {
    pub params: SphParams,
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Index of this scale's first value.
    pub offset: usize,
}

impl ScaleLayout {
    pub fn len(&self) -> usize {
        self.blocks_x * self.blocks_y * NUM_PRIMITIVES
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Concatenated normalized block histograms, 15 bins innermost, blocks
/// row-major, scales in the order they were requested.
#[derive(Debug, Clone, PartialEq)]
pub struct SphDescriptor {
    pub values: Vec<f64>,
    pub scales: Vec<ScaleLayout>,
    pub image_width: usize,
    pub image_height: usize,
}

impl SphDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The 15-bin histogram of block `index` (counting across all scales).
    pub fn block(&self, index: usize) -> &[f64] {
        &self.values[index * NUM_PRIMITIVES..(index + 1) * NUM_PRIMITIVES]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(NUM_PRIMITIVES)
    }
}

/// Per-image cell-match memo shared by overlapping blocks.
struct CellCache<'a> {
    integral: &'a IntegralImage,
    f: usize,
    eps: Epsilon,
    cols: usize,
    slots: Vec<Option<CellMatch>>,
}

impl<'a> CellCache<'a> {
    fn new(integral: &'a IntegralImage, f: usize, eps: Epsilon) -> Self {
        let cols = integral.width() + 1 - f;
        let rows = integral.height() + 1 - f;
        CellCache {
            integral,
            f,
            eps,
            cols,
            slots: vec![None; cols * rows],
        }
    }

    #[inline]
    fn get(&mut self, x: usize, y: usize) -> CellMatch {
        let slot = &mut self.slots[y * self.cols + x];
        *slot.get_or_insert_with(|| {
            match_cell(&bin_sums_unchecked(self.integral, x, y, self.f), self.eps)
        })
    }
}

/// Unnormalized block histograms of one scale, blocks row-major.
pub fn raw_block_histograms(img: &GrayImage, params: &SphParams) -> Result<Vec<BlockHistogram>> {
    let ii = integral(img);
    raw_block_histograms_with(&ii, params).map(|(h, _, _)| h)
}

fn raw_block_histograms_with(
    ii: &IntegralImage,
    params: &SphParams,
) -> Result<(Vec<BlockHistogram>, usize, usize)> {
    if ii.width() < params.block_size || ii.height() < params.block_size {
        return Err(Error::Geometry(format!(
            "{}x{} image smaller than one {}x{} block",
            ii.width(),
            ii.height(),
            params.block_size,
            params.block_size
        )));
    }
    let (xs, ys) = params.block_grid(ii.width(), ii.height())?;
    let eps = params.epsilon()?;
    let cells = grid_positions(params.block_size, params.cell_size, params.cell_stride())?;
    let mut cache = CellCache::new(ii, params.cell_size, eps);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &by in &ys {
        for &bx in &xs {
            let mut hist = [0.0; NUM_PRIMITIVES];
            for &cy in &cells {
                for &cx in &cells {
                    let m = cache.get(bx + cx, by + cy);
                    hist[m.primitive as usize - 1] += m.vote;
                }
            }
            out.push(hist);
        }
    }
    Ok((out, xs.len(), ys.len()))
}

pub fn extract_sph(img: &GrayImage, params: &SphParams) -> Result<SphDescriptor> {
    extract_msph(img, std::slice::from_ref(params))
}

/// Extracts every scale from the same image and concatenates them in order.
pub fn extract_msph(img: &GrayImage, scales: &[SphParams]) -> Result<SphDescriptor> {
    if scales.is_empty() {
        return Err(Error::Params("at least one scale is required".into()));
    }
    let ii = integral(img);
    let mut values = Vec::new();
    let mut layouts = Vec::with_capacity(scales.len());
    for params in scales {
        let (hists, blocks_x, blocks_y) = raw_block_histograms_with(&ii, params)?;
        layouts.push(ScaleLayout {
            params: *params,
            blocks_x,
            blocks_y,
            offset: values.len(),
        });
        for mut h in hists {
            normalize(&mut h);
            values.extend_from_slice(&h);
        }
    }
    Ok(SphDescriptor {
        values,
        scales: layouts,
        image_width: img.width(),
        image_height: img.height(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::FLAT;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn epsilon_values() {
        assert_eq!(epsilon(1.0, 2).unwrap().value(), 1.0);
        assert_eq!(epsilon(1.0, 4).unwrap().value(), 4.0);
        assert_eq!(epsilon(0.0, 8).unwrap().value(), 0.0);
        assert!(epsilon(-1.0, 2).is_err());
        assert!(epsilon(1.0, 3).is_err());
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid_positions(32, 8, 4).unwrap(), vec![0, 4, 8, 12, 16, 20, 24]);
        assert_eq!(grid_positions(32, 32, 5).unwrap(), vec![0]);
        assert_eq!(grid_positions(50, 8, 4).unwrap().len(), 11);
        assert!(grid_positions(7, 8, 4).is_err());
    }

    #[test]
    fn overlap_strides() {
        assert_eq!(Overlap::HALF.stride(8), 4);
        assert_eq!(Overlap::NONE.stride(6), 6);
        assert_eq!(Overlap::THREE_QUARTERS.stride(4), 1);
        // non-integral strides round down
        assert_eq!(Overlap::QUARTER.stride(6), 4);
        assert_eq!(Overlap::THREE_QUARTERS.stride(10), 2);
        assert!(!Overlap::QUARTER.divides(6));
        assert!(Overlap::QUARTER.divides(8));
    }

    #[test]
    fn overlap_parsing() {
        assert_eq!("1/2".parse::<Overlap>().unwrap(), Overlap::HALF);
        assert_eq!(Overlap::try_from(0.75).unwrap(), Overlap::THREE_QUARTERS);
        assert!("1/3".parse::<Overlap>().is_err());
        assert!(Overlap::try_from(0.3).is_err());
    }

    #[test]
    fn params_display_roundtrip() {
        for p in SphParams::msph_default() {
            assert_eq!(p.to_string().parse::<SphParams>().unwrap(), p);
        }
    }

    #[test]
    fn params_validation() {
        let ok = SphParams::default();
        assert!(ok.validate().is_ok());
        assert!(SphParams { cell_size: 3, ..ok }.validate().is_err());
        assert!(SphParams { cell_size: 10, ..ok }.validate().is_err());
        assert!(SphParams { cell_overlap: Overlap::QUARTER, ..ok }.validate().is_err());
        assert!(SphParams { k: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn constant_block_is_pure_flat() {
        let img = GrayImage::filled(8, 8, 93).unwrap();
        let p = SphParams::default();
        let h = block_histogram(&integral(&img), 0, 0, &p, p.epsilon().unwrap()).unwrap();
        let mut expected = [0.0; 15];
        expected[FLAT as usize - 1] = 1.0;
        assert_eq!(h, expected);
        // 49 flat cells voting eps - 0 + 1 = 2
        let raw = block_votes(&integral(&img), 0, 0, &p, p.epsilon().unwrap()).unwrap();
        assert_eq!(raw[14], 98.0);
    }

    #[test]
    fn block_histogram_has_unit_norm() {
        let img = random_image(20, 20, 3);
        let ii = integral(&img);
        let p = SphParams::default();
        for by in [0, 5, 12] {
            for bx in [0, 7, 12] {
                let h = block_histogram(&ii, bx, by, &p, p.epsilon().unwrap()).unwrap();
                let n: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
        assert!(block_votes(&ii, 13, 0, &p, p.epsilon().unwrap()).is_err());
    }

    #[test]
    fn cached_extraction_matches_per_block_path() {
        let img = random_image(24, 20, 9);
        let ii = integral(&img);
        for p in [
            SphParams::default(),
            SphParams::new(6, Overlap::QUARTER, 2, Overlap::NONE, 0.5),
            SphParams::new(8, Overlap::THREE_QUARTERS, 4, Overlap::HALF, 2.0),
        ] {
            let raw = raw_block_histograms(&img, &p).unwrap();
            let xs = grid_positions(24, p.block_size, p.block_stride()).unwrap();
            let ys = grid_positions(20, p.block_size, p.block_stride()).unwrap();
            let mut i = 0;
            for &y in &ys {
                for &x in &xs {
                    let direct = block_votes(&ii, x, y, &p, p.epsilon().unwrap()).unwrap();
                    assert_eq!(raw[i], direct);
                    i += 1;
                }
            }
        }
    }

    #[test]
    fn descriptor_dimensions() {
        let sph = SphParams::default();
        let d = extract_sph(&random_image(32, 32, 1), &sph).unwrap();
        assert_eq!(d.len(), 735);
        assert_eq!(extract_sph(&random_image(50, 40, 1), &sph).unwrap().len(), 1485);
        let m = extract_msph(&random_image(32, 32, 1), &SphParams::msph_default()).unwrap();
        assert_eq!(m.len(), 885);
        assert_eq!(
            m.scales.iter().map(|s| s.len()).collect::<Vec<_>>(),
            vec![735, 135, 15]
        );
        assert_eq!(&m.values[..735], &d.values[..]);
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = GrayImage::filled(7, 30, 1).unwrap();
        assert!(extract_sph(&img, &SphParams::default()).is_err());
        assert!(extract_msph(&random_image(20, 20, 0), &SphParams::msph_default()).is_err());
        assert!(extract_msph(&random_image(20, 20, 0), &[]).is_err());
    }

    #[test]
    fn msph_segment_permutation() {
        let img = random_image(32, 32, 5);
        let scales = SphParams::msph_default();
        let fwd = extract_msph(&img, &scales).unwrap();
        let rev: Vec<_> = scales.iter().rev().cloned().collect();
        let bwd = extract_msph(&img, &rev).unwrap();
        let seg = |d: &SphDescriptor, i: usize| {
            let s = &d.scales[i];
            d.values[s.offset..s.offset + s.len()].to_vec()
        };
        for i in 0..3 {
            assert_eq!(seg(&fwd, i), seg(&bwd, 2 - i));
        }
    }

    #[test]
    fn shifted_constant_image_same_descriptor() {
        let a = GrayImage::filled(32, 32, 40).unwrap();
        let b = GrayImage::filled(32, 32, 40).unwrap();
        assert_eq!(
            extract_sph(&a, &SphParams::default()).unwrap(),
            extract_sph(&b, &SphParams::default()).unwrap()
        );
    }

    fn geometry() -> impl Strategy<Value = (usize, usize, SphParams)> {
        (
            prop::sample::select(vec![4usize, 6, 8, 10, 16]),
            0u8..4,
            prop::sample::select(vec![2usize, 4]),
            prop::bool::ANY,
            10usize..60,
            10usize..60,
        )
            .prop_filter_map("cell larger than block", |(b, bo, f, fo, w, h)| {
                (f <= b && b <= w.min(h)).then(|| {
                    let fo = if fo { Overlap::HALF } else { Overlap::NONE };
                    (w, h, SphParams::new(b, Overlap(bo), f, fo, 1.0))
                })
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dims_match_enumeration((w, h, p) in geometry()) {
            let stride = p.block_stride();
            let count = |extent: usize| {
                let mut n = 0;
                let mut off = 0;
                while off + p.block_size <= extent {
                    n += 1;
                    off += stride;
                }
                n
            };
            let expected = count(w) * count(h) * 15;
            prop_assert_eq!(p.dims(w, h).unwrap(), expected);
            let img = GrayImage::filled(w, h, 0).unwrap();
            prop_assert_eq!(extract_sph(&img, &p).unwrap().len(), expected);
        }

        #[test]
        fn blocks_unit_norm_nonnegative((w, h, p) in geometry(), seed in any::<u64>()) {
            let d = extract_sph(&random_image(w, h, seed), &p).unwrap();
            for block in d.blocks() {
                let n: f64 = block.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-12);
                prop_assert!(block.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
