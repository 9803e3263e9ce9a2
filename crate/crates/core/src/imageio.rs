//! Grayscale image loading, dataset directory loading and the integral image.
//!
//! Supported formats are binary PGM (`P5`, maxval up to 255) and PNG. Colour
//! PNGs are reduced to gray with a fixed-point luma,
//! `(299 r + 587 g + 114 b + 500) / 1000`, so that extraction is
//! bit-reproducible across platforms.
//!
//! A dataset is a directory with one subdirectory per subject:
//!
//! ```text
//! root/
//!   s1/ 1.pgm 2.pgm ...
//!   s2/ 1.pgm 2.pgm ...
//! ```
//!
//! Labels are assigned in sorted subdirectory-name order; file names are
//! never parsed.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// An 8-bit grayscale raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if pixels.len() != width * height {
            return Err(Error::Geometry(format!(
                "pixel buffer has {} values, expected {}x{}={}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Integer luma used for every colour-to-gray conversion.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((r as u32 * 299 + g as u32 * 587 + b as u32 * 114 + 500) / 1000) as u8
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| e.context(format!("decoding {}", path.display())))
}

/// Decodes an in-memory PGM (P5) or PNG file.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(Error::Format("expected a P5 PGM or PNG signature".into()))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PGM header value out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("truncated PGM header".into())),
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} not supported")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Format("PGM raster shorter than header dimensions".into()))?;
    let pixels = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&v| ((v.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    GrayImage::new(width, height, pixels)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let png_err = |e: png::DecodingError| Error::Format(format!("PNG: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    let data = &buf[..frame.buffer_size()];
    let channels = frame.color_type.samples();
    let stride = frame.line_size;
    let mut pixels = Vec::with_capacity(width * height);
    for row in data.chunks(stride).take(height) {
        for px in row[..width * channels].chunks_exact(channels) {
            pixels.push(match frame.color_type {
                png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => px[0],
                png::ColorType::Rgb | png::ColorType::Rgba => luma(px[0], px[1], px[2]),
                png::ColorType::Indexed => {
                    return Err(Error::Format("unexpanded palette PNG".into()))
                }
            });
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Encodes an image as binary PGM.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Centre-crops to `crop_w`x`crop_h`, then bilinearly resizes to `out_w`x`out_h`.
///
/// Sampling uses pixel-centre alignment, `src = (dst + 0.5) * scale - 0.5`,
/// clamped to the crop, and results are rounded to the nearest integer.
pub fn crop_resize(
    img: &GrayImage,
    crop_w: usize,
    crop_h: usize,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage> {
    if crop_w == 0 || crop_h == 0 || out_w == 0 || out_h == 0 {
        return Err(Error::ZeroDimension);
    }
    if crop_w > img.width || crop_h > img.height {
        return Err(Error::Geometry(format!(
            "crop {crop_w}x{crop_h} larger than source {}x{}",
            img.width, img.height
        )));
    }
    let x_off = (img.width - crop_w) / 2;
    let y_off = (img.height - crop_h) / 2;
    let sx = crop_w as f64 / out_w as f64;
    let sy = crop_h as f64 / out_h as f64;

    let axis = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, src - lo as f64)
    };

    GrayImage::from_fn(out_w, out_h, |x, y| {
        let (x0, x1, tx) = axis(x, sx, crop_w);
        let (y0, y1, ty) = axis(y, sy, crop_h);
        let p = |xx: usize, yy: usize| img.get(x_off + xx, y_off + yy) as f64;
        let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
        let bottom = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
        (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8
    })
}

/// Summed-area table with a zero first row and column.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<u64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        let stride = img.width + 1;
        let mut sums = vec![0u64; stride * (img.height + 1)];
        for y in 0..img.height {
            let mut row = 0u64;
            for x in 0..img.width {
                row += img.get(x, y) as u64;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        IntegralImage {
            width: img.width,
            height: img.height,
            sums,
        }
    }

    /// Width of the source image.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Height of the source image.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry: sum of all pixels strictly above and left of `(x, y)`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.sums[y * (self.width + 1) + x]
    }

    /// Sum of the `w`x`h` rectangle whose top-left pixel is `(x0, y0)`.
    ///
    /// Panics if the rectangle leaves the image.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, w: usize, h: usize) -> u64 {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "rectangle ({x0},{y0},{w},{h}) outside {}x{} image",
            self.width,
            self.height
        );
        let (x1, y1) = (x0 + w, y0 + h);
        self.at(x1, y1) + self.at(x0, y0) - self.at(x1, y0) - self.at(x0, y1)
    }
}

pub fn integral(img: &GrayImage) -> IntegralImage {
    IntegralImage::new(img)
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: GrayImage,
    pub label: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Subject name for each label id.
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Sample indices of each subject, in sample order, indexed by label.
    pub fn indices_by_label(&self) -> Vec<Vec<usize>> {
        let classes = self
            .samples
            .iter()
            .map(|s| s.label + 1)
            .max()
            .unwrap_or(0)
            .max(self.label_names.len());
        let mut groups = vec![Vec::new(); classes];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.label].push(i);
        }
        groups
    }

    /// Applies `f` to every image, e.g. a crop/resize preprocessing step.
    pub fn map_images(&mut self, f: impl Fn(&GrayImage) -> Result<GrayImage>) -> Result<()> {
        for s in &mut self.samples {
            s.image = f(&s.image).map_err(|e| e.context(s.path.display().to_string()))?;
        }
        Ok(())
    }
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `root/<subject>/<image>` into a labelled dataset.
///
/// Subject directories without any `.pgm`/`.png` file are skipped with a
/// warning. A file with an image extension that fails to decode is an error.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let mut dataset = Dataset::default();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let files: Vec<_> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| is_image_file(p))
            .collect();
        if files.is_empty() {
            log::warn!("skipping {}: no loadable images", dir.display());
            continue;
        }
        let label = dataset.label_names.len();
        dataset
            .label_names
            .push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        for path in files {
            let image = load_image(&path)?;
            dataset.samples.push(Sample { image, label, path });
        }
    }
    if dataset.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no subject directory with images",
            root.display()
        )));
    }
    Ok(dataset)
}
