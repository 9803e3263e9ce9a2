//! Deterministic synthetic face-like dataset.
//!
//! Every class is a binary edge layout: pixels are bright or dark according to
//! the parity of how many rectangles cover them. All classes share a set of
//! "structure" rectangles and add a few of their own, so classes differ only
//! locally. Each sample is a window of the class canvas shifted by up to
//! `jitter` pixels in each direction, plus uniform additive noise of amplitude
//! `noise`. The generator uses fixed seeds; two runs with equal specs give
//! byte-identical images.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{save_pgm, Dataset, GrayImage, Sample};

const SEED: u64 = 0x5348_4150_4553; // "SHAPES"
const DARK: i32 = 64;
const BRIGHT: i32 = 192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples: usize,
    /// Maximum translation in pixels along each axis.
    pub jitter: usize,
    /// Amplitude of uniform additive noise.
    pub noise: u8,
    pub width: usize,
    pub height: usize,
    /// Rectangles common to every class.
    pub shared_rects: usize,
    /// Rectangles specific to each class.
    pub class_rects: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 40,
            samples: 10,
            jitter: 1,
            noise: 0,
            width: 32,
            height: 32,
            shared_rects: 8,
            class_rects: 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn rng_for(class: Option<usize>, sample: Option<usize>) -> ChaCha8Rng {
    let c = class.map_or(0, |c| c as u64 + 1);
    let s = sample.map_or(0, |s| s as u64 + 1);
    ChaCha8Rng::seed_from_u64(SEED ^ (c << 24) ^ (s << 48) ^ s)
}

fn random_rects(rng: &mut ChaCha8Rng, count: usize, w: usize, h: usize) -> Vec<Rect> {
    (0..count)
        .map(|_| {
            let (a, b) = (rng.gen_range(0..=w), rng.gen_range(0..=w));
            let (c, d) = (rng.gen_range(0..=h), rng.gen_range(0..=h));
            Rect {
                x0: a.min(b),
                x1: a.max(b),
                y0: c.min(d),
                y1: c.max(d),
            }
        })
        .collect()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.samples < 2 {
            return Err(Error::Params(format!(
                "need at least 2 classes and 2 samples, got {} and {}",
                self.classes, self.samples
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(())
    }

    fn canvas_dims(&self) -> (usize, usize) {
        (self.width + 2 * self.jitter, self.height + 2 * self.jitter)
    }

    /// Binary class canvas, `jitter` pixels larger than the output on each side.
    fn class_canvas(&self, class: usize) -> Vec<bool> {
        let (cw, ch) = self.canvas_dims();
        let mut rects = random_rects(&mut rng_for(None, None), self.shared_rects, cw, ch);
        rects.extend(random_rects(&mut rng_for(Some(class), None), self.class_rects, cw, ch));
        let mut canvas = vec![false; cw * ch];
        for r in rects {
            for y in r.y0..r.y1 {
                for px in &mut canvas[y * cw + r.x0..y * cw + r.x1] {
                    *px = !*px;
                }
            }
        }
        canvas
    }

    pub fn sample_image(&self, class: usize, sample: usize) -> Result<GrayImage> {
        self.render(&self.class_canvas(class), class, sample)
    }

    fn render(&self, canvas: &[bool], class: usize, sample: usize) -> Result<GrayImage> {
        let (cw, _) = self.canvas_dims();
        let mut rng = rng_for(Some(class), Some(sample));
        let j = self.jitter as i64;
        let dx = (rng.gen_range(-j..=j) + j) as usize;
        let dy = (rng.gen_range(-j..=j) + j) as usize;
        let noise = self.noise as i32;
        GrayImage::new(
            self.width,
            self.height,
            (0..self.width * self.height)
                .map(|i| {
                    let (x, y) = (i % self.width, i / self.width);
                    let base = if canvas[(y + dy) * cw + x + dx] { BRIGHT } else { DARK };
                    let n = if noise > 0 { rng.gen_range(-noise..=noise) } else { 0 };
                    (base + n).clamp(0, 255) as u8
                })
                .collect(),
        )
    }

    fn subject_name(&self, class: usize) -> String {
        let width = self.classes.to_string().len().max(2);
        format!("s{:0width$}", class + 1)
    }

    fn file_name(&self, sample: usize) -> String {
        let width = self.samples.to_string().len().max(2);
        format!("{:0width$}.pgm", sample + 1)
    }

    /// Builds the dataset in memory, with the paths `write_dataset` would use.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut dataset = Dataset::default();
        for class in 0..self.classes {
            let canvas = self.class_canvas(class);
            let subject = self.subject_name(class);
            for sample in 0..self.samples {
                dataset.samples.push(Sample {
                    image: self.render(&canvas, class, sample)?,
                    label: class,
                    path: PathBuf::from(&subject).join(self.file_name(sample)),
                });
            }
            dataset.label_names.push(subject);
        }
        Ok(dataset)
    }

    /// Writes `dir/<subject>/<sample>.pgm`. Refuses to write into a
    /// non-empty directory.
    pub fn write_dataset(&self, dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        if dir.exists() {
            let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            if entries.next().is_some() {
                return Err(Error::Config(format!(
                    "output directory {} exists and is not empty",
                    dir.display()
                )));
            }
        }
        let mut dataset = self.generate()?;
        for s in &mut dataset.samples {
            let path = dir.join(&s.path);
            let parent = path.parent().expect("sample path has a subject directory");
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            save_pgm(&s.image, &path)?;
            s.path = path;
        }
        Ok(dataset)
    }
}
