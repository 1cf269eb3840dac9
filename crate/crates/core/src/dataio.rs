//! Image files, dataset manifests and patch sampling.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};
use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::rgb_to_ycbcr;
use crate::error::{Error, Result};
use crate::neural::train::{derive_seed, PatchSet};
use crate::plane::{ColorSpace, PlanarImage, Plane};

fn decode_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_dynamic(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .with_guessed_format()
        .map_err(|e| decode_err(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {other:?} (only PNG and PPM/PGM are supported)",
                path.display()
            )))
        }
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unrecognized image format",
                path.display()
            )))
        }
    }
    reader.decode().map_err(|e| decode_err(path, e))
}

fn to_plane(h: usize, w: usize, f: impl Fn(usize, usize) -> u8) -> Plane {
    Array2::from_shape_fn((h, w), |(r, c)| f(r, c) as f64 / 255.0)
}

/// Reads an 8-bit PNG or PPM/PGM as RGB with values in `[0, 1]`.
/// Grayscale files are replicated to three channels.
pub fn load_image(path: &Path) -> Result<PlanarImage> {
    let rgb = read_dynamic(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let planes = (0..3)
        .map(|ch| to_plane(h, w, |r, c| rgb.get_pixel(c as u32, r as u32)[ch]))
        .collect();
    PlanarImage::new(planes, ColorSpace::Rgb)
}

/// Reads a single-channel image; colour files are reduced to luma.
pub fn load_gray(path: &Path) -> Result<Plane> {
    let img = read_dynamic(path)?;
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            Ok(to_plane(h, w, |r, c| g.get_pixel(c as u32, r as u32)[0]))
        }
        _ => Ok(rgb_to_ycbcr(&load_image(path)?)?.y),
    }
}

fn quantize(v: f64) -> u8 {
    // f64::round rounds half away from zero.
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "ppm" | "pgm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: output must end in .png, .ppm or .pgm",
            path.display()
        ))),
    }
}

/// Writes an RGB or luma image as 8-bit PNG or binary PPM/PGM, chosen by
/// extension. Values are clamped to `[0, 1]` before quantization.
pub fn save_image(image: &PlanarImage, path: &Path) -> Result<()> {
    let format = format_for(path)?;
    let (h, w) = image.dim();
    let dynamic = match image.colorspace() {
        ColorSpace::Rgb => {
            let mut buf = RgbImage::new(w as u32, h as u32);
            for (x, y, px) in buf.enumerate_pixels_mut() {
                let (r, c) = (y as usize, x as usize);
                *px = image::Rgb([
                    quantize(image.channel(0)[[r, c]]),
                    quantize(image.channel(1)[[r, c]]),
                    quantize(image.channel(2)[[r, c]]),
                ]);
            }
            DynamicImage::ImageRgb8(buf)
        }
        ColorSpace::Luma => {
            let mut buf = GrayImage::new(w as u32, h as u32);
            for (x, y, px) in buf.enumerate_pixels_mut() {
                *px = image::Luma([quantize(image.channel(0)[[y as usize, x as usize]])]);
            }
            DynamicImage::ImageLuma8(buf)
        }
        ColorSpace::YCbCr => {
            return Err(Error::InvalidParameter(
                "convert YCbCr images to RGB before saving".into(),
            ))
        }
    };
    dynamic
        .save_with_format(path, format)
        .map_err(|e| decode_err(path, e))
}

/// Hazy/clear file pairs plus patch sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub pairs: Vec<(PathBuf, PathBuf)>,
    pub seed: u64,
    pub patch_size: usize,
    pub patches_per_image: usize,
}

impl DatasetManifest {
    /// Parses `hazy<TAB>clear` lines. Blank lines and lines starting with
    /// `#` are ignored; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(h), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Manifest {
                    line: i + 1,
                    message: "expected `hazy<TAB>clear`".into(),
                });
            };
            let (h, c) = (h.trim(), c.trim());
            if h.is_empty() || c.is_empty() {
                return Err(Error::Manifest {
                    line: i + 1,
                    message: "empty path".into(),
                });
            }
            pairs.push((base.join(h), base.join(c)));
        }
        Ok(pairs)
    }

    /// Reads a manifest file and checks that every listed path exists.
    pub fn load(path: &Path, seed: u64, patch_size: usize, patches_per_image: usize) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let pairs = Self::parse(&text, base)?;
        if pairs.is_empty() {
            return Err(Error::Manifest {
                line: 0,
                message: "manifest lists no pairs".into(),
            });
        }
        for (h, c) in &pairs {
            for p in [h, c] {
                if !p.exists() {
                    return Err(Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("{} does not exist", p.display()),
                    )));
                }
            }
        }
        Ok(Self {
            pairs,
            seed,
            patch_size,
            patches_per_image,
        })
    }

    /// Loads pair `i`, checking that both images share a size.
    pub fn load_pair(&self, i: usize) -> Result<(PlanarImage, PlanarImage)> {
        let (h, c) = &self.pairs[i];
        let hazy = load_image(h)?;
        let clear = load_image(c)?;
        if hazy.dim() != clear.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} is {:?} but {} is {:?}",
                h.display(),
                hazy.dim(),
                c.display(),
                clear.dim()
            )));
        }
        Ok((hazy, clear))
    }

    /// Luma patches from every pair, sampled with a per-pair seed.
    pub fn patch_set(&self) -> Result<PatchSet> {
        let mut set = PatchSet::default();
        for i in 0..self.pairs.len() {
            let (hazy, clear) = self.load_pair(i)?;
            let hy = rgb_to_ycbcr(&hazy)?.y;
            let cy = rgb_to_ycbcr(&clear)?.y;
            let seed = derive_seed(self.seed, 1000 + i as u64);
            for p in sample_patches(&hy, &cy, self.patch_size, self.patches_per_image, seed)? {
                set.push(p.hazy, p.clear);
            }
        }
        Ok(set)
    }
}

/// Permutation of `0..n` determined by `seed`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub top: usize,
    pub left: usize,
    pub hazy: Plane,
    pub clear: Plane,
}

/// Top-left corners of `count` random `size` x `size` windows.
pub fn patch_coordinates(height: usize, width: usize, size: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if size == 0 || height < size || width < size {
        return Err(Error::ShapeMismatch(format!(
            "cannot cut {size}x{size} patches from {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| (rng.gen_range(0..=height - size), rng.gen_range(0..=width - size)))
        .collect())
}

/// Crops the same random windows from both planes.
pub fn sample_patches(hazy: &Plane, clear: &Plane, size: usize, count: usize, seed: u64) -> Result<Vec<PatchPair>> {
    if hazy.dim() != clear.dim() {
        return Err(Error::ShapeMismatch(format!(
            "hazy {:?} vs clear {:?}",
            hazy.dim(),
            clear.dim()
        )));
    }
    let (h, w) = hazy.dim();
    Ok(patch_coordinates(h, w, size, count, seed)?
        .into_iter()
        .map(|(top, left)| {
            let win = s![top..top + size, left..left + size];
            PatchPair {
                top,
                left,
                hazy: hazy.slice(win).to_owned(),
                clear: clear.slice(win).to_owned(),
            }
        })
        .collect())
}
