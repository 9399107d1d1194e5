//! Image decoding and preprocessing.
//!
//! Every input is decoded to 8-bit RGB (grayscale replicated, alpha
//! dropped), resized with bilinear interpolation in the 8-bit domain, and
//! only then scaled into `[0,1]`. Quantizing back to 8 bits before scaling
//! makes a load → save → load round trip bit-exact for lossless formats.

use std::path::{Path, PathBuf};

use image::RgbImage;
use ndarray::Array3;

use super::DatasetError;

/// Square RGB image with values in `[0,1]`, laid out H×W×C.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pixels: Array3<f32>,
}

impl ImageTensor {
    pub fn from_pixels(pixels: Array3<f32>) -> Self {
        Self { pixels }
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[2]
    }

    /// Quantize back to 8-bit RGB and write a PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), DatasetError> {
        let (h, w) = (self.height(), self.width());
        let mut img = RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = image::Rgb([
                    quantize(self.pixels[[y, x, 0]] * 255.0),
                    quantize(self.pixels[[y, x, 1]] * 255.0),
                    quantize(self.pixels[[y, x, 2]] * 255.0),
                ]);
                img.put_pixel(x as u32, y as u32, px);
            }
        }
        img.save(path).map_err(|source| DatasetError::Encode {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn quantize(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Bilinear resize of an 8-bit RGB image, quantized half-up back to 8 bits.
/// A constant field resamples to exactly the same constant.
fn resize_bilinear(src: &RgbImage, target: usize) -> RgbImage {
    let (sw, sh) = (src.width() as usize, src.height() as usize);
    let t = target;
    let mut out = RgbImage::new(t as u32, t as u32);
    for oy in 0..t {
        let sy = ((oy as f32 + 0.5) * sh as f32 / t as f32 - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f32;
        for ox in 0..t {
            let sx = ((ox as f32 + 0.5) * sw as f32 / t as f32 - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f32;
            let mut px = [0u8; 3];
            for (c, out_c) in px.iter_mut().enumerate() {
                let v00 = src.get_pixel(x0 as u32, y0 as u32)[c] as f32;
                let v01 = src.get_pixel(x1 as u32, y0 as u32)[c] as f32;
                let v10 = src.get_pixel(x0 as u32, y1 as u32)[c] as f32;
                let v11 = src.get_pixel(x1 as u32, y1 as u32)[c] as f32;
                let top = lerp(v00, v01, fx);
                let bot = lerp(v10, v11, fx);
                *out_c = quantize(lerp(top, bot, fy));
            }
            out.put_pixel(ox as u32, oy as u32, image::Rgb(px));
        }
    }
    out
}

fn to_tensor(img: &RgbImage) -> Array3<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

/// Decode `path`, convert to RGB, resize to `target`×`target` with bilinear
/// interpolation, and scale into `[0,1]`.
pub fn load_image(path: &Path, target: usize) -> Result<ImageTensor, DatasetError> {
    let decoded = image::open(path).map_err(|source| DatasetError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    if decoded.width() == 0 || decoded.height() == 0 {
        return Err(DatasetError::ZeroDimension {
            path: path.to_path_buf(),
        });
    }
    if target == 0 {
        return Err(DatasetError::ZeroTarget);
    }
    let rgb = decoded.to_rgb8();
    let resized = if rgb.width() as usize == target && rgb.height() as usize == target {
        rgb
    } else {
        resize_bilinear(&rgb, target)
    };
    Ok(ImageTensor {
        pixels: to_tensor(&resized),
    })
}

/// One preprocessed image with its class label and source path.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub tensor: ImageTensor,
    pub label: usize,
    pub path: PathBuf,
}
