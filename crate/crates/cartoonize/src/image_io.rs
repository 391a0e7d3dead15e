//! [`ImageTensor`]: the unit of pipeline I/O. Batched NCHW RGB rasters in
//! [-1, 1], plus conversions to and from 8-bit images on disk.

use std::path::Path;

use image::{ImageReader, RgbImage};
use ndarray::{s, Array4};

use crate::error::{Error, Result};
use crate::nn::Float;

pub const MIN_SIDE: usize = 8;

/// Batched RGB raster, shape (batch, 3, height, width), values in [-1, 1].
#[derive(Debug, Clone)]
pub struct ImageTensor<F: Float = f32> {
    data: Array4<F>,
}

impl<F: Float> ImageTensor<F> {
    /// Validates finiteness, value range and minimum size.
    pub fn new(data: Array4<F>) -> Result<Self> {
        let (_, c, h, w) = data.dim();
        if c != 3 {
            return Err(Error::ChannelMismatch {
                op: "ImageTensor::new",
                left: c,
                right: 3,
            });
        }
        if h < MIN_SIDE {
            return Err(Error::ImageTooSmall {
                dim: "height",
                value: h,
                min: MIN_SIDE,
            });
        }
        if w < MIN_SIDE {
            return Err(Error::ImageTooSmall {
                dim: "width",
                value: w,
                min: MIN_SIDE,
            });
        }
        let one = F::one();
        for &v in data.iter() {
            if !v.is_finite() || v > one || v < -one {
                return Err(Error::NonFinite {
                    what: "image tensor values outside [-1, 1]".into(),
                });
            }
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array4<F> {
        &self.data
    }

    pub fn into_data(self) -> Array4<F> {
        self.data
    }

    pub fn batch(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().2
    }

    pub fn width(&self) -> usize {
        self.data.dim().3
    }

    /// Entry points for modeling additionally require dims divisible by 8.
    pub fn require_mod8(&self) -> Result<()> {
        if self.height() % 8 != 0 {
            return Err(Error::NotDivisibleBy8 {
                dim: "height",
                value: self.height(),
            });
        }
        if self.width() % 8 != 0 {
            return Err(Error::NotDivisibleBy8 {
                dim: "width",
                value: self.width(),
            });
        }
        Ok(())
    }

    /// Reflection-pad the bottom/right edges up to the next multiple of 8.
    /// Returns the padded tensor and the original size for cropping back.
    pub fn pad_to_mod8(&self) -> (Self, (usize, usize)) {
        let (h, w) = (self.height(), self.width());
        let (ph, pw) = (h.next_multiple_of(8), w.next_multiple_of(8));
        if (ph, pw) == (h, w) {
            return (self.clone(), (h, w));
        }
        let (bs, c, _, _) = self.data.dim();
        let mut out = Array4::zeros((bs, c, ph, pw));
        for bi in 0..bs {
            for ci in 0..c {
                for oy in 0..ph {
                    let iy = mirror_index(oy, h);
                    for ox in 0..pw {
                        let ix = mirror_index(ox, w);
                        out[(bi, ci, oy, ox)] = self.data[(bi, ci, iy, ix)];
                    }
                }
            }
        }
        (Self { data: out }, (h, w))
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Self {
        Self {
            data: self.data.slice(s![.., .., y0..y0 + h, x0..x0 + w]).to_owned(),
        }
    }
}

fn mirror_index(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        n - 2 - (i - n).min(n - 2)
    }
}

/// 8-bit value -> [-1, 1].
pub fn u8_to_unit(v: u8) -> f32 {
    v as f32 / 255.0 * 2.0 - 1.0
}

/// [-1, 1] -> 8-bit, affine map with round-half-to-even.
pub fn unit_to_u8(x: f32) -> u8 {
    (((x + 1.0) * 127.5).round_ties_even()).clamp(0.0, 255.0) as u8
}

pub fn rgb_to_tensor(img: &RgbImage) -> Result<ImageTensor> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = Array4::zeros((1, 3, h, w));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(0, c, y as usize, x as usize)] = u8_to_unit(p.0[c]);
        }
    }
    ImageTensor::new(data)
}

/// First batch item -> 8-bit RGB image.
pub fn tensor_to_rgb(t: &ImageTensor) -> RgbImage {
    let (_, _, h, w) = t.data().dim();
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = image::Rgb([
                unit_to_u8(t.data()[(0, 0, y, x)]),
                unit_to_u8(t.data()[(0, 1, y, x)]),
                unit_to_u8(t.data()[(0, 2, y, x)]),
            ]);
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let img = ImageReader::open(path)?
        .decode()
        .map_err(|source| Error::ImageDecode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    rgb_to_tensor(&img)
}

pub fn save_image(t: &ImageTensor, path: &Path) -> Result<()> {
    tensor_to_rgb(t).save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u8_round_trip_is_exact_for_all_values() {
        for v in 0..=255u8 {
            assert_eq!(unit_to_u8(u8_to_unit(v)), v, "value {v}");
        }
    }

    #[test]
    fn quantization_rounds_half_to_even() {
        assert_eq!(unit_to_u8(-1.0), 0);
        assert_eq!(unit_to_u8(1.0), 255);
        // 0.0 maps to exactly 127.5, a tie: round-half-to-even gives 128.
        assert_eq!(unit_to_u8(0.0), 128);
        // Out-of-range inputs clamp rather than wrap.
        assert_eq!(unit_to_u8(2.0), 255);
        assert_eq!(unit_to_u8(-2.0), 0);
    }

    #[test]
    fn rejects_out_of_range_and_undersized() {
        assert!(ImageTensor::new(Array4::from_elem((1, 3, 8, 8), 1.5f32)).is_err());
        assert!(ImageTensor::new(Array4::from_elem((1, 3, 4, 8), 0.0f32)).is_err());
        assert!(ImageTensor::new(Array4::from_elem((1, 3, 8, 8), f32::NAN)).is_err());
        assert!(ImageTensor::new(Array4::from_elem((1, 3, 8, 8), 0.5f32)).is_ok());
    }

    #[test]
    fn pad_to_mod8_round_trips() {
        let mut data = Array4::zeros((1, 3, 10, 13));
        for (i, v) in data.iter_mut().enumerate() {
            *v = (i % 100) as f32 / 100.0;
        }
        let t = ImageTensor::new(data.clone()).unwrap();
        let (padded, (h, w)) = t.pad_to_mod8();
        assert_eq!(padded.height() % 8, 0);
        assert_eq!(padded.width() % 8, 0);
        let back = padded.crop(0, 0, h, w);
        assert_eq!(back.data(), &data);
    }
}
