use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Semantics of one image channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    /// Antibody stain of microtubules, shown red.
    Microtubules,
    /// DAPI stain of the nucleus, shown blue.
    Nucleus,
    /// Protein localization, shown green.
    Protein,
    /// Endoplasmic reticulum, shown yellow.
    Er,
    Red,
    Green,
    Blue,
    Gray,
}

impl ChannelRole {
    pub const RGB: [ChannelRole; 3] = [ChannelRole::Red, ChannelRole::Green, ChannelRole::Blue];
}

/// `height x width x channels` image, interleaved, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    roles: Vec<ChannelRole>,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, roles: Vec<ChannelRole>, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || roles.is_empty() {
            return Err(Error::invalid(
                "image",
                format!("empty image {height}x{width}x{}", roles.len()),
            ));
        }
        if data.len() != height * width * roles.len() {
            return Err(Error::dim("image", "len", height * width * roles.len(), data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("image", format!("value {v} outside [0, 1]")));
        }
        Ok(ImageBuffer {
            height,
            width,
            roles,
            data,
        })
    }

    /// Clamps values into `[0, 1]` (NaN becomes 0) instead of rejecting them.
    pub fn from_clamped(height: usize, width: usize, roles: Vec<ChannelRole>, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, roles, data)
    }

    pub fn zeros(height: usize, width: usize, roles: Vec<ChannelRole>) -> Result<Self> {
        let n = height * width * roles.len();
        Self::new(height, width, roles, vec![0.0; n])
    }

    pub fn rgb(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, ChannelRole::RGB.to_vec(), data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        let roles = match channels {
            3 => ChannelRole::RGB.to_vec(),
            n => vec![ChannelRole::Gray; n],
        };
        Self::new(height, width, roles, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.roles.len() + c]
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(self.roles.len()).copied().collect()
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<ImageBuffer> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::invalid(
                "crop",
                format!("region {w}x{h}+{x}+{y} outside {}x{} image", self.width, self.height),
            ));
        }
        let c = self.channels();
        let mut data = Vec::with_capacity(w * h * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(ImageBuffer {
            height: h,
            width: w,
            roles: self.roles.clone(),
            data,
        })
    }

    /// Copies `src` into this image with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, src: &ImageBuffer, x: usize, y: usize) -> Result<()> {
        if src.channels() != self.channels() || x + src.width > self.width || y + src.height > self.height {
            return Err(Error::invalid("paste", "source does not fit destination"));
        }
        let c = self.channels();
        for row in 0..src.height {
            let d = ((y + row) * self.width + x) * c;
            let s = row * src.width * c;
            self.data[d..d + src.width * c].copy_from_slice(&src.data[s..s + src.width * c]);
        }
        Ok(())
    }

    /// `[1, C, H, W]` tensor with values mapped linearly to
    /// `[-SIGNAL_PEAK, SIGNAL_PEAK]`.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        images_to_tensor(std::slice::from_ref(self)).expect("single image batch")
    }

    /// Item `index` of an NCHW tensor, mapped back through the inverse of
    /// [`images_to_tensor`] and clamped to `[0, 1]`.
    pub fn from_tensor<T: Element>(t: &Tensor<T>, index: usize) -> Result<ImageBuffer> {
        let (n, c, h, w) = t.nchw("from_tensor")?;
        if index >= n {
            return Err(Error::dim("from_tensor", "batch", format!("< {n}"), index));
        }
        let src = &t.data()[index * c * h * w..(index + 1) * c * h * w];
        let mut data = vec![0.0f32; c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                data[i * c + ch] = ((src[ch * h * w + i].as_f64() / SIGNAL_PEAK + 1.0) * 0.5) as f32;
            }
        }
        let roles = if c == 3 {
            ChannelRole::RGB.to_vec()
        } else {
            vec![ChannelRole::Gray; c]
        };
        ImageBuffer::from_clamped(h, w, roles, data)
    }

    pub fn with_roles(mut self, roles: Vec<ChannelRole>) -> Result<Self> {
        if roles.len() != self.roles.len() {
            return Err(Error::dim("with_roles", "channels", self.roles.len(), roles.len()));
        }
        self.roles = roles;
        Ok(self)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
        let img = image::load(Cursor::new(bytes), ImageFormat::Png).map_err(|e| Error::Image {
            path: "<memory>".into(),
            reason: e.to_string(),
        })?;
        Ok(Self::from_dynamic(img))
    }

    pub fn load_png(path: &Path) -> Result<ImageBuffer> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::decode_png(&bytes).map_err(|e| match e {
            Error::Image { reason, .. } => Error::Image {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    fn from_dynamic(img: DynamicImage) -> ImageBuffer {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (roles, data): (Vec<ChannelRole>, Vec<f32>) = match img {
            DynamicImage::ImageLuma8(b) => (
                vec![ChannelRole::Gray],
                b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
            ),
            DynamicImage::ImageLuma16(b) => (
                vec![ChannelRole::Gray],
                b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
            ),
            DynamicImage::ImageLumaA8(_) => {
                let b = img.to_luma8();
                (
                    vec![ChannelRole::Gray],
                    b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
                )
            }
            DynamicImage::ImageLumaA16(_) => {
                let b = img.to_luma16();
                (
                    vec![ChannelRole::Gray],
                    b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
                )
            }
            DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
                let b = img.to_rgb16();
                (
                    ChannelRole::RGB.to_vec(),
                    b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
                )
            }
            other => {
                let b = other.to_rgb8();
                (
                    ChannelRole::RGB.to_vec(),
                    b.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
                )
            }
        };
        ImageBuffer::new(h, w, roles, data).expect("decoded values lie in [0, 1]")
    }

    /// 8-bit PNG (grayscale for one channel, RGB otherwise; extra channels
    /// beyond three are dropped).
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let q = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        let img = if self.channels() == 1 {
            DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(w, h, self.data.iter().map(|&v| q(v)).collect()).expect("sized"),
            )
        } else {
            let c = self.channels();
            let mut raw = Vec::with_capacity(self.height * self.width * 3);
            for px in self.data.chunks(c) {
                for k in 0..3 {
                    raw.push(px.get(k).map_or(0, |&v| q(v)));
                }
            }
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("sized"))
        };
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
            .map_err(|e| Error::invalid("encode_png", e.to_string()))?;
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Round-trips through 8-bit quantization, matching what a PNG carries.
    pub fn quantized(&self) -> ImageBuffer {
        let data = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) / 255.0)
            .collect();
        ImageBuffer { data, ..self.clone() }
    }
}

/// Image values 0 and 1 sit at `-SIGNAL_PEAK` and `SIGNAL_PEAK` in tensor
/// space. Keeping them inside the open range of the generator's tanh lets it
/// produce exact black and white without saturating, where its gradient
/// vanishes. Outputs beyond the peak clamp on the way back.
pub const SIGNAL_PEAK: f64 = 0.9;

/// Training target for exact black and white, in tensor space. It lies past
/// `SIGNAL_PEAK`, where decoding clamps, so the small regression error left
/// on empty stain channels and saturated pixels still decodes to exactly 0
/// or 1. Near black, SSIM's luminance term punishes even a 1% offset.
pub const SATURATED_TARGET: f64 = 0.96;

/// Stacks equally sized images into one `[N, C, H, W]` tensor in
/// `[-SIGNAL_PEAK, SIGNAL_PEAK]`.
pub fn images_to_tensor<T: Element>(images: &[ImageBuffer]) -> Result<Tensor<T>> {
    stack("images_to_tensor", images, |v| (v * 2.0 - 1.0) * SIGNAL_PEAK)
}

/// Like `images_to_tensor`, but exact 0 and 1 map to `∓SATURATED_TARGET`.
pub fn images_to_target<T: Element>(images: &[ImageBuffer]) -> Result<Tensor<T>> {
    stack("images_to_target", images, |v| {
        if v <= 0.0 {
            -SATURATED_TARGET
        } else if v >= 1.0 {
            SATURATED_TARGET
        } else {
            (v * 2.0 - 1.0) * SIGNAL_PEAK
        }
    })
}

fn stack<T: Element>(op: &'static str, images: &[ImageBuffer], encode: impl Fn(f64) -> f64) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::invalid(op, "empty batch"))?;
    let (h, w, c) = (first.height, first.width, first.channels());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.height, img.width, img.channels()) != (h, w, c) {
            return Err(Error::dim(
                op,
                "image",
                format!("{h}x{w}x{c}"),
                format!("{}x{}x{}", img.height, img.width, img.channels()),
            ));
        }
        for ch in 0..c {
            data.extend(
                img.data
                    .iter()
                    .skip(ch)
                    .step_by(c)
                    .map(|&v| T::from_f64(encode(v as f64))),
            );
        }
    }
    Tensor::from_vec([images.len(), c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ImageBuffer::rgb(1, 1, vec![0.0, 1.5, 0.2]).is_err());
        assert!(ImageBuffer::rgb(1, 1, vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let img = ImageBuffer::rgb(2, 3, (0..18).map(|i| i as f32 / 17.0).collect()).unwrap();
        let t = img.to_tensor::<f64>();
        assert_eq!(t.dims(), &[1, 3, 2, 3]);
        assert_eq!(t.data()[0], -SIGNAL_PEAK);
        let back = ImageBuffer::from_tensor(&t, 0).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tanh_extremes_clamp_to_black_and_white() {
        let t = Tensor::<f32>::from_vec([1, 1, 1, 3], vec![-1.0, -0.95, 0.97]).unwrap();
        assert_eq!(ImageBuffer::from_tensor(&t, 0).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn targets_push_only_black_and_white_past_the_peak() {
        let img = ImageBuffer::new(1, 4, vec![ChannelRole::Gray], vec![0.0, 0.25, 0.75, 1.0]).unwrap();
        let plain = images_to_tensor::<f64>(std::slice::from_ref(&img)).unwrap();
        let target = images_to_target::<f64>(std::slice::from_ref(&img)).unwrap();
        assert_eq!(&target.data()[1..3], &plain.data()[1..3]);
        assert_eq!(
            (target.data()[0], target.data()[3]),
            (-SATURATED_TARGET, SATURATED_TARGET)
        );
        // Both decode to the same image.
        assert_eq!(
            ImageBuffer::from_tensor(&target, 0).unwrap(),
            ImageBuffer::from_tensor(&plain, 0).unwrap()
        );
    }

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let img = ImageBuffer::rgb(4, 5, (0..60).map(|i| (i * 13 % 60) as f32 / 59.0).collect()).unwrap();
        let bytes = img.encode_png().unwrap();
        let back = ImageBuffer::decode_png(&bytes).unwrap();
        assert_eq!(back, img.quantized());
    }

    #[test]
    fn sixteen_bit_grayscale_decodes() {
        let raw: Vec<u16> = vec![0, 65535, 32768, 1000];
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 2, raw).unwrap();
        let mut bytes = Vec::new();
        DynamicImage::ImageLuma16(img)
            .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
            .unwrap();
        let back = ImageBuffer::decode_png(&bytes).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back.data()[1], 1.0);
        assert!((back.data()[2] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn malformed_png_is_an_image_error() {
        assert!(matches!(
            ImageBuffer::decode_png(b"not a png"),
            Err(Error::Image { .. })
        ));
    }

    #[test]
    fn crop_and_paste() {
        let img = ImageBuffer::rgb(4, 4, (0..48).map(|i| i as f32 / 47.0).collect()).unwrap();
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(2, 1, 0));
        let mut canvas = ImageBuffer::zeros(4, 4, ChannelRole::RGB.to_vec()).unwrap();
        canvas.paste(&c, 1, 2).unwrap();
        assert_eq!(canvas.get(3, 2, 2), img.get(3, 2, 2));
        assert!(img.crop(3, 3, 2, 2).is_err());
    }
}
