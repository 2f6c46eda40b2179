//! Linear-RGB image buffers and sRGB 8-bit PNG encoding.

use std::io::{Read, Write};

use crate::math::Vec3;

/// Row-major image, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type RgbImage = Image<Vec3>;
pub type DepthImage = Image<f64>;

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let w = self.width;
        self.data[y * w + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Nearest-neighbour resample to a new size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| {
            let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            self.get(sx.min(self.width - 1), sy.min(self.height - 1))
        })
    }
}

impl RgbImage {
    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// `x + 0.5`), clamped to the image.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Vec3 {
        let (w, h) = (self.width, self.height);
        let gx = (u - 0.5).clamp(0.0, (w - 1) as f64);
        let gy = (v - 0.5).clamp(0.0, (h - 1) as f64);
        let x0 = (gx as usize).min(w.saturating_sub(2));
        let y0 = (gy as usize).min(h.saturating_sub(2));
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let tx = gx - x0 as f64;
        let ty = gy - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bot = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        top * (1.0 - ty) + bot * ty
    }

    /// Mean luminance, shifted by the minimum so constant images give their
    /// value back exactly.
    pub fn mean_luminance(&self) -> f64 {
        let lo = self.data.iter().map(|c| c.luminance()).fold(f64::INFINITY, f64::min);
        if !lo.is_finite() {
            return 0.0;
        }
        let excess: f64 = self.data.iter().map(|c| c.luminance() - lo).sum();
        lo + excess / self.data.len() as f64
    }

    pub fn to_srgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 3);
        for c in &self.data {
            out.push(linear_to_srgb8(c.x));
            out.push(linear_to_srgb8(c.y));
            out.push(linear_to_srgb8(c.z));
        }
        out
    }

    pub fn from_srgb8(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width * height * 3 {
            return None;
        }
        let lut = srgb8_lut();
        let data = bytes
            .chunks_exact(3)
            .map(|p| Vec3::new(lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]))
            .collect();
        Some(Self { width, height, data })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_png(&mut buf, self.width as u32, self.height as u32, &self.to_srgb8()).expect("in-memory PNG encode");
        buf
    }
}

pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

pub fn linear_to_srgb8(c: f64) -> u8 {
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
    (linear_to_srgb(c) * 255.0).round() as u8
}

fn srgb8_lut() -> [f64; 256] {
    let mut lut = [0.0; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = srgb_to_linear(i as f64 / 255.0);
    }
    lut
}

/// Write 8-bit RGB pixels as a PNG.
pub fn write_png<W: Write>(w: W, width: u32, height: u32, rgb: &[u8]) -> Result<(), png::EncodingError> {
    let mut enc = png::Encoder::new(w, width, height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(rgb)?;
    writer.finish()
}

/// Decode a PNG into 8-bit RGB, expanding palette/gray/alpha formats.
pub fn read_png<R: Read + std::io::BufRead + std::io::Seek>(r: R) -> Result<(u32, u32, Vec<u8>), png::DecodingError> {
    let mut dec = png::Decoder::new(r);
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width, info.height);
    let bytes = &buf[..info.buffer_size()];
    let rgb = match info.color_type {
        png::ColorType::Rgb => bytes.to_vec(),
        png::ColorType::Rgba => bytes.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => bytes.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => bytes.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => unreachable!("EXPAND turns palettes into RGB"),
    };
    Ok((w, h, rgb))
}
