//! Image containers, gray conversion, tiling/crop and resampling primitives.
//!
//! Pixels are 8-bit, row-major, top-left origin. RGB data is interleaved
//! (`r, g, b, r, g, b, ...`). These are the building blocks for patch
//! selection and for the synthetic pseudo-4K generator.

use std::path::Path;

use crate::error::{io_err, Error, Result};

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// Single-channel 8-bit gray image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateInput("image dimensions must be >= 1".into()));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "rgb buffer holds {} bytes, expected {}",
                data.len(),
                expected
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Constant-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<RgbImage> {
        check_rect(self.width, self.height, x0, y0, w, h)?;
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for row in y0..y0 + h {
            let start = (row as usize * self.width as usize + x0 as usize) * 3;
            data.extend_from_slice(&self.data[start..start + w as usize * 3]);
        }
        Ok(RgbImage { width: w, height: h, data })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RgbImage> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (width, height) = img.dimensions();
        RgbImage::new(width, height, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: image::RgbImage =
            image::ImageBuffer::from_raw(self.width, self.height, self.data.clone())
                .expect("buffer length is validated at construction");
        buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateInput("image dimensions must be >= 1".into()));
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "gray buffer holds {} bytes, expected {}",
                data.len(),
                expected
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<GrayImage> {
        check_rect(self.width, self.height, x0, y0, w, h)?;
        let mut data = Vec::with_capacity(w as usize * h as usize);
        for row in y0..y0 + h {
            let start = row as usize * self.width as usize + x0 as usize;
            data.extend_from_slice(&self.data[start..start + w as usize]);
        }
        Ok(GrayImage { width: w, height: h, data })
    }
}

fn check_rect(width: u32, height: u32, x0: u32, y0: u32, w: u32, h: u32) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::DegenerateInput("crop rectangle must be non-empty".into()));
    }
    if x0 as u64 + w as u64 > width as u64 || y0 as u64 + h as u64 > height as u64 {
        return Err(Error::OutOfBounds { x0, y0, w, h, width, height });
    }
    Ok(())
}

/// BT.601 luma with round-half-up, clamped to `[0, 255]`.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let mut data = Vec::with_capacity(img.width as usize * img.height as usize);
    for px in img.data.chunks_exact(3) {
        let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        data.push((y + 0.5).floor().clamp(0.0, 255.0) as u8);
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Resampling kernels available to the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleKernel {
    Nearest,
    Bilinear,
    Bicubic,
    Lanczos,
}

impl ResampleKernel {
    pub const ALL: [ResampleKernel; 4] = [
        ResampleKernel::Nearest,
        ResampleKernel::Bilinear,
        ResampleKernel::Bicubic,
        ResampleKernel::Lanczos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResampleKernel::Nearest => "nearest",
            ResampleKernel::Bilinear => "bilinear",
            ResampleKernel::Bicubic => "bicubic",
            ResampleKernel::Lanczos => "lanczos",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(ResampleKernel::Nearest),
            "bilinear" => Ok(ResampleKernel::Bilinear),
            "bicubic" => Ok(ResampleKernel::Bicubic),
            "lanczos" => Ok(ResampleKernel::Lanczos),
            other => Err(Error::Config(format!("unknown resample kernel {other:?}"))),
        }
    }

    fn filter(self) -> image::imageops::FilterType {
        match self {
            ResampleKernel::Nearest => image::imageops::FilterType::Nearest,
            ResampleKernel::Bilinear => image::imageops::FilterType::Triangle,
            ResampleKernel::Bicubic => image::imageops::FilterType::CatmullRom,
            ResampleKernel::Lanczos => image::imageops::FilterType::Lanczos3,
        }
    }
}

/// Separable resampling with edge clamping; deterministic for fixed inputs.
pub fn resample(img: &RgbImage, new_w: u32, new_h: u32, kernel: ResampleKernel) -> Result<RgbImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::DegenerateInput("target dimensions must be >= 1".into()));
    }
    if new_w == img.width && new_h == img.height && kernel == ResampleKernel::Nearest {
        return Ok(img.clone());
    }
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width, img.height, img.data.clone())
            .expect("buffer length is validated at construction");
    let resized = image::imageops::resize(&buf, new_w, new_h, kernel.filter());
    RgbImage::new(new_w, new_h, resized.into_raw())
}

/// Writes a gray image as PNG (diagnostic output).
pub fn save_gray_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let buf: image::GrayImage =
        image::ImageBuffer::from_raw(img.width, img.height, img.data.clone())
            .expect("buffer length is validated at construction");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(Error::from)
}

/// Reads one real number from a sidecar file (used for `fps.txt`).
pub fn read_sidecar_number(path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.trim()
        .parse::<f64>()
        .map_err(|e| Error::ManifestValidation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(w: u32, h: u32, cell: u32) -> RgbImage {
        let mut img = RgbImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                if ((x / cell) + (y / cell)) % 2 == 0 {
                    img.set_pixel(x, y, [255, 255, 255]);
                }
            }
        }
        img
    }

    #[test]
    fn gray_extremes_and_red() {
        let img = RgbImage::new(3, 1, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        let gray = to_gray(&img);
        assert_eq!(gray.data(), &[255, 0, 76]);
    }

    #[test]
    fn gray_stays_within_channel_range() {
        let mut data = Vec::new();
        for i in 0..64u32 {
            data.extend_from_slice(&[(i * 4) as u8, (255 - i) as u8, (i * 7 % 256) as u8]);
        }
        let img = RgbImage::new(8, 8, data).unwrap();
        let gray = to_gray(&img);
        for y in 0..8 {
            for x in 0..8 {
                let [r, g, b] = img.pixel(x, y);
                let lo = r.min(g).min(b);
                let hi = r.max(g).max(b);
                let v = gray.get(x, y);
                assert!(v >= lo && v <= hi, "luma {v} outside [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn crop_identity_and_point() {
        let img = checkerboard(8, 6, 2);
        assert_eq!(img.crop(0, 0, 8, 6).unwrap(), img);
        let point = img.crop(3, 5, 1, 1).unwrap();
        assert_eq!(point.pixel(0, 0), img.pixel(3, 5));
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = RgbImage::filled(4, 4, [9, 9, 9]);
        assert!(matches!(
            img.crop(2, 2, 4, 4),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn crop_composes() {
        let img = checkerboard(32, 24, 3);
        let outer = img.crop(4, 2, 20, 18).unwrap();
        let inner = outer.crop(5, 7, 8, 6).unwrap();
        let direct = img.crop(9, 9, 8, 6).unwrap();
        assert_eq!(inner, direct);
    }

    #[test]
    fn resample_identity_nearest() {
        let img = checkerboard(16, 16, 1);
        let same = resample(&img, 16, 16, ResampleKernel::Nearest).unwrap();
        assert_eq!(same, img);
    }

    #[test]
    fn resample_preserves_constants() {
        let img = RgbImage::filled(2, 2, [120, 7, 250]);
        for kernel in ResampleKernel::ALL {
            for (w, h) in [(5, 3), (8, 8), (1, 7)] {
                let out = resample(&img, w, h, kernel).unwrap();
                assert!(
                    out.data().chunks_exact(3).all(|p| p == [120, 7, 250]),
                    "kernel {kernel:?} broke a constant image"
                );
            }
        }
    }

    #[test]
    fn down_up_roundtrip_loses_high_frequency() {
        let img = checkerboard(64, 64, 1);
        let down = resample(&img, 16, 16, ResampleKernel::Bilinear).unwrap();
        let up = resample(&down, 64, 64, ResampleKernel::Bilinear).unwrap();
        let mad: f64 = img
            .data()
            .iter()
            .zip(up.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / img.data().len() as f64;
        assert!(mad > 0.0, "4x down/up must not round-trip a checkerboard");
    }
}
