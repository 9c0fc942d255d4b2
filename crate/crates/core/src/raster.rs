//! Minimal 8-bit raster types with binary PPM (P6) as the canonical on-disk
//! format and PNG accepted for convenience.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, tightly packed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb8Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    /// Grayscale via standard luma weights.
    pub fn to_gray(&self) -> GrayImage {
        let mut data = Vec::with_capacity(self.width * self.height);
        for px in self.data.chunks_exact(3) {
            let y = 0.299 * px[0] as f32 + 0.587 * px[1] as f32 + 0.114 * px[2] as f32;
            data.push(y.round().clamp(0.0, 255.0) as u8);
        }
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let file =
            fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path.display().to_string(), e);
        write!(w, "P6\n{} {}\n255\n", self.width, self.height).map_err(io_err)?;
        w.write_all(&self.data).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_ppm(&bytes).map_err(|detail| Error::Parse {
            format: format!("ppm {}", path.display()),
            line: 0,
            detail,
        })
    }

    pub fn parse_ppm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let token = |pos: &mut usize| -> std::result::Result<String, String> {
            // Skip whitespace and '#' comments between header tokens.
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err("truncated header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = token(&mut pos)?;
        if magic != "P6" {
            return Err(format!("expected P6, got {magic}"));
        }
        let width: usize = token(&mut pos)?.parse().map_err(|_| "bad width")?;
        let height: usize = token(&mut pos)?.parse().map_err(|_| "bad height")?;
        let maxval: usize = token(&mut pos)?.parse().map_err(|_| "bad maxval")?;
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        pos += 1; // single whitespace byte after maxval
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return Err("truncated pixel data".into());
        }
        Ok(Self {
            width,
            height,
            data: bytes[pos..pos + need].to_vec(),
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("dimensions match buffer");
        buf.save(path)
            .map_err(|e| Error::ImageDecode(format!("{}: {e}", path.display())))
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::ImageDecode(format!("{}: {e}", path.display())))?
            .to_rgb8();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.into_raw(),
        })
    }

    /// Dispatch on extension: `.ppm` is native, `.png` goes through the codec.
    pub fn read_auto(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => Self::read_ppm(path),
            _ => Self::read_png(path),
        }
    }

    pub fn write_auto(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => self.write_ppm(path),
            _ => self.write_png(path),
        }
    }
}

/// 8-bit single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Summed-area table with a zero top row and left column.
    pub fn integral(&self) -> Vec<u64> {
        let w = self.width + 1;
        let h = self.height + 1;
        let mut out = vec![0u64; w * h];
        for y in 0..self.height {
            let mut row = 0u64;
            for x in 0..self.width {
                row += self.get(x, y) as u64;
                out[(y + 1) * w + x + 1] = out[y * w + x + 1] + row;
            }
        }
        out
    }
}

/// Box sum over the inclusive pixel rectangle, from an `integral()` table.
#[inline]
pub fn box_sum(integral: &[u64], img_width: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
    let w = img_width + 1;
    integral[(y1 + 1) * w + x1 + 1] + integral[y0 * w + x0]
        - integral[y0 * w + x1 + 1]
        - integral[(y1 + 1) * w + x0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let mut img = Rgb8Image::new(7, 5);
        for y in 0..5 {
            for x in 0..7 {
                img.set_pixel(x, y, [(x * 30) as u8, (y * 40) as u8, 200]);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ppm");
        img.write_ppm(&p).unwrap();
        assert_eq!(Rgb8Image::read_ppm(&p).unwrap(), img);
    }

    #[test]
    fn ppm_rejects_other_magic() {
        assert!(Rgb8Image::parse_ppm(b"P5\n2 2\n255\n....").is_err());
    }

    #[test]
    fn png_round_trip() {
        let mut img = Rgb8Image::new(4, 3);
        img.set_pixel(2, 1, [9, 8, 7]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        img.write_png(&p).unwrap();
        assert_eq!(Rgb8Image::read_png(&p).unwrap(), img);
    }

    #[test]
    fn gray_luma_weights() {
        let mut img = Rgb8Image::new(1, 1);
        img.set_pixel(0, 0, [255, 0, 0]);
        assert_eq!(img.to_gray().get(0, 0), 76); // 0.299 * 255
    }

    #[test]
    fn integral_box_sum() {
        let mut g = GrayImage::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                g.set(x, y, (y * 4 + x) as u8);
            }
        }
        let integral = g.integral();
        assert_eq!(box_sum(&integral, 4, 0, 0, 3, 3), (0..16).sum::<u64>());
        assert_eq!(box_sum(&integral, 4, 1, 1, 2, 2), 5 + 6 + 9 + 10);
    }
}
