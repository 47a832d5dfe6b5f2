//! Minimal 8-bit RGB raster with PNG decode/encode.

use std::io::Cursor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("PNG decode failed: {0}")]
    Decode(String),
    #[error("PNG encode failed: {0}")]
    Encode(String),
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let pixels = fill
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// Writes one pixel; coordinates outside the canvas are ignored.
    pub fn put(&mut self, x: i64, y: i64, color: Rgb) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let o = self.offset(x as u32, y as u32);
        self.pixels[o..o + 3].copy_from_slice(&color);
    }

    /// Fills `[x0, x1) × [y0, y1)`, clipped to the canvas.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb) {
        let x0 = x0.max(0);
        let y0 = y0.max(0);
        let x1 = x1.min(i64::from(self.width));
        let y1 = y1.min(i64::from(self.height));
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x, y, color);
            }
        }
    }

    /// Returns a copy whose canvas is extended downwards by `rows`, filled
    /// with `fill`.
    pub fn extend_bottom(&self, rows: u32, fill: Rgb) -> Self {
        let mut out = Self::new(self.width, self.height + rows, fill);
        out.pixels[..self.pixels.len()].copy_from_slice(&self.pixels);
        out
    }
}

/// Decodes any PNG (palette, grey, 16-bit, alpha) into 8-bit RGB. Alpha is
/// composited over white.
pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let err = |e: png::DecodingError| ImageError::Decode(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::Decode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    let (width, height) = (info.width, info.height);
    let n = width as usize * height as usize;
    let mut pixels = Vec::with_capacity(n * 3);
    let over_white = |c: u8, a: u8| -> u8 {
        ((u16::from(c) * u16::from(a) + 255 * (255 - u16::from(a)) + 127) / 255) as u8
    };
    for row in buf.chunks(info.line_size).take(height as usize) {
        match info.color_type {
            png::ColorType::Rgb => pixels.extend_from_slice(&row[..width as usize * 3]),
            png::ColorType::Rgba => {
                for p in row.chunks_exact(4).take(width as usize) {
                    pixels.extend([p[0], p[1], p[2]].map(|c| over_white(c, p[3])));
                }
            }
            png::ColorType::Grayscale => {
                for &g in &row[..width as usize] {
                    pixels.extend([g, g, g]);
                }
            }
            png::ColorType::GrayscaleAlpha => {
                for p in row.chunks_exact(2).take(width as usize) {
                    let g = over_white(p[0], p[1]);
                    pixels.extend([g, g, g]);
                }
            }
            png::ColorType::Indexed => {
                return Err(ImageError::Decode("palette was not expanded".into()));
            }
        }
    }
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

/// Encodes as 8-bit RGB, non-interlaced, fixed filter and compression, no
/// ancillary chunks. Identical rasters always give identical bytes.
pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, ImageError> {
    let err = |e: png::EncodingError| ImageError::Encode(e.to_string());
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width, image.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Balanced);
        encoder.set_filter(png::Filter::Paeth);
        let mut writer = encoder.write_header().map_err(err)?;
        writer.write_image_data(&image.pixels).map_err(err)?;
        writer.finish().map_err(err)?;
    }
    Ok(out)
}
