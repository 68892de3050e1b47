//! Raster images as planar 8-bit tensors, plus PNG / binary PNM codecs.
//!
//! Pixels are stored channel-major: every channel is a contiguous row-major
//! `height × width` plane. All per-channel stages (MI, SVD) operate on planes
//! directly.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "data length {} does not match {height}x{width}x{channels} = {expected}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Builds an image from a per-pixel function `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Builds a tensor from interleaved (`HWC`) samples.
    pub fn from_interleaved(
        height: usize,
        width: usize,
        channels: usize,
        interleaved: &[u8],
    ) -> Result<Self> {
        if interleaved.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "interleaved buffer has {} samples, expected {}",
                interleaved.len(),
                height * width * channels
            )));
        }
        Self::from_fn(height, width, channels, |y, x, c| {
            interleaved[(y * width + x) * channels + c]
        })
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let plane = self.height * self.width;
        let mut out = vec![0u8; plane * self.channels];
        for c in 0..self.channels {
            for (p, &v) in self.channel(c).iter().enumerate() {
                out[p * self.channels + c] = v;
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Row-major plane of channel `c`.
    pub fn channel(&self, c: usize) -> &[u8] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [u8] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: u8) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes PNG, binary PNM or JPEG bytes. Alpha channels are dropped; anything
/// deeper than 8 bits per channel is rejected.
pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Format(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm | ImageFormat::Jpeg) => {}
        Some(other) => return Err(Error::Format(format!("{other:?} is not supported"))),
        None => return Err(Error::Format("unrecognized image data".into())),
    }
    let decoded = reader.decode().map_err(|e| Error::Format(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(buf) => ImageTensor::new(h, w, 1, buf.into_raw()),
        DynamicImage::ImageLumaA8(_) => {
            let buf = decoded.to_luma8();
            ImageTensor::new(h, w, 1, buf.into_raw())
        }
        DynamicImage::ImageRgb8(buf) => ImageTensor::from_interleaved(h, w, 3, buf.as_raw()),
        DynamicImage::ImageRgba8(_) => {
            let buf = decoded.to_rgb8();
            ImageTensor::from_interleaved(h, w, 3, buf.as_raw())
        }
        other => Err(Error::Format(format!(
            "only 8-bit channels are supported, got {:?}",
            other.color()
        ))),
    }
}

/// Lossless on-disk encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Png,
    /// Binary PPM for colour, PGM for grayscale.
    Pnm,
}

impl OutputFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(OutputFormat::Png),
            Some("ppm" | "pgm" | "pnm") => Ok(OutputFormat::Pnm),
            Some(other) => Err(Error::Format(format!(
                "cannot write '.{other}': only lossless png/ppm/pgm output is supported"
            ))),
            None => Err(Error::Format(format!(
                "cannot infer output format for {}",
                path.display()
            ))),
        }
    }
}

pub fn encode_image(image: &ImageTensor, format: OutputFormat) -> Result<Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let color = if image.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let samples = if image.channels() == 1 {
        image.data().to_vec()
    } else {
        image.to_interleaved()
    };
    let mut out = Vec::new();
    let res = match format {
        OutputFormat::Png => {
            image::codecs::png::PngEncoder::new(&mut out).write_image(&samples, w, h, color)
        }
        OutputFormat::Pnm => {
            let subtype = if image.channels() == 1 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            PnmEncoder::new(&mut out)
                .with_subtype(subtype)
                .write_image(&samples, w, h, color)
        }
    };
    res.map_err(|e| Error::Format(e.to_string()))?;
    Ok(out)
}

/// Writes `image` losslessly, format chosen by extension. The file appears
/// atomically: bytes go to a sibling temp file that is renamed into place.
pub fn save_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(image, OutputFormat::from_path(path)?)?;
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.is_dir() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::IsADirectory, "path is a directory"),
        ));
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| {
            Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "missing file name"),
            )
        })?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    if let Err(e) = fs::write(&tmp, bytes) {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decodes_black_ppm() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 3));
        assert!(img.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_sixteen_bit_ppm() {
        let mut bytes = b"P6\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0u8; 6]);
        assert!(matches!(decode_image(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            decode_image(b"definitely not an image"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ImageTensor::from_fn(8, 8, 3, |_, _, _| rng.gen()).unwrap();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), img, "{name}");
        }
    }

    #[test]
    fn single_red_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        let p = dir.path().join("red.png");
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn grayscale_stays_single_channel() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::from_fn(5, 7, 1, |y, x, _| (y * 7 + x) as u8).unwrap();
        for name in ["g.png", "g.pgm"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.channels(), 1);
            assert_eq!(back, img);
        }
    }

    #[test]
    fn save_to_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::filled(2, 2, 1, 0).unwrap();
        let target = dir.path().join("sub.png");
        fs::create_dir(&target).unwrap();
        assert!(matches!(save_image(&img, &target), Err(Error::Io { .. })));
        // no temp file left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn jpeg_output_refused() {
        let img = ImageTensor::filled(2, 2, 3, 9).unwrap();
        assert!(matches!(
            save_image(&img, "/tmp/never-written.jpg"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_image("/nonexistent/definitely/missing.png"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn constructor_validates_length() {
        assert!(ImageTensor::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(ImageTensor::new(2, 2, 2, vec![0; 8]).is_err());
    }

    #[test]
    fn interleaved_round_trip() {
        let img = ImageTensor::from_fn(3, 4, 3, |y, x, c| (y * 40 + x * 10 + c) as u8).unwrap();
        let back = ImageTensor::from_interleaved(3, 4, 3, &img.to_interleaved()).unwrap();
        assert_eq!(back, img);
        assert_eq!(img.get(2, 3, 1), 2 * 40 + 30 + 1);
    }
}
