//! Atomic file writes and PNG/JPEG encode/decode at the CLI boundary.

use std::io::Cursor;
use std::path::Path;

use anyhow::{Context, Result};
use image::{ImageBuffer, ImageReader, Rgb};

use alpr_core::img::LabeledImage;

/// Write via a sibling temp file and rename, so interrupted runs never
/// leave a partial artifact at the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let mut tmp_name = path
        .file_name()
        .context("write_atomic needs a file name")?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into place: {}", path.display()))?;
    Ok(())
}

/// Output image encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Jpeg { quality: u8 },
}

impl ImageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg { .. } => "jpg",
        }
    }
}

pub fn encode_image(img: &LabeledImage, format: ImageFormat) -> Result<Vec<u8>> {
    let buffer: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width(), img.height(), img.pixels().to_vec())
            .context("pixel buffer does not match dimensions")?;
    let mut out = Cursor::new(Vec::new());
    match format {
        ImageFormat::Png => buffer
            .write_to(&mut out, image::ImageFormat::Png)
            .context("encoding png")?,
        ImageFormat::Jpeg { quality } => {
            let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality);
            buffer.write_with_encoder(encoder).context("encoding jpeg")?
        }
    }
    Ok(out.into_inner())
}

/// Decode an on-disk image into a labeled RGB buffer.
pub fn load_labeled_image(path: &Path, label: &str) -> Result<LabeledImage> {
    let img = ImageReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .decode()
        .with_context(|| format!("decoding {}", path.display()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    LabeledImage::from_pixels(w, h, img.into_raw(), label)
        .with_context(|| format!("image {} is not usable", path.display()))
}
