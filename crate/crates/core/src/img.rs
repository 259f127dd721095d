//! In-memory labeled images and the shared pixel primitives used by the
//! renderer and the augmentation pipeline.
//!
//! Pixels are 8-bit RGB, row major. All resampling is done in f64 and
//! rounded once at the end, so identity parameters reproduce the input
//! buffer bit for bit.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImgError {
    #[error("image too small: {width}x{height} (minimum 8x8)")]
    TooSmall { width: u32, height: u32 },
    #[error("pixel buffer length {got} does not match {width}x{height}x3")]
    BadBufferLength { width: u32, height: u32, got: usize },
    #[error("label must be non-empty")]
    EmptyLabel,
}

/// Ordered log of the parameter draws that produced an image.
///
/// Generation and augmentation record every sampled value here so tests
/// (and downstream audits) can assert the draws stayed in range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance(Vec<(String, String)>);

impl Provenance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    /// Last recorded value for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// A pixel buffer paired with its text label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    label: String,
    provenance: Provenance,
}

impl LabeledImage {
    pub const MIN_SIDE: u32 = 8;

    /// A solid-color image.
    pub fn filled(width: u32, height: u32, fill: [u8; 3], label: &str) -> Result<Self, ImgError> {
        let len = width as usize * height as usize * 3;
        Self::from_pixels(
            width,
            height,
            fill.iter().copied().cycle().take(len).collect(),
            label,
        )
    }

    pub fn from_pixels(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        label: &str,
    ) -> Result<Self, ImgError> {
        if width < Self::MIN_SIDE || height < Self::MIN_SIDE {
            return Err(ImgError::TooSmall { width, height });
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(ImgError::BadBufferLength {
                width,
                height,
                got: pixels.len(),
            });
        }
        if label.is_empty() {
            return Err(ImgError::EmptyLabel);
        }
        Ok(Self {
            width,
            height,
            pixels,
            label: label.to_string(),
            provenance: Provenance::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: &str) {
        assert!(!label.is_empty(), "label must be non-empty");
        self.label = label.to_string();
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Nearest pixel with clamp-to-edge semantics.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> [u8; 3] {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }

    /// Bilinear sample at a fractional position, clamping taps to the edge.
    pub fn sample_bilinear_clamped(&self, fx: f64, fy: f64) -> [f64; 3] {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = self.get_clamped(x0, y0);
        let p10 = self.get_clamped(x0 + 1, y0);
        let p01 = self.get_clamped(x0, y0 + 1);
        let p11 = self.get_clamped(x0 + 1, y0 + 1);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
            let bot = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
            out[c] = top * (1.0 - ty) + bot * ty;
        }
        out
    }

    /// Bilinear sample where out-of-bounds taps read `fill` instead of the
    /// edge; used by rotation so the expanded canvas keeps the fill color.
    pub fn sample_bilinear_filled(&self, fx: f64, fy: f64, fill: [u8; 3]) -> [f64; 3] {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let tap = |x: i64, y: i64| -> [u8; 3] {
            if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
                fill
            } else {
                self.get(x as u32, y as u32)
            }
        };
        let p00 = tap(x0, y0);
        let p10 = tap(x0 + 1, y0);
        let p01 = tap(x0, y0 + 1);
        let p11 = tap(x0 + 1, y0 + 1);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
            let bot = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
            out[c] = top * (1.0 - ty) + bot * ty;
        }
        out
    }

    /// Bilinear resize. Exact for integer scale factors on exact grids in
    /// the sense that a 2x upscale of a constant image stays constant.
    pub fn resize_bilinear(&self, new_w: u32, new_h: u32) -> LabeledImage {
        assert!(new_w >= 1 && new_h >= 1);
        let mut pixels = vec![0u8; (new_w * new_h * 3) as usize];
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        for y in 0..new_h {
            for x in 0..new_w {
                // Pixel-center mapping.
                let fx = (x as f64 + 0.5) * sx - 0.5;
                let fy = (y as f64 + 0.5) * sy - 0.5;
                let rgb = self.sample_bilinear_clamped(fx, fy);
                let i = ((y * new_w + x) * 3) as usize;
                for c in 0..3 {
                    pixels[i + c] = round_u8(rgb[c]);
                }
            }
        }
        LabeledImage {
            width: new_w,
            height: new_h,
            pixels,
            label: self.label.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Mean absolute per-channel difference; images must share dimensions.
    pub fn mean_abs_diff(&self, other: &LabeledImage) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let total: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        total / self.pixels.len() as f64
    }

    /// Replace dimensions and buffer in one step (internal helper).
    pub(crate) fn with_buffer(&self, width: u32, height: u32, pixels: Vec<u8>) -> LabeledImage {
        debug_assert_eq!(pixels.len(), width as usize * height as usize * 3);
        LabeledImage {
            width,
            height,
            pixels,
            label: self.label.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

#[inline]
pub(crate) fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Normalized 1-D Gaussian kernel with `sigma = radius / 2` and half-width
/// `2 * radius`. Radius 0 yields the identity kernel `[1.0]`.
pub fn gaussian_kernel(radius: u32) -> Vec<f64> {
    if radius == 0 {
        return vec![1.0];
    }
    let sigma = radius as f64 / 2.0;
    let half = (2 * radius) as i64;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Separable Gaussian blur with clamp-to-edge taps. Radius 0 returns the
/// input unchanged.
pub fn gaussian_blur_raw(img: &LabeledImage, radius: u32) -> LabeledImage {
    if radius == 0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(radius);
    let half = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);

    // Horizontal pass into f64, vertical pass back to u8.
    let mut mid = vec![0.0f64; (w * h * 3) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - half).clamp(0, w - 1);
                let p = img.get(sx as u32, y as u32);
                for c in 0..3 {
                    acc[c] += kv * p[c] as f64;
                }
            }
            let i = ((y * w + x) * 3) as usize;
            mid[i..i + 3].copy_from_slice(&acc);
        }
    }
    let mut pixels = vec![0u8; (w * h * 3) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - half).clamp(0, h - 1);
                let i = ((sy * w + x) * 3) as usize;
                for c in 0..3 {
                    acc[c] += kv * mid[i + c];
                }
            }
            let i = ((y * w + x) * 3) as usize;
            for c in 0..3 {
                pixels[i + c] = round_u8(acc[c]);
            }
        }
    }
    img.with_buffer(img.width(), img.height(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, v: u8) -> LabeledImage {
        LabeledImage::filled(w, h, [v, v, v], "X").unwrap()
    }

    #[test]
    fn constructor_enforces_minimum_size_and_label() {
        assert_eq!(
            LabeledImage::filled(4, 10, [0, 0, 0], "X").unwrap_err(),
            ImgError::TooSmall { width: 4, height: 10 }
        );
        assert_eq!(
            LabeledImage::filled(10, 10, [0, 0, 0], "").unwrap_err(),
            ImgError::EmptyLabel
        );
        assert!(LabeledImage::from_pixels(8, 8, vec![0; 100], "X").is_err());
    }

    #[test]
    fn kernel_sums_to_one() {
        for radius in 0..=4u32 {
            let k = gaussian_kernel(radius);
            assert_eq!(k.len(), (4 * radius + 1) as usize);
            let sum: f64 = k.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "radius {radius}: sum {sum}");
        }
    }

    #[test]
    fn separable_impulse_mass_is_conserved() {
        // 2-D response of the separable kernel sums to the impulse mass.
        for radius in 1..=4u32 {
            let k = gaussian_kernel(radius);
            let mass: f64 = k
                .iter()
                .flat_map(|a| k.iter().map(move |b| a * b))
                .sum();
            assert!((mass - 1.0).abs() < 1e-6, "radius {radius}: mass {mass}");
        }
    }

    #[test]
    fn blur_of_constant_image_is_identity() {
        let img = gray(16, 12, 137);
        for radius in 0..=4 {
            assert_eq!(gaussian_blur_raw(&img, radius).pixels(), img.pixels());
        }
    }

    #[test]
    fn blur_radius_zero_is_bit_identical() {
        let mut img = gray(16, 16, 10);
        img.set(5, 5, [200, 100, 50]);
        let out = gaussian_blur_raw(&img, 0);
        assert_eq!(out, img);
    }

    #[test]
    fn blur_spreads_an_impulse() {
        let mut img = gray(17, 17, 0);
        img.set(8, 8, [255, 255, 255]);
        let out = gaussian_blur_raw(&img, 2);
        assert!(out.get(8, 8)[0] < 255);
        assert!(out.get(9, 8)[0] > 0);
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = gray(16, 8, 99);
        let out = img.resize_bilinear(32, 16);
        assert!(out.pixels().iter().all(|&p| p == 99));
    }

    #[test]
    fn provenance_records_draws_in_order() {
        let mut p = Provenance::new();
        p.push("a", 1);
        p.push("b", "x");
        p.push("a", 2);
        assert_eq!(p.get("a"), Some("2"));
        assert_eq!(p.iter().count(), 3);
    }
}
