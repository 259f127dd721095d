//! Synthetic plate rendering: dark text rows on a jittered yellow
//! background, followed by the blur / rotation / warp distortion recipe.
//!
//! Rendering is fully deterministic given `(layout, glyph source, seed)`.
//! Parameter draws happen in a fixed order and every draw is written to
//! the image's provenance record.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::img::{gaussian_blur_raw, round_u8, LabeledImage};
use crate::plate::PlateLayout;
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("glyph source `{font}` has no glyph for `{ch}`")]
    GlyphMissing { font: String, ch: char },
    #[error("font file {path}: {msg}")]
    FontParse { path: String, msg: String },
    #[error(transparent)]
    Img(#[from] crate::img::ImgError),
    #[error("cannot read font: {0}")]
    Io(#[from] std::io::Error),
}

/// Alpha bitmap for one character at a requested pixel height.
#[derive(Debug, Clone)]
pub struct GlyphBitmap {
    pub width: u32,
    pub height: u32,
    /// Row-major coverage, 0 = background, 255 = full ink.
    pub alpha: Vec<u8>,
}

/// Something that can rasterize characters.
pub trait GlyphSource {
    fn id(&self) -> &str;
    fn rasterize(&self, ch: char, px_height: u32) -> Option<GlyphBitmap>;
}

/// 5x7 dot-matrix glyph rows for A-Z then 0-9; bit 4 is the left column.
const BASE_W: u32 = 5;
const BASE_H: u32 = 7;
#[rustfmt::skip]
const GLYPH_ROWS: [[u8; 7]; 36] = [
    [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001], // A
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110], // B
    [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110], // C
    [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110], // D
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111], // E
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000], // F
    [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111], // G
    [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001], // H
    [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // I
    [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100], // J
    [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001], // K
    [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111], // L
    [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001], // M
    [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001], // N
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110], // O
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000], // P
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101], // Q
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001], // R
    [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110], // S
    [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100], // T
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110], // U
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100], // V
    [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001], // W
    [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001], // X
    [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100], // Y
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111], // Z
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110], // 0
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // 1
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111], // 2
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110], // 3
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010], // 4
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110], // 5
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110], // 6
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000], // 7
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110], // 8
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100], // 9
];

fn glyph_index(ch: char) -> Option<usize> {
    match ch {
        'A'..='Z' => Some(ch as usize - 'A' as usize),
        '0'..='9' => Some(26 + ch as usize - '0' as usize),
        _ => None,
    }
}

// Nearest-neighbor scale from the native grid; deterministic.
fn scale_bitmap(bits: &[bool], native_w: u32, native_h: u32, px_height: u32) -> GlyphBitmap {
    let width = ((native_w * px_height) as f64 / native_h as f64).round().max(1.0) as u32;
    let mut alpha = vec![0u8; (width * px_height) as usize];
    for y in 0..px_height {
        for x in 0..width {
            let sx = (x * native_w) / width;
            let sy = (y * native_h) / px_height;
            if bits[(sy * native_w + sx) as usize] {
                alpha[(y * width + x) as usize] = 255;
            }
        }
    }
    GlyphBitmap {
        width,
        height: px_height,
        alpha,
    }
}

/// The deterministic built-in dot-matrix font covering A-Z and 0-9.
#[derive(Debug, Clone, Default)]
pub struct BuiltinFont;

impl GlyphSource for BuiltinFont {
    fn id(&self) -> &str {
        "builtin-5x7"
    }

    fn rasterize(&self, ch: char, px_height: u32) -> Option<GlyphBitmap> {
        let rows = &GLYPH_ROWS[glyph_index(ch)?];
        let mut bits = vec![false; (BASE_W * BASE_H) as usize];
        for (y, row) in rows.iter().enumerate() {
            for x in 0..BASE_W {
                bits[y * BASE_W as usize + x as usize] = row & (1 << (BASE_W - 1 - x)) != 0;
            }
        }
        Some(scale_bitmap(&bits, BASE_W, BASE_H, px_height))
    }
}

/// A font loaded from a `.glyphfont` file.
///
/// Format:
/// ```text
/// glyphfont 1 <name> <native-height>
/// char <CH> <width>
/// <native-height rows of '#' (ink) and '.' (background)>
/// ```
#[derive(Debug, Clone)]
pub struct FileFont {
    id: String,
    native_height: u32,
    glyphs: BTreeMap<char, (u32, Vec<bool>)>,
}

impl FileFont {
    pub fn parse(text: &str, origin: &str) -> Result<Self, RenderError> {
        let err = |msg: String| RenderError::FontParse {
            path: origin.to_string(),
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "glyphfont" || parts[1] != "1" {
            return Err(err(format!("bad header `{header}`")));
        }
        let id = parts[2].to_string();
        let native_height: u32 = parts[3]
            .parse()
            .map_err(|_| err(format!("bad height `{}`", parts[3])))?;
        let mut glyphs = BTreeMap::new();
        while let Some(line) = lines.next() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "char" {
                return Err(err(format!("expected `char <CH> <width>`, got `{line}`")));
            }
            let ch = parts[1]
                .chars()
                .next()
                .filter(|_| parts[1].chars().count() == 1)
                .ok_or_else(|| err(format!("bad char `{}`", parts[1])))?;
            let width: u32 = parts[2]
                .parse()
                .map_err(|_| err(format!("bad width `{}`", parts[2])))?;
            let mut bits = Vec::with_capacity((width * native_height) as usize);
            for _ in 0..native_height {
                let row = lines
                    .next()
                    .ok_or_else(|| err(format!("truncated glyph `{ch}`")))?;
                if row.chars().count() != width as usize {
                    return Err(err(format!("glyph `{ch}`: row `{row}` is not {width} wide")));
                }
                bits.extend(row.chars().map(|c| c == '#'));
            }
            if !bits.iter().any(|&b| b) {
                return Err(err(format!("glyph `{ch}` is empty")));
            }
            glyphs.insert(ch, (width, bits));
        }
        if glyphs.is_empty() {
            return Err(err("font defines no glyphs".into()));
        }
        Ok(Self {
            id,
            native_height,
            glyphs,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RenderError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

impl GlyphSource for FileFont {
    fn id(&self) -> &str {
        &self.id
    }

    fn rasterize(&self, ch: char, px_height: u32) -> Option<GlyphBitmap> {
        let (width, bits) = self.glyphs.get(&ch)?;
        Some(scale_bitmap(bits, *width, self.native_height, px_height))
    }
}

/// Load every `.glyphfont` file in a directory, sorted by file name.
pub fn load_font_dir(dir: &Path) -> Result<Vec<FileFont>, RenderError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "glyphfont"))
        .collect();
    paths.sort();
    paths.iter().map(|p| FileFont::load(p)).collect()
}

/// Column displacement mode for text warping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WarpMode {
    None,
    Sine,
    Cosine,
}

impl fmt::Display for WarpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarpMode::None => "none",
            WarpMode::Sine => "sine",
            WarpMode::Cosine => "cosine",
        })
    }
}

/// Layout of the undistorted text block.
#[derive(Debug, Clone)]
pub struct RenderConfig {
    /// Pixel height of each glyph row.
    pub glyph_height: u32,
    /// Vertical gap between rows.
    pub line_gap: u32,
    /// Border around the text block.
    pub margin: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            glyph_height: 32,
            line_gap: 4,
            margin: 8,
        }
    }
}

impl RenderConfig {
    /// Small configuration used by statistical tests (tiny, fast images).
    pub fn tiny() -> Self {
        Self {
            glyph_height: 8,
            line_gap: 2,
            margin: 2,
        }
    }
}

/// One sampled set of distortion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionParams {
    pub background: [u8; 3],
    pub ink: [u8; 3],
    pub blur_radius: u32,
    pub rotation_deg: f64,
    pub warp: WarpMode,
    pub warp_amplitude: u32,
    pub warp_period: u32,
}

impl DistortionParams {
    /// No distortion at all; baseline render.
    pub fn clean() -> Self {
        Self {
            background: BACKGROUND_BASE,
            ink: INK_BASE,
            blur_radius: 0,
            rotation_deg: 0.0,
            warp: WarpMode::None,
            warp_amplitude: 0,
            warp_period: 1,
        }
    }

    /// Draw parameters in the fixed documented order:
    /// background jitter (3), ink jitter (3), blur radius, rotation,
    /// warp mode, then amplitude and period only when the mode warps.
    ///
    /// `text_w`/`text_h` are the undistorted text-block dimensions; they
    /// bound the warp amplitude and period.
    pub fn sample(rng: &mut SeededRng, text_w: u32, text_h: u32) -> Self {
        let background = jitter(BACKGROUND_BASE, rng);
        let ink = jitter(INK_BASE, rng);
        let blur_radius = rng.range_u32(0, 4);
        let rotation_deg = rng.range_f64(-90.0, 90.0);
        let warp = *rng.choose(&[WarpMode::None, WarpMode::Sine, WarpMode::Cosine]);
        let (warp_amplitude, warp_period) = if warp == WarpMode::None {
            (0, 1)
        } else {
            let max_amp = (text_h / 8).max(1);
            let amp = rng.range_u32(1, max_amp);
            let period = rng.range_u32((text_w / 2).max(1), (2 * text_w).max(2));
            (amp, period)
        };
        Self {
            background,
            ink,
            blur_radius,
            rotation_deg,
            warp,
            warp_amplitude,
            warp_period,
        }
    }
}

const BACKGROUND_BASE: [u8; 3] = [230, 200, 0];
const INK_BASE: [u8; 3] = [25, 25, 25];

fn jitter(base: [u8; 3], rng: &mut SeededRng) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        let factor = 1.0 + rng.range_f64(-0.1, 0.1);
        out[c] = round_u8(base[c] as f64 * factor);
    }
    out
}

/// Render a plate layout into a labeled image: text rows on the yellow
/// background, then blur, rotation, and warp in that order.
pub fn render_plate(
    layout: &PlateLayout,
    glyphs: &dyn GlyphSource,
    cfg: &RenderConfig,
    rng: &mut SeededRng,
) -> Result<LabeledImage, RenderError> {
    let (text_w, text_h) = text_block_size(layout, glyphs, cfg)?;
    let params = DistortionParams::sample(rng, text_w, text_h);
    render_with_params(layout, glyphs, cfg, &params, rng.seed())
}

/// Render with explicit distortion parameters (deterministic, no draws).
pub fn render_with_params(
    layout: &PlateLayout,
    glyphs: &dyn GlyphSource,
    cfg: &RenderConfig,
    params: &DistortionParams,
    seed: u64,
) -> Result<LabeledImage, RenderError> {
    let mut img = compose_text(layout, glyphs, cfg, params)?;

    img = gaussian_blur_raw(&img, params.blur_radius);
    img = rotate_expand(&img, params.rotation_deg, params.background);
    if params.warp != WarpMode::None {
        img = warp_image(&img, params.warp, params.warp_amplitude, params.warp_period);
    }

    let prov = img.provenance_mut();
    prov.push("seed", seed);
    prov.push("font", glyphs.id());
    prov.push("blur_radius", params.blur_radius);
    prov.push("rotation_deg", params.rotation_deg);
    prov.push("warp", params.warp);
    prov.push("warp_amplitude", params.warp_amplitude);
    prov.push("warp_period", params.warp_period);
    Ok(img)
}

fn line_metrics(
    line: &str,
    glyphs: &dyn GlyphSource,
    height: u32,
) -> Result<(Vec<GlyphBitmap>, u32), RenderError> {
    let spacing = (height / 7).max(1);
    let mut bitmaps = Vec::new();
    let mut width = 0;
    for ch in line.chars() {
        let bm = glyphs
            .rasterize(ch, height)
            .ok_or_else(|| RenderError::GlyphMissing {
                font: glyphs.id().to_string(),
                ch,
            })?;
        width += bm.width + spacing;
        bitmaps.push(bm);
    }
    width = width.saturating_sub(spacing);
    Ok((bitmaps, width))
}

fn text_block_size(
    layout: &PlateLayout,
    glyphs: &dyn GlyphSource,
    cfg: &RenderConfig,
) -> Result<(u32, u32), RenderError> {
    let mut max_w = 0;
    for line in layout.lines() {
        let (_, w) = line_metrics(line, glyphs, cfg.glyph_height)?;
        max_w = max_w.max(w);
    }
    let n = layout.lines().len() as u32;
    let h = n * cfg.glyph_height + (n - 1) * cfg.line_gap;
    Ok((max_w, h))
}

fn compose_text(
    layout: &PlateLayout,
    glyphs: &dyn GlyphSource,
    cfg: &RenderConfig,
    params: &DistortionParams,
) -> Result<LabeledImage, RenderError> {
    let (text_w, text_h) = text_block_size(layout, glyphs, cfg)?;
    let width = (text_w + 2 * cfg.margin).max(LabeledImage::MIN_SIDE);
    let height = (text_h + 2 * cfg.margin).max(LabeledImage::MIN_SIDE);
    let label = layout.canonical_text();
    let mut img = LabeledImage::filled(width, height, params.background, &label)?;

    let spacing = (cfg.glyph_height / 7).max(1);
    for (row, line) in layout.lines().iter().enumerate() {
        let (bitmaps, line_w) = line_metrics(line, glyphs, cfg.glyph_height)?;
        let y0 = cfg.margin + row as u32 * (cfg.glyph_height + cfg.line_gap);
        let mut x0 = cfg.margin + (text_w - line_w) / 2;
        for bm in bitmaps {
            for gy in 0..bm.height {
                for gx in 0..bm.width {
                    let a = bm.alpha[(gy * bm.width + gx) as usize] as f64 / 255.0;
                    if a > 0.0 {
                        let (px, py) = (x0 + gx, y0 + gy);
                        let bg = img.get(px, py);
                        let mut rgb = [0u8; 3];
                        for c in 0..3 {
                            rgb[c] =
                                round_u8(bg[c] as f64 * (1.0 - a) + params.ink[c] as f64 * a);
                        }
                        img.set(px, py, rgb);
                    }
                }
            }
            x0 += bm.width + spacing;
        }
    }
    Ok(img)
}

/// Rotate about the image center with bilinear resampling, expanding the
/// canvas so nothing is cropped. New corners take the `fill` color.
pub fn rotate_expand(img: &LabeledImage, degrees: f64, fill: [u8; 3]) -> LabeledImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let new_w = (w * cos.abs() + h * sin.abs()).ceil().max(1.0) as u32;
    let new_h = (w * sin.abs() + h * cos.abs()).ceil().max(1.0) as u32;

    let cx_in = (w - 1.0) / 2.0;
    let cy_in = (h - 1.0) / 2.0;
    let cx_out = (new_w as f64 - 1.0) / 2.0;
    let cy_out = (new_h as f64 - 1.0) / 2.0;

    let mut pixels = vec![0u8; (new_w * new_h * 3) as usize];
    for y in 0..new_h {
        for x in 0..new_w {
            let dx = x as f64 - cx_out;
            let dy = y as f64 - cy_out;
            // Inverse rotation back into source coordinates.
            let sx = cos * dx + sin * dy + cx_in;
            let sy = -sin * dx + cos * dy + cy_in;
            let rgb = img.sample_bilinear_filled(sx, sy, fill);
            let i = ((y * new_w + x) * 3) as usize;
            for c in 0..3 {
                pixels[i + c] = round_u8(rgb[c]);
            }
        }
    }
    img.with_buffer(new_w, new_h, pixels)
}

/// Displace each pixel column vertically by `amplitude * f(2*pi*x/period)`
/// where `f` is the mode's function. `None` is the identity. The output
/// gains `2 * amplitude` rows of vertical padding; source rows are
/// edge-replicated into uncovered space.
pub fn warp_image(img: &LabeledImage, mode: WarpMode, amplitude: u32, period: u32) -> LabeledImage {
    assert!(period > 0, "warp period must be positive");
    if mode == WarpMode::None {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let new_h = h + 2 * amplitude;
    let mut pixels = vec![0u8; (w * new_h * 3) as usize];
    for x in 0..w {
        let phase = 2.0 * std::f64::consts::PI * x as f64 / period as f64;
        let f = match mode {
            WarpMode::Sine => phase.sin(),
            WarpMode::Cosine => phase.cos(),
            WarpMode::None => unreachable!(),
        };
        let dy = (amplitude as f64 * f).round() as i64;
        for y in 0..new_h {
            let src_y = y as i64 - amplitude as i64 - dy;
            let rgb = img.get_clamped(x as i64, src_y);
            let i = ((y * w + x) * 3) as usize;
            pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }
    img.with_buffer(w, new_h, pixels)
}

/// Displacement applied to column `x`; exposed for the warp tests.
pub fn warp_displacement(mode: WarpMode, amplitude: u32, period: u32, x: u32) -> i64 {
    let phase = 2.0 * std::f64::consts::PI * x as f64 / period as f64;
    let f = match mode {
        WarpMode::None => 0.0,
        WarpMode::Sine => phase.sin(),
        WarpMode::Cosine => phase.cos(),
    };
    (amplitude as f64 * f).round() as i64
}
