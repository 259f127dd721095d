//! Training-time augmentation: shear/rotate/translate affines, additive
//! Poisson noise, Gaussian blur, photometric jitter, and the vertical
//! concatenation strategy for multi-line robustness.
//!
//! Every operation except [`vconcat`] preserves the label; `vconcat`
//! concatenates the two labels exactly. All draws are logged to the
//! output's provenance record.

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::img::{gaussian_blur_raw, round_u8, LabeledImage};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("parameter `{param}` = {value} is outside its allowed range")]
    ParameterOutOfRange { param: &'static str, value: f64 },
    #[error("config field `{field}` exceeds the supported envelope")]
    ConfigOutOfEnvelope { field: &'static str },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Img(#[from] crate::img::ImgError),
}

/// Photometric operations available to [`randaugment_lite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotometricOp {
    Brightness,
    Contrast,
    Sharpness,
    Posterize,
    Equalize,
}

impl PhotometricOp {
    pub const ALL: [PhotometricOp; 5] = [
        PhotometricOp::Brightness,
        PhotometricOp::Contrast,
        PhotometricOp::Sharpness,
        PhotometricOp::Posterize,
        PhotometricOp::Equalize,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PhotometricOp::Brightness => "brightness",
            PhotometricOp::Contrast => "contrast",
            PhotometricOp::Sharpness => "sharpness",
            PhotometricOp::Posterize => "posterize",
            PhotometricOp::Equalize => "equalize",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|op| op.name() == name)
    }
}

/// Photometric sub-policy: `n_ops` draws from `ops` at a uniform magnitude
/// in `[0, magnitude_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandaugmentConfig {
    pub ops: Vec<PhotometricOp>,
    pub n_ops: usize,
    pub magnitude_max: f64,
}

impl Default for RandaugmentConfig {
    fn default() -> Self {
        Self {
            ops: PhotometricOp::ALL.to_vec(),
            n_ops: 2,
            magnitude_max: 0.4,
        }
    }
}

/// Augmentation parameter envelope. The default ranges are the supported
/// maxima; narrower sub-ranges (down to collapsed identity ranges) are
/// valid, wider ones are rejected by [`AugmentConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub shear_x: (f64, f64),
    pub shear_y: (f64, f64),
    pub rotation_deg: (f64, f64),
    /// Horizontal translation range as a fraction of image width.
    pub translate_x_frac: (f64, f64),
    /// Vertical translation range as a fraction of image height.
    pub translate_y_frac: (f64, f64),
    pub poisson_lambdas: Vec<u32>,
    pub blur_radii: Vec<u32>,
    pub concat_enabled: bool,
    pub concat_probability: f64,
    pub randaugment: RandaugmentConfig,
}

pub const SHEAR_X_MAX: f64 = 0.9;
pub const SHEAR_Y_MAX: f64 = 0.2;
pub const ROTATION_MAX_DEG: f64 = 30.0;
pub const TRANSLATE_X_MAX_FRAC: f64 = 0.1;
pub const TRANSLATE_Y_MAX_FRAC: f64 = 0.3;
pub const POISSON_LAMBDAS: [u32; 9] = [0, 5, 10, 15, 20, 25, 30, 35, 40];
pub const BLUR_RADII: [u32; 5] = [0, 1, 2, 3, 4];

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            shear_x: (-SHEAR_X_MAX, SHEAR_X_MAX),
            shear_y: (-SHEAR_Y_MAX, SHEAR_Y_MAX),
            rotation_deg: (-ROTATION_MAX_DEG, ROTATION_MAX_DEG),
            translate_x_frac: (-TRANSLATE_X_MAX_FRAC, TRANSLATE_X_MAX_FRAC),
            translate_y_frac: (-TRANSLATE_Y_MAX_FRAC, TRANSLATE_Y_MAX_FRAC),
            poisson_lambdas: POISSON_LAMBDAS.to_vec(),
            blur_radii: BLUR_RADII.to_vec(),
            concat_enabled: false,
            concat_probability: 0.5,
            randaugment: RandaugmentConfig::default(),
        }
    }
}

impl AugmentConfig {
    /// Collapse every range to its identity value; useful in tests and as
    /// a no-op baseline.
    pub fn identity() -> Self {
        Self {
            shear_x: (0.0, 0.0),
            shear_y: (0.0, 0.0),
            rotation_deg: (0.0, 0.0),
            translate_x_frac: (0.0, 0.0),
            translate_y_frac: (0.0, 0.0),
            poisson_lambdas: vec![0],
            blur_radii: vec![0],
            concat_enabled: false,
            concat_probability: 0.5,
            randaugment: RandaugmentConfig {
                ops: vec![],
                n_ops: 0,
                magnitude_max: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let envelope = |field: &'static str, (lo, hi): (f64, f64), max: f64| {
            if lo > hi || lo < -max - 1e-12 || hi > max + 1e-12 {
                Err(AugmentError::ConfigOutOfEnvelope { field })
            } else {
                Ok(())
            }
        };
        envelope("shear_x", self.shear_x, SHEAR_X_MAX)?;
        envelope("shear_y", self.shear_y, SHEAR_Y_MAX)?;
        envelope("rotation_deg", self.rotation_deg, ROTATION_MAX_DEG)?;
        envelope("translate_x_frac", self.translate_x_frac, TRANSLATE_X_MAX_FRAC)?;
        envelope("translate_y_frac", self.translate_y_frac, TRANSLATE_Y_MAX_FRAC)?;
        if self.poisson_lambdas.is_empty()
            || self.poisson_lambdas.iter().any(|l| !POISSON_LAMBDAS.contains(l))
        {
            return Err(AugmentError::ConfigOutOfEnvelope { field: "poisson_lambdas" });
        }
        if self.blur_radii.is_empty() || self.blur_radii.iter().any(|r| !BLUR_RADII.contains(r)) {
            return Err(AugmentError::ConfigOutOfEnvelope { field: "blur_radii" });
        }
        if !(0.0..=1.0).contains(&self.concat_probability) {
            return Err(AugmentError::ConfigOutOfEnvelope { field: "concat_probability" });
        }
        if !(0.0..=1.0).contains(&self.randaugment.magnitude_max) {
            return Err(AugmentError::ConfigOutOfEnvelope { field: "randaugment_magnitude" });
        }
        Ok(())
    }

    const KEYS: [&'static str; 14] = [
        "shear_x_min", "shear_x_max", "shear_y_min", "shear_y_max",
        "rotation_min", "rotation_max", "translate_x_min", "translate_x_max",
        "translate_y_min", "translate_y_max", "poisson_lambdas", "blur_radii",
        "concat_enabled", "concat_probability",
    ];

    /// Read overrides from a flat key=value config. Only keys listed in
    /// the shared format are accepted; randaugment keys come separately.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self, AugmentError> {
        let mut allowed: Vec<&str> = Self::KEYS.to_vec();
        allowed.extend(["randaugment_ops", "randaugment_n_ops", "randaugment_magnitude"]);
        cfg.validate_keys(&allowed)?;

        let mut out = AugmentConfig::default();
        let pair = |cfg: &KvConfig, lo: &str, hi: &str, cur: (f64, f64)| -> Result<(f64, f64), ConfigError> {
            Ok((
                cfg.get_parsed::<f64>(lo)?.unwrap_or(cur.0),
                cfg.get_parsed::<f64>(hi)?.unwrap_or(cur.1),
            ))
        };
        out.shear_x = pair(cfg, "shear_x_min", "shear_x_max", out.shear_x)?;
        out.shear_y = pair(cfg, "shear_y_min", "shear_y_max", out.shear_y)?;
        out.rotation_deg = pair(cfg, "rotation_min", "rotation_max", out.rotation_deg)?;
        out.translate_x_frac = pair(cfg, "translate_x_min", "translate_x_max", out.translate_x_frac)?;
        out.translate_y_frac = pair(cfg, "translate_y_min", "translate_y_max", out.translate_y_frac)?;
        if let Some(list) = cfg.get("poisson_lambdas") {
            out.poisson_lambdas = parse_u32_list(list, "poisson_lambdas")?;
        }
        if let Some(list) = cfg.get("blur_radii") {
            out.blur_radii = parse_u32_list(list, "blur_radii")?;
        }
        if let Some(b) = cfg.get_parsed::<bool>("concat_enabled")? {
            out.concat_enabled = b;
        }
        if let Some(p) = cfg.get_parsed::<f64>("concat_probability")? {
            out.concat_probability = p;
        }
        if let Some(list) = cfg.get("randaugment_ops") {
            out.randaugment.ops = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|name| {
                    PhotometricOp::from_name(name).ok_or(ConfigError::InvalidValue {
                        key: "randaugment_ops".into(),
                        value: name.into(),
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = cfg.get_parsed::<usize>("randaugment_n_ops")? {
            out.randaugment.n_ops = n;
        }
        if let Some(m) = cfg.get_parsed::<f64>("randaugment_magnitude")? {
            out.randaugment.magnitude_max = m;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut cfg = KvConfig::new();
        cfg.set("shear_x_min", self.shear_x.0);
        cfg.set("shear_x_max", self.shear_x.1);
        cfg.set("shear_y_min", self.shear_y.0);
        cfg.set("shear_y_max", self.shear_y.1);
        cfg.set("rotation_min", self.rotation_deg.0);
        cfg.set("rotation_max", self.rotation_deg.1);
        cfg.set("translate_x_min", self.translate_x_frac.0);
        cfg.set("translate_x_max", self.translate_x_frac.1);
        cfg.set("translate_y_min", self.translate_y_frac.0);
        cfg.set("translate_y_max", self.translate_y_frac.1);
        cfg.set("poisson_lambdas", join_u32(&self.poisson_lambdas));
        cfg.set("blur_radii", join_u32(&self.blur_radii));
        cfg.set("concat_enabled", self.concat_enabled);
        cfg.set("concat_probability", self.concat_probability);
        cfg.set(
            "randaugment_ops",
            self.randaugment
                .ops
                .iter()
                .map(|op| op.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        cfg.set("randaugment_n_ops", self.randaugment.n_ops);
        cfg.set("randaugment_magnitude", self.randaugment.magnitude_max);
        cfg
    }
}

fn parse_u32_list(list: &str, key: &'static str) -> Result<Vec<u32>, ConfigError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>().map_err(|_| ConfigError::InvalidValue {
                key: key.into(),
                value: s.into(),
            })
        })
        .collect()
}

fn join_u32(values: &[u32]) -> String {
    values.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// Affine composition `translation . rotation . shear` about the image
/// center with clamp-to-edge fill. Output dimensions equal input
/// dimensions; the label is unchanged.
///
/// `translation` is in pixels. Identity parameters reproduce the input
/// buffer exactly.
pub fn geometric_transform(
    img: &LabeledImage,
    shear: (f64, f64),
    rotation_deg: f64,
    translation: (f64, f64),
) -> Result<LabeledImage, AugmentError> {
    let (sx, sy) = shear;
    let (tx, ty) = translation;
    let check = |param: &'static str, value: f64, max: f64| {
        if !value.is_finite() || value.abs() > max + 1e-9 {
            Err(AugmentError::ParameterOutOfRange { param, value })
        } else {
            Ok(())
        }
    };
    check("shear_x", sx, SHEAR_X_MAX)?;
    check("shear_y", sy, SHEAR_Y_MAX)?;
    check("rotation_deg", rotation_deg, ROTATION_MAX_DEG)?;
    check("translate_x", tx, TRANSLATE_X_MAX_FRAC * img.width() as f64)?;
    check("translate_y", ty, TRANSLATE_Y_MAX_FRAC * img.height() as f64)?;

    let theta = rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    // Inverse mapping: undo translation, rotation, then shear.
    let det = 1.0 - sx * sy;
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;

    let mut pixels = vec![0u8; (w * h * 3) as usize];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let rx = cos * dx + sin * dy;
            let ry = -sin * dx + cos * dy;
            let ux = (rx - sx * ry) / det;
            let uy = (ry - sy * rx) / det;
            let rgb = img.sample_bilinear_clamped(ux + cx, uy + cy);
            let i = ((y * w + x) * 3) as usize;
            for c in 0..3 {
                pixels[i + c] = round_u8(rgb[c]);
            }
        }
    }
    Ok(img.with_buffer(w, h, pixels))
}

/// Additive Poisson noise: each channel value becomes
/// `clamp(v + Poisson(lambda), 0, 255)`. Lambda 0 is a strict identity
/// that consumes no randomness.
pub fn poisson_noise(
    img: &LabeledImage,
    lambda: u32,
    rng: &mut SeededRng,
) -> Result<LabeledImage, AugmentError> {
    if !POISSON_LAMBDAS.contains(&lambda) {
        return Err(AugmentError::ParameterOutOfRange {
            param: "poisson_lambda",
            value: lambda as f64,
        });
    }
    if lambda == 0 {
        return Ok(img.clone());
    }
    let mut out = img.clone();
    for v in out.pixels_mut() {
        let noise = rng.poisson(lambda as f64);
        *v = (*v as u32 + noise).min(255) as u8;
    }
    Ok(out)
}

/// Gaussian blur with `sigma = radius / 2`; radius 0 is a strict identity.
pub fn gaussian_blur(img: &LabeledImage, radius: u32) -> Result<LabeledImage, AugmentError> {
    if !BLUR_RADII.contains(&radius) {
        return Err(AugmentError::ParameterOutOfRange {
            param: "blur_radius",
            value: radius as f64,
        });
    }
    Ok(gaussian_blur_raw(img, radius))
}

/// Stack `b` beneath `a`. `b` is resized to `a`'s width preserving aspect
/// ratio; the output label is the exact concatenation of the two labels.
pub fn vconcat(a: &LabeledImage, b: &LabeledImage) -> LabeledImage {
    assert!(!a.label().is_empty() && !b.label().is_empty());
    let b = if b.width() == a.width() {
        b.clone()
    } else {
        let new_h = ((b.height() as f64 * a.width() as f64 / b.width() as f64).round() as u32).max(1);
        b.resize_bilinear(a.width(), new_h)
    };
    let w = a.width();
    let h = a.height() + b.height();
    let mut pixels = Vec::with_capacity((w * h * 3) as usize);
    pixels.extend_from_slice(a.pixels());
    pixels.extend_from_slice(b.pixels());
    let mut out = a.with_buffer(w, h, pixels);
    out.set_label(&format!("{}{}", a.label(), b.label()));
    out.provenance_mut().push("vconcat_peer", b.label());
    out
}

fn apply_factor_blend(img: &mut LabeledImage, reference: &[f64], factor: f64) {
    // out = ref + (v - ref) * factor, channelwise.
    let pixels = img.pixels_mut();
    for (i, v) in pixels.iter_mut().enumerate() {
        let r = reference[i];
        *v = round_u8(r + (*v as f64 - r) * factor);
    }
}

fn brightness(img: &mut LabeledImage, factor: f64) {
    let zeros = vec![0.0; img.pixels().len()];
    apply_factor_blend(img, &zeros, factor);
}

fn contrast(img: &mut LabeledImage, factor: f64) {
    let mean = img.pixels().iter().map(|&v| v as f64).sum::<f64>() / img.pixels().len() as f64;
    let refs = vec![mean; img.pixels().len()];
    apply_factor_blend(img, &refs, factor);
}

fn sharpness(img: &mut LabeledImage, factor: f64) {
    // Blend against a 3x3 smoothing of the image (center weight 5).
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut smooth = vec![0.0f64; img.pixels().len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let weight = if dx == 0 && dy == 0 { 5.0 } else { 1.0 };
                        let p = img.get_clamped(x + dx, y + dy);
                        acc += weight * p[c] as f64;
                        wsum += weight;
                    }
                }
                smooth[((y * w + x) * 3) as usize + c] = acc / wsum;
            }
        }
    }
    apply_factor_blend(img, &smooth, factor);
}

fn posterize(img: &mut LabeledImage, bits: u32) {
    debug_assert!((1..=8).contains(&bits));
    let mask: u8 = (0xffu16 << (8 - bits)) as u8;
    for v in img.pixels_mut() {
        *v &= mask;
    }
}

fn equalize(img: &mut LabeledImage) {
    // Per-channel histogram equalization.
    for c in 0..3 {
        let mut hist = [0u32; 256];
        for px in img.pixels().chunks(3) {
            hist[px[c] as usize] += 1;
        }
        let last_nonzero = (0..256).rev().find(|&i| hist[i] > 0).unwrap_or(0);
        let total: u32 = hist.iter().sum();
        let step = (total - hist[last_nonzero]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0u8; 256];
        let mut cum = step / 2;
        for i in 0..256 {
            lut[i] = (cum / step).min(255) as u8;
            cum += hist[i];
        }
        let width = img.width();
        for y in 0..img.height() {
            for x in 0..width {
                let mut rgb = img.get(x, y);
                rgb[c] = lut[rgb[c] as usize];
                img.set(x, y, rgb);
            }
        }
    }
}

/// Apply `cfg.n_ops` photometric operations at random magnitudes.
/// Magnitude 0 is the identity for every magnitude-bearing op.
pub fn randaugment_lite(
    img: &LabeledImage,
    cfg: &RandaugmentConfig,
    rng: &mut SeededRng,
) -> LabeledImage {
    let mut out = img.clone();
    if cfg.ops.is_empty() || cfg.n_ops == 0 {
        return out;
    }
    for k in 0..cfg.n_ops {
        let op = *rng.choose(&cfg.ops);
        let magnitude = rng.range_f64(0.0, cfg.magnitude_max);
        out.provenance_mut().push(&format!("ra_op{k}"), op.name());
        out.provenance_mut().push(&format!("ra_mag{k}"), magnitude);
        match op {
            PhotometricOp::Brightness | PhotometricOp::Contrast | PhotometricOp::Sharpness => {
                let dir = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                let factor = 1.0 + dir * magnitude;
                match op {
                    PhotometricOp::Brightness => brightness(&mut out, factor),
                    PhotometricOp::Contrast => contrast(&mut out, factor),
                    PhotometricOp::Sharpness => sharpness(&mut out, factor),
                    _ => unreachable!(),
                }
            }
            PhotometricOp::Posterize => {
                let bits = 8 - (magnitude * 4.0).round() as u32;
                posterize(&mut out, bits);
            }
            PhotometricOp::Equalize => equalize(&mut out),
        }
    }
    out
}

/// Source of random peer images for the concatenation augmentation. Must
/// be safe for concurrent draws.
pub trait PeerSource: Sync {
    fn draw(&self, rng: &mut SeededRng) -> Option<LabeledImage>;
}

impl PeerSource for [LabeledImage] {
    fn draw(&self, rng: &mut SeededRng) -> Option<LabeledImage> {
        if self.is_empty() {
            None
        } else {
            Some(self[rng.index(self.len())].clone())
        }
    }
}

impl PeerSource for Vec<LabeledImage> {
    fn draw(&self, rng: &mut SeededRng) -> Option<LabeledImage> {
        self.as_slice().draw(rng)
    }
}

/// No peers: concatenation never fires.
pub struct NoPeers;

impl PeerSource for NoPeers {
    fn draw(&self, _rng: &mut SeededRng) -> Option<LabeledImage> {
        None
    }
}

/// Full augmentation pipeline in fixed order: optional vconcat, then
/// geometric, Poisson noise, blur, and photometric ops. Deterministic
/// given `(img, cfg, seed)`; all draws are recorded in provenance.
pub fn apply_pipeline(
    img: &LabeledImage,
    cfg: &AugmentConfig,
    rng: &mut SeededRng,
    peers: &dyn PeerSource,
) -> Result<LabeledImage, AugmentError> {
    cfg.validate()?;
    let mut out = img.clone();
    out.provenance_mut().push("augment_seed", rng.seed());

    if cfg.concat_enabled {
        let fire = rng.bernoulli(cfg.concat_probability);
        out.provenance_mut().push("concat", fire);
        if fire {
            if let Some(peer) = peers.draw(rng) {
                out = vconcat(&out, &peer);
            }
        }
    }

    let sx = rng.range_f64(cfg.shear_x.0, cfg.shear_x.1);
    let sy = rng.range_f64(cfg.shear_y.0, cfg.shear_y.1);
    let rot = rng.range_f64(cfg.rotation_deg.0, cfg.rotation_deg.1);
    let tx = rng.range_f64(cfg.translate_x_frac.0, cfg.translate_x_frac.1) * out.width() as f64;
    let ty = rng.range_f64(cfg.translate_y_frac.0, cfg.translate_y_frac.1) * out.height() as f64;
    let lambda = *rng.choose(&cfg.poisson_lambdas);
    let radius = *rng.choose(&cfg.blur_radii);

    {
        let prov = out.provenance_mut();
        prov.push("shear_x", sx);
        prov.push("shear_y", sy);
        prov.push("rotation_deg", rot);
        prov.push("translate_x", tx);
        prov.push("translate_y", ty);
        prov.push("poisson_lambda", lambda);
        prov.push("blur_radius", radius);
    }

    let mut stage = geometric_transform(&out, (sx, sy), rot, (tx, ty))?;
    stage = poisson_noise(&stage, lambda, rng)?;
    stage = gaussian_blur(&stage, radius)?;
    let stage = randaugment_lite(&stage, &cfg.randaugment, rng);
    Ok(stage)
}
