//! Annotation data model and manifest persistence.
//!
//! A manifest is a JSON-lines file: an optional header object carrying the
//! schema tag and provenance, then one object per image:
//!
//! ```text
//! {"schema":"alpr-manifest/1","seed":7,"config_hash":"..."}
//! {"image":"images/000000.png","width":320,"height":96,"annotations":[
//!     {"polygon":[[0,0],[320,0],[320,96],[0,96]],"bbox":[0,0,320,96],
//!      "categories":["license_plate"],"text":"GJ01AB1234","confidence":null}]}
//! ```
//!
//! Coordinates are pixels with the origin at the top left. The schema is
//! closed: unknown fields and unknown categories are rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plate::{normalize, parse_structural};
use crate::rng::SeededRng;

pub const SCHEMA_TAG: &str = "alpr-manifest/1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest line {line}: schema violation: {invariant}")]
    SchemaViolation { line: usize, invariant: String },
    #[error("split ratio {0} must be in (0, 1)")]
    InvalidRatio(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The six annotation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    LicensePlate,
    PartialText,
    Obscured,
    Unreadable,
    BarelyReadable,
    DoublePlate,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::LicensePlate,
        Category::PartialText,
        Category::Obscured,
        Category::Unreadable,
        Category::BarelyReadable,
        Category::DoublePlate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Category::LicensePlate => "license_plate",
            Category::PartialText => "partial_text",
            Category::Obscured => "obscured",
            Category::Unreadable => "unreadable",
            Category::BarelyReadable => "barely_readable",
            Category::DoublePlate => "double_plate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One polygon + box annotation, flattened with its image context.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    /// (width, height) of the parent image in pixels.
    pub image_size: (u32, u32),
    pub polygon: Vec<[f64; 2]>,
    /// (x, y, w, h) in pixels.
    pub bbox: [f64; 4],
    pub categories: BTreeSet<Category>,
    /// Canonical plate text; absent for unreadable ground truth.
    pub text: Option<String>,
    /// Present only on prediction records.
    pub confidence: Option<f64>,
}

impl AnnotationRecord {
    pub fn is_ground_truth(&self) -> bool {
        self.confidence.is_none()
    }
}

/// An image plus its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<AnnotationRecord>,
}

/// Optional first line of a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Default for Header {
    fn default() -> Self {
        Self {
            schema: SCHEMA_TAG.to_string(),
            seed: None,
            config_hash: None,
        }
    }
}

/// Ordered collection of image entries with a schema version tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub header: Header,
    entries: Vec<ImageEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAnnotation {
    polygon: Vec<[f64; 2]>,
    bbox: [f64; 4],
    categories: Vec<String>,
    text: Option<String>,
    confidence: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    image: String,
    width: u32,
    height: u32,
    annotations: Vec<WireAnnotation>,
}

impl Manifest {
    pub fn new(header: Header) -> Self {
        Self {
            header,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[ImageEntry] {
        &self.entries
    }

    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.entries.iter().flat_map(|e| e.annotations.iter())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append an entry, enforcing the schema invariants.
    pub fn push_entry(&mut self, entry: ImageEntry) -> Result<(), DatasetError> {
        let line = self.entries.len() + 2; // header is line 1
        if self.entries.iter().any(|e| e.image == entry.image) {
            return Err(DatasetError::SchemaViolation {
                line,
                invariant: format!("image_ids unique: `{}` repeats", entry.image),
            });
        }
        validate_entry(&entry, line)?;
        self.entries.push(entry);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut manifest = Manifest::default();
        let mut first_content_line = true;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if first_content_line {
                first_content_line = false;
                // The optional header is whatever first line parses as one.
                if let Ok(header) = serde_json::from_str::<Header>(line) {
                    if header.schema != SCHEMA_TAG {
                        return Err(DatasetError::SchemaViolation {
                            line: line_no,
                            invariant: format!("unsupported schema `{}`", header.schema),
                        });
                    }
                    manifest.header = header;
                    continue;
                }
            }
            let wire: WireEntry = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let entry = entry_from_wire(wire, line_no)?;
            if manifest.entries.iter().any(|e| e.image == entry.image) {
                return Err(DatasetError::SchemaViolation {
                    line: line_no,
                    invariant: format!("image_ids unique: `{}` repeats", entry.image),
                });
            }
            validate_entry(&entry, line_no)?;
            manifest.entries.push(entry);
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical byte rendering: header line, then one entry per line.
    /// `parse . render` is the identity on rendered bytes.
    pub fn render(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for entry in &self.entries {
            let wire = WireEntry {
                image: entry.image.clone(),
                width: entry.width,
                height: entry.height,
                annotations: entry
                    .annotations
                    .iter()
                    .map(|a| WireAnnotation {
                        polygon: a.polygon.clone(),
                        bbox: a.bbox,
                        categories: a.categories.iter().map(|c| c.name().to_string()).collect(),
                        text: a.text.clone(),
                        confidence: a.confidence,
                    })
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&wire).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    /// Import `path<TAB>width<TAB>height<TAB>x,y,w,h<TAB>TEXT` lines as
    /// single-category `license_plate` records (the documented plain-bbox
    /// interchange form). The text column is mandatory: readable ground
    /// truth must carry its transcription.
    pub fn from_bbox_lines(text: &str) -> Result<Self, DatasetError> {
        let mut manifest = Manifest::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 5 {
                return Err(DatasetError::Parse {
                    line: line_no,
                    msg: "expected `path<TAB>W<TAB>H<TAB>x,y,w,h<TAB>TEXT`".into(),
                });
            }
            let parse_num = |s: &str| -> Result<f64, DatasetError> {
                s.trim().parse().map_err(|_| DatasetError::Parse {
                    line: line_no,
                    msg: format!("bad number `{s}`"),
                })
            };
            let width = parse_num(parts[1])? as u32;
            let height = parse_num(parts[2])? as u32;
            let nums: Vec<f64> = parts[3]
                .split(',')
                .map(parse_num)
                .collect::<Result<_, _>>()?;
            if nums.len() != 4 {
                return Err(DatasetError::Parse {
                    line: line_no,
                    msg: "bbox needs 4 comma-separated numbers".into(),
                });
            }
            let bbox = [nums[0], nums[1], nums[2], nums[3]];
            let text_field = Some(normalize(parts[4]));
            let record = AnnotationRecord {
                image_id: parts[0].to_string(),
                image_size: (width, height),
                polygon: bbox_polygon(bbox),
                bbox,
                categories: BTreeSet::from([Category::LicensePlate]),
                text: text_field,
                confidence: None,
            };
            let entry = ImageEntry {
                image: parts[0].to_string(),
                width,
                height,
                annotations: vec![record],
            };
            if manifest.entries.iter().any(|e| e.image == entry.image) {
                return Err(DatasetError::SchemaViolation {
                    line: line_no,
                    invariant: format!("image_ids unique: `{}` repeats", entry.image),
                });
            }
            validate_entry(&entry, line_no)?;
            manifest.entries.push(entry);
        }
        Ok(manifest)
    }
}

/// Four-corner polygon of a box, clockwise from the top left.
pub fn bbox_polygon(bbox: [f64; 4]) -> Vec<[f64; 2]> {
    let [x, y, w, h] = bbox;
    vec![[x, y], [x + w, y], [x + w, y + h], [x, y + h]]
}

fn entry_from_wire(wire: WireEntry, line: usize) -> Result<ImageEntry, DatasetError> {
    let mut annotations = Vec::with_capacity(wire.annotations.len());
    for a in wire.annotations {
        let mut categories = BTreeSet::new();
        for name in &a.categories {
            let cat = Category::from_name(name).ok_or_else(|| DatasetError::SchemaViolation {
                line,
                invariant: format!("categories: unknown category `{name}`"),
            })?;
            categories.insert(cat);
        }
        annotations.push(AnnotationRecord {
            image_id: wire.image.clone(),
            image_size: (wire.width, wire.height),
            polygon: a.polygon,
            bbox: a.bbox,
            categories,
            text: a.text,
            confidence: a.confidence,
        });
    }
    Ok(ImageEntry {
        image: wire.image,
        width: wire.width,
        height: wire.height,
        annotations,
    })
}

fn validate_entry(entry: &ImageEntry, line: usize) -> Result<(), DatasetError> {
    let violation = |invariant: String| DatasetError::SchemaViolation { line, invariant };
    if entry.image.is_empty() {
        return Err(violation("image path must be non-empty".into()));
    }
    if entry.width == 0 || entry.height == 0 {
        return Err(violation("image dimensions must be positive".into()));
    }
    for a in &entry.annotations {
        if a.image_id != entry.image || a.image_size != (entry.width, entry.height) {
            return Err(violation("record image context mismatch".into()));
        }
        if a.polygon.len() < 3 {
            return Err(violation(format!(
                "polygon needs >= 3 points, got {}",
                a.polygon.len()
            )));
        }
        let [x, y, w, h] = a.bbox;
        if !(w > 0.0 && h > 0.0) {
            return Err(violation(format!("bbox w,h must be positive, got {w}x{h}")));
        }
        if x < -1e-6
            || y < -1e-6
            || x + w > entry.width as f64 + 1e-6
            || y + h > entry.height as f64 + 1e-6
        {
            return Err(violation("bbox must lie within image bounds".into()));
        }
        // bbox == tight axis-aligned bound of the polygon, within 1 px.
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for [px, py] in &a.polygon {
            min_x = min_x.min(*px);
            min_y = min_y.min(*py);
            max_x = max_x.max(*px);
            max_y = max_y.max(*py);
        }
        let tight = [min_x, min_y, max_x - min_x, max_y - min_y];
        if a.bbox.iter().zip(&tight).any(|(b, t)| (b - t).abs() > 1.0) {
            return Err(violation(format!(
                "bbox {:?} is not the tight polygon bound {:?} (1 px tolerance)",
                a.bbox, tight
            )));
        }
        if a.categories.is_empty() {
            return Err(violation("categories must be non-empty".into()));
        }
        let unreadable = a.categories.contains(&Category::Unreadable);
        match (&a.text, unreadable, a.is_ground_truth()) {
            (Some(_), true, _) => {
                return Err(violation("unreadable records must not carry text".into()))
            }
            (None, false, true) => {
                return Err(violation(
                    "readable ground-truth records must carry text".into(),
                ))
            }
            _ => {}
        }
        if let Some(text) = &a.text {
            if text.is_empty()
                || !text.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
            {
                return Err(violation(format!(
                    "text `{text}` must be canonical (uppercase alphanumeric)"
                )));
            }
        }
        if let Some(conf) = a.confidence {
            if !(0.0..=1.0).contains(&conf) {
                return Err(violation(format!("confidence {conf} outside [0, 1]")));
            }
        }
    }
    Ok(())
}

/// Which consumer a validation view feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Detection,
    Recognition,
}

/// Training view: every record except `unreadable` ones, treated as one
/// detection class.
pub fn select_training_view(manifest: &Manifest) -> Vec<&AnnotationRecord> {
    manifest
        .records()
        .filter(|r| !r.categories.contains(&Category::Unreadable))
        .collect()
}

/// Validation view. Detection keeps the training filter; recognition keeps
/// only records whose category set is exactly `{license_plate}`.
pub fn select_validation_view(manifest: &Manifest, task: Task) -> Vec<&AnnotationRecord> {
    match task {
        Task::Detection => select_training_view(manifest),
        Task::Recognition => manifest
            .records()
            .filter(|r| r.categories.len() == 1 && r.categories.contains(&Category::LicensePlate))
            .collect(),
    }
}

/// Split image entries into train/val so that no plate text appears on
/// both sides.
///
/// Entries sharing any canonical text are merged into one group (textless
/// records pin their group to the image itself), each group lands wholly
/// on one side, and `round(ratio * n_groups)` groups go to validation.
/// Deterministic in `seed`.
pub fn leakage_safe_split(
    manifest: &Manifest,
    val_ratio: f64,
    seed: u64,
) -> Result<(Manifest, Manifest), DatasetError> {
    if !(val_ratio > 0.0 && val_ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(val_ratio));
    }
    let n = manifest.entries.len();
    // Union-find over entry indices.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let mut by_text: HashMap<String, usize> = HashMap::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        for record in &entry.annotations {
            if let Some(text) = &record.text {
                match by_text.get(text.as_str()) {
                    Some(&j) => {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        parent[ri] = rj;
                    }
                    None => {
                        by_text.insert(text.clone(), i);
                    }
                }
            }
        }
    }

    // Groups keyed by their smallest member index for a stable base order.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut group_list: Vec<Vec<usize>> = groups.into_values().collect();

    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut group_list);
    let n_val = ((val_ratio * group_list.len() as f64).round() as usize).min(group_list.len());

    let mut val_indices = BTreeSet::new();
    for group in group_list.iter().take(n_val) {
        val_indices.extend(group.iter().copied());
    }

    let mut train = Manifest::new(manifest.header.clone());
    let mut val = Manifest::new(manifest.header.clone());
    for (i, entry) in manifest.entries.iter().enumerate() {
        if val_indices.contains(&i) {
            val.entries.push(entry.clone());
        } else {
            train.entries.push(entry.clone());
        }
    }
    Ok((train, val))
}

/// Aggregate counts for a manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ManifestStats {
    pub n_images: usize,
    pub n_records: usize,
    pub per_category: BTreeMap<String, usize>,
    /// Records carrying more than one category.
    pub multi_category: usize,
    pub text_length_hist: BTreeMap<usize, usize>,
    /// Records per parsed state code; unparsable texts count as `other`.
    pub per_state: BTreeMap<String, usize>,
}

pub fn manifest_stats(manifest: &Manifest) -> ManifestStats {
    let mut stats = ManifestStats {
        n_images: manifest.entries.len(),
        ..Default::default()
    };
    for record in manifest.records() {
        stats.n_records += 1;
        for cat in &record.categories {
            *stats.per_category.entry(cat.name().to_string()).or_default() += 1;
        }
        if record.categories.len() > 1 {
            stats.multi_category += 1;
        }
        if let Some(text) = &record.text {
            *stats
                .text_length_hist
                .entry(text.chars().count())
                .or_default() += 1;
            let state = parse_structural(text)
                .map(|f| f.state_code().to_string())
                .unwrap_or_else(|_| "other".to_string());
            *stats.per_state.entry(state).or_default() += 1;
        }
    }
    stats
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images:  {}", self.n_images)?;
        writeln!(
            f,
            "records: {} ({} multi-category)",
            self.n_records, self.multi_category
        )?;
        writeln!(f, "categories:")?;
        for (cat, n) in &self.per_category {
            writeln!(f, "  {cat:<16} {n}")?;
        }
        writeln!(f, "text lengths:")?;
        for (len, n) in &self.text_length_hist {
            writeln!(f, "  {len:<16} {n}")?;
        }
        writeln!(f, "states:")?;
        for (state, n) in &self.per_state {
            writeln!(f, "  {state:<16} {n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(image: &str, categories: &[Category], text: Option<&str>) -> ImageEntry {
        let (w, h) = (100u32, 50u32);
        let bbox = [0.0, 0.0, w as f64, h as f64];
        ImageEntry {
            image: image.to_string(),
            width: w,
            height: h,
            annotations: vec![AnnotationRecord {
                image_id: image.to_string(),
                image_size: (w, h),
                polygon: bbox_polygon(bbox),
                bbox,
                categories: categories.iter().copied().collect(),
                text: text.map(String::from),
                confidence: None,
            }],
        }
    }

    fn manifest(entries: Vec<ImageEntry>) -> Manifest {
        let mut m = Manifest::default();
        for e in entries {
            m.push_entry(e).unwrap();
        }
        m
    }

    #[test]
    fn render_parse_round_trip_is_byte_stable() {
        let m = manifest(vec![
            entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234")),
            entry(
                "b.png",
                &[Category::LicensePlate, Category::Obscured],
                Some("HR551234"),
            ),
            entry("c.png", &[Category::Unreadable], None),
        ]);
        let bytes = m.render();
        let reparsed = Manifest::parse(&bytes).unwrap();
        assert_eq!(reparsed.render(), bytes);
        assert_eq!(reparsed, m);
    }

    #[test]
    fn normalization_pass_is_byte_stable() {
        // Loose input spacing and float forms normalize once, then stay put.
        let loose = concat!(
            "{\"image\": \"a.png\", \"width\": 100, \"height\": 50, ",
            "\"annotations\": [{\"polygon\": [[0, 0], [100.00, 0], [100, 50], [0, 50]], ",
            "\"bbox\": [0, 0, 100, 50], \"categories\": [\"license_plate\"], ",
            "\"text\": \"GJ01AB1234\", \"confidence\": null}]}\n"
        );
        let once = Manifest::parse(loose).unwrap().render();
        let twice = Manifest::parse(&once).unwrap().render();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_category_is_a_schema_violation() {
        let line = r#"{"image":"a.png","width":10,"height":10,"annotations":[{"polygon":[[0,0],[10,0],[10,10],[0,10]],"bbox":[0,0,10,10],"categories":["truck"],"text":null,"confidence":null}]}"#;
        let err = Manifest::parse(line).unwrap_err();
        assert!(
            matches!(err, DatasetError::SchemaViolation { line: 1, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("truck"));
    }

    #[test]
    fn header_detection_does_not_misfire_on_entry_lines() {
        // First line is a plain entry whose image id contains "schema".
        let line = r#"{"image":"schema","width":10,"height":10,"annotations":[{"polygon":[[0,0],[10,0],[10,10],[0,10]],"bbox":[0,0,10,10],"categories":["license_plate"],"text":"GJ01AB1234","confidence":null}]}"#;
        let m = Manifest::parse(line).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.header, Header::default());
    }

    #[test]
    fn wrong_schema_tag_is_rejected() {
        let err = Manifest::parse("{\"schema\":\"alpr-manifest/9\"}\n").unwrap_err();
        assert!(err.to_string().contains("unsupported schema"));
    }

    #[test]
    fn unknown_field_is_rejected_with_line_number() {
        let text = "{\"schema\":\"alpr-manifest/1\"}\n{\"image\":\"a.png\",\"width\":10,\"height\":10,\"annotations\":[],\"extra\":1}\n";
        let err = Manifest::parse(text).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn multi_category_records_are_accepted() {
        let m = manifest(vec![entry(
            "a.png",
            &[Category::LicensePlate, Category::Obscured],
            Some("GJ01AB1234"),
        )]);
        assert_eq!(m.records().next().unwrap().categories.len(), 2);
    }

    #[test]
    fn duplicate_image_ids_are_rejected() {
        let mut m = manifest(vec![entry(
            "a.png",
            &[Category::LicensePlate],
            Some("GJ01AB1234"),
        )]);
        let err = m
            .push_entry(entry("a.png", &[Category::LicensePlate], Some("HR551234")))
            .unwrap_err();
        assert!(err.to_string().contains("unique"));
    }

    #[test]
    fn bbox_must_be_tight_polygon_bound() {
        let mut e = entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234"));
        e.annotations[0].bbox = [0.0, 0.0, 50.0, 50.0];
        let err = Manifest::default().push_entry(e).unwrap_err();
        assert!(err.to_string().contains("tight"), "{err}");
    }

    #[test]
    fn bbox_must_fit_in_image() {
        let mut e = entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234"));
        e.annotations[0].bbox = [60.0, 0.0, 100.0, 50.0];
        e.annotations[0].polygon = bbox_polygon([60.0, 0.0, 100.0, 50.0]);
        let err = Manifest::default().push_entry(e).unwrap_err();
        assert!(err.to_string().contains("bounds"), "{err}");
    }

    #[test]
    fn unreadable_text_rules() {
        let mut m = Manifest::default();
        let mut e = entry("a.png", &[Category::Unreadable], None);
        e.annotations[0].text = Some("GJ01AB1234".into());
        assert!(m.push_entry(e).is_err());

        let e = entry("b.png", &[Category::LicensePlate], None);
        assert!(m.push_entry(e).is_err());

        // Predictions may omit text.
        let mut e = entry("c.png", &[Category::LicensePlate], None);
        e.annotations[0].confidence = Some(0.9);
        assert!(m.push_entry(e).is_ok());
    }

    #[test]
    fn non_canonical_text_is_rejected() {
        let mut e = entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234"));
        e.annotations[0].text = Some("gj 01".into());
        assert!(Manifest::default().push_entry(e).is_err());
    }

    #[test]
    fn confidence_range_is_enforced() {
        let mut e = entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234"));
        e.annotations[0].confidence = Some(1.5);
        assert!(Manifest::default().push_entry(e).is_err());
    }

    #[test]
    fn training_view_excludes_unreadable_only() {
        let m = manifest(vec![
            entry("a.png", &[Category::Unreadable], None),
            entry(
                "b.png",
                &[Category::PartialText, Category::Obscured],
                Some("GJ01AB1234"),
            ),
            entry("c.png", &[Category::LicensePlate], Some("HR551234")),
            entry("d.png", &[Category::DoublePlate], Some("MH12AB0001")),
        ]);
        let view = select_training_view(&m);
        let ids: Vec<&str> = view.iter().map(|r| r.image_id.as_str()).collect();
        assert_eq!(ids, ["b.png", "c.png", "d.png"]);
    }

    #[test]
    fn empty_manifest_views_are_empty() {
        let m = Manifest::default();
        assert!(select_training_view(&m).is_empty());
        assert!(select_validation_view(&m, Task::Recognition).is_empty());
    }

    #[test]
    fn recognition_view_requires_exactly_license_plate() {
        let m = manifest(vec![
            entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234")),
            entry(
                "b.png",
                &[Category::LicensePlate, Category::Obscured],
                Some("HR551234"),
            ),
            entry("c.png", &[Category::BarelyReadable], Some("MH12AB0001")),
            entry("d.png", &[Category::Unreadable], None),
        ]);
        let rec = select_validation_view(&m, Task::Recognition);
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].image_id, "a.png");
        // Detection validation matches the training filter.
        let det = select_validation_view(&m, Task::Detection);
        assert_eq!(det.len(), 3);
    }

    /// Independent filter oracle for the recognition view rule.
    #[test]
    fn recognition_view_matches_filter_oracle() {
        let combos: Vec<Vec<Category>> = vec![
            vec![Category::LicensePlate],
            vec![Category::BarelyReadable],
            vec![Category::LicensePlate, Category::PartialText],
            vec![Category::LicensePlate, Category::BarelyReadable],
            vec![Category::Obscured],
            vec![Category::DoublePlate],
        ];
        let entries: Vec<ImageEntry> = combos
            .iter()
            .enumerate()
            .map(|(i, cats)| entry(&format!("i{i}.png"), cats, Some("GJ01AB1234")))
            .collect();
        let m = manifest(entries);
        let got: BTreeSet<String> = select_validation_view(&m, Task::Recognition)
            .iter()
            .map(|r| r.image_id.clone())
            .collect();
        // Oracle: re-state the rule directly over the combo list.
        let want: BTreeSet<String> = combos
            .iter()
            .enumerate()
            .filter(|(_, cats)| cats.as_slice() == [Category::LicensePlate])
            .map(|(i, _)| format!("i{i}.png"))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn repeated_text_stays_in_one_split() {
        let m = manifest(vec![
            entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234")),
            entry("b.png", &[Category::LicensePlate], Some("GJ01AB1234")),
            entry("c.png", &[Category::LicensePlate], Some("HR551234")),
            entry("d.png", &[Category::LicensePlate], Some("MH12AB0001")),
        ]);
        for seed in 0..50 {
            let (train, val) = leakage_safe_split(&m, 0.5, seed).unwrap();
            let side = |m: &Manifest| -> BTreeSet<String> {
                m.records().filter_map(|r| r.text.clone()).collect()
            };
            assert!(side(&train).is_disjoint(&side(&val)), "seed {seed}");
            let a_in_train = train.entries().iter().any(|e| e.image == "a.png");
            let b_in_train = train.entries().iter().any(|e| e.image == "b.png");
            assert_eq!(a_in_train, b_in_train, "seed {seed}");
        }
    }

    #[test]
    fn split_counts_match_ratio_within_two_groups() {
        let entries: Vec<ImageEntry> = (0..100)
            .map(|i| {
                entry(
                    &format!("img{i:03}.png"),
                    &[Category::LicensePlate],
                    Some(&format!("GJ{:02}AB{:04}", i % 99 + 1, i)),
                )
            })
            .collect();
        let m = manifest(entries);
        for seed in 0..20 {
            let (_, val) = leakage_safe_split(&m, 0.1, seed).unwrap();
            assert!(
                (9..=11).contains(&val.len()),
                "seed {seed}: val got {} groups",
                val.len()
            );
        }
    }

    #[test]
    fn split_is_deterministic() {
        let entries: Vec<ImageEntry> = (0..30)
            .map(|i| {
                entry(
                    &format!("img{i}.png"),
                    &[Category::LicensePlate],
                    Some(&format!("GJ01AB{i:04}")),
                )
            })
            .collect();
        let m = manifest(entries);
        let (t1, v1) = leakage_safe_split(&m, 0.2, 3).unwrap();
        let (t2, v2) = leakage_safe_split(&m, 0.2, 3).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn invalid_ratio_is_rejected() {
        let m = manifest(vec![entry(
            "a.png",
            &[Category::LicensePlate],
            Some("GJ01AB1234"),
        )]);
        assert!(leakage_safe_split(&m, 0.0, 1).is_err());
        assert!(leakage_safe_split(&m, 1.0, 1).is_err());
    }

    #[test]
    fn textless_records_group_by_image() {
        let m = manifest(vec![
            entry("u1.png", &[Category::Unreadable], None),
            entry("u2.png", &[Category::Unreadable], None),
            entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234")),
            entry("b.png", &[Category::LicensePlate], Some("HR551234")),
        ]);
        let (train, val) = leakage_safe_split(&m, 0.5, 7).unwrap();
        assert_eq!(train.len() + val.len(), 4);
    }

    #[test]
    fn empty_manifest_stats_are_zero() {
        let stats = manifest_stats(&Manifest::default());
        assert_eq!(stats, ManifestStats::default());
    }

    #[test]
    fn single_record_stats() {
        let m = manifest(vec![entry(
            "a.png",
            &[Category::LicensePlate],
            Some("GJ01AB1234"),
        )]);
        let stats = manifest_stats(&m);
        assert_eq!(stats.per_category["license_plate"], 1);
        assert_eq!(stats.n_records, 1);
        assert_eq!(stats.multi_category, 0);
    }

    /// Counting oracle: a 2-category record counts once per category and
    /// once in the multi-category tally.
    #[test]
    fn stats_count_categories_and_multi() {
        let m = manifest(vec![
            entry("a.png", &[Category::LicensePlate], Some("GJ01AB1234")),
            entry(
                "b.png",
                &[Category::PartialText, Category::Obscured],
                Some("HR551234"),
            ),
        ]);
        let stats = manifest_stats(&m);
        assert_eq!(stats.per_category["license_plate"], 1);
        assert_eq!(stats.per_category["partial_text"], 1);
        assert_eq!(stats.per_category["obscured"], 1);
        assert_eq!(stats.multi_category, 1);
        assert_eq!(stats.per_state["GJ"], 1);
        assert_eq!(stats.per_state["HR"], 1);
        assert_eq!(stats.text_length_hist[&10], 1);
        assert_eq!(stats.text_length_hist[&8], 1);
        let total: usize = stats.per_category.values().sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn bbox_line_import() {
        let text = "imgs/t1.png\t320\t240\t10,20,100,40\tGJ01AB1234\n";
        let m = Manifest::from_bbox_lines(text).unwrap();
        assert_eq!(m.len(), 1);
        let first = m.records().next().unwrap();
        assert_eq!(first.bbox, [10.0, 20.0, 100.0, 40.0]);
        assert_eq!(first.text.as_deref(), Some("GJ01AB1234"));
        assert!(Manifest::from_bbox_lines("bad line\n").is_err());
        // Text column is mandatory.
        assert!(Manifest::from_bbox_lines("imgs/t2.png\t320\t240\t1,1,5,5\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_never_leaks_text(seed in any::<u64>(), ratio in 0.05f64..0.95) {
                let entries: Vec<ImageEntry> = (0..40)
                    .map(|i| {
                        // Forced repeats: only 8 distinct plate texts.
                        entry(
                            &format!("img{i}.png"),
                            &[Category::LicensePlate],
                            Some(&format!("GJ01AB{:04}", i % 8)),
                        )
                    })
                    .collect();
                let m = manifest(entries);
                let (train, val) = leakage_safe_split(&m, ratio, seed).unwrap();
                let train_texts: BTreeSet<String> =
                    train.records().filter_map(|r| r.text.clone()).collect();
                let val_texts: BTreeSet<String> =
                    val.records().filter_map(|r| r.text.clone()).collect();
                prop_assert!(train_texts.is_disjoint(&val_texts));
                prop_assert_eq!(train.len() + val.len(), 40);
            }
        }
    }
}
