//! Indian license-plate grammar: parsing, validation, weighted sampling,
//! and the probabilistic multi-line layout used for synthetic generation.
//!
//! A plate is `SS DD[D?] RRR NNNN`: a two-letter state code, a one- or
//! two-digit district code, an optional series of up to three letters, and
//! exactly four digits. The canonical form is the uppercase concatenation
//! with no separators, e.g. `GJ01AB1234`.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum PlateError {
    #[error("malformed plate `{0}`: no valid grammar decomposition")]
    MalformedPlate(String),
    #[error("unknown state code `{0}`")]
    UnknownStateCode(String),
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("registry line {line}: {msg}")]
    RegistryParse { line: usize, msg: String },
    #[error("break position {0:?} is not eligible for these fields")]
    IneligibleBreak(BreakPosition),
}

/// Uppercase the input and strip all whitespace (including newlines).
///
/// Handwritten-plate labels vary in case and spacing; every comparison and
/// parse in this crate goes through this normalization first.
pub fn normalize(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

/// The four grammar components of a plate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlateFields {
    state_code: String,
    district_code: String,
    series_code: String,
    number: String,
}

impl PlateFields {
    /// Assemble fields directly; validates shape but not registry membership.
    pub fn new(
        state_code: &str,
        district_code: &str,
        series_code: &str,
        number: &str,
    ) -> Result<Self, PlateError> {
        let fields = Self {
            state_code: state_code.to_string(),
            district_code: district_code.to_string(),
            series_code: series_code.to_string(),
            number: number.to_string(),
        };
        let text = fields.canonical_text();
        let reparsed = parse_structural(&text)?;
        if reparsed != fields {
            return Err(PlateError::MalformedPlate(text));
        }
        Ok(fields)
    }

    pub fn state_code(&self) -> &str {
        &self.state_code
    }

    pub fn district_code(&self) -> &str {
        &self.district_code
    }

    pub fn series_code(&self) -> &str {
        &self.series_code
    }

    pub fn number(&self) -> &str {
        &self.number
    }

    /// Canonical string: uppercase concatenation, no separators.
    pub fn canonical_text(&self) -> String {
        format!(
            "{}{}{}{}",
            self.state_code, self.district_code, self.series_code, self.number
        )
    }

    /// Break positions that split this plate into two non-empty parts.
    ///
    /// With an empty series code, `AfterDistrict` and `AfterSeries` denote
    /// the same string offset; `AfterSeries` is dropped so no break can
    /// produce an empty line.
    pub fn eligible_breaks(&self) -> Vec<BreakPosition> {
        let mut out = vec![BreakPosition::AfterState, BreakPosition::AfterDistrict];
        if !self.series_code.is_empty() {
            out.push(BreakPosition::AfterSeries);
        }
        out
    }

    fn break_offset(&self, pos: BreakPosition) -> usize {
        match pos {
            BreakPosition::AfterState => self.state_code.len(),
            BreakPosition::AfterDistrict => self.state_code.len() + self.district_code.len(),
            BreakPosition::AfterSeries => {
                self.state_code.len() + self.district_code.len() + self.series_code.len()
            }
        }
    }
}

impl fmt::Display for PlateFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

/// Structural decomposition without a registry check.
///
/// The grammar is unambiguous: the first run of letters is the state code
/// (exactly 2), the next run of digits the district code (1-2), the next
/// run of letters the series code (0-3), and the final run of digits the
/// number (exactly 4).
pub fn parse_structural(text: &str) -> Result<PlateFields, PlateError> {
    let text = normalize(text);
    let err = || PlateError::MalformedPlate(text.clone());
    let chars: Vec<char> = text.chars().collect();
    if chars.iter().any(|c| !c.is_ascii_alphanumeric()) {
        return Err(err());
    }

    let mut runs: Vec<(bool, String)> = Vec::new(); // (is_alpha, run)
    for &c in &chars {
        let alpha = c.is_ascii_alphabetic();
        match runs.last_mut() {
            Some((last_alpha, run)) if *last_alpha == alpha => run.push(c),
            _ => runs.push((alpha, c.to_string())),
        }
    }

    let (state, district, series, number) = match runs.as_slice() {
        [(true, s), (false, d), (true, r), (false, n)] => {
            (s.clone(), d.clone(), r.clone(), n.clone())
        }
        [(true, s), (false, d)] if d.len() >= 5 => {
            // No series: the digit run is district ++ number.
            let split = d.len() - 4;
            (s.clone(), d[..split].to_string(), String::new(), d[split..].to_string())
        }
        _ => return Err(err()),
    };

    if state.len() != 2
        || district.is_empty()
        || district.len() > 2
        || series.len() > 3
        || number.len() != 4
    {
        return Err(err());
    }

    Ok(PlateFields {
        state_code: state,
        district_code: district,
        series_code: series,
        number,
    })
}

/// Where a line break may be inserted in the canonical string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BreakPosition {
    AfterState,
    AfterDistrict,
    AfterSeries,
}

/// A plate split into 1-3 display lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlateLayout {
    fields: PlateFields,
    break_positions: BTreeSet<BreakPosition>,
    lines: Vec<String>,
}

impl PlateLayout {
    /// Build a layout from an explicit break set.
    pub fn from_breaks(
        fields: PlateFields,
        breaks: &BTreeSet<BreakPosition>,
    ) -> Result<Self, PlateError> {
        let eligible = fields.eligible_breaks();
        for b in breaks {
            if !eligible.contains(b) {
                return Err(PlateError::IneligibleBreak(*b));
            }
        }
        let text = fields.canonical_text();
        let mut offsets: Vec<usize> = breaks.iter().map(|&b| fields.break_offset(b)).collect();
        offsets.sort_unstable();
        offsets.dedup();

        let mut lines = Vec::with_capacity(offsets.len() + 1);
        let mut start = 0;
        for off in offsets {
            lines.push(text[start..off].to_string());
            start = off;
        }
        lines.push(text[start..].to_string());
        debug_assert!(lines.iter().all(|l| !l.is_empty()));

        Ok(Self {
            fields,
            break_positions: breaks.clone(),
            lines,
        })
    }

    pub fn single_line(fields: PlateFields) -> Self {
        Self::from_breaks(fields, &BTreeSet::new()).expect("empty break set is always eligible")
    }

    pub fn fields(&self) -> &PlateFields {
        &self.fields
    }

    pub fn break_positions(&self) -> &BTreeSet<BreakPosition> {
        &self.break_positions
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn canonical_text(&self) -> String {
        self.lines.concat()
    }
}

/// Joined layout text; identical to re-parsing the fields.
pub fn canonical_text(layout: &PlateLayout) -> String {
    layout.canonical_text()
}

/// Insert line breaks into a plate according to the pinned probability
/// model:
///
/// 1. with probability 0.5, one break at a position chosen uniformly from
///    the eligible positions;
/// 2. independently of 1, each eligible position gains a break with
///    probability 0.05;
/// 3. duplicate breaks collapse; if all three positions fire (which would
///    make four lines), the `AfterSeries` break is dropped so the layout
///    never exceeds three lines.
pub fn layout_plate(fields: &PlateFields, rng: &mut SeededRng) -> PlateLayout {
    let eligible = fields.eligible_breaks();
    let mut breaks = BTreeSet::new();
    if rng.bernoulli(0.5) {
        breaks.insert(eligible[rng.index(eligible.len())]);
    }
    for &pos in &eligible {
        if rng.bernoulli(0.05) {
            breaks.insert(pos);
        }
    }
    if breaks.len() > 2 {
        breaks.remove(&BreakPosition::AfterSeries);
    }
    PlateLayout::from_breaks(fields.clone(), &breaks).expect("breaks drawn from eligible set")
}

/// Probability that [`layout_plate`] produces at least one break for a
/// plate with `n_eligible` break positions. Used by the statistical tests.
pub fn multi_line_probability(n_eligible: usize) -> f64 {
    1.0 - 0.5 * 0.95f64.powi(n_eligible as i32)
}

/// Weighted table of valid state codes.
///
/// File format: one `STATE_CODE<TAB>weight` per line, `#` comments.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    weights: BTreeMap<String, f64>,
}

impl Registry {
    /// The source states of the default corpus, equally weighted.
    pub fn default_states() -> Self {
        Self::from_weights(&[("GJ", 1.0), ("HR", 1.0), ("MH", 1.0)]).unwrap()
    }

    pub fn from_weights(entries: &[(&str, f64)]) -> Result<Self, PlateError> {
        let mut weights = BTreeMap::new();
        for (i, (code, w)) in entries.iter().enumerate() {
            validate_entry(code, *w, i + 1)?;
            weights.insert(code.to_string(), *w);
        }
        if weights.is_empty() {
            return Err(PlateError::EmptyRegistry);
        }
        Ok(Self { weights })
    }

    pub fn parse(text: &str) -> Result<Self, PlateError> {
        let mut weights = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let code = parts.next().unwrap_or("");
            let weight: f64 = parts
                .next()
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| PlateError::RegistryParse {
                    line: idx + 1,
                    msg: format!("expected `CODE<TAB>weight`, got `{raw}`"),
                })?;
            validate_entry(code, weight, idx + 1)?;
            weights.insert(code.to_string(), weight);
        }
        if weights.is_empty() {
            return Err(PlateError::EmptyRegistry);
        }
        Ok(Self { weights })
    }

    pub fn load(path: &Path) -> Result<Self, PlateError> {
        let text = std::fs::read_to_string(path).map_err(|e| PlateError::RegistryParse {
            line: 0,
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn contains(&self, state_code: &str) -> bool {
        self.weights.contains_key(state_code)
    }

    pub fn state_codes(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    fn sample_state(&self, rng: &mut SeededRng) -> &str {
        let total: f64 = self.weights.values().sum();
        let mut target = rng.uniform() * total;
        let mut last = "";
        for (code, w) in &self.weights {
            last = code;
            if target < *w {
                return code;
            }
            target -= w;
        }
        last // numeric edge: fall back to the final entry
    }
}

fn validate_entry(code: &str, weight: f64, line: usize) -> Result<(), PlateError> {
    if code.len() != 2 || !code.chars().all(|c| c.is_ascii_uppercase()) {
        return Err(PlateError::RegistryParse {
            line,
            msg: format!("state code `{code}` must be two uppercase letters"),
        });
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(PlateError::RegistryParse {
            line,
            msg: format!("weight for `{code}` must be positive and finite"),
        });
    }
    Ok(())
}

/// Parse a plate string and check its state code against `registry`.
pub fn parse_plate(text: &str, registry: &Registry) -> Result<PlateFields, PlateError> {
    let fields = parse_structural(text)?;
    if !registry.contains(fields.state_code()) {
        return Err(PlateError::UnknownStateCode(fields.state_code().to_string()));
    }
    Ok(fields)
}

/// Sample a random plate. States are drawn by registry weight; district,
/// series, and number are drawn uniformly over their grammar ranges.
pub fn sample_plate(rng: &mut SeededRng, registry: &Registry) -> Result<PlateFields, PlateError> {
    let state = registry.sample_state(rng).to_string();

    // Mostly two-digit zero-padded districts, occasionally a bare single digit.
    let district = if rng.bernoulli(0.1) {
        format!("{}", rng.range_u32(1, 9))
    } else {
        format!("{:02}", rng.range_u32(1, 99))
    };

    let series_len = *rng.choose(&[0usize, 1, 1, 1, 2, 2, 2, 2, 2, 3]);
    let series: String = (0..series_len)
        .map(|_| (b'A' + rng.index(26) as u8) as char)
        .collect();

    let number = format!("{:04}", rng.index(10_000));

    Ok(PlateFields {
        state_code: state,
        district_code: district,
        series_code: series,
        number,
    })
}
