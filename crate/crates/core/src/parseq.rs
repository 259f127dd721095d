//! Permuted autoregressive decoding at desk scale.
//!
//! One shared recognizer interface supports three decoding modes over the
//! same position set: context-aware autoregressive decoding under an
//! arbitrary factorization order, context-free parallel decoding, and
//! cloze-style iterative refinement. Attention masks encode exactly which
//! positions each query may condition on; the no-leakage law (changing a
//! token outside a query's visible set never changes that query's
//! distribution) is the load-bearing invariant and is tested as such.
//!
//! Also here: the patch-grid and parameter arithmetic used to reason about
//! encoder reconfigurations (image resolution vs patch size trade-offs).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

pub type TokenId = usize;

/// Default maximum decoded length: covers ten-character plates with room
/// for concatenated pretraining labels.
pub const DEFAULT_T_MAX: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ParseqError {
    #[error("charset must be non-empty, uppercase-alphanumeric, and free of duplicates")]
    BadCharset,
    #[error("permutation {0:?} is not a bijection over its positions")]
    NotAPermutation(Vec<usize>),
    #[error("model contract violation: {0}")]
    ModelContractViolation(String),
    #[error("mock table row for key {key}: probabilities sum to {sum}, expected 1")]
    UnnormalizedRow { key: String, sum: f64 },
    #[error("image side {side} is not divisible by patch side {patch}")]
    IndivisibleShape { side: usize, patch: usize },
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
}

/// Token vocabulary: a charset plus EOS/BOS/PAD specials with dense ids.
/// Charset characters take ids `0..n`; then EOS, BOS, PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
}

impl Vocab {
    /// The 36-symbol plate charset: A-Z then 0-9 (39 ids with specials).
    pub fn standard() -> Self {
        Self::new(&('A'..='Z').chain('0'..='9').collect::<String>()).unwrap()
    }

    pub fn new(charset: &str) -> Result<Self, ParseqError> {
        let chars: Vec<char> = charset.chars().collect();
        let ok = !chars.is_empty()
            && chars.iter().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
            && (1..chars.len()).all(|i| !chars[..i].contains(&chars[i]));
        if !ok {
            return Err(ParseqError::BadCharset);
        }
        Ok(Self { chars })
    }

    pub fn charset(&self) -> &[char] {
        &self.chars
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    /// Total id count including specials.
    pub fn size(&self) -> usize {
        self.chars.len() + 3
    }

    pub fn eos(&self) -> TokenId {
        self.chars.len()
    }

    pub fn bos(&self) -> TokenId {
        self.chars.len() + 1
    }

    pub fn pad(&self) -> TokenId {
        self.chars.len() + 2
    }

    pub fn encode_char(&self, ch: char) -> Option<TokenId> {
        self.chars.iter().position(|&c| c == ch)
    }

    pub fn decode_id(&self, id: TokenId) -> Option<char> {
        self.chars.get(id).copied()
    }

    /// Encode text into content ids; fails on out-of-charset characters.
    pub fn encode(&self, text: &str) -> Option<Vec<TokenId>> {
        text.chars().map(|c| self.encode_char(c)).collect()
    }
}

/// A token sequence canonicalized against a vocabulary: at most one EOS,
/// and nothing but PAD after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    ids: Vec<TokenId>,
}

impl TokenSeq {
    /// Canonicalize raw ids: everything after the first EOS becomes PAD.
    pub fn from_raw(mut ids: Vec<TokenId>, vocab: &Vocab, t_max: usize) -> Result<Self, ParseqError> {
        if ids.len() > t_max {
            return Err(ParseqError::SequenceTooLong {
                len: ids.len(),
                max: t_max,
            });
        }
        if let Some(eos_at) = ids.iter().position(|&id| id == vocab.eos()) {
            for id in &mut ids[eos_at + 1..] {
                *id = vocab.pad();
            }
        }
        Ok(Self { ids })
    }

    /// Encode text and append EOS, padding to `t_max`.
    pub fn from_text(text: &str, vocab: &Vocab, t_max: usize) -> Result<Self, ParseqError> {
        let mut ids = vocab
            .encode(text)
            .ok_or(ParseqError::BadCharset)?;
        ids.truncate(t_max.saturating_sub(1));
        ids.push(vocab.eos());
        while ids.len() < t_max {
            ids.push(vocab.pad());
        }
        Self::from_raw(ids, vocab, t_max)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Content characters before the first EOS/PAD/BOS.
    pub fn to_text(&self, vocab: &Vocab) -> String {
        self.ids
            .iter()
            .take_while(|&&id| id < vocab.char_count())
            .filter_map(|&id| vocab.decode_id(id))
            .collect()
    }
}

/// A factorization order: a bijection over positions `0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self, ParseqError> {
        let mut seen = vec![false; order.len()];
        for &p in &order {
            if p >= order.len() || seen[p] {
                return Err(ParseqError::NotAPermutation(order));
            }
            seen[p] = true;
        }
        Ok(Self { order })
    }

    pub fn identity(t: usize) -> Self {
        Self {
            order: (0..t).collect(),
        }
    }

    pub fn reversed_identity(t: usize) -> Self {
        Self {
            order: (0..t).rev().collect(),
        }
    }

    /// The mirror order: visit the same positions in reverse.
    pub fn mirror(&self) -> Self {
        Self {
            order: self.order.iter().rev().copied().collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Position queried at step `t`.
    pub fn at(&self, t: usize) -> usize {
        self.order[t]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn random(t: usize, rng: &mut SeededRng) -> Self {
        let mut order: Vec<usize> = (0..t).collect();
        rng.shuffle(&mut order);
        Self { order }
    }
}

/// Decoding ensemble orders: the identity first, its reverse second, then
/// random mirrored pairs (each random order followed by its mirror).
/// Orders are distinct whenever `T!` admits `k` distinct ones.
pub fn gen_permutations(t: usize, k: usize, rng: &mut SeededRng) -> Vec<Permutation> {
    assert!(t >= 1 && k >= 1);
    let mut out = vec![Permutation::identity(t)];
    if k == 1 {
        return out;
    }
    out.push(Permutation::reversed_identity(t));

    // t! bounds the number of distinct orders; saturate for big t.
    let distinct_limit: usize = (1..=t.min(20)).product();
    let dedup = distinct_limit >= k;

    let mut attempts = 0;
    while out.len() < k {
        let candidate = Permutation::random(t, rng);
        let mirror = candidate.mirror();
        attempts += 1;
        if dedup && attempts < 10_000 && (out.contains(&candidate) || out.contains(&mirror)) {
            continue;
        }
        out.push(candidate);
        if out.len() < k {
            out.push(mirror);
        }
    }
    out
}

/// T x T visibility matrix: `allowed(q, k)` says whether the query at
/// position `q` may attend to the token at position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    t: usize,
    allowed: Vec<bool>,
    self_visible: bool,
}

impl AttentionMask {
    /// Query at position `p_t` sees exactly the positions decoded before
    /// it in permutation order; the diagonal is never visible.
    pub fn from_permutation(p: &Permutation) -> Self {
        let t = p.len();
        let mut allowed = vec![false; t * t];
        for step in 0..t {
            for earlier in 0..step {
                allowed[p.at(step) * t + p.at(earlier)] = true;
            }
        }
        Self {
            t,
            allowed,
            self_visible: false,
        }
    }

    /// Every query sees every position except itself.
    pub fn cloze(t: usize) -> Self {
        assert!(t >= 1);
        let mut allowed = vec![true; t * t];
        for q in 0..t {
            allowed[q * t + q] = false;
        }
        Self {
            t,
            allowed,
            self_visible: false,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn allowed(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.t + k]
    }

    pub fn self_visible(&self) -> bool {
        self.self_visible
    }

    pub fn count_allowed(&self, q: usize) -> usize {
        (0..self.t).filter(|&k| self.allowed(q, k)).count()
    }

    /// True when this mask equals the strict causal (lower-triangular) one.
    pub fn is_strict_causal(&self) -> bool {
        (0..self.t).all(|q| (0..self.t).all(|k| self.allowed(q, k) == (k < q)))
    }

    pub fn transpose(&self) -> Self {
        let mut allowed = vec![false; self.t * self.t];
        for q in 0..self.t {
            for k in 0..self.t {
                allowed[k * self.t + q] = self.allowed(q, k);
            }
        }
        Self {
            t: self.t,
            allowed,
            self_visible: self.self_visible,
        }
    }
}

/// Opaque per-image feature vector handed to the recognizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures(pub Vec<f64>);

impl ImageFeatures {
    pub fn empty() -> Self {
        Self(Vec::new())
    }
}

/// The model surface the decoders drive: given image features, tokens
/// bound at visible positions, and a set of queried positions, produce
/// one probability distribution over the vocabulary per queried position.
///
/// Implementations must be safe for concurrent read-only queries, and
/// every returned distribution must sum to 1 within 1e-9.
pub trait Recognizer {
    fn predict(
        &self,
        x: &ImageFeatures,
        visible: &[(usize, TokenId)],
        queried: &[usize],
    ) -> Result<Vec<Vec<f64>>, ParseqError>;
}

/// Bindings a query at position `q` may condition on, drawn from a full
/// token assignment: exactly the mask row's visible positions, in
/// ascending position order.
pub fn visible_bindings(
    mask: &AttentionMask,
    q: usize,
    tokens: &[TokenId],
) -> Vec<(usize, TokenId)> {
    (0..mask.t())
        .filter(|&k| mask.allowed(q, k))
        .map(|k| (k, tokens[k]))
        .collect()
}

/// Per-step decode trace entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub position: usize,
    pub distribution: Vec<f64>,
}

/// Decoded sequence plus per-step distributions in decode order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub seq: TokenSeq,
    pub steps: Vec<StepTrace>,
}

const DIST_TOLERANCE: f64 = 1e-9;

fn checked_distribution(
    dist: Vec<f64>,
    vocab: &Vocab,
    position: usize,
) -> Result<Vec<f64>, ParseqError> {
    if dist.len() != vocab.size() {
        return Err(ParseqError::ModelContractViolation(format!(
            "distribution for position {position} has {} entries, vocab has {}",
            dist.len(),
            vocab.size()
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_TOLERANCE || dist.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) {
        return Err(ParseqError::ModelContractViolation(format!(
            "distribution for position {position} sums to {sum}"
        )));
    }
    Ok(dist)
}

/// Greedy argmax; ties resolve to the lowest token id.
fn argmax(dist: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Context-aware autoregressive decode under a factorization order.
///
/// Positions are visited in permutation order; the step-`t` query sees the
/// tokens already decoded at `{p_1 .. p_(t-1)}`, bound by absolute
/// position. Under the identity order, decoding stops emitting content
/// after EOS (remaining positions become PAD without querying the model).
/// Under any other order, EOS does not halt the fill; the final
/// canonicalization pass truncates at the first EOS in absolute order.
pub fn decode_ar<R: Recognizer + ?Sized>(
    model: &R,
    x: &ImageFeatures,
    p: &Permutation,
    vocab: &Vocab,
    t_max: usize,
) -> Result<DecodeOutput, ParseqError> {
    let t = p.len();
    if t > t_max {
        return Err(ParseqError::SequenceTooLong { len: t, max: t_max });
    }
    let mut tokens = vec![vocab.pad(); t];
    let mut decided = vec![false; t];
    let mut steps = Vec::with_capacity(t);
    let identity = p.is_identity();

    for step in 0..t {
        let q = p.at(step);
        let mut visible: Vec<(usize, TokenId)> = (0..step)
            .map(|s| p.at(s))
            .filter(|&pos| decided[pos])
            .map(|pos| (pos, tokens[pos]))
            .collect();
        visible.sort_by_key(|&(pos, _)| pos);
        let dist = model
            .predict(x, &visible, &[q])?
            .pop()
            .ok_or_else(|| {
                ParseqError::ModelContractViolation("model returned no distribution".into())
            })?;
        let dist = checked_distribution(dist, vocab, q)?;
        let token = argmax(&dist);
        steps.push(StepTrace {
            position: q,
            distribution: dist,
        });
        tokens[q] = token;
        decided[q] = true;
        if identity && token == vocab.eos() {
            break; // remaining positions stay PAD
        }
    }

    Ok(DecodeOutput {
        seq: TokenSeq::from_raw(tokens, vocab, t_max)?,
        steps,
    })
}

/// Context-free parallel decode: one query of all positions with an empty
/// visible set, argmax per position, truncated at the first EOS.
pub fn decode_nar<R: Recognizer + ?Sized>(
    model: &R,
    x: &ImageFeatures,
    vocab: &Vocab,
    t_max: usize,
) -> Result<DecodeOutput, ParseqError> {
    let queried: Vec<usize> = (0..t_max).collect();
    let dists = model.predict(x, &[], &queried)?;
    if dists.len() != t_max {
        return Err(ParseqError::ModelContractViolation(format!(
            "queried {t_max} positions, model returned {}",
            dists.len()
        )));
    }
    let mut tokens = Vec::with_capacity(t_max);
    let mut steps = Vec::with_capacity(t_max);
    for (q, dist) in dists.into_iter().enumerate() {
        let dist = checked_distribution(dist, vocab, q)?;
        tokens.push(argmax(&dist));
        steps.push(StepTrace {
            position: q,
            distribution: dist,
        });
    }
    Ok(DecodeOutput {
        seq: TokenSeq::from_raw(tokens, vocab, t_max)?,
        steps,
    })
}

/// Cloze-mask iterative refinement: each iteration re-predicts every
/// position conditioned on all current tokens at the other positions,
/// then replaces all positions simultaneously. Zero iterations return the
/// input verbatim.
pub fn refine_cloze<R: Recognizer + ?Sized>(
    model: &R,
    x: &ImageFeatures,
    seq: &TokenSeq,
    vocab: &Vocab,
    iters: usize,
) -> Result<TokenSeq, ParseqError> {
    let t = seq.len();
    if iters == 0 || t == 0 {
        return Ok(seq.clone());
    }
    let mask = AttentionMask::cloze(t);
    let mut current = seq.ids().to_vec();
    for _ in 0..iters {
        let mut next = Vec::with_capacity(t);
        for q in 0..t {
            let visible = visible_bindings(&mask, q, &current);
            let dist = model
                .predict(x, &visible, &[q])?
                .pop()
                .ok_or_else(|| {
                    ParseqError::ModelContractViolation("model returned no distribution".into())
                })?;
            let dist = checked_distribution(dist, vocab, q)?;
            next.push(argmax(&dist));
        }
        current = next;
    }
    TokenSeq::from_raw(current, vocab, t)
}

/// Encoder/decoder shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViTShape {
    pub img_h: usize,
    pub img_w: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub decoder_depth: usize,
}

/// Patch grid: rows, columns, and total token count.
pub fn patch_grid(s: &ViTShape) -> Result<(usize, usize, usize), ParseqError> {
    if s.patch_h == 0 || !s.img_h.is_multiple_of(s.patch_h) {
        return Err(ParseqError::IndivisibleShape {
            side: s.img_h,
            patch: s.patch_h,
        });
    }
    if s.patch_w == 0 || !s.img_w.is_multiple_of(s.patch_w) {
        return Err(ParseqError::IndivisibleShape {
            side: s.img_w,
            patch: s.patch_w,
        });
    }
    let rows = s.img_h / s.patch_h;
    let cols = s.img_w / s.patch_w;
    Ok((rows, cols, rows * cols))
}

/// Parameter count split by component.
///
/// Counted layers, with `d = embed_dim`, `r = mlp_ratio`:
/// - patch projection: `(3 * patch_h * patch_w) * d + d`
/// - positional embeddings: one `d`-vector per patch token
/// - each encoder block: QKV+output projections `4d^2 + 4d`, an MLP
///   `d->rd->d` with biases `2rd^2 + rd + d`, two layer norms `4d`
/// - each decoder block: the same plus a second (cross) attention and a
///   third layer norm
/// - head: `d * vocab_size + vocab_size`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamBreakdown {
    pub patch_proj: u64,
    pub pos_embed: u64,
    pub encoder_blocks: u64,
    pub decoder_blocks: u64,
    pub head: u64,
}

impl ParamBreakdown {
    pub fn total(&self) -> u64 {
        self.patch_proj + self.pos_embed + self.encoder_blocks + self.decoder_blocks + self.head
    }
}

pub fn param_breakdown(s: &ViTShape, vocab_size: usize) -> Result<ParamBreakdown, ParseqError> {
    let (_, _, tokens) = patch_grid(s)?;
    let d = s.embed_dim as u64;
    let r = s.mlp_ratio as u64;
    let attention = 4 * d * d + 4 * d;
    let mlp = 2 * r * d * d + r * d + d;
    let ln = 2 * d;
    let encoder_block = attention + mlp + 2 * ln;
    let decoder_block = 2 * attention + mlp + 3 * ln;
    Ok(ParamBreakdown {
        patch_proj: (3 * s.patch_h as u64 * s.patch_w as u64) * d + d,
        pos_embed: tokens as u64 * d,
        encoder_blocks: s.depth as u64 * encoder_block,
        decoder_blocks: s.decoder_depth as u64 * decoder_block,
        head: d * vocab_size as u64 + vocab_size as u64,
    })
}

/// Total trainable parameter count for a shape.
pub fn count_params(s: &ViTShape, vocab_size: usize) -> Result<u64, ParseqError> {
    Ok(param_breakdown(s, vocab_size)?.total())
}

type MockKey = (usize, Vec<(usize, TokenId)>);

/// Serializable conditional-distribution table for mock recognizers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockTable {
    /// Charset of the vocabulary the rows are over.
    pub charset: String,
    /// Distribution used when no rule matches.
    pub default_row: Vec<f64>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub queried: usize,
    /// Visible bindings as (position, token id) pairs; order-insensitive.
    pub visible: Vec<(usize, TokenId)>,
    pub row: Vec<f64>,
}

enum MockBehavior {
    Table {
        rules: HashMap<MockKey, Vec<f64>>,
        default_row: Vec<f64>,
    },
    /// Deterministic pseudo-random rows keyed by (query, visible set).
    Procedural { seed: u64 },
    /// Rows depend only on the queried position.
    ContextFree { rows: Vec<Vec<f64>> },
}

/// Deterministic stand-in recognizer for tests and the decode CLI.
pub struct MockRecognizer {
    vocab_size: usize,
    behavior: MockBehavior,
}

impl std::fmt::Debug for MockRecognizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.behavior {
            MockBehavior::Table { .. } => "table",
            MockBehavior::Procedural { .. } => "procedural",
            MockBehavior::ContextFree { .. } => "context-free",
        };
        write!(f, "MockRecognizer({kind}, vocab {})", self.vocab_size)
    }
}

fn check_row(row: &[f64], vocab_size: usize, key: &str) -> Result<(), ParseqError> {
    let sum: f64 = row.iter().sum();
    if row.len() != vocab_size || (sum - 1.0).abs() > DIST_TOLERANCE {
        return Err(ParseqError::UnnormalizedRow {
            key: key.to_string(),
            sum,
        });
    }
    Ok(())
}

fn canonical_visible(visible: &[(usize, TokenId)]) -> Vec<(usize, TokenId)> {
    let mut v = visible.to_vec();
    v.sort_by_key(|&(pos, _)| pos);
    v
}

impl MockRecognizer {
    /// Build from a rule table; every row must be normalized.
    pub fn from_table(table: &MockTable) -> Result<Self, ParseqError> {
        let vocab = Vocab::new(&table.charset)?;
        let vocab_size = vocab.size();
        check_row(&table.default_row, vocab_size, "default")?;
        let mut rules = HashMap::new();
        for rule in &table.rules {
            check_row(&rule.row, vocab_size, &format!("{:?}", (rule.queried, &rule.visible)))?;
            rules.insert(
                (rule.queried, canonical_visible(&rule.visible)),
                rule.row.clone(),
            );
        }
        Ok(Self {
            vocab_size,
            behavior: MockBehavior::Table {
                rules,
                default_row: table.default_row.clone(),
            },
        })
    }

    /// Hash-seeded recognizer whose distribution depends on the queried
    /// position and the entire visible assignment.
    pub fn procedural(seed: u64, vocab_size: usize) -> Self {
        Self {
            vocab_size,
            behavior: MockBehavior::Procedural { seed },
        }
    }

    /// Context-free recognizer: one fixed row per position, ignoring the
    /// visible set (and anything past the table repeats the last row).
    pub fn context_free(rows: Vec<Vec<f64>>, vocab_size: usize) -> Result<Self, ParseqError> {
        for (i, row) in rows.iter().enumerate() {
            check_row(row, vocab_size, &format!("position {i}"))?;
        }
        if rows.is_empty() {
            return Err(ParseqError::UnnormalizedRow {
                key: "empty".into(),
                sum: 0.0,
            });
        }
        Ok(Self {
            vocab_size,
            behavior: MockBehavior::ContextFree { rows },
        })
    }

    fn row_for(&self, x: &ImageFeatures, q: usize, visible: &[(usize, TokenId)]) -> Vec<f64> {
        match &self.behavior {
            MockBehavior::Table { rules, default_row } => rules
                .get(&(q, canonical_visible(visible)))
                .unwrap_or(default_row)
                .clone(),
            MockBehavior::Procedural { seed } => {
                let mut h = *seed ^ 0x51c7_1a5d_e5f0_9a21u64.wrapping_mul(q as u64 + 1);
                for &(pos, tok) in &canonical_visible(visible) {
                    h = mix(h ^ mix((pos as u64) << 32 | tok as u64));
                }
                for (i, f) in x.0.iter().enumerate() {
                    h = mix(h ^ f.to_bits().wrapping_add(i as u64));
                }
                let mut weights: Vec<f64> = (0..self.vocab_size)
                    .map(|i| {
                        let w = mix(h ^ mix(i as u64 + 1));
                        (w >> 11) as f64 / (1u64 << 53) as f64 + 1e-3
                    })
                    .collect();
                let sum: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= sum;
                }
                weights
            }
            MockBehavior::ContextFree { rows } => {
                rows.get(q).unwrap_or_else(|| rows.last().unwrap()).clone()
            }
        }
    }
}

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Recognizer for MockRecognizer {
    fn predict(
        &self,
        x: &ImageFeatures,
        visible: &[(usize, TokenId)],
        queried: &[usize],
    ) -> Result<Vec<Vec<f64>>, ParseqError> {
        Ok(queried.iter().map(|&q| self.row_for(x, q, visible)).collect())
    }
}

/// Build a mock recognizer from a serialized table.
pub fn make_mock_recognizer(table: &MockTable) -> Result<MockRecognizer, ParseqError> {
    MockRecognizer::from_table(table)
}
