//! Independent oracles for the acceptance suite.
//!
//! These deliberately avoid the library's internal computation routes:
//! detection metrics are recomputed by from-scratch matching at every
//! operating point, edit distance by memoized recursion, averaging by
//! compensated summation, and causal decoding by a plain left-to-right
//! loop that never touches the permutation machinery.

use std::collections::HashMap;

use alpr_core::metrics::{BoxXYWH, ScoredBox};
use alpr_core::parseq::{ImageFeatures, Recognizer, TokenId, Vocab};

/// Overlap ratio, recomputed locally.
fn iou_oracle(a: BoxXYWH, b: BoxXYWH) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// Canonical processing order: confidence descending, box coordinates as
/// the tie break. Mirrors the pinned definitional rule.
pub fn canonical_order(dets: &[ScoredBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&i, &j| {
        dets[j]
            .confidence
            .partial_cmp(&dets[i].confidence)
            .unwrap()
            .then_with(|| {
                dets[i]
                    .bbox
                    .iter()
                    .zip(dets[j].bbox.iter())
                    .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

/// Greedy matching of an explicit detection list, written from scratch:
/// returns the TP count.
fn match_from_scratch(dets: &[&ScoredBox], gts: &[BoxXYWH], iou_threshold: f64) -> usize {
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for det in dets {
        let mut best: Option<(usize, f64)> = None;
        for (g, &gt) in gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let overlap = iou_oracle(det.bbox, gt);
            if overlap >= iou_threshold {
                match best {
                    Some((_, b)) if overlap <= b => {}
                    _ => best = Some((g, overlap)),
                }
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            tp += 1;
        }
    }
    tp
}

/// Brute-force AP: for every prefix length of the canonical order, rerun
/// the matching from scratch to get a (recall, precision) point, then
/// evaluate the 101-point interpolation directly from its definition.
pub fn ap_oracle(dets: &[ScoredBox], gts: &[BoxXYWH], iou_threshold: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let order = canonical_order(dets);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for k in 1..=order.len() {
        let prefix: Vec<&ScoredBox> = order[..k].iter().map(|&i| &dets[i]).collect();
        let tp = match_from_scratch(&prefix, gts, iou_threshold);
        points.push((tp as f64 / gts.len() as f64, tp as f64 / k as f64));
    }
    let mut total = 0.0;
    for grid in 0..=100u32 {
        let r = grid as f64 / 100.0;
        let mut p_best = 0.0f64;
        for &(recall, precision) in &points {
            if recall >= r && precision > p_best {
                p_best = precision;
            }
        }
        total += p_best;
    }
    total / 101.0
}

/// Brute-force F1 sweep: evaluate every distinct confidence threshold by
/// re-matching the kept detections from scratch; ties keep the higher
/// threshold.
pub fn f1_oracle(
    dets: &[ScoredBox],
    gts: &[BoxXYWH],
    iou_threshold: f64,
) -> (f64, f64, f64, f64) {
    let mut thresholds: Vec<f64> = dets.iter().map(|d| d.confidence).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let (mut best_t, mut best_f1, mut best_p, mut best_r) = (1.0, 0.0, 0.0, 0.0);
    for &t in &thresholds {
        let order = canonical_order(dets);
        let kept: Vec<&ScoredBox> = order
            .iter()
            .map(|&i| &dets[i])
            .filter(|d| d.confidence >= t)
            .collect();
        let tp = match_from_scratch(&kept, gts, iou_threshold);
        let p = if kept.is_empty() { 0.0 } else { tp as f64 / kept.len() as f64 };
        let r = if gts.is_empty() { 0.0 } else { tp as f64 / gts.len() as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if f1 > best_f1 {
            (best_t, best_f1, best_p, best_r) = (t, f1, p, r);
        }
    }
    (best_t, best_f1, best_p, best_r)
}

/// Memoized recursive Levenshtein.
pub fn edit_distance_oracle(a: &str, b: &str) -> usize {
    fn go(
        a: &[char],
        b: &[char],
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        let key = (a.len(), b.len());
        if let Some(&d) = memo.get(&key) {
            return d;
        }
        let d = match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ca, ra)), Some((cb, rb))) => {
                let sub = go(ra, rb, memo) + usize::from(ca != cb);
                let del = go(ra, b, memo) + 1;
                let ins = go(a, rb, memo) + 1;
                sub.min(del).min(ins)
            }
        };
        memo.insert(key, d);
        d
    }
    let ca: Vec<char> = a.chars().collect();
    let cb: Vec<char> = b.chars().collect();
    go(&ca, &cb, &mut HashMap::new())
}

/// Kahan-compensated element mean.
pub fn compensated_mean(snapshots: &[Vec<f64>], i: usize) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for snap in snapshots {
        let y = snap[i] - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / snapshots.len() as f64
}

/// Plain left-to-right greedy decode, independent of the permutation and
/// mask machinery: query position t with bindings (0..t), argmax, stop at
/// EOS, pad the rest.
pub fn causal_decode_oracle<R: Recognizer>(
    model: &R,
    x: &ImageFeatures,
    vocab: &Vocab,
    t_max: usize,
) -> Vec<TokenId> {
    let mut tokens: Vec<TokenId> = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let visible: Vec<(usize, TokenId)> =
            tokens.iter().copied().enumerate().collect();
        let dist = model.predict(x, &visible, &[t]).unwrap().pop().unwrap();
        let mut best = 0;
        for (i, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = i;
            }
        }
        tokens.push(best);
        if best == vocab.eos() {
            break;
        }
    }
    // Canonical padded form.
    if let Some(eos_at) = tokens.iter().position(|&id| id == vocab.eos()) {
        tokens.truncate(eos_at + 1);
    }
    while tokens.len() < t_max {
        tokens.push(vocab.pad());
    }
    tokens
}
