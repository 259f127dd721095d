//! Recognition metrics (full-sequence accuracy, normalized edit distance)
//! and detection metrics (IoU, AP, mAP over an IoU range, max-F1 sweep).
//!
//! Detection matching is greedy in descending confidence with a
//! deterministic tie order, each ground truth matched at most once at
//! `IoU >= threshold`. AP uses 101-point interpolation of the
//! precision-recall curve.

use serde::Serialize;
use thiserror::Error;

use crate::plate::normalize;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate box: w and h must be positive, got {w}x{h}")]
    DegenerateBox { w: f64, h: f64 },
}

/// Levenshtein distance with unit insert/delete/substitute costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Similarity score `1 - distance / max(|pred|, |gt|)`, in `[0, 1]`;
/// higher is better. Two empty strings score 1.
pub fn ned_score(pred: &str, gt: &str) -> f64 {
    let max_len = pred.chars().count().max(gt.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - edit_distance(pred, gt) as f64 / max_len as f64
}

/// Recognition metric bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognitionReport {
    /// Fraction of pairs whose normalized texts match exactly.
    pub accuracy: f64,
    /// Mean normalized edit-distance score over normalized pairs.
    pub ned: f64,
    pub n_samples: usize,
}

/// Score (prediction, ground truth) pairs. Both sides are normalized
/// (uppercased, whitespace stripped) before comparison so multi-line
/// ground truth compares equal to concatenated predictions.
pub fn sequence_accuracy<S: AsRef<str>>(
    pairs: &[(S, S)],
) -> Result<RecognitionReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut correct = 0usize;
    let mut ned_sum = 0.0;
    for (pred, gt) in pairs {
        let pred = normalize(pred.as_ref());
        let gt = normalize(gt.as_ref());
        if pred == gt {
            correct += 1;
        }
        ned_sum += ned_score(&pred, &gt);
    }
    let n = pairs.len();
    Ok(RecognitionReport {
        accuracy: correct as f64 / n as f64,
        ned: ned_sum / n as f64,
        n_samples: n,
    })
}

/// Axis-aligned box as (x, y, w, h) in pixels.
pub type BoxXYWH = [f64; 4];

/// Intersection over union of two boxes.
pub fn iou(a: BoxXYWH, b: BoxXYWH) -> Result<f64, MetricsError> {
    for bx in [a, b] {
        if !(bx[2] > 0.0 && bx[3] > 0.0) {
            return Err(MetricsError::DegenerateBox { w: bx[2], h: bx[3] });
        }
    }
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return Ok(0.0);
    }
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    Ok(inter / union)
}

/// A detection: box plus confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoxXYWH,
    pub confidence: f64,
}

/// Deterministic processing order: confidence descending, then image
/// index, then box coordinates. Makes matching independent of input
/// list order even under confidence ties.
fn sorted_order(dets: &[(usize, ScoredBox)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&i, &j| {
        let (img_i, a) = &dets[i];
        let (img_j, b) = &dets[j];
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(img_i.cmp(img_j))
            .then_with(|| {
                a.bbox
                    .iter()
                    .zip(b.bbox.iter())
                    .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

/// Cumulative matching curve over a pooled multi-image detection list.
/// Returns per-prefix (tp, fp, confidence) in processing order plus the
/// total ground-truth count.
fn match_curve(
    per_image: &[(Vec<ScoredBox>, Vec<BoxXYWH>)],
    iou_threshold: f64,
) -> (Vec<(usize, usize, f64)>, usize) {
    let dets: Vec<(usize, ScoredBox)> = per_image
        .iter()
        .enumerate()
        .flat_map(|(img, (dets, _))| dets.iter().map(move |&d| (img, d)))
        .collect();
    let n_gt: usize = per_image.iter().map(|(_, gts)| gts.len()).sum();
    let order = sorted_order(&dets);

    let mut gt_used: Vec<Vec<bool>> = per_image.iter().map(|(_, g)| vec![false; g.len()]).collect();
    let mut curve = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        let (img, det) = &dets[i];
        let gts = &per_image[*img].1;
        let mut best: Option<(usize, f64)> = None;
        for (g, &gt) in gts.iter().enumerate() {
            if gt_used[*img][g] {
                continue;
            }
            let overlap = iou(det.bbox, gt).unwrap_or(0.0);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        match best {
            Some((g, _)) => {
                gt_used[*img][g] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        curve.push((tp, fp, det.confidence));
    }
    (curve, n_gt)
}

/// 101-point interpolated AP from a cumulative matching curve.
fn ap101(curve: &[(usize, usize, f64)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let points: Vec<(f64, f64)> = curve
        .iter()
        .map(|&(tp, fp, _)| (tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64))
        .collect();
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let p = points
            .iter()
            .filter(|&&(recall, _)| recall >= r)
            .map(|&(_, precision)| precision)
            .fold(0.0, f64::max);
        total += p;
    }
    total / 101.0
}

/// AP of a single detection pool against its ground truths at one IoU
/// threshold. Empty ground truth yields 0.
pub fn average_precision(dets: &[ScoredBox], gts: &[BoxXYWH], iou_threshold: f64) -> f64 {
    let pool = [(dets.to_vec(), gts.to_vec())];
    let (curve, n_gt) = match_curve(&pool, iou_threshold);
    ap101(&curve, n_gt)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn range_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Mean AP over the 0.50:0.05:0.95 threshold range.
pub fn map_range(dets: &[ScoredBox], gts: &[BoxXYWH]) -> f64 {
    let thresholds = range_thresholds();
    thresholds
        .iter()
        .map(|&t| average_precision(dets, gts, t))
        .sum::<f64>()
        / thresholds.len() as f64
}

/// Result of sweeping confidence thresholds for the best F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Sweep {
    pub best_threshold: f64,
    pub f1_max: f64,
    pub precision: f64,
    pub recall: f64,
}

fn f1_from_curve(curve: &[(usize, usize, f64)], n_gt: usize) -> F1Sweep {
    // Candidate thresholds are the distinct confidences; evaluating at a
    // threshold keeps every detection with confidence >= threshold, which
    // is a prefix of the processing order. Ties break toward the higher
    // threshold because the sweep runs in descending order and only a
    // strictly better F1 replaces the incumbent.
    let mut best = F1Sweep {
        best_threshold: 1.0,
        f1_max: 0.0,
        precision: 0.0,
        recall: 0.0,
    };
    for (i, &(tp, fp, conf)) in curve.iter().enumerate() {
        if let Some(&(_, _, next_conf)) = curve.get(i + 1) {
            if next_conf == conf {
                continue; // not the last detection at this threshold
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if f1 > best.f1_max {
            best = F1Sweep {
                best_threshold: conf,
                f1_max: f1,
                precision,
                recall,
            };
        }
    }
    best
}

/// Sweep candidate confidence thresholds (the sorted unique confidences)
/// and report the maximum F1 with its operating point.
pub fn f1_sweep(dets: &[ScoredBox], gts: &[BoxXYWH], iou_threshold: f64) -> F1Sweep {
    let pool = [(dets.to_vec(), gts.to_vec())];
    let (curve, n_gt) = match_curve(&pool, iou_threshold);
    f1_from_curve(&curve, n_gt)
}

/// Detection metric bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    /// Precision at the best-F1 confidence threshold (IoU 0.5).
    pub precision: f64,
    /// Recall at the best-F1 confidence threshold (IoU 0.5).
    pub recall: f64,
    /// AP at IoU 0.5.
    pub ap50: f64,
    /// Mean AP over IoU 0.50:0.05:0.95.
    pub ap50_95: f64,
    pub f1_max: f64,
    pub best_threshold: f64,
    pub n_images: usize,
    pub n_ground_truth: usize,
}

/// Evaluate pooled detections over many images. Matching is confined to
/// each image; the precision-recall curve pools all detections.
pub fn evaluate_detections(per_image: &[(Vec<ScoredBox>, Vec<BoxXYWH>)]) -> DetectionReport {
    let (curve50, n_gt) = match_curve(per_image, 0.5);
    let ap50 = ap101(&curve50, n_gt);
    let sweep = f1_from_curve(&curve50, n_gt);
    let ap50_95 = {
        let thresholds = range_thresholds();
        thresholds
            .iter()
            .map(|&t| {
                let (curve, n_gt) = match_curve(per_image, t);
                ap101(&curve, n_gt)
            })
            .sum::<f64>()
            / thresholds.len() as f64
    };
    DetectionReport {
        precision: sweep.precision,
        recall: sweep.recall,
        ap50,
        ap50_95,
        f1_max: sweep.f1_max,
        best_threshold: sweep.best_threshold,
        n_images: per_image.len(),
        n_ground_truth: n_gt,
    }
}
