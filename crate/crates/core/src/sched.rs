//! Training-schedule arithmetic: the one-cycle learning-rate curve and
//! stochastic weight averaging.

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};

#[derive(Debug, Error, PartialEq)]
pub enum SchedError {
    #[error("step {step} outside 0..{total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid schedule config: {0}")]
    InvalidConfig(String),
    #[error("snapshot {index} has length {got}, expected {expected}")]
    ShapeMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("empty input")]
    EmptyInput,
}

/// One-cycle curve: cosine ramp `start_lr -> peak_lr` over the first
/// `peak_fraction` of training, then cosine anneal `peak_lr -> end_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneCycleConfig {
    pub total_steps: usize,
    pub start_lr: f64,
    pub peak_lr: f64,
    pub end_lr: f64,
    pub peak_fraction: f64,
}

impl OneCycleConfig {
    pub const DEFAULT_PEAK_FRACTION: f64 = 0.3;

    pub fn new(
        total_steps: usize,
        start_lr: f64,
        peak_lr: f64,
        end_lr: f64,
    ) -> Result<Self, SchedError> {
        Self::with_peak_fraction(total_steps, start_lr, peak_lr, end_lr, Self::DEFAULT_PEAK_FRACTION)
    }

    pub fn with_peak_fraction(
        total_steps: usize,
        start_lr: f64,
        peak_lr: f64,
        end_lr: f64,
        peak_fraction: f64,
    ) -> Result<Self, SchedError> {
        let cfg = Self {
            total_steps,
            start_lr,
            peak_lr,
            end_lr,
            peak_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |msg: &str| Err(SchedError::InvalidConfig(msg.into()));
        if self.total_steps < 2 {
            return bad("total_steps must be >= 2");
        }
        for (name, lr) in [
            ("start_lr", self.start_lr),
            ("peak_lr", self.peak_lr),
            ("end_lr", self.end_lr),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(SchedError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.peak_lr < self.start_lr || self.peak_lr < self.end_lr {
            return bad("peak_lr must dominate start_lr and end_lr");
        }
        if !(self.peak_fraction > 0.0 && self.peak_fraction < 1.0) {
            return bad("peak_fraction must be in (0, 1)");
        }
        Ok(())
    }

    /// Step at which the curve reaches `peak_lr`.
    pub fn peak_step(&self) -> usize {
        ((self.peak_fraction * self.total_steps as f64).round() as usize)
            .clamp(1, self.total_steps - 1)
    }

    pub fn from_kv(cfg: &KvConfig) -> Result<Self, SchedError> {
        let get = |key: &str| -> Result<f64, SchedError> {
            cfg.require::<f64>(key)
                .map_err(|e| SchedError::InvalidConfig(e.to_string()))
        };
        let out = Self {
            total_steps: cfg
                .require::<usize>("total_steps")
                .map_err(|e| SchedError::InvalidConfig(e.to_string()))?,
            start_lr: get("start_lr")?,
            peak_lr: get("peak_lr")?,
            end_lr: get("end_lr")?,
            peak_fraction: cfg
                .get_parsed::<f64>("peak_fraction")
                .map_err(|e: ConfigError| SchedError::InvalidConfig(e.to_string()))?
                .unwrap_or(Self::DEFAULT_PEAK_FRACTION),
        };
        out.validate()?;
        Ok(out)
    }
}

/// Learning rate at `step` (0-based, `step < total_steps`).
///
/// Both phases are half-cosines, so the curve is continuous, hits
/// `start_lr` exactly at step 0, `peak_lr` exactly at the peak step, and
/// `end_lr` exactly at the final step.
pub fn one_cycle_lr(step: usize, cfg: &OneCycleConfig) -> Result<f64, SchedError> {
    cfg.validate()?;
    if step >= cfg.total_steps {
        return Err(SchedError::StepOutOfRange {
            step,
            total: cfg.total_steps,
        });
    }
    let peak = cfg.peak_step();
    let last = cfg.total_steps - 1;
    let lr = if step <= peak {
        let ramp = peak as f64;
        let phase = std::f64::consts::PI * step as f64 / ramp;
        cfg.start_lr + (cfg.peak_lr - cfg.start_lr) * (1.0 - phase.cos()) / 2.0
    } else if peak == last {
        cfg.peak_lr
    } else {
        let anneal = (last - peak) as f64;
        let phase = std::f64::consts::PI * (step - peak) as f64 / anneal;
        cfg.end_lr + (cfg.peak_lr - cfg.end_lr) * (1.0 + phase.cos()) / 2.0
    };
    Ok(lr)
}

/// The full curve as (step, lr) pairs.
pub fn one_cycle_curve(cfg: &OneCycleConfig) -> Result<Vec<(usize, f64)>, SchedError> {
    (0..cfg.total_steps)
        .map(|s| one_cycle_lr(s, cfg).map(|lr| (s, lr)))
        .collect()
}

/// Weight-averaging window: the last `1 - start_fraction` of training at
/// a flat `swa_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwaConfig {
    pub start_fraction: f64,
    pub swa_lr: f64,
}

impl SwaConfig {
    /// Standard window: averaging over the last quarter of training.
    pub fn new(swa_lr: f64) -> Result<Self, SchedError> {
        Self::with_start_fraction(0.75, swa_lr)
    }

    pub fn with_start_fraction(start_fraction: f64, swa_lr: f64) -> Result<Self, SchedError> {
        if !(start_fraction > 0.0 && start_fraction < 1.0) {
            return Err(SchedError::InvalidConfig(
                "start_fraction must be in (0, 1)".into(),
            ));
        }
        if !(swa_lr.is_finite() && swa_lr > 0.0) {
            return Err(SchedError::InvalidConfig("swa_lr must be positive".into()));
        }
        Ok(Self {
            start_fraction,
            swa_lr,
        })
    }

    /// First step inside the averaging window.
    pub fn start_step(&self, total_steps: usize) -> usize {
        (self.start_fraction * total_steps as f64).ceil() as usize
    }
}

/// Element-wise arithmetic mean of weight snapshots.
pub fn swa_average(snapshots: &[Vec<f64>]) -> Result<Vec<f64>, SchedError> {
    let first = snapshots.first().ok_or(SchedError::EmptyInput)?;
    let len = first.len();
    for (index, snap) in snapshots.iter().enumerate() {
        if snap.len() != len {
            return Err(SchedError::ShapeMismatch {
                index,
                got: snap.len(),
                expected: len,
            });
        }
    }
    let n = snapshots.len() as f64;
    let mut out = vec![0.0; len];
    for snap in snapshots {
        for (acc, &v) in out.iter_mut().zip(snap) {
            *acc += v;
        }
    }
    for acc in &mut out {
        *acc /= n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(total: usize) -> OneCycleConfig {
        OneCycleConfig::new(total, 1e-4, 1e-3, 1e-5).unwrap()
    }

    #[test]
    fn boundary_values_are_exact() {
        let c = cfg(100);
        assert_eq!(one_cycle_lr(0, &c).unwrap(), c.start_lr);
        let peak = c.peak_step();
        assert_eq!(peak, 30);
        assert!((one_cycle_lr(peak, &c).unwrap() - c.peak_lr).abs() < 1e-12);
        assert!((one_cycle_lr(99, &c).unwrap() - c.end_lr).abs() < 1e-18);
    }

    #[test]
    fn anneal_midpoint_is_the_mean_of_peak_and_end() {
        // total 101, peak step 30, anneal spans 70 steps: midpoint at 65.
        let c = OneCycleConfig::new(101, 1e-4, 1e-3, 1e-5).unwrap();
        assert_eq!(c.peak_step(), 30);
        let mid = 30 + (100 - 30) / 2;
        let lr = one_cycle_lr(mid, &c).unwrap();
        assert!((lr - (c.peak_lr + c.end_lr) / 2.0).abs() < 1e-9, "lr {lr}");
    }

    #[test]
    fn out_of_range_step_errors() {
        let c = cfg(10);
        assert_eq!(
            one_cycle_lr(10, &c).unwrap_err(),
            SchedError::StepOutOfRange { step: 10, total: 10 }
        );
    }

    #[test]
    fn curve_is_continuous_and_peaks_once() {
        let c = cfg(200);
        let curve = one_cycle_curve(&c).unwrap();
        let ramp_len = c.peak_step() as f64;
        let anneal_len = (c.total_steps - 1 - c.peak_step()) as f64;
        // Per-step change is bounded by the steeper phase's max slope.
        let bound = std::f64::consts::PI * (c.peak_lr - c.start_lr.min(c.end_lr)) / 2.0
            / ramp_len.min(anneal_len);
        for w in curve.windows(2) {
            let delta = (w[1].1 - w[0].1).abs();
            assert!(delta <= bound * 1.0000001, "jump {delta} > {bound}");
        }
        let max = curve.iter().map(|&(_, lr)| lr).fold(0.0, f64::max);
        assert!((max - c.peak_lr).abs() < 1e-15);
        let argmax = curve
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, c.peak_step());
    }

    #[test]
    fn monotone_up_then_down() {
        let c = cfg(50);
        let curve = one_cycle_curve(&c).unwrap();
        let peak = c.peak_step();
        for w in curve[..=peak].windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        for w in curve[peak..].windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn degenerate_two_step_schedule() {
        let c = OneCycleConfig::new(2, 1e-4, 1e-3, 1e-5).unwrap();
        assert_eq!(one_cycle_lr(0, &c).unwrap(), 1e-4);
        // Peak lands on the last step; the anneal never happens.
        assert!((one_cycle_lr(1, &c).unwrap() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(OneCycleConfig::new(1, 1e-4, 1e-3, 1e-5).is_err());
        assert!(OneCycleConfig::new(10, 2e-3, 1e-3, 1e-5).is_err());
        assert!(OneCycleConfig::new(10, 1e-4, 1e-3, 2e-3).is_err());
        assert!(OneCycleConfig::new(10, 0.0, 1e-3, 1e-5).is_err());
        assert!(OneCycleConfig::with_peak_fraction(10, 1e-4, 1e-3, 1e-5, 0.0).is_err());
    }

    #[test]
    fn from_kv_reads_presets() {
        let kv = KvConfig::parse(
            "total_steps = 20000\nstart_lr = 4e-5\npeak_lr = 1e-3\nend_lr = 4e-6\n",
        )
        .unwrap();
        let c = OneCycleConfig::from_kv(&kv).unwrap();
        assert_eq!(c.total_steps, 20000);
        assert_eq!(c.peak_lr, 1e-3);
        assert_eq!(c.peak_fraction, OneCycleConfig::DEFAULT_PEAK_FRACTION);
    }

    #[test]
    fn swa_identical_snapshots_average_to_themselves() {
        let snap = vec![1.5, -2.0, 0.25];
        let avg = swa_average(&[snap.clone(), snap.clone(), snap.clone()]).unwrap();
        assert_eq!(avg, snap);
    }

    #[test]
    fn swa_two_point_mean() {
        let avg = swa_average(&[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(avg, vec![1.0, 2.0]);
    }

    #[test]
    fn swa_errors() {
        assert_eq!(swa_average(&[]).unwrap_err(), SchedError::EmptyInput);
        let err = swa_average(&[vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert_eq!(
            err,
            SchedError::ShapeMismatch { index: 1, got: 1, expected: 2 }
        );
    }

    /// Compensated (Kahan) summation oracle.
    fn kahan_mean(snapshots: &[Vec<f64>], i: usize) -> f64 {
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

    #[test]
    fn swa_matches_compensated_summation_oracle() {
        let mut rng = crate::rng::SeededRng::new(14);
        let snapshots: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..64).map(|_| rng.range_f64(0.1, 2.0)).collect())
            .collect();
        let avg = swa_average(&snapshots).unwrap();
        for (i, &got) in avg.iter().enumerate() {
            let oracle = kahan_mean(&snapshots, i);
            assert!(
                (got - oracle).abs() <= 1e-12 * oracle.abs(),
                "component {i}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn swa_order_invariance() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![0.5, 0.25]];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(swa_average(&a).unwrap(), swa_average(&b).unwrap());
    }

    #[test]
    fn swa_is_linear_in_each_snapshot() {
        let base = vec![vec![1.0, 2.0, 4.0], vec![3.0, 6.0, 8.0]];
        let mut shifted = base.clone();
        for v in &mut shifted[1] {
            *v += 6.0;
        }
        let a = swa_average(&base).unwrap();
        let b = swa_average(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - 3.0).abs() < 1e-15); // delta / n_snapshots
        }
    }

    #[test]
    fn swa_window_start() {
        let swa = SwaConfig::new(1e-4).unwrap();
        assert_eq!(swa.start_fraction, 0.75);
        // Last 25% of 20k steps.
        assert_eq!(swa.start_step(20_000), 15_000);
        assert_eq!(swa.start_step(101), 76);
    }
}
