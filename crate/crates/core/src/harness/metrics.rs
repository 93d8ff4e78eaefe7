//! Error metrics and wingbeat phase averaging.

use crate::so3::Vec3;
use crate::{Error, Result};

/// Bins per flap cycle; two cycles are reported.
pub const BINS_PER_CYCLE: usize = 100;
pub const PHASE_BINS: usize = 2 * BINS_PER_CYCLE;

fn check_pair(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), actual: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    Ok(())
}

/// Per-axis root-mean-square difference.
pub fn rmse(a: &[Vec3], b: &[Vec3]) -> Result<[f64; 3]> {
    check_pair(a, b)?;
    let mut acc = [0.0; 3];
    for (x, y) in a.iter().zip(b) {
        for i in 0..3 {
            acc[i] += (x[i] - y[i]).powi(2);
        }
    }
    Ok(acc.map(|s| (s / a.len() as f64).sqrt()))
}

/// Per-axis coefficient of determination of `prediction` against `truth`.
pub fn r2(truth: &[Vec3], prediction: &[Vec3]) -> Result<[f64; 3]> {
    check_pair(truth, prediction)?;
    let n = truth.len() as f64;
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mean = truth.iter().map(|v| v[i]).sum::<f64>() / n;
        let total: f64 = truth.iter().map(|v| (v[i] - mean).powi(2)).sum();
        let residual: f64 = truth.iter().zip(prediction).map(|(t, p)| (t[i] - p[i]).powi(2)).sum();
        if truth.iter().all(|v| v[i] == truth[0][i]) {
            return Err(Error::InsufficientData(format!("axis {i} of the reference series is constant")));
        }
        *o = 1.0 - residual / total;
    }
    Ok(out)
}

/// Mean and standard deviation per phase bin over two wingbeats.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseAveragedCurve {
    pub mean: Vec<Vec3>,
    pub std: Vec<Vec3>,
    /// Samples folded into each of the first `BINS_PER_CYCLE` bins.
    pub counts: Vec<usize>,
    /// Cycle fractions where the downstroke and upstroke begin.
    pub downstroke_start: f64,
    pub upstroke_start: f64,
}

impl PhaseAveragedCurve {
    /// Bin centres in percent of the wingbeat, 0.5 … 199.5.
    pub fn phase_percent(&self) -> Vec<f64> {
        (0..PHASE_BINS).map(|b| (b as f64 + 0.5) * 100.0 / BINS_PER_CYCLE as f64).collect()
    }
}

/// Folds `values` sampled at `times` on the flap period. Requires at least
/// three complete cycles and at least one sample in every bin.
pub fn phase_average(
    times: &[f64],
    values: &[Vec3],
    frequency: f64,
    stroke_boundaries: (f64, f64),
) -> Result<PhaseAveragedCurve> {
    if times.len() != values.len() {
        return Err(Error::Shape { expected: times.len(), actual: values.len() });
    }
    if !(frequency > 0.0) {
        return Err(Error::InvalidArgument(format!("flap frequency must be positive, got {frequency}")));
    }
    let span = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (b - a) * frequency,
        _ => 0.0,
    };
    // The last sample closes the final cycle one interval early.
    let interval = if times.len() > 1 { (times[1] - times[0]) * frequency } else { 0.0 };
    if span + interval < 3.0 - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "phase averaging needs 3 complete cycles, got {:.3}",
            span + interval
        )));
    }
    let mut sum = vec![Vec3::zeros(); BINS_PER_CYCLE];
    let mut counts = vec![0usize; BINS_PER_CYCLE];
    let bin_of = |t: f64| (((t * frequency).rem_euclid(1.0) * BINS_PER_CYCLE as f64) as usize).min(BINS_PER_CYCLE - 1);
    for (t, v) in times.iter().zip(values) {
        let b = bin_of(*t);
        sum[b] += v;
        counts[b] += 1;
    }
    if let Some(b) = counts.iter().position(|c| *c == 0) {
        return Err(Error::InsufficientData(format!("phase bin {b} is empty; sample rate too low")));
    }
    let mean: Vec<Vec3> = sum.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let mut sq = vec![Vec3::zeros(); BINS_PER_CYCLE];
    for (t, v) in times.iter().zip(values) {
        let b = bin_of(*t);
        sq[b] += (v - mean[b]).component_mul(&(v - mean[b]));
    }
    let std: Vec<Vec3> = sq.iter().zip(&counts).map(|(s, c)| (s / *c as f64).map(f64::sqrt)).collect();
    Ok(PhaseAveragedCurve {
        mean: mean.iter().chain(&mean).copied().collect(),
        std: std.iter().chain(&std).copied().collect(),
        counts,
        downstroke_start: stroke_boundaries.0,
        upstroke_start: stroke_boundaries.1,
    })
}
