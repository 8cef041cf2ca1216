use std::time::Instant;

use crate::error::{Error, Result};

/// Two-sided 98% standard-normal quantile.
pub const Z_98: f64 = 2.326_347_874_040_840_8;

#[derive(Clone, Debug, PartialEq)]
pub struct TimingStats {
    pub mean_secs: f64,
    /// Half-width of the 98% normal-approximation interval.
    pub half_width_secs: f64,
    pub samples: Vec<f64>,
}

impl TimingStats {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::config("timing.steps", "need at least two timed steps"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(TimingStats { mean_secs: mean, half_width_secs: Z_98 * (var / n).sqrt(), samples })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.mean_secs - self.half_width_secs, self.mean_secs + self.half_width_secs)
    }
}

/// Times `steps` calls of `step` after `warmup` untimed calls, serially on
/// the calling thread.
pub fn timing_overhead<E>(
    mut step: impl FnMut(usize) -> std::result::Result<(), E>,
    steps: usize,
    warmup: usize,
) -> Result<TimingStats>
where
    E: Into<Error>,
{
    if steps < 10 {
        return Err(Error::config("timing.steps", format!("need at least 10 timed steps, got {steps}")));
    }
    for i in 0..warmup {
        step(i).map_err(Into::into)?;
    }
    let mut samples = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = Instant::now();
        step(warmup + i).map_err(Into::into)?;
        samples.push(t.elapsed().as_secs_f64());
    }
    TimingStats::from_samples(samples)
}

/// Relative overhead of `treatment` over `baseline` in percent.
pub fn relative_overhead_pct(baseline: &TimingStats, treatment: &TimingStats) -> f64 {
    (treatment.mean_secs / baseline.mean_secs - 1.0) * 100.0
}
