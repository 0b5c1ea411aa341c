//! Small statistics helpers: batch means, Wilson intervals and the
//! two-sample Kolmogorov–Smirnov test.

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 100;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Mean and batch-means standard error of an autocorrelated series.
///
/// The series is cut into `batches` consecutive batches of equal length
/// (trailing values that do not fill a batch are dropped from the error
/// estimate but kept in the mean).
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    assert!(batches >= 2, "need at least two batches");
    assert!(
        values.len() >= batches,
        "need at least one value per batch ({} < {})",
        values.len(),
        batches
    );
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let len = values.len() / batches;
    let means: Vec<f64> = values
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Streaming accumulator for [`batch_means`] that does not store the series.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    batch_len: u64,
    in_batch: u64,
    batch_sum: f64,
    total: f64,
    count: u64,
    means: Vec<f64>,
}

impl BatchAccumulator {
    pub fn new(total_len: u64, batches: usize) -> Self {
        assert!(batches >= 2 && total_len >= batches as u64);
        BatchAccumulator {
            batch_len: total_len / batches as u64,
            in_batch: 0,
            batch_sum: 0.0,
            total: 0.0,
            count: 0,
            means: Vec::with_capacity(batches),
        }
    }

    pub fn push(&mut self, x: f64) {
        self.total += x;
        self.count += 1;
        if self.means.len() == self.means.capacity() {
            return;
        }
        self.batch_sum += x;
        self.in_batch += 1;
        if self.in_batch == self.batch_len {
            self.means.push(self.batch_sum / self.batch_len as f64);
            self.batch_sum = 0.0;
            self.in_batch = 0;
        }
    }

    /// `(mean, stderr)`.
    pub fn finish(&self) -> (f64, f64) {
        let b = self.means.len();
        assert!(b >= 2, "too few completed batches");
        let grand = self.means.iter().sum::<f64>() / b as f64;
        let var = self.means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
        (self.total / self.count as f64, (var / b as f64).sqrt())
    }
}

/// Wilson score interval for `hits` successes out of `samples` trials.
pub fn wilson_interval(hits: u64, samples: u64, z: f64) -> (f64, f64) {
    assert!(samples > 0 && hits <= samples);
    let n = samples as f64;
    let phat = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z / denom * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
