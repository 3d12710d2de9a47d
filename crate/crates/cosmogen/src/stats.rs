//! Statistical machinery shared by the ensemble and validation code:
//! weighted means with batch-means standard errors, effective sample size,
//! weighted Kolmogorov–Smirnov tests, least-squares fits and a discrete
//! spectrum peak estimate.
//!
//! Test constants live here so every tolerance decision is auditable in one
//! place rather than scattered through the suites.

use crate::{Error, Result};

/// Number of batches used for batch-means standard errors.
pub const BATCH_COUNT: usize = 20;

/// Effective-sample-size floor below which weighted estimates are flagged.
pub const MIN_ESS: f64 = 50.0;

/// Significance level of the goodness-of-fit tests.
pub const KS_LEVEL: f64 = 0.01;

/// Width of the statistical acceptance bands, in standard errors.
pub const SIGMA_BAND: f64 = 3.0;

/// Effective sample size (Σw)²/Σw² of a set of importance weights.
pub fn ess(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sum2: f64 = weights.iter().map(|w| w * w).sum();
    if sum2 == 0.0 {
        0.0
    } else {
        sum * sum / sum2
    }
}

/// Compensated (Kahan) accumulator; merging two accumulators keeps the
/// compensation, so partial sums combine associatively to within rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(-other.c);
    }

    pub fn value(&self) -> f64 {
        self.sum - self.c
    }
}

/// Partial weighted-moment sums that merge commutatively and associatively
/// up to compensated rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct PartialMoments {
    pub sum_w: KahanSum,
    pub sum_wx: KahanSum,
    pub count: usize,
}

impl PartialMoments {
    pub fn push(&mut self, value: f64, weight: f64) {
        self.sum_w.add(weight);
        self.sum_wx.add(weight * value);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &PartialMoments) {
        self.sum_w.merge(&other.sum_w);
        self.sum_wx.merge(&other.sum_wx);
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        self.sum_wx.value() / self.sum_w.value()
    }
}

/// Self-normalized weighted mean (compensated summation).
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(values.len(), weights.len());
    let mut acc = PartialMoments::default();
    for (v, w) in values.iter().zip(weights) {
        acc.push(*v, *w);
    }
    acc.mean()
}

#[derive(Debug, Clone, Copy)]
pub struct BatchEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Weighted mean with a batch-means standard error: trajectories are split
/// into `n_batches` contiguous blocks, each yields a self-normalized batch
/// mean, and the spread of batch means estimates the error of the total.
pub fn batch_weighted_mean(values: &[f64], weights: &[f64], n_batches: usize) -> BatchEstimate {
    assert_eq!(values.len(), weights.len());
    let n = values.len();
    let mean = weighted_mean(values, weights);
    if n < 2 * n_batches {
        // Too few samples for batching; fall back to a plain weighted stderr.
        let wsum: f64 = weights.iter().sum();
        let var: f64 = values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * (v - mean) * (v - mean))
            .sum::<f64>()
            / wsum;
        let n_eff = ess(weights).max(1.0);
        return BatchEstimate {
            mean,
            stderr: (var / n_eff).sqrt(),
        };
    }
    let mut batch_means = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let lo = b * n / n_batches;
        let hi = (b + 1) * n / n_batches;
        batch_means.push(weighted_mean(&values[lo..hi], &weights[lo..hi]));
    }
    let bm: f64 = batch_means.iter().sum::<f64>() / n_batches as f64;
    let var: f64 = batch_means
        .iter()
        .map(|m| (m - bm) * (m - bm))
        .sum::<f64>()
        / (n_batches as f64 - 1.0);
    BatchEstimate {
        mean,
        stderr: (var / n_batches as f64).sqrt(),
    }
}

/// Survival function of the Kolmogorov distribution,
/// Q(c) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² c²).
pub fn kolmogorov_sf(c: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u64 {
        let term = (-2.0 * (k * k) as f64 * c * c).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Critical value c_α with Q(c_α) = α, found by bisection.
pub fn kolmogorov_critical(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0);
    let (mut lo, mut hi) = (0.2, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy)]
pub struct KsOutcome {
    /// Sup-distance between the distribution functions.
    pub d: f64,
    /// Effective sample size entering the test statistic.
    pub n_eff: f64,
    /// d · √n_eff, compared against the Kolmogorov critical value.
    pub statistic: f64,
    pub critical: f64,
    pub level: f64,
    pub passed: bool,
}

fn sorted_indices(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    idx
}

/// One-sample weighted KS test of `samples` (with importance `weights`)
/// against the theoretical CDF. The effective sample size replaces n in the
/// asymptotic statistic.
pub fn ks_weighted_one_sample<F: Fn(f64) -> f64>(
    samples: &[f64],
    weights: &[f64],
    cdf: F,
    level: f64,
) -> KsOutcome {
    assert_eq!(samples.len(), weights.len());
    assert!(!samples.is_empty());
    let idx = sorted_indices(samples);
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0f64;
    let mut d = 0.0f64;
    for &i in &idx {
        let f = cdf(samples[i]);
        let below = acc / total;
        acc += weights[i];
        let above = acc / total;
        d = d.max((below - f).abs()).max((above - f).abs());
    }
    let n_eff = ess(weights);
    finish_ks(d, n_eff, level)
}

/// Two-sample weighted KS test; the pooled effective size
/// e_x·e_y/(e_x+e_y) replaces the usual n·m/(n+m).
pub fn ks_weighted_two_sample(
    xs: &[f64],
    wx: &[f64],
    ys: &[f64],
    wy: &[f64],
    level: f64,
) -> KsOutcome {
    assert_eq!(xs.len(), wx.len());
    assert_eq!(ys.len(), wy.len());
    let ix = sorted_indices(xs);
    let iy = sorted_indices(ys);
    let tx: f64 = wx.iter().sum();
    let ty: f64 = wy.iter().sum();
    let (mut ax, mut ay) = (0.0f64, 0.0f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < ix.len() || j < iy.len() {
        let x_next = ix.get(i).map(|&k| xs[k]);
        let y_next = iy.get(j).map(|&k| ys[k]);
        let t = match (x_next, y_next) {
            (Some(x), Some(y)) => x.min(y),
            (Some(x), None) => x,
            (None, Some(y)) => y,
            (None, None) => break,
        };
        while i < ix.len() && xs[ix[i]] <= t {
            ax += wx[ix[i]];
            i += 1;
        }
        while j < iy.len() && ys[iy[j]] <= t {
            ay += wy[iy[j]];
            j += 1;
        }
        d = d.max((ax / tx - ay / ty).abs());
    }
    let (ex, ey) = (ess(wx), ess(wy));
    let n_eff = ex * ey / (ex + ey);
    finish_ks(d, n_eff, level)
}

fn finish_ks(d: f64, n_eff: f64, level: f64) -> KsOutcome {
    let statistic = d * n_eff.sqrt();
    let critical = kolmogorov_critical(level);
    KsOutcome {
        d,
        n_eff,
        statistic,
        critical,
        level,
        passed: statistic < critical,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

/// Ordinary least squares y = a + b x with residual-based parameter errors.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Domain("linear fit needs ≥ 3 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("degenerate abscissae in linear fit".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let s2 = ss_res / (n - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: (s2 / sxx).sqrt(),
        intercept_stderr: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
    })
}

/// Least-squares slope of y against x through the origin, with the relative
/// RMS residual of the fit.
pub fn slope_through_origin(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::Domain("empty fit window".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - slope * x;
            r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| y * y).sum();
    let rel = if ss_tot == 0.0 {
        0.0
    } else {
        (ss_res / ss_tot).sqrt()
    };
    Ok((slope, rel))
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Angular frequency of the strongest spectral line of `values` after
/// subtracting the running mean, by scanning the discrete Fourier magnitudes
/// on the uniform grid. The resolution is one frequency bin, 2π/T.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len());
    let n = values.len();
    assert!(n >= 8);
    // The running (cumulative) mean removes the slow growth without touching
    // the oscillation much.
    let mut detrended = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v;
        detrended.push(v - acc / (i + 1) as f64);
    }
    let span = times[n - 1] - times[0];
    let mut best_k = 1usize;
    let mut best_mag = 0.0f64;
    for k in 1..=n / 2 {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / span;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (t, v) in times.iter().zip(&detrended) {
            let phase = omega * (t - times[0]);
            re += v * phase.cos();
            im += v * phase.sin();
        }
        let mag = re * re + im * im;
        if mag > best_mag {
            best_mag = mag;
            best_k = k;
        }
    }
    2.0 * std::f64::consts::PI * best_k as f64 / span
}
