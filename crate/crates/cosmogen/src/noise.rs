//! Classical noise records w(t), their Brownian integral B(t), and the two
//! probability-measure views: the raw Gaussian reference measure and the
//! norm-weighted physical measure.
//!
//! Raw paths carry an importance weight (the squared state norm relative to
//! the Gaussian reference density, tracked in log space); physical paths are
//! sampled from the state-conditioned distribution step by step and carry
//! uniform statistical weight.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fock::{FockVector, ModelParams};
use crate::{Error, Result};

/// Which measure the noise values were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// w_k ~ N(0, λ/dt) independent of the state; statistics must be
    /// reweighted by the squared state norm (Radon–Nikodym factor).
    Raw,
    /// w_k drawn from the state-conditioned physical distribution; uniform
    /// statistical weight, O(dt)-accurate.
    Physical,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Scheme::Raw),
            "physical" => Ok(Scheme::Physical),
            other => Err(Error::Parse(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Raw => write!(f, "raw"),
            Scheme::Physical => write!(f, "physical"),
        }
    }
}

/// Distinct fixed stream labels so the space and clock sectors get
/// independent, reproducible generators from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    Space = 0,
    Clock = 1,
}

/// Generator for trajectory `trajectory` of a run. Streams are derived from
/// the master seed by index, so trajectory i is reproducible no matter how
/// many threads run or in which order work is stolen.
pub fn trajectory_rng(master_seed: u64, trajectory: u64, label: StreamLabel) -> ChaCha8Rng {
    assert!(trajectory < (1 << 63), "trajectory index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trajectory << 1) | label as u64);
    rng
}

/// A realized noise record on a uniform grid of step dt.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    /// w_k for k = 1..=steps.
    pub values: Vec<f64>,
    pub seed: u64,
    pub scheme: Scheme,
}

impl NoisePath {
    pub fn steps(&self) -> usize {
        self.values.len()
    }

    /// B(k dt) = dt Σ_{j≤k} w_j, cumulative left-to-right so replay is
    /// bit-reproducible. B(0) = 0 is implicit and not stored.
    pub fn brownian(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0f64;
        for &w in &self.values {
            acc += self.dt * w;
            out.push(acc);
        }
        out
    }

    /// Brownian-bridge refinement to step dt/2: coarse increments are kept
    /// exactly; midpoints get the conditional N(ΔB/2, λ dt/4) draw.
    pub fn refine(&self, lambda: f64, seed: u64) -> NoisePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mid = Normal::new(0.0, (lambda * self.dt / 4.0).sqrt()).unwrap();
        let half = self.dt / 2.0;
        let mut values = Vec::with_capacity(self.values.len() * 2);
        for &w in &self.values {
            let db = w * self.dt;
            let xi: f64 = mid.sample(&mut rng);
            values.push((db / 2.0 + xi) / half);
            values.push((db / 2.0 - xi) / half);
        }
        NoisePath {
            dt: half,
            values,
            seed,
            scheme: self.scheme,
        }
    }

    /// CSV record for replay debugging, columns `step,w`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,w")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:.16e}", k + 1, v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, dt: f64, seed: u64, scheme: Scheme) -> Result<NoisePath> {
        let reader = BufReader::new(r);
        let mut values = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "step,w" {
                    return Err(Error::Parse(format!("unexpected CSV header '{line}'")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let _step = parts
                .next()
                .ok_or_else(|| Error::Parse("missing step column".into()))?;
            let w: f64 = parts
                .next()
                .ok_or_else(|| Error::Parse("missing w column".into()))?
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad w value: {e}")))?;
            values.push(w);
        }
        Ok(NoisePath {
            dt,
            values,
            seed,
            scheme,
        })
    }
}

/// Draw a whole record from the raw Gaussian measure: w_k independent with
/// mean 0 and variance λ/dt, so B increments have variance λ dt.
pub fn sample_raw(steps: usize, dt: f64, lambda: f64, seed: u64) -> NoisePath {
    assert!(steps >= 1 && dt > 0.0 && lambda > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (lambda / dt).sqrt()).unwrap();
    let values = (0..steps).map(|_| normal.sample(&mut rng)).collect();
    NoisePath {
        dt,
        values,
        seed,
        scheme: Scheme::Raw,
    }
}

/// One physical-scheme draw: Gaussian with mean 2λ⟨N⟩ of the normalized
/// current state and variance λ/dt — the O(dt)-accurate conditional of the
/// norm-weighted measure (exact when the state is a number eigenstate).
pub fn sample_physical_step<R: Rng + ?Sized>(
    state: &FockVector,
    p: &ModelParams,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    let norm2 = state.norm2_stored();
    if norm2 <= 0.0 || !norm2.is_finite() {
        return Err(Error::DegenerateNorm);
    }
    let mean = 2.0 * p.lambda * state.mean_n();
    let normal = Normal::new(mean, (p.lambda / dt).sqrt())
        .map_err(|e| Error::InvalidParams(format!("physical step: {e}")))?;
    Ok(normal.sample(rng))
}

/// Log importance weight of a raw path: the squared state norm relative to
/// the Gaussian reference density. For raw paths exp(log_weight) is the
/// Radon–Nikodym factor of the physical measure; for physical paths it is
/// carried for diagnostics only.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathWeight {
    pub log_weight: f64,
}

impl PathWeight {
    /// Fold in one collapse step: the squared-norm change of the state plus
    /// the Gaussian density correction dt w² / 2λ.
    pub fn push_step(&mut self, delta_log_norm2: f64, w: f64, lambda: f64, dt: f64) {
        self.log_weight += delta_log_norm2 + dt * w * w / (2.0 * lambda);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{collapse_step, FockVector};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn brownian_constant_record() {
        let path = NoisePath {
            dt: 0.5,
            values: vec![3.0; 10],
            seed: 0,
            scheme: Scheme::Raw,
        };
        let b = path.brownian();
        for (k, &bk) in b.iter().enumerate() {
            assert_relative_eq!(bk, 3.0 * (k + 1) as f64 * 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn brownian_step_function() {
        let mut values = vec![0.0; 8];
        values[0] = 2.0;
        let path = NoisePath {
            dt: 1.0,
            values,
            seed: 0,
            scheme: Scheme::Raw,
        };
        let b = path.brownian();
        assert!(b.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn brownian_matches_kahan_oracle() {
        let path = sample_raw(100_000, 0.01, 2.0, 42);
        let b = path.brownian();
        // Independent compensated summation.
        let mut sum = 0.0f64;
        let mut c = 0.0f64;
        let mut kahan = Vec::with_capacity(path.values.len());
        for &w in &path.values {
            let y = w * path.dt - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
            kahan.push(sum);
        }
        for (a, b) in b.iter().zip(&kahan) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn raw_sampling_reproducible() {
        let a = sample_raw(1000, 0.1, 1.5, 7);
        let b = sample_raw(1000, 0.1, 1.5, 7);
        assert_eq!(a, b);
        let c = sample_raw(1000, 0.1, 1.5, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn raw_moments() {
        let lambda = 2.0;
        let dt = 0.5;
        let path = sample_raw(1_000_000, dt, lambda, 12345);
        let n = path.values.len() as f64;
        let mean: f64 = path.values.iter().sum::<f64>() / n;
        let var: f64 = path.values.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0);
        let sigma = (lambda / dt).sqrt();
        // Zero mean within 4 standard errors.
        assert!(mean.abs() < 4.0 * sigma / n.sqrt(), "mean = {mean}");
        // Variance λ/dt within 1%.
        assert_relative_eq!(var, lambda / dt, max_relative = 0.01);
    }

    #[test]
    fn brownian_variance_and_scaling() {
        let lambda = 1.0;
        let dt = 0.25;
        let steps = 160; // t = 40
        let n_paths = 4000usize;
        let mut var_t = 0.0f64;
        let mut var_2t = 0.0f64;
        for i in 0..n_paths {
            let path = sample_raw(steps, dt, lambda, 9000 + i as u64);
            let b = path.brownian();
            let b_half = b[steps / 2 - 1];
            let b_full = b[steps - 1];
            var_t += b_half * b_half;
            var_2t += b_full * b_full;
        }
        var_t /= n_paths as f64;
        var_2t /= n_paths as f64;
        let t = 0.5 * steps as f64 * dt;
        // Var[B(t)] = λ t within 2%; doubling t doubles the variance.
        assert_relative_eq!(var_t, lambda * t, max_relative = 0.02);
        assert_relative_eq!(var_2t / var_t, 2.0, max_relative = 0.1);
    }

    #[test]
    fn physical_step_eigenstate_moments() {
        let p = ModelParams::new(0.0, 0.0, 1.5, 4, 8).unwrap();
        let state = FockVector::basis(3, 8);
        let dt = 0.2;
        let mut rng = trajectory_rng(11, 0, StreamLabel::Space);
        let n = 200_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let w = sample_physical_step(&state, &p, dt, &mut rng).unwrap();
            sum += w;
            sum2 += w * w;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let expect_mean = 2.0 * 1.5 * 3.0;
        let sigma = (1.5f64 / dt).sqrt();
        assert!((mean - expect_mean).abs() < 4.0 * sigma / (n as f64).sqrt());
        assert_relative_eq!(var, 1.5 / dt, max_relative = 0.02);
    }

    #[test]
    fn physical_step_superposition_mean() {
        // Equal superposition of |0⟩, |1⟩ has ⟨N⟩ = 1/2, so the mean is λ.
        let p = ModelParams::new(0.0, 0.0, 0.8, 4, 4).unwrap();
        let state = FockVector::from_components(
            &[(0, Complex64::ONE), (1, Complex64::ONE)],
            4,
        )
        .unwrap();
        let mut rng = trajectory_rng(13, 1, StreamLabel::Space);
        let n = 200_000usize;
        let dt = 1.0;
        let mean: f64 = (0..n)
            .map(|_| sample_physical_step(&state, &p, dt, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let sigma = (0.8f64 / dt).sqrt();
        assert!((mean - 0.8).abs() < 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn physical_long_run_drift_recovers_eigenvalue() {
        // For an already-collapsed state on |n⟩ the record drifts at 2λn.
        let p = ModelParams::new(0.0, 0.0, 1.0, 4, 8).unwrap();
        let state = FockVector::basis(2, 8);
        let dt = 1.0;
        let steps = 40_000usize;
        let mut rng = trajectory_rng(17, 2, StreamLabel::Space);
        let mut b = 0.0f64;
        for _ in 0..steps {
            b += dt * sample_physical_step(&state, &p, dt, &mut rng).unwrap();
        }
        let t = steps as f64 * dt;
        let estimate = b / (2.0 * p.lambda * t);
        // Var[B] = λt so stderr of the estimate is √(λt)/(2λt).
        let stderr = (p.lambda * t).sqrt() / (2.0 * p.lambda * t);
        assert!(
            (estimate - 2.0).abs() < 3.0 * stderr,
            "estimate = {estimate}, stderr = {stderr}"
        );
    }

    #[test]
    fn degenerate_state_rejected() {
        let p = ModelParams::new(0.0, 0.0, 1.0, 4, 4).unwrap();
        let zero = FockVector::from_amplitudes(vec![Complex64::ZERO; 5]);
        let mut rng = trajectory_rng(1, 0, StreamLabel::Space);
        assert!(matches!(
            sample_physical_step(&zero, &p, 1.0, &mut rng),
            Err(Error::DegenerateNorm)
        ));
    }

    #[test]
    fn raw_measure_normalization() {
        // Monte Carlo average of the Radon–Nikodym weight over raw paths is 1
        // (the per-instant form of the unit total probability).
        let lambda = 1.0;
        let dt = 0.05;
        let steps = 20; // λt = 1
        let p = ModelParams::new(0.0, 0.0, lambda, 4, 2).unwrap();
        let init = FockVector::from_components(
            &[(0, Complex64::ONE), (1, Complex64::ONE)],
            2,
        )
        .unwrap();
        let n_paths = 20_000usize;
        let mut sum = 0.0f64;
        let mut sum2 = 0.0f64;
        for i in 0..n_paths {
            let path = sample_raw(steps, dt, lambda, 40_000 + i as u64);
            let mut state = init.clone();
            let mut weight = PathWeight::default();
            for &w in &path.values {
                let before = state.log_norm2();
                state = collapse_step(&state, w, &p, dt);
                weight.push_step(state.log_norm2() - before, w, lambda, dt);
            }
            let rn = weight.log_weight.exp();
            sum += rn;
            sum2 += rn * rn;
        }
        let mean = sum / n_paths as f64;
        let var = sum2 / n_paths as f64 - mean * mean;
        let stderr = (var / n_paths as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * stderr,
            "mean weight = {mean}, stderr = {stderr}"
        );
    }

    #[test]
    fn stream_labels_are_independent() {
        let mut a = trajectory_rng(5, 10, StreamLabel::Space);
        let mut b = trajectory_rng(5, 10, StreamLabel::Clock);
        let xs: Vec<f64> = (0..8).map(|_| a.random()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.random()).collect();
        assert_ne!(xs, ys);
        // Same label reproduces bit-for-bit.
        let mut a2 = trajectory_rng(5, 10, StreamLabel::Space);
        let xs2: Vec<f64> = (0..8).map(|_| a2.random()).collect();
        assert_eq!(xs, xs2);
    }

    #[test]
    fn refine_preserves_coarse_brownian() {
        let path = sample_raw(50, 0.2, 1.0, 3);
        let fine = path.refine(1.0, 99);
        assert_eq!(fine.steps(), 100);
        assert_relative_eq!(fine.dt, 0.1);
        let b_coarse = path.brownian();
        let b_fine = fine.brownian();
        for k in 0..50 {
            assert_relative_eq!(
                b_coarse[k],
                b_fine[2 * k + 1],
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn refine_midpoint_variance() {
        // Conditional midpoint fluctuation has variance λ dt / 4.
        let lambda = 2.0;
        let dt = 0.4;
        let path = NoisePath {
            dt,
            values: vec![0.0; 20_000],
            seed: 0,
            scheme: Scheme::Raw,
        };
        let fine = path.refine(lambda, 123);
        let b = fine.brownian();
        let mut var = 0.0;
        for k in 0..20_000 {
            let mid = b[2 * k]; // midpoint deviation from the zero coarse record
            let base = if k == 0 { 0.0 } else { b[2 * k - 1] };
            let dev = mid - base;
            var += dev * dev;
        }
        var /= 20_000.0;
        assert_relative_eq!(var, lambda * dt / 4.0, max_relative = 0.05);
    }

    #[test]
    fn csv_round_trip() {
        let path = sample_raw(64, 0.125, 1.0, 21);
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = NoisePath::read_csv(&buf[..], path.dt, path.seed, path.scheme).unwrap();
        assert_eq!(path, back);
    }
}
