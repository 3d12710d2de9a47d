//! Truncated Fock-space states and the elementary operator actions from
//! which every evolution in this crate is assembled: the ladder operators,
//! the displaced-oscillator hamiltonian H = ε a†a + g(a + a†), the exact
//! unitary step exp(-i dt H) via a cached eigendecomposition, and the
//! diagonal collapse factor exp(-dt (w - 2λn)² / 4λ).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stored amplitudes are kept with max |amplitude| inside this window;
/// excess magnitude lives in the log scale.
pub const RESCALE_MAX: f64 = 1e6;
pub const RESCALE_MIN: f64 = 1e-6;

/// Relative amplitude below which a Fock slot is treated as empty by the
/// windowed propagator application.
const WINDOW_REL: f64 = 1e-16;

/// Model constants, all rates per fundamental time step (τ = 1, Planck units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Energy per volume unit.
    pub epsilon: f64,
    /// Growth coupling.
    pub g: f64,
    /// Collapse rate; 0 disables collapse.
    pub lambda: f64,
    /// Fundamental time step. Fixed to 1 internally.
    pub tau: f64,
    /// Maximum number of instants.
    pub k_max: usize,
    /// Fock-space truncation: amplitudes live on n = 0..=n_max.
    pub n_max: usize,
}

impl ModelParams {
    pub fn new(epsilon: f64, g: f64, lambda: f64, k_max: usize, n_max: usize) -> Result<Self> {
        let p = ModelParams {
            epsilon,
            g,
            lambda,
            tau: 1.0,
            k_max,
            n_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || !self.g.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidParams("non-finite model constant".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParams(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidParams("k_max must be >= 1".into()));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParams("n_max must be >= 1".into()));
        }
        if self.tau != 1.0 {
            return Err(Error::InvalidParams("tau is fixed to 1".into()));
        }
        Ok(())
    }

    /// Space dimension of the truncated basis.
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// An unnormalized state over occupation numbers 0..=n_max.
///
/// The represented vector is `amps × exp(log_scale)`. Collapse factors and
/// rescales move magnitude into `log_scale` so the stored amplitudes never
/// under- or overflow; the squared norm of a collapsed trajectory decays
/// exponentially and would leave f64 range long before times of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amps: Vec<Complex64>,
    log_scale: f64,
}

impl FockVector {
    /// The vacuum |0⟩.
    pub fn vacuum(n_max: usize) -> Self {
        Self::basis(0, n_max)
    }

    /// The number eigenstate |n⟩.
    pub fn basis(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max, "basis index {n} beyond truncation {n_max}");
        let mut amps = vec![Complex64::ZERO; n_max + 1];
        amps[n] = Complex64::ONE;
        FockVector {
            amps,
            log_scale: 0.0,
        }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Self {
        assert!(!amps.is_empty());
        FockVector {
            amps,
            log_scale: 0.0,
        }
    }

    /// Superposition Σ αₙ|n⟩ from (n, αₙ) pairs, normalized to unit norm.
    pub fn from_components(components: &[(usize, Complex64)], n_max: usize) -> Result<Self> {
        let mut amps = vec![Complex64::ZERO; n_max + 1];
        for &(n, a) in components {
            if n > n_max {
                return Err(Error::InvalidParams(format!(
                    "component n = {n} beyond truncation {n_max}"
                )));
            }
            amps[n] += a;
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidParams("zero initial state".into()));
        }
        let inv = norm2.sqrt().recip();
        for a in &mut amps {
            *a *= inv;
        }
        Ok(FockVector {
            amps,
            log_scale: 0.0,
        })
    }

    pub fn n_max(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Σ|amps|² of the stored amplitudes (scale factor excluded).
    pub fn norm2_stored(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// log ⟨v|v⟩ of the represented vector.
    pub fn log_norm2(&self) -> f64 {
        self.norm2_stored().ln() + 2.0 * self.log_scale
    }

    /// Fraction of the squared norm sitting in the top slot n_max.
    pub fn leakage(&self) -> f64 {
        let n2 = self.norm2_stored();
        if n2 == 0.0 {
            0.0
        } else {
            self.amps[self.n_max()].norm_sqr() / n2
        }
    }

    /// ⟨N⟩ of the normalized state.
    pub fn mean_n(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (n, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            num += n as f64 * p;
            den += p;
        }
        num / den
    }

    /// ⟨N²⟩ of the normalized state.
    pub fn mean_n2(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (n, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            num += (n as f64) * (n as f64) * p;
            den += p;
        }
        num / den
    }

    /// Per-state spread ⟨N²⟩ - ⟨N⟩² of the normalized state.
    pub fn sigma2_n(&self) -> f64 {
        let m = self.mean_n();
        self.mean_n2() - m * m
    }

    /// Move magnitude into `log_scale` when the stored amplitudes leave
    /// [RESCALE_MIN, RESCALE_MAX]. Never changes the represented ray.
    pub fn rescale(&mut self) {
        let max = self
            .amps
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0f64, f64::max)
            .sqrt();
        if max == 0.0 || !max.is_finite() {
            return;
        }
        if !(RESCALE_MIN..=RESCALE_MAX).contains(&max) {
            let inv = max.recip();
            for a in &mut self.amps {
                *a *= inv;
            }
            self.log_scale += max.ln();
        }
    }

    /// Unit-norm copy with log_scale reset to zero.
    pub fn normalized(&self) -> FockVector {
        let inv = self.norm2_stored().sqrt().recip();
        FockVector {
            amps: self.amps.iter().map(|a| a * inv).collect(),
            log_scale: 0.0,
        }
    }

    #[cfg(test)]
    pub(crate) fn amps_mut(&mut self) -> &mut Vec<Complex64> {
        &mut self.amps
    }

    pub(crate) fn add_log_scale(&mut self, delta: f64) {
        self.log_scale += delta;
    }
}

/// ⟨u|v⟩ over the stored amplitudes; both log scales are ignored.
pub fn dot_stored(u: &FockVector, v: &FockVector) -> Complex64 {
    assert_eq!(u.amps.len(), v.amps.len());
    u.amps
        .iter()
        .zip(&v.amps)
        .map(|(a, b)| a.conj() * b)
        .sum()
}

/// |⟨û|v̂⟩|² between the normalized states.
pub fn normalized_fidelity(u: &FockVector, v: &FockVector) -> f64 {
    dot_stored(u, v).norm_sqr() / (u.norm2_stored() * v.norm2_stored())
}

/// (a v)ₙ = √(n+1) v_{n+1}; the top slot receives zero (hard truncation).
pub fn apply_annihilation(v: &FockVector) -> FockVector {
    let n_max = v.n_max();
    let mut amps = vec![Complex64::ZERO; n_max + 1];
    for n in 0..n_max {
        amps[n] = ((n + 1) as f64).sqrt() * v.amps[n + 1];
    }
    FockVector {
        amps,
        log_scale: v.log_scale,
    }
}

/// (a† v)ₙ = √n v_{n-1}. The amplitude that would land beyond n_max is
/// dropped; its squared magnitude (in stored units) is returned alongside.
pub fn apply_creation(v: &FockVector) -> (FockVector, f64) {
    let n_max = v.n_max();
    let mut amps = vec![Complex64::ZERO; n_max + 1];
    for n in 1..=n_max {
        amps[n] = (n as f64).sqrt() * v.amps[n - 1];
    }
    let dropped = (n_max as f64 + 1.0) * v.amps[n_max].norm_sqr();
    (
        FockVector {
            amps,
            log_scale: v.log_scale,
        },
        dropped,
    )
}

/// (ε N + g (a + a†)) v — the real-symmetric tridiagonal action.
pub fn hamiltonian_apply(v: &FockVector, p: &ModelParams) -> FockVector {
    let n_max = v.n_max();
    let mut amps = vec![Complex64::ZERO; n_max + 1];
    for n in 0..=n_max {
        let mut acc = p.epsilon * n as f64 * v.amps[n];
        if n > 0 {
            acc += p.g * (n as f64).sqrt() * v.amps[n - 1];
        }
        if n < n_max {
            acc += p.g * ((n + 1) as f64).sqrt() * v.amps[n + 1];
        }
        amps[n] = acc;
    }
    FockVector {
        amps,
        log_scale: v.log_scale,
    }
}

/// Dense matrix of H in the truncated number basis.
pub fn hamiltonian_matrix(p: &ModelParams) -> DMatrix<f64> {
    let dim = p.dim();
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            p.epsilon * i as f64
        } else if j == i + 1 {
            p.g * (j as f64).sqrt()
        } else if i == j + 1 {
            p.g * (i as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// Eigendecomposition of the truncated H, immutable and shareable; built
/// once per (ε, g, n_max) and cached.
#[derive(Debug)]
pub struct HamiltonianEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub epsilon: f64,
    pub g: f64,
    pub n_max: usize,
}

type EigenKey = (u64, u64, usize);
type PropKey = (u64, u64, usize, u64);

fn eigen_cache() -> &'static Mutex<HashMap<EigenKey, Arc<HamiltonianEigen>>> {
    static CACHE: OnceLock<Mutex<HashMap<EigenKey, Arc<HamiltonianEigen>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn propagator_cache() -> &'static Mutex<HashMap<PropKey, Arc<Propagator>>> {
    static CACHE: OnceLock<Mutex<HashMap<PropKey, Arc<Propagator>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl HamiltonianEigen {
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        let m = hamiltonian_matrix(p);
        let eig = m
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or(Error::EigenFailure)?;
        Ok(HamiltonianEigen {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            epsilon: p.epsilon,
            g: p.g,
            n_max: p.n_max,
        })
    }

    /// Cached lookup; the decomposition depends only on (ε, g, n_max).
    pub fn cached(p: &ModelParams) -> Result<Arc<Self>> {
        let key = (p.epsilon.to_bits(), p.g.to_bits(), p.n_max);
        if let Some(e) = eigen_cache().lock().unwrap().get(&key) {
            return Ok(Arc::clone(e));
        }
        let eig = Arc::new(Self::new(p)?);
        eigen_cache()
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&eig));
        Ok(eig)
    }
}

/// Precomputed U = exp(-i dt H), stored column-major with per-column row
/// bounds covering the entries above the windowing cutoff. For the small dt
/// of a trajectory loop U is numerically banded, so applying it to a state
/// occupying n ≲ hi costs O(hi · bandwidth) instead of O(dim²).
#[derive(Debug)]
pub struct Propagator {
    dim: usize,
    dt: f64,
    u: Vec<Complex64>,
    row_lo: Vec<usize>,
    row_hi: Vec<usize>,
}

impl Propagator {
    pub fn new(eig: &HamiltonianEigen, dt: f64) -> Self {
        let dim = eig.n_max + 1;
        let phases: Vec<Complex64> = eig
            .eigenvalues
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * dt))
            .collect();
        // U = V diag(e^{-i e dt}) V^T with V real orthogonal.
        let v = &eig.eigenvectors;
        let mut u = vec![Complex64::ZERO; dim * dim];
        for col in 0..dim {
            for k in 0..dim {
                let c = phases[k] * v[(col, k)];
                if c == Complex64::ZERO {
                    continue;
                }
                let base = col * dim;
                for row in 0..dim {
                    u[base + row] += v[(row, k)] * c;
                }
            }
        }
        let mut row_lo = vec![0usize; dim];
        let mut row_hi = vec![dim - 1; dim];
        let cutoff = WINDOW_REL * WINDOW_REL;
        for col in 0..dim {
            let base = col * dim;
            let mut lo = 0;
            while lo < dim - 1 && u[base + lo].norm_sqr() < cutoff {
                lo += 1;
            }
            let mut hi = dim - 1;
            while hi > 0 && u[base + hi].norm_sqr() < cutoff {
                hi -= 1;
            }
            row_lo[col] = lo.min(col);
            row_hi[col] = hi.max(col);
        }
        Propagator {
            dim,
            dt,
            u,
            row_lo,
            row_hi,
        }
    }

    /// Cached lookup keyed by (ε, g, n_max, dt).
    pub fn cached(p: &ModelParams, dt: f64) -> Result<Arc<Self>> {
        let key = (p.epsilon.to_bits(), p.g.to_bits(), p.n_max, dt.to_bits());
        if let Some(prop) = propagator_cache().lock().unwrap().get(&key) {
            return Ok(Arc::clone(prop));
        }
        let eig = HamiltonianEigen::cached(p)?;
        let prop = Arc::new(Self::new(&eig, dt));
        propagator_cache()
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&prop));
        Ok(prop)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn apply(&self, v: &FockVector) -> FockVector {
        assert_eq!(v.amps.len(), self.dim);
        let mut out = vec![Complex64::ZERO; self.dim];
        self.apply_windowed(&v.amps, self.dim - 1, &mut out);
        FockVector {
            amps: out,
            log_scale: v.log_scale,
        }
    }

    /// Multiply by U assuming amplitudes above `hi` vanish; writes the full
    /// output buffer and returns the new top occupied index.
    pub(crate) fn apply_windowed(
        &self,
        amps: &[Complex64],
        hi: usize,
        out: &mut [Complex64],
    ) -> usize {
        debug_assert!(hi < self.dim);
        out.fill(Complex64::ZERO);
        let mut top = 0usize;
        for col in 0..=hi {
            let c = amps[col];
            if c == Complex64::ZERO {
                continue;
            }
            let (lo, hi_row) = (self.row_lo[col], self.row_hi[col]);
            let base = col * self.dim;
            for row in lo..=hi_row {
                out[row] += c * self.u[base + row];
            }
            top = top.max(hi_row);
        }
        let max2 = out[..=top]
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0f64, f64::max);
        let cutoff = max2 * WINDOW_REL * WINDOW_REL;
        let mut new_hi = top;
        while new_hi > 0 && out[new_hi].norm_sqr() <= cutoff {
            new_hi -= 1;
        }
        new_hi
    }
}

/// exp(-i dt H) v through the cached eigendecomposition. Norm-preserving to
/// rounding; dt = 0 is the identity.
pub fn unitary_step(v: &FockVector, p: &ModelParams, dt: f64) -> Result<FockVector> {
    if dt == 0.0 {
        return Ok(v.clone());
    }
    let prop = Propagator::cached(p, dt)?;
    Ok(prop.apply(v))
}

/// Multiply amplitude n by exp(-dt (w - 2λn)² / 4λ). The common maximal
/// factor is moved into log_scale so the largest stored factor is exactly 1.
pub fn collapse_step(v: &FockVector, w: f64, p: &ModelParams, dt: f64) -> FockVector {
    assert!(p.lambda > 0.0, "collapse_step requires lambda > 0");
    let mut out = v.clone();
    collapse_step_in_place(&mut out, w, p.lambda, dt);
    out
}

pub(crate) fn collapse_exponent(w: f64, lambda: f64, dt: f64, n: usize) -> f64 {
    let d = w - 2.0 * lambda * n as f64;
    -dt * d * d / (4.0 * lambda)
}

pub(crate) fn collapse_step_in_place(v: &mut FockVector, w: f64, lambda: f64, dt: f64) {
    // The exponent is a downward parabola in n maximized at n* = w / 2λ;
    // the max over the truncated range sits at the clamped integer.
    let n_star = (w / (2.0 * lambda)).clamp(0.0, v.n_max() as f64);
    let lo = n_star.floor() as usize;
    let hi = (lo + 1).min(v.n_max());
    let e_max = collapse_exponent(w, lambda, dt, lo).max(collapse_exponent(w, lambda, dt, hi));
    for (n, a) in v.amps.iter_mut().enumerate() {
        if *a == Complex64::ZERO {
            continue;
        }
        let f = (collapse_exponent(w, lambda, dt, n) - e_max).exp();
        *a *= f;
    }
    v.log_scale += e_max;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(epsilon: f64, g: f64, lambda: f64, n_max: usize) -> ModelParams {
        ModelParams::new(epsilon, g, lambda, 8, n_max).unwrap()
    }

    fn random_state(n_max: usize, seed: u64) -> FockVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<Complex64> = (0..=n_max)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        FockVector::from_amplitudes(amps).normalized()
    }

    /// Dense exp(-i dt H) by scaling and squaring with a Taylor series;
    /// independent of the eigendecomposition path it checks.
    fn expm_oracle(p: &ModelParams, dt: f64) -> DMatrix<Complex64> {
        let dim = p.dim();
        let h = hamiltonian_matrix(p);
        let mut a = DMatrix::<Complex64>::from_fn(dim, dim, |i, j| {
            Complex64::new(0.0, -dt * h[(i, j)])
        });
        let norm = a.iter().map(|c| c.norm()).fold(0.0f64, f64::max) * dim as f64;
        let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
        a /= Complex64::new(2.0f64.powi(squarings as i32), 0.0);
        let mut result = DMatrix::<Complex64>::identity(dim, dim);
        let mut term = DMatrix::<Complex64>::identity(dim, dim);
        for k in 1..60 {
            term = (&term * &a) / Complex64::new(k as f64, 0.0);
            result += &term;
            if term.iter().map(|c| c.norm()).fold(0.0f64, f64::max) < 1e-20 {
                break;
            }
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        result
    }

    #[test]
    fn annihilation_kills_vacuum() {
        let v = FockVector::vacuum(6);
        let av = apply_annihilation(&v);
        assert_eq!(av.norm2_stored(), 0.0);
    }

    #[test]
    fn annihilation_ladder_rule() {
        let one = FockVector::basis(1, 6);
        let a1 = apply_annihilation(&one);
        assert_abs_diff_eq!((a1.amplitudes()[0] - Complex64::ONE).norm(), 0.0);

        let three = FockVector::basis(3, 6);
        let a3 = apply_annihilation(&three);
        assert_abs_diff_eq!(a3.amplitudes()[2].re, 3.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a3.norm2_stored(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn creation_ladder_rule() {
        let zero = FockVector::vacuum(6);
        let (c0, dropped) = apply_creation(&zero);
        assert_eq!(dropped, 0.0);
        assert_abs_diff_eq!((c0.amplitudes()[1] - Complex64::ONE).norm(), 0.0);

        let two = FockVector::basis(2, 6);
        let (c2, _) = apply_creation(&two);
        assert_abs_diff_eq!(c2.amplitudes()[3].re, 3.0f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn creation_reports_dropped_weight() {
        let top = FockVector::basis(4, 4);
        let (up, dropped) = apply_creation(&top);
        assert_eq!(up.norm2_stored(), 0.0);
        assert_abs_diff_eq!(dropped, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn commutator_is_identity_below_truncation() {
        // ⟨v| a a† |v⟩ - ⟨v| a† a |v⟩ = ⟨v|v⟩ when the top two slots are empty.
        let mut v = random_state(10, 7);
        v.amps_mut()[9] = Complex64::ZERO;
        v.amps_mut()[10] = Complex64::ZERO;
        let (cv, _) = apply_creation(&v);
        let av = apply_annihilation(&v);
        let lhs = cv.norm2_stored() - av.norm2_stored();
        assert_relative_eq!(lhs, v.norm2_stored(), epsilon = 1e-12);
    }

    #[test]
    fn hamiltonian_number_eigenstate() {
        let p = params(1.3, 0.0, 0.0, 8);
        let v = FockVector::basis(5, 8);
        let hv = hamiltonian_apply(&v, &p);
        assert_abs_diff_eq!((hv.amplitudes()[5] - 6.5 * Complex64::ONE).norm(), 0.0);
        assert_abs_diff_eq!(hv.norm2_stored(), 6.5 * 6.5, epsilon = 1e-12);
    }

    #[test]
    fn hamiltonian_vacuum_with_drive() {
        let p = params(0.0, 2.0, 0.0, 8);
        let v = FockVector::vacuum(8);
        let hv = hamiltonian_apply(&v, &p);
        assert_abs_diff_eq!(hv.amplitudes()[1].re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hv.norm2_stored(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn hamiltonian_one_particle() {
        // H|1⟩ = g|0⟩ + ε|1⟩ + g√2|2⟩ for ε=1, g=2.
        let p = params(1.0, 2.0, 0.0, 8);
        let v = FockVector::basis(1, 8);
        let hv = hamiltonian_apply(&v, &p);
        assert_abs_diff_eq!(hv.amplitudes()[0].re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hv.amplitudes()[1].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hv.amplitudes()[2].re, 2.0 * 2.0f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn hermiticity_random_states() {
        let p = params(0.7, 1.1, 0.0, 12);
        for seed in 0..8u64 {
            let u = random_state(12, seed);
            let v = random_state(12, seed + 100);
            let hu = hamiltonian_apply(&u, &p);
            let hv = hamiltonian_apply(&v, &p);
            let lhs = dot_stored(&u, &hv);
            let rhs = dot_stored(&v, &hu).conj();
            assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unitary_number_conserving_phases() {
        // g = 0: each amplitude picks up e^{-i ε n dt}, magnitudes unchanged.
        let p = params(0.9, 0.0, 0.0, 6);
        let v = random_state(6, 3);
        let u = unitary_step(&v, &p, 0.37).unwrap();
        for n in 0..=6 {
            let expect = v.amplitudes()[n] * Complex64::from_polar(1.0, -0.9 * n as f64 * 0.37);
            assert_abs_diff_eq!((u.amplitudes()[n] - expect).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unitary_dt_zero_is_identity() {
        let p = params(1.0, 0.5, 0.0, 6);
        let v = random_state(6, 5);
        let u = unitary_step(&v, &p, 0.0).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn unitary_matches_expm_oracle() {
        let p = params(1.0, 1.0, 0.0, 16);
        let v = FockVector::vacuum(16);
        let stepped = unitary_step(&v, &p, 0.1).unwrap();
        let u = expm_oracle(&p, 0.1);
        for n in 0..=16 {
            let mut expect = Complex64::ZERO;
            for j in 0..=16 {
                expect += u[(n, j)] * v.amplitudes()[j];
            }
            assert_abs_diff_eq!(
                (stepped.amplitudes()[n] - expect).norm(),
                0.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn unitary_norm_preserved_long_dt() {
        let p = params(1.2, 0.8, 0.0, 20);
        for seed in 0..4u64 {
            let v = random_state(20, seed);
            for &dt in &[0.1, 1.0, 10.0] {
                let u = unitary_step(&v, &p, dt).unwrap();
                assert_relative_eq!(u.norm2_stored(), v.norm2_stored(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unitary_group_property() {
        let p = params(0.6, 1.4, 0.0, 14);
        let v = random_state(14, 11);
        let a = unitary_step(&unitary_step(&v, &p, 0.3).unwrap(), &p, 0.45).unwrap();
        let b = unitary_step(&v, &p, 0.75).unwrap();
        for n in 0..=14 {
            assert_abs_diff_eq!(
                (a.amplitudes()[n] - b.amplitudes()[n]).norm(),
                0.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn collapse_eigenvalue_fixed_point() {
        // w = 2λn leaves |n⟩ unchanged up to log_scale bookkeeping.
        let p = params(0.0, 0.0, 0.7, 6);
        let v = FockVector::basis(3, 6);
        let c = collapse_step(&v, 2.0 * 0.7 * 3.0, &p, 0.5);
        assert_abs_diff_eq!((c.amplitudes()[3] - Complex64::ONE).norm(), 0.0);
        assert_abs_diff_eq!(c.log_scale(), 0.0);
    }

    #[test]
    fn collapse_large_lambda_kills_excited() {
        let p = params(0.0, 0.0, 50.0, 4);
        let mut v = FockVector::from_components(
            &[(0, Complex64::ONE), (1, Complex64::ONE), (3, Complex64::ONE)],
            4,
        )
        .unwrap();
        let mut prev = [1.0f64; 5];
        for _ in 0..5 {
            v = collapse_step(&v, 0.0, &p, 0.1);
            let n2 = v.norm2_stored();
            for n in 1..=4 {
                let frac = v.amplitudes()[n].norm_sqr() / n2;
                assert!(frac <= prev[n] + 1e-15);
                prev[n] = frac;
            }
        }
        // After several strong steps everything but the vacuum is gone.
        assert!(v.amplitudes()[1].norm_sqr() / v.norm2_stored() < 1e-8);
    }

    #[test]
    fn collapse_two_component_ratio() {
        // Ratio between components equals the direct scalar evaluation
        // exp(-dt [(w-2λn₁)² - (w-2λn₂)²] / 4λ).
        let p = params(0.0, 0.0, 1.3, 8);
        let (n1, n2) = (2usize, 7usize);
        let v = FockVector::from_components(
            &[
                (n1, Complex64::new(0.6, 0.1)),
                (n2, Complex64::new(-0.3, 0.7)),
            ],
            8,
        )
        .unwrap();
        let (w, dt) = (1.9, 0.23);
        let c = collapse_step(&v, w, &p, dt);
        let measured = (c.amplitudes()[n1] / c.amplitudes()[n2])
            / (v.amplitudes()[n1] / v.amplitudes()[n2]);
        let d1 = w - 2.0 * 1.3 * n1 as f64;
        let d2 = w - 2.0 * 1.3 * n2 as f64;
        let expect = (-dt * (d1 * d1 - d2 * d2) / (4.0 * 1.3)).exp();
        assert_relative_eq!(measured.re, expect, max_relative = 1e-12);
        assert!(measured.im.abs() <= 1e-12 * expect.abs());
    }

    /// Equality up to one unit in the last place.
    fn ulp_eq(a: f64, b: f64) -> bool {
        a == b || (a.to_bits() as i64 - b.to_bits() as i64).abs() <= 1
    }

    #[test]
    fn collapse_steps_commute() {
        // The two factors are diagonal, so order is irrelevant; composing the
        // rounded multiplies in either order agrees to the last bit or one
        // ulp (exact bitwise equality is not achievable for a*f1*f2 vs
        // a*f2*f1 under IEEE rounding). The scale bookkeeping is identical.
        let p = params(0.0, 0.0, 0.9, 10);
        let v = random_state(10, 21);
        let ab = collapse_step(&collapse_step(&v, 1.7, &p, 0.4), -2.3, &p, 0.4);
        let ba = collapse_step(&collapse_step(&v, -2.3, &p, 0.4), 1.7, &p, 0.4);
        assert_eq!(ab.log_scale(), ba.log_scale());
        for n in 0..=10 {
            assert!(ulp_eq(ab.amplitudes()[n].re, ba.amplitudes()[n].re));
            assert!(ulp_eq(ab.amplitudes()[n].im, ba.amplitudes()[n].im));
        }
    }

    #[test]
    fn rescale_keeps_ray() {
        let mut v = random_state(8, 31);
        for a in v.amps_mut() {
            *a *= 3.4e7;
        }
        let before = v.clone();
        v.rescale();
        let max = v
            .amps
            .iter()
            .map(|a| a.norm())
            .fold(0.0f64, f64::max);
        assert!((RESCALE_MIN..=RESCALE_MAX).contains(&max));
        // Relative amplitudes and phases unchanged.
        for n in 1..=8 {
            let r_before = before.amplitudes()[n] / before.amplitudes()[0];
            let r_after = v.amplitudes()[n] / v.amplitudes()[0];
            assert_abs_diff_eq!((r_before - r_after).norm(), 0.0, epsilon = 1e-15);
        }
        // Represented log norm is preserved.
        assert_relative_eq!(v.log_norm2(), before.log_norm2(), epsilon = 1e-12);
    }

    #[test]
    fn propagator_windowed_matches_full() {
        let p = params(1.0, 0.5, 0.0, 40);
        let eig = HamiltonianEigen::new(&p).unwrap();
        let prop = Propagator::new(&eig, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut amps = vec![Complex64::ZERO; 41];
        for slot in amps.iter_mut().take(12) {
            *slot = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        let full = prop.apply(&FockVector::from_amplitudes(amps.clone()));
        let mut out = vec![Complex64::ZERO; 41];
        let hi = prop.apply_windowed(&amps, 11, &mut out);
        assert!(hi >= 11);
        for n in 0..=40 {
            assert_abs_diff_eq!((out[n] - full.amplitudes()[n]).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::new(1.0, 0.5, -0.1, 8, 16).is_err());
        assert!(ModelParams::new(1.0, 0.5, 1.0, 0, 16).is_err());
        assert!(ModelParams::new(1.0, 0.5, 1.0, 8, 0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.5, 1.0, 8, 16).is_err());
    }

    proptest! {
        #[test]
        fn prop_unitary_preserves_norm(seed in 0u64..1000, dt in 0.0f64..10.0) {
            let p = params(0.8, 0.6, 0.0, 10);
            let v = random_state(10, seed);
            let u = unitary_step(&v, &p, dt).unwrap();
            prop_assert!((u.norm2_stored() - v.norm2_stored()).abs() <= 1e-12 * v.norm2_stored());
        }

        #[test]
        fn prop_hermitian(seed in 0u64..1000) {
            let p = params(1.1, 0.9, 0.0, 9);
            let u = random_state(9, seed);
            let v = random_state(9, seed.wrapping_add(77));
            let lhs = dot_stored(&u, &hamiltonian_apply(&v, &p));
            let rhs = dot_stored(&v, &hamiltonian_apply(&u, &p)).conj();
            prop_assert!((lhs - rhs).norm() <= 1e-12);
        }
    }
}
