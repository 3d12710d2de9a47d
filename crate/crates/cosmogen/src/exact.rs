//! Exact small-scale and closed-form computations: the discrete instant
//! construction and the complete hamiltonian-free collapse analytics
//! (Brownian-record distribution, Born windows, hopping probabilities and
//! the ensemble spread), serving as oracles for the simulation modules.

use std::io::Write;

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::constants::LEAKAGE_THRESHOLD;
use crate::fock::{collapse_step_in_place, FockVector, ModelParams, Propagator};
use crate::noise::NoisePath;
use crate::quad;
use crate::{Error, Result};

/// Absolute tolerance of the adaptive quadratures.
pub const QUAD_TOL: f64 = 1e-10;

/// Integration windows extend this many standard deviations around each
/// mixture component.
pub const WINDOW_SIGMAS: f64 = 12.0;

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc((mean - x) / (sd * std::f64::consts::SQRT_2))
}

/// Initial superposition Σ αₙ|n⟩ over a finite support set, unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct H0InitialState {
    components: Vec<(usize, Complex64)>,
}

impl H0InitialState {
    pub fn new(components: &[(usize, Complex64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParams("empty initial state".into()));
        }
        let mut sorted: Vec<(usize, Complex64)> = components.to_vec();
        sorted.sort_by_key(|&(n, _)| n);
        for pair in sorted.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidParams(format!(
                    "duplicate occupation n = {}",
                    pair[0].0
                )));
            }
        }
        let norm2: f64 = sorted.iter().map(|(_, a)| a.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidParams("zero initial state".into()));
        }
        let inv = norm2.sqrt().recip();
        for (_, a) in &mut sorted {
            *a *= inv;
        }
        Ok(H0InitialState { components: sorted })
    }

    /// Two real components with the given squared weights.
    pub fn two_level(n1: usize, w1: f64, n2: usize, w2: f64) -> Result<Self> {
        if w1 <= 0.0 || w2 <= 0.0 {
            return Err(Error::InvalidParams("weights must be positive".into()));
        }
        Self::new(&[
            (n1, Complex64::new(w1.sqrt(), 0.0)),
            (n2, Complex64::new(w2.sqrt(), 0.0)),
        ])
    }

    pub fn components(&self) -> &[(usize, Complex64)] {
        &self.components
    }

    pub fn occupations(&self) -> Vec<usize> {
        self.components.iter().map(|&(n, _)| n).collect()
    }

    /// Born weights |αₙ|² in support order.
    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|(_, a)| a.norm_sqr()).collect()
    }

    pub fn max_n(&self) -> usize {
        self.components.last().map(|&(n, _)| n).unwrap_or(0)
    }

    pub fn to_fock(&self, n_max: usize) -> Result<FockVector> {
        FockVector::from_components(&self.components, n_max)
    }
}

/// The Brownian-record distribution of the hamiltonian-free model: one
/// Gaussian per component, weight |αₙ|², drift center 2λtn, variance λt.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    pub components: Vec<MixtureComponent>,
}

#[derive(Debug, Clone, Copy)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GaussianMixture {
    pub fn h0(init: &H0InitialState, lambda: f64, t: f64) -> Self {
        assert!(lambda > 0.0 && t > 0.0);
        let components = init
            .components
            .iter()
            .map(|&(n, a)| MixtureComponent {
                weight: a.norm_sqr(),
                mean: 2.0 * lambda * t * n as f64,
                variance: lambda * t,
            })
            .collect();
        GaussianMixture { components }
    }

    pub fn pdf(&self, b: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let d = b - c.mean;
                c.weight * (-0.5 * d * d / c.variance).exp()
                    / (2.0 * std::f64::consts::PI * c.variance).sqrt()
            })
            .sum()
    }

    pub fn cdf(&self, b: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_cdf(b, c.mean, c.variance.sqrt()))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Disjoint integration segments covering ±`sigmas` around every
    /// component.
    pub fn windows(&self, sigmas: f64) -> Vec<(f64, f64)> {
        quad::merge_windows(
            self.components
                .iter()
                .map(|c| {
                    let half = sigmas * c.variance.sqrt();
                    (c.mean - half, c.mean + half)
                })
                .collect(),
        )
    }
}

/// Window half-width parameter R (in standard deviations of B).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparationParams {
    r: u32,
}

impl SeparationParams {
    pub fn new(r: u32) -> Result<Self> {
        if r < 3 {
            return Err(Error::InvalidParams(format!("R must be >= 3, got {r}")));
        }
        Ok(SeparationParams { r })
    }

    pub fn r(&self) -> f64 {
        self.r as f64
    }

    pub fn half_width(&self, lambda: f64, t: f64) -> f64 {
        self.r() * (lambda * t).sqrt()
    }
}

impl Default for SeparationParams {
    /// R = 5 keeps the per-component window-miss probability below 1e-6.
    fn default() -> Self {
        SeparationParams { r: 5 }
    }
}

/// One instant of the discrete construction: the state √K ⟨m|Ψ⟩.
#[derive(Debug, Clone)]
pub struct InstantState {
    pub m: usize,
    pub state: FockVector,
}

/// The full table of instants m = 0..K-1.
#[derive(Debug, Clone)]
pub struct InstantTable {
    pub k: usize,
    pub instants: Vec<InstantState>,
}

impl InstantTable {
    /// log of the squared norm of ⟨m|Ψ⟩ (the 1/K measure factor included).
    pub fn log_norm2(&self, m: usize) -> f64 {
        self.instants[m].state.log_norm2() - (self.k as f64).ln()
    }

    pub fn norm2(&self, m: usize) -> f64 {
        self.log_norm2(m).exp()
    }

    /// CSV rows `m,norm2,meanN,sigmaN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m,norm2,meanN,sigmaN")?;
        for inst in &self.instants {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                inst.m,
                self.norm2(inst.m),
                inst.state.mean_n(),
                inst.state.sigma2_n().max(0.0).sqrt()
            )?;
        }
        Ok(())
    }
}

/// Iteratively applies the per-instant factor exp(-τG(m)) exp(-iτH) — the
/// unitary acts first within each factor — storing the product of the first
/// m factors applied to `init`. The noise record supplies w(m) for m ≥ 1.
pub fn build_instants(
    p: &ModelParams,
    path: &NoisePath,
    init: &FockVector,
) -> Result<InstantTable> {
    p.validate()?;
    if path.steps() + 1 < p.k_max {
        return Err(Error::Domain(format!(
            "noise path has {} steps, need at least K-1 = {}",
            path.steps(),
            p.k_max - 1
        )));
    }
    let dt = path.dt;
    let prop = if p.epsilon != 0.0 || p.g != 0.0 {
        Some(Propagator::cached(p, dt)?)
    } else {
        None
    };
    let mut instants = Vec::with_capacity(p.k_max);
    instants.push(InstantState {
        m: 0,
        state: init.clone(),
    });
    let mut state = init.clone();
    for m in 1..p.k_max {
        if let Some(prop) = &prop {
            state = prop.apply(&state);
        }
        if p.lambda > 0.0 {
            collapse_step_in_place(&mut state, path.values[m - 1], p.lambda, dt);
        }
        state.rescale();
        let leakage = state.leakage();
        if leakage > LEAKAGE_THRESHOLD {
            return Err(Error::Leakage {
                leakage,
                threshold: LEAKAGE_THRESHOLD,
                n_max: p.n_max,
            });
        }
        instants.push(InstantState {
            m,
            state: state.clone(),
        });
    }
    Ok(InstantTable {
        k: p.k_max,
        instants,
    })
}

/// The closed-form hamiltonian-free state at time t given the Brownian
/// record value B(t): Σ αₙ|n⟩ exp(-[B - 2λtn]²/4λt), with the common
/// maximal factor in log_scale. The w-history prefactor C(t) is never
/// evaluated; it cancels in every normalized quantity.
pub fn evolve_closed_form(
    init: &H0InitialState,
    b_t: f64,
    t: f64,
    lambda: f64,
) -> FockVector {
    assert!(t > 0.0 && lambda > 0.0);
    let n_max = init.max_n().max(1);
    let exponents: Vec<(usize, f64)> = init
        .components
        .iter()
        .map(|&(n, _)| {
            let d = b_t - 2.0 * lambda * t * n as f64;
            (n, -d * d / (4.0 * lambda * t))
        })
        .collect();
    let e_max = exponents
        .iter()
        .map(|&(_, e)| e)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut amps = vec![Complex64::ZERO; n_max + 1];
    for (&(n, a), &(_, e)) in init.components.iter().zip(&exponents) {
        amps[n] = a * (e - e_max).exp();
    }
    let mut v = FockVector::from_amplitudes(amps);
    v.add_log_scale(e_max);
    v
}

/// Mixture density of B(t).
pub fn pdf_b(init: &H0InitialState, lambda: f64, t: f64, b: f64) -> f64 {
    GaussianMixture::h0(init, lambda, t).pdf(b)
}

/// Mixture CDF of B(t).
pub fn cdf_b(init: &H0InitialState, lambda: f64, t: f64, b: f64) -> f64 {
    GaussianMixture::h0(init, lambda, t).cdf(b)
}

#[derive(Debug, Clone, Copy)]
pub struct WindowProbability {
    pub value: f64,
    /// Set when the separation condition λt(Δn)² ≫ R² fails against the
    /// nearest other component.
    pub overlap_warning: bool,
}

/// Probability mass of B(t) inside the window 2λt·n_target ± R√(λt);
/// approaches the Born weight |α_{n_target}|² as λt → ∞.
pub fn born_window_probability(
    init: &H0InitialState,
    lambda: f64,
    t: f64,
    n_target: usize,
    sep: SeparationParams,
) -> WindowProbability {
    let mixture = GaussianMixture::h0(init, lambda, t);
    let center = 2.0 * lambda * t * n_target as f64;
    let half = sep.half_width(lambda, t);
    let value = mixture.cdf(center + half) - mixture.cdf(center - half);
    let min_dn2 = init
        .occupations()
        .iter()
        .filter(|&&n| n != n_target)
        .map(|&n| {
            let d = n as f64 - n_target as f64;
            d * d
        })
        .fold(f64::INFINITY, f64::min);
    let overlap_warning = if min_dn2.is_finite() {
        lambda * t * min_dn2 < 4.0 * sep.r() * sep.r()
    } else {
        false
    };
    WindowProbability {
        value,
        overlap_warning,
    }
}

/// Two-time mixture density of (B(t₁), B(t)) with t₂ = t - t₁; integrating
/// out B(t₁) recovers the one-time density at t.
pub fn joint_pdf_b(
    init: &H0InitialState,
    lambda: f64,
    t1: f64,
    t: f64,
    b1: f64,
    b: f64,
) -> Result<f64> {
    if !(t1 > 0.0 && t > t1) {
        return Err(Error::Domain("need 0 < t1 < t".into()));
    }
    let t2 = t - t1;
    let norm = 2.0 * std::f64::consts::PI * lambda * (t2 * t1).sqrt();
    let mut sum = 0.0;
    for &(n, a) in &init.components {
        let nf = n as f64;
        let d2 = b - b1 - 2.0 * lambda * t2 * nf;
        let d1 = b1 - 2.0 * lambda * t1 * nf;
        sum += a.norm_sqr()
            * (-d2 * d2 / (2.0 * lambda * t2) - d1 * d1 / (2.0 * lambda * t1)).exp();
    }
    Ok(sum / norm)
}

/// Both sides of the peak-density bound: the joint density with both records
/// at their component peaks, and the closed-form bound obtained from the
/// extremal interval choices.
pub fn hop_peak_density(
    init: &H0InitialState,
    lambda: f64,
    t1: f64,
    t2: f64,
    n1: usize,
    n2: usize,
) -> Result<(f64, f64)> {
    let (w1, w2) = two_component_weights(init, n1, n2)?;
    let t = t1 + t2;
    let dn = n2 as f64 - n1 as f64;
    let dn2 = dn * dn;
    let norm = 2.0 * std::f64::consts::PI * lambda * (t2 * t1).sqrt();
    let value = (w1 * (-2.0 * lambda * t * t / t2 * dn2).exp()
        + w2 * (-2.0 * lambda * t * t1 / t2 * dn2).exp())
        / norm;
    let bound = (w1 * (-8.0 * lambda * t1 * dn2).exp() + w2 * (-2.0 * lambda * t1 * dn2).exp())
        / norm;
    Ok((value, bound))
}

fn two_component_weights(init: &H0InitialState, n1: usize, n2: usize) -> Result<(f64, f64)> {
    if n1 == n2 {
        return Err(Error::Domain(
            "hop requires two distinct eigenvalues".into(),
        ));
    }
    if init.components.len() != 2 {
        return Err(Error::Domain(
            "hop analysis expects a two-component state".into(),
        ));
    }
    let ns = init.occupations();
    if !(ns.contains(&n1) && ns.contains(&n2)) {
        return Err(Error::Domain(
            "hop eigenvalues must match the state support".into(),
        ));
    }
    let ws = init.weights();
    let w1 = ws[ns.iter().position(|&n| n == n1).unwrap()];
    let w2 = ws[ns.iter().position(|&n| n == n2).unwrap()];
    Ok((w1, w2))
}

#[derive(Debug, Clone, Copy)]
pub struct HopProbability {
    /// Closed-form sinh approximation.
    pub sinh_approx: f64,
    /// Direct 2-D quadrature of the two-term joint density over the windows.
    pub quadrature: f64,
    pub quadrature_error: f64,
    /// λ t₁ (Δn)² ≫ R² held.
    pub well_separated: bool,
    /// t₂ ≫ t₁ held.
    pub long_interval: bool,
}

/// Probability that the record sits in the n₁ window at t₁ and in the n₂
/// window at t = t₁ + t₂. Returns both the closed-form sinh expression and
/// a direct 2-D quadrature of the two-term density for cross-validation;
/// the sinh form neglects the quadratic window terms and can overshoot
/// badly when R² is comparable to the separation margin, which is why both
/// branches are reported.
pub fn hop_probability(
    init: &H0InitialState,
    lambda: f64,
    t1: f64,
    t2: f64,
    n1: usize,
    n2: usize,
    sep: SeparationParams,
) -> Result<HopProbability> {
    let (w1, w2) = two_component_weights(init, n1, n2)?;
    let dn = n2 as f64 - n1 as f64;
    let dn2 = dn * dn;
    let r = sep.r();

    // sinh[2 Δn R √(λ t_k)] e^{-2 λ t_k Δn²} / (√(π λ t_k) Δn), k = 1, 2,
    // evaluated via exponentials so huge arguments cancel stably.
    let mut sinh_approx = 0.0;
    for (tk, wk) in [(t1, w1), (t2, w2)] {
        let x = 2.0 * dn.abs() * r * (lambda * tk).sqrt();
        let y = 2.0 * lambda * tk * dn2;
        let sinh_e = 0.5 * ((x - y).exp() - (-x - y).exp());
        sinh_approx += wk * sinh_e / ((std::f64::consts::PI * lambda * tk).sqrt() * dn.abs());
    }

    // 2-D quadrature of the two-term density over x = B(t1) - 2λt1 n1 in
    // ±R√(λt1) and y = B(t) - 2λt n2 in ±R√(λt2).
    let t = t1 + t2;
    let norm = 2.0 * std::f64::consts::PI * lambda * (t2 * t1).sqrt();
    let integrand = move |x: f64, y: f64| {
        let e1 = {
            let a = y - x + 2.0 * lambda * t * dn;
            let b = x;
            w1 * (-a * a / (2.0 * lambda * t2) - b * b / (2.0 * lambda * t1)).exp()
        };
        let e2 = {
            let a = y - x + 2.0 * lambda * t1 * dn;
            let b = x - 2.0 * lambda * t1 * dn;
            w2 * (-a * a / (2.0 * lambda * t2) - b * b / (2.0 * lambda * t1)).exp()
        };
        (e1 + e2) / norm
    };
    let hx = r * (lambda * t1).sqrt();
    let hy = r * (lambda * t2).sqrt();
    let q = quad::integrate_2d(integrand, (-hx, hx), (-hy, hy), QUAD_TOL);

    Ok(HopProbability {
        sinh_approx,
        quadrature: q.value,
        quadrature_error: q.abs_error,
        well_separated: lambda * t1 * dn2 >= 4.0 * r * r,
        long_interval: t2 >= 10.0 * t1,
    })
}

/// Ensemble spread of the hamiltonian-free model at time t.
#[derive(Debug, Clone, Copy)]
pub struct SpreadH0 {
    /// Ensemble-averaged per-record variance (second moment minus ratio term).
    pub sigma2_bar: f64,
    /// Exact second moment Σ|αₙ|²n².
    pub mean_n2_bar: f64,
    /// The ratio term: ensemble average of ⟨N⟩²/⟨1⟩, by quadrature.
    pub ratio_term: f64,
    /// First moment Σ|αₙ|²n.
    pub mean_n_bar: f64,
}

impl SpreadH0 {
    /// Second moment ≥ ratio term ≥ squared first moment, within `tol`.
    pub fn inequality_chain_ok(&self, tol: f64) -> bool {
        self.mean_n2_bar + tol >= self.ratio_term
            && self.ratio_term + tol >= self.mean_n_bar * self.mean_n_bar
    }
}

/// σ̄² = ⟨N²⟩-bar − overline[⟨N⟩²/⟨1⟩] for the hamiltonian-free model; the
/// ratio term is a 1-D quadrature over the windowed record range.
pub fn spread_h0(init: &H0InitialState, lambda: f64, t: f64) -> SpreadH0 {
    assert!(lambda > 0.0 && t > 0.0);
    let weights = init.weights();
    let ns: Vec<f64> = init.occupations().iter().map(|&n| n as f64).collect();
    let mean_n_bar: f64 = weights.iter().zip(&ns).map(|(w, n)| w * n).sum();
    let mean_n2_bar: f64 = weights.iter().zip(&ns).map(|(w, n)| w * n * n).sum();

    let mixture = GaussianMixture::h0(init, lambda, t);
    let windows = mixture.windows(WINDOW_SIGMAS);
    let two_lt = 2.0 * lambda * t;
    let norm = (std::f64::consts::PI * two_lt).sqrt();
    let integrand = |b: f64| {
        // Shift by the dominant exponent so lone-component regions at the
        // window edges stay in range.
        let mut e_max = f64::NEG_INFINITY;
        for (&w, &n) in weights.iter().zip(&ns) {
            if w > 0.0 {
                let d = b - two_lt * n;
                e_max = e_max.max(-d * d / two_lt);
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&w, &n) in weights.iter().zip(&ns) {
            let d = b - two_lt * n;
            let e = (-d * d / two_lt - e_max).exp();
            num += w * n * e;
            den += w * e;
        }
        e_max.exp() * num * num / den / norm
    };
    let ratio_term = quad::integrate_segments(integrand, &windows, QUAD_TOL).value;
    SpreadH0 {
        sigma2_bar: mean_n2_bar - ratio_term,
        mean_n2_bar,
        ratio_term,
        mean_n_bar,
    }
}

/// Classify a record value into the component window it falls in; `None`
/// when it lies in no window (the paper's windows do not cover the line).
/// Overlapping windows resolve to the nearest drift center.
pub fn classify_b(
    b: f64,
    lambda: f64,
    t: f64,
    occupations: &[usize],
    sep: SeparationParams,
) -> Option<usize> {
    let half = sep.half_width(lambda, t);
    let mut best: Option<(usize, f64)> = None;
    for (idx, &n) in occupations.iter().enumerate() {
        let center = 2.0 * lambda * t * n as f64;
        let dist = (b - center).abs();
        if dist <= half {
            match best {
                Some((_, d)) if d <= dist => {}
                _ => best = Some((idx, dist)),
            }
        }
    }
    best.map(|(idx, _)| idx)
}

/// CSV curve `B,density` of the record distribution on a uniform grid.
pub fn write_pdf_csv<W: Write>(
    mut w: W,
    init: &H0InitialState,
    lambda: f64,
    t: f64,
    b_min: f64,
    b_max: f64,
    points: usize,
) -> std::io::Result<()> {
    writeln!(w, "B,density")?;
    let mixture = GaussianMixture::h0(init, lambda, t);
    for i in 0..points {
        let b = b_min + (b_max - b_min) * i as f64 / (points - 1).max(1) as f64;
        writeln!(w, "{:.16e},{:.16e}", b, mixture.pdf(b))?;
    }
    Ok(())
}
