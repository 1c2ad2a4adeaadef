//! Marcum-Q functions.
//!
//! `Q_m(a, b)` is the probability that a non-central chi-square variate with
//! `2m` degrees of freedom and non-centrality `a²` exceeds `b²`. Both series
//! used here have non-negative terms only:
//!
//! * the CDF side, `1 - Q_m(a, b) = Σ_n Pois(m + n; x) · PoisCdf(n; λ)`, which is
//!   the double series over the lower incomplete gamma expansion regrouped by
//!   total power of `x`;
//! * the tail side, `Q_m(a, b) = Σ_i Pois(i; λ) · PoisCdf(m + i - 1; x)`, which
//!   uses the finite sum for the upper incomplete gamma of integer order.
//!
//! with `λ = a²/2` and `x = b²/2`. The CDF side is used when `x` lies below
//! the mean `m + λ`, so whichever of `Q` or `1 - Q` is small is computed with
//! full relative precision.
//!
//! All Poisson weights are accumulated in the log domain, so large
//! non-centralities (LOS fractions close to one) underflow gracefully to zero
//! instead of producing NaNs.

use crate::error::{Error, Result};

/// Largest order whose factorial is finite in `f64`.
pub const MAX_DIRECT_FACTORIAL: u32 = 170;

/// Number of consecutive negligible terms required before a series stops.
const QUIET_TERMS: usize = 3;

/// Truncation control for the Marcum-Q series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    rel_tolerance: f64,
    max_terms: usize,
}

impl SeriesControl {
    pub fn new(rel_tolerance: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tolerance > 0.0 && rel_tolerance.is_finite()) {
            return Err(Error::Domain(format!("rel_tolerance must be positive and finite, got {rel_tolerance}")));
        }
        if max_terms == 0 {
            return Err(Error::Domain("max_terms must be at least 1".into()));
        }
        Ok(SeriesControl { rel_tolerance, max_terms })
    }

    pub fn rel_tolerance(&self) -> f64 {
        self.rel_tolerance
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl { rel_tolerance: 1e-12, max_terms: 10_000 }
    }
}

/// `ln(n!)`, exact summation of logs for small `n`.
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

fn check_arg(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite, got {v}")));
    }
    if v < 0.0 {
        return Err(Error::Domain(format!("{name} must be non-negative, got {v}")));
    }
    Ok(())
}

fn check_order(m: u32) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain(
            "Marcum-Q order must be at least 1 (zero attempts are handled by the caller)".into(),
        ));
    }
    Ok(())
}

/// Tracks the stopping rule: `QUIET_TERMS` consecutive terms below
/// `rel_tolerance` times the running sum, counted only past the peak of the
/// term sequence.
struct Stopper {
    tol: f64,
    quiet: usize,
}

impl Stopper {
    fn new(ctrl: &SeriesControl) -> Self {
        Stopper { tol: ctrl.rel_tolerance, quiet: 0 }
    }

    fn done(&mut self, term: f64, sum: f64, past_peak: bool) -> bool {
        if past_peak && term <= self.tol * sum {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.quiet >= QUIET_TERMS
    }
}

/// `1 - Q_m` as `Σ_n Pois(m + n; x) · PoisCdf(n; λ)`.
fn cdf_series(m: u32, lambda: f64, x: f64, ctrl: &SeriesControl) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let ln_x = x.ln();
    let ln_lambda = lambda.ln();
    // ln Pois(m; x)
    let mut ln_pmf_x = -x + f64::from(m) * ln_x - ln_factorial(m);
    let m = f64::from(m);
    // running Poisson CDF in λ
    let mut ln_pmf_l = -lambda;
    let mut cdf_l = if lambda == 0.0 { 1.0 } else { ln_pmf_l.exp() };

    let peak = lambda.max(x);
    let mut stop = Stopper::new(ctrl);
    let mut sum = 0.0;
    for n in 0..ctrl.max_terms {
        let nf = n as f64;
        if n > 0 {
            ln_pmf_x += ln_x - (m + nf).ln();
            if lambda > 0.0 {
                ln_pmf_l += ln_lambda - nf.ln();
                cdf_l = (cdf_l + ln_pmf_l.exp()).min(1.0);
            }
        }
        let term = ln_pmf_x.exp() * cdf_l;
        sum += term;
        if stop.done(term, sum, nf >= peak) {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence { partial: sum, terms: ctrl.max_terms })
}

/// `Q_m` as `Σ_i Pois(i; λ) · PoisCdf(m + i - 1; x)`.
fn tail_series(m: u32, lambda: f64, x: f64, ctrl: &SeriesControl) -> Result<f64> {
    let ln_x = x.ln();
    let ln_lambda = lambda.ln();

    // PoisCdf(m - 1; x), then one more pmf per step.
    let mut ln_pmf_x = -x;
    let mut cdf_x = ln_pmf_x.exp();
    for k in 1..m {
        ln_pmf_x += ln_x - f64::from(k).ln();
        cdf_x += ln_pmf_x.exp();
    }
    if lambda == 0.0 {
        return Ok(cdf_x.min(1.0));
    }

    let mut ln_pmf_l = -lambda;
    let mut stop = Stopper::new(ctrl);
    let mut sum = 0.0;
    for i in 0..ctrl.max_terms {
        let fi = i as f64;
        if i > 0 {
            ln_pmf_l += ln_lambda - fi.ln();
            ln_pmf_x += ln_x - (f64::from(m) + fi - 1.0).ln();
            cdf_x = (cdf_x + ln_pmf_x.exp()).min(1.0);
        }
        let term = ln_pmf_l.exp() * cdf_x;
        sum += term;
        if stop.done(term, sum, fi >= lambda) {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence { partial: sum, terms: ctrl.max_terms })
}

/// Returns `(Q_m(a, b), 1 - Q_m(a, b))`, each accurate in relative terms on
/// the side that is evaluated directly.
fn marcum_pair(m: u32, a: f64, b: f64, ctrl: &SeriesControl) -> Result<(f64, f64)> {
    check_order(m)?;
    check_arg("a", a)?;
    check_arg("b", b)?;
    let lambda = 0.5 * a * a;
    let x = 0.5 * b * b;
    if x < f64::from(m) + lambda {
        let cdf = cdf_series(m, lambda, x, ctrl)?.clamp(0.0, 1.0);
        Ok((1.0 - cdf, cdf))
    } else {
        let q = tail_series(m, lambda, x, ctrl)?.clamp(0.0, 1.0);
        Ok((q, 1.0 - q))
    }
}

/// First-order Marcum-Q function `Q_1(a, b)`.
pub fn marcum_q1(a: f64, b: f64, ctrl: &SeriesControl) -> Result<f64> {
    marcum_qm(1, a, b, ctrl)
}

/// Generalised Marcum-Q function `Q_m(a, b)` of integer order `m ≥ 1`.
pub fn marcum_qm(m: u32, a: f64, b: f64, ctrl: &SeriesControl) -> Result<f64> {
    marcum_pair(m, a, b, ctrl).map(|(q, _)| q)
}

/// `1 - Q_m(a, b)`, i.e. the CDF of the non-central chi-square variate at
/// `b²`. Outage probabilities are read from here so that small values keep
/// their relative precision.
pub fn marcum_qm_complement(m: u32, a: f64, b: f64, ctrl: &SeriesControl) -> Result<f64> {
    marcum_pair(m, a, b, ctrl).map(|(_, p)| p)
}

/// High-SNR approximation `1 - (b²/2)·e^(-a²/2)` of `Q_1(a, b)`.
///
/// The value is not clamped and goes negative once `b²/2 > e^(a²/2)`;
/// callers that read it as a probability clamp it themselves.
pub fn marcum_q1_approx(a: f64, b: f64) -> Result<f64> {
    check_arg("a", a)?;
    check_arg("b", b)?;
    Ok(1.0 - 0.5 * b * b * (-0.5 * a * a).exp())
}

/// High-SNR approximation `1 - (b²/2)^m / m! · e^(-a²/2)` of `Q_m(a, b)`.
///
/// Fails for `m > 170`, where `m!` overflows; use
/// [`ln_marcum_qm_approx_complement`] there.
pub fn marcum_qm_approx(m: u32, a: f64, b: f64) -> Result<f64> {
    check_order(m)?;
    check_arg("a", a)?;
    check_arg("b", b)?;
    if m > MAX_DIRECT_FACTORIAL {
        return Err(Error::Domain(format!("order {m} overflows m!; use the log-domain approximation instead")));
    }
    let factorial: f64 = (1..=m).map(f64::from).product();
    Ok(1.0 - (0.5 * b * b).powi(m as i32) / factorial * (-0.5 * a * a).exp())
}

/// `ln((b²/2)^m / m! · e^(-a²/2))`, the logarithm of `1 - marcum_qm_approx`.
/// Valid for every order; returns `-inf` when `b = 0`.
pub fn ln_marcum_qm_approx_complement(m: u32, a: f64, b: f64) -> Result<f64> {
    check_order(m)?;
    check_arg("a", a)?;
    check_arg("b", b)?;
    Ok(f64::from(m) * (0.5 * b * b).ln() - ln_factorial(m) - 0.5 * a * a)
}
