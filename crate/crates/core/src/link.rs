//! Per-link Rician model and outage after chase-combined attempts.
//!
//! Link `k` has complex gain `h = √(c/2)(1+i) + √((1−c)/2)·g`, where `g` has
//! independent unit-variance real and imaginary parts, so `E|h|² = 1` and
//! `2|h|²/(1−c)` is non-central chi-square with two degrees of freedom and
//! non-centrality `2c/(1−c)`.
//!
//! * Slow fading: one gain per hop, reused by every attempt. After `q`
//!   combined attempts the effective SNR is `q|h|²γ`.
//! * Fast fading: a fresh gain per attempt; the effective SNR is the sum of
//!   the per-attempt SNRs, which gives a Marcum-Q function of order `q`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_factorial, marcum_qm_complement, SeriesControl};

/// Convert a power ratio in dB to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Network description: one LOS fraction per hop plus the common rate and
/// SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    los: Vec<f64>,
    rate: f64,
    snr: f64,
}

impl NetworkConfig {
    /// `snr` is a linear power ratio.
    pub fn new(los: Vec<f64>, rate: f64, snr: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if los.is_empty() {
            problems.push("at least one hop is required".to_string());
        }
        for (k, &c) in los.iter().enumerate() {
            if !(0.0..1.0).contains(&c) {
                problems.push(format!("los[{k}] = {c} must lie in [0, 1)"));
            }
        }
        if !(rate > 0.0 && rate.is_finite()) {
            problems.push(format!("rate = {rate} must be positive and finite"));
        }
        if !(snr > 0.0 && snr.is_finite()) {
            problems.push(format!("snr = {snr} must be positive and finite"));
        }
        if !problems.is_empty() {
            return Err(Error::Domain(problems.join("; ")));
        }
        Ok(NetworkConfig { los, rate, snr })
    }

    pub fn with_snr_db(los: Vec<f64>, rate: f64, snr_db: f64) -> Result<Self> {
        Self::new(los, rate, db_to_linear(snr_db))
    }

    pub fn hop_count(&self) -> usize {
        self.los.len()
    }

    pub fn los(&self) -> &[f64] {
        &self.los
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Linear SNR.
    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr.log10()
    }

    /// Same links at another SNR.
    pub fn at_snr(&self, snr: f64) -> Result<Self> {
        Self::new(self.los.clone(), self.rate, snr)
    }

    /// Minimum SNR that supports the rate, `2^R − 1`.
    pub fn snr_threshold(&self) -> f64 {
        self.rate.exp2() - 1.0
    }

    /// Derived constants of hop `k` (zero-based).
    pub fn link(&self, k: usize) -> Result<LinkDerived> {
        derive(self, k)
    }

    pub fn links(&self) -> Vec<LinkDerived> {
        (0..self.hop_count()).map(|k| derive(self, k).expect("validated at construction")).collect()
    }
}

/// Constants shared by all outage expressions of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkDerived {
    /// LOS fraction `c`.
    pub los: f64,
    /// `√(2c/(1−c))`, the non-centrality argument of the Marcum-Q function.
    pub noncentrality: f64,
    /// `√(2(2^R−1)/(γ(1−c)))`, the threshold argument.
    pub threshold: f64,
    /// `(2^R−1)/γ`.
    pub phi: f64,
    /// Slow-fading coefficient `φ/(1−c)·exp(−c/(1−c))`.
    pub sf_coefficient: f64,
    /// Fast-fading coefficient `φ·exp(−a²/2)/(1−c)`. Algebraically equal to
    /// `sf_coefficient`; computed along its own route.
    pub ff_coefficient: f64,
}

/// Derive the constants for hop `k` (zero-based) of `cfg`.
pub fn derive(cfg: &NetworkConfig, k: usize) -> Result<LinkDerived> {
    let &c = cfg
        .los
        .get(k)
        .ok_or_else(|| Error::Domain(format!("hop index {k} out of range for {} hops", cfg.hop_count())))?;
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Domain(format!("LOS fraction {c} must lie in [0, 1)")));
    }
    let nlos = 1.0 - c;
    let phi = cfg.snr_threshold() / cfg.snr;
    let noncentrality = (2.0 * c / nlos).sqrt();
    let threshold = (2.0 * cfg.snr_threshold() / (cfg.snr * nlos)).sqrt();
    let sf_coefficient = phi / nlos * (-c / nlos).exp();
    let ff_coefficient = phi * (-0.5 * noncentrality * noncentrality).exp() / nlos;
    Ok(LinkDerived { los: c, noncentrality, threshold, phi, sf_coefficient, ff_coefficient })
}

/// Fading regime across the attempts of one hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingMode {
    /// One realisation per hop, constant over its attempts.
    Slow,
    /// Independent realisation per attempt.
    Fast,
}

impl FadingMode {
    pub fn name(self) -> &'static str {
        match self {
            FadingMode::Slow => "slow",
            FadingMode::Fast => "fast",
        }
    }
}

/// Exact Marcum-Q evaluation or the high-SNR approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    Exact,
    Approx,
}

impl Exactness {
    pub fn name(self) -> &'static str {
        match self {
            Exactness::Exact => "exact",
            Exactness::Approx => "approx",
        }
    }
}

/// Draw `|h|²` for a link with LOS fraction `los`.
pub fn sample_channel_gain<R: Rng + ?Sized>(los: f64, rng: &mut R) -> Result<f64> {
    if !(0.0..1.0).contains(&los) {
        return Err(Error::Domain(format!("LOS fraction {los} must lie in [0, 1)")));
    }
    Ok(ChannelSampler::new(los).sample(rng))
}

/// Precomputed scale factors for repeated gain draws on one link.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChannelSampler {
    mean: f64,
    spread: f64,
}

impl ChannelSampler {
    pub(crate) fn new(los: f64) -> Self {
        ChannelSampler { mean: (los / 2.0).sqrt(), spread: ((1.0 - los) / 2.0).sqrt() }
    }

    #[inline]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let re = self.mean + self.spread * re;
        let im = self.mean + self.spread * im;
        re * re + im * im
    }
}

fn check_attempts(q: u32) -> Result<()> {
    if q == 0 {
        return Err(Error::Domain("at least one attempt is required for a link outage".into()));
    }
    Ok(())
}

impl LinkDerived {
    /// Slow-fading outage after `q` combined attempts.
    pub fn outage_sf(&self, q: u32, exactness: Exactness) -> Result<f64> {
        check_attempts(q)?;
        match exactness {
            Exactness::Exact => marcum_qm_complement(
                1,
                self.noncentrality,
                self.threshold / f64::from(q).sqrt(),
                &SeriesControl::default(),
            ),
            Exactness::Approx => Ok(self.outage_sf_approx_raw(q).clamp(0.0, 1.0)),
        }
    }

    /// `φ/(q(1−c))·e^(−a²/2)` without clamping.
    pub fn outage_sf_approx_raw(&self, q: u32) -> f64 {
        self.sf_coefficient / f64::from(q)
    }

    /// Fast-fading outage after `q` combined attempts.
    pub fn outage_ff(&self, q: u32, exactness: Exactness) -> Result<f64> {
        check_attempts(q)?;
        match exactness {
            Exactness::Exact => marcum_qm_complement(
                q,
                f64::from(q).sqrt() * self.noncentrality,
                self.threshold,
                &SeriesControl::default(),
            ),
            Exactness::Approx => Ok(self.ln_outage_ff_approx_raw(q).exp().clamp(0.0, 1.0)),
        }
    }

    /// `ln(B^q / q!)`, the unclamped fast-fading approximation in log form.
    pub fn ln_outage_ff_approx_raw(&self, q: u32) -> f64 {
        f64::from(q) * self.ff_coefficient.ln() - ln_factorial(q)
    }

    /// Outage for the given fading mode.
    pub fn outage(&self, fading: FadingMode, q: u32, exactness: Exactness) -> Result<f64> {
        match fading {
            FadingMode::Slow => self.outage_sf(q, exactness),
            FadingMode::Fast => self.outage_ff(q, exactness),
        }
    }

    /// Type-1 ARQ: `q` independent attempts without combining.
    pub fn outage_type1(&self, q: u32) -> Result<f64> {
        check_attempts(q)?;
        let single = self.outage_sf(1, Exactness::Exact)?;
        Ok(single.powi(q as i32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::special::marcum_q1;

    fn net(los: &[f64], snr: f64) -> NetworkConfig {
        NetworkConfig::new(los.to_vec(), 1.0, snr).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn derive_rayleigh() {
        let l = net(&[0.0], 10.0).link(0).unwrap();
        assert_eq!(l.noncentrality, 0.0);
        assert!(close(l.threshold, 0.2f64.sqrt(), 1e-15));
        assert!(close(l.phi, 0.1, 1e-16));
        assert!(close(l.sf_coefficient, 0.1, 1e-16));
        assert!(close(l.ff_coefficient, 0.1, 1e-16));
    }

    #[test]
    fn derive_half_los() {
        let l = net(&[0.5], 10.0).link(0).unwrap();
        assert!(close(l.noncentrality, 2f64.sqrt(), 1e-15));
        assert!(close(l.phi, 0.1, 1e-16));
        assert!(close(l.sf_coefficient, 0.2 * (-1.0f64).exp(), 1e-16));
    }

    #[test]
    fn derive_near_singular_los() {
        let l = net(&[0.999], 10.0).link(0).unwrap();
        assert!(l.threshold.is_finite() && l.threshold > 10.0);
        assert!(l.sf_coefficient.is_finite() && l.sf_coefficient >= 0.0);
        assert!(l.outage_sf(1, Exactness::Exact).unwrap().is_finite());
        assert!(l.outage_ff(3, Exactness::Exact).unwrap().is_finite());
    }

    #[test]
    fn coefficients_agree_to_machine_precision() {
        for &c in &[0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            for &snr in &[1.0, 3.16, 10.0, 100.0, 1e4] {
                let l = net(&[c], snr).link(0).unwrap();
                let rel = (l.sf_coefficient - l.ff_coefficient).abs() / l.sf_coefficient;
                assert!(rel < 8.0 * f64::EPSILON, "c={c} snr={snr} rel={rel}");
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(NetworkConfig::new(vec![1.0], 1.0, 10.0).is_err());
        assert!(NetworkConfig::new(vec![-0.1], 1.0, 10.0).is_err());
        assert!(NetworkConfig::new(vec![], 1.0, 10.0).is_err());
        assert!(NetworkConfig::new(vec![0.2], 0.0, 10.0).is_err());
        assert!(NetworkConfig::new(vec![0.2], 1.0, -1.0).is_err());
        let err = NetworkConfig::new(vec![1.2, 0.3, 1.0], -1.0, 10.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("los[0]") && msg.contains("los[2]") && msg.contains("rate"));
        assert!(net(&[0.1], 10.0).link(1).is_err());
    }

    #[test]
    fn outage_sf_examples() {
        let l = net(&[0.0], 10.0).link(0).unwrap();
        let p1 = l.outage_sf(1, Exactness::Exact).unwrap();
        assert!(close(p1, 1.0 - (-0.1f64).exp(), 1e-15));
        assert!(close(p1, 0.095_163, 1e-6));
        let p4 = l.outage_sf(4, Exactness::Exact).unwrap();
        assert!(close(p4, 1.0 - (-0.025f64).exp(), 1e-15));
        assert!(close(p4, 0.024_690, 1e-6));
        assert!(close(l.outage_sf(1, Exactness::Approx).unwrap(), 0.1, 1e-16));
    }

    #[test]
    fn outage_ff_examples() {
        let l = net(&[0.0], 10.0).link(0).unwrap();
        let p = l.outage_ff(2, Exactness::Exact).unwrap();
        assert!(close(p, 1.0 - (-0.1f64).exp() * 1.1, 1e-15));
        assert!(close(p, 0.004_679, 1e-6));
        assert!(close(l.outage_ff(2, Exactness::Approx).unwrap(), 0.005, 1e-17));
    }

    #[test]
    fn outage_ff_matches_quadrature_and_monte_carlo() {
        // c = 0.3, γ = 31.62, q = 3. mpmath quadrature: 4.167490820952949e-6;
        // 1e8-sample Monte Carlo: 4.02e-6 ± 6.0e-7 (3σ).
        let l = net(&[0.3], 31.62).link(0).unwrap();
        let p = l.outage_ff(3, Exactness::Exact).unwrap();
        assert!((p - 4.167_490_820_952_949e-6).abs() < 1e-12 * 4.2e-6 * 1e3);
        assert!((p - 4.02e-6).abs() < 6.0e-7);
    }

    #[test]
    fn type1_examples() {
        let l = net(&[0.0], 10.0).link(0).unwrap();
        let p = l.outage_type1(2).unwrap();
        assert!(close(p, (1.0 - (-0.1f64).exp()).powi(2), 1e-16));
        assert!(close(p, 0.009_056, 1e-6));
        for &c in &[0.0, 0.4, 0.8] {
            let l = net(&[c], 5.0).link(0).unwrap();
            assert_eq!(l.outage_type1(1).unwrap(), l.outage_sf(1, Exactness::Exact).unwrap());
        }
        // c = 0.5, γ = 10: single-attempt outage from the series, cubed.
        let l = net(&[0.5], 10.0).link(0).unwrap();
        let single = 1.0 - marcum_q1(l.noncentrality, l.threshold, &SeriesControl::default()).unwrap();
        let p3 = l.outage_type1(3).unwrap();
        assert!((p3 - single.powi(3)).abs() < 1e-15);
        // mpmath quadrature of the single-attempt outage: 0.07334638735963496
        assert!((p3 - 0.000_394_581_012_819_933_8).abs() < 1e-15);
    }

    #[test]
    fn zero_attempts_are_rejected() {
        let l = net(&[0.2], 10.0).link(0).unwrap();
        assert!(l.outage_sf(0, Exactness::Exact).is_err());
        assert!(l.outage_ff(0, Exactness::Approx).is_err());
        assert!(l.outage_type1(0).is_err());
    }

    #[test]
    fn outage_strictly_decreases_in_attempts() {
        for &c in &[0.0, 0.3, 0.7] {
            for &snr in &[3.16, 10.0, 100.0] {
                let l = net(&[c], snr).link(0).unwrap();
                for ex in [Exactness::Exact, Exactness::Approx] {
                    for fading in [FadingMode::Slow, FadingMode::Fast] {
                        let mut prev = f64::INFINITY;
                        for q in 1..=20 {
                            let p = l.outage(fading, q, ex).unwrap();
                            assert!(p < prev || p == 0.0, "{fading:?} {ex:?} c={c} q={q}");
                            prev = p;
                        }
                    }
                    let mut prev = f64::INFINITY;
                    for q in 1..=20 {
                        let p = l.outage_type1(q).unwrap();
                        assert!(p < prev || p == 0.0);
                        prev = p;
                    }
                }
            }
        }
    }

    #[test]
    fn approx_tracks_exact_at_high_snr() {
        for &c in &[0.0, 0.3, 0.7] {
            for &db in &[20.0, 25.0, 30.0] {
                let l = NetworkConfig::with_snr_db(vec![c], 1.0, db).unwrap().link(0).unwrap();
                for q in 1..=4 {
                    for fading in [FadingMode::Slow, FadingMode::Fast] {
                        let e = l.outage(fading, q, Exactness::Exact).unwrap();
                        let a = l.outage(fading, q, Exactness::Approx).unwrap();
                        assert!((e - a).abs() / e <= 0.10, "{fading:?} c={c} {db}dB q={q}");
                    }
                }
            }
        }
    }

    #[test]
    fn approx_clamps_at_low_snr() {
        let l = net(&[0.0], 0.5).link(0).unwrap();
        assert!(l.outage_sf_approx_raw(1) > 1.0);
        assert_eq!(l.outage_sf(1, Exactness::Approx).unwrap(), 1.0);
    }

    #[test]
    fn gain_has_unit_mean() {
        let mut rng = stream_rng(11, 0);
        for &c in &[0.0, 0.5, 0.99] {
            let n = 1_000_000;
            let mean = (0..n).map(|_| sample_channel_gain(c, &mut rng).unwrap()).sum::<f64>() / n as f64;
            assert!((0.99..=1.01).contains(&mean), "c={c} mean={mean}");
        }
        assert!(sample_channel_gain(1.0, &mut rng).is_err());
    }

    #[test]
    fn rayleigh_gain_is_exponential() {
        let mut rng = stream_rng(5, 1);
        let n = 200_000;
        let below = (0..n).filter(|_| sample_channel_gain(0.0, &mut rng).unwrap() < 1.0).count() as f64 / n as f64;
        let expected = 1.0 - (-1.0f64).exp();
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((below - expected).abs() < 4.0 * sigma);
    }

    #[test]
    fn gain_distribution_passes_ks_against_marcum_cdf() {
        let c: f64 = 0.5;
        let a = (2.0 * c / (1.0 - c)).sqrt();
        let n = 100_000;
        let mut rng = stream_rng(99, 2);
        let mut draws: Vec<f64> = (0..n).map(|_| sample_channel_gain(c, &mut rng).unwrap()).collect();
        draws.sort_by(f64::total_cmp);
        let ctrl = SeriesControl::default();
        let mut d = 0.0f64;
        for (i, &x) in draws.iter().enumerate().step_by(37) {
            let cdf = marcum_qm_complement(1, a, (2.0 * x / (1.0 - c)).sqrt(), &ctrl).unwrap();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        // 1% critical value of the one-sample KS statistic.
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn exact_outage_within_monte_carlo_band() {
        let n = 200_000u32;
        for (stream, &c) in [0.0, 0.3, 0.7].iter().enumerate() {
            let cfg = net(&[c], 3.16);
            let l = cfg.link(0).unwrap();
            let thr = cfg.snr_threshold() / cfg.snr();
            let mut rng = stream_rng(2024, stream as u64);
            for q in 1..=3u32 {
                let mut sf_fail = 0u32;
                let mut ff_fail = 0u32;
                for _ in 0..n {
                    let g = sample_channel_gain(c, &mut rng).unwrap();
                    if f64::from(q) * g < thr {
                        sf_fail += 1;
                    }
                    let s: f64 = (0..q).map(|_| sample_channel_gain(c, &mut rng).unwrap()).sum();
                    if s < thr {
                        ff_fail += 1;
                    }
                }
                for (fading, fails) in [(FadingMode::Slow, sf_fail), (FadingMode::Fast, ff_fail)] {
                    let p = l.outage(fading, q, Exactness::Exact).unwrap();
                    let sigma = (p * (1.0 - p) / f64::from(n)).sqrt();
                    let emp = f64::from(fails) / f64::from(n);
                    assert!(
                        (emp - p).abs() <= 3.0 * sigma + 1.0 / f64::from(n),
                        "{fading:?} c={c} q={q}: {emp} vs {p}"
                    );
                }
            }
        }
    }
}
