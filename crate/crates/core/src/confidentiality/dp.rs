use serde::{Deserialize, Serialize};

use super::DpError;

/// Inputs of the shuffle-amplification bound. `n` is the number of
/// shuffled outputs in one round (not the LWE dimension).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub eps0: f64,
    pub delta0: f64,
    pub n: u64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpBound {
    pub eps: f64,
    pub delta_total: f64,
}

/// Largest `ε₀` the bound applies to: `ln(n / (16 ln(2/δ)))`.
pub fn dp_condition_bound(n: u64, delta: f64) -> f64 {
    (n as f64 / (16.0 * (2.0 / delta).ln())).ln()
}

/// Amplified central `(ε, δ_total)` for `n` shuffled `(ε₀, δ₀)`-LDP outputs:
///
/// `ε = ln(1 + (e^ε₀−1)/(e^ε₀+1) · (8√(e^ε₀ ln(4/δ))/√n + 8e^ε₀/n))`,
/// `δ_total = δ + (e^ε+1)(e^{−ε₀}/2 + 1)·n·δ₀`.
pub fn dp_amplify(p: &DpParams) -> Result<DpBound, DpError> {
    if !(p.eps0.is_finite() && p.eps0 >= 0.0) {
        return Err(DpError::Invalid(format!("eps0 = {} must be finite and non-negative", p.eps0)));
    }
    if !(p.delta > 0.0 && p.delta <= 1.0) {
        return Err(DpError::Invalid(format!("delta = {} must lie in (0, 1]", p.delta)));
    }
    if !(0.0..=1.0).contains(&p.delta0) {
        return Err(DpError::Invalid(format!("delta0 = {} must lie in [0, 1]", p.delta0)));
    }
    if p.n == 0 {
        return Err(DpError::Invalid("n must be positive".into()));
    }
    let max = dp_condition_bound(p.n, p.delta);
    if !(p.eps0 <= max) {
        return Err(DpError::Inapplicable { eps0: p.eps0, max });
    }
    let n = p.n as f64;
    let e0 = p.eps0.exp();
    // tanh(ε₀/2) = (e^ε₀−1)/(e^ε₀+1), without cancellation near 0
    let ratio = (p.eps0 / 2.0).tanh();
    let inner = 8.0 * (e0 * (4.0 / p.delta).ln()).sqrt() / n.sqrt() + 8.0 * e0 / n;
    let eps = (ratio * inner).ln_1p();
    let delta_total = p.delta + (eps.exp() + 1.0) * ((-p.eps0).exp() / 2.0 + 1.0) * n * p.delta0;
    Ok(DpBound { eps, delta_total })
}

/// Empirical local-DP reading of measured packing noise, treating it as a
/// Gaussian mechanism with the stated sensitivity. Not a proof: the noise
/// distribution is only fitted, and the sensitivity is a caller's claim.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDpEstimate {
    pub sigma: f64,
    pub sensitivity: f64,
    pub delta0: f64,
    pub eps0: f64,
}

/// Fits `σ` to the samples and applies the classical Gaussian-mechanism
/// calibration `ε₀ = s·√(2 ln(1.25/δ₀)) / σ`.
pub fn estimate_local_dp(samples: &[f64], sensitivity: f64, delta0: f64) -> Result<LocalDpEstimate, DpError> {
    if samples.len() < 2 {
        return Err(DpError::Invalid("need at least two noise samples".into()));
    }
    if !(sensitivity > 0.0) || !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(DpError::Invalid("sensitivity must be positive and delta0 in (0, 1)".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Err(DpError::Invalid("noise has zero spread; no finite eps0".into()));
    }
    let eps0 = sensitivity * (2.0 * (1.25 / delta0).ln()).sqrt() / sigma;
    Ok(LocalDpEstimate { sigma, sensitivity, delta0, eps0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(eps0: f64, delta0: f64, n: u64, delta: f64) -> DpParams {
        DpParams { eps0, delta0, n, delta }
    }

    // Reference values below were evaluated once at 40 significant digits
    // with an arbitrary-precision library, independently of this code.
    #[test]
    fn frozen_regression_values() {
        let b = dp_amplify(&p(1.0, 0.0, 100_000, 1e-6)).unwrap();
        assert!((b.eps - 0.072554924887004856277).abs() < 1e-13, "{}", b.eps);
        assert_eq!(b.delta_total, 1e-6);
        assert!((dp_condition_bound(100_000, 1e-6) - 6.06559118607302).abs() < 1e-12);
        let b = dp_amplify(&p(1.0, 1e-12, 100_000, 1e-6)).unwrap();
        assert!((b.delta_total - 1.2456973110298787865e-6).abs() < 1e-18);
        let b = dp_amplify(&p(0.5, 1e-14, 1_000_000, 1e-8)).unwrap();
        assert!((b.eps - 0.011137790899730170685).abs() < 1e-14);
        assert!((b.delta_total - 3.6211272926734689553e-8).abs() < 1e-20);
    }

    #[test]
    fn zero_eps0_gives_zero() {
        let b = dp_amplify(&p(0.0, 0.0, 1000, 1e-6)).unwrap();
        assert_eq!(b.eps, 0.0);
    }

    #[test]
    fn monotone_in_n() {
        for eps0 in [0.1, 0.5, 1.0, 2.0] {
            let mut prev = f64::INFINITY;
            for k in 0..=30 {
                let n = (1e3 * 10f64.powf(k as f64 / 10.0)).round() as u64;
                if eps0 > dp_condition_bound(n, 1e-6) {
                    continue;
                }
                let e = dp_amplify(&p(eps0, 0.0, n, 1e-6)).unwrap().eps;
                assert!(e <= prev, "eps0 {eps0}, n {n}");
                prev = e;
            }
        }
    }

    #[test]
    fn amplifies_in_regime() {
        for eps0 in [0.05, 0.3, 1.0, 2.5] {
            for delta in [1e-4, 1e-6, 1e-9] {
                for n in [1_000u64, 10_000, 100_000, 1_000_000, 10_000_000] {
                    if eps0 > dp_condition_bound(n, delta) {
                        continue;
                    }
                    let e = dp_amplify(&p(eps0, 0.0, n, delta)).unwrap().eps;
                    if n as f64 > 16.0 * eps0.exp() * (4.0 / delta).ln() {
                        assert!(e < eps0, "eps0 {eps0} delta {delta} n {n}: {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn condition_violation_is_an_error() {
        match dp_amplify(&p(8.0, 0.0, 100_000, 1e-6)) {
            Err(DpError::Inapplicable { eps0, max }) => {
                assert_eq!(eps0, 8.0);
                assert!(max < 8.0);
            }
            other => panic!("{other:?}"),
        }
        // tiny n: ln of a number below one gives a negative bound
        assert!(matches!(dp_amplify(&p(0.0, 0.0, 10, 1e-6)), Err(DpError::Inapplicable { .. })));
        assert!(matches!(dp_amplify(&p(-1.0, 0.0, 10, 1e-6)), Err(DpError::Invalid(_))));
        assert!(matches!(dp_amplify(&p(1.0, 0.0, 10, 0.0)), Err(DpError::Invalid(_))));
    }

    #[test]
    fn local_estimate() {
        let s: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = estimate_local_dp(&s, 0.5, 1e-5).unwrap();
        assert!((e.sigma - 1.0).abs() < 1e-3);
        assert!((e.eps0 - 0.5 * (2.0 * (1.25e5f64).ln()).sqrt() / e.sigma).abs() < 1e-12);
        assert!(estimate_local_dp(&[0.0, 0.0], 1.0, 1e-5).is_err());
    }
}
