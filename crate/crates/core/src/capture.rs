//! Frame-capture probabilities over Rayleigh fading with power-controlled
//! stations: the conditional capture probability given i interferers and
//! the aggregate per-slot capture probability over N contending stations.

use crate::config::db_to_linear;

/// Capture threshold and processing gain, converted once from dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureParams {
    /// Capture ratio z0 as a linear power ratio. `inf` disables capture.
    pub z0_linear: f64,
    /// Inverse processing gain g(S_f) = 2/(3*S_f).
    pub g_sf: f64,
}

impl CaptureParams {
    pub fn new(z0_db: f64, spreading_factor: u32) -> CaptureParams {
        CaptureParams {
            z0_linear: db_to_linear(z0_db),
            g_sf: processing_gain_inverse(spreading_factor),
        }
    }
}

/// Inverse processing gain of DSSS with an S_f-chip spreading sequence.
pub fn processing_gain_inverse(spreading_factor: u32) -> f64 {
    assert!(spreading_factor >= 1);
    2.0 / (3.0 * spreading_factor as f64)
}

/// Probability that a frame is captured given i interfering frames:
/// 1/(1 + z0*g(S_f))^i.
pub fn capture_given_i(cp: CaptureParams, i: u32) -> f64 {
    if cp.z0_linear.is_infinite() {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    (1.0 + cp.z0_linear * cp.g_sf).powi(-(i as i32))
}

/// Aggregate per-slot capture probability over n stations each
/// transmitting with probability tau:
///
///   P_cap = sum_{i=1}^{n-1} C(n, i+1) tau^(i+1) (1-tau)^(n-i-1) / (1 + z0 g)^i
///
/// Terms are formed in log space and accumulated largest-first, which keeps
/// the sum well-behaved up to n ~ 1024.
pub fn p_cap(cp: CaptureParams, n: u32, tau: f64) -> f64 {
    assert!(n >= 1);
    assert!((0.0..=1.0).contains(&tau));
    if n == 1 || tau == 0.0 || cp.z0_linear.is_infinite() {
        return 0.0;
    }
    let c1 = 1.0 / (1.0 + cp.z0_linear * cp.g_sf);
    if tau == 1.0 {
        // only the all-transmit term survives: C(n,n) * 1 * c1^(n-1)
        return c1.powi(n as i32 - 1);
    }

    let lf = ln_factorials(n as usize);
    let ln_tau = tau.ln();
    let ln_1m = (1.0 - tau).ln();
    let ln_c1 = c1.ln();
    let nf = n as usize;

    let mut terms: Vec<f64> = Vec::with_capacity(nf - 1);
    for i in 1..nf {
        // k = i+1 transmitters out of n, i of them interferers
        let k = i + 1;
        let ln_binom = lf[nf] - lf[k] - lf[nf - k];
        let ln_term = ln_binom
            + k as f64 * ln_tau
            + (nf - k) as f64 * ln_1m
            + i as f64 * ln_c1;
        terms.push(ln_term.exp());
    }
    terms.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sum: f64 = terms.iter().sum();
    sum.min(1.0)
}

/// ln(k!) for k in 0..=n.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for k in 2..=n {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

/// Probability that two or more of n stations transmit in a slot; the
/// capture mass can never exceed it.
pub fn multi_transmission_probability(n: u32, tau: f64) -> f64 {
    let n_ = n as i32;
    1.0 - (1.0 - tau).powi(n_) - n as f64 * tau * (1.0 - tau).powi(n_ - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn processing_gain_values() {
        assert_abs_diff_eq!(processing_gain_inverse(11), 2.0 / 33.0, epsilon = 1e-15);
        assert_abs_diff_eq!(processing_gain_inverse(1), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(processing_gain_inverse(3), 2.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn conditional_capture_values() {
        let cp = CaptureParams::new(6.0, 11);
        assert_eq!(capture_given_i(cp, 0), 1.0);
        // hand arithmetic: 1/(1 + 10^0.6 * 2/33), frozen from an
        // arbitrary-precision evaluation
        assert_abs_diff_eq!(capture_given_i(cp, 1), 0.80562190481179288, epsilon = 1e-12);
        assert!(capture_given_i(cp, 50) < capture_given_i(cp, 10));
        assert!(capture_given_i(cp, 500) < 1e-40);
    }

    #[test]
    fn p_cap_single_term_oracle() {
        // N=2, tau=0.3: the sum has one term, C(2,2)*0.09*capture_given_1
        let cp = CaptureParams::new(6.0, 11);
        let expected = 0.09 * capture_given_i(cp, 1);
        let got = p_cap(cp, 2, 0.3);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.072505971433061359, epsilon = 1e-12);
    }

    #[test]
    fn p_cap_trivial_cases() {
        let cp = CaptureParams::new(6.0, 11);
        assert_eq!(p_cap(cp, 1, 0.5), 0.0);
        assert_eq!(p_cap(cp, 10, 0.0), 0.0);
        let inf = CaptureParams::new(f64::INFINITY, 11);
        assert_eq!(p_cap(inf, 10, 0.5), 0.0);
        // tau=1: all n transmit, capture needs to beat n-1 interferers
        let c1 = capture_given_i(cp, 1);
        assert_abs_diff_eq!(p_cap(cp, 4, 1.0), c1.powi(3), epsilon = 1e-15);
    }

    #[test]
    fn p_cap_brute_force_small_n() {
        // direct binomial evaluation without log-space, n small enough
        // for exact arithmetic
        let cp = CaptureParams::new(6.0, 11);
        let c1 = capture_given_i(cp, 1);
        for n in [2u32, 3, 5, 8] {
            for tau in [0.05f64, 0.3, 0.7, 0.95] {
                let mut expected = 0.0;
                for i in 1..n {
                    let k = i + 1;
                    let binom = (0..k).fold(1.0, |acc, j| {
                        acc * (n - j) as f64 / (j + 1) as f64
                    });
                    expected += binom
                        * tau.powi(k as i32)
                        * (1.0 - tau).powi((n - k) as i32)
                        * c1.powi(i as i32);
                }
                let got = p_cap(cp, n, tau);
                assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn binomial_sum_identity() {
        // sum_{i=0}^{n-1} C(n,i+1) tau^(i+1) (1-tau)^(n-i-1) + (1-tau)^n = 1
        // i.e. p_cap with unit capture probability plus the single-transmitter
        // and idle masses recovers 1
        for n in [2u32, 7, 64, 512, 1024] {
            for tau in [0.01, 0.2, 0.5, 0.9] {
                let no_capture_threshold = CaptureParams {
                    z0_linear: 0.0,
                    g_sf: 2.0 / 33.0,
                }; // capture_given_i == 1 for all i
                let sum = p_cap(no_capture_threshold, n, tau)
                    + n as f64 * tau * (1.0 - tau).powi(n as i32 - 1)
                    + (1.0 - tau).powi(n as i32);
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn capture_negligible_at_huge_threshold() {
        let cp = CaptureParams::new(300.0, 11);
        for n in [2u32, 10, 100] {
            for tau in [0.1, 0.5, 1.0] {
                assert!(p_cap(cp, n, tau) <= 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn p_cap_bounded_by_multi_transmission_mass(
            n in 2u32..200,
            tau in 0.0f64..1.0,
            z0_db in -10.0f64..60.0,
        ) {
            let cp = CaptureParams::new(z0_db, 11);
            let p = p_cap(cp, n, tau);
            let bound = multi_transmission_probability(n, tau);
            prop_assert!(p >= 0.0);
            prop_assert!(p <= bound + 1e-12, "p_cap={p} bound={bound}");
        }

        #[test]
        fn p_cap_decreasing_in_threshold(
            n in 2u32..50,
            tau in 0.01f64..0.99,
        ) {
            let lo = p_cap(CaptureParams::new(30.0, 11), n, tau);
            let hi = p_cap(CaptureParams::new(6.0, 11), n, tau);
            prop_assert!(lo <= hi + 1e-15);
        }
    }
}
