//! Bit and frame error rates over a Rayleigh fading channel.
//!
//! The per-bit error probability for DBPSK/DQPSK comes from the standard
//! MPSK-over-Rayleigh integral (MGF form), evaluated by fixed-order
//! Gauss-Legendre quadrature. Frame error rate composes the bit error
//! rate over the PLCP header (always BPSK at the basic rate) and the
//! MAC header + payload (data modulation). Control frames (ACK/RTS/CTS)
//! are treated as error-free.

use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

use crate::config::{ChannelParams, MacParams, Modulation};

/// User-supplied bit-error-rate function of linear mean SNR, used to plug
/// in modulations without a built-in formula (CCK rates).
pub type BerFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerQuery {
    pub modulation: Modulation,
    /// Linear (not dB) mean SNR gamma-bar.
    pub snr_linear: f64,
}

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("no built-in BER formula for {0}; supply one via ber_rayleigh_with")]
    UnsupportedModulation(Modulation),
    #[error("snr_linear must be finite and >= 0, got {0}")]
    InvalidSnr(f64),
    #[error("quadrature self-check failed: 64- and 128-node results differ by {0:e}")]
    QuadratureMismatch(f64),
}

/// Average bit error rate over Rayleigh fading for the built-in
/// modulations (DBPSK, DQPSK).
pub fn ber_rayleigh(q: BerQuery) -> Result<f64, PhyError> {
    ber_rayleigh_with(q, None)
}

/// As `ber_rayleigh`, but CCK modulations dispatch to `cck_ber` when given.
pub fn ber_rayleigh_with(q: BerQuery, cck_ber: Option<&BerFn>) -> Result<f64, PhyError> {
    if !(q.snr_linear >= 0.0) || q.snr_linear.is_nan() {
        return Err(PhyError::InvalidSnr(q.snr_linear));
    }
    let m = match q.modulation {
        Modulation::Dbpsk => 2u32,
        Modulation::Dqpsk => 4u32,
        Modulation::Cck55 | Modulation::Cck11 => {
            return match cck_ber {
                Some(f) => Ok(f(q.snr_linear)),
                None => Err(PhyError::UnsupportedModulation(q.modulation)),
            }
        }
    };
    ber_mpsk_rayleigh(m, q.snr_linear)
}

/// MPSK-over-Rayleigh average BER with constellation size `m`:
///
///   2/max(log2 M, 2) * sum_{i=1}^{max(M/4,1)} (1/pi) *
///     integral_0^{pi/2} dtheta / (1 + gamma * log2(M) * sin^2((2i-1)pi/M) / sin^2 theta)
fn ber_mpsk_rayleigh(m: u32, gamma: f64) -> Result<f64, PhyError> {
    debug_assert!(m.is_power_of_two() && m >= 2);
    let bits = (m.trailing_zeros()) as f64; // log2(M)
    let prefactor = 2.0 / bits.max(2.0);
    let terms = (m / 4).max(1);

    let mut total64 = 0.0;
    let mut total128 = 0.0;
    for i in 1..=terms {
        let s = ((2 * i - 1) as f64 * PI / m as f64).sin();
        let a = gamma * bits * s * s;
        // integrand in [0,1], smooth on (0, pi/2]; at theta->0 it tends to 0
        // for a>0 and to 1 for a=0
        let f = |theta: f64| {
            let st = theta.sin();
            let st2 = st * st;
            st2 / (st2 + a)
        };
        total64 += integrate_half_pi(f, gauss_64());
        total128 += integrate_half_pi(f, gauss_128());
    }
    let i64v = prefactor * total64 / PI;
    let i128v = prefactor * total128 / PI;
    let scale = i128v.abs().max(1e-300);
    let rel = (i64v - i128v).abs() / scale;
    if rel > 1e-10 {
        return Err(PhyError::QuadratureMismatch(rel));
    }
    Ok(i64v)
}

/// Frame error rate P_e for a data frame under `ch`, Eq. of the form
///   P_e = 1 - (1 - P_e(PLCP)) * (1 - P_e(DATA))
/// with P_e(PLCP) over 8*phy_header bits at BPSK and P_e(DATA) over
/// 8*(payload+mac_header) bits at the data modulation. `fer_override`
/// bypasses all of it.
pub fn fer(mac: &MacParams, ch: &ChannelParams) -> Result<f64, PhyError> {
    fer_with(mac, ch, None)
}

pub fn fer_with(
    mac: &MacParams,
    ch: &ChannelParams,
    cck_ber: Option<&BerFn>,
) -> Result<f64, PhyError> {
    if let Some(f) = ch.fer_override {
        return Ok(f);
    }
    let gamma = ch.snr_linear();
    let p_plcp_bit = ber_rayleigh_with(
        BerQuery {
            modulation: Modulation::Dbpsk,
            snr_linear: gamma,
        },
        cck_ber,
    )?;
    let p_data_bit = ber_rayleigh_with(
        BerQuery {
            modulation: ch.modulation,
            snr_linear: gamma,
        },
        cck_ber,
    )?;
    let plcp_bits = 8 * mac.phy_header_bytes as i32;
    let data_bits = 8 * (mac.payload_bytes + mac.mac_header_bytes) as i32;
    let pe_plcp = 1.0 - (1.0 - p_plcp_bit).powi(plcp_bits);
    let pe_data = 1.0 - (1.0 - p_data_bit).powi(data_bits);
    Ok(1.0 - (1.0 - pe_plcp) * (1.0 - pe_data))
}

/// Integrates `f` over [0, pi/2] with precomputed nodes mapped from [-1,1].
fn integrate_half_pi(f: impl Fn(f64) -> f64, (nodes, weights): &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = PI / 4.0; // (b-a)/2 with a=0, b=pi/2
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        acc += w * f(half * (x + 1.0));
    }
    half * acc
}

fn gauss_64() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(64))
}

fn gauss_128() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(128))
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre polynomial roots (initial guess from the Chebyshev approximation).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..(n + 1) / 2 {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d2) = legendre_with_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        weights[k] = w;
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
