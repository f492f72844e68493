//! Slot-type durations, per-slot event probabilities, the expected slot
//! time, and normalized saturation throughput.
//!
//! Duration formulas are calibrated so that the default parameter set
//! yields T_s = T_c = 8812 us exactly at 1 Mbps: the success slot covers
//! the data frame, SIFS, the ACK, and DIFS; the collision slot covers the
//! data frame plus the full ACK timeout. Propagation delay is deliberately
//! not added (doing so breaks the 8812 calibration).

use crate::config::MacParams;
use thiserror::Error;

/// Durations of the four slot types, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDurations {
    /// Empty (idle) slot.
    pub sigma_us: f64,
    /// Successful exchange: data + SIFS + ACK + DIFS.
    pub t_s_us: f64,
    /// Collision: data frame followed by the ACK timeout.
    pub t_c_us: f64,
    /// Channel-errored frame; no ACK arrives, so it costs the same as a
    /// collision.
    pub t_e_us: f64,
}

/// Per-slot transmission and success probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotProbabilities {
    /// At least one station transmits.
    pub p_t: f64,
    /// Conditioned on a transmission: exactly one station transmits, or a
    /// collision is resolved by capture.
    pub p_s: f64,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("success probability undefined: no transmission occurs (p_t = 0)")]
    NoTransmission,
    #[error("success probability {0} exceeds 1 beyond numerical tolerance")]
    SuccessExceedsOne(f64),
}

fn airtime_us(bytes: u32, rate_bps: u64) -> f64 {
    8.0 * bytes as f64 * 1e6 / rate_bps as f64
}

/// Payload transmission time at the data rate, in microseconds.
pub fn payload_airtime_us(mac: &MacParams) -> f64 {
    airtime_us(mac.payload_bytes, mac.data_rate_bps)
}

/// Derives the four slot durations from the frame format and timing
/// parameters. PHY headers and the ACK go at the control rate, the MAC
/// header and payload at the data rate.
pub fn slot_durations(mac: &MacParams) -> SlotDurations {
    let t_phy = airtime_us(mac.phy_header_bytes, mac.ctrl_rate_bps);
    let t_mac = airtime_us(mac.mac_header_bytes, mac.data_rate_bps);
    let t_pl = payload_airtime_us(mac);
    let t_ack = airtime_us(mac.ack_bytes, mac.ctrl_rate_bps);
    let data_frame = t_phy + t_mac + t_pl;
    let t_s = data_frame + mac.sifs_us as f64 + (t_phy + t_ack) + mac.difs_us as f64;
    let t_c = data_frame + mac.ack_timeout_us as f64;
    SlotDurations {
        sigma_us: mac.slot_time_us as f64,
        t_s_us: t_s,
        t_c_us: t_c,
        t_e_us: t_c,
    }
}

/// Probability that at least one of `n` stations transmits in a slot:
/// 1 - (1-tau)^n.
pub fn p_t(n: u32, tau: f64) -> f64 {
    debug_assert!(n >= 1);
    debug_assert!((0.0..=1.0).contains(&tau));
    1.0 - (1.0 - tau).powi(n as i32)
}

/// Probability that a slot with at least one transmission carries a
/// decodable frame: (n tau (1-tau)^{n-1} + p_cap) / p_t. Values above 1 by
/// at most 1e-12 are clamped; larger excesses are reported as errors.
pub fn p_s(n: u32, tau: f64, p_cap: f64) -> Result<f64, MetricsError> {
    let pt = p_t(n, tau);
    if pt == 0.0 {
        return Err(MetricsError::NoTransmission);
    }
    let single = n as f64 * tau * (1.0 - tau).powi(n as i32 - 1);
    let ps = (single + p_cap) / pt;
    if ps > 1.0 + 1e-12 {
        return Err(MetricsError::SuccessExceedsOne(ps));
    }
    Ok(ps.clamp(0.0, 1.0))
}

/// Expected duration of one chain slot:
/// (1-P_t) sigma + P_t (1-P_s) T_c + P_t P_s P_e T_e + P_t P_s (1-P_e) T_s.
pub fn expected_slot(sd: &SlotDurations, sp: &SlotProbabilities, p_e: f64) -> f64 {
    (1.0 - sp.p_t) * sd.sigma_us
        + sp.p_t * (1.0 - sp.p_s) * sd.t_c_us
        + sp.p_t * sp.p_s * p_e * sd.t_e_us
        + sp.p_t * sp.p_s * (1.0 - p_e) * sd.t_s_us
}

/// Normalized throughput: fraction of channel time spent on successfully
/// delivered payload bits.
pub fn throughput(
    sd: &SlotDurations,
    sp: &SlotProbabilities,
    p_e: f64,
    payload_airtime_us: f64,
) -> f64 {
    let num = sp.p_t * sp.p_s * (1.0 - p_e) * payload_airtime_us;
    let den = (1.0 - sp.p_t) * sd.sigma_us
        + sp.p_t * (1.0 - sp.p_s) * sd.t_c_us
        + sp.p_t * sp.p_s * p_e * sd.t_e_us
        + sp.p_t * sp.p_s * (1.0 - p_e) * sd.t_s_us;
    // the denominator is the expected slot time, term for term
    debug_assert_eq!(den, expected_slot(sd, sp, p_e));
    num / den
}
