//! Fixed-point solver for the coupled station model: attempt probability,
//! collision and capture probabilities, the equivalent failure
//! probability, and (under finite load) the arrival-coupling probability
//! q, all mutually consistent.
//!
//! Scheme: damped Picard iteration on the pair (tau, q). One step derives
//! P_cap, P_col, P_eq from the current tau, maps them through the chain
//! closed form to a new tau, then refreshes q from the expected slot time.
//! A bisection fallback on tau guards the rare non-convergent case.

use crate::capture::{self, CaptureParams};
use crate::config::{ChannelParams, MacParams, SolverConfig, TrafficParams};
use crate::markov::{self, ChainInputs};
use crate::metrics::{self, SlotDurations, SlotProbabilities};
use crate::phy::{self, PhyError};
use thiserror::Error;

/// Converged operating point of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSolution {
    /// Per-slot attempt probability of one station.
    pub tau: f64,
    /// Conditional collision probability (capture-adjusted).
    pub p_col: f64,
    /// Capture-rescue probability mass.
    pub p_cap: f64,
    /// Frame error rate of the channel.
    pub p_e: f64,
    /// Equivalent per-attempt failure probability.
    pub p_eq: f64,
    /// Probability a fresh packet is waiting when one is needed.
    pub q: f64,
    /// Expected duration of one chain slot, microseconds.
    pub e_slot_us: f64,
    /// Normalized throughput S.
    pub throughput: f64,
    /// Iterations spent (Picard, plus bisection steps if the fallback ran).
    pub iterations: u32,
    /// Max-norm of the residual vector at the returned point.
    pub residual: f64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "no convergence after {iterations} iterations (residual {residual:.3e}); \
         best Picard tau {tau_picard:.9e}{}",
        match (.tau_bisection, .residual_bisection) {
            (Some(t), Some(r)) => format!(", bisection candidate tau {t:.9e} (residual {r:.3e})"),
            _ => String::new(),
        }
    )]
    NonConvergence {
        iterations: u32,
        residual: f64,
        tau_picard: f64,
        tau_bisection: Option<f64>,
        residual_bisection: Option<f64>,
    },
    #[error("iteration left the valid probability region: {0}")]
    InvalidRegime(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

/// All the constants one solve needs, captured once up front.
struct SystemParams {
    n: u32,
    w_min: u32,
    m: u32,
    p_e: f64,
    cp: CaptureParams,
    sd: SlotDurations,
    payload_us: f64,
    lambda: f64,
    saturated: bool,
}

impl SystemParams {
    fn new(
        mac: &MacParams,
        ch: &ChannelParams,
        tr: &TrafficParams,
    ) -> Result<SystemParams, SolverError> {
        mac.validate()
            .map_err(|e| SolverError::InvalidRegime(e.to_string()))?;
        ch.validate()
            .map_err(|e| SolverError::InvalidRegime(e.to_string()))?;
        tr.validate()
            .map_err(|e| SolverError::InvalidRegime(e.to_string()))?;
        Ok(SystemParams {
            n: tr.n_stations,
            w_min: mac.w_min,
            m: mac.m,
            p_e: phy::fer(mac, ch)?,
            cp: CaptureParams::new(ch.z0_db, ch.spreading_factor),
            sd: metrics::slot_durations(mac),
            payload_us: metrics::payload_airtime_us(mac),
            lambda: tr.lambda_pkt_s,
            saturated: tr.saturated,
        })
    }

    /// P_cap, P_col, P_eq as functions of tau.
    fn failure_chain(&self, tau: f64) -> (f64, f64, f64) {
        let p_cap = capture::p_cap(self.cp, self.n, tau);
        let residual_collision = 1.0 - (1.0 - tau).powi(self.n as i32 - 1) - p_cap;
        debug_assert!(residual_collision > -1e-12);
        let p_col = residual_collision.max(0.0);
        let p_eq = p_col + self.p_e - self.p_e * p_col;
        (p_cap, p_col, p_eq)
    }

    /// Chain closed form; q = 0 only arises with zero load, where the
    /// station never contends.
    fn tau_map(&self, p_eq: f64, q: f64) -> Result<f64, SolverError> {
        if q == 0.0 {
            return Ok(0.0);
        }
        markov::tau(ChainInputs {
            w_min: self.w_min,
            m: self.m,
            p_eq,
            q,
        })
        .map_err(|e| SolverError::InvalidRegime(e.to_string()))
    }

    /// Expected slot time at attempt probability tau.
    fn e_slot(&self, tau: f64, p_cap: f64) -> Result<f64, SolverError> {
        if tau == 0.0 {
            return Ok(self.sd.sigma_us);
        }
        let pt = metrics::p_t(self.n, tau);
        let ps = metrics::p_s(self.n, tau, p_cap)
            .map_err(|e| SolverError::InvalidRegime(e.to_string()))?;
        Ok(metrics::expected_slot(
            &self.sd,
            &SlotProbabilities { p_t: pt, p_s: ps },
            self.p_e,
        ))
    }

    /// Arrival-coupling update: q = 1 - exp(-lambda * E[slot]).
    fn q_map(&self, e_slot_us: f64) -> f64 {
        if self.saturated {
            1.0
        } else {
            1.0 - (-self.lambda * e_slot_us * 1e-6).exp()
        }
    }

    /// Residual components r1 (tau equation) and r5 (q equation) at a
    /// point whose other coordinates are derived from tau.
    fn point_residuals(&self, tau: f64, q: f64) -> Result<(f64, f64, f64), SolverError> {
        let (p_cap, _p_col, p_eq) = self.failure_chain(tau);
        let tau_next = self.tau_map(p_eq, q)?;
        let e = self.e_slot(tau, p_cap)?;
        let q_next = self.q_map(e);
        Ok((tau - tau_next, q - q_next, tau_next))
    }

    fn assemble(
        &self,
        tau: f64,
        q: f64,
        iterations: u32,
        residual: f64,
    ) -> Result<ModelSolution, SolverError> {
        let (p_cap, p_col, p_eq) = self.failure_chain(tau);
        let (e_slot_us, throughput) = if tau == 0.0 {
            (self.sd.sigma_us, 0.0)
        } else {
            let pt = metrics::p_t(self.n, tau);
            let ps = metrics::p_s(self.n, tau, p_cap)
                .map_err(|e| SolverError::InvalidRegime(e.to_string()))?;
            let sp = SlotProbabilities { p_t: pt, p_s: ps };
            (
                metrics::expected_slot(&self.sd, &sp, self.p_e),
                metrics::throughput(&self.sd, &sp, self.p_e, self.payload_us),
            )
        };
        Ok(ModelSolution {
            tau,
            p_col,
            p_cap,
            p_e: self.p_e,
            p_eq,
            q,
            e_slot_us,
            throughput,
            iterations,
            residual,
        })
    }
}

/// Solves the coupled system from default seeds.
pub fn solve_fixed_point(
    mac: &MacParams,
    ch: &ChannelParams,
    tr: &TrafficParams,
    cfg: &SolverConfig,
) -> Result<ModelSolution, SolverError> {
    let sys = SystemParams::new(mac, ch, tr)?;
    let tau0 = 2.0 / (mac.w_min as f64 + 1.0);
    let q0 = if tr.saturated {
        1.0
    } else {
        (tr.lambda_pkt_s * 1e-3).clamp(0.01, 1.0)
    };
    solve_with_seed(&sys, cfg, tau0, q0)
}

/// Solves the coupled system starting from a previous solution (warm
/// start); a converged input re-converges in at most a couple of
/// iterations.
pub fn solve_from(
    start: &ModelSolution,
    mac: &MacParams,
    ch: &ChannelParams,
    tr: &TrafficParams,
    cfg: &SolverConfig,
) -> Result<ModelSolution, SolverError> {
    let sys = SystemParams::new(mac, ch, tr)?;
    let q0 = if tr.saturated { 1.0 } else { start.q.max(1e-12) };
    solve_with_seed(&sys, cfg, start.tau, q0)
}

fn solve_with_seed(
    sys: &SystemParams,
    cfg: &SolverConfig,
    tau0: f64,
    q0: f64,
) -> Result<ModelSolution, SolverError> {
    cfg.validate()
        .map_err(|e| SolverError::InvalidRegime(e.to_string()))?;

    // zero offered load: the station never holds a packet
    if !sys.saturated && sys.lambda == 0.0 {
        return sys.assemble(0.0, 0.0, 0, 0.0);
    }

    let d = cfg.damping;
    let mut tau = tau0;
    let mut q = q0;
    let mut last_res = f64::INFINITY;

    for iter in 0..cfg.max_iters {
        let (r1, r5, tau_next) = sys.point_residuals(tau, q)?;
        let res = r1.abs().max(r5.abs());
        last_res = res;
        if res <= cfg.tol {
            return sys.assemble(tau, q, iter, res);
        }

        // Picard step: tau from the chain map, then q from the slot time
        // evaluated at the new tau
        let (p_cap_next, _, _) = sys.failure_chain(tau_next);
        let e_next = sys.e_slot(tau_next, p_cap_next)?;
        let q_next = sys.q_map(e_next);

        tau = (1.0 - d) * tau + d * tau_next;
        q = (1.0 - d) * q + d * q_next;
        if !(0.0..=1.0).contains(&tau) || !(0.0..=1.0).contains(&q) {
            return Err(SolverError::InvalidRegime(format!(
                "tau={tau}, q={q} after iteration {iter}"
            )));
        }
    }

    // Picard exhausted: try bracketed bisection on the scalar tau residual
    let tau_picard = tau;
    match bisect_tau(sys) {
        Some((tau_b, q_b, res_b, extra)) if res_b <= cfg.tol => {
            sys.assemble(tau_b, q_b, cfg.max_iters + extra, res_b)
        }
        other => Err(SolverError::NonConvergence {
            iterations: cfg.max_iters,
            residual: last_res,
            tau_picard,
            tau_bisection: other.as_ref().map(|c| c.0),
            residual_bisection: other.as_ref().map(|c| c.2),
        }),
    }
}

/// Reduces the system to a scalar equation in tau (q is an explicit
/// function of tau through the slot time) and bisects the sign change.
fn bisect_tau(sys: &SystemParams) -> Option<(f64, f64, f64, u32)> {
    let q_of = |tau: f64| -> Result<f64, SolverError> {
        let (p_cap, _, _) = sys.failure_chain(tau);
        Ok(sys.q_map(sys.e_slot(tau, p_cap)?))
    };
    let r = |tau: f64| -> Result<f64, SolverError> {
        let (_, _, p_eq) = sys.failure_chain(tau);
        let q = q_of(tau)?;
        Ok(tau - sys.tau_map(p_eq, q)?)
    };

    let mut lo = 1e-12;
    let mut hi = 1.0 - 1e-12;
    let r_lo = r(lo).ok()?;
    let r_hi = r(hi).ok()?;
    if r_lo == 0.0 {
        hi = lo;
    } else if r_hi == 0.0 {
        lo = hi;
    } else if r_lo.signum() == r_hi.signum() {
        return None;
    }

    let mut iters = 0u32;
    while hi - lo > 1e-15 && iters < 200 {
        let mid = 0.5 * (lo + hi);
        let rm = r(mid).ok()?;
        if rm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if rm.signum() == r_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    let tau_b = 0.5 * (lo + hi);
    let q_b = q_of(tau_b).ok()?;
    let (r1, r5, _) = sys.point_residuals(tau_b, q_b).ok()?;
    Some((tau_b, q_b, r1.abs().max(r5.abs()), iters))
}

/// Evaluates all five system equations at an arbitrary point; every
/// component is zero (to tolerance) exactly at a solution.
///
/// Components: tau equation, collision equation, capture equation,
/// equivalent-failure composition, arrival coupling.
pub fn residuals(
    point: &ModelSolution,
    mac: &MacParams,
    ch: &ChannelParams,
    tr: &TrafficParams,
) -> Result<[f64; 5], SolverError> {
    let mut sys = SystemParams::new(mac, ch, tr)?;
    // honor the point's own error rate so the residuals describe the
    // point as given
    sys.p_e = point.p_e;

    let r1 = point.tau - sys.tau_map(point.p_eq, point.q)?;
    let p_cap_tau = capture::p_cap(sys.cp, sys.n, point.tau);
    let r2 = point.p_col
        - (1.0 - (1.0 - point.tau).powi(sys.n as i32 - 1) - point.p_cap).max(0.0);
    let r3 = point.p_cap - p_cap_tau;
    let r4 = point.p_eq - (point.p_col + point.p_e - point.p_e * point.p_col);
    let e = sys.e_slot(point.tau, point.p_cap)?;
    let r5 = point.q - sys.q_map(e);
    Ok([r1, r2, r3, r4, r5])
}
