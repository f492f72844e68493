//! Stationary behavior of the per-station backoff Markov chain: closed
//! forms for b_00 and the attempt probability tau, plus a numerical
//! oracle that assembles the full transition matrix and solves for the
//! stationary vector directly. The oracle shares no algebra with the
//! closed forms, so the two act as independent cross-checks.
//!
//! Chain states are (stage i, counter k) with window W_i = 2^i * W, plus
//! one idle state entered after a success that leaves the queue empty.

use thiserror::Error;

/// Inputs of the stationary computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainInputs {
    /// Stage-0 contention window W.
    pub w_min: u32,
    /// Maximum backoff stage m.
    pub m: u32,
    /// Equivalent per-attempt failure probability P_eq.
    pub p_eq: f64,
    /// Probability of a packet waiting when one is needed (post-success /
    /// per-idle-slot arrival probability).
    pub q: f64,
}

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("invalid chain inputs: {0}")]
    InvalidInputs(String),
    #[error("chain has {0} states, too many for the dense oracle (limit {1})")]
    TooManyStates(usize, usize),
    #[error("transition matrix is numerically singular")]
    Singular,
}

/// Closed-form switch point: below this distance from P_eq = 1/2 the
/// geometric closed forms lose accuracy and the direct sum is used.
const HALF_SINGULARITY_BAND: f64 = 1e-6;

/// Dense-oracle state-count limit; above it memory and cubic solve cost
/// stop being reasonable for a test path.
pub const MAX_ORACLE_STATES: usize = 8192;

impl ChainInputs {
    pub fn validate(&self) -> Result<(), MarkovError> {
        if self.w_min < 2 {
            return Err(MarkovError::InvalidInputs(format!(
                "w_min must be >= 2, got {}",
                self.w_min
            )));
        }
        // p_eq = 1 is admitted as a degenerate closure: it arises when the
        // frame error rate saturates to exactly 1, and the tau closed form
        // stays finite there.
        if !(0.0..=1.0).contains(&self.p_eq) {
            return Err(MarkovError::InvalidInputs(format!(
                "p_eq must be in [0,1], got {}",
                self.p_eq
            )));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(MarkovError::InvalidInputs(format!(
                "q must be in (0,1], got {}",
                self.q
            )));
        }
        Ok(())
    }

    fn w(&self) -> f64 {
        self.w_min as f64
    }

    /// Per-stage window size W_i = 2^i * W.
    pub fn window(&self, stage: u32) -> u64 {
        (self.w_min as u64) << stage.min(self.m)
    }

    pub fn state_count(&self) -> usize {
        let mut n = 1usize; // idle
        for i in 0..=self.m {
            n += self.window(i) as usize;
        }
        n
    }
}

/// Pre-normalization total 2/b00: W*(sum_{i=0}^{m-1}(2p)^i + (2p)^m/(1-p))
/// + 1/(1-p) + 2(1-q)/q, evaluated term by term. Finite at p = 1/2, which
/// is where the geometric closed form degenerates.
fn inverse_b00_sum(c: ChainInputs) -> f64 {
    let p = c.p_eq;
    let q = c.q;
    let two_p = 2.0 * p;
    let mut sum = 0.0;
    let mut pow = 1.0;
    for _ in 0..c.m {
        sum += pow;
        pow *= two_p;
    }
    sum += pow / (1.0 - p); // (2p)^m / (1-p)
    c.w() * sum + 1.0 / (1.0 - p) + 2.0 * (1.0 - q) / q
}

/// Stationary probability of the stage-0, counter-0 state:
///
///   b00 = 2(1-p)(1-2p)q / { q[(W+1)(1-2p) + W p (1-(2p)^m)] + 2(1-q)(1-p)(1-2p) }
///
/// The p = 1/2 singularity is removable; near it the pre-normalization sum
/// is evaluated directly instead.
pub fn b00_closed_form(c: ChainInputs) -> Result<f64, MarkovError> {
    c.validate()?;
    let p = c.p_eq;
    if (1.0 - 2.0 * p).abs() < HALF_SINGULARITY_BAND {
        return Ok(2.0 / inverse_b00_sum(c));
    }
    let q = c.q;
    let w = c.w();
    let one_2p = 1.0 - 2.0 * p;
    let num = 2.0 * (1.0 - p) * one_2p * q;
    let den = q * ((w + 1.0) * one_2p + w * p * (1.0 - (2.0 * p).powi(c.m as i32)))
        + 2.0 * (1.0 - q) * (1.0 - p) * one_2p;
    Ok(num / den)
}

/// Per-slot attempt probability tau = sum_i b_{i,0} = b00/(1-p):
///
///   tau = 2(1-2p)q / { q[(W+1)(1-2p) + W p (1-(2p)^m)] + 2(1-q)(1-p)(1-2p) }
///
/// Unlike b00 this stays finite (and positive) even at p = 1, where the
/// chain cycles through stage m forever.
pub fn tau(c: ChainInputs) -> Result<f64, MarkovError> {
    c.validate()?;
    let p = c.p_eq;
    if (1.0 - 2.0 * p).abs() < HALF_SINGULARITY_BAND {
        return Ok(2.0 / inverse_b00_sum(c) / (1.0 - p));
    }
    let q = c.q;
    let w = c.w();
    let one_2p = 1.0 - 2.0 * p;
    let num = 2.0 * one_2p * q;
    let den = q * ((w + 1.0) * one_2p + w * p * (1.0 - (2.0 * p).powi(c.m as i32)))
        + 2.0 * (1.0 - q) * (1.0 - p) * one_2p;
    Ok(num / den)
}

/// Full stationary distribution as produced by the numerical oracle.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    /// stages[i][k] = b_{i,k}.
    pub stages: Vec<Vec<f64>>,
    /// Idle-state mass b_I.
    pub b_idle: f64,
}

impl StationaryDistribution {
    pub fn b(&self, stage: usize, counter: usize) -> f64 {
        self.stages[stage][counter]
    }

    pub fn b00(&self) -> f64 {
        self.stages[0][0]
    }

    /// Attempt probability: total mass of counter-0 states.
    pub fn tau(&self) -> f64 {
        self.stages.iter().map(|s| s[0]).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.b_idle + self.stages.iter().flatten().sum::<f64>()
    }
}

/// Assembles the full chain transition matrix from the transition rules
/// and solves (P^T - I) b = 0 with a normalization row in place of one
/// balance equation, by dense LU with partial pivoting. Test oracle;
/// cubic in the state count.
pub fn build_chain_oracle(c: ChainInputs) -> Result<StationaryDistribution, MarkovError> {
    use faer::prelude::*;

    c.validate()?;
    let n = c.state_count();
    if n > MAX_ORACLE_STATES {
        return Err(MarkovError::TooManyStates(n, MAX_ORACLE_STATES));
    }

    // state indexing: stage i occupies offsets[i] .. offsets[i]+W_i, idle last
    let mut offsets = Vec::with_capacity(c.m as usize + 1);
    let mut off = 0usize;
    for i in 0..=c.m {
        offsets.push(off);
        off += c.window(i) as usize;
    }
    let idle = off;
    debug_assert_eq!(idle + 1, n);

    let p = c.p_eq;
    let q = c.q;
    let w0 = c.window(0) as usize;

    // M[row=s, col=t] accumulates P[t -> s]
    let mut a = faer::Mat::<f64>::zeros(n, n);
    let mut add = |from: usize, to: usize, v: f64| {
        a[(to, from)] += v;
    };

    for i in 0..=c.m {
        let wi = c.window(i) as usize;
        let base = offsets[i as usize];
        // countdown
        for k in 1..wi {
            add(base + k, base + k - 1, 1.0);
        }
        // from (i,0): success w.p. (1-p), then new backoff w.p. q or idle;
        // failure w.p. p moves to stage min(i+1, m)
        let from = base;
        for k in 0..w0 {
            add(from, offsets[0] + k, q * (1.0 - p) / w0 as f64);
        }
        add(from, idle, (1.0 - q) * (1.0 - p));
        let next = (i + 1).min(c.m) as usize;
        let wn = c.window(next as u32) as usize;
        for k in 0..wn {
            add(from, offsets[next] + k, p / wn as f64);
        }
    }
    // idle: arrival starts a fresh stage-0 backoff
    add(idle, idle, 1.0 - q);
    for k in 0..w0 {
        add(idle, offsets[0] + k, q / w0 as f64);
    }

    // every from-state's outgoing mass must be 1
    #[cfg(debug_assertions)]
    for t in 0..n {
        let s: f64 = (0..n).map(|r| a[(r, t)]).sum();
        debug_assert!((s - 1.0).abs() < 1e-12, "column {t} sums to {s}");
    }

    // M = P^T - I, then replace the last balance row by normalization
    for d in 0..n {
        a[(d, d)] -= 1.0;
    }
    let last = n - 1;
    for col in 0..n {
        a[(last, col)] = 1.0;
    }
    let mut rhs = faer::Mat::<f64>::zeros(n, 1);
    rhs[(last, 0)] = 1.0;

    let b = a.partial_piv_lu().solve(&rhs);
    // faer reports no error on a rank-deficient factor; the solution
    // turns non-finite instead
    if (0..n).any(|i| !b[(i, 0)].is_finite()) {
        return Err(MarkovError::Singular);
    }

    let mut stages = Vec::with_capacity(c.m as usize + 1);
    for i in 0..=c.m {
        let base = offsets[i as usize];
        let wi = c.window(i) as usize;
        stages.push((0..wi).map(|k| b[(base + k, 0)]).collect());
    }
    Ok(StationaryDistribution {
        stages,
        b_idle: b[(idle, 0)],
    })
}
