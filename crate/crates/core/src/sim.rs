//! Slotted discrete-event simulator of N DCF stations: Poisson arrivals,
//! binary exponential backoff, Bernoulli channel errors, and capture
//! among simultaneous transmitters. Shares only the parameter structs and
//! slot durations with the analytical side; every MAC rule is replayed
//! event by event, so it serves as an independent validation oracle.
//!
//! Chain-slot semantics: every waiting station decrements its counter
//! once per slot whatever the slot's real-time duration turns out to be
//! (idle, success, collision, or error). This mirrors the analytical
//! chain's unconditional countdown transition and is what makes the two
//! sides directly comparable.

use crate::capture::{capture_given_i, CaptureParams};
use crate::config::{ChannelParams, MacParams, TrafficParams};
use crate::metrics::{self, SlotDurations};
use crate::phy::{self, PhyError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation inputs: {0}")]
    Invalid(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

/// What happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOutcome {
    /// Nobody transmitted.
    Idle,
    /// Exactly one station transmitted and the frame survived the channel.
    Success { station: u32 },
    /// Two or more stations transmitted; capture rescued this one's frame.
    Capture { station: u32 },
    /// Two or more stations transmitted and no frame was captured.
    Collision,
    /// The would-be winner's frame was hit by a channel error. With one
    /// transmitter that is the lone sender; in a captured collision it is
    /// the capture survivor (every transmitter fails either way).
    ChannelError { station: u32 },
}

/// One simulated slot: its outcome and real-time cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotEvent {
    pub outcome: SlotOutcome,
    pub duration_us: f64,
}

/// Aggregate measurement of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimReport {
    /// Total simulated time (sum of slot durations), microseconds.
    pub sim_time_us: f64,
    pub payload_bits_delivered: u64,
    pub slots_idle: u64,
    /// Delivered-frame slots, capture rescues included.
    pub slots_success: u64,
    pub slots_collision: u64,
    /// Channel-error slots (single transmitter or captured winner).
    pub slots_error: u64,
    pub slots_total: u64,
    /// Capture resolutions among >= 2 transmitters, counted whether or
    /// not the survivor's frame then passed the channel.
    pub capture_events: u64,
    /// Individual transmission attempts across all stations and slots.
    pub tx_attempts: u64,
    /// Sum over slots of the number of stations holding a packet at the
    /// slot start; attempts / this = the empirical per-slot attempt rate.
    pub active_station_slots: u64,
    /// Fraction of channel time carrying delivered payload bits.
    pub throughput: f64,
    /// Student-t 95% half-width over batch-mean throughputs; infinite
    /// when the horizon was too short to fill at least two batches.
    pub ci95_halfwidth: f64,
    pub seed: u64,
}

impl SimReport {
    /// Empirical per-slot attempt probability.
    pub fn tau_hat(&self) -> f64 {
        if self.active_station_slots == 0 {
            0.0
        } else {
            self.tx_attempts as f64 / self.active_station_slots as f64
        }
    }

    /// Empirical per-slot capture probability (capture resolutions over
    /// all slots).
    pub fn capture_rate(&self) -> f64 {
        if self.slots_total == 0 {
            0.0
        } else {
            self.capture_events as f64 / self.slots_total as f64
        }
    }
}

struct Station {
    rng: ChaCha12Rng,
    /// Inter-arrival sampler; None when saturated or lambda = 0.
    arrivals: Option<Exp<f64>>,
    next_arrival_us: f64,
    /// A packet is being contended for (backoff running).
    in_service: bool,
    stage: u32,
    counter: u64,
    /// Packets waiting behind the in-service one.
    queue_len: u32,
}

impl Station {
    fn draw_counter(&mut self, w_min: u64, stage: u32) -> u64 {
        let window = w_min << stage;
        self.rng.gen_range(0..window)
    }

    fn begin_packet(&mut self, w_min: u64) {
        self.in_service = true;
        self.stage = 0;
        self.counter = self.draw_counter(w_min, 0);
    }

    fn fail(&mut self, w_min: u64, m: u32) {
        self.stage = (self.stage + 1).min(m);
        self.counter = self.draw_counter(w_min, self.stage);
    }
}

/// Full simulation state; advance it one slot at a time with
/// [`World::step_slot`].
pub struct World {
    stations: Vec<Station>,
    channel_rng: ChaCha12Rng,
    p_e: f64,
    /// Capture probability against a single interferer; k transmitters
    /// capture with this to the power k-1.
    c1: f64,
    sd: SlotDurations,
    w_min: u64,
    m: u32,
    saturated: bool,
    queue_capacity: u32,
    payload_bits: u64,
    t_us: f64,
    // running counters
    slots_idle: u64,
    slots_success: u64,
    slots_collision: u64,
    slots_error: u64,
    capture_events: u64,
    tx_attempts: u64,
    active_station_slots: u64,
    payload_bits_delivered: u64,
    // scratch, reused across slots
    transmitters: Vec<usize>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl World {
    /// Builds a world with the default queue capacity of 1 waiting packet
    /// per station (the in-service packet does not count against it).
    pub fn new(
        mac: &MacParams,
        ch: &ChannelParams,
        tr: &TrafficParams,
        seed: u64,
    ) -> Result<World, SimError> {
        World::with_queue_capacity(mac, ch, tr, seed, 1)
    }

    pub fn with_queue_capacity(
        mac: &MacParams,
        ch: &ChannelParams,
        tr: &TrafficParams,
        seed: u64,
        queue_capacity: u32,
    ) -> Result<World, SimError> {
        mac.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        ch.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        tr.validate().map_err(|e| SimError::Invalid(e.to_string()))?;

        let p_e = phy::fer(mac, ch)?;
        let c1 = capture_given_i(CaptureParams::new(ch.z0_db, ch.spreading_factor), 1);
        let w_min = mac.w_min as u64;

        // sub-seeds by a fixed splitting rule: channel stream first, then
        // one stream per station in index order
        let mut split_state = seed;
        let channel_rng = ChaCha12Rng::seed_from_u64(splitmix64(&mut split_state));

        let lambda_per_us = tr.lambda_pkt_s * 1e-6;
        let arrivals = if tr.saturated || lambda_per_us == 0.0 {
            None
        } else {
            Some(Exp::new(lambda_per_us).map_err(|e| SimError::Invalid(e.to_string()))?)
        };

        let mut stations = Vec::with_capacity(tr.n_stations as usize);
        for _ in 0..tr.n_stations {
            let mut st = Station {
                rng: ChaCha12Rng::seed_from_u64(splitmix64(&mut split_state)),
                arrivals,
                next_arrival_us: f64::INFINITY,
                in_service: false,
                stage: 0,
                counter: 0,
                queue_len: 0,
            };
            if tr.saturated {
                st.begin_packet(w_min);
            } else if let Some(exp) = &st.arrivals {
                let exp = *exp;
                st.next_arrival_us = exp.sample(&mut st.rng);
            }
            stations.push(st);
        }

        Ok(World {
            stations,
            channel_rng,
            p_e,
            c1,
            sd: metrics::slot_durations(mac),
            w_min,
            m: mac.m,
            saturated: tr.saturated,
            queue_capacity,
            payload_bits: 8 * mac.payload_bytes as u64,
            t_us: 0.0,
            slots_idle: 0,
            slots_success: 0,
            slots_collision: 0,
            slots_error: 0,
            capture_events: 0,
            tx_attempts: 0,
            active_station_slots: 0,
            payload_bits_delivered: 0,
            transmitters: Vec::new(),
        })
    }

    pub fn time_us(&self) -> f64 {
        self.t_us
    }

    pub fn slots_total(&self) -> u64 {
        self.slots_idle + self.slots_success + self.slots_collision + self.slots_error
    }

    /// Advances the world by exactly one slot and reports what happened.
    pub fn step_slot(&mut self) -> SlotEvent {
        // who transmits this slot (in station-index order, for
        // reproducibility of the survivor draw)
        self.transmitters.clear();
        let mut active = 0u64;
        for (i, st) in self.stations.iter().enumerate() {
            if st.in_service {
                active += 1;
                if st.counter == 0 {
                    self.transmitters.push(i);
                }
            }
        }
        self.active_station_slots += active;
        self.tx_attempts += self.transmitters.len() as u64;

        let (outcome, duration) = match self.transmitters.len() {
            0 => (SlotOutcome::Idle, self.sd.sigma_us),
            1 => {
                let s = self.transmitters[0] as u32;
                if self.channel_rng.gen_bool(self.p_e) {
                    (SlotOutcome::ChannelError { station: s }, self.sd.t_e_us)
                } else {
                    (SlotOutcome::Success { station: s }, self.sd.t_s_us)
                }
            }
            k => {
                let p_capture = self.c1.powi(k as i32 - 1);
                if self.channel_rng.gen_bool(p_capture) {
                    self.capture_events += 1;
                    let w = self.transmitters[self.channel_rng.gen_range(0..k)] as u32;
                    if self.channel_rng.gen_bool(self.p_e) {
                        // the captured frame still failed the channel
                        (SlotOutcome::ChannelError { station: w }, self.sd.t_e_us)
                    } else {
                        (SlotOutcome::Capture { station: w }, self.sd.t_s_us)
                    }
                } else {
                    (SlotOutcome::Collision, self.sd.t_c_us)
                }
            }
        };

        // unconditional chain countdown for every waiting station
        for st in &mut self.stations {
            if st.in_service && st.counter > 0 {
                st.counter -= 1;
            }
        }

        // arrivals that land during this slot are visible to the
        // winner's queue check below (the analytical q counts them)
        let t_end = self.t_us + duration;
        self.deliver_arrivals(t_end);

        // transmitter bookkeeping
        let winner = match outcome {
            SlotOutcome::Idle => {
                self.slots_idle += 1;
                None
            }
            SlotOutcome::Collision => {
                self.slots_collision += 1;
                None
            }
            SlotOutcome::ChannelError { .. } => {
                self.slots_error += 1;
                None
            }
            SlotOutcome::Success { station } | SlotOutcome::Capture { station } => {
                self.slots_success += 1;
                self.payload_bits_delivered += self.payload_bits;
                Some(station as usize)
            }
        };
        for ti in 0..self.transmitters.len() {
            let i = self.transmitters[ti];
            if Some(i) == winner {
                let st = &mut self.stations[i];
                if self.saturated {
                    st.begin_packet(self.w_min);
                } else if st.queue_len > 0 {
                    st.queue_len -= 1;
                    st.begin_packet(self.w_min);
                } else {
                    st.in_service = false;
                }
            } else {
                self.stations[i].fail(self.w_min, self.m);
            }
        }

        self.t_us = t_end;
        SlotEvent {
            outcome,
            duration_us: duration,
        }
    }

    /// Processes every arrival up to and including `t_end`. An idle
    /// station's first arrival puts a packet in service with a fresh
    /// stage-0 backoff, contending from the next slot; later ones queue
    /// up to capacity and overflow is dropped.
    fn deliver_arrivals(&mut self, t_end: f64) {
        for st in &mut self.stations {
            let Some(exp) = st.arrivals else { continue };
            while st.next_arrival_us <= t_end {
                if !st.in_service {
                    st.in_service = true;
                    st.stage = 0;
                    st.counter = {
                        let w = self.w_min;
                        st.rng.gen_range(0..w)
                    };
                } else if st.queue_len < self.queue_capacity {
                    st.queue_len += 1;
                }
                let gap = exp.sample(&mut st.rng);
                st.next_arrival_us += gap;
            }
        }
    }

    fn report(&self, throughput: f64, ci95: f64, seed: u64) -> SimReport {
        SimReport {
            sim_time_us: self.t_us,
            payload_bits_delivered: self.payload_bits_delivered,
            slots_idle: self.slots_idle,
            slots_success: self.slots_success,
            slots_collision: self.slots_collision,
            slots_error: self.slots_error,
            slots_total: self.slots_total(),
            capture_events: self.capture_events,
            tx_attempts: self.tx_attempts,
            active_station_slots: self.active_station_slots,
            throughput,
            ci95_halfwidth: ci95,
            seed,
        }
    }
}

/// Runs one simulation to the given horizon and reduces it to a report.
/// Deterministic in (parameters, seed). Throughput confidence comes from
/// splitting the horizon into `batches` equal time windows and treating
/// their throughputs as independent samples.
pub fn run(
    mac: &MacParams,
    ch: &ChannelParams,
    tr: &TrafficParams,
    seed: u64,
    horizon_us: f64,
    batches: u32,
) -> Result<SimReport, SimError> {
    if !(horizon_us > 0.0) {
        return Err(SimError::Invalid(format!(
            "horizon_us must be > 0, got {horizon_us}"
        )));
    }
    if batches < 1 {
        return Err(SimError::Invalid("batches must be >= 1".into()));
    }
    let mut world = World::new(mac, ch, tr, seed)?;
    let payload_us = metrics::payload_airtime_us(mac);
    let batch_len = horizon_us / batches as f64;
    let mut batch_payload = vec![0.0f64; batches as usize];
    let mut batch_time = vec![0.0f64; batches as usize];

    while world.time_us() < horizon_us {
        let start = world.time_us();
        let ev = world.step_slot();
        let b = ((start / batch_len) as usize).min(batches as usize - 1);
        batch_time[b] += ev.duration_us;
        if matches!(
            ev.outcome,
            SlotOutcome::Success { .. } | SlotOutcome::Capture { .. }
        ) {
            batch_payload[b] += payload_us;
        }
    }

    let throughput = if world.time_us() > 0.0 {
        world.payload_bits_delivered as f64 / mac.data_rate_bps as f64 * 1e6 / world.time_us()
    } else {
        0.0
    };

    let means: Vec<f64> = batch_time
        .iter()
        .zip(&batch_payload)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| p / t)
        .collect();
    let ci95 = if means.len() >= 2 {
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0);
        t_quantile_975(means.len() as u32 - 1) * (var / n).sqrt()
    } else {
        f64::INFINITY
    };

    Ok(world.report(throughput, ci95, seed))
}

/// 97.5th percentile of Student's t distribution (two-sided 95%
/// confidence) by table lookup for small df and a Cornish-Fisher
/// expansion around the normal quantile beyond it.
pub fn t_quantile_975(df: u32) -> f64 {
    const TABLE: [f64; 30] = [
        12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, 2.2622, 2.2281, 2.2010,
        2.1788, 2.1604, 2.1448, 2.1314, 2.1199, 2.1098, 2.1009, 2.0930, 2.0860, 2.0796, 2.0739,
        2.0687, 2.0639, 2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423,
    ];
    assert!(df >= 1);
    if df <= 30 {
        return TABLE[df as usize - 1];
    }
    let z = 1.959963984540054_f64;
    let d = df as f64;
    z + (z.powi(3) + z) / (4.0 * d)
        + (5.0 * z.powi(5) + 16.0 * z.powi(3) + 3.0 * z) / (96.0 * d * d)
        + (3.0 * z.powi(7) + 19.0 * z.powi(5) + 17.0 * z.powi(3) - 15.0 * z)
            / (384.0 * d * d * d)
}
