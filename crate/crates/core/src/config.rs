//! Scenario parameters: protocol constants, channel description, offered
//! traffic, and solver knobs, plus a flat `key = value` config file format.
//!
//! All durations are microseconds, all sizes bytes, all rates bits/s. The
//! defaults reproduce the standard low-rate 802.11b parameter set exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// MAC/PHY protocol constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MacParams {
    /// Minimum contention window W (stage-0 window size).
    pub w_min: u32,
    /// Maximum backoff stage m; stage-i window is 2^i * w_min, capped at m.
    pub m: u32,
    /// Idle slot time sigma, us.
    pub slot_time_us: u32,
    pub sifs_us: u32,
    pub difs_us: u32,
    pub eifs_us: u32,
    /// One-way propagation delay tau_p, us. Stored but excluded from the
    /// calibrated slot durations (see `metrics::slot_durations`).
    pub prop_delay_us: u32,
    pub mac_header_bytes: u32,
    pub phy_header_bytes: u32,
    pub ack_bytes: u32,
    /// RTS/CTS sizes are carried for completeness; the 2-way handshake
    /// model never uses them.
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub ack_timeout_us: u32,
    /// Mean payload size E[PL], bytes.
    pub payload_bytes: u32,
    /// Payload transmission rate.
    pub data_rate_bps: u64,
    /// Rate for PHY/MAC headers and control frames (basic rate).
    pub ctrl_rate_bps: u64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            w_min: 32,
            m: 5,
            slot_time_us: 20,
            sifs_us: 10,
            difs_us: 50,
            eifs_us: 300,
            prop_delay_us: 1,
            mac_header_bytes: 24,
            phy_header_bytes: 16,
            ack_bytes: 14,
            rts_bytes: 20,
            cts_bytes: 14,
            ack_timeout_us: 300,
            payload_bytes: 1024,
            data_rate_bps: 1_000_000,
            ctrl_rate_bps: 1_000_000,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.w_min < 2 {
            return Err(ConfigError::invariant("w_min", "must be >= 2"));
        }
        for (key, v) in [
            ("slot_time_us", self.slot_time_us),
            ("sifs_us", self.sifs_us),
            ("difs_us", self.difs_us),
            ("eifs_us", self.eifs_us),
            ("prop_delay_us", self.prop_delay_us),
            ("ack_timeout_us", self.ack_timeout_us),
        ] {
            if v == 0 {
                return Err(ConfigError::invariant(key, "duration must be > 0"));
            }
        }
        if self.payload_bytes == 0 {
            return Err(ConfigError::invariant("payload_bytes", "must be > 0"));
        }
        if self.data_rate_bps == 0 {
            return Err(ConfigError::invariant("data_rate_bps", "must be > 0"));
        }
        if self.ctrl_rate_bps == 0 {
            return Err(ConfigError::invariant("ctrl_rate_bps", "must be > 0"));
        }
        Ok(())
    }
}

/// Modulation of the data portion of a frame (headers always use the
/// basic BPSK rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Dbpsk,
    Dqpsk,
    Cck55,
    Cck11,
}

impl Modulation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modulation::Dbpsk => "dbpsk",
            Modulation::Dqpsk => "dqpsk",
            Modulation::Cck55 => "cck55",
            Modulation::Cck11 => "cck11",
        }
    }
}

impl FromStr for Modulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dbpsk" => Ok(Modulation::Dbpsk),
            "dqpsk" => Ok(Modulation::Dqpsk),
            "cck55" | "cck5.5" => Ok(Modulation::Cck55),
            "cck11" => Ok(Modulation::Cck11),
            other => Err(format!(
                "unknown modulation `{other}` (expected dbpsk, dqpsk, cck55 or cck11)"
            )),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Channel description: mean SNR, capture threshold, spreading factor,
/// data modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Mean received SNR (gamma-bar), dB.
    pub snr_db: f64,
    /// Capture ratio z0, dB. `inf` disables capture exactly.
    pub z0_db: f64,
    /// DSSS spreading factor S_f.
    pub spreading_factor: u32,
    pub modulation: Modulation,
    /// When set, bypasses the PHY computation and pins the frame error
    /// rate directly.
    pub fer_override: Option<f64>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            // Default SNR sits in the FER transition region for the default
            // 1048-byte frame at 1 Mb/s (FER ~ 0.19), so the error path is
            // exercised out of the box.
            snr_db: 40.0,
            z0_db: 6.0,
            spreading_factor: 11,
            modulation: Modulation::Dbpsk,
            fer_override: None,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.snr_db.is_nan() {
            return Err(ConfigError::invariant("snr_db", "must not be NaN"));
        }
        if self.z0_db.is_nan() {
            return Err(ConfigError::invariant("z0_db", "must not be NaN"));
        }
        if self.spreading_factor < 1 {
            return Err(ConfigError::invariant("spreading_factor", "must be >= 1"));
        }
        if let Some(f) = self.fer_override {
            if !(0.0..=1.0).contains(&f) {
                return Err(ConfigError::invariant("fer_override", "must be in [0,1]"));
            }
        }
        Ok(())
    }

    /// Linear mean SNR gamma-bar.
    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }
}

/// Offered traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub n_stations: u32,
    /// Poisson packet arrival rate per station, packets/second.
    pub lambda_pkt_s: f64,
    /// Forces q = 1 (every station always backlogged) when true.
    pub saturated: bool,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            n_stations: 10,
            lambda_pkt_s: 10.0,
            saturated: false,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_stations < 1 {
            return Err(ConfigError::invariant("n_stations", "must be >= 1"));
        }
        if !(self.lambda_pkt_s >= 0.0) {
            return Err(ConfigError::invariant("lambda_pkt_s", "must be >= 0"));
        }
        Ok(())
    }
}

/// Fixed-point solver knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on the max-norm of the residual vector.
    pub tol: f64,
    pub max_iters: u32,
    /// Picard damping factor d in (0,1]; x <- (1-d)x + d*x_new.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iters: 10_000,
            damping: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tol > 0.0) {
            return Err(ConfigError::invariant("tol", "must be > 0"));
        }
        if self.max_iters < 1 {
            return Err(ConfigError::invariant("max_iters", "must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(ConfigError::invariant("damping", "must be in (0,1]"));
        }
        Ok(())
    }
}

/// A complete scenario: everything a solve or a simulation run needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub mac: MacParams,
    pub channel: ChannelParams,
    pub traffic: TrafficParams,
    pub solver: SolverConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Invariant { key: String, msg: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    fn invariant(key: &str, msg: &str) -> Self {
        ConfigError::Invariant {
            key: key.to_string(),
            msg: msg.to_string(),
        }
    }

    fn parse(line: usize, msg: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            msg: msg.into(),
        }
    }
}

impl Scenario {
    /// Loads a scenario from the flat `key = value` format. Missing keys
    /// keep their defaults; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_config_str(&text)
    }

    pub fn from_config_str(text: &str) -> Result<Scenario, ConfigError> {
        let mut sc = Scenario::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::parse(lineno, format!("expected `key = value`, got `{line}`"))
            })?;
            sc.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    ConfigError::Invariant { key, msg } => {
                        ConfigError::parse(lineno, format!("`{key}`: {msg}"))
                    }
                    other => other,
                })?;
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Applies one `key = value` assignment (also the CLI override hook).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| ConfigError::invariant(key, &format!("`{value}`: {e}")))
        }

        match key {
            "w_min" => self.mac.w_min = num(key, value)?,
            "m" => self.mac.m = num(key, value)?,
            "slot_time_us" => self.mac.slot_time_us = num(key, value)?,
            "sifs_us" => self.mac.sifs_us = num(key, value)?,
            "difs_us" => self.mac.difs_us = num(key, value)?,
            "eifs_us" => self.mac.eifs_us = num(key, value)?,
            "prop_delay_us" => self.mac.prop_delay_us = num(key, value)?,
            "mac_header_bytes" => self.mac.mac_header_bytes = num(key, value)?,
            "phy_header_bytes" => self.mac.phy_header_bytes = num(key, value)?,
            "ack_bytes" => self.mac.ack_bytes = num(key, value)?,
            "rts_bytes" => self.mac.rts_bytes = num(key, value)?,
            "cts_bytes" => self.mac.cts_bytes = num(key, value)?,
            "ack_timeout_us" => self.mac.ack_timeout_us = num(key, value)?,
            "payload_bytes" => self.mac.payload_bytes = num(key, value)?,
            "data_rate_bps" => self.mac.data_rate_bps = num(key, value)?,
            "ctrl_rate_bps" => self.mac.ctrl_rate_bps = num(key, value)?,
            "snr_db" => self.channel.snr_db = num(key, value)?,
            "z0_db" => self.channel.z0_db = num(key, value)?,
            "spreading_factor" => self.channel.spreading_factor = num(key, value)?,
            "modulation" => {
                self.channel.modulation = value
                    .parse()
                    .map_err(|e: String| ConfigError::invariant(key, &e))?
            }
            "fer_override" => {
                self.channel.fer_override = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "n_stations" => self.traffic.n_stations = num(key, value)?,
            "lambda_pkt_s" => self.traffic.lambda_pkt_s = num(key, value)?,
            "saturated" => self.traffic.saturated = num(key, value)?,
            "tol" => self.solver.tol = num(key, value)?,
            "max_iters" => self.solver.max_iters = num(key, value)?,
            "damping" => self.solver.damping = num(key, value)?,
            other => {
                return Err(ConfigError::invariant(
                    other,
                    "unknown configuration key",
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mac.validate()?;
        self.channel.validate()?;
        self.traffic.validate()?;
        self.solver.validate()
    }

    /// Serializes to the same `key = value` format `load` accepts.
    /// Float formatting round-trips exactly.
    pub fn to_config_string(&self) -> String {
        let m = &self.mac;
        let c = &self.channel;
        let t = &self.traffic;
        let s = &self.solver;
        let fer = match c.fer_override {
            Some(f) => f.to_string(),
            None => "none".to_string(),
        };
        format!(
            "# MAC/PHY protocol constants\n\
             w_min = {}\nm = {}\nslot_time_us = {}\nsifs_us = {}\ndifs_us = {}\n\
             eifs_us = {}\nprop_delay_us = {}\nmac_header_bytes = {}\nphy_header_bytes = {}\n\
             ack_bytes = {}\nrts_bytes = {}\ncts_bytes = {}\nack_timeout_us = {}\n\
             payload_bytes = {}\ndata_rate_bps = {}\nctrl_rate_bps = {}\n\
             \n# channel\nsnr_db = {}\nz0_db = {}\nspreading_factor = {}\nmodulation = {}\nfer_override = {}\n\
             \n# traffic\nn_stations = {}\nlambda_pkt_s = {}\nsaturated = {}\n\
             \n# solver\ntol = {}\nmax_iters = {}\ndamping = {}\n",
            m.w_min, m.m, m.slot_time_us, m.sifs_us, m.difs_us,
            m.eifs_us, m.prop_delay_us, m.mac_header_bytes, m.phy_header_bytes,
            m.ack_bytes, m.rts_bytes, m.cts_bytes, m.ack_timeout_us,
            m.payload_bytes, m.data_rate_bps, m.ctrl_rate_bps,
            c.snr_db, c.z0_db, c.spreading_factor, c.modulation, fer,
            t.n_stations, t.lambda_pkt_s, t.saturated,
            s.tol, s.max_iters, s.damping,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_config_string())?;
        Ok(())
    }
}

/// dB to linear power ratio: 10^(dB/10).
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_standard_parameter_set() {
        let m = MacParams::default();
        assert_eq!(m.w_min, 32);
        assert_eq!(m.m, 5);
        assert_eq!(m.slot_time_us, 20);
        assert_eq!(m.sifs_us, 10);
        assert_eq!(m.difs_us, 50);
        assert_eq!(m.eifs_us, 300);
        assert_eq!(m.prop_delay_us, 1);
        assert_eq!(m.mac_header_bytes, 24);
        assert_eq!(m.phy_header_bytes, 16);
        assert_eq!(m.ack_bytes, 14);
        assert_eq!(m.rts_bytes, 20);
        assert_eq!(m.cts_bytes, 14);
        assert_eq!(m.ack_timeout_us, 300);
        assert_eq!(m.payload_bytes, 1024);
        assert_eq!(m.data_rate_bps, 1_000_000);
        assert_eq!(m.ctrl_rate_bps, 1_000_000);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let sc = Scenario::from_config_str("").unwrap();
        assert_eq!(sc, Scenario::default());
    }

    #[test]
    fn parses_keys_comments_and_blanks() {
        let text = "\n# comment line\nw_min = 64   # trailing comment\nm=3\n\nlambda_pkt_s = 2.5\nz0_db = inf\nsaturated = true\n";
        let sc = Scenario::from_config_str(text).unwrap();
        assert_eq!(sc.mac.w_min, 64);
        assert_eq!(sc.mac.m, 3);
        assert_eq!(sc.traffic.lambda_pkt_s, 2.5);
        assert!(sc.channel.z0_db.is_infinite());
        assert!(sc.traffic.saturated);
    }

    #[test]
    fn invariant_violation_names_key() {
        let err = Scenario::from_config_str("w_min = 1\n").unwrap_err();
        // validation runs after parsing, so the key shows up in the message
        assert!(err.to_string().contains("w_min"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Scenario::from_config_str("w_min = 32\nbogus = 7\n").unwrap_err();
        match err {
            ConfigError::Parse { line, ref msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line() {
        let err = Scenario::from_config_str("w_min 32\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut sc = Scenario::default();
        sc.mac.w_min = 16;
        sc.channel.snr_db = 37.25;
        sc.channel.z0_db = f64::INFINITY;
        sc.channel.fer_override = Some(0.125);
        sc.channel.modulation = Modulation::Dqpsk;
        sc.traffic.lambda_pkt_s = 0.1 + 0.2; // non-representable decimal
        sc.solver.damping = 0.35;
        let text = sc.to_config_string();
        let back = Scenario::from_config_str(&text).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn fer_override_range_checked() {
        let err = Scenario::from_config_str("fer_override = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("fer_override"));
        let ok = Scenario::from_config_str("fer_override = none\n").unwrap();
        assert_eq!(ok.channel.fer_override, None);
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-15);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(6.0) - 3.981071705534972).abs() < 1e-12);
        assert_eq!(db_to_linear(f64::INFINITY), f64::INFINITY);
    }
}
