//! MAC/PHY constants that define the contention game, and their config-file
//! form.
//!
//! Config files are flat `key = value` lists whose keys are the
//! [`MacPhyParams`] field names. Durations are written in microseconds, the
//! data rate in bits per second and sizes in bytes. Keys that are left out
//! keep their [`MacPhyParams::dot11b_1mbps`] value.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const MICROS: f64 = 1e-6;

/// The bundled profile, also shipped as `profiles/dot11b-1mbps.cfg`.
pub const DOT11B_1MBPS_CFG: &str = include_str!("../profiles/dot11b-1mbps.cfg");

/// DCF timing and backoff constants. Durations are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacPhyParams {
    /// Initial contention window `W`, in slots.
    pub w_min: u32,
    /// Number of window doublings `m`.
    pub m_stages: u32,
    pub slot_time: f64,
    pub sifs: f64,
    pub difs: f64,
    /// Preamble plus PLCP header airtime.
    pub phy_header_time: f64,
    pub mac_header_bytes: u32,
    pub ack_bytes: u32,
    /// Bits per second.
    pub data_rate: f64,
    pub payload_bytes: u32,
    pub prop_delay: f64,
}

impl MacPhyParams {
    /// 802.11b long-preamble timing at 1 Mbit/s with 1500 byte payloads.
    pub const fn dot11b_1mbps() -> Self {
        MacPhyParams {
            w_min: 128,
            m_stages: 5,
            slot_time: 20.0 * MICROS,
            sifs: 10.0 * MICROS,
            difs: 50.0 * MICROS,
            phy_header_time: 192.0 * MICROS,
            mac_header_bytes: 34,
            ack_bytes: 14,
            data_rate: 1e6,
            payload_bytes: 1500,
            prop_delay: 1.0 * MICROS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_min < 2 {
            return Err(Error::invalid("w_min", format!("must be >= 2, got {}", self.w_min)));
        }
        // 2^m * W must stay representable as a slot count
        if self.m_stages > 20 {
            return Err(Error::invalid("m_stages", format!("must be <= 20, got {}", self.m_stages)));
        }
        for (name, v) in [
            ("slot_time", self.slot_time),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("phy_header_time", self.phy_header_time),
            ("data_rate", self.data_rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.prop_delay >= 0.0) || !self.prop_delay.is_finite() {
            return Err(Error::invalid("prop_delay", format!("must be >= 0, got {}", self.prop_delay)));
        }
        if self.payload_bytes == 0 {
            return Err(Error::invalid("payload_bytes", "must be > 0"));
        }
        Ok(())
    }

    /// Largest contention window, `2^m * W`.
    pub fn max_window(&self) -> u64 {
        (self.w_min as u64) << self.m_stages
    }

    /// Parses a config text, starting from the bundled defaults.
    pub fn from_cfg_str(text: &str) -> Result<Self> {
        let raw: RawParams = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let p = raw.apply(MacPhyParams::dot11b_1mbps());
        p.validate()?;
        Ok(p)
    }

    pub fn from_cfg_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_cfg_str(&text)
    }
}

impl Default for MacPhyParams {
    fn default() -> Self {
        Self::dot11b_1mbps()
    }
}

/// Renders the parameters back in config-file syntax.
impl fmt::Display for MacPhyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "w_min = {}", self.w_min)?;
        writeln!(f, "m_stages = {}", self.m_stages)?;
        writeln!(f, "slot_time = {}", self.slot_time / MICROS)?;
        writeln!(f, "sifs = {}", self.sifs / MICROS)?;
        writeln!(f, "difs = {}", self.difs / MICROS)?;
        writeln!(f, "phy_header_time = {}", self.phy_header_time / MICROS)?;
        writeln!(f, "mac_header_bytes = {}", self.mac_header_bytes)?;
        writeln!(f, "ack_bytes = {}", self.ack_bytes)?;
        writeln!(f, "data_rate = {}", self.data_rate)?;
        writeln!(f, "payload_bytes = {}", self.payload_bytes)?;
        write!(f, "prop_delay = {}", self.prop_delay / MICROS)
    }
}

/// Numeric config values accept both `20` and `20.0`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(x) => x,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawParams {
    w_min: Option<u32>,
    m_stages: Option<u32>,
    slot_time: Option<Number>,
    sifs: Option<Number>,
    difs: Option<Number>,
    phy_header_time: Option<Number>,
    mac_header_bytes: Option<u32>,
    ack_bytes: Option<u32>,
    data_rate: Option<Number>,
    payload_bytes: Option<u32>,
    prop_delay: Option<Number>,
}

impl RawParams {
    fn apply(self, mut p: MacPhyParams) -> MacPhyParams {
        let us = |n: Number| n.as_f64() * MICROS;
        if let Some(v) = self.w_min {
            p.w_min = v;
        }
        if let Some(v) = self.m_stages {
            p.m_stages = v;
        }
        if let Some(v) = self.slot_time {
            p.slot_time = us(v);
        }
        if let Some(v) = self.sifs {
            p.sifs = us(v);
        }
        if let Some(v) = self.difs {
            p.difs = us(v);
        }
        if let Some(v) = self.phy_header_time {
            p.phy_header_time = us(v);
        }
        if let Some(v) = self.mac_header_bytes {
            p.mac_header_bytes = v;
        }
        if let Some(v) = self.ack_bytes {
            p.ack_bytes = v;
        }
        if let Some(v) = self.data_rate {
            p.data_rate = v.as_f64();
        }
        if let Some(v) = self.payload_bytes {
            p.payload_bytes = v;
        }
        if let Some(v) = self.prop_delay {
            p.prop_delay = us(v);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_profile_matches_builtin_defaults() {
        let p = MacPhyParams::from_cfg_str(DOT11B_1MBPS_CFG).unwrap();
        assert_eq!(p, MacPhyParams::dot11b_1mbps());
    }

    #[test]
    fn partial_config_overrides_defaults() {
        let p = MacPhyParams::from_cfg_str("w_min = 32\nslot_time = 9.0\n").unwrap();
        assert_eq!(p.w_min, 32);
        assert!((p.slot_time - 9e-6).abs() < 1e-18);
        assert_eq!(p.payload_bytes, 1500);
    }

    #[test]
    fn display_round_trips() {
        let mut p = MacPhyParams::dot11b_1mbps();
        p.prop_delay = 0.0;
        p.data_rate = 2e6;
        let back = MacPhyParams::from_cfg_str(&p.to_string()).unwrap();
        assert_eq!(back.data_rate, p.data_rate);
        assert_eq!(back.prop_delay, 0.0);
        assert_eq!(back.w_min, p.w_min);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            MacPhyParams::from_cfg_str("cw_max = 1023\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in ["w_min = 1", "slot_time = 0", "data_rate = -1", "payload_bytes = 0", "prop_delay = -2"] {
            assert!(
                matches!(MacPhyParams::from_cfg_str(text), Err(Error::InvalidParameter { .. })),
                "{text}"
            );
        }
    }
}
