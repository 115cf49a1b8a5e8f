//! Detector time tags: event-level simulation and stream file formats.

mod io;
mod sim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::JointSetting;

pub use io::{decode, encode, read_csv, read_stream, write_csv, write_stream, FORMAT_VERSION, HEADER_LEN, MAGIC, RECORD_LEN};
pub use sim::{simulate_acquisition, simulate_setting, SettingStreams};

/// Default TDC grid, ps.
pub const DEFAULT_TDC_RESOLUTION_PS: u16 = 81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal = 0,
    Idler = 1,
}

impl Channel {
    pub fn from_u8(v: u8) -> Option<Channel> {
        match v {
            0 => Some(Channel::Signal),
            1 => Some(Channel::Idler),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeTagRecord {
    pub channel: Channel,
    /// Picoseconds since the start of the acquisition, on the TDC grid.
    pub timestamp_ps: u64,
}

/// Ordered click records from one acquisition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagStream {
    pub tdc_resolution_ps: u16,
    pub records: Vec<TimeTagRecord>,
}

impl TimeTagStream {
    pub fn new(tdc_resolution_ps: u16, records: Vec<TimeTagRecord>) -> Result<Self> {
        let s = TimeTagStream {
            tdc_resolution_ps,
            records,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(tdc_resolution_ps: u16) -> Self {
        TimeTagStream {
            tdc_resolution_ps,
            records: Vec::new(),
        }
    }

    /// Single-channel stream from grid-aligned timestamps (sorted here).
    pub fn from_timestamps(channel: Channel, tdc_resolution_ps: u16, mut ts: Vec<u64>) -> Result<Self> {
        ts.sort_unstable();
        let records = ts
            .into_iter()
            .map(|timestamp_ps| TimeTagRecord { channel, timestamp_ps })
            .collect();
        Self::new(tdc_resolution_ps, records)
    }

    /// Grid alignment and per-channel ordering.
    pub fn validate(&self) -> Result<()> {
        if self.tdc_resolution_ps == 0 {
            return Err(Error::precondition("tdc resolution must be > 0"));
        }
        let res = u64::from(self.tdc_resolution_ps);
        let mut last = [None::<u64>; 2];
        for (k, r) in self.records.iter().enumerate() {
            if r.timestamp_ps % res != 0 {
                return Err(Error::precondition(format!(
                    "record {k}: timestamp {} is not a multiple of {res} ps",
                    r.timestamp_ps
                )));
            }
            let slot = &mut last[r.channel as usize];
            if slot.is_some_and(|prev| r.timestamp_ps < prev) {
                return Err(Error::precondition(format!("record {k}: timestamps not sorted")));
            }
            *slot = Some(r.timestamp_ps);
        }
        Ok(())
    }

    pub fn timestamps(&self, channel: Channel) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.channel == channel)
            .map(|r| r.timestamp_ps)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Single-photon detector plus its TDC channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    /// Click probability per arriving photon, in `(0, 1]`.
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Gaussian timing jitter, ps.
    pub jitter_sigma_ps: f64,
    /// Electronic delay of the channel, ps.
    pub channel_delay_ps: f64,
    pub tdc_resolution_ps: u16,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            efficiency: 1.0,
            dark_rate: 250.0,
            jitter_sigma_ps: 100.0,
            channel_delay_ps: 0.0,
            tdc_resolution_ps: DEFAULT_TDC_RESOLUTION_PS,
        }
    }
}

impl DetectorParams {
    /// Default idler channel, delayed 2.25 ns relative to the signal.
    pub fn default_idler() -> Self {
        DetectorParams {
            channel_delay_ps: 2250.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid(format!("efficiency {} outside (0, 1]", self.efficiency)));
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(Error::invalid("dark_rate must be finite and >= 0"));
        }
        if !(self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0) {
            return Err(Error::invalid("jitter_sigma_ps must be finite and >= 0"));
        }
        if !self.channel_delay_ps.is_finite() {
            return Err(Error::invalid("channel_delay_ps must be finite"));
        }
        if self.tdc_resolution_ps == 0 {
            return Err(Error::invalid("tdc_resolution_ps must be > 0"));
        }
        Ok(())
    }
}

/// Sequence of joint analyzer settings to acquire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionPlan {
    pub settings: Vec<JointSetting>,
    pub duration_s: f64,
    /// Start of each acquisition on the pump-profile clock, seconds.
    pub start_times_s: Vec<f64>,
    pub rng_seed: u64,
}

impl AcquisitionPlan {
    /// Back-to-back acquisitions starting at `start_s`.
    pub fn sequential(settings: Vec<JointSetting>, duration_s: f64, start_s: f64, gap_s: f64, rng_seed: u64) -> Self {
        let start_times_s = (0..settings.len())
            .map(|k| start_s + k as f64 * (duration_s + gap_s))
            .collect();
        AcquisitionPlan {
            settings,
            duration_s,
            start_times_s,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() {
            return Err(Error::invalid("acquisition plan has no settings"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("duration_s must be > 0"));
        }
        if self.start_times_s.len() != self.settings.len() {
            return Err(Error::invalid("one start time per setting is required"));
        }
        if self.start_times_s.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("start times must be finite"));
        }
        for s in &self.settings {
            s.projectors()?;
        }
        Ok(())
    }
}
