//! Reduction of signal/idler time tags to coincidence quantities.
//!
//! Δt is always `t_idler − t_signal` in picoseconds. Histogram bins are
//! half-open `[lo, lo + width)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::JointSetting;

pub const DEFAULT_BIN_WIDTH_PS: u64 = 162;
pub const DEFAULT_WINDOW_PS: f64 = 1000.0;
pub const DEFAULT_EXCLUSION_PS: f64 = 5000.0;
pub const REFERENCE_POWER_NW: f64 = 100.0;

pub const COUNT_TABLE_HEADER: [&str; 7] = [
    "setting_s",
    "setting_i",
    "raw",
    "accidental",
    "duration_s",
    "mean_power_nw",
    "normalized",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelatorOptions {
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub window_ps: f64,
    /// Window centre; `None` selects the histogram peak.
    pub window_center_ps: Option<f64>,
    pub exclusion_ps: f64,
    pub reference_power_nw: f64,
    pub subtract_accidentals: bool,
}

impl Default for CorrelatorOptions {
    fn default() -> Self {
        CorrelatorOptions {
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            range_ps: (-20_000, 20_000),
            window_ps: DEFAULT_WINDOW_PS,
            window_center_ps: None,
            exclusion_ps: DEFAULT_EXCLUSION_PS,
            reference_power_nw: REFERENCE_POWER_NW,
            subtract_accidentals: false,
        }
    }
}

impl CorrelatorOptions {
    pub fn validate(&self) -> Result<()> {
        if self.bin_width_ps == 0 {
            return Err(Error::invalid("bin_width_ps must be > 0"));
        }
        if self.range_ps.1 <= self.range_ps.0 {
            return Err(Error::invalid("range_ps must satisfy min < max"));
        }
        if !(self.window_ps.is_finite() && self.window_ps > 0.0) {
            return Err(Error::invalid("window_ps must be > 0"));
        }
        if !(self.exclusion_ps.is_finite() && self.exclusion_ps >= 0.0) {
            return Err(Error::invalid("exclusion_ps must be >= 0"));
        }
        if !(self.reference_power_nw.is_finite() && self.reference_power_nw > 0.0) {
            return Err(Error::invalid("reference_power_nw must be > 0"));
        }
        if self.window_center_ps.is_some_and(|c| !c.is_finite()) {
            return Err(Error::invalid("window_center_ps must be finite"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: u64,
    pub min_dt_ps: i64,
    pub max_dt_ps: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn zeros(bin_width_ps: u64, range_ps: (i64, i64)) -> Result<Self> {
        let (min, max) = range_ps;
        if bin_width_ps == 0 || max <= min {
            return Err(Error::invalid("histogram needs bin width > 0 and min < max"));
        }
        let span = (max - min) as u64;
        let n = span.div_ceil(bin_width_ps) as usize;
        Ok(Histogram {
            bin_width_ps,
            min_dt_ps: min,
            max_dt_ps: max,
            counts: vec![0; n],
        })
    }

    pub fn bin_lo(&self, k: usize) -> i64 {
        self.min_dt_ps + (k as u64 * self.bin_width_ps) as i64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.bin_lo(k) as f64 + self.bin_width_ps as f64 / 2.0
    }

    pub fn bin_of(&self, dt: i64) -> Option<usize> {
        (dt >= self.min_dt_ps && dt < self.max_dt_ps).then(|| ((dt - self.min_dt_ps) as u64 / self.bin_width_ps) as usize)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Centre of the fullest bin; ties resolve to the smaller Δt.
    pub fn peak_center(&self) -> f64 {
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        self.bin_center(best)
    }

    /// Counts summed over bins whose centre lies within `width/2` of `center`.
    pub fn mass_near(&self, center: f64, width: f64) -> u64 {
        (0..self.counts.len())
            .filter(|&k| (self.bin_center(k) - center).abs() <= width / 2.0)
            .map(|k| self.counts[k])
            .sum()
    }

    pub fn accumulate(&mut self, other: &Histogram) -> Result<()> {
        if (self.bin_width_ps, self.min_dt_ps, self.max_dt_ps) != (other.bin_width_ps, other.min_dt_ps, other.max_dt_ps) {
            return Err(Error::invalid("histograms have different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `bin_center_ps,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_center_ps,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{}\n", self.bin_center(k), c));
        }
        s
    }
}

fn check_sorted(ts: &[u64], name: &str) -> Result<()> {
    if ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::precondition(format!("{name} timestamps are not sorted")));
    }
    Ok(())
}

/// Histogram of all `t_i − t_s` inside `range_ps`, by a two-pointer sweep.
pub fn cross_correlate(signal: &[u64], idler: &[u64], bin_width_ps: u64, range_ps: (i64, i64)) -> Result<Histogram> {
    check_sorted(signal, "signal")?;
    check_sorted(idler, "idler")?;
    let mut hist = Histogram::zeros(bin_width_ps, range_ps)?;
    let (min, max) = (i128::from(range_ps.0), i128::from(range_ps.1));
    let mut start = 0usize;
    for &s in signal {
        let s = i128::from(s);
        while start < idler.len() && i128::from(idler[start]) - s < min {
            start += 1;
        }
        for &i in &idler[start..] {
            let dt = i128::from(i) - s;
            if dt >= max {
                break;
            }
            let k = ((dt - min) as u64 / bin_width_ps) as usize;
            hist.counts[k] += 1;
        }
    }
    Ok(hist)
}

/// Coincidences with `|Δt − center| ≤ width/2`, each click used at most once
/// (greedy: every signal click in time order takes the earliest unused idler
/// click in its window).
pub fn window_coincidences(signal: &[u64], idler: &[u64], center_ps: f64, width_ps: f64) -> Result<u64> {
    if !(width_ps.is_finite() && width_ps > 0.0 && center_ps.is_finite()) {
        return Err(Error::invalid("window width must be > 0 and centre finite"));
    }
    check_sorted(signal, "signal")?;
    check_sorted(idler, "idler")?;
    let half = width_ps / 2.0;
    let mut next = 0usize;
    let mut n = 0u64;
    for &s in signal {
        let lo = s as f64 + center_ps - half;
        let hi = s as f64 + center_ps + half;
        while next < idler.len() && (idler[next] as f64) < lo {
            next += 1;
        }
        if next < idler.len() && idler[next] as f64 <= hi {
            n += 1;
            next += 1;
        }
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// Accidentals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccidentalEstimate {
    /// Expected accidentals inside one coincidence window over the acquisition.
    pub per_window: f64,
    /// Same, per second of acquisition.
    pub per_second: f64,
    pub bins_used: usize,
}

/// Flat-background estimate from full bins whose centre lies more than
/// `exclusion_ps` from `center_ps`, rescaled to the window width.
pub fn accidentals_from_histogram(
    hist: &Histogram,
    center_ps: f64,
    exclusion_ps: f64,
    window_ps: f64,
    duration_s: f64,
) -> Result<AccidentalEstimate> {
    if !(duration_s > 0.0 && window_ps > 0.0) {
        return Err(Error::invalid("duration and window must be > 0"));
    }
    let bw = hist.bin_width_ps as f64;
    let mut sum = 0u64;
    let mut used = 0usize;
    let (mut below, mut above) = (false, false);
    for k in 0..hist.counts.len() {
        let full = hist.bin_lo(k) + hist.bin_width_ps as i64 <= hist.max_dt_ps;
        let d = hist.bin_center(k) - center_ps;
        if full && d.abs() > exclusion_ps {
            sum += hist.counts[k];
            used += 1;
            below |= d < 0.0;
            above |= d > 0.0;
        }
    }
    if used == 0 || !(below && above) {
        return Err(Error::insufficient(format!(
            "histogram range does not extend {exclusion_ps} ps beyond the window centre on both sides"
        )));
    }
    let per_bin = sum as f64 / used as f64;
    let per_window = per_bin * window_ps / bw;
    Ok(AccidentalEstimate {
        per_window,
        per_second: per_window / duration_s,
        bins_used: used,
    })
}

/// Accidental coincidences per window from the far tails of the
/// cross-correlation of two streams.
pub fn accidental_rate(
    signal: &[u64],
    idler: &[u64],
    opts: &CorrelatorOptions,
    center_ps: f64,
    duration_s: f64,
) -> Result<AccidentalEstimate> {
    if signal.is_empty() || idler.is_empty() {
        return Err(Error::insufficient("accidental estimate needs clicks on both channels"));
    }
    let hist = cross_correlate(signal, idler, opts.bin_width_ps, opts.range_ps)?;
    accidentals_from_histogram(&hist, center_ps, opts.exclusion_ps, opts.window_ps, duration_s)
}

// ---------------------------------------------------------------------------
// Count records
// ---------------------------------------------------------------------------

/// Coincidences of one joint setting, normalised to a reference pump power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: JointSetting,
    pub raw: u64,
    pub accidental: f64,
    pub duration_s: f64,
    pub mean_power_nw: f64,
    pub normalized: f64,
}

impl CountRecord {
    /// `normalized = (raw [− accidental]) · reference / mean_power`.
    pub fn normalize(
        setting: JointSetting,
        raw: u64,
        accidental: f64,
        duration_s: f64,
        mean_power_nw: f64,
        reference_power_nw: f64,
        subtract_accidentals: bool,
    ) -> Result<Self> {
        if !(mean_power_nw.is_finite() && mean_power_nw > 0.0) {
            return Err(Error::invalid(format!("mean pump power must be > 0, got {mean_power_nw}")));
        }
        if !(reference_power_nw.is_finite() && reference_power_nw > 0.0) {
            return Err(Error::invalid("reference power must be > 0"));
        }
        let signal = if subtract_accidentals {
            (raw as f64 - accidental).max(0.0)
        } else {
            raw as f64
        };
        Ok(CountRecord {
            setting,
            raw,
            accidental,
            duration_s,
            mean_power_nw,
            normalized: signal * reference_power_nw / mean_power_nw,
        })
    }

    /// Multiplier from raw counts to normalised counts.
    pub fn scale(&self) -> f64 {
        if self.raw > 0 {
            self.normalized / self.raw as f64
        } else {
            REFERENCE_POWER_NW / self.mean_power_nw
        }
    }
}

pub fn write_count_table(records: &[CountRecord], path: &Path) -> Result<()> {
    std::fs::write(path, count_table_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn count_table_csv(records: &[CountRecord]) -> String {
    let mut s = COUNT_TABLE_HEADER.join(",");
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.setting.signal, r.setting.idler, r.raw, r.accidental, r.duration_s, r.mean_power_nw, r.normalized
        ));
    }
    s
}

pub fn read_count_table(path: &Path) -> Result<Vec<CountRecord>> {
    let line_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => line_err(1, format!("{other:?}")),
        })?;
    let header = rdr.headers().map_err(|e| line_err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != COUNT_TABLE_HEADER {
        return Err(line_err(1, format!("expected header {:?}", COUNT_TABLE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| line_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            get(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| line_err(line, format!("{}: cannot parse {:?}", COUNT_TABLE_HEADER[i], get(i))))
        };
        let setting = JointSetting::new(
            get(0).parse().map_err(|e: Error| line_err(line, e.to_string()))?,
            get(1).parse().map_err(|e: Error| line_err(line, e.to_string()))?,
        );
        let raw = get(2)
            .parse::<u64>()
            .map_err(|_| line_err(line, format!("raw: cannot parse {:?}", get(2))))?;
        let record = CountRecord {
            setting,
            raw,
            accidental: num(3)?,
            duration_s: num(4)?,
            mean_power_nw: num(5)?,
            normalized: num(6)?,
        };
        if record.normalized < 0.0 || record.accidental < 0.0 {
            return Err(line_err(line, "counts must be non-negative".into()));
        }
        out.push(record);
    }
    Ok(out)
}

/// Histogram, windowed count and accidental estimate for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingAnalysis {
    pub histogram: Histogram,
    pub window_center_ps: f64,
    /// `None` when the streams do not support an estimate.
    pub accidentals: Option<AccidentalEstimate>,
    pub record: CountRecord,
}

/// Reduces one setting. `center_ps` overrides both the option and the
/// histogram-peak detection.
pub fn analyze_setting(
    setting: JointSetting,
    signal: &[u64],
    idler: &[u64],
    duration_s: f64,
    mean_power_nw: f64,
    opts: &CorrelatorOptions,
    center_ps: Option<f64>,
) -> Result<SettingAnalysis> {
    opts.validate()?;
    let histogram = cross_correlate(signal, idler, opts.bin_width_ps, opts.range_ps)?;
    let center = center_ps
        .or(opts.window_center_ps)
        .unwrap_or_else(|| histogram.peak_center());
    let raw = window_coincidences(signal, idler, center, opts.window_ps)?;
    let accidentals = if signal.is_empty() || idler.is_empty() {
        None
    } else {
        accidentals_from_histogram(&histogram, center, opts.exclusion_ps, opts.window_ps, duration_s).ok()
    };
    let record = CountRecord::normalize(
        setting,
        raw,
        accidentals.map_or(0.0, |a| a.per_window),
        duration_s,
        mean_power_nw,
        opts.reference_power_nw,
        opts.subtract_accidentals,
    )?;
    Ok(SettingAnalysis {
        histogram,
        window_center_ps: center,
        accidentals,
        record,
    })
}
