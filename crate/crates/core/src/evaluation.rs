//! Achievable-rate estimation and parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::channel::doppler_from_speed;
use crate::duplex::{DuplexMode, FrameResult, LinkConfig, LinkState};
use crate::error::{Result, SimError};
use crate::exec::Execution;
use crate::rng::derive_seed;

/// Mutual information per channel use above which a point counts as
/// supported when locating crossover speeds.
pub const MI_THRESHOLD_BPCU: f64 = 1.0;

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// BICM mutual information per QPSK symbol from hard decisions. Bits are
/// interleaved `[b0, b1, b0, b1, ...]` and each position is treated as its
/// own binary symmetric channel.
pub fn bicm_mi(tx: &[u8], decided: &[u8]) -> Result<f64> {
    if tx.len() != decided.len() {
        return Err(SimError::Config(format!(
            "bit sequences differ in length: {} vs {}",
            tx.len(),
            decided.len()
        )));
    }
    if tx.is_empty() {
        return Err(SimError::Domain("no bits to evaluate".into()));
    }
    let mut mi = 0.0;
    for pos in 0..2 {
        let (mut n, mut err) = (0usize, 0usize);
        for (a, b) in tx.iter().zip(decided).skip(pos).step_by(2) {
            n += 1;
            err += (a != b) as usize;
        }
        if n > 0 {
            mi += 1.0 - binary_entropy(err as f64 / n as f64);
        }
    }
    Ok(mi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// bits/s/Hz.
    pub rate: f64,
    /// Mean MI per downlink channel use.
    pub mi_bpcu: f64,
    /// Bit error rate folded to at most 0.5.
    pub ber: f64,
    pub n_bits: usize,
}

/// Average of the per-frame rates `MI * uses / (B * T_frame)`. All frames
/// must come from one mode and frame layout.
pub fn achievable_rate(frames: &[FrameResult], bandwidth_hz: f64) -> Result<RateEstimate> {
    let first = frames
        .first()
        .ok_or_else(|| SimError::Domain("no frames to evaluate".into()))?;
    for f in frames {
        if f.mode != first.mode
            || f.frame_duration_s != first.frame_duration_s
            || f.dl_subcarriers != first.dl_subcarriers
        {
            return Err(SimError::MixedConfig(format!(
                "frame {} ({}, {} s) does not match frame {} ({}, {} s)",
                f.frame_index,
                f.mode,
                f.frame_duration_s,
                first.frame_index,
                first.mode,
                first.frame_duration_s
            )));
        }
    }
    let (mut rate, mut mi, mut bits, mut errors) = (0.0, 0.0, 0usize, 0usize);
    for f in frames {
        let m = bicm_mi(&f.tx_bits, &f.decided_bits)?;
        mi += m;
        rate += m * f.channel_uses() as f64 / (bandwidth_hz * f.frame_duration_s);
        bits += f.tx_bits.len();
        errors += f.bit_errors();
    }
    let n = frames.len() as f64;
    let raw = errors as f64 / bits as f64;
    Ok(RateEstimate {
        rate: rate / n,
        mi_bpcu: mi / n,
        ber: raw.min(1.0 - raw),
        n_bits: bits,
    })
}

/// Runs `n_frames` statistics frames after the warm-up frame.
pub fn simulate_link(cfg: &LinkConfig, seed: u64, n_frames: usize) -> Result<(RateEstimate, Vec<String>)> {
    let mut state = LinkState::new(cfg.clone(), seed)?;
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        frames.push(state.run_frame()?);
    }
    let warnings = frames.first().map(|f| f.warnings.clone()).unwrap_or_default();
    Ok((achievable_rate(&frames, cfg.ofdm.bandwidth_hz)?, warnings))
}

/// Cartesian grid of link parameters. Points run in the order
/// mode, pilot rate, antennas, SNR, speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub modes: Vec<DuplexMode>,
    pub pilot_rates: Vec<f64>,
    pub n_antennas: Vec<usize>,
    pub speeds_kmh: Vec<f64>,
    pub snr_db: Vec<f64>,
    /// Independent channel realizations per point.
    pub seeds: usize,
    pub n_frames: usize,
    /// Multiplies the Doppler derived from each speed. Values above one let a
    /// reduced numerology keep the full-size `f_D * T` product.
    pub doppler_scale: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            modes: vec![DuplexMode::Tdd, DuplexMode::Ifdd],
            pilot_rates: vec![1.0 / 3.0],
            n_antennas: vec![128],
            speeds_kmh: vec![10.0, 45.0, 100.0],
            snr_db: vec![3.0],
            seeds: 3,
            n_frames: 200,
            doppler_scale: 1.0,
        }
    }
}

impl SweepGrid {
    pub fn n_points(&self) -> usize {
        self.modes.len()
            * self.pilot_rates.len()
            * self.n_antennas.len()
            * self.speeds_kmh.len()
            * self.snr_db.len()
    }

    pub fn violations(&self, section: &str) -> Vec<String> {
        let mut v = Vec::new();
        for (name, empty) in [
            ("modes", self.modes.is_empty()),
            ("pilot_rates", self.pilot_rates.is_empty()),
            ("n_antennas", self.n_antennas.is_empty()),
            ("speeds_kmh", self.speeds_kmh.is_empty()),
            ("snr_db", self.snr_db.is_empty()),
        ] {
            if empty {
                v.push(format!("{section}.{name} is empty"));
            }
        }
        if self.seeds == 0 {
            v.push(format!("{section}.seeds must be at least 1"));
        }
        if self.n_frames == 0 {
            v.push(format!("{section}.n_frames must be at least 1"));
        }
        if !(self.doppler_scale > 0.0 && self.doppler_scale.is_finite()) {
            v.push(format!(
                "{section}.doppler_scale = {} must be positive",
                self.doppler_scale
            ));
        }
        for &s in &self.speeds_kmh {
            if !(s >= 0.0 && s.is_finite()) {
                v.push(format!("{section}.speeds_kmh contains invalid speed {s}"));
            }
        }
        for &m in &self.n_antennas {
            if m == 0 {
                v.push(format!("{section}.n_antennas contains 0"));
            }
        }
        for &p in &self.pilot_rates {
            let fc = crate::duplex::FrameConfig {
                pilot_rate: p,
                ..Default::default()
            };
            if let Err(e) = fc.pilot_interval() {
                v.push(format!("{section}: {e}"));
            }
        }
        v
    }
}

/// One point of a [`RateReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub mode: DuplexMode,
    pub pilot_rate: f64,
    pub n_antennas: usize,
    pub doppler_hz: f64,
    pub speed_kmh: f64,
    pub snr_db: f64,
    pub rate: f64,
    pub mi_bpcu: f64,
    pub ber: f64,
    pub n_bits: usize,
    pub seed: u64,
    /// Empty for clean points; otherwise the error or warning text.
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
}

pub const RATE_COLUMNS: &[&str] = &[
    "mode",
    "pilot_rate",
    "n_antennas",
    "doppler_hz",
    "speed_kmh",
    "snr_db",
    "rate",
    "mi_bpcu",
    "ber",
    "n_bits",
    "seed",
    "flag",
];

impl RateReport {
    /// Rows as CSV with a header line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| SimError::Config(e.to_string()))?;
        }
        if self.rows.is_empty() {
            w.write_record(RATE_COLUMNS)
                .map_err(|e| SimError::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<RateRow>, _>>()
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(Self { rows })
    }

    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| !r.flag.is_empty()).count()
    }

    /// Rows for one mode and pilot rate, in speed order.
    pub fn curve(&self, mode: DuplexMode, pilot_rate: f64) -> Vec<&RateRow> {
        let mut v: Vec<&RateRow> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode && (r.pilot_rate - pilot_rate).abs() < 1e-12)
            .collect();
        v.sort_by(|a, b| a.speed_kmh.total_cmp(&b.speed_kmh));
        v
    }
}

/// First speed at which `mi_bpcu` falls below `threshold`, linearly
/// interpolated between grid points. `None` if the curve never drops.
pub fn crossover_speed(curve: &[&RateRow], threshold: f64) -> Option<f64> {
    let mut prev: Option<&RateRow> = None;
    for r in curve {
        if r.mi_bpcu < threshold {
            return Some(match prev {
                Some(p) if p.mi_bpcu > r.mi_bpcu => {
                    let f = (p.mi_bpcu - threshold) / (p.mi_bpcu - r.mi_bpcu);
                    p.speed_kmh + f * (r.speed_kmh - p.speed_kmh)
                }
                _ => r.speed_kmh,
            });
        }
        prev = Some(r);
    }
    None
}

struct Point {
    mode: DuplexMode,
    pilot_rate: f64,
    n_antennas: usize,
    snr_db: f64,
    speed_kmh: f64,
}

/// Evaluates every grid point. Realization `r` of every point uses the
/// channel seed `derive_seed(master_seed, r)`, so points differ only in the
/// swept parameters. Failing points become flagged rows.
pub fn sweep(base: &LinkConfig, grid: &SweepGrid, master_seed: u64, exec: Execution) -> RateReport {
    let mut points = Vec::with_capacity(grid.n_points());
    for &mode in &grid.modes {
        for &pilot_rate in &grid.pilot_rates {
            for &n_antennas in &grid.n_antennas {
                for &snr_db in &grid.snr_db {
                    for &speed_kmh in &grid.speeds_kmh {
                        points.push(Point {
                            mode,
                            pilot_rate,
                            n_antennas,
                            snr_db,
                            speed_kmh,
                        });
                    }
                }
            }
        }
    }
    let seeds = grid.seeds.max(1);
    let doppler = |p: &Point| doppler_from_speed(p.speed_kmh, base.ofdm.carrier_hz) * grid.doppler_scale;
    let link = |p: &Point| {
        let mut cfg = base.clone();
        cfg.frame.mode = p.mode;
        cfg.frame.pilot_rate = p.pilot_rate;
        cfg.channel.n_antennas = p.n_antennas;
        cfg.channel.doppler_hz = doppler(p);
        cfg.snr_db = p.snr_db;
        cfg
    };
    let results = exec.map_range(points.len() * seeds, |task| {
        let p = &points[task / seeds];
        simulate_link(&link(p), derive_seed(master_seed, (task % seeds) as u64), grid.n_frames)
    });

    let rows = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = RateRow {
                mode: p.mode,
                pilot_rate: p.pilot_rate,
                n_antennas: p.n_antennas,
                doppler_hz: doppler(p),
                speed_kmh: p.speed_kmh,
                snr_db: p.snr_db,
                rate: 0.0,
                mi_bpcu: 0.0,
                ber: 0.0,
                n_bits: 0,
                seed: master_seed,
                flag: String::new(),
            };
            let mut ber_weighted = 0.0;
            for res in &results[i * seeds..(i + 1) * seeds] {
                match res {
                    Ok((est, warnings)) => {
                        row.rate += est.rate / seeds as f64;
                        row.mi_bpcu += est.mi_bpcu / seeds as f64;
                        ber_weighted += est.ber * est.n_bits as f64;
                        row.n_bits += est.n_bits;
                        if row.flag.is_empty() {
                            if let Some(w) = warnings.first() {
                                row.flag = format!("warning: {w}");
                            }
                        }
                    }
                    Err(e) => {
                        row.flag = format!("error: {e}");
                        row.rate = f64::NAN;
                        row.mi_bpcu = f64::NAN;
                        row.ber = f64::NAN;
                        return row;
                    }
                }
            }
            row.ber = if row.n_bits > 0 {
                ber_weighted / row.n_bits as f64
            } else {
                0.0
            };
            row
        })
        .collect();
    RateReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_endpoints() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mi_of_perfect_and_random_decisions() {
        let tx = vec![0, 1, 1, 0, 1, 1, 0, 0];
        assert!((bicm_mi(&tx, &tx).unwrap() - 2.0).abs() < 1e-15);
        let flipped: Vec<u8> = tx.iter().map(|b| 1 - b).collect();
        assert!((bicm_mi(&tx, &flipped).unwrap() - 2.0).abs() < 1e-15);
        // Half the bits of each position wrong.
        let half = vec![1, 0, 0, 1, 1, 1, 0, 0];
        assert!(bicm_mi(&tx, &half).unwrap().abs() < 1e-15);
        assert!(bicm_mi(&tx, &tx[..4]).is_err());
        assert!(bicm_mi(&[], &[]).is_err());
    }

    fn row(speed: f64, mi: f64) -> RateRow {
        RateRow {
            mode: DuplexMode::Tdd,
            pilot_rate: 1.0,
            n_antennas: 1,
            doppler_hz: 0.0,
            speed_kmh: speed,
            snr_db: 0.0,
            rate: 0.0,
            mi_bpcu: mi,
            ber: 0.0,
            n_bits: 0,
            seed: 0,
            flag: String::new(),
        }
    }

    #[test]
    fn crossover_interpolates() {
        let rows = [row(0.0, 1.8), row(100.0, 1.4), row(200.0, 0.6)];
        let refs: Vec<&RateRow> = rows.iter().collect();
        assert!((crossover_speed(&refs, 1.0).unwrap() - 150.0).abs() < 1e-9);
        assert_eq!(crossover_speed(&refs[..2], 1.0), None);
        assert_eq!(crossover_speed(&refs[2..], 1.0), Some(200.0));
    }

    #[test]
    fn csv_round_trip() {
        let report = RateReport {
            rows: vec![row(10.0, 1.5), row(20.0, 0.25)],
        };
        let text = report.to_csv().unwrap();
        assert!(text.starts_with(&RATE_COLUMNS.join(",")));
        assert_eq!(RateReport::from_csv(&text).unwrap(), report);
    }
}
