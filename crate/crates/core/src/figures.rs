//! Figure generators. Each writes a CSV whose `#` header records the
//! resolved configuration and seed.

use serde::{Deserialize, Serialize};

use crate::channel::{
    frequency_correlation, sample_tdl, temporal_correlation, ChannelModelConfig, CorrelationAccumulator,
};
use crate::config::ExperimentConfig;
use crate::duplex::{make_allocation, DuplexMode};
use crate::error::{Result, SimError};
use crate::evaluation::{sweep, SweepGrid, RATE_COLUMNS};
use crate::exec::Execution;
use crate::impairments::{sir_analytic, sqnr_massive, ImpairmentConfig, LeakagePath, LinkStage};
use crate::ofdm::{Modem, OfdmConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Figure {
    Fig3,
    Fig5,
    Fig6,
    Fig11,
    Fig12,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig3, Figure::Fig5, Figure::Fig6, Figure::Fig11, Figure::Fig12];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig11 => "fig11",
            Figure::Fig12 => "fig12",
        }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Figure::Fig3 => &["n_sub", "channel_order", "delta_h", "oracle"],
            Figure::Fig5 => &["cfo_norm", "sir_db"],
            Figure::Fig6 => &["n_antennas", "sqnr_db", "scenario"],
            Figure::Fig11 | Figure::Fig12 => RATE_COLUMNS,
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Figure::Fig3 => "channel correlation between adjacent subcarriers vs number of subcarriers",
            Figure::Fig5 => "signal-to-interference ratio vs normalized carrier frequency offset",
            Figure::Fig6 => "uplink SQNR vs number of base-station antennas",
            Figure::Fig11 => "achievable rate vs pilot rate at several speeds",
            Figure::Fig12 => "achievable rate vs speed",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                SimError::Config(format!(
                    "unknown figure `{s}` (expected one of fig3, fig5, fig6, fig11, fig12)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig3Config {
    pub n_sub: Vec<usize>,
    /// Channel orders L; the channel has L + 1 taps.
    pub channel_orders: Vec<usize>,
    pub realizations: usize,
    pub n_antennas: usize,
    pub doppler_hz: f64,
    /// Time between the uplink estimate and the downlink use.
    pub dt_s: f64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            n_sub: vec![64, 128, 256, 512, 1024, 2048],
            channel_orders: vec![2, 10, 50],
            realizations: 1000,
            n_antennas: 1,
            doppler_hz: 0.0,
            dt_s: 0.0,
        }
    }
}

impl Fig3Config {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_sub.is_empty() || self.n_sub.iter().any(|&n| n < 3) {
            v.push("fig3.n_sub must be non-empty with every entry at least 3".into());
        }
        if self.channel_orders.is_empty() {
            v.push("fig3.channel_orders is empty".into());
        }
        if self.realizations == 0 {
            v.push("fig3.realizations must be at least 1".into());
        }
        if self.n_antennas == 0 {
            v.push("fig3.n_antennas must be at least 1".into());
        }
        if !(self.doppler_hz >= 0.0) || !(self.dt_s >= 0.0) {
            v.push("fig3.doppler_hz and fig3.dt_s must be non-negative".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig5Config {
    pub n_sub: usize,
    pub subcarrier: usize,
    /// Offsets in units of the subcarrier spacing, log-spaced.
    pub cfo_min: f64,
    pub cfo_max: f64,
    pub points: usize,
}

impl Default for Fig5Config {
    fn default() -> Self {
        Self {
            n_sub: 1024,
            subcarrier: 2,
            cfo_min: 1e-3,
            cfo_max: 0.5,
            points: 40,
        }
    }
}

impl Fig5Config {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.subcarrier >= self.n_sub {
            v.push(format!(
                "fig5.subcarrier = {} is outside 0..{}",
                self.subcarrier, self.n_sub
            ));
        }
        if !(self.cfo_min > 0.0 && self.cfo_max >= self.cfo_min) {
            v.push("fig5 needs 0 < cfo_min <= cfo_max".into());
        }
        if self.points == 0 {
            v.push("fig5.points must be at least 1".into());
        }
        v
    }

    pub fn offsets(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.cfo_min];
        }
        let (a, b) = (self.cfo_min.ln(), self.cfo_max.ln());
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig6Config {
    pub adc_bits: u32,
    pub power_gap_db: f64,
    /// One curve per total leakage ratio.
    pub rho_db: Vec<f64>,
    pub n_antennas: Vec<usize>,
}

impl Default for Fig6Config {
    fn default() -> Self {
        Self {
            adc_bits: 8,
            power_gap_db: 70.0,
            rho_db: vec![-10.0, -30.0],
            n_antennas: (0..=10).map(|k| 1usize << k).collect(),
        }
    }
}

impl Fig6Config {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.adc_bits == 0 || self.adc_bits > 24 {
            v.push(format!("fig6.adc_bits = {} must lie in 1..=24", self.adc_bits));
        }
        if self.rho_db.is_empty() || self.n_antennas.is_empty() {
            v.push("fig6.rho_db and fig6.n_antennas must be non-empty".into());
        }
        if self.n_antennas.contains(&0) {
            v.push("fig6.n_antennas contains 0".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateFigureConfig {
    pub speeds_kmh: Vec<f64>,
    pub pilot_rates: Vec<f64>,
}

impl Default for RateFigureConfig {
    fn default() -> Self {
        Self::fig11()
    }
}

impl RateFigureConfig {
    pub fn fig11() -> Self {
        Self {
            speeds_kmh: vec![10.0, 45.0, 100.0, 1200.0],
            pilot_rates: vec![0.125, 1.0 / 3.0, 0.5, 1.0],
        }
    }

    pub fn fig12() -> Self {
        Self {
            speeds_kmh: (0..=16).map(|i| 100.0 * i as f64).collect(),
            pilot_rates: vec![1.0 / 3.0, 1.0],
        }
    }

    pub fn violations(&self, section: &str) -> Vec<String> {
        let grid = SweepGrid {
            speeds_kmh: self.speeds_kmh.clone(),
            pilot_rates: self.pilot_rates.clone(),
            ..SweepGrid::default()
        };
        grid.violations(section)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOutput {
    pub figure: Figure,
    pub csv: String,
    pub rows: usize,
    pub flagged: usize,
}

/// Commented header: figure, seed, derivation rule and the full config.
pub fn csv_header(figure: Figure, cfg: &ExperimentConfig) -> Result<String> {
    let mut s = format!(
        "# figure: {} ({})\n# seed: {}\n# seed derivation: realization r uses splitmix64 counter derivation derive_seed(seed, r)\n# config:\n",
        figure.name(),
        figure.description(),
        cfg.seed
    );
    for line in cfg.to_toml_string()?.lines() {
        if line.is_empty() {
            s.push_str("#\n");
        } else {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    Ok(s)
}

/// Runs one figure and renders its CSV.
pub fn run_figure(figure: Figure, cfg: &ExperimentConfig, exec: Execution) -> Result<FigureOutput> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(SimError::Config(violations.join("; ")));
    }
    let mut csv = csv_header(figure, cfg)?;
    let (body, rows, flagged) = match figure {
        Figure::Fig3 => table(figure, fig3_rows(cfg, exec)?),
        Figure::Fig5 => table(figure, fig5_rows(cfg)?),
        Figure::Fig6 => table(figure, fig6_rows(cfg)),
        Figure::Fig11 | Figure::Fig12 => {
            let fc = if figure == Figure::Fig11 { &cfg.fig11 } else { &cfg.fig12 };
            let report = rate_figure(cfg, fc, exec);
            (report.to_csv()?, report.rows.len(), report.flagged())
        }
    };
    csv.push_str(&body);
    Ok(FigureOutput {
        figure,
        csv,
        rows,
        flagged,
    })
}

/// Runs the `[sweep]` grid of `cfg` and renders it with the rate schema.
pub fn run_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<(String, usize, usize)> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(SimError::Config(violations.join("; ")));
    }
    let mut csv = format!(
        "# sweep ({} points)\n# seed: {}\n# seed derivation: realization r uses splitmix64 counter derivation derive_seed(seed, r)\n# config:\n",
        cfg.sweep.n_points(),
        cfg.seed
    );
    for line in cfg.to_toml_string()?.lines() {
        csv.push_str(if line.is_empty() { "#" } else { "# " });
        csv.push_str(line);
        csv.push('\n');
    }
    let report = sweep(&cfg.link_config(cfg.frame.mode), &cfg.sweep, cfg.seed, exec);
    csv.push_str(&report.to_csv()?);
    Ok((csv, report.rows.len(), report.flagged()))
}

fn table(figure: Figure, rows: Vec<Vec<String>>) -> (String, usize, usize) {
    let mut s = figure.columns().join(",");
    s.push('\n');
    for r in &rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    (s, rows.len(), 0)
}

/// One adjacent-subcarrier correlation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPoint {
    pub n_sub: usize,
    pub channel_order: usize,
    pub delta_h: f64,
    pub oracle: f64,
}

/// Correlation between each uplink subcarrier's channel and its downlink
/// neighbours `dt_s` later, pooled over realizations, antennas and pairs.
pub fn adjacent_correlation(cfg: &Fig3Config, bandwidth_hz: f64, seed: u64, exec: Execution) -> Result<Vec<CorrelationPoint>> {
    let mut out = Vec::new();
    for &order in &cfg.channel_orders {
        let model = ChannelModelConfig {
            n_taps: order + 1,
            n_antennas: cfg.n_antennas,
            doppler_hz: cfg.doppler_hz,
            ..Default::default()
        };
        let modems = cfg
            .n_sub
            .iter()
            .map(|&n| Modem::new(OfdmConfig::new(bandwidth_hz, n, 0, 1.0)?))
            .collect::<Result<Vec<_>>>()?;
        let allocs = cfg
            .n_sub
            .iter()
            .map(|&n| make_allocation(n))
            .collect::<Result<Vec<_>>>()?;
        let parts = exec.map_range(cfg.realizations, |r| -> Result<Vec<CorrelationAccumulator>> {
            let ch = sample_tdl(&model, derive_seed(seed, r as u64));
            let later = ch.evolve(cfg.dt_s, &model);
            let mut accs = vec![CorrelationAccumulator::default(); modems.len()];
            for ((modem, alloc), acc) in modems.iter().zip(&allocs).zip(accs.iter_mut()) {
                let mut h1 = Vec::new();
                let mut h2 = Vec::new();
                for k in 0..model.n_antennas {
                    let a = modem.transfer_function(ch.taps(k));
                    let b = modem.transfer_function(later.taps(k));
                    for i in 0..alloc.uplink().len() {
                        let u = alloc.uplink()[i];
                        let (d0, d1) = alloc.adjacent(i);
                        // The two neighbours carry opposite linear phases;
                        // conjugate the lower pair so pooling keeps |cross|.
                        h1.extend([a[u].conj(), a[u]]);
                        h2.extend([b[d0].conj(), b[d1]]);
                    }
                }
                acc.add(&h1, &h2)?;
            }
            Ok(accs)
        });
        let mut total = vec![CorrelationAccumulator::default(); modems.len()];
        for p in parts {
            for (t, a) in total.iter_mut().zip(p?) {
                t.merge(&a);
            }
        }
        let time = temporal_correlation(cfg.doppler_hz, cfg.dt_s).abs();
        for (i, &n) in cfg.n_sub.iter().enumerate() {
            out.push(CorrelationPoint {
                n_sub: n,
                channel_order: order,
                delta_h: total[i].value()?,
                oracle: frequency_correlation(order + 1, n, 1) * time,
            });
        }
    }
    Ok(out)
}

fn fig3_rows(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<Vec<String>>> {
    Ok(adjacent_correlation(&cfg.fig3, cfg.ofdm.bandwidth_hz, cfg.seed, exec)?
        .into_iter()
        .map(|p| {
            vec![
                p.n_sub.to_string(),
                p.channel_order.to_string(),
                p.delta_h.to_string(),
                p.oracle.to_string(),
            ]
        })
        .collect())
}

fn fig5_rows(cfg: &ExperimentConfig) -> Result<Vec<Vec<String>>> {
    let f5 = &cfg.fig5;
    let num = OfdmConfig {
        n_sub: f5.n_sub,
        ..cfg.ofdm
    };
    f5.offsets()
        .into_iter()
        .map(|x| {
            let sir = sir_analytic(x * num.subcarrier_spacing_hz(), f5.subcarrier, &num)?;
            Ok(vec![x.to_string(), crate::db(sir).to_string()])
        })
        .collect()
}

fn fig6_rows(cfg: &ExperimentConfig) -> Vec<Vec<String>> {
    let f6 = &cfg.fig6;
    let mut rows = Vec::new();
    for &rho_db in &f6.rho_db {
        let imp = ImpairmentConfig {
            leakage: vec![LeakagePath {
                rho: crate::from_db(rho_db),
                delay_s: 0.0,
            }],
            adc_bits: Some(f6.adc_bits),
            tx_power_w: crate::from_db(f6.power_gap_db),
            rx_power_w: 1.0,
            ..cfg.impairments.clone()
        };
        for &m in &f6.n_antennas {
            let s = sqnr_massive(&imp, m, LinkStage::UplinkPilotData);
            rows.push(vec![
                m.to_string(),
                crate::db(s).to_string(),
                format!("rho_{rho_db}dB"),
            ]);
        }
    }
    rows
}

fn rate_figure(cfg: &ExperimentConfig, fc: &RateFigureConfig, exec: Execution) -> crate::evaluation::RateReport {
    let grid = SweepGrid {
        modes: vec![DuplexMode::Tdd, DuplexMode::Ifdd],
        pilot_rates: fc.pilot_rates.clone(),
        n_antennas: vec![cfg.channel.n_antennas],
        speeds_kmh: fc.speeds_kmh.clone(),
        snr_db: vec![cfg.sim.snr_db],
        ..cfg.sweep.clone()
    };
    sweep(&cfg.link_config(DuplexMode::Tdd), &grid, cfg.seed, exec)
}
