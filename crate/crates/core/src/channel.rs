//! Tapped-delay-line Rayleigh fading with Jakes Doppler evolution.
//!
//! Each tap of each antenna is an independent Gaussian-weighted sum of
//! sinusoids:
//!
//! ```text
//! h(t) = c * sum_s A_s exp(j 2 pi f_D cos(a_s) t),   A_s ~ CN(0, 2),  c^2 = 1 / (2 S (L+1))
//! ```
//!
//! Conditioned on the arrival angles the tap is exactly complex Gaussian with
//! variance 1/(L+1) at every instant, and its autocorrelation over the
//! ensemble is `J0(2 pi f_D dt) / (L+1)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::duplex::DuplexMode;
use crate::error::{Result, SimError};
use crate::ofdm::{Cplx, Modem, OfdmConfig};
use crate::rng::{stream_rng, Stream};

/// Scatterers per tap.
pub const SCATTERERS_PER_TAP: usize = 32;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModelConfig {
    /// L + 1 for channel order L.
    pub n_taps: usize,
    pub n_antennas: usize,
    pub doppler_hz: f64,
    pub coherence_bw_hz: f64,
    pub coherence_time_s: f64,
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        Self {
            n_taps: 11,
            n_antennas: 128,
            doppler_hz: 0.0,
            coherence_bw_hz: 120e3,
            coherence_time_s: 2e-3,
        }
    }
}

impl ChannelModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_taps == 0 {
            return Err(SimError::Config("channel.n_taps must be at least 1".into()));
        }
        if self.n_antennas == 0 {
            return Err(SimError::Config("channel.n_antennas must be at least 1".into()));
        }
        if !(self.doppler_hz.is_finite() && self.doppler_hz >= 0.0) {
            return Err(SimError::Config(format!(
                "channel.doppler_hz = {} must be non-negative",
                self.doppler_hz
            )));
        }
        if !(self.coherence_bw_hz > 0.0) {
            return Err(SimError::Config("channel.coherence_bw_hz must be positive".into()));
        }
        if !(self.coherence_time_s > 0.0) {
            return Err(SimError::Config("channel.coherence_time_s must be positive".into()));
        }
        Ok(())
    }

    pub fn tap_power(&self) -> f64 {
        1.0 / self.n_taps as f64
    }

    /// Coherence time in whole OFDM symbols of `cfg`.
    pub fn coherence_symbols(&self, cfg: &OfdmConfig) -> usize {
        (self.coherence_time_s / cfg.total_symbol_s()).floor() as usize
    }
}

/// Maximum Doppler shift for a terminal moving at `speed_kmh`.
pub fn doppler_from_speed(speed_kmh: f64, carrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

pub fn speed_from_doppler(doppler_hz: f64, carrier_hz: f64) -> f64 {
    doppler_hz * SPEED_OF_LIGHT / carrier_hz * 3.6
}

#[derive(Debug)]
struct TapProcess {
    weights: Vec<Cplx>,
    /// cos of the arrival angle; scaled by the Doppler at evaluation time.
    cos_aoa: Vec<f64>,
}

impl TapProcess {
    fn eval(&self, doppler_hz: f64, t: f64) -> Cplx {
        if doppler_hz == 0.0 || t == 0.0 {
            return self.weights.iter().sum();
        }
        let w = 2.0 * PI * doppler_hz * t;
        self.weights
            .iter()
            .zip(&self.cos_aoa)
            .map(|(a, c)| a * Cplx::from_polar(1.0, w * c))
            .sum()
    }
}

/// Channel state of all antennas at one instant.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    n_antennas: usize,
    n_taps: usize,
    time_s: f64,
    taps: Vec<Cplx>,
    processes: Arc<Vec<TapProcess>>,
}

/// Draws a realization at `t = 0`; deterministic in `seed`.
pub fn sample_tdl(model: &ChannelModelConfig, seed: u64) -> ChannelRealization {
    let mut rng = stream_rng(seed, Stream::Channel);
    let scale = (1.0 / (2.0 * SCATTERERS_PER_TAP as f64 * model.n_taps as f64)).sqrt();
    let processes: Vec<TapProcess> = (0..model.n_antennas * model.n_taps)
        .map(|_| {
            let mut weights = Vec::with_capacity(SCATTERERS_PER_TAP);
            let mut cos_aoa = Vec::with_capacity(SCATTERERS_PER_TAP);
            for _ in 0..SCATTERERS_PER_TAP {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                weights.push(Cplx::new(re, im) * scale);
                let aoa: f64 = rng.random::<f64>() * 2.0 * PI;
                cos_aoa.push(aoa.cos());
            }
            TapProcess { weights, cos_aoa }
        })
        .collect();
    let taps = processes.iter().map(|p| p.eval(0.0, 0.0)).collect();
    ChannelRealization {
        n_antennas: model.n_antennas,
        n_taps: model.n_taps,
        time_s: 0.0,
        taps,
        processes: Arc::new(processes),
    }
}

impl ChannelRealization {
    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn taps(&self, antenna: usize) -> &[Cplx] {
        &self.taps[antenna * self.n_taps..(antenna + 1) * self.n_taps]
    }

    /// Overrides the current tap values (the Jakes state is kept).
    pub fn set_taps(&mut self, antenna: usize, taps: &[Cplx]) {
        assert_eq!(taps.len(), self.n_taps);
        self.taps[antenna * self.n_taps..(antenna + 1) * self.n_taps].copy_from_slice(taps);
    }

    /// Realization advanced by `dt_s`.
    pub fn evolve(&self, dt_s: f64, model: &ChannelModelConfig) -> ChannelRealization {
        let mut next = self.clone();
        next.advance(dt_s, model);
        next
    }

    pub fn advance(&mut self, dt_s: f64, model: &ChannelModelConfig) {
        assert!(dt_s >= 0.0, "negative time step");
        self.set_time(self.time_s + dt_s, model);
    }

    /// Evaluates every tap at absolute time `t_s`.
    pub fn set_time(&mut self, t_s: f64, model: &ChannelModelConfig) {
        self.time_s = t_s;
        if model.doppler_hz == 0.0 {
            return;
        }
        for (tap, p) in self.taps.iter_mut().zip(self.processes.iter()) {
            *tap = p.eval(model.doppler_hz, t_s);
        }
    }

    /// Transfer function of every antenna over the full band of `modem`,
    /// indexed `[antenna][subcarrier]`.
    pub fn ctf_grid(&self, modem: &Modem) -> Vec<Vec<Cplx>> {
        (0..self.n_antennas)
            .map(|k| modem.transfer_function(self.taps(k)))
            .collect()
    }
}

/// Per-antenna transfer function at one subcarrier.
pub fn ctf(ch: &ChannelRealization, subcarrier: usize, cfg: &OfdmConfig) -> Result<Vec<Cplx>> {
    if subcarrier >= cfg.n_sub {
        return Err(SimError::SubcarrierRange {
            index: subcarrier,
            n_sub: cfg.n_sub,
        });
    }
    let n = cfg.n_sub as f64;
    Ok((0..ch.n_antennas)
        .map(|k| {
            ch.taps(k)
                .iter()
                .enumerate()
                .map(|(l, t)| t * Cplx::from_polar(1.0, -2.0 * PI * (subcarrier * l) as f64 / n))
                .sum()
        })
        .collect())
}

/// Normalized inner-product magnitude `|h1 . h2^H| / (|h1| |h2|)`.
pub fn correlation(h1: &[Cplx], h2: &[Cplx]) -> Result<f64> {
    let mut acc = CorrelationAccumulator::default();
    acc.add(h1, h2)?;
    acc.value()
}

/// Pools the correlation numerator and energies over many vector pairs, so
/// the result is the correlation of the concatenated vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CorrelationAccumulator {
    cross: Cplx,
    energy1: f64,
    energy2: f64,
}

impl CorrelationAccumulator {
    pub fn add(&mut self, h1: &[Cplx], h2: &[Cplx]) -> Result<()> {
        if h1.len() != h2.len() || h1.is_empty() {
            return Err(SimError::Domain(format!(
                "correlation needs equal non-empty lengths, got {} and {}",
                h1.len(),
                h2.len()
            )));
        }
        for (a, b) in h1.iter().zip(h2) {
            self.cross += a * b.conj();
            self.energy1 += a.norm_sqr();
            self.energy2 += b.norm_sqr();
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CorrelationAccumulator) {
        self.cross += other.cross;
        self.energy1 += other.energy1;
        self.energy2 += other.energy2;
    }

    pub fn value(&self) -> Result<f64> {
        if self.energy1 == 0.0 || self.energy2 == 0.0 {
            return Err(SimError::Domain("correlation of a zero-norm vector".into()));
        }
        Ok((self.cross.norm() / (self.energy1 * self.energy2).sqrt()).min(1.0))
    }
}

/// Bessel function of the first kind, order zero, from its integral form
/// `(1/pi) int_0^pi cos(x sin t) dt`. The integrand is smooth and periodic,
/// so the trapezoid rule converges geometrically.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / n as f64;
    let inner: f64 = (1..n).map(|i| (x * (i as f64 * h).sin()).cos()).sum();
    (inner + 1.0) / n as f64
}

/// Normalized tap autocorrelation of the fading process at lag `dt_s`.
pub fn temporal_correlation(doppler_hz: f64, dt_s: f64) -> f64 {
    bessel_j0(2.0 * PI * doppler_hz * dt_s)
}

/// Closed-form frequency correlation of a uniform-power TDL with `n_taps`
/// taps between subcarriers `delta` apart out of `n_sub`.
pub fn frequency_correlation(n_taps: usize, n_sub: usize, delta: usize) -> f64 {
    let x = PI * delta as f64 / n_sub as f64;
    if x.sin().abs() < 1e-15 {
        return 1.0;
    }
    ((n_taps as f64 * x).sin() / (n_taps as f64 * x.sin())).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceVerdict {
    pub mode: DuplexMode,
    pub feasible: bool,
    /// `T_c / 2 - N_sub / B`
    pub time_margin_s: f64,
    /// `N_sub / B - k / B_c`, with k = 3 for IFDD and 1 for TDD.
    pub bandwidth_margin_s: f64,
}

/// Checks that symbols fit twice into the coherence time and that the
/// coherence bandwidth spans the subcarriers one estimate has to cover.
pub fn coherence_check(cfg: &OfdmConfig, model: &ChannelModelConfig, mode: DuplexMode) -> CoherenceVerdict {
    let symbol = cfg.n_sub as f64 / cfg.bandwidth_hz;
    let span = match mode {
        DuplexMode::Ifdd => 3.0,
        DuplexMode::Tdd => 1.0,
    };
    let time_margin_s = model.coherence_time_s / 2.0 - symbol;
    let bandwidth_margin_s = symbol - span / model.coherence_bw_hz;
    CoherenceVerdict {
        mode,
        feasible: time_margin_s >= 0.0 && bandwidth_margin_s >= 0.0,
        time_margin_s,
        bandwidth_margin_s,
    }
}
