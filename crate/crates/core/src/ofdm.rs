//! OFDM numerology, cyclic-prefix modulation and the subcarrier pulse response.
//!
//! Both transform directions use the unitary DFT convention, so the energy of
//! a time-domain block (without CP) equals the energy of its subcarrier grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type Cplx = Complex<f64>;

/// Multicarrier numerology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmConfig {
    pub bandwidth_hz: f64,
    pub n_sub: usize,
    pub cp_samples: usize,
    pub carrier_hz: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 20e6,
            n_sub: 1024,
            cp_samples: 128,
            carrier_hz: 2.1e9,
        }
    }
}

impl OfdmConfig {
    pub fn new(bandwidth_hz: f64, n_sub: usize, cp_samples: usize, carrier_hz: f64) -> Result<Self> {
        let cfg = Self {
            bandwidth_hz,
            n_sub,
            cp_samples,
            carrier_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sub < 3 {
            return Err(SimError::Config(format!(
                "ofdm.n_sub = {} is below the minimum of 3",
                self.n_sub
            )));
        }
        if self.cp_samples >= self.n_sub {
            return Err(SimError::Config(format!(
                "ofdm.cp_samples = {} must be smaller than ofdm.n_sub = {}",
                self.cp_samples, self.n_sub
            )));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(SimError::Config(format!(
                "ofdm.bandwidth_hz = {} must be positive",
                self.bandwidth_hz
            )));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(SimError::Config(format!(
                "ofdm.carrier_hz = {} must be positive",
                self.carrier_hz
            )));
        }
        Ok(())
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_sub as f64
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn useful_symbol_s(&self) -> f64 {
        self.n_sub as f64 / self.bandwidth_hz
    }

    /// CP plus useful part.
    pub fn total_symbol_s(&self) -> f64 {
        self.block_len() as f64 / self.bandwidth_hz
    }

    pub fn cp_s(&self) -> f64 {
        self.cp_samples as f64 / self.bandwidth_hz
    }

    pub fn block_len(&self) -> usize {
        self.n_sub + self.cp_samples
    }

    /// Twice the subcarriers and CP at the same bandwidth (IFDD numerology).
    pub fn doubled(&self) -> Self {
        Self {
            n_sub: 2 * self.n_sub,
            cp_samples: 2 * self.cp_samples,
            ..*self
        }
    }
}

/// One OFDM symbol worth of subcarrier values.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub symbol: usize,
    pub values: Vec<Cplx>,
}

impl SymbolGrid {
    pub fn new(symbol: usize, values: Vec<Cplx>, cfg: &OfdmConfig) -> Result<Self> {
        check_len("grid", values.len(), cfg.n_sub)?;
        Ok(Self { symbol, values })
    }

    pub fn zeros(symbol: usize, cfg: &OfdmConfig) -> Self {
        Self {
            symbol,
            values: vec![Cplx::new(0.0, 0.0); cfg.n_sub],
        }
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(SimError::Config(format!(
            "{what} length {got} does not match expected {want}"
        )));
    }
    Ok(())
}

/// Modulator/demodulator with cached FFT plans for one numerology.
#[derive(Clone)]
pub struct Modem {
    cfg: OfdmConfig,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem").field("cfg", &self.cfg).finish()
    }
}

impl Modem {
    pub fn new(cfg: OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            fwd: planner.plan_fft_forward(cfg.n_sub),
            inv: planner.plan_fft_inverse(cfg.n_sub),
            scale: 1.0 / (cfg.n_sub as f64).sqrt(),
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    /// Unitary inverse DFT of `grid` with the cyclic prefix prepended.
    pub fn modulate(&self, grid: &[Cplx]) -> Result<Vec<Cplx>> {
        check_len("grid", grid.len(), self.cfg.n_sub)?;
        let n = self.cfg.n_sub;
        let cp = self.cfg.cp_samples;
        let mut core = grid.to_vec();
        self.inv.process(&mut core);
        let mut out = Vec::with_capacity(n + cp);
        out.extend(core[n - cp..].iter().map(|v| v * self.scale));
        out.extend(core.iter().map(|v| v * self.scale));
        Ok(out)
    }

    /// Drops the CP and applies the unitary forward DFT.
    pub fn demodulate(&self, samples: &[Cplx]) -> Result<Vec<Cplx>> {
        self.demodulate_at(samples, self.cfg.cp_samples)
    }

    /// Demodulates the `n_sub` samples starting at `start`; `start = cp_samples`
    /// is the nominal timing, smaller values advance the FFT window into the CP.
    pub fn demodulate_at(&self, samples: &[Cplx], start: usize) -> Result<Vec<Cplx>> {
        check_len("sample block", samples.len(), self.cfg.block_len())?;
        if start > self.cfg.cp_samples {
            return Err(SimError::Config(format!(
                "timing offset {start} lies beyond the cyclic prefix ({})",
                self.cfg.cp_samples
            )));
        }
        let mut buf: Vec<Cplx> = samples[start..start + self.cfg.n_sub].to_vec();
        self.fwd.process(&mut buf);
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
        Ok(buf)
    }

    /// Non-unitary forward DFT of `taps` zero-padded to `n_sub`:
    /// `H(l) = sum_k taps[k] e^{-j2 pi l k / N}`.
    pub fn transfer_function(&self, taps: &[Cplx]) -> Vec<Cplx> {
        let mut buf = vec![Cplx::new(0.0, 0.0); self.cfg.n_sub];
        for (i, t) in taps.iter().enumerate() {
            buf[i % self.cfg.n_sub] += t;
        }
        self.fwd.process(&mut buf);
        buf
    }
}

pub fn modulate(grid: &[Cplx], cfg: &OfdmConfig) -> Result<Vec<Cplx>> {
    Modem::new(*cfg)?.modulate(grid)
}

pub fn demodulate(samples: &[Cplx], cfg: &OfdmConfig) -> Result<Vec<Cplx>> {
    Modem::new(*cfg)?.demodulate(samples)
}

/// Frequency response of one subcarrier under the rectangular DFT window
/// (Dirichlet kernel): `G(f) = 1/N sum_{n<N} e^{j2 pi f n / B}`.
pub fn pulse_response(f_hz: f64, cfg: &OfdmConfig) -> Cplx {
    let n = cfg.n_sub as f64;
    let x = f_hz / cfg.bandwidth_hz;
    let phase = Cplx::from_polar(1.0, PI * x * (n - 1.0));
    let den = (PI * x).sin();
    let ratio = if den.abs() < 1e-12 {
        n * (PI * x * n).cos() / (PI * x).cos()
    } else {
        (PI * x * n).sin() / den
    };
    phase * (ratio / n)
}
