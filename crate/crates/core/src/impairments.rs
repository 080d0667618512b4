//! Hardware impairments at the terminal: carrier frequency offset, transmit to
//! receive leakage, and ADC quantization, together with their closed-form
//! SIR and SQNR laws.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::exec::Execution;
use crate::ofdm::{pulse_response, Cplx, Modem, OfdmConfig};
use crate::rng::{derive_seed, stream_rng, Stream};

/// One leakage path: power ratio and delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakagePath {
    pub rho: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpairmentConfig {
    pub cfo_hz: f64,
    /// Coupler, antenna, load and local-scatterer paths.
    pub leakage: Vec<LeakagePath>,
    /// `None` models an ideal converter.
    pub adc_bits: Option<u32>,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Scale base-station power by `M^-eps1` per antenna and terminal power
    /// by `M^-eps2` in frame simulations.
    pub power_scaling: bool,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            cfo_hz: 0.0,
            leakage: vec![
                LeakagePath {
                    rho: 0.0,
                    delay_s: 0.0
                };
                4
            ],
            adc_bits: None,
            tx_power_w: 1.0,
            rx_power_w: 1.0,
            eps1: 1.5,
            eps2: 0.5,
            power_scaling: false,
        }
    }
}

impl ImpairmentConfig {
    /// Worst-case constructive sum of the path ratios.
    pub fn total_leakage(&self) -> f64 {
        self.leakage.iter().map(|p| p.rho).sum()
    }

    /// `P_tx / P_rx`.
    pub fn power_gap(&self) -> f64 {
        self.tx_power_w / self.rx_power_w
    }

    pub fn adc_levels(&self) -> Option<f64> {
        self.adc_bits.map(|b| 2f64.powi(b as i32))
    }

    /// True if any impairment acts on the received samples.
    pub fn is_active(&self) -> bool {
        self.cfo_hz != 0.0 || self.total_leakage() > 0.0 || self.adc_bits.is_some()
    }

    /// Every violated constraint, with `cfg` the numerology the terminal
    /// receives on.
    pub fn violations(&self, cfg: &OfdmConfig) -> Vec<String> {
        let mut out = Vec::new();
        for (i, p) in self.leakage.iter().enumerate() {
            if !(p.rho >= 0.0) || !p.rho.is_finite() {
                out.push(format!("impairments.leakage[{i}].rho = {} must be non-negative", p.rho));
            }
            if !(p.delay_s >= 0.0) {
                out.push(format!("impairments.leakage[{i}].delay_s = {} must be non-negative", p.delay_s));
            } else if delay_samples(p.delay_s, cfg) > cfg.cp_samples {
                out.push(format!(
                    "impairments.leakage[{i}].delay_s = {} exceeds the cyclic prefix of {} s (orthogonality condition)",
                    p.delay_s,
                    cfg.cp_s()
                ));
            }
        }
        if let Some(b) = self.adc_bits {
            if b == 0 || b > 24 {
                out.push(format!("impairments.adc_bits = {b} must lie in 1..=24"));
            }
        }
        if !(self.rx_power_w > 0.0) {
            out.push("impairments.rx_power_w must be positive".into());
        }
        if !(self.tx_power_w >= 0.0) {
            out.push("impairments.tx_power_w must be non-negative".into());
        }
        if !self.cfo_hz.is_finite() {
            out.push("impairments.cfo_hz must be finite".into());
        }
        out
    }
}

fn delay_samples(delay_s: f64, cfg: &OfdmConfig) -> usize {
    (delay_s * cfg.bandwidth_hz).round() as usize
}

/// Rotates sample `n` by `exp(j 2 pi f_off (t0 + n / B))`.
pub fn apply_cfo(samples: &[Cplx], f_off_hz: f64, t0_s: f64, cfg: &OfdmConfig) -> Vec<Cplx> {
    if f_off_hz == 0.0 {
        return samples.to_vec();
    }
    let ts = cfg.sample_period_s();
    samples
        .iter()
        .enumerate()
        .map(|(n, x)| x * Cplx::from_polar(1.0, 2.0 * PI * f_off_hz * (t0_s + n as f64 * ts)))
        .collect()
}

/// Sum of the leakage paths applied to the terminal's own transmit block.
/// Delays are rounded to whole samples and must not exceed the CP.
pub fn loopback(ul_tx: &[Cplx], imp: &ImpairmentConfig, cfg: &OfdmConfig) -> Result<Vec<Cplx>> {
    for p in &imp.leakage {
        let d = delay_samples(p.delay_s, cfg);
        if d > cfg.cp_samples {
            return Err(SimError::Orthogonality {
                delay_samples: d,
                cp_samples: cfg.cp_samples,
            });
        }
    }
    Ok(loopback_unchecked(ul_tx, imp, cfg))
}

/// [`loopback`] without the CP check. Samples before the block start are
/// taken as zero.
pub fn loopback_unchecked(ul_tx: &[Cplx], imp: &ImpairmentConfig, cfg: &OfdmConfig) -> Vec<Cplx> {
    let mut out = vec![Cplx::new(0.0, 0.0); ul_tx.len()];
    for p in imp.leakage.iter().filter(|p| p.rho > 0.0) {
        let d = delay_samples(p.delay_s, cfg);
        let a = p.rho.sqrt();
        for n in d..ul_tx.len() {
            out[n] += ul_tx[n - d] * a;
        }
    }
    out
}

/// Uniform mid-rise quantizer with `2^bits` levels over `[-full_scale, full_scale]`
/// applied to I and Q separately; out-of-range values saturate.
pub fn quantize(samples: &[Cplx], adc_bits: u32, full_scale: f64) -> Vec<Cplx> {
    assert!(full_scale > 0.0, "full scale must be positive");
    let half = 2f64.powi(adc_bits as i32 - 1);
    let step = full_scale / half;
    let q = |x: f64| ((x / step).floor().clamp(-half, half - 1.0) + 0.5) * step;
    samples.iter().map(|s| Cplx::new(q(s.re), q(s.im))).collect()
}

/// Automatic gain control: the largest I/Q magnitude maps to full scale.
pub fn agc_full_scale(samples: &[Cplx]) -> f64 {
    samples
        .iter()
        .map(|s| s.re.abs().max(s.im.abs()))
        .fold(0.0, f64::max)
}

/// `1.5 N^2 / (1 + rho P_tx / P_rx)` for a full-range triangular-amplitude signal.
pub fn sqnr_analytic(imp: &ImpairmentConfig) -> f64 {
    let n = imp.adc_levels().unwrap_or(0.0);
    1.5 * n * n / (1.0 + imp.total_leakage() * imp.power_gap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStage {
    UplinkPilotData,
    DownlinkData,
}

/// SQNR with the leakage suppressed by the massive-MIMO power scaling.
pub fn sqnr_massive(imp: &ImpairmentConfig, n_antennas: usize, stage: LinkStage) -> f64 {
    let n = imp.adc_levels().unwrap_or(0.0);
    let m = n_antennas as f64;
    let exponent = match stage {
        LinkStage::UplinkPilotData => imp.eps1 - imp.eps2,
        LinkStage::DownlinkData => 2.0 - imp.eps1 + imp.eps2,
    };
    1.5 * n * n / (1.0 + imp.total_leakage() / m.powf(exponent) * imp.power_gap())
}

/// Average SIR on subcarrier `l` under a CFO, summing the leakage of every
/// other subcarrier. Returns `f64::INFINITY` for zero offset.
pub fn sir_analytic(f_off_hz: f64, subcarrier: usize, cfg: &OfdmConfig) -> Result<f64> {
    let others: Vec<usize> = (0..cfg.n_sub).filter(|&n| n != subcarrier).collect();
    sir_analytic_over(f_off_hz, subcarrier, &others, cfg)
}

/// [`sir_analytic`] restricted to the interferers in `interferers`.
pub fn sir_analytic_over(
    f_off_hz: f64,
    subcarrier: usize,
    interferers: &[usize],
    cfg: &OfdmConfig,
) -> Result<f64> {
    if subcarrier >= cfg.n_sub {
        return Err(SimError::SubcarrierRange {
            index: subcarrier,
            n_sub: cfg.n_sub,
        });
    }
    if f_off_hz == 0.0 {
        return Ok(f64::INFINITY);
    }
    let fs = cfg.subcarrier_spacing_hz();
    let desired = pulse_response(f_off_hz, cfg).norm_sqr();
    let interference: f64 = interferers
        .iter()
        .filter(|&&n| n != subcarrier)
        .map(|&n| {
            let k = n as f64 - subcarrier as f64;
            pulse_response(k * fs + f_off_hz, cfg).norm_sqr()
        })
        .sum();
    Ok(desired / interference)
}

/// Measures the SIR on `subcarrier` by passing random QPSK grids through
/// modulation, a frequency offset and demodulation. The desired part is the
/// response to the tone on `subcarrier` alone; the rest is interference.
pub fn measure_sir(
    f_off_hz: f64,
    subcarrier: usize,
    cfg: &OfdmConfig,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    let modem = Modem::new(*cfg)?;
    if subcarrier >= cfg.n_sub {
        return Err(SimError::SubcarrierRange {
            index: subcarrier,
            n_sub: cfg.n_sub,
        });
    }
    let parts = exec.map_range(trials, |t| -> Result<(f64, f64)> {
        let mut rng = stream_rng(derive_seed(seed, t as u64), Stream::Grid);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let grid: Vec<Cplx> = (0..cfg.n_sub)
            .map(|_| {
                Cplx::new(
                    if rng.random::<bool>() { s } else { -s },
                    if rng.random::<bool>() { s } else { -s },
                )
            })
            .collect();
        let mut tone = vec![Cplx::new(0.0, 0.0); cfg.n_sub];
        tone[subcarrier] = grid[subcarrier];
        let y_all = modem.demodulate(&apply_cfo(&modem.modulate(&grid)?, f_off_hz, 0.0, cfg))?;
        let y_one = modem.demodulate(&apply_cfo(&modem.modulate(&tone)?, f_off_hz, 0.0, cfg))?;
        let d = y_one[subcarrier];
        Ok((d.norm_sqr(), (y_all[subcarrier] - d).norm_sqr()))
    });
    let (mut sig, mut int) = (0.0, 0.0);
    for p in parts {
        let (a, b) = p?;
        sig += a;
        int += b;
    }
    Ok(if int == 0.0 { f64::INFINITY } else { sig / int })
}
