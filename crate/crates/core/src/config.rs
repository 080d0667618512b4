//! Experiment configuration: TOML sections, validation and overrides.

use serde::{Deserialize, Serialize};

use crate::channel::{coherence_check, ChannelModelConfig};
use crate::duplex::{DuplexMode, FrameConfig, IfddPilotSchedule, LinkConfig};
use crate::error::{Result, SimError};
use crate::evaluation::SweepGrid;
use crate::figures::{Fig3Config, Fig5Config, Fig6Config, RateFigureConfig};
use crate::impairments::ImpairmentConfig;
use crate::ofdm::OfdmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub snr_db: f64,
    pub ifdd_pilots: IfddPilotSchedule,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            snr_db: 3.0,
            ifdd_pilots: IfddPilotSchedule::EverySymbol,
        }
    }
}

/// Full experiment description. Every section may be omitted and falls back
/// to the reference system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub ofdm: OfdmConfig,
    pub channel: ChannelModelConfig,
    pub impairments: ImpairmentConfig,
    pub frame: FrameConfig,
    pub sim: SimConfig,
    pub sweep: SweepGrid,
    pub fig3: Fig3Config,
    pub fig5: Fig5Config,
    pub fig6: Fig6Config,
    pub fig11: RateFigureConfig,
    pub fig12: RateFigureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            ofdm: OfdmConfig::default(),
            channel: ChannelModelConfig::default(),
            impairments: ImpairmentConfig::default(),
            frame: FrameConfig::default(),
            sim: SimConfig::default(),
            sweep: SweepGrid::default(),
            fig3: Fig3Config::default(),
            fig5: Fig5Config::default(),
            fig6: Fig6Config::default(),
            fig11: RateFigureConfig::fig11(),
            fig12: RateFigureConfig::fig12(),
        }
    }
}

/// Reduced numerology: 16 antennas, 256 subcarriers for TDD (512 for
/// IFDD), and Doppler scaled by the symbol-length ratio so that `f_D * T`
/// matches the full-size system at the same nominal speed.
pub const DESK_ANTENNAS: usize = 16;
pub const DESK_SUBCARRIERS: usize = 256;

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    pub fn desk_scale(&self) -> Self {
        let mut c = self.clone();
        let ratio = self.ofdm.n_sub as f64 / DESK_SUBCARRIERS as f64;
        c.ofdm.cp_samples = self.ofdm.cp_samples * DESK_SUBCARRIERS / self.ofdm.n_sub.max(1);
        c.ofdm.n_sub = DESK_SUBCARRIERS;
        c.channel.n_antennas = DESK_ANTENNAS;
        c.sweep.n_antennas = vec![DESK_ANTENNAS];
        c.sweep.doppler_scale = self.sweep.doppler_scale * ratio;
        c
    }

    pub fn link_config(&self, mode: DuplexMode) -> LinkConfig {
        LinkConfig {
            ofdm: self.ofdm,
            channel: self.channel,
            impairments: self.impairments.clone(),
            frame: FrameConfig { mode, ..self.frame },
            snr_db: self.sim.snr_db,
            ifdd_pilots: self.sim.ifdd_pilots,
        }
    }

    /// Every violated constraint; empty when the configuration is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                v.push(e.to_string());
            }
        };
        push(self.ofdm.validate());
        push(self.channel.validate());
        push(self.frame.pilot_interval().map(|_| ()));
        if !(self.frame.transient_s >= 0.0) {
            v.push(format!(
                "frame.transient_s = {} must be non-negative",
                self.frame.transient_s
            ));
        }
        if !self.sim.snr_db.is_finite() {
            v.push("sim.snr_db must be finite".into());
        }
        // Loopback only exists in IFDD, so the IFDD prefix is the bound.
        let ifdd = self.ofdm.doubled();
        v.extend(self.impairments.violations(&ifdd));
        if self.channel.n_taps > 0 && self.channel.n_taps - 1 > self.ofdm.cp_samples {
            v.push(format!(
                "channel.n_taps = {} gives a delay spread of {} samples, longer than ofdm.cp_samples = {}",
                self.channel.n_taps,
                self.channel.n_taps - 1,
                self.ofdm.cp_samples
            ));
        }
        if self.ofdm.validate().is_ok() && self.channel.validate().is_ok() {
            for (mode, num) in [(DuplexMode::Tdd, self.ofdm), (DuplexMode::Ifdd, ifdd)] {
                let c = coherence_check(&num, &self.channel, mode);
                if !c.feasible {
                    v.push(format!(
                        "channel: coherence bound violated for {mode} (time margin {:.3e} s, bandwidth margin {:.3e} s)",
                        c.time_margin_s, c.bandwidth_margin_s
                    ));
                }
            }
        }
        v.extend(self.sweep.violations("sweep"));
        v.extend(self.fig3.violations());
        v.extend(self.fig5.violations());
        v.extend(self.fig6.violations());
        v.extend(self.fig11.violations("fig11"));
        v.extend(self.fig12.violations("fig12"));
        v
    }

    /// Applies a `section.field=value` override. The value is parsed as a
    /// TOML value and taken as a bare string if that fails. List elements
    /// are addressed as `impairments.leakage[1].rho`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| SimError::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));

        let mut root = toml::Value::try_from(&*self).map_err(|e| SimError::Config(e.to_string()))?;
        {
            let mut node = &mut root;
            for seg in key.split('.') {
                let (name, index) = match seg.split_once('[') {
                    Some((n, rest)) => {
                        let idx = rest
                            .strip_suffix(']')
                            .and_then(|i| i.parse::<usize>().ok())
                            .ok_or_else(|| SimError::Config(format!("{key}: bad index in `{seg}`")))?;
                        (n, Some(idx))
                    }
                    None => (seg, None),
                };
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| SimError::Config(format!("{key}: `{name}` is not inside a section")))?;
                if !table.contains_key(name) {
                    // Optional fields are absent when unset; accept them if the
                    // final struct does.
                    table.insert(name.to_string(), toml::Value::Boolean(false));
                }
                node = table.get_mut(name).expect("key present");
                if let Some(i) = index {
                    let arr = node
                        .as_array_mut()
                        .ok_or_else(|| SimError::Config(format!("{key}: `{name}` is not a list")))?;
                    let len = arr.len();
                    node = arr
                        .get_mut(i)
                        .ok_or_else(|| SimError::Config(format!("{key}: index {i} out of range (length {len})")))?;
                }
            }
            *node = value;
        }
        let updated: ExperimentConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| SimError::Config(format!("{key}: {}", e.message())))?;
        *self = updated;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        let d = c.desk_scale();
        assert!(d.validate().is_empty(), "{:?}", d.validate());
        assert_eq!(d.ofdm.n_sub, 256);
        assert_eq!(d.ofdm.cp_samples, 32);
        assert_eq!(d.sweep.doppler_scale, 4.0);
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(
            ExperimentConfig::from_toml_str("").unwrap(),
            ExperimentConfig::default()
        );
        let partial = ExperimentConfig::from_toml_str("[ofdm]\nn_sub = 512\n").unwrap();
        assert_eq!(partial.ofdm.n_sub, 512);
        assert_eq!(partial.ofdm.cp_samples, 128);
    }

    #[test]
    fn unknown_field_is_reported() {
        let e = ExperimentConfig::from_toml_str("[ofdm]\nn_subs = 5\n").unwrap_err();
        assert!(e.to_string().contains("n_subs"), "{e}");
    }

    #[test]
    fn violations_name_fields() {
        let mut c = ExperimentConfig::default();
        c.ofdm.cp_samples = 2000;
        c.frame.pilot_rate = 0.3;
        let v = c.validate();
        assert!(v.iter().any(|s| s.contains("ofdm.cp_samples")), "{v:?}");
        assert!(v.iter().any(|s| s.contains("frame.pilot_rate")), "{v:?}");
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_override("ofdm.n_sub=512").unwrap();
        c.apply_override("frame.mode = ifdd").unwrap();
        c.apply_override("impairments.leakage[1].rho=1e-6").unwrap();
        c.apply_override("impairments.adc_bits=8").unwrap();
        c.apply_override("seed=9").unwrap();
        assert_eq!(c.ofdm.n_sub, 512);
        assert_eq!(c.frame.mode, DuplexMode::Ifdd);
        assert_eq!(c.impairments.leakage[1].rho, 1e-6);
        assert_eq!(c.impairments.adc_bits, Some(8));
        assert_eq!(c.seed, 9);
        let e = c.apply_override("ofdm.n_sub=abc").unwrap_err().to_string();
        assert!(e.contains("ofdm.n_sub"), "{e}");
        assert!(c.apply_override("ofdm.bogus=1").is_err());
        assert!(c.apply_override("impairments.leakage[9].rho=1").is_err());
        assert!(c.apply_override("novalue").is_err());
    }
}
