//! TDD and subcarrier-interlaced FDD (IFDD) link engines.
//!
//! IFDD splits the band into repeating `[D, U, D]` triplets: the terminal
//! sends on the uplink subcarrier `u` while the base station precodes the two
//! neighbours `u - 1` and `u + 1` from the estimate it took on `u`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{coherence_check, sample_tdl, ChannelModelConfig, ChannelRealization};
use crate::error::{Result, SimError};
use crate::impairments::{agc_full_scale, apply_cfo, loopback, quantize, ImpairmentConfig};
use crate::ofdm::{Cplx, Modem, OfdmConfig};
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplexMode {
    Tdd,
    Ifdd,
}

impl DuplexMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DuplexMode::Tdd => "tdd",
            DuplexMode::Ifdd => "ifdd",
        }
    }
}

impl std::fmt::Display for DuplexMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DuplexMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tdd" => Ok(DuplexMode::Tdd),
            "ifdd" => Ok(DuplexMode::Ifdd),
            other => Err(SimError::Config(format!("unknown duplex mode `{other}`"))),
        }
    }
}

/// Interlaced uplink/downlink subcarrier sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcarrierAllocation {
    n_sub: usize,
    uplink: Vec<usize>,
    downlink: Vec<usize>,
    nulled: Vec<usize>,
    /// For every downlink subcarrier (in `downlink` order) the position of
    /// its source in `uplink`.
    source: Vec<usize>,
}

/// Builds the `[D, U, D]` pattern; subcarriers past the last whole triplet
/// are left empty.
pub fn make_allocation(n_sub: usize) -> Result<SubcarrierAllocation> {
    if n_sub < 3 {
        return Err(SimError::Config(format!(
            "interlaced allocation needs at least 3 subcarriers, got {n_sub}"
        )));
    }
    let triplets = n_sub / 3;
    let mut uplink = Vec::with_capacity(triplets);
    let mut downlink = Vec::with_capacity(2 * triplets);
    let mut source = Vec::with_capacity(2 * triplets);
    for t in 0..triplets {
        uplink.push(3 * t + 1);
        downlink.push(3 * t);
        downlink.push(3 * t + 2);
        source.push(t);
        source.push(t);
    }
    Ok(SubcarrierAllocation {
        n_sub,
        uplink,
        downlink,
        nulled: (3 * triplets..n_sub).collect(),
        source,
    })
}

impl SubcarrierAllocation {
    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn uplink(&self) -> &[usize] {
        &self.uplink
    }

    pub fn downlink(&self) -> &[usize] {
        &self.downlink
    }

    pub fn nulled(&self) -> &[usize] {
        &self.nulled
    }

    /// The two downlink neighbours of `uplink()[i]`.
    pub fn adjacent(&self, i: usize) -> (usize, usize) {
        let u = self.uplink[i];
        (u - 1, u + 1)
    }

    /// `(downlink subcarrier, row in uplink())` pairs.
    pub fn downlink_sources(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.downlink.iter().copied().zip(self.source.iter().copied())
    }
}

/// Least-squares channel vectors on a set of subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub subcarriers: Vec<usize>,
    /// `vectors[i][k]`: antenna `k` on `subcarriers[i]`.
    pub vectors: Vec<Vec<Cplx>>,
    pub symbol: usize,
    pub time_s: f64,
}

impl ChannelEstimate {
    pub fn n_antennas(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Symbols between estimation and `symbol`.
    pub fn staleness(&self, symbol: usize) -> usize {
        symbol.saturating_sub(self.symbol)
    }
}

/// `h(u) = Y(u) / S_p(u)` per antenna on the uplink subcarriers of `alloc`.
/// `rx` is indexed `[antenna][subcarrier]`, `pilots` by subcarrier.
pub fn estimate_channel(
    rx: &[Vec<Cplx>],
    pilots: &[Cplx],
    alloc: &SubcarrierAllocation,
) -> Result<ChannelEstimate> {
    estimate_channel_on(rx, pilots, alloc.uplink(), 0, 0.0)
}

/// [`estimate_channel`] on an arbitrary subcarrier list.
pub fn estimate_channel_on(
    rx: &[Vec<Cplx>],
    pilots: &[Cplx],
    subcarriers: &[usize],
    symbol: usize,
    time_s: f64,
) -> Result<ChannelEstimate> {
    let mut vectors = Vec::with_capacity(subcarriers.len());
    for &u in subcarriers {
        let s = *pilots.get(u).ok_or(SimError::SubcarrierRange {
            index: u,
            n_sub: pilots.len(),
        })?;
        if s.norm_sqr() == 0.0 {
            return Err(SimError::Domain(format!("zero pilot symbol on subcarrier {u}")));
        }
        let v = rx
            .iter()
            .map(|ant| {
                ant.get(u).map(|y| y / s).ok_or(SimError::SubcarrierRange {
                    index: u,
                    n_sub: ant.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        vectors.push(v);
    }
    Ok(ChannelEstimate {
        subcarriers: subcarriers.to_vec(),
        vectors,
        symbol,
        time_s,
    })
}

/// Per-antenna downlink grid produced by MR precoding.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodedGrid {
    /// `grid[k][l]`: antenna `k`, subcarrier `l`.
    pub grid: Vec<Vec<Cplx>>,
    /// Downlink subcarriers left silent because their estimate had zero norm.
    pub skipped: Vec<usize>,
}

/// MR precoding on the downlink subcarriers of `alloc`, each from the
/// estimate of its uplink neighbour. `symbols` is indexed by subcarrier and
/// `power` is the total radiated power per subcarrier.
pub fn mr_precode(
    est: &ChannelEstimate,
    symbols: &[Cplx],
    alloc: &SubcarrierAllocation,
    power: f64,
) -> Result<PrecodedGrid> {
    let pairs: Vec<(usize, usize)> = alloc.downlink_sources().collect();
    mr_precode_pairs(est, symbols, &pairs, power)
}

/// MR precoding for explicit `(subcarrier, estimate row)` pairs:
/// antenna `k` sends `beta conj(h_k) x` with `beta = sqrt(power) / |h|`.
pub fn mr_precode_pairs(
    est: &ChannelEstimate,
    symbols: &[Cplx],
    pairs: &[(usize, usize)],
    power: f64,
) -> Result<PrecodedGrid> {
    let m = est.n_antennas();
    let n = symbols.len();
    let mut grid = vec![vec![Cplx::new(0.0, 0.0); n]; m];
    let mut skipped = Vec::new();
    for &(d, row) in pairs {
        let h = est.vectors.get(row).ok_or_else(|| {
            SimError::Domain(format!("no estimate row {row} for downlink subcarrier {d}"))
        })?;
        let x = *symbols.get(d).ok_or(SimError::SubcarrierRange { index: d, n_sub: n })?;
        let norm = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            skipped.push(d);
            continue;
        }
        let beta = power.sqrt() / norm;
        for (k, hk) in h.iter().enumerate() {
            grid[k][d] = hk.conj() * beta * x;
        }
    }
    Ok(PrecodedGrid { grid, skipped })
}

/// How pilots are scheduled on the IFDD uplink subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfddPilotSchedule {
    /// A pilot on every symbol; the downlink always uses the previous
    /// symbol's estimate.
    #[default]
    EverySymbol,
    /// One pilot symbol at the start of each frame of `1/p + 1` symbols.
    OncePerFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub pilot_rate: f64,
    pub transient_s: f64,
    pub mode: DuplexMode,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            pilot_rate: 1.0 / 3.0,
            transient_s: 1e-6,
            mode: DuplexMode::Tdd,
        }
    }
}

impl FrameConfig {
    /// `1/p`, required to be a whole number.
    pub fn pilot_interval(&self) -> Result<usize> {
        let p = self.pilot_rate;
        if !(p > 0.0 && p <= 1.0) {
            return Err(SimError::Config(format!(
                "frame.pilot_rate = {p} must lie in (0, 1]"
            )));
        }
        let inv = 1.0 / p;
        let r = inv.round();
        if (inv - r).abs() > 1e-9 * inv {
            return Err(SimError::Config(format!(
                "frame.pilot_rate = {p}: 1/p = {inv} is not an integer"
            )));
        }
        Ok(r as usize)
    }

    pub fn uplink_symbols(&self) -> Result<usize> {
        self.pilot_interval()
    }

    /// TDD downlink symbols per frame.
    pub fn downlink_symbols(&self) -> Result<usize> {
        Ok(2 * self.pilot_interval()?)
    }

    /// IFDD symbols (each twice as long) per frame.
    pub fn ifdd_symbols(&self) -> Result<usize> {
        Ok(self.pilot_interval()? + 1)
    }

    /// Index of the pilot inside the TDD uplink segment.
    pub fn tdd_pilot_index(&self) -> Result<usize> {
        Ok(self.pilot_interval()? / 2)
    }
}

/// Frame length for symbol duration `symbol_s` (the TDD symbol `T`):
/// `2T/p + T/p + 2 tau` for TDD and `2T/p + 2T` for IFDD.
pub fn frame_duration(fc: &FrameConfig, symbol_s: f64) -> Result<f64> {
    let inv = fc.pilot_interval()? as f64;
    Ok(match fc.mode {
        DuplexMode::Tdd => 2.0 * symbol_s * inv + symbol_s * inv + 2.0 * fc.transient_s,
        DuplexMode::Ifdd => 2.0 * symbol_s * inv + 2.0 * symbol_s,
    })
}

/// Everything a frame run needs apart from the random state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// TDD numerology; IFDD runs on [`OfdmConfig::doubled`].
    pub ofdm: OfdmConfig,
    pub channel: ChannelModelConfig,
    pub impairments: ImpairmentConfig,
    pub frame: FrameConfig,
    pub snr_db: f64,
    pub ifdd_pilots: IfddPilotSchedule,
}

impl LinkConfig {
    pub fn numerology(&self) -> OfdmConfig {
        match self.frame.mode {
            DuplexMode::Tdd => self.ofdm,
            DuplexMode::Ifdd => self.ofdm.doubled(),
        }
    }

    pub fn frame_duration(&self) -> Result<f64> {
        frame_duration(&self.frame, self.ofdm.total_symbol_s())
    }
}

/// Transcript of one simulated frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub mode: DuplexMode,
    pub frame_index: usize,
    /// Two bits per downlink subcarrier per symbol, symbol-major.
    pub tx_bits: Vec<u8>,
    pub decided_bits: Vec<u8>,
    pub dl_symbols: usize,
    pub dl_subcarriers: usize,
    /// Estimates the downlink symbols were precoded from.
    pub estimates_used: Vec<Arc<ChannelEstimate>>,
    /// Age of the CSI in seconds for each downlink symbol.
    pub staleness_s: Vec<f64>,
    /// Age of the CSI in symbols of the mode's numerology.
    pub staleness_symbols: Vec<usize>,
    /// Per downlink subcarrier signal-to-(noise+distortion) ratio, linear.
    pub sinr: Vec<f64>,
    pub frame_duration_s: f64,
    pub skipped_subcarriers: usize,
    pub warnings: Vec<String>,
}

impl FrameResult {
    pub fn channel_uses(&self) -> usize {
        self.dl_symbols * self.dl_subcarriers
    }

    pub fn bit_errors(&self) -> usize {
        self.tx_bits
            .iter()
            .zip(&self.decided_bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Mean SINR over the downlink subcarriers in dB.
    pub fn mean_sinr_db(&self) -> f64 {
        let v: Vec<f64> = self.sinr.iter().copied().filter(|s| s.is_finite()).collect();
        if v.is_empty() {
            return f64::INFINITY;
        }
        crate::db(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn qpsk(b0: u8, b1: u8) -> Cplx {
    let s = FRAC_1_SQRT_2;
    Cplx::new(if b0 == 0 { s } else { -s }, if b1 == 0 { s } else { -s })
}

fn complex_gaussian(rng: &mut ChaCha8Rng, std: f64) -> Cplx {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cplx::new(re, im) * (std * FRAC_1_SQRT_2)
}

/// Pseudo-random unit-modulus QPSK pilots, one per subcarrier.
pub fn pilot_symbols(n_sub: usize, seed: u64) -> Vec<Cplx> {
    let mut rng = stream_rng(seed, Stream::Pilots);
    (0..n_sub)
        .map(|_| qpsk(rng.random::<bool>() as u8, rng.random::<bool>() as u8))
        .collect()
}

/// Sequential per-link state: channel, random streams, latest estimate and
/// the simulation clock.
pub struct LinkState {
    cfg: LinkConfig,
    num: OfdmConfig,
    modem: Modem,
    alloc: Option<SubcarrierAllocation>,
    channel: ChannelRealization,
    pilots: Vec<Cplx>,
    noise_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    estimate: Option<Arc<ChannelEstimate>>,
    clock_s: f64,
    symbol: usize,
    frame_index: usize,
    noise_var: f64,
    dl_power: f64,
    ul_rx_power: f64,
    ul_tx_power: f64,
    warnings: Vec<String>,
}

impl LinkState {
    /// Sets up the link and runs one warm-up frame to acquire CSI. The
    /// channel depends only on `seed`, so TDD and IFDD runs with the same
    /// seed see the same fading process.
    pub fn new(cfg: LinkConfig, seed: u64) -> Result<Self> {
        cfg.ofdm.validate()?;
        cfg.channel.validate()?;
        cfg.frame.pilot_interval()?;
        let num = cfg.numerology();
        if cfg.channel.n_taps - 1 > num.cp_samples {
            return Err(SimError::Orthogonality {
                delay_samples: cfg.channel.n_taps - 1,
                cp_samples: num.cp_samples,
            });
        }
        let modem = Modem::new(num)?;
        let alloc = match cfg.frame.mode {
            DuplexMode::Tdd => None,
            DuplexMode::Ifdd => Some(make_allocation(num.n_sub)?),
        };
        let mut warnings = Vec::new();
        let verdict = coherence_check(&num, &cfg.channel, cfg.frame.mode);
        if !verdict.feasible {
            warnings.push(format!(
                "coherence bound violated for {} (time margin {:.3e} s, bandwidth margin {:.3e} s)",
                cfg.frame.mode, verdict.time_margin_s, verdict.bandwidth_margin_s
            ));
        }
        let m = cfg.channel.n_antennas as f64;
        let imp = &cfg.impairments;
        let (dl_power, ul_rx_power, ul_tx_power) = if imp.power_scaling {
            (
                m.powf(1.0 - imp.eps1),
                m.powf(-imp.eps2),
                imp.power_gap() * m.powf(-imp.eps2),
            )
        } else {
            (1.0, 1.0, imp.power_gap())
        };
        let stream_seed = derive_seed(seed, cfg.frame.mode as u64 + 100);
        let mut state = Self {
            noise_var: crate::from_db(-cfg.snr_db),
            channel: sample_tdl(&cfg.channel, seed),
            pilots: pilot_symbols(num.n_sub, seed),
            noise_rng: stream_rng(stream_seed, Stream::Noise),
            data_rng: stream_rng(stream_seed, Stream::Data),
            cfg,
            num,
            modem,
            alloc,
            estimate: None,
            clock_s: 0.0,
            symbol: 0,
            frame_index: 0,
            dl_power,
            ul_rx_power,
            ul_tx_power,
            warnings,
        };
        match state.cfg.frame.mode {
            DuplexMode::Tdd => run_tdd_frame(&mut state)?,
            DuplexMode::Ifdd => run_ifdd_frame(&mut state)?,
        };
        Ok(state)
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    pub fn latest_estimate(&self) -> Option<&ChannelEstimate> {
        self.estimate.as_deref()
    }

    pub fn channel(&self) -> &ChannelRealization {
        &self.channel
    }

    /// Runs the next frame of the configured mode.
    pub fn run_frame(&mut self) -> Result<FrameResult> {
        match self.cfg.frame.mode {
            DuplexMode::Tdd => run_tdd_frame(self),
            DuplexMode::Ifdd => run_ifdd_frame(self),
        }
    }

    fn set_time(&mut self, t: f64) {
        self.channel.set_time(t, &self.cfg.channel);
    }

    fn uplink_pilot(&mut self, subcarriers: &[usize], ctf: &[Vec<Cplx>], time_s: f64) -> Result<()> {
        let amp = self.ul_rx_power.sqrt();
        let std = self.noise_var.sqrt();
        let n = self.num.n_sub;
        let mut rx = vec![vec![Cplx::new(0.0, 0.0); n]; ctf.len()];
        for (k, hk) in ctf.iter().enumerate() {
            for &u in subcarriers {
                rx[k][u] = hk[u] * self.pilots[u] * amp + complex_gaussian(&mut self.noise_rng, std);
            }
        }
        // Undo the known pilot amplitude so the estimate targets H itself.
        let scaled: Vec<Cplx> = self.pilots.iter().map(|p| p * amp).collect();
        let est = estimate_channel_on(&rx, &scaled, subcarriers, self.symbol, time_s)?;
        self.estimate = Some(Arc::new(est));
        Ok(())
    }

    fn random_bits(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.data_rng.random::<bool>() as u8).collect()
    }
}

/// Downlink bookkeeping shared by both engines.
struct DownlinkAccumulator {
    dl: Vec<usize>,
    tx_bits: Vec<u8>,
    decided_bits: Vec<u8>,
    signal: Vec<f64>,
    error: Vec<f64>,
    staleness_s: Vec<f64>,
    staleness_symbols: Vec<usize>,
    estimates: Vec<Arc<ChannelEstimate>>,
    skipped: usize,
    symbols: usize,
}

impl DownlinkAccumulator {
    fn new(dl: Vec<usize>) -> Self {
        let n = dl.len();
        Self {
            dl,
            tx_bits: Vec::new(),
            decided_bits: Vec::new(),
            signal: vec![0.0; n],
            error: vec![0.0; n],
            staleness_s: Vec::new(),
            staleness_symbols: Vec::new(),
            estimates: Vec::new(),
            skipped: 0,
            symbols: 0,
        }
    }

    fn finish(self, st: &mut LinkState, mode: DuplexMode) -> Result<FrameResult> {
        let sinr = self
            .signal
            .iter()
            .zip(&self.error)
            .map(|(s, e)| if *e == 0.0 { f64::INFINITY } else { s / e })
            .collect();
        let result = FrameResult {
            mode,
            frame_index: st.frame_index,
            tx_bits: self.tx_bits,
            decided_bits: self.decided_bits,
            dl_symbols: self.symbols,
            dl_subcarriers: self.dl.len(),
            estimates_used: self.estimates,
            staleness_s: self.staleness_s,
            staleness_symbols: self.staleness_symbols,
            sinr,
            frame_duration_s: st.cfg.frame_duration()?,
            skipped_subcarriers: self.skipped,
            warnings: st.warnings.clone(),
        };
        st.frame_index += 1;
        Ok(result)
    }
}

/// Precodes one downlink symbol from the current estimate, passes it
/// through the channel and the terminal receiver, and records decisions.
fn downlink_symbol(
    st: &mut LinkState,
    acc: &mut DownlinkAccumulator,
    pairs: &[(usize, usize)],
    ctf: &[Vec<Cplx>],
    ul_grid: Option<&[Cplx]>,
    start_s: f64,
) -> Result<()> {
    let est = match &st.estimate {
        Some(e) => e.clone(),
        None => return Ok(()),
    };
    let n = st.num.n_sub;
    let bits = st.random_bits(2 * acc.dl.len());
    let mut symbols = vec![Cplx::new(0.0, 0.0); n];
    for (i, &d) in acc.dl.iter().enumerate() {
        symbols[d] = qpsk(bits[2 * i], bits[2 * i + 1]);
    }
    let pre = mr_precode_pairs(&est, &symbols, pairs, st.dl_power)?;
    acc.skipped += pre.skipped.len();

    // Received downlink grid and effective gains.
    let mut rx = vec![Cplx::new(0.0, 0.0); n];
    for (hk, xk) in ctf.iter().zip(&pre.grid) {
        for &d in &acc.dl {
            rx[d] += hk[d] * xk[d];
        }
    }
    let clean = rx.clone();

    let imp = &st.cfg.impairments;
    let std = st.noise_var.sqrt();
    let observed = if imp.is_active() {
        let mut block = apply_cfo(&st.modem.modulate(&rx)?, imp.cfo_hz, 0.0, &st.num);
        if let Some(ul) = ul_grid {
            let ul_tx = st.modem.modulate(ul)?;
            for (b, l) in block.iter_mut().zip(loopback(&ul_tx, imp, &st.num)?) {
                *b += l;
            }
        }
        for b in block.iter_mut() {
            *b += complex_gaussian(&mut st.noise_rng, std);
        }
        if let Some(bitsq) = imp.adc_bits {
            let fs = agc_full_scale(&block);
            if fs > 0.0 {
                block = quantize(&block, bitsq, fs);
            }
        }
        st.modem.demodulate(&block)?
    } else {
        let mut y = rx;
        for &d in &acc.dl {
            y[d] += complex_gaussian(&mut st.noise_rng, std);
        }
        y
    };

    for (i, &d) in acc.dl.iter().enumerate() {
        let y = observed[d];
        acc.signal[i] += clean[d].norm_sqr();
        acc.error[i] += (y - clean[d]).norm_sqr();
        acc.decided_bits.push((y.re < 0.0) as u8);
        acc.decided_bits.push((y.im < 0.0) as u8);
    }
    acc.tx_bits.extend(bits);
    acc.staleness_s.push(start_s - est.time_s);
    acc.staleness_symbols.push(est.staleness(st.symbol));
    if !acc.estimates.iter().any(|e| Arc::ptr_eq(e, &est)) {
        acc.estimates.push(est);
    }
    acc.symbols += 1;
    Ok(())
}

/// One TDD frame: `2/p` downlink symbols precoded from the previous frame's
/// pilot, a transient gap, `1/p` uplink symbols with the full-band pilot in
/// the middle, and a second gap.
pub fn run_tdd_frame(st: &mut LinkState) -> Result<FrameResult> {
    let fc = st.cfg.frame;
    let t_sym = st.num.total_symbol_s();
    let n = st.num.n_sub;
    let all: Vec<usize> = (0..n).collect();
    let pairs: Vec<(usize, usize)> = (0..n).map(|l| (l, l)).collect();
    let mut acc = DownlinkAccumulator::new(all.clone());
    let t0 = st.clock_s;

    for j in 0..fc.downlink_symbols()? {
        let t = t0 + j as f64 * t_sym;
        if st.estimate.is_some() {
            st.set_time(t);
            let ctf = st.channel.ctf_grid(&st.modem);
            downlink_symbol(st, &mut acc, &pairs, &ctf, None, t)?;
        }
        st.symbol += 1;
    }

    let ul_start = t0 + fc.downlink_symbols()? as f64 * t_sym + fc.transient_s;
    let pilot_idx = fc.tdd_pilot_index()?;
    for j in 0..fc.uplink_symbols()? {
        if j == pilot_idx {
            let t = ul_start + j as f64 * t_sym;
            st.set_time(t);
            let ctf = st.channel.ctf_grid(&st.modem);
            st.uplink_pilot(&all, &ctf, t)?;
        }
        st.symbol += 1;
    }
    st.clock_s = ul_start + fc.uplink_symbols()? as f64 * t_sym + fc.transient_s;
    acc.finish(st, DuplexMode::Tdd)
}

/// One IFDD frame of `1/p + 1` double-length symbols. Each symbol carries
/// precoded downlink data on `D` and the terminal's uplink on `U`; the
/// downlink uses the most recent estimate from an earlier symbol.
pub fn run_ifdd_frame(st: &mut LinkState) -> Result<FrameResult> {
    let fc = st.cfg.frame;
    let t_sym = st.num.total_symbol_s();
    let alloc = st.alloc.clone().expect("IFDD state has an allocation");
    let pairs: Vec<(usize, usize)> = alloc.downlink_sources().collect();
    let mut acc = DownlinkAccumulator::new(alloc.downlink().to_vec());
    let t0 = st.clock_s;
    let n = st.num.n_sub;
    let ul_amp = st.ul_tx_power.sqrt();

    for s in 0..fc.ifdd_symbols()? {
        let t = t0 + s as f64 * t_sym;
        st.set_time(t);
        let ctf = st.channel.ctf_grid(&st.modem);
        let pilot = match st.cfg.ifdd_pilots {
            IfddPilotSchedule::EverySymbol => true,
            IfddPilotSchedule::OncePerFrame => s == 0,
        };
        // Terminal transmit grid on U (pilot or random uplink data).
        let mut ul = vec![Cplx::new(0.0, 0.0); n];
        if pilot {
            for &u in alloc.uplink() {
                ul[u] = st.pilots[u] * ul_amp;
            }
        } else {
            let bits = st.random_bits(2 * alloc.uplink().len());
            for (i, &u) in alloc.uplink().iter().enumerate() {
                ul[u] = qpsk(bits[2 * i], bits[2 * i + 1]) * ul_amp;
            }
        }
        downlink_symbol(st, &mut acc, &pairs, &ctf, Some(&ul), t)?;
        if pilot {
            st.uplink_pilot(alloc.uplink(), &ctf, t)?;
        }
        st.symbol += 1;
    }
    st.clock_s = t0 + fc.ifdd_symbols()? as f64 * t_sym;
    acc.finish(st, DuplexMode::Ifdd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_allocations() {
        let a = make_allocation(3).unwrap();
        assert_eq!(a.uplink(), &[1]);
        assert_eq!(a.downlink(), &[0, 2]);
        assert_eq!(a.adjacent(0), (0, 2));
        let b = make_allocation(6).unwrap();
        assert_eq!(b.uplink(), &[1, 4]);
        assert_eq!(b.downlink(), &[0, 2, 3, 5]);
        assert!(make_allocation(2).is_err());
    }

    #[test]
    fn large_allocation_counts() {
        let a = make_allocation(2048).unwrap();
        assert_eq!(a.uplink().len(), 682);
        assert_eq!(a.downlink().len(), 1364);
        assert_eq!(a.nulled(), &[2046, 2047]);
        for (d, row) in a.downlink_sources() {
            assert_eq!((d as i64 - a.uplink()[row] as i64).abs(), 1);
        }
    }

    #[test]
    fn frame_durations() {
        let t = 57.6e-6;
        let mut fc = FrameConfig {
            pilot_rate: 1.0 / 3.0,
            transient_s: 1e-6,
            mode: DuplexMode::Tdd,
        };
        assert!((frame_duration(&fc, t).unwrap() - 520.4e-6).abs() < 1e-12);
        fc.mode = DuplexMode::Ifdd;
        assert!((frame_duration(&fc, t).unwrap() - 460.8e-6).abs() < 1e-12);
        let unit = FrameConfig {
            pilot_rate: 1.0,
            transient_s: 0.0,
            mode: DuplexMode::Tdd,
        };
        assert!((frame_duration(&unit, t).unwrap() - 3.0 * t).abs() < 1e-15);
        let unit_ifdd = FrameConfig {
            mode: DuplexMode::Ifdd,
            ..unit
        };
        assert!((frame_duration(&unit_ifdd, t).unwrap() - 4.0 * t).abs() < 1e-15);
    }

    #[test]
    fn pilot_rate_integrality() {
        let bad = FrameConfig {
            pilot_rate: 0.3,
            ..Default::default()
        };
        let e = bad.pilot_interval().unwrap_err().to_string();
        assert!(e.contains("frame.pilot_rate"));
        assert!(FrameConfig {
            pilot_rate: 0.0,
            ..Default::default()
        }
        .pilot_interval()
        .is_err());
        assert_eq!(
            FrameConfig {
                pilot_rate: 0.125,
                ..Default::default()
            }
            .pilot_interval()
            .unwrap(),
            8
        );
    }

    #[test]
    fn estimation_errors() {
        let rx = vec![vec![Cplx::new(1.0, 0.0); 3]];
        let mut pilots = vec![Cplx::new(1.0, 0.0); 3];
        pilots[1] = Cplx::new(0.0, 0.0);
        let a = make_allocation(3).unwrap();
        assert!(matches!(estimate_channel(&rx, &pilots, &a), Err(SimError::Domain(_))));
    }

    #[test]
    fn precoder_power_and_skip() {
        let est = ChannelEstimate {
            subcarriers: vec![1],
            vectors: vec![vec![Cplx::new(1.0, 1.0), Cplx::new(0.0, -2.0)]],
            symbol: 0,
            time_s: 0.0,
        };
        let a = make_allocation(3).unwrap();
        let x = vec![Cplx::new(0.0, 1.0); 3];
        let p = mr_precode(&est, &x, &a, 2.5).unwrap();
        for d in [0, 2] {
            let pw: f64 = p.grid.iter().map(|g| g[d].norm_sqr()).sum();
            assert!((pw - 2.5).abs() < 1e-12);
        }
        assert!(p.grid.iter().all(|g| g[1].norm() == 0.0));
        let zero = ChannelEstimate {
            vectors: vec![vec![Cplx::new(0.0, 0.0); 2]],
            ..est
        };
        let q = mr_precode(&zero, &x, &a, 1.0).unwrap();
        assert_eq!(q.skipped, vec![0, 2]);
    }
}
