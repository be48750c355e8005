//! Stochastic simulation of the counting experiment.
//!
//! Two engines share one configuration:
//!
//! * **per-pulse** draws the pair number of every gate, thins each photon
//!   through its arm, ORs in detector noise, and feeds the resulting click
//!   streams to [`detection`](crate::detection). It is the validation oracle.
//! * **aggregate** draws the category totals of each chunk (both arms, signal
//!   only, idler only, neither, delayed pairs) from binomials with the exact
//!   analytic per-gate probabilities. It handles billions of gates in seconds.
//!
//! Gates are processed in fixed-size chunks, each with its own random stream
//! keyed by `(seed, chunk index)`, so results do not depend on thread count.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{summarize, CountingResult, GateStreamSummary, GateTally};
use crate::error::{Error, Result};
use crate::pair_statistics::{ChannelSpec, GateProbabilities, PairNumberKind, PairNumberModel};
use crate::rng::{derive_seed, stream_rng};
use crate::waveguide::{
    energy_conserving_idler, mean_pairs_per_pulse, pair_survival, PumpSpec, WaveguideSpec,
};

/// Gates per chunk in per-pulse mode.
pub const PER_PULSE_CHUNK: u64 = 1 << 16;
/// Gates per chunk in aggregate mode.
pub const AGGREGATE_CHUNK: u64 = 1 << 24;
/// Above this many pulses `Auto` selects the aggregate engine.
pub const AUTO_AGGREGATE_THRESHOLD: u64 = 10_000_000;
/// Counts stay exactly representable as f64.
pub const MAX_PULSES: u64 = 1 << 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    #[default]
    Auto,
    PerPulse,
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelPair {
    pub signal: ChannelSpec,
    pub idler: ChannelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub model_kind: PairNumberKind,
    pub n_pulses: u64,
    pub seed: u64,
    #[serde(default)]
    pub mode: SimulationMode,
    /// Delayed-gate offsets averaged by the accidental estimator.
    #[serde(default = "one")]
    pub accidental_offsets: u32,
}

fn one() -> u32 {
    1
}

/// Full description of one simulated acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub waveguide: WaveguideSpec,
    pub pump: PumpSpec,
    pub channels: ChannelPair,
    pub run: RunSettings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.waveguide.validate()?;
        self.pump.validate()?;
        self.channels.signal.validate("channels.signal")?;
        self.channels.idler.validate("channels.idler")?;
        if self.run.n_pulses == 0 {
            return Err(Error::invalid("run.n_pulses", "must be >= 1"));
        }
        if self.run.n_pulses > MAX_PULSES {
            return Err(Error::invalid("run.n_pulses", "must be <= 2^53"));
        }
        if self.run.accidental_offsets == 0 {
            return Err(Error::invalid("run.accidental_offsets", "must be >= 1"));
        }
        if let PairNumberKind::Thermal { modes: 0 } = self.run.model_kind {
            return Err(Error::invalid("run.model_kind.modes", "must be >= 1"));
        }
        let (s, i) = (&self.channels.signal, &self.channels.idler);
        let lp = self.pump.wavelength_nm;
        let expected_idler = energy_conserving_idler(lp, lp - s.detuning_nm)?;
        let idler_centre = lp + i.detuning_nm;
        if (expected_idler - idler_centre).abs() > i.filter_bandwidth_nm {
            return Err(Error::invalid(
                "channels.idler.detuning_nm",
                format!(
                    "idler filter at {idler_centre:.3} nm misses the energy-conserving partner \
                     {expected_idler:.3} nm by more than its {} nm bandwidth",
                    i.filter_bandwidth_nm
                ),
            ));
        }
        Ok(())
    }

    pub fn with_power(&self, peak_power_w: f64) -> Self {
        let mut cfg = self.clone();
        cfg.pump.peak_power_w = peak_power_w;
        cfg
    }

    pub fn resolved_mode(&self) -> SimulationMode {
        match self.run.mode {
            SimulationMode::Auto if self.run.n_pulses > AUTO_AGGREGATE_THRESHOLD => {
                SimulationMode::Aggregate
            }
            SimulationMode::Auto => SimulationMode::PerPulse,
            m => m,
        }
    }

    /// Pair-number distribution at the configured pump power.
    pub fn pair_model(&self) -> Result<PairNumberModel> {
        PairNumberModel::new(
            mean_pairs_per_pulse(&self.waveguide, &self.pump)?,
            self.run.model_kind,
        )
    }

    pub fn survival(&self) -> f64 {
        pair_survival(&self.waveguide, &self.pump)
    }

    /// Channels with pump leakage folded into the noise at the configured power.
    pub fn channels_at_power(&self) -> (ChannelSpec, ChannelSpec) {
        let p = self.pump.peak_power_w;
        (self.channels.signal.at_power(p), self.channels.idler.at_power(p))
    }

    pub fn gate_probabilities(&self) -> Result<GateProbabilities> {
        let (s, i) = self.channels_at_power();
        GateProbabilities::evaluate(&self.pair_model()?, &s, &i, self.survival())
    }

    /// Number of delayed (signal, idler) gate pairs, summed over offsets.
    pub fn delayed_pairs(&self) -> u64 {
        let n = self.run.n_pulses;
        (1..=u64::from(self.run.accidental_offsets))
            .map(|o| n.saturating_sub(o))
            .sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.run.n_pulses as f64 / self.pump.rep_rate_hz
    }
}

/// Expected counts for a configuration, from the analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCounts {
    pub mu: f64,
    pub c_raw: f64,
    pub a: f64,
    pub c_net: f64,
    pub car: Option<f64>,
    pub car_sigma: Option<f64>,
}

pub fn analytic_counts(cfg: &RunConfig) -> Result<AnalyticCounts> {
    cfg.validate()?;
    let mu = cfg.pair_model()?.mu;
    let probs = cfg.gate_probabilities()?;
    let k = f64::from(cfg.run.accidental_offsets);
    let c_raw = probs.coincidence * cfg.run.n_pulses as f64;
    let a = probs.accidental * cfg.delayed_pairs() as f64 / k;
    let car = probs.car().ok();
    let car_sigma = if a > 0.0 {
        Some((c_raw / (a * a) + c_raw * c_raw * (a / k) / a.powi(4)).sqrt())
    } else {
        None
    };
    Ok(AnalyticCounts {
        mu,
        c_raw,
        a,
        c_net: c_raw - a,
        car,
        car_sigma,
    })
}

/// Inverse-CDF sampler over the truncated pair-number table.
struct PairSampler {
    cdf: Vec<f64>,
}

impl PairSampler {
    fn new(model: &PairNumberModel) -> Self {
        let mut acc = 0.0;
        let cdf = model
            .pmf_table()
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { cdf }
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if u < self.cdf[0] {
            return 0;
        }
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u64
    }
}

struct PulseEngine {
    sampler: PairSampler,
    eta_s: f64,
    eta_i: f64,
    noise_s: f64,
    noise_i: f64,
    offsets: u32,
    seed: u64,
}

impl PulseEngine {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let (s, i) = cfg.channels_at_power();
        let survival = cfg.survival();
        Ok(Self {
            sampler: PairSampler::new(&cfg.pair_model()?),
            eta_s: crate::pair_statistics::channel_transmittance(&s.with_survival(survival))?,
            eta_i: crate::pair_statistics::channel_transmittance(&i.with_survival(survival))?,
            noise_s: s.noise_per_gate,
            noise_i: i.noise_per_gate,
            offsets: cfg.run.accidental_offsets,
            seed: cfg.run.seed,
        })
    }

    fn chunk(&self, index: u64, len: usize) -> GateTally {
        let mut rng = stream_rng(self.seed, index);
        let mut sig = vec![false; len];
        let mut idl = vec![false; len];
        for g in 0..len {
            let pairs = self.sampler.sample(&mut rng);
            let mut detected_s = 0u64;
            let mut detected_i = 0u64;
            for _ in 0..pairs {
                detected_s += u64::from(rng.random::<f64>() < self.eta_s);
                detected_i += u64::from(rng.random::<f64>() < self.eta_i);
            }
            let dark_s = rng.random::<f64>() < self.noise_s;
            let dark_i = rng.random::<f64>() < self.noise_i;
            sig[g] = detected_s > 0 || dark_s;
            idl[g] = detected_i > 0 || dark_i;
        }
        GateTally::from_streams(&sig, &idl, self.offsets).expect("equal-length streams")
    }
}

fn chunk_lengths(total: u64, chunk: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let n_chunks = total.div_ceil(chunk) as usize;
    (0..n_chunks).into_par_iter().map(move |c| {
        let c = c as u64;
        (c, chunk.min(total - c * chunk))
    })
}

fn run_per_pulse(cfg: &RunConfig) -> Result<GateStreamSummary> {
    let engine = PulseEngine::new(cfg)?;
    let offsets = cfg.run.accidental_offsets;
    let tally = chunk_lengths(cfg.run.n_pulses, PER_PULSE_CHUNK)
        .map(|(c, len)| engine.chunk(c, len as usize))
        .reduce(|| GateTally::empty(offsets), GateTally::merge);
    Ok(tally.summary)
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn run_aggregate(cfg: &RunConfig) -> Result<GateStreamSummary> {
    let probs = cfg.gate_probabilities()?;
    let total = cfg.run.n_pulses;
    let offsets = u64::from(cfg.run.accidental_offsets);
    let p_both = probs.coincidence;
    let p_s_only = (probs.signal - p_both).max(0.0);
    let p_i_only = (probs.idler - p_both).max(0.0);
    let p_delayed = probs.accidental;
    let seed = cfg.run.seed;

    let summary = chunk_lengths(total, AGGREGATE_CHUNK)
        .map(|(c, len)| {
            let mut rng = stream_rng(seed, c);
            let both = binomial(&mut rng, len, p_both);
            let rest = 1.0 - p_both;
            let s_only = binomial(&mut rng, len - both, if rest > 0.0 { p_s_only / rest } else { 0.0 });
            let rest2 = rest - p_s_only;
            let i_only = binomial(
                &mut rng,
                len - both - s_only,
                if rest2 > 0.0 { (p_i_only / rest2).min(1.0) } else { 0.0 },
            );
            // Delayed pairs whose signal gate lies in this chunk.
            let start = c * AGGREGATE_CHUNK;
            let pairs: u64 = (1..=offsets)
                .map(|o| total.saturating_sub(o).saturating_sub(start).min(len))
                .sum();
            GateStreamSummary {
                n_gates: len,
                singles_s: both + s_only,
                singles_i: both + i_only,
                coincidences_raw: both,
                accidentals_delayed: binomial(&mut rng, pairs, p_delayed),
                accidental_offsets: offsets as u32,
            }
        })
        .reduce(
            || GateStreamSummary {
                accidental_offsets: offsets as u32,
                ..Default::default()
            },
            |a, b| GateStreamSummary {
                n_gates: a.n_gates + b.n_gates,
                singles_s: a.singles_s + b.singles_s,
                singles_i: a.singles_i + b.singles_i,
                coincidences_raw: a.coincidences_raw + b.coincidences_raw,
                accidentals_delayed: a.accidentals_delayed + b.accidentals_delayed,
                accidental_offsets: a.accidental_offsets,
            },
        );
    Ok(summary)
}

/// Simulates the raw gate counts of one acquisition.
pub fn simulate_counts(cfg: &RunConfig) -> Result<GateStreamSummary> {
    cfg.validate()?;
    match cfg.resolved_mode() {
        SimulationMode::Aggregate => run_aggregate(cfg),
        _ => run_per_pulse(cfg),
    }
}

/// Simulates one acquisition and reduces it to net coincidences and CAR.
pub fn simulate_run(cfg: &RunConfig) -> Result<CountingResult> {
    let summary = simulate_counts(cfg)?;
    Ok(summarize(&summary, cfg.pump.rep_rate_hz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Analytic,
    MonteCarlo,
}

/// One line of a power sweep. Counts are expectations for analytic rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub power_w: f64,
    pub mu: f64,
    pub c_raw: f64,
    pub a: f64,
    pub c_net: f64,
    pub car: Option<f64>,
    pub car_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub power_w: f64,
    pub outcome: Result<SweepRow>,
}

/// Evaluates the acquisition at each pump power. A failing point is reported
/// in place and does not abort the sweep. Monte Carlo points use independent
/// seeds derived from the base seed and the point index.
pub fn sweep_power(cfg: &RunConfig, powers: &[f64], method: SweepMethod) -> Result<Vec<SweepPoint>> {
    if powers.is_empty() {
        return Err(Error::invalid("powers", "sweep needs at least one power"));
    }
    if cfg.run.n_pulses == 0 {
        return Err(Error::invalid("run.n_pulses", "must be >= 1"));
    }
    Ok(powers
        .iter()
        .enumerate()
        .map(|(idx, &power_w)| {
            let mut point = cfg.with_power(power_w);
            point.run.seed = derive_seed(cfg.run.seed, idx as u64);
            SweepPoint {
                power_w,
                outcome: evaluate(&point, method),
            }
        })
        .collect())
}

/// Evaluates one acquisition at the configured pump power.
pub fn evaluate(cfg: &RunConfig, method: SweepMethod) -> Result<SweepRow> {
    cfg.validate()?;
    let power_w = cfg.pump.peak_power_w;
    match method {
        SweepMethod::Analytic => {
            let a = analytic_counts(cfg)?;
            Ok(SweepRow {
                power_w,
                mu: a.mu,
                c_raw: a.c_raw,
                a: a.a,
                c_net: a.c_net,
                car: a.car,
                car_sigma: a.car_sigma,
            })
        }
        SweepMethod::MonteCarlo => {
            let mu = cfg.pair_model()?.mu;
            let r = simulate_run(cfg)?;
            Ok(SweepRow {
                power_w,
                mu,
                c_raw: r.c_raw as f64,
                a: r.a,
                c_net: r.c_net,
                car: r.car,
                car_sigma: r.car_sigma,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn small(mode: SimulationMode, n: u64, seed: u64) -> RunConfig {
        let mut cfg = presets::paper_counting();
        cfg.run.mode = mode;
        cfg.run.n_pulses = n;
        cfg.run.seed = seed;
        cfg
    }

    #[test]
    fn zero_mu_zero_noise_gives_no_counts() {
        for mode in [SimulationMode::PerPulse, SimulationMode::Aggregate] {
            let mut cfg = small(mode, 200_000, 1);
            cfg.pump.peak_power_w = 0.0;
            cfg.channels.signal.noise_per_gate = 0.0;
            cfg.channels.idler.noise_per_gate = 0.0;
            let s = simulate_counts(&cfg).unwrap();
            assert_eq!(
                (s.singles_s, s.singles_i, s.coincidences_raw, s.accidentals_delayed),
                (0, 0, 0, 0)
            );
            assert_eq!(s.n_gates, 200_000);
        }
    }

    #[test]
    fn same_seed_same_result() {
        for mode in [SimulationMode::PerPulse, SimulationMode::Aggregate] {
            let cfg = small(mode, 300_000, 42);
            assert_eq!(simulate_run(&cfg).unwrap(), simulate_run(&cfg).unwrap());
        }
    }

    #[test]
    fn zero_pulses_rejected() {
        let cfg = small(SimulationMode::PerPulse, 0, 0);
        assert!(matches!(simulate_run(&cfg), Err(Error::Invalid { .. })));
        assert!(sweep_power(&cfg, &[0.2], SweepMethod::Analytic).is_err());
    }

    #[test]
    fn empty_sweep_rejected() {
        assert!(sweep_power(&presets::paper_counting(), &[], SweepMethod::Analytic).is_err());
    }

    #[test]
    fn bad_sweep_point_is_flagged_not_fatal() {
        let pts = sweep_power(&presets::paper_counting(), &[0.2, 12.0, 0.3], SweepMethod::Analytic)
            .unwrap();
        assert!(pts[0].outcome.is_ok());
        assert!(pts[1].outcome.is_err());
        assert!(pts[2].outcome.is_ok());
    }

    #[test]
    fn auto_mode_switches_at_threshold() {
        let mut cfg = presets::paper_counting();
        cfg.run.mode = SimulationMode::Auto;
        cfg.run.n_pulses = AUTO_AGGREGATE_THRESHOLD;
        assert_eq!(cfg.resolved_mode(), SimulationMode::PerPulse);
        cfg.run.n_pulses += 1;
        assert_eq!(cfg.resolved_mode(), SimulationMode::Aggregate);
    }

    #[test]
    fn mismatched_idler_channel_rejected() {
        let mut cfg = presets::paper_counting();
        cfg.channels.idler.detuning_nm = 7.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("channels.idler.detuning_nm"), "{err}");
    }

    #[test]
    fn aggregate_delayed_pairs_cover_stream() {
        let mut cfg = small(SimulationMode::Aggregate, 3 * AGGREGATE_CHUNK + 5, 3);
        cfg.run.accidental_offsets = 2;
        assert_eq!(cfg.delayed_pairs(), 2 * cfg.run.n_pulses - 3);
    }
}
