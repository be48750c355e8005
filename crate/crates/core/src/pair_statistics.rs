//! Analytic photon-number and click statistics.
//!
//! A pulse produces `n` signal/idler pairs with `n` drawn from a Poisson or
//! multimode thermal (negative binomial) distribution. Each photon reaches its
//! detector independently with probability `η` (binomial thinning), so the
//! probability that no photon of `n` arrives is `(1-η)^n` and every click
//! statistic reduces to the probability generating function
//! `G(x) = E[x^n]` of the pair-number distribution. Detectors are threshold
//! devices with an independent per-gate noise probability `d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Statistics of the per-pulse pair number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PairNumberKind {
    Poisson,
    /// Negative binomial over `modes` independent thermal Schmidt modes.
    Thermal { modes: u32 },
}

impl PairNumberKind {
    /// Thermal statistics with `K = round(filter bandwidth / pump bandwidth)`, at least 1.
    pub fn thermal_from_bandwidths(filter_bandwidth_nm: f64, pump_bandwidth_nm: f64) -> Self {
        let k = (filter_bandwidth_nm / pump_bandwidth_nm).round();
        let modes = if k.is_finite() && k >= 1.0 { k as u32 } else { 1 };
        PairNumberKind::Thermal { modes }
    }
}

/// Pair-number distribution with mean `mu` pairs per pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairNumberModel {
    pub mu: f64,
    pub kind: PairNumberKind,
}

impl PairNumberModel {
    pub fn new(mu: f64, kind: PairNumberKind) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::invalid("mu", format!("{mu} is not a nonnegative mean")));
        }
        if let PairNumberKind::Thermal { modes: 0 } = kind {
            return Err(Error::invalid("kind.modes", "thermal mode count must be >= 1"));
        }
        Ok(Self { mu, kind })
    }

    pub fn poisson(mu: f64) -> Result<Self> {
        Self::new(mu, PairNumberKind::Poisson)
    }

    pub fn thermal(mu: f64, modes: u32) -> Result<Self> {
        Self::new(mu, PairNumberKind::Thermal { modes })
    }

    /// Probability generating function `G(x) = E[x^n]` for `x ∈ [0, 1]`.
    pub fn pgf(&self, x: f64) -> f64 {
        let deficit = self.mu * (1.0 - x);
        match self.kind {
            PairNumberKind::Poisson => (-deficit).exp(),
            PairNumberKind::Thermal { modes } => {
                let k = f64::from(modes);
                (-k * (deficit / k).ln_1p()).exp()
            }
        }
    }

    /// `P(n)` pairs in one pulse.
    pub fn pmf(&self, n: u64) -> f64 {
        let mu = self.mu;
        if mu == 0.0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        let nf = n as f64;
        let log_p = match self.kind {
            PairNumberKind::Poisson => -mu + nf * mu.ln() - ln_factorial(n),
            PairNumberKind::Thermal { modes } => {
                let k = f64::from(modes);
                let r = mu / k;
                ln_binomial(n + u64::from(modes) - 1, n) + nf * r.ln() - (nf + k) * r.ln_1p()
            }
        };
        log_p.exp()
    }

    /// Number of terms `0..truncation()` kept in truncated sums: enough that the
    /// tail mass is below 1e-14, and never fewer than `10 + 20·max(1, μ)`.
    pub fn truncation(&self) -> u64 {
        let floor = (10.0 + 20.0 * self.mu.max(1.0)).ceil() as u64;
        let mut cumulative = 0.0;
        let mut n = 0;
        loop {
            cumulative += self.pmf(n);
            n += 1;
            if (n >= floor && 1.0 - cumulative < 1e-14) || n >= 100_000 {
                return n.max(floor);
            }
        }
    }

    /// `P(0..truncation())` as a vector.
    pub fn pmf_table(&self) -> Vec<f64> {
        (0..self.truncation()).map(|n| self.pmf(n)).collect()
    }

    /// Probability of at least one pair.
    pub fn prob_nonzero(&self) -> f64 {
        match self.kind {
            PairNumberKind::Poisson => -(-self.mu).exp_m1(),
            PairNumberKind::Thermal { modes } => {
                let k = f64::from(modes);
                -(-k * (self.mu / k).ln_1p()).exp_m1()
            }
        }
    }
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// One collection arm: filtering, lumped loss, detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Offset of the channel centre from the pump, nm. The signal arm sits
    /// at `λp - detuning`, the idler arm at `λp + detuning`.
    pub detuning_nm: f64,
    pub filter_bandwidth_nm: f64,
    /// Generation point to detector, dB.
    pub total_loss_db: f64,
    pub detector_efficiency: f64,
    /// Power-independent per-gate noise click probability (dark counts).
    pub noise_per_gate: f64,
    /// Pump-leakage click probability per gate per watt of peak pump power.
    #[serde(default)]
    pub leakage_per_watt: f64,
}

impl ChannelSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.total_loss_db >= 0.0) || !self.total_loss_db.is_finite() {
            return Err(Error::invalid(
                format!("{name}.total_loss_db"),
                format!("{} dB is negative", self.total_loss_db),
            ));
        }
        if !(self.filter_bandwidth_nm > 0.0) || !self.filter_bandwidth_nm.is_finite() {
            return Err(Error::invalid(format!("{name}.filter_bandwidth_nm"), "must be > 0"));
        }
        if !self.detuning_nm.is_finite() {
            return Err(Error::invalid(format!("{name}.detuning_nm"), "must be finite"));
        }
        for (field, v) in [
            ("detector_efficiency", self.detector_efficiency),
            ("noise_per_gate", self.noise_per_gate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    format!("{name}.{field}"),
                    format!("{v} is not a probability"),
                ));
            }
        }
        if !(self.leakage_per_watt >= 0.0) || !self.leakage_per_watt.is_finite() {
            return Err(Error::invalid(format!("{name}.leakage_per_watt"), "must be >= 0"));
        }
        Ok(())
    }

    /// Per-gate noise click probability at the given pump peak power.
    pub fn noise_at(&self, peak_power_w: f64) -> f64 {
        (self.noise_per_gate + self.leakage_per_watt * peak_power_w).min(1.0)
    }

    /// Copy with the leakage folded into a fixed noise value at `peak_power_w`.
    pub fn at_power(&self, peak_power_w: f64) -> Self {
        Self {
            noise_per_gate: self.noise_at(peak_power_w),
            leakage_per_watt: 0.0,
            ..*self
        }
    }

    /// Copy with photon transmission scaled by `survival` (free-carrier loss).
    pub fn with_survival(&self, survival: f64) -> Self {
        Self {
            detector_efficiency: self.detector_efficiency * survival,
            ..*self
        }
    }
}

/// `10^(-loss/10)`.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::Domain(format!("loss {loss_db} dB is negative")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// End-to-end detection probability of one photon in the arm.
pub fn channel_transmittance(ch: &ChannelSpec) -> Result<f64> {
    Ok(db_to_transmittance(ch.total_loss_db)? * ch.detector_efficiency)
}

/// `P(n)` for the model.
pub fn pair_pmf(model: &PairNumberModel, n: u64) -> f64 {
    model.pmf(n)
}

/// Probability that a threshold detector clicks in one gate: `1 - (1-d) G(1-η)`.
pub fn click_probability(model: &PairNumberModel, eta: f64, noise: f64) -> f64 {
    1.0 - (1.0 - noise) * model.pgf(1.0 - eta)
}

/// Same-gate coincidence probability of the two arms.
///
/// Signal and idler photon numbers are equal per pulse, so the joint
/// no-photon probability is `G((1-η_s)(1-η_i))`.
pub fn coincidence_probability(
    model: &PairNumberModel,
    ch_s: &ChannelSpec,
    ch_i: &ChannelSpec,
) -> Result<f64> {
    let (eta_s, eta_i) = (channel_transmittance(ch_s)?, channel_transmittance(ch_i)?);
    let (q_s, q_i) = (1.0 - ch_s.noise_per_gate, 1.0 - ch_i.noise_per_gate);
    let joint = model.pgf((1.0 - eta_s) * (1.0 - eta_i));
    let p = 1.0 - q_s * model.pgf(1.0 - eta_s) - q_i * model.pgf(1.0 - eta_i) + q_s * q_i * joint;
    Ok(p.max(0.0))
}

/// Coincidence probability between different pulses: the product of singles.
pub fn accidental_probability(
    model: &PairNumberModel,
    ch_s: &ChannelSpec,
    ch_i: &ChannelSpec,
) -> Result<f64> {
    let p_s = click_probability(model, channel_transmittance(ch_s)?, ch_s.noise_per_gate);
    let p_i = click_probability(model, channel_transmittance(ch_i)?, ch_i.noise_per_gate);
    Ok(p_s * p_i)
}

/// Per-gate probabilities of every counting category for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateProbabilities {
    pub signal: f64,
    pub idler: f64,
    pub coincidence: f64,
    pub accidental: f64,
}

impl GateProbabilities {
    /// Evaluates all categories with FCA `survival` folded into both arms.
    pub fn evaluate(
        model: &PairNumberModel,
        ch_s: &ChannelSpec,
        ch_i: &ChannelSpec,
        survival: f64,
    ) -> Result<Self> {
        let (s, i) = (ch_s.with_survival(survival), ch_i.with_survival(survival));
        let signal = click_probability(model, channel_transmittance(&s)?, s.noise_per_gate);
        let idler = click_probability(model, channel_transmittance(&i)?, i.noise_per_gate);
        Ok(Self {
            signal,
            idler,
            coincidence: coincidence_probability(model, &s, &i)?,
            accidental: signal * idler,
        })
    }

    pub fn car(&self) -> Result<f64> {
        if self.accidental <= 0.0 {
            return Err(Error::UndefinedCar);
        }
        Ok((self.coincidence - self.accidental) / self.accidental)
    }
}

/// Coincidence-to-accidental ratio `(P_cc - P_acc) / P_acc`, i.e. `C/A` with
/// `C = C_raw - A`. `survival` is the per-photon FCA survival, applied to
/// each arm's transmittance before evaluation.
pub fn car_analytic(
    model: &PairNumberModel,
    ch_s: &ChannelSpec,
    ch_i: &ChannelSpec,
    survival: f64,
) -> Result<f64> {
    GateProbabilities::evaluate(model, ch_s, ch_i, survival)?.car()
}

/// Noiseless bound `CAR ≈ 1/μ`.
pub fn car_upper_limit(mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mean pair number {mu} must be > 0")));
    }
    Ok(1.0 / mu)
}

/// Expected number of events over an acquisition.
pub fn expected_counts(prob_per_pulse: f64, rep_rate_hz: f64, duration_s: f64) -> f64 {
    prob_per_pulse * rep_rate_hz * duration_s
}

/// Per-gate noise giving a target CAR, by the closed-form inversion
/// `d = sqrt(C_pp / CAR) - μη` where `C_pp` is the noiseless coincidence
/// probability. Symmetric arms assumed.
pub fn noise_for_car(model: &PairNumberModel, eta: f64, target_car: f64) -> Result<f64> {
    let noiseless = ChannelSpec {
        detuning_nm: 0.0,
        filter_bandwidth_nm: 1.0,
        total_loss_db: 0.0,
        detector_efficiency: eta,
        noise_per_gate: 0.0,
        leakage_per_watt: 0.0,
    };
    let c_pp = coincidence_probability(model, &noiseless, &noiseless)?;
    let d = (c_pp / target_car).sqrt() - model.mu * eta;
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!(
            "CAR {target_car} is unreachable by adding noise (solution d = {d})"
        )));
    }
    Ok(d)
}
