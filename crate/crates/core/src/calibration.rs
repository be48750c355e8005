//! Solves the unmeasured model parameters from observable anchors.
//!
//! Anchors and the parameter each one fixes:
//!
//! | anchor                         | parameter                           |
//! |--------------------------------|-------------------------------------|
//! | mean pairs μ at power P        | `γ_eff L = √μ / P` (quadratic law)  |
//! | roll-off δ at power P          | `tpa_strength`                      |
//! | CAR at power P                 | per-gate noise at that power        |
//! | CAR maximum at power P         | dark/leakage split, or `fca_strength` |
//!
//! The roll-off is measured against the same model with nonlinear absorption
//! switched off. The last three anchors interact weakly, so they are solved
//! in a short fixed-point loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::RunConfig;
use crate::numeric::bisect;
use crate::waveguide::{effective_gamma, slowdown_factor};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// `(μ, P)`.
    pub mu_at: Option<(f64, f64)>,
    /// `(CAR, P)`.
    pub car_at: Option<(f64, f64)>,
    /// Power at which CAR(P) peaks.
    pub car_peak_w: Option<f64>,
    /// `(fractional drop of C below the absorption-free curve, P)`.
    pub deviation_at: Option<(f64, f64)>,
}

/// Which parameter moves the CAR maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMechanism {
    /// Split the per-gate noise into dark counts and pump leakage ∝ P.
    #[default]
    Leakage,
    /// Constant noise; free-carrier survival of the photons sets the peak.
    Fca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma_eff_length: f64,
    pub gamma_base: f64,
    pub noise_per_gate: f64,
    pub leakage_per_watt: f64,
    pub tpa_strength: f64,
    pub fca_strength: f64,
    /// `(anchor, achieved - target)` for each anchor supplied.
    pub residuals: Vec<(String, f64)>,
}

impl Calibration {
    /// Writes the calibrated parameters into a copy of `cfg` (both arms).
    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut out = cfg.clone();
        out.waveguide.gamma_base = self.gamma_base;
        out.waveguide.tpa_strength = self.tpa_strength;
        out.waveguide.fca_strength = self.fca_strength;
        for ch in [&mut out.channels.signal, &mut out.channels.idler] {
            ch.noise_per_gate = self.noise_per_gate;
            ch.leakage_per_watt = self.leakage_per_watt;
        }
        out
    }
}

/// Accepted residual per anchor: absolute for μ, roll-off and CAR, relative
/// CAR slope per watt for the peak.
fn tolerance(anchor: &str) -> f64 {
    match anchor {
        "car" => 1e-5,
        "peak" => 1e-3,
        _ => 1e-6,
    }
}

/// Net coincidence probability per gate.
fn net_coincidence(cfg: &RunConfig) -> Result<f64> {
    let p = cfg.gate_probabilities()?;
    Ok(p.coincidence - p.accidental)
}

fn car_at(cfg: &RunConfig, power: f64) -> Result<f64> {
    cfg.with_power(power).gate_probabilities()?.car()
}

/// Central-difference slope of CAR(P).
fn car_slope(cfg: &RunConfig, power: f64) -> Result<f64> {
    let h = 1e-4 * power.max(1e-3);
    Ok((car_at(cfg, power + h)? - car_at(cfg, power - h)?) / (2.0 * h))
}

/// Fractional drop of net coincidences below the absorption-free model.
pub fn rolloff(cfg: &RunConfig, power: f64) -> Result<f64> {
    let at = cfg.with_power(power);
    let mut free = at.clone();
    free.waveguide.tpa_strength = 0.0;
    free.waveguide.fca_strength = 0.0;
    Ok(1.0 - net_coincidence(&at)? / net_coincidence(&free)?)
}

fn set_noise(cfg: &mut RunConfig, dark: f64, leakage: f64) {
    for ch in [&mut cfg.channels.signal, &mut cfg.channels.idler] {
        ch.noise_per_gate = dark;
        ch.leakage_per_watt = leakage;
    }
}

fn lift<T>(r: Result<T>) -> f64
where
    T: Into<f64>,
{
    r.map(Into::into).unwrap_or(f64::NAN)
}

/// Solves the parameters fixed by `targets`; the rest keep their values in `cfg`.
pub fn calibrate(
    cfg: &RunConfig,
    targets: &CalibrationTargets,
    mechanism: PeakMechanism,
) -> Result<Calibration> {
    cfg.validate()?;
    let mut work = cfg.clone();

    if let Some((mu, power)) = targets.mu_at {
        if !(mu > 0.0) || !(power > 0.0) {
            return Err(Error::invalid("targets.mu", "μ and P must be positive"));
        }
        let gamma_eff = mu.sqrt() / (power * work.waveguide.length_m);
        let n_g = work
            .waveguide
            .group_index_profile
            .group_index_at(work.pump.wavelength_nm)?;
        work.waveguide.gamma_base = gamma_eff / slowdown_factor(n_g, work.waveguide.n_ref)?;
    }
    if targets.car_peak_w.is_some() && targets.car_at.is_none() {
        return Err(Error::invalid(
            "targets.peak",
            "a CAR-peak anchor needs a CAR anchor to fix the noise level",
        ));
    }
    if mechanism == PeakMechanism::Fca && targets.car_peak_w.is_some() {
        let noise = work.channels.signal.noise_at(targets.car_at.unwrap().1);
        set_noise(&mut work, noise, 0.0);
    }

    for _ in 0..8 {
        if let Some((drop, power)) = targets.deviation_at {
            work.waveguide.tpa_strength = solve_tpa(&work, drop, power)?;
        }
        if let Some((car, power)) = targets.car_at {
            let total = solve_noise_total(&work, car, power)?;
            match (targets.car_peak_w, mechanism) {
                (None, _) => set_noise(&mut work, total, 0.0),
                (Some(peak), PeakMechanism::Leakage) => {
                    let dark_fraction = bisect(
                        |f| {
                            let mut trial = work.clone();
                            set_noise(&mut trial, f * total, (1.0 - f) * total / power);
                            lift(car_slope(&trial, peak))
                        },
                        0.0,
                        1.0,
                        1e-12,
                    )?;
                    set_noise(
                        &mut work,
                        dark_fraction * total,
                        (1.0 - dark_fraction) * total / power,
                    );
                }
                (Some(peak), PeakMechanism::Fca) => {
                    set_noise(&mut work, total, 0.0);
                    work.waveguide.fca_strength = bisect(
                        |f| {
                            let mut trial = work.clone();
                            trial.waveguide.fca_strength = f;
                            lift(car_slope(&trial, peak))
                        },
                        0.0,
                        1e3,
                        1e-12,
                    )?;
                }
            }
        }
    }

    let mut residuals = Vec::new();
    if let Some((mu, power)) = targets.mu_at {
        let gamma = effective_gamma(&work.waveguide, work.pump.wavelength_nm)?;
        let achieved = (gamma * power * work.waveguide.length_m).powi(2);
        residuals.push(("mu".to_string(), achieved - mu));
    }
    if let Some((drop, power)) = targets.deviation_at {
        residuals.push(("deviation".to_string(), rolloff(&work, power)? - drop));
    }
    if let Some((car, power)) = targets.car_at {
        residuals.push(("car".to_string(), car_at(&work, power)? - car));
    }
    if let Some(peak) = targets.car_peak_w {
        // Slope expressed as a relative change of CAR per watt.
        let rel = car_slope(&work, peak)? / car_at(&work, peak)?;
        residuals.push(("peak".to_string(), rel));
    }
    if residuals.iter().any(|(name, r)| !(r.abs() <= tolerance(name))) {
        let listing: Vec<String> = residuals.iter().map(|(n, r)| format!("{n}={r:e}")).collect();
        return Err(Error::NonConvergence(format!(
            "calibration residuals out of tolerance: {}",
            listing.join(", ")
        )));
    }

    let gamma_eff = effective_gamma(&work.waveguide, work.pump.wavelength_nm)?;
    Ok(Calibration {
        gamma_eff_length: gamma_eff * work.waveguide.length_m,
        gamma_base: work.waveguide.gamma_base,
        noise_per_gate: work.channels.signal.noise_per_gate,
        leakage_per_watt: work.channels.signal.leakage_per_watt,
        tpa_strength: work.waveguide.tpa_strength,
        fca_strength: work.waveguide.fca_strength,
        residuals,
    })
}

fn solve_tpa(cfg: &RunConfig, drop: f64, power: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&drop) {
        return Err(Error::invalid("targets.deviation", "drop must lie in [0, 1)"));
    }
    let mut trial = cfg.clone();
    trial.waveguide.tpa_strength = 0.0;
    let floor = rolloff(&trial, power)?;
    if floor > drop {
        return Err(Error::NonConvergence(format!(
            "free-carrier absorption alone rolls off {floor:.3} at {power} W, above the {drop} target"
        )));
    }
    let mut hi = 1.0;
    loop {
        trial.waveguide.tpa_strength = hi;
        if rolloff(&trial, power)? > drop {
            break;
        }
        hi *= 4.0;
        if hi > 1e12 {
            return Err(Error::NonConvergence("no TPA strength reaches the roll-off".into()));
        }
    }
    bisect(
        |t| {
            let mut trial = cfg.clone();
            trial.waveguide.tpa_strength = t;
            lift(rolloff(&trial, power)) - drop
        },
        0.0,
        hi,
        1e-9,
    )
}

/// Per-gate noise (same in both arms) at `power` giving the target CAR.
fn solve_noise_total(cfg: &RunConfig, car: f64, power: f64) -> Result<f64> {
    let at = cfg.with_power(power);
    let f = |d: f64| {
        let mut trial = at.clone();
        set_noise(&mut trial, d, 0.0);
        lift(trial.gate_probabilities().and_then(|p| p.car())) - car
    };
    // CAR falls monotonically with noise; start just above zero where it is finite.
    bisect(f, 1e-15, 0.5, 1e-16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn mu_anchor_alone_is_square_root_law() {
        let targets = CalibrationTargets {
            mu_at: Some((0.006, 0.23)),
            ..Default::default()
        };
        let cal = calibrate(&presets::paper_fig3(), &targets, PeakMechanism::Leakage).unwrap();
        assert!((cal.gamma_eff_length - 0.337).abs() < 1e-3, "{}", cal.gamma_eff_length);
        assert!((cal.gamma_eff_length - 0.006f64.sqrt() / 0.23).abs() < 1e-12);
    }

    #[test]
    fn car_anchor_alone_sets_constant_noise() {
        let targets = CalibrationTargets {
            car_at: Some((12.8, 0.23)),
            ..Default::default()
        };
        let mut cfg = presets::paper_counting();
        cfg.run.model_kind = crate::pair_statistics::PairNumberKind::Poisson;
        let cal = calibrate(&cfg, &targets, PeakMechanism::Leakage).unwrap();
        assert_eq!(cal.leakage_per_watt, 0.0);
        assert!((cal.noise_per_gate - 1.034e-4).abs() < 2e-7, "{}", cal.noise_per_gate);
    }

    #[test]
    fn peak_without_car_is_rejected() {
        let targets = CalibrationTargets {
            car_peak_w: Some(0.23),
            ..Default::default()
        };
        assert!(calibrate(&presets::paper_fig3(), &targets, PeakMechanism::Leakage).is_err());
    }
}
