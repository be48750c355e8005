//! Slow-light waveguide model.
//!
//! Turns device and pump parameters into the quantities that drive pair
//! generation: the slow-light enhanced nonlinearity, the pump-integrated
//! interaction strength under linear loss and two-photon absorption, the
//! free-carrier survival of generated photons, and the phase-matching
//! efficiency derived from a sampled group-index profile.
//!
//! Wavelengths are in nanometres throughout the public surface; lengths in
//! metres, powers in watts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fit_quadratic, interp_linear};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Upper end of the peak-power range over which the scalar pump model is trusted.
pub const MAX_PEAK_POWER_W: f64 = 10.0;

/// One row of a group-index table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSample {
    pub wavelength_nm: f64,
    pub group_index: f64,
    pub transmission_db: f64,
}

/// Group index (and measured transmission) sampled against wavelength.
///
/// Always sorted ascending with at least two samples and `n_g >= 1`.
/// Lookups between samples interpolate linearly; lookups outside the sampled
/// window are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ProfileSample>", into = "Vec<ProfileSample>")]
pub struct GroupIndexProfile {
    wavelengths: Vec<f64>,
    group_indices: Vec<f64>,
    transmissions: Vec<f64>,
}

impl GroupIndexProfile {
    pub const CSV_HEADER: &'static str = "wavelength_nm,group_index,transmission_db";

    pub fn new(samples: Vec<ProfileSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid(
                "group_index_profile",
                format!("need at least 2 samples, got {}", samples.len()),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.wavelength_nm.is_finite() || s.wavelength_nm <= 0.0 {
                return Err(Error::invalid(
                    "group_index_profile",
                    format!("row {i}: wavelength must be positive"),
                ));
            }
            if !(s.group_index >= 1.0) || !s.group_index.is_finite() {
                return Err(Error::invalid(
                    "group_index_profile",
                    format!("row {i}: group index {} < 1", s.group_index),
                ));
            }
            if !s.transmission_db.is_finite() {
                return Err(Error::invalid(
                    "group_index_profile",
                    format!("row {i}: transmission is not finite"),
                ));
            }
        }
        if samples
            .windows(2)
            .any(|w| w[1].wavelength_nm <= w[0].wavelength_nm)
        {
            return Err(Error::invalid(
                "group_index_profile",
                "wavelengths must be strictly ascending",
            ));
        }
        Ok(Self {
            wavelengths: samples.iter().map(|s| s.wavelength_nm).collect(),
            group_indices: samples.iter().map(|s| s.group_index).collect(),
            transmissions: samples.iter().map(|s| s.transmission_db).collect(),
        })
    }

    /// Synthetic dispersion-engineered profile: flat `n_g = 30` over
    /// 1545.5–1560.5 nm (15 nm centred on 1553 nm), ramping to 60 within 2 nm
    /// on either side and staying there out to 1525/1575 nm.
    pub fn synthetic_slow_light() -> Self {
        let rows = [
            (1525.0, 60.0, -8.0),
            (1543.5, 60.0, -8.0),
            (1545.5, 30.0, -9.5),
            (1560.5, 30.0, -9.5),
            (1562.5, 60.0, -8.0),
            (1575.0, 60.0, -8.0),
        ];
        Self::new(
            rows.iter()
                .map(|&(wavelength_nm, group_index, transmission_db)| ProfileSample {
                    wavelength_nm,
                    group_index,
                    transmission_db,
                })
                .collect(),
        )
        .expect("built-in profile is valid")
    }

    /// Parses the plain-text CSV form (`wavelength_nm,group_index,transmission_db`).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == Self::CSV_HEADER => {}
            Some((_, header)) => {
                return Err(Error::invalid(
                    "group_index_profile",
                    format!("expected header `{}`, found `{}`", Self::CSV_HEADER, header.trim()),
                ))
            }
            None => return Err(Error::invalid("group_index_profile", "empty profile file")),
        }
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::invalid(
                    "group_index_profile",
                    format!("line {}: expected 3 fields, found {}", idx + 1, fields.len()),
                ));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::invalid(
                        "group_index_profile",
                        format!("line {}: `{s}`: {e}", idx + 1),
                    )
                })
            };
            samples.push(ProfileSample {
                wavelength_nm: parse(fields[0])?,
                group_index: parse(fields[1])?,
                transmission_db: parse(fields[2])?,
            });
        }
        Self::new(samples)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in self.samples() {
            out.push_str(&format!(
                "{},{},{}\n",
                s.wavelength_nm, s.group_index, s.transmission_db
            ));
        }
        out
    }

    pub fn samples(&self) -> Vec<ProfileSample> {
        self.wavelengths
            .iter()
            .zip(&self.group_indices)
            .zip(&self.transmissions)
            .map(|((&wavelength_nm, &group_index), &transmission_db)| ProfileSample {
                wavelength_nm,
                group_index,
                transmission_db,
            })
            .collect()
    }

    /// Sampled wavelength window `(min, max)` in nm.
    pub fn range(&self) -> (f64, f64) {
        (self.wavelengths[0], self.wavelengths[self.wavelengths.len() - 1])
    }

    pub fn group_index_at(&self, wavelength_nm: f64) -> Result<f64> {
        interp_linear(&self.wavelengths, &self.group_indices, wavelength_nm)
            .ok_or_else(|| self.out_of_range(wavelength_nm))
    }

    pub fn transmission_db_at(&self, wavelength_nm: f64) -> Result<f64> {
        interp_linear(&self.wavelengths, &self.transmissions, wavelength_nm)
            .ok_or_else(|| self.out_of_range(wavelength_nm))
    }

    fn out_of_range(&self, value: f64) -> Error {
        let (min, max) = self.range();
        Error::OutOfRange {
            what: "wavelength_nm",
            value,
            min,
            max,
        }
    }
}

impl TryFrom<Vec<ProfileSample>> for GroupIndexProfile {
    type Error = Error;
    fn try_from(samples: Vec<ProfileSample>) -> Result<Self> {
        Self::new(samples)
    }
}

impl From<GroupIndexProfile> for Vec<ProfileSample> {
    fn from(p: GroupIndexProfile) -> Self {
        p.samples()
    }
}

/// Geometry, loss and nonlinearity of the slow-light device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSpec {
    /// Active length, m.
    pub length_m: f64,
    /// Nonlinear parameter of a fast-light reference guide at `n_ref`, W⁻¹m⁻¹.
    pub gamma_base: f64,
    /// Group index of the reference guide.
    pub n_ref: f64,
    pub group_index_profile: GroupIndexProfile,
    /// Linear propagation loss, dB/m.
    pub linear_loss_db_per_m: f64,
    /// Slow-light scaled two-photon absorption coefficient in `dP/dz = -α P - tpa P²`, W⁻¹m⁻¹.
    pub tpa_strength: f64,
    /// Free-carrier parameter in the photon survival `1 / (1 + fca P²)`, W⁻².
    pub fca_strength: f64,
}

impl WaveguideSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_m > 0.0) || !self.length_m.is_finite() {
            return Err(Error::invalid("waveguide.length_m", "must be > 0"));
        }
        if !(self.gamma_base >= 0.0) || !self.gamma_base.is_finite() {
            return Err(Error::invalid("waveguide.gamma_base", "must be >= 0"));
        }
        if !(self.n_ref >= 1.0) || !self.n_ref.is_finite() {
            return Err(Error::invalid("waveguide.n_ref", "must be >= 1"));
        }
        if !(self.linear_loss_db_per_m >= 0.0) || !self.linear_loss_db_per_m.is_finite() {
            return Err(Error::invalid("waveguide.linear_loss_db_per_m", "must be >= 0"));
        }
        if !(self.tpa_strength >= 0.0) || !self.tpa_strength.is_finite() {
            return Err(Error::invalid("waveguide.tpa_strength", "must be >= 0"));
        }
        if !(self.fca_strength >= 0.0) || !self.fca_strength.is_finite() {
            return Err(Error::invalid("waveguide.fca_strength", "must be >= 0"));
        }
        Ok(())
    }

    /// Linear power attenuation coefficient, m⁻¹.
    pub fn alpha_per_m(&self) -> f64 {
        self.linear_loss_db_per_m * std::f64::consts::LN_10 / 10.0
    }
}

/// Pulsed pump as seen at the waveguide input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub wavelength_nm: f64,
    pub pulse_fwhm_s: f64,
    /// Effective (gated) repetition rate, Hz.
    pub rep_rate_hz: f64,
    /// Coupled peak power, W.
    pub peak_power_w: f64,
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("pump.wavelength_nm", self.wavelength_nm),
            ("pump.pulse_fwhm_s", self.pulse_fwhm_s),
            ("pump.rep_rate_hz", self.rep_rate_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(field, "must be > 0"));
            }
        }
        if !(0.0..=MAX_PEAK_POWER_W).contains(&self.peak_power_w) {
            return Err(Error::invalid(
                "pump.peak_power_w",
                format!("{} W outside [0, {MAX_PEAK_POWER_W}] W", self.peak_power_w),
            ));
        }
        Ok(())
    }

    pub fn with_power(mut self, peak_power_w: f64) -> Self {
        self.peak_power_w = peak_power_w;
        self
    }

    /// Transform-limited Gaussian spectral FWHM in nm (time-bandwidth product 0.441).
    pub fn spectral_fwhm_nm(&self) -> f64 {
        let lambda_m = self.wavelength_nm * 1e-9;
        0.441 * lambda_m * lambda_m / (SPEED_OF_LIGHT * self.pulse_fwhm_s) * 1e9
    }
}

/// Nonlinear enhancement of slow light relative to a reference guide: `(n_g / n_ref)²`.
pub fn slowdown_factor(n_g: f64, n_ref: f64) -> Result<f64> {
    if !(n_g >= 1.0) || !(n_ref >= 1.0) {
        return Err(Error::Domain(format!(
            "group indices must be >= 1 (n_g = {n_g}, n_ref = {n_ref})"
        )));
    }
    let ratio = n_g / n_ref;
    Ok(ratio * ratio)
}

/// Slow-light enhanced nonlinear parameter at `wavelength_nm`, W⁻¹m⁻¹.
pub fn effective_gamma(spec: &WaveguideSpec, wavelength_nm: f64) -> Result<f64> {
    let n_g = spec.group_index_profile.group_index_at(wavelength_nm)?;
    Ok(spec.gamma_base * slowdown_factor(n_g, spec.n_ref)?)
}

/// Pump power after propagating `z` metres: solution of `dP/dz = -α P - β P²`.
pub fn pump_power_at(spec: &WaveguideSpec, p0: f64, z: f64) -> f64 {
    let alpha = spec.alpha_per_m();
    let decay = (-alpha * z).exp();
    p0 * decay / (1.0 + spec.tpa_strength * p0 * effective_length(alpha, z))
}

/// `∫₀^L P(z) dz` in W·m, closed form with the lossless and TPA-free limits.
pub fn integrated_pump_power(spec: &WaveguideSpec, p0: f64) -> f64 {
    let l_eff = effective_length(spec.alpha_per_m(), spec.length_m);
    let x = spec.tpa_strength * p0 * l_eff;
    if x < 1e-12 {
        // ln(1+x)/x = 1 - x/2 + O(x²)
        p0 * l_eff * (1.0 - 0.5 * x)
    } else {
        x.ln_1p() / spec.tpa_strength
    }
}

/// `(1 - e^{-αz}) / α`, equal to `z` when α = 0.
fn effective_length(alpha: f64, z: f64) -> f64 {
    if alpha * z < 1e-12 {
        z * (1.0 - 0.5 * alpha * z)
    } else {
        -(-alpha * z).exp_m1() / alpha
    }
}

/// Effective interaction strength `γ_eff ∫ P dz` (dimensionless; the "γPL" of a lossless guide).
pub fn effective_interaction(spec: &WaveguideSpec, pump: &PumpSpec) -> Result<f64> {
    spec.validate()?;
    pump.validate()?;
    let gamma = effective_gamma(spec, pump.wavelength_nm)?;
    Ok(gamma * integrated_pump_power(spec, pump.peak_power_w))
}

/// Mean pairs per pulse in the spontaneous regime, the square of the interaction strength.
pub fn mean_pairs_per_pulse(spec: &WaveguideSpec, pump: &PumpSpec) -> Result<f64> {
    let phi = effective_interaction(spec, pump)?;
    Ok(phi * phi)
}

/// Free-carrier survival probability of each generated signal/idler photon.
pub fn pair_survival(spec: &WaveguideSpec, pump: &PumpSpec) -> f64 {
    let p = pump.peak_power_w;
    1.0 / (1.0 + spec.fca_strength * p * p)
}

/// Idler wavelength fixed by photon-energy conservation `2/λp = 1/λs + 1/λi`.
pub fn energy_conserving_idler(pump_nm: f64, signal_nm: f64) -> Result<f64> {
    if !(pump_nm > 0.0) || !(signal_nm > 0.0) {
        return Err(Error::Domain("wavelengths must be positive".into()));
    }
    let inv = 2.0 / pump_nm - 1.0 / signal_nm;
    if !(inv > 0.0) {
        return Err(Error::Domain(format!(
            "signal at {signal_nm} nm leaves no positive idler frequency for pump at {pump_nm} nm"
        )));
    }
    Ok(1.0 / inv)
}

fn angular_frequency(wavelength_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Wavevector reconstructed from the group-index table, `k(ω) = ∫ n_g/c dω`,
/// on a dense resampling of the profile. The integration constant is arbitrary.
#[derive(Debug, Clone)]
struct DispersionCurve {
    /// Ascending angular frequency, rad/s.
    omega: Vec<f64>,
    /// Relative wavevector, rad/m.
    k: Vec<f64>,
}

impl DispersionCurve {
    const RESAMPLE_STEP_NM: f64 = 0.01;

    fn from_profile(profile: &GroupIndexProfile) -> Self {
        let (min, max) = profile.range();
        let n = (((max - min) / Self::RESAMPLE_STEP_NM).ceil() as usize).max(2) + 1;
        // Walk from long to short wavelength so omega ascends.
        let mut omega = Vec::with_capacity(n);
        let mut n_g = Vec::with_capacity(n);
        for i in 0..n {
            let lambda = max - (max - min) * i as f64 / (n - 1) as f64;
            omega.push(angular_frequency(lambda));
            n_g.push(profile.group_index_at(lambda.clamp(min, max)).unwrap());
        }
        let mut k = Vec::with_capacity(n);
        k.push(0.0);
        for i in 1..n {
            let dk = 0.5 * (n_g[i] + n_g[i - 1]) / SPEED_OF_LIGHT * (omega[i] - omega[i - 1]);
            k.push(k[i - 1] + dk);
        }
        Self { omega, k }
    }

    fn k_at(&self, omega: f64) -> f64 {
        interp_linear(&self.omega, &self.k, omega).expect("omega checked against profile range")
    }

    /// Linear phase mismatch `k_s + k_i - 2 k_p` from a quadratic fitted to
    /// `k(ω)` across the span covered by the two sidebands.
    fn quadratic_mismatch(&self, omega_p: f64, omega_s: f64, omega_i: f64) -> f64 {
        let (lo, hi) = if omega_s < omega_i {
            (omega_s, omega_i)
        } else {
            (omega_i, omega_s)
        };
        if hi - lo == 0.0 {
            return 0.0;
        }
        let start = self.omega.partition_point(|&w| w < lo);
        let end = self.omega.partition_point(|&w| w <= hi);
        let mut xs: Vec<f64> = self.omega[start..end].iter().map(|w| w - omega_p).collect();
        let mut ys: Vec<f64> = self.k[start..end].to_vec();
        for w in [lo, omega_p, hi] {
            xs.push(w - omega_p);
            ys.push(self.k_at(w));
        }
        match fit_quadratic(&xs, &ys) {
            Some([_, c1, c2]) => {
                let ks = c1 * (omega_s - omega_p) + c2 * (omega_s - omega_p).powi(2);
                let ki = c1 * (omega_i - omega_p) + c2 * (omega_i - omega_p).powi(2);
                ks + ki
            }
            None => 0.0,
        }
    }
}

/// Relative SFWM efficiency `sinc²(Δk L / 2)` for a signal detuned by
/// `detuning_nm` to the blue of the pump (negative: to the red). The idler
/// follows from energy conservation. `Δk` combines the quadratic dispersion
/// implied by the group-index profile with the nonlinear term `2 γ_eff P₀`.
pub fn sfwm_relative_efficiency(
    spec: &WaveguideSpec,
    pump: &PumpSpec,
    detuning_nm: f64,
) -> Result<f64> {
    let dk = phase_mismatch(spec, pump, detuning_nm)?;
    let x = 0.5 * dk * spec.length_m;
    let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    Ok(sinc * sinc)
}

/// Total phase mismatch `Δk = (k_s + k_i - 2k_p) + 2 γ_eff P₀`, rad/m.
pub fn phase_mismatch(spec: &WaveguideSpec, pump: &PumpSpec, detuning_nm: f64) -> Result<f64> {
    let profile = &spec.group_index_profile;
    let signal = pump.wavelength_nm - detuning_nm;
    let idler = energy_conserving_idler(pump.wavelength_nm, signal)?;
    for w in [pump.wavelength_nm, signal, idler] {
        profile.group_index_at(w)?;
    }
    let gamma = effective_gamma(spec, pump.wavelength_nm)?;
    let curve = DispersionCurve::from_profile(profile);
    let linear = curve.quadratic_mismatch(
        angular_frequency(pump.wavelength_nm),
        angular_frequency(signal),
        angular_frequency(idler),
    );
    Ok(linear + 2.0 * gamma * pump.peak_power_w)
}
