//! N identical heralded pair sources behind a binary switch tree.
//!
//! Each unit heralds through its own detector. When at least one unit
//! heralds, the lowest-indexed heralding unit is routed through
//! `ceil(log2 N)` switch stages to the shared output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_statistics::{
    channel_transmittance, click_probability, db_to_transmittance, ChannelSpec, PairNumberKind,
    PairNumberModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplexSpec {
    pub n_units: u32,
    pub per_unit_mu: f64,
    pub kind: PairNumberKind,
    pub herald_channel: ChannelSpec,
    pub output_channel: ChannelSpec,
    /// Insertion loss of one switch stage, dB.
    pub switch_loss_db: f64,
}

impl MultiplexSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::invalid("multiplex.n_units", "must be >= 1"));
        }
        if !(self.switch_loss_db >= 0.0) || !self.switch_loss_db.is_finite() {
            return Err(Error::invalid("multiplex.switch_loss_db", "must be >= 0"));
        }
        self.herald_channel.validate("multiplex.herald_channel")?;
        self.output_channel.validate("multiplex.output_channel")?;
        self.model().map(|_| ())
    }

    pub fn model(&self) -> Result<PairNumberModel> {
        PairNumberModel::new(self.per_unit_mu, self.kind)
    }

    /// Depth of the binary routing tree.
    pub fn switch_stages(&self) -> u32 {
        self.n_units.max(1).next_power_of_two().trailing_zeros()
    }

    /// Transmission from a unit to the output, switch tree and output channel included.
    pub fn routing_transmittance(&self) -> Result<f64> {
        let switch = db_to_transmittance(self.switch_loss_db * f64::from(self.switch_stages()))?;
        Ok(switch * channel_transmittance(&self.output_channel)?)
    }

    fn herald_click(&self) -> Result<f64> {
        let eta = channel_transmittance(&self.herald_channel)?;
        Ok(click_probability(&self.model()?, eta, self.herald_channel.noise_per_gate))
    }
}

/// `1 - (1 - p_h)^N`.
pub fn any_herald_probability(p_herald: f64, n_units: u32) -> f64 {
    if p_herald >= 1.0 {
        return 1.0;
    }
    -(f64::from(n_units) * (-p_herald).ln_1p()).exp_m1()
}

/// Probability that at least one of the units heralds in a clock cycle.
pub fn herald_success_probability(spec: &MultiplexSpec) -> Result<f64> {
    spec.validate()?;
    Ok(any_herald_probability(spec.herald_click()?, spec.n_units))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldedOutput {
    /// Exactly one photon leaves the routed output, given a herald.
    pub p_single: f64,
    /// The selected unit emitted two or more pairs, given its herald clicked.
    pub p_multi_given_herald: f64,
}

/// Output photon statistics of the selected unit, conditioned on a herald.
///
/// Units are independent and identical, so the selected unit's pair number
/// follows `P(n | herald) ∝ P(n) [1 - (1-d)(1-η_h)^n]` whatever `N` is; `N`
/// enters only through the switch-tree loss.
pub fn heralded_output_stats(spec: &MultiplexSpec) -> Result<HeraldedOutput> {
    spec.validate()?;
    let model = spec.model()?;
    let eta_h = channel_transmittance(&spec.herald_channel)?;
    let q_h = 1.0 - spec.herald_channel.noise_per_gate;
    let t = spec.routing_transmittance()?;

    let mut herald = 0.0;
    let mut single = 0.0;
    let mut multi = 0.0;
    for (n, p) in model.pmf_table().into_iter().enumerate() {
        let w = p * (1.0 - q_h * (1.0 - eta_h).powi(n as i32));
        herald += w;
        if n >= 1 {
            single += w * n as f64 * t * (1.0 - t).powi(n as i32 - 1);
        }
        if n >= 2 {
            multi += w;
        }
    }
    if herald <= 0.0 {
        return Ok(HeraldedOutput {
            p_single: 0.0,
            p_multi_given_herald: 0.0,
        });
    }
    Ok(HeraldedOutput {
        p_single: single / herald,
        p_multi_given_herald: multi / herald,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> ChannelSpec {
        ChannelSpec {
            detuning_nm: 4.8,
            filter_bandwidth_nm: 0.5,
            total_loss_db: 0.0,
            detector_efficiency: 1.0,
            noise_per_gate: 0.0,
            leakage_per_watt: 0.0,
        }
    }

    fn spec(n_units: u32, mu: f64) -> MultiplexSpec {
        MultiplexSpec {
            n_units,
            per_unit_mu: mu,
            kind: PairNumberKind::Poisson,
            herald_channel: ideal(),
            output_channel: ideal(),
            switch_loss_db: 0.0,
        }
    }

    #[test]
    fn any_herald_examples() {
        assert!((any_herald_probability(0.05, 10) - 0.4013).abs() < 1e-4);
        assert!((any_herald_probability(0.05, 10) - (1.0 - 0.95f64.powi(10))).abs() < 1e-12);
        assert_eq!(any_herald_probability(1.0, 7), 1.0);
        assert!((any_herald_probability(0.2, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_unit_success_is_herald_click() {
        let s = spec(1, 0.006);
        let p = herald_success_probability(&s).unwrap();
        assert!((p - (1.0 - (-0.006f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn switch_stages_round_up() {
        let stages: Vec<u32> = [1, 2, 3, 4, 5, 8, 9].iter().map(|&n| spec(n, 0.0).switch_stages()).collect();
        assert_eq!(stages, vec![0, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn zero_mu_gives_zero_stats() {
        let out = heralded_output_stats(&spec(4, 0.0)).unwrap();
        assert_eq!((out.p_single, out.p_multi_given_herald), (0.0, 0.0));
    }

    #[test]
    fn multi_pair_fraction_is_about_half_mu() {
        let out = heralded_output_stats(&spec(1, 0.006)).unwrap();
        assert!((out.p_multi_given_herald - 3.0e-3).abs() < 1e-4);
    }

    #[test]
    fn switch_loss_reduces_single_probability() {
        let mut s = spec(16, 0.006);
        let lossless = heralded_output_stats(&s).unwrap().p_single;
        s.switch_loss_db = 0.5;
        let lossy = heralded_output_stats(&s).unwrap().p_single;
        assert!(lossy < lossless);
        let t = 10f64.powf(-0.2);
        assert!((lossy / lossless - t).abs() < 0.01);
    }

    #[test]
    fn rejects_zero_units() {
        assert!(herald_success_probability(&spec(0, 0.006)).is_err());
    }
}
