//! Network configurations and random channel realizations.

use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Relay architecture: one L-antenna relay with full signal sharing, or L
/// single-antenna relays restricted to diagonal weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "MIMO", alias = "mimo", alias = "Mimo")]
    Mimo,
    #[serde(rename = "Distributed", alias = "distributed")]
    Distributed,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Mimo => "MIMO",
            Topology::Distributed => "Distributed",
        }
    }
}

/// Network topology, group sizes, powers, noise levels and budgets (linear
/// units, watts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_relay_antennas: usize,
    pub num_groups: usize,
    pub group_sizes: Vec<usize>,
    pub tx_powers: Vec<f64>,
    pub relay_noise_vars: Vec<f64>,
    /// One entry per user, groups concatenated in order.
    pub user_noise_vars: Vec<f64>,
    pub total_power_budget: f64,
    #[serde(default)]
    pub per_antenna_budgets: Option<Vec<f64>>,
    pub topology: Topology,
}

fn check_len(field: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch {
            field,
            detail: format!("expected length {want}, got {got}"),
        });
    }
    Ok(())
}

fn check_positive(field: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(&value) => Err(Error::NonPositiveParameter { field, value }),
        None => Ok(()),
    }
}

impl NetworkConfig {
    /// Equal-size groups with common transmit power and noise levels, as used
    /// throughout the simulation scenarios.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        num_relay_antennas: usize,
        num_groups: usize,
        users_per_group: usize,
        tx_power: f64,
        relay_noise_var: f64,
        user_noise_var: f64,
        total_power_budget: f64,
        per_antenna_budget: Option<f64>,
    ) -> Self {
        let m = num_groups * users_per_group;
        Self {
            num_relay_antennas,
            num_groups,
            group_sizes: vec![users_per_group; num_groups],
            tx_powers: vec![tx_power; num_groups],
            relay_noise_vars: vec![relay_noise_var; num_relay_antennas],
            user_noise_vars: vec![user_noise_var; m],
            total_power_budget,
            per_antenna_budgets: per_antenna_budget.map(|p| vec![p; num_relay_antennas]),
            topology: Topology::Mimo,
        }
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Total number of users `M`.
    pub fn num_users(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    /// Length of the weight vector: `L²` for a MIMO relay, `L` for distributed relays.
    pub fn weight_dim(&self) -> usize {
        let l = self.num_relay_antennas;
        match self.topology {
            Topology::Mimo => l * l,
            Topology::Distributed => l,
        }
    }

    /// `(group, index-within-group)` for each flat user index.
    pub fn user_pairs(&self) -> Vec<(usize, usize)> {
        self.group_sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &m)| (0..m).map(move |i| (k, i)))
            .collect()
    }

    /// Returns normally iff every invariant holds; errors name the field.
    pub fn validate(&self) -> Result<()> {
        let l = self.num_relay_antennas;
        let g = self.num_groups;
        if l == 0 {
            return Err(Error::DimensionMismatch {
                field: "num_relay_antennas",
                detail: "at least one relay antenna required".into(),
            });
        }
        if g == 0 {
            return Err(Error::DimensionMismatch {
                field: "num_groups",
                detail: "at least one group required".into(),
            });
        }
        check_len("group_sizes", self.group_sizes.len(), g)?;
        if let Some(k) = self.group_sizes.iter().position(|&m| m == 0) {
            return Err(Error::DimensionMismatch {
                field: "group_sizes",
                detail: format!("group {k} is empty"),
            });
        }
        check_len("tx_powers", self.tx_powers.len(), g)?;
        check_len("relay_noise_vars", self.relay_noise_vars.len(), l)?;
        check_len("user_noise_vars", self.user_noise_vars.len(), self.num_users())?;
        check_positive("tx_powers", &self.tx_powers)?;
        check_positive("relay_noise_vars", &self.relay_noise_vars)?;
        check_positive("user_noise_vars", &self.user_noise_vars)?;
        check_positive("total_power_budget", &[self.total_power_budget])?;
        if let Some(b) = &self.per_antenna_budgets {
            check_len("per_antenna_budgets", b.len(), l)?;
            check_positive("per_antenna_budgets", b)?;
        }
        Ok(())
    }
}

/// Free-function form of [`NetworkConfig::validate`].
pub fn validate_config(config: &NetworkConfig) -> Result<()> {
    config.validate()
}

/// Transmitter-to-relay vectors `f_j` and relay-to-user vectors `g_{k,i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// One length-L vector per transmitter.
    pub f: Vec<DVector<Complex64>>,
    /// One length-L vector per user, flat order of [`NetworkConfig::user_pairs`].
    pub g: Vec<DVector<Complex64>>,
    pub seed: u64,
}

impl ChannelRealization {
    /// Checks the vector counts and lengths against `config`.
    pub fn check_dims(&self, config: &NetworkConfig) -> Result<()> {
        let l = config.num_relay_antennas;
        check_len("f", self.f.len(), config.num_groups)?;
        check_len("g", self.g.len(), config.num_users())?;
        for v in self.f.iter().chain(self.g.iter()) {
            check_len("channel vector", v.len(), l)?;
        }
        Ok(())
    }
}

/// Draws every entry of every `f_j` and `g_{k,i}` i.i.d. CN(0, 1); a pure
/// function of `(config, seed)`.
pub fn generate_channels(config: &NetworkConfig, seed: u64) -> Result<ChannelRealization> {
    config.validate()?;
    let l = config.num_relay_antennas;
    let mut rng = rng::stream(seed, Purpose::Channels, &[]);
    let f = (0..config.num_groups)
        .map(|_| rng::complex_normal_vector(&mut rng, l))
        .collect();
    let g = (0..config.num_users())
        .map(|_| rng::complex_normal_vector(&mut rng, l))
        .collect();
    Ok(ChannelRealization { f, g, seed })
}

/// Converts decibels (relative to 1 W) to watts.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_config() -> NetworkConfig {
        NetworkConfig::uniform(8, 2, 8, 1.0, 1.0, 1.0, 1.0, None)
    }

    #[test]
    fn standard_scenario_validates() {
        let cfg = default_config();
        assert_eq!(cfg.num_users(), 16);
        assert_eq!(cfg.weight_dim(), 64);
        validate_config(&cfg).unwrap();
    }

    #[test]
    fn empty_group_rejected() {
        let mut cfg = NetworkConfig::uniform(2, 1, 1, 1.0, 1.0, 1.0, 1.0, None);
        cfg.group_sizes = vec![0];
        cfg.user_noise_vars.clear();
        match validate_config(&cfg) {
            Err(Error::DimensionMismatch { field, .. }) => assert_eq!(field, "group_sizes"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_user_noise_rejected() {
        let mut cfg = default_config();
        cfg.user_noise_vars[3] = 0.0;
        match validate_config(&cfg) {
            Err(Error::NonPositiveParameter { field, .. }) => assert_eq!(field, "user_noise_vars"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_per_antenna_budget_length() {
        let mut cfg = default_config();
        cfg.per_antenna_budgets = Some(vec![1.0; 3]);
        assert!(matches!(
            validate_config(&cfg),
            Err(Error::DimensionMismatch { field: "per_antenna_budgets", .. })
        ));
    }

    #[test]
    fn distributed_dim_is_l() {
        let cfg = default_config().with_topology(Topology::Distributed);
        assert_eq!(cfg.weight_dim(), 8);
    }

    #[test]
    fn channels_are_deterministic() {
        let cfg = default_config();
        let a = generate_channels(&cfg, 42).unwrap();
        let b = generate_channels(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_channels(&cfg, 43).unwrap();
        assert_ne!(a, c);
        a.check_dims(&cfg).unwrap();
    }

    #[test]
    fn json_round_trip_with_null_budgets() {
        let json = r#"{
            "num_relay_antennas": 2, "num_groups": 1, "group_sizes": [2],
            "tx_powers": [1.0], "relay_noise_vars": [1.0, 1.0],
            "user_noise_vars": [1.0, 0.5], "total_power_budget": 2.0,
            "per_antenna_budgets": null, "topology": "MIMO"
        }"#;
        let cfg = NetworkConfig::from_json_str(json).unwrap();
        assert_eq!(cfg.per_antenna_budgets, None);
        assert_eq!(cfg.topology, Topology::Mimo);
        let again = NetworkConfig::from_json_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn json_unknown_key_rejected() {
        let json = r#"{"num_relay_antennas": 2, "bogus": 1}"#;
        assert!(NetworkConfig::from_json_str(json).is_err());
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-15);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
    }
}
