//! Simulation configuration, loaded from JSON.
//!
//! Every field has a default, so a config file only needs to list the values
//! it changes. `{}` is a valid config describing a 100-sphere frictionless
//! sedimentation with the direct inner solver.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vnls::VnlsConfig;

/// Which linear solver handles the Newton systems inside the LCP solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Direct,
    Vnls,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SolverKind::Direct),
            "vnls" => Ok(SolverKind::Vnls),
            other => Err(Error::config("solver", format!("unknown solver `{other}`"))),
        }
    }
}

/// Hollow spherical shell the bodies live in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Container {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Default for Container {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            radius: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Timestep in seconds.
    pub timestep: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: [f64; 3],
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Number of directions in the polyhedral friction cone. Must be even and >= 4.
    pub cone_directions: usize,
    /// Use the normal-only LCP (size n_c) instead of the full frictional one.
    pub frictionless: bool,
    /// `None` removes the container entirely.
    pub container: Option<Container>,
    pub solver: SolverKind,
    pub newton_tolerance: f64,
    pub newton_max_iterations: usize,
    /// Offset the normal rows of the LCP by max(gap, 0) / h so that bodies
    /// detected ahead of contact close the gap exactly instead of stopping
    /// short, and project any remaining overlap out of the positions.
    pub gap_stabilization: bool,
    pub seed: u64,

    // Initial layout.
    pub bodies: usize,
    pub body_radius: f64,
    pub body_mass: f64,

    // Run control.
    pub steps: usize,
    pub snapshot_every: usize,
    /// Export the Newton system every this many steps; 0 disables export.
    pub checkpoint_every: usize,
    /// Which Newton iteration of the LCP solve is captured at a checkpoint.
    pub checkpoint_newton_iteration: usize,

    pub vnls: VnlsConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timestep: 1e-3,
            gravity: [0.0, 0.0, -9.81],
            friction: 0.0,
            cone_directions: 8,
            frictionless: true,
            container: Some(Container::default()),
            solver: SolverKind::Direct,
            newton_tolerance: 1e-8,
            newton_max_iterations: 100,
            gap_stabilization: true,
            seed: 0,
            bodies: 100,
            body_radius: 1.0,
            body_mass: 1.0,
            steps: 10_000,
            snapshot_every: 100,
            checkpoint_every: 0,
            checkpoint_newton_iteration: 1,
            vnls: VnlsConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            Error::config(&field, e.inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(Error::config("timestep", "must be positive and finite"));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("gravity", "must be finite"));
        }
        if !(self.friction >= 0.0) {
            return Err(Error::config("friction", "must be >= 0"));
        }
        if self.cone_directions < 4 || self.cone_directions % 2 != 0 {
            return Err(Error::config(
                "cone_directions",
                "must be even and at least 4",
            ));
        }
        if !(self.newton_tolerance > 0.0) {
            return Err(Error::config("newton_tolerance", "must be positive"));
        }
        if self.newton_max_iterations == 0 {
            return Err(Error::config("newton_max_iterations", "must be positive"));
        }
        if !(self.body_radius > 0.0) {
            return Err(Error::config("body_radius", "must be positive"));
        }
        if !(self.body_mass > 0.0) {
            return Err(Error::config("body_mass", "must be positive"));
        }
        if let Some(c) = &self.container {
            if !(c.radius > self.body_radius) {
                return Err(Error::config(
                    "container.radius",
                    "must exceed the body radius",
                ));
            }
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("snapshot_every", "must be positive"));
        }
        self.vnls.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let c = SimConfig::from_json_str("{}").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!(c.cone_directions, 8);
        assert_eq!(c.friction, 0.0);
        assert_eq!(c.timestep, 1e-3);
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = SimConfig::default();
        c.friction = 0.3;
        c.container = None;
        c.solver = SolverKind::Vnls;
        let back = SimConfig::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parse_errors_name_the_field() {
        match SimConfig::from_json_str(r#"{"vnls": {"samples": "many"}}"#) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "vnls.samples"),
            other => panic!("unexpected {other:?}"),
        }
        match SimConfig::from_json_str(r#"{"timestep": 1e-3, "bogus": 1}"#) {
            Err(Error::InvalidConfig { reason, .. }) => assert!(reason.contains("bogus")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_odd_cone() {
        let err = SimConfig::from_json_str(r#"{"cone_directions": 7}"#).unwrap_err();
        assert!(err.to_string().contains("cone_directions"));
    }

    #[test]
    fn rejects_small_container() {
        let err =
            SimConfig::from_json_str(r#"{"container": {"radius": 0.5}}"#).unwrap_err();
        assert!(err.to_string().contains("container.radius"));
    }

    #[test]
    fn rejects_unknown_field() {
        assert!(SimConfig::from_json_str(r#"{"timestpe": 0.1}"#).is_err());
    }
}
