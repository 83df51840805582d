//! Generalized body state, mass matrix and external forces.
//!
//! Positions and velocities are stored as flat generalized vectors of
//! length `3 * n_b`, body `i` occupying entries `3i..3i+3`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    pub time: f64,
}

impl BodyState {
    pub fn new(
        positions: Vec<f64>,
        velocities: Vec<f64>,
        radii: Vec<f64>,
        masses: Vec<f64>,
    ) -> Result<Self> {
        let state = Self {
            positions,
            velocities,
            radii,
            masses,
            time: 0.0,
        };
        state.validate()?;
        Ok(state)
    }

    /// Bodies at rest at the given centers, all with the same radius and mass.
    pub fn at_rest(centers: &[[f64; 3]], radius: f64, mass: f64) -> Result<Self> {
        let n = centers.len();
        Self::new(
            centers.iter().flatten().copied().collect(),
            vec![0.0; 3 * n],
            vec![radius; n],
            vec![mass; n],
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.radii.len();
        if self.masses.len() != n {
            return Err(Error::invalid(format!(
                "{} radii but {} masses",
                n,
                self.masses.len()
            )));
        }
        if self.positions.len() != 3 * n || self.velocities.len() != 3 * n {
            return Err(Error::invalid(format!(
                "positions/velocities must have length {} (got {}, {})",
                3 * n,
                self.positions.len(),
                self.velocities.len()
            )));
        }
        if let Some(i) = self.radii.iter().position(|r| !(*r > 0.0)) {
            return Err(Error::invalid(format!("radius of body {i} is not positive")));
        }
        if let Some(i) = self.masses.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::invalid(format!("mass of body {i} is not positive")));
        }
        Ok(())
    }

    pub fn n_bodies(&self) -> usize {
        self.radii.len()
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.positions[3 * i..3 * i + 3])
    }

    pub fn velocity(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.velocities[3 * i..3 * i + 3])
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        (0..self.n_bodies()).fold(Vector3::zeros(), |acc, i| {
            acc + self.velocity(i) * self.masses[i]
        })
    }

    /// Largest penetration depth over all body pairs and the container wall
    /// (0 when nothing overlaps).
    pub fn max_overlap(&self, config: &SimConfig) -> f64 {
        let n = self.n_bodies();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let pi = self.position(i);
            for j in i + 1..n {
                let d = (self.position(j) - pi).norm();
                worst = worst.max(self.radii[i] + self.radii[j] - d);
            }
            if let Some(c) = &config.container {
                let d = (pi - Vector3::from(c.center)).norm();
                worst = worst.max(d + self.radii[i] - c.radius);
            }
        }
        worst
    }
}

/// Diagonal generalized mass matrix, each body mass repeated three times.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    pub diag: Vec<f64>,
}

impl MassMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(v).map(|(m, x)| m * x).collect()
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(v).map(|(m, x)| x / m).collect()
    }

    pub fn inverse_diag(&self) -> Vec<f64> {
        self.diag.iter().map(|m| 1.0 / m).collect()
    }
}

pub fn build_mass_matrix(masses: &[f64]) -> Result<MassMatrix> {
    if let Some(i) = masses.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::invalid(format!(
            "mass of body {i} must be positive (got {})",
            masses[i]
        )));
    }
    Ok(MassMatrix {
        diag: masses.iter().flat_map(|&m| [m, m, m]).collect(),
    })
}

/// Gravity on every body: `f[3i..3i+3] = m_i * g`.
pub fn external_force(state: &BodyState, config: &SimConfig) -> Vec<f64> {
    state
        .masses
        .iter()
        .flat_map(|&m| config.gravity.map(|g| m * g))
        .collect()
}

pub fn kinetic_energy(state: &BodyState) -> f64 {
    0.5 * state
        .masses
        .iter()
        .zip(state.velocities.chunks_exact(3))
        .map(|(m, v)| m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum::<f64>()
}
