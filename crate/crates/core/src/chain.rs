//! Physical description and state of a free-floating planar link chain.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-link physical constants.
///
/// Masses are stored in kg; the inverse-mass vector used throughout the
/// equations of motion is derived by [`ChainParams::inverse_masses`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChainParams {
    /// Half-length `l_i` of each link, m.
    pub half_lengths: Vec<f64>,
    /// Mass `m_i` of each link, kg.
    pub masses: Vec<f64>,
    /// Moment of inertia `j_i` of each link about its CM, kg·m².
    pub inertias: Vec<f64>,
    /// CCW angle `ψ_i` from the link x-axis to the thrust direction, rad.
    pub thruster_angles: Vec<f64>,
}

impl ChainParams {
    pub fn new(
        half_lengths: Vec<f64>,
        masses: Vec<f64>,
        inertias: Vec<f64>,
        thruster_angles: Vec<f64>,
    ) -> Result<Self> {
        let params = ChainParams {
            half_lengths,
            masses,
            inertias,
            thruster_angles,
        };
        params.validate()?;
        Ok(params)
    }

    /// Identical links.
    pub fn uniform(n: usize, half_length: f64, mass: f64, inertia: f64, thruster_angles: Vec<f64>) -> Result<Self> {
        Self::new(vec![half_length; n], vec![mass; n], vec![inertia; n], thruster_angles)
    }

    pub fn n(&self) -> usize {
        self.half_lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::invalid("halfLengths", "a chain needs at least one link"));
        }
        let arrays: [(&str, &[f64], bool); 4] = [
            ("halfLengths", &self.half_lengths, true),
            ("masses", &self.masses, true),
            ("inertias", &self.inertias, true),
            ("thrusterAngles", &self.thruster_angles, false),
        ];
        for (name, values, positive) in arrays {
            if values.len() != n {
                return Err(Error::invalid(
                    name,
                    format!("expected {n} entries (one per link), got {}", values.len()),
                ));
            }
            for (i, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("{name}[{i}]"), "must be finite"));
                }
                if positive && v <= 0.0 {
                    return Err(Error::invalid(
                        format!("{name}[{i}]"),
                        format!("must be strictly positive, got {v}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `m̄ = (1/m_1, …, 1/m_N)`.
    pub fn inverse_masses(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.masses.iter().map(|m| 1.0 / m))
    }

    pub fn half_length_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.half_lengths)
    }

    pub fn mass_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.masses)
    }

    pub fn inertia_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.inertias)
    }

    pub fn thruster_angle_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.thruster_angles)
    }

    /// Same geometry and thrusters with different inertial parameters.
    pub fn with_inertial(&self, masses: &[f64], inertias: &[f64]) -> Result<Self> {
        Self::new(
            self.half_lengths.clone(),
            masses.to_vec(),
            inertias.to_vec(),
            self.thruster_angles.clone(),
        )
    }
}

/// Full simulation state `(θ, p, θ̇, ṗ)` of the chain.
///
/// Angles accumulate continuously and are never wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: DVector<f64>,
    pub cm: Vector2<f64>,
    pub theta_dot: DVector<f64>,
    pub cm_dot: Vector2<f64>,
}

impl ChainState {
    pub fn at_rest(n: usize) -> Self {
        ChainState {
            theta: DVector::zeros(n),
            cm: Vector2::zeros(),
            theta_dot: DVector::zeros(n),
            cm_dot: Vector2::zeros(),
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// Flattened as `(θ, p, θ̇, ṗ)`, length `2N + 4`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        let mut x = DVector::zeros(2 * n + 4);
        x.rows_mut(0, n).copy_from(&self.theta);
        x.fixed_rows_mut::<2>(n).copy_from(&self.cm);
        x.rows_mut(n + 2, n).copy_from(&self.theta_dot);
        x.fixed_rows_mut::<2>(2 * n + 2).copy_from(&self.cm_dot);
        x
    }

    pub fn from_vector(x: &DVector<f64>) -> Result<Self> {
        if x.len() < 6 || !(x.len() - 4).is_multiple_of(2) {
            return Err(Error::invalid(
                "state",
                format!("flattened length must be 2N + 4 with N >= 1, got {}", x.len()),
            ));
        }
        let n = (x.len() - 4) / 2;
        Ok(ChainState {
            theta: x.rows(0, n).into_owned(),
            cm: x.fixed_rows::<2>(n).into_owned(),
            theta_dot: x.rows(n + 2, n).into_owned(),
            cm_dot: x.fixed_rows::<2>(2 * n + 2).into_owned(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
            && self.theta_dot.iter().all(|v| v.is_finite())
            && self.cm.iter().all(|v| v.is_finite())
            && self.cm_dot.iter().all(|v| v.is_finite())
    }

    /// Total linear momentum for the given chain.
    pub fn linear_momentum(&self, params: &ChainParams) -> Vector2<f64> {
        self.cm_dot * params.total_mass()
    }
}

/// Thruster force magnitudes `u_i`, N, one per link.
pub type ThrusterCommand = DVector<f64>;

/// Wraps an angle to `(-π, π]`. Used only when reporting.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}
