//! Local observability of the augmented state `(θ, θ̇, m, j)` from one CM
//! IMU per link under thruster excitation.
//!
//! The observability matrix is assembled in transformed coordinates
//! `x' = (θ, z, m̄, j)` with `z = M_θ⁻¹ J⁻¹ θ̇` and `m̄` the inverse masses,
//! from the gradients of the zeroth-order Lie derivative (the measurement)
//! and of the first-order Lie derivatives along each thruster field. After
//! reordering the columns to `(θ, m̄, z, j)` it is block diagonal:
//!
//! ```text
//! O = [ Ω₁  0     0  ]   Ω₁ = [ −M̄ S̄ diag(u)   diag(f_x) ]
//!     [ 0   J M_θ 0  ]        [  M̄ C̄ diag(u)   diag(f_y) ]
//!     [ 0   0     Ω₂ ]   Ω₂ = stack_i diag(L F M̄ e_i)
//! ```
//!
//! Off-diagonal gradient blocks that are nonzero but carry no additional rank
//! are assembled as zero, so the numeric rank can only understate local
//! observability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainParams, ChainState};
use crate::dynamics::ChainModel;
use crate::error::{Error, Result};
use crate::forces::ExternalForces;

/// Estimation state `(θ, θ̇, m, j)`, dimension 4N. Masses in kg, inertias in
/// kg·m².
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub theta: DVector<f64>,
    pub theta_dot: DVector<f64>,
    pub masses: DVector<f64>,
    pub inertias: DVector<f64>,
}

impl AugmentedState {
    pub fn from_chain(params: &ChainParams, state: &ChainState) -> Self {
        AugmentedState {
            theta: state.theta.clone(),
            theta_dot: state.theta_dot.clone(),
            masses: params.mass_vector(),
            inertias: params.inertia_vector(),
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        let mut x = DVector::zeros(4 * n);
        x.rows_mut(0, n).copy_from(&self.theta);
        x.rows_mut(n, n).copy_from(&self.theta_dot);
        x.rows_mut(2 * n, n).copy_from(&self.masses);
        x.rows_mut(3 * n, n).copy_from(&self.inertias);
        x
    }

    pub fn from_vector(x: &DVector<f64>) -> Result<Self> {
        if x.is_empty() || !x.len().is_multiple_of(4) {
            return Err(Error::invalid(
                "augmented state",
                format!("length must be 4N with N >= 1, got {}", x.len()),
            ));
        }
        let n = x.len() / 4;
        Ok(AugmentedState {
            theta: x.rows(0, n).into_owned(),
            theta_dot: x.rows(n, n).into_owned(),
            masses: x.rows(2 * n, n).into_owned(),
            inertias: x.rows(3 * n, n).into_owned(),
        })
    }

    /// The chain with this state's inertial parameters and `geometry`'s
    /// lengths and thruster angles.
    pub fn model(&self, geometry: &ChainParams) -> Result<ChainModel> {
        if self.n() != geometry.n() {
            return Err(Error::Dimension {
                what: "augmented state links",
                expected: geometry.n(),
                got: self.n(),
            });
        }
        ChainModel::new(geometry.with_inertial(self.masses.as_slice(), self.inertias.as_slice())?)
    }
}

/// Coordinates `x' = (θ, z, m̄, j)` in which the Lie derivatives are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub theta: DVector<f64>,
    pub z: DVector<f64>,
    pub inverse_masses: DVector<f64>,
    pub inertias: DVector<f64>,
}

impl TransformedState {
    pub fn from_augmented(geometry: &ChainParams, aug: &AugmentedState) -> Result<Self> {
        let model = aug.model(geometry)?;
        let scaled = aug.theta_dot.component_div(&aug.inertias);
        let z = model
            .mass_matrix(&aug.theta)
            .cholesky()
            .ok_or_else(|| Error::Numerical("M_θ is not positive definite".into()))?
            .solve(&scaled);
        Ok(TransformedState {
            theta: aug.theta.clone(),
            z,
            inverse_masses: aug.masses.map(|m| 1.0 / m),
            inertias: aug.inertias.clone(),
        })
    }

    fn model(&self, geometry: &ChainParams) -> Result<ChainModel> {
        let masses: Vec<f64> = self.inverse_masses.iter().map(|b| 1.0 / b).collect();
        ChainModel::new(geometry.with_inertial(&masses, self.inertias.as_slice())?)
    }
}

/// Measurement `(M̄ f_x; M̄ f_y; J M_θ z)` as a function of the transformed
/// state, for fixed thrust and external force.
pub fn transformed_measurement(
    geometry: &ChainParams,
    x: &TransformedState,
    u: &DVector<f64>,
    external: &ExternalForces,
) -> Result<DVector<f64>> {
    let model = x.model(geometry)?;
    let n = model.n();
    let (fx, fy) = model.net_forces(&x.theta, u, external);
    let rates = (model.mass_matrix(&x.theta) * &x.z).component_mul(&x.inertias);
    let mut h = DVector::zeros(3 * n);
    h.rows_mut(0, n).copy_from(&x.inverse_masses.component_mul(&fx));
    h.rows_mut(n, n).copy_from(&x.inverse_masses.component_mul(&fy));
    h.rows_mut(2 * n, n).copy_from(&rates);
    Ok(h)
}

/// First-order Lie derivative of the gyro channels along thruster field `i`:
/// `J L F M̄ e_i` (accelerometer channels are zero).
pub fn control_lie_derivative(geometry: &ChainParams, x: &TransformedState, i: usize) -> Result<DVector<f64>> {
    let model = x.model(geometry)?;
    let n = model.n();
    if i >= n {
        return Err(Error::LinkIndex { index: i, n });
    }
    let column = model.thrust_coupling(&x.theta).column(i) * x.inverse_masses[i];
    Ok(column
        .component_mul(&geometry.half_length_vector())
        .component_mul(&x.inertias))
}

/// `F_ij = K_ij sin((θ_i − θ_j) − ψ_j)`, the element-wise reduction of
/// `S_θ K C̄ − C_θ K S̄`.
pub fn f_matrix(model: &ChainModel, theta: &DVector<f64>) -> DMatrix<f64> {
    let n = model.n();
    let k = &model.coupling().k;
    let psi = &model.params().thruster_angles;
    DMatrix::from_fn(n, n, |i, j| k[(i, j)] * ((theta[i] - theta[j]) - psi[j]).sin())
}

/// `L F M̄`; column `i` feeds the `i`-th Ω₂ block.
pub fn scaled_f_matrix(model: &ChainModel, theta: &DVector<f64>) -> DMatrix<f64> {
    let l = &model.params().half_lengths;
    let inv_m = model.inverse_masses();
    let f = model.thrust_coupling(theta);
    DMatrix::from_fn(model.n(), model.n(), |r, c| l[r] * f[(r, c)] * inv_m[c])
}

/// Assembles the `(3N + N²) × 4N` observability matrix with columns ordered
/// `(θ, m̄, z, j)`.
pub fn build_observability_matrix(
    geometry: &ChainParams,
    aug: &AugmentedState,
    u: &DVector<f64>,
    external: &ExternalForces,
) -> Result<DMatrix<f64>> {
    let model = aug.model(geometry)?;
    let n = model.n();
    check_len("thrust", u.len(), n)?;
    check_len("external forces", external.fx.len(), n)?;
    let inv_m = model.inverse_masses();
    let psi = &geometry.thruster_angles;
    let (fx, fy) = model.net_forces(&aug.theta, u, external);
    let mut o = DMatrix::zeros(3 * n + n * n, 4 * n);
    for i in 0..n {
        let (s, c) = (aug.theta[i] + psi[i]).sin_cos();
        o[(i, i)] = -inv_m[i] * s * u[i];
        o[(i, n + i)] = fx[i];
        o[(n + i, i)] = inv_m[i] * c * u[i];
        o[(n + i, n + i)] = fy[i];
    }
    let jm = DMatrix::from_diagonal(&aug.inertias) * model.mass_matrix(&aug.theta);
    o.view_mut((2 * n, 2 * n), (n, n)).copy_from(&jm);
    let lfm = scaled_f_matrix(&model, &aug.theta);
    for i in 0..n {
        for k in 0..n {
            o[(3 * n + i * n + k, 3 * n + k)] = lfm[(k, i)];
        }
    }
    Ok(o)
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// Ω₁, the upper-left `2N × 2N` block.
pub fn omega1(o: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    o.view((0, 0), (2 * n, 2 * n)).into_owned()
}

/// `u_i + cos(θ_i + ψ_i) f_ext,x,i + sin(θ_i + ψ_i) f_ext,y,i`.
pub fn net_force_condition(
    geometry: &ChainParams,
    theta: &DVector<f64>,
    u: &DVector<f64>,
    external: &ExternalForces,
) -> DVector<f64> {
    DVector::from_fn(geometry.n(), |i, _| {
        let (s, c) = (theta[i] + geometry.thruster_angles[i]).sin_cos();
        u[i] + c * external.fx[i] + s * external.fy[i]
    })
}

/// `u_i sin ψ_i`.
pub fn normal_thrust_condition(geometry: &ChainParams, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(geometry.n(), |i, _| u[i] * geometry.thruster_angles[i].sin())
}

/// `det Ω₁` computed directly and through the commuting-block identity
/// `det(−M̄) ∏ u_i (u_i + cos(θ_i+ψ_i) f_ext,x,i + sin(θ_i+ψ_i) f_ext,y,i)`.
pub fn omega1_determinant(
    geometry: &ChainParams,
    aug: &AugmentedState,
    u: &DVector<f64>,
    external: &ExternalForces,
) -> Result<(f64, f64)> {
    let n = aug.n();
    let o = build_observability_matrix(geometry, aug, u, external)?;
    let direct = omega1(&o, n).determinant();
    let cond2 = net_force_condition(geometry, &aug.theta, u, external);
    let neg_inv_mass: f64 = aug.masses.iter().map(|m| -1.0 / m).product();
    let product: f64 = (0..n).map(|i| u[i] * cond2[i]).product();
    Ok((direct, neg_inv_mass * product))
}

/// Singular values below `max(rows, cols) · ε · σ_max` count as zero.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numeric rank and the singular values, descending.
pub fn numeric_rank(m: &DMatrix<f64>) -> (usize, Vec<f64>) {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let tol = rank_tolerance(m.nrows(), m.ncols(), sv.first().copied().unwrap_or(0.0));
    (sv.iter().filter(|&&s| s > tol).count(), sv)
}

/// Default tolerance on the thruster conditions, N.
pub fn default_condition_tolerance(n: usize) -> f64 {
    1e-9 * n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservabilityReport {
    pub n: usize,
    /// Row-major `(3N + N²) × 4N` observability matrix.
    pub big_o: Vec<Vec<f64>>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub omega1_det: f64,
    pub omega1_det_via_schur: f64,
    /// Ω₁ judged nonsingular from its per-link 2×2 blocks.
    pub omega1_full_rank: bool,
    pub omega2_has_zero_row: bool,
    /// `u_i sin ψ_i`.
    pub cond1: Vec<f64>,
    /// Net force along the thrust direction.
    pub cond2: Vec<f64>,
    pub condition_tolerance: f64,
    /// Both thruster conditions hold for every link.
    pub observable: bool,
}

impl ObservabilityReport {
    pub fn full_rank(&self) -> bool {
        self.rank == 4 * self.n
    }

    /// Full rank as predicted from the block structure alone.
    pub fn blocks_full_rank(&self) -> bool {
        self.omega1_full_rank && !self.omega2_has_zero_row
    }
}

/// Evaluates the thruster conditions and the numeric rank at one point.
pub fn check_observability(
    geometry: &ChainParams,
    aug: &AugmentedState,
    u: &DVector<f64>,
    external: &ExternalForces,
    condition_tolerance: f64,
) -> Result<ObservabilityReport> {
    if !(condition_tolerance > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    let n = aug.n();
    let o = build_observability_matrix(geometry, aug, u, external)?;
    let (rank, singular_values) = numeric_rank(&o);
    let rank_tol = rank_tolerance(o.nrows(), o.ncols(), singular_values[0]);
    let (omega1_det, omega1_det_via_schur) = omega1_determinant(geometry, aug, u, external)?;

    let cond1 = normal_thrust_condition(geometry, u);
    let cond2 = net_force_condition(geometry, &aug.theta, u, external);

    // Ω₁ is a permuted direct sum of the 2×2 blocks
    // [[−m̄ s u, f_x], [m̄ c u, f_y]]; |det| / ‖·‖_F bounds the smaller
    // singular value of each within a factor √2.
    let omega1_full_rank = (0..n).all(|i| {
        let b = [o[(i, i)], o[(i, n + i)], o[(n + i, i)], o[(n + i, n + i)]];
        let det = b[0] * b[3] - b[1] * b[2];
        let frob = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        frob > 0.0 && det.abs() / frob > rank_tol
    });
    let model = aug.model(geometry)?;
    let lfm = scaled_f_matrix(&model, &aug.theta);
    let omega2_has_zero_row = lfm.row_iter().any(|r| r.amax() <= rank_tol);

    let observable = cond1.iter().all(|c| c.abs() > condition_tolerance)
        && cond2.iter().all(|c| c.abs() > condition_tolerance);

    Ok(ObservabilityReport {
        n,
        big_o: o.row_iter().map(|r| r.iter().copied().collect()).collect(),
        rank,
        singular_values,
        omega1_det,
        omega1_det_via_schur,
        omega1_full_rank,
        omega2_has_zero_row,
        cond1: cond1.iter().copied().collect(),
        cond2: cond2.iter().copied().collect(),
        condition_tolerance,
        observable,
    })
}

/// One sample of an observability time history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservabilitySample {
    pub time: f64,
    pub rank: usize,
    pub cond1: Vec<f64>,
    pub cond2: Vec<f64>,
    pub observable: bool,
}

impl From<(f64, &ObservabilityReport)> for ObservabilitySample {
    fn from((time, r): (f64, &ObservabilityReport)) -> Self {
        ObservabilitySample {
            time,
            rank: r.rank,
            cond1: r.cond1.clone(),
            cond2: r.cond2.clone(),
            observable: r.observable,
        }
    }
}
