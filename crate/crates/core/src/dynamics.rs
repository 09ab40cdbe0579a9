//! Closed-form equations of motion for the free-floating thruster chain.
//!
//! Links are joined by unactuated pin joints; every link carries a thruster at
//! its CM. The model follows the classic snake-robot formulation with the joint
//! torques removed and non-uniform links allowed:
//!
//! ```text
//! M_θ θ̈ = −W θ̇² + L S_θ K M̄ f_x − L C_θ K M̄ f_y
//! p̈     = Eᵀ f / m_Σ
//! ```

use nalgebra::{DMatrix, DVector, Vector2};

use crate::chain::{ChainParams, ChainState};
use crate::error::{Error, Result};
use crate::forces::ExternalForces;

/// Constant (angle-independent) matrices of the chain.
///
/// `V` and `K` depend on the masses only, so they are rebuilt whenever the
/// masses change and reused otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    /// Addition matrix `A`, (N−1)×N, rows `[.. 1 1 ..]`.
    pub addition: DMatrix<f64>,
    /// Difference matrix `D`, (N−1)×N, rows `[.. 1 −1 ..]`.
    pub difference: DMatrix<f64>,
    /// Summation matrix `E`, 2N×2.
    pub summation: DMatrix<f64>,
    /// `V = Aᵀ (D M̄ Dᵀ)⁻¹ A`, symmetric.
    pub v: DMatrix<f64>,
    /// `K = Aᵀ (D M̄ Dᵀ)⁻¹ D`, rank N−1.
    pub k: DMatrix<f64>,
}

pub fn build_coupling(params: &ChainParams) -> Result<CouplingMatrices> {
    params.validate()?;
    let n = params.n();
    let mut addition = DMatrix::zeros(n - 1, n);
    let mut difference = DMatrix::zeros(n - 1, n);
    for r in 0..n - 1 {
        addition[(r, r)] = 1.0;
        addition[(r, r + 1)] = 1.0;
        difference[(r, r)] = 1.0;
        difference[(r, r + 1)] = -1.0;
    }
    let mut summation = DMatrix::zeros(2 * n, 2);
    for i in 0..n {
        summation[(i, 0)] = 1.0;
        summation[(n + i, 1)] = 1.0;
    }
    if n == 1 {
        return Ok(CouplingMatrices {
            addition,
            difference,
            summation,
            v: DMatrix::zeros(1, 1),
            k: DMatrix::zeros(1, 1),
        });
    }

    let inv_mass = DMatrix::from_diagonal(&params.inverse_masses());
    let dmd = &difference * inv_mass * difference.transpose();
    let chol = dmd
        .cholesky()
        .ok_or_else(|| Error::Numerical("D M̄ Dᵀ is not positive definite".into()))?;
    let v = addition.transpose() * chol.solve(&addition);
    let k = addition.transpose() * chol.solve(&difference);
    Ok(CouplingMatrices {
        addition,
        difference,
        summation,
        v: symmetrized(&v),
        k,
    })
}

/// Cartesian CM positions and velocities of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkKinematics {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub x_dot: DVector<f64>,
    pub y_dot: DVector<f64>,
}

/// A chain with its coupling matrices cached.
#[derive(Debug, Clone)]
pub struct ChainModel {
    params: ChainParams,
    coupling: CouplingMatrices,
    inverse_masses: DVector<f64>,
    half_lengths: DVector<f64>,
    thruster_angles: DVector<f64>,
}

impl ChainModel {
    pub fn new(params: ChainParams) -> Result<Self> {
        let coupling = build_coupling(&params)?;
        Ok(ChainModel {
            inverse_masses: params.inverse_masses(),
            half_lengths: params.half_length_vector(),
            thruster_angles: params.thruster_angle_vector(),
            params,
            coupling,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn coupling(&self) -> &CouplingMatrices {
        &self.coupling
    }

    pub fn inverse_masses(&self) -> &DVector<f64> {
        &self.inverse_masses
    }

    /// `M_θ = J + L (S_θ V S_θ + C_θ V C_θ) L`.
    pub fn mass_matrix(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let l = &self.half_lengths;
        let v = &self.coupling.v;
        DMatrix::from_fn(n, n, |i, j| {
            let (si, ci) = theta[i].sin_cos();
            let (sj, cj) = theta[j].sin_cos();
            let coupled = l[i] * (si * v[(i, j)] * sj + ci * v[(i, j)] * cj) * l[j];
            if i == j {
                self.params.inertias[i] + coupled
            } else {
                coupled
            }
        })
    }

    /// `W = L (S_θ V C_θ − C_θ V S_θ) L`, skew-symmetric.
    pub fn w_matrix(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let l = &self.half_lengths;
        let v = &self.coupling.v;
        DMatrix::from_fn(n, n, |i, j| {
            let (si, ci) = theta[i].sin_cos();
            let (sj, cj) = theta[j].sin_cos();
            l[i] * (si * v[(i, j)] * cj - ci * v[(i, j)] * sj) * l[j]
        })
    }

    /// Net link forces `f_x = f_ext,x + C̄ u`, `f_y = f_ext,y + S̄ u` with
    /// `C̄ = diag(cos(θ + ψ))`, `S̄ = diag(sin(θ + ψ))`.
    pub fn net_forces(
        &self,
        theta: &DVector<f64>,
        u: &DVector<f64>,
        external: &ExternalForces,
    ) -> (DVector<f64>, DVector<f64>) {
        let n = self.n();
        let mut fx = external.fx.clone();
        let mut fy = external.fy.clone();
        for i in 0..n {
            let (s, c) = (theta[i] + self.thruster_angles[i]).sin_cos();
            fx[i] += c * u[i];
            fy[i] += s * u[i];
        }
        (fx, fy)
    }

    /// Solves `M_θ θ̈ = −W θ̇² + L S_θ K M̄ f_x − L C_θ K M̄ f_y`.
    pub fn angular_acceleration(
        &self,
        theta: &DVector<f64>,
        theta_dot: &DVector<f64>,
        fx: &DVector<f64>,
        fy: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.n();
        let w = self.w_matrix(theta);
        let rates_sq = theta_dot.component_mul(theta_dot);
        let kfx = &self.coupling.k * fx.component_mul(&self.inverse_masses);
        let kfy = &self.coupling.k * fy.component_mul(&self.inverse_masses);
        let mut rhs = -(w * rates_sq);
        for i in 0..n {
            let (s, c) = theta[i].sin_cos();
            rhs[i] += self.half_lengths[i] * (s * kfx[i] - c * kfy[i]);
        }
        solve_spd(self.mass_matrix(theta), rhs)
    }

    /// `p̈ = Eᵀ f / m_Σ`.
    pub fn cm_acceleration(&self, fx: &DVector<f64>, fy: &DVector<f64>) -> Vector2<f64> {
        Vector2::new(fx.sum(), fy.sum()) / self.params.total_mass()
    }

    /// Time derivative of the full state, returned in state layout:
    /// `theta ← θ̇`, `cm ← ṗ`, `theta_dot ← θ̈`, `cm_dot ← p̈`.
    pub fn rhs(
        &self,
        state: &ChainState,
        u: &DVector<f64>,
        external: &ExternalForces,
    ) -> Result<ChainState> {
        let (fx, fy) = self.net_forces(&state.theta, u, external);
        let theta_ddot = self.angular_acceleration(&state.theta, &state.theta_dot, &fx, &fy)?;
        Ok(ChainState {
            theta: state.theta_dot.clone(),
            cm: state.cm_dot,
            theta_dot: theta_ddot,
            cm_dot: self.cm_acceleration(&fx, &fy),
        })
    }

    /// `F = S_θ K C̄ − C_θ K S̄`, the thrust-to-torque coupling before the
    /// `L`/`M̄` scaling.
    pub fn thrust_coupling(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let k = &self.coupling.k;
        DMatrix::from_fn(n, n, |i, j| {
            let (si, ci) = theta[i].sin_cos();
            let (sj, cj) = (theta[j] + self.thruster_angles[j]).sin_cos();
            si * k[(i, j)] * cj - ci * k[(i, j)] * sj
        })
    }

    /// Control vector field of thruster `i` (0-based) on the augmented state
    /// `(θ, θ̇, m, j)`: `(0; M_θ⁻¹ L F M̄ e_i; 0; 0)`.
    pub fn control_field(&self, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        let n = self.n();
        if i >= n {
            return Err(Error::LinkIndex { index: i, n });
        }
        let column = self.thrust_coupling(theta).column(i) * self.inverse_masses[i];
        let torque = column.component_mul(&self.half_lengths);
        let accel = solve_spd(self.mass_matrix(theta), torque)?;
        let mut field = DVector::zeros(4 * n);
        field.rows_mut(n, n).copy_from(&accel);
        Ok(field)
    }

    /// `T = [D; mᵀ/m_Σ]`.
    fn reconstruction_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut t = DMatrix::zeros(n, n);
        t.rows_mut(0, n - 1).copy_from(&self.coupling.difference);
        let total = self.params.total_mass();
        for i in 0..n {
            t[(n - 1, i)] = self.params.masses[i] / total;
        }
        t
    }

    fn solve_reconstruction(&self, joint_terms: DVector<f64>, cm_term: f64) -> Result<DVector<f64>> {
        let n = self.n();
        let mut b = DVector::zeros(n);
        b.rows_mut(0, n - 1).copy_from(&joint_terms);
        b[n - 1] = cm_term;
        self.reconstruction_matrix()
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("link reconstruction matrix is singular".into()))
    }

    /// Link CM positions and velocities from the chain CM and the link angles.
    pub fn reconstruct_links(&self, state: &ChainState) -> Result<LinkKinematics> {
        let a = &self.coupling.addition;
        let lcos = DVector::from_fn(self.n(), |i, _| self.half_lengths[i] * state.theta[i].cos());
        let lsin = DVector::from_fn(self.n(), |i, _| self.half_lengths[i] * state.theta[i].sin());
        let lsin_rate = lsin.component_mul(&state.theta_dot);
        let lcos_rate = lcos.component_mul(&state.theta_dot);
        Ok(LinkKinematics {
            x: self.solve_reconstruction(-(a * &lcos), state.cm.x)?,
            y: self.solve_reconstruction(-(a * &lsin), state.cm.y)?,
            x_dot: self.solve_reconstruction(a * &lsin_rate, state.cm_dot.x)?,
            y_dot: self.solve_reconstruction(-(a * &lcos_rate), state.cm_dot.y)?,
        })
    }

    /// Link CM accelerations `(ẍ, ÿ)`, including joint reaction forces.
    pub fn link_accelerations(
        &self,
        state: &ChainState,
        theta_ddot: &DVector<f64>,
        cm_ddot: &Vector2<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.n();
        let a = &self.coupling.addition;
        let mut ax = DVector::zeros(n);
        let mut ay = DVector::zeros(n);
        for i in 0..n {
            let (s, c) = state.theta[i].sin_cos();
            let rate_sq = state.theta_dot[i] * state.theta_dot[i];
            let l = self.half_lengths[i];
            ax[i] = l * (c * rate_sq + s * theta_ddot[i]);
            ay[i] = l * (s * rate_sq - c * theta_ddot[i]);
        }
        Ok((
            self.solve_reconstruction(a * ax, cm_ddot.x)?,
            self.solve_reconstruction(a * ay, cm_ddot.y)?,
        ))
    }

    /// Rear end, joints and front end of the chain, `N + 1` points.
    pub fn endpoints(&self, state: &ChainState) -> Result<Vec<[f64; 2]>> {
        let links = self.reconstruct_links(state)?;
        let n = self.n();
        let mut points = Vec::with_capacity(n + 1);
        let (s0, c0) = state.theta[0].sin_cos();
        points.push([
            links.x[0] - self.half_lengths[0] * c0,
            links.y[0] - self.half_lengths[0] * s0,
        ]);
        for i in 0..n {
            let (s, c) = state.theta[i].sin_cos();
            points.push([
                links.x[i] + self.half_lengths[i] * c,
                links.y[i] + self.half_lengths[i] * s,
            ]);
        }
        Ok(points)
    }
}

pub(crate) fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn solve_spd(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix M_θ is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn nominal_params() -> ChainParams {
        ChainParams::uniform(3, 0.125, 0.5, 2.6e-3, vec![PI / 4.0, 2.0 * PI / 3.0, -PI / 2.0]).unwrap()
    }

    #[test]
    fn two_link_coupling_by_hand() {
        let p = ChainParams::uniform(2, 0.2, 1.0, 0.01, vec![0.0, 0.0]).unwrap();
        let c = build_coupling(&p).unwrap();
        assert_eq!(c.difference.as_slice(), &[1.0, -1.0]);
        assert_eq!(c.addition.as_slice(), &[1.0, 1.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!((&c.v - expected).amax() < 1e-15);
    }

    #[test]
    fn single_link_is_degenerate() {
        let p = ChainParams::uniform(1, 0.2, 2.0, 0.3, vec![0.7]).unwrap();
        let model = ChainModel::new(p).unwrap();
        let c = model.coupling();
        assert_eq!((c.addition.nrows(), c.addition.ncols()), (0, 1));
        assert_eq!(c.v, DMatrix::zeros(1, 1));
        assert_eq!(c.k, DMatrix::zeros(1, 1));
        let theta = DVector::from_vec(vec![0.4]);
        assert_eq!(model.mass_matrix(&theta)[(0, 0)], 0.3);
        assert_eq!(model.control_field(&theta, 0).unwrap(), DVector::zeros(4));
    }

    #[test]
    fn single_link_thrust_accelerates_cm_only() {
        let p = ChainParams::uniform(1, 0.2, 2.0, 0.3, vec![0.7]).unwrap();
        let model = ChainModel::new(p).unwrap();
        let mut s = ChainState::at_rest(1);
        s.theta[0] = 0.3;
        let u = DVector::from_vec(vec![1.5]);
        let d = model.rhs(&s, &u, &ExternalForces::zeros(1)).unwrap();
        assert_eq!(d.theta_dot[0], 0.0);
        let expected = Vector2::new(1.0f64.cos(), 1.0f64.sin()) * 1.5 / 2.0;
        assert!((d.cm_dot - expected).norm() < 1e-15);
    }

    #[test]
    fn kernel_of_k() {
        let p = ChainParams::new(vec![0.1, 0.2, 0.15], vec![0.3, 0.9, 0.5], vec![0.01; 3], vec![0.0; 3]).unwrap();
        let c = build_coupling(&p).unwrap();
        let ones = DVector::from_element(3, 1.0);
        assert!((&c.k * ones).amax() < 1e-14);
        let alt = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        assert!((alt.transpose() * &c.k).amax() < 1e-14);
    }

    #[test]
    fn mass_matrix_at_zero_angles() {
        let model = ChainModel::new(nominal_params()).unwrap();
        let theta = DVector::zeros(3);
        let l = DMatrix::from_diagonal(&model.params().half_length_vector());
        let j = DMatrix::from_diagonal(&model.params().inertia_vector());
        let expected = j + &l * &model.coupling().v * &l;
        assert!((model.mass_matrix(&theta) - expected).amax() < 1e-16);
    }

    #[test]
    fn w_vanishes_for_parallel_links() {
        let model = ChainModel::new(nominal_params()).unwrap();
        assert_eq!(model.w_matrix(&DVector::zeros(3)).amax(), 0.0);
        assert!(model.w_matrix(&DVector::from_element(3, 0.83)).amax() < 1e-17);
    }

    #[test]
    fn net_forces_nominal_thrusters() {
        let model = ChainModel::new(nominal_params()).unwrap();
        let (fx, fy) = model.net_forces(
            &DVector::zeros(3),
            &DVector::from_element(3, 1.0),
            &ExternalForces::zeros(3),
        );
        let h = 0.5f64.sqrt();
        let ex = [h, -0.5, 0.0];
        let ey = [h, 3f64.sqrt() / 2.0, -1.0];
        for i in 0..3 {
            assert!((fx[i] - ex[i]).abs() < 1e-15);
            assert!((fy[i] - ey[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_normal_thrust() {
        let p = ChainParams::uniform(1, 0.1, 1.0, 0.1, vec![PI / 2.0]).unwrap();
        let model = ChainModel::new(p).unwrap();
        let (fx, fy) = model.net_forces(&DVector::zeros(1), &DVector::from_element(1, 2.0), &ExternalForces::zeros(1));
        assert!(fx[0].abs() < 1e-15);
        assert_eq!(fy[0], 2.0);
    }

    #[test]
    fn straight_chain_reconstruction() {
        let model = ChainModel::new(nominal_params()).unwrap();
        let links = model.reconstruct_links(&ChainState::at_rest(3)).unwrap();
        let l = 0.125;
        for (got, want) in links.x.iter().zip([-2.0 * l, 0.0, 2.0 * l]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(links.y.amax() < 1e-16);
    }

    #[test]
    fn rest_is_equilibrium() {
        let model = ChainModel::new(nominal_params()).unwrap();
        let d = model
            .rhs(&ChainState::at_rest(3), &DVector::zeros(3), &ExternalForces::zeros(3))
            .unwrap();
        assert_eq!(d.to_vector(), DVector::zeros(10));
    }

    #[test]
    fn control_field_index_checked() {
        let model = ChainModel::new(nominal_params()).unwrap();
        assert!(matches!(
            model.control_field(&DVector::zeros(3), 3),
            Err(Error::LinkIndex { index: 3, n: 3 })
        ));
    }

    #[test]
    fn endpoints_span_chain() {
        let model = ChainModel::new(nominal_params()).unwrap();
        let pts = model.endpoints(&ChainState::at_rest(3)).unwrap();
        assert_eq!(pts.len(), 4);
        assert!((pts[0][0] + 0.375).abs() < 1e-15);
        assert!((pts[3][0] - 0.375).abs() < 1e-15);
    }
}
