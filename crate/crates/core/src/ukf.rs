//! Unscented Kalman filter for joint estimation of link angles, rates,
//! masses and inertias from stacked CM IMU readings.
//!
//! Additive-noise form with the scaled symmetric sigma-point set. The process
//! model advances `(θ, θ̇)` by one RK4 step of the chain dynamics evaluated
//! with each sigma point's own masses and inertias; the parameters themselves
//! are constant. The measurement model is `(M̄ f_x; M̄ f_y; θ̇)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::ChainParams;
use crate::dynamics::symmetrized;
use crate::error::{Error, Result};
use crate::forces::ExternalForces;
use crate::imu::ImuNoise;
use crate::integrate::rk4_step;
use crate::observability::AugmentedState;
use crate::registry::{reject_unknown, Registry, StrategySpec};

/// Jitter added to a covariance whose Cholesky factorization fails.
pub const COVARIANCE_JITTER: f64 = 1e-12;

/// Parameters of the scaled sigma-point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        SigmaParams {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Mean and covariance weights for a state of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaWeights {
    pub lambda: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl SigmaWeights {
    pub fn new(n: usize, p: &SigmaParams) -> Self {
        let nf = n as f64;
        let lambda = p.alpha * p.alpha * (nf + p.kappa) - nf;
        let w = 0.5 / (nf + lambda);
        let mut mean = vec![w; 2 * n + 1];
        let mut cov = vec![w; 2 * n + 1];
        mean[0] = lambda / (nf + lambda);
        cov[0] = mean[0] + 1.0 - p.alpha * p.alpha + p.beta;
        SigmaWeights { lambda, mean, cov }
    }
}

/// Lower Cholesky factor, retrying once with [`COVARIANCE_JITTER`] on the
/// diagonal.
fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let jittered = m + DMatrix::identity(m.nrows(), m.ncols()) * COVARIANCE_JITTER;
    jittered
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("covariance square root failed after regularization".into()))
}

/// `2n + 1` sigma points around `mean`.
pub fn sigma_points(mean: &DVector<f64>, cov: &DMatrix<f64>, weights: &SigmaWeights) -> Result<Vec<DVector<f64>>> {
    let n = mean.len();
    let root = cholesky_with_jitter(cov)? * (n as f64 + weights.lambda).sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mean.clone());
    for i in 0..n {
        points.push(mean + root.column(i));
    }
    for i in 0..n {
        points.push(mean - root.column(i));
    }
    Ok(points)
}

/// Weighted mean taken relative to the central point; the central weight is
/// large and negative for small `alpha`, so summing raw points cancels badly.
fn weighted_mean(points: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let center = &points[0];
    let mut acc = DVector::zeros(center.len());
    for (p, &w) in points.iter().zip(weights).skip(1) {
        acc += (p - center) * w;
    }
    center + acc
}

fn weighted_cross(a: &[DVector<f64>], b: &[DVector<f64>], weights: &SigmaWeights) -> DMatrix<f64> {
    // Expanded about the central point: with d = p − p₀ and m = Σ w_m d,
    // Σ w_c (d_a − m_a)(d_b − m_b)ᵀ
    //   = Σ w_c d_a d_bᵀ − c_a m_bᵀ − m_a c_bᵀ + (Σ w_c) m_a m_bᵀ, c = Σ w_c d.
    // The central term has weight of order −1/alpha² and is never formed.
    let (a0, b0) = (&a[0], &b[0]);
    let mut acc = DMatrix::zeros(a0.len(), b0.len());
    let mut ma = DVector::zeros(a0.len());
    let mut mb = DVector::zeros(b0.len());
    let mut ca = DVector::zeros(a0.len());
    let mut cb = DVector::zeros(b0.len());
    for i in 1..a.len() {
        let da = &a[i] - a0;
        let db = &b[i] - b0;
        let (wm, wc) = (weights.mean[i], weights.cov[i]);
        acc += &da * db.transpose() * wc;
        ma += &da * wm;
        mb += &db * wm;
        ca += da * wc;
        cb += db * wc;
    }
    let total: f64 = weights.cov.iter().sum();
    acc - &ca * mb.transpose() - &ma * cb.transpose() + &ma * mb.transpose() * total
}

/// Result of pushing a Gaussian through a nonlinear map.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Cross-covariance between input and output.
    pub cross: DMatrix<f64>,
}

/// Unscented transform of `N(mean, cov)` through `f`.
pub fn unscented_transform<F>(mean: &DVector<f64>, cov: &DMatrix<f64>, params: &SigmaParams, mut f: F) -> Result<Transformed>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let weights = SigmaWeights::new(mean.len(), params);
    let points = sigma_points(mean, cov, &weights)?;
    let mapped = points.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
    let out_mean = weighted_mean(&mapped, &weights.mean);
    Ok(Transformed {
        cov: symmetrized(&weighted_cross(&mapped, &mapped, &weights)),
        cross: weighted_cross(&points, &mapped, &weights),
        mean: out_mean,
    })
}

/// Mean and covariance of the augmented state `(θ, θ̇, m, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::Dimension {
                what: "belief covariance",
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        Ok(GaussianBelief { mean, covariance })
    }

    pub fn n_links(&self) -> usize {
        self.mean.len() / 4
    }

    pub fn augmented(&self) -> Result<AugmentedState> {
        AugmentedState::from_vector(&self.mean)
    }

    /// `3σ` per channel.
    pub fn three_sigma(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| 3.0 * v.max(0.0).sqrt())
    }

    /// Normalized estimation error squared against `truth`.
    pub fn nees(&self, truth: &DVector<f64>) -> Result<f64> {
        let e = &self.mean - truth;
        let chol = self
            .covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("belief covariance is not positive definite".into()))?;
        Ok(e.dot(&chol.solve(&e)))
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.covariance
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// How the filter keeps masses and inertias positive.
///
/// Policies map between the physical belief and the filter's internal
/// coordinates; the first `2N` entries (angles and rates) are never touched.
pub trait ParameterPolicy: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Physical belief to internal mean and covariance.
    fn encode(&self, belief: &GaussianBelief) -> (DVector<f64>, DMatrix<f64>);

    /// Internal mean and covariance to the physical belief.
    fn decode(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> GaussianBelief;

    /// Physical augmented vector used to evaluate the models at an internal
    /// sigma point. `floors` holds the smallest admissible parameter values.
    fn physical_point(&self, internal: &DVector<f64>, floors: &DVector<f64>) -> DVector<f64>;

    /// Process noise in internal coordinates from physical variances.
    fn process_noise(&self, variances: &DVector<f64>, internal_mean: &DVector<f64>) -> DMatrix<f64>;

    /// Post-update fix-ups of the internal mean.
    fn enforce(&self, internal_mean: &mut DVector<f64>, floors: &DVector<f64>);
}

/// Parameters stay additive-Gaussian; sigma points that would reach a
/// nonpositive mass or inertia are clamped when the models are evaluated.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClampPolicy;

impl ParameterPolicy for ClampPolicy {
    fn name(&self) -> &str {
        "clamp"
    }

    fn encode(&self, belief: &GaussianBelief) -> (DVector<f64>, DMatrix<f64>) {
        (belief.mean.clone(), belief.covariance.clone())
    }

    fn decode(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> GaussianBelief {
        GaussianBelief {
            mean: mean.clone(),
            covariance: cov.clone(),
        }
    }

    fn physical_point(&self, internal: &DVector<f64>, floors: &DVector<f64>) -> DVector<f64> {
        let mut x = internal.clone();
        self.enforce(&mut x, floors);
        x
    }

    fn process_noise(&self, variances: &DVector<f64>, _internal_mean: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(variances)
    }

    fn enforce(&self, internal_mean: &mut DVector<f64>, floors: &DVector<f64>) {
        let n2 = internal_mean.len() / 2;
        for (k, floor) in floors.iter().enumerate() {
            let v = &mut internal_mean[n2 + k];
            if *v < *floor {
                *v = *floor;
            }
        }
    }
}

/// Masses and inertias are filtered as logarithms; moments are converted to
/// and from physical units to first order.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogPolicy;

impl LogPolicy {
    fn jacobian_scale(mean_phys: &DVector<f64>, invert: bool) -> DVector<f64> {
        let n2 = mean_phys.len() / 2;
        DVector::from_fn(mean_phys.len(), |i, _| {
            if i < n2 {
                1.0
            } else if invert {
                mean_phys[i]
            } else {
                1.0 / mean_phys[i]
            }
        })
    }
}

/// `D C D` for diagonal `D = diag(d)`, exactly symmetric when `C` is.
fn scale_symmetric(c: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * (d[i] * d[j]))
}

impl ParameterPolicy for LogPolicy {
    fn name(&self) -> &str {
        "log"
    }

    fn encode(&self, belief: &GaussianBelief) -> (DVector<f64>, DMatrix<f64>) {
        let n2 = belief.mean.len() / 2;
        let mut mean = belief.mean.clone();
        for v in mean.rows_mut(n2, n2).iter_mut() {
            *v = v.ln();
        }
        (mean, scale_symmetric(&belief.covariance, &Self::jacobian_scale(&belief.mean, false)))
    }

    fn decode(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> GaussianBelief {
        let n2 = mean.len() / 2;
        let mut phys = mean.clone();
        for v in phys.rows_mut(n2, n2).iter_mut() {
            *v = v.exp();
        }
        GaussianBelief {
            covariance: scale_symmetric(cov, &Self::jacobian_scale(&phys, true)),
            mean: phys,
        }
    }

    fn physical_point(&self, internal: &DVector<f64>, _floors: &DVector<f64>) -> DVector<f64> {
        let n2 = internal.len() / 2;
        let mut x = internal.clone();
        for v in x.rows_mut(n2, n2).iter_mut() {
            *v = v.exp();
        }
        x
    }

    fn process_noise(&self, variances: &DVector<f64>, internal_mean: &DVector<f64>) -> DMatrix<f64> {
        let n2 = internal_mean.len() / 2;
        DMatrix::from_diagonal(&DVector::from_fn(variances.len(), |i, _| {
            if i < n2 {
                variances[i]
            } else {
                variances[i] * (-2.0 * internal_mean[i]).exp()
            }
        }))
    }

    fn enforce(&self, _internal_mean: &mut DVector<f64>, _floors: &DVector<f64>) {}
}

pub fn parameter_policy_registry() -> Registry<dyn ParameterPolicy> {
    let mut reg: Registry<dyn ParameterPolicy> = Registry::new("parameter policy");
    reg.register("clamp", |p| {
        reject_unknown(p, &[])?;
        Ok(Box::new(ClampPolicy))
    });
    reg.register("log", |p| {
        reject_unknown(p, &[])?;
        Ok(Box::new(LogPolicy))
    });
    reg
}

/// Fraction of the initial parameter estimate below which sigma points are
/// clamped.
pub const PARAMETER_FLOOR_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterConfig {
    /// Diagonal process-noise variances in `(θ, θ̇, m, j)` order, 4N.
    pub process_variances: Vec<f64>,
    /// Per-IMU measurement noise; `R = diag(σ_acc², σ_acc², σ_gyro²)`.
    pub imu_noise: ImuNoise,
    #[serde(default)]
    pub sigma_points: SigmaParams,
    /// Predict step, s.
    pub dt: f64,
    #[serde(default = "default_policy")]
    pub parameter_policy: StrategySpec,
}

fn default_policy() -> StrategySpec {
    StrategySpec::named("clamp")
}

impl FilterConfig {
    /// Block-diagonal process noise from per-block standard deviations.
    pub fn with_blocks(n: usize, sigmas: [f64; 4], imu_noise: ImuNoise, dt: f64) -> Self {
        let process_variances = sigmas
            .iter()
            .flat_map(|s| std::iter::repeat_n(s * s, n))
            .collect();
        FilterConfig {
            process_variances,
            imu_noise,
            sigma_points: SigmaParams::default(),
            dt,
            parameter_policy: default_policy(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.process_variances.len() != 4 * n {
            return Err(Error::Dimension {
                what: "process noise variances",
                expected: 4 * n,
                got: self.process_variances.len(),
            });
        }
        if let Some((i, v)) = self
            .process_variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid(format!("processVariances[{i}]"), format!("must be nonnegative, got {v}")));
        }
        self.imu_noise.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let s = &self.sigma_points;
        if !(s.alpha > 0.0 && s.alpha.is_finite()) || !s.beta.is_finite() || !s.kappa.is_finite() {
            return Err(Error::invalid("sigmaPoints", "alpha must be positive and all values finite"));
        }
        Ok(())
    }

    /// Stacked `3N × 3N` measurement covariance.
    pub fn measurement_covariance(&self, n: usize) -> DMatrix<f64> {
        let acc = self.imu_noise.sigma_acc.powi(2);
        let gyro = self.imu_noise.sigma_gyro.powi(2);
        DMatrix::from_diagonal(&DVector::from_fn(3 * n, |i, _| if i < 2 * n { acc } else { gyro }))
    }
}

/// Stacked CM-IMU measurement `(f_x / m; f_y / m; θ̇)` of an augmented state.
pub fn measurement_function(
    geometry: &ChainParams,
    aug: &AugmentedState,
    u: &DVector<f64>,
    external: &ExternalForces,
) -> Result<DVector<f64>> {
    let n = geometry.n();
    let (fx, fy) = aug.model(geometry)?.net_forces(&aug.theta, u, external);
    let mut z = DVector::zeros(3 * n);
    z.rows_mut(0, n).copy_from(&fx.component_div(&aug.masses));
    z.rows_mut(n, n).copy_from(&fy.component_div(&aug.masses));
    z.rows_mut(2 * n, n).copy_from(&aug.theta_dot);
    Ok(z)
}

/// Advances an augmented state by `dt` (one RK4 step, thrust and external
/// forces held). Parameters are returned unchanged.
pub fn process_function(
    geometry: &ChainParams,
    aug: &AugmentedState,
    u: &DVector<f64>,
    external: &ExternalForces,
    dt: f64,
) -> Result<AugmentedState> {
    let n = geometry.n();
    let model = aug.model(geometry)?;
    let mut x = DVector::zeros(2 * n);
    x.rows_mut(0, n).copy_from(&aug.theta);
    x.rows_mut(n, n).copy_from(&aug.theta_dot);
    let next = rk4_step(
        |_, x| {
            let theta = x.rows(0, n).into_owned();
            let rates = x.rows(n, n).into_owned();
            let (fx, fy) = model.net_forces(&theta, u, external);
            let accel = model.angular_acceleration(&theta, &rates, &fx, &fy)?;
            let mut d = DVector::zeros(2 * n);
            d.rows_mut(0, n).copy_from(&rates);
            d.rows_mut(n, n).copy_from(&accel);
            Ok(d)
        },
        0.0,
        &x,
        dt,
    )?;
    Ok(AugmentedState {
        theta: next.rows(0, n).into_owned(),
        theta_dot: next.rows(n, n).into_owned(),
        masses: aug.masses.clone(),
        inertias: aug.inertias.clone(),
    })
}

/// Innovation statistics of the last update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    pub predicted_measurement: DVector<f64>,
    pub innovation: DVector<f64>,
    pub innovation_covariance: DMatrix<f64>,
    /// The innovation covariance needed jitter to be inverted.
    pub regularized: bool,
}

pub struct UnscentedFilter {
    geometry: ChainParams,
    config: FilterConfig,
    policy: Box<dyn ParameterPolicy>,
    floors: DVector<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl fmt::Debug for UnscentedFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnscentedFilter")
            .field("policy", &self.policy.name())
            .field("mean", &self.mean)
            .field("cov_diag", &self.cov.diagonal())
            .finish()
    }
}

impl UnscentedFilter {
    pub fn new(geometry: ChainParams, initial: GaussianBelief, config: FilterConfig) -> Result<Self> {
        Self::with_policies(geometry, initial, config, &parameter_policy_registry())
    }

    pub fn with_policies(
        geometry: ChainParams,
        initial: GaussianBelief,
        config: FilterConfig,
        policies: &Registry<dyn ParameterPolicy>,
    ) -> Result<Self> {
        geometry.validate()?;
        let n = geometry.n();
        config.validate(n)?;
        if initial.mean.len() != 4 * n {
            return Err(Error::Dimension {
                what: "initial belief",
                expected: 4 * n,
                got: initial.mean.len(),
            });
        }
        let params = initial.mean.rows(2 * n, 2 * n);
        if let Some(i) = params.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::invalid(
                if i < n { format!("initial mass estimate [{i}]") } else { format!("initial inertia estimate [{}]", i - n) },
                "must be positive",
            ));
        }
        let floors = params.map(|v| v * PARAMETER_FLOOR_FRACTION);
        let policy = policies.build(&config.parameter_policy)?;
        let (mean, cov) = policy.encode(&initial);
        Ok(UnscentedFilter {
            geometry,
            config,
            policy,
            floors,
            mean,
            cov,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn policy_name(&self) -> &str {
        self.policy.name()
    }

    pub fn belief(&self) -> GaussianBelief {
        self.policy.decode(&self.mean, &self.cov)
    }

    fn physical(&self, internal: &DVector<f64>) -> Result<AugmentedState> {
        AugmentedState::from_vector(&self.policy.physical_point(internal, &self.floors))
    }

    /// Time update over one filter step.
    pub fn predict(&mut self, u: &DVector<f64>, external: &ExternalForces) -> Result<()> {
        let n = self.geometry.n();
        let weights = SigmaWeights::new(4 * n, &self.config.sigma_points);
        let points = sigma_points(&self.mean, &self.cov, &weights)?;
        let propagated = points
            .iter()
            .map(|p| {
                let phys = self.physical(p)?;
                let next = process_function(&self.geometry, &phys, u, external, self.config.dt)?;
                let mut out = p.clone();
                out.rows_mut(0, n).copy_from(&next.theta);
                out.rows_mut(n, n).copy_from(&next.theta_dot);
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mean = weighted_mean(&propagated, &weights.mean);
        // Parameters are constant under the process model.
        mean.rows_mut(2 * n, 2 * n).copy_from(&self.mean.rows(2 * n, 2 * n));
        let spread = weighted_cross(&propagated, &propagated, &weights);
        let q = self
            .policy
            .process_noise(&DVector::from_column_slice(&self.config.process_variances), &mean);
        self.cov = symmetrized(&(spread + q));
        self.mean = mean;
        Ok(())
    }

    /// Measurement update with the stacked `3N` reading `z`.
    pub fn update(&mut self, z: &DVector<f64>, u: &DVector<f64>, external: &ExternalForces) -> Result<UpdateDiagnostics> {
        let n = self.geometry.n();
        if z.len() != 3 * n {
            return Err(Error::Dimension {
                what: "stacked measurement",
                expected: 3 * n,
                got: z.len(),
            });
        }
        let weights = SigmaWeights::new(4 * n, &self.config.sigma_points);
        let points = sigma_points(&self.mean, &self.cov, &weights)?;
        let predicted = points
            .iter()
            .map(|p| measurement_function(&self.geometry, &self.physical(p)?, u, external))
            .collect::<Result<Vec<_>>>()?;
        let z_mean = weighted_mean(&predicted, &weights.mean);
        let mut s = symmetrized(&weighted_cross(&predicted, &predicted, &weights))
            + self.config.measurement_covariance(n);
        let cross = weighted_cross(&points, &predicted, &weights);

        let mut regularized = false;
        let chol = match s.clone().cholesky() {
            Some(c) => c,
            None => {
                regularized = true;
                let scale = (s.trace() / s.nrows() as f64).abs().max(f64::MIN_POSITIVE);
                s += DMatrix::identity(3 * n, 3 * n) * (COVARIANCE_JITTER * scale);
                s.clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("innovation covariance is not invertible".into()))?
            }
        };
        let gain = chol.solve(&cross.transpose()).transpose();
        let innovation = z - &z_mean;
        let mut mean = &self.mean + &gain * &innovation;
        self.policy.enforce(&mut mean, &self.floors);
        self.cov = symmetrized(&(&self.cov - &gain * &s * gain.transpose()));
        self.mean = mean;
        Ok(UpdateDiagnostics {
            predicted_measurement: z_mean,
            innovation,
            innovation_covariance: s,
            regularized,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 4, 12] {
            let w = SigmaWeights::new(n, &SigmaParams::default());
            let sm: f64 = w.mean.iter().sum();
            assert!((sm - 1.0).abs() < 1e-9, "{sm}");
            assert_eq!(w.mean.len(), 2 * n + 1);
        }
    }

    #[test]
    fn linear_map_is_exact() {
        let mean = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -0.5, 0.0, 3.0, 1.0]);
        let b = DVector::from_vec(vec![0.1, -0.2]);
        let cov = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.2]);
        // Small alpha puts weights of order 1/alpha² on nearly cancelling
        // differences, so exactness holds only to rounding amplified by that.
        for (params, tol) in [(SigmaParams::default(), 1e-8), (SigmaParams { alpha: 1.0, beta: 2.0, kappa: 0.0 }, 1e-13)] {
            let t = unscented_transform(&mean, &cov, &params, |x| Ok(&a * x + &b)).unwrap();
            assert!((t.mean - (&a * &mean + &b)).amax() < tol);
            assert!((t.cov - &a * &cov * a.transpose()).amax() < tol);
            assert!((t.cross - &cov * a.transpose()).amax() < tol);
        }
    }

    #[test]
    fn log_policy_roundtrip() {
        let mean = DVector::from_vec(vec![0.1, 0.2, 0.5, 2.6e-3]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 1e-6, 0.01, 1e-8]));
        let b = GaussianBelief::new(mean, cov).unwrap();
        let (m, c) = LogPolicy.encode(&b);
        assert!((m[2] - 0.5f64.ln()).abs() < 1e-15);
        assert!((c[(2, 2)] - 0.04).abs() < 1e-15);
        let back = LogPolicy.decode(&m, &c);
        assert!((back.mean - &b.mean).amax() < 1e-15);
        assert!((back.covariance - &b.covariance).amax() < 1e-15);
    }

    #[test]
    fn clamp_floors_parameters() {
        let floors = DVector::from_vec(vec![1e-9, 2e-12]);
        let x = DVector::from_vec(vec![0.0, 0.0, -0.1, 1e-3]);
        let p = ClampPolicy.physical_point(&x, &floors);
        assert_eq!(p.as_slice(), &[0.0, 0.0, 1e-9, 1e-3]);
    }

    #[test]
    fn nees_of_exact_mean_is_zero() {
        let b = GaussianBelief::new(DVector::from_element(4, 1.0), DMatrix::identity(4, 4)).unwrap();
        assert_eq!(b.nees(&DVector::from_element(4, 1.0)).unwrap(), 0.0);
        assert!((b.nees(&DVector::from_vec(vec![1.0, 1.0, 1.0, 3.0])).unwrap() - 4.0).abs() < 1e-15);
    }
}
