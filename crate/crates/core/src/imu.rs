//! IMU (2-axis accelerometer + gyroscope) readings for sensors rigidly mounted
//! on the links.
//!
//! For a point at constant offset `r` from the link CM the planar
//! rotating-frame relation gives
//! `a = a_origin − θ̇² r + θ̈ [[0, −1], [1, 0]] r`, and the gyro reads `θ̇`.
//! How `a_origin` is obtained is a pluggable [`AccelerometerModel`].

use std::fmt;

use nalgebra::{DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::ChainState;
use crate::dynamics::ChainModel;
use crate::error::{Error, Result};
use crate::forces::ExternalForces;
use crate::registry::{reject_unknown, Registry};

/// Components in which accelerations are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccelFrame {
    #[default]
    Inertial,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ImuMount {
    /// 0-based link index.
    pub link: usize,
    /// Offset from the link CM in link-frame coordinates, m.
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub frame: AccelFrame,
}

impl ImuMount {
    pub fn at_cm(link: usize) -> Self {
        ImuMount {
            link,
            offset: [0.0, 0.0],
            frame: AccelFrame::Inertial,
        }
    }

    pub fn offset_vector(&self) -> Vector2<f64> {
        Vector2::new(self.offset[0], self.offset[1])
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.link >= n {
            return Err(Error::LinkIndex { index: self.link, n });
        }
        if !self.offset.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("offset", "must be finite"));
        }
        Ok(())
    }
}

/// One IMU sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    pub accel: Vector2<f64>,
    pub gyro: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ImuNoise {
    /// Per-axis accelerometer standard deviation, m/s².
    pub sigma_acc: f64,
    /// Gyroscope standard deviation, rad/s.
    pub sigma_gyro: f64,
}

impl ImuNoise {
    pub fn zero() -> Self {
        ImuNoise {
            sigma_acc: 0.0,
            sigma_gyro: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigmaAcc", self.sigma_acc), ("sigmaGyro", self.sigma_gyro)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything an accelerometer model may need about the current instant.
#[derive(Debug)]
pub struct InstantDynamics<'a> {
    pub model: &'a ChainModel,
    pub state: &'a ChainState,
    pub fx: &'a DVector<f64>,
    pub fy: &'a DVector<f64>,
    pub theta_ddot: &'a DVector<f64>,
    pub cm_ddot: Vector2<f64>,
}

/// Source of the link-CM acceleration `a_origin`.
pub trait AccelerometerModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Inertial acceleration of the CM of every link.
    fn origin_accelerations(&self, instant: &InstantDynamics<'_>) -> Result<(DVector<f64>, DVector<f64>)>;
}

/// `a_origin = f_i / m_i` with `f` the external plus thruster force on the
/// link. This is the form the observability analysis and the filter use;
/// joint reaction forces are not part of `f`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NetForceAccel;

impl AccelerometerModel for NetForceAccel {
    fn name(&self) -> &str {
        "net-force"
    }

    fn origin_accelerations(&self, instant: &InstantDynamics<'_>) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = instant.model.params().mass_vector();
        Ok((instant.fx.component_div(&m), instant.fy.component_div(&m)))
    }
}

/// Kinematically exact CM acceleration of each link, i.e. including the
/// pin-joint reaction forces.
#[derive(Debug, Clone, Copy, Default)]
pub struct RigidBodyAccel;

impl AccelerometerModel for RigidBodyAccel {
    fn name(&self) -> &str {
        "rigid-body"
    }

    fn origin_accelerations(&self, instant: &InstantDynamics<'_>) -> Result<(DVector<f64>, DVector<f64>)> {
        instant
            .model
            .link_accelerations(instant.state, instant.theta_ddot, &instant.cm_ddot)
    }
}

pub fn accelerometer_registry() -> Registry<dyn AccelerometerModel> {
    let mut reg: Registry<dyn AccelerometerModel> = Registry::new("accelerometer model");
    reg.register("net-force", |p| {
        reject_unknown(p, &[])?;
        Ok(Box::new(NetForceAccel))
    });
    reg.register("rigid-body", |p| {
        reject_unknown(p, &[])?;
        Ok(Box::new(RigidBodyAccel))
    });
    reg
}

fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Noise-free readings of a set of IMUs at one instant, sharing one
/// evaluation of the dynamics.
pub fn imu_readings(
    model: &ChainModel,
    state: &ChainState,
    u: &DVector<f64>,
    external: &ExternalForces,
    mounts: &[ImuMount],
    accel_model: &dyn AccelerometerModel,
) -> Result<Vec<ImuReading>> {
    let n = model.n();
    for m in mounts {
        m.validate(n)?;
    }
    let (fx, fy) = model.net_forces(&state.theta, u, external);
    let theta_ddot = model.angular_acceleration(&state.theta, &state.theta_dot, &fx, &fy)?;
    let instant = InstantDynamics {
        model,
        state,
        fx: &fx,
        fy: &fy,
        theta_ddot: &theta_ddot,
        cm_ddot: model.cm_acceleration(&fx, &fy),
    };
    let (ax, ay) = accel_model.origin_accelerations(&instant)?;
    let quarter_turn = Matrix2::new(0.0, -1.0, 1.0, 0.0);
    Ok(mounts
        .iter()
        .map(|mount| {
            let i = mount.link;
            let rate = state.theta_dot[i];
            let r = rotation(state.theta[i]) * mount.offset_vector();
            let accel = Vector2::new(ax[i], ay[i]) - r * (rate * rate) + quarter_turn * r * theta_ddot[i];
            let accel = match mount.frame {
                AccelFrame::Inertial => accel,
                AccelFrame::Body => rotation(state.theta[i]).transpose() * accel,
            };
            ImuReading { accel, gyro: rate }
        })
        .collect())
}

/// Noise-free reading of a single IMU.
pub fn imu_true(
    model: &ChainModel,
    state: &ChainState,
    u: &DVector<f64>,
    external: &ExternalForces,
    mount: &ImuMount,
    accel_model: &dyn AccelerometerModel,
) -> Result<ImuReading> {
    Ok(imu_readings(model, state, u, external, std::slice::from_ref(mount), accel_model)?[0])
}

/// Adds independent zero-mean Gaussian noise, drawn in the order
/// `accel x, accel y, gyro`.
pub fn imu_noisy<R: Rng + ?Sized>(reading: &ImuReading, noise: &ImuNoise, rng: &mut R) -> ImuReading {
    let ex: f64 = StandardNormal.sample(rng);
    let ey: f64 = StandardNormal.sample(rng);
    let eg: f64 = StandardNormal.sample(rng);
    ImuReading {
        accel: reading.accel + Vector2::new(ex, ey) * noise.sigma_acc,
        gyro: reading.gyro + eg * noise.sigma_gyro,
    }
}

/// Stacks one reading per link as `(a_x,1..N; a_y,1..N; ω_1..N)`.
pub fn stack_readings(readings: &[ImuReading]) -> DVector<f64> {
    let n = readings.len();
    let mut z = DVector::zeros(3 * n);
    for (i, r) in readings.iter().enumerate() {
        z[i] = r.accel.x;
        z[n + i] = r.accel.y;
        z[2 * n + i] = r.gyro;
    }
    z
}

/// Stacked measurement from one IMU per link. Noise, when given, is drawn
/// link by link in link order.
#[allow(clippy::too_many_arguments)]
pub fn measure_all<R: Rng + ?Sized>(
    model: &ChainModel,
    state: &ChainState,
    u: &DVector<f64>,
    external: &ExternalForces,
    mounts: &[ImuMount],
    accel_model: &dyn AccelerometerModel,
    noise: Option<(&ImuNoise, &mut R)>,
) -> Result<DVector<f64>> {
    let n = model.n();
    if mounts.len() != n {
        return Err(Error::Dimension {
            what: "IMU mounts (one per link)",
            expected: n,
            got: mounts.len(),
        });
    }
    let mut seen = vec![false; n];
    for m in mounts {
        m.validate(n)?;
        if std::mem::replace(&mut seen[m.link], true) {
            return Err(Error::invalid("mounts", format!("link {} has more than one IMU", m.link)));
        }
    }
    let mut ordered = mounts.to_vec();
    ordered.sort_by_key(|m| m.link);
    let mut readings = imu_readings(model, state, u, external, &ordered, accel_model)?;
    if let Some((noise, rng)) = noise {
        noise.validate()?;
        for r in readings.iter_mut() {
            *r = imu_noisy(r, noise, rng);
        }
    }
    Ok(stack_readings(&readings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::PI;

    fn nominal_model() -> ChainModel {
        ChainModel::new(
            ChainParams::uniform(3, 0.125, 0.5, 2.6e-3, vec![PI / 4.0, 2.0 * PI / 3.0, -PI / 2.0]).unwrap(),
        )
        .unwrap()
    }

    fn cm_mounts() -> Vec<ImuMount> {
        (0..3).map(ImuMount::at_cm).collect()
    }

    #[test]
    fn at_rest_reads_zero() {
        let model = nominal_model();
        let mount = ImuMount {
            link: 1,
            offset: [0.03, -0.02],
            frame: AccelFrame::Inertial,
        };
        for accel in [&NetForceAccel as &dyn AccelerometerModel, &RigidBodyAccel] {
            let r = imu_true(&model, &ChainState::at_rest(3), &DVector::zeros(3), &ExternalForces::zeros(3), &mount, accel).unwrap();
            assert_eq!(r.accel, Vector2::zeros());
            assert_eq!(r.gyro, 0.0);
        }
    }

    #[test]
    fn cm_mount_is_net_force_over_mass() {
        let model = nominal_model();
        let mut s = ChainState::at_rest(3);
        s.theta = DVector::from_vec(vec![0.1, -0.4, 0.9]);
        s.theta_dot = DVector::from_vec(vec![1.5, -0.3, 0.2]);
        let u = DVector::from_vec(vec![1.0, -0.5, 0.7]);
        let ext = ExternalForces::new(DVector::from_vec(vec![0.1, 0.0, -0.2]), DVector::from_vec(vec![0.0, 0.3, 0.1])).unwrap();
        let (fx, fy) = model.net_forces(&s.theta, &u, &ext);
        for i in 0..3 {
            let r = imu_true(&model, &s, &u, &ext, &ImuMount::at_cm(i), &NetForceAccel).unwrap();
            assert_eq!(r.accel, Vector2::new(fx[i] / 0.5, fy[i] / 0.5));
            assert_eq!(r.gyro, s.theta_dot[i]);
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let reading = ImuReading { accel: Vector2::new(1.25, -3.0), gyro: 0.5 };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(imu_noisy(&reading, &ImuNoise::zero(), &mut rng), reading);
    }

    #[test]
    fn seeded_noise_repeats() {
        let reading = ImuReading { accel: Vector2::new(0.0, 0.0), gyro: 0.0 };
        let noise = ImuNoise { sigma_acc: 0.01, sigma_gyro: 0.001 };
        let draw = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..50).map(|_| imu_noisy(&reading, &noise, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn stacked_nominal_thrust() {
        let model = nominal_model();
        let u = DVector::from_element(3, 1.0);
        let z = measure_all::<ChaCha20Rng>(&model, &ChainState::at_rest(3), &u, &ExternalForces::zeros(3), &cm_mounts(), &NetForceAccel, None).unwrap();
        let h = 0.5f64.sqrt();
        let expected = [h, -0.5, 0.0, h, 3f64.sqrt() / 2.0, -1.0].map(|f| f / 0.5);
        for i in 0..6 {
            assert!((z[i] - expected[i]).abs() < 1e-15, "{i}: {} vs {}", z[i], expected[i]);
        }
        assert_eq!(&z.as_slice()[6..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn mount_count_checked() {
        let model = nominal_model();
        let err = measure_all::<ChaCha20Rng>(&model, &ChainState::at_rest(3), &DVector::zeros(3), &ExternalForces::zeros(3), &cm_mounts()[..2], &NetForceAccel, None).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, got: 2, .. }));
        let dup = vec![ImuMount::at_cm(0), ImuMount::at_cm(0), ImuMount::at_cm(2)];
        assert!(measure_all::<ChaCha20Rng>(&model, &ChainState::at_rest(3), &DVector::zeros(3), &ExternalForces::zeros(3), &dup, &NetForceAccel, None).is_err());
    }

    #[test]
    fn body_frame_rotates() {
        let model = ChainModel::new(ChainParams::uniform(1, 0.1, 2.0, 0.01, vec![0.0]).unwrap()).unwrap();
        let mut s = ChainState::at_rest(1);
        s.theta[0] = PI / 2.0;
        let mount = ImuMount { link: 0, offset: [0.0, 0.0], frame: AccelFrame::Body };
        // Thrust along the link axis reads as pure +x in the body frame.
        let r = imu_true(&model, &s, &DVector::from_element(1, 2.0), &ExternalForces::zeros(1), &mount, &NetForceAccel).unwrap();
        assert!((r.accel - Vector2::new(1.0, 0.0)).norm() < 1e-15);
    }
}
