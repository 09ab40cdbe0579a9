//! Scenario configuration: a single versioned JSON document describing the
//! chain, its initial state, the thrust program, noise levels and run
//! settings.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainParams, ChainState};
use crate::error::{Error, Result};
use crate::forces::{force_registry, ExternalForceModel};
use crate::imu::{accelerometer_registry, AccelerometerModel, ImuMount, ImuNoise};
use crate::registry::StrategySpec;
use crate::thrust::{waveform_registry, ThrustSchedule, DEFAULT_AMPLITUDE};
use crate::ukf::{parameter_policy_registry, FilterConfig, GaussianBelief, SigmaParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest mismatch tolerated between the measurement period and a whole
/// number of integrator steps, s.
pub const GRID_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub chain: ChainParams,
    pub initial_state: InitialState,
    /// One waveform per link.
    pub thrust: Vec<StrategySpec>,
    pub noise: NoiseConfig,
    pub sim: SimConfig,
    #[serde(default)]
    pub filter: FilterSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InitialState {
    /// Link angles, rad.
    pub theta: Vec<f64>,
    /// Link angular rates, rad/s. Zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_dot: Option<Vec<f64>>,
    /// Chain CM position, m.
    #[serde(default)]
    pub cm: [f64; 2],
    /// Chain CM velocity, m/s.
    #[serde(default)]
    pub cm_dot: [f64; 2],
}

/// Standard deviations shared by every link, in `(θ, θ̇, m, j)` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BlockStd {
    pub theta: f64,
    pub theta_dot: f64,
    pub mass: f64,
    pub inertia: f64,
}

impl BlockStd {
    pub fn as_array(&self) -> [f64; 4] {
        [self.theta, self.theta_dot, self.mass, self.inertia]
    }

    fn validate(&self, section: &str) -> Result<()> {
        let names = ["theta", "thetaDot", "mass", "inertia"];
        for (name, v) in names.iter().zip(self.as_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{section}.{name}"), format!("must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Variances repeated per link, 4N.
    pub fn variances(&self, n: usize) -> DVector<f64> {
        let a = self.as_array();
        DVector::from_fn(4 * n, |i, _| a[i / n].powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NoiseConfig {
    /// IMU measurement noise; also the filter's measurement covariance.
    pub imu: ImuNoise,
    /// Spread of the initial estimate about the truth.
    pub initial_std: BlockStd,
    /// Filter process noise.
    pub process_std: BlockStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated span, s.
    pub duration: f64,
    /// IMU sample rate, Hz. The filter runs one predict/update per sample.
    pub imu_rate: f64,
    /// Truth integrator step, s.
    #[serde(default = "default_integrator_dt")]
    pub integrator_dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_forces")]
    pub external_forces: StrategySpec,
    /// Accelerometer model used to synthesize the truth readings.
    #[serde(default = "default_accel")]
    pub accel_model: StrategySpec,
    /// IMU placement; one IMU at each link CM when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mounts: Option<Vec<ImuMount>>,
}

fn default_integrator_dt() -> f64 {
    crate::integrate::DEFAULT_DT
}

fn default_forces() -> StrategySpec {
    StrategySpec::named("none")
}

fn default_accel() -> StrategySpec {
    StrategySpec::named("net-force")
}

fn default_policy() -> StrategySpec {
    StrategySpec::named("clamp")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FilterSettings {
    #[serde(default)]
    pub sigma_points: SigmaParams,
    #[serde(default = "default_policy")]
    pub parameter_policy: StrategySpec,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            sigma_points: SigmaParams::default(),
            parameter_policy: default_policy(),
        }
    }
}

fn in_section(section: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{section}.{field}"),
            reason,
        },
        Error::Config { path, message } => Error::Config {
            path: format!("{section}.{path}"),
            message,
        },
        Error::LinkIndex { index, n } => Error::invalid(section, format!("link index {index} out of range for {n} links")),
        other => Error::Config {
            path: section.to_string(),
            message: other.to_string(),
        },
    }
}

fn check_length(field: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::invalid(field, format!("expected {n} entries (one per link), got {len}")));
    }
    Ok(())
}

fn check_finite(field: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{field}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

impl Scenario {
    /// Parses and validates a scenario. Syntax and schema errors carry the
    /// offending field path and the line/column in the document.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                path: if path.is_empty() || path == "." || path == "?" { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { path: field, message } => Error::Config {
                path: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn n(&self) -> usize {
        self.chain.n()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schemaVersion",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.chain.validate().map_err(|e| in_section("chain", e))?;
        let n = self.n();

        let init = &self.initial_state;
        check_length("initialState.theta", init.theta.len(), n)?;
        check_finite("initialState.theta", &init.theta)?;
        if let Some(rates) = &init.theta_dot {
            check_length("initialState.thetaDot", rates.len(), n)?;
            check_finite("initialState.thetaDot", rates)?;
        }
        check_finite("initialState.cm", &init.cm)?;
        check_finite("initialState.cmDot", &init.cm_dot)?;

        check_length("thrust", self.thrust.len(), n)?;
        ThrustSchedule::from_specs(&self.thrust, &waveform_registry())?;

        self.noise.imu.validate().map_err(|e| in_section("noise.imu", e))?;
        self.noise.initial_std.validate("noise.initialStd")?;
        self.noise.process_std.validate("noise.processStd")?;

        let sim = &self.sim;
        for (field, v) in [
            ("sim.duration", sim.duration),
            ("sim.imuRate", sim.imu_rate),
            ("sim.integratorDt", sim.integrator_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        self.substeps()?;
        force_registry()
            .build(&sim.external_forces)
            .map_err(|e| in_section("sim.externalForces", e))?;
        accelerometer_registry()
            .build(&sim.accel_model)
            .map_err(|e| in_section("sim.accelModel", e))?;
        if let Some(mounts) = &sim.mounts {
            check_length("sim.mounts", mounts.len(), n)?;
            let mut seen = vec![false; n];
            for (i, m) in mounts.iter().enumerate() {
                m.validate(n).map_err(|e| in_section(&format!("sim.mounts[{i}]"), e))?;
                if std::mem::replace(&mut seen[m.link], true) {
                    return Err(Error::invalid(format!("sim.mounts[{i}].link"), format!("link {} already has an IMU", m.link)));
                }
            }
        }

        let s = &self.filter.sigma_points;
        if !(s.alpha > 0.0 && s.alpha.is_finite()) {
            return Err(Error::invalid("filter.sigmaPoints.alpha", format!("must be positive, got {}", s.alpha)));
        }
        if !(s.beta.is_finite() && s.kappa.is_finite()) {
            return Err(Error::invalid("filter.sigmaPoints", "beta and kappa must be finite"));
        }
        parameter_policy_registry()
            .build(&self.filter.parameter_policy)
            .map_err(|e| in_section("filter.parameterPolicy", e))?;
        Ok(())
    }

    /// Measurement period, s.
    pub fn period(&self) -> f64 {
        1.0 / self.sim.imu_rate
    }

    /// Integrator steps per measurement period.
    pub fn substeps(&self) -> Result<usize> {
        let period = self.period();
        let ratio = (period / self.sim.integrator_dt).round();
        if ratio < 1.0 || (ratio * self.sim.integrator_dt - period).abs() > GRID_TOLERANCE {
            return Err(Error::invalid(
                "sim.integratorDt",
                format!(
                    "must divide the measurement period {period} s, got {}",
                    self.sim.integrator_dt
                ),
            ));
        }
        Ok(ratio as usize)
    }

    /// Number of measurement instants, `⌊duration · imuRate⌋ + 1`.
    pub fn sample_count(&self) -> usize {
        (self.sim.duration * self.sim.imu_rate + 1e-9).floor() as usize + 1
    }

    /// Measurement instants `k / imuRate`.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.sample_count()).map(|k| k as f64 / self.sim.imu_rate).collect()
    }

    pub fn initial_chain_state(&self) -> ChainState {
        let n = self.n();
        let init = &self.initial_state;
        ChainState {
            theta: DVector::from_column_slice(&init.theta),
            cm: Vector2::from(init.cm),
            theta_dot: init
                .theta_dot
                .as_ref()
                .map_or_else(|| DVector::zeros(n), |r| DVector::from_column_slice(r)),
            cm_dot: Vector2::from(init.cm_dot),
        }
    }

    pub fn thrust_schedule(&self) -> Result<ThrustSchedule> {
        ThrustSchedule::from_specs(&self.thrust, &waveform_registry())
    }

    pub fn external_forces(&self) -> Result<Box<dyn ExternalForceModel>> {
        force_registry().build(&self.sim.external_forces)
    }

    pub fn accelerometer(&self) -> Result<Box<dyn AccelerometerModel>> {
        accelerometer_registry().build(&self.sim.accel_model)
    }

    pub fn mounts(&self) -> Vec<ImuMount> {
        self.sim
            .mounts
            .clone()
            .unwrap_or_else(|| (0..self.n()).map(ImuMount::at_cm).collect())
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            process_variances: self.noise.process_std.variances(self.n()).iter().copied().collect(),
            imu_noise: self.noise.imu,
            sigma_points: self.filter.sigma_points,
            dt: self.period(),
            parameter_policy: self.filter.parameter_policy.clone(),
        }
    }

    /// Initial belief centred on `mean` with the configured initial spread.
    pub fn initial_belief(&self, mean: DVector<f64>) -> Result<GaussianBelief> {
        let cov = DMatrix::from_diagonal(&self.noise.initial_std.variances(self.n()));
        GaussianBelief::new(mean, cov)
    }

    /// Same scenario with every thruster permanently off.
    pub fn with_thrusters_off(&self) -> Scenario {
        let mut s = self.clone();
        s.thrust = vec![StrategySpec::named("constant").with("amplitude", 0.0); self.n()];
        s
    }
}

/// Three identical links at rest and parallel, pulsed in phase with the
/// default amplitude, sampled at 100 Hz for one second.
pub fn default_scenario() -> Scenario {
    let n = 3;
    let wave = StrategySpec::named("squareWave")
        .with("startTime", 0.2)
        .with("onDuration", 0.1)
        .with("offDuration", 0.2)
        .with("amplitude", DEFAULT_AMPLITUDE);
    Scenario {
        schema_version: SCHEMA_VERSION,
        chain: ChainParams {
            half_lengths: vec![0.125; n],
            masses: vec![0.5; n],
            inertias: vec![2.6e-3; n],
            thruster_angles: vec![PI / 4.0, 2.0 * PI / 3.0, -PI / 2.0],
        },
        initial_state: InitialState {
            theta: vec![0.0; n],
            theta_dot: Some(vec![0.0; n]),
            cm: [0.0, 0.0],
            cm_dot: [0.0, 0.0],
        },
        thrust: vec![wave; n],
        noise: NoiseConfig {
            imu: ImuNoise {
                sigma_acc: 1e-2,
                sigma_gyro: 1e-3,
            },
            initial_std: BlockStd {
                theta: 0.1,
                theta_dot: 5e-3,
                mass: 0.1,
                inertia: 1e-4,
            },
            process_std: BlockStd {
                theta: 5e-3,
                theta_dot: 1e-3,
                mass: 1e-2,
                inertia: 7e-6,
            },
        },
        sim: SimConfig {
            duration: 1.0,
            imu_rate: 100.0,
            integrator_dt: 1e-3,
            seed: 42,
            external_forces: default_forces(),
            accel_model: default_accel(),
            mounts: None,
        },
        filter: FilterSettings::default(),
    }
}
