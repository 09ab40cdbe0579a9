//! Scenario execution: truth simulation, IMU synthesis, filtering, thruster
//! condition monitoring and Monte Carlo aggregation.
//!
//! Random streams: run `k` of a Monte Carlo batch with master seed `s` seeds
//! ChaCha20 with `s ⊕ k`; stream 0 of that generator draws the initial
//! estimate and stream 1 the IMU noise. A single run uses `k = 0`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::chain::ChainState;
use crate::dynamics::ChainModel;
use crate::error::{Error, Result};
use crate::forces::{ExternalForceModel, ExternalForces};
use crate::imu::{measure_all, AccelerometerModel, ImuMount};
use crate::integrate::integrate;
use crate::observability::{check_observability, default_condition_tolerance, AugmentedState, ObservabilityReport};
use crate::scenario::Scenario;
use crate::thrust::ThrustSchedule;
use crate::ukf::UnscentedFilter;

const INIT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Spacing of the configuration snapshots, s.
pub const SNAPSHOT_INTERVAL: f64 = 0.2;

/// Two-sided probability mass of the NEES acceptance band.
pub const NEES_CONFIDENCE: f64 = 0.95;

/// Seed of run `k` in a batch started from `master`.
pub fn run_seed(master: u64, k: u64) -> u64 {
    master ^ k
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruthRow {
    pub time: f64,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub cm: [f64; 2],
    pub cm_dot: [f64; 2],
    /// Thrust applied from this instant until the next sample, N.
    pub thrust: Vec<f64>,
}

impl TruthRow {
    pub fn state(&self) -> ChainState {
        ChainState {
            theta: DVector::from_column_slice(&self.theta),
            cm: self.cm.into(),
            theta_dot: DVector::from_column_slice(&self.theta_dot),
            cm_dot: self.cm_dot.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasurementRow {
    pub time: f64,
    pub acc_x: Vec<f64>,
    pub acc_y: Vec<f64>,
    pub gyro: Vec<f64>,
}

impl MeasurementRow {
    fn from_stacked(time: f64, z: &DVector<f64>, n: usize) -> Self {
        MeasurementRow {
            time,
            acc_x: z.rows(0, n).iter().copied().collect(),
            acc_y: z.rows(n, n).iter().copied().collect(),
            gyro: z.rows(2 * n, n).iter().copied().collect(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.gyro.len(),
            self.acc_x.iter().chain(&self.acc_y).chain(&self.gyro).copied(),
        )
    }
}

/// Posterior belief after the update at `time`, all vectors in
/// `(θ, θ̇, m, j)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterRow {
    pub time: f64,
    pub mean: Vec<f64>,
    pub bound3: Vec<f64>,
    /// `3σ` of the belief just before this update.
    pub prior_bound3: Vec<f64>,
    /// Estimate minus truth.
    pub error: Vec<f64>,
    /// Absent when the covariance could not be factorized.
    pub nees: Option<f64>,
    /// The innovation covariance needed regularization.
    pub regularized: bool,
    /// Posterior covariance diagonal.
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservabilityRow {
    pub time: f64,
    pub cond1: Vec<f64>,
    pub cond2: Vec<f64>,
    pub rank: usize,
    pub observable: bool,
}

impl ObservabilityRow {
    fn from_report(time: f64, r: &ObservabilityReport) -> Self {
        ObservabilityRow {
            time,
            cond1: r.cond1.clone(),
            cond2: r.cond2.clone(),
            rank: r.rank,
            observable: r.observable,
        }
    }
}

/// Link endpoint polyline at one instant, `N + 1` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub time: f64,
    pub points: Vec<[f64; 2]>,
}

/// Everything produced by one run, on the common measurement grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunArtifacts {
    pub n: usize,
    pub seed: u64,
    pub truth: Vec<TruthRow>,
    pub measurements: Vec<MeasurementRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Vec<FilterRow>>,
    pub observability: Vec<ObservabilityRow>,
    pub snapshots: Vec<Snapshot>,
}

impl RunArtifacts {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.truth.iter().map(|r| r.time)
    }
}

/// Resolved runtime pieces of a scenario.
#[derive(Debug)]
pub struct Setup {
    pub scenario: Scenario,
    pub model: ChainModel,
    pub schedule: ThrustSchedule,
    pub forces: Box<dyn ExternalForceModel>,
    pub accel: Box<dyn AccelerometerModel>,
    pub mounts: Vec<ImuMount>,
}

impl Setup {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Setup {
            model: ChainModel::new(scenario.chain.clone())?,
            schedule: scenario.thrust_schedule()?,
            forces: scenario.external_forces()?,
            accel: scenario.accelerometer()?,
            mounts: scenario.mounts(),
            scenario: scenario.clone(),
        })
    }

    fn integrate_span(&self, state: &ChainState, t0: f64, t1: f64) -> Result<ChainState> {
        let traj = integrate(
            &self.model,
            state,
            &|t| self.schedule.command(t),
            self.forces.as_ref(),
            t0,
            t1,
            self.scenario.sim.integrator_dt,
        )?;
        Ok(traj.last().clone())
    }

    /// True states at the measurement instants.
    pub fn truth_states(&self) -> Result<Vec<ChainState>> {
        let times = self.scenario.sample_times();
        let mut states = Vec::with_capacity(times.len());
        states.push(self.scenario.initial_chain_state());
        for k in 1..times.len() {
            let next = self
                .integrate_span(&states[k - 1], times[k - 1], times[k])
                .map_err(|e| e.at_step(k))?;
            states.push(next);
        }
        Ok(states)
    }

    /// True state at an arbitrary time.
    pub fn state_at(&self, t: f64) -> Result<ChainState> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("time", format!("must be nonnegative, got {t}")));
        }
        let initial = self.scenario.initial_chain_state();
        if t == 0.0 {
            return Ok(initial);
        }
        self.integrate_span(&initial, 0.0, t)
    }

    pub fn external_at(&self, t: f64, state: &ChainState) -> Result<ExternalForces> {
        self.forces.evaluate(t, &self.model, state)
    }

    /// Thruster conditions and rank at the true state.
    pub fn observability(&self, t: f64, state: &ChainState) -> Result<ObservabilityReport> {
        let aug = AugmentedState::from_chain(&self.scenario.chain, state);
        let ext = self.external_at(t, state)?;
        check_observability(
            &self.scenario.chain,
            &aug,
            &self.schedule.command(t),
            &ext,
            default_condition_tolerance(self.model.n()),
        )
    }

    pub fn observability_at(&self, t: f64) -> Result<ObservabilityReport> {
        self.observability(t, &self.state_at(t)?)
    }

    fn snapshots(&self, times: &[f64], states: &[ChainState]) -> Result<Vec<Snapshot>> {
        let rate = self.scenario.sim.imu_rate;
        let count = (self.scenario.sim.duration / SNAPSHOT_INTERVAL + 1e-9).floor() as usize;
        (0..=count)
            .filter_map(|i| {
                let k = (i as f64 * SNAPSHOT_INTERVAL * rate).round() as usize;
                (k < states.len()).then_some(k)
            })
            .map(|k| {
                Ok(Snapshot {
                    time: times[k],
                    points: self.model.endpoints(&states[k])?,
                })
            })
            .collect()
    }

    /// Truth, measurements, thruster conditions and snapshots; no filter.
    pub fn simulate(&self, seed: u64) -> Result<RunArtifacts> {
        let n = self.model.n();
        let times = self.scenario.sample_times();
        let states = self.truth_states()?;
        let mut noise_rng = stream(seed, NOISE_STREAM);
        let mut truth = Vec::with_capacity(times.len());
        let mut measurements = Vec::with_capacity(times.len());
        let mut observability = Vec::with_capacity(times.len());
        for (k, (&t, state)) in times.iter().zip(&states).enumerate() {
            let u = self.schedule.command(t);
            let ext = self.external_at(t, state).map_err(|e| e.at_step(k))?;
            let z = measure_all(
                &self.model,
                state,
                &u,
                &ext,
                &self.mounts,
                self.accel.as_ref(),
                Some((&self.scenario.noise.imu, &mut noise_rng)),
            )
            .map_err(|e| e.at_step(k))?;
            let report = self.observability(t, state).map_err(|e| e.at_step(k))?;
            truth.push(TruthRow {
                time: t,
                theta: state.theta.iter().copied().collect(),
                theta_dot: state.theta_dot.iter().copied().collect(),
                cm: state.cm.into(),
                cm_dot: state.cm_dot.into(),
                thrust: u.iter().copied().collect(),
            });
            measurements.push(MeasurementRow::from_stacked(t, &z, n));
            observability.push(ObservabilityRow::from_report(t, &report));
        }
        Ok(RunArtifacts {
            n,
            seed,
            snapshots: self.snapshots(&times, &states)?,
            truth,
            measurements,
            filter: None,
            observability,
        })
    }

    /// Initial filter mean: the true augmented state perturbed by the
    /// configured initial spread.
    pub fn initial_estimate(&self, seed: u64) -> DVector<f64> {
        let truth = AugmentedState::from_chain(&self.scenario.chain, &self.scenario.initial_chain_state()).to_vector();
        let std = self.scenario.noise.initial_std.variances(self.model.n()).map(f64::sqrt);
        let mut rng = stream(seed, INIT_STREAM);
        DVector::from_fn(truth.len(), |i, _| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            truth[i] + std[i] * xi
        })
    }

    /// Runs the filter over already simulated truth and measurements.
    pub fn run_filter(&self, artifacts: &RunArtifacts, initial_mean: DVector<f64>) -> Result<Vec<FilterRow>> {
        let scenario = &self.scenario;
        let mut filter = UnscentedFilter::new(
            scenario.chain.clone(),
            scenario.initial_belief(initial_mean)?,
            scenario.filter_config(),
        )?;
        let mut rows = Vec::with_capacity(artifacts.truth.len());
        let mut previous: Option<(DVector<f64>, ExternalForces)> = None;
        for (k, (truth, meas)) in artifacts.truth.iter().zip(&artifacts.measurements).enumerate() {
            let state = truth.state();
            let u = DVector::from_column_slice(&truth.thrust);
            let ext = self.external_at(truth.time, &state)?;
            if let Some((u_prev, ext_prev)) = &previous {
                filter.predict(u_prev, ext_prev).map_err(|e| e.at_step(k))?;
            }
            let prior_bound3 = filter.belief().three_sigma().iter().copied().collect();
            let diag = filter.update(&meas.stacked(), &u, &ext).map_err(|e| e.at_step(k))?;
            let belief = filter.belief();
            let true_aug = AugmentedState::from_chain(&scenario.chain, &state).to_vector();
            rows.push(FilterRow {
                time: truth.time,
                mean: belief.mean.iter().copied().collect(),
                bound3: belief.three_sigma().iter().copied().collect(),
                prior_bound3,
                error: (&belief.mean - &true_aug).iter().copied().collect(),
                nees: belief.nees(&true_aug).ok(),
                regularized: diag.regularized,
                variance: belief.covariance.diagonal().iter().copied().collect(),
            });
            previous = Some((u, ext));
        }
        Ok(rows)
    }

    /// Simulation plus filter for one seed.
    pub fn estimate(&self, seed: u64) -> Result<RunArtifacts> {
        let mut artifacts = self.simulate(seed)?;
        artifacts.filter = Some(self.run_filter(&artifacts, self.initial_estimate(seed))?);
        Ok(artifacts)
    }

    /// Independent filter runs with seeds `master ⊕ k`, in parallel.
    pub fn monte_carlo(&self, master: u64, runs: usize) -> Result<MonteCarlo> {
        if runs == 0 {
            return Err(Error::invalid("runs", "must be at least 1"));
        }
        let results = (0..runs as u64)
            .into_par_iter()
            .map(|k| {
                let seed = run_seed(master, k);
                self.estimate(seed).map_err(|e| Error::InRun {
                    run: k as usize,
                    seed,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let nees = NeesTable::from_runs(&results, 4 * self.model.n())?;
        Ok(MonteCarlo { runs: results, nees })
    }
}

/// Per-time NEES statistics across a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NeesRow {
    pub time: f64,
    pub mean_nees: f64,
    /// Band for the batch-averaged NEES.
    pub mean_lower: f64,
    pub mean_upper: f64,
    /// Fraction of runs whose own NEES lies in the single-run band.
    pub fraction_in_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NeesTable {
    pub dim: usize,
    pub runs: usize,
    /// Single-run band `[χ²_dim(0.025), χ²_dim(0.975)]`.
    pub lower: f64,
    pub upper: f64,
    pub rows: Vec<NeesRow>,
}

/// Two-sided chi-square band with `NEES_CONFIDENCE` mass.
pub fn chi_square_band(dof: f64) -> Result<(f64, f64)> {
    let dist = ChiSquared::new(dof).map_err(|e| Error::Numerical(format!("chi-square with {dof} dof: {e}")))?;
    let tail = 0.5 * (1.0 - NEES_CONFIDENCE);
    Ok((dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail)))
}

impl NeesTable {
    pub fn from_runs(runs: &[RunArtifacts], dim: usize) -> Result<Self> {
        let (lower, upper) = chi_square_band(dim as f64)?;
        let k = runs.len();
        let (mean_lower, mean_upper) = chi_square_band((dim * k) as f64)?;
        let traces: Vec<&Vec<FilterRow>> = runs
            .iter()
            .map(|r| r.filter.as_ref().ok_or_else(|| Error::invalid("runs", "filter trace missing")))
            .collect::<Result<_>>()?;
        let steps = traces.first().map_or(0, |t| t.len());
        let rows = (0..steps)
            .map(|i| {
                let values: Vec<f64> = traces.iter().map(|t| t[i].nees.unwrap_or(f64::INFINITY)).collect();
                let inside = values.iter().filter(|&&v| v >= lower && v <= upper).count();
                NeesRow {
                    time: traces[0][i].time,
                    mean_nees: values.iter().sum::<f64>() / k as f64,
                    mean_lower: mean_lower / k as f64,
                    mean_upper: mean_upper / k as f64,
                    fraction_in_band: inside as f64 / k as f64,
                }
            })
            .collect();
        Ok(NeesTable {
            dim,
            runs: k,
            lower,
            upper,
            rows,
        })
    }

    /// Fraction of all (run, time) NEES samples inside the single-run band.
    pub fn overall_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.fraction_in_band).sum::<f64>() / self.rows.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub runs: Vec<RunArtifacts>,
    pub nees: NeesTable,
}
