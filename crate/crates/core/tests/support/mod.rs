//! Shared helpers for the integration tests: an independent multibody
//! oracle and random instance generators.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use salpchain::chain::{ChainParams, ChainState};
use salpchain::forces::ExternalForces;
use salpchain::ChainModel;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn nominal_params() -> ChainParams {
    ChainParams::uniform(3, 0.125, 0.5, 2.6e-3, vec![PI / 4.0, 2.0 * PI / 3.0, -PI / 2.0]).unwrap()
}

pub fn random_params<R: Rng>(rng: &mut R, n: usize) -> ChainParams {
    ChainParams::new(
        (0..n).map(|_| rng.random_range(0.05..0.3)).collect(),
        (0..n).map(|_| rng.random_range(0.1..2.0)).collect(),
        (0..n).map(|_| rng.random_range(1e-4..1e-2)).collect(),
        (0..n).map(|_| rng.random_range(-PI..PI)).collect(),
    )
    .unwrap()
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, bound: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-bound..bound))
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize) -> ChainState {
    ChainState {
        theta: random_vector(rng, n, PI),
        cm: Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        theta_dot: random_vector(rng, n, 3.0),
        cm_dot: Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
    }
}

pub fn random_external<R: Rng>(rng: &mut R, n: usize) -> ExternalForces {
    ExternalForces::new(random_vector(rng, n, 0.5), random_vector(rng, n, 0.5)).unwrap()
}

/// One random (params, state, thrust, external force) instance.
pub struct Instance {
    pub model: ChainModel,
    pub state: ChainState,
    pub u: DVector<f64>,
    pub external: ExternalForces,
}

pub fn random_instance<R: Rng>(rng: &mut R, n: usize) -> Instance {
    Instance {
        model: ChainModel::new(random_params(rng, n)).unwrap(),
        state: random_state(rng, n),
        u: random_vector(rng, n, 2.0),
        external: random_external(rng, n),
    }
}

/// Link-by-link Newton–Euler with pin-joint constraints enforced by Lagrange
/// multipliers. Coordinates per link are `(x_i, y_i, θ_i)`; link `i`'s front
/// end coincides with link `i + 1`'s rear end. Returns `(ẍ, ÿ, θ̈)`.
pub fn lagrange_oracle(
    params: &ChainParams,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
    fx: &DVector<f64>,
    fy: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = params.n();
    let dof = 3 * n;
    let cons = 2 * (n - 1);
    let mut kkt = DMatrix::zeros(dof + cons, dof + cons);
    let mut rhs = DVector::zeros(dof + cons);
    for i in 0..n {
        kkt[(3 * i, 3 * i)] = params.masses[i];
        kkt[(3 * i + 1, 3 * i + 1)] = params.masses[i];
        kkt[(3 * i + 2, 3 * i + 2)] = params.inertias[i];
        rhs[3 * i] = fx[i];
        rhs[3 * i + 1] = fy[i];
    }
    // Constraint rows: x_i + l_i cos θ_i − x_{i+1} + l_{i+1} cos θ_{i+1} = 0
    // and the matching y row with sines.
    for c in 0..n - 1 {
        let (a, b) = (c, c + 1);
        let (la, lb) = (params.half_lengths[a], params.half_lengths[b]);
        let (sa, ca) = theta[a].sin_cos();
        let (sb, cb) = theta[b].sin_cos();
        let rx = dof + 2 * c;
        let ry = rx + 1;
        let mut g = DMatrix::zeros(2, dof);
        g[(0, 3 * a)] = 1.0;
        g[(0, 3 * a + 2)] = -la * sa;
        g[(0, 3 * b)] = -1.0;
        g[(0, 3 * b + 2)] = -lb * sb;
        g[(1, 3 * a + 1)] = 1.0;
        g[(1, 3 * a + 2)] = la * ca;
        g[(1, 3 * b + 1)] = -1.0;
        g[(1, 3 * b + 2)] = lb * cb;
        for k in 0..dof {
            kkt[(rx, k)] = g[(0, k)];
            kkt[(ry, k)] = g[(1, k)];
            kkt[(k, rx)] = g[(0, k)];
            kkt[(k, ry)] = g[(1, k)];
        }
        let (wa, wb) = (theta_dot[a] * theta_dot[a], theta_dot[b] * theta_dot[b]);
        rhs[rx] = la * ca * wa + lb * cb * wb;
        rhs[ry] = la * sa * wa + lb * sb * wb;
    }
    let sol = kkt.lu().solve(&rhs).expect("constraint system is nonsingular");
    (
        DVector::from_fn(n, |i, _| sol[3 * i]),
        DVector::from_fn(n, |i, _| sol[3 * i + 1]),
        DVector::from_fn(n, |i, _| sol[3 * i + 2]),
    )
}

/// Mount-point inertial position: link CM plus the rotated offset.
pub fn mount_position(model: &ChainModel, state: &ChainState, link: usize, offset: [f64; 2]) -> Vector2<f64> {
    let links = model.reconstruct_links(state).unwrap();
    let (s, c) = state.theta[link].sin_cos();
    Vector2::new(
        links.x[link] + c * offset[0] - s * offset[1],
        links.y[link] + s * offset[0] + c * offset[1],
    )
}

/// Least-squares slope of `log2(error)` against `log2(step)`.
pub fn convergence_order(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|h| h.log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub mod strategies {
    use std::f64::consts::PI;

    use nalgebra::{DVector, Vector2};
    use proptest::prelude::*;

    use salpchain::chain::{ChainParams, ChainState};

    pub fn params(n: usize) -> impl Strategy<Value = ChainParams> {
        (
            prop::collection::vec(0.05..0.3f64, n),
            prop::collection::vec(0.1..2.0f64, n),
            prop::collection::vec(1e-4..1e-2f64, n),
            prop::collection::vec(-PI..PI, n),
        )
            .prop_map(|(l, m, j, psi)| ChainParams::new(l, m, j, psi).unwrap())
    }

    pub fn vector(n: usize, bound: f64) -> impl Strategy<Value = DVector<f64>> {
        prop::collection::vec(-bound..bound, n).prop_map(DVector::from_vec)
    }

    pub fn state(n: usize) -> impl Strategy<Value = ChainState> {
        (vector(n, PI), vector(n, 3.0), vector(2, 1.0), vector(2, 0.5)).prop_map(|(theta, theta_dot, cm, cm_dot)| {
            ChainState {
                theta,
                cm: Vector2::new(cm[0], cm[1]),
                theta_dot,
                cm_dot: Vector2::new(cm_dot[0], cm_dot[1]),
            }
        })
    }

    /// `(params, state, u)` for a chain of `lo..=hi` links.
    pub fn chain(lo: usize, hi: usize) -> impl Strategy<Value = (ChainParams, ChainState, DVector<f64>)> {
        (lo..=hi).prop_flat_map(|n| (params(n), state(n), vector(n, 2.0)))
    }
}
