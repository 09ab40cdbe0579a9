//! External (non-thruster) forces acting at the link CMs.
//!
//! The equations of motion make no assumption about these beyond smoothness
//! and boundedness; concrete models are selected by name from
//! [`force_registry`].

use std::fmt;

use nalgebra::DVector;

use crate::chain::ChainState;
use crate::dynamics::ChainModel;
use crate::error::{Error, Result};
use crate::registry::{param_f64, reject_unknown, Registry};

/// Inertial-frame external forces on every link, N each.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalForces {
    pub fx: DVector<f64>,
    pub fy: DVector<f64>,
}

impl ExternalForces {
    pub fn zeros(n: usize) -> Self {
        ExternalForces {
            fx: DVector::zeros(n),
            fy: DVector::zeros(n),
        }
    }

    pub fn new(fx: DVector<f64>, fy: DVector<f64>) -> Result<Self> {
        if fx.len() != fy.len() {
            return Err(Error::Dimension {
                what: "external force components",
                expected: fx.len(),
                got: fy.len(),
            });
        }
        Ok(ExternalForces { fx, fy })
    }

    fn check(self, n: usize) -> Result<Self> {
        if self.fx.len() != n || self.fy.len() != n {
            return Err(Error::Dimension {
                what: "external forces",
                expected: n,
                got: self.fx.len().min(self.fy.len()),
            });
        }
        if self.fx.iter().chain(self.fy.iter()).any(|f| !f.is_finite()) {
            return Err(Error::Numerical("external force model returned a non-finite force".into()));
        }
        Ok(self)
    }
}

/// A state- and time-dependent external force field.
pub trait ExternalForceModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn forces(&self, t: f64, model: &ChainModel, state: &ChainState) -> Result<ExternalForces>;

    /// Evaluates and checks the result length and finiteness.
    fn evaluate(&self, t: f64, model: &ChainModel, state: &ChainState) -> Result<ExternalForces> {
        self.forces(t, model, state)?.check(model.n())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoExternalForce;

impl ExternalForceModel for NoExternalForce {
    fn name(&self) -> &str {
        "none"
    }

    fn forces(&self, _t: f64, model: &ChainModel, _state: &ChainState) -> Result<ExternalForces> {
        Ok(ExternalForces::zeros(model.n()))
    }
}

/// `f = −c · v_i` on each link CM. Test scaffolding for net-force
/// cancellation, not a hydrodynamic model.
#[derive(Debug, Clone, Copy)]
pub struct LinearDrag {
    pub c: f64,
}

impl ExternalForceModel for LinearDrag {
    fn name(&self) -> &str {
        "linear-drag"
    }

    fn forces(&self, _t: f64, model: &ChainModel, state: &ChainState) -> Result<ExternalForces> {
        let links = model.reconstruct_links(state)?;
        Ok(ExternalForces {
            fx: links.x_dot * -self.c,
            fy: links.y_dot * -self.c,
        })
    }
}

/// Constant force per link, mostly useful in tests.
#[derive(Debug, Clone)]
pub struct ConstantForce(pub ExternalForces);

impl ExternalForceModel for ConstantForce {
    fn name(&self) -> &str {
        "constant"
    }

    fn forces(&self, _t: f64, _model: &ChainModel, _state: &ChainState) -> Result<ExternalForces> {
        Ok(self.0.clone())
    }
}

fn vector_param(params: &serde_json::Map<String, serde_json::Value>, key: &str) -> Result<DVector<f64>> {
    let values = params
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Config {
            path: key.into(),
            message: "expected an array of numbers".into(),
        })?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64().ok_or_else(|| Error::Config {
                path: format!("{key}[{i}]"),
                message: format!("expected a number, got {v}"),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// Built-in force models: `none`, `linear-drag {c}`, `constant {fx, fy}`.
pub fn force_registry() -> Registry<dyn ExternalForceModel> {
    let mut reg: Registry<dyn ExternalForceModel> = Registry::new("external force model");
    reg.register("none", |p| {
        reject_unknown(p, &[])?;
        Ok(Box::new(NoExternalForce))
    });
    reg.register("linear-drag", |p| {
        reject_unknown(p, &["c"])?;
        let c = param_f64(p, "c", None)?;
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid("c", "drag coefficient must be finite and nonnegative"));
        }
        Ok(Box::new(LinearDrag { c }))
    });
    reg.register("constant", |p| {
        reject_unknown(p, &["fx", "fy"])?;
        let forces = ExternalForces::new(vector_param(p, "fx")?, vector_param(p, "fy")?)?;
        Ok(Box::new(ConstantForce(forces)))
    });
    reg
}
