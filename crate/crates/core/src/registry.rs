//! Name-keyed registries of interchangeable strategies.
//!
//! Every swappable piece of the pipeline (external force models, thrust
//! waveforms, accelerometer models, parameter policies) is a trait object
//! built from a name plus a JSON parameter object, so scenario files and the
//! CLI can select them at runtime and downstream code can register its own.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A strategy selection as written in a config file:
/// `{"type": "linear-drag", "c": 0.4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    #[serde(rename = "type")]
    pub name: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl StrategySpec {
    pub fn named(name: impl Into<String>) -> Self {
        StrategySpec {
            name: name.into(),
            params: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

pub type Factory<T> = Arc<dyn Fn(&Map<String, Value>) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Clone for Registry<T> {
    fn clone(&self) -> Self {
        Registry {
            kind: self.kind,
            factories: self.factories.clone(),
        }
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers (or replaces) a factory under `name`.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&Map<String, Value>) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &StrategySpec) -> Result<Box<T>> {
        let factory = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: spec.name.clone(),
                available: self.names().join(", "),
            })?;
        factory(&spec.params)
    }
}

/// Reads an optional numeric parameter, falling back to `default`.
pub fn param_f64(params: &Map<String, Value>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) => v.as_f64().ok_or_else(|| Error::Config {
            path: key.to_string(),
            message: format!("expected a number, got {v}"),
        }),
        None => default.ok_or_else(|| Error::Config {
            path: key.to_string(),
            message: "missing required parameter".into(),
        }),
    }
}

/// Fails on parameters the strategy does not understand.
pub fn reject_unknown(params: &Map<String, Value>, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::Config {
            path: k.clone(),
            message: format!("unknown parameter (expected one of: {})", known.join(", ")),
        }),
        None => Ok(()),
    }
}
