//! Per-link thrust waveforms and the stacked thrust schedule.

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::registry::{param_f64, reject_unknown, Registry, StrategySpec};

/// Default square-wave amplitude, N.
pub const DEFAULT_AMPLITUDE: f64 = 1.0;

/// Slack used when comparing a time against a waveform edge, s.
const EDGE_SLACK: f64 = 1e-9;

/// Scalar thrust magnitude of one link as a function of time.
pub trait ThrustWaveform: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn thrust(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantThrust {
    pub amplitude: f64,
}

impl ThrustWaveform for ConstantThrust {
    fn name(&self) -> &str {
        "constant"
    }

    fn thrust(&self, _t: f64) -> f64 {
        self.amplitude
    }
}

/// Unidirectional pulse train: zero before `start_time`, then `amplitude` for
/// `on_duration` followed by zero for `off_duration`, repeating. `phase`
/// delays the pulse train by that many seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareWave {
    pub start_time: f64,
    pub on_duration: f64,
    pub off_duration: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl SquareWave {
    pub fn new(start_time: f64, on_duration: f64, off_duration: f64, amplitude: f64, phase: f64) -> Result<Self> {
        for (field, v) in [("startTime", start_time), ("amplitude", amplitude), ("phase", phase)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("must be finite, got {v}")));
            }
        }
        if !(on_duration > 0.0 && on_duration.is_finite()) {
            return Err(Error::invalid("onDuration", format!("must be positive, got {on_duration}")));
        }
        if !(off_duration >= 0.0 && off_duration.is_finite()) {
            return Err(Error::invalid("offDuration", format!("must be nonnegative, got {off_duration}")));
        }
        Ok(SquareWave {
            start_time,
            on_duration,
            off_duration,
            amplitude,
            phase,
        })
    }

    pub fn period(&self) -> f64 {
        self.on_duration + self.off_duration
    }

    pub fn is_on(&self, t: f64) -> bool {
        let elapsed = t - self.start_time - self.phase;
        if elapsed < -EDGE_SLACK {
            return false;
        }
        let period = self.period();
        let cycles = (elapsed / period + EDGE_SLACK).floor();
        elapsed - cycles * period < self.on_duration - EDGE_SLACK
    }
}

impl ThrustWaveform for SquareWave {
    fn name(&self) -> &str {
        "squareWave"
    }

    fn thrust(&self, t: f64) -> f64 {
        if self.is_on(t) {
            self.amplitude
        } else {
            0.0
        }
    }
}

pub fn waveform_registry() -> Registry<dyn ThrustWaveform> {
    let mut reg: Registry<dyn ThrustWaveform> = Registry::new("thrust waveform");
    reg.register("constant", |p| {
        reject_unknown(p, &["amplitude"])?;
        Ok(Box::new(ConstantThrust {
            amplitude: param_f64(p, "amplitude", Some(DEFAULT_AMPLITUDE))?,
        }))
    });
    reg.register("squareWave", |p| {
        reject_unknown(p, &["startTime", "onDuration", "offDuration", "amplitude", "phase"])?;
        Ok(Box::new(SquareWave::new(
            param_f64(p, "startTime", None)?,
            param_f64(p, "onDuration", None)?,
            param_f64(p, "offDuration", None)?,
            param_f64(p, "amplitude", Some(DEFAULT_AMPLITUDE))?,
            param_f64(p, "phase", Some(0.0))?,
        )?))
    });
    reg
}

/// One waveform per link.
#[derive(Debug)]
pub struct ThrustSchedule {
    links: Vec<Box<dyn ThrustWaveform>>,
}

impl ThrustSchedule {
    pub fn new(links: Vec<Box<dyn ThrustWaveform>>) -> Self {
        ThrustSchedule { links }
    }

    pub fn from_specs(specs: &[StrategySpec], registry: &Registry<dyn ThrustWaveform>) -> Result<Self> {
        let links = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                registry.build(s).map_err(|e| Error::Config {
                    path: format!("thrust[{i}]"),
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ThrustSchedule { links })
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn command(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.links.len(), self.links.iter().map(|w| w.thrust(t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal_wave() -> SquareWave {
        SquareWave::new(0.2, 0.1, 0.2, 1.0, 0.0).unwrap()
    }

    #[test]
    fn square_wave_timing() {
        let w = nominal_wave();
        assert_eq!(w.thrust(0.25), 1.0);
        assert_eq!(w.thrust(0.35), 0.0);
        assert_eq!(w.thrust(0.0), 0.0);
        assert_eq!(w.thrust(0.19), 0.0);
        assert_eq!(w.thrust(0.55), 1.0);
        assert_eq!(w.thrust(0.65), 0.0);
    }

    #[test]
    fn square_wave_edges_on_grid() {
        let w = nominal_wave();
        let on: Vec<usize> = (0..=100).filter(|&k| w.is_on(k as f64 / 100.0)).collect();
        let expected: Vec<usize> = (20..30).chain(50..60).chain(80..90).collect();
        assert_eq!(on, expected);
    }

    #[test]
    fn phase_delays_pulses() {
        let w = SquareWave::new(0.2, 0.1, 0.2, 2.0, 0.05).unwrap();
        assert_eq!(w.thrust(0.22), 0.0);
        assert_eq!(w.thrust(0.27), 2.0);
    }

    #[test]
    fn registry_builds_schedule() {
        let reg = waveform_registry();
        let specs = vec![
            StrategySpec::named("constant").with("amplitude", 0.5),
            StrategySpec::named("squareWave")
                .with("startTime", 0.2)
                .with("onDuration", 0.1)
                .with("offDuration", 0.2),
        ];
        let s = ThrustSchedule::from_specs(&specs, &reg).unwrap();
        assert_eq!(s.command(0.25).as_slice(), &[0.5, 1.0]);
        let bad = vec![StrategySpec::named("squareWave").with("startTime", 0.2)];
        let err = ThrustSchedule::from_specs(&bad, &reg).unwrap_err();
        assert!(err.to_string().contains("thrust[0]"), "{err}");
    }

    #[test]
    fn rejects_bad_durations() {
        assert!(SquareWave::new(0.0, 0.0, 0.1, 1.0, 0.0).is_err());
        assert!(SquareWave::new(0.0, 0.1, -0.1, 1.0, 0.0).is_err());
    }
}
