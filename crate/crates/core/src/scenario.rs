//! Simulation scenarios and their TOML representation.
//!
//! Field names in the file match the struct fields one-to-one (see
//! `scenarios/SCHEMA.md`); `sweep` addresses them by dotted path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dtc::DtcConfig;
use crate::enmpc::{default_config, ControllerConfig};
use crate::error::{Error, Result};
use crate::inverter::InverterParams;
use crate::motor::{MotorParams, MotorState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedKnot {
    pub t: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadStep {
    pub t: f64,
    #[serde(rename = "F_L")]
    pub f_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControllerSpec {
    Enmpc(ControllerConfig),
    Dtc(DtcConfig),
}

impl ControllerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerSpec::Enmpc(_) => "enmpc",
            ControllerSpec::Dtc(_) => "dtc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Simulated time in seconds.
    pub duration: f64,
    /// Sampling period in seconds.
    #[serde(rename = "Ts")]
    pub ts: f64,
    /// DC-link voltage.
    pub vdc: f64,
    /// Piecewise-linear speed reference, held after the last knot.
    pub speed_profile: Vec<SpeedKnot>,
    /// Piecewise-constant load force.
    pub load_profile: Vec<LoadStep>,
    #[serde(default)]
    pub initial_state: MotorState,
    /// Plant-side parameters.
    pub motor: MotorParams,
    /// Parameters the controller and estimator believe.
    pub controller_motor: MotorParams,
    pub controller: ControllerSpec,
    /// DTC settings used when comparing against the configured controller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<DtcConfig>,
}

impl Scenario {
    pub fn inverter(&self) -> InverterParams {
        InverterParams { vdc: self.vdc }
    }

    /// Number of plant steps; the trace has one more record.
    pub fn steps(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ts
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let knots = &self.speed_profile;
        if t <= knots[0].t {
            return knots[0].w;
        }
        for pair in knots.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.t {
                if b.t == a.t {
                    return b.w;
                }
                return a.w + (b.w - a.w) * (t - a.t) / (b.t - a.t);
            }
        }
        knots[knots.len() - 1].w
    }

    pub fn load_at(&self, t: f64) -> f64 {
        self.load_profile
            .iter()
            .take_while(|s| s.t <= t)
            .last()
            .map_or(self.load_profile[0].f_load, |s| s.f_load)
    }

    /// Times strictly inside (0, duration) where the reference changes slope
    /// or the load changes, sorted and deduplicated.
    pub fn events(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = Vec::new();
        for pair in self.speed_profile.windows(3) {
            let s0 = slope(pair[0], pair[1]);
            let s1 = slope(pair[1], pair[2]);
            if s0 != s1 {
                ev.push(pair[1].t);
            }
        }
        for pair in self.load_profile.windows(2) {
            if pair[0].f_load != pair[1].f_load {
                ev.push(pair[1].t);
            }
        }
        ev.retain(|&t| t > 0.0 && t < self.duration);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev.dedup();
        ev
    }

    /// Load change times inside the run.
    pub fn load_events(&self) -> Vec<f64> {
        self.load_profile
            .windows(2)
            .filter(|p| p[0].f_load != p[1].f_load)
            .map(|p| p[1].t)
            .filter(|&t| t > 0.0 && t < self.duration)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(format!("{}: {m}", self.name)));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return bad(format!("Ts must be positive, got {}", self.ts));
        }
        if self.ts > self.duration {
            return bad("Ts exceeds duration".into());
        }
        let ratio = self.duration / self.ts;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return bad(format!("duration {} is not a multiple of Ts {}", self.duration, self.ts));
        }
        if !(self.vdc.is_finite() && self.vdc > 0.0) {
            return bad(format!("vdc must be positive, got {}", self.vdc));
        }
        self.motor.validate()?;
        self.controller_motor.validate()?;
        if !self.initial_state.is_finite() {
            return bad("initial_state must be finite".into());
        }
        check_profile("speed_profile", self.speed_profile.iter().map(|k| (k.t, k.w)))
            .or_else(bad)?;
        check_profile("load_profile", self.load_profile.iter().map(|k| (k.t, k.f_load)))
            .or_else(bad)?;
        match &self.controller {
            ControllerSpec::Enmpc(c) => c.validate()?,
            ControllerSpec::Dtc(c) => c.validate()?,
        }
        if let Some(b) = &self.baseline {
            b.validate()?;
        }
        Ok(())
    }

    /// The DTC configuration for comparisons: the configured controller if it
    /// is a DTC, otherwise `baseline`, otherwise the motor-derived default.
    pub fn dtc_config(&self) -> Result<DtcConfig> {
        match (&self.controller, &self.baseline) {
            (ControllerSpec::Dtc(c), _) => Ok(*c),
            (_, Some(b)) => Ok(*b),
            _ => DtcConfig::for_motor(&self.controller_motor),
        }
    }

    pub fn with_controller(&self, controller: ControllerSpec) -> Scenario {
        Scenario {
            controller,
            ..self.clone()
        }
    }

    pub fn from_toml_str(s: &str, origin: &Path) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sc = Self::from_toml_str(&text, path)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

fn slope(a: SpeedKnot, b: SpeedKnot) -> f64 {
    if b.t == a.t {
        f64::INFINITY
    } else {
        (b.w - a.w) / (b.t - a.t)
    }
}

fn check_profile(name: &str, points: impl Iterator<Item = (f64, f64)>) -> std::result::Result<(), String> {
    let points: Vec<_> = points.collect();
    let Some(first) = points.first() else {
        return Err(format!("{name} must not be empty"));
    };
    if first.0 > 0.0 {
        return Err(format!("{name} must start at t <= 0"));
    }
    if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return Err(format!("{name} contains non-finite values"));
    }
    if points.windows(2).any(|p| p[1].0 < p[0].0) {
        return Err(format!("{name} must be sorted by time"));
    }
    Ok(())
}

/// Sampling period used by every shipped scenario.
pub const SHIPPED_TS: f64 = 1e-4;

fn base(name: &str, speed_profile: Vec<SpeedKnot>) -> Scenario {
    let motor = MotorParams::nominal();
    Scenario {
        name: name.to_string(),
        duration: 1.0,
        ts: SHIPPED_TS,
        vdc: InverterParams::DEFAULT_VDC,
        speed_profile,
        load_profile: vec![
            LoadStep {
                t: 0.0,
                f_load: 350.0,
            },
            LoadStep {
                t: 0.5,
                f_load: 500.0,
            },
        ],
        initial_state: MotorState::default(),
        motor,
        controller_motor: motor,
        controller: ControllerSpec::Enmpc(default_config(SHIPPED_TS)),
        baseline: Some(DtcConfig::for_motor(&motor).expect("nominal motor is valid")),
    }
}

/// Ramp to 2 m/s over 0.2 s, 350 → 500 N load step at 0.5 s.
pub fn high_speed() -> Scenario {
    base(
        "high-speed",
        vec![
            SpeedKnot { t: 0.0, w: 0.0 },
            SpeedKnot { t: 0.2, w: 2.0 },
            SpeedKnot { t: 1.0, w: 2.0 },
        ],
    )
}

/// Constant 0.1 m/s with the same load step.
pub fn low_speed() -> Scenario {
    base("low-speed", vec![SpeedKnot { t: 0.0, w: 0.1 }, SpeedKnot { t: 1.0, w: 0.1 }])
}

fn rs_scaled(name: &str, factor: f64) -> Scenario {
    let mut sc = low_speed();
    sc.name = name.to_string();
    sc.motor.rs *= factor;
    sc
}

pub fn rs_plus_50() -> Scenario {
    rs_scaled("rs-plus-50", 1.5)
}

pub fn rs_minus_50() -> Scenario {
    rs_scaled("rs-minus-50", 0.5)
}

/// High-speed scenario intended for `sweep` over `controller.P_sw.0`.
pub fn pj_sweep() -> Scenario {
    let mut sc = high_speed();
    sc.name = "pj-sweep".to_string();
    sc
}

pub fn shipped_scenarios() -> Vec<Scenario> {
    vec![high_speed(), low_speed(), rs_plus_50(), rs_minus_50(), pj_sweep()]
}

/// Sets a dotted key (array elements by index, e.g. `controller.P_sw.0`) in a
/// scenario and re-validates the result. The value is parsed as a TOML value.
pub fn override_key(sc: &Scenario, key: &str, value: &str) -> Result<Scenario> {
    let invalid = |m: String| Error::InvalidConfig(format!("{key}: {m}"));
    let mut root = toml::Value::try_from(sc).map_err(|e| invalid(e.to_string()))?;
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("x = {value}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));

    let mut node = &mut root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    let slot = t.get_mut(*part).ok_or_else(|| invalid(format!("no field `{part}`")))?;
                    *slot = coerce(slot, parsed.clone());
                    break;
                }
                t.get_mut(*part).ok_or_else(|| invalid(format!("no field `{part}`")))?
            }
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| invalid(format!("`{part}` is not an index")))?;
                let len = a.len();
                let slot = a.get_mut(i).ok_or_else(|| invalid(format!("index {i} out of range ({len})")))?;
                if last {
                    *slot = coerce(slot, parsed.clone());
                    break;
                }
                slot
            }
            _ => return Err(invalid(format!("cannot descend into `{part}`"))),
        };
    }
    let out: Scenario = root.try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))?;
    out.validate()?;
    Ok(out)
}

/// Integers written where a float is stored become floats.
fn coerce(existing: &toml::Value, v: toml::Value) -> toml::Value {
    match (existing, v) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profiles() {
        let hs = high_speed();
        assert!((hs.speed_at(0.2) - 2.0).abs() < 1e-12);
        assert!((hs.speed_at(0.1) - 1.0).abs() < 1e-12);
        assert_eq!(hs.speed_at(0.9), 2.0);
        assert_eq!(hs.load_at(0.0), 350.0);
        assert_eq!(hs.load_at(0.4999), 350.0);
        assert_eq!(hs.load_at(0.5), 500.0);
        assert_eq!(hs.events(), vec![0.2, 0.5]);
        assert_eq!(hs.load_events(), vec![0.5]);
        assert_eq!(hs.steps(), 10_000);

        let ls = low_speed();
        for t in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(ls.speed_at(t), 0.1);
        }
        assert_eq!(ls.events(), vec![0.5]);

        let p = rs_plus_50();
        assert!((p.motor.rs - 1.5 * 5.3685).abs() < 1e-12);
        assert_eq!(p.controller_motor.rs, 5.3685);
        assert!((rs_minus_50().motor.rs - 0.5 * 5.3685).abs() < 1e-12);

        for sc in shipped_scenarios() {
            sc.validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        for sc in shipped_scenarios() {
            let text = sc.to_toml_string();
            let back = Scenario::from_toml_str(&text, Path::new("mem")).unwrap();
            assert_eq!(back, sc);
        }
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = high_speed().to_toml_string().replace("vdc =", "vdcc =");
        assert!(Scenario::from_toml_str(&text, Path::new("mem")).is_err());
    }

    #[test]
    fn validation_failures() {
        let mut sc = high_speed();
        sc.duration = 0.0;
        assert!(sc.validate().is_err());
        let mut sc = high_speed();
        sc.speed_profile.reverse();
        assert!(sc.validate().is_err());
        let mut sc = high_speed();
        sc.load_profile.clear();
        assert!(sc.validate().is_err());
        let mut sc = high_speed();
        sc.ts = 3e-4;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn dotted_overrides() {
        let sc = pj_sweep();
        let hi = override_key(&sc, "controller.P_sw.0", "10000").unwrap();
        match &hi.controller {
            ControllerSpec::Enmpc(c) => assert_eq!(c.p_sw, vec![10000.0]),
            _ => panic!(),
        }
        let v = override_key(&sc, "vdc", "300").unwrap();
        assert_eq!(v.vdc, 300.0);
        let rs = override_key(&sc, "motor.Rs", "8.0").unwrap();
        assert_eq!(rs.motor.rs, 8.0);
        assert!(override_key(&sc, "controller.nope", "1").is_err());
        assert!(override_key(&sc, "controller.P_sw.3", "1").is_err());
        assert!(override_key(&sc, "controller.P_sw.0", "-1").is_err());
    }
}
