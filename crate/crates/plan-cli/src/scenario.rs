//! Versioned scenario files: road layout, actors, mobility envelope and
//! run settings, with strict field checking.

use anyhow::{bail, Context, Result};
use planner::config::PlannerConfig;
use planner::world::MobilityModel;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub road: Road,
    pub ego: Ego,
    #[serde(default)]
    pub vehicles: Vec<Vehicle>,
    pub mobility: Mobility,
    /// Signaled speed limit.
    pub v_sig: Speed,
    pub run: Run,
    /// Optional planner parameter overrides.
    #[serde(default)]
    pub planner: Option<PlannerConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    /// Centerline of the reference lane, Cartesian points.
    pub reference_line: Vec<(f64, f64)>,
    pub lanes: Vec<LaneSpec>,
    /// Static obstacle polygons, Cartesian.
    #[serde(default)]
    pub obstacles: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: i64,
    /// Lateral offset of the lane center from the reference line, meters
    /// (positive left).
    pub offset: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ego {
    pub lane: i64,
    pub s: f64,
    #[serde(default)]
    pub d_offset: f64,
    pub speed: Speed,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_length")]
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vehicle {
    pub id: u64,
    pub lane: i64,
    pub s: f64,
    pub speed: Speed,
    #[serde(default)]
    pub motion: Motion,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_width() -> f64 {
    1.8
}

fn default_length() -> f64 {
    4.5
}

/// Speed in exactly one unit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Speed {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kph: Option<f64>,
}

impl Speed {
    pub fn from_mps(v: f64) -> Self {
        Self {
            mps: Some(v),
            kph: None,
        }
    }

    pub fn as_mps(&self) -> Result<f64> {
        match (self.mps, self.kph) {
            (Some(v), None) => Ok(v),
            (None, Some(v)) => Ok(v / 3.6),
            (Some(_), Some(_)) => bail!("speed given in both mps and kph"),
            (None, None) => bail!("speed missing: give mps or kph"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    #[default]
    ConstantSpeed,
    ConstantAccel {
        accel: f64,
    },
    /// Piecewise-linear s(t); speed before the first and after the last
    /// point follows the neighboring segment slope.
    Waypoints {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mobility {
    /// (speed, deceleration) support points.
    pub decel_of_v: Vec<(f64, f64)>,
    /// (speed, acceleration) support points.
    pub accel_of_v: Vec<(f64, f64)>,
    pub a_cen: f64,
    pub a_dec: f64,
    pub v_max: Speed,
}

impl Mobility {
    pub fn to_model(&self) -> Result<MobilityModel> {
        let model = MobilityModel {
            decel_of_v: self.decel_of_v.clone(),
            accel_of_v: self.accel_of_v.clone(),
            a_cen: self.a_cen,
            a_dec: self.a_dec,
            v_max: self.v_max.as_mps()?,
        };
        model.validate().context("mobility tables")?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub duration: f64,
    #[serde(default = "default_replan")]
    pub replan_period: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_replan() -> f64 {
    0.25
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let scenario = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Parse with field paths in errors, e.g. "road.lanes[0].width".
    pub fn parse(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner().to_string();
            // a missing field is reported at the struct, not the field
            match inner
                .strip_prefix("missing field `")
                .and_then(|r| r.split('`').next())
            {
                Some(field) => anyhow::anyhow!("{path}.{field}: {inner}"),
                None => anyhow::anyhow!("{path}: {inner}"),
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {})",
                self.schema_version,
                SCHEMA_VERSION
            );
        }
        if self.road.reference_line.len() < 2 {
            bail!("road.reference_line needs at least two points");
        }
        if self.road.lanes.is_empty() {
            bail!("road.lanes must not be empty");
        }
        for lane in &self.road.lanes {
            if lane.width <= 0.0 {
                bail!("road.lanes[{}].width must be positive", lane.id);
            }
        }
        let mut ids: Vec<i64> = self.road.lanes.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.road.lanes.len() {
            bail!("road.lanes ids must be unique");
        }
        if !ids.contains(&self.ego.lane) {
            bail!("ego.lane {} is not a road lane", self.ego.lane);
        }
        for v in &self.vehicles {
            if !ids.contains(&v.lane) {
                bail!("vehicles[id={}].lane {} is not a road lane", v.id, v.lane);
            }
            v.speed.as_mps().context("vehicle speed")?;
            if let Motion::Waypoints { points } = &v.motion {
                if points.len() < 2 {
                    bail!("vehicles[id={}] waypoint motion needs >= 2 points", v.id);
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    bail!("vehicles[id={}] waypoint times must increase", v.id);
                }
            }
        }
        self.ego.speed.as_mps().context("ego speed")?;
        self.v_sig.as_mps().context("v_sig")?;
        self.mobility.to_model()?;
        if self.run.duration <= 0.0 {
            bail!("run.duration must be positive");
        }
        let cfg = self.planner.clone().unwrap_or_default();
        if self.run.replan_period < cfg.dt - 1e-9 {
            bail!(
                "run.replan_period {} is below the planning step {}",
                self.run.replan_period,
                cfg.dt
            );
        }
        Ok(())
    }

    pub fn planner_config(&self) -> PlannerConfig {
        self.planner.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "name": "minimal",
            "road": {
                "reference_line": [[0.0, 0.0], [200.0, 0.0]],
                "lanes": [{"id": 0, "offset": 0.0, "width": 3.5}]
            },
            "ego": {"lane": 0, "s": 10.0, "speed": {"mps": 10.0}},
            "mobility": {
                "decel_of_v": [[0.0, 4.0], [30.0, 4.0]],
                "accel_of_v": [[0.0, 2.0], [30.0, 2.0]],
                "a_cen": 2.0,
                "a_dec": 1.5,
                "v_max": {"kph": 60.0}
            },
            "v_sig": {"kph": 60.0},
            "run": {"duration": 5.0}
        })
    }

    #[test]
    fn minimal_scenario_parses() {
        let s: Scenario = serde_json::from_value(minimal_json()).unwrap();
        s.validate().unwrap();
        assert!((s.v_sig.as_mps().unwrap() - 60.0 / 3.6).abs() < 1e-12);
        assert!((s.run.replan_period - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unknown_field_rejected_with_name() {
        let mut v = minimal_json();
        v["road"]["lanes"][0]["widht"] = serde_json::json!(3.5);
        let err = serde_json::from_value::<Scenario>(v).unwrap_err();
        assert!(err.to_string().contains("widht"), "{err}");
    }

    #[test]
    fn missing_lane_width_names_the_field() {
        let mut v = minimal_json();
        v["road"]["lanes"][0]
            .as_object_mut()
            .unwrap()
            .remove("width");
        let err = Scenario::parse(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("lanes[0].width"), "{err}");
    }

    #[test]
    fn ambiguous_speed_rejected() {
        let mut v = minimal_json();
        v["ego"]["speed"] = serde_json::json!({"mps": 10.0, "kph": 36.0});
        let s: Scenario = serde_json::from_value(v).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let mut v = minimal_json();
        v["schema_version"] = serde_json::json!(2);
        let s: Scenario = serde_json::from_value(v).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn replan_below_planning_step_rejected() {
        let mut v = minimal_json();
        v["run"]["replan_period"] = serde_json::json!(0.1);
        let s: Scenario = serde_json::from_value(v).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn waypoint_motion_validated() {
        let mut v = minimal_json();
        v["vehicles"] = serde_json::json!([{
            "id": 1, "lane": 0, "s": 30.0, "speed": {"mps": 5.0},
            "motion": {"type": "waypoints", "points": [[0.0, 30.0], [0.0, 40.0]]}
        }]);
        let s: Scenario = serde_json::from_value(v).unwrap();
        assert!(s.validate().is_err(), "non-increasing waypoint times");
    }
}
