//! Deterministic scenario replay: the world steps at the planning
//! interval, the planner runs at the replan period, and the ego follows
//! the selected trajectory. A post-hoc separating-axis audit checks every
//! step for vehicle contact.

use anyhow::{anyhow, Context, Result};
use planner::config::PlannerConfig;
use planner::frenet::{ReferencePath, Vec2};
use planner::world::{self, CostMap, Lane, VehicleState, WorldSnapshot};
use planner::{PlanOutcome, Planner};

use crate::scenario::{Motion, Scenario, Vehicle};

/// Static world data shared by every planning cycle.
pub struct World {
    pub ref_path: ReferencePath,
    pub lanes: Vec<Lane>,
    pub cost_map: CostMap,
    pub mobility: world::MobilityModel,
    pub v_sig: f64,
}

/// Build lane border lines by sweeping the reference path at an offset.
fn offset_line(path: &ReferencePath, offset: f64, interval: f64) -> Result<ReferencePath> {
    let mut pts = Vec::new();
    let mut s = 0.0;
    while s <= path.s_max() {
        let p = path
            .to_cartesian(s, offset)
            .map_err(|e| anyhow!("lane offset {offset} unreachable at s={s:.1}: {e}"))?;
        pts.push((p.x, p.y));
        s += interval;
    }
    ReferencePath::build(&pts, interval).map_err(|e| anyhow!("offset line: {e}"))
}

pub fn build_world(scenario: &Scenario, cfg: &PlannerConfig) -> Result<World> {
    let ref_path = ReferencePath::build(&scenario.road.reference_line, cfg.path_interval)
        .map_err(|e| anyhow!("reference line: {e}"))?;

    let mut lanes = Vec::new();
    for spec in &scenario.road.lanes {
        lanes.push(Lane {
            id: spec.id,
            left_line: offset_line(&ref_path, spec.offset + 0.5 * spec.width, cfg.path_interval)?,
            right_line: offset_line(&ref_path, spec.offset - 0.5 * spec.width, cfg.path_interval)?,
            width: spec.width,
            d_center: spec.offset,
        });
    }

    // map extent: path bounding box padded by the road half-width
    let lateral_reach = scenario
        .road
        .lanes
        .iter()
        .map(|l| l.offset.abs() + 0.5 * l.width)
        .fold(0.0_f64, f64::max)
        + 2.0;
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut s = 0.0;
    while s <= ref_path.s_max() {
        let p = ref_path.to_cartesian(s, 0.0).unwrap();
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
        s += 2.0;
    }
    let res = cfg.costmap_resolution;
    let origin = Vec2::new(min_x - lateral_reach, min_y - lateral_reach);
    let cols = (((max_x - min_x) + 2.0 * lateral_reach) / res).ceil() as usize + 1;
    let rows = (((max_y - min_y) + 2.0 * lateral_reach) / res).ceil() as usize + 1;
    let cost_map = CostMap::rasterize_obstacles(
        rows,
        cols,
        res,
        origin,
        &scenario.road.obstacles,
        cfg.d_safe,
    );

    Ok(World {
        ref_path,
        lanes,
        cost_map,
        mobility: scenario.mobility.to_model()?,
        v_sig: scenario.v_sig.as_mps()?,
    })
}

/// A scripted vehicle at runtime.
pub struct Actor {
    pub spec: Vehicle,
    pub s: f64,
    pub v: f64,
}

impl Actor {
    fn new(spec: &Vehicle) -> Result<Self> {
        let v = spec.speed.as_mps()?;
        Ok(Self {
            spec: spec.clone(),
            s: spec.s,
            v,
        })
    }

    fn step(&mut self, t_next: f64, dt: f64) {
        match &self.spec.motion {
            Motion::ConstantSpeed => {
                self.s += self.v * dt;
            }
            Motion::ConstantAccel { accel } => {
                let v_next = (self.v + accel * dt).max(0.0);
                self.s += 0.5 * (self.v + v_next) * dt;
                self.v = v_next;
            }
            Motion::Waypoints { points } => {
                let (s, v) = sample_waypoints(points, t_next);
                self.s = s;
                self.v = v;
            }
        }
    }

    fn predicted_accel(&self) -> f64 {
        match self.spec.motion {
            Motion::ConstantAccel { accel } => accel,
            _ => 0.0,
        }
    }

    fn state(&self, lane_d: f64) -> VehicleState {
        VehicleState {
            s: self.s,
            d: lane_d,
            v: self.v,
            lane_id: self.spec.lane,
            width: self.spec.width,
            length: self.spec.length,
        }
    }
}

fn sample_waypoints(points: &[(f64, f64)], t: f64) -> (f64, f64) {
    let first = points.first().unwrap();
    let last = points.last().unwrap();
    let slope = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
    if t <= first.0 {
        let v = slope(*first, points[1]);
        return (first.1 + v * (t - first.0), v.max(0.0));
    }
    if t >= last.0 {
        let v = slope(points[points.len() - 2], *last);
        return (last.1 + v * (t - last.0), v.max(0.0));
    }
    for w in points.windows(2) {
        if t <= w[1].0 {
            let v = slope(w[0], w[1]);
            return (w[0].1 + v * (t - w[0].0), v.max(0.0));
        }
    }
    (last.1, 0.0)
}

/// Executed ego sample, one per world step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub s: f64,
    pub d: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub jerk: f64,
}

/// One planning cycle summary.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub index: usize,
    pub t: f64,
    pub t_static: f64,
    pub t_dynamic: f64,
    pub t_optimization: f64,
    pub corridors: usize,
    pub profiles: usize,
    pub routes: usize,
    pub maneuvers: usize,
    pub selected_lane: Option<i64>,
    pub selected_sequence: Vec<i64>,
    pub selected_maneuver: Option<usize>,
    pub emergency: bool,
}

pub struct SimResult {
    pub cycles: Vec<CycleRecord>,
    pub steps: Vec<StepRecord>,
    /// First contact, if any: time and a description of the object hit.
    pub collision: Option<(f64, String)>,
    /// Plan outcome of the first cycle, kept for plotting.
    pub first_outcome: Option<PlanOutcome>,
    pub maneuver_log: Vec<serde_json::Value>,
    /// Largest executed |lateral jerk| over the run, m/s^3.
    pub max_lateral_jerk: f64,
}

fn rect_corners(center: Vec2, heading: f64, length: f64, width: f64) -> [Vec2; 4] {
    let (c, s) = (heading.cos(), heading.sin());
    let (hl, hw) = (0.5 * length, 0.5 * width);
    let axis_l = Vec2::new(c, s);
    let axis_w = Vec2::new(-s, c);
    [
        center.add(axis_l.scale(hl)).add(axis_w.scale(hw)),
        center.add(axis_l.scale(hl)).add(axis_w.scale(-hw)),
        center.add(axis_l.scale(-hl)).add(axis_w.scale(-hw)),
        center.add(axis_l.scale(-hl)).add(axis_w.scale(hw)),
    ]
}

/// Separating-axis test for two convex polygons.
fn convex_intersect(a: &[Vec2], b: &[Vec2]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let edge = poly[(i + 1) % poly.len()].sub(poly[i]);
            let axis = Vec2::new(-edge.y, edge.x);
            let project = |r: &[Vec2]| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for p in r {
                    let v = p.dot(axis);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            };
            let (alo, ahi) = project(a);
            let (blo, bhi) = project(b);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
    }
    true
}

fn heading_at(path: &ReferencePath, s: f64, d: f64) -> f64 {
    let h = 0.5;
    let s0 = (s - h).max(0.0);
    let s1 = (s + h).min(path.s_max());
    let p0 = path.to_cartesian(s0, d).unwrap_or(Vec2::new(0.0, 0.0));
    let p1 = path.to_cartesian(s1, d).unwrap_or(Vec2::new(1.0, 0.0));
    (p1.y - p0.y).atan2(p1.x - p0.x)
}

pub fn run(scenario: &Scenario) -> Result<SimResult> {
    let cfg = scenario.planner_config();
    let world = build_world(scenario, &cfg)?;
    let dt = cfg.dt;
    let n = cfg.n_steps;
    let steps_per_replan = (scenario.run.replan_period / dt).round().max(1.0) as usize;
    let total_steps = (scenario.run.duration / dt).ceil() as usize;

    let lane_center = |id: i64| {
        world
            .lanes
            .iter()
            .find(|l| l.id == id)
            .map(|l| l.d_center)
            .unwrap_or(0.0)
    };

    let mut ego = VehicleState {
        s: scenario.ego.s,
        d: lane_center(scenario.ego.lane) + scenario.ego.d_offset,
        v: scenario.ego.speed.as_mps()?,
        lane_id: scenario.ego.lane,
        width: scenario.ego.width,
        length: scenario.ego.length,
    };
    let mut actors: Vec<Actor> = scenario
        .vehicles
        .iter()
        .map(Actor::new)
        .collect::<Result<_>>()?;

    let mut planner = Planner::new(cfg.clone());
    let mut cycles = Vec::new();
    let mut steps = Vec::new();
    let mut collision = None;
    let mut first_outcome = None;
    let mut maneuver_log = Vec::new();

    let mut current: Option<planner::optim::Trajectory> = None;
    let mut step_in_plan = 0usize;
    let mut ego_d_rate = 0.0;

    let obstacle_polys: Vec<Vec<Vec2>> = scenario
        .road
        .obstacles
        .iter()
        .map(|poly| poly.iter().map(|&(x, y)| Vec2::new(x, y)).collect())
        .collect();

    let p0 = world
        .ref_path
        .to_cartesian(ego.s.min(world.ref_path.s_max()), ego.d)
        .map_err(|e| anyhow!("ego starts off the mapped road: {e}"))?;
    steps.push(StepRecord {
        t: 0.0,
        s: ego.s,
        d: ego.d,
        x: p0.x,
        y: p0.y,
        v: ego.v,
        a: 0.0,
        jerk: 0.0,
    });

    for step in 0..total_steps {
        let t = step as f64 * dt;

        if step % steps_per_replan == 0 {
            let predictions = world::predict_trajectories(
                &actors
                    .iter()
                    .map(|a| {
                        (
                            a.spec.id,
                            a.state(lane_center(a.spec.lane)),
                            a.predicted_accel(),
                        )
                    })
                    .collect::<Vec<_>>(),
                ego.s,
                dt,
                n,
            );
            let snapshot = WorldSnapshot {
                lanes: world.lanes.clone(),
                cost_map: world.cost_map.clone(),
                ego,
                ego_d_rate,
                vehicles: predictions,
                mobility: world.mobility.clone(),
                v_sig: world.v_sig,
                dt,
                n_steps: n,
                ref_path: world.ref_path.clone(),
            };
            let outcome = planner
                .plan(&snapshot)
                .with_context(|| format!("planning at t={t:.2}"))?;

            let (selected_lane, selected_sequence) = match outcome.selected {
                Some(i) => {
                    let m = &outcome.maneuvers[i];
                    (Some(m.target_lane()), m.lane_sequence.clone())
                }
                None => (None, Vec::new()),
            };
            cycles.push(CycleRecord {
                index: cycles.len(),
                t,
                t_static: outcome.timings.t_static,
                t_dynamic: outcome.timings.t_dynamic,
                t_optimization: outcome.timings.t_optimization,
                corridors: outcome.corridors.len(),
                profiles: outcome.profiles.len(),
                routes: outcome.routes.len(),
                maneuvers: outcome
                    .maneuvers
                    .iter()
                    .filter(|m| m.trajectory.is_some())
                    .count(),
                selected_lane,
                selected_sequence: selected_sequence.clone(),
                selected_maneuver: outcome.selected,
                emergency: outcome.selected.is_none(),
            });
            maneuver_log.push(crate::emit::maneuver_summary(&outcome, t));
            current = outcome.selected_trajectory().cloned();
            step_in_plan = 0;
            if first_outcome.is_none() {
                first_outcome = Some(outcome);
            }
        }

        // ego follows the active trajectory
        let traj = current.as_ref().expect("a trajectory is always active");
        let k = (step_in_plan + 1).min(traj.len() - 1);
        ego.s = traj.s[k];
        ego_d_rate = (traj.d[k] - ego.d) / dt;
        ego.d = traj.d[k];
        let vel = traj.velocity();
        let acc = traj.acceleration();
        let jrk = traj.jerk();
        ego.v = vel[k.min(vel.len() - 1)];
        ego.lane_id = world
            .lanes
            .iter()
            .min_by(|a, b| {
                (a.d_center - ego.d)
                    .abs()
                    .partial_cmp(&(b.d_center - ego.d).abs())
                    .unwrap()
            })
            .map(|l| l.id)
            .unwrap_or(ego.lane_id);
        step_in_plan += 1;

        let t_next = t + dt;
        for a in actors.iter_mut() {
            a.step(t_next, dt);
        }

        let p = world
            .ref_path
            .to_cartesian(ego.s.min(world.ref_path.s_max()), ego.d)
            .map_err(|e| anyhow!("ego left the mapped road at t={t_next:.2}: {e}"))?;
        steps.push(StepRecord {
            t: t_next,
            s: ego.s,
            d: ego.d,
            x: p.x,
            y: p.y,
            v: ego.v,
            a: acc[k.min(acc.len() - 1)],
            jerk: jrk[k.min(jrk.len() - 1)],
        });

        if collision.is_none() {
            let ego_rect = rect_corners(
                p,
                heading_at(&world.ref_path, ego.s, ego.d),
                ego.length,
                ego.width,
            );
            for a in &actors {
                let d = lane_center(a.spec.lane);
                let s_clamped = a.s.clamp(0.0, world.ref_path.s_max());
                if let Ok(c) = world.ref_path.to_cartesian(s_clamped, d) {
                    let rect = rect_corners(
                        c,
                        heading_at(&world.ref_path, s_clamped, d),
                        a.spec.length,
                        a.spec.width,
                    );
                    if convex_intersect(&ego_rect, &rect) {
                        collision =
                            Some((t_next, format!("vehicle {}", a.spec.id)));
                    }
                }
            }
            for (i, poly) in obstacle_polys.iter().enumerate() {
                if collision.is_none() && convex_intersect(&ego_rect, poly) {
                    collision = Some((t_next, format!("obstacle {i}")));
                }
            }
        }
    }

    // comfort audit over the executed path, not the planned one:
    // replan seams are invisible to per-plan jerk columns
    let lat: Vec<f64> = steps.iter().map(|r| r.d).collect();
    let diff = |x: &[f64]| -> Vec<f64> {
        x.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
    };
    let max_lateral_jerk = diff(&diff(&diff(&lat)))
        .iter()
        .fold(0.0f64, |m, j| m.max(j.abs()));
    if max_lateral_jerk > cfg.max_lateral_jerk {
        log::warn!(
            "executed lateral jerk {max_lateral_jerk:.2} m/s^3 exceeds the configured bound {:.2}",
            cfg.max_lateral_jerk
        );
    }

    Ok(SimResult {
        cycles,
        steps,
        collision,
        first_outcome,
        maneuver_log,
        max_lateral_jerk,
    })
}
