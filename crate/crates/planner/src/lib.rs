//! Topological maneuver planning for structured roads.
//!
//! The pipeline enumerates drivable corridors in the d-s plane and
//! trajectory-profile routes in the s-t plane, attaches maneuver windows,
//! synthesizes one smooth trajectory per maneuver with damped least
//! squares, and selects the cheapest collision-free candidate.

pub mod config;
pub mod corridor;
pub mod dls;
pub mod error;
pub mod frenet;
pub mod maneuver;
pub mod optim;
pub mod route;
pub mod world;

use std::collections::HashMap;
use std::time::Instant;

use config::PlannerConfig;
use corridor::{Corridor, Expansion, SectionGraph};
use error::{PlannerError, Result};
use maneuver::Maneuver;
use optim::Trajectory;
use route::{Route, TrajectoryProfile};
use world::{PredictedTrajectory, WorldSnapshot};

/// Wall-clock spent in the three pipeline phases, seconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    /// Static environment: band scan, sections, corridors.
    pub t_static: f64,
    /// Dynamic environment: prediction adjustment, profiles, routes,
    /// windows.
    pub t_dynamic: f64,
    /// Trajectory synthesis and selection.
    pub t_optimization: f64,
}

/// Everything one planning cycle produces.
#[derive(Debug)]
pub struct PlanOutcome {
    pub graph: SectionGraph,
    pub expansion: Expansion,
    pub corridors: Vec<Corridor>,
    pub profiles: Vec<TrajectoryProfile>,
    pub routes: Vec<Route>,
    pub maneuvers: Vec<Maneuver>,
    /// Index of the selected maneuver, if any synthesized.
    pub selected: Option<usize>,
    /// Full-braking fallback, used when no maneuver survived.
    pub emergency: Option<Trajectory>,
    pub timings: PhaseTimings,
}

impl PlanOutcome {
    pub fn selected_trajectory(&self) -> Option<&Trajectory> {
        match self.selected {
            Some(i) => self.maneuvers[i].trajectory.as_ref(),
            None => self.emergency.as_ref(),
        }
    }
}

/// Stateful planner: holds the configuration and maneuver ages across
/// cycles for selection hysteresis.
pub struct Planner {
    pub cfg: PlannerConfig,
    ages: HashMap<(i64, usize, Vec<i64>), u32>,
    /// Selected lane transition carried across cycles: maneuver key and
    /// the road position where its lane-center switch is pinned. Without
    /// this anchor each replan would reschedule the switch relative to
    /// the fresh horizon and the transition would recede forever.
    committed: Option<((i64, usize, Vec<i64>), f64)>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig) -> Self {
        Self {
            cfg,
            ages: HashMap::new(),
            committed: None,
        }
    }

    pub fn plan(&mut self, snapshot: &WorldSnapshot) -> Result<PlanOutcome> {
        let cfg = &self.cfg;
        snapshot.validate(cfg.vehicle_width)?;
        let ego = &snapshot.ego;
        let n = snapshot.n_steps;
        let dt = snapshot.dt;

        // ---- static environment -------------------------------------
        let t0 = Instant::now();
        let horizon_reach = ego.v.max(1.0) * cfg.horizon() + 60.0;
        let s_range = ((ego.s - 10.0).max(0.0), ego.s + horizon_reach);
        let masks = corridor::scan_bands(
            &snapshot.cost_map,
            &snapshot.lanes,
            &snapshot.ref_path,
            cfg,
            s_range,
        );
        let sections =
            corridor::sections_from_masks(&masks, ego.s, cfg.max_sections_per_band);
        let graph =
            corridor::connect_section_graph(sections, ego.s, ego.d, cfg.vehicle_width)?;
        let expansion = corridor::generate_end_sections(&graph);
        let t_scan_dbg = t0.elapsed().as_secs_f64();
        let lane_widths: Vec<(i64, f64)> =
            snapshot.lanes.iter().map(|l| (l.id, l.width)).collect();
        let corridors = corridor::generate_corridors(
            &graph,
            &expansion,
            cfg,
            &lane_widths,
            ego.s,
            s_range,
            snapshot.cost_map.resolution,
        );
        let t_static = t0.elapsed().as_secs_f64();
        if t_static > 4e-3 {
            eprintln!("SLOW static {:.2} ms (scan+graph {:.2}, corridors {:.2}) s={:.0} v={:.1} sections={} corridors={}",
                t_static*1e3, t_scan_dbg*1e3, (t_static-t_scan_dbg)*1e3, ego.s, ego.v, graph.sections.len(), corridors.len());
        }

        // ---- dynamic environment ------------------------------------
        let t1 = Instant::now();
        let mut vehicles: Vec<PredictedTrajectory> = snapshot.vehicles.clone();
        world::classify_reference_vehicles(&mut vehicles, ego.s);
        world::adjust_non_reference_trajectories(
            &mut vehicles,
            cfg.d_safe,
            cfg.adjust_cap_ratio,
        );

        let base = route::build_base_profile(ego.s, ego.v, &snapshot.mobility, dt, n);
        let mut profiles: Vec<TrajectoryProfile> = Vec::new();
        for lane in &snapshot.lanes {
            let lane_trajs: Vec<&PredictedTrajectory> = vehicles
                .iter()
                .filter(|t| t.lane_id() == lane.id)
                .collect();
            profiles.extend(route::generate_profiles(
                &base,
                &lane_trajs,
                lane.id,
                ego,
                ego.lane_id,
                cfg.d_safe,
            ));
        }
        let ego_profile = profiles
            .iter()
            .position(|p| p.contains_ego)
            .ok_or(PlannerError::RootSectionNotFound)?;

        let mut routes = route::connect_profiles(&profiles, ego_profile);
        let gap = ego.length + 2.0 * cfg.d_safe;
        for r in routes.iter_mut() {
            r.windows = route::compute_maneuver_windows(
                r,
                &profiles,
                gap,
                dt,
                cfg.lane_change_duration,
            );
        }
        let t_dynamic = t1.elapsed().as_secs_f64();

        // ---- synthesis and selection --------------------------------
        let t2 = Instant::now();
        let mut maneuvers = maneuver::group_routes(&routes, &profiles);
        for m in maneuvers.iter_mut() {
            self.synthesize(m, &routes, &profiles, &base, &corridors, &graph, snapshot, &vehicles);
        }
        let mut new_ages = HashMap::new();
        for m in maneuvers.iter_mut() {
            m.age = self.ages.get(&m.key()).map(|&a| a + 1).unwrap_or(0);
            if m.trajectory.is_some() {
                new_ages.insert(m.key(), m.age);
            }
        }
        self.ages = new_ages;

        let selected = maneuver::select_maneuver(&maneuvers, &cfg.selection, ego.lane_id)
            .map(|best| {
                maneuvers
                    .iter()
                    .position(|m| std::ptr::eq(m, best))
                    .unwrap()
            });
        // pin (or keep) the switch position of the selected transition;
        // drop the pin when no transition is selected
        self.committed = selected.and_then(|i| {
            let m = &maneuvers[i];
            m.windows.first().map(|w| {
                let switch = w.begin_earliest + 0.5 * w.exec_time;
                let s_switch = ego.s + ego.v.max(1.0) * switch;
                let pinned = self
                    .committed
                    .as_ref()
                    .and_then(|(key, s)| (*key == m.key()).then_some(*s))
                    .map_or(s_switch, |p| p.min(s_switch));
                (m.key(), pinned)
            })
        });
        let emergency = if selected.is_none() {
            Some(maneuver::emergency_stop_trajectory(
                ego,
                &snapshot.mobility,
                dt,
                n,
            ))
        } else {
            None
        };
        let t_optimization = t2.elapsed().as_secs_f64();

        Ok(PlanOutcome {
            graph,
            expansion,
            corridors,
            profiles,
            routes,
            maneuvers,
            selected,
            emergency,
            timings: PhaseTimings {
                t_static,
                t_dynamic,
                t_optimization,
            },
        })
    }

    /// Attach a trajectory to one maneuver, or leave it empty when no
    /// corridor supports it, a window closes, or the result collides.
    #[allow(clippy::too_many_arguments)]
    fn synthesize(
        &self,
        m: &mut Maneuver,
        routes: &[Route],
        profiles: &[TrajectoryProfile],
        base: &route::BaseProfile,
        corridors: &[Corridor],
        graph: &SectionGraph,
        snapshot: &WorldSnapshot,
        vehicles: &[PredictedTrajectory],
    ) {
        let cfg = &self.cfg;
        let ego = &snapshot.ego;
        let n = snapshot.n_steps;
        let dt = snapshot.dt;
        let route = &routes[m.route_index];

        // remaining time to a switch pinned in a previous cycle; pull the
        // first window's begin forward so the transition actually starts
        // instead of being rescheduled into the future every replan
        let committed_switch = self.committed.as_ref().and_then(|(key, s_switch)| {
            (*key == m.key()).then(|| ((s_switch - ego.s) / ego.v.max(1.0)).max(0.0))
        });
        if let (Some(c), Some(w)) = (committed_switch, m.windows.first_mut()) {
            let tb = (c - 0.5 * w.exec_time).max(0.0);
            if tb < w.begin_earliest {
                w.begin_earliest = tb;
            }
        }

        // prefer a corridor whose lane order matches the maneuver exactly;
        // otherwise fall back to the longest one covering all its lanes
        let corridor = corridors
            .iter()
            .filter(|c| c.lane_pattern(&graph.sections) == m.lane_sequence)
            .max_by(|a, b| a.effective_length.partial_cmp(&b.effective_length).unwrap())
            .or_else(|| {
                corridors
                    .iter()
                    .filter(|c| m.lane_set.iter().all(|l| c.involved_lanes.contains(l)))
                    .max_by(|a, b| {
                        a.effective_length.partial_cmp(&b.effective_length).unwrap()
                    })
            });
        let corridor = match corridor {
            Some(c) => c,
            None => {
                log::debug!("maneuver {:?}: no corridor covers it", m.lane_sequence);
                return;
            }
        };

        // clip each transition by how far the corridor reaches in the
        // lane being left
        let mut windows = m.windows.clone();
        for (j, w) in windows.iter_mut().enumerate() {
            let source = &profiles[route.profile_chain[j]];
            let reach = corridor.lane_coverage_end(&graph.sections, source.lane_id);
            if reach.is_finite() {
                *w = maneuver::truncate_window(w, source, reach, dt);
            }
            if !w.feasible {
                log::debug!("maneuver {:?}: window {j} infeasible after corridor clip", m.lane_sequence);
                return;
            }
        }
        m.windows = windows;
        let switch0 = m.windows.first().map(|w| {
            let s = w.begin_earliest + 0.5 * w.exec_time;
            committed_switch.map_or(s, |c| c.min(s))
        });

        // longitudinal pass against the final profile in the chain
        let target_profile = &profiles[*route.profile_chain.last().unwrap()];
        let rho = snapshot
            .ref_path
            .max_abs_curvature_in(ego.s, ego.s + ego.v.max(1.0) * cfg.horizon() + 30.0);
        let constrained = target_profile.front[n] < base.upper[n] - 1e-6;
        let (front_end, front_speed) = if constrained {
            let v = (target_profile.front[n] - target_profile.front[n - 1]) / dt;
            (target_profile.front[n], v)
        } else {
            (f64::INFINITY, 0.0)
        };
        let mut limits = optim::longitudinal_limits(
            ego.v,
            snapshot.v_sig,
            rho,
            front_end,
            front_speed,
            0.0,
            &snapshot.mobility,
            cfg,
        );
        // settle at the reaction headway behind the gap front, but never
        // behind the gap rear: the full headway can exceed a gap the
        // window has already vetted, which would plan into the vehicle
        // bounding it from behind
        if !m.windows.is_empty() && front_end.is_finite() {
            let rear_bound = target_profile.rear[n];
            if rear_bound.is_finite() && rear_bound > limits.s_limit {
                limits.s_limit = (rear_bound + cfg.d_safe).min(front_end - cfg.d_safe);
            }
        }
        // static obstacles only show up in the corridor, not the s-t
        // profiles: stop before the corridor runs out
        let corridor_end =
            ego.s + corridor.effective_length - 0.5 * ego.length - cfg.d_safe;
        if corridor_end < limits.s_limit {
            let stopping = ego.v * ego.v / (2.0 * snapshot.mobility.decel(ego.v));
            if corridor_end - ego.s < stopping {
                log::debug!(
                    "maneuver {:?}: corridor end {corridor_end:.1} inside stopping distance {stopping:.1}",
                    m.lane_sequence
                );
                return;
            }
            limits.s_limit = corridor_end;
            limits.v_bound_end = 0.0;
        }
        let guess = optim::init_longitudinal(ego.s, ego.v, &limits, n, dt);
        // anchor the plan inside the gap at the transition switch, so the
        // longitudinal pass actually honors the window it was given
        // instead of settling in asymptotically
        let mid = m.windows.first().and_then(|w| {
            let t_switch = switch0.unwrap_or(w.begin_earliest + 0.5 * w.exec_time);
            let k = ((t_switch / dt).round() as usize).clamp(1, n - 1);
            if !target_profile.exists(k) {
                return None;
            }
            let head = cfg.alpha_extra * front_speed + cfg.l_extra_min;
            let upper = if target_profile.front[k].is_finite() {
                target_profile.front[k] - head
            } else {
                f64::INFINITY
            };
            let lower = target_profile.rear[k] + cfg.d_safe;
            let target = if lower > upper {
                0.5 * (target_profile.rear[k] + target_profile.front[k])
            } else {
                guess[k].clamp(lower, upper)
            };
            if target.is_finite() {
                Some((k, target))
            } else {
                None
            }
        });
        let (s, lon_report) =
            optim::solve_longitudinal(&guess, ego.v, &limits, mid, &cfg.weights, &cfg.solver, dt);

        // lateral pass: lane-center schedule over the transition windows
        let center_of = |lane: i64| {
            snapshot
                .lanes
                .iter()
                .find(|l| l.id == lane)
                .map(|l| l.d_center)
                .unwrap_or(0.0)
        };
        let sequence = &m.lane_sequence;
        // settle from the current offset to the first lane center over a
        // width-scaled fraction of the lane-change time, so regrouping
        // mid-transition (ego just crossed the boundary) does not command
        // an instant snap to the center
        let c0 = center_of(sequence[0]);
        let lane_w = snapshot
            .lane(sequence[0])
            .map(|l| l.width)
            .unwrap_or(3.5);
        let mut centers = vec![c0; n + 1];
        let off = ego.d - c0;
        if off.abs() > 0.05 {
            let t_settle = cfg.lane_change_duration
                * (off.abs() / lane_w).sqrt().clamp(0.3, 1.0);
            for (k, c) in centers.iter_mut().enumerate() {
                let tau = (k as f64 * dt / t_settle).min(1.0);
                let ramp = 0.5 * (1.0 - (std::f64::consts::PI * tau).cos());
                *c = ego.d + (c0 - ego.d) * ramp;
            }
        }
        let mut last_switch = 0.0;
        for (j, w) in m.windows.iter().enumerate() {
            let switch = if j == 0 {
                switch0.unwrap_or(0.0).max(last_switch)
            } else {
                w.begin_earliest.max(last_switch) + 0.5 * w.exec_time
            };
            // cosine ramp between lane centers across the execution time,
            // centered on the switch: a step target here would demand an
            // abrupt lateral move no smoothing weight can fully soften
            let c_from = center_of(sequence[j]);
            let c_to = center_of(sequence[j + 1]);
            let tb = switch - 0.5 * w.exec_time;
            for k in 0..=n {
                let tau = ((k as f64 * dt - tb) / w.exec_time).clamp(0.0, 1.0);
                if tau > 0.0 {
                    let ramp = 0.5 * (1.0 - (std::f64::consts::PI * tau).cos());
                    centers[k] = c_from + (c_to - c_from) * ramp;
                }
            }
            last_switch = switch;
        }
        let mut bounds = Vec::with_capacity(n + 1);
        let mut last = None;
        for &sk in s.iter() {
            let b = corridor.bounds_at(sk).or(last).unwrap_or((
                centers[0] - 0.5 * 3.5 + cfg.d_safe,
                centers[0] + 0.5 * 3.5 - cfg.d_safe,
            ));
            last = Some(b);
            bounds.push(b);
        }
        let mut guess_d = Vec::with_capacity(n + 1);
        // index 0 is the current state and must never be clamped: the
        // solve anchors it hard, so clamping would teleport the vehicle
        guess_d.push(ego.d);
        for k in 1..=n {
            let (lo, hi) = bounds[k];
            // the bounds are free-space edges: keep the whole footprint
            // inside, not just the center
            let half = 0.5 * cfg.vehicle_width;
            let (clo, chi) = (lo + half, hi - half);
            guess_d.push(if clo > chi {
                0.5 * (lo + hi)
            } else {
                centers[k].clamp(clo, chi)
            });
        }
        // rate-limit the commanded offsets from the current one: bound
        // clamping can teleport targets (e.g. ego still outside the
        // corridor of a freshly regrouped maneuver), and a rate bound
        // turns that into a recoverable approach instead of a snap
        let v_lat_max =
            0.5 * std::f64::consts::PI * lane_w / cfg.lane_change_duration;
        for k in 1..=n {
            let prev = guess_d[k - 1];
            guess_d[k] = guess_d[k]
                .clamp(prev - v_lat_max * dt, prev + v_lat_max * dt);
        }
        let (t_begin, t_exec) = match m.windows.first() {
            Some(w) => (
                switch0.unwrap_or(0.0) - 0.5 * w.exec_time,
                w.exec_time,
            ),
            None => (0.0, cfg.lane_change_duration),
        };
        let target_center = center_of(*sequence.last().unwrap());
        let problem = optim::build_lateral_problem(
            guess_d,
            ego.d,
            snapshot.ego_d_rate,
            target_center,
            t_begin,
            t_exec,
            &cfg.weights,
            dt,
        );
        let (d, lat_report) = optim::solve_lateral(&problem, &cfg.solver);

        let traj = Trajectory { s, d, dt };
        if maneuver::trajectory_collides(
            &traj,
            vehicles,
            ego,
            &snapshot.cost_map,
            &snapshot.ref_path,
            cfg.frenet_gate,
        ) {
            log::debug!("maneuver {:?}: synthesized trajectory collides", m.lane_sequence);
            return;
        }
        let mut violations = 0usize;
        for k in 0..=n {
            let lon_ok = route
                .profile_chain
                .iter()
                .any(|&p| profiles[p].contains(k, traj.s[k]));
            let half = 0.5 * cfg.vehicle_width;
            let lat_ok = match corridor.bounds_at(traj.s[k]) {
                Some((lo, hi)) => {
                    traj.d[k] >= lo + half - cfg.d_safe
                        && traj.d[k] <= hi - half + cfg.d_safe
                }
                None => true,
            };
            if !lon_ok || !lat_ok {
                violations += 1;
            }
        }
        m.bound_violations = violations;
        m.cost = maneuver::score_trajectory(&traj, vehicles, limits.v_target.max(1.0));
        m.trajectory = Some(traj);
        m.lon_report = Some(lon_report);
        m.lat_report = Some(lat_report);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frenet::{ReferencePath, Vec2};
    use crate::world::{CostMap, Lane, MobilityModel, VehicleState};

    fn straight_path(length: f64, d_offset: f64) -> ReferencePath {
        ReferencePath::build(&[(0.0, d_offset), (length, d_offset)], 0.5).unwrap()
    }

    fn two_lane_snapshot(
        vehicles: Vec<PredictedTrajectory>,
        ego: VehicleState,
    ) -> WorldSnapshot {
        let lanes = vec![
            Lane {
                id: 0,
                left_line: straight_path(200.0, 1.75),
                right_line: straight_path(200.0, -1.75),
                width: 3.5,
                d_center: 0.0,
            },
            Lane {
                id: 1,
                left_line: straight_path(200.0, 5.25),
                right_line: straight_path(200.0, 1.75),
                width: 3.5,
                d_center: 3.5,
            },
        ];
        WorldSnapshot {
            lanes,
            cost_map: CostMap::new(100, 500, 0.2, Vec2::new(0.0, -4.0)),
            ego,
            ego_d_rate: 0.0,
            vehicles,
            mobility: MobilityModel {
                decel_of_v: vec![(0.0, 4.0), (30.0, 4.0)],
                accel_of_v: vec![(0.0, 2.0), (30.0, 2.0)],
                a_cen: 2.0,
                a_dec: 1.5,
                v_max: 16.7,
            },
            v_sig: 16.7,
            dt: 0.25,
            n_steps: 40,
            ref_path: straight_path(200.0, 0.0),
        }
    }

    fn ego_state(s: f64, v: f64) -> VehicleState {
        VehicleState {
            s,
            d: 0.0,
            v,
            lane_id: 0,
            width: 1.8,
            length: 4.5,
        }
    }

    #[test]
    fn empty_road_keeps_lane_at_speed() {
        let snapshot = two_lane_snapshot(vec![], ego_state(10.0, 10.0));
        let mut planner = Planner::new(PlannerConfig::default());
        let outcome = planner.plan(&snapshot).unwrap();
        let selected = outcome.selected.expect("a maneuver is selected");
        let m = &outcome.maneuvers[selected];
        assert_eq!(m.target_lane(), 0);
        let traj = m.trajectory.as_ref().unwrap();
        let v = traj.velocity();
        assert!(v[39] > 12.0, "accelerates toward the limit, v_end = {}", v[39]);
        assert!(traj.d.iter().all(|&d| d.abs() < 0.3));
    }

    #[test]
    fn slow_leader_produces_keep_and_overtake_options() {
        let ego = ego_state(10.0, 12.0);
        let vehicles =
            world::predict_trajectories(&[(1, VehicleState {
                s: 40.0,
                d: 0.0,
                v: 6.0,
                lane_id: 0,
                width: 1.8,
                length: 4.5,
            }, 0.0)], ego.s, 0.25, 40);
        let snapshot = two_lane_snapshot(vehicles, ego);
        let mut planner = Planner::new(PlannerConfig::default());
        let outcome = planner.plan(&snapshot).unwrap();
        assert!(outcome.maneuvers.len() >= 2, "keep-lane and lane-change");
        let lanes: Vec<i64> = outcome
            .maneuvers
            .iter()
            .filter(|m| m.trajectory.is_some())
            .map(|m| m.target_lane())
            .collect();
        assert!(lanes.contains(&0));
        assert!(lanes.contains(&1));
        // follow-the-leader candidate must not overrun it
        let keep = outcome
            .maneuvers
            .iter()
            .find(|m| m.lane_set == vec![0] && m.trajectory.is_some())
            .unwrap();
        let traj = keep.trajectory.as_ref().unwrap();
        let leader_end = 40.0 + 6.0 * 10.0;
        assert!(traj.s[40] < leader_end, "keep-lane stays behind the leader");
    }

    #[test]
    fn blocked_snapshot_falls_back_to_emergency_stop() {
        let ego = ego_state(10.0, 10.0);
        let mut snapshot = two_lane_snapshot(vec![], ego);
        // wall across both lanes just ahead
        snapshot.cost_map = CostMap::rasterize_obstacles(
            100,
            500,
            0.2,
            Vec2::new(0.0, -4.0),
            &[vec![(16.0, -4.0), (20.0, -4.0), (20.0, 6.0), (16.0, 6.0)]],
            0.3,
        );
        let mut planner = Planner::new(PlannerConfig::default());
        let outcome = planner.plan(&snapshot).unwrap();
        assert!(outcome.selected.is_none());
        let stop = outcome.emergency.as_ref().expect("fallback trajectory");
        let v = stop.velocity();
        assert!(v[39].abs() < 1e-9);
    }

    #[test]
    fn ages_persist_across_cycles() {
        let snapshot = two_lane_snapshot(vec![], ego_state(10.0, 10.0));
        let mut planner = Planner::new(PlannerConfig::default());
        let first = planner.plan(&snapshot).unwrap();
        let key = first.maneuvers[first.selected.unwrap()].key();
        let second = planner.plan(&snapshot).unwrap();
        let again = second.maneuvers.iter().find(|m| m.key() == key).unwrap();
        assert_eq!(again.age, 1);
    }

    #[test]
    fn timings_are_populated() {
        let snapshot = two_lane_snapshot(vec![], ego_state(10.0, 10.0));
        let mut planner = Planner::new(PlannerConfig::default());
        let outcome = planner.plan(&snapshot).unwrap();
        assert!(outcome.timings.t_static > 0.0);
        assert!(outcome.timings.t_dynamic > 0.0);
        assert!(outcome.timings.t_optimization > 0.0);
    }
}
