//! Maneuver assembly and selection: routes are grouped into maneuvers,
//! their windows truncated by corridor reach, one trajectory is attached
//! per maneuver, and the cheapest collision-free candidate is selected.

use crate::config::SelectionConfig;
use crate::dls::SolveReport;
use crate::optim::Trajectory;
use crate::route::{ManeuverWindow, Route, TrajectoryProfile};
use crate::world::{CostMap, MobilityModel, PredictedTrajectory, VehicleState};

/// One candidate maneuver: a group of routes sharing a lane set, with a
/// synthesized trajectory and score.
#[derive(Debug, Clone)]
pub struct Maneuver {
    /// Representative route (index into the route list).
    pub route_index: usize,
    /// All routes collapsed into this maneuver.
    pub member_routes: Vec<usize>,
    pub lane_sequence: Vec<i64>,
    pub lane_set: Vec<i64>,
    /// Profile the maneuver ends in (index into the profile list).
    pub terminal_profile: usize,
    /// Zone index of the terminal profile, stable across cycles.
    pub terminal_zone: usize,
    pub windows: Vec<ManeuverWindow>,
    pub trajectory: Option<Trajectory>,
    pub lon_report: Option<SolveReport>,
    pub lat_report: Option<SolveReport>,
    /// Steps of the solved trajectory outside the profile chain or the
    /// corridor bounds; nonzero values are reported, not hidden.
    pub bound_violations: usize,
    pub cost: ManeuverCost,
    /// Planning cycles this maneuver has been continuously available.
    pub age: u32,
}

impl Maneuver {
    pub fn lane_changes(&self) -> usize {
        self.lane_sequence
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count()
    }

    pub fn target_lane(&self) -> i64 {
        *self.lane_sequence.last().unwrap()
    }

    /// Stable identity across planning cycles.
    pub fn key(&self) -> (i64, usize, Vec<i64>) {
        (self.target_lane(), self.terminal_zone, self.lane_sequence.clone())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ManeuverCost {
    pub comfort: f64,
    pub safety: f64,
    pub efficiency: f64,
}

impl ManeuverCost {
    pub fn total(&self, cfg: &SelectionConfig, target_lane: i64, age: u32) -> f64 {
        let mut total = cfg.comfort * self.comfort
            + cfg.safety * self.safety
            + cfg.efficiency * self.efficiency;
        if cfg.drive_lane == Some(target_lane) {
            total -= cfg.drive_lane_bonus;
        }
        total -= cfg.age_bonus * age.min(cfg.age_cap) as f64;
        total
    }
}

/// Collapse routes into maneuvers: routes ending in the same profile via
/// the same lane sequence describe the same maneuver. The representative
/// is the shortest chain, ties broken toward the widest feasible windows;
/// routes with an infeasible window are skipped.
pub fn group_routes(routes: &[Route], profiles: &[TrajectoryProfile]) -> Vec<Maneuver> {
    let mut maneuvers: Vec<Maneuver> = Vec::new();
    for (ri, route) in routes.iter().enumerate() {
        if route.windows.iter().any(|w| !w.feasible) {
            continue;
        }
        let terminal = *route.profile_chain.last().unwrap();
        let sequence = route.lane_sequence(profiles);
        let slack: f64 = route
            .windows
            .iter()
            .map(|w| w.begin_latest - w.begin_earliest)
            .sum::<f64>()
            + if route.windows.is_empty() { f64::INFINITY } else { 0.0 };
        match maneuvers
            .iter_mut()
            .find(|m| m.terminal_profile == terminal && m.lane_sequence == sequence)
        {
            Some(m) => {
                m.member_routes.push(ri);
                let cur_slack: f64 = routes[m.route_index]
                    .windows
                    .iter()
                    .map(|w| w.begin_latest - w.begin_earliest)
                    .sum();
                let shorter_chain =
                    route.profile_chain.len() < routes[m.route_index].profile_chain.len();
                if shorter_chain || (route.profile_chain.len()
                    == routes[m.route_index].profile_chain.len()
                    && slack > cur_slack)
                {
                    m.route_index = ri;
                    m.windows = route.windows.clone();
                }
            }
            None => maneuvers.push(Maneuver {
                route_index: ri,
                member_routes: vec![ri],
                lane_set: route.lane_set(profiles),
                lane_sequence: sequence,
                terminal_profile: terminal,
                terminal_zone: profiles[terminal].zone_index,
                windows: route.windows.clone(),
                trajectory: None,
                lon_report: None,
                lat_report: None,
                bound_violations: 0,
                cost: ManeuverCost::default(),
                age: 0,
            }),
        }
    }
    maneuvers
}

/// Clip a maneuver window by the corridor reach in the source lane.
///
/// `s_reach` is the last arc length the corridor covers in the lane being
/// left; the transition must begin before the source profile's front
/// bound passes it.
pub fn truncate_window(
    window: &ManeuverWindow,
    source: &TrajectoryProfile,
    s_reach: f64,
    dt: f64,
) -> ManeuverWindow {
    let n = source.front.len();
    let mut t_limit = (n - 1) as f64 * dt;
    for k in 1..n {
        if source.front[k] >= s_reach {
            let (f0, f1) = (source.front[k - 1], source.front[k]);
            let frac = if (f1 - f0).abs() < 1e-12 {
                0.0
            } else {
                ((s_reach - f0) / (f1 - f0)).clamp(0.0, 1.0)
            };
            t_limit = (k - 1) as f64 * dt + frac * dt;
            break;
        }
    }
    let mut w = ManeuverWindow {
        begin_latest: window.begin_latest.min(t_limit),
        finish_latest: window.finish_latest.min(t_limit + window.exec_time),
        ..*window
    };
    w.feasible = window.feasible
        && w.begin_earliest <= w.begin_latest + 1e-9
        && w.check_feasible();
    w
}

/// True when the trajectory hits a predicted vehicle or a lethal cell.
///
/// Vehicle overlap is tested with box half-extents in curvilinear
/// coordinates; predictions flagged as capped are only trusted up to
/// their valid step.
pub fn trajectory_collides(
    traj: &Trajectory,
    vehicles: &[PredictedTrajectory],
    ego: &VehicleState,
    cost_map: &CostMap,
    ref_path: &crate::frenet::ReferencePath,
    frenet_gate: f64,
) -> bool {
    let n = traj.len();
    for k in 0..n {
        let (s, d) = (traj.s[k], traj.d[k]);
        for veh in vehicles {
            if veh.adjust_capped && k >= veh.valid_steps {
                continue;
            }
            let vs = &veh.states[k.min(veh.states.len() - 1)];
            let lat = 0.5 * (ego.width + vs.width);
            let lon = 0.5 * (ego.length + vs.length);
            if (d - vs.d).abs() < lat && (s - vs.s).abs() < lon {
                return true;
            }
        }
        // test the footprint corners, not just the center: the cost map
        // is inflated by the clearance only
        let (hl, hw) = (0.5 * ego.length, 0.5 * ego.width);
        for (cs, cd) in [
            (s, d),
            (s - hl, d - hw),
            (s - hl, d + hw),
            (s + hl, d - hw),
            (s + hl, d + hw),
        ] {
            if let Ok(p) = ref_path.to_cartesian(cs, cd) {
                if cost_map.is_lethal(p) {
                    return true;
                }
            } else if cs <= ref_path.s_max() && cs >= 0.0 && cd.abs() < frenet_gate {
                // unconvertible in-range sample: treat as blocked
                return true;
            }
        }
    }
    false
}

/// Comfort, safety and efficiency terms for a synthesized trajectory.
pub fn score_trajectory(
    traj: &Trajectory,
    vehicles: &[PredictedTrajectory],
    v_target: f64,
) -> ManeuverCost {
    let n = traj.len();
    let horizon = (n - 1) as f64 * traj.dt;

    let comfort = Trajectory::max_abs(&traj.acceleration()) / 4.0
        + Trajectory::max_abs(&traj.jerk()) / 10.0
        + Trajectory::max_abs(&traj.lateral_acceleration()) / 4.0
        + Trajectory::max_abs(&traj.lateral_jerk()) / 10.0;

    let mut min_gap = f64::INFINITY;
    for k in 0..n {
        for veh in vehicles {
            let vs = &veh.states[k.min(veh.states.len() - 1)];
            if (traj.d[k] - vs.d).abs() < 0.5 * (vs.width + 1.8) + 1.0 {
                min_gap = min_gap.min((traj.s[k] - vs.s).abs());
            }
        }
    }
    let safety = if min_gap.is_finite() {
        1.0 / (1.0 + min_gap)
    } else {
        0.0
    };

    // inefficient if the horizon made little progress, or if it ends
    // slow (a stop keeps costing long after the horizon)
    let progress = traj.s[n - 1] - traj.s[0];
    let ideal = (v_target * horizon).max(1e-9);
    let progress_deficit = ((ideal - progress) / ideal).max(0.0);
    let v_end = (traj.s[n - 1] - traj.s[n - 2]) / traj.dt;
    let end_deficit = ((v_target - v_end) / v_target).max(0.0);
    let efficiency = progress_deficit.max(end_deficit);

    ManeuverCost {
        comfort,
        safety,
        efficiency,
    }
}

/// Pick the cheapest maneuver. Ties break toward fewer lane changes,
/// then toward keeping the current lane.
pub fn select_maneuver<'a>(
    maneuvers: &'a [Maneuver],
    cfg: &SelectionConfig,
    current_lane: i64,
) -> Option<&'a Maneuver> {
    maneuvers
        .iter()
        .filter(|m| m.trajectory.is_some())
        .min_by(|a, b| {
            let ca = a.cost.total(cfg, a.target_lane(), a.age);
            let cb = b.cost.total(cfg, b.target_lane(), b.age);
            ca.partial_cmp(&cb)
                .unwrap()
                .then(a.lane_changes().cmp(&b.lane_changes()))
                .then_with(|| {
                    let keep_a = a.target_lane() == current_lane;
                    let keep_b = b.target_lane() == current_lane;
                    keep_b.cmp(&keep_a)
                })
        })
}

/// Full-braking fallback along the current offset.
pub fn emergency_stop_trajectory(
    ego: &VehicleState,
    mobility: &MobilityModel,
    dt: f64,
    n_steps: usize,
) -> Trajectory {
    let mut s = Vec::with_capacity(n_steps + 1);
    let (mut cur, mut v) = (ego.s, ego.v);
    s.push(cur);
    for _ in 0..n_steps {
        let v_next = (v - mobility.decel(v) * dt).max(0.0);
        cur += 0.5 * (v + v_next) * dt;
        v = v_next;
        s.push(cur);
    }
    Trajectory {
        s,
        d: vec![ego.d; n_steps + 1],
        dt,
    }
}
