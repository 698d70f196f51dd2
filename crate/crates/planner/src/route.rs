//! Topology in the s-t plane: the ego mobility base profile, its split
//! into collision-free trajectory profiles, profile connection into
//! routes, and maneuver window computation.

use crate::world::{MobilityModel, PredictedTrajectory, VehicleState};

const EXIST_EPS: f64 = 1e-9;

/// Reachable s-band of the ego over the horizon: full braking below,
/// full acceleration above.
#[derive(Debug, Clone)]
pub struct BaseProfile {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Integrate the mobility envelope from the current ego state.
pub fn build_base_profile(
    ego_s: f64,
    ego_v: f64,
    mobility: &MobilityModel,
    dt: f64,
    n_steps: usize,
) -> BaseProfile {
    let mut lower = Vec::with_capacity(n_steps + 1);
    let mut upper = Vec::with_capacity(n_steps + 1);
    let (mut s_lo, mut v_lo) = (ego_s, ego_v);
    let (mut s_hi, mut v_hi) = (ego_s, ego_v);
    lower.push(s_lo);
    upper.push(s_hi);
    for _ in 0..n_steps {
        let v_next = (v_lo - mobility.decel(v_lo) * dt).max(0.0);
        s_lo += 0.5 * (v_lo + v_next) * dt;
        v_lo = v_next;
        lower.push(s_lo);

        let v_next = (v_hi + mobility.accel(v_hi) * dt).min(mobility.v_max);
        s_hi += 0.5 * (v_hi + v_next) * dt;
        v_hi = v_next;
        upper.push(s_hi);
    }
    BaseProfile { lower, upper }
}

/// A collision-free zone of the s-t plane in one lane.
#[derive(Debug, Clone)]
pub struct TrajectoryProfile {
    pub lane_id: i64,
    pub zone_index: usize,
    /// Rear bound per step (s of the slowest admissible motion).
    pub rear: Vec<f64>,
    /// Front bound per step.
    pub front: Vec<f64>,
    pub contains_ego: bool,
    /// Ego sits in a zone that would otherwise be dropped as narrow.
    pub constrained: bool,
}

impl TrajectoryProfile {
    pub fn exists(&self, k: usize) -> bool {
        self.rear[k] <= self.front[k] + EXIST_EPS
    }

    pub fn height(&self, k: usize) -> f64 {
        self.front[k] - self.rear[k]
    }

    pub fn max_height(&self) -> f64 {
        (0..self.rear.len())
            .map(|k| self.height(k))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Last s reachable inside the zone.
    pub fn arrival(&self) -> f64 {
        (0..self.rear.len())
            .rev()
            .find(|&k| self.exists(k))
            .map(|k| self.front[k])
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn contains(&self, k: usize, s: f64) -> bool {
        self.exists(k) && s >= self.rear[k] - EXIST_EPS && s <= self.front[k] + EXIST_EPS
    }
}

/// Split the base profile of one lane by that lane's (adjusted) predicted
/// trajectories.
///
/// Trajectories are processed front to back; each split emits the zone
/// ahead of the vehicle and keeps the zone behind it as the next parent,
/// which is emitted last. Narrow zones not holding the ego are dropped.
pub fn generate_profiles(
    base: &BaseProfile,
    lane_trajectories: &[&PredictedTrajectory],
    lane_id: i64,
    ego: &VehicleState,
    ego_lane: i64,
    d_safe: f64,
) -> Vec<TrajectoryProfile> {
    let n = base.lower.len();
    let mut order: Vec<usize> = (0..lane_trajectories.len()).collect();
    order.sort_by(|&a, &b| {
        lane_trajectories[b].s_at(0)
            .partial_cmp(&lane_trajectories[a].s_at(0))
            .unwrap()
    });

    let parent_rear = base.lower.clone();
    let mut parent_front = base.upper.clone();
    let mut parent_has_ego = lane_id == ego_lane;
    let mut zones: Vec<(Vec<f64>, Vec<f64>, bool)> = Vec::new();

    for &ti in &order {
        let traj = lane_trajectories[ti];
        let margin = 0.5 * (traj.states[0].length + ego.length) + d_safe;
        let relevant = (0..n).any(|k| {
            let s = traj.s_at(k);
            parent_rear[k] <= parent_front[k] + EXIST_EPS
                && s + margin > parent_rear[k]
                && s - margin < parent_front[k]
        });
        if !relevant {
            continue;
        }
        // zone ahead of the vehicle
        let above_rear: Vec<f64> = (0..n)
            .map(|k| parent_rear[k].max(traj.s_at(k) + margin))
            .collect();
        let above_front = parent_front.clone();
        // zone behind the vehicle becomes the next parent
        let below_front: Vec<f64> = (0..n)
            .map(|k| parent_front[k].min(traj.s_at(k) - margin))
            .collect();

        let vehicle_behind_ego = traj.s_at(0) < ego.s;
        let above_has_ego = parent_has_ego && vehicle_behind_ego;
        if (0..n).any(|k| above_rear[k] <= above_front[k] + EXIST_EPS) {
            zones.push((above_rear, above_front, above_has_ego));
        }
        parent_front = below_front;
        parent_has_ego = parent_has_ego && !vehicle_behind_ego;
        if !(0..n).any(|k| parent_rear[k] <= parent_front[k] + EXIST_EPS) {
            break;
        }
    }
    if (0..n).any(|k| parent_rear[k] <= parent_front[k] + EXIST_EPS) {
        zones.push((parent_rear, parent_front, parent_has_ego));
    }

    let narrow_limit = ego.length + 2.0 * d_safe;
    let mut out = Vec::new();
    for (rear, front, has_ego) in zones {
        let profile = TrajectoryProfile {
            lane_id,
            zone_index: out.len(),
            rear,
            front,
            contains_ego: has_ego,
            constrained: false,
        };
        let narrow = profile.max_height() < narrow_limit;
        if narrow && !has_ego {
            continue;
        }
        let mut profile = profile;
        profile.constrained = narrow;
        profile.zone_index = out.len();
        out.push(profile);
    }
    out
}

/// Begin/finish time bounds of one lane transition, seconds.
#[derive(Debug, Clone, Copy)]
pub struct ManeuverWindow {
    pub begin_earliest: f64,
    pub begin_latest: f64,
    pub finish_earliest: f64,
    pub finish_latest: f64,
    pub exec_time: f64,
    pub feasible: bool,
}

impl ManeuverWindow {
    /// A begin time Tb with Tb + Te inside the finish interval exists.
    pub fn check_feasible(&self) -> bool {
        let tb_latest = self.begin_latest.min(self.finish_latest - self.exec_time);
        let tb_earliest = self.begin_earliest.max(self.finish_earliest - self.exec_time);
        tb_earliest <= tb_latest + 1e-9
    }
}

/// A chain of up to three connected trajectory profiles.
#[derive(Debug, Clone)]
pub struct Route {
    /// Indices into the profile list, root first.
    pub profile_chain: Vec<usize>,
    pub windows: Vec<ManeuverWindow>,
    /// Longitudinal samples, filled by the optimizer.
    pub s_samples: Vec<f64>,
}

impl Route {
    pub fn lane_set(&self, profiles: &[TrajectoryProfile]) -> Vec<i64> {
        let mut lanes: Vec<i64> = self
            .profile_chain
            .iter()
            .map(|&i| profiles[i].lane_id)
            .collect();
        lanes.sort_unstable();
        lanes.dedup();
        lanes
    }

    pub fn lane_sequence(&self, profiles: &[TrajectoryProfile]) -> Vec<i64> {
        self.profile_chain
            .iter()
            .map(|&i| profiles[i].lane_id)
            .collect()
    }
}

fn profiles_overlap(a: &TrajectoryProfile, b: &TrajectoryProfile) -> bool {
    (0..a.rear.len()).any(|k| {
        a.exists(k)
            && b.exists(k)
            && a.front[k].min(b.front[k]) >= a.rear[k].max(b.rear[k]) - EXIST_EPS
    })
}

/// Breadth-wise expansion of profile chains from the ego profile, depth 3.
///
/// A profile appends to a route when it sits in a lane adjacent to the
/// route's end profile, overlaps it in the s-t plane and is not already
/// part of the chain. The root-only route is always kept.
pub fn connect_profiles(
    profiles: &[TrajectoryProfile],
    ego_profile: usize,
) -> Vec<Route> {
    const MAX_DEPTH: usize = 3;
    let mut routes: Vec<Vec<usize>> = vec![vec![ego_profile]];
    let mut frontier: Vec<Vec<usize>> = vec![vec![ego_profile]];
    for _ in 1..MAX_DEPTH {
        let mut next = Vec::new();
        for chain in &frontier {
            let end = &profiles[*chain.last().unwrap()];
            for (i, cand) in profiles.iter().enumerate() {
                if chain.contains(&i) {
                    continue;
                }
                if (cand.lane_id - end.lane_id).abs() != 1 {
                    continue;
                }
                if !profiles_overlap(end, cand) {
                    continue;
                }
                let mut grown = chain.clone();
                grown.push(i);
                next.push(grown);
            }
        }
        routes.extend(next.iter().cloned());
        frontier = next;
    }
    routes
        .into_iter()
        .map(|profile_chain| Route {
            profile_chain,
            windows: Vec::new(),
            s_samples: Vec::new(),
        })
        .collect()
}

/// Time interval per transition where source and target profiles overlap
/// with at least `gap` of longitudinal room, crunodes interpolated
/// between samples.
pub fn compute_maneuver_windows(
    route: &Route,
    profiles: &[TrajectoryProfile],
    gap: f64,
    dt: f64,
    exec_time: f64,
) -> Vec<ManeuverWindow> {
    let mut windows = Vec::new();
    for pair in route.profile_chain.windows(2) {
        let a = &profiles[pair[0]];
        let b = &profiles[pair[1]];
        let n = a.rear.len();
        let h = |k: usize| -> f64 {
            if !a.exists(k) || !b.exists(k) {
                return f64::NEG_INFINITY;
            }
            a.front[k].min(b.front[k]) - a.rear[k].max(b.rear[k])
        };
        // collect feasible intervals of h(t) >= gap with sub-step bounds
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        let mut open: Option<f64> = None;
        for k in 0..n {
            let ok = h(k) >= gap;
            if ok && open.is_none() {
                let t = if k == 0 {
                    0.0
                } else {
                    cross_time(k - 1, h(k - 1), h(k), gap, dt)
                };
                open = Some(t);
            }
            if !ok {
                if let Some(t0) = open.take() {
                    let t1 = cross_time(k - 1, h(k - 1), h(k), gap, dt);
                    intervals.push((t0, t1));
                }
            }
        }
        if let Some(t0) = open {
            intervals.push((t0, (n - 1) as f64 * dt));
        }
        let best = intervals
            .into_iter()
            .max_by(|a, b| (a.1 - a.0).partial_cmp(&(b.1 - b.0)).unwrap());
        let window = match best {
            Some((t0, t1)) => {
                let mut w = ManeuverWindow {
                    begin_earliest: t0,
                    begin_latest: t1,
                    finish_earliest: t0,
                    finish_latest: t1,
                    exec_time,
                    feasible: true,
                };
                w.feasible = w.check_feasible();
                w
            }
            None => ManeuverWindow {
                begin_earliest: 0.0,
                begin_latest: -1.0,
                finish_earliest: 0.0,
                finish_latest: -1.0,
                exec_time,
                feasible: false,
            },
        };
        windows.push(window);
    }
    windows
}

fn cross_time(k_prev: usize, h_prev: f64, h_next: f64, gap: f64, dt: f64) -> f64 {
    let t_prev = k_prev as f64 * dt;
    if !h_prev.is_finite() || !h_next.is_finite() || (h_next - h_prev).abs() < 1e-12 {
        return t_prev + 0.5 * dt;
    }
    let frac = ((gap - h_prev) / (h_next - h_prev)).clamp(0.0, 1.0);
    t_prev + frac * dt
}
