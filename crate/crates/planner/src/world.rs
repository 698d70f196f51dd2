//! Planning snapshot: lanes, cost-map, predicted vehicles and the ego
//! mobility envelope.

use crate::error::{PlannerError, Result};
use crate::frenet::{ReferencePath, Vec2};
use serde::{Deserialize, Serialize};

pub const COST_FREE: u8 = 0;
pub const COST_LETHAL: u8 = 255;

/// Occupancy grid in Cartesian coordinates. 0 is free, 255 lethal,
/// anything in between is inflation around a lethal cell.
#[derive(Debug, Clone)]
pub struct CostMap {
    pub rows: usize,
    pub cols: usize,
    pub resolution: f64,
    pub origin: Vec2,
    cells: Vec<u8>,
}

impl CostMap {
    pub fn new(rows: usize, cols: usize, resolution: f64, origin: Vec2) -> Self {
        Self {
            rows,
            cols,
            resolution,
            origin,
            cells: vec![COST_FREE; rows * cols],
        }
    }

    /// Rasterize obstacle polygons and inflate them by `d_safe`.
    ///
    /// A cell is lethal when its center lies inside any polygon; polygons
    /// outside the map extent are clipped silently.
    pub fn rasterize_obstacles(
        rows: usize,
        cols: usize,
        resolution: f64,
        origin: Vec2,
        obstacles: &[Vec<(f64, f64)>],
        d_safe: f64,
    ) -> Self {
        let mut map = Self::new(rows, cols, resolution, origin);
        for poly in obstacles {
            if poly.len() < 3 {
                continue;
            }
            let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
            let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &(x, y) in poly {
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
            let c0 = (((min_x - origin.x) / resolution).floor().max(0.0)) as usize;
            let r0 = (((min_y - origin.y) / resolution).floor().max(0.0)) as usize;
            let c1 = ((((max_x - origin.x) / resolution).ceil()) as usize).min(cols);
            let r1 = ((((max_y - origin.y) / resolution).ceil()) as usize).min(rows);
            for r in r0..r1 {
                for c in c0..c1 {
                    let center = Vec2::new(
                        origin.x + (c as f64 + 0.5) * resolution,
                        origin.y + (r as f64 + 0.5) * resolution,
                    );
                    if point_in_polygon(center, poly) {
                        map.cells[r * cols + c] = COST_LETHAL;
                    }
                }
            }
        }
        map.inflate(d_safe);
        map
    }

    fn inflate(&mut self, d_safe: f64) {
        let radius = (d_safe / self.resolution).ceil() as i64;
        if radius == 0 {
            return;
        }
        let mut offsets = Vec::new();
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let dist = ((dr * dr + dc * dc) as f64).sqrt() * self.resolution;
                if dist <= d_safe + 1e-9 {
                    let frac = 1.0 - dist / (d_safe + self.resolution);
                    let cost = 1 + (252.0 * frac) as u8;
                    offsets.push((dr, dc, cost));
                }
            }
        }
        let lethal: Vec<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == COST_LETHAL)
            .map(|(i, _)| i)
            .collect();
        for idx in lethal {
            let r = (idx / self.cols) as i64;
            let c = (idx % self.cols) as i64;
            for &(dr, dc, cost) in &offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= self.rows as i64 || nc >= self.cols as i64 {
                    continue;
                }
                let cell = &mut self.cells[nr as usize * self.cols + nc as usize];
                if *cell != COST_LETHAL && *cell < cost {
                    *cell = cost;
                }
            }
        }
    }

    pub fn cost_at_cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.cols + col]
    }

    /// Cost at a Cartesian point; positions outside the map read as free.
    pub fn cost_at(&self, p: Vec2) -> u8 {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return COST_FREE;
        }
        self.cells[r as usize * self.cols + c as usize]
    }

    pub fn is_occupied(&self, p: Vec2) -> bool {
        self.cost_at(p) > COST_FREE
    }

    pub fn is_lethal(&self, p: Vec2) -> bool {
        self.cost_at(p) == COST_LETHAL
    }
}

fn point_in_polygon(p: Vec2, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.y) != (yj > p.y)
            && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Curvilinear state of one vehicle at one time step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VehicleState {
    pub s: f64,
    pub d: f64,
    pub v: f64,
    pub lane_id: i64,
    pub width: f64,
    pub length: f64,
}

/// Predicted motion of a traffic participant over the horizon.
#[derive(Debug, Clone)]
pub struct PredictedTrajectory {
    pub vehicle_id: u64,
    pub states: Vec<VehicleState>,
    pub is_reference: bool,
    /// Lanes occupied per step; 1 entry normally, 2 during a lane change.
    pub occupied_lanes: Vec<Vec<i64>>,
    /// True when the adjustment pass moved this trajectory.
    pub adjusted: bool,
    /// True when the required shift exceeded the cap; `valid_steps` is the
    /// last step still within the cap.
    pub adjust_capped: bool,
    pub valid_steps: usize,
}

impl PredictedTrajectory {
    pub fn lane_id(&self) -> i64 {
        self.states[0].lane_id
    }

    pub fn s_at(&self, k: usize) -> f64 {
        self.states[k].s
    }
}

/// Velocity-dependent acceleration bounds of the ego platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobilityModel {
    /// Piecewise-linear deceleration limit, (velocity, m/s^2) breakpoints.
    pub decel_of_v: Vec<(f64, f64)>,
    /// Piecewise-linear acceleration limit, (velocity, m/s^2) breakpoints.
    pub accel_of_v: Vec<(f64, f64)>,
    /// Max centripetal acceleration, m/s^2.
    pub a_cen: f64,
    /// Comfort deceleration, m/s^2.
    pub a_dec: f64,
    pub v_max: f64,
}

impl MobilityModel {
    pub fn decel(&self, v: f64) -> f64 {
        interp_table(&self.decel_of_v, v)
    }

    pub fn accel(&self, v: f64) -> f64 {
        interp_table(&self.accel_of_v, v)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = 0.0;
        while v <= self.v_max + 1e-9 {
            if self.decel(v) <= 0.0 || self.accel(v) <= 0.0 {
                return Err(PlannerError::InvalidInput(format!(
                    "mobility bounds must stay positive (violated at v = {v:.2})"
                )));
            }
            v += 0.5;
        }
        Ok(())
    }
}

fn interp_table(table: &[(f64, f64)], v: f64) -> f64 {
    assert!(!table.is_empty());
    if v <= table[0].0 {
        return table[0].1;
    }
    for w in table.windows(2) {
        if v <= w[1].0 {
            let t = (v - w[0].0) / (w[1].0 - w[0].0).max(1e-12);
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    table.last().unwrap().1
}

/// One lane of the road model, described in the ego reference frame.
#[derive(Debug, Clone)]
pub struct Lane {
    pub id: i64,
    pub left_line: ReferencePath,
    pub right_line: ReferencePath,
    pub width: f64,
    /// Lateral offset of the lane center from the reference path.
    pub d_center: f64,
}

/// Immutable planning snapshot consumed by the topology and optimization
/// stages.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub lanes: Vec<Lane>,
    pub cost_map: CostMap,
    pub ego: VehicleState,
    /// Ego lateral velocity at the snapshot, m/s; anchors the lateral
    /// solve so consecutive plans stay continuous in d-rate.
    pub ego_d_rate: f64,
    pub vehicles: Vec<PredictedTrajectory>,
    pub mobility: MobilityModel,
    pub v_sig: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Reference path of the ego lane; all (s, d) values are expressed in
    /// this frame.
    pub ref_path: ReferencePath,
}

impl WorldSnapshot {
    pub fn validate(&self, vehicle_width: f64) -> Result<()> {
        if self.dt <= 0.0 || self.n_steps < 2 {
            return Err(PlannerError::InvalidInput(
                "snapshot needs dt > 0 and n_steps >= 2".into(),
            ));
        }
        for lane in &self.lanes {
            if lane.width <= vehicle_width {
                return Err(PlannerError::InvalidInput(format!(
                    "lane {} width {:.2} must exceed vehicle width {:.2}",
                    lane.id, lane.width, vehicle_width
                )));
            }
        }
        self.mobility.validate()
    }

    pub fn lane(&self, id: i64) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }
}

/// Roll vehicles forward over the horizon.
///
/// Accelerating front vehicles are flattened to constant speed; everyone
/// else keeps the observed kinematics with speed floored at zero.
pub fn predict_trajectories(
    vehicles: &[(u64, VehicleState, f64)],
    ego_s: f64,
    dt: f64,
    n_steps: usize,
) -> Vec<PredictedTrajectory> {
    vehicles
        .iter()
        .map(|&(id, state, accel)| {
            let a = if state.s > ego_s && accel > 0.0 { 0.0 } else { accel };
            let mut states = Vec::with_capacity(n_steps + 1);
            let mut s = state.s;
            let mut v = state.v;
            states.push(VehicleState { s, v, ..state });
            for _ in 0..n_steps {
                let v_next = (v + a * dt).max(0.0);
                s += 0.5 * (v + v_next) * dt;
                v = v_next;
                states.push(VehicleState { s, v, ..state });
            }
            let lanes = vec![vec![state.lane_id]; n_steps + 1];
            PredictedTrajectory {
                vehicle_id: id,
                states,
                is_reference: false,
                occupied_lanes: lanes,
                adjusted: false,
                adjust_capped: false,
                valid_steps: n_steps,
            }
        })
        .collect()
}

/// Mark the reference vehicle of each lane: the nearest one ahead of ego,
/// or the nearest one behind when the lane has no front vehicle.
pub fn classify_reference_vehicles(vehicles: &mut [PredictedTrajectory], ego_s: f64) {
    let mut lanes: Vec<i64> = vehicles.iter().map(|t| t.lane_id()).collect();
    lanes.sort_unstable();
    lanes.dedup();
    for t in vehicles.iter_mut() {
        t.is_reference = false;
    }
    for lane in lanes {
        let mut best: Option<(usize, f64)> = None;
        // nearest front
        for (i, t) in vehicles.iter().enumerate() {
            if t.lane_id() != lane {
                continue;
            }
            let gap = t.s_at(0) - ego_s;
            if gap >= 0.0 && best.map_or(true, |(_, g)| gap < g) {
                best = Some((i, gap));
            }
        }
        if best.is_none() {
            // nearest rear
            for (i, t) in vehicles.iter().enumerate() {
                if t.lane_id() != lane {
                    continue;
                }
                let gap = ego_s - t.s_at(0);
                if best.map_or(true, |(_, g)| gap < g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i, _)) = best {
            vehicles[i].is_reference = true;
        }
    }
}

/// Remove s-t crossings between same-lane predicted trajectories.
///
/// Vehicles are walked front to back per lane; a non-reference follower is
/// clamped behind its leader by the leader's length plus `d_safe`, and a
/// non-reference leader about to be overrun by the reference is shifted
/// forward. Shifts beyond `cap_ratio * length` flag the trajectory and
/// record the last step within the cap.
pub fn adjust_non_reference_trajectories(
    vehicles: &mut [PredictedTrajectory],
    d_safe: f64,
    cap_ratio: f64,
) {
    let mut lanes: Vec<i64> = vehicles.iter().map(|t| t.lane_id()).collect();
    lanes.sort_unstable();
    lanes.dedup();

    for lane in lanes {
        let mut order: Vec<usize> = (0..vehicles.len())
            .filter(|&i| vehicles[i].lane_id() == lane)
            .collect();
        order.sort_by(|&a, &b| {
            vehicles[b]
                .s_at(0)
                .partial_cmp(&vehicles[a].s_at(0))
                .unwrap()
        });

        for pair in 1..order.len() {
            let leader = order[pair - 1];
            let follower = order[pair];
            let gap = vehicles[leader].states[0].length + d_safe;
            if !vehicles[follower].is_reference {
                let cap = cap_ratio * vehicles[follower].states[0].length;
                clamp_behind(vehicles, leader, follower, gap, cap);
            } else {
                // reference stays faithful; push the slower leader forward
                let cap = cap_ratio * vehicles[leader].states[0].length;
                push_ahead(vehicles, leader, follower, gap, cap);
            }
        }
    }
}

fn clamp_behind(
    vehicles: &mut [PredictedTrajectory],
    leader: usize,
    follower: usize,
    gap: f64,
    cap: f64,
) {
    let leader_s: Vec<f64> = vehicles[leader].states.iter().map(|st| st.s).collect();
    let t = &mut vehicles[follower];
    let mut moved = false;
    let mut capped_at: Option<usize> = None;
    for k in 0..t.states.len() {
        let bound = leader_s[k] - gap;
        if t.states[k].s > bound {
            let shift = t.states[k].s - bound;
            if shift > cap && capped_at.is_none() {
                capped_at = Some(k.saturating_sub(1));
            }
            t.states[k].s = bound;
            moved = true;
        }
    }
    finish_adjust(t, moved, capped_at);
}

fn push_ahead(
    vehicles: &mut [PredictedTrajectory],
    leader: usize,
    follower: usize,
    gap: f64,
    cap: f64,
) {
    let follower_s: Vec<f64> = vehicles[follower].states.iter().map(|st| st.s).collect();
    let t = &mut vehicles[leader];
    let mut moved = false;
    let mut capped_at: Option<usize> = None;
    for k in 0..t.states.len() {
        let bound = follower_s[k] + gap;
        if t.states[k].s < bound {
            let shift = bound - t.states[k].s;
            if shift > cap && capped_at.is_none() {
                capped_at = Some(k.saturating_sub(1));
            }
            t.states[k].s = bound;
            moved = true;
        }
    }
    finish_adjust(t, moved, capped_at);
}

fn finish_adjust(t: &mut PredictedTrajectory, moved: bool, capped_at: Option<usize>) {
    if !moved {
        return;
    }
    t.adjusted = true;
    if let Some(k) = capped_at {
        t.adjust_capped = true;
        t.valid_steps = k;
    }
    // keep s monotone after the shift
    for k in 1..t.states.len() {
        if t.states[k].s < t.states[k - 1].s {
            t.states[k].s = t.states[k - 1].s;
        }
    }
}
