use serde::{Deserialize, Serialize};

/// Tunable parameters for the whole planning pipeline.
///
/// Every field has a default that the simulation scenarios are calibrated
/// against; scenario files may override individual values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Sample spacing of reference paths, meters.
    pub path_interval: f64,
    /// Planning time step, seconds.
    pub dt: f64,
    /// Number of time steps in the horizon (horizon = n_steps * dt).
    pub n_steps: usize,
    /// Safety clearance to obstacles and vehicles, meters.
    pub d_safe: f64,
    /// Ego vehicle width, meters.
    pub vehicle_width: f64,
    /// Ego vehicle length, meters.
    pub vehicle_length: f64,
    /// Lateral bands per lane.
    pub bands_per_lane: usize,
    /// Sections kept per band, nearest ahead first.
    pub max_sections_per_band: usize,
    /// Terminal sections shorter than this fraction of their parent are
    /// collapsed into the parent before corridor extraction.
    pub leaf_prune_ratio: f64,
    /// Moving-average window (samples) for corridor bound smoothing.
    pub bound_smoothing_window: usize,
    /// Lane-change execution time, seconds.
    pub lane_change_duration: f64,
    /// Per-step shift cap for non-reference trajectory adjustment, as a
    /// fraction of the adjusted vehicle's length.
    pub adjust_cap_ratio: f64,
    /// Perception + decision + brake-lag delay, seconds.
    pub t_delay: f64,
    /// Velocity coefficient of the extra end-pose margin, seconds.
    pub alpha_extra: f64,
    /// Extra end-pose margin at standstill, meters.
    pub l_extra_min: f64,
    /// Lateral gate for Cartesian-to-curvilinear conversion, meters.
    pub frenet_gate: f64,
    /// Comfort bound on executed |lateral jerk|, m/s^3, audited by the
    /// replay harness.
    pub max_lateral_jerk: f64,
    /// Cost-map rows (lateral cells).
    pub costmap_rows: usize,
    /// Cost-map cols (longitudinal cells).
    pub costmap_cols: usize,
    /// Cost-map resolution, meters per cell.
    pub costmap_resolution: f64,
    pub weights: WeightConfig,
    pub selection: SelectionConfig,
    pub solver: SolverConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            path_interval: 0.5,
            dt: 0.25,
            n_steps: 40,
            d_safe: 0.3,
            vehicle_width: 1.8,
            vehicle_length: 4.5,
            bands_per_lane: 7,
            max_sections_per_band: 3,
            leaf_prune_ratio: 0.5,
            bound_smoothing_window: 5,
            lane_change_duration: 3.0,
            adjust_cap_ratio: 0.5,
            t_delay: 1.5,
            alpha_extra: 0.5,
            l_extra_min: 2.0,
            frenet_gate: 50.0,
            max_lateral_jerk: 5.0,
            costmap_rows: 250,
            costmap_cols: 800,
            costmap_resolution: 0.2,
            weights: WeightConfig::default(),
            selection: SelectionConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl PlannerConfig {
    /// Minimum drivable width per the band formula:
    /// `max(3 * band_width, vehicle_width + 2 * d_safe)`.
    pub fn min_drivable_width(&self, lane_width: f64) -> f64 {
        let band = lane_width / self.bands_per_lane as f64;
        (3.0 * band).max(self.vehicle_width + 2.0 * self.d_safe)
    }

    /// Planning horizon in seconds.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Weights for the longitudinal and lateral quadratic costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub lon_accel: f64,
    pub lon_jerk: f64,
    /// Anchor weight on position at the first and last step.
    pub lon_pos_anchor: f64,
    /// Anchor weight on velocity at the first and last step.
    pub lon_vel_anchor: f64,
    pub lat_accel: f64,
    pub lat_jerk: f64,
    pub lat_pos: f64,
    /// Multiplier applied to the position weight at steps commanding a
    /// large lateral change.
    pub lat_pos_transition_gain: f64,
    pub lat_vel_base: f64,
    /// Growth of the lateral velocity weight with the squared offset to
    /// the target center: `lat_vel_base * (1 + beta * d0^2)`.
    pub lat_vel_offset_beta: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            lon_accel: 1.0,
            lon_jerk: 1.0,
            lon_pos_anchor: 100.0,
            lon_vel_anchor: 100.0,
            lat_accel: 1.0,
            lat_jerk: 2.0,
            lat_pos: 10.0,
            lat_pos_transition_gain: 10.0,
            lat_vel_base: 1.0,
            lat_vel_offset_beta: 4.0,
        }
    }
}

/// Maneuver scoring weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub comfort: f64,
    pub safety: f64,
    pub efficiency: f64,
    /// Cost bonus (subtracted) for maneuvers ending in the drive lane.
    pub drive_lane_bonus: f64,
    /// Cost reduction per planning cycle a maneuver has persisted.
    pub age_bonus: f64,
    /// Cycles after which the age bonus saturates.
    pub age_cap: u32,
    /// Preferred drive lane id, if any.
    pub drive_lane: Option<i64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            comfort: 1.0,
            safety: 2.0,
            efficiency: 3.0,
            drive_lane_bonus: 0.2,
            age_bonus: 0.05,
            age_cap: 10,
            drive_lane: None,
        }
    }
}

/// Damped least-squares termination settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_gradient: f64,
    pub tol_step: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_gradient: 1e-8,
            tol_step: 1e-10,
            max_iterations: 200,
        }
    }
}
