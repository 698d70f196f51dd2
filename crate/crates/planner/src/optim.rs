//! Step-wise trajectory synthesis: a longitudinal pass over arc length
//! and a lateral pass over offset, both posed as weighted least squares
//! over the sampled horizon and solved with damped least squares.

use crate::config::{PlannerConfig, SolverConfig, WeightConfig};
use crate::dls::{self, LeastSquaresProblem, SolveReport};
use crate::world::MobilityModel;
use nalgebra::{DMatrix, DVector};

/// A synthesized trajectory in curvilinear coordinates, sampled at `dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub dt: f64,
}

fn diff(x: &[f64], dt: f64) -> Vec<f64> {
    x.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Forward-difference longitudinal velocity (one sample shorter).
    pub fn velocity(&self) -> Vec<f64> {
        diff(&self.s, self.dt)
    }

    pub fn acceleration(&self) -> Vec<f64> {
        diff(&self.velocity(), self.dt)
    }

    pub fn jerk(&self) -> Vec<f64> {
        diff(&self.acceleration(), self.dt)
    }

    pub fn lateral_velocity(&self) -> Vec<f64> {
        diff(&self.d, self.dt)
    }

    pub fn lateral_acceleration(&self) -> Vec<f64> {
        diff(&self.lateral_velocity(), self.dt)
    }

    pub fn lateral_jerk(&self) -> Vec<f64> {
        diff(&self.lateral_acceleration(), self.dt)
    }

    pub fn max_abs(values: &[f64]) -> f64 {
        values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// End-of-horizon velocity and position limits for the longitudinal pass.
#[derive(Debug, Clone, Copy)]
pub struct LonLimits {
    /// Target velocity at the end of the horizon.
    pub v_target: f64,
    /// Upper bound on the end position (delay and margin subtracted from
    /// the leading constraint); infinite when unconstrained.
    pub s_limit: f64,
    /// Speed of the limiting front bound at the end of the horizon: zero
    /// for a static blockage, the leader speed when following.
    pub v_bound_end: f64,
}

/// Velocity and end-position limits.
///
/// The velocity target is capped by the lateral-acceleration limit on the
/// curvature ahead, the mobility maximum, and what braking can reach over
/// the horizon without dropping below the signaled speed. The position
/// limit backs off the leading front bound by the delay distance, an
/// extra speed-dependent margin and the leader length.
pub fn longitudinal_limits(
    v_bar: f64,
    v_sig: f64,
    rho_max: f64,
    front_bound_end: f64,
    front_bound_speed: f64,
    leader_length: f64,
    mobility: &MobilityModel,
    cfg: &PlannerConfig,
) -> LonLimits {
    let v_acc = if rho_max.abs() < 1e-9 {
        f64::INFINITY
    } else {
        (mobility.a_cen / rho_max.abs()).sqrt()
    };
    let v_braked = (v_bar - cfg.horizon() * mobility.a_dec).max(0.0);
    let v_target = v_acc
        .min(mobility.v_max)
        .min(v_sig.max(v_braked))
        .max(0.0);

    let s_limit = if front_bound_end.is_finite() {
        let l_extra = cfg.alpha_extra * v_bar + cfg.l_extra_min;
        front_bound_end - (v_bar * cfg.t_delay + l_extra + leader_length)
    } else {
        f64::INFINITY
    };
    LonLimits {
        v_target,
        s_limit,
        v_bound_end: if front_bound_end.is_finite() {
            front_bound_speed.max(0.0)
        } else {
            f64::INFINITY
        },
    }
}

/// Constant-ramp initial guess for the longitudinal pass, clamped under
/// the position limit and kept monotone.
pub fn init_longitudinal(
    s0: f64,
    v0: f64,
    limits: &LonLimits,
    n_steps: usize,
    dt: f64,
) -> Vec<f64> {
    let n = n_steps;
    let mut s = Vec::with_capacity(n + 1);
    let mut cur = s0;
    s.push(cur);
    for k in 0..n {
        let frac = (k as f64 + 0.5) / n as f64;
        let v = v0 + (limits.v_target - v0) * frac;
        cur += v.max(0.0) * dt;
        if cur > limits.s_limit {
            cur = limits.s_limit;
        }
        let prev = *s.last().unwrap();
        if cur < prev {
            cur = prev;
        }
        s.push(cur);
    }
    s
}

/// Weighted least-squares problem over the longitudinal samples
/// `s_0..s_N`: acceleration and jerk by forward differences, velocity
/// anchors at the first and last step, position anchors at both ends.
pub struct LonProblem {
    pub dt: f64,
    pub n: usize,
    pub w_acc: f64,
    pub w_jerk: f64,
    pub w_vel: f64,
    pub w_pos: f64,
    pub v0: f64,
    pub v_end: f64,
    pub s0: f64,
    pub s_end: f64,
    /// Optional intermediate position anchor (step, target), weighted
    /// like the end anchors. Ties the plan to a maneuver-window deadline.
    pub mid: Option<(usize, f64)>,
}

impl LeastSquaresProblem for LonProblem {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let dt = self.dt;
        let mut r = Vec::with_capacity(2 * n + 3);
        let wa = self.w_acc.sqrt();
        let wj = self.w_jerk.sqrt();
        let wv = self.w_vel.sqrt();
        let wp = self.w_pos.sqrt();
        for i in 0..n - 1 {
            r.push(wa * (x[i + 2] - 2.0 * x[i + 1] + x[i]) / (dt * dt));
        }
        for i in 0..n - 2 {
            r.push(wj * (x[i + 3] - 3.0 * x[i + 2] + 3.0 * x[i + 1] - x[i]) / (dt * dt * dt));
        }
        r.push(wv * ((x[1] - x[0]) / dt - self.v0));
        r.push(wv * ((x[n] - x[n - 1]) / dt - self.v_end));
        r.push(wp * (x[0] - self.s0));
        r.push(wp * (x[n] - self.s_end));
        if let Some((k, target)) = self.mid {
            r.push(wp * (x[k] - target));
        }
        DVector::from_vec(r)
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let dt = self.dt;
        let rows = (n - 1) + (n - 2) + 4 + usize::from(self.mid.is_some());
        let mut j = DMatrix::zeros(rows, n + 1);
        let wa = self.w_acc.sqrt() / (dt * dt);
        let wj = self.w_jerk.sqrt() / (dt * dt * dt);
        let wv = self.w_vel.sqrt() / dt;
        let wp = self.w_pos.sqrt();
        let mut row = 0;
        for i in 0..n - 1 {
            j[(row, i)] = wa;
            j[(row, i + 1)] = -2.0 * wa;
            j[(row, i + 2)] = wa;
            row += 1;
        }
        for i in 0..n - 2 {
            j[(row, i)] = -wj;
            j[(row, i + 1)] = 3.0 * wj;
            j[(row, i + 2)] = -3.0 * wj;
            j[(row, i + 3)] = wj;
            row += 1;
        }
        j[(row, 0)] = -wv;
        j[(row, 1)] = wv;
        row += 1;
        j[(row, n - 1)] = -wv;
        j[(row, n)] = wv;
        row += 1;
        j[(row, 0)] = wp;
        row += 1;
        j[(row, n)] = wp;
        if let Some((k, _)) = self.mid {
            row += 1;
            j[(row, k)] = wp;
        }
        j
    }
}

/// Solve the longitudinal pass from an initial guess.
pub fn solve_longitudinal(
    guess: &[f64],
    v0: f64,
    limits: &LonLimits,
    mid: Option<(usize, f64)>,
    weights: &WeightConfig,
    solver: &SolverConfig,
    dt: f64,
) -> (Vec<f64>, SolveReport) {
    let n = guess.len() - 1;
    let problem = LonProblem {
        mid,
        dt,
        n,
        w_acc: weights.lon_accel,
        w_jerk: weights.lon_jerk,
        w_vel: weights.lon_vel_anchor,
        w_pos: weights.lon_pos_anchor,
        v0,
        v_end: limits.v_target.min(if limits.s_limit.is_finite() {
            // terminal speed of a linear ramp that covers the remaining
            // distance; following a moving bound, its own speed is safe
            // (the position margin already absorbs the reaction delay)
            (2.0 * (limits.s_limit - guess[0]) / (n as f64 * dt) - v0)
                .max(limits.v_bound_end)
                .max(0.0)
        } else {
            f64::INFINITY
        }),
        s0: guess[0],
        s_end: guess[n].min(limits.s_limit),
    };
    let (x, report) = dls::solve(&problem, DVector::from_column_slice(guess), solver);
    (x.iter().copied().collect(), report)
}

/// Piecewise lane-center initial guess for the lateral pass, switching at
/// the midpoint of the maneuver window, clamped into the corridor bounds
/// with a projection margin.
pub fn init_lateral(
    d0: f64,
    source_center: f64,
    target_center: f64,
    t_begin: f64,
    t_exec: f64,
    bounds: &[(f64, f64)],
    d_safe_prj: f64,
    dt: f64,
) -> Vec<f64> {
    let n = bounds.len() - 1;
    let switch = t_begin + 0.5 * t_exec;
    let mut guess = Vec::with_capacity(n + 1);
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        let t = k as f64 * dt;
        let base = if k == 0 {
            d0
        } else if t < switch {
            source_center
        } else {
            target_center
        };
        let (clo, chi) = (lo + d_safe_prj, hi - d_safe_prj);
        let v = if clo > chi {
            0.5 * (lo + hi) // bounds tighter than twice the margin
        } else {
            base.clamp(clo, chi)
        };
        guess.push(v);
    }
    guess
}

/// Weighted least-squares problem over the lateral samples `d_0..d_N`
/// with per-step position and velocity weights.
pub struct LatProblem {
    pub dt: f64,
    pub n: usize,
    pub w_acc: f64,
    pub w_jerk: f64,
    /// Per-step position weight (raised during the hold phase).
    pub w_pos: Vec<f64>,
    /// Per-step velocity weight, grown with the initial offset.
    pub w_vel: Vec<f64>,
    /// Position target per step (the clamped guess).
    pub target: Vec<f64>,
    /// Initial lateral velocity and its anchor weight.
    pub v0: f64,
    pub w_v0: f64,
}

impl LeastSquaresProblem for LatProblem {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let dt = self.dt;
        let mut r = Vec::with_capacity(3 * n);
        let wa = self.w_acc.sqrt();
        let wj = self.w_jerk.sqrt();
        for i in 0..n - 1 {
            r.push(wa * (x[i + 2] - 2.0 * x[i + 1] + x[i]) / (dt * dt));
        }
        for i in 0..n - 2 {
            r.push(wj * (x[i + 3] - 3.0 * x[i + 2] + 3.0 * x[i + 1] - x[i]) / (dt * dt * dt));
        }
        for i in 0..=n {
            r.push(self.w_pos[i].sqrt() * (x[i] - self.target[i]));
        }
        for i in 0..n {
            r.push(self.w_vel[i].sqrt() * (x[i + 1] - x[i]) / dt);
        }
        r.push(self.w_v0.sqrt() * ((x[1] - x[0]) / dt - self.v0));
        DVector::from_vec(r)
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let dt = self.dt;
        let rows = (n - 1) + (n - 2) + (n + 1) + n + 1;
        let mut j = DMatrix::zeros(rows, n + 1);
        let wa = self.w_acc.sqrt() / (dt * dt);
        let wj = self.w_jerk.sqrt() / (dt * dt * dt);
        let mut row = 0;
        for i in 0..n - 1 {
            j[(row, i)] = wa;
            j[(row, i + 1)] = -2.0 * wa;
            j[(row, i + 2)] = wa;
            row += 1;
        }
        for i in 0..n - 2 {
            j[(row, i)] = -wj;
            j[(row, i + 1)] = 3.0 * wj;
            j[(row, i + 2)] = -3.0 * wj;
            j[(row, i + 3)] = wj;
            row += 1;
        }
        for i in 0..=n {
            j[(row, i)] = self.w_pos[i].sqrt();
            row += 1;
        }
        for i in 0..n {
            let wv = self.w_vel[i].sqrt() / dt;
            j[(row, i)] = -wv;
            j[(row, i + 1)] = wv;
            row += 1;
        }
        let wv0 = self.w_v0.sqrt() / dt;
        j[(row, 0)] = -wv0;
        j[(row, 1)] = wv0;
        j
    }
}

/// Build the lateral problem around a clamped guess. The position weight
/// is raised once the guess has switched to the target lane center; the
/// velocity weight grows with the squared initial offset to the target.
pub fn build_lateral_problem(
    guess: Vec<f64>,
    d0: f64,
    v_d0: f64,
    target_center: f64,
    t_begin: f64,
    t_exec: f64,
    weights: &WeightConfig,
    dt: f64,
) -> LatProblem {
    let n = guess.len() - 1;
    let switch = t_begin + 0.5 * t_exec;
    let offset = d0 - target_center;
    let wv = weights.lat_vel_base * (1.0 + weights.lat_vel_offset_beta * offset * offset);
    // hard anchor on the current lateral state, raised weight once the
    // guess holds the target lane
    const INITIAL_ANCHOR: f64 = 1e5;
    let mut w_pos = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        let w = if k == 0 {
            INITIAL_ANCHOR
        } else if t >= switch {
            weights.lat_pos * weights.lat_pos_transition_gain
        } else {
            weights.lat_pos
        };
        w_pos.push(w);
    }
    LatProblem {
        dt,
        n,
        w_acc: weights.lat_accel,
        w_jerk: weights.lat_jerk,
        w_pos,
        w_vel: vec![wv; n],
        target: guess,
        v0: v_d0,
        // continuity with the executed lateral rate, as stiff as one more
        // acceleration residual bridging the previous interval; a hard
        // anchor here would pin the first-step velocity and never let
        // lateral speed build up across replans
        w_v0: weights.lat_accel / (dt * dt),
    }
}

pub fn solve_lateral(problem: &LatProblem, solver: &SolverConfig) -> (Vec<f64>, SolveReport) {
    let x0 = DVector::from_column_slice(&problem.target);
    let (x, report) = dls::solve(problem, x0, solver);
    (x.iter().copied().collect(), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlannerConfig;

    fn mobility() -> MobilityModel {
        MobilityModel {
            decel_of_v: vec![(0.0, 4.0), (30.0, 4.0)],
            accel_of_v: vec![(0.0, 2.0), (30.0, 2.0)],
            a_cen: 2.0,
            a_dec: 4.0,
            v_max: 16.7,
        }
    }

    #[test]
    fn end_position_margin_worked_example() {
        let cfg = PlannerConfig::default();
        let limits = longitudinal_limits(11.9, 16.7, 0.0, 145.0, 7.1, 4.5, &mobility(), &cfg);
        // 145 - (11.9 * 1.5 + (0.5 * 11.9 + 2.0) + 4.5) = 114.7
        assert!((limits.s_limit - 114.7).abs() < 1e-9);
    }

    #[test]
    fn curve_speed_identity() {
        let cfg = PlannerConfig::default();
        let m = mobility();
        let rho = 0.02;
        let limits = longitudinal_limits(5.0, 30.0, rho, f64::INFINITY, 0.0, 0.0, &m, &cfg);
        assert!((limits.v_target * limits.v_target * rho - m.a_cen).abs() < 1e-9);
        assert!(limits.s_limit.is_infinite());
    }

    #[test]
    fn velocity_target_caps() {
        let cfg = PlannerConfig::default();
        let m = mobility();
        // straight road, generous signal: mobility maximum wins
        let l = longitudinal_limits(10.0, 30.0, 0.0, f64::INFINITY, 0.0, 0.0, &m, &cfg);
        assert!((l.v_target - m.v_max).abs() < 1e-9);
        // low signaled speed: braking over the horizon cannot undershoot it
        let l = longitudinal_limits(10.0, 5.0, 0.0, f64::INFINITY, 0.0, 0.0, &m, &cfg);
        assert!((l.v_target - 5.0).abs() < 1e-9);
    }

    #[test]
    fn init_guess_monotone_and_limited() {
        let limits = LonLimits {
            v_target: 10.0,
            s_limit: 30.0,
            v_bound_end: 0.0,
        };
        let s = init_longitudinal(0.0, 12.0, &limits, 40, 0.25);
        assert_eq!(s.len(), 41);
        for w in s.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(s.iter().all(|&v| v <= 30.0 + 1e-12));
        assert!((s[40] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn free_road_reaches_target_speed() {
        let cfg = PlannerConfig::default();
        let limits = LonLimits {
            v_target: 15.0,
            s_limit: f64::INFINITY,
            v_bound_end: f64::INFINITY,
        };
        let guess = init_longitudinal(0.0, 10.0, &limits, cfg.n_steps, cfg.dt);
        let (s, report) =
            solve_longitudinal(&guess, 10.0, &limits, None, &cfg.weights, &cfg.solver, cfg.dt);
        assert!(report.converged);
        assert!(report.final_cost <= report.initial_cost);
        let traj = Trajectory {
            s,
            d: vec![0.0; cfg.n_steps + 1],
            dt: cfg.dt,
        };
        let v = traj.velocity();
        assert!((v[cfg.n_steps - 1] - 15.0).abs() < 0.2, "v_end = {}", v[cfg.n_steps - 1]);
        assert!(Trajectory::max_abs(&traj.acceleration()) < 3.0);
    }

    #[test]
    fn position_limit_respected() {
        let cfg = PlannerConfig::default();
        let limits = LonLimits {
            v_target: 12.0,
            s_limit: 40.0,
            v_bound_end: 0.0,
        };
        let guess = init_longitudinal(0.0, 12.0, &limits, cfg.n_steps, cfg.dt);
        let (s, report) =
            solve_longitudinal(&guess, 12.0, &limits, None, &cfg.weights, &cfg.solver, cfg.dt);
        assert!(report.converged);
        assert!(s[cfg.n_steps] <= 40.0 + 0.5, "end = {}", s[cfg.n_steps]);
    }

    #[test]
    fn lon_jacobian_matches_finite_differences() {
        let problem = LonProblem {
            dt: 0.25,
            n: 8,
            w_acc: 1.0,
            w_jerk: 1.0,
            w_vel: 100.0,
            w_pos: 100.0,
            v0: 5.0,
            v_end: 8.0,
            s0: 0.0,
            s_end: 15.0,
            mid: Some((4, 7.0)),
        };
        let x = DVector::from_fn(9, |i, _| i as f64 * 1.3);
        check_jacobian(&problem, &x);
    }

    #[test]
    fn lat_jacobian_matches_finite_differences() {
        let guess = vec![0.1, 0.2, 0.5, 1.0, 1.8, 2.6, 3.2, 3.4, 3.5];
        let problem = build_lateral_problem(
            guess,
            0.1,
            0.4,
            3.5,
            0.0,
            2.0,
            &WeightConfig::default(),
            0.25,
        );
        let x = DVector::from_fn(9, |i, _| (i as f64 * 0.7).sin());
        check_jacobian(&problem, &x);
    }

    fn check_jacobian<P: LeastSquaresProblem>(problem: &P, x: &DVector<f64>) {
        let j = problem.jacobian(x);
        let h = 1e-6;
        for col in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let fd = (problem.residuals(&xp) - problem.residuals(&xm)) / (2.0 * h);
            for row in 0..j.nrows() {
                assert!(
                    (j[(row, col)] - fd[row]).abs() < 1e-5,
                    "row {} col {}: {} vs {}",
                    row,
                    col,
                    j[(row, col)],
                    fd[row]
                );
            }
        }
    }

    #[test]
    fn lane_change_settles_at_target() {
        let cfg = PlannerConfig::default();
        let n = cfg.n_steps;
        // both lanes free: union of lane 0 and lane 1, shrunk by d_safe
        let bounds = vec![(-1.75 + 0.3, 5.25 - 0.3); n + 1];
        let guess = init_lateral(0.0, 0.0, 3.5, 1.0, 3.0, &bounds, cfg.d_safe, cfg.dt);
        let problem =
            build_lateral_problem(guess, 0.0, 0.0, 3.5, 1.0, 3.0, &cfg.weights, cfg.dt);
        let (d, report) = solve_lateral(&problem, &cfg.solver);
        assert!(report.converged);
        assert!((d[n] - 3.5).abs() < 0.1, "d_end = {}", d[n]);
        assert!((d[0] - 0.0).abs() < 0.05);
        let traj = Trajectory {
            s: vec![0.0; n + 1],
            d,
            dt: cfg.dt,
        };
        // smooth transition: bounded lateral velocity and finite jerk
        assert!(Trajectory::max_abs(&traj.lateral_velocity()) < 3.0);
        assert!(Trajectory::max_abs(&traj.lateral_jerk()).is_finite());
    }

    #[test]
    fn tight_bounds_guess_uses_midpoint() {
        let bounds = vec![(1.0, 1.4); 9];
        let guess = init_lateral(0.0, 0.0, 3.5, 0.0, 2.0, &bounds, 0.3, 0.25);
        // 0.4 m of room against a 0.3 m margin each side: fall back to the
        // middle of the free interval
        for &g in &guess {
            assert!((g - 1.2).abs() < 1e-9);
        }
    }

    #[test]
    fn guess_clamped_into_bounds() {
        let bounds = vec![(-1.0, 1.0); 9];
        let guess = init_lateral(0.0, 0.0, 3.5, 0.0, 1.0, &bounds, 0.3, 0.25);
        for &g in &guess {
            assert!(g <= 0.7 + 1e-9);
        }
    }

    #[test]
    fn forward_difference_chain() {
        // derivative chains agree with direct higher-order differences
        let s: Vec<f64> = (0..10).map(|i| (i as f64).powi(3)).collect();
        let traj = Trajectory {
            s: s.clone(),
            d: vec![0.0; 10],
            dt: 1.0,
        };
        let a = traj.acceleration();
        for (i, &ai) in a.iter().enumerate() {
            let direct = s[i + 2] - 2.0 * s[i + 1] + s[i];
            assert!((ai - direct).abs() < 1e-9);
        }
        let j = traj.jerk();
        for (i, &ji) in j.iter().enumerate() {
            let direct = s[i + 3] - 3.0 * s[i + 2] + 3.0 * s[i + 1] - s[i];
            assert!((ji - direct).abs() < 1e-9);
        }
    }
}
