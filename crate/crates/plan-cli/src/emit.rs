//! Output writers: trajectory and metrics CSV, maneuver JSON, and simple
//! SVG plots of the two topology planes.

use anyhow::{Context, Result};
use planner::PlanOutcome;
use std::fmt::Write as _;
use std::path::Path;

use crate::sim::{CycleRecord, StepRecord};

pub fn write_trajectory_csv(path: &Path, steps: &[StepRecord]) -> Result<()> {
    let mut out = String::from("t,s,d,x,y,v,a,jerk\n");
    for r in steps {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.t, r.s, r.d, r.x, r.y, r.v, r.a, r.jerk
        )
        .unwrap();
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_metrics_csv(path: &Path, cycles: &[CycleRecord]) -> Result<()> {
    let mut out = String::from(
        "t_static_topology,t_dynamic_topology,t_optimization,maneuver_count,selected_maneuver\n",
    );
    for c in cycles {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{},{}",
            c.t_static * 1e3,
            c.t_dynamic * 1e3,
            c.t_optimization * 1e3,
            c.maneuvers,
            c.selected_maneuver
                .map(|i| i.to_string())
                .unwrap_or_else(|| "-".into()),
        )
        .unwrap();
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Per-cycle snapshot of every synthesized maneuver, for the JSON log.
pub fn maneuver_summary(outcome: &PlanOutcome, t: f64) -> serde_json::Value {
    let maneuvers: Vec<serde_json::Value> = outcome
        .maneuvers
        .iter()
        .map(|m| {
            serde_json::json!({
                "lane_sequence": m.lane_sequence,
                "lane_changes": m.lane_changes(),
                "synthesized": m.trajectory.is_some(),
                "age": m.age,
                "cost": {
                    "comfort": m.cost.comfort,
                    "safety": m.cost.safety,
                    "efficiency": m.cost.efficiency,
                },
                "windows": m.windows.iter().map(|w| serde_json::json!({
                    "begin_earliest": w.begin_earliest,
                    "begin_latest": w.begin_latest,
                    "finish_earliest": w.finish_earliest,
                    "finish_latest": w.finish_latest,
                    "exec_time": w.exec_time,
                    "feasible": w.feasible,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({
        "t": t,
        "routes": outcome.routes.len(),
        "corridors": outcome.corridors.len(),
        "selected": outcome.selected,
        "emergency": outcome.selected.is_none(),
        "maneuvers": maneuvers,
    })
}

pub fn write_maneuvers_json(path: &Path, log: &[serde_json::Value]) -> Result<()> {
    let text = serde_json::to_string_pretty(&serde_json::json!({ "cycles": log }))?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

const COLORS: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
];

/// Both topology planes stacked in one file: s-t trajectory profiles on
/// top (one polygon per profile, selected trajectory as a line), d-s
/// corridor bounds below.
pub fn write_plots_svg(path: &Path, outcome: &PlanOutcome, dt: f64) -> Result<()> {
    let (w, h_top, h_bottom) = (640.0, 420.0, 300.0);
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {}\">",
        h_top + h_bottom
    )
    .unwrap();
    writeln!(
        svg,
        "<rect width=\"{w}\" height=\"{}\" fill=\"white\"/>",
        h_top + h_bottom
    )
    .unwrap();
    svg.push_str(&profiles_panel(outcome, dt, w, h_top));
    writeln!(svg, "<g transform=\"translate(0,{h_top})\">").unwrap();
    svg.push_str(&corridors_panel(outcome, w, h_bottom));
    writeln!(svg, "</g>").unwrap();
    writeln!(svg, "</svg>").unwrap();
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

fn profiles_panel(outcome: &PlanOutcome, dt: f64, w: f64, h: f64) -> String {
    let n = outcome
        .profiles
        .first()
        .map(|p| p.rear.len())
        .unwrap_or(0);
    if n == 0 {
        return String::new();
    }
    let t_max = (n - 1) as f64 * dt;
    let s_max = outcome
        .profiles
        .iter()
        .flat_map(|p| p.front.iter())
        .fold(1.0_f64, |m, &v| m.max(v));
    let s_min = outcome
        .profiles
        .iter()
        .flat_map(|p| p.rear.iter())
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |m, &v| m.min(v));
    let sx = |t: f64| 40.0 + t / t_max * (w - 60.0);
    let sy = |s: f64| h - 30.0 - (s - s_min) / (s_max - s_min) * (h - 60.0);

    let mut svg = String::new();
    for (i, p) in outcome.profiles.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        for k in 0..n {
            if p.exists(k) {
                write!(points, "{:.1},{:.1} ", sx(k as f64 * dt), sy(p.rear[k])).unwrap();
            }
        }
        for k in (0..n).rev() {
            if p.exists(k) {
                write!(points, "{:.1},{:.1} ", sx(k as f64 * dt), sy(p.front[k])).unwrap();
            }
        }
        if !points.is_empty() {
            writeln!(
                svg,
                "<polygon points=\"{points}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"{color}\"/>"
            )
            .unwrap();
        }
    }
    if let Some(traj) = outcome.selected_trajectory() {
        let mut points = String::new();
        for (k, &s) in traj.s.iter().enumerate() {
            write!(points, "{:.1},{:.1} ", sx(k as f64 * dt), sy(s)).unwrap();
        }
        writeln!(
            svg,
            "<polyline points=\"{points}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>"
        )
        .unwrap();
    }
    writeln!(svg, "<text x=\"{:.0}\" y=\"{h}\" font-size=\"12\">t [s]</text>", w / 2.0).unwrap();
    writeln!(svg, "<text x=\"4\" y=\"16\" font-size=\"12\">s [m]</text>").unwrap();
    svg
}

fn corridors_panel(outcome: &PlanOutcome, w: f64, h: f64) -> String {
    let mut s_max = 1.0_f64;
    let mut d_lo = f64::INFINITY;
    let mut d_hi = f64::NEG_INFINITY;
    for c in &outcome.corridors {
        for (i, &(lo, hi)) in c.bounds.iter().enumerate() {
            if lo > hi {
                continue;
            }
            s_max = s_max.max(c.s_origin + i as f64 * c.resolution);
            d_lo = d_lo.min(lo);
            d_hi = d_hi.max(hi);
        }
    }
    if !d_lo.is_finite() {
        return String::new();
    }
    let sx = |s: f64| 40.0 + s / s_max * (w - 60.0);
    let sy = |d: f64| h - 30.0 - (d - d_lo) / (d_hi - d_lo).max(1e-9) * (h - 60.0);

    let mut svg = String::new();
    for (ci, c) in outcome.corridors.iter().enumerate() {
        let color = COLORS[ci % COLORS.len()];
        for side in 0..2 {
            let mut points = String::new();
            for (i, &(lo, hi)) in c.bounds.iter().enumerate() {
                if lo > hi {
                    continue;
                }
                let s = c.s_origin + i as f64 * c.resolution;
                let d = if side == 0 { lo } else { hi };
                write!(points, "{:.1},{:.1} ", sx(s), sy(d)).unwrap();
            }
            if !points.is_empty() {
                writeln!(
                    svg,
                    "<polyline points=\"{points}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
                )
                .unwrap();
            }
        }
    }
    writeln!(svg, "<text x=\"{:.0}\" y=\"{h}\" font-size=\"12\">s [m]</text>", w / 2.0).unwrap();
    writeln!(svg, "<text x=\"4\" y=\"16\" font-size=\"12\">d [m]</text>").unwrap();
    svg
}
