//! Topology in the d-s plane: lanes split into lateral bands, bands cut
//! into obstacle-free sections, a section graph searched outward from the
//! ego, and lateral-bound corridors extracted per terminal section.

use crate::config::PlannerConfig;
use crate::error::{PlannerError, Result};
use crate::frenet::ReferencePath;
use crate::world::{CostMap, Lane};

/// One obstacle-free longitudinal interval of a lateral band.
#[derive(Debug, Clone)]
pub struct Section {
    pub lane_id: i64,
    /// Global band index, increasing from the leftmost band of the
    /// leftmost lane.
    pub band_index: usize,
    /// Order of this section within its band, nearest ahead of ego first.
    pub section_index: usize,
    pub s_start: f64,
    pub s_end: f64,
    pub d_center: f64,
    pub band_width: f64,
}

impl Section {
    pub fn length(&self) -> f64 {
        self.s_end - self.s_start
    }

    pub fn overlap(&self, other: &Section) -> f64 {
        self.s_end.min(other.s_end) - self.s_start.max(other.s_start)
    }

    pub fn d_low(&self) -> f64 {
        self.d_center - 0.5 * self.band_width
    }

    pub fn d_high(&self) -> f64 {
        self.d_center + 0.5 * self.band_width
    }

    /// Name in band/section notation, e.g. `s_2_0^0`.
    pub fn name(&self) -> String {
        format!("s_{}_{}^{}", self.band_index, self.section_index, self.lane_id)
    }
}

/// Free-run mask of one band, produced by scanning the cost map along the
/// band center at the map resolution.
#[derive(Debug, Clone)]
pub struct BandMask {
    pub lane_id: i64,
    pub band_index: usize,
    pub d_center: f64,
    pub band_width: f64,
    pub s_origin: f64,
    pub resolution: f64,
    pub free: Vec<bool>,
}

/// Scan every lane band against the cost map.
///
/// Lanes are ordered left to right by their center offset; a band sample
/// is blocked when any of its lateral probes hits an occupied (lethal or
/// inflated) cell.
pub fn scan_bands(
    cost_map: &CostMap,
    lanes: &[Lane],
    ref_path: &ReferencePath,
    cfg: &PlannerConfig,
    s_range: (f64, f64),
) -> Vec<BandMask> {
    let mut ordered: Vec<&Lane> = lanes.iter().collect();
    ordered.sort_by(|a, b| b.d_center.partial_cmp(&a.d_center).unwrap());

    let res = cost_map.resolution;
    let s0 = s_range.0.max(0.0);
    let s1 = s_range.1.min(ref_path.s_max());
    let n = ((s1 - s0) / res).floor() as usize;
    let bands_per_lane = cfg.bands_per_lane;
    let mid = 0.5 * (bands_per_lane as f64 - 1.0);

    let mut masks = Vec::new();
    for (li, lane) in ordered.iter().enumerate() {
        let band_width = lane.width / bands_per_lane as f64;
        for b in 0..bands_per_lane {
            masks.push(BandMask {
                lane_id: lane.id,
                band_index: li * bands_per_lane + b,
                d_center: lane.d_center + (mid - b as f64) * band_width,
                band_width,
                s_origin: s0,
                resolution: res,
                free: vec![true; n],
            });
        }
    }
    // one centerline pose per column, shared by every band probe
    for i in 0..n {
        let s = s0 + (i as f64 + 0.5) * res;
        let (foot, normal, rho) = ref_path.pose_at(s);
        for mask in masks.iter_mut() {
            let probe = 0.5 * mask.band_width - 0.5 * res;
            for d in [mask.d_center - probe, mask.d_center, mask.d_center + probe] {
                // past the curvature center the offset folds back on
                // itself; treat it as blocked like the conversion does
                if (rho.abs() > 1e-12 && d.abs() * rho.abs() >= 1.0)
                    || cost_map.is_occupied(foot.add(normal.scale(d)))
                {
                    mask.free[i] = false;
                    break;
                }
            }
        }
    }
    masks
}

/// Cut each band mask into sections: maximal free runs, keeping up to
/// `max_sections_per_band` of them ahead of the ego, nearest first.
pub fn sections_from_masks(
    masks: &[BandMask],
    ego_s: f64,
    max_sections: usize,
) -> Vec<Section> {
    let mut sections = Vec::new();
    for mask in masks {
        let res = mask.resolution;
        let mut runs: Vec<(f64, f64)> = Vec::new();
        let mut start: Option<usize> = None;
        for (i, &f) in mask.free.iter().enumerate() {
            if f && start.is_none() {
                start = Some(i);
            }
            if !f {
                if let Some(s) = start.take() {
                    runs.push((
                        mask.s_origin + s as f64 * res,
                        mask.s_origin + i as f64 * res,
                    ));
                }
            }
        }
        if let Some(s) = start {
            runs.push((
                mask.s_origin + s as f64 * res,
                mask.s_origin + mask.free.len() as f64 * res,
            ));
        }
        let mut kept = 0usize;
        for (s_start, s_end) in runs {
            if s_end < ego_s {
                continue; // entirely behind the ego
            }
            if kept >= max_sections {
                break;
            }
            sections.push(Section {
                lane_id: mask.lane_id,
                band_index: mask.band_index,
                section_index: kept,
                s_start,
                s_end,
                d_center: mask.d_center,
                band_width: mask.band_width,
            });
            kept += 1;
        }
    }
    sections
}

/// Sections plus the adjacency derived from the connection rules: only
/// neighboring bands connect, and only with longitudinal overlap of at
/// least the vehicle width.
#[derive(Debug, Clone)]
pub struct SectionGraph {
    pub sections: Vec<Section>,
    pub adjacency: Vec<Vec<usize>>,
    pub root: usize,
}

pub fn connect_section_graph(
    sections: Vec<Section>,
    ego_s: f64,
    ego_d: f64,
    vehicle_width: f64,
) -> Result<SectionGraph> {
    let root = sections
        .iter()
        .position(|sec| {
            (ego_d - sec.d_center).abs() <= 0.5 * sec.band_width + 1e-9
                && ego_s >= sec.s_start - 1e-9
                && ego_s <= sec.s_end + 1e-9
        })
        .ok_or(PlannerError::RootSectionNotFound)?;

    let mut adjacency = vec![Vec::new(); sections.len()];
    for i in 0..sections.len() {
        for j in i + 1..sections.len() {
            let (a, b) = (&sections[i], &sections[j]);
            if a.band_index.abs_diff(b.band_index) != 1 {
                continue;
            }
            if a.overlap(b) < vehicle_width {
                continue;
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    Ok(SectionGraph {
        sections,
        adjacency,
        root,
    })
}

/// Outcome of the frontier expansion over the section graph.
#[derive(Debug, Clone)]
pub struct Expansion {
    /// Terminal section indices (frontier leftovers plus the root).
    pub terminals: Vec<usize>,
    /// Claiming parent of each visited section.
    pub parents: Vec<Option<usize>>,
    pub visited: Vec<bool>,
}

/// Frontier expansion from the root: each frontier section is replaced by
/// its unvisited neighbors (first visitor claims), sections with nothing
/// left to claim stay behind as terminals. The root is re-added when it
/// expanded away.
pub fn generate_end_sections(graph: &SectionGraph) -> Expansion {
    let n = graph.sections.len();
    let mut visited = vec![false; n];
    let mut parents = vec![None; n];
    visited[graph.root] = true;
    let mut frontier = vec![graph.root];

    loop {
        let mut next = Vec::new();
        let mut expanded = false;
        for &sc in &frontier {
            let mut children: Vec<usize> = graph.adjacency[sc]
                .iter()
                .copied()
                .filter(|&i| !visited[i])
                .collect();
            children.sort_by_key(|&i| {
                (graph.sections[i].band_index, graph.sections[i].section_index)
            });
            if children.is_empty() {
                next.push(sc);
            } else {
                for c in children {
                    visited[c] = true;
                    parents[c] = Some(sc);
                    next.push(c);
                }
                expanded = true;
            }
        }
        frontier = next;
        if !expanded {
            break;
        }
    }
    if !frontier.contains(&graph.root) {
        frontier.push(graph.root);
    }
    Expansion {
        terminals: frontier,
        parents,
        visited,
    }
}

/// A chain of sections from root to terminal with sampled lateral bounds.
#[derive(Debug, Clone)]
pub struct Corridor {
    pub section_chain: Vec<usize>,
    pub involved_lanes: Vec<i64>,
    /// (d_lower, d_upper) per longitudinal sample.
    pub bounds: Vec<(f64, f64)>,
    pub s_origin: f64,
    pub resolution: f64,
    pub effective_length: f64,
}

impl Corridor {
    pub fn terminal(&self) -> usize {
        *self.section_chain.last().unwrap()
    }

    /// Bounds at arc length `s`, if inside the sampled range.
    pub fn bounds_at(&self, s: f64) -> Option<(f64, f64)> {
        let i = ((s - self.s_origin) / self.resolution).floor();
        if i < 0.0 || i as usize >= self.bounds.len() {
            return None;
        }
        let b = self.bounds[i as usize];
        if b.0 > b.1 {
            return None;
        }
        Some(b)
    }

    /// Lane order along the chain, consecutive repeats removed.
    pub fn lane_pattern(&self, sections: &[Section]) -> Vec<i64> {
        let mut pattern: Vec<i64> = Vec::new();
        for &i in &self.section_chain {
            let lane = sections[i].lane_id;
            if pattern.last() != Some(&lane) {
                pattern.push(lane);
            }
        }
        pattern
    }

    /// Furthest sampled s at which the corridor covers `lane`.
    pub fn lane_coverage_end(&self, sections: &[Section], lane: i64) -> f64 {
        self.section_chain
            .iter()
            .map(|&i| &sections[i])
            .filter(|sec| sec.lane_id == lane)
            .map(|sec| sec.s_end)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Build one corridor per terminal: prune stub terminals into their
/// parents, walk the claim chain back to the root, fill lane coverage
/// from sibling sections and smooth the sampled bounds.
pub fn generate_corridors(
    graph: &SectionGraph,
    expansion: &Expansion,
    cfg: &PlannerConfig,
    lane_widths: &[(i64, f64)],
    ego_s: f64,
    s_range: (f64, f64),
    resolution: f64,
) -> Vec<Corridor> {
    let sections = &graph.sections;
    let mut terminal_set: Vec<usize> = Vec::new();
    for &t in &expansion.terminals {
        let mut t = t;
        if let Some(p) = expansion.parents[t] {
            let ratio = sections[t].length() / sections[p].length().max(1e-9);
            if ratio < cfg.leaf_prune_ratio {
                t = p;
            }
        }
        if !terminal_set.contains(&t) {
            terminal_set.push(t);
        }
    }

    let mut corridors = Vec::new();
    for &terminal in &terminal_set {
        let mut chain = vec![terminal];
        let mut cur = terminal;
        while let Some(p) = expansion.parents[cur] {
            chain.push(p);
            cur = p;
        }
        chain.reverse();

        let mut involved: Vec<i64> = chain.iter().map(|&i| sections[i].lane_id).collect();
        involved.sort_unstable();
        involved.dedup();

        // trim a terminal protruding past its parent
        let terminal_end = if chain.len() >= 2 {
            let parent = chain[chain.len() - 2];
            sections[terminal].s_end.min(sections[parent].s_end.max(
                sections[terminal].s_start + resolution,
            ))
        } else {
            sections[terminal].s_end
        };

        let s0 = s_range.0.max(0.0);
        let s1 = terminal_end.min(s_range.1);
        let n = (((s1 - s0) / resolution).floor() as usize).max(1);
        let w_d = involved
            .iter()
            .map(|id| {
                let w = lane_widths
                    .iter()
                    .find(|(lid, _)| lid == id)
                    .map(|&(_, w)| w)
                    .unwrap_or(3.5);
                cfg.min_drivable_width(w)
            })
            .fold(f64::INFINITY, f64::min);

        let mut raw = Vec::with_capacity(n);
        for i in 0..n {
            let s = s0 + (i as f64 + 0.5) * resolution;
            let covering: Vec<&Section> = chain
                .iter()
                .map(|&j| &sections[j])
                .filter(|sec| s >= sec.s_start && s <= sec.s_end)
                .collect();
            if covering.is_empty() {
                raw.push((1.0, -1.0)); // no coverage at this s
                continue;
            }
            let mut bands: Vec<usize> = covering.iter().map(|sec| sec.band_index).collect();
            bands.sort_unstable();
            // complement coverage from sibling sections in involved lanes
            let (mut lo, mut hi) = (bands[0], *bands.last().unwrap());
            loop {
                let grown = sections.iter().any(|sec| {
                    sec.band_index + 1 == lo
                        && involved.contains(&sec.lane_id)
                        && s >= sec.s_start
                        && s <= sec.s_end
                });
                if grown {
                    lo -= 1;
                } else {
                    break;
                }
            }
            loop {
                let grown = sections.iter().any(|sec| {
                    sec.band_index == hi + 1
                        && involved.contains(&sec.lane_id)
                        && s >= sec.s_start
                        && s <= sec.s_end
                });
                if grown {
                    hi += 1;
                } else {
                    break;
                }
            }
            let d_high = sections
                .iter()
                .filter(|sec| sec.band_index == lo)
                .map(|sec| sec.d_high())
                .next()
                .unwrap_or(covering[0].d_high());
            let d_low = sections
                .iter()
                .filter(|sec| sec.band_index == hi)
                .map(|sec| sec.d_low())
                .next()
                .unwrap_or(covering[0].d_low());
            raw.push((d_low + cfg.d_safe, d_high - cfg.d_safe));
        }

        let smoothed = smooth_bounds(&raw, cfg.bound_smoothing_window);

        // effective length: continuous drivable width from the ego forward
        let mut effective_end = s0;
        let ego_i = (((ego_s - s0) / resolution).floor().max(0.0)) as usize;
        for i in ego_i..n {
            let (lo, hi) = smoothed[i];
            if hi - lo < w_d - 2.0 * cfg.d_safe - 1e-9 {
                break;
            }
            effective_end = s0 + (i as f64 + 1.0) * resolution;
        }

        corridors.push(Corridor {
            section_chain: chain,
            involved_lanes: involved,
            bounds: smoothed,
            s_origin: s0,
            resolution,
            effective_length: (effective_end - ego_s).max(0.0),
        });
    }
    corridors
}

/// Moving-average smoothing, clamped so the bounds never leave the raw
/// free interval.
fn smooth_bounds(raw: &[(f64, f64)], window: usize) -> Vec<(f64, f64)> {
    let half = window / 2;
    let n = raw.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if raw[i].0 > raw[i].1 {
            out.push(raw[i]);
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let valid: Vec<(f64, f64)> =
            (lo..=hi).map(|j| raw[j]).filter(|b| b.0 <= b.1).collect();
        let m = valid.len() as f64;
        let avg_lo = valid.iter().map(|b| b.0).sum::<f64>() / m;
        let avg_hi = valid.iter().map(|b| b.1).sum::<f64>() / m;
        out.push((avg_lo.max(raw[i].0), avg_hi.min(raw[i].1)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(band: usize, lane: i64, d_center: f64, free: Vec<bool>) -> BandMask {
        BandMask {
            lane_id: lane,
            band_index: band,
            d_center,
            band_width: 0.5,
            s_origin: 0.0,
            resolution: 1.0,
            free,
        }
    }

    #[test]
    fn free_band_single_section() {
        let masks = vec![mask(0, 0, 0.0, vec![true; 10])];
        let sections = sections_from_masks(&masks, 2.0, 3);
        assert_eq!(sections.len(), 1);
        assert!((sections[0].s_start - 0.0).abs() < 1e-9);
        assert!((sections[0].s_end - 10.0).abs() < 1e-9);
    }

    #[test]
    fn blocked_band_yields_no_sections() {
        let masks = vec![mask(0, 0, 0.0, vec![false; 10])];
        assert!(sections_from_masks(&masks, 2.0, 3).is_empty());
    }

    #[test]
    fn behind_ego_runs_dropped_and_cap_applied() {
        let mut free = vec![true; 30];
        for i in [3, 8, 14, 20, 26] {
            free[i] = false;
        }
        let masks = vec![mask(0, 0, 0.0, free)];
        // runs: [0,3) [4,8) [9,14) [15,20) [21,26) [27,30); ego at 10
        let sections = sections_from_masks(&masks, 10.0, 3);
        assert_eq!(sections.len(), 3);
        assert!((sections[0].s_start - 9.0).abs() < 1e-9);
        assert_eq!(sections[0].section_index, 0);
        assert_eq!(sections[2].section_index, 2);
    }

    #[test]
    fn rule_one_overlap_threshold() {
        let a = Section {
            lane_id: 0,
            band_index: 0,
            section_index: 0,
            s_start: 0.0,
            s_end: 10.0,
            d_center: 0.25,
            band_width: 0.5,
        };
        let b = Section {
            lane_id: 0,
            band_index: 1,
            section_index: 0,
            s_start: 9.5,
            s_end: 20.0,
            d_center: -0.25,
            band_width: 0.5,
        };
        // 0.5 m overlap < 1.8 m vehicle width: no edge
        let g = connect_section_graph(vec![a.clone(), b.clone()], 5.0, 0.25, 1.8).unwrap();
        assert!(g.adjacency[0].is_empty());

        let b2 = Section { s_start: 2.0, ..b };
        let g2 = connect_section_graph(vec![a, b2], 5.0, 0.25, 1.8).unwrap();
        assert_eq!(g2.adjacency[0], vec![1]);
    }

    #[test]
    fn no_same_band_edges() {
        let mk = |band: usize, idx: usize, s0: f64, s1: f64| Section {
            lane_id: 0,
            band_index: band,
            section_index: idx,
            s_start: s0,
            s_end: s1,
            d_center: 0.0,
            band_width: 0.5,
        };
        let g = connect_section_graph(
            vec![mk(0, 0, 0.0, 10.0), mk(0, 1, 0.0, 10.0), mk(1, 0, 0.0, 10.0)],
            5.0,
            0.1,
            1.8,
        )
        .unwrap();
        assert!(!g.adjacency[0].contains(&1));
        assert!(g.adjacency[0].contains(&2));
    }

    #[test]
    fn root_inside_obstacle_is_error() {
        let masks = vec![mask(0, 0, 0.0, vec![false; 10])];
        let sections = sections_from_masks(&masks, 2.0, 3);
        let err = connect_section_graph(sections, 2.0, 0.0, 1.8).unwrap_err();
        assert!(matches!(err, PlannerError::RootSectionNotFound));
    }

    #[test]
    fn two_free_bands_expansion() {
        let masks = vec![
            mask(0, 0, 0.5, vec![true; 20]),
            mask(1, 0, 0.0, vec![true; 20]),
            mask(2, 0, -0.5, vec![true; 20]),
        ];
        let sections = sections_from_masks(&masks, 2.0, 3);
        let g = connect_section_graph(sections, 2.0, 0.0, 1.8).unwrap();
        let exp = generate_end_sections(&g);
        // middle root expands to both outer bands; they are the terminals
        let mut bands: Vec<usize> = exp
            .terminals
            .iter()
            .map(|&i| g.sections[i].band_index)
            .collect();
        bands.sort_unstable();
        assert_eq!(bands, vec![0, 1, 2]); // band 1 is the re-added root
        assert!(exp.visited.iter().all(|&v| v));
    }

    #[test]
    fn first_visitor_claims_shared_section() {
        // two parents reach the same far section; only one claims it
        let mk = |band: usize, idx: usize, lane: i64, s0: f64, s1: f64, d: f64| Section {
            lane_id: lane,
            band_index: band,
            section_index: idx,
            s_start: s0,
            s_end: s1,
            d_center: d,
            band_width: 0.5,
        };
        let sections = vec![
            mk(0, 0, 0, 0.0, 20.0, 0.75),  // root band
            mk(1, 0, 0, 0.0, 20.0, 0.25),  // claimed wave 1
            mk(2, 0, 0, 0.0, 20.0, -0.25), // claimed wave 2 by section 1
        ];
        let g = connect_section_graph(sections, 5.0, 0.75, 1.8).unwrap();
        let exp = generate_end_sections(&g);
        assert_eq!(exp.parents[2], Some(1));
        assert_eq!(exp.parents[1], Some(0));
    }
}
