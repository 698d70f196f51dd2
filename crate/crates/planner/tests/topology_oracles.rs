//! Randomized cross-checks of the two topology searches against
//! independent brute-force oracles.

use std::collections::VecDeque;

use planner::corridor::{self, BandMask};
use planner::route::{self, Route, TrajectoryProfile};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random band grid with at most two blocked intervals per band (hence at
/// most three free runs) and a free root cell.
fn random_masks(rng: &mut ChaCha8Rng) -> (Vec<BandMask>, f64, f64) {
    let bands = rng.gen_range(3..=30);
    let cells = rng.gen_range(10..=30usize);
    let ego_cell = rng.gen_range(0..cells / 2);
    let ego_band = rng.gen_range(0..bands);
    let mut masks = Vec::new();
    for b in 0..bands {
        let mut free = vec![true; cells];
        for _ in 0..rng.gen_range(0..=2) {
            let start = rng.gen_range(0..cells);
            let len = rng.gen_range(1..=cells / 3 + 1);
            for c in start..(start + len).min(cells) {
                free[c] = false;
            }
        }
        if b == ego_band {
            free[ego_cell] = true;
        }
        masks.push(BandMask {
            lane_id: (b / 5) as i64,
            band_index: b,
            d_center: -(b as f64) * 1.0,
            band_width: 1.0,
            s_origin: 0.0,
            resolution: 1.0,
            free,
        });
    }
    let ego_s = ego_cell as f64 + 0.5;
    let ego_d = -(ego_band as f64);
    (masks, ego_s, ego_d)
}

#[test]
fn expansion_reach_matches_bfs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let (masks, ego_s, ego_d) = random_masks(&mut rng);
        let sections = corridor::sections_from_masks(&masks, ego_s, 3);
        let graph = match corridor::connect_section_graph(sections, ego_s, ego_d, 1.5) {
            Ok(g) => g,
            Err(_) => continue, // ego run dropped as behind: not a valid case
        };
        let expansion = corridor::generate_end_sections(&graph);

        // plain BFS reachability oracle over the same adjacency
        let mut reach = vec![false; graph.sections.len()];
        let mut queue = VecDeque::from([graph.root]);
        reach[graph.root] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &graph.adjacency[i] {
                if !reach[j] {
                    reach[j] = true;
                    queue.push_back(j);
                }
            }
        }
        assert_eq!(
            expansion.visited, reach,
            "case {case}: expansion reach differs from BFS"
        );

        // structural checks: parents form a tree over visited sections,
        // terminals are visited and unique
        for (i, p) in expansion.parents.iter().enumerate() {
            if let Some(p) = p {
                assert!(expansion.visited[i] && expansion.visited[*p]);
                assert_eq!(
                    graph.sections[i]
                        .band_index
                        .abs_diff(graph.sections[*p].band_index),
                    1
                );
            }
        }
        let mut terms = expansion.terminals.clone();
        terms.sort_unstable();
        let before = terms.len();
        terms.dedup();
        assert_eq!(before, terms.len(), "case {case}: duplicate terminals");
        for &t in &terms {
            assert!(expansion.visited[t]);
        }
        assert!(expansion.terminals.contains(&graph.root));
    }
}

fn overlapping(a: &TrajectoryProfile, b: &TrajectoryProfile) -> bool {
    (0..a.rear.len()).any(|k| {
        a.exists(k)
            && b.exists(k)
            && a.front[k].min(b.front[k]) >= a.rear[k].max(b.rear[k]) - 1e-9
    })
}

fn random_profiles(rng: &mut ChaCha8Rng) -> (Vec<TrajectoryProfile>, usize) {
    let lanes = rng.gen_range(1..=4i64);
    let n = 12;
    let mut profiles = Vec::new();
    for lane in 0..lanes {
        for zone in 0..rng.gen_range(1..=3usize) {
            let lo = rng.gen_range(0.0..40.0);
            let h = rng.gen_range(5.0..30.0);
            let slope = rng.gen_range(0.0..3.0);
            let rear: Vec<f64> = (0..=n).map(|k| lo + slope * k as f64).collect();
            let front: Vec<f64> = rear.iter().map(|r| r + h).collect();
            profiles.push(TrajectoryProfile {
                lane_id: lane,
                zone_index: zone,
                rear,
                front,
                contains_ego: false,
                constrained: false,
            });
        }
    }
    let ego = rng.gen_range(0..profiles.len());
    profiles[ego].contains_ego = true;
    (profiles, ego)
}

/// Every chain of up to three profiles starting at the ego profile,
/// stepping to adjacent lanes with s-t overlap, no profile repeated.
fn enumerate_routes(profiles: &[TrajectoryProfile], ego: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![ego]];
    let mut stack = vec![vec![ego]];
    while let Some(chain) = stack.pop() {
        if chain.len() == 3 {
            continue;
        }
        let end = *chain.last().unwrap();
        for i in 0..profiles.len() {
            if chain.contains(&i) {
                continue;
            }
            if (profiles[i].lane_id - profiles[end].lane_id).abs() != 1 {
                continue;
            }
            if !overlapping(&profiles[end], &profiles[i]) {
                continue;
            }
            let mut grown = chain.clone();
            grown.push(i);
            out.push(grown.clone());
            stack.push(grown);
        }
    }
    out
}

#[test]
fn route_set_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..100 {
        let (profiles, ego) = random_profiles(&mut rng);
        let routes = route::connect_profiles(&profiles, ego);
        let oracle = enumerate_routes(&profiles, ego);

        let mut got: Vec<Vec<usize>> = routes
            .iter()
            .map(|r: &Route| r.profile_chain.clone())
            .collect();
        let mut want = oracle;
        got.sort();
        want.sort();
        assert_eq!(got, want, "case {case}: route sets differ");
    }
}
