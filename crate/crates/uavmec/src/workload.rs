//! MSA mobility (modified random waypoint) and task generation driven by
//! fixed or moving points of interest.
//!
//! Each MSA transits to a uniform-random destination, roams a bounded
//! sub-region around it for a random duration, pauses, and repeats. Task
//! generation distributes a fixed total rate across MSAs with weights
//! inverse to a power of their distances from the points of interest.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{project_to_region, Region};
use crate::Vec2;

/// POI weights diverge at zero distance; distances are floored here (m).
pub const POI_DISTANCE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    /// MSA speed range, m/s; one speed is drawn per MSA at initialization.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Edge length of the roaming sub-region box, m.
    pub subregion_side: f64,
    /// Roam duration range, s.
    pub roam_min: f64,
    pub roam_max: f64,
    /// Pause duration range, s.
    pub pause_min: f64,
    pub pause_max: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            speed_min: 10.0,
            speed_max: 20.0,
            subregion_side: 100.0,
            roam_min: 50.0,
            roam_max: 60.0,
            pause_min: 2.0,
            pause_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MsaPhase {
    /// Flying straight to a uniform-random destination in the region.
    TransitToSubregion,
    /// Random-waypoint roaming inside the sub-region box around `center`.
    RoamSubregion { center: Vec2, remaining_s: f64 },
    Paused { remaining_s: f64 },
}

/// Mobile sensing agent: position on the sensing plane and its task queue.
#[derive(Debug, Clone, PartialEq)]
pub struct MsaState {
    pub position: Vec2,
    /// Fixed per-agent speed, m/s.
    pub speed: f64,
    pub phase: MsaPhase,
    /// Unprocessed task bits.
    pub queue: f64,
    pub waypoint: Vec2,
}

fn uniform_point<R: Rng>(rng: &mut R, region: &Region) -> Vec2 {
    Vec2::new(
        rng.gen_range(region.x_min..region.x_max),
        rng.gen_range(region.y_min..region.y_max),
    )
}

/// Uniform point in the sub-region box around `center`, clipped to the region.
fn subregion_point<R: Rng>(rng: &mut R, center: Vec2, side: f64, region: &Region) -> Vec2 {
    let half = side / 2.0;
    let x_lo = (center.x - half).max(region.x_min);
    let x_hi = (center.x + half).min(region.x_max);
    let y_lo = (center.y - half).max(region.y_min);
    let y_hi = (center.y + half).min(region.y_max);
    Vec2::new(rng.gen_range(x_lo..x_hi), rng.gen_range(y_lo..y_hi))
}

/// New MSA at a uniform-random position, in transit to a uniform-random
/// destination, with a speed drawn once from the configured range.
pub fn init_msa<R: Rng>(rng: &mut R, region: &Region, params: &MobilityParams) -> MsaState {
    let position = uniform_point(rng, region);
    let speed = rng.gen_range(params.speed_min..params.speed_max);
    let waypoint = uniform_point(rng, region);
    MsaState {
        position,
        speed,
        phase: MsaPhase::TransitToSubregion,
        queue: 0.0,
        waypoint,
    }
}

/// Advance one MSA by `dt` seconds. Straight-line motion at the agent's fixed
/// speed; leftover time after a waypoint hit carries into the next leg so the
/// distance covered per moving step is exactly `speed * dt`.
pub fn step_msa<R: Rng>(
    state: &mut MsaState,
    dt: f64,
    region: &Region,
    rng: &mut R,
    params: &MobilityParams,
) {
    debug_assert!(dt > 0.0);
    if let MsaPhase::Paused { remaining_s } = state.phase {
        let left = remaining_s - dt;
        if left > 0.0 {
            state.phase = MsaPhase::Paused { remaining_s: left };
        } else {
            state.phase = MsaPhase::TransitToSubregion;
            state.waypoint = uniform_point(rng, region);
        }
        return;
    }

    let mut remaining = dt;
    // bounded in practice: waypoint legs are far longer than speed * dt
    let mut hops = 0;
    while remaining > 0.0 && hops < 1000 {
        let to_wp = state.waypoint - state.position;
        let dist = to_wp.norm();
        let step = state.speed * remaining;
        if step < dist {
            state.position += to_wp * (step / dist);
            break;
        }
        state.position = state.waypoint;
        remaining -= dist / state.speed;
        hops += 1;
        match state.phase {
            MsaPhase::TransitToSubregion => {
                let center = state.waypoint;
                state.phase = MsaPhase::RoamSubregion {
                    center,
                    remaining_s: rng.gen_range(params.roam_min..params.roam_max),
                };
                state.waypoint = subregion_point(rng, center, params.subregion_side, region);
            }
            MsaPhase::RoamSubregion { center, .. } => {
                state.waypoint = subregion_point(rng, center, params.subregion_side, region);
            }
            MsaPhase::Paused { .. } => unreachable!(),
        }
    }

    if let MsaPhase::RoamSubregion { remaining_s, .. } = state.phase {
        let left = remaining_s - dt;
        if left > 0.0 {
            if let MsaPhase::RoamSubregion { remaining_s, .. } = &mut state.phase {
                *remaining_s = left;
            }
        } else {
            state.phase = MsaPhase::Paused {
                remaining_s: rng.gen_range(params.pause_min..params.pause_max),
            };
        }
    }
}

/// Point-of-interest placement driving the task generation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PoiKind {
    Fixed { points: Vec<[f64; 2]> },
    Moving {
        start: [f64; 2],
        /// Jump length per period, m.
        hop: f64,
        /// Seconds between jumps.
        period: f64,
        /// Jump heading, radians.
        heading: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiScenario {
    pub kind: PoiKind,
    /// Inverse-distance weight exponent.
    pub exponent: f64,
    /// Total task generation rate across all MSAs, bits/s.
    pub total_rate: f64,
}

/// POI locations at time `t`. A moving POI jumps `hop` meters along its
/// heading every `period` seconds and is clamped to the region.
pub fn poi_positions(scenario: &PoiScenario, t: f64, region: &Region) -> Vec<Vec2> {
    match &scenario.kind {
        PoiKind::Fixed { points } => points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        PoiKind::Moving { start, hop, period, heading } => {
            let hops = (t / period).floor();
            let p = Vec2::new(start[0], start[1])
                + Vec2::new(heading.cos(), heading.sin()) * (hops * hop);
            vec![project_to_region(p, region)]
        }
    }
}

/// Per-MSA task bits generated over `dt` seconds at time `t`: the total rate
/// split proportionally to inverse-power distances from the POIs.
pub fn generate_tasks(
    msa_positions: &[Vec2],
    scenario: &PoiScenario,
    dt: f64,
    t: f64,
    region: &Region,
) -> Vec<f64> {
    let pois = poi_positions(scenario, t, region);
    let weights: Vec<f64> = msa_positions
        .iter()
        .map(|w| {
            pois.iter()
                .map(|p| (w - p).norm().max(POI_DISTANCE_FLOOR).powf(-scenario.exponent))
                .sum::<f64>()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let budget = scenario.total_rate * dt;
    weights.iter().map(|w| w / total * budget).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn region() -> Region {
        Region::square(1000.0, 50.0, 100.0).unwrap()
    }

    #[test]
    fn small_step_advances_along_segment() {
        let reg = region();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = MsaState {
            position: Vec2::new(100.0, 100.0),
            speed: 15.0,
            phase: MsaPhase::TransitToSubregion,
            queue: 0.0,
            waypoint: Vec2::new(700.0, 100.0),
        };
        step_msa(&mut s, 0.1, &reg, &mut rng, &MobilityParams::default());
        assert_relative_eq!(s.position.x, 101.5, max_relative = 1e-12);
        assert_eq!(s.position.y, 100.0);
    }

    #[test]
    fn paused_agent_stays_put() {
        let reg = region();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = MsaState {
            position: Vec2::new(100.0, 100.0),
            speed: 15.0,
            phase: MsaPhase::Paused { remaining_s: 3.0 },
            queue: 0.0,
            waypoint: Vec2::new(700.0, 100.0),
        };
        step_msa(&mut s, 0.1, &reg, &mut rng, &MobilityParams::default());
        assert_eq!(s.position, Vec2::new(100.0, 100.0));
        assert_eq!(s.phase, MsaPhase::Paused { remaining_s: 2.9 });
    }

    #[test]
    fn long_run_stays_in_region_at_exact_speed() {
        let reg = region();
        let params = MobilityParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut s = init_msa(&mut rng, &reg, &params);
        let dt = 0.1;
        let mut straight_steps = 0;
        for _ in 0..10_000 {
            let before = s.position;
            let waypoint_before = s.waypoint;
            let was_paused = matches!(s.phase, MsaPhase::Paused { .. });
            step_msa(&mut s, dt, &reg, &mut rng, &params);
            assert!(reg.contains(s.position), "left region at {:?}", s.position);
            let displacement = (s.position - before).norm();
            if was_paused {
                assert_eq!(displacement, 0.0);
                continue;
            }
            // the chord can only fall short of the path when the leg bends at
            // a waypoint mid-step; it can never exceed speed * dt
            assert!(displacement <= s.speed * dt + 1e-9);
            if s.waypoint == waypoint_before {
                // no waypoint hop: a single straight leg, so the displacement
                // is exactly speed * dt
                assert_relative_eq!(displacement, s.speed * dt, max_relative = 1e-9);
                straight_steps += 1;
            }
        }
        assert!(straight_steps > 5_000, "only {straight_steps} straight steps");
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let reg = region();
        let params = MobilityParams::default();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = init_msa(&mut rng, &reg, &params);
            for _ in 0..5000 {
                step_msa(&mut s, 0.1, &reg, &mut rng, &params);
            }
            s
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a, b);
    }

    #[test]
    fn moving_poi_steps_by_hops() {
        let reg = Region::square(5000.0, 50.0, 100.0).unwrap();
        let scenario = PoiScenario {
            kind: PoiKind::Moving {
                start: [4500.0, 4500.0],
                hop: 500.0,
                period: 15.0,
                heading: -std::f64::consts::FRAC_PI_4,
            },
            exponent: 1.5,
            total_rate: 6e6,
        };
        let p0 = poi_positions(&scenario, 10.0, &reg)[0];
        assert_eq!(p0, Vec2::new(4500.0, 4500.0));
        let p1 = poi_positions(&scenario, 15.0, &reg)[0];
        // 500 m at -45 degrees
        assert_relative_eq!(p1.x, 4500.0 + 353.5533905932738, max_relative = 1e-9);
        assert_relative_eq!(p1.y, 4500.0 - 353.5533905932738, max_relative = 1e-9);
        // piecewise constant between hops
        assert_eq!(poi_positions(&scenario, 29.9, &reg)[0], p1);
        // the second hop would land at x = 5207.1, outside the region, so x
        // clamps to the boundary while y keeps moving
        let p2 = poi_positions(&scenario, 30.0, &reg)[0];
        assert_eq!(p2.x, 5000.0);
        assert_relative_eq!(p2.y, 4500.0 - 2.0 * 353.5533905932738, max_relative = 1e-9);
    }

    #[test]
    fn moving_poi_is_clamped_to_region() {
        let reg = Region::square(1000.0, 50.0, 100.0).unwrap();
        let scenario = PoiScenario {
            kind: PoiKind::Moving {
                start: [900.0, 900.0],
                hop: 500.0,
                period: 15.0,
                heading: 0.0,
            },
            exponent: 1.5,
            total_rate: 1e6,
        };
        let p = poi_positions(&scenario, 100.0, &reg)[0];
        assert!(reg.contains(p));
    }

    #[test]
    fn task_shares_normalize_and_match_brute_force() {
        let reg = region();
        let scenario = PoiScenario {
            kind: PoiKind::Fixed { points: vec![[300.0, 300.0], [800.0, 700.0]] },
            exponent: 1.5,
            total_rate: 1e6,
        };
        // single MSA receives everything
        let one = generate_tasks(&[Vec2::new(10.0, 10.0)], &scenario, 0.1, 0.0, &reg);
        assert_relative_eq!(one[0], 1e5, max_relative = 1e-12);

        // equidistant MSAs from a single POI get equal shares
        let single = PoiScenario {
            kind: PoiKind::Fixed { points: vec![[500.0, 500.0]] },
            exponent: 1.5,
            total_rate: 1e6,
        };
        let eq = generate_tasks(
            &[Vec2::new(400.0, 500.0), Vec2::new(600.0, 500.0)],
            &single,
            0.1,
            0.0,
            &reg,
        );
        assert_relative_eq!(eq[0], eq[1], max_relative = 1e-12);

        // brute-force weights for 5 random placements
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        let positions: Vec<Vec2> = (0..5)
            .map(|_| Vec2::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)))
            .collect();
        let got = generate_tasks(&positions, &scenario, 0.2, 0.0, &reg);
        let pois = [Vec2::new(300.0, 300.0), Vec2::new(800.0, 700.0)];
        let w: Vec<f64> = positions
            .iter()
            .map(|p| pois.iter().map(|q| (p - q).norm().max(1.0).powf(-1.5)).sum::<f64>())
            .collect();
        let total: f64 = w.iter().sum();
        for (g, wi) in got.iter().zip(&w) {
            assert_relative_eq!(*g, wi / total * 1e6 * 0.2, max_relative = 1e-12);
        }
        let sum: f64 = got.iter().sum();
        assert_relative_eq!(sum, 1e6 * 0.2, max_relative = 1e-9);
    }
}
