//! Property-based invariants over random inputs.

use proptest::prelude::*;

use uavmec::channel::ChannelParams;
use uavmec::geometry::{
    compute_partition, project_to_region, region_volume, CommGraph, Grid, Region,
};
use uavmec::optimize::{build_weights, default_xi};
use uavmec::taskfield::{field_from_trajectories, GridField};
use uavmec::workload::{generate_tasks, PoiKind, PoiScenario};
use uavmec::Vec2;

fn region() -> Region {
    Region::square(1000.0, 50.0, 100.0).unwrap()
}

fn channel() -> ChannelParams {
    ChannelParams::from_db(0.2e6, 40.0, -50.0, -60.0).unwrap()
}

fn point() -> impl Strategy<Value = Vec2> {
    (-500.0..1500.0f64, -500.0..1500.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn inside_point() -> impl Strategy<Value = Vec2> {
    (0.0..1000.0f64, 0.0..1000.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #[test]
    fn projection_is_inside_idempotent_and_non_expansive(p in point(), q in point()) {
        let r = region();
        let pp = project_to_region(p, &r);
        let qq = project_to_region(q, &r);
        prop_assert!(r.contains(pp));
        prop_assert_eq!(project_to_region(pp, &r), pp);
        prop_assert!((pp - qq).norm() <= (p - q).norm() + 1e-12);
    }

    #[test]
    fn every_cell_gets_a_valid_owner_and_volumes_sum_to_total_mass(
        positions in proptest::collection::vec(inside_point(), 1..6),
        values in proptest::collection::vec(0.0..100.0f64, 100),
    ) {
        let grid = Grid::new(region(), 100.0).unwrap(); // 10x10
        let part = compute_partition(&positions, &grid, &channel()).unwrap();
        prop_assert!(part.owner.iter().all(|&m| m < positions.len()));
        let field = GridField::new(grid, values).unwrap();
        let sum: f64 = (0..positions.len())
            .map(|m| region_volume(&part, m, &field).unwrap())
            .sum();
        prop_assert!((sum - field.total_mass()).abs() <= 1e-9 * field.total_mass().max(1.0));
    }

    #[test]
    fn trajectory_field_conserves_mass(
        tasks in proptest::collection::vec(0.0..1e6f64, 5),
        visits in proptest::collection::vec(proptest::collection::vec(0usize..100, 1..30), 5),
    ) {
        let grid = Grid::new(region(), 100.0).unwrap();
        let field = field_from_trajectories(&visits, &tasks, &grid).unwrap();
        let total: f64 = tasks.iter().sum();
        prop_assert!((field.total_mass() / grid.cell_area() - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn task_generation_is_nonnegative_and_sums_to_the_budget(
        positions in proptest::collection::vec(inside_point(), 1..20),
        pois in proptest::collection::vec(inside_point(), 1..4),
        dt in 0.01..1.0f64,
    ) {
        let scenario = PoiScenario {
            kind: PoiKind::Fixed { points: pois.iter().map(|p| [p.x, p.y]).collect() },
            exponent: 1.5,
            total_rate: 1e6,
        };
        let tasks = generate_tasks(&positions, &scenario, dt, 0.0, &region());
        prop_assert!(tasks.iter().all(|t| *t >= 0.0));
        let total: f64 = tasks.iter().sum();
        prop_assert!((total - 1e6 * dt).abs() <= 1e-6 * 1e6 * dt);
    }

    #[test]
    fn weight_matrix_rows_sum_to_one(
        m in 2usize..8,
        extra in proptest::collection::vec((0usize..8, 0usize..8), 0..10),
    ) {
        // spanning path plus arbitrary extra edges
        let mut edges: std::collections::BTreeSet<(usize, usize)> =
            (0..m - 1).map(|i| (i, i + 1)).collect();
        for (a, b) in extra {
            let (a, b) = (a % m, b % m);
            if a < b {
                edges.insert((a, b));
            }
        }
        let graph = CommGraph::new(m, edges);
        let w = build_weights(&graph, default_xi(&graph)).unwrap();
        for row in 0..m {
            let sum: f64 = (0..m).map(|col| w.entry(row, col)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}
