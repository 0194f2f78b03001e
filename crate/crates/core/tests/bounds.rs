//! Throughput and delay bounds over many random demand matrices.

mod common;

use subgen_core::idnc::{build_graph, solve_exact};
use subgen_core::model::demand_profile;
use subgen_core::partition::{analytic_metrics, partition_classic, partition_direct, partition_smart, PartitionMode};

#[test]
fn framework_bounds_hold_on_random_instances() {
    let mut rng = common::rng(31);
    let mut checked = 0;
    for _ in 0..10_000 {
        let sfm = common::random_sfm(&mut rng, 15, 15);
        let sol = solve_exact(&build_graph(&sfm), &sfm).unwrap();
        let u_idnc = sol.cardinality();
        let u_rlnc = demand_profile(&sfm).w_max;
        for g in 1..=u_idnc {
            for p in [partition_direct(&sol, g, &sfm).unwrap(), partition_smart(&sol, g, &sfm).unwrap()] {
                assert_eq!(p.mode, PartitionMode::Framework);
                let m = analytic_metrics(&p, &sfm);
                assert!(u_rlnc <= m.u_g && m.u_g <= u_idnc, "{sfm}g={g}");
                if g <= 2 {
                    assert_eq!(m.u_g, u_idnc, "{sfm}g={g}");
                }
                if g == u_idnc {
                    assert_eq!(m.u_g, u_rlnc, "{sfm}g={g}");
                }
                for s in &p.subgens {
                    if g >= 2 && s.sets.len() == g {
                        assert!((2..=g).contains(&s.w_max), "{sfm}g={g}");
                    }
                    assert!(s.w_max >= 1 && s.w_max <= s.sets.len());
                }
                let bound = (g + u_idnc) as f64 / 2.0;
                assert!(m.d_g <= bound + 1e-12, "{sfm}g={g}: D={} bound={bound}", m.d_g);
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn classic_lower_bound_holds() {
    let mut rng = common::rng(32);
    for _ in 0..2_000 {
        let sfm = common::random_sfm(&mut rng, 15, 15);
        let w_max = demand_profile(&sfm).w_max;
        for g in 1..=sfm.n_packets() {
            let p = partition_classic(&sfm, g).unwrap();
            let m = analytic_metrics(&p, &sfm);
            assert!(m.u_g >= w_max.max(p.n_subgens()));
            assert_eq!(p.n_subgens(), sfm.n_packets().div_ceil(g));
        }
    }
}
