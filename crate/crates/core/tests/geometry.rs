use proptest::prelude::*;

use chaos_cover::game::{CoverTracker, PairedStream, DEFAULT_STEP_CAP};
use chaos_cover::harness::net_for_delta;
use chaos_cover::chain::Chain;
use chaos_cover::ifs::{IfsSystem, Similitude};
use chaos_cover::partition::Partition;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tracker_matches_brute_force(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..200),
        queries in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5), 1..20),
        radius in 0.01f64..0.8,
    ) {
        let flat: Vec<f64> = pts.iter().flat_map(|&(a, b, c)| [a, b, c]).collect();
        let mut tracker = CoverTracker::from_points(&flat, 3, radius);
        let mut expect = vec![false; pts.len()];
        for &(x, y, z) in &queries {
            tracker.mark(&[x, y, z]);
            for (k, &(a, b, c)) in pts.iter().enumerate() {
                let d2 = (a - x).powi(2) + (b - y).powi(2) + (c - z).powi(2);
                expect[k] |= d2 <= radius * radius;
            }
            prop_assert_eq!(tracker.covered_flags(), &expect[..]);
            prop_assert_eq!(tracker.uncovered_count(), expect.iter().filter(|e| !**e).count());
        }
    }
}

#[test]
fn sandwich_on_a_rotated_system() {
    // Sierpinski-like triangle whose third map also rotates by 120 degrees.
    let (c, s) = ((2.0 * std::f64::consts::PI / 3.0).cos(), (2.0 * std::f64::consts::PI / 3.0).sin());
    let h = 3f64.sqrt() / 4.0;
    let maps = vec![
        Similitude::homothety(0.5, vec![0.0, 0.0]).unwrap(),
        Similitude::homothety(0.5, vec![0.5, 0.0]).unwrap(),
        // Rotation about the centre of the sub-triangle keeps the image in place.
        {
            let centre = [0.5, 3f64.sqrt() / 6.0];
            let rot = vec![c, -s, s, c];
            let rc = [c * centre[0] - s * centre[1], s * centre[0] + c * centre[1]];
            let t = [0.5 * (centre[0] - rc[0]) + 0.25, 0.5 * (centre[1] - rc[1]) + h];
            Similitude::new(0.5, rot, t.to_vec()).unwrap()
        },
    ];
    let sys = IfsSystem::new(maps, vec![1.0 / 3.0; 3])
        .unwrap()
        .with_osc_witness(vec![0.5, h], 3f64.sqrt() / 8.0)
        .unwrap();
    let delta = 0.125;
    let chain = Chain::build(Partition::build(&sys, delta).unwrap()).unwrap();
    let v0 = sys.default_base_point();
    let diam = sys.diameter_estimate(7).unwrap().estimate;
    let (coarse_r, fine_r) = (2.0 * diam * delta, sys.kappa().unwrap() * delta);
    let coarse = net_for_delta(&sys, coarse_r, 0.25, &v0).unwrap();
    let fine = net_for_delta(&sys, fine_r, 0.25, &v0).unwrap();
    let paired = PairedStream {
        system: &sys,
        chain: &chain,
        start_state: chain.partition().constant_word(0),
        v0,
        coarse: (&coarse, coarse_r),
        fine: (&fine, fine_r),
    };
    for seed in 0..30 {
        let o = paired.run(seed, DEFAULT_STEP_CAP).unwrap();
        assert!(o.sandwich_holds(), "{o:?}");
    }
}
