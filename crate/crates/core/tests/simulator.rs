mod common;

use gp_sparx::geometry::{build_wake_graph, WakeGeometryParams};
use gp_sparx::simulator::{
    combine_deficits, simulate, wake_speeds, FreeStreamProcess, SimulationConfig,
    MAX_COMBINED_DEFICIT,
};
use proptest::prelude::*;

use common::{random_layout, rng};

/// Speeds from the Jensen top-hat model written out longhand.
fn reference_speeds(
    layout: &gp_sparx::geometry::FarmLayout,
    geom: &WakeGeometryParams,
    ct: f64,
    u_inf: f64,
    phi: f64,
) -> Vec<f64> {
    let r0 = layout.rotor_radius();
    let (ux, uy) = (phi.cos(), phi.sin());
    layout
        .turbines
        .iter()
        .map(|b| {
            let mut sum_sq = 0.0;
            for a in &layout.turbines {
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let d = dx * ux + dy * uy;
                let c = -dx * uy + dy * ux;
                if a.id != b.id
                    && d > geom.near_wake_offset
                    && d <= geom.max_wake_length
                    && c.abs() <= r0 + geom.expansion_coefficient * d
                {
                    let def = (1.0 - (1.0 - ct).sqrt())
                        / (1.0 + geom.expansion_coefficient * d / r0).powi(2);
                    sum_sq += def * def;
                }
            }
            u_inf * (1.0 - sum_sq.sqrt().min(0.8))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn noise_free_speeds_match_longhand_model(seed in any::<u64>(), n in 1usize..15, ct in 0.05f64..0.95, u in 0.0f64..25.0) {
        let mut r = rng(seed);
        let layout = random_layout(&mut r, n, 1500.0);
        let phi = common::random_phi(&mut r);
        let geom = WakeGeometryParams::default();
        let got = wake_speeds(&layout, &geom, ct, u, phi).unwrap();
        let want = reference_speeds(&layout, &geom, ct, u, phi);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn unwaked_turbines_see_the_free_stream(seed in any::<u64>(), n in 1usize..12, u in 0.5f64..25.0) {
        let mut r = rng(seed);
        let layout = random_layout(&mut r, n, 2000.0);
        let phi = common::random_phi(&mut r);
        let geom = WakeGeometryParams::default();
        let g = build_wake_graph(&layout, phi, &geom).unwrap();
        let speeds = wake_speeds(&layout, &geom, 0.8, u, phi).unwrap();
        for s in 1..=n {
            prop_assert!(speeds[s - 1] <= u);
            if g.upstream(s).next().is_none() {
                prop_assert_eq!(speeds[s - 1], u);
            } else {
                prop_assert!(speeds[s - 1] < u);
            }
        }
    }

    #[test]
    fn combined_deficit_is_capped(defs in proptest::collection::vec(0.0f64..1.0, 0..20)) {
        let c = combine_deficits(&defs);
        prop_assert!((0.0..=MAX_COMBINED_DEFICIT).contains(&c));
    }
}

#[test]
fn packed_farm_never_loses_more_than_the_cap() {
    // tight rows with a high thrust coefficient push the raw sum past the cap
    let mut r = rng(5);
    let geom = WakeGeometryParams {
        expansion_coefficient: 0.02,
        ..Default::default()
    };
    let mut capped = 0;
    for _ in 0..200 {
        let layout = random_layout(&mut r, 25, 900.0);
        let phi = common::random_phi(&mut r);
        let speeds = wake_speeds(&layout, &geom, 0.99, 10.0, phi).unwrap();
        for u in speeds {
            assert!(u >= 10.0 * (1.0 - MAX_COMBINED_DEFICIT) - 1e-12);
            if (u - 2.0).abs() < 1e-12 {
                capped += 1;
            }
        }
    }
    assert!(capped > 0, "the draws never reached the cap");
}

#[test]
fn csv_bytes_are_reproducible() {
    let layout = common::grid_3x3();
    let config = SimulationConfig {
        thrust_coefficient: 0.8,
        turbulence_noise_sd: 0.2,
        free_stream: FreeStreamProcess::RandomWalk {
            phi_start: 1.0,
            phi_step_sd: 0.05,
            u_start: 9.0,
            u_step_sd: 0.5,
            u_min: 3.0,
            u_max: 20.0,
        },
        rng_seed: 99,
        n_steps: 300,
    };
    let a = simulate(&layout, &WakeGeometryParams::default(), &config)
        .unwrap()
        .to_csv();
    let b = simulate(&layout, &WakeGeometryParams::default(), &config)
        .unwrap()
        .to_csv();
    assert_eq!(a, b);
    let mut other = config.clone();
    other.rng_seed = 100;
    assert_ne!(
        a,
        simulate(&layout, &WakeGeometryParams::default(), &other)
            .unwrap()
            .to_csv()
    );
}

#[test]
fn sweep_covers_the_whole_circle() {
    let layout = common::grid_3x3();
    let config = SimulationConfig {
        thrust_coefficient: 0.8,
        turbulence_noise_sd: 0.0,
        free_stream: FreeStreamProcess::Sweep {
            phi_start: 0.0,
            u_mean: 10.0,
            u_amplitude: 4.0,
            u_period: 97.0,
        },
        rng_seed: 1,
        n_steps: 1440,
    };
    let data = simulate(&layout, &WakeGeometryParams::default(), &config).unwrap();
    let phis: Vec<f64> = data.records.iter().map(|r| r.sample.phi).collect();
    assert_eq!(phis[0], 0.0);
    assert!(phis.windows(2).all(|w| w[1] > w[0]));
    assert!(*phis.last().unwrap() < std::f64::consts::TAU);
    assert!(*phis.last().unwrap() > std::f64::consts::TAU * (1.0 - 2.0 / 1440.0));
}
