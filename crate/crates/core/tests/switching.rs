mod common;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use gp_sparx::angle;
use gp_sparx::geometry::{build_wake_graph, WakeGeometryParams};
use gp_sparx::gp::{GpHyperparams, TrainedGp};
use gp_sparx::simulator::WindSample;
use gp_sparx::sparx::{build_design, GpSparxModel};
use gp_sparx::switching::{build_sectors, predict_switched, select_model, Mode, SectorTable};
use rand::Rng;

use common::rng;

/// Index of the circularly nearest training angle; an exact tie goes to the
/// angle lying counterclockwise of `phi`.
fn nearest_angle(angles: &[f64], phi: f64) -> usize {
    let dist = |a: f64| {
        let d = (a - phi).abs();
        d.min(TAU - d)
    };
    let mut best = 0;
    for k in 1..angles.len() {
        let (dk, db) = (dist(angles[k]), dist(angles[best]));
        if dk < db || (dk == db && angle::ccw_arc(phi, angles[k]) < PI) {
            best = k;
        }
    }
    best
}

fn grid_with_boundary_sides(table: &SectorTable) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..3600).map(|k| k as f64 * TAU / 3600.0).collect();
    for b in table.boundaries() {
        pts.extend([b, angle::normalize(b - 1e-9), angle::normalize(b + 1e-9)]);
    }
    pts
}

#[test]
fn compass_angles_match_nearest_angle_oracle() {
    let angles = [0.0, FRAC_PI_2, PI, 1.5 * PI];
    let table = build_sectors(&angles).unwrap();
    for phi in grid_with_boundary_sides(&table) {
        assert_eq!(
            select_model(&table, phi).unwrap(),
            nearest_angle(&angles, phi),
            "phi={phi}"
        );
    }
}

#[test]
fn irregular_angle_sets_match_nearest_angle_oracle() {
    let mut r = rng(31);
    for _ in 0..50 {
        let n = r.random_range(1..8);
        let angles: Vec<f64> = (0..n).map(|_| r.random_range(0.0..TAU)).collect();
        let table = build_sectors(&angles).unwrap();
        for phi in (0..3600).map(|k| k as f64 * TAU / 3600.0) {
            let near_boundary = table
                .boundaries()
                .iter()
                .any(|b| angle::circular_distance(*b, phi) < 1e-9);
            if !near_boundary {
                assert_eq!(
                    select_model(&table, phi).unwrap(),
                    nearest_angle(&angles, phi)
                );
            }
        }
    }
}

#[test]
fn boundaries_belong_to_the_sector_they_open() {
    let table = build_sectors(&[0.3, 2.0, 4.4]).unwrap();
    for s in table.sectors() {
        assert_eq!(select_model(&table, s.lower).unwrap(), s.model_index);
    }
}

#[test]
fn every_direction_has_exactly_one_sector() {
    let table = build_sectors(&[0.0, FRAC_PI_2, PI, 1.5 * PI]).unwrap();
    let mut r = rng(1);
    for _ in 0..1_000_000 {
        let phi = r.random_range(0.0..TAU);
        let hits = table.sectors().iter().filter(|s| s.contains(phi)).count();
        assert_eq!(hits, 1, "phi={phi}");
        assert!(select_model(&table, phi).is_ok());
    }
}

#[test]
fn rotating_angles_and_query_keeps_the_chosen_angle() {
    let mut r = rng(12);
    for _ in 0..2000 {
        let n = r.random_range(1..7);
        let angles: Vec<f64> = (0..n).map(|_| r.random_range(0.0..TAU)).collect();
        let delta = r.random_range(0.0..TAU);
        let phi = r.random_range(0.0..TAU);
        let base = build_sectors(&angles).unwrap();
        let turned: Vec<f64> = angles.iter().map(|a| angle::normalize(a + delta)).collect();
        let moved = build_sectors(&turned).unwrap();
        if base
            .boundaries()
            .iter()
            .any(|b| angle::circular_distance(*b, phi) < 1e-9)
        {
            continue;
        }
        let i = select_model(&base, phi).unwrap();
        let j = select_model(&moved, angle::normalize(phi + delta)).unwrap();
        assert_eq!(i, j, "angle {} vs {}", angles[i], turned[j]);
    }
}

#[test]
fn sweep_changes_model_once_per_boundary() {
    let mut r = rng(4);
    for n in 1..8 {
        let angles: Vec<f64> = (0..n)
            .map(|k| angle::normalize(k as f64 * TAU / n as f64 + r.random_range(-0.2..0.2)))
            .collect();
        let table = build_sectors(&angles).unwrap();
        let picks: Vec<usize> = (0..20_000)
            .map(|k| select_model(&table, k as f64 * TAU / 20_000.0).unwrap())
            .collect();
        let changes = (0..picks.len())
            .filter(|&k| picks[k] != picks[(k + 1) % picks.len()])
            .count();
        assert_eq!(changes, if n == 1 { 0 } else { n });
    }
}

fn cheap_model(phi: f64) -> GpSparxModel {
    let layout = common::grid_3x3();
    let geom = WakeGeometryParams::default();
    let graph = build_wake_graph(&layout, phi, &geom).unwrap();
    let config = gp_sparx::simulator::SimulationConfig {
        thrust_coefficient: 0.8,
        turbulence_noise_sd: 0.1,
        free_stream: gp_sparx::simulator::FreeStreamProcess::Constant { u_inf: 9.0, phi },
        rng_seed: 2,
        n_steps: 10,
    };
    let data = gp_sparx::simulator::simulate(&layout, &geom, &config).unwrap();
    let design = build_design(&data, &graph).unwrap();
    let gp = TrainedGp::condition(
        &design.inputs,
        &design.targets,
        GpHyperparams::new(1.0, vec![2.0; 10], 0.1).unwrap(),
        true,
    )
    .unwrap();
    GpSparxModel::new(phi, graph, gp).unwrap()
}

#[test]
fn single_model_switching_is_plain_prediction() {
    let model = cheap_model(0.0);
    let table = build_sectors(&[0.0]).unwrap();
    let measured = [9.0, 7.0, 6.5, 9.0, 7.0, 6.5, 9.0, 7.0, 6.5];
    for phi in [0.0, 1.0, 4.0] {
        let sample = WindSample {
            t: 0,
            u_inf: 9.0,
            phi,
        };
        let sw = predict_switched(
            std::slice::from_ref(&model),
            &table,
            &sample,
            Mode::Osa,
            Some(&measured),
        )
        .unwrap();
        assert_eq!(sw.model_index, 0);
        let direct = model.predict_osa(&sample, &measured).unwrap();
        assert_eq!((sw.mean, sw.variance), (direct.mean, direct.variance));
        let sw = predict_switched(
            std::slice::from_ref(&model),
            &table,
            &sample,
            Mode::Cascade,
            None,
        )
        .unwrap();
        assert_eq!(sw.mean, model.predict_cascade(&sample).unwrap().mean);
    }
}

#[test]
fn switching_dispatches_by_sector() {
    let angles = [0.0, PI];
    let models: Vec<_> = angles.iter().map(|&a| cheap_model(a)).collect();
    let table = build_sectors(&angles).unwrap();
    let measured = [9.0; 9];
    let at = |phi: f64| WindSample {
        t: 0,
        u_inf: 9.0,
        phi,
    };
    let just_below = predict_switched(
        &models,
        &table,
        &at(FRAC_PI_2 - 1e-6),
        Mode::Osa,
        Some(&measured),
    )
    .unwrap();
    let just_above = predict_switched(
        &models,
        &table,
        &at(FRAC_PI_2 + 1e-6),
        Mode::Osa,
        Some(&measured),
    )
    .unwrap();
    assert_eq!(just_below.model_index, 0);
    assert_eq!(just_above.model_index, 1);
    assert!(predict_switched(&models, &table, &at(0.0), Mode::Osa, None).is_err());
    assert!(predict_switched(&models[..1], &table, &at(0.0), Mode::Cascade, None).is_err());
}
