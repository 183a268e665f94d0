use coorbital::cartography::*;
use coorbital::flow::{HillFlow, Tolerance};
use coorbital::hill::{kepler_radius, mutual_inclination, osculating, to_cartesian, MassConfig};
use coorbital::orbit::{continue_family, Origin, Schedule, MEAN_MOTION};
use proptest::prelude::*;

fn small_grid(periods: f64) -> GridSpec {
    GridSpec {
        axis1: Axis::new(AxisKind::DeltaLambda, 40.0, 200.0, 3),
        axis2: Axis::new(AxisKind::Inclination, 0.0, 80.0, 2),
        periods,
        masses: MassConfig::equal_planets(1e-3).unwrap(),
        tolerance: MAP_TOLERANCE,
    }
}

fn csv(cells: &[MapCell]) -> String {
    let mut buf = Vec::new();
    write_map_csv(&mut buf, cells).unwrap();
    String::from_utf8(buf).unwrap()
}

fn cell(dlambda: f64, j0: f64, periods: f64) -> Track {
    let m = MassConfig::equal_planets(1e-3).unwrap();
    let a = kepler_radius(&m, MEAN_MOTION);
    let (x, c) = circular_state(&m, a, dlambda.to_radians(), j0.to_radians());
    track(&HillFlow::new(&m), &x, c, periods, a, &Tolerance::uniform(MAP_TOLERANCE).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circular_state_has_requested_elements(dl in 0.0f64..std::f64::consts::TAU, j0 in 0.0f64..3.0, ratio in 0.1f64..10.0) {
        let m = MassConfig::with_ratio(2e-3, ratio).unwrap();
        let a = kepler_radius(&m, MEAN_MOTION);
        let (x, c) = circular_state(&m, a, dl, j0);
        for j in [1, 2] {
            let o = osculating(&x, &m, j);
            prop_assert!(o.e < 1e-7);
            prop_assert!((o.a - a).abs() < 1e-12 * a);
        }
        prop_assert!((mutual_inclination(&x, c).unwrap() - j0).abs() < 1e-7);
        let p = to_cartesian(&x, c, 0.0).unwrap().pos;
        // planet 2 on the +x node line
        prop_assert!(p[1][1].abs() < 1e-12 && p[1][2].abs() < 1e-12 && p[1][0] > 0.0);
        prop_assert!((p[0][0] / a - dl.cos()).abs() < 1e-12);
    }
}

#[test]
fn axis_values_include_both_ends() {
    let v = Axis::new(AxisKind::Inclination, 0.0, 112.5, 46).values();
    assert_eq!(v.len(), 46);
    assert_eq!(v[0], 0.0);
    assert_eq!(v[45], 112.5);
    assert!((v[22] - 55.0).abs() < 1e-12 && (v[30] - 75.0).abs() < 1e-12);
    let d = GridSpec::desk(MassConfig::equal_planets(1e-3).unwrap());
    let dl = d.axis1.values();
    assert!((dl[10] - 60.0).abs() < 1e-12 && (dl[50] - 300.0).abs() < 1e-12);
    assert_eq!(AxisKind::parse("J0").unwrap(), AxisKind::Inclination);
    assert!(AxisKind::parse("mass").is_err());
}

#[test]
fn invalid_grids_are_rejected() {
    let mut g = small_grid(10.0);
    g.axis1.count = 1;
    assert!(run_map(&g).is_err());
    let mut g = small_grid(0.0);
    assert!(g.validate().is_err());
    g.periods = 10.0;
    g.axis2.kind = AxisKind::DeltaLambda;
    assert!(g.validate().is_err());
    let mut g = small_grid(10.0);
    g.axis2 = Axis::new(AxisKind::Eps, 0.0, 0.1, 2);
    assert!(g.validate().is_err());
    let mut g = small_grid(10.0);
    g.tolerance = 1e-3;
    assert!(g.validate().is_err());
}

#[test]
fn tadpole_cell_stays_nearly_circular() {
    let t = cell(60.0, 10.0, 2000.0);
    assert_eq!(t.outcome, Outcome::Bounded);
    assert!(t.max_ecc < 0.05, "{t:?}");
}

#[test]
fn euler_neighbourhood_is_lost() {
    let t = cell(180.0, 0.0, 2000.0);
    assert!(t.outcome != Outcome::Bounded || t.max_ecc > 0.05, "{t:?}");
}

#[test]
fn high_inclination_tadpole_is_not_stable() {
    let t = cell(60.0, 75.0, 2000.0);
    assert!(t.outcome != Outcome::Bounded || t.max_ecc >= 0.05, "{t:?}");
}

#[test]
fn overlapping_planets_collide_at_once() {
    let t = cell(1e-2, 0.0, 10.0);
    assert_eq!(t.outcome, Outcome::Collided);
    assert_eq!(t.time_of_loss, Some(0.0));
}

#[test]
fn map_output_is_independent_of_worker_count() {
    let g = small_grid(40.0);
    let run = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| run_map(&g).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(csv(&one), csv(&three));
    assert_eq!(one.len(), 6);
    assert!(one.iter().enumerate().all(|(k, c)| c.index == k));
    // axis1 varies fastest
    assert_eq!((one[1].axis1, one[1].axis2), (120.0, 0.0));
    assert_eq!((one[3].axis1, one[3].axis2), (40.0, 80.0));
}

#[test]
fn longer_runs_never_lower_the_eccentricity() {
    let short = run_map(&small_grid(30.0)).unwrap();
    let long = run_map(&small_grid(60.0)).unwrap();
    for (a, b) in short.iter().zip(&long) {
        assert!(b.max_ecc >= a.max_ecc, "{a:?} vs {b:?}");
    }
}

#[test]
fn map_csv_has_the_documented_columns() {
    let cells = run_map(&small_grid(5.0)).unwrap();
    let text = csv(&cells);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "axis1,axis2,max_ecc,outcome,time_of_loss");
    assert_eq!(lines.len(), 7);
    for (l, c) in lines[1..].iter().zip(&cells) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 5);
        assert_eq!(f[3], c.outcome.label());
        assert_eq!(f[4].is_empty(), c.time_of_loss.is_none());
        assert_eq!(f[2].parse::<f64>().unwrap(), c.max_ecc);
    }
}

#[test]
fn eps_axis_rescales_the_planets() {
    let g = GridSpec {
        axis1: Axis::new(AxisKind::Eps, 1e-4, 1e-2, 2),
        axis2: Axis::new(AxisKind::DeltaLambda, 60.0, 90.0, 2),
        periods: 20.0,
        masses: MassConfig::equal_planets(1e-3).unwrap(),
        tolerance: MAP_TOLERANCE,
    };
    let cells = run_map(&g).unwrap();
    // the heavier pair perturbs the orbits more
    assert!(cells[1].max_ecc > cells[0].max_ecc);
    assert!(cells[3].max_ecc > cells[2].max_ecc);
    let m = scaled_masses(&MassConfig::with_ratio(2e-3, 4.0).unwrap(), 0.01).unwrap();
    assert!((m.m1 + m.m2 - 0.02).abs() < 1e-15 && (m.m1 / m.m2 - 4.0).abs() < 1e-12);
}

#[test]
fn stable_family_members_sit_in_bounded_cells() {
    for (eps, js) in [(1e-3, [20.0, 50.0]), (0.02, [30.0, 50.0]), (0.04, [55.0, 57.0])] {
        let m = MassConfig::equal_planets(eps).unwrap();
        let branch = continue_family(Origin::L4, &m, &Schedule::new(0.0, js[1], 1.0)).unwrap();
        let flow = HillFlow::new(&m);
        let a = kepler_radius(&m, MEAN_MOTION);
        for o in branch.orbits.iter().filter(|o| js.iter().any(|j| (o.j_p_deg() - j).abs() < 1e-9)) {
            assert!(o.stable, "ε = {eps}, J = {}", o.j_p_deg());
            let t = track(&flow, &o.x0, o.c, 2000.0, a, &Tolerance::uniform(MAP_TOLERANCE).unwrap());
            assert!(t.outcome == Outcome::Bounded && t.max_ecc < BOUNDED_ECC, "ε = {eps}: {t:?}");
        }
    }
}

#[test]
fn chimney_onset_and_windows() {
    let spec = ChimneySpec {
        eps: vec![0.015, 0.025, 0.04, 0.06],
        j_end_deg: 70.0,
        j_step_deg: 0.5,
        refine_tol_deg: 1e-2,
        onset_tol: 1e-4,
    };
    let scan = chimney_scan(&spec).unwrap();
    assert!(scan.failures.is_empty(), "{:?}", scan.failures);
    let onset = scan.onset_eps.unwrap();
    assert!((onset - 0.0191).abs() < 2e-3, "{onset}");
    let w = scan.windows_at(0.015);
    assert_eq!(w.len(), 1);
    assert_eq!(w[0].j_lower_deg, 0.0);
    assert!((w[0].j_upper_deg - 60.0).abs() < 2.0);
    let w = scan.windows_at(0.04);
    assert_eq!(w.len(), 1);
    assert!(w[0].j_lower_deg > 0.0 && w[0].j_upper_deg < 70.0);
    assert!(scan.windows_at(0.06).is_empty());
    // rows at J = 0 follow the planar classification
    let planar: Vec<bool> = scan.rows.iter().filter(|r| r.j_deg == 0.0).map(|r| r.stable).collect();
    assert_eq!(planar, vec![true, false, false, false]);

    let mut buf = Vec::new();
    scan.write_rows_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("eps,J_deg,stable\n"));
    assert_eq!(text.lines().count(), scan.rows.len() + 1);
    let mut buf = Vec::new();
    scan.write_windows_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("eps,J_lower_deg,J_upper_deg\n"));
    assert_eq!(text.lines().count(), scan.windows.len() + 1);
}

#[test]
fn chimney_rejects_empty_ranges() {
    let spec = ChimneySpec {
        eps: vec![],
        j_end_deg: 10.0,
        j_step_deg: 0.5,
        refine_tol_deg: 1e-2,
        onset_tol: 1e-4,
    };
    assert!(chimney_scan(&spec).is_err());
    let d = ChimneySpec::desk(0.005, 0.06, 0.005, 90.0);
    assert_eq!(d.eps.len(), 12);
    assert!((d.eps[11] - 0.06).abs() < 1e-12);
}

#[test]
fn slab_rows_follow_the_family() {
    let spec = SlabSpec {
        eps: 0.02,
        j_end_deg: 40.0,
        j_step_deg: 20.0,
        offset_step_deg: 0.5,
        offset_max: 2,
        periods: 100.0,
        tolerance: MAP_TOLERANCE,
    };
    let cells = family_slab_scan(&spec).unwrap();
    assert_eq!(cells.len(), 3 * 5);
    for row in cells.chunks(5) {
        assert!(row.iter().all(|c| c.axis1 == row[0].axis1));
        // w2 grows along the row, so w1 - w2 shrinks
        for w in row.windows(2) {
            let d = (w[0].axis2 - w[1].axis2 + 180.0).rem_euclid(360.0) - 180.0;
            assert!((d - 0.5).abs() < 1e-9);
        }
        assert_eq!(row[2].outcome, Outcome::Bounded, "{:?}", row[2]);
    }
    assert!((cells[5].axis1 - 20.0).abs() < 1e-9);
    let mut bad = spec.clone();
    bad.periods = 0.0;
    assert!(family_slab_scan(&bad).is_err());
    assert_eq!(SlabSpec::desk(0.03).offset_max, 40);
}
