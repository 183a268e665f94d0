use std::f64::consts::PI;

use coorbital::averaged::*;
use coorbital::hill::MassConfig;
use coorbital::orbit::{continue_family, Origin, Schedule};
use coorbital::Error;
use proptest::prelude::*;

fn planar_f1(z: f64) -> f64 {
    z.cos() - 1.0 / (2.0 * (z / 2.0).sin().abs())
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

fn l4(j_deg: f64) -> AveragedPoint {
    solve_vfl(s0_of(j_deg.to_radians()), Branch::VflL4, None).unwrap()
}

proptest! {
    #[test]
    fn u_matches_sine_form(z1 in 0.0f64..6.3, z2 in 0.0f64..PI, s0 in 0.0f64..1.0) {
        let p = (z1 / 2.0).sin();
        let alt = 4.0 * (p * p * (1.0 - s0 * s0) + s0 * s0 * (z1 / 2.0 + z2).sin().powi(2));
        prop_assert!((u(z1, z2, s0) - alt).abs() < 1e-14);
    }

    #[test]
    fn f1_is_even_and_periodic(z in 0.05f64..6.2, s0 in 0.0f64..0.95) {
        let f = f1_quadrature(z, s0).unwrap();
        prop_assert!((f - f1_quadrature(2.0 * PI - z, s0).unwrap()).abs() < 1e-13);
        prop_assert!((f - f1_quadrature(z + 2.0 * PI, s0).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn elliptic_f_is_odd(x in -3.0f64..3.0, y in 0.0f64..0.99) {
        prop_assert!((elliptic_f(x, y).unwrap() + elliptic_f(-x, y).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn vfe_is_pinned_at_pi(s0 in 0.0f64..0.99) {
        prop_assert!(d1f1(PI, s0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn vfl_branches_mirror(s0 in 0.0f64..0.95) {
        let a = solve_vfl(s0, Branch::VflL4, None).unwrap();
        let b = solve_vfl(s0, Branch::VflL5, None).unwrap();
        prop_assert!((a.zeta0 + b.zeta0 - 2.0 * PI).abs() < 1e-12);
        prop_assert!(d1f1(a.zeta0, s0).unwrap().abs() < 1e-12);
    }
}

#[test]
fn planar_limit_is_closed_form() {
    assert!((u(PI, 0.3, 0.0) - 4.0).abs() < 1e-15);
    assert!((f1_quadrature(PI / 3.0, 0.0).unwrap() + 0.5).abs() < 1e-12);
    for k in 1..40 {
        let z = 2.0 * PI * k as f64 / 40.0;
        assert!((f1_quadrature(z, 0.0).unwrap() - planar_f1(z)).abs() < 1e-12);
        assert!((f1_elliptic(z, 1e-9).unwrap() - planar_f1(z)).abs() < 1e-10);
    }
}

#[test]
fn collision_is_singular() {
    assert!(matches!(f1_quadrature(0.0, 0.0), Err(Error::SingularIntegrand { .. })));
    assert!(matches!(f1_elliptic(0.0, 0.0), Err(Error::SingularIntegrand { .. })));
    assert!(matches!(f1_quadrature(1.0, 1.5), Err(Error::Domain(_))));
}

#[test]
fn elliptic_form_agrees_with_quadrature_on_grid() {
    assert!((f1_elliptic(PI / 2.0, 0.3).unwrap() - f1_quadrature(PI / 2.0, 0.3).unwrap()).abs() < 1e-11);
    let mut worst = 0f64;
    for i in 1..=100 {
        let z = 2.0 * PI * i as f64 / 101.0;
        for k in 0..100 {
            let s0 = 0.95 * k as f64 / 99.0;
            let d = f1_elliptic(z, s0).unwrap() - f1_quadrature(z, s0).unwrap();
            worst = worst.max(d.abs());
        }
    }
    assert!(worst < 1e-11, "worst {worst:e}");
}

#[test]
fn elliptic_f_reference_values() {
    for x in [0.3, 1.0, 2.5] {
        assert!((elliptic_f(x, 0.0).unwrap() - x).abs() < 1e-15);
    }
    // complete integral by the arithmetic-geometric mean
    for y in [0.2f64, 0.6, 0.9] {
        let (mut a, mut b) = (1.0f64, (1.0 - y * y).sqrt());
        for _ in 0..10 {
            (a, b) = (0.5 * (a + b), (a * b).sqrt());
        }
        assert!((elliptic_f(PI / 2.0, y).unwrap() - PI / (2.0 * a)).abs() < 1e-13);
    }
    let oracle = simpson(|z| 1.0 / (1.0 - 0.25 * z.sin().powi(2)).sqrt(), 0.0, 1.0, 4000);
    assert!((elliptic_f(1.0, 0.5).unwrap() - oracle).abs() < 1e-13);
    assert!((elliptic_f(1.0, 0.5).unwrap() - 1.0373561200021773).abs() < 1e-13);
    assert!(elliptic_f(1.0, 1.2).is_err());
    assert!(elliptic_f(1.6, 1.0).is_err());
}

#[test]
fn derivatives_match_central_differences() {
    let h = 1e-5;
    for (z, s0) in [(0.7, 0.1), (1.2, 0.5), (2.4, 0.8), (PI, 0.3), (4.5, 0.9)] {
        let fd1 = (f1_quadrature(z + h, s0).unwrap() - f1_quadrature(z - h, s0).unwrap()) / (2.0 * h);
        assert!((d1f1(z, s0).unwrap() - fd1).abs() < 1e-7);
        let fd2 = (d1f1(z + h, s0).unwrap() - d1f1(z - h, s0).unwrap()) / (2.0 * h);
        assert!((d2f1(z, s0).unwrap() - fd2).abs() < 1e-7);
        let q = s0 * s0;
        let fds = (f1_quadrature(z, (q + h).sqrt()).unwrap() - f1_quadrature(z, (q - h).sqrt()).unwrap())
            / (2.0 * h);
        assert!((df1_ds0sq(z, s0).unwrap() - fds).abs() < 1e-7);
    }
}

#[test]
fn planar_curvatures() {
    assert!(d1f1(PI / 3.0, 0.0).unwrap().abs() < 1e-12);
    assert!((d2f1(PI / 3.0, 0.0).unwrap() + 2.25).abs() < 1e-10);
    assert!((d2f1(PI, 0.0).unwrap() - 0.875).abs() < 1e-10);
}

#[test]
fn planar_fixed_points() {
    let p = solve_vfl(0.0, Branch::VflL4, None).unwrap();
    assert!((p.zeta0 - PI / 3.0).abs() < 1e-12);
    assert!((p.nu_tilde - (27.0f64 / 4.0).sqrt()).abs() < 1e-9);
    assert!(p.elliptic());
    let e = solve_vfe(0.0).unwrap();
    assert_eq!(e.zeta0, PI);
    assert!((e.nu_tilde - (21.0f64 / 8.0).sqrt()).abs() < 1e-9);
    assert!(!e.elliptic());
}

#[test]
fn vfl_reference_roots() {
    assert!((l4(10.0).zeta0 - 1.0428568193566387).abs() < 1e-12);
    assert!((l4(40.0).zeta0 - 0.99166893153411673).abs() < 1e-12);
    assert!((l4(60.0).zeta0 - 0.96232765644197780).abs() < 1e-12);
    assert!((l4(40.0).nu_tilde - 2.2534736199986366).abs() < 1e-10);
    assert!((l4(60.0).nu_tilde - 1.9677260796256371).abs() < 1e-10);
}

#[test]
fn junction_closes_the_lagrange_family() {
    let jc = junction_inclination();
    assert!((jc - 2.542567).abs() < 1e-4);
    let s_c = junction_s0();
    let at = solve_vfl(s_c, Branch::VflL4, None).unwrap();
    assert!(at.d2f1.abs() < 1e-6);
    let m = MassConfig::equal_planets(1e-3).unwrap();
    let frozen = AveragedPoint { d2f1: 0.0, ..at };
    assert!(matches!(
        libration_frequency(&frozen, &m, 2.0 * PI),
        Err(Error::DegenerateEquilibrium { .. })
    ));
    assert!(matches!(
        solve_vfl(s_c + 1e-3, Branch::VflL4, None),
        Err(Error::BranchExhausted { .. })
    ));
    let fam = vfl_to_junction(Branch::VflL4, 1.0).unwrap();
    let mirror = vfl_to_junction(Branch::VflL5, 1.0).unwrap();
    assert!(fam.iter().zip(&mirror).all(|(a, b)| (a.zeta0 + b.zeta0 - 2.0 * PI).abs() < 1e-12));
    assert!(vfl_to_junction(Branch::Vfe, 1.0).is_err());
    assert!((fam.last().unwrap().j0_deg() - 145.678).abs() < 0.01);
    // ν̃ decreases to zero
    for w in fam.windows(2) {
        assert!(w[1].nu_tilde <= w[0].nu_tilde + 1e-12);
    }
    // VFE turns elliptic past the junction
    assert!(solve_vfe(s_c - 1e-3).unwrap().d2f1 > 0.0);
    assert!(solve_vfe(s_c + 1e-3).unwrap().d2f1 < 0.0);
}

#[test]
fn vfe_precession_changes_sign() {
    let m = MassConfig::equal_planets(1e-3).unwrap();
    let rate = |s0: f64| node_precession_avg(&solve_vfe(s0).unwrap(), &m, 2.0 * PI);
    let (mut lo, mut hi) = (0.85, 0.97);
    assert!(rate(lo).signum() != rate(hi).signum());
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if rate(mid).signum() == rate(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 0.9235).abs() < 1e-3, "sign change at {lo}");
}

#[test]
fn series_table_is_versioned_and_exact() {
    let t = SeriesCoefficients::embedded();
    assert_eq!(t.version, 1);
    assert_eq!(t.zeta.len(), 10);
    assert!(SeriesCoefficients::parse("zeta 2 0 1/4\n").is_err());
    assert!(SeriesCoefficients::parse("version 1\nzeta 2 0 one\n").is_err());
}

#[test]
fn series_leading_terms() {
    assert!((zeta_series(0.0) - PI / 3.0).abs() < 1e-15);
    assert!((nu_series(0.0) * (4.0f64 / 27.0).sqrt() - 1.0).abs() < 1e-15);
    assert_eq!(fs_series(0.0, 0.25), 0.0);
    // low order in J0: π/3 - (√3/12) J0² + (5√3/144) J0⁴
    let r3 = 3f64.sqrt();
    for j in [0.02f64, 0.05] {
        let low = PI / 3.0 - r3 / 12.0 * j * j + 5.0 * r3 / 144.0 * j.powi(4);
        assert!((zeta_series((j / 2.0).sin()) - low).abs() < 1e-2 * j.powi(6) + 1e-15);
    }
}

#[test]
fn series_track_the_numeric_roots() {
    let p = l4(40.0);
    assert!((zeta_series(p.s0) - p.zeta0).abs() / p.zeta0 < 1e-5);
    assert!((nu_series(p.s0) - p.nu_tilde).abs() / p.nu_tilde < 1e-4);
    let fs = -0.5 * (1.0 - p.s0 * p.s0).sqrt() * p.df1_ds0sq;
    assert!((fs_series(p.s0, 0.25) - fs).abs() / fs < 1e-4);
    let q = solve_vfl(0.2, Branch::VflL4, None).unwrap();
    let fs = -0.5 * (1.0 - 0.04f64).sqrt() * q.df1_ds0sq;
    assert!((fs_series(0.2, 0.25) - fs).abs() / fs < 1e-4);
    // error grows with inclination
    let errs: Vec<f64> = [20.0, 40.0, 60.0, 80.0]
        .iter()
        .map(|&j| {
            let p = l4(j);
            (zeta_series(p.s0) - p.zeta0).abs() / p.zeta0
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] > w[0]), "{errs:?}");
}

#[test]
fn precession_at_39_degrees() {
    let m = MassConfig::equal_planets(1e-3).unwrap();
    let p = l4(39.0);
    let avg = node_precession_avg(&p, &m, 2.0 * PI).to_degrees();
    let series = node_precession_series(p.s0, &m, 2.0 * PI).to_degrees();
    assert!((avg - 0.0555).abs() / 0.0555 < 0.01, "{avg}");
    assert!((series - 0.0523).abs() / 0.0523 < 0.01, "{series}");
}

#[test]
fn libration_frequency_scales_with_masses() {
    let p = l4(20.0);
    let a = libration_frequency(&p, &MassConfig::equal_planets(1e-4).unwrap(), 2.0 * PI).unwrap();
    let b = libration_frequency(&p, &MassConfig::equal_planets(1e-2).unwrap(), 2.0 * PI).unwrap();
    let ratio: f64 = (2e-2 / (1.0 - 2e-2)) / (2e-4 / (1.0 - 2e-4));
    assert!((b / a - ratio.sqrt()).abs() < 1e-12);
}

#[test]
fn family_csv_rows() {
    let m = MassConfig::equal_planets(1e-3).unwrap();
    let fam = averaged_family(Branch::Vfe, &[0.1, 0.5, 1.0]).unwrap();
    assert!(fam.iter().all(|p| p.zeta0 == PI));
    let mut buf = Vec::new();
    write_family_csv(&mut buf, &fam, &m).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "J0_deg,s0,zeta0_rad,branch,nu_tilde,dF1_ds0sq,prec_deg_per_period");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 7 && l.contains(",VFE,")));
    assert_eq!(Branch::parse("VFL_from_L5").unwrap(), Branch::VflL5);
    assert!(Branch::parse("L3").is_err());
}

#[test]
fn full_family_stays_close_to_the_averaged_one() {
    let avg = averaged_family(
        Branch::VflL4,
        &(0..=60).map(|k| (2.0 * k as f64).to_radians()).collect::<Vec<_>>(),
    )
    .unwrap();
    let m = MassConfig::equal_planets(1e-3).unwrap();
    let branch = continue_family(Origin::L4, &m, &Schedule::new(0.0, 110.0, 10.0)).unwrap();
    let rows = compare_full_vs_avg(&branch, &avg).unwrap();
    assert_eq!(rows.len(), branch.orbits.len());
    assert!(rows.iter().all(|r| r.normalized.abs() < 1.0));
    let coarse = averaged_family(Branch::VflL4, &[0.0, 1.0]).unwrap();
    assert!(matches!(compare_full_vs_avg(&branch, &coarse), Err(Error::Interpolation(_))));
}
