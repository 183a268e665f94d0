use std::f64::consts::PI;

use coorbital::hill::*;
use proptest::prelude::*;

fn sample_state(u: [f64; 9]) -> (HillState, ReducedParameter) {
    let rho = (1.0f64 / (4.0 * PI * PI)).cbrt();
    let r1 = rho * (0.8 + 0.4 * u[0]);
    let r2 = rho * (0.8 + 0.4 * u[1]);
    let g1 = 1.8e-3 * (0.7 + 0.6 * u[2]);
    let g2 = 1.8e-3 * (0.7 + 0.6 * u[3]);
    let cos_j = -0.95 + 1.9 * u[4];
    let c = (g1 * g1 + g2 * g2 + 2.0 * g1 * g2 * cos_j).sqrt();
    let s = HillState {
        r1,
        w1: 2.0 * PI * u[5],
        big_r1: 3e-4 * (u[6] - 0.5),
        g1,
        r2,
        w2: 2.0 * PI * u[7] + 1.0,
        big_r2: 3e-4 * (u[8] - 0.5),
        g2,
    };
    (s, ReducedParameter(c))
}

fn unit9() -> impl Strategy<Value = [f64; 9]> {
    prop::array::uniform9(0.0f64..1.0)
}

/// Heliocentric canonical Hamiltonian of the planetary problem written
/// directly from positions and momenta.
fn cartesian_energy(pos: [[f64; 3]; 2], mom: [[f64; 3]; 2], m: &MassConfig) -> f64 {
    let n = |a: [f64; 3]| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let d = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (m0, ms) = (m.m0, [m.m1, m.m2]);
    let mut h = 0.0;
    for j in 0..2 {
        h += d(mom[j], mom[j]) * (m0 + ms[j]) / (2.0 * m0 * ms[j]) - m0 * ms[j] / n(pos[j]);
    }
    let diff = [pos[0][0] - pos[1][0], pos[0][1] - pos[1][1], pos[0][2] - pos[1][2]];
    h + d(mom[0], mom[1]) / m0 - ms[0] * ms[1] / n(diff)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hill_energy_matches_cartesian(u in unit9(), omega1 in 0.0f64..std::f64::consts::TAU) {
        let m = MassConfig::new(0.997, 1e-3, 2e-3).unwrap();
        let (s, c) = sample_state(u);
        let cart = to_cartesian(&s, c, omega1).unwrap();
        let h = hamiltonian(&s, c, &m).unwrap();
        let e = cartesian_energy(cart.pos, cart.mom, &m);
        prop_assert!((h - e).abs() < 1e-12 * h.abs(), "{} vs {}", h, e);
        let l = cart.angular_momentum();
        prop_assert!(((l[0]*l[0] + l[1]*l[1] + l[2]*l[2]).sqrt() - c.0).abs() < 1e-12 * c.0);
        prop_assert!(l[0].abs() < 1e-13 * c.0 && l[1].abs() < 1e-13 * c.0);
        let j = mutual_inclination(&s, c).unwrap();
        prop_assert!((cart.incl[0] + cart.incl[1] - j).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vector_field_matches_central_differences(u in unit9()) {
        let m = MassConfig::equal_planets(1e-3).unwrap();
        let (s, c) = sample_state(u);
        let f = vector_field(&s, c, &m).unwrap();
        let a = s.to_array();
        let scales = [s.r1, 1.0, s.g1 / s.r1, s.g1, s.r2, 1.0, s.g2 / s.r2, s.g2];
        let mut grad = [0.0; 8];
        for i in 0..8 {
            let h = 1e-6 * scales[i];
            let mut p = a;
            let mut q = a;
            p[i] += h;
            q[i] -= h;
            let cp = c;
            let hp = hamiltonian(&HillState::from_array(p), cp, &m).unwrap();
            let hq = hamiltonian(&HillState::from_array(q), cp, &m).unwrap();
            grad[i] = (hp - hq) / (2.0 * h);
        }
        let expect = [grad[2], grad[3], -grad[0], -grad[1], grad[6], grad[7], -grad[4], -grad[5]];
        for i in 0..8 {
            let tol = 1e-6 * expect[i].abs().max(f[i].abs()) + 1e-9 * f.iter().map(|v| v.abs()).fold(0.0, f64::max);
            prop_assert!((f[i] - expect[i]).abs() < tol, "component {}: {} vs {}", i, f[i], expect[i]);
        }
    }

    #[test]
    fn field_is_tangent_to_energy_levels(u in unit9()) {
        let m = MassConfig::equal_planets(1e-2).unwrap();
        let (s, c) = sample_state(u);
        let f = vector_field(&s, c, &m).unwrap();
        // dH/dt = H_r ṙ + H_w ẇ + H_R Ṙ + H_G Ġ with H partials read off the field
        let grad = [-f[2], -f[3], f[0], f[1], -f[6], -f[7], f[4], f[5]];
        let dh: f64 = (0..8).map(|i| grad[i] * f[i]).sum();
        let norm: f64 = (0..8).map(|i| (grad[i] * f[i]).abs()).sum();
        prop_assert!(dh.abs() < 1e-11 * norm.max(1e-300));
    }

    #[test]
    fn jacobian_matches_field_differences(u in unit9()) {
        let m = MassConfig::equal_planets(1e-3).unwrap();
        let (s, c) = sample_state(u);
        let jac = vector_field_jacobian(&s, c, &m).unwrap();
        let a = s.to_array();
        let scales = [s.r1, 1.0, s.g1 / s.r1, s.g1, s.r2, 1.0, s.g2 / s.r2, s.g2];
        for j in 0..8 {
            let h = 1e-6 * scales[j];
            let mut p = a;
            let mut q = a;
            p[j] += h;
            q[j] -= h;
            let fp = vector_field(&HillState::from_array(p), c, &m).unwrap();
            let fq = vector_field(&HillState::from_array(q), c, &m).unwrap();
            let col_max = (0..8).map(|i| jac[i][j].abs()).fold(0.0, f64::max);
            for i in 0..8 {
                let fd = (fp[i] - fq[i]) / (2.0 * h);
                prop_assert!((fd - jac[i][j]).abs() < 1e-5 * col_max, "({}, {}): {} vs {}", i, j, fd, jac[i][j]);
            }
        }
    }

    #[test]
    fn node_rate_matches_c_difference(u in unit9()) {
        let m = MassConfig::equal_planets(1e-3).unwrap();
        let (s, c) = sample_state(u);
        // H is dominated by the Kepler terms, so a small step drowns in round-off
        let h = 1e-3 * c.0;
        let at = |k: f64| hamiltonian(&s, ReducedParameter(c.0 + k * h), &m);
        let (p2, p1, q1, q2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        prop_assume!(p2.is_ok() && p1.is_ok() && q1.is_ok() && q2.is_ok());
        // fourth-order central stencil
        let fd = (8.0 * (p1.unwrap() - q1.unwrap()) - (p2.unwrap() - q2.unwrap())) / (12.0 * h);
        let exact = node_rate(&s, c, &m).unwrap();
        prop_assert!((fd - exact).abs() < 1e-5 * exact.abs() + 1e-12, "fd {} exact {}", fd, exact);
    }

    #[test]
    fn body_exchange_symmetry(u in unit9()) {
        let m = MassConfig::new(0.997, 1e-3, 2e-3).unwrap();
        let (s, c) = sample_state(u);
        let h = hamiltonian(&s, c, &m).unwrap();
        let hs = hamiltonian(&s.swapped(), c, &m.swapped()).unwrap();
        prop_assert!((h - hs).abs() < 1e-14 * h.abs());
    }
}

#[test]
fn node_rate_scales_linearly_with_planet_masses() {
    let (s, c) = sample_state([0.3, 0.6, 0.2, 0.7, 0.4, 0.1, 0.5, 0.8, 0.3]);
    let rates: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
        .iter()
        .map(|&mu| {
            let m = MassConfig::new(1.0 - mu, mu / 2.0, mu / 2.0).unwrap();
            // hold the geometry: momenta scale with the masses
            let k = mu / 1e-3;
            let mut t = s;
            t.big_r1 *= k;
            t.big_r2 *= k;
            t.g1 *= k;
            t.g2 *= k;
            node_rate(&t, ReducedParameter(c.0 * k), &m).unwrap()
        })
        .collect();
    let r1 = rates[0] / rates[1];
    let r2 = rates[1] / rates[2];
    assert!((r1 - 2.0).abs() < 5e-3, "{r1}");
    assert!((r2 - 2.0).abs() < 5e-3, "{r2}");
}

#[test]
fn inconsistent_c_is_rejected() {
    let (s, _) = sample_state([0.5; 9]);
    let c = ReducedParameter((s.g1 + s.g2) * 1.001);
    assert!(hamiltonian(&s, c, &MassConfig::equal_planets(1e-3).unwrap()).is_err());
    assert!(to_cartesian(&s, c, 0.0).is_err());
}

#[test]
fn euler_seed_is_relative_equilibrium() {
    for eps in [1e-4, 1e-3, 1e-2] {
        let m = MassConfig::equal_planets(eps).unwrap();
        let (s, c) = euler_equilibrium(&m, 2.0 * PI).unwrap();
        assert!(((s.w1 - s.w2) - PI).abs() < 1e-12);
        let f = vector_field(&s, c, &m).unwrap();
        for i in [0, 2, 3, 4, 6, 7] {
            let scale = [s.r1, 1.0, s.g1 / s.r1, s.g1, s.r2, 1.0, s.g2 / s.r2, s.g2][i];
            assert!(f[i].abs() < 1e-10 * scale, "eps {eps} comp {i}: {}", f[i]);
        }
    }
}

#[test]
fn anomaly_coefficients_on_log_grid() {
    for k in 0..=100 {
        let eps = 10f64.powf(-6.0 + 5.0 * k as f64 / 100.0);
        for m in [
            MassConfig::equal_planets(eps).unwrap(),
            MassConfig::new(1.0 - 2.5 * eps, 2.0 * eps, 0.5 * eps).unwrap(),
        ] {
            let (a, b, c) = lagrange_anomaly_coeffs(&m);
            assert!((a * a - b * b - c * c - 1.0).abs() < 1e-13, "eps {eps}");
        }
    }
}

#[test]
fn spectrum_changes_type_at_gascheau_value() {
    let g = gascheau_eps();
    assert!((g - 0.0191).abs() < 1e-4);
    let below = lagrange_spectrum(&MassConfig::equal_planets(g * 0.999).unwrap(), 2.0 * PI);
    let above = lagrange_spectrum(&MassConfig::equal_planets(g * 1.001).unwrap(), 2.0 * PI);
    assert!(below.elliptic && !above.elliptic);
    assert!(below.all().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    assert!(above.all().iter().any(|z| (z.norm() - 1.0).abs() > 1e-3));
}

proptest! {
    #[test]
    fn osculating_elements_match_cartesian_kepler(u in unit9()) {
        let m = MassConfig::new(0.997, 1e-3, 2e-3).unwrap();
        let (s, c) = sample_state(u);
        let cart = to_cartesian(&s, c, 0.3).unwrap();
        for j in 0..2 {
            let (mu, beta) = (m.mu(j + 1), m.beta(j + 1));
            let r = cart.pos[j];
            let v = cart.mom[j].map(|p| p / beta);
            let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let rv = r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
            // Laplace vector (v² - μ/r) r - (r·v) v, over μ
            let ev: Vec<f64> = (0..3).map(|k| ((v2 - mu / rn) * r[k] - rv * v[k]) / mu).collect();
            let e = (ev[0] * ev[0] + ev[1] * ev[1] + ev[2] * ev[2]).sqrt();
            let a = 1.0 / (2.0 / rn - v2 / mu);
            let got = osculating(&s, &m, j + 1);
            prop_assert!((got.e - e).abs() < 1e-9, "e {} vs {}", got.e, e);
            prop_assert!((got.a - a).abs() < 1e-10 * a.abs());
        }
    }
}

proptest! {
    #[test]
    fn mutual_distance_matches_cartesian(u in unit9(), omega1 in 0.0f64..std::f64::consts::TAU) {
        let (s, c) = sample_state(u);
        let p = to_cartesian(&s, c, omega1).unwrap().pos;
        let d = ((p[0][0] - p[1][0]).powi(2) + (p[0][1] - p[1][1]).powi(2) + (p[0][2] - p[1][2]).powi(2)).sqrt();
        prop_assert!((mutual_distance(&s, c) - d).abs() < 1e-12 * d.max(1e-3));
    }
}
