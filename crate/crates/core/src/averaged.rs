//! The circular averaged co-orbital model.
//!
//! On circular orbits the averaged Hamiltonian reduces to one degree of
//! freedom in the resonant angle ζ with the mutual inclination entering
//! through `s0 = sin(J0/2)`:
//!
//! `F1(ζ, s0) = (1 - s0²) cos ζ - (1/π) ∫₀^π U^{-1/2} dζ2`,
//! `U = 2 - 2 cos ζ + 2 s0² (cos ζ - cos(ζ + 2ζ2))`.
//!
//! Fixed points solve `∂F1/∂ζ = 0` and are independent of the masses, which
//! only enter the frequency prefactors.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hill::{fmt_f64, MassConfig};
use crate::orbit::FamilyBranch;

/// Target absolute error of each quadrature.
const QUAD_TOL: f64 = 1e-15;
/// `|d2F1|` below which an equilibrium is reported degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;
/// Largest distance in J between a family member and the averaged grid.
pub const ALIGNMENT_TOLERANCE_DEG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// Lagrange vertical family from ζ = π/3.
    VflL4,
    /// Its mirror image from ζ = 5π/3.
    VflL5,
    /// Euler vertical family, pinned at ζ = π.
    Vfe,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::VflL4 => "VFL_from_L4",
            Branch::VflL5 => "VFL_from_L5",
            Branch::Vfe => "VFE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "VFL_from_L4" | "L4" | "vfl" => Ok(Branch::VflL4),
            "VFL_from_L5" | "L5" => Ok(Branch::VflL5),
            "VFE" | "Euler" | "vfe" => Ok(Branch::Vfe),
            _ => Err(Error::Domain(format!("unknown averaged branch {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedPoint {
    pub zeta0: f64,
    pub s0: f64,
    /// Radians.
    pub j0: f64,
    pub branch: Branch,
    pub nu_tilde: f64,
    pub d2f1: f64,
    pub df1_ds0sq: f64,
}

impl AveragedPoint {
    fn at(branch: Branch, zeta0: f64, s0: f64) -> Result<Self> {
        let d2 = d2f1(zeta0, s0)?;
        Ok(Self {
            zeta0,
            s0,
            j0: 2.0 * s0.asin(),
            branch,
            nu_tilde: (3.0 * d2.abs()).sqrt(),
            d2f1: d2,
            df1_ds0sq: df1_ds0sq(zeta0, s0)?,
        })
    }

    pub fn j0_deg(&self) -> f64 {
        self.j0.to_degrees()
    }

    /// Purely imaginary linearised eigenvalues (a maximum of F1).
    pub fn elliptic(&self) -> bool {
        self.d2f1 < 0.0
    }

    pub fn csv_header() -> &'static str {
        "J0_deg,s0,zeta0_rad,branch,nu_tilde,dF1_ds0sq,prec_deg_per_period"
    }

    /// One CSV row; the precession uses `masses` and a unit period.
    pub fn csv_row(&self, masses: &MassConfig) -> String {
        let prec = node_precession_avg(self, masses, 2.0 * PI).to_degrees();
        [
            fmt_f64(self.j0_deg()),
            fmt_f64(self.s0),
            fmt_f64(self.zeta0),
            self.branch.label().to_string(),
            fmt_f64(self.nu_tilde),
            fmt_f64(self.df1_ds0sq),
            fmt_f64(prec),
        ]
        .join(",")
    }
}

pub fn write_family_csv<W: Write>(
    out: &mut W,
    points: &[AveragedPoint],
    masses: &MassConfig,
) -> std::io::Result<()> {
    writeln!(out, "{}", AveragedPoint::csv_header())?;
    for p in points {
        writeln!(out, "{}", p.csv_row(masses))?;
    }
    Ok(())
}

pub fn u(zeta1: f64, zeta2: f64, s0: f64) -> f64 {
    2.0 - 2.0 * zeta1.cos() + 2.0 * s0 * s0 * (zeta1.cos() - (zeta1 + 2.0 * zeta2).cos())
}

fn check_inputs(zeta1: f64, s0: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s0) || !zeta1.is_finite() {
        return Err(Error::Domain(format!(
            "need s0 in [0, 1] and finite ζ, got ζ = {zeta1}, s0 = {s0}"
        )));
    }
    // min over ζ2 of U/4
    let p = (zeta1 / 2.0).sin();
    if p * p * (1.0 - s0 * s0) < 1e-24 {
        return Err(Error::SingularIntegrand { zeta1, s0 });
    }
    Ok(())
}

/// `(1/π) ∫ g(ζ2) dζ2` over one period. The window starts where U is
/// smallest so that the near-singular peaks sit at the end points, where
/// the tanh-sinh nodes cluster.
fn period_mean(zeta1: f64, g: impl Fn(f64) -> f64) -> f64 {
    let start = -zeta1 / 2.0;
    let mid = start + PI / 2.0;
    let a = quadrature::double_exponential::integrate(&g, start, mid, QUAD_TOL).integral;
    let b = quadrature::double_exponential::integrate(&g, mid, start + PI, QUAD_TOL).integral;
    (a + b) / PI
}

pub fn f1_quadrature(zeta1: f64, s0: f64) -> Result<f64> {
    check_inputs(zeta1, s0)?;
    let mean = period_mean(zeta1, |z2| u(zeta1, z2, s0).powf(-0.5));
    Ok((1.0 - s0 * s0) * zeta1.cos() - mean)
}

/// Incomplete elliptic integral of the first kind with modulus `y`,
/// `∫₀^x (1 - y² sin² z)^{-1/2} dz`.
pub fn elliptic_f(x: f64, y: f64) -> Result<f64> {
    if !(y.abs() <= 1.0) || !x.is_finite() || (y.abs() == 1.0 && x.abs() >= PI / 2.0) {
        return Err(Error::Domain(format!("elliptic_f({x}, {y}) outside the domain")));
    }
    ellip::ellipf(x, y * y).map_err(|e| Error::Domain(e.to_string()))
}

pub fn f1_elliptic(zeta1: f64, s0: f64) -> Result<f64> {
    check_inputs(zeta1, s0)?;
    let p = (zeta1 / 2.0).sin();
    let uu = p * p + s0 * s0 - p * p * s0 * s0;
    let k = (s0 / uu.sqrt()).min(1.0);
    let span = elliptic_f((zeta1 + PI) / 2.0, k)? - elliptic_f((zeta1 - PI) / 2.0, k)?;
    Ok((1.0 - s0 * s0) * zeta1.cos() - span / (2.0 * PI * uu.sqrt()))
}

/// `U` and its partials `(U_ζ, U_ζζ, U_s)` where `s = s0²`.
fn u_partials(zeta1: f64, zeta2: f64, s0: f64) -> [f64; 4] {
    let s = s0 * s0;
    let (sz, cz) = zeta1.sin_cos();
    let (sw, cw) = (zeta1 + 2.0 * zeta2).sin_cos();
    [
        2.0 - 2.0 * cz + 2.0 * s * (cz - cw),
        2.0 * sz + 2.0 * s * (sw - sz),
        2.0 * cz + 2.0 * s * (cw - cz),
        2.0 * (cz - cw),
    ]
}

/// `∂F1/∂ζ`
pub fn d1f1(zeta1: f64, s0: f64) -> Result<f64> {
    check_inputs(zeta1, s0)?;
    let mean = period_mean(zeta1, |z2| {
        let [uu, uz, _, _] = u_partials(zeta1, z2, s0);
        0.5 * uz * uu.powf(-1.5)
    });
    Ok(-(1.0 - s0 * s0) * zeta1.sin() + mean)
}

/// `∂²F1/∂ζ²`
pub fn d2f1(zeta1: f64, s0: f64) -> Result<f64> {
    check_inputs(zeta1, s0)?;
    let mean = period_mean(zeta1, |z2| {
        let [uu, uz, uzz, _] = u_partials(zeta1, z2, s0);
        let inv = uu.recip();
        inv.sqrt() * inv * (0.5 * uzz - 0.75 * uz * uz * inv)
    });
    Ok(-(1.0 - s0 * s0) * zeta1.cos() + mean)
}

/// `∂F1/∂(s0²)`
pub fn df1_ds0sq(zeta1: f64, s0: f64) -> Result<f64> {
    check_inputs(zeta1, s0)?;
    let mean = period_mean(zeta1, |z2| {
        let [uu, _, _, us] = u_partials(zeta1, z2, s0);
        0.5 * us * uu.powf(-1.5)
    });
    Ok(-zeta1.cos() + mean)
}

/// `s0 = sin(J0/2)`
pub fn s0_of(j0: f64) -> f64 {
    (j0 / 2.0).sin()
}

/// Where the Lagrange family meets the Euler one: `∂²F1/∂ζ²(π, s0)` changes
/// sign there. Located by bisection and cached.
pub fn junction_s0() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| {
        let f = |s: f64| d2f1(PI, s).expect("ζ = π is regular for s0 < 1");
        let (mut lo, mut hi) = (0.5, 0.99);
        debug_assert!(f(lo) > 0.0 && f(hi) < 0.0);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

/// Largest mutual inclination on the Lagrange family, radians.
pub fn junction_inclination() -> f64 {
    2.0 * junction_s0().asin()
}

/// Fixed point of the Lagrange family at `s0`. `seed` is an optional
/// starting ζ on the L4 side; the L5 branch is the mirror image.
pub fn solve_vfl(s0: f64, branch: Branch, seed: Option<f64>) -> Result<AveragedPoint> {
    let sc = junction_s0();
    if branch == Branch::Vfe {
        return solve_vfe(s0);
    }
    if !(0.0..=1.0).contains(&s0) {
        return Err(Error::Domain(format!("s0 = {s0} outside [0, 1]")));
    }
    if s0 > sc {
        return Err(Error::BranchExhausted { s0 });
    }
    let zeta = if s0 == sc {
        PI
    } else {
        vfl_root(s0, seed.map(|z| if z > PI { 2.0 * PI - z } else { z }))?
    };
    let zeta = match branch {
        Branch::VflL5 => 2.0 * PI - zeta,
        _ => zeta,
    };
    AveragedPoint::at(branch, zeta, s0)
}

/// Safeguarded Newton for the L4-side root of `∂F1/∂ζ` in `(0, π)`:
/// `∂F1/∂ζ > 0` towards the collision and `< 0` just below π.
fn vfl_root(s0: f64, seed: Option<f64>) -> Result<f64> {
    let mut lo: f64 = 1e-3;
    let mut hi: f64;
    // pull hi below the root; close to the junction the root approaches π
    let mut gap = 0.5;
    loop {
        let z = PI - gap;
        if d1f1(z, s0)? < 0.0 {
            hi = z;
            break;
        }
        lo = lo.max(z);
        gap *= 0.25;
        if gap < 1e-12 {
            return Ok(PI);
        }
    }
    if d1f1(lo, s0)? <= 0.0 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: d1f1(lo, s0)?,
        });
    }
    let mut z = seed.filter(|z| *z > lo && *z < hi).unwrap_or(0.5 * (lo + hi));
    for it in 0..200 {
        let f = d1f1(z, s0)?;
        if f.abs() < 1e-14 || hi - lo < 1e-15 {
            return Ok(z);
        }
        if f > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let df = d2f1(z, s0)?;
        let newton = z - f / df;
        z = if df < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if it == 199 {
            return Err(Error::NoConvergence {
                iterations: 200,
                residual: f,
            });
        }
    }
    unreachable!()
}

/// The Euler family sits at ζ = π by symmetry for every `s0 < 1`.
pub fn solve_vfe(s0: f64) -> Result<AveragedPoint> {
    if !(0.0..1.0).contains(&s0) {
        return Err(Error::Domain(format!("s0 = {s0} outside [0, 1)")));
    }
    let d1 = d1f1(PI, s0)?;
    if d1.abs() > 1e-12 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: d1,
        });
    }
    AveragedPoint::at(Branch::Vfe, PI, s0)
}

/// Family over a list of inclinations (radians), each solve seeded by the
/// previous one. Inclinations past the junction end the Lagrange branches.
pub fn averaged_family(branch: Branch, j0: &[f64]) -> Result<Vec<AveragedPoint>> {
    let mut out: Vec<AveragedPoint> = Vec::with_capacity(j0.len());
    for &j in j0 {
        let seed = out.last().map(|p| p.zeta0);
        out.push(solve_vfl(s0_of(j), branch, seed)?);
    }
    Ok(out)
}

/// Continue a Lagrange branch on a uniform grid in J0 up to the junction,
/// which is appended as the last point.
pub fn vfl_to_junction(branch: Branch, step_deg: f64) -> Result<Vec<AveragedPoint>> {
    if branch == Branch::Vfe || !(step_deg > 0.0) {
        return Err(Error::Domain(format!(
            "need a Lagrange branch and a positive step, got {} and {step_deg}",
            branch.label()
        )));
    }
    let jc = junction_inclination();
    let n = (jc.to_degrees() / step_deg).floor() as usize;
    let grid: Vec<f64> = (0..=n)
        .map(|k| (k as f64 * step_deg).to_radians())
        .filter(|j| *j < jc)
        .collect();
    let mut pts = averaged_family(branch, &grid)?;
    pts.push(AveragedPoint::at(branch, PI, junction_s0())?);
    Ok(pts)
}

/// Libration (VFL) or hyperbolic (VFE) rate
/// `ν = n* sqrt(3 (m1 + m2)/m0 |∂²F1/∂ζ²|)`.
pub fn libration_frequency(point: &AveragedPoint, masses: &MassConfig, n_star: f64) -> Result<f64> {
    if point.d2f1.abs() < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateEquilibrium {
            curvature: point.d2f1,
        });
    }
    let ratio = (masses.m1 + masses.m2) / masses.m0;
    Ok(n_star * (3.0 * ratio * point.d2f1.abs()).sqrt())
}

/// `dΩ/dt = -n* (m1 + m2)/(2 m0) sqrt(1 - 4 γ s0²) ∂F1/∂(s0²)`.
pub fn node_precession_avg(point: &AveragedPoint, masses: &MassConfig, n_star: f64) -> f64 {
    let ratio = (masses.m1 + masses.m2) / masses.m0;
    let root = (1.0 - 4.0 * masses.gamma() * point.s0 * point.s0).sqrt();
    -n_star * ratio / 2.0 * root * point.df1_ds0sq
}

/// Exact-rational coefficients of the Lagrange-family power series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    pub version: u32,
    /// `(power of s0, c)` with `ζ_c = π/3 - √3 Σ c s0^k`.
    pub zeta: Vec<(u32, Ratio<i64>)>,
    /// `(power of s0, c)` with `ν̃_L √(4/27) = Σ c s0^k`.
    pub nu: Vec<(u32, Ratio<i64>)>,
    /// `(power of s0, power of γ, c)`.
    pub fs: Vec<(u32, u32, Ratio<i64>)>,
}

const SERIES_TABLE: &str = include_str!("../data/series.txt");

impl SeriesCoefficients {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Domain(format!("malformed series line {line:?}"));
        let mut out = Self {
            version: 0,
            zeta: Vec::new(),
            nu: Vec::new(),
            fs: Vec::new(),
        };
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "version" {
                out.version = f.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad(line))?;
                continue;
            }
            if f.len() != 4 {
                return Err(bad(line));
            }
            let ks: u32 = f[1].parse().map_err(|_| bad(line))?;
            let kg: u32 = f[2].parse().map_err(|_| bad(line))?;
            let c = Ratio::<i64>::from_str(f[3]).map_err(|_| bad(line))?;
            match (f[0], kg) {
                ("zeta", 0) => out.zeta.push((ks, c)),
                ("nu", 0) => out.nu.push((ks, c)),
                ("fs", _) => out.fs.push((ks, kg, c)),
                _ => return Err(bad(line)),
            }
        }
        if out.version == 0 {
            return Err(Error::Domain("series table has no version".into()));
        }
        Ok(out)
    }

    /// The table shipped with the crate.
    pub fn embedded() -> &'static Self {
        static CACHE: OnceLock<SeriesCoefficients> = OnceLock::new();
        CACHE.get_or_init(|| Self::parse(SERIES_TABLE).expect("embedded table parses"))
    }
}

fn to_f64(c: &Ratio<i64>) -> f64 {
    *c.numer() as f64 / *c.denom() as f64
}

pub fn zeta_series(s0: f64) -> f64 {
    let sum: f64 = SeriesCoefficients::embedded()
        .zeta
        .iter()
        .map(|(k, c)| to_f64(c) * s0.powi(*k as i32))
        .sum();
    PI / 3.0 - 3f64.sqrt() * sum
}

/// `ν̃_L`
pub fn nu_series(s0: f64) -> f64 {
    let sum: f64 = SeriesCoefficients::embedded()
        .nu
        .iter()
        .map(|(k, c)| to_f64(c) * s0.powi(*k as i32))
        .sum();
    (27.0f64 / 4.0).sqrt() * sum
}

pub fn fs_series(s0: f64, gamma: f64) -> f64 {
    SeriesCoefficients::embedded()
        .fs
        .iter()
        .map(|(ks, kg, c)| to_f64(c) * s0.powi(*ks as i32) * gamma.powi(*kg as i32))
        .sum()
}

/// Node precession from the series, composed as
/// `n* (m1 + m2)/m0 sqrt(1 - 4 γ s0²) F_s`. `F_s` already carries the
/// square root, so this is smaller than [`node_precession_avg`] by that
/// factor.
pub fn node_precession_series(s0: f64, masses: &MassConfig, n_star: f64) -> f64 {
    let gamma = masses.gamma();
    let ratio = (masses.m1 + masses.m2) / masses.m0;
    n_star * ratio * (1.0 - 4.0 * gamma * s0 * s0).sqrt() * fs_series(s0, gamma)
}

/// One row of the full-versus-averaged comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub j_deg: f64,
    pub dw: f64,
    pub dzeta: f64,
    /// `(Δw - Δζ) / Δζ / ε`
    pub normalized: f64,
}

/// Relative difference between the section longitude difference of each
/// family member and the averaged fixed point at the same inclination,
/// divided by the planetary mass scale. Each member needs an averaged point
/// within [`ALIGNMENT_TOLERANCE_DEG`] in J, which seeds an exact solve at
/// the member's inclination. Members above the junction are skipped.
pub fn compare_full_vs_avg(branch: &FamilyBranch, averaged: &[AveragedPoint]) -> Result<Vec<Comparison>> {
    let eps = branch.masses.eps();
    let jc = junction_inclination().to_degrees();
    let mut out = Vec::new();
    for o in &branch.orbits {
        let j = o.j_p_deg();
        if j >= jc {
            continue;
        }
        let near = averaged
            .iter()
            .filter(|p| p.branch != Branch::Vfe)
            .min_by(|a, b| (a.j0_deg() - j).abs().total_cmp(&(b.j0_deg() - j).abs()))
            .filter(|p| (p.j0_deg() - j).abs() <= ALIGNMENT_TOLERANCE_DEG)
            .ok_or_else(|| {
                Error::Interpolation(format!(
                    "no averaged point within {ALIGNMENT_TOLERANCE_DEG}° of J = {j}°"
                ))
            })?;
        let dw = o.dw_deg().to_radians();
        // compare on the side of the family the branch lives on
        let side = if dw > PI { Branch::VflL5 } else { Branch::VflL4 };
        let zeta = solve_vfl(s0_of(o.j_p), side, Some(near.zeta0))?.zeta0;
        out.push(Comparison {
            j_deg: j,
            dw,
            dzeta: zeta,
            normalized: (dw - zeta) / zeta / eps,
        });
    }
    Ok(out)
}
