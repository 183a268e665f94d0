//! Periodic orbits of the reduced problem as zeros of the first-return
//! residual, their continuation in the mutual inclination and their linear
//! stability.
//!
//! The unknown is `(x, C) ∈ ℝ⁹`. Two sections complete the residual: the
//! phase condition `w1 + w2 = SECTION_SUM` (see [`crate::hill::SECTION_SUM`]) and the inclination condition
//! `cos J(x, C) = cos J_p`. The period is fixed to 1 and both anomalies
//! advance by exactly one turn per period.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Complex, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{HillFlow, Tolerance};
use crate::hill::{SECTION_SUM, 
    cos_mutual_inclination, euler_equilibrium, fmt_f64, lagrange_equilibrium_at, HillState,
    LagrangeVertex, MassConfig, ReducedParameter,
};

pub const PERIOD: f64 = 1.0;
pub const MEAN_MOTION: f64 = 2.0 * PI;
/// `max ||λ| - 1|` below this classifies an orbit as linearly stable.
pub const STABILITY_THRESHOLD: f64 = 1e-6;
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Inclination where the families from the equilateral and collinear
/// equilibria meet, in degrees.
pub const JUNCTION_DEG: f64 = 145.678;

type Jac = SMatrix<f64, 10, 9>;
type Vec10 = SVector<f64, 10>;
type Vec9 = SVector<f64, 9>;
type M8 = SMatrix<f64, 8, 8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    L4,
    L5,
    Euler,
}

impl Origin {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L4" => Ok(Origin::L4),
            "L5" => Ok(Origin::L5),
            "EULER" | "E" => Ok(Origin::Euler),
            _ => Err(Error::Domain(format!("unknown origin '{s}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Origin::L4 => "L4",
            Origin::L5 => "L5",
            Origin::Euler => "Euler",
        }
    }

    /// The relative equilibrium the family starts from (`J_p = 0`).
    pub fn seed(&self, masses: &MassConfig) -> Result<(HillState, ReducedParameter)> {
        match self {
            Origin::L4 => Ok(lagrange_equilibrium_at(masses, MEAN_MOTION, LagrangeVertex::L4)),
            Origin::L5 => Ok(lagrange_equilibrium_at(masses, MEAN_MOTION, LagrangeVertex::L5)),
            Origin::Euler => euler_seed(masses),
        }
    }
}

/// The collinear configuration at a rotation rate for which the anomalies
/// advance by exactly one turn per period. Unlike the equilateral one, the
/// node line drifts on average there, so the rate is not [`MEAN_MOTION`].
fn euler_seed(masses: &MassConfig) -> Result<(HillState, ReducedParameter)> {
    let flow = HillFlow::new(masses);
    let mut omega = MEAN_MOTION;
    for _ in 0..30 {
        let (x, c) = euler_equilibrium(masses, omega)?;
        let end = flow.propagate(&x, c, PERIOD, &Tolerance::default())?.final_state;
        let excess = end.w1 - x.w1 - MEAN_MOTION * PERIOD;
        if excess.abs() < 1e-14 {
            return Ok((x, c));
        }
        omega -= excess / PERIOD;
    }
    euler_equilibrium(masses, omega)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub x0: HillState,
    pub c: ReducedParameter,
    pub masses: MassConfig,
    pub period: f64,
    /// Mutual inclination at the section, radians.
    pub j_p: f64,
    /// All eight monodromy eigenvalues as computed numerically.
    pub eigenvalues: Vec<Complex<f64>>,
    /// The four multipliers left after removing the unit ones forced by
    /// time translation and the family, see [`nontrivial_multipliers`].
    pub nontrivial: [Complex<f64>; 4],
    pub stable: bool,
    pub margin: f64,
    pub precession_per_period: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl PeriodicOrbit {
    pub fn j_p_deg(&self) -> f64 {
        self.j_p.to_degrees()
    }

    /// `w1 - w2` at the section, degrees in `[0, 360)`.
    pub fn dw_deg(&self) -> f64 {
        (self.x0.w1 - self.x0.w2).rem_euclid(2.0 * PI).to_degrees()
    }

    pub fn csv_header() -> String {
        let mut h = String::from(
            "J_p_deg,dw_deg,C,r1,w1,R1,G1,r2,w2,R2,G2,stable,margin,prec_deg_per_period",
        );
        for k in 1..=8 {
            h.push_str(&format!(",re_l{k},im_l{k}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut f = vec![fmt_f64(self.j_p_deg()), fmt_f64(self.dw_deg()), fmt_f64(self.c.0)];
        f.extend(self.x0.csv_fields());
        f.push(if self.stable { "1" } else { "0" }.into());
        f.push(fmt_f64(self.margin));
        f.push(fmt_f64(self.precession_per_period));
        for z in &self.eigenvalues {
            f.push(fmt_f64(z.re));
            f.push(fmt_f64(z.im));
        }
        f.join(",")
    }
}

/// Stable iff every multiplier lies within [`STABILITY_THRESHOLD`] of the
/// unit circle. Returns the flag and the largest distance. The four unit
/// multipliers are exact by symmetry and enter with distance 0.
pub fn classify_stability(orbit: &PeriodicOrbit) -> (bool, f64) {
    classify_multipliers(&orbit.nontrivial)
}

/// Nontrivial multipliers of a symplectic 8×8 monodromy matrix with a
/// fourfold unit multiplier.
///
/// The spectrum comes in pairs `(λ, 1/λ)`, so with `x = λ + 1/λ` the power
/// sums of the four `x_i` follow from `tr M` and `tr M²`. Removing the two
/// known `x = 2` leaves a quadratic for the other two. Trace sums are well
/// conditioned, unlike the eigenvalues of the unit Jordan blocks, whose
/// roundoff splitting (about `sqrt(ε)`) would otherwise swamp the stability
/// threshold.
pub fn nontrivial_multipliers(m: &[[f64; 8]; 8]) -> [Complex<f64>; 4] {
    let mat = M8::from_fn(|i, j| m[i][j]);
    // Σx = tr M and Σ(x² - 2) = tr M² over all four pairs; two pairs have x = 2
    let s1 = mat.trace() - 4.0;
    let s2 = (mat * mat).trace();
    let prod = 0.5 * (s1 * s1 - s2);
    let disc = Complex::new(s1 * s1 - 4.0 * prod, 0.0).sqrt();
    let xs = [(Complex::new(s1, 0.0) + disc) * 0.5, (Complex::new(s1, 0.0) - disc) * 0.5];
    let mut out = [Complex::new(0.0, 0.0); 4];
    for (k, x) in xs.iter().enumerate() {
        // λ² - xλ + 1 = 0
        let d = (x * x - Complex::new(4.0, 0.0)).sqrt();
        out[2 * k] = (x + d) * 0.5;
        out[2 * k + 1] = (x - d) * 0.5;
    }
    out
}

pub fn classify_multipliers(ev: &[Complex<f64>]) -> (bool, f64) {
    let margin = ev.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    (margin < STABILITY_THRESHOLD, margin)
}

pub fn monodromy_eigenvalues(m: &[[f64; 8]; 8]) -> Vec<Complex<f64>> {
    let mat = M8::from_fn(|i, j| m[i][j]);
    let mut ev: Vec<Complex<f64>> = mat.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.norm().total_cmp(&b.norm())));
    ev
}

/// Largest distance between a multiplier and the closest member of its
/// symplectic orbit `{λ̄, 1/λ, 1/λ̄}` within the spectrum.
pub fn quadruplet_defect(ev: &[Complex<f64>]) -> f64 {
    let closest = |z: Complex<f64>| ev.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
    ev.iter()
        .map(|&z| closest(z.conj()).max(closest(z.inv())).max(closest(z.inv().conj())))
        .fold(0.0, f64::max)
}

/// Reorder `next` so that it matches `prev` entry by entry with minimal
/// total distance (exact assignment over all subsets); ties keep argument
/// order.
pub fn pair_eigenvalues(prev: &[Complex<f64>], next: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let n = prev.len();
    assert_eq!(n, next.len());
    let full = 1usize << n;
    let mut cost = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    cost[0] = 0.0;
    for mask in 0..full {
        if !cost[mask].is_finite() {
            continue;
        }
        let i = mask.count_ones() as usize;
        if i == n {
            continue;
        }
        for j in 0..n {
            if mask & (1 << j) == 0 {
                let nm = mask | (1 << j);
                let c = cost[mask] + (prev[i] - next[j]).norm();
                if c < cost[nm] {
                    cost[nm] = c;
                    choice[nm] = j;
                }
            }
        }
    }
    let mut out = vec![Complex::new(0.0, 0.0); n];
    let mut mask = full - 1;
    for i in (0..n).rev() {
        let j = choice[mask];
        out[i] = next[j];
        mask &= !(1 << j);
    }
    out
}

fn state_scales(x: &HillState) -> [f64; 8] {
    [x.r1, 1.0, x.g1 / x.r1, x.g1, x.r2, 1.0, x.g2 / x.r2, x.g2]
}

/// `C` that makes `cos J = cos j_p` for the given angular momenta.
pub fn c_for_inclination(g1: f64, g2: f64, j_p: f64) -> ReducedParameter {
    ReducedParameter((g1 * g1 + g2 * g2 + 2.0 * g1 * g2 * j_p.cos()).max(0.0).sqrt())
}

/// Newton–QR solver bound to one mass configuration.
pub struct OrbitSolver {
    flow: HillFlow,
    pub tol: Tolerance,
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl OrbitSolver {
    pub fn new(masses: &MassConfig) -> Self {
        Self {
            flow: HillFlow::new(masses),
            tol: Tolerance::default(),
            residual_tol: 1e-12,
            max_iter: 50,
        }
    }

    pub fn masses(&self) -> &MassConfig {
        self.flow.masses()
    }

    pub fn flow(&self) -> &HillFlow {
        &self.flow
    }

    pub fn residual(&self, x: &HillState, c: ReducedParameter, j_p: f64) -> Result<[f64; 10]> {
        let r = self.flow.propagate(x, c, PERIOD, &self.tol)?;
        Ok(assemble_residual(x, c, j_p, &r.final_state))
    }

    /// Residual, its 10×9 Jacobian, the monodromy matrix and the node
    /// advance over one period.
    fn linearize(
        &self,
        x: &HillState,
        c: ReducedParameter,
        j_p: f64,
    ) -> Result<([f64; 10], Jac, [[f64; 8]; 8], f64)> {
        let v = self.flow.propagate_variational(x, c, PERIOD, &self.tol)?;
        let res = assemble_residual(x, c, j_p, &v.final_state);
        let mut jac = Jac::zeros();
        for i in 0..8 {
            for j in 0..8 {
                jac[(i, j)] = v.transition_matrix[i][j] - if i == j { 1.0 } else { 0.0 };
            }
            jac[(i, 8)] = v.dc_column[i];
        }
        jac[(8, 1)] = 1.0;
        jac[(8, 5)] = 1.0;
        let cj = cos_mutual_inclination(x.g1, x.g2, c.0);
        jac[(9, 3)] = -1.0 / x.g2 - cj / x.g1;
        jac[(9, 7)] = -1.0 / x.g1 - cj / x.g2;
        jac[(9, 8)] = c.0 / (x.g1 * x.g2);
        Ok((res, jac, v.transition_matrix, v.node_advance))
    }

    /// Gauss–Newton on the residual from `guess`, least squares through a
    /// column-pivoted QR factorization of the scaled Jacobian.
    pub fn solve(&self, guess: (HillState, ReducedParameter), j_p: f64) -> Result<PeriodicOrbit> {
        let (mut x, mut c) = guess;
        let mut iterations = 0;
        loop {
            let (res, jac, mono, node) = self.linearize(&x, c, j_p)?;
            let norm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < self.residual_tol {
                return Ok(self.finish(x, c, j_p, mono, node, norm, iterations));
            }
            if iterations >= self.max_iter {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: norm,
                });
            }
            let step = least_squares_step(&x, c, &res, &jac)?;
            let mut a = x.to_array();
            for i in 0..8 {
                a[i] += step[i];
            }
            x = HillState::from_array(a);
            c = ReducedParameter(c.0 + step[8]);
            iterations += 1;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        x: HillState,
        c: ReducedParameter,
        j_p: f64,
        mono: [[f64; 8]; 8],
        node: f64,
        norm: f64,
        iterations: usize,
    ) -> PeriodicOrbit {
        let eigenvalues = monodromy_eigenvalues(&mono);
        let nontrivial = nontrivial_multipliers(&mono);
        let (stable, margin) = classify_multipliers(&nontrivial);
        PeriodicOrbit {
            x0: x,
            c,
            masses: *self.masses(),
            period: PERIOD,
            j_p,
            eigenvalues,
            nontrivial,
            stable,
            margin,
            precession_per_period: node.to_degrees(),
            residual_norm: norm,
            iterations,
        }
    }
}

fn assemble_residual(x: &HillState, c: ReducedParameter, j_p: f64, end: &HillState) -> [f64; 10] {
    let a = x.to_array();
    let b = end.to_array();
    let mut r = [0.0; 10];
    for i in 0..8 {
        r[i] = b[i] - a[i];
    }
    // one full turn of each unwrapped anomaly per period
    r[1] -= 2.0 * PI;
    r[5] -= 2.0 * PI;
    r[8] = x.w1 + x.w2 - SECTION_SUM;
    r[9] = cos_mutual_inclination(x.g1, x.g2, c.0) - j_p.cos();
    r
}

fn least_squares_step(x: &HillState, c: ReducedParameter, res: &[f64; 10], jac: &Jac) -> Result<Vec9> {
    let s = state_scales(x);
    let col: [f64; 9] = std::array::from_fn(|j| if j < 8 { s[j] } else { c.0 });
    let row: [f64; 10] = std::array::from_fn(|i| if i < 8 { s[i] } else { 1.0 });
    let scaled = Jac::from_fn(|i, j| jac[(i, j)] * col[j] / row[i]);
    let qr = scaled.col_piv_qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    let rank = (0..9).filter(|&k| r[(k, k)].abs() > RANK_TOLERANCE * r00).count();
    if rank < 9 {
        let svd = scaled.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let k = (0..9)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap_or(8);
        return Err(Error::RankDeficiency {
            rank,
            expected: 9,
            direction: (0..9).map(|j| vt[(k, j)] * col[j]).collect(),
        });
    }
    let mut b = Vec10::from_fn(|i, _| -res[i] / row[i]);
    qr.q_tr_mul(&mut b);
    let mut z = Vec9::zeros();
    for i in (0..9).rev() {
        let mut acc = b[i];
        for j in i + 1..9 {
            acc -= r[(i, j)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut z);
    Ok(Vec9::from_fn(|j, _| z[j] * col[j]))
}

pub fn residual(
    x: &HillState,
    c: ReducedParameter,
    masses: &MassConfig,
    j_p: f64,
) -> Result<[f64; 10]> {
    OrbitSolver::new(masses).residual(x, c, j_p)
}

/// Converge a periodic orbit at `J_p = j_p` (radians) with the default
/// tolerance 1e-12 and at most 50 iterations.
pub fn solve_orbit(
    guess: (HillState, ReducedParameter),
    masses: &MassConfig,
    j_p: f64,
) -> Result<PeriodicOrbit> {
    OrbitSolver::new(masses).solve(guess, j_p)
}

/// Continuation controls. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start_deg: f64,
    pub end_deg: f64,
    pub step_deg: f64,
    pub min_step_deg: f64,
    /// Step used within `junction_window_deg` of [`JUNCTION_DEG`].
    pub junction_step_deg: f64,
    pub junction_window_deg: f64,
    /// Iteration budget for accepting a continuation step.
    pub max_step_iterations: usize,
    pub secant_predictor: bool,
}

impl Schedule {
    pub fn new(start_deg: f64, end_deg: f64, step_deg: f64) -> Self {
        Self {
            start_deg,
            end_deg,
            step_deg,
            min_step_deg: 1e-3,
            junction_step_deg: 0.05,
            junction_window_deg: 2.0,
            max_step_iterations: 10,
            secant_predictor: true,
        }
    }

    fn nominal_step(&self, j_deg: f64) -> f64 {
        let near = (j_deg - JUNCTION_DEG).abs() < self.junction_window_deg;
        if near {
            self.step_deg.min(self.junction_step_deg)
        } else {
            self.step_deg
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyBranch {
    pub origin: Origin,
    pub masses: MassConfig,
    pub orbits: Vec<PeriodicOrbit>,
    pub schedule: Schedule,
    /// Rejected continuation attempts as `(J_p target in degrees, reason)`.
    pub failures: Vec<(f64, String)>,
    /// Set when continuation stopped before the end of the schedule.
    pub stalled: Option<Error>,
}

impl FamilyBranch {
    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "{}", PeriodicOrbit::csv_header())?;
        }
        for o in &self.orbits {
            writeln!(out, "{}", o.csv_row())?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&PeriodicOrbit> {
        self.orbits.last()
    }

    /// Eigenvalues of every member, reordered to follow continuously along
    /// the branch.
    pub fn paired_eigenvalues(&self) -> Vec<Vec<Complex<f64>>> {
        let mut out: Vec<Vec<Complex<f64>>> = Vec::with_capacity(self.orbits.len());
        for o in &self.orbits {
            let next = match out.last() {
                Some(prev) => pair_eigenvalues(prev, &o.eigenvalues),
                None => o.eigenvalues.clone(),
            };
            out.push(next);
        }
        out
    }
}

/// Linear predictor from the last two members, with `C` re-fitted so the
/// inclination section holds exactly.
fn predict(orbits: &[PeriodicOrbit], j_p: f64, secant: bool) -> (HillState, ReducedParameter) {
    let last = orbits.last().expect("non-empty branch");
    let mut x = last.x0.to_array();
    if secant && orbits.len() >= 2 {
        let prev = &orbits[orbits.len() - 2];
        let dj = last.j_p - prev.j_p;
        if dj.abs() > 0.0 {
            let t = (j_p - last.j_p) / dj;
            let p = prev.x0.to_array();
            for i in 0..8 {
                x[i] += t * (x[i] - p[i]);
            }
        }
    }
    let x = HillState::from_array(x);
    (x, c_for_inclination(x.g1, x.g2, j_p))
}

/// Continue the family from `origin` along `schedule`, or from the last
/// members of `history` when it is not empty (these are kept but not passed
/// to `on_orbit`). On failure the step is halved down to
/// `schedule.min_step_deg`; below that the branch is returned with
/// `stalled` set.
pub fn continue_family_partial(
    solver: &OrbitSolver,
    origin: Origin,
    schedule: &Schedule,
    history: Vec<PeriodicOrbit>,
    mut on_orbit: impl FnMut(&PeriodicOrbit),
) -> FamilyBranch {
    let masses = *solver.masses();
    let mut branch = FamilyBranch {
        origin,
        masses,
        orbits: Vec::new(),
        schedule: schedule.clone(),
        failures: Vec::new(),
        stalled: None,
    };
    if history.is_empty() {
        let first = origin.seed(&masses).and_then(|(x, c)| {
            let j0 = schedule.start_deg.to_radians();
            let c = if j0 == 0.0 { c } else { c_for_inclination(x.g1, x.g2, j0) };
            solver.solve((x, c), j0)
        });
        match first {
            Ok(o) => {
                on_orbit(&o);
                branch.orbits.push(o);
            }
            Err(e) => {
                branch.stalled = Some(e);
                return branch;
            }
        }
    } else {
        branch.orbits = history;
    }
    let dir = if schedule.end_deg >= schedule.start_deg { 1.0 } else { -1.0 };
    let step_solver = OrbitSolver {
        flow: HillFlow::new(&masses),
        tol: solver.tol,
        residual_tol: solver.residual_tol,
        max_iter: schedule.max_step_iterations,
    };
    let mut step = schedule.nominal_step(schedule.start_deg);
    loop {
        let last_deg = branch.orbits.last().unwrap().j_p_deg();
        let remaining = (schedule.end_deg - last_deg) * dir;
        if remaining <= 1e-9 {
            break;
        }
        step = step.min(schedule.nominal_step(last_deg));
        let mut target = last_deg + dir * step.min(remaining);
        // do not step over the edge of the refined window
        let edge_lo = JUNCTION_DEG - schedule.junction_window_deg;
        if dir > 0.0 && last_deg < edge_lo && target > edge_lo && step > schedule.junction_step_deg {
            target = edge_lo;
        }
        let guess = predict(&branch.orbits, target.to_radians(), schedule.secant_predictor);
        match step_solver.solve(guess, target.to_radians()) {
            Ok(o) => {
                on_orbit(&o);
                branch.orbits.push(o);
                // recover the nominal step after successes
                step = (step * 2.0).min(schedule.nominal_step(target));
            }
            Err(e) => {
                branch.failures.push((target, e.to_string()));
                step /= 2.0;
                if step < schedule.min_step_deg {
                    branch.stalled = Some(Error::ContinuationStalled {
                        last_good_deg: last_deg,
                    });
                    break;
                }
            }
        }
    }
    branch
}

/// Continue the family over the schedule (angles in degrees) from the given
/// relative equilibrium.
pub fn continue_family(origin: Origin, masses: &MassConfig, schedule: &Schedule) -> Result<FamilyBranch> {
    let solver = OrbitSolver::new(masses);
    let branch = continue_family_partial(&solver, origin, schedule, Vec::new(), |_| {});
    match branch.stalled.clone() {
        Some(e) => Err(e),
        None => Ok(branch),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub iteration: usize,
    pub j_lo_deg: f64,
    pub j_hi_deg: f64,
    pub probe_deg: f64,
    pub stable: bool,
    pub margin: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub j_star_deg: f64,
    /// Orbits on both sides of the transition at the final resolution.
    pub lower: PeriodicOrbit,
    pub upper: PeriodicOrbit,
    pub log: Vec<BisectionStep>,
}

/// Locate the stability change inside `bracket_deg` by bisection on `J_p`,
/// each probe a full orbit solve seeded by interpolation between the
/// current bracket ends. `seed` must be a converged member of the family
/// not far from the bracket.
pub fn find_transition(
    solver: &OrbitSolver,
    seed: &[PeriodicOrbit],
    bracket_deg: (f64, f64),
    tol_deg: f64,
) -> Result<Transition> {
    let (lo_deg, hi_deg) = bracket_deg;
    if !(lo_deg < hi_deg) || seed.is_empty() {
        return Err(Error::BracketInvalid(format!(
            "need J_lo < J_hi and a seed orbit, got ({lo_deg}, {hi_deg})"
        )));
    }
    let nearest = |j: f64| -> Vec<PeriodicOrbit> {
        let mut v: Vec<&PeriodicOrbit> = seed.iter().collect();
        v.sort_by(|a, b| (a.j_p_deg() - j).abs().total_cmp(&(b.j_p_deg() - j).abs()));
        v.into_iter().take(2).rev().cloned().collect()
    };
    let solve_at = |j: f64, from: &[PeriodicOrbit]| -> Result<PeriodicOrbit> {
        let mut sorted: Vec<PeriodicOrbit> = from.to_vec();
        sorted.sort_by(|a, b| (b.j_p_deg() - j).abs().total_cmp(&(a.j_p_deg() - j).abs()));
        let guess = predict(&sorted, j.to_radians(), true);
        solver.solve(guess, j.to_radians())
    };
    let mut lo = solve_at(lo_deg, &nearest(lo_deg))?;
    let mut hi = solve_at(hi_deg, &nearest(hi_deg))?;
    if lo.stable == hi.stable {
        return Err(Error::BracketInvalid(format!(
            "stability is {} at both {lo_deg}° and {hi_deg}°",
            if lo.stable { "stable" } else { "unstable" }
        )));
    }
    let mut log = Vec::new();
    let mut iteration = 0;
    while hi.j_p_deg() - lo.j_p_deg() > tol_deg {
        let mid = 0.5 * (lo.j_p_deg() + hi.j_p_deg());
        let probe = solve_at(mid, &[lo.clone(), hi.clone()])?;
        log.push(BisectionStep {
            iteration,
            j_lo_deg: lo.j_p_deg(),
            j_hi_deg: hi.j_p_deg(),
            probe_deg: mid,
            stable: probe.stable,
            margin: probe.margin,
            residual_norm: probe.residual_norm,
        });
        if probe.stable == lo.stable {
            lo = probe;
        } else {
            hi = probe;
        }
        iteration += 1;
    }
    Ok(Transition {
        j_star_deg: 0.5 * (lo.j_p_deg() + hi.j_p_deg()),
        lower: lo,
        upper: hi,
        log,
    })
}

/// Stable `J_p` intervals (degrees) along a branch, from consecutive members
/// with the same classification.
pub fn stable_intervals(branch: &FamilyBranch) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for o in &branch.orbits {
        match (o.stable, start) {
            (true, None) => start = Some(o.j_p_deg()),
            (false, Some(s)) => {
                out.push((s, last));
                start = None;
            }
            _ => {}
        }
        last = o.j_p_deg();
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_recovers_permutation() {
        let a: Vec<Complex<f64>> = (0..8).map(|k| Complex::from_polar(1.0, k as f64 * 0.7)).collect();
        let mut b: Vec<Complex<f64>> = a.iter().map(|z| z * Complex::from_polar(1.0, 0.01)).collect();
        b.reverse();
        b.swap(1, 5);
        let p = pair_eigenvalues(&a, &b);
        for (x, y) in a.iter().zip(&p) {
            assert!((x - y).norm() < 0.02);
        }
    }

    #[test]
    fn least_squares_solves_consistent_system() {
        let x = HillState::from_array([0.3, 0.5, 1e-4, 5e-4, 0.31, -0.4, 2e-5, 6e-4]);
        let c = ReducedParameter(1e-3);
        let jac = Jac::from_fn(|i, j| ((i * 7 + j * 3) % 11) as f64 + if i == j { 5.0 } else { 0.0 });
        let truth = Vec9::from_fn(|j, _| (j as f64 + 1.0) * 1e-5);
        let rhs = jac * truth;
        let res: [f64; 10] = std::array::from_fn(|i| -rhs[i]);
        let step = least_squares_step(&x, c, &res, &jac).unwrap();
        assert!((step - truth).norm() < 1e-14);
    }

    #[test]
    fn quadruplet_defect_of_symplectic_set_is_zero() {
        let z = Complex::from_polar(1.2, 0.4);
        let ev = vec![z, z.conj(), z.inv(), z.inv().conj()];
        assert!(quadruplet_defect(&ev) < 1e-15);
        let bad = vec![z, z.conj()];
        assert!(quadruplet_defect(&bad) > 0.1);
    }
}
