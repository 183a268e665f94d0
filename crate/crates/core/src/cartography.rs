//! Batch scans of the full problem: maximum-eccentricity maps, the
//! stability chimney of the Lagrange family in the (J, ε) plane, and slabs
//! of initial conditions parallel to the family.
//!
//! Cells are independent and run on the current rayon pool; output order is
//! the cell index whatever the number of workers.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{HillFlow, Tolerance};
use crate::hill::{
    fmt_f64, kepler_radius, mutual_distance, osculating, HillState, MassConfig, ReducedParameter,
};
use crate::orbit::{
    continue_family_partial, find_transition, stable_intervals, FamilyBranch, OrbitSolver, Origin,
    Schedule, MEAN_MOTION,
};

/// Largest spread of the two semi-major axes, relative to their mean.
pub const ESCAPE_SPREAD: f64 = 0.2;
/// Allowed range of `r1/r2`.
pub const DISTANCE_RATIO: (f64, f64) = (0.5, 2.0);
/// Collision when the planets come closer than this fraction of `a`.
pub const COLLISION_FRACTION: f64 = 1e-3;
/// Bounded cells below this eccentricity count as stable.
pub const BOUNDED_ECC: f64 = 0.05;
/// Integrator tolerance of the scans.
pub const MAP_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisKind {
    /// `λ1 - λ2` in degrees.
    DeltaLambda,
    /// `J0` in degrees.
    Inclination,
    /// Planet mass scale `ε`.
    Eps,
}

impl AxisKind {
    pub fn label(&self) -> &'static str {
        match self {
            AxisKind::DeltaLambda => "dlambda",
            AxisKind::Inclination => "J0",
            AxisKind::Eps => "eps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dlambda" => Ok(AxisKind::DeltaLambda),
            "J0" | "J" => Ok(AxisKind::Inclination),
            "eps" => Ok(AxisKind::Eps),
            _ => Err(Error::Domain(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(kind: AxisKind, min: f64, max: f64, count: usize) -> Self {
        Self { kind, min, max, count }
    }

    /// `count` evenly spaced values, both ends included.
    pub fn values(&self) -> Vec<f64> {
        let n = self.count.max(2);
        (0..n)
            .map(|k| self.min + (self.max - self.min) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Inner (fastest varying) axis.
    pub axis1: Axis,
    pub axis2: Axis,
    /// Integration length in orbital periods.
    pub periods: f64,
    /// Mass template. An `Eps` axis rescales its planets at fixed ratio.
    pub masses: MassConfig,
    pub tolerance: f64,
}

impl GridSpec {
    /// The desk-scale map: 61 values of `λ1 - λ2` over a full turn and 46 of
    /// `J0` from 0 to 112.5°, 2000 periods.
    pub fn desk(masses: MassConfig) -> Self {
        Self {
            axis1: Axis::new(AxisKind::DeltaLambda, 0.0, 360.0, 61),
            axis2: Axis::new(AxisKind::Inclination, 0.0, 112.5, 46),
            periods: 2000.0,
            masses,
            tolerance: MAP_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis1.count < 2 || self.axis2.count < 2 {
            return Err(Error::Domain("axis counts must be at least 2".into()));
        }
        if !(self.periods > 0.0 && self.periods.is_finite()) {
            return Err(Error::Domain(format!("duration must be positive, got {}", self.periods)));
        }
        if self.axis1.kind == self.axis2.kind {
            return Err(Error::Domain("the two axes must differ".into()));
        }
        for ax in [&self.axis1, &self.axis2] {
            let ok = match ax.kind {
                AxisKind::DeltaLambda => ax.min.is_finite() && ax.max.is_finite(),
                AxisKind::Inclination => ax.min >= 0.0 && ax.max < 180.0,
                AxisKind::Eps => ax.min > 0.0 && ax.max < 0.25,
            };
            if !ok {
                return Err(Error::Domain(format!("axis {} out of range", ax.kind.label())));
            }
        }
        Tolerance::uniform(self.tolerance)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axis1.count * self.axis2.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Bounded,
    Escaped,
    Collided,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Bounded => "bounded",
            Outcome::Escaped => "escaped",
            Outcome::Collided => "collided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub index: usize,
    pub axis1: f64,
    pub axis2: f64,
    /// Largest osculating eccentricity of either planet up to the end or
    /// the loss time.
    pub max_ecc: f64,
    pub outcome: Outcome,
    pub time_of_loss: Option<f64>,
}

impl MapCell {
    /// Bounded with both eccentricities below [`BOUNDED_ECC`].
    pub fn stable(&self) -> bool {
        self.outcome == Outcome::Bounded && self.max_ecc < BOUNDED_ECC
    }

    pub fn csv_header() -> &'static str {
        "axis1,axis2,max_ecc,outcome,time_of_loss"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt_f64(self.axis1),
            fmt_f64(self.axis2),
            fmt_f64(self.max_ecc),
            self.outcome.label(),
            self.time_of_loss.map(fmt_f64).unwrap_or_default()
        )
    }
}

pub fn write_map_csv<W: Write>(out: &mut W, cells: &[MapCell]) -> std::io::Result<()> {
    writeln!(out, "{}", MapCell::csv_header())?;
    for c in cells {
        writeln!(out, "{}", c.csv_row())?;
    }
    Ok(())
}

/// Masses with the template's planet ratio and planet scale `eps`.
pub fn scaled_masses(template: &MassConfig, eps: f64) -> Result<MassConfig> {
    MassConfig::with_ratio(2.0 * eps, template.m1 / template.m2)
}

/// Circular orbits of radius `a` inclined by `J0/2` each on opposite nodes,
/// with planet 2 on the node line and planet 1 `dlambda` ahead (radians).
pub fn circular_state(
    masses: &MassConfig,
    a: f64,
    dlambda: f64,
    j0: f64,
) -> (HillState, ReducedParameter) {
    let g = |j: usize| masses.beta(j) * (masses.mu(j) * a).sqrt();
    let (g1, g2) = (g(1), g(2));
    let c = (g1 * g1 + g2 * g2 + 2.0 * g1 * g2 * j0.cos()).sqrt();
    let x = HillState {
        r1: a,
        w1: dlambda,
        big_r1: 0.0,
        g1,
        r2: a,
        w2: 0.0,
        big_r2: 0.0,
        g2,
    };
    (x, ReducedParameter(c))
}

/// Result of following one initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    pub max_ecc: f64,
    pub outcome: Outcome,
    pub time_of_loss: Option<f64>,
}

/// Propagate `duration` time units, sampling the elements at every step.
/// `a_ref` sets the collision distance.
pub fn track(
    flow: &HillFlow,
    x0: &HillState,
    c: ReducedParameter,
    duration: f64,
    a_ref: f64,
    tol: &Tolerance,
) -> Track {
    let masses = *flow.masses();
    let mut max_ecc: f64 = 0.0;
    let mut lost: Option<(Outcome, f64)> = None;
    let mut last_t = 0.0;
    let run = flow.propagate_observed(x0, c, duration, tol, |seg| {
        let x = seg.hill_at(0.0);
        last_t = seg.t0;
        let o1 = osculating(&x, &masses, 1);
        let o2 = osculating(&x, &masses, 2);
        max_ecc = max_ecc.max(o1.e).max(o2.e);
        let ratio = x.r1 / x.r2;
        let spread = (o1.a - o2.a).abs() / (0.5 * (o1.a + o2.a));
        if mutual_distance(&x, c) < COLLISION_FRACTION * a_ref {
            lost = Some((Outcome::Collided, seg.t0));
        } else if !o1.bound
            || !o2.bound
            || spread > ESCAPE_SPREAD
            || ratio < DISTANCE_RATIO.0
            || ratio > DISTANCE_RATIO.1
        {
            lost = Some((Outcome::Escaped, seg.t0));
        }
        lost.is_none()
    });
    let (outcome, time) = match (lost, run) {
        (Some((o, t)), _) => (o, Some(t)),
        (None, Ok(_)) => (Outcome::Bounded, None),
        (None, Err(Error::Collision { time, .. })) => (Outcome::Collided, Some(time)),
        (None, Err(_)) => (Outcome::Escaped, Some(last_t)),
    };
    Track {
        max_ecc,
        outcome,
        time_of_loss: time,
    }
}

/// Run every cell of `grid`. Per-cell failures become outcomes.
pub fn run_map(grid: &GridSpec) -> Result<Vec<MapCell>> {
    run_map_cells(grid, 0..grid.len())
}

/// Run the cells with indices in `cells`, for checkpointed scans.
pub fn run_map_cells(grid: &GridSpec, cells: Range<usize>) -> Result<Vec<MapCell>> {
    grid.validate()?;
    let cells = cells.start.min(grid.len())..cells.end.min(grid.len());
    let v1 = grid.axis1.values();
    let v2 = grid.axis2.values();
    let tol = Tolerance::uniform(grid.tolerance)?;
    let eps_axis = [&grid.axis1, &grid.axis2]
        .into_iter()
        .position(|a| a.kind == AxisKind::Eps);
    // one recorded vector field per distinct mass set
    let flows: Vec<HillFlow> = match eps_axis {
        Some(0) => v1
            .iter()
            .map(|&e| scaled_masses(&grid.masses, e).map(|m| HillFlow::new(&m)))
            .collect::<Result<_>>()?,
        Some(_) => v2
            .iter()
            .map(|&e| scaled_masses(&grid.masses, e).map(|m| HillFlow::new(&m)))
            .collect::<Result<_>>()?,
        None => vec![HillFlow::new(&grid.masses)],
    };
    let n1 = grid.axis1.count;
    let cells = cells
        .into_par_iter()
        .map(|index| {
            let (i1, i2) = (index % n1, index / n1);
            let mut dlambda = 60.0;
            let mut j0 = 0.0;
            for (ax, v) in [(&grid.axis1, v1[i1]), (&grid.axis2, v2[i2])] {
                match ax.kind {
                    AxisKind::DeltaLambda => dlambda = v,
                    AxisKind::Inclination => j0 = v,
                    AxisKind::Eps => {}
                }
            }
            let flow = match eps_axis {
                Some(0) => &flows[i1],
                Some(_) => &flows[i2],
                None => &flows[0],
            };
            let a = kepler_radius(flow.masses(), MEAN_MOTION);
            let (x, c) = circular_state(flow.masses(), a, dlambda.to_radians(), j0.to_radians());
            let t = track(flow, &x, c, grid.periods, a, &tol);
            MapCell {
                index,
                axis1: v1[i1],
                axis2: v2[i2],
                max_ecc: t.max_ecc,
                outcome: t.outcome,
                time_of_loss: t.time_of_loss,
            }
        })
        .collect();
    Ok(cells)
}

/// Controls of the (J, ε) scan. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChimneySpec {
    pub eps: Vec<f64>,
    pub j_end_deg: f64,
    pub j_step_deg: f64,
    /// Resolution of the refined window edges.
    pub refine_tol_deg: f64,
    /// Resolution in ε of the onset of instability at `J = 0`.
    pub onset_tol: f64,
}

impl ChimneySpec {
    /// `ε` from `lo` to `hi` by `step`, J from 0 to `j_end_deg` by 0.5°.
    pub fn desk(lo: f64, hi: f64, step: f64, j_end_deg: f64) -> Self {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        Self {
            eps: (0..=n).map(|k| lo + step * k as f64).collect(),
            j_end_deg,
            j_step_deg: 0.5,
            refine_tol_deg: 1e-2,
            onset_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChimneyRow {
    pub eps: f64,
    pub j_deg: f64,
    pub stable: bool,
}

/// A stable interval of the family at one `ε`. An edge at either end of the
/// scanned range is left unrefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableWindow {
    pub eps: f64,
    pub j_lower_deg: f64,
    pub j_upper_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChimneyScan {
    pub rows: Vec<ChimneyRow>,
    pub windows: Vec<StableWindow>,
    /// `(ε, message)` for continuations that stopped early or edges that
    /// could not be refined.
    pub failures: Vec<(f64, String)>,
    /// Smallest `ε` at which the planar equilibrium is unstable.
    pub onset_eps: Option<f64>,
}

impl ChimneyScan {
    pub fn windows_at(&self, eps: f64) -> Vec<StableWindow> {
        self.windows
            .iter()
            .filter(|w| (w.eps - eps).abs() < 1e-12)
            .copied()
            .collect()
    }

    pub fn write_rows_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "eps,J_deg,stable")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", fmt_f64(r.eps), fmt_f64(r.j_deg), r.stable as u8)?;
        }
        Ok(())
    }

    pub fn write_windows_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "eps,J_lower_deg,J_upper_deg")?;
        for w in &self.windows {
            writeln!(out, "{},{},{}", fmt_f64(w.eps), fmt_f64(w.j_lower_deg), fmt_f64(w.j_upper_deg))?;
        }
        Ok(())
    }
}

/// One `ε` of the chimney: the classified family and its refined windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChimneyColumn {
    pub eps: f64,
    pub rows: Vec<ChimneyRow>,
    pub windows: Vec<StableWindow>,
    /// Stalls and edges that could not be refined.
    pub notes: Vec<String>,
}

impl ChimneyColumn {
    /// Continue the equal-planet family at `eps` and refine its stable
    /// windows. Failures end up in `notes`.
    pub fn compute(eps: f64, spec: &ChimneySpec) -> Self {
        match chimney_column(eps, spec) {
            Ok((branch, windows, notes)) => Self {
                eps,
                rows: branch
                    .orbits
                    .iter()
                    .map(|o| ChimneyRow {
                        eps,
                        j_deg: o.j_p_deg(),
                        stable: o.stable,
                    })
                    .collect(),
                windows,
                notes,
            },
            Err(e) => Self {
                eps,
                rows: Vec::new(),
                windows: Vec::new(),
                notes: vec![e.to_string()],
            },
        }
    }

    /// Classification at `J = 0`, when the family started.
    pub fn planar_stable(&self) -> Option<bool> {
        self.rows.first().filter(|r| r.j_deg == 0.0).map(|r| r.stable)
    }
}

/// Equal-planet family at one `ε` with its refined stable windows.
pub fn chimney_column(
    eps: f64,
    spec: &ChimneySpec,
) -> Result<(FamilyBranch, Vec<StableWindow>, Vec<String>)> {
    let masses = MassConfig::equal_planets(eps)?;
    let solver = OrbitSolver::new(&masses);
    let schedule = Schedule::new(0.0, spec.j_end_deg, spec.j_step_deg);
    let branch = continue_family_partial(&solver, Origin::L4, &schedule, Vec::new(), |_| {});
    let mut notes = Vec::new();
    if let Some(e) = &branch.stalled {
        notes.push(e.to_string());
    }
    let js: Vec<f64> = branch.orbits.iter().map(|o| o.j_p_deg()).collect();
    let refine = |a: f64, b: f64, notes: &mut Vec<String>| -> f64 {
        match find_transition(&solver, &branch.orbits, (a, b), spec.refine_tol_deg) {
            Ok(t) => t.j_star_deg,
            Err(e) => {
                notes.push(format!("edge in ({a}, {b}): {e}"));
                0.5 * (a + b)
            }
        }
    };
    let mut windows = Vec::new();
    for (lo, hi) in stable_intervals(&branch) {
        let k_lo = js.iter().position(|&j| j == lo).unwrap_or(0);
        let k_hi = js.iter().position(|&j| j == hi).unwrap_or(js.len() - 1);
        let lower = if k_lo == 0 { lo } else { refine(js[k_lo - 1], lo, &mut notes) };
        let upper = if k_hi + 1 == js.len() { hi } else { refine(hi, js[k_hi + 1], &mut notes) };
        windows.push(StableWindow {
            eps,
            j_lower_deg: lower,
            j_upper_deg: upper,
        });
    }
    Ok((branch, windows, notes))
}

/// Stability of the planar equilateral equilibrium at `ε`.
fn planar_stable(eps: f64) -> Result<bool> {
    let masses = MassConfig::equal_planets(eps)?;
    let solver = OrbitSolver::new(&masses);
    Ok(solver.solve(Origin::L4.seed(&masses)?, 0.0)?.stable)
}

impl ChimneySpec {
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() || !(self.j_step_deg > 0.0) || !(self.j_end_deg > 0.0) {
            return Err(Error::Domain("chimney needs ε values and a positive J range".into()));
        }
        if !(self.refine_tol_deg > 0.0) || !(self.onset_tol > 0.0) {
            return Err(Error::Domain("chimney tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Scan every `ε` column and bisect the planar onset in `ε` between the
/// last stable and first unstable column.
pub fn chimney_scan(spec: &ChimneySpec) -> Result<ChimneyScan> {
    spec.validate()?;
    let columns: Vec<ChimneyColumn> = spec
        .eps
        .par_iter()
        .map(|&e| ChimneyColumn::compute(e, spec))
        .collect();
    assemble_chimney(spec, columns)
}

/// Merge finished columns (in any order) into a scan and locate the onset.
pub fn assemble_chimney(spec: &ChimneySpec, mut columns: Vec<ChimneyColumn>) -> Result<ChimneyScan> {
    spec.validate()?;
    columns.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let mut scan = ChimneyScan {
        rows: Vec::new(),
        windows: Vec::new(),
        failures: Vec::new(),
        onset_eps: None,
    };
    let mut planar: Vec<(f64, bool)> = Vec::new();
    for col in columns {
        if let Some(s) = col.planar_stable() {
            planar.push((col.eps, s));
        }
        scan.rows.extend(col.rows);
        scan.windows.extend(col.windows);
        scan.failures.extend(col.notes.into_iter().map(|n| (col.eps, n)));
    }
    if let Some(k) = planar.windows(2).position(|w| w[0].1 && !w[1].1) {
        let (mut lo, mut hi) = (planar[k].0, planar[k + 1].0);
        while hi - lo > spec.onset_tol {
            let mid = 0.5 * (lo + hi);
            if planar_stable(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        scan.onset_eps = Some(0.5 * (lo + hi));
    } else if planar.first().is_some_and(|p| !p.1) {
        scan.onset_eps = planar.first().map(|p| p.0);
    }
    Ok(scan)
}

/// Controls of a slab: family members every `j_step_deg` up to `j_end_deg`,
/// each with `w2` shifted by `k·offset_step_deg` for `|k| <= offset_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub eps: f64,
    pub j_end_deg: f64,
    pub j_step_deg: f64,
    pub offset_step_deg: f64,
    pub offset_max: usize,
    pub periods: f64,
    pub tolerance: f64,
}

impl SlabSpec {
    pub fn desk(eps: f64) -> Self {
        Self {
            eps,
            j_end_deg: 64.0,
            j_step_deg: 0.2,
            offset_step_deg: 0.5,
            offset_max: 40,
            periods: 10_000.0,
            tolerance: MAP_TOLERANCE,
        }
    }

    /// Cells per family member.
    pub fn width(&self) -> usize {
        2 * self.offset_max + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.periods > 0.0) || !(self.j_step_deg > 0.0) || !(self.j_end_deg >= 0.0) {
            return Err(Error::Domain("slab needs positive duration and J step".into()));
        }
        Tolerance::uniform(self.tolerance)?;
        Ok(())
    }
}

/// The family members a slab is built around.
pub fn slab_family(spec: &SlabSpec) -> Result<FamilyBranch> {
    spec.validate()?;
    let masses = MassConfig::equal_planets(spec.eps)?;
    let solver = OrbitSolver::new(&masses);
    let schedule = Schedule::new(0.0, spec.j_end_deg, spec.j_step_deg);
    let branch = continue_family_partial(&solver, Origin::L4, &schedule, Vec::new(), |_| {});
    match (&branch.stalled, branch.orbits.is_empty()) {
        (Some(e), true) => Err(e.clone()),
        _ => Ok(branch),
    }
}

/// Cells with indices in `cells` around `branch`; see [`family_slab_scan`].
pub fn slab_cells(spec: &SlabSpec, branch: &FamilyBranch, cells: Range<usize>) -> Result<Vec<MapCell>> {
    spec.validate()?;
    let width = spec.width();
    let total = branch.orbits.len() * width;
    let cells = cells.start.min(total)..cells.end.min(total);
    let tol = Tolerance::uniform(spec.tolerance)?;
    let a = kepler_radius(&branch.masses, MEAN_MOTION);
    let flow = HillFlow::new(&branch.masses);
    Ok(cells
        .into_par_iter()
        .map(|index| {
            let o = &branch.orbits[index / width];
            let k = (index % width) as f64 - spec.offset_max as f64;
            let mut x = o.x0;
            x.w2 += (k * spec.offset_step_deg).to_radians();
            let t = track(&flow, &x, o.c, spec.periods, a, &tol);
            MapCell {
                index,
                axis1: o.j_p_deg(),
                axis2: (x.w1 - x.w2).rem_euclid(2.0 * PI).to_degrees(),
                max_ecc: t.max_ecc,
                outcome: t.outcome,
                time_of_loss: t.time_of_loss,
            }
        })
        .collect())
}

/// Cells in the `(J_p, w1 - w2)` plane around the equal-planet family;
/// `axis1` is `J_p` and `axis2` is `w1 - w2` in degrees. Rows follow the
/// family members in order, the offsets within each row ascending.
pub fn family_slab_scan(spec: &SlabSpec) -> Result<Vec<MapCell>> {
    let branch = slab_family(spec)?;
    slab_cells(spec, &branch, 0..branch.orbits.len() * spec.width())
}
