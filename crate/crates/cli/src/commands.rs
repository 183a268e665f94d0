use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use coorbital::averaged::{
    averaged_family, compare_full_vs_avg, junction_inclination, node_precession_series, nu_series,
    vfl_to_junction, write_family_csv, zeta_series, AveragedPoint, Branch,
};
use coorbital::cartography::{
    assemble_chimney, run_map_cells, slab_cells, slab_family, Axis, AxisKind,
    ChimneyColumn, ChimneySpec, GridSpec, MapCell, SlabSpec,
};
use coorbital::hill::{
    fmt_f64, lagrange_anomaly_coeffs, lagrange_equilibrium, lagrange_spectrum, HillState,
    MassConfig, ReducedParameter,
};
use coorbital::orbit::{
    continue_family, continue_family_partial, find_transition, OrbitSolver, Origin, PeriodicOrbit,
    Schedule, MEAN_MOTION,
};

use crate::args::*;
use crate::manifest::{digests, RunManifest};
use crate::CliError;

/// Run one subcommand and return the files it wrote.
pub fn execute(cmd: &Command) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Lagrange(a) => lagrange(a),
        Command::AvgFamily(a) => avg_family(a),
        Command::Continue(a) => continue_cmd(a),
        Command::Transition(a) => transition(a),
        Command::Map(a) => map(a),
        Command::Chimney(a) => chimney(a),
        Command::Slab(a) => slab(a),
        Command::CompareAvg(a) => compare_avg(a),
        Command::Replay(_) => Err(CliError::usage("a manifest cannot replay another replay")),
    }
}

pub fn replay(path: &Path) -> Result<(), CliError> {
    let manifest = RunManifest::read(path)?;
    let cmd = manifest.parameters.without_resume();
    let outputs = execute(&cmd)?;
    let now = digests(&outputs)?;
    if now.len() != manifest.outputs.len() {
        return Err(CliError::numerical(
            format!("replay wrote {} files, manifest lists {}", now.len(), manifest.outputs.len()),
            None,
        ));
    }
    for (a, b) in now.iter().zip(&manifest.outputs) {
        if a != b {
            return Err(CliError::numerical(
                format!("digest mismatch for {}: {} vs {}", a.path.display(), a.sha256, b.sha256),
                None,
            ));
        }
    }
    println!("replay ok: {} output(s) reproduced", now.len());
    Ok(())
}

fn masses(m: &MassArgs) -> Result<MassConfig, CliError> {
    let cfg = match (m.m1, m.m2) {
        (Some(m1), Some(m2)) => MassConfig::new(1.0 - m1 - m2, m1, m2),
        _ => MassConfig::with_ratio(2.0 * m.eps, m.ratio),
    };
    Ok(cfg?)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("{what}: cannot parse {v:?}")))
        })
        .collect()
}

fn parse_n<const N: usize>(s: &str, what: &str) -> Result<[f64; N], CliError> {
    let v = parse_list(s, what)?;
    v.try_into()
        .map_err(|_| CliError::usage(format!("{what}: expected {N} comma-separated numbers, got {s:?}")))
}

fn parse_axis(s: &str) -> Result<Axis, CliError> {
    let f: Vec<&str> = s.split(':').collect();
    let bad = || CliError::usage(format!("axis {s:?}: expected kind:min:max:count"));
    if f.len() != 4 {
        return Err(bad());
    }
    let kind = AxisKind::parse(f[0])?;
    let min = f[1].parse().map_err(|_| bad())?;
    let max = f[2].parse().map_err(|_| bad())?;
    let count = f[3].parse().map_err(|_| bad())?;
    Ok(Axis::new(kind, min, max, count))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Data lines of a CSV written by an earlier run, after dropping a torn
/// last line. The file is truncated to the complete lines.
fn resume_lines(path: &Path, header: &str) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let complete = match text.rfind('\n') {
        Some(k) => &text[..=k],
        None => "",
    };
    let mut lines = complete.lines();
    if lines.next() != Some(header) {
        return Err(CliError::usage(format!(
            "{} does not start with the expected header",
            path.display()
        )));
    }
    let rows: Vec<String> = lines.map(str::to_string).collect();
    fs::write(path, complete).map_err(|e| CliError::io(path, e))?;
    Ok(rows)
}

fn append(path: &Path) -> Result<BufWriter<File>, CliError> {
    OpenOptions::new()
        .append(true)
        .open(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writer positioned after the rows already present (when resuming) and
/// the number of those rows.
fn open_output(path: &Path, header: &str, resume: bool) -> Result<(BufWriter<File>, Vec<String>), CliError> {
    if resume && path.exists() {
        let rows = resume_lines(path, header)?;
        Ok((append(path)?, rows))
    } else {
        let mut w = create(path)?;
        writeln!(w, "{header}").map_err(|e| CliError::io(path, e))?;
        Ok((w, Vec::new()))
    }
}

fn lagrange(a: &LagrangeArgs) -> Result<Vec<PathBuf>, CliError> {
    let m = masses(&a.masses)?;
    if !(a.omega > 0.0) {
        return Err(CliError::usage("--omega must be positive"));
    }
    let (x, c) = lagrange_equilibrium(&m, a.omega);
    let (ca, cb, cc) = lagrange_anomaly_coeffs(&m);
    let spec = lagrange_spectrum(&m, a.omega);
    let margin = 1.0 - spec.gascheau_ratio;
    let mults: Vec<[f64; 2]> = spec.all().iter().map(|z| [z.re, z.im]).collect();

    println!("masses       m0 = {}  m1 = {}  m2 = {}", m.m0, m.m1, m.m2);
    println!("rotation     omega = {}", a.omega);
    println!(
        "equilibrium  r1 = {:.12}  w1 = {:.12}  G1 = {:.12e}",
        x.r1, x.w1, x.g1
    );
    println!(
        "             r2 = {:.12}  w2 = {:.12}  G2 = {:.12e}  C = {:.12e}",
        x.r2, x.w2, x.g2, c.0
    );
    println!(
        "anomaly      a = {:.15}  b = {:.15e}  c = {:.15e}  a²-b²-c²-1 = {:.1e}",
        ca,
        cb,
        cc,
        ca * ca - cb * cb - cc * cc - 1.0
    );
    for z in spec.all() {
        println!("multiplier   {:+.12} {:+.12}i  |λ| = {:.12}", z.re, z.im, z.norm());
    }
    println!(
        "gascheau     27p/σ² = {:.12}  margin = {:+.6e}  planar equilibrium {}",
        spec.gascheau_ratio,
        margin,
        if spec.elliptic { "stable" } else { "UNSTABLE" }
    );

    let report = json!({
        "masses": { "m0": m.m0, "m1": m.m1, "m2": m.m2 },
        "omega": a.omega,
        "equilibrium": { "state": x, "C": c.0 },
        "anomaly_coefficients": { "a": ca, "b": cb, "c": cc },
        "multipliers": mults,
        "gascheau_ratio": spec.gascheau_ratio,
        "gascheau_margin": margin,
        "stable": spec.elliptic,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serialises");
    fs::write(&a.out, text + "\n").map_err(|e| CliError::io(&a.out, e))?;
    Ok(vec![a.out.clone()])
}

fn grid_deg(j_max: f64, step: f64) -> Vec<f64> {
    let n = (j_max / step + 1e-9).floor() as usize;
    (0..=n).map(|k| (k as f64 * step).to_radians()).collect()
}

fn avg_family(a: &AvgFamilyArgs) -> Result<Vec<PathBuf>, CliError> {
    let branch = Branch::parse(&a.branch)?;
    if !(a.step > 0.0) || !(0.0..180.0).contains(&a.j_max) {
        return Err(CliError::usage("need --step > 0 and 0 <= --j-max < 180"));
    }
    let m = MassConfig::equal_planets(a.eps)?;
    let jc = junction_inclination().to_degrees();
    let points = match branch {
        Branch::Vfe => averaged_family(branch, &grid_deg(a.j_max, a.step))?,
        _ if a.j_max >= jc => vfl_to_junction(branch, a.step)?,
        _ => averaged_family(branch, &grid_deg(a.j_max, a.step))?,
    };
    let mut w = create(&a.out)?;
    let io = |e| CliError::io(&a.out, e);
    if a.with_series {
        writeln!(
            w,
            "{},zeta_series_rad,nu_series,prec_series_deg_per_period",
            AveragedPoint::csv_header()
        )
        .map_err(io)?;
        for p in &points {
            let z = zeta_series(p.s0);
            let z = if p.branch == Branch::VflL5 { 2.0 * std::f64::consts::PI - z } else { z };
            let prec = node_precession_series(p.s0, &m, MEAN_MOTION).to_degrees();
            writeln!(
                w,
                "{},{},{},{}",
                p.csv_row(&m),
                fmt_f64(z),
                fmt_f64(nu_series(p.s0)),
                fmt_f64(prec)
            )
            .map_err(io)?;
        }
    } else {
        write_family_csv(&mut w, &points, &m).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let last = points.last().expect("non-empty family");
    println!(
        "{} points on {}, last J0 = {:.6}° (zeta0 = {:.12})",
        points.len(),
        branch.label(),
        last.j0_deg(),
        last.zeta0
    );
    Ok(vec![a.out.clone()])
}

/// Rebuild a family member from one of our CSV rows.
fn orbit_from_row(solver: &OrbitSolver, row: &str) -> Result<PeriodicOrbit, CliError> {
    let f = parse_list(row, "family row")?;
    if f.len() < 11 {
        return Err(CliError::usage(format!("short family row {row:?}")));
    }
    let x = HillState::from_array(std::array::from_fn(|i| f[3 + i]));
    let j = f[0].to_radians();
    Ok(solver.solve((x, ReducedParameter(f[2])), j)?)
}

fn continue_cmd(a: &ContinueArgs) -> Result<Vec<PathBuf>, CliError> {
    let m = masses(&a.masses)?;
    let origin = Origin::parse(&a.origin)?;
    let [start, end, step] = parse_n::<3>(&a.j_schedule, "--j-schedule")?;
    if !(step > 0.0) {
        return Err(CliError::usage("--j-schedule step must be positive"));
    }
    let schedule = Schedule::new(start, end, step);
    let solver = OrbitSolver::new(&m);
    let (mut w, done) = open_output(&a.out, &PeriodicOrbit::csv_header(), a.resume)?;
    let history = done
        .iter()
        .skip(done.len().saturating_sub(2))
        .map(|r| orbit_from_row(&solver, r))
        .collect::<Result<Vec<_>, _>>()?;
    let resumed = history.len();
    let mut write_err = None;
    let branch = continue_family_partial(&solver, origin, &schedule, history, |o| {
        if write_err.is_none() {
            write_err = writeln!(w, "{}", o.csv_row()).and_then(|_| w.flush()).err();
        }
    });
    if let Some(e) = write_err {
        return Err(CliError::io(&a.out, e));
    }
    let last = branch.last().map(|o| o.j_p_deg()).unwrap_or(f64::NAN);
    println!(
        "{} orbits ({} new), last J_p = {:.6}°, {} rejected steps",
        done.len() + branch.orbits.len() - resumed,
        branch.orbits.len() - resumed,
        last,
        branch.failures.len()
    );
    if let Some(e) = branch.stalled {
        return Err(CliError::numerical(e.to_string(), Some(a.out.clone())));
    }
    Ok(vec![a.out.clone()])
}

fn transition(a: &TransitionArgs) -> Result<Vec<PathBuf>, CliError> {
    let m = masses(&a.masses)?;
    let [lo, hi] = parse_n::<2>(&a.bracket, "--bracket")?;
    if !(lo < hi) || lo < 0.0 || !(a.tol > 0.0) {
        return Err(CliError::usage("need 0 <= lo < hi in --bracket and --tol > 0"));
    }
    let seed = continue_family(Origin::L4, &m, &Schedule::new(0.0, lo, 1.0))?;
    let solver = OrbitSolver::new(&m);
    let t = find_transition(&solver, &seed.orbits, (lo, hi), a.tol)?;
    let mut w = create(&a.out)?;
    let io = |e| CliError::io(&a.out, e);
    writeln!(w, "iteration,j_lo_deg,j_hi_deg,probe_deg,stable,margin,residual_norm").map_err(io)?;
    for s in &t.log {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.iteration,
            fmt_f64(s.j_lo_deg),
            fmt_f64(s.j_hi_deg),
            fmt_f64(s.probe_deg),
            s.stable as u8,
            fmt_f64(s.margin),
            fmt_f64(s.residual_norm)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    println!(
        "J* = {:.6}° ({} bisection steps; {} below, {} above)",
        t.j_star_deg,
        t.log.len(),
        if t.lower.stable { "stable" } else { "unstable" },
        if t.upper.stable { "stable" } else { "unstable" }
    );
    Ok(vec![a.out.clone()])
}

/// Run `total` cells in chunks of `chunk`, skipping the `done` first ones
/// and appending each finished chunk to `w`.
fn checkpointed_cells(
    out: &Path,
    w: &mut BufWriter<File>,
    done: usize,
    total: usize,
    chunk: usize,
    mut run: impl FnMut(std::ops::Range<usize>) -> Result<Vec<MapCell>, CliError>,
) -> Result<Vec<MapCell>, CliError> {
    let mut cells = Vec::new();
    let mut start = done;
    while start < total {
        // align chunks on whole rows
        let end = ((start / chunk + 1) * chunk).min(total);
        let part = run(start..end).map_err(|e| e.with_checkpoint(out))?;
        for c in &part {
            writeln!(w, "{}", c.csv_row()).map_err(|e| CliError::io(out, e))?;
        }
        w.flush().map_err(|e| CliError::io(out, e))?;
        cells.extend(part);
        start = end;
    }
    Ok(cells)
}

fn summarize(cells: &[MapCell]) {
    let stable = cells.iter().filter(|c| c.stable()).count();
    let bounded = cells
        .iter()
        .filter(|c| c.outcome == coorbital::cartography::Outcome::Bounded)
        .count();
    println!(
        "{} new cells: {} bounded with max_ecc < 0.05, {} bounded, {} lost",
        cells.len(),
        stable,
        bounded,
        cells.len() - bounded
    );
}

fn map(a: &MapArgs) -> Result<Vec<PathBuf>, CliError> {
    let grid = GridSpec {
        axis1: parse_axis(&a.axis1)?,
        axis2: parse_axis(&a.axis2)?,
        periods: a.periods,
        masses: masses(&a.masses)?,
        tolerance: a.tol,
    };
    grid.validate()?;
    let (mut w, done) = open_output(&a.out, MapCell::csv_header(), a.resume)?;
    let cells = checkpointed_cells(&a.out, &mut w, done.len(), grid.len(), grid.axis1.count, |r| {
        Ok(run_map_cells(&grid, r)?)
    })?;
    summarize(&cells);
    Ok(vec![a.out.clone()])
}

fn checkpoint_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".columns.jsonl");
    PathBuf::from(s)
}

fn chimney(a: &ChimneyArgs) -> Result<Vec<PathBuf>, CliError> {
    let [lo, hi] = parse_n::<2>(&a.eps_range, "--eps-range")?;
    if !(a.eps_step > 0.0) || !(lo > 0.0 && lo <= hi) {
        return Err(CliError::usage("need 0 < lo <= hi in --eps-range and --eps-step > 0"));
    }
    let mut spec = ChimneySpec::desk(lo, hi, a.eps_step, a.j_end);
    spec.j_step_deg = a.j_step;
    spec.refine_tol_deg = a.refine_tol;
    spec.onset_tol = a.onset_tol;
    spec.validate()?;

    let ckpt = checkpoint_path(&a.out);
    let mut columns: Vec<ChimneyColumn> = Vec::new();
    if a.resume && ckpt.exists() {
        let text = fs::read_to_string(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;
        for line in text.lines() {
            // a torn last line is simply recomputed
            if let Ok(c) = serde_json::from_str::<ChimneyColumn>(line) {
                if spec.eps.contains(&c.eps) {
                    columns.push(c);
                }
            }
        }
    }
    let mut ck = create(&ckpt)?;
    for c in &columns {
        writeln!(ck, "{}", serde_json::to_string(c).expect("column serialises")).map_err(|e| CliError::io(&ckpt, e))?;
    }
    let pending: Vec<f64> = spec
        .eps
        .iter()
        .copied()
        .filter(|e| !columns.iter().any(|c| c.eps == *e))
        .collect();
    for batch in pending.chunks(rayon::current_num_threads().max(1)) {
        let done: Vec<ChimneyColumn> = batch.par_iter().map(|&e| ChimneyColumn::compute(e, &spec)).collect();
        for c in done {
            writeln!(ck, "{}", serde_json::to_string(&c).expect("column serialises"))
                .map_err(|e| CliError::io(&ckpt, e))?;
            columns.push(c);
        }
        ck.flush().map_err(|e| CliError::io(&ckpt, e))?;
    }
    drop(ck);

    let scan = assemble_chimney(&spec, columns)?;
    let mut w = create(&a.out)?;
    scan.write_rows_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&a.out, e))?;
    let mut w = create(&a.out_windows)?;
    scan.write_windows_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&a.out_windows, e))?;
    fs::remove_file(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;

    match scan.onset_eps {
        Some(e) => println!("planar equilibrium unstable from ε ≈ {e:.5}"),
        None => println!("planar equilibrium stable over the scanned ε"),
    }
    for &e in &spec.eps {
        let ws: Vec<String> = scan
            .windows_at(e)
            .iter()
            .map(|w| format!("[{:.3}°, {:.3}°]", w.j_lower_deg, w.j_upper_deg))
            .collect();
        println!("ε = {e:.4}: {}", if ws.is_empty() { "no stable window".into() } else { ws.join(" ") });
    }
    for (e, msg) in &scan.failures {
        eprintln!("warning: ε = {e}: {msg}");
    }
    Ok(vec![a.out.clone(), a.out_windows.clone()])
}

fn slab(a: &SlabArgs) -> Result<Vec<PathBuf>, CliError> {
    let spec = SlabSpec {
        eps: a.eps,
        j_end_deg: a.j_end,
        j_step_deg: a.j_step,
        offset_step_deg: a.w_step,
        offset_max: a.w_max,
        periods: a.periods,
        tolerance: a.tol,
    };
    spec.validate()?;
    let branch = slab_family(&spec)?;
    if let Some(e) = &branch.stalled {
        eprintln!("warning: family stopped early: {e}");
    }
    let (mut w, done) = open_output(&a.out, MapCell::csv_header(), a.resume)?;
    let total = branch.orbits.len() * spec.width();
    let cells = checkpointed_cells(&a.out, &mut w, done.len(), total, spec.width(), |r| {
        Ok(slab_cells(&spec, &branch, r)?)
    })?;
    summarize(&cells);
    Ok(vec![a.out.clone()])
}

fn compare_avg(a: &CompareArgs) -> Result<Vec<PathBuf>, CliError> {
    let eps = parse_list(&a.eps, "--eps")?;
    if !(a.j_step > 0.0) || !(a.j_end >= 0.0) {
        return Err(CliError::usage("need --j-step > 0 and --j-end >= 0"));
    }
    let jc = junction_inclination().to_degrees();
    let on_grid = |j: f64| ((j / a.j_step).round() * a.j_step - j).abs() < 1e-9;
    let mut w = create(&a.out)?;
    let io = |e| CliError::io(&a.out, e);
    writeln!(w, "eps,J_deg,dw_rad,dzeta_rad,normalized").map_err(io)?;
    let mut curves: Vec<Vec<(f64, f64)>> = Vec::new();
    for &e in &eps {
        let m = MassConfig::equal_planets(e)?;
        // continue in sub-steps of at most 1° that land on every grid point
        let fine = a.j_step / (a.j_step.ceil()).max(1.0);
        let branch = continue_family(Origin::L4, &m, &Schedule::new(0.0, a.j_end, fine))?;
        // refined steps are compared too, but only grid rows are written
        let js: Vec<f64> = branch.orbits.iter().map(|o| o.j_p).filter(|j| j.to_degrees() < jc).collect();
        let avg = averaged_family(Branch::VflL4, &js)?;
        let rows: Vec<_> = compare_full_vs_avg(&branch, &avg)?
            .into_iter()
            .filter(|r| on_grid(r.j_deg))
            .collect();
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(e),
                fmt_f64(r.j_deg),
                fmt_f64(r.dw),
                fmt_f64(r.dzeta),
                fmt_f64(r.normalized)
            )
            .map_err(io)?;
        }
        let peak = rows.iter().map(|r| r.normalized.abs()).fold(0.0, f64::max);
        println!("ε = {e:e}: {} members, max |normalized| = {peak:.4}", rows.len());
        curves.push(rows.iter().map(|r| (r.j_deg, r.normalized)).collect());
    }
    w.flush().map_err(io)?;
    if let Some(first) = curves.first() {
        let spread = curves
            .iter()
            .flat_map(|c| c.iter())
            .filter_map(|(j, x)| {
                let y = first.iter().find(|(k, _)| (k - j).abs() < 1e-9)?.1;
                Some((x - y).abs())
            })
            .fold(0.0, f64::max);
        println!("largest difference between curves: {spread:.3e}");
    }
    Ok(vec![a.out.clone()])
}
