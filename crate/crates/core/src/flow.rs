//! Taylor-series propagation of the Hill-variable flow, its variational
//! equations and the node precession quadrature.
//!
//! The vector field is recorded once per mass configuration on a tape; the
//! same tape is expanded with `f64` coefficients for plain propagation and
//! with `Dual<9>` coefficients (8 state directions plus `C`) for the
//! transition matrix. The node longitude is carried as a ninth state with
//! rate `∂H/∂C`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hill::{
    canonical_rhs, cos_mutual_inclination, fmt_f64, hamiltonian, hill_terms, HillState,
    MassConfig, ReducedParameter,
};
use crate::scalar::Dual;
use crate::taylor::{
    horner, horner_derivative, order_for_tolerance, record, step_size, Jet, TaylorOde,
    TaylorWorkspace,
};

/// Number of propagated components: the 8 Hill variables and `Ω`.
pub const N_FLOW: usize = 9;
const NODE: usize = 8;

/// Local error control `abs + rel·scale` per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-16,
            rel: 1e-16,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Result<Self> {
        let ok = |v: f64| (1e-16..=1e-8).contains(&v);
        if ok(abs) && ok(rel) {
            Ok(Self { abs, rel })
        } else {
            Err(Error::Domain(format!(
                "tolerances must lie in [1e-16, 1e-8], got ({abs}, {rel})"
            )))
        }
    }

    pub fn uniform(tol: f64) -> Result<Self> {
        Self::new(tol, tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub final_state: HillState,
    /// `Ω(t) - Ω(0)`
    pub node_advance: f64,
    pub steps: usize,
    pub max_energy_drift: f64,
    pub dense_samples: Option<Vec<(f64, HillState)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub final_state: HillState,
    pub node_advance: f64,
    /// `∂Φ_t/∂x`, row `i` column `j` is `∂x_i(t)/∂x_j(0)`.
    pub transition_matrix: [[f64; 8]; 8],
    /// `∂Φ_t/∂C`
    pub dc_column: [f64; 8],
    pub steps: usize,
}

/// One accepted Taylor step, exposed to observers for dense output.
pub struct Segment<'a> {
    pub t0: f64,
    pub h: f64,
    ws: &'a TaylorWorkspace<f64>,
}

impl Segment<'_> {
    /// State (8 Hill variables then `Ω` offset) at `t0 + tau`, `tau` between
    /// 0 and `h`.
    pub fn at(&self, tau: f64) -> [f64; N_FLOW] {
        std::array::from_fn(|i| horner(self.ws, i, tau))
    }

    pub fn rate_at(&self, tau: f64) -> [f64; N_FLOW] {
        std::array::from_fn(|i| horner_derivative(self.ws, i, tau))
    }

    pub fn hill_at(&self, tau: f64) -> HillState {
        let a = self.at(tau);
        HillState::from_array([a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]])
    }
}

/// Recorded vector field for one mass configuration.
pub struct HillFlow {
    masses: MassConfig,
    ode: TaylorOde,
    energy_node: usize,
    dist_node: usize,
    collision_radius: f64,
}

impl HillFlow {
    pub fn new(masses: &MassConfig) -> Self {
        Self::build(masses, true)
    }

    /// Two uncoupled Kepler problems, for checking the integrator against
    /// closed forms.
    pub fn decoupled(masses: &MassConfig) -> Self {
        Self::build(masses, false)
    }

    fn build(masses: &MassConfig, coupling: bool) -> Self {
        let m = *masses;
        // inputs: 8 Hill variables, Ω, C
        let (tape, out) = record(N_FLOW + 1, |x| {
            let s: [_; 8] = std::array::from_fn(|i| x[i]);
            let terms = hill_terms(&s, &x[N_FLOW], &m, coupling);
            let mut out: Vec<_> = canonical_rhs(&terms.grad).to_vec();
            out.push(terms.dh_dc);
            out.push(terms.energy);
            out.push(terms.dist_sq);
            out
        });
        let rho = (masses.sigma() / (4.0 * PI * PI)).cbrt();
        Self {
            masses: m,
            ode: TaylorOde {
                tape,
                rhs: out[..N_FLOW].to_vec(),
            },
            energy_node: out[N_FLOW],
            dist_node: out[N_FLOW + 1],
            collision_radius: 1e-8 * rho,
        }
    }

    pub fn masses(&self) -> &MassConfig {
        &self.masses
    }

    fn allowed(state: &[f64; N_FLOW], tol: &Tolerance) -> [f64; N_FLOW] {
        let s = state;
        let scale = [
            s[0].abs(),
            1.0,
            s[3].abs() / s[0].abs(),
            s[3].abs(),
            s[4].abs(),
            1.0,
            s[7].abs() / s[4].abs(),
            s[7].abs(),
            1.0,
        ];
        std::array::from_fn(|i| tol.abs + tol.rel * scale[i])
    }

    /// Core stepping loop. `observe` sees every accepted `f64` step and may
    /// stop the integration early by returning `false`.
    fn integrate<K: Jet>(
        &self,
        mut state: [K; N_FLOW],
        c: K,
        t: f64,
        tol: &Tolerance,
        mut on_step: impl FnMut(f64, f64, &TaylorWorkspace<K>) -> bool,
    ) -> Result<([K; N_FLOW], usize, f64)> {
        let order = order_for_tolerance(tol.abs.min(tol.rel));
        let mut ws = TaylorWorkspace::<K>::new(&self.ode.tape, order);
        let dir = if t < 0.0 { -1.0 } else { 1.0 };
        let span = t.abs();
        let mut done = 0.0;
        let mut steps = 0;
        let mut h0 = f64::NAN;
        let mut max_drift: f64 = 0.0;
        let params = [c];
        while done < span {
            self.ode.expand(&mut ws, &state, &params);
            let time = dir * done;
            let dist_sq = ws.coeff(self.dist_node, 0).value();
            if !(dist_sq > self.collision_radius * self.collision_radius) {
                return Err(Error::Collision {
                    time,
                    distance: dist_sq.max(0.0).sqrt(),
                });
            }
            let energy = ws.coeff(self.energy_node, 0).value();
            if h0.is_nan() {
                h0 = energy;
            } else {
                max_drift = max_drift.max(((energy - h0) / h0).abs());
            }
            let vals: [f64; N_FLOW] = std::array::from_fn(|i| state[i].value());
            let allowed = Self::allowed(&vals, tol);
            let mut h = step_size(&ws, &allowed);
            let remaining = span - done;
            if !h.is_finite() || h > remaining {
                h = remaining;
            }
            if !(h > 1e-14 * span.max(1.0)) && h < remaining {
                return Err(Error::StepFailure { time, step: h });
            }
            let hs = dir * h;
            if !on_step(time, hs, &ws) {
                return Ok((state, steps, max_drift));
            }
            state = std::array::from_fn(|i| horner(&ws, i, hs));
            // land exactly on the requested end point
            done = if h == remaining { span } else { done + h };
            steps += 1;
        }
        Ok((state, steps, max_drift))
    }

    fn initial(x0: &HillState) -> [f64; N_FLOW] {
        let a = x0.to_array();
        std::array::from_fn(|i| if i < 8 { a[i] } else { 0.0 })
    }

    fn finish(
        &self,
        x0: &HillState,
        c: ReducedParameter,
        state: [f64; N_FLOW],
        steps: usize,
        drift: f64,
        dense: Option<Vec<(f64, HillState)>>,
    ) -> Result<FlowResult> {
        let final_state =
            HillState::from_array([state[0], state[1], state[2], state[3], state[4], state[5], state[6], state[7]]);
        // include the end point in the drift estimate
        let h0 = hamiltonian(x0, c, &self.masses)?;
        let h1 = hamiltonian(&final_state, c, &self.masses)?;
        Ok(FlowResult {
            final_state,
            node_advance: state[NODE],
            steps,
            max_energy_drift: drift.max(((h1 - h0) / h0).abs()),
            dense_samples: dense,
        })
    }

    pub fn propagate(
        &self,
        x0: &HillState,
        c: ReducedParameter,
        t: f64,
        tol: &Tolerance,
    ) -> Result<FlowResult> {
        x0.check(c)?;
        let (state, steps, drift) = self.integrate(Self::initial(x0), c.0, t, tol, |_, _, _| true)?;
        self.finish(x0, c, state, steps, drift, None)
    }

    /// As [`propagate`](Self::propagate), also returning samples at the
    /// uniform times `k·t/n_samples`, `k = 0..=n_samples`.
    pub fn propagate_dense(
        &self,
        x0: &HillState,
        c: ReducedParameter,
        t: f64,
        n_samples: usize,
        tol: &Tolerance,
    ) -> Result<FlowResult> {
        x0.check(c)?;
        let n = n_samples.max(1);
        let mut samples = Vec::with_capacity(n + 1);
        let mut next = 0usize;
        let (state, steps, drift) = self.integrate(Self::initial(x0), c.0, t, tol, |t0, h, ws| {
            let seg = Segment { t0, h, ws };
            while next <= n {
                let ts = t * next as f64 / n as f64;
                let tau = ts - t0;
                if tau.abs() > h.abs() * (1.0 + 1e-12) {
                    break;
                }
                samples.push((ts, seg.hill_at(tau)));
                next += 1;
            }
            true
        })?;
        if next <= n {
            let end = HillState::from_array(std::array::from_fn(|i| state[i]));
            while next <= n {
                samples.push((t * next as f64 / n as f64, end));
                next += 1;
            }
        }
        self.finish(x0, c, state, steps, drift, Some(samples))
    }

    /// Propagate while handing every step to `observe`; returning `false`
    /// stops early. Returns the state reached and the number of steps.
    pub fn propagate_observed(
        &self,
        x0: &HillState,
        c: ReducedParameter,
        t: f64,
        tol: &Tolerance,
        mut observe: impl FnMut(&Segment) -> bool,
    ) -> Result<(HillState, usize)> {
        x0.check(c)?;
        let (state, steps, _) = self.integrate(Self::initial(x0), c.0, t, tol, |t0, h, ws| {
            observe(&Segment { t0, h, ws })
        })?;
        Ok((
            HillState::from_array(std::array::from_fn(|i| state[i])),
            steps,
        ))
    }

    pub fn propagate_variational(
        &self,
        x0: &HillState,
        c: ReducedParameter,
        t: f64,
        tol: &Tolerance,
    ) -> Result<VariationalResult> {
        x0.check(c)?;
        let a = x0.to_array();
        let init: [Dual<9>; N_FLOW] = std::array::from_fn(|i| {
            if i < 8 {
                Dual::var(a[i], i)
            } else {
                Dual::constant(0.0)
            }
        });
        let (state, steps, _) = self.integrate(init, Dual::var(c.0, 8), t, tol, |_, _, _| true)?;
        let mut m = [[0.0; 8]; 8];
        let mut dc = [0.0; 8];
        for i in 0..8 {
            for j in 0..8 {
                m[i][j] = state[i].eps[j];
            }
            dc[i] = state[i].eps[8];
        }
        Ok(VariationalResult {
            final_state: HillState::from_array(std::array::from_fn(|i| state[i].re)),
            node_advance: state[NODE].re,
            transition_matrix: m,
            dc_column: dc,
            steps,
        })
    }

    pub fn integrate_node_precession(
        &self,
        x0: &HillState,
        c: ReducedParameter,
        t: f64,
        tol: &Tolerance,
    ) -> Result<f64> {
        Ok(self.propagate(x0, c, t, tol)?.node_advance)
    }
}

pub fn propagate(
    x0: &HillState,
    c: ReducedParameter,
    masses: &MassConfig,
    t: f64,
    tol: &Tolerance,
) -> Result<FlowResult> {
    HillFlow::new(masses).propagate(x0, c, t, tol)
}

pub fn propagate_variational(
    x0: &HillState,
    c: ReducedParameter,
    masses: &MassConfig,
    t: f64,
    tol: &Tolerance,
) -> Result<VariationalResult> {
    HillFlow::new(masses).propagate_variational(x0, c, t, tol)
}

/// `Ω(t) - Ω(0)` along the trajectory.
pub fn integrate_node_precession(
    x0: &HillState,
    c: ReducedParameter,
    masses: &MassConfig,
    t: f64,
    tol: &Tolerance,
) -> Result<f64> {
    HillFlow::new(masses).integrate_node_precession(x0, c, t, tol)
}

/// Write dense samples as CSV with header
/// `t,r1,w1,R1,G1,r2,w2,R2,G2,H,J,Omega`. `Omega` is the accumulated node
/// longitude starting from `omega0`.
pub fn write_dense_csv<W: Write>(
    out: &mut W,
    flow: &HillFlow,
    x0: &HillState,
    c: ReducedParameter,
    omega0: f64,
    t: f64,
    n_samples: usize,
    tol: &Tolerance,
) -> Result<()> {
    x0.check(c)?;
    let n = n_samples.max(1);
    let mut rows = Vec::with_capacity(n + 1);
    let mut next = 0usize;
    let (state, _, _) = flow.integrate(HillFlow::initial(x0), c.0, t, tol, |t0, h, ws| {
        let seg = Segment { t0, h, ws };
        while next <= n {
            let ts = t * next as f64 / n as f64;
            let tau = ts - t0;
            if tau.abs() > h.abs() * (1.0 + 1e-12) {
                break;
            }
            rows.push((ts, seg.at(tau)));
            next += 1;
        }
        true
    })?;
    while next <= n {
        rows.push((t * next as f64 / n as f64, state));
        next += 1;
    }
    let io = |e: std::io::Error| Error::Domain(format!("write failed: {e}"));
    writeln!(out, "t,r1,w1,R1,G1,r2,w2,R2,G2,H,J,Omega").map_err(io)?;
    for (ts, s) in rows {
        let hs = HillState::from_array(std::array::from_fn(|i| s[i]));
        let h = hamiltonian(&hs, c, flow.masses())?;
        let j = cos_mutual_inclination(hs.g1, hs.g2, c.0).clamp(-1.0, 1.0).acos();
        let mut fields = vec![fmt_f64(ts)];
        fields.extend(hs.csv_fields());
        fields.push(fmt_f64(h));
        fields.push(fmt_f64(j));
        fields.push(fmt_f64(omega0 + s[NODE]));
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    Ok(())
}
