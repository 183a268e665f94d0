//! Node-reduced Hill variables for the planetary three-body problem.
//!
//! Units: gravitational constant 1. Masses are physical (no separate small
//! parameter), so the rescaled planetary Hamiltonian written with `ε·m_j`
//! coincides with the one below once `ε·m_j` is read as the stored mass.
//!
//! State ordering everywhere is `(r1, w1, R1, G1, r2, w2, R2, G2)`.
//! Both draconic anomalies are measured from the ascending node of body 1,
//! so body 2's anomaly starts at its own descending node. With that choice
//! the in-plane coordinates of the two bodies couple through the metric
//! `diag(1, cos J)`:
//!
//! ```text
//! r1·r2 = x1 x2 + cos J y1 y2,        p1·p2 = X1 X2 + cos J Y1 Y2
//! x = r cos w, y = r sin w,           X = R cos w - (G/r) sin w, Y = R sin w + (G/r) cos w
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Dual, Scalar};

/// `w1 + w2` on the section through which periodic orbits are parameterised.
/// Measuring body 2's anomaly from its own ascending node instead (that is,
/// `w2 + π`) the section reads `w1 + w2 = 0`. The mutual inclination is
/// smallest along an orbit there.
pub const SECTION_SUM: f64 = PI;

/// Tolerance on `|cos J| - 1` before an inconsistent `C` is reported.
pub const COS_J_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassConfig {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

impl MassConfig {
    pub fn new(m0: f64, m1: f64, m2: f64) -> Result<Self> {
        if !(m0 > 0.0 && m1 > 0.0 && m2 > 0.0) || !(m0 + m1 + m2).is_finite() {
            return Err(Error::Domain(format!(
                "masses must be positive, got ({m0}, {m1}, {m2})"
            )));
        }
        Ok(Self { m0, m1, m2 })
    }

    /// `(1 - 2ε, ε, ε)`.
    pub fn equal_planets(eps: f64) -> Result<Self> {
        Self::new(1.0 - 2.0 * eps, eps, eps)
    }

    /// Total planetary mass `mu` split with ratio `m1/m2 = ratio`, star
    /// carrying the rest of a unit total.
    pub fn with_ratio(mu: f64, ratio: f64) -> Result<Self> {
        let m2 = mu / (1.0 + ratio);
        Self::new(1.0 - mu, mu - m2, m2)
    }

    pub fn sigma(&self) -> f64 {
        self.m0 + self.m1 + self.m2
    }

    pub fn p(&self) -> f64 {
        self.m0 * self.m1 + self.m0 * self.m2 + self.m1 * self.m2
    }

    /// Planetary mass scale `(m1 + m2)/2`, the ε of [`Self::equal_planets`].
    pub fn eps(&self) -> f64 {
        0.5 * (self.m1 + self.m2)
    }

    /// `27 p / sigma²`; the planar equilateral equilibrium is spectrally
    /// stable iff this is ≤ 1.
    pub fn gascheau_ratio(&self) -> f64 {
        27.0 * self.p() / (self.sigma() * self.sigma())
    }

    /// `m1 m2 / (m1 + m2)²`
    pub fn gamma(&self) -> f64 {
        let s = self.m1 + self.m2;
        self.m1 * self.m2 / (s * s)
    }

    /// Reduced mass `m0 m_j / (m0 + m_j)` of planet `j` (1 or 2).
    pub fn beta(&self, j: usize) -> f64 {
        let mj = self.planet(j);
        self.m0 * mj / (self.m0 + mj)
    }

    /// `m0 + m_j`
    pub fn mu(&self, j: usize) -> f64 {
        self.m0 + self.planet(j)
    }

    pub fn planet(&self, j: usize) -> f64 {
        match j {
            1 => self.m1,
            2 => self.m2,
            _ => panic!("planet index must be 1 or 2"),
        }
    }

    /// Same configuration with the two planets exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            m0: self.m0,
            m1: self.m2,
            m2: self.m1,
        }
    }
}

/// Equal planetary masses at the Gascheau threshold, `(3 - 2√2)/9`.
pub fn gascheau_eps() -> f64 {
    (3.0 - 2.0 * 2f64.sqrt()) / 9.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillState {
    pub r1: f64,
    pub w1: f64,
    pub big_r1: f64,
    pub g1: f64,
    pub r2: f64,
    pub w2: f64,
    pub big_r2: f64,
    pub g2: f64,
}

impl HillState {
    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            r1: a[0],
            w1: a[1],
            big_r1: a[2],
            g1: a[3],
            r2: a[4],
            w2: a[5],
            big_r2: a[6],
            g2: a[7],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.r1,
            self.w1,
            self.big_r1,
            self.g1,
            self.r2,
            self.w2,
            self.big_r2,
            self.g2,
        ]
    }

    /// Exchange the roles of the two bodies.
    pub fn swapped(&self) -> Self {
        Self {
            r1: self.r2,
            w1: self.w2,
            big_r1: self.big_r2,
            g1: self.g2,
            r2: self.r1,
            w2: self.w1,
            big_r2: self.big_r1,
            g2: self.g1,
        }
    }

    pub fn check(&self, c: ReducedParameter) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > 0.0 && self.g1 > 0.0 && self.g2 > 0.0) {
            return Err(Error::Domain(format!(
                "r and G must be positive: {:?}",
                self.to_array()
            )));
        }
        mutual_inclination(self, c).map(|_| ())
    }

    /// CSV fields in the shared order `r1,w1,R1,G1,r2,w2,R2,G2`.
    pub fn csv_fields(&self) -> Vec<String> {
        self.to_array().iter().map(|v| fmt_f64(*v)).collect()
    }
}

/// Modulus of the total angular momentum.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ReducedParameter(pub f64);

impl ReducedParameter {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Self(c))
        } else {
            Err(Error::Domain(format!("C must be positive, got {c}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `(C² - G1² - G2²) / (2 G1 G2)` without clamping.
pub fn cos_mutual_inclination(g1: f64, g2: f64, c: f64) -> f64 {
    (c * c - g1 * g1 - g2 * g2) / (2.0 * g1 * g2)
}

pub fn mutual_inclination(state: &HillState, c: ReducedParameter) -> Result<f64> {
    let cj = cos_mutual_inclination(state.g1, state.g2, c.0);
    if !cj.is_finite() || cj.abs() > 1.0 + COS_J_TOLERANCE {
        return Err(Error::Domain(format!(
            "inconsistent C = {}: cos J = {cj}",
            c.0
        )));
    }
    Ok(cj.clamp(-1.0, 1.0).acos())
}

/// Distance between the two planets.
pub fn mutual_distance(state: &HillState, c: ReducedParameter) -> f64 {
    let cj = cos_mutual_inclination(state.g1, state.g2, c.0).clamp(-1.0, 1.0);
    let (s1, c1) = state.w1.sin_cos();
    let (s2, c2) = state.w2.sin_cos();
    let dot = state.r1 * state.r2 * (c1 * c2 + cj * s1 * s2);
    (state.r1 * state.r1 + state.r2 * state.r2 - 2.0 * dot).max(0.0).sqrt()
}

/// Hamiltonian and its partial derivatives, generic over the scalar so the
/// same code serves plain evaluation, dual-number Jacobians and tape
/// recording for the Taylor integrator.
pub(crate) struct HillTerms<S> {
    pub energy: S,
    /// `(∂H/∂r1, ∂H/∂w1, ∂H/∂R1, ∂H/∂G1, ∂H/∂r2, ...)`
    pub grad: [S; 8],
    pub dh_dc: S,
    pub dist_sq: S,
}

/// `coupling = false` drops the star-planet indirect and planet-planet terms,
/// leaving two independent Kepler problems (used to check the integrator
/// against closed forms).
pub(crate) fn hill_terms<S: Scalar>(
    x: &[S; 8],
    c: &S,
    m: &MassConfig,
    coupling: bool,
) -> HillTerms<S> {
    let [r1, w1, pr1, g1, r2, w2, pr2, g2] = x.clone();
    let k1 = (m.m0 + m.m1) / (2.0 * m.m0 * m.m1);
    let k2 = (m.m0 + m.m2) / (2.0 * m.m0 * m.m2);
    let a1 = m.m0 * m.m1;
    let a2 = m.m0 * m.m2;
    let m12 = m.m1 * m.m2;

    let inv_r1 = r1.recip();
    let inv_r2 = r2.recip();
    let q1 = g1.clone() * inv_r1.clone();
    let q2 = g2.clone() * inv_r2.clone();
    let (s1, c1) = w1.sin_cos();
    let (s2, c2) = w2.sin_cos();

    // Kepler parts
    let kin1 = (pr1.clone() * pr1.clone() + q1.clone() * q1.clone()) * k1;
    let kin2 = (pr2.clone() * pr2.clone() + q2.clone() * q2.clone()) * k2;
    let mut energy = kin1 + kin2 - inv_r1.clone() * a1 - inv_r2.clone() * a2;

    let mut d_r1 = -(q1.clone() * q1.clone() * inv_r1.clone()) * (2.0 * k1)
        + inv_r1.clone() * inv_r1.clone() * a1;
    let mut d_r2 = -(q2.clone() * q2.clone() * inv_r2.clone()) * (2.0 * k2)
        + inv_r2.clone() * inv_r2.clone() * a2;
    let mut d_pr1 = pr1.clone() * (2.0 * k1);
    let mut d_pr2 = pr2.clone() * (2.0 * k2);
    let mut d_g1 = q1.clone() * inv_r1.clone() * (2.0 * k1);
    let mut d_g2 = q2.clone() * inv_r2.clone() * (2.0 * k2);
    let mut d_w1 = pr1.clone() * 0.0;
    let mut d_w2 = pr2.clone() * 0.0;
    let mut dh_dc = c.clone() * 0.0;
    let mut dist_sq = r1.clone() * r1.clone() + r2.clone() * r2.clone();

    if coupling {
        let g1g2 = g1.clone() * g2.clone();
        let cj = (c.clone() * c.clone() - g1.clone() * g1.clone() - g2.clone() * g2.clone())
            / (g1g2.clone() * 2.0);

        let x1 = r1.clone() * c1.clone();
        let y1 = r1.clone() * s1.clone();
        let x2 = r2.clone() * c2.clone();
        let y2 = r2.clone() * s2.clone();
        let big_x1 = pr1.clone() * c1.clone() - q1.clone() * s1.clone();
        let big_y1 = pr1.clone() * s1.clone() + q1.clone() * c1.clone();
        let big_x2 = pr2.clone() * c2.clone() - q2.clone() * s2.clone();
        let big_y2 = pr2.clone() * s2.clone() + q2.clone() * c2.clone();

        let inv_m0 = 1.0 / m.m0;
        let kin = (big_x1.clone() * big_x2.clone() + cj.clone() * big_y1.clone() * big_y2.clone())
            * inv_m0;
        let dot = x1.clone() * x2.clone() + cj.clone() * y1.clone() * y2.clone();
        dist_sq = dist_sq - dot.clone() * 2.0;
        let inv_d = dist_sq.powf(-0.5);
        let d3 = inv_d.clone() * inv_d.clone() * inv_d.clone() * m12;
        energy = energy + kin - inv_d * m12;

        // ∂H/∂cos J
        let d_cj = big_y1.clone() * big_y2.clone() * inv_m0 - d3.clone() * y1.clone() * y2.clone();
        // ∂cos J/∂G1 = -1/G2 - cos J/G1 and symmetric
        let dcj_dg1 = -(g2.recip() + cj.clone() / g1.clone());
        let dcj_dg2 = -(g1.recip() + cj.clone() / g2.clone());
        dh_dc = d_cj.clone() * c.clone() / g1g2;

        // in-plane momentum components depend on (R, G, r, w)
        let px1 = big_x2.clone() * c1.clone() + cj.clone() * big_y2.clone() * s1.clone();
        let px2 = big_x1.clone() * c2.clone() + cj.clone() * big_y1.clone() * s2.clone();
        d_pr1 = d_pr1 + px1 * inv_m0;
        d_pr2 = d_pr2 + px2 * inv_m0;

        let pg1 = cj.clone() * big_y2.clone() * c1.clone() - big_x2.clone() * s1.clone();
        let pg2 = cj.clone() * big_y1.clone() * c2.clone() - big_x1.clone() * s2.clone();
        d_g1 = d_g1 + pg1.clone() * inv_r1.clone() * inv_m0 + d_cj.clone() * dcj_dg1;
        d_g2 = d_g2 + pg2.clone() * inv_r2.clone() * inv_m0 + d_cj * dcj_dg2;

        // ∂X/∂r = (G/r²) sin w, ∂Y/∂r = -(G/r²) cos w
        d_r1 = d_r1 - pg1 * q1.clone() * inv_r1.clone() * inv_m0
            + d3.clone() * (r1.clone() - c1.clone() * x2.clone() - cj.clone() * s1.clone() * y2.clone());
        d_r2 = d_r2 - pg2 * q2.clone() * inv_r2.clone() * inv_m0
            + d3.clone() * (r2.clone() - c2.clone() * x1.clone() - cj.clone() * s2.clone() * y1.clone());

        // ∂X/∂w = -Y, ∂Y/∂w = X
        d_w1 = (cj.clone() * big_y2.clone() * big_x1.clone() - big_x2.clone() * big_y1.clone()) * inv_m0
            - d3.clone() * (cj.clone() * x1.clone() * y2.clone() - y1.clone() * x2.clone());
        d_w2 = (cj.clone() * big_y1.clone() * big_x2.clone() - big_x1.clone() * big_y2.clone()) * inv_m0
            - d3 * (cj * x2 * y1 - y2 * x1);
    }

    HillTerms {
        energy,
        grad: [d_r1, d_w1, d_pr1, d_g1, d_r2, d_w2, d_pr2, d_g2],
        dh_dc,
        dist_sq,
    }
}

/// Canonical equations: `(r, R)` and `(w, G)` are conjugate pairs.
pub(crate) fn canonical_rhs<S: Scalar>(grad: &[S; 8]) -> [S; 8] {
    [
        grad[2].clone(),
        grad[3].clone(),
        -grad[0].clone(),
        -grad[1].clone(),
        grad[6].clone(),
        grad[7].clone(),
        -grad[4].clone(),
        -grad[5].clone(),
    ]
}

fn ensure_separated(dist_sq: f64) -> Result<()> {
    if dist_sq > 0.0 && dist_sq.is_finite() {
        Ok(())
    } else {
        Err(Error::Collision {
            time: 0.0,
            distance: dist_sq.max(0.0).sqrt(),
        })
    }
}

pub fn hamiltonian(state: &HillState, c: ReducedParameter, masses: &MassConfig) -> Result<f64> {
    state.check(c)?;
    let terms = hill_terms(&state.to_array(), &c.0, masses, true);
    ensure_separated(terms.dist_sq)?;
    Ok(terms.energy)
}

/// Time derivative of the state, ordered like [`HillState::to_array`].
pub fn vector_field(state: &HillState, c: ReducedParameter, masses: &MassConfig) -> Result<[f64; 8]> {
    state.check(c)?;
    let terms = hill_terms(&state.to_array(), &c.0, masses, true);
    ensure_separated(terms.dist_sq)?;
    Ok(canonical_rhs(&terms.grad))
}

/// Jacobian of [`vector_field`] with respect to the state (columns 0..8) and
/// to `C` (column 8), by forward-mode differentiation.
pub fn vector_field_jacobian(
    state: &HillState,
    c: ReducedParameter,
    masses: &MassConfig,
) -> Result<[[f64; 9]; 8]> {
    state.check(c)?;
    let arr = state.to_array();
    let x: [Dual<9>; 8] = std::array::from_fn(|i| Dual::var(arr[i], i));
    let cd = Dual::var(c.0, 8);
    let terms = hill_terms(&x, &cd, masses, true);
    ensure_separated(terms.dist_sq.re)?;
    let f = canonical_rhs(&terms.grad);
    Ok(std::array::from_fn(|i| f[i].eps))
}

/// Node precession rate `∂H/∂C`.
pub fn node_rate(state: &HillState, c: ReducedParameter, masses: &MassConfig) -> Result<f64> {
    state.check(c)?;
    let terms = hill_terms(&state.to_array(), &c.0, masses, true);
    ensure_separated(terms.dist_sq)?;
    Ok(terms.dh_dc)
}

/// Osculating heliocentric Kepler elements of planet `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Osculating {
    /// Semi-major axis; negative on hyperbolic orbits.
    pub a: f64,
    pub e: f64,
    pub bound: bool,
}

/// Elements of planet `j` from its two-body part
/// `(R² + G²/r²)/(2β) - μβ/r`.
pub fn osculating(state: &HillState, masses: &MassConfig, j: usize) -> Osculating {
    let (r, big_r, g) = match j {
        1 => (state.r1, state.big_r1, state.g1),
        2 => (state.r2, state.big_r2, state.g2),
        _ => panic!("planet index must be 1 or 2"),
    };
    let beta = masses.beta(j);
    let mu = masses.mu(j);
    let energy = (big_r * big_r + g * g / (r * r)) / (2.0 * beta) - mu * beta / r;
    let a = -mu * beta / (2.0 * energy);
    // 1 - e² = G²/(β² μ a)
    let e2 = 1.0 + 2.0 * energy * g * g / (mu * mu * beta.powi(3));
    Osculating {
        a,
        e: e2.max(0.0).sqrt(),
        bound: energy < 0.0,
    }
}

/// Heliocentric positions, barycentric momenta and orbital orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub pos: [[f64; 3]; 2],
    pub mom: [[f64; 3]; 2],
    pub omega1: f64,
    pub incl: [f64; 2],
}

impl CartesianState {
    pub fn omega2(&self) -> f64 {
        self.omega1 + PI
    }

    pub fn angular_momentum(&self) -> [f64; 3] {
        let a = cross(self.pos[0], self.mom[0]);
        let b = cross(self.pos[1], self.mom[1]);
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    /// The heliocentric canonical Hamiltonian
    /// `Σ p²/(2β) - m0 m_j/r + p1·p2/m0 - m1 m2/|r1 - r2|`.
    pub fn energy(&self, m: &MassConfig) -> f64 {
        let mut h = 0.0;
        for j in 0..2 {
            let beta = m.beta(j + 1);
            h += dot(self.mom[j], self.mom[j]) / (2.0 * beta)
                - m.m0 * m.planet(j + 1) / norm(self.pos[j]);
        }
        let d = sub(self.pos[0], self.pos[1]);
        h + dot(self.mom[0], self.mom[1]) / m.m0 - m.m1 * m.m2 / norm(d)
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `R_z(Ω) R_x(I) R_z(u)` applied to the unit vectors `x̂` and `ŷ`.
fn orbit_frame(node: f64, incl: f64, arg: f64) -> ([f64; 3], [f64; 3]) {
    let (so, co) = node.sin_cos();
    let (si, ci) = incl.sin_cos();
    let (su, cu) = arg.sin_cos();
    let radial = [
        co * cu - so * ci * su,
        so * cu + co * ci * su,
        si * su,
    ];
    let along = [
        -co * su - so * ci * cu,
        -so * su + co * ci * cu,
        si * cu,
    ];
    (radial, along)
}

/// Individual inclinations from `C cos I1 = G1 + G2 cos J`.
pub fn inclinations(state: &HillState, c: ReducedParameter) -> Result<[f64; 2]> {
    let j = mutual_inclination(state, c)?;
    let cj = j.cos();
    let ci1 = ((state.g1 + state.g2 * cj) / c.0).clamp(-1.0, 1.0);
    let ci2 = ((state.g2 + state.g1 * cj) / c.0).clamp(-1.0, 1.0);
    Ok([ci1.acos(), ci2.acos()])
}

pub fn to_cartesian(state: &HillState, c: ReducedParameter, omega1: f64) -> Result<CartesianState> {
    state.check(c)?;
    let incl = inclinations(state, c)?;
    // body 2: ascending node at Ω1 + π, anomaly counted from its descending node
    let frames = [
        orbit_frame(omega1, incl[0], state.w1),
        orbit_frame(omega1 + PI, incl[1], state.w2 + PI),
    ];
    let rs = [state.r1, state.r2];
    let prs = [state.big_r1, state.big_r2];
    let gs = [state.g1, state.g2];
    let mut pos = [[0.0; 3]; 2];
    let mut mom = [[0.0; 3]; 2];
    for j in 0..2 {
        let (radial, along) = frames[j];
        pos[j] = scale(radial, rs[j]);
        mom[j] = add(scale(radial, prs[j]), scale(along, gs[j] / rs[j]));
    }
    Ok(CartesianState {
        pos,
        mom,
        omega1,
        incl,
    })
}

/// Inverse of [`to_cartesian`]. The total angular momentum must point along
/// `+z`. When the orbit planes coincide the node line is taken along `x`.
pub fn from_cartesian(
    pos: [[f64; 3]; 2],
    mom: [[f64; 3]; 2],
) -> Result<(HillState, ReducedParameter, f64)> {
    let l1 = cross(pos[0], mom[0]);
    let l2 = cross(pos[1], mom[1]);
    let total = add(l1, l2);
    let c = norm(total);
    if c <= 0.0 || (total[0].hypot(total[1])) > 1e-10 * c {
        return Err(Error::Domain(
            "total angular momentum must be along +z".into(),
        ));
    }
    let g = [norm(l1), norm(l2)];
    let n1 = scale(l1, 1.0 / g[0]);
    let node_vec = cross([0.0, 0.0, 1.0], n1);
    let node_len = norm(node_vec);
    let node = if node_len > 1e-13 {
        scale(node_vec, 1.0 / node_len)
    } else {
        [1.0, 0.0, 0.0]
    };
    let omega1 = node[1].atan2(node[0]);
    let mut r = [0.0; 2];
    let mut w = [0.0; 2];
    let mut pr = [0.0; 2];
    for j in 0..2 {
        let n = scale(if j == 0 { l1 } else { l2 }, 1.0 / g[j]);
        r[j] = norm(pos[j]);
        let u = scale(pos[j], 1.0 / r[j]);
        w[j] = dot(cross(n, node), u).atan2(dot(node, u));
        pr[j] = dot(mom[j], u);
    }
    let state = HillState {
        r1: r[0],
        w1: w[0],
        big_r1: pr[0],
        g1: g[0],
        r2: r[1],
        w2: w[1],
        big_r2: pr[1],
        g2: g[1],
    };
    Ok((state, ReducedParameter(c), omega1))
}

/// Which equilateral vertex: `L4` has body 1 leading body 2 by 60°
/// (`w1 - w2 = π/3`), `L5` is its mirror (`w1 - w2 = 5π/3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagrangeVertex {
    L4,
    L5,
}

impl LagrangeVertex {
    pub fn separation(&self) -> f64 {
        match self {
            LagrangeVertex::L4 => PI / 3.0,
            LagrangeVertex::L5 => 5.0 * PI / 3.0,
        }
    }
}

/// Circular radius from Kepler's third law `ω² ρ³ = sigma`.
pub fn kepler_radius(masses: &MassConfig, omega: f64) -> f64 {
    (masses.sigma() / (omega * omega)).cbrt()
}

/// Planar rigid rotation at rate `omega` of heliocentric positions
/// `pos` (z = 0), expressed in Hill variables on the section
/// `w1 + w2 =` [`SECTION_SUM`].
pub fn rigid_rotation_state(
    masses: &MassConfig,
    omega: f64,
    pos: [[f64; 3]; 2],
) -> Result<(HillState, ReducedParameter)> {
    let sigma = masses.sigma();
    let cm = scale(add(scale(pos[0], masses.m1), scale(pos[1], masses.m2)), 1.0 / sigma);
    let spin = [0.0, 0.0, omega];
    let mom = [
        scale(cross(spin, sub(pos[0], cm)), masses.m1),
        scale(cross(spin, sub(pos[1], cm)), masses.m2),
    ];
    let (mut state, c, _) = from_cartesian(pos, mom)?;
    // place the section keeping w1 - w2 in (-π, π]
    let diff = PI - (PI - (state.w1 - state.w2)).rem_euclid(2.0 * PI);
    state.w1 = 0.5 * (SECTION_SUM + diff);
    state.w2 = 0.5 * (SECTION_SUM - diff);
    let c = ReducedParameter(state.g1 + state.g2).max_of(c);
    Ok((state, c))
}

impl ReducedParameter {
    fn max_of(self, other: ReducedParameter) -> ReducedParameter {
        // planar states: C = G1 + G2 exactly, keep the larger rounding
        if self.0 >= other.0 {
            self
        } else {
            other
        }
    }
}

/// Equilateral relative equilibrium in Hill variables:
/// `r = ρ`, `R1 = -R2 ∓ √3 ω ρ m1 m2 / (2σ)`, `G_j = ω ρ² m_j (2 m0 + m_k)/(2σ)`.
pub fn lagrange_equilibrium_at(
    masses: &MassConfig,
    omega: f64,
    vertex: LagrangeVertex,
) -> (HillState, ReducedParameter) {
    let sigma = masses.sigma();
    let rho = kepler_radius(masses, omega);
    let radial = 3f64.sqrt() * omega * rho * masses.m1 * masses.m2 / (2.0 * sigma);
    let sign = match vertex {
        LagrangeVertex::L4 => 1.0,
        LagrangeVertex::L5 => -1.0,
    };
    let g1 = omega * rho * rho * masses.m1 * (2.0 * masses.m0 + masses.m2) / (2.0 * sigma);
    let g2 = omega * rho * rho * masses.m2 * (2.0 * masses.m0 + masses.m1) / (2.0 * sigma);
    // L5 is L4 with the bodies exchanged
    let d = match vertex {
        LagrangeVertex::L4 => PI / 3.0,
        LagrangeVertex::L5 => -PI / 3.0,
    };
    let state = HillState {
        r1: rho,
        w1: 0.5 * (SECTION_SUM + d),
        big_r1: -sign * radial,
        g1,
        r2: rho,
        w2: 0.5 * (SECTION_SUM - d),
        big_r2: sign * radial,
        g2,
    };
    (state, ReducedParameter(g1 + g2))
}

/// The equilateral equilibrium with `w1 - w2 = 5π/3`.
pub fn lagrange_equilibrium(masses: &MassConfig, omega: f64) -> (HillState, ReducedParameter) {
    lagrange_equilibrium_at(masses, omega, LagrangeVertex::L5)
}

/// Collinear (Euler) relative equilibrium with the star between the planets,
/// `w1 - w2 = π`. The radii solve the collinear central-configuration
/// condition by Newton iteration.
pub fn euler_equilibrium(masses: &MassConfig, omega: f64) -> Result<(HillState, ReducedParameter)> {
    let m = masses;
    let rho = kepler_radius(m, omega);
    // positions on the x axis: star 0, planet 1 at +a, planet 2 at -b
    let residual = |a: f64, b: f64| -> [f64; 2] {
        let sigma = m.sigma();
        let xc = (m.m1 * a - m.m2 * b) / sigma;
        // barycentric accelerations must equal -ω² (x - xc)
        let acc1 = -m.m0 / (a * a) - m.m2 / ((a + b) * (a + b));
        let acc2 = m.m0 / (b * b) + m.m1 / ((a + b) * (a + b));
        [
            acc1 + omega * omega * (a - xc),
            acc2 + omega * omega * (-b - xc),
        ]
    };
    let (mut a, mut b) = (rho, rho);
    for _ in 0..60 {
        let f = residual(a, b);
        if f[0].abs().max(f[1].abs()) < 1e-15 * omega * omega * rho {
            break;
        }
        let h = 1e-7 * rho;
        let fa = residual(a + h, b);
        let fb = residual(a, b + h);
        let j = [
            [(fa[0] - f[0]) / h, (fb[0] - f[0]) / h],
            [(fa[1] - f[1]) / h, (fb[1] - f[1]) / h],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let da = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let db = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        a -= da;
        b -= db;
    }
    let f = residual(a, b);
    if f[0].abs().max(f[1].abs()) > 1e-10 * omega * omega * rho {
        return Err(Error::NoConvergence {
            iterations: 60,
            residual: f[0].abs().max(f[1].abs()),
        });
    }
    rigid_rotation_state(m, omega, [[a, 0.0, 0.0], [-b, 0.0, 0.0]])
}

/// Coefficients `(a, b, c)` of the anomaly equation
/// `ẇ_j = ω (a + b sin(2 w_j + φ_j) + c cos(2 w_j + φ_j))` along the
/// equilateral equilibrium with `w1 - w2 = π/3`; `a² - b² - c² = 1`.
/// At the mirror vertex `b` changes sign, see [`lagrange_anomaly_coeffs_at`].
pub fn lagrange_anomaly_coeffs(masses: &MassConfig) -> (f64, f64, f64) {
    let MassConfig { m0, m1, m2 } = *masses;
    let sigma0 = m1 + m2;
    let p0 = m1 * m2;
    let p = masses.p();
    let d = m0 * (2.0 * m0 + m1) * (2.0 * m0 + m2) * (m0 + m1 + m2);
    let a = (4.0 * m0.powi(4)
        + 6.0 * sigma0 * m0.powi(3)
        + (4.0 * sigma0 * sigma0 + p0) * m0 * m0
        + 5.0 * p0 * sigma0 * m0
        + 2.0 * p0 * p0)
        / d;
    let b = -3f64.sqrt() * p * (m1 - m2) * m0 / d;
    let c = -p * (3.0 * sigma0 * m0 + 4.0 * m0 * m0 + 2.0 * p0) / d;
    (a, b, c)
}

pub fn lagrange_anomaly_coeffs_at(masses: &MassConfig, vertex: LagrangeVertex) -> (f64, f64, f64) {
    let (a, b, c) = lagrange_anomaly_coeffs(masses);
    match vertex {
        LagrangeVertex::L4 => (a, b, c),
        LagrangeVertex::L5 => (a, -b, c),
    }
}

/// Phase `φ_j` of the anomaly equation at the given vertex: the
/// equilibrium keeps `w1 - w2` fixed, which forces `φ2 - φ1 ≡ 2(w1 - w2)`.
pub fn lagrange_anomaly_phase(vertex: LagrangeVertex, body: usize) -> f64 {
    let s = match vertex {
        LagrangeVertex::L4 => 1.0,
        LagrangeVertex::L5 => -1.0,
    };
    match body {
        1 => -s * PI / 3.0,
        2 => s * PI / 3.0,
        _ => panic!("planet index must be 1 or 2"),
    }
}

/// Order-ε² closed form of the draconic anomaly along the equilateral
/// equilibrium, `w_j(t) = w̄_j + ωt + (εc1/2) sin θ + (ε²/8)(4 c2 sin θ -
/// 4 b2 cos θ + c1² sin 2θ)` with `θ = 2(w̄_j + ωt) + φ_j`. `mean_phase` is
/// `w̄_j`.
pub fn lagrange_anomaly_closed_form(
    masses: &MassConfig,
    omega: f64,
    vertex: LagrangeVertex,
    body: usize,
    mean_phase: f64,
    t: f64,
) -> f64 {
    let (c1, c2, mut b2) = anomaly_expansion(masses);
    if vertex == LagrangeVertex::L5 {
        b2 = -b2;
    }
    let theta = 2.0 * (mean_phase + omega * t) + lagrange_anomaly_phase(vertex, body);
    mean_phase
        + omega * t
        + 0.5 * c1 * theta.sin()
        + (4.0 * c2 * theta.sin() - 4.0 * b2 * theta.cos() + c1 * c1 * (2.0 * theta).sin()) / 8.0
}

/// Leading terms `(ε c1, ε² c2, ε² b2)` with the small masses folded in.
fn anomaly_expansion(masses: &MassConfig) -> (f64, f64, f64) {
    let MassConfig { m0, m1, m2 } = *masses;
    let c1 = -(m1 + m2) / m0;
    let c2 = (3.0 * m1 * m1 + 2.0 * m1 * m2 + 3.0 * m2 * m2) / (4.0 * m0 * m0);
    let b2 = 3f64.sqrt() * (m2 * m2 - m1 * m1) / (4.0 * m0 * m0);
    (c1, c2, b2)
}

/// Mean phase `w̄_j` whose closed form reproduces `w_j(0) = w0`.
pub fn lagrange_mean_phase(
    masses: &MassConfig,
    omega: f64,
    vertex: LagrangeVertex,
    body: usize,
    w0: f64,
) -> f64 {
    let mut phase = w0;
    for _ in 0..50 {
        let w = lagrange_anomaly_closed_form(masses, omega, vertex, body, phase, 0.0);
        let next = phase - (w - w0);
        if (next - phase).abs() < 1e-16 {
            return next;
        }
        phase = next;
    }
    phase
}

/// Floquet multipliers of the equilateral equilibrium over one period
/// `2π/ω` (the four trivial unit multipliers are implied).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeSpectrum {
    /// `exp(± i ω T/√2 · sqrt(1 ∓ sqrt(1 - 27p/σ²)))` for the lower and upper
    /// branch, positive-frequency representatives.
    pub multipliers: [nalgebra::Complex<f64>; 2],
    pub gascheau_ratio: f64,
    pub elliptic: bool,
}

impl LagrangeSpectrum {
    /// All six non-trivial-and-trivial multipliers: four conjugate/inverse
    /// companions plus two unit entries; the remaining two units are implied.
    pub fn all(&self) -> Vec<nalgebra::Complex<f64>> {
        let mut out = Vec::with_capacity(6);
        for m in self.multipliers {
            out.push(m);
            out.push(m.conj());
            if !self.elliptic {
                out.push(m.inv());
                out.push(m.inv().conj());
            }
        }
        if self.elliptic {
            out.push(nalgebra::Complex::new(1.0, 0.0));
            out.push(nalgebra::Complex::new(1.0, 0.0));
        }
        out
    }
}

pub fn lagrange_spectrum(masses: &MassConfig, omega: f64) -> LagrangeSpectrum {
    use nalgebra::Complex;
    let g = masses.gascheau_ratio();
    let period = 2.0 * PI / omega;
    let disc = Complex::new(1.0 - g, 0.0).sqrt();
    let one = Complex::new(1.0, 0.0);
    let factor = Complex::new(0.0, omega * period / 2f64.sqrt());
    let lower = (factor * (one - disc).sqrt()).exp();
    let upper = (factor * (one + disc).sqrt()).exp();
    LagrangeSpectrum {
        multipliers: [lower, upper],
        gascheau_ratio: g,
        elliptic: g <= 1.0,
    }
}
