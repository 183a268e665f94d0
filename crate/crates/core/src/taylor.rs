//! Taylor-series integration of autonomous ODEs recorded on an operation tape.
//!
//! The right-hand side is traced once through [`Tracer`] into a [`Tape`]; each
//! step then builds the Taylor expansion of the solution order by order with
//! the usual automatic-differentiation recurrences. Coefficients are generic
//! over [`Jet`], so the same tape propagates plain states (`f64`) or states
//! carrying first-order sensitivities ([`Dual`]), which is how variational
//! equations are transported.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::{Dual, Scalar};

#[derive(Debug, Clone, Copy)]
enum Node {
    Input,
    Const(f64),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    AddC(usize, f64),
    MulC(usize, f64),
    /// `c - a`
    RSubC(usize, f64),
    /// sin(a); partner holds cos(a)
    Sin(usize, usize),
    /// cos(a); partner holds sin(a)
    Cos(usize, usize),
    Sqrt(usize),
    Pow(usize, f64),
}

/// A recorded straight-line program.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    n_inputs: usize,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }
}

/// Recording handle. Arithmetic on tracers appends nodes to the shared tape.
#[derive(Clone, Copy)]
pub struct Tracer<'a> {
    id: usize,
    tape: &'a RefCell<Tape>,
}

impl<'a> Tracer<'a> {
    fn push(tape: &'a RefCell<Tape>, node: Node) -> Self {
        let mut t = tape.borrow_mut();
        t.nodes.push(node);
        Tracer {
            id: t.nodes.len() - 1,
            tape,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }
}

/// Record `f` on a fresh tape with `n_inputs` independent inputs.
/// Returns the tape and the node ids of the outputs.
pub fn record<F>(n_inputs: usize, f: F) -> (Tape, Vec<usize>)
where
    F: for<'a> FnOnce(&[Tracer<'a>]) -> Vec<Tracer<'a>>,
{
    let cell = RefCell::new(Tape {
        nodes: Vec::new(),
        n_inputs,
    });
    let outputs = {
        let inputs: Vec<Tracer<'_>> = (0..n_inputs)
            .map(|_| Tracer::push(&cell, Node::Input))
            .collect();
        f(&inputs).iter().map(|t| t.id).collect::<Vec<_>>()
    };
    (cell.into_inner(), outputs)
}

macro_rules! tracer_binop {
    ($trait:ident, $method:ident, $node:ident) => {
        impl<'a> $trait for Tracer<'a> {
            type Output = Self;
            fn $method(self, rhs: Self) -> Self {
                Tracer::push(self.tape, Node::$node(self.id, rhs.id))
            }
        }
    };
}

tracer_binop!(Add, add, Add);
tracer_binop!(Sub, sub, Sub);
tracer_binop!(Mul, mul, Mul);
tracer_binop!(Div, div, Div);

impl<'a> Neg for Tracer<'a> {
    type Output = Self;
    fn neg(self) -> Self {
        Tracer::push(self.tape, Node::Neg(self.id))
    }
}

impl<'a> Add<f64> for Tracer<'a> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Tracer::push(self.tape, Node::AddC(self.id, rhs))
    }
}

impl<'a> Sub<f64> for Tracer<'a> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Tracer::push(self.tape, Node::AddC(self.id, -rhs))
    }
}

impl<'a> Mul<f64> for Tracer<'a> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Tracer::push(self.tape, Node::MulC(self.id, rhs))
    }
}

impl<'a> Div<f64> for Tracer<'a> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Tracer::push(self.tape, Node::MulC(self.id, 1.0 / rhs))
    }
}

impl<'a> Scalar for Tracer<'a> {
    fn sin_cos(&self) -> (Self, Self) {
        let n = self.tape.borrow().nodes.len();
        let s = Tracer::push(self.tape, Node::Sin(self.id, n + 1));
        let c = Tracer::push(self.tape, Node::Cos(self.id, n));
        (s, c)
    }
    fn sqrt(&self) -> Self {
        Tracer::push(self.tape, Node::Sqrt(self.id))
    }
    fn powf(&self, exponent: f64) -> Self {
        Tracer::push(self.tape, Node::Pow(self.id, exponent))
    }
    fn recip(&self) -> Self {
        Tracer::push(self.tape, Node::Pow(self.id, -1.0))
    }
    fn rsub(&self, c: f64) -> Self {
        Tracer::push(self.tape, Node::RSubC(self.id, c))
    }
}

impl<'a> Tracer<'a> {
    /// A constant node on the same tape.
    pub fn constant(&self, v: f64) -> Self {
        Tracer::push(self.tape, Node::Const(v))
    }
}

/// Taylor coefficient algebra.
pub trait Jet:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin_cos0(&self) -> (Self, Self);
    fn sqrt0(&self) -> Self;
    fn powf0(&self, e: f64) -> Self;
}

impl Jet for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    fn sin_cos0(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }
    fn sqrt0(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powf0(&self, e: f64) -> Self {
        f64::powf(*self, e)
    }
}

impl<const N: usize> Jet for Dual<N> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re
    }
    fn sin_cos0(&self) -> (Self, Self) {
        Scalar::sin_cos(self)
    }
    fn sqrt0(&self) -> Self {
        Scalar::sqrt(self)
    }
    fn powf0(&self, e: f64) -> Self {
        Scalar::powf(self, e)
    }
}

/// Scratch space holding the Taylor coefficients of every tape node.
pub struct TaylorWorkspace<K: Jet> {
    order: usize,
    coeffs: Vec<K>,
}

impl<K: Jet> TaylorWorkspace<K> {
    pub fn new(tape: &Tape, order: usize) -> Self {
        Self {
            order,
            coeffs: vec![K::from_f64(0.0); tape.len() * (order + 1)],
        }
    }

    #[inline]
    fn at(&self, node: usize, k: usize) -> K {
        self.coeffs[node * (self.order + 1) + k]
    }

    #[inline]
    fn set(&mut self, node: usize, k: usize, v: K) {
        self.coeffs[node * (self.order + 1) + k] = v;
    }

    /// Coefficient `k` of output node `node`.
    pub fn coeff(&self, node: usize, k: usize) -> K {
        self.at(node, k)
    }
}

/// Evaluate every node of `tape` at order `k`, assuming orders `< k` are
/// already present and the inputs have coefficient `k` filled in.
fn eval_order<K: Jet>(tape: &Tape, ws: &mut TaylorWorkspace<K>, k: usize) {
    let zero = K::from_f64(0.0);
    for (i, node) in tape.nodes.iter().enumerate() {
        let v = match *node {
            Node::Input => continue,
            Node::Const(c) => {
                if k == 0 {
                    K::from_f64(c)
                } else {
                    zero
                }
            }
            Node::Add(a, b) => ws.at(a, k) + ws.at(b, k),
            Node::Sub(a, b) => ws.at(a, k) - ws.at(b, k),
            Node::Neg(a) => -ws.at(a, k),
            Node::AddC(a, c) => {
                if k == 0 {
                    ws.at(a, 0) + K::from_f64(c)
                } else {
                    ws.at(a, k)
                }
            }
            Node::RSubC(a, c) => {
                if k == 0 {
                    K::from_f64(c) - ws.at(a, 0)
                } else {
                    -ws.at(a, k)
                }
            }
            Node::MulC(a, c) => ws.at(a, k) * c,
            Node::Mul(a, b) => {
                let mut acc = ws.at(a, 0) * ws.at(b, k);
                for j in 1..=k {
                    acc = acc + ws.at(a, j) * ws.at(b, k - j);
                }
                acc
            }
            Node::Div(a, b) => {
                let mut acc = ws.at(a, k);
                for j in 1..=k {
                    acc = acc - ws.at(b, j) * ws.at(i, k - j);
                }
                acc / ws.at(b, 0)
            }
            Node::Sqrt(a) => {
                if k == 0 {
                    ws.at(a, 0).sqrt0()
                } else {
                    let mut acc = ws.at(a, k);
                    for j in 1..k {
                        acc = acc - ws.at(i, j) * ws.at(i, k - j);
                    }
                    acc / (ws.at(i, 0) * 2.0)
                }
            }
            Node::Pow(a, e) => {
                if k == 0 {
                    ws.at(a, 0).powf0(e)
                } else {
                    let mut acc = zero;
                    for j in 0..k {
                        let w = e * (k - j) as f64 - j as f64;
                        acc = acc + ws.at(a, k - j) * ws.at(i, j) * w;
                    }
                    acc / (ws.at(a, 0) * k as f64)
                }
            }
            Node::Sin(a, partner) => {
                if k == 0 {
                    let (s, c) = ws.at(a, 0).sin_cos0();
                    ws.set(partner, 0, c);
                    s
                } else {
                    let mut acc = zero;
                    for j in 1..=k {
                        acc = acc + ws.at(a, j) * ws.at(partner, k - j) * j as f64;
                    }
                    acc * (1.0 / k as f64)
                }
            }
            Node::Cos(a, partner) => {
                if k == 0 {
                    // filled together with the partner sine
                    ws.at(i, 0)
                } else {
                    let mut acc = zero;
                    for j in 1..=k {
                        acc = acc + ws.at(a, j) * ws.at(partner, k - j) * j as f64;
                    }
                    acc * (-1.0 / k as f64)
                }
            }
        };
        ws.set(i, k, v);
    }
}

/// Evaluate the tape once (order zero) on plain values.
pub fn eval<K: Jet>(tape: &Tape, inputs: &[K], outputs: &[usize]) -> Vec<K> {
    let mut ws = TaylorWorkspace::new(tape, 0);
    for (i, v) in inputs.iter().enumerate() {
        ws.set(i, 0, *v);
    }
    eval_order(tape, &mut ws, 0);
    outputs.iter().map(|&o| ws.at(o, 0)).collect()
}

/// An autonomous ODE `x' = f(x; p)` recorded on a tape. The first
/// `n_state` tape inputs are the state, the remaining ones are parameters.
#[derive(Debug, Clone)]
pub struct TaylorOde {
    pub tape: Tape,
    pub rhs: Vec<usize>,
}

impl TaylorOde {
    pub fn n_state(&self) -> usize {
        self.rhs.len()
    }

    /// Fill the Taylor coefficients of the solution through `x(t0) = state`
    /// up to degree `ws.order`. Coefficient `k` of state component `i` is
    /// read back with [`TaylorWorkspace::coeff`] on node `i`.
    pub fn expand<K: Jet>(&self, ws: &mut TaylorWorkspace<K>, state: &[K], params: &[K]) {
        let n = self.n_state();
        for (i, v) in state.iter().enumerate() {
            ws.set(i, 0, *v);
        }
        for (j, v) in params.iter().enumerate() {
            ws.set(n + j, 0, *v);
        }
        let zero = K::from_f64(0.0);
        for k in 0..ws.order {
            eval_order(&self.tape, ws, k);
            let scale = 1.0 / (k + 1) as f64;
            for i in 0..n {
                let d = ws.at(self.rhs[i], k) * scale;
                ws.set(i, k + 1, d);
            }
            for j in 0..params.len() {
                ws.set(n + j, k + 1, zero);
            }
        }
    }
}

/// Sum the Taylor polynomial of state component `i` at offset `h`.
pub fn horner<K: Jet>(ws: &TaylorWorkspace<K>, i: usize, h: f64) -> K {
    let mut acc = ws.at(i, ws.order);
    for k in (0..ws.order).rev() {
        acc = acc * h + ws.at(i, k);
    }
    acc
}

/// Derivative of the Taylor polynomial of component `i` at offset `h`.
pub fn horner_derivative<K: Jet>(ws: &TaylorWorkspace<K>, i: usize, h: f64) -> K {
    let n = ws.order;
    let mut acc = ws.at(i, n) * n as f64;
    for k in (1..n).rev() {
        acc = acc * h + ws.at(i, k) * k as f64;
    }
    acc
}

/// Order that makes the truncation term of a Jorba–Zou step comparable to
/// `tol`.
pub fn order_for_tolerance(tol: f64) -> usize {
    let p = (-0.5 * tol.ln() + 1.0).ceil() as usize;
    p.clamp(8, 30)
}

/// Step size from the last two coefficients, with per-component admissible
/// errors `allowed[i]`.
pub fn step_size<K: Jet>(ws: &TaylorWorkspace<K>, allowed: &[f64]) -> f64 {
    let p = ws.order;
    let mut h = f64::INFINITY;
    for (i, &eps) in allowed.iter().enumerate() {
        for k in [p - 1, p] {
            let c = ws.at(i, k).value().abs();
            if c > 0.0 {
                let r = (eps / c).powf(1.0 / k as f64);
                if r < h {
                    h = r;
                }
            }
        }
    }
    h
}
