//! Parametric piecewise-smooth planar systems and local Taylor data.
//!
//! Every system lives in internal coordinates where the switching manifold is
//! `x = 0` (or the coordinate axes for four-quadrant systems) and the candidate
//! bifurcation sits at the origin with `mu = 0`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest total derivative order stored in a [`TaylorTable`].
pub const MAX_ORDER: usize = 4;

/// Component index of `f` (the x-velocity).
pub const F: usize = 0;
/// Component index of `g` (the y-velocity).
pub const G: usize = 1;

/// Errors raised while building or evaluating systems.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
    #[error("polynomial degree {0} exceeds 4; classification needs degree <= 4")]
    DegreeTooHigh(usize),
    #[error("non-finite field value at ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("unknown zoo model `{0}`")]
    UnknownZoo(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Partial derivatives of one smooth piece at the origin.
///
/// `coeff[i][j][c]` is the partial of component `c` taken `i` times in `x`
/// and `j` times in `y`, for `i + j <= 4`. `coeff_mu[i][j][c]` holds the
/// `mu`-derivative of the entries with `i + j <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorTable {
    pub coeff: [[[f64; 2]; MAX_ORDER + 1]; MAX_ORDER + 1],
    pub coeff_mu: [[[f64; 2]; 2]; 2],
}

impl Default for TaylorTable {
    fn default() -> Self {
        Self::zero()
    }
}

impl TaylorTable {
    /// The all-zero table.
    pub fn zero() -> Self {
        Self {
            coeff: [[[0.0; 2]; MAX_ORDER + 1]; MAX_ORDER + 1],
            coeff_mu: [[[0.0; 2]; 2]; 2],
        }
    }

    /// Raw entry `d^{i+j} F_c / dx^i dy^j` at the origin.
    pub fn d(&self, i: usize, j: usize, c: usize) -> f64 {
        if i + j > MAX_ORDER {
            return 0.0;
        }
        self.coeff[i][j][c]
    }

    /// Partial of `f`.
    pub fn f(&self, i: usize, j: usize) -> f64 {
        self.d(i, j, F)
    }

    /// Partial of `g`.
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.d(i, j, G)
    }

    /// `mu`-derivative of a partial with `i + j <= 1`.
    pub fn dmu(&self, i: usize, j: usize, c: usize) -> f64 {
        if i + j > 1 {
            return 0.0;
        }
        self.coeff_mu[i][j][c]
    }

    fn alias(&self, k: usize, c: usize) -> f64 {
        match k {
            0 => self.d(0, 0, c),
            1 => self.d(1, 0, c),
            2 => self.d(0, 1, c),
            3 => 0.5 * self.d(2, 0, c),
            4 => self.d(1, 1, c),
            5 => 0.5 * self.d(0, 2, c),
            _ => panic!("alias index {k} out of range 0..=5"),
        }
    }

    /// Alias `a_k` for `f`: `a0 = f`, `a1 = f_x`, `a2 = f_y`, `a3 = f_xx/2`,
    /// `a4 = f_xy`, `a5 = f_yy/2`.
    pub fn a(&self, k: usize) -> f64 {
        self.alias(k, F)
    }

    /// Alias `b_k` for `g`, same conventions as [`TaylorTable::a`].
    pub fn b(&self, k: usize) -> f64 {
        self.alias(k, G)
    }

    /// Jacobian `[[f_x, f_y], [g_x, g_y]]` at the origin.
    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [[self.f(1, 0), self.f(0, 1)], [self.g(1, 0), self.g(0, 1)]]
    }

    /// Eigen data of the Jacobian.
    pub fn eigen(&self) -> Eigen {
        Eigen::of(self.jacobian())
    }

    /// Reflection `y -> -y` of the underlying field.
    pub fn reflect_y(&self) -> Self {
        let mut t = *self;
        for i in 0..=MAX_ORDER {
            for j in 0..=MAX_ORDER - i {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                t.coeff[i][j][F] *= s;
                t.coeff[i][j][G] *= -s;
            }
        }
        for i in 0..2 {
            for j in 0..2 - i {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                t.coeff_mu[i][j][F] *= s;
                t.coeff_mu[i][j][G] *= -s;
            }
        }
        t
    }

    /// Point reflection `(x, y) -> (-x, -y)`: the new field is `-F(-x, -y)`.
    pub fn rotate(&self) -> Self {
        let mut t = *self;
        for i in 0..=MAX_ORDER {
            for j in 0..=MAX_ORDER - i {
                let s = if (i + j) % 2 == 0 { -1.0 } else { 1.0 };
                t.coeff[i][j][F] *= s;
                t.coeff[i][j][G] *= s;
            }
        }
        for i in 0..2 {
            for j in 0..2 - i {
                let s = if (i + j) % 2 == 0 { -1.0 } else { 1.0 };
                t.coeff_mu[i][j][F] *= s;
                t.coeff_mu[i][j][G] *= s;
            }
        }
        t
    }

    /// Parameter flip `mu -> -mu`.
    pub fn flip_mu(&self) -> Self {
        let mut t = *self;
        for row in t.coeff_mu.iter_mut() {
            for e in row.iter_mut() {
                e[F] = -e[F];
                e[G] = -e[G];
            }
        }
        t
    }

    /// Largest absolute entry, floored at 1; used to scale thresholds.
    pub fn scale(&self) -> f64 {
        let mut m: f64 = 1.0;
        for i in 0..=MAX_ORDER {
            for j in 0..=MAX_ORDER - i {
                m = m.max(self.coeff[i][j][F].abs()).max(self.coeff[i][j][G].abs());
            }
        }
        m
    }
}

/// Eigenvalues of a real 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Eigen {
    /// `lambda +- i omega` with `omega > 0`.
    Complex { lambda: f64, omega: f64 },
    /// `lambda +- eta`, real with `eta >= 0`.
    Real { lambda: f64, eta: f64 },
}

impl Eigen {
    /// Eigen data of `m`.
    pub fn of(m: [[f64; 2]; 2]) -> Self {
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let lambda = 0.5 * tr;
        let disc = lambda * lambda - det;
        if disc < 0.0 {
            Eigen::Complex { lambda, omega: (-disc).sqrt() }
        } else {
            Eigen::Real { lambda, eta: disc.sqrt() }
        }
    }

    /// Real part shared by both eigenvalues (half the trace).
    pub fn lambda(&self) -> f64 {
        match *self {
            Eigen::Complex { lambda, .. } | Eigen::Real { lambda, .. } => lambda,
        }
    }

    /// True when both eigenvalues have negative real part.
    pub fn is_stable(&self) -> bool {
        match *self {
            Eigen::Complex { lambda, .. } => lambda < 0.0,
            Eigen::Real { lambda, eta } => lambda + eta < 0.0,
        }
    }

    /// True when no eigenvalue has zero real part.
    pub fn is_hyperbolic(&self) -> bool {
        match *self {
            Eigen::Complex { lambda, .. } => lambda.abs() > 1e-12,
            Eigen::Real { lambda, eta } => (lambda + eta).abs() > 1e-12 && (lambda - eta).abs() > 1e-12,
        }
    }
}

/// One monomial `c(mu) x^i y^j z^k` where `c(mu) = sum_p coeff[p] mu^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub coeff: Vec<f64>,
}

impl Monomial {
    /// Monomial with a `mu`-independent coefficient.
    pub fn new(i: u32, j: u32, c: f64) -> Self {
        Self { i, j, k: 0, coeff: vec![c] }
    }

    /// Monomial with coefficient `c0 + c1 mu`.
    pub fn linear_mu(i: u32, j: u32, c0: f64, c1: f64) -> Self {
        Self { i, j, k: 0, coeff: vec![c0, c1] }
    }

    fn c(&self, mu: f64) -> f64 {
        self.coeff.iter().rev().fold(0.0, |acc, &c| acc * mu + c)
    }

    fn c_mu(&self, mu: f64) -> f64 {
        let mut acc = 0.0;
        for (p, &c) in self.coeff.iter().enumerate().skip(1).rev() {
            acc = acc * mu + p as f64 * c;
        }
        acc
    }
}

/// Polynomial in `(x, y, z)` with `mu`-polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub terms: Vec<Monomial>,
}

fn powi(v: f64, n: u32) -> f64 {
    v.powi(n as i32)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

impl Poly {
    /// Polynomial from monomials.
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    /// Shorthand from `(i, j, coeff)` triples with constant coefficients.
    pub fn from_terms(terms: &[(u32, u32, f64)]) -> Self {
        Self::new(terms.iter().map(|&(i, j, c)| Monomial::new(i, j, c)).collect())
    }

    /// Value at `(x, y, z; mu)`.
    pub fn eval(&self, x: f64, y: f64, z: f64, mu: f64) -> f64 {
        self.terms
            .iter()
            .map(|m| m.c(mu) * powi(x, m.i) * powi(y, m.j) * powi(z, m.k))
            .sum()
    }

    /// Total degree in `(x, y, z)`.
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|m| m.coeff.iter().any(|&c| c != 0.0))
            .map(|m| (m.i + m.j + m.k) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Exact partial `d^{i+j}/dx^i dy^j` at `(0, 0, 0; mu)`, summing all
    /// `z`-free monomials with matching powers.
    pub fn partial_at_origin(&self, i: u32, j: u32, mu: f64) -> f64 {
        let scale = factorial(i) * factorial(j);
        self.terms
            .iter()
            .filter(|m| m.i == i && m.j == j && m.k == 0)
            .map(|m| m.c(mu) * scale)
            .sum()
    }

    /// `mu`-derivative of [`Poly::partial_at_origin`].
    pub fn partial_mu_at_origin(&self, i: u32, j: u32, mu: f64) -> f64 {
        let scale = factorial(i) * factorial(j);
        self.terms
            .iter()
            .filter(|m| m.i == i && m.j == j && m.k == 0)
            .map(|m| m.c_mu(mu) * scale)
            .sum()
    }

    /// Exact `dF/dz` at the origin.
    pub fn z_partial_at_origin(&self, mu: f64) -> f64 {
        self.terms
            .iter()
            .filter(|m| m.i == 0 && m.j == 0 && m.k == 1)
            .map(|m| m.c(mu))
            .sum()
    }

    /// Exact `d/dmu dF/dz` at the origin.
    pub fn z_partial_mu_at_origin(&self, mu: f64) -> f64 {
        self.terms
            .iter()
            .filter(|m| m.i == 0 && m.j == 0 && m.k == 1)
            .map(|m| m.c_mu(mu))
            .sum()
    }

    /// Symbolic derivative in `x` (`var = 0`), `y` (`1`) or `z` (`2`).
    pub fn diff(&self, var: usize) -> Poly {
        let mut out = Vec::new();
        for m in &self.terms {
            let p = [m.i, m.j, m.k][var];
            if p == 0 {
                continue;
            }
            let mut n = m.clone();
            match var {
                0 => n.i -= 1,
                1 => n.j -= 1,
                _ => n.k -= 1,
            }
            n.coeff.iter_mut().for_each(|c| *c *= p as f64);
            out.push(n);
        }
        Poly::new(out)
    }
}

/// Callable field `(x, y, z, mu) -> (f, g)`; `z` is ignored by planar pieces.
pub type FieldFn = Arc<dyn Fn(f64, f64, f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
enum PieceKind {
    Poly { f: Poly, g: Poly },
    Func { eval: FieldFn, local: Option<(Poly, Poly)> },
}

/// One smooth vector-field piece.
///
/// Polynomial pieces give exact Taylor tables. Callable pieces may carry a
/// local polynomial that agrees with the callable near the origin (for
/// example one branch of a piecewise-linear nullcline); otherwise tables come
/// from finite differences.
#[derive(Clone)]
pub struct SmoothPiece {
    kind: PieceKind,
    /// Length scale for finite-difference steps.
    pub scale: f64,
}

impl fmt::Debug for SmoothPiece {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PieceKind::Poly { f, g } => fm.debug_struct("SmoothPiece").field("f", f).field("g", g).finish(),
            PieceKind::Func { local, .. } => fm
                .debug_struct("SmoothPiece")
                .field("callable", &true)
                .field("local", local)
                .finish(),
        }
    }
}

impl SmoothPiece {
    /// Polynomial piece.
    pub fn poly(f: Poly, g: Poly) -> Self {
        Self { kind: PieceKind::Poly { f, g }, scale: 1.0 }
    }

    /// Callable piece; Taylor data by finite differences.
    pub fn func(eval: FieldFn) -> Self {
        Self { kind: PieceKind::Func { eval, local: None }, scale: 1.0 }
    }

    /// Callable piece with a polynomial that matches it near the origin.
    pub fn func_with_local(eval: FieldFn, f: Poly, g: Poly) -> Self {
        Self { kind: PieceKind::Func { eval, local: Some((f, g)) }, scale: 1.0 }
    }

    /// Override the finite-difference length scale.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Field value at `(x, y; mu)`.
    pub fn eval(&self, x: f64, y: f64, mu: f64) -> (f64, f64) {
        self.eval3(x, y, 0.0, mu)
    }

    /// Field value at `(x, y, z; mu)` for pieces that depend on `z`.
    pub fn eval3(&self, x: f64, y: f64, z: f64, mu: f64) -> (f64, f64) {
        match &self.kind {
            PieceKind::Poly { f, g } => (f.eval(x, y, z, mu), g.eval(x, y, z, mu)),
            PieceKind::Func { eval, .. } => eval(x, y, z, mu),
        }
    }

    /// The polynomial used for exact Taylor data, if any.
    pub fn local_poly(&self) -> Option<(&Poly, &Poly)> {
        match &self.kind {
            PieceKind::Poly { f, g } => Some((f, g)),
            PieceKind::Func { local: Some((f, g)), .. } => Some((f, g)),
            PieceKind::Func { local: None, .. } => None,
        }
    }

    /// True when the piece is a polynomial everywhere.
    pub fn is_polynomial(&self) -> bool {
        matches!(self.kind, PieceKind::Poly { .. })
    }

    /// Polynomial degree of the Taylor source, `None` for pure callables.
    pub fn degree(&self) -> Option<usize> {
        self.local_poly().map(|(f, g)| f.degree().max(g.degree()))
    }

    /// Structural equality: same polynomials or the same callable.
    pub fn same_as(&self, other: &SmoothPiece) -> bool {
        match (&self.kind, &other.kind) {
            (PieceKind::Poly { f: f1, g: g1 }, PieceKind::Poly { f: f2, g: g2 }) => f1 == f2 && g1 == g2,
            (PieceKind::Func { eval: e1, .. }, PieceKind::Func { eval: e2, .. }) => Arc::ptr_eq(e1, e2),
            _ => false,
        }
    }

    /// Jacobian `[[f_x, f_y], [g_x, g_y]]` at `(x, y; mu)`.
    pub fn jacobian_at(&self, x: f64, y: f64, mu: f64) -> [[f64; 2]; 2] {
        if let PieceKind::Poly { f, g } = &self.kind {
            let (fx, fy, gx, gy) = (f.diff(0), f.diff(1), g.diff(0), g.diff(1));
            return [
                [fx.eval(x, y, 0.0, mu), fy.eval(x, y, 0.0, mu)],
                [gx.eval(x, y, 0.0, mu), gy.eval(x, y, 0.0, mu)],
            ];
        }
        let h = 1e-6 * self.scale * (1.0 + x.abs().max(y.abs()));
        let (fxp, gxp) = self.eval(x + h, y, mu);
        let (fxm, gxm) = self.eval(x - h, y, mu);
        let (fyp, gyp) = self.eval(x, y + h, mu);
        let (fym, gym) = self.eval(x, y - h, mu);
        [
            [(fxp - fxm) / (2.0 * h), (fyp - fym) / (2.0 * h)],
            [(gxp - gxm) / (2.0 * h), (gyp - gym) / (2.0 * h)],
        ]
    }

    /// Taylor table at `mu` to order 4.
    pub fn taylor(&self, mu: f64) -> Result<TaylorTable, ModelError> {
        extract_taylor(self, mu, MAX_ORDER)
    }

    /// `(dF/dz, d/dmu dF/dz)` at the origin, per component.
    pub fn z_partials(&self, mu: f64) -> ([f64; 2], [f64; 2]) {
        if let Some((f, g)) = self.local_poly() {
            return (
                [f.z_partial_at_origin(mu), g.z_partial_at_origin(mu)],
                [f.z_partial_mu_at_origin(mu), g.z_partial_mu_at_origin(mu)],
            );
        }
        let h = f64::EPSILON.powf(1.0 / 3.0) * self.scale;
        let dz = |m: f64| {
            let (fp, gp) = self.eval3(0.0, 0.0, h, m);
            let (fm, gm) = self.eval3(0.0, 0.0, -h, m);
            [(fp - fm) / (2.0 * h), (gp - gm) / (2.0 * h)]
        };
        let hm = f64::EPSILON.powf(0.25) * (1.0 + mu.abs());
        let (p, m) = (dz(mu + hm), dz(mu - hm));
        (dz(mu), [(p[0] - m[0]) / (2.0 * hm), (p[1] - m[1]) / (2.0 * hm)])
    }
}

fn binom(n: usize, k: usize) -> f64 {
    factorial(n as u32) / (factorial(k as u32) * factorial((n - k) as u32))
}

/// Central-difference estimate of `d^{i+j}/dx^i dy^j` at the origin with step `h`.
fn central_partial(
    eval: &dyn Fn(f64, f64) -> (f64, f64),
    i: usize,
    j: usize,
    h: f64,
) -> Result<[f64; 2], ModelError> {
    let mut acc = [0.0; 2];
    for m in 0..=i {
        for n in 0..=j {
            let x = (i as f64 / 2.0 - m as f64) * h;
            let y = (j as f64 / 2.0 - n as f64) * h;
            let (f, g) = eval(x, y);
            if !f.is_finite() || !g.is_finite() {
                return Err(ModelError::NonFinite { x, y });
            }
            let w = binom(i, m) * binom(j, n) * if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
            acc[0] += w * f;
            acc[1] += w * g;
        }
    }
    let denom = h.powi((i + j) as i32);
    Ok([acc[0] / denom, acc[1] / denom])
}

/// Richardson-extrapolated central difference using steps `h` and `2h`.
fn richardson_partial(
    eval: &dyn Fn(f64, f64) -> (f64, f64),
    i: usize,
    j: usize,
    h: f64,
) -> Result<[f64; 2], ModelError> {
    let fine = central_partial(eval, i, j, h)?;
    let coarse = central_partial(eval, i, j, 2.0 * h)?;
    Ok([(4.0 * fine[0] - coarse[0]) / 3.0, (4.0 * fine[1] - coarse[1]) / 3.0])
}

/// Mixed partials of `piece` at the origin up to total order `order`.
///
/// Exact for pieces with a polynomial Taylor source. Otherwise order-`k`
/// entries use step `eps^(1/(k+2))` times the piece's length scale.
pub fn extract_taylor(piece: &SmoothPiece, mu: f64, order: usize) -> Result<TaylorTable, ModelError> {
    let order = order.min(MAX_ORDER);
    let mut t = TaylorTable::zero();
    if let Some((f, g)) = piece.local_poly() {
        for i in 0..=order {
            for j in 0..=order - i {
                t.coeff[i][j][F] = f.partial_at_origin(i as u32, j as u32, mu);
                t.coeff[i][j][G] = g.partial_at_origin(i as u32, j as u32, mu);
            }
        }
        for i in 0..2 {
            for j in 0..2 - i {
                t.coeff_mu[i][j][F] = f.partial_mu_at_origin(i as u32, j as u32, mu);
                t.coeff_mu[i][j][G] = g.partial_mu_at_origin(i as u32, j as u32, mu);
            }
        }
        return Ok(t);
    }
    let at = |m: f64| move |x: f64, y: f64| piece.eval(x, y, m);
    let ev = at(mu);
    for i in 0..=order {
        for j in 0..=order - i {
            let k = i + j;
            let v = if k == 0 {
                let (f, g) = ev(0.0, 0.0);
                if !f.is_finite() || !g.is_finite() {
                    return Err(ModelError::NonFinite { x: 0.0, y: 0.0 });
                }
                [f, g]
            } else {
                let h = f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * piece.scale;
                richardson_partial(&ev, i, j, h)?
            };
            t.coeff[i][j][F] = v[0];
            t.coeff[i][j][G] = v[1];
        }
    }
    let hm = f64::EPSILON.powf(0.25) * (1.0 + mu.abs());
    let (evp, evm) = (at(mu + hm), at(mu - hm));
    for i in 0..2 {
        for j in 0..2 - i {
            let (p, m) = if i + j == 0 {
                let (fp, gp) = evp(0.0, 0.0);
                let (fm, gm) = evm(0.0, 0.0);
                ([fp, gp], [fm, gm])
            } else {
                let h = f64::EPSILON.powf(1.0 / 3.0) * piece.scale;
                (richardson_partial(&evp, i, j, h)?, richardson_partial(&evm, i, j, h)?)
            };
            t.coeff_mu[i][j][F] = (p[0] - m[0]) / (2.0 * hm);
            t.coeff_mu[i][j][G] = (p[1] - m[1]) / (2.0 * hm);
        }
    }
    Ok(t)
}

/// Scalar map `(y, mu) -> value` used for resets and impulses.
#[derive(Clone)]
pub struct ScalarMap {
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.write_str("ScalarMap")
    }
}

impl ScalarMap {
    /// Map from a closure.
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(f) }
    }

    /// Map from a polynomial in `y` (monomials with `i = 0`).
    pub fn from_poly(p: Poly) -> Self {
        Self::new(move |y, mu| p.eval(0.0, y, 0.0, mu))
    }

    /// Value at `(y, mu)`.
    pub fn eval(&self, y: f64, mu: f64) -> f64 {
        (self.eval)(y, mu)
    }

    /// Central-difference derivative in `y`.
    pub fn dy(&self, y: f64, mu: f64) -> f64 {
        let h = 1e-5 * (1.0 + y.abs());
        (self.eval(y + h, mu) - self.eval(y - h, mu)) / (2.0 * h)
    }

    /// Central-difference second derivative in `y`.
    pub fn dyy(&self, y: f64, mu: f64) -> f64 {
        let h = 1e-4 * (1.0 + y.abs());
        (self.eval(y + h, mu) - 2.0 * self.eval(y, mu) + self.eval(y - h, mu)) / (h * h)
    }
}

/// Switching rule of a system.
#[derive(Debug, Clone)]
pub enum Mechanism {
    /// Discontinuous or continuous two-piece system on `x = 0`.
    Filippov { left: SmoothPiece, right: SmoothPiece },
    /// Orbits live in `x <= 0`; `y -> reset(y)` on arrival at `x = 0`.
    Impact { field: SmoothPiece, reset: ScalarMap },
    /// On reaching the positive y-axis, jump to `R(y)(cos theta, sin theta)`.
    Impulse { field: SmoothPiece, radius: ScalarMap, angle: ScalarMap },
    /// Left field until `x = mu`, then right field until `x = -mu`.
    Hysteretic { left: SmoothPiece, right: SmoothPiece },
    /// Left field while `x(t - mu) < 0`.
    Delayed { left: SmoothPiece, right: SmoothPiece },
    /// One piece per quadrant, numbered clockwise from `x > 0, y > 0`:
    /// `(+,+)`, `(+,-)`, `(-,-)`, `(-,+)`.
    FourQuadrant { pieces: [SmoothPiece; 4] },
    /// Single field `F(x, y, S(x); mu)` with `S(x) = sqrt(x)` for `x >= 0`.
    SqrtContinuous { field: SmoothPiece },
}

impl Mechanism {
    /// Schema tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Mechanism::Filippov { .. } => "filippov",
            Mechanism::Impact { .. } => "impact",
            Mechanism::Impulse { .. } => "impulse",
            Mechanism::Hysteretic { .. } => "hysteretic",
            Mechanism::Delayed { .. } => "delayed",
            Mechanism::FourQuadrant { .. } => "four_quadrant",
            Mechanism::SqrtContinuous { .. } => "sqrt_continuous",
        }
    }

    /// The two half-plane pieces for Filippov, hysteretic and delayed rules.
    pub fn two_pieces(&self) -> Option<(&SmoothPiece, &SmoothPiece)> {
        match self {
            Mechanism::Filippov { left, right }
            | Mechanism::Hysteretic { left, right }
            | Mechanism::Delayed { left, right } => Some((left, right)),
            _ => None,
        }
    }

    /// All pieces in declaration order.
    pub fn pieces(&self) -> Vec<&SmoothPiece> {
        match self {
            Mechanism::Filippov { left, right }
            | Mechanism::Hysteretic { left, right }
            | Mechanism::Delayed { left, right } => vec![left, right],
            Mechanism::Impact { field, .. }
            | Mechanism::Impulse { field, .. }
            | Mechanism::SqrtContinuous { field } => vec![field],
            Mechanism::FourQuadrant { pieces } => pieces.iter().collect(),
        }
    }
}

/// A named well-posedness check with its witness value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub witness: f64,
}

/// A parametric piecewise-smooth system.
#[derive(Debug, Clone)]
pub struct PWSystem {
    pub name: String,
    pub mechanism: Mechanism,
    /// Default parameter value.
    pub mu: f64,
    /// Named constants the system was built from.
    pub params: BTreeMap<String, f64>,
    /// Coordinate-change notes.
    pub notes: String,
}

impl PWSystem {
    /// System with default metadata.
    pub fn new(name: impl Into<String>, mechanism: Mechanism) -> Self {
        Self { name: name.into(), mechanism, mu: 0.0, params: BTreeMap::new(), notes: String::new() }
    }

    /// Largest polynomial degree over all pieces (`None` if any is a pure callable).
    pub fn max_degree(&self) -> Option<usize> {
        self.mechanism.pieces().iter().map(|p| p.degree()).try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }

    /// Reject systems whose Taylor sources exceed degree 4.
    pub fn check_classifiable(&self) -> Result<(), ModelError> {
        for p in self.mechanism.pieces() {
            if let Some(d) = p.degree() {
                if d > MAX_ORDER {
                    return Err(ModelError::DegreeTooHigh(d));
                }
            }
        }
        Ok(())
    }

    /// Mechanism-specific well-posedness checks at `mu`, sampled near the origin.
    pub fn well_posedness(&self, mu: f64) -> Vec<Check> {
        let samples = [1e-3, 1e-2, 1e-1];
        match &self.mechanism {
            Mechanism::Impact { field, reset } => {
                let mut worst = f64::INFINITY;
                for &y in &samples {
                    for s in [1.0, -1.0] {
                        let (f, _) = field.eval(0.0, s * y, mu);
                        worst = worst.min(f * s);
                    }
                }
                let phi = reset.eval(1e-2, mu);
                vec![
                    Check { name: "sgn f(0,y) = sgn y".into(), ok: worst > 0.0, witness: worst },
                    Check { name: "reset maps y > 0 to y < 0".into(), ok: phi < 0.0, witness: phi },
                ]
            }
            Mechanism::Impulse { radius, .. } => {
                let r0 = radius.eval(0.0, mu);
                vec![Check { name: "R(0) = 0".into(), ok: r0.abs() < 1e-12, witness: r0 }]
            }
            Mechanism::FourQuadrant { pieces } => {
                let signs = [(1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
                pieces
                    .iter()
                    .zip(signs)
                    .enumerate()
                    .map(|(n, (p, (sf, sg)))| {
                        let (f, g) = p.eval(0.0, 0.0, mu);
                        let w = (f * sf).min(g * sg);
                        Check { name: format!("clockwise spiral signs of F{}", n + 1), ok: w > 0.0, witness: w }
                    })
                    .collect()
            }
            Mechanism::Delayed { .. } | Mechanism::Hysteretic { .. } => {
                vec![Check { name: "mu > 0".into(), ok: mu > 0.0, witness: mu }]
            }
            Mechanism::Filippov { .. } | Mechanism::SqrtContinuous { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonomialDoc {
    #[serde(default)]
    i: u32,
    #[serde(default)]
    j: u32,
    #[serde(default)]
    k: u32,
    coeff: f64,
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default)]
    mu_powers: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceDoc {
    f: Vec<MonomialDoc>,
    g: Vec<MonomialDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    mechanism: Option<String>,
    #[serde(default)]
    zoo: Option<String>,
    #[serde(default)]
    pieces: Vec<PieceDoc>,
    #[serde(default)]
    reset: Option<Vec<MonomialDoc>>,
    #[serde(default)]
    impulse_radius: Option<Vec<MonomialDoc>>,
    #[serde(default)]
    impulse_angle: Option<Vec<MonomialDoc>>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

fn poly_from_doc(doc: &[MonomialDoc]) -> Poly {
    Poly::new(
        doc.iter()
            .map(|m| {
                let coeff = match (&m.mu_powers, m.mu) {
                    (Some(p), _) => std::iter::once(m.coeff).chain(p.iter().copied()).collect(),
                    (None, Some(l)) => vec![m.coeff, l],
                    (None, None) => vec![m.coeff],
                };
                Monomial { i: m.i, j: m.j, k: m.k, coeff }
            })
            .collect(),
    )
}

/// Parse a JSON model description.
///
/// Either `{"zoo": name, "params": {...}}` or a polynomial document with a
/// `mechanism` tag, `pieces` (each with `f` and `g` monomial lists) and,
/// where needed, `reset`, `impulse_radius` and `impulse_angle` polynomials
/// in `y`. The entry `params.mu` sets the default parameter value.
pub fn load_model(document: &str) -> Result<PWSystem, ModelError> {
    let doc: ModelDoc = serde_json::from_str(document).map_err(|e| ModelError::Schema(e.to_string()))?;
    if let Some(z) = &doc.zoo {
        let mut sys = crate::zoo::zoo_build(z, &doc.params)?;
        if let Some(n) = doc.name {
            sys.name = n;
        }
        return Ok(sys);
    }
    let tag = doc.mechanism.as_deref().ok_or_else(|| ModelError::Schema("missing field `mechanism`".into()))?;
    let pieces: Vec<SmoothPiece> =
        doc.pieces.iter().map(|p| SmoothPiece::poly(poly_from_doc(&p.f), poly_from_doc(&p.g))).collect();
    let need = |n: usize| -> Result<(), ModelError> {
        if pieces.len() == n {
            Ok(())
        } else {
            Err(ModelError::Schema(format!("mechanism `{tag}` needs {n} pieces, found {}", pieces.len())))
        }
    };
    let map = |m: &Option<Vec<MonomialDoc>>, what: &str| -> Result<ScalarMap, ModelError> {
        m.as_ref()
            .map(|d| ScalarMap::from_poly(poly_from_doc(d)))
            .ok_or_else(|| ModelError::Schema(format!("mechanism `{tag}` needs `{what}`")))
    };
    let mechanism = match tag {
        "filippov" | "hysteretic" | "delayed" => {
            need(2)?;
            let (left, right) = (pieces[0].clone(), pieces[1].clone());
            match tag {
                "filippov" => Mechanism::Filippov { left, right },
                "hysteretic" => Mechanism::Hysteretic { left, right },
                _ => Mechanism::Delayed { left, right },
            }
        }
        "impact" => {
            need(1)?;
            Mechanism::Impact { field: pieces[0].clone(), reset: map(&doc.reset, "reset")? }
        }
        "impulse" => {
            need(1)?;
            Mechanism::Impulse {
                field: pieces[0].clone(),
                radius: map(&doc.impulse_radius, "impulse_radius")?,
                angle: map(&doc.impulse_angle, "impulse_angle")?,
            }
        }
        "four_quadrant" => {
            need(4)?;
            Mechanism::FourQuadrant {
                pieces: [pieces[0].clone(), pieces[1].clone(), pieces[2].clone(), pieces[3].clone()],
            }
        }
        "sqrt_continuous" => {
            need(1)?;
            Mechanism::SqrtContinuous { field: pieces[0].clone() }
        }
        other => return Err(ModelError::UnknownMechanism(other.to_string())),
    };
    let mut sys = PWSystem::new(doc.name.unwrap_or_else(|| "model".into()), mechanism);
    sys.mu = doc.params.get("mu").copied().unwrap_or(0.0);
    sys.params = doc.params;
    Ok(sys)
}
