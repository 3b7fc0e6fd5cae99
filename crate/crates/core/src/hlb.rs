//! Classification of Hopf and Hopf-like bifurcations from local Taylor data.
//!
//! Each theorem's hypotheses are evaluated as a checklist of numeric tests on
//! Taylor tables at the candidate parameter value. Systems are first brought
//! to the canonical orientation by point reflection (swapping sides),
//! reflection `y -> -y`, parameter flip and time reversal, whichever the
//! mechanism permits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::geometry::find_pseudo_equilibria;
use crate::numerics::brent_plain;
use crate::pwsmodel::{Check, Eigen, Mechanism, ModelError, PWSystem, ScalarMap, SmoothPiece, TaylorTable};
use crate::returnmaps::{
    aux_rho, aux_rho_node, aux_shat, chi_focus, chi_fold, chi_fold_left, sigma_fold, sigma_fold_left,
};

/// Bifurcation kind: the smooth Hopf bifurcation or HLB `1..=20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HlbKind {
    Hopf,
    Hlb(u8),
}

impl fmt::Display for HlbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HlbKind::Hopf => write!(f, "Hopf"),
            HlbKind::Hlb(n) => write!(f, "HLB{n}"),
        }
    }
}

impl Serialize for HlbKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for HlbKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("hopf") {
            return Ok(HlbKind::Hopf);
        }
        let digits = t.trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == ' ' || c == '_');
        match digits.parse::<u8>() {
            Ok(n) if (1..=20).contains(&n) && digits.len() < t.len() => Ok(HlbKind::Hlb(n)),
            _ => Err(format!("unknown bifurcation kind `{s}`")),
        }
    }
}

/// Classifier failures.
#[derive(Debug, Error)]
pub enum HlbError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("hypotheses of several theorems hold: {0}")]
    Ambiguous(String),
    #[error("Hopf coefficients undefined: {0}")]
    Hopf(String),
}

/// Stability of the emitted cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Supercritical,
    Subcritical,
    Degenerate,
}

/// Non-negative rational `num/den`, serialized as `"num/den"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub const fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Amplitude and period exponents of one kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Exponents {
    /// Amplitude grows like `|mu|^a`.
    pub a: Rational,
    /// Period deviation grows like `|mu|^b` (`b = 0`: finite nonzero limit).
    pub b: Rational,
}

/// Exponent row for `kind`.
pub fn scaling_row(kind: HlbKind) -> Exponents {
    let r = Rational::new;
    let (a, b) = match kind {
        HlbKind::Hopf => (r(1, 2), r(0, 1)),
        HlbKind::Hlb(7 | 10 | 18) => (r(1, 2), r(1, 2)),
        HlbKind::Hlb(15 | 16 | 19) => (r(1, 1), r(1, 1)),
        HlbKind::Hlb(17) => (r(1, 3), r(1, 3)),
        HlbKind::Hlb(_) => (r(1, 1), r(0, 1)),
    };
    Exponents { a, b }
}

/// How a period prediction was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodMethod {
    ClosedForm,
    Implicit,
    PowerLaw,
}

/// Leading-order period `limit + coeff |mu|^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodPrediction {
    pub limit: f64,
    pub coeff: f64,
    pub exponent: f64,
    /// Time spent in each piece (or each leg) at the limit, when defined.
    pub parts: Vec<f64>,
    pub method: PeriodMethod,
    pub converged: bool,
}

impl PeriodPrediction {
    fn limit(limit: f64, parts: Vec<f64>, method: PeriodMethod) -> Self {
        Self { limit, coeff: 0.0, exponent: 0.0, parts, method, converged: true }
    }

    fn power(coeff: f64, exponent: f64) -> Self {
        Self { limit: 0.0, coeff, exponent, parts: vec![], method: PeriodMethod::PowerLaw, converged: true }
    }

    /// Predicted period at `mu`.
    pub fn at(&self, mu: f64) -> f64 {
        if self.coeff == 0.0 {
            self.limit
        } else {
            self.limit + self.coeff * mu.abs().powf(self.exponent)
        }
    }
}

/// Transforms applied before the coefficient formulas, in application order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Normalization {
    /// Point reflection `(x, y) -> (-x, -y)`, which swaps the pieces.
    pub swap_sides: bool,
    pub reflect_y: bool,
    pub flip_mu: bool,
    pub reverse_time: bool,
}

/// Classification result.
#[derive(Debug, Clone, Serialize)]
pub struct HLBReport {
    pub schema: &'static str,
    pub system: String,
    pub mu0: f64,
    /// `None` when no theorem's hypotheses hold.
    pub kind: Option<HlbKind>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub criticality: Criticality,
    pub exponents: Option<Exponents>,
    pub predicted_period: Option<PeriodPrediction>,
    /// Sign of `mu - mu0` on which the cycle exists, in the original parameter.
    pub cycle_side: Option<f64>,
    pub normalization: Normalization,
    /// Auxiliary quantities (eigenvalues, sub-periods, ...) in canonical coordinates.
    pub quantities: BTreeMap<String, f64>,
    pub checklist: Vec<Check>,
    pub advisories: Vec<String>,
}

impl HLBReport {
    /// Label of the kind, `"unclassified"` when none.
    pub fn kind_label(&self) -> String {
        self.kind.map_or_else(|| "unclassified".into(), |k| k.to_string())
    }
}

/// Predicted period of a classified report at `mu` (measured from `mu0`).
pub fn predicted_period(report: &HLBReport, mu: f64) -> Option<f64> {
    let p = report.predicted_period.as_ref()?;
    if !p.converged {
        return None;
    }
    Some(p.at(mu - report.mu0))
}

const H_MU: f64 = 1e-4;
const EQ_REL: f64 = 1e-9;
const ALPHA_REL: f64 = 1e-8;

fn negate(t: &TaylorTable) -> TaylorTable {
    let mut t = *t;
    for row in t.coeff.iter_mut() {
        for e in row.iter_mut() {
            e[0] = -e[0];
            e[1] = -e[1];
        }
    }
    for row in t.coeff_mu.iter_mut() {
        for e in row.iter_mut() {
            e[0] = -e[0];
            e[1] = -e[1];
        }
    }
    t
}

/// Real Jordan form `[[0, -omega], [omega, 0]]` of a trace-free Jacobian
/// via `u -> M u`, `M = [e1, J e1 / omega]`.
fn to_jordan(t: &TaylorTable) -> Result<TaylorTable, HlbError> {
    let j = t.jacobian();
    let tol = EQ_REL * t.scale();
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det > tol) {
        return Err(HlbError::Hopf(format!("Jacobian determinant {det} is not positive, so omega = 0")));
    }
    if (j[0][0] + j[1][1]).abs() > tol {
        return Err(HlbError::Hopf(format!("Jacobian trace {} is nonzero", j[0][0] + j[1][1])));
    }
    if j[0][0].abs() <= tol && j[1][1].abs() <= tol && (j[0][1] + j[1][0]).abs() <= tol {
        return Ok(*t);
    }
    let w = det.sqrt();
    let m = [[1.0, j[0][0] / w], [0.0, j[1][0] / w]];
    Ok(linear_change(t, m))
}

/// Table of `M^{-1} F(M u)`.
fn linear_change(t: &TaylorTable, m: [[f64; 2]; 2]) -> TaylorTable {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    let push = |v: [f64; 2]| [inv[0][0] * v[0] + inv[0][1] * v[1], inv[1][0] * v[0] + inv[1][1] * v[1]];
    let derive = |i: usize, j: usize, src: &dyn Fn(usize, usize) -> [f64; 2]| {
        // each new derivative direction is a column of M
        let k = i + j;
        let mut acc = [0.0; 2];
        for mask in 0..(1usize << k) {
            let mut w = 1.0;
            let mut nx = 0;
            for pos in 0..k {
                let col = if pos < i { 0 } else { 1 };
                let row = (mask >> pos) & 1;
                w *= m[row][col];
                if row == 0 {
                    nx += 1;
                }
            }
            if w != 0.0 {
                let v = src(nx, k - nx);
                acc[0] += w * v[0];
                acc[1] += w * v[1];
            }
        }
        push(acc)
    };
    let mut out = TaylorTable::zero();
    let n = t.coeff.len() - 1;
    for i in 0..=n {
        for j in 0..=n - i {
            out.coeff[i][j] = derive(i, j, &|a, b| [t.d(a, b, 0), t.d(a, b, 1)]);
        }
    }
    for i in 0..2 {
        for j in 0..2 - i {
            out.coeff_mu[i][j] = derive(i, j, &|a, b| [t.dmu(a, b, 0), t.dmu(a, b, 1)]);
        }
    }
    out
}

/// Hopf coefficients `(alpha, beta)` of a smooth field with a trace-free
/// Jacobian at the origin. The table is brought to real Jordan form first.
pub fn hopf_coeffs(t: &TaylorTable) -> Result<(f64, f64), HlbError> {
    let j = to_jordan(t)?;
    let w = j.g(1, 0);
    let (f, g) = (|a, b| j.f(a, b), |a, b| j.g(a, b));
    let alpha = f(3, 0) + g(2, 1) + f(1, 2) + g(0, 3)
        + (f(1, 1) * (f(2, 0) + f(0, 2)) - f(2, 0) * g(2, 0) - g(1, 1) * (g(2, 0) + g(0, 2)) + f(0, 2) * g(0, 2)) / w;
    let beta = j.dmu(1, 0, 0) + j.dmu(0, 1, 1);
    Ok((alpha, beta))
}

fn check(name: impl Into<String>, ok: bool, witness: f64) -> Check {
    Check { name: name.into(), ok, witness }
}

/// One attempted branch in one normalization.
#[derive(Debug, Clone)]
struct Attempt {
    kind: HlbKind,
    checks: Vec<Check>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    /// Cycle stability in canonical time for kinds without `alpha`.
    stable: Option<bool>,
    /// Sign of canonical `mu` where the cycle exists.
    side: Option<f64>,
    period: Option<PeriodPrediction>,
    quantities: BTreeMap<String, f64>,
    scale: f64,
}

impl Attempt {
    fn new(kind: HlbKind, scale: f64) -> Self {
        Self {
            kind,
            checks: vec![],
            alpha: None,
            beta: None,
            gamma: None,
            stable: None,
            side: None,
            period: None,
            quantities: BTreeMap::new(),
            scale,
        }
    }

    fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    fn tol(&self) -> f64 {
        EQ_REL * self.scale
    }

    fn zero(&mut self, name: &str, v: f64) -> bool {
        let ok = v.abs() <= self.tol();
        self.checks.push(check(name, ok, v));
        ok
    }

    fn pos(&mut self, name: &str, v: f64) -> bool {
        let ok = v > self.tol();
        self.checks.push(check(name, ok, v));
        ok
    }

    fn neg(&mut self, name: &str, v: f64) -> bool {
        let ok = v < -self.tol();
        self.checks.push(check(name, ok, v));
        ok
    }

    fn flag(&mut self, name: &str, ok: bool, v: f64) -> bool {
        self.checks.push(check(name, ok, v));
        ok
    }

    fn q(&mut self, name: &str, v: f64) {
        self.quantities.insert(name.into(), v);
    }

    fn alpha_side(&mut self, alpha: f64) {
        self.alpha = Some(alpha);
        self.side = Some(if alpha < 0.0 { 1.0 } else { -1.0 });
    }
}

#[derive(Debug, Clone, Copy)]
enum Layout {
    Single,
    Pair,
    Quad,
}

fn apply(ts: &[TaylorTable], layout: Layout, n: Normalization) -> Vec<TaylorTable> {
    let mut v = ts.to_vec();
    if n.swap_sides {
        v = match layout {
            Layout::Single => v.iter().map(|t| t.rotate()).collect(),
            Layout::Pair => vec![v[1].rotate(), v[0].rotate()],
            Layout::Quad => vec![v[2].rotate(), v[3].rotate(), v[0].rotate(), v[1].rotate()],
        };
    }
    if n.reflect_y {
        v = match layout {
            Layout::Quad => vec![v[1].reflect_y(), v[0].reflect_y(), v[3].reflect_y(), v[2].reflect_y()],
            _ => v.iter().map(|t| t.reflect_y()).collect(),
        };
    }
    if n.flip_mu {
        v = v.iter().map(|t| t.flip_mu()).collect();
    }
    if n.reverse_time {
        v = v.iter().map(negate).collect();
    }
    v
}

/// Raw tables at `mu0` and `mu0 +- H_MU`.
struct Sampled {
    layout: Layout,
    raw0: Vec<TaylorTable>,
    rawp: Vec<TaylorTable>,
    rawm: Vec<TaylorTable>,
}

impl Sampled {
    fn new(pieces: &[&SmoothPiece], layout: Layout, mu0: f64) -> Result<Self, ModelError> {
        let at = |m: f64| pieces.iter().map(|p| p.taylor(m)).collect::<Result<Vec<_>, _>>();
        Ok(Self { layout, raw0: at(mu0)?, rawp: at(mu0 + H_MU)?, rawm: at(mu0 - H_MU)? })
    }

    fn frame(&self, n: Normalization) -> Frame {
        let (p, m) = if n.flip_mu { (&self.rawm, &self.rawp) } else { (&self.rawp, &self.rawm) };
        let t0 = apply(&self.raw0, self.layout, n);
        let scale = t0.iter().map(|t| t.scale()).fold(1.0, f64::max);
        Frame { t0, tp: apply(p, self.layout, n), tm: apply(m, self.layout, n), scale }
    }
}

/// Normalized tables at the candidate and at canonical `+- H_MU`.
struct Frame {
    t0: Vec<TaylorTable>,
    tp: Vec<TaylorTable>,
    tm: Vec<TaylorTable>,
    scale: f64,
}

impl Frame {
    /// Central difference of a quantity in canonical `mu`.
    fn deriv(&self, q: impl Fn(&[TaylorTable]) -> Option<f64>) -> Option<f64> {
        Some((q(&self.tp)? - q(&self.tm)?) / (2.0 * H_MU))
    }

    /// Largest `|F_k(0)|` over the three samples.
    fn drift(&self, k: usize) -> f64 {
        [&self.t0, &self.tp, &self.tm].iter().map(|v| v[k].f(0, 0).abs().max(v[k].g(0, 0).abs())).fold(0.0, f64::max)
    }

    fn f_drift(&self, k: usize) -> f64 {
        [&self.t0, &self.tp, &self.tm].iter().map(|v| v[k].f(0, 0).abs()).fold(0.0, f64::max)
    }
}

fn focus(t: &TaylorTable) -> Option<(f64, f64)> {
    match t.eigen() {
        Eigen::Complex { lambda, omega } => Some((lambda, omega)),
        _ => None,
    }
}

/// Witness `lambda` (NaN if not a focus) and whether the table is a focus.
fn focus_witness(t: &TaylorTable) -> (bool, f64) {
    match focus(t) {
        Some((l, _)) => (true, l),
        None => (false, f64::NAN),
    }
}

/// `f_mu g_y - g_mu f_y`: speed at which the equilibrium crosses `x = 0`.
fn beb_beta(t: &TaylorTable) -> f64 {
    t.dmu(0, 0, 0) * t.g(0, 1) - t.dmu(0, 0, 1) * t.f(0, 1)
}

fn ratio_sum(ts: &[TaylorTable]) -> Option<f64> {
    let (ll, wl) = focus(&ts[0])?;
    let (lr, wr) = focus(&ts[1])?;
    Some(ll / wl + lr / wr)
}

/// Numerator of `omega G(omega T; s nu) / (lambda^2 + omega^2)` and the
/// `sin` (or `sinh` for a node, `omega = i eta`) it is divided by.
fn side_parts(e: Eigen, t: f64, sign: f64) -> (f64, f64) {
    match e {
        Eigen::Complex { lambda, omega } => {
            let (s, nu) = (omega * t, sign * lambda / omega);
            (omega * (-nu * s).exp() * aux_rho(s, nu) / (lambda * lambda + omega * omega), s.sin())
        }
        Eigen::Real { lambda, eta } => {
            let (s, nu) = (eta * t, sign * lambda / eta);
            (eta * (-nu * s).exp() * aux_rho_node(s, nu) / (lambda * lambda - eta * eta), s.sinh())
        }
    }
}

fn time_range(e: Eigen) -> f64 {
    match e {
        Eigen::Complex { omega, .. } => 2.0 * PI / omega,
        Eigen::Real { lambda, eta } => 10.0 / (lambda.abs() - eta).abs().max(1e-6),
    }
}

/// Solve the two-equation period system of the boundary-equilibrium cases:
/// `cL wL(TL, -) + cR wR(TR, +) = rhs`, `cL wL(TL, +) + cR wR(TR, -) = -rhs`.
///
/// Both equations are multiplied by the two `sin` denominators so the
/// residual has no poles; roots sitting on a zero of a denominator are rejected.
fn implicit_beb_period(el: Eigen, er: Eigen, cl: f64, cr: f64, rhs: f64) -> PeriodPrediction {
    let resid = |tl: f64, tr: f64| -> Option<[f64; 2]> {
        let (lm, dl) = side_parts(el, tl, -1.0);
        let (lp, _) = side_parts(el, tl, 1.0);
        let (rp, dr) = side_parts(er, tr, 1.0);
        let (rm, _) = side_parts(er, tr, -1.0);
        let r = [cl * lm * dr + cr * rp * dl - rhs * dl * dr, cl * lp * dr + cr * rm * dl + rhs * dl * dr];
        // relative to the size of the terms, which grow exponentially for a node
        let size = (cl * lm * dr).abs() + (cr * rp * dl).abs() + (rhs * dl * dr).abs()
            + (cl * lp * dr).abs()
            + (cr * rm * dl).abs();
        let r = [r[0] / size, r[1] / size];
        (size > 0.0 && r[0].is_finite() && r[1].is_finite()).then_some(r)
    };
    let (hl, hr) = (time_range(el), time_range(er));
    let n = 240;
    let mut seeds: Vec<(f64, f64, f64)> = vec![];
    for i in 1..n {
        for k in 1..n {
            let (tl, tr) = (hl * i as f64 / n as f64, hr * k as f64 / n as f64);
            if tl < 0.05 * hl || tr < 0.05 * hr {
                continue;
            }
            if let Some(r) = resid(tl, tr) {
                seeds.push((r[0].abs() + r[1].abs(), tl, tr));
            }
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inside = |tl: f64, tr: f64| tl > 1e-2 * hl && tl < hl && tr > 1e-2 * hr && tr < hr;
    for &(_, tl0, tr0) in seeds.iter().take(40) {
        if let Some((tl, tr)) = damped_newton(&resid, tl0, tr0, &inside) {
            let (dl, dr) = (side_parts(el, tl, 1.0).1, side_parts(er, tr, 1.0).1);
            if dl.abs() > 1e-6 && dr.abs() > 1e-6 {
                return PeriodPrediction::limit(tl + tr, vec![tl, tr], PeriodMethod::Implicit);
            }
        }
    }
    PeriodPrediction { limit: f64::NAN, coeff: 0.0, exponent: 0.0, parts: vec![], method: PeriodMethod::Implicit, converged: false }
}

/// Damped Newton with a finite-difference Jacobian; residual target `1e-10`.
fn damped_newton(
    resid: &dyn Fn(f64, f64) -> Option<[f64; 2]>,
    mut a: f64,
    mut b: f64,
    inside: &dyn Fn(f64, f64) -> bool,
) -> Option<(f64, f64)> {
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut r = resid(a, b)?;
    for _ in 0..100 {
        if norm(r) < 1e-10 {
            return Some((a, b));
        }
        let (ha, hb) = (1e-7 * a.abs().max(1e-3), 1e-7 * b.abs().max(1e-3));
        let ra = resid(a + ha, b)?;
        let rb = resid(a, b + hb)?;
        let j = [[(ra[0] - r[0]) / ha, (rb[0] - r[0]) / hb], [(ra[1] - r[1]) / ha, (rb[1] - r[1]) / hb]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let da = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let db = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let (na, nb) = (a + step * da, b + step * db);
            if inside(na, nb) {
                if let Some(nr) = resid(na, nb) {
                    if norm(nr) < norm(r) {
                        a = na;
                        b = nb;
                        r = nr;
                        moved = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    (norm(r) < 1e-10).then_some((a, b))
}

/// Sliding-orbit return time from the left focus plus sliding phase.
fn sliding_period(lambda: f64, omega: f64, a0r: f64, gamma: f64) -> Option<(f64, f64)> {
    let nu = lambda / omega;
    let s = aux_shat(nu).ok()?;
    let tl = s / omega;
    let ts = (a0r / gamma) * (1.0 - gamma / (a0r * omega) * (nu * s).exp() * s.sin()).ln();
    (tl.is_finite() && ts.is_finite()).then_some((tl, ts))
}

// ---- two-piece Filippov branches ----

fn br_hopf(fr: &Frame) -> Attempt {
    let t = &fr.t0[0];
    let mut a = Attempt::new(HlbKind::Hopf, fr.scale);
    a.zero("equilibrium fixed at origin for all mu", fr.drift(0));
    a.zero("trace of Jacobian", t.f(1, 0) + t.g(0, 1));
    let j = t.jacobian();
    a.pos("det of Jacobian", j[0][0] * j[1][1] - j[0][1] * j[1][0]);
    if !a.ok() {
        return a;
    }
    let Ok((alpha, beta)) = hopf_coeffs(t) else {
        a.flag("Jordan form", false, f64::NAN);
        return a;
    };
    a.pos("beta > 0", beta);
    a.beta = Some(beta);
    a.alpha_side(alpha);
    let w = t.eigen();
    if let Eigen::Complex { omega, .. } = w {
        a.q("omega", omega);
        a.period = Some(PeriodPrediction::limit(2.0 * PI / omega, vec![], PeriodMethod::ClosedForm));
    }
    a
}

fn br_hlb1(fr: &Frame, node: bool) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let kind = HlbKind::Hlb(if node { 2 } else { 1 });
    let mut a = Attempt::new(kind, fr.scale);
    a.zero("F_L(0) = 0", tl.f(0, 0).abs().max(tl.g(0, 0).abs()));
    a.zero("F_R(0) = 0", tr.f(0, 0).abs().max(tr.g(0, 0).abs()));
    let (fl, ll) = focus_witness(tl);
    a.flag("left unstable focus", fl && ll > a.tol(), ll);
    let er = tr.eigen();
    match (node, er) {
        (false, Eigen::Complex { lambda, .. }) => {
            a.neg("right stable focus", lambda);
        }
        (true, Eigen::Real { lambda, eta }) => {
            a.flag("right stable node 0 < eta < -lambda", eta > a.tol() && lambda + eta < -a.tol(), lambda + eta);
        }
        _ => {
            a.flag(if node { "right stable node" } else { "right stable focus" }, false, f64::NAN);
        }
    }
    a.pos("clockwise: f_Ly > 0", tl.f(0, 1));
    let beta = beb_beta(tl);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    a.beta = Some(beta);
    let el = tl.eigen();
    a.q("lambda_L", ll);
    if let Some((_, w)) = focus(tl) {
        a.q("omega_L", w);
    }
    a.q("lambda_R", er.lambda());
    if node {
        a.stable = Some(true);
        a.side = Some(1.0);
    } else {
        a.alpha_side(ratio_sum(&fr.t0).unwrap_or(f64::NAN));
    }
    a.period = Some(implicit_beb_period(el, er, 1.0, 1.0, 0.0));
    a
}

fn br_hlb3(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(3), fr.scale);
    a.zero("F_L(0) = 0", tl.f(0, 0).abs().max(tl.g(0, 0).abs()));
    let (fl, ll) = focus_witness(tl);
    a.flag("left unstable focus", fl && ll > a.tol(), ll);
    a.pos("clockwise: f_Ly > 0", tl.f(0, 1));
    let beta = beb_beta(tl);
    a.pos("beta > 0", beta);
    a.neg("a0R < 0", tr.a(0));
    let gamma = tl.f(0, 1) * tr.g(0, 0) - tl.g(0, 1) * tr.f(0, 0);
    a.neg("gamma < 0", gamma);
    if !a.ok() {
        return a;
    }
    a.beta = Some(beta);
    a.gamma = Some(gamma);
    a.stable = Some(true);
    a.side = Some(1.0);
    let (l, w) = focus(tl).unwrap_or((f64::NAN, f64::NAN));
    a.q("lambda_L", l);
    a.q("omega_L", w);
    if let Some((t1, t2)) = sliding_period(l, w, tr.a(0), gamma) {
        a.q("T_L", t1);
        a.q("T_slide", t2);
        a.period = Some(PeriodPrediction::limit(t1 + t2, vec![t1, t2], PeriodMethod::ClosedForm));
    }
    a
}

fn br_hlb4(fr: &Frame, cont: bool) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(4), fr.scale);
    a.flag("discontinuous on x = 0", !cont, 0.0);
    a.zero("F_L(0) = 0", tl.f(0, 0).abs().max(tl.g(0, 0).abs()));
    a.zero("F_R(0) = 0", tr.f(0, 0).abs().max(tr.g(0, 0).abs()));
    let (fl, ll) = focus_witness(tl);
    a.flag("left unstable focus", fl && ll > a.tol(), ll);
    let (frr, lr) = focus_witness(tr);
    a.flag("right stable focus", frr && lr < -a.tol(), lr);
    a.pos("a2L a2R > 0", tl.a(2) * tr.a(2));
    a.pos("clockwise: f_Ly > 0", tl.f(0, 1));
    let (bl, br) = (beb_beta(tl), beb_beta(tr));
    a.pos("beta_L > 0", bl);
    a.pos("beta_R > 0", br);
    let gamma = tl.f(0, 1) * tr.dmu(0, 0, 0) - tl.dmu(0, 0, 0) * tr.f(0, 1);
    a.flag("a2L gamma >= 0", tl.a(2) * gamma >= -a.tol(), tl.a(2) * gamma);
    if !a.ok() {
        return a;
    }
    a.beta = Some(bl);
    a.gamma = Some(gamma);
    a.q("beta_R", br);
    a.q("lambda_L", ll);
    a.q("lambda_R", lr);
    a.alpha_side(ratio_sum(&fr.t0).unwrap_or(f64::NAN));
    a.period = Some(implicit_beb_period(
        tl.eigen(),
        tr.eigen(),
        bl / tl.a(2),
        br / tr.a(2),
        gamma / (tl.a(2) * tr.a(2)),
    ));
    a
}

fn br_hlb5(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(5), fr.scale);
    a.zero("F_L(0) = 0", tl.f(0, 0).abs().max(tl.g(0, 0).abs()));
    a.zero("F_R(0) = 0", tr.f(0, 0).abs().max(tr.g(0, 0).abs()));
    a.zero("left focus stays on x = 0", beb_beta(tl));
    a.zero("right focus stays on x = 0", beb_beta(tr));
    let (fl, ll) = focus_witness(tl);
    a.flag("left unstable focus", fl && ll > a.tol(), ll);
    let (frr, lr) = focus_witness(tr);
    a.flag("right stable focus", frr && lr < -a.tol(), lr);
    a.pos("f_Ly > 0", tl.f(0, 1));
    a.pos("f_Ry > 0", tr.f(0, 1));
    let xi = |t: &TaylorTable| -t.dmu(0, 0, 0) / t.f(0, 1);
    let beta = xi(tl) - xi(tr);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    a.beta = Some(beta);
    a.gamma = Some(tl.f(0, 1) * tr.g(0, 1) - tr.f(0, 1) * tl.g(0, 1));
    a.alpha_side(ratio_sum(&fr.t0).unwrap_or(f64::NAN));
    let (wl, wr) = (focus(tl).map_or(f64::NAN, |f| f.1), focus(tr).map_or(f64::NAN, |f| f.1));
    a.period = Some(PeriodPrediction::limit(PI / wl + PI / wr, vec![PI / wl, PI / wr], PeriodMethod::ClosedForm));
    a
}

fn br_hlb6(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(6), fr.scale);
    a.zero("left focus fixed at origin for all mu", fr.drift(0));
    let (fl, ll) = focus_witness(tl);
    a.flag("left focus", fl, ll);
    a.pos("f_Ly > 0", tl.f(0, 1));
    a.pos("f_Ry > 0", tr.f(0, 1));
    a.zero("f_R(0) = 0", tr.f(0, 0));
    a.neg("g_R(0) < 0", tr.g(0, 0));
    let beta = tr.dmu(0, 0, 0);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    a.beta = Some(beta);
    a.alpha_side(ll);
    let w = focus(tl).map_or(f64::NAN, |f| f.1);
    a.period = Some(PeriodPrediction::limit(PI / w, vec![PI / w], PeriodMethod::ClosedForm));
    a
}

fn br_hlb7(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(7), fr.scale);
    a.zero("f_L(0) = 0", tl.f(0, 0));
    a.zero("f_R(0) = 0", tr.f(0, 0));
    a.pos("f_Ly > 0", tl.f(0, 1));
    a.pos("f_Ry > 0", tr.f(0, 1));
    a.pos("g_L(0) > 0", tl.g(0, 0));
    a.neg("g_R(0) < 0", tr.g(0, 0));
    let beta = tr.dmu(0, 0, 0) / tr.f(0, 1) - tl.dmu(0, 0, 0) / tl.f(0, 1);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    let (Ok(sl), Ok(sr)) = (sigma_fold_left(tl), sigma_fold(tr)) else {
        a.flag("fold coefficients defined", false, f64::NAN);
        return a;
    };
    a.beta = Some(beta);
    a.q("sigma_L", sl);
    a.q("sigma_R", sr);
    let alpha = sl - sr;
    a.alpha_side(alpha);
    let k = (2.0 / tl.g(0, 0) - 2.0 / tr.g(0, 0)) * (3.0 * beta / alpha.abs()).sqrt();
    a.period = Some(PeriodPrediction::power(k, 0.5));
    a
}

fn br_hlb8(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(8), fr.scale);
    a.zero("left focus fixed at origin for all mu", fr.drift(0));
    a.zero("right focus fixed at origin for all mu", fr.drift(1));
    let (fl, ll) = focus_witness(tl);
    a.flag("left unstable focus", fl && ll > a.tol(), ll);
    let (frr, lr) = focus_witness(tr);
    a.flag("right stable focus", frr && lr < -a.tol(), lr);
    a.pos("f_Ly f_Ry > 0", tl.f(0, 1) * tr.f(0, 1));
    a.pos("clockwise: f_Ly > 0", tl.f(0, 1));
    if !a.ok() {
        return a;
    }
    let lam = ratio_sum(&fr.t0).unwrap_or(f64::NAN);
    a.zero("Lambda(0) = 0", lam);
    let beta = fr.deriv(ratio_sum).unwrap_or(f64::NAN);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    let (Ok(cl), Ok(cr)) = (chi_focus(tl), chi_focus(tr)) else {
        a.flag("focus coefficients defined", false, f64::NAN);
        return a;
    };
    a.beta = Some(beta);
    a.q("chi_L", cl);
    a.q("chi_R", cr);
    a.alpha_side(cl - cr);
    let (wl, wr) = (focus(tl).map_or(f64::NAN, |f| f.1), focus(tr).map_or(f64::NAN, |f| f.1));
    a.period = Some(PeriodPrediction::limit(PI / wl + PI / wr, vec![PI / wl, PI / wr], PeriodMethod::ClosedForm));
    a
}

fn br_hlb9(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(9), fr.scale);
    a.zero("left focus fixed at origin for all mu", fr.drift(0));
    a.zero("f_R(0) = 0 for all mu", fr.f_drift(1));
    let (fl, ll) = focus_witness(tl);
    a.flag("left focus", fl, ll);
    a.zero("lambda_L(0) = 0", ll);
    a.pos("f_Ly f_Ry > 0", tl.f(0, 1) * tr.f(0, 1));
    let gamma = tr.f(0, 1) * tr.g(0, 0);
    a.neg("gamma < 0", gamma);
    let beta = fr.deriv(|ts| focus(&ts[0]).map(|f| f.0)).unwrap_or(f64::NAN);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    let (Ok(cl), Ok(sr)) = (chi_focus(tl), sigma_fold(tr)) else {
        a.flag("return-map coefficients defined", false, f64::NAN);
        return a;
    };
    a.beta = Some(beta);
    a.gamma = Some(gamma);
    a.q("chi_L", cl);
    a.q("sigma_R", sr);
    a.alpha_side(cl - sr / 3.0);
    let w = focus(tl).map_or(f64::NAN, |f| f.1);
    a.period = Some(PeriodPrediction::limit(PI / w, vec![PI / w], PeriodMethod::ClosedForm));
    a
}

fn fold_lambda(ts: &[TaylorTable]) -> Option<f64> {
    Some(sigma_fold_left(&ts[0]).ok()? - sigma_fold(&ts[1]).ok()?)
}

fn br_hlb10(fr: &Frame) -> Attempt {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut a = Attempt::new(HlbKind::Hlb(10), fr.scale);
    a.zero("f_L(0) = 0 for all mu", fr.f_drift(0));
    a.zero("f_R(0) = 0 for all mu", fr.f_drift(1));
    a.pos("f_Ly f_Ry > 0", tl.f(0, 1) * tr.f(0, 1));
    a.pos("gamma_L = f_Ly g_L > 0", tl.f(0, 1) * tl.g(0, 0));
    a.neg("gamma_R = f_Ry g_R < 0", tr.f(0, 1) * tr.g(0, 0));
    if !a.ok() {
        return a;
    }
    let Some(lam) = fold_lambda(&fr.t0) else {
        a.flag("fold coefficients defined", false, f64::NAN);
        return a;
    };
    a.zero("Lambda(0) = 0", lam);
    let beta = fr.deriv(fold_lambda).unwrap_or(f64::NAN);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    let (Ok(cl), Ok(cr)) = (chi_fold_left(tl), chi_fold(tr)) else {
        a.flag("fold coefficients defined", false, f64::NAN);
        return a;
    };
    a.beta = Some(beta);
    a.q("chi_L", cl);
    a.q("chi_R", cr);
    let alpha = cl - cr;
    a.alpha_side(alpha);
    let k = (2.0 / tl.g(0, 0) - 2.0 / tr.g(0, 0)) * (5.0 * beta / alpha.abs()).sqrt();
    a.period = Some(PeriodPrediction::power(k, 0.5));
    a
}

// ---- hybrid branches ----

fn br_impact(fr: &Frame, reset: &ScalarMap, mu: f64, wp: &[Check]) -> Attempt {
    let t = &fr.t0[0];
    let mut a = Attempt::new(HlbKind::Hlb(11), fr.scale);
    for c in wp {
        a.checks.push(c.clone());
    }
    a.zero("F(0) = 0", t.f(0, 0).abs().max(t.g(0, 0).abs()));
    let j = t.jacobian();
    a.pos("det DF > 0", j[0][0] * j[1][1] - j[0][1] * j[1][0]);
    let beta = -t.dmu(0, 0, 1) * t.f(0, 1);
    a.pos("beta > 0", beta);
    let gamma = -reset.dy(0.0, mu);
    a.pos("gamma > 0", gamma);
    let lambda = 0.5 * (j[0][0] + j[1][1]);
    a.neg("lambda ln(gamma) < 0", lambda * gamma.ln());
    if !a.ok() {
        return a;
    }
    a.beta = Some(beta);
    a.gamma = Some(gamma);
    a.q("lambda", lambda);
    match t.eigen() {
        Eigen::Complex { lambda, omega } => {
            let alpha = gamma.ln() + lambda * PI / omega;
            a.q("omega", omega);
            let admissible = lambda * alpha < 0.0;
            a.kind = HlbKind::Hlb(if admissible { 11 } else { 12 });
            a.alpha = Some(alpha);
            a.side = Some(if admissible { 1.0 } else { -1.0 });
            let (lo, hi) = if admissible { (PI / omega, 2.0 * PI / omega) } else { (0.0, PI / omega) };
            let nu = lambda / omega;
            let h = |tt: f64| gamma * (2.0 * lambda * tt).exp() * aux_rho(omega * tt, -nu) - aux_rho(omega * tt, nu);
            a.period = period_root(h, lo, hi);
        }
        Eigen::Real { lambda, eta } => {
            a.kind = HlbKind::Hlb(13);
            a.flag("node 0 < eta < |lambda|", eta > a.tol() && eta < lambda.abs(), eta);
            a.q("eta", eta);
            a.stable = Some(lambda < 0.0);
            a.side = Some(-1.0);
            let nu = lambda / eta;
            let h = |tt: f64| gamma * (2.0 * lambda * tt).exp() * aux_rho_node(eta * tt, -nu) - aux_rho_node(eta * tt, nu);
            a.period = period_root(h, 0.0, 40.0 / lambda.abs());
        }
    }
    a
}

/// First sign change of `h` on a grid over `(lo, hi)`, refined by Brent.
fn period_root(h: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<PeriodPrediction> {
    let n = 2000;
    let xs: Vec<f64> = (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    for w in xs.windows(2) {
        let (ha, hb) = (h(w[0]), h(w[1]));
        if ha.is_finite() && hb.is_finite() && ha * hb <= 0.0 {
            let t = brent_plain(&h, w[0], w[1], 1e-13).ok()?;
            return Some(PeriodPrediction::limit(t, vec![t], PeriodMethod::Implicit));
        }
    }
    None
}

struct ImpulseMaps<'a> {
    field: &'a SmoothPiece,
    radius: &'a ScalarMap,
    angle: &'a ScalarMap,
}

impl ImpulseMaps<'_> {
    fn lambda_at(&self, m: f64) -> Option<f64> {
        let t = self.field.taylor(m).ok()?;
        let (l, w) = focus(&t)?;
        Some(self.radius.dy(0.0, m).ln() + l / w * (self.angle.eval(0.0, m) + 1.5 * PI))
    }
}

/// The quadrature part of the impulsive coefficient.
pub fn impulsive_integral(t: &TaylorTable, phi: f64) -> f64 {
    let (l, w) = (t.f(1, 0), t.f(0, 1));
    let (a1, a2, a3, b1, b2, b3) = (t.a(3), t.a(4), t.a(5), t.b(3), t.b(4), t.b(5));
    let integrand = |th: f64| {
        let (s, c) = th.sin_cos();
        let ff = a1 * c.powi(3) + (a2 + b1) * c * c * s + (a3 + b2) * c * s * s + b3 * s.powi(3);
        let gg = b1 * c.powi(3) + (b2 - a1) * c * c * s + (b3 - a2) * c * s * s - a3 * s.powi(3);
        (-l * th / w).exp() * (ff + l / w * gg)
    };
    let q = quadrature::double_exponential::integrate(integrand, -1.5 * PI, phi, 1e-13);
    q.integral * (-1.5 * PI * l / w).exp() / w
}

fn br_impulse(maps: &ImpulseMaps, mu0: f64, flip: bool, scale: f64) -> Attempt {
    let mut a = Attempt::new(HlbKind::Hlb(14), scale);
    let s = if flip { -1.0 } else { 1.0 };
    let drift =
        [mu0, mu0 + H_MU, mu0 - H_MU].into_iter().map(|m| {
            let (f, g) = maps.field.eval(0.0, 0.0, m);
            f.abs().max(g.abs())
        });
    a.zero("F(0) = 0 for all mu", drift.fold(0.0, f64::max));
    let Ok(t) = maps.field.taylor(mu0) else {
        a.flag("Taylor table", false, f64::NAN);
        return a;
    };
    let j = t.jacobian();
    a.zero("f_x = g_y", j[0][0] - j[1][1]);
    a.zero("f_y = -g_x", j[0][1] + j[1][0]);
    a.pos("omega > 0", j[0][1]);
    let r0 = maps.radius.eval(0.0, mu0).abs().max(maps.radius.eval(0.0, mu0 + H_MU).abs());
    a.zero("R(0) = 0", r0);
    let phi = maps.angle.eval(0.0, mu0);
    a.flag("Theta(0) in (-3pi/2, pi/2)", phi > -1.5 * PI && phi < 0.5 * PI, phi);
    let gamma = maps.radius.dy(0.0, mu0);
    a.pos("gamma > 0", gamma);
    if !a.ok() {
        return a;
    }
    let lam0 = maps.lambda_at(mu0).unwrap_or(f64::NAN);
    a.zero("Lambda(0) = 0", lam0);
    let beta = match (maps.lambda_at(mu0 + H_MU), maps.lambda_at(mu0 - H_MU)) {
        (Some(p), Some(m)) => s * (p - m) / (2.0 * H_MU),
        _ => f64::NAN,
    };
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    let (l, w) = (j[0][0], j[0][1]);
    let rpp = maps.radius.dyy(0.0, mu0);
    let alpha = rpp / (2.0 * gamma) + l / w * maps.angle.dy(0.0, mu0) + impulsive_integral(&t, phi);
    a.beta = Some(beta);
    a.gamma = Some(gamma);
    a.q("phi", phi);
    a.q("lambda", l);
    a.q("omega", w);
    a.alpha_side(alpha);
    let tt = (phi + 1.5 * PI) / w;
    a.period = Some(PeriodPrediction::limit(tt, vec![tt], PeriodMethod::ClosedForm));
    a
}

fn br_hysteresis(fr: &Frame, delayed: bool) -> Vec<Attempt> {
    let (tl, tr) = (&fr.t0[0], &fr.t0[1]);
    let mut out = vec![];
    // pseudo-equilibrium at the origin
    let mut a = Attempt::new(HlbKind::Hlb(if delayed { 16 } else { 15 }), fr.scale);
    a.neg("a0R < 0", tr.a(0));
    a.pos("a0L > 0", tl.a(0));
    let cross = tl.f(0, 0) * tr.g(0, 0) - tr.f(0, 0) * tl.g(0, 0);
    a.zero("f_L g_R - f_R g_L = 0", cross);
    if a.ok() {
        let alpha = tl.f(0, 1) * tr.g(0, 0) + tl.f(0, 0) * tr.g(0, 1) - tr.f(0, 1) * tl.g(0, 0) - tr.f(0, 0) * tl.g(0, 1);
        a.alpha = Some(alpha);
        a.side = Some(1.0);
        let (l, r) = (tl.a(0), tr.a(0));
        let k = if delayed { 2.0 - l / r - r / l } else { 2.0 / l - 2.0 / r };
        a.period = Some(PeriodPrediction::power(k, 1.0));
    }
    out.push(a);
    // two folds
    let mut a = Attempt::new(HlbKind::Hlb(if delayed { 18 } else { 17 }), fr.scale);
    a.zero("f_L(0) = 0", tl.f(0, 0));
    a.zero("f_R(0) = 0", tr.f(0, 0));
    a.pos("a2L a2R > 0", tl.a(2) * tr.a(2));
    a.pos("gamma_L = a2L b0L > 0", tl.a(2) * tl.b(0));
    a.neg("gamma_R = a2R b0R < 0", tr.a(2) * tr.b(0));
    if a.ok() {
        match (sigma_fold_left(tl), sigma_fold(tr)) {
            (Ok(sl), Ok(sr)) => {
                let alpha = sl - sr;
                let kappa = tl.b(0) / tl.a(2) - tr.b(0) / tr.a(2);
                a.alpha = Some(alpha);
                a.q("sigma_L", sl);
                a.q("sigma_R", sr);
                a.q("kappa", kappa);
                if alpha < 0.0 {
                    a.side = Some(1.0);
                    let lead = (2.0 / tl.b(0) - 2.0 / tr.b(0)).abs();
                    a.period = Some(if delayed {
                        PeriodPrediction::power(lead * (3.0 * (tl.a(2) + tr.a(2)) * kappa / (2.0 * alpha.abs())).sqrt(), 0.5)
                    } else {
                        PeriodPrediction::power(lead * (3.0 * kappa / alpha.abs()).cbrt(), 1.0 / 3.0)
                    });
                }
            }
            _ => {
                a.flag("fold coefficients defined", false, f64::NAN);
            }
        }
    }
    out.push(a);
    out
}

fn quad_lambda(ts: &[TaylorTable]) -> Option<f64> {
    let m: Vec<f64> = ts.iter().map(|t| t.g(0, 0) / t.f(0, 0)).collect();
    let v = m[1] * m[3] / (m[0] * m[2]);
    v.is_finite().then_some(v)
}

fn br_hlb19(fr: &Frame) -> Attempt {
    let t = &fr.t0;
    let mut a = Attempt::new(HlbKind::Hlb(19), fr.scale);
    let signs = [(1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
    for (k, (sf, sg)) in signs.iter().enumerate() {
        let (f, g) = (t[k].f(0, 0), t[k].g(0, 0));
        a.flag(&format!("clockwise signs of F_{}", k + 1), f * sf > a.tol() && g * sg > a.tol(), f.min(g));
    }
    if !a.ok() {
        return a;
    }
    let lam = quad_lambda(t).unwrap_or(f64::NAN);
    a.zero("Lambda(0) = 1", lam - 1.0);
    let beta = fr.deriv(quad_lambda).unwrap_or(f64::NAN);
    a.pos("beta > 0", beta);
    if !a.ok() {
        return a;
    }
    let m: Vec<f64> = t.iter().map(|p| p.g(0, 0) / p.f(0, 0)).collect();
    let xi: Vec<f64> = t
        .iter()
        .map(|p| {
            let (f, g) = (p.f(0, 0), p.g(0, 0));
            (g / f * p.f(0, 1) - (p.f(1, 0) + p.g(0, 1)) + f / g * p.g(1, 0)) / f
        })
        .collect();
    let alpha = (xi[0] - xi[1]) / m[0] + (xi[2] - xi[3]) / m[3];
    a.beta = Some(beta);
    a.alpha_side(alpha);
    for k in 0..4 {
        a.q(&format!("xi_{}", k + 1), xi[k]);
        a.q(&format!("m_{}", k + 1), m[k]);
    }
    let bracket = -1.0 / t[0].g(0, 0) + 1.0 / (t[1].f(0, 0) * m[0]) - 1.0 / (t[2].f(0, 0) * m[3]) + 1.0 / t[3].g(0, 0);
    a.period = Some(PeriodPrediction::power(2.0 * beta / alpha.abs() * bracket, 1.0));
    a
}

fn br_hlb20(fr: &Frame, z: [f64; 2]) -> Attempt {
    let t = &fr.t0[0];
    let mut a = Attempt::new(HlbKind::Hlb(20), fr.scale);
    a.zero("F(0) = 0", t.f(0, 0).abs().max(t.g(0, 0).abs()));
    let (fl, l) = focus_witness(t);
    a.flag("left unstable focus", fl && l > a.tol(), l);
    let (a2, b2, a3, b3) = (t.a(2), t.b(2), t.dmu(0, 0, 0), t.dmu(0, 0, 1));
    let (a4, b4) = (z[0], z[1]);
    a.neg("a4 < 0", a4);
    let beta = a3 * b2 - a2 * b3;
    a.pos("beta > 0", beta);
    let gamma = a4 * b2 - a2 * b4;
    a.pos("gamma > 0", gamma);
    if !a.ok() {
        return a;
    }
    a.beta = Some(beta);
    a.gamma = Some(gamma);
    a.stable = Some(true);
    a.side = Some(1.0);
    let w = focus(t).map_or(f64::NAN, |f| f.1);
    let nu = l / w;
    if let Ok(s) = aux_shat(nu) {
        let kappa = a4.abs() / gamma;
        let tl = s / w;
        // the cycle meets x = 0 at e^{nu s} |sin s| / omega (times beta/a2) above the origin
        let tr = kappa * (1.0 + (nu * s).exp() * s.sin().abs() / (kappa * w)).ln();
        a.q("T_L", tl);
        a.q("T_R", tr);
        a.q("kappa", kappa);
        if tr.is_finite() {
            a.period = Some(PeriodPrediction::limit(tl + tr, vec![tl, tr], PeriodMethod::ClosedForm));
        }
    }
    a
}

// ---- driver ----

#[derive(Clone, Copy)]
struct Allow {
    swap: bool,
    refl: bool,
    flip: bool,
    rev: bool,
}

fn normalizations(al: Allow) -> Vec<Normalization> {
    let opts = |b: bool| if b { vec![false, true] } else { vec![false] };
    let mut out = vec![];
    for rev in opts(al.rev) {
        for swap in opts(al.swap) {
            for refl in opts(al.refl) {
                for flip in opts(al.flip) {
                    out.push(Normalization { swap_sides: swap, reflect_y: refl, flip_mu: flip, reverse_time: rev });
                }
            }
        }
    }
    out
}

fn continuous_on_boundary(l: &SmoothPiece, r: &SmoothPiece, mu0: f64, scale: f64) -> bool {
    let tol = EQ_REL * scale;
    for &m in &[mu0, mu0 + 1e-2, mu0 - 1e-2] {
        for k in -10..=10 {
            let y = k as f64 * 0.01;
            let (a, b) = (l.eval(0.0, y, m), r.eval(0.0, y, m));
            if (a.0 - b.0).abs() > tol || (a.1 - b.1).abs() > tol {
                return false;
            }
        }
    }
    true
}

fn tables_equal(a: &TaylorTable, b: &TaylorTable, tol: f64) -> bool {
    let n = a.coeff.len();
    for i in 0..n {
        for j in 0..n - i {
            for c in 0..2 {
                if (a.coeff[i][j][c] - b.coeff[i][j][c]).abs() > tol {
                    return false;
                }
            }
        }
    }
    true
}

/// Classify the candidate bifurcation of `sys` at `mu0`.
pub fn classify(sys: &PWSystem, mu0: f64) -> Result<HLBReport, HlbError> {
    sys.check_classifiable()?;
    let all = Allow { swap: true, refl: true, flip: true, rev: true };
    let mut attempts: Vec<(Normalization, Attempt)> = vec![];
    let mut advisories = vec![];
    match &sys.mechanism {
        Mechanism::Filippov { left, right } => {
            let smp = Sampled::new(&[left, right], Layout::Pair, mu0)?;
            let scale = smp.raw0.iter().map(|t| t.scale()).fold(1.0, f64::max);
            let cont = continuous_on_boundary(left, right, mu0, scale);
            let smooth = left.same_as(right) || (cont && tables_equal(&smp.raw0[0], &smp.raw0[1], EQ_REL * scale));
            for n in normalizations(all) {
                let fr = smp.frame(n);
                if smooth {
                    if !n.swap_sides && !n.reflect_y && !n.reverse_time {
                        attempts.push((n, br_hopf(&fr)));
                    }
                    continue;
                }
                let mut v = if cont {
                    vec![br_hlb1(&fr, false), br_hlb1(&fr, true)]
                } else {
                    vec![br_hlb3(&fr), br_hlb4(&fr, cont), br_hlb6(&fr), br_hlb7(&fr), br_hlb8(&fr), br_hlb9(&fr), br_hlb10(&fr)]
                };
                if !cont {
                    v.push(br_hlb5(&fr));
                }
                attempts.extend(v.into_iter().map(|a| (n, a)));
            }
        }
        Mechanism::Impact { field, reset } => {
            let smp = Sampled::new(&[field], Layout::Single, mu0)?;
            let wp = sys.well_posedness(mu0);
            for n in normalizations(Allow { swap: false, refl: false, flip: true, rev: false }) {
                attempts.push((n, br_impact(&smp.frame(n), reset, mu0, &wp)));
            }
        }
        Mechanism::Impulse { field, radius, angle } => {
            let maps = ImpulseMaps { field, radius, angle };
            let scale = field.taylor(mu0)?.scale();
            for n in normalizations(Allow { swap: false, refl: false, flip: true, rev: false }) {
                attempts.push((n, br_impulse(&maps, mu0, n.flip_mu, scale)));
            }
        }
        Mechanism::Hysteretic { left, right } | Mechanism::Delayed { left, right } => {
            let delayed = matches!(sys.mechanism, Mechanism::Delayed { .. });
            let smp = Sampled::new(&[left, right], Layout::Pair, mu0)?;
            for n in normalizations(Allow { swap: true, refl: true, flip: false, rev: false }) {
                attempts.extend(br_hysteresis(&smp.frame(n), delayed).into_iter().map(|a| (n, a)));
            }
        }
        Mechanism::FourQuadrant { pieces } => {
            let refs: Vec<&SmoothPiece> = pieces.iter().collect();
            let smp = Sampled::new(&refs, Layout::Quad, mu0)?;
            for n in normalizations(all) {
                attempts.push((n, br_hlb19(&smp.frame(n))));
            }
        }
        Mechanism::SqrtContinuous { field } => {
            let smp = Sampled::new(&[field], Layout::Single, mu0)?;
            let (z, _) = field.z_partials(mu0);
            for n in normalizations(Allow { swap: false, refl: true, flip: true, rev: true }) {
                let mut zz = z;
                if n.reflect_y {
                    zz[1] = -zz[1];
                }
                if n.reverse_time {
                    zz = [-zz[0], -zz[1]];
                }
                attempts.push((n, br_hlb20(&smp.frame(n), zz)));
            }
        }
    }

    let matched: Vec<&(Normalization, Attempt)> = attempts.iter().filter(|(_, a)| a.ok()).collect();
    let mut kinds: Vec<HlbKind> = matched.iter().map(|(_, a)| a.kind).collect();
    kinds.sort();
    kinds.dedup();
    if kinds.len() > 1 {
        let names: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
        return Err(HlbError::Ambiguous(names.join(", ")));
    }
    let Some((n, a)) = matched.first().map(|x| (x.0, x.1.clone())) else {
        let best = attempts.iter().max_by_key(|(_, a)| a.checks.iter().filter(|c| c.ok).count());
        let checklist = best
            .map(|(_, a)| a.checks.iter().map(|c| check(format!("{}: {}", a.kind, c.name), c.ok, c.witness)).collect())
            .unwrap_or_default();
        return Ok(HLBReport {
            schema: "hlb-report/1",
            system: sys.name.clone(),
            mu0,
            kind: None,
            alpha: None,
            beta: None,
            gamma: None,
            criticality: Criticality::Degenerate,
            exponents: None,
            predicted_period: None,
            cycle_side: None,
            normalization: Normalization::default(),
            quantities: BTreeMap::new(),
            checklist,
            advisories: vec!["no theorem's hypotheses hold".into()],
        });
    };

    if a.kind == HlbKind::Hlb(4) {
        let eps = 1e-3;
        for m in [mu0 + eps, mu0 - eps] {
            if let Ok(p) = find_pseudo_equilibria(sys, (-0.5, 0.5), m) {
                if p.iter().any(|e| e.admissible) {
                    advisories.push(format!("pseudo-equilibria coexist at mu = {m}"));
                }
            }
        }
    }
    let mut checklist = a.checks.clone();
    if a.kind == HlbKind::Hlb(4) {
        checklist.push(check("no pseudo-equilibria near origin", advisories.is_empty(), advisories.len() as f64));
    }
    let alpha_tol = ALPHA_REL * a.scale;
    let sign = if n.reverse_time { -1.0 } else { 1.0 };
    let alpha = a.alpha.map(|x| sign * x);
    let criticality = match (alpha, a.stable) {
        (Some(al), _) if al.abs() < alpha_tol => Criticality::Degenerate,
        (Some(al), _) if al < 0.0 => Criticality::Supercritical,
        (Some(_), _) => Criticality::Subcritical,
        (None, Some(s)) if s != n.reverse_time => Criticality::Supercritical,
        (None, Some(_)) => Criticality::Subcritical,
        (None, None) => Criticality::Degenerate,
    };
    let degenerate = criticality == Criticality::Degenerate;
    let side = if degenerate { None } else { a.side.map(|s| if n.flip_mu { -s } else { s }) };
    Ok(HLBReport {
        schema: "hlb-report/1",
        system: sys.name.clone(),
        mu0,
        kind: Some(a.kind),
        alpha,
        beta: a.beta,
        gamma: a.gamma,
        criticality,
        exponents: Some(scaling_row(a.kind)),
        predicted_period: if degenerate { None } else { a.period.clone() },
        cycle_side: side,
        normalization: n,
        quantities: a.quantities.clone(),
        checklist,
        advisories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwsmodel::{Monomial, Poly};
    use crate::zoo::{zoo_build, zoo_build_published, zoo_entries};
    use proptest::prelude::*;

    fn piece(f: &[(u32, u32, f64)], g: &[(u32, u32, f64)]) -> SmoothPiece {
        SmoothPiece::poly(Poly::from_terms(f), Poly::from_terms(g))
    }

    #[test]
    fn every_zoo_value_classifies() {
        for e in zoo_entries() {
            for v in &e.published {
                let sys = zoo_build_published(e.name, v).unwrap();
                let r = classify(&sys, 0.0).unwrap_or_else(|err| panic!("{}: {err}", e.name));
                assert_eq!(r.kind, Some(v.kind), "{}: {:#?}", e.name, r.checklist);
                let close = |got: Option<f64>, want: Option<f64>, what: &str| {
                    if let Some(w) = want {
                        let g = got.unwrap_or_else(|| panic!("{} {what} missing", e.name));
                        assert!((g - w).abs() <= v.rel_tol.max(1e-6) * w.abs().max(1e-3), "{} {what}: {g} vs {w}", e.name);
                    }
                };
                close(r.alpha, v.alpha, "alpha");
                close(r.beta, v.beta, "beta");
                close(r.gamma, v.gamma, "gamma");
            }
        }
    }

    #[test]
    fn scaling_rows() {
        let row = |k| {
            let e = scaling_row(k);
            (e.a.to_string(), e.b.to_string())
        };
        assert_eq!(row(HlbKind::Hlb(7)), ("1/2".into(), "1/2".into()));
        assert_eq!(row(HlbKind::Hlb(17)), ("1/3".into(), "1/3".into()));
        assert_eq!(row(HlbKind::Hopf), ("1/2".into(), "0".into()));
        assert_eq!(row(HlbKind::Hlb(19)), ("1".into(), "1".into()));
        assert_eq!(row(HlbKind::Hlb(13)), ("1".into(), "0".into()));
    }

    #[test]
    fn linear_center_has_zero_coefficients() {
        let p = piece(&[(0, 1, 1.0)], &[(1, 0, -1.0)]);
        let (a, b) = hopf_coeffs(&p.taylor(0.0).unwrap()).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn hopf_needs_rotation() {
        let p = piece(&[(1, 0, 1.0)], &[(0, 1, -1.0)]);
        assert!(hopf_coeffs(&p.taylor(0.0).unwrap()).is_err());
    }

    #[test]
    fn hopf_is_invariant_under_linear_change() {
        // x' = -y + x^3 (radially repelling cubic) has alpha = 6 in any basis
        let base = piece(&[(0, 1, -1.0), (3, 0, 1.0), (1, 2, 1.0)], &[(1, 0, 1.0), (2, 1, 1.0), (0, 3, 1.0)]);
        let t = base.taylor(0.0).unwrap();
        let (a0, _) = hopf_coeffs(&t).unwrap();
        let sheared = linear_change(&t, [[1.0, 0.5], [0.0, 2.0]]);
        let (a1, _) = hopf_coeffs(&sheared).unwrap();
        assert!((a0 - 16.0).abs() < 1e-9, "{a0}");
        // the scale of alpha depends on the basis, its sign does not
        assert!(a1 > 0.0, "{a1}");
    }

    #[test]
    fn lv_impulse_integral() {
        let sys = zoo_build("lv_impulse", &BTreeMap::new()).unwrap();
        let Mechanism::Impulse { field, .. } = &sys.mechanism else { panic!() };
        let t = field.taylor(0.0).unwrap();
        // closed form of the same integral: (int cos^3 - int cos sin^2) / 2
        let exact = 0.5 * ((0.0 - (1.0 - 1.0 / 3.0)) - (0.0 - 1.0 / 3.0));
        let q = impulsive_integral(&t, 0.0);
        assert!((q - exact).abs() < 1e-8, "{q}");
        assert!((q + 1.0 / 6.0).abs() < 1e-8);
    }

    #[test]
    fn period_examples() {
        let mut kv = BTreeMap::new();
        let r = classify(&zoo_build("relay_observer", &kv).unwrap(), 0.0).unwrap();
        let p = r.predicted_period.unwrap();
        assert!((p.coeff - 4.0).abs() < 1e-12 && p.exponent == 1.0);
        kv.insert("delayed".into(), 1.0);
        let r = classify(&zoo_build("relay_observer", &kv).unwrap(), 0.0).unwrap();
        assert!((r.predicted_period.unwrap().coeff - 4.0).abs() < 1e-12);
        let r = classify(&zoo_build("slip_focus_focus", &BTreeMap::new()).unwrap(), 0.0).unwrap();
        assert!((r.predicted_period.unwrap().limit - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn criticality_examples() {
        let r = classify(&zoo_build("mckean", &BTreeMap::new()).unwrap(), 0.0).unwrap();
        assert_eq!(r.criticality, Criticality::Subcritical);
        let r = classify(&zoo_build("vdp", &BTreeMap::new()).unwrap(), 0.0).unwrap();
        assert_eq!(r.criticality, Criticality::Supercritical);
        assert_eq!(r.cycle_side, Some(1.0));
    }

    #[test]
    fn time_reversal_duality_on_slipping_foci() {
        let build = |ll: f64, lr: f64| {
            let mut kv = BTreeMap::new();
            kv.insert("lambda_L".to_string(), ll);
            kv.insert("lambda_R".to_string(), lr);
            classify(&zoo_build("slip_focus_focus", &kv).unwrap(), 0.0).unwrap()
        };
        let a = build(0.1, -0.5);
        let b = build(0.5, -0.1);
        assert_eq!(a.kind, Some(HlbKind::Hlb(5)));
        assert_eq!(b.kind, Some(HlbKind::Hlb(5)));
        assert_eq!(a.criticality, Criticality::Supercritical);
        assert_eq!(b.criticality, Criticality::Subcritical);
        assert!((a.alpha.unwrap() + b.alpha.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn unclassified_reports_checklist() {
        // a saddle: no theorem applies
        let p = piece(&[(1, 0, 1.0)], &[(0, 1, -1.0)]);
        let sys = PWSystem::new("saddle", Mechanism::Filippov { left: p.clone(), right: p });
        let r = classify(&sys, 0.0).unwrap();
        assert!(r.kind.is_none());
        assert_eq!(r.criticality, Criticality::Degenerate);
        assert!(r.checklist.iter().any(|c| !c.ok));
    }

    #[test]
    fn mirrored_system_gives_same_report() {
        // reflecting the valve generator by hand must not change alpha
        let sys = zoo_build("valve", &BTreeMap::new()).unwrap();
        let r = classify(&sys, 0.0).unwrap();
        let Mechanism::Filippov { left, right } = &sys.mechanism else { panic!() };
        let mirror = |p: &SmoothPiece| {
            let p = p.clone();
            SmoothPiece::func(std::sync::Arc::new(move |x: f64, y: f64, _z: f64, mu: f64| {
                let (f, g) = p.eval(x, -y, mu);
                (f, -g)
            }))
        };
        let sys2 = PWSystem::new("valve_mirror", Mechanism::Filippov { left: mirror(left), right: mirror(right) });
        let r2 = classify(&sys2, 0.0).unwrap();
        assert_eq!(r2.kind, r.kind);
        assert!((r2.alpha.unwrap() - r.alpha.unwrap()).abs() < 1e-6);
    }

    fn radial_system(c: f64, q: f64) -> PWSystem {
        // rotation with cubic radial term c r^2 and a quadratic perturbation
        let f = Poly::new(vec![
            Monomial::linear_mu(1, 0, 0.0, 1.0),
            Monomial::new(0, 1, -1.0),
            Monomial::new(3, 0, c),
            Monomial::new(1, 2, c),
            Monomial::new(2, 0, q),
        ]);
        let g = Poly::new(vec![
            Monomial::new(1, 0, 1.0),
            Monomial::linear_mu(0, 1, 0.0, 1.0),
            Monomial::new(2, 1, c),
            Monomial::new(0, 3, c),
            Monomial::new(1, 1, q),
        ]);
        let p = SmoothPiece::poly(f, g);
        PWSystem::new("radial", Mechanism::Filippov { left: p.clone(), right: p })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn criticality_follows_alpha_sign(c in -2.0f64..2.0, q in -1.0f64..1.0) {
            prop_assume!(c.abs() > 1e-3);
            let r = classify(&radial_system(c, q), 0.0).unwrap();
            let a = r.alpha.unwrap();
            prop_assert_eq!(r.kind, Some(HlbKind::Hopf));
            prop_assert_eq!(r.criticality == Criticality::Supercritical, a < -1e-8);
            prop_assert!((r.beta.unwrap() - 2.0).abs() < 1e-9);
        }

        #[test]
        fn rational_display_roundtrip(n in 0u32..20, d in 1u32..20) {
            let r = Rational::new(n, d);
            let s = r.to_string();
            let v: f64 = match s.split_once('/') {
                Some((a, b)) => a.parse::<f64>().unwrap() / b.parse::<f64>().unwrap(),
                None => s.parse().unwrap(),
            };
            prop_assert!((v - r.value()).abs() < 1e-12);
        }
    }
}
