//! Catalogue of worked example systems in canonical coordinates.
//!
//! Every entry is shifted so the bifurcation sits at `(x, y; mu) = (0, 0; 0)`.
//! The named bifurcation parameter of the original model sets `mu`; the key
//! `mu` sets it directly and wins when both are given.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::hlb::HlbKind;
use crate::numerics::brent_plain;
use crate::pwsmodel::{Mechanism, ModelError, Monomial, PWSystem, Poly, ScalarMap, SmoothPiece};

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Stated with the model in the literature.
    Published,
    /// Worked out here from the general formulas.
    Derived,
}

/// Reference classification for one parameter choice.
#[derive(Debug, Clone, Serialize)]
pub struct PublishedValue {
    /// Parameter overrides on top of the entry defaults.
    pub params: BTreeMap<String, f64>,
    pub kind: HlbKind,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// Value of the original bifurcation parameter at `mu = 0`.
    pub bifurcation_value: f64,
    pub rel_tol: f64,
    pub origin: Origin,
}

/// Catalogue record.
#[derive(Debug, Clone, Serialize)]
pub struct ZooEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Name of the original bifurcation parameter.
    pub bifurcation_param: &'static str,
    pub defaults: Vec<(&'static str, f64)>,
    pub published: Vec<PublishedValue>,
    /// Coordinate change from the original model.
    pub notes: &'static str,
}

type Params = BTreeMap<String, f64>;

const NAMES: [&str; 16] = [
    "vdp",
    "mckean",
    "ocean",
    "gause",
    "valve",
    "slip_focus_focus",
    "slip_focus_fold",
    "pendulum",
    "bilinear",
    "fixed_two_fold",
    "impact_osc",
    "lv_impulse",
    "relay_observer",
    "forced_osc",
    "wilson_cowan",
    "sqrt_example",
];

/// Names of all catalogue entries.
pub fn zoo_list() -> Vec<&'static str> {
    NAMES.to_vec()
}

fn mono(i: u32, j: u32, c: &[f64]) -> Monomial {
    Monomial { i, j, k: 0, coeff: c.to_vec() }
}

fn mono_z(i: u32, j: u32, k: u32, c: f64) -> Monomial {
    Monomial { i, j, k, coeff: vec![c] }
}

fn poly(terms: Vec<Monomial>) -> Poly {
    Poly::new(terms)
}

fn piece(f: Vec<Monomial>, g: Vec<Monomial>) -> SmoothPiece {
    SmoothPiece::poly(poly(f), poly(g))
}

fn pv(
    params: &[(&str, f64)],
    kind: HlbKind,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    bifurcation_value: f64,
    rel_tol: f64,
    origin: Origin,
) -> PublishedValue {
    PublishedValue {
        params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        kind,
        alpha,
        beta,
        gamma,
        bifurcation_value,
        rel_tol,
        origin,
    }
}

/// `I0` for the McKean model: the current at which the equilibrium hits the kink.
fn mckean_onset(a: f64, c: f64) -> f64 {
    a / 2.0 + a / (2.0 * c)
}

/// Critical predation rate for the Gause model.
fn gause_onset(rc: f64, h: f64, k: f64, delta: f64) -> f64 {
    delta / (rc * (k - h * delta))
}

/// Value of `nu1` at which the bilinear oscillator's foci balance.
fn bilinear_onset(kl: f64, kr: f64, b: f64, x_hat: f64) -> Result<f64, ModelError> {
    if x_hat != 0.0 {
        return Ok(b);
    }
    let lam = |nu1: f64| {
        let (tl, dl) = (nu1 - b, kl);
        let (tr, dr) = (nu1 - 2.0 * b, kl + kr);
        let part = |t: f64, d: f64| {
            let disc = d - t * t / 4.0;
            if disc <= 0.0 {
                f64::NAN
            } else {
                (t / 2.0) / disc.sqrt()
            }
        };
        part(tl, dl) + part(tr, dr)
    };
    brent_plain(lam, b, 2.0 * b, 1e-14).map_err(|e| ModelError::BadParam(format!("bilinear onset: {e}")))
}

/// Wilson-Cowan quadrant field constants `(f_j(0), g_j(0))` at `tau`, `j = 1..4`.
fn wc_constants(p: &WcParams, tau: f64) -> [(f64, f64); 4] {
    let WcParams { a, b, c, d } = *p;
    let f3 = -(c * (b - d) + (a * d - b * c) * tau);
    let g3 = -(a * (b - d) + (a * d - b * c) * tau);
    let s = a - c;
    [
        (f3 + s * (tau - c), g3 + s * (tau - a)),
        (f3 - s * c, g3 - s * a),
        (f3, g3),
        (f3 + s * tau, g3 + s * tau),
    ]
}

/// Parameters of the Wilson-Cowan two-population model with Heaviside gains.
#[derive(Debug, Clone, Copy)]
pub struct WcParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl WcParams {
    fn from(p: &Params) -> Self {
        Self { a: p["a"], b: p["b"], c: p["c"], d: p["d"] }
    }
}

/// The value of `tau` where the product of quadrant slopes equals one.
fn wilson_cowan_onset(p: &WcParams) -> Result<f64, ModelError> {
    let log_lambda = |tau: f64| {
        let k = wc_constants(p, tau);
        let m: Vec<f64> = k.iter().map(|(f, g)| g / f).collect();
        let prod = m[1] * m[3] / (m[0] * m[2]);
        if prod > 0.0 {
            prod.ln()
        } else {
            f64::NAN
        }
    };
    let grid: Vec<f64> = (1..400).map(|i| i as f64 * 0.005).collect();
    for w in grid.windows(2) {
        let (fa, fb) = (log_lambda(w[0]), log_lambda(w[1]));
        if fa.is_finite() && fb.is_finite() && fa * fb <= 0.0 {
            return brent_plain(log_lambda, w[0], w[1], 1e-14)
                .map_err(|e| ModelError::BadParam(format!("wilson_cowan onset: {e}")));
        }
    }
    Err(ModelError::BadParam("wilson_cowan: no onset for these parameters".into()))
}

/// Raw Wilson-Cowan field `(du/dt, dv/dt)` with Heaviside gains.
pub fn wilson_cowan_raw(p: &WcParams, tau: f64, u: f64, v: f64) -> (f64, f64) {
    let heav = |s: f64| if s > 0.0 { 1.0 } else { 0.0 };
    (-u + heav(u - p.a * v - p.b), (-v + heav(u - p.c * v - p.d)) / tau)
}

/// Canonical coordinates `(x, y)` of the raw state `(u, v)`.
pub fn wilson_cowan_canonical(p: &WcParams, u: f64, v: f64) -> (f64, f64) {
    (u - p.c * v - p.d, u - p.a * v - p.b)
}

fn wilson_cowan_pieces(p: &WcParams, tau0: f64) -> [SmoothPiece; 4] {
    let WcParams { a, b, c, d } = *p;
    // Coefficient p + q*tau written as a polynomial in mu = tau - tau0.
    let lin = |p0: f64, q: f64| [p0 + q * tau0, q];
    let s = a - c;
    let e = a * d - b * c;
    let make = |df: (f64, f64), dg: (f64, f64)| {
        let fc = lin(-c * (b - d) + df.0, -e + df.1);
        let gc = lin(-a * (b - d) + dg.0, -e + dg.1);
        piece(
            vec![mono(1, 0, &lin(c, -a)), mono(0, 1, &lin(-c, c)), mono(0, 0, &fc)],
            vec![mono(1, 0, &lin(a, -a)), mono(0, 1, &lin(-a, c)), mono(0, 0, &gc)],
        )
    };
    [
        make((-s * c, s), (-s * a, s)),
        make((-s * c, 0.0), (-s * a, 0.0)),
        make((0.0, 0.0), (0.0, 0.0)),
        make((0.0, s), (0.0, s)),
    ]
}

fn defaults_of(name: &str) -> (&'static str, Vec<(&'static str, f64)>) {
    match name {
        "vdp" => ("k1", vec![("k2", 1.0)]),
        "mckean" => ("I", vec![("a", 0.25), ("b", 0.5), ("c", 0.5)]),
        "ocean" => ("lambda", vec![("A", 1.1), ("delta0", 0.01)]),
        "gause" => ("b", vec![("Rc", 16.0), ("r", 1.0), ("h", 1.0), ("k", 0.45), ("delta", 0.36), ("K", 50.0)]),
        "valve" => ("a", vec![("h1", 0.6), ("h2", 0.3)]),
        "slip_focus_focus" => ("mu", vec![("lambda_L", 0.1), ("lambda_R", -0.5)]),
        "slip_focus_fold" => ("mu", vec![("lambda_L", 1.0)]),
        "pendulum" => ("b", vec![("a", 0.5), ("Kp", 1.0), ("Kd", 1.0), ("theta_star", 1.0)]),
        "bilinear" => ("nu1", vec![("kL", 1.0), ("kR", 3.0), ("b", 0.5), ("nu2", 1.0), ("x_hat", 0.0)]),
        "fixed_two_fold" => ("eta2", vec![("eta1", 1.0)]),
        "impact_osc" => ("xi", vec![("tau", 0.2), ("delta", 1.0), ("r", 0.5)]),
        "lv_impulse" => ("nu", vec![]),
        "relay_observer" => ("mu", vec![("tau", -0.5), ("delta", 1.0), ("b1", 1.0), ("b2", 1.0), ("delayed", 0.0)]),
        "forced_osc" => ("mu", vec![("m", 1.0), ("b", 0.5), ("k", 1.0), ("F", 1.0), ("delayed", 0.0)]),
        "wilson_cowan" => ("tau", vec![("a", 2.0), ("b", 0.05), ("c", 0.25), ("d", 0.3)]),
        "sqrt_example" => ("mu", vec![("lambda", 0.5), ("eta", -1.0), ("nu", -1.0)]),
        _ => ("", vec![]),
    }
}

/// Original bifurcation-parameter value at `mu = 0`, given resolved constants.
fn onset(name: &str, p: &Params) -> Result<f64, ModelError> {
    Ok(match name {
        "mckean" => mckean_onset(p["a"], p["c"]),
        "ocean" => 1.0,
        "gause" => gause_onset(p["Rc"], p["h"], p["k"], p["delta"]),
        "bilinear" => bilinear_onset(p["kL"], p["kR"], p["b"], p["x_hat"])?,
        "fixed_two_fold" => -1.0,
        "lv_impulse" => 2.0,
        "wilson_cowan" => wilson_cowan_onset(&WcParams::from(p))?,
        _ => 0.0,
    })
}

/// Map from the original bifurcation parameter to `mu`.
fn mu_from(name: &str, value: f64, at_onset: f64) -> f64 {
    match name {
        "ocean" | "gause" => at_onset - value,
        "valve" => -value,
        _ => value - at_onset,
    }
}

/// Look up a catalogue record.
pub fn zoo_entry(name: &str) -> Option<ZooEntry> {
    if !NAMES.contains(&name) {
        return None;
    }
    let (bif, defaults) = defaults_of(name);
    let (summary, notes) = describe(name);
    Some(ZooEntry {
        name: NAMES.iter().find(|n| **n == name).copied().unwrap_or(""),
        summary,
        bifurcation_param: bif,
        defaults,
        published: published(name),
        notes,
    })
}

/// All catalogue records.
pub fn zoo_entries() -> Vec<ZooEntry> {
    NAMES.iter().filter_map(|n| zoo_entry(n)).collect()
}

fn describe(name: &str) -> (&'static str, &'static str) {
    match name {
        "vdp" => ("van der Pol circuit with cubic resistor", "x = v, y = i, mu = k1"),
        "mckean" => (
            "McKean piecewise-linear neuron",
            "x = v - a/2, y = w - a/(2c), mu = I - I0 with I0 = a/2 + a/(2c)",
        ),
        "ocean" => ("Stommel-type ocean box model", "x = T - 1, y = S - 1, mu = 1 - lambda"),
        "gause" => (
            "Gause predator-prey with harvesting threshold",
            "X = Rc - x, Y = y - y0 with y0 = r Rc (1 - Rc/K) k / delta, mu = b0 - b",
        ),
        "valve" => ("relief valve with piecewise friction", "X = a - x, mu = -a"),
        "slip_focus_focus" => ("two foci sliding along the switching line", "canonical as given"),
        "slip_focus_fold" => ("focus and fold sliding along the switching line", "canonical as given"),
        "pendulum" => (
            "inverted pendulum with dead-zone PD control",
            "x = theta - theta_star - b y, y = theta dot, mu = b",
        ),
        "bilinear" => ("bilinear oscillator with quadratic damping", "mu = nu1 - nu1c"),
        "fixed_two_fold" => ("two folds fixed at the origin", "mu = eta2 + 1"),
        "impact_osc" => ("linear impact oscillator", "mu = xi"),
        "lv_impulse" => ("Lotka-Volterra with impulsive harvesting", "mu = nu - 2"),
        "relay_observer" => ("relay feedback with hysteresis or delay", "mu is the hysteresis width or delay"),
        "forced_osc" => ("relay-forced damped oscillator", "mu is the hysteresis width or delay"),
        "wilson_cowan" => (
            "Wilson-Cowan populations with Heaviside gains",
            "x = u - c v - d, y = u - a v - b, time rescaled by (a - c) tau, mu = tau - tau_HB",
        ),
        "sqrt_example" => ("field with a square-root nonlinearity", "z = sqrt(x) on x >= 0"),
        _ => ("", ""),
    }
}

fn published(name: &str) -> Vec<PublishedValue> {
    use HlbKind::*;
    use Origin::*;
    match name {
        "vdp" => vec![pv(&[], Hopf, Some(-6.0), Some(1.0), None, 0.0, 1e-6, Published)],
        "mckean" => vec![pv(&[], Hlb(1), Some(0.0913), None, None, 0.375, 0.01, Derived)],
        "ocean" => vec![pv(&[], Hlb(2), None, None, None, 1.0, 1e-6, Published)],
        "gause" => vec![pv(&[], Hlb(3), None, None, None, 0.25, 1e-6, Published)],
        "valve" => vec![pv(
            &[],
            Hlb(4),
            Some(0.3 / 0.91f64.sqrt() - 0.6 / 0.64f64.sqrt()),
            Some(1.0),
            Some(0.0),
            0.0,
            1e-6,
            Derived,
        )],
        "slip_focus_focus" => vec![pv(&[], Hlb(5), Some(-0.4), Some(1.0), Some(-0.6), 0.0, 1e-6, Published)],
        "slip_focus_fold" => vec![pv(&[], Hlb(6), Some(1.0), Some(1.0), None, 0.0, 1e-6, Published)],
        "pendulum" => vec![pv(&[], Hlb(7), Some(-2.0), None, None, 0.0, 1e-6, Published)],
        "bilinear" => vec![
            pv(
                &[],
                Hlb(8),
                Some(-9.0 * 0.5 / (2.0 * (81.0 - 2.0 * 0.25))),
                Some(162.0 / (36.0 - 0.25f64).powf(1.5)),
                None,
                4.0 * 0.5 / 3.0,
                1e-6,
                Published,
            ),
            pv(&[("x_hat", 0.1)], Hlb(9), Some(-5.0 / 9.0), None, None, 0.5, 1e-6, Published),
        ],
        "fixed_two_fold" => vec![pv(&[], Hlb(10), Some(-1.0), Some(1.0), None, -1.0, 1e-6, Published)],
        "impact_osc" => vec![pv(
            &[],
            Hlb(11),
            Some(0.5f64.ln() + std::f64::consts::PI * 0.2 / (4.0f64 - 0.04).sqrt()),
            Some(1.0),
            Some(0.5),
            0.0,
            1e-6,
            Published,
        )],
        "lv_impulse" => vec![pv(&[], Hlb(14), Some(-1.0 / 6.0), Some(0.5), None, 2.0, 1e-6, Published)],
        "relay_observer" => vec![
            pv(&[], Hlb(15), Some(-2.0), None, None, 0.0, 1e-6, Published),
            pv(&[("delayed", 1.0)], Hlb(16), Some(-2.0), None, None, 0.0, 1e-6, Published),
        ],
        "forced_osc" => vec![
            pv(&[], Hlb(17), Some(-1.0), None, None, 0.0, 1e-6, Published),
            pv(&[("delayed", 1.0)], Hlb(18), Some(-1.0), None, None, 0.0, 1e-6, Published),
        ],
        "wilson_cowan" => vec![pv(&[], Hlb(19), Some(-8.47), Some(9.53), None, 0.524, 0.01, Published)],
        "sqrt_example" => vec![pv(&[], Hlb(20), None, Some(1.0), Some(0.5), 0.0, 1e-6, Published)],
        _ => vec![],
    }
}

/// Resolve user params against the entry defaults.
///
/// Returns the full parameter map (including the bifurcation parameter) and `mu`.
fn resolve(name: &str, user: &Params) -> Result<(Params, f64), ModelError> {
    let (bif, defaults) = defaults_of(name);
    let mut p: Params = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in user {
        if !v.is_finite() {
            return Err(ModelError::BadParam(format!("{name}: `{k}` is not finite")));
        }
        if k != "mu" && k != bif && !p.contains_key(k) {
            let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).chain([bif]).collect();
            return Err(ModelError::BadParam(format!("{name}: unknown key `{k}` (known: {})", known.join(", "))));
        }
        if k != "mu" && k != bif {
            p.insert(k.clone(), *v);
        }
    }
    let at_onset = onset(name, &p)?;
    let mu = if let Some(m) = user.get("mu") {
        *m
    } else if let Some(v) = user.get(bif) {
        mu_from(name, *v, at_onset)
    } else {
        0.0
    };
    if bif != "mu" {
        let orig = match name {
            "ocean" | "gause" => at_onset - mu,
            "valve" => -mu,
            _ => at_onset + mu,
        };
        p.insert(bif.to_string(), orig);
    }
    Ok((p, mu))
}

fn mechanism(name: &str, p: &Params) -> Result<Mechanism, ModelError> {
    let g = |k: &str| p[k];
    Ok(match name {
        "vdp" => {
            let f = piece(
                vec![mono(0, 1, &[1.0])],
                vec![mono(1, 0, &[-1.0]), mono(0, 1, &[0.0, 1.0]), mono(0, 3, &[-g("k2")])],
            );
            Mechanism::Filippov { left: f.clone(), right: f }
        }
        "mckean" => {
            let (b, c) = (g("b"), g("c"));
            let gg = || vec![mono(1, 0, &[b]), mono(0, 1, &[-b * c])];
            let left = piece(vec![mono(1, 0, &[-1.0]), mono(0, 1, &[-1.0]), mono(0, 0, &[0.0, 1.0])], gg());
            let eval = Arc::new(move |x: f64, y: f64, _z: f64, mu: f64| {
                let f = if x <= 0.5 { x - y + mu } else { 1.0 - x - y + mu };
                (f, b * (x - c * y))
            });
            let right = SmoothPiece::func_with_local(
                eval,
                poly(vec![mono(1, 0, &[1.0]), mono(0, 1, &[-1.0]), mono(0, 0, &[0.0, 1.0])]),
                poly(gg()),
            );
            Mechanism::Filippov { left, right }
        }
        "ocean" => {
            let (a, d) = (g("A"), g("delta0"));
            let gg = || vec![mono(1, 0, &[-d]), mono(0, 0, &[0.0, -d])];
            Mechanism::Filippov {
                left: piece(vec![mono(0, 1, &[1.0]), mono(1, 0, &[a - 1.0]), mono(2, 0, &[a])], gg()),
                right: piece(vec![mono(0, 1, &[1.0]), mono(1, 0, &[-1.0 - a]), mono(2, 0, &[-a])], gg()),
            }
        }
        "gause" => {
            let (rc, r, h, k, delta, kk) = (g("Rc"), g("r"), g("h"), g("k"), g("delta"), g("K"));
            let b0 = gause_onset(rc, h, k, delta);
            let y0 = r * rc * (1.0 - rc / kk) * k / delta;
            let eval = Arc::new(move |xx: f64, yy: f64, _z: f64, mu: f64| {
                let (x, y) = (rc - xx, yy + y0);
                let bb = b0 - mu;
                let q = bb * x / (1.0 + bb * h * x);
                (-(r * x * (1.0 - x / kk) - q * y), (k * q - delta) * y)
            });
            let left = SmoothPiece::func(eval);
            let right = piece(
                vec![mono(0, 0, &[-r * rc + r * rc * rc / kk]), mono(1, 0, &[r - 2.0 * r * rc / kk]), mono(2, 0, &[r / kk])],
                vec![mono(0, 0, &[-delta * y0]), mono(0, 1, &[-delta])],
            );
            Mechanism::Filippov { left, right }
        }
        "valve" => {
            let (h1, h2) = (g("h1"), g("h2"));
            let f = || vec![mono(0, 1, &[-1.0])];
            Mechanism::Filippov {
                left: piece(f(), vec![mono(1, 0, &[1.0]), mono(0, 0, &[0.0, 1.0]), mono(0, 1, &[2.0 * h2])]),
                right: piece(f(), vec![mono(1, 0, &[1.0]), mono(0, 0, &[0.0, 1.0]), mono(0, 1, &[-2.0 * h1])]),
            }
        }
        "slip_focus_focus" | "slip_focus_fold" => {
            let ll = g("lambda_L");
            let left = piece(vec![mono(1, 0, &[ll]), mono(0, 1, &[1.0])], vec![mono(1, 0, &[-1.0]), mono(0, 1, &[ll])]);
            let right = if name == "slip_focus_focus" {
                let lr = g("lambda_R");
                piece(
                    vec![mono(1, 0, &[lr]), mono(0, 1, &[1.0]), mono(0, 0, &[0.0, 1.0])],
                    vec![mono(1, 0, &[-1.0]), mono(0, 1, &[lr]), mono(0, 0, &[0.0, lr])],
                )
            } else {
                piece(vec![mono(0, 1, &[1.0]), mono(0, 0, &[0.0, 1.0])], vec![mono(0, 0, &[-1.0])])
            };
            Mechanism::Filippov { left, right }
        }
        "pendulum" => {
            let (a, kp, kd, th) = (g("a"), g("Kp"), g("Kd"), g("theta_star"));
            let e = a - kp;
            let left = piece(
                vec![mono(0, 1, &[1.0, 0.0, -a]), mono(1, 0, &[0.0, -a]), mono(0, 0, &[0.0, -a * th])],
                vec![mono(1, 0, &[a]), mono(0, 0, &[a * th]), mono(0, 1, &[0.0, a])],
            );
            let right = piece(
                vec![mono(0, 1, &[1.0, kd, -e]), mono(1, 0, &[0.0, -e]), mono(0, 0, &[0.0, -e * th])],
                vec![mono(1, 0, &[e]), mono(0, 0, &[e * th]), mono(0, 1, &[-kd, e])],
            );
            Mechanism::Filippov { left, right }
        }
        "bilinear" => {
            let (kl, kr, b, nu2, xh) = (g("kL"), g("kR"), g("b"), g("nu2"), g("x_hat"));
            let nc = bilinear_onset(kl, kr, b, xh)?;
            let f = || vec![mono(0, 1, &[1.0])];
            Mechanism::Filippov {
                left: piece(f(), vec![mono(1, 0, &[-kl]), mono(0, 1, &[nc - b, 1.0]), mono(0, 2, &[nu2])]),
                right: piece(
                    f(),
                    vec![
                        mono(1, 0, &[-(kl + kr)]),
                        mono(0, 0, &[-kr * xh]),
                        mono(0, 1, &[nc - 2.0 * b, 1.0]),
                        mono(0, 2, &[nu2]),
                    ],
                ),
            }
        }
        "fixed_two_fold" => Mechanism::Filippov {
            left: piece(vec![mono(1, 0, &[1.0]), mono(0, 1, &[1.0])], vec![mono(0, 0, &[1.0])]),
            right: piece(
                vec![mono(0, 1, &[1.0])],
                vec![mono(0, 0, &[-1.0]), mono(1, 0, &[g("eta1")]), mono(0, 1, &[-1.0, 1.0])],
            ),
        },
        "impact_osc" => {
            let (tau, delta, r) = (g("tau"), g("delta"), g("r"));
            Mechanism::Impact {
                field: piece(
                    vec![mono(0, 1, &[1.0])],
                    vec![mono(1, 0, &[-delta]), mono(0, 0, &[0.0, -delta]), mono(0, 1, &[tau])],
                ),
                reset: ScalarMap::new(move |y, _| -r * y),
            }
        }
        "lv_impulse" => Mechanism::Impulse {
            field: piece(
                vec![mono(0, 1, &[1.0]), mono(2, 0, &[0.5]), mono(0, 2, &[-0.5])],
                vec![mono(1, 0, &[-1.0])],
            ),
            radius: ScalarMap::new(|y, mu| {
                let nu = mu + 2.0;
                y * (1.0 - nu + nu * nu / 2.0).sqrt()
            }),
            angle: ScalarMap::new(|_, mu| (2.0 / (mu + 2.0) - 1.0).atan()),
        },
        "relay_observer" | "forced_osc" => {
            let (left, right) = if name == "relay_observer" {
                let (tau, delta, b1, b2) = (g("tau"), g("delta"), g("b1"), g("b2"));
                let side = |s: f64| {
                    piece(
                        vec![mono(1, 0, &[tau]), mono(0, 1, &[1.0]), mono(0, 0, &[s * b1])],
                        vec![mono(1, 0, &[-delta]), mono(0, 0, &[s * b2])],
                    )
                };
                (side(1.0), side(-1.0))
            } else {
                let (m, b, k, ff) = (g("m"), g("b"), g("k"), g("F"));
                let side = |s: f64| {
                    piece(
                        vec![mono(0, 1, &[1.0])],
                        vec![mono(1, 0, &[-k / m]), mono(0, 1, &[-b / m]), mono(0, 0, &[s * ff / m])],
                    )
                };
                (side(1.0), side(-1.0))
            };
            if g("delayed") != 0.0 {
                Mechanism::Delayed { left, right }
            } else {
                Mechanism::Hysteretic { left, right }
            }
        }
        "wilson_cowan" => {
            let wp = WcParams::from(p);
            let tau0 = wilson_cowan_onset(&wp)?;
            Mechanism::FourQuadrant { pieces: wilson_cowan_pieces(&wp, tau0) }
        }
        "sqrt_example" => {
            let (l, eta, nu) = (g("lambda"), g("eta"), g("nu"));
            Mechanism::SqrtContinuous {
                field: SmoothPiece::poly(
                    poly(vec![mono(1, 0, &[l]), mono(0, 1, &[1.0]), mono_z(0, 0, 1, eta)]),
                    poly(vec![mono(1, 0, &[-1.0]), mono(0, 1, &[l]), mono(0, 0, &[0.0, -1.0]), mono_z(0, 0, 1, nu)]),
                ),
            }
        }
        _ => return Err(ModelError::UnknownZoo(name.into())),
    })
}

/// Build a catalogue system. Unknown keys in `params` are rejected.
pub fn zoo_build(name: &str, params: &BTreeMap<String, f64>) -> Result<PWSystem, ModelError> {
    let entry = zoo_entry(name).ok_or_else(|| ModelError::UnknownZoo(name.into()))?;
    let (p, mu) = resolve(name, params)?;
    let mech = mechanism(name, &p)?;
    let mut sys = PWSystem::new(name, mech);
    sys.mu = mu;
    sys.params = p;
    sys.notes = entry.notes.to_string();
    Ok(sys)
}

/// Build with the overrides of one reference value.
pub fn zoo_build_published(name: &str, value: &PublishedValue) -> Result<PWSystem, ModelError> {
    zoo_build(name, &value.params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(name: &str, kv: &[(&str, f64)]) -> PWSystem {
        zoo_build(name, &kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()).unwrap()
    }

    #[test]
    fn every_entry_builds() {
        assert_eq!(zoo_list().len(), 16);
        for n in zoo_list() {
            let s = build(n, &[]);
            assert_eq!(s.mu, 0.0, "{n}");
            assert!(!zoo_entry(n).unwrap().published.is_empty());
        }
    }

    #[test]
    fn unknown_key_and_name() {
        let p: Params = [("bogus".to_string(), 1.0)].into();
        assert!(matches!(zoo_build("vdp", &p), Err(ModelError::BadParam(_))));
        assert!(matches!(zoo_build("nope", &Params::new()), Err(ModelError::UnknownZoo(_))));
    }

    #[test]
    fn bifurcation_parameter_sets_mu() {
        assert!((build("mckean", &[("I", 0.4)]).mu - 0.025).abs() < 1e-15);
        assert!((build("ocean", &[("lambda", 0.9)]).mu - 0.1).abs() < 1e-15);
        assert!((build("gause", &[("b", 0.2)]).mu - 0.05).abs() < 1e-15);
        assert_eq!(build("valve", &[("a", 0.1)]).mu, -0.1);
        assert_eq!(build("vdp", &[("k1", 0.3), ("mu", 0.2)]).mu, 0.2);
    }

    #[test]
    fn onsets_match_closed_forms() {
        // For these stiffnesses the foci's lambda/omega sum vanishes at nu1 = 4b/3.
        assert!((bilinear_onset(1.0, 3.0, 0.5, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let wc = wilson_cowan_onset(&WcParams { a: 2.0, b: 0.05, c: 0.25, d: 0.3 }).unwrap();
        assert!((wc - 0.524).abs() < 1e-3, "{wc}");
        assert!((gause_onset(16.0, 1.0, 0.45, 0.36) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn canonical_origin_is_on_the_boundary() {
        // Gause: the threshold equilibrium sits at X = 0 when mu = 0.
        let s = build("gause", &[]);
        if let Mechanism::Filippov { left, .. } = &s.mechanism {
            let (f, g) = left.eval(0.0, 0.0, 0.0);
            assert!(f.abs() < 1e-12 && g.abs() < 1e-12, "{f} {g}");
        }
        // Ocean: both sides vanish at the origin when mu = 0.
        let s = build("ocean", &[]);
        for p in s.mechanism.pieces() {
            let (f, g) = p.eval(0.0, 0.0, 0.0);
            assert!(f.abs() < 1e-15 && g.abs() < 1e-15);
        }
    }

    #[test]
    fn wilson_cowan_transform_matches_raw_field() {
        let wp = WcParams { a: 2.0, b: 0.05, c: 0.25, d: 0.3 };
        let tau0 = wilson_cowan_onset(&wp).unwrap();
        let pieces = wilson_cowan_pieces(&wp, tau0);
        for &(u, v, dmu) in &[(0.9, 0.1, 0.0), (0.2, 0.4, 0.01), (0.5, 0.05, -0.02), (0.1, 0.02, 0.03)] {
            let tau = tau0 + dmu;
            let (x, y) = wilson_cowan_canonical(&wp, u, v);
            let (du, dv) = wilson_cowan_raw(&wp, tau, u, v);
            let scale = (wp.a - wp.c) * tau;
            let want = (scale * (du - wp.c * dv), scale * (du - wp.a * dv));
            let q = match (x > 0.0, y > 0.0) {
                (true, true) => 0,
                (true, false) => 1,
                (false, false) => 2,
                (false, true) => 3,
            };
            let got = pieces[q].eval(x, y, dmu);
            assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12, "{got:?} {want:?}");
        }
    }

    #[test]
    fn lv_impulse_maps() {
        let s = build("lv_impulse", &[]);
        if let Mechanism::Impulse { radius, angle, .. } = &s.mechanism {
            assert!((radius.dy(0.0, 0.0) - 1.0).abs() < 1e-9);
            assert!(angle.eval(0.0, 0.0).abs() < 1e-15);
        } else {
            panic!("wrong mechanism");
        }
    }

    #[test]
    fn toggles_pick_mechanism() {
        assert_eq!(build("relay_observer", &[]).mechanism.tag(), "hysteretic");
        assert_eq!(build("forced_osc", &[("delayed", 1.0)]).mechanism.tag(), "delayed");
    }
}
