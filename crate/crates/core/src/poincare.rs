//! Numerical return maps, limit-cycle detection and bifurcation sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{find_pseudo_equilibria, find_regular_equilibria, Equilibrium, SearchBox};
use crate::integrator::{integrate_leg, Dir, EventKind, EventSpec, IntegrationError, Mode, SimPolicy, Simulator, Side};
use crate::numerics::{brent, geomspace};
use crate::pwsmodel::{Mechanism, PWSystem, SmoothPiece};

/// Return-map failures.
#[derive(Debug, Error)]
pub enum PoincareError {
    #[error("no return to the section: {0}")]
    NoReturn(String),
    #[error("return map undefined: {0}")]
    Undefined(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Which return is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    /// Full mechanism-appropriate return.
    Full,
    /// Orbit of the right piece from `(0, r)` back to `x = 0`.
    HalfRight,
    /// Orbit of the left piece from `(0, r)` back to `x = 0`.
    HalfLeft,
}

/// Bounding box of an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremes {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extremes {
    fn new(x: f64, y: f64) -> Self {
        Self { x_min: x, x_max: x, y_min: y, y_max: y }
    }

    fn add(&mut self, x: f64, y: f64) {
        self.x_min = self.x_min.min(x);
        self.x_max = self.x_max.max(x);
        self.y_min = self.y_min.min(y);
        self.y_max = self.y_max.max(y);
    }

    /// `max(x_max - x_min, y_max - y_min)`.
    pub fn diameter(&self) -> f64 {
        (self.x_max - self.x_min).max(self.y_max - self.y_min)
    }
}

/// One evaluation of a return map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Return {
    pub p: f64,
    pub t: f64,
    pub extremes: Extremes,
}

/// Budgets for a single return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnOptions {
    pub max_events: usize,
    pub t_max: f64,
    pub policy: SimPolicy,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        Self { max_events: 200, t_max: 1e3, policy: SimPolicy::default() }
    }
}

/// `(P(r), T(r))` for the given section.
pub fn poincare_numeric(
    sys: &PWSystem,
    section: Section,
    r: f64,
    mu: f64,
    max_events: usize,
) -> Result<(f64, f64), PoincareError> {
    let opts = ReturnOptions { max_events, ..ReturnOptions::default() };
    let ret = return_map(sys, section, r, mu, &opts)?;
    Ok((ret.p, ret.t))
}

/// Return map with extremes and explicit budgets.
pub fn return_map(sys: &PWSystem, section: Section, r: f64, mu: f64, opts: &ReturnOptions) -> Result<Return, PoincareError> {
    match section {
        Section::Full => full_return(sys, r, mu, opts),
        Section::HalfRight | Section::HalfLeft => {
            let (left, right) = sys
                .mechanism
                .two_pieces()
                .ok_or_else(|| PoincareError::Undefined(format!("{} system has no half maps", sys.mechanism.tag())))?;
            let (piece, side) = if section == Section::HalfRight { (right, Side::Right) } else { (left, Side::Left) };
            half_return(piece, side, r, mu, opts)
        }
    }
}

/// Orbit of one smooth piece from `(0, r)` to its next arrival at `x = 0`.
pub fn half_return(piece: &SmoothPiece, side: Side, r: f64, mu: f64, opts: &ReturnOptions) -> Result<Return, PoincareError> {
    let f = |s: &[f64; 2]| {
        let (a, b) = piece.eval(s[0], s[1], mu);
        [a, b]
    };
    let (dir, sign) = match side {
        Side::Right => (Dir::Falling, 1.0),
        Side::Left => (Dir::Rising, -1.0),
    };
    let fx = piece.eval(0.0, r, mu).0;
    if fx * sign <= 0.0 {
        return Err(PoincareError::Undefined(format!("orbit from (0, {r}) does not enter the {side:?} half-plane")));
    }
    let evs = [EventSpec::new(|s: &[f64; 2]| s[0], dir, sign)];
    let mut ext = Extremes::new(0.0, r);
    let mut h = 1e-3;
    let end = integrate_leg(&f, 0.0, [0.0, r], opts.t_max, &evs, &opts.policy.tol, &mut h, &mut |_, s| ext.add(s[0], s[1]))?;
    if end.event.is_none() {
        return Err(PoincareError::NoReturn(format!("no arrival at x = 0 within t = {}", opts.t_max)));
    }
    Ok(Return { p: end.y[1], t: end.t, extremes: ext })
}

fn full_return(sys: &PWSystem, r: f64, mu: f64, opts: &ReturnOptions) -> Result<Return, PoincareError> {
    let policy = opts.policy;
    let mut ext;
    let mut sim = match &sys.mechanism {
        Mechanism::Filippov { .. } | Mechanism::SqrtContinuous { .. } => {
            ext = Extremes::new(0.0, r);
            Simulator::new(sys, mu, (0.0, r), policy)?.0
        }
        Mechanism::Impact { reset, .. } => {
            ext = Extremes::new(0.0, r);
            let y = reset.eval(r, mu);
            ext.add(0.0, y);
            Simulator::with_mode(sys, mu, (0.0, y), Mode::Left, policy)
        }
        Mechanism::Impulse { radius, angle, .. } => {
            if r <= 0.0 {
                return Err(PoincareError::Undefined("impulsive section needs r > 0".into()));
            }
            ext = Extremes::new(0.0, r);
            let (rr, th) = (radius.eval(r, mu), angle.eval(r, mu));
            ext.add(rr * th.cos(), rr * th.sin());
            Simulator::with_mode(sys, mu, (rr * th.cos(), rr * th.sin()), Mode::Free, policy)
        }
        Mechanism::Hysteretic { .. } => {
            ext = Extremes::new(mu, r);
            Simulator::with_mode(sys, mu, (mu, r), Mode::Right, policy)
        }
        Mechanism::Delayed { .. } => {
            ext = Extremes::new(0.0, r);
            let mut s = Simulator::with_mode(sys, mu, (0.0, r), Mode::Left, policy);
            s.set_x_hint(1.0);
            s.schedule_switch(mu, Side::Right);
            s
        }
        Mechanism::FourQuadrant { .. } => {
            if r <= 0.0 {
                return Err(PoincareError::Undefined("four-quadrant section needs r > 0".into()));
            }
            ext = Extremes::new(0.0, r);
            Simulator::with_mode(sys, mu, (0.0, r), Mode::Quadrant(1), policy)
        }
    };
    let mut target = match sim.mode {
        Mode::Sliding => None,
        m => Some(m),
    };
    let is_delay = matches!(sys.mechanism, Mechanism::Delayed { .. });
    for _ in 0..opts.max_events {
        let out = sim.leg(opts.t_max, &mut |_, x, y| ext.add(x, y))?;
        for e in &out.events {
            match (&sys.mechanism, e.kind) {
                (_, EventKind::TwoFoldHalt) => return Err(PoincareError::NoReturn("orbit reached a two-fold".into())),
                (_, EventKind::ZenoStop) => return Err(PoincareError::NoReturn("impact cascade converged".into())),
                (Mechanism::Impact { .. }, EventKind::Impact) | (Mechanism::Impulse { .. }, EventKind::Impulse) => {
                    return Ok(Return { p: e.y, t: e.time, extremes: ext });
                }
                (_, EventKind::Crossing) if is_delay && sim.x_hint() > 0.0 => {
                    return Ok(Return { p: e.y, t: e.time, extremes: ext });
                }
                (_, EventKind::Switch | EventKind::FoldTangency) if !is_delay => {
                    if target.is_none() {
                        target = Some(e.to);
                    } else if Some(e.to) == target && e.time > 1e-9 {
                        return Ok(Return { p: e.y, t: e.time, extremes: ext });
                    }
                }
                _ => {}
            }
        }
        if out.stop.is_some() {
            return Err(PoincareError::NoReturn(format!("stopped ({:?}) at t = {} before returning", out.stop, sim.t)));
        }
    }
    Err(PoincareError::NoReturn(format!("event budget of {} used without return", opts.max_events)))
}

/// A fixed point of the return map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub r_star: f64,
    pub residual: f64,
    /// `dP/dr` at `r_star`.
    pub multiplier: f64,
    pub period: f64,
    pub extremes: Extremes,
    pub stable: bool,
}

/// Cycle search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleOptions {
    pub section: Section,
    /// Number of geometric scan points across the bracket.
    pub scan_points: usize,
    /// Preferred radius when several sign changes are found.
    pub hint: Option<f64>,
    pub ret: ReturnOptions,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self { section: Section::Full, scan_points: 24, hint: None, ret: ReturnOptions::default() }
    }
}

/// Fixed point of the full return map with `r` in `bracket`, found with default options.
pub fn find_limit_cycle(sys: &PWSystem, mu: f64, bracket: (f64, f64), tol: f64) -> Result<Option<FixedPoint>, PoincareError> {
    find_limit_cycle_with(sys, mu, bracket, tol, &CycleOptions::default())
}

/// Fixed point of the return map with `r` in `bracket`.
///
/// The bracket endpoints share a sign. The scan runs on `D(r)/r = (P(r) - r)/r`
/// so the trivial fixed point at `r = 0` is never selected. Returns `None` when
/// the displacement keeps one sign on the bracket.
pub fn find_limit_cycle_with(
    sys: &PWSystem,
    mu: f64,
    bracket: (f64, f64),
    tol: f64,
    opts: &CycleOptions,
) -> Result<Option<FixedPoint>, PoincareError> {
    let (a, b) = bracket;
    if a * b <= 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(PoincareError::Undefined(format!("bracket ({a}, {b}) must be nonzero with one sign")));
    }
    let sgn = a.signum();
    let (lo, hi) = (a.abs().min(b.abs()), a.abs().max(b.abs()));
    let grid = geomspace(lo, hi, opts.scan_points.max(2));
    let disp = |r: f64| -> Option<f64> { return_map(sys, opts.section, r, mu, &opts.ret).ok().map(|ret| (ret.p - r) / r) };
    let vals: Vec<(f64, Option<f64>)> = grid.iter().map(|&m| (sgn * m, disp(sgn * m))).collect();
    if vals.iter().all(|v| v.1.is_none()) {
        return Err(PoincareError::Undefined(format!("no return anywhere on ({a}, {b})")));
    }
    let mut changes = Vec::new();
    for w in vals.windows(2) {
        if let ((r0, Some(d0)), (r1, Some(d1))) = (w[0], w[1]) {
            if d0 == 0.0 {
                changes.push((r0, r0));
            } else if d0.signum() != d1.signum() {
                changes.push((r0, r1));
            }
        }
    }
    if let Some((r, Some(d))) = vals.last() {
        if *d == 0.0 {
            changes.push((*r, *r));
        }
    }
    let Some(&(r0, r1)) = (match opts.hint {
        Some(h) => changes.iter().min_by(|p, q| {
            let dp = ((p.0 + p.1) / 2.0 - h).abs();
            let dq = ((q.0 + q.1) / 2.0 - h).abs();
            dp.total_cmp(&dq)
        }),
        None => changes.first(),
    }) else {
        return Ok(None);
    };
    let r_star = if r0 == r1 {
        r0
    } else {
        brent::<PoincareError, _>(
            |r| Ok((return_map(sys, opts.section, r, mu, &opts.ret)?.p - r) / r),
            r0,
            r1,
            tol * r0.abs().min(r1.abs()),
            200,
        )?
        .map_err(|e| PoincareError::Undefined(e.to_string()))?
    };
    fixed_point_at(sys, mu, r_star, opts).map(Some)
}

/// Fixed-point data at a known root `r_star` of the displacement.
pub fn fixed_point_at(sys: &PWSystem, mu: f64, r_star: f64, opts: &CycleOptions) -> Result<FixedPoint, PoincareError> {
    let ret = return_map(sys, opts.section, r_star, mu, &opts.ret)?;
    let dr = 1e-5 * r_star.abs();
    let pp = return_map(sys, opts.section, r_star + dr, mu, &opts.ret)?.p;
    let pm = return_map(sys, opts.section, r_star - dr, mu, &opts.ret)?.p;
    let multiplier = (pp - pm) / (2.0 * dr);
    Ok(FixedPoint {
        r_star,
        residual: (ret.p - r_star).abs(),
        multiplier,
        period: ret.t,
        extremes: ret.extremes,
        stable: multiplier.abs() < 1.0,
    })
}

/// Stationary solutions and cycles at one parameter value.
#[derive(Debug, Clone, Serialize)]
pub struct DiagramPoint {
    pub mu: f64,
    pub equilibria: Vec<Equilibrium>,
    pub cycles: Vec<FixedPoint>,
    pub error: Option<String>,
}

/// Sweep settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub bracket: (f64, f64),
    pub tol: f64,
    pub search_box: SearchBox,
    pub cycle: CycleOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { bracket: (1e-4, 1.0), tol: 1e-10, search_box: SearchBox::around_origin(2.0), cycle: CycleOptions::default() }
    }
}

fn diagram_point(sys: &PWSystem, mu: f64, opts: &SweepOptions, hint: Option<f64>) -> DiagramPoint {
    let mut pt = DiagramPoint { mu, equilibria: Vec::new(), cycles: Vec::new(), error: None };
    let mut errs = Vec::new();
    match find_regular_equilibria(sys, opts.search_box, mu) {
        Ok(eqs) => pt.equilibria.extend(eqs.into_iter().filter(|e| e.admissible)),
        Err(e) => errs.push(e.to_string()),
    }
    if matches!(sys.mechanism, Mechanism::Filippov { .. }) {
        match find_pseudo_equilibria(sys, (opts.search_box.y0, opts.search_box.y1), mu) {
            Ok(eqs) => pt.equilibria.extend(eqs.into_iter().filter(|e| e.admissible)),
            Err(e) => errs.push(e.to_string()),
        }
    }
    let copts = CycleOptions { hint: hint.or(opts.cycle.hint), ..opts.cycle };
    match find_limit_cycle_with(sys, mu, opts.bracket, opts.tol, &copts) {
        Ok(Some(c)) => pt.cycles.push(c),
        Ok(None) => {}
        Err(e) => errs.push(e.to_string()),
    }
    if !errs.is_empty() {
        pt.error = Some(errs.join("; "));
    }
    pt
}

/// Classify stationary solutions and locate cycles across `mu_grid`.
///
/// Points are evaluated in parallel; points without a cycle are then retried
/// in order with the neighbouring cycle radius as the scan hint.
pub fn sweep_diagram(sys: &PWSystem, mu_grid: &[f64], opts: &SweepOptions) -> Vec<DiagramPoint> {
    let mut pts: Vec<DiagramPoint> = mu_grid.par_iter().map(|&mu| diagram_point(sys, mu, opts, None)).collect();
    for i in 1..pts.len() {
        if pts[i].cycles.is_empty() && pts[i].error.is_some() {
            if let Some(prev) = pts[i - 1].cycles.first() {
                let retry = diagram_point(sys, pts[i].mu, opts, Some(prev.r_star));
                if !retry.cycles.is_empty() {
                    pts[i] = retry;
                }
            }
        }
    }
    pts
}

/// Write a diagram as CSV with columns `mu, branch, value, stable`.
///
/// Equilibria contribute their `x` coordinate; cycles contribute `x_min` and `x_max`.
pub fn write_diagram_csv<W: Write>(pts: &[DiagramPoint], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["mu", "branch", "value", "stable"])?;
    for p in pts {
        let mu = format!("{:.12e}", p.mu);
        for (k, e) in p.equilibria.iter().enumerate() {
            wr.write_record([mu.clone(), format!("equilibrium_{k}"), format!("{:.12e}", e.x), e.stable.to_string()])?;
        }
        for (k, c) in p.cycles.iter().enumerate() {
            wr.write_record([mu.clone(), format!("cycle_{k}_x_min"), format!("{:.12e}", c.extremes.x_min), c.stable.to_string()])?;
            wr.write_record([mu.clone(), format!("cycle_{k}_x_max"), format!("{:.12e}", c.extremes.x_max), c.stable.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwsmodel::Poly;
    use crate::returnmaps::p_focus_series;

    fn focus_example() -> SmoothPiece {
        // x' = y - y^2, y' = -x
        SmoothPiece::poly(Poly::from_terms(&[(0, 1, 1.0), (0, 2, -1.0)]), Poly::from_terms(&[(1, 0, -1.0)]))
    }

    #[test]
    fn half_return_matches_focus_series() {
        let piece = focus_example();
        let t = piece.taylor(0.0).unwrap();
        for &r in &[0.2, 0.1, 0.05] {
            let ret = half_return(&piece, Side::Right, r, 0.0, &ReturnOptions::default()).unwrap();
            let (p, tt) = p_focus_series(&t, r).unwrap();
            // the series is exact through r^2
            assert!((ret.p - p).abs() < 2.0 * r * r * r, "r = {r}: {} vs {p}", ret.p);
            assert!((ret.t - tt).abs() < 4.0 * r);
        }
    }

    fn vdp_like(mu: f64) -> PWSystem {
        // smooth system written as two identical pieces: x' = y, y' = -x + (mu - x^2) y
        let f = Poly::from_terms(&[(0, 1, 1.0)]);
        let g = Poly::new(vec![
            crate::pwsmodel::Monomial::new(1, 0, -1.0),
            crate::pwsmodel::Monomial::linear_mu(0, 1, 0.0, 1.0),
            crate::pwsmodel::Monomial::new(2, 1, -1.0),
        ]);
        let p = SmoothPiece::poly(f, g);
        let mut sys = PWSystem::new("vdp_like", Mechanism::Filippov { left: p.clone(), right: p });
        sys.mu = mu;
        sys
    }

    #[test]
    fn van_der_pol_like_cycle_is_stable() {
        let sys = vdp_like(0.05);
        let fp = find_limit_cycle(&sys, 0.05, (1e-3, 2.0), 1e-10).unwrap().expect("cycle");
        // amplitude 2 sqrt(mu) to leading order
        assert!((fp.extremes.x_max - 2.0 * 0.05f64.sqrt()).abs() < 0.02);
        assert!(fp.stable && fp.residual < 1e-8);
        assert!((fp.period - 2.0 * std::f64::consts::PI).abs() < 0.05);
    }

    #[test]
    fn no_cycle_before_onset() {
        let sys = vdp_like(-0.05);
        assert!(find_limit_cycle(&sys, -0.05, (1e-3, 1.0), 1e-10).unwrap().is_none());
    }

    #[test]
    fn start_at_fixed_point_returns_to_itself() {
        let sys = vdp_like(0.05);
        let fp = find_limit_cycle(&sys, 0.05, (1e-3, 2.0), 1e-12).unwrap().unwrap();
        let (p, _) = poincare_numeric(&sys, Section::Full, fp.r_star, 0.05, 100).unwrap();
        assert!((p - fp.r_star).abs() < 1e-9);
    }

    #[test]
    fn empty_sweep() {
        assert!(sweep_diagram(&vdp_like(0.0), &[], &SweepOptions::default()).is_empty());
    }

    #[test]
    fn sweep_marks_cycle_side() {
        let sys = vdp_like(0.0);
        let opts = SweepOptions { bracket: (1e-3, 2.0), ..SweepOptions::default() };
        let pts = sweep_diagram(&sys, &[-0.04, 0.04], &opts);
        assert!(pts[0].cycles.is_empty());
        assert_eq!(pts[1].cycles.len(), 1);
        let mut buf = Vec::new();
        write_diagram_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("mu,branch,value,stable"));
    }
}
