//! Event-driven simulation of piecewise-smooth systems.
//!
//! Smooth legs use a Dormand-Prince 5(4) pair with dense output. Switching
//! events are bracketed on the dense output and polished on a fresh Runge-Kutta
//! step from the start of the accepted step.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{sliding_field_pieces, GeometryError};
use crate::numerics::brent;
use crate::pwsmodel::{Mechanism, PWSystem, SmoothPiece};

/// Integration failures.
#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepCollapse { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    MaxSteps(usize),
    #[error("event location failed: {0}")]
    EventLocation(String),
    #[error("event budget of {0} exceeded")]
    EventBudget(usize),
    #[error("state left the bounded region at t = {0}")]
    Blowup(f64),
    #[error("invalid start: {0}")]
    BadStart(String),
    #[error("sliding along an axis of a four-quadrant system at ({x}, {y})")]
    AxisSliding { x: f64, y: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

impl Tolerances {
    /// Tolerances with `rtol = tol`, `atol = tol/100`.
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol * 1e-2, ..Self::default() }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type Rhs<'a, const N: usize> = dyn Fn(&[f64; N]) -> [f64; N] + 'a;

fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

struct RkStep<const N: usize> {
    y: [f64; N],
    k: [[f64; N]; 7],
    err: [f64; N],
}

fn rk_step<const N: usize>(f: &Rhs<N>, y: &[f64; N], k1: &[f64; N], h: f64) -> RkStep<N> {
    let k2 = f(&lin(y, h, &[(A21, k1)]));
    let k3 = f(&lin(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(&lin(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(&lin(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(&lin(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y5 = lin(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(&y5);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    let _ = (C2, C3, C4, C5);
    RkStep { y: y5, k: [*k1, k2, k3, k4, k5, k6, k7], err }
}

/// Dense output of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rc: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    fn new(t0: f64, h: f64, y0: &[f64; N], st: &RkStep<N>) -> Self {
        let mut rc = [[0.0; N]; 5];
        let k = &st.k;
        for i in 0..N {
            let ydiff = st.y[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            rc[0][i] = y0[i];
            rc[1][i] = ydiff;
            rc[2][i] = bspl;
            rc[3][i] = ydiff - h * k[6][i] - bspl;
            rc[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        Self { t0, h, rc }
    }

    /// State at time `t` inside the step.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        for i in 0..N {
            let r = &self.rc;
            out[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        out
    }
}

/// Crossing direction that triggers an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dir {
    Rising,
    Falling,
    Either,
}

/// Scalar event function on the state.
pub(crate) struct EventSpec<'a, const N: usize> {
    pub g: Box<dyn Fn(&[f64; N]) -> f64 + 'a>,
    pub dir: Dir,
    /// Sign assumed when the leg starts on the event surface.
    pub start_sign: f64,
}

impl<'a, const N: usize> EventSpec<'a, N> {
    pub fn new(g: impl Fn(&[f64; N]) -> f64 + 'a, dir: Dir, start_sign: f64) -> Self {
        Self { g: Box::new(g), dir, start_sign }
    }
}

pub(crate) struct LegEnd<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub event: Option<usize>,
}

fn err_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: &Tolerances) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        s += (err[i] / sc).powi(2);
    }
    (s / N as f64).sqrt()
}

const SUBSAMPLES: usize = 4;

/// Integrate `y' = f(y)` from `(t0, y0)` until `t_end` or the first event.
///
/// `obs` receives dense samples at quarter steps (including the final state).
/// `h` carries the step size between legs.
pub(crate) fn integrate_leg<const N: usize>(
    f: &Rhs<N>,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    events: &[EventSpec<'_, N>],
    tol: &Tolerances,
    h: &mut f64,
    obs: &mut dyn FnMut(f64, &[f64; N]),
) -> Result<LegEnd<N>, IntegrationError> {
    let (mut t, mut y) = (t0, y0);
    if !(t < t_end) {
        return Ok(LegEnd { t, y, event: None });
    }
    let mut k1 = f(&y);
    let surface_tol = |v: &[f64; N]| 1e-13 * (1.0 + v.iter().fold(0.0f64, |m, c| m.max(c.abs())));
    let mut signs: Vec<f64> = events
        .iter()
        .map(|e| {
            let gv = (e.g)(&y);
            if gv.abs() <= surface_tol(&y) {
                e.start_sign
            } else {
                gv.signum()
            }
        })
        .collect();
    if !h.is_finite() || *h <= 0.0 {
        *h = 1e-3;
    }
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > tol.max_steps {
            return Err(IntegrationError::MaxSteps(tol.max_steps));
        }
        let remaining = t_end - t;
        let hh = h.min(tol.h_max).min(remaining);
        let st = rk_step(f, &y, &k1, hh);
        let en = err_norm(&st.err, &y, &st.y, tol);
        if !en.is_finite() || en > 1.0 {
            let fac = if en.is_finite() { (0.9 * en.powf(-0.2)).max(0.2) } else { 0.1 };
            *h = hh * fac;
            if *h < 1e-14 * (1.0 + t.abs()) {
                return Err(IntegrationError::StepCollapse { t, h: *h });
            }
            continue;
        }
        let dense = DenseStep::new(t, hh, &y, &st);
        let t_new = if hh == remaining { t_end } else { t + hh };
        // event scan on quarter-step samples
        let mut best: Option<(f64, usize, f64, f64, f64)> = None;
        for (idx, e) in events.iter().enumerate() {
            let mut s_prev = signs[idx];
            let mut ta = t;
            for m in 1..=SUBSAMPLES {
                let tb = if m == SUBSAMPLES { t_new } else { t + hh * m as f64 / SUBSAMPLES as f64 };
                let yb = if m == SUBSAMPLES { st.y } else { dense.eval(tb) };
                let gb = (e.g)(&yb);
                if gb == 0.0 || gb.signum() != s_prev {
                    let ok = match e.dir {
                        Dir::Rising => s_prev < 0.0,
                        Dir::Falling => s_prev > 0.0,
                        Dir::Either => true,
                    };
                    if ok {
                        if best.map_or(true, |b| tb < b.0) {
                            best = Some((tb, idx, ta, tb, s_prev));
                        }
                        break;
                    }
                    if gb != 0.0 {
                        s_prev = gb.signum();
                    }
                }
                ta = tb;
            }
        }
        if let Some((_, idx, ta, tb, s_prev)) = best {
            let ga = (events[idx].g)(&dense.eval(ta));
            if ta == t && (ga == 0.0 || ga.signum() != s_prev) && hh > 1e-13 * (1.0 + t.abs()) {
                // leg starts on the surface and the excursion is shorter than a quarter step
                *h = hh / 16.0;
                continue;
            }
            let root = locate(f, &dense, &y, &k1, t, ta, tb, &*events[idx].g)?;
            let ye = if root == t { y } else { rk_step(f, &y, &k1, root - t).y };
            for m in 1..SUBSAMPLES {
                let ts = t + (root - t) * m as f64 / SUBSAMPLES as f64;
                obs(ts, &dense.eval(ts));
            }
            obs(root, &ye);
            return Ok(LegEnd { t: root, y: ye, event: Some(idx) });
        }
        for m in 1..SUBSAMPLES {
            let ts = t + hh * m as f64 / SUBSAMPLES as f64;
            obs(ts, &dense.eval(ts));
        }
        obs(t_new, &st.y);
        for (idx, e) in events.iter().enumerate() {
            let gv = (e.g)(&st.y);
            if gv != 0.0 {
                signs[idx] = gv.signum();
            }
        }
        t = t_new;
        y = st.y;
        k1 = st.k[6];
        if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return Err(IntegrationError::Blowup(t));
        }
        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        *h = hh * fac;
        if t >= t_end {
            return Ok(LegEnd { t, y, event: None });
        }
    }
}

/// Root of `g` on `[ta, tb]`: Brent on the dense output, then polished on
/// exact Runge-Kutta steps from `(t0, y0)`.
#[allow(clippy::too_many_arguments)]
fn locate<const N: usize>(
    f: &Rhs<N>,
    dense: &DenseStep<N>,
    y0: &[f64; N],
    k1: &[f64; N],
    t0: f64,
    ta: f64,
    tb: f64,
    g: &dyn Fn(&[f64; N]) -> f64,
) -> Result<f64, IntegrationError> {
    let gd = |t: f64| g(&dense.eval(t));
    let (ga, gb) = (gd(ta), gd(tb));
    if gb == 0.0 {
        return Ok(tb);
    }
    if ga.signum() == gb.signum() || ga == 0.0 {
        // the surface was left in the wrong direction at the start of the leg
        return Ok(ta);
    }
    let tau = brent::<IntegrationError, _>(|t| Ok(gd(t)), ta, tb, 1e-15 * (1.0 + t0.abs()), 200)?
        .map_err(|e| IntegrationError::EventLocation(e.to_string()))?;
    let ge = |t: f64| if t == t0 { g(y0) } else { g(&rk_step(f, y0, k1, t - t0).y) };
    let width = tb - ta;
    let mut delta = 1e-6 * width;
    while delta <= width {
        let (lo, hi) = ((tau - delta).max(ta), (tau + delta).min(tb));
        let (gl, gh) = (ge(lo), ge(hi));
        if gl == 0.0 {
            return Ok(lo);
        }
        if gh == 0.0 {
            return Ok(hi);
        }
        if gl.signum() != gh.signum() {
            if let Ok(Ok(r)) = brent::<IntegrationError, _>(|t| Ok(ge(t)), lo, hi, 1e-16 * (1.0 + t0.abs()), 200) {
                return Ok(r);
            }
            break;
        }
        delta *= 10.0;
    }
    Ok(tau)
}

/// Half-plane side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Which field currently governs the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Left,
    Right,
    Sliding,
    /// The single field of an impulsive system.
    Free,
    /// Quadrant piece `1..=4`, clockwise from `x > 0, y > 0`.
    Quadrant(u8),
}

impl Mode {
    fn side(self) -> Option<Side> {
        match self {
            Mode::Left => Some(Side::Left),
            Mode::Right => Some(Side::Right),
            _ => None,
        }
    }

    fn from_side(s: Side) -> Self {
        match s {
            Side::Left => Mode::Left,
            Side::Right => Mode::Right,
        }
    }
}

/// Segment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SegmentKind {
    FlowL,
    FlowR,
    Flow,
    FlowQuadrant(u8),
    Sliding,
    Reset,
    Impulse,
}

impl SegmentKind {
    /// CSV label.
    pub fn label(&self) -> String {
        match self {
            SegmentKind::FlowL => "flow_L".into(),
            SegmentKind::FlowR => "flow_R".into(),
            SegmentKind::Flow => "flow".into(),
            SegmentKind::FlowQuadrant(j) => format!("flow_quadrant_{j}"),
            SegmentKind::Sliding => "sliding".into(),
            SegmentKind::Reset => "reset".into(),
            SegmentKind::Impulse => "impulse".into(),
        }
    }
}

/// Trajectory event label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Change of governing piece.
    Switch,
    /// Sliding ends at a tangency of one piece.
    FoldTangency,
    /// Arrival at the impact surface; the reset follows.
    Impact,
    /// Arrival at the positive y-axis; the impulse follows.
    Impulse,
    /// Impact cascade truncated.
    ZenoStop,
    /// Arrival in an attracting sliding region.
    SlidingEntry,
    /// Start inside a repelling sliding region; the exit side is a policy choice.
    RepellingExit,
    /// Zero of `x` that schedules a delayed switch.
    Crossing,
    /// Two delayed switches closer together than the lag.
    DelayViolation,
    /// Two-fold reached; the simulation halts.
    TwoFoldHalt,
}

/// A located event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajEvent {
    pub time: f64,
    pub kind: EventKind,
    pub x: f64,
    pub y: f64,
    /// Mode that governs the state after the event.
    pub to: Mode,
}

/// Contiguous piece of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub t_start: f64,
    pub t_end: f64,
    /// `(t, x, y)` samples.
    pub samples: Vec<(f64, f64, f64)>,
}

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TimeLimit,
    Zeno,
    TwoFold,
    Origin,
}

/// Labelled orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub events: Vec<TrajEvent>,
    pub final_time: f64,
    pub final_state: (f64, f64),
    pub stop: StopReason,
}

impl Trajectory {
    /// Write CSV with columns `t, x, y, segment_kind, event`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IntegrationError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "y", "segment_kind", "event"])?;
        let mut ev = self.events.iter().peekable();
        for seg in &self.segments {
            let label = seg.kind.label();
            for &(t, x, y) in &seg.samples {
                while let Some(e) = ev.peek() {
                    if e.time > t {
                        break;
                    }
                    wr.write_record([fmt(e.time), fmt(e.x), fmt(e.y), label.clone(), event_label(e.kind)])?;
                    ev.next();
                }
                wr.write_record([fmt(t), fmt(x), fmt(y), label.clone(), String::new()])?;
            }
        }
        for e in ev {
            wr.write_record([fmt(e.time), fmt(e.x), fmt(e.y), String::new(), event_label(e.kind)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn event_label(k: EventKind) -> String {
    serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimPolicy {
    pub tol: Tolerances,
    /// Exit side when starting inside a repelling sliding region.
    pub repelling_exit: Side,
    /// Maximum number of recorded events.
    pub events_max: usize,
    /// Impact speed below which the cascade is truncated.
    pub zeno_speed: f64,
    /// Maximum number of resets.
    pub max_resets: usize,
}

impl Default for SimPolicy {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            repelling_exit: Side::Right,
            events_max: 100_000,
            zeno_speed: 1e-10,
            max_resets: 1_000_000,
        }
    }
}

/// Result of advancing the simulator over one leg.
#[derive(Debug, Clone)]
pub struct LegOutcome {
    pub kind: SegmentKind,
    pub t_start: f64,
    pub t_end: f64,
    pub events: Vec<TrajEvent>,
    pub stop: Option<StopReason>,
}

/// Stateful simulator: one instance owns one orbit.
pub struct Simulator<'a> {
    sys: &'a PWSystem,
    mu: f64,
    policy: SimPolicy,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub mode: Mode,
    h: f64,
    resets: usize,
    stalls: usize,
    pending: VecDeque<(f64, Side)>,
    last_switch: f64,
    x_hint: f64,
}

/// Start-up events produced while resolving the initial mode.
pub type StartEvents = Vec<TrajEvent>;

impl<'a> Simulator<'a> {
    /// Simulator at `state` with the governing mode inferred from position.
    pub fn new(sys: &'a PWSystem, mu: f64, state: (f64, f64), policy: SimPolicy) -> Result<(Self, StartEvents), IntegrationError> {
        let (x, y) = state;
        let mut events = Vec::new();
        let mode = match &sys.mechanism {
            Mechanism::Filippov { left, right } => {
                if x < 0.0 {
                    Mode::Left
                } else if x > 0.0 {
                    Mode::Right
                } else {
                    let (fl, fr) = (left.eval(0.0, y, mu).0, right.eval(0.0, y, mu).0);
                    if fl > 0.0 && fr > 0.0 {
                        Mode::Right
                    } else if fl < 0.0 && fr < 0.0 {
                        Mode::Left
                    } else if fl >= 0.0 && fr <= 0.0 {
                        Mode::Sliding
                    } else {
                        let m = Mode::from_side(policy.repelling_exit);
                        events.push(TrajEvent { time: 0.0, kind: EventKind::RepellingExit, x, y, to: m });
                        m
                    }
                }
            }
            Mechanism::Impact { .. } => {
                if x > 0.0 {
                    return Err(IntegrationError::BadStart(format!("impact system starts at x = {x} > 0")));
                }
                Mode::Left
            }
            Mechanism::Impulse { .. } => Mode::Free,
            Mechanism::Hysteretic { .. } | Mechanism::Delayed { .. } => {
                if x < 0.0 {
                    Mode::Left
                } else {
                    Mode::Right
                }
            }
            Mechanism::FourQuadrant { .. } => Mode::Quadrant(quadrant_of(x, y)),
            Mechanism::SqrtContinuous { field } => {
                if x < 0.0 || (x == 0.0 && field.eval3(0.0, y, 0.0, mu).0 < 0.0) {
                    Mode::Left
                } else {
                    Mode::Right
                }
            }
        };
        Ok((Self::with_mode(sys, mu, state, mode, policy), events))
    }

    /// Simulator with an explicit initial mode.
    pub fn with_mode(sys: &'a PWSystem, mu: f64, state: (f64, f64), mode: Mode, policy: SimPolicy) -> Self {
        let x_hint = match mode {
            Mode::Left => -1.0,
            _ => 1.0,
        };
        Self {
            sys,
            mu,
            policy,
            t: 0.0,
            x: state.0,
            y: state.1,
            mode,
            h: 1e-3,
            resets: 0,
            stalls: 0,
            pending: VecDeque::new(),
            last_switch: f64::NEG_INFINITY,
            x_hint,
        }
    }

    /// Schedule a delayed switch to `side` at time `at`.
    pub fn schedule_switch(&mut self, at: f64, side: Side) {
        self.pending.push_back((at, side));
    }

    /// Set the time of the most recent delayed switch.
    pub fn set_last_switch(&mut self, t: f64) {
        self.last_switch = t;
    }

    /// Position relative to the surface used when a leg starts on `x = 0`.
    pub fn set_x_hint(&mut self, s: f64) {
        self.x_hint = s;
    }

    /// Side of `x = 0` the state is on or about to enter (`+1` or `-1`).
    pub fn x_hint(&self) -> f64 {
        self.x_hint
    }

    fn ev(&self, kind: EventKind, to: Mode) -> TrajEvent {
        TrajEvent { time: self.t, kind, x: self.x, y: self.y, to }
    }

    /// Advance over one leg, stopping at the next event or at `t_limit`.
    pub fn leg(&mut self, t_limit: f64, obs: &mut dyn FnMut(f64, f64, f64)) -> Result<LegOutcome, IntegrationError> {
        let t_start = self.t;
        let out = match &self.sys.mechanism {
            Mechanism::Filippov { left, right } => self.leg_filippov(left, right, t_limit, obs),
            Mechanism::Impact { field, reset } => self.leg_impact(field, reset, t_limit, obs),
            Mechanism::Impulse { field, radius, angle } => self.leg_impulse(field, radius, angle, t_limit, obs),
            Mechanism::Hysteretic { left, right } => self.leg_hysteretic(left, right, t_limit, obs),
            Mechanism::Delayed { left, right } => self.leg_delayed(left, right, t_limit, obs),
            Mechanism::FourQuadrant { pieces } => self.leg_quadrant(pieces, t_limit, obs),
            Mechanism::SqrtContinuous { field } => self.leg_sqrt(field, t_limit, obs),
        }?;
        if out.t_end <= t_start && out.stop.is_none() {
            self.stalls += 1;
            if self.stalls > 8 {
                return Err(IntegrationError::EventLocation(format!(
                    "no progress at t = {} near ({}, {})",
                    self.t, self.x, self.y
                )));
            }
        } else {
            self.stalls = 0;
        }
        Ok(out)
    }

    fn flow2(
        &mut self,
        piece: &SmoothPiece,
        t_limit: f64,
        events: &[EventSpec<'_, 2>],
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<Option<usize>, IntegrationError> {
        let mu = self.mu;
        let f = |s: &[f64; 2]| {
            let (a, b) = piece.eval(s[0], s[1], mu);
            [a, b]
        };
        let end = integrate_leg(&f, self.t, [self.x, self.y], t_limit, events, &self.policy.tol, &mut self.h, &mut |t, s| {
            obs(t, s[0], s[1])
        })?;
        self.t = end.t;
        self.x = end.y[0];
        self.y = end.y[1];
        Ok(end.event)
    }

    fn outcome(&self, kind: SegmentKind, t_start: f64, events: Vec<TrajEvent>, stop: Option<StopReason>) -> LegOutcome {
        LegOutcome { kind, t_start, t_end: self.t, events, stop }
    }

    fn leg_filippov(
        &mut self,
        left: &SmoothPiece,
        right: &SmoothPiece,
        t_limit: f64,
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let mu = self.mu;
        match self.mode {
            Mode::Left | Mode::Right => {
                let left_side = self.mode == Mode::Left;
                let (piece, dir, sign) = if left_side { (left, Dir::Rising, -1.0) } else { (right, Dir::Falling, 1.0) };
                let evs = [EventSpec::new(|s: &[f64; 2]| s[0], dir, sign)];
                let kind = if left_side { SegmentKind::FlowL } else { SegmentKind::FlowR };
                let hit = self.flow2(piece, t_limit, &evs, obs)?;
                if hit.is_none() {
                    return Ok(self.outcome(kind, t0, vec![], Some(StopReason::TimeLimit)));
                }
                self.x = 0.0;
                let other = if left_side { right } else { left };
                let fo = other.eval(0.0, self.y, mu).0;
                // crossing when the other field continues in the same direction
                let crosses = if left_side { fo > 0.0 } else { fo < 0.0 };
                let e = if crosses {
                    self.mode = if left_side { Mode::Right } else { Mode::Left };
                    self.ev(EventKind::Switch, self.mode)
                } else {
                    let fs = piece.eval(0.0, self.y, mu).0;
                    if fs.abs() < 1e-12 && fo.abs() < 1e-12 {
                        let e = self.ev(EventKind::TwoFoldHalt, Mode::Sliding);
                        return Ok(self.outcome(kind, t0, vec![e], Some(StopReason::TwoFold)));
                    }
                    self.mode = Mode::Sliding;
                    self.ev(EventKind::SlidingEntry, Mode::Sliding)
                };
                Ok(self.outcome(kind, t0, vec![e], None))
            }
            Mode::Sliding => {
                let gs = |s: &[f64; 2]| {
                    let v = sliding_field_pieces(left, right, s[1], mu).unwrap_or(0.0);
                    [0.0, v]
                };
                let evs = [
                    EventSpec::new(|s: &[f64; 2]| left.eval(0.0, s[1], mu).0, Dir::Falling, 1.0),
                    EventSpec::new(|s: &[f64; 2]| right.eval(0.0, s[1], mu).0, Dir::Rising, -1.0),
                ];
                let end = integrate_leg(&gs, self.t, [0.0, self.y], t_limit, &evs, &self.policy.tol, &mut self.h, &mut |t, s| {
                    obs(t, s[0], s[1])
                })?;
                self.t = end.t;
                self.x = 0.0;
                self.y = end.y[1];
                let Some(idx) = end.event else {
                    return Ok(self.outcome(SegmentKind::Sliding, t0, vec![], Some(StopReason::TimeLimit)));
                };
                let (fl, fr) = (left.eval(0.0, self.y, mu).0, right.eval(0.0, self.y, mu).0);
                if fl.abs() < 1e-10 && fr.abs() < 1e-10 {
                    let e = self.ev(EventKind::TwoFoldHalt, Mode::Sliding);
                    return Ok(self.outcome(SegmentKind::Sliding, t0, vec![e], Some(StopReason::TwoFold)));
                }
                self.mode = if idx == 0 { Mode::Left } else { Mode::Right };
                let e = self.ev(EventKind::FoldTangency, self.mode);
                Ok(self.outcome(SegmentKind::Sliding, t0, vec![e], None))
            }
            m => Err(IntegrationError::BadStart(format!("mode {m:?} invalid for a Filippov system"))),
        }
    }

    fn leg_impact(
        &mut self,
        field: &SmoothPiece,
        reset: &crate::pwsmodel::ScalarMap,
        t_limit: f64,
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let evs = [EventSpec::new(|s: &[f64; 2]| s[0], Dir::Rising, -1.0)];
        let hit = self.flow2(field, t_limit, &evs, obs)?;
        if hit.is_none() {
            return Ok(self.outcome(SegmentKind::FlowL, t0, vec![], Some(StopReason::TimeLimit)));
        }
        self.x = 0.0;
        let arrival = self.ev(EventKind::Impact, Mode::Left);
        if self.y.abs() < self.policy.zeno_speed || self.resets >= self.policy.max_resets {
            let z = self.ev(EventKind::ZenoStop, Mode::Left);
            return Ok(self.outcome(SegmentKind::FlowL, t0, vec![arrival, z], Some(StopReason::Zeno)));
        }
        self.resets += 1;
        self.y = reset.eval(self.y, self.mu);
        Ok(self.outcome(SegmentKind::FlowL, t0, vec![arrival], None))
    }

    fn leg_impulse(
        &mut self,
        field: &SmoothPiece,
        radius: &crate::pwsmodel::ScalarMap,
        angle: &crate::pwsmodel::ScalarMap,
        t_limit: f64,
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let sign = if self.x == 0.0 { -1.0 } else { self.x.signum() };
        // only crossings of the positive y-axis trigger the impulse
        let evs = [EventSpec::new(|s: &[f64; 2]| if s[1] > 0.0 { s[0] } else { -1.0 }, Dir::Rising, sign)];
        let hit = self.flow2(field, t_limit, &evs, obs)?;
        if hit.is_none() {
            return Ok(self.outcome(SegmentKind::Flow, t0, vec![], Some(StopReason::TimeLimit)));
        }
        self.x = 0.0;
        let e = self.ev(EventKind::Impulse, Mode::Free);
        let (r, th) = (radius.eval(self.y, self.mu), angle.eval(self.y, self.mu));
        self.x = r * th.cos();
        self.y = r * th.sin();
        self.resets += 1;
        Ok(self.outcome(SegmentKind::Flow, t0, vec![e], None))
    }

    fn leg_hysteretic(
        &mut self,
        left: &SmoothPiece,
        right: &SmoothPiece,
        t_limit: f64,
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let mu = self.mu;
        let left_side = match self.mode {
            Mode::Left => true,
            Mode::Right => false,
            m => return Err(IntegrationError::BadStart(format!("mode {m:?} invalid for hysteresis"))),
        };
        let (piece, kind) = if left_side { (left, SegmentKind::FlowL) } else { (right, SegmentKind::FlowR) };
        let evs = if left_side {
            [EventSpec::new(move |s: &[f64; 2]| s[0] - mu, Dir::Rising, -1.0)]
        } else {
            [EventSpec::new(move |s: &[f64; 2]| s[0] + mu, Dir::Falling, 1.0)]
        };
        let hit = self.flow2(piece, t_limit, &evs, obs)?;
        if hit.is_none() {
            return Ok(self.outcome(kind, t0, vec![], Some(StopReason::TimeLimit)));
        }
        self.x = if left_side { mu } else { -mu };
        self.mode = if left_side { Mode::Right } else { Mode::Left };
        let e = self.ev(EventKind::Switch, self.mode);
        Ok(self.outcome(kind, t0, vec![e], None))
    }

    fn leg_delayed(
        &mut self,
        left: &SmoothPiece,
        right: &SmoothPiece,
        t_limit: f64,
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let mu = self.mu;
        let active = self.mode.side().ok_or_else(|| IntegrationError::BadStart("delayed system needs mode Left or Right".into()))?;
        let (piece, kind) = match active {
            Side::Left => (left, SegmentKind::FlowL),
            Side::Right => (right, SegmentKind::FlowR),
        };
        let next = self.pending.front().map(|p| p.0).unwrap_or(f64::INFINITY);
        let t_end = t_limit.min(next);
        let sign = if self.x == 0.0 { self.x_hint } else { self.x.signum() };
        let evs = [EventSpec::new(|s: &[f64; 2]| s[0], Dir::Either, sign)];
        let hit = self.flow2(piece, t_end, &evs, obs)?;
        if hit.is_some() {
            let up = sign < 0.0;
            self.x = 0.0;
            self.x_hint = if up { 1.0 } else { -1.0 };
            let side = if up { Side::Right } else { Side::Left };
            self.pending.push_back((self.t + mu, side));
            let e = self.ev(EventKind::Crossing, self.mode);
            return Ok(self.outcome(kind, t0, vec![e], None));
        }
        if self.t >= next && next <= t_limit {
            let (_, side) = self.pending.pop_front().expect("pending switch");
            let mut events = Vec::new();
            if self.t - self.last_switch < mu * (1.0 - 1e-9) {
                events.push(self.ev(EventKind::DelayViolation, self.mode));
            }
            self.last_switch = self.t;
            let new_mode = Mode::from_side(side);
            if new_mode != self.mode {
                self.mode = new_mode;
                events.push(self.ev(EventKind::Switch, self.mode));
            }
            if self.x != 0.0 {
                self.x_hint = self.x.signum();
            }
            return Ok(self.outcome(kind, t0, events, None));
        }
        Ok(self.outcome(kind, t0, vec![], Some(StopReason::TimeLimit)))
    }

    fn leg_quadrant(
        &mut self,
        pieces: &[SmoothPiece; 4],
        t_limit: f64,
        obs: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let Mode::Quadrant(q) = self.mode else {
            return Err(IntegrationError::BadStart("four-quadrant system needs a quadrant mode".into()));
        };
        let (sx, sy) = quadrant_signs(q);
        let evs = [
            EventSpec::new(|s: &[f64; 2]| s[0], Dir::Either, sx),
            EventSpec::new(|s: &[f64; 2]| s[1], Dir::Either, sy),
        ];
        let kind = SegmentKind::FlowQuadrant(q);
        let hit = self.flow2(&pieces[(q - 1) as usize], t_limit, &evs, obs)?;
        let Some(idx) = hit else {
            return Ok(self.outcome(kind, t0, vec![], Some(StopReason::TimeLimit)));
        };
        let (nx, ny) = if idx == 0 {
            self.x = 0.0;
            (-sx, sy)
        } else {
            self.y = 0.0;
            (sx, -sy)
        };
        if self.x.abs() < 1e-14 && self.y.abs() < 1e-14 {
            let e = self.ev(EventKind::Switch, self.mode);
            return Ok(self.outcome(kind, t0, vec![e], Some(StopReason::Origin)));
        }
        let nq = quadrant_of(nx, ny);
        let (f, g) = pieces[(nq - 1) as usize].eval(self.x, self.y, self.mu);
        let into = if idx == 0 { f * nx > 0.0 } else { g * ny > 0.0 };
        if !into {
            return Err(IntegrationError::AxisSliding { x: self.x, y: self.y });
        }
        self.mode = Mode::Quadrant(nq);
        let e = self.ev(EventKind::Switch, self.mode);
        Ok(self.outcome(kind, t0, vec![e], None))
    }

    fn leg_sqrt(&mut self, field: &SmoothPiece, t_limit: f64, obs: &mut dyn FnMut(f64, f64, f64)) -> Result<LegOutcome, IntegrationError> {
        let t0 = self.t;
        let mu = self.mu;
        match self.mode {
            Mode::Left => {
                let left = SmoothPiece::func(std::sync::Arc::new({
                    let field = field.clone();
                    move |x, y, _z, m| field.eval3(x, y, 0.0, m)
                }));
                let evs = [EventSpec::new(|s: &[f64; 2]| s[0], Dir::Rising, -1.0)];
                let hit = self.flow2(&left, t_limit, &evs, obs)?;
                if hit.is_none() {
                    return Ok(self.outcome(SegmentKind::FlowL, t0, vec![], Some(StopReason::TimeLimit)));
                }
                self.x = 0.0;
                self.mode = Mode::Right;
                let e = self.ev(EventKind::Switch, Mode::Right);
                Ok(self.outcome(SegmentKind::FlowL, t0, vec![e], None))
            }
            Mode::Right => {
                // u = sqrt(x) and dt = 2u ds remove the singular derivative at x = 0+
                let f = |s: &[f64; 3]| {
                    let u = s[0].max(0.0);
                    let (a, b) = field.eval3(u * u, s[1], u, mu);
                    [a, 2.0 * u * b, 2.0 * u]
                };
                let evs = [
                    EventSpec::new(|s: &[f64; 3]| s[0], Dir::Falling, 1.0),
                    EventSpec::new(move |s: &[f64; 3]| s[2] - t_limit, Dir::Rising, -1.0),
                ];
                let u0 = self.x.max(0.0).sqrt();
                let mut hs = self.h;
                let end = integrate_leg(&f, 0.0, [u0, self.y, self.t], f64::INFINITY, &evs, &self.policy.tol, &mut hs, &mut |_s, st| {
                    obs(st[2], st[0] * st[0], st[1])
                })?;
                self.h = hs;
                self.t = end.y[2];
                self.x = end.y[0] * end.y[0];
                self.y = end.y[1];
                match end.event {
                    Some(0) => {
                        self.x = 0.0;
                        self.mode = Mode::Left;
                        let e = self.ev(EventKind::Switch, Mode::Left);
                        Ok(self.outcome(SegmentKind::FlowR, t0, vec![e], None))
                    }
                    _ => {
                        self.t = t_limit;
                        Ok(self.outcome(SegmentKind::FlowR, t0, vec![], Some(StopReason::TimeLimit)))
                    }
                }
            }
            m => Err(IntegrationError::BadStart(format!("mode {m:?} invalid for a square-root system"))),
        }
    }
}

fn quadrant_of(x: f64, y: f64) -> u8 {
    match (x >= 0.0, y >= 0.0) {
        (true, true) => 1,
        (true, false) => 2,
        (false, false) => 3,
        (false, true) => 4,
    }
}

fn quadrant_signs(q: u8) -> (f64, f64) {
    match q {
        1 => (1.0, 1.0),
        2 => (1.0, -1.0),
        3 => (-1.0, -1.0),
        _ => (-1.0, 1.0),
    }
}

/// Dense solution of one smooth piece over a time interval.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub steps: Vec<DenseStep<2>>,
    pub t_end: f64,
    pub y_end: [f64; 2],
}

impl DenseSolution {
    /// State at time `t` within the solved interval.
    pub fn eval(&self, t: f64) -> [f64; 2] {
        if t >= self.t_end || self.steps.is_empty() {
            return self.y_end;
        }
        let i = self.steps.partition_point(|s| s.t0 + s.h < t);
        self.steps[i.min(self.steps.len() - 1)].eval(t)
    }
}

/// Integrate a single smooth piece for time `dt` with dense output.
pub fn flow_piece(piece: &SmoothPiece, mu: f64, state: (f64, f64), dt: f64, tol: &Tolerances) -> Result<DenseSolution, IntegrationError> {
    let f = |s: &[f64; 2]| {
        let (a, b) = piece.eval(s[0], s[1], mu);
        [a, b]
    };
    let mut y = [state.0, state.1];
    let mut t = 0.0;
    let mut h: f64 = 1e-3;
    let mut steps = Vec::new();
    let mut k1 = f(&y);
    let mut n = 0;
    while t < dt {
        n += 1;
        if n > tol.max_steps {
            return Err(IntegrationError::MaxSteps(tol.max_steps));
        }
        let hh = h.min(dt - t).min(tol.h_max);
        let st = rk_step(&f, &y, &k1, hh);
        let en = err_norm(&st.err, &y, &st.y, tol);
        if !en.is_finite() || en > 1.0 {
            h = hh * if en.is_finite() { (0.9 * en.powf(-0.2)).max(0.2) } else { 0.1 };
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(IntegrationError::StepCollapse { t, h });
            }
            continue;
        }
        steps.push(DenseStep::new(t, hh, &y, &st));
        t = if hh == dt - t { dt } else { t + hh };
        y = st.y;
        k1 = st.k[6];
        h = hh * if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
    }
    Ok(DenseSolution { steps, t_end: t, y_end: y })
}

/// Simulate from `state0` over `[0, t_max]` with `mu = sys.mu`.
pub fn simulate(sys: &PWSystem, state0: (f64, f64), t_max: f64, policy: &SimPolicy) -> Result<Trajectory, IntegrationError> {
    simulate_at(sys, sys.mu, state0, t_max, policy)
}

/// Simulate at an explicit parameter value.
pub fn simulate_at(sys: &PWSystem, mu: f64, state0: (f64, f64), t_max: f64, policy: &SimPolicy) -> Result<Trajectory, IntegrationError> {
    let mut traj = Trajectory {
        segments: Vec::new(),
        events: Vec::new(),
        final_time: 0.0,
        final_state: state0,
        stop: StopReason::TimeLimit,
    };
    if !(t_max > 0.0) {
        return Ok(traj);
    }
    let (mut sim, start) = Simulator::new(sys, mu, state0, *policy)?;
    traj.events.extend(start);
    loop {
        let mut samples = vec![(sim.t, sim.x, sim.y)];
        let out = sim.leg(t_max, &mut |t, x, y| samples.push((t, x, y)))?;
        traj.segments.push(Segment { kind: out.kind, t_start: out.t_start, t_end: out.t_end, samples });
        for e in &out.events {
            let jump = match e.kind {
                EventKind::Impact => Some(SegmentKind::Reset),
                EventKind::Impulse => Some(SegmentKind::Impulse),
                _ => None,
            };
            if let (Some(kind), None) = (jump, out.stop) {
                traj.segments.push(Segment {
                    kind,
                    t_start: e.time,
                    t_end: e.time,
                    samples: vec![(e.time, e.x, e.y), (e.time, sim.x, sim.y)],
                });
            }
        }
        traj.events.extend(out.events);
        if traj.events.len() > policy.events_max {
            return Err(IntegrationError::EventBudget(policy.events_max));
        }
        if let Some(stop) = out.stop {
            traj.stop = stop;
            break;
        }
    }
    traj.final_time = sim.t;
    traj.final_state = (sim.x, sim.y);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwsmodel::{Poly, ScalarMap};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn lin_piece(a: [f64; 6]) -> SmoothPiece {
        SmoothPiece::poly(
            Poly::from_terms(&[(0, 0, a[0]), (1, 0, a[1]), (0, 1, a[2])]),
            Poly::from_terms(&[(0, 0, a[3]), (1, 0, a[4]), (0, 1, a[5])]),
        )
    }

    #[test]
    fn harmonic_quarter_period() {
        let p = lin_piece([0.0, 0.0, 1.0, 0.0, -1.0, 0.0]);
        let sol = flow_piece(&p, 0.0, (1.0, 0.0), PI / 2.0, &Tolerances::with_tol(1e-12)).unwrap();
        assert!((sol.y_end[0]).abs() < 1e-9 && (sol.y_end[1] + 1.0).abs() < 1e-9);
        let mid = sol.eval(PI / 4.0);
        assert!((mid[0] - (PI / 4.0).cos()).abs() < 1e-9);
    }

    #[test]
    fn affine_matches_closed_form() {
        // x' = l x + w y, y' = b0 - w x + l y; closed form via the equilibrium
        let (l, w, b0) = (0.2, 1.3, -0.7);
        let p = lin_piece([0.0, l, w, b0, -w, l]);
        let (xs, ys) = {
            let det = l * l + w * w;
            (w * b0 / det, -l * b0 / det)
        };
        let t = 2.1;
        let sol = flow_piece(&p, 0.0, (0.3, 0.4), t, &Tolerances::with_tol(1e-12)).unwrap();
        let (dx, dy) = (0.3 - xs, 0.4 - ys);
        let e = (l * t).exp();
        let x = xs + e * (dx * (w * t).cos() + dy * (w * t).sin());
        let y = ys + e * (-dx * (w * t).sin() + dy * (w * t).cos());
        assert!((sol.y_end[0] - x).abs() < 1e-9 && (sol.y_end[1] - y).abs() < 1e-9);
    }

    #[test]
    fn zero_field_constant() {
        let p = lin_piece([0.0; 6]);
        let sol = flow_piece(&p, 0.0, (0.5, -2.0), 3.0, &Tolerances::default()).unwrap();
        assert_eq!(sol.y_end, [0.5, -2.0]);
    }

    fn division() -> PWSystem {
        let left = lin_piece([0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let right = lin_piece([2.0, 0.0, -2.0, -1.0, 0.0, 0.0]);
        PWSystem::new("division", Mechanism::Filippov { left, right })
    }

    #[test]
    fn division_crossing_region() {
        // x = -0.1 + 0.3 t + t^2/2 on the left, so the orbit meets x = 0 at y = sqrt(0.29)
        let sys = division();
        let tr = simulate(&sys, (-0.1, 0.3), 0.5, &SimPolicy::default()).unwrap();
        let first = tr.events.first().expect("switch");
        assert_eq!(first.kind, EventKind::Switch);
        assert_eq!(first.to, Mode::Right);
        assert!((first.y - 0.29f64.sqrt()).abs() < 1e-10);
        assert!((first.time - (0.29f64.sqrt() - 0.3)).abs() < 1e-10);
        assert!(first.x.abs() < 1e-10);
        assert_eq!(tr.segments[0].kind, SegmentKind::FlowL);
        assert_eq!(tr.segments[1].kind, SegmentKind::FlowR);
    }

    #[test]
    fn sliding_moves_away_from_unstable_pseudo_equilibrium() {
        // starting in the sliding region above y = 2 the slide moves away from y = 2
        let sys = division();
        let tr = simulate(&sys, (0.0, 2.5), 1.0, &SimPolicy::default()).unwrap();
        assert_eq!(tr.segments[0].kind, SegmentKind::Sliding);
        assert!(tr.final_state.1 > 2.5);
    }

    #[test]
    fn impact_cascade_hits_zeno_stop() {
        // x' = y, y' = -delta(x + xi) + tau y with reset y -> -r y
        let (tau, delta, r, xi) = (0.2, 1.0, 0.5, -1.0);
        let f = Poly::from_terms(&[(0, 1, 1.0)]);
        let g = Poly::from_terms(&[(1, 0, -delta), (0, 0, -delta * xi), (0, 1, tau)]);
        let sys = PWSystem::new("impact", Mechanism::Impact { field: SmoothPiece::poly(f, g), reset: ScalarMap::new(move |y, _| -r * y) });
        let tr = simulate(&sys, (-0.5, 0.0), 50.0, &SimPolicy::default()).unwrap();
        assert_eq!(tr.stop, StopReason::Zeno);
        let impacts = tr.events.iter().filter(|e| e.kind == EventKind::Impact).count();
        assert!(impacts > 20);
        assert!(tr.final_state.1.abs() < 1e-9);
        assert!(tr.events.iter().any(|e| e.kind == EventKind::ZenoStop));
    }

    #[test]
    fn empty_time_request() {
        let tr = simulate(&division(), (1.0, 0.5), 0.0, &SimPolicy::default()).unwrap();
        assert!(tr.segments.is_empty() && tr.events.is_empty());
    }

    #[test]
    fn delayed_switch_follows_crossing_by_lag() {
        let left = lin_piece([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let right = lin_piece([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut sys = PWSystem::new("relay", Mechanism::Delayed { left, right });
        sys.mu = 0.1;
        let tr = simulate(&sys, (-0.5, 0.0), 3.0, &SimPolicy::default()).unwrap();
        let cross: Vec<f64> = tr.events.iter().filter(|e| e.kind == EventKind::Crossing).map(|e| e.time).collect();
        let sw: Vec<f64> = tr.events.iter().filter(|e| e.kind == EventKind::Switch).map(|e| e.time).collect();
        assert!((cross[0] - 0.5).abs() < 1e-10);
        assert!((sw[0] - 0.6).abs() < 1e-10);
        // steady relay oscillation x in [-0.1, 0.1] with period 4 mu
        assert!((sw[2] - sw[0] - 0.4).abs() < 1e-9);
        assert!(!tr.events.iter().any(|e| e.kind == EventKind::DelayViolation));
    }

    #[test]
    fn delay_violation_reported() {
        // x' = 1 in both pieces: one crossing, then wait; force a violation by scheduling two switches
        let left = lin_piece([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let right = lin_piece([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut sys = PWSystem::new("d", Mechanism::Delayed { left, right });
        sys.mu = 0.5;
        let mut sim = Simulator::with_mode(&sys, 0.5, (-1.0, 0.0), Mode::Left, SimPolicy::default());
        sim.set_last_switch(0.0);
        sim.schedule_switch(0.1, Side::Right);
        let out = sim.leg(1.0, &mut |_, _, _| {}).unwrap();
        assert!(out.events.iter().any(|e| e.kind == EventKind::DelayViolation));
    }

    proptest! {
        #[test]
        fn switch_residual_small(a in prop::array::uniform6(-1.0..1.0f64), b in 0.1..1.0f64) {
            // left: rotation with positive drift into x > 0; right: constant push back
            let left = lin_piece([0.0, a[0] * 0.3, 1.0, a[1], -1.0, a[2] * 0.3]);
            let right = lin_piece([-b, a[3] * 0.1, a[4] * 0.1, a[5], 0.0, 0.0]);
            let sys = PWSystem::new("p", Mechanism::Filippov { left, right });
            if let Ok(tr) = simulate(&sys, (-0.3, 0.2), 5.0, &SimPolicy::default()) {
                for e in tr.events.iter().filter(|e| e.kind == EventKind::Switch || e.kind == EventKind::SlidingEntry) {
                    prop_assert!(e.x.abs() < 1e-10);
                }
                for s in tr.segments.iter().filter(|s| s.kind == SegmentKind::FlowL) {
                    prop_assert!(s.samples.iter().all(|p| p.1 <= 1e-9));
                }
                for s in tr.segments.iter().filter(|s| s.kind == SegmentKind::Sliding) {
                    prop_assert!(s.samples.iter().all(|p| p.1.abs() <= 1e-12));
                }
            }
        }

        #[test]
        fn reversed_crossing_retraces(y0 in 0.6..1.4f64) {
            // forward: start in x > 0, short horizon with crossings only
            let left = lin_piece([0.0, 0.1, 1.0, 0.0, -1.0, 0.1]);
            let right = lin_piece([0.5, -0.2, 1.0, -0.3, -1.0, 0.0]);
            let fwd = PWSystem::new("f", Mechanism::Filippov { left: left.clone(), right: right.clone() });
            let neg = |p: [f64; 6]| lin_piece(p.map(|v| -v));
            let bwd = PWSystem::new("b", Mechanism::Filippov {
                left: neg([0.0, 0.1, 1.0, 0.0, -1.0, 0.1]),
                right: neg([0.5, -0.2, 1.0, -0.3, -1.0, 0.0]),
            });
            let tol = SimPolicy { tol: Tolerances::with_tol(1e-12), ..SimPolicy::default() };
            let tr = simulate(&fwd, (0.2, y0), 2.0, &tol).unwrap();
            prop_assume!(tr.events.iter().all(|e| e.kind == EventKind::Switch));
            let back = simulate(&bwd, tr.final_state, 2.0, &tol).unwrap();
            prop_assert!((back.final_state.0 - 0.2).abs() < 1e-6 && (back.final_state.1 - y0).abs() < 1e-6);
        }
    }
}
