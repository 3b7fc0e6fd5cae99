//! Switching-manifold geometry: point classification, the sliding vector
//! field, and regular and pseudo-equilibria.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::brent_plain;
use crate::pwsmodel::{Eigen, Mechanism, ModelError, PWSystem, SmoothPiece};

/// Geometry failures.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("operation needs a two-piece system on x = 0")]
    NotFilippov,
    #[error("degenerate tangency of the {side} piece at y = {y} (df/dy = {dfdy})")]
    Degenerate { side: &'static str, y: f64, dfdy: f64 },
    #[error("sliding field undefined at y = {0}: f_L = f_R")]
    SlidingDegenerate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Classification tag of a point `(0, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Crossing,
    AttractingSliding,
    RepellingSliding,
    VisibleFoldL,
    InvisibleFoldL,
    VisibleFoldR,
    InvisibleFoldR,
    TwoFold { vis_l: bool, vis_r: bool },
    BoundaryEquilibriumL,
    BoundaryEquilibriumR,
}

/// Tag plus the normal velocities `f_L(0, y)`, `f_R(0, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldPointClass {
    pub tag: BoundaryTag,
    pub f_l: f64,
    pub f_r: f64,
}

/// Kind of a stationary solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    RegularL,
    RegularR,
    /// Zero of the single field of impact, impulse or square-root systems,
    /// or of one quadrant piece.
    Regular,
    Pseudo,
    TwoFoldStationary,
    Boundary,
}

/// A stationary solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub x: f64,
    pub y: f64,
    pub kind: EquilibriumKind,
    pub admissible: bool,
    /// Eigen data of the owning piece for regular equilibria.
    pub eigen: Option<Eigen>,
    /// Stability: eigenvalues for regular, sign of `dg_slide/dy` for pseudo.
    pub stable: bool,
    pub hyperbolic: bool,
}

fn pieces(sys: &PWSystem) -> Result<(&SmoothPiece, &SmoothPiece), GeometryError> {
    sys.mechanism.two_pieces().ok_or(GeometryError::NotFilippov)
}

fn dfdy(p: &SmoothPiece, y: f64, mu: f64) -> f64 {
    p.jacobian_at(0.0, y, mu)[0][1]
}

/// Classify `(0, y)` from the signs of the normal velocities.
///
/// `|f_J| < tol (1 + |df_J/dy|)` counts as a tangency of piece `J`.
pub fn classify_boundary_point(sys: &PWSystem, y: f64, mu: f64, tol: f64) -> Result<ManifoldPointClass, GeometryError> {
    let (l, r) = pieces(sys)?;
    let (f_l, g_l) = l.eval(0.0, y, mu);
    let (f_r, g_r) = r.eval(0.0, y, mu);
    let (dl, dr) = (dfdy(l, y, mu), dfdy(r, y, mu));
    let tan_l = f_l.abs() < tol * (1.0 + dl.abs());
    let tan_r = f_r.abs() < tol * (1.0 + dr.abs());
    let out = |tag| Ok(ManifoldPointClass { tag, f_l, f_r });
    if tan_l && g_l.abs() < tol {
        return out(BoundaryTag::BoundaryEquilibriumL);
    }
    if tan_r && g_r.abs() < tol {
        return out(BoundaryTag::BoundaryEquilibriumR);
    }
    let check = |tan: bool, d: f64, side| {
        if tan && d.abs() < tol {
            Err(GeometryError::Degenerate { side, y, dfdy: d })
        } else {
            Ok(())
        }
    };
    check(tan_l, dl, "left")?;
    check(tan_r, dr, "right")?;
    // left orbit tangent at x = 0 has x'' = f_y g; it stays in x < 0 when x'' < 0
    let vis_l = dl * g_l < 0.0;
    let vis_r = dr * g_r > 0.0;
    let tag = match (tan_l, tan_r) {
        (true, true) => BoundaryTag::TwoFold { vis_l, vis_r },
        (true, false) => {
            if vis_l {
                BoundaryTag::VisibleFoldL
            } else {
                BoundaryTag::InvisibleFoldL
            }
        }
        (false, true) => {
            if vis_r {
                BoundaryTag::VisibleFoldR
            } else {
                BoundaryTag::InvisibleFoldR
            }
        }
        (false, false) => {
            if f_l * f_r > 0.0 {
                BoundaryTag::Crossing
            } else if f_l > 0.0 {
                BoundaryTag::AttractingSliding
            } else {
                BoundaryTag::RepellingSliding
            }
        }
    };
    out(tag)
}

/// Filippov weight `s = f_L / (f_L - f_R)` at `(0, y)`.
pub fn sliding_weight(sys: &PWSystem, y: f64, mu: f64) -> Result<f64, GeometryError> {
    let (l, r) = pieces(sys)?;
    let (f_l, _) = l.eval(0.0, y, mu);
    let (f_r, _) = r.eval(0.0, y, mu);
    if f_l == f_r {
        return Err(GeometryError::SlidingDegenerate(y));
    }
    Ok(f_l / (f_l - f_r))
}

/// Sliding vector field `(f_L g_R - f_R g_L)/(f_L - f_R)` at `(0, y)`.
pub fn sliding_field(sys: &PWSystem, y: f64, mu: f64) -> Result<f64, GeometryError> {
    let (l, r) = pieces(sys)?;
    Ok(sliding_field_pieces(l, r, y, mu)?)
}

pub(crate) fn sliding_field_pieces(l: &SmoothPiece, r: &SmoothPiece, y: f64, mu: f64) -> Result<f64, GeometryError> {
    let (f_l, g_l) = l.eval(0.0, y, mu);
    let (f_r, g_r) = r.eval(0.0, y, mu);
    if f_l == f_r {
        return Err(GeometryError::SlidingDegenerate(y));
    }
    Ok((f_l * g_r - f_r * g_l) / (f_l - f_r))
}

fn is_sliding(l: &SmoothPiece, r: &SmoothPiece, y: f64, mu: f64) -> bool {
    l.eval(0.0, y, mu).0 * r.eval(0.0, y, mu).0 < 0.0
}

/// Zeros of the sliding field on `[y0, y1]` restricted to sliding regions.
pub fn find_pseudo_equilibria(sys: &PWSystem, y_interval: (f64, f64), mu: f64) -> Result<Vec<Equilibrium>, GeometryError> {
    let (l, r) = pieces(sys)?;
    let (y0, y1) = y_interval;
    let n = 512;
    let gs = |y: f64| sliding_field_pieces(l, r, y, mu).unwrap_or(f64::NAN);
    let mut out: Vec<Equilibrium> = Vec::new();
    let mut push = |y: f64| {
        if !is_sliding(l, r, y, mu) || out.iter().any(|e| (e.y - y).abs() < 1e-9) {
            return;
        }
        let h = 1e-6 * (1.0 + y.abs());
        let slope = (gs(y + h) - gs(y - h)) / (2.0 * h);
        out.push(Equilibrium {
            x: 0.0,
            y,
            kind: EquilibriumKind::Pseudo,
            admissible: true,
            eigen: None,
            stable: slope < 0.0,
            hyperbolic: slope.abs() > 1e-12,
        });
    };
    let ys: Vec<f64> = (0..=n).map(|k| y0 + (y1 - y0) * k as f64 / n as f64).collect();
    for w in ys.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(is_sliding(l, r, a, mu) && is_sliding(l, r, b, mu)) {
            continue;
        }
        let (ga, gb) = (gs(a), gs(b));
        if ga == 0.0 {
            push(a);
        } else if ga * gb < 0.0 {
            if let Ok(y) = brent_plain(gs, a, b, 1e-15) {
                push(y);
            }
        }
    }
    if let Some(&last) = ys.last() {
        if is_sliding(l, r, last, mu) && gs(last) == 0.0 {
            push(last);
        }
    }
    Ok(out)
}

/// Search rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl SearchBox {
    /// Square box of half-width `w` around the origin.
    pub fn around_origin(w: f64) -> Self {
        Self { x0: -w, x1: w, y0: -w, y1: w }
    }
}

fn newton_2d(eval: &dyn Fn(f64, f64) -> (f64, f64), jac: &dyn Fn(f64, f64) -> [[f64; 2]; 2], x0: f64, y0: f64) -> Option<(f64, f64)> {
    let (mut x, mut y) = (x0, y0);
    for _ in 0..60 {
        let (f, g) = eval(x, y);
        if !f.is_finite() || !g.is_finite() {
            return None;
        }
        let j = jac(x, y);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        let dx = (j[1][1] * f - j[0][1] * g) / det;
        let dy = (-j[1][0] * f + j[0][0] * g) / det;
        x -= dx;
        y -= dy;
        if dx.abs() + dy.abs() < 1e-15 * (1.0 + x.abs() + y.abs()) {
            break;
        }
    }
    let (f, g) = eval(x, y);
    (f.abs() + g.abs() < 1e-10).then_some((x, y))
}

fn solve_piece(
    eval: &dyn Fn(f64, f64) -> (f64, f64),
    jac: &dyn Fn(f64, f64) -> [[f64; 2]; 2],
    b: &SearchBox,
) -> Vec<(f64, f64)> {
    let mut roots: Vec<(f64, f64)> = Vec::new();
    let m = 7;
    for i in 0..m {
        for k in 0..m {
            let x0 = b.x0 + (b.x1 - b.x0) * i as f64 / (m - 1) as f64;
            let y0 = b.y0 + (b.y1 - b.y0) * k as f64 / (m - 1) as f64;
            if let Some((x, y)) = newton_2d(eval, jac, x0, y0) {
                let inside = x >= b.x0 - 1e-12 && x <= b.x1 + 1e-12 && y >= b.y0 - 1e-12 && y <= b.y1 + 1e-12;
                let fresh = roots.iter().all(|&(u, v)| (u - x).abs() + (v - y).abs() > 1e-8 * (1.0 + x.abs() + y.abs()));
                if inside && fresh {
                    roots.push((x, y));
                }
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

fn regular(x: f64, y: f64, kind: EquilibriumKind, admissible: bool, jac: [[f64; 2]; 2]) -> Equilibrium {
    let eigen = Eigen::of(jac);
    Equilibrium { x, y, kind, admissible, eigen: Some(eigen), stable: eigen.is_stable(), hyperbolic: eigen.is_hyperbolic() }
}

/// Newton-refined zeros of every piece inside `search_box`, flagged
/// admissible when they lie in the piece's own region.
pub fn find_regular_equilibria(sys: &PWSystem, search_box: SearchBox, mu: f64) -> Result<Vec<Equilibrium>, GeometryError> {
    let eps = 1e-12;
    let plain = |p: &SmoothPiece, admit: &dyn Fn(f64, f64) -> bool, kind_of: &dyn Fn(f64, f64) -> EquilibriumKind| {
        let ev = |x: f64, y: f64| p.eval(x, y, mu);
        let jac = |x: f64, y: f64| p.jacobian_at(x, y, mu);
        solve_piece(&ev, &jac, &search_box)
            .into_iter()
            .map(|(x, y)| regular(x, y, kind_of(x, y), admit(x, y), jac(x, y)))
            .collect::<Vec<_>>()
    };
    let on_manifold = |x: f64| x.abs() <= eps;
    let mut out = Vec::new();
    match &sys.mechanism {
        Mechanism::Filippov { left, right } | Mechanism::Hysteretic { left, right } | Mechanism::Delayed { left, right } => {
            let kl = |x: f64, _| if on_manifold(x) { EquilibriumKind::Boundary } else { EquilibriumKind::RegularL };
            let kr = |x: f64, _| if on_manifold(x) { EquilibriumKind::Boundary } else { EquilibriumKind::RegularR };
            out.extend(plain(left, &|x, _| x < 0.0 || on_manifold(x), &kl));
            out.extend(plain(right, &|x, _| x > 0.0 || on_manifold(x), &kr));
        }
        Mechanism::Impact { field, .. } => {
            out.extend(plain(field, &|x, _| x <= eps, &|_, _| EquilibriumKind::Regular));
        }
        Mechanism::Impulse { field, .. } => {
            out.extend(plain(field, &|_, _| true, &|_, _| EquilibriumKind::Regular));
        }
        Mechanism::FourQuadrant { pieces } => {
            let quadrant = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];
            for (p, (sx, sy)) in pieces.iter().zip(quadrant) {
                out.extend(plain(p, &move |x, y| x * sx >= -eps && y * sy >= -eps, &|_, _| EquilibriumKind::Regular));
            }
        }
        Mechanism::SqrtContinuous { field } => {
            // left region: z = 0
            let ev = |x: f64, y: f64| field.eval3(x, y, 0.0, mu);
            let jac = |x: f64, y: f64| field.jacobian_at(x, y, mu);
            for (x, y) in solve_piece(&ev, &jac, &search_box) {
                out.push(regular(x, y, EquilibriumKind::RegularL, x <= eps, jac(x, y)));
            }
            // right region: x = u^2, z = u with u >= 0
            let evu = |u: f64, y: f64| field.eval3(u * u, y, u.abs(), mu);
            let jacu = |u: f64, y: f64| {
                let h = 1e-7 * (1.0 + u.abs());
                let (fp, gp) = evu(u + h, y);
                let (fm, gm) = evu(u - h, y);
                let (fyp, gyp) = evu(u, y + h);
                let (fym, gym) = evu(u, y - h);
                [[(fp - fm) / (2.0 * h), (fyp - fym) / (2.0 * h)], [(gp - gm) / (2.0 * h), (gyp - gym) / (2.0 * h)]]
            };
            let ub = SearchBox { x0: 0.0, x1: search_box.x1.max(0.0).sqrt(), y0: search_box.y0, y1: search_box.y1 };
            for (u, y) in solve_piece(&evu, &jacu, &ub) {
                if u > eps {
                    let x = u * u;
                    // Jacobian in x: d/dx = (1/(2u)) d/du
                    let ju = jacu(u, y);
                    let jx = [[ju[0][0] / (2.0 * u), ju[0][1]], [ju[1][0] / (2.0 * u), ju[1][1]]];
                    out.push(regular(x, y, EquilibriumKind::RegularR, true, jx));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwsmodel::{Monomial, Poly};
    use proptest::prelude::*;

    /// F_L = (y, 1), F_R = (-2(y - 1), -1): crossing on (0, 1), attracting
    /// sliding above y = 1, an invisible left fold at the origin.
    fn division() -> PWSystem {
        let left = SmoothPiece::poly(Poly::from_terms(&[(0, 1, 1.0)]), Poly::from_terms(&[(0, 0, 1.0)]));
        let right = SmoothPiece::poly(Poly::from_terms(&[(0, 0, 2.0), (0, 1, -2.0)]), Poly::from_terms(&[(0, 0, -1.0)]));
        PWSystem::new("division", Mechanism::Filippov { left, right })
    }

    #[test]
    fn division_system_matches_published_sliding_field() {
        let s = division();
        for y in [1.5, 2.5, 3.0, 4.0] {
            let g = sliding_field(&s, y, 0.0).unwrap();
            assert!((g - (y - 2.0) / (3.0 * y - 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn division_tags() {
        let s = division();
        assert_eq!(classify_boundary_point(&s, 0.5, 0.0, 1e-9).unwrap().tag, BoundaryTag::Crossing);
        assert_eq!(classify_boundary_point(&s, 2.0, 0.0, 1e-9).unwrap().tag, BoundaryTag::AttractingSliding);
        assert_eq!(classify_boundary_point(&s, 0.0, 0.0, 1e-9).unwrap().tag, BoundaryTag::InvisibleFoldL);
        assert_eq!(classify_boundary_point(&s, 1.0, 0.0, 1e-9).unwrap().tag, BoundaryTag::VisibleFoldR);
    }

    #[test]
    fn division_pseudo_equilibrium() {
        let s = division();
        assert!(sliding_field(&s, 2.0, 0.0).unwrap().abs() < 1e-15);
        let eqs = find_pseudo_equilibria(&s, (1.5, 3.0), 0.0).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!((eqs[0].y - 2.0).abs() < 1e-12);
        assert!(!eqs[0].stable);
        assert!(find_pseudo_equilibria(&s, (2.5, 3.0), 0.0).unwrap().is_empty());
    }

    #[test]
    fn symmetric_sliding_field_is_common_value() {
        let left = SmoothPiece::poly(Poly::from_terms(&[(0, 0, 1.0), (0, 1, 1.0)]), Poly::from_terms(&[(0, 0, 0.7)]));
        let right = SmoothPiece::poly(Poly::from_terms(&[(0, 0, -2.0)]), Poly::from_terms(&[(0, 0, 0.7)]));
        let s = PWSystem::new("sym", Mechanism::Filippov { left, right });
        assert!((sliding_field(&s, 0.3, 0.0).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn degenerate_fold_reported() {
        let left = SmoothPiece::poly(Poly::from_terms(&[(0, 2, 1.0)]), Poly::from_terms(&[(0, 0, 1.0)]));
        let right = SmoothPiece::poly(Poly::from_terms(&[(0, 0, 1.0)]), Poly::from_terms(&[(0, 0, 1.0)]));
        let s = PWSystem::new("deg", Mechanism::Filippov { left, right });
        assert!(matches!(classify_boundary_point(&s, 0.0, 0.0, 1e-9), Err(GeometryError::Degenerate { .. })));
    }

    #[test]
    fn linear_field_equilibrium_at_origin() {
        let p = SmoothPiece::poly(Poly::from_terms(&[(1, 0, -1.0), (0, 1, 2.0)]), Poly::from_terms(&[(1, 0, -3.0)]));
        let s = PWSystem::new(
            "lin",
            Mechanism::Impact { field: p, reset: crate::pwsmodel::ScalarMap::new(|y, _| -0.5 * y) },
        );
        let eqs = find_regular_equilibria(&s, SearchBox::around_origin(1.0), 0.0).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!((eqs[0].x, eqs[0].y), (0.0, 0.0));
    }

    #[test]
    fn sqrt_right_equilibrium_found() {
        // F = (x - z + 0.5, y): in x > 0 zero where x - sqrt(x) + 0.5... use x - 2 z + 0.75 -> sqrt x = 0.5, 1.5
        let f = Poly::new(vec![Monomial::new(1, 0, 1.0), Monomial { i: 0, j: 0, k: 1, coeff: vec![-2.0] }, Monomial::new(0, 0, 0.75)]);
        let g = Poly::from_terms(&[(0, 1, 1.0)]);
        let s = PWSystem::new("sq", Mechanism::SqrtContinuous { field: SmoothPiece::poly(f, g) });
        let eqs = find_regular_equilibria(&s, SearchBox { x0: -3.0, x1: 3.0, y0: -1.0, y1: 1.0 }, 0.0).unwrap();
        let mut xs: Vec<f64> = eqs.iter().filter(|e| e.kind == EquilibriumKind::RegularR).map(|e| e.x).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 2);
        assert!((xs[0] - 0.25).abs() < 1e-10 && (xs[1] - 2.25).abs() < 1e-10);
    }

    fn affine_pair(c: [f64; 12]) -> PWSystem {
        let piece = |o: usize| {
            SmoothPiece::poly(
                Poly::from_terms(&[(0, 0, c[o]), (1, 0, c[o + 1]), (0, 1, c[o + 2])]),
                Poly::from_terms(&[(0, 0, c[o + 3]), (1, 0, c[o + 4]), (0, 1, c[o + 5])]),
            )
        };
        PWSystem::new("affine", Mechanism::Filippov { left: piece(0), right: piece(6) })
    }

    fn reversed_reflected(c: [f64; 12]) -> [f64; 12] {
        // time reversal with y -> -y: (f, g)(x, y) -> (-f(x, -y), g(x, -y))
        let mut d = c;
        for o in [0, 6] {
            d[o] = -c[o];
            d[o + 1] = -c[o + 1];
            d[o + 2] = c[o + 2];
            d[o + 3] = c[o + 3];
            d[o + 4] = c[o + 4];
            d[o + 5] = -c[o + 5];
        }
        d
    }

    proptest! {
        #[test]
        fn sliding_weight_in_unit_interval_and_convex(c in prop::array::uniform12(-2.0..2.0f64), y in -2.0..2.0f64) {
            let s = affine_pair(c);
            let (l, r) = s.mechanism.two_pieces().unwrap();
            let (fl, gl) = l.eval(0.0, y, 0.0);
            let (fr, gr) = r.eval(0.0, y, 0.0);
            prop_assume!(fl * fr < -1e-6);
            let w = sliding_weight(&s, y, 0.0).unwrap();
            prop_assert!(w > 0.0 && w < 1.0);
            let hull_x = (1.0 - w) * fl + w * fr;
            let hull_y = (1.0 - w) * gl + w * gr;
            prop_assert!(hull_x.abs() < 1e-12 * (1.0 + fl.abs() + fr.abs()));
            prop_assert!((hull_y - sliding_field(&s, y, 0.0).unwrap()).abs() < 1e-12 * (1.0 + gl.abs() + gr.abs()));
        }

        #[test]
        fn time_reversal_antisymmetry(c in prop::array::uniform12(-2.0..2.0f64), y in -2.0..2.0f64) {
            let a = affine_pair(c);
            let b = affine_pair(reversed_reflected(c));
            let ta = classify_boundary_point(&a, y, 0.0, 1e-9);
            let tb = classify_boundary_point(&b, -y, 0.0, 1e-9);
            if let (Ok(ta), Ok(tb)) = (ta, tb) {
                let expect = match ta.tag {
                    BoundaryTag::AttractingSliding => BoundaryTag::RepellingSliding,
                    BoundaryTag::RepellingSliding => BoundaryTag::AttractingSliding,
                    other => other,
                };
                prop_assert_eq!(tb.tag, expect);
            }
        }

        #[test]
        fn pseudo_equilibria_are_refined(c in prop::array::uniform12(-2.0..2.0f64)) {
            let s = affine_pair(c);
            for e in find_pseudo_equilibria(&s, (-3.0, 3.0), 0.0).unwrap() {
                prop_assert!(sliding_field(&s, e.y, 0.0).unwrap().abs() < 1e-10);
            }
        }
    }
}
