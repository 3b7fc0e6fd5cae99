//! Analytic half-return maps near foci, folds and affine boundary equilibria.
//!
//! The section is the positive y-axis: an orbit starting at `(0, r)` is
//! followed until it next reaches `x = 0` at `(0, P)`.

use num_complex::Complex64;
use num_traits::Num;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

use crate::numerics::{brent, brent_plain, RootError};
use crate::pwsmodel::TaylorTable;

/// Return-map failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReturnMapError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("G has a pole at s = {0}")]
    Pole(f64),
    #[error("return undefined for r = {r} below cutoff {r_hat}")]
    BelowCutoff { r: f64, r_hat: f64 },
    #[error(transparent)]
    Root(#[from] RootError),
}

/// `rho(s; nu) = 1 - e^{nu s}(cos s - nu sin s)`.
pub fn aux_rho(s: f64, nu: f64) -> f64 {
    1.0 - (nu * s).exp() * (s.cos() - nu * s.sin())
}

/// `ds rho(s; nu) = (1 + nu^2) e^{nu s} sin s`.
pub fn aux_rho_ds(s: f64, nu: f64) -> f64 {
    (1.0 + nu * nu) * (nu * s).exp() * s.sin()
}

/// Hyperbolic variant `1 - e^{nu s}(cosh s - nu sinh s)`.
pub fn aux_rho_node(s: f64, nu: f64) -> f64 {
    1.0 - (nu * s).exp() * (s.cosh() - nu * s.sinh())
}

/// `rho` at complex arguments.
pub fn aux_rho_complex(s: Complex64, nu: Complex64) -> Complex64 {
    Complex64::new(1.0, 0.0) - (nu * s).exp() * (s.cos() - nu * s.sin())
}

/// The unique root of `rho(.; nu)` in `(pi, 2 pi)` for `nu > 0`.
pub fn aux_shat(nu: f64) -> Result<f64, ReturnMapError> {
    if !(nu > 0.0) {
        return Err(ReturnMapError::Precondition(format!("shat needs nu > 0, got {nu}")));
    }
    // e^{-nu s} rho(s; nu) is positive at pi and negative at 2 pi, and stays O(1) for large nu
    let s = brent_plain(|s| (-nu * s).exp() - s.cos() + nu * s.sin(), PI, 2.0 * PI, 1e-15)?;
    Ok(s)
}

/// `G(s; nu) = e^{-nu s} rho(s; nu) / sin s`.
pub fn g_func(s: f64, nu: f64) -> Result<f64, ReturnMapError> {
    let sn = s.sin();
    if sn.abs() < 1e-12 {
        return Err(ReturnMapError::Pole(s));
    }
    Ok((-nu * s).exp() * aux_rho(s, nu) / sn)
}

/// Hyperbolic analogue `e^{-nu s} rho_node(s; nu) / sinh s`, obtained from
/// [`g_func`] with `omega = i eta`.
pub fn g_func_node(s: f64, nu: f64) -> Result<f64, ReturnMapError> {
    let sh = s.sinh();
    if sh.abs() < 1e-300 {
        return Err(ReturnMapError::Pole(s));
    }
    Ok((-nu * s).exp() * aux_rho_node(s, nu) / sh)
}

/// Weighted second-order combination defining `chi_focus`, generic over the
/// number type so it can run on exact rationals.
///
/// `jac = [a1, a2, b1, b2]`, `second = [f_xx, f_xy, f_yy, g_xx, g_xy, g_yy]`.
pub fn chi_focus_generic<T: Num + Copy>(jac: [T; 4], second: [T; 6]) -> T {
    let [a1, a2, b1, b2] = jac;
    let two = T::one() + T::one();
    let three = two + T::one();
    let four = two + two;
    let five = four + T::one();
    let seven = five + two;
    let nine = three * three;
    let k1 = T::zero() - a2 * (two * a1 * b2 - three * a2 * b1 - b2 * b2);
    let k2 = T::zero() - a2 * b1 * (four * a1 + b2) + a1 * b2 * (two * a1 - b2);
    let k3 = b1 * (two * a1 * a1 + seven * a1 * b2 - three * a2 * b1) / two
        - b2 * b2 * (two * a1 * a1 - a1 * b2 + a2 * b1) / (two * a2);
    let l1 = T::zero() - a2 * a2 * (a1 + b2);
    let l2 = a2 * (two * a1 * a1 - a1 * b2 + three * a2 * b1);
    let l3 = T::zero()
        - a1 * (two * a1 * a1 - three * a1 * b2 + b2 * b2) / two
        - a2 * b1 * (five * a1 - b2) / two;
    let det = a1 * b2 - a2 * b1;
    let tr = a1 + b2;
    // lambda^2 + omega^2 = det, lambda^2 + 9 omega^2 = 9 det - 2 tr^2
    let denom = det * (nine * det - two * tr * tr);
    let [fxx, fxy, fyy, gxx, gxy, gyy] = second;
    (k1 * fxx + k2 * fxy + k3 * fyy + l1 * gxx + l2 * gxy + l3 * gyy) / denom
}

fn focus_pre(t: &TaylorTable) -> Result<(f64, f64), ReturnMapError> {
    let (a1, a2, b1, b2) = (t.a(1), t.a(2), t.b(1), t.b(2));
    let lambda = 0.5 * (a1 + b2);
    let disc = lambda * lambda - (a1 * b2 - a2 * b1);
    if disc >= 0.0 {
        return Err(ReturnMapError::Precondition("focus needs complex eigenvalues".into()));
    }
    if a2 == 0.0 {
        return Err(ReturnMapError::Precondition("focus needs a2 != 0".into()));
    }
    Ok((lambda, (-disc).sqrt()))
}

/// Quadratic coefficient of the focus half-return map.
pub fn chi_focus(t: &TaylorTable) -> Result<f64, ReturnMapError> {
    focus_pre(t)?;
    Ok(chi_focus_generic(
        [t.a(1), t.a(2), t.b(1), t.b(2)],
        [t.f(2, 0), t.f(1, 1), t.f(0, 2), t.g(2, 0), t.g(1, 1), t.g(0, 2)],
    ))
}

fn fold_pre(t: &TaylorTable, left: bool) -> Result<(), ReturnMapError> {
    if !(t.a(2) > 0.0) {
        return Err(ReturnMapError::Precondition(format!("fold needs a2 > 0, got {}", t.a(2))));
    }
    let b0 = t.b(0);
    let ok = if left { b0 > 0.0 } else { b0 < 0.0 };
    if !ok {
        let want = if left { "b0 > 0" } else { "b0 < 0" };
        return Err(ReturnMapError::Precondition(format!("fold needs {want}, got {b0}")));
    }
    Ok(())
}

fn sigma_raw(t: &TaylorTable) -> f64 {
    t.a(1) / t.b(0) + t.b(2) / t.b(0) - t.a(5) / t.a(2)
}

fn chi_raw(t: &TaylorTable) -> f64 {
    let (a1, a2, a5, b0, b2) = (t.a(1), t.a(2), t.a(5), t.b(0), t.b(2));
    let s = sigma_raw(t);
    let head = -a1 * (a1 + b2) * (a1 + 2.0 * b2) / b0.powi(3) + (a1 + b2) * (4.0 * a1 + 3.0 * b2) * s / (b0 * b0)
        - 5.0 * (a1 + b2) * s * s / b0
        + 40.0 / 9.0 * s.powi(3);
    let bracket = (a1 / b0 - a5 / a2) / b0 * t.f(1, 1)
        - (2.0 * a1 / b0 + 2.0 * b2 / b0 - 5.0 * a5 / a2) / (6.0 * a2) * t.f(0, 3)
        + a2 / (b0 * b0) * (a1 / b0 + b2 / b0) * t.g(1, 0)
        + (a1 / b0 - b2 / b0 - 2.0 * a5 / a2) / (2.0 * b0) * t.g(0, 2)
        - a2 / (b0 * b0) * t.f(2, 0)
        + t.f(1, 2) / (2.0 * b0)
        - t.f(0, 4) / (8.0 * a2)
        - a2 / (b0 * b0) * t.g(1, 1)
        + t.g(0, 3) / (2.0 * b0);
    head + bracket
}

/// Quadratic-order fold coefficient for a fold with `a2 > 0`, `b0 < 0`.
pub fn sigma_fold(t: &TaylorTable) -> Result<f64, ReturnMapError> {
    fold_pre(t, false)?;
    Ok(sigma_raw(t))
}

/// Quartic-order fold coefficient for a fold with `a2 > 0`, `b0 < 0`.
pub fn chi_fold(t: &TaylorTable) -> Result<f64, ReturnMapError> {
    fold_pre(t, false)?;
    Ok(chi_raw(t))
}

/// `sigma_fold` evaluated by the same formula on a left piece, where the
/// fold has `a2 > 0` and `b0 > 0`.
pub fn sigma_fold_left(t: &TaylorTable) -> Result<f64, ReturnMapError> {
    fold_pre(t, true)?;
    Ok(sigma_raw(t))
}

/// `chi_fold` evaluated by the same formula on a left piece (`a2 > 0`, `b0 > 0`).
pub fn chi_fold_left(t: &TaylorTable) -> Result<f64, ReturnMapError> {
    fold_pre(t, true)?;
    Ok(chi_raw(t))
}

/// Focus half-return `(P, T)` truncated after the `r^2` term; `T = pi/omega`.
pub fn p_focus_series(t: &TaylorTable, r: f64) -> Result<(f64, f64), ReturnMapError> {
    let (lambda, omega) = focus_pre(t)?;
    let chi = chi_focus(t)?;
    let e = (lambda * PI / omega).exp();
    Ok((-e * r + e * (e + 1.0) * chi * r * r, PI / omega))
}

/// Fold half-return `(P, T)` truncated after the `r^4` term; `T = -2r/b0`.
pub fn p_fold_series(t: &TaylorTable, r: f64) -> Result<(f64, f64), ReturnMapError> {
    let s = sigma_fold(t)?;
    let chi = chi_fold(t)?;
    let p = -r + 2.0 * s / 3.0 * r * r - 4.0 * s * s / 9.0 * r.powi(3) + 2.0 * chi / 15.0 * r.powi(4);
    Ok((p, -2.0 * r / t.b(0)))
}

/// Case of the affine half-return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AffineType {
    /// `b0 < 0`: defined for all `r > 0`.
    I,
    /// `b0 > 0`, `lambda < 0`: undefined below `r_hat`.
    II,
    /// `b0 > 0`, `lambda > 0`.
    III,
    /// `b0 = 0`: the equilibrium sits on the manifold; linear focus map.
    Centred,
}

/// Affine half-return result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineReturnResult {
    pub p: f64,
    pub t: f64,
    pub type_tag: AffineType,
    pub r_hat: Option<f64>,
}

/// Type II cutoff `r_hat = -(b0/omega) e^{nu s} sin s` with `nu = -lambda/omega`, `s = shat(nu)`.
pub fn affine_r_hat(lambda: f64, omega: f64, b0: f64) -> Result<f64, ReturnMapError> {
    let nu = -lambda / omega;
    let s = aux_shat(nu)?;
    Ok(-(b0 / omega) * (nu * s).exp() * s.sin())
}

/// Half-return of `x' = lambda x + omega y`-type affine focus fields with
/// `F(0,0) = (0, b0)`, eigenvalues `lambda +- i omega`, written in the
/// frame where `r = -kappa e^{-lambda T} rho(omega T; lambda/omega) / sin(omega T)`.
pub fn affine_return(lambda: f64, omega: f64, b0: f64, r: f64) -> Result<AffineReturnResult, ReturnMapError> {
    if !(r > 0.0) {
        return Err(ReturnMapError::Precondition(format!("affine return needs r > 0, got {r}")));
    }
    if !(omega > 0.0) {
        return Err(ReturnMapError::Precondition(format!("affine return needs omega > 0, got {omega}")));
    }
    let nu = lambda / omega;
    if b0 == 0.0 {
        let e = (nu * PI).exp();
        return Ok(AffineReturnResult { p: -e * r, t: PI / omega, type_tag: AffineType::Centred, r_hat: None });
    }
    let kappa = b0 * omega / (lambda * lambda + omega * omega);
    let r_of_s = |s: f64| -kappa * (-nu * s).exp() * aux_rho(s, nu) / s.sin();
    let (lo, hi, tag, r_hat) = if b0 < 0.0 {
        (0.0, PI, AffineType::I, None)
    } else if lambda < 0.0 {
        let s_end = aux_shat(-nu)?;
        let r_hat = affine_r_hat(lambda, omega, b0)?;
        if r < r_hat {
            return Err(ReturnMapError::BelowCutoff { r, r_hat });
        }
        (PI, s_end, AffineType::II, Some(r_hat))
    } else if lambda > 0.0 {
        (PI, aux_shat(nu)?, AffineType::III, None)
    } else {
        (PI, 2.0 * PI, AffineType::III, None)
    };
    let s = solve_s(&r_of_s, lo, hi, r, tag)?;
    if s.sin().abs() < 1e-8 {
        let e = (nu * PI).exp();
        return Ok(AffineReturnResult { p: -e * r, t: PI / omega, type_tag: tag, r_hat });
    }
    let p = kappa * (nu * s).exp() * aux_rho(s, -nu) / s.sin();
    Ok(AffineReturnResult { p, t: s / omega, type_tag: tag, r_hat })
}

/// Solve `r(s) = r` on `(lo, hi)`, where `r(s)` is monotone and runs between
/// 0 (or `r_hat`) and the pole at `s = pi`.
fn solve_s(r_of_s: &dyn Fn(f64) -> f64, lo: f64, hi: f64, r: f64, tag: AffineType) -> Result<f64, ReturnMapError> {
    // the pole sits at s = pi; for Type I it is the upper end, otherwise the lower end
    let pole_at_hi = tag == AffineType::I;
    let h = |s: f64| (r_of_s(s) - r) / r.max(1.0);
    let mut inner = if pole_at_hi { hi - 1e-3 } else { lo + 1e-3 };
    let far = if pole_at_hi { lo + 1e-300 } else { hi };
    let mut step = 1e-3;
    while h(inner) < 0.0 {
        step *= 0.1;
        if step < 1e-17 {
            return Ok(if pole_at_hi { hi } else { lo });
        }
        inner = if pole_at_hi { hi - step } else { lo + step };
    }
    let far_v = if pole_at_hi { far } else { far - 1e-15 * far };
    let (a, b) = if pole_at_hi { (far_v, inner) } else { (inner, far_v) };
    let root = brent::<ReturnMapError, _>(|s| Ok(h(s)), a, b, 1e-16, 300)??;
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwsmodel::{Poly, SmoothPiece};
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn table(f: &[(u32, u32, f64)], g: &[(u32, u32, f64)]) -> TaylorTable {
        SmoothPiece::poly(Poly::from_terms(f), Poly::from_terms(g)).taylor(0.0).unwrap()
    }

    #[test]
    fn rho_basic_values() {
        assert_eq!(aux_rho(0.0, 0.7), 0.0);
        assert!((aux_rho(PI, 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(aux_rho_node(0.0, -2.0), 0.0);
    }

    #[test]
    fn shat_limits() {
        // the gap to 2 pi behaves like sqrt(4 pi nu)
        assert!((aux_shat(1e-8).unwrap() - 2.0 * PI).abs() < 1e-3);
        let gap = 2.0 * PI - aux_shat(1e-6).unwrap();
        assert!((gap / (4.0 * PI * 1e-6f64).sqrt() - 1.0).abs() < 0.01);
        let s = aux_shat(0.1).unwrap();
        assert!(s > PI && s < 2.0 * PI);
        assert!(aux_shat(0.0).is_err());
    }

    #[test]
    fn shat_matches_bisection_oracle() {
        let nu = 0.5;
        let (mut a, mut b) = (PI, 2.0 * PI);
        while b - a > 1e-14 {
            let m = 0.5 * (a + b);
            if aux_rho(m, nu) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let s = aux_shat(nu).unwrap();
        assert!((s - 0.5 * (a + b)).abs() < 1e-12);
        assert!(aux_rho(s, nu).abs() < 1e-12);
    }

    #[test]
    fn g_func_values_and_pole() {
        assert!((g_func(PI / 2.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(g_func(PI, 0.3), Err(ReturnMapError::Pole(_))));
    }

    #[test]
    fn g_func_node_matches_imaginary_frequency() {
        // omega G(omega T; -lambda/omega)/(lambda^2 + omega^2) with omega = i eta
        let (lambda, eta, t) = (-0.7_f64, 0.4_f64, 1.3_f64);
        let om = Complex64::new(0.0, eta);
        let s = om * t;
        let nu = Complex64::new(-lambda, 0.0) / om;
        let gc = (-nu * s).exp() * aux_rho_complex(s, nu) / s.sin();
        let direct = om * gc / (lambda * lambda + om * om);
        let node = eta * g_func_node(eta * t, -lambda / eta).unwrap() / (lambda * lambda - eta * eta);
        assert!(direct.im.abs() < 1e-12);
        assert!((direct.re - node).abs() < 1e-12);
    }

    #[test]
    fn chi_focus_is_one_third_in_rationals() {
        let r = |n: i64| Ratio::from_integer(n);
        let chi = chi_focus_generic([r(0), r(1), r(-1), r(0)], [r(0), r(0), r(-2), r(0), r(0), r(0)]);
        assert_eq!(chi, Ratio::new(1, 3));
        let t = table(&[(0, 1, 1.0), (0, 2, -1.0)], &[(1, 0, -1.0)]);
        assert!((chi_focus(&t).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chi_focus_linear_is_zero() {
        let t = table(&[(1, 0, 0.2), (0, 1, 1.0)], &[(1, 0, -1.0)]);
        assert_eq!(chi_focus(&t).unwrap(), 0.0);
        let node = table(&[(1, 0, 2.0), (0, 1, 1.0)], &[(0, 1, -1.0)]);
        assert!(chi_focus(&node).is_err());
    }

    #[test]
    fn fold_coefficients() {
        let t = table(&[(0, 1, 1.0), (0, 4, -1.0)], &[(0, 0, -1.0)]);
        assert_eq!(sigma_fold(&t).unwrap(), 0.0);
        assert_eq!(chi_fold(&t).unwrap(), 3.0);
        let t = table(&[(0, 1, 1.0)], &[(0, 0, -1.0)]);
        assert_eq!(sigma_fold(&t).unwrap(), 0.0);
        assert_eq!(chi_fold(&t).unwrap(), 0.0);
        let left = table(&[(1, 0, 1.0), (0, 1, 1.0)], &[(0, 0, 1.0)]);
        assert!(sigma_fold(&left).is_err());
        assert_eq!(sigma_fold_left(&left).unwrap(), 1.0);
        assert!((chi_fold_left(&left).unwrap() - 22.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn series_values() {
        let t = table(&[(0, 1, 1.0), (0, 2, -1.0)], &[(1, 0, -1.0)]);
        let (p, tt) = p_focus_series(&t, 0.1).unwrap();
        assert!((p + 0.1 - 2.0 / 3.0 * 0.01).abs() < 1e-15);
        assert!((tt - PI).abs() < 1e-15);
        assert_eq!(p_focus_series(&t, 0.0).unwrap().0, 0.0);
        let t = table(&[(0, 1, 1.0), (0, 4, -1.0)], &[(0, 0, -1.0)]);
        let (p, tt) = p_fold_series(&t, 0.1).unwrap();
        assert!((p + 0.09996).abs() < 1e-15);
        assert!((tt - 0.2).abs() < 1e-15);
        assert_eq!(p_fold_series(&t, 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn affine_type_one_small_r() {
        let res = affine_return(0.3, 1.2, -0.8, 1e-6).unwrap();
        assert_eq!(res.type_tag, AffineType::I);
        assert!(res.t.abs() < 1e-4 && res.p.abs() < 1e-4);
    }

    #[test]
    fn affine_type_three_small_r_limit() {
        let (lambda, omega, b0) = (0.2, 1.5, 0.9);
        let nu = lambda / omega;
        let s = aux_shat(nu).unwrap();
        let limit = b0 / omega * (nu * s).exp() * s.sin();
        let res = affine_return(lambda, omega, b0, 1e-7).unwrap();
        assert_eq!(res.type_tag, AffineType::III);
        assert!((res.p - limit).abs() < 1e-5, "{} vs {limit}", res.p);
    }

    #[test]
    fn affine_type_two_cutoff() {
        let res = affine_return(-0.2, 1.0, 0.5, 10.0).unwrap();
        assert_eq!(res.type_tag, AffineType::II);
        let r_hat = res.r_hat.unwrap();
        assert!(matches!(affine_return(-0.2, 1.0, 0.5, 0.5 * r_hat), Err(ReturnMapError::BelowCutoff { .. })));
        let at = affine_return(-0.2, 1.0, 0.5, r_hat * (1.0 + 1e-9)).unwrap();
        assert!(at.p.abs() < 1e-3);
    }

    #[test]
    fn affine_large_r_asymptote() {
        for &(l, w, b0) in &[(0.3, 1.0, -0.5), (-0.2, 2.0, 0.7), (0.4, 0.8, 1.0)] {
            let r = 1e7;
            let res = affine_return(l, w, b0, r).unwrap();
            assert!((res.t - PI / w).abs() < 1e-5);
            assert!((res.p / r + (l * PI / w).exp()).abs() < 1e-5);
        }
    }

    #[test]
    fn affine_centred_reroutes() {
        let res = affine_return(0.1, 1.0, 0.0, 0.5).unwrap();
        assert_eq!(res.type_tag, AffineType::Centred);
        assert!((res.p + 0.5 * (0.1 * PI).exp()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rho_symmetry(s in -10.0..10.0f64, nu in -2.0..2.0f64) {
            prop_assert!((aux_rho(-s, -nu) - aux_rho(s, nu)).abs() < 1e-9 * (1.0 + aux_rho(s, nu).abs()));
        }

        #[test]
        fn rho_derivative_formula(s in -6.0..6.0f64, nu in -1.5..1.5f64) {
            let h = 1e-6;
            let fd = (aux_rho(s + h, nu) - aux_rho(s - h, nu)) / (2.0 * h);
            prop_assert!((fd - aux_rho_ds(s, nu)).abs() < 1e-6 * (1.0 + fd.abs()));
        }

        #[test]
        fn rho_node_positive_for_large_nu(s in -5.0..5.0f64, nu in 1.05..4.0f64, sign in prop::bool::ANY) {
            prop_assume!(s.abs() > 1e-3);
            let nu = if sign { nu } else { -nu };
            prop_assert!(aux_rho_node(s, nu) > 0.0);
        }

        #[test]
        fn rho_node_complex_identity(s in -4.0..4.0f64, nu in -3.0..3.0f64) {
            let i = Complex64::new(0.0, 1.0);
            let z = aux_rho_complex(i * s, -i * nu);
            let w = aux_rho_node(s, nu);
            prop_assert!((z.re - w).abs() < 1e-9 * (1.0 + w.abs()) && z.im.abs() < 1e-9 * (1.0 + w.abs()));
        }

        #[test]
        fn g_derivative_identity(s in 0.2..6.0f64, nu in -1.0..1.0f64) {
            prop_assume!((s - PI).abs() > 0.2);
            let h = 1e-6;
            let fd = (g_func(s + h, nu).unwrap() - g_func(s - h, nu).unwrap()) / (2.0 * h);
            let exact = aux_rho(s, -nu) / s.sin().powi(2);
            prop_assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()));
        }

        #[test]
        fn shat_identity(nu in 0.01..3.0f64) {
            let s = aux_shat(nu).unwrap();
            prop_assert!(aux_rho(s, nu).abs() < 1e-12 * (nu * s).exp().max(1.0));
            let lhs = aux_rho(s, -nu);
            let rhs = (1.0 + nu * nu) * s.sin().powi(2);
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn affine_derivative_identity(
            lambda in -0.8..0.8f64, omega in 0.3..2.0f64, b0 in -2.0..2.0f64, r in 0.05..5.0f64,
        ) {
            prop_assume!(b0.abs() > 0.05 && lambda.abs() > 0.01);
            let r = if b0 > 0.0 && lambda < 0.0 {
                affine_r_hat(lambda, omega, b0).unwrap() * (1.2 + r)
            } else { r };
            let h = 1e-5 * r;
            let p0 = affine_return(lambda, omega, b0, r).unwrap();
            let pp = affine_return(lambda, omega, b0, r + h).unwrap().p;
            let pm = affine_return(lambda, omega, b0, r - h).unwrap().p;
            let fd = (pp - pm) / (2.0 * h);
            let exact = r / p0.p * (2.0 * lambda * p0.t).exp();
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "fd {} exact {}", fd, exact);
        }
    }
}
