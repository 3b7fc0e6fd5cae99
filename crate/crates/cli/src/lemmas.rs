//! Convergence checks of the analytic return maps against simulation.

use std::f64::consts::PI;

use anyhow::{anyhow, Result};
use hlbkit::integrator::{SimPolicy, Side, Tolerances};
use hlbkit::numerics::{geomspace, linear_fit};
use hlbkit::poincare::{half_return, ReturnOptions};
use hlbkit::pwsmodel::{Poly, SmoothPiece};
use hlbkit::returnmaps::{
    affine_r_hat, affine_return, aux_rho, aux_rho_ds, aux_shat, chi_fold, chi_focus, chi_focus_generic, sigma_fold,
};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// One row of the lemma table.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaCheck {
    pub lemma: u8,
    pub name: String,
    pub value: f64,
    pub expected: f64,
    /// Absolute or relative error, as named by `name`.
    pub error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl LemmaCheck {
    fn new(lemma: u8, name: &str, value: f64, expected: f64, error: f64, tol: f64) -> Self {
        Self { lemma, name: name.into(), value, expected, error, tol, pass: error <= tol }
    }
}

/// Whole suite, schema-tagged.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaTable {
    pub schema: &'static str,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaTable {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Fixed-width text rendering.
    pub fn render(&self) -> String {
        let mut s = format!("# {}\n", self.schema);
        s.push_str(&format!("{:<6} {:<44} {:>22} {:>22} {:>12} {:>10} {}\n", "lemma", "check", "value", "expected", "error", "tol", "result"));
        for c in &self.checks {
            s.push_str(&format!(
                "{:<6} {:<44} {:>22.15e} {:>22.15e} {:>12.3e} {:>10.1e} {}\n",
                c.lemma,
                c.name,
                c.value,
                c.expected,
                c.error,
                c.tol,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        s
    }
}

fn opts(tol: f64) -> ReturnOptions {
    let policy = SimPolicy { tol: Tolerances::with_tol(tol), ..SimPolicy::default() };
    ReturnOptions { policy, ..ReturnOptions::default() }
}

/// `x' = y - y^2, y' = -x`.
pub fn focus_example() -> SmoothPiece {
    SmoothPiece::poly(Poly::from_terms(&[(0, 1, 1.0), (0, 2, -1.0)]), Poly::from_terms(&[(1, 0, -1.0)]))
}

/// `x' = y - y^4, y' = -1`.
pub fn fold_example() -> SmoothPiece {
    SmoothPiece::poly(Poly::from_terms(&[(0, 1, 1.0), (0, 4, -1.0)]), Poly::from_terms(&[(0, 0, -1.0)]))
}

/// `x' = y, y' = -(lambda^2 + omega^2) x + 2 lambda y + b0`.
pub fn affine_example(lambda: f64, omega: f64, b0: f64) -> SmoothPiece {
    SmoothPiece::poly(
        Poly::from_terms(&[(0, 1, 1.0)]),
        Poly::from_terms(&[(1, 0, -(lambda * lambda + omega * omega)), (0, 1, 2.0 * lambda), (0, 0, b0)]),
    )
}

/// Exact rationals for table entries that are small fractions.
fn rationals<const N: usize>(v: [f64; N]) -> Result<[Ratio<i64>; N]> {
    let out: Vec<Ratio<i64>> = v
        .iter()
        .map(|&x| {
            Ratio::approximate_float(x)
                .filter(|r: &Ratio<i64>| *r.numer() as f64 / *r.denom() as f64 == x)
                .ok_or_else(|| anyhow!("{x} is not a small rational"))
        })
        .collect::<Result<_>>()?;
    Ok(out.try_into().expect("length N"))
}

/// Slope at `r = 0` of `h(P(r) + r)`, from a geometric grid of half-returns.
///
/// The secant slope `h/r` is fitted linearly in `r`; its intercept is the slope at zero.
fn simulated_slope(piece: &SmoothPiece, lo: f64, hi: f64, h: impl Fn(f64) -> f64) -> Result<f64> {
    let rs = geomspace(lo, hi, 15);
    let o = opts(1e-13);
    let mut ys = Vec::with_capacity(rs.len());
    for &r in &rs {
        let ret = half_return(piece, Side::Right, r, 0.0, &o)?;
        ys.push(h(ret.p + r) / r);
    }
    let (_, intercept, _) = linear_fit(&rs, &ys);
    Ok(intercept)
}

/// Auxiliary-function identities at a few `nu`.
pub fn lemma1() -> Result<Vec<LemmaCheck>> {
    let mut out = vec![];
    let mut worst_root: f64 = 0.0;
    let mut worst_ident: f64 = 0.0;
    let mut worst_deriv: f64 = 0.0;
    for &nu in &[0.05, 0.1, 0.5, 1.0, 2.0] {
        let s = aux_shat(nu)?;
        if !(s > PI && s < 2.0 * PI) {
            return Err(anyhow!("shat({nu}) = {s} outside (pi, 2 pi)"));
        }
        worst_root = worst_root.max(aux_rho(s, nu).abs());
        worst_ident = worst_ident.max((aux_rho(s, -nu) - (1.0 + nu * nu) * s.sin().powi(2)).abs());
        for k in 1..=12 {
            let x = k as f64 * 0.5;
            let h = 1e-6;
            let fd = (aux_rho(x + h, nu) - aux_rho(x - h, nu)) / (2.0 * h);
            worst_deriv = worst_deriv.max((fd - aux_rho_ds(x, nu)).abs() / (1.0 + fd.abs()));
        }
    }
    out.push(LemmaCheck::new(1, "|rho(shat(nu); nu)|", worst_root, 0.0, worst_root, 1e-12));
    out.push(LemmaCheck::new(1, "rho(shat; -nu) = (1+nu^2) sin^2 shat", worst_ident, 0.0, worst_ident, 1e-10));
    out.push(LemmaCheck::new(1, "d rho/ds by finite differences (rel)", worst_deriv, 0.0, worst_deriv, 1e-6));
    Ok(out)
}

/// Focus half-return on `x' = y - y^2, y' = -x`.
pub fn lemma2() -> Result<Vec<LemmaCheck>> {
    let piece = focus_example();
    let t = piece.taylor(0.0)?;
    let jac = rationals([t.a(1), t.a(2), t.b(1), t.b(2)])?;
    let sec = rationals([t.f(2, 0), t.f(1, 1), t.f(0, 2), t.g(2, 0), t.g(1, 1), t.g(0, 2)])?;
    let exact = chi_focus_generic(jac, sec);
    let third = Ratio::new(1, 3);
    let chi = chi_focus(&t)?;
    let exact_err = if exact == third { 0.0 } else { 1.0 };
    let mut out = vec![LemmaCheck::new(2, &format!("chi_focus exact rational = {exact}"), *exact.numer() as f64 / *exact.denom() as f64, 1.0 / 3.0, exact_err, 0.0)];
    out.push(LemmaCheck::new(2, "chi_focus float", chi, 1.0 / 3.0, (chi - 1.0 / 3.0).abs(), 1e-15));
    let slope = simulated_slope(&piece, 1e-3, 1e-1, f64::sqrt)?;
    let want = (2.0 * chi).sqrt();
    out.push(LemmaCheck::new(2, "slope of sqrt(P+r), rel", slope, want, (slope - want).abs() / want, 0.01));
    Ok(out)
}

/// Fold half-return on `x' = y - y^4, y' = -1`.
pub fn lemma3() -> Result<Vec<LemmaCheck>> {
    let piece = fold_example();
    let t = piece.taylor(0.0)?;
    let sigma = sigma_fold(&t)?;
    let chi = chi_fold(&t)?;
    let mut out = vec![
        LemmaCheck::new(3, "sigma_fold exact", sigma, 0.0, sigma.abs(), 0.0),
        LemmaCheck::new(3, "chi_fold exact", chi, 3.0, (chi - 3.0).abs(), 0.0),
    ];
    let slope = simulated_slope(&piece, 1e-3, 1e-1, |v| v.max(0.0).powf(0.25))?;
    let want = (2.0 * chi / 15.0).powf(0.25);
    out.push(LemmaCheck::new(3, "slope of (P+r)^(1/4), rel", slope, want, (slope - want).abs() / want, 0.01));
    Ok(out)
}

/// Affine half-return identities: derivative formula, cutoff radius and
/// agreement with simulation.
pub fn lemma4() -> Result<Vec<LemmaCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_deriv: f64 = 0.0;
    let mut n = 0;
    while n < 20 {
        let lambda: f64 = rng.gen_range(-0.8..0.8);
        let omega: f64 = rng.gen_range(0.3..2.0);
        let b0: f64 = rng.gen_range(-2.0..2.0);
        let u: f64 = rng.gen_range(0.05..5.0);
        if b0.abs() < 0.05 || lambda.abs() < 0.01 {
            continue;
        }
        let r = if b0 > 0.0 && lambda < 0.0 { affine_r_hat(lambda, omega, b0)? * (1.2 + u) } else { u };
        let h = 1e-5 * r;
        let p0 = affine_return(lambda, omega, b0, r)?;
        let fd = (affine_return(lambda, omega, b0, r + h)?.p - affine_return(lambda, omega, b0, r - h)?.p) / (2.0 * h);
        let exact = r / p0.p * (2.0 * lambda * p0.t).exp();
        worst_deriv = worst_deriv.max((fd - exact).abs() / exact.abs());
        n += 1;
    }
    let mut out = vec![LemmaCheck::new(4, "dP/dr = (r/P) e^(2 lambda T), 20 samples, rel", worst_deriv, 0.0, worst_deriv, 1e-6)];

    // Simulated half-returns against the implicit solution.
    let o = opts(1e-12);
    let mut worst_map: f64 = 0.0;
    for &(l, w, b0, r) in &[(0.3, 1.2, -0.8, 0.5), (-0.2, 1.0, 0.5, 3.0), (0.2, 1.5, 0.9, 0.7), (-0.4, 0.7, -1.1, 2.0)] {
        let a = affine_return(l, w, b0, r)?;
        let s = half_return(&affine_example(l, w, b0), Side::Right, r, 0.0, &o)?;
        worst_map = worst_map.max(((a.p - s.p) / a.p).abs()).max(((a.t - s.t) / a.t).abs());
    }
    out.push(LemmaCheck::new(4, "implicit (P, T) vs simulation, rel", worst_map, 0.0, worst_map, 1e-6));

    // Type II cutoff: trace the orbit through the fold at the origin backwards.
    let (l, w, b0) = (-0.2, 1.0, 0.5);
    let r_hat = affine_r_hat(l, w, b0)?;
    let back = SmoothPiece::poly(
        Poly::from_terms(&[(0, 1, -1.0)]),
        Poly::from_terms(&[(1, 0, l * l + w * w), (0, 1, -2.0 * l), (0, 0, -b0)]),
    );
    let sim = half_return(&back, Side::Right, -1e-10, 0.0, &o)?.p;
    out.push(LemmaCheck::new(4, "Type II r_hat vs simulated grazing orbit, rel", sim, r_hat, ((sim - r_hat) / r_hat).abs(), 1e-6));
    Ok(out)
}

/// Every lemma check in order.
pub fn verify_lemmas() -> Result<LemmaTable> {
    let mut checks = lemma1()?;
    checks.extend(lemma2()?);
    checks.extend(lemma3()?);
    checks.extend(lemma4()?);
    Ok(LemmaTable { schema: "hlb-lemmas/1", checks })
}
