//! Digamma, the classical integral π/sin(πβ), and the constants governing the
//! growth of the renormalization constant.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad::{integrate_singular, QuadratureResult, Tolerance};

/// Coefficients B_{2k}/(2k) of the asymptotic expansion, k = 1..8.
const ASYMPTOTIC: [f64; 8] =
    [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0, -3617.0 / 8160.0];

/// Digamma function Ψ(x) = Γ′(x)/Γ(x) for x > 0.
///
/// Shifts the argument up to x ≥ 10 with Ψ(x) = Ψ(x+1) − 1/x, then sums the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("digamma requires x > 0, got {x}"));
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    let mut pow = inv2;
    for c in ASYMPTOTIC {
        series += c * pow;
        pow *= inv2;
    }
    Ok(shift + x.ln() - 0.5 / x - series)
}

/// π/sin(πβ) = ∫₀^∞ dt/(t^β(1+t)).
pub fn classical_integral(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return domain(format!("beta must lie in (0,1), got {beta}"));
    }
    if beta < 1e-8 || 1.0 - beta < 1e-8 {
        return Err(Error::Overflow(format!("pi/sin(pi*beta) diverges at beta = {beta}")));
    }
    Ok(PI / (PI * beta).sin())
}

/// Quadrature of ∫₀^∞ dt/(t^β(1+t)), folded onto [0,1] by t ↦ 1/t.
pub fn classical_integral_quadrature(beta: f64, tol: Tolerance) -> Result<QuadratureResult> {
    if !(beta > 0.0 && beta < 1.0) {
        return domain(format!("beta must lie in (0,1), got {beta}"));
    }
    let near = integrate_singular(|t| t.powf(-beta) / (1.0 + t), 0.0, 1.0, -beta, 0.0, tol)?;
    let far = integrate_singular(|u| u.powf(beta - 1.0) / (1.0 + u), 0.0, 1.0, beta - 1.0, 0.0, tol)?;
    Ok(near.combine(&far))
}

/// Constants c₁, c₂ and the κ = 0 slope for a given (α, κ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants {
    pub alpha: f64,
    pub kappa: f64,
    /// Geometric-growth constant; `None` when κ = 0.
    pub c1: Option<f64>,
    /// ∫₀^∞ x^{α−1}/(1+x²) dx = π/(2 sin(απ/2)).
    pub c2: f64,
    /// Growth per truncation level when κ = 0: π ln2 / sin(απ/2).
    pub slope: f64,
}

fn check_alpha_kappa(alpha: f64, kappa: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return domain(format!("alpha must lie in (0,2), got {alpha}"));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return domain(format!("kappa must be >= 0, got {kappa}"));
    }
    Ok(())
}

pub fn renorm_constants(alpha: f64, kappa: f64) -> Result<RenormConstants> {
    check_alpha_kappa(alpha, kappa)?;
    let s = (alpha * PI / 2.0).sin();
    let c1 = if kappa > 0.0 {
        let sum = digamma((alpha + kappa + 2.0) / 4.0)? + digamma((4.0 - alpha) / 4.0)?
            - digamma((alpha + kappa) / 4.0)?
            - digamma((2.0 - alpha) / 4.0)?;
        Some(sum / (4.0 * kappa))
    } else {
        None
    };
    Ok(RenormConstants { alpha, kappa, c1, c2: PI / (2.0 * s), slope: PI * LN_2 / s })
}

/// c₁ from its integral definition
/// (1/κ)(∫₀¹ x^{α+κ−1}/(1+x²)dx + ∫₁^∞ x^{α−1}/(1+x²)dx).
pub fn c1_quadrature(alpha: f64, kappa: f64, tol: Tolerance) -> Result<f64> {
    check_alpha_kappa(alpha, kappa)?;
    if kappa == 0.0 {
        return domain("c1 is only defined for kappa > 0");
    }
    let e = alpha + kappa - 1.0;
    let inner = integrate_singular(|x| x.powf(e) / (1.0 + x * x), 0.0, 1.0, e, 0.0, tol)?;
    Ok((inner.value + c2_tail(alpha, tol)?) / kappa)
}

/// c₂ = ∫₀^∞ x^{α−1}/(1+x²)dx by quadrature.
pub fn c2_quadrature(alpha: f64, tol: Tolerance) -> Result<f64> {
    check_alpha_kappa(alpha, 0.0)?;
    let e = alpha - 1.0;
    let head = integrate_singular(|x| x.powf(e) / (1.0 + x * x), 0.0, 1.0, e, 0.0, tol)?;
    Ok(head.value + c2_tail(alpha, tol)?)
}

// ∫₁^∞ x^{α−1}/(1+x²)dx = ∫₀¹ u^{1−α}/(1+u²)du.
fn c2_tail(alpha: f64, tol: Tolerance) -> Result<f64> {
    let e = 1.0 - alpha;
    Ok(integrate_singular(|u| u.powf(e) / (1.0 + u * u), 0.0, 1.0, e, 0.0, tol)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Σ_{n≥0} 1/((n+a)(n+b)) by direct summation plus Richardson-corrected tail.
    fn pair_series(a: f64, b: f64) -> f64 {
        let partial = |m: usize| -> f64 {
            let mut s = 0.0;
            for n in (0..m).rev() {
                let n = n as f64;
                s += 1.0 / ((n + a) * (n + b));
            }
            s
        };
        let m = 20_000;
        let s1 = partial(m) + 1.0 / (m as f64 + 0.5 * (a + b - 1.0));
        let s2 = partial(2 * m) + 1.0 / (2.0 * m as f64 + 0.5 * (a + b - 1.0));
        // tail error is O(m^-3)
        (8.0 * s2 - s1) / 7.0
    }

    #[test]
    fn digamma_telescopes() {
        let d = digamma(2.0).unwrap() - digamma(1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
    }

    #[test]
    fn digamma_known_values() {
        // Ψ(1) = −γ, Ψ(1/2) = −γ − 2 ln 2
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0).unwrap() + euler).abs() < 1e-14);
        assert!((digamma(0.5).unwrap() + euler + 2.0 * LN_2).abs() < 1e-13);
    }

    #[test]
    fn digamma_series_identity_unit_pair() {
        let lhs = pair_series(1.0, 2.0);
        let rhs = digamma(2.0).unwrap() - digamma(1.0).unwrap();
        assert!((lhs - 1.0).abs() < 1e-10);
        assert!((rhs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn digamma_recurrence_against_series() {
        for x in [0.3, 1.7, 5.2] {
            let step = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((step - 1.0 / x).abs() < 1e-12, "x = {x}");
            // b = a + 1: Σ 1/((n+x)(n+x+1)) = 1/x
            assert!((pair_series(x, x + 1.0) - step).abs() < 1e-10);
        }
    }

    #[test]
    fn digamma_series_identity_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.1..=5.0);
            let mut b: f64 = rng.gen_range(0.1..=5.0);
            if (a - b).abs() < 1e-3 {
                b += 0.5;
            }
            let rhs = (digamma(b).unwrap() - digamma(a).unwrap()) / (b - a);
            let lhs = pair_series(a, b);
            assert!((lhs - rhs).abs() < 1e-8, "a={a} b={b} lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn digamma_rejects_nonpositive() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn classical_integral_values() {
        assert!((classical_integral(0.5).unwrap() - PI).abs() < 1e-15);
        let v = classical_integral(0.25).unwrap();
        assert!((v - 4.442_882_938).abs() < 1e-9);
        for k in 1..10 {
            let beta = k as f64 / 10.0;
            let v = classical_integral(beta).unwrap();
            assert!((v * (PI * beta).sin() - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn classical_integral_quadrature_agrees() {
        let q = classical_integral_quadrature(0.25, Tolerance::default()).unwrap();
        assert!((q.value - 4.442_882_938_158_366).abs() < 1e-8);
    }

    #[test]
    fn classical_integral_signals() {
        assert!(matches!(classical_integral(1e-9), Err(Error::Overflow(_))));
        assert!(matches!(classical_integral(1.0 - 1e-9), Err(Error::Overflow(_))));
        assert!(matches!(classical_integral(0.0), Err(Error::Domain(_))));
        assert!(matches!(classical_integral(1.2), Err(Error::Domain(_))));
    }

    #[test]
    fn renorm_constants_examples() {
        let c = renorm_constants(1.0, 1.0).unwrap();
        // ∫₀¹ x/(1+x²) = ln2/2, ∫₁^∞ 1/(1+x²) = π/4
        let expected = LN_2 / 2.0 + PI / 4.0;
        assert!((c.c1.unwrap() - expected).abs() < 1e-12);
        assert!((c.c1.unwrap() - 1.131_971_754).abs() < 1e-9);
        let c = renorm_constants(1.0, 0.0).unwrap();
        assert!(c.c1.is_none());
        assert!((c.c2 - PI / 2.0).abs() < 1e-15);
        let c = renorm_constants(0.5, 0.0).unwrap();
        assert!((c.slope - 3.079_8).abs() < 1e-3);
        assert!((c.slope - PI * LN_2 / (PI / 4.0).sin()).abs() < 1e-14);
        assert!((c.slope - 2.0 * LN_2 * c.c2).abs() < 1e-14);
    }

    #[test]
    fn renorm_constants_domain() {
        assert!(renorm_constants(0.0, 1.0).is_err());
        assert!(renorm_constants(2.0, 1.0).is_err());
        assert!(renorm_constants(1.0, -0.1).is_err());
    }

    #[test]
    fn c1_forms_agree_on_grid() {
        let tol = Tolerance::new(1e-13, 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                let alpha = 0.2 + 1.6 * (i as f64 + 0.5) / 5.0;
                let kappa = 0.1 + 1.9 * (j as f64 + 0.5) / 5.0;
                let closed = renorm_constants(alpha, kappa).unwrap().c1.unwrap();
                let quad = c1_quadrature(alpha, kappa, tol).unwrap();
                assert!((closed - quad).abs() < 1e-8, "alpha={alpha} kappa={kappa}");
            }
        }
    }

    #[test]
    fn c2_forms_agree() {
        let tol = Tolerance::new(1e-13, 1e-12);
        for alpha in [0.1, 0.5, 1.0, 1.5, 1.9] {
            let closed = renorm_constants(alpha, 0.0).unwrap().c2;
            let quad = c2_quadrature(alpha, tol).unwrap();
            assert!((closed - quad).abs() < 1e-9 * closed, "alpha={alpha}");
        }
    }
}
