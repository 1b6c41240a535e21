//! The time-integrated heat multiplier
//! γ_t(ξ,r) = e^{iξt}∫₀ᵗ e^{−sr²}e^{−iξs}ds = (e^{iξt} − e^{−r²t})/(r² + iξ)
//! and the weighted ξ-integrals built from it.

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::quad::{integrate_singular, integrate_to_infinity, Tolerance};

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("{name} must be a finite non-negative number, got {x}"));
    }
    Ok(())
}

/// e^{iξt} − e^{−r²t}, written to avoid cancellation when ξt and r²t are small.
#[inline]
fn numerator(t: f64, xi: f64, r2: f64) -> Complex64 {
    let half = (0.5 * xi * t).sin();
    Complex64::new(-2.0 * half * half - (-r2 * t).exp_m1(), (xi * t).sin())
}

/// γ_t(ξ,r) given r² (no argument checks).
#[inline]
pub fn gamma_r2(t: f64, xi: f64, r2: f64) -> Complex64 {
    let z = Complex64::new(r2, xi);
    if z.norm() < 1e-6 {
        // defining integral expanded to third order
        let phase = Complex64::new(0.0, xi * t).exp();
        return phase * (t - z * (t * t / 2.0) + z * z * (t * t * t / 6.0));
    }
    numerator(t, xi, r2) / z
}

/// γ_t(ξ, r); equals t at (ξ, r) = (0, 0).
pub fn gamma_t(t: f64, xi: f64, r: f64) -> Result<Complex64> {
    check_nonneg("t", t)?;
    check_nonneg("r", r)?;
    if !xi.is_finite() {
        return domain("xi must be finite");
    }
    Ok(gamma_r2(t, xi, r * r))
}

/// |γ_t(ξ,r)|² = (1 − 2cos(ξt)e^{−r²t} + e^{−2r²t})/(r⁴ + ξ²).
pub fn gamma_abs2(t: f64, xi: f64, r: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    check_nonneg("r", r)?;
    let r2 = r * r;
    if Complex64::new(r2, xi).norm() < 1e-6 {
        return Ok(gamma_r2(t, xi, r2).norm_sqr());
    }
    Ok(numerator(t, xi, r2).norm_sqr() / (r2 * r2 + xi * xi))
}

/// γ_{s,t} = γ_t − γ_s for 0 ≤ s ≤ t.
pub fn gamma_increment(s: f64, t: f64, xi: f64, r: f64) -> Result<Complex64> {
    check_nonneg("s", s)?;
    if s > t {
        return Err(Error::Ordering(format!("increment requires s <= t, got s={s}, t={t}")));
    }
    Ok(gamma_t(t, xi, r)? - gamma_r2(s, xi, r * r))
}

/// ∫₀^a sin(Ty)e^{−Txy}dy.
pub fn sin_exp_integral(a: f64, x: f64, big_t: f64) -> f64 {
    let e = (-big_t * a * x).exp();
    let d = (1.0 + x * x) * big_t;
    -x * e * (big_t * a).sin() / d + (1.0 - e * (big_t * a).cos()) / d
}

/// ∫₀^a cos(Ty)e^{−Txy}dy.
pub fn cos_exp_integral(a: f64, x: f64, big_t: f64) -> f64 {
    let e = (-big_t * a * x).exp();
    let d = (1.0 + x * x) * big_t;
    e * (big_t * a).sin() / d + x * (1.0 - e * (big_t * a).cos()) / d
}

/// ∫₀^a e^{−2Txy}dy.
pub fn exp2_integral(a: f64, x: f64, big_t: f64) -> f64 {
    -(-2.0 * big_t * x * a).exp_m1() / (2.0 * big_t * x)
}

/// Time argument of γ: a single time or an increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    At(f64),
    Incr(f64, f64),
}

impl TimeSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            TimeSpec::At(t) => check_nonneg("t", t),
            TimeSpec::Incr(s, t) => {
                check_nonneg("s", s)?;
                check_nonneg("t", t)?;
                if s > t {
                    return Err(Error::Ordering(format!("increment requires s <= t, got s={s}, t={t}")));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn eval(&self, xi: f64, r2: f64) -> Complex64 {
        match *self {
            TimeSpec::At(t) => gamma_r2(t, xi, r2),
            TimeSpec::Incr(s, t) => gamma_r2(t, xi, r2) - gamma_r2(s, xi, r2),
        }
    }

    /// (r² + iξ)γ written as Σ c_k e^{iξτ_k}.
    fn exponentials(&self, r2: f64) -> Vec<(f64, f64)> {
        match *self {
            TimeSpec::At(t) => vec![(1.0, t), (-(-r2 * t).exp(), 0.0)],
            TimeSpec::Incr(s, t) => {
                vec![(1.0, t), (-1.0, s), ((-r2 * s).exp() - (-r2 * t).exp(), 0.0)]
            }
        }
    }
}

/// Upper end of a ξ-range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiBound {
    Finite(f64),
    Infinite,
}

/// Re(N₁ conj N₂) = constant + Σ amp·cos(freq·ξ).
struct CosSeries {
    constant: f64,
    terms: Vec<(f64, f64)>,
}

fn cos_series(b1: TimeSpec, b2: TimeSpec, r2: f64) -> CosSeries {
    let e1 = b1.exponentials(r2);
    let e2 = b2.exponentials(r2);
    let mut constant = 0.0;
    let mut terms: Vec<(f64, f64)> = Vec::new();
    for &(c1, t1) in &e1 {
        for &(c2, t2) in &e2 {
            let amp = c1 * c2;
            let w = (t1 - t2).abs();
            if w < 1e-12 {
                constant += amp;
            } else if let Some(slot) = terms.iter_mut().find(|(_, f)| (f - w).abs() <= 1e-14 * w) {
                slot.0 += amp;
            } else {
                terms.push((amp, w));
            }
        }
    }
    terms.retain(|(a, _)| *a != 0.0);
    CosSeries { constant, terms }
}

/// g(ξ) = ξ^p/(c + ξ²) and its first two derivatives.
fn weight_derivs(xi: f64, p: f64, c: f64) -> (f64, f64, f64) {
    let q = c + xi * xi;
    let g = xi.powf(p) / q;
    let l1 = p / xi - 2.0 * xi / q;
    let l1p = -p / (xi * xi) - 2.0 * (c - xi * xi) / (q * q);
    (g, g * l1, g * (l1 * l1 + l1p))
}

/// Antiderivative of g(ξ)cos(ωξ) by three integrations by parts.
fn ibp_primitive(xi: f64, w: f64, p: f64, c: f64) -> f64 {
    let (g, g1, g2) = weight_derivs(xi, p, c);
    let (s, co) = (w * xi).sin_cos();
    g * s / w + g1 * co / (w * w) - g2 * s / (w * w * w)
}

/// Switch point beyond which the integration-by-parts tail is accurate.
fn ibp_switch(w: f64, p: f64) -> f64 {
    400.0 * (p.abs() + 2.0) / w
}

/// ∫_{lo ≤ |ξ| ≤ hi} Re(γ_{b₁}(ξ,r)·conj γ_{b₂}(ξ,r))·|ξ|^{1−2H₀} dξ.
///
/// The oscillating part is integrated directly up to a few hundred periods
/// and closed with an asymptotic integration-by-parts tail.
pub fn xi_section_integral(
    b1: TimeSpec,
    b2: TimeSpec,
    r: f64,
    h0: f64,
    lo: f64,
    hi: XiBound,
    tol: Tolerance,
) -> Result<f64> {
    b1.validate()?;
    b2.validate()?;
    check_nonneg("r", r)?;
    check_nonneg("lower xi bound", lo)?;
    if !(h0 > 0.0 && h0 < 1.0) {
        return domain("Hurst component out of (0,1)");
    }
    let hi_val = match hi {
        XiBound::Finite(h) => {
            if !(h >= lo) {
                return domain(format!("xi range [{lo}, {h}] is empty"));
            }
            h
        }
        XiBound::Infinite => f64::INFINITY,
    };
    if hi_val == lo {
        return Ok(0.0);
    }
    let p = 1.0 - 2.0 * h0;
    let r2 = r * r;
    let c = r2 * r2;
    let series = cos_series(b1, b2, r2);
    let zero = series.constant == 0.0 && series.terms.is_empty();
    if zero {
        return Ok(0.0);
    }
    let full = |xi: f64| -> f64 {
        let v = b1.eval(xi, r2) * b2.eval(xi, r2).conj();
        xi.powf(p) * v.re
    };
    let w_max = series.terms.iter().map(|t| t.1).fold(0.0, f64::max);
    let switch = if w_max > 0.0 { ibp_switch(w_max, p).max(lo) } else { f64::INFINITY };
    let mut total = 0.0;

    // near part: the full product, which stays accurate where pieces cancel
    let near_hi = switch.min(hi_val);
    if near_hi.is_finite() {
        let e_lo = if lo == 0.0 { p } else { 0.0 };
        total += integrate_singular(full, lo, near_hi, e_lo, 0.0, tol)?.value;
    } else {
        // no oscillation at all: the series is a pure constant
        let g = |xi: f64| series.constant * xi.powf(p) / (c + xi * xi);
        let e_lo = if lo == 0.0 { p } else { 0.0 };
        let split = lo.max(1.0);
        if lo < split {
            total += integrate_singular(g, lo, split, e_lo, 0.0, tol)?.value;
        }
        total += integrate_to_infinity(g, split, 0.0, 2.0 - p, tol)?.value;
        return Ok(2.0 * total);
    }
    if switch < hi_val {
        // constant part of the tail
        let g = |xi: f64| xi.powf(p) / (c + xi * xi);
        let tail = match hi {
            XiBound::Finite(h) => integrate_singular(g, switch, h, 0.0, 0.0, tol)?.value,
            XiBound::Infinite => integrate_to_infinity(g, switch, 0.0, 2.0 - p, tol)?.value,
        };
        total += series.constant * tail;
        // oscillating parts of the tail
        for &(amp, w) in &series.terms {
            let own = ibp_switch(w, p).max(switch);
            let direct_hi = own.min(hi_val);
            if direct_hi > switch {
                let f = |xi: f64| xi.powf(p) / (c + xi * xi) * (w * xi).cos();
                let scaled = Tolerance { abs: tol.abs / amp.abs().max(1e-300), ..tol };
                total += amp * integrate_singular(f, switch, direct_hi, 0.0, 0.0, scaled)?.value;
            }
            if own < hi_val {
                let upper = match hi {
                    XiBound::Finite(h) => ibp_primitive(h, w, p, c),
                    XiBound::Infinite => 0.0,
                };
                total += amp * (upper - ibp_primitive(own, w, p, c));
            }
        }
    }
    Ok(2.0 * total)
}

fn default_xi_tol() -> Tolerance {
    Tolerance::new(1e-15, 1e-10)
}

/// ∫_{|ξ| ≤ bound} |γ_{s,t}(ξ,r)|²/|ξ|^{2H₀−1} dξ.
pub fn gamma_xi_integral(s: f64, t: f64, r: f64, h0: f64, bound: XiBound) -> Result<f64> {
    xi_section_integral(TimeSpec::Incr(s, t), TimeSpec::Incr(s, t), r, h0, 0.0, bound, default_xi_tol())
}

/// Γ^{H₀,n}_t(r) = ∫_{−4ⁿ}^{4ⁿ} |γ_t(ξ,r)|²/|ξ|^{2H₀−1} dξ.
pub fn gamma_truncated(t: f64, r: f64, h0: f64, n: u32) -> Result<f64> {
    let bound = 4f64.powi(n as i32);
    xi_section_integral(TimeSpec::At(t), TimeSpec::At(t), r, h0, 0.0, XiBound::Finite(bound), default_xi_tol())
}

/// Lower bound (2/r^{4H₀})(∫₀¹ dξ/((1+ξ²)ξ^{2H₀−1}))(1 − 2e^{−t} + e^{−2t}) on Γ^{H₀,n}_t(r), r ∈ [1, 2ⁿ].
pub fn explosion_lower_bound(t: f64, r: f64, h0: f64, n: u32) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("t must be positive, got {t}"));
    }
    if !(h0 > 0.0 && h0 < 1.0) {
        return domain("Hurst component out of (0,1)");
    }
    if !(r >= 1.0) || r > 2f64.powi(n as i32) {
        return domain(format!("r must lie in [1, 2^n], got r={r}, n={n}"));
    }
    let p = 1.0 - 2.0 * h0;
    let j = integrate_singular(|x: f64| x.powf(p) / (1.0 + x * x), 0.0, 1.0, p, 0.0, Tolerance::default())?.value;
    let h = -(-t).exp_m1();
    Ok(2.0 / r.powf(4.0 * h0) * j * h * h)
}
