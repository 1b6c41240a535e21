//! Adaptive Gauss–Kronrod quadrature with power-law endpoint singularities.
//!
//! A singular endpoint gets a geometric (dyadic) mesh whose last cell is
//! closed analytically with the leading power law. All cells then enter a
//! global adaptive bisection driven by the Kronrod/Gauss difference.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_718_426_900,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Absolute/relative targets and an evaluation budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_evals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_evals: 4_000_000 }
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-14, 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

impl QuadratureResult {
    pub fn combine(&self, other: &QuadratureResult) -> QuadratureResult {
        QuadratureResult {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            evaluations: self.evaluations + other.evaluations,
        }
    }

    pub fn scale(&self, c: f64) -> QuadratureResult {
        QuadratureResult {
            value: c * self.value,
            error_estimate: c.abs() * self.error_estimate,
            evaluations: self.evaluations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// 21-point Kronrod value and |K21 − G10| on [a, b].
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[10] * fc;
    let mut g = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Number of dyadic cells needed before the analytic closing cell is negligible.
fn grading_depth(exponent: f64) -> usize {
    ((60.0 / (1.0 + exponent)).ceil() as usize).clamp(8, 1000)
}

/// Stops the dyadic mesh before cells fall below the floating-point spacing at `x`.
fn usable_depth(depth: usize, h: f64, x: f64) -> usize {
    let floor = 8.0 * f64::EPSILON * x.abs();
    (0..depth).find(|&k| h * 0.5f64.powi(k as i32 + 1) <= floor).unwrap_or(depth)
}

// The power law is exact up to a relative O(δ/h) correction from the smooth factor.
fn closing_error(rem: f64, delta: f64, h: f64) -> f64 {
    10.0 * rem.abs() * (delta / h).max(1e-14)
}

/// ∫_a^b f with f ~ (x−a)^{exponent_a} near a and (b−x)^{exponent_b} near b.
///
/// Pass 0 for a regular endpoint.
pub fn integrate_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    exponent_a: f64,
    exponent_b: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return domain(format!("integration bounds must satisfy a < b, got [{a}, {b}]"));
    }
    if !(exponent_a > -1.0) || !(exponent_b > -1.0) {
        return domain("endpoint exponents must exceed -1");
    }
    let graded_a = exponent_a != 0.0;
    let graded_b = exponent_b != 0.0;
    let (ma, mb) = match (graded_a, graded_b) {
        (true, true) => {
            let m = 0.5 * (a + b);
            (m, m)
        }
        (true, false) => (b, b),
        (false, true) => (a, a),
        (false, false) => (a, b),
    };

    let mut evals = 0usize;
    let mut fixed_value = 0.0;
    let mut fixed_error = 0.0;
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Segment>, evals: &mut usize, lo: f64, hi: f64| {
        let (value, error) = gk21(&f, lo, hi);
        *evals += 21;
        heap.push(Segment { a: lo, b: hi, value, error });
    };

    if graded_a {
        let h = ma - a;
        let depth = usable_depth(grading_depth(exponent_a), h, a);
        for k in 0..depth {
            let hi = a + h * 0.5f64.powi(k as i32);
            let lo = a + h * 0.5f64.powi(k as i32 + 1);
            push(&mut heap, &mut evals, lo, hi);
        }
        let delta = h * 0.5f64.powi(depth as i32);
        let rem = f(a + delta) * delta / (1.0 + exponent_a);
        evals += 1;
        fixed_value += rem;
        fixed_error += closing_error(rem, delta, h);
    }
    if ma < mb {
        push(&mut heap, &mut evals, ma, mb);
    }
    if graded_b {
        let h = b - mb;
        let depth = usable_depth(grading_depth(exponent_b), h, b);
        for k in 0..depth {
            let lo = b - h * 0.5f64.powi(k as i32);
            let hi = b - h * 0.5f64.powi(k as i32 + 1);
            push(&mut heap, &mut evals, lo, hi);
        }
        let delta = h * 0.5f64.powi(depth as i32);
        let rem = f(b - delta) * delta / (1.0 + exponent_b);
        evals += 1;
        fixed_value += rem;
        fixed_error += closing_error(rem, delta, h);
    }

    loop {
        let (mut value, mut error) = (fixed_value, fixed_error);
        for s in heap.iter() {
            value += s.value;
            error += s.error;
        }
        if !value.is_finite() {
            return Err(Error::Accuracy { estimate: f64::INFINITY, partial: value });
        }
        if error <= tol.target(value) {
            return Ok(QuadratureResult { value, error_estimate: error, evaluations: evals });
        }
        if evals >= tol.max_evals {
            return Err(Error::Accuracy { estimate: error, partial: value });
        }
        // refine the worst cells in a batch before re-summing
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) <= 1e-15 * worst.a.abs().max(worst.b.abs()) {
                // cannot split further; freeze it
                fixed_value += worst.value;
                fixed_error += worst.error;
                continue;
            }
            push(&mut heap, &mut evals, worst.a, mid);
            push(&mut heap, &mut evals, mid, worst.b);
        }
    }
}

/// ∫_a^b f for an integrand that is smooth on [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadratureResult> {
    integrate_singular(f, a, b, 0.0, 0.0, tol)
}

/// ∫_a^∞ f via x = a + u/(1−u), for f ~ x^{−decay} at infinity (decay > 1).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    exponent_a: f64,
    decay: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if !(decay > 1.0) {
        return domain(format!("tail decay exponent must exceed 1, got {decay}"));
    }
    let g = |u: f64| {
        let w = 1.0 - u;
        f(a + u / w) / (w * w)
    };
    integrate_singular(g, 0.0, 1.0, exponent_a, decay - 2.0, tol)
}

/// A_{d,H} = ∫_{S^{d−1}} Π_i |ω_i|^{1−2H_i} dω for d ≤ 3.
pub fn angular_constant(d: usize, h_spatial: &[f64]) -> Result<f64> {
    if d == 0 || d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if h_spatial.len() != d {
        return domain(format!("expected {d} spatial Hurst indices, got {}", h_spatial.len()));
    }
    if h_spatial.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
        return domain("Hurst component out of (0,1)");
    }
    let a: Vec<f64> = h_spatial.iter().map(|h| 1.0 - 2.0 * h).collect();
    let tol = Tolerance::new(1e-15, 1e-13);
    match d {
        1 => Ok(2.0),
        2 => Ok(4.0 * sin_cos_integral(a[1], a[0], tol)?),
        _ => Ok(8.0 * sin_cos_integral(a[0] + a[1] + 1.0, a[2], tol)? * sin_cos_integral(a[1], a[0], tol)?),
    }
}

/// ∫₀^{π/2} sin^p θ cos^q θ dθ.
fn sin_cos_integral(p: f64, q: f64, tol: Tolerance) -> Result<f64> {
    let f = |th: f64| th.sin().powf(p) * th.cos().powf(q);
    Ok(integrate_singular(f, 0.0, std::f64::consts::FRAC_PI_2, p, q, tol)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kronrod_rule_is_exact_on_polynomials() {
        // K21 is exact through degree 31, G10 through degree 19
        for deg in 0..=19 {
            let (k, e) = gk21(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert!((k - 1.0 / (deg as f64 + 1.0)).abs() < 1e-15, "deg {deg}");
            assert!(e < 1e-15, "deg {deg}");
        }
        let (k, _) = gk21(&|x: f64| x.powi(30), -1.0, 1.0);
        assert!((k - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_sqrt() {
        let r = integrate_singular(|x| 1.0 / x.sqrt(), 0.0, 1.0, -0.5, 0.0, Tolerance::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!(r.error_estimate <= 1e-11);
    }

    #[test]
    fn both_endpoints_singular() {
        // Beta(1/2, 1/2) = π
        let f = |x: f64| 1.0 / (x * (1.0 - x)).sqrt();
        // floating-point spacing near x = 1 limits the closing cell at b
        let r = integrate_singular(f, 0.0, 1.0, -0.5, -0.5, Tolerance::new(1e-12, 1e-10)).unwrap();
        assert!((r.value - PI).abs() < 1e-10);
    }

    #[test]
    fn strong_singularity() {
        let e = -0.9;
        let r = integrate_singular(|x: f64| x.powf(e), 0.0, 1.0, e, 0.0, Tolerance::default()).unwrap();
        assert!((r.value - 10.0).abs() < 1e-10);
    }

    // Alternating series Σ (−1)^k/(a+2k) with repeated averaging of partial sums.
    fn alternating_oracle(a: f64) -> f64 {
        let mut partial = Vec::new();
        let mut s = 0.0;
        for k in 0..40 {
            s += if k % 2 == 0 { 1.0 } else { -1.0 } / (a + 2.0 * k as f64);
            partial.push(s);
        }
        while partial.len() > 1 {
            partial = partial.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        partial[0]
    }

    #[test]
    fn weighted_arctan_integral() {
        // ∫₀¹ ξ^{1/2}/(1+ξ²) dξ = Σ (−1)^k/(3/2 + 2k)
        let h0: f64 = 0.25;
        let e = 1.0 - 2.0 * h0;
        let r = integrate_singular(|x: f64| x.powf(e) / (1.0 + x * x), 0.0, 1.0, e, 0.0, Tolerance::default()).unwrap();
        assert!((r.value - alternating_oracle(1.0 + e)).abs() < 1e-9);
    }

    #[test]
    fn semi_infinite() {
        let r = integrate_to_infinity(|x| 1.0 / (1.0 + x * x), 0.0, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - PI / 2.0).abs() < 1e-12);
        let r = integrate_to_infinity(|x: f64| (-x).exp() / x.sqrt(), 0.0, -0.5, 3.0, Tolerance::default());
        // exponential decay beats any power
        assert!((r.unwrap().value - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_reports_partial() {
        let tol = Tolerance::new(1e-15, 0.0).with_max_evals(200);
        let err = integrate(|x: f64| (50.0 * x).sin(), 0.0, 100.0, tol).unwrap_err();
        assert!(matches!(err, Error::Accuracy { .. }));
    }

    #[test]
    fn bad_bounds() {
        assert!(integrate(|x| x, 1.0, 0.0, Tolerance::default()).is_err());
        assert!(integrate_singular(|x| x, 0.0, 1.0, -1.0, 0.0, Tolerance::default()).is_err());
    }

    #[test]
    fn angular_constant_examples() {
        assert_eq!(angular_constant(1, &[0.3]).unwrap(), 2.0);
        assert!((angular_constant(2, &[0.5, 0.5]).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!((angular_constant(3, &[0.5, 0.5, 0.5]).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!(matches!(angular_constant(4, &[0.5; 4]), Err(Error::UnsupportedDimension(4))));
    }

    #[test]
    fn angular_constant_quarter_against_trapezoid() {
        let n = 1usize << 22;
        let h = 2.0 * PI / n as f64;
        let mut s = 0.0;
        for j in 0..n {
            let th = j as f64 * h;
            s += (th.cos().abs() * th.sin().abs()).sqrt();
        }
        let trap = s * h;
        let a = angular_constant(2, &[0.25, 0.25]).unwrap();
        assert!((a - trap).abs() < 1e-8, "{a} vs {trap}");
    }

    // ∫_ℝ |x|^a e^{−x²} dx by 1D quadrature, used for tensor products.
    fn axis_moment(a: f64) -> f64 {
        let f = |x: f64| x.powf(a) * (-x * x).exp();
        2.0 * (integrate_singular(f, 0.0, 1.0, a, 0.0, Tolerance::default()).unwrap().value
            + integrate(f, 1.0, 12.0, Tolerance::default()).unwrap().value)
    }

    #[test]
    fn radial_reduction_consistency() {
        for h in [vec![0.3], vec![0.7], vec![0.25, 0.6], vec![0.45, 0.4]] {
            let d = h.len();
            let tensor: f64 = h.iter().map(|hi| axis_moment(1.0 - 2.0 * hi)).product();
            let q = 2.0 * d as f64 - 1.0 - 2.0 * h.iter().sum::<f64>();
            let radial =
                integrate_singular(|r: f64| r.powf(q) * (-r * r).exp(), 0.0, 1.0, q, 0.0, Tolerance::default())
                    .unwrap()
                    .value
                    + integrate(|r: f64| r.powf(q) * (-r * r).exp(), 1.0, 12.0, Tolerance::default()).unwrap().value;
            let a = angular_constant(d, &h).unwrap();
            assert!((tensor - a * radial).abs() < 1e-6 * tensor, "h={h:?}");
        }
    }
}
