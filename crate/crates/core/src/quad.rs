//! Globally adaptive 15-point Gauss–Kronrod quadrature for complex-valued
//! integrands on finite and semi-infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result, C64};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: C64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-12, max_intervals: 20_000 }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let value = kronrod * half;
    // |K - G| bounds the Gauss error; the Kronrod value is far more accurate,
    // so this is conservative.
    let error = ((kronrod - gauss) * half).norm();
    Piece { a, b, value, error }
}

/// Integrates `f` over `[a, b]`, starting from the subdivision given by
/// `breaks` (interior points, any order; points outside are ignored).
pub fn integrate<F: FnMut(f64) -> C64>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: QuadOptions) -> Result<Integral> {
    let mut points: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut heap: BinaryHeap<Piece> = points.windows(2).map(|w| gk15(&mut f, w[0], w[1])).collect();
    let mut total: C64 = heap.iter().map(|p| p.value).sum();
    let mut error: f64 = heap.iter().map(|p| p.error).sum();
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.norm());
        if error <= tol {
            // re-sum to shed drift from the running updates
            total = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
            if error <= tol {
                return Ok(Integral { value: total, error });
            }
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { estimate: error, tolerance: tol });
        }
        let worst = heap.pop().expect("non-empty interval set");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval collapsed to machine precision
            return Err(Error::Quadrature { estimate: error, tolerance: tol });
        }
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}

/// Integrates `f` over `[a, ∞)` via the map `x = a + s / (1 - s)`, `s ∈ [0, 1)`.
/// `scale` sets where the map places its midpoint (`x = a + scale` at `s = 1/2`).
pub fn integrate_to_infinity<F: FnMut(f64) -> C64>(mut f: F, a: f64, scale: f64, opts: QuadOptions) -> Result<Integral> {
    let g = |s: f64| {
        if s >= 1.0 {
            return C64::new(0.0, 0.0);
        }
        let u = s / (1.0 - s);
        let jac = scale / ((1.0 - s) * (1.0 - s));
        let v = f(a + scale * u) * jac;
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let breaks: Vec<f64> = (1..16).map(|k| k as f64 / 16.0).collect();
    integrate(g, 0.0, 1.0, &breaks, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| C64::new(x.powi(5) - 2.0 * x, x * x), -1.0, 2.0, &[], QuadOptions::default()).unwrap();
        assert!((r.value.re - (64.0 / 6.0 - 1.0 / 6.0 - 3.0)).abs() < 1e-13);
        assert!((r.value.im - 3.0).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_finite() {
        let t: f64 = 37.0;
        let r = integrate(|x| C64::new((t * x).cos(), 0.0), 0.0, 10.0, &[], QuadOptions::default()).unwrap();
        assert!((r.value.re - (10.0 * t).sin() / t).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite_algebraic_and_exponential() {
        let opts = QuadOptions::default();
        let r = integrate_to_infinity(|x| C64::new(1.0 / (1.0 + x * x), 0.0), 0.0, 1.0, opts).unwrap();
        assert!((r.value.re - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        let r = integrate_to_infinity(|x| C64::new((-0.01 * x).exp(), 0.0), 0.0, 100.0, opts).unwrap();
        assert!((r.value.re - 100.0).abs() < 1e-8);
    }

    #[test]
    fn singular_integrand_reports_failure() {
        let opts = QuadOptions { max_intervals: 50, ..QuadOptions::default() };
        let err = integrate(|x| C64::new(1.0 / x, 0.0), 0.0, 1.0, &[], opts).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
