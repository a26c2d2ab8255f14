//! Adaptive Gauss-Kronrod quadrature used as the independent brute-force
//! oracle for every closed-form rate, moment, and Fourier transform.
//!
//! The 3D integrals being checked are all azimuthally symmetric, so they
//! reduce exactly to a radial integral (times an inner polar integral for the
//! dissipative moment); nested adaptive 1D rules replace cubature. Fixed
//! 15-point Gauss-Kronrod panels, bisection of the worst panel, deterministic
//! panel ordering: identical inputs give bitwise-identical results.

use crate::error::{CoreError, Result};
use crate::rates::RateFunction;
use crate::units::DpParams;

/// Default relative tolerance of the oracle.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

const MAX_PANELS: usize = 4096;

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights. Same values as QUADPACK's dqk15.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

/// A scalar integrand over a finite interval.
///
/// Semi-infinite rate integrals are truncated at construction: the Gaussian
/// damping factor `exp(-Q²d²/ħ²)` makes the tail beyond `10·ħ/d` smaller than
/// 1e-40 of the total, so [`Integrand1D::semi_infinite`] cuts there.
pub struct Integrand1D<'a> {
    f: &'a (dyn Fn(f64) -> f64 + Sync),
    domain: (f64, f64),
    /// Points where the initial panel set is split (integrable kinks).
    singularity_hints: Vec<f64>,
}

impl<'a> Integrand1D<'a> {
    pub fn new(f: &'a (dyn Fn(f64) -> f64 + Sync), lower: f64, upper: f64) -> Self {
        Self {
            f,
            domain: (lower, upper),
            singularity_hints: Vec::new(),
        }
    }

    /// Integrand on `[lower, ∞)` with a Gaussian tail of the given decay
    /// scale; the domain is truncated at `lower.max(0) + 10·decay_scale`.
    pub fn semi_infinite(
        f: &'a (dyn Fn(f64) -> f64 + Sync),
        lower: f64,
        decay_scale: f64,
    ) -> Self {
        Self {
            f,
            domain: (lower, lower.max(0.0) + 10.0 * decay_scale),
            singularity_hints: Vec::new(),
        }
    }

    pub fn with_hints(mut self, hints: Vec<f64>) -> Self {
        self.singularity_hints = hints;
        self
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// One 15-point Gauss-Kronrod panel, returning (value, error estimate).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut result_gauss = f_center * WG[3];
    let mut result_kronrod = f_center * WGK[7];
    let mut result_abs = result_kronrod.abs();
    let mut fv = [0.0f64; 15];
    fv[7] = f_center;

    for (j, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        let sum = f1 + f2;
        result_kronrod += WGK[j] * sum;
        result_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            // odd Kronrod index -> Gauss node
            result_gauss += WG[j / 2] * sum;
        }
    }

    let mean = result_kronrod * 0.5;
    let mut result_asc = WGK[7] * (f_center - mean).abs();
    for (j, &v) in fv.iter().enumerate().take(7) {
        result_asc += WGK[j] * ((v - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let value = result_kronrod * half;
    result_abs *= half.abs();
    result_asc *= half.abs();

    let mut err = ((result_kronrod - result_gauss) * half).abs();
    if result_asc != 0.0 && err != 0.0 {
        err = result_asc * (200.0 * err / result_asc).powf(1.5).min(1.0);
    }
    let min_err = 50.0 * f64::EPSILON * result_abs;
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && min_err > err {
        err = min_err;
    }
    (value, err)
}

/// Adaptive integration of `f` over its (finite or truncated) domain until
/// the estimated relative error drops below `rel_tol`.
///
/// Non-convergence after the panel budget returns
/// [`CoreError::OracleFailure`] carrying the best estimate.
pub fn integrate_radial(integrand: &Integrand1D, rel_tol: f64) -> Result<QuadratureResult> {
    if !(rel_tol > 1e-14 && rel_tol < 1e-2) {
        return Err(CoreError::Param {
            name: "rel_tol",
            reason: format!("must lie in (1e-14, 1e-2), got {rel_tol:e}"),
        });
    }
    let (a, b) = integrand.domain;
    if !(a.is_finite() && b.is_finite() && b >= a) {
        return Err(CoreError::Param {
            name: "domain",
            reason: format!("invalid interval [{a:e}, {b:e}]"),
        });
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            evaluations: 0,
        });
    }

    // Initial panels: the domain split at interior hints.
    let mut edges: Vec<f64> = vec![a];
    let mut hints = integrand.singularity_hints.clone();
    hints.sort_by(f64::total_cmp);
    for h in hints {
        if h > a && h < b {
            edges.push(h);
        }
    }
    edges.push(b);

    let f = integrand.f;
    let mut evaluations = 0usize;
    let mut panels: Vec<Panel> = Vec::with_capacity(64);
    for w in edges.windows(2) {
        let (value, error) = gk15(&f, w[0], w[1]);
        evaluations += 15;
        panels.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if err <= rel_tol * total.abs() {
            return Ok(QuadratureResult {
                value: total,
                abs_error_estimate: err,
                evaluations,
            });
        }
        if panels.len() >= MAX_PANELS {
            return Err(CoreError::OracleFailure {
                best: total,
                error_estimate: err,
                evaluations,
            });
        }

        // Bisect the worst panel. Index scan keeps the refinement order
        // deterministic.
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.error.total_cmp(&y.error))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let Panel { a, b, .. } = panels[worst];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // Interval no longer splittable in f64; accept what we have.
            let total: f64 = panels.iter().map(|p| p.value).sum();
            let err: f64 = panels.iter().map(|p| p.error).sum();
            return Err(CoreError::OracleFailure {
                best: total,
                error_estimate: err,
                evaluations,
            });
        }
        let (v1, e1) = gk15(&f, a, mid);
        let (v2, e2) = gk15(&f, mid, b);
        evaluations += 30;
        panels[worst] = Panel {
            a,
            b: mid,
            value: v1,
            error: e1,
        };
        panels.push(Panel {
            a: mid,
            b,
            value: v2,
            error: e2,
        });
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// 3D Fourier transform of an isotropic momentum-space rate density,
/// `∫ d³Q e^{iQ·x/ħ} Γ(Q)`, reduced to the radial integral
/// `4π ∫ Q² Γ(Q) sinc(QΔ/ħ) dQ`.
///
/// At Δ = 0 this is the total rate Λ of the model.
pub fn fourier_of_rate(rate: &RateFunction, delta: f64) -> Result<f64> {
    Ok(fourier_of_rate_with(rate, delta, DEFAULT_REL_TOL)?.value)
}

/// Same as [`fourier_of_rate`] with an explicit tolerance, returning the full
/// quadrature diagnostics.
pub fn fourier_of_rate_with(
    rate: &RateFunction,
    delta: f64,
    rel_tol: f64,
) -> Result<QuadratureResult> {
    if !(delta >= 0.0) {
        return Err(CoreError::Param {
            name: "delta",
            reason: format!("must be >= 0, got {delta:e}"),
        });
    }
    let hbar = rate.hbar();
    let g = |q: f64| {
        4.0 * std::f64::consts::PI * q * q * rate.evaluate(q) * sinc(q * delta / hbar)
    };
    let integrand = Integrand1D::semi_infinite(&g, 0.0, rate.momentum_decay_scale());
    integrate_radial(&integrand, rel_tol)
}

/// Mean kinetic-energy production rate `(1/2m) ∫ d³Q |L(Q,p)|² (Q² + 2 p·Q)`
/// for a momentum eigenstate `p`, evaluated by nested (radial × polar)
/// quadrature. SI units throughout; returns J·s⁻¹.
///
/// This is the brute-force check of the closed-form energy flow
/// `γ - ξ·p²/2m` of the dissipative model.
pub fn dissipative_energy_moment(p: [f64; 3], m: f64, dp: &DpParams) -> Result<f64> {
    dissipative_energy_moment_with(p, m, dp, DEFAULT_REL_TOL)
}

pub fn dissipative_energy_moment_with(
    p: [f64; 3],
    m: f64,
    dp: &DpParams,
    rel_tol: f64,
) -> Result<f64> {
    if !(m > 0.0) {
        return Err(CoreError::Param {
            name: "m",
            reason: format!("must be > 0, got {m:e}"),
        });
    }
    let c = crate::constants::PhysicalConstants::codata();
    let p_norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let k = dp.m_r / m;
    let a_sqrt = dp.r0 / c.hbar; // exponent is -(a_sqrt*((1+k)Q + 2k p mu))^2
    let prefactor = m * c.g / (2.0 * std::f64::consts::PI * c.hbar * c.hbar);

    // Inner polar integral at fixed Q, by its own adaptive rule; the exponent
    // can be sharp in mu when k*p is large.
    let inner = |q: f64| {
        let h = |mu: f64| {
            let arg = a_sqrt * ((1.0 + k) * q + 2.0 * k * p_norm * mu);
            (-arg * arg).exp() * (q * q + 2.0 * p_norm * q * mu)
        };
        let integrand = Integrand1D::new(&h, -1.0, 1.0);
        integrate_radial(&integrand, (rel_tol * 0.1).max(2e-14))
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };

    // Momentum support: Gaussian centered at most at 2k p/(1+k) with width
    // ħ/(R0 (1+k)); cover both comfortably.
    let q_max = (2.0 * k * p_norm / (1.0 + k) + 10.0 * c.hbar / dp.r0).max(10.0 * c.hbar / dp.r0);
    let g = |q: f64| prefactor * inner(q);
    let integrand = Integrand1D::new(&g, 0.0, q_max);
    let result = integrate_radial(&integrand, rel_tol)?;
    if result.value.is_nan() {
        return Err(CoreError::OracleFailure {
            best: result.value,
            error_estimate: result.abs_error_estimate,
            evaluations: result.evaluations,
        });
    }
    Ok(result.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integral_matches_sqrt_pi_over_2() {
        let f = |x: f64| (-x * x).exp();
        let integrand = Integrand1D::semi_infinite(&f, 0.0, 1.0);
        let r = integrate_radial(&integrand, 1e-10).unwrap();
        let exact = std::f64::consts::PI.sqrt() / 2.0;
        assert!((r.value - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn zero_integrand_is_exactly_zero() {
        let f = |_: f64| 0.0;
        let integrand = Integrand1D::new(&f, 0.0, 5.0);
        let r = integrate_radial(&integrand, 1e-9).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.abs_error_estimate, 0.0);
    }

    #[test]
    fn rel_tol_outside_contract_rejected() {
        let f = |x: f64| x;
        let integrand = Integrand1D::new(&f, 0.0, 1.0);
        assert!(integrate_radial(&integrand, 1e-15).is_err());
        assert!(integrate_radial(&integrand, 0.5).is_err());
    }

    #[test]
    fn deterministic_bitwise() {
        let f = |x: f64| (x * 17.3).sin().abs() * (-x * x * 0.3).exp();
        let integrand = Integrand1D::new(&f, 0.0, 8.0);
        let r1 = integrate_radial(&integrand, 1e-9).unwrap();
        let r2 = integrate_radial(&integrand, 1e-9).unwrap();
        assert_eq!(r1.value.to_bits(), r2.value.to_bits());
        assert_eq!(r1.evaluations, r2.evaluations);
    }

    #[test]
    fn hints_split_kinked_integrand() {
        let f = |x: f64| (x - 0.337).abs();
        let exact = {
            // integral of |x-c| over [0,1]
            let c: f64 = 0.337;
            c * c / 2.0 + (1.0 - c) * (1.0 - c) / 2.0
        };
        let integrand = Integrand1D::new(&f, 0.0, 1.0).with_hints(vec![0.337]);
        let r = integrate_radial(&integrand, 1e-12).unwrap();
        assert!((r.value - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn oscillatory_integrand_converges() {
        // int_0^inf sin(bx) e^{-x^2} ... compare against erf-based closed form
        // int_0^inf e^{-x^2} sin(b x)/x dx = (pi/2) erf(b/2)
        let b = 11.0;
        let f = move |x: f64| {
            if x == 0.0 {
                b
            } else {
                (-x * x).exp() * (b * x).sin() / x
            }
        };
        let integrand = Integrand1D::semi_infinite(&f, 0.0, 1.0);
        let r = integrate_radial(&integrand, 1e-11).unwrap();
        let exact = std::f64::consts::PI / 2.0 * statrs::function::erf::erf(b / 2.0);
        assert!((r.value - exact).abs() / exact.abs() < 1e-10, "{} vs {exact}", r.value);
    }
}
