//! Momentum-space jump process of the dissipative collapse model.
//!
//! The dissipative generator is translation covariant, so momentum
//! populations close on themselves and the §-level energy claims reduce to a
//! classical linear Boltzmann process: a particle with momentum p waits an
//! exponential time, then receives a kick Q drawn from |L(Q,p)|² d³Q.
//!
//! Everything here is in scaled units: ħ = 1, R₀ = 1, Λ (the k = 0 total
//! rate) = 1, k_B = 1. With k = m_r/m the differential kick rate over
//! magnitude Q and alignment μ = cos θ (azimuth uniform) is
//!
//!   ρ(Q, μ; p) = π^{−1/2} · exp(−((1+k)Q + 2kpμ)²),
//!
//! the closed-form energy flow is dE/dt = γ − ξE with
//!
//!   γ = 1/(4m(1+k)³),  ξ = 4k/(3(1+k)³),  T = 2γ/(3ξ) = 1/(8km),
//!
//! and the stationary momentum distribution is Maxwell-Boltzmann at T.
//!
//! Kicks are drawn from a tabulated joint inverse CDF over (Q, cos θ) on a
//! 512×256 grid, rebuilt lazily at log-spaced momentum anchors (24 per
//! decade) and interpolated between them; the far radial tail (the last
//! 1/512 quantile cell) is inverted exactly instead of extrapolating the
//! table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::erf::{erf, erfc};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{CoreError, Result};
use crate::quadrature::{integrate_radial, Integrand1D};

const SQRT_PI: f64 = 1.772_453_850_905_516;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below 2k|p| of this size the kick distribution is indistinguishable from
/// its isotropic p = 0 limit and the dedicated zero-momentum table is used.
const ISOTROPIC_THRESHOLD: f64 = 1e-4;

/// Operator-valued kick-rate kernel |L(Q,p)|² in scaled units.
#[derive(Debug, Clone)]
pub struct DissipativeKernel {
    /// Dimensionless particle mass.
    pub mass: f64,
    /// Dissipation parameter k = m_r/m; k = 0 recovers pure decoherence.
    pub k: f64,
    total_rate: f64,
}

impl DissipativeKernel {
    /// Construct and cache the total rate (computed by quadrature at p = 0;
    /// the rate is independent of p, which the tests verify explicitly).
    pub fn new(mass: f64, k: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(CoreError::Param {
                name: "mass",
                reason: format!("must be > 0, got {mass:e}"),
            });
        }
        if !(k >= 0.0) {
            return Err(CoreError::Param {
                name: "k",
                reason: format!("must be >= 0, got {k:e}"),
            });
        }
        let mut kernel = Self {
            mass,
            k,
            total_rate: 0.0,
        };
        kernel.total_rate = kernel.total_rate_at(0.0)?;
        Ok(kernel)
    }

    /// Differential rate over (Q, μ) with the volume element absorbed:
    /// ∫₀^∞ dQ ∫₋₁¹ dμ ρ(Q,μ) is the total jump rate.
    pub fn rate_density(&self, q: f64, mu: f64, p: f64) -> f64 {
        assert!(q > 0.0 && (-1.0..=1.0).contains(&mu) && p >= 0.0);
        let arg = (1.0 + self.k) * q + 2.0 * self.k * p * mu;
        INV_SQRT_PI * (-arg * arg).exp()
    }

    /// Total jump rate at momentum magnitude p, by adaptive quadrature of
    /// the μ-integrated density. Analytically this equals Λ/(1+k) = 1/(1+k)
    /// for every p.
    pub fn total_rate_at(&self, p: f64) -> Result<f64> {
        let k = self.k;
        let b = 2.0 * k * p;
        // inner μ-integral in closed form:
        // ∫₋₁¹ e^{−(a+bμ)²} dμ = √π (erf(a+b) − erf(a−b)) / (2b)
        let inner = move |a: f64| -> f64 {
            if b < 1e-3 {
                // series in b avoids the 0/0; relative error O(b⁴)
                2.0 * (-a * a).exp() * (1.0 + b * b * (2.0 * a * a - 1.0) / 3.0)
            } else {
                SQRT_PI * (erf(a + b) - erf(a - b)) / (2.0 * b)
            }
        };
        let f = move |q: f64| {
            let a = (1.0 + k) * q;
            INV_SQRT_PI * inner(a)
        };
        let q_max = (2.0 * k * p + 10.0) / (1.0 + k) + 1.0;
        let integrand = Integrand1D::new(&f, 0.0, q_max);
        Ok(integrate_radial(&integrand, 1e-10)?.value)
    }

    /// Cached total rate (independent of p).
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Rate of kicks whose component along p̂ falls in [lo, hi), by
    /// quadrature with the μ-window integrated in closed form. This is the
    /// cell-to-cell transition rate of the momentum ladder.
    pub fn parallel_cell_rate(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(hi > lo) {
            return Err(CoreError::Param {
                name: "cell",
                reason: format!("need lo < hi, got [{lo:e}, {hi:e})"),
            });
        }
        let k = self.k;
        let b = 2.0 * k * p;
        // antiderivative of e^{−(a+bμ)²} in μ
        let anti = move |a: f64, mu: f64| -> f64 {
            if b < 1e-12 {
                (-a * a).exp() * mu
            } else {
                SQRT_PI / (2.0 * b) * erf(a + b * mu)
            }
        };
        let f = move |q: f64| {
            let mu_lo = (lo / q).max(-1.0);
            let mu_hi = (hi / q).min(1.0);
            if mu_lo >= mu_hi {
                return 0.0;
            }
            let a = (1.0 + k) * q;
            INV_SQRT_PI * (anti(a, mu_hi) - anti(a, mu_lo))
        };
        let q_max = (2.0 * k * p + 10.0) / (1.0 + k) + 1.0;
        // kinks where the μ-window starts clipping
        let hints: Vec<f64> = [lo.abs(), hi.abs()]
            .into_iter()
            .filter(|&x| x > 0.0 && x < q_max)
            .collect();
        let integrand = Integrand1D::new(&f, 0.0, q_max).with_hints(hints);
        Ok(integrate_radial(&integrand, 1e-9)?.value)
    }
}

/// The closed-form coefficients of the scaled energy flow dE/dt = γ − ξE.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScaledDissipativeParams {
    pub gamma: f64,
    pub xi: f64,
    /// None for k = 0 (infinite noise temperature, no relaxation).
    pub temperature: Option<f64>,
    pub k: f64,
    pub mass: f64,
}

impl ScaledDissipativeParams {
    pub fn new(mass: f64, k: f64) -> Self {
        let one_k3 = (1.0 + k).powi(3);
        Self {
            gamma: 1.0 / (4.0 * mass * one_k3),
            xi: 4.0 * k / (3.0 * one_k3),
            temperature: if k > 0.0 {
                Some(1.0 / (8.0 * k * mass))
            } else {
                None
            },
            k,
            mass,
        }
    }

    /// Closed-form mean energy at time t (scaled units), sharing the small-ξt
    /// branch with the SI formula.
    pub fn energy_at(&self, e0: f64, t: f64) -> f64 {
        crate::rates::energy_relaxation(e0, t, self.gamma, self.xi)
    }
}

// ---------------------------------------------------------------------------
// Kick sampling
// ---------------------------------------------------------------------------

const N_Q: usize = 512;
const N_MU: usize = 256;
const ANCHORS_PER_DECADE: f64 = 24.0;
const DENSE: usize = 4096;

/// Inverse-CDF tables at one momentum anchor.
struct AnchorTable {
    /// μ at the quantiles ξ = j/N_MU, j = 0..=N_MU.
    mu_quantiles: Vec<f64>,
    /// Q at the quantiles ξ = i/N_Q (i = 0..=N_Q) for each of N_MU regular
    /// μ rows; row r corresponds to μ = −1 + 2r/(N_MU − 1).
    q_quantiles: Vec<f64>,
}

fn mu_row_value(r: usize) -> f64 {
    -1.0 + 2.0 * r as f64 / (N_MU - 1) as f64
}

/// Quantiles of a tabulated positive density via cumulative trapezoid.
fn quantiles_from_density(
    xs: &[f64],
    weights: &[f64],
    n_quantiles: usize,
) -> Vec<f64> {
    let m = xs.len();
    let mut cum = vec![0.0f64; m];
    for i in 1..m {
        cum[i] = cum[i - 1] + 0.5 * (weights[i] + weights[i - 1]) * (xs[i] - xs[i - 1]);
    }
    let total = cum[m - 1];
    let mut out = Vec::with_capacity(n_quantiles + 1);
    let mut idx = 0usize;
    for j in 0..=n_quantiles {
        let target = total * j as f64 / n_quantiles as f64;
        while idx + 1 < m - 1 && cum[idx + 1] < target {
            idx += 1;
        }
        let span = cum[idx + 1] - cum[idx];
        let frac = if span > 0.0 {
            ((target - cum[idx]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(xs[idx] + frac * (xs[idx + 1] - xs[idx]));
    }
    out
}

/// Quantiles of the radial variable u ~ e^{−u²} truncated to [c, ∞),
/// returned as kick magnitudes Q = (u − c)/(1+k).
fn radial_quantile_row(c: f64, k: f64) -> Vec<f64> {
    // the density is concentrated in [−5, 5] regardless of the cut c
    let lo = c.max(-5.5);
    let hi = c.max(0.0) + 4.75;
    let xs: Vec<f64> = (0..DENSE + 1)
        .map(|i| lo + (hi - lo) * i as f64 / DENSE as f64)
        .collect();
    let ws: Vec<f64> = xs.iter().map(|&u| (-u * u).exp()).collect();
    quantiles_from_density(&xs, &ws, N_Q)
        .into_iter()
        .map(|u| ((u - c) / (1.0 + k)).max(0.0))
        .collect()
}

fn build_anchor(k: f64, p: f64) -> AnchorTable {
    let b = 2.0 * k * p;
    // μ marginal ∝ erfc(bμ)
    let mus: Vec<f64> = (0..DENSE + 1)
        .map(|i| -1.0 + 2.0 * i as f64 / DENSE as f64)
        .collect();
    let ws: Vec<f64> = mus.iter().map(|&mu| erfc(b * mu)).collect();
    let mu_quantiles = quantiles_from_density(&mus, &ws, N_MU);

    let mut q_quantiles = Vec::with_capacity(N_MU * (N_Q + 1));
    for r in 0..N_MU {
        let c = b * mu_row_value(r);
        q_quantiles.extend(radial_quantile_row(c, k));
    }
    AnchorTable {
        mu_quantiles,
        q_quantiles,
    }
}

/// Invert erfc(u) = target. Used only for the exact tail beyond the
/// tabulated quantiles. Newton runs on ln(erfc) — whose derivative is ≈ −2u
/// in the tail, so the iteration stays conditioned — inside a bisection
/// bracket that guards against overshoot.
fn erfc_inverse(target: f64, init: f64) -> f64 {
    let target = target.clamp(5e-324, 2.0 - 1e-16);
    let log_target = target.ln();
    let (mut lo, mut hi) = (-6.0f64, 27.0f64);
    let mut u = init.clamp(lo, hi);
    for _ in 0..80 {
        let e = erfc(u);
        if e > target {
            lo = u;
        } else {
            hi = u;
        }
        let g = e.ln() - log_target;
        let dg = -2.0 * INV_SQRT_PI * (-u * u).exp() / e;
        let mut next = u - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < 1e-15 * (1.0 + u.abs()) {
            return next;
        }
        u = next;
    }
    u
}

/// Tabulated joint inverse-CDF sampler for kick vectors, parameterized by
/// the momentum magnitude |p| over [0, p_max].
pub struct KickSampler {
    k: f64,
    p_max: f64,
    /// lowest anchored momentum; below it the isotropic table applies
    p_lo: f64,
    zero_table: AnchorTable,
    anchors: RwLock<HashMap<i64, Arc<AnchorTable>>>,
}

impl KickSampler {
    pub fn new(kernel: &DissipativeKernel, p_max: f64) -> Result<Self> {
        if !(p_max >= 0.0 && p_max.is_finite()) {
            return Err(CoreError::Param {
                name: "p_max",
                reason: format!("must be finite and >= 0, got {p_max:e}"),
            });
        }
        let k = kernel.k;
        let p_lo = if k > 0.0 {
            0.5 * ISOTROPIC_THRESHOLD / k
        } else {
            f64::INFINITY
        };
        Ok(Self {
            k,
            p_max,
            p_lo,
            zero_table: build_anchor(k, 0.0),
            anchors: RwLock::new(HashMap::new()),
        })
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    fn anchor_index(&self, p: f64) -> i64 {
        ((p / self.p_lo).log10() * ANCHORS_PER_DECADE).floor() as i64
    }

    fn anchor_momentum(&self, idx: i64) -> f64 {
        self.p_lo * 10f64.powf(idx as f64 / ANCHORS_PER_DECADE)
    }

    fn anchor(&self, idx: i64) -> Arc<AnchorTable> {
        if let Some(t) = self.anchors.read().expect("sampler lock").get(&idx) {
            return Arc::clone(t);
        }
        let table = Arc::new(build_anchor(self.k, self.anchor_momentum(idx)));
        let mut map = self.anchors.write().expect("sampler lock");
        Arc::clone(map.entry(idx).or_insert(table))
    }

    /// Number of anchor tables built so far (diagnostic).
    pub fn anchors_built(&self) -> usize {
        self.anchors.read().expect("sampler lock").len()
    }

    fn mu_from_table(table: &AnchorTable, xi: f64) -> f64 {
        let pos = xi * N_MU as f64;
        let cell = (pos as usize).min(N_MU - 1);
        let frac = pos - cell as f64;
        table.mu_quantiles[cell] + frac * (table.mu_quantiles[cell + 1] - table.mu_quantiles[cell])
    }

    /// Bilinear lookup of the Q quantile at (μ, ξ) in one anchor table.
    fn q_from_table(table: &AnchorTable, mu: f64, xi_pos: f64) -> f64 {
        let row_pos = (mu + 1.0) / 2.0 * (N_MU - 1) as f64;
        let r0 = (row_pos as usize).min(N_MU - 2);
        let wr = row_pos - r0 as f64;
        let cell = (xi_pos as usize).min(N_Q - 1);
        let wq = xi_pos - cell as f64;
        let at = |r: usize| {
            let base = r * (N_Q + 1) + cell;
            table.q_quantiles[base] + wq * (table.q_quantiles[base + 1] - table.q_quantiles[base])
        };
        at(r0) * (1.0 - wr) + at(r0 + 1) * wr
    }

    /// Draw μ for momentum magnitude p at quantile ξ.
    fn mu_at(&self, p: f64, xi_mu: f64) -> f64 {
        if self.k * p * 2.0 < ISOTROPIC_THRESHOLD {
            return -1.0 + 2.0 * xi_mu;
        }
        let idx = self.anchor_index(p).max(0);
        let lo = self.anchor(idx);
        let hi = self.anchor(idx + 1);
        let w = self.anchor_blend(p, idx);
        Self::mu_from_table(&lo, xi_mu) * (1.0 - w) + Self::mu_from_table(&hi, xi_mu) * w
    }

    fn anchor_blend(&self, p: f64, idx: i64) -> f64 {
        let p_a = self.anchor_momentum(idx);
        let p_b = self.anchor_momentum(idx + 1);
        ((p.ln() - p_a.ln()) / (p_b.ln() - p_a.ln())).clamp(0.0, 1.0)
    }

    /// Kick magnitude at (p, μ) and radial quantile position ξ·N_Q, from the
    /// bulk tables (no tail handling).
    fn q_bulk_at(&self, p: f64, mu: f64, xi_pos: f64) -> f64 {
        if self.k * p * 2.0 < ISOTROPIC_THRESHOLD {
            return Self::q_from_table(&self.zero_table, mu, xi_pos);
        }
        let idx = self.anchor_index(p).max(0);
        let lo = self.anchor(idx);
        let hi = self.anchor(idx + 1);
        let w = self.anchor_blend(p, idx);
        Self::q_from_table(&lo, mu, xi_pos) * (1.0 - w) + Self::q_from_table(&hi, mu, xi_pos) * w
    }

    /// Draw (Q magnitude, μ) for momentum magnitude p from the tables.
    fn draw_magnitude_alignment(&self, p: f64, xi_mu: f64, xi_q: f64) -> (f64, f64) {
        let xi_pos = xi_q * N_Q as f64;
        let mu = self.mu_at(p, xi_mu);
        if xi_pos > (N_Q - 1) as f64 {
            // last quantile cell: invert the truncated-Gaussian tail exactly
            // at the actual (p, μ) instead of extrapolating the table
            let c = 2.0 * self.k * p * mu;
            let target = (1.0 - xi_q) * erfc(c);
            let init = c.max(0.0) + 2.0;
            let u = erfc_inverse(target, init).max(c);
            ((u - c) / (1.0 + self.k), mu)
        } else {
            (self.q_bulk_at(p, mu, xi_pos), mu)
        }
    }

    /// Sample a kick vector for a particle of momentum `p`. Magnitude and
    /// polar angle come from the inverse-CDF tables, azimuth is uniform.
    /// Consumes exactly three uniforms.
    pub fn sample_kick(&self, p: [f64; 3], rng: &mut impl Rng) -> Result<[f64; 3]> {
        let p_norm = norm3(p);
        if p_norm > self.p_max {
            return Err(CoreError::Extrapolation {
                p: p_norm,
                min: 0.0,
                max: self.p_max,
            });
        }
        let xi_mu: f64 = rng.gen();
        let xi_q: f64 = rng.gen();
        let phi: f64 = rng.gen::<f64>() * std::f64::consts::TAU;

        let (q, mu) = self.draw_magnitude_alignment(p_norm, xi_mu, xi_q);

        let p_hat = if p_norm > 0.0 {
            [p[0] / p_norm, p[1] / p_norm, p[2] / p_norm]
        } else {
            [0.0, 0.0, 1.0]
        };
        let (e1, e2) = orthonormal_frame(p_hat);
        let sin_theta = (1.0 - mu * mu).max(0.0).sqrt();
        let (sin_phi, cos_phi) = phi.sin_cos();
        Ok([
            q * (mu * p_hat[0] + sin_theta * (cos_phi * e1[0] + sin_phi * e2[0])),
            q * (mu * p_hat[1] + sin_theta * (cos_phi * e1[1] + sin_phi * e2[1])),
            q * (mu * p_hat[2] + sin_theta * (cos_phi * e1[2] + sin_phi * e2[2])),
        ])
    }

    /// Sup-distance between the tabulated radial CDF and the exact one at
    /// fixed (p, μ): the deterministic tabulation error of one row.
    pub fn radial_tabulation_error(&self, p: f64, mu: f64) -> f64 {
        let c = 2.0 * self.k * p * mu;
        let norm = erfc(c);
        let mut worst = 0.0f64;
        for i in 0..N_Q {
            let xi = i as f64 / N_Q as f64;
            let q = self.q_bulk_at(p, mu, xi * N_Q as f64);
            let u = (1.0 + self.k) * q + c;
            let cdf = (erfc(c) - erfc(u)) / norm;
            worst = worst.max((cdf - xi).abs());
        }
        worst
    }

    /// Sup-distance between the tabulated μ CDF and the exact one at fixed p.
    pub fn alignment_tabulation_error(&self, p: f64) -> f64 {
        let b = 2.0 * self.k * p;
        // CDF of the μ marginal ∝ erfc(bμ): antiderivative
        // F(μ) = μ·erfc(bμ) − exp(−b²μ²)/(b√π)
        let anti = |mu: f64| {
            if b < 1e-12 {
                mu
            } else {
                mu * erfc(b * mu) - (-b * b * mu * mu).exp() / (b * SQRT_PI)
            }
        };
        let norm = anti(1.0) - anti(-1.0);
        let mut worst = 0.0f64;
        for j in 0..=N_MU {
            let xi = j as f64 / N_MU as f64;
            let mu = self.mu_at(p, xi);
            let cdf = (anti(mu) - anti(-1.0)) / norm;
            worst = worst.max((cdf - xi).abs());
        }
        worst
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn orthonormal_frame(unit: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if unit[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let mut e1 = [
        unit[1] * helper[2] - unit[2] * helper[1],
        unit[2] * helper[0] - unit[0] * helper[2],
        unit[0] * helper[1] - unit[1] * helper[0],
    ];
    let n = norm3(e1);
    e1 = [e1[0] / n, e1[1] / n, e1[2] / n];
    let e2 = [
        unit[1] * e1[2] - unit[2] * e1[1],
        unit[2] * e1[0] - unit[0] * e1[2],
        unit[0] * e1[1] - unit[1] * e1[0],
    ];
    (e1, e2)
}

// ---------------------------------------------------------------------------
// Ensemble evolution
// ---------------------------------------------------------------------------

/// A classical ensemble of momenta (scaled units).
#[derive(Debug, Clone)]
pub struct MomentumEnsemble {
    pub momenta: Vec<[f64; 3]>,
    pub time: f64,
    pub seed: u64,
}

impl MomentumEnsemble {
    pub fn from_momenta(momenta: Vec<[f64; 3]>, seed: u64) -> Self {
        Self {
            momenta,
            time: 0.0,
            seed,
        }
    }

    /// All particles at the same momentum.
    pub fn monochromatic(n: usize, p: [f64; 3], seed: u64) -> Self {
        Self {
            momenta: vec![p; n],
            time: 0.0,
            seed,
        }
    }

    /// Maxwell-Boltzmann ensemble at temperature T for particle mass m
    /// (per-component standard deviation √(mT)).
    pub fn maxwell(n: usize, mass: f64, temperature: f64, seed: u64) -> Self {
        let sigma = (mass * temperature).sqrt();
        let momenta = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(0x4d42 << 16 | i as u64);
                [
                    sigma * rng.sample::<f64, _>(StandardNormal),
                    sigma * rng.sample::<f64, _>(StandardNormal),
                    sigma * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect();
        Self {
            momenta,
            time: 0.0,
            seed,
        }
    }

    pub fn mean_kinetic_energy(&self, mass: f64) -> f64 {
        self.momenta
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * mass))
            .sum::<f64>()
            / self.momenta.len() as f64
    }
}

/// Ensemble-mean kinetic energy on a fixed checkpoint grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// 32 checkpoint times: 0, then geometric from t_final/1000 to t_final.
pub fn checkpoint_times(t_final: f64) -> Vec<f64> {
    let mut ts = vec![0.0];
    let n = 31;
    for i in 1..=n {
        ts.push(t_final * 1e-3_f64.powf((n - i) as f64 / (n - 1) as f64));
    }
    ts
}

/// Per-particle Gillespie simulation to `t_final`.
///
/// Waiting times are exponential with the kernel's total rate (independent
/// of p, as the rate analysis shows and tests verify); each jump adds a kick
/// drawn from the sampler. Particle i owns RNG substream (seed, i); the
/// energy series is reduced in particle order, so results are deterministic
/// under any parallel schedule.
pub fn evolve_ensemble(
    initial: &MomentumEnsemble,
    kernel: &DissipativeKernel,
    sampler: &KickSampler,
    t_final: f64,
    seed: u64,
) -> Result<(MomentumEnsemble, EnergySeries)> {
    if !(t_final >= 0.0) {
        return Err(CoreError::Param {
            name: "t_final",
            reason: format!("must be >= 0, got {t_final:e}"),
        });
    }
    let times = checkpoint_times(t_final);
    let rate = kernel.total_rate();
    let mass = kernel.mass;

    struct Track {
        final_p: [f64; 3],
        energies: Vec<f64>,
    }

    let tracks: Vec<Track> = initial
        .momenta
        .par_iter()
        .enumerate()
        .map(|(i, &p0)| -> Result<Track> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut p = p0;
            let mut t = 0.0f64;
            let mut energies = Vec::with_capacity(times.len());
            let mut next_checkpoint = 0usize;
            loop {
                let wait = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / rate;
                let t_jump = t + wait;
                let e = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * mass);
                while next_checkpoint < times.len() && times[next_checkpoint] <= t_jump.min(t_final)
                {
                    energies.push(e);
                    next_checkpoint += 1;
                }
                if t_jump >= t_final {
                    break;
                }
                let kick = sampler.sample_kick(p, &mut rng)?;
                p = [p[0] + kick[0], p[1] + kick[1], p[2] + kick[2]];
                t = t_jump;
            }
            while next_checkpoint < times.len() {
                energies.push((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * mass));
                next_checkpoint += 1;
            }
            Ok(Track {
                final_p: p,
                energies,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = tracks.len() as f64;
    let mut mean_energy = vec![0.0f64; times.len()];
    let mut second = vec![0.0f64; times.len()];
    let mut momenta = Vec::with_capacity(tracks.len());
    for track in &tracks {
        for (j, &e) in track.energies.iter().enumerate() {
            mean_energy[j] += e;
            second[j] += e * e;
        }
        momenta.push(track.final_p);
    }
    for j in 0..times.len() {
        mean_energy[j] /= n;
        second[j] = ((second[j] / n - mean_energy[j] * mean_energy[j]).max(0.0) / n).sqrt();
    }

    Ok((
        MomentumEnsemble {
            momenta,
            time: initial.time + t_final,
            seed,
        },
        EnergySeries {
            times,
            mean_energy,
            std_error: second,
        },
    ))
}

/// Temperature estimate and Maxwell-speed goodness of fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ThermalizationReport {
    /// Temperature from equipartition of the mean kinetic energy.
    pub t_estimate: f64,
    pub t_std_error: f64,
    /// Kolmogorov-Smirnov statistic of |p| against the Maxwell speed law at
    /// `t_estimate`.
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

/// Estimate the temperature of an evolved ensemble and test its speed
/// distribution against the Maxwell law at that temperature.
pub fn thermalization_test(
    ensemble: &MomentumEnsemble,
    kernel: &DissipativeKernel,
) -> ThermalizationReport {
    let mass = kernel.mass;
    let n = ensemble.momenta.len() as f64;
    let energies: Vec<f64> = ensemble
        .momenta
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * mass))
        .collect();
    let mean_e = energies.iter().sum::<f64>() / n;
    let var_e = energies
        .iter()
        .map(|e| (e - mean_e) * (e - mean_e))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let t_estimate = 2.0 * mean_e / 3.0;
    let t_std_error = 2.0 / 3.0 * (var_e / n).sqrt();

    let speeds: Vec<f64> = ensemble.momenta.iter().map(|&p| norm3(p)).collect();
    let (ks_statistic, ks_p_value) = maxwell_speed_ks(&speeds, mass, t_estimate);
    ThermalizationReport {
        t_estimate,
        t_std_error,
        ks_statistic,
        ks_p_value,
    }
}

/// CDF of the Maxwell speed distribution for momentum magnitude s, with
/// per-component standard deviation a = √(mT).
pub fn maxwell_speed_cdf(s: f64, mass: f64, temperature: f64) -> f64 {
    let a = (mass * temperature).sqrt();
    let z = s / a;
    erf(z / std::f64::consts::SQRT_2)
        - (2.0 / std::f64::consts::PI).sqrt() * z * (-z * z / 2.0).exp()
}

/// One-sample Kolmogorov-Smirnov test of speeds against the Maxwell law.
pub fn maxwell_speed_ks(speeds: &[f64], mass: f64, temperature: f64) -> (f64, f64) {
    let mut sorted = speeds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &s) in sorted.iter().enumerate() {
        let f = maxwell_speed_cdf(s, mass, temperature);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    (d, ks_p_value(d, sorted.len()))
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let n_f = n as f64;
    let lambda = (n_f.sqrt() + 0.12 + 0.11 / n_f.sqrt()) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for j in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(j as i32 - 1) * (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rate_density_limits() {
        let kernel = DissipativeKernel::new(1.0, 0.0).unwrap();
        // k = 0: density independent of alignment, Gaussian in Q
        for q in [0.3, 1.0, 2.5] {
            let d0 = kernel.rate_density(q, -1.0, 4.0);
            let d1 = kernel.rate_density(q, 0.7, 4.0);
            assert_eq!(d0, d1);
            assert!(rel_err(d0, INV_SQRT_PI * (-q * q).exp()) < 1e-15);
        }
        // p = 0: no preferred direction for any k
        let kernel = DissipativeKernel::new(1.0, 3.0).unwrap();
        for q in [0.2, 0.9] {
            assert_eq!(
                kernel.rate_density(q, -0.4, 0.0),
                kernel.rate_density(q, 0.9, 0.0)
            );
        }
    }

    #[test]
    fn dissipative_density_concentrates_at_momentum_reversal() {
        // k >> 1: along the backward axis the density peaks near
        // Q = 2pk/(1+k), the elastic momentum flip
        let k = 10.0;
        let p = 1.0;
        let kernel = DissipativeKernel::new(1.0, k).unwrap();
        let q_flip = 2.0 * p * k / (1.0 + k);
        let peak = kernel.rate_density(q_flip, -1.0, p);
        assert!(rel_err(peak, INV_SQRT_PI) < 1e-12);
        assert!(kernel.rate_density(q_flip * 0.5, -1.0, p) < peak * 1e-10);
        assert!(kernel.rate_density(q_flip * 1.5, -1.0, p) < peak * 1e-10);
    }

    #[test]
    fn total_rate_is_lambda_over_one_plus_k_for_all_p() {
        for (k, expected) in [(0.0, 1.0), (1.0, 0.5), (10.0, 1.0 / 11.0)] {
            let kernel = DissipativeKernel::new(1.0, k).unwrap();
            assert!(rel_err(kernel.total_rate(), expected) < 1e-8);
            for p in [0.0, 0.3, 2.0, 40.0] {
                let r = kernel.total_rate_at(p).unwrap();
                assert!(
                    rel_err(r, expected) < 1e-8,
                    "k={k} p={p}: rate {r} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn rate_continuous_in_p() {
        let kernel = DissipativeKernel::new(1.0, 2.0).unwrap();
        let mut prev = kernel.total_rate_at(0.0).unwrap();
        for i in 1..=20 {
            let r = kernel.total_rate_at(i as f64 * 0.1).unwrap();
            assert!((r - prev).abs() < 1e-7);
            prev = r;
        }
    }

    #[test]
    fn scaled_params_identity() {
        for (m, k) in [(1.0, 0.5), (3.0, 2.0), (0.2, 100.0)] {
            let p = ScaledDissipativeParams::new(m, k);
            let t = p.temperature.unwrap();
            assert!(rel_err(2.0 * p.gamma / (3.0 * p.xi), t) < 1e-12);
            assert!(rel_err(t, 1.0 / (8.0 * k * m)) < 1e-12);
        }
        let free = ScaledDissipativeParams::new(1.0, 0.0);
        assert_eq!(free.xi, 0.0);
        assert!(free.temperature.is_none());
        assert!(rel_err(free.gamma, 0.25) < 1e-15);
    }

    #[test]
    fn sampler_matches_radial_and_alignment_cdfs() {
        let kernel = DissipativeKernel::new(1.0, 1.0).unwrap();
        let sampler = KickSampler::new(&kernel, 20.0).unwrap();
        // deterministic tabulation error of the inverse CDFs
        for (p, mu) in [(0.0, 0.0), (1.0, -0.9), (1.0, 0.4), (5.0, -1.0)] {
            let err = sampler.radial_tabulation_error(p, mu);
            assert!(err < 1e-3, "p={p} mu={mu}: sup CDF error {err:e}");
        }
        for p in [0.0, 0.3, 1.0, 5.0] {
            let err = sampler.alignment_tabulation_error(p);
            assert!(err < 1e-3, "p={p}: sup mu CDF error {err:e}");
        }
    }

    #[test]
    fn sampler_rejects_out_of_range() {
        let kernel = DissipativeKernel::new(1.0, 1.0).unwrap();
        let sampler = KickSampler::new(&kernel, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sampler.sample_kick([3.0, 0.0, 0.0], &mut rng),
            Err(CoreError::Extrapolation { .. })
        ));
    }

    #[test]
    fn zero_momentum_kicks_are_isotropic() {
        let kernel = DissipativeKernel::new(1.0, 1.0).unwrap();
        let sampler = KickSampler::new(&kernel, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = [0.0f64; 3];
        for _ in 0..n {
            let kick = sampler.sample_kick([0.0; 3], &mut rng).unwrap();
            let norm = norm3(kick);
            for (s, k) in sum.iter_mut().zip(kick) {
                *s += k / norm;
            }
        }
        // Rayleigh test: 3|Σu|²/n ~ χ²₃ under uniformity
        let r2 = sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2];
        let stat = 3.0 * r2 / n as f64;
        // 99th percentile of chi-square with 3 dof
        assert!(stat < 11.345, "Rayleigh statistic {stat}");
    }

    #[test]
    fn erfc_inverse_round_trips() {
        for u in [-3.0, -0.5, 0.0, 1.0, 4.0, 8.0] {
            let target = erfc(u);
            let back = erfc_inverse(target, u + 0.7);
            assert!((back - u).abs() < 1e-10, "u={u} back={back}");
        }
    }

    #[test]
    fn checkpoints_span_three_decades() {
        let ts = checkpoint_times(10.0);
        assert_eq!(ts.len(), 32);
        assert_eq!(ts[0], 0.0);
        assert!(rel_err(ts[1], 0.01) < 1e-12);
        assert!(rel_err(ts[31], 10.0) < 1e-12);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn free_streaming_keeps_energy_without_dissipation_rngless() {
        // k = 0 heating: mean energy grows linearly with slope gamma
        let kernel = DissipativeKernel::new(1.0, 0.0).unwrap();
        let sampler = KickSampler::new(&kernel, 50.0).unwrap();
        let params = ScaledDissipativeParams::new(1.0, 0.0);
        let initial = MomentumEnsemble::monochromatic(4000, [0.0; 3], 7);
        let t_final = 2.0;
        let (_, series) = evolve_ensemble(&initial, &kernel, &sampler, t_final, 7).unwrap();
        let last = *series.mean_energy.last().unwrap();
        let expected = params.gamma * t_final;
        assert!(
            rel_err(last, expected) < 0.05,
            "E({t_final}) = {last} vs {expected}"
        );
    }

    #[test]
    fn maxwell_cdf_limits() {
        assert_eq!(maxwell_speed_cdf(0.0, 1.0, 1.0), 0.0);
        assert!((maxwell_speed_cdf(100.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_test_accepts_its_own_distribution() {
        let kernel = DissipativeKernel::new(2.0, 1.0).unwrap();
        let t = 0.25;
        let ensemble = MomentumEnsemble::maxwell(8000, 2.0, t, 99);
        let report = thermalization_test(&ensemble, &kernel);
        assert!(rel_err(report.t_estimate, t) < 0.05);
        assert!(report.ks_p_value > 0.01, "p = {}", report.ks_p_value);
    }
}
