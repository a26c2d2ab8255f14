//! One-particle master-equation propagation on a 1D position lattice.
//!
//! The generator, in scaled units (kernel length 1, total rate Λ = 1, ħ = 1):
//!
//!   dρ(x,x')/dt = (i/2m)(∂²_x − ∂²_{x'}) ρ − D(x−x') ρ
//!
//! with D the decoherence function of the chosen kernel. Decoherence is
//! diagonal in the position representation, the kinetic part is diagonal in
//! momentum space, so a Strang split (half kinetic, full decoherence, half
//! kinetic) propagates with second-order accuracy, preserving the trace
//! exactly in the decoherence substep and to round-off in the spectral one.
//!
//! The lattice is periodic (spectral kinetic step); separations use the
//! minimum image, and boxes are required to span at least 20 kernel lengths
//! so wrap-around coherence is negligible.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::kernels::ScaledKernel;
use crate::quadrature::{integrate_radial, Integrand1D};

/// Uniform periodic lattice. Site count is a power of two in 16..=1024.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n_sites: usize,
    spacing: f64,
    origin: f64,
}

impl Grid1D {
    pub fn new(n_sites: usize, spacing: f64, origin: f64) -> Result<Self> {
        if !n_sites.is_power_of_two() || !(16..=1024).contains(&n_sites) {
            return Err(CoreError::Config(format!(
                "n_sites must be a power of two in 16..=1024, got {n_sites}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(CoreError::Config(format!(
                "spacing must be positive, got {spacing:e}"
            )));
        }
        Ok(Self {
            n_sites,
            spacing,
            origin,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Box length n·δ.
    pub fn length(&self) -> f64 {
        self.n_sites as f64 * self.spacing
    }

    pub fn position(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    /// Signed minimum-image separation for an index offset.
    pub fn signed_separation(&self, offset: usize) -> f64 {
        let n = self.n_sites;
        let half = n / 2;
        let rel = if offset <= half {
            offset as isize
        } else {
            offset as isize - n as isize
        };
        rel as f64 * self.spacing
    }

    /// Minimum-image distance between sites i and j.
    pub fn min_image_distance(&self, i: usize, j: usize) -> f64 {
        let offset = (i + self.n_sites - j) % self.n_sites;
        self.signed_separation(offset).abs()
    }

    /// Spectral momenta in fft ordering (ħ = 1): p_m = 2π·m̃/L.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n_sites;
        let l = self.length();
        (0..n)
            .map(|m| {
                let m_tilde = if m <= n / 2 {
                    m as isize
                } else {
                    m as isize - n as isize
                };
                std::f64::consts::TAU * m_tilde as f64 / l
            })
            .collect()
    }
}

/// Discretized one-particle density matrix ρ(x_i, x_j).
#[derive(Debug, Clone)]
pub struct DensityMatrixGrid {
    pub grid: Grid1D,
    pub rho: DMatrix<Complex64>,
    /// Dimensionless particle mass (sets the kinetic scale relative to Λ).
    pub mass: f64,
}

impl DensityMatrixGrid {
    /// Projector onto a normalized lattice wave function.
    pub fn from_wavefunction(grid: Grid1D, psi: &[Complex64], mass: f64) -> Result<Self> {
        if psi.len() != grid.n_sites() {
            return Err(CoreError::Config(format!(
                "wavefunction length {} does not match grid size {}",
                psi.len(),
                grid.n_sites()
            )));
        }
        let norm_sq: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if norm_sq <= 0.0 {
            return Err(CoreError::Config("wavefunction has zero norm".into()));
        }
        let scale = 1.0 / norm_sq;
        let n = psi.len();
        let rho = DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() * scale);
        Ok(Self { grid, rho, mass })
    }

    /// Equal-phase superposition of two sites with weights |a|² and 1 − |a|².
    pub fn two_point_superposition(
        grid: Grid1D,
        site_a: usize,
        site_b: usize,
        weight_a: f64,
        mass: f64,
    ) -> Result<Self> {
        if site_a >= grid.n_sites() || site_b >= grid.n_sites() || site_a == site_b {
            return Err(CoreError::Config("invalid superposition sites".into()));
        }
        if !(0.0..=1.0).contains(&weight_a) {
            return Err(CoreError::Config(format!(
                "weight must lie in [0,1], got {weight_a}"
            )));
        }
        let mut psi = vec![Complex64::new(0.0, 0.0); grid.n_sites()];
        psi[site_a] = Complex64::new(weight_a.sqrt(), 0.0);
        psi[site_b] = Complex64::new((1.0 - weight_a).sqrt(), 0.0);
        Self::from_wavefunction(grid, &psi, mass)
    }

    /// Normalized Gaussian wave packet centered at `center` with position
    /// spread `sigma` and mean momentum `p0`.
    pub fn gaussian_packet(
        grid: Grid1D,
        center: f64,
        sigma: f64,
        p0: f64,
        mass: f64,
    ) -> Result<Self> {
        let psi = gaussian_wavefunction(&grid, center, sigma, p0)?;
        Self::from_wavefunction(grid, &psi, mass)
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.diagonal().sum()
    }

    /// Largest |ρ_ij − conj(ρ_ji)| over the matrix.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.n_sites();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the (hermitized) density matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Site populations ρ(x_i, x_i).
    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// Mean and variance of position over the diagonal.
    pub fn position_moments(&self) -> (f64, f64) {
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for i in 0..self.grid.n_sites() {
            let p = self.rho[(i, i)].re;
            let x = self.grid.position(i);
            mean += p * x;
            mean_sq += p * x * x;
        }
        (mean, mean_sq - mean * mean)
    }
}

pub fn gaussian_wavefunction(
    grid: &Grid1D,
    center: f64,
    sigma: f64,
    p0: f64,
) -> Result<Vec<Complex64>> {
    if !(sigma > 0.0) {
        return Err(CoreError::Config(format!(
            "packet width must be positive, got {sigma:e}"
        )));
    }
    let mut psi: Vec<Complex64> = (0..grid.n_sites())
        .map(|i| {
            let x = grid.position(i);
            let arg = -(x - center) * (x - center) / (4.0 * sigma * sigma);
            Complex64::from_polar(arg.exp(), p0 * x)
        })
        .collect();
    let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut psi {
        *a /= norm;
    }
    Ok(psi)
}

/// Trace distance (1/2)·‖a − b‖₁ between two density matrices.
pub fn trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let diff = a - b;
    let herm = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

/// Free-particle kinetic operator p̂²/2m applied spectrally.
pub struct KineticOperator {
    mass: f64,
    n: usize,
    momenta: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl KineticOperator {
    pub fn new(mass: f64, grid: &Grid1D) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(CoreError::Param {
                name: "mass",
                reason: format!("must be > 0, got {mass:e}"),
            });
        }
        let mut planner = FftPlanner::new();
        let n = grid.n_sites();
        Ok(Self {
            mass,
            n,
            momenta: grid.momenta(),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    fn phases(&self, t: f64) -> Vec<Complex64> {
        self.momenta
            .iter()
            .map(|&p| Complex64::from_polar(1.0, -p * p * t / (2.0 * self.mass)))
            .collect()
    }

    /// ψ ← exp(−i p̂² t / 2m) ψ.
    pub fn evolve_wavefunction(&self, psi: &mut [Complex64], t: f64) {
        assert_eq!(psi.len(), self.n);
        let phases = self.phases(t);
        self.fft.process(psi);
        for (a, ph) in psi.iter_mut().zip(&phases) {
            *a *= ph;
        }
        self.ifft.process(psi);
        let inv_n = 1.0 / self.n as f64;
        for a in psi.iter_mut() {
            *a *= inv_n;
        }
    }

    /// ρ ← U ρ U† with U = exp(−i p̂² t / 2m).
    ///
    /// Implemented as two column passes with a hermitian transpose between
    /// them: (U (U ρ)ᴴ)ᴴ = (U ρ) Uᴴ.
    pub fn evolve_density(&self, rho: &mut DMatrix<Complex64>, t: f64) {
        let n = self.n;
        assert_eq!(rho.nrows(), n);
        let phases = self.phases(t);
        let inv_n = Complex64::new(1.0 / n as f64, 0.0);
        let mut col = vec![Complex64::new(0.0, 0.0); n];

        for _ in 0..2 {
            for j in 0..n {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = rho[(i, j)];
                }
                self.fft.process(&mut col);
                for (a, ph) in col.iter_mut().zip(&phases) {
                    *a *= ph;
                }
                self.ifft.process(&mut col);
                for (i, a) in col.iter().enumerate() {
                    rho[(i, j)] = a * inv_n;
                }
            }
            rho.adjoint_mut();
        }
    }
}

/// Position-space decoherence matrix D_ij = D(|x_i − x_j|), in units of Λ.
/// Zero diagonal, symmetric, entries in [0, 1].
///
/// Separations are the raw lattice distances, not minimum images: D is then
/// Λ − C with C the restriction of the 3D noise correlation to collinear
/// points, which keeps the lattice generator completely positive. The
/// periodic kinetic step is compatible because boxes span ≥ 20 kernel
/// lengths and states stay away from the wrap seam.
#[derive(Debug, Clone)]
pub struct DecoherenceMatrix {
    pub matrix: DMatrix<f64>,
    pub max: f64,
}

impl DecoherenceMatrix {
    /// All-zero matrix: pure Schrödinger dynamics.
    pub fn zero(grid: &Grid1D) -> Self {
        Self {
            matrix: DMatrix::zeros(grid.n_sites(), grid.n_sites()),
            max: 0.0,
        }
    }
}

/// Build D_ij for a kernel on a grid in scaled units (kernel length = 1).
///
/// Errors when the box is shorter than 20 kernel lengths: wrap-around
/// coherence would then contaminate the propagation.
pub fn build_decoherence_matrix(kernel: ScaledKernel, grid: &Grid1D) -> Result<DecoherenceMatrix> {
    if grid.length() < 20.0 {
        return Err(CoreError::Config(format!(
            "box length {:.3} is below 20 kernel lengths; enlarge the grid",
            grid.length()
        )));
    }
    let n = grid.n_sites();
    // one evaluation per distance, shared across the matrix
    let by_sep: Vec<f64> = (0..n)
        .map(|s| kernel.decoherence(s as f64 * grid.spacing()))
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    let mut max: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = by_sep[i.abs_diff(j)];
            matrix[(i, j)] = d;
            max = max.max(d);
        }
    }
    Ok(DecoherenceMatrix { matrix, max })
}

/// One Strang step of the master equation.
///
/// Splitting: exp(−i T dt/2) · exp(−D dt) · exp(−i T dt/2). The decoherence
/// factor leaves diagonal entries untouched (D_ii = 0), so the trace is
/// conserved exactly there; the spectral kinetic substeps are unitary.
pub fn step(
    state: &DensityMatrixGrid,
    d: &DecoherenceMatrix,
    kinetic: Option<&KineticOperator>,
    dt: f64,
) -> Result<DensityMatrixGrid> {
    let mut next = state.clone();
    step_in_place(&mut next, d, kinetic, dt)?;
    Ok(next)
}

pub fn step_in_place(
    state: &mut DensityMatrixGrid,
    d: &DecoherenceMatrix,
    kinetic: Option<&KineticOperator>,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) || dt * d.max > 1e-2 + 1e-12 {
        return Err(CoreError::StepSize {
            detail: format!(
                "dt·max(D) = {:.3e} exceeds the splitting-accuracy gate 1e-2",
                dt * d.max
            ),
        });
    }
    if let Some(kin) = kinetic {
        kin.evolve_density(&mut state.rho, dt / 2.0);
    }
    let n = state.grid.n_sites();
    for j in 0..n {
        for i in 0..n {
            let decay = (-d.matrix[(i, j)] * dt).exp();
            state.rho[(i, j)] *= decay;
        }
    }
    if let Some(kin) = kinetic {
        kin.evolve_density(&mut state.rho, dt / 2.0);
    }
    Ok(())
}

/// Repeated Strang stepping over `n_steps` of size `dt`.
pub fn propagate(
    state: &DensityMatrixGrid,
    d: &DecoherenceMatrix,
    kinetic: Option<&KineticOperator>,
    dt: f64,
    n_steps: usize,
) -> Result<DensityMatrixGrid> {
    let mut current = state.clone();
    for _ in 0..n_steps {
        step_in_place(&mut current, d, kinetic, dt)?;
    }
    Ok(current)
}

/// Closed-form free-particle solution of the master equation, evaluated on
/// the lattice.
///
/// Per separation class s the solution convolves the freely evolved state
/// along the midpoint coordinate with a kernel whose momentum representation
/// is exp(−W(s,p)), where
///
///   W(s,p) = ∫₀ᵗ D(s − pτ/m) dτ
///
/// is the decoherence accumulated along the classical relative drift. At
/// t = 0 this is the identity map; with D ≡ 0 it is exact free evolution.
pub fn propagate_analytic_free(
    rho0: &DensityMatrixGrid,
    t: f64,
    kernel: ScaledKernel,
) -> Result<DensityMatrixGrid> {
    if !(t >= 0.0) {
        return Err(CoreError::Param {
            name: "t",
            reason: format!("must be >= 0, got {t:e}"),
        });
    }
    let mut state = rho0.clone();
    if t == 0.0 {
        return Ok(state);
    }
    let grid = state.grid;
    let n = grid.n_sites();
    let mass = state.mass;

    // exact one-shot free evolution
    let kin = KineticOperator::new(mass, &grid)?;
    kin.evolve_density(&mut state.rho, t);

    let momenta = grid.momenta();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let decay_exponent = |s: f64, p: f64| -> Result<f64> {
        if p == 0.0 {
            return Ok(t * kernel.decoherence(s.abs()));
        }
        let f = move |tau: f64| kernel.decoherence((s - p * tau / mass).abs());
        // integrable kink where the relative drift crosses zero
        let mut hints = Vec::new();
        let t_cross = s * mass / p;
        if t_cross > 0.0 && t_cross < t {
            hints.push(t_cross);
        }
        let integrand = Integrand1D::new(&f, 0.0, t).with_hints(hints);
        Ok(integrate_radial(&integrand, 1e-10)?.value)
    };

    let mut result = state.rho.clone();
    let mut class = vec![Complex64::new(0.0, 0.0); n];
    let inv_n = Complex64::new(1.0 / n as f64, 0.0);
    for offset in 0..n {
        let s = grid.signed_separation(offset);
        for (u, c) in class.iter_mut().enumerate() {
            *c = state.rho[(u, (u + n - offset) % n)];
        }
        fft.process(&mut class);
        for (m, c) in class.iter_mut().enumerate() {
            let w = decay_exponent(s, momenta[m])?;
            *c *= Complex64::new((-w).exp(), 0.0);
        }
        ifft.process(&mut class);
        for (u, c) in class.iter().enumerate() {
            result[(u, (u + n - offset) % n)] = c * inv_n;
        }
    }
    state.rho = result;
    Ok(state)
}

/// Mean |ρ(x, x+Δ)| per separation class. One row per index offset; the
/// separation label is the minimum-image distance of the class.
pub fn coherence_profile(state: &DensityMatrixGrid) -> Vec<(f64, f64)> {
    let n = state.grid.n_sites();
    (0..n)
        .map(|offset| {
            let mean = (0..n)
                .map(|i| state.rho[(i, (i + n - offset) % n)].norm())
                .sum::<f64>()
                / n as f64;
            (state.grid.signed_separation(offset).abs(), mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid24() -> Grid1D {
        // 64 sites, spacing 0.375: box of 24 kernel lengths
        Grid1D::new(64, 0.375, -12.0).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid1D::new(48, 1.0, 0.0).is_err());
        assert!(Grid1D::new(8, 1.0, 0.0).is_err());
        assert!(Grid1D::new(2048, 1.0, 0.0).is_err());
        assert!(Grid1D::new(64, 0.0, 0.0).is_err());
    }

    #[test]
    fn min_image_wraps() {
        let g = Grid1D::new(16, 1.0, 0.0).unwrap();
        assert_eq!(g.min_image_distance(0, 15), 1.0);
        assert_eq!(g.min_image_distance(0, 8), 8.0);
        assert_eq!(g.min_image_distance(3, 3), 0.0);
    }

    #[test]
    fn decoherence_matrix_invariants() {
        let g = grid24();
        let d = build_decoherence_matrix(ScaledKernel::Dp, &g).unwrap();
        let n = g.n_sites();
        for i in 0..n {
            assert_eq!(d.matrix[(i, i)], 0.0);
            for j in 0..n {
                assert!(d.matrix[(i, j)] >= 0.0 && d.matrix[(i, j)] <= 1.0);
                assert_eq!(d.matrix[(i, j)], d.matrix[(j, i)]);
            }
        }
        // The CSL kernel reaches its plateau inside the box: a pair 12
        // lengths apart sits within 1e-3 of Λ (scaled 1). The DP kernel has
        // the slow 1/Δ Newtonian tail and is ~15% below Λ there.
        let dc = build_decoherence_matrix(ScaledKernel::Csl, &g).unwrap();
        let far = dc.matrix[(0, 32)];
        assert!((far - 1.0).abs() < 1e-3, "CSL far pair {far}");
        let far_dp = d.matrix[(0, 32)];
        let expected = ScaledKernel::Dp.decoherence(12.0);
        assert!((far_dp - expected).abs() < 1e-14);

        // too small a box is a configuration error
        let small = Grid1D::new(16, 0.5, 0.0).unwrap();
        assert!(build_decoherence_matrix(ScaledKernel::Dp, &small).is_err());
    }

    #[test]
    fn free_packet_variance_growth() {
        // sigma^2(t) = sigma0^2 + (t/(2 m sigma0))^2 for a minimum-uncertainty
        // packet (hbar = 1)
        let g = grid24();
        let sigma0 = 1.0;
        let mass = 4.0;
        let state = DensityMatrixGrid::gaussian_packet(g, 0.0, sigma0, 0.0, mass).unwrap();
        let d_zero = DecoherenceMatrix::zero(&g);
        let kin = KineticOperator::new(mass, &g).unwrap();
        let t = 2.0;
        let n_steps = 400;
        let evolved = propagate(&state, &d_zero, Some(&kin), t / n_steps as f64, n_steps).unwrap();
        let (_, var) = evolved.position_moments();
        let (_, var0) = state.position_moments();
        // compare variance growth against the continuum law; the t=0 lattice
        // variance differs from sigma0^2 only by discretization
        let growth = var - var0;
        let expected_growth = (t / (2.0 * mass * sigma0)).powi(2);
        assert!(
            (growth - expected_growth).abs() < 1e-6,
            "growth {growth} vs {expected_growth}"
        );
    }

    #[test]
    fn pure_decoherence_decays_exponentially_and_keeps_diagonal() {
        let g = grid24();
        let state = DensityMatrixGrid::two_point_superposition(g, 20, 44, 0.5, 1.0).unwrap();
        let d = build_decoherence_matrix(ScaledKernel::Dp, &g).unwrap();
        let dt = 1e-2;
        let n_steps = 200;
        let evolved = propagate(&state, &d, None, dt, n_steps).unwrap();
        let t = dt * n_steps as f64;
        let delta = g.min_image_distance(20, 44);
        let decay = (-t * ScaledKernel::Dp.decoherence(delta)).exp();
        let got = evolved.rho[(20, 44)].norm();
        let expected = state.rho[(20, 44)].norm() * decay;
        assert!(
            (got - expected).abs() / expected < 1e-6,
            "off-diagonal {got:e} vs {expected:e}"
        );
        // diagonal exactly invariant without kinetic
        assert_eq!(evolved.rho[(20, 20)].re, state.rho[(20, 20)].re);
        assert_eq!(evolved.rho[(44, 44)].re, state.rho[(44, 44)].re);
    }

    #[test]
    fn strang_split_is_second_order() {
        let g = grid24();
        let state = DensityMatrixGrid::gaussian_packet(g, -2.0, 1.0, 0.8, 2.0).unwrap();
        let d = build_decoherence_matrix(ScaledKernel::Dp, &g).unwrap();
        let kin = KineticOperator::new(2.0, &g).unwrap();
        let t = 0.64;
        let reference = propagate(&state, &d, Some(&kin), t / 1024.0, 1024).unwrap();
        let coarse = propagate(&state, &d, Some(&kin), t / 64.0, 64).unwrap();
        let fine = propagate(&state, &d, Some(&kin), t / 128.0, 128).unwrap();
        let err_coarse = trace_distance(&coarse.rho, &reference.rho);
        let err_fine = trace_distance(&fine.rho, &reference.rho);
        let ratio = err_coarse / err_fine;
        assert!(
            (3.0..5.5).contains(&ratio),
            "convergence ratio {ratio} (errors {err_coarse:e}, {err_fine:e})"
        );
    }

    #[test]
    fn step_size_gate_enforced() {
        let g = grid24();
        let state = DensityMatrixGrid::gaussian_packet(g, 0.0, 1.0, 0.0, 1.0).unwrap();
        let d = build_decoherence_matrix(ScaledKernel::Dp, &g).unwrap();
        assert!(matches!(
            step(&state, &d, None, 0.5),
            Err(CoreError::StepSize { .. })
        ));
    }

    #[test]
    fn trace_hermiticity_positivity_preserved() {
        let g = grid24();
        let state = DensityMatrixGrid::gaussian_packet(g, 1.0, 1.5, 0.5, 2.0).unwrap();
        let d = build_decoherence_matrix(ScaledKernel::Csl, &g).unwrap();
        let kin = KineticOperator::new(2.0, &g).unwrap();
        let evolved = propagate(&state, &d, Some(&kin), 5e-3, 1000).unwrap();
        assert!((evolved.trace().re - 1.0).abs() < 1e-10);
        assert!(evolved.trace().im.abs() < 1e-12);
        assert!(evolved.hermiticity_defect() < 1e-10);
        assert!(evolved.min_eigenvalue() > -1e-8);
    }

    #[test]
    fn analytic_free_identity_at_t0() {
        let g = grid24();
        let state = DensityMatrixGrid::gaussian_packet(g, 0.5, 1.2, 0.4, 3.0).unwrap();
        let same = propagate_analytic_free(&state, 0.0, ScaledKernel::Dp).unwrap();
        assert_eq!(same.rho, state.rho);
    }

    #[test]
    fn trotter_free_limit_matches_one_shot_spectral_evolution() {
        let g = grid24();
        let state = DensityMatrixGrid::gaussian_packet(g, 0.5, 1.2, 0.4, 3.0).unwrap();
        let t = 1.3;
        let kin = KineticOperator::new(3.0, &g).unwrap();
        let mut free = state.clone();
        kin.evolve_density(&mut free.rho, t);
        let d_zero = DecoherenceMatrix::zero(&g);
        let stepped = propagate(&state, &d_zero, Some(&kin), t / 256.0, 256).unwrap();
        assert!(trace_distance(&stepped.rho, &free.rho) < 1e-6);
    }

    #[test]
    fn analytic_free_matches_trotter() {
        let g = grid24();
        let state = DensityMatrixGrid::gaussian_packet(g, 0.0, 1.5, 0.0, 5.0).unwrap();
        let kernel = ScaledKernel::Dp;
        let d = build_decoherence_matrix(kernel, &g).unwrap();
        let kin = KineticOperator::new(5.0, &g).unwrap();
        let t = 1.0;
        let trotter = propagate(&state, &d, Some(&kin), t / 400.0, 400).unwrap();
        let analytic = propagate_analytic_free(&state, t, kernel).unwrap();
        let dist = trace_distance(&trotter.rho, &analytic.rho);
        assert!(dist < 1e-4, "trace distance {dist:e}");
    }

    #[test]
    fn coherence_profile_shapes() {
        let g = grid24();
        // single site: support only at Δ = 0
        let mut psi = vec![Complex64::new(0.0, 0.0); 64];
        psi[10] = Complex64::new(1.0, 0.0);
        let point = DensityMatrixGrid::from_wavefunction(g, &psi, 1.0).unwrap();
        let profile = coherence_profile(&point);
        assert!(profile[0].1 > 0.0);
        assert!(profile.iter().skip(1).all(|&(_, v)| v == 0.0));

        // two-point superposition: support at Δ ∈ {0, Δ0}
        let sep = 24usize;
        let two = DensityMatrixGrid::two_point_superposition(g, 10, 10 + sep, 0.5, 1.0).unwrap();
        let profile = coherence_profile(&two);
        let delta0 = g.min_image_distance(10, 10 + sep);
        for (offset, &(dist, v)) in profile.iter().enumerate() {
            if offset == 0 || (dist - delta0).abs() < 1e-12 {
                if offset == 0 {
                    assert!(v > 0.0);
                }
            } else {
                assert_eq!(v, 0.0, "unexpected coherence at offset {offset}");
            }
        }

        // after pure decoherence the Δ0 class drops by exp(-t D(Δ0))
        let d = build_decoherence_matrix(ScaledKernel::Csl, &g).unwrap();
        let t = 1.5;
        let evolved = propagate(&two, &d, None, t / 300.0, 300).unwrap();
        let profile_after = coherence_profile(&evolved);
        let expected = profile[sep].1 * (-t * ScaledKernel::Csl.decoherence(delta0)).exp();
        assert!(
            (profile_after[sep].1 - expected).abs() / expected < 1e-6,
            "{} vs {}",
            profile_after[sep].1,
            expected
        );
    }
}
