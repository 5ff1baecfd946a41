//! Lindblad generators and a fixed-step RK4 integrator for density matrices.
//!
//! Conventions (hbar = 1):
//!
//! ```text
//! drho/dt = -i [H, rho] + 1/2 sum_a w_a (2 G_a rho G_a^+ - {G_a^+ G_a, rho})
//! ```
//!
//! Generators come in four flavours: the original frame, the rotated frame
//! with and without the gauge terms `rho A^+ A' - A^+ A' rho`, the secular
//! (oscillation-averaged) form, and the phase-averaged form obtained by
//! integrating the off-diagonal dissipator phases over a circle.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matcore::{
    anticommutator, commutator, conjugate, eig_hermitian, unconjugate, CMatrix, C64, I, ZERO,
};
use crate::transport::{MatrixSampler, TransportFrame};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Integrator aborts when the minimum eigenvalue falls below this.
pub const POSITIVITY_BREACH: f64 = -1e-6;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite("density matrix".into()));
        }
        let herm = m.hermiticity_residual();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("hermiticity residual {herm:.3e}")));
        }
        let tr = m.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = min_eigenvalue(&m);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("min eigenvalue {min:.3e}")));
        }
        Ok(DensityMatrix(m))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = crate::matcore::vec_norm(psi);
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v: Vec<C64> = psi.iter().map(|&z| z / norm).collect();
        Self::new(CMatrix::outer(&v, &v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn purity(&self) -> f64 {
        self.0.matmul(&self.0).trace().re
    }

    /// `rho_00 - rho_11`, the atomic inversion for two-level systems.
    pub fn inversion(&self) -> f64 {
        self.0[(0, 0)].re - self.0[(1, 1)].re
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    let h = m.hermitian_part();
    if h.dim() == 2 {
        let a = h[(0, 0)].re;
        let d = h[(1, 1)].re;
        let b = h[(0, 1)].norm();
        return 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt();
    }
    eig_hermitian(&h, 1e-13).map(|e| e.values[0]).unwrap_or(f64::NAN)
}

/// Description of a midpoint quadrature over a continuum of channels.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Independent value of the integral of the rate density.
    pub integral: f64,
}

#[derive(Clone, Debug)]
struct Channel {
    weight: f64,
    op: CMatrix,
}

/// Weighted Lindblad operators, optionally expressed in a moving basis
/// `U(t)`: the operator acting at time `t` is `U(t) G U(t)^+`.
#[derive(Clone)]
pub struct DissipatorSet {
    dim: usize,
    channels: Vec<Channel>,
    basis: Option<MatrixSampler>,
    quadrature: Option<Quadrature>,
    gdg: CMatrix,
    /// Row-major `N^2 x N^2` matrix of the whole fixed-basis dissipator.
    superop: Vec<C64>,
}

impl std::fmt::Debug for DissipatorSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DissipatorSet")
            .field("dim", &self.dim)
            .field("channels", &self.channels.len())
            .field("moving_basis", &self.basis.is_some())
            .finish()
    }
}

impl DissipatorSet {
    pub fn empty(dim: usize) -> Self {
        DissipatorSet {
            dim,
            channels: Vec::new(),
            basis: None,
            quadrature: None,
            gdg: CMatrix::zeros(dim),
            superop: vec![ZERO; dim.pow(4)],
        }
    }

    pub fn single(weight: f64, op: CMatrix) -> Result<Self> {
        let mut set = Self::empty(op.dim());
        set.push(weight, op)?;
        Ok(set)
    }

    pub fn push(&mut self, weight: f64, op: CMatrix) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::NegativeRate(weight));
        }
        if op.dim() != self.dim {
            return Err(Error::DimMismatch { left: self.dim, right: op.dim() });
        }
        if !op.is_finite() {
            return Err(Error::NonFinite("dissipator".into()));
        }
        let scaled = op.scale_real(weight.sqrt());
        let g = scaled.adjoint().matmul(&scaled);
        self.add_to_superop(&scaled, &g);
        self.gdg += &g;
        self.channels.push(Channel { weight, op });
        Ok(())
    }

    // L rho L^+ - 1/2 (G rho + rho G) as a matrix acting on row-major vec(rho)
    fn add_to_superop(&mut self, l: &CMatrix, g: &CMatrix) {
        let n = self.dim;
        let n2 = n * n;
        let s = &mut self.superop;
        for i in 0..n {
            for j in 0..n {
                let row = (i * n + j) * n2;
                for k in 0..n {
                    for m in 0..n {
                        s[row + k * n + m] += l[(i, k)] * l[(j, m)].conj();
                    }
                    s[row + k * n + j] -= g[(i, k)] * 0.5;
                    s[row + i * n + k] -= g[(k, j)] * 0.5;
                }
            }
        }
    }

    /// Builds a continuum family from a quadrature; rejects grids whose total
    /// weight misses the supplied integral by more than 1e-6 relative.
    pub fn from_quadrature<F>(dim: usize, quadrature: Quadrature, op_at: F) -> Result<Self>
    where
        F: Fn(f64) -> CMatrix,
    {
        let total: f64 = quadrature.weights.iter().sum();
        let scale = quadrature.integral.abs().max(f64::MIN_POSITIVE);
        let relative = (total - quadrature.integral).abs() / scale;
        if relative > 1e-6 && quadrature.integral != 0.0 {
            return Err(Error::QuadratureMismatch {
                quadrature: total,
                integral: quadrature.integral,
                relative,
            });
        }
        let mut set = Self::empty(dim);
        for (&alpha, &w) in quadrature.nodes.iter().zip(&quadrature.weights) {
            set.push(w, op_at(alpha))?;
        }
        set.quadrature = Some(quadrature);
        Ok(set)
    }

    /// The same channels seen through a time-dependent unitary `U(t)`.
    pub fn in_moving_basis(mut self, basis: MatrixSampler) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.channels.iter().map(|c| c.weight).sum()
    }

    pub fn quadrature(&self) -> Option<&Quadrature> {
        self.quadrature.as_ref()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.basis.is_some()
    }

    /// Rate scale `sum_a w_a |G_a|_F^2`.
    pub fn damping_scale(&self) -> f64 {
        self.gdg.trace().re
    }

    /// `(weight, G_a(t))` for every channel, unscaled.
    pub fn ops_at(&self, t: f64) -> Vec<(f64, CMatrix)> {
        match &self.basis {
            None => self.channels.iter().map(|c| (c.weight, c.op.clone())).collect(),
            Some(u) => {
                let u = u(t);
                let ua = u.adjoint();
                self.channels
                    .iter()
                    .map(|c| (c.weight, u.matmul(&c.op).matmul(&ua)))
                    .collect()
            }
        }
    }

    /// Channels conjugated by a fixed unitary: `G -> u^+ G u`.
    pub fn conjugated_ops(&self, u: &CMatrix, t: f64) -> Result<Vec<(f64, CMatrix)>> {
        self.ops_at(t)
            .into_iter()
            .map(|(w, g)| conjugate(u, &g).map(|m| (w, m)))
            .collect()
    }

    /// `1/2 sum_a w_a L_{G_a}[rho]` in the set's fixed basis.
    fn apply_fixed(&self, rho: &CMatrix) -> CMatrix {
        let n2 = self.dim * self.dim;
        let v = rho.as_slice();
        let data = self
            .superop
            .chunks_exact(n2)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        CMatrix::from_vec(self.dim, data).expect("superoperator shape")
    }

    /// Direct channel-by-channel evaluation, kept as a cross-check of the cached superoperator.
    pub fn apply_by_channels(&self, rho: &CMatrix, t: f64) -> CMatrix {
        let ops = self.ops_at(t);
        let mut out = CMatrix::zeros(rho.dim());
        for (w, g) in &ops {
            out += &dissipator_term(&g.scale_real(w.sqrt()), rho);
        }
        out
    }

    /// Dissipative part of the generator at time `t`.
    pub fn apply(&self, rho: &CMatrix, t: f64) -> CMatrix {
        if self.channels.is_empty() {
            return CMatrix::zeros(rho.dim());
        }
        match &self.basis {
            None => self.apply_fixed(rho),
            Some(u) => {
                let u = u(t);
                let ua = u.adjoint();
                let inner = ua.matmul(rho).matmul(&u);
                u.matmul(&self.apply_fixed(&inner)).matmul(&ua)
            }
        }
    }
}

/// `1/2 L_G[rho] = G rho G^+ - 1/2 {G^+ G, rho}` for an explicit operator.
pub fn dissipator_term(g: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ga = g.adjoint();
    let mut out = g.matmul(rho).matmul(&ga);
    out.add_scaled(C64::new(-0.5, 0.0), &anticommutator(&ga.matmul(g), rho));
    out
}

/// Reduced dephasing between two complementary projectors:
/// `(-f + i g) P2 rho P1 + (-f - i g) P1 rho P2`. This is the exact
/// continuum limit of channels `P1 + e^{i alpha} P2` with rate density
/// `lambda(alpha)`, where `f = int lambda (1 - cos)` and `g = int lambda sin`.
#[derive(Clone)]
pub struct ReducedDephasing {
    pub f: f64,
    pub g: f64,
    /// Unitary whose first column spans `P1`, second `P2`.
    basis: Option<MatrixSampler>,
}

impl ReducedDephasing {
    pub fn new(f: f64, g: f64) -> Result<Self> {
        if !(f.is_finite() && f >= 0.0 && g.is_finite()) {
            return Err(Error::NegativeRate(f));
        }
        Ok(ReducedDephasing { f, g, basis: None })
    }

    pub fn in_moving_basis(mut self, basis: MatrixSampler) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn apply(&self, rho: &CMatrix, t: f64) -> CMatrix {
        let local = match &self.basis {
            None => rho.clone(),
            Some(u) => {
                let u = u(t);
                u.adjoint().matmul(rho).matmul(&u)
            }
        };
        let mut out = CMatrix::zeros(2);
        out[(0, 1)] = C64::new(-self.f, -self.g) * local[(0, 1)];
        out[(1, 0)] = C64::new(-self.f, self.g) * local[(1, 0)];
        match &self.basis {
            None => out,
            Some(u) => {
                let u = u(t);
                u.matmul(&out).matmul(&u.adjoint())
            }
        }
    }
}

/// Anything that can produce `drho/dt`.
pub trait Generator: Sync {
    fn rhs(&self, t: f64, rho: &CMatrix) -> Result<CMatrix>;
}

impl<F> Generator for F
where
    F: Fn(f64, &CMatrix) -> Result<CMatrix> + Sync,
{
    fn rhs(&self, t: f64, rho: &CMatrix) -> Result<CMatrix> {
        self(t, rho)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch { left: a, right: b });
    }
    Ok(())
}

/// `-i [H, rho]`
pub fn von_neumann(h: &CMatrix, rho: &CMatrix) -> CMatrix {
    commutator(h, rho).scale(-I)
}

/// Original-frame Lindblad generator.
pub fn lindblad_rhs(
    h: &CMatrix,
    diss: &DissipatorSet,
    rho: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    check_dims(h.dim(), rho.dim())?;
    check_dims(diss.dim(), rho.dim())?;
    Ok(lindblad_raw(h, diss, rho.matrix(), t))
}

pub(crate) fn lindblad_raw(h: &CMatrix, diss: &DissipatorSet, rho: &CMatrix, t: f64) -> CMatrix {
    let mut out = von_neumann(h, rho);
    out += &diss.apply(rho, t);
    out
}

/// Rotated-frame generator including the gauge terms `rho A^+A' - A^+A' rho`.
pub fn rotated_rhs_full(
    frame: &TransportFrame,
    diss: &DissipatorSet,
    rho_rot: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    check_dims(frame.dim(), rho_rot.dim())?;
    rotated_raw(frame, diss, rho_rot.matrix(), t, true)
}

/// Rotated-frame generator with the gauge terms dropped.
pub fn rotated_rhs_adiabatic(
    frame: &TransportFrame,
    diss: &DissipatorSet,
    rho_rot: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    check_dims(frame.dim(), rho_rot.dim())?;
    rotated_raw(frame, diss, rho_rot.matrix(), t, false)
}

pub(crate) fn rotated_raw(
    frame: &TransportFrame,
    diss: &DissipatorSet,
    rho_rot: &CMatrix,
    t: f64,
    gauge_terms: bool,
) -> Result<CMatrix> {
    let sample = frame.sample(t)?;
    let h_rot = frame.rotated_hamiltonian_from(&sample.energies);
    let mut out = von_neumann(&h_rot, rho_rot);
    if gauge_terms {
        let g = sample.unitary.adjoint().matmul(&frame.derivative(t)?);
        out += &rho_rot.matmul(&g);
        out.add_scaled(C64::new(-1.0, 0.0), &g.matmul(rho_rot));
    }
    if !diss.is_empty() {
        // Sum of A^+ G A (.) A^+ G^+ A terms equals A^+ D[A rho A^+] A.
        let a = &sample.unitary;
        let lab = a.matmul(rho_rot).matmul(&a.adjoint());
        let d = diss.apply(&lab, t);
        out += &a.adjoint().matmul(&d).matmul(a);
    }
    Ok(out)
}

/// Secular generator in a basis where the Hamiltonian is `diag(energies)`.
///
/// Populations couple to populations through `|G_ik|^2` only; each
/// coherence `rho_ij` evolves with its own complex rate
/// `-i(E_i - E_j) + sum_a [G_ii G_jj^* - 1/2 sum_k (|G_ki|^2 + |G_kj|^2)]`.
pub fn secular_rhs(
    energies: &[f64],
    diss_rotated: &DissipatorSet,
    rho: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    check_dims(energies.len(), rho.dim())?;
    check_dims(diss_rotated.dim(), rho.dim())?;
    check_secular(energies, diss_rotated.damping_scale())?;
    Ok(secular_raw(energies, &diss_rotated.ops_at(t), rho.matrix()))
}

/// Rejects spectra where a non-secular frequency difference is comparable to the damping.
pub fn check_secular(energies: &[f64], damping: f64) -> Result<()> {
    let n = energies.len();
    let w = |a: usize, b: usize| energies[a] - energies[b];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let allowed = (i == k && j == l) || (i == j && k == l);
                    if allowed {
                        continue;
                    }
                    let difference = (w(i, k) - w(j, l)).abs();
                    if difference < 10.0 * damping {
                        return Err(Error::SecularResonance { difference, damping });
                    }
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn secular_raw(energies: &[f64], ops: &[(f64, CMatrix)], rho: &CMatrix) -> CMatrix {
    let n = energies.len();
    let mut out = CMatrix::zeros(n);
    // column sums sum_k |G_ki|^2 per channel-weighted total
    let mut col_loss = vec![0.0; n];
    let mut rates = CMatrix::zeros(n); // rates[(i,k)] = sum_a w |G_ik|^2
    let mut diag_prod = CMatrix::zeros(n); // sum_a w G_ii G_jj^*
    for (w, g) in ops {
        for i in 0..n {
            for k in 0..n {
                let r = w * g[(i, k)].norm_sqr();
                rates[(i, k)] += C64::new(r, 0.0);
                col_loss[k] += r;
            }
            for j in 0..n {
                diag_prod[(i, j)] += g[(i, i)] * g[(j, j)].conj() * *w;
            }
        }
    }
    for i in 0..n {
        let mut gain = ZERO;
        for k in 0..n {
            gain += rates[(i, k)] * rho[(k, k)];
        }
        out[(i, i)] = gain - C64::new(col_loss[i], 0.0) * rho[(i, i)];
        for j in 0..n {
            if i == j {
                continue;
            }
            let rate = C64::new(0.0, -(energies[i] - energies[j])) + diag_prod[(i, j)]
                - C64::new(0.5 * (col_loss[i] + col_loss[j]), 0.0);
            out[(i, j)] = rate * rho[(i, j)];
        }
    }
    out
}

/// Generator with the dissipator averaged over an equally spaced phase grid:
/// `-i[diag(E), rho] + (1/M) sum_k 1/2 L_{G(beta_k)}[rho]`.
pub fn phase_averaged_rhs<F>(
    energies: &[f64],
    beta_samples: usize,
    gamma_beta: F,
    rho: &DensityMatrix,
) -> Result<CMatrix>
where
    F: Fn(f64) -> CMatrix,
{
    check_dims(energies.len(), rho.dim())?;
    let ops = phase_grid(beta_samples, gamma_beta)?;
    Ok(phase_averaged_raw(energies, &ops, rho.matrix()))
}

/// Operators `G(beta_k)` on the grid `beta_k = 2 pi k / M`.
pub fn phase_grid<F>(beta_samples: usize, gamma_beta: F) -> Result<Vec<CMatrix>>
where
    F: Fn(f64) -> CMatrix,
{
    if beta_samples < 4 {
        return Err(Error::InvalidArgument(format!(
            "phase averaging needs at least 4 samples, got {beta_samples}"
        )));
    }
    Ok((0..beta_samples)
        .map(|k| gamma_beta(2.0 * std::f64::consts::PI * k as f64 / beta_samples as f64))
        .collect())
}

pub(crate) fn phase_averaged_raw(energies: &[f64], ops: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let mut out = von_neumann(&CMatrix::real_diag(energies), rho);
    let scale = C64::new(1.0 / ops.len() as f64, 0.0);
    for g in ops {
        out.add_scaled(scale, &dissipator_term(g, rho));
    }
    out
}

/// `A^+ rho A`
pub fn to_frame(rho: &DensityMatrix, a: &CMatrix) -> Result<DensityMatrix> {
    Ok(DensityMatrix(conjugate(a, rho.matrix())?))
}

/// `A rho_rot A^+`
pub fn from_frame(rho_rot: &DensityMatrix, a: &CMatrix) -> Result<DensityMatrix> {
    Ok(DensityMatrix(unconjugate(a, rho_rot.matrix())?))
}

/// Integrated trajectory with per-step conservation diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// `|tr rho - 1|` before renormalisation, at each recorded sample.
    pub trace_drift: Vec<f64>,
    /// Minimum eigenvalue at each recorded sample.
    pub min_eigenvalue: Vec<f64>,
    pub steps: usize,
    /// Sum over all steps of the pre-correction trace error.
    pub accumulated_trace_drift: f64,
    /// Largest pre-correction `|rho - rho^+|_F` seen.
    pub max_hermiticity_residual: f64,
    /// Smallest eigenvalue seen over all steps.
    pub min_eigenvalue_seen: f64,
}

impl Trajectory {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().unwrap()
    }

    /// Accumulated trace drift scaled to a window of `window` steps.
    pub fn trace_drift_per(&self, window: usize) -> f64 {
        self.accumulated_trace_drift * window as f64 / self.steps.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    /// Record every `stride`-th step (the final state is always recorded).
    pub stride: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { stride: 1 }
    }
}

/// Classical RK4 with fixed step; re-Hermitises and renormalises after every step.
pub fn integrate<G: Generator + ?Sized>(
    gen: &G,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Trajectory> {
    integrate_with(gen, rho0, t0, t1, steps, IntegrateOptions::default())
}

pub fn integrate_with<G: Generator + ?Sized>(
    gen: &G,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    steps: usize,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("integrate needs at least one step".into()));
    }
    let stride = opts.stride.max(1);
    let h = (t1 - t0) / steps as f64;
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    let third = C64::new(h / 3.0, 0.0);

    let capacity = steps / stride + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        trace_drift: Vec::with_capacity(capacity),
        min_eigenvalue: Vec::with_capacity(capacity),
        steps,
        accumulated_trace_drift: 0.0,
        max_hermiticity_residual: 0.0,
        min_eigenvalue_seen: rho0.min_eigenvalue(),
    };
    traj.times.push(t0);
    traj.states.push(rho0.clone());
    traj.trace_drift.push(0.0);
    traj.min_eigenvalue.push(rho0.min_eigenvalue());

    let mut rho = rho0.matrix().clone();
    for step in 0..steps {
        let t = t0 + h * step as f64;
        let k1 = gen.rhs(t, &rho)?;
        let mut y = rho.clone();
        y.add_scaled(half, &k1);
        let k2 = gen.rhs(t + 0.5 * h, &y)?;
        let mut y = rho.clone();
        y.add_scaled(half, &k2);
        let k3 = gen.rhs(t + 0.5 * h, &y)?;
        let mut y = rho.clone();
        y.add_scaled(full, &k3);
        let k4 = gen.rhs(t + h, &y)?;

        let mut next = rho;
        next.add_scaled(sixth, &k1);
        next.add_scaled(third, &k2);
        next.add_scaled(third, &k3);
        next.add_scaled(sixth, &k4);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("state at t = {}", t + h)));
        }

        let tr = next.trace();
        let drift = (tr - C64::new(1.0, 0.0)).norm();
        traj.accumulated_trace_drift += drift;
        traj.max_hermiticity_residual = traj.max_hermiticity_residual.max(next.hermiticity_residual());
        rho = next.hermitian_part().scale_real(1.0 / tr.re);
        let t_next = if step + 1 == steps { t1 } else { t + h };
        let min = min_eigenvalue(&rho);
        traj.min_eigenvalue_seen = traj.min_eigenvalue_seen.min(min);
        if min < POSITIVITY_BREACH {
            return Err(Error::PositivityBreach { min_eigenvalue: min, t: t_next });
        }
        if (step + 1) % stride == 0 || step + 1 == steps {
            traj.times.push(t_next);
            traj.states.push(DensityMatrix(rho.clone()));
            traj.trace_drift.push(drift);
            traj.min_eigenvalue.push(min);
        }
    }
    Ok(traj)
}

/// Closure generator for the original frame with a time-dependent Hamiltonian.
pub fn original_frame<'a, H>(hamiltonian: H, diss: &'a DissipatorSet) -> impl Generator + 'a
where
    H: Fn(f64) -> CMatrix + Sync + 'a,
{
    move |t: f64, rho: &CMatrix| Ok(lindblad_raw(&hamiltonian(t), diss, rho, t))
}

/// Closure generator for the rotated frame.
pub fn rotated_frame<'a>(
    frame: &'a TransportFrame,
    diss: &'a DissipatorSet,
    gauge_terms: bool,
) -> impl Generator + 'a {
    move |t: f64, rho: &CMatrix| rotated_raw(frame, diss, rho, t, gauge_terms)
}

pub type SharedDissipators = Arc<DissipatorSet>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{frobenius_distance, pauli_x, pauli_z, sigma_minus, ONE};
    use crate::transport::{build_frame, HamiltonianPath};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn excited() -> DensityMatrix {
        DensityMatrix::pure(&[ONE, ZERO]).unwrap()
    }

    fn random_state(rng: &mut impl Rng, n: usize) -> DensityMatrix {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let p = m.matmul(&m.adjoint());
        let tr = p.trace().re;
        DensityMatrix::new(p.scale_real(1.0 / tr)).unwrap()
    }

    fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = if i == j { C64::new(z.re, 0.0) } else { z };
                m[(j, i)] = m[(i, j)].conj();
            }
        }
        eig_hermitian(&m, 1e-14).unwrap().vectors
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::real_diag(&[0.6, 0.6])).is_err());
        assert!(DensityMatrix::new(CMatrix::real_diag(&[1.2, -0.2])).is_err());
        assert!(DensityMatrix::new(CMatrix::from_real_rows(&[[0.5, 0.3], [0.0, 0.5]])).is_err());
        assert!(DensityMatrix::new(CMatrix::real_diag(&[0.25, 0.75])).is_ok());
    }

    #[test]
    fn decay_rhs_matches_hand_algebra() {
        let lambda = 0.3;
        let diss = DissipatorSet::single(lambda, sigma_minus()).unwrap();
        let rhs = lindblad_rhs(&CMatrix::zeros(2), &diss, &excited(), 0.0).unwrap();
        let expected = CMatrix::real_diag(&[-lambda, lambda]);
        assert!(frobenius_distance(&rhs, &expected).unwrap() < 1e-15);
    }

    #[test]
    fn pure_von_neumann_is_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_state(&mut rng, 3);
        let h = {
            let u = random_unitary(&mut rng, 3);
            u.matmul(&CMatrix::real_diag(&[0.1, 0.7, -1.3])).matmul(&u.adjoint())
        };
        let rhs = lindblad_rhs(&h, &DissipatorSet::empty(3), &rho, 0.0).unwrap();
        assert!(rhs.trace().norm() < 1e-15);
    }

    #[test]
    fn unitary_channel_fixes_maximally_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(&mut rng, 2);
        let diss = DissipatorSet::single(0.4, u).unwrap();
        let rhs = lindblad_rhs(&pauli_z(), &diss, &DensityMatrix::maximally_mixed(2), 0.0).unwrap();
        assert!(rhs.frobenius_norm() < 1e-15);
    }

    #[test]
    fn generator_is_traceless_and_hermitian_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3, 4] {
            let rho = random_state(&mut rng, n);
            let u = random_unitary(&mut rng, n);
            let h = u.matmul(&CMatrix::real_diag(&vec![0.5; n])).matmul(&u.adjoint());
            let mut diss = DissipatorSet::empty(n);
            for _ in 0..3 {
                let mut g = CMatrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
                diss.push(rng.gen_range(0.0..1.0), g).unwrap();
            }
            let rhs = lindblad_rhs(&h, &diss, &rho, 0.0).unwrap();
            assert!(rhs.trace().norm() < 1e-12);
            assert!(rhs.hermiticity_residual() < 1e-12);
        }
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(matches!(DissipatorSet::single(-1.0, sigma_minus()), Err(Error::NegativeRate(_))));
    }

    #[test]
    fn moving_basis_matches_explicit_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_unitary(&mut rng, 2);
        let uu = u.clone();
        let diss = DissipatorSet::single(0.7, sigma_minus())
            .unwrap()
            .in_moving_basis(Arc::new(move |_| uu.clone()));
        let explicit = DissipatorSet::single(0.7, u.matmul(&sigma_minus()).matmul(&u.adjoint())).unwrap();
        let rho = random_state(&mut rng, 2);
        let a = diss.apply(rho.matrix(), 0.3);
        let b = explicit.apply(rho.matrix(), 0.3);
        assert!(frobenius_distance(&a, &b).unwrap() < 1e-15);
    }

    #[test]
    fn superoperator_matches_channel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in [2, 3] {
            let mut diss = DissipatorSet::empty(n);
            for _ in 0..5 {
                let mut g = CMatrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
                diss.push(rng.gen_range(0.0..1.0), g).unwrap();
            }
            let u = random_unitary(&mut rng, n);
            let moving = diss.clone().in_moving_basis(Arc::new(move |_| u.clone()));
            let rho = random_state(&mut rng, n);
            for set in [&diss, &moving] {
                let a = set.apply(rho.matrix(), 0.0);
                let b = set.apply_by_channels(rho.matrix(), 0.0);
                assert!(frobenius_distance(&a, &b).unwrap() < 1e-14);
            }
        }
    }

    #[test]
    fn integrate_zero_rhs_is_constant() {
        let zero = |_: f64, r: &CMatrix| Ok(CMatrix::zeros(r.dim()));
        let rho = DensityMatrix::new(CMatrix::real_diag(&[0.3, 0.7])).unwrap();
        let traj = integrate(&zero, &rho, 0.0, 1.0, 10).unwrap();
        assert!(traj.states.iter().all(|s| s == &rho));
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let lambda = 0.5;
        let diss = DissipatorSet::single(lambda, sigma_minus()).unwrap();
        let gen = original_frame(|_| CMatrix::zeros(2), &diss);
        let t_end = 5.0 / lambda;
        let steps = (t_end * lambda / 1e-2) as usize;
        let traj = integrate(&gen, &excited(), 0.0, t_end, steps).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s.get(0, 0).re - (-lambda * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn rabi_period_matches() {
        let omega = 1.0;
        let h = pauli_x().scale_real(omega);
        let diss = DissipatorSet::empty(2);
        let gen = original_frame(move |_| h.clone(), &diss);
        // rho_ee = cos^2(omega t): minima at t = pi / (2 omega), period pi / omega.
        let period = std::f64::consts::PI / omega;
        let steps = 20_000;
        let traj = integrate(&gen, &excited(), 0.0, 2.0 * period, steps).unwrap();
        let pop: Vec<f64> = traj.states.iter().map(|s| s.get(0, 0).re).collect();
        // locate the second maximum by parabolic interpolation
        let h = 2.0 * period / steps as f64;
        let k = (steps / 2 - 100..steps / 2 + 100)
            .max_by(|&a, &b| pop[a].total_cmp(&pop[b]))
            .unwrap();
        let (y0, y1, y2) = (pop[k - 1], pop[k], pop[k + 1]);
        let offset = 0.5 * (y0 - y2) / (y0 - 2.0 * y1 + y2);
        let t_peak = (k as f64 + offset) * h;
        assert!(((t_peak - period) / period).abs() < 1e-6, "{t_peak} vs {period}");
    }

    #[test]
    fn conservation_diagnostics_are_tiny() {
        let diss = DissipatorSet::single(0.1, sigma_minus()).unwrap();
        let h = pauli_x();
        let gen = original_frame(move |_| h.clone(), &diss);
        let traj = integrate(&gen, &excited(), 0.0, 50.0, 10_000).unwrap();
        assert!(traj.trace_drift_per(10_000) < 1e-8);
        assert!(traj.max_hermiticity_residual < 1e-10);
        assert!(traj.min_eigenvalue_seen > -1e-8);
    }

    #[test]
    fn positivity_breach_is_reported() {
        // A wildly too-large step on a stiff decay overshoots into negative populations.
        let diss = DissipatorSet::single(100.0, sigma_minus()).unwrap();
        let gen = original_frame(|_| CMatrix::zeros(2), &diss);
        let r = integrate(&gen, &excited(), 0.0, 10.0, 3);
        assert!(matches!(r, Err(Error::PositivityBreach { .. }) | Err(Error::InvalidState(_))));
    }

    #[test]
    fn frame_round_trip_and_phase_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_state(&mut rng, 3);
        let u = random_unitary(&mut rng, 3);
        let back = from_frame(&to_frame(&rho, &u).unwrap(), &u).unwrap();
        assert!(frobenius_distance(back.matrix(), rho.matrix()).unwrap() < 1e-12);
        let e1 = eig_hermitian(rho.matrix(), 1e-14).unwrap().values;
        let e2 = eig_hermitian(&to_frame(&rho, &u).unwrap().matrix().hermitian_part(), 1e-14)
            .unwrap()
            .values;
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-12);
        }

        let phi = 0.37;
        let a = CMatrix::diag(&[(I * phi).exp(), (-I * phi).exp()]);
        let b = C64::new(0.2, 0.1);
        let r = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.6, 0.0), b],
            [b.conj(), C64::new(0.4, 0.0)],
        ]))
        .unwrap();
        let out = from_frame(&r, &a).unwrap();
        assert!((out.get(0, 1) - b * (I * 2.0 * phi).exp()).norm() < 1e-15);
        assert_eq!(to_frame(&r, &CMatrix::identity(2)).unwrap(), r);
        assert!(matches!(
            to_frame(&r, &CMatrix::real_diag(&[1.0, 2.0])),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn static_frame_rotated_equals_original() {
        let h = CMatrix::from_real_rows(&[[0.4, 0.3], [0.3, -0.4]]);
        let hh = h.clone();
        let path = HamiltonianPath::new(2, 3.0, true, move |_| hh.clone()).unwrap();
        let frame = build_frame(&path, 30).unwrap();
        let diss = DissipatorSet::single(0.2, sigma_minus()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_state(&mut rng, 2);
        let full = rotated_rhs_full(&frame, &diss, &rho, 1.2).unwrap();
        let adiabatic = rotated_rhs_adiabatic(&frame, &diss, &rho, 1.2).unwrap();
        let direct = lindblad_rhs(&h, &diss, &rho, 1.2).unwrap();
        assert!(frobenius_distance(&full, &adiabatic).unwrap() < 1e-15);
        assert!(frobenius_distance(&full, &direct).unwrap() < 1e-14);
    }

    #[test]
    fn rotated_dissipators_match_explicit_rotation() {
        let path = HamiltonianPath::new(2, 10.0, true, |t| {
            let p = 2.0 * std::f64::consts::PI * t / 10.0;
            CMatrix::from_rows(&[
                [C64::new(0.25, 0.0), (-I * p).exp()],
                [(I * p).exp(), C64::new(-0.25, 0.0)],
            ])
        })
        .unwrap();
        let frame = build_frame(&path, 1_000).unwrap();
        let diss = DissipatorSet::single(0.3, sigma_minus()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_state(&mut rng, 2);
        let t = frame.times()[317];
        let a = frame.sample(t).unwrap().unitary;
        let got = rotated_rhs_adiabatic(&frame, &diss, &rho, t).unwrap();
        let mut expected = von_neumann(&frame.rotated_hamiltonian(t).unwrap(), rho.matrix());
        for (w, g) in diss.conjugated_ops(&a, t).unwrap() {
            expected += &dissipator_term(&g.scale_real(w.sqrt()), rho.matrix());
        }
        assert!(frobenius_distance(&got, &expected).unwrap() < 1e-14);
        let full = rotated_rhs_full(&frame, &diss, &rho, t).unwrap();
        assert!(full.trace().norm() < 1e-12);
        assert!(full.hermiticity_residual() < 1e-12);
    }

    #[test]
    fn closed_system_rotated_generator_preserves_trace() {
        let path = HamiltonianPath::new(2, 5.0, true, |t| {
            let p = 2.0 * std::f64::consts::PI * t / 5.0;
            CMatrix::from_rows(&[
                [C64::new(0.25, 0.0), (-I * p).exp()],
                [(I * p).exp(), C64::new(-0.25, 0.0)],
            ])
        })
        .unwrap();
        let frame = build_frame(&path, 500).unwrap();
        let diss = DissipatorSet::empty(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for k in [0, 17, 250, 500] {
            let rho = random_state(&mut rng, 2);
            let r = rotated_rhs_full(&frame, &diss, &rho, frame.times()[k]).unwrap();
            assert!(r.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn secular_diagonal_dissipator_freezes_populations() {
        let diss = DissipatorSet::single(0.05, CMatrix::real_diag(&[1.0, -1.0])).unwrap();
        let rho = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.7, 0.0), C64::new(0.1, 0.2)],
            [C64::new(0.1, -0.2), C64::new(0.3, 0.0)],
        ]))
        .unwrap();
        let r = secular_rhs(&[1.0, -1.0], &diss, &rho, 0.0).unwrap();
        assert_eq!(r[(0, 0)], ZERO);
        assert_eq!(r[(1, 1)], ZERO);
        // -2i rho_01 - 2 * 0.05 rho_01
        let expected = C64::new(-0.1, -2.0) * rho.get(0, 1);
        assert!((r[(0, 1)] - expected).norm() < 1e-15);
    }

    #[test]
    fn secular_resonance_flagged() {
        let diss = DissipatorSet::single(1.0, sigma_minus()).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            secular_rhs(&[0.1, -0.1], &diss, &rho, 0.0),
            Err(Error::SecularResonance { .. })
        ));
        // equally spaced three-level ladder has a vanishing non-secular difference
        let diss3 = DissipatorSet::single(1e-3, CMatrix::identity(3)).unwrap();
        assert!(matches!(
            secular_rhs(&[1.0, 0.0, -1.0], &diss3, &DensityMatrix::maximally_mixed(3), 0.0),
            Err(Error::SecularResonance { .. })
        ));
    }

    #[test]
    fn secular_matches_time_averaged_interaction_picture() {
        // Brute-force oracle: average e^{iHt} D[e^{-iHt} . e^{iHt}] e^{-iHt} over one
        // period of the slowest Bohr frequency (exact for an equally spaced grid).
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let energies = [0.9, -0.9];
        let mut g = CMatrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let diss = DissipatorSet::single(0.01, g).unwrap();
        let rho = random_state(&mut rng, 2);
        let period = std::f64::consts::PI / 0.9;
        let samples = 16;
        let mut avg = CMatrix::zeros(2);
        for k in 0..samples {
            let t = period * k as f64 / samples as f64;
            let u = CMatrix::diag(&[(-I * energies[0] * t).exp(), (-I * energies[1] * t).exp()]);
            let inner = u.matmul(rho.matrix()).matmul(&u.adjoint());
            let d = diss.apply(&inner, 0.0);
            avg.add_scaled(
                C64::new(1.0 / samples as f64, 0.0),
                &u.adjoint().matmul(&d).matmul(&u),
            );
        }
        let sec = secular_rhs(&energies, &diss, &rho, 0.0).unwrap();
        let ham = von_neumann(&CMatrix::real_diag(&energies), rho.matrix());
        let sec_diss = &sec - &ham;
        assert!(frobenius_distance(&sec_diss, &avg).unwrap() < 1e-15);
    }

    #[test]
    fn phase_average_needs_four_samples() {
        let r = phase_averaged_rhs(&[1.0, -1.0], 3, |_| CMatrix::zeros(2), &DensityMatrix::maximally_mixed(2));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn phase_average_with_zero_rate_is_hamiltonian() {
        let rho = excited();
        let r = phase_averaged_rhs(&[1.0, -1.0], 8, |_| CMatrix::zeros(2), &rho).unwrap();
        let h = von_neumann(&CMatrix::real_diag(&[1.0, -1.0]), rho.matrix());
        assert_eq!(r, h);
    }

    #[test]
    fn reduced_dephasing_matches_explicit_channels() {
        let (f, g) = (0.3, -0.2);
        let red = ReducedDephasing::new(f, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = random_state(&mut rng, 2);
        // Two channels with weights chosen so that sum w (1 - cos a) = f, sum w sin a = g.
        let alphas = [0.8f64, -1.9f64];
        let m = CMatrix::from_real_rows(&[
            [1.0 - alphas[0].cos(), 1.0 - alphas[1].cos()],
            [alphas[0].sin(), alphas[1].sin()],
        ]);
        let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
        let w0 = (f * m[(1, 1)].re - g * m[(0, 1)].re) / det;
        let w1 = (g * m[(0, 0)].re - f * m[(1, 0)].re) / det;
        assert!(w0 > 0.0 && w1 > 0.0);
        let mut diss = DissipatorSet::empty(2);
        for (w, a) in [(w0, alphas[0]), (w1, alphas[1])] {
            diss.push(w, CMatrix::diag(&[ONE, (I * a).exp()])).unwrap();
        }
        let explicit = diss.apply(rho.matrix(), 0.0);
        let reduced = red.apply(rho.matrix(), 0.0);
        assert!(frobenius_distance(&explicit, &reduced).unwrap() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn rhs_trace_and_hermiticity_invariant(seed in proptest::prelude::any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..=4);
            let rho = random_state(&mut rng, n);
            let u = random_unitary(&mut rng, n);
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = u.matmul(&CMatrix::real_diag(&diag)).matmul(&u.adjoint());
            let mut diss = DissipatorSet::empty(n);
            let mut g = CMatrix::zeros(n);
            for i in 0..n { for j in 0..n {
                g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }}
            diss.push(rng.gen_range(0.0..2.0), g).unwrap();
            let r = lindblad_rhs(&h, &diss, &rho, 0.0).unwrap();
            proptest::prop_assert!(r.trace().norm() < 1e-12);
            proptest::prop_assert!(r.hermiticity_residual() < 1e-12);
        }
    }
}
