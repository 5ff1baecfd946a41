//! Ready-made physical scenarios: a laser-driven two-level atom with
//! spontaneous emission or collisional dephasing, and a spin-1/2 in a
//! steered magnetic field with eigenbasis dephasing (plus its echo protocol).
//!
//! Basis order is `(|e>, |g>)` throughout.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{
    integrate_with, lindblad_raw, DensityMatrix, DissipatorSet, IntegrateOptions, Quadrature,
    ReducedDephasing, Trajectory,
};
use crate::matcore::{eig_hermitian, pauli_x, pauli_y, pauli_z, sigma_minus, CMatrix, C64, I, ONE};
use crate::transport::{Axis, HamiltonianPath};

pub const DEFAULT_NODES: usize = 64;
pub const MIN_NODES: usize = 8;

/// How the loop parameter advances from 0 to 2 pi over the period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// `2 pi t / T`
    #[default]
    Linear,
    /// `2 pi (s - sin(2 pi s) / 2 pi)` with `s = t / T`; starts and stops with zero velocity.
    Smooth,
}

impl Schedule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Schedule::Linear),
            "smooth" => Some(Schedule::Smooth),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Smooth => "smooth",
        }
    }

    /// Loop angle at fractional time `s`.
    pub fn angle(self, s: f64) -> f64 {
        match self {
            Schedule::Linear => 2.0 * PI * s,
            Schedule::Smooth => 2.0 * PI * s - (2.0 * PI * s).sin(),
        }
    }
}

/// Rate density `lambda(alpha)` of phase kicks on `(-pi, pi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollisionDensity {
    /// `lambda0 / 2 pi`
    Constant { lambda0: f64 },
    /// `lambda0 (1 + sin alpha) / 2 pi`
    ShiftedSine { lambda0: f64 },
    /// Gaussian of total weight `lambda0`; must sit well inside the interval.
    NarrowGaussian { lambda0: f64, center: f64, width: f64 },
    /// Piecewise-linear interpolation of samples on an increasing grid, zero outside.
    Tabulated { alphas: Vec<f64>, values: Vec<f64> },
}

impl CollisionDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            CollisionDensity::Constant { lambda0 } | CollisionDensity::ShiftedSine { lambda0 } => {
                check_rate(*lambda0)
            }
            CollisionDensity::NarrowGaussian { lambda0, center, width } => {
                check_rate(*lambda0)?;
                if !(*width > 0.0 && center.abs() + 8.0 * width <= PI) {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian density (center {center}, width {width}) must fit inside (-pi, pi] with 8 widths to spare"
                    )));
                }
                Ok(())
            }
            CollisionDensity::Tabulated { alphas, values } => {
                if alphas.len() != values.len() || alphas.len() < 2 {
                    return Err(Error::InvalidArgument("tabulated density needs matching grids of length >= 2".into()));
                }
                if alphas.windows(2).any(|w| w[1] <= w[0]) || alphas[0] < -PI || alphas[alphas.len() - 1] > PI {
                    return Err(Error::InvalidArgument("tabulated grid must increase within [-pi, pi]".into()));
                }
                for (&alpha, &value) in alphas.iter().zip(values) {
                    if !(value.is_finite() && value >= 0.0) {
                        return Err(Error::NegativeDensity { alpha, value });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, alpha: f64) -> f64 {
        match self {
            CollisionDensity::Constant { lambda0 } => lambda0 / (2.0 * PI),
            CollisionDensity::ShiftedSine { lambda0 } => lambda0 * (1.0 + alpha.sin()) / (2.0 * PI),
            CollisionDensity::NarrowGaussian { lambda0, center, width } => {
                let z = (alpha - center) / width;
                lambda0 * (-0.5 * z * z).exp() / (width * (2.0 * PI).sqrt())
            }
            CollisionDensity::Tabulated { alphas, values } => {
                if alpha < alphas[0] || alpha > alphas[alphas.len() - 1] {
                    return 0.0;
                }
                let k = alphas.partition_point(|&a| a <= alpha).clamp(1, alphas.len() - 1);
                let w = (alpha - alphas[k - 1]) / (alphas[k] - alphas[k - 1]);
                (1.0 - w) * values[k - 1] + w * values[k]
            }
        }
    }

    /// `int lambda(alpha) d alpha`
    pub fn total_rate(&self) -> f64 {
        match self {
            CollisionDensity::Constant { lambda0 }
            | CollisionDensity::ShiftedSine { lambda0 }
            | CollisionDensity::NarrowGaussian { lambda0, .. } => *lambda0,
            CollisionDensity::Tabulated { alphas, values } => alphas
                .windows(2)
                .zip(values.windows(2))
                .map(|(a, v)| 0.5 * (a[1] - a[0]) * (v[0] + v[1]))
                .sum(),
        }
    }

    /// `(f, g) = (int lambda (1 - cos), int lambda sin)` by composite Simpson on a fine grid.
    pub fn moments(&self) -> (f64, f64) {
        let n = 20_000;
        let h = 2.0 * PI / n as f64;
        let (mut f, mut g) = (0.0, 0.0);
        for k in 0..=n {
            let a = -PI + h * k as f64;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let l = self.at(a);
            f += w * l * (1.0 - a.cos());
            g += w * l * a.sin();
        }
        (f * h / 3.0, g * h / 3.0)
    }

    /// Midpoint grid with `nodes` cells on `(-pi, pi)`.
    pub fn quadrature(&self, nodes: usize) -> Result<Quadrature> {
        self.validate()?;
        if nodes < MIN_NODES {
            return Err(Error::InvalidArgument(format!("need at least {MIN_NODES} quadrature nodes, got {nodes}")));
        }
        let da = 2.0 * PI / nodes as f64;
        let alphas: Vec<f64> = (0..nodes).map(|k| -PI + (k as f64 + 0.5) * da).collect();
        let mut weights = Vec::with_capacity(nodes);
        for &alpha in &alphas {
            let value = self.at(alpha);
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::NegativeDensity { alpha, value });
            }
            weights.push(value * da);
        }
        Ok(Quadrature { nodes: alphas, weights, integral: self.total_rate() })
    }
}

fn check_rate(r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::NegativeRate(r));
    }
    Ok(())
}

/// `Gamma = sqrt(lambda) sigma_-` in the atomic basis.
pub fn emission_dissipator(lambda: f64) -> Result<DissipatorSet> {
    check_rate(lambda)?;
    let mut set = DissipatorSet::empty(2);
    if lambda > 0.0 {
        set.push(lambda, sigma_minus())?;
    }
    Ok(set)
}

/// Midpoint family `sqrt(lambda(alpha_k) d alpha) diag(1, e^{i alpha_k})`.
pub fn dephasing_dissipators(d: &CollisionDensity, nodes: usize) -> Result<DissipatorSet> {
    let q = d.quadrature(nodes)?;
    DissipatorSet::from_quadrature(2, q, |a| CMatrix::diag(&[ONE, (I * a).exp()]))
}

/// `rho = 1/2 + p sigma_3`, `|p| <= 1/2`.
pub fn inversion_state(p: f64) -> Result<DensityMatrix> {
    if !(p.abs() <= 0.5) {
        return Err(Error::InvalidArgument(format!("|p| must be at most 1/2, got {p}")));
    }
    DensityMatrix::new(CMatrix::real_diag(&[0.5 + p, 0.5 - p]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaserDamping {
    None,
    Emission { rate: f64 },
    Dephasing { density: CollisionDensity, nodes: usize },
}

/// Two-level atom in a resonant field whose phase winds once per period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserModel {
    pub delta: f64,
    pub omega: f64,
    pub period: f64,
    pub schedule: Schedule,
    pub damping: LaserDamping,
}

impl LaserModel {
    pub fn new(delta: f64, omega: f64, period: f64) -> Result<Self> {
        let m = LaserModel { delta, omega, period, schedule: Schedule::Linear, damping: LaserDamping::None };
        m.validate()?;
        Ok(m)
    }

    pub fn with_emission(mut self, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        self.damping = LaserDamping::Emission { rate };
        Ok(self)
    }

    pub fn with_dephasing(mut self, density: CollisionDensity, nodes: usize) -> Result<Self> {
        density.validate()?;
        self.damping = LaserDamping::Dephasing { density, nodes };
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::InvalidArgument("omega must be finite and nonnegative, delta finite".into()));
        }
        if !(self.energy() > 0.0) {
            return Err(Error::InvalidArgument("E = sqrt(omega^2 + delta^2/4) must be positive".into()));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidArgument(format!("period must be positive, got {}", self.period)));
        }
        match &self.damping {
            LaserDamping::None => Ok(()),
            LaserDamping::Emission { rate } => check_rate(*rate),
            LaserDamping::Dephasing { density, .. } => density.validate(),
        }
    }

    pub fn energy(&self) -> f64 {
        (self.omega * self.omega + 0.25 * self.delta * self.delta).sqrt()
    }

    pub fn sin_half(&self) -> f64 {
        let e = self.energy();
        ((e - 0.5 * self.delta) / (2.0 * e)).max(0.0).sqrt()
    }

    pub fn cos_half(&self) -> f64 {
        let e = self.energy();
        ((e + 0.5 * self.delta) / (2.0 * e)).max(0.0).sqrt()
    }

    /// `cos theta = delta / 2E`
    pub fn cos_theta(&self) -> f64 {
        0.5 * self.delta / self.energy()
    }

    /// `sin theta = omega / E`
    pub fn sin_theta(&self) -> f64 {
        self.omega / self.energy()
    }

    pub fn phase(&self, t: f64) -> f64 {
        self.schedule.angle(t / self.period)
    }

    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        laser_matrix(self.delta, self.omega, self.phase(t))
    }

    /// `(|+(t)>, |-(t)>)` in the explicit parallel-transported gauge.
    pub fn eigenstates(&self, t: f64) -> (Vec<C64>, Vec<C64>) {
        let c = self.c_matrix(t);
        (c.column(0), c.column(1))
    }

    /// `C(t)`: columns `|+(t)>`, `|-(t)>`.
    pub fn c_matrix(&self, t: f64) -> CMatrix {
        let (s, c) = (self.sin_half(), self.cos_half());
        let phi = self.phase(t);
        let ph = |x: f64| (I * x).exp();
        CMatrix::from_rows(&[
            [ph(-phi * s * s) * c, -ph(-phi * c * c) * s],
            [ph(phi * c * c) * s, ph(phi * s * s) * c],
        ])
    }

    /// `C^+(t) sigma_- C(t)` (multiply by `sqrt(lambda)` for the Lindblad operator).
    pub fn emission_c_operator(&self, t: f64) -> CMatrix {
        let (s, c) = (self.sin_half(), self.cos_half());
        let phi = self.phase(t);
        let x = phi * self.cos_theta();
        let global = (-I * phi).exp();
        CMatrix::from_rows(&[
            [global * (c * s), -global * (-I * x).exp() * (s * s)],
            [global * (I * x).exp() * (c * c), -global * (c * s)],
        ])
    }

    /// The textbook display of the rotated emission operator. It drops the
    /// global phase `e^{-i phi}` and the sign of the upper off-diagonal entry
    /// relative to `emission_c_operator`; both are invisible to the secular and
    /// phase-averaged generators, which see only moduli of off-diagonal entries.
    pub fn emission_c_display(&self, t: f64) -> CMatrix {
        let (s, c) = (self.sin_half(), self.cos_half());
        let x = self.phase(t) * self.cos_theta();
        CMatrix::from_rows(&[
            [C64::new(c * s, 0.0), (-I * x).exp() * (s * s)],
            [(I * x).exp() * (c * c), C64::new(-c * s, 0.0)],
        ])
    }

    /// Emission operator with the off-diagonal phases replaced by `e^{-/+ i beta}`.
    pub fn emission_c_beta(&self, beta: f64) -> CMatrix {
        let (s, c) = (self.sin_half(), self.cos_half());
        CMatrix::from_rows(&[
            [C64::new(c * s, 0.0), (-I * beta).exp() * (s * s)],
            [(I * beta).exp() * (c * c), C64::new(-c * s, 0.0)],
        ])
    }

    /// `C^+(t) diag(1, e^{i alpha}) C(t)` (multiply by `sqrt(lambda(alpha))`).
    pub fn dephasing_c_operator(&self, t: f64, alpha: f64) -> CMatrix {
        let (s, c) = (self.sin_half(), self.cos_half());
        let x = self.phase(t) * self.cos_theta();
        let e = (I * alpha).exp();
        let off = I * self.sin_theta() * (0.5 * alpha).sin();
        CMatrix::from_rows(&[
            [ONE * (c * c) + e * (s * s), off * (I * (-x + 0.5 * alpha)).exp()],
            [off * (I * (x + 0.5 * alpha)).exp(), ONE * (s * s) + e * (c * c)],
        ])
    }

    pub fn path(&self) -> Result<HamiltonianPath> {
        let m = self.clone();
        HamiltonianPath::new(2, self.period, true, move |t| m.hamiltonian(t))
    }

    /// Dissipators in the atomic basis.
    pub fn dissipators(&self) -> Result<DissipatorSet> {
        match &self.damping {
            LaserDamping::None => Ok(DissipatorSet::empty(2)),
            LaserDamping::Emission { rate } => emission_dissipator(*rate),
            LaserDamping::Dephasing { density, nodes } => dephasing_dissipators(density, *nodes),
        }
    }

    /// The same dissipators seen from the `C(t)` frame: `C^+ Gamma C`.
    pub fn c_frame_dissipators(&self) -> Result<DissipatorSet> {
        let m = self.clone();
        Ok(self
            .dissipators()?
            .in_moving_basis(Arc::new(move |t| m.c_matrix(t).adjoint())))
    }

    /// Exact continuum dephasing in the atomic basis, if the damping is dephasing.
    pub fn reduced_dephasing(&self) -> Option<ReducedDephasing> {
        match &self.damping {
            LaserDamping::Dephasing { density, .. } => {
                let (f, g) = density.moments();
                ReducedDephasing::new(f, g).ok()
            }
            _ => None,
        }
    }

    pub fn rate_scale(&self) -> f64 {
        match &self.damping {
            LaserDamping::None => 0.0,
            LaserDamping::Emission { rate } => *rate,
            LaserDamping::Dephasing { density, .. } => density.total_rate(),
        }
    }
}

fn laser_matrix(delta: f64, omega: f64, phi: f64) -> CMatrix {
    CMatrix::from_rows(&[
        [C64::new(0.5 * delta, 0.0), (-I * phi).exp() * omega],
        [(I * phi).exp() * omega, C64::new(-0.5 * delta, 0.0)],
    ])
}

pub fn laser_hamiltonian(m: &LaserModel, t: f64) -> CMatrix {
    m.hamiltonian(t)
}

pub fn laser_eigenstates(m: &LaserModel, t: f64) -> (Vec<C64>, Vec<C64>) {
    m.eigenstates(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DephasingRoute {
    /// Midpoint quadrature with the given number of channels.
    Quadrature { nodes: usize },
    /// Exact two-constant `(f, g)` generator.
    Reduced,
}

/// Spin-1/2 in a field of constant strength whose direction sweeps a cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinModel {
    /// Half splitting: `H = E n.sigma`.
    pub energy: f64,
    pub theta_b: f64,
    pub period: f64,
    pub schedule: Schedule,
    pub density: Option<CollisionDensity>,
    pub route: DephasingRoute,
}

impl SpinModel {
    pub fn new(energy: f64, theta_b: f64, period: f64) -> Result<Self> {
        let m = SpinModel {
            energy,
            theta_b,
            period,
            schedule: Schedule::Linear,
            density: None,
            route: DephasingRoute::Quadrature { nodes: DEFAULT_NODES },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_dephasing(mut self, density: CollisionDensity) -> Result<Self> {
        density.validate()?;
        self.density = Some(density);
        Ok(self)
    }

    pub fn with_route(mut self, route: DephasingRoute) -> Self {
        self.route = route;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy.is_finite() && self.energy > 0.0) {
            return Err(Error::InvalidArgument(format!("E must be positive, got {}", self.energy)));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidArgument(format!("period must be positive, got {}", self.period)));
        }
        if !(0.0..=PI).contains(&self.theta_b) {
            return Err(Error::InvalidArgument(format!("theta_b must lie in [0, pi], got {}", self.theta_b)));
        }
        if let Some(d) = &self.density {
            d.validate()?;
        }
        Ok(())
    }

    pub fn azimuth(&self, t: f64) -> f64 {
        self.schedule.angle(t / self.period)
    }

    pub fn axis(&self, t: f64) -> Axis {
        let (st, ct) = self.theta_b.sin_cos();
        let (sp, cp) = self.azimuth(t).sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        let [x, y, z] = self.axis(t);
        let mut h = pauli_x().scale_real(x);
        h += &pauli_y().scale_real(y);
        h += &pauli_z().scale_real(z);
        h.scale_real(self.energy)
    }

    /// Unitary with columns `|e(t)>` (energy `+E`) and `|g(t)>` (energy `-E`).
    pub fn eigenbasis(&self, t: f64) -> CMatrix {
        let (s, c) = (0.5 * self.theta_b).sin_cos();
        let ph = (I * self.azimuth(t)).exp();
        CMatrix::from_rows(&[[ONE * c, -ph.conj() * s], [ph * s, ONE * c]])
    }

    pub fn path(&self) -> Result<HamiltonianPath> {
        let m = self.clone();
        HamiltonianPath::new(2, self.period, true, move |t| m.hamiltonian(t))
    }

    /// `(f, g)` of the dephasing density (zero without dephasing).
    pub fn moments(&self) -> (f64, f64) {
        self.density.as_ref().map(|d| d.moments()).unwrap_or((0.0, 0.0))
    }

    /// Quadrature dissipators acting on the instantaneous eigenbasis.
    pub fn dissipators(&self) -> Result<DissipatorSet> {
        self.leg_dissipators(false)
    }

    /// Quadrature dissipators for the forward leg or for the loop run backwards.
    pub fn leg_dissipators(&self, reversed: bool) -> Result<DissipatorSet> {
        let Some(density) = &self.density else {
            return Ok(DissipatorSet::empty(2));
        };
        let nodes = match self.route {
            DephasingRoute::Quadrature { nodes } => nodes,
            DephasingRoute::Reduced => DEFAULT_NODES,
        };
        let m = self.clone();
        let period = self.period;
        Ok(dephasing_dissipators(density, nodes)?.in_moving_basis(Arc::new(move |s| {
            m.eigenbasis(if reversed { period - s } else { s })
        })))
    }

    /// Exact `(f, g)` dephasing for the forward leg or for the loop run backwards.
    pub fn leg_reduced(&self, reversed: bool) -> Result<Option<ReducedDephasing>> {
        let Some(_) = &self.density else { return Ok(None) };
        let (f, g) = self.moments();
        let m = self.clone();
        let period = self.period;
        Ok(Some(ReducedDephasing::new(f, g)?.in_moving_basis(Arc::new(move |s| {
            m.eigenbasis(if reversed { period - s } else { s })
        }))))
    }

    /// Dissipative part of the generator at time `s` of a forward or reversed leg.
    fn leg_generator(
        &self,
        reversed: bool,
    ) -> Result<impl Fn(f64, &CMatrix) -> Result<CMatrix> + Sync + '_> {
        let diss = match self.route {
            DephasingRoute::Quadrature { .. } => self.leg_dissipators(reversed)?,
            DephasingRoute::Reduced => DissipatorSet::empty(2),
        };
        let reduced = match self.route {
            DephasingRoute::Reduced => self.leg_reduced(reversed)?,
            DephasingRoute::Quadrature { .. } => None,
        };
        let period = self.period;
        Ok(move |s: f64, rho: &CMatrix| {
            let t = if reversed { period - s } else { s };
            let mut out = lindblad_raw(&self.hamiltonian(t), &diss, rho, s);
            if let Some(r) = &reduced {
                out += &r.apply(rho, s);
            }
            Ok(out)
        })
    }

    /// Forward loop, eigenbasis sigma_x, reversed loop, sigma_x again.
    pub fn echo(&self, rho0: &DensityMatrix, steps: usize) -> Result<EchoRun> {
        let opts = IntegrateOptions { stride: steps.max(1) };
        let forward = integrate_with(&self.leg_generator(false)?, rho0, 0.0, self.period, steps, opts)?;
        let x = self.eigen_flip();
        let flipped = DensityMatrix::new(flip(&x, forward.last().matrix()))?;
        let backward = integrate_with(&self.leg_generator(true)?, &flipped, 0.0, self.period, steps, opts)?;
        let final_state = DensityMatrix::new(flip(&x, backward.last().matrix()))?;
        Ok(EchoRun { final_state, forward, backward })
    }

    /// `|e(0)><g(0)| + |g(0)><e(0)|`
    pub fn eigen_flip(&self) -> CMatrix {
        let u = self.eigenbasis(0.0);
        u.matmul(&pauli_x()).matmul(&u.adjoint())
    }

    /// `<e(0)|rho|g(0)>`
    pub fn coherence(&self, rho: &DensityMatrix) -> C64 {
        let u = self.eigenbasis(0.0);
        u.adjoint().matmul(rho.matrix()).matmul(&u)[(0, 1)]
    }

    /// `<e(0)|rho|e(0)>`
    pub fn excited_population(&self, rho: &DensityMatrix) -> f64 {
        let u = self.eigenbasis(0.0);
        u.adjoint().matmul(rho.matrix()).matmul(&u)[(0, 0)].re
    }
}

fn flip(x: &CMatrix, rho: &CMatrix) -> CMatrix {
    x.matmul(rho).matmul(x).hermitian_part()
}

/// Outcome of the echo sequence with both legs' diagnostics.
#[derive(Clone, Debug)]
pub struct EchoRun {
    pub final_state: DensityMatrix,
    pub forward: Trajectory,
    pub backward: Trajectory,
}

/// `H(t)` and the dissipators active at `t`.
pub fn spin_model_generator(m: &SpinModel, t: f64) -> Result<(CMatrix, Vec<(f64, CMatrix)>)> {
    Ok((m.hamiltonian(t), m.dissipators()?.ops_at(t)))
}

pub fn echo_protocol(m: &SpinModel, rho0: &DensityMatrix, steps: usize) -> Result<DensityMatrix> {
    Ok(m.echo(rho0, steps)?.final_state)
}

/// Three-level path `H(t) = R H0 R^+` with a doubly degenerate upper level,
/// `R(t) = exp(-i phi(t) J)` and `J = W diag(1, 0, -1) W^+` for a seeded random `W`.
#[derive(Clone, Debug)]
pub struct DegenerateRotor {
    pub period: f64,
    pub generator: CMatrix,
    pub h0: CMatrix,
    w: CMatrix,
}

impl DegenerateRotor {
    pub fn new(seed: u64, period: f64) -> Result<Self> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CMatrix::zeros(3);
        for i in 0..3 {
            for j in i..3 {
                let z = C64::new(rng.gen_range(-1.0..1.0), if i == j { 0.0 } else { rng.gen_range(-1.0..1.0) });
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        let w = eig_hermitian(&m, 1e-14)?.vectors;
        let generator = w.matmul(&CMatrix::real_diag(&[1.0, 0.0, -1.0])).matmul(&w.adjoint());
        Ok(DegenerateRotor { period, generator, h0: CMatrix::real_diag(&[1.0, 1.0, -1.0]), w })
    }

    pub fn rotation(&self, t: f64) -> CMatrix {
        let a = 2.0 * PI * t / self.period;
        let d = CMatrix::diag(&[(-I * a).exp(), ONE, (I * a).exp()]);
        self.w.matmul(&d).matmul(&self.w.adjoint())
    }

    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        let r = self.rotation(t);
        r.matmul(&self.h0).matmul(&r.adjoint())
    }

    pub fn path(&self) -> Result<HamiltonianPath> {
        let m = self.clone();
        HamiltonianPath::new(3, self.period, true, move |t| m.hamiltonian(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::secular_rhs;
    use crate::matcore::{frobenius_distance, inner};
    use crate::transport::{build_frame, holonomy, nonabelian_holonomy, solid_angle, DEFAULT_CLUSTER_TOL};

    fn laser() -> LaserModel {
        LaserModel::new(0.5, 1.0, 50.0).unwrap()
    }

    #[test]
    fn resonant_hamiltonian_is_sigma_x() {
        let m = LaserModel::new(0.0, 1.0, 10.0).unwrap();
        assert_eq!(m.hamiltonian(0.0), pauli_x());
        assert!((m.sin_half() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((m.cos_half() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn laser_spectrum_and_closure() {
        let m = laser();
        for k in 0..20 {
            let t = m.period * k as f64 / 19.0;
            let e = eig_hermitian(&m.hamiltonian(t), 1e-14).unwrap().values;
            assert!((e[0] + m.energy()).abs() < 1e-12 && (e[1] - m.energy()).abs() < 1e-12);
        }
        let d = frobenius_distance(&m.hamiltonian(0.0), &m.hamiltonian(m.period)).unwrap();
        assert!(d < 1e-12);
        let s = m.clone().with_schedule(Schedule::Smooth);
        assert!(frobenius_distance(&s.hamiltonian(0.0), &s.hamiltonian(s.period)).unwrap() < 1e-12);
    }

    #[test]
    fn half_angles_are_normalised() {
        for (d, o) in [(0.5, 1.0), (-3.0, 0.2), (0.0, 2.0), (4.0, 0.0)] {
            let m = LaserModel::new(d, o, 1.0).unwrap();
            let s = m.sin_half();
            let c = m.cos_half();
            assert!((s * s + c * c - 1.0).abs() < 1e-15);
            assert!((2.0 * s * c - m.sin_theta()).abs() < 1e-15);
            assert!((c * c - s * s - m.cos_theta()).abs() < 1e-15);
        }
    }

    #[test]
    fn paper_gauge_states_are_eigenstates_and_transported() {
        let m = laser();
        let h = 1e-5;
        for t in [0.1, 7.3, 31.0] {
            let (p, mm) = m.eigenstates(t);
            let hp = m.hamiltonian(t).apply(&p);
            let hm = m.hamiltonian(t).apply(&mm);
            for i in 0..2 {
                assert!((hp[i] - p[i] * m.energy()).norm() < 1e-12);
                assert!((hm[i] + mm[i] * m.energy()).norm() < 1e-12);
            }
            // <n| d/dt |n> = 0
            let (p2, m2) = m.eigenstates(t + h);
            let (p0, m0) = m.eigenstates(t - h);
            let dt = 2.0 * h;
            for (a, b, c) in [(&p, &p2, &p0), (&mm, &m2, &m0)] {
                let d: Vec<C64> = b.iter().zip(c).map(|(x, y)| (x - y) / dt).collect();
                assert!(inner(a, &d).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn numeric_transport_matches_paper_gauge() {
        let m = laser();
        let frame = build_frame(&m.path().unwrap(), 10_000).unwrap();
        let (p0, m0) = m.eigenstates(0.0);
        let v0 = frame.initial_basis();
        // frame band 1 is +E, band 0 is -E
        let gauge = [inner(&v0.column(1), &p0), inner(&v0.column(0), &m0)];
        let mut worst: f64 = 0.0;
        for k in (0..frame.len()).step_by(250) {
            let t = frame.times()[k];
            let (p, mm) = m.eigenstates(t);
            let basis = frame.transported_basis(k);
            for (band, (col, ana)) in [(1, &p), (0, &mm)].into_iter().enumerate() {
                let num = basis.column(col);
                for i in 0..2 {
                    worst = worst.max((num[i] * gauge[band] - ana[i]).norm());
                }
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn rotated_emission_operator_matches_display() {
        let m = laser().with_schedule(Schedule::Smooth);
        for t in [0.0, 3.3, 17.0, 50.0] {
            let c = m.c_matrix(t);
            let direct = c.adjoint().matmul(&sigma_minus()).matmul(&c);
            assert!(frobenius_distance(&direct, &m.emission_c_operator(t)).unwrap() < 1e-12);
            let shown = m.emission_c_display(t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((direct[(i, j)].norm() - shown[(i, j)].norm()).abs() < 1e-12);
                }
            }
            let e = m.energy();
            let rho = DensityMatrix::new(CMatrix::from_rows(&[
                [C64::new(0.3, 0.0), C64::new(0.1, 0.2)],
                [C64::new(0.1, -0.2), C64::new(0.7, 0.0)],
            ]))
            .unwrap();
            let a = secular_rhs(&[e, -e], &DissipatorSet::single(0.01, direct).unwrap(), &rho, t).unwrap();
            let b = secular_rhs(&[e, -e], &DissipatorSet::single(0.01, shown).unwrap(), &rho, t).unwrap();
            assert!(frobenius_distance(&a, &b).unwrap() < 1e-15);
            for alpha in [-2.5, -0.3, 0.9, 3.0] {
                let g = CMatrix::diag(&[ONE, (I * alpha).exp()]);
                let direct = c.adjoint().matmul(&g).matmul(&c);
                let shown = m.dephasing_c_operator(t, alpha);
                assert!(frobenius_distance(&direct, &shown).unwrap() < 1e-12);
            }
            let hc = c.adjoint().matmul(&m.hamiltonian(t)).matmul(&c);
            let e = m.energy();
            assert!(frobenius_distance(&hc, &CMatrix::real_diag(&[e, -e])).unwrap() < 1e-12);
        }
    }

    #[test]
    fn transport_frame_rotated_dissipator_agrees_with_c_frame() {
        // A(t) = C(t) C(0)^+, so A^+ Gamma A = C(0) Gamma^C(t) C(0)^+.
        let m = laser();
        let frame = build_frame(&m.path().unwrap(), 4_000).unwrap();
        let c0 = m.c_matrix(0.0);
        for k in [0, 1_000, 2_500, 4_000] {
            let t = frame.times()[k];
            let a = frame.unitary(k);
            let rot = a.adjoint().matmul(&sigma_minus()).matmul(a);
            let via_c = c0.matmul(&m.emission_c_operator(t)).matmul(&c0.adjoint());
            assert!(frobenius_distance(&rot, &via_c).unwrap() < 1e-6);
        }
    }

    #[test]
    fn emission_dissipator_basics() {
        assert!(emission_dissipator(0.0).unwrap().is_empty());
        assert!(matches!(emission_dissipator(-0.1), Err(Error::NegativeRate(_))));
        let d = emission_dissipator(0.3).unwrap();
        let (w, g) = &d.ops_at(0.0)[0];
        let gdg = g.adjoint().matmul(g).scale_real(*w);
        assert!(frobenius_distance(&gdg, &CMatrix::real_diag(&[0.3, 0.0])).unwrap() < 1e-15);
    }

    #[test]
    fn dephasing_quadrature_moments() {
        let lambda0 = 0.005;
        for (d, f, g) in [
            (CollisionDensity::Constant { lambda0 }, lambda0, 0.0),
            (CollisionDensity::ShiftedSine { lambda0 }, lambda0, 0.5 * lambda0),
        ] {
            let set = dephasing_dissipators(&d, 64).unwrap();
            let ops = set.ops_at(0.0);
            let fq: f64 = ops.iter().map(|(w, o)| w * (1.0 - o[(1, 1)].re)).sum();
            let gq: f64 = ops.iter().map(|(w, o)| w * o[(1, 1)].im).sum();
            assert!((fq - f).abs() < 1e-15, "{fq}");
            assert!((gq - g).abs() < 1e-15, "{gq}");
            let (fm, gm) = d.moments();
            assert!((fm - f).abs() < 1e-12 && (gm - g).abs() < 1e-12);
        }
        let sym = CollisionDensity::NarrowGaussian { lambda0: 1.0, center: 0.0, width: 0.3 };
        assert!(sym.moments().1.abs() < 1e-14);
    }

    #[test]
    fn dephasing_rejects_bad_inputs() {
        let d = CollisionDensity::Tabulated { alphas: vec![-1.0, 0.0, 1.0], values: vec![0.1, -0.2, 0.1] };
        assert!(matches!(dephasing_dissipators(&d, 64), Err(Error::NegativeDensity { .. })));
        let c = CollisionDensity::Constant { lambda0: 1.0 };
        assert!(matches!(dephasing_dissipators(&c, 4), Err(Error::InvalidArgument(_))));
        // too narrow for the grid: zeroth moment badly missed
        let narrow = CollisionDensity::NarrowGaussian { lambda0: 1.0, center: 0.3, width: 0.01 };
        assert!(matches!(dephasing_dissipators(&narrow, 64), Err(Error::QuadratureMismatch { .. })));
    }

    #[test]
    fn reduced_dephasing_matches_quadrature_generator() {
        let m = laser().with_dephasing(CollisionDensity::ShiftedSine { lambda0: 0.2 }, 64).unwrap();
        let diss = m.dissipators().unwrap();
        let red = m.reduced_dephasing().unwrap();
        let rho = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.6, 0.0), C64::new(0.1, -0.3)],
            [C64::new(0.1, 0.3), C64::new(0.4, 0.0)],
        ]))
        .unwrap();
        let a = diss.apply(rho.matrix(), 0.0);
        let b = red.apply(rho.matrix(), 0.0);
        assert!(frobenius_distance(&a, &b).unwrap() < 1e-14);
    }

    #[test]
    fn inversion_state_bounds() {
        assert!(inversion_state(0.6).is_err());
        let r = inversion_state(0.5).unwrap();
        assert_eq!(r.inversion(), 1.0);
    }

    fn spin(theta_b: f64) -> SpinModel {
        SpinModel::new(1.0, theta_b, 200.0).unwrap()
    }

    #[test]
    fn spin_axis_and_spectrum() {
        let m = spin(0.7);
        for k in 0..16 {
            let t = m.period * k as f64 / 15.0;
            let n = m.axis(t);
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
            let u = m.eigenbasis(t);
            let hd = u.adjoint().matmul(&m.hamiltonian(t)).matmul(&u);
            assert!(frobenius_distance(&hd, &CMatrix::real_diag(&[1.0, -1.0])).unwrap() < 1e-12);
        }
        let north = spin(0.0);
        assert!(frobenius_distance(&north.hamiltonian(3.0), &pauli_z()).unwrap() < 1e-15);
    }

    #[test]
    fn spin_dissipation_conserves_energy_and_populations() {
        let m = spin(1.1).with_dephasing(CollisionDensity::ShiftedSine { lambda0: 0.3 }).unwrap();
        let diss = m.dissipators().unwrap();
        let rho = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.7, 0.0), C64::new(0.2, 0.1)],
            [C64::new(0.2, -0.1), C64::new(0.3, 0.0)],
        ]))
        .unwrap();
        for t in [0.0, 41.0, 133.0] {
            let d = diss.apply(rho.matrix(), t);
            assert!(m.hamiltonian(t).matmul(&d).trace().norm() < 1e-10);
            let u = m.eigenbasis(t);
            let local = u.adjoint().matmul(&d).matmul(&u);
            assert!(local[(0, 0)].norm() < 1e-14 && local[(1, 1)].norm() < 1e-14);
        }
        let (h, ops) = spin_model_generator(&spin(0.0).with_dephasing(CollisionDensity::Constant { lambda0: 1.0 }).unwrap(), 0.0).unwrap();
        assert_eq!(h, pauli_z());
        for (_, g) in ops {
            assert!(g[(0, 1)].norm() < 1e-15 && g[(1, 0)].norm() < 1e-15);
        }
    }

    #[test]
    fn spin_dephasing_routes_agree() {
        let m = spin(0.9).with_dephasing(CollisionDensity::ShiftedSine { lambda0: 0.1 }).unwrap();
        let q = m.dissipators().unwrap();
        let r = m.leg_reduced(false).unwrap().unwrap();
        let rho = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.45, 0.0), C64::new(-0.2, 0.15)],
            [C64::new(-0.2, -0.15), C64::new(0.55, 0.0)],
        ]))
        .unwrap();
        for t in [0.0, 60.0, 170.0] {
            let d = frobenius_distance(&q.apply(rho.matrix(), t), &r.apply(rho.matrix(), t)).unwrap();
            assert!(d < 1e-14);
        }
    }

    #[test]
    fn spin_rotated_population_constant() {
        // rho^A_11 stays constant: the generator has no population terms in the rotated frame.
        let m = spin(0.8).with_dephasing(CollisionDensity::Constant { lambda0: 0.05 }).unwrap();
        let frame = build_frame(&m.path().unwrap(), 2_000).unwrap();
        let diss = m.dissipators().unwrap();
        let rho = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.8, 0.0), C64::new(0.1, 0.2)],
            [C64::new(0.1, -0.2), C64::new(0.2, 0.0)],
        ]))
        .unwrap();
        let v0 = frame.initial_basis().clone();
        for k in [0, 700, 1_500] {
            let t = frame.times()[k];
            let r = crate::lindblad::rotated_rhs_adiabatic(&frame, &diss, &rho, t).unwrap();
            let local = v0.adjoint().matmul(&r).matmul(&v0);
            assert!(local[(0, 0)].norm() < 1e-6 && local[(1, 1)].norm() < 1e-6);
        }
    }

    #[test]
    fn static_field_echo_is_identity() {
        let m = spin(0.0);
        let rho = DensityMatrix::new(CMatrix::from_rows(&[
            [C64::new(0.6, 0.0), C64::new(0.3, -0.1)],
            [C64::new(0.3, 0.1), C64::new(0.4, 0.0)],
        ]))
        .unwrap();
        let out = echo_protocol(&m, &rho, 20_000).unwrap();
        // RK4 shrinks a rotating coherence by about N (2Eh)^6 / 144 per leg
        assert!(frobenius_distance(out.matrix(), rho.matrix()).unwrap() < 1e-7);
    }

    #[test]
    fn echo_keeps_populations_and_doubles_geometric_phase() {
        let theta_b = PI / 4.0;
        let m = SpinModel::new(1.0, theta_b, 1200.0).unwrap().with_schedule(Schedule::Smooth);
        let psi = {
            let u = m.eigenbasis(0.0);
            let a = u.column(0);
            let b = u.column(1);
            vec![(a[0] + b[0]) * 0.5f64.sqrt(), (a[1] + b[1]) * 0.5f64.sqrt()]
        };
        let rho = DensityMatrix::pure(&psi).unwrap();
        let out = echo_protocol(&m, &rho, 120_000).unwrap();
        let ratio = m.coherence(&out) / m.coherence(&rho);
        let phi = holonomy(&build_frame(&m.path().unwrap(), 10_000).unwrap()).unwrap().geometric[1];
        let expected = crate::transport::wrap_phase(4.0 * phi);
        assert!((ratio.norm() - 1.0).abs() < 1e-4);
        assert!(crate::transport::phase_distance(ratio.arg(), expected) < 1e-4);
        assert!((m.excited_population(&out) - m.excited_population(&rho)).abs() < 1e-4);
        let cap = solid_angle(&(0..4096).map(|k| m.axis(m.period * k as f64 / 4096.0)).collect::<Vec<_>>()).unwrap();
        assert!((cap.abs() - 2.0 * PI * (1.0 - theta_b.cos())).abs() < 1e-5);
        assert!((phi.abs() - PI * (1.0 - theta_b.cos())).abs() < 1e-5);
    }

    #[test]
    fn rotor_holonomy_matches_closed_form() {
        let rotor = DegenerateRotor::new(7, 40.0).unwrap();
        let path = rotor.path().unwrap();
        let levels = nonabelian_holonomy(&path, 8_000, DEFAULT_CLUSTER_TOL).unwrap();
        let upper = levels.iter().find(|l| l.block.dim() == 2).unwrap();
        assert!(upper.block.unitarity_residual() < 1e-8);
        let e0 = eig_hermitian(&path.at(0.0), 1e-14).unwrap();
        let basis = [e0.vector(1), e0.vector(2)];
        // exp(2 pi i P J P) restricted to the degenerate subspace
        let mut pjp = CMatrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                pjp[(i, j)] = inner(&basis[i], &rotor.generator.apply(&basis[j]));
            }
        }
        let e = eig_hermitian(&pjp, 1e-14).unwrap();
        let phases: Vec<C64> = e.values.iter().map(|&v| (I * 2.0 * PI * v).exp()).collect();
        let expected = e.vectors.matmul(&CMatrix::diag(&phases)).matmul(&e.vectors.adjoint());
        let d = frobenius_distance(&upper.block, &expected).unwrap();
        assert!(d < 1e-4, "{d}");
        assert!(expected[(0, 1)].norm() > 1e-2, "test path should mix the degenerate pair");
    }
}
