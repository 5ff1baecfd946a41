//! Closed-form results for the two-level models, used as oracles.
//!
//! Nothing here calls into the generators or the integrator. Units: hbar = 1,
//! so `hbar Delta / 2E` reads `delta / 2E` and `2ET / hbar` reads `2ET`.
//!
//! In the `C(t)` frame the state is written `[[a, b], [b*, 1 - a]]` and the
//! atomic inversion follows from
//!
//! ```text
//! w = (2a - 1) cos(theta) - 2 sin(theta) Re(b e^{i phi cos(theta)})
//! ```
//!
//! with `cos(theta) = delta / 2E` and `sin(theta) = omega / E`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::models::CollisionDensity;

/// Dimensionless and rate constants of the reduced two-level problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedConstants {
    /// `(2 omega^2 + delta^2) / (4 omega^2 + delta^2)`
    pub k: f64,
    /// `(6 omega^2 + delta^2) / (8 omega^2 + 2 delta^2)`
    pub g_damp: f64,
    pub f: f64,
    pub g: f64,
    pub theta: f64,
    pub energy: f64,
}

impl ReducedConstants {
    pub fn new(delta: f64, omega: f64, f: f64, g: f64) -> Result<Self> {
        let energy = (omega * omega + 0.25 * delta * delta).sqrt();
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::InvalidArgument("E must be positive".into()));
        }
        if !(f >= 0.0 && f.is_finite() && g.is_finite()) {
            return Err(Error::NegativeRate(f));
        }
        let (o2, d2) = (omega * omega, delta * delta);
        Ok(ReducedConstants {
            k: (2.0 * o2 + d2) / (4.0 * o2 + d2),
            g_damp: (6.0 * o2 + d2) / (8.0 * o2 + 2.0 * d2),
            f,
            g,
            theta: omega.atan2(0.5 * delta),
            energy,
        })
    }
}

/// Parameters of the driven atom at the end of one cyclic loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionParams {
    pub delta: f64,
    pub omega: f64,
    /// Emission rate `lambda`, or the dephasing constants via `f`/`g`.
    pub lambda: f64,
    pub f: f64,
    pub g: f64,
    /// Initial state `1/2 + p sigma_3`.
    pub p: f64,
}

impl InversionParams {
    pub fn emission(delta: f64, omega: f64, lambda: f64, p: f64) -> Self {
        InversionParams { delta, omega, lambda, f: 0.0, g: 0.0, p }
    }

    pub fn dephasing(delta: f64, omega: f64, f: f64, g: f64, p: f64) -> Self {
        InversionParams { delta, omega, lambda: 0.0, f, g, p }
    }

    pub fn energy(&self) -> f64 {
        (self.omega * self.omega + 0.25 * self.delta * self.delta).sqrt()
    }

    pub fn cos_theta(&self) -> f64 {
        0.5 * self.delta / self.energy()
    }

    pub fn sin_theta(&self) -> f64 {
        self.omega / self.energy()
    }

    pub fn theta(&self) -> f64 {
        self.omega.atan2(0.5 * self.delta)
    }

    /// `(a(0), b(0))` of `1/2 + p sigma_3` seen from `C(0)`.
    pub fn initial_ab(&self) -> (f64, C64) {
        (0.5 + self.p * self.cos_theta(), C64::new(-self.p * self.sin_theta(), 0.0))
    }
}

fn half_angles(theta: f64) -> (f64, f64) {
    ((0.5 * theta).sin(), (0.5 * theta).cos())
}

/// Adiabatic, weak-damping solution in the `C` frame under spontaneous emission.
pub fn emission_ab(t: f64, theta: f64, lambda: f64, energy: f64, a0: f64, b0: C64) -> (f64, C64) {
    let (s, c) = half_angles(theta);
    let (s2, c2) = (s * s, c * c);
    let k = s2 * s2 + c2 * c2;
    let fixed = s2 * s2 / k;
    let a = (a0 - fixed) * (-lambda * t * k).exp() + fixed;
    let b = b0 * C64::from_polar((-lambda * t * (s2 * c2 + 0.5)).exp(), -2.0 * energy * t);
    (a, b)
}

/// Adiabatic, weak-damping solution in the `C` frame under collisional dephasing.
pub fn dephasing_ab(t: f64, theta: f64, f: f64, g: f64, energy: f64, a0: f64, b0: C64) -> (f64, C64) {
    let (s, c) = half_angles(theta);
    let (s2, c2) = (s * s, c * c);
    let a = (a0 - 0.5) * (-4.0 * f * t * c2 * s2).exp() + 0.5;
    let rotation = -2.0 * energy + g * (s2 * s2 - c2 * c2);
    let b = b0 * C64::from_polar((-(s2 * s2 + c2 * c2) * f * t).exp(), rotation * t);
    (a, b)
}

/// Atomic inversion from the `C`-frame entries at loop angle `phi`.
pub fn inversion_from_c(a: f64, b: C64, theta: f64, phi: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    (2.0 * a - 1.0) * ct - 2.0 * st * (b * C64::from_polar(1.0, phi * ct)).re
}

/// Inversion after one loop with spontaneous emission, grouped so that `p = 0` is regular:
/// `cos^2(theta) [(2p + 1/K) e^{-K lambda T} - 1/K] + 2p sin^2(theta) cos(2ET - 2 pi cos(theta)) e^{-G lambda T}`.
pub fn emission_inversion(t_end: f64, params: &InversionParams) -> Result<f64> {
    let c = ReducedConstants::new(params.delta, params.omega, 0.0, 0.0)?;
    let ct = params.cos_theta();
    let st2 = params.sin_theta().powi(2);
    let lt = params.lambda * t_end;
    let population = ct * ct * ((2.0 * params.p + 1.0 / c.k) * (-c.k * lt).exp() - 1.0 / c.k);
    let coherence = 2.0 * params.p
        * st2
        * (2.0 * c.energy * t_end - 2.0 * PI * ct).cos()
        * (-c.g_damp * lt).exp();
    Ok(population + coherence)
}

/// The same inversion written with `(2Kp + 1) / 2Kp`; singular at `p = 0`.
pub fn emission_inversion_factored(t_end: f64, params: &InversionParams) -> Result<f64> {
    if params.p == 0.0 {
        return Err(Error::ZeroP);
    }
    let c = ReducedConstants::new(params.delta, params.omega, 0.0, 0.0)?;
    let (p, lt) = (params.p, params.lambda * t_end);
    let r = 0.5 * params.delta / c.energy;
    let q = params.omega / c.energy;
    let kp2 = 2.0 * c.k * p;
    Ok(2.0
        * p
        * (r * r * ((kp2 + 1.0) / kp2 * (-c.k * lt).exp() - 1.0 / kp2)
            + (2.0 * c.energy * t_end - 2.0 * PI * r).cos() * (-c.g_damp * lt).exp() * q * q))
}

/// Inversion after one loop with collisional dephasing:
/// `2p [cos^2(theta) e^{-sin^2(theta) f T} + sin^2(theta) e^{-K f T} cos((2E + g cos(theta)) T - 2 pi cos(theta))]`.
pub fn dephasing_inversion(t_end: f64, params: &InversionParams) -> Result<f64> {
    let c = ReducedConstants::new(params.delta, params.omega, params.f, params.g)?;
    let ct = params.cos_theta();
    let st2 = params.sin_theta().powi(2);
    let ft = params.f * t_end;
    let phase = (2.0 * c.energy + params.g * ct) * t_end - 2.0 * PI * ct;
    Ok(2.0 * params.p * (ct * ct * (-st2 * ft).exp() + st2 * (-c.k * ft).exp() * phase.cos()))
}

/// `rho_12(T)` for the spin after one loop in the lab frame.
pub fn spin_coherence(t_end: f64, energy: f64, f: f64, g: f64, phi: f64, rho12_0: C64) -> C64 {
    rho12_0
        * C64::from_polar(1.0, -(2.0 * energy * t_end + g * t_end - 2.0 * phi))
        * (-f * t_end).exp()
}

/// `rho_12(2T)` after forward loop, flip, backward loop, flip.
pub fn spin_echo_coherence(t_end: f64, f: f64, phi: f64, rho12_0: C64) -> C64 {
    rho12_0 * C64::from_polar((-2.0 * t_end * f).exp(), 4.0 * phi)
}

/// Shift of the oscillation frequency of `w(T)` caused by asymmetric dephasing.
pub fn frequency_shift(delta: f64, omega: f64, g: f64) -> f64 {
    let e = (omega * omega + 0.25 * delta * delta).sqrt();
    g * 0.5 * delta / e
}

/// Difference of the loop's geometric phases, `2 pi delta / 2E`.
pub fn geometric_offset(delta: f64, omega: f64) -> f64 {
    let e = (omega * omega + 0.25 * delta * delta).sqrt();
    2.0 * PI * 0.5 * delta / e
}

/// `(f, g) = (int lambda (1 - cos alpha), int lambda sin alpha)`.
pub fn reduced_fg(d: &CollisionDensity) -> (f64, f64) {
    match d {
        CollisionDensity::Constant { lambda0 } => (*lambda0, 0.0),
        CollisionDensity::ShiftedSine { lambda0 } => (*lambda0, 0.5 * lambda0),
        CollisionDensity::NarrowGaussian { lambda0, center, width } => {
            let damp = (-0.5 * width * width).exp();
            (lambda0 * (1.0 - center.cos() * damp), lambda0 * center.sin() * damp)
        }
        CollisionDensity::Tabulated { alphas, .. } => {
            let mut f = 0.0;
            let mut g = 0.0;
            let tol = 1e-10 / (alphas.len() - 1) as f64;
            for w in alphas.windows(2) {
                f += adaptive_simpson(&|a| d.at(a) * (1.0 - a.cos()), w[0], w[1], tol);
                g += adaptive_simpson(&|a| d.at(a) * a.sin(), w[0], w[1], tol);
            }
            (f, g)
        }
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(rng: &mut impl Rng) -> InversionParams {
        InversionParams {
            delta: rng.gen_range(-2.0..2.0),
            omega: rng.gen_range(0.2..2.0),
            lambda: rng.gen_range(0.0..0.02),
            f: rng.gen_range(0.0..0.02),
            g: rng.gen_range(-0.02..0.02),
            p: rng.gen_range(-0.5..0.5),
        }
    }

    #[test]
    fn constants_match_half_angles() {
        let c = ReducedConstants::new(0.5, 1.0, 0.0, 0.0).unwrap();
        let (s, h) = half_angles(c.theta);
        assert!((c.k - (s.powi(4) + h.powi(4))).abs() < 1e-15);
        assert!((c.g_damp - (s * s * h * h + 0.5)).abs() < 1e-15);
        let resonant = ReducedConstants::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!((resonant.k, resonant.g_damp), (0.5, 0.75));
        assert_eq!(geometric_offset(0.0, 1.0), 0.0);
    }

    #[test]
    fn solutions_start_at_initial_values() {
        let b0 = C64::new(0.1, -0.2);
        assert_eq!(emission_ab(0.0, 1.1, 0.3, 1.0, 0.7, b0), (0.7, b0));
        assert_eq!(dephasing_ab(0.0, 1.1, 0.3, 0.1, 1.0, 0.7, b0), (0.7, b0));
    }

    #[test]
    fn undamped_limits() {
        let b0 = C64::from_polar(0.3, 0.4);
        let (a, b) = emission_ab(12.0, 0.9, 0.0, 1.3, 0.6, b0);
        assert!((a - 0.6).abs() < 1e-15);
        assert!((b.norm() - 0.3).abs() < 1e-15);
        assert!(crate::transport::phase_distance(b.arg(), 0.4 - 2.0 * 1.3 * 12.0) < 1e-12);
        let (a, b) = dephasing_ab(12.0, 0.9, 0.0, 0.0, 1.3, 0.6, b0);
        assert!((a - 0.6).abs() < 1e-15 && (b.norm() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn long_time_fixed_points() {
        let theta = 1.2f64;
        let (s, c) = half_angles(theta);
        let (a, b) = emission_ab(1e5, theta, 1.0, 1.0, 0.9, C64::new(0.2, 0.0));
        assert!((a - s.powi(4) / (s.powi(4) + c.powi(4))).abs() < 1e-12);
        assert!(b.norm() < 1e-12);
        let (a, b) = dephasing_ab(1e5, theta, 1.0, 0.3, 1.0, 0.9, C64::new(0.2, 0.0));
        assert!((a - 0.5).abs() < 1e-12 && b.norm() < 1e-12);
    }

    #[test]
    fn solutions_satisfy_their_rate_equations() {
        let (theta, lambda, e, f, g) = (0.8f64, 0.07, 1.1, 0.05, 0.02);
        let (s, c) = half_angles(theta);
        let (s2, c2) = (s * s, c * c);
        let (a0, b0) = (0.8, C64::new(0.1, 0.25));
        let h = 1e-4;
        let t = 3.7;
        let d = |fun: &dyn Fn(f64) -> (f64, C64)| {
            let (ap, bp) = fun(t + h);
            let (am, bm) = fun(t - h);
            ((ap - am) / (2.0 * h), (bp - bm) / (2.0 * h), fun(t))
        };
        let (da, db, (a, b)) = d(&|x| emission_ab(x, theta, lambda, e, a0, b0));
        assert!((da - lambda * (s2 * s2 - a * (s2 * s2 + c2 * c2))).abs() < 1e-8);
        let rate = C64::new(-lambda * (s2 * c2 + 0.5), -2.0 * e);
        assert!((db - rate * b).norm() < 1e-8);
        let (da, db, (a, b)) = d(&|x| dephasing_ab(x, theta, f, g, e, a0, b0));
        assert!((da - (-4.0 * f * a * c2 * s2 + 2.0 * f * c2 * s2)).abs() < 1e-8);
        let rate = C64::new(-f * (s2 * s2 + c2 * c2), -2.0 * e + g * (s2 * s2 - c2 * c2));
        assert!((db - rate * b).norm() < 1e-8);
    }

    #[test]
    fn emission_inversion_equals_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let p = params(&mut rng);
            let t_end = rng.gen_range(100.0..1000.0);
            let (a0, b0) = p.initial_ab();
            let (a, b) = emission_ab(t_end, p.theta(), p.lambda, p.energy(), a0, b0);
            let composed = inversion_from_c(a, b, p.theta(), 2.0 * PI);
            let closed = emission_inversion(t_end, &p).unwrap();
            assert!((composed - closed).abs() < 1e-12, "{composed} vs {closed}");
            let factored = emission_inversion_factored(t_end, &p).unwrap();
            assert!((factored - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn factored_form_is_singular_at_zero_p() {
        let p = InversionParams::emission(0.5, 1.0, 0.005, 0.0);
        assert_eq!(emission_inversion_factored(500.0, &p), Err(Error::ZeroP));
        // regrouped form stays finite: -cos^2 (1 - e^{-K lambda T}) / K
        let w = emission_inversion(500.0, &p).unwrap();
        let c = ReducedConstants::new(0.5, 1.0, 0.0, 0.0).unwrap();
        let ct = p.cos_theta();
        assert!((w + ct * ct * (1.0 - (-c.k * 2.5f64).exp()) / c.k).abs() < 1e-15);
    }

    #[test]
    fn undamped_emission_inversion() {
        let p = InversionParams::emission(0.5, 1.0, 0.0, 0.5);
        let t = 500.0;
        let e = p.energy();
        let r = 0.5 * p.delta / e;
        let q = p.omega / e;
        let expected = 2.0 * p.p * (r * r + (2.0 * e * t - 2.0 * PI * r).cos() * q * q);
        assert!((emission_inversion(t, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn dephasing_inversion_equals_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let p = params(&mut rng);
            let t_end = rng.gen_range(100.0..1000.0);
            let (a0, b0) = p.initial_ab();
            let (a, b) = dephasing_ab(t_end, p.theta(), p.f, p.g, p.energy(), a0, b0);
            let composed = inversion_from_c(a, b, p.theta(), 2.0 * PI);
            let closed = dephasing_inversion(t_end, &p).unwrap();
            assert!((composed - closed).abs() < 1e-12, "{composed} vs {closed}");
        }
    }

    #[test]
    fn symmetric_dephasing_has_no_frequency_shift() {
        // with g = 0 the cosine argument is 2ET - 2 pi cos(theta) exactly
        let p = InversionParams::dephasing(0.5, 1.0, 0.0, 0.0, 0.5);
        let e = p.energy();
        let ct = p.cos_theta();
        for t in [100.0, 250.0, 777.0] {
            let expected = 2.0 * p.p * (ct * ct + (1.0 - ct * ct) * (2.0 * e * t - 2.0 * PI * ct).cos());
            assert!((dephasing_inversion(t, &p).unwrap() - expected).abs() < 1e-12);
        }
        assert_eq!(frequency_shift(0.5, 1.0, 0.0), 0.0);
    }

    #[test]
    fn spin_coherence_forms() {
        let r0 = C64::new(0.3, -0.2);
        let z = spin_coherence(5.0, 1.0, 0.0, 0.0, 0.0, r0);
        assert!((z - r0 * C64::from_polar(1.0, -10.0)).norm() < 1e-15);
        // two legs: forward, swap + conjugate, forward with reversed phase, swap + conjugate
        let (t, e, f, g, phi) = (40.0, 1.3, 0.01, 0.004, 0.7);
        let after_forward = spin_coherence(t, e, f, g, phi, r0);
        let after_backward = spin_coherence(t, e, f, g, -phi, after_forward.conj());
        let echoed = after_backward.conj();
        assert!((echoed - spin_echo_coherence(t, f, phi, r0)).norm() < 1e-13);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let m = spin_coherence(10.0 * k as f64, e, f, g, phi, r0).norm();
            assert!(m < last);
            last = m;
        }
    }

    #[test]
    fn continuity_at_zero_damping() {
        let a = InversionParams::emission(0.5, 1.0, 1e-12, 0.3);
        let b = InversionParams::emission(0.5, 1.0, 0.0, 0.3);
        assert!((emission_inversion(500.0, &a).unwrap() - emission_inversion(500.0, &b).unwrap()).abs() < 1e-9);
        let a = InversionParams::dephasing(0.5, 1.0, 1e-12, 1e-12, 0.3);
        let b = InversionParams::dephasing(0.5, 1.0, 0.0, 0.0, 0.3);
        assert!((dephasing_inversion(500.0, &a).unwrap() - dephasing_inversion(500.0, &b).unwrap()).abs() < 1e-9);
        let r0 = C64::new(0.2, 0.1);
        let d = spin_coherence(50.0, 1.0, 1e-12, 0.0, 0.3, r0) - spin_coherence(50.0, 1.0, 0.0, 0.0, 0.3, r0);
        assert!(d.norm() < 1e-9);
    }

    #[test]
    fn reduced_fg_closed_forms() {
        let l = 0.005;
        assert_eq!(reduced_fg(&CollisionDensity::Constant { lambda0: l }), (l, 0.0));
        assert_eq!(reduced_fg(&CollisionDensity::ShiftedSine { lambda0: l }), (l, 0.5 * l));
        // narrow limit approaches a single kick of strength lambda0 at alpha0
        let (f, g) = reduced_fg(&CollisionDensity::NarrowGaussian { lambda0: 2.0, center: 0.9, width: 1e-4 });
        assert!((f - 2.0 * (1.0 - 0.9f64.cos())).abs() < 1e-8);
        assert!((g - 2.0 * 0.9f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn reduced_fg_numeric_matches_closed_forms() {
        for d in [
            CollisionDensity::Constant { lambda0: 0.3 },
            CollisionDensity::ShiftedSine { lambda0: 0.3 },
            CollisionDensity::NarrowGaussian { lambda0: 0.3, center: -0.4, width: 0.2 },
        ] {
            let (f, g) = reduced_fg(&d);
            let nf = adaptive_simpson(&|a| d.at(a) * (1.0 - a.cos()), -PI, PI, 1e-12);
            let ng = adaptive_simpson(&|a| d.at(a) * a.sin(), -PI, PI, 1e-12);
            assert!((f - nf).abs() < 1e-10 && (g - ng).abs() < 1e-10, "{d:?}");
        }
        // a tabulated triangle: lambda = 1 - |alpha| on [-1, 1]
        let tri = CollisionDensity::Tabulated { alphas: vec![-1.0, 0.0, 1.0], values: vec![0.0, 1.0, 0.0] };
        let (f, g) = reduced_fg(&tri);
        // int (1 - |a|)(1 - cos a) over [-1, 1] = 1 - 2(1 - cos 1)
        assert!((f - (1.0 - 2.0 * (1.0 - 1f64.cos()))).abs() < 1e-10);
        assert!(g.abs() < 1e-12);
    }
}
