//! WebAssembly bindings for the static page in `www/`.
//!
//! Every operation returns a [`Curve`]: sampled `x`, the numeric `y`, and a
//! closed-form `reference` sampled on the same `x` where one exists.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use wasm_bindgen::prelude::*;

use geophase_core::experiments::{laser_analytic, laser_direct, spin_coherent_state};
use geophase_core::models::{inversion_state, DephasingRoute, LaserModel, Schedule, SpinModel};
use geophase_core::transport::{build_frame, holonomy, wrap_phase};

#[wasm_bindgen]
#[derive(Clone, Debug, Default)]
pub struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
    reference: Vec<f64>,
    extra: Vec<f64>,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }

    /// Operation-specific second numeric series (may be empty).
    #[wasm_bindgen(getter)]
    pub fn extra(&self) -> Vec<f64> {
        self.extra.clone()
    }
}

fn js_err(e: geophase_core::error::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn berry(samples: usize, steps: usize) -> geophase_core::error::Result<Curve> {
    let mut c = Curve::default();
    for k in 1..=samples {
        let theta_b = PI * k as f64 / (samples + 1) as f64;
        let spin = SpinModel::new(1.0, theta_b, 100.0)?;
        let h = holonomy(&build_frame(&spin.path()?, steps)?)?;
        c.x.push(theta_b);
        c.y.push(h.geometric[1].abs());
        c.reference.push(wrap_phase(PI * (1.0 - theta_b.cos())).abs());
    }
    Ok(c)
}

/// `|phi|` of the excited band over cone angles in `(0, pi)` against the
/// half solid angle `pi (1 - cos theta_b)`, both wrapped to `[0, pi]`.
#[wasm_bindgen]
pub fn berry_phase_curve(samples: usize, steps: usize) -> Result<Curve, JsError> {
    berry(samples.max(2), steps.max(100)).map_err(js_err)
}

fn inversion(
    delta: f64,
    omega: f64,
    lambda: f64,
    period: f64,
    steps: usize,
    samples: usize,
) -> geophase_core::error::Result<Curve> {
    let p = 0.5;
    let model = LaserModel::new(delta, omega, period)?.with_emission(lambda)?;
    let stride = (steps / samples.max(1)).max(1);
    let traj = laser_direct(&model, &inversion_state(p)?, steps, DephasingRoute::Reduced, stride)?;
    let (_, w_final) = laser_analytic(&model, p)?;
    Ok(Curve {
        x: traj.times.clone(),
        y: traj.states.iter().map(|s| s.inversion()).collect(),
        reference: vec![w_final],
        extra: Vec::new(),
    })
}

/// Atomic inversion `w(t)` over one loop of the driven atom with spontaneous
/// emission; `reference` holds the closed-form `w(T)`.
#[wasm_bindgen]
pub fn inversion_curve(
    delta: f64,
    omega: f64,
    lambda: f64,
    period: f64,
    steps: usize,
    samples: usize,
) -> Result<Curve, JsError> {
    inversion(delta, omega, lambda, period, steps, samples).map_err(js_err)
}

fn echo(theta_b: f64, period: f64, steps: usize, energies: &[f64]) -> geophase_core::error::Result<Curve> {
    let mut c = Curve::default();
    for &e in energies {
        let spin = SpinModel::new(e, theta_b, period)?.with_schedule(Schedule::Smooth);
        let rho0 = spin_coherent_state(&spin)?;
        let c0 = spin.coherence(&rho0);
        let run = spin.echo(&rho0, steps)?;
        let phi = holonomy(&build_frame(&spin.path()?, steps)?)?.geometric[1];
        let ratio: C64 = spin.coherence(&run.final_state) / c0;
        let single: C64 = spin.coherence(run.forward.last()) / c0;
        c.x.push(e);
        c.y.push(ratio.arg());
        c.reference.push(wrap_phase(4.0 * phi));
        c.extra.push(single.arg());
    }
    Ok(c)
}

/// Final `arg(rho12(2T) / rho12(0))` of the echo sequence for each field
/// strength, against `4 phi`; `extra` is the same phase after one loop
/// without the echo, where the dynamic phase dominates.
#[wasm_bindgen]
pub fn echo_phase_curve(theta_b: f64, period: f64, steps: usize, energies: Vec<f64>) -> Result<Curve, JsError> {
    echo(theta_b, period, steps, &energies).map_err(js_err)
}
