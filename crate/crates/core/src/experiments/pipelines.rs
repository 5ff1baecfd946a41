use std::time::Instant;

use num_complex::Complex64 as C64;
use serde_json::json;

use super::{Check, ComparisonReport};
use crate::analytic::{
    dephasing_ab, dephasing_inversion, emission_ab, emission_inversion, reduced_fg, spin_echo_coherence,
    InversionParams, ReducedConstants,
};
use crate::error::{Error, Result};
use crate::lindblad::{
    from_frame, integrate_with, lindblad_raw, rotated_raw, to_frame, DensityMatrix, DissipatorSet,
    Generator, IntegrateOptions, ReducedDephasing, Trajectory,
};
use crate::matcore::{frobenius_distance, CMatrix};
use crate::models::{DephasingRoute, LaserDamping, LaserModel, SpinModel};
use crate::transport::{build_frame, holonomy, phase_distance, HamiltonianPath, TransportFrame};

/// State agreement between the two numeric pipelines.
pub const PIPELINE_STATE_TOL: f64 = 1e-4;
/// `|w_numeric - w_analytic|` in the adiabatic, weak-damping regime.
pub const INVERSION_TOL: f64 = 5e-3;
pub const ECHO_PHASE_TOL: f64 = 1e-4;
pub const ECHO_MODULUS_REL_TOL: f64 = 1e-3;

/// Original-frame generator of an optical model.
pub struct LaserGenerator {
    model: LaserModel,
    diss: DissipatorSet,
    reduced: Option<ReducedDephasing>,
}

impl LaserGenerator {
    /// `route` only matters for dephasing: quadrature channels or the exact `(f, g)` form.
    pub fn new(model: &LaserModel, route: DephasingRoute) -> Result<Self> {
        let reduced = match (&model.damping, route) {
            (LaserDamping::Dephasing { .. }, DephasingRoute::Reduced) => model.reduced_dephasing(),
            _ => None,
        };
        let diss = if reduced.is_some() { DissipatorSet::empty(2) } else { model.dissipators()? };
        Ok(LaserGenerator { model: model.clone(), diss, reduced })
    }
}

impl Generator for LaserGenerator {
    fn rhs(&self, t: f64, rho: &CMatrix) -> Result<CMatrix> {
        let mut out = lindblad_raw(&self.model.hamiltonian(t), &self.diss, rho, t);
        if let Some(r) = &self.reduced {
            out += &r.apply(rho, t);
        }
        Ok(out)
    }
}

/// Pipeline (i): direct integration over one period.
pub fn laser_direct(
    model: &LaserModel,
    rho0: &DensityMatrix,
    steps: usize,
    route: DephasingRoute,
    stride: usize,
) -> Result<Trajectory> {
    let gen = LaserGenerator::new(model, route)?;
    integrate_with(&gen, rho0, 0.0, model.period, steps, IntegrateOptions { stride })
}

/// Rotated-frame run: states along the frame plus the lab state at the end.
#[derive(Clone, Debug)]
pub struct RotatedRun {
    pub trajectory: Trajectory,
    pub final_state: DensityMatrix,
    pub frame: TransportFrame,
}

/// Pipeline (ii): integrate in the transported frame, then apply `A(T)`.
///
/// The frame gets `2 * steps` intervals so that every RK4 stage lands on a node.
pub fn rotated_run(
    path: &HamiltonianPath,
    diss: &DissipatorSet,
    reduced: Option<&ReducedDephasing>,
    rho0: &DensityMatrix,
    steps: usize,
    gauge_terms: bool,
    stride: usize,
) -> Result<RotatedRun> {
    let frame = build_frame(path, 2 * steps)?;
    rotated_run_on(frame, diss, reduced, rho0, steps, gauge_terms, stride)
}

pub(crate) fn rotated_run_on(
    frame: TransportFrame,
    diss: &DissipatorSet,
    reduced: Option<&ReducedDephasing>,
    rho0: &DensityMatrix,
    steps: usize,
    gauge_terms: bool,
    stride: usize,
) -> Result<RotatedRun> {
    let gen = |t: f64, rho: &CMatrix| -> Result<CMatrix> {
        let mut out = rotated_raw(&frame, diss, rho, t, gauge_terms)?;
        if let Some(r) = reduced {
            let a = frame.sample(t)?.unitary;
            let lab = a.matmul(rho).matmul(&a.adjoint());
            out += &a.adjoint().matmul(&r.apply(&lab, t)).matmul(&a);
        }
        Ok(out)
    };
    let start = to_frame(rho0, frame.unitary(0))?;
    let trajectory =
        integrate_with(&gen, &start, frame.start(), frame.end(), steps, IntegrateOptions { stride })?;
    let final_state = from_frame(trajectory.last(), frame.unitary(frame.len() - 1))?;
    Ok(RotatedRun { trajectory, final_state, frame })
}

pub fn laser_rotated(
    model: &LaserModel,
    rho0: &DensityMatrix,
    steps: usize,
    gauge_terms: bool,
    stride: usize,
) -> Result<RotatedRun> {
    rotated_run(&model.path()?, &model.dissipators()?, None, rho0, steps, gauge_terms, stride)
}

/// Closed-form state and inversion after one loop, from `rho(0) = 1/2 + p sigma_3`.
pub fn laser_analytic(model: &LaserModel, p: f64) -> Result<(DensityMatrix, f64)> {
    let (delta, omega, t) = (model.delta, model.omega, model.period);
    let (params, ab) = match &model.damping {
        LaserDamping::None | LaserDamping::Emission { .. } => {
            let params = InversionParams::emission(delta, omega, model.rate_scale(), p);
            let (a0, b0) = params.initial_ab();
            (params, emission_ab(t, params.theta(), params.lambda, params.energy(), a0, b0))
        }
        LaserDamping::Dephasing { density, .. } => {
            let (f, g) = reduced_fg(density);
            let params = InversionParams::dephasing(delta, omega, f, g, p);
            let (a0, b0) = params.initial_ab();
            (params, dephasing_ab(t, params.theta(), f, g, params.energy(), a0, b0))
        }
    };
    let w = match &model.damping {
        LaserDamping::Dephasing { .. } => dephasing_inversion(t, &params)?,
        _ => emission_inversion(t, &params)?,
    };
    let (a, b) = ab;
    let rho_c = CMatrix::from_rows(&[[C64::new(a, 0.0), b], [b.conj(), C64::new(1.0 - a, 0.0)]]);
    let c = model.c_matrix(t);
    let rho = DensityMatrix::new(c.matmul(&rho_c).matmul(&c.adjoint()).hermitian_part())?;
    Ok((rho, w))
}

/// `(population, coherence)` decay factors of the closed form after one loop.
pub fn damping_factors(model: &LaserModel) -> Result<(f64, f64)> {
    let (delta, omega, t) = (model.delta, model.omega, model.period);
    Ok(match &model.damping {
        LaserDamping::None => (1.0, 1.0),
        LaserDamping::Emission { .. } => {
            let c = ReducedConstants::new(delta, omega, 0.0, 0.0)?;
            let lt = model.rate_scale() * t;
            ((-c.k * lt).exp(), (-c.g_damp * lt).exp())
        }
        LaserDamping::Dephasing { density, .. } => {
            let (f, g) = reduced_fg(density);
            let c = ReducedConstants::new(delta, omega, f, g)?;
            ((-c.theta.sin().powi(2) * f * t).exp(), (-c.k * f * t).exp())
        }
    })
}

/// Merges integrator diagnostics into `diag.*` metrics (max drift, min eigenvalue).
pub fn record_diagnostics(report: &mut ComparisonReport, trajectories: &[&Trajectory]) {
    for t in trajectories {
        let merge = |r: &mut ComparisonReport, k: &str, v: f64, take_max: bool| {
            let e = r.metrics.entry(k.to_string()).or_insert(v);
            *e = if take_max { e.max(v) } else { e.min(v) };
        };
        merge(report, "diag.trace_drift_per_1e4", t.trace_drift_per(10_000), true);
        merge(report, "diag.hermiticity_residual", t.max_hermiticity_residual, true);
        merge(report, "diag.min_eigenvalue", t.min_eigenvalue_seen, false);
        *report.metrics.entry("diag.trajectories".into()).or_insert(0.0) += 1.0;
        *report.metrics.entry("diag.steps".into()).or_insert(0.0) += t.steps as f64;
    }
}

fn same_grid(a: &Trajectory, b: &Trajectory) -> Result<()> {
    let (ta, tb) = (a.times.last().copied(), b.times.last().copied());
    if a.steps != b.steps || ta != tb || a.times.first() != b.times.first() {
        return Err(Error::InvalidArgument(format!(
            "time grids differ: {} steps to {ta:?} vs {} steps to {tb:?}",
            a.steps, b.steps
        )));
    }
    Ok(())
}

/// Direct vs rotated-frame vs closed form for one loop of an optical model.
pub fn compare_pipelines(model: &LaserModel, p: f64, steps: usize) -> Result<ComparisonReport> {
    model.validate()?;
    let rho0 = crate::models::inversion_state(p)?;
    let mut report = ComparisonReport::new(
        "compare_pipelines",
        json!({ "model": model, "p": p, "steps": steps }),
    );

    let clock = Instant::now();
    let direct = laser_direct(model, &rho0, steps, DephasingRoute::Quadrature { nodes: 0 }, steps)?;
    report.metric("elapsed_direct_s", clock.elapsed().as_secs_f64());
    let rotated = laser_rotated(model, &rho0, steps, true, steps)?;
    same_grid(&direct, &rotated.trajectory)?;
    let (analytic, w_formula) = laser_analytic(model, p)?;

    let (rd, rr) = (direct.last(), &rotated.final_state);
    let w_direct = rd.inversion();
    report.metric("w_direct", w_direct);
    report.metric("w_rotated", rr.inversion());
    report.metric("w_analytic", w_formula);
    report.metric("w_analytic_state", analytic.inversion());
    report.metric("dw_direct_analytic", (w_direct - w_formula).abs());
    report.metric("dw_rotated_analytic", (rr.inversion() - w_formula).abs());
    let d_dr = frobenius_distance(rd.matrix(), rr.matrix())?;
    report.metric("dist_direct_rotated", d_dr);
    report.metric("dist_direct_analytic", frobenius_distance(rd.matrix(), analytic.matrix())?);
    report.metric("dist_rotated_analytic", frobenius_distance(rr.matrix(), analytic.matrix())?);
    let (population, coherence) = damping_factors(model)?;
    report.metric("damping_population", population);
    report.metric("damping_coherence", coherence);
    record_diagnostics(&mut report, &[&direct, &rotated.trajectory]);

    report.check(Check::below("direct vs rotated state distance", d_dr, PIPELINE_STATE_TOL));
    report.check(Check::within("w direct vs closed form", w_direct, w_formula, INVERSION_TOL));
    Ok(report)
}

/// Echo state computed in the rotated frame, leg by leg.
pub fn rotated_echo(spin: &SpinModel, rho0: &DensityMatrix, steps: usize) -> Result<(DensityMatrix, [Trajectory; 2])> {
    let route_reduced = matches!(spin.route, DephasingRoute::Reduced) && spin.density.is_some();
    let leg = |reversed: bool, start: &DensityMatrix| -> Result<RotatedRun> {
        let path = if reversed { spin.path()?.reversed() } else { spin.path()? };
        let (diss, reduced) = if route_reduced {
            (DissipatorSet::empty(2), spin.leg_reduced(reversed)?)
        } else {
            (spin.leg_dissipators(reversed)?, None)
        };
        rotated_run(&path, &diss, reduced.as_ref(), start, steps, true, steps)
    };
    let x = spin.eigen_flip();
    let flip = |r: &DensityMatrix| DensityMatrix::new(x.matmul(r.matrix()).matmul(&x).hermitian_part());
    let forward = leg(false, rho0)?;
    let backward = leg(true, &flip(&forward.final_state)?)?;
    let out = flip(&backward.final_state)?;
    Ok((out, [forward.trajectory, backward.trajectory]))
}

/// Geometric phase of the `+E` band for one loop of the spin model.
pub fn spin_geometric_phase(spin: &SpinModel, steps: usize) -> Result<f64> {
    Ok(holonomy(&build_frame(&spin.path()?, steps)?)?.geometric[1])
}

/// Echo through both numeric pipelines against `rho12(0) e^{4 i phi} e^{-2Tf}`.
pub fn compare_echo(spin: &SpinModel, rho0: &DensityMatrix, steps: usize) -> Result<ComparisonReport> {
    spin.validate()?;
    let mut report = ComparisonReport::new(
        "compare_echo",
        json!({ "model": spin, "steps": steps, "rho0": format!("{:?}", rho0.matrix()) }),
    );
    let c0 = spin.coherence(rho0);
    if c0.norm() < 1e-12 {
        return Err(Error::InvalidArgument("echo comparison needs an initial coherence".into()));
    }
    let phi = spin_geometric_phase(spin, steps)?;
    let (f, _) = spin.moments();
    let oracle = spin_echo_coherence(spin.period, f, phi, c0);

    let direct = spin.echo(rho0, steps)?;
    let (rotated, legs) = rotated_echo(spin, rho0, steps)?;
    same_grid(&direct.forward, &legs[0])?;
    same_grid(&direct.backward, &legs[1])?;

    report.metric("phi", phi);
    report.metric("four_phi", crate::transport::wrap_phase(4.0 * phi));
    let expected_modulus = (-2.0 * spin.period * f).exp();
    report.metric("modulus_expected", expected_modulus);
    for (label, state) in [("direct", &direct.final_state), ("rotated", &rotated)] {
        let ratio = spin.coherence(state) / c0;
        let perr = phase_distance(ratio.arg(), oracle.arg() - c0.arg());
        report.metric(&format!("arg_ratio_{label}"), ratio.arg());
        report.metric(&format!("phase_error_{label}"), perr);
        report.metric(&format!("modulus_ratio_{label}"), ratio.norm());
        let pop = (spin.excited_population(state) - spin.excited_population(rho0)).abs();
        report.metric(&format!("population_change_{label}"), pop);
        report.check(Check::below(format!("{label}: arg(rho12(2T)/rho12(0)) - 4 phi"), perr, ECHO_PHASE_TOL));
        report.check(Check::relative(
            format!("{label}: |rho12(2T)/rho12(0)| vs e^(-2Tf)"),
            ratio.norm(),
            expected_modulus,
            ECHO_MODULUS_REL_TOL,
        ));
    }
    let d = frobenius_distance(direct.final_state.matrix(), rotated.matrix())?;
    report.metric("dist_direct_rotated", d);
    report.check(Check::below("direct vs rotated echo state", d, PIPELINE_STATE_TOL));
    record_diagnostics(&mut report, &[&direct.forward, &direct.backward, &legs[0], &legs[1]]);
    Ok(report)
}

/// Columns `t, re_rho_ij, im_rho_ij (i <= j), trace_drift, min_eig`.
pub fn trajectory_table(traj: &Trajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = traj.last().dim();
    let mut cols = vec!["t".to_string()];
    for i in 0..n {
        for j in i..n {
            cols.push(format!("re_rho_{i}{j}"));
            cols.push(format!("im_rho_{i}{j}"));
        }
    }
    cols.push("trace_drift".into());
    cols.push("min_eig".into());
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(traj.trace_drift.iter().zip(&traj.min_eigenvalue))
        .map(|((t, s), (drift, min))| {
            let mut row = vec![*t];
            for i in 0..n {
                for j in i..n {
                    let z = s.get(i, j);
                    row.push(z.re);
                    row.push(z.im);
                }
            }
            row.push(*drift);
            row.push(*min);
            row
        })
        .collect();
    (cols, rows)
}

/// Columns `t, E_k, re_A_ij, im_A_ij` every `stride` frame nodes (last always included).
pub fn frame_table(frame: &TransportFrame, stride: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = frame.dim();
    let mut cols = vec!["t".to_string()];
    cols.extend((0..n).map(|k| format!("E_{k}")));
    for i in 0..n {
        for j in 0..n {
            cols.push(format!("re_A_{i}{j}"));
            cols.push(format!("im_A_{i}{j}"));
        }
    }
    let last = frame.len() - 1;
    let rows = (0..frame.len())
        .filter(|k| k % stride.max(1) == 0 || *k == last)
        .map(|k| {
            let mut row = vec![frame.times()[k]];
            row.extend_from_slice(frame.energies(k));
            let a = frame.unitary(k);
            for z in a.as_slice() {
                row.push(z.re);
                row.push(z.im);
            }
            row
        })
        .collect();
    (cols, rows)
}
