use nalgebra::{DMatrix, DVector};

use super::PowerLawFit;
use crate::error::{Error, Result};

/// Least squares on `(ln x, ln y)`; all inputs must be positive.
pub fn power_law_fit(x_name: &str, y_name: &str, xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument("power-law fit needs at least 3 points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("power-law fit of {y_name} needs positive finite data")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - exponent * a).powi(2)).sum();
    Ok(PowerLawFit {
        x: x_name.into(),
        y: y_name.into(),
        exponent,
        prefactor: intercept.exp(),
        residual: (ss / n).sqrt(),
        points: xs.len(),
    })
}

/// `w(T) ~ quadratic(T) + e^{-decay x} R cos(frequency * T' - phase)`.
///
/// `T'` is `x = T - mean(T)` for a free-frequency fit and the absolute `T`
/// for [`oscillation_phase`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillationFit {
    pub frequency: f64,
    pub decay: f64,
    pub phase: f64,
    pub amplitude: f64,
    /// RMS residual of the fit.
    pub residual: f64,
}

struct Samples<'a> {
    ts: &'a [f64],
    ws: DVector<f64>,
    center: f64,
    span: f64,
}

impl<'a> Samples<'a> {
    fn new(ts: &'a [f64], ws: &[f64]) -> Result<Self> {
        if ts.len() != ws.len() {
            return Err(Error::DimMismatch { left: ts.len(), right: ws.len() });
        }
        if ts.len() < 8 {
            return Err(Error::InvalidArgument("oscillation fit needs at least 8 samples".into()));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("sample grid must be strictly increasing".into()));
        }
        let center = ts.iter().sum::<f64>() / ts.len() as f64;
        let span = ts[ts.len() - 1] - ts[0];
        Ok(Samples { ts, ws: DVector::from_column_slice(ws), center, span })
    }

    /// Linear least squares at fixed `(nu, decay)`; returns `(sum sq, cos coeff, sin coeff)`.
    fn solve(&self, nu: f64, decay: f64, absolute: bool) -> (f64, f64, f64) {
        let n = self.ts.len();
        let a = DMatrix::from_fn(n, 5, |i, j| {
            let x = self.ts[i] - self.center;
            let arg = if absolute { nu * self.ts[i] } else { nu * x };
            let env = (-decay * x).exp();
            match j {
                0 => 1.0,
                1 => x / self.span,
                2 => (x / self.span).powi(2),
                3 => env * arg.cos(),
                _ => env * arg.sin(),
            }
        });
        let c = a.clone().svd(true, true).solve(&self.ws, 1e-14).expect("SVD with both factors");
        let r = &a * &c - &self.ws;
        (r.norm_squared(), c[3], c[4])
    }

    fn best_decay(&self, nu: f64, absolute: bool) -> f64 {
        let lim = 4.0 / self.span;
        golden(|d| self.solve(nu, d, absolute).0, -lim, lim, 1e-10)
    }

    fn finish(&self, nu: f64, decay: f64, absolute: bool) -> OscillationFit {
        let (ss, cc, sc) = self.solve(nu, decay, absolute);
        OscillationFit {
            frequency: nu,
            decay,
            phase: sc.atan2(cc),
            amplitude: cc.hypot(sc),
            residual: (ss / self.ts.len() as f64).sqrt(),
        }
    }
}

/// Fits frequency and decay of the dominant oscillation, searching `[nu_lo, nu_hi]`.
pub fn oscillation_fit(ts: &[f64], ws: &[f64], nu_lo: f64, nu_hi: f64) -> Result<OscillationFit> {
    let s = Samples::new(ts, ws)?;
    if !(nu_hi > nu_lo && nu_lo > 0.0) {
        return Err(Error::InvalidArgument("frequency window must be positive and nonempty".into()));
    }
    // Grid finer than the spectral resolution 2 pi / span, then refine.
    let spacing = 0.05 * 2.0 * std::f64::consts::PI / s.span;
    let count = ((nu_hi - nu_lo) / spacing).ceil() as usize + 1;
    let cost = |nu: f64| s.solve(nu, s.best_decay(nu, false), false).0;
    let mut best = (f64::INFINITY, nu_lo);
    for k in 0..count {
        let nu = (nu_lo + k as f64 * spacing).min(nu_hi);
        let c = cost(nu);
        if c < best.0 {
            best = (c, nu);
        }
    }
    let nu = golden(cost, best.1 - spacing, best.1 + spacing, 1e-13);
    Ok(s.finish(nu, s.best_decay(nu, false), false))
}

/// Phase `psi` of `cos(nu T - psi)` at a known frequency, decay fitted.
pub fn oscillation_phase(ts: &[f64], ws: &[f64], nu: f64) -> Result<OscillationFit> {
    let s = Samples::new(ts, ws)?;
    Ok(s.finish(nu, s.best_decay(nu, true), true))
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_recovers_exponent() {
        let xs = [100.0, 200.0, 400.0, 800.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.1)).collect();
        let f = power_law_fit("T", "d", &xs, &ys).unwrap();
        assert!((f.exponent + 1.1).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-9);
        assert!(f.residual < 1e-12 && f.conclusive());
    }

    #[test]
    fn power_law_rejects_bad_input() {
        assert!(power_law_fit("x", "y", &[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(power_law_fit("x", "y", &[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn oscillation_fit_recovers_damped_cosine() {
        let ts: Vec<f64> = (0..41).map(|k| 500.0 + 0.75 * k as f64).collect();
        let ws: Vec<f64> = ts
            .iter()
            .map(|t| {
                let x = t - 515.0;
                -0.05 + 1e-4 * x + 0.13 * (-0.003 * x).exp() * (2.0617 * x - 0.4).cos()
            })
            .collect();
        let f = oscillation_fit(&ts, &ws, 1.9, 2.2).unwrap();
        assert!((f.frequency - 2.0617).abs() < 1e-9, "{f:?}");
        assert!((f.decay - 0.003).abs() < 1e-7);
        assert!((f.phase - 0.4).abs() < 1e-7);
        assert!((f.amplitude - 0.13).abs() < 1e-8);
    }

    #[test]
    fn phase_at_known_frequency() {
        let nu = 2.06;
        let ts: Vec<f64> = (0..41).map(|k| 500.0 + 0.75 * k as f64).collect();
        let ws: Vec<f64> = ts.iter().map(|t| 0.02 + 0.1 * (-0.002 * (t - 515.0)).exp() * (nu * t - 1.5).cos()).collect();
        let f = oscillation_phase(&ts, &ws, nu).unwrap();
        assert!((f.phase - 1.5).abs() < 1e-8, "{f:?}");
    }
}
