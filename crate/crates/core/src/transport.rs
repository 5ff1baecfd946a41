//! Rotating-axis frames built from parallel-transported eigenvectors.
//!
//! A [`TransportFrame`] samples the unitary `A(t) = sum_n |n(t)><n(0)|`
//! where each `|n(t)>` is an eigenvector of `H(t)` whose phase is carried
//! along the path so that consecutive overlaps are real and positive. At the
//! end of a closed loop `A(T)` is diagonal in the initial eigenbasis and its
//! diagonal phases are the geometric phases.
//!
//! Phase convention: `phi_n = arg <n(0)|n(T)>` for the transported vector.
//! With this convention the upper state of `E n.sigma` picks up minus half
//! the solid angle swept counter-clockwise by the field direction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matcore::{
    degenerate_clusters, eig_hermitian, frobenius_distance, inner, unitary_polar_factor, CMatrix,
    C64, ZERO,
};

/// Tolerance handed to the eigensolver for every path sample.
const EIG_TOL: f64 = 1e-14;
/// Relative band-gap floor below which two tracked levels count as crossing.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-6;
/// Relative tolerance for grouping degenerate levels.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;
/// Off-diagonal magnitude of `A(T)` that marks a non-adiabatic discretisation.
pub const LEAKAGE_LIMIT: f64 = 1e-4;

pub type MatrixSampler = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

/// Time-parameterised Hermitian Hamiltonian on `[0, T]` (hbar = 1).
#[derive(Clone)]
pub struct HamiltonianPath {
    dim: usize,
    period: f64,
    cyclic: bool,
    sampler: MatrixSampler,
}

impl std::fmt::Debug for HamiltonianPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianPath")
            .field("dim", &self.dim)
            .field("period", &self.period)
            .field("cyclic", &self.cyclic)
            .finish()
    }
}

impl HamiltonianPath {
    pub fn new<F>(dim: usize, period: f64, cyclic: bool, sampler: F) -> Result<Self>
    where
        F: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        Self::from_sampler(dim, period, cyclic, Arc::new(sampler))
    }

    pub fn from_sampler(
        dim: usize,
        period: f64,
        cyclic: bool,
        sampler: MatrixSampler,
    ) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
        }
        let h0 = sampler(0.0);
        let h1 = sampler(period);
        for h in [&h0, &h1] {
            if h.dim() != dim {
                return Err(Error::DimMismatch { left: dim, right: h.dim() });
            }
            if !h.is_hermitian(1e-12) {
                return Err(Error::NotHermitian { residual: h.hermiticity_residual() });
            }
        }
        if cyclic {
            let distance = frobenius_distance(&h0, &h1)?;
            if distance >= 1e-10 * h0.frobenius_norm().max(f64::MIN_POSITIVE) && distance > 0.0 {
                return Err(Error::NotCyclicWhenRequired { distance });
            }
        }
        Ok(HamiltonianPath { dim, period, cyclic, sampler })
    }

    pub fn at(&self, t: f64) -> CMatrix {
        (self.sampler)(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    /// The same loop traversed backwards: `H'(s) = H(T - s)`.
    pub fn reversed(&self) -> HamiltonianPath {
        let inner = self.sampler.clone();
        let period = self.period;
        HamiltonianPath {
            dim: self.dim,
            period,
            cyclic: self.cyclic,
            sampler: Arc::new(move |s| inner(period - s)),
        }
    }

    /// Restriction to `[0, fraction * T]`, rescaled to keep the original clock.
    pub fn truncated(&self, end: f64) -> Result<HamiltonianPath> {
        if !(end > 0.0 && end <= self.period) {
            return Err(Error::InvalidArgument(format!("truncation end {end} outside (0, T]")));
        }
        let cyclic = frobenius_distance(&self.at(0.0), &self.at(end))?
            < 1e-10 * self.at(0.0).frobenius_norm().max(f64::MIN_POSITIVE);
        Ok(HamiltonianPath {
            dim: self.dim,
            period: end,
            cyclic,
            sampler: self.sampler.clone(),
        })
    }

    /// Same Hamiltonian, clock shifted so the new path starts at `start`.
    pub fn window(&self, start: f64, end: f64) -> Result<HamiltonianPath> {
        if !(start >= 0.0 && end > start && end <= self.period * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!("window [{start}, {end}] outside path")));
        }
        let inner = self.sampler.clone();
        let shifted: MatrixSampler = Arc::new(move |s| inner(start + s));
        let cyclic = frobenius_distance(&shifted(0.0), &shifted(end - start))?
            < 1e-10 * shifted(0.0).frobenius_norm().max(f64::MIN_POSITIVE);
        Ok(HamiltonianPath { dim: self.dim, period: end - start, cyclic, sampler: shifted })
    }
}

/// Sampled rotating-axis unitary with eigenvalue tracks.
#[derive(Clone, Debug)]
pub struct TransportFrame {
    times: Vec<f64>,
    unitaries: Vec<CMatrix>,
    energies: Vec<Vec<f64>>,
    initial_basis: CMatrix,
    cyclic: bool,
    max_overlap_imag: f64,
    max_overlap_defect: f64,
}

/// Frame quantities at one instant.
#[derive(Clone, Debug)]
pub struct FrameSample {
    pub unitary: CMatrix,
    pub energies: Vec<f64>,
}

impl TransportFrame {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.initial_basis.dim()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn unitary(&self, k: usize) -> &CMatrix {
        &self.unitaries[k]
    }

    pub fn energies(&self, k: usize) -> &[f64] {
        &self.energies[k]
    }

    /// Columns are the initial eigenvectors `|n(0)>`, bands in ascending energy at t = 0.
    pub fn initial_basis(&self) -> &CMatrix {
        &self.initial_basis
    }

    /// Columns are the transported eigenvectors `|n(t_k)> = A(t_k)|n(0)>`.
    pub fn transported_basis(&self, k: usize) -> CMatrix {
        self.unitaries[k].matmul(&self.initial_basis)
    }

    /// `(max_k |Im<n_k|n_k+1>|, max_k (1 - Re<n_k|n_k+1>))` over all bands.
    pub fn transport_residuals(&self) -> (f64, f64) {
        (self.max_overlap_imag, self.max_overlap_defect)
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-9 * (end - start);
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutOfFrameRange { t, start, end });
        }
        let m = self.times.len() - 1;
        let dt = (end - start) / m as f64;
        let x = ((t - start) / dt).clamp(0.0, m as f64);
        let k = x.round();
        if (x - k).abs() < 1e-7 {
            return Ok((k as usize, 0.0));
        }
        let k = (x.floor() as usize).min(m - 1);
        Ok((k, x - k as f64))
    }

    /// `A(t)` and `E_n(t)`; exact at grid nodes, interpolated (and re-unitarised) between them.
    pub fn sample(&self, t: f64) -> Result<FrameSample> {
        let (k, w) = self.locate(t)?;
        if w == 0.0 {
            return Ok(FrameSample {
                unitary: self.unitaries[k].clone(),
                energies: self.energies[k].clone(),
            });
        }
        let mut blend = self.unitaries[k].scale_real(1.0 - w);
        blend.add_scaled(C64::new(w, 0.0), &self.unitaries[k + 1]);
        let energies = self.energies[k]
            .iter()
            .zip(&self.energies[k + 1])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(FrameSample { unitary: unitary_polar_factor(&blend)?, energies })
    }

    fn derivative_at_node(&self, k: usize) -> CMatrix {
        let m = self.times.len() - 1;
        let (lo, hi) = if k == 0 {
            (0, 1)
        } else if k == m {
            (m - 1, m)
        } else {
            (k - 1, k + 1)
        };
        let dt = self.times[hi] - self.times[lo];
        let diff = &self.unitaries[hi] - &self.unitaries[lo];
        diff.scale_real(1.0 / dt)
    }

    /// `dA/dt` by centred differences (one-sided at the ends).
    pub fn derivative(&self, t: f64) -> Result<CMatrix> {
        let (k, w) = self.locate(t)?;
        if w == 0.0 {
            return Ok(self.derivative_at_node(k));
        }
        let mut d = self.derivative_at_node(k).scale_real(1.0 - w);
        d.add_scaled(C64::new(w, 0.0), &self.derivative_at_node(k + 1));
        Ok(d)
    }

    /// Gauge generator `A^dagger dA/dt` at time `t`.
    pub fn gauge_generator(&self, t: f64) -> Result<CMatrix> {
        let a = self.sample(t)?.unitary;
        Ok(a.adjoint().matmul(&self.derivative(t)?))
    }

    /// Rotated Hamiltonian `A^dagger H A = sum_n E_n(t) |n(0)><n(0)|`.
    pub fn rotated_hamiltonian(&self, t: f64) -> Result<CMatrix> {
        let s = self.sample(t)?;
        Ok(self.rotated_hamiltonian_from(&s.energies))
    }

    pub(crate) fn rotated_hamiltonian_from(&self, energies: &[f64]) -> CMatrix {
        let v = &self.initial_basis;
        v.matmul(&CMatrix::real_diag(energies)).matmul(&v.adjoint())
    }

    /// Composite-trapezoid dynamic phases `-int E_n dt`.
    pub fn dynamic_phases(&self) -> Vec<f64> {
        let n = self.dim();
        let mut acc = vec![0.0; n];
        for k in 0..self.times.len() - 1 {
            let dt = self.times[k + 1] - self.times[k];
            for b in 0..n {
                acc[b] -= 0.5 * dt * (self.energies[k][b] + self.energies[k + 1][b]);
            }
        }
        acc
    }
}

/// Geometric and dynamic phases at loop closure.
#[derive(Clone, Debug)]
pub struct PhaseDecomposition {
    /// `arg <n(0)|A(T)|n(0)>` per band, principal value in `(-pi, pi]`.
    pub geometric: Vec<f64>,
    /// `-int_0^T E_n dt` per band.
    pub dynamic: Vec<f64>,
    /// `A(T)` (or the generalised holonomy) expressed in the initial eigenbasis.
    pub holonomy: CMatrix,
}

/// Principal value of an angle in `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// `|wrap(a - b)|`
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// Builds the discrete parallel-transport frame with `steps` intervals.
pub fn build_frame(path: &HamiltonianPath, steps: usize) -> Result<TransportFrame> {
    build_frame_with_floor(path, steps, DEFAULT_GAP_FLOOR)
}

pub fn build_frame_with_floor(
    path: &HamiltonianPath,
    steps: usize,
    gap_floor: f64,
) -> Result<TransportFrame> {
    if steps < 2 {
        return Err(Error::InvalidArgument("frame needs at least 2 steps".into()));
    }
    let n = path.dim();
    let period = path.period();
    let h0 = path.at(0.0);
    let e0 = eig_hermitian(&h0, EIG_TOL)?;
    let h0_norm = h0.frobenius_norm();
    check_gaps(&e0.values, gap_floor * h0_norm, 0.0)?;

    let initial_basis = e0.vectors.clone();
    let v0_adj = initial_basis.adjoint();
    let mut times = Vec::with_capacity(steps + 1);
    let mut unitaries = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);
    times.push(0.0);
    unitaries.push(CMatrix::identity(n));
    energies.push(e0.values.clone());

    let mut prev: Vec<Vec<C64>> = (0..n).map(|b| initial_basis.column(b)).collect();
    let mut max_imag: f64 = 0.0;
    let mut max_defect: f64 = 0.0;

    for k in 1..=steps {
        let t = period * k as f64 / steps as f64;
        let h = path.at(t);
        let eig = eig_hermitian(&h, EIG_TOL)?;
        let candidates: Vec<Vec<C64>> = (0..n).map(|j| eig.vector(j)).collect();
        let assignment = match_bands(&prev, &candidates);

        let mut next = Vec::with_capacity(n);
        let mut tracked = Vec::with_capacity(n);
        for (b, &j) in assignment.iter().enumerate() {
            let w = &candidates[j];
            let ov = inner(&prev[b], w);
            let mag = ov.norm();
            if mag == 0.0 {
                return Err(Error::BandCrossing { lower: b, upper: b, gap: 0.0, t });
            }
            let phase = ov.conj() / mag;
            let v: Vec<C64> = w.iter().map(|&z| z * phase).collect();
            let check = inner(&prev[b], &v);
            max_imag = max_imag.max(check.im.abs());
            max_defect = max_defect.max(1.0 - check.re);
            next.push(v);
            tracked.push(eig.values[j]);
        }
        check_gaps(&tracked, gap_floor * h.frobenius_norm().max(h0_norm), t)?;

        let vt = CMatrix::from_columns(&next);
        unitaries.push(vt.matmul(&v0_adj));
        energies.push(tracked);
        times.push(t);
        prev = next;
    }

    Ok(TransportFrame {
        times,
        unitaries,
        energies,
        initial_basis,
        cyclic: path.is_cyclic(),
        max_overlap_imag: max_imag,
        max_overlap_defect: max_defect,
    })
}

fn check_gaps(values: &[f64], floor: f64, t: f64) -> Result<()> {
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let gap = (values[i] - values[j]).abs();
            if gap < floor {
                return Err(Error::BandCrossing { lower: i, upper: j, gap, t });
            }
        }
    }
    Ok(())
}

/// Greedy maximal-|overlap| assignment: `result[b]` is the candidate index for band `b`.
fn match_bands(prev: &[Vec<C64>], candidates: &[Vec<C64>]) -> Vec<usize> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (b, p) in prev.iter().enumerate() {
        for (j, c) in candidates.iter().enumerate() {
            pairs.push((inner(p, c).norm(), b, j));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut result = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, b, j) in pairs {
        if result[b] == usize::MAX && !taken[j] {
            result[b] = j;
            taken[j] = true;
        }
    }
    result
}

/// Closed-loop holonomy of a frame.
pub fn holonomy(frame: &TransportFrame) -> Result<PhaseDecomposition> {
    if !frame.is_cyclic() {
        return Err(Error::NotCyclic);
    }
    let last = frame.len() - 1;
    let v0 = frame.initial_basis();
    let m = v0.adjoint().matmul(&frame.transported_basis(last));
    let n = m.dim();
    let mut leakage: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                leakage = leakage.max(m[(i, j)].norm());
            }
        }
    }
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::ExcessLeakage { leakage });
    }
    let geometric = (0..n).map(|b| wrap_phase(m[(b, b)].arg())).collect();
    Ok(PhaseDecomposition { geometric, dynamic: frame.dynamic_phases(), holonomy: m })
}

/// Generalised (non-cyclic) holonomy relative to a Pancharatnam reference section.
///
/// Each endpoint eigenvector is re-phased so that its overlap with the
/// matching initial eigenvector is real and positive; the returned phases
/// are those of `A~^dagger(T) A(T)` in the initial eigenbasis.
pub fn pati_reference(frame: &TransportFrame, endpoint_basis: &CMatrix) -> Result<PhaseDecomposition> {
    let n = frame.dim();
    if endpoint_basis.dim() != n {
        return Err(Error::DimMismatch { left: n, right: endpoint_basis.dim() });
    }
    let last = frame.len() - 1;
    let vt = frame.transported_basis(last);
    let v0 = frame.initial_basis();
    let transported: Vec<Vec<C64>> = (0..n).map(|b| vt.column(b)).collect();
    let endpoints: Vec<Vec<C64>> = (0..n).map(|j| endpoint_basis.column(j)).collect();
    let assignment = match_bands(&transported, &endpoints);

    let mut reference = Vec::with_capacity(n);
    for (b, &j) in assignment.iter().enumerate() {
        let n0 = v0.column(b);
        let e = &endpoints[j];
        let ov = inner(&n0, e);
        if ov.norm() < 1e-12 {
            return Err(Error::OrthogonalEndpoint { band: b, overlap: ov.norm() });
        }
        let phase = ov.conj() / ov.norm();
        reference.push(e.iter().map(|&z| z * phase).collect::<Vec<_>>());
    }
    let ref_basis = CMatrix::from_columns(&reference);
    let m = ref_basis.adjoint().matmul(&vt);
    let geometric = (0..n).map(|b| wrap_phase(m[(b, b)].arg())).collect();
    Ok(PhaseDecomposition { geometric, dynamic: frame.dynamic_phases(), holonomy: m })
}

/// Holonomy of one (possibly degenerate) energy level.
#[derive(Clone, Debug)]
pub struct LevelHolonomy {
    /// Energy of the level at t = 0.
    pub energy: f64,
    /// Unitary in `U(M)` expressed in the level's initial basis.
    pub block: CMatrix,
}

/// Non-Abelian holonomy per degenerate level.
///
/// Subspace bases are carried from step to step by the unitary polar factor
/// of their overlap matrix, the discrete form of `<n_m|d/dt|n_m'> = 0`.
/// `cluster_tol` is relative to `|H(t)|_F`.
pub fn nonabelian_holonomy(
    path: &HamiltonianPath,
    steps: usize,
    cluster_tol: f64,
) -> Result<Vec<LevelHolonomy>> {
    if !path.is_cyclic() {
        return Err(Error::NotCyclic);
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("holonomy needs at least 2 steps".into()));
    }
    let h0 = path.at(0.0);
    let e0 = eig_hermitian(&h0, EIG_TOL)?;
    let clusters0 = degenerate_clusters(&e0.values, cluster_tol * h0.frobenius_norm());
    let pattern0: Vec<usize> = clusters0.iter().map(|r| r.len()).collect();

    let initial: Vec<Vec<Vec<C64>>> = clusters0
        .iter()
        .map(|r| r.clone().map(|k| e0.vector(k)).collect())
        .collect();
    let mut current = initial.clone();

    for k in 1..=steps {
        let t = path.period() * k as f64 / steps as f64;
        let h = path.at(t);
        let eig = eig_hermitian(&h, EIG_TOL)?;
        let clusters = degenerate_clusters(&eig.values, cluster_tol * h.frobenius_norm());
        let pattern: Vec<usize> = clusters.iter().map(|r| r.len()).collect();
        if pattern != pattern0 {
            return Err(Error::DegeneracyDrift { t, from: pattern0, to: pattern });
        }
        for (c, range) in clusters.iter().enumerate() {
            let fresh: Vec<Vec<C64>> = range.clone().map(|j| eig.vector(j)).collect();
            current[c] = transport_subspace(&current[c], &fresh)?;
        }
    }

    let mut levels = Vec::with_capacity(clusters0.len());
    for (c, range) in clusters0.iter().enumerate() {
        let m = range.len();
        let mut block = CMatrix::zeros(m);
        for a in 0..m {
            for b in 0..m {
                block[(a, b)] = inner(&initial[c][a], &current[c][b]);
            }
        }
        levels.push(LevelHolonomy { energy: e0.values[range.start], block });
    }
    Ok(levels)
}

/// New subspace basis `W U^dagger` where `U` is the polar factor of `V^dagger W`.
fn transport_subspace(prev: &[Vec<C64>], fresh: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    let m = prev.len();
    let mut overlap = CMatrix::zeros(m);
    for a in 0..m {
        for b in 0..m {
            overlap[(a, b)] = inner(&prev[a], &fresh[b]);
        }
    }
    let u = unitary_polar_factor(&overlap)?;
    let u_adj = u.adjoint();
    let dim = fresh[0].len();
    let mut out = vec![vec![ZERO; dim]; m];
    for (b, col) in out.iter_mut().enumerate() {
        for (a, f) in fresh.iter().enumerate() {
            let coeff = u_adj[(a, b)];
            for (dst, &z) in col.iter_mut().zip(f) {
                *dst += z * coeff;
            }
        }
    }
    Ok(out)
}

pub type Axis = [f64; 3];

fn dot(a: &Axis, b: &Axis) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Axis, b: &Axis) -> Axis {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized(a: &Axis) -> Option<Axis> {
    let n = dot(a, a).sqrt();
    (n > 0.0).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Signed solid angle enclosed by a closed polygon of unit vectors.
///
/// Sums Van Oosterom-Strackee triangle areas from a reference vertex placed
/// on the polygon's mean normal. The value is defined modulo 4pi and is
/// returned in (-2pi, 2pi]; counter-clockwise loops around a cap (seen from
/// outside the sphere) are positive. A trailing copy of the first vertex is
/// allowed.
pub fn solid_angle(axes: &[Axis]) -> Result<f64> {
    let mut pts: Vec<Axis> = axes
        .iter()
        .map(|a| normalized(a).ok_or_else(|| Error::InvalidArgument("zero axis".into())))
        .collect::<Result<_>>()?;
    if pts.len() > 1 {
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if dot(&first, &last) > 1.0 - 1e-15 {
            pts.pop();
        }
    }
    let n = pts.len();
    if n < 3 {
        return Ok(0.0);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if dot(&pts[i], &pts[j]) < -1.0 + 1e-12 {
            return Err(Error::AntipodalStep { index: i, next: j });
        }
    }
    let mut normal = [0.0; 3];
    for i in 0..n {
        let c = cross(&pts[i], &pts[(i + 1) % n]);
        for k in 0..3 {
            normal[k] += c[k];
        }
    }
    let reference = if dot(&normal, &normal).sqrt() > 1e-12 {
        normalized(&normal).unwrap()
    } else {
        let mut mean = [0.0; 3];
        for p in &pts {
            for k in 0..3 {
                mean[k] += p[k];
            }
        }
        match normalized(&mean) {
            Some(m) => m,
            None => return Ok(0.0),
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        let a = &pts[i];
        let b = &pts[(i + 1) % n];
        let num = dot(&reference, &cross(a, b));
        let den = 1.0 + dot(&reference, a) + dot(a, b) + dot(b, &reference);
        total += 2.0 * num.atan2(den);
    }
    // The area seen from the normal is the left-hand region in (0, 4pi);
    // report the representative of smallest magnitude.
    if total > 2.0 * std::f64::consts::PI + 1e-12 {
        total -= 4.0 * std::f64::consts::PI;
    }
    Ok(total)
}
