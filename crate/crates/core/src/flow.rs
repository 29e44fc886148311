//! Integration of `dγ/dt + v(γ) = 0`, limit resolution, stable/unstable seed
//! sampling, trajectory moduli, transversality and breaking detection.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::fields::{QuasiGradientField, StationaryManifold};
use crate::linalg::column_span;

pub mod moduli;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("trajectory left the bounding box at {point:?}")]
    Divergence { point: Vec<f64> },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("no stationary locus reached within the time budget (|v| = {speed:e})")]
    NoConvergence { speed: f64 },
    #[error("locus {label} has no unstable directions")]
    ZeroUnstableDim { label: String },
    #[error("estimated dimension {est} differs from expected {expected}")]
    DimensionMismatch { est: usize, expected: i64 },
    #[error("trajectory never crosses the slice level {level}")]
    SliceMissed { level: f64 },
    #[error("linearized frame propagation overflowed")]
    FrameBlowup,
    #[error("could not split a near-broken trajectory")]
    UnresolvedBreaking,
    #[error("zero-set section is not transverse along the family")]
    NonTransverseSection,
    #[error("no counting strategy applies: {reason}")]
    Unsupported { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Backward => 1.0,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Integrator and limit-resolution tolerances.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    pub h_max: f64,
    /// `|v|` below which the trajectory is considered to have arrived.
    pub stat_tol: f64,
    pub max_steps: usize,
    /// Distance from a locus at which a limit is attributed to it.
    pub capture_radius: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-9,
            atol: 1e-11,
            t_max: 2000.0,
            h_max: 0.5,
            stat_tol: 1e-9,
            max_steps: 400_000,
            capture_radius: 1e-4,
        }
    }
}

impl FlowOptions {
    /// Looser settings for bulk sampling where only the limit matters.
    pub fn coarse() -> Self {
        FlowOptions {
            rtol: 1e-7,
            atol: 1e-9,
            stat_tol: 1e-7,
            capture_radius: 1e-3,
            ..Self::default()
        }
    }
}

/// Where a trajectory ends up.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Limit {
    /// Index into the locus list.
    pub locus: usize,
    pub point: Vec<f64>,
}

/// A sampled solution of `dγ/dt = ∓v(γ)`.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub direction: Direction,
    pub times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    /// `dγ/dt` at each sample (used for Hermite interpolation).
    #[serde(skip)]
    pub velocities: Vec<DVector<f64>>,
    pub f_profile: Vec<f64>,
    pub alpha_limit: Option<Limit>,
    pub omega_limit: Option<Limit>,
}

impl Trajectory {
    pub fn end(&self) -> &[f64] {
        self.samples.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Cubic Hermite interpolation at time `t` (clamped to the sampled range).
    pub fn at(&self, t: f64) -> DVector<f64> {
        let t = t.clamp(self.times[0], self.duration());
        let k = match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => return DVector::from_column_slice(&self.samples[k]),
            Err(k) => k.clamp(1, self.times.len() - 1),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (p0, p1) = (
            DVector::from_column_slice(&self.samples[k - 1]),
            DVector::from_column_slice(&self.samples[k]),
        );
        let (m0, m1) = (&self.velocities[k - 1], &self.velocities[k]);
        let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
        let h10 = s.powi(3) - 2.0 * s * s + s;
        let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
        let h11 = s.powi(3) - s * s;
        p0 * h00 + m0 * (h10 * h) + p1 * h01 + m1 * (h11 * h)
    }

    /// The same curve traversed the other way, with `f` re-evaluated by
    /// `field` (used when a trajectory was computed for the reversed field).
    pub fn reversed(&self, field: &QuasiGradientField) -> Trajectory {
        let total = self.duration();
        Trajectory {
            direction: self.direction.reverse(),
            times: self.times.iter().rev().map(|t| total - t).collect(),
            samples: self.samples.iter().rev().cloned().collect(),
            velocities: self.velocities.iter().rev().map(|v| -v).collect(),
            f_profile: self.samples.iter().rev().map(|x| field.f_at(x)).collect(),
            alpha_limit: self.omega_limit.clone(),
            omega_limit: self.alpha_limit.clone(),
        }
    }

    /// Keep samples up to index `k` inclusive.
    pub fn truncate(&mut self, k: usize) {
        let k = k + 1;
        self.times.truncate(k);
        self.samples.truncate(k);
        self.velocities.truncate(k);
        self.f_profile.truncate(k);
    }

    /// Largest increase of `f` between consecutive samples, per unit time,
    /// along the direction of the flow.
    pub fn f_drift(&self) -> f64 {
        let sgn = match self.direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        };
        self.f_profile
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(f, t)| sgn * (f[1] - f[0]) / (t[1] - t[0]).max(1e-300))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

// Dormand–Prince 5(4) tableau (the field is autonomous, so the nodes are unused).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Stop condition evaluated after every accepted step.
pub trait StopRule {
    fn stop(&mut self, t: f64, x: &[f64], speed: f64) -> bool;
}

impl<F: FnMut(f64, &[f64], f64) -> bool> StopRule for F {
    fn stop(&mut self, t: f64, x: &[f64], speed: f64) -> bool {
        self(t, x, speed)
    }
}

pub(crate) fn retract(field: &QuasiGradientField, x: DVector<f64>) -> DVector<f64> {
    let m = &field.manifold;
    let mut y = match m.project(x.as_slice()) {
        Ok(y) => y,
        Err(_) => return x,
    };
    if m.rho(&y).is_some_and(|r| r > 0.0) {
        if let Ok(b) = m.project_to_boundary(&y) {
            y = b;
        }
    }
    DVector::from_vec(y)
}

/// Integrate from `x0` until `|v|` stays below `opts.stat_tol` for three
/// consecutive steps, `stop` fires, or the time budget is spent.
pub fn integrate_with(
    field: &QuasiGradientField,
    x0: &[f64],
    direction: Direction,
    opts: &FlowOptions,
    mut stop: impl StopRule,
) -> Result<Trajectory, FlowError> {
    let sgn = direction.sign();
    let rhs = |x: &DVector<f64>| field.eval(x.as_slice()) * sgn;
    let mut x = DVector::from_column_slice(x0);
    let mut t = 0.0;
    let mut k1 = rhs(&x);
    let mut traj = Trajectory {
        direction,
        times: vec![0.0],
        samples: vec![x0.to_vec()],
        velocities: vec![k1.clone()],
        f_profile: vec![field.f_at(x0)],
        alpha_limit: None,
        omega_limit: None,
    };
    let mut h = 0.01f64.min(opts.h_max);
    let mut calm = 0;
    let mut steps = 0;
    if k1.norm() < opts.stat_tol {
        return Ok(traj);
    }
    while t < opts.t_max {
        steps += 1;
        if steps > opts.max_steps {
            break;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut y = x.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    y.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k.push(rhs(&y));
        }
        let mut y5 = x.clone();
        let mut y4 = x.clone();
        for s in 0..7 {
            y5.axpy(h * B5[s], &k[s], 1.0);
            y4.axpy(h * B4[s], &k[s], 1.0);
        }
        let err = (0..x.len())
            .map(|i| {
                let sc = opts.atol + opts.rtol * x[i].abs().max(y5[i].abs());
                ((y5[i] - y4[i]) / sc).abs()
            })
            .fold(0.0, f64::max);
        if err <= 1.0 || h < 1e-14 {
            if h < 1e-14 && err > 1.0 {
                return Err(FlowError::StepUnderflow { t });
            }
            t += h;
            x = retract(field, y5);
            if !field.manifold.in_bbox(x.as_slice()) || !x.iter().all(|c| c.is_finite()) {
                return Err(FlowError::Divergence {
                    point: x.as_slice().to_vec(),
                });
            }
            k1 = rhs(&x);
            let speed = k1.norm();
            traj.times.push(t);
            traj.samples.push(x.as_slice().to_vec());
            traj.velocities.push(k1.clone());
            traj.f_profile.push(field.f_at(x.as_slice()));
            if stop.stop(t, x.as_slice(), speed) {
                break;
            }
            calm = if speed < opts.stat_tol { calm + 1 } else { 0 };
            if calm >= 3 {
                break;
            }
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(opts.h_max);
    }
    Ok(traj)
}

/// Integrate with the default arrival rule only.
pub fn integrate(
    field: &QuasiGradientField,
    x0: &[f64],
    direction: Direction,
    opts: &FlowOptions,
) -> Result<Trajectory, FlowError> {
    integrate_with(field, x0, direction, opts, |_: f64, _: &[f64], _: f64| false)
}

/// Index of the locus within `radius` of `x`, if any.
pub fn locate(loci: &[StationaryManifold], x: &[f64], radius: f64) -> Option<usize> {
    loci.iter()
        .enumerate()
        .map(|(i, l)| (i, l.distance(x)))
        .filter(|(_, d)| *d <= radius)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

pub(crate) fn nearest_on(locus: &StationaryManifold, x: &[f64]) -> Vec<f64> {
    locus.point_at(&locus.parameter_of(x))
}

/// Integrate in `direction` and resolve the limit to one of `loci`.
pub fn resolve_limit(
    field: &QuasiGradientField,
    loci: &[StationaryManifold],
    x0: &[f64],
    direction: Direction,
    opts: &FlowOptions,
) -> Result<(Limit, Trajectory), FlowError> {
    let mut traj = integrate_with(field, x0, direction, opts, |_: f64, x: &[f64], speed: f64| {
        speed < opts.stat_tol * 1e3 && locate(loci, x, opts.capture_radius * 0.1).is_some()
    })?;
    let end = traj.end().to_vec();
    let speed = field.eval(&end).norm();
    match locate(loci, &end, opts.capture_radius) {
        Some(i) => {
            let lim = Limit {
                locus: i,
                point: nearest_on(&loci[i], &end),
            };
            match direction {
                Direction::Forward => traj.omega_limit = Some(lim.clone()),
                Direction::Backward => traj.alpha_limit = Some(lim.clone()),
            }
            Ok((lim, traj))
        }
        None => Err(FlowError::NoConvergence { speed }),
    }
}

pub fn forward_limit(
    field: &QuasiGradientField,
    loci: &[StationaryManifold],
    x0: &[f64],
    opts: &FlowOptions,
) -> Result<(Limit, Trajectory), FlowError> {
    resolve_limit(field, loci, x0, Direction::Forward, opts)
}

pub fn backward_limit(
    field: &QuasiGradientField,
    loci: &[StationaryManifold],
    x0: &[f64],
    opts: &FlowOptions,
) -> Result<(Limit, Trajectory), FlowError> {
    resolve_limit(field, loci, x0, Direction::Backward, opts)
}

/// Matrix sign function by scaled Newton iteration; `a` must have no
/// eigenvalues on the imaginary axis.
fn matrix_sign(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut x = a.clone();
    for _ in 0..100 {
        let inv = x.clone().try_inverse()?;
        let det = x.determinant().abs();
        let g = if det > 0.0 && det.is_finite() {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&x * g + &inv / g) * 0.5;
        let diff = (&next - &x).norm();
        x = next;
        if diff < 1e-13 * x.norm().max(1.0) {
            return Some(x);
        }
    }
    Some(x)
}

/// Unstable subspace of a stationary point for `dγ/dt = −v`, restricted to
/// the tangent space: ambient orthonormal columns. `shift` separates the
/// spectrum from zero (half the smallest normal |Re λ|).
pub fn unstable_frame(field: &QuasiGradientField, x: &[f64], shift: f64) -> DMatrix<f64> {
    let (l, t) = field.linearization(x);
    let n = l.nrows();
    // Eigenvalues of L with Re < 0 are unstable for the flow −v.
    let s = matrix_sign(&(&l + DMatrix::identity(n, n) * shift)).expect("hyperbolic shift");
    let p = (DMatrix::identity(n, n) - s) * 0.5;
    let span = column_span(&p, 1e-8);
    &t * span
}

/// Stable-plus-neutral subspace (the tangent space of `W^s` of the locus).
pub fn stable_frame(field: &QuasiGradientField, x: &[f64], shift: f64) -> DMatrix<f64> {
    let (l, t) = field.linearization(x);
    let n = l.nrows();
    let s = matrix_sign(&(&l + DMatrix::identity(n, n) * shift)).expect("hyperbolic shift");
    let p = (DMatrix::identity(n, n) + s) * 0.5;
    let span = column_span(&p, 1e-8);
    &t * span
}

pub(crate) fn spectral_shift(b: &StationaryManifold, field: &QuasiGradientField) -> f64 {
    let m = b
        .normal_spectrum
        .iter()
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        0.5 * m
    } else {
        field.spectral_gap_tol
    }
}

/// Seeds on the small sphere of radius `radius` in the unstable space at a
/// point of a locus. For boundary loci the seeds are restricted to the inward
/// half-space.
#[derive(Debug, Clone)]
pub struct SeedChart {
    pub base: Vec<f64>,
    /// Ambient orthonormal columns spanning the unstable (or stable) space.
    pub frame: DMatrix<f64>,
    pub radius: f64,
    /// Inward normal when the base point lies on the boundary.
    pub inward: Option<DVector<f64>>,
}

impl SeedChart {
    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    /// Seed for unit vector `u` in frame coordinates (retracted onto the manifold).
    pub fn seed(&self, field: &QuasiGradientField, u: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(&self.base)
            + &self.frame * DVector::from_column_slice(u) * self.radius;
        retract(field, x).as_slice().to_vec()
    }

    /// Frame coordinates of the inward normal, if the chart is on the boundary
    /// and the normal has a component in the frame.
    pub fn inward_coords(&self) -> Option<DVector<f64>> {
        let nu = self.inward.as_ref()?;
        let c = self.frame.transpose() * nu;
        (c.norm() > 1e-8).then(|| c.normalize())
    }
}

pub fn seed_chart(
    field: &QuasiGradientField,
    locus: &StationaryManifold,
    base: &[f64],
    direction: Direction,
    radius: f64,
) -> SeedChart {
    let shift = spectral_shift(locus, field);
    let mut frame = match direction {
        Direction::Forward => unstable_frame(field, base, shift),
        Direction::Backward => {
            // Stable normal directions only: drop the locus tangent.
            let st = stable_frame(field, base, shift);
            let tangent = locus_tangent(locus, base);
            if tangent.ncols() == 0 {
                st
            } else {
                let proj = DMatrix::identity(base.len(), base.len()) - &tangent * tangent.transpose();
                column_span(&(proj * st), 1e-6)
            }
        }
    };
    if frame.ncols() == 0 {
        frame = DMatrix::zeros(base.len(), 0);
    }
    let inward = if locus.is_boundary() {
        field.manifold.inward_normal(base)
    } else {
        None
    };
    SeedChart {
        base: base.to_vec(),
        frame,
        radius,
        inward,
    }
}

/// Tangent space of a locus at `x` (ambient columns; empty for points).
pub fn locus_tangent(locus: &StationaryManifold, x: &[f64]) -> DMatrix<f64> {
    match &locus.model {
        crate::fields::LocusModel::Point(_) => DMatrix::zeros(x.len(), 0),
        crate::fields::LocusModel::Sphere2 { center, frame, .. } => {
            let n = x.len();
            let e = DMatrix::from_fn(n, 3, |r, c| frame[c][r]);
            let radial = DVector::from_fn(n, |i, _| x[i] - center[i]);
            let radial = (&e * (e.transpose() * radial)).normalize();
            let proj = &e * e.transpose() - &radial * radial.transpose();
            column_span(&proj, 1e-6)
        }
    }
}

/// `count` seeds on the unstable sphere of `b` (points on the locus are
/// sampled for Sphere2 loci).
pub fn sample_unstable(
    field: &QuasiGradientField,
    b: &StationaryManifold,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, FlowError> {
    Ok(sample_unstable_based(field, b, radius, count, seed)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}

/// Like [`sample_unstable`], also returning the base point of each seed.
pub fn sample_unstable_based(
    field: &QuasiGradientField,
    b: &StationaryManifold,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, FlowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut guard = 0;
    while out.len() < count {
        guard += 1;
        if guard > 100 * count + 100 {
            break;
        }
        let base = match &b.model {
            crate::fields::LocusModel::Point(p) => p.clone(),
            crate::fields::LocusModel::Sphere2 { .. } => {
                let u = random_unit(3, &mut rng);
                b.point_at(&[u[0], u[1], u[2]])
            }
        };
        let chart = seed_chart(field, b, &base, Direction::Forward, radius);
        if chart.dim() == 0 {
            return Err(FlowError::ZeroUnstableDim {
                label: b.label.clone(),
            });
        }
        let u = if chart.dim() == 2 && matches!(b.model, crate::fields::LocusModel::Point(_)) {
            // Evenly spaced with a random phase, so a circle of seeds is traced.
            let phase: f64 = rng.gen_range(0.0..1.0);
            let a = std::f64::consts::TAU * (out.len() as f64 + phase) / count as f64;
            vec![a.cos(), a.sin()]
        } else {
            random_unit(chart.dim(), &mut rng)
        };
        if let Some(c) = chart.inward_coords() {
            let dot: f64 = u.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                continue;
            }
        }
        out.push((chart.seed(field, &u), base));
    }
    Ok(out)
}

pub fn random_unit(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::fields::find_stationary_loci;

    #[test]
    fn height_flow_reaches_south_pole() {
        let f = catalog::s2_height();
        let loci = find_stationary_loci(&f, 3.0, 0).unwrap();
        let (lim, traj) = forward_limit(&f, &loci, &[1.0, 0.0, 0.0], &FlowOptions::default()).unwrap();
        assert!(lim.point[2] < -0.999_999);
        assert!(traj.f_drift() <= 1e-9);
        let (lim, _) = backward_limit(&f, &loci, &[1.0, 0.0, 0.0], &FlowOptions::default()).unwrap();
        assert!(lim.point[2] > 0.999_999);
        let still = integrate(&f, &[0.0, 0.0, -1.0], Direction::Forward, &FlowOptions::default()).unwrap();
        assert_eq!(still.samples.len(), 1);
    }

    #[test]
    fn cubic_limits() {
        let f = catalog::interval_cubic();
        let loci = find_stationary_loci(&f, 10.0, 0).unwrap();
        let o = FlowOptions::default();
        for x0 in [0.5, -0.5] {
            let (lim, _) = forward_limit(&f, &loci, &[x0], &o).unwrap();
            assert!(lim.point[0].abs() < 1e-6);
            let (lim, _) = backward_limit(&f, &loci, &[x0], &o).unwrap();
            assert!((lim.point[0].abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn unstable_seeds() {
        let f = catalog::s2_height();
        let loci = find_stationary_loci(&f, 3.0, 0).unwrap();
        let north = loci.iter().find(|l| l.index == 2).unwrap();
        let seeds = sample_unstable(&f, north, 1e-3, 64, 1).unwrap();
        assert_eq!(seeds.len(), 64);
        for s in &seeds {
            assert!((s[0].hypot(s[1]) - 1e-3).abs() < 1e-6);
        }
        let south = loci.iter().find(|l| l.index == 0).unwrap();
        assert!(matches!(
            sample_unstable(&f, south, 1e-3, 4, 1),
            Err(FlowError::ZeroUnstableDim { .. })
        ));
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let f = catalog::s2_height();
        let traj = integrate(&f, &[0.6, 0.0, 0.8], Direction::Forward, &FlowOptions::default()).unwrap();
        // Exact solution: polar angle θ with dθ/dt = sin θ along the meridian.
        let k = traj.times.len() / 2;
        let t = 0.5 * (traj.times[k] + traj.times[k + 1]);
        let p = traj.at(t);
        let th0 = 0.6f64.atan2(0.8);
        let th = 2.0 * ((th0 / 2.0).tan() * t.exp()).atan();
        assert!((p[2] - th.cos()).abs() < 1e-6, "{} vs {}", p[2], th.cos());
    }
}
