//! Linear model of coregionalization for three variables with one shared
//! exponential structure plus a nugget.

use nalgebra::{Matrix3, SymmetricEigen};

use super::empirical::{EmpiricalVariogram, EstimatorKind};
use super::model::ExponentialVariogramModel;
use crate::error::{GeoError, Result};

/// Number of variables in a coregionalization model.
pub const N_VARS: usize = 3;

/// Tolerance on the minimum eigenvalue of the coregionalization matrices.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Order of the cross entries accepted by [`fit_lmc`]: `(0,1)`, `(0,2)`, `(1,2)`.
pub const CROSS_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// `γij(h) = Bn[i,j] + Bs[i,j] (1 − exp(−θh))` for `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoregionalizationModel {
    pub theta: f64,
    pub b_nugget: Matrix3<f64>,
    pub b_structure: Matrix3<f64>,
}

pub fn min_eigenvalue(m: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Nearest PSD matrix in Frobenius norm: symmetrize and clip negative eigenvalues.
pub fn project_psd(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut eig = SymmetricEigen::new(symmetrize(m));
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    symmetrize(&eig.recompose())
}

impl CoregionalizationModel {
    /// Validates symmetry, `θ > 0` and positive semidefiniteness; eigenvalues in
    /// `[−1e-8, 0)` are clipped.
    pub fn new(theta: f64, b_nugget: Matrix3<f64>, b_structure: Matrix3<f64>) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(GeoError::InvalidModel(format!("theta {theta} must be > 0")));
        }
        let mut clean = [b_nugget, b_structure];
        for (name, m) in ["B_nugget", "B_structure"].iter().zip(clean.iter_mut()) {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(GeoError::InvalidModel(format!("{name} has non-finite entries")));
            }
            let asym = (*m - m.transpose()).abs().max();
            if asym > 1e-9 * (1.0 + m.abs().max()) {
                return Err(GeoError::InvalidModel(format!("{name} is not symmetric")));
            }
            let ev = min_eigenvalue(m);
            if ev < -PSD_TOLERANCE {
                return Err(GeoError::NotPositiveDefinite(format!(
                    "{name} has eigenvalue {ev:.3e}"
                )));
            }
            if ev < 0.0 {
                *m = project_psd(m);
            } else {
                *m = symmetrize(m);
            }
        }
        Ok(Self {
            theta,
            b_nugget: clean[0],
            b_structure: clean[1],
        })
    }

    /// Every variable with the same univariate model, pairwise structure
    /// scaled by the correlation matrix `R` (nuggets by `R` as well).
    pub fn intrinsic(model: &ExponentialVariogramModel, correlation: &Matrix3<f64>) -> Result<Self> {
        Self::new(
            model.theta,
            correlation * model.nugget,
            correlation * model.partial_sill,
        )
    }

    /// Independent variables with the given direct nuggets and sills.
    pub fn diagonal(theta: f64, nuggets: [f64; 3], sills: [f64; 3]) -> Result<Self> {
        Self::new(
            theta,
            Matrix3::from_diagonal(&nuggets.into()),
            Matrix3::from_diagonal(&sills.into()),
        )
    }

    pub fn gamma(&self, i: usize, j: usize, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.b_nugget[(i, j)] + self.b_structure[(i, j)] * (1.0 - (-self.theta * h).exp())
        }
    }

    /// `Cij(h) = Bn[i,j]·1(h = 0) + Bs[i,j] exp(−θh)`.
    pub fn covariance(&self, i: usize, j: usize, h: f64) -> f64 {
        let s = self.b_structure[(i, j)] * (-self.theta * h.max(0.0)).exp();
        if h <= 0.0 {
            s + self.b_nugget[(i, j)]
        } else {
            s
        }
    }

    pub fn structural_covariance(&self, i: usize, j: usize, h: f64) -> f64 {
        self.b_structure[(i, j)] * (-self.theta * h.max(0.0)).exp()
    }

    /// Direct model of variable `i`.
    pub fn direct(&self, i: usize) -> Result<ExponentialVariogramModel> {
        ExponentialVariogramModel::new(self.b_nugget[(i, i)].max(0.0), self.b_structure[(i, i)], self.theta)
    }

    /// Structural correlation `Bs[i,j] / sqrt(Bs[i,i] Bs[j,j])`.
    pub fn structural_correlation(&self, i: usize, j: usize) -> f64 {
        let d = (self.b_structure[(i, i)] * self.b_structure[(j, j)]).sqrt();
        if d > 0.0 {
            self.b_structure[(i, j)] / d
        } else {
            0.0
        }
    }

    pub fn is_psd(&self) -> bool {
        min_eigenvalue(&self.b_nugget) >= -PSD_TOLERANCE && min_eigenvalue(&self.b_structure) >= -PSD_TOLERANCE
    }
}

pub fn model_gamma_lmc(lmc: &CoregionalizationModel, i: usize, j: usize, h: f64) -> f64 {
    lmc.gamma(i, j, h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmcOptions {
    pub allow_nugget: bool,
    /// θ is searched over `[θ0 / span, θ0 · span]` on a log grid.
    pub theta_span: f64,
    pub grid_points: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LmcOptions {
    fn default() -> Self {
        Self {
            allow_nugget: true,
            theta_span: 30.0,
            grid_points: 61,
            max_iterations: 500,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmcFit {
    pub model: CoregionalizationModel,
    pub converged: bool,
    /// Alternating-projection sweeps summed over all θ evaluations of the final refinement.
    pub iterations: usize,
    pub objective: f64,
}

/// One entry of the coregionalization fit.
enum Target {
    Empty,
    /// Fit `γ = bn + bs·(1 − e^{−θh})`.
    Variogram { h: Vec<f64>, y: Vec<f64>, w: Vec<f64> },
    /// Fit `C = bs·e^{−θh}` (heterotopic cross entries, no nugget).
    Covariance { h: Vec<f64>, y: Vec<f64>, w: Vec<f64> },
}

impl Target {
    fn from_empirical(emp: &EmpiricalVariogram) -> Self {
        let bins: Vec<_> = emp.nonempty_bins().filter(|b| b.lag_center > 0.0).collect();
        if bins.is_empty() {
            return Target::Empty;
        }
        let h: Vec<f64> = bins.iter().map(|b| b.lag_center).collect();
        let w: Vec<f64> = bins.iter().map(|b| b.n_pairs as f64 / (b.lag_center * b.lag_center)).collect();
        if emp.kind == EstimatorKind::CrossHeterotopic {
            let y = bins.iter().map(|b| b.cross_covariance.unwrap_or(0.0)).collect();
            Target::Covariance { h, y, w }
        } else {
            let y = bins.iter().map(|b| b.gamma.unwrap_or(0.0)).collect();
            Target::Variogram { h, y, w }
        }
    }

    fn weight_total(&self) -> f64 {
        match self {
            Target::Empty => 0.0,
            Target::Variogram { w, .. } | Target::Covariance { w, .. } => w.iter().sum(),
        }
    }

    fn rescale_weights(&mut self, factor: f64) {
        if let Target::Variogram { w, .. } | Target::Covariance { w, .. } = self {
            w.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn residual(&self, theta: f64, bn: f64, bs: f64) -> f64 {
        match self {
            Target::Empty => 0.0,
            Target::Variogram { h, y, w } => h
                .iter()
                .zip(y)
                .zip(w)
                .map(|((&h, &y), &w)| {
                    let r = y - bn - bs * (1.0 - (-theta * h).exp());
                    w * r * r
                })
                .sum(),
            Target::Covariance { h, y, w } => h
                .iter()
                .zip(y)
                .zip(w)
                .map(|((&h, &y), &w)| {
                    let r = y - bs * (-theta * h).exp();
                    w * r * r
                })
                .sum(),
        }
    }

    /// Unconstrained WLS estimate of `(bn, bs)`.
    fn solve(&self, theta: f64, allow_nugget: bool) -> (f64, f64) {
        match self {
            Target::Empty => (0.0, 0.0),
            Target::Covariance { h, y, w } => {
                let (mut num, mut den) = (0.0, 0.0);
                for ((&h, &y), &w) in h.iter().zip(y).zip(w) {
                    let g = (-theta * h).exp();
                    num += w * g * y;
                    den += w * g * g;
                }
                (0.0, if den > 0.0 { num / den } else { 0.0 })
            }
            Target::Variogram { h, y, w } => {
                let (mut s0, mut s1, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ((&h, &y), &w) in h.iter().zip(y).zip(w) {
                    let f = 1.0 - (-theta * h).exp();
                    s0 += w;
                    s1 += w * f;
                    s11 += w * f * f;
                    t0 += w * y;
                    t1 += w * f * y;
                }
                if !allow_nugget {
                    return (0.0, if s11 > 0.0 { t1 / s11 } else { 0.0 });
                }
                let det = s0 * s11 - s1 * s1;
                if det.abs() <= 1e-14 * s0 * s11 {
                    return (0.0, if s11 > 0.0 { t1 / s11 } else { 0.0 });
                }
                ((s11 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det)
            }
        }
    }

    /// WLS estimate of `bn` given `bs`.
    fn solve_nugget(&self, theta: f64, bs: f64) -> f64 {
        match self {
            Target::Variogram { h, y, w } => {
                let (mut num, mut den) = (0.0, 0.0);
                for ((&h, &y), &w) in h.iter().zip(y).zip(w) {
                    num += w * (y - bs * (1.0 - (-theta * h).exp()));
                    den += w;
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// WLS estimate of `bs` given `bn`.
    fn solve_structure(&self, theta: f64, bn: f64) -> f64 {
        match self {
            Target::Empty => 0.0,
            Target::Covariance { .. } => self.solve(theta, false).1,
            Target::Variogram { h, y, w } => {
                let (mut num, mut den) = (0.0, 0.0);
                for ((&h, &y), &w) in h.iter().zip(y).zip(w) {
                    let f = 1.0 - (-theta * h).exp();
                    num += w * f * (y - bn);
                    den += w * f * f;
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
        }
    }
}

struct Problem {
    /// Entry `(i, j)`, `i <= j`, row-major upper triangle.
    targets: Vec<((usize, usize), Target)>,
    options: LmcOptions,
}

struct Solved {
    bn: Matrix3<f64>,
    bs: Matrix3<f64>,
    objective: f64,
    sweeps: usize,
    converged: bool,
}

impl Problem {
    fn objective(&self, theta: f64, bn: &Matrix3<f64>, bs: &Matrix3<f64>) -> f64 {
        self.targets
            .iter()
            .map(|((i, j), t)| t.residual(theta, bn[(*i, *j)], bs[(*i, *j)]))
            .sum()
    }

    fn set(m: &mut Matrix3<f64>, i: usize, j: usize, v: f64) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }

    /// PSD-constrained fit of both matrices at fixed θ by alternating
    /// entrywise WLS updates and eigenvalue clipping.
    fn solve_at(&self, theta: f64) -> Solved {
        let allow = self.options.allow_nugget;
        let mut bn = Matrix3::zeros();
        let mut bs = Matrix3::zeros();
        for ((i, j), t) in &self.targets {
            let (n, s) = t.solve(theta, allow);
            Self::set(&mut bn, *i, *j, n);
            Self::set(&mut bs, *i, *j, s);
        }
        let unconstrained_psd = min_eigenvalue(&bn) >= 0.0 && min_eigenvalue(&bs) >= 0.0;
        if unconstrained_psd {
            let objective = self.objective(theta, &bn, &bs);
            return Solved {
                bn,
                bs,
                objective,
                sweeps: 0,
                converged: true,
            };
        }
        bn = project_psd(&bn);
        bs = project_psd(&bs);
        let mut f = self.objective(theta, &bn, &bs);
        let mut best = (bn, bs, f);
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < self.options.max_iterations {
            sweeps += 1;
            if allow {
                for ((i, j), t) in &self.targets {
                    Self::set(&mut bn, *i, *j, t.solve_nugget(theta, bs[(*i, *j)]));
                }
                bn = project_psd(&bn);
            }
            for ((i, j), t) in &self.targets {
                Self::set(&mut bs, *i, *j, t.solve_structure(theta, bn[(*i, *j)]));
            }
            bs = project_psd(&bs);
            let g = self.objective(theta, &bn, &bs);
            if g < best.2 {
                best = (bn, bs, g);
            }
            let change = (f - g).abs() / f.abs().max(1e-300);
            f = g;
            if change < self.options.tolerance {
                converged = true;
                break;
            }
        }
        Solved {
            bn: best.0,
            bs: best.1,
            objective: best.2,
            sweeps,
            converged,
        }
    }
}

/// Fits a three-variable LMC with a shared θ.
///
/// `direct[i]` is the variogram of variable `i`; `cross` follows
/// [`CROSS_PAIRS`]. Cross entries estimated heterotopically are fitted on
/// their cross-covariances without a nugget; entries with no pairs are 0.
/// For each trial θ the matrices are fitted by WLS (weights `n/h²`) and
/// projected onto the PSD cone, alternating until the objective settles;
/// θ itself is chosen by a log-grid search over `[θ0/30, 30·θ0]` refined by
/// golden section on the profiled objective.
pub fn fit_lmc(direct: &[EmpiricalVariogram; 3], cross: &[EmpiricalVariogram; 3], initial_theta: f64) -> Result<LmcFit> {
    fit_lmc_with(direct, cross, initial_theta, &LmcOptions::default())
}

pub fn fit_lmc_with(
    direct: &[EmpiricalVariogram; 3],
    cross: &[EmpiricalVariogram; 3],
    initial_theta: f64,
    options: &LmcOptions,
) -> Result<LmcFit> {
    if !(initial_theta.is_finite() && initial_theta > 0.0) {
        return Err(GeoError::InvalidModel(format!("initial theta {initial_theta} must be > 0")));
    }
    let reference = &direct[0];
    for (k, v) in direct.iter().chain(cross.iter()).enumerate() {
        if !reference.same_binning(v) {
            return Err(GeoError::IncompatibleBins(format!(
                "variogram {k} does not share the lag classes of variogram 0"
            )));
        }
    }
    for (i, d) in direct.iter().enumerate() {
        if d.n_nonempty() < 3 {
            return Err(GeoError::InsufficientData(format!(
                "direct variogram {i} has {} non-empty bins, need 3",
                d.n_nonempty()
            )));
        }
    }
    let mut targets: Vec<((usize, usize), Target)> = Vec::with_capacity(6);
    for (i, d) in direct.iter().enumerate() {
        targets.push(((i, i), Target::from_empirical(d)));
    }
    for (&(i, j), c) in CROSS_PAIRS.iter().zip(cross.iter()) {
        targets.push(((i, j), Target::from_empirical(c)));
    }
    // normalise weights per entry so no single variogram dominates by pair count
    for (_, t) in targets.iter_mut() {
        let total = t.weight_total();
        if total > 0.0 {
            t.rescale_weights(1.0 / total);
        }
    }
    let problem = Problem {
        targets,
        options: *options,
    };

    let n = options.grid_points.max(3);
    let lo = (initial_theta / options.theta_span).ln();
    let hi = (initial_theta * options.theta_span).ln();
    let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let profile = |u: f64| problem.solve_at(u.exp()).objective;
    let values: Vec<f64> = grid.iter().map(|&u| profile(u)).collect();
    let k_best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);

    let mut a = grid[k_best.saturating_sub(1)];
    let mut b = grid[(k_best + 1).min(n - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = profile(c);
    let mut fd = profile(d);
    let mut golden_converged = false;
    for _ in 0..options.max_iterations {
        if (b - a).abs() < 1e-10 {
            golden_converged = true;
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = profile(d);
        }
    }
    let mut theta_u = 0.5 * (a + b);
    let mut best = problem.solve_at(theta_u.exp());
    if values[k_best] < best.objective {
        theta_u = grid[k_best];
        best = problem.solve_at(theta_u.exp());
    }
    let at_edge = k_best == 0 || k_best == n - 1;
    let theta = theta_u.exp();
    let bn = project_psd(&best.bn);
    let bs = project_psd(&best.bs);
    let model = CoregionalizationModel::new(theta, bn, bs)?;
    if !model.is_psd() {
        return Err(GeoError::NotPositiveDefinite("fitted coregionalization matrices".into()));
    }
    Ok(LmcFit {
        model,
        converged: golden_converged && best.converged && !at_edge,
        iterations: best.sweeps,
        objective: problem.objective(theta, &model.b_nugget, &model.b_structure),
    })
}
