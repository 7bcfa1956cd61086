//! The constrained convex program, its Lagrangian, and the saddle operator.
//!
//! A [`Problem`] is `min f(x) subject to A x = b` with `f` either a convex
//! quadratic `½⟨x,Qx⟩ + ⟨c,x⟩` or a gradient oracle. It owns the Lagrangian
//! `L(x,λ) = f(x) + ⟨λ, Ax - b⟩`, the monotone saddle operator
//! `(x,λ) ↦ (∇f(x) + Aᵀλ, b - Ax)`, and its Tikhonov perturbation by
//! `+ ε(t)·(x,λ)`, which is `ε(t)`-strongly monotone.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::schedule::EpsilonSchedule;

/// Residual tolerance accepting a KKT solve as consistent.
pub const KKT_CONSISTENCY_TOL: f64 = 1e-8;
/// Singular-value-squared floor below which the reverse Lipschitz constant is
/// treated as absent.
pub const ALPHA_FLOOR: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Objective supplied through callbacks rather than matrices. The oracle is
/// trusted to be convex with a locally Lipschitz gradient; only the probe
/// check in [`Problem::spot_check_gradient`] enforces consistency.
#[derive(Clone)]
pub struct GradientOracle {
    pub f: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    pub grad: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub dim: usize,
    pub lipschitz_hint: Option<f64>,
}

/// Convex objective: dense quadratic or gradient oracle.
#[derive(Clone)]
pub enum Objective {
    Quadratic { q: DMatrix<f64>, c: DVector<f64> },
    Oracle(GradientOracle),
}

/// The constrained program `min f(x) : A x = b`. Immutable after
/// construction; all evaluations are pure, so a problem can be shared freely
/// across concurrent integrations.
#[derive(Clone)]
pub struct Problem {
    objective: Objective,
    a: DMatrix<f64>,
    b: DVector<f64>,
    id: String,
}

/// A primal-dual pair `(x, λ)` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

/// A computed saddle point with its operator residual. `alpha_lower_bound`
/// carries the certified reverse-Lipschitz constant when one exists.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub point: PrimalDualPoint,
    pub residual: f64,
    pub is_least_norm: bool,
    pub alpha_lower_bound: Option<f64>,
}

impl PrimalDualPoint {
    pub fn new(x: DVector<f64>, lambda: DVector<f64>) -> Result<Self> {
        if x.iter().chain(lambda.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "primal-dual point has non-finite entries".into(),
            ));
        }
        Ok(Self { x, lambda })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self { x: DVector::zeros(n), lambda: DVector::zeros(m) }
    }

    /// Split a stacked `(x, λ)` vector.
    pub fn from_stacked(v: &DVector<f64>, n: usize, m: usize) -> Result<Self> {
        if v.len() != n + m {
            return Err(Error::InvalidInput(format!(
                "stacked vector has length {}, expected {}",
                v.len(),
                n + m
            )));
        }
        Self::new(v.rows(0, n).into_owned(), v.rows(n, m).into_owned())
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.x.len() + self.lambda.len());
        v.rows_mut(0, self.x.len()).copy_from(&self.x);
        v.rows_mut(self.x.len(), self.lambda.len()).copy_from(&self.lambda);
        v
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.lambda.norm_squared()).sqrt()
    }

    pub fn distance_to(&self, other: &Self) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.lambda - &other.lambda).norm_squared())
            .sqrt()
    }
}

impl Problem {
    /// Quadratic program `min ½⟨x,Qx⟩ + ⟨c,x⟩ : Ax = b`. Validates that `Q`
    /// is symmetric and positive semi-definite and that dimensions agree.
    pub fn quadratic(
        q: DMatrix<f64>,
        c: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "Q must be square, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if c.len() != n {
            return Err(Error::InvalidInput(format!(
                "c has length {}, expected {n}",
                c.len()
            )));
        }
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > SYMMETRY_TOL * (1.0 + scale) {
                    return Err(Error::InvalidInput(format!(
                        "Q is not symmetric at ({i},{j}): {} vs {}",
                        q[(i, j)],
                        q[(j, i)]
                    )));
                }
            }
        }
        if n > 0 {
            let eig = q.clone().symmetric_eigen();
            if let Some(min) = eig.eigenvalues.iter().cloned().reduce(f64::min) {
                if min < -PSD_TOL * (1.0 + scale) {
                    return Err(Error::InvalidInput(format!(
                        "Q has negative eigenvalue {min:.3e}; objective is not convex"
                    )));
                }
            }
        }
        let id = format!("quadratic(n={n}, m={})", a.nrows());
        Self::with_constraints(Objective::Quadratic { q, c }, a, b, id)
    }

    /// Program with an objective given by callbacks. Only available through
    /// the library API; the config format is restricted to quadratics.
    pub fn from_oracle(oracle: GradientOracle, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let id = format!("oracle(n={}, m={})", oracle.dim, a.nrows());
        Self::with_constraints(Objective::Oracle(oracle), a, b, id)
    }

    fn with_constraints(
        objective: Objective,
        a: DMatrix<f64>,
        b: DVector<f64>,
        id: String,
    ) -> Result<Self> {
        let n = match &objective {
            Objective::Quadratic { q, .. } => q.nrows(),
            Objective::Oracle(o) => o.dim,
        };
        if a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "A has {} columns, expected {n}",
                a.ncols()
            )));
        }
        if b.len() != a.nrows() {
            return Err(Error::InvalidInput(format!(
                "b has length {}, expected {}",
                b.len(),
                a.nrows()
            )));
        }
        Ok(Self { objective, a, b, id })
    }

    /// The scalar saddle problem `min 0 : x = 1`, whose Lagrangian is the
    /// bilinear form `L(x, λ) = λ(x - 1)` with unique saddle point `(1, 0)`.
    pub fn bilinear_saddle_example() -> Self {
        let mut p = Self::quadratic(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .expect("static example is well-formed");
        p.id = "bilinear_saddle".into();
        p
    }

    pub fn primal_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn dual_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn constraint_rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.objective, Objective::Quadratic { .. })
    }

    fn check_dims(&self, z: &PrimalDualPoint) -> Result<()> {
        if z.x.len() != self.primal_dim() || z.lambda.len() != self.dual_dim() {
            return Err(Error::InvalidInput(format!(
                "point has dims ({}, {}), problem expects ({}, {})",
                z.x.len(),
                z.lambda.len(),
                self.primal_dim(),
                self.dual_dim()
            )));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        match &self.objective {
            Objective::Quadratic { q, c } => 0.5 * x.dot(&(q * x)) + c.dot(x),
            Objective::Oracle(o) => (o.f)(x),
        }
    }

    pub fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.objective {
            Objective::Quadratic { q, c } => q * x + c,
            Objective::Oracle(o) => (o.grad)(x),
        }
    }

    /// `L(x, λ) = f(x) + ⟨λ, Ax - b⟩`.
    pub fn lagrangian(&self, z: &PrimalDualPoint) -> Result<f64> {
        self.check_dims(z)?;
        let residual = &self.a * &z.x - &self.b;
        Ok(self.objective_value(&z.x) + z.lambda.dot(&residual))
    }

    /// `L(x, λ) + (ε(t)/2)(‖x‖² - ‖λ‖²)`, the strongly convex-concave
    /// regularization of the Lagrangian at time `t`.
    pub fn regularized_lagrangian(
        &self,
        schedule: &EpsilonSchedule,
        t: f64,
        z: &PrimalDualPoint,
    ) -> Result<f64> {
        let eps = schedule.eps(t)?;
        Ok(self.lagrangian(z)? + 0.5 * eps * (z.x.norm_squared() - z.lambda.norm_squared()))
    }

    /// The monotone saddle operator `(∇f(x) + Aᵀλ, b - Ax)`, stacked.
    pub fn saddle_operator(&self, z: &PrimalDualPoint) -> Result<DVector<f64>> {
        self.check_dims(z)?;
        let top = self.objective_gradient(&z.x) + self.a.transpose() * &z.lambda;
        let bottom = &self.b - &self.a * &z.x;
        let mut out = DVector::zeros(top.len() + bottom.len());
        out.rows_mut(0, top.len()).copy_from(&top);
        out.rows_mut(top.len(), bottom.len()).copy_from(&bottom);
        Ok(out)
    }

    /// The Tikhonov-perturbed operator: saddle operator plus `ε(t)·(x, λ)`.
    pub fn regularized_operator(
        &self,
        schedule: &EpsilonSchedule,
        t: f64,
        z: &PrimalDualPoint,
    ) -> Result<DVector<f64>> {
        let eps = schedule.eps(t)?;
        Ok(self.saddle_operator(z)? + eps * z.stacked())
    }

    /// Linear part of the affine saddle operator,
    /// `[[Q, Aᵀ], [-A, 0]]`; quadratic problems only.
    pub fn saddle_matrix(&self) -> Result<DMatrix<f64>> {
        let Objective::Quadratic { q, .. } = &self.objective else {
            return Err(Error::InvalidInput(
                "saddle matrix requires a quadratic objective".into(),
            ));
        };
        let (n, m) = (self.primal_dim(), self.dual_dim());
        let mut mat = DMatrix::zeros(n + m, n + m);
        mat.view_mut((0, 0), (n, n)).copy_from(q);
        mat.view_mut((0, n), (n, m)).copy_from(&self.a.transpose());
        mat.view_mut((n, 0), (m, n)).copy_from(&(-&self.a));
        Ok(mat)
    }

    /// Minimum-norm solution of the stationarity system
    /// `∇f(x) + Aᵀλ = 0, Ax = b`, i.e. the projection of the origin onto the
    /// saddle set. Quadratic problems only. Infeasible constraints and an
    /// empty multiplier set are reported as distinct errors.
    pub fn least_norm_saddle(&self) -> Result<SaddleSolution> {
        let Objective::Quadratic { q, c } = &self.objective else {
            return Err(Error::InvalidInput(
                "least-norm saddle computation requires a quadratic objective".into(),
            ));
        };
        let (n, m) = (self.primal_dim(), self.dual_dim());

        if m > 0 {
            let x_feas = min_norm_least_squares(&self.a, &self.b);
            let feas_residual = (&self.a * &x_feas - &self.b).norm();
            if feas_residual > KKT_CONSISTENCY_TOL * (1.0 + self.b.norm()) {
                return Err(Error::Infeasible(format!(
                    "best attainable constraint residual is {feas_residual:.3e}"
                )));
            }
        }

        // Stack stationarity over feasibility: [[Q, Aᵀ], [A, 0]] z = (-c, b).
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(q);
        kkt.view_mut((0, n), (n, m)).copy_from(&self.a.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&self.a);
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-c));
        rhs.rows_mut(n, m).copy_from(&self.b);

        let z = min_norm_least_squares(&kkt, &rhs);
        let kkt_residual = (&kkt * &z - &rhs).norm();
        if kkt_residual > KKT_CONSISTENCY_TOL * (1.0 + rhs.norm()) {
            return Err(Error::KktInconsistent(format!(
                "stationarity residual {kkt_residual:.3e} exceeds tolerance"
            )));
        }

        let point = PrimalDualPoint::from_stacked(&z, n, m)?;
        let residual = self.saddle_operator(&point)?.norm();
        Ok(SaddleSolution {
            point,
            residual,
            is_least_norm: true,
            alpha_lower_bound: self.certify_alpha()?,
        })
    }

    /// Certified constant for the reverse Lipschitz property
    /// `‖T(z) - T(w)‖² ≥ α ‖z - w‖²`: the squared smallest singular value of
    /// the affine operator's linear part. `None` when the constant is below
    /// [`ALPHA_FLOOR`] (the property fails). Quadratic problems only; for
    /// oracle objectives the property is user-asserted, not certified.
    pub fn certify_alpha(&self) -> Result<Option<f64>> {
        let mat = self.saddle_matrix()?;
        if mat.nrows() == 0 {
            return Ok(None);
        }
        let svd = mat.svd(false, false);
        let smin = svd
            .singular_values
            .iter()
            .cloned()
            .reduce(f64::min)
            .unwrap_or(0.0);
        let alpha = smin * smin;
        Ok(if alpha > ALPHA_FLOOR { Some(alpha) } else { None })
    }

    /// Probe-based consistency check of an oracle gradient against central
    /// finite differences of the objective. No-op for quadratics.
    pub fn spot_check_gradient(&self, probes: &[DVector<f64>]) -> Result<()> {
        if self.is_quadratic() {
            return Ok(());
        }
        let h0 = f64::EPSILON.powf(1.0 / 3.0);
        for x in probes {
            if x.len() != self.primal_dim() {
                return Err(Error::InvalidInput("probe has wrong dimension".into()));
            }
            let g = self.objective_gradient(x);
            let mut fd = DVector::zeros(x.len());
            for j in 0..x.len() {
                let h = h0 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                fd[j] = (self.objective_value(&xp) - self.objective_value(&xm)) / (2.0 * h);
            }
            let err = (&fd - &g).norm();
            if err > 1e-5 * (1.0 + g.norm()) {
                return Err(Error::InvalidInput(format!(
                    "oracle gradient deviates from finite differences by {err:.3e} at a probe"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Problem({})", self.id)
    }
}

/// Minimum-norm least-squares solution via SVD with a rank cutoff scaled to
/// the largest singular value.
fn min_norm_least_squares(mat: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return DVector::zeros(mat.ncols());
    }
    let svd = mat.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .reduce(f64::max)
        .unwrap_or(0.0);
    let cutoff = smax * (mat.nrows().max(mat.ncols()) as f64) * f64::EPSILON;
    svd.solve(rhs, cutoff.max(f64::MIN_POSITIVE))
        .expect("SVD solve with computed factors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::EpsilonSchedule;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn bilinear() -> Problem {
        Problem::bilinear_saddle_example()
    }

    fn point(x: &[f64], l: &[f64]) -> PrimalDualPoint {
        PrimalDualPoint::new(DVector::from_row_slice(x), DVector::from_row_slice(l)).unwrap()
    }

    #[test]
    fn lagrangian_values() {
        let p = bilinear();
        assert_relative_eq!(p.lagrangian(&point(&[2.0], &[3.0])).unwrap(), 3.0);
        assert_relative_eq!(p.lagrangian(&point(&[1.0], &[0.0])).unwrap(), 0.0);

        let quad = Problem::quadratic(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        assert_relative_eq!(quad.lagrangian(&point(&[2.0], &[1.0])).unwrap(), 3.0);
    }

    #[test]
    fn lagrangian_rejects_dimension_mismatch() {
        let p = bilinear();
        assert!(matches!(
            p.lagrangian(&point(&[1.0, 2.0], &[0.0])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn regularized_lagrangian_values() {
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 1.0).unwrap();
        // ε(1) = 1; symmetric point cancels the regularization.
        assert_abs_diff_eq!(
            p.regularized_lagrangian(&s, 1.0, &point(&[1.0], &[1.0])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            p.regularized_lagrangian(&s, 1.0, &point(&[0.0], &[0.0])).unwrap(),
            p.lagrangian(&point(&[0.0], &[0.0])).unwrap()
        );
        // ε(2) = 1/2 at z = (2, 0): L = 0 plus 0.25·4.
        assert_relative_eq!(
            p.regularized_lagrangian(&s, 2.0, &point(&[2.0], &[0.0])).unwrap(),
            1.0
        );
        assert!(matches!(
            p.regularized_lagrangian(&s, 0.5, &point(&[0.0], &[0.0])),
            Err(Error::TimeBeforeStart { .. })
        ));
    }

    #[test]
    fn saddle_operator_values() {
        let p = bilinear();
        let t = p.saddle_operator(&point(&[1.0], &[0.0])).unwrap();
        assert_abs_diff_eq!(t.norm(), 0.0);
        let t = p.saddle_operator(&point(&[0.0], &[0.0])).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 1.0]);

        // f = ½‖x‖² in R², A = I, b = 0: operator is (x + λ, -x).
        let quad = Problem::quadratic(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
        )
        .unwrap();
        let z = point(&[1.0, 1.0], &[0.0, 0.0]);
        let t = quad.saddle_operator(&z).unwrap();
        let expected = quad.saddle_matrix().unwrap() * z.stacked();
        assert_relative_eq!((t - expected).norm(), 0.0);
    }

    #[test]
    fn regularized_operator_values() {
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 1.0).unwrap();
        // ε(1) = 1.
        let t = p.regularized_operator(&s, 1.0, &point(&[1.0], &[0.0])).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 0.0]);
        let t = p.regularized_operator(&s, 1.0, &point(&[0.5], &[-0.5])).unwrap();
        assert_abs_diff_eq!(t.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn least_norm_saddle_on_the_bilinear_example() {
        let sol = bilinear().least_norm_saddle().unwrap();
        assert_relative_eq!(sol.point.x[0], 1.0, max_relative = 1e-12);
        assert_abs_diff_eq!(sol.point.lambda[0], 0.0, epsilon = 1e-12);
        assert!(sol.residual <= 1e-10);
        assert!(sol.is_least_norm);
        assert_relative_eq!(sol.alpha_lower_bound.unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn least_norm_saddle_picks_the_projection() {
        // f ≡ 0, A = [1 0], b = 1: solutions are (1, s) for any s, multiplier 0.
        let p = Problem::quadratic(
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        let sol = p.least_norm_saddle().unwrap();

        // Independent oracle: dense scan of the solution line.
        let mut best = (f64::INFINITY, f64::NAN);
        let mut s: f64 = -5.0;
        while s <= 5.0 {
            let norm = (1.0 + s * s).sqrt();
            if norm < best.0 {
                best = (norm, s);
            }
            s += 1e-3;
        }
        assert_relative_eq!(sol.point.x[0], 1.0, max_relative = 1e-10);
        assert_abs_diff_eq!(sol.point.x[1], best.1, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.point.lambda[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn least_norm_saddle_unconstrained() {
        let p = Problem::quadratic(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let sol = p.least_norm_saddle().unwrap();
        assert_abs_diff_eq!(sol.point.x.norm(), 0.0);
        assert_eq!(sol.point.lambda.len(), 0);
    }

    #[test]
    fn infeasible_and_inconsistent_systems_are_distinguished() {
        // Rows demand x = 0 and x = 1 simultaneously.
        let p = Problem::quadratic(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_row_slice(&[0.0, 1.0]),
        )
        .unwrap();
        assert!(matches!(p.least_norm_saddle(), Err(Error::Infeasible(_))));

        // Feasible (x free) but stationarity c + Aᵀλ = 0 unsolvable:
        // A = 0, c ≠ 0.
        let p = Problem::quadratic(
            DMatrix::zeros(1, 1),
            DVector::from_row_slice(&[1.0]),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
        )
        .unwrap();
        assert!(matches!(p.least_norm_saddle(), Err(Error::KktInconsistent(_))));
    }

    #[test]
    fn alpha_certificates() {
        assert_relative_eq!(
            bilinear().certify_alpha().unwrap().unwrap(),
            1.0,
            max_relative = 1e-12
        );

        let zero = Problem::quadratic(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
        )
        .unwrap();
        assert_eq!(zero.certify_alpha().unwrap(), None);

        // Q = 2, A = [1]: linear part [[2, 1], [-1, 0]]; its Gram matrix
        // [[5, 2], [2, 1]] has eigenvalues 3 ± 2√2, so α = 3 - 2√2.
        let p = Problem::quadratic(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::zeros(1),
        )
        .unwrap();
        let expected = 3.0 - 2.0 * 2.0f64.sqrt();
        assert_relative_eq!(p.certify_alpha().unwrap().unwrap(), expected, max_relative = 1e-10);
    }

    #[test]
    fn construction_rejects_bad_matrices() {
        // Asymmetric Q.
        assert!(Problem::quadratic(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .is_err());
        // Indefinite Q.
        assert!(Problem::quadratic(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .is_err());
        // Dimension mismatch.
        assert!(Problem::quadratic(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 2),
            DVector::zeros(1),
        )
        .is_err());
    }

    #[test]
    fn oracle_gradient_spot_check() {
        let good = Problem::from_oracle(
            GradientOracle {
                f: Arc::new(|x: &DVector<f64>| 0.25 * x.norm_squared().powi(2)),
                grad: Arc::new(|x: &DVector<f64>| x * x.norm_squared()),
                dim: 2,
                lipschitz_hint: None,
            },
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let probes = vec![
            DVector::from_row_slice(&[0.3, -1.2]),
            DVector::from_row_slice(&[2.0, 0.1]),
        ];
        good.spot_check_gradient(&probes).unwrap();

        let bad = Problem::from_oracle(
            GradientOracle {
                f: Arc::new(|x: &DVector<f64>| x.norm_squared()),
                grad: Arc::new(|x: &DVector<f64>| x.clone()), // off by a factor 2
                dim: 2,
                lipschitz_hint: None,
            },
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        assert!(bad.spot_check_gradient(&probes).is_err());
    }

    #[test]
    fn points_reject_non_finite_entries() {
        assert!(PrimalDualPoint::new(
            DVector::from_row_slice(&[f64::NAN]),
            DVector::zeros(0)
        )
        .is_err());
    }
}
