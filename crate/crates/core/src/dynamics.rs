//! Rigid manipulator dynamics `M(q)q̈ + C(q,q̇)q̇ + Fq̇ + g(q) = Hu`.
//!
//! The Coriolis/centrifugal term is stored as quadratic forms: the i-th
//! component of `C(q,v)v` equals `vᵀNᵢ(q)v` with every `Nᵢ(q)` symmetric.
//! Friction is diagonal and viscous.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, symmetric_eigenvalues, Lu, Matrix};
use crate::scalar::Real;

/// Inertia solves whose reciprocal condition number falls below this are
/// treated as a broken model rather than attempted.
pub const INERTIA_RCOND_GUARD: f64 = 1e-12;

/// Feasible set of one joint coordinate.
///
/// Bound estimation needs a compact set to sample. Revolute joints whose
/// coordinate enters the model only through trigonometric terms should be
/// declared [`JointDomain::Periodic`]; one period then covers all of `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum JointDomain<T> {
    Interval { lo: T, hi: T },
    Periodic { period: T },
    Unbounded,
}

impl<T: Real> JointDomain<T> {
    pub fn revolute() -> Self {
        Self::Periodic {
            period: T::lit(2.0) * T::PI(),
        }
    }

    pub fn contains(&self, x: T) -> bool {
        match *self {
            Self::Interval { lo, hi } => x >= lo && x <= hi,
            Self::Periodic { .. } | Self::Unbounded => x.is_finite(),
        }
    }

    /// Range used when sampling the joint, `None` when the joint cannot be
    /// sampled.
    pub fn sample_range(&self) -> Option<(T, T)> {
        match *self {
            Self::Interval { lo, hi } => Some((lo, hi)),
            Self::Periodic { period } => Some((T::zero(), period)),
            Self::Unbounded => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Interval { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => Err(Error::invalid(
                format!("joint interval [{lo}, {hi}] is empty or not finite"),
            )),
            Self::Periodic { period } if !(period > T::zero()) || !period.is_finite() => {
                Err(Error::invalid(format!("joint period {period} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Configuration-dependent parts of a rigid manipulator model.
pub trait RigidDynamics<T: Real>: Debug + Send + Sync {
    fn dof(&self) -> usize;

    /// `M(q)`, symmetric positive definite on the feasible set.
    fn inertia(&self, q: &[T]) -> Matrix<T>;

    /// `[N₁(q), …, Nₙ(q)]`, each symmetric.
    fn coriolis_forms(&self, q: &[T]) -> Vec<Matrix<T>>;

    /// `g(q)`.
    fn gravity(&self, q: &[T]) -> Vec<T>;

    /// `C(q,v)v`. The default goes through the quadratic forms; overrides
    /// must agree with it to rounding.
    fn coriolis_vector(&self, q: &[T], v: &[T]) -> Vec<T> {
        self.coriolis_forms(q).iter().map(|n| n.quadratic_form(v)).collect()
    }
}

/// A manipulator model: rigid dynamics plus friction, input map, feasible
/// set and optional a-priori bounds `M₀ ≥ ‖M⁻¹(q)‖`, `N̂ᵢ ≥ ‖Nᵢ(q)‖`.
#[derive(Debug, Clone)]
pub struct ManipulatorModel<T> {
    name: String,
    dynamics: Arc<dyn RigidDynamics<T>>,
    friction: Vec<T>,
    input_matrix: Matrix<T>,
    domain: Vec<JointDomain<T>>,
    m0_bound: Option<T>,
    ni_bounds: Option<Vec<T>>,
}

impl<T: Real> ManipulatorModel<T> {
    /// `friction` holds the diagonal of `F`; `input_matrix` is `H` (n×m).
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn RigidDynamics<T>>,
        friction: Vec<T>,
        input_matrix: Matrix<T>,
        domain: Vec<JointDomain<T>>,
    ) -> Result<Self> {
        let n = dynamics.dof();
        if n == 0 {
            return Err(Error::invalid("model must have at least one joint"));
        }
        Error::check_len("friction diagonal", n, friction.len())?;
        Error::check_len("input matrix rows", n, input_matrix.rows())?;
        Error::check_len("joint domain list", n, domain.len())?;
        if input_matrix.cols() == 0 {
            return Err(Error::invalid("input matrix must have at least one column"));
        }
        if let Some(f) = friction.iter().find(|f| !(**f >= T::zero()) || !f.is_finite()) {
            return Err(Error::invalid(format!(
                "friction coefficients must be finite and nonnegative, got {f}"
            )));
        }
        for d in &domain {
            d.validate()?;
        }
        Ok(Self {
            name: name.into(),
            dynamics,
            friction,
            input_matrix,
            domain,
            m0_bound: None,
            ni_bounds: None,
        })
    }

    pub fn with_m0_bound(mut self, m0: T) -> Result<Self> {
        if !(m0 > T::zero()) {
            return Err(Error::invalid("M0 bound must be positive"));
        }
        self.m0_bound = Some(m0);
        Ok(self)
    }

    pub fn with_ni_bounds(mut self, bounds: Vec<T>) -> Result<Self> {
        Error::check_len("Coriolis form bounds", self.dof(), bounds.len())?;
        if bounds.iter().any(|b| !(*b >= T::zero())) {
            return Err(Error::invalid("Coriolis form bounds must be nonnegative"));
        }
        self.ni_bounds = Some(bounds);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn dof(&self) -> usize {
        self.dynamics.dof()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_matrix.cols()
    }

    pub fn dynamics(&self) -> &dyn RigidDynamics<T> {
        &*self.dynamics
    }

    pub fn inertia(&self, q: &[T]) -> Matrix<T> {
        self.dynamics.inertia(q)
    }

    pub fn coriolis_forms(&self, q: &[T]) -> Vec<Matrix<T>> {
        self.dynamics.coriolis_forms(q)
    }

    pub fn gravity(&self, q: &[T]) -> Vec<T> {
        self.dynamics.gravity(q)
    }

    /// Diagonal of the viscous friction matrix.
    pub fn friction(&self) -> &[T] {
        &self.friction
    }

    pub fn friction_matrix(&self) -> Matrix<T> {
        Matrix::from_diagonal(&self.friction)
    }

    /// `‖F‖`; for a diagonal matrix the largest entry magnitude.
    pub fn friction_norm(&self) -> T {
        self.friction.iter().fold(T::zero(), |m, f| m.max(f.abs()))
    }

    pub fn input_matrix(&self) -> &Matrix<T> {
        &self.input_matrix
    }

    pub fn domain(&self) -> &[JointDomain<T>] {
        &self.domain
    }

    pub fn m0_bound(&self) -> Option<T> {
        self.m0_bound
    }

    pub fn ni_bounds(&self) -> Option<&[T]> {
        self.ni_bounds.as_deref()
    }

    /// Whether `q` lies in the declared feasible set.
    pub fn in_domain(&self, q: &[T]) -> bool {
        q.len() == self.dof() && self.domain.iter().zip(q).all(|(d, &x)| d.contains(x))
    }

    /// Solves `M(q) x = rhs` with the conditioning guard.
    pub fn solve_inertia(&self, q: &[T], rhs: &[T]) -> Result<Vec<T>> {
        Ok(self.factor_inertia(q)?.solve(rhs))
    }

    /// `M⁻¹(q)`, guarded like [`Self::solve_inertia`].
    pub fn inverse_inertia(&self, q: &[T]) -> Result<Matrix<T>> {
        Ok(self.factor_inertia(q)?.inverse())
    }

    fn factor_inertia(&self, q: &[T]) -> Result<Lu<T>> {
        let violation = |rcond: f64| Error::ModelViolation {
            q: q.iter().map(|x| x.as_f64()).collect(),
            rcond,
        };
        let lu = Lu::new(&self.inertia(q)).map_err(|_| violation(0.0))?;
        let rcond = lu.rcond();
        let guard = T::lit(INERTIA_RCOND_GUARD).max(T::epsilon());
        if !(rcond >= guard) {
            return Err(violation(rcond.as_f64()));
        }
        Ok(lu)
    }
}

/// Joint positions and velocities of the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState<T> {
    pub q: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> PlantState<T> {
    pub fn new(q: Vec<T>, v: Vec<T>) -> Result<Self> {
        Error::check_len("plant velocity", q.len(), v.len())?;
        if q.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("plant state entries must be finite"));
        }
        Ok(Self { q, v })
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// `C(q,v)v`, component i equal to `vᵀNᵢ(q)v`.
pub fn coriolis_vector<T: Real>(model: &ManipulatorModel<T>, q: &[T], v: &[T]) -> Result<Vec<T>> {
    Error::check_len("q", model.dof(), q.len())?;
    Error::check_len("v", model.dof(), v.len())?;
    Ok(model.dynamics.coriolis_vector(q, v))
}

/// `∂(C(q,v)v)/∂v = 2 [vᵀN₁(q); …; vᵀNₙ(q)]`.
pub fn coriolis_jacobian<T: Real>(model: &ManipulatorModel<T>, q: &[T], v: &[T]) -> Result<Matrix<T>> {
    Error::check_len("q", model.dof(), q.len())?;
    Error::check_len("v", model.dof(), v.len())?;
    let n = model.dof();
    let two = T::lit(2.0);
    let forms = model.coriolis_forms(q);
    let mut jac = Matrix::zeros(n, n);
    for (i, form) in forms.iter().enumerate() {
        // Nᵢ symmetric, so vᵀNᵢ = (Nᵢv)ᵀ.
        let row = form.mul_vec(v);
        for j in 0..n {
            jac[(i, j)] = two * row[j];
        }
    }
    Ok(jac)
}

/// Right-hand side of the plant in state-space form:
/// `(q̇, v̇) = (v, −M⁻¹(q)(C(q,v)v + Fv + g(q) − Hu))`.
pub fn plant_derivative<T: Real>(
    model: &ManipulatorModel<T>,
    state: &PlantState<T>,
    u: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let accel = generalized_acceleration(model, &state.q, &state.v, &state.v, u)?;
    Ok((state.v.clone(), accel))
}

/// `−M⁻¹(q)(C(q,w)w + Fv + g(q) − Hu)` with the Coriolis argument `w` and the
/// friction argument `v` kept separate; the observer saturates only `w`.
pub(crate) fn generalized_acceleration<T: Real>(
    model: &ManipulatorModel<T>,
    q: &[T],
    coriolis_arg: &[T],
    friction_arg: &[T],
    u: &[T],
) -> Result<Vec<T>> {
    let n = model.dof();
    Error::check_len("q", n, q.len())?;
    Error::check_len("v", n, friction_arg.len())?;
    Error::check_len("u", model.input_dim(), u.len())?;
    let coriolis = model.dynamics.coriolis_vector(q, coriolis_arg);
    let gravity = model.gravity(q);
    let hu = model.input_matrix.mul_vec(u);
    let rhs: Vec<T> = (0..n)
        .map(|i| coriolis[i] + model.friction[i] * friction_arg[i] + gravity[i] - hu[i])
        .collect();
    let x = model.solve_inertia(q, &rhs)?;
    Ok(x.into_iter().map(|a| -a).collect())
}

/// Inertial parameters of the Pendubot in the lumped form
/// `π₁ … π₅` (V·s²/rad and V·s²/m) plus the gravitational acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendubotParams<T> {
    pub pi: [T; 5],
    pub g0: T,
}

impl<T: Real> Default for PendubotParams<T> {
    fn default() -> Self {
        Self {
            pi: [0.0308, 0.0106, 0.0095, 0.2086, 0.0630].map(T::lit),
            g0: T::lit(9.81),
        }
    }
}

/// Two-link Pendubot: shoulder actuated, elbow passive, moving in a vertical
/// plane. `q₁` is measured from the horizontal, `q₂` relative to link 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PendubotDynamics<T> {
    pub params: PendubotParams<T>,
}

impl<T: Real> PendubotDynamics<T> {
    /// The Coriolis matrix in its usual (non-unique) factorization,
    /// `C = π₃ sin q₂ [[−q̇₂, −q̇₂ − q̇₁], [q̇₁, 0]]`.
    pub fn coriolis_matrix(&self, q: &[T], qdot: &[T]) -> Matrix<T> {
        let h = self.params.pi[2] * q[1].sin();
        Matrix::from_rows(&[[-h * qdot[1], -h * qdot[1] - h * qdot[0]], [h * qdot[0], T::zero()]])
    }
}

impl<T: Real> RigidDynamics<T> for PendubotDynamics<T> {
    fn dof(&self) -> usize {
        2
    }

    fn inertia(&self, q: &[T]) -> Matrix<T> {
        let [p1, p2, p3, _, _] = self.params.pi;
        let c2 = q[1].cos();
        let two = T::lit(2.0);
        let off = p2 + p3 * c2;
        Matrix::from_rows(&[[p1 + p2 + two * p3 * c2, off], [off, p2]])
    }

    // C(q,v)v = π₃ sin q₂ (−2v₁v₂ − v₂², v₁²), symmetrized into
    // N₁ = −π₃ sin q₂ [[0,1],[1,1]], N₂ = π₃ sin q₂ [[1,0],[0,0]].
    fn coriolis_forms(&self, q: &[T]) -> Vec<Matrix<T>> {
        let h = self.params.pi[2] * q[1].sin();
        let z = T::zero();
        vec![
            Matrix::from_rows(&[[z, -h], [-h, -h]]),
            Matrix::from_rows(&[[h, z], [z, z]]),
        ]
    }

    fn gravity(&self, q: &[T]) -> Vec<T> {
        let [_, _, _, p4, p5] = self.params.pi;
        let g0 = self.params.g0;
        let c12 = (q[0] + q[1]).cos();
        vec![p4 * g0 * q[0].cos() + p5 * g0 * c12, p5 * g0 * c12]
    }

    fn coriolis_vector(&self, q: &[T], v: &[T]) -> Vec<T> {
        let h = self.params.pi[2] * q[1].sin();
        let two = T::lit(2.0);
        vec![-h * (two * v[0] * v[1] + v[1] * v[1]), h * v[0] * v[0]]
    }
}

/// Pendubot with the default parameters, no friction, the input acting on
/// the shoulder only, both joints revolute.
pub fn pendubot<T: Real>() -> ManipulatorModel<T> {
    pendubot_with(PendubotParams::default(), vec![T::zero(); 2]).expect("built-in Pendubot parameters are valid")
}

pub fn pendubot_with<T: Real>(params: PendubotParams<T>, friction: Vec<T>) -> Result<ManipulatorModel<T>> {
    let [p1, p2, p3, _, _] = params.pi;
    // det M = π₁π₂ − π₃²cos²q₂ must stay positive for every q₂.
    if !(p2 > T::zero()) || !(p1 * p2 > p3 * p3) {
        return Err(Error::invalid(
            "Pendubot parameters must satisfy π₂ > 0 and π₁π₂ > π₃² (positive-definite inertia)",
        ));
    }
    ManipulatorModel::new(
        "pendubot",
        Arc::new(PendubotDynamics { params }),
        friction,
        Matrix::from_rows(&[[T::one()], [T::zero()]]),
        vec![JointDomain::revolute(); 2],
    )
}

/// Configuration-independent inertia with no Coriolis or gravity terms:
/// `M q̈ + F q̇ = H u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantInertia<T> {
    pub inertia: Matrix<T>,
}

impl<T: Real> RigidDynamics<T> for ConstantInertia<T> {
    fn dof(&self) -> usize {
        self.inertia.rows()
    }

    fn inertia(&self, _q: &[T]) -> Matrix<T> {
        self.inertia.clone()
    }

    fn coriolis_forms(&self, _q: &[T]) -> Vec<Matrix<T>> {
        let n = self.dof();
        vec![Matrix::zeros(n, n); n]
    }

    fn gravity(&self, _q: &[T]) -> Vec<T> {
        vec![T::zero(); self.dof()]
    }

    fn coriolis_vector(&self, _q: &[T], _v: &[T]) -> Vec<T> {
        vec![T::zero(); self.dof()]
    }
}

/// Fully actuated point-mass style model with constant inertia.
pub fn constant_inertia_model<T: Real>(inertia: Matrix<T>, friction: Vec<T>) -> Result<ManipulatorModel<T>> {
    if !inertia.is_square() {
        return Err(Error::dimension("inertia columns", inertia.rows(), inertia.cols()));
    }
    let n = inertia.rows();
    ManipulatorModel::new(
        "constant-inertia",
        Arc::new(ConstantInertia { inertia }),
        friction,
        Matrix::identity(n),
        vec![JointDomain::Unbounded; n],
    )
}

/// Per-sample measurements taken by [`validate_properties`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCheck<T> {
    pub q: Vec<T>,
    pub inertia_asymmetry: T,
    pub inertia_min_eigenvalue: T,
    pub inverse_inertia_norm: T,
    pub coriolis_asymmetry: Vec<T>,
    pub coriolis_norms: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum PropertyViolation<T> {
    /// Sample lies outside the declared feasible set.
    OutsideDomain {
        sample: usize,
    },
    InertiaAsymmetric {
        sample: usize,
        asymmetry: T,
    },
    /// Invertibility (and positive definiteness) of `M(q)` fails.
    InertiaNotPositiveDefinite {
        sample: usize,
        min_eigenvalue: T,
    },
    InverseInertiaBound {
        sample: usize,
        norm: T,
        bound: T,
    },
    CoriolisAsymmetric {
        sample: usize,
        form: usize,
        asymmetry: T,
    },
    CoriolisBound {
        sample: usize,
        form: usize,
        norm: T,
        bound: T,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport<T> {
    pub samples: Vec<SampleCheck<T>>,
    pub violations: Vec<PropertyViolation<T>>,
    /// Largest `‖M⁻¹(q)‖` seen; an empirical `M₀`.
    pub max_inverse_inertia_norm: T,
    /// Largest `‖Nᵢ(q)‖` seen per form; empirical `N̂ᵢ`.
    pub max_coriolis_norms: Vec<T>,
}

impl<T> ValidationReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the structural model properties at every sample: `M(q)` symmetric
/// positive definite, `‖M⁻¹(q)‖ ≤ M₀`, `Nᵢ(q)` symmetric with
/// `‖Nᵢ(q)‖ ≤ N̂ᵢ`. Bounds are only checked when the model declares them.
pub fn validate_properties<T: Real>(model: &ManipulatorModel<T>, q_samples: &[Vec<T>]) -> Result<ValidationReport<T>> {
    if q_samples.is_empty() {
        return Err(Error::invalid("at least one configuration sample is required"));
    }
    let n = model.dof();
    let sym_tol = T::lit(1e3) * T::epsilon();
    let mut samples = Vec::with_capacity(q_samples.len());
    let mut violations = Vec::new();
    let mut max_inv = T::zero();
    let mut max_forms = vec![T::zero(); n];

    for (idx, q) in q_samples.iter().enumerate() {
        Error::check_len("configuration sample", n, q.len())?;
        if !model.in_domain(q) {
            violations.push(PropertyViolation::OutsideDomain { sample: idx });
        }
        let m = model.inertia(q);
        let scale = m.max_abs().max(T::min_positive_value());
        let asym = m.asymmetry();
        if asym > sym_tol * scale {
            violations.push(PropertyViolation::InertiaAsymmetric {
                sample: idx,
                asymmetry: asym,
            });
        }
        let min_eig = symmetric_eigenvalues(&m)[0];
        let inv_norm = match model.inverse_inertia(q) {
            Ok(inv) => operator_norm(&inv),
            Err(_) => T::infinity(),
        };
        if !(min_eig > T::zero()) || !inv_norm.is_finite() {
            violations.push(PropertyViolation::InertiaNotPositiveDefinite {
                sample: idx,
                min_eigenvalue: min_eig,
            });
        }
        max_inv = max_inv.max(inv_norm);
        if let Some(bound) = model.m0_bound {
            if inv_norm > bound {
                violations.push(PropertyViolation::InverseInertiaBound {
                    sample: idx,
                    norm: inv_norm,
                    bound,
                });
            }
        }

        let forms = model.coriolis_forms(q);
        let mut form_asym = Vec::with_capacity(n);
        let mut form_norms = Vec::with_capacity(n);
        for (i, nf) in forms.iter().enumerate() {
            let a = nf.asymmetry();
            if a > sym_tol * nf.max_abs().max(T::min_positive_value()) {
                violations.push(PropertyViolation::CoriolisAsymmetric {
                    sample: idx,
                    form: i,
                    asymmetry: a,
                });
            }
            let norm = operator_norm(nf);
            max_forms[i] = max_forms[i].max(norm);
            if let Some(bounds) = &model.ni_bounds {
                if norm > bounds[i] {
                    violations.push(PropertyViolation::CoriolisBound {
                        sample: idx,
                        form: i,
                        norm,
                        bound: bounds[i],
                    });
                }
            }
            form_asym.push(a);
            form_norms.push(norm);
        }

        samples.push(SampleCheck {
            q: q.clone(),
            inertia_asymmetry: asym,
            inertia_min_eigenvalue: min_eig,
            inverse_inertia_norm: inv_norm,
            coriolis_asymmetry: form_asym,
            coriolis_norms: form_norms,
        });
    }

    Ok(ValidationReport {
        samples,
        violations,
        max_inverse_inertia_norm: max_inv,
        max_coriolis_norms: max_forms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const P3: f64 = 0.0095;

    #[test]
    fn coriolis_vector_zero_velocity() {
        let m = pendubot::<f64>();
        assert_eq!(coriolis_vector(&m, &[0.3, 1.1], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn coriolis_vector_at_quarter_turn() {
        let m = pendubot::<f64>();
        let c = coriolis_vector(&m, &[0.0, FRAC_PI_2], &[1.0, 1.0]).unwrap();
        assert!((c[0] + 0.0285).abs() < 1e-15);
        assert!((c[1] - 0.0095).abs() < 1e-15);
    }

    #[test]
    fn coriolis_vanishes_with_straight_elbow() {
        let m = pendubot::<f64>();
        for v in [[1.0, -3.0], [10.0, 10.0], [-7.5, 0.25]] {
            let c = coriolis_vector(&m, &[1.3, 0.0], &v).unwrap();
            assert!(c.iter().all(|x| x.abs() == 0.0));
        }
    }

    #[test]
    fn forms_agree_with_direct_override() {
        let m = pendubot::<f64>();
        let q = [0.4, 2.2];
        let v = [1.5, -0.7];
        let via_forms: Vec<f64> = m.coriolis_forms(&q).iter().map(|n| n.quadratic_form(&v)).collect();
        let direct = coriolis_vector(&m, &q, &v).unwrap();
        for (a, b) in via_forms.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coriolis_dimension_mismatch() {
        let m = pendubot::<f64>();
        assert!(matches!(
            coriolis_vector(&m, &[0.0], &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lower_equilibrium_is_at_rest() {
        let m = pendubot::<f64>();
        let s = PlantState::new(vec![-FRAC_PI_2, 0.0], vec![0.0, 0.0]).unwrap();
        let (dq, dv) = plant_derivative(&m, &s, &[0.0]).unwrap();
        assert_eq!(dq, vec![0.0, 0.0]);
        assert!(dv.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn horizontal_configuration_falls() {
        // M(0,0) = [[0.0604, 0.0201], [0.0201, 0.0106]], g = g0 (π4+π5, π5)
        let m = pendubot::<f64>();
        let s = PlantState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let (_, dv) = plant_derivative(&m, &s, &[0.0]).unwrap();
        let (a, b, d) = (0.0604, 0.0201, 0.0106);
        let det = a * d - b * b;
        let g = [9.81 * (0.2086 + 0.0630), 9.81 * 0.0630];
        let expect = [-(d * g[0] - b * g[1]) / det, -(-b * g[0] + a * g[1]) / det];
        for (x, e) in dv.iter().zip(expect) {
            assert!((x - e).abs() < 1e-10 * e.abs(), "{x} vs {e}");
        }
    }

    #[test]
    fn pendubot_constants() {
        let m = pendubot::<f64>();
        let inertia = m.inertia(&[0.7, 0.0]);
        let expect = [[0.0604, 0.0201], [0.0201, 0.0106]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inertia[(i, j)] - expect[i][j]).abs() < 1e-15);
            }
        }
        assert!(m.gravity(&[-FRAC_PI_2, 0.0]).iter().all(|g| g.abs() < 1e-15));
        assert_eq!(m.friction(), &[0.0, 0.0]);
        assert_eq!(m.input_matrix().to_rows(), vec![vec![1.0], vec![0.0]]);
        assert_eq!(m.dof(), 2);
        assert_eq!(m.input_dim(), 1);
    }

    #[test]
    fn singular_inertia_is_model_violation() {
        let m = constant_inertia_model(Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]), vec![0.0; 2]).unwrap();
        let s = PlantState::new(vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert!(matches!(
            plant_derivative(&m, &s, &[0.0, 0.0]),
            Err(Error::ModelViolation { .. })
        ));
    }

    #[test]
    fn negative_friction_rejected() {
        assert!(constant_inertia_model(Matrix::<f64>::identity(2), vec![0.1, -0.1]).is_err());
    }

    #[test]
    fn validation_passes_on_pendubot() {
        let m = pendubot::<f64>();
        let samples: Vec<Vec<f64>> = (0..1000).map(|k| vec![0.0, 2.0 * PI * k as f64 / 1000.0]).collect();
        let report = validate_properties(&m, &samples).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
        // ‖M⁻¹‖ = 1/λ_min(M) is largest with the elbow straight (q₂ = 0).
        let lmin = symmetric_eigenvalues(&m.inertia(&[0.0, 0.0]))[0];
        assert!((report.max_inverse_inertia_norm - 1.0 / lmin).abs() < 1e-9);
    }

    #[test]
    fn validation_flags_asymmetric_inertia() {
        #[derive(Debug)]
        struct Skewed;
        impl RigidDynamics<f64> for Skewed {
            fn dof(&self) -> usize {
                2
            }
            fn inertia(&self, _q: &[f64]) -> Matrix<f64> {
                Matrix::from_rows(&[[1.0, 0.2], [0.0, 1.0]])
            }
            fn coriolis_forms(&self, _q: &[f64]) -> Vec<Matrix<f64>> {
                vec![Matrix::zeros(2, 2); 2]
            }
            fn gravity(&self, _q: &[f64]) -> Vec<f64> {
                vec![0.0; 2]
            }
        }
        let m = ManipulatorModel::new(
            "skewed",
            Arc::new(Skewed),
            vec![0.0; 2],
            Matrix::identity(2),
            vec![JointDomain::revolute(); 2],
        )
        .unwrap();
        let report = validate_properties(&m, &[vec![0.0, 0.0]]).unwrap();
        assert!(!report.passed());
        assert!(matches!(
            report.violations[0],
            PropertyViolation::InertiaAsymmetric { sample: 0, .. }
        ));
    }

    #[test]
    fn coriolis_bound_threshold_is_golden_ratio() {
        // ‖N₁‖ = π₃ |sin q₂| ‖[[0,1],[1,1]]‖ = π₃ |sin q₂| (1+√5)/2
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let samples: Vec<Vec<f64>> = (0..360).map(|k| vec![0.0, PI * k as f64 / 180.0]).collect();

        let tight = pendubot::<f64>().with_ni_bounds(vec![P3 * 1.6, P3]).unwrap();
        let report = validate_properties(&tight, &samples).unwrap();
        let worst = report
            .violations
            .iter()
            .filter_map(|v| match v {
                PropertyViolation::CoriolisBound { sample, form: 0, .. } => Some(samples[*sample][1]),
                _ => None,
            })
            .collect::<Vec<_>>();
        assert!(!worst.is_empty());
        assert!(worst.iter().any(|q2| (q2 - FRAC_PI_2).abs() < 1e-9));

        let loose = pendubot::<f64>()
            .with_ni_bounds(vec![P3 * phi * (1.0 + 1e-12), P3 * (1.0 + 1e-12)])
            .unwrap();
        assert!(validate_properties(&loose, &samples).unwrap().passed());
        assert!((report.max_coriolis_norms[0] - P3 * phi).abs() < 1e-15);
    }

    #[test]
    fn m0_bound_checked() {
        let m = pendubot::<f64>().with_m0_bound(100.0).unwrap();
        let report = validate_properties(&m, &[vec![0.0, 0.0], vec![0.0, PI]]).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            PropertyViolation::InverseInertiaBound { sample: 0, .. }
        ));
    }

    #[test]
    fn f32_model_evaluates() {
        let m = pendubot::<f32>();
        let s = PlantState::new(vec![0.0f32, 0.0], vec![0.0, 0.0]).unwrap();
        let (_, dv) = plant_derivative(&m, &s, &[0.0]).unwrap();
        let reference = plant_derivative(
            &pendubot::<f64>(),
            &PlantState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap(),
            &[0.0],
        )
        .unwrap()
        .1;
        for (a, b) in dv.iter().zip(reference) {
            assert!((*a as f64 - b).abs() < 1e-3 * b.abs());
        }
    }
}
