//! Gain synthesis for the saturated observer.
//!
//! In scaled error coordinates the observer error obeys
//! `e' = θGe + (0, f)` with `G = [[−αI, I], [−βI, 0]]` Hurwitz and
//! `‖f‖ ≤ L‖ζ‖`. With `S` solving `GᵀS + SG = −I`, the quadratic form
//! `eᵀSe` decays at rate at least `(θ − 2‖S‖L) / (2‖S‖)`, so any
//! `θ ≥ θ* = 2‖S‖(γ + L)` guarantees exponential decay at rate `γ`.
//!
//! `L` is not available in closed form. [`estimate_bounds`] samples the
//! configuration domain and the velocity box to bound it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::ManipulatorModel;
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, symmetric_eigenvalues, Lu, Matrix};
use crate::scalar::Real;

impl<T: Real + Serialize> Serialize for Matrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

/// `G = [[−αI, I], [−βI, 0]]`, size 2n×2n.
pub fn build_g<T: Real>(alpha: T, beta: T, n: usize) -> Result<Matrix<T>> {
    if !(alpha > T::zero()) || !(beta > T::zero()) {
        return Err(Error::invalid(format!(
            "alpha and beta must be positive, got alpha = {alpha}, beta = {beta}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("joint count must be at least 1"));
    }
    let mut g = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        g[(i, i)] = -alpha;
        g[(i, n + i)] = T::one();
        g[(n + i, i)] = -beta;
    }
    Ok(g)
}

/// Largest eigenvalue magnitude of `G(α, β)`: the roots of `λ² + αλ + β`.
pub fn g_spectral_radius<T: Real>(alpha: T, beta: T) -> T {
    let disc = alpha * alpha - T::lit(4.0) * beta;
    if disc < T::zero() {
        beta.sqrt()
    } else {
        (alpha + disc.sqrt()) / T::lit(2.0)
    }
}

/// Solves `GᵀS + SG = −I` for symmetric positive-definite `S`.
///
/// When `G` is made of scalar multiples of the identity (as [`build_g`]
/// produces) the equation decouples joint by joint and a 2×2 problem is
/// solved; otherwise [`solve_lyapunov_dense`] is used.
pub fn solve_lyapunov<T: Real>(g: &Matrix<T>) -> Result<Matrix<T>> {
    match scalar_blocks(g) {
        Some(blocks) => solve_lyapunov_blocks(blocks, g.rows() / 2),
        None => solve_lyapunov_dense(g),
    }
}

/// `[[a, b], [c, d]]` if `G = [[aI, bI], [cI, dI]]`.
fn scalar_blocks<T: Real>(g: &Matrix<T>) -> Option<[T; 4]> {
    if !g.is_square() || !g.rows().is_multiple_of(2) || g.rows() == 0 {
        return None;
    }
    let n = g.rows() / 2;
    let coeffs = [g[(0, 0)], g[(0, n)], g[(n, 0)], g[(n, n)]];
    for bi in 0..2 {
        for bj in 0..2 {
            let c = coeffs[2 * bi + bj];
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { c } else { T::zero() };
                    if g[(bi * n + i, bj * n + j)] != expect {
                        return None;
                    }
                }
            }
        }
    }
    Some(coeffs)
}

fn solve_lyapunov_blocks<T: Real>([a, b, c, d]: [T; 4], n: usize) -> Result<Matrix<T>> {
    // S = [[x I, y I], [y I, z I]]:
    //   2a x + 2c y         = −1
    //    b x + (a+d) y + c z =  0
    //          2b y + 2d z  = −1
    let two = T::lit(2.0);
    let z0 = T::zero();
    let sys = Matrix::from_rows(&[[two * a, two * c, z0], [b, a + d, c], [z0, two * b, two * d]]);
    let lu = Lu::new(&sys).map_err(|_| Error::NoSolution("G has eigenvalues summing to zero".into()))?;
    if lu.rcond() < T::epsilon() {
        return Err(Error::NoSolution("Lyapunov operator is numerically singular".into()));
    }
    let sol = lu.solve(&[-T::one(), z0, -T::one()]);
    let (x, y, z) = (sol[0], sol[1], sol[2]);
    if !(x > T::zero() && x * z - y * y > T::zero()) {
        return Err(Error::NoSolution(
            "solution is not positive definite; G is not Hurwitz".into(),
        ));
    }
    let mut s = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, i)] = x;
        s[(i, n + i)] = y;
        s[(n + i, i)] = y;
        s[(n + i, n + i)] = z;
    }
    Ok(s)
}

/// Solves `GᵀS + SG = −I` for an arbitrary square `G` through the
/// Kronecker form `(I⊗Gᵀ + Gᵀ⊗I) vec(S) = −vec(I)`.
///
/// Fails with [`Error::NoSolution`] unless the solution is symmetric
/// positive definite, which happens exactly when `G` is Hurwitz.
pub fn solve_lyapunov_dense<T: Real>(g: &Matrix<T>) -> Result<Matrix<T>> {
    if !g.is_square() || g.rows() == 0 {
        return Err(Error::invalid("Lyapunov operand must be a nonempty square matrix"));
    }
    let n = g.rows();
    let gt = g.transpose();
    let eye = Matrix::identity(n);
    let op = eye.kron(&gt).add(&gt.kron(&eye));
    let lu = Lu::new(&op).map_err(|_| Error::NoSolution("G has eigenvalues summing to zero".into()))?;
    if lu.rcond() < T::epsilon() {
        return Err(Error::NoSolution("Lyapunov operator is numerically singular".into()));
    }
    // vec() stacks columns.
    let rhs: Vec<T> = (0..n * n)
        .map(|k| if k % n == k / n { -T::one() } else { T::zero() })
        .collect();
    let vec_s = lu.solve(&rhs);
    let half = T::lit(0.5);
    let s = Matrix::from_fn(n, n, |i, j| half * (vec_s[j * n + i] + vec_s[i * n + j]));
    let min_eig = symmetric_eigenvalues(&s)[0];
    if !(min_eig > T::zero()) {
        return Err(Error::NoSolution(format!(
            "solution is not positive definite (min eigenvalue {min_eig}); G is not Hurwitz"
        )));
    }
    Ok(s)
}

/// `max |(GᵀS + SG + I)ᵢⱼ|`.
pub fn lyapunov_residual<T: Real>(g: &Matrix<T>, s: &Matrix<T>) -> T {
    let gt_s = g.transpose().matmul(s);
    let s_g = s.matmul(g);
    gt_s.add(&s_g).add(&Matrix::identity(g.rows())).max_abs()
}

/// Spectral norm of a symmetric matrix, `max |λ|`.
pub fn spectral_norm<T: Real>(a: &Matrix<T>) -> Result<T> {
    if !a.is_symmetric(T::lit(1e3) * T::epsilon()) {
        return Err(Error::invalid("spectral_norm expects a symmetric matrix"));
    }
    let ev = symmetric_eigenvalues(a);
    Ok(ev.iter().fold(T::zero(), |m, l| m.max(l.abs())))
}

/// Decay rate guaranteed by gain `θ`: `(θ − 2‖S‖L) / (2‖S‖)`.
///
/// Errors with [`Error::NotGuaranteed`] (carrying the threshold `2‖S‖L`)
/// when `θ` is below it.
pub fn achieved_rate<T: Real>(theta: T, s_norm: T, lipschitz_l: T) -> Result<T> {
    if !(s_norm > T::zero()) || !(lipschitz_l >= T::zero()) {
        return Err(Error::invalid("‖S‖ must be positive and L nonnegative"));
    }
    let two_s = T::lit(2.0) * s_norm;
    let threshold = two_s * lipschitz_l;
    if theta < threshold {
        return Err(Error::NotGuaranteed {
            theta: theta.as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    Ok((theta - threshold) / two_s)
}

/// `θ* = 2‖S‖(γ + L)`.
pub fn theta_star<T: Real>(s_norm: T, lipschitz_l: T, gamma: T) -> T {
    T::lit(2.0) * s_norm * (gamma + lipschitz_l)
}

/// How the configuration domain and velocity box are explored when
/// bounding `‖M⁻¹‖` and `‖∂A/∂v‖`.
///
/// Configurations come from a Halton sequence over the sample ranges of the
/// joint domains. At each one all `2ⁿ` vertices of the velocity box are
/// evaluated plus `random_velocities` uniform interior points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan<T> {
    pub q_samples: usize,
    pub random_velocities: usize,
    /// Caps `q_samples × (2ⁿ + random_velocities)`; `q_samples` is reduced to fit.
    pub max_evaluations: usize,
    /// Multiplies every sampled maximum.
    pub safety_factor: T,
    pub seed: u64,
}

impl<T: Real> Default for SamplingPlan<T> {
    fn default() -> Self {
        Self {
            q_samples: 10_000,
            random_velocities: 100,
            max_evaluations: 1_000_000,
            safety_factor: T::lit(1.05),
            seed: 0x5eed,
        }
    }
}

/// Sampled bounds. All maxima already include the safety factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEstimate<T> {
    /// `M₀ ≥ ‖M⁻¹(q)‖`.
    pub m0: T,
    pub m0_at: Vec<T>,
    /// `B ≥ ‖∂A/∂v(q, v)‖` over `Q × V̄`.
    pub b: T,
    pub b_at: (Vec<T>, Vec<T>),
    /// `sup ‖M⁻¹(q) ∂A/∂v(q, v)‖` over `Q × V̄`.
    pub coupled: T,
    pub coupled_at: (Vec<T>, Vec<T>),
    /// `sup ‖M⁻¹(q) F‖`.
    pub friction_gain: T,
    pub friction_norm: T,
    pub safety_factor: T,
    pub q_evaluated: usize,
    pub evaluations: usize,
}

/// Which product bounds `‖f‖ / ‖ζ‖`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzRule {
    /// `sup‖M⁻¹ ∂A/∂v‖ + sup‖M⁻¹F‖`: the two factors are maximized jointly.
    #[default]
    Coupled,
    /// `M₀(B + ‖F‖)`: each factor maximized separately.
    Factored,
}

impl<T: Real> BoundEstimate<T> {
    pub fn lipschitz_factored(&self) -> T {
        self.m0 * (self.b + self.friction_norm)
    }

    pub fn lipschitz_coupled(&self) -> T {
        self.coupled + self.friction_gain
    }

    pub fn lipschitz(&self, rule: LipschitzRule) -> T {
        match rule {
            LipschitzRule::Coupled => self.lipschitz_coupled(),
            LipschitzRule::Factored => self.lipschitz_factored(),
        }
    }
}

#[derive(Clone)]
struct Running<T> {
    value: T,
    q: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Running<T> {
    fn new(n: usize) -> Self {
        Self {
            value: -T::one(),
            q: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    fn offer(&mut self, value: T, q: &[T], v: &[T]) {
        if value > self.value {
            self.value = value;
            self.q.clear();
            self.q.extend_from_slice(q);
            self.v.clear();
            self.v.extend_from_slice(v);
        }
    }

    // Earlier samples win ties so the reduction is order-independent.
    fn merge(&mut self, other: Self) {
        if other.value > self.value {
            *self = other;
        }
    }
}

struct LocalMax<T> {
    m0: Running<T>,
    b: Running<T>,
    coupled: Running<T>,
    friction_gain: T,
    evaluations: usize,
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Bounds `M₀`, `B` and the coupled product `sup‖M⁻¹ ∂A/∂v‖` by sampling.
pub fn estimate_bounds<T: Real>(
    model: &ManipulatorModel<T>,
    v_bounds: &[T],
    plan: &SamplingPlan<T>,
) -> Result<BoundEstimate<T>> {
    let n = model.dof();
    Error::check_len("velocity bounds", n, v_bounds.len())?;
    if v_bounds.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
        return Err(Error::invalid("velocity bounds must be finite and nonnegative"));
    }
    if plan.q_samples == 0 || plan.max_evaluations == 0 {
        return Err(Error::invalid("sampling plan is empty"));
    }
    if !(plan.safety_factor >= T::one()) {
        return Err(Error::invalid("safety factor must be at least 1"));
    }
    if n > PRIMES.len() {
        return Err(Error::invalid(format!(
            "bound sampling supports at most {} joints",
            PRIMES.len()
        )));
    }
    let ranges: Vec<(T, T)> = model
        .domain()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.sample_range().ok_or_else(|| {
                Error::invalid(format!(
                    "joint {} is unbounded; declare it periodic or give an interval to sample bounds",
                    i + 1
                ))
            })
        })
        .collect::<Result<_>>()?;

    let vertices: Vec<Vec<T>> = (0..1usize << n)
        .map(|mask| {
            (0..n)
                .map(|j| if mask >> j & 1 == 1 { v_bounds[j] } else { -v_bounds[j] })
                .collect()
        })
        .collect();
    let per_q = vertices.len() + plan.random_velocities;
    let q_count = plan.q_samples.min((plan.max_evaluations / per_q).max(1));
    let friction = model.friction_matrix();
    let two = T::lit(2.0);

    let locals: Vec<LocalMax<T>> = (0..q_count)
        .into_par_iter()
        .map(|k| -> Result<LocalMax<T>> {
            let q: Vec<T> = ranges
                .iter()
                .zip(PRIMES)
                .map(|(&(lo, hi), p)| lo + (hi - lo) * T::lit(radical_inverse(k as u64, p)))
                .collect();
            let minv = model.inverse_inertia(&q)?;
            let forms = model.coriolis_forms(&q);
            let mut local = LocalMax {
                m0: Running::new(n),
                b: Running::new(n),
                coupled: Running::new(n),
                friction_gain: operator_norm(&minv.matmul(&friction)),
                evaluations: 0,
            };
            local.m0.offer(operator_norm(&minv), &q, &[]);

            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(k as u64);
            let mut jac = Matrix::zeros(n, n);
            let mut eval = |v: &[T], local: &mut LocalMax<T>| {
                for (i, form) in forms.iter().enumerate() {
                    let row = form.mul_vec(v);
                    for j in 0..n {
                        jac[(i, j)] = two * row[j];
                    }
                }
                local.b.offer(operator_norm(&jac), &q, v);
                local.coupled.offer(operator_norm(&minv.matmul(&jac)), &q, v);
                local.evaluations += 1;
            };
            for v in &vertices {
                eval(v, &mut local);
            }
            let mut v = vec![T::zero(); n];
            for _ in 0..plan.random_velocities {
                for (vi, &bound) in v.iter_mut().zip(v_bounds) {
                    *vi = bound * T::lit(rng.random_range(-1.0..=1.0));
                }
                eval(&v, &mut local);
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;

    let mut m0 = Running::new(n);
    let mut b = Running::new(n);
    let mut coupled = Running::new(n);
    let mut friction_gain = T::zero();
    let mut evaluations = 0;
    for local in locals {
        m0.merge(local.m0);
        b.merge(local.b);
        coupled.merge(local.coupled);
        friction_gain = friction_gain.max(local.friction_gain);
        evaluations += local.evaluations;
    }
    let sf = plan.safety_factor;
    Ok(BoundEstimate {
        m0: m0.value * sf,
        m0_at: m0.q,
        b: b.value * sf,
        b_at: (b.q, b.v),
        coupled: coupled.value * sf,
        coupled_at: (coupled.q, coupled.v),
        friction_gain: friction_gain * sf,
        friction_norm: model.friction_norm(),
        safety_factor: sf,
        q_evaluated: q_count,
        evaluations,
    })
}

/// Where the Lipschitz constant `L` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzSource<T> {
    Sampled {
        plan: SamplingPlan<T>,
        rule: LipschitzRule,
    },
    /// Use a known constant and skip sampling.
    Fixed(T),
}

impl<T: Real> Default for LipschitzSource<T> {
    fn default() -> Self {
        Self::Sampled {
            plan: SamplingPlan::default(),
            rule: LipschitzRule::default(),
        }
    }
}

/// Result of the constructive gain design.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Real + Serialize"))]
pub struct GainSynthesis<T> {
    pub alpha: T,
    pub beta: T,
    pub n: usize,
    pub g: Matrix<T>,
    pub s: Matrix<T>,
    pub s_norm: T,
    pub lyapunov_residual: T,
    /// `M₀`, when sampled.
    pub m0: Option<T>,
    /// `B`, when sampled.
    pub b_bound: Option<T>,
    pub friction_norm: T,
    pub lipschitz_l: T,
    /// `Some(rule)` when `L` was sampled, `None` when fixed by the caller.
    pub lipschitz_rule: Option<LipschitzRule>,
    pub bounds: Option<BoundEstimate<T>>,
    pub gamma: T,
    pub theta_star: T,
}

impl<T: Real> GainSynthesis<T> {
    /// Decay rate guaranteed at gain `theta` with this design's `‖S‖` and `L`.
    pub fn achieved_rate(&self, theta: T) -> Result<T> {
        achieved_rate(theta, self.s_norm, self.lipschitz_l)
    }

    /// `2‖S‖L`, the gain above which decay is guaranteed at all.
    pub fn stability_threshold(&self) -> T {
        T::lit(2.0) * self.s_norm * self.lipschitz_l
    }
}

/// Builds `G`, solves the Lyapunov equation, bounds `L` and returns
/// `θ* = 2‖S‖(γ + L)`.
pub fn synthesize<T: Real>(
    alpha: T,
    beta: T,
    model: &ManipulatorModel<T>,
    v_bounds: &[T],
    gamma: T,
    source: &LipschitzSource<T>,
) -> Result<GainSynthesis<T>> {
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be nonnegative, got {gamma}")));
    }
    let n = model.dof();
    Error::check_len("velocity bounds", n, v_bounds.len())?;
    let g = build_g(alpha, beta, n)?;
    let s = solve_lyapunov(&g)?;
    let s_norm = spectral_norm(&s)?;
    let residual = lyapunov_residual(&g, &s);

    let (lipschitz_l, rule, bounds) = match source {
        LipschitzSource::Fixed(l) => {
            if !(*l >= T::zero()) || !l.is_finite() {
                return Err(Error::invalid(format!(
                    "Lipschitz override must be nonnegative, got {l}"
                )));
            }
            (*l, None, None)
        }
        LipschitzSource::Sampled { plan, rule } => {
            let est = estimate_bounds(model, v_bounds, plan)?;
            (est.lipschitz(*rule), Some(*rule), Some(est))
        }
    };

    Ok(GainSynthesis {
        alpha,
        beta,
        n,
        g,
        s,
        s_norm,
        lyapunov_residual: residual,
        m0: bounds.as_ref().map(|b| b.m0),
        b_bound: bounds.as_ref().map(|b| b.b),
        friction_norm: model.friction_norm(),
        lipschitz_l,
        lipschitz_rule: rule,
        bounds,
        gamma,
        theta_star: theta_star(s_norm, lipschitz_l, gamma),
    })
}
