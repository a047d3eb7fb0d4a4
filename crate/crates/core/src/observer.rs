//! Saturated Luenberger-style velocity observer
//!
//! ```text
//! q̂' = v̂ − θα(q̂ − q)
//! v̂' = −M⁻¹(q)(C(q,σ_V(v̂))σ_V(v̂) + Fv̂ + g(q) − Hu) − θ²β(q̂ − q)
//! ```
//!
//! The model is evaluated at the measured `q`. Only the Coriolis arguments
//! are saturated; friction and innovation terms use the raw estimate.

use serde::{Deserialize, Serialize};

use crate::dynamics::{generalized_acceleration, ManipulatorModel, PlantState};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Design parameters `α, β, θ > 0` and the velocity bound vector `V ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverParams<T> {
    pub alpha: T,
    pub beta: T,
    pub theta: T,
    pub v_bounds: Vec<T>,
}

impl<T: Real> ObserverParams<T> {
    pub fn new(alpha: T, beta: T, theta: T, v_bounds: Vec<T>) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            theta,
            v_bounds,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("alpha", self.alpha), ("beta", self.beta), ("theta", self.theta)] {
            if !(x > T::zero()) || !x.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {x}")));
            }
        }
        check_levels(&self.v_bounds)
    }

    pub fn with_theta(&self, theta: T) -> Result<Self> {
        Self::new(self.alpha, self.beta, theta, self.v_bounds.clone())
    }

    pub fn dof(&self) -> usize {
        self.v_bounds.len()
    }
}

fn check_levels<T: Real>(levels: &[T]) -> Result<()> {
    match levels.iter().find(|y| !(**y >= T::zero())) {
        Some(y) => Err(Error::invalid(format!(
            "saturation levels must be nonnegative, got {y}"
        ))),
        None => Ok(()),
    }
}

/// Estimates `(q̂, v̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverState<T> {
    pub q_hat: Vec<T>,
    pub v_hat: Vec<T>,
}

impl<T: Real> ObserverState<T> {
    pub fn new(q_hat: Vec<T>, v_hat: Vec<T>) -> Result<Self> {
        Error::check_len("observer velocity", q_hat.len(), v_hat.len())?;
        if q_hat.iter().chain(&v_hat).any(|x| !x.is_finite()) {
            return Err(Error::invalid("observer state entries must be finite"));
        }
        Ok(Self { q_hat, v_hat })
    }

    /// Observer initialized exactly at the plant state.
    pub fn from_plant(plant: &PlantState<T>) -> Self {
        Self {
            q_hat: plant.q.clone(),
            v_hat: plant.v.clone(),
        }
    }
}

/// Scaled errors `ξ = (q̂ − q)/θ`, `ζ = (v̂ − v)/θ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCoordinates<T> {
    pub xi: Vec<T>,
    pub zeta: Vec<T>,
}

impl<T: Real> ErrorCoordinates<T> {
    /// `‖(ξ, ζ)‖`.
    pub fn norm(&self) -> T {
        crate::linalg::stacked_norm(&self.xi, &self.zeta)
    }

    /// `(ξ, ζ)` as one 2n-vector.
    pub fn stacked(&self) -> Vec<T> {
        self.xi.iter().chain(&self.zeta).copied().collect()
    }
}

/// Component-wise clamp of `x` to the box `[−Y, Y]`.
pub fn saturate<T: Real>(x: &[T], levels: &[T]) -> Result<Vec<T>> {
    Error::check_len("saturation levels", x.len(), levels.len())?;
    check_levels(levels)?;
    Ok(saturate_unchecked(x, levels))
}

#[inline]
pub(crate) fn saturate_unchecked<T: Real>(x: &[T], levels: &[T]) -> Vec<T> {
    x.iter()
        .zip(levels)
        .map(|(&xi, &y)| {
            if xi > y {
                y
            } else if xi < -y {
                -y
            } else {
                xi
            }
        })
        .collect()
}

/// Right-hand side of the observer, `(q̂', v̂')`, driven by the measured
/// position `q_meas` and the plant input `u`.
pub fn observer_derivative<T: Real>(
    model: &ManipulatorModel<T>,
    params: &ObserverParams<T>,
    obs: &ObserverState<T>,
    q_meas: &[T],
    u: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let n = model.dof();
    Error::check_len("velocity bounds", n, params.v_bounds.len())?;
    Error::check_len("q_hat", n, obs.q_hat.len())?;
    Error::check_len("v_hat", n, obs.v_hat.len())?;
    Error::check_len("measured q", n, q_meas.len())?;

    let gain_q = params.theta * params.alpha;
    let gain_v = params.theta * params.theta * params.beta;
    let innovation: Vec<T> = obs.q_hat.iter().zip(q_meas).map(|(&a, &b)| a - b).collect();

    let dq_hat = obs
        .v_hat
        .iter()
        .zip(&innovation)
        .map(|(&v, &e)| v - gain_q * e)
        .collect();

    let v_sat = saturate_unchecked(&obs.v_hat, &params.v_bounds);
    let accel = generalized_acceleration(model, q_meas, &v_sat, &obs.v_hat, u)?;
    let dv_hat = accel.iter().zip(&innovation).map(|(&a, &e)| a - gain_v * e).collect();
    Ok((dq_hat, dv_hat))
}

pub fn to_error_coordinates<T: Real>(
    obs: &ObserverState<T>,
    plant: &PlantState<T>,
    theta: T,
) -> Result<ErrorCoordinates<T>> {
    check_theta(theta)?;
    Error::check_len("q_hat", plant.q.len(), obs.q_hat.len())?;
    Error::check_len("v_hat", plant.v.len(), obs.v_hat.len())?;
    let t2 = theta * theta;
    Ok(ErrorCoordinates {
        xi: obs.q_hat.iter().zip(&plant.q).map(|(&a, &b)| (a - b) / theta).collect(),
        zeta: obs.v_hat.iter().zip(&plant.v).map(|(&a, &b)| (a - b) / t2).collect(),
    })
}

/// Inverse of [`to_error_coordinates`].
pub fn from_error_coordinates<T: Real>(
    err: &ErrorCoordinates<T>,
    plant: &PlantState<T>,
    theta: T,
) -> Result<ObserverState<T>> {
    check_theta(theta)?;
    Error::check_len("xi", plant.q.len(), err.xi.len())?;
    Error::check_len("zeta", plant.v.len(), err.zeta.len())?;
    let t2 = theta * theta;
    Ok(ObserverState {
        q_hat: plant.q.iter().zip(&err.xi).map(|(&q, &x)| q + theta * x).collect(),
        v_hat: plant.v.iter().zip(&err.zeta).map(|(&v, &z)| v + t2 * z).collect(),
    })
}

fn check_theta<T: Real>(theta: T) -> Result<()> {
    if theta > T::zero() && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("theta must be positive, got {theta}")))
    }
}

/// The perturbation in the scaled error dynamics,
///
/// ```text
/// f(q,v,ζ,θ) = −M⁻¹(q) [ (A(q,σ_V(v+θ²ζ)) − A(q,σ_V(v))) / θ² + Fζ ],   A(q,v) = C(q,v)v
/// ```
///
/// It satisfies `‖f‖ ≤ L‖ζ‖` for the Lipschitz constant produced by gain
/// synthesis.
pub fn perturbation_term<T: Real>(
    model: &ManipulatorModel<T>,
    q: &[T],
    v: &[T],
    zeta: &[T],
    theta: T,
    params: &ObserverParams<T>,
) -> Result<Vec<T>> {
    check_theta(theta)?;
    let n = model.dof();
    Error::check_len("q", n, q.len())?;
    Error::check_len("v", n, v.len())?;
    Error::check_len("zeta", n, zeta.len())?;
    Error::check_len("velocity bounds", n, params.v_bounds.len())?;
    let t2 = theta * theta;
    let shifted: Vec<T> = v.iter().zip(zeta).map(|(&vi, &z)| vi + t2 * z).collect();
    let dyn_ = model.dynamics();
    let a_shift = dyn_.coriolis_vector(q, &saturate_unchecked(&shifted, &params.v_bounds));
    let a_base = dyn_.coriolis_vector(q, &saturate_unchecked(v, &params.v_bounds));
    let bracket: Vec<T> = (0..n)
        .map(|i| (a_shift[i] - a_base[i]) / t2 + model.friction()[i] * zeta[i])
        .collect();
    Ok(model.solve_inertia(q, &bracket)?.into_iter().map(|x| -x).collect())
}

/// Scaled error dynamics assembled from their linear part and the
/// perturbation: `(ξ', ζ') = θG(ξ, ζ) + (0, f)` with `G = [[−αI, I], [−βI, 0]]`.
///
/// Valid along plant trajectories whose velocity stays inside the box `V`.
pub fn scaled_error_derivative<T: Real>(
    model: &ManipulatorModel<T>,
    params: &ObserverParams<T>,
    plant: &PlantState<T>,
    err: &ErrorCoordinates<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let theta = params.theta;
    let f = perturbation_term(model, &plant.q, &plant.v, &err.zeta, theta, params)?;
    let dxi = err
        .xi
        .iter()
        .zip(&err.zeta)
        .map(|(&x, &z)| theta * (-params.alpha * x + z))
        .collect();
    let dzeta = err
        .xi
        .iter()
        .zip(&f)
        .map(|(&x, &fi)| -theta * params.beta * x + fi)
        .collect();
    Ok((dxi, dzeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{coriolis_vector, pendubot, plant_derivative};
    use std::f64::consts::FRAC_PI_2;

    fn params() -> ObserverParams<f64> {
        ObserverParams::new(1.0, 1.0, 200.0, vec![10.0, 10.0]).unwrap()
    }

    #[test]
    fn saturate_identity_inside_box() {
        assert_eq!(saturate(&[0.5, -0.5], &[1.0, 1.0]).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn saturate_clamps_both_sides() {
        assert_eq!(saturate(&[12.0, -12.0], &[10.0, 10.0]).unwrap(), vec![10.0, -10.0]);
    }

    #[test]
    fn saturate_zero_level() {
        assert_eq!(saturate(&[3.0, -1e9], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn saturate_rejects_negative_level() {
        assert!(matches!(saturate(&[1.0], &[-1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn params_reject_nonpositive() {
        assert!(ObserverParams::new(0.0, 1.0, 1.0, vec![1.0]).is_err());
        assert!(ObserverParams::new(1.0, -1.0, 1.0, vec![1.0]).is_err());
        assert!(ObserverParams::new(1.0, 1.0, 0.0, vec![1.0]).is_err());
        assert!(ObserverParams::new(1.0, 1.0, 1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn matches_plant_when_states_coincide() {
        let m = pendubot::<f64>();
        let plant = PlantState::new(vec![0.3, -1.2], vec![4.0, -9.5]).unwrap();
        let obs = ObserverState::from_plant(&plant);
        let u = [0.8];
        let (pq, pv) = plant_derivative(&m, &plant, &u).unwrap();
        let (oq, ov) = observer_derivative(&m, &params(), &obs, &plant.q, &u).unwrap();
        assert_eq!(pq, oq);
        assert_eq!(pv, ov);
    }

    #[test]
    fn at_rest_at_lower_equilibrium() {
        let m = pendubot::<f64>();
        let q = vec![-FRAC_PI_2, 0.0];
        let obs = ObserverState::new(q.clone(), vec![0.0, 0.0]).unwrap();
        let p = ObserverParams::new(1.0, 1.0, 200.0, vec![3.0, 0.5]).unwrap();
        let (dq, dv) = observer_derivative(&m, &p, &obs, &q, &[0.0]).unwrap();
        assert_eq!(dq, vec![0.0, 0.0]);
        assert!(dv.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn saturation_applies_to_coriolis_only() {
        // Hand expansion for n = 2 with friction so the two arguments differ.
        let pi: [f64; 5] = [0.0308, 0.0106, 0.0095, 0.2086, 0.0630];
        let m =
            crate::dynamics::pendubot_with(crate::dynamics::PendubotParams { pi, g0: 9.81 }, vec![0.2, 0.05]).unwrap();
        let p = ObserverParams::new(2.0, 3.0, 5.0, vec![1.0, 2.0]).unwrap();
        let q: [f64; 2] = [0.4, 1.0];
        let obs = ObserverState::new(vec![0.5, 0.9], vec![3.0, -4.0]).unwrap();
        let u = [0.7];
        let (dq, dv) = observer_derivative(&m, &p, &obs, &q, &u).unwrap();

        let (s1, s2) = (1.0, -2.0);
        let h = pi[2] * q[1].sin();
        let cor = [-h * (2.0 * s1 * s2 + s2 * s2), h * s1 * s1];
        let fric = [0.2 * 3.0, 0.05 * -4.0];
        let c12 = (q[0] + q[1]).cos();
        let grav = [pi[3] * 9.81 * q[0].cos() + pi[4] * 9.81 * c12, pi[4] * 9.81 * c12];
        let rhs = [cor[0] + fric[0] + grav[0] - u[0], cor[1] + fric[1] + grav[1]];
        let c2 = q[1].cos();
        let (a, b, d) = (pi[0] + pi[1] + 2.0 * pi[2] * c2, pi[1] + pi[2] * c2, pi[1]);
        let det = a * d - b * b;
        let acc = [-(d * rhs[0] - b * rhs[1]) / det, -(-b * rhs[0] + a * rhs[1]) / det];
        let innov = [0.1, -0.1];
        let expect_dq = [3.0 - 10.0 * innov[0], -4.0 - 10.0 * innov[1]];
        let expect_dv = [acc[0] - 75.0 * innov[0], acc[1] - 75.0 * innov[1]];
        for i in 0..2 {
            assert!((dq[i] - expect_dq[i]).abs() < 1e-12);
            assert!(
                (dv[i] - expect_dv[i]).abs() < 1e-10 * expect_dv[i].abs().max(1.0),
                "{dv:?} vs {expect_dv:?}"
            );
        }
    }

    #[test]
    fn error_coordinates_definition_and_inverse() {
        let plant = PlantState::new(vec![0.5, 0.25], vec![1.0, 2.0]).unwrap();
        let theta = 4.0;
        let obs = ObserverState::new(vec![0.5 + theta, 0.25], vec![1.0, 2.0 + theta * theta]).unwrap();
        let e = to_error_coordinates(&obs, &plant, theta).unwrap();
        assert_eq!(e.xi, vec![1.0, 0.0]);
        assert_eq!(e.zeta, vec![0.0, 1.0]);
        let same = to_error_coordinates(&ObserverState::from_plant(&plant), &plant, theta).unwrap();
        assert_eq!(same.norm(), 0.0);
        let back = from_error_coordinates(&e, &plant, theta).unwrap();
        assert_eq!(back, obs);
        assert!(to_error_coordinates(&obs, &plant, 0.0).is_err());
        assert!(to_error_coordinates(&obs, &plant, -1.0).is_err());
    }

    #[test]
    fn perturbation_vanishes_at_zero_zeta() {
        let m = pendubot::<f64>();
        let f = perturbation_term(&m, &[0.3, 1.0], &[2.0, -5.0], &[0.0, 0.0], 200.0, &params()).unwrap();
        assert_eq!(f, vec![0.0, 0.0]);
    }

    #[test]
    fn perturbation_matches_definition() {
        let m = pendubot::<f64>();
        let p = ObserverParams::new(1.0, 1.0, 3.0, vec![10.0, 10.0]).unwrap();
        let (q, v, z) = ([0.2, 1.3], [2.0, -1.0], [0.5, 0.25]);
        let f = perturbation_term(&m, &q, &v, &z, 3.0, &p).unwrap();
        let shifted = saturate(&[2.0 + 9.0 * 0.5, -1.0 + 9.0 * 0.25], &p.v_bounds).unwrap();
        let da: Vec<f64> = coriolis_vector(&m, &q, &shifted)
            .unwrap()
            .iter()
            .zip(coriolis_vector(&m, &q, &v).unwrap())
            .map(|(a, b)| (a - b) / 9.0)
            .collect();
        let expect: Vec<f64> = m.solve_inertia(&q, &da).unwrap().iter().map(|x| -x).collect();
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
