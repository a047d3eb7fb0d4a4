//! Fixed-step co-simulation of plant and observer, trajectory recording and
//! exponential-envelope checks.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{plant_derivative, ManipulatorModel, PlantState};
use crate::error::{Error, Result};
use crate::gains::g_spectral_radius;
use crate::linalg::{stacked_norm, Matrix};
use crate::observer::{observer_derivative, to_error_coordinates, ObserverParams, ObserverState};
use crate::scalar::Real;

/// Largest `rate · dt` considered accurate, where `rate` is the fastest
/// observer mode or input frequency. Exceeding it only warns.
pub const ACCURACY_RATE_DT: f64 = 0.1;

/// Default floor below which scaled error samples are treated as noise.
pub const DEFAULT_FLOOR: f64 = 1e-10;

/// Minimum samples above the floor for an envelope fit.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Plant input `u(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal<T> {
    Zero {
        channels: usize,
    },
    Constant {
        value: Vec<T>,
    },
    /// `uᵢ(t) = aᵢ sin(ωᵢ t)` per channel.
    Sine {
        amplitude: Vec<T>,
        angular_frequency: Vec<T>,
    },
    /// Zero-order hold over `(times[k], values[k])`; the first value also
    /// applies before `times[0]`.
    Table {
        times: Vec<T>,
        values: Vec<Vec<T>>,
    },
}

impl<T: Real> InputSignal<T> {
    pub fn sine(amplitude: T, angular_frequency: T) -> Self {
        Self::Sine {
            amplitude: vec![amplitude],
            angular_frequency: vec![angular_frequency],
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Self::Zero { channels } => *channels,
            Self::Constant { value } => value.len(),
            Self::Sine { amplitude, .. } => amplitude.len(),
            Self::Table { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        match self {
            Self::Zero { .. } => Ok(()),
            Self::Constant { value } if !finite(value) => Err(Error::invalid("constant input must be finite")),
            Self::Constant { .. } => Ok(()),
            Self::Sine {
                amplitude,
                angular_frequency,
            } => {
                Error::check_len("sine angular frequencies", amplitude.len(), angular_frequency.len())?;
                if !finite(amplitude) || !finite(angular_frequency) {
                    return Err(Error::invalid("sine parameters must be finite"));
                }
                Ok(())
            }
            Self::Table { times, values } => {
                if times.is_empty() {
                    return Err(Error::invalid("input table is empty"));
                }
                Error::check_len("input table values", times.len(), values.len())?;
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("input table times must be strictly increasing"));
                }
                let m = values[0].len();
                for row in values {
                    Error::check_len("input table row", m, row.len())?;
                    if !finite(row) {
                        return Err(Error::invalid("input table values must be finite"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: T) -> Vec<T> {
        match self {
            Self::Zero { channels } => vec![T::zero(); *channels],
            Self::Constant { value } => value.clone(),
            Self::Sine {
                amplitude,
                angular_frequency,
            } => amplitude
                .iter()
                .zip(angular_frequency)
                .map(|(&a, &w)| a * (w * t).sin())
                .collect(),
            Self::Table { times, values } => {
                let k = times.partition_point(|&x| x <= t).saturating_sub(1);
                values[k].clone()
            }
        }
    }

    /// Largest angular frequency present, zero for piecewise-constant signals.
    pub fn max_angular_frequency(&self) -> T {
        match self {
            Self::Sine { angular_frequency, .. } => angular_frequency.iter().fold(T::zero(), |m, w| m.max(w.abs())),
            _ => T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig<T> {
    pub dt: T,
    pub t_final: T,
    pub record_stride: usize,
    pub plant_initial: PlantState<T>,
    pub observer_initial: ObserverState<T>,
    pub input: InputSignal<T>,
}

impl<T: Real> SimulationConfig<T> {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0)
    }

    /// Checks the configuration against model and observer. Hard errors for
    /// malformed input; returns warnings for step sizes too coarse for the
    /// fastest dynamics.
    pub fn validate(&self, model: &ManipulatorModel<T>, params: &ObserverParams<T>) -> Result<Vec<String>> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::invalid(format!(
                "t_final must be at least dt, got t_final = {}, dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be at least 1"));
        }
        params.validate()?;
        let n = model.dof();
        Error::check_len("velocity bounds", n, params.v_bounds.len())?;
        let p = PlantState::new(self.plant_initial.q.clone(), self.plant_initial.v.clone())?;
        Error::check_len("plant initial state", n, p.dof())?;
        let o = ObserverState::new(self.observer_initial.q_hat.clone(), self.observer_initial.v_hat.clone())?;
        Error::check_len("observer initial state", n, o.q_hat.len())?;
        self.input.validate()?;
        Error::check_len("input channels", model.input_dim(), self.input.channels())?;

        let mut warnings = Vec::new();
        let rate = fastest_rate(params, &self.input);
        if rate * self.dt > T::lit(ACCURACY_RATE_DT) {
            warnings.push(format!(
                "dt = {} is coarse for the fastest rate {} rad/s (rate·dt = {} > {ACCURACY_RATE_DT})",
                self.dt,
                rate,
                rate * self.dt
            ));
        }
        Ok(warnings)
    }
}

/// Fastest rate the integrator has to resolve: the observer's linear modes
/// `θ·ρ(G)` or the input frequency.
pub fn fastest_rate<T: Real>(params: &ObserverParams<T>, input: &InputSignal<T>) -> T {
    (params.theta * g_spectral_radius(params.alpha, params.beta)).max(input.max_angular_frequency())
}

/// Recorded plant/observer evolution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub plant_states: Vec<PlantState<T>>,
    pub observer_states: Vec<ObserverState<T>>,
    pub inputs: Vec<Vec<T>>,
    /// `‖(q̂ − q, v̂ − v)‖`.
    pub error_norms: Vec<T>,
    /// `‖(ξ, ζ)‖`.
    pub scaled_error_norms: Vec<T>,
    /// Measured `q` outside the model's declared domain.
    pub domain_violation_flags: Vec<bool>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: T, plant: PlantState<T>, obs: ObserverState<T>, u: Vec<T>, theta: T, flag: bool) {
        let eq: Vec<T> = obs.q_hat.iter().zip(&plant.q).map(|(&a, &b)| a - b).collect();
        let ev: Vec<T> = obs.v_hat.iter().zip(&plant.v).map(|(&a, &b)| a - b).collect();
        let t2 = theta * theta;
        let xi: Vec<T> = eq.iter().map(|&e| e / theta).collect();
        let zeta: Vec<T> = ev.iter().map(|&e| e / t2).collect();
        self.times.push(t);
        self.error_norms.push(stacked_norm(&eq, &ev));
        self.scaled_error_norms.push(stacked_norm(&xi, &zeta));
        self.plant_states.push(plant);
        self.observer_states.push(obs);
        self.inputs.push(u);
        self.domain_violation_flags.push(flag);
    }

    pub fn max_error(&self) -> T {
        self.error_norms.iter().fold(T::zero(), |m, &e| m.max(e))
    }

    pub fn initial_error(&self) -> Option<T> {
        self.error_norms.first().copied()
    }

    pub fn final_error(&self) -> Option<T> {
        self.error_norms.last().copied()
    }

    /// Largest `|vᵢ|/Vᵢ` reached by the plant; at most 1 when the plant stays
    /// in the velocity box.
    pub fn plant_velocity_within(&self, v_bounds: &[T]) -> bool {
        self.plant_states
            .iter()
            .all(|p| p.v.iter().zip(v_bounds).all(|(v, b)| v.abs() <= *b))
    }

    /// `V(ξ, ζ) = (ξ, ζ)ᵀ S (ξ, ζ)` at every sample.
    pub fn lyapunov_values(&self, s: &Matrix<T>, theta: T) -> Result<Vec<T>> {
        self.plant_states
            .iter()
            .zip(&self.observer_states)
            .map(|(p, o)| Ok(s.quadratic_form(&to_error_coordinates(o, p, theta)?.stacked())))
            .collect()
    }

    /// Column layout shared by CSV export: `t, q…, v…, q̂…, v̂…, u…` per row.
    pub fn state_row(&self, k: usize) -> Vec<T> {
        let p = &self.plant_states[k];
        let o = &self.observer_states[k];
        std::iter::once(self.times[k])
            .chain(p.q.iter().copied())
            .chain(p.v.iter().copied())
            .chain(o.q_hat.iter().copied())
            .chain(o.v_hat.iter().copied())
            .chain(self.inputs[k].iter().copied())
            .collect()
    }
}

/// Simulation error with whatever was recorded before it happened.
#[derive(Debug, Clone)]
pub struct SimulationFailure<T> {
    pub error: Error,
    pub partial: Trajectory<T>,
}

impl<T> fmt::Display for SimulationFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl<T: fmt::Debug> std::error::Error for SimulationFailure<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<T: Default> From<Error> for SimulationFailure<T> {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: Trajectory::default(),
        }
    }
}

/// One classical Runge–Kutta step of `x' = f(t, x)`.
///
/// Returns [`Error::Divergence`] if the new state has a non-finite entry.
pub fn step_rk4<T, F>(mut f: F, state: &[T], t: T, dt: T) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
{
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let two = T::lit(2.0);
    let h2 = dt * half;
    let offset = |k: &[T], h: T| -> Vec<T> { state.iter().zip(k).map(|(&x, &d)| x + h * d).collect() };

    let k1 = f(t, state)?;
    let k2 = f(t + h2, &offset(&k1, h2))?;
    let k3 = f(t + h2, &offset(&k2, h2))?;
    let k4 = f(t + dt, &offset(&k3, dt))?;
    let next: Vec<T> = (0..state.len())
        .map(|i| state[i] + dt * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence { t: (t + dt).as_f64() });
    }
    Ok(next)
}

/// Integrates plant and observer jointly with RK4; the observer sees the
/// plant's position at every stage.
///
/// The recorded samples are step 0, every `record_stride`-th step and the
/// final step.
// The error carries the partial record by value; failures are one-off.
#[allow(clippy::result_large_err)]
pub fn simulate<T: Real>(
    model: &ManipulatorModel<T>,
    params: &ObserverParams<T>,
    config: &SimulationConfig<T>,
) -> Result<Trajectory<T>, SimulationFailure<T>> {
    for w in config.validate(model, params)? {
        log::warn!("{w}");
    }
    let n = model.dof();
    let theta = params.theta;
    let split = |x: &[T]| -> (PlantState<T>, ObserverState<T>) {
        (
            PlantState {
                q: x[..n].to_vec(),
                v: x[n..2 * n].to_vec(),
            },
            ObserverState {
                q_hat: x[2 * n..3 * n].to_vec(),
                v_hat: x[3 * n..].to_vec(),
            },
        )
    };
    let field = |t: T, x: &[T]| -> Result<Vec<T>> {
        let u = config.input.eval(t);
        let (plant, obs) = split(x);
        let (dq, dv) = plant_derivative(model, &plant, &u)?;
        let (dqh, dvh) = observer_derivative(model, params, &obs, &plant.q, &u)?;
        Ok(dq.into_iter().chain(dv).chain(dqh).chain(dvh).collect())
    };

    let steps = config.steps();
    let stride = config.record_stride;
    let mut traj = Trajectory::default();
    let record = |traj: &mut Trajectory<T>, t: T, x: &[T]| {
        let (plant, obs) = split(x);
        let flag = !model.in_domain(&plant.q);
        traj.push(t, plant, obs, config.input.eval(t), theta, flag);
    };

    let mut x: Vec<T> = config
        .plant_initial
        .q
        .iter()
        .chain(&config.plant_initial.v)
        .chain(&config.observer_initial.q_hat)
        .chain(&config.observer_initial.v_hat)
        .copied()
        .collect();
    record(&mut traj, T::zero(), &x);
    for k in 0..steps {
        let t = T::from_usize_lossy(k) * config.dt;
        x = match step_rk4(&field, &x, t, config.dt) {
            Ok(next) => next,
            Err(error) => return Err(SimulationFailure { error, partial: traj }),
        };
        // entries can stay finite while the error norm overflows
        let err_sq = (0..2 * n).map(|i| (x[2 * n + i] - x[i]).powi(2)).sum::<T>();
        if !err_sq.is_finite() {
            let error = Error::Divergence {
                t: (T::from_usize_lossy(k + 1) * config.dt).as_f64(),
            };
            return Err(SimulationFailure { error, partial: traj });
        }
        let done = k + 1;
        if done % stride == 0 || done == steps {
            record(&mut traj, T::from_usize_lossy(done) * config.dt, &x);
        }
    }
    Ok(traj)
}

/// Exponential envelope `k̂ ‖e(0)‖ exp(−γ̂ t)` fitted to scaled error norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit<T> {
    pub k_hat: T,
    pub gamma_hat: T,
    pub fit_window: (T, T),
    /// RMS residual of the log-linear fit.
    pub residual: T,
    pub floor: T,
    pub samples: usize,
}

/// Least-squares fit of `ln ‖(ξ, ζ)‖` against `t`.
///
/// Uses the samples after the first one up to the first that falls to or
/// below `floor`. `γ̂` is minus the slope; `k̂` is the smallest prefactor for
/// which the envelope dominates every sample from `t = 0` through the window.
pub fn fit_envelope<T: Real>(traj: &Trajectory<T>, floor: T) -> Result<EnvelopeFit<T>> {
    let e = &traj.scaled_error_norms;
    let t = &traj.times;
    let e0 = e.first().copied().unwrap_or_else(T::zero);
    let end = e.iter().skip(1).position(|&x| !(x > floor)).map_or(e.len(), |p| p + 1);
    let count = end.saturating_sub(1);
    if count < MIN_FIT_SAMPLES || !(e0 > T::zero()) {
        return Err(Error::InsufficientData {
            found: count,
            required: MIN_FIT_SAMPLES,
        });
    }
    let t0 = t[0];
    let xs: Vec<T> = t[1..end].iter().map(|&ti| ti - t0).collect();
    let ys: Vec<T> = e[1..end].iter().map(|x| x.ln()).collect();
    let nf = T::from_usize_lossy(count);
    let mean_x = xs.iter().copied().sum::<T>() / nf;
    let mean_y = ys.iter().copied().sum::<T>() / nf;
    let sxx: T = xs.iter().map(|&x| (x - mean_x) * (x - mean_x)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let intercept = mean_y - slope * mean_x;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<T>()
        / nf)
        .sqrt();
    let gamma_hat = -slope;
    let k_hat = t[..end]
        .iter()
        .zip(&e[..end])
        .map(|(&ti, &ei)| ei * (gamma_hat * (ti - t0)).exp() / e0)
        .fold(T::zero(), T::max);
    Ok(EnvelopeFit {
        k_hat,
        gamma_hat,
        fit_window: (xs[0] + t0, xs[count - 1] + t0),
        residual,
        floor,
        samples: count,
    })
}

/// Outcome of checking that `V(ξ, ζ)` never increases between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCheck<T> {
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `V(k+1)/V(k) − 1` seen.
    pub max_relative_increase: T,
}

impl<T> LyapunovCheck<T> {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Compares consecutive samples while the scaled error is above `floor`; a
/// relative increase above `rel_tol` counts as a violation.
pub fn check_lyapunov_decrease<T: Real>(
    traj: &Trajectory<T>,
    s: &Matrix<T>,
    theta: T,
    floor: T,
    rel_tol: T,
) -> Result<LyapunovCheck<T>> {
    let values = traj.lyapunov_values(s, theta)?;
    let mut check = LyapunovCheck {
        pairs_checked: 0,
        violations: 0,
        max_relative_increase: -T::infinity(),
    };
    for k in 0..values.len().saturating_sub(1) {
        if !(traj.scaled_error_norms[k + 1] > floor) {
            break;
        }
        let rel = values[k + 1] / values[k] - T::one();
        check.pairs_checked += 1;
        check.max_relative_increase = check.max_relative_increase.max(rel);
        if rel > rel_tol {
            check.violations += 1;
        }
    }
    Ok(check)
}

/// Randomized observer initial states: `‖q̂(0) − q(0)‖ < ε`, `v̂(0)` in the
/// velocity box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec<T> {
    pub epsilon: T,
    pub trials: usize,
    pub seed: u64,
    /// Decay rate every trial must reach.
    pub gamma: T,
    pub floor: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome<T> {
    pub index: usize,
    pub observer_initial: ObserverState<T>,
    pub initial_error: T,
    pub final_error: T,
    /// `None` when the error never rose above the floor.
    pub fit: Option<EnvelopeFit<T>>,
    pub exact_tracking: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport<T> {
    pub spec: CampaignSpec<T>,
    pub trials: Vec<TrialOutcome<T>>,
    pub fraction_satisfied: f64,
}

impl<T> CampaignReport<T> {
    pub fn all_satisfied(&self) -> bool {
        self.trials.iter().all(|t| t.satisfied)
    }
}

/// Simulates one configuration and judges it against `gamma`.
pub fn evaluate_trial<T: Real>(
    model: &ManipulatorModel<T>,
    params: &ObserverParams<T>,
    config: &SimulationConfig<T>,
    index: usize,
    gamma: T,
    floor: T,
) -> Result<TrialOutcome<T>> {
    let traj = simulate(model, params, config).map_err(|f| f.error)?;
    let (fit, exact) = match fit_envelope(&traj, floor) {
        Ok(fit) => (Some(fit), false),
        Err(Error::InsufficientData { .. }) if traj.scaled_error_norms.iter().all(|&e| !(e > floor)) => (None, true),
        Err(e) => return Err(e),
    };
    let satisfied = exact || fit.as_ref().is_some_and(|f| f.gamma_hat >= gamma);
    Ok(TrialOutcome {
        index,
        observer_initial: config.observer_initial.clone(),
        initial_error: traj.initial_error().unwrap_or_else(T::zero),
        final_error: traj.final_error().unwrap_or_else(T::zero),
        fit,
        exact_tracking: exact,
        satisfied,
    })
}

/// Draws the observer initial state of trial `index`. Each trial has its own
/// random stream so results do not depend on scheduling.
pub fn sample_observer_initial<T: Real>(
    plant: &PlantState<T>,
    v_bounds: &[T],
    epsilon: T,
    seed: u64,
    index: usize,
) -> ObserverState<T> {
    let n = plant.q.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if len > 0.0 {
        dir.iter_mut().for_each(|d| *d /= len);
    }
    // uniform in the open ball: radius ε·U^(1/n) with U ∈ [0, 1)
    let radius = epsilon * T::lit(rng.random::<f64>().powf(1.0 / n as f64));
    let q_hat = plant
        .q
        .iter()
        .zip(&dir)
        .map(|(&q, &d)| q + radius * T::lit(d))
        .collect();
    let v_hat = v_bounds
        .iter()
        .map(|&b| b * T::lit(rng.random_range(-1.0..=1.0)))
        .collect();
    ObserverState { q_hat, v_hat }
}

/// Runs `spec.trials` simulations from randomized observer initial states and
/// reports which reach the decay rate `spec.gamma`.
pub fn initial_state_campaign<T: Real>(
    model: &ManipulatorModel<T>,
    params: &ObserverParams<T>,
    template: &SimulationConfig<T>,
    spec: &CampaignSpec<T>,
) -> Result<CampaignReport<T>> {
    if !(spec.epsilon > T::zero()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if spec.trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let trials: Vec<TrialOutcome<T>> = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let mut cfg = template.clone();
            cfg.observer_initial =
                sample_observer_initial(&template.plant_initial, &params.v_bounds, spec.epsilon, spec.seed, i);
            evaluate_trial(model, params, &cfg, i, spec.gamma, spec.floor)
        })
        .collect::<Result<_>>()?;
    let ok = trials.iter().filter(|t| t.satisfied).count();
    Ok(CampaignReport {
        spec: spec.clone(),
        fraction_satisfied: ok as f64 / trials.len() as f64,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::pendubot;

    #[test]
    fn rk4_exponential_decay() {
        let x = step_rk4(|_, x: &[f64]| Ok(vec![-x[0]]), &[1.0], 0.0, 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() <= 1e-5);
        // Taylor truncation: error ≈ h⁵/120
        assert!((x[0] - (-0.1f64).exp()).abs() <= 1e-7);
    }

    #[test]
    fn rk4_zero_field() {
        let x0 = [1.5, -2.0, 3.25];
        let x = step_rk4(|_, _: &[f64]| Ok(vec![0.0; 3]), &x0, 0.0, 0.7).unwrap();
        assert_eq!(x, x0.to_vec());
    }

    #[test]
    fn rk4_harmonic_period() {
        let period = 2.0 * std::f64::consts::PI;
        let dt = period / 1000.0;
        let mut x = vec![1.0, 0.0];
        for k in 0..1000 {
            x = step_rk4(|_, s: &[f64]| Ok(vec![s[1], -s[0]]), &x, k as f64 * dt, dt).unwrap();
        }
        assert!((x[0] - 1.0).abs() < 1e-10 && x[1].abs() < 1e-10, "{x:?}");
    }

    #[test]
    fn rk4_detects_blowup() {
        let r = step_rk4(|_, _: &[f64]| Ok(vec![f64::INFINITY]), &[0.0], 2.0, 0.5);
        assert_eq!(r, Err(Error::Divergence { t: 2.5 }));
    }

    #[test]
    fn input_signals() {
        let s = InputSignal::sine(1.5, 100.0);
        assert_eq!(s.eval(0.0), vec![0.0]);
        assert!((s.eval(0.01)[0] - 1.5 * 1.0f64.sin()).abs() < 1e-15);
        let table = InputSignal::Table {
            times: vec![0.0, 1.0, 2.0],
            values: vec![vec![1.0], vec![2.0], vec![3.0]],
        };
        assert_eq!(table.eval(-1.0), vec![1.0]);
        assert_eq!(table.eval(1.0), vec![2.0]);
        assert_eq!(table.eval(1.99), vec![2.0]);
        assert_eq!(table.eval(7.0), vec![3.0]);
        let bad = InputSignal::Table {
            times: vec![0.0, 0.0],
            values: vec![vec![1.0], vec![2.0]],
        };
        assert!(bad.validate().is_err());
    }

    fn exp_trajectory(f: impl Fn(f64) -> f64) -> Trajectory<f64> {
        let mut traj = Trajectory::default();
        for k in 0..200 {
            let t = k as f64 * 0.01;
            traj.times.push(t);
            traj.scaled_error_norms.push(f(t));
            traj.error_norms.push(f(t));
        }
        traj
    }

    #[test]
    fn fit_exact_exponential() {
        let fit = fit_envelope(&exp_trajectory(|t| 2.0 * (-3.0 * t).exp()), 1e-10).unwrap();
        assert!((fit.gamma_hat - 3.0).abs() < 1e-6);
        assert!((fit.k_hat - 1.0).abs() < 1e-6);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn fit_constant_error() {
        let fit = fit_envelope(&exp_trajectory(|_| 0.25), 1e-10).unwrap();
        assert!(fit.gamma_hat.abs() < 1e-9);
    }

    #[test]
    fn fit_needs_samples_above_floor() {
        let r = fit_envelope(&exp_trajectory(|t| if t < 0.05 { 1.0 } else { 0.0 }), 1e-10);
        assert!(matches!(r, Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn config_validation() {
        let model = pendubot::<f64>();
        let params = ObserverParams::new(1.0, 1.0, 200.0, vec![10.0, 10.0]).unwrap();
        let plant = PlantState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let mut cfg = SimulationConfig {
            dt: 2e-5,
            t_final: 0.01,
            record_stride: 1,
            observer_initial: ObserverState::from_plant(&plant),
            plant_initial: plant,
            input: InputSignal::sine(1.5, 100.0),
        };
        assert!(cfg.validate(&model, &params).unwrap().is_empty());
        cfg.dt = 1e-2;
        assert_eq!(cfg.validate(&model, &params).unwrap().len(), 1);
        cfg.dt = 0.0;
        assert!(cfg.validate(&model, &params).is_err());
        cfg.dt = 1e-3;
        cfg.record_stride = 0;
        assert!(cfg.validate(&model, &params).is_err());
        cfg.record_stride = 1;
        cfg.input = InputSignal::Zero { channels: 2 };
        assert!(cfg.validate(&model, &params).is_err());
    }

    #[test]
    fn samples_respect_ball_and_box() {
        let plant = PlantState::new(vec![0.3, -0.2], vec![0.0, 0.0]).unwrap();
        for i in 0..200 {
            let o = sample_observer_initial(&plant, &[10.0, 2.0], 0.01, 99, i);
            let dq = ((o.q_hat[0] - 0.3f64).powi(2) + (o.q_hat[1] + 0.2f64).powi(2)).sqrt();
            assert!(dq < 0.01);
            assert!(o.v_hat[0].abs() <= 10.0 && o.v_hat[1].abs() <= 2.0);
        }
        assert_eq!(
            sample_observer_initial(&plant, &[1.0, 1.0], 0.1, 5, 3),
            sample_observer_initial(&plant, &[1.0, 1.0], 0.1, 5, 3)
        );
    }
}
