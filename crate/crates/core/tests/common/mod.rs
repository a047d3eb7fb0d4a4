//! Pendubot reproduction scenario shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use obslab_core::{InputSignal, ObserverParams, ObserverState, PlantState, SimulationConfig};

pub const THETA: f64 = 200.0;
pub const V_BOUNDS: [f64; 2] = [10.0, 10.0];
pub const DT: f64 = 2e-5;
pub const INPUT_AMPLITUDE: f64 = 1.5;
pub const INPUT_FREQUENCY: f64 = 100.0;

pub fn params() -> ObserverParams<f64> {
    ObserverParams::new(1.0, 1.0, THETA, V_BOUNDS.to_vec()).unwrap()
}

pub fn plant_initial() -> PlantState<f64> {
    PlantState::new(vec![-FRAC_PI_2, 0.0], vec![0.0, 0.0]).unwrap()
}

pub fn observer_initial() -> ObserverState<f64> {
    ObserverState::new(vec![-FRAC_PI_2, 0.0], vec![2.0, 2.0]).unwrap()
}

/// Plant at rest at the lower equilibrium, observer velocity off by (2, 2),
/// shoulder torque `1.5 sin(100 t)`.
pub fn config(dt: f64, t_final: f64, record_stride: usize) -> SimulationConfig<f64> {
    SimulationConfig {
        dt,
        t_final,
        record_stride,
        plant_initial: plant_initial(),
        observer_initial: observer_initial(),
        input: InputSignal::sine(INPUT_AMPLITUDE, INPUT_FREQUENCY),
    }
}
