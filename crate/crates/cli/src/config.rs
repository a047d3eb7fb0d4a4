//! Declarative scenario files (TOML).
//!
//! ```toml
//! [model]
//! builtin = "pendubot"          # or an inline [model.pendubot] / [model.constant_inertia] block
//!
//! [observer]
//! alpha = 1.0
//! beta = 1.0
//! theta = 200.0                 # optional: synthesized from gains.gamma_target when absent
//! v_bounds = [10.0, 10.0]
//!
//! [gains]
//! gamma_target = 1.27
//! lipschitz_override = 54.01    # optional: skip sampling
//!
//! [initial]
//! plant_q = [-1.5707963267948966, 0.0]
//! ...
//! ```

use std::path::{Path, PathBuf};

use obslab_core::{
    constant_inertia_model, pendubot, pendubot_with, InputSignal, LipschitzRule, LipschitzSource, ManipulatorModel,
    Matrix, ObserverParams, ObserverState, PendubotParams, PlantState, SamplingPlan, SimulationConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_OUT_DIR: &str = "obslab-out";

/// Scenario exactly as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub observer: ObserverSection,
    #[serde(default)]
    pub gains: GainsSection,
    pub initial: InitialSection,
    pub input: InputSignal<f64>,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Exactly one of the three fields must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pendubot: Option<InlinePendubot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_inertia: Option<InlineConstantInertia>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePendubot {
    pub pi: [f64; 5],
    #[serde(default = "default_g0")]
    pub g0: f64,
    #[serde(default)]
    pub friction: Option<Vec<f64>>,
}

fn default_g0() -> f64 {
    PendubotParams::<f64>::default().g0
}

/// Constant, symmetric positive-definite inertia without Coriolis or gravity
/// terms; every joint is actuated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineConstantInertia {
    pub inertia: Vec<Vec<f64>>,
    #[serde(default)]
    pub friction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub v_bounds: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    /// Decay rate the design must guarantee.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_target: Option<f64>,
    /// Known Lipschitz constant `L`; sampling is skipped when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_override: Option<f64>,
    #[serde(default)]
    pub rule: LipschitzRule,
    #[serde(default)]
    pub sampling: SamplingPlan<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub plant_q: Vec<f64>,
    pub plant_v: Vec<f64>,
    pub observer_q: Vec<f64>,
    pub observer_v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Samples at or below this scaled error are excluded from envelope fits.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_stride() -> usize {
    1
}

fn default_floor() -> f64 {
    obslab_core::sim::DEFAULT_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    /// Radius of the ball of initial position estimates around `q(0)`.
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            trials: 20,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

/// Config after validation against the core types.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub raw: ScenarioConfig,
    pub model: ManipulatorModel<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub v_bounds: Vec<f64>,
    pub theta: Option<f64>,
    pub gamma_target: Option<f64>,
    pub lipschitz: LipschitzSource<f64>,
    pub simulation: SimulationConfig<f64>,
    pub floor: f64,
}

fn field(name: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {err}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.simulation.dt = dt;
        }
        if let Some(theta) = o.theta {
            self.observer.theta = Some(theta);
        }
        if let Some(seed) = o.seed {
            self.campaign.seed = seed;
            self.gains.sampling.seed = seed;
        }
        if let Some(trials) = o.trials {
            self.campaign.trials = trials;
        }
    }

    /// Builds and validates every core object; errors name the offending field.
    pub fn validate(&self) -> Result<Scenario, CliError> {
        let model = self.build_model()?;
        let o = &self.observer;
        // θ may be synthesized later; validate α, β, V with a placeholder gain
        ObserverParams::new(o.alpha, o.beta, o.theta.unwrap_or(1.0), o.v_bounds.clone()).map_err(|e| {
            let name = if !(o.alpha > 0.0) {
                "observer.alpha"
            } else if !(o.beta > 0.0) {
                "observer.beta"
            } else if o.theta.is_some_and(|t| !(t > 0.0)) {
                "observer.theta"
            } else {
                "observer.v_bounds"
            };
            field(name, e)
        })?;
        if o.v_bounds.len() != model.dof() {
            return Err(field(
                "observer.v_bounds",
                format!("expected {} entries, found {}", model.dof(), o.v_bounds.len()),
            ));
        }
        let g = &self.gains;
        if let Some(gamma) = g.gamma_target {
            if !(gamma >= 0.0) || !gamma.is_finite() {
                return Err(field("gains.gamma_target", "must be finite and nonnegative"));
            }
        }
        if o.theta.is_none() && g.gamma_target.is_none() {
            return Err(field(
                "observer.theta",
                "absent, so gains.gamma_target is required to synthesize it",
            ));
        }
        let lipschitz = match g.lipschitz_override {
            Some(l) if !(l >= 0.0) || !l.is_finite() => {
                return Err(field("gains.lipschitz_override", "must be finite and nonnegative"))
            }
            Some(l) => LipschitzSource::Fixed(l),
            None => {
                if g.sampling.q_samples == 0 {
                    return Err(field("gains.sampling.q_samples", "must be positive"));
                }
                if !(g.sampling.safety_factor >= 1.0) {
                    return Err(field("gains.sampling.safety_factor", "must be at least 1"));
                }
                LipschitzSource::Sampled {
                    plan: g.sampling.clone(),
                    rule: g.rule,
                }
            }
        };

        let i = &self.initial;
        let plant_initial =
            PlantState::new(i.plant_q.clone(), i.plant_v.clone()).map_err(|e| field("initial.plant_v", e))?;
        let observer_initial = ObserverState::new(i.observer_q.clone(), i.observer_v.clone())
            .map_err(|e| field("initial.observer_v", e))?;
        for (name, len) in [
            ("initial.plant_q", i.plant_q.len()),
            ("initial.observer_q", i.observer_q.len()),
        ] {
            if len != model.dof() {
                return Err(field(name, format!("expected {} entries, found {len}", model.dof())));
            }
        }
        let s = &self.simulation;
        let simulation = SimulationConfig {
            dt: s.dt,
            t_final: s.t_final,
            record_stride: s.record_stride,
            plant_initial,
            observer_initial,
            input: self.input.clone(),
        };
        self.input.validate().map_err(|e| field("input", e))?;
        if self.input.channels() != model.input_dim() {
            return Err(field(
                "input",
                format!(
                    "model has {} inputs, signal has {}",
                    model.input_dim(),
                    self.input.channels()
                ),
            ));
        }
        let probe = ObserverParams::new(o.alpha, o.beta, o.theta.unwrap_or(1.0), o.v_bounds.clone())
            .map_err(|e| field("observer", e))?;
        simulation.validate(&model, &probe).map_err(|e| {
            let name = if !(s.dt > 0.0) {
                "simulation.dt"
            } else if !(s.t_final >= s.dt) {
                "simulation.t_final"
            } else if s.record_stride == 0 {
                "simulation.record_stride"
            } else {
                "simulation"
            };
            field(name, e)
        })?;
        if !(s.floor >= 0.0) {
            return Err(field("simulation.floor", "must be nonnegative"));
        }
        let c = &self.campaign;
        if !(c.epsilon > 0.0) || !c.epsilon.is_finite() {
            return Err(field("campaign.epsilon", "must be positive"));
        }
        if c.trials == 0 {
            return Err(field("campaign.trials", "must be at least 1"));
        }
        if self.output.trajectory.is_empty() {
            return Err(field("output.trajectory", "must not be empty"));
        }

        Ok(Scenario {
            raw: self.clone(),
            model,
            alpha: o.alpha,
            beta: o.beta,
            v_bounds: o.v_bounds.clone(),
            theta: o.theta,
            gamma_target: g.gamma_target,
            lipschitz,
            simulation,
            floor: s.floor,
        })
    }

    fn build_model(&self) -> Result<ManipulatorModel<f64>, CliError> {
        let m = &self.model;
        let set = [m.builtin.is_some(), m.pendubot.is_some(), m.constant_inertia.is_some()]
            .iter()
            .filter(|x| **x)
            .count();
        if set != 1 {
            return Err(field(
                "model",
                "set exactly one of `builtin`, `pendubot` or `constant_inertia`",
            ));
        }
        if let Some(name) = &m.builtin {
            return match name.as_str() {
                "pendubot" => Ok(pendubot()),
                other => Err(field(
                    "model.builtin",
                    format!("unknown model `{other}` (known: pendubot)"),
                )),
            };
        }
        if let Some(p) = &m.pendubot {
            let friction = p.friction.clone().unwrap_or_else(|| vec![0.0; 2]);
            return pendubot_with(PendubotParams { pi: p.pi, g0: p.g0 }, friction)
                .map_err(|e| field("model.pendubot", e));
        }
        let c = m.constant_inertia.as_ref().expect("one model variant is set");
        let n = c.inertia.len();
        if n == 0 || c.inertia.iter().any(|r| r.len() != n) {
            return Err(field(
                "model.constant_inertia.inertia",
                "must be a nonempty square matrix",
            ));
        }
        let friction = c.friction.clone().unwrap_or_else(|| vec![0.0; n]);
        constant_inertia_model(Matrix::from_rows(&c.inertia), friction).map_err(|e| field("model.constant_inertia", e))
    }
}

impl Scenario {
    pub fn out_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.raw.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn params(&self, theta: f64) -> Result<ObserverParams<f64>, CliError> {
        ObserverParams::new(self.alpha, self.beta, theta, self.v_bounds.clone()).map_err(|e| field("observer.theta", e))
    }
}
