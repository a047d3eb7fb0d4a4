//! Subcommand implementations. Each returns a machine-readable report, writes
//! it to the output directory and, unless quiet, prints a text summary.

use std::path::PathBuf;

use obslab_core::sim::{check_lyapunov_decrease, fastest_rate, LyapunovCheck, ACCURACY_RATE_DT};
use obslab_core::{
    fit_envelope, initial_state_campaign, simulate, synthesize, CampaignReport, CampaignSpec, EnvelopeFit, Error,
    GainSynthesis, LipschitzSource, ObserverState,
};
use serde::Serialize;

use crate::config::Scenario;
use crate::{trajectory_csv, CliError};

/// Largest raw error norm accepted as exact tracking.
pub const EXACT_TRACKING_TOL: f64 = 1e-9;
/// Per-sample relative increase of `V(ξ, ζ)` tolerated as discretization noise.
pub const LYAPUNOV_REL_TOL: f64 = 1e-8;

/// Where results go and whether to print them.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn prepare(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.prepare()?;
        let path = self.out_dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn core_err(e: Error) -> CliError {
    match e {
        Error::Divergence { t } => CliError::Divergence { t, suggested_dt: None },
        Error::InvalidArgument(msg) | Error::NoSolution(msg) => CliError::Config(msg),
        other => CliError::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub alpha: f64,
    pub beta: f64,
    pub s_norm: f64,
    pub lyapunov_residual: f64,
    pub m0: Option<f64>,
    pub b: Option<f64>,
    pub friction_norm: f64,
    pub lipschitz_l: f64,
    /// `override`, `sampled (coupled)` or `sampled (factored)`.
    pub lipschitz_source: String,
    pub gamma: f64,
    pub theta_star: f64,
    /// Configured gain, if any.
    pub theta: Option<f64>,
    /// Guaranteed rate at `theta`; `None` when `theta` is unset or at or
    /// below `2‖S‖L`.
    pub achieved_rate: Option<f64>,
    pub synthesis: GainSynthesis<f64>,
}

fn gamma_required(s: &Scenario) -> Result<f64, CliError> {
    s.gamma_target
        .ok_or_else(|| CliError::Config("gains.gamma_target: required by this command".into()))
}

fn run_synthesis(s: &Scenario, gamma: f64) -> Result<GainSynthesis<f64>, CliError> {
    synthesize(s.alpha, s.beta, &s.model, &s.v_bounds, gamma, &s.lipschitz).map_err(core_err)
}

fn source_label(s: &Scenario) -> String {
    match &s.lipschitz {
        LipschitzSource::Fixed(_) => "override".into(),
        LipschitzSource::Sampled { rule, .. } => format!("sampled ({})", format!("{rule:?}").to_lowercase()),
    }
}

pub fn cmd_synthesize(s: &Scenario, ctx: &Context) -> Result<SynthesisReport, CliError> {
    let gamma = gamma_required(s)?;
    let syn = run_synthesis(s, gamma)?;
    let report = SynthesisReport {
        alpha: s.alpha,
        beta: s.beta,
        s_norm: syn.s_norm,
        lyapunov_residual: syn.lyapunov_residual,
        m0: syn.m0,
        b: syn.b_bound,
        friction_norm: syn.friction_norm,
        lipschitz_l: syn.lipschitz_l,
        lipschitz_source: source_label(s),
        gamma,
        theta_star: syn.theta_star,
        theta: s.theta,
        achieved_rate: s.theta.and_then(|t| syn.achieved_rate(t).ok()),
        synthesis: syn,
    };
    let path = ctx.write_json("synthesis.json", &report)?;
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
    ctx.say(format!(
        "gain synthesis ({} model, alpha = {}, beta = {})",
        s.model.name(),
        s.alpha,
        s.beta
    ));
    ctx.say(format!("  ‖S‖       = {:.6}", report.s_norm));
    ctx.say(format!("  M0        = {}", opt(report.m0)));
    ctx.say(format!("  B         = {}", opt(report.b)));
    ctx.say(format!(
        "  L         = {:.6} ({})",
        report.lipschitz_l, report.lipschitz_source
    ));
    ctx.say(format!("  gamma     = {}", report.gamma));
    ctx.say(format!("  theta*    = {:.6}", report.theta_star));
    if let Some(theta) = report.theta {
        match report.achieved_rate {
            Some(rate) => ctx.say(format!("  rate at theta = {theta}: {rate:.6}")),
            None => ctx.say(format!("  rate at theta = {theta}: not guaranteed (theta ≤ 2‖S‖L)")),
        }
    }
    ctx.say(format!("  report: {}", path.display()));
    Ok(report)
}

/// Configured θ, or `θ*` for the target rate when none is configured.
fn resolve_theta(s: &Scenario) -> Result<(f64, Option<GainSynthesis<f64>>), CliError> {
    match s.theta {
        Some(t) => Ok((t, None)),
        None => {
            let syn = run_synthesis(s, gamma_required(s)?)?;
            Ok((syn.theta_star, Some(syn)))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub theta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub samples: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub max_error: f64,
    pub exact_tracking: bool,
    /// `None` when the error never exceeded the fit floor.
    pub envelope: Option<EnvelopeFit<f64>>,
    pub plant_velocity_within_bounds: bool,
    pub domain_violations: usize,
    pub warnings: Vec<String>,
    pub trajectory: PathBuf,
}

pub fn cmd_simulate(s: &Scenario, ctx: &Context) -> Result<SimulationSummary, CliError> {
    let (theta, _) = resolve_theta(s)?;
    let params = s.params(theta)?;
    let warnings = s.simulation.validate(&s.model, &params).map_err(core_err)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    ctx.prepare()?;
    let csv_name = s.raw.output.trajectory.clone();
    let csv_path = ctx.out_dir.join(&csv_name);
    let (n, m) = (s.model.dof(), s.model.input_dim());
    let traj = match simulate(&s.model, &params, &s.simulation) {
        Ok(traj) => traj,
        Err(failure) => {
            trajectory_csv::write_file(&failure.partial, n, m, &csv_path)?;
            return Err(match failure.error {
                Error::Divergence { t } => {
                    let rate = fastest_rate(&params, &s.simulation.input);
                    let suggested = (s.simulation.dt / 4.0).min(ACCURACY_RATE_DT / rate);
                    CliError::Divergence {
                        t,
                        suggested_dt: Some(suggested),
                    }
                }
                other => core_err(other),
            });
        }
    };
    trajectory_csv::write_file(&traj, n, m, &csv_path)?;
    std::fs::write(
        ctx.out_dir.join("plot.gp"),
        trajectory_csv::gnuplot_script(&csv_name, n, m),
    )
    .map_err(|e| CliError::Io(e.to_string()))?;

    let envelope = match fit_envelope(&traj, s.floor) {
        Ok(fit) => Some(fit),
        Err(Error::InsufficientData { .. }) => None,
        Err(e) => return Err(core_err(e)),
    };
    let summary = SimulationSummary {
        theta,
        dt: s.simulation.dt,
        t_final: s.simulation.t_final,
        samples: traj.len(),
        initial_error: traj.initial_error().unwrap_or(0.0),
        final_error: traj.final_error().unwrap_or(0.0),
        max_error: traj.max_error(),
        exact_tracking: traj.max_error() <= EXACT_TRACKING_TOL,
        envelope,
        plant_velocity_within_bounds: traj.plant_velocity_within(&s.v_bounds),
        domain_violations: traj.domain_violation_flags.iter().filter(|f| **f).count(),
        warnings,
        trajectory: csv_path,
    };
    ctx.write_json("summary.json", &summary)?;
    ctx.say(format!(
        "simulated {} s at dt = {} with theta = {theta} ({} samples)",
        summary.t_final, summary.dt, summary.samples
    ));
    ctx.say(format!(
        "  error norm: initial {:e}, final {:e}, max {:e}",
        summary.initial_error, summary.final_error, summary.max_error
    ));
    if summary.exact_tracking {
        ctx.say(format!("  exact tracking: max error ≤ {EXACT_TRACKING_TOL:e}"));
    }
    match &summary.envelope {
        Some(fit) => ctx.say(format!(
            "  envelope: gamma_hat = {:.4}, k_hat = {:.4} over t ∈ [{}, {}] ({} samples)",
            fit.gamma_hat, fit.k_hat, fit.fit_window.0, fit.fit_window.1, fit.samples
        )),
        None => ctx.say("  envelope: error stayed below the fit floor"),
    }
    if !summary.plant_velocity_within_bounds {
        ctx.say("  note: plant velocity left the configured bounds v_bounds");
    }
    if summary.domain_violations > 0 {
        ctx.say(format!(
            "  note: {} samples outside the joint domain",
            summary.domain_violations
        ));
    }
    ctx.say(format!("  trajectory: {}", summary.trajectory.display()));
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    /// Failed although the convergence guarantee applies.
    Violated,
    /// Failed where the guarantee does not apply (θ below θ* or plant
    /// velocity outside the bounds): informative, not an error.
    NotGuaranteed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub theta: f64,
    pub gamma: f64,
    pub theta_star: f64,
    /// Decay rate the design guarantees at `theta`, if any.
    pub guaranteed_rate: Option<f64>,
    pub plant_velocity_within_bounds: bool,
    /// `theta ≥ theta_star` and the plant velocity stayed within the bounds.
    pub guaranteed: bool,
    pub checks: Vec<Check>,
    pub campaign: CampaignReport<f64>,
    pub lyapunov: LyapunovCheck<f64>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Violated)
    }
}

pub fn cmd_verify(s: &Scenario, ctx: &Context) -> Result<VerificationReport, CliError> {
    let gamma = gamma_required(s)?;
    let syn = run_synthesis(s, gamma)?;
    let theta = s.theta.unwrap_or(syn.theta_star);
    let params = s.params(theta)?;
    let sim_err = |f: obslab_core::SimulationFailure<f64>| core_err(f.error);

    let nominal = simulate(&s.model, &params, &s.simulation).map_err(sim_err)?;
    let within = nominal.plant_velocity_within(&s.v_bounds);
    let guaranteed = theta >= syn.theta_star && within;
    let judge = |ok: bool, structural: bool| match (ok, structural || guaranteed) {
        (true, _) => CheckStatus::Pass,
        (false, true) => CheckStatus::Violated,
        (false, false) => CheckStatus::NotGuaranteed,
    };
    let mut checks = Vec::new();

    let mut exact_cfg = s.simulation.clone();
    exact_cfg.observer_initial = ObserverState::from_plant(&exact_cfg.plant_initial);
    let exact = simulate(&s.model, &params, &exact_cfg).map_err(sim_err)?;
    checks.push(Check {
        name: "exact tracking".into(),
        status: judge(exact.max_error() <= EXACT_TRACKING_TOL, true),
        detail: format!("max error {:e} (limit {EXACT_TRACKING_TOL:e})", exact.max_error()),
    });

    let (env_ok, env_detail) = match fit_envelope(&nominal, s.floor) {
        Ok(fit) => (
            fit.gamma_hat >= gamma,
            format!("gamma_hat = {:.4} vs gamma = {gamma}", fit.gamma_hat),
        ),
        Err(Error::InsufficientData { .. }) if nominal.max_error() <= EXACT_TRACKING_TOL => {
            (true, "error never above the fit floor".into())
        }
        Err(e) => (false, e.to_string()),
    };
    checks.push(Check {
        name: "envelope rate".into(),
        status: judge(env_ok, false),
        detail: env_detail,
    });

    let lyapunov = check_lyapunov_decrease(&nominal, &syn.s, theta, s.floor, LYAPUNOV_REL_TOL).map_err(core_err)?;
    checks.push(Check {
        name: "Lyapunov decrease".into(),
        status: judge(lyapunov.passed(), false),
        detail: format!(
            "{} violations in {} sample pairs (max relative increase {:e})",
            lyapunov.violations, lyapunov.pairs_checked, lyapunov.max_relative_increase
        ),
    });

    let c = &s.raw.campaign;
    let spec = CampaignSpec {
        epsilon: c.epsilon,
        trials: c.trials,
        seed: c.seed,
        gamma,
        floor: s.floor,
    };
    let campaign = initial_state_campaign(&s.model, &params, &s.simulation, &spec).map_err(core_err)?;
    checks.push(Check {
        name: "initial-state campaign".into(),
        status: judge(campaign.all_satisfied(), false),
        detail: format!(
            "{}/{} trials reach gamma (epsilon = {}, seed = {})",
            campaign.trials.iter().filter(|t| t.satisfied).count(),
            campaign.trials.len(),
            c.epsilon,
            c.seed
        ),
    });

    let report = VerificationReport {
        theta,
        gamma,
        theta_star: syn.theta_star,
        guaranteed_rate: syn.achieved_rate(theta).ok(),
        plant_velocity_within_bounds: within,
        guaranteed,
        checks,
        campaign,
        lyapunov,
    };
    let path = ctx.write_json("verify.json", &report)?;
    ctx.say(format!(
        "verification at theta = {theta} (theta* = {:.4} for gamma = {gamma})",
        report.theta_star
    ));
    let rate = report
        .guaranteed_rate
        .map_or("none (theta ≤ 2‖S‖L)".to_string(), |r| format!("{r:.4}"));
    ctx.say(format!(
        "  guaranteed rate at theta: {rate}; plant velocity within bounds: {}; rate checks {}",
        report.plant_velocity_within_bounds,
        if guaranteed {
            "are guaranteed"
        } else {
            "are not guaranteed"
        }
    ));
    for check in &report.checks {
        let label = match check.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Violated => "FAIL",
            CheckStatus::NotGuaranteed => "FAIL (not guaranteed)",
        };
        ctx.say(format!("  {label} {}: {}", check.name, check.detail));
    }
    ctx.say(format!("  report: {}", path.display()));
    Ok(report)
}

/// The shipped scenario reproducing the Pendubot example.
pub const PENDUBOT_SCENARIO: &str = include_str!("../examples/pendubot.toml");
