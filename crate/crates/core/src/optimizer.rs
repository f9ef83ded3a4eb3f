//! Welfare-maximizing calibration of the abatement policy.
//!
//! Projected gradient ascent on the annual grid with Barzilai-Borwein step
//! lengths and a monotone Armijo backtracking line search. Gradients are
//! central finite differences of re-simulated trajectory tails.

use serde::{Deserialize, Serialize};

use crate::engine::{welfare, AbatementPolicy, DiceModel, Trajectory};
use crate::error::DiceError;
use crate::params::Violation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Largest change of any abatement coordinate in the first iteration.
    pub gradient_step: f64,
    /// Stationarity threshold on the max-norm of the projected welfare
    /// gradient.
    pub tolerance: f64,
    /// Finite-difference bump for abatement sensitivities.
    pub bump_size: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            gradient_step: 0.05,
            tolerance: 1e-3,
            bump_size: 1e-4,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut require = |ok: bool, field: &str, rule: &str| {
            if !ok {
                out.push(Violation::new(format!("{prefix}{field}"), rule));
            }
        };
        require(self.max_iterations > 0, "max_iterations", "must be > 0");
        require(
            self.gradient_step.is_finite() && self.gradient_step > 0.0,
            "gradient_step",
            "must be > 0",
        );
        require(
            self.tolerance > 0.0 && self.tolerance < 1.0,
            "tolerance",
            "must lie in (0, 1)",
        );
        require(
            self.bump_size > 0.0 && self.bump_size <= 1e-3,
            "bump_size",
            "must lie in (0, 1e-3]",
        );
        out
    }
}

/// Outcome of a calibration run.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub policy: AbatementPolicy,
    pub welfare: f64,
    /// Welfare after every accepted iteration, starting with the initial
    /// policy.
    pub welfare_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the projected gradient at the returned policy.
    pub projected_gradient_norm: f64,
    /// Welfare gradient at the returned policy.
    pub gradient: Vec<f64>,
}

/// Per-period sensitivity dV(0)/dμ(t_j). Central differences where the bumped
/// points stay inside [0, max_abatement], one-sided otherwise.
pub fn welfare_gradient(
    model: &DiceModel,
    policy: &AbatementPolicy,
    bump_size: f64,
) -> Result<Vec<f64>, DiceError> {
    let base = model.simulate(policy)?;
    gradient_at(model, policy, &base, bump_size)
}

fn gradient_at(
    model: &DiceModel,
    policy: &AbatementPolicy,
    base: &Trajectory,
    bump: f64,
) -> Result<Vec<f64>, DiceError> {
    let max = model.params().max_abatement;
    (0..model.periods())
        .map(|j| {
            let mu = policy.mu[j];
            let lo = (mu - bump).max(0.0);
            let hi = (mu + bump).min(max);
            let delta = |value: f64| -> Result<f64, DiceError> {
                if value == mu {
                    return Ok(0.0);
                }
                model
                    .tail_welfare_change(base, policy, j, value, None)
                    .map_err(|e| DiceError::Sensitivity {
                        period: j,
                        reason: e.to_string(),
                    })
            };
            let g = (delta(hi)? - delta(lo)?) / (hi - lo);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(DiceError::Sensitivity {
                    period: j,
                    reason: format!("welfare gradient is {g}"),
                })
            }
        })
        .collect()
}

/// Gradient with components pointing out of the box at active bounds
/// removed.
pub fn projected_gradient(policy: &AbatementPolicy, gradient: &[f64], max: f64) -> Vec<f64> {
    policy
        .mu
        .iter()
        .zip(gradient)
        .map(|(&mu, &g)| {
            if (mu <= 0.0 && g < 0.0) || (mu >= max && g > 0.0) {
                0.0
            } else {
                g
            }
        })
        .collect()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn project(x: f64, max: f64) -> f64 {
    x.clamp(0.0, max)
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;

/// Calibrates μ to a stationary point of the welfare objective.
pub fn calibrate(
    model: &DiceModel,
    initial_policy: &AbatementPolicy,
    settings: &OptimizerSettings,
) -> Result<Calibration, DiceError> {
    let max = model.params().max_abatement;
    let n = model.periods();
    initial_policy.check(n, max)?;
    if let Some(v) = settings.validate("optimizer.").into_iter().next() {
        return Err(DiceError::Calibration(v.to_string()));
    }

    let mut policy = initial_policy.clone();
    let base = model
        .simulate(&policy)
        .map_err(|e| DiceError::Calibration(format!("initial policy: {e}")))?;
    let mut value = welfare(&base)?;
    let mut grad = gradient_at(model, &policy, &base, settings.bump_size)?;
    let mut history = vec![value];

    let initial_norm = max_norm(&grad).max(f64::MIN_POSITIVE);
    let mut step = (settings.gradient_step / initial_norm).clamp(STEP_MIN, STEP_MAX);
    let mut iterations = 0;

    loop {
        let pg = projected_gradient(&policy, &grad, max);
        let pg_norm = max_norm(&pg);
        if pg_norm <= settings.tolerance {
            return Ok(Calibration {
                policy,
                welfare: value,
                welfare_history: history,
                iterations,
                converged: true,
                projected_gradient_norm: pg_norm,
                gradient: grad,
            });
        }
        if iterations >= settings.max_iterations {
            return Ok(Calibration {
                policy,
                welfare: value,
                welfare_history: history,
                iterations,
                converged: false,
                projected_gradient_norm: pg_norm,
                gradient: grad,
            });
        }

        // Coordinates whose welfare is flat within tolerance keep their value.
        let direction: Vec<f64> = policy
            .mu
            .iter()
            .zip(&grad)
            .map(|(&mu, &g)| {
                if g.abs() < settings.tolerance {
                    0.0
                } else {
                    project(mu + step * g, max) - mu
                }
            })
            .collect();
        let slope: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = AbatementPolicy::new(
                policy
                    .mu
                    .iter()
                    .zip(&direction)
                    .map(|(&mu, &d)| project(mu + lambda * d, max))
                    .collect(),
            );
            if let Ok(traj) = model.simulate(&trial) {
                if let Ok(v) = welfare(&traj) {
                    if v >= value + ARMIJO * lambda * slope && v >= value {
                        accepted = Some((trial, traj, v));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, traj, trial_value)) = accepted else {
            if slope <= settings.tolerance * f64::EPSILON.sqrt() {
                // No ascent left at machine precision; report as-is.
                return Ok(Calibration {
                    policy,
                    welfare: value,
                    welfare_history: history,
                    iterations,
                    converged: false,
                    projected_gradient_norm: pg_norm,
                    gradient: grad,
                });
            }
            return Err(DiceError::Calibration(format!(
                "line search failed at iteration {iterations}"
            )));
        };

        let trial_grad = gradient_at(model, &trial, &traj, settings.bump_size)
            .map_err(|e| DiceError::Calibration(e.to_string()))?;
        let (mut ss, mut sy) = (0.0, 0.0);
        for j in 0..n {
            let s = trial.mu[j] - policy.mu[j];
            let y = trial_grad[j] - grad[j];
            ss += s * s;
            sy += s * y;
        }
        // Ascent: curvature along s is -s·y.
        step = if sy < 0.0 {
            (ss / -sy).clamp(STEP_MIN, STEP_MAX)
        } else {
            (step * 2.0).min(STEP_MAX)
        };

        policy = trial;
        value = trial_value;
        grad = trial_grad;
        history.push(value);
        iterations += 1;
    }
}
