//! Implied interest rate of carbon.
//!
//! Raising μ(t_j) costs `dC_A(t_j)/dμ(t_j)` today and lowers damage costs in
//! every later period. r^SCC(t_j) is the continuously compounded internal
//! rate of return of that exchange:
//!
//! ```text
//! dC_A(t_j)/dμ(t_j) + Σ_{t_k ≥ t_j} dC_D(t_k)/dμ(t_j) · exp(−r (t_k − t_j)) = 0
//! ```

use crate::engine::{AbatementPolicy, DiceModel, Shock, Trajectory};
use crate::error::DiceError;
use crate::optimizer::welfare_gradient;

/// Default μ bump for cost sensitivities.
pub const DEFAULT_BUMP: f64 = 1e-4;
/// Damage sensitivities below this fraction of the row's peak are zeroed.
pub const TRUNCATION: f64 = 1e-8;
/// Initial IRR bracket (per year).
pub const RATE_BRACKET: (f64, f64) = (-0.5, 1.0);
/// Bracket used when the initial one shows no sign change.
pub const WIDE_RATE_BRACKET: (f64, f64) = (-1.0, 3.0);
const RATE_TOLERANCE: f64 = 1e-12;

/// Sensitivities of costs to μ(t_j), in $T per unit μ.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSensitivity {
    pub period: usize,
    /// dC_A(t_j)/dμ(t_j).
    pub abatement: f64,
    /// dC_D(t_k)/dμ(t_j) for k = j, j+1, ...
    pub damages: Vec<f64>,
}

/// Finite-difference cost sensitivities for period `t_j`. Central where the
/// bumped μ stays in bounds, one-sided otherwise.
pub fn cost_sensitivities(
    model: &DiceModel,
    policy: &AbatementPolicy,
    t_j: usize,
    bump: f64,
) -> Result<CostSensitivity, DiceError> {
    let base = model.simulate(policy)?;
    cost_sensitivities_at(model, policy, &base, t_j, bump)
}

pub(crate) fn cost_sensitivities_at(
    model: &DiceModel,
    policy: &AbatementPolicy,
    base: &Trajectory,
    t_j: usize,
    bump: f64,
) -> Result<CostSensitivity, DiceError> {
    if t_j >= model.periods() {
        return Err(DiceError::PeriodOutOfRange {
            period: t_j,
            periods: model.periods(),
        });
    }
    let mu = policy.mu[t_j];
    let lo = (mu - bump).max(0.0);
    let hi = (mu + bump).min(model.params().max_abatement);
    let tail = |value: f64| -> Result<(Vec<f64>, Vec<f64>), DiceError> {
        if value == mu {
            return Ok((
                base.abatement_cost[t_j..].to_vec(),
                base.damage_cost[t_j..].to_vec(),
            ));
        }
        let rows = model
            .tail_rows(base, policy, t_j, value)
            .map_err(|e| DiceError::Sensitivity {
                period: t_j,
                reason: e.to_string(),
            })?;
        Ok((
            rows.iter().map(|r| r.abatement_cost).collect(),
            rows.iter().map(|r| r.damage_cost).collect(),
        ))
    };
    let (abate_hi, damage_hi) = tail(hi)?;
    let (abate_lo, damage_lo) = tail(lo)?;
    let width = hi - lo;
    let abatement = (abate_hi[0] - abate_lo[0]) / width;
    let mut damages: Vec<f64> = damage_hi
        .iter()
        .zip(&damage_lo)
        .map(|(h, l)| (h - l) / width)
        .collect();
    let peak = damages.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    for d in damages.iter_mut() {
        if d.abs() < TRUNCATION * peak {
            *d = 0.0;
        }
    }
    if !abatement.is_finite() || damages.iter().any(|d| !d.is_finite()) {
        return Err(DiceError::Sensitivity {
            period: t_j,
            reason: "non-finite cost sensitivity".into(),
        });
    }
    Ok(CostSensitivity {
        period: t_j,
        abatement,
        damages,
    })
}

/// Residual `principal + Σ amount·exp(−r·time)` of timed cash flows.
pub fn irr_residual(principal: f64, flows: &[(f64, f64)], rate: f64) -> f64 {
    principal
        + flows
            .iter()
            .map(|(t, a)| a * (-rate * t).exp())
            .sum::<f64>()
}

fn bisect(principal: f64, flows: &[(f64, f64)], (low, high): (f64, f64)) -> Option<f64> {
    let f = |r: f64| irr_residual(principal, flows, r);
    let (f_low, f_high) = (f(low), f(high));
    if f_low == 0.0 {
        return Some(low);
    }
    if f_high == 0.0 {
        return Some(high);
    }
    if f_low.signum() == f_high.signum() || !f_low.is_finite() || !f_high.is_finite() {
        return None;
    }
    let (mut lo, mut hi) = (low, high);
    let increasing = f_high > f_low;
    while hi - lo > RATE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if (fm > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Internal rate of return of a principal paid at time 0 against repayments
/// at the given times (years). The bracket is widened once when it shows no
/// sign change.
pub fn irr_timed(principal: f64, flows: &[(f64, f64)]) -> Result<f64, DiceError> {
    bisect(principal, flows, RATE_BRACKET)
        .or_else(|| bisect(principal, flows, WIDE_RATE_BRACKET))
        .ok_or(DiceError::NoRoot {
            low: WIDE_RATE_BRACKET.0,
            high: WIDE_RATE_BRACKET.1,
        })
}

/// IRR with `repayments[k]` due `k · step_size` years after the principal.
pub fn irr_solve(principal: f64, repayments: &[f64], step_size: f64) -> Result<f64, DiceError> {
    let flows: Vec<(f64, f64)> = repayments
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(k, &a)| (k as f64 * step_size, a))
        .collect();
    irr_timed(principal, &flows)
}

/// One period of the r^SCC curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub period: usize,
    pub year: f64,
    /// `None` when no root exists in the bracket.
    pub r_scc: Option<f64>,
    pub abatement_sensitivity: f64,
    /// dV(0)/dμ(t_j) at the policy.
    pub welfare_gradient: f64,
    /// −α · d log(c)/dt, the decline rate of marginal utility of
    /// consumption per capita (per year).
    pub utility_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    /// Continuously compounded equivalent of the numeraire rate.
    pub discount_rate: f64,
    pub time_preference_rate: f64,
    /// Damage sensitivity rows, one per reported period.
    pub damage_sensitivities: Vec<Vec<f64>>,
}

impl RateReport {
    /// Mean of the defined rates within the first `periods` entries.
    pub fn early_average(&self, periods: usize) -> Option<f64> {
        let rates: Vec<f64> = self
            .points
            .iter()
            .take(periods)
            .filter_map(|p| p.r_scc)
            .collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }
}

/// Decline rate of marginal utility per period along the trajectory.
pub fn utility_rate(model: &DiceModel, trajectory: &Trajectory) -> Vec<f64> {
    let alpha = model.params().utility.elasticity;
    let dt = trajectory.step_size;
    let population = &model.paths().population;
    let per_capita: Vec<f64> = trajectory
        .consumption
        .iter()
        .zip(population)
        .map(|(z, l)| z / l)
        .collect();
    (0..per_capita.len())
        .map(|i| {
            let j = if i + 1 < per_capita.len() { i + 1 } else { i };
            let k = if j == i { i.saturating_sub(1) } else { i };
            if j == k {
                0.0
            } else {
                alpha * (per_capita[j] / per_capita[k]).ln() / dt
            }
        })
        .collect()
}

/// r^SCC(t_j) for every period in `periods`. Periods with no root are
/// flagged, not fatal.
pub fn r_scc_curve(
    model: &DiceModel,
    policy: &AbatementPolicy,
    periods: &[usize],
    bump: f64,
) -> Result<RateReport, DiceError> {
    let base = model.simulate(policy)?;
    let gradient = welfare_gradient(model, policy, bump)?;
    let mu_rate = utility_rate(model, &base);
    let mut points = Vec::with_capacity(periods.len());
    let mut rows = Vec::with_capacity(periods.len());
    for &j in periods {
        let s = cost_sensitivities_at(model, policy, &base, j, bump)?;
        let rate = match irr_solve(s.abatement, &s.damages, model.step_size()) {
            Ok(r) => Some(r),
            Err(DiceError::NoRoot { .. }) => None,
            Err(e) => return Err(e),
        };
        points.push(RatePoint {
            period: j,
            year: base.year(j),
            r_scc: rate,
            abatement_sensitivity: s.abatement,
            welfare_gradient: gradient[j],
            utility_rate: mu_rate[j],
        });
        rows.push(s.damages);
    }
    let p = model.params();
    Ok(RateReport {
        points,
        discount_rate: (1.0 + p.numeraire_rate * p.step_size).ln() / p.step_size,
        time_preference_rate: p.utility.time_preference_rate,
        damage_sensitivities: rows,
    })
}

/// Default size of the cost bump ($T/yr) for utility weights.
pub const DEFAULT_COST_BUMP: f64 = 0.01;

/// R(t_j, t_k) = Σ_{t ≥ t_j} dU(t)/dC(t_k) · N(0)/N(t) Δt for each t_k,
/// by central differences of an additive cost shock at t_k.
pub fn utility_weights(
    model: &DiceModel,
    policy: &AbatementPolicy,
    t_j: usize,
    t_k: &[usize],
    cost_bump: f64,
) -> Result<Vec<f64>, DiceError> {
    let base = model.simulate(policy)?;
    utility_weights_at(model, policy, &base, t_j, t_k, cost_bump)
}

pub(crate) fn utility_weights_at(
    model: &DiceModel,
    policy: &AbatementPolicy,
    base: &Trajectory,
    t_j: usize,
    t_k: &[usize],
    cost_bump: f64,
) -> Result<Vec<f64>, DiceError> {
    t_k.iter()
        .map(|&k| {
            if k < t_j || k >= model.periods() {
                return Err(DiceError::PeriodOutOfRange {
                    period: k,
                    periods: model.periods(),
                });
            }
            let change = |c: f64| {
                let shock = Shock {
                    cost: c,
                    ..Default::default()
                };
                model
                    .tail_welfare_change(base, policy, k, policy.mu[k], Some(shock))
                    .map_err(|e| DiceError::Sensitivity {
                        period: k,
                        reason: e.to_string(),
                    })
            };
            Ok((change(cost_bump)? - change(-cost_bump)?) / (2.0 * cost_bump))
        })
        .collect()
}

/// Both sides of the decomposition identity at t_j:
/// Σ_k dC(t_k)/dμ(t_j)·exp(−r (t_k − t_j)) against
/// Σ_k dC(t_k)/dμ(t_j)·R(t_j,t_k)/R(t_j,t_j).
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCheck {
    pub period: usize,
    pub r_scc: f64,
    pub discounted_side: f64,
    pub utility_weighted_side: f64,
    /// dC_A(t_j)/dμ(t_j), the scale both sides are compared against.
    pub principal: f64,
    /// R(t_j, t_k)/R(t_j, t_j) for k = j, j+1, ...
    pub weight_ratios: Vec<f64>,
}

impl DecompositionCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.discounted_side - self.utility_weighted_side).abs() / self.principal.abs()
    }
}

pub fn decomposition_check(
    model: &DiceModel,
    policy: &AbatementPolicy,
    t_j: usize,
    bump: f64,
    cost_bump: f64,
) -> Result<DecompositionCheck, DiceError> {
    let base = model.simulate(policy)?;
    let s = cost_sensitivities_at(model, policy, &base, t_j, bump)?;
    let r = irr_solve(s.abatement, &s.damages, model.step_size())?;
    let ks: Vec<usize> = (t_j..model.periods()).collect();
    let weights = utility_weights_at(model, policy, &base, t_j, &ks, cost_bump)?;
    let ratios: Vec<f64> = weights.iter().map(|w| w / weights[0]).collect();
    let dt = model.step_size();
    let flow = |k: usize| s.damages[k] + if k == 0 { s.abatement } else { 0.0 };
    let mut discounted = 0.0;
    let mut weighted = 0.0;
    for (k, ratio) in ratios.iter().enumerate() {
        discounted += flow(k) * (-r * k as f64 * dt).exp();
        weighted += flow(k) * ratio;
    }
    Ok(DecompositionCheck {
        period: t_j,
        r_scc: r,
        discounted_side: discounted,
        utility_weighted_side: weighted,
        principal: s.abatement,
        weight_ratios: ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_cashflow_rate_is_one() {
        let r = irr_solve(1.0, &[0.0, -std::f64::consts::E], 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn break_even_rate_is_zero() {
        let mut flows = vec![0.0; 11];
        flows[10] = -1.0;
        let r = irr_solve(1.0, &flows, 1.0).unwrap();
        assert!(r.abs() < 1e-10, "{r}");
    }

    #[test]
    fn two_cashflow_quadratic() {
        // 1 = 0.6 x + 0.6 x^2 with x = exp(-r).
        let x = (-0.6 + (0.36_f64 + 2.4).sqrt()) / 1.2;
        let oracle = -x.ln();
        let r = irr_solve(1.0, &[0.0, -0.6, -0.6], 1.0).unwrap();
        assert!((r - oracle).abs() < 1e-10);
        assert!((r - 0.1229).abs() < 1e-4);
    }

    #[test]
    fn empty_repayment_leg_has_no_root() {
        assert!(matches!(
            irr_solve(1.0, &[0.0; 20], 1.0),
            Err(DiceError::NoRoot { .. })
        ));
    }

    #[test]
    fn residual_is_increasing_under_sign_preconditions() {
        let flows = [(1.0, -0.3), (4.0, -0.5), (9.0, -0.6)];
        let mut last = f64::NEG_INFINITY;
        for i in 0..=150 {
            let r = -0.5 + i as f64 * 0.01;
            let v = irr_residual(1.0, &flows, r);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn wide_bracket_catches_large_rates() {
        // 1 - 10 e^{-r} = 0 → r = ln 10 ≈ 2.30, outside the first bracket.
        let r = irr_solve(1.0, &[0.0, -10.0], 1.0).unwrap();
        assert!((r - 10f64.ln()).abs() < 1e-10);
    }

    fn repayment_legs() -> impl Strategy<Value = (f64, Vec<(f64, f64)>)> {
        (
            0.1f64..10.0,
            prop::collection::vec((0.5f64..80.0, -5.0f64..-0.01), 1..12),
        )
    }

    proptest! {
        #[test]
        fn rate_is_scale_invariant((principal, flows) in repayment_legs(), lambda in 0.01f64..100.0) {
            let base = irr_timed(principal, &flows);
            let scaled: Vec<(f64, f64)> = flows.iter().map(|&(t, a)| (t, lambda * a)).collect();
            match (base, irr_timed(lambda * principal, &scaled)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }

        #[test]
        fn later_repayments_lower_a_positive_rate((principal, flows) in repayment_legs(), shift in 0.5f64..20.0) {
            if let Ok(r) = irr_timed(principal, &flows) {
                if r > 1e-6 {
                    let later: Vec<(f64, f64)> = flows.iter().map(|&(t, a)| (t + shift, a)).collect();
                    let shifted = irr_timed(principal, &later).unwrap();
                    prop_assert!(shifted < r, "{shifted} !< {r}");
                }
            }
        }

        #[test]
        fn root_zeroes_the_residual((principal, flows) in repayment_legs()) {
            if let Ok(r) = irr_timed(principal, &flows) {
                let scale = principal + flows.iter().map(|f| f.1.abs()).sum::<f64>();
                prop_assert!(irr_residual(principal, &flows, r).abs() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn linear_utility_weights_follow_the_numeraire() {
        let params = crate::params::ModelParameters {
            utility: crate::params::UtilityParameters {
                elasticity: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = DiceModel::new(params).unwrap();
        let policy = AbatementPolicy::ramp(model.params(), 0.03, 1.0, 150.0);
        let ks: Vec<usize> = (0..=40).step_by(10).collect();
        let w = utility_weights(&model, &policy, 0, &ks, DEFAULT_COST_BUMP).unwrap();
        // Investment returns make the weights decline slightly slower than
        // the numeraire discount factor; the gap stays well under a percent.
        let log_rate = 1.015_f64.ln();
        for (&k, wk) in ks.iter().zip(&w).skip(1) {
            let ratio = wk / w[0];
            let discount = 1.015_f64.powi(-(k as i32));
            assert!((ratio / discount - 1.0).abs() < 0.02, "k {k}: {ratio} vs {discount}");
            let implied = -ratio.ln() / k as f64;
            assert!((implied - log_rate).abs() < 2e-3, "k {k}: {implied}");
        }
    }
}
