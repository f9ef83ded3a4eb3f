//! Cost-implied CO2 prices, the social cost of carbon and its equivalent
//! swap rate.
//!
//! Integrals over the horizon are left-point sums with Δt weights on the
//! model grid. Prices are in $/tCO2; costs in $T; emissions in GtCO2/yr.

use crate::engine::{AbatementPolicy, DiceModel, Shock, Trajectory};
use crate::error::DiceError;
use crate::params::DOLLARS_PER_TON_PER_TRILLION_PER_GT;

/// Number of grid periods covering `horizon_years`.
pub fn horizon_periods(trajectory: &Trajectory, horizon_years: f64) -> Result<usize, DiceError> {
    let periods = (horizon_years / trajectory.step_size).round();
    if !(periods >= 1.0) || periods as usize > trajectory.len() {
        return Err(DiceError::PeriodOutOfRange {
            period: periods.max(0.0) as usize,
            periods: trajectory.len(),
        });
    }
    Ok(periods as usize)
}

fn emission_integral(trajectory: &Trajectory, n: usize) -> f64 {
    trajectory.emissions[..n].iter().sum::<f64>() * trajectory.step_size
}

fn discounted_integral(trajectory: &Trajectory, values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values
        .zip(&trajectory.numeraire)
        .take(n)
        .map(|(v, num)| v / num)
        .sum::<f64>()
        * trajectory.step_size
}

fn require_emissions(total: f64) -> Result<f64, DiceError> {
    if total > 0.0 && total.is_finite() {
        Ok(total)
    } else {
        Err(DiceError::UndefinedPrice { total })
    }
}

/// Value at time 0 ($T) of receiving the costs C(t) and paying K·N(t) per
/// unit of emission, over `horizon_years`.
pub fn gap_value(k: f64, trajectory: &Trajectory, horizon_years: f64) -> Result<f64, DiceError> {
    let n = horizon_periods(trajectory, horizon_years)?;
    let per_trillion = k / DOLLARS_PER_TON_PER_TRILLION_PER_GT;
    Ok((0..n)
        .map(|i| {
            let num = trajectory.numeraire[i];
            (trajectory.total_cost[i] - per_trillion * num * trajectory.emissions[i]) / num
        })
        .sum::<f64>()
        * trajectory.step_size)
}

/// Par price: discounted total cost over total emissions.
pub fn k_par(trajectory: &Trajectory, horizon_years: f64) -> Result<f64, DiceError> {
    let n = horizon_periods(trajectory, horizon_years)?;
    let emitted = require_emissions(emission_integral(trajectory, n))?;
    let cost = discounted_integral(trajectory, trajectory.total_cost.iter().copied(), n);
    Ok(DOLLARS_PER_TON_PER_TRILLION_PER_GT * cost / emitted)
}

/// Par price with the damages of the full-abatement counterfactual removed
/// from the cost leg.
pub fn k_par_star(
    trajectory: &Trajectory,
    counterfactual: &Trajectory,
    horizon_years: f64,
) -> Result<f64, DiceError> {
    if !trajectory.same_grid(counterfactual) {
        return Err(DiceError::GridMismatch);
    }
    let n = horizon_periods(trajectory, horizon_years)?;
    let emitted = require_emissions(emission_integral(trajectory, n))?;
    let net = trajectory
        .total_cost
        .iter()
        .zip(&counterfactual.damage_cost)
        .map(|(c, d)| c - d);
    let cost = discounted_integral(trajectory, net, n);
    Ok(DOLLARS_PER_TON_PER_TRILLION_PER_GT * cost / emitted)
}

/// Root of `K -> gap_value(K)` by bracketing and bisection. Cross-checks the
/// closed form of [`k_par`].
pub fn k_par_by_root(trajectory: &Trajectory, horizon_years: f64) -> Result<f64, DiceError> {
    let f = |k: f64| gap_value(k, trajectory, horizon_years);
    let n = horizon_periods(trajectory, horizon_years)?;
    require_emissions(emission_integral(trajectory, n))?;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo)? < 0.0 {
        lo *= 2.0;
    }
    while f(hi)? > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Settings for the finite-difference social cost of carbon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccBumps {
    /// Emission bump (GtCO2/yr).
    pub emission: f64,
    /// Consumption bump ($T/yr).
    pub consumption: f64,
}

impl Default for SccBumps {
    fn default() -> Self {
        Self {
            emission: 1.0,
            consumption: 0.01,
        }
    }
}

impl SccBumps {
    pub fn halved(self) -> Self {
        Self {
            emission: 0.5 * self.emission,
            consumption: 0.5 * self.consumption,
        }
    }
}

/// SCC(t) in $/tCO2 for every period: the ratio of central differences of
/// welfare with respect to period-t emissions and consumption, reported as
/// a positive cost.
pub fn scc_curve(
    model: &DiceModel,
    policy: &AbatementPolicy,
    bumps: SccBumps,
) -> Result<Vec<f64>, DiceError> {
    let base = model.simulate(policy)?;
    scc_curve_at(model, policy, &base, bumps)
}

pub(crate) fn scc_curve_at(
    model: &DiceModel,
    policy: &AbatementPolicy,
    base: &Trajectory,
    bumps: SccBumps,
) -> Result<Vec<f64>, DiceError> {
    (0..model.periods())
        .map(|t| {
            let change = |shock: Shock| {
                model
                    .tail_welfare_change(base, policy, t, policy.mu[t], Some(shock))
                    .map_err(|e| DiceError::Sensitivity {
                        period: t,
                        reason: e.to_string(),
                    })
            };
            let emission = |e: f64| Shock {
                emissions: e,
                ..Default::default()
            };
            let consumption = |z: f64| Shock {
                consumption: z,
                ..Default::default()
            };
            let d_emission = (change(emission(bumps.emission))?
                - change(emission(-bumps.emission))?)
                / (2.0 * bumps.emission);
            let d_consumption = (change(consumption(bumps.consumption))?
                - change(consumption(-bumps.consumption))?)
                / (2.0 * bumps.consumption);
            if !(d_consumption > 0.0) {
                return Err(DiceError::Sensitivity {
                    period: t,
                    reason: format!("marginal welfare of consumption is {d_consumption}"),
                });
            }
            Ok(-DOLLARS_PER_TON_PER_TRILLION_PER_GT * d_emission / d_consumption)
        })
        .collect()
}

/// Largest relative change of SCC(t) when both bumps are halved, over the
/// periods whose magnitude exceeds `noise_floor` times the peak.
pub fn scc_halving_change(full: &[f64], half: &[f64], noise_floor: f64) -> f64 {
    let peak = full.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    full.iter()
        .zip(half)
        .filter(|(f, _)| f.abs() > noise_floor * peak)
        .map(|(f, h)| ((f - h) / f).abs())
        .fold(0.0, f64::max)
}

/// Constant swap rate revenue-equivalent to charging SCC(t) on emissions.
pub fn k_scc(scc: &[f64], trajectory: &Trajectory, horizon_years: f64) -> Result<f64, DiceError> {
    if scc.len() != trajectory.len() {
        return Err(DiceError::GridMismatch);
    }
    let n = horizon_periods(trajectory, horizon_years)?;
    let emitted = require_emissions(emission_integral(trajectory, n))?;
    let revenue = discounted_integral(
        trajectory,
        scc.iter().zip(&trajectory.emissions).map(|(s, e)| s * e),
        n,
    );
    Ok(revenue / emitted)
}

/// SCC(t)/N(t) − K_SCC per period.
pub fn scc_deviation(
    scc: &[f64],
    k_scc: f64,
    trajectory: &Trajectory,
) -> Result<Vec<f64>, DiceError> {
    if scc.len() != trajectory.len() {
        return Err(DiceError::GridMismatch);
    }
    Ok(scc
        .iter()
        .zip(&trajectory.numeraire)
        .map(|(s, n)| s / n - k_scc)
        .collect())
}

/// Emission-weighted integral of a deviation series (zero at par).
pub fn emission_weighted_integral(values: &[f64], trajectory: &Trajectory, n: usize) -> f64 {
    values
        .iter()
        .zip(&trajectory.emissions)
        .take(n)
        .map(|(v, e)| v * e)
        .sum::<f64>()
        * trajectory.step_size
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPoint {
    pub horizon_years: f64,
    /// `None` when the price is undefined for this horizon.
    pub k_par: Option<f64>,
    pub k_par_star: Option<f64>,
}

/// K_par(T) and K_par*(T) for every requested horizon.
pub fn horizon_sweep(
    trajectory: &Trajectory,
    counterfactual: &Trajectory,
    horizons: &[f64],
) -> Result<Vec<HorizonPoint>, DiceError> {
    if !trajectory.same_grid(counterfactual) {
        return Err(DiceError::GridMismatch);
    }
    horizons
        .iter()
        .map(|&h| {
            horizon_periods(trajectory, h)?;
            let defined = |r: Result<f64, DiceError>| match r {
                Ok(v) => Ok(Some(v)),
                Err(DiceError::UndefinedPrice { .. }) => Ok(None),
                Err(e) => Err(e),
            };
            Ok(HorizonPoint {
                horizon_years: h,
                k_par: defined(k_par(trajectory, h))?,
                k_par_star: defined(k_par_star(trajectory, counterfactual, h))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    pub k_par: f64,
    pub k_par_star: f64,
    pub k_scc: f64,
    pub scc_curve: Vec<f64>,
    pub scc_initial: f64,
    /// V_Gap(0; 0) in $T.
    pub gap_at_zero: f64,
    /// SCC(t)/N(t) − K_SCC.
    pub deviation_curve: Vec<f64>,
    pub horizon_curve: Vec<HorizonPoint>,
    /// Largest relative SCC change under halved bumps.
    pub scc_halving_change: f64,
}

/// Relative SCC change allowed when the bumps are halved.
pub const SCC_CONVERGENCE_LIMIT: f64 = 0.02;
/// Entries below this fraction of the peak are excluded from convergence
/// checks.
pub const NOISE_FLOOR: f64 = 1e-8;

/// All price analytics for `policy` over the full model horizon.
pub fn price_report(
    model: &DiceModel,
    policy: &AbatementPolicy,
    bumps: SccBumps,
    horizons: &[f64],
) -> Result<PriceReport, DiceError> {
    let trajectory = model.simulate(policy)?;
    let counterfactual = model.simulate(&model.policy_of(1.0_f64.min(model.params().max_abatement)))?;
    let horizon = model.params().time_horizon_years as f64;

    let scc = scc_curve_at(model, policy, &trajectory, bumps)?;
    let scc_half = scc_curve_at(model, policy, &trajectory, bumps.halved())?;
    let change = scc_halving_change(&scc, &scc_half, NOISE_FLOOR);
    if change > SCC_CONVERGENCE_LIMIT {
        return Err(DiceError::Sensitivity {
            period: 0,
            reason: format!(
                "SCC moves {:.3}% when bumps are halved; reduce the bump sizes",
                100.0 * change
            ),
        });
    }
    let k_scc_value = k_scc(&scc, &trajectory, horizon)?;
    Ok(PriceReport {
        k_par: k_par(&trajectory, horizon)?,
        k_par_star: k_par_star(&trajectory, &counterfactual, horizon)?,
        k_scc: k_scc_value,
        scc_initial: scc[0],
        gap_at_zero: gap_value(0.0, &trajectory, horizon)?,
        deviation_curve: scc_deviation(&scc, k_scc_value, &trajectory)?,
        horizon_curve: horizon_sweep(&trajectory, &counterfactual, horizons)?,
        scc_curve: scc,
        scc_halving_change: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(emissions: Vec<f64>, cost: Vec<f64>, damage: Vec<f64>, rate: f64) -> Trajectory {
        let n = emissions.len();
        let numeraire: Vec<f64> = (0..n).map(|i| (1.0 + rate).powi(i as i32)).collect();
        Trajectory {
            start_year: 2015.0,
            step_size: 1.0,
            industrial_emissions: emissions.clone(),
            emissions,
            gross_output: vec![100.0; n],
            abatement_cost: cost.iter().zip(&damage).map(|(c, d)| c - d).collect(),
            damage_cost: damage,
            total_cost: cost,
            consumption: vec![70.0; n],
            utility: vec![0.0; n],
            welfare_weight: numeraire.iter().map(|x| 1.0 / x).collect(),
            numeraire,
            states: Vec::new(),
        }
    }

    fn simple(emissions: Vec<f64>, cost: Vec<f64>, rate: f64) -> Trajectory {
        let damage = cost.iter().map(|c| 0.5 * c).collect();
        synthetic(emissions, cost, damage, rate)
    }

    #[test]
    fn zero_price_gap_is_discounted_cost() {
        let t = simple(vec![30.0, 20.0, 10.0], vec![1.0, 2.0, 3.0], 0.015);
        let expected = 1.0 + 2.0 / 1.015 + 3.0 / 1.015_f64.powi(2);
        assert!((gap_value(0.0, &t, 3.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn costless_world_has_zero_par_and_negative_gap() {
        let t = simple(vec![30.0, 20.0, 10.0], vec![0.0; 3], 0.015);
        assert_eq!(k_par(&t, 3.0).unwrap(), 0.0);
        assert!(gap_value(10.0, &t, 3.0).unwrap() < 0.0);
    }

    #[test]
    fn single_period_horizon_is_one_term_ratio() {
        let t = simple(vec![40.0, 20.0], vec![2.0, 5.0], 0.015);
        assert!((k_par(&t, 1.0).unwrap() - 1000.0 * 2.0 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn steeper_numeraire_lowers_par_for_back_loaded_cost() {
        // Emissions early, costs late: discounting the cost leg harder lowers K_par.
        let brute = |r: f64| (0.0 + 4.0 / (1.0 + r)) * 1000.0 / (50.0 + 1.0);
        let low = k_par(&simple(vec![50.0, 1.0], vec![0.0, 4.0], 0.01), 2.0).unwrap();
        let high = k_par(&simple(vec![50.0, 1.0], vec![0.0, 4.0], 0.05), 2.0).unwrap();
        assert!((low - brute(0.01)).abs() < 1e-12);
        assert!((high - brute(0.05)).abs() < 1e-12);
        assert!(high < low);
    }

    #[test]
    fn undefined_when_no_net_emissions() {
        let t = simple(vec![1.0, -1.0], vec![1.0, 1.0], 0.015);
        assert!(matches!(k_par(&t, 2.0), Err(DiceError::UndefinedPrice { .. })));
    }

    #[test]
    fn horizon_beyond_trajectory_is_rejected() {
        let t = simple(vec![1.0; 5], vec![1.0; 5], 0.015);
        assert!(matches!(k_par(&t, 6.0), Err(DiceError::PeriodOutOfRange { .. })));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = simple(vec![1.0; 5], vec![1.0; 5], 0.015);
        let b = simple(vec![1.0; 4], vec![1.0; 4], 0.015);
        assert_eq!(k_par_star(&a, &b, 4.0), Err(DiceError::GridMismatch));
        assert_eq!(k_scc(&[1.0; 4], &a, 4.0), Err(DiceError::GridMismatch));
    }

    #[test]
    fn constant_discounted_scc_is_its_own_swap_rate() {
        let t = simple(vec![30.0, 25.0, 12.0, 4.0], vec![1.0; 4], 0.015);
        let scc: Vec<f64> = t.numeraire.iter().map(|n| 42.0 * n).collect();
        assert!((k_scc(&scc, &t, 4.0).unwrap() - 42.0).abs() < 1e-12);
        let dev = scc_deviation(&scc, 42.0, &t).unwrap();
        assert!(dev.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn halving_change_ignores_noise() {
        let full = [10.0, 1e-12, 5.0];
        let half = [10.1, 5e-12, 5.0];
        assert!((scc_halving_change(&full, &half, 1e-8) - 0.01).abs() < 1e-12);
    }

    fn trajectories() -> impl Strategy<Value = (Trajectory, f64)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..50.0, n),
                prop::collection::vec(0.0f64..10.0, n),
                prop::collection::vec(0.0f64..1.0, n),
                0.0f64..0.08,
            )
                .prop_map(move |(e, c, share, r)| {
                    let d = c.iter().zip(&share).map(|(c, s)| c * s).collect();
                    (synthetic(e, c, d, r), n as f64)
                })
        })
    }

    proptest! {
        #[test]
        fn par_price_zeroes_the_gap((t, h) in trajectories()) {
            let k = k_par(&t, h).unwrap();
            let scale = gap_value(0.0, &t, h).unwrap().abs().max(f64::MIN_POSITIVE);
            prop_assert!(gap_value(k, &t, h).unwrap().abs() <= 1e-9 * scale.max(1e-300));
        }

        #[test]
        fn closed_form_matches_root((t, h) in trajectories()) {
            let k = k_par(&t, h).unwrap();
            let root = k_par_by_root(&t, h).unwrap();
            prop_assert!((k - root).abs() <= 1e-9 * k.abs().max(1e-9));
        }

        #[test]
        fn gap_strictly_decreasing((t, h) in trajectories(), k in -500.0f64..500.0, dk in 0.1f64..100.0) {
            prop_assert!(gap_value(k + dk, &t, h).unwrap() < gap_value(k, &t, h).unwrap());
        }

        #[test]
        fn par_price_scales_with_cost((t, h) in trajectories(), lambda in 0.01f64..100.0) {
            let mut scaled = t.clone();
            scaled.total_cost.iter_mut().for_each(|c| *c *= lambda);
            let (a, b) = (k_par(&t, h).unwrap(), k_par(&scaled, h).unwrap());
            prop_assert!((b - lambda * a).abs() <= 1e-9 * (lambda * a).abs().max(1e-12));
        }

        #[test]
        fn removing_counterfactual_damage_lowers_par((t, h) in trajectories()) {
            let star = k_par_star(&t, &t, h).unwrap();
            let plain = k_par(&t, h).unwrap();
            prop_assert!(star <= plain + 1e-9 * plain.abs());
        }

        #[test]
        fn swap_rate_is_bounded_and_linear(
            (t, h) in trajectories(),
            seed in prop::collection::vec(0.0f64..200.0, 40),
            a in -3.0f64..3.0,
            b in -50.0f64..50.0,
        ) {
            let scc: Vec<f64> = seed[..t.len()].to_vec();
            let k = k_scc(&scc, &t, h).unwrap();
            let discounted: Vec<f64> = scc.iter().zip(&t.numeraire).map(|(s, n)| s / n).collect();
            let lo = discounted.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = discounted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(k >= lo - 1e-9 * hi.abs() && k <= hi + 1e-9 * hi.abs());

            let affine: Vec<f64> = scc.iter().zip(&t.numeraire).map(|(s, n)| a * s + b * n).collect();
            let ka = k_scc(&affine, &t, h).unwrap();
            prop_assert!((ka - (a * k + b)).abs() <= 1e-9 * (a * k + b).abs().max(1.0));

            let dev = scc_deviation(&scc, k, &t).unwrap();
            let integral = emission_weighted_integral(&dev, &t, t.len());
            let scale = emission_weighted_integral(&discounted, &t, t.len()).abs();
            prop_assert!(integral.abs() <= 1e-9 * scale.max(1e-12));
        }
    }
}
