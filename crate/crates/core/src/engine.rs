//! Annual forward simulation of the DICE-2016 difference equations.

use nalgebra::{DMatrix, DVector};

use crate::discretize::{step_input_gain, tridiagonal_power};
use crate::error::DiceError;
use crate::params::{ModelParameters, CO2_PER_CARBON};

/// Carbon masses (GtC), temperature anomalies (°C) and capital ($T) at the
/// start of a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClimateEconomyState {
    pub m_atm: f64,
    pub m_upper: f64,
    pub m_lower: f64,
    pub t_atm: f64,
    pub t_lower: f64,
    pub capital: f64,
}

impl ClimateEconomyState {
    pub fn total_carbon(&self) -> f64 {
        self.m_atm + self.m_upper + self.m_lower
    }

    pub fn is_valid(&self) -> bool {
        [self.m_atm, self.m_upper, self.m_lower, self.capital]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.t_atm.is_finite()
            && self.t_lower.is_finite()
    }
}

/// Flows of a single period. Rates are per year.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PeriodOutputs {
    /// Total emissions E (GtCO2/yr), industrial plus land use.
    pub emissions: f64,
    pub industrial_emissions: f64,
    /// Gross output Y ($T/yr).
    pub gross_output: f64,
    /// Abatement cost C_A ($T/yr).
    pub abatement_cost: f64,
    /// Damage cost C_D ($T/yr).
    pub damage_cost: f64,
    /// C = C_A + C_D ($T/yr).
    pub total_cost: f64,
    pub net_output: f64,
    pub investment: f64,
    /// Consumption Z ($T/yr).
    pub consumption: f64,
    /// Period utility U.
    pub utility: f64,
    /// True when the consumption-per-capita floor was applied.
    pub consumption_floored: bool,
}

/// Additive shocks applied inside a single period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Shock {
    /// Extra emissions (GtCO2/yr) entering the carbon cycle only.
    pub emissions: f64,
    /// Extra consumption ($T/yr) added after costs and savings.
    pub consumption: f64,
    /// Extra cost ($T/yr) subtracted from net output before savings.
    pub cost: f64,
}

/// Per-period series aligned to the time grid, plus the state path
/// (`states[i]` is the state at the start of period `i`, one extra entry at
/// the end).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_year: f64,
    pub step_size: f64,
    pub emissions: Vec<f64>,
    pub industrial_emissions: Vec<f64>,
    pub gross_output: Vec<f64>,
    pub abatement_cost: Vec<f64>,
    pub damage_cost: Vec<f64>,
    pub total_cost: Vec<f64>,
    pub consumption: Vec<f64>,
    pub utility: Vec<f64>,
    /// Numeraire N(t_i), N(0) = 1.
    pub numeraire: Vec<f64>,
    /// Quadrature weight of U(t_i) in the welfare sum, Δt·N(0)/N(t_i)
    /// (times the time-preference factor when enabled).
    pub welfare_weight: Vec<f64>,
    pub states: Vec<ClimateEconomyState>,
}

impl Trajectory {
    fn with_capacity(start_year: f64, step_size: f64, n: usize) -> Self {
        Self {
            start_year,
            step_size,
            emissions: Vec::with_capacity(n),
            industrial_emissions: Vec::with_capacity(n),
            gross_output: Vec::with_capacity(n),
            abatement_cost: Vec::with_capacity(n),
            damage_cost: Vec::with_capacity(n),
            total_cost: Vec::with_capacity(n),
            consumption: Vec::with_capacity(n),
            utility: Vec::with_capacity(n),
            numeraire: Vec::with_capacity(n),
            welfare_weight: Vec::with_capacity(n),
            states: Vec::with_capacity(n + 1),
        }
    }

    fn push(&mut self, row: &PeriodOutputs, numeraire: f64, weight: f64) {
        self.emissions.push(row.emissions);
        self.industrial_emissions.push(row.industrial_emissions);
        self.gross_output.push(row.gross_output);
        self.abatement_cost.push(row.abatement_cost);
        self.damage_cost.push(row.damage_cost);
        self.total_cost.push(row.total_cost);
        self.consumption.push(row.consumption);
        self.utility.push(row.utility);
        self.numeraire.push(numeraire);
        self.welfare_weight.push(weight);
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    pub fn year(&self, index: usize) -> f64 {
        self.start_year + index as f64 * self.step_size
    }

    /// True when both trajectories live on the same time grid.
    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.len() == other.len()
            && self.step_size == other.step_size
            && self.start_year == other.start_year
    }
}

/// Discounted-utility objective V(0) as a Δt-weighted sum over the grid.
pub fn welfare(trajectory: &Trajectory) -> Result<f64, DiceError> {
    let mut total = 0.0;
    for (i, (u, w)) in trajectory
        .utility
        .iter()
        .zip(&trajectory.welfare_weight)
        .enumerate()
    {
        if !u.is_finite() {
            return Err(DiceError::DegenerateTrajectory {
                period: i,
                reason: format!("utility is {u}"),
            });
        }
        total += u * w;
    }
    Ok(total)
}

/// Value N(t) of the risk-free account at grid time `t` (years since start),
/// compounding linearly within each step.
pub fn numeraire(params: &ModelParameters, t: f64) -> f64 {
    let steps = (t / params.step_size).round() as i32;
    (1.0 + params.numeraire_rate * params.step_size).powi(steps)
}

/// Abatement fraction per period.
#[derive(Debug, Clone, PartialEq)]
pub struct AbatementPolicy {
    pub mu: Vec<f64>,
}

impl AbatementPolicy {
    pub fn new(mu: Vec<f64>) -> Self {
        Self { mu }
    }

    pub fn constant(periods: usize, value: f64) -> Self {
        Self {
            mu: vec![value; periods],
        }
    }

    /// Linear ramp from `initial` at t = 0 to `fin` at `ramp_years`, flat
    /// afterwards.
    pub fn ramp(params: &ModelParameters, initial: f64, fin: f64, ramp_years: f64) -> Self {
        let mu = (0..params.periods())
            .map(|i| {
                let w = (params.time(i) / ramp_years).min(1.0);
                initial + (fin - initial) * w
            })
            .collect();
        Self { mu }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn check(&self, periods: usize, max: f64) -> Result<(), DiceError> {
        if self.mu.len() != periods {
            return Err(DiceError::PolicyLength {
                expected: periods,
                actual: self.mu.len(),
            });
        }
        for (period, &value) in self.mu.iter().enumerate() {
            if !(0.0..=max).contains(&value) {
                return Err(DiceError::PolicyOutOfBounds { period, value, max });
            }
        }
        Ok(())
    }
}

/// Exogenous inputs per period.
#[derive(Debug, Clone)]
pub struct ExogenousPaths {
    pub population: Vec<f64>,
    pub productivity: Vec<f64>,
    pub intensity: Vec<f64>,
    pub land_use: Vec<f64>,
    pub backstop_price: Vec<f64>,
    pub savings_rate: Vec<f64>,
    /// Non-CO2 forcing at the start of each period; one extra entry.
    pub other_forcing: Vec<f64>,
}

/// Geometric interpolation between values given at multiples of `native`.
fn interpolate_geometric(nodes: &[f64], native: f64, t: f64) -> f64 {
    let x = t / native;
    let n = (x.floor() as usize).min(nodes.len() - 2);
    let f = x - n as f64;
    let (a, b) = (nodes[n], nodes[n + 1]);
    if a <= 0.0 || b <= 0.0 {
        return a + (b - a) * f;
    }
    a * (b / a).powf(f)
}

impl ExogenousPaths {
    fn build(p: &ModelParameters) -> Self {
        let periods = p.periods();
        let last_time = p.time(periods);
        let node_count = |native: f64| (last_time / native).ceil() as usize + 2;

        let econ = &p.economy;
        let n = node_count(econ.native_step_years);
        let mut pop = vec![econ.initial_population; n];
        let mut tfp = vec![econ.initial_productivity; n];
        for k in 0..n - 1 {
            pop[k + 1] = pop[k] * (econ.asymptotic_population / pop[k]).powf(econ.population_adjustment);
            let growth = econ.productivity_growth
                * (-econ.productivity_growth_decline * econ.native_step_years * k as f64).exp();
            tfp[k + 1] = tfp[k] / (1.0 - growth);
        }

        let em = &p.emissions;
        let n_em = node_count(em.native_step_years);
        let mut sigma = vec![em.initial_intensity; n_em];
        let mut growth = em.intensity_growth;
        for k in 0..n_em - 1 {
            sigma[k + 1] = sigma[k] * (growth * em.native_step_years).exp();
            growth *= (1.0 + em.intensity_growth_decline).powf(em.native_step_years);
        }
        let land: Vec<f64> = (0..n_em)
            .map(|k| em.initial_land_use * (1.0 - em.land_use_decline).powi(k as i32))
            .collect();

        let cost = &p.abatement_cost;
        let n_cost = node_count(cost.native_step_years);
        let backstop: Vec<f64> = (0..n_cost)
            .map(|k| cost.initial_backstop_price * (1.0 - cost.backstop_decline).powi(k as i32))
            .collect();

        let clim = &p.climate;
        let other = |t: f64| {
            if t >= clim.other_forcing_ramp_years {
                clim.other_forcing_after_ramp
            } else {
                let w = t / clim.other_forcing_ramp_years;
                clim.other_forcing_initial + (clim.other_forcing_ramp_target - clim.other_forcing_initial) * w
            }
        };
        let savings = |t: f64| {
            let w = (t / econ.savings_taper_years).min(1.0);
            econ.savings_rate_initial + (econ.savings_rate_final - econ.savings_rate_initial) * w
        };

        let times: Vec<f64> = (0..periods).map(|i| p.time(i)).collect();
        Self {
            population: times
                .iter()
                .map(|&t| interpolate_geometric(&pop, econ.native_step_years, t))
                .collect(),
            productivity: times
                .iter()
                .map(|&t| interpolate_geometric(&tfp, econ.native_step_years, t))
                .collect(),
            intensity: times
                .iter()
                .map(|&t| interpolate_geometric(&sigma, em.native_step_years, t))
                .collect(),
            land_use: times
                .iter()
                .map(|&t| interpolate_geometric(&land, em.native_step_years, t))
                .collect(),
            backstop_price: times
                .iter()
                .map(|&t| interpolate_geometric(&backstop, cost.native_step_years, t))
                .collect(),
            savings_rate: times.iter().map(|&t| savings(t)).collect(),
            other_forcing: (0..=periods).map(|i| other(p.time(i))).collect(),
        }
    }
}

/// A parameterized, re-discretized DICE model ready to simulate.
///
/// Holds no mutable state; simulations on a shared model may run
/// concurrently.
#[derive(Debug, Clone)]
pub struct DiceModel {
    params: ModelParameters,
    paths: ExogenousPaths,
    periods: usize,
    carbon_step: [[f64; 3]; 3],
    temperature_step: [[f64; 2]; 2],
    forcing_gain: [f64; 2],
    /// A(t)·(L(t)/1000)^(1-γ) per period.
    output_scale: Vec<f64>,
    /// θ1(t) = backstop(t)·σ(t)/θ2/1000 per period.
    abatement_coefficient: Vec<f64>,
    numeraire: Vec<f64>,
    welfare_weight: Vec<f64>,
    capital_retention: f64,
    consumption_floor: f64,
}

impl DiceModel {
    pub fn new(params: ModelParameters) -> Result<Self, DiceError> {
        params.check()?;
        let periods = params.periods();
        let dt = params.step_size;

        let c = &params.carbon;
        let native = DMatrix::from_fn(3, 3, |i, j| c.transfer_matrix[i][j]);
        let carbon = tridiagonal_power(&native, dt / c.native_step_years)?;
        let carbon_step = [0, 1, 2].map(|i| [0, 1, 2].map(|j| carbon[(i, j)]));

        let cl = &params.climate;
        let feedback = cl.forcing_co2_doubling / cl.equilibrium_sensitivity;
        let native_t = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 - cl.c1 * feedback - cl.c1 * cl.c3,
                cl.c1 * cl.c3,
                cl.c4,
                1.0 - cl.c4,
            ],
        );
        let temp = tridiagonal_power(&native_t, dt / cl.native_step_years)?;
        let gain = step_input_gain(&native_t, &temp, &DVector::from_row_slice(&[cl.c1, 0.0]))?;
        let temperature_step = [[temp[(0, 0)], temp[(0, 1)]], [temp[(1, 0)], temp[(1, 1)]]];
        let forcing_gain = [gain[0], gain[1]];

        let paths = ExogenousPaths::build(&params);
        let gamma = params.economy.capital_elasticity;
        let output_scale = paths
            .productivity
            .iter()
            .zip(&paths.population)
            .map(|(a, l)| a * (l / 1000.0).powf(1.0 - gamma))
            .collect();
        let theta2 = params.abatement_cost.exponent;
        let abatement_coefficient = paths
            .backstop_price
            .iter()
            .zip(&paths.intensity)
            .map(|(pb, s)| pb * s / theta2 / 1000.0)
            .collect();
        let numeraire: Vec<f64> = (0..periods).map(|i| numeraire(&params, params.time(i))).collect();
        let welfare_weight = numeraire
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let mut w = dt / n;
                if params.utility.apply_time_preference {
                    w /= (1.0 + params.utility.time_preference_rate * dt).powi(i as i32);
                }
                w
            })
            .collect();
        let capital_retention = (1.0 - params.economy.depreciation_rate).powf(dt);

        let mut model = Self {
            paths,
            periods,
            carbon_step,
            temperature_step,
            forcing_gain,
            output_scale,
            abatement_coefficient,
            numeraire,
            welfare_weight,
            capital_retention,
            consumption_floor: 0.0,
            params,
        };
        // Floor at 1e-6 of the initial consumption per capita without abatement.
        let s0 = model.initial_state();
        let y0 = model.output_scale[0] * s0.capital.powf(gamma);
        let z0 = (1.0 - model.paths.savings_rate[0]) * y0;
        model.consumption_floor = 1e-6 * 1000.0 * z0 / model.paths.population[0];
        Ok(model)
    }

    pub fn dice2016_annual() -> Self {
        Self::new(ModelParameters::dice2016_annual()).expect("built-in parameters are valid")
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn paths(&self) -> &ExogenousPaths {
        &self.paths
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn step_size(&self) -> f64 {
        self.params.step_size
    }

    pub fn numeraire_path(&self) -> &[f64] {
        &self.numeraire
    }

    pub fn welfare_weights(&self) -> &[f64] {
        &self.welfare_weight
    }

    pub fn carbon_step_matrix(&self) -> [[f64; 3]; 3] {
        self.carbon_step
    }

    pub fn temperature_step_matrix(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        (self.temperature_step, self.forcing_gain)
    }

    pub fn initial_state(&self) -> ClimateEconomyState {
        let c = &self.params.carbon;
        let cl = &self.params.climate;
        ClimateEconomyState {
            m_atm: c.initial_mass[0],
            m_upper: c.initial_mass[1],
            m_lower: c.initial_mass[2],
            t_atm: cl.initial_atmosphere_temperature,
            t_lower: cl.initial_lower_ocean_temperature,
            capital: self.params.economy.initial_capital,
        }
    }

    pub fn policy_of(&self, mu: f64) -> AbatementPolicy {
        AbatementPolicy::constant(self.periods, mu)
    }

    fn damage_fraction(&self, t_atm: f64) -> f64 {
        self.params
            .damage
            .coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * t_atm + a)
    }

    /// One period of the recursion. No range checks.
    fn advance(
        &self,
        i: usize,
        s: &ClimateEconomyState,
        mu: f64,
        shock: Shock,
    ) -> Result<(ClimateEconomyState, PeriodOutputs), DiceError> {
        let p = &self.params;
        let dt = p.step_size;
        let gamma = p.economy.capital_elasticity;
        let population = self.paths.population[i];

        let gross_output = self.output_scale[i] * s.capital.powf(gamma);
        let industrial_emissions = self.paths.intensity[i] * (1.0 - mu) * gross_output;
        let emissions = industrial_emissions + self.paths.land_use[i];
        let damage_cost = self.damage_fraction(s.t_atm) * gross_output;
        let abatement_cost = if mu > 0.0 {
            self.abatement_coefficient[i] * mu.powf(p.abatement_cost.exponent) * gross_output
        } else {
            0.0
        };
        let total_cost = abatement_cost + damage_cost;
        let net_output = gross_output - total_cost - shock.cost;
        let investment = self.paths.savings_rate[i] * net_output;
        let consumption = net_output - investment + shock.consumption;

        let mut per_capita = 1000.0 * consumption / population;
        let consumption_floored = !(per_capita > self.consumption_floor);
        if consumption_floored {
            per_capita = self.consumption_floor;
        }
        let alpha = p.utility.elasticity;
        let utility = if (alpha - 1.0).abs() < 1e-12 {
            population * per_capita.ln()
        } else {
            population * (per_capita.powf(1.0 - alpha) - 1.0) / (1.0 - alpha)
        };

        let injected = (emissions + shock.emissions) * dt / CO2_PER_CARBON;
        let m = &self.carbon_step;
        let m_atm = m[0][0] * s.m_atm + m[0][1] * s.m_upper + m[0][2] * s.m_lower + injected;
        let m_upper = m[1][0] * s.m_atm + m[1][1] * s.m_upper + m[1][2] * s.m_lower;
        let m_lower = m[2][0] * s.m_atm + m[2][1] * s.m_upper + m[2][2] * s.m_lower;

        let cl = &p.climate;
        let forcing = cl.forcing_co2_doubling * (m_atm / cl.reference_atmosphere_mass).log2()
            + self.paths.other_forcing[i + 1];
        let a = &self.temperature_step;
        let t_atm = a[0][0] * s.t_atm + a[0][1] * s.t_lower + self.forcing_gain[0] * forcing;
        let t_lower = a[1][0] * s.t_atm + a[1][1] * s.t_lower + self.forcing_gain[1] * forcing;

        let capital = self.capital_retention * s.capital + dt * investment;

        let next = ClimateEconomyState {
            m_atm,
            m_upper,
            m_lower,
            t_atm,
            t_lower,
            capital,
        };
        let row = PeriodOutputs {
            emissions,
            industrial_emissions,
            gross_output,
            abatement_cost,
            damage_cost,
            total_cost,
            net_output,
            investment,
            consumption,
            utility,
            consumption_floored,
        };
        if !next.is_valid() || !utility.is_finite() || !gross_output.is_finite() {
            return Err(DiceError::DegenerateTrajectory {
                period: i,
                reason: format!(
                    "non-finite or non-positive quantity (capital {capital}, utility {utility}, carbon {m_atm})"
                ),
            });
        }
        Ok((next, row))
    }

    /// One step from `state` with abatement `mu` in period `period`.
    pub fn step(
        &self,
        state: &ClimateEconomyState,
        mu: f64,
        period: usize,
    ) -> Result<(ClimateEconomyState, PeriodOutputs), DiceError> {
        if period >= self.periods {
            return Err(DiceError::PeriodOutOfRange {
                period,
                periods: self.periods,
            });
        }
        if !(0.0..=self.params.max_abatement).contains(&mu) {
            return Err(DiceError::PolicyOutOfBounds {
                period,
                value: mu,
                max: self.params.max_abatement,
            });
        }
        if !state.is_valid() {
            return Err(DiceError::DegenerateTrajectory {
                period,
                reason: "input state violates invariants".into(),
            });
        }
        self.advance(period, state, mu, Shock::default())
    }

    /// Runs periods `start..periods` from `state`. `mu(i)` gives the
    /// abatement, `shock` is applied in its period only, and `sink` sees each
    /// period's outputs with the following state.
    pub(crate) fn run_from<F, S>(
        &self,
        start: usize,
        state: ClimateEconomyState,
        mu: F,
        shock: Option<(usize, Shock)>,
        mut sink: S,
    ) -> Result<(), DiceError>
    where
        F: Fn(usize) -> f64,
        S: FnMut(usize, &PeriodOutputs, &ClimateEconomyState),
    {
        let mut state = state;
        let mut floored = 0usize;
        for i in start..self.periods {
            let shock_here = match shock {
                Some((k, s)) if k == i => s,
                _ => Shock::default(),
            };
            let (next, row) = self.advance(i, &state, mu(i), shock_here)?;
            if row.consumption_floored {
                floored += 1;
                if floored > 1 {
                    return Err(DiceError::DegenerateTrajectory {
                        period: i,
                        reason: "consumption floor binds in more than one period".into(),
                    });
                }
            }
            sink(i, &row, &next);
            state = next;
        }
        Ok(())
    }

    /// Full trajectory under `policy`.
    pub fn simulate(&self, policy: &AbatementPolicy) -> Result<Trajectory, DiceError> {
        self.simulate_shocked(policy, None)
    }

    /// Full trajectory with an optional single-period shock.
    pub fn simulate_shocked(
        &self,
        policy: &AbatementPolicy,
        shock: Option<(usize, Shock)>,
    ) -> Result<Trajectory, DiceError> {
        policy.check(self.periods, self.params.max_abatement)?;
        let mut traj = Trajectory::with_capacity(
            self.params.start_year,
            self.params.step_size,
            self.periods,
        );
        let initial = self.initial_state();
        traj.states.push(initial);
        self.run_from(0, initial, |i| policy.mu[i], shock, |i, row, next| {
            traj.push(row, self.numeraire[i], self.welfare_weight[i]);
            traj.states.push(*next);
        })?;
        Ok(traj)
    }

    /// Welfare change of the tail `start..` relative to `base`, when period
    /// `start` runs with `mu_start` and/or `shock` instead.
    pub(crate) fn tail_welfare_change(
        &self,
        base: &Trajectory,
        policy: &AbatementPolicy,
        start: usize,
        mu_start: f64,
        shock: Option<Shock>,
    ) -> Result<f64, DiceError> {
        let mut delta = 0.0;
        self.run_from(
            start,
            base.states[start],
            |i| if i == start { mu_start } else { policy.mu[i] },
            shock.map(|s| (start, s)),
            |i, row, _| delta += (row.utility - base.utility[i]) * self.welfare_weight[i],
        )?;
        Ok(delta)
    }

    /// Tail outputs `start..` when period `start` runs with `mu_start`.
    pub(crate) fn tail_rows(
        &self,
        base: &Trajectory,
        policy: &AbatementPolicy,
        start: usize,
        mu_start: f64,
    ) -> Result<Vec<PeriodOutputs>, DiceError> {
        let mut rows = Vec::with_capacity(self.periods - start);
        self.run_from(
            start,
            base.states[start],
            |i| if i == start { mu_start } else { policy.mu[i] },
            None,
            |_, row, _| rows.push(*row),
        )?;
        Ok(rows)
    }
}
