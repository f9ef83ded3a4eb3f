//! Model parameters for the annual DICE-2016 engine.
//!
//! The defaults reproduce the published DICE-2016R calibration. Exogenous
//! paths and transition coefficients are given on the native five-year grid
//! and re-discretized to the simulation step when a model is built.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DiceError;

/// Molar-mass ratio CO2 / C.
pub const CO2_PER_CARBON: f64 = 44.0 / 12.0;

/// $T per GtCO2 expressed in $/tCO2 (10^12 / 10^9).
pub const DOLLARS_PER_TON_PER_TRILLION_PER_GT: f64 = 1000.0;

/// Name of the built-in parameter set.
pub const DEFAULT_PARAMETER_SET: &str = "dice2016-annual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParameters {
    /// Calendar year of the first period.
    pub start_year: f64,
    /// Length of the simulated horizon in years.
    pub time_horizon_years: usize,
    /// Simulation step in years.
    pub step_size: f64,
    /// Annual rate of the risk-free account used as numeraire (linear
    /// compounding per step).
    pub numeraire_rate: f64,
    /// Upper bound for the abatement fraction.
    pub max_abatement: f64,
    pub carbon: CarbonCycleParameters,
    pub climate: ClimateParameters,
    pub economy: EconomyParameters,
    pub emissions: EmissionsParameters,
    pub damage: DamageParameters,
    pub abatement_cost: AbatementCostParameters,
    pub utility: UtilityParameters,
}

/// Three-reservoir carbon cycle (atmosphere, upper ocean, lower ocean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarbonCycleParameters {
    /// Step length in years that `transfer_matrix` refers to.
    pub native_step_years: f64,
    /// Initial reservoir masses [atmosphere, upper, lower] in GtC.
    pub initial_mass: [f64; 3],
    /// Transfer matrix over one native step. Row is destination, column is
    /// source; every column sums to one.
    pub transfer_matrix: [[f64; 3]; 3],
}

/// Two-box temperature response and radiative forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimateParameters {
    pub native_step_years: f64,
    /// Initial atmospheric temperature anomaly (°C).
    pub initial_atmosphere_temperature: f64,
    /// Initial lower-ocean temperature anomaly (°C).
    pub initial_lower_ocean_temperature: f64,
    /// Speed of adjustment of the atmospheric box per native step.
    pub c1: f64,
    /// Atmosphere / lower-ocean heat exchange per native step.
    pub c3: f64,
    /// Lower-ocean uptake per native step.
    pub c4: f64,
    /// Equilibrium climate sensitivity (°C per CO2 doubling).
    pub equilibrium_sensitivity: f64,
    /// Forcing of a CO2 doubling (W/m²).
    pub forcing_co2_doubling: f64,
    /// Reference (pre-industrial) atmospheric carbon mass (GtC).
    pub reference_atmosphere_mass: f64,
    /// Non-CO2 forcing in the first period (W/m²).
    pub other_forcing_initial: f64,
    /// Value the linear ramp of non-CO2 forcing heads for (W/m²).
    pub other_forcing_ramp_target: f64,
    /// Years over which non-CO2 forcing ramps linearly.
    pub other_forcing_ramp_years: f64,
    /// Non-CO2 forcing from the end of the ramp on (W/m²). The released
    /// DICE-2016R code sets this to `fex1 - fex0` = 0.5, not to the ramp
    /// target.
    pub other_forcing_after_ramp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomyParameters {
    pub native_step_years: f64,
    /// Initial capital stock ($T).
    pub initial_capital: f64,
    /// Annual depreciation rate of capital.
    pub depreciation_rate: f64,
    /// Capital elasticity of the Cobb-Douglas production function.
    pub capital_elasticity: f64,
    /// Initial world population (millions).
    pub initial_population: f64,
    /// Asymptotic population (millions).
    pub asymptotic_population: f64,
    /// Share of the gap to the asymptote closed per native step.
    pub population_adjustment: f64,
    pub initial_productivity: f64,
    /// Productivity growth per native step in the first period.
    pub productivity_growth: f64,
    /// Annual decline rate of productivity growth.
    pub productivity_growth_decline: f64,
    /// Savings rate in the first period.
    pub savings_rate_initial: f64,
    /// Long-run savings rate.
    pub savings_rate_final: f64,
    /// Years over which the savings rate moves linearly to its long-run value.
    pub savings_taper_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmissionsParameters {
    pub native_step_years: f64,
    /// Initial carbon intensity of output (GtCO2 per $T).
    pub initial_intensity: f64,
    /// Annual growth of carbon intensity in the first period (negative).
    pub intensity_growth: f64,
    /// Decline of intensity growth compounded per year.
    pub intensity_growth_decline: f64,
    /// Land-use emissions in the first period (GtCO2/yr).
    pub initial_land_use: f64,
    /// Decline of land-use emissions per native step.
    pub land_use_decline: f64,
}

/// Damage fraction of gross output as a polynomial of atmospheric
/// temperature, coefficients in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamageParameters {
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbatementCostParameters {
    pub native_step_years: f64,
    /// Backstop price in the first period ($/tCO2).
    pub initial_backstop_price: f64,
    /// Decline of the backstop price per native step.
    pub backstop_decline: f64,
    /// Exponent of the abatement cost curve.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityParameters {
    /// Elasticity of marginal utility of consumption.
    pub elasticity: f64,
    /// Pure rate of social time preference (per year).
    pub time_preference_rate: f64,
    /// When true, utility is additionally discounted with the pure rate of
    /// time preference on top of the numeraire.
    pub apply_time_preference: bool,
}

impl Default for ModelParameters {
    fn default() -> Self {
        Self {
            start_year: 2015.0,
            time_horizon_years: 500,
            step_size: 1.0,
            numeraire_rate: 0.015,
            max_abatement: 1.0,
            carbon: CarbonCycleParameters::default(),
            climate: ClimateParameters::default(),
            economy: EconomyParameters::default(),
            emissions: EmissionsParameters::default(),
            damage: DamageParameters::default(),
            abatement_cost: AbatementCostParameters::default(),
            utility: UtilityParameters::default(),
        }
    }
}

impl Default for CarbonCycleParameters {
    fn default() -> Self {
        // DICE-2016R: fractions b12, b23 and equilibrium masses.
        let (b12, b23) = (0.12, 0.007);
        let (mat_eq, mu_eq, ml_eq) = (588.0, 360.0, 1720.0);
        let b21 = b12 * mat_eq / mu_eq;
        let b32 = b23 * mu_eq / ml_eq;
        Self {
            native_step_years: 5.0,
            initial_mass: [851.0, 460.0, 1740.0],
            transfer_matrix: [
                [1.0 - b12, b21, 0.0],
                [b12, 1.0 - b21 - b23, b32],
                [0.0, b23, 1.0 - b32],
            ],
        }
    }
}

impl Default for ClimateParameters {
    fn default() -> Self {
        Self {
            native_step_years: 5.0,
            initial_atmosphere_temperature: 0.85,
            initial_lower_ocean_temperature: 0.0068,
            c1: 0.1005,
            c3: 0.088,
            c4: 0.025,
            equilibrium_sensitivity: 3.1,
            forcing_co2_doubling: 3.6813,
            reference_atmosphere_mass: 588.0,
            other_forcing_initial: 0.5,
            other_forcing_ramp_target: 1.0,
            other_forcing_ramp_years: 85.0,
            other_forcing_after_ramp: 0.5,
        }
    }
}

impl Default for EconomyParameters {
    fn default() -> Self {
        Self {
            native_step_years: 5.0,
            initial_capital: 223.0,
            depreciation_rate: 0.1,
            capital_elasticity: 0.3,
            initial_population: 7403.0,
            asymptotic_population: 11500.0,
            population_adjustment: 0.134,
            initial_productivity: 5.115,
            productivity_growth: 0.076,
            productivity_growth_decline: 0.005,
            savings_rate_initial: 0.259,
            savings_rate_final: 0.2583,
            savings_taper_years: 250.0,
        }
    }
}

impl Default for EmissionsParameters {
    fn default() -> Self {
        // sigma0 = e0 / (q0 (1 - miu0)) with 2015 emissions 35.85 GtCO2,
        // output 105.5 $T and abatement 0.03.
        Self {
            native_step_years: 5.0,
            initial_intensity: 35.85 / (105.5 * (1.0 - 0.03)),
            intensity_growth: -0.0152,
            intensity_growth_decline: -0.001,
            initial_land_use: 2.6,
            land_use_decline: 0.115,
        }
    }
}

impl Default for DamageParameters {
    fn default() -> Self {
        Self {
            coefficients: vec![0.0, 0.0, 0.00236],
        }
    }
}

impl Default for AbatementCostParameters {
    fn default() -> Self {
        Self {
            native_step_years: 5.0,
            initial_backstop_price: 550.0,
            backstop_decline: 0.025,
            exponent: 2.6,
        }
    }
}

impl Default for UtilityParameters {
    fn default() -> Self {
        Self {
            elasticity: 1.45,
            time_preference_rate: 0.015,
            apply_time_preference: false,
        }
    }
}

/// A single broken rule, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn require(&mut self, ok: bool, field: &str, rule: &str) {
        if !ok {
            self.violations.push(Violation::new(field, rule));
        }
    }

    fn finite(&mut self, value: f64, field: &str) -> bool {
        let ok = value.is_finite();
        self.require(ok, field, "must be finite");
        ok
    }

    fn positive(&mut self, value: f64, field: &str) {
        if self.finite(value, field) {
            self.require(value > 0.0, field, "must be > 0");
        }
    }

    fn non_negative(&mut self, value: f64, field: &str) {
        if self.finite(value, field) {
            self.require(value >= 0.0, field, "must be >= 0");
        }
    }

    fn open_unit(&mut self, value: f64, field: &str) {
        if self.finite(value, field) {
            self.require(value > 0.0 && value < 1.0, field, "must lie in (0, 1)");
        }
    }
}

impl ModelParameters {
    /// The built-in annual DICE-2016 parameter set.
    pub fn dice2016_annual() -> Self {
        Self::default()
    }

    /// Number of simulation periods on the grid.
    pub fn periods(&self) -> usize {
        (self.time_horizon_years as f64 / self.step_size).round() as usize
    }

    /// Time in years since the start of period `index`.
    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.step_size
    }

    pub fn year(&self, index: usize) -> f64 {
        self.start_year + self.time(index)
    }

    /// Every invariant violated by this parameter set. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut c = Checker {
            violations: Vec::new(),
        };
        c.require(self.time_horizon_years >= 1, "time_horizon_years", "must be >= 1");
        c.positive(self.step_size, "step_size");
        if self.step_size.is_finite() && self.step_size > 0.0 {
            let steps = self.time_horizon_years as f64 / self.step_size;
            c.require(
                (steps - steps.round()).abs() < 1e-9 && steps.round() >= 1.0,
                "step_size",
                "must divide time_horizon_years into a whole number of steps",
            );
        }
        c.non_negative(self.numeraire_rate, "numeraire_rate");
        c.finite(self.start_year, "start_year");
        if c.finite(self.max_abatement, "max_abatement") {
            c.require(
                self.max_abatement > 0.0,
                "max_abatement",
                "must be > 0",
            );
        }

        let carbon = &self.carbon;
        c.positive(carbon.native_step_years, "carbon.native_step_years");
        for (i, m) in carbon.initial_mass.iter().enumerate() {
            c.positive(*m, &format!("carbon.initial_mass[{i}]"));
        }
        let mut entries_ok = true;
        for (i, row) in carbon.transfer_matrix.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let field = format!("carbon.transfer_matrix[{i}][{j}]");
                if c.finite(*v, &field) {
                    c.require(*v >= 0.0, &field, "transfer coefficients must be >= 0");
                    entries_ok &= *v >= 0.0;
                } else {
                    entries_ok = false;
                }
            }
        }
        if entries_ok {
            for j in 0..3 {
                let sum: f64 = (0..3).map(|i| carbon.transfer_matrix[i][j]).sum();
                c.require(
                    (sum - 1.0).abs() < 1e-9,
                    &format!("carbon.transfer_matrix[*][{j}]"),
                    "column must sum to 1 (mass conservation)",
                );
            }
        }

        let climate = &self.climate;
        c.positive(climate.native_step_years, "climate.native_step_years");
        c.finite(
            climate.initial_atmosphere_temperature,
            "climate.initial_atmosphere_temperature",
        );
        c.finite(
            climate.initial_lower_ocean_temperature,
            "climate.initial_lower_ocean_temperature",
        );
        c.positive(climate.c1, "climate.c1");
        c.positive(climate.c3, "climate.c3");
        c.open_unit(climate.c4, "climate.c4");
        c.positive(climate.equilibrium_sensitivity, "climate.equilibrium_sensitivity");
        c.positive(climate.forcing_co2_doubling, "climate.forcing_co2_doubling");
        c.positive(
            climate.reference_atmosphere_mass,
            "climate.reference_atmosphere_mass",
        );
        c.finite(climate.other_forcing_initial, "climate.other_forcing_initial");
        c.finite(climate.other_forcing_ramp_target, "climate.other_forcing_ramp_target");
        c.finite(climate.other_forcing_after_ramp, "climate.other_forcing_after_ramp");
        c.positive(climate.other_forcing_ramp_years, "climate.other_forcing_ramp_years");

        let economy = &self.economy;
        c.positive(economy.native_step_years, "economy.native_step_years");
        c.positive(economy.initial_capital, "economy.initial_capital");
        c.open_unit(economy.depreciation_rate, "economy.depreciation_rate");
        c.open_unit(economy.capital_elasticity, "economy.capital_elasticity");
        c.positive(economy.initial_population, "economy.initial_population");
        c.positive(economy.asymptotic_population, "economy.asymptotic_population");
        if c.finite(economy.population_adjustment, "economy.population_adjustment") {
            c.require(
                (0.0..=1.0).contains(&economy.population_adjustment),
                "economy.population_adjustment",
                "must lie in [0, 1]",
            );
        }
        c.positive(economy.initial_productivity, "economy.initial_productivity");
        if c.finite(economy.productivity_growth, "economy.productivity_growth") {
            c.require(
                economy.productivity_growth < 1.0,
                "economy.productivity_growth",
                "must be < 1",
            );
        }
        c.non_negative(
            economy.productivity_growth_decline,
            "economy.productivity_growth_decline",
        );
        c.open_unit(economy.savings_rate_initial, "economy.savings_rate_initial");
        c.open_unit(economy.savings_rate_final, "economy.savings_rate_final");
        c.positive(economy.savings_taper_years, "economy.savings_taper_years");

        let emissions = &self.emissions;
        c.positive(emissions.native_step_years, "emissions.native_step_years");
        c.non_negative(emissions.initial_intensity, "emissions.initial_intensity");
        c.finite(emissions.intensity_growth, "emissions.intensity_growth");
        if c.finite(
            emissions.intensity_growth_decline,
            "emissions.intensity_growth_decline",
        ) {
            c.require(
                emissions.intensity_growth_decline > -1.0,
                "emissions.intensity_growth_decline",
                "must be > -1",
            );
        }
        c.non_negative(emissions.initial_land_use, "emissions.initial_land_use");
        if c.finite(emissions.land_use_decline, "emissions.land_use_decline") {
            c.require(
                (0.0..1.0).contains(&emissions.land_use_decline),
                "emissions.land_use_decline",
                "must lie in [0, 1)",
            );
        }

        c.require(
            !self.damage.coefficients.is_empty(),
            "damage.coefficients",
            "must contain at least one coefficient",
        );
        for (i, a) in self.damage.coefficients.iter().enumerate() {
            c.non_negative(*a, &format!("damage.coefficients[{i}]"));
        }

        let cost = &self.abatement_cost;
        c.positive(cost.native_step_years, "abatement_cost.native_step_years");
        c.non_negative(cost.initial_backstop_price, "abatement_cost.initial_backstop_price");
        if c.finite(cost.backstop_decline, "abatement_cost.backstop_decline") {
            c.require(
                (0.0..1.0).contains(&cost.backstop_decline),
                "abatement_cost.backstop_decline",
                "must lie in [0, 1)",
            );
        }
        if c.finite(cost.exponent, "abatement_cost.exponent") {
            c.require(cost.exponent > 1.0, "abatement_cost.exponent", "must be > 1");
        }

        c.non_negative(self.utility.elasticity, "utility.elasticity");
        c.non_negative(self.utility.time_preference_rate, "utility.time_preference_rate");

        c.violations
    }

    /// Fails with every violation joined into one message.
    pub fn check(&self) -> Result<(), DiceError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(DiceError::InvalidParameters(violations))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DiceError> {
        toml::from_str(text).map_err(|e| DiceError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("parameters always serialize")
    }

    /// Loads a parameter file, or the built-in set when `source` is its name.
    pub fn load(source: &str) -> Result<Self, DiceError> {
        if source == DEFAULT_PARAMETER_SET {
            return Ok(Self::dice2016_annual());
        }
        let text = std::fs::read_to_string(Path::new(source)).map_err(|e| DiceError::Io {
            path: source.to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(ModelParameters::default().validate().is_empty());
    }

    #[test]
    fn default_transfer_matrix_conserves_mass() {
        let m = CarbonCycleParameters::default().transfer_matrix;
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| m[i][j]).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_numeraire_rate_names_field() {
        let p = ModelParameters {
            numeraire_rate: -0.01,
            ..Default::default()
        };
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "numeraire_rate");
    }

    #[test]
    fn leaky_matrix_is_rejected() {
        let mut p = ModelParameters::default();
        p.carbon.transfer_matrix[0][0] += 0.01;
        let v = p.validate();
        assert!(v.iter().any(|v| v.field == "carbon.transfer_matrix[*][0]"));
    }

    #[test]
    fn bad_economy_ranges() {
        let mut p = ModelParameters::default();
        p.economy.capital_elasticity = 1.0;
        p.economy.savings_rate_initial = 0.0;
        p.economy.depreciation_rate = 1.5;
        let fields: Vec<_> = p.validate().into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&"economy.capital_elasticity".to_string()));
        assert!(fields.contains(&"economy.savings_rate_initial".to_string()));
        assert!(fields.contains(&"economy.depreciation_rate".to_string()));
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let p = ModelParameters {
            time_horizon_years: 0,
            ..Default::default()
        };
        assert!(p.validate().iter().any(|v| v.field == "time_horizon_years"));
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let p = ModelParameters::default();
        let back = ModelParameters::from_toml_str(&p.to_toml_string()).unwrap();
        assert_eq!(p, back);

        let partial = ModelParameters::from_toml_str(
            "numeraire_rate = 0.02\n[damage]\ncoefficients = [0.0]\n",
        )
        .unwrap();
        assert_eq!(partial.numeraire_rate, 0.02);
        assert_eq!(partial.damage.coefficients, vec![0.0]);
        assert_eq!(partial.economy, EconomyParameters::default());
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(ModelParameters::from_toml_str("numeraire_rat = 0.02").is_err());
    }
}
