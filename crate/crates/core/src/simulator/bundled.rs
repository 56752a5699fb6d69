//! A small stochastic stand-in for a whole-building simulation. Each run
//! draws a weather year, computes the annual heating demand from a
//! degree-day balance and an hourly free-running indoor temperature, and
//! classifies overheating with the CIBSE criteria.
//!
//! The physics is a fixture rather than a model of any real dwelling:
//! insulation and triple glazing lower the heat-loss coefficient (less
//! heating, but solar and internal gains are retained longer in summer),
//! large unshaded windows raise both winter gains and summer overheating,
//! and opening windows cools in summer at the cost of infiltration losses.

use serde::{Deserialize, Serialize};

use super::cibse::{assess_delta_t, max_comfort, running_mean, CibseOptions, IndoorSeries, Occupancy, OverheatAssessment};
use super::weather::{sample_weather, WeatherParams, WeatherYear, DAYS, HOURS};
use super::{SimOutcome, SimJob, Simulator};
use crate::design::{DesignSpace, InputPoint};
use crate::error::{JobError, Result, SimulatorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildingParams {
    pub floor_area: f64,
    pub wall_area: f64,
    /// Glazed area at 100 % window size.
    pub glazing_area_max: f64,
    pub roof_area: f64,
    pub ground_area: f64,
    /// Insulation conductivity, W/mK.
    pub conductivity: f64,
    /// Thermal resistance of the uninsulated wall, roof and ground, m2K/W.
    pub wall_r0: f64,
    pub roof_r0: f64,
    pub ground_r0: f64,
    pub u_double: f64,
    pub u_triple: f64,
    /// Fixed thermal-bridge losses, W/K.
    pub bridging: f64,
    pub infiltration_base: f64,
    /// Extra infiltration at a fully openable window, W/K.
    pub infiltration_opening: f64,
    /// Relative change in roof losses per unit emissivity.
    pub roof_emissivity_loss: f64,
    pub heating_base: f64,
    /// Fraction of daily solar gain offsetting heating.
    pub solar_utilisation: f64,
    /// Peak solar gain per m2 of unshaded glazing on a clear midsummer day, W.
    pub solar_peak: f64,
    pub internal_gains: f64,
    /// Sol-air excess on a clear midsummer day for a black roof, K.
    pub roof_sol_air: f64,
    /// Summer ventilation from open windows at typical wind, W/K.
    pub ventilation_opening: f64,
    pub ventilation_base: f64,
    /// Indoor response time constant, hours.
    pub time_constant: f64,
}

impl Default for BuildingParams {
    fn default() -> Self {
        BuildingParams {
            floor_area: 100.0,
            wall_area: 80.0,
            glazing_area_max: 25.0,
            roof_area: 50.0,
            ground_area: 50.0,
            conductivity: 0.035,
            wall_r0: 0.5,
            roof_r0: 0.4,
            ground_r0: 2.0,
            u_double: 2.8,
            u_triple: 0.8,
            bridging: 3.0,
            infiltration_base: 3.0,
            infiltration_opening: 10.0,
            roof_emissivity_loss: 0.5,
            heating_base: 13.5,
            solar_utilisation: 0.9,
            solar_peak: 250.0,
            internal_gains: 200.0,
            roof_sol_air: 20.0,
            ventilation_opening: 400.0,
            ventilation_base: 40.0,
            time_constant: 12.0,
        }
    }
}

/// Design-dependent constants of one building.
#[derive(Clone, Copy, Debug)]
struct Building {
    heat_loss: f64,
    glazed_solar: f64,
    roof_gain: f64,
    ventilation_opening: f64,
}

/// Relative clear-sky irradiance, peaking at the summer solstice.
fn seasonal_sun(day: usize) -> f64 {
    let s = (2.0 * std::f64::consts::PI * (day as f64 + 1.0 - 80.0) / DAYS as f64).sin();
    0.55 + 0.45 * s
}

fn hourly_sun() -> [f64; 24] {
    let mut p = [0.0; 24];
    for (h, v) in p.iter_mut().enumerate() {
        if (6..=18).contains(&h) {
            *v = (std::f64::consts::PI * (h as f64 - 6.0) / 12.0).sin();
        }
    }
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct BundledConfig {
    pub weather: WeatherParams,
    pub building: BuildingParams,
    pub cibse: CibseOptions,
    pub occupancy: Occupancy,
}


/// Full output of one run, for inspection.
#[derive(Clone, Debug)]
pub struct DetailedRun {
    pub weather: WeatherYear,
    pub indoor: IndoorSeries,
    pub assessment: OverheatAssessment,
    pub energy_kwh_m2: f64,
}

#[derive(Clone, Debug)]
pub struct BundledSimulator {
    space: DesignSpace,
    config: BundledConfig,
    mask: Vec<bool>,
    sun: [f64; 24],
}

impl Default for BundledSimulator {
    fn default() -> Self {
        Self::new(BundledConfig::default())
    }
}

impl BundledSimulator {
    pub fn new(config: BundledConfig) -> Self {
        BundledSimulator {
            space: DesignSpace::building_retrofit(),
            mask: config.occupancy.mask(),
            config,
            sun: hourly_sun(),
        }
    }

    pub fn config(&self) -> &BundledConfig {
        &self.config
    }

    fn building(&self, x: &InputPoint) -> Result<Building> {
        self.space.check_point(x)?;
        let native = self.space.to_native(x);
        let (wall_t, roof_t, ground_t, window, overhang, opening, emissivity, triple) = (
            native[0], native[1], native[2], native[3], native[4], native[5], native[6], native[7] > 0.5,
        );
        let p = &self.config.building;
        let u = |r0: f64, t: f64| 1.0 / (r0 + t / p.conductivity);
        let glazing = p.glazing_area_max * window;
        let u_window = if triple { p.u_triple } else { p.u_double };
        let u_roof = u(p.roof_r0, roof_t);
        let roof_factor = 1.0 + p.roof_emissivity_loss * (emissivity - 0.7);
        let heat_loss = u(p.wall_r0, wall_t) * (p.wall_area - glazing)
            + u_roof * p.roof_area * roof_factor
            + u(p.ground_r0, ground_t) * p.ground_area
            + u_window * glazing
            + p.bridging
            + p.infiltration_base
            + p.infiltration_opening * opening;
        let shading = (1.0 - 0.6 * overhang) * if triple { 0.5 } else { 1.0 };
        Ok(Building {
            heat_loss,
            glazed_solar: p.solar_peak * glazing * shading,
            roof_gain: p.roof_sol_air * (1.0 - emissivity) * u_roof * p.roof_area,
            ventilation_opening: p.ventilation_opening * opening,
        })
    }

    fn annual_energy(&self, b: &Building, w: &WeatherYear) -> f64 {
        let p = &self.config.building;
        let sun_hours: f64 = self.sun.iter().sum();
        let mut kwh = 0.0;
        for d in 0..DAYS {
            let loss_wh = b.heat_loss * (p.heating_base - w.daily_mean[d]).max(0.0) * 24.0;
            let solar_wh = b.glazed_solar * seasonal_sun(d) * w.sunshine[d] * sun_hours;
            kwh += (loss_wh - p.solar_utilisation * solar_wh).max(0.0) / 1000.0;
        }
        kwh / p.floor_area
    }

    fn indoor(&self, b: &Building, w: &WeatherYear) -> Vec<f64> {
        let p = &self.config.building;
        let alpha = 1.0 / p.time_constant.max(1.0);
        let mut out = Vec::with_capacity(HOURS);
        let mut t = w.hourly[0];
        for d in 0..DAYS {
            let h_total = b.heat_loss + p.ventilation_base + b.ventilation_opening * w.wind[d];
            let sky = seasonal_sun(d) * w.sunshine[d];
            for h in 0..24 {
                let solar = sky * self.sun[h];
                let gain = (p.internal_gains + (b.glazed_solar + b.roof_gain) * solar) / h_total;
                let free = w.hourly[d * 24 + h] + gain;
                t += alpha * (free - t);
                out.push(t);
            }
        }
        out
    }

    fn delta_t(&self, operative: &[f64], w: &WeatherYear) -> Vec<f64> {
        let t_rm = running_mean(&w.daily_mean, w.running_mean_init());
        operative
            .iter()
            .enumerate()
            .map(|(h, t)| t - max_comfort(t_rm[h / 24]))
            .collect()
    }

    /// Runs the building against a given weather year.
    pub fn simulate_with_weather(&self, x: &InputPoint, weather: &WeatherYear) -> Result<SimOutcome> {
        let b = self.building(x)?;
        let energy = self.annual_energy(&b, weather);
        let indoor = self.indoor(&b, weather);
        let a = assess_delta_t(self.delta_t(&indoor, weather), &self.mask, &self.config.cibse);
        Ok(SimOutcome {
            energy_kwh_m2: energy,
            overheated: a.overheated,
        })
    }

    pub fn simulate(&self, x: &InputPoint, seed: u64) -> Result<SimOutcome> {
        let weather = sample_weather(&self.config.weather, seed);
        self.simulate_with_weather(x, &weather)
    }

    pub fn simulate_detailed(&self, x: &InputPoint, seed: u64) -> Result<DetailedRun> {
        let b = self.building(x)?;
        let weather = sample_weather(&self.config.weather, seed);
        let energy = self.annual_energy(&b, &weather);
        let operative = self.indoor(&b, &weather);
        let assessment = assess_delta_t(self.delta_t(&operative, &weather), &self.mask, &self.config.cibse);
        Ok(DetailedRun {
            indoor: IndoorSeries {
                operative,
                occupied: self.mask.clone(),
            },
            weather,
            assessment,
            energy_kwh_m2: energy,
        })
    }

    pub fn sample_weather(&self, seed: u64) -> WeatherYear {
        sample_weather(&self.config.weather, seed)
    }
}

impl Simulator for BundledSimulator {
    fn name(&self) -> &str {
        "bundled"
    }

    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn run_batch(&self, jobs: &[SimJob]) -> std::result::Result<Vec<std::result::Result<SimOutcome, JobError>>, SimulatorError> {
        use rayon::prelude::*;
        Ok(jobs
            .par_iter()
            .map(|job| {
                self.simulate(&job.point, job.seed).map_err(|e| JobError::Failed {
                    id: job.id,
                    rep: job.rep,
                    reason: e.to_string(),
                })
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner(bits: u32) -> InputPoint {
        let c: Vec<f64> = (0..7).map(|i| ((bits >> i) & 1) as f64).collect();
        InputPoint::new(c, vec![(bits >> 7) & 1 == 1])
    }

    #[test]
    fn deterministic_given_seed() {
        let sim = BundledSimulator::default();
        let x = InputPoint::new(vec![0.3, 0.4, 0.5, 0.6, 0.2, 0.1, 0.9], vec![true]);
        assert_eq!(sim.simulate(&x, 77).unwrap(), sim.simulate(&x, 77).unwrap());
    }

    #[test]
    fn energy_finite_and_nonnegative_at_corners() {
        let sim = BundledSimulator::default();
        for bits in 0..256 {
            let out = sim.simulate(&corner(bits), bits as u64).unwrap();
            assert!(out.energy_kwh_m2.is_finite() && out.energy_kwh_m2 >= 0.0);
        }
    }

    #[test]
    fn insulation_lowers_energy() {
        let sim = BundledSimulator::default();
        let good = InputPoint::new(vec![1.0, 1.0, 1.0, 0.0, 0.5, 0.0, 0.0], vec![true]);
        let bad = InputPoint::new(vec![0.0, 0.0, 0.0, 1.0, 0.5, 1.0, 1.0], vec![false]);
        let n = 1000;
        let mean = |x: &InputPoint| (0..n).map(|s| sim.simulate(x, s).unwrap().energy_kwh_m2).sum::<f64>() / n as f64;
        assert!(mean(&good) < mean(&bad));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let sim = BundledSimulator::default();
        assert!(sim.simulate(&InputPoint::new(vec![0.5; 3], vec![]), 0).is_err());
    }
}
