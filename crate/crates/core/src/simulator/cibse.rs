//! The CIBSE adaptive-comfort overheating criteria for free-running buildings.

use serde::{Deserialize, Serialize};

use super::weather::{WeatherYear, HOURS};

/// `T_rm[d] = 0.2 T_od[d-1] + 0.8 T_rm[d-1]`, with `T_rm[0] = init`.
pub fn running_mean(daily: &[f64], init: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(daily.len());
    let mut current = init;
    for (d, _) in daily.iter().enumerate() {
        if d > 0 {
            current = 0.2 * daily[d - 1] + 0.8 * current;
        }
        out.push(current);
    }
    out
}

/// Upper comfort limit for a given running mean.
pub fn max_comfort(running_mean: f64) -> f64 {
    0.33 * running_mean + 21.8
}

/// Occupied hours are `start_hour <= h < end_hour` every day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Occupancy {
    pub start_hour: usize,
    pub end_hour: usize,
}

impl Default for Occupancy {
    fn default() -> Self {
        Occupancy {
            start_hour: 7,
            end_hour: 23,
        }
    }
}

impl Occupancy {
    pub fn is_occupied(&self, hour_of_day: usize) -> bool {
        hour_of_day >= self.start_hour && hour_of_day < self.end_hour
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..HOURS).map(|h| self.is_occupied(h % 24)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CibseOptions {
    /// First and last day (1-based, inclusive) of the criterion-1 window.
    pub summer_first_day: usize,
    pub summer_last_day: usize,
    pub frequency_delta: f64,
    pub frequency_fraction: f64,
    pub daily_sum_limit: f64,
    pub peak_delta: f64,
    /// Sum only positive exceedances for criterion 2.
    pub daily_sum_positive_only: bool,
}

impl Default for CibseOptions {
    fn default() -> Self {
        CibseOptions {
            summer_first_day: 121,
            summer_last_day: 273,
            frequency_delta: 1.0,
            frequency_fraction: 0.03,
            daily_sum_limit: 6.0,
            peak_delta: 4.0,
            daily_sum_positive_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndoorSeries {
    pub operative: Vec<f64>,
    pub occupied: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverheatAssessment {
    pub delta_t: Vec<f64>,
    pub criterion1: bool,
    pub criterion2: bool,
    pub criterion3: bool,
    pub overheated: bool,
}

impl OverheatAssessment {
    pub fn broken_count(&self) -> usize {
        [self.criterion1, self.criterion2, self.criterion3]
            .iter()
            .filter(|b| **b)
            .count()
    }
}

pub fn assess_overheating(indoor: &IndoorSeries, weather: &WeatherYear) -> OverheatAssessment {
    assess_overheating_with(indoor, weather, &CibseOptions::default())
}

pub fn assess_overheating_with(indoor: &IndoorSeries, weather: &WeatherYear, opts: &CibseOptions) -> OverheatAssessment {
    let t_rm = running_mean(&weather.daily_mean, weather.running_mean_init());
    let delta_t: Vec<f64> = indoor
        .operative
        .iter()
        .enumerate()
        .map(|(h, t)| t - max_comfort(t_rm[h / 24]))
        .collect();
    assess_delta_t(delta_t, &indoor.occupied, opts)
}

/// Applies the three criteria to an hourly `delta_t` series (day-major,
/// 24 values per day).
pub fn assess_delta_t(delta_t: Vec<f64>, occupied: &[bool], opts: &CibseOptions) -> OverheatAssessment {
    assert_eq!(delta_t.len(), occupied.len(), "series lengths differ");
    let days = delta_t.len() / 24;
    let mut window_hours = 0usize;
    let mut window_exceed = 0usize;
    let mut criterion2 = false;
    let mut criterion3 = false;
    for d in 0..days {
        let in_window = d + 1 >= opts.summer_first_day && d < opts.summer_last_day;
        let mut daily = 0.0;
        for h in d * 24..(d + 1) * 24 {
            if !occupied[h] {
                continue;
            }
            let dt = delta_t[h];
            if in_window {
                window_hours += 1;
                if dt > opts.frequency_delta {
                    window_exceed += 1;
                }
            }
            daily += if opts.daily_sum_positive_only { dt.max(0.0) } else { dt };
            if dt > opts.peak_delta {
                criterion3 = true;
            }
        }
        if daily >= opts.daily_sum_limit {
            criterion2 = true;
        }
    }
    let criterion1 = window_hours > 0 && (window_exceed as f64) > opts.frequency_fraction * window_hours as f64;
    let broken = [criterion1, criterion2, criterion3].iter().filter(|b| **b).count();
    OverheatAssessment {
        delta_t,
        criterion1,
        criterion2,
        criterion3,
        overheated: broken >= 2,
    }
}
