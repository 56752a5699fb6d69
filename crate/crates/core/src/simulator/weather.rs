//! Synthetic stochastic weather: a seasonal sinusoid with a per-year shift
//! and AR(1) daily anomalies, spread over the day by a fixed diurnal cycle.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::rng_from;

pub const DAYS: usize = 365;
pub const HOURS: usize = DAYS * 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherParams {
    pub annual_mean: f64,
    pub seasonal_amplitude: f64,
    /// Day of year at which the seasonal sinusoid crosses the annual mean upwards.
    pub phase_day: f64,
    pub year_shift_sd: f64,
    pub ar_coefficient: f64,
    pub ar_innovation_sd: f64,
    pub diurnal_amplitude: f64,
    pub diurnal_peak_hour: f64,
    pub burn_in_days: usize,
    /// With `false` every random term is zero and the year is the bare sinusoid.
    pub stochastic: bool,
}

impl Default for WeatherParams {
    fn default() -> Self {
        WeatherParams {
            annual_mean: 12.0,
            seasonal_amplitude: 7.0,
            phase_day: 105.0,
            year_shift_sd: 1.0,
            ar_coefficient: 0.7,
            ar_innovation_sd: 1.7,
            diurnal_amplitude: 4.0,
            diurnal_peak_hour: 15.0,
            burn_in_days: 7,
            stochastic: true,
        }
    }
}

impl WeatherParams {
    pub fn deterministic() -> Self {
        WeatherParams {
            stochastic: false,
            ..Self::default()
        }
    }

    fn seasonal(&self, day: f64) -> f64 {
        self.annual_mean
            + self.seasonal_amplitude * (2.0 * std::f64::consts::PI * (day - self.phase_day) / DAYS as f64).sin()
    }

    fn diurnal(&self) -> [f64; 24] {
        let mut d = [0.0; 24];
        for (h, v) in d.iter_mut().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * (h as f64 - self.diurnal_peak_hour + 6.0) / 24.0;
            *v = self.diurnal_amplitude * phase.sin();
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeatherYear {
    /// Daily mean outdoor temperature for days 1..=365 (index 0 is 1 January).
    pub daily_mean: Vec<f64>,
    /// Hourly outdoor temperature, day-major.
    pub hourly: Vec<f64>,
    /// Daily means of the burn-in days preceding 1 January, oldest first.
    pub burn_in: Vec<f64>,
    /// Fraction of clear-sky sunshine per day, in [0, 1].
    pub sunshine: Vec<f64>,
    /// Relative wind speed per day (1 = typical).
    pub wind: Vec<f64>,
    pub year_shift: f64,
}

impl WeatherYear {
    /// Initial value for the comfort running mean: one recursion step from
    /// the burn-in week's mean, so that day 1 follows the last burn-in day.
    pub fn running_mean_init(&self) -> f64 {
        match self.burn_in.last() {
            Some(&last) => {
                let mean = self.burn_in.iter().sum::<f64>() / self.burn_in.len() as f64;
                0.2 * last + 0.8 * mean
            }
            None => self.daily_mean[0],
        }
    }
}

pub fn sample_weather(params: &WeatherParams, seed: u64) -> WeatherYear {
    let mut rng = rng_from(seed);
    let total = params.burn_in_days + DAYS;
    let (shift, anomalies, sun_noise, wind_noise) = if params.stochastic {
        let shift = params.year_shift_sd * rng.sample::<f64, _>(StandardNormal);
        let innovation = Normal::new(0.0, params.ar_innovation_sd).expect("finite sd");
        let stationary_sd = params.ar_innovation_sd / (1.0 - params.ar_coefficient.powi(2)).max(1e-12).sqrt();
        let mut e = stationary_sd * rng.sample::<f64, _>(StandardNormal);
        let mut anomalies = Vec::with_capacity(total);
        for _ in 0..total {
            anomalies.push(e);
            e = params.ar_coefficient * e + innovation.sample(&mut rng);
        }
        let sun: Vec<f64> = (0..DAYS).map(|_| rng.sample(StandardNormal)).collect();
        let wind: Vec<f64> = (0..DAYS).map(|_| rng.sample(StandardNormal)).collect();
        (shift, anomalies, sun, wind)
    } else {
        (0.0, vec![0.0; total], vec![0.0; DAYS], vec![0.0; DAYS])
    };

    let day_value = |k: usize| {
        let day = k as f64 - params.burn_in_days as f64 + 1.0;
        params.seasonal(day) + shift + anomalies[k]
    };
    let burn_in: Vec<f64> = (0..params.burn_in_days).map(day_value).collect();
    let daily_mean: Vec<f64> = (params.burn_in_days..total).map(day_value).collect();

    let diurnal = params.diurnal();
    let mut hourly = Vec::with_capacity(HOURS);
    for t in &daily_mean {
        hourly.extend(diurnal.iter().map(|d| t + d));
    }

    let anomaly_sd = params.ar_innovation_sd / (1.0 - params.ar_coefficient.powi(2)).max(1e-12).sqrt();
    let sunshine = (0..DAYS)
        .map(|d| {
            let warm = anomalies[params.burn_in_days + d] / anomaly_sd.max(1e-12);
            let z = 0.8 * warm + 0.6 * sun_noise[d];
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let wind = (0..DAYS)
        .map(|d| {
            let season = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * (d as f64 - 15.0) / DAYS as f64).cos();
            season * (0.4 * wind_noise[d]).exp()
        })
        .collect();

    WeatherYear {
        daily_mean,
        hourly,
        burn_in,
        sunshine,
        wind,
        year_shift: shift,
    }
}
