//! Seeded synthetic day curves.
//!
//! A curve is a non-negative power profile over a 24-hour day. A scenario
//! with `T` slots integrates it over each slot (composite Simpson) and then
//! rescales so the slot energies sum to the requested daily total, so the
//! same curve can be resampled at any resolution.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::Table2Params;
use crate::error::{GameError, Result};
use crate::gamecore::{FlexUserSet, Scenario};

pub const DAY_HOURS: f64 = 24.0;

const SIMPSON_PANELS: usize = 64;

/// Total demands of the twenty-user example fleet.
pub const FLEET20_DEMANDS: [f64; 20] = [
    1.55, 1.49, 1.04, 4.13, 3.7, 2.03, 2.29, 0.92, 4.47, 0.81, 8.98, 0.02, 0.29, 0.37, 0.13, 4.64,
    4.65, 4.83, 4.49, 0.26,
];
/// Renewable share of total supply in the twenty-user example.
pub const FLEET20_RENEWABLE_SHARE: f64 = 0.6222;
/// Flexible share of total demand in the twenty-user example.
pub const FLEET20_FLEXIBLE_SHARE: f64 = 0.2941;

/// Day totals and forecasts for the slot-resolution sweep.
pub const TABLE2: Table2Params = Table2Params {
    daily_w_total: 110.1,
    daily_r_total: 121.1,
    predicted_w: 125.0,
    predicted_r: 120.0,
    g_n: 41.6,
};
pub const TABLE2_SLOTS: [usize; 4] = [24, 36, 48, 60];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub height: f64,
    /// Hour of the maximum.
    pub center: f64,
    /// Standard deviation in hours.
    pub width: f64,
}

impl Peak {
    fn eval(&self, hour: f64) -> f64 {
        // Wrap around midnight so curves are periodic.
        let mut d = (hour - self.center).rem_euclid(DAY_HOURS);
        if d > DAY_HOURS / 2.0 {
            d -= DAY_HOURS;
        }
        self.height * (-0.5 * (d / self.width).powi(2)).exp()
    }
}

/// Power profile over one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DayCurve {
    /// `mean + amplitude · sin(2π (h - phase) / 24)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        phase: f64,
    },
    /// `peak · max(0, sin(π (h - sunrise) / (sunset - sunrise)))^exponent`
    /// on top of a slowly varying `base · (1 + swing · cos(2π h / 24))`.
    Solar {
        peak: f64,
        sunrise: f64,
        sunset: f64,
        exponent: f64,
        base: f64,
        swing: f64,
    },
    /// `base` plus Gaussian peaks.
    Peaks { base: f64, peaks: Vec<Peak> },
}

impl DayCurve {
    pub fn eval(&self, hour: f64) -> f64 {
        match self {
            DayCurve::Sinusoid {
                mean,
                amplitude,
                phase,
            } => mean + amplitude * (2.0 * PI * (hour - phase) / DAY_HOURS).sin(),
            DayCurve::Solar {
                peak,
                sunrise,
                sunset,
                exponent,
                base,
                swing,
            } => {
                let daylight = if hour > *sunrise && hour < *sunset {
                    (PI * (hour - sunrise) / (sunset - sunrise))
                        .sin()
                        .powf(*exponent)
                } else {
                    0.0
                };
                peak * daylight + base * (1.0 + swing * (2.0 * PI * hour / DAY_HOURS).cos())
            }
            DayCurve::Peaks { base, peaks } => {
                base + peaks.iter().map(|p| p.eval(hour)).sum::<f64>()
            }
        }
    }

    /// Energy in each of `slots` equal slots of the day.
    pub fn integrate(&self, slots: usize) -> Vec<f64> {
        let width = DAY_HOURS / slots as f64;
        let h = width / SIMPSON_PANELS as f64;
        (0..slots)
            .map(|k| {
                let start = k as f64 * width;
                let mut acc = self.eval(start) + self.eval(start + width);
                for j in 1..SIMPSON_PANELS {
                    let weight = if j % 2 == 1 { 4.0 } else { 2.0 };
                    acc += weight * self.eval(start + j as f64 * h);
                }
                acc * h / 3.0
            })
            .collect()
    }
}

/// Rescales `values` to sum to `total`.
pub fn scale_to_total(values: &[f64], total: f64) -> Result<Vec<f64>> {
    let sum: f64 = values.iter().sum();
    if !(sum > 0.0) || !(total >= 0.0) {
        return Err(GameError::InvalidScenario(format!(
            "cannot scale a curve with energy {sum} to total {total}"
        )));
    }
    Ok(values.iter().map(|v| v * total / sum).collect())
}

fn check_slots(slots: usize) -> Result<()> {
    if slots < 2 {
        return Err(GameError::InvalidScenario(format!(
            "need at least 2 slots, got {slots}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Smooth sinusoids for both renewable supply and regular load.
    Sinusoid,
    /// Daylight-shaped renewable supply and a morning/evening load.
    TwoPeak,
}

/// Seeded renewable and regular-load curves of the given kind.
pub fn synth_curves(kind: SynthKind, seed: u64) -> (DayCurve, DayCurve) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::Sinusoid => (
            DayCurve::Sinusoid {
                mean: 1.0,
                amplitude: rng.gen_range(0.3..0.8),
                phase: rng.gen_range(6.0..10.0),
            },
            DayCurve::Sinusoid {
                mean: 1.0,
                amplitude: rng.gen_range(0.2..0.5),
                phase: rng.gen_range(10.0..14.0),
            },
        ),
        SynthKind::TwoPeak => (
            DayCurve::Solar {
                peak: 3.0 * rng.gen_range(0.85..1.15),
                sunrise: 6.0 + rng.gen_range(-0.5..0.5),
                sunset: 18.0 + rng.gen_range(-0.5..0.5),
                exponent: 1.5,
                base: 1.0,
                swing: 0.3 * rng.gen_range(0.5..1.5),
            },
            DayCurve::Peaks {
                base: 1.0,
                peaks: vec![
                    Peak {
                        height: 0.6 * rng.gen_range(0.8..1.2),
                        center: 9.0 + rng.gen_range(-1.0..1.0),
                        width: 2.0 / 2f64.sqrt(),
                    },
                    Peak {
                        height: 0.8 * rng.gen_range(0.8..1.2),
                        center: 19.0 + rng.gen_range(-1.0..1.0),
                        width: 2.5 / 2f64.sqrt(),
                    },
                ],
            },
        ),
    }
}

/// Scenario of `slots` slots with exact daily totals.
pub fn synth_scenario(
    kind: SynthKind,
    slots: usize,
    seed: u64,
    w_total: f64,
    r_total: f64,
) -> Result<Scenario> {
    check_slots(slots)?;
    if !(w_total > 0.0) || !(r_total > 0.0) {
        return Err(GameError::InvalidScenario(format!(
            "totals must be positive, got w = {w_total}, r = {r_total}"
        )));
    }
    let (w_curve, r_curve) = synth_curves(kind, seed);
    let w = scale_to_total(&w_curve.integrate(slots), w_total)?;
    let r = scale_to_total(&r_curve.integrate(slots), r_total)?;
    Scenario::with_slot_hours(w, r, DAY_HOURS / slots as f64)
}

/// The twenty-user fleet with caps `2 g_i / T`.
pub fn fleet20_users(slots: usize) -> Result<FlexUserSet> {
    check_slots(slots)?;
    FlexUserSet::with_cap_factor(FLEET20_DEMANDS.to_vec(), slots, 2.0)
}

/// Two-peak scenario sized so renewables supply 62.22% of all energy and the
/// twenty-user fleet makes up 29.41% of demand.
pub fn fleet20_scenario(slots: usize, seed: u64) -> Result<Scenario> {
    let g_n: f64 = FLEET20_DEMANDS.iter().sum();
    let demand = g_n / FLEET20_FLEXIBLE_SHARE;
    synth_scenario(
        SynthKind::TwoPeak,
        slots,
        seed,
        FLEET20_RENEWABLE_SHARE * demand,
        demand - g_n,
    )
}

/// Day curves for the slot-resolution sweep with the default totals.
pub fn table2_scenario(slots: usize, seed: u64) -> Result<Scenario> {
    table2_scenario_for(&TABLE2, slots, seed)
}

/// Day curves for the slot-resolution sweep. The regular load is a seeded
/// two-peak curve; renewable supply tracks it with a midday surplus,
/// `w = r + d`, so `w - r` never falls far below its mean. Only the realised
/// daily totals of `params` are used.
pub fn table2_scenario_for(params: &Table2Params, slots: usize, seed: u64) -> Result<Scenario> {
    check_slots(slots)?;
    if !(params.daily_w_total > 0.0) || !(params.daily_r_total > 0.0) {
        return Err(GameError::InvalidScenario(format!(
            "totals must be positive, got w = {}, r = {}",
            params.daily_w_total, params.daily_r_total
        )));
    }
    let (_, r_curve) = synth_curves(SynthKind::TwoPeak, seed);
    let r = scale_to_total(&r_curve.integrate(slots), params.daily_r_total)?;
    let surplus = DayCurve::Peaks {
        base: 0.0,
        peaks: vec![Peak {
            height: TABLE2_SURPLUS_HEIGHT,
            center: 12.5,
            width: TABLE2_SURPLUS_WIDTH,
        }],
    }
    .integrate(slots);
    let net_total = params.daily_w_total - params.daily_r_total;
    let offset = (net_total - surplus.iter().sum::<f64>()) / slots as f64;
    let w = r
        .iter()
        .zip(&surplus)
        .map(|(r, s)| r + s + offset)
        .collect();
    Scenario::with_slot_hours(w, r, DAY_HOURS / slots as f64)
}

const TABLE2_SURPLUS_HEIGHT: f64 = 4.1;
const TABLE2_SURPLUS_WIDTH: f64 = 1.96;
