use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// Absolute feasibility tolerance, scaled by `max(1, magnitude)` at use sites.
pub const FEAS_TOL: f64 = 1e-9;

pub(crate) fn scaled_tol(magnitude: f64) -> f64 {
    FEAS_TOL * magnitude.abs().max(1.0)
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(GameError::LengthMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Renewable generation `w(t)` and inflexible load `r(t)` over `T >= 2` slots.
///
/// Values are energy per slot; `slot_hours` is carried for provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioData")]
pub struct Scenario {
    slot_hours: f64,
    w: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Deserialize)]
struct ScenarioData {
    #[serde(default = "one")]
    slot_hours: f64,
    w: Vec<f64>,
    r: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ScenarioData> for Scenario {
    type Error = GameError;

    fn try_from(d: ScenarioData) -> Result<Self> {
        Scenario::with_slot_hours(d.w, d.r, d.slot_hours)
    }
}

impl Scenario {
    pub fn new(w: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        Self::with_slot_hours(w, r, 1.0)
    }

    pub fn with_slot_hours(w: Vec<f64>, r: Vec<f64>, slot_hours: f64) -> Result<Self> {
        check_len("r", w.len(), r.len())?;
        if w.len() < 2 {
            return Err(GameError::InvalidScenario(format!(
                "at least 2 slots are required, got {}",
                w.len()
            )));
        }
        if !(slot_hours.is_finite() && slot_hours > 0.0) {
            return Err(GameError::InvalidScenario(format!(
                "slot_hours must be positive, got {slot_hours}"
            )));
        }
        for (name, series) in [("w", &w), ("r", &r)] {
            if let Some((t, v)) = series
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(GameError::InvalidScenario(format!(
                    "{name}({}) = {v} must be finite and non-negative",
                    t + 1
                )));
            }
        }
        Ok(Self { slot_hours, w, r })
    }

    pub fn slots(&self) -> usize {
        self.w.len()
    }

    pub fn slot_hours(&self) -> f64 {
        self.slot_hours
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// `w(t) - r(t)` per slot.
    pub fn net_renewable(&self) -> Vec<f64> {
        self.w.iter().zip(&self.r).map(|(w, r)| w - r).collect()
    }

    /// `(1/T) Σ (r(s) - w(s))`.
    pub fn mean_residual_load(&self) -> f64 {
        let t = self.slots() as f64;
        self.r.iter().zip(&self.w).map(|(r, w)| r - w).sum::<f64>() / t
    }

    /// Multiplies every energy quantity by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_slot_hours(
            self.w.iter().map(|v| v * factor).collect(),
            self.r.iter().map(|v| v * factor).collect(),
            self.slot_hours,
        )
    }
}

/// Flexible users: total demand `g_i` and per-slot cap `nu_max_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UsersData")]
pub struct FlexUserSet {
    g: Vec<f64>,
    nu_max: Vec<f64>,
}

#[derive(Deserialize)]
struct UsersData {
    g: Vec<f64>,
    nu_max: Vec<f64>,
}

impl TryFrom<UsersData> for FlexUserSet {
    type Error = GameError;

    fn try_from(d: UsersData) -> Result<Self> {
        FlexUserSet::new(d.g, d.nu_max)
    }
}

impl FlexUserSet {
    pub fn new(g: Vec<f64>, nu_max: Vec<f64>) -> Result<Self> {
        check_len("nu_max", g.len(), nu_max.len())?;
        if g.is_empty() {
            return Err(GameError::InvalidUsers(
                "at least one user is required".into(),
            ));
        }
        for (i, (&gi, &cap)) in g.iter().zip(&nu_max).enumerate() {
            if !(gi.is_finite() && gi > 0.0) {
                return Err(GameError::InvalidUsers(format!(
                    "g_{} = {gi} must be positive",
                    i + 1
                )));
            }
            if !(cap.is_finite() && cap > 0.0) {
                return Err(GameError::InvalidUsers(format!(
                    "nu_max_{} = {cap} must be positive",
                    i + 1
                )));
            }
        }
        Ok(Self { g, nu_max })
    }

    /// Users with caps `factor * g_i / T`.
    pub fn with_cap_factor(g: Vec<f64>, slots: usize, factor: f64) -> Result<Self> {
        let caps = g.iter().map(|gi| factor * gi / slots as f64).collect();
        Self::new(g, caps)
    }

    /// Checks `nu_max_i >= g_i / T` for every user.
    pub fn validate_for(&self, slots: usize) -> Result<()> {
        for (i, (&gi, &cap)) in self.g.iter().zip(&self.nu_max).enumerate() {
            let need = gi / slots as f64;
            if cap < need - scaled_tol(need) {
                return Err(GameError::InfeasibleBounds(format!(
                    "user {}: nu_max = {cap} < g/T = {need}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn nu_max(&self) -> &[f64] {
        &self.nu_max
    }

    /// `g_N = Σ g_i`.
    pub fn total_demand(&self) -> f64 {
        self.g.iter().sum()
    }

    /// `nu_N^max = Σ nu_max_i`.
    pub fn total_cap(&self) -> f64 {
        self.nu_max.iter().sum()
    }

    /// `min_i nu_max_i / g_i`.
    pub fn min_cap_ratio(&self) -> f64 {
        self.g
            .iter()
            .zip(&self.nu_max)
            .map(|(g, c)| c / g)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.g.iter().map(|v| v * factor).collect(),
            self.nu_max.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Adjusted supply and load `(w~, r~)` with `w~(t) > 0` everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeSeries {
    w: Vec<f64>,
    r: Vec<f64>,
}

impl TildeSeries {
    pub fn new(w: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        check_len("r~", w.len(), r.len())?;
        for (t, &v) in w.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GameError::NonpositiveTildeW {
                    slot: t + 1,
                    value: v,
                });
            }
        }
        if let Some(t) = r.iter().position(|v| !v.is_finite()) {
            return Err(GameError::InvalidScenario(format!(
                "r~({}) is not finite",
                t + 1
            )));
        }
        Ok(Self { w, r })
    }

    pub fn slots(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn w_sum(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn r_sum(&self) -> f64 {
        self.r.iter().sum()
    }

    /// Unit price `(nu_N(t) + r~(t)) / w~(t)` for one slot.
    pub fn price(&self, t: usize, aggregate: f64) -> f64 {
        (aggregate + self.r[t]) / self.w[t]
    }
}

/// Adjustment sequences `(a1, a2)` of the price family
/// `π(t) = (ν_N(t) + r(t) + a2(t)) / (w(t) + a1(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingRule {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl PricingRule {
    pub fn new(a1: Vec<f64>, a2: Vec<f64>) -> Result<Self> {
        check_len("a2", a1.len(), a2.len())?;
        Ok(Self { a1, a2 })
    }

    pub fn zero(slots: usize) -> Self {
        Self {
            a1: vec![0.0; slots],
            a2: vec![0.0; slots],
        }
    }

    /// The rule that realises a given `(w~, r~)` against `scenario`.
    pub fn from_tilde(scenario: &Scenario, tilde: &TildeSeries) -> Result<Self> {
        check_len("w~", scenario.slots(), tilde.slots())?;
        let a1 = tilde
            .w
            .iter()
            .zip(scenario.w())
            .map(|(wt, w)| wt - w)
            .collect();
        let a2 = tilde
            .r
            .iter()
            .zip(scenario.r())
            .map(|(rt, r)| rt - r)
            .collect();
        Ok(Self { a1, a2 })
    }

    pub fn slots(&self) -> usize {
        self.a1.len()
    }
}

/// Demand matrix `ν_i(t)`, one row per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandProfile {
    rows: Vec<Vec<f64>>,
}

impl DemandProfile {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(GameError::InvalidUsers("empty demand profile".into()));
        };
        let slots = first.len();
        for row in &rows {
            check_len("demand row", slots, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(GameError::InvalidUsers(
                    "demand profile has non-finite entries".into(),
                ));
            }
        }
        Ok(Self { rows })
    }

    /// `ν_i(t) = g_i / T`, the starting point of best-response dynamics.
    pub fn uniform(users: &FlexUserSet, slots: usize) -> Self {
        let rows = users
            .g()
            .iter()
            .map(|g| vec![g / slots as f64; slots])
            .collect();
        Self { rows }
    }

    pub fn users(&self) -> usize {
        self.rows.len()
    }

    pub fn slots(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.rows[i]
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// `ν_N(t) = Σ_i ν_i(t)`.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut agg = vec![0.0; self.slots()];
        for row in &self.rows {
            for (a, v) in agg.iter_mut().zip(row) {
                *a += v;
            }
        }
        agg
    }

    /// `Σ_{j≠i} ν_j(t)`.
    pub fn others(&self, i: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.slots()];
        for (j, row) in self.rows.iter().enumerate() {
            if j != i {
                for (a, v) in s.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        s
    }

    /// Every row sums to its `g_i` within `1e-9 * max(1, g_i)`.
    pub fn hyperplane_feasible(&self, users: &FlexUserSet) -> bool {
        self.users() == users.len()
            && self
                .rows
                .iter()
                .zip(users.g())
                .all(|(row, &g)| (row.iter().sum::<f64>() - g).abs() <= scaled_tol(g))
    }

    /// Hyperplane feasibility plus `0 <= ν_i(t) <= nu_max_i`.
    pub fn box_feasible(&self, users: &FlexUserSet) -> bool {
        self.hyperplane_feasible(users)
            && self.rows.iter().zip(users.nu_max()).all(|(row, &cap)| {
                let tol = scaled_tol(cap);
                row.iter().all(|&v| v >= -tol && v <= cap + tol)
            })
    }

    /// `Σ_{i,t} |a - b|`.
    pub fn l1_distance(&self, other: &DemandProfile) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .sum()
    }

    /// `max_{i,t} |a - b|`.
    pub fn max_abs_distance(&self, other: &DemandProfile) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}
