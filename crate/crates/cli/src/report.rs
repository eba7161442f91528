//! JSON report files and their companion plotting CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stackgrid::analytic::{ConditionReport, PredictionCost};
use stackgrid::gamecore::tilde_transform;
use stackgrid::leader::{LeaderTarget, PriceSearchTrace};
use stackgrid::oracle::{projected_stationarity, SlotBounds};
use stackgrid::{EquilibriumReport, FlexUserSet, PricingRule, Scenario};

use crate::error::{CliError, CliResult};
use crate::files::{sha256_hex, write_atomic};

pub const TOOL: &str = "stackgrid";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub scenario_file: InputRef,
    pub users_file: InputRef,
    pub scenario: Scenario,
    pub users: FlexUserSet,
}

/// Every parameter that influenced the result, defaults included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub random_init: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prediction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Inputs,
    pub parameters: Parameters,
    pub rule: PricingRule,
    pub w_tilde: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub condition: ConditionReport,
    pub equilibrium: EquilibriumReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<LeaderTarget>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<PriceSearchTrace>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prediction: Option<PredictionCost>,
}

impl ReportFile {
    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Solver(format!("cannot serialise report: {e}")))
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    /// `t,w,r,c,nu_N,price,nu_1,...,nu_n`.
    pub fn series_csv(&self) -> String {
        let s = &self.inputs.scenario;
        let eq = &self.equilibrium;
        let aggregate = eq.aggregate();
        let mut out = String::from("t,w,r,c,nu_N,price");
        for i in 1..=eq.demand.users() {
            let _ = write!(out, ",nu_{i}");
        }
        out.push('\n');
        for t in 0..s.slots() {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                t + 1,
                s.w()[t],
                s.r()[t],
                eq.controllable[t],
                aggregate[t],
                eq.prices[t]
            );
            for row in eq.demand.rows() {
                let _ = write!(out, ",{}", row[t]);
            }
            out.push('\n');
        }
        out
    }

    /// Writes `path` and the series CSV next to it (same stem, `.csv`).
    pub fn write(&self, path: &Path) -> CliResult<PathBuf> {
        write_atomic(path, self.to_json()?.as_bytes())?;
        let csv_path = path.with_extension("csv");
        write_atomic(&csv_path, self.series_csv().as_bytes())?;
        Ok(csv_path)
    }
}

/// Outcome of re-deriving a report from its embedded inputs.
#[derive(Debug, Clone)]
pub struct Verification {
    pub leader_cost: f64,
    pub max_price_error: f64,
    pub max_user_cost_error: f64,
    pub max_stationarity: f64,
    pub stationarity_limit: f64,
    /// Input files that are present on disk with a different digest.
    pub stale_inputs: Vec<PathBuf>,
}

fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Recomputes prices, costs and follower stationarity from the embedded
/// scenario, users, rule and demand.
pub fn verify(report: &ReportFile) -> CliResult<Verification> {
    let scenario = &report.inputs.scenario;
    let users = &report.inputs.users;
    let eq = &report.equilibrium;
    let slots = scenario.slots();
    if eq.demand.users() != users.len() || eq.demand.slots() != slots {
        return Err(CliError::Verify(format!(
            "demand is {}x{}, inputs are {}x{}",
            eq.demand.users(),
            eq.demand.slots(),
            users.len(),
            slots
        )));
    }
    if !eq.demand.hyperplane_feasible(users) {
        return Err(CliError::Verify("demand rows do not sum to g_i".into()));
    }
    if !eq.demand.box_feasible(users) {
        return Err(CliError::Verify("demand leaves [0, nu_max]".into()));
    }
    let tilde = tilde_transform(scenario, &report.rule)?;
    let recomputed = EquilibriumReport::assemble(
        scenario,
        &report.rule,
        eq.demand.clone(),
        eq.flags.clone(),
        eq.diagnostics.clone(),
    )?;

    let scale = recomputed
        .controllable
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    if !rel_close(
        eq.leader_cost,
        recomputed.leader_cost,
        1e-12,
        1e-24 * scale * scale,
    ) {
        return Err(CliError::Verify(format!(
            "leader cost {} recomputes to {}",
            eq.leader_cost, recomputed.leader_cost
        )));
    }
    let max_price_error = eq
        .prices
        .iter()
        .zip(&recomputed.prices)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / a.abs().max(1.0)));
    if eq.prices.len() != slots || max_price_error > 1e-12 {
        return Err(CliError::Verify(format!(
            "prices differ by {max_price_error:e}"
        )));
    }
    let max_user_cost_error = eq
        .user_costs
        .iter()
        .zip(&recomputed.user_costs)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / a.abs().max(1.0)));
    if eq.user_costs.len() != users.len() || max_user_cost_error > 1e-12 {
        return Err(CliError::Verify(format!(
            "user costs differ by {max_user_cost_error:e}"
        )));
    }

    let price_scale = recomputed.prices.iter().fold(1.0f64, |m, p| m.max(p.abs()));
    let stationarity_limit = 1e-6 * price_scale;
    let mut max_stationarity = 0.0f64;
    for i in 0..users.len() {
        let bounds = SlotBounds::Uniform {
            lo: 0.0,
            hi: users.nu_max()[i],
        };
        let s = projected_stationarity(i, &eq.demand, &tilde, users, bounds);
        max_stationarity = max_stationarity.max(s);
        if !(s <= stationarity_limit) {
            return Err(CliError::Verify(format!(
                "user {} is not at a best response (stationarity {s:e}, limit {stationarity_limit:e})",
                i + 1
            )));
        }
    }

    let stale_inputs = [&report.inputs.scenario_file, &report.inputs.users_file]
        .into_iter()
        .filter(|input| match std::fs::read(&input.path) {
            Ok(bytes) => sha256_hex(&bytes) != input.sha256,
            Err(_) => false,
        })
        .map(|input| input.path.clone())
        .collect();

    Ok(Verification {
        leader_cost: recomputed.leader_cost,
        max_price_error,
        max_user_cost_error,
        max_stationarity,
        stationarity_limit,
        stale_inputs,
    })
}
