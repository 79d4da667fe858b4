//! Day-ahead style load-restoration schedule over a rolling (or, on the
//! final day, receding) window of stage-1 slots.

use std::io::Write;

use crate::error::{Error, ReasonCode, Result};
use crate::formulation::{
    build_common, replay, Commitments, Horizon, InitialConditions, Trajectory, VarIndex, Violation,
};
use crate::optim::{solve_milp, LinearModel, SolveStatus, SolverStats};
use crate::scenario::{Scenario, TimeGrids};

/// Slots `[start, start + len)` of the restoration on the scheduling grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

/// Fixed-length window on every day but the last, where it ends with the
/// restoration.
pub fn rolling_window(grids: &TimeGrids, slot: usize) -> Result<Window> {
    let total = grids.sched_slots();
    if slot >= total {
        return Err(Error::invalid(
            ReasonCode::EmptyWindow,
            format!("slot {slot} is at or past the restoration end ({total} slots)"),
        ));
    }
    Ok(Window {
        start: slot,
        len: grids.horizon_sched.min(total - slot),
    })
}

/// 1-based (day, slot-of-day) of a restoration slot.
pub fn day_and_slot(grids: &TimeGrids, slot: usize) -> (usize, usize) {
    let per_day = grids.slots_per_day();
    (slot / per_day + 1, slot % per_day + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Instance {
    pub start_slot: usize,
    pub horizon: Horizon,
    pub init: InitialConditions,
    /// End-of-window fuel floor per generator.
    pub fuel_targets: Vec<f64>,
    pub commitments: Commitments,
}

impl Stage1Instance {
    /// Window of the stage-1 forecast starting at `window.start`.
    pub fn from_scenario(
        scenario: &Scenario,
        window: Window,
        init: InitialConditions,
        fuel_targets: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let horizon = Horizon::from_profile(&scenario.profiles().stage1, window.start, window.len, gamma)?;
        Ok(Stage1Instance {
            start_slot: window.start,
            horizon,
            init,
            fuel_targets,
            commitments: Commitments::for_step(scenario, scenario.grids.dt_sched_min),
        })
    }

    pub fn len(&self) -> usize {
        self.horizon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizon.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Schedule {
    pub start_slot: usize,
    pub traj: Trajectory,
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: f64,
    pub stats: SolverStats,
    /// Floors actually imposed (after clamping to the available fuel).
    pub fuel_targets: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Stage1Schedule {
    pub fn len(&self) -> usize {
        self.traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.is_empty()
    }

    /// Fuel scheduled at the end of the window per generator.
    pub fn end_fuel(&self) -> Vec<f64> {
        self.traj.fuel.iter().map(|f| f.last().copied().unwrap_or(f64::NAN)).collect()
    }
}

/// Fuel floors the window can actually respect: never above the fuel on
/// hand, never below the tank minimum.
pub fn effective_fuel_targets(scenario: &Scenario, inst: &Stage1Instance) -> Vec<f64> {
    scenario
        .dg_units
        .iter()
        .zip(&inst.init.fuel)
        .zip(&inst.fuel_targets)
        .map(|((d, f0), t)| t.min(*f0).max(d.fuel_min))
        .collect()
}

pub fn build_stage1(scenario: &Scenario, inst: &Stage1Instance) -> Result<(LinearModel, VarIndex)> {
    if inst.fuel_targets.len() != scenario.dg_units.len() {
        return Err(Error::invalid(
            ReasonCode::HorizonMismatch,
            "one fuel target per generator required",
        ));
    }
    if inst.is_empty() {
        return Err(Error::invalid(ReasonCode::EmptyWindow, "stage-1 window is empty"));
    }
    let (mut m, idx) = build_common(scenario, &inst.horizon, &inst.init, &inst.commitments, true)?;
    let dt = inst.horizon.dt_h;
    for (g, spec) in scenario.groups.iter().enumerate() {
        for k in 0..inst.len() {
            m.add_objective(idx.x[g][k], spec.weight * inst.horizon.load_total(g, k) * dt);
        }
    }
    for c in idx.startup.iter().flatten() {
        m.add_objective(*c, -1.0);
    }
    let last = inst.len() - 1;
    for (i, target) in effective_fuel_targets(scenario, inst).into_iter().enumerate() {
        m.add_constraint(
            format!("fuel_floor_{i}"),
            [(idx.fuel[i][last], 1.0)],
            crate::optim::Sense::Ge,
            target,
        );
    }
    Ok((m, idx))
}

pub fn solve_stage1(scenario: &Scenario, inst: &Stage1Instance) -> Result<Stage1Schedule> {
    let (model, idx) = build_stage1(scenario, inst)?;
    let cfg = &scenario.policy.solver;
    let sol = solve_milp(&model, cfg.stage1_gap, cfg.stage1_node_limit);
    match sol.status {
        SolveStatus::Infeasible => return Err(Error::Infeasible(diagnose(scenario, inst))),
        SolveStatus::Unbounded => return Err(Error::Solver("stage-1 model is unbounded".into())),
        _ if !sol.has_values() => {
            return Err(Error::Solver(format!(
                "stage-1 solve at slot {} found no incumbent within {} nodes",
                inst.start_slot, sol.stats.nodes
            )))
        }
        _ => {}
    }
    if sol.status == SolveStatus::IterationLimit {
        log::debug!(
            "stage-1 slot {} stopped at node limit, gap {:.2e}",
            inst.start_slot,
            sol.gap
        );
    }
    Ok(Stage1Schedule {
        start_slot: inst.start_slot,
        traj: Trajectory::extract(&idx, &sol),
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        stats: sol.stats,
        fuel_targets: effective_fuel_targets(scenario, inst),
        gamma: inst.horizon.gamma.clone(),
    })
}

fn diagnose(scenario: &Scenario, inst: &Stage1Instance) -> String {
    let mut parts = vec![format!("stage-1 window at slot {} is infeasible", inst.start_slot)];
    for ((d, f0), t) in scenario
        .dg_units
        .iter()
        .zip(&inst.init.fuel)
        .zip(effective_fuel_targets(scenario, inst))
    {
        parts.push(format!("generator {}: fuel {f0:.1} L vs floor {t:.1} L", d.name));
    }
    for (e, soc) in scenario.es_units.iter().zip(&inst.init.soc) {
        parts.push(format!("storage {}: SoC {soc:.4} in [{}, {}]", e.name, e.soc_min, e.soc_max));
    }
    let forced: Vec<String> = scenario
        .groups
        .iter()
        .zip(&inst.init.msd_remaining)
        .filter(|(_, r)| **r > 0)
        .map(|(g, r)| format!("group {} held on {r} slots", g.id))
        .collect();
    if !forced.is_empty() {
        parts.push(format!("service commitments: {}", forced.join(", ")));
    }
    parts.join("; ")
}

/// Replays a schedule against every stage-1 rule, including the fuel floor.
pub fn check_schedule(scenario: &Scenario, inst: &Stage1Instance, schedule: &Stage1Schedule, tol: f64) -> Vec<Violation> {
    let mut v = replay(
        scenario,
        &inst.horizon,
        &inst.init,
        &inst.commitments,
        &schedule.traj,
        true,
        tol,
    );
    let last = schedule.len().saturating_sub(1);
    for (i, t) in schedule.fuel_targets.iter().enumerate() {
        let short = t - schedule.traj.fuel[i][last];
        if short > tol {
            v.push(Violation {
                rule: "fuel_floor",
                step: last,
                amount: short,
            });
        }
    }
    v
}

/// One row per (slot, asset) with statuses and setpoints.
pub fn write_schedule_csv<W: Write>(scenario: &Scenario, schedule: &Stage1Schedule, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Model(format!("writing schedule: {e}"));
    out.write_record(["slot", "timestamp", "asset", "status", "p_kw", "q_kvar", "state"])
        .map_err(err)?;
    let grids = &scenario.grids;
    for k in 0..schedule.len() {
        let slot = schedule.start_slot + k;
        let ts = (grids.start + chrono::Duration::minutes((slot as u32 * grids.dt_sched_min) as i64))
            .format(crate::scenario::TIMESTAMP_FORMAT)
            .to_string();
        for (g, spec) in scenario.groups.iter().enumerate() {
            out.write_record([
                slot.to_string(),
                ts.clone(),
                format!("group{}", spec.id),
                (schedule.traj.groups_on[g][k] as u8).to_string(),
                String::new(),
                String::new(),
                String::new(),
            ])
            .map_err(err)?;
        }
        for (i, d) in scenario.dg_units.iter().enumerate() {
            out.write_record([
                slot.to_string(),
                ts.clone(),
                d.name.clone(),
                (schedule.traj.dg_on[i][k] as u8).to_string(),
                format!("{:.6}", schedule.traj.dg_p[i][k]),
                format!("{:.6}", schedule.traj.dg_q[i][k]),
                format!("{:.6}", schedule.traj.fuel[i][k]),
            ])
            .map_err(err)?;
        }
        for (e, es) in scenario.es_units.iter().enumerate() {
            out.write_record([
                slot.to_string(),
                ts.clone(),
                es.name.clone(),
                String::new(),
                format!("{:.6}", schedule.traj.es_p_total(e, k)),
                format!("{:.6}", schedule.traj.es_q_total(e, k)),
                format!("{:.6}", schedule.traj.soc[e][k]),
            ])
            .map_err(err)?;
        }
    }
    out.flush().map_err(|e| Error::Model(format!("writing schedule: {e}")))?;
    Ok(())
}
