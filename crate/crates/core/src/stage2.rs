//! Short-horizon dispatch that tracks the stage-1 schedule on the finer
//! dispatch grid and absorbs the forecast correction.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, ReasonCode, Result};
use crate::formulation::{
    build_common, replay, Commitments, Horizon, InitialConditions, Trajectory, VarIndex, Violation,
};
use crate::optim::{solve_milp, LinearModel, Sense, SolveStatus, SolverStats, VarId};
use crate::scenario::{Scenario, PHASES};
use crate::stage1::Stage1Schedule;

/// Correction factor and its split over load groups.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionInput {
    /// kW the net load forecast is expected to overshoot.
    pub factor: f64,
    pub lambda: Vec<f64>,
}

impl CorrectionInput {
    pub fn none(groups: usize) -> Self {
        CorrectionInput {
            factor: 0.0,
            lambda: vec![0.0; groups],
        }
    }

    /// kW removed from each group's net load (all phases together).
    pub fn per_group(&self) -> Vec<f64> {
        self.lambda.iter().map(|l| l * self.factor).collect()
    }
}

/// Share of each energized group in the stage-1 forecast load of `slot`;
/// zero for the others and everywhere when nothing carries load.
pub fn allocate_lambda(scenario: &Scenario, energized: &[bool], slot: usize) -> Vec<f64> {
    let p = &scenario.profiles().stage1;
    let slot = slot.min(p.len.saturating_sub(1));
    let loads: Vec<f64> = energized
        .iter()
        .enumerate()
        .map(|(g, on)| if *on { p.load_total(g, slot).max(0.0) } else { 0.0 })
        .collect();
    let total: f64 = loads.iter().sum();
    if total <= 0.0 {
        return vec![0.0; energized.len()];
    }
    loads.iter().map(|l| l / total).collect()
}

/// Stage-1 setpoints resampled onto the dispatch window.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    /// `[group][step]`
    pub groups_on: Vec<Vec<bool>>,
    /// `[dg][step]`
    pub dg_p: Vec<Vec<f64>>,
}

impl Reference {
    pub fn from_schedule(scenario: &Scenario, schedule: &Stage1Schedule, disp_start: usize, len: usize) -> Result<Self> {
        let per = scenario.grids.disp_per_sched();
        let mut local = Vec::with_capacity(len);
        for k in 0..len {
            let slot = (disp_start + k) / per;
            if slot < schedule.start_slot || slot - schedule.start_slot >= schedule.len() {
                return Err(Error::invalid(
                    ReasonCode::HorizonMismatch,
                    format!(
                        "dispatch slot {} maps to stage-1 slot {slot}, outside the schedule [{}, {})",
                        disp_start + k,
                        schedule.start_slot,
                        schedule.start_slot + schedule.len()
                    ),
                ));
            }
            local.push(slot - schedule.start_slot);
        }
        Ok(Reference {
            groups_on: schedule
                .traj
                .groups_on
                .iter()
                .map(|g| local.iter().map(|j| g[*j]).collect())
                .collect(),
            dg_p: schedule
                .traj
                .dg_p
                .iter()
                .map(|d| local.iter().map(|j| d[*j]).collect())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Instance {
    /// First dispatch slot of the window.
    pub start_slot: usize,
    pub horizon: Horizon,
    pub init: InitialConditions,
    pub commitments: Commitments,
    pub reference: Reference,
    pub correction: CorrectionInput,
}

impl Stage2Instance {
    /// `len` dispatch slots of the stage-2 forecast from `start_slot`.
    pub fn new(
        scenario: &Scenario,
        start_slot: usize,
        len: usize,
        init: InitialConditions,
        reference: Reference,
        correction: CorrectionInput,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let mut horizon = Horizon::from_profile(&scenario.profiles().stage2, start_slot, len, gamma)?;
        if correction.lambda.len() != scenario.n_groups() {
            return Err(Error::invalid(
                ReasonCode::HorizonMismatch,
                "one correction share per load group required",
            ));
        }
        horizon.correction = correction.per_group();
        if reference.groups_on.len() != scenario.n_groups()
            || reference.dg_p.len() != scenario.dg_units.len()
            || reference.groups_on.iter().any(|g| g.len() != len)
            || reference.dg_p.iter().any(|d| d.len() != len)
        {
            return Err(Error::invalid(
                ReasonCode::HorizonMismatch,
                "stage-1 reference does not cover the dispatch window",
            ));
        }
        Ok(Stage2Instance {
            start_slot,
            horizon,
            init,
            commitments: Commitments::for_step(scenario, scenario.grids.dt_disp_min),
            reference,
            correction,
        })
    }

    pub fn len(&self) -> usize {
        self.horizon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizon.is_empty()
    }
}

/// Model plus the generator deviation epigraph variables `[dg][step]`.
pub fn build_stage2(scenario: &Scenario, inst: &Stage2Instance) -> Result<(LinearModel, VarIndex, Vec<Vec<VarId>>)> {
    if inst.is_empty() {
        return Err(Error::invalid(ReasonCode::EmptyWindow, "stage-2 window is empty"));
    }
    let (mut m, idx) = build_common(scenario, &inst.horizon, &inst.init, &inst.commitments, false)?;
    for (g, spec) in scenario.groups.iter().enumerate() {
        let w_sw = scenario.switch_weight(g);
        for k in 0..inst.len() {
            let mut c = spec.weight * inst.horizon.load_total(g, k);
            // |x̂ - x| is x when x̂ = 0 and 1 - x when x̂ = 1
            if inst.reference.groups_on[g][k] {
                c += w_sw;
                m.objective_constant -= w_sw;
            } else {
                c -= w_sw;
            }
            m.add_objective(idx.x[g][k], c);
        }
    }
    let w_dg = scenario.policy.dg_deviation_weight;
    let mut dev = Vec::with_capacity(scenario.dg_units.len());
    for (i, d) in scenario.dg_units.iter().enumerate() {
        let row: Vec<VarId> = (0..inst.len())
            .map(|k| {
                let e = m.add_var(format!("dgdev_{i}_{k}"), 0.0, d.p_max());
                let r = inst.reference.dg_p[i][k];
                m.add_constraint(format!("dgdev_up_{i}_{k}"), [(e, 1.0), (idx.dg_p[i][k], -1.0)], Sense::Ge, -r);
                m.add_constraint(format!("dgdev_dn_{i}_{k}"), [(e, 1.0), (idx.dg_p[i][k], 1.0)], Sense::Ge, r);
                m.add_objective(e, -w_dg);
                e
            })
            .collect();
        dev.push(row);
    }
    Ok((m, idx, dev))
}

/// Setpoints to actuate for one dispatch slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchCommand {
    pub slot: usize,
    pub groups_on: Vec<bool>,
    pub dg_on: Vec<bool>,
    pub dg_p: Vec<f64>,
    pub dg_q: Vec<f64>,
    pub es_p: Vec<[f64; PHASES]>,
    pub es_q: Vec<[f64; PHASES]>,
}

impl DispatchCommand {
    /// Everything de-energized and idle.
    pub fn all_off(scenario: &Scenario, slot: usize) -> Self {
        DispatchCommand {
            slot,
            groups_on: vec![false; scenario.n_groups()],
            dg_on: vec![false; scenario.dg_units.len()],
            dg_p: vec![0.0; scenario.dg_units.len()],
            dg_q: vec![0.0; scenario.dg_units.len()],
            es_p: vec![[0.0; PHASES]; scenario.es_units.len()],
            es_q: vec![[0.0; PHASES]; scenario.es_units.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub start_slot: usize,
    pub traj: Trajectory,
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: f64,
    pub stats: SolverStats,
    pub reference: Reference,
    /// kW removed from each group's net load.
    pub correction: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DispatchPlan {
    pub fn len(&self) -> usize {
        self.traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.is_empty()
    }

    /// Commands of step `k` of the plan.
    pub fn command(&self, k: usize) -> DispatchCommand {
        let t = &self.traj;
        DispatchCommand {
            slot: self.start_slot + k,
            groups_on: t.groups_on.iter().map(|g| g[k]).collect(),
            dg_on: t.dg_on.iter().map(|d| d[k]).collect(),
            dg_p: t.dg_p.iter().map(|d| d[k]).collect(),
            dg_q: t.dg_q.iter().map(|d| d[k]).collect(),
            es_p: t.es_p.iter().map(|e| e[k]).collect(),
            es_q: t.es_q.iter().map(|e| e[k]).collect(),
        }
    }

    /// First-slot commands, the only ones actuated.
    pub fn first(&self) -> DispatchCommand {
        self.command(0)
    }

    /// Groups whose status differs from the stage-1 reference at step `k`.
    pub fn switch_deviations(&self, k: usize) -> usize {
        self.traj
            .groups_on
            .iter()
            .zip(&self.reference.groups_on)
            .filter(|(a, b)| a[k] != b[k])
            .count()
    }

    pub fn dg_deviation(&self, k: usize) -> f64 {
        self.traj
            .dg_p
            .iter()
            .zip(&self.reference.dg_p)
            .map(|(a, b)| (a[k] - b[k]).abs())
            .sum()
    }
}

pub fn solve_stage2(scenario: &Scenario, inst: &Stage2Instance) -> Result<DispatchPlan> {
    let (model, idx, _) = build_stage2(scenario, inst)?;
    let cfg = &scenario.policy.solver;
    let sol = solve_milp(&model, cfg.stage2_gap, cfg.stage2_node_limit);
    match sol.status {
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "stage-2 window at dispatch slot {} is infeasible (SoC {:?}, fuel {:?})",
                inst.start_slot, inst.init.soc, inst.init.fuel
            )))
        }
        SolveStatus::Unbounded => return Err(Error::Solver("stage-2 model is unbounded".into())),
        _ if !sol.has_values() => {
            return Err(Error::Solver(format!(
                "stage-2 solve at dispatch slot {} found no incumbent within {} nodes",
                inst.start_slot, sol.stats.nodes
            )))
        }
        _ => {}
    }
    Ok(DispatchPlan {
        start_slot: inst.start_slot,
        traj: Trajectory::extract(&idx, &sol),
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        stats: sol.stats,
        reference: inst.reference.clone(),
        correction: inst.horizon.correction.clone(),
        gamma: inst.horizon.gamma.clone(),
    })
}

/// Replays a plan against every shared rule on the dispatch grid.
pub fn check_plan(scenario: &Scenario, inst: &Stage2Instance, plan: &DispatchPlan, tol: f64) -> Vec<Violation> {
    replay(scenario, &inst.horizon, &inst.init, &inst.commitments, &plan.traj, false, tol)
}

/// One actuated dispatch decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchLogRow {
    pub slot: usize,
    pub timestamp: String,
    /// Group statuses as a 0/1 string in group order.
    pub groups: String,
    pub groups_ref: String,
    pub dg_on: u8,
    pub dg_p_kw: f64,
    pub dg_p_ref_kw: f64,
    pub es_p_kw: f64,
    pub es_q_kvar: f64,
    pub switch_deviations: usize,
    pub dg_deviation_kw: f64,
    pub correction_kw: f64,
    pub gamma: f64,
    pub status: String,
}

fn bits(v: impl Iterator<Item = bool>) -> String {
    v.map(|b| if b { '1' } else { '0' }).collect()
}

impl DispatchLogRow {
    pub fn from_plan(scenario: &Scenario, plan: &DispatchPlan) -> Self {
        let c = plan.first();
        DispatchLogRow {
            slot: plan.start_slot,
            timestamp: dispatch_timestamp(scenario, plan.start_slot),
            groups: bits(c.groups_on.iter().copied()),
            groups_ref: bits(plan.reference.groups_on.iter().map(|g| g[0])),
            dg_on: c.dg_on.iter().any(|b| *b) as u8,
            dg_p_kw: c.dg_p.iter().sum(),
            dg_p_ref_kw: plan.reference.dg_p.iter().map(|d| d[0]).sum(),
            es_p_kw: c.es_p.iter().flatten().sum(),
            es_q_kvar: c.es_q.iter().flatten().sum(),
            switch_deviations: plan.switch_deviations(0),
            dg_deviation_kw: plan.dg_deviation(0),
            correction_kw: plan.correction.iter().sum(),
            gamma: plan.gamma[0],
            status: format!("{:?}", plan.status),
        }
    }

    /// Row for a slot where no plan could be computed and everything was
    /// switched off.
    pub fn fallback(scenario: &Scenario, slot: usize, gamma: f64, reason: &str) -> Self {
        let n = scenario.n_groups();
        DispatchLogRow {
            slot,
            timestamp: dispatch_timestamp(scenario, slot),
            groups: "0".repeat(n),
            groups_ref: "0".repeat(n),
            dg_on: 0,
            dg_p_kw: 0.0,
            dg_p_ref_kw: 0.0,
            es_p_kw: 0.0,
            es_q_kvar: 0.0,
            switch_deviations: 0,
            dg_deviation_kw: 0.0,
            correction_kw: 0.0,
            gamma,
            status: reason.to_string(),
        }
    }
}

fn dispatch_timestamp(scenario: &Scenario, slot: usize) -> String {
    let g = &scenario.grids;
    (g.start + chrono::Duration::minutes(slot as i64 * g.dt_disp_min as i64))
        .format(crate::scenario::TIMESTAMP_FORMAT)
        .to_string()
}

pub fn write_dispatch_log<W: Write>(rows: &[DispatchLogRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)
            .map_err(|e| Error::Model(format!("writing dispatch log: {e}")))?;
    }
    out.flush().map_err(|e| Error::Model(format!("writing dispatch log: {e}")))?;
    Ok(())
}
