//! Closed-loop restoration: stage-1 every scheduling slot, stage-2 every
//! dispatch slot, the plant every minute, with measured state fed back.

pub mod metrics;
pub mod report;
pub mod synth;

use serde::Serialize;

use crate::error::{Error, ReasonCode, Result};
use crate::formulation::InitialConditions;
use crate::parallel::par_map;
use crate::plant::{step, MinuteFlows, MinuteTruth, PlantEvent, PlantState};
use crate::robust::{
    correction_factor, dynamic_reserve, estimate_interval_error, fit_ma, forecast_net_load, fuel_reserve_target,
    netload_fraction_reserve, predict_error, ErrorHistory, ReserveState,
};
use crate::scenario::{FuelMode, PolicyConfig, ReserveMode, Scenario};
use crate::stage1::{
    day_and_slot, effective_fuel_targets, rolling_window, solve_stage1, Stage1Instance, Stage1Schedule,
};
use crate::stage2::{
    allocate_lambda, solve_stage2, CorrectionInput, DispatchCommand, DispatchLogRow, Reference, Stage2Instance,
};

pub use metrics::{compute_metrics, Metrics};
pub use report::{export_case_matrix, export_comparison, export_report};

/// The three policy axes a case varies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseConfig {
    pub name: String,
    pub correction: bool,
    pub fuel: FuelMode,
    pub reserve: ReserveMode,
}

impl CaseConfig {
    pub fn base() -> Self {
        CaseConfig {
            name: "base".into(),
            correction: false,
            fuel: FuelMode::Fixed { target_l: 500.0 },
            reserve: ReserveMode::Fixed { gamma: 0.8 },
        }
    }

    pub fn case1() -> Self {
        CaseConfig {
            name: "case1".into(),
            correction: true,
            fuel: FuelMode::Rationed,
            reserve: ReserveMode::Fixed { gamma: 0.8 },
        }
    }

    pub fn case2() -> Self {
        CaseConfig {
            name: "case2".into(),
            correction: false,
            fuel: FuelMode::Rationed,
            reserve: ReserveMode::NetloadFraction { fraction: 0.2 },
        }
    }

    pub fn case3() -> Self {
        CaseConfig {
            name: "case3".into(),
            correction: true,
            fuel: FuelMode::Rationed,
            reserve: ReserveMode::Dynamic,
        }
    }

    /// Base case and cases 1 to 3.
    pub fn table() -> Vec<CaseConfig> {
        vec![Self::base(), Self::case1(), Self::case2(), Self::case3()]
    }

    pub fn by_name(name: &str) -> Result<CaseConfig> {
        Self::table()
            .into_iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::invalid(
                    ReasonCode::Policy,
                    format!("unknown case {name:?}; expected one of base, case1, case2, case3"),
                )
            })
    }

    /// The scenario's policy with this case's three axes applied.
    pub fn apply(&self, policy: &PolicyConfig) -> PolicyConfig {
        PolicyConfig {
            correction: self.correction,
            fuel: self.fuel,
            reserve: self.reserve,
            ..policy.clone()
        }
    }
}

/// What happened around one stage-1 slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub day: usize,
    pub slot_of_day: usize,
    /// Measured state at the slot boundary, used as the solve's initial state.
    pub soc_start: f64,
    pub fuel_start: f64,
    /// Interval error estimated for the previous slot, if it was energized.
    pub error_estimate: Option<f64>,
    pub correction_kw: f64,
    pub predicted_error_kw: f64,
    pub gamma: f64,
    pub fuel_target: f64,
    pub stage1_status: String,
    pub stage1_objective: f64,
    pub stage1_end_fuel: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub case: CaseConfig,
    pub slots: Vec<SlotRecord>,
    /// Every stage-1 solution that was computed, in slot order.
    pub schedules: Vec<Stage1Schedule>,
    pub dispatch: Vec<DispatchLogRow>,
    pub minutes: Vec<MinuteFlows>,
    pub events: Vec<PlantEvent>,
    pub final_state: Option<PlantState>,
}

impl RunLog {
    fn empty(case: CaseConfig) -> Self {
        RunLog {
            case,
            slots: Vec::new(),
            schedules: Vec::new(),
            dispatch: Vec::new(),
            minutes: Vec::new(),
            events: Vec::new(),
            final_state: None,
        }
    }
}

fn remaining_steps(on: bool, on_min: u32, required_min: u32, step_min: u32) -> usize {
    if !on || on_min >= required_min {
        0
    } else {
        (required_min - on_min).div_ceil(step_min) as usize
    }
}

/// Plant state as initial conditions on a grid of `step_min` minutes.
fn initial_conditions(scenario: &Scenario, state: &PlantState, step_min: u32) -> InitialConditions {
    let soc = scenario
        .es_units
        .iter()
        .zip(&state.soc)
        .map(|(e, s)| s.clamp(e.soc_min, e.soc_max))
        .collect();
    let fuel = scenario
        .dg_units
        .iter()
        .zip(&state.fuel)
        .map(|(d, f)| f.clamp(d.fuel_min, d.fuel_max))
        .collect();
    InitialConditions {
        soc,
        fuel,
        groups_on: state.groups_on.clone(),
        dg_on: state.dg_on.clone(),
        msd_remaining: state
            .groups_on
            .iter()
            .zip(&state.group_on_min)
            .map(|(on, m)| remaining_steps(*on, *m, scenario.policy.msd_min, step_min))
            .collect(),
        min_up_remaining: scenario
            .dg_units
            .iter()
            .zip(state.dg_on.iter().zip(&state.dg_on_min))
            .map(|(d, (on, m))| remaining_steps(*on, *m, d.min_up_min, step_min))
            .collect(),
    }
}

/// Forecast and measured net load of the groups energized each minute,
/// plus the SoC the forecast would have produced, over `minutes`.
struct IntervalReplay {
    soc_sched: f64,
    energized_min: usize,
    mean_meas: f64,
    mean_forecast: f64,
}

fn replay_interval(scenario: &Scenario, flows: &[MinuteFlows], soc_start: f64, gfm: usize) -> IntervalReplay {
    let es = &scenario.es_units[gfm];
    let stage1 = &scenario.profiles().stage1;
    let dt = scenario.grids.dt_rt_h();
    let per_slot = (scenario.grids.dt_sched_min / scenario.grids.dt_rt_min) as usize;
    let mut soc = soc_start;
    let (mut meas, mut fc, mut on_min) = (0.0, 0.0, 0usize);
    for f in flows {
        if !f.groups_on.iter().any(|b| *b) {
            continue;
        }
        on_min += 1;
        let slot = f.minute / per_slot;
        let forecast: f64 = (0..f.groups_on.len())
            .filter(|g| f.groups_on[*g])
            .map(|g| stage1.net_total(g, slot))
            .sum();
        let others: f64 = f.dg_p.iter().sum::<f64>()
            + f.es_p.iter().enumerate().filter(|(e, _)| *e != gfm).map(|(_, p)| p).sum::<f64>();
        soc -= (forecast - others) * dt / (es.kwh * es.efficiency);
        meas += f.served_load_kw - f.served_pv_kw;
        fc += forecast;
    }
    let n = on_min.max(1) as f64;
    IntervalReplay {
        soc_sched: soc,
        energized_min: on_min,
        mean_meas: meas / n,
        mean_forecast: fc / n,
    }
}

/// Runs the whole restoration under `case`.
pub fn run_restoration(scenario: &Scenario, case: &CaseConfig) -> Result<RunLog> {
    let scenario = scenario.with_policy(case.apply(&scenario.policy))?;
    let s = &scenario;
    let grids = &s.grids;
    let policy = &s.policy;
    let mut log = RunLog::empty(case.clone());
    let total_slots = grids.sched_slots();
    if total_slots == 0 {
        return Ok(log);
    }
    let gfm = s
        .grid_forming()
        .ok_or_else(|| Error::invalid(ReasonCode::Schema, "scenario has no grid-forming storage"))?;
    let es_rating = s.es_units[gfm].kva;
    let per_disp = grids.disp_per_sched();
    let per_rt = grids.rt_per_disp();
    let total_disp = grids.disp_slots();
    let truth = &s.profiles().truth;
    let stage1_fc = &s.profiles().stage1;

    let mut history = ErrorHistory::new(policy.correction_window.max(policy.ma_fit_window).max(policy.ma_order + 2));
    let reserve = ReserveState::new(policy.gamma_min, policy.gamma_max, policy.min_reserve);
    let mut state = PlantState::initial(s);
    let mut last_schedule: Option<Stage1Schedule> = None;
    let mut slot_minutes: Vec<MinuteFlows> = Vec::new();
    let mut prev_soc_start = state.soc[gfm];

    for t in 0..total_slots {
        let (day, slot_of_day) = day_and_slot(grids, t);
        let soc_start = state.soc[gfm];
        let fuel_start: f64 = state.fuel.iter().sum();
        let mut note = Vec::new();

        // feedback from the slot that just ended
        let mut estimate = None;
        let mut interval = None;
        if t > 0 {
            let r = replay_interval(s, &slot_minutes, prev_soc_start, gfm);
            if r.energized_min > 0 {
                let e = &s.es_units[gfm];
                let raw = estimate_interval_error(soc_start, r.soc_sched, e.kwh, e.efficiency, grids.dt_sched_h());
                let v = raw * slot_minutes.len() as f64 / r.energized_min as f64;
                history.push(t - 1, v);
                estimate = Some(v);
            }
            interval = Some(r);
        }
        let eps = if policy.correction {
            correction_factor(&history, policy.correction_window)
        } else {
            0.0
        };
        let predicted = if history.is_empty() {
            0.0
        } else {
            predict_error(&fit_ma(&history, policy.ma_order, policy.ma_fit_window), &history)
        };

        let fuel_targets: Vec<f64> = s
            .dg_units
            .iter()
            .zip(&state.fuel)
            .map(|(d, f)| match policy.fuel {
                FuelMode::Fixed { target_l } => target_l,
                FuelMode::Rationed => {
                    fuel_reserve_target(*f, d.fuel_final, slot_of_day, day, grids.slots_per_day(), grids.days())
                }
            })
            .collect();

        let window = rolling_window(grids, t)?;
        let slot_gamma = |k: usize| -> f64 {
            match policy.reserve {
                ReserveMode::Fixed { gamma } => gamma,
                ReserveMode::NetloadFraction { fraction } => {
                    netload_fraction_reserve(forecast_net_load(stage1_fc, t + k), fraction, es_rating)
                }
                ReserveMode::Dynamic => policy.gamma_max,
            }
        };
        let mut gamma_now = slot_gamma(0);
        if policy.reserve == ReserveMode::Dynamic {
            // residual error the correction does not already remove
            let residual = (eps - predicted).max(0.0);
            gamma_now = match &interval {
                Some(r) if r.energized_min > 0 => {
                    dynamic_reserve(r.mean_meas, r.mean_forecast, residual, es_rating, &reserve)
                }
                _ => reserve.clamp(1.0 - reserve.min_reserve),
            };
        }
        let gamma_window: Vec<f64> = (0..window.len)
            .map(|k| if k == 0 { gamma_now } else { slot_gamma(k) })
            .collect();

        let init = initial_conditions(s, &state, grids.dt_sched_min);
        let inst = Stage1Instance::from_scenario(s, window, init.clone(), fuel_targets.clone(), gamma_window.clone())?;
        let fuel_target: f64 = effective_fuel_targets(s, &inst).iter().sum();
        let solved = match solve_stage1(s, &inst) {
            Ok(sched) => Some(sched),
            Err(e @ (Error::Infeasible(_) | Error::Solver(_))) if init.has_memory() => {
                note.push(format!("stage-1 retried without commitments: {e}"));
                let relaxed = Stage1Instance {
                    init: init.without_memory(),
                    ..inst.clone()
                };
                match solve_stage1(s, &relaxed) {
                    Ok(sched) => Some(sched),
                    Err(e @ (Error::Infeasible(_) | Error::Solver(_))) => {
                        note.push(format!("stage-1 failed: {e}"));
                        None
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e @ (Error::Infeasible(_) | Error::Solver(_))) => {
                note.push(format!("stage-1 failed: {e}"));
                None
            }
            Err(e) => return Err(e),
        };
        let (status, objective, end_fuel) = match &solved {
            Some(sc) => (format!("{:?}", sc.status), sc.objective, sc.end_fuel().iter().sum()),
            None => ("failed".to_string(), f64::NAN, f64::NAN),
        };
        if let Some(sc) = solved {
            log.schedules.push(sc.clone());
            last_schedule = Some(sc);
        } else if last_schedule.as_ref().is_some_and(|p| p.start_slot + p.len() > t) {
            note.push("reusing the previous schedule".into());
        } else {
            last_schedule = None;
        }
        let energized_ref: Vec<bool> = match &last_schedule {
            Some(sc) => sc.traj.groups_on.iter().map(|g| g[t - sc.start_slot]).collect(),
            None => vec![false; s.n_groups()],
        };
        let correction = if policy.correction {
            CorrectionInput {
                factor: eps,
                lambda: allocate_lambda(s, &energized_ref, t),
            }
        } else {
            CorrectionInput::none(s.n_groups())
        };

        log.slots.push(SlotRecord {
            slot: t,
            day,
            slot_of_day,
            soc_start,
            fuel_start,
            error_estimate: estimate,
            correction_kw: eps,
            predicted_error_kw: predicted,
            gamma: gamma_now,
            fuel_target,
            stage1_status: status,
            stage1_objective: objective,
            stage1_end_fuel: end_fuel,
            note: note.join("; "),
        });

        prev_soc_start = soc_start;
        slot_minutes.clear();
        for j in 0..per_disp {
            let k = t * per_disp + j;
            let cmd = dispatch(s, &state, last_schedule.as_ref(), k, total_disp, gamma_now, &correction, &mut log);
            for r in 0..per_rt {
                let minute = k * per_rt + r;
                let out = step(s, &state, &cmd, &MinuteTruth::at(truth, minute));
                log.events.extend(out.events.iter().cloned());
                slot_minutes.push(out.flows.clone());
                log.minutes.push(out.flows);
                state = out.state;
            }
        }
    }
    state.events.clear();
    log.final_state = Some(state);
    Ok(log)
}

/// One stage-2 solve with its fallbacks; returns the command to actuate.
#[allow(clippy::too_many_arguments)]
fn dispatch(
    s: &Scenario,
    state: &PlantState,
    schedule: Option<&Stage1Schedule>,
    k: usize,
    total_disp: usize,
    gamma: f64,
    correction: &CorrectionInput,
    log: &mut RunLog,
) -> DispatchCommand {
    let per = s.grids.disp_per_sched();
    let Some(sc) = schedule else {
        log.dispatch.push(DispatchLogRow::fallback(s, k, gamma, "no schedule"));
        return DispatchCommand::all_off(s, k);
    };
    let covered = (sc.start_slot + sc.len()) * per;
    let len = s.grids.horizon_disp.min(total_disp - k).min(covered.saturating_sub(k));
    let attempt = |init: InitialConditions| -> Result<crate::stage2::DispatchPlan> {
        let reference = Reference::from_schedule(s, sc, k, len)?;
        let inst = Stage2Instance::new(s, k, len, init, reference, correction.clone(), vec![gamma; len])?;
        solve_stage2(s, &inst)
    };
    let init = initial_conditions(s, state, s.grids.dt_disp_min);
    let plan = match attempt(init.clone()) {
        Ok(p) => Ok(p),
        Err(_) if init.has_memory() => attempt(init.without_memory()),
        Err(e) => Err(e),
    };
    match plan {
        Ok(p) => {
            log.dispatch.push(DispatchLogRow::from_plan(s, &p));
            p.first()
        }
        Err(e) => {
            log::warn!("dispatch slot {k}: {e}; switching everything off");
            log.dispatch.push(DispatchLogRow::fallback(s, k, gamma, "failed"));
            DispatchCommand::all_off(s, k)
        }
    }
}

/// The first stage-1 solve of a run, without simulating anything.
pub fn opening_schedule(scenario: &Scenario, case: &CaseConfig) -> Result<Stage1Schedule> {
    let s = scenario.with_policy(case.apply(&scenario.policy))?;
    let policy = &s.policy;
    let grids = &s.grids;
    let gfm = s
        .grid_forming()
        .ok_or_else(|| Error::invalid(ReasonCode::Schema, "scenario has no grid-forming storage"))?;
    let es_rating = s.es_units[gfm].kva;
    let init = InitialConditions::from_scenario(&s);
    let (day, slot_of_day) = day_and_slot(grids, 0);
    let fuel_targets = s
        .dg_units
        .iter()
        .zip(&init.fuel)
        .map(|(d, f)| match policy.fuel {
            FuelMode::Fixed { target_l } => target_l,
            FuelMode::Rationed => fuel_reserve_target(*f, d.fuel_final, slot_of_day, day, grids.slots_per_day(), grids.days()),
        })
        .collect();
    let window = rolling_window(grids, 0)?;
    let reserve = ReserveState::new(policy.gamma_min, policy.gamma_max, policy.min_reserve);
    let gamma = (0..window.len)
        .map(|k| match policy.reserve {
            ReserveMode::Fixed { gamma } => gamma,
            ReserveMode::NetloadFraction { fraction } => {
                netload_fraction_reserve(forecast_net_load(&s.profiles().stage1, k), fraction, es_rating)
            }
            ReserveMode::Dynamic if k == 0 => reserve.clamp(1.0 - reserve.min_reserve),
            ReserveMode::Dynamic => policy.gamma_max,
        })
        .collect();
    let inst = Stage1Instance::from_scenario(&s, window, init, fuel_targets, gamma)?;
    solve_stage1(&s, &inst)
}

/// Runs every case on the same scenario, in parallel when enabled. Results
/// keep the order of `cases`.
pub fn compare_cases(scenario: &Scenario, cases: &[CaseConfig]) -> Result<Vec<(RunLog, Metrics)>> {
    par_map(cases, |c| {
        let log = run_restoration(scenario, c)?;
        let m = compute_metrics(&log, scenario);
        Ok((log, m))
    })
    .into_iter()
    .collect()
}
