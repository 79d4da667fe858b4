//! Minute-level plant: the grid-forming storage balances whatever the
//! dispatched assets and true loads leave over, protection sheds groups
//! when that balance is out of reach.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{EsRole, GroupProfile, Scenario, PHASES};
use crate::stage2::DispatchCommand;

/// Length of an unscheduled outage before restart is allowed.
pub const UNSCHEDULED_OUTAGE_MIN: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Shutdown {
    None,
    Scheduled,
    Unscheduled { remaining_min: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    GroupShed,
    MicrogridShutdownUnscheduled,
    MicrogridShutdownScheduled,
    DgStart,
    DgStop,
    Restart,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::GroupShed => "group_shed",
            EventKind::MicrogridShutdownUnscheduled => "microgrid_shutdown_unscheduled",
            EventKind::MicrogridShutdownScheduled => "microgrid_shutdown_scheduled",
            EventKind::DgStart => "dg_start",
            EventKind::DgStop => "dg_stop",
            EventKind::Restart => "restart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantEvent {
    pub minute: usize,
    pub kind: EventKind,
    /// Group id or generator name the event concerns, if any.
    pub subject: String,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Minutes since the restoration start.
    pub minute: usize,
    pub soc: Vec<f64>,
    pub fuel: Vec<f64>,
    pub groups_on: Vec<bool>,
    /// Groups tripped by protection, held open until the next dispatch.
    pub locked_out: Vec<bool>,
    pub dg_on: Vec<bool>,
    pub shutdown: Shutdown,
    /// Consecutive minutes each group has been energized.
    pub group_on_min: Vec<u32>,
    pub dg_on_min: Vec<u32>,
    /// Dispatch slot of the last command seen.
    pub last_dispatch: Option<usize>,
    pub events: Vec<PlantEvent>,
}

impl PlantState {
    pub fn initial(scenario: &Scenario) -> Self {
        let ng = scenario.n_groups();
        let nd = scenario.dg_units.len();
        PlantState {
            minute: 0,
            soc: scenario.es_units.iter().map(|e| e.soc_init).collect(),
            fuel: scenario.dg_units.iter().map(|d| d.fuel_init).collect(),
            groups_on: vec![false; ng],
            locked_out: vec![false; ng],
            dg_on: vec![false; nd],
            shutdown: Shutdown::None,
            group_on_min: vec![0; ng],
            dg_on_min: vec![0; nd],
            last_dispatch: None,
            events: Vec::new(),
        }
    }

    pub fn in_unscheduled_outage(&self) -> bool {
        matches!(self.shutdown, Shutdown::Unscheduled { .. })
    }
}

/// True per-group demand for one minute.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteTruth {
    pub load: Vec<[f64; PHASES]>,
    pub pv: Vec<[f64; PHASES]>,
    pub q: Vec<[f64; PHASES]>,
    pub critical: Vec<f64>,
}

impl MinuteTruth {
    pub fn at(profile: &GroupProfile, minute: usize) -> Self {
        MinuteTruth {
            load: profile.load.iter().map(|g| g[minute]).collect(),
            pv: profile.pv.iter().map(|g| g[minute]).collect(),
            q: profile.q.iter().map(|g| g[minute]).collect(),
            critical: profile.critical_load.iter().map(|g| g[minute]).collect(),
        }
    }

    pub fn zero(groups: usize) -> Self {
        MinuteTruth {
            load: vec![[0.0; PHASES]; groups],
            pv: vec![[0.0; PHASES]; groups],
            q: vec![[0.0; PHASES]; groups],
            critical: vec![0.0; groups],
        }
    }
}

/// Power flows realized during one minute.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteFlows {
    pub minute: usize,
    pub groups_on: Vec<bool>,
    pub served_load_kw: f64,
    pub served_pv_kw: f64,
    pub served_critical_kw: f64,
    pub served_q_kvar: f64,
    pub dg_p: Vec<f64>,
    pub dg_q: Vec<f64>,
    /// Per storage unit; the grid-forming one carries the slack.
    pub es_p: Vec<f64>,
    pub es_q: Vec<f64>,
    /// State after the minute.
    pub soc: Vec<f64>,
    pub fuel: Vec<f64>,
    pub shutdown: Shutdown,
}

impl MinuteFlows {
    /// served load − (generation + storage + served PV); zero up to rounding.
    pub fn balance_residual(&self) -> f64 {
        self.served_load_kw - self.dg_p.iter().sum::<f64>() - self.es_p.iter().sum::<f64>() - self.served_pv_kw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: PlantState,
    pub flows: MinuteFlows,
    /// Events raised during this minute (also appended to `state.events`).
    pub events: Vec<PlantEvent>,
}

/// Protection verdict for one candidate set of energized groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protection {
    Ok,
    /// Shed this group together with its downstream groups.
    Shed(usize),
    Shutdown,
}

/// Checks the slack unit's loading and next-minute SoC, picking the
/// lowest-weight energized group to shed while more than one is on.
pub fn protection_check(
    scenario: &Scenario,
    energized: &[bool],
    slack_p: f64,
    slack_q: f64,
    next_soc: f64,
    gfm: usize,
) -> Protection {
    let es = &scenario.es_units[gfm];
    let tol = 1e-9;
    let overload = slack_p.hypot(slack_q) > es.kva + tol;
    let soc_out = next_soc < es.soc_min - tol || next_soc > es.soc_max + tol;
    if !overload && !soc_out {
        return Protection::Ok;
    }
    if energized.iter().filter(|b| **b).count() <= 1 {
        return Protection::Shutdown;
    }
    match scenario.shed_order().into_iter().find(|g| energized[*g]) {
        Some(g) => Protection::Shed(g),
        None => Protection::Shutdown,
    }
}

struct Balance {
    dg_p: Vec<f64>,
    dg_q: Vec<f64>,
    dg_on: Vec<bool>,
    es_p: Vec<f64>,
    es_q: Vec<f64>,
    served_load: f64,
    served_pv: f64,
    served_q: f64,
    served_critical: f64,
}

fn balance(scenario: &Scenario, state: &PlantState, cmd: &DispatchCommand, truth: &MinuteTruth, on: &[bool], gfm: usize) -> Balance {
    let dt = scenario.grids.dt_rt_h();
    let any_on = on.iter().any(|b| *b);
    let mut b = Balance {
        dg_p: vec![0.0; scenario.dg_units.len()],
        dg_q: vec![0.0; scenario.dg_units.len()],
        dg_on: vec![false; scenario.dg_units.len()],
        es_p: vec![0.0; scenario.es_units.len()],
        es_q: vec![0.0; scenario.es_units.len()],
        served_load: 0.0,
        served_pv: 0.0,
        served_q: 0.0,
        served_critical: 0.0,
    };
    for g in (0..on.len()).filter(|g| on[*g]) {
        b.served_load += truth.load[g].iter().sum::<f64>();
        b.served_pv += truth.pv[g].iter().sum::<f64>();
        b.served_q += truth.q[g].iter().sum::<f64>();
        b.served_critical += truth.critical[g];
    }
    if !any_on {
        return b;
    }
    for (i, d) in scenario.dg_units.iter().enumerate() {
        if !cmd.dg_on[i] {
            continue;
        }
        let p = cmd.dg_p[i].clamp(d.p_min(), d.p_max());
        if state.fuel[i] - d.burn(true, p, dt) < d.fuel_min - 1e-9 {
            continue;
        }
        b.dg_on[i] = true;
        b.dg_p[i] = p;
        b.dg_q[i] = p * d.tan_phi();
    }
    for (e, es) in scenario.es_units.iter().enumerate() {
        if e == gfm || es.role == EsRole::GridForming {
            continue;
        }
        let rate = dt / (es.kwh * es.efficiency);
        let lo = (state.soc[e] - es.soc_max) / rate;
        let hi = (state.soc[e] - es.soc_min) / rate;
        b.es_p[e] = cmd.es_p[e].iter().sum::<f64>().clamp(-es.p_charge_max(), es.p_discharge_max()).clamp(lo, hi);
        b.es_q[e] = cmd.es_q[e].iter().sum::<f64>();
    }
    let others_p: f64 = b.dg_p.iter().sum::<f64>() + b.es_p.iter().sum::<f64>();
    let others_q: f64 = b.dg_q.iter().sum::<f64>() + b.es_q.iter().sum::<f64>();
    b.es_p[gfm] = b.served_load - b.served_pv - others_p;
    b.es_q[gfm] = b.served_q - others_q;
    b
}

fn energized_from(scenario: &Scenario, cmd: &DispatchCommand, locked: &[bool]) -> Vec<bool> {
    let n = scenario.n_groups();
    let mut on = vec![false; n];
    // parents are energized before children in a radial tree
    let mut changed = true;
    while changed {
        changed = false;
        for g in 0..n {
            let fed = scenario.parent_of(g).is_none_or(|p| on[p]);
            let want = cmd.groups_on[g] && !locked[g] && fed;
            if want != on[g] {
                on[g] = want;
                changed = true;
            }
        }
    }
    on
}

/// Advances the plant one minute under `cmd`.
pub fn step(scenario: &Scenario, state: &PlantState, cmd: &DispatchCommand, truth: &MinuteTruth) -> StepOutcome {
    let dt = scenario.grids.dt_rt_h();
    let minute = state.minute;
    let mut next = state.clone();
    let mut events = Vec::new();
    let mut emit = |kind: EventKind, subject: String, cause: String| {
        events.push(PlantEvent {
            minute,
            kind,
            subject,
            cause,
        })
    };

    let new_dispatch = state.last_dispatch != Some(cmd.slot);
    next.last_dispatch = Some(cmd.slot);
    if new_dispatch {
        next.locked_out.iter_mut().for_each(|l| *l = false);
    }

    let mut outage = false;
    if let Shutdown::Unscheduled { remaining_min } = state.shutdown {
        if remaining_min > 0 || !new_dispatch {
            outage = true;
            next.shutdown = Shutdown::Unscheduled {
                remaining_min: remaining_min.saturating_sub(1),
            };
        }
    }

    let gfm = scenario.grid_forming();
    let mut on = if outage || gfm.is_none() {
        vec![false; scenario.n_groups()]
    } else {
        energized_from(scenario, cmd, &next.locked_out)
    };

    let mut bal;
    loop {
        let Some(gfm) = gfm else {
            bal = balance(scenario, state, cmd, truth, &on, 0);
            break;
        };
        bal = balance(scenario, state, cmd, truth, &on, gfm);
        if !on.iter().any(|b| *b) {
            break;
        }
        let es = &scenario.es_units[gfm];
        let next_soc = state.soc[gfm] - bal.es_p[gfm] * dt / (es.kwh * es.efficiency);
        match protection_check(scenario, &on, bal.es_p[gfm], bal.es_q[gfm], next_soc, gfm) {
            Protection::Ok => break,
            Protection::Shed(g) => {
                let cause = shed_cause(es, bal.es_p[gfm], bal.es_q[gfm], next_soc);
                for s in scenario.subtree(g) {
                    if on[s] {
                        on[s] = false;
                        next.locked_out[s] = true;
                        emit(EventKind::GroupShed, scenario.groups[s].id.to_string(), cause.clone());
                    }
                }
            }
            Protection::Shutdown => {
                let cause = shed_cause(es, bal.es_p[gfm], bal.es_q[gfm], next_soc);
                on.iter_mut().for_each(|b| *b = false);
                // the tripping minute is the first minute of the outage
                next.shutdown = Shutdown::Unscheduled {
                    remaining_min: UNSCHEDULED_OUTAGE_MIN - 1,
                };
                outage = true;
                emit(EventKind::MicrogridShutdownUnscheduled, String::new(), cause);
            }
        }
    }

    let any_on = on.iter().any(|b| *b);
    if !outage {
        let was_down = !matches!(state.shutdown, Shutdown::None);
        if any_on {
            if was_down {
                emit(EventKind::Restart, String::new(), "groups re-energized".into());
            }
            next.shutdown = Shutdown::None;
        } else if cmd.groups_on.iter().all(|b| !b) {
            let was_on = state.groups_on.iter().any(|b| *b);
            if was_on {
                emit(
                    EventKind::MicrogridShutdownScheduled,
                    String::new(),
                    "all groups commanded off".into(),
                );
            }
            if was_on || was_down {
                next.shutdown = Shutdown::Scheduled;
            }
        }
    }

    for (i, d) in scenario.dg_units.iter().enumerate() {
        let now = bal.dg_on[i];
        if now && !state.dg_on[i] {
            emit(EventKind::DgStart, d.name.clone(), String::new());
        } else if !now && state.dg_on[i] {
            emit(EventKind::DgStop, d.name.clone(), String::new());
        }
        next.fuel[i] = (state.fuel[i] - d.burn(now, bal.dg_p[i], dt)).max(d.fuel_min.min(state.fuel[i]));
        next.dg_on[i] = now;
        next.dg_on_min[i] = if now { state.dg_on_min[i] + 1 } else { 0 };
    }
    for (e, es) in scenario.es_units.iter().enumerate() {
        next.soc[e] = state.soc[e] - bal.es_p[e] * dt / (es.kwh * es.efficiency);
    }
    for g in 0..on.len() {
        next.group_on_min[g] = if on[g] { state.group_on_min[g] + 1 } else { 0 };
    }
    next.groups_on = on.clone();
    next.minute = minute + 1;
    next.events.extend(events.iter().cloned());

    let flows = MinuteFlows {
        minute,
        groups_on: on,
        served_load_kw: bal.served_load,
        served_pv_kw: bal.served_pv,
        served_critical_kw: bal.served_critical,
        served_q_kvar: bal.served_q,
        dg_p: bal.dg_p,
        dg_q: bal.dg_q,
        es_p: bal.es_p,
        es_q: bal.es_q,
        soc: next.soc.clone(),
        fuel: next.fuel.clone(),
        shutdown: next.shutdown,
    };
    StepOutcome {
        state: next,
        flows,
        events,
    }
}

fn shed_cause(es: &crate::scenario::EsSpec, p: f64, q: f64, next_soc: f64) -> String {
    let s = p.hypot(q);
    if s > es.kva {
        format!("storage loading {s:.1} kVA over {:.1} kVA rating", es.kva)
    } else if next_soc < es.soc_min {
        format!("SoC {next_soc:.4} below {:.4}", es.soc_min)
    } else {
        format!("SoC {next_soc:.4} above {:.4}", es.soc_max)
    }
}

/// One row of the minute trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub minute: usize,
    pub timestamp: String,
    pub groups: String,
    pub served_load_kw: f64,
    pub served_pv_kw: f64,
    pub dg_p_kw: f64,
    pub es_p_kw: f64,
    pub es_q_kvar: f64,
    pub soc: f64,
    pub fuel_l: f64,
    pub shutdown: &'static str,
    pub events: String,
}

impl TraceRow {
    pub fn new(scenario: &Scenario, flows: &MinuteFlows, events: &[PlantEvent]) -> Self {
        let g = &scenario.grids;
        TraceRow {
            minute: flows.minute,
            timestamp: (g.start + chrono::Duration::minutes(flows.minute as i64))
                .format(crate::scenario::TIMESTAMP_FORMAT)
                .to_string(),
            groups: flows.groups_on.iter().map(|b| if *b { '1' } else { '0' }).collect(),
            served_load_kw: flows.served_load_kw,
            served_pv_kw: flows.served_pv_kw,
            dg_p_kw: flows.dg_p.iter().sum(),
            es_p_kw: flows.es_p.iter().sum(),
            es_q_kvar: flows.es_q.iter().sum(),
            soc: scenario.grid_forming().map_or(f64::NAN, |e| flows.soc[e]),
            fuel_l: flows.fuel.iter().sum(),
            shutdown: match flows.shutdown {
                Shutdown::None => "none",
                Shutdown::Scheduled => "scheduled",
                Shutdown::Unscheduled { .. } => "unscheduled",
            },
            events: events
                .iter()
                .map(|e| {
                    if e.subject.is_empty() {
                        e.kind.as_str().to_string()
                    } else {
                        format!("{}:{}", e.kind.as_str(), e.subject)
                    }
                })
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Model(format!("writing trace: {e}")))?;
    }
    out.flush().map_err(|e| Error::Model(format!("writing trace: {e}")))?;
    Ok(())
}

pub fn write_events<W: Write>(scenario: &Scenario, events: &[PlantEvent], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Model(format!("writing events: {e}"));
    out.write_record(["minute", "timestamp", "kind", "subject", "cause"]).map_err(err)?;
    for e in events {
        let ts = (scenario.grids.start + chrono::Duration::minutes(e.minute as i64))
            .format(crate::scenario::TIMESTAMP_FORMAT)
            .to_string();
        out.write_record([e.minute.to_string(), ts, e.kind.as_str().to_string(), e.subject.clone(), e.cause.clone()])
            .map_err(err)?;
    }
    out.flush().map_err(|e| Error::Model(format!("writing events: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{flat_scenario, reference_assets, FlatGroup};
    use crate::scenario::{DgSpec, EsSpec, PolicyConfig};
    use proptest::prelude::*;

    fn es(soc: f64) -> EsSpec {
        let (mut es, _) = reference_assets();
        es.soc_init = soc;
        es
    }

    fn flexible_dg() -> DgSpec {
        let (_, mut dg) = reference_assets();
        dg.kva_min = 0.0;
        dg
    }

    fn cmd(s: &Scenario, slot: usize, on: &[bool]) -> DispatchCommand {
        DispatchCommand {
            groups_on: on.to_vec(),
            ..DispatchCommand::all_off(s, slot)
        }
    }

    fn truth(s: &Scenario) -> MinuteTruth {
        MinuteTruth::at(&s.profiles().truth, 0)
    }

    #[test]
    fn storage_slack_integrates_soc() {
        let s = flat_scenario(&[FlatGroup::new(0.4, 500.0 / 3.0)], 1, es(0.5), vec![], PolicyConfig::default()).unwrap();
        let out = step(&s, &PlantState::initial(&s), &cmd(&s, 0, &[true]), &truth(&s));
        let expected = 0.5 - 500.0 / (8000.0 * 0.95 * 60.0);
        assert!((out.state.soc[0] - expected).abs() < 1e-12);
        assert!((out.state.soc[0] - 0.498904).abs() < 5e-7);
        assert!((out.flows.es_p[0] - 500.0).abs() < 1e-9);
        assert!(out.flows.balance_residual().abs() < 1e-9);
        assert!(out.events.is_empty());
    }

    #[test]
    fn generator_burns_idle_plus_incremental_fuel() {
        let s = flat_scenario(&[FlatGroup::new(0.4, 500.0 / 3.0)], 1, es(0.5), vec![flexible_dg()], PolicyConfig::default()).unwrap();
        let mut c = cmd(&s, 0, &[true]);
        c.dg_on = vec![true];
        c.dg_p = vec![400.0];
        let out = step(&s, &PlantState::initial(&s), &c, &truth(&s));
        let burn = (84.87 + 0.20 * 400.0) / 60.0;
        assert!((s.dg_units[0].fuel_init - out.state.fuel[0] - burn).abs() < 1e-12);
        assert!((burn - 2.7478).abs() < 5e-5);
        assert!((out.flows.es_p[0] - 100.0).abs() < 1e-9);
        assert_eq!(out.events[0].kind, EventKind::DgStart);
    }

    #[test]
    fn idle_minute_only_advances_the_clock() {
        let s = flat_scenario(&[FlatGroup::new(0.4, 0.0)], 1, es(0.5), vec![flexible_dg()], PolicyConfig::default()).unwrap();
        let init = PlantState::initial(&s);
        let out = step(&s, &init, &DispatchCommand::all_off(&s, 0), &MinuteTruth::zero(1));
        let mut expected = init.clone();
        expected.minute = 1;
        expected.last_dispatch = Some(0);
        assert_eq!(out.state, expected);
    }

    #[test]
    fn generator_stays_off_without_load() {
        let s = flat_scenario(&[FlatGroup::new(0.4, 100.0)], 1, es(0.5), vec![flexible_dg()], PolicyConfig::default()).unwrap();
        let mut c = DispatchCommand::all_off(&s, 0);
        c.dg_on = vec![true];
        c.dg_p = vec![300.0];
        let out = step(&s, &PlantState::initial(&s), &c, &truth(&s));
        assert!(!out.state.dg_on[0]);
        assert_eq!(out.state.fuel[0], s.dg_units[0].fuel_init);
    }

    #[test]
    fn overload_sheds_lowest_weight_first() {
        let s = flat_scenario(
            &[FlatGroup::new(0.4, 500.0), FlatGroup::new(0.01, 1000.0 / 3.0)],
            1,
            es(0.5),
            vec![],
            PolicyConfig::default(),
        )
        .unwrap();
        let t = truth(&s);
        // 2500 kW of slack on a 2000 kVA unit
        assert_eq!(protection_check(&s, &[true, true], 2500.0, 0.0, 0.5, 0), Protection::Shed(1));
        assert_eq!(protection_check(&s, &[true, true], 1500.0, 0.0, 0.5, 0), Protection::Ok);
        let out = step(&s, &PlantState::initial(&s), &cmd(&s, 0, &[true, true]), &t);
        assert_eq!(out.state.groups_on, vec![true, false]);
        assert_eq!(out.events.len(), 1);
        assert_eq!((out.events[0].kind, out.events[0].subject.as_str()), (EventKind::GroupShed, "2"));
        // held open for the rest of the dispatch slot, retried on the next
        let again = step(&s, &out.state, &cmd(&s, 0, &[true, true]), &t);
        assert_eq!(again.state.groups_on, vec![true, false]);
        assert!(again.events.is_empty());
        let retry = step(&s, &again.state, &cmd(&s, 1, &[true, true]), &t);
        assert_eq!(retry.events[0].kind, EventKind::GroupShed);
    }

    #[test]
    fn shedding_a_parent_takes_its_subtree() {
        let mut child = FlatGroup::new(0.4, 100.0);
        child.parent = Some(0);
        let s = flat_scenario(
            &[FlatGroup::new(0.01, 400.0), child, FlatGroup::new(0.3, 400.0)],
            1,
            es(0.5),
            vec![],
            PolicyConfig::default(),
        )
        .unwrap();
        let out = step(&s, &PlantState::initial(&s), &cmd(&s, 0, &[true, true, true]), &truth(&s));
        assert_eq!(out.state.groups_on, vec![false, false, true]);
        let shed: Vec<&str> = out.events.iter().map(|e| e.subject.as_str()).collect();
        assert_eq!(shed, vec!["1", "2"]);
    }

    #[test]
    fn empty_storage_forces_unscheduled_outage() {
        let mut e = es(0.1);
        e.soc_min = 0.1;
        let s = flat_scenario(&[FlatGroup::new(0.4, 100.0)], 2, e, vec![], PolicyConfig::default()).unwrap();
        let t = truth(&s);
        let mut st = PlantState::initial(&s);
        let out = step(&s, &st, &cmd(&s, 0, &[true]), &t);
        assert_eq!(out.events[0].kind, EventKind::MicrogridShutdownUnscheduled);
        assert_eq!(
            out.state.shutdown,
            Shutdown::Unscheduled {
                remaining_min: UNSCHEDULED_OUTAGE_MIN - 1
            }
        );
        assert_eq!(out.flows.served_load_kw, 0.0);
        st = out.state;
        // the storage gets some charge back so a restart can hold
        st.soc[0] = 0.5;
        let mut restarted_at = None;
        for m in 1..60usize {
            let o = step(&s, &st, &cmd(&s, m / 5, &[true]), &t);
            if o.events.iter().any(|e| e.kind == EventKind::Restart) {
                restarted_at = Some(m);
                break;
            }
            assert_eq!(o.flows.served_load_kw, 0.0);
            st = o.state;
        }
        // minutes 0..=29 are dark, minute 30 opens a new dispatch slot
        assert_eq!(restarted_at, Some(30));
    }

    #[test]
    fn commanded_blackout_is_a_scheduled_shutdown() {
        let s = flat_scenario(&[FlatGroup::new(0.4, 50.0)], 1, es(0.5), vec![], PolicyConfig::default()).unwrap();
        let t = truth(&s);
        let a = step(&s, &PlantState::initial(&s), &cmd(&s, 0, &[true]), &t);
        assert!(a.events.is_empty());
        let b = step(&s, &a.state, &cmd(&s, 1, &[false]), &t);
        assert_eq!(b.events[0].kind, EventKind::MicrogridShutdownScheduled);
        assert_eq!(b.state.shutdown, Shutdown::Scheduled);
        let c = step(&s, &b.state, &cmd(&s, 2, &[true]), &t);
        assert_eq!(c.events[0].kind, EventKind::Restart);
        assert_eq!(c.state.shutdown, Shutdown::None);
    }

    #[test]
    fn trace_and_events_write_csv() {
        let s = flat_scenario(&[FlatGroup::new(0.4, 50.0)], 1, es(0.5), vec![], PolicyConfig::default()).unwrap();
        let out = step(&s, &PlantState::initial(&s), &cmd(&s, 0, &[true]), &truth(&s));
        let mut buf = Vec::new();
        write_trace(&[TraceRow::new(&s, &out.flows, &out.events)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("minute,timestamp,groups,served_load_kw"));
        assert!(text.lines().nth(1).unwrap().starts_with("0,2023-07-01T00:00:00,1,150"));
        let mut buf = Vec::new();
        write_events(&s, &out.state.events, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "minute,timestamp,kind,subject,cause");
    }

    proptest! {
        #[test]
        fn minute_balance_and_bounds_hold(
            loads in proptest::collection::vec(0.0f64..400.0, 3),
            pvs in proptest::collection::vec(0.0f64..400.0, 3),
            on in proptest::collection::vec(any::<bool>(), 3),
            dg_p in 0.0f64..1500.0,
            dg_on in any::<bool>(),
            soc in 0.1f64..0.95,
        ) {
            let groups: Vec<FlatGroup> = (0..3).map(|g| {
                let mut f = FlatGroup::new([0.4, 0.3, 0.01][g], loads[g]);
                f.pv_kw_per_phase = pvs[g];
                f
            }).collect();
            let s = flat_scenario(&groups, 1, es(soc), vec![flexible_dg()], PolicyConfig::default()).unwrap();
            let mut c = cmd(&s, 0, &on);
            c.dg_on = vec![dg_on];
            c.dg_p = vec![dg_p];
            let t = truth(&s);
            let init = PlantState::initial(&s);
            let out = step(&s, &init, &c, &t);
            prop_assert!(out.flows.balance_residual().abs() < 1e-9);
            let e = &s.es_units[0];
            if !out.state.in_unscheduled_outage() {
                prop_assert!(out.state.soc[0] >= e.soc_min - 1e-9 && out.state.soc[0] <= e.soc_max + 1e-9);
                prop_assert!(out.flows.es_p[0].hypot(out.flows.es_q[0]) <= e.kva + 1e-9);
            } else {
                prop_assert_eq!(out.flows.served_load_kw, 0.0);
                prop_assert!(!out.state.dg_on[0]);
            }
            prop_assert!(out.state.fuel[0] >= s.dg_units[0].fuel_min);
            // deterministic successor
            prop_assert_eq!(step(&s, &init, &c, &t), out);
        }
    }
}
