//! Restoration performance metrics computed from a run's minute trace.

use serde::Serialize;

use super::RunLog;
use crate::plant::{EventKind, Shutdown};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    /// Critical load energy served, % of critical demand.
    pub p_cl_pct: f64,
    pub p_ncl_pct: f64,
    /// All load energy served, % of total demand.
    pub p_load_pct: f64,
    /// PV energy absorbed while its group was energized, % of available PV.
    pub p_pv_pct: f64,
    /// Average energized hours of groups carrying critical load.
    pub t_cl_h: f64,
    /// Average energized hours of groups carrying non-critical load.
    pub t_ncl_h: f64,
    /// De-energizations of groups carrying critical load.
    pub n_cl: usize,
    pub n_ug_sch: usize,
    pub n_ug_unsch: usize,
    pub t_ug_sch_min: f64,
    pub t_ug_unsch_min: f64,
    pub t_ug_total_min: f64,
    pub served_kwh: f64,
    pub demand_kwh: f64,
    pub pv_used_kwh: f64,
    pub pv_available_kwh: f64,
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (100.0 * num / den).clamp(0.0, 100.0)
    } else {
        0.0
    }
}

pub fn compute_metrics(log: &RunLog, scenario: &Scenario) -> Metrics {
    let truth = &scenario.profiles().truth;
    let dt_h = scenario.grids.dt_rt_h();
    let ng = scenario.n_groups();
    let (mut crit_dem, mut load_dem, mut pv_avail) = (0.0, 0.0, 0.0);
    let (mut crit_srv, mut load_srv, mut pv_srv) = (0.0, 0.0, 0.0);
    let mut on_min = vec![0usize; ng];
    let mut has_crit = vec![false; ng];
    let mut has_ncl = vec![false; ng];
    let mut n_cl = 0;
    let (mut sch_min, mut unsch_min) = (0usize, 0usize);
    let mut prev_on = vec![false; ng];
    for f in &log.minutes {
        let m = f.minute;
        for g in 0..ng {
            let load = truth.load_total(g, m);
            let crit = truth.critical_load[g][m];
            crit_dem += crit * dt_h;
            load_dem += load * dt_h;
            pv_avail += truth.pv_total(g, m) * dt_h;
            has_crit[g] |= crit > 0.0;
            has_ncl[g] |= load - crit > 0.0;
            if f.groups_on[g] {
                on_min[g] += 1;
            } else if prev_on[g] && has_crit[g] {
                n_cl += 1;
            }
        }
        crit_srv += f.served_critical_kw * dt_h;
        load_srv += f.served_load_kw * dt_h;
        pv_srv += f.served_pv_kw * dt_h;
        prev_on.clone_from(&f.groups_on);
        match f.shutdown {
            Shutdown::Scheduled => sch_min += 1,
            Shutdown::Unscheduled { .. } => unsch_min += 1,
            Shutdown::None => {}
        }
    }
    let avg_hours = |mask: &[bool]| -> f64 {
        let picked: Vec<usize> = (0..ng).filter(|g| mask[*g]).collect();
        if picked.is_empty() {
            return 0.0;
        }
        picked.iter().map(|g| on_min[*g] as f64 * dt_h).sum::<f64>() / picked.len() as f64
    };
    let count = |k: EventKind| log.events.iter().filter(|e| e.kind == k).count();
    let step_min = scenario.grids.dt_rt_min as f64;
    Metrics {
        p_cl_pct: pct(crit_srv, crit_dem),
        p_ncl_pct: pct(load_srv - crit_srv, load_dem - crit_dem),
        p_load_pct: pct(load_srv, load_dem),
        p_pv_pct: pct(pv_srv, pv_avail),
        t_cl_h: avg_hours(&has_crit),
        t_ncl_h: avg_hours(&has_ncl),
        n_cl,
        n_ug_sch: count(EventKind::MicrogridShutdownScheduled),
        n_ug_unsch: count(EventKind::MicrogridShutdownUnscheduled),
        t_ug_sch_min: sch_min as f64 * step_min,
        t_ug_unsch_min: unsch_min as f64 * step_min,
        t_ug_total_min: (sch_min + unsch_min) as f64 * step_min,
        served_kwh: load_srv,
        demand_kwh: load_dem,
        pv_used_kwh: pv_srv,
        pv_available_kwh: pv_avail,
    }
}
