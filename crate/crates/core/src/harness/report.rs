//! CSV exports of a finished run and of a case comparison.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::metrics::Metrics;
use super::RunLog;
use crate::error::{Error, Result};
use crate::plant::{write_events, write_trace, TraceRow};
use crate::scenario::Scenario;
use crate::stage1::write_schedule_csv;
use crate::stage2::write_dispatch_log;

/// Metric rows as (name, formatted value), in a fixed order.
pub fn metric_rows(m: &Metrics) -> Vec<(&'static str, String)> {
    let f = |v: f64| format!("{v:.4}");
    vec![
        ("critical_load_served_pct", f(m.p_cl_pct)),
        ("noncritical_load_served_pct", f(m.p_ncl_pct)),
        ("total_load_served_pct", f(m.p_load_pct)),
        ("pv_utilized_pct", f(m.p_pv_pct)),
        ("critical_load_hours", f(m.t_cl_h)),
        ("noncritical_load_hours", f(m.t_ncl_h)),
        ("critical_interruptions", m.n_cl.to_string()),
        ("scheduled_shutdowns", m.n_ug_sch.to_string()),
        ("unscheduled_shutdowns", m.n_ug_unsch.to_string()),
        ("scheduled_shutdown_min", f(m.t_ug_sch_min)),
        ("unscheduled_shutdown_min", f(m.t_ug_unsch_min)),
        ("total_shutdown_min", f(m.t_ug_total_min)),
        ("served_kwh", f(m.served_kwh)),
        ("demand_kwh", f(m.demand_kwh)),
        ("pv_used_kwh", f(m.pv_used_kwh)),
        ("pv_available_kwh", f(m.pv_available_kwh)),
    ]
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(what: &'static str) -> impl Fn(csv::Error) -> Error {
    move |e| Error::Model(format!("writing {what}: {e}"))
}

pub fn write_metrics<W: Write>(m: &Metrics, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = csv_err("metrics");
    out.write_record(["metric", "value"]).map_err(&err)?;
    for (name, value) in metric_rows(m) {
        out.write_record([name, value.as_str()]).map_err(&err)?;
    }
    out.flush().map_err(|e| Error::Model(format!("writing metrics: {e}")))?;
    Ok(())
}

/// Writes metrics, minute trace, events, dispatch log, slot log and the
/// first day-ahead schedule of one run into `dir`.
pub fn export_report(scenario: &Scenario, log: &RunLog, metrics: &Metrics, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_metrics(metrics, create(&dir.join("metrics.csv"))?)?;

    let mut per_minute: Vec<Vec<_>> = vec![Vec::new(); log.minutes.len()];
    let first_minute = log.minutes.first().map(|f| f.minute).unwrap_or(0);
    for e in &log.events {
        if let Some(slot) = e.minute.checked_sub(first_minute).and_then(|i| per_minute.get_mut(i)) {
            slot.push(e.clone());
        }
    }
    let rows: Vec<TraceRow> = log
        .minutes
        .iter()
        .zip(&per_minute)
        .map(|(f, ev)| TraceRow::new(scenario, f, ev))
        .collect();
    write_trace(&rows, create(&dir.join("trace.csv"))?)?;
    write_events(scenario, &log.events, create(&dir.join("events.csv"))?)?;
    write_dispatch_log(&log.dispatch, create(&dir.join("dispatch.csv"))?)?;

    let mut slots = csv::Writer::from_writer(create(&dir.join("slots.csv"))?);
    for r in &log.slots {
        slots.serialize(r).map_err(csv_err("slot log"))?;
    }
    slots.flush().map_err(|e| Error::io(dir.join("slots.csv"), e))?;

    if let Some(first) = log.schedules.first() {
        write_schedule_csv(scenario, first, create(&dir.join("schedule.csv"))?)?;
    }
    Ok(())
}

/// One row per metric, one column per case.
pub fn write_comparison<W: Write>(results: &[(String, Metrics)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = csv_err("comparison");
    let mut header = vec!["metric".to_string()];
    header.extend(results.iter().map(|(n, _)| n.clone()));
    out.write_record(&header).map_err(&err)?;
    let columns: Vec<_> = results.iter().map(|(_, m)| metric_rows(m)).collect();
    let names: Vec<&str> = metric_rows(&Metrics::default()).into_iter().map(|(n, _)| n).collect();
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.to_string()];
        rec.extend(columns.iter().map(|c| c[i].1.clone()));
        out.write_record(&rec).map_err(&err)?;
    }
    out.flush().map_err(|e| Error::Model(format!("writing comparison: {e}")))?;
    Ok(())
}

pub fn export_comparison(results: &[(String, Metrics)], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_comparison(results, create(path)?)
}

/// `comparison.csv` plus one report directory per case under `dir`.
pub fn export_case_matrix(scenario: &Scenario, results: &[(RunLog, Metrics)], dir: &Path) -> Result<()> {
    let named: Vec<(String, Metrics)> = results.iter().map(|(l, m)| (l.case.name.clone(), m.clone())).collect();
    export_comparison(&named, &dir.join("comparison.csv"))?;
    for (log, m) in results {
        export_report(scenario, log, m, &dir.join(&log.case.name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_has_one_column_per_case() {
        let a = Metrics { p_cl_pct: 79.2, ..Metrics::default() };
        let b = Metrics { n_ug_unsch: 2, ..Metrics::default() };
        let mut buf = Vec::new();
        write_comparison(&[("base".into(), a), ("case1".into(), b)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "metric,base,case1");
        assert_eq!(lines[1], "critical_load_served_pct,79.2000,0.0000");
        assert!(lines.contains(&"unscheduled_shutdowns,0,2"));
        assert_eq!(lines.len(), 1 + metric_rows(&Metrics::default()).len());
    }

    #[test]
    fn metrics_csv_is_stable() {
        let m = Metrics { p_pv_pct: 12.345678, ..Metrics::default() };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_metrics(&m, &mut a).unwrap();
        write_metrics(&m, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().contains("pv_utilized_pct,12.3457"));
    }
}
