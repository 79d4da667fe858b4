//! Per-node, per-phase load/PV time series and the CSV format they travel in.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ReasonCode, Result};
use crate::scenario::PHASES;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Truth,
    Stage1Forecast,
    Stage2Forecast,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Truth => "truth",
            SeriesKind::Stage1Forecast => "stage1",
            SeriesKind::Stage2Forecast => "stage2",
        }
    }
}

/// One phase of one node. `q_kvar` is `None` when the input carried no
/// reactive column; it is derived from a power factor later.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseSeries {
    pub load_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
    pub q_kvar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSeries {
    /// `None` for phases the node is not connected to.
    pub phases: [Option<PhaseSeries>; PHASES],
}

impl NodeSeries {
    pub fn empty() -> Self {
        NodeSeries {
            phases: [None, None, None],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    pub kind: SeriesKind,
    pub start: NaiveDateTime,
    pub step_min: u32,
    pub len: usize,
    pub nodes: BTreeMap<String, NodeSeries>,
}

impl TimeSeriesFrame {
    pub fn new(kind: SeriesKind, start: NaiveDateTime, step_min: u32, len: usize) -> Self {
        TimeSeriesFrame {
            kind,
            start,
            step_min,
            len,
            nodes: BTreeMap::new(),
        }
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::minutes(self.step_min as i64 * self.len as i64)
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::minutes(self.step_min as i64 * i as i64)
    }

    /// Inserts (or replaces) one phase of a node.
    pub fn set_phase(&mut self, node: &str, phase: usize, series: PhaseSeries) {
        self.nodes
            .entry(node.to_string())
            .or_insert_with(NodeSeries::empty)
            .phases[phase] = Some(series);
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_min == 0 {
            return Err(Error::invalid(
                ReasonCode::GridIncompatible,
                format!("{} series has zero step", self.kind.as_str()),
            ));
        }
        for (node, ns) in &self.nodes {
            for (ph, series) in ns.phases.iter().enumerate() {
                let Some(s) = series else { continue };
                let lens = [s.load_kw.len(), s.pv_kw.len()];
                if lens.iter().any(|&l| l != self.len)
                    || s.q_kvar.as_ref().is_some_and(|q| q.len() != self.len)
                {
                    return Err(Error::invalid(
                        ReasonCode::SeriesGap,
                        format!("node {node} phase {} has gaps", phase_label(ph)),
                    ));
                }
                let bad = s
                    .load_kw
                    .iter()
                    .chain(s.pv_kw.iter())
                    .any(|v| !v.is_finite() || *v < 0.0);
                if bad {
                    return Err(Error::invalid(
                        ReasonCode::NegativeSeries,
                        format!(
                            "node {node} phase {} has negative or non-finite load/pv",
                            phase_label(ph)
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path, kind: SeriesKind) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::invalid(
                    ReasonCode::MissingFile,
                    format!("series file {} not found", path.display()),
                )
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_reader(file, kind).map_err(|e| match e {
            Error::Invalid { code, message } => Error::Invalid {
                code,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn from_reader<R: Read>(reader: R, kind: SeriesKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::invalid(ReasonCode::Schema, e.to_string()))?
            .clone();
        let expected = ["timestamp", "node", "phase", "load_kw", "pv_kw"];
        if headers.len() < 5 || headers.iter().take(5).ne(expected.iter().copied()) {
            return Err(Error::invalid(
                ReasonCode::Schema,
                format!("expected header timestamp,node,phase,load_kw,pv_kw[,q_kvar], got {headers:?}"),
            ));
        }
        let has_q = headers.get(5) == Some("q_kvar");

        // (node, phase) -> timestamp -> (load, pv, q)
        type Row = (f64, f64, Option<f64>);
        let mut raw: BTreeMap<(String, usize), BTreeMap<NaiveDateTime, Row>> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(ReasonCode::Schema, e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let ts = NaiveDateTime::parse_from_str(field(0), TIMESTAMP_FORMAT).map_err(|e| {
                Error::invalid(
                    ReasonCode::Schema,
                    format!("row {}: bad timestamp {:?}: {e}", line + 2, field(0)),
                )
            })?;
            let phase = parse_phase(field(2)).ok_or_else(|| {
                Error::invalid(
                    ReasonCode::Schema,
                    format!("row {}: bad phase {:?}", line + 2, field(2)),
                )
            })?;
            let num = |i: usize, name: &str| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| {
                    Error::invalid(
                        ReasonCode::Schema,
                        format!("row {}: bad {name} {:?}", line + 2, field(i)),
                    )
                })
            };
            let load = num(3, "load_kw")?;
            let pv = num(4, "pv_kw")?;
            let q = if has_q { Some(num(5, "q_kvar")?) } else { None };
            let prev = raw
                .entry((field(1).to_string(), phase))
                .or_default()
                .insert(ts, (load, pv, q));
            if prev.is_some() {
                return Err(Error::invalid(
                    ReasonCode::Schema,
                    format!("row {}: duplicate sample for node {} at {ts}", line + 2, field(1)),
                ));
            }
        }
        if raw.is_empty() {
            return Err(Error::invalid(ReasonCode::Schema, "series file has no rows"));
        }

        let mut all_ts: Vec<NaiveDateTime> = raw
            .values()
            .flat_map(|m| m.keys().copied())
            .collect();
        all_ts.sort();
        all_ts.dedup();
        let start = all_ts[0];
        let step = all_ts
            .windows(2)
            .map(|w| (w[1] - w[0]).num_minutes())
            .min()
            .unwrap_or(1);
        if step <= 0 {
            return Err(Error::invalid(ReasonCode::GridIncompatible, "non-positive series step"));
        }
        let end = *all_ts.last().unwrap();
        let span = (end - start).num_minutes();
        if span % step != 0 {
            return Err(Error::invalid(
                ReasonCode::GridIncompatible,
                format!("timestamps are not on a regular {step}-minute grid"),
            ));
        }
        let len = (span / step) as usize + 1;
        let mut frame = TimeSeriesFrame::new(kind, start, step as u32, len);
        for ((node, phase), samples) in raw {
            if samples.len() != len {
                let last = samples.keys().next_back().copied().unwrap_or(start);
                return Err(Error::invalid(
                    ReasonCode::Coverage,
                    format!(
                        "series for node {node} phase {} has {} of {len} samples (last at {})",
                        phase_label(phase),
                        samples.len(),
                        last.format(TIMESTAMP_FORMAT)
                    ),
                ));
            }
            let mut ps = PhaseSeries {
                load_kw: Vec::with_capacity(len),
                pv_kw: Vec::with_capacity(len),
                q_kvar: if has_q { Some(Vec::with_capacity(len)) } else { None },
            };
            for (i, (ts, (l, p, q))) in samples.into_iter().enumerate() {
                if ts != frame.timestamp(i) {
                    return Err(Error::invalid(
                        ReasonCode::SeriesGap,
                        format!("series for node {node} has a gap before {ts}"),
                    ));
                }
                ps.load_kw.push(l);
                ps.pv_kw.push(p);
                if let (Some(qs), Some(q)) = (ps.q_kvar.as_mut(), q) {
                    qs.push(q);
                }
            }
            frame.set_phase(&node, phase, ps);
        }
        frame.validate()?;
        Ok(frame)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(std::io::BufWriter::new(file))
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        let has_q = self
            .nodes
            .values()
            .flat_map(|n| n.phases.iter().flatten())
            .any(|p| p.q_kvar.is_some());
        let io = |e| Error::io("<csv>", e);
        if has_q {
            writeln!(w, "timestamp,node,phase,load_kw,pv_kw,q_kvar").map_err(io)?;
        } else {
            writeln!(w, "timestamp,node,phase,load_kw,pv_kw").map_err(io)?;
        }
        for i in 0..self.len {
            let ts = self.timestamp(i).format(TIMESTAMP_FORMAT).to_string();
            for (node, ns) in &self.nodes {
                for (ph, series) in ns.phases.iter().enumerate() {
                    let Some(s) = series else { continue };
                    write!(
                        w,
                        "{ts},{node},{},{:.6},{:.6}",
                        phase_label(ph),
                        s.load_kw[i],
                        s.pv_kw[i]
                    )
                    .map_err(io)?;
                    if has_q {
                        let q = s.q_kvar.as_ref().map_or(0.0, |q| q[i]);
                        write!(w, ",{q:.6}").map_err(io)?;
                    }
                    writeln!(w).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

pub fn phase_label(phase: usize) -> &'static str {
    ["A", "B", "C"][phase]
}

fn parse_phase(s: &str) -> Option<usize> {
    match s {
        "A" | "a" | "1" => Some(0),
        "B" | "b" | "2" => Some(1),
        "C" | "c" | "3" => Some(2),
        _ => None,
    }
}

/// Mean-downsamples or hold-upsamples a frame onto `target_step` minutes.
pub fn resample(frame: &TimeSeriesFrame, target_step: u32) -> Result<TimeSeriesFrame> {
    let step = frame.step_min;
    if target_step == 0 || step == 0 {
        return Err(Error::invalid(ReasonCode::GridIncompatible, "zero resample step"));
    }
    if target_step == step {
        return Ok(frame.clone());
    }
    let (len, op): (usize, Box<dyn Fn(&[f64]) -> Vec<f64>>) = if target_step > step {
        if target_step % step != 0 {
            return Err(incompatible(step, target_step));
        }
        let factor = (target_step / step) as usize;
        if frame.len % factor != 0 {
            return Err(Error::invalid(
                ReasonCode::GridIncompatible,
                format!(
                    "{} samples of {step} min do not fill whole {target_step}-min intervals",
                    frame.len
                ),
            ));
        }
        (
            frame.len / factor,
            Box::new(move |v: &[f64]| {
                v.chunks(factor)
                    .map(|c| c.iter().sum::<f64>() / factor as f64)
                    .collect()
            }),
        )
    } else {
        if step % target_step != 0 {
            return Err(incompatible(step, target_step));
        }
        let factor = (step / target_step) as usize;
        (
            frame.len * factor,
            Box::new(move |v: &[f64]| {
                v.iter()
                    .flat_map(|x| std::iter::repeat_n(*x, factor))
                    .collect()
            }),
        )
    };
    let mut out = TimeSeriesFrame::new(frame.kind, frame.start, target_step, len);
    for (node, ns) in &frame.nodes {
        let mut dst = NodeSeries::empty();
        for (ph, series) in ns.phases.iter().enumerate() {
            dst.phases[ph] = series.as_ref().map(|s| PhaseSeries {
                load_kw: op(&s.load_kw),
                pv_kw: op(&s.pv_kw),
                q_kvar: s.q_kvar.as_ref().map(|q| op(q)),
            });
        }
        out.nodes.insert(node.clone(), dst);
    }
    Ok(out)
}

fn incompatible(step: u32, target: u32) -> Error {
    Error::invalid(
        ReasonCode::GridIncompatible,
        format!("cannot resample {step}-min series to {target}-min"),
    )
}
