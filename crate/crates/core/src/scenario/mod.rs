//! Domain data model: time grids, load groups, resources, policy and the
//! aggregated load/PV profiles every other module reads from.

mod config;
mod series;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ReasonCode, Result};

pub use config::{load_scenario, ScenarioConfig, SeriesPaths};
pub use series::{
    phase_label, resample, NodeSeries, PhaseSeries, SeriesKind, TimeSeriesFrame, TIMESTAMP_FORMAT,
};

pub const PHASES: usize = 3;
pub const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrids {
    /// Stage-1 scheduling step.
    pub dt_sched_min: u32,
    /// Stage-2 dispatch step.
    pub dt_disp_min: u32,
    /// Plant simulation step.
    pub dt_rt_min: u32,
    /// Stage-1 horizon in slots (24 h on non-final days).
    pub horizon_sched: usize,
    /// Stage-2 horizon in dispatch slots.
    pub horizon_disp: usize,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl TimeGrids {
    /// 30 / 5 / 1 minute grids with a 24 h scheduling and 30 min dispatch horizon.
    pub fn standard(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        TimeGrids {
            dt_sched_min: 30,
            dt_disp_min: 5,
            dt_rt_min: 1,
            horizon_sched: 48,
            horizon_disp: 6,
            start,
            end,
        }
    }

    pub fn duration_min(&self) -> u32 {
        (self.end - self.start).num_minutes().max(0) as u32
    }

    /// Number of restoration days, counting a partial final day.
    pub fn days(&self) -> usize {
        self.duration_min().div_ceil(MINUTES_PER_DAY) as usize
    }

    pub fn sched_slots(&self) -> usize {
        (self.duration_min() / self.dt_sched_min) as usize
    }

    pub fn disp_slots(&self) -> usize {
        (self.duration_min() / self.dt_disp_min) as usize
    }

    pub fn rt_steps(&self) -> usize {
        (self.duration_min() / self.dt_rt_min) as usize
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.dt_sched_min) as usize
    }

    pub fn disp_per_sched(&self) -> usize {
        (self.dt_sched_min / self.dt_disp_min) as usize
    }

    pub fn rt_per_disp(&self) -> usize {
        (self.dt_disp_min / self.dt_rt_min) as usize
    }

    pub fn dt_sched_h(&self) -> f64 {
        self.dt_sched_min as f64 / 60.0
    }

    pub fn dt_disp_h(&self) -> f64 {
        self.dt_disp_min as f64 / 60.0
    }

    pub fn dt_rt_h(&self) -> f64 {
        self.dt_rt_min as f64 / 60.0
    }

    pub fn minute_timestamp(&self, minute: usize) -> NaiveDateTime {
        self.start + Duration::minutes(minute as i64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(ReasonCode::GridIncompatible, msg));
        if self.dt_sched_min == 0 || self.dt_disp_min == 0 || self.dt_rt_min == 0 {
            return bad("grid steps must be positive".into());
        }
        if self.dt_sched_min % self.dt_disp_min != 0 {
            return bad(format!(
                "grids.dt_sched_min {} is not a multiple of grids.dt_disp_min {}",
                self.dt_sched_min, self.dt_disp_min
            ));
        }
        if self.dt_disp_min % self.dt_rt_min != 0 {
            return bad(format!(
                "grids.dt_disp_min {} is not a multiple of grids.dt_rt_min {}",
                self.dt_disp_min, self.dt_rt_min
            ));
        }
        if self.horizon_sched as u64 * self.dt_sched_min as u64 != MINUTES_PER_DAY as u64 {
            return bad(format!(
                "grids.horizon_sched {} x {} min does not span 24 h",
                self.horizon_sched, self.dt_sched_min
            ));
        }
        if self.horizon_disp == 0 {
            return bad("grids.horizon_disp must be positive".into());
        }
        if self.end < self.start {
            return bad("grids.end precedes grids.start".into());
        }
        if self.duration_min() % self.dt_sched_min != 0 {
            return bad(format!(
                "restoration length {} min is not a whole number of {}-min slots",
                self.duration_min(),
                self.dt_sched_min
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadGroupSpec {
    pub id: usize,
    pub weight: f64,
    /// Stage-2 switch-deviation weight; derived from the weight and the
    /// group's peak load when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_weight: Option<f64>,
    /// Upstream group that must be energized for this one to be.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    pub nodes: Vec<String>,
    #[serde(default)]
    pub critical_nodes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsRole {
    GridForming,
    GridFollowing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsSpec {
    pub name: String,
    pub kva: f64,
    pub kwh: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    pub role: EsRole,
    /// Charging power limit; defaults to the kVA rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_kw: Option<f64>,
    /// Reactive injection limit; defaults to the kVA rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max_kvar: Option<f64>,
}

fn default_efficiency() -> f64 {
    0.95
}

impl EsSpec {
    pub fn p_discharge_max(&self) -> f64 {
        self.kva
    }

    pub fn p_charge_max(&self) -> f64 {
        self.charge_kw.unwrap_or(self.kva)
    }

    pub fn q_max(&self) -> f64 {
        self.q_max_kvar.unwrap_or(self.kva)
    }

    /// kW of average power error per unit of SoC error over `dt_h` hours.
    pub fn kappa(&self, dt_h: f64) -> f64 {
        self.kwh * self.efficiency / dt_h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgSpec {
    pub name: String,
    pub kva: f64,
    #[serde(default)]
    pub kva_min: f64,
    /// Power-factor angle of the fixed-PF operating mode.
    pub pf_angle_rad: f64,
    pub fuel_init: f64,
    pub fuel_min: f64,
    pub fuel_max: f64,
    /// Reserve desired at the end of the restoration.
    pub fuel_final: f64,
    /// Idle consumption, L/h while running.
    pub idle_l_per_h: f64,
    /// Proportional consumption, L/kWh.
    pub l_per_kwh: f64,
    pub startup_cost: f64,
    pub min_up_min: u32,
}

impl DgSpec {
    pub fn p_max(&self) -> f64 {
        self.kva * self.pf_angle_rad.cos()
    }

    pub fn p_min(&self) -> f64 {
        self.kva_min * self.pf_angle_rad.cos()
    }

    pub fn tan_phi(&self) -> f64 {
        self.pf_angle_rad.tan()
    }

    /// Litres burned running at `p_kw` for `dt_h` hours.
    pub fn burn(&self, on: bool, p_kw: f64, dt_h: f64) -> f64 {
        if on {
            (self.idle_l_per_h + self.l_per_kwh * p_kw) * dt_h
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReserveMode {
    /// Constant inverter derating factor.
    Fixed { gamma: f64 },
    /// Reserve equal to a fraction of the stage-1 net-load forecast.
    NetloadFraction { fraction: f64 },
    /// Error-driven reserve from the moving-average error predictor.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FuelMode {
    /// Same end-of-window reserve in every stage-1 solve.
    Fixed { target_l: f64 },
    /// Linearly rationed reserve over the restoration days.
    Rationed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub stage1_gap: f64,
    pub stage1_node_limit: usize,
    pub stage2_gap: f64,
    pub stage2_node_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            stage1_gap: 1e-3,
            stage1_node_limit: 400,
            stage2_gap: 1e-4,
            stage2_node_limit: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub reserve: ReserveMode,
    pub correction: bool,
    pub fuel: FuelMode,
    /// Averaging window for the correction factor, stage-1 slots.
    pub correction_window: usize,
    pub ma_order: usize,
    pub ma_fit_window: usize,
    /// Minimum reserve fraction used when the net load tracks its forecast.
    pub min_reserve: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Minimum service duration of an energized load group.
    pub msd_min: u32,
    pub dg_deviation_weight: f64,
    /// Interpolated SoC floor for grid-following storage.
    pub soc_rationing: bool,
    /// Used to derive reactive demand when the series carry none.
    pub load_power_factor: f64,
    pub solver: SolverConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            reserve: ReserveMode::Dynamic,
            correction: true,
            fuel: FuelMode::Rationed,
            correction_window: 10,
            ma_order: 3,
            ma_fit_window: 12,
            min_reserve: 0.05,
            gamma_min: 0.5,
            gamma_max: 0.95,
            msd_min: 120,
            dg_deviation_weight: 1.0,
            soc_rationing: false,
            load_power_factor: 0.95,
            solver: SolverConfig::default(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(ReasonCode::Policy, msg.to_string()));
        if !(0.0 < self.gamma_min && self.gamma_min <= self.gamma_max && self.gamma_max <= 1.0) {
            return bad("policy requires 0 < gamma_min <= gamma_max <= 1");
        }
        if !(0.0..1.0).contains(&self.min_reserve) {
            return bad("policy.min_reserve must be in [0, 1)");
        }
        match self.reserve {
            ReserveMode::Fixed { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                return bad("fixed reserve gamma must be in (0, 1]")
            }
            ReserveMode::NetloadFraction { fraction } if !(0.0..1.0).contains(&fraction) => {
                return bad("netload reserve fraction must be in [0, 1)")
            }
            _ => {}
        }
        if self.correction_window == 0 {
            return bad("policy.correction_window must be positive");
        }
        if self.ma_fit_window < self.ma_order + 2 {
            return bad("policy.ma_fit_window must be at least ma_order + 2");
        }
        if !(self.load_power_factor > 0.0 && self.load_power_factor <= 1.0) {
            return bad("policy.load_power_factor must be in (0, 1]");
        }
        if self.dg_deviation_weight < 0.0 {
            return bad("policy.dg_deviation_weight must be non-negative");
        }
        Ok(())
    }
}

/// Load, PV and reactive demand per group, phase and step on one grid,
/// restricted to the restoration window.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProfile {
    pub step_min: u32,
    pub len: usize,
    /// `[group][step][phase]`
    pub load: Vec<Vec<[f64; PHASES]>>,
    pub pv: Vec<Vec<[f64; PHASES]>>,
    pub q: Vec<Vec<[f64; PHASES]>>,
    /// Load of the group's critical nodes, summed over phases, `[group][step]`.
    pub critical_load: Vec<Vec<f64>>,
}

impl GroupProfile {
    pub fn net(&self, group: usize, i: usize) -> [f64; PHASES] {
        let (l, p) = (&self.load[group][i], &self.pv[group][i]);
        [l[0] - p[0], l[1] - p[1], l[2] - p[2]]
    }

    pub fn load_total(&self, group: usize, i: usize) -> f64 {
        self.load[group][i].iter().sum()
    }

    pub fn pv_total(&self, group: usize, i: usize) -> f64 {
        self.pv[group][i].iter().sum()
    }

    pub fn net_total(&self, group: usize, i: usize) -> f64 {
        self.load_total(group, i) - self.pv_total(group, i)
    }

    pub fn groups(&self) -> usize {
        self.load.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub truth: GroupProfile,
    pub stage1: GroupProfile,
    pub stage2: GroupProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub truth: TimeSeriesFrame,
    pub stage1: TimeSeriesFrame,
    pub stage2: TimeSeriesFrame,
}

/// Immutable, validated description of one restoration study.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grids: TimeGrids,
    pub groups: Vec<LoadGroupSpec>,
    pub es_units: Vec<EsSpec>,
    pub dg_units: Vec<DgSpec>,
    pub policy: PolicyConfig,
    pub series: SeriesSet,
    profiles: Profiles,
    parents: Vec<Option<usize>>,
}

impl Scenario {
    pub fn new(
        grids: TimeGrids,
        groups: Vec<LoadGroupSpec>,
        es_units: Vec<EsSpec>,
        dg_units: Vec<DgSpec>,
        policy: PolicyConfig,
        series: SeriesSet,
    ) -> Result<Self> {
        grids.validate()?;
        policy.validate()?;
        let parents = validate_groups(&groups)?;
        validate_resources(&es_units, &dg_units)?;
        let series = SeriesSet {
            truth: resample(&series.truth, grids.dt_rt_min)?,
            stage1: resample(&series.stage1, grids.dt_sched_min)?,
            stage2: resample(&series.stage2, grids.dt_disp_min)?,
        };
        let pf = policy.load_power_factor;
        let profiles = Profiles {
            truth: build_profile(&series.truth, &grids, &groups, pf)?,
            stage1: build_profile(&series.stage1, &grids, &groups, pf)?,
            stage2: build_profile(&series.stage2, &grids, &groups, pf)?,
        };
        Ok(Scenario {
            grids,
            groups,
            es_units,
            dg_units,
            policy,
            series,
            profiles,
            parents,
        })
    }

    pub fn profiles(&self) -> &Profiles {
        &self.profiles
    }

    /// Same inputs under a different policy.
    pub fn with_policy(&self, policy: PolicyConfig) -> Result<Self> {
        policy.validate()?;
        let mut s = self.clone();
        if s.policy.load_power_factor != policy.load_power_factor {
            s.policy = policy;
            return Scenario::new(
                s.grids,
                s.groups,
                s.es_units,
                s.dg_units,
                s.policy,
                s.series,
            );
        }
        s.policy = policy;
        Ok(s)
    }

    /// Restoration period cut to the first `days` days; longer periods only.
    pub fn truncated(&self, days: u32) -> Result<Self> {
        if days == 0 {
            return Err(Error::invalid(ReasonCode::Schema, "horizon must be at least one day"));
        }
        let end = self.grids.start + Duration::days(days as i64);
        if end >= self.grids.end {
            return Ok(self.clone());
        }
        let grids = TimeGrids { end, ..self.grids.clone() };
        Scenario::new(
            grids,
            self.groups.clone(),
            self.es_units.clone(),
            self.dg_units.clone(),
            self.policy.clone(),
            self.series.clone(),
        )
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Index of the parent group, if any.
    pub fn parent_of(&self, group: usize) -> Option<usize> {
        self.parents[group]
    }

    /// The group and every group downstream of it.
    pub fn subtree(&self, group: usize) -> Vec<usize> {
        let mut out = vec![group];
        let mut i = 0;
        while i < out.len() {
            let g = out[i];
            for (c, p) in self.parents.iter().enumerate() {
                if *p == Some(g) {
                    out.push(c);
                }
            }
            i += 1;
        }
        out.sort_unstable();
        out
    }

    /// Group indices in shedding order: ascending weight, ties by id.
    pub fn shed_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.groups.len()).collect();
        idx.sort_by(|&a, &b| {
            self.groups[a]
                .weight
                .total_cmp(&self.groups[b].weight)
                .then(self.groups[a].id.cmp(&self.groups[b].id))
        });
        idx
    }

    pub fn grid_forming(&self) -> Option<usize> {
        self.es_units
            .iter()
            .position(|e| e.role == EsRole::GridForming)
    }

    /// Stage-2 switch weight: configured value, or weight x peak stage-2
    /// load x 1.001 so that flipping a switch never strictly pays off.
    pub fn switch_weight(&self, group: usize) -> f64 {
        let spec = &self.groups[group];
        spec.switch_weight.unwrap_or_else(|| {
            let p = &self.profiles.stage2;
            let peak = (0..p.len)
                .map(|i| p.load_total(group, i))
                .fold(0.0, f64::max);
            spec.weight * peak * 1.001
        })
    }

    /// (group index, node id) for every critical node.
    pub fn critical_nodes(&self) -> Vec<(usize, String)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, spec)| spec.critical_nodes.iter().map(move |n| (g, n.clone())))
            .collect()
    }
}

fn validate_groups(groups: &[LoadGroupSpec]) -> Result<Vec<Option<usize>>> {
    if groups.is_empty() {
        return Err(Error::invalid(ReasonCode::Schema, "scenario has no load groups"));
    }
    let mut seen_nodes = std::collections::BTreeSet::new();
    for (i, g) in groups.iter().enumerate() {
        if groups[..i].iter().any(|o| o.id == g.id) {
            return Err(Error::invalid(
                ReasonCode::DuplicateId,
                format!("duplicate group id {}", g.id),
            ));
        }
        if !(g.weight > 0.0 && g.weight.is_finite()) {
            return Err(Error::invalid(
                ReasonCode::NonPositiveWeight,
                format!("group {} weight must be positive", g.id),
            ));
        }
        if g.switch_weight.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::invalid(
                ReasonCode::NonPositiveWeight,
                format!("group {} switch_weight must be positive", g.id),
            ));
        }
        for n in &g.nodes {
            if !seen_nodes.insert(n.clone()) {
                return Err(Error::invalid(
                    ReasonCode::DuplicateId,
                    format!("node {n} belongs to more than one group"),
                ));
            }
        }
        for c in &g.critical_nodes {
            if !g.nodes.contains(c) {
                return Err(Error::invalid(
                    ReasonCode::UnknownNode,
                    format!("critical node {c} is not a node of group {}", g.id),
                ));
            }
        }
    }
    let parents: Vec<Option<usize>> = groups
        .iter()
        .map(|g| match g.parent {
            None => Ok(None),
            Some(pid) => groups
                .iter()
                .position(|o| o.id == pid)
                .map(Some)
                .ok_or_else(|| {
                    Error::invalid(
                        ReasonCode::UnknownParent,
                        format!("group {} names unknown parent {pid}", g.id),
                    )
                }),
        })
        .collect::<Result<_>>()?;
    for start in 0..groups.len() {
        let mut cur = parents[start];
        let mut steps = 0;
        while let Some(p) = cur {
            steps += 1;
            if p == start || steps > groups.len() {
                return Err(Error::invalid(
                    ReasonCode::GroupCycle,
                    format!("group {} is its own ancestor", groups[start].id),
                ));
            }
            cur = parents[p];
        }
    }
    Ok(parents)
}

fn validate_resources(es: &[EsSpec], dg: &[DgSpec]) -> Result<()> {
    let gfm = es.iter().filter(|e| e.role == EsRole::GridForming).count();
    if gfm != 1 {
        return Err(Error::invalid(
            ReasonCode::Schema,
            format!("exactly one grid-forming storage unit required, found {gfm}"),
        ));
    }
    for e in es {
        if !(e.kva > 0.0 && e.kwh > 0.0) {
            return Err(Error::invalid(
                ReasonCode::Rating,
                format!("storage {} needs positive kva and kwh", e.name),
            ));
        }
        if !(0.0 <= e.soc_min && e.soc_min < e.soc_max && e.soc_max <= 1.0) {
            return Err(Error::invalid(
                ReasonCode::SocBounds,
                format!("storage {} requires 0 <= soc_min < soc_max <= 1", e.name),
            ));
        }
        if !(e.soc_min..=e.soc_max).contains(&e.soc_init) {
            return Err(Error::invalid(
                ReasonCode::SocBounds,
                format!("storage {} soc_init outside [soc_min, soc_max]", e.name),
            ));
        }
        if !(e.efficiency > 0.0 && e.efficiency <= 1.0) {
            return Err(Error::invalid(
                ReasonCode::Efficiency,
                format!("storage {} efficiency must be in (0, 1]", e.name),
            ));
        }
    }
    for d in dg {
        if !(d.kva > 0.0 && d.kva_min >= 0.0 && d.kva_min <= d.kva) {
            return Err(Error::invalid(
                ReasonCode::Rating,
                format!("generator {} needs 0 <= kva_min <= kva, kva > 0", d.name),
            ));
        }
        if !(d.fuel_min <= d.fuel_init && d.fuel_init <= d.fuel_max) {
            return Err(Error::invalid(
                ReasonCode::FuelBounds,
                format!("generator {} requires fuel_min <= fuel_init <= fuel_max", d.name),
            ));
        }
        if !(d.fuel_min <= d.fuel_final && d.fuel_final <= d.fuel_max) {
            return Err(Error::invalid(
                ReasonCode::FuelBounds,
                format!("generator {} fuel_final outside [fuel_min, fuel_max]", d.name),
            ));
        }
        if d.idle_l_per_h < 0.0 || d.l_per_kwh < 0.0 || d.startup_cost < 0.0 {
            return Err(Error::invalid(
                ReasonCode::FuelCoefficients,
                format!("generator {} has negative fuel or startup coefficients", d.name),
            ));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&d.pf_angle_rad) {
            return Err(Error::invalid(
                ReasonCode::Rating,
                format!("generator {} pf_angle_rad must be in [0, pi/2)", d.name),
            ));
        }
    }
    Ok(())
}

fn build_profile(
    frame: &TimeSeriesFrame,
    grids: &TimeGrids,
    groups: &[LoadGroupSpec],
    load_pf: f64,
) -> Result<GroupProfile> {
    let step = frame.step_min;
    let kind = frame.kind.as_str();
    let offset_min = (grids.start - frame.start).num_minutes();
    if offset_min < 0 || offset_min % step as i64 != 0 {
        return Err(Error::invalid(
            ReasonCode::Coverage,
            format!(
                "{kind} series starts at {} which does not cover restoration start {}",
                frame.start, grids.start
            ),
        ));
    }
    let offset = (offset_min / step as i64) as usize;
    let len = (grids.duration_min() / step) as usize;
    let q_ratio = (1.0 - load_pf * load_pf).sqrt() / load_pf;
    let n = groups.len();
    let mut profile = GroupProfile {
        step_min: step,
        len,
        load: vec![vec![[0.0; PHASES]; len]; n],
        pv: vec![vec![[0.0; PHASES]; len]; n],
        q: vec![vec![[0.0; PHASES]; len]; n],
        critical_load: vec![vec![0.0; len]; n],
    };
    for (g, spec) in groups.iter().enumerate() {
        for node in &spec.nodes {
            let ns = frame.nodes.get(node).ok_or_else(|| {
                Error::invalid(
                    ReasonCode::Coverage,
                    format!("{kind} series has no data for node {node}"),
                )
            })?;
            if offset + len > frame.len {
                return Err(Error::invalid(
                    ReasonCode::Coverage,
                    format!(
                        "{kind} series for node {node} ends at {} before restoration end {}",
                        frame.end(),
                        grids.end
                    ),
                ));
            }
            let critical = spec.critical_nodes.contains(node);
            for (ph, series) in ns.phases.iter().enumerate() {
                let Some(s) = series else { continue };
                for i in 0..len {
                    let j = offset + i;
                    let l = s.load_kw[j];
                    profile.load[g][i][ph] += l;
                    profile.pv[g][i][ph] += s.pv_kw[j];
                    profile.q[g][i][ph] += s.q_kvar.as_ref().map_or(l * q_ratio, |q| q[j]);
                    if critical {
                        profile.critical_load[g][i] += l;
                    }
                }
            }
        }
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t(h: i64) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2023, 7, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            + Duration::hours(h)
    }

    fn frame(kind: SeriesKind, step: u32, hours: i64, load: f64) -> TimeSeriesFrame {
        let len = (hours * 60 / step as i64) as usize;
        let mut f = TimeSeriesFrame::new(kind, t(0), step, len);
        f.set_phase(
            "n1",
            0,
            PhaseSeries {
                load_kw: vec![load; len],
                pv_kw: vec![0.0; len],
                q_kvar: None,
            },
        );
        f
    }

    fn es() -> EsSpec {
        EsSpec {
            name: "mes".into(),
            kva: 2000.0,
            kwh: 8000.0,
            soc_min: 0.1,
            soc_max: 0.95,
            soc_init: 0.9,
            efficiency: 0.95,
            role: EsRole::GridForming,
            charge_kw: None,
            q_max_kvar: None,
        }
    }

    fn group(id: usize, parent: Option<usize>, node: &str) -> LoadGroupSpec {
        LoadGroupSpec {
            id,
            weight: 0.1,
            switch_weight: None,
            parent,
            nodes: vec![node.into()],
            critical_nodes: vec![],
        }
    }

    fn minimal(hours: i64) -> Result<Scenario> {
        Scenario::new(
            TimeGrids::standard(t(0), t(24)),
            vec![group(1, None, "n1")],
            vec![es()],
            vec![],
            PolicyConfig::default(),
            SeriesSet {
                truth: frame(SeriesKind::Truth, 1, hours, 100.0),
                stage1: frame(SeriesKind::Stage1Forecast, 30, hours, 100.0),
                stage2: frame(SeriesKind::Stage2Forecast, 5, hours, 100.0),
            },
        )
    }

    #[test]
    fn minimal_scenario_has_48_slots() {
        let s = minimal(24).unwrap();
        assert_eq!(s.grids.sched_slots(), 48);
        assert_eq!(s.profiles().stage1.len, 48);
        assert_eq!(s.profiles().truth.len, 1440);
        // derived reactive demand at 0.95 pf
        let q = s.profiles().stage1.q[0][0][0];
        assert!((q - 100.0 * (1.0f64 - 0.9025).sqrt() / 0.95).abs() < 1e-9);
    }

    #[test]
    fn truncation_keeps_longer_series() {
        let mut s = minimal(48).unwrap();
        s.grids.end = t(48);
        let s = Scenario::new(s.grids, s.groups, s.es_units, s.dg_units, s.policy, s.series).unwrap();
        assert_eq!(s.grids.days(), 2);
        let one = s.truncated(1).unwrap();
        assert_eq!(one.grids.sched_slots(), 48);
        assert_eq!(one.profiles().truth.len, 1440);
        assert_eq!(s.truncated(5).unwrap().grids.end, t(48));
        assert!(s.truncated(0).is_err());
    }

    #[test]
    fn short_series_is_coverage_error() {
        let err = minimal(20).unwrap_err();
        assert_eq!(err.reason(), Some(ReasonCode::Coverage));
        assert!(err.to_string().contains("n1"));
    }

    #[test]
    fn cycles_and_unknown_parents_rejected() {
        let err = validate_groups(&[group(1, Some(2), "a"), group(2, Some(1), "b")]).unwrap_err();
        assert_eq!(err.reason(), Some(ReasonCode::GroupCycle));
        let err = validate_groups(&[group(1, Some(9), "a")]).unwrap_err();
        assert_eq!(err.reason(), Some(ReasonCode::UnknownParent));
        let parents = validate_groups(&[group(1, None, "a"), group(2, Some(1), "b")]).unwrap();
        assert_eq!(parents, vec![None, Some(0)]);
    }

    #[test]
    fn type_invariants_have_reason_codes() {
        let mut bad = es();
        bad.soc_min = 0.9;
        bad.soc_max = 0.5;
        assert_eq!(
            validate_resources(&[bad], &[]).unwrap_err().reason(),
            Some(ReasonCode::SocBounds)
        );
        let mut bad = es();
        bad.efficiency = 0.0;
        assert_eq!(
            validate_resources(&[bad], &[]).unwrap_err().reason(),
            Some(ReasonCode::Efficiency)
        );
        let mut g = group(1, None, "a");
        g.weight = 0.0;
        assert_eq!(
            validate_groups(&[g]).unwrap_err().reason(),
            Some(ReasonCode::NonPositiveWeight)
        );
        let mut grids = TimeGrids::standard(t(0), t(24));
        grids.dt_disp_min = 7;
        assert_eq!(
            grids.validate().unwrap_err().reason(),
            Some(ReasonCode::GridIncompatible)
        );
    }
}
