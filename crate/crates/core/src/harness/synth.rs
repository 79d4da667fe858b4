//! Synthetic feeder scenarios: a 5-group replica of the studied feeder with
//! residential load, rooftop PV, a configurable PV over-forecast and random
//! cloud dips; plus flat-profile scenarios for tests.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ReasonCode, Result};
use crate::scenario::{
    DgSpec, EsRole, EsSpec, LoadGroupSpec, PhaseSeries, PolicyConfig, Scenario, SeriesKind,
    SeriesSet, TimeGrids, TimeSeriesFrame, MINUTES_PER_DAY, PHASES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub start: NaiveDateTime,
    pub days: u32,
    /// Feeder peak load, kW.
    pub peak_load_kw: f64,
    /// PV peak as a fraction of the feeder peak load.
    pub pv_penetration: f64,
    /// Relative PV over-forecast; forecasts use (1 + bias) x clear sky.
    pub pv_bias: f64,
    /// Mean cloud dips per day.
    pub cloud_rate_per_day: f64,
    /// Mean fraction of PV removed at the bottom of a dip.
    pub cloud_depth: f64,
    pub cloud_duration_min: u32,
    /// Relative standard deviation of minute-level load noise in the truth.
    pub load_noise: f64,
    /// Constant feeder-wide load over-forecast, kW.
    pub net_bias_kw: f64,
    pub nodes_per_group: usize,
    pub es_kwh: f64,
    pub es_kva: f64,
    pub soc_init: f64,
    pub dg_kw: f64,
    pub fuel_init_l: f64,
    pub fuel_final_l: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            start: NaiveDate::from_ymd_opt(2023, 7, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
            days: 2,
            peak_load_kw: 3500.0,
            pv_penetration: 0.9,
            pv_bias: 0.0,
            cloud_rate_per_day: 0.0,
            cloud_depth: 0.0,
            cloud_duration_min: 20,
            load_noise: 0.0,
            net_bias_kw: 0.0,
            nodes_per_group: 4,
            es_kwh: 8000.0,
            es_kva: 2000.0,
            soc_init: 0.8,
            dg_kw: 4000.0,
            fuel_init_l: 10000.0,
            fuel_final_l: 500.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(ReasonCode::Schema, format!("synthetic spec: {m}")));
        if self.days == 0 {
            return bad("days must be positive");
        }
        if !(self.peak_load_kw > 0.0) {
            return bad("peak_load_kw must be positive");
        }
        if !(0.0..=3.0).contains(&self.pv_penetration) {
            return bad("pv_penetration must be in [0, 3]");
        }
        if !(-0.9..=2.0).contains(&self.pv_bias) {
            return bad("pv_bias must be in [-0.9, 2]");
        }
        if !(self.cloud_rate_per_day >= 0.0) || !(0.0..=1.0).contains(&self.cloud_depth) {
            return bad("cloud rate must be non-negative and depth in [0, 1]");
        }
        if self.cloud_duration_min == 0 {
            return bad("cloud_duration_min must be positive");
        }
        if !(0.0..0.5).contains(&self.load_noise) {
            return bad("load_noise must be in [0, 0.5)");
        }
        if self.nodes_per_group == 0 {
            return bad("nodes_per_group must be positive");
        }
        if !(self.es_kwh > 0.0 && self.es_kva > 0.0 && self.dg_kw > 0.0) {
            return bad("storage and generator ratings must be positive");
        }
        if !(self.fuel_final_l >= 0.0 && self.fuel_final_l <= self.fuel_init_l) {
            return bad("need 0 <= fuel_final_l <= fuel_init_l");
        }
        Ok(())
    }
}

/// Priority weights of the five load groups.
pub const GROUP_WEIGHTS: [f64; 5] = [0.01, 0.4, 0.3, 0.2, 0.01];
/// Share of the feeder peak carried by each group.
const GROUP_SHARES: [f64; 5] = [0.16, 0.24, 0.2, 0.24, 0.16];
/// Critical nodes: (node id, group index, peak kW).
pub const CRITICAL_NODES: [(&str, usize, f64); 3] = [("48", 1, 210.0), ("65", 2, 140.0), ("76", 3, 245.0)];

/// Fraction of daily peak for a residential feeder at `hour` in [0, 24).
fn load_shape(hour: f64) -> f64 {
    let bump = |c: f64, w: f64| (-(hour - c).powi(2) / (2.0 * w * w)).exp();
    0.45 + 0.15 * bump(8.0, 1.5) + 0.55 * bump(19.0, 2.5) + 0.15 * bump(14.0, 3.0)
}

/// Flatter profile for critical facilities.
fn critical_shape(hour: f64) -> f64 {
    0.75 + 0.25 * (-(hour - 14.0).powi(2) / 18.0).exp()
}

/// Clear-sky PV as a fraction of its peak.
fn pv_shape(hour: f64) -> f64 {
    let (rise, set) = (6.5, 19.5);
    if hour <= rise || hour >= set {
        0.0
    } else {
        (std::f64::consts::PI * (hour - rise) / (set - rise)).sin().powf(1.5)
    }
}

struct Node {
    id: String,
    group: usize,
    phases: Vec<usize>,
    peak_kw: f64,
    pv_kw: f64,
    critical: bool,
}

fn table_dg(spec: &SynthSpec) -> DgSpec {
    let pf: f64 = 0.98;
    let kva = spec.dg_kw / pf;
    DgSpec {
        name: "dg".into(),
        kva,
        kva_min: 0.1 * kva,
        pf_angle_rad: pf.acos(),
        fuel_init: spec.fuel_init_l,
        fuel_min: 0.0,
        fuel_max: spec.fuel_init_l.max(10000.0),
        fuel_final: spec.fuel_final_l,
        idle_l_per_h: 84.87,
        l_per_kwh: 0.20,
        startup_cost: 6.0,
        min_up_min: 60,
    }
}

fn table_es(spec: &SynthSpec) -> EsSpec {
    EsSpec {
        name: "mes".into(),
        kva: spec.es_kva,
        kwh: spec.es_kwh,
        soc_min: 0.1,
        soc_max: 0.95,
        soc_init: spec.soc_init,
        efficiency: 0.95,
        role: EsRole::GridForming,
        charge_kw: None,
        q_max_kvar: None,
    }
}

/// Five-group feeder with the configured forecast errors. Deterministic in
/// (`spec`, `seed`).
pub fn generate_synthetic_scenario(spec: &SynthSpec, seed: u64, policy: PolicyConfig) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let minutes = spec.days as usize * MINUTES_PER_DAY as usize;

    // nodes
    let mut nodes: Vec<Node> = Vec::new();
    for (g, share) in GROUP_SHARES.iter().enumerate() {
        let criticals: Vec<_> = CRITICAL_NODES.iter().filter(|c| c.1 == g).collect();
        let crit_kw: f64 = criticals.iter().map(|c| c.2).sum();
        let residential_kw = (share * spec.peak_load_kw - crit_kw).max(0.0);
        let weights: Vec<f64> = (0..spec.nodes_per_group).map(|_| rng.random_range(0.7..1.3)).collect();
        let wsum: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            let peak = residential_kw * w / wsum;
            nodes.push(Node {
                id: format!("g{}n{}", g + 1, j + 1),
                group: g,
                phases: vec![(g + j) % PHASES],
                peak_kw: peak,
                pv_kw: 0.0,
                critical: false,
            });
        }
        for c in criticals {
            nodes.push(Node {
                id: c.0.to_string(),
                group: g,
                phases: (0..PHASES).collect(),
                peak_kw: c.2,
                pv_kw: 0.0,
                critical: true,
            });
        }
    }
    let total_peak: f64 = nodes.iter().map(|n| n.peak_kw).sum();
    let pv_total = spec.pv_penetration * spec.peak_load_kw;
    let pv_weights: Vec<f64> = nodes.iter().map(|n| n.peak_kw * rng.random_range(0.8..1.2)).collect();
    let pv_wsum: f64 = pv_weights.iter().sum();
    for (n, w) in nodes.iter_mut().zip(&pv_weights) {
        n.pv_kw = if pv_wsum > 0.0 { pv_total * w / pv_wsum } else { 0.0 };
    }

    // cloud attenuation of the truth PV, feeder wide
    let mut cloud = vec![1.0f64; minutes];
    if spec.cloud_rate_per_day > 0.0 && spec.cloud_depth > 0.0 {
        let poisson = Poisson::new(spec.cloud_rate_per_day).map_err(|e| Error::Model(e.to_string()))?;
        for day in 0..spec.days as usize {
            let count = poisson.sample(&mut rng) as usize;
            for _ in 0..count {
                let start = day * 1440 + rng.random_range(7 * 60..18 * 60);
                let dur = (spec.cloud_duration_min as f64 * rng.random_range(0.6..1.4)).round().max(2.0) as usize;
                let depth = (spec.cloud_depth * rng.random_range(0.8..1.2)).min(1.0);
                let ramp = (dur / 4).max(1);
                for i in 0..dur {
                    let m = start + i;
                    if m >= minutes {
                        break;
                    }
                    let edge = i.min(dur - 1 - i);
                    let f = if edge < ramp { (edge + 1) as f64 / (ramp + 1) as f64 } else { 1.0 };
                    cloud[m] = cloud[m].min(1.0 - depth * f);
                }
            }
        }
    }

    // per-day load level
    let day_level: Vec<f64> = (0..spec.days).map(|_| rng.random_range(0.95..1.05)).collect();
    let noise = Normal::new(0.0, spec.load_noise.max(1e-300)).map_err(|e| Error::Model(e.to_string()))?;

    let mut truth = TimeSeriesFrame::new(SeriesKind::Truth, spec.start, 1, minutes);
    let s1_len = minutes / 30;
    let s2_len = minutes / 5;
    let mut stage1 = TimeSeriesFrame::new(SeriesKind::Stage1Forecast, spec.start, 30, s1_len);
    let mut stage2 = TimeSeriesFrame::new(SeriesKind::Stage2Forecast, spec.start, 5, s2_len);
    for n in &nodes {
        let nph = n.phases.len() as f64;
        let bias_share = if total_peak > 0.0 { spec.net_bias_kw * n.peak_kw / total_peak } else { 0.0 };
        let mut shape_load = vec![0.0; minutes];
        let mut true_load = vec![0.0; minutes];
        let mut clear_pv = vec![0.0; minutes];
        let mut true_pv = vec![0.0; minutes];
        for m in 0..minutes {
            let hour = (m % 1440) as f64 / 60.0 + 0.5 / 60.0;
            let shape = if n.critical { critical_shape(hour) } else { load_shape(hour) };
            let base = n.peak_kw * shape * day_level[m / 1440] / nph;
            shape_load[m] = base;
            let eps = if spec.load_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            true_load[m] = (base * (1.0 + eps)).max(0.0);
            clear_pv[m] = n.pv_kw * pv_shape(hour) / nph;
            true_pv[m] = clear_pv[m] * cloud[m];
        }
        let mean = |v: &[f64], step: usize, i: usize| v[i * step..(i + 1) * step].iter().sum::<f64>() / step as f64;
        for &ph in &n.phases {
            truth.set_phase(
                &n.id,
                ph,
                PhaseSeries {
                    load_kw: true_load.clone(),
                    pv_kw: true_pv.clone(),
                    q_kvar: None,
                },
            );
            let forecast = |step: usize, len: usize| PhaseSeries {
                load_kw: (0..len).map(|i| mean(&shape_load, step, i) + bias_share / nph).collect(),
                pv_kw: (0..len).map(|i| mean(&clear_pv, step, i) * (1.0 + spec.pv_bias)).collect(),
                q_kvar: None,
            };
            stage1.set_phase(&n.id, ph, forecast(30, s1_len));
            stage2.set_phase(&n.id, ph, forecast(5, s2_len));
        }
    }

    let groups: Vec<LoadGroupSpec> = (0..GROUP_WEIGHTS.len())
        .map(|g| LoadGroupSpec {
            id: g + 1,
            weight: GROUP_WEIGHTS[g],
            switch_weight: None,
            parent: if g == 4 { Some(4) } else { None },
            nodes: nodes.iter().filter(|n| n.group == g).map(|n| n.id.clone()).collect(),
            critical_nodes: nodes
                .iter()
                .filter(|n| n.group == g && n.critical)
                .map(|n| n.id.clone())
                .collect(),
        })
        .collect();
    let grids = TimeGrids::standard(spec.start, spec.start + Duration::minutes(minutes as i64));
    Scenario::new(
        grids,
        groups,
        vec![table_es(spec)],
        vec![table_dg(spec)],
        policy,
        SeriesSet { truth, stage1, stage2 },
    )
}

/// Constant-profile group for small hand-checkable scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGroup {
    pub weight: f64,
    pub parent: Option<usize>,
    pub load_kw_per_phase: f64,
    pub pv_kw_per_phase: f64,
    pub critical: bool,
}

impl FlatGroup {
    pub fn new(weight: f64, load_kw_per_phase: f64) -> Self {
        FlatGroup {
            weight,
            parent: None,
            load_kw_per_phase,
            pv_kw_per_phase: 0.0,
            critical: false,
        }
    }
}

/// Scenario whose truth and forecasts all equal the flat group profiles.
/// Group ids are 1-based in the given order; `parent` indexes that list.
pub fn flat_scenario(
    groups: &[FlatGroup],
    hours: u32,
    es: EsSpec,
    dg: Vec<DgSpec>,
    policy: PolicyConfig,
) -> Result<Scenario> {
    let start = SynthSpec::default().start;
    let minutes = hours as usize * 60;
    let mut frames = [
        TimeSeriesFrame::new(SeriesKind::Truth, start, 1, minutes),
        TimeSeriesFrame::new(SeriesKind::Stage1Forecast, start, 30, minutes / 30),
        TimeSeriesFrame::new(SeriesKind::Stage2Forecast, start, 5, minutes / 5),
    ];
    for (g, fg) in groups.iter().enumerate() {
        for frame in frames.iter_mut() {
            for ph in 0..PHASES {
                frame.set_phase(
                    &format!("n{}", g + 1),
                    ph,
                    PhaseSeries {
                        load_kw: vec![fg.load_kw_per_phase; frame.len],
                        pv_kw: vec![fg.pv_kw_per_phase; frame.len],
                        q_kvar: None,
                    },
                );
            }
        }
    }
    let specs = groups
        .iter()
        .enumerate()
        .map(|(g, fg)| LoadGroupSpec {
            id: g + 1,
            weight: fg.weight,
            switch_weight: None,
            parent: fg.parent.map(|p| p + 1),
            nodes: vec![format!("n{}", g + 1)],
            critical_nodes: if fg.critical { vec![format!("n{}", g + 1)] } else { vec![] },
        })
        .collect();
    let [truth, stage1, stage2] = frames;
    Scenario::new(
        TimeGrids::standard(start, start + Duration::hours(hours as i64)),
        specs,
        vec![es],
        dg,
        policy,
        SeriesSet { truth, stage1, stage2 },
    )
}

/// Storage and generator with the studied feeder's ratings.
pub fn reference_assets() -> (EsSpec, DgSpec) {
    let s = SynthSpec::default();
    (table_es(&s), table_dg(&s))
}
