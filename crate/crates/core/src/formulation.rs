//! Network balance, storage, generator and switching constraints shared by
//! the scheduling and dispatch models, plus a replay checker for solved
//! trajectories.

use crate::error::{Error, ReasonCode, Result};
use crate::optim::{add_polygon_ball, LinearModel, MilpSolution, ObjectiveSense, Sense, VarId};
use crate::scenario::{EsRole, GroupProfile, Scenario, PHASES};

/// Sides of the polygon replacing the storage apparent-power disc.
pub const POLYGON_SIDES: usize = 6;

/// Forecast inputs for one optimization window.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub dt_h: f64,
    /// `[group][step][phase]`
    pub load: Vec<Vec<[f64; PHASES]>>,
    pub pv: Vec<Vec<[f64; PHASES]>>,
    pub q: Vec<Vec<[f64; PHASES]>>,
    /// Reserve factor on the grid-forming storage rating, per step.
    pub gamma: Vec<f64>,
    /// Net-load reduction (kW, all phases) applied to each energized group.
    pub correction: Vec<f64>,
}

impl Horizon {
    /// Slices `len` steps of `profile` starting at `start`.
    pub fn from_profile(profile: &GroupProfile, start: usize, len: usize, gamma: Vec<f64>) -> Result<Self> {
        if start + len > profile.len {
            return Err(Error::invalid(
                ReasonCode::HorizonMismatch,
                format!(
                    "window [{start}, {}) exceeds the {}-step forecast",
                    start + len,
                    profile.len
                ),
            ));
        }
        if gamma.len() != len {
            return Err(Error::invalid(
                ReasonCode::HorizonMismatch,
                format!("{} reserve factors for a {len}-step window", gamma.len()),
            ));
        }
        let slice = |v: &Vec<Vec<[f64; PHASES]>>| -> Vec<Vec<[f64; PHASES]>> {
            v.iter().map(|g| g[start..start + len].to_vec()).collect()
        };
        Ok(Horizon {
            dt_h: profile.step_min as f64 / 60.0,
            load: slice(&profile.load),
            pv: slice(&profile.pv),
            q: slice(&profile.q),
            gamma,
            correction: vec![0.0; profile.groups()],
        })
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn groups(&self) -> usize {
        self.load.len()
    }

    pub fn load_total(&self, g: usize, k: usize) -> f64 {
        self.load[g][k].iter().sum()
    }

    /// Net load per phase of group `g` at step `k` once energized, after
    /// the correction.
    pub fn net(&self, g: usize, k: usize) -> [f64; PHASES] {
        let c = self.correction[g] / PHASES as f64;
        let (l, p) = (&self.load[g][k], &self.pv[g][k]);
        [l[0] - p[0] - c, l[1] - p[1] - c, l[2] - p[2] - c]
    }
}

/// State at the start of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub soc: Vec<f64>,
    pub fuel: Vec<f64>,
    pub groups_on: Vec<bool>,
    pub dg_on: Vec<bool>,
    /// Steps each group must still stay energized.
    pub msd_remaining: Vec<usize>,
    /// Steps each generator must still stay on.
    pub min_up_remaining: Vec<usize>,
}

impl InitialConditions {
    /// Everything off, storage and fuel at their configured initial values.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        InitialConditions {
            soc: scenario.es_units.iter().map(|e| e.soc_init).collect(),
            fuel: scenario.dg_units.iter().map(|d| d.fuel_init).collect(),
            groups_on: vec![false; scenario.n_groups()],
            dg_on: vec![false; scenario.dg_units.len()],
            msd_remaining: vec![0; scenario.n_groups()],
            min_up_remaining: vec![0; scenario.dg_units.len()],
        }
    }

    pub fn without_memory(&self) -> Self {
        InitialConditions {
            msd_remaining: vec![0; self.msd_remaining.len()],
            min_up_remaining: vec![0; self.min_up_remaining.len()],
            ..self.clone()
        }
    }

    pub fn has_memory(&self) -> bool {
        self.msd_remaining.iter().any(|r| *r > 0) || self.min_up_remaining.iter().any(|r| *r > 0)
    }
}

/// Minimum service and minimum up durations, in steps of the window grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Commitments {
    pub msd_steps: usize,
    pub min_up_steps: Vec<usize>,
}

impl Commitments {
    pub fn for_step(scenario: &Scenario, step_min: u32) -> Self {
        Commitments {
            msd_steps: scenario.policy.msd_min.div_ceil(step_min) as usize,
            min_up_steps: scenario
                .dg_units
                .iter()
                .map(|d| d.min_up_min.div_ceil(step_min) as usize)
                .collect(),
        }
    }
}

/// Variable handles of a built model.
#[derive(Debug, Clone, PartialEq)]
pub struct VarIndex {
    /// `[group][step]`
    pub x: Vec<Vec<VarId>>,
    /// `[dg][step]`
    pub y: Vec<Vec<VarId>>,
    pub dg_p: Vec<Vec<VarId>>,
    pub dg_q: Vec<Vec<VarId>>,
    pub fuel: Vec<Vec<VarId>>,
    /// Present only when startup costs are modelled.
    pub startup: Vec<Vec<VarId>>,
    /// `[es][step][phase]`
    pub es_p: Vec<Vec<[VarId; PHASES]>>,
    pub es_q: Vec<Vec<[VarId; PHASES]>>,
    pub soc: Vec<Vec<VarId>>,
}

/// Solved setpoints and states over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub groups_on: Vec<Vec<bool>>,
    pub dg_on: Vec<Vec<bool>>,
    pub dg_p: Vec<Vec<f64>>,
    pub dg_q: Vec<Vec<f64>>,
    pub fuel: Vec<Vec<f64>>,
    pub startup_cost: Vec<Vec<f64>>,
    pub es_p: Vec<Vec<[f64; PHASES]>>,
    pub es_q: Vec<Vec<[f64; PHASES]>>,
    pub soc: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.groups_on.first().map_or(0, |g| g.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn es_p_total(&self, e: usize, k: usize) -> f64 {
        self.es_p[e][k].iter().sum()
    }

    pub fn es_q_total(&self, e: usize, k: usize) -> f64 {
        self.es_q[e][k].iter().sum()
    }

    pub fn extract(idx: &VarIndex, sol: &MilpSolution) -> Self {
        let v = |ids: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
            ids.iter().map(|r| r.iter().map(|id| sol.value(*id)).collect()).collect()
        };
        let b = |ids: &Vec<Vec<VarId>>| -> Vec<Vec<bool>> {
            ids.iter().map(|r| r.iter().map(|id| sol.value(*id) > 0.5).collect()).collect()
        };
        let ph = |ids: &Vec<Vec<[VarId; PHASES]>>| -> Vec<Vec<[f64; PHASES]>> {
            ids.iter()
                .map(|r| r.iter().map(|a| a.map(|id| sol.value(id))).collect())
                .collect()
        };
        let len = idx.x.first().map_or(0, |s| s.len());
        Trajectory {
            groups_on: b(&idx.x),
            dg_on: b(&idx.y),
            dg_p: v(&idx.dg_p),
            dg_q: v(&idx.dg_q),
            fuel: v(&idx.fuel),
            startup_cost: if idx.startup.is_empty() {
                vec![vec![0.0; len]; idx.y.len()]
            } else {
                v(&idx.startup)
            },
            es_p: ph(&idx.es_p),
            es_q: ph(&idx.es_q),
            soc: v(&idx.soc),
        }
    }
}

/// Rejects windows that no dispatch could satisfy before any solve.
pub fn check_construction(scenario: &Scenario, horizon: &Horizon, init: &InitialConditions) -> Result<()> {
    let fail = |msg: String| Err(Error::invalid(ReasonCode::InfeasibleByConstruction, msg));
    if init.soc.len() != scenario.es_units.len()
        || init.fuel.len() != scenario.dg_units.len()
        || init.groups_on.len() != scenario.n_groups()
        || init.msd_remaining.len() != scenario.n_groups()
        || init.dg_on.len() != scenario.dg_units.len()
        || init.min_up_remaining.len() != scenario.dg_units.len()
    {
        return Err(Error::invalid(
            ReasonCode::HorizonMismatch,
            "initial conditions do not match the scenario's assets",
        ));
    }
    if horizon.groups() != scenario.n_groups() || horizon.correction.len() != scenario.n_groups() {
        return Err(Error::invalid(
            ReasonCode::HorizonMismatch,
            "forecast window does not match the scenario's load groups",
        ));
    }
    for (e, soc) in scenario.es_units.iter().zip(&init.soc) {
        if *soc < e.soc_min - 1e-9 || *soc > e.soc_max + 1e-9 {
            return fail(format!(
                "storage {} initial SoC {soc:.6} outside [{}, {}]",
                e.name, e.soc_min, e.soc_max
            ));
        }
    }
    for (d, fuel) in scenario.dg_units.iter().zip(&init.fuel) {
        if *fuel < d.fuel_min - 1e-9 || *fuel > d.fuel_max + 1e-9 {
            return fail(format!(
                "generator {} initial fuel {fuel:.3} L outside [{}, {}]",
                d.name, d.fuel_min, d.fuel_max
            ));
        }
    }
    if let Some(g) = horizon.gamma.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return fail(format!("reserve factor {g} outside [0, 1]"));
    }
    Ok(())
}

/// Builds every constraint common to both stages and returns the model with
/// an empty maximization objective.
pub fn build_common(
    scenario: &Scenario,
    horizon: &Horizon,
    init: &InitialConditions,
    commit: &Commitments,
    startup_costs: bool,
) -> Result<(LinearModel, VarIndex)> {
    check_construction(scenario, horizon, init)?;
    let len = horizon.len();
    let ng = scenario.n_groups();
    let dt = horizon.dt_h;
    let mut m = LinearModel::new(ObjectiveSense::Maximize);

    let x: Vec<Vec<VarId>> = (0..ng)
        .map(|g| {
            (0..len)
                .map(|k| {
                    let id = m.add_binary(format!("x_{g}_{k}"));
                    m.set_priority(id, k as u32);
                    if k < init.msd_remaining[g] {
                        m.vars[id.0].lower = 1.0;
                    }
                    id
                })
                .collect()
        })
        .collect();

    let mut idx = VarIndex {
        x,
        y: Vec::new(),
        dg_p: Vec::new(),
        dg_q: Vec::new(),
        fuel: Vec::new(),
        startup: Vec::new(),
        es_p: Vec::new(),
        es_q: Vec::new(),
        soc: Vec::new(),
    };

    for (i, d) in scenario.dg_units.iter().enumerate() {
        let y: Vec<VarId> = (0..len)
            .map(|k| {
                let id = m.add_binary(format!("y_{i}_{k}"));
                m.set_priority(id, k as u32);
                if k < init.min_up_remaining[i] {
                    m.vars[id.0].lower = 1.0;
                }
                id
            })
            .collect();
        let p: Vec<VarId> = (0..len).map(|k| m.add_var(format!("pdg_{i}_{k}"), 0.0, d.p_max())).collect();
        let q: Vec<VarId> = (0..len)
            .map(|k| m.add_var(format!("qdg_{i}_{k}"), 0.0, d.p_max() * d.tan_phi()))
            .collect();
        let f: Vec<VarId> = (0..len)
            .map(|k| m.add_var(format!("fuel_{i}_{k}"), d.fuel_min, d.fuel_max))
            .collect();
        for k in 0..len {
            m.add_constraint(format!("dgmax_{i}_{k}"), [(p[k], 1.0), (y[k], -d.p_max())], Sense::Le, 0.0);
            if d.p_min() > 0.0 {
                m.add_constraint(format!("dgmin_{i}_{k}"), [(p[k], 1.0), (y[k], -d.p_min())], Sense::Ge, 0.0);
            }
            m.add_constraint(format!("dgpf_{i}_{k}"), [(q[k], 1.0), (p[k], -d.tan_phi())], Sense::Eq, 0.0);
            let burn = [(f[k], 1.0), (y[k], d.idle_l_per_h * dt), (p[k], d.l_per_kwh * dt)];
            if k == 0 {
                m.add_constraint(format!("fuel_{i}_{k}"), burn, Sense::Eq, init.fuel[i]);
            } else {
                m.add_constraint(
                    format!("fuel_{i}_{k}"),
                    burn.into_iter().chain([(f[k - 1], -1.0)]),
                    Sense::Eq,
                    0.0,
                );
            }
            // generator runs only while some group is energized
            m.add_constraint(
                format!("dglive_{i}_{k}"),
                std::iter::once((y[k], 1.0)).chain((0..ng).map(|g| (idx.x[g][k], -1.0))),
                Sense::Le,
                0.0,
            );
        }
        add_min_duration(&mut m, &format!("minup_{i}"), &y, init.dg_on[i], commit.min_up_steps[i]);
        if startup_costs {
            let c: Vec<VarId> = (0..len)
                .map(|k| m.add_var(format!("cup_{i}_{k}"), 0.0, f64::INFINITY))
                .collect();
            for k in 0..len {
                let prev = if k == 0 { None } else { Some(y[k - 1]) };
                let mut terms = vec![(c[k], 1.0), (y[k], -d.startup_cost)];
                let mut rhs = 0.0;
                match prev {
                    Some(yp) => terms.push((yp, d.startup_cost)),
                    None => {
                        if init.dg_on[i] {
                            rhs = -d.startup_cost;
                        }
                    }
                }
                m.add_constraint(format!("startup_{i}_{k}"), terms, Sense::Ge, rhs);
            }
            idx.startup.push(c);
        }
        idx.y.push(y);
        idx.dg_p.push(p);
        idx.dg_q.push(q);
        idx.fuel.push(f);
    }

    for (e, es) in scenario.es_units.iter().enumerate() {
        let p: Vec<[VarId; PHASES]> = (0..len)
            .map(|k| std::array::from_fn(|ph| m.add_var(format!("pes_{e}_{k}_{ph}"), -es.kva, es.kva)))
            .collect();
        let q: Vec<[VarId; PHASES]> = (0..len)
            .map(|k| {
                std::array::from_fn(|ph| m.add_var(format!("qes_{e}_{k}_{ph}"), -es.q_max(), es.q_max()))
            })
            .collect();
        let soc: Vec<VarId> = (0..len)
            .map(|k| m.add_var(format!("soc_{e}_{k}"), es.soc_min, es.soc_max))
            .collect();
        let rate = dt / (es.kwh * es.efficiency);
        for k in 0..len {
            let psum: Vec<(VarId, f64)> = p[k].iter().map(|v| (*v, 1.0)).collect();
            let qsum: Vec<(VarId, f64)> = q[k].iter().map(|v| (*v, 1.0)).collect();
            m.add_constraint(format!("esdis_{e}_{k}"), psum.clone(), Sense::Le, es.p_discharge_max());
            m.add_constraint(format!("eschg_{e}_{k}"), psum.clone(), Sense::Ge, -es.p_charge_max());
            m.add_constraint(format!("esqlo_{e}_{k}"), qsum.clone(), Sense::Ge, 0.0);
            m.add_constraint(format!("esqhi_{e}_{k}"), qsum.clone(), Sense::Le, es.q_max());
            let gamma = if es.role == EsRole::GridForming { horizon.gamma[k] } else { 1.0 };
            add_polygon_ball(&mut m, &format!("escap_{e}_{k}"), &psum, &qsum, gamma * es.kva, POLYGON_SIDES)?;
            let dyn_terms = std::iter::once((soc[k], 1.0)).chain(psum.iter().map(|(v, _)| (*v, rate)));
            if k == 0 {
                m.add_constraint(format!("soc_{e}_{k}"), dyn_terms, Sense::Eq, init.soc[e]);
            } else {
                m.add_constraint(
                    format!("soc_{e}_{k}"),
                    dyn_terms.chain([(soc[k - 1], -1.0)]),
                    Sense::Eq,
                    0.0,
                );
            }
        }
        idx.es_p.push(p);
        idx.es_q.push(q);
        idx.soc.push(soc);
    }

    for k in 0..len {
        for ph in 0..PHASES {
            let mut pt: Vec<(VarId, f64)> = Vec::new();
            let mut qt: Vec<(VarId, f64)> = Vec::new();
            for e in 0..idx.es_p.len() {
                pt.push((idx.es_p[e][k][ph], 1.0));
                qt.push((idx.es_q[e][k][ph], 1.0));
            }
            for i in 0..idx.dg_p.len() {
                pt.push((idx.dg_p[i][k], 1.0 / PHASES as f64));
                qt.push((idx.dg_q[i][k], 1.0 / PHASES as f64));
            }
            for g in 0..ng {
                pt.push((idx.x[g][k], -horizon.net(g, k)[ph]));
                qt.push((idx.x[g][k], -horizon.q[g][k][ph]));
            }
            m.add_constraint(format!("pbal_{k}_{ph}"), pt, Sense::Eq, 0.0);
            m.add_constraint(format!("qbal_{k}_{ph}"), qt, Sense::Eq, 0.0);
        }
        for g in 0..ng {
            if let Some(p) = scenario.parent_of(g) {
                m.add_constraint(
                    format!("radial_{g}_{k}"),
                    [(idx.x[g][k], 1.0), (idx.x[p][k], -1.0)],
                    Sense::Le,
                    0.0,
                );
            }
        }
    }
    for g in 0..ng {
        add_min_duration(&mut m, &format!("msd_{g}"), &idx.x[g], init.groups_on[g], commit.msd_steps);
    }
    Ok((m, idx))
}

/// `Σ_{k'=k}^{k+L-1} s_{k'} ≥ L (s_k − s_{k−1})`, with the window truncated
/// at the horizon edge.
fn add_min_duration(m: &mut LinearModel, name: &str, s: &[VarId], prev_on: bool, steps: usize) {
    let len = s.len();
    for k in 0..len {
        let span = steps.min(len - k);
        if span <= 1 {
            continue;
        }
        let l = span as f64;
        let mut terms: Vec<(VarId, f64)> = (k..k + span).map(|j| (s[j], 1.0)).collect();
        terms.push((s[k], -l));
        let rhs = if k == 0 {
            if prev_on {
                -l
            } else {
                0.0
            }
        } else {
            terms.push((s[k - 1], l));
            0.0
        };
        m.add_constraint(format!("{name}_{k}"), terms, Sense::Ge, rhs);
    }
}

/// One broken rule found while replaying a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub step: usize,
    pub amount: f64,
}

/// Replays a trajectory against the model equations; returns every rule
/// broken by more than `tol`.
pub fn replay(
    scenario: &Scenario,
    horizon: &Horizon,
    init: &InitialConditions,
    commit: &Commitments,
    traj: &Trajectory,
    startup_costs: bool,
    tol: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |rule: &'static str, step: usize, amount: f64| {
        if amount > tol {
            out.push(Violation { rule, step, amount });
        }
    };
    let len = horizon.len();
    let ng = scenario.n_groups();
    let dt = horizon.dt_h;
    for k in 0..len {
        for ph in 0..PHASES {
            let mut p = 0.0;
            let mut q = 0.0;
            for e in 0..traj.es_p.len() {
                p += traj.es_p[e][k][ph];
                q += traj.es_q[e][k][ph];
            }
            for i in 0..traj.dg_p.len() {
                p += traj.dg_p[i][k] / PHASES as f64;
                q += traj.dg_q[i][k] / PHASES as f64;
            }
            for g in 0..ng {
                if traj.groups_on[g][k] {
                    p -= horizon.net(g, k)[ph];
                    q -= horizon.q[g][k][ph];
                }
            }
            flag("p_balance", k, p.abs());
            flag("q_balance", k, q.abs());
        }
        for (e, es) in scenario.es_units.iter().enumerate() {
            let (ps, qs) = (traj.es_p_total(e, k), traj.es_q_total(e, k));
            let prev = if k == 0 { init.soc[e] } else { traj.soc[e][k - 1] };
            let rate = dt / (es.kwh * es.efficiency);
            flag("soc_recursion", k, (traj.soc[e][k] - prev + ps * rate).abs());
            flag("soc_bounds", k, (es.soc_min - traj.soc[e][k]).max(traj.soc[e][k] - es.soc_max));
            flag("es_discharge", k, ps - es.p_discharge_max());
            flag("es_charge", k, -es.p_charge_max() - ps);
            flag("es_reactive", k, (-qs).max(qs - es.q_max()));
            let gamma = if es.role == EsRole::GridForming { horizon.gamma[k] } else { 1.0 };
            let faces = crate::optim::polygon_faces(gamma * es.kva, POLYGON_SIDES).expect("valid polygon");
            let worst = faces.iter().map(|h| h.a * ps + h.b * qs - h.c).fold(f64::NEG_INFINITY, f64::max);
            flag("es_capacity", k, worst);
        }
        for (i, d) in scenario.dg_units.iter().enumerate() {
            let on = traj.dg_on[i][k];
            let p = traj.dg_p[i][k];
            let hi = if on { d.p_max() } else { 0.0 };
            let lo = if on { d.p_min() } else { 0.0 };
            flag("dg_limits", k, (p - hi).max(lo - p));
            flag("dg_power_factor", k, (traj.dg_q[i][k] - p * d.tan_phi()).abs());
            let prev = if k == 0 { init.fuel[i] } else { traj.fuel[i][k - 1] };
            let burn = d.burn(on, p, dt);
            flag("fuel_recursion", k, (traj.fuel[i][k] - prev + burn).abs());
            flag("fuel_bounds", k, (d.fuel_min - traj.fuel[i][k]).max(traj.fuel[i][k] - d.fuel_max));
            let prev_on = if k == 0 { init.dg_on[i] } else { traj.dg_on[i][k - 1] };
            if startup_costs {
                let need = d.startup_cost * (on as u8 as f64 - prev_on as u8 as f64);
                flag("startup_cost", k, (need - traj.startup_cost[i][k]).max(-traj.startup_cost[i][k]));
            }
            if on && !(0..ng).any(|g| traj.groups_on[g][k]) {
                flag("dg_without_load", k, 1.0);
            }
        }
        for g in 0..ng {
            if let Some(p) = scenario.parent_of(g) {
                if traj.groups_on[g][k] && !traj.groups_on[p][k] {
                    flag("radiality", k, 1.0);
                }
            }
        }
    }
    for g in 0..ng {
        for k in first_short_runs(&traj.groups_on[g], init.groups_on[g], commit.msd_steps) {
            flag("min_service", k, 1.0);
        }
        for k in 0..init.msd_remaining[g].min(len) {
            if !traj.groups_on[g][k] {
                flag("min_service_memory", k, 1.0);
            }
        }
    }
    for i in 0..scenario.dg_units.len() {
        for k in first_short_runs(&traj.dg_on[i], init.dg_on[i], commit.min_up_steps[i]) {
            flag("min_up", k, 1.0);
        }
        for k in 0..init.min_up_remaining[i].min(len) {
            if !traj.dg_on[i][k] {
                flag("min_up_memory", k, 1.0);
            }
        }
    }
    out
}

/// Steps where a switch-on is followed by an off period sooner than
/// `steps` (runs cut by the horizon edge are fine).
fn first_short_runs(on: &[bool], prev_on: bool, steps: usize) -> Vec<usize> {
    let mut bad = Vec::new();
    let len = on.len();
    for k in 0..len {
        let was = if k == 0 { prev_on } else { on[k - 1] };
        if on[k] && !was {
            let end = (k + steps).min(len);
            if on[k..end].iter().any(|b| !*b) {
                bad.push(k);
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_run_detection() {
        assert!(first_short_runs(&[true, true, false], false, 2).is_empty());
        assert_eq!(first_short_runs(&[true, false, true], false, 2), vec![0]);
        // run cut by the horizon edge is accepted
        assert!(first_short_runs(&[false, false, true], false, 4).is_empty());
        // continuing from an on state is not a switch-on
        assert!(first_short_runs(&[true, false], true, 4).is_empty());
    }
}
