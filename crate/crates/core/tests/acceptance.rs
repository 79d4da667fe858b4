//! Acceptance suite. Runs as a plain binary and prints one PASS/FAIL line
//! per criterion; exits non-zero on any failure not listed in `KNOWN_RED`.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use microgrid_core::formulation::{InitialConditions, Trajectory};
use microgrid_core::harness::synth::{generate_synthetic_scenario, SynthSpec};
use microgrid_core::harness::{compare_cases, export_case_matrix, run_restoration, CaseConfig, Metrics, RunLog};
use microgrid_core::optim::{solve_milp, LinearModel, ObjectiveSense, Sense, SolveStatus};
use microgrid_core::scenario::{EsRole, PolicyConfig, ReserveMode, Scenario, PHASES};
use microgrid_core::stage1::{rolling_window, solve_stage1, Stage1Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBJ_TOL: f64 = 1e-6;
const MILP_BUDGET: Duration = Duration::from_secs(10);
const ESTIMATE_REL_TOL: f64 = 0.01;
const FUEL_TOL_L: f64 = 1e-4;
const DIRECTIONAL_MARGIN_PP: f64 = 2.0;
const BALANCE_TOL_KW: f64 = 1e-6;
const RECURSION_TOL: f64 = 1e-6;
const HEXAGON_TOL_KVA: f64 = 1e-6;
const PLANT_BALANCE_TOL_KW: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-9;
const RUNTIME_BUDGET: Duration = Duration::from_secs(600);
const SEED: u64 = 1;

/// Directional criteria that do not hold on the pinned scenario; their
/// lines still print FAIL.
const KNOWN_RED: &[u8] = &[4];

struct Outcome {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u8, title: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, title, pass, detail }
}

fn synth(spec: &SynthSpec, seed: u64) -> Scenario {
    generate_synthetic_scenario(spec, seed, PolicyConfig::default()).expect("synthetic scenario")
}

// ---------------------------------------------------------------- 1

/// Binary program with one bounded continuous column; integer data.
struct MixedProgram {
    c: Vec<f64>,
    d: f64,
    y_max: f64,
    rows: Vec<(Vec<f64>, f64, f64)>,
}

impl MixedProgram {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=10);
        MixedProgram {
            c: (0..n).map(|_| rng.random_range(-6..=12) as f64).collect(),
            d: rng.random_range(-3..=5) as f64,
            y_max: rng.random_range(1..=8) as f64,
            rows: (0..m)
                .map(|_| {
                    let a = (0..n).map(|_| rng.random_range(-4..=8) as f64).collect();
                    let e = rng.random_range(-3..=3) as f64;
                    let b = rng.random_range(0..=(2 * n as i64 + 4)) as f64;
                    (a, e, b)
                })
                .collect(),
        }
    }

    fn model(&self) -> LinearModel {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let xs: Vec<_> = (0..self.c.len()).map(|i| m.add_binary(format!("x{i}"))).collect();
        let y = m.add_var("y", 0.0, self.y_max);
        for (x, c) in xs.iter().zip(&self.c) {
            m.add_objective(*x, *c);
        }
        m.add_objective(y, self.d);
        for (r, (a, e, b)) in self.rows.iter().enumerate() {
            let mut terms: Vec<_> = xs.iter().zip(a).map(|(x, a)| (*x, *a)).collect();
            terms.push((y, *e));
            m.add_constraint(format!("r{r}"), terms, Sense::Le, *b);
        }
        m
    }

    /// Enumerates the binaries; the continuous column is solved in closed form.
    fn enumerate(&self) -> Option<f64> {
        let n = self.c.len();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
            let (mut lo, mut hi) = (0.0f64, self.y_max);
            let mut ok = true;
            for (a, e, b) in &self.rows {
                let slack = b - a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>();
                if *e > 0.0 {
                    hi = hi.min(slack / e);
                } else if *e < 0.0 {
                    lo = lo.max(slack / e);
                } else if slack < 0.0 {
                    ok = false;
                }
            }
            if !ok || lo > hi + 1e-12 {
                continue;
            }
            let y = if self.d > 0.0 { hi } else { lo };
            let v = self.c.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() + self.d * y;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        best
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start = Instant::now();
    let (mut worst, mut mismatches, mut infeasible) = (0.0f64, 0, 0);
    let count = 60;
    for _ in 0..count {
        let p = MixedProgram::random(&mut rng);
        let sol = solve_milp(&p.model(), 0.0, 1_000_000);
        match p.enumerate() {
            None => {
                infeasible += 1;
                if sol.status != SolveStatus::Infeasible {
                    mismatches += 1;
                }
            }
            Some(best) => {
                let err = if sol.status == SolveStatus::Optimal { (sol.objective - best).abs() } else { f64::INFINITY };
                worst = worst.max(err);
                if err > OBJ_TOL {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        1,
        "MILP kernel matches exhaustive enumeration",
        mismatches == 0 && elapsed < MILP_BUDGET,
        format!("{count} instances ({infeasible} infeasible), max |obj err| {worst:.1e}, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for b in [-200.0, -50.0, 50.0, 200.0] {
        // small feeder, PV below load and no generator: every group stays
        // energized and storage never saturates
        let spec = SynthSpec {
            days: 1,
            peak_load_kw: 1000.0,
            pv_penetration: 0.3,
            net_bias_kw: b,
            es_kwh: 40000.0,
            ..SynthSpec::default()
        };
        let s = synth(&spec, SEED);
        let mut es = s.es_units.clone();
        es[0].efficiency = 1.0;
        let s = Scenario::new(s.grids.clone(), s.groups.clone(), es, vec![], s.policy.clone(), s.series.clone())
            .expect("lossless scenario");
        let log = match run_restoration(&s, &CaseConfig::base()) {
            Ok(l) => l,
            Err(e) => {
                problems.push(format!("b={b}: {e}"));
                continue;
            }
        };
        for r in &log.slots[1..] {
            match r.error_estimate {
                Some(v) => worst = worst.max((v - b).abs() / b.abs()),
                None => problems.push(format!("b={b}: slot {} has no estimate", r.slot)),
            }
        }
    }
    outcome(
        2,
        "SoC-based estimator recovers a constant bias",
        problems.is_empty() && worst <= ESTIMATE_REL_TOL,
        if problems.is_empty() {
            format!("b in {{-200,-50,50,200}} kW, worst relative error {worst:.1e}")
        } else {
            problems.join("; ")
        },
    )
}

// ---------------------------------------------------------------- 3, 8

fn criterion_3(s: &Scenario, log: &RunLog) -> Outcome {
    let spec = SynthSpec::default();
    let midpoint = spec.fuel_init_l - (spec.fuel_init_l - spec.fuel_final_l) / 2.0;
    let mut floor_breaks = 0;
    let mut binding = 0;
    for sc in &log.schedules {
        for (end, target) in sc.end_fuel().iter().zip(&sc.fuel_targets) {
            if *end < target - FUEL_TOL_L {
                floor_breaks += 1;
            }
            if (end - target).abs() <= 1.0 {
                binding += 1;
            }
        }
    }
    let failed = log.slots.iter().filter(|r| r.stage1_status == "failed").count();
    let first = log.schedules.first().filter(|sc| sc.start_slot == 0);
    let boundary_slot = s.grids.slots_per_day();
    let boundary = first
        .filter(|sc| sc.len() == boundary_slot)
        .map(|sc| sc.end_fuel()[0])
        .unwrap_or(f64::NAN);
    let target0 = log.slots.first().map_or(f64::NAN, |r| r.fuel_target);
    let pass = floor_breaks == 0
        && failed == 0
        && (target0 - midpoint).abs() < 1e-9
        && boundary >= midpoint - FUEL_TOL_L;
    outcome(
        3,
        "fuel rationing floor and day-boundary reserve",
        pass,
        format!(
            "{} solves, {floor_breaks} below their floor, {binding} binding; first target {target0:.1} L \
             (expected {midpoint:.1}); scheduled fuel at day boundary {boundary:.3} L",
            log.schedules.len()
        ),
    )
}

fn criterion_8(elapsed: Duration) -> Outcome {
    outcome(
        8,
        "48 h closed loop within the desk-scale budget",
        elapsed < RUNTIME_BUDGET,
        format!("5 groups, 30/5/1 min grids: {elapsed:.1?} (budget {RUNTIME_BUDGET:?})"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> (Outcome, Vec<(Scenario, RunLog)>) {
    let spec = SynthSpec { pv_bias: 0.2, ..SynthSpec::default() };
    let s = synth(&spec, SEED);
    let on = CaseConfig { name: "corrected".into(), ..CaseConfig::case1() };
    let off = CaseConfig { name: "uncorrected".into(), correction: false, ..on.clone() };
    let res = compare_cases(&s, &[on, off]).expect("correction runs");
    let (a, b) = (&res[0].1, &res[1].1);
    let d_load = a.p_load_pct - b.p_load_pct;
    let d_pv = a.p_pv_pct - b.p_pv_pct;
    let out = outcome(
        4,
        "forecast correction under +20% PV over-forecast",
        d_load >= DIRECTIONAL_MARGIN_PP && d_pv >= DIRECTIONAL_MARGIN_PP,
        format!(
            "load served {:.2}% vs {:.2}% ({d_load:+.2} pp), PV used {:.2}% vs {:.2}% ({d_pv:+.2} pp); need +{DIRECTIONAL_MARGIN_PP} pp each",
            a.p_load_pct, b.p_load_pct, a.p_pv_pct, b.p_pv_pct
        ),
    );
    (out, res.into_iter().map(|(l, _)| (s.clone(), l)).collect())
}

// ---------------------------------------------------------------- 5

/// Cloud dips per day deeper than `depth`, read from truth PV against the
/// clear-sky twin of the same scenario.
fn dips_per_day(cloudy: &Scenario, clear: &Scenario, depth: f64) -> Vec<usize> {
    let pv = |s: &Scenario, m: usize| -> f64 {
        let t = &s.profiles().truth;
        (0..s.n_groups()).map(|g| t.pv_total(g, m)).sum()
    };
    let days = cloudy.grids.days();
    let mut counts = vec![0; days];
    let (mut in_dip, mut deepest) = (false, 0.0f64);
    for m in 0..cloudy.grids.rt_steps() {
        let sky = pv(clear, m);
        let att = if sky > 1.0 { 1.0 - pv(cloudy, m) / sky } else { 0.0 };
        if att > 0.05 {
            in_dip = true;
            deepest = deepest.max(att);
        } else if in_dip {
            if deepest >= depth {
                counts[(m - 1) / 1440] += 1;
            }
            in_dip = false;
            deepest = 0.0;
        }
    }
    counts
}

fn criterion_5() -> (Outcome, Vec<(Scenario, RunLog)>) {
    let spec = SynthSpec { cloud_rate_per_day: 12.0, cloud_depth: 0.5, ..SynthSpec::default() };
    let s = synth(&spec, SEED);
    let clear = synth(&SynthSpec { cloud_rate_per_day: 0.0, ..spec.clone() }, SEED);
    let dips = dips_per_day(&s, &clear, 0.3);
    let dynamic = CaseConfig::case3();
    let fixed = |name: &str, gamma: f64| CaseConfig {
        name: name.into(),
        reserve: ReserveMode::Fixed { gamma },
        ..dynamic.clone()
    };
    let res = compare_cases(&s, &[dynamic.clone(), fixed("fixed95", 0.95), fixed("fixed80", 0.8)]).expect("reserve runs");
    let (d, f95, f80): (&Metrics, &Metrics, &Metrics) = (&res[0].1, &res[1].1, &res[2].1);
    let stressed = dips.iter().all(|n| *n >= 6);
    let out = outcome(
        5,
        "dynamic reserve under cloud spikes",
        stressed && d.n_ug_unsch <= f95.n_ug_unsch && d.p_load_pct >= f80.p_load_pct,
        format!(
            "dips/day {dips:?}; unscheduled shutdowns {} vs {} (fixed 0.95); load served {:.2}% vs {:.2}% (fixed 0.8)",
            d.n_ug_unsch, f95.n_ug_unsch, d.p_load_pct, f80.p_load_pct
        ),
    );
    (out, res.into_iter().map(|(l, _)| (s.clone(), l)).collect())
}

// ---------------------------------------------------------------- 6

fn hexagon_contains(radius: f64, p: f64, q: f64) -> bool {
    let v: Vec<(f64, f64)> = (0..6)
        .map(|j| {
            let a = PI / 3.0 * j as f64;
            (radius * a.cos(), radius * a.sin())
        })
        .collect();
    (0..6).all(|j| {
        let (x0, y0) = v[j];
        let (x1, y1) = v[(j + 1) % 6];
        let edge = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        // signed distance to the left of the counter-clockwise edge
        ((x1 - x0) * (q - y0) - (y1 - y0) * (p - x0)) / edge >= -HEXAGON_TOL_KVA
    })
}

/// Switch-ons not followed by `hold` on-steps (runs cut by the window are fine).
fn short_runs(on: &[bool], was_on: bool, hold: usize) -> usize {
    (0..on.len())
        .filter(|&k| {
            let prev = if k == 0 { was_on } else { on[k - 1] };
            on[k] && !prev && on[k..(k + hold).min(on.len())].iter().any(|b| !b)
        })
        .count()
}

fn check_replay(s: &Scenario, inst: &Stage1Instance, t: &Trajectory) -> Vec<String> {
    let h = &inst.horizon;
    let init = &inst.init;
    let mut bad = Vec::new();
    let msd_slots = 4;
    let up_slots = 2;
    for k in 0..t.len() {
        for ph in 0..PHASES {
            let supply_p: f64 = t.es_p.iter().map(|e| e[k][ph]).sum::<f64>() + t.dg_p.iter().map(|d| d[k] / 3.0).sum::<f64>();
            let supply_q: f64 = t.es_q.iter().map(|e| e[k][ph]).sum::<f64>() + t.dg_q.iter().map(|d| d[k] / 3.0).sum::<f64>();
            let (mut dp, mut dq) = (0.0, 0.0);
            for g in 0..s.n_groups() {
                if t.groups_on[g][k] {
                    dp += h.load[g][k][ph] - h.pv[g][k][ph];
                    dq += h.q[g][k][ph];
                }
            }
            if (supply_p - dp).abs() >= BALANCE_TOL_KW || (supply_q - dq).abs() >= BALANCE_TOL_KW {
                bad.push(format!("balance k={k} ph={ph}"));
            }
        }
        for (e, es) in s.es_units.iter().enumerate() {
            let p: f64 = t.es_p[e][k].iter().sum();
            let q: f64 = t.es_q[e][k].iter().sum();
            let prev = if k == 0 { init.soc[e] } else { t.soc[e][k - 1] };
            if (t.soc[e][k] - (prev - p * h.dt_h / (es.kwh * es.efficiency))).abs() > RECURSION_TOL {
                bad.push(format!("soc k={k}"));
            }
            let gamma = if es.role == EsRole::GridForming { h.gamma[k] } else { 1.0 };
            if !hexagon_contains(gamma * es.kva, p, q) {
                bad.push(format!("hexagon k={k} ({p:.1}, {q:.1}) radius {:.1}", gamma * es.kva));
            }
        }
        for (i, d) in s.dg_units.iter().enumerate() {
            let prev = if k == 0 { init.fuel[i] } else { t.fuel[i][k - 1] };
            let burn = if t.dg_on[i][k] { (d.idle_l_per_h + d.l_per_kwh * t.dg_p[i][k]) * h.dt_h } else { 0.0 };
            if (t.fuel[i][k] - (prev - burn)).abs() > RECURSION_TOL {
                bad.push(format!("fuel k={k}"));
            }
        }
        for (g, spec) in s.groups.iter().enumerate() {
            if let Some(pid) = spec.parent {
                let p = s.groups.iter().position(|x| x.id == pid).expect("parent exists");
                if t.groups_on[g][k] && !t.groups_on[p][k] {
                    bad.push(format!("radiality k={k} group {}", spec.id));
                }
            }
        }
    }
    for g in 0..s.n_groups() {
        if short_runs(&t.groups_on[g], init.groups_on[g], msd_slots) > 0 {
            bad.push(format!("service duration group {g}"));
        }
        if t.groups_on[g].iter().take(init.msd_remaining[g]).any(|b| !b) {
            bad.push(format!("service memory group {g}"));
        }
    }
    for i in 0..s.dg_units.len() {
        if short_runs(&t.dg_on[i], init.dg_on[i], up_slots) > 0 {
            bad.push(format!("min up dg {i}"));
        }
        if t.dg_on[i].iter().take(init.min_up_remaining[i]).any(|b| !b) {
            bad.push(format!("min up memory dg {i}"));
        }
    }
    bad
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut checked, mut infeasible, mut attempts) = (0, 0, 0);
    let mut failures: Vec<String> = Vec::new();
    while checked < 100 && attempts < 300 {
        attempts += 1;
        let spec = SynthSpec {
            days: 1,
            peak_load_kw: rng.random_range(500.0..4000.0),
            pv_penetration: rng.random_range(0.0..1.2),
            nodes_per_group: rng.random_range(1..=4),
            es_kwh: rng.random_range(2000.0..10000.0),
            es_kva: rng.random_range(800.0..2500.0),
            soc_init: rng.random_range(0.2..0.9),
            dg_kw: rng.random_range(500.0..4000.0),
            fuel_init_l: rng.random_range(1000.0..10000.0),
            ..SynthSpec::default()
        };
        let s = synth(&spec, rng.random());
        assert_eq!(s.policy.msd_min.div_ceil(s.grids.dt_sched_min), 4);
        assert_eq!(s.dg_units[0].min_up_min.div_ceil(s.grids.dt_sched_min), 2);
        let window = rolling_window(&s.grids, rng.random_range(16..44)).expect("window");
        let n = window.len;
        let mut init = InitialConditions::from_scenario(&s);
        init.groups_on = (0..s.n_groups()).map(|_| rng.random_bool(0.5)).collect();
        init.msd_remaining = init.groups_on.iter().map(|on| if *on { rng.random_range(0..4) } else { 0 }).collect();
        init.dg_on = vec![rng.random_bool(0.5)];
        init.min_up_remaining = vec![if init.dg_on[0] { rng.random_range(0..2) } else { 0 }];
        let fuel_target = rng.random_range(0.0..spec.fuel_init_l);
        let gamma = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
        let inst = Stage1Instance::from_scenario(&s, window, init, vec![fuel_target], gamma).expect("instance");
        match solve_stage1(&s, &inst) {
            Ok(sched) => {
                checked += 1;
                let bad = check_replay(&s, &inst, &sched.traj);
                if !bad.is_empty() {
                    failures.push(format!("scenario {attempts}: {}", bad.join(", ")));
                }
            }
            Err(_) => infeasible += 1,
        }
    }
    outcome(
        6,
        "replayed schedules satisfy every model rule",
        checked == 100 && failures.is_empty(),
        format!(
            "{checked} schedules checked ({infeasible} random draws infeasible), {} violating{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7(runs: &[(Scenario, RunLog)]) -> Outcome {
    let (mut minutes, mut worst, mut out_of_bounds) = (0usize, 0.0f64, 0usize);
    for (s, log) in runs {
        for f in &log.minutes {
            minutes += 1;
            worst = worst.max(f.balance_residual().abs());
            for (e, soc) in s.es_units.iter().zip(&f.soc) {
                if *soc < e.soc_min - BOUND_TOL || *soc > e.soc_max + BOUND_TOL {
                    out_of_bounds += 1;
                }
            }
            for (d, fuel) in s.dg_units.iter().zip(&f.fuel) {
                if *fuel < d.fuel_min - BOUND_TOL || *fuel > d.fuel_max + BOUND_TOL {
                    out_of_bounds += 1;
                }
            }
        }
    }
    outcome(
        7,
        "plant conserves power and respects storage and fuel bounds",
        minutes > 0 && worst < PLANT_BALANCE_TOL_KW && out_of_bounds == 0,
        format!("{} runs, {minutes} minutes, worst residual {worst:.1e} kW, {out_of_bounds} bound exits", runs.len()),
    )
}

// ---------------------------------------------------------------- 9

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let spec = SynthSpec { days: 1, cloud_rate_per_day: 6.0, cloud_depth: 0.4, load_noise: 0.05, pv_bias: 0.1, ..SynthSpec::default() };
    let tmp = tempfile::tempdir().expect("temp dir");
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let s = synth(&spec, 42);
        let res = compare_cases(&s, &CaseConfig::table()).expect("compare");
        export_case_matrix(&s, &res, dir).expect("export");
    }
    let (fa, fb) = (files_under(&dirs[0]), files_under(&dirs[1]));
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| fs::read(dirs[0].join(f)).ok() != fs::read(dirs[1].join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    outcome(
        9,
        "compare reruns produce byte-identical reports",
        fa == fb && !fa.is_empty() && differing.is_empty(),
        format!("{} files per run, {} differing {:?}", fa.len(), differing.len(), differing),
    )
}

fn main() {
    let mut results = vec![criterion_1(), criterion_2()];

    let s = synth(&SynthSpec::default(), SEED);
    let start = Instant::now();
    let log = run_restoration(&s, &CaseConfig::case1()).expect("48 h run");
    let elapsed = start.elapsed();
    results.push(criterion_3(&s, &log));
    results.push(criterion_8(elapsed));

    let mut runs = vec![(s, log)];
    let (c4, r4) = criterion_4();
    let (c5, r5) = criterion_5();
    results.extend([c4, c5]);
    runs.extend(r4);
    runs.extend(r5);
    results.push(criterion_6());
    results.push(criterion_7(&runs));
    results.push(criterion_9());
    results.sort_by_key(|o| o.id);

    let mut unexpected = Vec::new();
    for o in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {}: {}", o.id, o.title, o.detail);
        if !o.pass && !KNOWN_RED.contains(&o.id) {
            unexpected.push(o.id);
        }
        if o.pass && KNOWN_RED.contains(&o.id) {
            println!("  note: criterion {} is listed as known red but passed", o.id);
        }
    }
    let passed = results.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria pass; known red: {KNOWN_RED:?}", results.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
