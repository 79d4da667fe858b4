//! LP relaxations (revised simplex from `microlp`) and a deterministic
//! best-bound branch and bound over the binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::model::{Integrality, LinearModel, ObjectiveSense, Sense};

pub const FEASIBILITY_TOL: f64 = 1e-7;
pub const INTEGRALITY_TOL: f64 = 1e-6;
pub const DEFAULT_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node limit hit or the simplex failed numerically; `values` holds the
    /// incumbent when one exists.
    IterationLimit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub nodes: usize,
    pub lp_solves: usize,
    pub lp_iterations: u64,
    /// Best proven bound in the model's objective sense.
    pub best_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Relative gap between the incumbent and the best bound.
    pub gap: f64,
    pub stats: SolverStats,
}

impl MilpSolution {
    fn without_values(status: SolveStatus, stats: SolverStats) -> Self {
        MilpSolution {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            gap: f64::INFINITY,
            stats,
        }
    }

    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, var: super::VarId) -> f64 {
        self.values[var.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpOptions {
    pub gap: f64,
    pub node_limit: usize,
    /// Run a rounding dive from the root relaxation to seed an incumbent.
    pub dive: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            gap: DEFAULT_GAP,
            node_limit: 100_000,
            dive: true,
        }
    }
}

struct Relaxation {
    problem: Problem,
    vars: Vec<microlp::Variable>,
}

fn build_relaxation(model: &LinearModel) -> Relaxation {
    let direction = match model.sense {
        ObjectiveSense::Maximize => OptimizationDirection::Maximize,
        ObjectiveSense::Minimize => OptimizationDirection::Minimize,
    };
    let mut problem = Problem::new(direction);
    let vars: Vec<_> = model
        .vars
        .iter()
        .zip(&model.objective)
        .map(|(v, c)| problem.add_var(*c, (v.lower, v.upper)))
        .collect();
    for c in &model.constraints {
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Eq => ComparisonOp::Eq,
            Sense::Ge => ComparisonOp::Ge,
        };
        let expr: Vec<(microlp::Variable, f64)> =
            c.terms.iter().map(|(v, x)| (vars[v.0], *x)).collect();
        problem.add_constraint(expr.as_slice(), op, c.rhs);
    }
    Relaxation { problem, vars }
}

enum LpResult {
    Solved(microlp::Solution),
    Infeasible,
    Unbounded,
    Failed(String),
}

fn classify(r: Result<microlp::SolveOutcome, microlp::Error>) -> LpResult {
    match r {
        Ok(outcome) => match outcome.into_solution() {
            Ok(s) => LpResult::Solved(s),
            Err(_) => LpResult::Failed("interrupted".into()),
        },
        Err(microlp::Error::Infeasible) => LpResult::Infeasible,
        Err(microlp::Error::Unbounded) => LpResult::Unbounded,
        Err(e) => LpResult::Failed(e.to_string()),
    }
}

fn extract(sol: &microlp::Solution, vars: &[microlp::Variable]) -> Vec<f64> {
    vars.iter().map(|v| sol.var_value_raw(*v)).collect()
}

/// Solves the LP relaxation of `model` (integrality marks are ignored).
pub fn solve_lp(model: &LinearModel) -> MilpSolution {
    if let Err(e) = model.validate() {
        log::error!("refusing to solve malformed model: {e}");
        return MilpSolution::without_values(SolveStatus::IterationLimit, SolverStats::default());
    }
    let relax = build_relaxation(model);
    let mut stats = SolverStats {
        lp_solves: 1,
        ..SolverStats::default()
    };
    match classify(relax.problem.solve()) {
        LpResult::Solved(sol) => {
            stats.lp_iterations = sol.stats().lp_iterations;
            let values = extract(&sol, &relax.vars);
            let objective = model.objective_value(&values);
            stats.best_bound = objective;
            MilpSolution {
                status: SolveStatus::Optimal,
                objective,
                values,
                gap: 0.0,
                stats,
            }
        }
        LpResult::Infeasible => MilpSolution::without_values(SolveStatus::Infeasible, stats),
        LpResult::Unbounded => MilpSolution::without_values(SolveStatus::Unbounded, stats),
        LpResult::Failed(msg) => {
            log::warn!("lp solve failed: {msg}");
            MilpSolution::without_values(SolveStatus::IterationLimit, stats)
        }
    }
}

/// Convenience wrapper with the default options and the given gap / node limit.
pub fn solve_milp(model: &LinearModel, gap: f64, node_limit: usize) -> MilpSolution {
    solve_milp_with(
        model,
        &MilpOptions {
            gap,
            node_limit,
            ..MilpOptions::default()
        },
    )
}

struct Node {
    /// Parent relaxation value in maximization space.
    bound: f64,
    id: usize,
    parent: Rc<microlp::Solution>,
    var: usize,
    value: f64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    model: &'a LinearModel,
    vars: Vec<microlp::Variable>,
    binaries: Vec<usize>,
    /// +1 for maximization, -1 for minimization.
    sign: f64,
    stats: SolverStats,
    incumbent: Option<(f64, Rc<microlp::Solution>)>,
}

impl Search<'_> {
    fn score(&self, sol: &microlp::Solution) -> f64 {
        self.sign * (sol.objective() + self.model.objective_constant)
    }

    /// Most fractional binary, ties broken by lowest index.
    fn branching_var(&self, sol: &microlp::Solution) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &i in &self.binaries {
            let x = sol.var_value_raw(self.vars[i]);
            let frac = (x - x.floor()).min(x.ceil() - x);
            if frac <= INTEGRALITY_TOL {
                continue;
            }
            let key = (self.model.priority[i], frac);
            if best.is_none_or(|b| key.0 < self.model.priority[b.0] || (key.0 == self.model.priority[b.0] && frac > b.2)) {
                best = Some((i, x, frac));
            }
        }
        best.map(|(i, x, _)| (i, x))
    }

    fn fix(&mut self, parent: &microlp::Solution, var: usize, value: f64) -> LpResult {
        let before = parent.stats().lp_iterations;
        let r = classify(parent.clone().fix_var(self.vars[var], value));
        self.stats.lp_solves += 1;
        if let LpResult::Solved(s) = &r {
            self.stats.lp_iterations += s.stats().lp_iterations.saturating_sub(before);
        }
        r
    }

    fn offer(&mut self, score: f64, sol: Rc<microlp::Solution>) {
        if self.incumbent.as_ref().is_none_or(|(s, _)| score > *s) {
            self.incumbent = Some((score, sol));
        }
    }

    fn tolerance(&self, incumbent: f64, gap: f64) -> f64 {
        gap * incumbent.abs().max(1.0)
    }

    /// Rounds one binary at a time until the relaxation is integral or
    /// both roundings fail. `ordered` takes the lowest priority first;
    /// values at or above `up` round to 1.
    fn dive(&mut self, root: &Rc<microlp::Solution>, ordered: bool, up: f64) {
        let mut cur = Rc::clone(root);
        for _ in 0..2 * self.binaries.len() + 1 {
            let mut pick: Option<(usize, f64, f64)> = None;
            for &i in &self.binaries {
                let x = cur.var_value_raw(self.vars[i]);
                let frac = (x - x.floor()).min(x.ceil() - x);
                if frac <= INTEGRALITY_TOL {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some(p) if ordered => {
                        let (a, b) = (self.model.priority[i], self.model.priority[p.0]);
                        a < b || (a == b && frac < p.2)
                    }
                    Some(p) => frac < p.2,
                };
                if better {
                    pick = Some((i, x, frac));
                }
            }
            let Some((var, x, _)) = pick else {
                let score = self.score(&cur);
                self.offer(score, cur);
                return;
            };
            let first = if x >= up { 1.0 } else { 0.0 };
            let next = match self.fix(&cur, var, first) {
                LpResult::Solved(s) => s,
                _ => match self.fix(&cur, var, 1.0 - first) {
                    LpResult::Solved(s) => s,
                    _ => return,
                },
            };
            cur = Rc::new(next);
        }
    }
}

/// Best-bound branch and bound on the most fractional binary.
pub fn solve_milp_with(model: &LinearModel, opts: &MilpOptions) -> MilpSolution {
    if let Err(e) = model.validate() {
        log::error!("refusing to solve malformed model: {e}");
        return MilpSolution::without_values(SolveStatus::IterationLimit, SolverStats::default());
    }
    if !model.has_binaries() {
        return solve_lp(model);
    }
    let relax = build_relaxation(model);
    let sign = match model.sense {
        ObjectiveSense::Maximize => 1.0,
        ObjectiveSense::Minimize => -1.0,
    };
    let mut search = Search {
        model,
        binaries: model
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integrality == Integrality::Binary)
            .map(|(i, _)| i)
            .collect(),
        vars: relax.vars,
        sign,
        stats: SolverStats::default(),
        incumbent: None,
    };
    search.stats.lp_solves = 1;
    let root = match classify(relax.problem.solve()) {
        LpResult::Solved(s) => s,
        LpResult::Infeasible => {
            return MilpSolution::without_values(SolveStatus::Infeasible, search.stats)
        }
        LpResult::Unbounded => {
            return MilpSolution::without_values(SolveStatus::Unbounded, search.stats)
        }
        LpResult::Failed(msg) => {
            log::warn!("root relaxation failed: {msg}");
            return MilpSolution::without_values(SolveStatus::IterationLimit, search.stats);
        }
    };
    search.stats.lp_iterations = root.stats().lp_iterations;
    let root = Rc::new(root);
    let root_score = search.score(&root);

    // Depth-first plunge until an incumbent exists, then best bound.
    let mut heap = BinaryHeap::new();
    let mut stack: Vec<Node> = Vec::new();
    let mut next_id = 0usize;
    let mut push_children = |stack: &mut Vec<Node>, parent: Rc<microlp::Solution>, bound: f64, var: usize, x: f64| {
        // up branch is explored first
        for value in [x.floor(), x.ceil()] {
            stack.push(Node {
                bound,
                id: next_id,
                parent: Rc::clone(&parent),
                var,
                value,
            });
            next_id += 1;
        }
    };

    search.stats.nodes = 1;
    match search.branching_var(&root) {
        None => search.offer(root_score, Rc::clone(&root)),
        Some((var, x)) => {
            if opts.dive {
                search.dive(&root, false, 0.5);
                for up in [0.5, 0.1] {
                    search.dive(&root, true, up);
                }
            }
            push_children(&mut stack, Rc::clone(&root), root_score, var, x);
        }
    }

    let mut status = SolveStatus::Optimal;
    let mut best_bound = root_score;
    loop {
        if search.incumbent.is_some() && !stack.is_empty() {
            heap.extend(stack.drain(..));
        }
        let open_bound = stack
            .iter()
            .map(|n| n.bound)
            .chain(heap.peek().map(|n| n.bound))
            .fold(f64::NEG_INFINITY, f64::max);
        if stack.is_empty() && heap.is_empty() {
            break;
        }
        best_bound = open_bound;
        if let Some((inc, _)) = &search.incumbent {
            if open_bound <= inc + search.tolerance(*inc, opts.gap) {
                break;
            }
        }
        if search.stats.nodes >= opts.node_limit {
            status = SolveStatus::IterationLimit;
            break;
        }
        let node = match stack.pop() {
            Some(n) => n,
            None => heap.pop().expect("non-empty"),
        };
        search.stats.nodes += 1;
        let sol = match search.fix(&node.parent, node.var, node.value) {
            LpResult::Solved(s) => s,
            LpResult::Infeasible => continue,
            LpResult::Unbounded => continue,
            LpResult::Failed(msg) => {
                log::debug!("node relaxation failed: {msg}");
                continue;
            }
        };
        let score = search.score(&sol);
        if let Some((inc, _)) = &search.incumbent {
            if score <= inc + search.tolerance(*inc, opts.gap) {
                continue;
            }
        }
        let sol = Rc::new(sol);
        match search.branching_var(&sol) {
            None => search.offer(score, sol),
            Some((var, x)) => {
                if search.incumbent.is_some() {
                    let mut tmp = Vec::with_capacity(2);
                    push_children(&mut tmp, sol, score, var, x);
                    heap.extend(tmp);
                } else {
                    push_children(&mut stack, sol, score, var, x);
                }
            }
        }
    }
    if heap.is_empty() && stack.is_empty() {
        best_bound = search.incumbent.as_ref().map_or(best_bound, |(s, _)| *s);
    }

    let Some((inc_score, inc_sol)) = search.incumbent.take() else {
        let st = if status == SolveStatus::IterationLimit {
            SolveStatus::IterationLimit
        } else {
            SolveStatus::Infeasible
        };
        search.stats.best_bound = sign * best_bound;
        return MilpSolution::without_values(st, search.stats);
    };

    // Snap binaries that are integral only within tolerance and re-solve
    // the continuous part against the exact values.
    let mut polished = Rc::try_unwrap(inc_sol).unwrap_or_else(|rc| (*rc).clone());
    for &i in &search.binaries.clone() {
        let x = polished.var_value_raw(search.vars[i]);
        if x != x.round() {
            match search.fix(&polished, i, x.round()) {
                LpResult::Solved(s) => polished = s,
                _ => {
                    log::debug!("polishing binary {} failed; keeping raw incumbent", model.vars[i].name);
                    break;
                }
            }
        }
    }
    let mut values = extract(&polished, &search.vars);
    for &i in &search.binaries {
        values[i] = values[i].round();
    }
    let objective = model.objective_value(&values);
    let best = best_bound.max(inc_score);
    let gap = ((best - inc_score) / inc_score.abs().max(1.0)).max(0.0);
    search.stats.best_bound = sign * best;
    MilpSolution {
        status,
        objective,
        values,
        gap,
        stats: search.stats,
    }
}
