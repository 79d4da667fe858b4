use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrality {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integrality: Integrality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sorted by variable, no duplicates.
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Maximize,
    Minimize,
}

/// A linear (mixed-binary) program in row form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub sense: ObjectiveSense,
    /// Dense objective coefficients, one per variable.
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    /// Branching priority per variable; lower values are branched on first.
    pub priority: Vec<u32>,
}

impl LinearModel {
    pub fn new(sense: ObjectiveSense) -> Self {
        LinearModel {
            vars: Vec::new(),
            constraints: Vec::new(),
            sense,
            objective: Vec::new(),
            objective_constant: 0.0,
            priority: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.push_var(name.into(), lower, upper, Integrality::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.push_var(name.into(), 0.0, 1.0, Integrality::Binary)
    }

    fn push_var(&mut self, name: String, lower: f64, upper: f64, integrality: Integrality) -> VarId {
        self.vars.push(Variable {
            name,
            lower,
            upper,
            integrality,
        });
        self.objective.push(0.0);
        self.priority.push(0);
        VarId(self.vars.len() - 1)
    }

    pub fn set_priority(&mut self, var: VarId, priority: u32) {
        self.priority[var.0] = priority;
    }

    /// Adds to the objective coefficient of `var`.
    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        self.objective[var.0] += coeff;
    }

    /// Adds a row; repeated variables in `terms` are merged and zero
    /// coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut terms: Vec<(VarId, f64)> = terms.into_iter().collect();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.constraints.push(Constraint {
            name: name.into(),
            terms: merged,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integrality == Integrality::Binary)
            .map(|(i, _)| VarId(i))
    }

    pub fn has_binaries(&self) -> bool {
        self.binaries().next().is_some()
    }

    /// The same model with every binary relaxed to `[0, 1]`.
    pub fn relaxed(&self) -> LinearModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.integrality = Integrality::Continuous;
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Model(format!("variable {i} ({}) has bad bounds", v.name)));
            }
            if v.integrality == Integrality::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::Model(format!("binary {} bounds exceed [0, 1]", v.name)));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::Model(format!("constraint {} has non-finite rhs", c.name)));
            }
            for (v, coeff) in &c.terms {
                if v.0 >= self.vars.len() || !coeff.is_finite() {
                    return Err(Error::Model(format!(
                        "constraint {} references an undeclared variable or bad coefficient",
                        c.name
                    )));
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Model("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Largest row or bound violation of `values`, with the offending name.
    pub fn max_violation(&self, values: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        for c in &self.constraints {
            let v = c.violation(values);
            if v > worst.0 {
                worst = (v, c.name.clone());
            }
        }
        for (var, x) in self.vars.iter().zip(values) {
            let v = (var.lower - x).max(x - var.upper).max(0.0);
            if v > worst.0 {
                worst = (v, var.name.clone());
            }
        }
        worst
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    /// Writes the model in CPLEX LP text format for external cross-checks.
    pub fn write_lp<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let name = |i: usize| lp_name(&self.vars[i].name, i);
        let expr = |terms: &mut dyn Iterator<Item = (usize, f64)>| -> String {
            let mut s = String::new();
            for (i, c) in terms {
                if c == 0.0 {
                    continue;
                }
                let sign = if c < 0.0 { "-" } else { "+" };
                s.push_str(&format!(" {sign} {} {}", fmt_num(c.abs()), name(i)));
            }
            if s.is_empty() {
                s.push_str(" 0");
            }
            s
        };
        writeln!(
            w,
            "{}",
            match self.sense {
                ObjectiveSense::Maximize => "Maximize",
                ObjectiveSense::Minimize => "Minimize",
            }
        )?;
        let mut obj = self.objective.iter().copied().enumerate();
        let mut line = format!(" obj:{}", expr(&mut obj));
        if self.objective_constant != 0.0 {
            line.push_str(&format!(" + {} __one", fmt_num(self.objective_constant)));
        }
        writeln!(w, "{line}")?;
        writeln!(w, "Subject To")?;
        for (r, c) in self.constraints.iter().enumerate() {
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let mut terms = c.terms.iter().map(|(v, x)| (v.0, *x));
            writeln!(
                w,
                " {}:{} {op} {}",
                lp_name(&c.name, r),
                expr(&mut terms),
                fmt_num(c.rhs)
            )?;
        }
        writeln!(w, "Bounds")?;
        for (i, v) in self.vars.iter().enumerate() {
            let lo = if v.lower == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                fmt_num(v.lower)
            };
            let hi = if v.upper == f64::INFINITY {
                "+inf".to_string()
            } else {
                fmt_num(v.upper)
            };
            writeln!(w, " {lo} <= {} <= {hi}", name(i))?;
        }
        if self.objective_constant != 0.0 {
            writeln!(w, " __one = 1")?;
        }
        let bins: Vec<String> = self.binaries().map(|v| name(v.0)).collect();
        if !bins.is_empty() {
            writeln!(w, "Binaries")?;
            for b in bins {
                writeln!(w, " {b}")?;
            }
        }
        writeln!(w, "End")
    }
}

fn lp_name(name: &str, idx: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("v{idx}_{cleaned}")
    } else {
        cleaned
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.12}")
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_terms_merge() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let x = m.add_var("x", 0.0, 1.0);
        let y = m.add_var("y", 0.0, 1.0);
        m.add_constraint("c", [(y, 1.0), (x, 2.0), (x, -2.0), (y, 1.5)], Sense::Le, 1.0);
        assert_eq!(m.constraints[0].terms, vec![(y, 2.5)]);
    }

    #[test]
    fn validate_catches_undeclared_vars() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        m.add_var("x", 0.0, 1.0);
        m.constraints.push(Constraint {
            name: "bad".into(),
            terms: vec![(VarId(7), 1.0)],
            sense: Sense::Le,
            rhs: 0.0,
        });
        assert!(m.validate().is_err());
    }

    #[test]
    fn lp_dump_lists_sections() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let x = m.add_var("x[1]", 0.0, f64::INFINITY);
        let b = m.add_binary("on");
        m.add_objective(x, 1.0);
        m.add_constraint("cap", [(x, 1.0), (b, -3.0)], Sense::Le, 0.0);
        let mut buf = Vec::new();
        m.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Maximize\n obj: + 1 x_1_"));
        assert!(text.contains(" cap: + 1 x_1_ - 3 on <= 0"));
        assert!(text.contains("Binaries\n on\nEnd"));
    }
}
