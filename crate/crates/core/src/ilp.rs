//! Solver-agnostic binary ILP representation: named binary variables, sparse
//! linear constraints, a minimize objective, plus evaluation and LP-format
//! export.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::Write;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl std::fmt::Display for Sense {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Eq => write!(f, "="),
            Sense::Ge => write!(f, ">="),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    /// Sparse (variable, coefficient) terms; one entry per variable.
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A binary minimization model.
#[derive(Debug, Clone, Default)]
pub struct IlpModel {
    pub name: String,
    var_names: Vec<String>,
    by_name: HashMap<String, VarId>,
    pub constraints: Vec<Constraint>,
    /// Sparse minimize objective.
    pub objective: Vec<(VarId, f64)>,
}

impl IlpModel {
    pub fn new(name: impl Into<String>) -> Self {
        IlpModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::DuplicateVariable(name));
        }
        let id = self.var_names.len();
        self.by_name.insert(name.clone(), id);
        self.var_names.push(name);
        Ok(id)
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.var_names[id]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    /// Append a constraint, dropping exact-zero coefficients.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<()> {
        let name = name.into();
        if !rhs.is_finite() {
            return Err(Error::NonFiniteCoefficient(name));
        }
        let mut clean = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            if v >= self.var_names.len() {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            if !c.is_finite() {
                return Err(Error::NonFiniteCoefficient(name));
            }
            if c != 0.0 {
                clean.push((v, c));
            }
        }
        self.constraints.push(Constraint {
            name,
            terms: clean,
            sense,
            rhs,
        });
        Ok(())
    }

    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>) {
        self.objective = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// True when every objective coefficient is an integer; lets the solver
    /// round dual bounds up.
    pub fn objective_is_integral(&self) -> bool {
        self.objective
            .iter()
            .all(|&(_, c)| (c - c.round()).abs() < 1e-12)
    }
}

/// A total 0/1 assignment of the model's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Value per VarId, each 0.0 or 1.0.
    pub values: Vec<f64>,
    pub objective_value: f64,
}

impl Assignment {
    pub fn from_values(model: &IlpModel, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.num_vars() {
            let missing = values.len().min(model.num_vars());
            return Err(Error::PartialAssignment(
                model
                    .var_names
                    .get(missing)
                    .cloned()
                    .unwrap_or_else(|| "<extra values>".into()),
            ));
        }
        let objective_value = model.objective_value(&values);
        Ok(Assignment {
            values,
            objective_value,
        })
    }

    pub fn from_named(model: &IlpModel, named: &HashMap<String, f64>) -> Result<Self> {
        let mut values = vec![0.0; model.num_vars()];
        for (name, v) in named {
            let id = model
                .var_id(name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            values[id] = *v;
        }
        Assignment::from_values(model, values)
    }

    pub fn is_set(&self, id: VarId) -> bool {
        self.values[id] > 0.5
    }
}

/// One violated constraint in a feasibility report.
#[derive(Debug, Clone)]
pub struct Violation {
    pub constraint: String,
    pub lhs: f64,
    pub sense: Sense,
    pub rhs: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} {} {}", self.constraint, self.lhs, self.sense, self.rhs)
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub objective_value: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Evaluate an assignment against every constraint; violations are listed
/// with their attained left-hand side.
pub fn evaluate(model: &IlpModel, assignment: &Assignment) -> Result<FeasibilityReport> {
    if assignment.values.len() != model.num_vars() {
        return Err(Error::PartialAssignment(format!(
            "expected {} values, got {}",
            model.num_vars(),
            assignment.values.len()
        )));
    }
    let mut violations = Vec::new();
    for c in &model.constraints {
        let lhs: f64 = c.terms.iter().map(|&(v, k)| k * assignment.values[v]).sum();
        let violated = match c.sense {
            Sense::Le => lhs > c.rhs + FEASIBILITY_TOL,
            Sense::Ge => lhs < c.rhs - FEASIBILITY_TOL,
            Sense::Eq => (lhs - c.rhs).abs() > FEASIBILITY_TOL,
        };
        if violated {
            violations.push(Violation {
                constraint: c.name.clone(),
                lhs,
                sense: c.sense,
                rhs: c.rhs,
            });
        }
    }
    Ok(FeasibilityReport {
        violations,
        objective_value: model.objective_value(&assignment.values),
    })
}

/// Variable names sanitized to `[A-Za-z0-9_]`, kept unique and in declaration
/// order. The mapping is 1-1 with the model's variables.
pub fn sanitized_names(model: &IlpModel) -> Vec<String> {
    let mut used: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::with_capacity(model.num_vars());
    for raw in model.var_names() {
        let mut s: String = raw
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
            .collect();
        if s.is_empty() || s.as_bytes()[0].is_ascii_digit() {
            s.insert(0, 'v');
        }
        match used.entry(s.clone()) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let n = e.get_mut();
                *n += 1;
                s = format!("{s}_{n}");
                used.insert(s.clone(), 0);
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(0);
            }
        }
        out.push(s);
    }
    out
}

/// Write the model in LP text format (Minimize / Subject To / Binary / End).
pub fn export_lp<W: Write>(model: &IlpModel, mut w: W) -> Result<()> {
    let names = sanitized_names(model);
    writeln!(w, "\\ {}", model.name)?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    if model.objective.is_empty() {
        write!(w, " 0 {}", names.first().map(String::as_str).unwrap_or("x"))?;
    } else {
        for &(v, c) in &model.objective {
            write_term(&mut w, c, &names[v])?;
        }
    }
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for c in &model.constraints {
        write!(w, " {}:", sanitize_token(&c.name))?;
        if c.terms.is_empty() {
            write!(w, " 0 {}", names.first().map(String::as_str).unwrap_or("x"))?;
        }
        for &(v, k) in &c.terms {
            write_term(&mut w, k, &names[v])?;
        }
        writeln!(w, " {} {}", c.sense, fmt_num(c.rhs))?;
    }
    writeln!(w, "Binary")?;
    for name in &names {
        writeln!(w, " {name}")?;
    }
    writeln!(w, "End")?;
    Ok(())
}

/// `export_lp` into a String.
pub fn export_lp_text(model: &IlpModel) -> Result<String> {
    let mut buf = Vec::new();
    export_lp(model, &mut buf)?;
    Ok(String::from_utf8(buf).expect("LP text is ASCII"))
}

fn write_term<W: Write>(w: &mut W, c: f64, name: &str) -> std::io::Result<()> {
    if c < 0.0 {
        write!(w, " - {} {}", fmt_num(-c), name)
    } else {
        write!(w, " + {} {}", fmt_num(c), name)
    }
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn sanitize_token(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if out.is_empty() || out.as_bytes()[0].is_ascii_digit() {
        out.insert(0, 'c');
    }
    out
}
