//! Solver-agnostic mixed-integer linear program representation.
//!
//! Variables carry structured names like `f(o.d.r.xi)` so that a raw
//! solution (name → value) is self-describing. Constraints are stored
//! in insertion order; serialization (see [`crate::solver`]) is therefore
//! deterministic.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MilpError {
    #[error("duplicate variable name {0:?}")]
    DuplicateVariable(String),
    #[error("duplicate constraint name {0:?}")]
    DuplicateConstraint(String),
    #[error("constraint {constraint:?} references undeclared variable {variable:?}")]
    UnknownVariable { constraint: String, variable: String },
    #[error("objective references undeclared variable {0:?}")]
    UnknownObjectiveVariable(String),
    #[error("illegal name {0:?}")]
    BadName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

/// Σ coefficient·variable + constant. Zero-coefficient terms are dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearExpr {
    terms: BTreeMap<String, f64>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(name: &str, coef: f64) -> Self {
        let mut e = Self::new();
        e.add(name, coef);
        e
    }

    /// Accumulate `coef` onto `name`'s coefficient.
    pub fn add(&mut self, name: &str, coef: f64) -> &mut Self {
        let entry = self.terms.entry(name.to_string()).or_insert(0.0);
        *entry += coef;
        if *entry == 0.0 {
            self.terms.remove(name);
        }
        self
    }

    pub fn add_expr(&mut self, other: &LinearExpr, scale: f64) -> &mut Self {
        for (name, &coef) in &other.terms {
            self.add(name, coef * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.terms.iter().map(|(n, &c)| (n.as_str(), c))
    }

    pub fn coefficient(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn evaluate(&self, values: &BTreeMap<String, f64>) -> f64 {
        self.constant + self.terms.iter().map(|(n, c)| c * values.get(n).copied().unwrap_or(0.0)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: LinearExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn satisfied_by(&self, values: &BTreeMap<String, f64>, tol: f64) -> bool {
        let lhs = self.expr.evaluate(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub message: String,
}

/// A minimization MILP. Maximization is expressed by negating at build time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    variables: Vec<Variable>,
    index: BTreeMap<String, usize>,
    constraints: Vec<Constraint>,
    constraint_names: BTreeMap<String, usize>,
    objective: LinearExpr,
}

fn name_ok(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '(' | ')' | '.'))
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(
        &mut self,
        name: &str,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<usize, MilpError> {
        if !name_ok(name) {
            return Err(MilpError::BadName(name.to_string()));
        }
        if self.index.contains_key(name) {
            return Err(MilpError::DuplicateVariable(name.to_string()));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lower, upper),
        };
        let id = self.variables.len();
        self.variables.push(Variable { name: name.to_string(), kind, lower, upper });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adjust bounds of an existing variable (used by the LP reader).
    pub fn set_bounds(&mut self, name: &str, lower: f64, upper: f64) -> Result<(), MilpError> {
        match self.index.get(name) {
            None => Err(MilpError::UnknownObjectiveVariable(name.to_string())),
            Some(&i) => {
                self.variables[i].lower = lower;
                self.variables[i].upper = upper;
                Ok(())
            }
        }
    }

    /// Reclassify an existing variable (used by the LP reader); binaries
    /// snap to [0, 1].
    pub fn set_kind(&mut self, name: &str, kind: VarKind) -> Result<(), MilpError> {
        match self.index.get(name) {
            None => Err(MilpError::UnknownObjectiveVariable(name.to_string())),
            Some(&i) => {
                self.variables[i].kind = kind;
                if kind == VarKind::Binary {
                    self.variables[i].lower = 0.0;
                    self.variables[i].upper = 1.0;
                }
                Ok(())
            }
        }
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.index.get(name).map(|&i| &self.variables[i])
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &LinearExpr {
        &self.objective
    }

    pub fn set_objective(&mut self, expr: LinearExpr) -> Result<(), MilpError> {
        for (name, _) in expr.terms() {
            if !self.index.contains_key(name) {
                return Err(MilpError::UnknownObjectiveVariable(name.to_string()));
            }
        }
        self.objective = expr;
        Ok(())
    }

    /// Store `expr sense rhs` with the expression's constant folded into rhs.
    pub fn add_constraint(
        &mut self,
        name: &str,
        mut expr: LinearExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, MilpError> {
        if !name_ok(name) {
            return Err(MilpError::BadName(name.to_string()));
        }
        if self.constraint_names.contains_key(name) {
            return Err(MilpError::DuplicateConstraint(name.to_string()));
        }
        for (var, _) in expr.terms() {
            if !self.index.contains_key(var) {
                return Err(MilpError::UnknownVariable {
                    constraint: name.to_string(),
                    variable: var.to_string(),
                });
            }
        }
        let rhs = rhs - expr.constant;
        expr.constant = 0.0;
        let id = self.constraints.len();
        self.constraints.push(Constraint { name: name.to_string(), expr, sense, rhs });
        self.constraint_names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_le(&mut self, name: &str, expr: LinearExpr, rhs: f64) -> Result<usize, MilpError> {
        self.add_constraint(name, expr, Sense::Le, rhs)
    }

    pub fn add_ge(&mut self, name: &str, expr: LinearExpr, rhs: f64) -> Result<usize, MilpError> {
        self.add_constraint(name, expr, Sense::Ge, rhs)
    }

    pub fn add_eq(&mut self, name: &str, expr: LinearExpr, rhs: f64) -> Result<usize, MilpError> {
        self.add_constraint(name, expr, Sense::Eq, rhs)
    }

    /// Whether every constraint and bound holds at `values` within `tol`.
    pub fn satisfied_by(&self, values: &BTreeMap<String, f64>, tol: f64) -> bool {
        self.variables.iter().all(|v| {
            let x = values.get(&v.name).copied().unwrap_or(0.0);
            x >= v.lower - tol && x <= v.upper + tol
        }) && self.constraints.iter().all(|c| c.satisfied_by(values, tol))
    }

    /// Structural lint: unused variables, constant infeasible rows, empty objective.
    pub fn validate(&self) -> Vec<Finding> {
        let mut findings = Vec::new();
        let mut used: std::collections::BTreeSet<&str> =
            self.objective.terms().map(|(n, _)| n).collect();
        for c in &self.constraints {
            used.extend(c.expr.terms().map(|(n, _)| n));
        }
        for v in &self.variables {
            if !used.contains(v.name.as_str()) {
                findings.push(Finding { message: format!("unused variable {:?}", v.name) });
            }
        }
        for c in &self.constraints {
            if c.expr.is_empty() {
                let ok = match c.sense {
                    Sense::Le => 0.0 <= c.rhs,
                    Sense::Ge => 0.0 >= c.rhs,
                    Sense::Eq => c.rhs == 0.0,
                };
                if !ok {
                    findings.push(Finding {
                        message: format!("constraint {:?} is trivially infeasible", c.name),
                    });
                }
            }
        }
        if self.objective.is_empty() {
            findings.push(Finding { message: "empty objective".to_string() });
        }
        findings
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_gets_unit_bounds() {
        let mut m = MilpModel::new();
        m.add_variable("x(6)", VarKind::Binary, -5.0, 5.0).unwrap();
        let v = m.variable("x(6)").unwrap();
        assert_eq!((v.lower, v.upper), (0.0, 1.0));
    }

    #[test]
    fn continuous_keeps_bounds() {
        let mut m = MilpModel::new();
        m.add_variable("z(xi1)", VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
        let v = m.variable("z(xi1)").unwrap();
        assert_eq!(v.lower, 0.0);
        assert!(v.upper.is_infinite());
    }

    #[test]
    fn duplicate_variable_rejected() {
        let mut m = MilpModel::new();
        m.add_variable("x(6)", VarKind::Binary, 0.0, 1.0).unwrap();
        assert_eq!(
            m.add_variable("x(6)", VarKind::Binary, 0.0, 1.0),
            Err(MilpError::DuplicateVariable("x(6)".into()))
        );
    }

    #[test]
    fn bad_names_rejected() {
        let mut m = MilpModel::new();
        assert!(m.add_variable("6x", VarKind::Binary, 0.0, 1.0).is_err());
        assert!(m.add_variable("x,y", VarKind::Binary, 0.0, 1.0).is_err());
        assert!(m.add_variable("x y", VarKind::Binary, 0.0, 1.0).is_err());
        assert!(m.add_variable("f(1.2.3.xi4)", VarKind::Continuous, 0.0, 1.0).is_ok());
    }

    #[test]
    fn constraint_requires_declared_variables() {
        let mut m = MilpModel::new();
        let e = LinearExpr::term("ghost", 1.0);
        assert!(matches!(
            m.add_le("c", e, 1.0),
            Err(MilpError::UnknownVariable { .. })
        ));
    }

    #[test]
    fn budget_row_stores_terms() {
        let mut m = MilpModel::new();
        m.add_variable("x(6)", VarKind::Binary, 0.0, 1.0).unwrap();
        m.add_variable("x(8)", VarKind::Binary, 0.0, 1.0).unwrap();
        let mut e = LinearExpr::new();
        e.add("x(6)", 1.0).add("x(8)", 1.0);
        m.add_le("budget", e, 4.0).unwrap();
        assert_eq!(m.constraints()[0].expr.terms().count(), 2);
        assert_eq!(m.constraints()[0].rhs, 4.0);
    }

    #[test]
    fn constant_folds_into_rhs() {
        let mut m = MilpModel::new();
        m.add_variable("a", VarKind::Continuous, 0.0, 1.0).unwrap();
        let mut e = LinearExpr::term("a", 2.0);
        e.constant = 3.0;
        m.add_le("c", e, 5.0).unwrap();
        let c = &m.constraints()[0];
        assert_eq!(c.rhs, 2.0);
        assert_eq!(c.expr.constant, 0.0);
    }

    #[test]
    fn zero_coefficients_cancel() {
        let mut e = LinearExpr::new();
        e.add("a", 1.0).add("a", -1.0);
        assert!(e.is_empty());
    }

    #[test]
    fn constant_only_infeasible_row_flagged() {
        let mut m = MilpModel::new();
        m.add_constraint("bad", LinearExpr::new(), Sense::Le, -1.0).unwrap();
        let f = m.validate();
        assert!(f.iter().any(|f| f.message.contains("trivially infeasible")));
    }

    #[test]
    fn unused_variable_and_empty_objective_flagged() {
        let mut m = MilpModel::new();
        m.add_variable("lam(t.0)", VarKind::Continuous, 0.0, 1.0).unwrap();
        let f = m.validate();
        assert!(f.iter().any(|f| f.message.contains("unused variable")));
        assert!(f.iter().any(|f| f.message.contains("empty objective")));
    }

    #[test]
    fn large_expression_accepted() {
        let mut m = MilpModel::new();
        let mut e = LinearExpr::new();
        for i in 0..100_000 {
            let name = format!("v{i}");
            m.add_variable(&name, VarKind::Continuous, 0.0, 1.0).unwrap();
            e.add(&name, 1.0);
        }
        m.add_le("big", e, 1.0).unwrap();
        assert_eq!(m.constraints()[0].expr.terms().count(), 100_000);
    }

    #[test]
    fn satisfied_by_respects_sense_and_bounds() {
        let mut m = MilpModel::new();
        m.add_variable("a", VarKind::Continuous, 0.0, 2.0).unwrap();
        m.add_ge("floor", LinearExpr::term("a", 1.0), 1.0).unwrap();
        let mut vals = BTreeMap::new();
        vals.insert("a".to_string(), 1.5);
        assert!(m.satisfied_by(&vals, 1e-9));
        vals.insert("a".to_string(), 0.5);
        assert!(!m.satisfied_by(&vals, 1e-9));
        vals.insert("a".to_string(), 3.0);
        assert!(!m.satisfied_by(&vals, 1e-9));
    }

    #[test]
    fn canonicalization_idempotent() {
        let mut a = LinearExpr::new();
        a.add("x", 1.5).add("y", 0.0).add("x", 0.5);
        let b = a.clone();
        assert_eq!(a, b);
        assert_eq!(a.coefficient("x"), 2.0);
        assert_eq!(a.coefficient("y"), 0.0);
    }

    #[test]
    fn evaluate_uses_zero_for_missing() {
        let mut e = LinearExpr::new();
        e.add("x", 2.0);
        e.constant = 1.0;
        let vals: BTreeMap<String, f64> = BTreeMap::new();
        assert_eq!(e.evaluate(&vals), 1.0);
    }
}
