//! MPCC instances, the problem file format, and the generic NLP shell that the
//! regularized formulations instantiate.
//!
//! Problem file format (one problem per file, `#` starts a comment):
//!
//! ```text
//! name: p3
//! counts: 1 0 1 1          # optional: n m p q, checked after loading
//! vars:
//!   x0 -inf inf 0          # name lower upper initial
//!   x1 0 inf 1
//!   x2 0 inf 1
//! objective:
//!   (x0-2)^2 + x1^2 + x2^2
//! constraints:
//!   1 <= x0 + x1 - x2 <= 1 # equal limits make an equality
//! pairs:
//!   x1 x2                  # 0 <= x1 _|_ x2 >= 0
//! fpairs:
//!   x0 - 1 ; x0 + 1        # 0 <= G(x) _|_ H(x) >= 0, converted with slacks
//! ```
//!
//! Section headers may carry their content on the same line
//! (`objective: x1 + x2`). Limits accept `inf`, `+inf` and `-inf`.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{parse_expression, EvalError, Expression, Func, ParseError};
use crate::regularize::Scheme;

/// Dense point in the variable space of a problem.
pub type Point = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

/// `lower <= expr <= upper`; `lower == upper` marks an equality.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: Expression,
    pub lower: f64,
    pub upper: f64,
}

impl Constraint {
    pub fn is_equality(&self) -> bool {
        self.lower == self.upper
    }
}

/// A pair of indices `(i, j)` meaning `0 <= x_i _|_ x_j >= 0`.
pub type CompPair = (usize, usize);

/// Function-form complementarity `0 <= g(x) _|_ h(x) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionPair {
    pub g: Expression,
    pub h: Expression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpccProblem {
    pub name: String,
    pub variables: Vec<Variable>,
    pub objective: Expression,
    pub constraints: Vec<Constraint>,
    pub comp_pairs: Vec<CompPair>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Expression {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("count mismatch: declared {declared:?}, found {found:?} (n m p q)")]
    CountMismatch {
        declared: [usize; 4],
        found: [usize; 4],
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Row of the normalized constraint system of an [`MpccProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RowKind {
    /// `c(x) - value = 0`
    Equal(f64),
    /// `c(x) - value >= 0`
    AtLeast(f64),
    /// `value - c(x) >= 0`
    AtMost(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Row {
    pub constraint: usize,
    pub kind: RowKind,
}

/// Where a row of an [`NlpProblem`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RowOrigin {
    Original(Row),
    /// Regularization row for one pair, or for all pairs at once (`None`).
    Regularization { pair: Option<usize> },
    /// `x_variable = 0` fixed by a branch of the enumeration oracle.
    BranchFix { variable: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Provenance {
    Plain,
    Regularized { scheme: Scheme, t: f64 },
    Branch { mask: u64 },
}

/// Smooth NLP: `min f(x)` s.t. `equalities(x) = 0`, `inequalities(x) >= 0`,
/// `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpProblem {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Point,
    pub objective: Expression,
    pub equalities: Vec<Expression>,
    pub inequalities: Vec<Expression>,
    pub eq_origin: Vec<RowOrigin>,
    pub in_origin: Vec<RowOrigin>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub equality: f64,
    pub inequality: f64,
    pub complementarity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.equality.max(self.inequality).max(self.complementarity)
    }
}

impl RowKind {
    /// Residual of the row given the constraint value.
    pub fn residual(&self, c: f64) -> f64 {
        match *self {
            RowKind::Equal(v) | RowKind::AtLeast(v) => c - v,
            RowKind::AtMost(v) => v - c,
        }
    }

    /// Derivative of the residual with respect to the constraint value.
    pub fn sign(&self) -> f64 {
        match self {
            RowKind::AtMost(_) => -1.0,
            _ => 1.0,
        }
    }

    fn to_expression(self, expr: &Expression) -> Expression {
        match self {
            RowKind::Equal(v) | RowKind::AtLeast(v) if v == 0.0 => expr.clone(),
            RowKind::Equal(v) | RowKind::AtLeast(v) => {
                Expression::sub(expr.clone(), Expression::constant(v))
            }
            RowKind::AtMost(v) => Expression::sub(Expression::constant(v), expr.clone()),
        }
    }
}

impl MpccProblem {
    /// Validates the instance and clips the initial point into the bounds.
    pub fn new(
        name: impl Into<String>,
        mut variables: Vec<Variable>,
        objective: Expression,
        constraints: Vec<Constraint>,
        comp_pairs: Vec<CompPair>,
    ) -> Result<Self, ModelError> {
        let nv = variables.len();
        for (i, v) in variables.iter().enumerate() {
            if v.name.is_empty() || Func::from_name(&v.name).is_some() {
                return Err(ModelError::Invalid(format!("bad variable name '{}'", v.name)));
            }
            if variables[..i].iter().any(|w| w.name == v.name) {
                return Err(ModelError::Invalid(format!("duplicate variable '{}'", v.name)));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ModelError::Invalid(format!(
                    "variable '{}' has empty bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if !v.initial.is_finite() {
                return Err(ModelError::Invalid(format!(
                    "variable '{}' has a non-finite initial value",
                    v.name
                )));
            }
        }
        if !objective.references_within(nv) {
            return Err(ModelError::Invalid("objective references an undeclared variable".into()));
        }
        for (k, c) in constraints.iter().enumerate() {
            if !c.expr.references_within(nv) {
                return Err(ModelError::Invalid(format!(
                    "constraint {k} references an undeclared variable"
                )));
            }
            if c.lower.is_nan() || c.upper.is_nan() || c.lower > c.upper {
                return Err(ModelError::Invalid(format!("constraint {k} has empty limits")));
            }
            if c.lower == f64::NEG_INFINITY && c.upper == f64::INFINITY {
                return Err(ModelError::Invalid(format!("constraint {k} has no finite limit")));
            }
            if c.is_equality() && !c.lower.is_finite() {
                return Err(ModelError::Invalid(format!("constraint {k} has infinite equality")));
            }
        }
        let mut seen = vec![false; nv];
        for &(i, j) in &comp_pairs {
            if i >= nv || j >= nv {
                return Err(ModelError::Pairing(format!("pair ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(ModelError::Pairing(format!(
                    "variable '{}' paired with itself",
                    variables[i].name
                )));
            }
            for k in [i, j] {
                if seen[k] {
                    return Err(ModelError::Pairing(format!(
                        "variable '{}' appears in more than one pair",
                        variables[k].name
                    )));
                }
                seen[k] = true;
                if variables[k].lower != 0.0 {
                    return Err(ModelError::Pairing(format!(
                        "paired variable '{}' must have lower bound 0, found {}",
                        variables[k].name, variables[k].lower
                    )));
                }
            }
        }
        for v in &mut variables {
            v.initial = v.initial.clamp(v.lower, v.upper);
        }
        Ok(MpccProblem {
            name: name.into(),
            variables,
            objective,
            constraints,
            comp_pairs,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Number of control variables (those outside every pair).
    pub fn n(&self) -> usize {
        self.variables.len() - 2 * self.comp_pairs.len()
    }

    /// Number of general inequality constraints (a two-sided one counts once).
    pub fn m(&self) -> usize {
        self.constraints.iter().filter(|c| !c.is_equality()).count()
    }

    pub fn p(&self) -> usize {
        self.constraints.iter().filter(|c| c.is_equality()).count()
    }

    pub fn q(&self) -> usize {
        self.comp_pairs.len()
    }

    pub fn counts(&self) -> [usize; 4] {
        [self.n(), self.m(), self.p(), self.q()]
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn initial_point(&self) -> Point {
        self.variables.iter().map(|v| v.initial).collect()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.lower).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.upper).collect()
    }

    /// Indices of variables that belong to no pair.
    pub fn control_indices(&self) -> Vec<usize> {
        let mut paired = vec![false; self.num_vars()];
        for &(i, j) in &self.comp_pairs {
            paired[i] = true;
            paired[j] = true;
        }
        (0..self.num_vars()).filter(|&i| !paired[i]).collect()
    }

    pub fn equality_rows(&self) -> Vec<Row> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_equality())
            .map(|(k, c)| Row {
                constraint: k,
                kind: RowKind::Equal(c.lower),
            })
            .collect()
    }

    /// One-sided `>= 0` rows; two-sided constraints contribute two rows.
    pub fn inequality_rows(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for (k, c) in self.constraints.iter().enumerate() {
            if c.is_equality() {
                continue;
            }
            if c.lower.is_finite() {
                rows.push(Row {
                    constraint: k,
                    kind: RowKind::AtLeast(c.lower),
                });
            }
            if c.upper.is_finite() {
                rows.push(Row {
                    constraint: k,
                    kind: RowKind::AtMost(c.upper),
                });
            }
        }
        rows
    }

    /// Residual value and gradient of one normalized row.
    pub fn row_eval_grad(&self, row: &Row, x: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
        let (c, mut g) = self.constraints[row.constraint].expr.eval_grad(x)?;
        let s = row.kind.sign();
        if s < 0.0 {
            g.iter_mut().for_each(|v| *v = -*v);
        }
        Ok((row.kind.residual(c), g))
    }

    /// NLP with the original constraints and bounds only; the caller appends
    /// the rows that stand in for complementarity.
    pub fn base_nlp(&self, provenance: Provenance) -> NlpProblem {
        let eq_rows = self.equality_rows();
        let in_rows = self.inequality_rows();
        let row_expr = |r: &Row| r.kind.to_expression(&self.constraints[r.constraint].expr);
        let mut lower = self.lower_bounds();
        for &(i, j) in &self.comp_pairs {
            lower[i] = lower[i].max(0.0);
            lower[j] = lower[j].max(0.0);
        }
        NlpProblem {
            names: self.names(),
            lower,
            upper: self.upper_bounds(),
            initial: self.initial_point(),
            objective: self.objective.clone(),
            equalities: eq_rows.iter().map(row_expr).collect(),
            inequalities: in_rows.iter().map(row_expr).collect(),
            eq_origin: eq_rows.into_iter().map(RowOrigin::Original).collect(),
            in_origin: in_rows.into_iter().map(RowOrigin::Original).collect(),
            provenance,
        }
    }
}

impl NlpProblem {
    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn push_equality(&mut self, expr: Expression, origin: RowOrigin) {
        self.equalities.push(expr);
        self.eq_origin.push(origin);
    }

    pub fn push_inequality(&mut self, expr: Expression, origin: RowOrigin) {
        self.inequalities.push(expr);
        self.in_origin.push(origin);
    }

    /// Largest violation over equalities, inequalities and simple bounds.
    pub fn max_violation(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut worst: f64 = 0.0;
        for e in &self.equalities {
            worst = worst.max(e.eval(x)?.abs());
        }
        for e in &self.inequalities {
            worst = worst.max(-e.eval(x)?);
        }
        for (i, &xi) in x.iter().enumerate() {
            worst = worst.max(self.lower[i] - xi).max(xi - self.upper[i]);
        }
        Ok(worst)
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> Result<bool, EvalError> {
        Ok(self.max_violation(x)? <= tol)
    }

    /// Projects a point onto the simple bounds.
    pub fn clip(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Equality, inequality/bound, and complementarity violation of `x`.
pub fn residuals(problem: &MpccProblem, x: &[f64]) -> Result<Residuals, EvalError> {
    let mut eq: f64 = 0.0;
    let mut ineq: f64 = 0.0;
    for c in &problem.constraints {
        let v = c.expr.eval(x)?;
        if c.is_equality() {
            eq = eq.max((v - c.lower).abs());
        } else {
            ineq = ineq.max(c.lower - v).max(v - c.upper);
        }
    }
    for (v, &xi) in problem.variables.iter().zip(x) {
        ineq = ineq.max(v.lower - xi).max(xi - v.upper);
    }
    let comp = problem
        .comp_pairs
        .iter()
        .map(|&(i, j)| x[i].max(0.0).min(x[j].max(0.0)))
        .fold(0.0, f64::max);
    Ok(Residuals {
        equality: eq,
        inequality: ineq,
        complementarity: comp,
    })
}

/// Rewrites `0 <= G_k(x) _|_ H_k(x) >= 0` with slacks `s1_k = G_k(x)`,
/// `s2_k = H_k(x)` and the variable pair `(s1_k, s2_k)`.
pub fn introduce_slacks(
    problem: MpccProblem,
    pairs: &[FunctionPair],
) -> Result<MpccProblem, ModelError> {
    if pairs.is_empty() {
        return Ok(problem);
    }
    let MpccProblem {
        name,
        mut variables,
        objective,
        mut constraints,
        mut comp_pairs,
    } = problem;
    let x0: Point = variables.iter().map(|v| v.initial).collect();
    let fresh = |variables: &[Variable], base: String| {
        let mut name = base;
        while variables.iter().any(|v| v.name == name) {
            name.push('_');
        }
        name
    };
    for (k, pair) in pairs.iter().enumerate() {
        let mut slot = [0usize; 2];
        for (side, expr) in [&pair.g, &pair.h].into_iter().enumerate() {
            let index = variables.len();
            let start = expr.eval(&x0).map(|v| v.max(0.0)).unwrap_or(0.0);
            let name = fresh(&variables, format!("s{}_{}", side + 1, k + 1));
            variables.push(Variable {
                name,
                lower: 0.0,
                upper: f64::INFINITY,
                initial: start,
            });
            constraints.push(Constraint {
                expr: Expression::sub(expr.clone(), Expression::var(index)),
                lower: 0.0,
                upper: 0.0,
            });
            slot[side] = index;
        }
        comp_pairs.push((slot[0], slot[1]));
    }
    MpccProblem::new(name, variables, objective, constraints, comp_pairs)
}

// ---------------------------------------------------------------------------
// Problem file parsing

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    None,
    Vars,
    Objective,
    Constraints,
    Pairs,
    FPairs,
}

fn parse_limit(s: &str, line: usize) -> Result<f64, ModelError> {
    match s.trim() {
        "inf" | "+inf" | "Inf" | "+Inf" => Ok(f64::INFINITY),
        "-inf" | "-Inf" => Ok(f64::NEG_INFINITY),
        t => t.parse::<f64>().map_err(|_| ModelError::Syntax {
            line,
            message: format!("expected a number, found '{t}'"),
        }),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(k) => &line[..k],
        None => line,
    }
}

/// Parses one problem file, applying [`introduce_slacks`] to any `fpairs`.
pub fn load_problem(file_text: &str) -> Result<MpccProblem, ModelError> {
    let mut name: Option<String> = None;
    let mut declared: Option<[usize; 4]> = None;
    let mut var_lines: Vec<(usize, String)> = Vec::new();
    let mut objective_lines: Vec<(usize, String)> = Vec::new();
    let mut constraint_lines: Vec<(usize, String)> = Vec::new();
    let mut pair_lines: Vec<(usize, String)> = Vec::new();
    let mut fpair_lines: Vec<(usize, String)> = Vec::new();

    let mut section = Section::None;
    for (idx, raw) in file_text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let header = line.split_once(':').and_then(|(key, rest)| {
            let key = key.trim();
            let known = matches!(
                key,
                "name" | "counts" | "vars" | "objective" | "constraints" | "pairs" | "fpairs"
            );
            known.then(|| (key.to_string(), rest.trim().to_string()))
        });
        if let Some((key, rest)) = header {
            section = match key.as_str() {
                "name" => {
                    if rest.is_empty() {
                        return Err(ModelError::Syntax {
                            line: line_no,
                            message: "empty name".into(),
                        });
                    }
                    name = Some(rest.clone());
                    Section::None
                }
                "counts" => {
                    let nums: Result<Vec<usize>, _> =
                        rest.split_whitespace().map(str::parse::<usize>).collect();
                    match nums {
                        Ok(v) if v.len() == 4 => declared = Some([v[0], v[1], v[2], v[3]]),
                        _ => {
                            return Err(ModelError::Syntax {
                                line: line_no,
                                message: "counts expects four integers: n m p q".into(),
                            })
                        }
                    }
                    Section::None
                }
                "vars" => Section::Vars,
                "objective" => Section::Objective,
                "constraints" => Section::Constraints,
                "pairs" => Section::Pairs,
                _ => Section::FPairs,
            };
            if !rest.is_empty() && !matches!(key.as_str(), "name" | "counts") {
                push_line(section, line_no, rest, &mut var_lines, &mut objective_lines,
                    &mut constraint_lines, &mut pair_lines, &mut fpair_lines)?;
            }
            continue;
        }
        push_line(section, line_no, line.to_string(), &mut var_lines, &mut objective_lines,
            &mut constraint_lines, &mut pair_lines, &mut fpair_lines)?;
    }

    let name = name.ok_or(ModelError::Syntax {
        line: 0,
        message: "missing 'name:'".into(),
    })?;

    let mut variables = Vec::with_capacity(var_lines.len());
    for (line, text) in &var_lines {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(ModelError::Syntax {
                line: *line,
                message: "variable lines are 'name lower upper initial'".into(),
            });
        }
        let valid_name = parts[0]
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && parts[0].chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid_name {
            return Err(ModelError::Syntax {
                line: *line,
                message: format!("invalid variable name '{}'", parts[0]),
            });
        }
        variables.push(Variable {
            name: parts[0].to_string(),
            lower: parse_limit(parts[1], *line)?,
            upper: parse_limit(parts[2], *line)?,
            initial: parse_limit(parts[3], *line)?,
        });
    }
    if variables.is_empty() {
        return Err(ModelError::Syntax {
            line: 0,
            message: "no variables declared".into(),
        });
    }
    let names: Vec<String> = variables.iter().map(|v| v.name.clone()).collect();
    let parse_at = |line: usize, text: &str| {
        parse_expression(text, &names).map_err(|source| ModelError::Expression { line, source })
    };

    let (obj_line, obj_text) = match objective_lines.first() {
        Some((l, _)) => (
            *l,
            objective_lines
                .iter()
                .map(|(_, t)| t.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        ),
        None => {
            return Err(ModelError::Syntax {
                line: 0,
                message: "missing objective".into(),
            })
        }
    };
    let objective = parse_at(obj_line, &obj_text)?;

    let mut constraints = Vec::new();
    for (line, text) in &constraint_lines {
        let parts: Vec<&str> = text.split("<=").collect();
        if parts.len() != 3 {
            return Err(ModelError::Syntax {
                line: *line,
                message: "constraint lines are 'lower <= expr <= upper'".into(),
            });
        }
        constraints.push(Constraint {
            lower: parse_limit(parts[0], *line)?,
            expr: parse_at(*line, parts[1])?,
            upper: parse_limit(parts[2], *line)?,
        });
    }

    let mut comp_pairs = Vec::new();
    for (line, text) in &pair_lines {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(ModelError::Syntax {
                line: *line,
                message: "pair lines are 'var_a var_b'".into(),
            });
        }
        let index = |n: &str| {
            names.iter().position(|v| v == n).ok_or_else(|| {
                ModelError::Pairing(format!("line {line}: unknown variable '{n}'"))
            })
        };
        comp_pairs.push((index(parts[0])?, index(parts[1])?));
    }

    let mut fpairs = Vec::new();
    for (line, text) in &fpair_lines {
        let (g, h) = text.split_once(';').ok_or(ModelError::Syntax {
            line: *line,
            message: "function pair lines are 'G ; H'".into(),
        })?;
        fpairs.push(FunctionPair {
            g: parse_at(*line, g)?,
            h: parse_at(*line, h)?,
        });
    }

    let problem = MpccProblem::new(name, variables, objective, constraints, comp_pairs)?;
    let problem = introduce_slacks(problem, &fpairs)?;
    if let Some(declared) = declared {
        let found = problem.counts();
        if declared != found {
            return Err(ModelError::CountMismatch { declared, found });
        }
    }
    Ok(problem)
}

#[allow(clippy::too_many_arguments)]
fn push_line(
    section: Section,
    line: usize,
    text: String,
    vars: &mut Vec<(usize, String)>,
    objective: &mut Vec<(usize, String)>,
    constraints: &mut Vec<(usize, String)>,
    pairs: &mut Vec<(usize, String)>,
    fpairs: &mut Vec<(usize, String)>,
) -> Result<(), ModelError> {
    let target = match section {
        Section::Vars => vars,
        Section::Objective => objective,
        Section::Constraints => constraints,
        Section::Pairs => pairs,
        Section::FPairs => fpairs,
        Section::None => {
            return Err(ModelError::Syntax {
                line,
                message: format!("content outside of a section: '{text}'"),
            })
        }
    };
    target.push((line, text));
    Ok(())
}

/// Writes a problem back out in the file format (function pairs appear in
/// their slack form).
pub fn to_problem_file(problem: &MpccProblem) -> String {
    let names = problem.names();
    let limit = |v: f64| {
        if v == f64::INFINITY {
            "inf".to_string()
        } else if v == f64::NEG_INFINITY {
            "-inf".to_string()
        } else {
            format!("{v:?}")
        }
    };
    let mut out = format!("name: {}\nvars:\n", problem.name);
    for v in &problem.variables {
        out.push_str(&format!(
            "  {} {} {} {}\n",
            v.name,
            limit(v.lower),
            limit(v.upper),
            limit(v.initial)
        ));
    }
    out.push_str(&format!("objective:\n  {}\n", problem.objective.to_text(&names)));
    if !problem.constraints.is_empty() {
        out.push_str("constraints:\n");
        for c in &problem.constraints {
            out.push_str(&format!(
                "  {} <= {} <= {}\n",
                limit(c.lower),
                c.expr.to_text(&names),
                limit(c.upper)
            ));
        }
    }
    if !problem.comp_pairs.is_empty() {
        out.push_str("pairs:\n");
        for &(i, j) in &problem.comp_pairs {
            out.push_str(&format!("  {} {}\n", names[i], names[j]));
        }
    }
    out
}
