use std::fmt;

use thiserror::Error;

/// Suffix appended to a coordinate name to obtain its velocity symbol.
pub const VELOCITY_SUFFIX: &str = "_dot";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Variables index into the active-variable vector of the
/// owning [`SymbolTable`] (coordinates first, then velocities); parameters
/// index into its parameter list.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Pi,
    Var(usize),
    Param(usize),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        arg: Box<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call {
            func,
            arg: Box::new(arg),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Pi | Expr::Var(_) | Expr::Param(_) => 1,
            Expr::Neg(e) => 1 + e.size(),
            Expr::Binary { lhs, rhs, .. } => 1 + lhs.size() + rhs.size(),
            Expr::Call { arg, .. } => 1 + arg.size(),
        }
    }

    /// True when variable `index` occurs anywhere in the tree.
    pub fn mentions_var(&self, index: usize) -> bool {
        match self {
            Expr::Var(i) => *i == index,
            Expr::Const(_) | Expr::Pi | Expr::Param(_) => false,
            Expr::Neg(e) => e.mentions_var(index),
            Expr::Binary { lhs, rhs, .. } => lhs.mentions_var(index) || rhs.mentions_var(index),
            Expr::Call { arg, .. } => arg.mentions_var(index),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) | Expr::Pi | Expr::Param(_) => None,
            Expr::Neg(e) => e.max_var(),
            Expr::Binary { lhs, rhs, .. } => match (lhs.max_var(), rhs.max_var()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
            Expr::Call { arg, .. } => arg.max_var(),
        }
    }

    /// Replace every `Var(i)` by `vars[i]`.
    pub fn substitute(&self, vars: &[Expr]) -> Expr {
        match self {
            Expr::Var(i) => vars[*i].clone(),
            Expr::Const(_) | Expr::Pi | Expr::Param(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.substitute(vars)),
            Expr::Binary { op, lhs, rhs } => {
                Expr::binary(*op, lhs.substitute(vars), rhs.substitute(vars))
            }
            Expr::Call { func, arg } => Expr::call(*func, arg.substitute(vars)),
        }
    }

    /// Renumber parameters through `map`.
    pub fn remap_params(&self, map: &dyn Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Param(i) => Expr::Param(map(*i)),
            Expr::Const(_) | Expr::Pi | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.remap_params(map)),
            Expr::Binary { op, lhs, rhs } => {
                Expr::binary(*op, lhs.remap_params(map), rhs.remap_params(map))
            }
            Expr::Call { func, arg } => Expr::call(*func, arg.remap_params(map)),
        }
    }

    /// Replace every parameter by its value.
    pub fn bind_params(&self, values: &[f64]) -> Expr {
        match self {
            Expr::Param(i) => Expr::Const(values[*i]),
            Expr::Const(_) | Expr::Pi | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.bind_params(values)),
            Expr::Binary { op, lhs, rhs } => {
                Expr::binary(*op, lhs.bind_params(values), rhs.bind_params(values))
            }
            Expr::Call { func, arg } => Expr::call(*func, arg.bind_params(values)),
        }
    }

    /// `Σ cᵢ eᵢ`, skipping zero coefficients and unit multipliers.
    pub fn linear_combination(terms: &[(f64, Expr)]) -> Expr {
        let mut acc: Option<Expr> = None;
        for (c, e) in terms {
            if *c == 0.0 {
                continue;
            }
            let term = if *c == 1.0 {
                e.clone()
            } else {
                Expr::binary(BinOp::Mul, Expr::Const(*c), e.clone())
            };
            acc = Some(match acc {
                None => term,
                Some(a) => Expr::binary(BinOp::Add, a, term),
            });
        }
        acc.unwrap_or(Expr::Const(0.0))
    }

    /// Render against a symbol table. The output re-parses to the same tree.
    pub fn display<'a>(&'a self, table: &'a SymbolTable) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, table }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    table: &'a SymbolTable,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.table, f)
    }
}

// Every composite node is parenthesized so printing never depends on
// precedence or associativity.
fn write_expr(expr: &Expr, table: &SymbolTable, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match expr {
        Expr::Const(c) => write!(f, "{c:?}"),
        Expr::Pi => f.write_str("pi"),
        Expr::Var(i) => f.write_str(&table.variable_name(*i)),
        Expr::Param(i) => f.write_str(table.param_name(*i)),
        Expr::Neg(e) => {
            f.write_str("(-")?;
            write_expr(e, table, f)?;
            f.write_str(")")
        }
        Expr::Binary { op, lhs, rhs } => {
            f.write_str("(")?;
            write_expr(lhs, table, f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(rhs, table, f)?;
            f.write_str(")")
        }
        Expr::Call { func, arg } => {
            write!(f, "{}(", func.name())?;
            write_expr(arg, table, f)?;
            f.write_str(")")
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SymbolError {
    #[error("invalid identifier `{0}`")]
    InvalidName(String),
    #[error("duplicate symbol `{0}`")]
    Duplicate(String),
    #[error("`{0}` is reserved")]
    Reserved(String),
    #[error("coordinate `{0}` may not end in `{VELOCITY_SUFFIX}`; velocity names are generated")]
    VelocityDeclared(String),
    #[error("at least one coordinate is required")]
    NoCoordinates,
}

/// Names visible to expressions: coordinates, their generated velocities
/// (optional) and named real parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    coords: Vec<String>,
    velocities: bool,
    params: Vec<(String, f64)>,
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SymbolTable {
    /// Table over coordinates and their `<name>_dot` velocities.
    pub fn new(coords: &[&str], params: &[(&str, f64)]) -> Result<Self, SymbolError> {
        Self::build(coords, params, true)
    }

    /// Table over coordinates only (used for configuration maps φ(q)).
    pub fn positions_only(coords: &[&str], params: &[(&str, f64)]) -> Result<Self, SymbolError> {
        Self::build(coords, params, false)
    }

    fn build(coords: &[&str], params: &[(&str, f64)], velocities: bool) -> Result<Self, SymbolError> {
        if coords.is_empty() {
            return Err(SymbolError::NoCoordinates);
        }
        let mut seen: Vec<String> = Vec::new();
        let mut claim = |name: &str| -> Result<(), SymbolError> {
            if !valid_identifier(name) {
                return Err(SymbolError::InvalidName(name.to_string()));
            }
            if name == "pi" || Func::from_name(name).is_some() {
                return Err(SymbolError::Reserved(name.to_string()));
            }
            if seen.iter().any(|s| s == name) {
                return Err(SymbolError::Duplicate(name.to_string()));
            }
            seen.push(name.to_string());
            Ok(())
        };
        for c in coords {
            if c.ends_with(VELOCITY_SUFFIX) {
                return Err(SymbolError::VelocityDeclared(c.to_string()));
            }
            claim(c)?;
        }
        if velocities {
            for c in coords {
                claim(&format!("{c}{VELOCITY_SUFFIX}"))?;
            }
        }
        for (p, _) in params {
            claim(p)?;
        }
        Ok(SymbolTable {
            coords: coords.iter().map(|s| s.to_string()).collect(),
            velocities,
            params: params.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        })
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn has_velocities(&self) -> bool {
        self.velocities
    }

    /// Length of the point vector expected by evaluation.
    pub fn num_variables(&self) -> usize {
        if self.velocities {
            2 * self.coords.len()
        } else {
            self.coords.len()
        }
    }

    pub fn variable_name(&self, index: usize) -> String {
        let n = self.coords.len();
        if index < n {
            self.coords[index].clone()
        } else {
            format!("{}{VELOCITY_SUFFIX}", self.coords[index - n])
        }
    }

    pub fn param_name(&self, index: usize) -> &str {
        &self.params[index].0
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|(_, v)| *v).collect()
    }

    pub fn lookup_variable(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.coords.iter().position(|c| c == name) {
            return Some(i);
        }
        if !self.velocities {
            return None;
        }
        let base = name.strip_suffix(VELOCITY_SUFFIX)?;
        self.coords
            .iter()
            .position(|c| c == base)
            .map(|i| i + self.coords.len())
    }

    pub fn lookup_param(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|(p, _)| p == name)
    }
}
