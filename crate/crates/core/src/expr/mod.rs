//! Expression language: parsing, printing and second-order forward-mode
//! evaluation. See [`parser`] for the grammar.

mod ast;
mod dual;
mod eval;
pub mod fd;
pub mod parser;

pub use ast::{BinOp, Expr, ExprDisplay, Func, SymbolError, SymbolTable, VELOCITY_SUFFIX};
pub use dual::Dual2;
pub use eval::{eval2, eval_value, node_at, EvalError};
pub use parser::{parse, ParseError};
