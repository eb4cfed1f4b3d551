pub mod ast;
pub mod lexer;
pub mod parser;
pub mod render;
pub mod walk;

pub use ast::*;
pub use parser::{parse, parse_expr, parse_query, parse_statement};
