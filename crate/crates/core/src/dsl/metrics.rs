use serde::{Deserialize, Serialize};

use super::ast::*;
use super::format::format_function;

/// Size and complexity of a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMetrics {
    /// Non-blank lines of the canonical formatting, docstrings excluded.
    pub loc: usize,
    /// Sum over functions of 1 + branch points.
    pub cyclomatic: usize,
    /// Deepest chain of lexically nested `if` statements.
    pub max_if_nesting: usize,
}

pub fn code_metrics(program: &Program) -> CodeMetrics {
    let mut loc = 0;
    let mut cyclomatic = 0;
    let mut max_if_nesting = 0;
    for f in &program.functions {
        let bare = FunctionDef {
            docstring: None,
            ..f.clone()
        };
        loc += format_function(&bare, f.name == program.entry)
            .lines()
            .filter(|l| !l.trim().is_empty())
            .count();
        cyclomatic += 1 + block_branches(&f.body);
        max_if_nesting = max_if_nesting.max(block_nesting(&f.body));
    }
    CodeMetrics {
        loc,
        cyclomatic,
        max_if_nesting,
    }
}

fn block_branches(body: &[Stmt]) -> usize {
    body.iter().map(stmt_branches).sum()
}

fn stmt_branches(stmt: &Stmt) -> usize {
    match &stmt.kind {
        StmtKind::Assign { value, .. } => expr_branches(value),
        StmtKind::Expr(e) | StmtKind::Return(Some(e)) => expr_branches(e),
        StmtKind::Return(None) | StmtKind::Break | StmtKind::Continue => 0,
        StmtKind::If { branches, otherwise } => {
            branches
                .iter()
                .map(|(cond, body)| 1 + expr_branches(cond) + block_branches(body))
                .sum::<usize>()
                + otherwise.as_deref().map_or(0, block_branches)
        }
        StmtKind::While { cond, body } => 1 + expr_branches(cond) + block_branches(body),
        StmtKind::For { iter, body, .. } => 1 + expr_branches(iter) + block_branches(body),
    }
}

fn expr_branches(e: &Expr) -> usize {
    match e {
        Expr::Number(_) | Expr::Bool(_) | Expr::None | Expr::Text(_) | Expr::Var(_) => 0,
        Expr::List(items) | Expr::Call(_, items) => items.iter().map(expr_branches).sum(),
        Expr::Field(base, _) => expr_branches(base),
        Expr::Index(a, b) => expr_branches(a) + expr_branches(b),
        Expr::Unary(_, inner) => expr_branches(inner),
        Expr::Binary(op, a, b) => {
            usize::from(matches!(op, BinaryOp::And | BinaryOp::Or)) + expr_branches(a) + expr_branches(b)
        }
    }
}

fn block_nesting(body: &[Stmt]) -> usize {
    body.iter()
        .map(|stmt| match &stmt.kind {
            StmtKind::If { branches, otherwise } => {
                let inner = branches
                    .iter()
                    .map(|(_, b)| block_nesting(b))
                    .chain(otherwise.as_deref().map(block_nesting))
                    .max()
                    .unwrap_or(0);
                1 + inner
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => block_nesting(body),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

/// Plain-text table with one row per `(stage, metrics)` pair, in order.
pub fn metrics_table(rows: &[(String, Result<CodeMetrics, String>)]) -> String {
    let width = rows
        .iter()
        .map(|(s, _)| s.chars().count())
        .chain(std::iter::once(5))
        .max()
        .unwrap_or(5);
    let mut out = format!("{:<width$}  {:>5}  {:>5}  {:>6}\n", "Stage", "LOC", "Comp.", "N. Ifs");
    for (stage, m) in rows {
        match m {
            Ok(m) => out.push_str(&format!(
                "{stage:<width$}  {:>5}  {:>5}  {:>6}\n",
                m.loc, m.cyclomatic, m.max_if_nesting
            )),
            Err(e) => out.push_str(&format!("{stage:<width$}  error: {e}\n")),
        }
    }
    out
}
