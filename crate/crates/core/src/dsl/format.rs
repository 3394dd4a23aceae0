use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

/// Canonical source text for a program. Functions are separated by one blank
/// line; blocks are indented four spaces.
pub fn format_program(program: &Program) -> String {
    let mut out = String::new();
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        format_function_into(&mut out, f, f.name == program.entry);
    }
    out
}

/// Source for a single function definition.
pub fn format_function(function: &FunctionDef, entry: bool) -> String {
    let mut out = String::new();
    format_function_into(&mut out, function, entry);
    out
}

/// Body statements at zero indentation, as accepted by `parse_body`.
pub fn format_body(body: &[Stmt]) -> String {
    let mut out = String::new();
    block(&mut out, body, 0);
    out
}

fn format_function_into(out: &mut String, f: &FunctionDef, entry: bool) {
    if f.trainable {
        out.push_str("trainable ");
    }
    if entry {
        out.push_str("entry ");
    }
    let _ = writeln!(out, "fn {}({}) {{", f.name, f.params.join(", "));
    if let Some(doc) = &f.docstring {
        let _ = writeln!(out, "{INDENT}\"\"\"{doc}\"\"\"");
    }
    if f.body.is_empty() {
        let _ = writeln!(out, "{INDENT}return none");
    } else {
        block(out, &f.body, 1);
    }
    out.push_str("}\n");
}

fn block(out: &mut String, body: &[Stmt], depth: usize) {
    for stmt in body {
        statement(out, stmt, depth);
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn statement(out: &mut String, stmt: &Stmt, depth: usize) {
    indent(out, depth);
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{target} = {}", expr(value));
        }
        StmtKind::If { branches, otherwise } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                let kw = if i == 0 { "if" } else { "} elif" };
                let _ = writeln!(out, "{kw} {} {{", expr(cond));
                block(out, body, depth + 1);
                indent(out, depth);
            }
            if let Some(body) = otherwise {
                out.push_str("} else {\n");
                block(out, body, depth + 1);
                indent(out, depth);
            }
            out.push_str("}\n");
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "while {} {{", expr(cond));
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::For { key, var, iter, body } => {
            match key {
                Some(k) => {
                    let _ = writeln!(out, "for {k}, {var} in {} {{", expr(iter));
                }
                None => {
                    let _ = writeln!(out, "for {var} in {} {{", expr(iter));
                }
            }
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::Return(None) => out.push_str("return\n"),
        StmtKind::Return(Some(value)) => {
            let _ = writeln!(out, "return {}", expr(value));
        }
        StmtKind::Break => out.push_str("break\n"),
        StmtKind::Continue => out.push_str("continue\n"),
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{}", expr(e));
        }
    }
}

const ATOM: u8 = 8;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, _, _) => op.precedence(),
        Expr::Unary(UnaryOp::Not, _) => NOT_PRECEDENCE,
        Expr::Unary(UnaryOp::Neg, _) => NEG_PRECEDENCE,
        _ => ATOM,
    }
}

fn wrapped(e: &Expr, parens: bool) -> String {
    if parens {
        format!("({})", expr(e))
    } else {
        expr(e)
    }
}

pub fn format_number(n: f64) -> String {
    // Display gives the shortest representation that reads back exactly.
    format!("{n}")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Number(n) => format_number(*n),
        Expr::Bool(b) => b.to_string(),
        Expr::None => "none".into(),
        Expr::Text(s) => quote(s),
        Expr::List(items) => format!("[{}]", items.iter().map(expr).collect::<Vec<_>>().join(", ")),
        Expr::Var(name) => name.clone(),
        Expr::Field(base, field) => format!("{}.{field}", wrapped(base, precedence(base) < ATOM)),
        Expr::Index(base, index) => format!("{}[{}]", wrapped(base, precedence(base) < ATOM), expr(index)),
        Expr::Call(name, args) => format!("{name}({})", args.iter().map(expr).collect::<Vec<_>>().join(", ")),
        Expr::Unary(UnaryOp::Neg, inner) => format!("-{}", wrapped(inner, precedence(inner) < NEG_PRECEDENCE)),
        Expr::Unary(UnaryOp::Not, inner) => format!("not {}", wrapped(inner, precedence(inner) < NOT_PRECEDENCE)),
        Expr::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            let left_parens = precedence(lhs) < p || (op.is_comparison() && precedence(lhs) == p);
            let right_parens = precedence(rhs) <= p;
            format!("{} {} {}", wrapped(lhs, left_parens), op.symbol(), wrapped(rhs, right_parens))
        }
    }
}
