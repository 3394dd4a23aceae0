use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

/// Parse a complete policy program and run the static checks.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let mut parser = Parser::new(source)?;
    let functions = parser.program()?;
    let program = assemble(functions)?;
    check_program(&program)?;
    Ok(program)
}

/// Parse a function body (statements, optionally led by a docstring) as it
/// would appear between the braces of a function definition.
pub fn parse_body(source: &str) -> Result<(Option<String>, Vec<Stmt>), ParseError> {
    let mut parser = Parser::new(source)?;
    parser.skip_newlines();
    let doc = parser.docstring();
    let body = parser.statements(true)?;
    parser.expect_eof()?;
    Ok((doc, body))
}

fn assemble(functions: Vec<(FunctionDef, bool, u32)>) -> Result<Program, ParseError> {
    let entries: Vec<_> = functions.iter().filter(|(_, e, _)| *e).collect();
    let entry = match entries.as_slice() {
        [(f, _, _)] => f.name.clone(),
        [] => return Err(ParseError::Invalid("no function is marked `entry`".into())),
        [_, (f, _, line), ..] => {
            return Err(ParseError::Invalid(format!(
                "line {line}: second entry function `{}`; exactly one is allowed",
                f.name
            )))
        }
    };
    Ok(Program {
        functions: functions.into_iter().map(|(f, _, _)| f).collect(),
        entry,
    })
}

/// Canonical body for a function with no statements.
pub(crate) fn empty_body() -> Vec<Stmt> {
    vec![Stmt::new(StmtKind::Return(Some(Expr::None)))]
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(source: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            tokens: tokenize(source)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        &self.tokens[(self.pos + ahead).min(self.tokens.len() - 1)].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        }
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Text(_) => "string".into(),
            Tok::Doc(_) => "docstring".into(),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(s) if *s == sym)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = self.is_sym(sym);
        if hit {
            self.advance();
        }
        hit
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{sym}`, found {}", Self::describe(&self.peek().tok))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{kw}`, found {}", Self::describe(&self.peek().tok))))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            other => Err(self.error_here(format!("expected identifier, found {}", Self::describe(other)))),
        }
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.advance();
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        self.skip_newlines();
        match self.peek().tok {
            Tok::Eof => Ok(()),
            ref other => Err(self.error_here(format!("unexpected {}", Self::describe(other)))),
        }
    }

    fn program(&mut self) -> Result<Vec<(FunctionDef, bool, u32)>, ParseError> {
        let mut functions = Vec::new();
        self.skip_newlines();
        while self.peek().tok != Tok::Eof {
            functions.push(self.function()?);
            self.skip_newlines();
        }
        Ok(functions)
    }

    fn function(&mut self) -> Result<(FunctionDef, bool, u32), ParseError> {
        let line = self.peek().line;
        let (mut trainable, mut entry) = (false, false);
        loop {
            if self.is_kw("trainable") && !trainable {
                trainable = true;
            } else if self.is_kw("entry") && !entry {
                entry = true;
            } else {
                break;
            }
            self.advance();
        }
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                params.push(self.ident()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.expect_sym("{")?;
        self.skip_newlines();
        let docstring = self.docstring();
        let mut body = self.statements(false)?;
        self.expect_sym("}")?;
        if body.is_empty() {
            body = empty_body();
        }
        Ok((
            FunctionDef {
                name,
                params,
                docstring,
                body,
                trainable,
            },
            entry,
            line,
        ))
    }

    fn docstring(&mut self) -> Option<String> {
        if let Tok::Doc(text) = &self.peek().tok {
            let text = text.clone();
            self.advance();
            self.skip_newlines();
            Some(text)
        } else {
            None
        }
    }

    /// Statements up to a closing `}` (left unconsumed) or end of input.
    fn statements(&mut self, top_level: bool) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_newlines();
            if self.is_sym("}") || self.peek().tok == Tok::Eof {
                if top_level && self.is_sym("}") {
                    return Err(self.error_here("unexpected `}`"));
                }
                return Ok(out);
            }
            out.push(self.statement()?);
            match self.peek().tok {
                Tok::Newline | Tok::Eof => {}
                Tok::Sym("}") => {}
                ref other => {
                    return Err(self.error_here(format!("expected end of statement, found {}", Self::describe(other))))
                }
            }
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_sym("{")?;
        let body = self.statements(false)?;
        self.expect_sym("}")?;
        Ok(body)
    }

    /// True when the next non-newline token is the keyword `kw`.
    fn next_line_starts_with(&self, kw: &str) -> bool {
        let mut i = 0;
        while *self.peek_at(i) == Tok::Newline {
            i += 1;
        }
        matches!(self.peek_at(i), Tok::Ident(s) if s == kw)
    }

    fn statement(&mut self) -> Result<Stmt, ParseError> {
        let line = self.peek().line;
        let kind = if self.eat_kw("if") {
            let mut branches = vec![(self.expr()?, self.block()?)];
            let mut otherwise = None;
            loop {
                if self.next_line_starts_with("elif") {
                    self.skip_newlines();
                    self.advance();
                    branches.push((self.expr()?, self.block()?));
                } else if self.next_line_starts_with("else") {
                    self.skip_newlines();
                    self.advance();
                    otherwise = Some(self.block()?);
                    break;
                } else {
                    break;
                }
            }
            StmtKind::If { branches, otherwise }
        } else if self.eat_kw("while") {
            StmtKind::While {
                cond: self.expr()?,
                body: self.block()?,
            }
        } else if self.eat_kw("for") {
            let first = self.ident()?;
            let (key, var) = if self.eat_sym(",") {
                (Some(first), self.ident()?)
            } else {
                (None, first)
            };
            self.expect_kw("in")?;
            StmtKind::For {
                key,
                var,
                iter: self.expr()?,
                body: self.block()?,
            }
        } else if self.eat_kw("return") {
            if matches!(self.peek().tok, Tok::Newline | Tok::Eof | Tok::Sym("}")) {
                StmtKind::Return(None)
            } else {
                StmtKind::Return(Some(self.expr()?))
            }
        } else if self.eat_kw("break") {
            StmtKind::Break
        } else if self.eat_kw("continue") {
            StmtKind::Continue
        } else if matches!(self.peek().tok, Tok::Ident(_))
            && matches!(self.peek_at(1), Tok::Sym("=" | "+=" | "-=" | "*=" | "/="))
        {
            let target = self.ident()?;
            let op = match self.advance().tok {
                Tok::Sym("+=") => Some(BinaryOp::Add),
                Tok::Sym("-=") => Some(BinaryOp::Sub),
                Tok::Sym("*=") => Some(BinaryOp::Mul),
                Tok::Sym("/=") => Some(BinaryOp::Div),
                _ => None,
            };
            let rhs = self.expr()?;
            let value = match op {
                Some(op) => Expr::Binary(op, Box::new(Expr::Var(target.clone())), Box::new(rhs)),
                None => rhs,
            };
            StmtKind::Assign { target, value }
        } else {
            StmtKind::Expr(self.expr()?)
        };
        Ok(Stmt { kind, line })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            lhs = Expr::Binary(BinaryOp::Or, Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            lhs = Expr::Binary(BinaryOp::And, Box::new(lhs), Box::new(self.not_expr()?));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("not") {
            Ok(Expr::Unary(UnaryOp::Not, Box::new(self.not_expr()?)))
        } else {
            self.comparison()
        }
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = match &self.peek().tok {
            Tok::Sym("==") => BinaryOp::Eq,
            Tok::Sym("!=") => BinaryOp::Ne,
            Tok::Sym("<") => BinaryOp::Lt,
            Tok::Sym("<=") => BinaryOp::Le,
            Tok::Sym(">") => BinaryOp::Gt,
            Tok::Sym(">=") => BinaryOp::Ge,
            Tok::Ident(s) if s == "in" => BinaryOp::In,
            Tok::Ident(s) if s == "not" && matches!(self.peek_at(1), Tok::Ident(n) if n == "in") => {
                self.advance();
                BinaryOp::NotIn
            }
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.additive()?;
        if matches!(&self.peek().tok, Tok::Sym("==" | "!=" | "<" | "<=" | ">" | ">="))
            || self.is_kw("in")
        {
            return Err(self.error_here("chained comparisons are not supported; use `and`"));
        }
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym("+") => BinaryOp::Add,
                Tok::Sym("-") => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym("*") => BinaryOp::Mul,
                Tok::Sym("/") => BinaryOp::Div,
                Tok::Sym("//") => BinaryOp::FloorDiv,
                Tok::Sym("%") => BinaryOp::Mod,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("-") {
            Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
        } else {
            self.postfix()
        }
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.primary()?;
        loop {
            if self.eat_sym(".") {
                let field = self.ident()?;
                expr = Expr::Field(Box::new(expr), field);
            } else if self.eat_sym("[") {
                let index = self.expr()?;
                self.expect_sym("]")?;
                expr = Expr::Index(Box::new(expr), Box::new(index));
            } else {
                return Ok(expr);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let token = self.peek().clone();
        match token.tok {
            Tok::Number(n) => {
                self.advance();
                Ok(Expr::Number(n))
            }
            Tok::Text(s) => {
                self.advance();
                Ok(Expr::Text(s))
            }
            Tok::Ident(ref s) if s == "true" || s == "false" => {
                self.advance();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(ref s) if s == "none" => {
                self.advance();
                Ok(Expr::None)
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.eat_sym("(") {
                    let args = self.comma_list(")")?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::Sym("(") => {
                self.advance();
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Tok::Sym("[") => {
                self.advance();
                Ok(Expr::List(self.comma_list("]")?))
            }
            ref other => Err(self.error_here(format!("expected expression, found {}", Self::describe(other)))),
        }
    }

    fn comma_list(&mut self, close: &str) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        while !self.is_sym(close) {
            items.push(self.expr()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(close)?;
        Ok(items)
    }
}

/// Static checks shared by parsing and update splicing: unique names,
/// declared identifiers, call arities, loop-only `break`, no recursion.
pub(crate) fn check_program(program: &Program) -> Result<(), ParseError> {
    let mut arity = BTreeMap::new();
    for f in &program.functions {
        if builtin_arity(&f.name).is_some() {
            return Err(ParseError::Invalid(format!("function `{}` shadows a builtin", f.name)));
        }
        if arity.insert(f.name.as_str(), f.params.len()).is_some() {
            return Err(ParseError::Invalid(format!("duplicate function `{}`", f.name)));
        }
    }
    if !arity.contains_key(program.entry.as_str()) {
        return Err(ParseError::Invalid(format!("entry function `{}` is not defined", program.entry)));
    }
    let mut calls: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for f in &program.functions {
        let mut seen = HashSet::new();
        for p in &f.params {
            if !seen.insert(p) {
                return Err(ParseError::Invalid(format!("`{}` has duplicate parameter `{p}`", f.name)));
            }
        }
        let mut bound: HashSet<&str> = f.params.iter().map(String::as_str).collect();
        collect_bindings(&f.body, &mut bound);
        let mut checker = Checker {
            arity: &arity,
            bound: &bound,
            calls: BTreeSet::new(),
        };
        checker.block(&f.body, 0)?;
        calls.insert(&f.name, checker.calls);
    }
    if let Some(name) = find_cycle(&calls) {
        return Err(ParseError::Invalid(format!("recursive call through `{name}` is not allowed")));
    }
    Ok(())
}

fn collect_bindings<'a>(body: &'a [Stmt], bound: &mut HashSet<&'a str>) {
    for stmt in body {
        match &stmt.kind {
            StmtKind::Assign { target, .. } => {
                bound.insert(target);
            }
            StmtKind::If { branches, otherwise } => {
                for (_, b) in branches {
                    collect_bindings(b, bound);
                }
                if let Some(b) = otherwise {
                    collect_bindings(b, bound);
                }
            }
            StmtKind::While { body, .. } => collect_bindings(body, bound),
            StmtKind::For { key, var, body, .. } => {
                if let Some(k) = key {
                    bound.insert(k);
                }
                bound.insert(var);
                collect_bindings(body, bound);
            }
            StmtKind::Return(_) | StmtKind::Break | StmtKind::Continue | StmtKind::Expr(_) => {}
        }
    }
}

struct Checker<'a> {
    arity: &'a BTreeMap<&'a str, usize>,
    bound: &'a HashSet<&'a str>,
    calls: BTreeSet<String>,
}

impl Checker<'_> {
    fn block(&mut self, body: &[Stmt], loops: usize) -> Result<(), ParseError> {
        for stmt in body {
            let line = stmt.line;
            match &stmt.kind {
                StmtKind::Assign { value, .. } => self.expr(value, line)?,
                StmtKind::If { branches, otherwise } => {
                    for (cond, b) in branches {
                        self.expr(cond, line)?;
                        self.block(b, loops)?;
                    }
                    if let Some(b) = otherwise {
                        self.block(b, loops)?;
                    }
                }
                StmtKind::While { cond, body } => {
                    self.expr(cond, line)?;
                    self.block(body, loops + 1)?;
                }
                StmtKind::For { iter, body, .. } => {
                    self.expr(iter, line)?;
                    self.block(body, loops + 1)?;
                }
                StmtKind::Return(value) => {
                    if let Some(v) = value {
                        self.expr(v, line)?;
                    }
                }
                StmtKind::Break | StmtKind::Continue if loops == 0 => {
                    return Err(ParseError::Invalid(format!("line {line}: `break`/`continue` outside a loop")))
                }
                StmtKind::Break | StmtKind::Continue => {}
                StmtKind::Expr(e) => self.expr(e, line)?,
            }
        }
        Ok(())
    }

    fn expr(&mut self, expr: &Expr, line: u32) -> Result<(), ParseError> {
        match expr {
            Expr::Number(_) | Expr::Bool(_) | Expr::None | Expr::Text(_) => Ok(()),
            Expr::List(items) => items.iter().try_for_each(|e| self.expr(e, line)),
            Expr::Var(name) => {
                if self.bound.contains(name.as_str()) {
                    Ok(())
                } else {
                    Err(ParseError::Undeclared { line, name: name.clone() })
                }
            }
            Expr::Field(base, _) => self.expr(base, line),
            Expr::Index(base, index) => {
                self.expr(base, line)?;
                self.expr(index, line)
            }
            Expr::Call(name, args) => {
                let n = args.len();
                if let Some(&want) = self.arity.get(name.as_str()) {
                    if want != n {
                        return Err(ParseError::Invalid(format!(
                            "line {line}: `{name}` takes {want} argument(s), called with {n}"
                        )));
                    }
                    self.calls.insert(name.clone());
                } else if let Some((lo, hi)) = builtin_arity(name) {
                    if n < lo || n > hi {
                        return Err(ParseError::Invalid(format!(
                            "line {line}: builtin `{name}` called with {n} argument(s)"
                        )));
                    }
                } else {
                    return Err(ParseError::Undeclared { line, name: name.clone() });
                }
                args.iter().try_for_each(|e| self.expr(e, line))
            }
            Expr::Unary(_, e) => self.expr(e, line),
            Expr::Binary(_, l, r) => {
                self.expr(l, line)?;
                self.expr(r, line)
            }
        }
    }
}

fn find_cycle(calls: &BTreeMap<&str, BTreeSet<String>>) -> Option<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit<'a>(
        node: &'a str,
        calls: &'a BTreeMap<&str, BTreeSet<String>>,
        marks: &mut BTreeMap<&'a str, Mark>,
    ) -> Option<String> {
        match marks.get(node) {
            Some(Mark::Active) => return Some(node.to_string()),
            Some(Mark::Done) => return None,
            None => {}
        }
        marks.insert(node, Mark::Active);
        if let Some(callees) = calls.get(node) {
            for callee in callees {
                if let Some(hit) = visit(callee, calls, marks) {
                    return Some(hit);
                }
            }
        }
        marks.insert(node, Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    calls.keys().find_map(|name| visit(name, calls, &mut marks))
}
