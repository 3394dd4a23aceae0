//! Tree-walking interpreter with a hard step budget.
//!
//! Every executed statement, loop iteration and function call costs one step.
//! When tracing, each value carries the set of trace nodes it was computed
//! from, so that calls to trainable functions can be recorded with their true
//! data dependencies.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::*;
use super::value::Value;
use crate::trace::{NodeId, TraceGraph};

pub const DEFAULT_STEP_BUDGET: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("step budget of {budget} exhausted in `{function}`")]
    Timeout { function: String, budget: u64 },
    #[error("runtime error in `{function}` at line {line}: {message}")]
    Runtime {
        function: String,
        line: u32,
        message: String,
    },
    #[error("no function named `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` takes {expected} argument(s), got {got}")]
    Arity {
        function: String,
        expected: usize,
        got: usize,
    },
    #[error("trace recording failed: {0}")]
    Trace(String),
}

impl EvalError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, EvalError::Timeout { .. })
    }
}

/// Evaluate `function` on `args`. All randomness is drawn from a generator
/// seeded with `rng_seed`.
pub fn evaluate(
    program: &Program,
    function: &str,
    args: &[Value],
    step_budget: u64,
    rng_seed: u64,
) -> Result<Value, EvalError> {
    evaluate_counted(program, function, args, step_budget, rng_seed).map(|(v, _)| v)
}

/// Like [`evaluate`], also returning the number of interpreter steps used.
pub fn evaluate_counted(
    program: &Program,
    function: &str,
    args: &[Value],
    step_budget: u64,
    rng_seed: u64,
) -> Result<(Value, u64), EvalError> {
    let mut interp = Interp::new(program, step_budget, rng_seed, None, None);
    let args = args.iter().map(|v| (v.clone(), Vec::new())).collect();
    let (value, _) = interp.call_named(function, args)?;
    Ok((value, interp.steps))
}

/// Result of a traced evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Traced {
    pub value: Value,
    /// Trace nodes the returned value depends on.
    pub provenance: Vec<NodeId>,
    pub steps: u64,
}

/// Evaluate while recording a call node for every invocation of a trainable
/// function or of the program's entry function. Each argument carries the
/// trace nodes it derives from.
pub fn evaluate_traced(
    program: &Program,
    function: &str,
    args: Vec<(Value, Vec<NodeId>)>,
    step_budget: u64,
    rng_seed: u64,
    graph: &mut TraceGraph,
    step_index: Option<u32>,
) -> Result<Traced, EvalError> {
    let mut interp = Interp::new(program, step_budget, rng_seed, Some(graph), step_index);
    let (value, provenance) = interp.call_named(function, args)?;
    Ok(Traced {
        value,
        provenance,
        steps: interp.steps,
    })
}

type Prov = Vec<NodeId>;
type Tv = (Value, Prov);

fn merge(a: &mut Prov, b: &[NodeId]) {
    if b.is_empty() {
        return;
    }
    if a.is_empty() {
        a.extend_from_slice(b);
        return;
    }
    a.extend_from_slice(b);
    a.sort_unstable();
    a.dedup();
}

enum Flow {
    Normal,
    Return(Tv),
    Break,
    Continue,
}

struct Frame<'p> {
    locals: Vec<(&'p str, Tv)>,
}

impl<'p> Frame<'p> {
    fn get(&self, name: &str) -> Option<&Tv> {
        self.locals.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    fn set(&mut self, name: &'p str, value: Tv) {
        if let Some(slot) = self.locals.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = value;
        } else {
            self.locals.push((name, value));
        }
    }
}

struct Interp<'p, 'g> {
    program: &'p Program,
    budget: u64,
    steps: u64,
    rng: ChaCha8Rng,
    graph: Option<&'g mut TraceGraph>,
    step_index: Option<u32>,
    function: &'p str,
    line: u32,
}

impl<'p, 'g> Interp<'p, 'g> {
    fn new(
        program: &'p Program,
        budget: u64,
        seed: u64,
        graph: Option<&'g mut TraceGraph>,
        step_index: Option<u32>,
    ) -> Self {
        Interp {
            program,
            budget,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            graph,
            step_index,
            function: "",
            line: 0,
        }
    }

    fn tick(&mut self) -> Result<(), EvalError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(EvalError::Timeout {
                function: self.function.to_string(),
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, EvalError> {
        Err(EvalError::Runtime {
            function: self.function.to_string(),
            line: self.line,
            message: message.into(),
        })
    }

    fn call_named(&mut self, name: &str, args: Vec<Tv>) -> Result<Tv, EvalError> {
        let program = self.program;
        let f = program
            .function(name)
            .ok_or_else(|| EvalError::UnknownFunction(name.to_string()))?;
        if f.params.len() != args.len() {
            return Err(EvalError::Arity {
                function: name.to_string(),
                expected: f.params.len(),
                got: args.len(),
            });
        }
        self.call(f, args)
    }

    fn call(&mut self, f: &'p FunctionDef, args: Vec<Tv>) -> Result<Tv, EvalError> {
        let (saved_fn, saved_line) = (self.function, self.line);
        self.function = &f.name;
        self.tick()?;
        let recorded = self.graph.is_some() && (f.trainable || f.name == self.program.entry);
        let mut input_prov = Prov::new();
        if recorded {
            for (_, p) in &args {
                merge(&mut input_prov, p);
            }
        }
        let mut frame = Frame {
            locals: f.params.iter().map(String::as_str).zip(args).collect(),
        };
        let flow = self.block(&f.body, &mut frame)?;
        let (value, mut prov) = match flow {
            Flow::Return(tv) => tv,
            _ => (Value::None, Prov::new()),
        };
        if recorded {
            merge(&mut input_prov, &prov);
            let step = self.step_index;
            let graph = self.graph.as_deref_mut().expect("recorded implies tracing");
            let id = graph
                .record_call(&f.name, &input_prov, value.clone(), step)
                .map_err(|e| EvalError::Trace(e.to_string()))?;
            prov = vec![id];
        }
        self.function = saved_fn;
        self.line = saved_line;
        Ok((value, prov))
    }

    fn block(&mut self, body: &'p [Stmt], frame: &mut Frame<'p>) -> Result<Flow, EvalError> {
        for stmt in body {
            match self.statement(stmt, frame)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn statement(&mut self, stmt: &'p Stmt, frame: &mut Frame<'p>) -> Result<Flow, EvalError> {
        self.line = stmt.line;
        self.tick()?;
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let v = self.expr(value, frame)?;
                frame.set(target, v);
            }
            StmtKind::Expr(e) => {
                self.expr(e, frame)?;
            }
            StmtKind::Return(None) => return Ok(Flow::Return((Value::None, Prov::new()))),
            StmtKind::Return(Some(e)) => {
                let v = self.expr(e, frame)?;
                return Ok(Flow::Return(v));
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::If { branches, otherwise } => {
                for (cond, body) in branches {
                    self.line = stmt.line;
                    let (c, _) = self.expr(cond, frame)?;
                    if c.truthy() {
                        return self.block(body, frame);
                    }
                }
                if let Some(body) = otherwise {
                    return self.block(body, frame);
                }
            }
            StmtKind::While { cond, body } => loop {
                self.line = stmt.line;
                let (c, _) = self.expr(cond, frame)?;
                if !c.truthy() {
                    break;
                }
                self.tick()?;
                match self.block(body, frame)? {
                    Flow::Break => break,
                    Flow::Return(v) => return Ok(Flow::Return(v)),
                    Flow::Normal | Flow::Continue => {}
                }
            },
            StmtKind::For { key, var, iter, body } => {
                let (collection, prov) = self.expr(iter, frame)?;
                let items: Vec<(Value, Value)> = match &collection {
                    Value::List(items) => items
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (Value::Number(i as f64), v.clone()))
                        .collect(),
                    Value::Observation(obs) => obs
                        .objects
                        .iter()
                        .map(|(label, o)| (Value::text(label), Value::Object(*o)))
                        .collect(),
                    other => return self.fail(format!("cannot iterate over {}", other.type_name())),
                };
                let observation = matches!(collection, Value::Observation(_));
                for (k, v) in items {
                    self.tick()?;
                    match key {
                        Some(key) => {
                            frame.set(key, (k, prov.clone()));
                            frame.set(var, (v, prov.clone()));
                        }
                        // a bare loop over an observation walks its labels
                        None if observation => frame.set(var, (k, prov.clone())),
                        None => frame.set(var, (v, prov.clone())),
                    }
                    match self.block(body, frame)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn expr(&mut self, e: &'p Expr, frame: &mut Frame<'p>) -> Result<Tv, EvalError> {
        Ok(match e {
            Expr::Number(n) => (Value::Number(*n), Prov::new()),
            Expr::Bool(b) => (Value::Bool(*b), Prov::new()),
            Expr::None => (Value::None, Prov::new()),
            Expr::Text(s) => (Value::text(s), Prov::new()),
            Expr::List(items) => {
                let mut values = Vec::with_capacity(items.len());
                let mut prov = Prov::new();
                for item in items {
                    let (v, p) = self.expr(item, frame)?;
                    values.push(v);
                    merge(&mut prov, &p);
                }
                (Value::List(Arc::new(values)), prov)
            }
            Expr::Var(name) => match frame.get(name) {
                Some(tv) => tv.clone(),
                None => return self.fail(format!("variable `{name}` used before assignment")),
            },
            Expr::Field(base, field) => {
                let (b, prov) = self.expr(base, frame)?;
                (self.field(&b, field)?, prov)
            }
            Expr::Index(base, index) => {
                let (b, mut prov) = self.expr(base, frame)?;
                let (i, p) = self.expr(index, frame)?;
                merge(&mut prov, &p);
                (self.index(&b, &i)?, prov)
            }
            Expr::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.expr(a, frame)?);
                }
                if let Some(f) = self.program.function(name) {
                    if f.params.len() != values.len() {
                        return self.fail(format!(
                            "`{name}` takes {} argument(s), got {}",
                            f.params.len(),
                            values.len()
                        ));
                    }
                    self.call(f, values)?
                } else {
                    self.tick()?;
                    self.builtin(name, values)?
                }
            }
            Expr::Unary(op, inner) => {
                let (v, prov) = self.expr(inner, frame)?;
                let out = match op {
                    UnaryOp::Not => Value::Bool(!v.truthy()),
                    UnaryOp::Neg => match v {
                        Value::Number(n) => Value::Number(-n),
                        other => return self.fail(format!("cannot negate {}", other.type_name())),
                    },
                };
                (out, prov)
            }
            Expr::Binary(BinaryOp::And, l, r) => {
                let left = self.expr(l, frame)?;
                if !left.0.truthy() {
                    return Ok(left);
                }
                let (v, p) = self.expr(r, frame)?;
                let mut prov = left.1;
                merge(&mut prov, &p);
                (v, prov)
            }
            Expr::Binary(BinaryOp::Or, l, r) => {
                let left = self.expr(l, frame)?;
                if left.0.truthy() {
                    return Ok(left);
                }
                let (v, p) = self.expr(r, frame)?;
                let mut prov = left.1;
                merge(&mut prov, &p);
                (v, prov)
            }
            Expr::Binary(op, l, r) => {
                let (a, mut prov) = self.expr(l, frame)?;
                let (b, p) = self.expr(r, frame)?;
                merge(&mut prov, &p);
                (self.binary(*op, &a, &b)?, prov)
            }
        })
    }

    fn field(&self, base: &Value, field: &str) -> Result<Value, EvalError> {
        match base {
            Value::Object(o) => match o.field(field) {
                Some(v) => Ok(Value::Number(v as f64)),
                None => self.fail(format!("object has no field `{field}`")),
            },
            Value::Observation(obs) => match field {
                "lives" => Ok(Value::Number(obs.lives as f64)),
                "score" => Ok(Value::Number(obs.score as f64)),
                label => match obs.get(label) {
                    Some(o) => Ok(Value::Object(*o)),
                    None => self.fail(format!("observation has no object `{label}`")),
                },
            },
            other => self.fail(format!("cannot read field `{field}` of {}", other.type_name())),
        }
    }

    fn index(&self, base: &Value, index: &Value) -> Result<Value, EvalError> {
        match (base, index) {
            (Value::List(items), Value::Number(_)) => {
                let Some(i) = index.as_integer() else {
                    return self.fail(format!("list index {index} is not an integer"));
                };
                let len = items.len() as i64;
                let at = if i < 0 { i + len } else { i };
                if (0..len).contains(&at) {
                    Ok(items[at as usize].clone())
                } else {
                    self.fail(format!("list index {i} out of range for length {len}"))
                }
            }
            (Value::Observation(_) | Value::Object(_), Value::Text(key)) => self.field(base, key),
            (b, i) => self.fail(format!("cannot index {} with {}", b.type_name(), i.type_name())),
        }
    }

    fn number(&self, v: &Value, what: &str) -> Result<f64, EvalError> {
        match v {
            Value::Number(n) => Ok(*n),
            other => self.fail(format!("{what} expects a number, got {}", other.type_name())),
        }
    }

    fn binary(&self, op: BinaryOp, a: &Value, b: &Value) -> Result<Value, EvalError> {
        use BinaryOp::*;
        let sym = op.symbol();
        Ok(match op {
            Eq => Value::Bool(a == b),
            Ne => Value::Bool(a != b),
            Lt | Le | Gt | Ge => {
                let ord = match (a, b) {
                    (Value::Number(x), Value::Number(y)) => x.partial_cmp(y),
                    (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
                    _ => {
                        return self.fail(format!(
                            "cannot compare {} {sym} {}",
                            a.type_name(),
                            b.type_name()
                        ))
                    }
                };
                let Some(ord) = ord else {
                    return Ok(Value::Bool(false));
                };
                Value::Bool(match op {
                    Lt => ord.is_lt(),
                    Le => ord.is_le(),
                    Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                })
            }
            In | NotIn => {
                let found = match (a, b) {
                    (Value::Text(label), Value::Observation(obs)) => obs.objects.contains_key(&**label),
                    (_, Value::List(items)) => items.contains(a),
                    _ => {
                        return self.fail(format!(
                            "cannot test {} {sym} {}",
                            a.type_name(),
                            b.type_name()
                        ))
                    }
                };
                Value::Bool(found == (op == In))
            }
            Add => match (a, b) {
                (Value::Number(x), Value::Number(y)) => Value::Number(x + y),
                (Value::Text(x), Value::Text(y)) => Value::text(&format!("{x}{y}")),
                (Value::List(x), Value::List(y)) => {
                    let mut items = Vec::with_capacity(x.len() + y.len());
                    items.extend(x.iter().cloned());
                    items.extend(y.iter().cloned());
                    Value::List(Arc::new(items))
                }
                _ => return self.fail(format!("cannot add {} and {}", a.type_name(), b.type_name())),
            },
            Sub | Mul | Div | FloorDiv | Mod => {
                let (Value::Number(x), Value::Number(y)) = (a, b) else {
                    return self.fail(format!(
                        "unsupported operands for `{sym}`: {} and {}",
                        a.type_name(),
                        b.type_name()
                    ));
                };
                let (x, y) = (*x, *y);
                if matches!(op, Div | FloorDiv | Mod) && y == 0.0 {
                    return self.fail("division by zero");
                }
                Value::Number(match op {
                    Sub => x - y,
                    Mul => x * y,
                    Div => x / y,
                    FloorDiv => (x / y).floor(),
                    _ => x - y * (x / y).floor(),
                })
            }
            And | Or => unreachable!("short-circuit operators are handled in expr"),
        })
    }

    fn builtin(&mut self, name: &str, args: Vec<Tv>) -> Result<Tv, EvalError> {
        let mut prov = Prov::new();
        for (_, p) in &args {
            merge(&mut prov, p);
        }
        let values: Vec<Value> = args.into_iter().map(|(v, _)| v).collect();
        let out = match name {
            "abs" => Value::Number(self.number(&values[0], "abs")?.abs()),
            "floor" => Value::Number(self.number(&values[0], "floor")?.floor()),
            "min" | "max" => {
                let pool: Vec<Value> = match values.as_slice() {
                    [Value::List(items)] => items.to_vec(),
                    _ => values,
                };
                if pool.is_empty() {
                    return self.fail(format!("{name} of an empty list"));
                }
                let mut best = f64::NAN;
                for v in &pool {
                    let n = self.number(v, name)?;
                    if best.is_nan() || (name == "min" && n < best) || (name == "max" && n > best) {
                        best = n;
                    }
                }
                Value::Number(best)
            }
            "len" => Value::Number(match &values[0] {
                Value::List(items) => items.len(),
                Value::Text(s) => s.chars().count(),
                Value::Observation(obs) => obs.objects.len(),
                other => return self.fail(format!("len of {}", other.type_name())),
            } as f64),
            "starts_with" => match (&values[0], &values[1]) {
                (Value::Text(s), Value::Text(p)) => Value::Bool(s.starts_with(&**p)),
                (a, b) => {
                    return self.fail(format!(
                        "starts_with expects text arguments, got {} and {}",
                        a.type_name(),
                        b.type_name()
                    ))
                }
            },
            "random_choice" => match &values[0] {
                Value::List(items) if !items.is_empty() => items[self.rng.random_range(0..items.len())].clone(),
                Value::List(_) => return self.fail("random_choice of an empty list"),
                other => return self.fail(format!("random_choice expects a list, got {}", other.type_name())),
            },
            "random_uniform" => {
                let lo = self.number(&values[0], "random_uniform")?;
                let hi = self.number(&values[1], "random_uniform")?;
                Value::Number(lo + (hi - lo) * self.rng.random::<f64>())
            }
            other => return self.fail(format!("unknown function `{other}`")),
        };
        Ok((out, prov))
    }
}
