use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::{ObjectState, Observation};

/// Runtime value of the policy language. Object and observation views are
/// read-only; nothing in the language can mutate them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Number(f64),
    Bool(bool),
    None,
    Text(Arc<str>),
    Object(ObjectState),
    Observation(Arc<Observation>),
    List(Arc<Vec<Value>>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Bool(_) => "boolean",
            Value::None => "none",
            Value::Text(_) => "text",
            Value::Object(_) => "object",
            Value::Observation(_) => "observation",
            Value::List(_) => "list",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Number(n) => *n != 0.0,
            Value::Bool(b) => *b,
            Value::None => false,
            Value::Text(s) => !s.is_empty(),
            Value::Object(_) => true,
            Value::Observation(o) => !o.objects.is_empty(),
            Value::List(items) => !items.is_empty(),
        }
    }

    pub fn text(s: &str) -> Value {
        Value::Text(Arc::from(s))
    }

    pub fn observation(obs: Observation) -> Value {
        Value::Observation(Arc::new(obs))
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Integer view of a number that is finite and integral.
    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Value::Number(n) if n.is_finite() && n.fract() == 0.0 && n.abs() < 9.0e15 => Some(*n as i64),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::None, Value::None) => true,
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Object(a), Value::Object(b)) => a == b,
            (Value::Observation(a), Value::Observation(b)) => a == b,
            (Value::List(a), Value::List(b)) => a == b,
            _ => false,
        }
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Number(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<Observation> for Value {
    fn from(obs: Observation) -> Self {
        Value::observation(obs)
    }
}

impl From<ObjectState> for Value {
    fn from(o: ObjectState) -> Self {
        Value::Object(o)
    }
}

/// Compact one-line rendering used in traces and error messages.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{}", super::format::format_number(*n)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::None => f.write_str("none"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Object(o) => write!(
                f,
                "{{x={}, y={}, w={}, h={}, dx={:+}, dy={:+}}}",
                o.x, o.y, o.w, o.h, o.dx, o.dy
            ),
            Value::Observation(o) => write!(f, "<observation: {} objects>", o.objects.len()),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}
