//! Execution traces: an append-only DAG of policy invocations over a rollout,
//! backward propagation of feedback to trainable functions, and rendering of
//! a size-bounded slice for the optimizer prompt.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::dsl::Value;
use crate::envs::{ObjectState, Observation};

pub type NodeId = usize;

/// Default prompt budget for trace slices, in characters.
pub const DEFAULT_CHAR_BUDGET: usize = 60_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("unknown trace node {0}")]
    UnknownNode(NodeId),
    #[error("node input {input} does not precede the node being recorded")]
    Dangling { input: NodeId },
    #[error("step {0} already has an output node")]
    DuplicateStep(u32),
    #[error("trace slice needs at least {needed} characters but the budget is {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("malformed trace dump: {0}")]
    Dump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Parameter,
    Call,
}

/// One recorded value. Field by field:
///
/// - `id`: 1-based, strictly increasing in insertion order;
/// - `kind`: `input` (an observation or other external value), `parameter`
///   (a function's code at rollout time, output = its source), or `call`;
/// - `function`: called or parameterised function, or the input's label;
/// - `inputs`: ids of data dependencies, all smaller than `id`;
/// - `parameter`: for calls, the id of the called function's parameter node;
/// - `trainable`: whether the function may be rewritten by the optimizer;
/// - `output`: value snapshot;
/// - `step_index`: rollout step, absent for parameters;
/// - `step_reward` / `step_seed`: set on the node that produced a step's
///   action, with the environment reward and interpreter seed of that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub function: String,
    pub inputs: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<NodeId>,
    pub trainable: bool,
    pub output: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_seed: Option<u64>,
}

/// Feedback routed to one trainable function together with the part of the
/// graph that explains its influence on the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBinding {
    pub parameter: String,
    pub subgraph: Vec<NodeId>,
    pub feedback: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceGraph {
    nodes: Vec<TraceNode>,
    parameters: BTreeMap<String, NodeId>,
    outputs_per_step: BTreeMap<u32, NodeId>,
}

impl TraceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TraceNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&TraceNode, TraceError> {
        id.checked_sub(1)
            .and_then(|i| self.nodes.get(i))
            .ok_or(TraceError::UnknownNode(id))
    }

    pub fn outputs_per_step(&self) -> &BTreeMap<u32, NodeId> {
        &self.outputs_per_step
    }

    /// Output node of the latest recorded step.
    pub fn last_output(&self) -> Option<NodeId> {
        self.outputs_per_step.values().next_back().copied()
    }

    pub fn parameter(&self, function: &str) -> Option<NodeId> {
        self.parameters.get(function).copied()
    }

    fn push(&mut self, mut node: TraceNode) -> Result<NodeId, TraceError> {
        let id = self.nodes.len() + 1;
        for &input in node.inputs.iter().chain(node.parameter.iter()) {
            if input == 0 || input >= id {
                return Err(TraceError::Dangling { input });
            }
        }
        node.id = id;
        self.nodes.push(node);
        Ok(id)
    }

    /// Register the code of `function`; later calls to it link to this node.
    pub fn add_parameter(&mut self, function: &str, trainable: bool, source: &str) -> NodeId {
        let id = self
            .push(TraceNode {
                id: 0,
                kind: NodeKind::Parameter,
                function: function.to_string(),
                inputs: Vec::new(),
                parameter: None,
                trainable,
                output: Value::text(source),
                step_index: None,
                step_reward: None,
                step_seed: None,
            })
            .expect("parameter nodes have no inputs");
        self.parameters.insert(function.to_string(), id);
        id
    }

    /// Record an external value such as an observation.
    pub fn add_input(
        &mut self,
        label: &str,
        inputs: &[NodeId],
        output: Value,
        step_index: Option<u32>,
    ) -> Result<NodeId, TraceError> {
        self.push(TraceNode {
            id: 0,
            kind: NodeKind::Input,
            function: label.to_string(),
            inputs: inputs.to_vec(),
            parameter: None,
            trainable: false,
            output,
            step_index,
            step_reward: None,
            step_seed: None,
        })
    }

    /// Record one invocation of `function`. If a parameter node was
    /// registered for it, the call links to it and inherits its trainable flag.
    pub fn record_call(
        &mut self,
        function: &str,
        inputs: &[NodeId],
        output: Value,
        step_index: Option<u32>,
    ) -> Result<NodeId, TraceError> {
        let parameter = self.parameters.get(function).copied();
        let trainable = parameter.is_some_and(|p| self.nodes[p - 1].trainable);
        self.push(TraceNode {
            id: 0,
            kind: NodeKind::Call,
            function: function.to_string(),
            inputs: inputs.to_vec(),
            parameter,
            trainable,
            output,
            step_index,
            step_reward: None,
            step_seed: None,
        })
    }

    /// Mark `node` as the output of rollout step `step`.
    pub fn set_step_output(&mut self, step: u32, node: NodeId, reward: f64, seed: u64) -> Result<(), TraceError> {
        self.node(node)?;
        if self.outputs_per_step.contains_key(&step) {
            return Err(TraceError::DuplicateStep(step));
        }
        self.outputs_per_step.insert(step, node);
        let n = &mut self.nodes[node - 1];
        n.step_reward = Some(reward);
        n.step_seed = Some(seed);
        Ok(())
    }

    fn predecessors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let n = &self.nodes[id - 1];
        n.inputs.iter().copied().chain(n.parameter)
    }

    /// `target` and everything it transitively depends on, as a membership mask.
    fn ancestors(&self, target: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len() + 1];
        let mut stack = vec![target];
        seen[target] = true;
        while let Some(id) = stack.pop() {
            for p in self.predecessors(id) {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// One binding per trainable function with a call among the ancestors of
    /// `target`. A binding's subgraph holds every ancestor of the target that
    /// lies on a path through one of that function's calls.
    pub fn backward(&self, target: NodeId, feedback: &str) -> Result<Vec<FeedbackBinding>, TraceError> {
        self.node(target)?;
        let anc = self.ancestors(target);
        let mut calls: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in &self.nodes {
            if anc[n.id] && n.kind == NodeKind::Call && n.trainable {
                if let Some(p) = n.parameter {
                    calls.entry(p).or_default().push(n.id);
                }
            }
        }
        let mut successors: Vec<Vec<NodeId>> = vec![Vec::new(); self.nodes.len() + 1];
        for n in &self.nodes {
            if anc[n.id] {
                for p in self.predecessors(n.id) {
                    successors[p].push(n.id);
                }
            }
        }
        let mut bindings = Vec::new();
        for (param, call_ids) in calls {
            let mut member = vec![false; self.nodes.len() + 1];
            // upstream of the calls
            let mut stack = call_ids.clone();
            for &c in &call_ids {
                member[c] = true;
            }
            while let Some(id) = stack.pop() {
                for p in self.predecessors(id) {
                    if !member[p] {
                        member[p] = true;
                        stack.push(p);
                    }
                }
            }
            // downstream of the calls, within the target's ancestry
            let mut down = vec![false; self.nodes.len() + 1];
            let mut stack = call_ids.clone();
            while let Some(id) = stack.pop() {
                for &s in &successors[id] {
                    if !down[s] {
                        down[s] = true;
                        member[s] = true;
                        stack.push(s);
                    }
                }
            }
            bindings.push(FeedbackBinding {
                parameter: self.nodes[param - 1].function.clone(),
                subgraph: (1..=self.nodes.len()).filter(|&i| member[i]).collect(),
                feedback: feedback.to_string(),
            });
        }
        Ok(bindings)
    }

    /// Render the union of the bindings' subgraphs, newest steps kept first,
    /// dropping whole oldest steps until the text fits `char_budget`.
    /// Retained steps are printed oldest to newest; the oldest shows every
    /// object and later ones only objects that changed.
    pub fn extract_prompt_slice(&self, bindings: &[FeedbackBinding], char_budget: usize) -> Result<String, TraceError> {
        let mut union = BTreeSet::new();
        for b in bindings {
            for &id in &b.subgraph {
                self.node(id)?;
                union.insert(id);
            }
        }
        let mut params = Vec::new();
        let mut by_step: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
        for &id in &union {
            let n = &self.nodes[id - 1];
            match n.step_index {
                Some(s) => by_step.entry(s).or_default().push(id),
                None if n.kind == NodeKind::Parameter => params.push(id),
                None => by_step.entry(u32::MAX).or_default().push(id),
            }
        }
        let steps: Vec<(u32, Vec<NodeId>)> = by_step.into_iter().collect();
        let total = steps.len();
        let header = |k: usize| -> String {
            let mut h = String::new();
            let shown = &steps[total - k..];
            let _ = write!(h, "TRACE: {total} step(s) recorded, showing the {k} most recent");
            if let (Some(first), Some(last)) = (shown.first(), shown.last()) {
                let _ = write!(h, " (steps {}..{})", first.0, last.0);
            }
            h.push('\n');
            if !params.is_empty() {
                h.push_str("parameters:");
                for &p in &params {
                    let n = &self.nodes[p - 1];
                    let _ = write!(h, " {} #{}{}", n.function, p, if n.trainable { " (trainable)" } else { "" });
                }
                h.push('\n');
            }
            h
        };
        if total == 0 {
            let text = header(0);
            if text.len() > char_budget {
                return Err(TraceError::Budget {
                    needed: text.len(),
                    budget: char_budget,
                });
            }
            return Ok(text);
        }
        // deltas[i]: rendering of step i relative to step i-1
        let full: Vec<String> = (0..total).map(|i| self.render_step(&steps[i], None)).collect();
        let delta: Vec<String> = (0..total)
            .map(|i| {
                if i == 0 {
                    full[0].clone()
                } else {
                    self.render_step(&steps[i], self.step_observation(&steps[i - 1].1))
                }
            })
            .collect();
        let cost = |k: usize, deltas: usize| header(k).len() + full[total - k].len() + deltas;
        let first = cost(1, 0);
        if first > char_budget {
            return Err(TraceError::Budget {
                needed: first,
                budget: char_budget,
            });
        }
        let mut keep = 1;
        let mut deltas = 0;
        while keep < total {
            let next_deltas = deltas + delta[total - keep].len();
            if cost(keep + 1, next_deltas) > char_budget {
                break;
            }
            keep += 1;
            deltas = next_deltas;
        }
        let mut out = header(keep);
        out.push_str(&full[total - keep]);
        for d in &delta[total - keep + 1..] {
            out.push_str(d);
        }
        Ok(out)
    }

    fn step_observation(&self, ids: &[NodeId]) -> Option<&Observation> {
        ids.iter().rev().find_map(|&id| match &self.nodes[id - 1].output {
            Value::Observation(o) if self.nodes[id - 1].kind == NodeKind::Input => Some(&**o),
            _ => None,
        })
    }

    fn render_step(&self, (step, ids): &(u32, Vec<NodeId>), previous: Option<&Observation>) -> String {
        let mut out = String::new();
        if *step == u32::MAX {
            out.push_str("[unstepped]\n");
        } else {
            let _ = write!(out, "[step {step}]");
            if let Some(r) = ids.iter().find_map(|&id| self.nodes[id - 1].step_reward) {
                let _ = write!(out, " reward={}", signed(r));
            }
            out.push('\n');
        }
        for &id in ids {
            let n = &self.nodes[id - 1];
            match (&n.kind, &n.output) {
                (NodeKind::Input, Value::Observation(obs)) => {
                    let _ = write!(out, "  #{id} {}", n.function);
                    if !n.inputs.is_empty() {
                        let _ = write!(out, " <- {}", refs(&n.inputs));
                    }
                    let _ = writeln!(out, ": lives={} score={}", obs.lives, obs.score);
                    render_objects(&mut out, obs, previous);
                }
                (NodeKind::Input, v) => {
                    let _ = writeln!(out, "  #{id} {} = {v}", n.function);
                }
                (_, v) => {
                    let _ = write!(out, "  #{id} {}({}) -> {v}", n.function, refs(&n.inputs));
                    if n.step_reward.is_some() {
                        out.push_str("  [action]");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Serialise as a JSON array of nodes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.nodes).expect("trace nodes serialise")
    }

    pub fn from_json(text: &str) -> Result<TraceGraph, TraceError> {
        let nodes: Vec<TraceNode> = serde_json::from_str(text).map_err(|e| TraceError::Dump(e.to_string()))?;
        let mut graph = TraceGraph::new();
        for (i, node) in nodes.into_iter().enumerate() {
            if node.id != i + 1 {
                return Err(TraceError::Dump(format!("node at position {} has id {}", i + 1, node.id)));
            }
            let (step, reward, seed) = (node.step_index, node.step_reward, node.step_seed);
            if node.kind == NodeKind::Parameter {
                graph.parameters.insert(node.function.clone(), node.id);
            }
            let id = graph.push(node)?;
            if let (Some(step), Some(_)) = (step, reward) {
                if graph.outputs_per_step.insert(step, id).is_some() {
                    return Err(TraceError::DuplicateStep(step));
                }
                let n = &mut graph.nodes[id - 1];
                n.step_reward = reward;
                n.step_seed = seed;
            }
        }
        Ok(graph)
    }
}

fn signed(x: f64) -> String {
    if x > 0.0 {
        format!("+{x}")
    } else {
        format!("{x}")
    }
}

fn refs(ids: &[NodeId]) -> String {
    ids.iter().map(|i| format!("#{i}")).collect::<Vec<_>>().join(", ")
}

/// One line per object, e.g. `Ball x=152 y=120 w=2 h=4 dx=+6 dy=+4`.
pub fn object_line(label: &str, o: &ObjectState) -> String {
    format!(
        "{label} x={} y={} w={} h={} dx={:+} dy={:+}",
        o.x, o.y, o.w, o.h, o.dx, o.dy
    )
}

fn render_objects(out: &mut String, obs: &Observation, previous: Option<&Observation>) {
    for (label, o) in &obs.objects {
        if previous.and_then(|p| p.get(label)) != Some(o) {
            let _ = writeln!(out, "    {}", object_line(label, o));
        }
    }
    if let Some(p) = previous {
        for label in p.objects.keys().filter(|l| !obs.objects.contains_key(*l)) {
            let _ = writeln!(out, "    {label} gone");
        }
    }
}
