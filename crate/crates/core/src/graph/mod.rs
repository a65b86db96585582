//! Operator-graph workloads: tensors, operators, and the producer/consumer DAG.
//!
//! A [`WorkloadGraph`] is built from the JSON IR document (see [`ir`]) and is
//! immutable afterwards. Tensors and nodes are referenced by dense indices
//! internally; the string ids from the IR are kept for reporting and for the
//! deterministic schedule tie-break.

mod ir;
mod schedule;
mod stats;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ir::{parse_workload, serialize_workload};
pub use schedule::{topological_order, Schedule};
pub use stats::{tensor_stats, StatsReport};

/// Index of a tensor inside [`WorkloadGraph::tensors`].
pub type TensorIdx = usize;
/// Index of a node inside [`WorkloadGraph::nodes`].
pub type NodeIdx = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate tensor id `{0}`")]
    DuplicateTensor(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("tensor `{id}`: {reason}")]
    InvalidTensor { id: String, reason: String },
    #[error("node `{node}` references undeclared tensor `{tensor}`")]
    DanglingTensor { node: String, tensor: String },
    #[error("tensor `{tensor}` has multiple producers (`{first}` and `{second}`)")]
    MultipleProducers {
        tensor: String,
        first: String,
        second: String,
    },
    #[error("{kind} tensor `{tensor}` must not be produced (produced by `{node}`)")]
    ProducedSource {
        tensor: String,
        kind: TensorKind,
        node: String,
    },
    #[error("{kind} tensor `{tensor}` has no producer")]
    MissingProducer { tensor: String, kind: TensorKind },
    #[error("dependency cycle detected through node `{0}`")]
    Cycle(String),
    #[error("node `{node}`: {reason}")]
    InvalidAttrs { node: String, reason: String },
    #[error("invalid conv geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Weight,
    Activation,
    Input,
    Output,
}

impl TensorKind {
    /// Inputs and weights live in DRAM before execution and are never produced.
    pub fn is_source(self) -> bool {
        matches!(self, TensorKind::Weight | TensorKind::Input)
    }
}

impl fmt::Display for TensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TensorKind::Weight => "weight",
            TensorKind::Activation => "activation",
            TensorKind::Input => "input",
            TensorKind::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub id: String,
    pub dims: Vec<u64>,
    pub element_bytes: u8,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn elements(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.elements() * u64::from(self.element_bytes)
    }
}

/// Operator classes recognised by the mapper and the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpClass {
    Conv,
    #[serde(rename = "GEMM", alias = "Gemm", alias = "MatMul")]
    Gemm,
    Elementwise,
    Activation,
    #[serde(alias = "Resample")]
    Transform,
    Reduce,
    Softmax,
    #[serde(alias = "Concat")]
    Reshape,
    DataMovement,
}

impl OpClass {
    pub const ALL: [OpClass; 9] = [
        OpClass::Conv,
        OpClass::Gemm,
        OpClass::Elementwise,
        OpClass::Activation,
        OpClass::Transform,
        OpClass::Reduce,
        OpClass::Softmax,
        OpClass::Reshape,
        OpClass::DataMovement,
    ];

    /// Stable lower-case key used in config files and reports.
    pub fn key(self) -> &'static str {
        match self {
            OpClass::Conv => "conv",
            OpClass::Gemm => "gemm",
            OpClass::Elementwise => "elementwise",
            OpClass::Activation => "activation",
            OpClass::Transform => "transform",
            OpClass::Reduce => "reduce",
            OpClass::Softmax => "softmax",
            OpClass::Reshape => "reshape",
            OpClass::DataMovement => "data_movement",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Conv and GEMM are the MAC-heavy classes that receive a tiling search.
    pub fn is_tiled(self) -> bool {
        matches!(self, OpClass::Conv | OpClass::Gemm)
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvAttrs {
    pub k_h: u64,
    pub k_w: u64,
    pub stride: u64,
    pub pad: u64,
    pub c_in: u64,
    pub c_out: u64,
    pub h_in: u64,
    pub w_in: u64,
}

impl ConvAttrs {
    pub fn output_dims(&self) -> Result<(u64, u64), GraphError> {
        conv_output_dims(self)
    }

    pub fn weight_elements(&self) -> u64 {
        self.c_in * self.c_out * self.k_h * self.k_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmAttrs {
    pub m: u64,
    pub n: u64,
    pub k: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpAttrs {
    Conv(ConvAttrs),
    Gemm(GemmAttrs),
    /// Free-form attributes of streamed operators; carried through untouched.
    Other(serde_json::Map<String, serde_json::Value>),
}

/// An operator absorbed into its producer by fusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusedOp {
    pub id: String,
    pub op_class: OpClass,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNode {
    pub id: String,
    pub op_class: OpClass,
    pub inputs: Vec<TensorIdx>,
    pub outputs: Vec<TensorIdx>,
    pub attrs: OpAttrs,
    /// Operation count of this node alone (epilogue excluded).
    pub flops: u64,
    pub epilogue: Vec<FusedOp>,
}

impl OperatorNode {
    pub fn conv(&self) -> Option<&ConvAttrs> {
        match &self.attrs {
            OpAttrs::Conv(c) => Some(c),
            _ => None,
        }
    }

    pub fn gemm(&self) -> Option<&GemmAttrs> {
        match &self.attrs {
            OpAttrs::Gemm(g) => Some(g),
            _ => None,
        }
    }

    pub fn total_flops(&self) -> u64 {
        self.flops + self.epilogue.iter().map(|e| e.flops).sum::<u64>()
    }
}

/// H_out/W_out of a convolution: `floor((in - k + 2 pad) / stride) + 1` per axis.
pub fn conv_output_dims(attrs: &ConvAttrs) -> Result<(u64, u64), GraphError> {
    if attrs.k_h == 0 || attrs.k_w == 0 {
        return Err(GraphError::InvalidGeometry(
            "kernel extent must be >= 1".into(),
        ));
    }
    if attrs.stride == 0 {
        return Err(GraphError::InvalidGeometry("stride must be >= 1".into()));
    }
    let axis = |extent: u64, k: u64, name: &str| -> Result<u64, GraphError> {
        let padded = extent + 2 * attrs.pad;
        if extent == 0 || padded < k {
            return Err(GraphError::InvalidGeometry(format!(
                "{name}: input {extent} with pad {} is smaller than kernel {k}",
                attrs.pad
            )));
        }
        Ok((padded - k) / attrs.stride + 1)
    };
    Ok((
        axis(attrs.h_in, attrs.k_h, "H")?,
        axis(attrs.w_in, attrs.k_w, "W")?,
    ))
}

/// Validated operator DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadGraph {
    pub name: String,
    pub tensors: Vec<TensorSpec>,
    pub nodes: Vec<OperatorNode>,
    tensor_index: HashMap<String, TensorIdx>,
    producer: Vec<Option<NodeIdx>>,
    consumers: Vec<Vec<NodeIdx>>,
}

impl WorkloadGraph {
    /// Builds and validates a graph. Every structural invariant is checked here,
    /// so a `WorkloadGraph` value is always acyclic and fully resolved.
    pub fn new(
        name: String,
        tensors: Vec<TensorSpec>,
        nodes: Vec<OperatorNode>,
    ) -> Result<Self, GraphError> {
        let mut tensor_index = HashMap::with_capacity(tensors.len());
        for (i, t) in tensors.iter().enumerate() {
            validate_tensor(t)?;
            if tensor_index.insert(t.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateTensor(t.id.clone()));
            }
        }

        let mut seen_nodes = HashMap::with_capacity(nodes.len());
        let mut producer: Vec<Option<NodeIdx>> = vec![None; tensors.len()];
        let mut consumers: Vec<Vec<NodeIdx>> = vec![Vec::new(); tensors.len()];
        for (n, node) in nodes.iter().enumerate() {
            if seen_nodes.insert(node.id.as_str(), n).is_some() {
                return Err(GraphError::DuplicateNode(node.id.clone()));
            }
            for &t in node.inputs.iter().chain(&node.outputs) {
                if t >= tensors.len() {
                    return Err(GraphError::DanglingTensor {
                        node: node.id.clone(),
                        tensor: format!("#{t}"),
                    });
                }
            }
            for &t in &node.inputs {
                if !consumers[t].contains(&n) {
                    consumers[t].push(n);
                }
            }
            for &t in &node.outputs {
                let spec = &tensors[t];
                if spec.kind.is_source() {
                    return Err(GraphError::ProducedSource {
                        tensor: spec.id.clone(),
                        kind: spec.kind,
                        node: node.id.clone(),
                    });
                }
                if let Some(prev) = producer[t] {
                    return Err(GraphError::MultipleProducers {
                        tensor: spec.id.clone(),
                        first: nodes[prev].id.clone(),
                        second: node.id.clone(),
                    });
                }
                producer[t] = Some(n);
            }
            validate_attrs(node)?;
        }
        for (t, spec) in tensors.iter().enumerate() {
            if !spec.kind.is_source() && producer[t].is_none() {
                return Err(GraphError::MissingProducer {
                    tensor: spec.id.clone(),
                    kind: spec.kind,
                });
            }
        }

        let graph = WorkloadGraph {
            name,
            tensors,
            nodes,
            tensor_index,
            producer,
            consumers,
        };
        schedule::check_acyclic(&graph)?;
        Ok(graph)
    }

    pub fn tensor(&self, idx: TensorIdx) -> &TensorSpec {
        &self.tensors[idx]
    }

    pub fn tensor_by_id(&self, id: &str) -> Option<TensorIdx> {
        self.tensor_index.get(id).copied()
    }

    pub fn node_by_id(&self, id: &str) -> Option<NodeIdx> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn producer(&self, t: TensorIdx) -> Option<NodeIdx> {
        self.producer[t]
    }

    /// Distinct consuming nodes of `t`, in node declaration order.
    pub fn consumers(&self, t: TensorIdx) -> &[NodeIdx] {
        &self.consumers[t]
    }

    /// Nodes that consume an output of `n`.
    pub fn successors(&self, n: NodeIdx) -> impl Iterator<Item = NodeIdx> + '_ {
        self.nodes[n]
            .outputs
            .iter()
            .flat_map(move |&t| self.consumers[t].iter().copied())
    }

    pub fn total_footprint_bytes(&self) -> u64 {
        self.tensors.iter().map(TensorSpec::footprint_bytes).sum()
    }

    /// Weight footprint consumed by node `n` (sum over weight-kind inputs).
    pub fn node_weight_bytes(&self, n: NodeIdx) -> u64 {
        self.nodes[n]
            .inputs
            .iter()
            .map(|&t| &self.tensors[t])
            .filter(|t| t.kind == TensorKind::Weight)
            .map(TensorSpec::footprint_bytes)
            .sum()
    }
}

fn validate_tensor(t: &TensorSpec) -> Result<(), GraphError> {
    let invalid = |reason: &str| GraphError::InvalidTensor {
        id: t.id.clone(),
        reason: reason.to_string(),
    };
    if t.id.is_empty() {
        return Err(invalid("empty id"));
    }
    if t.dims.is_empty() {
        return Err(invalid("dims must not be empty"));
    }
    if t.dims.contains(&0) {
        return Err(invalid("all extents must be >= 1"));
    }
    if !matches!(t.element_bytes, 1 | 2 | 4) {
        return Err(invalid("element_bytes must be 1, 2 or 4"));
    }
    t.dims
        .iter()
        .try_fold(u64::from(t.element_bytes), |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| invalid("footprint overflows 64 bits"))?;
    Ok(())
}

fn validate_attrs(node: &OperatorNode) -> Result<(), GraphError> {
    let invalid = |reason: String| GraphError::InvalidAttrs {
        node: node.id.clone(),
        reason,
    };
    match (&node.op_class, &node.attrs) {
        (OpClass::Conv, OpAttrs::Conv(c)) => {
            if c.c_in == 0 || c.c_out == 0 {
                return Err(invalid("channel counts must be >= 1".into()));
            }
            conv_output_dims(c).map_err(|e| invalid(e.to_string()))?;
        }
        (OpClass::Gemm, OpAttrs::Gemm(g)) => {
            if g.m == 0 || g.n == 0 || g.k == 0 {
                return Err(invalid("GEMM extents must be >= 1".into()));
            }
        }
        (OpClass::Conv, _) => return Err(invalid("Conv requires conv attrs".into())),
        (OpClass::Gemm, _) => return Err(invalid("GEMM requires m, n, k attrs".into())),
        (_, OpAttrs::Other(_)) => {}
        (class, _) => return Err(invalid(format!("{class} does not take conv/gemm attrs"))),
    }
    if node.outputs.is_empty() {
        return Err(invalid("node must produce at least one tensor".into()));
    }
    Ok(())
}

/// Operation count of a node under the fixed per-class conventions:
/// Conv `2·Cin·Cout·Kh·Kw·Hout·Wout`, GEMM `2·M·N·K`, Elementwise/Activation
/// one op per output element, Reduce two per input element, Softmax two per
/// output element, Transform four per output element, layout ops zero.
pub(crate) fn node_flops(
    class: OpClass,
    attrs: &OpAttrs,
    inputs: &[TensorIdx],
    outputs: &[TensorIdx],
    tensors: &[TensorSpec],
) -> u64 {
    let elems = |ts: &[TensorIdx]| -> u64 { ts.iter().map(|&t| tensors[t].elements()).sum() };
    match (class, attrs) {
        (OpClass::Conv, OpAttrs::Conv(c)) => match conv_output_dims(c) {
            Ok((h, w)) => 2 * c.c_in * c.c_out * c.k_h * c.k_w * h * w,
            Err(_) => 0,
        },
        (OpClass::Gemm, OpAttrs::Gemm(g)) => 2 * g.m * g.n * g.k,
        (OpClass::Elementwise | OpClass::Activation, _) => elems(outputs),
        (OpClass::Reduce, _) => 2 * elems(inputs),
        (OpClass::Softmax, _) => 2 * elems(outputs),
        (OpClass::Transform, _) => 4 * elems(outputs),
        _ => 0,
    }
}
