//! JSON workload IR.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "tensors": [
//!     {"id": "x", "dims": [1, 3, 8, 8], "element_bytes": 4, "kind": "input"},
//!     {"id": "w", "dims": [4, 3, 3, 3], "kind": "weight"},
//!     {"id": "y", "dims": [1, 4, 8, 8], "kind": "output"}
//!   ],
//!   "nodes": [
//!     {"id": "conv0", "op_class": "Conv", "inputs": ["x", "w"], "outputs": ["y"],
//!      "attrs": {"k_h": 3, "k_w": 3, "stride": 1, "pad": 1,
//!                "c_in": 3, "c_out": 4, "h_in": 8, "w_in": 8}}
//!   ]
//! }
//! ```
//!
//! `element_bytes` defaults to 4. Conv and GEMM nodes require their attribute
//! sets; other classes accept arbitrary attributes, which are preserved.

use serde::{Deserialize, Serialize};

use super::{
    node_flops, ConvAttrs, FusedOp, GemmAttrs, GraphError, OpAttrs, OpClass, OperatorNode,
    TensorKind, TensorSpec, WorkloadGraph,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IrDocument {
    name: String,
    tensors: Vec<IrTensor>,
    #[serde(default)]
    nodes: Vec<IrNode>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IrTensor {
    id: String,
    dims: Vec<u64>,
    #[serde(default = "default_element_bytes")]
    element_bytes: u8,
    kind: TensorKind,
}

fn default_element_bytes() -> u8 {
    4
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IrNode {
    id: String,
    op_class: OpClass,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    attrs: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    epilogue: Vec<FusedOp>,
}

/// Parses and validates a workload from its JSON text.
pub fn parse_workload(text: &str) -> Result<WorkloadGraph, GraphError> {
    let doc: IrDocument = serde_json::from_str(text).map_err(|e| GraphError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_document(doc)
}

fn from_document(doc: IrDocument) -> Result<WorkloadGraph, GraphError> {
    let tensors: Vec<TensorSpec> = doc
        .tensors
        .into_iter()
        .map(|t| TensorSpec {
            id: t.id,
            dims: t.dims,
            element_bytes: t.element_bytes,
            kind: t.kind,
        })
        .collect();
    // Resolve ids against the declared tensors before the graph builder sees
    // indices, so dangling references are reported by name.
    let lookup: std::collections::HashMap<&str, usize> = tensors
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in doc.nodes {
        let resolve = |ids: &[String]| -> Result<Vec<usize>, GraphError> {
            ids.iter()
                .map(|id| {
                    lookup
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| GraphError::DanglingTensor {
                            node: n.id.clone(),
                            tensor: id.clone(),
                        })
                })
                .collect()
        };
        let inputs = resolve(&n.inputs)?;
        let outputs = resolve(&n.outputs)?;
        let attrs = decode_attrs(&n.id, n.op_class, n.attrs)?;
        let flops = node_flops(n.op_class, &attrs, &inputs, &outputs, &tensors);
        nodes.push(OperatorNode {
            id: n.id,
            op_class: n.op_class,
            inputs,
            outputs,
            attrs,
            flops,
            epilogue: n.epilogue,
        });
    }
    WorkloadGraph::new(doc.name, tensors, nodes)
}

fn decode_attrs(
    node: &str,
    class: OpClass,
    raw: serde_json::Map<String, serde_json::Value>,
) -> Result<OpAttrs, GraphError> {
    let invalid = |e: serde_json::Error| GraphError::InvalidAttrs {
        node: node.to_string(),
        reason: e.to_string(),
    };
    Ok(match class {
        OpClass::Conv => OpAttrs::Conv(
            serde_json::from_value::<ConvAttrs>(serde_json::Value::Object(raw)).map_err(invalid)?,
        ),
        OpClass::Gemm => OpAttrs::Gemm(
            serde_json::from_value::<GemmAttrs>(serde_json::Value::Object(raw)).map_err(invalid)?,
        ),
        _ => OpAttrs::Other(raw),
    })
}

/// Pretty-printed JSON for `graph`; [`parse_workload`] reads it back unchanged.
pub fn serialize_workload(graph: &WorkloadGraph) -> String {
    let ids =
        |ts: &[usize]| -> Vec<String> { ts.iter().map(|&t| graph.tensors[t].id.clone()).collect() };
    let doc = IrDocument {
        name: graph.name.clone(),
        tensors: graph
            .tensors
            .iter()
            .map(|t| IrTensor {
                id: t.id.clone(),
                dims: t.dims.clone(),
                element_bytes: t.element_bytes,
                kind: t.kind,
            })
            .collect(),
        nodes: graph
            .nodes
            .iter()
            .map(|n| IrNode {
                id: n.id.clone(),
                op_class: n.op_class,
                inputs: ids(&n.inputs),
                outputs: ids(&n.outputs),
                attrs: match &n.attrs {
                    OpAttrs::Conv(c) => object(c),
                    OpAttrs::Gemm(g) => object(g),
                    OpAttrs::Other(m) => m.clone(),
                },
                epilogue: n.epilogue.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("IR document is always serializable");
    text.push('\n');
    text
}

fn object<T: Serialize>(value: &T) -> serde_json::Map<String, serde_json::Value> {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => unreachable!("attribute structs serialize to objects"),
    }
}
