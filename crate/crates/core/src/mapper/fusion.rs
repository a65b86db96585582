//! Tile-local producer/consumer fusion.
//!
//! Two patterns are fused: Conv/GEMM followed by a unary activation, and an
//! elementwise op followed by an activation. The intermediate must have a single
//! consumer, keep its shape through the activation, and not be a graph output.
//! Layout ops (reshape, concat, data movement) are never fused across.

use serde::Serialize;

use crate::graph::{topological_order, FusedOp, OpClass, OperatorNode, TensorKind, WorkloadGraph};

/// One applied fusion. The intermediate tensor stays in L1 and is dropped from
/// the fused graph, so it generates no LLC or DRAM traffic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FusionRecord {
    pub producer: String,
    pub consumer: String,
    pub intermediate: String,
    pub intermediate_bytes: u64,
}

pub fn apply_fusion(graph: &WorkloadGraph) -> (WorkloadGraph, Vec<FusionRecord>) {
    let schedule = topological_order(graph);
    let mut taken = vec![false; graph.nodes.len()];
    // consumer node -> (producer node, intermediate tensor)
    let mut pairs = Vec::new();

    for &c in &schedule.order {
        let consumer = &graph.nodes[c];
        if taken[c] || consumer.op_class != OpClass::Activation {
            continue;
        }
        let mut inputs = consumer.inputs.clone();
        inputs.dedup();
        let ([t], [out]) = (inputs.as_slice(), consumer.outputs.as_slice()) else {
            continue;
        };
        let Some(p) = graph.producer(*t) else {
            continue;
        };
        let producer = &graph.nodes[p];
        let eligible_producer = matches!(
            producer.op_class,
            OpClass::Conv | OpClass::Gemm | OpClass::Elementwise
        );
        let intermediate = graph.tensor(*t);
        if taken[p]
            || !eligible_producer
            || producer.outputs.len() != 1
            || graph.consumers(*t) != [c]
            || intermediate.kind != TensorKind::Activation
            || intermediate.dims != graph.tensor(*out).dims
        {
            continue;
        }
        taken[p] = true;
        taken[c] = true;
        pairs.push((p, c, *t));
    }

    if pairs.is_empty() {
        return (graph.clone(), Vec::new());
    }

    let mut removed_tensor = vec![false; graph.tensors.len()];
    let mut absorbed = vec![None; graph.nodes.len()];
    for &(p, c, t) in &pairs {
        removed_tensor[t] = true;
        absorbed[p] = Some(c);
    }
    let consumer_of: Vec<bool> = {
        let mut v = vec![false; graph.nodes.len()];
        for &(_, c, _) in &pairs {
            v[c] = true;
        }
        v
    };

    let mut remap = vec![usize::MAX; graph.tensors.len()];
    let mut tensors = Vec::with_capacity(graph.tensors.len() - pairs.len());
    for (i, t) in graph.tensors.iter().enumerate() {
        if !removed_tensor[i] {
            remap[i] = tensors.len();
            tensors.push(t.clone());
        }
    }
    let map = |ts: &[usize]| -> Vec<usize> { ts.iter().map(|&t| remap[t]).collect() };

    let mut nodes: Vec<OperatorNode> = Vec::with_capacity(graph.nodes.len() - pairs.len());
    for (i, node) in graph.nodes.iter().enumerate() {
        if consumer_of[i] {
            continue;
        }
        let mut merged = node.clone();
        if let Some(c) = absorbed[i] {
            let consumer = &graph.nodes[c];
            merged.outputs = consumer.outputs.clone();
            merged.epilogue.push(FusedOp {
                id: consumer.id.clone(),
                op_class: consumer.op_class,
                flops: consumer.flops,
            });
            merged.epilogue.extend(consumer.epilogue.iter().cloned());
        }
        merged.inputs = map(&merged.inputs);
        merged.outputs = map(&merged.outputs);
        nodes.push(merged);
    }

    let records = pairs
        .iter()
        .map(|&(p, c, t)| FusionRecord {
            producer: graph.nodes[p].id.clone(),
            consumer: graph.nodes[c].id.clone(),
            intermediate: graph.tensor(t).id.clone(),
            intermediate_bytes: graph.tensor(t).footprint_bytes(),
        })
        .collect();
    let fused = WorkloadGraph::new(graph.name.clone(), tensors, nodes)
        .expect("fusion preserves graph invariants");
    (fused, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_workload;

    const CONV: &str = r#""attrs": {"k_h": 3, "k_w": 3, "stride": 1, "pad": 1,
                                     "c_in": 2, "c_out": 2, "h_in": 4, "w_in": 4}"#;

    fn graph(body: &str) -> WorkloadGraph {
        parse_workload(&format!(
            r#"{{"name": "f", "tensors": [
                {{"id": "x", "dims": [1, 2, 4, 4], "kind": "input"}},
                {{"id": "w", "dims": [2, 2, 3, 3], "kind": "weight"}},
                {{"id": "a", "dims": [1, 2, 4, 4], "kind": "activation"}},
                {{"id": "b", "dims": [1, 2, 4, 4], "kind": "activation"}},
                {{"id": "y", "dims": [1, 2, 4, 4], "kind": "output"}}],
              "nodes": [{body}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn conv_relu_fused() {
        let g = graph(&format!(
            r#"{{"id": "conv", "op_class": "Conv", "inputs": ["x", "w"], "outputs": ["a"], {CONV}}},
               {{"id": "relu", "op_class": "Activation", "inputs": ["a"], "outputs": ["b"]}},
               {{"id": "tail", "op_class": "Activation", "inputs": ["b"], "outputs": ["y"]}}"#
        ));
        let (fused, records) = apply_fusion(&g);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].producer, "conv");
        assert_eq!(records[0].consumer, "relu");
        assert_eq!(records[0].intermediate, "a");
        assert_eq!(fused.nodes.len(), 2);
        assert!(fused.tensor_by_id("a").is_none());
        let conv = &fused.nodes[fused.node_by_id("conv").unwrap()];
        assert_eq!(fused.tensor(conv.outputs[0]).id, "b");
        assert_eq!(conv.epilogue[0].id, "relu");
        assert_eq!(
            fused.nodes.iter().map(|n| n.total_flops()).sum::<u64>(),
            g.nodes.iter().map(|n| n.total_flops()).sum::<u64>()
        );
    }

    #[test]
    fn reshape_blocks_fusion() {
        let g = graph(&format!(
            r#"{{"id": "conv", "op_class": "Conv", "inputs": ["x", "w"], "outputs": ["a"], {CONV}}},
               {{"id": "reshape", "op_class": "Reshape", "inputs": ["a"], "outputs": ["b"]}},
               {{"id": "relu", "op_class": "Activation", "inputs": ["b"], "outputs": ["y"]}}"#
        ));
        let (fused, records) = apply_fusion(&g);
        assert!(records.is_empty());
        assert_eq!(fused, g);
    }

    #[test]
    fn shared_intermediate_not_fused() {
        let g = graph(&format!(
            r#"{{"id": "conv", "op_class": "Conv", "inputs": ["x", "w"], "outputs": ["a"], {CONV}}},
               {{"id": "relu", "op_class": "Activation", "inputs": ["a"], "outputs": ["b"]}},
               {{"id": "skip", "op_class": "Elementwise", "inputs": ["a", "b"], "outputs": ["y"]}}"#
        ));
        let (_, records) = apply_fusion(&g);
        assert!(records.is_empty());
    }

    #[test]
    fn add_activation_fused() {
        let g = graph(
            r#"{"id": "add", "op_class": "Elementwise", "inputs": ["x", "x"], "outputs": ["a"]},
               {"id": "act", "op_class": "Activation", "inputs": ["a"], "outputs": ["b"]},
               {"id": "view", "op_class": "Reshape", "inputs": ["b"], "outputs": ["y"]}"#,
        );
        let (fused, records) = apply_fusion(&g);
        assert_eq!(records.len(), 1);
        assert_eq!(fused.nodes.len(), 2);
        let add = &fused.nodes[fused.node_by_id("add").unwrap()];
        assert_eq!(fused.tensor(add.outputs[0]).id, "b");
    }

    #[test]
    fn graph_output_intermediate_not_fused() {
        let g = parse_workload(
            r#"{"name": "o", "tensors": [
                {"id": "x", "dims": [4], "kind": "input"},
                {"id": "a", "dims": [4], "kind": "output"},
                {"id": "y", "dims": [4], "kind": "output"}],
              "nodes": [
                {"id": "add", "op_class": "Elementwise", "inputs": ["x"], "outputs": ["a"]},
                {"id": "act", "op_class": "Activation", "inputs": ["a"], "outputs": ["y"]}]}"#,
        )
        .unwrap();
        assert!(apply_fusion(&g).1.is_empty());
    }
}
