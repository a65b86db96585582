//! Random workload graphs for property tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use memsweep::graph::{parse_workload, WorkloadGraph};

/// JSON for a random DAG of streamed operators. `prefix` namespaces every id so
/// that two documents can be merged.
pub fn dag_json(seed: u64, max_nodes: usize, prefix: &str) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nodes = rng.gen_range(1..=max_nodes);
    let mut tensors = Vec::new();
    let mut available: Vec<String> = Vec::new();
    let n_inputs = rng.gen_range(1..=3);
    for i in 0..n_inputs {
        let id = format!("{prefix}in{i}");
        tensors.push(json!({"id": id, "dims": [rng.gen_range(1..4096u64)], "kind": "input"}));
        available.push(id);
    }
    let classes = [
        "Elementwise",
        "Activation",
        "Transform",
        "Reduce",
        "Softmax",
        "Reshape",
    ];
    let mut nodes = Vec::new();
    let mut consumed = BTreeSet::new();
    for n in 0..n_nodes {
        let mut inputs = vec![];
        if n < n_inputs {
            inputs.push(format!("{prefix}in{n}"));
        }
        for _ in 0..rng.gen_range(1..=2) {
            inputs.push(available[rng.gen_range(0..available.len())].clone());
        }
        if rng.gen_bool(0.25) {
            let w = format!("{prefix}w{n}");
            let e = [1, 2, 4][rng.gen_range(0..3)];
            tensors.push(
                json!({"id": w, "dims": [rng.gen_range(1..4096u64)], "kind": "weight",
                                "element_bytes": e}),
            );
            inputs.push(w);
        }
        inputs.sort();
        inputs.dedup();
        consumed.extend(inputs.iter().cloned());
        let id = format!("{prefix}t{n}");
        tensors.push(json!({"id": id, "dims": [rng.gen_range(1..4096u64)], "kind": "activation"}));
        available.push(id.clone());
        nodes.push(json!({"id": format!("{prefix}n{n}"),
                          "op_class": classes[rng.gen_range(0..classes.len())],
                          "inputs": inputs, "outputs": [id]}));
    }
    for t in tensors.iter_mut() {
        let id = t["id"].as_str().unwrap().to_string();
        if t["kind"] == "activation" && (!consumed.contains(&id) || rng.gen_bool(0.1)) {
            t["kind"] = json!("output");
        }
    }
    json!({"name": format!("{prefix}dag{seed}"), "tensors": tensors, "nodes": nodes})
}

pub fn random_dag(seed: u64, max_nodes: usize) -> WorkloadGraph {
    parse_workload(&dag_json(seed, max_nodes, "").to_string()).expect("generated DAG is valid")
}

pub fn tiny_cnn() -> WorkloadGraph {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../workloads/tiny_cnn.json");
    parse_workload(&std::fs::read_to_string(path).unwrap()).unwrap()
}
