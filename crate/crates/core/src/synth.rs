//! Synthetic workload generators.
//!
//! Four structural families plus two probes with a controlled live set. Every
//! generator builds the JSON IR and runs it through [`parse_workload`], so the
//! output always satisfies the graph invariants.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{parse_workload, GraphError, OpClass, WorkloadGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid family spec: {0}")]
    Spec(String),
    #[error("generated graph is invalid: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    EncoderDecoderCnn,
    CostVolume,
    AttentionMatcher,
    MlpRay,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::EncoderDecoderCnn,
        Family::CostVolume,
        Family::AttentionMatcher,
        Family::MlpRay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::EncoderDecoderCnn => "encoder_decoder_cnn",
            Family::CostVolume => "cost_volume",
            Family::AttentionMatcher => "attention_matcher",
            Family::MlpRay => "mlp_ray",
        }
    }

    pub fn parse(name: &str) -> Result<Family, SynthError> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| SynthError::Spec(format!("unknown family `{name}`")))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderDecoderParams {
    pub depth: u64,
    pub base_width: u64,
    pub max_width: u64,
    pub blocks: u64,
    pub resolution: u64,
    pub in_channels: u64,
    pub out_channels: u64,
}

impl Default for EncoderDecoderParams {
    fn default() -> Self {
        EncoderDecoderParams {
            depth: 4,
            base_width: 32,
            max_width: 512,
            blocks: 2,
            resolution: 64,
            in_channels: 3,
            out_channels: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostVolumeParams {
    pub levels: u64,
    pub width: u64,
    pub resolution: u64,
    /// Search radius; the correlation window has `(2r + 1)²` displacements.
    pub disparity: u64,
}

impl Default for CostVolumeParams {
    fn default() -> Self {
        CostVolumeParams {
            levels: 3,
            width: 32,
            resolution: 64,
            disparity: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionParams {
    pub tokens: u64,
    pub dim: u64,
    pub layers: u64,
}

impl Default for AttentionParams {
    fn default() -> Self {
        AttentionParams {
            tokens: 512,
            dim: 128,
            layers: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpRayParams {
    pub rays: u64,
    pub samples: u64,
    pub width: u64,
    pub depth: u64,
    pub chunks: u64,
}

impl Default for MlpRayParams {
    fn default() -> Self {
        MlpRayParams {
            rays: 512,
            samples: 64,
            width: 128,
            depth: 8,
            chunks: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FamilySpec {
    EncoderDecoderCnn(EncoderDecoderParams),
    CostVolume(CostVolumeParams),
    AttentionMatcher(AttentionParams),
    MlpRay(MlpRayParams),
}

impl FamilySpec {
    pub fn default_for(family: Family) -> FamilySpec {
        match family {
            Family::EncoderDecoderCnn => FamilySpec::EncoderDecoderCnn(Default::default()),
            Family::CostVolume => FamilySpec::CostVolume(Default::default()),
            Family::AttentionMatcher => FamilySpec::AttentionMatcher(Default::default()),
            Family::MlpRay => FamilySpec::MlpRay(Default::default()),
        }
    }

    /// Family defaults overridden by `params` (a JSON object); keys that do
    /// not belong to the family are rejected.
    pub fn from_params(family: Family, params: Value) -> Result<FamilySpec, SynthError> {
        let err = |e: serde_json::Error| SynthError::Spec(format!("{family}: {e}"));
        Ok(match family {
            Family::EncoderDecoderCnn => {
                FamilySpec::EncoderDecoderCnn(serde_json::from_value(params).map_err(err)?)
            }
            Family::CostVolume => {
                FamilySpec::CostVolume(serde_json::from_value(params).map_err(err)?)
            }
            Family::AttentionMatcher => {
                FamilySpec::AttentionMatcher(serde_json::from_value(params).map_err(err)?)
            }
            Family::MlpRay => FamilySpec::MlpRay(serde_json::from_value(params).map_err(err)?),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            FamilySpec::EncoderDecoderCnn(_) => Family::EncoderDecoderCnn,
            FamilySpec::CostVolume(_) => Family::CostVolume,
            FamilySpec::AttentionMatcher(_) => Family::AttentionMatcher,
            FamilySpec::MlpRay(_) => Family::MlpRay,
        }
    }
}

pub fn generate(spec: &FamilySpec, seed: u64) -> Result<WorkloadGraph, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        FamilySpec::EncoderDecoderCnn(p) => encoder_decoder(p, &mut rng),
        FamilySpec::CostVolume(p) => cost_volume(p, &mut rng),
        FamilySpec::AttentionMatcher(p) => attention_matcher(p, &mut rng),
        FamilySpec::MlpRay(p) => mlp_ray(p, &mut rng),
    }
}

fn positive(fields: &[(&str, u64)]) -> Result<(), SynthError> {
    match fields.iter().find(|(_, v)| *v == 0) {
        Some((name, _)) => Err(SynthError::Spec(format!("{name} must be >= 1"))),
        None => Ok(()),
    }
}

/// Accumulates IR tensors and nodes. Node ids carry a zero-padded sequence
/// number so the id tie-break of the scheduler follows construction order.
struct Builder {
    name: String,
    tensors: Vec<Value>,
    nodes: Vec<Value>,
}

impl Builder {
    fn new(name: String) -> Self {
        Builder {
            name,
            tensors: Vec::new(),
            nodes: Vec::new(),
        }
    }

    fn tensor(&mut self, id: String, dims: &[u64], kind: &str) -> String {
        self.tensors
            .push(json!({"id": id, "dims": dims, "element_bytes": 4, "kind": kind}));
        id
    }

    fn act(&mut self, dims: &[u64]) -> String {
        let id = format!("t{:04}", self.tensors.len());
        self.tensor(id, dims, "activation")
    }

    fn node(
        &mut self,
        label: &str,
        class: OpClass,
        inputs: &[&str],
        outputs: &[&str],
        attrs: Value,
    ) {
        let id = format!("n{:04}_{label}", self.nodes.len());
        let mut n = json!({"id": id, "op_class": class, "inputs": inputs, "outputs": outputs});
        if attrs.as_object().is_some_and(|m| !m.is_empty()) {
            n["attrs"] = attrs;
        }
        self.nodes.push(n);
    }

    fn op(&mut self, label: &str, class: OpClass, inputs: &[&str], out_dims: &[u64]) -> String {
        let out = self.act(out_dims);
        self.node(label, class, inputs, &[&out], json!({}));
        out
    }

    /// Conv (+ optional activation) on an `[1, c, h, w]` tensor; returns the output id.
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        label: &str,
        x: &str,
        weight: Option<&str>,
        (c_in, h, w): (u64, u64, u64),
        c_out: u64,
        k: u64,
        stride: u64,
        relu: bool,
    ) -> (String, u64, u64) {
        let pad = k / 2;
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (w + 2 * pad - k) / stride + 1;
        let wt = match weight {
            Some(wt) => wt.to_string(),
            None => {
                let id = format!("w{:04}_{label}", self.tensors.len());
                self.tensor(id, &[c_out, c_in, k, k], "weight")
            }
        };
        let y = self.act(&[1, c_out, h_out, w_out]);
        self.node(
            label,
            OpClass::Conv,
            &[x, &wt],
            &[&y],
            json!({"k_h": k, "k_w": k, "stride": stride, "pad": pad,
                   "c_in": c_in, "c_out": c_out, "h_in": h, "w_in": w}),
        );
        let y = if relu {
            self.op(
                "relu",
                OpClass::Activation,
                &[&y],
                &[1, c_out, h_out, w_out],
            )
        } else {
            y
        };
        (y, h_out, w_out)
    }

    /// `[m, k] × [k, n]`; `b` is a weight id or an activation.
    fn gemm(&mut self, label: &str, a: &str, b: &str, (m, n, k): (u64, u64, u64)) -> String {
        let y = self.act(&[m, n]);
        self.node(
            label,
            OpClass::Gemm,
            &[a, b],
            &[&y],
            json!({"m": m, "n": n, "k": k}),
        );
        y
    }

    fn weight(&mut self, label: &str, dims: &[u64]) -> String {
        let id = format!("w{:04}_{label}", self.tensors.len());
        self.tensor(id, dims, "weight")
    }

    /// Marks `outputs` as graph outputs and validates the document.
    fn finish(mut self, outputs: &[&str]) -> Result<WorkloadGraph, SynthError> {
        for t in &mut self.tensors {
            if outputs.contains(&t["id"].as_str().unwrap_or_default()) {
                t["kind"] = json!("output");
            }
        }
        let doc = json!({"name": self.name, "tensors": self.tensors, "nodes": self.nodes});
        Ok(parse_workload(&doc.to_string())?)
    }
}

fn encoder_decoder(
    p: &EncoderDecoderParams,
    rng: &mut ChaCha8Rng,
) -> Result<WorkloadGraph, SynthError> {
    positive(&[
        ("depth", p.depth),
        ("base_width", p.base_width),
        ("max_width", p.max_width),
        ("blocks", p.blocks),
        ("resolution", p.resolution),
        ("in_channels", p.in_channels),
        ("out_channels", p.out_channels),
    ])?;
    if p.depth > 16 || !p.resolution.is_multiple_of(1 << (p.depth - 1)) {
        return Err(SynthError::Spec(format!(
            "resolution {} must be divisible by 2^(depth-1) for depth {}",
            p.resolution, p.depth
        )));
    }
    let width = |l: u64| (p.base_width << l).min(p.max_width.max(p.base_width));
    let mut b = Builder::new(format!(
        "encoder_decoder_cnn_d{}_w{}_r{}",
        p.depth, p.base_width, p.resolution
    ));
    let r = p.resolution;
    let x = b.tensor("image".into(), &[1, p.in_channels, r, r], "input");
    let (mut cur, mut h, mut w) = b.conv(
        "stem",
        &x,
        None,
        (p.in_channels, r, r),
        width(0),
        3,
        1,
        true,
    );
    let mut skips = Vec::new();
    for l in 0..p.depth {
        let c = width(l);
        for _ in 0..p.blocks {
            let k = if rng.gen_bool(0.75) { 3 } else { 1 };
            (cur, h, w) = b.conv("enc", &cur, None, (c, h, w), c, k, 1, true);
        }
        skips.push((cur.clone(), c, h, w));
        if l + 1 < p.depth {
            (cur, h, w) = b.conv("down", &cur, None, (c, h, w), width(l + 1), 3, 2, true);
        }
    }
    for l in (0..p.depth - 1).rev() {
        let (skip, c_skip, hs, ws) = skips[l as usize].clone();
        let c_cur = width(l + 1);
        let up = b.op("upsample", OpClass::Transform, &[&cur], &[1, c_cur, hs, ws]);
        let cat = b.op(
            "concat",
            OpClass::Reshape,
            &[&up, &skip],
            &[1, c_cur + c_skip, hs, ws],
        );
        (cur, h, w) = b.conv(
            "merge",
            &cat,
            None,
            (c_cur + c_skip, hs, ws),
            c_skip,
            3,
            1,
            true,
        );
        for _ in 0..p.blocks {
            (cur, h, w) = b.conv("dec", &cur, None, (c_skip, h, w), c_skip, 3, 1, true);
        }
    }
    let (y, _, _) = b.conv(
        "head",
        &cur,
        None,
        (width(0), h, w),
        p.out_channels,
        1,
        1,
        false,
    );
    b.finish(&[&y])
}

fn cost_volume(p: &CostVolumeParams, rng: &mut ChaCha8Rng) -> Result<WorkloadGraph, SynthError> {
    positive(&[
        ("levels", p.levels),
        ("width", p.width),
        ("resolution", p.resolution),
    ])?;
    if p.levels > 16 || !p.resolution.is_multiple_of(1 << p.levels) {
        return Err(SynthError::Spec(format!(
            "resolution {} must be divisible by 2^levels for {} levels",
            p.resolution, p.levels
        )));
    }
    let window = (2 * p.disparity + 1).pow(2);
    let mut b = Builder::new(format!(
        "cost_volume_l{}_w{}_r{}",
        p.levels, p.width, p.resolution
    ));
    let r = p.resolution;
    let left = b.tensor("left".into(), &[1, 3, r, r], "input");
    let right = b.tensor("right".into(), &[1, 3, r, r], "input");

    // Siamese pyramid: one weight tensor per level shared by both images.
    let mut feats = Vec::new();
    let (mut fl, mut fr, mut c, mut h) = (left, right, 3, r);
    for l in 0..p.levels {
        let c_out = p.width << l;
        let wt = b.weight("feat", &[c_out, c, 3, 3]);
        let (nl, hh, _) = b.conv("feat_l", &fl, Some(&wt), (c, h, h), c_out, 3, 2, true);
        let (nr, _, _) = b.conv("feat_r", &fr, Some(&wt), (c, h, h), c_out, 3, 2, true);
        (fl, fr, c, h) = (nl, nr, c_out, hh);
        feats.push((fl.clone(), fr.clone(), c, h));
    }

    let mut flow: Option<(String, u64)> = None;
    for l in (0..p.levels as usize).rev() {
        let (fl, fr, c, h) = feats[l].clone();
        let target = match &flow {
            None => fr,
            Some((f, _)) => {
                let up = b.op("flow_up", OpClass::Transform, &[f], &[1, 2, h, h]);
                b.op("warp", OpClass::Transform, &[&fr, &up], &[1, c, h, h])
            }
        };
        let hw = h * h;
        let corr = b.gemm("corr", &fl, &target, (hw, window, c));
        let cv = b.op("volume", OpClass::Reshape, &[&corr], &[1, window, h, h]);
        let k = if rng.gen_bool(0.5) { 3 } else { 5 };
        let (agg, _, _) = b.conv("aggregate", &cv, None, (window, h, h), c, k, 1, true);
        let (est, _, _) = b.conv("estimate", &agg, None, (c, h, h), 2, 3, 1, false);
        let est = match &flow {
            None => est,
            Some((f, _)) => {
                let prev = b.op("flow_prev", OpClass::Transform, &[f], &[1, 2, h, h]);
                b.op(
                    "refine",
                    OpClass::Elementwise,
                    &[&est, &prev],
                    &[1, 2, h, h],
                )
            }
        };
        flow = Some((est, h));
    }
    let (f, h) = flow.expect("levels >= 1");
    let out = b.op(
        "flow_full",
        OpClass::Transform,
        &[&f],
        &[1, 2, h * 2, h * 2],
    );
    b.finish(&[&out])
}

fn attention_matcher(
    p: &AttentionParams,
    rng: &mut ChaCha8Rng,
) -> Result<WorkloadGraph, SynthError> {
    positive(&[("tokens", p.tokens), ("dim", p.dim), ("layers", p.layers)])?;
    let d = p.dim;
    let tokens = [p.tokens, p.tokens - rng.gen_range(0..=p.tokens / 8)];
    let mut b = Builder::new(format!(
        "attention_matcher_t{}_d{}_l{}",
        p.tokens, p.dim, p.layers
    ));
    let mut desc = [
        b.tensor("desc0".into(), &[tokens[0], d], "input"),
        b.tensor("desc1".into(), &[tokens[1], d], "input"),
    ];
    for l in 0..p.layers {
        let cross = l % 2 == 1;
        let label = if cross { "cross" } else { "self" };
        let wq = b.weight(&format!("{label}_q"), &[d, d]);
        let wk = b.weight(&format!("{label}_k"), &[d, d]);
        let wv = b.weight(&format!("{label}_v"), &[d, d]);
        let wo = b.weight(&format!("{label}_o"), &[d, d]);
        let mut next = desc.clone();
        for s in 0..2 {
            let src = if cross { 1 - s } else { s };
            let (t, ts) = (tokens[s], tokens[src]);
            let q = b.gemm("q", &desc[s], &wq, (t, d, d));
            let k = b.gemm("k", &desc[src], &wk, (ts, d, d));
            let v = b.gemm("v", &desc[src], &wv, (ts, d, d));
            let scores = b.gemm("scores", &q, &k, (t, ts, d));
            let attn = b.op("softmax", OpClass::Softmax, &[&scores], &[t, ts]);
            let ctx = b.gemm("context", &attn, &v, (t, d, ts));
            let proj = b.gemm("proj", &ctx, &wo, (t, d, d));
            next[s] = b.op(
                "residual",
                OpClass::Elementwise,
                &[&desc[s], &proj],
                &[t, d],
            );
        }
        desc = next;
    }
    let wf = b.weight("final", &[d, d]);
    let f0 = b.gemm("final0", &desc[0], &wf, (tokens[0], d, d));
    let f1 = b.gemm("final1", &desc[1], &wf, (tokens[1], d, d));
    let sim = b.gemm("similarity", &f0, &f1, (tokens[0], tokens[1], d));
    let out = b.op(
        "dual_softmax",
        OpClass::Softmax,
        &[&sim],
        &[tokens[0], tokens[1]],
    );
    b.finish(&[&out])
}

fn mlp_ray(p: &MlpRayParams, rng: &mut ChaCha8Rng) -> Result<WorkloadGraph, SynthError> {
    positive(&[
        ("rays", p.rays),
        ("samples", p.samples),
        ("width", p.width),
        ("depth", p.depth),
        ("chunks", p.chunks),
    ])?;
    if !p.rays.is_multiple_of(p.chunks) {
        return Err(SynthError::Spec(format!(
            "rays ({}) must be divisible by chunks ({})",
            p.rays, p.chunks
        )));
    }
    const ENC: u64 = 63;
    let w = p.width;
    let skip_at = if p.depth > 2 {
        rng.gen_range(1..p.depth)
    } else {
        0
    };
    let mut b = Builder::new(format!(
        "mlp_ray_r{}_s{}_w{}_d{}",
        p.rays, p.samples, p.width, p.depth
    ));
    let rays = b.tensor("samples".into(), &[p.rays, p.samples, 3], "input");
    // One set of MLP weights, reused by every chunk.
    let mut weights = Vec::new();
    for i in 0..p.depth {
        let k_in = if i == 0 {
            ENC
        } else if skip_at != 0 && i == skip_at {
            w + ENC
        } else {
            w
        };
        weights.push((b.weight("mlp", &[k_in, w]), k_in));
    }
    let head = b.weight("head", &[w, 4]);

    let rays_c = p.rays / p.chunks;
    let n = rays_c * p.samples;
    let mut pixels = Vec::new();
    for _ in 0..p.chunks {
        let slice = b.op("slice", OpClass::DataMovement, &[&rays], &[n, 3]);
        let enc = b.op("encode", OpClass::Transform, &[&slice], &[n, ENC]);
        let mut h = enc.clone();
        for (i, (wt, k_in)) in weights.iter().enumerate() {
            let input = if skip_at != 0 && i as u64 == skip_at {
                b.op("skip_concat", OpClass::Reshape, &[&h, &enc], &[n, w + ENC])
            } else {
                h
            };
            let z = b.gemm("mlp", &input, wt, (n, w, *k_in));
            h = b.op("relu", OpClass::Activation, &[&z], &[n, w]);
        }
        let rgbs = b.gemm("head", &h, &head, (n, 4, w));
        pixels.push(b.op("render", OpClass::Reduce, &[&rgbs], &[rays_c, 3]));
    }
    let refs: Vec<&str> = pixels.iter().map(String::as_str).collect();
    let image = b.op("gather", OpClass::Reshape, &refs, &[p.rays, 3]);
    b.finish(&[&image])
}

/// `skips` tensors of `skip_bytes` each, all produced from one small input and
/// all consumed by a single final reduction, so the whole set is live at once.
pub fn live_set_probe(skips: u64, skip_bytes: u64) -> Result<WorkloadGraph, SynthError> {
    positive(&[("skips", skips), ("skip_bytes", skip_bytes)])?;
    if !skip_bytes.is_multiple_of(4) {
        return Err(SynthError::Spec(
            "skip_bytes must be a multiple of 4".into(),
        ));
    }
    let mut b = Builder::new(format!("live_set_{}x{}", skips, skip_bytes));
    let x = b.tensor("x".into(), &[1 << 14], "input");
    let mut set = Vec::new();
    for _ in 0..skips {
        set.push(b.op("expand", OpClass::Transform, &[&x], &[skip_bytes / 4]));
    }
    let refs: Vec<&str> = set.iter().map(String::as_str).collect();
    let y = b.op("reduce", OpClass::Reduce, &refs, &[1024]);
    b.finish(&[&y])
}

/// `count` independent input→output elementwise pairs of `bytes` each; nothing
/// is reused.
pub fn streaming_probe(count: u64, bytes: u64) -> Result<WorkloadGraph, SynthError> {
    positive(&[("count", count), ("bytes", bytes)])?;
    if !bytes.is_multiple_of(4) {
        return Err(SynthError::Spec("bytes must be a multiple of 4".into()));
    }
    let mut b = Builder::new(format!("streaming_{}x{}", count, bytes));
    let mut outs = Vec::new();
    for i in 0..count {
        let x = b.tensor(format!("in{i:03}"), &[bytes / 4], "input");
        outs.push(b.op("scale", OpClass::Elementwise, &[&x], &[bytes / 4]));
    }
    let refs: Vec<&str> = outs.iter().map(String::as_str).collect();
    b.finish(&refs)
}
