//! Tensor liveness along a fixed schedule and capacity-bounded LLC retention.
//!
//! The LLC is a software-managed buffer. Space is managed in bytes: a tensor may
//! be partly resident, always as a prefix, and eviction trims its tail. Walking
//! the schedule, the missing part of every operand is read from DRAM and
//! outputs are produced into the LLC. A tensor is retained only at the expense
//! of bytes that come later in the eviction order (furthest next use, then
//! larger footprint, then smaller tensor index); whatever does not fit bypasses
//! the LLC. Because that order is the same at every capacity, a larger LLC
//! always holds a superset of what a smaller one holds, and DRAM traffic cannot
//! grow with capacity.
//!
//! Bytes without a valid DRAM copy are written back when evicted while still
//! needed; a tensor's data never changes after production, so each byte is
//! written at most once. Graph outputs are written back after their last read.
//! Operands read for the last time are not retained, and dead tensors are
//! released for free. Tensors larger than the LLC are never retained and are
//! charged to DRAM on every access.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::graph::{Schedule, TensorIdx, TensorKind, WorkloadGraph};

/// Schedule step used for births of tensors that start in DRAM, and for deaths
/// of tensors that are never consumed.
pub const BEFORE_START: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LiveInterval {
    pub tensor: TensorIdx,
    pub birth: i64,
    pub death: i64,
}

/// One interval per tensor, in tensor order. Graph outputs stay live until the
/// last step.
pub fn live_intervals(graph: &WorkloadGraph, schedule: &Schedule) -> Vec<LiveInterval> {
    let pos = schedule.position();
    let last = schedule.len() as i64 - 1;
    (0..graph.tensors.len())
        .map(|t| {
            let birth = graph.producer(t).map_or(BEFORE_START, |p| pos[p] as i64);
            let mut death = graph
                .consumers(t)
                .iter()
                .map(|&c| pos[c] as i64)
                .max()
                .unwrap_or(birth);
            if graph.tensor(t).kind == TensorKind::Output {
                death = death.max(last);
            }
            LiveInterval {
                tensor: t,
                birth,
                death,
            }
        })
        .collect()
}

/// Largest sum of simultaneously live footprints, ignoring capacity. Tensors
/// that start in DRAM count from their first use.
pub fn peak_live_bytes(graph: &WorkloadGraph, schedule: &Schedule) -> u64 {
    let pos = schedule.position();
    let steps = schedule.len();
    if steps == 0 {
        return 0;
    }
    let mut delta = vec![0i128; steps + 1];
    for iv in live_intervals(graph, schedule) {
        let start = if iv.birth == BEFORE_START {
            match graph.consumers(iv.tensor).iter().map(|&c| pos[c]).min() {
                Some(s) => s,
                None => continue,
            }
        } else {
            iv.birth as usize
        };
        let end = iv.death as usize;
        let fp = i128::from(graph.tensor(iv.tensor).footprint_bytes());
        delta[start] += fp;
        delta[end + 1] -= fp;
    }
    let mut live = 0i128;
    let mut peak = 0i128;
    for d in &delta[..steps] {
        live += d;
        peak = peak.max(live);
    }
    peak as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FetchDram,
    HitLlc,
    Install,
    EvictSpill,
    EvictDead,
    WritebackOutput,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::FetchDram => "fetch_dram",
            EventKind::HitLlc => "hit_llc",
            EventKind::Install => "install",
            EventKind::EvictSpill => "evict_spill",
            EventKind::EvictDead => "evict_dead",
            EventKind::WritebackOutput => "writeback_output",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub tensor: TensorIdx,
    pub kind: EventKind,
    /// Bytes moved across the LLC↔DRAM boundary by this event (0 for hits,
    /// installs, and free releases).
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperandSource {
    Llc,
    Dram,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub node: usize,
    /// Resident tensors after the step, ascending.
    pub resident: Vec<TensorIdx>,
    pub resident_bytes: u64,
    pub sources: Vec<(TensorIdx, OperandSource)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResidencyTrace {
    pub llc_capacity: u64,
    pub steps: Vec<StepRecord>,
    pub events: Vec<TraceEvent>,
    /// Tensors larger than the LLC, served from DRAM on every access.
    pub streamed: Vec<TensorIdx>,
    pub dram_read: u64,
    pub dram_write: u64,
    /// Peak resident footprint observed during the walk.
    pub peak_resident_bytes: u64,
}

impl ResidencyTrace {
    pub fn spills(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::EvictSpill)
    }

    /// One CSV row per event: `step,node,tensor,event,bytes`.
    pub fn write_csv<W: Write>(&self, graph: &WorkloadGraph, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "node", "tensor", "event", "bytes"])?;
        for e in &self.events {
            let node = &graph.nodes[self.steps[e.step].node].id;
            w.write_record([
                e.step.to_string(),
                node.clone(),
                graph.tensor(e.tensor).id.clone(),
                e.kind.to_string(),
                e.bytes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Walker<'g> {
    graph: &'g WorkloadGraph,
    capacity: u64,
    /// Ascending schedule steps at which each tensor is read.
    uses: Vec<Vec<usize>>,
    /// Resident prefix of each tensor, in bytes.
    resident: Vec<u64>,
    resident_list: Vec<TensorIdx>,
    used_bytes: u64,
    /// Start of the suffix of each tensor that has a valid DRAM copy. Whenever a
    /// tensor is not fully resident, `valid_from <= resident`.
    valid_from: Vec<u64>,
    streamed: Vec<bool>,
    trace: ResidencyTrace,
}

impl Walker<'_> {
    fn fp(&self, t: TensorIdx) -> u64 {
        self.graph.tensor(t).footprint_bytes()
    }

    fn next_use(&self, t: TensorIdx, step: usize) -> usize {
        let uses = &self.uses[t];
        let i = uses.partition_point(|&u| u <= step);
        uses.get(i).copied().unwrap_or(usize::MAX)
    }

    /// Eviction order, largest first: furthest next use, then larger footprint,
    /// then smaller tensor index. It does not depend on the capacity.
    fn key(&self, t: TensorIdx, step: usize) -> (usize, u64, std::cmp::Reverse<TensorIdx>) {
        (self.next_use(t, step), self.fp(t), std::cmp::Reverse(t))
    }

    fn event(&mut self, step: usize, tensor: TensorIdx, kind: EventKind, bytes: u64) {
        self.trace.events.push(TraceEvent {
            step,
            tensor,
            kind,
            bytes,
        });
    }

    /// Drops the tail of `t` down to `keep` bytes, writing back whatever part of
    /// it is still needed and has no DRAM copy.
    fn shrink(&mut self, t: TensorIdx, keep: u64, step: usize) {
        let r = self.resident[t];
        debug_assert!(keep < r);
        self.resident[t] = keep;
        self.used_bytes -= r - keep;
        if keep == 0 {
            self.resident_list.retain(|&x| x != t);
        }
        let is_output = self.graph.tensor(t).kind == TensorKind::Output;
        let needed_later = self.next_use(t, step) != usize::MAX;
        if !(needed_later || is_output) {
            self.event(step, t, EventKind::EvictDead, 0);
            return;
        }
        let bytes = r.min(self.valid_from[t]).saturating_sub(keep);
        self.valid_from[t] = self.valid_from[t].min(keep);
        self.trace.dram_write += bytes;
        let kind = if is_output && !needed_later {
            EventKind::WritebackOutput
        } else {
            EventKind::EvictSpill
        };
        self.event(step, t, kind, bytes);
    }

    /// Makes as much of `t` resident as fits after evicting bytes of lower
    /// priority.
    fn retain(&mut self, t: TensorIdx, step: usize) {
        let want = self.fp(t) - self.resident[t];
        if want == 0 || self.streamed[t] {
            return;
        }
        let mut room = self.capacity - self.used_bytes;
        if room < want {
            let k = self.key(t, step);
            let mut victims: Vec<TensorIdx> = self
                .resident_list
                .iter()
                .copied()
                .filter(|&v| self.key(v, step) > k)
                .collect();
            victims.sort_by_key(|&v| std::cmp::Reverse(self.key(v, step)));
            for v in victims {
                if room >= want {
                    break;
                }
                let take = self.resident[v].min(want - room);
                self.shrink(v, self.resident[v] - take, step);
                room += take;
            }
        }
        let add = want.min(room);
        if add == 0 {
            return;
        }
        if self.resident[t] == 0 {
            self.resident_list.push(t);
        }
        self.resident[t] += add;
        self.used_bytes += add;
        self.trace.peak_resident_bytes = self.trace.peak_resident_bytes.max(self.used_bytes);
        self.event(step, t, EventKind::Install, 0);
    }
}

/// Walks `schedule` and records LLC residency, spills, and DRAM traffic.
///
/// `intervals` must come from [`live_intervals`] on the same graph and schedule.
pub fn simulate_residency(
    graph: &WorkloadGraph,
    schedule: &Schedule,
    intervals: &[LiveInterval],
    llc_capacity: u64,
) -> ResidencyTrace {
    let n_tensors = graph.tensors.len();
    let pos = schedule.position();
    let mut uses: Vec<Vec<usize>> = (0..n_tensors)
        .map(|t| graph.consumers(t).iter().map(|&c| pos[c]).collect())
        .collect();
    for u in &mut uses {
        u.sort_unstable();
    }
    let streamed: Vec<bool> = graph
        .tensors
        .iter()
        .map(|t| t.footprint_bytes() > llc_capacity)
        .collect();

    let mut w = Walker {
        graph,
        capacity: llc_capacity,
        uses,
        resident: vec![0; n_tensors],
        resident_list: Vec::new(),
        used_bytes: 0,
        valid_from: graph
            .tensors
            .iter()
            .map(|t| {
                if t.kind.is_source() {
                    0
                } else {
                    t.footprint_bytes()
                }
            })
            .collect(),
        streamed: streamed.clone(),
        trace: ResidencyTrace {
            llc_capacity,
            steps: Vec::with_capacity(schedule.len()),
            events: Vec::new(),
            streamed: (0..n_tensors).filter(|&t| streamed[t]).collect(),
            dram_read: 0,
            dram_write: 0,
            peak_resident_bytes: 0,
        },
    };

    for (step, &n) in schedule.order.iter().enumerate() {
        let node = &graph.nodes[n];
        let mut inputs = node.inputs.clone();
        inputs.sort_unstable();
        inputs.dedup();

        let mut sources = Vec::with_capacity(inputs.len());
        for &t in &inputs {
            let missing = w.fp(t) - w.resident[t];
            if missing == 0 {
                w.event(step, t, EventKind::HitLlc, 0);
                sources.push((t, OperandSource::Llc));
                continue;
            }
            w.trace.dram_read += missing;
            w.event(step, t, EventKind::FetchDram, missing);
            sources.push((t, OperandSource::Dram));
            // An operand read for the last time is consumed in flight.
            if w.next_use(t, step) != usize::MAX {
                w.retain(t, step);
            }
        }

        for &t in &node.outputs {
            w.event(step, t, EventKind::Install, 0);
            if w.next_use(t, step) != usize::MAX {
                w.retain(t, step);
            }
            // Whatever is not retained goes straight to DRAM.
            let is_output = graph.tensor(t).kind == TensorKind::Output;
            let needed_later = w.next_use(t, step) != usize::MAX;
            let through = w.fp(t) - w.resident[t];
            if through > 0 && (needed_later || is_output) {
                w.valid_from[t] = w.resident[t];
                w.trace.dram_write += through;
                let kind = if needed_later {
                    EventKind::EvictSpill
                } else {
                    EventKind::WritebackOutput
                };
                w.event(step, t, kind, through);
            }
        }

        // Release everything read for the last time at this step. Graph outputs
        // are written back once nothing reads them any more.
        let dying: Vec<TensorIdx> = w
            .resident_list
            .iter()
            .copied()
            .filter(|&t| intervals[t].death <= step as i64 || w.next_use(t, step) == usize::MAX)
            .collect();
        for t in dying {
            w.shrink(t, 0, step);
        }

        let mut resident = w.resident_list.clone();
        resident.sort_unstable();
        debug_assert!(w.used_bytes <= llc_capacity);
        w.trace.steps.push(StepRecord {
            node: n,
            resident,
            resident_bytes: w.used_bytes,
            sources,
        });
    }
    w.trace
}

/// Compulsory DRAM traffic: every consumed source read once, every graph output
/// written once. Any trace's totals are bounded below by these.
pub fn compulsory_traffic(graph: &WorkloadGraph) -> (u64, u64) {
    let read = (0..graph.tensors.len())
        .filter(|&t| graph.tensor(t).kind.is_source() && !graph.consumers(t).is_empty())
        .map(|t| graph.tensor(t).footprint_bytes())
        .sum();
    let write = graph
        .tensors
        .iter()
        .filter(|t| t.kind == TensorKind::Output)
        .map(|t| t.footprint_bytes())
        .sum();
    (read, write)
}
