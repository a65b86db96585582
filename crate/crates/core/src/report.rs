//! CSV and text outputs of a sweep.
//!
//! Floats are written in fixed scientific notation so that identical results
//! give byte-identical files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::graph::WorkloadGraph;
use crate::residency::ResidencyTrace;
use crate::sweep::{
    best_point, classify_regime, classify_row, find_point, pareto_indices, RegimeThresholds,
    SweepGrid, SweepPoint,
};
use crate::units::format_capacity;

pub fn fmt_f(x: f64) -> String {
    format!("{x:.9e}")
}

/// (energy, t_mem) of each point relative to the baseline cell.
pub fn normalized(points: &[SweepPoint], grid: &SweepGrid) -> Vec<(f64, f64)> {
    let base = find_point(points, grid.baseline.0, grid.baseline.1);
    let (e0, t0) = base.map_or((1.0, 1.0), |b| (b.energy.total, b.latency.t_mem));
    let ratio = |x: f64, d: f64| if d > 0.0 { x / d } else { 0.0 };
    points
        .iter()
        .map(|p| (ratio(p.energy.total, e0), ratio(p.latency.t_mem, t0)))
        .collect()
}

pub fn write_heatmap<W: Write>(
    points: &[SweepPoint],
    grid: &SweepGrid,
    roofline_total: bool,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "l1",
        "llc",
        "total_energy",
        "normalized_energy",
        "t_mem",
        "normalized_latency",
    ];
    if roofline_total {
        header.extend(["t_compute", "roofline_total"]);
    }
    w.write_record(&header)?;
    for (p, (ne, nt)) in points.iter().zip(normalized(points, grid)) {
        let mut row = vec![
            p.l1.to_string(),
            p.llc.to_string(),
            fmt_f(p.energy.total),
            fmt_f(ne),
            fmt_f(p.latency.t_mem),
            fmt_f(nt),
        ];
        if roofline_total {
            row.extend([fmt_f(p.t_compute), fmt_f(p.roofline_total)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_breakdown<W: Write>(points: &[SweepPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "l1",
        "llc",
        "e_l1",
        "e_llc",
        "e_dram",
        "e_core",
        "e_leakage",
        "dram_read",
        "dram_write",
        "mapping_digest",
    ])?;
    for p in points {
        let e = &p.energy;
        w.write_record([
            p.l1.to_string(),
            p.llc.to_string(),
            fmt_f(e.e_l1),
            fmt_f(e.e_llc),
            fmt_f(e.e_dram),
            fmt_f(e.e_core),
            fmt_f(e.e_leakage),
            p.traffic.dram_read.to_string(),
            p.traffic.dram_write.to_string(),
            format!("{:016x}", p.mapping_digest),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pareto<W: Write>(points: &[SweepPoint], grid: &SweepGrid, out: W) -> csv::Result<()> {
    let norm = normalized(points, grid);
    let obj: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.energy.total, p.latency.t_mem))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "l1",
        "llc",
        "total_energy",
        "t_mem",
        "normalized_energy",
        "normalized_latency",
    ])?;
    for i in pareto_indices(&obj) {
        let p = &points[i];
        w.write_record([
            p.l1.to_string(),
            p.llc.to_string(),
            fmt_f(p.energy.total),
            fmt_f(p.latency.t_mem),
            fmt_f(norm[i].0),
            fmt_f(norm[i].1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn regime_text(points: &[SweepPoint], grid: &SweepGrid, th: &RegimeThresholds) -> String {
    let r = classify_regime(points, grid, th);
    let mut s = String::new();
    let step = |d: Option<(u64, u64)>| {
        d.map_or("none".to_string(), |(a, b)| {
            format!("{}->{}", format_capacity(a), format_capacity(b))
        })
    };
    let _ = writeln!(s, "regime: {}", r.label);
    let _ = writeln!(s, "l1: {}", format_capacity(r.l1));
    let _ = writeln!(
        s,
        "dram_fraction_at_max: {}",
        fmt_f(r.evidence.dram_fraction_at_max)
    );
    let _ = writeln!(
        s,
        "max_adjacent_drop: {}",
        fmt_f(r.evidence.max_adjacent_drop)
    );
    let _ = writeln!(s, "drop_step: {}", step(r.evidence.drop_step));
    let _ = writeln!(s, "saturation_index: {}", r.evidence.saturation_index);
    let _ = writeln!(s, "\nper_l1:");
    for &l1 in &grid.l1_points {
        let r = classify_row(points, grid, l1, th);
        let _ = writeln!(
            s,
            "  {:>6} {:<16} drop={} step={} saturation_index={}",
            format_capacity(l1),
            r.label.to_string(),
            fmt_f(r.evidence.max_adjacent_drop),
            step(r.evidence.drop_step),
            r.evidence.saturation_index
        );
    }
    s
}

/// Baseline vs best configuration.
pub fn summary_text(name: &str, points: &[SweepPoint], grid: &SweepGrid) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "workload: {name} ({} configurations)", points.len());
    let _ = writeln!(
        s,
        "{:<9} {:>7} {:>6} {:>14} {:>14} {:>14}",
        "config", "l1", "llc", "energy_J", "e_dram_J", "t_mem_s"
    );
    let base = find_point(points, grid.baseline.0, grid.baseline.1);
    let best = best_point(points);
    for (label, p) in [("baseline", base), ("best", best)] {
        if let Some(p) = p {
            let _ = writeln!(
                s,
                "{:<9} {:>7} {:>6} {:>14.6e} {:>14.6e} {:>14.6e}",
                label,
                format_capacity(p.l1),
                format_capacity(p.llc),
                p.energy.total,
                p.energy.e_dram,
                p.latency.t_mem
            );
        }
    }
    if let (Some(b), Some(x)) = (base, best) {
        if b.energy.total > 0.0 {
            let _ = writeln!(
                s,
                "energy saving vs baseline: {:.2}%",
                100.0 * (1.0 - x.energy.total / b.energy.total)
            );
        }
    }
    s
}

/// Everything written by one sweep.
pub struct SweepOutputs<'a> {
    pub graph: &'a WorkloadGraph,
    pub points: &'a [SweepPoint],
    pub grid: &'a SweepGrid,
    pub regime: &'a RegimeThresholds,
    pub roofline_total: bool,
    pub baseline_trace: Option<&'a ResidencyTrace>,
}

fn create(dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> io::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(BufWriter::new(f))
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e.to_string())
}

pub fn write_outputs(dir: &Path, o: &SweepOutputs) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    write_heatmap(
        o.points,
        o.grid,
        o.roofline_total,
        create(dir, "heatmap.csv", &mut files)?,
    )
    .map_err(csv_io)?;
    write_breakdown(o.points, create(dir, "breakdown.csv", &mut files)?).map_err(csv_io)?;
    write_pareto(o.points, o.grid, create(dir, "pareto.csv", &mut files)?).map_err(csv_io)?;
    create(dir, "regime.txt", &mut files)?
        .write_all(regime_text(o.points, o.grid, o.regime).as_bytes())?;
    if let Some(t) = o.baseline_trace {
        t.write_csv(o.graph, create(dir, "trace_baseline.csv", &mut files)?)
            .map_err(csv_io)?;
    }
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapRow {
    pub l1: u64,
    pub llc: u64,
    pub total_energy: f64,
    pub t_mem: f64,
}

/// Reads `l1, llc, total_energy, t_mem` from a heatmap CSV (other columns ignored).
pub fn read_heatmap<R: Read>(input: R) -> Result<Vec<HeatmapRow>, String> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let (c_l1, c_llc, c_e, c_t) = (col("l1")?, col("llc")?, col("total_energy")?, col("t_mem")?);
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim().to_string();
        let bad = |c: usize| format!("row {}: invalid value `{}`", i + 2, field(c));
        let f = |c: usize| -> Result<f64, String> {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(c))
        };
        rows.push(HeatmapRow {
            l1: field(c_l1).parse().map_err(|_| bad(c_l1))?,
            llc: field(c_llc).parse().map_err(|_| bad(c_llc))?,
            total_energy: f(c_e)?,
            t_mem: f(c_t)?,
        });
    }
    if rows.is_empty() {
        return Err("heatmap has no rows".into());
    }
    Ok(rows)
}

pub fn write_pareto_rows<W: Write>(rows: &[HeatmapRow], out: W) -> csv::Result<()> {
    let obj: Vec<(f64, f64)> = rows.iter().map(|r| (r.total_energy, r.t_mem)).collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["l1", "llc", "total_energy", "t_mem"])?;
    for i in pareto_indices(&obj) {
        let r = &rows[i];
        w.write_record([
            r.l1.to_string(),
            r.llc.to_string(),
            fmt_f(r.total_energy),
            fmt_f(r.t_mem),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_round_trip() {
        let text = "l1,llc,total_energy,normalized_energy,t_mem,normalized_latency\n\
                    32768,16777216,2.0e-3,1.0,1.0e-3,1.0\n\
                    65536,16777216,1.0e-3,0.5,2.0e-3,2.0\n\
                    65536,33554432,3.0e-3,1.5,3.0e-3,3.0\n";
        let rows = read_heatmap(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        let mut out = Vec::new();
        write_pareto_rows(&rows, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().starts_with("65536,16777216,"));
    }

    #[test]
    fn heatmap_errors() {
        assert!(read_heatmap("l1,llc,total_energy\n1,2,3\n".as_bytes()).is_err());
        assert!(read_heatmap("l1,llc,total_energy,t_mem\n".as_bytes()).is_err());
        assert!(read_heatmap("l1,llc,total_energy,t_mem\n1,2,x,4\n".as_bytes()).is_err());
    }

    #[test]
    fn fixed_float_format() {
        assert_eq!(fmt_f(0.0214748364), "2.147483640e-2");
    }
}
