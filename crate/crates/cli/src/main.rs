use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use memsweep::config::EngineConfig;
use memsweep::costmodel::layer_l1_traffic;
use memsweep::graph::{parse_workload, serialize_workload, tensor_stats, WorkloadGraph};
use memsweep::report::{self, SweepOutputs};
use memsweep::sweep::{run_sweep, PreparedWorkload, SweepError};
use memsweep::synth::{generate, Family, FamilySpec};
use memsweep::units::{format_capacity, parse_capacity};

#[derive(Parser)]
#[command(
    name = "memsweep",
    version,
    about = "Capacity sweeps over an analytical L1/LLC/DRAM model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print weight/activation footprints and operation count.
    Stats { workload: PathBuf },
    /// Sweep the (L1, LLC) grid and write CSV reports.
    Sweep {
        workload: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Sub-grid `NxM` (L1 points x LLC points) that keeps the baseline cell.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
    },
    /// Evaluate one configuration and print per-layer mapping decisions.
    Map {
        workload: PathBuf,
        #[arg(long, value_parser = parse_capacity)]
        l1: u64,
        #[arg(long, value_parser = parse_capacity)]
        llc: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the residency event trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a synthetic workload.
    Gen(GenArgs),
    /// Extract the energy/latency Pareto front from a heatmap CSV.
    Pareto { heatmap: PathBuf },
}

#[derive(Args)]
struct GenArgs {
    /// encoder_decoder_cnn, cost_volume, attention_matcher or mlp_ray.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    depth: Option<u64>,
    #[arg(long)]
    base_width: Option<u64>,
    #[arg(long)]
    max_width: Option<u64>,
    #[arg(long)]
    blocks: Option<u64>,
    #[arg(long)]
    resolution: Option<u64>,
    #[arg(long)]
    in_channels: Option<u64>,
    #[arg(long)]
    out_channels: Option<u64>,
    #[arg(long)]
    levels: Option<u64>,
    #[arg(long)]
    width: Option<u64>,
    #[arg(long)]
    disparity: Option<u64>,
    #[arg(long)]
    tokens: Option<u64>,
    #[arg(long)]
    dim: Option<u64>,
    #[arg(long)]
    layers: Option<u64>,
    #[arg(long)]
    rays: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    chunks: Option<u64>,
}

impl GenArgs {
    fn params(&self) -> Value {
        let fields = [
            ("depth", self.depth),
            ("base_width", self.base_width),
            ("max_width", self.max_width),
            ("blocks", self.blocks),
            ("resolution", self.resolution),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("levels", self.levels),
            ("width", self.width),
            ("disparity", self.disparity),
            ("tokens", self.tokens),
            ("dim", self.dim),
            ("layers", self.layers),
            ("rays", self.rays),
            ("samples", self.samples),
            ("chunks", self.chunks),
        ];
        let map: Map<String, Value> = fields
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), Value::from(v))))
            .collect();
        Value::Object(map)
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (n, m) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxM, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| format!("expected NxM with positive N and M, got `{s}`"))
    };
    Ok((parse(n)?, parse(m)?))
}

enum Failure {
    /// Bad arguments, config, or input files.
    Usage(String),
    /// The model could not evaluate the request.
    Model(String),
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        if e.is_model_error() {
            Failure::Model(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_workload(path: &Path) -> Result<WorkloadGraph, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read `{}`: {e}", path.display())))?;
    parse_workload(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, Failure> {
    match path {
        Some(p) => EngineConfig::load(p).map_err(usage),
        None => Ok(EngineConfig::default()),
    }
}

fn cmd_stats(path: &Path) -> Result<(), Failure> {
    let g = load_workload(path)?;
    println!(
        "{:<28} {:>10} {:>10} {:>10}",
        "workload", "Wgt(MB)", "Act(MB)", "GFLOPs"
    );
    println!("{:<28} {}", g.name, tensor_stats(&g));
    Ok(())
}

fn cmd_sweep(
    workload: &Path,
    config: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    grid: Option<(usize, usize)>,
) -> Result<(), Failure> {
    let g = load_workload(workload)?;
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some((n, m)) = grid {
        cfg.grid = cfg.grid.window(n, m)?;
    }
    let points = run_sweep(&g, &cfg.grid, &cfg.settings, cfg.workers)?;
    let prepared = PreparedWorkload::new(&g, &cfg.settings.policy);
    let trace = cfg
        .emit_trace
        .then(|| prepared.residency_at(cfg.grid.baseline.1));
    let files = report::write_outputs(
        &cfg.out_dir,
        &SweepOutputs {
            graph: &prepared.graph,
            points: &points,
            grid: &cfg.grid,
            regime: &cfg.regime,
            roofline_total: cfg.emit_roofline_total,
            baseline_trace: trace.as_ref(),
        },
    )
    .map_err(usage)?;
    print!("{}", report::summary_text(&g.name, &points, &cfg.grid));
    let regime = report::regime_text(&points, &cfg.grid, &cfg.regime);
    println!("{}", regime.lines().next().unwrap_or_default());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_map(
    workload: &Path,
    l1: u64,
    llc: u64,
    config: Option<&Path>,
    seed: Option<u64>,
    trace_path: Option<&Path>,
) -> Result<(), Failure> {
    let g = load_workload(workload)?;
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let s = &cfg.settings;
    let footprint = g.total_footprint_bytes();
    if footprint > s.tech.dram_capacity_bytes {
        return Err(SweepError::DramOverflow {
            footprint,
            capacity: s.tech.dram_capacity_bytes,
        }
        .into());
    }
    let w = PreparedWorkload::new(&g, &s.policy);
    let decisions = w.map_at(l1, s)?;
    let trace = w.residency_at(llc);
    let p = w.point(l1, llc, &decisions, &trace, &s.tech);

    let mut o = String::new();
    let _ = writeln!(
        o,
        "workload: {}  L1 = {}  LLC = {}",
        g.name,
        format_capacity(l1),
        format_capacity(llc)
    );
    let _ = writeln!(
        o,
        "{:<28} {:<12} {:<3} {:<34} {:>12} {:>12} fused",
        "node", "class", "df", "tiling", "l1_fill_B", "l1_drain_B"
    );
    for (i, d) in decisions.iter().enumerate() {
        let t = layer_l1_traffic(&w.graph, i, d);
        let _ = writeln!(
            o,
            "{:<28} {:<12} {:<3} {:<34} {:>12} {:>12} {}",
            d.node,
            w.graph.nodes[i].op_class.to_string(),
            d.stationary.to_string(),
            d.tiling.map_or("-".to_string(), |t| t.to_string()),
            t.fill,
            t.drain,
            d.fused_into.as_deref().unwrap_or("-")
        );
    }
    let tr = &p.traffic;
    let e = &p.energy;
    let _ = writeln!(o, "\ntraffic (bytes): l1_read={} l1_write={} llc_read={} llc_write={} dram_read={} dram_write={}",
        tr.l1_read, tr.l1_write, tr.llc_read, tr.llc_write, tr.dram_read, tr.dram_write);
    let _ = writeln!(
        o,
        "spills: {}  streamed tensors: {}",
        trace.spills().count(),
        trace.streamed.len()
    );
    let _ = writeln!(
        o,
        "energy (J): l1={:.6e} llc={:.6e} dram={:.6e} core={:.6e} leakage={:.6e} total={:.6e}",
        e.e_l1, e.e_llc, e.e_dram, e.e_core, e.e_leakage, e.total
    );
    let _ = writeln!(
        o,
        "latency (s): t_l1={:.6e} t_llc={:.6e} t_dram={:.6e} t_mem={:.6e} t_compute={:.6e}",
        p.latency.t_l1, p.latency.t_llc, p.latency.t_dram, p.latency.t_mem, p.t_compute
    );
    if cfg.emit_roofline_total {
        let _ = writeln!(o, "roofline_total (s): {:.6e}", p.roofline_total);
    }
    print!("{o}");
    if let Some(path) = trace_path {
        let f = std::fs::File::create(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        trace
            .write_csv(&w.graph, std::io::BufWriter::new(f))
            .map_err(usage)?;
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let family = Family::parse(&args.family).map_err(usage)?;
    let spec = FamilySpec::from_params(family, args.params()).map_err(usage)?;
    let g = generate(&spec, args.seed).map_err(usage)?;
    let text = serialize_workload(&g);
    match &args.out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_pareto(path: &Path) -> Result<(), Failure> {
    let f = std::fs::File::open(path)
        .map_err(|e| Failure::Usage(format!("cannot read `{}`: {e}", path.display())))?;
    let rows =
        report::read_heatmap(f).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    report::write_pareto_rows(&rows, std::io::stdout().lock()).map_err(usage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Stats { workload } => cmd_stats(&workload),
        Command::Sweep {
            workload,
            config,
            out,
            seed,
            workers,
            grid,
        } => cmd_sweep(&workload, config.as_deref(), out, seed, workers, grid),
        Command::Map {
            workload,
            l1,
            llc,
            config,
            seed,
            trace,
        } => cmd_map(
            &workload,
            l1,
            llc,
            config.as_deref(),
            seed,
            trace.as_deref(),
        ),
        Command::Gen(args) => cmd_gen(&args),
        Command::Pareto { heatmap } => cmd_pareto(&heatmap),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Model(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
