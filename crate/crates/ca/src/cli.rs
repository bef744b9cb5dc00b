//! The `ca` command line. Every flag can also come from a `CA_*` environment
//! variable; explicit flags win. Exit status is 0 on success, 1 on a domain
//! error or failed check, 2 on a usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use ca_core::avoid::MacroStepPlan;
use ca_core::sim::sweep::strong_scaling_sweep;
use ca_core::{
    blocked_transform, check_overlap_condition, communicated_volume, per_level_cover, random_dag, simulate_blocked,
    simulate_naive, stencil_1d, validate_cover, Boundary, CostModel, StencilShape, TaskGraph,
};
use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::{dot, format};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ca", version, about = "Communication-avoiding analysis of distributed task graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a stencil or random task graph.
    Generate(GenerateArgs),
    /// Split a graph into communication-avoiding macro-steps.
    Transform(TransformArgs),
    /// Check a cover's local-computation conditions.
    Validate(ValidateArgs),
    /// Write the per-level cover of a graph.
    Cover(CoverArgs),
    /// Print the simulated phase trace.
    Simulate(SimulateArgs),
    /// Run a strong-scaling sweep and write CSV.
    Sweep(SweepArgs),
}

/// `N,P,T,r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StencilSpec(pub usize, pub usize, pub usize, pub usize);

impl FromStr for StencilSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [n, p, t, r] = parts[..] else {
            return Err(format!("expected N,P,T,r, got {s:?}"));
        };
        let num = |x: &str| x.parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
        Ok(StencilSpec(num(n)?, num(p)?, num(t)?, num(r)?))
    }
}

/// `n,p_edge,P`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSpec(pub usize, pub f64, pub usize);

impl FromStr for RandomSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [n, pe, p] = parts[..] else {
            return Err(format!("expected n,p_edge,P, got {s:?}"));
        };
        let pe: f64 = pe.parse().map_err(|e| format!("{pe:?}: {e}"))?;
        if !(0.0..=1.0).contains(&pe) {
            return Err(format!("p_edge {pe} outside [0, 1]"));
        }
        Ok(RandomSpec(
            n.parse().map_err(|e| format!("{n:?}: {e}"))?,
            pe,
            p.parse().map_err(|e| format!("{p:?}: {e}"))?,
        ))
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["stencil1d", "random"])))]
pub struct GenerateArgs {
    #[arg(long, value_name = "N,P,T,r", env = "CA_STENCIL1D")]
    pub stencil1d: Option<StencilSpec>,
    #[arg(long, default_value = "dirichlet", env = "CA_BOUNDARY")]
    pub boundary: Boundary,
    #[arg(long, value_name = "n,p_edge,P", env = "CA_RANDOM")]
    pub random: Option<RandomSpec>,
    #[arg(long, default_value_t = 0, env = "CA_SEED")]
    pub seed: u64,
    #[arg(short, long, env = "CA_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(short, long, env = "CA_GRAPH")]
    pub graph: PathBuf,
    /// Levels per macro-step.
    #[arg(short, long, env = "CA_BLOCK", required_unless_present = "plan")]
    pub block: Option<u32>,
    /// Re-verify an existing plan instead of deriving one.
    #[arg(long, env = "CA_PLAN", conflicts_with = "block")]
    pub plan: Option<PathBuf>,
    #[arg(short, long, env = "CA_OUTPUT")]
    pub output: PathBuf,
    #[arg(long, env = "CA_EMIT_DOT")]
    pub emit_dot: Option<PathBuf>,
    /// Write the plan even if it fails verification.
    #[arg(long, env = "CA_FORCE")]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(short, long, env = "CA_GRAPH")]
    pub graph: PathBuf,
    #[arg(short, long, env = "CA_COVER")]
    pub cover: PathBuf,
    /// Also require remote inputs to be two levels back.
    #[arg(long, env = "CA_OVERLAP")]
    pub overlap: bool,
    #[arg(long, env = "CA_JSON")]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CoverArgs {
    #[arg(short, long, env = "CA_GRAPH")]
    pub graph: PathBuf,
    #[arg(short, long, env = "CA_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(short, long, env = "CA_GRAPH")]
    pub graph: PathBuf,
    #[arg(short, long, env = "CA_BLOCK", required_unless_present_any = ["plan", "naive"])]
    pub block: Option<u32>,
    #[arg(long, env = "CA_PLAN", conflicts_with = "block")]
    pub plan: Option<PathBuf>,
    /// Simulate level-by-level execution instead of a blocked plan.
    #[arg(long, env = "CA_NAIVE", conflicts_with_all = ["block", "plan"])]
    pub naive: bool,
    /// Cover for `--naive`; defaults to the per-level cover.
    #[arg(short, long, env = "CA_COVER", requires = "naive")]
    pub cover: Option<PathBuf>,
    #[arg(long, default_value_t = 0, env = "CA_ALPHA")]
    pub alpha: u64,
    #[arg(long, default_value_t = 0, env = "CA_BETA")]
    pub beta: u64,
    #[arg(long, default_value_t = 1, env = "CA_THREADS")]
    pub threads: u32,
    #[arg(long, env = "CA_JSON")]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, env = "CA_CONFIG")]
    pub config: PathBuf,
    #[arg(short, long, env = "CA_OUTPUT")]
    pub output: PathBuf,
    /// Directory for per-alpha columns files.
    #[arg(long, env = "CA_GNUPLOT")]
    pub gnuplot: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(&cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn execute(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<u8> {
    match cmd {
        Command::Generate(a) => generate(a, out),
        Command::Transform(a) => transform(a, out, err),
        Command::Validate(a) => validate(a, out),
        Command::Cover(a) => cover(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Sweep(a) => sweep(a, out),
    }
}

fn generate(a: &GenerateArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let g = match (a.stencil1d, a.random) {
        (Some(StencilSpec(n, p, t, r)), None) => {
            let mut shape = StencilShape::new(n, p, t, r);
            shape.boundary = a.boundary;
            stencil_1d(shape)?
        }
        (None, Some(RandomSpec(n, pe, p))) => random_dag(n, pe, p, a.seed)?,
        _ => bail!("exactly one of --stencil1d and --random is required"),
    };
    format::save_graph(&g, &a.output)?;
    writeln!(
        out,
        "wrote {}: {} tasks, {} edges, {} processors",
        a.output.display(),
        g.len(),
        g.edge_count(),
        g.nprocs()
    )?;
    Ok(EXIT_OK)
}

fn derive_plan(g: &TaskGraph, block: Option<u32>, plan: Option<&Path>) -> anyhow::Result<MacroStepPlan> {
    match (block, plan) {
        (_, Some(path)) => Ok(format::load_plan(g, path)?),
        (Some(b), None) => Ok(blocked_transform(g, &per_level_cover(g), b)?),
        (None, None) => bail!("either --block or --plan is required"),
    }
}

fn transform(a: &TransformArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<u8> {
    let g = format::load_graph(&a.graph)?;
    let plan = derive_plan(&g, a.block, a.plan.as_deref())?;
    let violations = plan.verify(&g);
    for (step, v) in &violations {
        let witness = v.witness.map(|w| format!(" (needs {})", g.id(w))).unwrap_or_default();
        writeln!(
            err,
            "step {step}, processor {}: {:?} violation at {}{witness}: {}",
            v.proc,
            v.check,
            g.id(v.task),
            v.detail
        )?;
    }
    if !violations.is_empty() && !a.force {
        writeln!(err, "error: plan has {} violations; not written", violations.len())?;
        return Ok(EXIT_FAILURE);
    }
    if !violations.is_empty() {
        writeln!(err, "warning: writing plan with {} violations", violations.len())?;
    }
    format::save_plan(&g, &plan, &a.output)?;
    if let Some(path) = &a.emit_dot {
        fs::write(path, dot::plan_dot(&g, &plan)).with_context(|| format!("writing {}", path.display()))?;
    }
    let red = plan.redundancy();
    let vol = communicated_volume(&plan);
    writeln!(out, "wrote {}: {} macro steps of {} levels", a.output.display(), plan.steps.len(), plan.block)?;
    writeln!(out, "redundant tasks: {} ({} tasks duplicated)", red.redundant, red.duplicated)?;
    for (p, r) in red.procs.iter().enumerate() {
        writeln!(out, "  processor {p}: {} native, {} computed, {} redundant", r.native, r.computed, r.redundant)?;
    }
    writeln!(out, "messages: {}, elements: {}", vol.total.messages, vol.total.elements)?;
    Ok(EXIT_OK)
}

fn validate(a: &ValidateArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let g = format::load_graph(&a.graph)?;
    let c = format::load_cover(&g, &a.cover)?;
    let report = validate_cover(&g, &c)?;
    let overlap = if a.overlap && report.valid {
        Some(check_overlap_condition(&g, &c)?)
    } else {
        None
    };
    if a.json {
        write!(out, "{}", format::cover_report_json(&g, &report))?;
        if let Some(o) = &overlap {
            write!(out, "{}", format::overlap_report_json(&g, o))?;
        }
    } else {
        writeln!(out, "valid: {}", report.valid)?;
        writeln!(out, "granularity: {}", report.granularity)?;
        writeln!(out, "violations: {}", report.violations.len())?;
        for v in &report.violations {
            writeln!(
                out,
                "  condition {}: task {} (witness {}): {}",
                v.condition.number(),
                g.id(v.task),
                g.id(v.witness),
                v.detail
            )?;
        }
        if a.overlap {
            match &overlap {
                None => writeln!(out, "overlap: not checked (cover invalid)")?,
                Some(o) => {
                    writeln!(out, "overlap: {}", if o.holds { "holds" } else { "fails" })?;
                    for w in &o.witnesses {
                        writeln!(
                            out,
                            "  block ({}, {}): task {} reads {} from the previous level",
                            w.k,
                            w.p,
                            g.id(w.task),
                            g.id(w.witness)
                        )?;
                    }
                }
            }
        }
    }
    let ok = report.valid && overlap.as_ref().is_none_or(|o| o.holds);
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn cover(a: &CoverArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let g = format::load_graph(&a.graph)?;
    let c = per_level_cover(&g);
    format::save_cover(&g, &c, &a.output)?;
    writeln!(out, "wrote {}: {} blocks", a.output.display(), c.len())?;
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let g = format::load_graph(&a.graph)?;
    let m = CostModel::new(a.alpha, a.beta, a.threads, g.nprocs())?;
    if a.naive {
        let c = match &a.cover {
            Some(path) => format::load_cover(&g, path)?,
            None => per_level_cover(&g),
        };
        let trace = simulate_naive(&c, &g, &m)?;
        if a.json {
            write!(out, "{}", format::naive_trace_json(&trace))?;
        } else {
            writeln!(out, "{trace}")?;
        }
    } else {
        let plan = derive_plan(&g, a.block, a.plan.as_deref())?;
        let trace = simulate_blocked(&plan, &g, &m)?;
        if a.json {
            write!(out, "{}", format::phase_trace_json(&trace))?;
        } else {
            writeln!(out, "{trace}")?;
        }
    }
    Ok(EXIT_OK)
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let cfg = format::load_sweep_config(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let g = cfg.graph.build(base)?;
    let table = strong_scaling_sweep(&g, &per_level_cover(&g), &cfg.scenario(), cfg.meta())?;
    format::save_sweep(&table, &a.output)?;
    writeln!(out, "wrote {}: {} rows", a.output.display(), table.rows.len())?;
    if let Some(dir) = &a.gnuplot {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (alpha, text) in format::gnuplot_columns(&table) {
            let path = dir.join(format!("alpha{alpha}.dat"));
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    Ok(EXIT_OK)
}
