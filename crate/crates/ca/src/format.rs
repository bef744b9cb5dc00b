//! JSON and CSV file formats. Writers emit a canonical layout (pretty JSON,
//! graph order, trailing newline) so that `save(load(x))` is byte-identical
//! for any file this crate wrote.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ca_core::avoid::{MacroStep, MacroStepPlan};
use ca_core::cover::{CoverReport, OverlapReport};
use ca_core::sim::sweep::{Scenario, SweepMeta, SweepRow, SweepTable, Variant};
use ca_core::{
    AvoidSplit, Boundary, GraphError, LevelCover, NaiveTrace, PhaseTrace, ProcSplit, StencilShape, Task,
    TaskGraph, TaskId, TaskSet,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Graph {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl FormatError {
    fn schema(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Schema {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialization");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- graph

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nprocs: usize,
    pub tasks: Vec<TaskEntry>,
    pub edges: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: String,
    pub proc: usize,
    #[serde(default = "unit_weight")]
    pub weight: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn unit_weight() -> u64 {
    1
}

impl GraphFile {
    pub fn from_graph(g: &TaskGraph) -> Self {
        GraphFile {
            nprocs: g.nprocs(),
            tasks: g
                .tasks()
                .iter()
                .map(|t| TaskEntry {
                    id: t.id.0.clone(),
                    proc: t.proc,
                    weight: t.weight,
                    label: t.label.clone(),
                })
                .collect(),
            edges: g
                .edges()
                .map(|(u, v)| (g.id(u).0.clone(), g.id(v).0.clone()))
                .collect(),
        }
    }

    pub fn into_graph(self, path: &Path) -> Result<TaskGraph, FormatError> {
        let known: std::collections::HashSet<&str> = self.tasks.iter().map(|t| t.id.as_str()).collect();
        for (i, (a, b)) in self.edges.iter().enumerate() {
            for id in [a, b] {
                if !known.contains(id.as_str()) {
                    return Err(FormatError::schema(
                        path,
                        format!("edges[{i}] references unknown task id {id:?}"),
                    ));
                }
            }
        }
        let tasks = self
            .tasks
            .into_iter()
            .map(|t| {
                let task = Task::new(t.id, t.proc).with_weight(t.weight);
                match t.label {
                    Some(l) => task.with_label(l),
                    None => task,
                }
            })
            .collect();
        let edges: Vec<(TaskId, TaskId)> = self.edges.into_iter().map(|(a, b)| (a.into(), b.into())).collect();
        TaskGraph::build(tasks, &edges, self.nprocs).map_err(|source| FormatError::Graph {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn graph_to_string(g: &TaskGraph) -> String {
    to_json(&GraphFile::from_graph(g))
}

pub fn graph_from_str(text: &str, path: &Path) -> Result<TaskGraph, FormatError> {
    parse_json::<GraphFile>(path, text)?.into_graph(path)
}

pub fn load_graph(path: &Path) -> Result<TaskGraph, FormatError> {
    graph_from_str(&read(path)?, path)
}

pub fn save_graph(g: &TaskGraph, path: &Path) -> Result<(), FormatError> {
    write(path, &graph_to_string(g))
}

fn ids(g: &TaskGraph, set: &TaskSet) -> Vec<String> {
    set.iter().map(|&v| g.id(v).0.clone()).collect()
}

fn resolve(g: &TaskGraph, path: &Path, what: &str, list: &[String]) -> Result<TaskSet, FormatError> {
    list.iter()
        .map(|id| {
            g.node(id)
                .ok_or_else(|| FormatError::schema(path, format!("{what} references unknown task id {id:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------- cover

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverFile {
    pub blocks: Vec<BlockEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub k: u32,
    pub p: usize,
    pub tasks: Vec<String>,
}

pub fn cover_to_string(g: &TaskGraph, c: &LevelCover) -> String {
    let blocks = c
        .blocks()
        .iter()
        .map(|(&(k, p), set)| BlockEntry { k, p, tasks: ids(g, set) })
        .collect();
    to_json(&CoverFile { blocks })
}

pub fn cover_from_str(g: &TaskGraph, text: &str, path: &Path) -> Result<LevelCover, FormatError> {
    let file: CoverFile = parse_json(path, text)?;
    let mut c = LevelCover::new();
    for (i, b) in file.blocks.iter().enumerate() {
        if b.p >= g.nprocs() {
            return Err(FormatError::schema(
                path,
                format!("blocks[{i}] names processor {} of {}", b.p, g.nprocs()),
            ));
        }
        let set = resolve(g, path, &format!("blocks[{i}]"), &b.tasks)?;
        c.insert(b.k, b.p, set);
    }
    Ok(c)
}

pub fn load_cover(g: &TaskGraph, path: &Path) -> Result<LevelCover, FormatError> {
    cover_from_str(g, &read(path)?, path)
}

pub fn save_cover(g: &TaskGraph, c: &LevelCover, path: &Path) -> Result<(), FormatError> {
    write(path, &cover_to_string(g, c))
}

#[derive(Serialize)]
struct CoverReportJson<'a> {
    valid: bool,
    granularity: usize,
    overlap_ok: bool,
    violations: Vec<ViolationJson<'a>>,
}

#[derive(Serialize)]
struct ViolationJson<'a> {
    condition: u8,
    task: &'a str,
    witness: &'a str,
    detail: &'a str,
}

pub fn cover_report_json(g: &TaskGraph, r: &CoverReport) -> String {
    to_json(&CoverReportJson {
        valid: r.valid,
        granularity: r.granularity,
        overlap_ok: r.overlap_ok,
        violations: r
            .violations
            .iter()
            .map(|v| ViolationJson {
                condition: v.condition.number(),
                task: g.id(v.task).as_str(),
                witness: g.id(v.witness).as_str(),
                detail: &v.detail,
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct OverlapJson<'a> {
    holds: bool,
    witnesses: Vec<OverlapWitnessJson<'a>>,
}

#[derive(Serialize)]
struct OverlapWitnessJson<'a> {
    k: u32,
    p: usize,
    task: &'a str,
    witness: &'a str,
}

pub fn overlap_report_json(g: &TaskGraph, r: &OverlapReport) -> String {
    to_json(&OverlapJson {
        holds: r.holds,
        witnesses: r
            .witnesses
            .iter()
            .map(|w| OverlapWitnessJson {
                k: w.k,
                p: w.p,
                task: g.id(w.task).as_str(),
                witness: g.id(w.witness).as_str(),
            })
            .collect(),
    })
}

// ---------------------------------------------------------------- plan

/// `(sender, receiver)`, written as `"q->p"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Route(pub usize, pub usize);

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.0, self.1)
    }
}

impl FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (q, p) = s.split_once("->").ok_or_else(|| format!("route {s:?} is not of the form q->p"))?;
        let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("route {s:?}: {e}"));
        Ok(Route(num(q)?, num(p)?))
    }
}

impl Serialize for Route {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Route {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub block: u32,
    pub steps: Vec<StepEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub index: usize,
    pub levels: (u32, u32),
    pub procs: Vec<ProcEntry>,
    pub recv: BTreeMap<Route, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcEntry {
    pub p: usize,
    pub target: Vec<String>,
    pub l0: Vec<String>,
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    pub l3: Vec<String>,
    pub l4: Vec<String>,
    pub l5: Vec<String>,
}

pub fn plan_to_string(g: &TaskGraph, plan: &MacroStepPlan) -> String {
    let steps = plan
        .steps
        .iter()
        .map(|st| StepEntry {
            index: st.index,
            levels: st.levels,
            procs: st
                .split
                .procs
                .iter()
                .enumerate()
                .map(|(p, ps)| ProcEntry {
                    p,
                    target: ids(g, &ps.target),
                    l0: ids(g, &ps.l0),
                    l1: ids(g, &ps.l1),
                    l2: ids(g, &ps.l2),
                    l3: ids(g, &ps.l3),
                    l4: ids(g, &ps.l4),
                    l5: ids(g, &ps.l5),
                })
                .collect(),
            recv: st
                .split
                .recv
                .iter()
                .map(|(&(q, p), set)| (Route(q, p), ids(g, set)))
                .collect(),
        })
        .collect();
    to_json(&PlanFile {
        block: plan.block,
        steps,
    })
}

pub fn plan_from_str(g: &TaskGraph, text: &str, path: &Path) -> Result<MacroStepPlan, FormatError> {
    let file: PlanFile = parse_json(path, text)?;
    let np = g.nprocs();
    let mut steps = Vec::with_capacity(file.steps.len());
    for (s, st) in file.steps.into_iter().enumerate() {
        if st.procs.len() != np {
            return Err(FormatError::schema(
                path,
                format!("steps[{s}] lists {} processors, graph has {np}", st.procs.len()),
            ));
        }
        let mut procs = Vec::with_capacity(np);
        for (i, e) in st.procs.iter().enumerate() {
            if e.p != i {
                return Err(FormatError::schema(
                    path,
                    format!("steps[{s}].procs[{i}] has p = {}, expected {i}", e.p),
                ));
            }
            let at = |name: &str, list: &[String]| resolve(g, path, &format!("steps[{s}].procs[{i}].{name}"), list);
            procs.push(ProcSplit {
                target: at("target", &e.target)?,
                l0: at("l0", &e.l0)?,
                l1: at("l1", &e.l1)?,
                l2: at("l2", &e.l2)?,
                l3: at("l3", &e.l3)?,
                l4: at("l4", &e.l4)?,
                l5: at("l5", &e.l5)?,
            });
        }
        let mut recv = BTreeMap::new();
        for (route, list) in &st.recv {
            if route.0 >= np || route.1 >= np {
                return Err(FormatError::schema(path, format!("steps[{s}].recv route {route} outside {np} processors")));
            }
            let set = resolve(g, path, &format!("steps[{s}].recv[{route}]"), list)?;
            if !set.is_empty() {
                recv.insert((route.0, route.1), set);
            }
        }
        steps.push(MacroStep {
            index: st.index,
            levels: st.levels,
            split: AvoidSplit { procs, recv },
        });
    }
    Ok(MacroStepPlan {
        block: file.block,
        steps,
    })
}

pub fn load_plan(g: &TaskGraph, path: &Path) -> Result<MacroStepPlan, FormatError> {
    plan_from_str(g, &read(path)?, path)
}

pub fn save_plan(g: &TaskGraph, plan: &MacroStepPlan, path: &Path) -> Result<(), FormatError> {
    write(path, &plan_to_string(g, plan))
}

// ---------------------------------------------------------------- traces

#[derive(Serialize)]
struct TraceJson {
    total: u64,
    steps: Vec<StepJson>,
}

#[derive(Serialize)]
struct StepJson {
    index: usize,
    total: u64,
    rows: Vec<RowJson>,
}

#[derive(Serialize)]
struct RowJson {
    proc: usize,
    k1_tasks: usize,
    k1_pt: u64,
    recv_elems: usize,
    recv_time: u64,
    k2_tasks: usize,
    k2_pt: u64,
    k3_tasks: usize,
    k3_pt: u64,
    stall: u64,
    total: u64,
}

pub fn phase_trace_json(t: &PhaseTrace) -> String {
    to_json(&TraceJson {
        total: t.total,
        steps: t
            .steps
            .iter()
            .map(|s| StepJson {
                index: s.index,
                total: s.total,
                rows: s
                    .rows
                    .iter()
                    .map(|r| RowJson {
                        proc: r.proc,
                        k1_tasks: r.k1_tasks,
                        k1_pt: r.k1_pt,
                        recv_elems: r.recv_elems,
                        recv_time: r.recv_time,
                        k2_tasks: r.k2_tasks,
                        k2_pt: r.k2_pt,
                        k3_tasks: r.k3_tasks,
                        k3_pt: r.k3_pt,
                        stall: r.stall,
                        total: r.total,
                    })
                    .collect(),
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct NaiveJson {
    total: u64,
    levels: Vec<NaiveLevelJson>,
}

#[derive(Serialize)]
struct NaiveLevelJson {
    k: u32,
    comm_time: u64,
    compute_time: u64,
    total: u64,
    rows: Vec<NaiveRowJson>,
}

#[derive(Serialize)]
struct NaiveRowJson {
    proc: usize,
    tasks: usize,
    pt: u64,
    recv_elems: usize,
}

pub fn naive_trace_json(t: &NaiveTrace) -> String {
    to_json(&NaiveJson {
        total: t.total,
        levels: t
            .levels
            .iter()
            .map(|l| NaiveLevelJson {
                k: l.k,
                comm_time: l.comm_time,
                compute_time: l.compute_time,
                total: l.total,
                rows: l
                    .rows
                    .iter()
                    .map(|r| NaiveRowJson {
                        proc: r.proc,
                        tasks: r.tasks,
                        pt: r.pt,
                        recv_elems: r.recv_elems,
                    })
                    .collect(),
            })
            .collect(),
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSource {
    Stencil1d {
        points: usize,
        procs: usize,
        steps: usize,
        radius: usize,
        #[serde(default = "dirichlet", with = "boundary_name")]
        boundary: Boundary,
    },
    Random {
        n: usize,
        p_edge: f64,
        procs: usize,
        seed: u64,
    },
    Path(PathBuf),
}

fn dirichlet() -> Boundary {
    Boundary::Dirichlet
}

mod boundary_name {
    use super::*;

    pub fn serialize<S: Serializer>(b: &Boundary, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(b)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Boundary, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl GraphSource {
    /// Builds the graph; relative paths resolve against `base`.
    pub fn build(&self, base: &Path) -> anyhow::Result<TaskGraph> {
        Ok(match self {
            GraphSource::Stencil1d {
                points,
                procs,
                steps,
                radius,
                boundary,
            } => {
                let mut shape = StencilShape::new(*points, *procs, *steps, *radius);
                shape.boundary = *boundary;
                ca_core::stencil_1d(shape)?
            }
            GraphSource::Random { n, p_edge, procs, seed } => ca_core::random_dag(*n, *p_edge, *procs, *seed)?,
            GraphSource::Path(p) => load_graph(&base.join(p))?,
        })
    }

    pub fn describe(&self) -> String {
        match self {
            GraphSource::Stencil1d {
                points,
                procs,
                steps,
                radius,
                boundary,
            } => format!("stencil1d {points},{procs},{steps},{radius} {boundary}"),
            GraphSource::Random { n, p_edge, procs, .. } => format!("random {n},{p_edge},{procs}"),
            GraphSource::Path(p) => format!("file {}", p.display()),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            GraphSource::Random { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub graph: GraphSource,
    pub b: Vec<u32>,
    pub alpha: Vec<u64>,
    #[serde(default)]
    pub beta: u64,
    pub threads: Vec<u32>,
}

impl SweepConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            blocks: self.b.clone(),
            alphas: self.alpha.clone(),
            beta: self.beta,
            threads: self.threads.clone(),
        }
    }

    pub fn meta(&self) -> SweepMeta {
        SweepMeta {
            graph: self.graph.describe(),
            seed: self.graph.seed(),
        }
    }
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig, FormatError> {
    parse_json(path, &read(path)?)
}

pub fn save_sweep_config(cfg: &SweepConfig, path: &Path) -> Result<(), FormatError> {
    write(path, &to_json(cfg))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    threads: u32,
    alpha: u64,
    variant: String,
    block: Option<u32>,
    total: u64,
}

pub fn sweep_csv(t: &SweepTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &t.rows {
        w.serialize(CsvRow {
            threads: r.threads,
            alpha: r.alpha,
            variant: r.variant.to_string(),
            block: r.variant.block(),
            total: r.total,
        })
        .expect("in-memory csv");
    }
    if t.rows.is_empty() {
        w.write_record(["threads", "alpha", "variant", "block", "total"])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

pub fn sweep_from_csv(text: &str, path: &Path) -> Result<SweepTable, FormatError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|source| FormatError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if header != vec!["threads", "alpha", "variant", "block", "total"] {
        return Err(FormatError::schema(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<CsvRow>() {
        let rec = rec.map_err(|source| FormatError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let variant = match (rec.variant.as_str(), rec.block) {
            ("naive", None) => Variant::Naive,
            ("blocked", Some(b)) => Variant::Blocked(b),
            (v, b) => {
                return Err(FormatError::schema(path, format!("bad variant {v:?} with block {b:?}")));
            }
        };
        rows.push(SweepRow {
            alpha: rec.alpha,
            variant,
            threads: rec.threads,
            total: rec.total,
        });
    }
    Ok(SweepTable {
        rows,
        ..SweepTable::default()
    })
}

pub fn load_sweep(path: &Path) -> Result<SweepTable, FormatError> {
    sweep_from_csv(&read(path)?, path)
}

pub fn save_sweep(t: &SweepTable, path: &Path) -> Result<(), FormatError> {
    write(path, &sweep_csv(t))
}

/// One whitespace-separated columns file per alpha: threads, then naive and
/// each blocked variant. Returns `(alpha, contents)` pairs.
pub fn gnuplot_columns(t: &SweepTable) -> Vec<(u64, String)> {
    let mut by_alpha: BTreeMap<u64, BTreeMap<u32, BTreeMap<Variant, u64>>> = BTreeMap::new();
    for r in &t.rows {
        by_alpha
            .entry(r.alpha)
            .or_default()
            .entry(r.threads)
            .or_default()
            .insert(r.variant, r.total);
    }
    by_alpha
        .into_iter()
        .map(|(alpha, rows)| {
            let variants: std::collections::BTreeSet<Variant> =
                rows.values().flat_map(|m| m.keys().copied()).collect();
            let mut out = String::from("# threads");
            for v in &variants {
                match v.block() {
                    None => out.push_str(" naive"),
                    Some(b) => out.push_str(&format!(" blocked{b}")),
                }
            }
            out.push('\n');
            for (w, totals) in rows {
                out.push_str(&w.to_string());
                for v in &variants {
                    match totals.get(v) {
                        Some(x) => out.push_str(&format!(" {x}")),
                        None => out.push_str(" ?"),
                    }
                }
                out.push('\n');
            }
            (alpha, out)
        })
        .collect()
}
