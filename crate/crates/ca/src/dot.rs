//! Graphviz rendering of a plan: one cluster per macro-step and processor,
//! tasks filled by the subset they belong to, messages as dashed edges.

use std::fmt::Write as _;

use ca_core::avoid::MacroStepPlan;
use ca_core::{NodeId, TaskGraph, TaskSet};

/// Fill colors by subset, in the order tasks are classified.
pub const PALETTE: [(&str, &str); 5] = [
    ("l0", "gray80"),
    ("l1", "tomato"),
    ("l2", "palegreen"),
    ("l3", "lightskyblue"),
    ("received", "gold"),
];

fn name(step: usize, p: usize, g: &TaskGraph, v: NodeId) -> String {
    format!("\"s{step}p{p}:{}\"", escape(g.id(v).as_str()))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn plan_dot(g: &TaskGraph, plan: &MacroStepPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph plan {{");
    let _ = writeln!(out, "  node [style=filled, shape=box, fontsize=10];");
    let _ = writeln!(out, "  subgraph cluster_legend {{");
    let _ = writeln!(out, "    label=\"subsets\";");
    for (subset, color) in PALETTE {
        let _ = writeln!(out, "    \"legend:{subset}\" [label=\"{subset}\", fillcolor={color}];");
    }
    let _ = writeln!(out, "  }}");
    for step in &plan.steps {
        let s = &step.split;
        for (p, ps) in s.procs.iter().enumerate() {
            let received = s.received(p);
            let computed = s.l3_compute(p);
            let classes: [(&TaskSet, &str); 5] = [
                (&ps.l0, PALETTE[0].1),
                (&ps.l1, PALETTE[1].1),
                (&ps.l2, PALETTE[2].1),
                (&computed, PALETTE[3].1),
                (&received, PALETTE[4].1),
            ];
            let mut shown = TaskSet::new();
            let _ = writeln!(out, "  subgraph cluster_s{}_p{p} {{", step.index);
            let _ = writeln!(
                out,
                "    label=\"step {} (levels {}..{}), processor {p}\";",
                step.index, step.levels.0, step.levels.1
            );
            for (set, color) in classes {
                for &v in set {
                    if shown.insert(v) {
                        let label = g.task(v).label.as_deref().unwrap_or(g.id(v).as_str());
                        let _ = writeln!(
                            out,
                            "    {} [label=\"{}\", fillcolor={color}];",
                            name(step.index, p, g, v),
                            escape(label)
                        );
                    }
                }
            }
            for &v in &shown {
                for &u in g.preds(v) {
                    if shown.contains(&u) {
                        let _ = writeln!(out, "    {} -> {};", name(step.index, p, g, u), name(step.index, p, g, v));
                    }
                }
            }
            let _ = writeln!(out, "  }}");
        }
        for (&(q, p), set) in &s.recv {
            for &v in set {
                let _ = writeln!(
                    out,
                    "  {} -> {} [style=dashed, constraint=false];",
                    name(step.index, q, g, v),
                    name(step.index, p, g, v)
                );
            }
        }
    }
    let _ = writeln!(out, "}}");
    out
}
