#![allow(dead_code)]

use ca_core::{LevelCover, NodeId, TaskGraph, TaskSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random cover satisfying all three conditions: walking tasks in dependency
/// order, each task lands at or after its same-processor predecessors and
/// strictly after its remote ones, plus a random delay.
pub fn random_valid_cover(g: &TaskGraph, seed: u64) -> LevelCover {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = vec![0u32; g.len()];
    let mut c = LevelCover::new();
    for &v in g.topo_order() {
        let least = g
            .preds(v)
            .iter()
            .map(|&u| k[u.index()] + u32::from(g.proc(u) != g.proc(v)))
            .max()
            .unwrap_or(0);
        k[v.index()] = least + rng.gen_range(0..2);
        c.insert(k[v.index()], g.proc(v), [v]);
    }
    c
}

/// All predecessors reachable by explicit path enumeration.
pub fn closure_by_paths(g: &TaskGraph, set: &TaskSet) -> TaskSet {
    fn walk(g: &TaskGraph, v: NodeId, path: &mut Vec<NodeId>, out: &mut TaskSet) {
        out.insert(v);
        for &u in g.preds(v) {
            assert!(!path.contains(&u), "cycle");
            path.push(u);
            walk(g, u, path, out);
            path.pop();
        }
    }
    let mut out = TaskSet::new();
    for &v in set {
        walk(g, v, &mut vec![v], &mut out);
    }
    out
}
