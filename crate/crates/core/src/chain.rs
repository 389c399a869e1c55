//! Box transition graphs on dyadic covers of the torus and their strongly
//! connected components: outer approximations of the chain-recurrent set,
//! terminal classes (quasi-attractor candidates) and forward-closed box
//! neighbourhoods.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::TorusMap;
use crate::torus::{box_of_point, sample_box_into, BoxId, SampleScheme, TorusError, TorusPoint};

pub const MAX_GRAPH_DEPTH: u32 = 9;
/// Edge storage above which graph construction is refused.
pub const MEMORY_LIMIT_BYTES: f64 = 4.0 * (1u64 << 30) as f64;
/// Magic bytes at the start of a binary edge file.
pub const EDGE_FILE_MAGIC: &[u8; 8] = b"DATEDGE1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("depth {0} exceeds the memory guard (max {MAX_GRAPH_DEPTH})")]
    DepthTooLarge(u32),
    #[error("estimated edge storage {0:.3e} bytes exceeds the memory guard")]
    MemoryGuard(f64),
    #[error("bloat must be finite and non-negative, got {0}")]
    BadBloat(f64),
    #[error("lost the recurrent set — increase bloat or samples (depth {0})")]
    LostRecurrentSet(u32),
    #[error("refinement needs start_depth < end_depth ≤ {MAX_GRAPH_DEPTH}, got {0}..{1}")]
    BadDepthRange(u32, u32),
    #[error("component {0} is not terminal")]
    NotTerminal(u32),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

impl GraphError {
    pub fn code(&self) -> &'static str {
        match self {
            GraphError::DepthTooLarge(_) => "chain.depth_too_large",
            GraphError::MemoryGuard(_) => "chain.memory_guard",
            GraphError::BadBloat(_) => "chain.bad_bloat",
            GraphError::LostRecurrentSet(_) => "chain.lost_recurrent_set",
            GraphError::BadDepthRange(..) => "chain.bad_depth_range",
            GraphError::NotTerminal(_) => "chain.not_terminal",
            GraphError::Torus(e) => e.code(),
        }
    }
}

/// Finds the local index of a box in the sorted active list.
enum Lookup {
    Full,
    Dense(Vec<u32>),
    Sorted,
}

const NONE: u32 = u32::MAX;

/// Directed graph on the active boxes of one depth, in compressed sparse
/// row form over local indices (positions in `active`).
#[derive(Clone, Debug)]
pub struct TransitionGraph {
    pub depth: u32,
    /// Active boxes, sorted by linear index.
    pub active: Vec<BoxId>,
    pub offsets: Vec<usize>,
    pub targets: Vec<u32>,
    /// Box has a sample image near a box outside the active set; such
    /// edges are dropped, so the box's forward reach is unknown.
    pub leaks: Vec<bool>,
    pub bloat: f64,
    pub samples_per_box: usize,
    pub seed: u64,
}

impl TransitionGraph {
    /// Graph from explicit adjacency lists over `active` (already sorted).
    pub fn from_adjacency(depth: u32, active: Vec<BoxId>, adjacency: &[Vec<u32>]) -> Self {
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for row in adjacency {
            let mut row = row.clone();
            row.sort_unstable();
            row.dedup();
            targets.extend(row);
            offsets.push(targets.len());
        }
        let leaks = vec![false; active.len()];
        TransitionGraph { depth, active, offsets, targets, leaks, bloat: 0.0, samples_per_box: 0, seed: 0 }
    }

    pub fn n_boxes(&self) -> usize {
        self.active.len()
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn successors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Local index of `b`, if active.
    pub fn index_of(&self, b: &BoxId) -> Option<usize> {
        if b.depth != self.depth {
            return None;
        }
        let key = b.linear_index();
        self.active.binary_search_by_key(&key, |x| x.linear_index()).ok()
    }

    /// Edges as `(from, to)` linear box indices, in sorted order.
    pub fn edge_list(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.n_boxes()).flat_map(move |i| {
            let from = self.active[i].linear_index();
            self.successors(i).iter().map(move |&j| (from, self.active[j as usize].linear_index()))
        })
    }

    /// Binary edge list: the 8-byte magic `DATEDGE1`, then little-endian
    /// `depth: u32`, `seed: u64`, `bloat: f64`, `samples_per_box: u32`,
    /// `n_boxes: u64`, `n_edges: u64`, followed by `n_edges` pairs of `u64`
    /// linear box indices `(from, to)`.
    pub fn write_edges<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(EDGE_FILE_MAGIC)?;
        w.write_all(&self.depth.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.bloat.to_le_bytes())?;
        w.write_all(&(self.samples_per_box as u32).to_le_bytes())?;
        w.write_all(&(self.n_boxes() as u64).to_le_bytes())?;
        w.write_all(&(self.n_edges() as u64).to_le_bytes())?;
        for (a, b) in self.edge_list() {
            w.write_all(&a.to_le_bytes())?;
            w.write_all(&b.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Header of a binary edge file.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFileHeader {
    pub depth: u32,
    pub seed: u64,
    pub bloat: f64,
    pub samples_per_box: u32,
    pub n_boxes: u64,
    pub n_edges: u64,
}

/// Parses a buffer written by [`TransitionGraph::write_edges`].
pub fn read_edges(buf: &[u8]) -> Option<(EdgeFileHeader, Vec<(u64, u64)>)> {
    if buf.len() < 52 || &buf[..8] != EDGE_FILE_MAGIC {
        return None;
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let h = EdgeFileHeader {
        depth: u32_at(8),
        seed: u64_at(12),
        bloat: f64::from_bits(u64_at(20)),
        samples_per_box: u32_at(28),
        n_boxes: u64_at(32),
        n_edges: u64_at(40),
    };
    let body = &buf[48..];
    if body.len() as u64 != 16 * h.n_edges {
        return None;
    }
    let edges = body.chunks_exact(16).map(|c| (u64::from_le_bytes(c[..8].try_into().unwrap()), u64::from_le_bytes(c[8..].try_into().unwrap()))).collect();
    Some((h, edges))
}

/// All boxes of a depth, sorted by linear index.
pub fn full_cover(depth: u32) -> Result<Vec<BoxId>, GraphError> {
    if depth > MAX_GRAPH_DEPTH {
        return Err(GraphError::DepthTooLarge(depth));
    }
    let n = 1u64 << (3 * depth);
    (0..n).map(|i| BoxId::from_linear_index(depth, i).map_err(GraphError::from)).collect()
}

/// Largest sampled spectral norm of `Df`, from `n` seeded points.
pub fn lipschitz_estimate<M: TorusMap + ?Sized>(f: &M, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<TorusPoint> = (0..n).map(|_| TorusPoint::random(&mut rng)).collect();
    pts.par_iter().map(|p| f.jacobian(p).singular_values().max()).reduce(|| 0.0, f64::max)
}

/// Default image inflation: half a box diagonal plus the Lipschitz slack
/// over the intra-box sample spacing.
pub fn default_bloat(depth: u32, scheme: &SampleScheme, lipschitz: f64) -> f64 {
    let h = 1.0 / (1u64 << depth) as f64;
    0.5 * 3f64.sqrt() * h + lipschitz * scheme.grid_spacing_radius() * h
}

fn estimate_bytes(n_active: usize, depth: u32, bloat: f64, lipschitz: f64) -> f64 {
    let h = 1.0 / (1u64 << depth) as f64;
    let reach = (lipschitz * 3f64.sqrt() * h + 2.0 * bloat) / h + 1.0;
    n_active as f64 * (4.0 * reach.powi(3) + 16.0)
}

/// Pushes the linear indices of all boxes within Euclidean torus distance
/// `bloat` of `y`.
fn boxes_near(y: &TorusPoint, depth: u32, bloat: f64, out: &mut Vec<u64>) {
    let n = 1i64 << depth;
    let h = 1.0 / n as f64;
    let c = y.coords();
    let range = |k: usize| {
        let lo = ((c[k] - bloat) / h).floor() as i64;
        let hi = ((c[k] + bloat) / h).floor() as i64;
        if hi - lo + 1 >= n {
            (0, n - 1)
        } else {
            (lo, hi)
        }
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    let wrap = |i: i64| i.rem_euclid(n) as u32;
    for ix in rx.0..=rx.1 {
        for iy in ry.0..=ry.1 {
            for iz in rz.0..=rz.1 {
                let b = BoxId::new(depth, wrap(ix), wrap(iy), wrap(iz)).expect("wrapped index");
                if bloat == 0.0 || b.distance_to_point(y) <= bloat {
                    out.push(b.linear_index());
                }
            }
        }
    }
    if bloat == 0.0 {
        // the containing box only
        out.clear();
        out.push(box_of_point(y, depth).expect("depth checked").linear_index());
    }
}

/// Builds the sampled transition graph on `active` (sorted by linear index):
/// `b → b′` whenever the image of a sample of `b` lies within `bloat` of `b′`.
pub fn build_transition_graph<M: TorusMap + ?Sized>(
    f: &M,
    depth: u32,
    active: Vec<BoxId>,
    scheme: &SampleScheme,
    bloat: f64,
    lipschitz: f64,
) -> Result<TransitionGraph, GraphError> {
    if depth > MAX_GRAPH_DEPTH {
        return Err(GraphError::DepthTooLarge(depth));
    }
    if !(bloat.is_finite() && bloat >= 0.0) {
        return Err(GraphError::BadBloat(bloat));
    }
    let est = estimate_bytes(active.len(), depth, bloat, lipschitz);
    if est > MEMORY_LIMIT_BYTES {
        return Err(GraphError::MemoryGuard(est));
    }
    let total = 1u64 << (3 * depth);
    let lookup = if active.len() as u64 == total {
        Lookup::Full
    } else if depth <= 8 {
        let mut v = vec![NONE; total as usize];
        for (i, b) in active.iter().enumerate() {
            v[b.linear_index() as usize] = i as u32;
        }
        Lookup::Dense(v)
    } else {
        Lookup::Sorted
    };
    let keys: Vec<u64> = active.iter().map(|b| b.linear_index()).collect();
    let local = |key: u64| -> Option<u32> {
        match &lookup {
            Lookup::Full => Some(key as u32),
            Lookup::Dense(v) => Some(v[key as usize]).filter(|&i| i != NONE),
            Lookup::Sorted => keys.binary_search(&key).ok().map(|i| i as u32),
        }
    };
    let rows: Vec<(Vec<u32>, bool)> = active
        .par_iter()
        .map_init(
            || (Vec::with_capacity(scheme.count()), Vec::new()),
            |(pts, near), b| {
                pts.clear();
                sample_box_into(b, scheme, pts);
                let mut row = Vec::new();
                let mut leak = false;
                for p in pts.iter() {
                    near.clear();
                    boxes_near(&f.apply(p), depth, bloat, near);
                    for &k in near.iter() {
                        match local(k) {
                            Some(j) => row.push(j),
                            None => leak = true,
                        }
                    }
                }
                row.sort_unstable();
                row.dedup();
                (row, leak)
            },
        )
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let mut targets = Vec::with_capacity(rows.iter().map(|r| r.0.len()).sum());
    let mut leaks = Vec::with_capacity(rows.len());
    for (r, leak) in &rows {
        targets.extend_from_slice(r);
        offsets.push(targets.len());
        leaks.push(*leak);
    }
    Ok(TransitionGraph { depth, active, offsets, targets, leaks, bloat, samples_per_box: scheme.count(), seed: scheme.seed })
}

/// A sample of box `from` whose image witnesses the edge `from → to`.
pub fn edge_witness<M: TorusMap + ?Sized>(f: &M, g: &TransitionGraph, scheme: &SampleScheme, from: &BoxId, to: &BoxId) -> Option<TorusPoint> {
    let mut pts = Vec::new();
    sample_box_into(from, scheme, &mut pts);
    pts.into_iter().find(|p| {
        let y = f.apply(p);
        if g.bloat == 0.0 {
            box_of_point(&y, g.depth).ok() == Some(*to)
        } else {
            to.distance_to_point(&y) <= g.bloat
        }
    })
}

#[derive(Clone, Debug)]
pub struct SccDecomposition {
    /// Component of each active box.
    pub component: Vec<u32>,
    /// Components are numbered in completion order, so every condensation
    /// edge goes from a higher to a lower id.
    pub n_components: usize,
    pub sizes: Vec<u32>,
    /// Component contains a cycle (size > 1 or a self-loop).
    pub recurrent: Vec<bool>,
    /// Component contains a leaking box.
    pub leaks: Vec<bool>,
    pub cond_offsets: Vec<usize>,
    pub cond_targets: Vec<u32>,
    /// Components without outgoing condensation edges.
    pub terminal: Vec<u32>,
}

impl SccDecomposition {
    pub fn successors(&self, c: u32) -> &[u32] {
        &self.cond_targets[self.cond_offsets[c as usize]..self.cond_offsets[c as usize + 1]]
    }

    pub fn is_terminal(&self, c: u32) -> bool {
        self.successors(c).is_empty()
    }

    pub fn recurrent_boxes(&self, g: &TransitionGraph) -> Vec<BoxId> {
        (0..g.n_boxes()).filter(|&i| self.recurrent[self.component[i] as usize]).map(|i| g.active[i]).collect()
    }

    pub fn boxes_of(&self, g: &TransitionGraph, c: u32) -> Vec<BoxId> {
        (0..g.n_boxes()).filter(|&i| self.component[i] == c).map(|i| g.active[i]).collect()
    }

    pub fn n_recurrent_components(&self) -> usize {
        self.recurrent.iter().filter(|&&r| r).count()
    }
}

/// Tarjan's algorithm with an explicit call stack.
pub fn scc_condense(g: &TransitionGraph) -> SccDecomposition {
    let n = g.n_boxes();
    let mut index = vec![NONE; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut component = vec![NONE; n];
    let mut sizes = Vec::new();
    let mut next = 0u32;
    let mut call: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if index[root as usize] != NONE {
            continue;
        }
        call.push((root, g.offsets[root as usize]));
        index[root as usize] = next;
        low[root as usize] = next;
        next += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let vu = v as usize;
            if *pos < g.offsets[vu + 1] {
                let w = g.targets[*pos];
                *pos += 1;
                let wu = w as usize;
                if index[wu] == NONE {
                    index[wu] = next;
                    low[wu] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[wu] = true;
                    call.push((w, g.offsets[wu]));
                } else if on_stack[wu] {
                    low[vu] = low[vu].min(index[wu]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent as usize] = low[parent as usize].min(low[vu]);
            }
            if low[vu] == index[vu] {
                let id = sizes.len() as u32;
                let mut size = 0;
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w as usize] = false;
                    component[w as usize] = id;
                    size += 1;
                    if w == v {
                        break;
                    }
                }
                sizes.push(size);
            }
        }
    }
    let nc = sizes.len();
    let mut recurrent: Vec<bool> = sizes.iter().map(|&s| s > 1).collect();
    let mut leaks = vec![false; nc];
    let mut cond: Vec<Vec<u32>> = vec![Vec::new(); nc];
    for v in 0..n {
        let cv = component[v];
        leaks[cv as usize] |= g.leaks[v];
        for &w in g.successors(v) {
            let cw = component[w as usize];
            if cw == cv {
                if w as usize == v {
                    recurrent[cv as usize] = true;
                }
            } else {
                cond[cv as usize].push(cw);
            }
        }
    }
    let mut cond_offsets = vec![0];
    let mut cond_targets = Vec::new();
    for row in cond.iter_mut() {
        row.sort_unstable();
        row.dedup();
        cond_targets.extend_from_slice(row);
        cond_offsets.push(cond_targets.len());
    }
    let terminal = (0..nc as u32).filter(|&c| cond_offsets[c as usize] == cond_offsets[c as usize + 1]).collect();
    SccDecomposition { component, n_components: nc, sizes, recurrent, leaks, cond_offsets, cond_targets, terminal }
}

/// Recurrent components from which no other recurrent component can be
/// reached: the terminal classes of the graph restricted to recurrent boxes.
/// A component that reaches a leaking box is not a candidate, since its
/// forward reach left the active set.
pub fn quasi_attractor_candidates(s: &SccDecomposition) -> Vec<u32> {
    // successors have smaller ids, so increasing id order is topological from the sinks
    let mut reaches = vec![false; s.n_components];
    for c in 0..s.n_components as u32 {
        reaches[c as usize] =
            s.successors(c).iter().any(|&d| s.recurrent[d as usize] || s.leaks[d as usize] || reaches[d as usize]);
    }
    (0..s.n_components as u32)
        .filter(|&c| s.recurrent[c as usize] && !s.leaks[c as usize] && !reaches[c as usize])
        .collect()
}

/// Largest box set `U ⊇ target` built by adding every box whose out-edges
/// all land in `U` (backward pruning to a fixed point). Every edge from `U`
/// lands in `U`.
pub fn attracting_neighborhoods(g: &TransitionGraph, s: &SccDecomposition, target: u32) -> Result<Vec<BoxId>, GraphError> {
    if !s.is_terminal(target) {
        return Err(GraphError::NotTerminal(target));
    }
    let n = g.n_boxes();
    let mut rev_off = vec![0usize; n + 1];
    for &w in &g.targets {
        rev_off[w as usize + 1] += 1;
    }
    for i in 0..n {
        rev_off[i + 1] += rev_off[i];
    }
    let mut fill = rev_off.clone();
    let mut rev = vec![0u32; g.n_edges()];
    for v in 0..n {
        for &w in g.successors(v) {
            rev[fill[w as usize]] = v as u32;
            fill[w as usize] += 1;
        }
    }
    let mut inside = vec![false; n];
    let mut outside_edges: Vec<usize> = (0..n).map(|v| g.successors(v).len()).collect();
    let mut work: Vec<u32> = (0..n as u32).filter(|&v| s.component[v as usize] == target).collect();
    for &v in &work {
        inside[v as usize] = true;
    }
    while let Some(w) = work.pop() {
        for &v in &rev[rev_off[w as usize]..rev_off[w as usize + 1]] {
            let vu = v as usize;
            if inside[vu] {
                continue;
            }
            outside_edges[vu] -= 1;
            if outside_edges[vu] == 0 {
                inside[vu] = true;
                work.push(v);
            }
        }
    }
    Ok((0..n).filter(|&i| inside[i]).map(|i| g.active[i]).collect())
}

/// Whether a terminal class is separated from every other recurrent class
/// by non-recurrent or inactive boxes (no 26-neighbour contact).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationRecord {
    pub depth: u32,
    pub component_size: usize,
    pub other_recurrent_components: usize,
    /// Boxes of other recurrent components touching the class.
    pub touching_boxes: usize,
    pub isolated: bool,
}

pub fn isolation_record(g: &TransitionGraph, s: &SccDecomposition, target: u32) -> IsolationRecord {
    let n = 1i64 << g.depth;
    let mut touching = std::collections::BTreeSet::new();
    for i in 0..g.n_boxes() {
        if s.component[i] != target {
            continue;
        }
        let b = g.active[i];
        for d in 0..27 {
            let (dx, dy, dz) = ((d % 3) as i64 - 1, ((d / 3) % 3) as i64 - 1, (d / 9) as i64 - 1);
            let nb = BoxId::new(
                g.depth,
                (b.ix as i64 + dx).rem_euclid(n) as u32,
                (b.iy as i64 + dy).rem_euclid(n) as u32,
                (b.iz as i64 + dz).rem_euclid(n) as u32,
            )
            .expect("wrapped");
            if let Some(j) = g.index_of(&nb) {
                let c = s.component[j];
                if c != target && s.recurrent[c as usize] {
                    touching.insert(j);
                }
            }
        }
    }
    IsolationRecord {
        depth: g.depth,
        component_size: s.sizes[target as usize] as usize,
        other_recurrent_components: s.n_recurrent_components() - usize::from(s.recurrent[target as usize]),
        touching_boxes: touching.len(),
        isolated: touching.is_empty(),
    }
}

/// One level of the subdivision algorithm.
#[derive(Clone, Debug)]
pub struct DepthLevel {
    pub graph: TransitionGraph,
    pub scc: SccDecomposition,
    pub candidates: Vec<u32>,
}

impl DepthLevel {
    pub fn recurrent_volume(&self) -> f64 {
        let vol = (1.0 / (1u64 << self.graph.depth) as f64).powi(3);
        self.scc.recurrent_boxes(&self.graph).len() as f64 * vol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub scheme: SampleScheme,
    /// Fixed bloat; `None` uses [`default_bloat`] at every depth.
    pub bloat: Option<f64>,
    pub lipschitz_samples: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { scheme: SampleScheme { grid: 3, random: 5, seed: 1 }, bloat: None, lipschitz_samples: 4096 }
    }
}

/// Subdivision: build the graph on the active set, keep the recurrent
/// boxes, split each into its eight children and repeat up to `end_depth`.
pub fn refine_recurrent<M: TorusMap + ?Sized>(
    f: &M,
    start_depth: u32,
    end_depth: u32,
    opts: &RefineOptions,
) -> Result<Vec<DepthLevel>, GraphError> {
    if start_depth == 0 || start_depth > end_depth || end_depth > MAX_GRAPH_DEPTH {
        return Err(GraphError::BadDepthRange(start_depth, end_depth));
    }
    let lip = lipschitz_estimate(f, opts.lipschitz_samples, opts.scheme.seed);
    let mut active = full_cover(start_depth)?;
    let mut levels = Vec::new();
    for depth in start_depth..=end_depth {
        let bloat = opts.bloat.unwrap_or_else(|| default_bloat(depth, &opts.scheme, lip));
        let graph = build_transition_graph(f, depth, active, &opts.scheme, bloat, lip)?;
        let scc = scc_condense(&graph);
        let rec = scc.recurrent_boxes(&graph);
        if rec.is_empty() {
            return Err(GraphError::LostRecurrentSet(depth));
        }
        let candidates = quasi_attractor_candidates(&scc);
        active = if depth < end_depth {
            let mut next: Vec<BoxId> = rec.iter().flat_map(|b| b.children()).collect();
            next.sort_by_key(|b| b.linear_index());
            next
        } else {
            Vec::new()
        };
        levels.push(DepthLevel { graph, scc, candidates });
    }
    Ok(levels)
}

/// CSV rows `linear_index,ix,iy,iz,component,recurrent,candidate`.
pub fn write_box_csv<W: Write>(level: &DepthLevel, mut w: W) -> io::Result<()> {
    writeln!(w, "linear_index,ix,iy,iz,component,recurrent,candidate")?;
    for (i, b) in level.graph.active.iter().enumerate() {
        let c = level.scc.component[i];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.linear_index(),
            b.ix,
            b.iy,
            b.iz,
            c,
            u8::from(level.scc.recurrent[c as usize]),
            u8::from(level.candidates.contains(&c))
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{GradientFixture, Identity, Translation};

    fn grid_only() -> SampleScheme {
        SampleScheme { grid: 3, random: 0, seed: 0 }
    }

    #[test]
    fn identity_graph_is_self_loops() {
        for depth in [1, 2, 3] {
            let h = 1.0 / (1u32 << depth) as f64;
            let g = build_transition_graph(&Identity, depth, full_cover(depth).unwrap(), &grid_only(), 0.1 * h, 1.0).unwrap();
            for i in 0..g.n_boxes() {
                assert_eq!(g.successors(i), &[i as u32]);
            }
            let s = scc_condense(&g);
            assert_eq!(s.n_components, g.n_boxes());
            assert!(s.recurrent.iter().all(|&r| r));
            assert_eq!(quasi_attractor_candidates(&s).len(), g.n_boxes());
        }
    }

    #[test]
    fn translation_gives_two_cycles() {
        let g = build_transition_graph(&Translation([0.5, 0.0, 0.0]), 1, full_cover(1).unwrap(), &grid_only(), 0.0, 1.0).unwrap();
        for i in 0..8 {
            let b = g.active[i];
            let partner = BoxId::new(1, 1 - b.ix, b.iy, b.iz).unwrap();
            assert_eq!(g.successors(i), &[g.index_of(&partner).unwrap() as u32]);
        }
        let s = scc_condense(&g);
        assert_eq!(s.n_components, 4);
        assert!(s.sizes.iter().all(|&k| k == 2));
    }

    #[test]
    fn synthetic_two_cycles_and_transients() {
        // 0→1→0, 2→3→2, 4→0, 5→4, 5→2, 6→5, 6→7, 7→7
        let active = full_cover(1).unwrap();
        let adj = vec![vec![1], vec![0], vec![3], vec![2], vec![0], vec![4, 2], vec![5, 7], vec![7]];
        let g = TransitionGraph::from_adjacency(1, active, &adj);
        let s = scc_condense(&g);
        let rec: Vec<u32> = (0..s.n_components as u32).filter(|&c| s.recurrent[c as usize]).collect();
        // {0,1}, {2,3}, the self-loop at 7
        assert_eq!(rec.len(), 3);
        assert!(!s.recurrent[s.component[4] as usize]);
        assert!(!s.recurrent[s.component[5] as usize]);
        assert!(!s.recurrent[s.component[6] as usize]);
        for (v, w) in g.edge_list() {
            assert!(s.component[v as usize] >= s.component[w as usize]);
        }
        let cand = quasi_attractor_candidates(&s);
        assert_eq!(cand.len(), 3);
        let u = attracting_neighborhoods(&g, &s, s.component[0]).unwrap();
        let ids: Vec<u64> = u.iter().map(|b| b.linear_index()).collect();
        assert_eq!(ids, vec![0, 1, 4]);
        assert_eq!(attracting_neighborhoods(&g, &s, s.component[5]), Err(GraphError::NotTerminal(s.component[5])));
    }

    #[test]
    fn long_path_does_not_overflow_stack() {
        let depth = 7;
        let active = full_cover(depth).unwrap();
        let n = active.len();
        let adj: Vec<Vec<u32>> = (0..n).map(|i| vec![((i + 1) % n) as u32]).collect();
        let g = TransitionGraph::from_adjacency(depth, active, &adj);
        let s = scc_condense(&g);
        assert_eq!(s.n_components, 1);
        assert_eq!(s.sizes[0] as usize, n);
    }

    #[test]
    fn gradient_fixture_recurrent_set_shrinks() {
        let f = GradientFixture::single_sink();
        let levels = refine_recurrent(&f, 2, 5, &RefineOptions::default()).unwrap();
        let mut prev = f64::INFINITY;
        for l in &levels {
            let v = l.recurrent_volume();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        let last = levels.last().unwrap();
        let fixed: Vec<TorusPoint> = (0..8)
            .map(|k| TorusPoint::wrap_finite([0.5 * (k & 1) as f64, 0.5 * ((k >> 1) & 1) as f64, 0.5 * ((k >> 2) & 1) as f64]))
            .collect();
        for b in last.scc.recurrent_boxes(&last.graph) {
            let d = fixed.iter().map(|p| b.distance_to_point(p)).fold(f64::INFINITY, f64::min);
            assert!(d < 6.0 * b.side(), "{b} at {d}");
        }
        for p in &fixed {
            let b = box_of_point(p, last.graph.depth).unwrap();
            let i = last.graph.index_of(&b).expect("fixed point box active");
            assert!(last.scc.recurrent[last.scc.component[i] as usize]);
        }
        assert_eq!(last.candidates.len(), 1);
        let c = last.candidates[0];
        let sink_box = box_of_point(&TorusPoint::ORIGIN, last.graph.depth).unwrap();
        assert_eq!(last.scc.component[last.graph.index_of(&sink_box).unwrap()], c);
        let u = attracting_neighborhoods(&last.graph, &last.scc, c).unwrap();
        for b in &u {
            let i = last.graph.index_of(b).unwrap();
            for &j in last.graph.successors(i) {
                assert!(u.contains(&last.graph.active[j as usize]));
            }
        }
    }

    #[test]
    fn two_sink_fixture_has_two_candidates() {
        // below depth 5 the bloat still bridges the sources between the sinks
        let levels = refine_recurrent(&GradientFixture::two_sinks(), 3, 5, &RefineOptions::default()).unwrap();
        for l in &levels[2..] {
            assert_eq!(l.candidates.len(), 2, "depth {}", l.graph.depth);
        }
    }

    #[test]
    fn edge_file_round_trip() {
        let g = build_transition_graph(&Translation([0.5, 0.25, 0.0]), 2, full_cover(2).unwrap(), &grid_only(), 0.01, 1.0).unwrap();
        let mut buf = Vec::new();
        g.write_edges(&mut buf).unwrap();
        let (h, edges) = read_edges(&buf).unwrap();
        assert_eq!(h.depth, 2);
        assert_eq!(h.n_edges as usize, g.n_edges());
        assert_eq!(edges, g.edge_list().collect::<Vec<_>>());
        assert!(read_edges(&buf[..20]).is_none());
    }

    #[test]
    fn guards() {
        assert_eq!(full_cover(10).unwrap_err(), GraphError::DepthTooLarge(10));
        let err = build_transition_graph(&Identity, 9, Vec::new(), &grid_only(), f64::NAN, 1.0).unwrap_err();
        assert_eq!(err.code(), "chain.bad_bloat");
        assert!(matches!(refine_recurrent(&Identity, 4, 3, &RefineOptions::default()), Err(GraphError::BadDepthRange(4, 3))));
    }
}
