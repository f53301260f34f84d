//! Reference sets of `(xi, summaries)` pairs, k-nearest-neighbour moment
//! and acceptance-probability estimates, and the accelerated ABC / BSL
//! kernels that simulate at most one pseudo-dataset per iteration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::sq_dist;
use crate::error::{Error, Result};
use crate::lfree::{DistanceSpec, SlEstimate};
use crate::mcmc::{
    log_accept_prob, metropolis_accept, ChainState, ChainStats, Kernel, Proposal, StepInfo,
};
use crate::models::Simulator;
use crate::param::ParamVec;
use crate::rng::RngStream;

/// Appended entries kept in the linear buffer before the tree is rebuilt.
const REBUILD_EVERY: usize = 1024;
const LEAF_SIZE: usize = 16;
const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    Uniform,
    /// `W_h = 1 - ||xi_h - theta|| / ||xi* - theta||`, `xi*` the farthest
    /// retrieved neighbour.
    LinearTaper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    /// Fixed neighbour count; `None` uses `floor(sqrt(H))` at query time.
    pub k: Option<usize>,
    pub weights: WeightScheme,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: None,
            weights: WeightScheme::Uniform,
        }
    }
}

/// `floor(sqrt(H))`, at least 1.
pub fn default_k(h: usize) -> usize {
    ((h as f64).sqrt().floor() as usize).max(1)
}

impl KnnConfig {
    pub fn neighbours(&self, h: usize) -> usize {
        self.k.unwrap_or_else(|| default_k(h)).clamp(1, h.max(1))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

/// Bounded max-heap of the best `k` candidates under `(d2, idx)` order.
struct Best {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.d2)
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(top) = self.heap.peek() {
            if c < *top {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    fn into_sorted(self) -> Vec<Candidate> {
        self.heap.into_sorted_vec()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a prefix of the points.
#[derive(Debug, Clone, Default)]
struct KdTree {
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    fn build(points: &[f64], d: usize, n: usize) -> Self {
        let mut tree = Self {
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(points, d, 0, n);
        }
        tree
    }

    fn build_node(&mut self, points: &[f64], d: usize, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &self.order[start..end];
        let axis = (0..d)
            .max_by(|&a, &b| spread(points, d, slice, a).total_cmp(&spread(points, d, slice, b)))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i * d + axis]
                .total_cmp(&points[j * d + axis])
                .then(i.cmp(&j))
        });
        let value = points[self.order[mid] * d + axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(points, d, start, mid);
        let right = self.build_node(points, d, mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn search(&self, points: &[f64], d: usize, q: &[f64], best: &mut Best) {
        if self.nodes.is_empty() {
            return;
        }
        self.visit(0, points, d, q, best);
    }

    fn visit(&self, id: usize, points: &[f64], d: usize, q: &[f64], best: &mut Best) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    best.offer(Candidate {
                        d2: sq_dist(&points[i * d..(i + 1) * d], q),
                        idx: i,
                    });
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.visit(near, points, d, q, best);
                if diff * diff <= best.worst() {
                    self.visit(far, points, d, q, best);
                }
            }
        }
    }
}

fn spread(points: &[f64], d: usize, idx: &[usize], axis: usize) -> f64 {
    let (lo, hi) = idx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[i * d + axis];
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// Append-only set of parameter points, each with `m` summary vectors.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    d: usize,
    p: usize,
    m: usize,
    xi: Vec<f64>,
    summaries: Vec<f64>,
    tree: KdTree,
    indexed: usize,
}

/// One retrieved entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub index: usize,
    pub distance: f64,
}

impl ReferenceSet {
    pub fn new(d: usize, p: usize, m: usize) -> Result<Self> {
        if d == 0 || p == 0 || m == 0 {
            return Err(Error::invalid("reference set needs d, p, m >= 1"));
        }
        Ok(Self {
            d,
            p,
            m,
            xi: Vec::new(),
            summaries: Vec::new(),
            tree: KdTree::default(),
            indexed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.xi.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn summary_dim(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn xi(&self, h: usize) -> &[f64] {
        &self.xi[h * self.d..(h + 1) * self.d]
    }

    /// Summary `j` of entry `h`.
    pub fn summary(&self, h: usize, j: usize) -> &[f64] {
        let start = (h * self.m + j) * self.p;
        &self.summaries[start..start + self.p]
    }

    /// Appends an entry; `summaries` holds `m` vectors of length `p`.
    pub fn push(&mut self, xi: &[f64], summaries: &[Vec<f64>]) -> Result<usize> {
        if xi.len() != self.d || xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "reference point must be finite with length d",
            ));
        }
        if summaries.len() != self.m || summaries.iter().any(|s| s.len() != self.p) {
            return Err(Error::invalid("entry needs m summaries of length p"));
        }
        self.xi.extend_from_slice(xi);
        for s in summaries {
            self.summaries.extend_from_slice(s);
        }
        if self.len() - self.indexed >= REBUILD_EVERY {
            self.reindex();
        }
        Ok(self.len() - 1)
    }

    fn reindex(&mut self) {
        self.indexed = self.len();
        self.tree = KdTree::build(&self.xi, self.d, self.indexed);
    }

    /// The `k` entries nearest `theta` in Euclidean distance, nearest first,
    /// ties broken by entry index.
    pub fn knn(&self, theta: &[f64], k: usize) -> Vec<Neighbour> {
        let mut best = Best::new(k.min(self.len()));
        if best.k == 0 {
            return Vec::new();
        }
        self.tree.search(&self.xi, self.d, theta, &mut best);
        for i in self.indexed..self.len() {
            best.offer(Candidate {
                d2: sq_dist(self.xi(i), theta),
                idx: i,
            });
        }
        best.into_sorted()
            .into_iter()
            .map(|c| Neighbour {
                index: c.idx,
                distance: c.d2.sqrt(),
            })
            .collect()
    }

    /// Writes `xi_1..xi_d, s_1..s_p, m_index` rows and a JSON sidecar.
    pub fn write_csv(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        let mut header: Vec<String> = (1..=self.d).map(|i| format!("xi_{i}")).collect();
        header.extend((1..=self.p).map(|i| format!("s_{i}")));
        header.push("m_index".into());
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for h in 0..self.len() {
            for j in 0..self.m {
                let mut row: Vec<String> = self.xi(h).iter().map(f64::to_string).collect();
                row.extend(self.summary(h, j).iter().map(f64::to_string));
                row.push(j.to_string());
                writeln!(w, "{}", row.join(",")).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        let meta = ReferenceSetMeta {
            h: self.len(),
            m: self.m,
            d: self.d,
            p: self.p,
            seed,
        };
        let side = path.with_extension("json");
        let f = File::create(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &meta)?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Self, ReferenceSetMeta)> {
        let path = path.as_ref();
        let side = path.with_extension("json");
        let meta: ReferenceSetMeta = {
            let f = File::open(&side).map_err(|e| Error::io(&side, e))?;
            serde_json::from_reader(BufReader::new(f))?
        };
        let mut set = Self::new(meta.d, meta.p, meta.m)?;
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines().skip(1);
        for _ in 0..meta.h {
            let mut xi = Vec::new();
            let mut ss = Vec::with_capacity(meta.m);
            for _ in 0..meta.m {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::invalid("reference CSV is truncated"))?
                    .map_err(|e| Error::io(path, e))?;
                let vals = line
                    .split(',')
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| Error::invalid(format!("bad number {f:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if vals.len() != meta.d + meta.p + 1 {
                    return Err(Error::invalid("reference CSV row has the wrong width"));
                }
                xi = vals[..meta.d].to_vec();
                ss.push(vals[meta.d..meta.d + meta.p].to_vec());
            }
            set.push(&xi, &ss)?;
        }
        Ok((set, meta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSetMeta {
    pub h: usize,
    pub m: usize,
    pub d: usize,
    pub p: usize,
    pub seed: u64,
}

/// Draws `h` points from `sampler` with `m` simulated summaries each,
/// entry `i` using substream `i` of `rng`. Parallel across entries and
/// bit-reproducible. A failed simulation is retried up to three times on
/// fresh substreams.
pub fn build_reference_set<S, F>(
    sampler: F,
    model: &S,
    h: usize,
    m: usize,
    rng: &RngStream,
) -> Result<ReferenceSet>
where
    S: Simulator + ?Sized,
    F: Fn(&mut RngStream) -> ParamVec + Sync,
{
    if h == 0 || m == 0 {
        return Err(Error::invalid("reference set needs H >= 1 and m >= 1"));
    }
    let entries: Vec<(ParamVec, Vec<Vec<f64>>)> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut last = None;
            for attempt in 0..=MAX_RETRIES {
                let mut stream = rng.substream(i as u64).substream(attempt as u64);
                let xi = sampler(&mut stream);
                let sims = (0..m)
                    .map(|_| model.simulate_summary(&xi, &mut stream))
                    .collect::<Result<Vec<_>>>();
                match sims {
                    Ok(s) => return Ok((xi, s)),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap_or_else(|| Error::Simulator("reference entry failed".into())))
        })
        .collect::<Result<_>>()?;
    let mut set = ReferenceSet::new(model.dim(), model.summary_dim(), m)?;
    for (xi, s) in &entries {
        set.push(xi, s)?;
    }
    set.reindex();
    Ok(set)
}

/// Neighbour weights under `scheme`; all-zero tapers fall back to uniform.
pub fn knn_weights(neighbours: &[Neighbour], scheme: WeightScheme) -> Vec<f64> {
    match scheme {
        WeightScheme::Uniform => vec![1.0; neighbours.len()],
        WeightScheme::LinearTaper => {
            let far = neighbours.iter().map(|n| n.distance).fold(0.0, f64::max);
            let w: Vec<f64> = if far > 0.0 {
                neighbours.iter().map(|n| 1.0 - n.distance / far).collect()
            } else {
                vec![0.0; neighbours.len()]
            };
            if w.iter().sum::<f64>() > 0.0 {
                w
            } else {
                log::warn!("linear-taper weights are all zero; using uniform weights");
                vec![1.0; neighbours.len()]
            }
        }
    }
}

/// Weighted kNN mean of the entries' summary means, and weighted mean of
/// the per-entry second moments around that mean.
pub fn knn_moments(
    z: &ReferenceSet,
    neighbours: &[Neighbour],
    scheme: WeightScheme,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if neighbours.is_empty() {
        return Err(Error::invalid("kNN moments need at least one neighbour"));
    }
    let p = z.summary_dim();
    let m = z.m();
    let w = knn_weights(neighbours, scheme);
    let total: f64 = w.iter().sum();
    let mut mu = vec![0.0; p];
    for (n, &wh) in neighbours.iter().zip(&w) {
        for j in 0..m {
            for (a, s) in mu.iter_mut().zip(z.summary(n.index, j)) {
                *a += wh * s / m as f64;
            }
        }
    }
    mu.iter_mut().for_each(|a| *a /= total);
    let mut sigma = DMatrix::zeros(p, p);
    for (n, &wh) in neighbours.iter().zip(&w) {
        for j in 0..m {
            let s = z.summary(n.index, j);
            let scale = wh / (m as f64 * total);
            for a in 0..p {
                let da = s[a] - mu[a];
                for b in 0..p {
                    sigma[(a, b)] += scale * da * (s[b] - mu[b]);
                }
            }
        }
    }
    Ok((mu, sigma))
}

/// Weighted fraction of neighbour summaries within epsilon of `s0`, using
/// each entry's cached hit fraction.
fn knn_probability(hits: &[f64], neighbours: &[Neighbour], scheme: WeightScheme) -> f64 {
    let w = knn_weights(neighbours, scheme);
    let total: f64 = w.iter().sum();
    neighbours
        .iter()
        .zip(&w)
        .map(|(n, wh)| wh * hits[n.index])
        .sum::<f64>()
        / total
}

fn simulate_entry<S: Simulator + ?Sized>(
    model: &S,
    theta: &[f64],
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    (0..m).map(|_| model.simulate_summary(theta, rng)).collect()
}

/// kNN-approximated ABC-MCMC. Every in-support proposal is simulated once
/// and appended to the reference set; the acceptance probability at both
/// endpoints is re-estimated from the grown set each iteration.
pub struct AabcKernel<'a, S: ?Sized> {
    pub model: &'a S,
    pub distance: &'a DistanceSpec,
    pub s0: &'a [f64],
    pub config: KnnConfig,
    reference: ReferenceSet,
    hits: Vec<f64>,
    simulations: usize,
    starved: usize,
}

impl<'a, S: Simulator + ?Sized> AabcKernel<'a, S> {
    pub fn new(
        model: &'a S,
        distance: &'a DistanceSpec,
        s0: &'a [f64],
        reference: ReferenceSet,
        config: KnnConfig,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::invalid("AABC needs a non-empty reference set"));
        }
        let hits = (0..reference.len())
            .map(|h| hit_fraction(&reference, h, distance, s0))
            .collect();
        Ok(Self {
            model,
            distance,
            s0,
            config,
            reference,
            hits,
            simulations: 0,
            starved: 0,
        })
    }

    pub fn reference(&self) -> &ReferenceSet {
        &self.reference
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    pub fn starved_steps(&self) -> usize {
        self.starved
    }

    fn probability(&self, theta: &[f64]) -> f64 {
        let k = self.config.neighbours(self.reference.len());
        let nb = self.reference.knn(theta, k);
        knn_probability(&self.hits, &nb, self.config.weights)
    }

    fn log_target(&self, theta: &[f64]) -> f64 {
        let lp = self.model.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.probability(theta).ln()
    }
}

fn hit_fraction(z: &ReferenceSet, h: usize, dist: &DistanceSpec, s0: &[f64]) -> f64 {
    let m = z.m();
    (0..m)
        .filter(|&j| dist.accepts(z.summary(h, j), s0))
        .count() as f64
        / m as f64
}

impl<S: Simulator + ?Sized> Kernel for AabcKernel<'_, S> {
    type Aux = ();

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn init(&mut self, theta: ParamVec, _rng: &mut RngStream) -> Result<ChainState<()>> {
        let lt = self.log_target(&theta);
        Ok(ChainState::new(theta, lt))
    }

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<()>,
        proposal: &P,
        rng: &mut RngStream,
    ) -> Result<StepInfo> {
        let omega = proposal.propose(&state.theta, rng);
        if !omega.is_finite() {
            return Ok(StepInfo::rejected_nonfinite());
        }
        if self.model.log_prior(&omega) == f64::NEG_INFINITY {
            return Ok(StepInfo::rejected_outside_support());
        }
        let sims = simulate_entry(self.model, &omega, self.reference.m(), rng)?;
        self.simulations += sims.len();
        let h = self.reference.push(&omega, &sims)?;
        self.hits
            .push(hit_fraction(&self.reference, h, self.distance, self.s0));

        state.cached_log_target = self.log_target(&state.theta);
        let proposed = self.log_target(&omega);
        let degenerate =
            proposed == f64::NEG_INFINITY && state.cached_log_target == f64::NEG_INFINITY;
        self.starved += usize::from(degenerate);
        let log_alpha = log_accept_prob(
            state.cached_log_target,
            proposed,
            proposal.log_correction(&state.theta, &omega),
        );
        let accepted = !degenerate && metropolis_accept(log_alpha, rng);
        if accepted {
            state.theta = omega;
            state.cached_log_target = proposed;
        }
        Ok(StepInfo {
            accepted,
            log_alpha,
            nonfinite_proposal: false,
            degenerate,
        })
    }

    fn record_stats(&self, stats: &mut ChainStats) {
        stats.simulations += self.simulations;
    }
}

/// kNN-approximated BSL-MCMC. Every in-support proposal is simulated once
/// and appended; the synthetic likelihood at both endpoints comes from kNN
/// moments of the grown set.
pub struct AbslKernel<'a, S: ?Sized> {
    pub model: &'a S,
    pub s0: &'a [f64],
    pub config: KnnConfig,
    reference: ReferenceSet,
    simulations: usize,
}

impl<'a, S: Simulator + ?Sized> AbslKernel<'a, S> {
    pub fn new(
        model: &'a S,
        s0: &'a [f64],
        reference: ReferenceSet,
        config: KnnConfig,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::invalid("ABSL needs a non-empty reference set"));
        }
        Ok(Self {
            model,
            s0,
            config,
            reference,
            simulations: 0,
        })
    }

    pub fn reference(&self) -> &ReferenceSet {
        &self.reference
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    /// kNN synthetic-likelihood estimate at `theta`.
    pub fn sl(&self, theta: &[f64]) -> Result<SlEstimate> {
        let k = self.config.neighbours(self.reference.len());
        let nb = self.reference.knn(theta, k);
        let (mu, sigma) = knn_moments(&self.reference, &nb, self.config.weights)?;
        Ok(crate::lfree::fit_sl(mu, sigma, self.s0, nb.len()))
    }

    fn log_target(&self, theta: &[f64]) -> Result<f64> {
        let lp = self.model.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + self.sl(theta)?.log_sl)
    }
}

impl<S: Simulator + ?Sized> Kernel for AbslKernel<'_, S> {
    type Aux = ();

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn init(&mut self, theta: ParamVec, _rng: &mut RngStream) -> Result<ChainState<()>> {
        let lt = self.log_target(&theta)?;
        Ok(ChainState::new(theta, lt))
    }

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<()>,
        proposal: &P,
        rng: &mut RngStream,
    ) -> Result<StepInfo> {
        let omega = proposal.propose(&state.theta, rng);
        if !omega.is_finite() {
            return Ok(StepInfo::rejected_nonfinite());
        }
        if self.model.log_prior(&omega) == f64::NEG_INFINITY {
            return Ok(StepInfo::rejected_outside_support());
        }
        let sims = simulate_entry(self.model, &omega, self.reference.m(), rng)?;
        self.simulations += sims.len();
        self.reference.push(&omega, &sims)?;

        state.cached_log_target = self.log_target(&state.theta)?;
        let proposed = self.log_target(&omega)?;
        if proposed.is_nan() {
            return Err(Error::NanTarget {
                iteration: state.iteration + 1,
            });
        }
        let degenerate =
            proposed == f64::NEG_INFINITY && state.cached_log_target == f64::NEG_INFINITY;
        let log_alpha = log_accept_prob(
            state.cached_log_target,
            proposed,
            proposal.log_correction(&state.theta, &omega),
        );
        let accepted = !degenerate && metropolis_accept(log_alpha, rng);
        if accepted {
            state.theta = omega;
            state.cached_log_target = proposed;
        }
        Ok(StepInfo {
            accepted,
            log_alpha,
            nonfinite_proposal: false,
            degenerate,
        })
    }

    fn record_stats(&self, stats: &mut ChainStats) {
        stats.simulations += self.simulations;
    }
}
