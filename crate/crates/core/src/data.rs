//! Toy datasets, prior estimation, and distribution-level metrics.
//!
//! Joint states of a length-`L` sequence over `K` categories are indexed in
//! mixed radix with position 0 as the most significant digit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{check_index, sample_categorical, Simplex};
use crate::rng::{component, Rng};

/// Largest joint state space handled by dense tables.
pub const MAX_JOINT_STATES: usize = 4096;

/// `K^L`, refusing anything above [`MAX_JOINT_STATES`].
pub fn joint_size(k: usize, l: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..l {
        n = n.saturating_mul(k);
        if n > MAX_JOINT_STATES {
            return Err(Error::Capacity {
                states: n,
                limit: MAX_JOINT_STATES,
            });
        }
    }
    Ok(n)
}

pub fn encode_joint(seq: &[usize], k: usize) -> usize {
    seq.iter().fold(0, |acc, &c| acc * k + c)
}

/// Inverse of [`encode_joint`]; `out.len()` sets `L`.
pub fn decode_joint(mut index: usize, k: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = index % k;
        index /= k;
    }
}

/// Generating distribution of a toy dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Every sample equals `point`.
    PointMass { k: usize, point: Vec<usize> },
    /// Independent tokens from `probs`.
    Iid { probs: Simplex, length: usize },
    /// First token from `initial`, then row `transition[prev]`.
    MarkovChain {
        initial: Simplex,
        transition: Vec<Simplex>,
        length: usize,
    },
    /// Graphs on `nodes` nodes whose edges form a uniformly random Hamiltonian
    /// path; each path edge gets a type uniform in `1..edge_types`, absent
    /// edges are type 0. Flattened as the upper-triangular edge list, row by row.
    TinyGraph { nodes: usize, edge_types: usize },
}

impl DatasetSpec {
    pub fn categories(&self) -> usize {
        match self {
            DatasetSpec::PointMass { k, .. } => *k,
            DatasetSpec::Iid { probs, .. } => probs.len(),
            DatasetSpec::MarkovChain { initial, .. } => initial.len(),
            DatasetSpec::TinyGraph { edge_types, .. } => *edge_types,
        }
    }

    pub fn length(&self) -> usize {
        match self {
            DatasetSpec::PointMass { point, .. } => point.len(),
            DatasetSpec::Iid { length, .. } | DatasetSpec::MarkovChain { length, .. } => *length,
            DatasetSpec::TinyGraph { nodes, .. } => nodes * nodes.saturating_sub(1) / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::PointMass { k, point } => {
                if point.is_empty() {
                    return Err(Error::Shape("point mass needs a nonempty sequence"));
                }
                for &c in point {
                    check_index(c, *k)?;
                }
            }
            DatasetSpec::Iid { length, .. } => {
                if *length == 0 {
                    return Err(Error::Shape("sequence length must be positive"));
                }
            }
            DatasetSpec::MarkovChain {
                initial,
                transition,
                length,
            } => {
                if *length == 0 {
                    return Err(Error::Shape("sequence length must be positive"));
                }
                if transition.len() != initial.len()
                    || transition.iter().any(|r| r.len() != initial.len())
                {
                    return Err(Error::Shape("transition matrix must be K x K"));
                }
            }
            DatasetSpec::TinyGraph { nodes, edge_types } => {
                if *nodes < 2 {
                    return Err(Error::Shape("a graph needs at least two nodes"));
                }
                if *edge_types < 2 {
                    return Err(Error::Shape("need at least one edge type besides 'none'"));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut Rng, out: &mut Vec<usize>) {
        out.clear();
        match self {
            DatasetSpec::PointMass { point, .. } => out.extend_from_slice(point),
            DatasetSpec::Iid { probs, length } => {
                out.extend((0..*length).map(|_| sample_categorical(probs, rng)));
            }
            DatasetSpec::MarkovChain {
                initial,
                transition,
                length,
            } => {
                let mut c = sample_categorical(initial, rng);
                out.push(c);
                for _ in 1..*length {
                    c = sample_categorical(&transition[c], rng);
                    out.push(c);
                }
            }
            DatasetSpec::TinyGraph { nodes, edge_types } => {
                let n = *nodes;
                let mut order: Vec<usize> = (0..n).collect();
                // Fisher-Yates
                for i in (1..n).rev() {
                    let j = rng.below(i + 1);
                    order.swap(i, j);
                }
                out.resize(self.length(), 0);
                for w in order.windows(2) {
                    let ty = 1 + rng.below(edge_types - 1);
                    out[edge_slot(w[0], w[1], n)] = ty;
                }
            }
        }
    }

    /// Exact joint distribution over `K^L` states.
    pub fn joint_table(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let k = self.categories();
        let l = self.length();
        let size = joint_size(k, l)?;
        let mut table = vec![0.0; size];
        let mut seq = vec![0usize; l];
        match self {
            DatasetSpec::PointMass { point, .. } => table[encode_joint(point, k)] = 1.0,
            DatasetSpec::Iid { probs, .. } => {
                for (idx, p) in table.iter_mut().enumerate() {
                    decode_joint(idx, k, &mut seq);
                    *p = seq.iter().map(|&c| probs.get(c)).product();
                }
            }
            DatasetSpec::MarkovChain {
                initial, transition, ..
            } => {
                for (idx, p) in table.iter_mut().enumerate() {
                    decode_joint(idx, k, &mut seq);
                    let mut v = initial.get(seq[0]);
                    for w in seq.windows(2) {
                        v *= transition[w[0]].get(w[1]);
                    }
                    *p = v;
                }
            }
            DatasetSpec::TinyGraph { nodes, edge_types } => {
                let n = *nodes;
                let mut perms = Vec::new();
                permutations(n, &mut perms);
                let colorings = (edge_types - 1).pow((n - 1) as u32);
                let weight = 1.0 / (perms.len() * colorings) as f64;
                let mut edges = vec![0usize; l];
                for order in &perms {
                    for mut code in 0..colorings {
                        edges.fill(0);
                        for w in order.windows(2) {
                            edges[edge_slot(w[0], w[1], n)] = 1 + code % (edge_types - 1);
                            code /= edge_types - 1;
                        }
                        table[encode_joint(&edges, k)] += weight;
                    }
                }
            }
        }
        Ok(table)
    }
}

fn edge_slot(a: usize, b: usize, n: usize) -> usize {
    let (i, j) = if a < b { (a, b) } else { (b, a) };
    // offset of row i in the upper triangle, then column
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn permutations(n: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], out);
}

/// Samples of length `L` over `K` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub k: usize,
    pub l: usize,
    pub samples: Vec<Vec<usize>>,
}

impl ToyDataset {
    pub fn new(k: usize, l: usize, samples: Vec<Vec<usize>>) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(Error::Shape("K and L must be positive"));
        }
        for s in &samples {
            if s.len() != l {
                return Err(Error::Shape("sample length differs from L"));
            }
            for &c in s {
                check_index(c, k)?;
            }
        }
        Ok(Self { k, l, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `n` samples from `spec`; sample `i` uses substream `(seed, DATA, i)`.
pub fn generate(spec: &DatasetSpec, n: usize, seed: u64) -> Result<ToyDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Domain("dataset size must be at least 1"));
    }
    let mut samples = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for i in 0..n {
        let mut rng = Rng::derive(seed, component::DATA, i as u64, 0);
        spec.draw(&mut rng, &mut buf);
        samples.push(buf.clone());
    }
    ToyDataset::new(spec.categories(), spec.length(), samples)
}

/// Prior `q_1` over a single token.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Uniform,
    Marginal(Simplex),
}

impl PriorSpec {
    pub fn simplex(&self, k: usize) -> Result<Simplex> {
        match self {
            PriorSpec::Uniform => Simplex::uniform(k),
            PriorSpec::Marginal(s) if s.len() == k => Ok(s.clone()),
            PriorSpec::Marginal(_) => Err(Error::Shape("marginal prior has the wrong K")),
        }
    }
}

/// Token-frequency prior with add-one smoothing: `(count_c + 1) / (n + K)` over
/// all `n` tokens, so every category keeps positive mass.
pub fn estimate_prior(dataset: &ToyDataset) -> Result<Simplex> {
    if dataset.is_empty() {
        return Err(Error::Domain("cannot estimate a prior from an empty dataset"));
    }
    let mut counts = vec![0usize; dataset.k];
    for s in &dataset.samples {
        for &c in s {
            counts[c] += 1;
        }
    }
    let n = (dataset.len() * dataset.l) as f64;
    let denom = n + dataset.k as f64;
    Simplex::new(counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect())
}

/// Total variation `0.5 * sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape("distributions have different support sizes"));
    }
    let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Normalized histogram of `samples` over the `K^L` joint states.
pub fn empirical_joint(samples: &[Vec<usize>], k: usize, l: usize) -> Result<Vec<f64>> {
    let size = joint_size(k, l)?;
    if samples.is_empty() {
        return Err(Error::Domain("empirical distribution of zero samples"));
    }
    let mut table = vec![0.0; size];
    for s in samples {
        if s.len() != l {
            return Err(Error::Shape("sample length differs from L"));
        }
        for &c in s {
            check_index(c, k)?;
        }
        table[encode_joint(s, k)] += 1.0;
    }
    let n = samples.len() as f64;
    table.iter_mut().for_each(|v| *v /= n);
    Ok(table)
}
