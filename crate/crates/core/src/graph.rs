//! Weighted interbank networks and their spectral and topological summaries.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reconstruct::ExposureMatrix;
use crate::util;

/// Networks up to this size use a dense eigendecomposition by default.
pub const DENSE_LIMIT: usize = 100;
/// Relative size below which an eigenvalue counts as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-6;
/// Fiedler entries with absolute value at or below this count as zero.
pub const FIEDLER_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("largest connected component has fewer than 2 nodes")]
    SingletonGraph,
    #[error("need at least {need} nodes in the largest component, got {got}")]
    TooSmall { need: usize, got: usize },
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("Fiedler vector entries all share one sign")]
    DegenerateVector,
    #[error("iterative eigensolver did not converge (residual {0:e})")]
    NoConvergence(f64),
}

type Result<T> = std::result::Result<T, GraphError>;

/// Undirected network with a symmetric, zero-diagonal weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNetwork {
    bank_ids: Vec<String>,
    weights: DMatrix<f64>,
}

impl WeightedNetwork {
    pub fn from_weights(bank_ids: Vec<String>, weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n || bank_ids.len() != n {
            return Err(GraphError::InvalidWeights(format!(
                "{} ids for a {}x{} matrix",
                bank_ids.len(),
                n,
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::InvalidWeights(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(GraphError::InvalidWeights(format!("entry ({i}, {j}) = {w}")));
                }
                if w != weights[(j, i)] {
                    return Err(GraphError::InvalidWeights(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { bank_ids, weights })
    }

    /// Build from an undirected edge list; repeated pairs accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, x) in edges {
            if i >= n || j >= n || i == j {
                return Err(GraphError::InvalidWeights(format!("bad edge ({i}, {j})")));
            }
            w[(i, j)] += x;
            w[(j, i)] += x;
        }
        Self::from_weights((0..n).map(|i| i.to_string()).collect(), w)
    }

    pub fn bank_ids(&self) -> &[String] {
        &self.bank_ids
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        let n = self.len();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| self.weights[(i, j)] > 0.0).count()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            bank_ids: self.bank_ids.clone(),
            weights: &self.weights * c,
        }
    }

    /// `L = D - W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for (i, d) in degree_sequence(self, true).into_iter().enumerate() {
            l[(i, i)] = d;
        }
        l
    }

    /// Connected components, largest first; ties go to the component holding
    /// the smaller index. Each component lists its nodes ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if !seen[v] && self.weights[(u, v)] > 0.0 {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    /// Induced subnetwork on `nodes`, in the given order.
    pub fn subnetwork(&self, nodes: &[usize]) -> Self {
        let k = nodes.len();
        Self {
            bank_ids: nodes.iter().map(|&i| self.bank_ids[i].clone()).collect(),
            weights: DMatrix::from_fn(k, k, |a, b| self.weights[(nodes[a], nodes[b])]),
        }
    }
}

/// Keep pairs whose combined exposure `xᵢⱼ + xⱼᵢ` exceeds `epsilon`, with
/// that sum as the edge weight.
pub fn build_network(x: &ExposureMatrix, epsilon: f64) -> WeightedNetwork {
    let n = x.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = x.values[(i, j)] + x.values[(j, i)];
            if s > epsilon {
                w[(i, j)] = s;
                w[(j, i)] = s;
            }
        }
    }
    WeightedNetwork {
        bank_ids: x.bank_ids.clone(),
        weights: w,
    }
}

/// Weighted degrees `Σⱼ wᵢⱼ`, or counts of positive entries.
pub fn degree_sequence(net: &WeightedNetwork, weighted: bool) -> Vec<f64> {
    net.weights
        .row_iter()
        .map(|r| {
            if weighted {
                r.sum()
            } else {
                r.iter().filter(|w| **w > 0.0).count() as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Dense up to [`DENSE_LIMIT`] nodes, Lanczos beyond.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Ascending Laplacian eigenvalues. With the dense solver this is the full
    /// spectrum of the whole network; the Lanczos path reports only `[0, λ₂]`
    /// of the largest component.
    pub eigenvalues: Vec<f64>,
    pub spectrum_complete: bool,
    /// Unit Fiedler vector over all nodes, zero outside the largest component.
    pub fiedler_vector: Vec<f64>,
    /// Component sizes, largest first.
    pub component_sizes: Vec<usize>,
    /// Node indices of the largest component.
    pub largest_component: Vec<usize>,
    /// Algebraic connectivity of the largest component.
    pub lambda2: f64,
    pub solver: SolverChoice,
}

impl SpectrumResult {
    pub fn lambda_n(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn write_eigenvalues_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "eigenvalue"])?;
        for (k, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([(k + 1).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn laplacian_spectrum(net: &WeightedNetwork) -> Result<SpectrumResult> {
    laplacian_spectrum_with(net, SolverChoice::Auto)
}

pub fn laplacian_spectrum_with(net: &WeightedNetwork, solver: SolverChoice) -> Result<SpectrumResult> {
    let n = net.len();
    if n < 2 {
        return Err(GraphError::SingletonGraph);
    }
    let comps = net.components();
    let lcc = comps[0].clone();
    if lcc.len() < 2 {
        return Err(GraphError::SingletonGraph);
    }
    let solver = match solver {
        SolverChoice::Auto if n <= DENSE_LIMIT => SolverChoice::Dense,
        SolverChoice::Auto => SolverChoice::Lanczos,
        s => s,
    };
    let sub_lap = net.subnetwork(&lcc).laplacian();
    let (eigenvalues, lambda2, q) = match solver {
        SolverChoice::Dense => {
            let (vals, vecs) = sorted_eigen(sub_lap.clone());
            let full = if lcc.len() == n { vals.clone() } else { sorted_eigen(net.laplacian()).0 };
            (full, vals[1], vecs.column(1).into_owned())
        }
        _ => {
            let (lambda2, q) = lanczos_lambda2(&sub_lap)?;
            (vec![0.0, lambda2], lambda2, q)
        }
    };
    let mut fiedler = vec![0.0; n];
    for (k, &node) in lcc.iter().enumerate() {
        fiedler[node] = q[k];
    }
    orient(&mut fiedler);
    Ok(SpectrumResult {
        eigenvalues,
        spectrum_complete: solver == SolverChoice::Dense,
        fiedler_vector: fiedler,
        component_sizes: comps.iter().map(Vec::len).collect(),
        largest_component: lcc,
        lambda2,
        solver,
    })
}

/// Eigenvalues ascending with matching eigenvector columns.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, c| eig.eigenvectors[(i, order[c])]);
    (vals, vecs)
}

/// Flip `v` so that its first entry above the zero tolerance is positive.
fn orient(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > FIEDLER_ZERO_TOL) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Smallest eigenpair of a connected Laplacian restricted to the complement
/// of the constant vector, by Lanczos with full reorthogonalisation.
fn lanczos_lambda2(lap: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = lap.nrows();
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let deflate = |v: &mut DVector<f64>| {
        let c = ones.dot(v);
        v.axpy(-c, &ones, 1.0);
    };
    let scale = lap.diagonal().max().max(1.0) * 2.0;
    let mut q = DVector::from_fn(n, |i, _| ((i as f64) * 1.618_033_988_749 + 0.5).sin() + 0.1 * (i % 7) as f64);
    deflate(&mut q);
    q /= q.norm();

    let max_steps = n - 1;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_steps);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_residual = f64::INFINITY;
    for k in 0..max_steps {
        basis.push(q.clone());
        let mut w = lap * &q;
        let a = q.dot(&w);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
            deflate(&mut w);
        }
        let b = w.norm();
        let m = k + 1;
        let exhausted = b <= 1e-12 * scale || m == max_steps;
        if exhausted || m % 8 == 0 {
            let t = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
                0 => alpha[i],
                1 => beta[i.min(j)],
                _ => 0.0,
            });
            let (vals, vecs) = sorted_eigen(t);
            let y = vecs.column(0);
            last_residual = if exhausted { 0.0 } else { b * y[m - 1].abs() };
            if exhausted || last_residual <= 1e-11 * scale {
                let mut v = DVector::zeros(n);
                for (bv, yk) in basis.iter().zip(y.iter()) {
                    v.axpy(*yk, bv, 1.0);
                }
                deflate(&mut v);
                let norm = v.norm();
                return Ok((vals[0], v / norm));
            }
        }
        beta.push(b);
        q = w / b;
    }
    Err(GraphError::NoConvergence(last_residual))
}

/// Split the largest component by the sign of the Fiedler vector. Zero
/// entries join the positive side.
pub fn fiedler_partition(spec: &SpectrumResult) -> Result<(Vec<usize>, Vec<usize>)> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = spec
        .largest_component
        .iter()
        .partition(|&&i| spec.fiedler_vector[i] >= -FIEDLER_ZERO_TOL);
    if pos.is_empty() || neg.is_empty() {
        return Err(GraphError::DegenerateVector);
    }
    Ok((pos, neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centralization {
    pub degree: f64,
    pub betweenness: f64,
    pub eigenvector: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub gini: f64,
    pub hhi: f64,
    pub top_k_share: BTreeMap<usize, f64>,
    pub cr3: f64,
    /// `None` when every endpoint degree is equal.
    pub assortativity: Option<f64>,
    pub spectral_radius: f64,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub spectral_gap: f64,
    pub effective_resistance: f64,
    pub weighted_avg_degree: f64,
    pub centralization: Centralization,
}

/// Concentration, spectral and centralisation summary of the largest
/// component. Uses dense decompositions regardless of size.
pub fn topology_report(net: &WeightedNetwork) -> Result<TopologyReport> {
    let comps = net.components();
    let lcc = comps.first().cloned().unwrap_or_default();
    if lcc.len() < 3 {
        return Err(GraphError::TooSmall { need: 3, got: lcc.len() });
    }
    let g = net.subnetwork(&lcc);
    let n = g.len();
    let d = degree_sequence(&g, true);
    let total: f64 = d.iter().sum();

    let mut desc = d.clone();
    desc.sort_by(|a, b| b.total_cmp(a));
    let share = |k: usize| desc.iter().take(k).sum::<f64>() / total;
    let top_k_share = [5, 10].into_iter().map(|k| (k, share(k))).collect();

    let (lap_vals, _) = sorted_eigen(g.laplacian());
    let (adj_vals, adj_vecs) = sorted_eigen(g.weights.clone());

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if g.weights[(i, j)] > 0.0 {
                xs.push(d[i]);
                ys.push(d[j]);
            }
        }
    }

    Ok(TopologyReport {
        n_nodes: n,
        n_edges: g.edge_count(),
        gini: gini(&d),
        hhi: d.iter().map(|x| (x / total).powi(2)).sum(),
        top_k_share,
        cr3: share(3),
        assortativity: util::pearson(&xs, &ys),
        spectral_radius: adj_vals.iter().fold(0.0, |m, v| m.max(v.abs())),
        lambda2: lap_vals[1],
        lambda_n: lap_vals[n - 1],
        spectral_gap: lap_vals[1] - lap_vals[0],
        effective_resistance: n as f64 * lap_vals[1..].iter().map(|l| 1.0 / l).sum::<f64>(),
        weighted_avg_degree: total / n as f64,
        centralization: Centralization {
            degree: degree_centralization(&degree_sequence(&g, false)),
            betweenness: betweenness_centralization(&betweenness(&g)),
            eigenvector: eigenvector_centralization(adj_vecs.column(n - 1).iter().copied().collect()),
        },
    })
}

/// Gini coefficient via the sorted-rank formula.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ranked: f64 = sorted.iter().enumerate().map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x).sum();
    (ranked / (n * total)).max(0.0)
}

fn degree_centralization(k: &[f64]) -> f64 {
    let n = k.len() as f64;
    let max = k.iter().copied().fold(f64::MIN, f64::max);
    k.iter().map(|x| max - x).sum::<f64>() / ((n - 1.0) * (n - 2.0))
}

fn betweenness_centralization(b: &[f64]) -> f64 {
    let n = b.len() as f64;
    let pairs = (n - 1.0) * (n - 2.0) / 2.0;
    let max = b.iter().copied().fold(f64::MIN, f64::max);
    b.iter().map(|x| (max - x) / pairs).sum::<f64>() / (n - 1.0)
}

fn eigenvector_centralization(mut v: Vec<f64>) -> f64 {
    let n = v.len() as f64;
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let max = v.iter().copied().fold(f64::MIN, f64::max) / norm;
    let spread: f64 = v.iter().map(|x| max - x / norm).sum();
    // a star attains the largest spread for unit-norm vectors
    let star = (n - 1.0) * (1.0 / 2f64.sqrt() - 1.0 / (2.0 * (n - 1.0)).sqrt());
    spread / star
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Undirected shortest-path betweenness (each unordered pair counted once)
/// with edge length `1/w`, by Brandes' algorithm.
pub fn betweenness(net: &WeightedNetwork) -> Vec<f64> {
    let n = net.len();
    let w = &net.weights;
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        let mut sigma = vec![0.0; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = BinaryHeap::from([Entry(0.0, s)]);
        while let Some(Entry(du, u)) = heap.pop() {
            if done[u] || du > dist[u] {
                continue;
            }
            done[u] = true;
            order.push(u);
            for v in 0..n {
                if w[(u, v)] <= 0.0 || done[v] {
                    continue;
                }
                let alt = du + 1.0 / w[(u, v)];
                let tol = 1e-12 * alt;
                if alt < dist[v] - tol {
                    dist[v] = alt;
                    sigma[v] = sigma[u];
                    preds[v] = vec![u];
                    heap.push(Entry(alt, v));
                } else if (alt - dist[v]).abs() <= tol {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        let mut delta = vec![0.0; n];
        for &v in order.iter().rev() {
            for &u in &preds[v] {
                delta[u] += sigma[u] / sigma[v] * (1.0 + delta[v]);
            }
            if v != s {
                cb[v] += delta[v];
            }
        }
    }
    cb.iter_mut().for_each(|x| *x /= 2.0);
    cb
}
