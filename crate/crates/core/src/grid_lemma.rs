//! Plane-weight analysis of label sets in the 4×4×4 grid of pure divisions
//! of three cakes cut in four pieces each.
//!
//! A selection lies on the three planes `(cake, pick)`. Two selections are
//! disjoint iff they share no plane, and a point of the polytope with every
//! entry 1/4 puts weight exactly 1/4 on each plane.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CakeConfig, Division, PieceSelection};
use crate::triangulation::Triangulation;
use crate::{Error, Result};

pub const GRID_CAKES: usize = 3;
pub const GRID_PIECES: usize = 4;
pub const PLANE_COUNT: usize = GRID_CAKES * GRID_PIECES;
pub const PLANE_WEIGHT: f64 = 1.0 / GRID_PIECES as f64;

/// Tolerance on plane sums and solver residuals.
pub const PLANE_TOL: f64 = 1e-9;

/// Weights at or below this are treated as zero.
pub const POSITIVE_WEIGHT: f64 = 1e-9;

const MAX_LABELS: usize = 10;

fn check_labels(labels: &[PieceSelection]) -> Result<()> {
    if labels.len() > MAX_LABELS {
        return Err(Error::InvalidSelection(format!(
            "at most {MAX_LABELS} labels, got {}",
            labels.len()
        )));
    }
    for (t, s) in labels.iter().enumerate() {
        if s.len() != GRID_CAKES || s.picks().iter().any(|&p| p >= GRID_PIECES) {
            return Err(Error::InvalidSelection(format!(
                "{s} is not a selection of three cakes of four pieces"
            )));
        }
        if labels[..t].contains(s) {
            return Err(Error::InvalidSelection(format!("duplicate label {s}")));
        }
    }
    Ok(())
}

fn plane_of(cake: usize, pick: usize) -> usize {
    cake * GRID_PIECES + pick
}

/// The 12 × n incidence matrix of labels against planes.
fn incidence(labels: &[PieceSelection]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(PLANE_COUNT, labels.len());
    for (t, s) in labels.iter().enumerate() {
        for (i, &p) in s.picks().iter().enumerate() {
            m[(plane_of(i, p), t)] = 1.0;
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedLabelSet {
    labels: Vec<PieceSelection>,
    weights: Vec<f64>,
}

impl WeightedLabelSet {
    pub fn new(labels: Vec<PieceSelection>, weights: Vec<f64>) -> Result<Self> {
        check_labels(&labels)?;
        if labels.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} labels but {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidWeights(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        Ok(Self { labels, weights })
    }

    pub fn labels(&self) -> &[PieceSelection] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Planes whose weight misses 1/4 by more than the tolerance.
    pub fn plane_violations(&self) -> Vec<usize> {
        plane_weights(self)
            .iter()
            .enumerate()
            .filter(|(_, w)| (*w - PLANE_WEIGHT).abs() > PLANE_TOL)
            .map(|(q, _)| q)
            .collect()
    }

    pub fn satisfies_planes(&self) -> bool {
        self.plane_violations().is_empty()
    }
}

/// Plane sums ordered cake 0 pieces a..d, then cake 1, then cake 2.
pub fn plane_weights(set: &WeightedLabelSet) -> [f64; PLANE_COUNT] {
    let mut out = [0.0; PLANE_COUNT];
    for (s, w) in set.labels.iter().zip(&set.weights) {
        for (i, &p) in s.picks().iter().enumerate() {
            out[plane_of(i, p)] += w;
        }
    }
    out
}

/// Lawson–Hanson active-set solver for `min ‖Ax − b‖, x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 1e-13 * a.norm().max(1.0);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut s = DVector::zeros(n);
        if cols.is_empty() {
            return s;
        }
        let sub = a.select_columns(&cols);
        let z = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .expect("svd with both factors always solves");
        for (k, &j) in cols.iter().enumerate() {
            s[j] = z[k];
        }
        s
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let alpha = (0..n)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

fn center_system(labels: &[PieceSelection]) -> (DMatrix<f64>, DVector<f64>) {
    let n = labels.len();
    let mut a = DMatrix::zeros(PLANE_COUNT + 1, n);
    a.view_mut((0, 0), (PLANE_COUNT, n))
        .copy_from(&incidence(labels));
    a.row_mut(PLANE_COUNT).fill(1.0);
    let mut b = DVector::from_element(PLANE_COUNT + 1, PLANE_WEIGHT);
    b[PLANE_COUNT] = 1.0;
    (a, b)
}

/// Nonnegative weights summing to 1 whose plane sums are all 1/4, if any.
/// When several exist, one is returned.
pub fn solve_center_weights(labels: &[PieceSelection]) -> Result<Option<Vec<f64>>> {
    check_labels(labels)?;
    if labels.is_empty() {
        return Ok(None);
    }
    let (a, b) = center_system(labels);
    let x = nnls(&a, &b);
    let residual = (&a * &x - &b).norm();
    Ok((residual <= PLANE_TOL).then(|| x.iter().copied().collect()))
}

/// Weights of ten independent labels, which are unique when they exist.
/// `None` when the labels are dependent.
fn unique_weights_of_ten(labels: &[PieceSelection]) -> Option<Option<Vec<f64>>> {
    let mut a = SMatrix::<f64, { PLANE_COUNT + 1 }, MAX_LABELS>::zeros();
    for (t, s) in labels.iter().enumerate() {
        for (i, &p) in s.picks().iter().enumerate() {
            a[(plane_of(i, p), t)] = 1.0;
        }
        a[(PLANE_COUNT, t)] = 1.0;
    }
    let mut b = SVector::<f64, { PLANE_COUNT + 1 }>::repeat(PLANE_WEIGHT);
    b[PLANE_COUNT] = 1.0;
    let chol = (a.transpose() * a).cholesky()?;
    if chol.l_dirty().diagonal().min() <= 1e-6 {
        return None;
    }
    let x = chol.solve(&(a.transpose() * b));
    let ok = (a * x - b).norm() <= PLANE_TOL && x.iter().all(|&v| v > POSITIVE_WEIGHT);
    Some(ok.then(|| x.iter().copied().collect()))
}

/// Necessary for strictly positive weights: a label alone on a plane has
/// weight 1/4, so it must be alone on all three of its planes.
fn lonely_labels_consistent(labels: &[PieceSelection]) -> bool {
    let occ = occupancy(labels);
    if occ.iter().flatten().any(|&c| c == 0) {
        return false;
    }
    labels.iter().all(|s| {
        let counts: Vec<usize> = s
            .picks()
            .iter()
            .enumerate()
            .map(|(i, &p)| occ[i][p])
            .collect();
        counts.iter().all(|&c| c == 1) || counts.iter().all(|&c| c > 1)
    })
}

/// Maximizer of `Σ ln a_t` over the feasible weights, which exists iff
/// strictly positive weights exist. Returns `None` otherwise.
pub fn analytic_center_weights(labels: &[PieceSelection]) -> Result<Option<Vec<f64>>> {
    check_labels(labels)?;
    let n = labels.len();
    if n == 0 {
        return Ok(None);
    }
    let (a, b) = center_system(labels);
    let feasible = |x: &DVector<f64>| (&a * x - &b).norm() <= PLANE_TOL;

    if n == MAX_LABELS {
        if let Some(unique) = unique_weights_of_ten(labels) {
            return Ok(unique);
        }
    } else {
        let gram = a.transpose() * &a;
        if let Some(chol) = gram.cholesky() {
            if chol.l_dirty().diagonal().min() > 1e-6 {
                let x = chol.solve(&(a.transpose() * &b));
                let ok = feasible(&x) && x.iter().all(|&v| v > POSITIVE_WEIGHT);
                return Ok(ok.then(|| x.iter().copied().collect()));
            }
        }
    }

    // dependent labels: every weight must be positive somewhere on the feasible set
    let x0 = nnls(&a, &b);
    if !feasible(&x0) {
        return Ok(None);
    }
    let mut covered: Vec<bool> = x0.iter().map(|&v| v > POSITIVE_WEIGHT).collect();
    for j in 0..n {
        if covered[j] {
            continue;
        }
        let shifted = &b - a.column(j) * 1e-7;
        let mut y = nnls(&a, &shifted);
        if (&a * &y - &shifted).norm() > PLANE_TOL {
            return Ok(None);
        }
        y[j] += 1e-7;
        for (c, &v) in covered.iter_mut().zip(y.iter()) {
            *c |= v > POSITIVE_WEIGHT;
        }
    }

    // keep a maximal independent set of the original rows
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut rows = Vec::new();
    for q in 0..a.nrows() {
        let mut v = a.row(q).transpose();
        for e in &basis {
            v -= e * e.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-9 {
            basis.push(v / norm);
            rows.push(q);
        }
    }
    let r = rows.len();
    let ar = a.select_rows(&rows);
    let br = DVector::from_iterator(r, rows.iter().map(|&q| b[q]));

    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut kkt = DMatrix::zeros(n + r, n + r);
    for _ in 0..200 {
        let primal = &ar * &x - &br;
        let grad = x.map(|v| -1.0 / v);
        kkt.fill(0.0);
        for j in 0..n {
            kkt[(j, j)] = 1.0 / (x[j] * x[j]);
        }
        kkt.view_mut((0, n), (n, r)).copy_from(&ar.transpose());
        kkt.view_mut((n, 0), (r, n)).copy_from(&ar);
        let mut rhs = DVector::zeros(n + r);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        rhs.rows_mut(n, r).copy_from(&(-&primal));
        let Some(step) = kkt.clone().lu().solve(&rhs) else {
            return Ok(None);
        };
        let dx = step.rows(0, n).into_owned();
        let nu = step.rows(n, r).into_owned();
        let residual = |x: &DVector<f64>, nu: &DVector<f64>| -> f64 {
            let g = x.map(|v| -1.0 / v);
            let dual = g + ar.transpose() * nu;
            let p = &ar * x - &br;
            (dual.norm_squared() + p.norm_squared()).sqrt()
        };
        let r0 = residual(&x, &nu);
        let mut t = 1.0;
        while (0..n).any(|j| x[j] + t * dx[j] <= 0.0) {
            t *= 0.5;
        }
        while t > 1e-12 && residual(&(&x + &dx * t), &nu) > (1.0 - 0.01 * t) * r0 {
            t *= 0.5;
        }
        x += &dx * t;
        if primal.norm() <= 1e-13 && dx.norm() <= 1e-10 {
            break;
        }
        if t <= 1e-12 {
            break;
        }
    }
    let feasible = (&a * &x - &b).norm() <= PLANE_TOL;
    let positive = x.iter().all(|&v| v > POSITIVE_WEIGHT);
    Ok((feasible && positive).then(|| x.iter().copied().collect()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointnessGraph {
    pub nodes: Vec<PieceSelection>,
    pub edges: Vec<(usize, usize)>,
}

impl DisjointnessGraph {
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(u, v)| {
                if u == node {
                    Some(v)
                } else if v == node {
                    Some(u)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors(node).len()
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for v in 0..n {
            let r = find(&mut parent, v);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(v);
        }
        groups
    }

    pub fn max_component(&self) -> usize {
        self.components().iter().map(Vec::len).max().unwrap_or(0)
    }
}

pub fn disjointness_graph(labels: &[PieceSelection]) -> Result<DisjointnessGraph> {
    check_labels(labels)?;
    let mut edges = Vec::new();
    for u in 0..labels.len() {
        for v in u + 1..labels.len() {
            if labels[u].is_disjoint(&labels[v])? {
                edges.push((u, v));
            }
        }
    }
    Ok(DisjointnessGraph {
        nodes: labels.to_vec(),
        edges,
    })
}

/// First four pairwise-disjoint labels in lexicographic order of positions.
pub fn find_diagonal(labels: &[PieceSelection]) -> Result<Option<[PieceSelection; 4]>> {
    let g = disjointness_graph(labels)?;
    let n = labels.len();
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in &g.edges {
        adj[u][v] = true;
        adj[v][u] = true;
    }
    for a in 0..n {
        for b in a + 1..n {
            if !adj[a][b] {
                continue;
            }
            for c in b + 1..n {
                if !(adj[a][c] && adj[b][c]) {
                    continue;
                }
                for d in c + 1..n {
                    if adj[a][d] && adj[b][d] && adj[c][d] {
                        return Ok(Some([
                            labels[a].clone(),
                            labels[b].clone(),
                            labels[c].clone(),
                            labels[d].clone(),
                        ]));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Per-direction plane occupancy sorted descending.
pub type Profile = [[usize; GRID_PIECES]; GRID_CAKES];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileCase {
    /// Some plane holds a single label.
    SingleVertexPlane,
    /// `(4,2,2,2)` in all three directions.
    Case1,
    /// `(4,2,2,2)` twice and `(3,3,2,2)` once.
    Case2,
    /// `(4,2,2,2)` once and `(3,3,2,2)` twice.
    Case3,
    /// `(3,3,2,2)` in all three directions.
    Case4,
    /// Fewer than ten labels, each plane holding at least two. Arises when
    /// the center lies on the boundary of the cell's image; the bound is
    /// then checked directly.
    PartialSupport,
    /// Some plane is empty.
    Unhandled,
}

fn occupancy(labels: &[PieceSelection]) -> [[usize; GRID_PIECES]; GRID_CAKES] {
    let mut occ = [[0; GRID_PIECES]; GRID_CAKES];
    for s in labels {
        for (i, &p) in s.picks().iter().enumerate() {
            occ[i][p] += 1;
        }
    }
    occ
}

pub fn classify_profile(labels: &[PieceSelection]) -> Result<(Profile, ProfileCase)> {
    check_labels(labels)?;
    let mut profile = occupancy(labels);
    for row in &mut profile {
        row.sort_unstable_by(|a, b| b.cmp(a));
    }
    let flat = || profile.iter().flatten();
    let case = if flat().any(|&c| c == 0) {
        ProfileCase::Unhandled
    } else if flat().any(|&c| c == 1) {
        ProfileCase::SingleVertexPlane
    } else if labels.len() != MAX_LABELS {
        ProfileCase::PartialSupport
    } else {
        let fours = profile.iter().filter(|r| **r == [4, 2, 2, 2]).count();
        let threes = profile.iter().filter(|r| **r == [3, 3, 2, 2]).count();
        match (fours, threes) {
            (3, 0) => ProfileCase::Case1,
            (2, 1) => ProfileCase::Case2,
            (1, 2) => ProfileCase::Case3,
            (0, 3) => ProfileCase::Case4,
            _ => ProfileCase::Unhandled,
        }
    };
    Ok((profile, case))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub labels: Vec<PieceSelection>,
    pub weights: Vec<f64>,
    pub plane_weights: Vec<f64>,
    pub profile: Profile,
    pub case: ProfileCase,
    pub components: Vec<Vec<usize>>,
    pub max_component: usize,
    pub required: usize,
    pub pass: bool,
}

/// Checks that the disjointness graph of a plane-feasible weighted set has
/// a component of at least 6 labels (or all of them when fewer than 6
/// labels carry weight and a diagonal is forced).
///
/// The case analysis runs on the labels with positive weight; the graph and
/// its components are computed on all labels.
pub fn check_component_bound(set: &WeightedLabelSet) -> Result<LemmaReport> {
    if let Some(&q) = set.plane_violations().first() {
        return Err(Error::Precondition(format!(
            "plane {q} has weight {}, expected 1/4",
            plane_weights(set)[q]
        )));
    }
    let labels = set.labels();
    let graph = disjointness_graph(labels)?;
    let components = graph.components();
    let max_component = graph.max_component();
    let weighted: Vec<PieceSelection> = labels
        .iter()
        .zip(set.weights())
        .filter(|(_, &w)| w > POSITIVE_WEIGHT)
        .map(|(s, _)| s.clone())
        .collect();
    let (profile, case) = classify_profile(&weighted)?;
    let required = match case {
        ProfileCase::SingleVertexPlane if weighted.len() <= 5 => labels.len(),
        _ => 6.min(labels.len()),
    };
    let mut pass = max_component >= required && case != ProfileCase::Unhandled;
    if case == ProfileCase::Case4 {
        // a label whose planes hold at most 4 other labels has at least 5 neighbors
        let occ = occupancy(&weighted);
        let g = disjointness_graph(&weighted)?;
        let pigeon = (0..weighted.len()).find(|&t| {
            let others: usize = weighted[t]
                .picks()
                .iter()
                .enumerate()
                .map(|(i, &p)| occ[i][p] - 1)
                .sum();
            others <= 4
        });
        pass &= pigeon.is_some_and(|t| g.degree(t) >= 5);
    }
    Ok(LemmaReport {
        labels: labels.to_vec(),
        weights: set.weights().to_vec(),
        plane_weights: plane_weights(set).to_vec(),
        profile,
        case,
        components,
        max_component,
        required,
        pass,
    })
}

/// All 64 selections of the grid in lexicographic order.
pub fn grid_selections() -> Vec<PieceSelection> {
    (0..GRID_PIECES.pow(GRID_CAKES as u32))
        .map(|i| PieceSelection::from_picks(vec![i / 16, (i / 4) % 4, i % 4]))
        .collect()
}

/// Uniformly random 10-label subsets that admit strictly positive
/// plane-feasible weights, weighted by their analytic center. Returns the
/// accepted sets and the number of subsets drawn.
pub fn random_plane_feasible_sets(count: usize, seed: u64) -> (Vec<WeightedLabelSet>, u64) {
    let grid = grid_selections();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut drawn = 0u64;
    while out.len() < count {
        drawn += 1;
        let mut idx = sample(&mut rng, grid.len(), MAX_LABELS).into_vec();
        idx.sort_unstable();
        let labels: Vec<PieceSelection> = idx.iter().map(|&i| grid[i].clone()).collect();
        if !lonely_labels_consistent(&labels) {
            continue;
        }
        if let Some(w) = analytic_center_weights(&labels).expect("grid labels") {
            out.push(WeightedLabelSet::new(labels, w).expect("valid weights"));
        }
    }
    (out, drawn)
}

/// The N = 1 cell containing the center, with its weights and bound check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterCellReport {
    pub cell_index: u64,
    /// How many N = 1 cells contain the center.
    pub containing_cells: usize,
    pub weights_strictly_positive: bool,
    pub lemma: LemmaReport,
    pub pass: bool,
}

/// At mesh 1 every vertex is a pure division and carries its own label, so
/// the cell's labels are its vertices and its weights are the barycentric
/// coordinates of the center. The lowest-index containing cell is checked.
pub fn center_cell_check() -> Result<CenterCellReport> {
    let config = CakeConfig::uniform(GRID_CAKES, GRID_PIECES)?;
    let tri = Triangulation::build(&config, 1)?;
    let center = Division::center(&config);
    let hits = tri.containing_cells(&center, 1e-12);
    let (cell, bary) = hits
        .first()
        .cloned()
        .ok_or_else(|| Error::Precondition("no cell contains the center".into()))?;
    let labels: Vec<PieceSelection> = cell
        .vertex_ids
        .iter()
        .map(|&v| {
            let coords = tri.vertex_coords(v);
            PieceSelection::from_picks(
                coords
                    .iter()
                    .map(|row| row.iter().position(|&y| y == 1).expect("pure vertex"))
                    .collect(),
            )
        })
        .collect();
    let solved = solve_center_weights(&labels)?.ok_or_else(|| {
        Error::Precondition("center weights are infeasible for the containing cell".into())
    })?;
    // ten vertices of a simplex: the solved weights are its barycentric coordinates
    debug_assert!(solved.iter().zip(&bary).all(|(a, b)| (a - b).abs() < 1e-9));
    let weights_strictly_positive = solved.iter().all(|&w| w > POSITIVE_WEIGHT);
    let lemma = check_component_bound(&WeightedLabelSet::new(labels, solved)?)?;
    Ok(CenterCellReport {
        cell_index: cell.index,
        containing_cells: hits.len(),
        weights_strictly_positive,
        pass: weights_strictly_positive && lemma.pass,
        lemma,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomLemmaReport {
    pub seed: u64,
    pub count: usize,
    pub drawn: u64,
    pub min_max_component: usize,
    pub case_counts: BTreeMap<String, usize>,
    pub failures: Vec<LemmaReport>,
    pub pass: bool,
}

pub fn random_component_check(count: usize, seed: u64) -> Result<RandomLemmaReport> {
    let (sets, drawn) = random_plane_feasible_sets(count, seed);
    let reports = sets
        .par_iter()
        .map(check_component_bound)
        .collect::<Result<Vec<_>>>()?;
    let mut case_counts = BTreeMap::new();
    for r in &reports {
        let name = serde_json::to_value(r.case)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        *case_counts.entry(name).or_insert(0) += 1;
    }
    let min_max_component = reports.iter().map(|r| r.max_component).min().unwrap_or(0);
    let failures: Vec<LemmaReport> = reports
        .iter()
        .filter(|r| !r.pass || r.case == ProfileCase::Unhandled)
        .cloned()
        .collect();
    Ok(RandomLemmaReport {
        seed,
        count,
        drawn,
        min_max_component,
        case_counts,
        pass: failures.is_empty(),
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRun {
    pub center_cell: CenterCellReport,
    pub random: RandomLemmaReport,
    pub pass: bool,
}

pub fn run_lemma_checks(count: usize, seed: u64) -> Result<LemmaRun> {
    let center_cell = center_cell_check()?;
    let random = random_component_check(count, seed)?;
    Ok(LemmaRun {
        pass: center_cell.pass && random.pass,
        center_cell,
        random,
    })
}
