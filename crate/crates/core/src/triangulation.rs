//! Staircase triangulation of the polytope of divisions at mesh `1/N`.
//!
//! Cake `i` with `k` pieces is parametrized by its tail sums
//! `c_j = y_j + … + y_{k-1}` for `j = 1..k-1`, where `y` is the integer piece
//! vector (row sums `N`). In these coordinates the polytope is the product of
//! the order simplices `N ≥ c_1 ≥ … ≥ c_{k-1} ≥ 0`, and the Freudenthal
//! triangulation of the unit cube grid restricts to a unimodular
//! triangulation of it. A cell is a base point plus an order in which the
//! `d` coordinates are incremented; incrementing `c_j` moves one unit from
//! piece `j-1` to piece `j` of the same cake.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CakeConfig, Division};

/// Default cap on the predicted number of cells.
pub const DEFAULT_CELL_CAP: u128 = 100_000_000;

const NO_MOVE: u32 = u32::MAX;

/// Integer compositions of `N` into `k` parts for one cake.
#[derive(Clone, Debug)]
struct CakeLattice {
    pieces: usize,
    comps: Vec<Vec<u32>>,
    ranks: HashMap<Vec<u32>, u32>,
    /// `moves[r * (k-1) + (j-1)]`: rank after moving a unit from piece `j-1` to `j`.
    moves: Vec<u32>,
    potentials: Vec<u64>,
}

impl CakeLattice {
    fn new(pieces: usize, mesh: u32) -> Self {
        let mut comps = Vec::new();
        let mut cur = vec![0u32; pieces];
        compositions(mesh, 0, &mut cur, &mut comps);
        let ranks: HashMap<Vec<u32>, u32> = comps
            .iter()
            .enumerate()
            .map(|(r, c)| (c.clone(), r as u32))
            .collect();
        let mut moves = vec![NO_MOVE; comps.len() * (pieces - 1)];
        for (r, c) in comps.iter().enumerate() {
            for j in 1..pieces {
                if c[j - 1] > 0 {
                    let mut next = c.clone();
                    next[j - 1] -= 1;
                    next[j] += 1;
                    moves[r * (pieces - 1) + j - 1] = ranks[&next];
                }
            }
        }
        let potentials = comps
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(j, &y)| j as u64 * y as u64)
                    .sum()
            })
            .collect();
        Self {
            pieces,
            comps,
            ranks,
            moves,
            potentials,
        }
    }

    fn step(&self, rank: u32, j: usize) -> u32 {
        self.moves[rank as usize * (self.pieces - 1) + j - 1]
    }
}

fn compositions(remaining: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == cur.len() - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for y in 0..=remaining {
        cur[pos] = y;
        compositions(remaining - y, pos + 1, cur, out);
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn factorial(n: u128) -> u128 {
    (1..=n).product()
}

/// `∏ C(N + k_i - 1, k_i - 1)`.
pub fn predicted_vertex_count(config: &CakeConfig, mesh: u32) -> u128 {
    config
        .pieces_per_cake()
        .iter()
        .map(|&k| binomial(mesh as u128 + k as u128 - 1, k as u128 - 1))
        .product()
}

/// `N^d · d! / ∏ (k_i - 1)!`.
pub fn predicted_cell_count(config: &CakeConfig, mesh: u32) -> u128 {
    let d = config.dimension() as u128;
    let denom: u128 = config
        .pieces_per_cake()
        .iter()
        .map(|&k| factorial(k as u128 - 1))
        .product();
    (mesh as u128).pow(d as u32) * factorial(d) / denom
}

/// All lattice divisions with entries in `(1/N)·ℤ`, indexed densely in
/// mixed radix over cakes (cake 0 most significant).
#[derive(Clone, Debug)]
pub struct LatticePoints {
    mesh: u32,
    cakes: Vec<CakeLattice>,
    strides: Vec<usize>,
    len: usize,
}

impl LatticePoints {
    pub fn new(config: &CakeConfig, mesh: u32) -> Result<Self> {
        Self::with_cap(config, mesh, DEFAULT_CELL_CAP)
    }

    pub fn with_cap(config: &CakeConfig, mesh: u32, cap: u128) -> Result<Self> {
        if mesh == 0 {
            return Err(Error::Precondition(
                "grid resolution must be at least 1".into(),
            ));
        }
        let predicted = predicted_vertex_count(config, mesh);
        if predicted > cap {
            return Err(Error::ResourceCap { predicted, cap });
        }
        let cakes: Vec<CakeLattice> = config
            .pieces_per_cake()
            .iter()
            .map(|&k| CakeLattice::new(k, mesh))
            .collect();
        let mut strides = vec![1usize; cakes.len()];
        for i in (0..cakes.len() - 1).rev() {
            strides[i] = strides[i + 1] * cakes[i + 1].comps.len();
        }
        let len = strides[0] * cakes[0].comps.len();
        Ok(Self {
            mesh,
            cakes,
            strides,
            len,
        })
    }

    pub fn mesh(&self) -> u32 {
        self.mesh
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn rank(&self, id: usize, cake: usize) -> usize {
        (id / self.strides[cake]) % self.cakes[cake].comps.len()
    }

    pub fn coords(&self, id: usize) -> Vec<Vec<u32>> {
        (0..self.cakes.len())
            .map(|i| self.cakes[i].comps[self.rank(id, i)].clone())
            .collect()
    }

    pub fn division(&self, id: usize) -> Division {
        Division::from_lattice(&self.coords(id), self.mesh)
    }

    pub fn id(&self, coords: &[Vec<u32>]) -> Option<usize> {
        if coords.len() != self.cakes.len() {
            return None;
        }
        let mut id = 0;
        for (i, row) in coords.iter().enumerate() {
            id += *self.cakes[i].ranks.get(row)? as usize * self.strides[i];
        }
        Some(id)
    }
}

/// A vertex of the triangulation: integer piece vector per cake, row sums `N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeVertex {
    pub id: usize,
    pub coords: Vec<Vec<u32>>,
}

/// A `d`-simplex given as a monotone chain of `d + 1` vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplexCell {
    /// Global position in enumeration order.
    pub index: u64,
    pub vertex_ids: Vec<usize>,
    /// Global move indices in the order they are applied along the chain.
    pub moves: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Base {
    /// Tail-sum coordinates, concatenated over cakes.
    c: Vec<u32>,
    vertex: usize,
    /// Move that must precede each move, if any.
    pred: Vec<Option<usize>>,
    first_cell: u64,
}

/// Staircase triangulation of the polytope of divisions at mesh `1/N`.
#[derive(Clone, Debug)]
pub struct Triangulation {
    config: CakeConfig,
    mesh: u32,
    cakes: Vec<CakeLattice>,
    strides: Vec<usize>,
    /// Cake and piece index `j ≥ 1` of every global move.
    move_targets: Vec<(usize, usize)>,
    vertex_count: usize,
    cell_count: u64,
    bases: Vec<Base>,
}

impl Triangulation {
    pub fn build(config: &CakeConfig, mesh: u32) -> Result<Self> {
        Self::build_with_cap(config, mesh, DEFAULT_CELL_CAP)
    }

    pub fn build_with_cap(config: &CakeConfig, mesh: u32, cap: u128) -> Result<Self> {
        if mesh == 0 {
            return Err(Error::Precondition("mesh N must be at least 1".into()));
        }
        let predicted = predicted_cell_count(config, mesh);
        if predicted > cap {
            return Err(Error::ResourceCap { predicted, cap });
        }
        let cakes: Vec<CakeLattice> = config
            .pieces_per_cake()
            .iter()
            .map(|&k| CakeLattice::new(k, mesh))
            .collect();
        let mut strides = vec![1usize; cakes.len()];
        for i in (0..cakes.len() - 1).rev() {
            strides[i] = strides[i + 1] * cakes[i + 1].comps.len();
        }
        let vertex_count = strides[0] * cakes[0].comps.len();
        let move_targets: Vec<(usize, usize)> = config
            .pieces_per_cake()
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| (1..k).map(move |j| (i, j)))
            .collect();

        let mut tri = Self {
            config: config.clone(),
            mesh,
            cakes,
            strides,
            move_targets,
            vertex_count,
            cell_count: 0,
            bases: Vec::new(),
        };
        tri.bases = tri.enumerate_bases();
        let total = tri
            .bases
            .last()
            .map_or(0, |b| b.first_cell + linear_extension_count(&b.pred) as u64);
        tri.cell_count = total;
        Ok(tri)
    }

    fn enumerate_bases(&self) -> Vec<Base> {
        // per cake: non-increasing tail sums in [0, N-1]
        let per_cake: Vec<Vec<Vec<u32>>> = self
            .config
            .pieces_per_cake()
            .iter()
            .map(|&k| {
                let mut out = Vec::new();
                let mut cur = Vec::with_capacity(k - 1);
                non_increasing(self.mesh - 1, k - 1, &mut cur, &mut out);
                out
            })
            .collect();
        let mut bases = Vec::new();
        let mut idx = vec![0usize; per_cake.len()];
        let mut next_cell = 0u64;
        loop {
            let c: Vec<u32> = idx
                .iter()
                .zip(&per_cake)
                .flat_map(|(&t, opts)| opts[t].iter().copied())
                .collect();
            let mut pred = vec![None; c.len()];
            for g in 1..c.len() {
                let (i, j) = self.move_targets[g];
                if j >= 2 && self.move_targets[g - 1].0 == i && c[g - 1] == c[g] {
                    pred[g] = Some(g - 1);
                }
            }
            let vertex = self.vertex_from_tail_sums(&c);
            let count = linear_extension_count(&pred) as u64;
            bases.push(Base {
                c,
                vertex,
                pred,
                first_cell: next_cell,
            });
            next_cell += count;

            // odometer, last cake fastest
            let mut i = per_cake.len();
            loop {
                if i == 0 {
                    return bases;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < per_cake[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }

    fn vertex_from_tail_sums(&self, c: &[u32]) -> usize {
        let mut id = 0;
        let mut off = 0;
        for (i, lat) in self.cakes.iter().enumerate() {
            let k = lat.pieces;
            let tails = &c[off..off + k - 1];
            let mut y = vec![0u32; k];
            y[0] = self.mesh - tails[0];
            for j in 1..k - 1 {
                y[j] = tails[j - 1] - tails[j];
            }
            y[k - 1] = tails[k - 2];
            id += lat.ranks[&y] as usize * self.strides[i];
            off += k - 1;
        }
        id
    }

    pub fn config(&self) -> &CakeConfig {
        &self.config
    }

    pub fn mesh(&self) -> u32 {
        self.mesh
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn cell_count(&self) -> u64 {
        self.cell_count
    }

    /// Number of base points; cells are grouped by base for partitioned scans.
    pub fn base_count(&self) -> usize {
        self.bases.len()
    }

    fn cake_rank(&self, id: usize, cake: usize) -> usize {
        (id / self.strides[cake]) % self.cakes[cake].comps.len()
    }

    pub fn vertex(&self, id: usize) -> LatticeVertex {
        LatticeVertex {
            id,
            coords: self.vertex_coords(id),
        }
    }

    pub fn vertex_coords(&self, id: usize) -> Vec<Vec<u32>> {
        (0..self.cakes.len())
            .map(|i| self.cakes[i].comps[self.cake_rank(id, i)].clone())
            .collect()
    }

    pub fn vertex_division(&self, id: usize) -> Division {
        Division::from_lattice(&self.vertex_coords(id), self.mesh)
    }

    /// Id of the vertex with the given integer coordinates.
    pub fn vertex_id(&self, coords: &[Vec<u32>]) -> Option<usize> {
        if coords.len() != self.cakes.len() {
            return None;
        }
        let mut id = 0;
        for (i, row) in coords.iter().enumerate() {
            id += *self.cakes[i].ranks.get(row)? as usize * self.strides[i];
        }
        Some(id)
    }

    /// `Σ_{i,j} j · y[i][j]`; every elementary move raises it by one.
    pub fn potential(&self, id: usize) -> u64 {
        (0..self.cakes.len())
            .map(|i| self.cakes[i].potentials[self.cake_rank(id, i)])
            .sum()
    }

    /// Whether the vertex is one of the `n` pure divisions.
    pub fn is_pure(&self, id: usize) -> bool {
        (0..self.cakes.len())
            .all(|i| self.cakes[i].comps[self.cake_rank(id, i)].contains(&self.mesh))
    }

    fn for_each_cell_in_base_inner(&self, base: usize, f: &mut dyn FnMut(u64, &[usize], &[usize])) {
        let b = &self.bases[base];
        let d = b.c.len();
        let mut ranks: Vec<u32> = (0..self.cakes.len())
            .map(|i| self.cake_rank(b.vertex, i) as u32)
            .collect();
        let mut ids = Vec::with_capacity(d + 1);
        ids.push(b.vertex);
        let mut order = Vec::with_capacity(d);
        let mut used = vec![false; d];
        let mut counter = b.first_cell;
        self.extend(
            b,
            &mut used,
            &mut ranks,
            &mut ids,
            &mut order,
            &mut counter,
            f,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        &self,
        b: &Base,
        used: &mut [bool],
        ranks: &mut [u32],
        ids: &mut Vec<usize>,
        order: &mut Vec<usize>,
        counter: &mut u64,
        f: &mut dyn FnMut(u64, &[usize], &[usize]),
    ) {
        let d = used.len();
        if order.len() == d {
            f(*counter, ids, order);
            *counter += 1;
            return;
        }
        for g in 0..d {
            if used[g] || b.pred[g].is_some_and(|p| !used[p]) {
                continue;
            }
            let (i, j) = self.move_targets[g];
            let old = ranks[i];
            let new = self.cakes[i].step(old, j);
            debug_assert_ne!(new, NO_MOVE);
            let cur = *ids.last().unwrap();
            let next = cur + new as usize * self.strides[i] - old as usize * self.strides[i];
            used[g] = true;
            ranks[i] = new;
            ids.push(next);
            order.push(g);
            self.extend(b, used, ranks, ids, order, counter, f);
            order.pop();
            ids.pop();
            ranks[i] = old;
            used[g] = false;
        }
    }

    /// Visits every cell of one base group as `(cell index, vertex ids, moves)`.
    pub fn for_each_cell_in_base(&self, base: usize, mut f: impl FnMut(u64, &[usize], &[usize])) {
        self.for_each_cell_in_base_inner(base, &mut f);
    }

    /// Visits every cell in enumeration order.
    pub fn for_each_cell(&self, mut f: impl FnMut(u64, &[usize], &[usize])) {
        for base in 0..self.bases.len() {
            self.for_each_cell_in_base_inner(base, &mut f);
        }
    }

    /// Lazy cell stream, materialized one base group at a time.
    pub fn cells(&self) -> impl Iterator<Item = SimplexCell> + '_ {
        (0..self.bases.len()).flat_map(move |base| {
            let mut group = Vec::new();
            self.for_each_cell_in_base(base, |index, ids, moves| {
                group.push(SimplexCell {
                    index,
                    vertex_ids: ids.to_vec(),
                    moves: moves.to_vec(),
                })
            });
            group
        })
    }

    /// Parallel fold over disjoint base groups; results are combined in base order.
    pub fn par_fold_cells<T, F, R>(
        &self,
        identity: impl Fn() -> T + Sync + Send,
        fold: F,
        reduce: R,
    ) -> T
    where
        T: Send,
        F: Fn(&mut T, u64, &[usize], &[usize]) + Sync + Send,
        R: Fn(T, T) -> T + Sync + Send,
    {
        (0..self.bases.len())
            .into_par_iter()
            .map(|base| {
                let mut acc = identity();
                self.for_each_cell_in_base(base, |idx, ids, moves| fold(&mut acc, idx, ids, moves));
                acc
            })
            .reduce(&identity, &reduce)
    }

    /// Cell with the given global index, if it exists.
    pub fn cell(&self, index: u64) -> Option<SimplexCell> {
        let base = self
            .bases
            .partition_point(|b| b.first_cell <= index)
            .checked_sub(1)?;
        let mut found = None;
        self.for_each_cell_in_base(base, |idx, ids, moves| {
            if idx == index {
                found = Some(SimplexCell {
                    index,
                    vertex_ids: ids.to_vec(),
                    moves: moves.to_vec(),
                });
            }
        });
        found
    }

    /// Tail-sum coordinates of a division scaled by `N`.
    fn scaled_tail_sums(&self, division: &Division) -> Vec<f64> {
        let n = self.mesh as f64;
        let mut out = Vec::with_capacity(self.dimension());
        for row in division.rows() {
            let mut tail = 0.0;
            let mut sums: Vec<f64> = row
                .iter()
                .rev()
                .map(|x| {
                    tail += x;
                    tail
                })
                .collect();
            sums.reverse();
            out.extend(sums[1..].iter().map(|t| t * n));
        }
        out
    }

    /// Barycentric coordinates of `division` with respect to the cell's chain
    /// (possibly negative when the point lies outside the cell).
    pub fn barycentric(&self, cell: &SimplexCell, division: &Division) -> Vec<f64> {
        let x = self.scaled_tail_sums(division);
        let base = self.bases_c_of(cell);
        let z: Vec<f64> = cell.moves.iter().map(|&g| x[g] - base[g] as f64).collect();
        let d = z.len();
        let mut w = Vec::with_capacity(d + 1);
        w.push(1.0 - z[0]);
        for t in 1..d {
            w.push(z[t - 1] - z[t]);
        }
        w.push(z[d - 1]);
        w
    }

    fn bases_c_of(&self, cell: &SimplexCell) -> Vec<u32> {
        let base = self
            .bases
            .partition_point(|b| b.first_cell <= cell.index)
            .saturating_sub(1);
        self.bases[base].c.clone()
    }

    /// Cells whose closure contains `division`, with barycentric coordinates.
    pub fn containing_cells(&self, division: &Division, tol: f64) -> Vec<(SimplexCell, Vec<f64>)> {
        let x = self.scaled_tail_sums(division);
        let mut out = Vec::new();
        for (bi, b) in self.bases.iter().enumerate() {
            let inside =
                b.c.iter()
                    .zip(&x)
                    .all(|(&c, &v)| v >= c as f64 - tol && v <= c as f64 + 1.0 + tol);
            if !inside {
                continue;
            }
            self.for_each_cell_in_base(bi, |index, ids, moves| {
                let cell = SimplexCell {
                    index,
                    vertex_ids: ids.to_vec(),
                    moves: moves.to_vec(),
                };
                let w = self.barycentric(&cell, division);
                if w.iter().all(|&v| v >= -tol) {
                    out.push((cell, w));
                }
            });
        }
        out
    }

    /// Debug dump: one line per cell listing the vertex lattice matrices.
    pub fn write_dump(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "# config {} mesh {}", self.config, self.mesh)?;
        for cell in self.cells() {
            let parts: Vec<String> = cell
                .vertex_ids
                .iter()
                .map(|&v| format!("{:?}", self.vertex_coords(v)))
                .collect();
            writeln!(w, "{}", parts.join(" "))?;
        }
        Ok(())
    }
}

fn non_increasing(max: u32, len: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if cur.len() == len {
        out.push(cur.clone());
        return;
    }
    let upper = cur.last().copied().unwrap_or(max);
    for v in (0..=upper).rev() {
        cur.push(v);
        non_increasing(max, len, cur, out);
        cur.pop();
    }
}

/// Number of move orders compatible with the chain constraints `pred`.
fn linear_extension_count(pred: &[Option<usize>]) -> u128 {
    // chains are runs g, g+1, … linked by pred
    let mut denom = 1u128;
    let mut run = 1u128;
    for g in 1..=pred.len() {
        if g < pred.len() && pred[g] == Some(g - 1) {
            run += 1;
        } else {
            denom *= factorial(run);
            run = 1;
        }
    }
    factorial(pred.len() as u128) / denom
}

/// Uniform assignment of vertices to `p` players.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnerLabeling {
    players: usize,
    owners: Vec<u8>,
}

impl OwnerLabeling {
    pub fn players(&self) -> usize {
        self.players
    }

    pub fn owner(&self, vertex: usize) -> usize {
        self.owners[vertex] as usize
    }

    /// Per-player counts within a cell.
    pub fn counts(&self, cell: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.players];
        for &v in cell {
            counts[self.owner(v)] += 1;
        }
        counts
    }

    pub fn is_uniform_on(&self, cell: &[usize]) -> bool {
        let counts = self.counts(cell);
        let lo = counts.iter().min().unwrap();
        let hi = counts.iter().max().unwrap();
        hi - lo <= 1
    }
}

/// Owner of a vertex is its potential modulo `p`. Consecutive chain vertices
/// differ by one in potential, so every cell cycles through the players.
pub fn assign_owners(tri: &Triangulation, players: usize) -> Result<OwnerLabeling> {
    if !(2..=255).contains(&players) {
        return Err(Error::Precondition(format!(
            "player count must be in 2..=255, got {players}"
        )));
    }
    let owners = (0..tri.vertex_count())
        .map(|v| (tri.potential(v) % players as u64) as u8)
        .collect();
    Ok(OwnerLabeling { players, owners })
}

/// Zero entries `(cake, piece)` of a vertex; the vertex lies on the facet
/// "piece j of cake i is empty" exactly for these pairs.
pub fn facet_of(vertex: &LatticeVertex) -> BTreeSet<(usize, usize)> {
    vertex
        .coords
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &y)| y == 0)
                .map(move |(j, _)| (i, j))
        })
        .collect()
}

/// Full barycentric subdivision of a triangulation. Vertices are faces of
/// the original cells, tagged by dimension.
#[derive(Clone, Debug)]
pub struct BarycentricSubdivision {
    mesh: u32,
    config: CakeConfig,
    /// Sorted original vertex ids of each face.
    faces: Vec<Vec<usize>>,
    /// Each cell lists face ids by increasing dimension `0..=d`.
    cells: Vec<Vec<usize>>,
    face_coords: Vec<Division>,
}

impl BarycentricSubdivision {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.faces.len()
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// Dimension of the face whose barycenter is this vertex.
    pub fn dimension_of(&self, vertex: usize) -> usize {
        self.faces[vertex].len() - 1
    }

    pub fn face(&self, vertex: usize) -> &[usize] {
        &self.faces[vertex]
    }

    /// Barycenter of the face, as a division.
    pub fn division(&self, vertex: usize) -> &Division {
        &self.face_coords[vertex]
    }

    /// Owner by barycenter dimension, rotating through `p` players.
    pub fn owner(&self, vertex: usize, players: usize) -> usize {
        self.dimension_of(vertex) % players
    }

    pub fn config(&self) -> &CakeConfig {
        &self.config
    }

    pub fn mesh(&self) -> u32 {
        self.mesh
    }
}

pub fn barycentric_subdivide(tri: &Triangulation, cap: u128) -> Result<BarycentricSubdivision> {
    let d = tri.dimension();
    let predicted = tri.cell_count() as u128 * factorial(d as u128 + 1);
    if predicted > cap {
        return Err(Error::ResourceCap { predicted, cap });
    }
    let mut face_ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut faces: Vec<Vec<usize>> = Vec::new();
    let mut cells = Vec::with_capacity(predicted as usize);
    for cell in tri.cells() {
        for perm in permutations(d + 1) {
            let mut chain = Vec::with_capacity(d + 1);
            let mut face: Vec<usize> = Vec::with_capacity(d + 1);
            for &p in &perm {
                face.push(cell.vertex_ids[p]);
                let mut key = face.clone();
                key.sort_unstable();
                let id = *face_ids.entry(key.clone()).or_insert_with(|| {
                    faces.push(key);
                    faces.len() - 1
                });
                chain.push(id);
            }
            cells.push(chain);
        }
    }
    let face_coords = faces
        .iter()
        .map(|f| {
            let divs: Vec<Division> = f.iter().map(|&v| tri.vertex_division(v)).collect();
            let w = 1.0 / f.len() as f64;
            Division::combine(&divs.iter().map(|d| (w, d)).collect::<Vec<_>>())
        })
        .collect();
    Ok(BarycentricSubdivision {
        mesh: tri.mesh(),
        config: tri.config().clone(),
        faces,
        cells,
        face_coords,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
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
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
