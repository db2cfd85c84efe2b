//! Divisions, piece selections and the polytope of divisions.
//!
//! A division of `m` unit cakes is a row-stochastic matrix whose row `i`
//! lists the piece lengths of cake `i`. The pure divisions (one whole piece
//! per cake) are the vertices of the polytope of divisions and are in
//! bijection with piece selections.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for divisions built by the engine.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Row-sum tolerance for divisions supplied by users.
pub const INPUT_ROW_SUM_TOL: f64 = 1e-9;

/// Number of pieces each cake is cut into.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CakeConfig {
    pieces: Vec<usize>,
    strides: Vec<usize>,
}

impl CakeConfig {
    pub fn new(pieces: Vec<usize>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidConfig("at least one cake is required".into()));
        }
        if let Some(i) = pieces.iter().position(|&k| k < 2) {
            return Err(Error::InvalidConfig(format!(
                "cake {i} has {} pieces, at least 2 are required",
                pieces[i]
            )));
        }
        let mut strides = vec![1usize; pieces.len()];
        for i in (0..pieces.len() - 1).rev() {
            strides[i] = strides[i + 1]
                .checked_mul(pieces[i + 1])
                .ok_or_else(|| Error::InvalidConfig("too many piece selections".into()))?;
        }
        strides[0]
            .checked_mul(pieces[0])
            .ok_or_else(|| Error::InvalidConfig("too many piece selections".into()))?;
        Ok(Self { pieces, strides })
    }

    /// `m` cakes of `k` pieces each.
    pub fn uniform(cakes: usize, pieces: usize) -> Result<Self> {
        Self::new(vec![pieces; cakes])
    }

    pub fn cakes(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self, cake: usize) -> usize {
        self.pieces[cake]
    }

    pub fn pieces_per_cake(&self) -> &[usize] {
        &self.pieces
    }

    /// Number of piece selections, which is the vertex count `n` of the polytope.
    pub fn selection_count(&self) -> usize {
        self.strides[0] * self.pieces[0]
    }

    /// Dimension `d` of the polytope of divisions.
    pub fn dimension(&self) -> usize {
        self.pieces.iter().map(|k| k - 1).sum()
    }

    pub fn descriptor(&self) -> PolytopeDescriptor {
        polytope_descriptor(self)
    }

    /// Index of a selection in lexicographic order of pick vectors.
    pub fn selection_index(&self, selection: &PieceSelection) -> usize {
        selection
            .picks()
            .iter()
            .zip(&self.strides)
            .map(|(p, s)| p * s)
            .sum()
    }

    /// Inverse of [`CakeConfig::selection_index`].
    pub fn selection_at(&self, mut index: usize) -> PieceSelection {
        let picks = self
            .strides
            .iter()
            .map(|s| {
                let p = index / s;
                index %= s;
                p
            })
            .collect();
        PieceSelection(picks)
    }

    /// Pick of cake `cake` in the selection with the given index.
    pub fn pick_of(&self, index: usize, cake: usize) -> usize {
        (index / self.strides[cake]) % self.pieces[cake]
    }

    /// Calls `f(index, picks)` for every selection in lexicographic order.
    pub fn for_each_selection(&self, mut f: impl FnMut(usize, &[usize])) {
        let m = self.pieces.len();
        let mut picks = vec![0; m];
        for s in 0..self.selection_count() {
            f(s, &picks);
            for i in (0..m).rev() {
                picks[i] += 1;
                if picks[i] < self.pieces[i] {
                    break;
                }
                picks[i] = 0;
            }
        }
    }

    /// All selections in lexicographic order.
    pub fn selections(&self) -> impl Iterator<Item = PieceSelection> + '_ {
        (0..self.selection_count()).map(|i| self.selection_at(i))
    }

    pub(crate) fn check_selection(&self, selection: &PieceSelection) -> Result<()> {
        if selection.len() != self.cakes() {
            return Err(Error::InvalidSelection(format!(
                "selection {selection} has {} picks for {} cakes",
                selection.len(),
                self.cakes()
            )));
        }
        for (i, (&p, &k)) in selection.picks().iter().zip(&self.pieces).enumerate() {
            if p >= k {
                return Err(Error::InvalidSelection(format!(
                    "pick {p} in cake {i} is out of range (cake has {k} pieces)"
                )));
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for CakeConfig {
    type Error = Error;

    fn try_from(pieces: Vec<usize>) -> Result<Self> {
        Self::new(pieces)
    }
}

impl From<CakeConfig> for Vec<usize> {
    fn from(config: CakeConfig) -> Self {
        config.pieces
    }
}

impl fmt::Display for CakeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pieces.iter().map(|k| k.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `(n, d)`: vertex count and dimension of the polytope of divisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolytopeDescriptor {
    pub n: usize,
    pub d: usize,
}

pub fn polytope_descriptor(config: &CakeConfig) -> PolytopeDescriptor {
    PolytopeDescriptor {
        n: config.selection_count(),
        d: config.dimension(),
    }
}

/// One piece index per cake. Doubles as a pure division and as a vertex label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PieceSelection(Vec<usize>);

impl PieceSelection {
    pub fn new(config: &CakeConfig, picks: Vec<usize>) -> Result<Self> {
        let s = Self(picks);
        config.check_selection(&s)?;
        Ok(s)
    }

    /// Builds a selection without range checks; callers validate against a config.
    pub fn from_picks(picks: Vec<usize>) -> Self {
        Self(picks)
    }

    /// Parses letter notation such as `"aab"`.
    pub fn from_letters(config: &CakeConfig, letters: &str) -> Result<Self> {
        let picks = letters
            .chars()
            .map(|c| {
                if c.is_ascii_lowercase() {
                    Ok((c as u8 - b'a') as usize)
                } else {
                    Err(Error::InvalidSelection(format!("bad piece letter {c:?}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(config, picks)
    }

    pub fn picks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pick(&self, cake: usize) -> usize {
        self.0[cake]
    }

    /// True iff the two selections differ in every cake.
    pub fn is_disjoint(&self, other: &Self) -> Result<bool> {
        same_length(self, other)?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| a != b))
    }

    /// True iff the selections are distinct but share a piece in some cake.
    pub fn conflicts(&self, other: &Self) -> Result<bool> {
        Ok(self != other && !self.is_disjoint(other)?)
    }

    /// Number of cakes in which the picks differ.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        same_length(self, other)?;
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }

    /// Whether every picked piece has positive length in `division`.
    pub fn is_hungry_admissible(&self, division: &Division) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, &p)| division.rows[i][p] > 0.0)
    }
}

fn same_length(s: &PieceSelection, t: &PieceSelection) -> Result<()> {
    if s.len() != t.len() {
        return Err(Error::ConfigMismatch(format!(
            "selections {s} and {t} have different cake counts"
        )));
    }
    Ok(())
}

pub fn is_disjoint(s: &PieceSelection, t: &PieceSelection) -> Result<bool> {
    s.is_disjoint(t)
}

pub fn conflicts(s: &PieceSelection, t: &PieceSelection) -> Result<bool> {
    s.conflicts(t)
}

impl fmt::Display for PieceSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &p in &self.0 {
            if p < 26 {
                write!(f, "{}", (b'a' + p as u8) as char)?;
            } else {
                write!(f, "[{p}]")?;
            }
        }
        Ok(())
    }
}

/// Piece lengths, one row per cake.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Division {
    rows: Vec<Vec<f64>>,
}

impl Division {
    /// Validates user-supplied rows. No normalization is applied.
    pub fn new(config: &CakeConfig, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::checked(config, rows, INPUT_ROW_SUM_TOL)
    }

    pub(crate) fn checked(config: &CakeConfig, rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if rows.len() != config.cakes() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows for {} cakes",
                rows.len(),
                config.cakes()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != config.pieces(i) {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, cake {i} has {} pieces",
                    row.len(),
                    config.pieces(i)
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::EntryOutOfRange {
                        cake: i,
                        piece: j,
                        value: x,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::RowSum { cake: i, sum });
            }
        }
        Ok(Self { rows })
    }

    /// Lattice point `coords / mesh`; exact rows up to rounding of the quotient.
    pub fn from_lattice(coords: &[Vec<u32>], mesh: u32) -> Self {
        let n = mesh as f64;
        Self {
            rows: coords
                .iter()
                .map(|row| row.iter().map(|&y| y as f64 / n).collect())
                .collect(),
        }
    }

    pub fn center(config: &CakeConfig) -> Self {
        Self {
            rows: config
                .pieces_per_cake()
                .iter()
                .map(|&k| vec![1.0 / k as f64; k])
                .collect(),
        }
    }

    pub fn pure(config: &CakeConfig, selection: &PieceSelection) -> Result<Self> {
        config.check_selection(selection)?;
        Ok(Self {
            rows: config
                .pieces_per_cake()
                .iter()
                .zip(selection.picks())
                .map(|(&k, &p)| {
                    let mut row = vec![0.0; k];
                    row[p] = 1.0;
                    row
                })
                .collect(),
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn entry(&self, cake: usize, piece: usize) -> f64 {
        self.rows[cake][piece]
    }

    pub fn cakes(&self) -> usize {
        self.rows.len()
    }

    pub fn pieces_per_cake(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn matches(&self, config: &CakeConfig) -> bool {
        self.rows.len() == config.cakes()
            && self
                .rows
                .iter()
                .zip(config.pieces_per_cake())
                .all(|(r, &k)| r.len() == k)
    }

    /// Whether `self` and `other` agree entrywise within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
            })
    }

    /// Convex combination `Σ w_t · D_t` of divisions sharing a shape.
    pub fn combine(parts: &[(f64, &Division)]) -> Self {
        let mut rows: Vec<Vec<f64>> = parts[0].1.rows.iter().map(|r| vec![0.0; r.len()]).collect();
        for (w, d) in parts {
            for (acc, row) in rows.iter_mut().zip(&d.rows) {
                for (a, x) in acc.iter_mut().zip(row) {
                    *a += w * x;
                }
            }
        }
        Self { rows }
    }
}

impl<'de> Deserialize<'de> for Division {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let config = CakeConfig::new(rows.iter().map(Vec::len).collect())
            .map_err(serde::de::Error::custom)?;
        Division::new(&config, rows).map_err(serde::de::Error::custom)
    }
}

pub fn make_division(config: &CakeConfig, rows: Vec<Vec<f64>>) -> Result<Division> {
    Division::new(config, rows)
}

pub fn pure_division(config: &CakeConfig, selection: &PieceSelection) -> Result<Division> {
    Division::pure(config, selection)
}

pub fn center(config: &CakeConfig) -> Division {
    Division::center(config)
}

/// Image under the piecewise-linear cover map of the point with barycentric
/// coordinates `weights` in a cell whose vertices carry `labels`: the
/// matching combination of the labels' pure divisions.
pub fn cover_map_image(
    config: &CakeConfig,
    cell_vertices: &[Division],
    labels: &[PieceSelection],
    weights: &[f64],
) -> Result<Division> {
    if cell_vertices.len() != labels.len() || labels.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vertices, {} labels, {} weights",
            cell_vertices.len(),
            labels.len(),
            weights.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidWeights("empty cell".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidWeights(format!("negative weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    let mut rows: Vec<Vec<f64>> = config
        .pieces_per_cake()
        .iter()
        .map(|&k| vec![0.0; k])
        .collect();
    for (label, &w) in labels.iter().zip(weights) {
        config.check_selection(label)?;
        for (row, &p) in rows.iter_mut().zip(label.picks()) {
            row[p] += w;
        }
    }
    Ok(Division { rows })
}
