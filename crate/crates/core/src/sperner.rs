//! Preference labeling of triangulations, full-cell search and the
//! refinement loop that produces envy-free piece selections.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::{CakeConfig, Division, PieceSelection};
use crate::grid_lemma::{check_component_bound, solve_center_weights, WeightedLabelSet};
use crate::preferences::{DivisionKey, PreferenceModel};
use crate::triangulation::{
    assign_owners, OwnerLabeling, SimplexCell, Triangulation, DEFAULT_CELL_CAP,
};
use crate::verifier::{envy_report, player_name, EnvyReport};
use crate::{Error, Result};

pub const FLAG_NO_GUARANTEE: &str = "no existence guarantee";
pub const FLAG_NOT_CONVERGED: &str = "not converged";
pub const FLAG_CONFIRMED_CHOICES: &str =
    "players without utilities are checked by confirming their choice at the final division; delta covers the others";

const LOCK_STRIPES: usize = 64;

/// A triangulation whose vertices are labeled on demand by their owners'
/// preference models. Each vertex is queried at most once.
pub struct LabeledTriangulation {
    tri: Triangulation,
    owners: OwnerLabeling,
    models: Vec<Arc<dyn PreferenceModel>>,
    labels: Vec<OnceLock<u32>>,
    stripes: Vec<Mutex<()>>,
    queries: AtomicUsize,
}

impl std::fmt::Debug for LabeledTriangulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabeledTriangulation")
            .field("config", self.tri.config())
            .field("mesh", &self.tri.mesh())
            .field("players", &self.models.len())
            .field("labeled", &self.labeled_count())
            .finish()
    }
}

impl LabeledTriangulation {
    pub fn new(tri: Triangulation, models: Vec<Arc<dyn PreferenceModel>>) -> Result<Self> {
        let owners = assign_owners(&tri, models.len())?;
        Self::with_owners(tri, owners, models)
    }

    pub fn with_owners(
        tri: Triangulation,
        owners: OwnerLabeling,
        models: Vec<Arc<dyn PreferenceModel>>,
    ) -> Result<Self> {
        if owners.players() != models.len() {
            return Err(Error::Precondition(format!(
                "{} owners but {} models",
                owners.players(),
                models.len()
            )));
        }
        for m in &models {
            m.supports(tri.config())?;
        }
        let labels = (0..tri.vertex_count()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            tri,
            owners,
            models,
            labels,
            stripes: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
            queries: AtomicUsize::new(0),
        })
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn config(&self) -> &CakeConfig {
        self.tri.config()
    }

    pub fn owners(&self) -> &OwnerLabeling {
        &self.owners
    }

    pub fn models(&self) -> &[Arc<dyn PreferenceModel>] {
        &self.models
    }

    /// Number of model calls made so far.
    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.get().is_some()).count()
    }

    /// Label if already known, without querying.
    pub fn peek(&self, v: usize) -> Option<PieceSelection> {
        self.labels[v]
            .get()
            .map(|&i| self.config().selection_at(i as usize))
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.labels.len() {
            return Err(Error::Precondition(format!(
                "vertex {v} out of range ({} vertices)",
                self.labels.len()
            )));
        }
        Ok(())
    }

    /// Selection index of the label of `v`, querying its owner's model on first use.
    pub fn label_index(&self, v: usize) -> Result<usize> {
        self.check_vertex(v)?;
        if let Some(&i) = self.labels[v].get() {
            return Ok(i as usize);
        }
        let _guard = self.stripes[v % LOCK_STRIPES]
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        if let Some(&i) = self.labels[v].get() {
            return Ok(i as usize);
        }
        let config = self.tri.config();
        let coords = self.tri.vertex_coords(v);
        let key = DivisionKey::new(&coords, self.tri.mesh());
        let division = Division::from_lattice(&coords, self.tri.mesh());
        let model = &self.models[self.owners.owner(v)];
        self.queries.fetch_add(1, Ordering::Relaxed);
        let selection = match model.prefer_at(config, &key, &division) {
            Err(Error::QueryRequired(_)) => {
                return Err(Error::AnswerNeeded {
                    player: player_name(self.owners.owner(v)),
                    mesh: self.tri.mesh(),
                    coords,
                    confirmation: false,
                })
            }
            other => other?,
        };
        config.check_selection(&selection)?;
        if (0..config.cakes()).any(|i| coords[i][selection.pick(i)] == 0) {
            return Err(Error::HungryViolation {
                model: model.name(),
                vertex: v,
                selection: selection.to_string(),
            });
        }
        let idx = config.selection_index(&selection);
        let _ = self.labels[v].set(idx as u32);
        Ok(idx)
    }

    pub fn label(&self, v: usize) -> Result<PieceSelection> {
        Ok(self.config().selection_at(self.label_index(v)?))
    }

    /// Stores a label without consulting any model and without checking it.
    pub fn assign_label(&self, v: usize, selection: &PieceSelection) -> Result<()> {
        self.check_vertex(v)?;
        self.config().check_selection(selection)?;
        let idx = self.config().selection_index(selection) as u32;
        self.labels[v]
            .set(idx)
            .map_err(|_| Error::Precondition(format!("vertex {v} is already labeled")))
    }

    /// Every labeled vertex whose label picks an empty piece.
    pub fn check_sperner(&self) -> SpernerCheck {
        let config = self.tri.config();
        let violations: Vec<SpernerViolation> = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(v, l)| l.get().map(|&i| (v, i as usize)))
            .filter_map(|(v, i)| {
                let coords = self.tri.vertex_coords(v);
                let bad = (0..config.cakes()).any(|c| coords[c][config.pick_of(i, c)] == 0);
                bad.then(|| SpernerViolation {
                    vertex: v,
                    coords,
                    label: config.selection_at(i),
                })
            })
            .collect();
        SpernerCheck {
            ok: violations.is_empty(),
            violations,
        }
    }

    /// Parallel fold over the cells whose labels are pairwise distinct.
    /// The fold receives `(cell index, vertex ids, label indices)`.
    pub fn fold_full_cells<T, F, R>(
        &self,
        identity: impl Fn() -> T + Sync + Send,
        fold: F,
        reduce: R,
    ) -> Result<T>
    where
        T: Send,
        F: Fn(&mut T, u64, &[usize], &[usize]) + Sync + Send,
        R: Fn(T, T) -> T + Sync + Send,
    {
        let n = self.config().selection_count();
        let first_error: Mutex<Option<(u64, Error)>> = Mutex::new(None);
        let out = self.tri.par_fold_cells(
            &identity,
            |acc, index, ids, _moves| {
                let mut labels = Vec::with_capacity(ids.len());
                let mut seen = vec![false; n];
                for &v in ids {
                    match self.label_index(v) {
                        Ok(l) if !seen[l] => {
                            seen[l] = true;
                            labels.push(l);
                        }
                        Ok(_) => return,
                        Err(e) => {
                            // keep the lowest cell index so the reported error is deterministic
                            let mut slot = first_error.lock().unwrap_or_else(|p| p.into_inner());
                            if slot.as_ref().is_none_or(|(i, _)| index < *i) {
                                *slot = Some((index, e));
                            }
                            return;
                        }
                    }
                }
                fold(acc, index, ids, &labels);
            },
            &reduce,
        );
        match first_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
            Some((_, e)) => Err(e),
            None => Ok(out),
        }
    }

    pub fn count_full_cells(&self) -> Result<u64> {
        self.fold_full_cells(|| 0u64, |acc, _, _, _| *acc += 1, |a, b| a + b)
    }

    /// All full cells in index order.
    pub fn full_cells(&self) -> Result<Vec<FullCell>> {
        let mut cells = self.fold_full_cells(
            Vec::new,
            |acc: &mut Vec<(u64, Vec<usize>)>, index, ids, _| acc.push((index, ids.to_vec())),
            |mut a, mut b| {
                a.append(&mut b);
                a
            },
        )?;
        cells.sort_by_key(|c| c.0);
        cells
            .into_iter()
            .map(|(index, _)| {
                let cell = self.tri.cell(index).expect("index from enumeration");
                self.full_cell(cell)
            })
            .collect()
    }

    fn full_cell(&self, cell: SimplexCell) -> Result<FullCell> {
        let labels = cell
            .vertex_ids
            .iter()
            .map(|&v| self.label(v))
            .collect::<Result<Vec<_>>>()?;
        let owners = cell
            .vertex_ids
            .iter()
            .map(|&v| self.owners.owner(v))
            .collect();
        Ok(FullCell {
            cell,
            labels,
            owners,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpernerViolation {
    pub vertex: usize,
    pub coords: Vec<Vec<u32>>,
    pub label: PieceSelection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpernerCheck {
    pub ok: bool,
    pub violations: Vec<SpernerViolation>,
}

/// A cell whose `d + 1` labels are pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FullCell {
    pub cell: SimplexCell,
    pub labels: Vec<PieceSelection>,
    pub owners: Vec<usize>,
}

/// An edge of a full cell joining two players' vertices with disjoint labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerEdge {
    pub vertices: [usize; 2],
    pub players: [usize; 2],
    pub selections: [PieceSelection; 2],
}

/// Edge between differently owned vertices with disjoint labels, choosing
/// the lexicographically smallest `(lower id, higher id)` pair.
pub fn disjoint_owner_edge(fc: &FullCell) -> Option<OwnerEdge> {
    let mut order: Vec<usize> = (0..fc.cell.vertex_ids.len()).collect();
    order.sort_by_key(|&t| fc.cell.vertex_ids[t]);
    for (x, &s) in order.iter().enumerate() {
        for &t in &order[x + 1..] {
            if fc.owners[s] != fc.owners[t]
                && fc.labels[s].is_disjoint(&fc.labels[t]).unwrap_or(false)
            {
                return Some(OwnerEdge {
                    vertices: [fc.cell.vertex_ids[s], fc.cell.vertex_ids[t]],
                    players: [fc.owners[s], fc.owners[t]],
                    selections: [fc.labels[s].clone(), fc.labels[t].clone()],
                });
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub division: Division,
    pub allocation: BTreeMap<String, PieceSelection>,
    pub delta: f64,
    pub mesh_used: u32,
    pub cells_found: u64,
    pub disjoint: bool,
    pub converged: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub schedule: Vec<u32>,
    pub tol: f64,
    pub cell_cap: u128,
}

impl SolveOptions {
    pub fn new(schedule: Vec<u32>, tol: f64) -> Self {
        Self {
            schedule,
            tol,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Precondition("schedule is empty".into()));
        }
        if self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition(format!(
                "schedule must be strictly increasing positive meshes, got {:?}",
                self.schedule
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Precondition(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Whether two players are guaranteed disjoint envy-free selections.
pub fn has_existence_guarantee(config: &CakeConfig) -> bool {
    let k = config.pieces_per_cake();
    match k.len() {
        1 => true,
        2 => k.iter().any(|&x| x >= 3),
        3 => k == [4, 4, 4],
        _ => false,
    }
}

/// Candidate allocation: a pair of vertices with their owners and labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    u: usize,
    v: usize,
}

struct MeshScan {
    full_cells: u64,
    first_full: Option<u64>,
    edges: BTreeSet<Candidate>,
    center_covering: u64,
    bound_failures: u64,
}

fn scan_mesh(lt: &LabeledTriangulation, grid_check: bool) -> Result<MeshScan> {
    let config = lt.config().clone();
    let n = config.selection_count();
    let disjoint: Vec<bool> = (0..n * n)
        .map(|st| {
            (0..config.cakes()).all(|i| config.pick_of(st / n, i) != config.pick_of(st % n, i))
        })
        .collect();
    let owners = lt.owners();
    type Acc = (u64, Option<u64>, BTreeSet<Candidate>, u64, u64);
    let (full_cells, first_full, edges, center_covering, bound_failures) = lt.fold_full_cells(
        || (0u64, None, BTreeSet::new(), 0u64, 0u64),
        |acc: &mut Acc, index, ids, labels| {
            acc.0 += 1;
            acc.1 = Some(acc.1.map_or(index, |f: u64| f.min(index)));
            for x in 0..ids.len() {
                for y in x + 1..ids.len() {
                    let (ox, oy) = (owners.owner(ids[x]), owners.owner(ids[y]));
                    if ox == oy || !disjoint[labels[x] * n + labels[y]] {
                        continue;
                    }
                    let (u, v) = if ids[x] < ids[y] {
                        (ids[x], ids[y])
                    } else {
                        (ids[y], ids[x])
                    };
                    acc.2.insert(Candidate { u, v });
                }
            }
            if grid_check {
                let sels: Vec<PieceSelection> =
                    labels.iter().map(|&l| config.selection_at(l)).collect();
                if let Ok(Some(w)) = solve_center_weights(&sels) {
                    acc.3 += 1;
                    let ok = WeightedLabelSet::new(sels, w)
                        .and_then(|set| check_component_bound(&set))
                        .is_ok_and(|r| r.pass);
                    if !ok {
                        acc.4 += 1;
                    }
                }
            }
        },
        |mut a, mut b| {
            a.0 += b.0;
            a.1 = match (a.1, b.1) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            a.2.append(&mut b.2);
            a.3 += b.3;
            a.4 += b.4;
            a
        },
    )?;
    Ok(MeshScan {
        full_cells,
        first_full,
        edges,
        center_covering,
        bound_failures,
    })
}

struct Evaluated {
    candidate: Candidate,
    report: EnvyReport,
    disjoint: bool,
    division: Division,
    allocation: BTreeMap<String, PieceSelection>,
    mesh: u32,
    cells: u64,
}

/// Envy of the players whose models expose utilities. Players answering
/// only with choices are left out here and confirmed separately.
fn evaluate(
    lt: &LabeledTriangulation,
    c: Candidate,
    models: &BTreeMap<String, Arc<dyn PreferenceModel>>,
    cells: u64,
) -> Result<Evaluated> {
    let tri = lt.triangulation();
    let du = tri.vertex_division(c.u);
    let dv = tri.vertex_division(c.v);
    let division = Division::combine(&[(0.5, &du), (0.5, &dv)]);
    let allocation = BTreeMap::from([
        (player_name(lt.owners().owner(c.u)), lt.label(c.u)?),
        (player_name(lt.owners().owner(c.v)), lt.label(c.v)?),
    ]);
    let config = lt.config();
    let with_utilities: BTreeMap<String, Arc<dyn PreferenceModel>> = allocation
        .keys()
        .filter(|p| models[*p].utilities(config, &division).is_some())
        .map(|p| (p.clone(), models[p].clone()))
        .collect();
    let measured = allocation
        .iter()
        .filter(|(p, _)| with_utilities.contains_key(*p))
        .map(|(p, s)| (p.clone(), s.clone()))
        .collect();
    let report = envy_report(config, &division, &measured, &with_utilities)?;
    let picks: Vec<&PieceSelection> = allocation.values().collect();
    let disjoint = picks[0].is_disjoint(picks[1])?;
    Ok(Evaluated {
        candidate: c,
        report,
        disjoint,
        division,
        allocation,
        mesh: tri.mesh(),
        cells,
    })
}

/// Midpoint of a candidate edge as an exact lattice key at twice the mesh.
fn midpoint_key(tri: &Triangulation, c: Candidate) -> (DivisionKey, Vec<Vec<u32>>) {
    let cu = tri.vertex_coords(c.u);
    let cv = tri.vertex_coords(c.v);
    let coords: Vec<Vec<u32>> = cu
        .iter()
        .zip(&cv)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    (DivisionKey::new(&coords, 2 * tri.mesh()), coords)
}

/// Asks each utility-less allocated player for their choice at the
/// candidate division; true iff every one picks their allocated selection.
fn confirm(
    lt: &LabeledTriangulation,
    e: &Evaluated,
    models: &BTreeMap<String, Arc<dyn PreferenceModel>>,
) -> Result<bool> {
    let config = lt.config();
    let (key, coords) = midpoint_key(lt.triangulation(), e.candidate);
    for (player, selection) in &e.allocation {
        if e.report.players.iter().any(|p| &p.player == player) {
            continue;
        }
        let choice = match models[player].prefer_at(config, &key, &e.division) {
            Err(Error::QueryRequired(_)) => {
                return Err(Error::AnswerNeeded {
                    player: player.clone(),
                    mesh: 2 * lt.triangulation().mesh(),
                    coords,
                    confirmation: true,
                })
            }
            other => other?,
        };
        if &choice != selection {
            return Ok(false);
        }
    }
    Ok(true)
}

fn finish(e: Evaluated, converged: bool, flags: Vec<String>) -> SolveReport {
    SolveReport {
        division: e.division,
        allocation: e.allocation,
        delta: e.report.delta,
        mesh_used: e.mesh,
        cells_found: e.cells,
        disjoint: e.disjoint,
        converged,
        flags,
    }
}

/// Refinement loop shared by the two- and three-player searches.
fn refine(
    config: &CakeConfig,
    models: &[Arc<dyn PreferenceModel>],
    options: &SolveOptions,
    mut flags: Vec<String>,
) -> Result<SolveReport> {
    options.validate()?;
    let named: BTreeMap<String, Arc<dyn PreferenceModel>> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (player_name(i), m.clone()))
        .collect();
    let probe = Division::center(config);
    if named
        .values()
        .any(|m| m.utilities(config, &probe).is_none())
    {
        flags.push(FLAG_CONFIRMED_CHOICES.into());
    }
    let grid_check = config.pieces_per_cake() == [4, 4, 4];
    let mut best: Option<Evaluated> = None;
    let mut last: Option<(LabeledTriangulation, MeshScan)> = None;
    for &mesh in &options.schedule {
        let tri = Triangulation::build_with_cap(config, mesh, options.cell_cap)?;
        let lt = LabeledTriangulation::new(tri, models.to_vec())?;
        let scan = scan_mesh(&lt, grid_check)?;
        if grid_check {
            flags.retain(|f| !f.starts_with("center-covering"));
            flags.push(format!(
                "center-covering full cells at mesh {mesh}: {} ({} failing the component bound)",
                scan.center_covering, scan.bound_failures
            ));
        }
        let mut evaluated = scan
            .edges
            .iter()
            .map(|&c| evaluate(&lt, c, &named, scan.full_cells))
            .collect::<Result<Vec<_>>>()?;
        // smallest certified gap first; edge order breaks ties
        evaluated.sort_by(|x, y| {
            x.report
                .delta
                .total_cmp(&y.report.delta)
                .then(x.candidate.cmp(&y.candidate))
        });
        for e in evaluated {
            if e.report.delta > options.tol {
                if best
                    .as_ref()
                    .is_none_or(|b| e.report.delta < b.report.delta)
                {
                    best = Some(e);
                }
                break;
            }
            if confirm(&lt, &e, &named)? {
                return Ok(finish(e, true, flags));
            }
            if best
                .as_ref()
                .is_none_or(|b| e.report.delta < b.report.delta)
            {
                best = Some(e);
            }
        }
        last = Some((lt, scan));
    }
    flags.push(FLAG_NOT_CONVERGED.into());
    if let Some(b) = best {
        return Ok(finish(b, false, flags));
    }
    // no disjoint candidate anywhere: report a full cell of the finest mesh
    let (lt, scan) = last.expect("schedule is non-empty");
    let index = scan
        .first_full
        .ok_or_else(|| Error::Precondition("no full cell found".into()))?;
    let cell = lt.triangulation().cell(index).expect("index from scan");
    let mut allocation = BTreeMap::new();
    for &v in &cell.vertex_ids {
        allocation
            .entry(player_name(lt.owners().owner(v)))
            .or_insert(lt.label(v)?);
    }
    let divisions: Vec<Division> = cell
        .vertex_ids
        .iter()
        .map(|&v| lt.triangulation().vertex_division(v))
        .collect();
    let w = 1.0 / divisions.len() as f64;
    let parts: Vec<(f64, &Division)> = divisions.iter().map(|d| (w, d)).collect();
    let division = Division::combine(&parts);
    let measured: BTreeMap<String, PieceSelection> = allocation
        .iter()
        .filter(|(p, _)| named[*p].utilities(config, &division).is_some())
        .map(|(p, s)| (p.clone(), s.clone()))
        .collect();
    let used: BTreeMap<String, Arc<dyn PreferenceModel>> = measured
        .keys()
        .map(|p| (p.clone(), named[p].clone()))
        .collect();
    let report = envy_report(config, &division, &measured, &used)?;
    let picks: Vec<&PieceSelection> = allocation.values().collect();
    let disjoint = picks.iter().enumerate().all(|(a, s)| {
        picks[a + 1..]
            .iter()
            .all(|t| s.is_disjoint(t).unwrap_or(false))
    });
    Ok(SolveReport {
        division,
        allocation,
        delta: report.delta,
        mesh_used: lt.triangulation().mesh(),
        cells_found: scan.full_cells,
        disjoint,
        converged: false,
        flags,
    })
}

/// Two-player search: at each mesh, every edge of every full cell joining
/// the players' vertices with disjoint labels yields a candidate at the
/// edge midpoint; the candidate with the smallest certified envy gap wins.
pub fn solve_envy_free(
    config: &CakeConfig,
    models: &[Arc<dyn PreferenceModel>],
    options: &SolveOptions,
) -> Result<SolveReport> {
    if models.len() != 2 {
        return Err(Error::Precondition(format!(
            "expected 2 models, got {}",
            models.len()
        )));
    }
    let mut flags = Vec::new();
    if !has_existence_guarantee(config) {
        flags.push(FLAG_NO_GUARANTEE.into());
    }
    refine(config, models, options, flags)
}

/// Three players on two cakes of two pieces: any full triangle carries three
/// of the four selections, and some two of them are disjoint.
pub fn three_player_square(
    models: &[Arc<dyn PreferenceModel>],
    options: &SolveOptions,
) -> Result<SolveReport> {
    if models.len() != 3 {
        return Err(Error::Precondition(format!(
            "expected 3 models, got {}",
            models.len()
        )));
    }
    let config = CakeConfig::new(vec![2, 2])?;
    refine(&config, models, options, Vec::new())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentSelections {
    pub division: Division,
    pub selections: BTreeMap<String, PieceSelection>,
    pub cell_index: u64,
}

/// `k_i ≥ 1 + (p−1)/m` for every cake.
pub fn different_selections_bound(config: &CakeConfig, players: usize) -> bool {
    let m = config.cakes();
    players >= 1
        && config
            .pieces_per_cake()
            .iter()
            .all(|&k| m * (k - 1) + 1 >= players)
}

/// Finds a full cell and gives each player the label of one vertex they own.
pub fn solve_different_selections(
    config: &CakeConfig,
    models: &[Arc<dyn PreferenceModel>],
    mesh: u32,
) -> Result<DifferentSelections> {
    let p = models.len();
    if !different_selections_bound(config, p) {
        return Err(Error::Precondition(format!(
            "{p} players need at least 1 + ({p}-1)/{} pieces per cake, configuration is {config}",
            config.cakes()
        )));
    }
    let tri = Triangulation::build(config, mesh)?;
    let lt = LabeledTriangulation::new(tri, models.to_vec())?;
    let tri = lt.triangulation();
    for cell in tri.cells() {
        let labels = cell
            .vertex_ids
            .iter()
            .map(|&v| lt.label_index(v))
            .collect::<Result<Vec<_>>>()?;
        let distinct: BTreeSet<usize> = labels.iter().copied().collect();
        if distinct.len() != labels.len() {
            continue;
        }
        let mut selections = BTreeMap::new();
        for (t, &v) in cell.vertex_ids.iter().enumerate() {
            selections
                .entry(player_name(lt.owners().owner(v)))
                .or_insert_with(|| config.selection_at(labels[t]));
        }
        if selections.len() != p {
            return Err(Error::Precondition(format!(
                "cell {} misses a player",
                cell.index
            )));
        }
        let divisions: Vec<Division> = cell
            .vertex_ids
            .iter()
            .map(|&v| tri.vertex_division(v))
            .collect();
        let w = 1.0 / divisions.len() as f64;
        let parts: Vec<(f64, &Division)> = divisions.iter().map(|d| (w, d)).collect();
        return Ok(DifferentSelections {
            division: Division::combine(&parts),
            selections,
            cell_index: cell.index,
        });
    }
    Err(Error::Precondition("no full cell found".into()))
}

/// Image structure of a full cell of the triangular prism (two cakes, two and
/// three pieces).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrismAnalysis {
    pub affinely_independent: bool,
    /// A label disjoint from two others, with those two.
    pub pivot: Option<(PieceSelection, [PieceSelection; 2])>,
    /// Every balanced two-owner assignment of the four vertices has an edge
    /// between the owners with disjoint labels.
    pub forces_disjoint_owner_edge: bool,
}

fn selection_point(config: &CakeConfig, s: &PieceSelection) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, &k) in config.pieces_per_cake().iter().enumerate() {
        out.extend((0..k).map(|j| if s.pick(i) == j { 1.0 } else { 0.0 }));
    }
    out
}

/// Affine rank of the pure divisions of the given selections.
pub fn affine_rank(config: &CakeConfig, labels: &[PieceSelection]) -> usize {
    if labels.len() <= 1 {
        return 0;
    }
    let p0 = selection_point(config, &labels[0]);
    let dim = p0.len();
    let rows: Vec<f64> = labels[1..]
        .iter()
        .flat_map(|s| {
            let p = selection_point(config, s);
            p.iter().zip(&p0).map(|(a, b)| a - b).collect::<Vec<_>>()
        })
        .collect();
    DMatrix::from_row_slice(labels.len() - 1, dim, &rows).rank(1e-9)
}

pub fn prism_full_cell_analysis(labels: &[PieceSelection]) -> Result<PrismAnalysis> {
    let config = CakeConfig::new(vec![2, 3])?;
    if labels.len() != 4 {
        return Err(Error::Precondition(format!(
            "a prism cell has 4 labels, got {}",
            labels.len()
        )));
    }
    for (t, s) in labels.iter().enumerate() {
        config.check_selection(s)?;
        if labels[..t].contains(s) {
            return Err(Error::Precondition(format!("duplicate label {s}")));
        }
    }
    let affinely_independent = affine_rank(&config, labels) == 3;
    let disjoint = |a: usize, b: usize| labels[a].is_disjoint(&labels[b]).unwrap_or(false);
    let pivot = (0..4).find_map(|v| {
        let others: Vec<usize> = (0..4).filter(|&w| w != v && disjoint(v, w)).collect();
        (others.len() >= 2).then(|| {
            (
                labels[v].clone(),
                [labels[others[0]].clone(), labels[others[1]].clone()],
            )
        })
    });
    let splits = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    let forces_disjoint_owner_edge = splits.iter().all(|a_side| {
        (0..4)
            .any(|x| (0..4).any(|y| a_side.contains(&x) && !a_side.contains(&y) && disjoint(x, y)))
    });
    Ok(PrismAnalysis {
        affinely_independent,
        pivot,
        forces_disjoint_owner_edge,
    })
}

/// Affinely independent 4-subsets of the prism's six pure divisions for which
/// no label is disjoint from two others. Expected to be empty.
pub fn prism_pivot_counterexamples() -> Vec<[PieceSelection; 4]> {
    let config = CakeConfig::new(vec![2, 3]).expect("valid");
    let all: Vec<PieceSelection> = config.selections().collect();
    let mut out = Vec::new();
    for a in 0..6 {
        for b in a + 1..6 {
            for c in b + 1..6 {
                for d in c + 1..6 {
                    let set = [
                        all[a].clone(),
                        all[b].clone(),
                        all[c].clone(),
                        all[d].clone(),
                    ];
                    let analysis = prism_full_cell_analysis(&set).expect("distinct prism labels");
                    if analysis.affinely_independent && analysis.pivot.is_none() {
                        out.push(set);
                    }
                }
            }
        }
    }
    out
}
