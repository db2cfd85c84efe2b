//! Brute-force ground truth: envy reports, Pareto checks and exhaustive
//! grid sweeps.
//!
//! A sweep certificate covers the lattice `(1/G)·ℤ` only. It corroborates a
//! statement about the continuum at that resolution; it does not prove it.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CakeConfig, Division, PieceSelection};
use crate::preferences::{admissible_mask, argmax_masked, argmax_set, PreferenceModel, TIE_TOL};
use crate::triangulation::{predicted_vertex_count, LatticePoints};
use crate::{Error, Result};

/// Default cap on the number of divisions a sweep may enumerate.
pub const DEFAULT_SWEEP_CAP: u128 = 100_000_000;

/// Stored hits are truncated past this many; the count stays exact.
pub const MAX_STORED_HITS: usize = 100_000;

/// Extremal examples are tracked only when every player has this few selections.
const EXTREMAL_MAX_SELECTIONS: usize = 64;

const SWEEP_CHUNK: usize = 4096;

/// Player names used in allocations and reports: `A`, `B`, `C`, ...
pub fn player_name(index: usize) -> String {
    let mut name = String::new();
    let mut i = index;
    loop {
        name.insert(0, (b'A' + (i % 26) as u8) as char);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    name
}

pub fn player_index(name: &str) -> Option<usize> {
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    let mut i = 0usize;
    for b in name.bytes() {
        i = i.checked_mul(26)?.checked_add((b - b'A') as usize + 1)?;
    }
    Some(i - 1)
}

/// Utilities with hungry-inadmissible selections forced to `-inf`.
fn masked_utilities(
    model: &dyn PreferenceModel,
    config: &CakeConfig,
    division: &Division,
) -> Result<Vec<f64>> {
    masked_with(model, config, division, &admissible_mask(config, division))
}

fn masked_with(
    model: &dyn PreferenceModel,
    config: &CakeConfig,
    division: &Division,
    mask: &[bool],
) -> Result<Vec<f64>> {
    let mut u = model
        .utilities(config, division)
        .ok_or_else(|| Error::UtilityUnavailable(model.name()))?;
    for (u, &ok) in u.iter_mut().zip(mask) {
        if !ok {
            *u = f64::NEG_INFINITY;
        }
    }
    Ok(u)
}

fn check_division(config: &CakeConfig, division: &Division) -> Result<()> {
    if !division.matches(config) {
        return Err(Error::ShapeMismatch(format!(
            "division has pieces {:?}, configuration is {config}",
            division.pieces_per_cake()
        )));
    }
    Ok(())
}

/// Every most-preferred hungry-admissible selection, ties included.
pub fn preferred_set(
    model: &dyn PreferenceModel,
    config: &CakeConfig,
    division: &Division,
) -> Result<Vec<PieceSelection>> {
    check_division(config, division)?;
    let u = model
        .utilities(config, division)
        .ok_or_else(|| Error::UtilityUnavailable(model.name()))?;
    Ok(argmax_set(config, division, &u)
        .into_iter()
        .map(|i| config.selection_at(i))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerEnvy {
    pub player: String,
    pub allocated: PieceSelection,
    /// `None` when the allocated selection contains an empty or refused piece.
    pub utility: Option<f64>,
    pub best: PieceSelection,
    pub best_utility: f64,
    pub gap: f64,
    pub normalized_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvyReport {
    pub players: Vec<PlayerEnvy>,
    pub disjoint: bool,
    pub pareto: bool,
    pub delta: f64,
}

impl EnvyReport {
    pub fn max_gap(&self) -> f64 {
        self.players.iter().map(|p| p.gap).fold(0.0, f64::max)
    }
}

/// Compares each player's allocated selection against all selections of the
/// division. Gaps are normalized by the player's utility range over the
/// admissible selections; an allocation with an empty or refused piece
/// scores a normalized gap of 1.
pub fn envy_report(
    config: &CakeConfig,
    division: &Division,
    allocation: &BTreeMap<String, PieceSelection>,
    models: &BTreeMap<String, Arc<dyn PreferenceModel>>,
) -> Result<EnvyReport> {
    check_division(config, division)?;
    let mut players = Vec::new();
    let mut utilities = Vec::new();
    let mut allocated = Vec::new();
    for (player, selection) in allocation {
        config.check_selection(selection)?;
        let model = models
            .get(player)
            .ok_or_else(|| Error::Precondition(format!("no model for player {player}")))?;
        let u = masked_utilities(model.as_ref(), config, division)?;
        let (best_idx, best) =
            u.iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, x)| if x > acc.1 { (i, x) } else { acc },
                );
        if best == f64::NEG_INFINITY {
            return Err(Error::Precondition(format!(
                "player {player} has no admissible selection"
            )));
        }
        let worst = u
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(f64::INFINITY, f64::min);
        let range = best - worst;
        let idx = config.selection_index(selection);
        let own = u[idx];
        let (gap, normalized_gap) = if own.is_finite() {
            let gap = (best - own).max(0.0);
            let ng = if range > 0.0 { gap / range } else { 0.0 };
            (gap, ng)
        } else {
            (range, 1.0)
        };
        players.push(PlayerEnvy {
            player: player.clone(),
            allocated: selection.clone(),
            utility: own.is_finite().then_some(own),
            best: config.selection_at(best_idx),
            best_utility: best,
            gap,
            normalized_gap,
        });
        allocated.push(idx);
        utilities.push(u);
    }
    let disjoint = allocated.iter().enumerate().all(|(a, &s)| {
        allocated[a + 1..]
            .iter()
            .all(|&t| disjoint_indices(config, s, t))
    });
    let pareto = pareto_optimal(config, &utilities, &allocated);
    let delta = players.iter().map(|p| p.normalized_gap).fold(0.0, f64::max);
    Ok(EnvyReport {
        players,
        disjoint,
        pareto,
        delta,
    })
}

fn disjoint_indices(config: &CakeConfig, s: usize, t: usize) -> bool {
    (0..config.cakes()).all(|i| config.pick_of(s, i) != config.pick_of(t, i))
}

/// True iff no assignment of pairwise-disjoint admissible selections makes
/// some player strictly better off without making another worse off.
fn pareto_optimal(config: &CakeConfig, utilities: &[Vec<f64>], allocated: &[usize]) -> bool {
    let current: Vec<f64> = allocated
        .iter()
        .zip(utilities)
        .map(|(&s, u)| u[s])
        .collect();
    let tol: Vec<f64> = current
        .iter()
        .map(|u| {
            if u.is_finite() {
                TIE_TOL * u.abs().max(1.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut chosen = Vec::with_capacity(allocated.len());
    !dominated(config, utilities, &current, &tol, &mut chosen, false)
}

fn dominated(
    config: &CakeConfig,
    utilities: &[Vec<f64>],
    current: &[f64],
    tol: &[f64],
    chosen: &mut Vec<usize>,
    improved: bool,
) -> bool {
    let p = chosen.len();
    if p == utilities.len() {
        return improved;
    }
    for s in 0..config.selection_count() {
        let u = utilities[p][s];
        if !u.is_finite() || u < current[p] - tol[p] {
            continue;
        }
        if !chosen.iter().all(|&t| disjoint_indices(config, s, t)) {
            continue;
        }
        chosen.push(s);
        let better = improved || u > current[p] + tol[p];
        let found = dominated(config, utilities, current, tol, chosen, better);
        chosen.pop();
        if found {
            return true;
        }
    }
    false
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepMode {
    CertifyNone,
    Collect,
}

/// A lattice division where the two players' preferred sets contain a
/// disjoint pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepHit {
    pub index: u64,
    pub division: Division,
    pub selections: [PieceSelection; 2],
    pub utilities: [f64; 2],
}

/// The division where disjoint selections come closest to being mutually
/// most preferred: `margin` is the smallest achievable max of the two
/// normalized gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosestApproach {
    pub index: u64,
    pub division: Division,
    pub selections: [PieceSelection; 2],
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCertificate {
    pub config: CakeConfig,
    pub models: Vec<String>,
    pub grid: u32,
    pub mode: SweepMode,
    pub divisions_examined: u64,
    pub solutions_found: u64,
    /// Set in `CERTIFY_NONE` mode: true iff no solution was found.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certified: Option<bool>,
    /// First solution by lattice index.
    pub witness: Option<SweepHit>,
    pub hits: Vec<SweepHit>,
    pub hits_truncated: bool,
    pub closest_approach: Option<ClosestApproach>,
    /// Wall-clock time; kept out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub runtime_ms: u128,
}

#[derive(Default)]
struct Partial {
    examined: u64,
    solutions: u64,
    hits: Vec<SweepHit>,
    best: Option<(f64, u64, usize, usize)>,
}

/// Number of lattice divisions a sweep at resolution `grid` enumerates.
pub fn sweep_division_count(config: &CakeConfig, grid: u32) -> u128 {
    predicted_vertex_count(config, grid)
}

pub fn grid_sweep(
    config: &CakeConfig,
    models: [&Arc<dyn PreferenceModel>; 2],
    grid: u32,
    mode: SweepMode,
    cap: u128,
) -> Result<SweepCertificate> {
    let start = Instant::now();
    for m in models {
        m.supports(config)?;
    }
    let lattice = LatticePoints::with_cap(config, grid, cap)?;
    let n = config.selection_count();
    let disjoint: Vec<bool> = (0..n * n)
        .map(|st| disjoint_indices(config, st / n, st % n))
        .collect();
    let track_extremal = n <= EXTREMAL_MAX_SELECTIONS;
    let keep_hits = mode == SweepMode::Collect;
    let chunks = lattice.len().div_ceil(SWEEP_CHUNK);

    let partials: Vec<Result<Partial>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut part = Partial::default();
            let end = ((c + 1) * SWEEP_CHUNK).min(lattice.len());
            for id in c * SWEEP_CHUNK..end {
                let division = lattice.division(id);
                let mask = admissible_mask(config, &division);
                let ua = masked_with(models[0].as_ref(), config, &division, &mask)?;
                let ub = masked_with(models[1].as_ref(), config, &division, &mask)?;
                part.examined += 1;
                let sa = argmax_masked(&ua, &mask);
                let sb = argmax_masked(&ub, &mask);
                let hit = sa
                    .iter()
                    .flat_map(|&s| sb.iter().map(move |&t| (s, t)))
                    .find(|&(s, t)| disjoint[s * n + t]);
                if let Some((s, t)) = hit {
                    part.solutions += 1;
                    if keep_hits || part.solutions == 1 {
                        part.hits.push(SweepHit {
                            index: id as u64,
                            division: division.clone(),
                            selections: [config.selection_at(s), config.selection_at(t)],
                            utilities: [ua[s], ub[t]],
                        });
                    }
                }
                if track_extremal {
                    if let Some((margin, s, t)) = closest_pair(n, &disjoint, &ua, &ub) {
                        let better = match part.best {
                            None => true,
                            Some((m, ..)) => margin < m,
                        };
                        if better {
                            part.best = Some((margin, id as u64, s, t));
                        }
                    }
                }
            }
            Ok(part)
        })
        .collect();

    let mut examined = 0;
    let mut solutions = 0;
    let mut hits = Vec::new();
    let mut witness = None;
    let mut truncated = false;
    let mut best: Option<(f64, u64, usize, usize)> = None;
    for part in partials {
        let part = part?;
        examined += part.examined;
        solutions += part.solutions;
        if witness.is_none() {
            witness = part.hits.first().cloned();
        }
        if keep_hits {
            for h in part.hits {
                if hits.len() < MAX_STORED_HITS {
                    hits.push(h);
                } else {
                    truncated = true;
                }
            }
        }
        if let Some(b) = part.best {
            // chunks arrive in index order, so strict improvement keeps the lowest index
            if best.is_none_or(|cur| b.0 < cur.0) {
                best = Some(b);
            }
        }
    }
    let closest_approach = best.map(|(margin, id, s, t)| ClosestApproach {
        index: id,
        division: lattice.division(id as usize),
        selections: [config.selection_at(s), config.selection_at(t)],
        margin,
    });
    Ok(SweepCertificate {
        config: config.clone(),
        models: models.iter().map(|m| m.name()).collect(),
        grid,
        mode,
        divisions_examined: examined,
        solutions_found: solutions,
        certified: (mode == SweepMode::CertifyNone).then_some(solutions == 0),
        witness,
        hits,
        hits_truncated: truncated,
        closest_approach,
        runtime_ms: start.elapsed().as_millis(),
    })
}

fn normalized_gaps(u: &[f64]) -> Vec<f64> {
    let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = u
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min);
    let range = best - worst;
    u.iter()
        .map(|&x| {
            if !x.is_finite() {
                f64::INFINITY
            } else if range > 0.0 {
                (best - x) / range
            } else {
                0.0
            }
        })
        .collect()
}

fn closest_pair(
    n: usize,
    disjoint: &[bool],
    ua: &[f64],
    ub: &[f64],
) -> Option<(f64, usize, usize)> {
    let ga = normalized_gaps(ua);
    let gb = normalized_gaps(ub);
    let mut best: Option<(f64, usize, usize)> = None;
    for s in 0..n {
        if !ga[s].is_finite() {
            continue;
        }
        for t in 0..n {
            if !gb[t].is_finite() || !disjoint[s * n + t] {
                continue;
            }
            let m = ga[s].max(gb[t]);
            if best.is_none_or(|b| m < b.0) {
                best = Some((m, s, t));
            }
        }
    }
    best
}

/// One CSV row per stored hit: division entries, both selections, both utilities.
pub fn write_hits_csv(certificate: &SweepCertificate, w: impl Write) -> Result<()> {
    let io = |e: csv::Error| Error::Precondition(format!("csv output failed: {e}"));
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["index".to_string()];
    for (i, &k) in certificate.config.pieces_per_cake().iter().enumerate() {
        for j in 0..k {
            header.push(format!("cake{i}_{}", (b'a' + j as u8) as char));
        }
    }
    header.extend(["selection_A", "selection_B", "utility_A", "utility_B"].map(String::from));
    out.write_record(&header).map_err(io)?;
    for h in &certificate.hits {
        let mut row = vec![h.index.to_string()];
        row.extend(h.division.rows().iter().flatten().map(|x| x.to_string()));
        row.push(h.selections[0].to_string());
        row.push(h.selections[1].to_string());
        row.push(h.utilities[0].to_string());
        row.push(h.utilities[1].to_string());
        out.write_record(&row).map_err(io)?;
    }
    out.flush()
        .map_err(|e| Error::Precondition(format!("csv output failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::{
        linked_bonus_model, log_utility_model, BonusMode, EpsilonCategoryModel, Role,
    };

    fn cfg(p: &[usize]) -> CakeConfig {
        CakeConfig::new(p.to_vec()).unwrap()
    }

    fn sel(c: &CakeConfig, s: &str) -> PieceSelection {
        PieceSelection::from_letters(c, s).unwrap()
    }

    fn models2(
        a: Arc<dyn PreferenceModel>,
        b: Arc<dyn PreferenceModel>,
    ) -> BTreeMap<String, Arc<dyn PreferenceModel>> {
        BTreeMap::from([("A".to_string(), a), ("B".to_string(), b)])
    }

    #[test]
    fn player_names_round_trip() {
        for i in [0, 1, 25, 26, 27, 700] {
            assert_eq!(player_index(&player_name(i)), Some(i));
        }
        assert_eq!(player_name(2), "C");
        assert_eq!(player_index("a"), None);
    }

    #[test]
    fn preferred_set_keeps_ties() {
        let c = cfg(&[2, 2]);
        let m = linked_bonus_model(0.5, BonusMode::Same).unwrap();
        let set = preferred_set(&m, &c, &Division::center(&c)).unwrap();
        assert_eq!(set, vec![sel(&c, "aa"), sel(&c, "bb")]);
    }

    #[test]
    fn preferred_set_avoids_empty_pieces() {
        let c = cfg(&[2, 3]);
        let m = log_utility_model(&c, 3, 0.0).unwrap();
        let d = Division::new(&c, vec![vec![0.0, 1.0], vec![0.5, 0.0, 0.5]]).unwrap();
        for s in preferred_set(&m, &c, &d).unwrap() {
            assert_eq!(s.pick(0), 1);
            assert_ne!(s.pick(1), 1);
        }
    }

    #[test]
    fn argmax_allocation_has_zero_gaps() {
        let c = cfg(&[2, 3]);
        let a: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&c, 1, 0.0).unwrap());
        let b: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&c, 2, 0.0).unwrap());
        let d = Division::new(&c, vec![vec![0.3, 0.7], vec![0.2, 0.3, 0.5]]).unwrap();
        let alloc = BTreeMap::from([
            ("A".to_string(), a.prefer(&c, &d).unwrap()),
            ("B".to_string(), b.prefer(&c, &d).unwrap()),
        ]);
        let r = envy_report(&c, &d, &alloc, &models2(a, b)).unwrap();
        assert_eq!(r.delta, 0.0);
        assert!(r.players.iter().all(|p| p.gap == 0.0));
    }

    #[test]
    fn holding_anothers_argmax_leaves_positive_gap() {
        let c = cfg(&[2, 2]);
        let a: Arc<dyn PreferenceModel> =
            Arc::new(linked_bonus_model(0.5, BonusMode::Same).unwrap());
        let b: Arc<dyn PreferenceModel> =
            Arc::new(linked_bonus_model(0.5, BonusMode::Same).unwrap());
        let d = Division::new(&c, vec![vec![0.8, 0.2], vec![0.7, 0.3]]).unwrap();
        let alloc = BTreeMap::from([
            ("A".to_string(), sel(&c, "aa")),
            ("B".to_string(), sel(&c, "bb")),
        ]);
        let r = envy_report(&c, &d, &alloc, &models2(a, b)).unwrap();
        assert_eq!(r.players[0].normalized_gap, 0.0);
        assert!(r.players[1].gap > 0.0);
        assert_eq!(r.players[1].best, sel(&c, "aa"));
        assert!((r.delta - r.players[1].normalized_gap).abs() < 1e-15);
    }

    #[test]
    fn pareto_holds_when_no_disjoint_assignment_dominates() {
        let c = cfg(&[2, 2]);
        let a: Arc<dyn PreferenceModel> =
            Arc::new(linked_bonus_model(0.5, BonusMode::Same).unwrap());
        let b: Arc<dyn PreferenceModel> =
            Arc::new(linked_bonus_model(0.5, BonusMode::Different).unwrap());
        let d = Division::new(&c, vec![vec![0.6, 0.4], vec![0.6, 0.4]]).unwrap();
        // A: aa 1.7, bb 1.3, ab/ba 1.0. B: aa 1.2, bb 0.8, ab/ba 1.5.
        // Every other disjoint assignment lowers A below 1.7.
        let alloc = BTreeMap::from([
            ("A".to_string(), sel(&c, "aa")),
            ("B".to_string(), sel(&c, "bb")),
        ]);
        let r = envy_report(&c, &d, &alloc, &models2(a, b)).unwrap();
        assert!(r.disjoint);
        assert_eq!(r.players[0].gap, 0.0);
        assert!(r.players[1].gap > 0.0);
        assert!(r.pareto);
    }

    #[test]
    fn inadmissible_allocation_counts_as_full_envy() {
        let c = cfg(&[3, 3, 3]);
        let a: Arc<dyn PreferenceModel> =
            Arc::new(EpsilonCategoryModel::three_cakes(0.1, Role::A).unwrap());
        let b: Arc<dyn PreferenceModel> =
            Arc::new(EpsilonCategoryModel::three_cakes(0.1, Role::B).unwrap());
        let d = Division::new(
            &c,
            vec![
                vec![0.05, 0.5, 0.45],
                vec![0.4, 0.3, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
        )
        .unwrap();
        let alloc = BTreeMap::from([
            ("A".to_string(), sel(&c, "aaa")),
            ("B".to_string(), sel(&c, "bbb")),
        ]);
        let r = envy_report(&c, &d, &alloc, &models2(a, b)).unwrap();
        assert_eq!(r.players[0].utility, None);
        assert_eq!(r.players[0].normalized_gap, 1.0);
        assert_eq!(r.delta, 1.0);
    }

    #[test]
    fn square_sweep_counts_and_certifies() {
        let c = cfg(&[2, 2]);
        let a: Arc<dyn PreferenceModel> =
            Arc::new(linked_bonus_model(0.5, BonusMode::Same).unwrap());
        let b: Arc<dyn PreferenceModel> =
            Arc::new(linked_bonus_model(0.5, BonusMode::Different).unwrap());
        let cert = grid_sweep(&c, [&a, &b], 20, SweepMode::CertifyNone, DEFAULT_SWEEP_CAP).unwrap();
        assert_eq!(cert.divisions_examined, 21 * 21);
        assert_eq!(cert.solutions_found, 0);
        assert_eq!(cert.certified, Some(true));
        assert!(cert.witness.is_none());
        let closest = cert.closest_approach.unwrap();
        assert!(closest.margin > 0.0);
    }

    #[test]
    fn collect_sweep_reports_hits_and_csv() {
        let c = cfg(&[2, 3]);
        let a: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&c, 1, 0.0).unwrap());
        let b: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&c, 2, 0.0).unwrap());
        let cert = grid_sweep(&c, [&a, &b], 6, SweepMode::Collect, DEFAULT_SWEEP_CAP).unwrap();
        assert_eq!(cert.divisions_examined, 7 * 28);
        assert_eq!(cert.hits.len() as u64, cert.solutions_found);
        assert_eq!(cert.certified, None);
        let mut buf = Vec::new();
        write_hits_csv(&cert, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), cert.hits.len() + 1);
        assert!(text.starts_with("index,cake0_a,cake0_b,cake1_a,cake1_b,cake1_c,selection_A"));
    }

    #[test]
    fn sweep_cap_is_enforced() {
        let c = cfg(&[2, 3]);
        let a: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&c, 1, 0.0).unwrap());
        let err = grid_sweep(&c, [&a, &a], 10, SweepMode::Collect, 100).unwrap_err();
        assert_eq!(
            err,
            Error::ResourceCap {
                predicted: 11 * 66,
                cap: 100
            }
        );
    }
}
