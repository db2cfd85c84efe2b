//! Preference oracles.
//!
//! Every model answers "which piece selection do you prefer in this
//! division?". Models that are driven by a utility also expose the utility of
//! every selection so that the verifier can measure envy. All models are
//! hungry: a selection with an empty piece is never preferred.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CakeConfig, Division, PieceSelection};

/// Relative tolerance under which two utilities count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Default threshold below which category models refuse a piece.
pub const DEFAULT_EPSILON: f64 = 0.1;

pub trait PreferenceModel: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn supports(&self, config: &CakeConfig) -> Result<()>;

    /// Utilities of every selection in lexicographic order, or `None` for
    /// oracles that only reveal choices.
    fn utilities(&self, config: &CakeConfig, division: &Division) -> Option<Vec<f64>>;

    fn utility(
        &self,
        config: &CakeConfig,
        division: &Division,
        selection: &PieceSelection,
    ) -> Option<f64> {
        self.utilities(config, division)
            .map(|u| u[config.selection_index(selection)])
    }

    fn prefer(&self, config: &CakeConfig, division: &Division) -> Result<PieceSelection> {
        let utilities = self
            .utilities(config, division)
            .ok_or_else(|| Error::UtilityUnavailable(self.name()))?;
        let best = argmax_set(config, division, &utilities);
        best.first()
            .map(|&i| config.selection_at(i))
            .ok_or_else(|| {
                Error::Precondition(format!("{} has no admissible selection", self.name()))
            })
    }

    /// Preference at a lattice point; oracles keyed by exact coordinates override this.
    fn prefer_at(
        &self,
        config: &CakeConfig,
        key: &DivisionKey,
        division: &Division,
    ) -> Result<PieceSelection> {
        let _ = key;
        self.prefer(config, division)
    }
}

/// Hungry admissibility of every selection, in lexicographic order.
pub fn admissible_mask(config: &CakeConfig, division: &Division) -> Vec<bool> {
    let mut mask = Vec::with_capacity(config.selection_count());
    config.for_each_selection(|_, picks| {
        mask.push(
            picks
                .iter()
                .enumerate()
                .all(|(i, &j)| division.entry(i, j) > 0.0),
        );
    });
    mask
}

/// Indices of all admissible selections whose utility ties the maximum,
/// ascending (so the first one is the lexicographic tie-break).
pub fn argmax_set(config: &CakeConfig, division: &Division, utilities: &[f64]) -> Vec<usize> {
    argmax_masked(utilities, &admissible_mask(config, division))
}

/// `argmax_set` with a precomputed admissibility mask.
pub fn argmax_masked(utilities: &[f64], mask: &[bool]) -> Vec<usize> {
    let best = utilities
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&u, _)| u)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Vec::new();
    }
    let floor = best - TIE_TOL * best.abs().max(1.0);
    utilities
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (&u, &ok))| ok && u >= floor)
        .map(|(i, _)| i)
        .collect()
}

/// Exact lattice key `coords / mesh`, reduced to lowest terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DivisionKey {
    pub mesh: u32,
    pub coords: Vec<Vec<u32>>,
}

impl DivisionKey {
    pub fn new(coords: &[Vec<u32>], mesh: u32) -> Self {
        let g = coords.iter().flatten().fold(mesh, |acc, &y| gcd(acc, y));
        let g = g.max(1);
        Self {
            mesh: mesh / g,
            coords: coords
                .iter()
                .map(|row| row.iter().map(|y| y / g).collect())
                .collect(),
        }
    }

    pub fn division(&self) -> Division {
        Division::from_lattice(&self.coords, self.mesh)
    }
}

impl fmt::Display for DivisionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.coords, self.mesh)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    Same,
    Different,
}

/// Two cakes, two pieces: total length plus a bonus when the two picks are
/// the same piece (or different pieces).
#[derive(Clone, Debug)]
pub struct LinkedBonusModel {
    beta: f64,
    mode: BonusMode,
}

pub fn linked_bonus_model(beta: f64, mode: BonusMode) -> Result<LinkedBonusModel> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    Ok(LinkedBonusModel { beta, mode })
}

impl PreferenceModel for LinkedBonusModel {
    fn name(&self) -> String {
        format!("linked_bonus({}, {:?})", self.beta, self.mode)
    }

    fn supports(&self, config: &CakeConfig) -> Result<()> {
        if config.pieces_per_cake() != [2, 2] {
            return Err(Error::UnsupportedConfig {
                model: self.name(),
                reason: format!("requires (2,2), got {config}"),
            });
        }
        Ok(())
    }

    fn utilities(&self, config: &CakeConfig, division: &Division) -> Option<Vec<f64>> {
        Some(
            config
                .selections()
                .map(|s| {
                    let same = s.pick(0) == s.pick(1);
                    let bonus = match self.mode {
                        BonusMode::Same if same => self.beta,
                        BonusMode::Different if !same => self.beta,
                        _ => 0.0,
                    };
                    division.entry(0, s.pick(0)) + division.entry(1, s.pick(1)) + bonus
                })
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

/// Category preferences: selections are ranked first by the multiplicity
/// pattern of their piece letters, then by total size, then
/// lexicographically. Any piece shorter than `epsilon` is refused.
#[derive(Clone, Debug)]
pub struct EpsilonCategoryModel {
    epsilon: f64,
    role: Role,
    cakes: usize,
    /// Patterns in the A-side order of preference, best first.
    patterns: Vec<Vec<usize>>,
    /// Category of every selection by lexicographic index.
    categories: Vec<u8>,
}

impl EpsilonCategoryModel {
    /// Three cakes of three pieces: same-type triple, pair, all different.
    pub fn three_cakes(epsilon: f64, role: Role) -> Result<Self> {
        Self::with_patterns(epsilon, role, 3, vec![vec![3], vec![2, 1], vec![1, 1, 1]])
    }

    /// Four cakes of four pieces: four of a kind, three of a kind, two pair,
    /// one pair, all different.
    pub fn poker(epsilon: f64, role: Role) -> Result<Self> {
        Self::with_patterns(
            epsilon,
            role,
            4,
            vec![
                vec![4],
                vec![3, 1],
                vec![2, 2],
                vec![2, 1, 1],
                vec![1, 1, 1, 1],
            ],
        )
    }

    fn with_patterns(
        epsilon: f64,
        role: Role,
        cakes: usize,
        patterns: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let limit = 1.0 / cakes as f64;
        if !(epsilon > 0.0 && epsilon < limit) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1/{cakes}), got {epsilon}"
            )));
        }
        let mut model = Self {
            epsilon,
            role,
            cakes,
            patterns,
            categories: Vec::new(),
        };
        let count = cakes.pow(cakes as u32);
        model.categories = (0..count)
            .map(|mut idx| {
                let mut picks = vec![0; cakes];
                for p in picks.iter_mut().rev() {
                    *p = idx % cakes;
                    idx /= cakes;
                }
                model.category(&PieceSelection::from_picks(picks)) as u8
            })
            .collect();
        Ok(model)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Category of a selection, 0 = most preferred for this role.
    pub fn category(&self, selection: &PieceSelection) -> usize {
        let pattern = multiplicity_pattern(selection.picks());
        let rank = self
            .patterns
            .iter()
            .position(|p| *p == pattern)
            .expect("every selection has a listed pattern");
        match self.role {
            Role::A => rank,
            Role::B => self.patterns.len() - 1 - rank,
        }
    }

    pub fn category_count(&self) -> usize {
        self.patterns.len()
    }
}

/// Multiplicities of the distinct values, sorted descending.
pub fn multiplicity_pattern(picks: &[usize]) -> Vec<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in picks {
        *counts.entry(p).or_default() += 1;
    }
    let mut pattern: Vec<usize> = counts.into_values().collect();
    pattern.sort_unstable_by(|a, b| b.cmp(a));
    pattern
}

impl PreferenceModel for EpsilonCategoryModel {
    fn name(&self) -> String {
        let kind = if self.cakes == 3 {
            "epsilon_category"
        } else {
            "poker"
        };
        format!("{kind}({}, {:?})", self.epsilon, self.role)
    }

    fn supports(&self, config: &CakeConfig) -> Result<()> {
        let ok = config.cakes() == self.cakes
            && config.pieces_per_cake().iter().all(|&k| k == self.cakes);
        if !ok {
            return Err(Error::UnsupportedConfig {
                model: self.name(),
                reason: format!("requires {0} cakes of {0} pieces, got {config}", self.cakes),
            });
        }
        Ok(())
    }

    fn utilities(&self, config: &CakeConfig, division: &Division) -> Option<Vec<f64>> {
        // category dominates: totals lie in [0, m], so a step of m + 1 separates categories
        let step = (self.cakes + 1) as f64;
        let top = (self.patterns.len() - 1) as f64;
        let mut u = Vec::with_capacity(config.selection_count());
        config.for_each_selection(|s, picks| {
            let mut total = 0.0;
            for (i, &j) in picks.iter().enumerate() {
                let x = division.entry(i, j);
                if x < self.epsilon {
                    u.push(f64::NEG_INFINITY);
                    return;
                }
                total += x;
            }
            u.push((top - self.categories[s] as f64) * step + total);
        });
        Some(u)
    }
}

pub fn epsilon_category_prefer(
    model: &EpsilonCategoryModel,
    division: &Division,
) -> Result<PieceSelection> {
    let config = CakeConfig::new(division.pieces_per_cake())?;
    model.supports(&config)?;
    model.prefer(&config, division)
}

pub fn poker_model(role: Role) -> Result<EpsilonCategoryModel> {
    EpsilonCategoryModel::poker(DEFAULT_EPSILON, role)
}

/// Random hungry model: `Σ_i w[i][s_i] log x[i][s_i]` plus pairwise linkage
/// terms between cakes, all drawn from a seeded generator.
#[derive(Clone, Debug)]
pub struct LogUtilityModel {
    seed: u64,
    linkage: f64,
    config: CakeConfig,
    weights: Vec<Vec<f64>>,
    /// `(i, i', table)` with `table[s_i][s_i']`.
    links: Vec<(usize, usize, Vec<Vec<f64>>)>,
}

pub fn log_utility_model(
    config: &CakeConfig,
    seed: u64,
    linkage_strength: f64,
) -> Result<LogUtilityModel> {
    if !(linkage_strength >= 0.0 && linkage_strength.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "linkage strength must be finite and nonnegative, got {linkage_strength}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = config
        .pieces_per_cake()
        .iter()
        .map(|&k| (0..k).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    let mut links = Vec::new();
    for i in 0..config.cakes() {
        for i2 in i + 1..config.cakes() {
            let table = (0..config.pieces(i))
                .map(|_| {
                    (0..config.pieces(i2))
                        .map(|_| linkage_strength * rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            links.push((i, i2, table));
        }
    }
    Ok(LogUtilityModel {
        seed,
        linkage: linkage_strength,
        config: config.clone(),
        weights,
        links,
    })
}

impl PreferenceModel for LogUtilityModel {
    fn name(&self) -> String {
        format!("log_utility(seed={}, linkage={})", self.seed, self.linkage)
    }

    fn supports(&self, config: &CakeConfig) -> Result<()> {
        if *config != self.config {
            return Err(Error::UnsupportedConfig {
                model: self.name(),
                reason: format!("built for {}, got {config}", self.config),
            });
        }
        Ok(())
    }

    fn utilities(&self, config: &CakeConfig, division: &Division) -> Option<Vec<f64>> {
        let terms: Vec<Vec<f64>> = self
            .weights
            .iter()
            .zip(division.rows())
            .map(|(w, row)| w.iter().zip(row).map(|(w, &x)| w * x.ln()).collect())
            .collect();
        Some(
            (0..config.selection_count())
                .map(|s| {
                    let mut u = 0.0;
                    for (i, t) in terms.iter().enumerate() {
                        u += t[config.pick_of(s, i)];
                    }
                    for (i, i2, table) in &self.links {
                        u += table[config.pick_of(s, *i)][config.pick_of(s, *i2)];
                    }
                    u
                })
                .collect(),
        )
    }
}

/// Replays recorded answers keyed by exact lattice coordinates. Unrecorded
/// divisions raise [`Error::QueryRequired`]; the service turns that into a
/// pending query for a human.
#[derive(Debug, Default)]
pub struct ScriptedOracle {
    answers: RwLock<BTreeMap<DivisionKey, PieceSelection>>,
}

pub fn scripted_oracle(answers: BTreeMap<DivisionKey, PieceSelection>) -> ScriptedOracle {
    ScriptedOracle {
        answers: RwLock::new(answers),
    }
}

impl ScriptedOracle {
    /// Validates and stores an answer. Answers are append-only: a second
    /// answer for the same key must agree with the first.
    pub fn record(
        &self,
        config: &CakeConfig,
        key: DivisionKey,
        selection: PieceSelection,
    ) -> Result<()> {
        validate_answer(config, &key.division(), &selection)?;
        let mut answers = self.answers.write().expect("answer store poisoned");
        if let Some(prev) = answers.get(&key) {
            if *prev != selection {
                return Err(Error::AnswerRejected(format!(
                    "division {key} already answered with {prev}"
                )));
            }
            return Ok(());
        }
        answers.insert(key, selection);
        Ok(())
    }

    pub fn lookup(&self, key: &DivisionKey) -> Option<PieceSelection> {
        self.answers
            .read()
            .expect("answer store poisoned")
            .get(key)
            .cloned()
    }

    pub fn answers(&self) -> BTreeMap<DivisionKey, PieceSelection> {
        self.answers.read().expect("answer store poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.answers.read().expect("answer store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rejects selections that are out of range or pick an empty piece.
pub fn validate_answer(
    config: &CakeConfig,
    division: &Division,
    selection: &PieceSelection,
) -> Result<()> {
    config.check_selection(selection)?;
    for (i, &p) in selection.picks().iter().enumerate() {
        if division.entry(i, p) <= 0.0 {
            return Err(Error::AnswerRejected(format!(
                "piece {} of cake {i} is empty; a nonempty piece is always preferred",
                (b'a' + p as u8) as char
            )));
        }
    }
    Ok(())
}

impl PreferenceModel for ScriptedOracle {
    fn name(&self) -> String {
        "human".into()
    }

    fn supports(&self, _config: &CakeConfig) -> Result<()> {
        Ok(())
    }

    fn utilities(&self, _config: &CakeConfig, _division: &Division) -> Option<Vec<f64>> {
        None
    }

    fn prefer(&self, _config: &CakeConfig, division: &Division) -> Result<PieceSelection> {
        Err(Error::QueryRequired(format!("{:?}", division.rows())))
    }

    fn prefer_at(
        &self,
        config: &CakeConfig,
        key: &DivisionKey,
        division: &Division,
    ) -> Result<PieceSelection> {
        // a single admissible selection needs no question
        let mask = admissible_mask(config, division);
        if mask.iter().filter(|&&ok| ok).count() == 1 {
            return Ok(config.selection_at(mask.iter().position(|&ok| ok).unwrap()));
        }
        self.lookup(key)
            .ok_or_else(|| Error::QueryRequired(key.to_string()))
    }
}

/// JSON model description shared by the CLI and the service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    LinkedBonus {
        beta: f64,
        mode: BonusMode,
    },
    EpsilonCategory {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        role: Role,
    },
    Poker {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        role: Role,
    },
    LogUtility {
        seed: u64,
        #[serde(default)]
        linkage_strength: f64,
    },
    Human,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ModelSpec {
    pub fn is_human(&self) -> bool {
        matches!(self, ModelSpec::Human)
    }

    pub fn build(&self, config: &CakeConfig) -> Result<std::sync::Arc<dyn PreferenceModel>> {
        use std::sync::Arc;
        let model: Arc<dyn PreferenceModel> = match *self {
            ModelSpec::LinkedBonus { beta, mode } => Arc::new(linked_bonus_model(beta, mode)?),
            ModelSpec::EpsilonCategory { epsilon, role } => {
                Arc::new(EpsilonCategoryModel::three_cakes(epsilon, role)?)
            }
            ModelSpec::Poker { epsilon, role } => {
                Arc::new(EpsilonCategoryModel::poker(epsilon, role)?)
            }
            ModelSpec::LogUtility {
                seed,
                linkage_strength,
            } => Arc::new(log_utility_model(config, seed, linkage_strength)?),
            ModelSpec::Human => Arc::new(ScriptedOracle::default()),
        };
        model.supports(config)?;
        Ok(model)
    }
}
