//! Session state machine. Everything here is synchronous and deterministic:
//! the same creation request followed by the same answers always yields the
//! same queries, ids and result.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use multicake::geometry::{CakeConfig, Division, PieceSelection};
use multicake::preferences::{
    scripted_oracle, DivisionKey, ModelSpec, PreferenceModel, ScriptedOracle,
};
use multicake::sperner::{solve_envy_free, three_player_square, SolveOptions, SolveReport};
use multicake::triangulation::{assign_owners, Triangulation};
use multicake::verifier::{player_index, player_name};
use multicake::Error;
use serde::{Deserialize, Serialize};

/// Largest number of potential human queries an interactive session may need.
pub const QUERY_BUDGET: u64 = 200;

/// Version stamped on every message.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub config: CakeConfig,
    pub players: Vec<ModelSpec>,
    pub schedule: Vec<u32>,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Configuring,
    Querying,
    Solved,
    Failed,
}

impl Status {
    pub fn can_move_to(self, next: Status) -> bool {
        matches!(
            (self, next),
            (Status::Configuring, Status::Querying)
                | (Status::Configuring, Status::Failed)
                | (Status::Querying, Status::Solved)
                | (Status::Querying, Status::Failed)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    /// Labels a vertex of the current mesh.
    Label,
    /// Re-checks an allocated selection at a candidate division.
    Confirm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: u64,
    pub player: String,
    pub kind: QueryKind,
    pub key: DivisionKey,
    pub division: Division,
    pub admissible: Vec<PieceSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub query_id: u64,
    pub player: String,
    pub kind: QueryKind,
    pub key: DivisionKey,
    pub selection: PieceSelection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    pub player: String,
    /// The choice given at the final division, if it was asked.
    pub chosen: Option<PieceSelection>,
    pub confirmed: bool,
    /// Admissible selections passed over in favour of `chosen`.
    pub rejected: Vec<PieceSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub report: SolveReport,
    pub confirmations: Vec<Confirmation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub mesh: Option<u32>,
    pub answered: usize,
    pub pending: usize,
    pub remaining_in_mesh: usize,
    pub potential_queries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerInfo {
    pub name: String,
    pub human: bool,
    pub spec: ModelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub v: u32,
    pub id: String,
    pub config: CakeConfig,
    pub players: Vec<PlayerInfo>,
    pub schedule: Vec<u32>,
    pub tol: f64,
    pub status: Status,
    pub transitions: Vec<Status>,
    pub progress: Progress,
    pub pending: Vec<Query>,
    pub result: Option<SessionResult>,
    pub failure: Option<String>,
}

/// Message pushed to event subscribers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Query,
    Progress,
    Result,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub v: u32,
    pub accepted: bool,
    /// True when the same answer had already been stored.
    pub duplicate: bool,
    pub status: Status,
    pub next_query: Option<Query>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    Invalid(String),
    #[error("query budget exceeded: {needed} potential queries, at most {QUERY_BUDGET} allowed")]
    BudgetExceeded { needed: u64 },
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("query {0} is not pending")]
    StaleQuery(u64),
    #[error("answer rejected: {0}")]
    Rejected(String),
    #[error("session is {0:?}")]
    NotQuerying(Status),
}

/// Admissible selections at a division, in lexicographic order.
pub fn admissible(config: &CakeConfig, division: &Division) -> Vec<PieceSelection> {
    config
        .selections()
        .filter(|s| s.is_hungry_admissible(division))
        .collect()
}

fn human_players(spec: &SessionSpec) -> Vec<usize> {
    (0..spec.players.len())
        .filter(|&p| spec.players[p].is_human())
        .collect()
}

/// Vertices of the mesh owned by humans that need a real answer, in
/// breadth-first order from the polytope center.
fn label_queue(
    spec: &SessionSpec,
    mesh: u32,
) -> multicake::Result<BTreeMap<usize, VecDeque<DivisionKey>>> {
    let tri = Triangulation::build(&spec.config, mesh)?;
    let owners = assign_owners(&tri, spec.players.len())?;
    let humans = human_players(spec);
    let mut queues: BTreeMap<usize, VecDeque<DivisionKey>> =
        humans.iter().map(|&h| (h, VecDeque::new())).collect();
    for v in center_bfs(&tri) {
        let owner = owners.owner(v);
        if !humans.contains(&owner) || tri.is_pure(v) {
            continue;
        }
        let key = DivisionKey::new(&tri.vertex_coords(v), mesh);
        queues.get_mut(&owner).expect("human queue").push_back(key);
    }
    Ok(queues)
}

/// Vertex ids in breadth-first order over unit transfers between pieces of
/// one cake, starting from the vertices nearest the center.
fn center_bfs(tri: &Triangulation) -> Vec<usize> {
    let n = tri.vertex_count();
    let mesh = tri.mesh() as f64;
    let distance = |v: usize| -> f64 {
        tri.vertex_coords(v)
            .iter()
            .map(|row| {
                let c = mesh / row.len() as f64;
                row.iter().map(|&y| (y as f64 - c).abs()).sum::<f64>()
            })
            .sum()
    };
    let dist: Vec<f64> = (0..n).map(distance).collect();
    let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut frontier: VecDeque<usize> = (0..n).filter(|&v| dist[v] - nearest < 1e-9).collect();
    for &v in &frontier {
        seen[v] = true;
    }
    while let Some(v) = frontier.pop_front() {
        order.push(v);
        let coords = tri.vertex_coords(v);
        let mut next = BTreeSet::new();
        for (i, row) in coords.iter().enumerate() {
            for from in 0..row.len() {
                if row[from] == 0 {
                    continue;
                }
                for to in 0..row.len() {
                    if to == from {
                        continue;
                    }
                    let mut c = coords.clone();
                    c[i][from] -= 1;
                    c[i][to] += 1;
                    if let Some(u) = tri.vertex_id(&c) {
                        next.insert(u);
                    }
                }
            }
        }
        for u in next {
            if !seen[u] {
                seen[u] = true;
                frontier.push_back(u);
            }
        }
    }
    order
}

/// Upper bound on the answers humans may be asked for over the schedule.
pub fn potential_queries(spec: &SessionSpec) -> multicake::Result<u64> {
    let humans = human_players(spec);
    if humans.is_empty() {
        return Ok(0);
    }
    let mut total = 0u64;
    for &mesh in &spec.schedule {
        let vertices = multicake::triangulation::predicted_vertex_count(&spec.config, mesh);
        if vertices > 64 * QUERY_BUDGET as u128 {
            return Ok(u64::MAX);
        }
        let tri = Triangulation::build(&spec.config, mesh)?;
        let owners = assign_owners(&tri, spec.players.len())?;
        total += (0..tri.vertex_count())
            .filter(|&v| humans.contains(&owners.owner(v)) && !tri.is_pure(v))
            .count() as u64;
    }
    Ok(total)
}

fn solve(
    spec: &SessionSpec,
    models: &[Arc<dyn PreferenceModel>],
) -> multicake::Result<SolveReport> {
    let options = SolveOptions::new(spec.schedule.clone(), spec.tol);
    if spec.players.len() == 3 {
        three_player_square(models, &options)
    } else {
        solve_envy_free(&spec.config, models, &options)
    }
}

/// Builds the models, replacing each human with a scripted oracle.
fn build_models(
    spec: &SessionSpec,
    answers: &BTreeMap<usize, BTreeMap<DivisionKey, PieceSelection>>,
) -> multicake::Result<(
    Vec<Arc<dyn PreferenceModel>>,
    BTreeMap<usize, Arc<ScriptedOracle>>,
)> {
    let mut models: Vec<Arc<dyn PreferenceModel>> = Vec::new();
    let mut oracles = BTreeMap::new();
    for (p, s) in spec.players.iter().enumerate() {
        if s.is_human() {
            let oracle = Arc::new(scripted_oracle(
                answers.get(&p).cloned().unwrap_or_default(),
            ));
            oracles.insert(p, oracle.clone());
            models.push(oracle);
        } else {
            models.push(s.build(&spec.config)?);
        }
    }
    Ok((models, oracles))
}

/// Reruns the solver on recorded human answers alone.
pub fn replay_report(spec: &SessionSpec, answers: &[Answer]) -> multicake::Result<SolveReport> {
    let mut by_player: BTreeMap<usize, BTreeMap<DivisionKey, PieceSelection>> = BTreeMap::new();
    for a in answers {
        let p = player_index(&a.player)
            .ok_or_else(|| Error::Precondition(format!("unknown player {}", a.player)))?;
        by_player
            .entry(p)
            .or_default()
            .insert(a.key.clone(), a.selection.clone());
    }
    let (models, _) = build_models(spec, &by_player)?;
    solve(spec, &models)
}

pub fn validate_spec(spec: &SessionSpec) -> Result<u64, SessionError> {
    let invalid = |e: Error| SessionError::Invalid(e.to_string());
    let p = spec.players.len();
    let square = spec.config.pieces_per_cake() == [2, 2];
    if !(p == 2 || (p == 3 && square)) {
        return Err(SessionError::Invalid(format!(
            "sessions take 2 players, or 3 on two cakes of two pieces; got {p} players on {}",
            spec.config
        )));
    }
    SolveOptions::new(spec.schedule.clone(), spec.tol)
        .validate()
        .map_err(invalid)?;
    for s in &spec.players {
        if !s.is_human() {
            s.build(&spec.config).map_err(invalid)?;
        }
    }
    let needed = potential_queries(spec).map_err(invalid)?;
    if needed > QUERY_BUDGET {
        return Err(SessionError::BudgetExceeded { needed });
    }
    Ok(needed)
}

pub struct Session {
    id: String,
    spec: SessionSpec,
    models: Vec<Arc<dyn PreferenceModel>>,
    oracles: BTreeMap<usize, Arc<ScriptedOracle>>,
    status: Status,
    transitions: Vec<Status>,
    mesh: Option<u32>,
    queues: BTreeMap<usize, VecDeque<DivisionKey>>,
    pending: BTreeMap<usize, Query>,
    answers: Vec<Answer>,
    next_query_id: u64,
    potential: u64,
    result: Option<SessionResult>,
    failure: Option<String>,
    outbox: Vec<Event>,
}

impl Session {
    pub fn create(id: String, spec: SessionSpec) -> Result<Self, SessionError> {
        let potential = validate_spec(&spec)?;
        let (models, oracles) = build_models(&spec, &BTreeMap::new())
            .map_err(|e| SessionError::Invalid(e.to_string()))?;
        let mut s = Session {
            id,
            spec,
            models,
            oracles,
            status: Status::Configuring,
            transitions: vec![Status::Configuring],
            mesh: None,
            queues: BTreeMap::new(),
            pending: BTreeMap::new(),
            answers: Vec::new(),
            next_query_id: 1,
            potential,
            result: None,
            failure: None,
            outbox: Vec::new(),
        };
        s.set_status(Status::Querying);
        let first = s.spec.schedule[0];
        s.enter_mesh(first);
        s.advance();
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn spec(&self) -> &SessionSpec {
        &self.spec
    }

    pub fn status(&self) -> Status {
        self.status
    }

    /// Every status the session has been in, oldest first.
    pub fn transitions(&self) -> &[Status] {
        &self.transitions
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn result(&self) -> Option<&SessionResult> {
        self.result.as_ref()
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.outbox)
    }

    fn set_status(&mut self, next: Status) {
        debug_assert!(
            self.status.can_move_to(next),
            "{:?} -> {next:?}",
            self.status
        );
        self.status = next;
        self.transitions.push(next);
    }

    fn emit(&mut self, kind: EventKind, payload: serde_json::Value) {
        self.outbox.push(Event {
            v: SCHEMA_VERSION,
            kind,
            payload,
        });
    }

    fn enter_mesh(&mut self, mesh: u32) {
        match label_queue(&self.spec, mesh) {
            Ok(q) => {
                self.mesh = Some(mesh);
                self.queues = q;
            }
            Err(e) => self.fail(e.to_string()),
        }
    }

    fn fail(&mut self, reason: String) {
        if self.status == Status::Querying || self.status == Status::Configuring {
            self.set_status(Status::Failed);
        }
        self.failure = Some(reason);
        self.pending.clear();
        self.emit(
            EventKind::Result,
            serde_json::json!({ "status": self.status, "failure": self.failure }),
        );
    }

    fn make_query(&mut self, player: usize, kind: QueryKind, key: DivisionKey) -> Query {
        let division = key.division();
        let q = Query {
            query_id: self.next_query_id,
            player: player_name(player),
            kind,
            admissible: admissible(&self.spec.config, &division),
            key,
            division,
        };
        self.next_query_id += 1;
        q
    }

    /// Gives each human without a pending query their next unanswered vertex.
    fn fill_pending(&mut self) {
        let humans: Vec<usize> = self.oracles.keys().copied().collect();
        for h in humans {
            if self.pending.contains_key(&h) {
                continue;
            }
            while let Some(key) = self.queues.get_mut(&h).and_then(VecDeque::pop_front) {
                if self.oracles[&h].lookup(&key).is_some() {
                    continue;
                }
                let q = self.make_query(h, QueryKind::Label, key);
                self.emit(
                    EventKind::Query,
                    serde_json::to_value(&q).expect("query serializes"),
                );
                self.pending.insert(h, q);
                break;
            }
        }
    }

    /// Runs the solver whenever no human owes an answer, until it needs one.
    fn advance(&mut self) {
        let mut forced: BTreeSet<(usize, DivisionKey)> = BTreeSet::new();
        while self.status == Status::Querying {
            self.fill_pending();
            if !self.pending.is_empty() {
                self.emit_progress();
                return;
            }
            match solve(&self.spec, &self.models) {
                Ok(report) => return self.finish(report),
                Err(Error::AnswerNeeded {
                    player,
                    mesh,
                    coords,
                    confirmation,
                }) => {
                    let Some(p) = player_index(&player).filter(|p| self.oracles.contains_key(p))
                    else {
                        return self.fail(format!("solver asked unknown player {player}"));
                    };
                    let key = DivisionKey::new(&coords, mesh);
                    if !forced.insert((p, key.clone())) {
                        return self
                            .fail(format!("solver repeated a question for {player} at {key}"));
                    }
                    if confirmation {
                        let q = self.make_query(p, QueryKind::Confirm, key);
                        self.emit(
                            EventKind::Query,
                            serde_json::to_value(&q).expect("query serializes"),
                        );
                        self.pending.insert(p, q);
                    } else if self.mesh != Some(mesh) && self.spec.schedule.contains(&mesh) {
                        self.enter_mesh(mesh);
                    } else {
                        self.queues.entry(p).or_default().push_front(key);
                    }
                }
                Err(e) => return self.fail(e.to_string()),
            }
        }
    }

    fn finish(&mut self, report: SolveReport) {
        let confirmations = self.confirmations(&report);
        let converged = report.converged;
        self.result = Some(SessionResult {
            report,
            confirmations,
        });
        self.set_status(if converged {
            Status::Solved
        } else {
            Status::Failed
        });
        if !converged {
            self.failure = Some("not converged".into());
        }
        let payload = serde_json::json!({ "status": self.status, "result": self.result });
        self.emit(EventKind::Result, payload);
    }

    fn confirmations(&self, report: &SolveReport) -> Vec<Confirmation> {
        let scale = 2 * report.mesh_used;
        let coords: Vec<Vec<u32>> = report
            .division
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&x| (x * scale as f64).round() as u32)
                    .collect()
            })
            .collect();
        let key = DivisionKey::new(&coords, scale);
        let menu = admissible(&self.spec.config, &report.division);
        report
            .allocation
            .iter()
            .filter_map(|(name, allocated)| {
                let p = player_index(name)?;
                let oracle = self.oracles.get(&p)?;
                let chosen = oracle.lookup(&key);
                let rejected = match &chosen {
                    Some(c) => menu.iter().filter(|s| *s != c).cloned().collect(),
                    None => Vec::new(),
                };
                Some(Confirmation {
                    player: name.clone(),
                    confirmed: chosen.as_ref() == Some(allocated),
                    chosen,
                    rejected,
                })
            })
            .collect()
    }

    fn emit_progress(&mut self) {
        let p = self.progress();
        self.emit(
            EventKind::Progress,
            serde_json::to_value(p).expect("progress serializes"),
        );
    }

    pub fn progress(&self) -> Progress {
        Progress {
            mesh: self.mesh,
            answered: self.answers.len(),
            pending: self.pending.len(),
            remaining_in_mesh: self.queues.values().map(VecDeque::len).sum(),
            potential_queries: self.potential,
        }
    }

    fn player(&self, name: &str) -> Result<usize, SessionError> {
        player_index(name)
            .filter(|&p| p < self.spec.players.len())
            .ok_or_else(|| SessionError::UnknownPlayer(name.to_string()))
    }

    /// The player's pending query; `None` for model players and once the
    /// player owes nothing.
    pub fn next_query(&self, player: &str) -> Result<Option<Query>, SessionError> {
        let p = self.player(player)?;
        Ok(self.pending.get(&p).cloned())
    }

    pub fn submit_answer(
        &mut self,
        player: &str,
        query_id: u64,
        selection: PieceSelection,
    ) -> Result<Ack, SessionError> {
        let p = self.player(player)?;
        if let Some(prev) = self
            .answers
            .iter()
            .find(|a| a.query_id == query_id && a.player == player)
        {
            if prev.selection == selection {
                return Ok(self.ack(p, true));
            }
            return Err(SessionError::StaleQuery(query_id));
        }
        if self.status != Status::Querying {
            return Err(SessionError::NotQuerying(self.status));
        }
        let query = match self.pending.get(&p) {
            Some(q) if q.query_id == query_id => q.clone(),
            _ => return Err(SessionError::StaleQuery(query_id)),
        };
        if !query.admissible.contains(&selection) {
            let reason = match multicake::preferences::validate_answer(
                &self.spec.config,
                &query.division,
                &selection,
            ) {
                Err(e) => e.to_string(),
                Ok(()) => format!("{selection:?} is not on the menu"),
            };
            return Err(SessionError::Rejected(reason));
        }
        self.oracles[&p]
            .record(&self.spec.config, query.key.clone(), selection.clone())
            .map_err(|e| SessionError::Rejected(e.to_string()))?;
        self.pending.remove(&p);
        self.answers.push(Answer {
            query_id,
            player: player.to_string(),
            kind: query.kind,
            key: query.key,
            selection,
        });
        self.advance();
        Ok(self.ack(p, false))
    }

    fn ack(&self, p: usize, duplicate: bool) -> Ack {
        Ack {
            v: SCHEMA_VERSION,
            accepted: true,
            duplicate,
            status: self.status,
            next_query: self.pending.get(&p).cloned(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            v: SCHEMA_VERSION,
            id: self.id.clone(),
            config: self.spec.config.clone(),
            players: self
                .spec
                .players
                .iter()
                .enumerate()
                .map(|(p, s)| PlayerInfo {
                    name: player_name(p),
                    human: s.is_human(),
                    spec: s.clone(),
                })
                .collect(),
            schedule: self.spec.schedule.clone(),
            tol: self.spec.tol,
            status: self.status,
            transitions: self.transitions.clone(),
            progress: self.progress(),
            pending: self.pending.values().cloned().collect(),
            result: self.result.clone(),
            failure: self.failure.clone(),
        }
    }
}
