//! Session registry with an append-only JSON-lines journal. Opening a store
//! on an existing journal replays it.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use multicake::geometry::PieceSelection;
use multicake::verifier::player_name;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::engine::{Event, Session, SessionError, SessionSpec, SCHEMA_VERSION};

const EVENT_BUFFER: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tokens {
    pub session: String,
    pub players: BTreeMap<String, String>,
}

impl Tokens {
    /// Whether `token` may act for `player` (the session token may act for anyone).
    pub fn allows(&self, token: &str, player: Option<&str>) -> bool {
        if token == self.session {
            return true;
        }
        match player {
            Some(p) => self.players.get(p).is_some_and(|t| t == token),
            None => self.players.values().any(|t| t == token),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEntry {
    Create {
        v: u32,
        id: String,
        tokens: Tokens,
        spec: SessionSpec,
    },
    Answer {
        v: u32,
        id: String,
        player: String,
        query_id: u64,
        selection: PieceSelection,
    },
}

pub struct SessionHandle {
    pub tokens: Tokens,
    pub session: Mutex<Session>,
    pub events: broadcast::Sender<Event>,
}

impl SessionHandle {
    fn publish(&self, events: Vec<Event>) {
        for e in events {
            // no subscribers is fine
            let _ = self.events.send(e);
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("journal: {0}")]
    Journal(String),
}

#[derive(Default)]
pub struct Store {
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    journal: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

fn random_hex(rng: &mut impl Rng) -> String {
    format!("{:032x}", rng.random::<u128>())
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a journal and replays every recorded session.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Store::default();
        if path.exists() {
            let reader =
                BufReader::new(File::open(&path).map_err(|e| StoreError::Journal(e.to_string()))?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| StoreError::Journal(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line)
                    .map_err(|e| StoreError::Journal(format!("line {}: {e}", n + 1)))?;
                store.apply(entry)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::Journal(e.to_string()))?;
        store.journal = Some(Mutex::new(file));
        store.path = Some(path);
        Ok(store)
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn apply(&self, entry: JournalEntry) -> Result<(), StoreError> {
        match entry {
            JournalEntry::Create {
                id, tokens, spec, ..
            } => {
                let session = Session::create(id.clone(), spec)?;
                self.register(id, tokens, session);
            }
            JournalEntry::Answer {
                id,
                player,
                query_id,
                selection,
                ..
            } => {
                let handle = self.get(&id)?;
                let mut s = handle.session.lock().unwrap_or_else(|e| e.into_inner());
                s.submit_answer(&player, query_id, selection)?;
                s.take_events();
            }
        }
        Ok(())
    }

    fn append(&self, entry: &JournalEntry) -> Result<(), StoreError> {
        if let Some(journal) = &self.journal {
            let mut f = journal.lock().unwrap_or_else(|e| e.into_inner());
            let line =
                serde_json::to_string(entry).map_err(|e| StoreError::Journal(e.to_string()))?;
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| StoreError::Journal(e.to_string()))?;
        }
        Ok(())
    }

    fn register(&self, id: String, tokens: Tokens, mut session: Session) -> Arc<SessionHandle> {
        session.take_events();
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let handle = Arc::new(SessionHandle {
            tokens,
            session: Mutex::new(session),
            events,
        });
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, handle.clone());
        handle
    }

    pub fn create(&self, spec: SessionSpec) -> Result<(Arc<SessionHandle>, String), StoreError> {
        let mut rng = rand::rng();
        let id = format!("{:016x}", rng.random::<u64>());
        let tokens = Tokens {
            session: random_hex(&mut rng),
            players: (0..spec.players.len())
                .map(|p| (player_name(p), random_hex(&mut rng)))
                .collect(),
        };
        let session = Session::create(id.clone(), spec.clone())?;
        self.append(&JournalEntry::Create {
            v: SCHEMA_VERSION,
            id: id.clone(),
            tokens: tokens.clone(),
            spec,
        })?;
        Ok((self.register(id.clone(), tokens, session), id))
    }

    pub fn get(&self, id: &str) -> Result<Arc<SessionHandle>, StoreError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies an answer under the session lock, journals it and publishes
    /// the resulting events.
    pub fn answer(
        &self,
        id: &str,
        player: &str,
        query_id: u64,
        selection: PieceSelection,
    ) -> Result<crate::engine::Ack, StoreError> {
        let handle = self.get(id)?;
        let mut s = handle.session.lock().unwrap_or_else(|e| e.into_inner());
        let ack = s.submit_answer(player, query_id, selection.clone())?;
        if !ack.duplicate {
            self.append(&JournalEntry::Answer {
                v: SCHEMA_VERSION,
                id: id.to_string(),
                player: player.to_string(),
                query_id,
                selection,
            })?;
        }
        handle.publish(s.take_events());
        Ok(ack)
    }
}
