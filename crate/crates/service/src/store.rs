//! SQLite-backed task store. Every state change runs in an immediate
//! transaction, so issuing and submitting are serialized per database.

use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use rusqlite::{params, Connection, OptionalExtension, TransactionBehavior};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use qaforge_core::corpus::{validate_annotation, AnnotationRecord, Document, IndexSet, Question, Sentence};

use crate::policy::{self, Candidate};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS documents (
    id TEXT PRIMARY KEY,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS questions (
    id TEXT PRIMARY KEY,
    document_id TEXT NOT NULL REFERENCES documents(id),
    body TEXT NOT NULL,
    skips INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS sessions (
    annotator_id TEXT PRIMARY KEY,
    consent_text_version TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS assignments (
    id TEXT PRIMARY KEY,
    question_id TEXT NOT NULL REFERENCES questions(id),
    annotator_id TEXT NOT NULL REFERENCES sessions(annotator_id),
    issued_at TEXT NOT NULL,
    expires_at TEXT NOT NULL,
    state TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS assignments_by_annotator ON assignments(annotator_id, state);
CREATE TABLE IF NOT EXISTS skips (
    question_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    skipped_at TEXT NOT NULL,
    PRIMARY KEY (question_id, annotator_id)
);
CREATE TABLE IF NOT EXISTS annotations (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    question_id TEXT NOT NULL REFERENCES questions(id),
    annotator_id TEXT NOT NULL REFERENCES sessions(annotator_id),
    selected TEXT NOT NULL,
    no_answer INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    surplus INTEGER NOT NULL,
    UNIQUE (question_id, annotator_id)
);
";

const ACTIVE: &str = "active";
const COMPLETED: &str = "completed";
const SKIPPED: &str = "skipped";
const EXPIRED: &str = "expired";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage error: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("stored record is corrupt: {0}")]
    Corrupt(String),
    #[error("unknown session")]
    UnknownSession,
    #[error("consent is required before annotating")]
    ConsentRequired,
    #[error("consent was given for text version {given}, current version is {current}")]
    ConsentVersion { given: String, current: String },
    #[error("unknown assignment {0}")]
    UnknownAssignment(String),
    #[error("assignment {0} has expired")]
    Expired(String),
    #[error("assignment {0} is no longer active")]
    NotActive(String),
    #[error("question {question_id} was already annotated by this annotator")]
    Duplicate { question_id: String },
    #[error("annotation rejected: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("question {question_id} refers to unknown document {document_id}")]
    MissingDocument {
        question_id: String,
        document_id: String,
    },
}

/// A document as shown to annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSnapshot {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub assignment_id: String,
    pub question_id: String,
    pub question: String,
    pub document: DocumentSnapshot,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub questions: usize,
    pub annotations: usize,
    pub sessions: usize,
}

pub struct Store {
    conn: Mutex<Connection>,
}

fn corrupt(e: impl ToString) -> StoreError {
    StoreError::Corrupt(e.to_string())
}

fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn parse_ts(s: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(corrupt)
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store {
            conn: Mutex::new(conn),
        })
    }

    fn with_tx<T>(
        &self,
        f: impl FnOnce(&rusqlite::Transaction) -> Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// Loads documents and the annotatable questions. Existing questions
    /// keep their skip counters; documents are replaced.
    pub fn import(&self, documents: &[Document], questions: &[Question]) -> Result<usize, StoreError> {
        self.with_tx(|tx| {
            for d in documents {
                tx.execute(
                    "INSERT INTO documents (id, body) VALUES (?1, ?2)
                     ON CONFLICT(id) DO UPDATE SET body = excluded.body",
                    params![d.id, serde_json::to_string(d).map_err(corrupt)?],
                )?;
            }
            let mut imported = 0;
            for q in questions.iter().filter(|q| q.is_annotatable()) {
                let known: Option<String> = tx
                    .query_row("SELECT id FROM documents WHERE id = ?1", [&q.document_id], |r| {
                        r.get(0)
                    })
                    .optional()?;
                if known.is_none() {
                    return Err(StoreError::MissingDocument {
                        question_id: q.id.clone(),
                        document_id: q.document_id.clone(),
                    });
                }
                imported += tx.execute(
                    "INSERT INTO questions (id, document_id, body) VALUES (?1, ?2, ?3)
                     ON CONFLICT(id) DO UPDATE SET body = excluded.body",
                    params![q.id, q.document_id, serde_json::to_string(q).map_err(corrupt)?],
                )?;
            }
            Ok(imported)
        })
    }

    pub fn create_session(
        &self,
        consent_text_version: &str,
        now: DateTime<Utc>,
    ) -> Result<String, StoreError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.with_tx(|tx| {
            tx.execute(
                "INSERT INTO sessions (annotator_id, consent_text_version, created_at) VALUES (?1, ?2, ?3)",
                params![id, consent_text_version, ts(now)],
            )?;
            Ok(())
        })?;
        Ok(id)
    }

    fn check_session(
        tx: &rusqlite::Transaction,
        annotator: &str,
        consent_version: &str,
    ) -> Result<(), StoreError> {
        let given: Option<String> = tx
            .query_row(
                "SELECT consent_text_version FROM sessions WHERE annotator_id = ?1",
                [annotator],
                |r| r.get(0),
            )
            .optional()?;
        match given {
            None => Err(StoreError::UnknownSession),
            Some(v) if v != consent_version => Err(StoreError::ConsentVersion {
                given: v,
                current: consent_version.to_string(),
            }),
            Some(_) => Ok(()),
        }
    }

    fn expire(tx: &rusqlite::Transaction, now: DateTime<Utc>) -> Result<(), StoreError> {
        tx.execute(
            "UPDATE assignments SET state = ?1 WHERE state = ?2 AND expires_at <= ?3",
            params![EXPIRED, ACTIVE, ts(now)],
        )?;
        Ok(())
    }

    fn load_task(
        tx: &rusqlite::Transaction,
        assignment_id: &str,
        question_id: &str,
        issued_at: DateTime<Utc>,
        expires_at: DateTime<Utc>,
    ) -> Result<TaskAssignment, StoreError> {
        let (qbody, dbody): (String, String) = tx.query_row(
            "SELECT q.body, d.body FROM questions q JOIN documents d ON d.id = q.document_id WHERE q.id = ?1",
            [question_id],
            |r| Ok((r.get(0)?, r.get(1)?)),
        )?;
        let q: Question = serde_json::from_str(&qbody).map_err(corrupt)?;
        let d: Document = serde_json::from_str(&dbody).map_err(corrupt)?;
        Ok(TaskAssignment {
            assignment_id: assignment_id.to_string(),
            question_id: q.id,
            question: q.text,
            document: DocumentSnapshot {
                id: d.id,
                sentences: d.sentences,
            },
            issued_at,
            expires_at,
        })
    }

    /// Returns the annotator's live assignment if there is one, otherwise
    /// issues a new one, or `None` when nothing is left for them.
    pub fn next_task(
        &self,
        annotator: &str,
        consent_version: &str,
        now: DateTime<Utc>,
        ttl: Duration,
        rng: &mut dyn RngCore,
    ) -> Result<Option<TaskAssignment>, StoreError> {
        self.with_tx(|tx| {
            Self::check_session(tx, annotator, consent_version)?;
            Self::expire(tx, now)?;
            let live: Option<(String, String, String, String)> = tx
                .query_row(
                    "SELECT id, question_id, issued_at, expires_at FROM assignments
                     WHERE annotator_id = ?1 AND state = ?2 ORDER BY issued_at LIMIT 1",
                    params![annotator, ACTIVE],
                    |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
                )
                .optional()?;
            if let Some((id, qid, issued, expires)) = live {
                return Self::load_task(tx, &id, &qid, parse_ts(&issued)?, parse_ts(&expires)?).map(Some);
            }

            let mut stmt = tx.prepare(
                "SELECT q.id,
                        (SELECT COUNT(*) FROM annotations a WHERE a.question_id = q.id),
                        (SELECT COUNT(*) FROM assignments s WHERE s.question_id = q.id AND s.state = ?2)
                 FROM questions q
                 WHERE NOT EXISTS (SELECT 1 FROM annotations a WHERE a.question_id = q.id AND a.annotator_id = ?1)
                   AND NOT EXISTS (SELECT 1 FROM skips k WHERE k.question_id = q.id AND k.annotator_id = ?1)
                 ORDER BY q.id",
            )?;
            let candidates = stmt
                .query_map(params![annotator, ACTIVE], |r| {
                    Ok(Candidate {
                        question_id: r.get(0)?,
                        completed: r.get::<_, i64>(1)? as usize,
                        in_flight: r.get::<_, i64>(2)? as usize,
                    })
                })?
                .collect::<Result<Vec<_>, _>>()?;
            drop(stmt);
            let Some(choice) = policy::choose(&candidates, rng) else {
                return Ok(None);
            };
            let id = uuid::Uuid::new_v4().simple().to_string();
            let expires = now + ttl;
            tx.execute(
                "INSERT INTO assignments (id, question_id, annotator_id, issued_at, expires_at, state)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![id, choice.question_id, annotator, ts(now), ts(expires), ACTIVE],
            )?;
            Self::load_task(tx, &id, &choice.question_id, now, expires).map(Some)
        })
    }

    fn active_assignment(
        tx: &rusqlite::Transaction,
        annotator: &str,
        assignment_id: &str,
        now: DateTime<Utc>,
    ) -> Result<String, StoreError> {
        let row: Option<(String, String, String, String)> = tx
            .query_row(
                "SELECT question_id, annotator_id, expires_at, state FROM assignments WHERE id = ?1",
                [assignment_id],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
            )
            .optional()?;
        let Some((qid, owner, expires, state)) = row else {
            return Err(StoreError::UnknownAssignment(assignment_id.to_string()));
        };
        if owner != annotator {
            return Err(StoreError::UnknownAssignment(assignment_id.to_string()));
        }
        if state == EXPIRED || (state == ACTIVE && parse_ts(&expires)? <= now) {
            tx.execute(
                "UPDATE assignments SET state = ?1 WHERE id = ?2",
                params![EXPIRED, assignment_id],
            )?;
            return Err(StoreError::Expired(assignment_id.to_string()));
        }
        if state != ACTIVE {
            let done: Option<i64> = tx
                .query_row(
                    "SELECT seq FROM annotations WHERE question_id = ?1 AND annotator_id = ?2",
                    params![qid, annotator],
                    |r| r.get(0),
                )
                .optional()?;
            return Err(match done {
                Some(_) => StoreError::Duplicate { question_id: qid },
                None => StoreError::NotActive(assignment_id.to_string()),
            });
        }
        Ok(qid)
    }

    /// Validates and stores one annotation. Records beyond the first two
    /// for a question are kept but flagged as surplus.
    pub fn submit(
        &self,
        annotator: &str,
        consent_version: &str,
        assignment_id: &str,
        selected: IndexSet,
        no_answer: bool,
        now: DateTime<Utc>,
    ) -> Result<AnnotationRecord, StoreError> {
        self.with_tx(|tx| {
            Self::check_session(tx, annotator, consent_version)?;
            let qid = Self::active_assignment(tx, annotator, assignment_id, now)?;
            let dbody: String = tx.query_row(
                "SELECT d.body FROM questions q JOIN documents d ON d.id = q.document_id WHERE q.id = ?1",
                [&qid],
                |r| r.get(0),
            )?;
            let doc: Document = serde_json::from_str(&dbody).map_err(corrupt)?;
            let existing: i64 = tx.query_row(
                "SELECT COUNT(*) FROM annotations WHERE question_id = ?1",
                [&qid],
                |r| r.get(0),
            )?;
            let mut record = AnnotationRecord {
                question_id: qid.clone(),
                annotator_id: annotator.to_string(),
                selected,
                no_answer,
                created_at: now,
                surplus: existing as usize >= policy::ANNOTATIONS_PER_QUESTION,
            };
            let violations = validate_annotation(&record, &doc);
            if !violations.is_empty() {
                return Err(StoreError::Invalid(
                    violations.iter().map(|v| v.to_string()).collect(),
                ));
            }
            let inserted = tx.execute(
                "INSERT INTO annotations (question_id, annotator_id, selected, no_answer, created_at, surplus)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)
                 ON CONFLICT(question_id, annotator_id) DO NOTHING",
                params![
                    qid,
                    annotator,
                    serde_json::to_string(&record.selected).map_err(corrupt)?,
                    no_answer,
                    ts(now),
                    record.surplus
                ],
            )?;
            if inserted == 0 {
                return Err(StoreError::Duplicate { question_id: qid });
            }
            tx.execute(
                "UPDATE assignments SET state = ?1 WHERE id = ?2",
                params![COMPLETED, assignment_id],
            )?;
            // Round-trip the timestamp through storage precision.
            record.created_at = parse_ts(&ts(now))?;
            Ok(record)
        })
    }

    /// Gives the question back to the pool and never offers it to this
    /// annotator again. The question's skip counter is incremented.
    pub fn skip(
        &self,
        annotator: &str,
        consent_version: &str,
        assignment_id: &str,
        now: DateTime<Utc>,
    ) -> Result<String, StoreError> {
        self.with_tx(|tx| {
            Self::check_session(tx, annotator, consent_version)?;
            let qid = Self::active_assignment(tx, annotator, assignment_id, now)?;
            tx.execute(
                "UPDATE assignments SET state = ?1 WHERE id = ?2",
                params![SKIPPED, assignment_id],
            )?;
            tx.execute(
                "INSERT OR IGNORE INTO skips (question_id, annotator_id, skipped_at) VALUES (?1, ?2, ?3)",
                params![qid, annotator, ts(now)],
            )?;
            tx.execute("UPDATE questions SET skips = skips + 1 WHERE id = ?1", [&qid])?;
            Ok(qid)
        })
    }

    /// All annotations in completion order.
    pub fn export(&self) -> Result<Vec<AnnotationRecord>, StoreError> {
        let conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let mut stmt = conn.prepare(
            "SELECT question_id, annotator_id, selected, no_answer, created_at, surplus
             FROM annotations ORDER BY seq",
        )?;
        let rows = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, bool>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, bool>(5)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        rows.into_iter()
            .map(
                |(question_id, annotator_id, selected, no_answer, created_at, surplus)| {
                    Ok(AnnotationRecord {
                        question_id,
                        annotator_id,
                        selected: serde_json::from_str(&selected).map_err(corrupt)?,
                        no_answer,
                        created_at: parse_ts(&created_at)?,
                        surplus,
                    })
                },
            )
            .collect()
    }

    pub fn skip_count(&self, question_id: &str) -> Result<usize, StoreError> {
        let conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let n: i64 = conn.query_row("SELECT skips FROM questions WHERE id = ?1", [question_id], |r| {
            r.get(0)
        })?;
        Ok(n as usize)
    }

    pub fn counts(&self) -> Result<StoreCounts, StoreError> {
        let conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let count = |table: &str| -> Result<usize, StoreError> {
            let n: i64 = conn.query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| r.get(0))?;
            Ok(n as usize)
        };
        Ok(StoreCounts {
            questions: count("questions")?,
            annotations: count("annotations")?,
            sessions: count("sessions")?,
        })
    }
}
