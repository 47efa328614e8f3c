//! Catalog records and the in-memory state they replay into.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Utc};
use insole_core::model::{FootSide, Pairing, SessionStatus, SessionType};
use insole_core::report::ReportKind;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::auth::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: Uuid,
    pub username: String,
    pub role: Role,
    pub credential_hash: String,
    pub created_at: DateTime<Utc>,
    /// The patient record a patient account speaks for.
    pub patient_id: Option<Uuid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: Uuid,
    pub display_name: String,
    pub clinician_id: Option<Uuid>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: Uuid,
    pub patient_id: Uuid,
    pub pairing_id: Uuid,
    pub session_type: SessionType,
    pub started_at: DateTime<Utc>,
    pub sample_rate_hz: f64,
    pub status: SessionStatus,
    pub frames_left: u64,
    pub frames_right: u64,
    /// Content hashes of the raw batches in arrival order.
    pub batches: Vec<String>,
}

impl SessionMeta {
    pub fn frame_count(&self) -> u64 {
        self.frames_left + self.frames_right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Curate,
    Analyze,
    Assess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: Uuid,
    pub session_id: Uuid,
    pub engine_version: String,
    pub state: JobState,
    pub attempts: u32,
    pub stages_done: Vec<Stage>,
    /// Reports the session type calls for but the data could not support.
    pub skipped: BTreeMap<ReportKind, String>,
    pub last_error: Option<String>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub report_id: Uuid,
    pub session_id: Uuid,
    pub kind: ReportKind,
    /// Content hash of the payload blob.
    pub payload: String,
    pub generated_at: DateTime<Utc>,
    pub engine_versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum CatalogRecord {
    UserCreated(UserAccount),
    PatientCreated(Patient),
    PairingCreated(Pairing),
    PairingDeactivated { pairing_id: Uuid },
    SessionCreated(SessionMeta),
    BatchAppended { session_id: Uuid, blob: String, left: u64, right: u64 },
    SessionFinalized { session_id: Uuid, at: DateTime<Utc> },
    JobUpdated(Job),
    ReportStored(ReportRecord),
    SessionAnalyzed { session_id: Uuid },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub users: BTreeMap<Uuid, UserAccount>,
    pub patients: BTreeMap<Uuid, Patient>,
    pub pairings: BTreeMap<Uuid, Pairing>,
    pub sessions: BTreeMap<Uuid, SessionMeta>,
    pub jobs: BTreeMap<Uuid, Job>,
    pub reports: BTreeMap<(Uuid, ReportKind), ReportRecord>,
    /// (foot, seq) of every stored frame, for sessions that still accept frames.
    pub seen: HashMap<Uuid, HashSet<(FootSide, u32)>>,
}

impl State {
    pub fn apply(&mut self, rec: &CatalogRecord) {
        match rec {
            CatalogRecord::UserCreated(u) => {
                self.users.insert(u.user_id, u.clone());
            }
            CatalogRecord::PatientCreated(p) => {
                self.patients.insert(p.patient_id, p.clone());
            }
            CatalogRecord::PairingCreated(p) => {
                self.pairings.insert(p.pairing_id, p.clone());
            }
            CatalogRecord::PairingDeactivated { pairing_id } => {
                if let Some(p) = self.pairings.get_mut(pairing_id) {
                    p.active = false;
                }
            }
            CatalogRecord::SessionCreated(s) => {
                self.sessions.insert(s.session_id, s.clone());
            }
            CatalogRecord::BatchAppended { session_id, blob, left, right } => {
                if let Some(s) = self.sessions.get_mut(session_id) {
                    s.frames_left += left;
                    s.frames_right += right;
                    s.batches.push(blob.clone());
                }
            }
            CatalogRecord::SessionFinalized { session_id, .. } => {
                if let Some(s) = self.sessions.get_mut(session_id) {
                    s.status = SessionStatus::Finalized;
                }
                self.seen.remove(session_id);
            }
            CatalogRecord::JobUpdated(j) => {
                self.jobs.insert(j.job_id, j.clone());
            }
            CatalogRecord::ReportStored(r) => {
                self.reports.insert((r.session_id, r.kind), r.clone());
            }
            CatalogRecord::SessionAnalyzed { session_id } => {
                if let Some(s) = self.sessions.get_mut(session_id) {
                    s.status = SessionStatus::Analyzed;
                }
            }
        }
    }

    /// A minimal record sequence that replays into this state, minus the dedup sets.
    pub fn snapshot(&self) -> Vec<CatalogRecord> {
        let mut out = Vec::new();
        out.extend(self.users.values().cloned().map(CatalogRecord::UserCreated));
        out.extend(self.patients.values().cloned().map(CatalogRecord::PatientCreated));
        out.extend(self.pairings.values().cloned().map(CatalogRecord::PairingCreated));
        out.extend(self.sessions.values().cloned().map(CatalogRecord::SessionCreated));
        out.extend(self.jobs.values().cloned().map(CatalogRecord::JobUpdated));
        out.extend(self.reports.values().cloned().map(CatalogRecord::ReportStored));
        out
    }

    pub fn user_by_name(&self, username: &str) -> Option<&UserAccount> {
        self.users.values().find(|u| u.username == username)
    }

    pub fn active_pairing_of(&self, patient_id: Uuid) -> Option<&Pairing> {
        self.pairings.values().find(|p| p.patient_id == patient_id && p.active)
    }

    /// The job of a session for one engine version.
    pub fn job_for(&self, session_id: Uuid, engine_version: &str) -> Option<&Job> {
        self.jobs.values().find(|j| j.session_id == session_id && j.engine_version == engine_version)
    }
}
