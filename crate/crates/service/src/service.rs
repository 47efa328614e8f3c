//! Service operations over the catalog, and the staged analysis scheduler.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, Utc};
use insole_core::decision::placeholder_models;
use insole_core::ingest::{parse_packet, serialize, PACKET_LEN};
use insole_core::model::{
    default_layout, validate_frame, FootSide, Pairing, SensorFrame, SessionStatus, SessionType, WalkSpeed,
};
use insole_core::report::{
    analysis_report, assessment_report, curate_session, raw_report, run_pipeline, wants_assessment, PipelineConfig,
    PipelineError, PipelineOutput, RawSensorPayload, ReportKind, ENGINE_VERSION, SCHEMA_VERSION,
};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::auth::{
    hash_credential, new_token, scopes_for, verify_credential, AuthToken, LoginLimiter, Role, Scope, TokenStore,
};
use crate::catalog::{CatalogRecord, Job, JobState, Patient, ReportRecord, SessionMeta, Stage, State, UserAccount};
use crate::clock::Clock;
use crate::error::ApiError;
use crate::store::{self, BlobStore, Catalog, StoreError};

pub const MAX_BATCH_FRAMES: usize = 10_000;
pub const PAGE_SIZE: usize = 100;
pub const MAX_RETRIES: u32 = 3;

/// Called before each stage attempt; an error fails the attempt.
pub type StageHook = Arc<dyn Fn(Uuid, Stage) -> Result<(), String> + Send + Sync>;

#[derive(Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub token_ttl: Duration,
    pub workers: usize,
    pub pipeline: PipelineConfig,
    /// Account created on first start when no user of that name exists.
    pub admin: Option<(String, String)>,
    /// First retry delay; later retries double it.
    pub retry_base: StdDuration,
    pub stage_hook: Option<StageHook>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            token_ttl: Duration::hours(24),
            workers: 2,
            pipeline: PipelineConfig::new(default_layout(), Some(placeholder_models())),
            admin: None,
            retry_base: StdDuration::from_millis(100),
            stage_hook: None,
        }
    }
}

/// The authenticated caller.
#[derive(Debug, Clone)]
pub struct Principal {
    pub user_id: Uuid,
    pub username: String,
    pub role: Role,
    pub patient_id: Option<Uuid>,
    pub scopes: Vec<Scope>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenResponse {
    pub token: String,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewUser {
    pub username: String,
    pub credential: String,
    pub role: Role,
    #[serde(default)]
    pub patient_id: Option<Uuid>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserView {
    pub user_id: Uuid,
    pub username: String,
    pub role: Role,
    pub patient_id: Option<Uuid>,
    pub created_at: DateTime<Utc>,
}

impl From<&UserAccount> for UserView {
    fn from(u: &UserAccount) -> Self {
        UserView {
            user_id: u.user_id,
            username: u.username.clone(),
            role: u.role,
            patient_id: u.patient_id,
            created_at: u.created_at,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewPatient {
    pub display_name: String,
    #[serde(default)]
    pub clinician_id: Option<Uuid>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewPairing {
    pub patient_id: Uuid,
    pub insole_model_id: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewSession {
    pub patient_id: Uuid,
    pub pairing_id: Uuid,
    #[serde(rename = "type")]
    pub session_type: String,
    #[serde(default)]
    pub speed: Option<WalkSpeed>,
    #[serde(default)]
    pub started_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: Uuid,
    pub patient_id: Uuid,
    pub pairing_id: Uuid,
    pub session_type: SessionType,
    pub started_at: DateTime<Utc>,
    pub sample_rate_hz: f64,
    pub status: SessionStatus,
    pub frames_left: u64,
    pub frames_right: u64,
}

impl From<&SessionMeta> for SessionView {
    fn from(s: &SessionMeta) -> Self {
        SessionView {
            session_id: s.session_id,
            patient_id: s.patient_id,
            pairing_id: s.pairing_id,
            session_type: s.session_type,
            started_at: s.started_at,
            sample_rate_hz: s.sample_rate_hz,
            status: s.status,
            frames_left: s.frames_left,
            frames_right: s.frames_right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResult {
    pub accepted: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalizeResult {
    pub session_id: Uuid,
    pub job_id: Uuid,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, Default)]
pub struct SessionQuery {
    pub patient: Option<Uuid>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub page: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionPage {
    pub sessions: Vec<SessionView>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

/// Channel selection for the raw report.
#[derive(Debug, Clone, Default)]
pub struct RawSelection {
    pub foot: Option<FootSide>,
    pub sensors: Option<Vec<usize>>,
}

enum Msg {
    Run(Uuid),
    Stop,
}

struct Inner {
    catalog: Catalog,
    state: State,
}

pub struct Service {
    inner: Mutex<Inner>,
    blobs: BlobStore,
    session_locks: Mutex<HashMap<Uuid, Arc<Mutex<()>>>>,
    tokens: TokenStore,
    limiter: LoginLimiter,
    clock: Arc<dyn Clock>,
    cfg: ServiceConfig,
    queue: Mutex<mpsc::Sender<Msg>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    /// Verified against when the username is unknown, so both paths cost the same.
    dummy_hash: String,
}

fn analysis_kind(t: SessionType) -> ReportKind {
    if t.is_walking() {
        ReportKind::WalkingSummary
    } else {
        ReportKind::Balance
    }
}

fn applies(t: SessionType, kind: ReportKind) -> bool {
    match kind {
        ReportKind::RawSensor => true,
        ReportKind::WalkingSummary => t.is_walking(),
        ReportKind::Balance => !t.is_walking(),
        ReportKind::AiAssessment => wants_assessment(t),
    }
}

fn parse_session_type(name: &str, speed: Option<WalkSpeed>) -> Result<SessionType, ApiError> {
    Ok(match name {
        "walk10m" => SessionType::Walk10m { speed: speed.unwrap_or(WalkSpeed::Normal) },
        "free_walk" => SessionType::FreeWalk,
        "tug" => SessionType::Tug,
        "standing_balance" => SessionType::StandingBalance,
        other => return Err(ApiError::Invalid(format!("unknown session type {other}"))),
    })
}

/// Frames of a packed batch blob.
pub fn decode_batch(bytes: &[u8]) -> Result<Vec<SensorFrame>, String> {
    if !bytes.len().is_multiple_of(PACKET_LEN) {
        return Err(format!("batch blob length {} is not a multiple of {PACKET_LEN}", bytes.len()));
    }
    bytes.chunks(PACKET_LEN).map(|p| parse_packet(p).map_err(|e| e.to_string())).collect()
}

impl Service {
    /// Opens the store, replays the catalog, and starts the workers. Jobs left queued
    /// or running by a previous process are picked up again.
    pub fn open(cfg: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Arc<Service>, StoreError> {
        let (catalog, blobs, records) = store::open(&cfg.data_dir)?;
        let mut state = State::default();
        for r in &records {
            state.apply(r);
        }
        for s in state.sessions.values() {
            let mut seen = HashSet::new();
            for hash in &s.batches {
                let bytes = blobs.get_blob(hash)?;
                if s.status == SessionStatus::Open {
                    let frames = decode_batch(&bytes).map_err(|_| StoreError::CorruptBlob(hash.clone()))?;
                    seen.extend(frames.iter().map(|f| (f.foot, f.seq)));
                }
            }
            if s.status == SessionStatus::Open {
                state.seen.insert(s.session_id, seen);
            }
        }
        for r in state.reports.values() {
            if !blobs.blob_path(&r.payload).exists() {
                return Err(StoreError::MissingBlob(r.payload.clone()));
            }
        }
        let pending: Vec<Uuid> = state
            .jobs
            .values()
            .filter(|j| matches!(j.state, JobState::Queued | JobState::Running))
            .map(|j| j.job_id)
            .collect();

        let (tx, rx) = mpsc::channel();
        let svc = Arc::new(Service {
            inner: Mutex::new(Inner { catalog, state }),
            blobs,
            session_locks: Mutex::new(HashMap::new()),
            tokens: TokenStore::default(),
            limiter: LoginLimiter::default(),
            dummy_hash: hash_credential("not a credential"),
            clock,
            queue: Mutex::new(tx),
            workers: Mutex::new(Vec::new()),
            cfg,
        });
        if let Some((name, credential)) = svc.cfg.admin.clone() {
            svc.bootstrap_admin(&name, &credential)?;
        }
        let rx = Arc::new(Mutex::new(rx));
        let mut handles = Vec::new();
        for _ in 0..svc.cfg.workers.max(1) {
            let (svc, rx) = (svc.clone(), rx.clone());
            handles.push(std::thread::spawn(move || loop {
                let msg = rx.lock().unwrap().recv();
                match msg {
                    Ok(Msg::Run(job_id)) => svc.run_job(job_id),
                    Ok(Msg::Stop) | Err(_) => break,
                }
            }));
        }
        *svc.workers.lock().unwrap() = handles;
        for job_id in pending {
            svc.enqueue(job_id);
        }
        Ok(svc)
    }

    /// Stops the workers after their current job. Unfinished jobs stay persisted.
    pub fn shutdown(&self) {
        let handles = std::mem::take(&mut *self.workers.lock().unwrap());
        {
            let q = self.queue.lock().unwrap();
            for _ in &handles {
                let _ = q.send(Msg::Stop);
            }
        }
        for h in handles {
            let _ = h.join();
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn enqueue(&self, job_id: Uuid) {
        let _ = self.queue.lock().unwrap().send(Msg::Run(job_id));
    }

    fn commit(inner: &mut Inner, rec: CatalogRecord) -> Result<(), StoreError> {
        inner.catalog.append(&rec)?;
        inner.state.apply(&rec);
        Ok(())
    }

    fn session_lock(&self, id: Uuid) -> Arc<Mutex<()>> {
        self.session_locks.lock().unwrap().entry(id).or_default().clone()
    }

    fn bootstrap_admin(&self, username: &str, credential: &str) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.state.user_by_name(username).is_some() {
            return Ok(());
        }
        let user = UserAccount {
            user_id: Uuid::new_v4(),
            username: username.into(),
            role: Role::Admin,
            credential_hash: hash_credential(credential),
            created_at: self.now(),
            patient_id: None,
        };
        Self::commit(&mut inner, CatalogRecord::UserCreated(user))
    }

    // ---- authentication ----

    pub fn issue_token(&self, username: &str, credential: &str) -> Result<TokenResponse, ApiError> {
        let now = self.now();
        if self.limiter.is_limited(username, now) {
            return Err(ApiError::RateLimited);
        }
        let user = self.inner.lock().unwrap().state.user_by_name(username).cloned();
        let hash = user.as_ref().map_or(self.dummy_hash.as_str(), |u| u.credential_hash.as_str());
        let ok = verify_credential(credential, hash) && user.is_some();
        let Some(user) = user.filter(|_| ok) else {
            self.limiter.record_failure(username, now);
            return Err(ApiError::InvalidCredentials);
        };
        let token = AuthToken {
            token: new_token(),
            user_id: user.user_id,
            expires_at: now + self.cfg.token_ttl,
            scopes: scopes_for(user.role),
        };
        let out = TokenResponse { token: token.token.clone(), expires_at: token.expires_at };
        self.tokens.insert(token);
        Ok(out)
    }

    pub fn authenticate(&self, token: &str) -> Result<Principal, ApiError> {
        let t = self.tokens.check(token, self.now()).ok_or(ApiError::Unauthorized)?;
        let inner = self.inner.lock().unwrap();
        let u = inner.state.users.get(&t.user_id).ok_or(ApiError::Unauthorized)?;
        Ok(Principal {
            user_id: u.user_id,
            username: u.username.clone(),
            role: u.role,
            patient_id: u.patient_id,
            scopes: t.scopes,
        })
    }

    fn may_access(p: &Principal, patient: &Patient) -> bool {
        match p.role {
            Role::Admin => true,
            Role::Clinician => patient.clinician_id == Some(p.user_id),
            Role::Patient => p.patient_id == Some(patient.patient_id),
        }
    }

    fn check_patient<'a>(state: &'a State, p: &Principal, patient_id: Uuid) -> Result<&'a Patient, ApiError> {
        let patient = state.patients.get(&patient_id).ok_or(ApiError::NotFound("patient"))?;
        if Self::may_access(p, patient) {
            Ok(patient)
        } else {
            Err(ApiError::Forbidden)
        }
    }

    fn check_session<'a>(state: &'a State, p: &Principal, id: Uuid) -> Result<&'a SessionMeta, ApiError> {
        let s = state.sessions.get(&id).ok_or(ApiError::NotFound("session"))?;
        Self::check_patient(state, p, s.patient_id)?;
        Ok(s)
    }

    // ---- accounts and patients ----

    pub fn create_user(&self, p: &Principal, req: NewUser) -> Result<UserView, ApiError> {
        if p.role != Role::Admin {
            return Err(ApiError::Forbidden);
        }
        if req.username.is_empty() || req.credential.is_empty() {
            return Err(ApiError::Invalid("username and credential must be non-empty".into()));
        }
        let credential_hash = hash_credential(&req.credential);
        let mut inner = self.inner.lock().unwrap();
        if inner.state.user_by_name(&req.username).is_some() {
            return Err(ApiError::UsernameTaken);
        }
        match (req.role, req.patient_id) {
            (Role::Patient, Some(pid)) if inner.state.patients.contains_key(&pid) => {}
            (Role::Patient, _) => return Err(ApiError::Invalid("patient accounts need an existing patient_id".into())),
            (_, Some(_)) => return Err(ApiError::Invalid("only patient accounts carry a patient_id".into())),
            (_, None) => {}
        }
        let user = UserAccount {
            user_id: Uuid::new_v4(),
            username: req.username,
            role: req.role,
            credential_hash,
            created_at: self.now(),
            patient_id: req.patient_id,
        };
        let view = UserView::from(&user);
        Self::commit(&mut inner, CatalogRecord::UserCreated(user))?;
        Ok(view)
    }

    pub fn list_users(&self, p: &Principal) -> Result<Vec<UserView>, ApiError> {
        if p.role != Role::Admin {
            return Err(ApiError::Forbidden);
        }
        Ok(self.inner.lock().unwrap().state.users.values().map(UserView::from).collect())
    }

    pub fn create_patient(&self, p: &Principal, req: NewPatient) -> Result<Patient, ApiError> {
        let mut inner = self.inner.lock().unwrap();
        let clinician_id = match p.role {
            Role::Clinician => Some(p.user_id),
            Role::Admin => {
                if let Some(c) = req.clinician_id {
                    if inner.state.users.get(&c).map(|u| u.role) != Some(Role::Clinician) {
                        return Err(ApiError::Invalid("clinician_id is not a clinician account".into()));
                    }
                }
                req.clinician_id
            }
            Role::Patient => return Err(ApiError::Forbidden),
        };
        let patient = Patient {
            patient_id: Uuid::new_v4(),
            display_name: req.display_name,
            clinician_id,
            created_at: self.now(),
        };
        Self::commit(&mut inner, CatalogRecord::PatientCreated(patient.clone()))?;
        Ok(patient)
    }

    pub fn list_patients(&self, p: &Principal) -> Vec<Patient> {
        let inner = self.inner.lock().unwrap();
        inner.state.patients.values().filter(|x| Self::may_access(p, x)).cloned().collect()
    }

    /// A new pairing replaces the patient's active one.
    pub fn create_pairing(&self, p: &Principal, req: NewPairing) -> Result<Pairing, ApiError> {
        let mut inner = self.inner.lock().unwrap();
        Self::check_patient(&inner.state, p, req.patient_id)?;
        if let Some(old) = inner.state.active_pairing_of(req.patient_id).map(|x| x.pairing_id) {
            Self::commit(&mut inner, CatalogRecord::PairingDeactivated { pairing_id: old })?;
        }
        let pairing = Pairing {
            pairing_id: Uuid::new_v4(),
            patient_id: req.patient_id,
            insole_model_id: req.insole_model_id,
            active: true,
        };
        Self::commit(&mut inner, CatalogRecord::PairingCreated(pairing.clone()))?;
        Ok(pairing)
    }

    pub fn deactivate_pairing(&self, p: &Principal, pairing_id: Uuid) -> Result<Pairing, ApiError> {
        let mut inner = self.inner.lock().unwrap();
        let pairing = inner.state.pairings.get(&pairing_id).cloned().ok_or(ApiError::NotFound("pairing"))?;
        Self::check_patient(&inner.state, p, pairing.patient_id)?;
        if pairing.active {
            Self::commit(&mut inner, CatalogRecord::PairingDeactivated { pairing_id })?;
        }
        Ok(Pairing { active: false, ..pairing })
    }

    pub fn list_pairings(&self, p: &Principal, patient: Option<Uuid>) -> Result<Vec<Pairing>, ApiError> {
        let inner = self.inner.lock().unwrap();
        if let Some(pid) = patient {
            Self::check_patient(&inner.state, p, pid)?;
        }
        Ok(inner
            .state
            .pairings
            .values()
            .filter(|x| patient.is_none_or(|pid| x.patient_id == pid))
            .filter(|x| inner.state.patients.get(&x.patient_id).is_some_and(|pt| Self::may_access(p, pt)))
            .cloned()
            .collect())
    }

    // ---- sessions ----

    pub fn create_session(&self, p: &Principal, req: NewSession) -> Result<SessionView, ApiError> {
        let session_type = parse_session_type(&req.session_type, req.speed)?;
        let mut inner = self.inner.lock().unwrap();
        Self::check_patient(&inner.state, p, req.patient_id)?;
        match inner.state.pairings.get(&req.pairing_id) {
            Some(x) if x.active && x.patient_id == req.patient_id => {}
            _ => return Err(ApiError::UnknownPairing),
        }
        let meta = SessionMeta {
            session_id: Uuid::new_v4(),
            patient_id: req.patient_id,
            pairing_id: req.pairing_id,
            session_type,
            started_at: req.started_at.unwrap_or_else(|| self.now()),
            sample_rate_hz: self.cfg.pipeline.sample_rate_hz,
            status: SessionStatus::Open,
            frames_left: 0,
            frames_right: 0,
            batches: Vec::new(),
        };
        let view = SessionView::from(&meta);
        inner.state.seen.insert(meta.session_id, HashSet::new());
        Self::commit(&mut inner, CatalogRecord::SessionCreated(meta))?;
        Ok(view)
    }

    pub fn get_session(&self, p: &Principal, id: Uuid) -> Result<SessionView, ApiError> {
        let inner = self.inner.lock().unwrap();
        Ok(SessionView::from(Self::check_session(&inner.state, p, id)?))
    }

    /// Stores the frames not seen before, keyed by (foot, seq). A retried batch is
    /// accepted as all duplicates. Frames are kept in the quantized wire format.
    pub fn ingest(&self, p: &Principal, id: Uuid, frames: &[SensorFrame]) -> Result<IngestResult, ApiError> {
        if frames.len() > MAX_BATCH_FRAMES {
            return Err(ApiError::PayloadTooLarge(frames.len(), MAX_BATCH_FRAMES));
        }
        for (i, f) in frames.iter().enumerate() {
            if let Some(v) = validate_frame(f).violations.first() {
                return Err(ApiError::Invalid(format!("frame {i}: {v}")));
            }
        }
        let lock = self.session_lock(id);
        let _guard = lock.lock().unwrap();
        let mut packets = Vec::new();
        let mut keys = Vec::new();
        let (mut left, mut right, mut duplicates) = (0u64, 0u64, 0usize);
        {
            let inner = self.inner.lock().unwrap();
            let s = Self::check_session(&inner.state, p, id)?;
            if s.status != SessionStatus::Open {
                return Err(ApiError::SessionFinalized);
            }
            let seen = inner.state.seen.get(&id);
            let mut fresh = HashSet::new();
            for f in frames {
                let key = (f.foot, f.seq);
                if seen.is_some_and(|s| s.contains(&key)) || !fresh.insert(key) {
                    duplicates += 1;
                    continue;
                }
                packets.extend_from_slice(&serialize(f));
                keys.push(key);
                match f.foot {
                    FootSide::Left => left += 1,
                    FootSide::Right => right += 1,
                }
            }
        }
        if keys.is_empty() {
            return Ok(IngestResult { accepted: 0, duplicates });
        }
        let blob = self.blobs.put_blob(&packets)?;
        let mut inner = self.inner.lock().unwrap();
        Self::commit(&mut inner, CatalogRecord::BatchAppended { session_id: id, blob, left, right })?;
        inner.state.seen.entry(id).or_default().extend(keys.iter().copied());
        Ok(IngestResult { accepted: keys.len(), duplicates })
    }

    /// Closes the session and schedules its analysis job, exactly once.
    pub fn finalize(&self, p: &Principal, id: Uuid) -> Result<FinalizeResult, ApiError> {
        let lock = self.session_lock(id);
        let _guard = lock.lock().unwrap();
        let job_id = {
            let mut inner = self.inner.lock().unwrap();
            let s = Self::check_session(&inner.state, p, id)?;
            if s.status != SessionStatus::Open {
                return Err(ApiError::AlreadyFinalized);
            }
            if s.frames_left == 0 || s.frames_right == 0 {
                return Err(ApiError::EmptySession);
            }
            let now = self.now();
            Self::commit(&mut inner, CatalogRecord::SessionFinalized { session_id: id, at: now })?;
            if let Some(j) = inner.state.job_for(id, ENGINE_VERSION) {
                j.job_id
            } else {
                let job = Job {
                    job_id: Uuid::new_v4(),
                    session_id: id,
                    engine_version: ENGINE_VERSION.into(),
                    state: JobState::Queued,
                    attempts: 0,
                    stages_done: Vec::new(),
                    skipped: BTreeMap::new(),
                    last_error: None,
                    updated_at: now,
                };
                let job_id = job.job_id;
                Self::commit(&mut inner, CatalogRecord::JobUpdated(job))?;
                job_id
            }
        };
        self.enqueue(job_id);
        Ok(FinalizeResult { session_id: id, job_id, status: SessionStatus::Finalized })
    }

    /// Sessions of accessible patients with `from <= started_at <= to`, newest first.
    pub fn list_sessions(&self, p: &Principal, q: &SessionQuery) -> Result<SessionPage, ApiError> {
        let inner = self.inner.lock().unwrap();
        if let Some(pid) = q.patient {
            Self::check_patient(&inner.state, p, pid)?;
        }
        let mut hits: Vec<&SessionMeta> = inner
            .state
            .sessions
            .values()
            .filter(|s| q.patient.is_none_or(|pid| s.patient_id == pid))
            .filter(|s| q.from.is_none_or(|t| s.started_at >= t) && q.to.is_none_or(|t| s.started_at <= t))
            .filter(|s| inner.state.patients.get(&s.patient_id).is_some_and(|pt| Self::may_access(p, pt)))
            .collect();
        hits.sort_by(|a, b| b.started_at.cmp(&a.started_at).then(a.session_id.cmp(&b.session_id)));
        let total = hits.len();
        let sessions = hits.into_iter().skip(q.page * PAGE_SIZE).take(PAGE_SIZE).map(SessionView::from).collect();
        Ok(SessionPage { sessions, page: q.page, page_size: PAGE_SIZE, total })
    }

    pub fn get_job(&self, p: &Principal, job_id: Uuid) -> Result<Job, ApiError> {
        let inner = self.inner.lock().unwrap();
        let job = inner.state.jobs.get(&job_id).ok_or(ApiError::NotFound("job"))?;
        Self::check_session(&inner.state, p, job.session_id)?;
        Ok(job.clone())
    }

    // ---- reports ----

    /// The stored payload, or for the raw report with a selection, the selected series.
    pub fn get_report(&self, p: &Principal, id: Uuid, route: &str, sel: &RawSelection) -> Result<Vec<u8>, ApiError> {
        let kind = ReportKind::from_route(route).ok_or_else(|| ApiError::UnknownKind(route.into()))?;
        if kind != ReportKind::RawSensor && (sel.foot.is_some() || sel.sensors.is_some()) {
            return Err(ApiError::Invalid("channel selection applies to the raw report only".into()));
        }
        let record = {
            let inner = self.inner.lock().unwrap();
            let s = Self::check_session(&inner.state, p, id)?;
            match inner.state.reports.get(&(id, kind)) {
                Some(r) => r.clone(),
                None => {
                    if !applies(s.session_type, kind) {
                        return Err(ApiError::NotAvailable(format!(
                            "no {} report for this session type",
                            kind.as_str()
                        )));
                    }
                    let job = inner.state.job_for(id, ENGINE_VERSION);
                    if let Some(reason) = job.and_then(|j| j.skipped.get(&kind)) {
                        return Err(ApiError::NotAvailable(reason.clone()));
                    }
                    if let Some(j) = job.filter(|j| j.state == JobState::Failed) {
                        return Err(ApiError::NotAvailable(format!(
                            "analysis failed: {}",
                            j.last_error.as_deref().unwrap_or("unknown error")
                        )));
                    }
                    return Err(ApiError::NotReady);
                }
            }
        };
        let bytes = self.blobs.get_blob(&record.payload)?;
        if kind != ReportKind::RawSensor || (sel.foot.is_none() && sel.sensors.is_none()) {
            return Ok(bytes);
        }
        let foot = sel.foot.ok_or_else(|| ApiError::Invalid("sensors selection needs a foot".into()))?;
        let sensors: Vec<usize> =
            sel.sensors.clone().unwrap_or_else(|| (0..insole_core::model::SENSOR_COUNT).collect());
        let payload: RawSensorPayload =
            serde_json::from_slice(&bytes).map_err(|e| ApiError::Internal(format!("stored raw report: {e}")))?;
        let projection = payload.project(foot, &sensors).map_err(|e| ApiError::Invalid(e.to_string()))?;
        serde_json::to_vec(&projection).map_err(|e| ApiError::Internal(e.to_string()))
    }

    /// Stored payload bytes by kind, without access checks.
    pub fn stored_report(&self, id: Uuid, kind: ReportKind) -> Result<Option<Vec<u8>>, StoreError> {
        let hash = self.inner.lock().unwrap().state.reports.get(&(id, kind)).map(|r| r.payload.clone());
        hash.map(|h| self.blobs.get_blob(&h)).transpose()
    }

    pub fn report_record(&self, id: Uuid, kind: ReportKind) -> Option<ReportRecord> {
        self.inner.lock().unwrap().state.reports.get(&(id, kind)).cloned()
    }

    pub fn session_frames(&self, id: Uuid) -> Result<Vec<SensorFrame>, String> {
        let batches = {
            let inner = self.inner.lock().unwrap();
            inner.state.sessions.get(&id).ok_or("unknown session")?.batches.clone()
        };
        let mut frames = Vec::new();
        for h in &batches {
            frames.extend(decode_batch(&self.blobs.get_blob(h).map_err(|e| e.to_string())?)?);
        }
        Ok(frames)
    }

    /// Recomputes every report of a session from its stored frames.
    pub fn reanalyze(&self, id: Uuid) -> Result<PipelineOutput, String> {
        let session_type = {
            let inner = self.inner.lock().unwrap();
            inner.state.sessions.get(&id).ok_or("unknown session")?.session_type
        };
        let frames = self.session_frames(id)?;
        run_pipeline(session_type, &frames, &self.cfg.pipeline).map_err(|e| e.to_string())
    }

    /// A copy of the replayed state, for inspection.
    pub fn state(&self) -> State {
        self.inner.lock().unwrap().state.clone()
    }

    /// Rewrites the catalog to the minimal records of the current state.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let records = inner.state.snapshot();
        inner.catalog.rotate(&records)
    }

    // ---- scheduler ----

    fn update_job(&self, job: &mut Job, f: impl FnOnce(&mut Job)) -> Result<(), StoreError> {
        f(job);
        job.updated_at = self.now();
        let mut inner = self.inner.lock().unwrap();
        Self::commit(&mut inner, CatalogRecord::JobUpdated(job.clone()))
    }

    fn run_job(&self, job_id: Uuid) {
        let Some(mut job) = self.inner.lock().unwrap().state.jobs.get(&job_id).cloned() else {
            return;
        };
        if matches!(job.state, JobState::Done | JobState::Failed) {
            return;
        }
        let mut retry = 0;
        loop {
            if let Err(e) = self.update_job(&mut job, |j| {
                j.state = JobState::Running;
                j.attempts += 1;
            }) {
                tracing::error!(%job_id, "cannot persist job state: {e}");
                return;
            }
            match self.run_stages(&mut job) {
                Ok(()) => {
                    let done = self.update_job(&mut job, |j| {
                        j.state = JobState::Done;
                        j.last_error = None;
                    });
                    let mut inner = self.inner.lock().unwrap();
                    let finalized =
                        inner.state.sessions.get(&job.session_id).map(|s| s.status) == Some(SessionStatus::Finalized);
                    if done.is_ok() && finalized {
                        let rec = CatalogRecord::SessionAnalyzed { session_id: job.session_id };
                        if let Err(e) = Self::commit(&mut inner, rec) {
                            tracing::error!(%job_id, "cannot mark session analyzed: {e}");
                        }
                    }
                    return;
                }
                Err(e) if retry < MAX_RETRIES => {
                    tracing::warn!(%job_id, attempt = retry + 1, "analysis stage failed: {e}");
                    let _ = self.update_job(&mut job, |j| {
                        j.state = JobState::Queued;
                        j.last_error = Some(e);
                    });
                    std::thread::sleep(self.cfg.retry_base * 2u32.pow(retry));
                    retry += 1;
                }
                Err(e) => {
                    tracing::error!(%job_id, "analysis failed: {e}");
                    let _ = self.update_job(&mut job, |j| {
                        j.state = JobState::Failed;
                        j.last_error = Some(e);
                    });
                    return;
                }
            }
        }
    }

    fn has_report(&self, id: Uuid, kind: ReportKind) -> bool {
        self.inner.lock().unwrap().state.reports.contains_key(&(id, kind))
    }

    fn store_report(&self, job: &Job, kind: ReportKind, json: &str) -> Result<(), StoreError> {
        let payload = self.blobs.put_blob(json.as_bytes())?;
        let mut engine_versions = BTreeMap::from([
            ("insole-core".to_string(), job.engine_version.clone()),
            ("schema".to_string(), SCHEMA_VERSION.to_string()),
        ]);
        if kind == ReportKind::AiAssessment {
            if let Some((screen, forest)) = &self.cfg.pipeline.models {
                engine_versions.insert(screen.model_id.clone(), screen.version.clone());
                engine_versions.insert(forest.model_id.clone(), forest.version.clone());
            }
        }
        let rec = ReportRecord {
            report_id: Uuid::new_v4(),
            session_id: job.session_id,
            kind,
            payload,
            generated_at: self.now(),
            engine_versions,
        };
        let mut inner = self.inner.lock().unwrap();
        Self::commit(&mut inner, CatalogRecord::ReportStored(rec))
    }

    fn finish_stage(&self, job: &mut Job, stage: Stage, skip: Option<(ReportKind, String)>) -> Result<(), String> {
        if skip.is_none() && job.stages_done.contains(&stage) {
            return Ok(());
        }
        self.update_job(job, |j| {
            if let Some((kind, reason)) = skip {
                j.skipped.insert(kind, reason);
            }
            if !j.stages_done.contains(&stage) {
                j.stages_done.push(stage);
            }
        })
        .map_err(|e| e.to_string())
    }

    fn hook(&self, job: &Job, stage: Stage) -> Result<(), String> {
        match &self.cfg.stage_hook {
            Some(h) => h(job.session_id, stage),
            None => Ok(()),
        }
    }

    /// Curation, then gait or balance analysis, then the model assessment. A stage whose
    /// outcome is already recorded is not run again.
    fn run_stages(&self, job: &mut Job) -> Result<(), String> {
        let id = job.session_id;
        let session_type = {
            let inner = self.inner.lock().unwrap();
            inner.state.sessions.get(&id).ok_or("session vanished")?.session_type
        };
        let cfg = &self.cfg.pipeline;
        let pipe = |e: PipelineError| e.to_string();
        let store = |e: StoreError| e.to_string();
        let kind = analysis_kind(session_type);
        let analysis_pending = !self.has_report(id, kind) && !job.skipped.contains_key(&kind);

        if !self.has_report(id, ReportKind::RawSensor) || analysis_pending {
            let frames = self.session_frames(id)?;
            let segments = curate_session(session_type, &frames, cfg.sample_rate_hz).map_err(pipe)?;
            if !self.has_report(id, ReportKind::RawSensor) {
                self.hook(job, Stage::Curate)?;
                self.store_report(job, ReportKind::RawSensor, &raw_report(&segments, cfg).map_err(pipe)?)
                    .map_err(store)?;
            }
            self.finish_stage(job, Stage::Curate, None)?;
            if analysis_pending {
                self.hook(job, Stage::Analyze)?;
                match analysis_report(session_type, &segments, cfg).map_err(pipe)? {
                    Ok((k, json)) => {
                        self.store_report(job, k, &json).map_err(store)?;
                        self.finish_stage(job, Stage::Analyze, None)?;
                    }
                    Err(reason) => self.finish_stage(job, Stage::Analyze, Some((kind, reason)))?,
                }
            }
        }
        self.finish_stage(job, Stage::Analyze, None)?;

        if wants_assessment(session_type)
            && !self.has_report(id, ReportKind::AiAssessment)
            && !job.skipped.contains_key(&ReportKind::AiAssessment)
        {
            self.hook(job, Stage::Assess)?;
            let skip = match self.stored_report(id, ReportKind::WalkingSummary).map_err(store)? {
                Some(walking) => {
                    let walking = String::from_utf8(walking).map_err(|e| e.to_string())?;
                    match assessment_report(&walking, cfg).map_err(pipe)? {
                        Ok(json) => {
                            self.store_report(job, ReportKind::AiAssessment, &json).map_err(store)?;
                            None
                        }
                        Err(reason) => Some(reason),
                    }
                }
                None => Some("no walking summary".to_string()),
            };
            self.finish_stage(job, Stage::Assess, skip.map(|r| (ReportKind::AiAssessment, r)))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_type_names_parse() {
        assert_eq!(parse_session_type("walk10m", None).unwrap(), SessionType::Walk10m { speed: WalkSpeed::Normal });
        assert_eq!(
            parse_session_type("walk10m", Some(WalkSpeed::High)).unwrap(),
            SessionType::Walk10m { speed: WalkSpeed::High }
        );
        assert_eq!(parse_session_type("standing_balance", None).unwrap(), SessionType::StandingBalance);
        assert!(parse_session_type("jog", None).is_err());
    }

    #[test]
    fn report_kinds_follow_session_type() {
        let walk = SessionType::Walk10m { speed: WalkSpeed::Normal };
        assert!(applies(walk, ReportKind::AiAssessment));
        assert!(!applies(walk, ReportKind::Balance));
        assert!(!applies(SessionType::FreeWalk, ReportKind::AiAssessment));
        assert!(applies(SessionType::StandingBalance, ReportKind::Balance));
        assert!(!applies(SessionType::StandingBalance, ReportKind::WalkingSummary));
    }
}
