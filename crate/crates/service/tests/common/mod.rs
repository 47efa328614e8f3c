#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use gaitsim::ApiClient;
use insole_core::model::SensorFrame;
use insole_core::sim::{generate_balance, generate_walk, BalanceGenParams, GaitGenParams};
use insole_service::{BackgroundServer, Clock, ManualClock, ServerConfig, ServiceConfig};
use uuid::Uuid;

pub const ADMIN: &str = "admin";
pub const ADMIN_PW: &str = "admin-credential";

pub fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub fn manual_clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap()))
}

pub fn config(dir: &Path) -> ServiceConfig {
    let mut cfg = ServiceConfig::new(dir);
    cfg.admin = Some((ADMIN.into(), ADMIN_PW.into()));
    cfg.retry_base = Duration::from_millis(5);
    cfg
}

pub fn serve(cfg: ServiceConfig, clock: Arc<dyn Clock>) -> BackgroundServer {
    BackgroundServer::start(ServerConfig { http_addr: local(), tcp_addr: Some(local()), service: cfg }, clock)
        .expect("server starts")
}

pub fn login(base: &str, user: &str, pw: &str) -> ApiClient {
    let mut c = ApiClient::new(base);
    c.login(user, pw).expect("login succeeds");
    c
}

/// An admin, a clinician with one patient and an active pairing, and that patient's account.
pub struct World {
    pub admin: ApiClient,
    pub clinician: ApiClient,
    pub clinician_id: Uuid,
    pub patient: Uuid,
    pub pairing: Uuid,
    pub patient_client: ApiClient,
}

pub fn world(base: &str) -> World {
    let admin = login(base, ADMIN, ADMIN_PW);
    let c = admin.create_user("dr-a", "pw-a", "clinician", None).unwrap();
    let clinician_id = Uuid::parse_str(c["user_id"].as_str().unwrap()).unwrap();
    let clinician = login(base, "dr-a", "pw-a");
    let patient = clinician.create_patient("P-001").unwrap();
    let pairing = clinician.create_pairing(patient, "insole-16").unwrap();
    admin.create_user("p-001", "pw-p", "patient", Some(patient)).unwrap();
    let patient_client = login(base, "p-001", "pw-p");
    World { admin, clinician, clinician_id, patient, pairing, patient_client }
}

pub fn walk_frames(duration_s: f64, seed: u64) -> Vec<SensorFrame> {
    let p = GaitGenParams { duration_s, rng_seed: seed, ..Default::default() };
    generate_walk(&p).unwrap().interleaved()
}

pub fn balance_frames(seed: u64) -> Vec<SensorFrame> {
    let g = generate_balance(&BalanceGenParams { rng_seed: seed, ..Default::default() }).unwrap();
    let mut all: Vec<SensorFrame> = g.left.into_iter().chain(g.right).collect();
    all.sort_by_key(|f| (f.t_ms, f.seq));
    all
}

pub fn post_all(c: &ApiClient, session: Uuid, frames: &[SensorFrame]) {
    for chunk in frames.chunks(1000) {
        let r = c.post_frames(session, chunk).unwrap();
        assert_eq!(r.status, 200, "{}", r.text());
    }
}

pub fn wait_done(c: &ApiClient, job: Uuid) -> serde_json::Value {
    c.wait_for_job(job, Duration::from_secs(60)).unwrap()
}
