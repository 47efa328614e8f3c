mod common;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use gaitsim::ApiClient;
use insole_core::ingest::serialize;
use insole_core::report::ReportKind;
use insole_service::catalog::{CatalogRecord, JobState};
use insole_service::service::decode_batch;
use insole_service::store::{self, StoreError, BLOB_DIR, CATALOG_FILE};
use insole_service::{Service, SystemClock};
use serde_json::Value;
use uuid::Uuid;

/// Complete catalog lines; a torn tail is ignored.
fn catalog(dir: &Path) -> Vec<CatalogRecord> {
    fs::read_to_string(dir.join(CATALOG_FILE))
        .unwrap()
        .split_inclusive('\n')
        .filter(|l| l.ends_with('\n'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Frames of a session recovered from the blobs its catalog entries reference.
fn frames_on_disk(dir: &Path, session: Uuid) -> usize {
    catalog(dir)
        .iter()
        .filter_map(|r| match r {
            CatalogRecord::BatchAppended { session_id, blob, .. } if *session_id == session => Some(blob.clone()),
            _ => None,
        })
        .map(|h| decode_batch(&fs::read(dir.join(BLOB_DIR).join(h)).unwrap()).unwrap().len())
        .sum()
}

fn stored_counts(dir: &Path, session: Uuid) -> Vec<(ReportKind, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for r in catalog(dir) {
        if let CatalogRecord::ReportStored(r) = r {
            if r.session_id == session {
                *counts.entry(r.kind).or_insert(0) += 1;
            }
        }
    }
    counts.into_iter().collect()
}

fn frame_count(c: &ApiClient, s: Uuid) -> u64 {
    let v = c.session(s).unwrap();
    v["frames_left"].as_u64().unwrap() + v["frames_right"].as_u64().unwrap()
}

/// The gaitd binary on ephemeral ports.
struct Gaitd {
    child: Child,
    base: String,
    _stdout: std::io::Lines<BufReader<std::process::ChildStdout>>,
}

impl Gaitd {
    fn spawn(dir: &Path) -> Gaitd {
        let mut child = Command::new(env!("CARGO_BIN_EXE_gaitd"))
            .args(["--http", "127.0.0.1:0", "--tcp", "127.0.0.1:0", "--admin-user", ADMIN])
            .arg("--data-dir")
            .arg(dir)
            .env("GAITD_ADMIN_PASSWORD", ADMIN_PW)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("gaitd starts");
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let first = lines.next().expect("gaitd prints its address").unwrap();
        let addr = first.strip_prefix("http ").expect("http line first").to_string();
        Gaitd { child, base: format!("http://{addr}/api/v1"), _stdout: lines }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Gaitd {
    fn drop(&mut self) {
        self.kill();
    }
}

#[test]
fn a_blob_without_its_catalog_entry_is_not_part_of_the_session() {
    let dir = tempfile::tempdir().unwrap();
    let frames = walk_frames(10.0, 11);
    let (session, before) = {
        let srv = serve(config(dir.path()), manual_clock());
        let w = world(&srv.base_url());
        let s = w.clinician.create_session(w.patient, w.pairing, "walk10m", None).unwrap();
        post_all(&w.clinician, s, &frames[..600]);
        (s, srv.service().state())
    };
    // the process died after writing the next batch's blob but before recording it
    let orphan: Vec<u8> = frames[600..900].iter().flat_map(serialize).collect();
    let (_, blobs, _) = store::open(dir.path()).unwrap();
    blobs.put_blob(&orphan).unwrap();

    let srv = serve(config(dir.path()), manual_clock());
    assert_eq!(srv.service().state(), before);
    let admin = login(&srv.base_url(), ADMIN, ADMIN_PW);
    assert_eq!(frame_count(&admin, session), 600);
    let r: Value = admin.post_frames(session, &frames[600..900]).unwrap().json().unwrap();
    assert_eq!(r["accepted"], 300);
    assert_eq!(r["duplicates"], 0);
    let r: Value = admin.post_frames(session, &frames[..900]).unwrap().json().unwrap();
    assert_eq!(r["accepted"], 0);
    assert_eq!(r["duplicates"], 900);
    assert_eq!(frame_count(&admin, session), 900);
}

#[test]
fn a_torn_catalog_tail_is_dropped_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let frames = walk_frames(10.0, 12);
    let (session, before) = {
        let srv = serve(config(dir.path()), manual_clock());
        let w = world(&srv.base_url());
        let s = w.clinician.create_session(w.patient, w.pairing, "walk10m", None).unwrap();
        post_all(&w.clinician, s, &frames[..500]);
        (s, srv.service().state())
    };
    let mut f = fs::OpenOptions::new().append(true).open(dir.path().join(CATALOG_FILE)).unwrap();
    write!(f, "{{\"record\":\"batch_appended\",\"session_id\":\"{session}\",\"blo").unwrap();
    drop(f);

    {
        let srv = serve(config(dir.path()), manual_clock());
        assert_eq!(srv.service().state(), before);
        let admin = login(&srv.base_url(), ADMIN, ADMIN_PW);
        post_all(&admin, session, &frames[500..]);
        assert_eq!(frame_count(&admin, session), frames.len() as u64);
    }
    // the truncated catalog keeps accepting whole lines
    let srv = serve(config(dir.path()), manual_clock());
    assert_eq!(srv.service().state().sessions[&session].frame_count(), frames.len() as u64);
}

#[test]
fn a_corrupt_catalog_line_before_good_ones_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    drop(serve(config(dir.path()), manual_clock()));
    let path = dir.path().join(CATALOG_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, format!("{{\"record\":\"nonsense\"}}\n{text}")).unwrap();
    match Service::open(config(dir.path()), Arc::new(SystemClock)) {
        Err(StoreError::CorruptCatalog { line: 1, .. }) => {}
        other => panic!("expected a corrupt catalog, got {:?}", other.err()),
    }
}

#[test]
fn missing_or_altered_blobs_stop_the_service_from_opening() {
    let dir = tempfile::tempdir().unwrap();
    let session = {
        let srv = serve(config(dir.path()), manual_clock());
        let w = world(&srv.base_url());
        let s = w.clinician.create_session(w.patient, w.pairing, "walk10m", None).unwrap();
        post_all(&w.clinician, s, &walk_frames(10.0, 13));
        s
    };
    let state = Service::open(config(dir.path()), Arc::new(SystemClock)).unwrap();
    let hash = state.state().sessions[&session].batches[0].clone();
    state.shutdown();
    drop(state);
    let path = dir.path().join(BLOB_DIR).join(&hash);
    let original = fs::read(&path).unwrap();

    let mut altered = original.clone();
    altered[10] ^= 0xFF;
    fs::write(&path, &altered).unwrap();
    match Service::open(config(dir.path()), Arc::new(SystemClock)) {
        Err(StoreError::CorruptBlob(h)) => assert_eq!(h, hash),
        other => panic!("expected a corrupt blob, got {:?}", other.err()),
    }
    fs::remove_file(&path).unwrap();
    match Service::open(config(dir.path()), Arc::new(SystemClock)) {
        Err(StoreError::MissingBlob(h)) => assert_eq!(h, hash),
        other => panic!("expected a missing blob, got {:?}", other.err()),
    }
    fs::write(&path, &original).unwrap();
    assert!(Service::open(config(dir.path()), Arc::new(SystemClock)).is_ok());
}

#[test]
fn killing_the_server_mid_stream_loses_nothing_acknowledged() {
    let dir = tempfile::tempdir().unwrap();
    let frames = walk_frames(60.0, 14);
    let mut gaitd = Gaitd::spawn(dir.path());
    let w = world(&gaitd.base);
    let s = w.clinician.create_session(w.patient, w.pairing, "walk10m", None).unwrap();

    let acknowledged = std::thread::scope(|scope| {
        let sender = w.clinician.clone();
        let frames = &frames;
        let stream = scope.spawn(move || {
            let mut acked = 0u64;
            for chunk in frames.chunks(100) {
                match sender.post_frames(s, chunk) {
                    Ok(r) if r.status == 200 => acked += r.json::<Value>().unwrap()["accepted"].as_u64().unwrap(),
                    _ => break,
                }
            }
            acked
        });
        let start = Instant::now();
        while frame_count(&w.clinician, s) < 3000 {
            assert!(start.elapsed() < Duration::from_secs(60), "stream stalled");
            std::thread::sleep(Duration::from_millis(2));
        }
        gaitd.kill();
        stream.join().unwrap()
    });
    assert!((acknowledged as usize) < frames.len(), "the kill landed after the stream ended");

    let gaitd = Gaitd::spawn(dir.path());
    let admin = login(&gaitd.base, ADMIN, ADMIN_PW);
    let recovered = frame_count(&admin, s);
    assert_eq!(recovered as usize, frames_on_disk(dir.path(), s));
    assert!(recovered >= acknowledged, "acknowledged {acknowledged}, recovered {recovered}");

    let mut accepted = 0;
    let mut duplicates = 0;
    for chunk in frames.chunks(1000) {
        let r: Value = admin.post_frames(s, chunk).unwrap().json().unwrap();
        accepted += r["accepted"].as_u64().unwrap();
        duplicates += r["duplicates"].as_u64().unwrap();
    }
    assert_eq!(duplicates, recovered);
    assert_eq!(accepted + recovered, frames.len() as u64);
    assert_eq!(frame_count(&admin, s), frames.len() as u64);
    let j = wait_done(&admin, admin.finalize(s).unwrap());
    assert_eq!(j["state"], "done");
}

#[test]
fn jobs_interrupted_by_a_kill_resume_and_store_each_report_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut gaitd = Gaitd::spawn(dir.path());
    let w = world(&gaitd.base);
    let mut sessions = Vec::new();
    for seed in 0..4 {
        let s = w.clinician.create_session(w.patient, w.pairing, "walk10m", None).unwrap();
        post_all(&w.clinician, s, &walk_frames(60.0, 20 + seed));
        sessions.push(s);
    }
    let jobs: Vec<Uuid> = sessions.iter().map(|&s| w.clinician.finalize(s).unwrap()).collect();
    gaitd.kill();
    let unfinished = jobs.len()
        - catalog(dir.path())
            .iter()
            .filter(|r| matches!(r, CatalogRecord::JobUpdated(j) if j.state == JobState::Done))
            .count();

    let gaitd = Gaitd::spawn(dir.path());
    let admin = login(&gaitd.base, ADMIN, ADMIN_PW);
    for (&s, &job) in sessions.iter().zip(&jobs) {
        let j = wait_done(&admin, job);
        assert_eq!(j["state"], "done", "{j}");
        assert_eq!(admin.session(s).unwrap()["status"], "analyzed");
        assert_eq!(
            stored_counts(dir.path(), s),
            vec![(ReportKind::RawSensor, 1), (ReportKind::WalkingSummary, 1), (ReportKind::AiAssessment, 1)]
        );
    }
    assert!(unfinished > 0, "every job finished before the kill");
}

#[test]
fn a_compacted_catalog_replays_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let srv = serve(config(dir.path()), manual_clock());
        let w = world(&srv.base_url());
        let c = &w.clinician;
        let walk = c.create_session(w.patient, w.pairing, "walk10m", None).unwrap();
        post_all(c, walk, &walk_frames(20.0, 30));
        wait_done(c, c.finalize(walk).unwrap());
        let open = c.create_session(w.patient, w.pairing, "tug", None).unwrap();
        post_all(c, open, &walk_frames(10.0, 31));
        c.create_pairing(w.patient, "insole-16b").unwrap();
        let lines = catalog(dir.path()).len();
        srv.service().compact().unwrap();
        assert!(catalog(dir.path()).len() < lines);
        let state = srv.service().state();
        post_all(c, open, &walk_frames(12.0, 31));
        (state, open, srv.service().state().sessions[&open].frame_count())
    };
    let (state, open, count) = before;
    let srv = serve(config(dir.path()), manual_clock());
    let after = srv.service().state();
    assert_eq!(after.users, state.users);
    assert_eq!(after.pairings, state.pairings);
    assert_eq!(after.reports, state.reports);
    assert_eq!(after.jobs, state.jobs);
    assert_eq!(after.sessions.len(), state.sessions.len());
    assert_eq!(after.sessions[&open].frame_count(), count);
    let admin = login(&srv.base_url(), ADMIN, ADMIN_PW);
    let r: Value = admin.post_frames(open, &walk_frames(12.0, 31)).unwrap().json().unwrap();
    assert_eq!(r["accepted"], 0);
    assert!(!dir.path().join(format!("{CATALOG_FILE}.tmp")).exists());

    // a snapshot of the reopened state replays to itself
    srv.service().compact().unwrap();
    drop(srv);
    let again = serve(config(dir.path()), manual_clock());
    assert_eq!(again.service().state(), after);
}
