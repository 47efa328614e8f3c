use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use gaitsim::{emit_file, generate, stream_http, stream_tcp, ApiClient, Scenario, StreamConfig};
use insole_core::sim::{BalanceGenParams, GaitGenParams, TurnSpec};
use serde_json::json;
use uuid::Uuid;

/// Synthetic insole pair and gateway.
#[derive(Parser)]
#[command(name = "gaitsim", version)]
struct Cli {
    #[command(subcommand)]
    kind: Kind,
    #[command(flatten)]
    out: Output,
}

#[derive(Subcommand)]
enum Kind {
    /// 10 m walk.
    Walk(Gait),
    /// Timed up and go: sit-to-stand, walk out, turn, walk back.
    Tug(Gait),
    /// Quiet standing, eyes open then eyes closed.
    Balance(Balance),
}

#[derive(Args)]
struct Gait {
    /// Steps per minute.
    #[arg(long, default_value_t = 110.0)]
    cadence: f64,
    /// Stance fraction of the stride.
    #[arg(long, default_value_t = 0.62)]
    stance: f64,
    /// Step time asymmetry; 0 is symmetric.
    #[arg(long, default_value_t = 0.0)]
    asym: f64,
    /// Right minus left stance fraction.
    #[arg(long, default_value_t = 0.0)]
    stance_asym: f64,
    /// Pressure noise sigma in kPa.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Start of a 1 s, 180° turn, in seconds.
    #[arg(long)]
    turn_at: Option<f64>,
    /// Walk speed label for the session.
    #[arg(long, default_value = "normal")]
    speed: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Balance {
    /// Sway amplitude with eyes open, mm.
    #[arg(long, default_value_t = 1.5)]
    eo_mm: f64,
    /// Sway amplitude with eyes closed, mm.
    #[arg(long, default_value_t = 3.0)]
    ec_mm: f64,
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Output {
    /// Write the frames as 68-byte wire packets to this file.
    #[arg(long, global = true)]
    emit: Option<PathBuf>,
    /// Stream wire packets to this ingest address (host:port).
    #[arg(long, global = true)]
    tcp: Option<String>,
    /// API root, e.g. http://127.0.0.1:8080/api/v1. Frames go here unless --tcp is set.
    #[arg(long, global = true)]
    http: Option<String>,
    #[arg(long, global = true, env = "GAITSIM_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, global = true, env = "GAITSIM_USER")]
    username: Option<String>,
    #[arg(long, global = true, env = "GAITSIM_PASSWORD", hide_env_values = true)]
    password: Option<String>,
    /// Existing open session to stream into.
    #[arg(long, global = true)]
    session: Option<Uuid>,
    /// Create a session for this patient.
    #[arg(long, global = true)]
    patient: Option<Uuid>,
    /// Pairing for the new session; the patient's active pairing by default.
    #[arg(long, global = true)]
    pairing: Option<Uuid>,
    /// Finalize the session after streaming.
    #[arg(long, global = true)]
    finalize: bool,
    /// Probability of losing each transmission unit.
    #[arg(long, global = true, default_value_t = 0.0)]
    loss: f64,
    /// Maximum random delay before each transmission, ms.
    #[arg(long, global = true, default_value_t = 0)]
    jitter: u64,
    /// Pace transmissions by frame timestamps.
    #[arg(long, global = true)]
    realtime: bool,
    /// Hold data and retry while the server is unreachable.
    #[arg(long, global = true)]
    buffer: bool,
    #[arg(long, global = true, default_value_t = 30.0)]
    buffer_timeout: f64,
    /// Frames per HTTP batch or packets per stream sync.
    #[arg(long, global = true, default_value_t = 500)]
    batch: usize,
    /// Write parameters and ground truth as JSON.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
}

fn scenario(kind: &Kind) -> (Scenario, Option<&str>) {
    match kind {
        Kind::Walk(g) | Kind::Tug(g) => {
            let p = GaitGenParams {
                cadence_steps_per_min: g.cadence,
                stance_fraction: g.stance,
                stance_asymmetry: g.stance_asym,
                step_time_asymmetry: g.asym,
                noise_sigma_kpa: g.noise,
                duration_s: g.duration,
                rate_hz: g.rate,
                rng_seed: g.seed,
                turns: g
                    .turn_at
                    .map(|t| TurnSpec { start_s: t, duration_s: 1.0, rate_dps: 180.0 })
                    .into_iter()
                    .collect(),
                ..Default::default()
            };
            match kind {
                Kind::Walk(_) => (Scenario::Walk(p), Some(g.speed.as_str())),
                _ => (Scenario::Tug(p), None),
            }
        }
        Kind::Balance(b) => (
            Scenario::Balance(BalanceGenParams {
                amplitude_eo_mm: b.eo_mm,
                amplitude_ec_mm: b.ec_mm,
                duration_s: b.duration,
                rate_hz: b.rate,
                rng_seed: b.seed,
                ..Default::default()
            }),
            None,
        ),
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let (scenario, speed) = scenario(&cli.kind);
    let generated = generate(&scenario).map_err(|e| e.to_string())?;
    let o = &cli.out;
    if let Some(path) = &o.truth {
        let text = serde_json::to_string_pretty(&generated.truth).expect("truth serializes");
        std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let Some(path) = &o.emit {
        emit_file(path, &generated.frames).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if o.http.is_none() && o.tcp.is_none() {
        println!("{}", json!({ "frames": generated.frames.len(), "emitted": o.emit.is_some() }));
        return Ok(());
    }

    let cfg = StreamConfig {
        batch_frames: o.batch,
        sync_every: o.batch,
        loss: o.loss,
        jitter_ms: o.jitter,
        realtime: o.realtime,
        buffer: o.buffer,
        buffer_timeout: Duration::from_secs_f64(o.buffer_timeout),
        seed: scenario_seed(&cli.kind),
        ..Default::default()
    };
    let mut client = o.http.as_deref().map(ApiClient::new);
    let token = match (&o.token, &o.username, &o.password, client.as_mut()) {
        (Some(t), ..) => {
            client = client.map(|c| c.with_token(t));
            t.clone()
        }
        (None, Some(u), Some(p), Some(c)) => {
            c.login(u, p).map_err(|e| e.to_string())?;
            c.token().expect("login stores the token").to_string()
        }
        _ => return Err("need --token, or --username and --password with --http".into()),
    };
    let session = match (o.session, o.patient, client.as_ref()) {
        (Some(s), ..) => s,
        (None, Some(patient), Some(c)) => {
            let pairing = match o.pairing {
                Some(p) => p,
                None => {
                    c.active_pairing(patient).map_err(|e| e.to_string())?.ok_or("the patient has no active pairing")?
                }
            };
            c.create_session(patient, pairing, scenario.session_type(), speed).map_err(|e| e.to_string())?
        }
        _ => return Err("need --session, or --patient with --http".into()),
    };

    let report = match (&o.tcp, client.as_ref()) {
        (Some(addr), _) => stream_tcp(addr, &token, session, &generated.frames, &cfg),
        (None, Some(c)) => stream_http(c, session, &generated.frames, &cfg),
        (None, None) => unreachable!("checked above"),
    }
    .map_err(|e| e.to_string())?;

    let mut out = json!({ "session_id": session, "report": report });
    if o.finalize {
        let c = client.as_ref().ok_or("--finalize needs --http")?;
        let job = c.finalize(session).map_err(|e| e.to_string())?;
        out["job_id"] = json!(job);
    }
    println!("{out}");
    Ok(())
}

fn scenario_seed(kind: &Kind) -> u64 {
    match kind {
        Kind::Walk(g) | Kind::Tug(g) => g.seed,
        Kind::Balance(b) => b.seed,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaitsim: {e}");
            ExitCode::FAILURE
        }
    }
}
