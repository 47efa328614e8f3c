use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use insole_core::decision::deserialize_model;
use insole_core::model::{default_layout, SensorLayout};
use insole_core::report::PipelineConfig;
use insole_service::{start, ServerConfig, ServiceConfig, SystemClock};

/// Smart-insole platform service.
#[derive(Parser)]
#[command(name = "gaitd", version)]
struct Args {
    /// REST listen address.
    #[arg(long, env = "GAITD_HTTP", default_value = "127.0.0.1:8080")]
    http: SocketAddr,
    /// Binary ingest listen address.
    #[arg(long, env = "GAITD_TCP", default_value = "127.0.0.1:9090")]
    tcp: SocketAddr,
    #[arg(long, env = "GAITD_DATA_DIR", default_value = "gaitd-data")]
    data_dir: PathBuf,
    #[arg(long, env = "GAITD_TOKEN_TTL_S", default_value_t = 86_400)]
    token_ttl_s: i64,
    /// Analysis worker threads.
    #[arg(long, env = "GAITD_WORKERS", default_value_t = 2)]
    workers: usize,
    /// Admin account created on first start.
    #[arg(long, env = "GAITD_ADMIN_USER")]
    admin_user: Option<String>,
    #[arg(long, env = "GAITD_ADMIN_PASSWORD", hide_env_values = true)]
    admin_password: Option<String>,
    /// Sensor layout JSON; the built-in 16-sensor layout by default.
    #[arg(long, env = "GAITD_LAYOUT")]
    layout: Option<PathBuf>,
    /// Binary screening model JSON; the bundled placeholder by default.
    #[arg(long, env = "GAITD_SCREEN_MODEL", requires = "severity_model")]
    screen_model: Option<PathBuf>,
    /// Severity model JSON; the bundled placeholder by default.
    #[arg(long, env = "GAITD_SEVERITY_MODEL", requires = "screen_model")]
    severity_model: Option<PathBuf>,
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn service_config(args: &Args) -> Result<ServiceConfig, String> {
    let mut cfg = ServiceConfig::new(&args.data_dir);
    cfg.token_ttl = chrono::Duration::seconds(args.token_ttl_s);
    cfg.workers = args.workers.max(1);
    cfg.admin = match (&args.admin_user, &args.admin_password) {
        (Some(u), Some(p)) => Some((u.clone(), p.clone())),
        (Some(_), None) => return Err("--admin-user needs --admin-password or GAITD_ADMIN_PASSWORD".into()),
        _ => None,
    };
    let layout = match &args.layout {
        Some(p) => SensorLayout::from_json(&read(p)?).map_err(|e| e.to_string())?,
        None => default_layout(),
    };
    let models = match (&args.screen_model, &args.severity_model) {
        (Some(a), Some(b)) => Some((
            deserialize_model(&read(a)?).map_err(|e| format!("{}: {e}", a.display()))?,
            deserialize_model(&read(b)?).map_err(|e| format!("{}: {e}", b.display()))?,
        )),
        _ => cfg.pipeline.models.take(),
    };
    cfg.pipeline = PipelineConfig::new(layout, models);
    Ok(cfg)
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let service = match service_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gaitd: {e}");
            std::process::exit(2);
        }
    };
    let cfg = ServerConfig { http_addr: args.http, tcp_addr: Some(args.tcp), service };
    let server = match start(cfg, Arc::new(SystemClock)).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("gaitd: {e}");
            std::process::exit(1);
        }
    };
    // a supervisor may close stdout after reading the addresses
    let mut out = std::io::stdout();
    let _ = writeln!(out, "http {}", server.http_addr);
    if let Some(a) = server.tcp_addr {
        let _ = writeln!(out, "tcp {a}");
    }
    let _ = out.flush();
    let _ = tokio::signal::ctrl_c().await;
    server.stop().await;
}
