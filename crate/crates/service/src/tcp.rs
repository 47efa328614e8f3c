//! Binary ingest listener for streaming devices.
//!
//! Every message is `[u16 BE length][payload]`. The first message is a JSON hello,
//! `{"token": ..., "session_id": ...}`, answered with `{"status": "ok"}` or an error
//! object. After that, 68-byte messages are sensor packets and anything else is a JSON
//! control message. `{"type": "sync"}` stores everything buffered so far and is
//! answered with cumulative counts:
//! `{"type": "ack", "received", "accepted", "duplicates", "rejected"}`.
//! Packets failing the CRC or header checks are counted as rejected and dropped.

use std::sync::Arc;

use insole_core::ingest::{parse_packet, PACKET_LEN};
use insole_core::model::SensorFrame;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use uuid::Uuid;

use crate::error::ApiError;
use crate::service::{Principal, Service};

/// Buffered packets are stored once this many are pending.
pub const FLUSH_EVERY: usize = 1000;

#[derive(Debug, Serialize, Deserialize)]
pub struct Hello {
    pub token: String,
    pub session_id: Uuid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub received: u64,
    pub accepted: u64,
    pub duplicates: u64,
    pub rejected: u64,
}

async fn read_message(s: &mut TcpStream) -> std::io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 2];
    match s.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut buf = vec![0u8; usize::from(u16::from_be_bytes(len))];
    s.read_exact(&mut buf).await?;
    Ok(Some(buf))
}

async fn write_message(s: &mut TcpStream, v: &serde_json::Value) -> std::io::Result<()> {
    let bytes = serde_json::to_vec(v).expect("json values serialize");
    let len = u16::try_from(bytes.len()).expect("control replies are short");
    s.write_all(&len.to_be_bytes()).await?;
    s.write_all(&bytes).await?;
    s.flush().await
}

fn error_reply(e: &ApiError) -> serde_json::Value {
    json!({ "type": "error", "status": "error", "code": e.code(), "message": e.to_string() })
}

pub async fn serve(listener: TcpListener, svc: Arc<Service>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let svc = svc.clone();
                tokio::spawn(async move {
                    if let Err(e) = handle(stream, svc).await {
                        tracing::debug!(%peer, "ingest connection closed: {e}");
                    }
                });
            }
            Err(e) => tracing::warn!("accept failed: {e}"),
        }
    }
}

async fn flush(
    svc: &Arc<Service>,
    p: &Principal,
    session: Uuid,
    buf: &mut Vec<SensorFrame>,
    ack: &mut Ack,
) -> Result<(), ApiError> {
    if buf.is_empty() {
        return Ok(());
    }
    let frames = std::mem::take(buf);
    let (svc, p) = (svc.clone(), p.clone());
    let r = tokio::task::spawn_blocking(move || svc.ingest(&p, session, &frames))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    ack.accepted += r.accepted as u64;
    ack.duplicates += r.duplicates as u64;
    Ok(())
}

async fn handle(mut s: TcpStream, svc: Arc<Service>) -> std::io::Result<()> {
    let Some(first) = read_message(&mut s).await? else {
        return Ok(());
    };
    let hello: Hello = match serde_json::from_slice(&first) {
        Ok(h) => h,
        Err(e) => return write_message(&mut s, &error_reply(&ApiError::Invalid(format!("bad hello: {e}")))).await,
    };
    let principal = match svc.authenticate(&hello.token).and_then(|p| {
        let view = svc.get_session(&p, hello.session_id)?;
        if view.status != insole_core::model::SessionStatus::Open {
            return Err(ApiError::SessionFinalized);
        }
        Ok(p)
    }) {
        Ok(p) => p,
        Err(e) => return write_message(&mut s, &error_reply(&e)).await,
    };
    write_message(&mut s, &json!({ "status": "ok" })).await?;

    let session = hello.session_id;
    let mut ack = Ack::default();
    let mut buf = Vec::new();
    loop {
        let Some(msg) = read_message(&mut s).await? else {
            if let Err(e) = flush(&svc, &principal, session, &mut buf, &mut ack).await {
                tracing::warn!(%session, "final flush failed: {e}");
            }
            return Ok(());
        };
        if msg.len() == PACKET_LEN {
            ack.received += 1;
            match parse_packet(&msg) {
                Ok(f) => buf.push(f),
                Err(_) => ack.rejected += 1,
            }
            if buf.len() >= FLUSH_EVERY {
                if let Err(e) = flush(&svc, &principal, session, &mut buf, &mut ack).await {
                    return write_message(&mut s, &error_reply(&e)).await;
                }
            }
            continue;
        }
        let control: serde_json::Value = serde_json::from_slice(&msg).unwrap_or_default();
        match control.get("type").and_then(|t| t.as_str()) {
            Some("sync") => {
                if let Err(e) = flush(&svc, &principal, session, &mut buf, &mut ack).await {
                    return write_message(&mut s, &error_reply(&e)).await;
                }
                let mut reply = serde_json::to_value(ack).expect("ack serializes");
                reply["type"] = json!("ack");
                write_message(&mut s, &reply).await?;
            }
            _ => ack.rejected += 1,
        }
    }
}
