//! Credential hashing, opaque bearer tokens and login rate limiting.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const TOKEN_BYTES: usize = 32;
pub const MAX_FAILED_ATTEMPTS: usize = 5;
pub const ATTEMPT_WINDOW_S: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Clinician,
    Patient,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Read,
    Write,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthToken {
    pub token: String,
    pub user_id: Uuid,
    pub expires_at: DateTime<Utc>,
    pub scopes: Vec<Scope>,
}

pub fn hash_credential(credential: &str) -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    let salt = SaltString::encode_b64(&bytes).expect("16 bytes is a valid salt length");
    Argon2::default().hash_password(credential.as_bytes(), &salt).expect("argon2 hashing with defaults").to_string()
}

pub fn verify_credential(credential: &str, hash: &str) -> bool {
    PasswordHash::new(hash).is_ok_and(|h| Argon2::default().verify_password(credential.as_bytes(), &h).is_ok())
}

/// 256 random bits, hex encoded.
pub fn new_token() -> String {
    let mut bytes = [0u8; TOKEN_BYTES];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

pub fn scopes_for(role: Role) -> Vec<Scope> {
    match role {
        Role::Admin => vec![Scope::Read, Scope::Write, Scope::Admin],
        Role::Clinician | Role::Patient => vec![Scope::Read, Scope::Write],
    }
}

#[derive(Default)]
pub struct TokenStore {
    tokens: Mutex<HashMap<String, AuthToken>>,
}

impl TokenStore {
    pub fn insert(&self, t: AuthToken) {
        self.tokens.lock().unwrap().insert(t.token.clone(), t);
    }

    /// The token if known and not expired at `now`; expired tokens are dropped.
    pub fn check(&self, token: &str, now: DateTime<Utc>) -> Option<AuthToken> {
        let mut tokens = self.tokens.lock().unwrap();
        match tokens.get(token) {
            Some(t) if t.expires_at > now => Some(t.clone()),
            Some(_) => {
                tokens.remove(token);
                None
            }
            None => None,
        }
    }
}

/// Failed login attempts per username within a sliding window.
#[derive(Default)]
pub struct LoginLimiter {
    failures: Mutex<HashMap<String, VecDeque<DateTime<Utc>>>>,
}

impl LoginLimiter {
    fn prune(q: &mut VecDeque<DateTime<Utc>>, now: DateTime<Utc>) {
        while q.front().is_some_and(|&t| now - t >= Duration::seconds(ATTEMPT_WINDOW_S)) {
            q.pop_front();
        }
    }

    pub fn is_limited(&self, username: &str, now: DateTime<Utc>) -> bool {
        let mut f = self.failures.lock().unwrap();
        let Some(q) = f.get_mut(username) else {
            return false;
        };
        Self::prune(q, now);
        q.len() >= MAX_FAILED_ATTEMPTS
    }

    pub fn record_failure(&self, username: &str, now: DateTime<Utc>) {
        let mut f = self.failures.lock().unwrap();
        let q = f.entry(username.to_string()).or_default();
        Self::prune(q, now);
        q.push_back(now);
    }
}
