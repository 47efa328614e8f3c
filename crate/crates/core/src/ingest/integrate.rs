//! Merging curated segments into a session.

use thiserror::Error;

use super::curate::{curate_with, flatten, CuratedSegment, CurationConfig, CurationError};
use crate::model::{FootSide, Session, SessionStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("session is no longer open")]
    SessionFinalized,
    #[error("segment for {segment} foot carries a {frame} foot frame")]
    FootMismatch { segment: FootSide, frame: FootSide },
    #[error(transparent)]
    Curation(#[from] CurationError),
}

/// Appends segments under their foot. Existing and incoming frames of a foot are
/// re-curated together, so replayed ranges collapse onto the frames already held.
pub fn integrate(segments: Vec<CuratedSegment>, session: Session) -> Result<Session, IntegrationError> {
    integrate_with(segments, session, &CurationConfig::default())
}

pub fn integrate_with(
    segments: Vec<CuratedSegment>,
    mut session: Session,
    cfg: &CurationConfig,
) -> Result<Session, IntegrationError> {
    if session.status != SessionStatus::Open {
        return Err(IntegrationError::SessionFinalized);
    }
    for seg in &segments {
        if let Some(bad) = seg.frames.iter().find(|f| f.foot != seg.foot) {
            return Err(IntegrationError::FootMismatch { segment: seg.foot, frame: bad.foot });
        }
    }
    if let Some(first) = segments.first() {
        if session.segments.left.is_empty() && session.segments.right.is_empty() {
            session.sample_rate_hz = first.rate_hz;
        }
    }
    let rate = session.sample_rate_hz;
    for foot in FootSide::BOTH {
        let incoming: Vec<_> = segments.iter().filter(|s| s.foot == foot).collect();
        if incoming.is_empty() {
            continue;
        }
        let mut frames = flatten(session.segments.get(foot));
        for seg in incoming {
            frames.extend(seg.frames.iter().cloned());
        }
        *session.segments.get_mut(foot) = curate_with(&frames, rate, cfg)?;
    }
    Ok(session)
}
