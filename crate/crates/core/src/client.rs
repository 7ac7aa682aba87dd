//! Shared contract for external model backends (aesthetic scorer, VQA).
//!
//! The crate never runs model inference itself; it talks to pluggable
//! clients through small traits defined next to their consumers. This module
//! holds the pieces those traits share: the error split that drives retry
//! behavior, and the retry policy itself.

use std::time::Duration;

/// How a client call failed. The split decides what happens next: retryable
/// failures are re-attempted per [`RetryPolicy`]; protocol failures mean the
/// backend is misbehaving and retrying cannot help.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    /// Transient condition — timeout, connection refused, 5xx. Worth
    /// retrying.
    #[error("retryable: {0}")]
    Retryable(String),
    /// The backend answered, but wrongly — malformed body, missing field,
    /// value out of range. Retrying would get the same answer.
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Retry schedule for retryable client errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first (2 ⇒ up to 3 calls total).
    pub retries: u32,
    /// Base delay before a retry; doubles after each failed attempt.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 2, backoff: Duration::from_millis(100) }
    }
}

impl RetryPolicy {
    /// No retries, no waiting — for tests and offline sidecar lookups.
    pub fn none() -> Self {
        RetryPolicy { retries: 0, backoff: Duration::ZERO }
    }

    /// Run `call` under this policy: retryable errors are retried with
    /// doubling backoff until the budget runs out; protocol errors return
    /// immediately.
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, ClientError>,
    ) -> Result<T, ClientError> {
        let mut delay = self.backoff;
        let mut last;
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e @ ClientError::Protocol(_)) => return Err(e),
                Err(e @ ClientError::Retryable(_)) => last = e,
            }
            if attempt >= self.retries {
                return Err(last);
            }
            attempt += 1;
            if !delay.is_zero() {
                std::thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
        }
    }
}
