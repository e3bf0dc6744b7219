use std::future::Future;
use std::time::Duration;

use rand::Rng;

use super::BackendError;

/// Exponential backoff with full jitter.
///
/// Before retry `k` (0-based) the client sleeps a uniform random duration in
/// `[0, min(max_backoff, initial_backoff * multiplier^k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first one. At least 1.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Upper bound of the jittered sleep before retry `retry`.
    pub fn ceiling(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry.min(64) as i32);
        let secs = self.initial_backoff.as_secs_f64() * factor;
        if !secs.is_finite() || secs >= self.max_backoff.as_secs_f64() {
            self.max_backoff
        } else {
            Duration::from_secs_f64(secs)
        }
    }

    pub fn jittered(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let ceiling = self.ceiling(retry);
        if ceiling.is_zero() {
            return ceiling;
        }
        Duration::from_secs_f64(rng.random_range(0.0..=ceiling.as_secs_f64()))
    }
}

/// Runs `attempt` until it succeeds, fails permanently, or the policy's
/// attempt cap is reached. Returns the value with the number of attempts.
pub async fn retry_with_policy<T, F, Fut>(
    policy: &RetryPolicy,
    mut attempt: F,
) -> Result<(T, u32), BackendError>
where
    F: FnMut(u32) -> Fut,
    Fut: Future<Output = Result<T, BackendError>>,
{
    let cap = policy.max_attempts.max(1);
    let mut n = 0;
    loop {
        n += 1;
        match attempt(n).await {
            Ok(value) => return Ok((value, n)),
            Err(err) if err.is_transient() && n < cap => {
                let delay = policy.jittered(n - 1, &mut rand::rng());
                tracing::warn!(attempt = n, delay_ms = delay.as_millis() as u64, "transient backend error: {err}");
                tokio::time::sleep(delay).await;
            }
            Err(err) => return Err(with_attempts(err, n)),
        }
    }
}

fn with_attempts(err: BackendError, attempts: u32) -> BackendError {
    match err {
        BackendError::RateLimited { .. } => BackendError::RateLimited { attempts },
        BackendError::Server { status, .. } => BackendError::Server { status, attempts },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn instant() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff: Duration::ZERO,
            multiplier: 2.0,
            max_backoff: Duration::ZERO,
        }
    }

    #[test]
    fn default_matches_documented_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.max_attempts, 5);
        assert_eq!(p.ceiling(0), Duration::from_secs(1));
        assert_eq!(p.ceiling(1), Duration::from_secs(2));
        assert_eq!(p.ceiling(3), Duration::from_secs(8));
        assert_eq!(p.ceiling(40), Duration::from_secs(60));
    }

    proptest! {
        #[test]
        fn ceilings_never_decrease(initial_ms in 0u64..5_000, mult in 1.0f64..4.0, max_ms in 0u64..120_000) {
            let p = RetryPolicy {
                max_attempts: 10,
                initial_backoff: Duration::from_millis(initial_ms),
                multiplier: mult,
                max_backoff: Duration::from_millis(max_ms),
            };
            let mut rng = rand::rng();
            for k in 0..12 {
                prop_assert!(p.ceiling(k) <= p.ceiling(k + 1));
                prop_assert!(p.jittered(k, &mut rng) <= p.ceiling(k));
            }
        }
    }

    #[tokio::test]
    async fn stops_at_attempt_cap() {
        let calls = AtomicU32::new(0);
        let out: Result<((), u32), _> = retry_with_policy(&instant(), |_| {
            calls.fetch_add(1, Ordering::SeqCst);
            async { Err(BackendError::RateLimited { attempts: 0 }) }
        })
        .await;
        assert_eq!(out.unwrap_err(), BackendError::RateLimited { attempts: 4 });
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[tokio::test]
    async fn permanent_errors_are_not_retried() {
        let calls = AtomicU32::new(0);
        let out: Result<((), u32), _> = retry_with_policy(&instant(), |_| {
            calls.fetch_add(1, Ordering::SeqCst);
            async {
                Err(BackendError::BadRequest {
                    status: 400,
                    body: String::new(),
                })
            }
        })
        .await;
        assert!(matches!(out, Err(BackendError::BadRequest { status: 400, .. })));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test]
    async fn recovers_after_transient_failures() {
        let (value, attempts) = retry_with_policy(&instant(), |n| async move {
            if n < 3 {
                Err(BackendError::Server {
                    status: 503,
                    attempts: 0,
                })
            } else {
                Ok(n * 10)
            }
        })
        .await
        .unwrap();
        assert_eq!((value, attempts), (30, 3));
    }
}
