use std::sync::Arc;

use async_trait::async_trait;
use tokio::sync::Semaphore;

use super::{Backend, BackendError, ChatRequest, ChatResponse};

/// Caps the number of concurrent `complete` calls on the wrapped backend.
#[derive(Debug)]
pub struct Limited<B> {
    inner: B,
    permits: Arc<Semaphore>,
}

impl<B> Limited<B> {
    pub fn new(inner: B, max_in_flight: usize) -> Self {
        Self {
            inner,
            permits: Arc::new(Semaphore::new(max_in_flight.max(1))),
        }
    }

    pub fn available(&self) -> usize {
        self.permits.available_permits()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

#[async_trait]
impl<B: Backend> Backend for Limited<B> {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| BackendError::Transport("concurrency limiter closed".into()))?;
        self.inner.complete(request).await
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
