//! Bounded hand-off between the audio socket and the analysis loop.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use tokio::sync::Notify;

/// A bounded FIFO that never blocks the producer: when full, pushing
/// evicts the oldest item and counts it as dropped.
#[derive(Debug)]
pub struct DropOldestQueue<T> {
    items: Mutex<VecDeque<T>>,
    capacity: usize,
    dropped: AtomicU64,
    ready: Notify,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            items: Mutex::new(VecDeque::with_capacity(capacity)),
            capacity,
            dropped: AtomicU64::new(0),
            ready: Notify::new(),
        }
    }

    pub fn push(&self, item: T) {
        {
            let mut q = self.items.lock().expect("queue lock");
            if q.len() == self.capacity {
                q.pop_front();
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
            q.push_back(item);
        }
        self.ready.notify_one();
    }

    /// Takes everything queued, oldest first.
    pub fn drain(&self) -> Vec<T> {
        self.items.lock().expect("queue lock").drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.items.lock().expect("queue lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Resolves once something has been pushed since the last wake-up.
    pub async fn wait(&self) {
        self.ready.notified().await;
    }
}
