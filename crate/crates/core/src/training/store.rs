use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard};

use serde::Serialize;

use crate::error::Result;
use crate::nn::{adam_step, AdamConfig, AdamState, Checkpoint, ParamSet};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: u64,
    pub worker: usize,
    pub loss: f64,
    pub entropy: f64,
    pub episodes: u64,
    pub dropped: bool,
}

#[derive(Debug)]
pub struct StoreInner {
    pub params: ParamSet,
    pub adam: AdamState,
    /// Batches received, including dropped ones.
    pub batches: u64,
    pub dropped: u64,
}

/// Parameters and optimizer moments shared by all workers. Updates take the
/// lock for the whole Adam step.
pub struct SharedParamStore {
    inner: Mutex<StoreInner>,
    claimed: AtomicU64,
    completed: AtomicU64,
    log: Option<Mutex<Box<dyn Write + Send>>>,
}

impl SharedParamStore {
    pub fn new(params: ParamSet) -> Self {
        let adam = AdamState::new(&params);
        SharedParamStore {
            inner: Mutex::new(StoreInner {
                params,
                adam,
                batches: 0,
                dropped: 0,
            }),
            claimed: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            log: None,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        let store = SharedParamStore::new(ck.params);
        {
            let mut g = store.lock();
            g.adam = ck.adam;
            g.batches = ck.step;
        }
        store.claimed.store(ck.episodes, Ordering::SeqCst);
        store.completed.store(ck.episodes, Ordering::SeqCst);
        store
    }

    /// Sends one JSON line per applied batch to `sink`.
    pub fn with_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.log = Some(Mutex::new(sink));
        self
    }

    pub fn lock(&self) -> MutexGuard<'_, StoreInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> ParamSet {
        self.lock().params.clone()
    }

    pub fn copy_into(&self, dst: &mut ParamSet) -> Result<()> {
        dst.copy_from(&self.lock().params)
    }

    /// Reserves the next episode number, or `None` once `budget` is used up.
    pub fn claim_episode(&self, budget: u64) -> Option<u64> {
        let mut cur = self.claimed.load(Ordering::SeqCst);
        loop {
            if cur >= budget {
                return None;
            }
            match self
                .claimed
                .compare_exchange(cur, cur + 1, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => return Some(cur),
                Err(actual) => cur = actual,
            }
        }
    }

    /// Returns the number of completed episodes after this one.
    pub fn complete_episode(&self) -> u64 {
        self.completed.fetch_add(1, Ordering::SeqCst) + 1
    }

    /// Gives back a claimed episode that was aborted.
    pub fn release_episode(&self) {
        self.claimed.fetch_sub(1, Ordering::SeqCst);
    }

    pub fn episodes_completed(&self) -> u64 {
        self.completed.load(Ordering::SeqCst)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let g = self.lock();
        Checkpoint {
            params: g.params.clone(),
            adam: g.adam.clone(),
            step: g.batches,
            episodes: self.episodes_completed(),
        }
    }

    pub fn write_log(&self, rec: &LogRecord) {
        if let Some(log) = &self.log {
            let mut w = log.lock().unwrap_or_else(|p| p.into_inner());
            let line = serde_json::to_string(rec).expect("log record serialises");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                log::warn!("training log write failed: {e}");
            }
        }
    }
}

/// One Adam step on the shared parameters. A batch with any non-finite
/// gradient is counted and dropped; returns whether it was applied.
pub fn apply_gradients(store: &SharedParamStore, grads: &[Vec<f64>], cfg: &AdamConfig) -> Result<bool> {
    let mut g = store.lock();
    g.batches += 1;
    if grads.iter().flatten().any(|v| !v.is_finite()) {
        g.dropped += 1;
        log::warn!("dropping batch {} with non-finite gradients", g.batches);
        return Ok(false);
    }
    let StoreInner { params, adam, .. } = &mut *g;
    adam_step(params, grads, adam, cfg)?;
    Ok(true)
}
