use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::workload::TxId;

/// Source of the non-deterministic parts of a simulated node's execution:
/// how long each execution takes, and which ready transaction gets a free
/// thread.
pub trait Timing {
    /// Virtual duration of attempt `attempt` of `tx`. Must be at least 1.
    fn duration(&mut self, tx: TxId, attempt: u32, gas: u64) -> u64;

    /// Index into `ready` (ascending ids) of the transaction to dispatch.
    fn pick_ready(&mut self, ready: &[TxId]) -> usize;
}

/// Durations equal gas; lowest id first.
#[derive(Debug, Clone, Copy, Default)]
pub struct GasTiming;

impl Timing for GasTiming {
    fn duration(&mut self, _tx: TxId, _attempt: u32, gas: u64) -> u64 {
        gas
    }

    fn pick_ready(&mut self, _ready: &[TxId]) -> usize {
        0
    }
}

/// Durations drawn uniformly from `gas * [1 - spread, 1 + spread]` and a
/// uniformly random ready transaction dispatched first.
#[derive(Debug, Clone)]
pub struct JitterTiming {
    rng: ChaCha8Rng,
    spread: f64,
}

impl JitterTiming {
    pub fn new(seed: u64) -> Self {
        Self::with_spread(seed, 0.5)
    }

    pub fn with_spread(seed: u64, spread: f64) -> Self {
        JitterTiming {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spread: spread.clamp(0.0, 0.99),
        }
    }
}

impl Timing for JitterTiming {
    fn duration(&mut self, _tx: TxId, _attempt: u32, gas: u64) -> u64 {
        let factor = self.rng.gen_range(1.0 - self.spread..=1.0 + self.spread);
        ((gas as f64 * factor).round() as u64).max(1)
    }

    fn pick_ready(&mut self, ready: &[TxId]) -> usize {
        self.rng.gen_range(0..ready.len())
    }
}

/// A hand-written node timing: dispatch follows `priority` (unlisted ids
/// after listed ones, by id) and specific attempts get fixed durations.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTiming {
    rank: HashMap<TxId, usize>,
    durations: HashMap<(TxId, u32), u64>,
}

impl ScriptedTiming {
    pub fn new(priority: &[TxId]) -> Self {
        ScriptedTiming {
            rank: priority.iter().enumerate().map(|(r, &tx)| (tx, r)).collect(),
            durations: HashMap::new(),
        }
    }

    pub fn duration_of(mut self, tx: TxId, attempt: u32, duration: u64) -> Self {
        self.durations.insert((tx, attempt), duration.max(1));
        self
    }
}

impl Timing for ScriptedTiming {
    fn duration(&mut self, tx: TxId, attempt: u32, gas: u64) -> u64 {
        self.durations.get(&(tx, attempt)).copied().unwrap_or(gas)
    }

    fn pick_ready(&mut self, ready: &[TxId]) -> usize {
        (0..ready.len())
            .min_by_key(|&i| (self.rank.get(&ready[i]).copied().unwrap_or(usize::MAX), ready[i]))
            .unwrap()
    }
}
