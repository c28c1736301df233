use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ConflictMode;
use crate::hash::Mixer;
use crate::storagevm::replay_check;
use crate::workload::Workload;

use super::{run_occ_da_with, run_occ_det_commit_with, AttemptKey, JitterTiming, SvPolicy};

/// Outcome of re-running one scheduler under many simulated node timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProbe {
    /// Every trial produced the same `(tx, attempt, sv, outcome)` multiset.
    pub deterministic: bool,
    /// Trials whose pattern differs from trial 0's.
    pub divergent_trials: usize,
    pub distinct_patterns: usize,
    /// Every trial replayed to the serial digest.
    pub serial_equivalent: bool,
    pub min_makespan: u64,
    pub max_makespan: u64,
    pub total_aborts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub threads: usize,
    pub policy: String,
    pub occ_da: ModeProbe,
    pub det_commit: ModeProbe,
}

impl ProbeReport {
    /// OCC-DA was timing-independent, and both modes serialized to block
    /// order. Det-commit divergence is expected and does not fail the probe.
    pub fn passed(&self) -> bool {
        self.occ_da.deterministic && self.occ_da.serial_equivalent && self.det_commit.serial_equivalent
    }
}

fn trial_seed(seed: u64, trial: usize, salt: u64) -> u64 {
    Mixer::new().u64(seed).u64(trial as u64).u64(salt).finish()
}

/// Re-runs OCC-DA and det-commit `trials` times, each with randomized
/// dispatch among ready transactions and per-attempt durations jittered by
/// up to 50%, and compares the attempt patterns across trials.
pub fn determinism_probe(
    w: &Workload,
    threads: usize,
    policy: &SvPolicy,
    mode: ConflictMode,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if trials < 2 {
        return Err(Error::validation("a determinism probe needs at least 2 trials"));
    }
    let mut da = Tally::default();
    let mut dc = Tally::default();
    for t in 0..trials {
        let r = run_occ_da_with(w, threads, policy, mode, &mut JitterTiming::new(trial_seed(seed, t, 1)))?;
        da.add(r.attempt_pattern(), r.makespan, r.abort_count(), replay_check(w, &r)?);
        let r = run_occ_det_commit_with(w, threads, mode, &mut JitterTiming::new(trial_seed(seed, t, 2)))?;
        dc.add(r.attempt_pattern(), r.makespan, r.abort_count(), replay_check(w, &r)?);
    }
    Ok(ProbeReport {
        trials,
        threads,
        policy: policy.label().to_owned(),
        occ_da: da.finish(),
        det_commit: dc.finish(),
    })
}

#[derive(Default)]
struct Tally {
    first: Option<Vec<AttemptKey>>,
    patterns: Vec<Vec<AttemptKey>>,
    divergent: usize,
    replay_ok: bool,
    trials: usize,
    min_makespan: u64,
    max_makespan: u64,
    aborts: usize,
}

impl Tally {
    fn add(&mut self, pattern: Vec<AttemptKey>, makespan: u64, aborts: usize, replay_ok: bool) {
        if self.trials == 0 {
            self.replay_ok = true;
            self.min_makespan = makespan;
        }
        self.trials += 1;
        self.replay_ok &= replay_ok;
        self.min_makespan = self.min_makespan.min(makespan);
        self.max_makespan = self.max_makespan.max(makespan);
        self.aborts += aborts;
        match &self.first {
            None => self.first = Some(pattern.clone()),
            Some(first) if *first != pattern => self.divergent += 1,
            Some(_) => {}
        }
        if !self.patterns.contains(&pattern) {
            self.patterns.push(pattern);
        }
    }

    fn finish(self) -> ModeProbe {
        ModeProbe {
            deterministic: self.divergent == 0,
            divergent_trials: self.divergent,
            distinct_patterns: self.patterns.len(),
            serial_equivalent: self.replay_ok,
            min_makespan: self.min_makespan,
            max_makespan: self.max_makespan,
            total_aborts: self.aborts,
        }
    }
}
