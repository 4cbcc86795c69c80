//! Scenario execution and the photon-stream sorting histogram.

use std::collections::BTreeSet;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::network::InportMux;
use crate::polarization::{canonical_state, Bb84State};
use crate::protocol::{run_session, run_session_blocking, SessionConfig, SessionOutcome};
use crate::report::ReportRecord;
use crate::scenario::Scenario;
use crate::sorter::{route_photon, PhotonRecord, SorterTree};
use crate::SimRng;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Run sessions on disjoint user pairs on separate threads.
    pub parallel: bool,
    /// Replaces every session seed with `seed + index`.
    pub seed: Option<u64>,
    /// Replaces every session's photon count.
    pub photons: Option<usize>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub records: Vec<ReportRecord>,
    pub outcomes: Vec<Result<SessionOutcome>>,
}

impl RunSummary {
    pub fn any_error(&self) -> bool {
        self.outcomes.iter().any(Result::is_err)
    }

    pub fn errors(&self) -> impl Iterator<Item = (&ReportRecord, &Error)> {
        self.records
            .iter()
            .zip(&self.outcomes)
            .filter_map(|(rec, o)| o.as_ref().err().map(|e| (rec, e)))
    }
}

fn effective_sessions(scenario: &Scenario, options: &RunOptions) -> Vec<SessionConfig> {
    scenario
        .sessions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = s.clone();
            if let Some(seed) = options.seed {
                s.seed = seed.wrapping_add(i as u64);
            }
            if let Some(photons) = options.photons {
                s.photon_count = photons;
            }
            s
        })
        .collect()
}

/// Consecutive groups of sessions whose user pairs do not overlap.
fn disjoint_waves(sessions: &[SessionConfig]) -> Vec<Vec<usize>> {
    let mut waves: Vec<Vec<usize>> = Vec::new();
    let mut busy: BTreeSet<&str> = BTreeSet::new();
    for (i, s) in sessions.iter().enumerate() {
        let clash = busy.contains(s.sender.as_str()) || busy.contains(s.receiver.as_str());
        if clash || waves.is_empty() {
            waves.push(Vec::new());
            busy.clear();
        }
        busy.insert(&s.sender);
        busy.insert(&s.receiver);
        waves.last_mut().unwrap().push(i);
    }
    waves
}

/// Executes every session in order; the report has one record per session.
pub fn run_scenario(scenario: &Scenario, options: RunOptions) -> RunSummary {
    let sessions = effective_sessions(scenario, &options);
    let mux = InportMux::new();
    let outcomes: Vec<Result<SessionOutcome>> = if options.parallel {
        let mut slots: Vec<Option<Result<SessionOutcome>>> = sessions.iter().map(|_| None).collect();
        for wave in disjoint_waves(&sessions) {
            let results: Vec<(usize, Result<SessionOutcome>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&i| {
                        let (session, network, mux) = (&sessions[i], &scenario.network, &mux);
                        scope.spawn(move || (i, run_session_blocking(session, network, mux)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("session thread")).collect()
            });
            for (i, r) in results {
                slots[i] = Some(r);
            }
        }
        slots.into_iter().map(|s| s.expect("every session ran")).collect()
    } else {
        sessions
            .iter()
            .map(|s| run_session(s, &scenario.network, &mux))
            .collect()
    };
    let records = sessions
        .iter()
        .zip(&outcomes)
        .map(|(s, o)| match o {
            Ok(out) => ReportRecord::from_result(&out.result),
            Err(_) => ReportRecord::errored(&s.id, &s.sender, &s.receiver, s.seed),
        })
        .collect();
    RunSummary { records, outcomes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortHistogram {
    pub ell: i64,
    /// Arrivals per leaf, indexed by leaf id.
    pub counts: Vec<usize>,
    pub stray: bool,
}

/// Routes `photons` photons of each `ell` through `tree` and counts arrivals.
pub fn sort_histogram(tree: &SorterTree, ells: &[i64], photons: usize, seed: u64) -> Vec<SortHistogram> {
    let mut rng = SimRng::seed_from_u64(seed);
    ells.iter()
        .map(|&ell| {
            let mut counts = vec![0usize; tree.leaves().len()];
            let mut stray = false;
            for seq in 0..photons {
                let photon = PhotonRecord::new(ell, canonical_state(Bb84State::D45), "source", seq as u64);
                let out = route_photon(photon, tree, &mut rng);
                counts[out.leaf] += 1;
                stray |= out.stray;
            }
            SortHistogram { ell, counts, stray }
        })
        .collect()
}
