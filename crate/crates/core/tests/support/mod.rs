#![allow(dead_code)]

use proptest::prelude::*;
use tracescope_core::{pair_events, BuildOptions, Dataset, Guid, TimePoint, TraceEvent};

/// `(location, enter, leave, parent)` with `enter < leave`.
pub type Span = (u64, u64, u64, Option<u64>);

/// Events for `spans` (guid = index + 1), ordered so pairing accepts them.
pub fn events(spans: &[Span]) -> Vec<TraceEvent> {
    let mut keyed = Vec::with_capacity(spans.len() * 2);
    for (i, &(loc, enter, leave, parent)) in spans.iter().enumerate() {
        let guid = Guid(i as u64 + 1);
        keyed.push((
            enter,
            1,
            TraceEvent::Enter {
                time: TimePoint(enter),
                location: loc,
                guid,
                parent: parent.map(Guid),
                primitive: format!("p{}", i % 3),
            },
        ));
        keyed.push((
            leave,
            0,
            TraceEvent::Leave {
                time: TimePoint(leave),
                location: loc,
                guid,
            },
        ));
    }
    keyed.sort_by_key(|k| (k.0, k.1));
    keyed.into_iter().map(|k| k.2).collect()
}

/// Dataset whose raw times equal the given ones (an anchor interval at t=0
/// on location 0 keeps normalization a no-op when `anchor` is set).
pub fn dataset(spans: &[Span], bins: u32) -> Dataset {
    let raw = pair_events(events(spans)).expect("valid events");
    Dataset::build(raw, Vec::new(), BuildOptions { bin_count: bins }).expect("build")
}

/// Random spans on `locations` locations within `[0, horizon)`, each
/// starting at 0 for location 0 so normalization is the identity.
pub fn spans(locations: u64, horizon: u64, max_len: usize) -> impl Strategy<Value = Vec<Span>> {
    prop::collection::vec((0..locations, 0..horizon - 1, 1..horizon), 1..max_len).prop_map(move |raw| {
        let mut out: Vec<Span> = vec![(0, 0, 1, None)];
        for (loc, a, len) in raw {
            let b = (a + len).min(horizon).max(a + 1);
            out.push((loc, a, b, None));
        }
        out
    })
}

/// Σ overlap of every interval with `[t0, t1)` in ticks.
pub fn brute_mass(ds: &Dataset, t0: u64, t1: u64, keep: impl Fn(usize) -> bool) -> u64 {
    ds.intervals
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, iv)| iv.leave.0.min(t1).saturating_sub(iv.enter.0.max(t0)))
        .sum()
}
