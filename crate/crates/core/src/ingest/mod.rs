//! Canonical trace format: parsing, enter/leave pairing and time normalization.

mod parse;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use parse::{parse_event, parse_trace, ParseError, ParsedLine, ParsedTrace};

use crate::model::{
    CounterId, CounterSample, Guid, Interner, Interval, Location, LocationId, PrimitiveId, TimePoint, Warning,
    WarningCode,
};

/// Hard parse errors beyond this many are counted but not listed.
pub const MAX_REPORTED_ERRORS: usize = 100;

/// One record of the canonical format. Locations are the raw ids written in
/// the trace; they become dense [`LocationId`]s during pairing.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    LocationDef {
        index: u64,
        core_id: i64,
        thread_id: i64,
    },
    Enter {
        time: TimePoint,
        location: u64,
        guid: Guid,
        parent: Option<Guid>,
        primitive: String,
    },
    Leave {
        time: TimePoint,
        location: u64,
        guid: Guid,
    },
    Counter {
        time: TimePoint,
        location: u64,
        counter: String,
        value: f64,
    },
    Source {
        path: String,
    },
}

impl TraceEvent {
    fn timed(&self) -> Option<(u64, TimePoint)> {
        match *self {
            TraceEvent::Enter { location, time, .. }
            | TraceEvent::Leave { location, time, .. }
            | TraceEvent::Counter { location, time, .. } => Some((location, time)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    /// Byte offset from the start of the input.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("{total} malformed line(s); first at line {}: {}", errors[0].line, errors[0].message)]
    Malformed { errors: Vec<LineError>, total: usize },
    #[error("guid {guid} is entered twice (events #{first} and #{second})")]
    DuplicateGuid { guid: Guid, first: usize, second: usize },
    #[error("event #{event} on location {location} at t={time} precedes t={previous} by more than one event")]
    OutOfOrder {
        event: usize,
        location: u64,
        time: u64,
        previous: u64,
    },
    #[error("guid {guid} enters on location {enter_location} but leaves on {leave_location}")]
    LocationMismatch {
        guid: Guid,
        enter_location: u64,
        leave_location: u64,
    },
    #[error("guid {guid} leaves at t={leave} before it enters at t={enter}")]
    NegativeDuration { guid: Guid, enter: u64, leave: u64 },
}

/// How the enter/leave events were partitioned during pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairStats {
    pub enters: usize,
    pub leaves: usize,
    pub matched_pairs: usize,
    pub truncated_enters: usize,
    pub unmatched_leaves: usize,
    /// Enters dropped because their (matched or truncated) duration was zero.
    pub zero_duration: usize,
}

/// Validated, normalized trace ready for tree and index construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTrace {
    /// Sorted by `(enter, guid)`.
    pub intervals: Vec<Interval>,
    /// Sorted by `(counter, location, time)`.
    pub counters: Vec<CounterSample>,
    pub locations: Vec<Location>,
    pub primitives: Interner,
    pub counter_names: Interner,
    /// Paths named by `S` records, in file order.
    pub source_refs: Vec<String>,
    pub warnings: Vec<Warning>,
    pub stats: PairStats,
    /// Raw time subtracted from every event.
    pub epoch: u64,
}

impl RawTrace {
    /// Largest leave or counter time, i.e. the trace span after normalization.
    pub fn time_end(&self) -> TimePoint {
        let leaves = self.intervals.iter().map(|i| i.leave);
        let samples = self.counters.iter().map(|c| c.time);
        leaves.chain(samples).max().unwrap_or(TimePoint::ZERO)
    }
}

/// Per-location one-event reorder buffer.
#[derive(Default)]
struct LocationStream {
    last_emitted: Option<u64>,
    pending: Option<usize>,
}

struct EnterRec {
    ordinal: usize,
    time: u64,
    location: u64,
    parent: Option<Guid>,
    primitive: String,
}

struct LeaveRec {
    time: u64,
    location: u64,
}

/// Parse and pair a whole trace text.
pub fn ingest_text(text: &str) -> Result<RawTrace, IngestError> {
    let parsed = parse_trace(text)?;
    let mut raw = pair_events(parsed.events)?;
    let mut warnings = parsed.warnings;
    warnings.append(&mut raw.warnings);
    raw.warnings = warnings;
    Ok(raw)
}

/// Turn a stream of trace events into intervals and counter samples.
///
/// Events must be in nondecreasing time order per location; a single
/// out-of-order event is swapped with its predecessor (warning `REORDERED`),
/// anything worse is an error. Enters without a leave are truncated at the
/// last event time of the trace, leaves without an enter are dropped.
pub fn pair_events<I>(events: I) -> Result<RawTrace, IngestError>
where
    I: IntoIterator<Item = TraceEvent>,
{
    let events: Vec<TraceEvent> = events.into_iter().collect();
    let mut warnings = Vec::new();

    let mut streams: BTreeMap<u64, LocationStream> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::with_capacity(events.len());
    let mut location_defs: BTreeMap<u64, (i64, i64)> = BTreeMap::new();
    let mut source_refs = Vec::new();
    let mut raw_min: Option<u64> = None;
    let mut raw_max: Option<u64> = None;

    for (ordinal, ev) in events.iter().enumerate() {
        match ev {
            TraceEvent::LocationDef {
                index,
                core_id,
                thread_id,
            } => {
                location_defs.entry(*index).or_insert((*core_id, *thread_id));
                continue;
            }
            TraceEvent::Source { path } => {
                source_refs.push(path.clone());
                continue;
            }
            _ => {}
        }
        let (loc, time) = ev.timed().expect("timed event");
        let time = time.0;
        raw_min = Some(raw_min.map_or(time, |m| m.min(time)));
        raw_max = Some(raw_max.map_or(time, |m| m.max(time)));
        let stream = streams.entry(loc).or_default();
        match stream.pending {
            None => {
                if let Some(prev) = stream.last_emitted.filter(|&p| time < p) {
                    return Err(IngestError::OutOfOrder {
                        event: ordinal + 1,
                        location: loc,
                        time,
                        previous: prev,
                    });
                }
                stream.pending = Some(ordinal);
            }
            Some(p) => {
                let pending_time = events[p].timed().expect("timed").1 .0;
                if time >= pending_time {
                    order.push(p);
                    stream.last_emitted = Some(pending_time);
                    stream.pending = Some(ordinal);
                } else if stream.last_emitted.is_none_or(|last| time >= last) {
                    warnings.push(Warning::new(
                        WarningCode::Reordered,
                        format!(
                            "event #{} on location {loc} (t={time}) swapped ahead of t={pending_time}",
                            ordinal + 1
                        ),
                    ));
                    order.push(ordinal);
                    stream.last_emitted = Some(time);
                } else {
                    return Err(IngestError::OutOfOrder {
                        event: ordinal + 1,
                        location: loc,
                        time,
                        previous: pending_time,
                    });
                }
            }
        }
    }
    for stream in streams.values() {
        if let Some(p) = stream.pending {
            order.push(p);
        }
    }

    // Pairing.
    let mut enters: BTreeMap<Guid, EnterRec> = BTreeMap::new();
    let mut leaves: BTreeMap<Guid, Vec<LeaveRec>> = BTreeMap::new();
    let mut counters_raw: Vec<(String, u64, u64, f64)> = Vec::new();
    let mut stats = PairStats::default();
    for &o in &order {
        match &events[o] {
            TraceEvent::Enter {
                time,
                location,
                guid,
                parent,
                primitive,
            } => {
                stats.enters += 1;
                if let Some(first) = enters.get(guid) {
                    return Err(IngestError::DuplicateGuid {
                        guid: *guid,
                        first: first.ordinal + 1,
                        second: o + 1,
                    });
                }
                let parent = match parent {
                    Some(p) if p == guid => {
                        warnings.push(Warning::new(
                            WarningCode::SelfParent,
                            format!("guid {guid} names itself as parent; parent ignored"),
                        ));
                        None
                    }
                    other => *other,
                };
                enters.insert(
                    *guid,
                    EnterRec {
                        ordinal: o,
                        time: time.0,
                        location: *location,
                        parent,
                        primitive: primitive.clone(),
                    },
                );
            }
            TraceEvent::Leave { time, location, guid } => {
                stats.leaves += 1;
                leaves.entry(*guid).or_default().push(LeaveRec {
                    time: time.0,
                    location: *location,
                });
            }
            TraceEvent::Counter {
                time,
                location,
                counter,
                value,
            } => counters_raw.push((counter.clone(), *location, time.0, *value)),
            _ => unreachable!("only timed events are ordered"),
        }
    }

    let trace_end = raw_max.unwrap_or(0);
    struct Paired {
        guid: Guid,
        parent: Option<Guid>,
        location: u64,
        primitive: String,
        enter: u64,
        leave: u64,
    }
    let mut paired: Vec<Paired> = Vec::with_capacity(enters.len());
    for (guid, rec) in &enters {
        let leave = match leaves.get_mut(guid) {
            Some(list) if !list.is_empty() => {
                let first = list.remove(0);
                if first.location != rec.location {
                    return Err(IngestError::LocationMismatch {
                        guid: *guid,
                        enter_location: rec.location,
                        leave_location: first.location,
                    });
                }
                if first.time < rec.time {
                    return Err(IngestError::NegativeDuration {
                        guid: *guid,
                        enter: rec.time,
                        leave: first.time,
                    });
                }
                stats.matched_pairs += 1;
                first.time
            }
            _ => {
                stats.truncated_enters += 1;
                warnings.push(Warning::new(
                    WarningCode::UnmatchedEnter,
                    format!("guid {guid} has no leave; truncated at trace end t={trace_end}"),
                ));
                trace_end
            }
        };
        if leave == rec.time {
            stats.zero_duration += 1;
            warnings.push(Warning::new(
                WarningCode::ZeroDuration,
                format!("guid {guid} has zero duration and was dropped"),
            ));
            continue;
        }
        paired.push(Paired {
            guid: *guid,
            parent: rec.parent,
            location: rec.location,
            primitive: rec.primitive.clone(),
            enter: rec.time,
            leave,
        });
    }
    for (guid, rest) in &leaves {
        for leave in rest {
            stats.unmatched_leaves += 1;
            warnings.push(Warning::new(
                WarningCode::UnmatchedLeave,
                format!(
                    "leave of guid {guid} at t={} has no matching enter; dropped",
                    leave.time
                ),
            ));
        }
    }

    // Dense locations over every id that was defined or carries data.
    let mut raw_locations: BTreeSet<u64> = location_defs.keys().copied().collect();
    raw_locations.extend(paired.iter().map(|p| p.location));
    raw_locations.extend(counters_raw.iter().map(|c| c.1));
    let mut dense: BTreeMap<u64, LocationId> = BTreeMap::new();
    let mut locations = Vec::with_capacity(raw_locations.len());
    for (i, raw) in raw_locations.iter().enumerate() {
        let id = LocationId(i as u32);
        dense.insert(*raw, id);
        let (core_id, thread_id) = match location_defs.get(raw) {
            Some(def) => *def,
            None => {
                // Traces without any definitions are labelled silently.
                if !location_defs.is_empty() {
                    warnings.push(Warning::new(
                        WarningCode::UndefinedLocation,
                        format!("location {raw} has no 'L' definition; labelled {raw}-0"),
                    ));
                }
                (*raw as i64, 0)
            }
        };
        locations.push(Location {
            index: id,
            core_id,
            thread_id,
        });
    }

    let epoch = paired
        .iter()
        .map(|p| p.enter)
        .chain(counters_raw.iter().map(|c| c.2))
        .min()
        .or(raw_min)
        .unwrap_or(0);

    let primitives = Interner::from_names(paired.iter().map(|p| p.primitive.as_str()));
    let counter_names = Interner::from_names(counters_raw.iter().map(|c| c.0.as_str()));

    let mut intervals: Vec<Interval> = paired
        .into_iter()
        .map(|p| Interval {
            guid: p.guid,
            parent: p.parent,
            location: dense[&p.location],
            primitive: PrimitiveId(primitives.id(&p.primitive).expect("interned")),
            enter: TimePoint(p.enter - epoch),
            leave: TimePoint(p.leave - epoch),
        })
        .collect();
    intervals.sort_by_key(|i| (i.enter, i.guid));

    let mut counters: Vec<CounterSample> = counters_raw
        .into_iter()
        .map(|(name, loc, time, value)| CounterSample {
            location: dense[&loc],
            counter: CounterId(counter_names.id(&name).expect("interned")),
            time: TimePoint(time - epoch),
            value,
        })
        .collect();
    // Stable: equal-time samples keep stream order.
    counters.sort_by_key(|c| (c.counter, c.location, c.time));
    for pair in counters.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.counter == b.counter && a.location == b.location && b.value < a.value {
            warnings.push(Warning::new(
                WarningCode::CounterDecrease,
                format!(
                    "counter '{}' on location {} decreases at t={} ({} -> {})",
                    counter_names.name(b.counter.0).unwrap_or("?"),
                    b.location.0,
                    b.time,
                    a.value,
                    b.value
                ),
            ));
        }
    }

    Ok(RawTrace {
        intervals,
        counters,
        locations,
        primitives,
        counter_names,
        source_refs,
        warnings,
        stats,
        epoch,
    })
}
