//! Deterministic synthetic traces with known ground truth.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raw timestamps start here; ingest normalizes it away.
pub const BASE_TIME: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterSpec {
    pub names: Vec<String>,
    /// Samples emitted per counter per location.
    pub samples: u32,
}

impl Default for CounterSpec {
    fn default() -> Self {
        CounterSpec {
            names: alloc::vec!["PAPI_TOT_CYC".into()],
            samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    pub locations: u32,
    pub intervals: u32,
    /// Maximum context depth; 1 makes every interval a root.
    pub depth: u32,
    pub counters: CounterSpec,
    /// Let intervals on one location overlap.
    pub allow_overlap: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            locations: 4,
            intervals: 1000,
            depth: 4,
            counters: CounterSpec::default(),
            allow_overlap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GroundTruth {
    /// Summed interval durations per location.
    pub busy_ticks: Vec<u64>,
    /// Interval count per context path (primitive names joined by `/`).
    pub contexts: BTreeMap<String, u64>,
    /// All interval durations, ascending.
    pub durations: Vec<u64>,
    /// Normalized time of the last event.
    pub span: u64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub text: String,
    pub truth: GroundTruth,
}

struct Planned {
    location: u32,
    enter: u64,
    leave: u64,
    parent: Option<usize>,
    level: u32,
    primitive: String,
}

enum Record {
    Leave {
        time: u64,
        location: u32,
        guid: u64,
    },
    Counter {
        time: u64,
        location: u32,
        name: usize,
        value: u64,
    },
    Enter {
        time: u64,
        location: u32,
        guid: u64,
    },
}

impl Record {
    fn time(&self) -> u64 {
        match *self {
            Record::Leave { time, .. } | Record::Counter { time, .. } | Record::Enter { time, .. } => time,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Record::Leave { .. } => 0,
            Record::Counter { .. } => 1,
            Record::Enter { .. } => 2,
        }
    }
}

const PRIMITIVES: [&str; 4] = ["compute", "reduce", "halo", "spawn"];

fn duration(rng: &mut ChaCha8Rng) -> u64 {
    if rng.random_ratio(1, 20) {
        rng.random_range(200..2000)
    } else {
        rng.random_range(1..80)
    }
}

/// Generate a trace; the same config always yields the same bytes.
///
/// Parents are chosen among recent intervals that entered strictly earlier,
/// so each non-root interval's parent precedes it in time.
pub fn generate(config: &GenConfig) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let locations = config.locations.max(1);
    let n = config.intervals.max(1) as usize;
    let depth = config.depth.max(1);
    let mut cursor = alloc::vec![0u64; locations as usize];
    let mut planned: Vec<Planned> = Vec::with_capacity(n);

    for i in 0..n {
        let location = rng.random_range(0..locations);
        let enter = cursor[location as usize] + rng.random_range(0..20);
        let dur = duration(&mut rng);
        let leave = enter + dur;
        cursor[location as usize] = if config.allow_overlap && rng.random_bool(0.3) {
            enter + dur / 2
        } else {
            leave
        };
        let mut parent = None;
        if i > 0 && depth > 1 && !rng.random_ratio(1, 10) {
            for _ in 0..8 {
                let back = rng.random_range(0..i.min(64));
                let j = i - 1 - back;
                if planned[j].level < depth && planned[j].enter < enter {
                    parent = Some(j);
                    break;
                }
            }
        }
        let level = parent.map_or(1, |p| planned[p].level + 1);
        let primitive = PRIMITIVES[rng.random_range(0..PRIMITIVES.len())];
        planned.push(Planned {
            location,
            enter,
            leave,
            parent,
            level,
            primitive: alloc::format!("{primitive}_{level}"),
        });
    }

    let mut truth = GroundTruth {
        busy_ticks: alloc::vec![0; locations as usize],
        ..GroundTruth::default()
    };
    let mut paths: Vec<String> = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(2 * n);
    for (i, p) in planned.iter().enumerate() {
        let path = match p.parent {
            Some(j) => alloc::format!("{}/{}", paths[j], p.primitive),
            None => p.primitive.clone(),
        };
        *truth.contexts.entry(path.clone()).or_default() += 1;
        paths.push(path);
        truth.busy_ticks[p.location as usize] += p.leave - p.enter;
        truth.durations.push(p.leave - p.enter);
        let guid = i as u64 + 1;
        records.push(Record::Enter {
            time: p.enter,
            location: p.location,
            guid,
        });
        records.push(Record::Leave {
            time: p.leave,
            location: p.location,
            guid,
        });
    }
    truth.durations.sort_unstable();
    let end = planned.iter().map(|p| p.leave).max().unwrap_or(0);
    let first = planned.iter().map(|p| p.enter).min().unwrap_or(0);
    truth.span = end - first;

    for (name, _) in config.counters.names.iter().enumerate() {
        for location in 0..locations {
            let mut value = 0u64;
            let mut times: Vec<u64> = (0..config.counters.samples)
                .map(|_| rng.random_range(first..=end))
                .collect();
            times.sort_unstable();
            times.dedup();
            let rate = rng.random_range(1..1000u64);
            let mut last = first;
            for time in times {
                value += rate * (time - last) + rng.random_range(0..rate);
                last = time;
                records.push(Record::Counter {
                    time,
                    location,
                    name,
                    value,
                });
            }
        }
    }
    records.sort_by_key(|r| (r.time(), r.rank()));
    let mut text = String::with_capacity(32 * records.len());
    let _ = writeln!(
        text,
        "# tracegen seed={} locations={} intervals={} depth={} overlap={}",
        config.seed, locations, n, depth, config.allow_overlap
    );
    for l in 0..locations {
        let _ = writeln!(text, "L {l} {} {}", l / 2, l % 2);
    }
    for r in &records {
        let _ = match *r {
            Record::Enter { time, location, guid } => {
                let p = &planned[guid as usize - 1];
                match p.parent {
                    Some(j) => writeln!(
                        text,
                        "E {} {location} {guid} {} {}",
                        BASE_TIME + time,
                        j + 1,
                        p.primitive
                    ),
                    None => writeln!(text, "E {} {location} {guid} - {}", BASE_TIME + time, p.primitive),
                }
            }
            Record::Leave { time, location, guid } => writeln!(text, "X {} {location} {guid}", BASE_TIME + time),
            Record::Counter {
                time,
                location,
                name,
                value,
            } => writeln!(
                text,
                "C {} {location} {} {value}",
                BASE_TIME + time,
                config.counters.names[name]
            ),
        };
    }
    Generated { text, truth }
}
