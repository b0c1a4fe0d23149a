//! Acceptance suite. Prints one `PASS <criterion>` or `FAIL <criterion>`
//! line per criterion and exits non-zero if any failed.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::{bin, fixture, get, get_binary, probe, probe_set, ServerProcess};
use tracescope::service::{execute, Params, Query, DEFAULT_OVERDRAW};
use tracescope::store::ingest_file;
use tracescope::Store;
use tracescope_core::query::{
    counter_rates, greedy_rows, histogram, selection_utilization, utilization, Cancel, HistogramScale, Selection,
    UtilizationFilter,
};
use tracescope_core::tracegen::{generate, GenConfig};
use tracescope_core::{ingest_text, BuildOptions, Dataset, Guid};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn build(text: &str, bins: u32) -> Dataset {
    Dataset::build(
        ingest_text(text).expect("ingest"),
        Vec::new(),
        BuildOptions { bin_count: bins },
    )
    .expect("build")
}

fn generated(seed: u64, locations: u32, intervals: u32, allow_overlap: bool, bins: u32) -> Dataset {
    let g = generate(&GenConfig {
        seed,
        locations,
        intervals,
        allow_overlap,
        ..GenConfig::default()
    });
    build(&g.text, bins)
}

fn params(query: &str) -> Params {
    query
        .split('&')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            (k.to_owned(), v.to_owned())
        })
        .collect()
}

fn index_correctness() -> Outcome {
    let started = Instant::now();
    for seed in 0..50 {
        let ds = generated(seed, 8, 1000, seed % 2 == 1, 1024);
        let sat = &ds.index.total;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let a = rng.random_range(0..=sat.bin_count);
            let b = rng.random_range(0..=sat.bin_count);
            let (lo, hi) = (a.min(b), a.max(b));
            let (t0, t1) = (
                (lo as u64 * sat.bin_width).min(ds.span()),
                (hi as u64 * sat.bin_width).min(ds.span()),
            );
            let brute: u64 = ds
                .intervals
                .iter()
                .map(|iv| iv.leave.0.min(t1).saturating_sub(iv.enter.0.max(t0)))
                .sum();
            ensure!(
                sat.aligned_sum(lo, hi) == brute,
                "seed {seed}: aligned_sum({lo},{hi}) != {brute}"
            );
            ensure!(
                sat.range_sum(t0, t1) == brute as f64,
                "seed {seed}: range_sum({t0},{t1}) != {brute}"
            );

            let q0 = rng.random_range(0..=ds.span());
            let q1 = q0 + rng.random_range(0..ds.span() / 4 + 1);
            let mut got = ds.index.tree.query(q0, q1);
            got.sort_unstable();
            let want: Vec<u32> = (0..ds.intervals.len() as u32)
                .filter(|&i| q0 < q1 && ds.intervals[i as usize].enter.0 < q1 && ds.intervals[i as usize].leave.0 > q0)
                .collect();
            ensure!(got == want, "seed {seed}: tree query [{q0},{q1}) differs from filter");
            for (l, tree) in ds.index.location_trees.iter().enumerate() {
                let mut got = tree.stab(q0);
                got.sort_unstable();
                let want: Vec<u32> = (0..ds.intervals.len() as u32)
                    .filter(|&i| {
                        let iv = &ds.intervals[i as usize];
                        iv.location.index() == l && iv.enter.0 <= q0 && iv.leave.0 > q0
                    })
                    .collect();
                ensure!(
                    got == want,
                    "seed {seed}: stab({q0}) on location {l} differs from filter"
                );
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(())
}

fn utilization_semantics() -> Outcome {
    for l in 1..=8u64 {
        let mut text = String::new();
        for loc in 0..l {
            text.push_str(&format!("L {loc} 0 {loc}\n"));
        }
        for loc in 0..l {
            text.push_str(&format!("E 0 {loc} {} - busy\n", loc + 1));
        }
        for loc in 0..l {
            text.push_str(&format!("X 7919 {loc} {}\n", loc + 1));
        }
        for bins in [1, 64, 4096] {
            let ds = build(&text, bins);
            for (t0, t1, w) in [(0, 7919, 1920), (0, 7919, 1), (13, 500, 777), (7000, 7001, 5)] {
                let u = utilization(&ds, t0, t1, w, &UtilizationFilter::default(), Cancel::NEVER)
                    .map_err(|e| e.to_string())?;
                ensure!(
                    u.values.iter().all(|&v| v == l as f64),
                    "L={l} bins={bins} [{t0},{t1}) w={w} is not exactly {l}"
                );
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..20 {
        let ds = generated(seed, 1 + seed as u32 % 8, 800, seed % 3 == 0, 1 << (seed % 12));
        for _ in 0..10 {
            let t0 = rng.random_range(0..ds.span());
            let t1 = rng.random_range(t0 + 1..=ds.span());
            let width = rng.random_range(1..2000);
            let selection = if rng.random_bool(0.5) {
                let guids = (0..rng.random_range(0..50))
                    .map(|_| ds.intervals[rng.random_range(0..ds.intervals.len())].guid)
                    .collect();
                Selection::Guids { guids }
            } else {
                let lo = rng.random_range(0..100);
                Selection::Durations {
                    min: lo,
                    max: lo + rng.random_range(0..500),
                }
            };
            let filter = UtilizationFilter::default();
            let total = utilization(&ds, t0, t1, width, &filter, Cancel::NEVER).map_err(|e| e.to_string())?;
            let part = selection_utilization(&ds, &selection, t0, t1, width, &filter, Cancel::NEVER)
                .map_err(|e| e.to_string())?;
            for (i, (p, t)) in part.values.iter().zip(&total.values).enumerate() {
                ensure!(
                    *p <= *t && *p >= 0.0,
                    "seed {seed} pixel {i}: selected {p} vs total {t}"
                );
            }
        }
    }
    Ok(())
}

fn check_tree(ds: &Dataset, name: &str) -> Outcome {
    let tree = &ds.tree;
    let total: u64 = ds.intervals.iter().map(|iv| iv.duration()).sum();
    let inclusive: u64 = tree.nodes.iter().map(|n| n.inclusive_duration).sum();
    ensure!(inclusive == total, "{name}: inclusive sum {inclusive} != {total}");
    for (i, node) in tree.nodes.iter().enumerate() {
        let children: u64 = node
            .children
            .iter()
            .map(|c| tree.nodes[c.index()].subtree_duration)
            .sum();
        ensure!(
            node.subtree_duration == node.inclusive_duration + children,
            "{name}: recurrence fails at node {i}"
        );
    }
    let roots: u64 = tree.roots.iter().map(|r| tree.nodes[r.index()].subtree_duration).sum();
    ensure!(roots == total, "{name}: root subtrees {roots} != {total}");
    Ok(())
}

fn tree_conservation() -> Outcome {
    for seed in 0..20 {
        let g = generate(&GenConfig {
            seed,
            depth: 1 + seed as u32 % 6,
            intervals: 500,
            allow_overlap: seed % 2 == 0,
            ..GenConfig::default()
        });
        check_tree(&build(&g.text, 64), &format!("generated {seed}"))?;
    }
    let three = build(&fs::read_to_string(fixture("three.trace")).unwrap(), 16);
    check_tree(&three, "three")?;
    let unresolved = build(
        "L 0 0 0\nE 0 0 1 77 a\nE 2 0 2 1 b\nX 5 0 2\nX 9 0 1\nE 10 0 3 99 c\nX 12 0 3\n",
        8,
    );
    ensure!(
        unresolved.tree.unresolved_parent_count == 2,
        "unresolved parents not counted"
    );
    check_tree(&unresolved, "unresolved")?;
    let cycle = build(
        "L 0 0 0\nL 1 0 1\nE 0 0 1 2 a\nE 1 1 2 1 b\nX 4 1 2\nX 6 0 1\nE 7 0 3 3 c\nX 8 0 3\nE 8 1 4 - d\nX 11 1 4\n",
        8,
    );
    ensure!(cycle.tree.cycle_break_count >= 1, "cycle not broken");
    check_tree(&cycle, "cycle")
}

fn rate_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..30 {
        let c: f64 = rng.random_range(0.001..1e6);
        let times: BTreeSet<u64> = (0..rng.random_range(2..80))
            .map(|_| rng.random_range(0..1_000_000))
            .collect();
        if times.len() < 2 {
            continue;
        }
        let mut text = String::from("L 0 0 0\n");
        for &t in &times {
            text.push_str(&format!("C {t} 0 acc {:e}\n", c * t as f64));
        }
        let ds = build(&text, 16);
        let (first, last) = (*times.first().unwrap(), *times.last().unwrap());
        let width = rng.random_range(1..1920);
        let b = counter_rates(&ds, "acc", 0, last - first, width, false, Cancel::NEVER).map_err(|e| e.to_string())?;
        ensure!(b.pixels.iter().all(Option::is_some), "case {case}: uncovered pixel");
        for p in b.pixels.iter().flatten() {
            for v in [p.mean, p.min, p.max] {
                ensure!((v - c).abs() <= 1e-9 * c, "case {case}: rate {v} vs {c}");
            }
            ensure!(p.stddev == 0.0, "case {case}: stddev {}", p.stddev);
        }
    }
    Ok(())
}

fn greedy_layout() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..100 {
        let n = rng.random_range(1..200);
        let extents: Vec<(u64, u64)> = (0..n)
            .map(|_| {
                let s = rng.random_range(0..10_000);
                (s, s + rng.random_range(1..1500))
            })
            .collect();
        let rows = greedy_rows(&extents);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (extents[i], extents[j]);
                ensure!(
                    rows[i] != rows[j] || a.1 <= b.0 || b.1 <= a.0,
                    "set {set}: bars {i} and {j} collide"
                );
            }
        }
        let overlap = extents
            .iter()
            .map(|&(s, _)| extents.iter().filter(|&&(a, b)| a <= s && s < b).count() as u32)
            .max()
            .unwrap();
        let used = rows.iter().max().unwrap() + 1;
        ensure!(used == overlap, "set {set}: {used} rows for overlap {overlap}");
    }
    Ok(())
}

fn histogram_counts() -> Outcome {
    let ds = generated(3, 4, 2000, true, 64);
    for node in [None, Some(tracescope_core::NodeId(0))] {
        let expected = match node {
            Some(n) => ds.node_index(n).unwrap().members.len() as u64,
            None => ds.intervals.len() as u64,
        };
        for scale in [HistogramScale::Linear, HistogramScale::Log] {
            for k in 1..=64 {
                let h = histogram(&ds, k, node, scale)
                    .map_err(|e| e.to_string())?
                    .ok_or("no histogram")?;
                let sum: u64 = h.counts.iter().sum();
                ensure!(sum == expected, "K={k} {scale:?}: {sum} != {expected}");
            }
        }
    }
    let small = build(
        "L 0 0 0\nE 0 0 1 - a\nX 1 0 1\nE 1 0 2 - a\nX 2 0 2\nE 2 0 3 - a\nX 7 0 3\n",
        8,
    );
    let h = histogram(&small, 2, None, HistogramScale::Linear)
        .map_err(|e| e.to_string())?
        .ok_or("no histogram")?;
    ensure!(h.counts == [2, 1], "{{1,1,5}} at K=2 gave {:?}", h.counts);
    Ok(())
}

fn bundle_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let mut inputs = vec![fixture("three.trace")];
    for seed in 0..3 {
        let path = dir.path().join(format!("gen{seed}.trace"));
        let g = generate(&GenConfig {
            seed,
            intervals: 2000,
            ..GenConfig::default()
        });
        fs::write(&path, g.text).unwrap();
        inputs.push(path);
    }
    let options = BuildOptions { bin_count: 1024 };
    for path in inputs {
        let before = probe(&ingest_file(&path, "probe", options).map_err(|e| e.to_string())?);
        let id = store
            .bundle(&path, "probe", options)
            .map_err(|e| e.to_string())?
            .dataset_id;
        store.evict();
        let reopened = Store::open(dir.path()).map_err(|e| e.to_string())?;
        let loaded = reopened.load(&id).map_err(|e| e.to_string())?;
        let after = probe(&loaded);
        ensure!(before.len() == 20, "probe set has {} queries", before.len());
        for (i, (a, b)) in before.iter().zip(&after).enumerate() {
            ensure!(a == b, "{}: probe {i} differs after reload", path.display());
        }
    }
    Ok(())
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn latency() -> Outcome {
    let g = generate(&GenConfig {
        seed: 2024,
        locations: 8,
        intervals: 30_000,
        ..GenConfig::default()
    });
    let ds = build(&g.text, tracescope_core::index::DEFAULT_BIN_COUNT);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut report = Vec::new();
    let mut run = |endpoint: &str,
                   make: &mut dyn FnMut(&mut ChaCha8Rng) -> String,
                   runs: usize|
     -> Result<Vec<Duration>, String> {
        let mut times = Vec::with_capacity(runs);
        for _ in 0..runs {
            let query = make(&mut rng);
            let started = Instant::now();
            let q = Query::parse(&ds, endpoint, &params(&query), DEFAULT_OVERDRAW).map_err(|e| e.message)?;
            let answer = execute(&ds, &q, Cancel::NEVER).map_err(|e| e.message)?;
            std::hint::black_box(answer.to_json());
            times.push(started.elapsed());
        }
        times.sort_unstable();
        Ok(times)
    };
    let span = ds.span();
    let mut viewport = |rng: &mut ChaCha8Rng| {
        // Zoom levels from the whole trace down to a few hundred ticks.
        let len = (span >> rng.random_range(0..10)).max(200).min(span);
        let t0 = rng.random_range(0..=span - len);
        format!("t0={t0}&t1={}&width=1920", t0 + len)
    };
    for endpoint in ["gantt", "utilization"] {
        let times = run(endpoint, &mut viewport, 60)?;
        let (median, p99) = (percentile(&times, 0.5), percentile(&times, 0.99));
        report.push(format!("{endpoint} median {median:?} p99 {p99:?}"));
        ensure!(
            median < Duration::from_millis(100) && p99 < Duration::from_millis(500),
            "{endpoint}: median {median:?}, p99 {p99:?}"
        );
    }
    let guids: Vec<Guid> = ds.intervals.iter().map(|iv| iv.guid).collect();
    let mut lookups = Vec::new();
    for _ in 0..200 {
        let guid = guids[rng.random_range(0..guids.len())];
        let started = Instant::now();
        let q = Query::parse(&ds, &format!("interval/{}", guid.0), &HashMap::new(), DEFAULT_OVERDRAW)
            .map_err(|e| e.message)?;
        std::hint::black_box(execute(&ds, &q, Cancel::NEVER).map_err(|e| e.message)?.to_json());
        lookups.push(started.elapsed());
    }
    lookups.sort_unstable();
    let worst = *lookups.last().unwrap();
    report.push(format!("lookup max {worst:?}"));
    ensure!(worst < Duration::from_millis(10), "interval lookup took {worst:?}");
    println!("     {}", report.join(", "));
    Ok(())
}

fn keys(v: &Value) -> Vec<&str> {
    let mut k: Vec<&str> = v
        .as_object()
        .map(|o| o.keys().map(String::as_str).collect())
        .unwrap_or_default();
    k.sort_unstable();
    k
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .args(["bundle", "--label", "three"])
        .arg(fixture("three.trace"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "bundle failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let id = String::from_utf8_lossy(&out.stdout)
        .lines()
        .next()
        .unwrap_or("")
        .to_owned();
    let server = ServerProcess::start(dir.path());
    let base = &server.base;

    let health = get(base, "/api/v1/health");
    ensure!(health.status == 200, "health returned {}", health.status);
    let list = get(base, "/api/v1/datasets").json();
    ensure!(
        list[0]["dataset_id"] == id.as_str(),
        "catalog does not list {id}: {list}"
    );

    let pixel = ["t0", "t1", "width"];
    let schema: &[(&str, &[&str])] = &[
        (
            "",
            &[
                "counter_names",
                "dataset_id",
                "interval_count",
                "label",
                "location_count",
                "locations",
                "primitive_names",
                "source_files",
                "time_begin",
                "time_end",
                "warnings",
            ],
        ),
        ("utilization?width=64", &["t0", "t1", "values", "width"]),
        (
            "utilization?width=64&selection=node:1",
            &["selected", "t0", "t1", "values", "width"],
        ),
        ("gantt?width=64", &["rows", "t0", "t1", "width"]),
        ("histogram?bins=2", &["bin_edges", "counts", "filter", "scale"]),
        ("tree", &["depth", "nodes", "roots"]),
        (
            "agg-gantt?node=1&width=64",
            &["bars", "node", "row_count", "t0", "t1", "width"],
        ),
        ("counters", &["counters"]),
        (
            "counter?name=PAPI_TOT_CYC&width=64",
            &["counter", "pixels", "resets", "t0", "t1", "width"],
        ),
        (
            "counter?name=PAPI_TOT_CYC&width=64&per_location=true",
            &["counter", "per_location", "pixels", "resets", "t0", "t1", "width"],
        ),
        (
            "interval/2",
            &[
                "context",
                "duration",
                "enter",
                "guid",
                "leave",
                "location",
                "location_label",
                "node",
                "parent",
                "primitive",
            ],
        ),
        (
            "interval-at?time=15&loc=1",
            &[
                "context",
                "duration",
                "enter",
                "guid",
                "leave",
                "location",
                "location_label",
                "node",
                "parent",
                "primitive",
            ],
        ),
        (
            "deps/1?descendants=true",
            &["ancestors", "children", "descendants", "guid", "truncated"],
        ),
        ("source", &["sources"]),
    ];
    for (endpoint, expected) in schema {
        let path = if endpoint.is_empty() {
            format!("/api/v1/datasets/{id}")
        } else {
            format!("/api/v1/datasets/{id}/{endpoint}")
        };
        let r = get(base, &path);
        ensure!(r.status == 200, "{path}: status {} {}", r.status, r.text());
        ensure!(
            r.content_type.starts_with("application/json"),
            "{path}: content type {}",
            r.content_type
        );
        let body = r.json();
        ensure!(keys(&body) == *expected, "{path}: keys {:?}", keys(&body));
        if expected.contains(&"width") {
            for h in pixel {
                ensure!(
                    r.header(&format!("x-rendered-{h}")).is_some(),
                    "{path}: missing rendered {h} header"
                );
            }
        }
    }
    let hist = get(base, &format!("/api/v1/datasets/{id}/histogram?bins=2")).json();
    ensure!(hist["counts"] == serde_json::json!([2, 1]), "histogram {hist}");
    let util = get(base, &format!("/api/v1/datasets/{id}/utilization?width=3&overdraw=1")).json();
    ensure!(
        util["values"] == serde_json::json!([1.8, 1.8, 1.0]),
        "utilization {util}"
    );
    for endpoint in [
        "utilization?width=8",
        "gantt?width=8",
        "counter?name=PAPI_TOT_CYC&width=8",
    ] {
        let r = get_binary(base, &format!("/api/v1/datasets/{id}/{endpoint}"));
        ensure!(
            r.status == 200 && r.content_type == "application/octet-stream",
            "{endpoint}: binary {} {}",
            r.status,
            r.content_type
        );
        ensure!(
            !r.body.is_empty() && r.body.len().is_multiple_of(4),
            "{endpoint}: {} bytes",
            r.body.len()
        );
    }
    let missing = get(base, &format!("/api/v1/datasets/{id}/interval/999"));
    ensure!(
        missing.status == 404 && missing.json()["error"]["code"] == "UNKNOWN_GUID",
        "missing guid: {}",
        missing.text()
    );

    // The same twenty probes the store round-trip uses, through HTTP.
    let ds = Store::open(dir.path())
        .map_err(|e| e.to_string())?
        .load(&id)
        .map_err(|e| e.to_string())?;
    for (endpoint, p) in probe_set(&ds) {
        let mut pairs: Vec<String> = p.iter().map(|(k, v)| format!("{k}={v}")).collect();
        pairs.sort();
        let path = format!(
            "/api/v1/datasets/{id}{}{endpoint}?{}",
            if endpoint.is_empty() { "" } else { "/" },
            pairs.join("&")
        );
        let r = get(base, &path);
        ensure!(r.status == 200, "{path}: status {}", r.status);
        ensure!(r.json().is_object() || r.json().is_null(), "{path}: not a JSON object");
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "index correctness: SAT range sums and interval-tree queries equal brute force",
            index_correctness,
        ),
        (
            "utilization: fully busy trace reads L exactly; selection never exceeds total",
            utilization_semantics,
        ),
        (
            "execution tree conserves duration, including unresolved parents and cycles",
            tree_conservation,
        ),
        (
            "counter rate: linear accumulator yields its constant rate, stddev 0",
            rate_formula,
        ),
        (
            "greedy layout: disjoint rows, row count equals maximum overlap",
            greedy_layout,
        ),
        (
            "histogram: counts sum to matches for K 1..64 on both scales; {1,1,5} at K=2 is [2,1]",
            histogram_counts,
        ),
        (
            "bundle round-trip: 20 probes byte-identical after reload",
            bundle_round_trip,
        ),
        (
            "latency: gantt and utilization at width 1920 on 30k intervals; lookup under 10 ms",
            latency,
        ),
        (
            "end to end: CLI bundle, serve, HTTP probe of every endpoint",
            end_to_end,
        ),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}\n     {why}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
