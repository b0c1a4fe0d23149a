mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use support::{dataset, spans, Span};
use tracescope_core::query::{
    counter_rates, gantt_matrix, greedy_rows, histogram, selection_utilization, utilization, Cancel, HistogramScale,
    Selection, UtilizationFilter,
};
use tracescope_core::tracegen::{generate, GenConfig};
use tracescope_core::{ingest_text, pair_events, BuildOptions, Dataset, Guid, NodeId, TimePoint, TraceEvent};

/// Busy resources per pixel by direct rational overlap, in scaled units.
fn brute_utilization(ds: &Dataset, t0: u64, t1: u64, width: u32, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let (w, span) = (width as u128, (t1 - t0) as u128);
    (0..w)
        .map(|i| {
            let lo = t0 as u128 * w + i * span;
            let hi = lo + span;
            let mass: u128 = ds
                .intervals
                .iter()
                .enumerate()
                .filter(|(k, _)| keep(*k))
                .map(|(_, iv)| {
                    (iv.leave.0 as u128 * w)
                        .min(hi)
                        .saturating_sub((iv.enter.0 as u128 * w).max(lo))
                })
                .sum();
            mass as f64 / span as f64
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn max_overlap(extents: &[(u64, u64)]) -> u32 {
    let mut best = 0;
    for &(s, _) in extents {
        let n = extents.iter().filter(|&&(a, b)| a <= s && s < b).count() as u32;
        best = best.max(n);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn utilization_matches_brute_force(spans in spans(4, 3000, 120), t0 in 0u64..2500, len in 1u64..3000, width in 1u32..40, bins_log in 0u32..9) {
        let ds = dataset(&spans, 1 << bins_log);
        let t1 = t0 + len;
        let bin_width = ds.index.total.bin_width;
        let got = utilization(&ds, t0, t1, width, &UtilizationFilter::default(), Cancel::NEVER).unwrap();
        let want = brute_utilization(&ds, t0, t1, width, |_| true);
        if len < width as u64 * bin_width {
            for (g, w) in got.values.iter().zip(&want) {
                prop_assert!(close(*g, *w), "{} vs {}", g, w);
            }
        }
        // Bin-aligned windows are exact on either path.
        let (a0, a1) = (t0 / bin_width * bin_width, (t0 / bin_width + 1 + len / bin_width) * bin_width);
        let aligned = utilization(&ds, a0, a1, width, &UtilizationFilter::default(), Cancel::NEVER).unwrap();
        let want: f64 = brute_utilization(&ds, a0, a1, width, |_| true).iter().sum();
        let got: f64 = aligned.values.iter().sum();
        prop_assert!(close(got, want), "{} vs {}", got, want);
    }

    #[test]
    fn location_filter_matches_brute_force(spans in spans(4, 2000, 100), lo in 0u32..4, n in 1u32..4, width in 1u32..30) {
        let ds = dataset(&spans, 4096);
        let locs = lo.min(ds.locations.len() as u32 - 1)..(lo + n).min(ds.locations.len() as u32).max(lo.min(ds.locations.len() as u32 - 1) + 1);
        let filter = UtilizationFilter { node: None, locations: Some(locs.clone()) };
        let t1 = ds.span();
        let got = utilization(&ds, 0, t1, width, &filter, Cancel::NEVER).unwrap();
        let want = brute_utilization(&ds, 0, t1, width, |k| locs.contains(&ds.intervals[k].location.0));
        for (g, w) in got.values.iter().zip(&want) {
            prop_assert!(close(*g, *w), "{} vs {}", g, w);
        }
    }

    #[test]
    fn selection_never_exceeds_total(spans in spans(3, 2000, 100), picks in prop::collection::vec(1u64..100, 0..20), t0 in 0u64..1500, len in 1u64..2000, width in 1u32..64, bins_log in 0u32..10) {
        let ds = dataset(&spans, 1 << bins_log);
        let t1 = t0 + len;
        let guids = picks.into_iter().map(Guid).filter(|g| ds.position_of(*g).is_some()).collect();
        let sel = Selection::Guids { guids };
        let filter = UtilizationFilter::default();
        let total = utilization(&ds, t0, t1, width, &filter, Cancel::NEVER).unwrap();
        let part = selection_utilization(&ds, &sel, t0, t1, width, &filter, Cancel::NEVER).unwrap();
        for (p, t) in part.values.iter().zip(&total.values) {
            prop_assert!(*p <= *t, "{} > {}", p, t);
            prop_assert!(*p >= 0.0);
        }
    }

    #[test]
    fn gantt_counts_match_brute_force(spans in spans(3, 2000, 120), t0 in 0u64..1500, len in 1u64..2000, width in 1u32..50) {
        let ds = dataset(&spans, 16);
        let t1 = t0 + len;
        let n = ds.locations.len() as u32;
        let m = gantt_matrix(&ds, t0, t1, width, 0..n, None, Cancel::NEVER).unwrap();
        let (w, span) = (width as u128, len as u128);
        for row in &m.rows {
            for (i, cell) in row.cells.iter().enumerate() {
                let lo = t0 as u128 * w + i as u128 * span;
                let hi = lo + span;
                let hits: Vec<Guid> = ds
                    .intervals
                    .iter()
                    .filter(|iv| iv.location.0 == row.location)
                    .filter(|iv| (iv.enter.0 as u128 * w) < hi && (iv.leave.0 as u128 * w) > lo)
                    .map(|iv| iv.guid)
                    .collect();
                prop_assert_eq!(cell.count as usize, hits.len());
                prop_assert_eq!(cell.solo_guid, (hits.len() == 1).then(|| hits[0]));
                prop_assert!((0.0..=1.0).contains(&cell.busy_fraction));
                prop_assert_eq!(cell.busy_fraction > 0.0, !hits.is_empty());
            }
        }
    }

    #[test]
    fn greedy_rows_are_disjoint_and_minimal(raw in prop::collection::vec((0u64..500, 1u64..80), 1..60)) {
        let extents: Vec<(u64, u64)> = raw.iter().map(|&(s, l)| (s, s + l)).collect();
        let rows = greedy_rows(&extents);
        for i in 0..extents.len() {
            for j in i + 1..extents.len() {
                if rows[i] == rows[j] {
                    let (a, b) = (extents[i], extents[j]);
                    prop_assert!(a.1 <= b.0 || b.1 <= a.0, "{:?} and {:?} share row {}", a, b, rows[i]);
                }
            }
        }
        prop_assert_eq!(rows.iter().max().unwrap() + 1, max_overlap(&extents));
    }

    #[test]
    fn histogram_counts_sum_to_matches(spans in spans(2, 5000, 150), node_pick in 0usize..8) {
        let ds = dataset(&spans, 16);
        let node = (node_pick < ds.tree.len()).then_some(NodeId(node_pick as u32));
        let expected = match node {
            Some(n) => ds.node_index(n).unwrap().members.len() as u64,
            None => ds.intervals.len() as u64,
        };
        for scale in [HistogramScale::Linear, HistogramScale::Log] {
            for k in 1..=64 {
                let h = histogram(&ds, k, node, scale).unwrap().unwrap();
                prop_assert_eq!(h.counts.iter().sum::<u64>(), expected);
                prop_assert_eq!(h.bin_edges.len(), h.counts.len() + 1);
                prop_assert!(h.bin_edges.windows(2).all(|e| e[0] < e[1]));
            }
        }
    }

    #[test]
    fn linear_accumulator_has_constant_rate(c in 0.001f64..1e6, times in prop::collection::btree_set(0u64..100_000, 2..60), width in 1u32..200) {
        let times: Vec<u64> = times.into_iter().collect();
        let mut text = String::from("L 0 0 0\n");
        for &t in &times {
            text.push_str(&format!("C {t} 0 acc {:e}\n", c * t as f64));
        }
        let ds = Dataset::build(ingest_text(&text).unwrap(), Vec::new(), BuildOptions { bin_count: 8 }).unwrap();
        let (first, last) = (times[0], *times.last().unwrap());
        let b = counter_rates(&ds, "acc", 0, last - first, width, false, Cancel::NEVER).unwrap();
        prop_assert_eq!(b.resets, 0);
        for p in b.pixels.iter().flatten() {
            prop_assert!((p.mean - c).abs() <= 1e-9 * c, "{} vs {}", p.mean, c);
            prop_assert!((p.min - c).abs() <= 1e-9 * c && (p.max - c).abs() <= 1e-9 * c);
            prop_assert_eq!(p.stddev, 0.0);
        }
        prop_assert!(b.pixels.iter().all(Option::is_some));
    }

    #[test]
    fn tree_conserves_duration(raw in prop::collection::vec((0u64..3, 0u64..1000, 1u64..200, prop::option::of(1u64..60)), 1..50)) {
        let spans: Vec<Span> = std::iter::once((0, 0, 1, None))
            .chain(raw.into_iter().map(|(l, a, len, p)| (l, a, a + len, p)))
            .collect();
        let ds = dataset(&spans, 8);
        check_tree(&ds)?;
    }
}

fn check_tree(ds: &Dataset) -> Result<(), TestCaseError> {
    let tree = &ds.tree;
    let total: u64 = ds.intervals.iter().map(|iv| iv.duration()).sum();
    let inclusive: u64 = tree.nodes.iter().map(|n| n.inclusive_duration).sum();
    prop_assert_eq!(inclusive, total);
    let roots: u64 = tree.roots.iter().map(|r| tree.nodes[r.index()].subtree_duration).sum();
    prop_assert_eq!(roots, total);
    let mut counted = 0;
    for node in &tree.nodes {
        let children: u64 = node
            .children
            .iter()
            .map(|c| tree.nodes[c.index()].subtree_duration)
            .sum();
        prop_assert_eq!(node.subtree_duration, node.inclusive_duration + children);
        let own: u64 = node
            .instances
            .iter()
            .map(|&p| ds.intervals[p as usize].duration())
            .sum();
        prop_assert_eq!(own, node.inclusive_duration);
        prop_assert_eq!(node.instances.len() as u64, node.interval_count);
        counted += node.interval_count;
    }
    prop_assert_eq!(counted, ds.intervals.len() as u64);
    Ok(())
}

#[test]
fn tree_conserves_with_cycles_and_unresolved_parents() {
    // 1 <-> 2 form a cycle, 3 -> 2, 4 -> missing 77, 5 -> 4, 6 -> 6.
    let spans: Vec<Span> = vec![
        (0, 0, 10, Some(2)),
        (0, 20, 30, Some(1)),
        (1, 5, 9, Some(2)),
        (1, 12, 40, Some(77)),
        (2, 13, 14, Some(4)),
        (2, 50, 55, Some(6)),
    ];
    let ds = dataset(&spans, 8);
    assert!(ds.tree.cycle_break_count >= 1);
    assert!(ds.tree.unresolved_parent_count >= 1);
    check_tree(&ds).unwrap();
}

#[test]
fn fully_busy_trace_is_exactly_location_count() {
    for l in 1..=8u64 {
        let spans: Vec<Span> = (0..l).map(|loc| (loc, 0, 9973, None)).collect();
        for bins in [1, 8, 64, 8192, 16_384] {
            let ds = dataset(&spans, bins);
            for (t0, t1, w) in [
                (0, 9973, 1),
                (0, 9973, 1920),
                (17, 4000, 333),
                (100, 101, 7),
                (0, 9973, 9973),
            ] {
                let u = utilization(&ds, t0, t1, w, &UtilizationFilter::default(), Cancel::NEVER).unwrap();
                assert!(
                    u.values.iter().all(|&v| v == l as f64),
                    "L={l} bins={bins} [{t0},{t1}) w={w}: {:?}",
                    &u.values[..3.min(u.values.len())]
                );
            }
        }
    }
}

#[test]
fn tracegen_truth_matches_bundle() {
    for seed in 0..6 {
        let config = GenConfig {
            seed,
            locations: 1 + seed as u32 % 5,
            intervals: 400,
            depth: 1 + seed as u32 % 4,
            allow_overlap: seed % 2 == 0,
            ..GenConfig::default()
        };
        let g = generate(&config);
        let ds = Dataset::build(
            ingest_text(&g.text).unwrap(),
            Vec::new(),
            BuildOptions { bin_count: 256 },
        )
        .unwrap();
        assert_eq!(ds.intervals.len(), 400);
        assert_eq!(ds.span(), g.truth.span);
        let mut busy = vec![0u64; ds.locations.len()];
        for iv in &ds.intervals {
            busy[iv.location.index()] += iv.duration();
        }
        assert_eq!(busy, g.truth.busy_ticks);
        for (l, t) in ds.index.per_location.iter().enumerate() {
            assert_eq!(t.total(), g.truth.busy_ticks[l]);
        }
        assert_eq!(ds.index.durations, g.truth.durations);
        let mut contexts = BTreeMap::new();
        for node in &ds.tree.nodes {
            let path: Vec<&str> = node
                .context
                .0
                .iter()
                .map(|p| ds.primitives.name(p.0).unwrap())
                .collect();
            contexts.insert(path.join("/"), node.interval_count);
        }
        assert_eq!(contexts, g.truth.contexts);
        assert_eq!(ds.tree.unresolved_parent_count + ds.tree.cycle_break_count, 0);
        check_tree(&ds).unwrap();
        assert_eq!(ds.counter_names.len(), 1);
        let b = counter_rates(&ds, "PAPI_TOT_CYC", 0, ds.span(), 64, false, Cancel::NEVER).unwrap();
        assert_eq!(b.resets, 0);
    }
}

#[test]
fn shuffled_child_lists_follow_enter_order() {
    let spans: Vec<Span> = vec![
        (0, 0, 100, None),
        (0, 40, 50, Some(1)),
        (1, 10, 20, Some(1)),
        (2, 5, 7, Some(1)),
        (1, 30, 35, Some(1)),
    ];
    let ds = dataset(&spans, 4);
    let kids: Vec<u64> = ds
        .index
        .children
        .children(0)
        .iter()
        .map(|&p| ds.intervals[p as usize].enter.0)
        .collect();
    assert_eq!(kids, [5, 10, 30, 40]);
}

#[test]
fn pairing_handles_out_of_order_neighbors() {
    // Leave of 1 arrives after the enter of 2 at the same instant.
    let events = vec![
        TraceEvent::Enter {
            time: TimePoint(0),
            location: 0,
            guid: Guid(1),
            parent: None,
            primitive: "a".into(),
        },
        TraceEvent::Enter {
            time: TimePoint(5),
            location: 0,
            guid: Guid(2),
            parent: None,
            primitive: "b".into(),
        },
        TraceEvent::Leave {
            time: TimePoint(5),
            location: 0,
            guid: Guid(1),
        },
        TraceEvent::Leave {
            time: TimePoint(9),
            location: 0,
            guid: Guid(2),
        },
    ];
    let raw = pair_events(events).unwrap();
    assert_eq!(raw.intervals.len(), 2);
}
