//! Request parsing and query dispatch shared by the HTTP API and the CLI.
//!
//! Query parameters are plain `key=value` strings. Shared conventions:
//!
//! * `t0`, `t1`: time window in ticks (defaults `0` and the trace span).
//! * `width`: pixel count, required by every pixel query.
//! * `overdraw`: widen the window by this factor around its center; the
//!   response's `t0`, `t1` and `width` describe what was actually rendered.
//! * `selection`: `node:<id>`, `interval:<guid>` (the interval with its whole
//!   dependency chain), `guids:<g>,<g>,...` or `durations:<min>..<max>`
//!   (inclusive, in ticks).
//! * location ranges are half-open: `loc0`/`loc1` or `locations=<a>..<b>`.

use std::collections::HashMap;
use std::str::FromStr;

use serde::Serialize;
use tracescope_core::dataset::SourceFile;
use tracescope_core::query::{
    aggregated_gantt, counter_rates, dependency_chain, gantt_matrix, histogram, interval_at, interval_info, overdraw,
    selection_utilization, tree_view, utilization, AggregatedGantt, BoxPlotSeries, Cancel, DependencyChain,
    GanttMatrix, HistogramResult, HistogramScale, IntervalInfo, PixelSeries, Selection, TreeView, UtilizationFilter,
    Viewport, DEFAULT_TREE_DEPTH,
};
use tracescope_core::{Dataset, DatasetMeta, Guid, LocationId, NodeId, Warning};

use crate::error::ApiError;

/// Overdraw applied when a request does not name one.
pub const DEFAULT_OVERDRAW: f64 = 3.0;

pub type Params = HashMap<String, String>;

fn get<T: FromStr>(params: &Params, key: &str) -> Result<Option<T>, ApiError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("parameter {key}={v:?} is not valid"))),
    }
}

fn require<T: FromStr>(params: &Params, key: &str) -> Result<T, ApiError> {
    get(params, key)?.ok_or_else(|| ApiError::bad_request(format!("missing parameter {key}")))
}

fn flag(params: &Params, key: &str) -> Result<bool, ApiError> {
    match params.get(key).map(String::as_str) {
        None | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") | Some("") => Ok(true),
        Some(v) => Err(ApiError::bad_request(format!("parameter {key}={v:?} is not a boolean"))),
    }
}

fn range_of(text: &str) -> Option<(u64, u64)> {
    let (a, b) = text.split_once("..")?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Parse a `selection` parameter value.
pub fn parse_selection(text: &str) -> Result<Selection, ApiError> {
    let bad = || ApiError::bad_request(format!("selection {text:?} is not valid"));
    let (kind, arg) = text.split_once(':').ok_or_else(bad)?;
    Ok(match kind {
        "node" => Selection::Node {
            node: NodeId(arg.parse().map_err(|_| bad())?),
        },
        "interval" => Selection::Interval {
            guid: Guid(arg.parse().map_err(|_| bad())?),
        },
        "guids" => Selection::Guids {
            guids: arg
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse().map(Guid).map_err(|_| bad()))
                .collect::<Result<_, _>>()?,
        },
        "durations" => {
            let (min, max) = range_of(arg).ok_or_else(bad)?;
            Selection::Durations { min, max }
        }
        _ => return Err(bad()),
    })
}

fn selection(params: &Params) -> Result<Option<Selection>, ApiError> {
    params.get("selection").map(|s| parse_selection(s)).transpose()
}

/// Requested and rendered windows of a pixel query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub requested: Viewport,
    pub rendered: Viewport,
}

fn window(ds: &Dataset, params: &Params, default_overdraw: f64) -> Result<Window, ApiError> {
    let t0 = get(params, "t0")?.unwrap_or(0);
    let t1 = get(params, "t1")?.unwrap_or(ds.span());
    let width: u32 = require(params, "width")?;
    if t1 <= t0 {
        return Err(ApiError::bad_range(format!("t1 ({t1}) must exceed t0 ({t0})")));
    }
    if width == 0 {
        return Err(ApiError::bad_range("width must be at least 1"));
    }
    let factor: f64 = get(params, "overdraw")?.unwrap_or(default_overdraw);
    if !(factor.is_finite() && factor > 0.0) {
        return Err(ApiError::bad_request("overdraw must be a positive number"));
    }
    let requested = Viewport { t0, t1, width };
    Ok(Window {
        requested,
        rendered: overdraw(requested, factor, ds.span()),
    })
}

fn locations(ds: &Dataset, params: &Params, lo: &str, hi: &str) -> Result<Option<std::ops::Range<u32>>, ApiError> {
    if let Some(text) = params.get("locations") {
        let (a, b) = range_of(text).ok_or_else(|| ApiError::bad_request(format!("locations {text:?} is not a..b")))?;
        return Ok(Some(a as u32..b as u32));
    }
    let (a, b) = (get::<u32>(params, lo)?, get::<u32>(params, hi)?);
    if a.is_none() && b.is_none() {
        return Ok(None);
    }
    Ok(Some(a.unwrap_or(0)..b.unwrap_or(ds.locations.len() as u32)))
}

/// A parsed request against one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Meta,
    Utilization {
        window: Window,
        filter: UtilizationFilter,
        selection: Option<Selection>,
    },
    Gantt {
        window: Window,
        locations: std::ops::Range<u32>,
        selection: Option<Selection>,
    },
    Histogram {
        bins: u32,
        node: Option<NodeId>,
        scale: HistogramScale,
    },
    Tree {
        root: Option<NodeId>,
        depth: u32,
    },
    AggGantt {
        node: NodeId,
        window: Window,
    },
    Counters,
    Counter {
        name: String,
        window: Window,
        per_location: bool,
    },
    Interval {
        guid: Guid,
    },
    IntervalAt {
        time: u64,
        location: u32,
    },
    Deps {
        guid: Guid,
        descendants: bool,
    },
    Source,
}

impl Query {
    /// Build a query for `endpoint` (the path segment after the dataset id,
    /// e.g. `"utilization"` or `"interval/42"`).
    pub fn parse(ds: &Dataset, endpoint: &str, params: &Params, default_overdraw: f64) -> Result<Query, ApiError> {
        let (head, tail) = match endpoint.split_once('/') {
            Some((h, t)) => (h, Some(t)),
            None => (endpoint, None),
        };
        let guid_arg = || -> Result<Guid, ApiError> {
            tail.and_then(|t| t.parse().ok())
                .map(Guid)
                .ok_or_else(|| ApiError::bad_request("expected a numeric guid in the path"))
        };
        let node_param = |key| get::<u32>(params, key).map(|n| n.map(NodeId));
        Ok(match (head, tail.is_some()) {
            ("", false) => Query::Meta,
            ("utilization", false) => Query::Utilization {
                window: window(ds, params, default_overdraw)?,
                filter: UtilizationFilter {
                    node: node_param("node")?,
                    locations: locations(ds, params, "loc0", "loc1")?,
                },
                selection: selection(params)?,
            },
            ("gantt", false) => Query::Gantt {
                window: window(ds, params, default_overdraw)?,
                locations: locations(ds, params, "loc0", "loc1")?.unwrap_or(0..ds.locations.len() as u32),
                selection: selection(params)?,
            },
            ("histogram", false) => Query::Histogram {
                bins: require(params, "bins")?,
                node: node_param("node")?,
                scale: match params.get("scale").map(String::as_str) {
                    None | Some("linear") => HistogramScale::Linear,
                    Some("log") => HistogramScale::Log,
                    Some(s) => return Err(ApiError::bad_request(format!("scale {s:?} is not linear or log"))),
                },
            },
            ("tree", false) => Query::Tree {
                root: node_param("root")?,
                depth: get(params, "depth")?.unwrap_or(DEFAULT_TREE_DEPTH),
            },
            ("agg-gantt", false) => Query::AggGantt {
                node: NodeId(require(params, "node")?),
                window: window(ds, params, default_overdraw)?,
            },
            ("counters", false) => Query::Counters,
            ("counter", false) => Query::Counter {
                name: require(params, "name")?,
                window: window(ds, params, default_overdraw)?,
                per_location: flag(params, "per_location")?,
            },
            ("interval", true) => Query::Interval { guid: guid_arg()? },
            ("interval-at", false) => Query::IntervalAt {
                time: require(params, "time")?,
                location: require(params, "loc")?,
            },
            ("deps", true) => Query::Deps {
                guid: guid_arg()?,
                descendants: flag(params, "descendants")?,
            },
            ("source", false) => Query::Source,
            _ => {
                return Err(ApiError::new(
                    crate::error::ErrorKind::NotFound,
                    "UNKNOWN_ENDPOINT",
                    format!("no endpoint {endpoint:?}"),
                ))
            }
        })
    }
}

/// Total utilization plus the selection overlay when one was requested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationResponse {
    #[serde(flatten)]
    pub series: PixelSeries,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<f64>>,
}

/// Dataset summary returned by the catalog endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaResponse {
    #[serde(flatten)]
    pub meta: DatasetMeta,
    pub locations: Vec<String>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterList {
    pub counters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceList {
    pub sources: Vec<SourceFile>,
}

/// A query result ready for serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Meta(MetaResponse),
    Utilization(UtilizationResponse),
    Gantt(GanttMatrix),
    Histogram(HistogramResult),
    Tree(TreeView),
    AggGantt(AggregatedGantt),
    Counters(CounterList),
    Counter(BoxPlotSeries),
    Interval(IntervalInfo),
    IntervalAt(Option<IntervalInfo>),
    Deps(DependencyChain),
    Source(SourceList),
}

impl Answer {
    pub fn to_json(&self) -> Vec<u8> {
        let r = match self {
            Answer::Meta(v) => serde_json::to_vec(v),
            Answer::Utilization(v) => serde_json::to_vec(v),
            Answer::Gantt(v) => serde_json::to_vec(v),
            Answer::Histogram(v) => serde_json::to_vec(v),
            Answer::Tree(v) => serde_json::to_vec(v),
            Answer::AggGantt(v) => serde_json::to_vec(v),
            Answer::Counters(v) => serde_json::to_vec(v),
            Answer::Counter(v) => serde_json::to_vec(v),
            Answer::Interval(v) => serde_json::to_vec(v),
            Answer::IntervalAt(v) => serde_json::to_vec(v),
            Answer::Deps(v) => serde_json::to_vec(v),
            Answer::Source(v) => serde_json::to_vec(v),
        };
        r.expect("query results always serialize")
    }

    /// Little-endian `f32` pixel payload for pixel queries:
    /// utilization values (then the selection overlay, if any), Gantt busy
    /// fractions row by row, or `min,max,mean,stddev` per counter pixel with
    /// NaN where no rate exists.
    pub fn to_f32(&self) -> Option<Vec<u8>> {
        let floats: Vec<f32> = match self {
            Answer::Utilization(u) => u
                .series
                .values
                .iter()
                .chain(u.selected.iter().flatten())
                .map(|&v| v as f32)
                .collect(),
            Answer::Gantt(g) => g
                .rows
                .iter()
                .flat_map(|r| r.cells.iter().map(|c| c.busy_fraction as f32))
                .collect(),
            Answer::Counter(b) => b
                .pixels
                .iter()
                .flat_map(|p| match p {
                    Some(s) => [s.min, s.max, s.mean, s.stddev].map(|v| v as f32),
                    None => [f32::NAN; 4],
                })
                .collect(),
            _ => return None,
        };
        Some(floats.iter().flat_map(|f| f.to_le_bytes()).collect())
    }

    /// The rendered window of a pixel query.
    pub fn rendered(&self) -> Option<Viewport> {
        let (t0, t1, width) = match self {
            Answer::Utilization(u) => (u.series.t0, u.series.t1, u.series.width),
            Answer::Gantt(g) => (g.t0, g.t1, g.width),
            Answer::AggGantt(a) => (a.t0, a.t1, a.width),
            Answer::Counter(b) => (b.t0, b.t1, b.width),
            _ => return None,
        };
        Some(Viewport { t0, t1, width })
    }
}

pub fn meta_of(ds: &Dataset) -> MetaResponse {
    MetaResponse {
        meta: ds.meta.clone(),
        locations: ds.locations.iter().map(|l| l.label()).collect(),
        warnings: ds.warnings.clone(),
    }
}

/// Run a parsed query.
pub fn execute(ds: &Dataset, query: &Query, cancel: Cancel) -> Result<Answer, ApiError> {
    Ok(match query {
        Query::Meta => Answer::Meta(meta_of(ds)),
        Query::Utilization {
            window,
            filter,
            selection,
        } => {
            let Viewport { t0, t1, width } = window.rendered;
            let series = utilization(ds, t0, t1, width, filter, cancel)?;
            let selected = match selection {
                Some(s) => Some(selection_utilization(ds, s, t0, t1, width, filter, cancel)?.values),
                None => None,
            };
            Answer::Utilization(UtilizationResponse { series, selected })
        }
        Query::Gantt {
            window,
            locations,
            selection,
        } => {
            let Viewport { t0, t1, width } = window.rendered;
            Answer::Gantt(gantt_matrix(
                ds,
                t0,
                t1,
                width,
                locations.clone(),
                selection.as_ref(),
                cancel,
            )?)
        }
        Query::Histogram { bins, node, scale } => {
            Answer::Histogram(histogram(ds, *bins, *node, *scale)?.unwrap_or(HistogramResult {
                bin_edges: Vec::new(),
                counts: Vec::new(),
                filter: *node,
                scale: *scale,
            }))
        }
        Query::Tree { root, depth } => Answer::Tree(tree_view(ds, *root, *depth)?),
        Query::AggGantt { node, window } => {
            let Viewport { t0, t1, width } = window.rendered;
            Answer::AggGantt(aggregated_gantt(ds, *node, t0, t1, width, cancel)?)
        }
        Query::Counters => Answer::Counters(CounterList {
            counters: ds.meta.counter_names.clone(),
        }),
        Query::Counter {
            name,
            window,
            per_location,
        } => {
            let Viewport { t0, t1, width } = window.rendered;
            Answer::Counter(counter_rates(ds, name, t0, t1, width, *per_location, cancel)?)
        }
        Query::Interval { guid } => Answer::Interval(interval_info(ds, *guid)?),
        Query::IntervalAt { time, location } => {
            let hit = interval_at(ds, *time, LocationId(*location))?;
            Answer::IntervalAt(hit.map(|iv| interval_info(ds, iv.guid)).transpose()?)
        }
        Query::Deps { guid, descendants } => Answer::Deps(dependency_chain(ds, *guid, *descendants)?),
        Query::Source => Answer::Source(SourceList {
            sources: ds.sources.clone(),
        }),
    })
}
