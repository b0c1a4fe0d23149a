//! On-disk catalog of bundled datasets.
//!
//! Layout under the data directory:
//!
//! ```text
//! datasets/<dataset_id>/manifest.txt   key=value lines, see `Manifest`
//! datasets/<dataset_id>/<part>.json    one file per bundle part
//! ```
//!
//! A bundle is assembled in a hidden temporary directory and published with a
//! single rename, so the catalog never lists a half-written dataset.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tracescope_core::dataset::{CounterTable, DatasetParts, SourceFile, TimeIndex};
use tracescope_core::{
    ingest_text, BuildOptions, Dataset, DatasetError, DatasetMeta, ExecutionTree, IngestError, Interner, Interval,
    Location, Warning, WarningCode,
};

/// Bumped whenever the part encoding changes; older bundles are rejected.
pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.txt";
const PARTS: [&str; 9] = [
    "meta.json",
    "intervals.json",
    "locations.json",
    "names.json",
    "tree.json",
    "index.json",
    "counters.json",
    "sources.json",
    "warnings.json",
];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Build(#[from] DatasetError),
    #[error("no dataset with id {0:?}")]
    UnknownDataset(String),
    #[error("label must not be empty")]
    InvalidLabel,
    #[error("bundle format version {found} is not supported (expected {FORMAT_VERSION}); re-bundle the trace")]
    UnsupportedVersion { found: String },
    #[error("bundle is damaged: {0}")]
    Corrupt(String),
    #[error("disk full while writing {0}")]
    DiskFull(PathBuf),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    fn from_write(e: io::Error, path: &Path) -> Self {
        // ENOSPC and EDQUOT.
        if e.kind() == io::ErrorKind::StorageFull || e.kind() == io::ErrorKind::QuotaExceeded {
            StoreError::DiskFull(path.to_owned())
        } else {
            StoreError::Io(e)
        }
    }
}

/// Result of a bundling request.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleOutcome {
    pub dataset_id: String,
    /// The trace had been bundled before; nothing was rebuilt.
    pub cached: bool,
    pub warnings: Vec<Warning>,
}

/// Parsed `manifest.txt`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
            .collect();
        Manifest { entries }
    }

    fn render(&self) -> String {
        let mut out = String::from("# tracescope bundle manifest\n");
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// `dataset_id` for raw trace bytes: the first 16 hex digits of their SHA-256.
pub fn dataset_id_of(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Dataset catalog rooted at a data directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    /// Serializes catalog mutations (publish and delete).
    catalog: Mutex<()>,
    loaded: RwLock<HashMap<String, Arc<Dataset>>>,
    scratch: AtomicU64,
}

impl Store {
    /// Open (creating if needed) the store under `data_dir`.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = data_dir.into();
        fs::create_dir_all(root.join("datasets"))?;
        Ok(Store {
            root,
            catalog: Mutex::new(()),
            loaded: RwLock::new(HashMap::new()),
            scratch: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn datasets_dir(&self) -> PathBuf {
        self.root.join("datasets")
    }

    fn dataset_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        // Ids are hex; anything else could escape the data directory.
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(StoreError::UnknownDataset(id.to_owned()));
        }
        Ok(self.datasets_dir().join(id))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.dataset_dir(id).is_ok_and(|d| d.join(MANIFEST).is_file())
    }

    /// Bundle a trace file. `S` records are resolved relative to the trace's
    /// directory.
    pub fn bundle(&self, trace: &Path, label: &str, options: BuildOptions) -> Result<BundleOutcome, StoreError> {
        let bytes = fs::read(trace)?;
        self.bundle_bytes(&bytes, label, options, sources_near(trace))
    }

    /// Bundle raw trace bytes; `source` supplies the text of `S` references.
    pub fn bundle_bytes(
        &self,
        bytes: &[u8],
        label: &str,
        options: BuildOptions,
        source: impl Fn(&str) -> Option<String>,
    ) -> Result<BundleOutcome, StoreError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(StoreError::InvalidLabel);
        }
        let id = dataset_id_of(bytes);
        if self.contains(&id) {
            let warnings = self.read_part::<Vec<Warning>>(&id, "warnings.json")?;
            return Ok(BundleOutcome {
                dataset_id: id,
                cached: true,
                warnings,
            });
        }
        let dataset = build_dataset(bytes, &id, label, options, source)?;
        let warnings = dataset.warnings.clone();
        self.publish(&id, &dataset)?;
        log::info!("bundled {id} ({} intervals)", dataset.intervals.len());
        self.loaded
            .write()
            .expect("store cache poisoned")
            .insert(id.clone(), Arc::new(dataset));
        Ok(BundleOutcome {
            dataset_id: id,
            cached: false,
            warnings,
        })
    }

    fn publish(&self, id: &str, ds: &Dataset) -> Result<(), StoreError> {
        let n = self.scratch.fetch_add(1, Ordering::Relaxed);
        let tmp = self
            .datasets_dir()
            .join(format!(".tmp-{id}-{}-{n}", std::process::id()));
        let result = self.write_parts(&tmp, ds).and_then(|()| {
            let _guard = self.catalog.lock().expect("catalog lock poisoned");
            let dest = self.dataset_dir(id)?;
            if dest.exists() {
                // Another writer published the same content first.
                fs::remove_dir_all(&tmp)?;
                return Ok(());
            }
            fs::rename(&tmp, &dest)?;
            Ok(())
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result
    }

    fn write_parts(&self, dir: &Path, ds: &Dataset) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(|e| StoreError::from_write(e, dir))?;
        let p = ds.parts();
        let encoded: [(&str, Vec<u8>); 9] = [
            ("meta.json", json(&p.meta)?),
            ("intervals.json", json(&p.intervals)?),
            ("locations.json", json(&p.locations)?),
            ("names.json", json(&(&p.primitives, &p.counter_names))?),
            ("tree.json", json(&p.tree)?),
            ("index.json", json(&p.index)?),
            ("counters.json", json(&p.counters)?),
            ("sources.json", json(&p.sources)?),
            ("warnings.json", json(&p.warnings)?),
        ];
        let mut manifest = Manifest::default();
        let mut put = |k: &str, v: String| manifest.entries.insert(k.to_owned(), v);
        put("format_version", FORMAT_VERSION.to_string());
        put("dataset_id", p.meta.dataset_id.clone());
        put("label", p.meta.label.clone());
        put("bins", p.index.bin_count.to_string());
        put("interval_count", p.meta.interval_count.to_string());
        put("location_count", p.meta.location_count.to_string());
        put("time_end", p.meta.time_end.0.to_string());
        for (name, bytes) in &encoded {
            put(&format!("checksum.{name}"), sha256_hex(bytes));
            write_synced(&dir.join(name), bytes)?;
        }
        write_synced(&dir.join(MANIFEST), manifest.render().as_bytes())
    }

    /// Metadata of every bundled dataset, sorted by label then id.
    pub fn list(&self) -> Result<Vec<DatasetMeta>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.datasets_dir())? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || !self.contains(&name) {
                continue;
            }
            self.manifest(&name)?;
            out.push(self.read_part::<DatasetMeta>(&name, "meta.json")?);
        }
        out.sort_by(|a, b| (&a.label, &a.dataset_id).cmp(&(&b.label, &b.dataset_id)));
        Ok(out)
    }

    /// Read and version-check a dataset's manifest.
    pub fn manifest(&self, id: &str) -> Result<Manifest, StoreError> {
        let path = self.dataset_dir(id)?.join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::UnknownDataset(id.into())),
            Err(e) => return Err(e.into()),
        };
        let manifest = Manifest::parse(&text);
        match manifest.get("format_version") {
            Some(v) if v == FORMAT_VERSION.to_string() => Ok(manifest),
            other => Err(StoreError::UnsupportedVersion {
                found: other.unwrap_or("missing").to_owned(),
            }),
        }
    }

    fn read_part<T: DeserializeOwned>(&self, id: &str, name: &str) -> Result<T, StoreError> {
        let bytes = fs::read(self.dataset_dir(id)?.join(name))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(format!("{name}: {e}")))
    }

    /// Load a dataset, verifying every part against the manifest checksums.
    /// Loaded datasets are kept in memory and shared.
    pub fn load(&self, id: &str) -> Result<Arc<Dataset>, StoreError> {
        if let Some(ds) = self.loaded.read().expect("store cache poisoned").get(id) {
            return Ok(ds.clone());
        }
        let manifest = self.manifest(id)?;
        let dir = self.dataset_dir(id)?;
        let mut raw = HashMap::new();
        for name in PARTS {
            let bytes = fs::read(dir.join(name))?;
            let want = manifest
                .get(&format!("checksum.{name}"))
                .ok_or_else(|| StoreError::Corrupt(format!("manifest lacks checksum for {name}")))?;
            if sha256_hex(&bytes) != want {
                return Err(StoreError::Corrupt(format!("checksum mismatch in {name}")));
            }
            raw.insert(name, bytes);
        }
        let (primitives, counter_names): (Interner, Interner) = decode(&raw, "names.json")?;
        let parts = DatasetParts {
            meta: decode(&raw, "meta.json")?,
            intervals: decode::<Vec<Interval>>(&raw, "intervals.json")?,
            locations: decode::<Vec<Location>>(&raw, "locations.json")?,
            primitives,
            counter_names,
            tree: decode::<ExecutionTree>(&raw, "tree.json")?,
            index: decode::<TimeIndex>(&raw, "index.json")?,
            counters: decode::<CounterTable>(&raw, "counters.json")?,
            sources: decode::<Vec<SourceFile>>(&raw, "sources.json")?,
            warnings: decode::<Vec<Warning>>(&raw, "warnings.json")?,
        };
        let ds = Arc::new(Dataset::from_parts(parts).map_err(|e| StoreError::Corrupt(e.to_string()))?);
        let mut cache = self.loaded.write().expect("store cache poisoned");
        Ok(cache.entry(id.to_owned()).or_insert(ds).clone())
    }

    /// Remove a dataset from the catalog and the disk.
    pub fn delete(&self, id: &str) -> Result<(), StoreError> {
        let _guard = self.catalog.lock().expect("catalog lock poisoned");
        if !self.contains(id) {
            return Err(StoreError::UnknownDataset(id.into()));
        }
        let dir = self.dataset_dir(id)?;
        let n = self.scratch.fetch_add(1, Ordering::Relaxed);
        let doomed = self
            .datasets_dir()
            .join(format!(".del-{id}-{}-{n}", std::process::id()));
        fs::rename(&dir, &doomed)?;
        self.loaded.write().expect("store cache poisoned").remove(id);
        fs::remove_dir_all(&doomed)?;
        Ok(())
    }

    /// Forget in-memory copies so the next `load` reads from disk.
    pub fn evict(&self) {
        self.loaded.write().expect("store cache poisoned").clear();
    }
}

/// Resolves `S` references relative to the directory holding `trace`.
fn sources_near(trace: &Path) -> impl Fn(&str) -> Option<String> {
    let base = trace.parent().map(Path::to_path_buf).unwrap_or_default();
    move |path| {
        let p = Path::new(path);
        fs::read_to_string(if p.is_absolute() { p.to_path_buf() } else { base.join(p) }).ok()
    }
}

/// Ingest a trace file in memory, exactly as `Store::bundle` would, without
/// persisting it.
pub fn ingest_file(trace: &Path, label: &str, options: BuildOptions) -> Result<Dataset, StoreError> {
    let bytes = fs::read(trace)?;
    build_dataset(&bytes, &dataset_id_of(&bytes), label, options, sources_near(trace))
}

/// Ingest, attach sources and build the dataset without touching the store.
pub fn build_dataset(
    bytes: &[u8],
    id: &str,
    label: &str,
    options: BuildOptions,
    source: impl Fn(&str) -> Option<String>,
) -> Result<Dataset, StoreError> {
    let text = String::from_utf8_lossy(bytes);
    let raw = ingest_text(&text)?;
    let mut missing = Vec::new();
    let mut sources = Vec::new();
    for path in &raw.source_refs {
        match source(path) {
            Some(text) => sources.push(SourceFile {
                path: path.clone(),
                text,
            }),
            None => missing.push(Warning::new(
                WarningCode::MissingSource,
                format!("source file {path:?} could not be read"),
            )),
        }
    }
    let mut ds = Dataset::build(raw, sources, options)?;
    ds.set_identity(id, label);
    if !missing.is_empty() {
        let mut parts = ds.into_parts();
        parts.warnings.extend(missing);
        ds = Dataset::from_parts(parts)?;
    }
    Ok(ds)
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, StoreError> {
    serde_json::to_vec(value).map_err(|e| StoreError::Io(io::Error::other(e)))
}

fn decode<T: DeserializeOwned>(raw: &HashMap<&str, Vec<u8>>, name: &str) -> Result<T, StoreError> {
    serde_json::from_slice(&raw[name]).map_err(|e| StoreError::Corrupt(format!("{name}: {e}")))
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut f = fs::File::create(path).map_err(|e| StoreError::from_write(e, path))?;
    f.write_all(bytes).map_err(|e| StoreError::from_write(e, path))?;
    f.sync_all().map_err(|e| StoreError::from_write(e, path))
}
