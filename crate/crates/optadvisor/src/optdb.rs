//! The optimization database: an unordered set of independent entries, each
//! describing one source-code optimization together with pairs of before and
//! after profiled samples that exclude and include it.
//!
//! Entries are plain directories holding a human-editable `manifest.json` and
//! canonical-CSV profiles, so contributing a new optimization means dropping
//! a directory into the database root; no entry depends on any other.
//!
//! Layout:
//!
//! ```text
//! <root>/<entry-id>/manifest.json
//! <root>/<entry-id>/profiles/*.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{self, FeatureSchema, FeatureVector, RecordKey, SampleRecord};

/* ------------------------------ manifests -------------------------------- */

/// Reference to one record: either a relative CSV path holding exactly one
/// record, or a selector addressing one record inside a multi-record CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleRef {
    Path(String),
    Selector {
        file: String,
        program: String,
        input_id: String,
        run_id: u32,
        version_mask: u64,
        kernel: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRefPair {
    pub before: SampleRef,
    pub after: SampleRef,
    pub input_id: String,
}

/// On-disk form of one entry (`manifest.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryManifest {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub example: String,
    #[serde(default)]
    pub samples: Vec<SampleRefPair>,
}

/* ----------------------------- loaded types ------------------------------ */

/// A before/after pair: two profiled runs of the same program, input, run,
/// and kernel whose version masks differ in exactly the entry's bit.
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub before: SampleRecord,
    pub after: SampleRecord,
    pub input_id: String,
}

impl SamplePair {
    /// Index of the single bit in which the two masks differ.
    pub fn bit(&self) -> u32 {
        (self.before.version_mask ^ self.after.version_mask).trailing_zeros()
    }

    /// Measured speedup of applying the optimization: runtime(before) over
    /// runtime(after). Values above 1.0 mean the optimization helped.
    pub fn speedup(&self) -> f64 {
        self.before.runtime_ms / self.after.runtime_ms
    }
}

/// One optimization in the database, with its prose and resolved samples.
/// An entry with no samples is documented but cannot be trained.
#[derive(Debug, Clone)]
pub struct OptimizationEntry {
    pub id: String,
    pub name: String,
    pub description: String,
    pub example: String,
    pub samples: Vec<SamplePair>,
}

/// A fully loaded optimization database, entries sorted by id.
#[derive(Debug, Clone, Default)]
pub struct Database {
    entries: Vec<OptimizationEntry>,
}

impl Database {
    /// Builds an in-memory database, validating ids and pairing invariants.
    pub fn from_entries(mut entries: Vec<OptimizationEntry>) -> Result<Database> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in entries.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Conflict(pair[0].id.clone()));
            }
        }
        for entry in &entries {
            validate_entry_pairs(entry)?;
        }
        Ok(Database { entries })
    }

    pub fn entries(&self) -> &[OptimizationEntry] {
        &self.entries
    }

    pub fn entry(&self, id: &str) -> Option<&OptimizationEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All before/after records of all entries, deduplicated by record key.
    pub fn all_records(&self) -> Vec<SampleRecord> {
        let mut by_key = BTreeMap::new();
        for entry in &self.entries {
            for pair in &entry.samples {
                by_key
                    .entry(pair.before.key())
                    .or_insert_with(|| pair.before.clone());
                by_key
                    .entry(pair.after.key())
                    .or_insert_with(|| pair.after.clone());
            }
        }
        by_key.into_values().collect()
    }
}

/// One labelled training point: the before-version's feature vector and the
/// measured speedup of adding the optimization to exactly that version.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub features: FeatureVector,
    pub label: f64,
}

/* ----------------------------- validation -------------------------------- */

fn validate_pair(entry_id: &str, pair: &SamplePair) -> Result<u32> {
    let err = |message: String| Error::Pairing {
        entry: entry_id.to_string(),
        message,
    };
    let b = &pair.before;
    let a = &pair.after;
    if b.program != a.program
        || b.input_id != a.input_id
        || b.run_id != a.run_id
        || b.kernel != a.kernel
    {
        return Err(err(format!(
            "before {} and after {} must share program, input, run, and kernel",
            b.key(),
            a.key()
        )));
    }
    if pair.input_id != b.input_id {
        return Err(err(format!(
            "pair declares input '{}' but records belong to '{}'",
            pair.input_id, b.input_id
        )));
    }
    let diff = b.version_mask ^ a.version_mask;
    if diff.count_ones() != 1 {
        return Err(err(format!(
            "masks {} and {} must differ in exactly one bit",
            b.version_mask, a.version_mask
        )));
    }
    if b.version_mask & diff != 0 {
        return Err(err(format!(
            "before mask {} must not include the optimization bit",
            b.version_mask
        )));
    }
    b.validate()?;
    a.validate()?;
    Ok(diff.trailing_zeros())
}

fn validate_entry_pairs(entry: &OptimizationEntry) -> Result<()> {
    let mut bit_by_program: BTreeMap<&str, u32> = BTreeMap::new();
    for pair in &entry.samples {
        let bit = validate_pair(&entry.id, pair)?;
        match bit_by_program.insert(pair.before.program.as_str(), bit) {
            Some(prev) if prev != bit => {
                return Err(Error::Pairing {
                    entry: entry.id.clone(),
                    message: format!(
                        "pairs for program '{}' disagree on the optimization bit ({prev} vs {bit})",
                        pair.before.program
                    ),
                });
            }
            _ => {}
        }
    }
    Ok(())
}

/* ------------------------------- loading --------------------------------- */

fn entry_err(entry: &str, message: impl Into<String>) -> Error {
    Error::EntryLoad {
        entry: entry.to_string(),
        message: message.into(),
    }
}

fn sample_file(sample: &SampleRef) -> &str {
    match sample {
        SampleRef::Path(rel) => rel,
        SampleRef::Selector { file, .. } => file,
    }
}

/// Parsed profile files of one entry, keyed by record identity for O(log n)
/// selector resolution.
struct ProfileCache {
    files: BTreeMap<PathBuf, BTreeMap<RecordKey, SampleRecord>>,
}

impl ProfileCache {
    fn load(entry_dir: &Path, manifest: &EntryManifest) -> Result<ProfileCache> {
        let mut files = BTreeMap::new();
        for pair in &manifest.samples {
            for rel in [sample_file(&pair.before), sample_file(&pair.after)] {
                let path = entry_dir.join(rel);
                if files.contains_key(&path) {
                    continue;
                }
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let records = profile::parse_canonical_csv(&text)?;
                files.insert(path, records.into_iter().map(|r| (r.key(), r)).collect());
            }
        }
        Ok(ProfileCache { files })
    }

    fn resolve(
        &self,
        entry_id: &str,
        entry_dir: &Path,
        sample: &SampleRef,
    ) -> Result<SampleRecord> {
        match sample {
            SampleRef::Path(rel) => {
                let records = &self.files[&entry_dir.join(rel)];
                match records.len() {
                    1 => Ok(records.values().next().unwrap().clone()),
                    n => Err(entry_err(
                        entry_id,
                        format!("'{rel}' must hold exactly one record, found {n}; use a selector"),
                    )),
                }
            }
            SampleRef::Selector {
                file,
                program,
                input_id,
                run_id,
                version_mask,
                kernel,
            } => {
                let key = RecordKey {
                    program: program.clone(),
                    input_id: input_id.clone(),
                    run_id: *run_id,
                    version_mask: *version_mask,
                    kernel: kernel.clone(),
                };
                self.files[&entry_dir.join(file)]
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| entry_err(entry_id, format!("no record {key} in '{file}'")))
            }
        }
    }
}

fn load_entry(root: &Path, id: &str) -> Result<OptimizationEntry> {
    let entry_dir = root.join(id);
    let manifest_path = entry_dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| entry_err(id, format!("cannot read manifest.json: {e}")))?;
    let manifest: EntryManifest = serde_json::from_str(&text)
        .map_err(|e| entry_err(id, format!("invalid manifest.json: {e}")))?;
    if manifest.id != id {
        return Err(entry_err(
            id,
            format!(
                "manifest id '{}' does not match directory name",
                manifest.id
            ),
        ));
    }

    let cache = ProfileCache::load(&entry_dir, &manifest)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for pair in &manifest.samples {
        samples.push(SamplePair {
            before: cache.resolve(id, &entry_dir, &pair.before)?,
            after: cache.resolve(id, &entry_dir, &pair.after)?,
            input_id: pair.input_id.clone(),
        });
    }
    let entry = OptimizationEntry {
        id: manifest.id,
        name: manifest.name,
        description: manifest.description,
        example: manifest.example,
        samples,
    };
    validate_entry_pairs(&entry)?;
    Ok(entry)
}

fn entry_dir_names(root: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let dir = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for item in dir {
        let item = item.map_err(|e| Error::io(root, e))?;
        let name = item.file_name().to_string_lossy().to_string();
        if name.starts_with('.') {
            continue; // leftover temp dirs and editor droppings
        }
        if item.file_type().map_err(|e| Error::io(root, e))?.is_dir() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Loads every entry under `root`, parsing and pairing its profiles.
pub fn load_db(root: &Path) -> Result<Database> {
    let mut entries = Vec::new();
    for name in entry_dir_names(root)? {
        entries.push(load_entry(root, &name)?);
    }
    Database::from_entries(entries)
}

/* ------------------------------- mutation -------------------------------- */

/// Atomically writes a new entry: the manifest plus any profile files
/// (paths relative to the entry directory) are staged in a temporary
/// directory that is renamed into place.
pub fn write_entry(
    root: &Path,
    manifest: &EntryManifest,
    profiles: &[(String, String)],
) -> Result<()> {
    if manifest.id.is_empty() || manifest.id.starts_with('.') || manifest.id.contains('/') {
        return Err(Error::InvalidParam(format!(
            "invalid entry id '{}'",
            manifest.id
        )));
    }
    let target = root.join(&manifest.id);
    if target.exists() {
        return Err(Error::Conflict(manifest.id.clone()));
    }
    let staging = root.join(format!(".tmp-add-{}", manifest.id));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let result = (|| -> Result<()> {
        for (rel, contents) in profiles {
            let path = staging.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        let manifest_path = staging.join("manifest.json");
        let mut json = serde_json::to_string_pretty(manifest)
            .map_err(|e| Error::CorruptPayload(e.to_string()))?;
        json.push('\n');
        fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
        fs::rename(&staging, &target).map_err(|e| Error::io(&target, e))
    })();

    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

/// Adds a sample-less entry (documented but untrainable until profiles are
/// contributed).
pub fn add_entry(root: &Path, manifest: &EntryManifest) -> Result<()> {
    write_entry(root, manifest, &[])
}

/// Removes an entry by renaming its directory aside and deleting it.
pub fn remove_entry(root: &Path, id: &str) -> Result<()> {
    let target = root.join(id);
    if !target.is_dir() {
        return Err(Error::UnknownId(id.to_string()));
    }
    let staging = root.join(format!(".tmp-remove-{id}"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::rename(&target, &staging).map_err(|e| Error::io(&target, e))?;
    fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))
}

/// Summary line for `list`: id, human name, and how many sample pairs the
/// entry declares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryListing {
    pub id: String,
    pub name: String,
    pub sample_count: usize,
}

/// Lists entries by id without resolving their profile files.
pub fn list_entries(root: &Path) -> Result<Vec<EntryListing>> {
    let mut listings = Vec::new();
    for id in entry_dir_names(root)? {
        let manifest_path = root.join(&id).join("manifest.json");
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| entry_err(&id, format!("cannot read manifest.json: {e}")))?;
        let manifest: EntryManifest = serde_json::from_str(&text)
            .map_err(|e| entry_err(&id, format!("invalid manifest.json: {e}")))?;
        listings.push(EntryListing {
            id,
            name: manifest.name,
            sample_count: manifest.samples.len(),
        });
    }
    Ok(listings)
}

/* ----------------------------- training sets ----------------------------- */

/// Builds the per-optimization training set: one instance per sample pair,
/// features from the before record, label = runtime(before) / runtime(after).
/// Instances are ordered by (program, input, run, before mask) so training is
/// deterministic regardless of manifest order.
pub fn build_training_set(
    entry: &OptimizationEntry,
    schema: &FeatureSchema,
) -> Result<Vec<TrainingInstance>> {
    let mut pairs: Vec<&SamplePair> = entry.samples.iter().collect();
    pairs.sort_by(|x, y| {
        let kx = (
            &x.before.program,
            &x.before.input_id,
            x.before.run_id,
            x.before.version_mask,
        );
        let ky = (
            &y.before.program,
            &y.before.input_id,
            y.before.run_id,
            y.before.version_mask,
        );
        kx.cmp(&ky)
    });

    let mut instances = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let label = pair.speedup();
        if !(label.is_finite() && label > 0.0) {
            return Err(Error::Pairing {
                entry: entry.id.clone(),
                message: format!(
                    "pair {} yields non-positive speedup {label}",
                    pair.before.key()
                ),
            });
        }
        instances.push(TrainingInstance {
            features: profile::normalize(&pair.before, schema)?,
            label,
        });
    }
    Ok(instances)
}

/// Pairs records of a complete version lattice along one optimization bit:
/// every record with the bit clear is matched to the identical group with the
/// bit set. Errors if a partner is missing.
pub fn pair_by_bit(
    records: &[SampleRecord],
    bit: u32,
) -> Result<Vec<(&SampleRecord, &SampleRecord)>> {
    let flag = 1u64 << bit;
    let by_key: BTreeMap<_, &SampleRecord> = records.iter().map(|r| (r.key(), r)).collect();
    if by_key.len() != records.len() {
        return Err(Error::DuplicateRecord {
            group: "duplicate record keys in dataset".to_string(),
        });
    }
    let mut pairs = Vec::new();
    for (key, before) in &by_key {
        if key.version_mask & flag != 0 {
            continue;
        }
        let mut after_key = key.clone();
        after_key.version_mask |= flag;
        let after = by_key.get(&after_key).ok_or_else(|| {
            Error::Lattice(format!("missing paired version {after_key} for {key}"))
        })?;
        pairs.push((*before, *after));
    }
    Ok(pairs)
}
