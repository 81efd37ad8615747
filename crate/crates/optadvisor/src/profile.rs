//! Profile ingestion: parse profiler output into sample records and turn raw
//! hardware counters into runtime-independent feature vectors.
//!
//! Raw counter totals grow with how long a kernel runs, so they are useless
//! for comparing differently-sized runs. Dividing every counter by the cycle
//! count of its run yields per-cycle rates that characterize the kernel's
//! behavior rather than its duration; those rates are what the learners see.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Column layout of the canonical profile CSV.
pub const CANONICAL_HEADER: [&str; 7] = [
    "program",
    "input_id",
    "run_id",
    "version_mask",
    "kernel",
    "counter",
    "value",
];

/// Counter name reserved for the cycle count of a run.
pub const CYCLES_COUNTER: &str = "elapsed_cycles";
/// Counter name reserved for the measured runtime in milliseconds.
pub const RUNTIME_COUNTER: &str = "runtime_ms";

/// Names that may never appear as features: they are normalizer and label
/// inputs, and letting them leak into the feature map would let a model read
/// the answer off its input.
const RESERVED_NAMES: [&str; 4] = [CYCLES_COUNTER, RUNTIME_COUNTER, "cycles", "runtime"];

/// Identity of one profiled run within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub program: String,
    pub input_id: String,
    pub run_id: u32,
    pub version_mask: u64,
    pub kernel: String,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/run{}/mask{}/{}",
            self.program, self.input_id, self.run_id, self.version_mask, self.kernel
        )
    }
}

/// One profiled run of one kernel: identity metadata, raw counters, the cycle
/// count used as normalizer, and the measured runtime in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub program: String,
    pub input_id: String,
    pub run_id: u32,
    /// Bitmask over optimization ids: bit `i` set means optimization `i` of
    /// this program was applied to the profiled version.
    pub version_mask: u64,
    pub kernel: String,
    pub counters: BTreeMap<String, f64>,
    pub cycles: u64,
    pub runtime_ms: f64,
}

impl SampleRecord {
    /// Validates the numeric invariants: positive cycles and runtime, every
    /// counter finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        let group = self.key().to_string();
        if self.cycles == 0 {
            return Err(Error::InvalidParam(format!(
                "record {group}: cycles must be > 0"
            )));
        }
        if !(self.runtime_ms.is_finite() && self.runtime_ms > 0.0) {
            return Err(Error::InvalidParam(format!(
                "record {group}: runtime must be > 0"
            )));
        }
        for (name, value) in &self.counters {
            if !(value.is_finite() && *value >= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "record {group}: counter '{name}' must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            program: self.program.clone(),
            input_id: self.input_id.clone(),
            run_id: self.run_id,
            version_mask: self.version_mask,
            kernel: self.kernel.clone(),
        }
    }
}

/// Ordered set of counter names admitted as features.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    /// Builds a schema from an ordered name list. Names must be unique and
    /// must not use the reserved normalizer/label names.
    pub fn new(names: Vec<String>) -> Result<FeatureSchema> {
        let mut seen = BTreeSet::new();
        for name in &names {
            if RESERVED_NAMES.contains(&name.as_str()) {
                return Err(Error::Schema(format!(
                    "'{name}' is reserved and cannot be a feature"
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Schema(format!("duplicate feature name '{name}'")));
            }
        }
        Ok(FeatureSchema { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Cycle-normalized feature vector: one rate per schema name, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    schema: FeatureSchema,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: FeatureSchema, values: Vec<f64>) -> Result<FeatureVector> {
        if schema.len() != values.len() {
            return Err(Error::SchemaMismatch(format!(
                "schema has {} names but {} values were given",
                schema.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "feature '{}' is not finite",
                schema.names()[i]
            )));
        }
        Ok(FeatureVector { schema, values })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.values[i])
    }

    /// Iterates `(name, rate)` pairs in schema order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.schema
            .names
            .iter()
            .map(|n| n.as_str())
            .zip(self.values.iter().copied())
    }
}

/* ------------------------- canonical CSV parsing ------------------------- */

#[derive(Default)]
struct PartialRecord {
    counters: BTreeMap<String, f64>,
    cycles: Option<u64>,
    runtime_ms: Option<f64>,
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    what: &str,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|_| Error::Parse {
        line: row_line(record),
        message: format!("invalid {what}: '{raw}'"),
    })
}

/// Parses the canonical profile CSV into sample records, one per
/// `(program, input_id, run_id, version_mask, kernel)` group, sorted by that
/// key. The reserved rows `elapsed_cycles` and `runtime_ms` populate the
/// record's cycle count and runtime and are excluded from the counter map.
pub fn parse_canonical_csv(text: &str) -> Result<Vec<SampleRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read CSV header: {e}")))?;
    if headers
        .iter()
        .map(str::trim)
        .ne(CANONICAL_HEADER.iter().copied())
    {
        return Err(Error::Format(format!(
            "expected header '{}', found '{}'",
            CANONICAL_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut groups: BTreeMap<RecordKey, PartialRecord> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| match &e.kind() {
            csv::ErrorKind::UnequalLengths { pos, .. } => Error::Parse {
                line: pos.as_ref().map(|p| p.line()).unwrap_or(0),
                message: "wrong number of columns".to_string(),
            },
            _ => Error::Format(format!("CSV read error: {e}")),
        })?;
        if row.len() != CANONICAL_HEADER.len() {
            return Err(Error::Parse {
                line: row_line(&row),
                message: format!(
                    "expected {} columns, found {}",
                    CANONICAL_HEADER.len(),
                    row.len()
                ),
            });
        }

        let key = RecordKey {
            program: row.get(0).unwrap_or("").to_string(),
            input_id: row.get(1).unwrap_or("").to_string(),
            run_id: parse_field(&row, 2, "run_id")?,
            version_mask: parse_field(&row, 3, "version_mask")?,
            kernel: row.get(4).unwrap_or("").to_string(),
        };
        let counter = row.get(5).unwrap_or("").to_string();
        let line = row_line(&row);
        let group = groups.entry(key.clone()).or_default();

        match counter.as_str() {
            CYCLES_COUNTER => {
                let cycles: u64 = parse_field(&row, 6, "elapsed_cycles value")?;
                if cycles == 0 {
                    return Err(Error::Parse {
                        line,
                        message: "elapsed_cycles must be > 0".to_string(),
                    });
                }
                if group.cycles.replace(cycles).is_some() {
                    return Err(Error::DuplicateCounter {
                        group: key.to_string(),
                        counter,
                    });
                }
            }
            RUNTIME_COUNTER => {
                let runtime: f64 = parse_field(&row, 6, "runtime_ms value")?;
                if !(runtime.is_finite() && runtime > 0.0) {
                    return Err(Error::Parse {
                        line,
                        message: "runtime_ms must be a positive real".to_string(),
                    });
                }
                if group.runtime_ms.replace(runtime).is_some() {
                    return Err(Error::DuplicateCounter {
                        group: key.to_string(),
                        counter,
                    });
                }
            }
            _ => {
                let value: f64 = parse_field(&row, 6, "counter value")?;
                if !(value.is_finite() && value >= 0.0) {
                    return Err(Error::Parse {
                        line,
                        message: format!("counter '{counter}' must be finite and >= 0"),
                    });
                }
                if group.counters.insert(counter.clone(), value).is_some() {
                    return Err(Error::DuplicateCounter {
                        group: key.to_string(),
                        counter,
                    });
                }
            }
        }
    }

    let mut records = Vec::with_capacity(groups.len());
    for (key, partial) in groups {
        let cycles = partial.cycles.ok_or_else(|| Error::IncompleteRecord {
            group: key.to_string(),
            missing: CYCLES_COUNTER.to_string(),
        })?;
        let runtime_ms = partial.runtime_ms.ok_or_else(|| Error::IncompleteRecord {
            group: key.to_string(),
            missing: RUNTIME_COUNTER.to_string(),
        })?;
        records.push(SampleRecord {
            program: key.program,
            input_id: key.input_id,
            run_id: key.run_id,
            version_mask: key.version_mask,
            kernel: key.kernel,
            counters: partial.counters,
            cycles,
            runtime_ms,
        });
    }
    Ok(records)
}

/// Quotes a field when CSV syntax requires it, and also when it starts with
/// the comment character (an unquoted leading `#` would turn the row into a
/// comment on re-parse).
fn csv_field(text: &str) -> String {
    if text.starts_with('#') || text.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Serializes records back to the canonical CSV format. Values use the
/// shortest decimal form that parses back to the identical float, so
/// `parse(write(parse(x)))` reproduces records exactly.
pub fn write_canonical_csv(records: &[SampleRecord]) -> String {
    let mut out = String::from("program,input_id,run_id,version_mask,kernel,counter,value\n");
    for record in records {
        let prefix = format!(
            "{},{},{},{},{}",
            csv_field(&record.program),
            csv_field(&record.input_id),
            record.run_id,
            record.version_mask,
            csv_field(&record.kernel),
        );
        for (name, value) in &record.counters {
            out.push_str(&format!("{prefix},{},{value}\n", csv_field(name)));
        }
        out.push_str(&format!("{prefix},{CYCLES_COUNTER},{}\n", record.cycles));
        out.push_str(&format!(
            "{prefix},{RUNTIME_COUNTER},{}\n",
            record.runtime_ms
        ));
    }
    out
}

/* --------------------------- nvprof importing ---------------------------- */

/// Identity metadata the nvprof export does not carry itself.
#[derive(Debug, Clone)]
pub struct NvprofMeta {
    pub program: String,
    pub input_id: String,
    pub run_id: u32,
    pub version_mask: u64,
    /// Measured kernel runtime, used when the export has no runtime row of
    /// its own (event-only exports usually do not).
    pub runtime_ms: Option<f64>,
}

/// Event names accepted as the cycle-count normalizer, in preference order.
const NVPROF_CYCLE_EVENTS: [&str; 4] = [
    "elapsed_cycles",
    "elapsed_cycles_sm",
    "elapsed_cycles_pm",
    "active_cycles",
];

const NVPROF_RUNTIME_ROWS: [&str; 3] = ["runtime_ms", "duration_ms", "kernel_time_ms"];

/// Best-effort importer for the nvprof event/metric CSV export: banner lines
/// starting with `==` are skipped, the header must contain a `Kernel` column
/// and a name/value column pair, and when Min/Avg/Max are all present the
/// average is used. Unknown columns are ignored.
pub fn import_nvprof_csv(text: &str, meta: &NvprofMeta) -> Result<Vec<SampleRecord>> {
    let filtered: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with("==") && !line.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    if filtered.is_empty() {
        return Err(Error::Format(
            "no header row found in nvprof export".to_string(),
        ));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(filtered.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read nvprof header: {e}")))?
        .clone();
    let find = |names: &[&str]| -> Option<usize> {
        names.iter().find_map(|n| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(n))
        })
    };

    let kernel_col = find(&["Kernel"])
        .ok_or_else(|| Error::Format("nvprof header has no 'Kernel' column".to_string()))?;
    let name_col = find(&["Event Name", "Metric Name", "Name"]).ok_or_else(|| {
        Error::Format("nvprof header has no event/metric name column".to_string())
    })?;
    let value_col = find(&["Avg", "Value", "Average"])
        .ok_or_else(|| Error::Format("nvprof header has no value column".to_string()))?;

    struct KernelAccum {
        counters: BTreeMap<String, f64>,
        cycles: Option<u64>,
        runtime_ms: Option<f64>,
    }
    let mut kernels: BTreeMap<String, KernelAccum> = BTreeMap::new();

    for row in reader.records() {
        let row = row.map_err(|e| Error::Format(format!("nvprof CSV read error: {e}")))?;
        let kernel = match row.get(kernel_col) {
            Some(k) if !k.trim().is_empty() => k.trim().to_string(),
            _ => continue, // context rows without a kernel
        };
        let name = row.get(name_col).unwrap_or("").trim().to_string();
        if name.is_empty() {
            continue;
        }
        let raw = row.get(value_col).unwrap_or("").trim();
        let value: f64 = raw
            .trim_end_matches('%')
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                line: row_line(&row),
                message: format!("non-numeric value '{raw}' for '{name}'"),
            })?;

        let accum = kernels.entry(kernel.clone()).or_insert(KernelAccum {
            counters: BTreeMap::new(),
            cycles: None,
            runtime_ms: None,
        });
        let group = format!(
            "{}/{}/run{}/mask{}/{}",
            meta.program, meta.input_id, meta.run_id, meta.version_mask, kernel
        );

        if NVPROF_CYCLE_EVENTS.contains(&name.as_str()) {
            let cycles = value.round() as u64;
            if cycles == 0 || accum.cycles.replace(cycles).is_some() {
                return Err(if cycles == 0 {
                    Error::Parse {
                        line: row_line(&row),
                        message: format!("cycle event '{name}' must be > 0"),
                    }
                } else {
                    Error::DuplicateCounter {
                        group,
                        counter: name,
                    }
                });
            }
        } else if NVPROF_RUNTIME_ROWS.contains(&name.as_str()) {
            if accum.runtime_ms.replace(value).is_some() {
                return Err(Error::DuplicateCounter {
                    group,
                    counter: name,
                });
            }
        } else {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::Parse {
                    line: row_line(&row),
                    message: format!("counter '{name}' must be finite and >= 0"),
                });
            }
            if accum.counters.insert(name.clone(), value).is_some() {
                return Err(Error::DuplicateCounter {
                    group,
                    counter: name,
                });
            }
        }
    }

    let mut records = Vec::with_capacity(kernels.len());
    for (kernel, accum) in kernels {
        let group = format!(
            "{}/{}/run{}/mask{}/{}",
            meta.program, meta.input_id, meta.run_id, meta.version_mask, kernel
        );
        let cycles = accum.cycles.ok_or_else(|| Error::IncompleteRecord {
            group: group.clone(),
            missing: "a cycle-count event".to_string(),
        })?;
        let runtime_ms =
            accum
                .runtime_ms
                .or(meta.runtime_ms)
                .ok_or_else(|| Error::IncompleteRecord {
                    group: group.clone(),
                    missing: "a runtime row or caller-supplied runtime_ms".to_string(),
                })?;
        if !(runtime_ms.is_finite() && runtime_ms > 0.0) {
            return Err(Error::InvalidParam(format!(
                "record {group}: runtime must be > 0"
            )));
        }
        records.push(SampleRecord {
            program: meta.program.clone(),
            input_id: meta.input_id.clone(),
            run_id: meta.run_id,
            version_mask: meta.version_mask,
            kernel,
            counters: accum.counters,
            cycles,
            runtime_ms,
        });
    }
    Ok(records)
}

/* ----------------------- schema and normalization ------------------------ */

/// Builds the feature schema as the intersection of counter names across all
/// records, sorted lexicographically. The intersection (rather than the
/// union) guarantees every admitted feature exists in every record, which
/// distance computations and regressions both require.
pub fn build_schema(records: &[SampleRecord]) -> Result<FeatureSchema> {
    let mut iter = records.iter();
    let first = iter.next().ok_or_else(|| {
        Error::EmptyDataset("cannot build a schema from zero records".to_string())
    })?;
    let mut common: BTreeSet<&str> = first.counters.keys().map(String::as_str).collect();
    for record in iter {
        common.retain(|name| record.counters.contains_key(*name));
    }
    common.retain(|name| !RESERVED_NAMES.contains(name));
    if common.is_empty() {
        return Err(Error::Schema(
            "records share no common counter; cannot build a feature schema".to_string(),
        ));
    }
    FeatureSchema::new(common.into_iter().map(str::to_string).collect())
}

/// Converts one record into a feature vector under the given schema:
/// `rate = raw counter / cycles`, in schema order.
pub fn normalize(record: &SampleRecord, schema: &FeatureSchema) -> Result<FeatureVector> {
    let cycles = record.cycles as f64;
    let mut values = Vec::with_capacity(schema.len());
    for name in schema.names() {
        let raw = record
            .counters
            .get(name)
            .ok_or_else(|| Error::MissingFeature {
                group: record.key().to_string(),
                counter: name.clone(),
            })?;
        values.push(raw / cycles);
    }
    FeatureVector::new(schema.clone(), values)
}
