//! Deterministic synthetic profile generator.
//!
//! Real measurements require profiling dozens of hand-written program
//! versions on real hardware. This generator stands in for them: it emits a
//! complete version lattice (every combination of n optimizations) for a
//! configurable set of programs, inputs, and repeated runs, with a hidden
//! per-optimization ground-truth speedup that varies smoothly across inputs.
//! The ground truth is emitted alongside the profiles so experiments can be
//! checked against a perfect oracle.
//!
//! Every generated quantity is a pure hash of the seed and its identity
//! (program, input, run, mask, counter), so output bytes are identical for
//! identical seeds regardless of generation order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optdb::{self, EntryManifest, SampleRef, SampleRefPair};
use crate::profile::{self, SampleRecord};

/// Synthetic GPU clock: cycles per millisecond at 0.7 GHz.
const CYCLES_PER_MS: f64 = 700_000.0;

/// Counter names emitted for every record.
pub const SYNTH_COUNTERS: [&str; 8] = [
    "branch",
    "divergent_branch",
    "gld_transactions",
    "gst_transactions",
    "inst_executed",
    "l2_read_misses",
    "shared_load",
    "shared_store",
];

/// Plausible per-cycle rate range for each counter.
fn rate_range(counter: &str) -> (f64, f64) {
    match counter {
        "inst_executed" => (0.5, 4.0),
        "branch" => (0.02, 0.3),
        "divergent_branch" => (0.001, 0.08),
        "gld_transactions" => (0.05, 0.8),
        "gst_transactions" => (0.01, 0.3),
        "shared_load" => (0.01, 0.5),
        "shared_store" => (0.005, 0.3),
        "l2_read_misses" => (0.001, 0.2),
        _ => (0.01, 1.0),
    }
}

/// Hidden effect of one optimization on one program: the log-speedup at the
/// smallest input plus a slope along the input-size axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectParams {
    pub log_speedup: f64,
    pub input_slope: f64,
}

/// One synthetic program: its optimization list (bit `i` of the version mask
/// corresponds to `optimizations[i]`) and how many inputs to profile.
#[derive(Debug, Clone)]
pub struct ProgramConfig {
    pub name: String,
    pub kernel: String,
    pub input_count: usize,
    pub optimizations: Vec<String>,
    /// Explicit effects parallel to `optimizations`; derived from the seed
    /// when absent.
    pub effects: Option<Vec<EffectParams>>,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub runs: u32,
    pub noise_level: f64,
    pub programs: Vec<ProgramConfig>,
}

impl SynthConfig {
    /// Default shape: two n-body-style programs, one regular with 4 inputs,
    /// one tree-based with 6, six optimizations each, two of them shared.
    pub fn with_defaults(seed: u64, noise_level: f64) -> SynthConfig {
        let opt = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        SynthConfig {
            seed,
            runs: 3,
            noise_level,
            programs: vec![
                ProgramConfig {
                    name: "nb".to_string(),
                    kernel: "force_calculation".to_string(),
                    input_count: 4,
                    optimizations: opt(&["const", "ftz", "peel", "rsqrt", "shmem", "unroll"]),
                    effects: None,
                },
                ProgramConfig {
                    name: "bh".to_string(),
                    kernel: "force_calculation".to_string(),
                    input_count: 6,
                    optimizations: opt(&["ftz", "rsqrt", "sort", "vola", "vote", "warp"]),
                    effects: None,
                },
            ],
        }
    }
}

/* ---------------------------- dataset manifest ---------------------------- */

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputInfo {
    pub input_id: String,
    /// Noiseless speedup each optimization delivers on this input.
    #[serde(default)]
    pub true_speedups: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgramInfo {
    pub name: String,
    pub kernel: String,
    /// Bit `i` of a version mask corresponds to `optimizations[i]`.
    pub optimizations: Vec<String>,
    pub inputs: Vec<InputInfo>,
}

/// Sidecar describing a dataset: which programs and optimizations it covers
/// and, for synthetic data, the injected ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: Option<u64>,
    pub noise_level: Option<f64>,
    pub runs: u32,
    pub programs: Vec<ProgramInfo>,
}

impl DatasetManifest {
    pub fn program(&self, name: &str) -> Option<&ProgramInfo> {
        self.programs.iter().find(|p| p.name == name)
    }

    /// Bit position of an optimization within a program's version mask.
    pub fn optimization_bit(&self, program: &str, optimization_id: &str) -> Option<u32> {
        self.program(program)?
            .optimizations
            .iter()
            .position(|o| o == optimization_id)
            .map(|i| i as u32)
    }
}

/// Profile records plus the manifest that names their optimization bits.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub records: Vec<SampleRecord>,
    pub manifest: DatasetManifest,
}

/* ----------------------------- deterministic hash ------------------------ */

fn fnv1a(seed: u64, parts: &[&str]) -> u64 {
    const PRIME: u64 = 0x100000001b3;
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in seed.to_le_bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    for part in parts {
        for byte in part.as_bytes() {
            hash ^= *byte as u64;
            hash = hash.wrapping_mul(PRIME);
        }
        hash ^= 0xff; // separator so ("ab","c") != ("a","bc")
        hash = hash.wrapping_mul(PRIME);
    }
    // splitmix-style finalizer for good bit diffusion
    hash ^= hash >> 33;
    hash = hash.wrapping_mul(0xff51afd7ed558ccd);
    hash ^= hash >> 33;
    hash = hash.wrapping_mul(0xc4ceb9fe1a85ec53);
    hash ^= hash >> 33;
    hash
}

/// Uniform value in [0, 1) derived from the seed and an identity path.
fn unit(seed: u64, parts: &[&str]) -> f64 {
    (fnv1a(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

fn in_range(seed: u64, parts: &[&str], lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(seed, parts)
}

/* -------------------------------- generation ------------------------------ */

fn input_id(index: usize) -> String {
    format!("in{index:02}")
}

/// Input position on a [0, 1] axis; effects and counter rates drift along it.
fn input_axis(index: usize, count: usize) -> f64 {
    if count <= 1 {
        0.0
    } else {
        index as f64 / (count - 1) as f64
    }
}

fn derived_effect(seed: u64, program: &str, optimization: &str) -> EffectParams {
    let helpful = unit(seed, &["effect-sign", program, optimization]) < 0.6;
    let log_speedup = if helpful {
        in_range(seed, &["effect-gain", program, optimization], 0.10, 0.45)
    } else {
        -in_range(seed, &["effect-loss", program, optimization], 0.08, 0.22)
    };
    // Smaller than any |log_speedup| so the true effect direction never
    // flips across inputs; only measurement noise can cross the 1.0 line.
    let input_slope = in_range(seed, &["effect-slope", program, optimization], -0.06, 0.06);
    EffectParams {
        log_speedup,
        input_slope,
    }
}

fn effect_for(config: &SynthConfig, program: &ProgramConfig, opt_index: usize) -> EffectParams {
    match &program.effects {
        Some(effects) => effects[opt_index],
        None => derived_effect(
            config.seed,
            &program.name,
            &program.optimizations[opt_index],
        ),
    }
}

/// True speedup of optimization `opt_index` for the given input.
fn true_speedup(
    config: &SynthConfig,
    program: &ProgramConfig,
    opt_index: usize,
    input: usize,
) -> f64 {
    let effect = effect_for(config, program, opt_index);
    let t = input_axis(input, program.input_count);
    (effect.log_speedup + effect.input_slope * t).exp()
}

/// Multiplicative noise factor: 1 plus a jitter scaled by `noise_level`.
fn noise_factor(config: &SynthConfig, parts: &[&str]) -> f64 {
    1.0 + config.noise_level * in_range(config.seed, parts, -1.0, 1.0)
}

/// Generates the full version lattice described by the config.
pub fn generate(config: &SynthConfig) -> Result<EvalDataset> {
    if config.programs.is_empty() || config.runs == 0 {
        return Err(Error::InvalidParam(
            "need at least one program and one run".to_string(),
        ));
    }
    if !(config.noise_level.is_finite() && (0.0..1.0).contains(&config.noise_level)) {
        return Err(Error::InvalidParam(
            "noise_level must be in [0, 1)".to_string(),
        ));
    }
    for program in &config.programs {
        let n = program.optimizations.len();
        if n == 0 || n > 16 {
            return Err(Error::InvalidParam(format!(
                "program '{}' must declare between 1 and 16 optimizations",
                program.name
            )));
        }
        if program.input_count == 0 || program.input_count > 99 {
            return Err(Error::InvalidParam(format!(
                "program '{}' must have between 1 and 99 inputs",
                program.name
            )));
        }
        if let Some(effects) = &program.effects {
            if effects.len() != n {
                return Err(Error::InvalidParam(format!(
                    "program '{}' declares {} effects for {} optimizations",
                    program.name,
                    effects.len(),
                    n
                )));
            }
        }
    }

    let seed = config.seed;
    let mut records = Vec::new();
    let mut program_infos = Vec::new();

    for program in &config.programs {
        let n_opts = program.optimizations.len();
        let base_runtime = in_range(seed, &["base-runtime", &program.name], 5.0, 20.0);

        let mut inputs = Vec::with_capacity(program.input_count);
        for input in 0..program.input_count {
            let mut true_speedups = BTreeMap::new();
            for (i, opt) in program.optimizations.iter().enumerate() {
                true_speedups.insert(opt.clone(), true_speedup(config, program, i, input));
            }
            inputs.push(InputInfo {
                input_id: input_id(input),
                true_speedups,
            });
        }
        program_infos.push(ProgramInfo {
            name: program.name.clone(),
            kernel: program.kernel.clone(),
            optimizations: program.optimizations.clone(),
            inputs,
        });

        for input in 0..program.input_count {
            let in_id = input_id(input);
            let t = input_axis(input, program.input_count);
            // runtime grows with input size
            let input_runtime = base_runtime * 1.5f64.powi(input as i32);

            for mask in 0u64..(1 << n_opts) {
                let mask_tag = mask.to_string();
                let mut speedup_product = 1.0;
                for i in 0..n_opts {
                    if mask & (1 << i) != 0 {
                        speedup_product *= true_speedup(config, program, i, input);
                    }
                }
                let clean_runtime = input_runtime / speedup_product;
                let clean_cycles = clean_runtime
                    * CYCLES_PER_MS
                    * (1.0
                        + 0.01
                            * in_range(
                                seed,
                                &["cycle-wobble", &program.name, &in_id, &mask_tag],
                                -1.0,
                                1.0,
                            ));

                for run in 0..config.runs {
                    let run_tag = run.to_string();
                    let runtime_ms = clean_runtime
                        * noise_factor(
                            config,
                            &["n-rt", &program.name, &in_id, &run_tag, &mask_tag],
                        );
                    let cycles = (clean_cycles
                        * noise_factor(
                            config,
                            &["n-cy", &program.name, &in_id, &run_tag, &mask_tag],
                        ))
                    .round()
                    .max(1.0) as u64;

                    let mut counters = BTreeMap::new();
                    for counter in SYNTH_COUNTERS {
                        let (lo, hi) = rate_range(counter);
                        let base_rate = in_range(seed, &["rate", &program.name, counter], lo, hi);
                        let drift = in_range(seed, &["drift", &program.name, counter], -0.4, 0.4);
                        let mut rate = base_rate * (1.0 + drift * t);
                        for (i, opt) in program.optimizations.iter().enumerate() {
                            if mask & (1 << i) != 0 {
                                rate *= in_range(
                                    seed,
                                    &["gamma", &program.name, opt, counter],
                                    0.8,
                                    1.25,
                                );
                            }
                        }
                        let value = (rate
                            * cycles as f64
                            * noise_factor(
                                config,
                                &["n-ct", &program.name, &in_id, &run_tag, &mask_tag, counter],
                            ))
                        .round()
                        .max(0.0);
                        counters.insert(counter.to_string(), value);
                    }

                    records.push(SampleRecord {
                        program: program.name.clone(),
                        input_id: in_id.clone(),
                        run_id: run,
                        version_mask: mask,
                        kernel: program.kernel.clone(),
                        counters,
                        cycles,
                        runtime_ms,
                    });
                }
            }
        }
    }

    records.sort_by_key(|r| r.key());
    Ok(EvalDataset {
        records,
        manifest: DatasetManifest {
            seed: Some(config.seed),
            noise_level: Some(config.noise_level),
            runs: config.runs,
            programs: program_infos,
        },
    })
}

/* ------------------------------ disk layout ------------------------------- */

/// Writes `profiles/<program>.csv` plus `dataset.json` under `dir`.
pub fn write_dataset(dataset: &EvalDataset, dir: &Path) -> Result<()> {
    let profiles = dir.join("profiles");
    fs::create_dir_all(&profiles).map_err(|e| Error::io(&profiles, e))?;
    for program in &dataset.manifest.programs {
        let records: Vec<SampleRecord> = dataset
            .records
            .iter()
            .filter(|r| r.program == program.name)
            .cloned()
            .collect();
        let path = profiles.join(format!("{}.csv", program.name));
        fs::write(&path, profile::write_canonical_csv(&records))
            .map_err(|e| Error::io(&path, e))?;
    }
    let manifest_path = dir.join("dataset.json");
    let mut json = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| Error::CorruptPayload(e.to_string()))?;
    json.push('\n');
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<EvalDataset> {
    let manifest_path = dir.join("dataset.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad dataset.json: {e}")))?;
    let mut records = Vec::new();
    for program in &manifest.programs {
        let path = dir.join("profiles").join(format!("{}.csv", program.name));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        records.extend(profile::parse_canonical_csv(&text)?);
    }
    records.sort_by_key(|r| r.key());
    Ok(EvalDataset { records, manifest })
}

/* --------------------------- database materialization --------------------- */

fn entry_prose(id: &str) -> (&'static str, &'static str) {
    match id {
        "const" => (
            "Pass immutable kernel parameters through constant memory instead of repeating them on every launch.",
            "__constant__ float params[N]; cudaMemcpyToSymbol(params, host, sizeof params);",
        ),
        "ftz" => (
            "Allow the floating-point units to flush denormal values to zero.",
            "nvcc -ftz=true, or __fmul_rz style intrinsics in the source",
        ),
        "peel" => (
            "Peel the innermost loop into a fixed-trip-count loop plus a remainder loop.",
            "for (i = 0; i < n - n % 8; i += 8) { ... } /* then the remainder */",
        ),
        "rsqrt" => (
            "Use the reciprocal square-root intrinsic instead of dividing by the square root.",
            "float r = rsqrtf(d2); /* instead of 1.0f / sqrtf(d2) */",
        ),
        "shmem" => (
            "Stage reused data through shared memory one block at a time.",
            "__shared__ float tile[TILE]; tile[tid] = src[base + tid]; __syncthreads();",
        ),
        "unroll" => (
            "Ask the compiler to unroll the innermost loops.",
            "#pragma unroll 8",
        ),
        "sort" => (
            "Order work items by spatial proximity so neighboring threads traverse similar data.",
            "thrust::sort_by_key(keys.begin(), keys.end(), bodies.begin());",
        ),
        "vola" => (
            "Cache volatile values in locals inside regions where warp lockstep guarantees no outside writer.",
            "float cached = vol_ptr[i]; /* reuse cached within the warp-synchronous block */",
        ),
        "vote" => (
            "Replace shared-memory reduction sequences with warp vote intrinsics.",
            "if (__all_sync(0xffffffff, done)) break;",
        ),
        "warp" => (
            "Assign work per warp instead of per thread to avoid divergence and per-thread bookkeeping.",
            "int lane = threadIdx.x & 31; int warp = threadIdx.x >> 5; /* warp-level loop */",
        ),
        _ => ("Synthetic optimization entry.", ""),
    }
}

/// Materializes the dataset as an optimization database: one entry per
/// optimization name, holding every before/after pair the lattice supports,
/// with per-program profile CSVs inside each entry directory.
pub fn write_database(dataset: &EvalDataset, db_root: &Path) -> Result<()> {
    fs::create_dir_all(db_root).map_err(|e| Error::io(db_root, e))?;

    // union of optimization names across programs
    let mut opt_programs: BTreeMap<&str, Vec<&ProgramInfo>> = BTreeMap::new();
    for program in &dataset.manifest.programs {
        for opt in &program.optimizations {
            opt_programs.entry(opt).or_default().push(program);
        }
    }

    for (opt, programs) in opt_programs {
        let mut samples = Vec::new();
        let mut files = Vec::new();
        for program in programs {
            let bit = dataset
                .manifest
                .optimization_bit(&program.name, opt)
                .expect("optimization listed for program");
            let records: Vec<SampleRecord> = dataset
                .records
                .iter()
                .filter(|r| r.program == program.name)
                .cloned()
                .collect();
            let rel = format!("profiles/{}.csv", program.name);
            for (before, after) in optdb::pair_by_bit(&records, bit)? {
                let selector = |r: &SampleRecord| SampleRef::Selector {
                    file: rel.clone(),
                    program: r.program.clone(),
                    input_id: r.input_id.clone(),
                    run_id: r.run_id,
                    version_mask: r.version_mask,
                    kernel: r.kernel.clone(),
                };
                samples.push(SampleRefPair {
                    before: selector(before),
                    after: selector(after),
                    input_id: before.input_id.clone(),
                });
            }
            files.push((rel, profile::write_canonical_csv(&records)));
        }
        let (description, example) = entry_prose(opt);
        let manifest = EntryManifest {
            id: opt.to_string(),
            name: opt.to_uppercase(),
            description: description.to_string(),
            example: example.to_string(),
            samples,
        };
        optdb::write_entry(db_root, &manifest, &files)?;
    }
    Ok(())
}
