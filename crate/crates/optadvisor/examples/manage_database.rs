//! Build and edit an optimization database on disk.
//!
//! Each entry is an independent directory with a manifest and before/after
//! profile pairs, so contributing an optimization is just adding a directory.
//!
//! ```bash
//! cargo run -p optadvisor --example manage_database
//! ```

use optadvisor::optdb::{
    add_entry, build_training_set, list_entries, load_db, remove_entry, write_entry, EntryManifest,
    SampleRef, SampleRefPair,
};
use optadvisor::profile::{build_schema, write_canonical_csv, SampleRecord};
use std::collections::BTreeMap;

fn record(mask: u64, runtime_ms: f64) -> SampleRecord {
    let mut counters = BTreeMap::new();
    counters.insert(
        "inst_executed".to_string(),
        48_000_000.0 / (1 + mask) as f64,
    );
    counters.insert("gld_transactions".to_string(), 9_600_000.0);
    SampleRecord {
        program: "nbody".to_string(),
        input_id: "small".to_string(),
        run_id: 0,
        version_mask: mask,
        kernel: "force_kernel".to_string(),
        counters,
        cycles: 24_000_000,
        runtime_ms,
    }
}

fn main() -> optadvisor::Result<()> {
    let root = std::env::temp_dir().join("optadvisor-example-db");
    if root.exists() {
        std::fs::remove_dir_all(&root).ok();
    }
    std::fs::create_dir_all(&root).expect("create database root");

    // One entry with a single before/after pair: mask 0 -> mask 1 applies
    // the optimization (bit 0) and cuts the runtime from 34.2 to 25.7 ms.
    let profiles = write_canonical_csv(&[record(0, 34.2), record(1, 25.7)]);
    let manifest = EntryManifest {
        id: "rsqrt".to_string(),
        name: "RSQRT".to_string(),
        description: "Use the reciprocal square-root intrinsic.".to_string(),
        example: "float r = rsqrtf(d2);".to_string(),
        samples: vec![SampleRefPair {
            before: SampleRef::Selector {
                file: "profiles/nbody.csv".to_string(),
                program: "nbody".to_string(),
                input_id: "small".to_string(),
                run_id: 0,
                version_mask: 0,
                kernel: "force_kernel".to_string(),
            },
            after: SampleRef::Selector {
                file: "profiles/nbody.csv".to_string(),
                program: "nbody".to_string(),
                input_id: "small".to_string(),
                run_id: 0,
                version_mask: 1,
                kernel: "force_kernel".to_string(),
            },
            input_id: "small".to_string(),
        }],
    };
    write_entry(
        &root,
        &manifest,
        &[("profiles/nbody.csv".to_string(), profiles)],
    )?;

    // A documented-but-untrainable entry: no samples yet.
    add_entry(
        &root,
        &EntryManifest {
            id: "shmem".to_string(),
            name: "SHMEM".to_string(),
            description: "Stage reused data through shared memory.".to_string(),
            example: String::new(),
            samples: vec![],
        },
    )?;

    println!("entries after adding rsqrt and shmem:");
    for listing in list_entries(&root)? {
        println!(
            "  {}\t{}\t{} sample pair(s)",
            listing.id, listing.name, listing.sample_count
        );
    }

    // Loading resolves and validates every before/after pair, then training
    // sets fall out: label = runtime(before) / runtime(after).
    let db = load_db(&root)?;
    let schema = build_schema(&db.all_records())?;
    let entry = db.entry("rsqrt").expect("rsqrt entry");
    for instance in build_training_set(entry, &schema)? {
        println!(
            "rsqrt training instance: label {:.3} from features {:?}",
            instance.label,
            instance.features.values()
        );
    }

    // Entries are independent; removing one never disturbs the others.
    remove_entry(&root, "shmem")?;
    println!(
        "after removing shmem: {:?}",
        list_entries(&root)?
            .iter()
            .map(|l| l.id.clone())
            .collect::<Vec<_>>()
    );
    Ok(())
}
