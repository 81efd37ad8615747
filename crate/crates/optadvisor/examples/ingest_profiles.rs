//! Parse profiler output and turn raw counters into feature vectors.
//!
//! ```bash
//! cargo run -p optadvisor --example ingest_profiles
//! ```

use optadvisor::profile::{
    build_schema, import_nvprof_csv, normalize, parse_canonical_csv, write_canonical_csv,
    NvprofMeta,
};

fn main() -> optadvisor::Result<()> {
    // The canonical interchange format: one counter per row, grouped by
    // (program, input, run, version mask, kernel). The reserved counters
    // elapsed_cycles and runtime_ms become the normalizer and the label.
    let canonical = "\
program,input_id,run_id,version_mask,kernel,counter,value
# two versions of the same kernel: mask 0 = baseline, mask 1 = optimized
nbody,small,0,0,force_kernel,inst_executed,48000000
nbody,small,0,0,force_kernel,gld_transactions,9600000
nbody,small,0,0,force_kernel,elapsed_cycles,24000000
nbody,small,0,0,force_kernel,runtime_ms,34.2
nbody,small,0,1,force_kernel,inst_executed,36000000
nbody,small,0,1,force_kernel,gld_transactions,9500000
nbody,small,0,1,force_kernel,elapsed_cycles,18000000
nbody,small,0,1,force_kernel,runtime_ms,25.7
";
    let records = parse_canonical_csv(canonical)?;
    println!("parsed {} records from canonical CSV", records.len());

    // Feature schema = counters common to every record, sorted. Normalizing
    // by the cycle count turns totals into runtime-independent rates.
    let schema = build_schema(&records)?;
    println!("schema: {:?}", schema.names());
    for record in &records {
        let vector = normalize(record, &schema)?;
        let rates: Vec<String> = vector
            .iter()
            .map(|(name, rate)| format!("{name}={rate:.4}"))
            .collect();
        println!("  mask {}: {}", record.version_mask, rates.join("  "));
    }

    // A profiler export can also be imported directly. The exporter does not
    // know the program identity, so the caller supplies it; the Avg column is
    // used when Min/Max/Avg are present.
    let nvprof_export = "\
==1842== NVPROF is profiling process 1842, command: ./nbody
==1842== Profiling result:
Device,Kernel,Invocations,Event Name,Min,Max,Avg
Tesla K40c,force_kernel,3,inst_executed,47988213,48011207,48000000
Tesla K40c,force_kernel,3,gld_transactions,9598102,9601899,9600000
Tesla K40c,force_kernel,3,elapsed_cycles_sm,23988102,24011898,24000000
";
    let meta = NvprofMeta {
        program: "nbody".to_string(),
        input_id: "small".to_string(),
        run_id: 1,
        version_mask: 0,
        runtime_ms: Some(34.4),
    };
    let imported = import_nvprof_csv(nvprof_export, &meta)?;
    println!(
        "imported {} record(s) from an nvprof export (cycles = {})",
        imported.len(),
        imported[0].cycles
    );

    // Records serialize back to the canonical format losslessly.
    let round_trip = parse_canonical_csv(&write_canonical_csv(&records))?;
    assert_eq!(round_trip, records);
    println!(
        "canonical round trip preserved all {} records",
        round_trip.len()
    );
    Ok(())
}
