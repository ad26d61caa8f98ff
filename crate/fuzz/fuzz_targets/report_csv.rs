//! CSV report ingestion used by the report bundler.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = mtslm_cli::parse_report_csv_bytes("fuzz.csv", data);
});
