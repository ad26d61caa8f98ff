//! JSON-lines dataset loader: malformed JSON, unbalanced bracket strings,
//! and lying max_distance fields are errors, not panics.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = mtslm::dyck::dataset_from_jsonl(data);
});
