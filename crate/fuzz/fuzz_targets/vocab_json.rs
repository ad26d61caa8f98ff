//! Vocabulary sidecar parser: dense ordered ids, a required unknown
//! token, no duplicates — all enforced by error, never by panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = mtslm::corpus::vocab_from_json(data);
});
