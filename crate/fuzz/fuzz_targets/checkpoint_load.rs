//! The checkpoint container parser must return typed errors, never panic,
//! on arbitrary bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = mtslm::model::load_checkpoint_bytes(data);
});
