//! Raw little-endian token arrays: decode must reject ragged lengths
//! without panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = mtslm::corpus::decode_tokens(data);
});
