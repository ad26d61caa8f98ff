//! Bracket-string analyzers on arbitrary text: the stack simulations must
//! reject invalid input gracefully, and accept/accept consistently.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtslm::dyck::{dyck_targets, pair_distances};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let targets = dyck_targets(text);
        let distances = pair_distances(text);
        // A fully balanced string is in particular prefix-valid.
        if let Ok(d) = &distances {
            assert!(targets.is_ok());
            assert_eq!(d.len(), text.chars().count() / 2);
        }
    }
});
