//! Whitespace tokenizer + vocabulary builder over arbitrary UTF-8.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtslm::corpus::{load_corpus, EosPolicy};

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let mid = text.len() / 2;
        if !text.is_char_boundary(mid) {
            return;
        }
        let (train, rest) = text.split_at(mid);
        if let Ok(bundle) = load_corpus(train, rest, rest, EosPolicy::AppendEos) {
            bundle.validate().expect("loader must emit in-range ids");
        }
    }
});
