#![no_main]

use dashpc_cli::SequencePattern;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(seq) = data.parse::<SequencePattern>() {
        let first = seq.path(seq.start);
        let last = seq.path(seq.start + seq.count - 1);
        assert!(!first.as_os_str().is_empty() && !last.as_os_str().is_empty());
    }
});
