#![no_main]

use dashpc_core::manifest::{parse_mpd, serialize_mpd};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(mpd) = parse_mpd(data) {
        let text = serialize_mpd(&mpd).expect("parsed manifests serialize");
        let again = parse_mpd(&text).expect("re-parsing our own output");
        assert_eq!(again, mpd, "\n{text}");
    }
});
