#![no_main]

use dashpc_net::server::{parse_range, RangeRequest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((len, header)) = data.split_first_chunk::<8>() else {
        return;
    };
    let len = u64::from_le_bytes(*len) >> 16;
    let Ok(header) = std::str::from_utf8(header) else {
        return;
    };
    if let RangeRequest::Partial(a, b) = parse_range(header, len) {
        assert!(a <= b && b < len, "{header:?} on {len} bytes gave {a}-{b}");
    }
});
