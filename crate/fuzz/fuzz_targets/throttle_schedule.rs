#![no_main]

use dashpc_net::Throttle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(t) = data.parse::<Throttle>() {
        assert_eq!(t.to_string().parse::<Throttle>().as_ref(), Ok(&t));
        for &(at, _) in t.steps() {
            assert!(t.rate_at(at).is_some_and(|r| r > 0.0));
        }
    }
});
