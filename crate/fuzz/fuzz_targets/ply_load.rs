#![no_main]

use dashpc_core::ply::{load_ply, save_ply};
use dashpc_core::PlyEncoding;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = load_ply(data) {
        for enc in [PlyEncoding::BinaryLittleEndian, PlyEncoding::Ascii] {
            let bytes = save_ply(&cloud, enc);
            let again = load_ply(&bytes).expect("re-reading our own output");
            assert_eq!(save_ply(&again, enc), bytes);
        }
    }
});
