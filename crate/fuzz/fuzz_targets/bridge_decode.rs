#![no_main]

use dashpc_net::bridge::{read_message, Message};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Message::decode(data) {
        let wire = m.encode();
        let again = Message::decode(&wire[4..]).expect("decoding our own output");
        assert_eq!(again.encode(), wire);
    }
    let mut cursor = std::io::Cursor::new(data);
    while let Ok(Some(_)) = read_message(&mut cursor) {}
});
