//! Differential check of the address text parser against the standard
//! library, plus the raw nybble-string and prefix grammars.

#![no_main]

use libfuzzer_sys::fuzz_target;
use v6forge_core::addr6::{format_canonical, parse_text, NybblePrefix, NybbleSeq};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };

    let ours = parse_text(text);
    let std_parse: Result<std::net::Ipv6Addr, _> = text.parse();
    match (&ours, &std_parse) {
        (Ok(addr), Ok(std_addr)) => {
            assert_eq!(addr.groups(), std_addr.segments(), "value mismatch on {text:?}");
            let canonical = format_canonical(*addr);
            assert_eq!(canonical, std_addr.to_string(), "canonical form of {text:?}");
            assert_eq!(parse_text(&canonical).as_ref(), Ok(addr), "canonical reparse");
        }
        (Ok(_), Err(_)) => panic!("we accept, std rejects: {text:?}"),
        (Err(_), Ok(_)) => panic!("we reject, std accepts: {text:?}"),
        (Err(_), Err(_)) => {}
    }

    if let Ok(seq) = text.parse::<NybbleSeq>() {
        let rendered = seq.to_string();
        assert_eq!(rendered.parse::<NybbleSeq>().unwrap(), seq);
        assert_eq!(rendered.len(), 32);
    }
    if let Ok(prefix) = text.parse::<NybblePrefix>() {
        let rendered = prefix.to_string();
        assert_eq!(rendered.parse::<NybblePrefix>().unwrap(), prefix);
        assert!(!prefix.nybbles().is_empty() && prefix.len() < 32);
    }
});
