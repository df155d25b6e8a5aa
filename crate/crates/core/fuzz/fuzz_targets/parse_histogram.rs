#![no_main]

use circwass::io::{histogram_to_csv, histogram_to_json, parse_histogram};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(h) = parse_histogram(text) else { return };
    // whatever parses must survive both emitters unchanged
    assert_eq!(parse_histogram(&histogram_to_json(&h)).unwrap(), h);
    assert_eq!(parse_histogram(&histogram_to_csv(&h)).unwrap(), h);
});
