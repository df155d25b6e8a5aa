#![no_main]

use circwass::io::parse_loss;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(loss) = parse_loss(text) else { return };
    assert_eq!(parse_loss(&loss.to_string()).unwrap(), loss);
});
