#![no_main]

use circwass::io::{history_to_csv, parse_history_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(rows) = parse_history_csv(text) else { return };
    let again = parse_history_csv(&history_to_csv(&rows)).unwrap();
    // NaN fields compare unequal, so check bit patterns
    assert_eq!(again.len(), rows.len());
    for (a, b) in again.iter().zip(&rows) {
        assert_eq!(a.epoch, b.epoch);
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.eval_maad.to_bits(), b.eval_maad.to_bits());
        assert_eq!(a.expected_arc.to_bits(), b.expected_arc.to_bits());
        assert_eq!(a.blend_weight.map(f64::to_bits), b.blend_weight.map(f64::to_bits));
    }
});
