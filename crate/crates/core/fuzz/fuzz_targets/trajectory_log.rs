#![no_main]

use libfuzzer_sys::fuzz_target;
use pbt_map_elites::env::Trajectory;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Trajectory::from_log(text, 4, 2);
        let _ = Trajectory::from_log(text, 2, 2);
    }
});
