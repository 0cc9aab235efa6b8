#![no_main]

use libfuzzer_sys::fuzz_target;
use pbt_map_elites::repertoire::{Repertoire, Snapshot};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(snap) = Snapshot::from_json(text) {
            let _ = Repertoire::restore(&snap);
        }
    }
});
