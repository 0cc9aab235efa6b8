#![no_main]

use libfuzzer_sys::fuzz_target;
use pbt_map_elites::tessellation::{Bounds, CentroidSet};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(set) = CentroidSet::from_table(text, Bounds::unit(2)) {
            let again = CentroidSet::from_table(&set.to_table(), Bounds::unit(2)).expect("table round trip");
            assert_eq!(again.len(), set.len());
            let _ = set.cell_index(&[0.5, 0.5]);
        }
    }
});
