#![no_main]

use libfuzzer_sys::fuzz_target;
use pbt_map_elites::blob;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(values) = blob::decode(text) {
            let bits: Vec<u32> = values.iter().map(|x| x.to_bits()).collect();
            let again: Vec<u32> = blob::decode(&blob::encode(&values)).unwrap().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits, again);
        }
    }
});
