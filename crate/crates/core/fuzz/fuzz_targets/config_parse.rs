#![no_main]

use libfuzzer_sys::fuzz_target;
use pbt_map_elites::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text, &[]) {
            let _ = cfg.validate();
            let _ = RunConfig::parse(&cfg.to_toml(), &[]).expect("echoed config parses");
        }
    }
});
