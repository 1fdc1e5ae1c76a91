#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_online::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        // accepted configs must survive a round trip and either build or fail cleanly
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).expect("canonical form parses");
        assert_eq!(cfg.hash(), back.hash());
        let _ = cfg.build();
    }
});
