#![no_main]

use heavyball::experiment::{ConfigOverrides, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(overrides) = ConfigOverrides::parse(text) {
        let cfg = ExperimentConfig::resolve(&ConfigOverrides::default(), None, &overrides);
        if cfg.validate().is_ok() {
            let again = ExperimentConfig::parse(&cfg.to_canonical()).expect("canonical form parses");
            assert_eq!(again, cfg);
            let _ = cfg.derived();
        }
    }
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        let _ = cfg.validate();
    }
});
