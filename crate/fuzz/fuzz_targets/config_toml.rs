#![no_main]

use libfuzzer_sys::fuzz_target;
use magflow::config::RunConfig;

fuzz_target!(|src: &str| {
    if let Ok(cfg) = RunConfig::from_toml_str(src) {
        // Building must either succeed or report an error, never panic.
        if cfg.validate().is_ok() {
            let _ = cfg.build_model();
            if let Some(sweep) = &cfg.sweep {
                let _ = sweep.points();
            }
        }
    }
});
