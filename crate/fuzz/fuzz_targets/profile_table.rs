#![no_main]

use libfuzzer_sys::fuzz_target;
use magflow::config::parse_profile_table;
use magflow::flow::CurvatureProfile;

fuzz_target!(|text: &str| {
    if let Ok((knots, values)) = parse_profile_table(text) {
        assert_eq!(knots.len(), values.len());
        assert!(knots.iter().chain(&values).all(|x| x.is_finite()));
        let _ = CurvatureProfile::table(knots, values, None, None);
    }
});
