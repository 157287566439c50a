#![no_main]

use libfuzzer_sys::fuzz_target;
use streamkpca::harness::parse_trajectory_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = parse_trajectory_csv(data) {
        // every accepted record is finite and steps are consecutive from 1
        for (i, r) in parsed.records.iter().enumerate() {
            assert_eq!(r.step, i + 1);
            assert!(r.s.is_finite() && r.phi_norm_sq.is_finite() && r.log_ratio.is_finite());
        }
    }
});
