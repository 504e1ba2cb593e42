#![no_main]

use detdec::JointPolicy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(policy) = JointPolicy::from_json(text) {
        // a validated policy is total: every node acts and advances
        for fsc in &policy.agents {
            for n in 0..fsc.size() as u32 {
                fsc.act(n).unwrap();
                fsc.advance(n, 0).unwrap();
                fsc.advance(n, u32::MAX).unwrap();
            }
        }
        assert_eq!(JointPolicy::from_json(&policy.to_json()).unwrap(), policy);
    }
});
