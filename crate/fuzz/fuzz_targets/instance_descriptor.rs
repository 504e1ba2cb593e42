#![no_main]

use detdec::envs::InstanceDescriptor;
use detdec::DetDecPomdp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(desc) = InstanceDescriptor::from_json(text) else { return };
    let Ok(model) = desc.build() else { return };
    let b0 = model.initial_belief();
    for s in b0.support().take(8) {
        for j in 0..model.joint_action_count().min(32) {
            let _ = model.step(s, &model.joint_action(j));
        }
    }
});
