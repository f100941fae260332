#![no_main]

use libfuzzer_sys::fuzz_target;
use stochrelax::expr::parse_model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = parse_model(text) else { return };
    let printed = model.to_model_text();
    let again = parse_model(&printed).expect("printed model parses");
    assert_eq!(model, again, "round trip changed the model:\n{printed}");
});
