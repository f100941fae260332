#![no_main]

use libfuzzer_sys::fuzz_target;
use stochrelax::expr::{parse_expression, Dims, Scope};

fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(src) = std::str::from_utf8(rest) else { return };
    let scope = match sel % 3 {
        0 => Scope::Dynamics,
        1 => Scope::Initial,
        _ => Scope::Cost,
    };
    let dims = Dims { np: 2, nw: 2, nx: 2 };
    if let Ok(graph) = parse_expression(src, &dims, scope) {
        let printed = graph.format_output(0);
        parse_expression(&printed, &dims, scope).expect("printed expression parses");
    }
});
