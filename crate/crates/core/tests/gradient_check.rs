#[path = "support/mod.rs"]
mod support;

use synthaug::detector::network::Params;
use synthaug::detector::DetectorConfig;

const INPUTS: [[u32; 6]; 3] = [[4, 5, 6, 7, 8, 9], [11, 1, 4, 4, 0, 0], [10, 3, 7, 2, 9, 5]];

#[test]
fn backprop_matches_central_differences() {
    let c = support::tiny_config();
    for (k, ids) in INPUTS.iter().enumerate() {
        let p = Params::init(&c, 40 + k as u64);
        for target in [0.0, 1.0] {
            let g = support::gradcheck(&c, &p, ids, target, 0, 1e-5);
            assert_eq!(g.checked, p.parameter_count());
            assert!(g.max_rel_err < 1e-4, "input {k}, target {target}: {}", g.worst);
        }
    }
}

#[test]
fn fixed_dropout_mask_is_differentiated_through() {
    let c = DetectorConfig { dropout: 0.3, ..support::tiny_config() };
    let p = Params::init(&c, 7);
    let g = support::gradcheck(&c, &p, &INPUTS[0], 1.0, 1234, 1e-5);
    assert!(g.max_rel_err < 1e-4, "{}", g.worst);
}
