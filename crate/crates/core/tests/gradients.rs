use gzsl_core::audit::{audit_one, LossFamily};
use gzsl_core::nn::GradCheckOptions;

#[test]
fn every_family_matches_finite_differences() {
    let opts = GradCheckOptions::default();
    for family in LossFamily::ALL {
        for seed in 0..3 {
            let r = audit_one(family, seed, &opts, None).unwrap();
            println!("{:<22} seed {seed}: {:.2e} ({} checked, {} excluded) worst {:?}",
                family.name(), r.max_rel_error, r.checked, r.excluded, r.worst_block);
            assert!(r.checked > 0);
            assert!(r.passes(1e-4), "{} seed {seed}: {r:?}", family.name());
        }
    }
}
