//! Production losses against the straight-line 64-bit recomputations in
//! `gzsl_core::oracle`, on randomized 8-row batches.

use gzsl_core::embedding::{
    class_contrastive_loss, instance_contrastive_loss, ranking_loss_real, total_loss_basic, total_loss_ce, LossParams,
};
use gzsl_core::generation::{adversarial_value, generate};
use gzsl_core::oracle;
use gzsl_core::trainer::{evaluate_objective, GradMode, Mode, NetBundle, StepBatch, TermMask};

const TRIALS: u64 = 100;
const TOL: f64 = 1e-5;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * b.abs().max(1.0)
}

fn instance(mode: Mode, seed: u64) -> (NetBundle, StepBatch, LossParams) {
    let case = oracle::random_case(mode, seed).unwrap();
    assert_eq!(case.1.len(), 8);
    case
}

fn check_mode(mode: Mode) {
    let mask = TermMask::for_mode(mode);
    for seed in 0..TRIALS {
        let (mut nets, batch, params) = instance(mode, seed);
        let got = evaluate_objective(&mut nets, &batch, mask, &params, GradMode::None).unwrap();
        let want = oracle::objective_f32(&nets, &batch, mask, &params);
        let pairs = [
            ("V", got.v, want.v),
            ("L_ins", got.ins, want.ins),
            ("L_cls", got.cls, want.cls),
            ("L_se_real", got.se_real, want.se_real),
            ("L_se_sync", got.se_sync, want.se_sync),
        ];
        for (name, g, w) in pairs {
            match (g, w) {
                (Some(g), Some(w)) => assert!(close(g as f64, w), "{mode} seed {seed} {name}: {g} vs {w}"),
                (None, None) => {}
                _ => panic!("{mode} seed {seed}: {name} present on one side only"),
            }
        }
        assert!(close(got.total() as f64, want.total()), "{mode} seed {seed} total");
    }
}

#[test]
fn contrastive_objective_matches_oracle() {
    check_mode(Mode::CeFull);
}

#[test]
fn component_ablations_match_oracle() {
    check_mode(Mode::CeInsOnly);
    check_mode(Mode::CeClsOnly);
}

#[test]
fn semantic_objective_matches_oracle() {
    check_mode(Mode::SeBasic);
}

#[test]
fn comparator_ranking_objective_matches_oracle() {
    check_mode(Mode::SeEmbed);
}

#[test]
fn generator_only_objective_matches_oracle() {
    check_mode(Mode::GenOnly);
}

#[test]
fn discrepancy_summary_agrees() {
    for mode in Mode::ALL {
        assert!(oracle::objective_discrepancy(mode, 10).unwrap() <= TOL, "{mode}");
    }
}

#[test]
fn standalone_losses_match_oracle() {
    for seed in 0..TRIALS {
        let (ce, batch, params) = instance(Mode::CeFull, seed);
        let (se, _, _) = instance(Mode::SeBasic, seed);
        let mut rng = gzsl_core::rng_from_seed(seed);

        let fake = generate(&ce.g, &batch.attrs, &mut rng).unwrap();
        let v = adversarial_value(&ce.d, &batch.real_x, &batch.attrs, &fake, &batch.attrs).unwrap();
        let c = ce.cast::<f64>();
        let rows = oracle::rows;
        let want = oracle::adversarial_value(&c.d, &rows(&batch.real_x.cast()), &rows(&batch.attrs.cast()), &rows(&fake.cast()), &rows(&batch.attrs.cast()));
        assert!(close(v as f64, want), "seed {seed} V");

        let r = ranking_loss_real(&se.e, &batch.real_x, &batch.attrs, &batch.neg_attrs_real, params.margin_delta).unwrap();
        let s64 = se.cast::<f64>();
        let want = oracle::ranking_loss_real(
            &s64.e,
            &rows(&batch.real_x.cast()),
            &rows(&batch.attrs.cast()),
            &rows(&batch.neg_attrs_real.cast()),
            params.margin_delta,
        );
        assert!(close(r as f64, want), "seed {seed} ranking");

        let h = ce.e.infer(&batch.real_x).unwrap();
        let z = ce.h.infer(&h).unwrap();
        let k = 1 + (seed as usize % 6);
        let negs = z.slice_rows(2, 2 + k);
        let l = instance_contrastive_loss(z.row(0), z.row(1), &negs, params.tau_e).unwrap();
        let z64 = rows(&z.cast());
        let want = oracle::instance_loss(&z64[0], &z64[1], &rows(&negs.cast()), params.tau_e);
        assert!(close(l as f64, want), "seed {seed} instance");

        let l = class_contrastive_loss(&ce.f, &h, &batch.seen_attrs, &batch.labels, params.tau_s).unwrap();
        let h64 = rows(&h.cast());
        let seen = rows(&batch.seen_attrs.cast());
        let want: f64 = h64
            .iter()
            .zip(&batch.labels)
            .map(|(hi, &y)| oracle::class_loss(&c.f, hi, &seen, y, params.tau_s))
            .sum::<f64>()
            / h64.len() as f64;
        assert!(close(l as f64, want), "seed {seed} class");
    }
}

#[test]
fn totals_are_sums_of_their_terms() {
    for seed in 0..20 {
        let (mut ce, batch, params) = instance(Mode::CeFull, seed);
        let full = total_loss_ce(&mut ce, &batch, &params, true, true).unwrap();
        let ins = total_loss_ce(&mut ce, &batch, &params, true, false).unwrap();
        let cls = total_loss_ce(&mut ce, &batch, &params, false, true).unwrap();
        assert!(ins.cls.is_none() && cls.ins.is_none());
        assert_eq!(ins.ins, full.ins);
        assert_eq!(cls.cls, full.cls);
        let parts = full.v.unwrap() + full.ins.unwrap() + full.cls.unwrap();
        assert!((full.total() - parts).abs() <= 1e-6 * parts.abs().max(1.0));
        assert!((ins.total() + cls.total() - full.v.unwrap() - full.total()).abs() <= 1e-5);

        let (mut se, batch, params) = instance(Mode::SeBasic, seed);
        let t = total_loss_basic(&mut se, &batch, &params).unwrap();
        let parts = t.v.unwrap() + t.se_real.unwrap() + t.se_sync.unwrap();
        assert!((t.total() - parts).abs() <= 1e-6 * parts.abs().max(1.0));
        assert!(t.ins.is_none() && t.cls.is_none());
    }
}
