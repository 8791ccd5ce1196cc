use proptest::prelude::*;

use jddl::losses::{self, loss, loss_gradient, regress_box, CenterBox, LossKind, Ratio};

fn center_box() -> impl Strategy<Value = CenterBox> {
    (-20.0..20.0f64, -20.0..20.0f64, 0.05..10.0f64, 0.05..10.0f64)
        .prop_map(|(x, y, w, h)| CenterBox::new(x, y, w, h).unwrap())
}

fn ratio() -> impl Strategy<Value = Ratio> {
    (0.3..2.0f64).prop_map(|r| Ratio::new(r).unwrap())
}

fn kind() -> impl Strategy<Value = LossKind> {
    prop::sample::select(LossKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn inner_iou_is_bounded_and_degenerates(a in center_box(), b in center_box(), r in ratio()) {
        let v = losses::inner_iou(&a, &b, r);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((losses::inner_iou(&a, &b, Ratio::ONE) - losses::iou(&a, &b)).abs() <= 1e-12);
        prop_assert!((losses::inner_ciou_loss(&a, &b, Ratio::ONE) - losses::ciou_loss(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn overlap_is_symmetric(a in center_box(), b in center_box(), r in ratio()) {
        prop_assert_eq!(losses::iou(&a, &b), losses::iou(&b, &a));
        prop_assert!((losses::inner_iou(&a, &b, r) - losses::inner_iou(&b, &a, r)).abs() <= 1e-15);
    }

    #[test]
    fn losses_ignore_translation(
        a in center_box(), b in center_box(), r in ratio(), k in kind(),
        dx in -10.0..10.0f64, dy in -10.0..10.0f64,
    ) {
        let before = loss(k, &a, &b, r);
        let after = loss(k, &a.translated(dx, dy), &b.translated(dx, dy), r);
        prop_assert!((before - after).abs() <= 1e-12, "{} vs {}", before, after);
    }

    #[test]
    fn losses_ignore_scale(a in center_box(), b in center_box(), r in ratio(), k in kind(), s in 0.01..100.0f64) {
        let before = loss(k, &a, &b, r);
        let after = loss(k, &a.scaled(s), &b.scaled(s), r);
        prop_assert!((before - after).abs() <= 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn losses_are_nonnegative_and_vanish_at_target(a in center_box(), r in ratio(), k in kind()) {
        prop_assert!(loss(k, &a, &a, r).abs() <= 1e-12);
        let g = loss_gradient(k, &a, &a, r).unwrap();
        prop_assert!(g.iter().all(|c| c.abs() <= 1e-12));
    }

    #[test]
    fn regression_keeps_boxes_valid(a in center_box(), b in center_box(), r in ratio(), k in kind()) {
        let t = regress_box(&a, &b, k, r, 50, 0.05).unwrap();
        prop_assert_eq!(t.steps.len(), 51);
        prop_assert!(t.steps.iter().all(|s| s.pred.w > 0.0 && s.pred.h > 0.0 && s.loss.is_finite()));
    }
}

#[test]
fn touching_boxes_are_not_differentiable() {
    let a = CenterBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
    let b = CenterBox::new(2.0, 0.0, 2.0, 2.0).unwrap();
    for k in [LossKind::Iou, LossKind::Giou, LossKind::Diou, LossKind::Ciou] {
        assert!(loss_gradient(k, &a, &b, Ratio::ONE).is_err(), "{k}");
    }
    // The auxiliary boxes at ratio 0.5 are well apart, so only the plain
    // overlap term is at its kink.
    assert!(loss_gradient(LossKind::InnerIou, &a, &b, Ratio::new(0.5).unwrap()).is_ok());
}
