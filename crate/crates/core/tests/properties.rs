use adi_core::eval::{area_matches, detection_ap50, mask_miou, plan_metrics, PlanSample};
use adi_core::planner::{validate_and_repair_plan, Registry, INPUT_IMAGE};
use adi_core::scene::BBox;
use adi_core::{Category, Detection, DetectionSet, LabelMask, MaskSet};
use proptest::prelude::*;
use serde_json::{json, Value};

const TOOL_NAMES: [&str; 9] = [
    "semantic_segmentation",
    "semantic_segmentaton",
    "object_detection",
    "count_objects",
    "compute_area",
    "find_path",
    "summarize",
    "Summarize",
    "teleport",
];
const RESOURCE_NAMES: [&str; 8] = ["input_image", "inptu_image", "masks", "mask", "detections", "n", "area", "building"];

fn raw_action() -> impl Strategy<Value = Value> {
    (
        prop::sample::select(TOOL_NAMES.to_vec()),
        prop::collection::vec(prop::sample::select(RESOURCE_NAMES.to_vec()), 0..3),
        prop::collection::vec(prop::sample::select(RESOURCE_NAMES.to_vec()), 0..2),
    )
        .prop_map(|(tool, inputs, outputs)| json!({"tool": tool, "inputs": inputs, "outputs": outputs}))
}

fn label_mask(w: u32, h: u32) -> impl Strategy<Value = LabelMask> {
    prop::collection::vec(0u8..=10, (w * h) as usize).prop_map(move |d| LabelMask::from_raw(w, h, d).unwrap())
}

fn detection() -> impl Strategy<Value = Detection> {
    (1u8..=10, 0.0f64..50.0, 0.0f64..50.0, 1.0f64..20.0, 1.0f64..20.0, 0.0f64..1.0).prop_map(
        |(c, x, y, w, h, score)| Detection {
            category: Category::from_id(c).unwrap(),
            bbox: BBox::new(x, y, x + w, y + h),
            score,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn repair_is_idempotent(actions in prop::collection::vec(raw_action(), 1..6)) {
        let registry = Registry::standard();
        if let Ok((once, _)) = validate_and_repair_plan(&Value::Array(actions), &registry, &[INPUT_IMAGE], 8) {
            let (twice, log) =
                validate_and_repair_plan(&serde_json::to_value(&once).unwrap(), &registry, &[INPUT_IMAGE], 8).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert!(log.is_empty(), "second pass logged {:?}", log);
        }
    }

    #[test]
    fn area_tolerance_accepts_small_errors(gt in 0.0f64..1e6, rel in -0.0199f64..0.0199) {
        prop_assert!(area_matches(gt * (1.0 + rel), gt));
        prop_assert!(area_matches(gt + 0.99, gt));
    }

    #[test]
    fn area_tolerance_rejects_large_errors(gt in 100.0f64..1e6, rel in 0.021f64..10.0) {
        prop_assert!(!area_matches(gt * (1.0 + rel), gt));
    }

    #[test]
    fn miou_is_a_bounded_similarity(a in label_mask(6, 5), b in label_mask(6, 5)) {
        let (ma, mb) = (MaskSet::from_labels(&a), MaskSet::from_labels(&b));
        let ab = mask_miou(&ma, &mb).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - mask_miou(&mb, &ma).unwrap()).abs() < 1e-12);
        prop_assert_eq!(mask_miou(&ma, &ma).unwrap(), 1.0);
    }

    #[test]
    fn ap_ignores_prediction_order(
        preds in prop::collection::vec(detection(), 0..12),
        gts in prop::collection::vec(detection(), 1..8),
        seed in any::<u64>(),
    ) {
        let gt = DetectionSet::new(gts);
        let forward = detection_ap50(&DetectionSet::new(preds.clone()), &gt).unwrap();
        let mut shuffled = preds.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let other = detection_ap50(&DetectionSet::new(shuffled), &gt).unwrap();
        prop_assert!((0.0..=1.0).contains(&forward));
        prop_assert!((forward - other).abs() < 1e-12);
    }

    #[test]
    fn perfect_detections_score_one(gts in prop::collection::vec(detection(), 1..8)) {
        let gt = DetectionSet::new(gts);
        prop_assert_eq!(detection_ap50(&gt, &gt), Some(1.0));
    }

    #[test]
    fn plan_metrics_agree_with_their_counts(
        pred in prop::collection::vec(prop::option::of(prop::collection::vec(prop::sample::select(TOOL_NAMES.to_vec()), 0..5)), 1..10),
        gt in prop::collection::vec(prop::collection::vec(prop::sample::select(TOOL_NAMES.to_vec()), 1..5), 10),
    ) {
        let ids: Vec<String> = (0..pred.len()).map(|i| format!("r{i}")).collect();
        let pred: Vec<Option<Vec<String>>> =
            pred.into_iter().map(|p| p.map(|v| v.into_iter().map(String::from).collect())).collect();
        let gt: Vec<Vec<String>> = gt.into_iter().map(|v| v.into_iter().map(String::from).collect()).collect();
        let samples: Vec<PlanSample> =
            ids.iter().zip(&pred).map(|(id, p)| PlanSample { request_id: id, tools: p.as_deref() }).collect();
        let truth: Vec<(&str, &[String])> = ids.iter().zip(&gt).map(|(id, g)| (id.as_str(), g.as_slice())).collect();
        let m = plan_metrics(&samples, &truth).unwrap();
        for v in [m.vr, m.precision, m.recall].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
        prop_assert_eq!(m.total, ids.len());
        if let Some(p) = m.precision {
            prop_assert!((p - m.ca as f64 / (m.ca + m.ua) as f64).abs() < 1e-12);
        }
        if let Some(r) = m.recall {
            prop_assert!((r - m.ca as f64 / (m.ca + m.ma) as f64).abs() < 1e-12);
        }
    }
}
