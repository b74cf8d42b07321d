use std::collections::VecDeque;

use adi_core::request::read_requests;
use adi_core::synth::{directory_checksum, gen_requests, generate_dataset, synth_ground_truth, synth_scene, SynthConfig};
use adi_core::toolkit::find_path;
use adi_core::{load_scene, validate_scene, write_scene, Answer, BinaryMask, Category, LabelMask, RequestType};
use adi_core::par::Parallelism;

/// 8-connected components of `category` counted by flood fill.
fn component_count(labels: &LabelMask, category: Category) -> usize {
    let mask = labels.binary(category);
    let (w, h) = mask.dims();
    let mut seen = vec![false; (w * h) as usize];
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[(y * w + x) as usize] {
                continue;
            }
            count += 1;
            seen[(y * w + x) as usize] = true;
            let mut queue = VecDeque::from([(x, y)]);
            while let Some((cx, cy)) = queue.pop_front() {
                for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                    for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                        let i = (ny * w + nx) as usize;
                        if mask.get(nx, ny) && !seen[i] {
                            seen[i] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
        }
    }
    count
}

fn bfs_reachable(mask: &BinaryMask, s: (u32, u32), t: (u32, u32)) -> bool {
    let (w, h) = mask.dims();
    let mut seen = vec![false; (w * h) as usize];
    let mut queue = VecDeque::from([s]);
    seen[(s.1 * w + s.0) as usize] = true;
    while let Some((x, y)) = queue.pop_front() {
        if (x, y) == t {
            return true;
        }
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let i = (ny * w + nx) as usize;
                if mask.get(nx, ny) && !seen[i] {
                    seen[i] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    false
}

#[test]
fn seed_42_round_trips_through_disk() {
    let s = synth_scene(&SynthConfig::default().params_for(42)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_scene(&s.scene, dir.path()).unwrap();
    let loaded = load_scene(&manifest).unwrap();
    assert_eq!(loaded, s.scene);
    assert!(validate_scene(&loaded).is_clean());
}

#[test]
fn ledger_detections_and_components_agree() {
    let config = SynthConfig::default();
    for seed in 0..30 {
        let s = synth_scene(&config.params_for(seed)).unwrap();
        for c in Category::foreground().filter(|c| !matches!(*c, Category::ROAD_CLEAR | Category::ROAD_BLOCKED)) {
            let ledger = s.ledger.count(c);
            let detections = s.scene.detections.items.iter().filter(|d| d.category == c).count();
            assert_eq!(ledger, detections, "seed {seed} {c}");
            assert_eq!(ledger, component_count(&s.scene.labels, c), "seed {seed} {c}");
        }
    }
}

#[test]
fn path_truth_matches_bfs() {
    let config = SynthConfig::default();
    let mut checked = 0;
    for seed in 0..40 {
        let s = synth_scene(&config.params_for(seed)).unwrap();
        let road = s.scene.labels.binary(Category::ROAD_CLEAR);
        for r in gen_requests(&s.scene, seed).iter().filter(|r| r.rtype == RequestType::RescuePath) {
            let [a, b] = r.endpoints.unwrap();
            let want = bfs_reachable(&road, a, b);
            assert_eq!(synth_ground_truth(&s.scene, r).gt_answer, Answer::Bool(want));
            assert_eq!(find_path(&road, a, b, s.scene.gsd, 0).unwrap().reachable, want);
            checked += 1;
        }
    }
    assert!(checked >= 40);
}

#[test]
fn twenty_scene_batch_covers_every_type() {
    let dir = tempfile::tempdir().unwrap();
    let summary = generate_dataset(&SynthConfig::default(), 20, dir.path(), Parallelism::Auto).unwrap();
    assert_eq!(summary.scenes, 20);
    for t in RequestType::ALL {
        assert!(summary.per_type[t.as_str()] >= 1, "{t}");
    }
    let records = read_requests(&dir.path().join("requests.jsonl")).unwrap();
    assert_eq!(records.len(), summary.requests);
    let ledger: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger.as_object().unwrap().len(), 20);
}

#[test]
fn parallel_and_sequential_batches_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = SynthConfig { first_seed: 100, ..SynthConfig::default() };
    generate_dataset(&config, 8, a.path(), Parallelism::Parallel { jobs: 4 }).unwrap();
    generate_dataset(&config, 8, b.path(), Parallelism::Sequential).unwrap();
    assert_eq!(directory_checksum(a.path()).unwrap(), directory_checksum(b.path()).unwrap());
}

#[test]
fn zero_scenes_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_dataset(&SynthConfig::default(), 0, dir.path(), Parallelism::Sequential).is_err());
}
