//! Deterministic synthetic scenes, seed requests and their ground truth.
//!
//! A scene is a background canvas crossed by a grid of road corridors, some
//! of them cut by blocked stretches, with non-overlapping rectangles
//! (buildings, vehicles, pools) and discs (trees, water) placed off-road.
//! Every random choice comes from a ChaCha stream seeded by the scene seed.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::category::Category;
use crate::par::{map_ordered, Parallelism};
use crate::planner::canonical_tool_ids;
use crate::raster::{BinaryMask, LabelMask, Point};
use crate::request::{write_requests, Answer, GroundTruth, Request, RequestFileError, RequestRecord, RequestType};
use crate::scene::{write_scene, BBox, Detection, DetectionSet, Scene, SceneError};
use crate::toolkit::find_path;

/// Attempts per instance before placement is declared infeasible.
pub const PLACEMENT_RETRIES: u32 = 500;
/// Snap radius used when computing path ground truth.
pub const GT_SNAP_RADIUS: u32 = 10;

/// Stream ids that keep count sampling, layout and request sampling independent.
const PARAMS_STREAM: u64 = 0;
const LAYOUT_STREAM: u64 = 1;
const REQUEST_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error("could not place {category} instance {index} of {requested} after {PLACEMENT_RETRIES} tries")]
    PlacementInfeasible { category: String, index: u32, requested: u32 },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Requests(#[from] RequestFileError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Inclusive range of integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: u32,
    pub max: u32,
}

impl Span {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> u32 {
        rng.gen_range(self.min..=self.max)
    }

    fn check(self, what: &str) -> Result<(), SynthError> {
        if self.min > self.max {
            return Err(SynthError::InvalidParams(format!("{what}: min {} > max {}", self.min, self.max)));
        }
        Ok(())
    }
}

/// Road grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    /// Number of horizontal corridors.
    pub horizontal: u32,
    /// Number of vertical corridors.
    pub vertical: u32,
    /// Corridor width in pixels.
    pub width: u32,
    /// Chance that a stretch between two crossings gets a blocked cut.
    pub blocked_probability: f64,
}

/// Fully specified parameters of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub gsd: f64,
    /// Building count per damage level, no damage first.
    pub buildings: [u32; 4],
    pub vehicles: u32,
    pub trees: u32,
    pub pools: u32,
    pub water_bodies: u32,
    pub roads: RoadSpec,
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.width < 32 || self.height < 32 {
            return bad(format!("dimensions must be at least 32, got {}x{}", self.width, self.height));
        }
        if !self.gsd.is_finite() || self.gsd <= 0.0 {
            return bad(format!("gsd must be finite and positive, got {}", self.gsd));
        }
        let p = self.roads.blocked_probability;
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("blocked_probability {p} outside [0, 1]"));
        }
        if self.roads.width == 0 && self.roads.horizontal + self.roads.vertical > 0 {
            return bad("road width must be positive".into());
        }
        Ok(())
    }

    pub fn scene_id(&self) -> String {
        scene_id_for(self.seed)
    }
}

pub fn scene_id_for(seed: u64) -> String {
    format!("scene_{seed:04}")
}

/// Ranges from which each seed draws its [`SynthParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Seed of the first scene; scene `i` uses `first_seed + i`.
    pub first_seed: u64,
    pub width: u32,
    pub height: u32,
    pub gsd: f64,
    pub buildings_per_level: Span,
    pub vehicles: Span,
    pub trees: Span,
    pub pools: Span,
    pub water_bodies: Span,
    pub horizontal_roads: Span,
    pub vertical_roads: Span,
    pub road_width: u32,
    pub blocked_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            first_seed: 0,
            width: 128,
            height: 128,
            gsd: 0.3,
            buildings_per_level: Span::new(0, 3),
            vehicles: Span::new(0, 6),
            trees: Span::new(0, 6),
            pools: Span::new(0, 3),
            water_bodies: Span::new(0, 2),
            horizontal_roads: Span::new(1, 2),
            vertical_roads: Span::new(1, 2),
            road_width: 3,
            blocked_probability: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (span, what) in [
            (self.buildings_per_level, "buildings_per_level"),
            (self.vehicles, "vehicles"),
            (self.trees, "trees"),
            (self.pools, "pools"),
            (self.water_bodies, "water_bodies"),
            (self.horizontal_roads, "horizontal_roads"),
            (self.vertical_roads, "vertical_roads"),
        ] {
            span.check(what)?;
        }
        self.params_for(self.first_seed).validate()
    }

    /// Draws the per-scene counts for `seed`.
    pub fn params_for(&self, seed: u64) -> SynthParams {
        let mut rng = stream(seed, PARAMS_STREAM);
        let mut buildings = [0; 4];
        for b in &mut buildings {
            *b = self.buildings_per_level.sample(&mut rng);
        }
        SynthParams {
            seed,
            width: self.width,
            height: self.height,
            gsd: self.gsd,
            buildings,
            vehicles: self.vehicles.sample(&mut rng),
            trees: self.trees.sample(&mut rng),
            pools: self.pools.sample(&mut rng),
            water_bodies: self.water_bodies.sample(&mut rng),
            roads: RoadSpec {
                horizontal: self.horizontal_roads.sample(&mut rng),
                vertical: self.vertical_roads.sample(&mut rng),
                width: self.road_width,
                blocked_probability: self.blocked_probability,
            },
        }
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Disc,
}

/// One placed instance, exactly as drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub category: Category,
    pub shape: Shape,
    /// Half-open pixel box `[x1, y1, x2, y2]`.
    pub bbox: [u32; 4],
    pub pixels: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadRecord {
    pub orientation: Orientation,
    /// First row (horizontal) or column (vertical) of the corridor.
    pub offset: u32,
    /// Half-open ranges along the corridor relabeled as blocked.
    pub blocked: Vec<[u32; 2]>,
}

/// Everything the generator drew for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLedger {
    pub params: SynthParams,
    pub roads: Vec<RoadRecord>,
    pub placements: Vec<Placement>,
}

impl SceneLedger {
    pub fn count(&self, category: Category) -> usize {
        self.placements.iter().filter(|p| p.category == category).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: Scene,
    pub ledger: SceneLedger,
}

struct Canvas {
    labels: LabelMask,
    occupied: Vec<bool>,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Self {
        Self { labels: LabelMask::new(width, height), occupied: vec![false; (width * height) as usize] }
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.labels.width() + x) as usize
    }

    /// True when the box grown by one pixel on every side is inside the
    /// image and free.
    fn free_with_margin(&self, [x1, y1, x2, y2]: [u32; 4]) -> bool {
        if x1 == 0 || y1 == 0 || x2 >= self.labels.width() || y2 >= self.labels.height() {
            return false;
        }
        (y1 - 1..=y2).all(|y| (x1 - 1..=x2).all(|x| !self.occupied[self.idx(x, y)]))
    }

    fn reserve(&mut self, [x1, y1, x2, y2]: [u32; 4]) {
        for y in y1..y2 {
            for x in x1..x2 {
                let i = self.idx(x, y);
                self.occupied[i] = true;
            }
        }
    }
}

/// Pixel `(dx, dy)` of a `d`×`d` box lies in its inscribed disc.
fn in_disc(dx: u32, dy: u32, d: u32) -> bool {
    let d = i64::from(d);
    let a = 2 * i64::from(dx) + 1 - d;
    let b = 2 * i64::from(dy) + 1 - d;
    a * a + b * b <= d * d
}

struct InstanceKind {
    category: Category,
    shape: Shape,
    side_w: (u32, u32),
    side_h: (u32, u32),
}

fn instance_kinds(params: &SynthParams) -> Vec<(InstanceKind, u32)> {
    let mut kinds = Vec::new();
    // Large shapes first so small ones fill the gaps.
    kinds.push((
        InstanceKind { category: Category::WATER, shape: Shape::Disc, side_w: (8, 16), side_h: (8, 16) },
        params.water_bodies,
    ));
    for (level, &n) in Category::damage_levels().zip(&params.buildings) {
        kinds.push((InstanceKind { category: level, shape: Shape::Rect, side_w: (5, 11), side_h: (5, 11) }, n));
    }
    kinds.push((InstanceKind { category: Category::POOL, shape: Shape::Rect, side_w: (4, 8), side_h: (4, 8) }, params.pools));
    kinds.push((InstanceKind { category: Category::TREE, shape: Shape::Disc, side_w: (3, 6), side_h: (3, 6) }, params.trees));
    kinds.push((
        InstanceKind { category: Category::VEHICLE, shape: Shape::Rect, side_w: (2, 4), side_h: (2, 4) },
        params.vehicles,
    ));
    kinds
}

fn draw_roads(params: &SynthParams, canvas: &mut Canvas, rng: &mut ChaCha8Rng) -> Result<Vec<RoadRecord>, SynthError> {
    let spec = params.roads;
    let (w, h) = (params.width, params.height);
    let mut roads = Vec::new();
    for (orientation, n, extent) in
        [(Orientation::Horizontal, spec.horizontal, h), (Orientation::Vertical, spec.vertical, w)]
    {
        let mut offsets: Vec<u32> = Vec::new();
        for index in 0..n {
            let mut placed = false;
            for _ in 0..PLACEMENT_RETRIES {
                if extent < spec.width + 4 {
                    break;
                }
                let o = rng.gen_range(2..=extent - spec.width - 2);
                // Keep parallel corridors well apart so each stays its own strip.
                if offsets.iter().all(|&p| o.abs_diff(p) >= spec.width + 8) {
                    offsets.push(o);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(SynthError::PlacementInfeasible {
                    category: format!("{orientation:?} road").to_lowercase(),
                    index,
                    requested: n,
                });
            }
        }
        offsets.sort_unstable();
        roads.extend(offsets.into_iter().map(|offset| RoadRecord { orientation, offset, blocked: Vec::new() }));
    }

    for road in &roads {
        for along in 0..extent_along(road.orientation, w, h) {
            for across in road.offset..road.offset + spec.width {
                let (x, y) = to_xy(road.orientation, along, across);
                canvas.labels.set(x, y, Category::ROAD_CLEAR.id());
                let i = canvas.idx(x, y);
                canvas.occupied[i] = true;
            }
        }
    }

    // Cut stretches between crossings; cuts keep a 2 px gap from every crossing.
    let crossings: Vec<(Orientation, u32)> = roads.iter().map(|r| (r.orientation, r.offset)).collect();
    for road in &mut roads {
        let len = extent_along(road.orientation, w, h);
        let mut bounds = vec![0u32];
        for &(o, offset) in &crossings {
            if o != road.orientation {
                bounds.push(offset);
                bounds.push(offset + spec.width);
            }
        }
        bounds.push(len);
        bounds.sort_unstable();
        for pair in bounds.chunks(2) {
            let (start, end) = (pair[0], pair[1]);
            let lo = if start == 0 { 0 } else { start + 2 };
            let hi = if end == len { len } else { end.saturating_sub(2) };
            if hi <= lo + 2 || !rng.gen_bool(spec.blocked_probability) {
                continue;
            }
            let cut = rng.gen_range(1..=3.min(hi - lo));
            let at = rng.gen_range(lo..=hi - cut);
            road.blocked.push([at, at + cut]);
            for along in at..at + cut {
                for across in road.offset..road.offset + spec.width {
                    let (x, y) = to_xy(road.orientation, along, across);
                    canvas.labels.set(x, y, Category::ROAD_BLOCKED.id());
                }
            }
        }
    }
    Ok(roads)
}

fn extent_along(o: Orientation, w: u32, h: u32) -> u32 {
    match o {
        Orientation::Horizontal => w,
        Orientation::Vertical => h,
    }
}

fn to_xy(o: Orientation, along: u32, across: u32) -> (u32, u32) {
    match o {
        Orientation::Horizontal => (along, across),
        Orientation::Vertical => (across, along),
    }
}

fn place_instances(params: &SynthParams, canvas: &mut Canvas, rng: &mut ChaCha8Rng) -> Result<Vec<Placement>, SynthError> {
    let mut placements = Vec::new();
    for (kind, n) in instance_kinds(params) {
        for index in 0..n {
            let mut placed = None;
            for _ in 0..PLACEMENT_RETRIES {
                let bw = rng.gen_range(kind.side_w.0..=kind.side_w.1);
                let bh = match kind.shape {
                    Shape::Disc => bw,
                    Shape::Rect => rng.gen_range(kind.side_h.0..=kind.side_h.1),
                };
                if bw + 2 > params.width || bh + 2 > params.height {
                    break;
                }
                let x1 = rng.gen_range(1..=params.width - bw - 1);
                let y1 = rng.gen_range(1..=params.height - bh - 1);
                let bbox = [x1, y1, x1 + bw, y1 + bh];
                if canvas.free_with_margin(bbox) {
                    placed = Some(bbox);
                    break;
                }
            }
            let Some(bbox) = placed else {
                return Err(SynthError::PlacementInfeasible {
                    category: kind.category.name().to_string(),
                    index,
                    requested: n,
                });
            };
            canvas.reserve(bbox);
            let [x1, y1, x2, y2] = bbox;
            let mut pixels = 0;
            for y in y1..y2 {
                for x in x1..x2 {
                    if kind.shape == Shape::Rect || in_disc(x - x1, y - y1, x2 - x1) {
                        canvas.labels.set(x, y, kind.category.id());
                        pixels += 1;
                    }
                }
            }
            placements.push(Placement { category: kind.category, shape: kind.shape, bbox, pixels });
        }
    }
    Ok(placements)
}

/// Builds one scene in memory. Identical parameters give identical scenes.
pub fn synth_scene(params: &SynthParams) -> Result<SynthScene, SynthError> {
    params.validate()?;
    let mut rng = stream(params.seed, LAYOUT_STREAM);
    let mut canvas = Canvas::new(params.width, params.height);
    let roads = draw_roads(params, &mut canvas, &mut rng)?;
    let placements = place_instances(params, &mut canvas, &mut rng)?;
    let detections = DetectionSet::new(
        placements
            .iter()
            .map(|p| {
                let [x1, y1, x2, y2] = p.bbox.map(f64::from);
                Detection { category: p.category, bbox: BBox::new(x1, y1, x2, y2), score: 1.0 }
            })
            .collect(),
    );
    let scene = Scene {
        scene_id: params.scene_id(),
        width: params.width,
        height: params.height,
        gsd: params.gsd,
        mask_path: PathBuf::from("mask.pgm"),
        detections_path: PathBuf::from("detections.json"),
        labels: canvas.labels,
        detections,
    };
    Ok(SynthScene { scene, ledger: SceneLedger { params: params.clone(), roads, placements } })
}

/// 8-connected component id per traversable pixel, `u32::MAX` elsewhere.
pub fn components(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (w, h) = mask.dims();
    let mut label = vec![u32::MAX; (w * h) as usize];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        let (sx, sy) = (start % w, start / w);
        if !mask.get(sx, sy) || label[start as usize] != u32::MAX {
            continue;
        }
        label[start as usize] = next;
        queue.push_back((sx, sy));
        while let Some((x, y)) = queue.pop_front() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                    if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    let i = (ny * w + nx) as usize;
                    if mask.get(nx, ny) && label[i] == u32::MAX {
                        label[i] = next;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        next += 1;
    }
    (label, next)
}

const SEMANTIC_TARGETS: [Category; 6] =
    [Category::WATER, Category::VEHICLE, Category::ROAD_CLEAR, Category::ROAD_BLOCKED, Category::POOL, Category::TREE];
const COUNT_TARGETS: [Category; 4] = [Category::VEHICLE, Category::POOL, Category::TREE, Category::WATER];

fn request_text(rtype: RequestType, category: Option<Category>, endpoints: Option<[Point; 2]>) -> String {
    let display = category.map_or("", |c| c.info().display);
    match rtype {
        RequestType::Detect => "Detect and locate every object of interest in this image.".to_string(),
        RequestType::Segment => "Segment this image into land-cover and building damage classes.".to_string(),
        RequestType::ObjExistence | RequestType::DmgExistence => format!("Are there any {display} in this image?"),
        RequestType::ObjCount | RequestType::DmgCount => format!("How many {display} are there in this image?"),
        RequestType::ObjArea | RequestType::DmgArea => {
            format!("What is the total area covered by {display}, in square meters?")
        }
        RequestType::RescuePath => {
            let [(x1, y1), (x2, y2)] = endpoints.expect("path request has endpoints");
            format!("Can a rescue team travel along clear roads from ({x1}, {y1}) to ({x2}, {y2})?")
        }
    }
}

/// Seed requests for `scene`: one per type, with a second path request
/// across disconnected road pieces when the clear road network is split.
pub fn gen_requests(scene: &Scene, seed: u64) -> Vec<Request> {
    let mut rng = stream(seed, REQUEST_STREAM);
    let damage: Vec<Category> = Category::damage_levels().collect();
    let mut plan: Vec<(RequestType, Option<Category>, Option<[Point; 2]>)> = Vec::new();
    for rtype in RequestType::ALL {
        let category = match rtype {
            RequestType::ObjExistence | RequestType::ObjArea => SEMANTIC_TARGETS.choose(&mut rng).copied(),
            RequestType::ObjCount => COUNT_TARGETS.choose(&mut rng).copied(),
            RequestType::DmgExistence | RequestType::DmgCount | RequestType::DmgArea => damage.choose(&mut rng).copied(),
            _ => None,
        };
        if rtype == RequestType::RescuePath {
            plan.extend(path_endpoints(scene, &mut rng).into_iter().map(|e| (rtype, None, Some(e))));
        } else {
            plan.push((rtype, category, None));
        }
    }
    plan.into_iter()
        .enumerate()
        .map(|(i, (rtype, target_category, endpoints))| Request {
            request_id: format!("{}-{i:02}-{rtype}", scene.scene_id),
            scene_id: scene.scene_id.clone(),
            rtype,
            text: request_text(rtype, target_category, endpoints),
            target_category,
            endpoints,
        })
        .collect()
}

/// A pair inside one clear-road component and, if there are several
/// components, a pair spanning two of them.
fn path_endpoints(scene: &Scene, rng: &mut ChaCha8Rng) -> Vec<[Point; 2]> {
    let road = scene.labels.binary(Category::ROAD_CLEAR);
    if road.count() < 2 {
        return Vec::new();
    }
    let w = scene.width;
    let (label, n) = components(&road);
    let mut members: Vec<Vec<Point>> = vec![Vec::new(); n as usize];
    for (i, &l) in label.iter().enumerate() {
        if l != u32::MAX {
            members[l as usize].push((i as u32 % w, i as u32 / w));
        }
    }
    let mut out = Vec::new();
    let sizable: Vec<&Vec<Point>> = members.iter().filter(|m| m.len() >= 2).collect();
    if let Some(comp) = sizable.choose(rng) {
        let a = *comp.choose(rng).expect("non-empty");
        let b = *comp.choose(rng).expect("non-empty");
        out.push([a, b]);
    }
    if n >= 2 {
        let picked: Vec<&Vec<Point>> = members.choose_multiple(rng, 2).collect();
        out.push([*picked[0].choose(rng).expect("non-empty"), *picked[1].choose(rng).expect("non-empty")]);
    }
    out
}

/// Ground truth computed from the scene's own labels.
pub fn synth_ground_truth(scene: &Scene, request: &Request) -> GroundTruth {
    let pixels = |c: Option<Category>| c.map_or(0, |c| scene.labels.histogram()[c.id() as usize]);
    let gt_answer = match request.rtype {
        RequestType::Detect | RequestType::Segment => Answer::None,
        RequestType::ObjExistence | RequestType::DmgExistence => Answer::Bool(pixels(request.target_category) > 0),
        RequestType::ObjCount | RequestType::DmgCount => Answer::Count(
            scene.detections.items.iter().filter(|d| Some(d.category) == request.target_category).count() as u64,
        ),
        RequestType::ObjArea | RequestType::DmgArea => {
            Answer::Area(pixels(request.target_category) as f64 * scene.gsd * scene.gsd)
        }
        RequestType::RescuePath => {
            let [a, b] = request.endpoints.expect("path request has endpoints");
            let road = scene.labels.binary(Category::ROAD_CLEAR);
            Answer::Bool(find_path(&road, a, b, scene.gsd, GT_SNAP_RADIUS).is_ok_and(|r| r.reachable))
        }
    };
    GroundTruth { gt_plan: canonical_tool_ids(request.rtype), gt_answer }
}

/// Counts reported after writing a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub scenes: usize,
    pub requests: usize,
    pub per_type: BTreeMap<String, usize>,
}

/// One generated scene with its requests and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub synth: SynthScene,
    pub records: Vec<RequestRecord>,
}

pub fn synth_bundle(params: &SynthParams) -> Result<SceneBundle, SynthError> {
    let synth = synth_scene(params)?;
    let records = gen_requests(&synth.scene, params.seed)
        .into_iter()
        .map(|request| {
            let truth = synth_ground_truth(&synth.scene, &request);
            RequestRecord { request, truth }
        })
        .collect();
    Ok(SceneBundle { synth, records })
}

/// Generates `count` scenes in parallel and writes
/// `dir/scenes/<id>/{manifest.json,mask.pgm,detections.json}`,
/// `dir/requests.jsonl` and `dir/ledger.json`.
pub fn generate_dataset(
    config: &SynthConfig,
    count: u32,
    dir: &Path,
    parallelism: Parallelism,
) -> Result<DatasetSummary, SynthError> {
    if count == 0 {
        return Err(SynthError::InvalidParams("scene count must be at least 1".into()));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..u64::from(count)).map(|i| config.first_seed + i).collect();
    let bundles = map_ordered(&seeds, parallelism, |&seed| synth_bundle(&config.params_for(seed)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let scenes_dir = dir.join("scenes");
    std::fs::create_dir_all(&scenes_dir)?;
    let mut records = Vec::new();
    let mut ledger = BTreeMap::new();
    for b in bundles {
        write_scene(&b.synth.scene, &scenes_dir.join(&b.synth.scene.scene_id))?;
        records.extend(b.records);
        ledger.insert(b.synth.scene.scene_id.clone(), b.synth.ledger);
    }
    write_requests(&dir.join("requests.jsonl"), &records)?;
    let ledger_json = serde_json::to_string_pretty(&ledger).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("ledger.json"), ledger_json)?;

    let mut per_type = BTreeMap::new();
    for r in &records {
        *per_type.entry(r.request.rtype.to_string()).or_insert(0) += 1;
    }
    Ok(DatasetSummary { scenes: ledger.len(), requests: records.len(), per_type })
}

/// SHA-256 over every file under `dir`, visited in sorted path order with
/// each relative path mixed in. Equal digests mean byte-identical trees.
pub fn directory_checksum(dir: &Path) -> std::io::Result<String> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                out.push(path.strip_prefix(base).expect("under base").to_path_buf());
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        let bytes = std::fs::read(dir.join(&rel))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::validate_scene;

    fn params(seed: u64) -> SynthParams {
        SynthConfig::default().params_for(seed)
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synth_scene(&params(42)).unwrap();
        let b = synth_scene(&params(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scene.labels.encode_pgm(), b.scene.labels.encode_pgm());
        assert_ne!(a.scene.labels, synth_scene(&params(43)).unwrap().scene.labels);
    }

    #[test]
    fn one_box_per_placement() {
        let mut p = params(7);
        p.vehicles = 3;
        let s = synth_scene(&p).unwrap();
        assert_eq!(s.scene.detections.items.iter().filter(|d| d.category == Category::VEHICLE).count(), 3);
        assert_eq!(s.ledger.count(Category::VEHICLE), 3);
        assert!(s.scene.detections.items.iter().all(|d| d.score == 1.0));
    }

    #[test]
    fn scenes_validate_clean() {
        for seed in 0..100 {
            let s = synth_scene(&params(seed)).unwrap();
            let report = validate_scene(&s.scene);
            assert!(report.is_clean(), "seed {seed}: {:?}", report.findings);
        }
    }

    #[test]
    fn placement_pixels_match_mask() {
        let s = synth_scene(&params(3)).unwrap();
        let hist = s.scene.labels.histogram();
        for c in [Category::VEHICLE, Category::TREE, Category::POOL, Category::WATER] {
            let placed: u64 = s.ledger.placements.iter().filter(|p| p.category == c).map(|p| p.pixels).sum();
            assert_eq!(placed, hist[c.id() as usize], "{c}");
        }
    }

    #[test]
    fn infeasible_placement() {
        let mut p = params(1);
        p.width = 32;
        p.height = 32;
        p.buildings = [60, 0, 0, 0];
        assert!(matches!(synth_scene(&p), Err(SynthError::PlacementInfeasible { .. })));
    }

    #[test]
    fn invalid_params() {
        let mut p = params(1);
        p.width = 16;
        assert!(matches!(synth_scene(&p), Err(SynthError::InvalidParams(_))));
        let mut p = params(1);
        p.roads.blocked_probability = 1.5;
        assert!(matches!(synth_scene(&p), Err(SynthError::InvalidParams(_))));
    }

    #[test]
    fn roads_yield_path_requests() {
        let s = synth_scene(&params(5)).unwrap();
        let reqs = gen_requests(&s.scene, 5);
        assert!(reqs.iter().any(|r| r.rtype == RequestType::RescuePath));
        for r in &reqs {
            r.check().unwrap();
        }
    }

    #[test]
    fn no_roads_no_path_requests() {
        let mut p = params(5);
        p.roads.horizontal = 0;
        p.roads.vertical = 0;
        let s = synth_scene(&p).unwrap();
        let reqs = gen_requests(&s.scene, 5);
        assert!(reqs.iter().all(|r| r.rtype != RequestType::RescuePath));
        assert_eq!(reqs.len(), 8);
    }

    #[test]
    fn water_absent_answers_no() {
        let mut p = params(9);
        p.water_bodies = 0;
        let s = synth_scene(&p).unwrap();
        let req = Request {
            request_id: "r".into(),
            scene_id: s.scene.scene_id.clone(),
            rtype: RequestType::ObjExistence,
            text: request_text(RequestType::ObjExistence, Some(Category::WATER), None),
            target_category: Some(Category::WATER),
            endpoints: None,
        };
        assert_eq!(synth_ground_truth(&s.scene, &req).gt_answer, Answer::Bool(false));
    }

    #[test]
    fn area_truth_uses_gsd() {
        let mut labels = LabelMask::new(40, 40);
        for y in 0..20 {
            for x in 0..20 {
                labels.set(x, y, Category::POOL.id());
            }
        }
        let scene = Scene {
            scene_id: "s".into(),
            width: 40,
            height: 40,
            gsd: 0.3,
            mask_path: "mask.pgm".into(),
            detections_path: "detections.json".into(),
            labels,
            detections: DetectionSet::default(),
        };
        let req = Request {
            request_id: "r".into(),
            scene_id: "s".into(),
            rtype: RequestType::ObjArea,
            text: String::new(),
            target_category: Some(Category::POOL),
            endpoints: None,
        };
        let Answer::Area(a) = synth_ground_truth(&scene, &req).gt_answer else { panic!() };
        assert!((a - 36.0).abs() < 1e-9);
    }

    #[test]
    fn split_roads_give_unreachable_case() {
        let found = (0..50).any(|seed| {
            let s = synth_scene(&params(seed)).unwrap();
            gen_requests(&s.scene, seed).iter().any(|r| {
                r.rtype == RequestType::RescuePath
                    && synth_ground_truth(&s.scene, r).gt_answer == Answer::Bool(false)
            })
        });
        assert!(found);
    }

    #[test]
    fn components_of_two_blobs() {
        let mut m = BinaryMask::new(5, 1);
        m.set(0, 0, true);
        m.set(1, 0, true);
        m.set(3, 0, true);
        let (label, n) = components(&m);
        assert_eq!(n, 2);
        assert_eq!(label[0], label[1]);
        assert_ne!(label[0], label[3]);
        assert_eq!(label[2], u32::MAX);
    }
}
