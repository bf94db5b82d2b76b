//! Procedural apartments: a floorplan raster, one photograph per labelled
//! room, and the latent layout both were rendered from.
//!
//! Both modalities are pure functions of the latent [`Room`] records, so
//! toggling an object and re-rendering changes only the pixels the object
//! covers. The cross-modal signal is the room palette (floor tint and icon
//! colour on the plan, wall and object colour in the photo) together with
//! object presence and placement.

mod raster;
mod render;
mod sampling;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub use raster::{hsv, Image, Rgb};
pub use sampling::{
    apartment_seed, generate_dataset, make_kway_sample, make_kway_sample_for, make_pair_sample, make_pair_sample_for,
    make_pair_sample_labeled, Dataset,
    DatasetManifest, KwaySample, PairSample, RoomSelection,
};

pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomType {
    Bathroom,
    Kitchen,
    LivingRoom,
}

impl RoomType {
    /// Fixed photograph order used by room-aware models.
    pub const ALL: [RoomType; 3] = [RoomType::Bathroom, RoomType::Kitchen, RoomType::LivingRoom];

    pub fn index(self) -> usize {
        match self {
            RoomType::Bathroom => 0,
            RoomType::Kitchen => 1,
            RoomType::LivingRoom => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RoomType::Bathroom => "bathroom",
            RoomType::Kitchen => "kitchen",
            RoomType::LivingRoom => "living_room",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        RoomType::ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn legal_objects(self) -> [ObjectKind; 2] {
        match self {
            RoomType::Bathroom => [ObjectKind::Basin, ObjectKind::Bathtub],
            RoomType::Kitchen => [ObjectKind::Counter, ObjectKind::Stove],
            RoomType::LivingRoom => [ObjectKind::Sofa, ObjectKind::Table],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Basin,
    Bathtub,
    Counter,
    Sofa,
    Table,
    Stove,
}

impl ObjectKind {
    pub fn legal_in(self, room: RoomType) -> bool {
        room.legal_objects().contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Basin => "basin",
            ObjectKind::Bathtub => "bathtub",
            ObjectKind::Counter => "counter",
            ObjectKind::Sofa => "sofa",
            ObjectKind::Table => "table",
            ObjectKind::Stove => "stove",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Basin, Self::Bathtub, Self::Counter, Self::Sofa, Self::Table, Self::Stove]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)` on the floorplan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Rectangle shrunk by one pixel of wall on every side.
    pub fn interior(&self) -> Rect {
        Rect { x0: self.x0 + 1, y0: self.y0 + 1, x1: self.x1 - 1, y1: self.y1 - 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub present: bool,
    /// Centre in room-interior coordinates, each axis in `[0, 1]`.
    pub position: [f32; 2],
    pub size: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub hue: f32,
    pub value: f32,
}

impl Palette {
    pub fn accent(&self) -> Rgb {
        hsv(self.hue, 0.8, self.value * 0.85)
    }

    pub fn wall(&self) -> Rgb {
        hsv(self.hue, 0.35, self.value)
    }

    pub fn floor(&self) -> Rgb {
        hsv(self.hue + 0.08, 0.3, 0.55)
    }

    pub fn tint(&self) -> Rgb {
        hsv(self.hue, 0.6, 1.0)
    }
}

/// Camera placement for the room's photograph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotoView {
    /// Horizon height as a fraction of the photo height.
    pub horizon: f32,
    /// Horizontal shear, in pixels per pixel below the horizon.
    pub shear: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub room_type: RoomType,
    pub rect: Rect,
    pub objects: Vec<ObjectSpec>,
    pub palette: Palette,
    pub view: PhotoView,
}

impl Room {
    pub fn object(&self, kind: ObjectKind) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SegmentLabel {
    Room { room_type: RoomType },
    SpareRoom,
    Fixture { room_type: RoomType, kind: ObjectKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u32,
    pub label: SegmentLabel,
    /// Row-major mask over floorplan pixels.
    pub mask: Vec<bool>,
}

impl Segment {
    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn room_type(&self) -> Option<RoomType> {
        match self.label {
            SegmentLabel::Room { room_type } | SegmentLabel::Fixture { room_type, .. } => Some(room_type),
            SegmentLabel::SpareRoom => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub floorplan_size: usize,
    pub photo_size: usize,
    /// Independent presence probability of every legal object.
    pub object_prob: f32,
    /// Standard deviation of additive photo texture noise.
    pub noise_level: f32,
    /// Scales horizon jitter and shear of the photo camera.
    pub warp_strength: f32,
    /// Blend weight of the room palette into the plan's floor pattern.
    pub floor_tint: f32,
    /// The apartment's base hue takes one of this many evenly spaced values,
    /// or any value when 0.
    pub hue_levels: u32,
    /// Half-width of the uniform per-room offset from the base hue.
    pub room_hue_jitter: f32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            floorplan_size: 64,
            photo_size: 48,
            object_prob: 0.7,
            noise_level: 0.05,
            warp_strength: 0.5,
            floor_tint: 0.5,
            hue_levels: 0,
            room_hue_jitter: 0.05,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::Config { field: format!("data.{field}"), reason });
        if self.floorplan_size < 16 || self.floorplan_size % 16 != 0 {
            return bad("floorplan_size", format!("{} must be a positive multiple of 16", self.floorplan_size));
        }
        if self.photo_size < 16 || self.photo_size % 16 != 0 {
            return bad("photo_size", format!("{} must be a positive multiple of 16", self.photo_size));
        }
        for (name, v) in [("object_prob", self.object_prob), ("floor_tint", self.floor_tint)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, format!("{v} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("noise_level", self.noise_level),
            ("warp_strength", self.warp_strength),
            ("room_hue_jitter", self.room_hue_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, format!("{v} must be a non-negative number"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Apartment {
    pub id: u64,
    pub seed: u64,
    pub spec: GeneratorSpec,
    pub layout: Vec<Room>,
    /// Unlabelled rooms drawn on the plan but never photographed.
    pub spare_rooms: Vec<Rect>,
    pub floorplan: Image,
    pub photos: BTreeMap<RoomType, Image>,
    pub segments: Vec<Segment>,
}

impl Apartment {
    pub fn room(&self, room_type: RoomType) -> &Room {
        self.layout.iter().find(|r| r.room_type == room_type).expect("every apartment has all room types")
    }

    pub fn photo(&self, room_type: RoomType) -> &Image {
        &self.photos[&room_type]
    }

    /// Pixels of the room's interior: its floor segment plus its fixtures.
    pub fn room_mask(&self, room_type: RoomType) -> Vec<bool> {
        let s = self.spec.floorplan_size;
        let inner = self.room(room_type).rect.interior();
        (0..s * s).map(|i| inner.contains(i % s, i / s)).collect()
    }

    pub fn room_area_fraction(&self, room_type: RoomType) -> f64 {
        let inner = self.room(room_type).rect.interior();
        inner.area() as f64 / (self.spec.floorplan_size * self.spec.floorplan_size) as f64
    }

    /// Checks the structural invariants of a generated apartment.
    pub fn validate(&self) -> Result<()> {
        let s = self.spec.floorplan_size;
        for rt in RoomType::ALL {
            if self.layout.iter().filter(|r| r.room_type == rt).count() != 1 {
                return Err(Error::Generation(format!("expected exactly one {}", rt.name())));
            }
            if !self.photos.contains_key(&rt) {
                return Err(Error::Generation(format!("missing {} photo", rt.name())));
            }
        }
        for room in &self.layout {
            if room.rect.x1 > s || room.rect.y1 > s {
                return Err(Error::Generation(format!("{} outside the raster", room.room_type.name())));
            }
            if room.objects.iter().any(|o| !o.kind.legal_in(room.room_type)) {
                return Err(Error::Generation(format!("illegal object in {}", room.room_type.name())));
            }
        }
        let mut owner = alloc::vec![false; s * s];
        for seg in &self.segments {
            for (i, &m) in seg.mask.iter().enumerate() {
                if m {
                    if owner[i] {
                        return Err(Error::Generation(format!("segment {} overlaps another", seg.id)));
                    }
                    owner[i] = true;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Floorplan,
    Photo,
    Both,
}

fn sample_layout(rng: &mut rng::Rng, s: usize) -> Result<([Rect; 3], Rect)> {
    let margin = (s / 16).max(2);
    let avail = s - 2 * margin;
    let aw = (avail as f32 * rng.gen_range(0.82..=1.0)) as usize;
    let ah = (avail as f32 * rng.gen_range(0.82..=1.0)) as usize;
    let ax = margin + rng.gen_range(0..=avail - aw);
    let ay = margin + rng.gen_range(0..=avail - ah);
    let sx = ax + (aw as f32 * rng.gen_range(0.38..0.5)) as usize;
    let sy_left = ay + (ah as f32 * rng.gen_range(0.4..0.6)) as usize;
    let sy_right = ay + (ah as f32 * rng.gen_range(0.35..0.5)) as usize;
    let mut rects = [
        Rect { x0: ax, y0: ay, x1: sx, y1: sy_left },                // bathroom
        Rect { x0: sx, y0: ay, x1: ax + aw, y1: sy_right },          // kitchen
        Rect { x0: sx, y0: sy_right, x1: ax + aw, y1: ay + ah },     // living room
        Rect { x0: ax, y0: sy_left, x1: sx, y1: ay + ah },           // spare
    ];
    let (flip_h, flip_v, transpose) = (rng.gen_bool(0.5), rng.gen_bool(0.5), rng.gen_bool(0.5));
    for r in rects.iter_mut() {
        if flip_h {
            *r = Rect { x0: s - r.x1, x1: s - r.x0, ..*r };
        }
        if flip_v {
            *r = Rect { y0: s - r.y1, y1: s - r.y0, ..*r };
        }
        if transpose {
            *r = Rect { x0: r.y0, y0: r.x0, x1: r.y1, y1: r.x1 };
        }
    }
    if let Some(r) = rects.iter().find(|r| r.width() < 7 || r.height() < 7) {
        return Err(Error::Generation(format!(
            "room of {}x{} px cannot hold fixtures on a {s}px plan",
            r.width(),
            r.height()
        )));
    }
    Ok(([rects[0], rects[1], rects[2]], rects[3]))
}

fn sample_room(rng: &mut rng::Rng, room_type: RoomType, rect: Rect, base_hue: f32, spec: &GeneratorSpec) -> Room {
    let mut kinds = room_type.legal_objects();
    kinds.shuffle(rng);
    let slots = [rng.gen_range(0.2..0.32), rng.gen_range(0.68..0.8)];
    let objects = kinds
        .iter()
        .zip(slots)
        .map(|(&kind, y)| ObjectSpec {
            kind,
            present: rng.gen::<f32>() < spec.object_prob,
            position: [rng.gen_range(0.3..0.7), y],
            size: rng.gen_range(0.85..1.15),
        })
        .collect();
    let jitter = spec.room_hue_jitter * rng.gen_range(-1.0f32..=1.0);
    let hue = base_hue + jitter;
    let hue = hue - libm::floorf(hue);
    let palette = Palette { hue, value: rng.gen_range(0.7..0.95) };
    let w = spec.warp_strength;
    let view = PhotoView {
        horizon: 0.4 + w * 0.2 * rng.gen_range(-1.0f32..1.0),
        shear: w * 0.3 * rng.gen_range(-1.0f32..1.0),
    };
    Room { room_type, rect, objects, palette, view }
}

/// Deterministic function of `(seed, spec)`; `id` is carried as metadata.
pub fn generate_apartment(id: u64, seed: u64, spec: &GeneratorSpec) -> Result<Apartment> {
    spec.validate()?;
    let mut rng = rng::rng_for(seed, &[stream::APARTMENT]);
    let (rects, spare) = sample_layout(&mut rng, spec.floorplan_size)?;
    let base_hue = match spec.hue_levels {
        0 => rng.gen::<f32>(),
        n => rng.gen_range(0..n) as f32 / n as f32,
    };
    let layout: Vec<Room> = RoomType::ALL
        .iter()
        .zip(rects)
        .map(|(&rt, rect)| sample_room(&mut rng, rt, rect, base_hue, spec))
        .collect();
    let mut apt = Apartment {
        id,
        seed,
        spec: *spec,
        layout,
        spare_rooms: alloc::vec![spare],
        floorplan: Image::filled(1, 1, [1.0; 3]),
        photos: BTreeMap::new(),
        segments: Vec::new(),
    };
    render::render_floorplan(&mut apt);
    for rt in RoomType::ALL {
        let photo = render::render_photo(&apt, rt);
        apt.photos.insert(rt, photo);
    }
    apt.validate()?;
    Ok(apt)
}

/// Sets one object's presence flag and re-renders the requested modality.
pub fn toggle_object(
    apartment: &Apartment,
    room_type: RoomType,
    kind: ObjectKind,
    present: bool,
    modality: Modality,
) -> Result<Apartment> {
    if !kind.legal_in(room_type) {
        return Err(Error::InvalidArgument(format!("{} cannot appear in a {}", kind.name(), room_type.name())));
    }
    let mut out = apartment.clone();
    let room = out.layout.iter_mut().find(|r| r.room_type == room_type).expect("room exists");
    let obj = room.objects.iter_mut().find(|o| o.kind == kind).expect("legal objects are always sampled");
    if obj.present == present {
        return Ok(out);
    }
    obj.present = present;
    if matches!(modality, Modality::Floorplan | Modality::Both) {
        render::render_floorplan(&mut out);
    }
    if matches!(modality, Modality::Photo | Modality::Both) {
        let photo = render::render_photo(&out, room_type);
        out.photos.insert(room_type, photo);
    }
    Ok(out)
}

/// Floorplan with the given segments painted over in background white.
pub fn blank_segments(apartment: &Apartment, segment_ids: &[u32]) -> Image {
    let mut img = apartment.floorplan.clone();
    let s = apartment.spec.floorplan_size;
    for seg in apartment.segments.iter().filter(|seg| segment_ids.contains(&seg.id)) {
        for (i, _) in seg.mask.iter().enumerate().filter(|(_, &m)| m) {
            img.set_px((i % s) as isize, (i / s) as isize, [1.0; 3]);
        }
    }
    img
}
