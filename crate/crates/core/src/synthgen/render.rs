use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::raster::{mix, scale, Image, Rgb};
use super::{Apartment, ObjectKind, ObjectSpec, Rect, Room, RoomType, Segment, SegmentLabel};
use crate::rng::{self, stream};

const WALL: Rgb = [0.12, 0.12, 0.12];
const WHITE: Rgb = [1.0, 1.0, 1.0];

fn floor_pattern(room_type: Option<RoomType>, x: usize, y: usize) -> f32 {
    match room_type {
        Some(RoomType::Bathroom) if x % 3 == 0 || y % 3 == 0 => 0.82,
        Some(RoomType::Bathroom) => 0.96,
        Some(RoomType::Kitchen) => 0.92,
        Some(RoomType::LivingRoom) if y % 4 == 0 => 0.86,
        Some(RoomType::LivingRoom) => 0.95,
        None => 0.98,
    }
}

/// Icon bounding box on the plan, clipped to the room interior.
pub(super) fn icon_box(room: &Room, obj: &ObjectSpec) -> Rect {
    let inner = room.rect.interior();
    let (iw, ih) = (inner.width() as f32, inner.height() as f32);
    let u = iw.min(ih);
    let (w, h) = match obj.kind {
        ObjectKind::Basin => (0.34 * u * obj.size, 0.34 * u * obj.size),
        ObjectKind::Bathtub => (0.55 * iw * obj.size, 0.28 * ih * obj.size),
        ObjectKind::Counter => (0.6 * iw * obj.size, (0.14 * ih).max(2.0)),
        ObjectKind::Stove => (0.3 * u * obj.size, 0.3 * u * obj.size),
        ObjectKind::Sofa => (0.5 * iw * obj.size, 0.24 * ih * obj.size),
        ObjectKind::Table => (0.3 * iw * obj.size, 0.2 * ih * obj.size),
    };
    let (w, h) = (w.max(2.0), h.max(2.0));
    let cx = inner.x0 as f32 + obj.position[0] * iw;
    let cy = inner.y0 as f32 + obj.position[1] * ih;
    let clampx = |v: f32| (v.max(inner.x0 as f32) as usize).min(inner.x1);
    let clampy = |v: f32| (v.max(inner.y0 as f32) as usize).min(inner.y1);
    let x0 = clampx(libm::roundf(cx - w / 2.0));
    let y0 = clampy(libm::roundf(cy - h / 2.0));
    Rect { x0, y0, x1: clampx(libm::roundf(cx - w / 2.0) + libm::roundf(w)).max(x0 + 1), y1: clampy(libm::roundf(cy - h / 2.0) + libm::roundf(h)).max(y0 + 1) }
}

fn draw_icon(img: &mut Image, room: &Room, obj: &ObjectSpec, bx: Rect, floor: impl Fn(usize, usize) -> Rgb) {
    let accent = room.palette.accent();
    let (x0, y0, x1, y1) = (bx.x0 as isize, bx.y0 as isize, bx.x1 as isize, bx.y1 as isize);
    let cx = (bx.x0 + bx.x1) as f32 / 2.0;
    let cy = (bx.y0 + bx.y1) as f32 / 2.0;
    match obj.kind {
        ObjectKind::Basin => {
            img.fill_ellipse(cx, cy, bx.width() as f32 / 2.0, bx.height() as f32 / 2.0, accent);
            img.fill_ellipse(cx, cy, bx.width() as f32 / 4.0, bx.height() as f32 / 4.0, mix(accent, WHITE, 0.7));
        }
        ObjectKind::Bathtub => {
            img.fill_rect(x0, y0, x1, y1, mix(accent, WHITE, 0.6));
            img.outline_rect(x0, y0, x1, y1, accent);
        }
        ObjectKind::Counter => img.fill_rect(x0, y0, x1, y1, accent),
        ObjectKind::Stove => {
            img.outline_rect(x0, y0, x1, y1, accent);
            img.fill_ellipse(cx, cy, 1.0, 1.0, scale(accent, 0.5));
        }
        ObjectKind::Sofa => {
            img.fill_rect(x0, y0, x1, y1, accent);
            for y in y0 + 1..y1 {
                for x in x0 + 1..x1 - 1 {
                    img.set_px(x, y, floor(x as usize, y as usize));
                }
            }
        }
        ObjectKind::Table => img.fill_rect(x0, y0, x1, y1, scale(accent, 0.75)),
    }
}

/// Re-renders the plan raster and its segment masks from the latents.
pub(super) fn render_floorplan(apt: &mut Apartment) {
    let s = apt.spec.floorplan_size;
    let tint_w = apt.spec.floor_tint;
    let mut img = Image::filled(s, s, WHITE);
    let mut owner: Vec<Option<u32>> = vec![None; s * s];
    let mut labels: Vec<(u32, SegmentLabel)> = Vec::new();

    let floor_color = |room: Option<&Room>, x: usize, y: usize| -> Rgb {
        let g = floor_pattern(room.map(|r| r.room_type), x, y);
        match room {
            Some(r) => mix([g; 3], r.palette.tint(), tint_w),
            None => [g; 3],
        }
    };

    let mut regions: Vec<(Rect, Option<&Room>, u32, SegmentLabel)> = apt
        .layout
        .iter()
        .map(|r| (r.rect, Some(r), r.room_type.index() as u32, SegmentLabel::Room { room_type: r.room_type }))
        .collect();
    for (i, &rect) in apt.spare_rooms.iter().enumerate() {
        regions.push((rect, None, 3 + i as u32, SegmentLabel::SpareRoom));
    }
    for &(rect, room, id, label) in &regions {
        let inner = rect.interior();
        for y in inner.y0..inner.y1 {
            for x in inner.x0..inner.x1 {
                img.set_px(x as isize, y as isize, floor_color(room, x, y));
                owner[y * s + x] = Some(id);
            }
        }
        labels.push((id, label));
    }
    for &(rect, ..) in &regions {
        img.outline_rect(rect.x0 as isize, rect.y0 as isize, rect.x1 as isize, rect.y1 as isize, WALL);
    }

    let fixture_base = 3 + apt.spare_rooms.len() as u32;
    for room in &apt.layout {
        for (slot, obj) in room.objects.iter().enumerate() {
            if !obj.present {
                continue;
            }
            let bx = icon_box(room, obj);
            let id = fixture_base + 2 * room.room_type.index() as u32 + slot as u32;
            draw_icon(&mut img, room, obj, bx, |x, y| floor_color(Some(room), x, y));
            for y in bx.y0..bx.y1 {
                for x in bx.x0..bx.x1 {
                    owner[y * s + x] = Some(id);
                }
            }
            labels.push((id, SegmentLabel::Fixture { room_type: room.room_type, kind: obj.kind }));
        }
    }

    labels.sort_by_key(|(id, _)| *id);
    apt.segments = labels
        .into_iter()
        .map(|(id, label)| Segment { id, label, mask: owner.iter().map(|o| *o == Some(id)).collect() })
        .filter(|seg| seg.mask.iter().any(|&m| m))
        .collect();
    apt.floorplan = img;
}

struct Projector {
    size: f32,
    horizon: f32,
    shear: f32,
}

impl Projector {
    /// Maps a room-interior position to photo pixel centre and a depth scale.
    fn project(&self, pos: [f32; 2]) -> (f32, f32, f32) {
        let d = pos[1];
        let cy = self.horizon + (self.size - self.horizon) * (0.1 + 0.75 * d);
        let cx = self.size * 0.5 + (pos[0] - 0.5) * self.size * (0.55 + 0.45 * d) + self.shear * (cy - self.horizon);
        (cx, cy, 0.55 + 0.7 * d)
    }
}

fn draw_object(img: &mut Image, proj: &Projector, room: &Room, obj: &ObjectSpec) {
    let accent = room.palette.accent();
    let (cx, cy, sc) = proj.project(obj.position);
    let u = proj.size * 0.22 * obj.size * sc;
    let rect = |img: &mut Image, cx: f32, cy: f32, w: f32, h: f32, c: Rgb| {
        img.fill_rect(
            libm::roundf(cx - w / 2.0) as isize,
            libm::roundf(cy - h / 2.0) as isize,
            libm::roundf(cx + w / 2.0) as isize,
            libm::roundf(cy + h / 2.0) as isize,
            c,
        )
    };
    match obj.kind {
        ObjectKind::Basin => {
            rect(img, cx, cy + 0.45 * u, 0.25 * u, 0.6 * u, accent);
            img.fill_ellipse(cx, cy, 0.65 * u, 0.35 * u, accent);
            img.fill_ellipse(cx, cy, 0.5 * u, 0.22 * u, [0.95; 3]);
        }
        ObjectKind::Bathtub => {
            rect(img, cx, cy, 1.6 * u, 0.65 * u, accent);
            img.fill_ellipse(cx, cy - 0.08 * u, 0.7 * u, 0.2 * u, [0.93; 3]);
        }
        ObjectKind::Counter => {
            rect(img, cx, cy, 1.8 * u, 0.9 * u, accent);
            rect(img, cx, cy - 0.4 * u, 1.8 * u, 0.12 * u, mix(accent, WHITE, 0.6));
        }
        ObjectKind::Stove => {
            rect(img, cx, cy, 1.0 * u, 0.8 * u, [0.2; 3]);
            img.fill_ellipse(cx - 0.25 * u, cy - 0.15 * u, 0.16 * u, 0.1 * u, accent);
            img.fill_ellipse(cx + 0.25 * u, cy - 0.15 * u, 0.16 * u, 0.1 * u, accent);
        }
        ObjectKind::Sofa => {
            rect(img, cx, cy - 0.35 * u, 1.8 * u, 0.5 * u, scale(accent, 0.7));
            rect(img, cx, cy + 0.1 * u, 1.8 * u, 0.45 * u, accent);
            rect(img, cx - 0.85 * u, cy, 0.2 * u, 0.7 * u, scale(accent, 0.6));
            rect(img, cx + 0.85 * u, cy, 0.2 * u, 0.7 * u, scale(accent, 0.6));
        }
        ObjectKind::Table => {
            rect(img, cx, cy, 1.2 * u, 0.25 * u, scale(accent, 0.8));
            rect(img, cx - 0.5 * u, cy + 0.35 * u, 0.1 * u, 0.5 * u, scale(accent, 0.5));
            rect(img, cx + 0.5 * u, cy + 0.35 * u, 0.1 * u, 0.5 * u, scale(accent, 0.5));
        }
    }
}

fn fract(v: f32) -> f32 {
    v - libm::floorf(v)
}

/// Renders one room's photograph: wall above a shifted horizon, a
/// perspective floor pattern, objects placed by depth, then texture noise.
pub(super) fn render_photo(apt: &Apartment, room_type: RoomType) -> Image {
    let room = apt.room(room_type);
    let p = apt.spec.photo_size;
    let pf = p as f32;
    let proj = Projector { size: pf, horizon: pf * room.view.horizon, shear: room.view.shear };
    let wall = room.palette.wall();
    let floor = room.palette.floor();
    let mut img = Image::filled(p, p, wall);
    for y in 0..p {
        let yf = y as f32 + 0.5;
        for x in 0..p {
            let color = if yf < proj.horizon {
                scale(wall, 0.85 + 0.15 * yf / proj.horizon)
            } else {
                let depth = (yf - proj.horizon + 1.0) / (pf - proj.horizon + 1.0);
                let lateral = (x as f32 + 0.5 - pf * 0.5 - proj.shear * (yf - proj.horizon)) / (depth * pf * 0.12);
                match room_type {
                    RoomType::Bathroom => {
                        let base = mix(WHITE, wall, 0.3);
                        if fract(lateral) < 0.12 || fract(depth * 5.0) < 0.12 {
                            scale(base, 0.8)
                        } else {
                            base
                        }
                    }
                    RoomType::Kitchen => floor,
                    RoomType::LivingRoom => {
                        let wood = mix([0.55, 0.4, 0.25], floor, 0.3);
                        if fract(lateral * 0.5) < 0.08 {
                            scale(wood, 0.8)
                        } else {
                            wood
                        }
                    }
                }
            };
            img.set_px(x as isize, y as isize, color);
        }
    }
    let mut objs: Vec<&ObjectSpec> = room.objects.iter().filter(|o| o.present).collect();
    objs.sort_by(|a, b| a.position[1].total_cmp(&b.position[1]));
    for obj in objs {
        draw_object(&mut img, &proj, room, obj);
    }
    if apt.spec.noise_level > 0.0 {
        let mut rng = rng::rng_for(apt.seed, &[stream::NOISE, room_type.index() as u64]);
        let normal = Normal::new(0.0f32, apt.spec.noise_level).expect("validated noise level");
        for v in img.data.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    img
}
