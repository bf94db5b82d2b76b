//! Files written by the subcommands.
//!
//! Every CSV starts with a `# seed=<n>` comment line so the effective seed
//! travels with the numbers. Floats are printed with Rust's shortest
//! round-trip formatting, which is deterministic.

use std::fs;
use std::path::Path;

use fpmatch_core::interpret::Heatmap;
use fpmatch_core::synthgen::{Apartment, Dataset, Image, Room, RoomType, SegmentLabel};
use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::Serialize;

use crate::error::CliError;

fn img_err(e: image::ImageError) -> CliError {
    CliError::Runtime(format!("png: {e}"))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, img: &Image) -> Result<(), CliError> {
    let (w, h) = (img.width, img.height);
    let out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| to_u8(img.get(c.min(img.channels - 1), y as usize, x as usize));
        Rgb([px(0), px(1), px(2)])
    });
    out.save(path).map_err(img_err)
}

/// Diverging map: blue for negative cells, white at zero, red for positive,
/// scaled by the largest magnitude. Each cell becomes a `scale`-pixel block.
pub fn write_heatmap_png(path: &Path, map: &Heatmap, scale: u32) -> Result<(), CliError> {
    let peak = map.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let out = RgbImage::from_fn(map.cols as u32 * scale, map.rows as u32 * scale, |x, y| {
        let v = map.get((y / scale) as usize, (x / scale) as usize);
        let t = if peak > 0.0 { (v / peak) as f32 } else { 0.0 };
        let fade = to_u8(1.0 - t.abs());
        if t >= 0.0 {
            Rgb([255, fade, fade])
        } else {
            Rgb([fade, fade, 255])
        }
    });
    out.save(path).map_err(img_err)
}

/// CSV with a seed comment line, a header row and the given records.
pub fn write_csv(path: &Path, seed: u64, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut buf = format!("# seed={seed}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// JSON record with the effective seed alongside the payload.
pub fn write_json<S: Serialize>(path: &Path, seed: u64, payload: &S) -> Result<(), CliError> {
    let v = serde_json::json!({ "seed": seed, "data": payload });
    fs::write(path, serde_json::to_string_pretty(&v).expect("records always serialise") + "\n")?;
    Ok(())
}

pub fn heatmap_rows(map: &Heatmap) -> Vec<Vec<String>> {
    (0..map.rows).map(|r| (0..map.cols).map(|c| map.get(r, c).to_string()).collect()).collect()
}

/// Ground truth stored beside each apartment's rasters.
#[derive(Serialize)]
struct Record<'a> {
    id: u64,
    seed: u64,
    layout: &'a [Room],
    spare_rooms: &'a [fpmatch_core::synthgen::Rect],
    /// Segment id to label; the masks live in `segments.png`.
    segments: Vec<(u32, SegmentLabel)>,
}

pub fn apartment_dir(id: u64) -> String {
    format!("apartments/{id:06}")
}

/// Pixel value `id + 1` of the last listed segment covering each pixel, `0`
/// where none does. Fixture segments are listed after the room holding
/// them, so they stay visible.
fn segment_png(a: &Apartment) -> GrayImage {
    let s = a.floorplan.width;
    let mut img = GrayImage::new(s as u32, s as u32);
    for seg in &a.segments {
        for (i, _) in seg.mask.iter().enumerate().filter(|(_, &m)| m) {
            img.put_pixel((i % s) as u32, (i / s) as u32, Luma([(seg.id + 1).min(255) as u8]));
        }
    }
    img
}

pub fn write_apartment(dir: &Path, a: &Apartment) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_png(&dir.join("floorplan.png"), &a.floorplan)?;
    for rt in RoomType::ALL {
        write_png(&dir.join(format!("photo_{}.png", rt.name())), a.photo(rt))?;
    }
    segment_png(a).save(dir.join("segments.png")).map_err(img_err)?;
    let record = Record {
        id: a.id,
        seed: a.seed,
        layout: &a.layout,
        spare_rooms: &a.spare_rooms,
        segments: a.segments.iter().map(|s| (s.id, s.label)).collect(),
    };
    fs::write(dir.join("record.json"), serde_json::to_string_pretty(&record).expect("records always serialise") + "\n")?;
    Ok(())
}

/// Writes `manifest.json` and one directory per apartment under `out`.
pub fn write_dataset(out: &Path, data: &Dataset) -> Result<(), CliError> {
    let mut manifest = data.manifest();
    for a in data.train.iter().chain(&data.test) {
        let rel = apartment_dir(a.id);
        write_apartment(&out.join(&rel), a)?;
        manifest.paths.insert(a.id, rel);
    }
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifests always serialise") + "\n")?;
    Ok(())
}
