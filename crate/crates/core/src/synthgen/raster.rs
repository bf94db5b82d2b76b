use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tensor};

pub type Rgb = [f32; 3];

/// Planar (channel-major) raster with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut data = vec![0.0; 3 * width * height];
        for (c, plane) in data.chunks_mut(width * height).enumerate() {
            plane.fill(color[c]);
        }
        Image { width, height, channels: 3, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set_px(&mut self, x: isize, y: isize, color: Rgb) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let (x, y) = (x as usize, y as usize);
        let plane = self.width * self.height;
        for (c, &v) in color.iter().enumerate().take(self.channels) {
            self.data[c * plane + y * self.width + x] = v;
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = self.get(c, y, x);
        }
        out
    }

    /// Fills `[x0, x1) x [y0, y1)`, clipped to the raster.
    pub fn fill_rect(&mut self, x0: isize, y0: isize, x1: isize, y1: isize, color: Rgb) {
        for y in y0.max(0)..y1.min(self.height as isize) {
            for x in x0.max(0)..x1.min(self.width as isize) {
                self.set_px(x, y, color);
            }
        }
    }

    pub fn outline_rect(&mut self, x0: isize, y0: isize, x1: isize, y1: isize, color: Rgb) {
        for x in x0..x1 {
            self.set_px(x, y0, color);
            self.set_px(x, y1 - 1, color);
        }
        for y in y0..y1 {
            self.set_px(x0, y, color);
            self.set_px(x1 - 1, y, color);
        }
    }

    pub fn fill_ellipse(&mut self, cx: f32, cy: f32, rx: f32, ry: f32, color: Rgb) {
        let (rx, ry) = (rx.max(0.5), ry.max(0.5));
        let y0 = libm::floorf(cy - ry) as isize;
        let y1 = libm::ceilf(cy + ry) as isize;
        let x0 = libm::floorf(cx - rx) as isize;
        let x1 = libm::ceilf(cx + rx) as isize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f32 + 0.5 - cx) / rx;
                let dy = (y as f32 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.set_px(x, y, color);
                }
            }
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            &[1, self.channels, self.height, self.width],
            self.data.iter().map(|&v| T::from_f64_lossy(v as f64)).collect(),
        )
        .expect("image payload matches its shape")
    }
}

pub fn hsv(h: f32, s: f32, v: f32) -> Rgb {
    let h = (h - libm::floorf(h)) * 6.0;
    let i = libm::floorf(h) as i32;
    let f = h - i as f32;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i.rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

pub fn mix(a: Rgb, b: Rgb, t: f32) -> Rgb {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

pub fn scale(a: Rgb, s: f32) -> Rgb {
    [a[0] * s, a[1] * s, a[2] * s]
}
