//! Synthetic test scenes, one per image category.
//!
//! Scenes are drawn in CIELAB from smooth closed-form shapes and converted
//! to 8-bit sRGB, so they are identical on every platform. The files under
//! `corpus/` in the repository are these scenes written as PPM.

use crate::classify::ImageCategory;
use crate::color::{lab_to_srgb, Lab};
use crate::imageio::RgbImage;

pub const WIDTH: usize = 128;
pub const HEIGHT: usize = 96;

struct Blob {
    cx: f64,
    cy: f64,
    r: f64,
    color: Lab,
}

fn smooth(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn mix(a: Lab, b: Lab, t: f64) -> Lab {
    Lab::new(a.l + t * (b.l - a.l), a.a + t * (b.a - a.a), a.b + t * (b.b - a.b))
}

fn render(background: impl Fn(f64, f64) -> Lab, blobs: &[Blob]) -> RgbImage {
    let mut pixels = Vec::with_capacity(WIDTH * HEIGHT);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let (u, v) = (x as f64 / (WIDTH - 1) as f64, y as f64 / (HEIGHT - 1) as f64);
            let mut c = background(u, v);
            for b in blobs {
                let d = ((u - b.cx).powi(2) + (v - b.cy).powi(2)).sqrt();
                let inside = 1.0 - smooth(b.r * 0.6, b.r, d);
                // shading across the blob so it carries a tonal gradient
                let shade = 1.0 - 0.35 * ((u - b.cx + v - b.cy) / (2.0 * b.r) + 0.5).clamp(0.0, 1.0);
                let lit = Lab::new(b.color.l * shade, b.color.a * shade, b.color.b * shade);
                c = mix(c, lit, inside);
            }
            pixels.push(lab_to_srgb(c));
        }
    }
    RgbImage {
        width: WIDTH,
        height: HEIGHT,
        pixels,
    }
}

/// A dim interior: shadow gradients from the press's black point up to
/// L* 37 with muted colored objects and one small highlight.
pub fn low_key() -> RgbImage {
    render(
        |u, v| {
            let l = 11.0 + 26.0 * u * (1.0 - 0.4 * v) + 2.5 * (7.0 * u).sin() * (5.0 * v).cos();
            Lab::new(l.max(10.0), 2.0 + 6.0 * v, -4.0 + 10.0 * u)
        },
        &[
            Blob {
                cx: 0.25,
                cy: 0.35,
                r: 0.18,
                color: Lab::new(28.0, 18.0, 20.0),
            },
            Blob {
                cx: 0.6,
                cy: 0.6,
                r: 0.2,
                color: Lab::new(26.0, -14.0, 8.0),
            },
            Blob {
                cx: 0.8,
                cy: 0.3,
                r: 0.12,
                color: Lab::new(24.0, 10.0, -28.0),
            },
            Blob {
                cx: 0.45,
                cy: 0.85,
                r: 0.1,
                color: Lab::new(36.0, 4.0, 12.0),
            },
            Blob {
                cx: 0.9,
                cy: 0.85,
                r: 0.06,
                color: Lab::new(85.0, 2.0, 10.0),
            },
        ],
    )
}

/// Mid-tone landscape-like scene concentrated between L* 40 and 60.
pub fn normal_key() -> RgbImage {
    render(
        |u, v| {
            let l = 42.0 + 16.0 * (1.0 - v) + 2.5 * (9.0 * u).sin();
            Lab::new(l, -8.0 + 12.0 * u, 10.0 - 25.0 * (1.0 - v))
        },
        &[
            Blob {
                cx: 0.3,
                cy: 0.7,
                r: 0.2,
                color: Lab::new(55.0, -30.0, 30.0),
            },
            Blob {
                cx: 0.7,
                cy: 0.4,
                r: 0.15,
                color: Lab::new(58.0, 35.0, 25.0),
            },
            Blob {
                cx: 0.15,
                cy: 0.2,
                r: 0.08,
                color: Lab::new(25.0, 5.0, 5.0),
            },
            Blob {
                cx: 0.85,
                cy: 0.8,
                r: 0.08,
                color: Lab::new(80.0, 0.0, 5.0),
            },
        ],
    )
}

/// A bright, airy scene: pale backgrounds above L* 70 with light pastel
/// objects and a small dark accent.
pub fn high_key() -> RgbImage {
    render(
        |u, v| {
            let l = 96.0 - 18.0 * u * v + 2.0 * (6.0 * v).sin();
            Lab::new(l.min(99.0), 1.0, 3.0 - 6.0 * u)
        },
        &[
            Blob {
                cx: 0.3,
                cy: 0.4,
                r: 0.2,
                color: Lab::new(82.0, 12.0, 8.0),
            },
            Blob {
                cx: 0.7,
                cy: 0.6,
                r: 0.18,
                color: Lab::new(88.0, -10.0, 18.0),
            },
            Blob {
                cx: 0.55,
                cy: 0.2,
                r: 0.1,
                color: Lab::new(78.0, 2.0, -20.0),
            },
            Blob {
                cx: 0.85,
                cy: 0.85,
                r: 0.05,
                color: Lab::new(30.0, 5.0, 5.0),
            },
        ],
    )
}

pub fn scene(category: ImageCategory) -> RgbImage {
    match category {
        ImageCategory::LowKey => low_key(),
        ImageCategory::NormalKey => normal_key(),
        ImageCategory::HighKey => high_key(),
    }
}

/// File name of a scene under `corpus/`.
pub fn file_name(category: ImageCategory) -> String {
    format!("{category}.ppm")
}
