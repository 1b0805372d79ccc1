//! Color types and conversions between sRGB, CIE XYZ and CIELAB.
//!
//! The connection space is CIELAB relative to a D50 white, the ICC profile
//! connection space convention. sRGB input is decoded with the IEC 61966-2-1
//! transfer curve, converted to XYZ under its native D65 white and then
//! adapted to D50 with the Bradford transform.
//!
//! ```
//! use keytone::color::{srgb_to_lab, Rgb8};
//!
//! let white = srgb_to_lab(Rgb8::new(255, 255, 255));
//! assert!((white.l - 100.0).abs() < 1e-3);
//! assert!(white.a.abs() < 1e-3 && white.b.abs() < 1e-3);
//! ```

use std::sync::LazyLock;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CIE L*a*b* `epsilon` (216/24389), the Y/Yn breakpoint of the cube-root segment.
const EPSILON: f64 = 216.0 / 24389.0;
/// CIE L*a*b* `kappa` (24389/27), the slope of the linear toe.
const KAPPA: f64 = 24389.0 / 27.0;

/// D50 white of the profile connection space.
pub const D50: Xyz = Xyz {
    x: 0.96422,
    y: 1.0,
    z: 0.82521,
};

/// D65 white of sRGB.
pub const D65: Xyz = Xyz {
    x: 0.95047,
    y: 1.0,
    z: 1.08883,
};

/// An 8-bit sRGB-encoded pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rgb8 {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb8 {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Self { r: v, g: v, b: v }
    }
}

/// CIE XYZ tristimulus values, scaled so the reference white has `Y = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Xyz {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

/// A CIELAB color relative to [`D50`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    /// Chroma `sqrt(a² + b²)`.
    pub fn chroma(self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn is_finite(self) -> bool {
        self.l.is_finite() && self.a.is_finite() && self.b.is_finite()
    }
}

/// A row-major raster of CIELAB pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    pixels: Vec<Lab>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Lab>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput);
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// A `width × height` image filled with one color.
    pub fn filled(width: usize, height: usize, color: Lab) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    /// Converts an sRGB raster, given row-major.
    pub fn from_srgb(width: usize, height: usize, pixels: &[Rgb8]) -> Result<Self> {
        Self::new(width, height, pixels.iter().map(|&p| srgb_to_lab(p)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Lab] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Lab {
        self.pixels[y * self.width + x]
    }

    /// Applies `f` to every pixel, keeping the dimensions.
    pub fn map(&self, f: impl FnMut(&Lab) -> Lab) -> LabImage {
        LabImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(f).collect(),
        }
    }
}

/// sRGB (D65) to XYZ, derived from the published primaries and white.
static SRGB_TO_XYZ_D65: LazyLock<Matrix3<f64>> =
    LazyLock::new(|| rgb_to_xyz_matrix([(0.64, 0.33), (0.30, 0.60), (0.15, 0.06)], D65));

static BRADFORD_D65_TO_D50: LazyLock<Matrix3<f64>> = LazyLock::new(|| bradford(D65, D50));

static SRGB_TO_XYZ_D50: LazyLock<Matrix3<f64>> = LazyLock::new(|| *BRADFORD_D65_TO_D50 * *SRGB_TO_XYZ_D65);

static XYZ_D50_TO_SRGB: LazyLock<Matrix3<f64>> = LazyLock::new(|| {
    SRGB_TO_XYZ_D50
        .try_inverse()
        .expect("sRGB primaries are linearly independent")
});

fn rgb_to_xyz_matrix(primaries: [(f64, f64); 3], white: Xyz) -> Matrix3<f64> {
    let column = |(x, y): (f64, f64)| Vector3::new(x / y, 1.0, (1.0 - x - y) / y);
    let p = Matrix3::from_columns(&[column(primaries[0]), column(primaries[1]), column(primaries[2])]);
    let w = Vector3::new(white.x, white.y, white.z);
    let s = p.try_inverse().expect("primaries are linearly independent") * w;
    p * Matrix3::from_diagonal(&s)
}

/// Bradford chromatic adaptation matrix from `src` white to `dst` white.
fn bradford(src: Xyz, dst: Xyz) -> Matrix3<f64> {
    #[rustfmt::skip]
    let cone = Matrix3::new(
         0.8951,  0.2664, -0.1614,
        -0.7502,  1.7135,  0.0367,
         0.0389, -0.0685,  1.0296,
    );
    let inv = cone.try_inverse().expect("Bradford matrix is invertible");
    let s = cone * Vector3::new(src.x, src.y, src.z);
    let d = cone * Vector3::new(dst.x, dst.y, dst.z);
    inv * Matrix3::from_diagonal(&d.component_div(&s)) * cone
}

/// sRGB electro-optical transfer function, code value in [0, 1] to linear light.
pub fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_decode`].
pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// sRGB pixel to XYZ relative to D50.
pub fn srgb_to_xyz(c: Rgb8) -> Xyz {
    let lin = Vector3::new(
        srgb_decode(f64::from(c.r) / 255.0),
        srgb_decode(f64::from(c.g) / 255.0),
        srgb_decode(f64::from(c.b) / 255.0),
    );
    let xyz = *SRGB_TO_XYZ_D50 * lin;
    Xyz::new(xyz.x, xyz.y, xyz.z)
}

pub fn srgb_to_lab(c: Rgb8) -> Lab {
    xyz_to_lab(srgb_to_xyz(c))
}

/// CIELAB back to 8-bit sRGB, clipping out-of-gamut values per channel.
pub fn lab_to_srgb(c: Lab) -> Rgb8 {
    let xyz = lab_to_xyz(c);
    let lin = *XYZ_D50_TO_SRGB * Vector3::new(xyz.x, xyz.y, xyz.z);
    let code = |v: f64| (srgb_encode(v.clamp(0.0, 1.0)) * 255.0).round() as u8;
    Rgb8::new(code(lin.x), code(lin.y), code(lin.z))
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// XYZ (D50-relative) to CIELAB.
pub fn xyz_to_lab(c: Xyz) -> Lab {
    let fx = lab_f(c.x / D50.x);
    let fy = lab_f(c.y / D50.y);
    let fz = lab_f(c.z / D50.z);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// CIELAB to XYZ (D50-relative), the exact inverse of [`xyz_to_lab`].
pub fn lab_to_xyz(c: Lab) -> Xyz {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    // L* decides the Y branch directly, which keeps the toe exact.
    let y = if c.l > KAPPA * EPSILON {
        fy * fy * fy
    } else {
        c.l / KAPPA
    };
    Xyz {
        x: lab_f_inv(fx) * D50.x,
        y: y * D50.y,
        z: lab_f_inv(fz) * D50.z,
    }
}

/// L* of a relative luminance `Y` (white = 1).
pub fn lightness(y: f64) -> f64 {
    116.0 * lab_f(y) - 16.0
}

/// CIE 1976 color difference, the Euclidean distance in CIELAB.
pub fn delta_e76(x: Lab, y: Lab) -> f64 {
    let dl = x.l - y.l;
    let da = x.a - y.a;
    let db = x.b - y.b;
    (dl * dl + da * da + db * db).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// mpmath reference, tests/oracles/srgb_lab_oracle.py.
    const L_GRAY_118: f64 = 49.637_014_372_750_88;

    #[test]
    fn white_and_black() {
        let w = srgb_to_lab(Rgb8::gray(255));
        assert!((w.l - 100.0).abs() < 1e-3, "{w:?}");
        assert!(w.a.abs() < 1e-3 && w.b.abs() < 1e-3, "{w:?}");

        let k = srgb_to_lab(Rgb8::gray(0));
        assert!(k.l.abs() < 1e-6 && k.a.abs() < 1e-6 && k.b.abs() < 1e-6);
    }

    #[test]
    fn gray_118_matches_high_precision_oracle() {
        let c = srgb_to_lab(Rgb8::gray(118));
        assert!((c.l - L_GRAY_118).abs() < 0.25, "{c:?}");
        assert!(c.a.abs() < 0.05 && c.b.abs() < 0.05, "{c:?}");
        // The matrices are built so that neutrals stay neutral; much tighter
        // than the contract.
        assert!((c.l - L_GRAY_118).abs() < 1e-9);
    }

    #[test]
    fn srgb_white_adapts_to_d50() {
        let w = srgb_to_xyz(Rgb8::gray(255));
        assert!((w.x - D50.x).abs() < 1e-12);
        assert!((w.y - D50.y).abs() < 1e-12);
        assert!((w.z - D50.z).abs() < 1e-12);
    }

    #[test]
    fn lab_to_xyz_anchors() {
        let w = lab_to_xyz(Lab::new(100.0, 0.0, 0.0));
        assert!((w.x - D50.x).abs() < 1e-12 && (w.y - 1.0).abs() < 1e-12);
        assert!((w.z - D50.z).abs() < 1e-12);
        assert_eq!(lab_to_xyz(Lab::new(0.0, 0.0, 0.0)), Xyz::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn delta_e_examples() {
        assert_eq!(delta_e76(Lab::new(50., 0., 0.), Lab::new(50., 0., 0.)), 0.0);
        assert_eq!(delta_e76(Lab::new(50., 0., 0.), Lab::new(60., 0., 0.)), 10.0);
        assert_eq!(delta_e76(Lab::new(50., 3., 4.), Lab::new(50., 0., 0.)), 5.0);
    }

    #[test]
    fn gray_ramp_is_strictly_increasing() {
        let ls: Vec<f64> = (0..=255u8).map(|v| srgb_to_lab(Rgb8::gray(v)).l).collect();
        assert!(ls.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn lab_srgb_round_trip_on_codes() {
        for v in [0u8, 1, 17, 118, 200, 255] {
            let c = Rgb8::new(v, 255 - v, v / 2);
            assert_eq!(lab_to_srgb(srgb_to_lab(c)), c);
        }
    }

    #[test]
    fn image_rejects_bad_dimensions() {
        assert!(matches!(LabImage::new(0, 1, vec![]), Err(Error::EmptyInput)));
        assert!(LabImage::new(2, 2, vec![Lab::default(); 3]).is_err());
    }

    fn lab_strategy() -> impl Strategy<Value = Lab> {
        (5.0..95.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(l, a, b)| Lab::new(l, a, b))
    }

    proptest! {
        #[test]
        fn xyz_lab_xyz_round_trip(x in 0.0..1.0f64, y in 0.0..1.0f64, z in 0.0..1.0f64) {
            let c = Xyz::new(x, y, z);
            let back = lab_to_xyz(xyz_to_lab(c));
            prop_assert!((back.x - x).abs() < 1e-9);
            prop_assert!((back.y - y).abs() < 1e-9);
            prop_assert!((back.z - z).abs() < 1e-9);
        }

        #[test]
        fn lab_xyz_lab_round_trip(c in lab_strategy()) {
            let back = xyz_to_lab(lab_to_xyz(c));
            prop_assert!(delta_e76(back, c) < 1e-9);
        }

        #[test]
        fn delta_e_metric_axioms(x in lab_strategy(), y in lab_strategy(), z in lab_strategy()) {
            prop_assert_eq!(delta_e76(x, y), delta_e76(y, x));
            prop_assert!(delta_e76(x, z) <= delta_e76(x, y) + delta_e76(y, z) + 1e-12);
            prop_assert!(delta_e76(x, x) == 0.0);
        }

        #[test]
        fn lightness_stays_in_range(r: u8, g: u8, b: u8) {
            let c = srgb_to_lab(Rgb8::new(r, g, b));
            prop_assert!(c.l >= -1e-9 && c.l <= 100.0 + 1e-9);
        }
    }
}
