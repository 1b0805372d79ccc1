//! Lab-indexed separation LUTs and image separation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::ForwardModel;
use super::solve::{solve_cmy, solve_cmyk, Solution, CONVERGED_DE};
use crate::chart::{ChartKind, InkCoverage};
use crate::color::{delta_e76, Lab, LabImage};
use crate::error::{Error, Result};
use crate::press::{Predictor, SOLID_K};

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

/// Nodes whose best reproduction is further than this are out of gamut.
pub const OUT_OF_GAMUT_DE: f64 = 2.5;

/// Slack over the best attainable difference within which a black level
/// still counts as able to reproduce a node.
pub const FEASIBLE_DE: f64 = 0.2;

pub const L_RANGE: (f64, f64) = (0.0, 100.0);
pub const AB_RANGE: (f64, f64) = (-128.0, 128.0);

/// Out-of-gamut nodes are pulled toward this point.
const MEDIUM_GRAY: Lab = Lab::new(50.0, 0.0, 0.0);
const BISECTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationOptions {
    /// Share of the feasible black range used once black is fully engaged.
    pub gcr_strength: f64,
    /// L* below which black starts to replace CMY gray.
    pub black_start: f64,
    pub total_ink_limit: f64,
    pub grid_size: usize,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        Self {
            gcr_strength: 0.5,
            black_start: 45.0,
            total_ink_limit: 3.2,
            grid_size: 17,
        }
    }
}

impl SeparationOptions {
    pub fn validate(&self) -> Result<()> {
        let check = |what: &'static str, value: f64, min: f64, max: f64| {
            if (min..=max).contains(&value) {
                Ok(())
            } else {
                Err(Error::OutOfRange { what, value, min, max })
            }
        };
        check("gcr strength", self.gcr_strength, 0.0, 1.0)?;
        check("black start", self.black_start, 0.0, 100.0)?;
        check("total ink limit", self.total_ink_limit, 1.0, 4.0)?;
        if !(2..=65).contains(&self.grid_size) {
            return Err(Error::InvalidArgument(format!(
                "grid size must be in 2..=65, got {}",
                self.grid_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutNode {
    pub coverage: InkCoverage,
    pub in_gamut: bool,
    /// Difference between the node's Lab value and the predicted print of
    /// its coverage.
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationProfile {
    pub schema_version: u32,
    pub options: SeparationOptions,
    pub source: ChartKind,
    /// `grid_size³` nodes, L slowest, then a*, then b*.
    nodes: Vec<LutNode>,
}

fn axis_value(i: usize, g: usize, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * i as f64 / (g - 1) as f64
}

impl SeparationProfile {
    pub fn grid_size(&self) -> usize {
        self.options.grid_size
    }

    pub fn nodes(&self) -> &[LutNode] {
        &self.nodes
    }

    pub fn index(&self, li: usize, ai: usize, bi: usize) -> usize {
        let g = self.grid_size();
        (li * g + ai) * g + bi
    }

    pub fn node(&self, li: usize, ai: usize, bi: usize) -> &LutNode {
        &self.nodes[self.index(li, ai, bi)]
    }

    pub fn node_lab(&self, li: usize, ai: usize, bi: usize) -> Lab {
        node_lab(self.grid_size(), li, ai, bi)
    }

    pub fn in_gamut_fraction(&self) -> f64 {
        self.nodes.iter().filter(|n| n.in_gamut).count() as f64 / self.nodes.len() as f64
    }

    /// Tetrahedral interpolation of the node coverages at `lab`, which is
    /// clamped into the grid box first.
    pub fn lookup(&self, lab: Lab) -> InkCoverage {
        let g = self.grid_size();
        let cell = |v: f64, (lo, hi): (f64, f64)| {
            let x = ((v.clamp(lo, hi) - lo) / (hi - lo)) * (g - 1) as f64;
            let i = (x.floor() as usize).min(g - 2);
            (i, x - i as f64)
        };
        let (li, fl) = cell(lab.l, L_RANGE);
        let (ai, fa) = cell(lab.a, AB_RANGE);
        let (bi, fb) = cell(lab.b, AB_RANGE);
        let mut axes = [(fl, 0usize), (fa, 1), (fb, 2)];
        axes.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

        let mut corner = [li, ai, bi];
        let at = |c: [usize; 3]| self.node(c[0], c[1], c[2]).coverage.to_array();
        let mut acc = at(corner).map(|v| v * (1.0 - axes[0].0));
        for (step, &(_, axis)) in axes.iter().enumerate() {
            corner[axis] += 1;
            let w = axes[step].0 - axes.get(step + 1).map_or(0.0, |a| a.0);
            if w != 0.0 {
                for (a, v) in acc.iter_mut().zip(at(corner)) {
                    *a += w * v;
                }
            }
        }
        let mut out = acc.map(|v| v.clamp(0.0, 1.0));
        let total: f64 = out.iter().sum();
        let limit = self.options.total_ink_limit;
        if total > limit {
            let scale = limit / total;
            out = out.map(|v| v * scale);
        }
        InkCoverage {
            c: out[0],
            m: out[1],
            y: out[2],
            k: out[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PROFILE_SCHEMA_VERSION {
            return Err(Error::Unsupported(format!(
                "separation profile schema version {}",
                self.schema_version
            )));
        }
        self.options.validate()?;
        let g = self.grid_size();
        if self.nodes.len() != g * g * g {
            return Err(Error::InvalidModel(format!(
                "profile has {} nodes, grid size {g} needs {}",
                self.nodes.len(),
                g * g * g
            )));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            InkCoverage::from_array(n.coverage.to_array())?;
            if n.coverage.total() > self.options.total_ink_limit + 1e-9 {
                return Err(Error::InvalidModel(format!("node {i} exceeds the ink limit")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: SeparationProfile = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn node_lab(g: usize, li: usize, ai: usize, bi: usize) -> Lab {
    Lab::new(
        axis_value(li, g, L_RANGE),
        axis_value(ai, g, AB_RANGE),
        axis_value(bi, g, AB_RANGE),
    )
}

/// Black generation: the share of the feasible black range to use at `l`.
/// Zero at and above `black_start`, rising smoothly to `gcr_strength` at the
/// lightness of solid black.
fn gcr_share(opts: &SeparationOptions, solid_k_l: f64, l: f64) -> f64 {
    if l >= opts.black_start {
        return 0.0;
    }
    let span = opts.black_start - solid_k_l;
    let t = if span > 0.0 {
        ((opts.black_start - l) / span).clamp(0.0, 1.0)
    } else {
        1.0
    };
    opts.gcr_strength * t * t * (3.0 - 2.0 * t)
}

struct NodeSolver<'a> {
    pred: &'a Predictor,
    opts: &'a SeparationOptions,
    solid_k_l: f64,
}

impl NodeSolver<'_> {
    fn limit(&self) -> f64 {
        self.opts.total_ink_limit
    }

    fn solve(&self, target: Lab) -> LutNode {
        let free = solve_cmyk(self.pred, target, self.limit(), CONVERGED_DE, None);
        if free.delta_e <= OUT_OF_GAMUT_DE {
            let s = self.separate(target, free);
            return LutNode {
                coverage: s.coverage,
                in_gamut: true,
                delta_e: s.delta_e,
            };
        }
        let (point, reach) = self.gamut_boundary(target, free);
        let s = self.separate(point, reach);
        LutNode {
            coverage: s.coverage,
            in_gamut: false,
            delta_e: delta_e76(self.pred.predict(&s.coverage), target),
        }
    }

    /// Nearest reproducible point on the line from `target` to medium gray,
    /// which keeps the hue angle.
    fn gamut_boundary(&self, target: Lab, free: Solution) -> (Lab, Solution) {
        let along = |s: f64| {
            Lab::new(
                target.l + s * (MEDIUM_GRAY.l - target.l),
                target.a + s * (MEDIUM_GRAY.a - target.a),
                target.b + s * (MEDIUM_GRAY.b - target.b),
            )
        };
        let hint = |s: &Solution| Some(s.coverage.to_array());
        let mut best = solve_cmyk(self.pred, MEDIUM_GRAY, self.limit(), FEASIBLE_DE, None);
        let mut near = free;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let s = solve_cmyk(
                self.pred,
                along(mid),
                self.limit(),
                FEASIBLE_DE,
                hint(&near).or(hint(&best)),
            );
            if s.delta_e <= FEASIBLE_DE {
                hi = mid;
                best = s;
            } else {
                lo = mid;
                near = s;
            }
        }
        let point = along(hi);
        let refined = solve_cmyk(self.pred, point, self.limit(), CONVERGED_DE, hint(&best));
        (point, if refined.delta_e < best.delta_e { refined } else { best })
    }

    /// GCR separation of a reproducible `target`; `free` is its best
    /// four-ink solution.
    fn separate(&self, target: Lab, free: Solution) -> Solution {
        let tol = free.delta_e + FEASIBLE_DE;
        let limit = self.limit();
        let cmy = |s: &Solution| {
            let c = s.coverage;
            Some([c.c, c.m, c.y])
        };
        let attempt = |k: f64, hint: Option<[f64; 3]>| solve_cmy(self.pred, target, k, limit, CONVERGED_DE, hint);
        let k0 = free.coverage.k;

        let at_zero = attempt(0.0, None);
        let k_min = if at_zero.delta_e <= tol {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, k0);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if attempt(mid, cmy(&free)).delta_e <= tol {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let share = gcr_share(self.opts, self.solid_k_l, target.l);
        let k = if share == 0.0 {
            k_min
        } else {
            let at_one = attempt(1.0, cmy(&free));
            let k_max = if at_one.delta_e <= tol {
                1.0
            } else {
                let (mut lo, mut hi) = (k0, 1.0);
                for _ in 0..BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    if attempt(mid, cmy(&free)).delta_e <= tol {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            k_min.max(share * k_max)
        };
        let chosen = if k == 0.0 && k_min == 0.0 {
            at_zero
        } else {
            attempt(k, cmy(&free))
        };
        if chosen.delta_e <= tol {
            chosen
        } else {
            free
        }
    }
}

/// Builds the separation LUT by inverting the forward model at every node.
pub fn build_separation(fwd: &ForwardModel, opts: &SeparationOptions) -> Result<SeparationProfile> {
    opts.validate()?;
    fwd.model.validate()?;
    let pred = fwd.model.predictor();
    let solver = NodeSolver {
        pred: &pred,
        opts,
        solid_k_l: fwd.model.primary_lab(SOLID_K).l,
    };
    let g = opts.grid_size;
    let nodes: Vec<LutNode> = (0..g * g * g)
        .into_par_iter()
        .map(|i| solver.solve(node_lab(g, i / (g * g), (i / g) % g, i % g)))
        .collect();
    Ok(SeparationProfile {
        schema_version: PROFILE_SCHEMA_VERSION,
        options: *opts,
        source: fwd.source,
        nodes,
    })
}

/// Planar-free CMYK raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CmykImage {
    width: usize,
    height: usize,
    pixels: Vec<InkCoverage>,
}

impl CmykImage {
    pub fn new(width: usize, height: usize, pixels: Vec<InkCoverage>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} CMYK image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[InkCoverage] {
        &self.pixels
    }

    /// What the given press would print.
    pub fn render(&self, pred: &Predictor) -> LabImage {
        let pixels = self.pixels.par_iter().map(|c| pred.predict(c)).collect();
        LabImage::new(self.width, self.height, pixels).expect("dimensions already checked")
    }
}

pub fn separate_image(img: &LabImage, profile: &SeparationProfile) -> CmykImage {
    let pixels = img.pixels().par_iter().map(|&lab| profile.lookup(lab)).collect();
    CmykImage {
        width: img.width(),
        height: img.height(),
        pixels,
    }
}
