//! Semantic top-view rasterization.
//!
//! The camera sits at the bottom-center of the grid looking up. Metric
//! coordinates have `x` to the right and `y` forward; the center of pixel
//! `(r, c)` is at `x = (c + 0.5 - W/2) * mpp`, `y = (H - r - 0.5) * mpp`.
//! Each cell takes the class of its center point.
//!
//! The main road is described in road coordinates `(u, v)`: `u` is the signed
//! lateral offset from the centerline (positive to the right) and `v` the arc
//! length along it. A positive curvature bends the road to the right around
//! the center `(1/k, 0)`; negative curvatures are rendered as the mirrored
//! scene and flipped, so left/right reflection is exact.

use std::io::{self, Read, Write};

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{bin, cont, validate, AttributeSchema, SceneParams, Side, ValidationReport, MAX_SIDE_LANES};

pub const NUM_CLASSES: usize = 5;

pub mod class {
    pub const BACKGROUND: u8 = 0;
    pub const ROAD: u8 = 1;
    pub const SIDEWALK: u8 = 2;
    pub const LANE_BOUNDARY: u8 = 3;
    pub const CROSSWALK: u8 = 4;
}

pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "road", "sidewalk", "lane_boundary", "crosswalk"];

/// RGB palette used for PNG export, indexed by class.
pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [0, 0, 0],
    [128, 64, 128],
    [244, 35, 232],
    [255, 255, 255],
    [250, 170, 30],
];

/// Length of a crosswalk band along the road it crosses.
pub const CROSSWALK_DEPTH: f64 = 3.0;
/// Position of near/far crosswalks when there is no intersection.
pub const MIDBLOCK_CROSSWALK_DISTANCE: f64 = 20.0;
/// Curvatures below this magnitude are drawn as straight roads.
const STRAIGHT_EPS: f64 = 1e-9;

pub const RAW_MAGIC: &[u8; 4] = b"BEVR";
pub const RAW_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("scene is infeasible:\n{0}")]
    Infeasible(ValidationReport),
    #[error("invalid render config: {0}")]
    Config(&'static str),
    #[error("class index {0} outside the legend")]
    BadClass(u8),
    #[error("bad raw header: {0}")]
    RawHeader(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    pub meters_per_pixel: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            height: 192,
            width: 192,
            meters_per_pixel: 0.25,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.height == 0 || self.width == 0 {
            return Err(RenderError::Config("grid must be nonempty"));
        }
        if !(self.meters_per_pixel > 0.0 && self.meters_per_pixel.is_finite()) {
            return Err(RenderError::Config("meters_per_pixel must be positive"));
        }
        Ok(())
    }

    pub fn forward_extent(&self) -> f64 {
        self.height as f64 * self.meters_per_pixel
    }

    pub fn lateral_extent(&self) -> f64 {
        self.width as f64 * self.meters_per_pixel
    }

    /// Metric position of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = (col as f64 + 0.5 - self.width as f64 / 2.0) * self.meters_per_pixel;
        let y = (self.height as f64 - row as f64 - 0.5) * self.meters_per_pixel;
        (x, y)
    }
}

/// H×W grid of class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticTopView {
    grid: Array2<u8>,
}

impl SemanticTopView {
    pub fn new(grid: Array2<u8>) -> Result<Self, RenderError> {
        if let Some(&bad) = grid.iter().find(|&&c| c as usize >= NUM_CLASSES) {
            return Err(RenderError::BadClass(bad));
        }
        Ok(SemanticTopView { grid })
    }

    pub fn background(height: usize, width: usize) -> Self {
        SemanticTopView {
            grid: Array2::zeros((height, width)),
        }
    }

    pub fn grid(&self) -> &Array2<u8> {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.nrows()
    }

    pub fn width(&self) -> usize {
        self.grid.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.grid[(row, col)]
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &c in &self.grid {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Left/right reflection of the grid.
    pub fn flipped(&self) -> Self {
        let mut grid = self.grid.clone();
        grid.invert_axis(Axis(1));
        SemanticTopView {
            grid: grid.as_standard_layout().into_owned(),
        }
    }

    /// H×W×4 indicator stack; channel `c` marks class `c + 1`.
    pub fn to_onehot(&self) -> Array3<u8> {
        let (h, w) = self.grid.dim();
        let mut out = Array3::zeros((h, w, NUM_CLASSES - 1));
        for ((r, c), &k) in self.grid.indexed_iter() {
            if k != class::BACKGROUND {
                out[(r, c, k as usize - 1)] = 1;
            }
        }
        out
    }

    /// Inverse of [`Self::to_onehot`]: the first set channel wins, cells
    /// with no set channel are background.
    pub fn from_onehot(stack: &Array3<u8>) -> Self {
        let (h, w, _) = stack.dim();
        let grid = Array2::from_shape_fn((h, w), |(r, c)| {
            stack
                .slice(ndarray::s![r, c, ..])
                .iter()
                .position(|&v| v != 0)
                .map_or(class::BACKGROUND, |k| k as u8 + 1)
        });
        SemanticTopView { grid }
    }

    /// Row-major class bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.grid.iter().copied().collect()
    }

    pub fn write_png<W: Write>(&self, writer: W) -> Result<(), RenderError> {
        let mut encoder = png::Encoder::new(writer, self.width() as u32, self.height() as u32);
        encoder.set_color(png::ColorType::Indexed);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_palette(PALETTE.concat());
        let mut w = encoder.write_header()?;
        w.write_image_data(&self.to_bytes())?;
        w.finish()?;
        Ok(())
    }

    /// `"BEVR"`, then height, width and format version as little-endian
    /// `u32`, then the row-major class bytes.
    pub fn write_raw<W: Write>(&self, mut writer: W) -> Result<(), RenderError> {
        writer.write_all(RAW_MAGIC)?;
        writer.write_all(&(self.height() as u32).to_le_bytes())?;
        writer.write_all(&(self.width() as u32).to_le_bytes())?;
        writer.write_all(&RAW_VERSION.to_le_bytes())?;
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut reader: R) -> Result<Self, RenderError> {
        let mut header = [0u8; 16];
        reader.read_exact(&mut header)?;
        if &header[..4] != RAW_MAGIC {
            return Err(RenderError::RawHeader("missing BEVR magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let (h, w, version) = (word(4) as usize, word(8) as usize, word(12));
        if version != RAW_VERSION {
            return Err(RenderError::RawHeader(format!("unsupported version {version}")));
        }
        let mut data = vec![0u8; h * w];
        reader.read_exact(&mut data)?;
        let grid = Array2::from_shape_vec((h, w), data).map_err(|e| RenderError::RawHeader(e.to_string()))?;
        Self::new(grid)
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

#[derive(Clone, Copy, Debug)]
struct SideRoad {
    distance: f64,
    width: f64,
}

/// Per-side cross-section of the main road, measured outward from the
/// centerline.
#[derive(Clone, Debug, Default)]
struct CrossSection {
    /// Offsets of boundaries between adjacent lanes.
    boundaries: Vec<f64>,
    /// Outer edge of the outermost lane.
    road_edge: f64,
    /// Outer edge of the delimiter strip (equals `road_edge` without one).
    delimiter_edge: f64,
    /// Outer edge of the sidewalk, if any.
    sidewalk_edge: Option<f64>,
    side_road: Option<SideRoad>,
}

/// Scene geometry in road coordinates, with the curvature made nonnegative.
struct Layout {
    sides: [CrossSection; 2],
    /// Radius of the centerline arc; `None` for straight roads.
    radius: Option<f64>,
    near: f64,
    far: f64,
    ends: bool,
    crosswalk_near: bool,
    crosswalk_far: bool,
    crosswalk_side: [bool; 2],
}

impl Layout {
    fn new(p: &SceneParams) -> Self {
        let ego = p.continuous[cont::EGO_LANE_WIDTH].unwrap_or(0.0);
        let mut sides: [CrossSection; 2] = Default::default();
        for side in Side::BOTH {
            let s = &mut sides[side_index(side)];
            let mut edge = ego / 2.0;
            for lane in 1..=p.lanes(side).min(MAX_SIDE_LANES) {
                s.boundaries.push(edge);
                edge += p.continuous[side.lane_width(lane)].unwrap_or(0.0);
            }
            s.road_edge = edge;
            s.delimiter_edge = edge
                + if p.binary[side.delimiter()] {
                    p.continuous[side.delimiter_width()].unwrap_or(0.0)
                } else {
                    0.0
                };
            if p.binary[side.sidewalk()] {
                s.sidewalk_edge = Some(s.delimiter_edge + p.continuous[side.sidewalk_width()].unwrap_or(0.0));
            }
            if p.binary[side.side_road()] {
                s.side_road = Some(SideRoad {
                    distance: p.continuous[side.dist_side_road()].unwrap_or(0.0),
                    width: p.continuous[side.side_road_width()].unwrap_or(0.0),
                });
            }
        }
        let roads: Vec<SideRoad> = sides.iter().filter_map(|s| s.side_road).collect();
        let (near, far) = if roads.is_empty() {
            (MIDBLOCK_CROSSWALK_DISTANCE, MIDBLOCK_CROSSWALK_DISTANCE)
        } else {
            let near = roads.iter().map(|r| r.distance - r.width / 2.0).fold(f64::INFINITY, f64::min);
            let far = roads.iter().map(|r| r.distance + r.width / 2.0).fold(f64::NEG_INFINITY, f64::max);
            (near, far)
        };
        let curvature = if p.binary[bin::MAIN_ROAD_CURVED] {
            p.continuous[cont::CURVATURE].unwrap_or(0.0)
        } else {
            0.0
        };
        debug_assert!(curvature >= 0.0);
        Layout {
            sides,
            radius: (curvature > STRAIGHT_EPS).then(|| 1.0 / curvature),
            near,
            far,
            ends: p.binary[bin::MAIN_ROAD_ENDS],
            crosswalk_near: p.binary[bin::CROSSWALK_NEAR],
            crosswalk_far: p.binary[bin::CROSSWALK_FAR],
            crosswalk_side: [p.binary[bin::CROSSWALK_LEFT], p.binary[bin::CROSSWALK_RIGHT]],
        }
    }

    /// Road coordinates `(u, v)` of a metric point.
    fn road_coords(&self, x: f64, y: f64) -> (f64, f64) {
        match self.radius {
            None => (x, y),
            Some(r) => {
                let d = (x - r).hypot(y);
                // R - d written without cancellation
                let u = (2.0 * r * x - x * x - y * y) / (r + d);
                (u, r * y.atan2(r - x))
            }
        }
    }

    /// Position of `(x, y)` relative to a side road attached at arc length
    /// `distance`: `(along, across)` where `across` grows away from the main
    /// road on `side`.
    fn side_road_coords(&self, x: f64, y: f64, u: f64, v: f64, side: Side, distance: f64) -> (f64, f64) {
        let (along, across_right) = match self.radius {
            None => (v - distance, u),
            Some(r) => {
                let phi = distance / r;
                let (sin, cos) = phi.sin_cos();
                let (px, py) = (r * (1.0 - cos), r * sin);
                let (dx, dy) = (x - px, y - py);
                (dx * sin + dy * cos, dx * cos - dy * sin)
            }
        };
        match side {
            Side::Right => (along, across_right),
            Side::Left => (along, -across_right),
        }
    }

    fn classify(&self, x: f64, y: f64, mpp: f64) -> u8 {
        let (u, v) = self.road_coords(x, y);
        let side = if u < 0.0 { Side::Left } else { Side::Right };
        let a = u.abs();
        let cs = &self.sides[side_index(side)];
        let main_present = v >= 0.0 && (!self.ends || v <= self.far);
        let on_main_road = main_present && a <= cs.road_edge;

        let mut in_side_road = false;
        let mut side_crosswalk = false;
        for s in Side::BOTH {
            let si = side_index(s);
            let Some(road) = self.sides[si].side_road else { continue };
            let (along, across) = self.side_road_coords(x, y, u, v, s, road.distance);
            if along.abs() <= road.width / 2.0 && across > 0.0 {
                in_side_road = true;
                let edge = self.sides[si].road_edge;
                if self.crosswalk_side[si] && across > edge && across <= edge + CROSSWALK_DEPTH {
                    side_crosswalk = true;
                }
            }
        }

        let main_crosswalk = on_main_road
            && ((self.crosswalk_near && v >= self.near - CROSSWALK_DEPTH && v <= self.near)
                || (self.crosswalk_far && v >= self.far && v <= self.far + CROSSWALK_DEPTH));
        if main_crosswalk || side_crosswalk {
            return class::CROSSWALK;
        }

        let h = mpp / 2.0;
        if on_main_road && cs.boundaries.iter().any(|&b| a - b > -h && a - b <= h) {
            return class::LANE_BOUNDARY;
        }
        if let Some(edge) = cs.sidewalk_edge {
            if main_present && !in_side_road && a > cs.delimiter_edge && a <= edge {
                return class::SIDEWALK;
            }
        }
        if on_main_road || in_side_road {
            return class::ROAD;
        }
        class::BACKGROUND
    }
}

/// Rasterizes a feasible scene.
pub fn render(params: &SceneParams, schema: &AttributeSchema, cfg: &RenderConfig) -> Result<SemanticTopView, RenderError> {
    cfg.validate()?;
    let report = validate(params, schema);
    if !report.is_feasible() {
        return Err(RenderError::Infeasible(report));
    }
    render_unchecked(params, cfg)
}

/// Rasterizes without the feasibility check. Geometry only reads the
/// attributes its controllers enable, so any scene renders; this is what the
/// mirror property is stated on, since reflecting a feasible two-way road can
/// leave it without opposing lanes.
pub fn render_unchecked(params: &SceneParams, cfg: &RenderConfig) -> Result<SemanticTopView, RenderError> {
    cfg.validate()?;
    let curvature = params.continuous[cont::CURVATURE].unwrap_or(0.0);
    if params.binary[bin::MAIN_ROAD_CURVED] && curvature < 0.0 {
        return Ok(rasterize(&params.mirrored(), cfg).flipped());
    }
    Ok(rasterize(params, cfg))
}

fn rasterize(params: &SceneParams, cfg: &RenderConfig) -> SemanticTopView {
    let layout = Layout::new(params);
    let grid = Array2::from_shape_fn((cfg.height, cfg.width), |(r, c)| {
        let (x, y) = cfg.pixel_center(r, c);
        layout.classify(x, y, cfg.meters_per_pixel)
    });
    SemanticTopView { grid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_scene, PriorConfig};
    use crate::schema::default_schema;
    use proptest::prelude::*;

    fn draw(p: &SceneParams) -> SemanticTopView {
        render(p, &default_schema(), &RenderConfig::default()).unwrap()
    }

    #[test]
    fn minimal_scene_pixel_count() {
        // 4 m / 0.25 m = 16 columns, over all 192 rows
        let v = draw(&SceneParams::minimal(4.0));
        let counts = v.class_counts();
        assert_eq!(counts[class::ROAD as usize] + counts[class::LANE_BOUNDARY as usize], 3072);
        assert_eq!(counts[class::SIDEWALK as usize], 0);
        assert_eq!(counts[class::CROSSWALK as usize], 0);
        // the road is centered on the camera column
        assert_eq!(v.get(191, 88), class::ROAD);
        assert_eq!(v.get(191, 103), class::ROAD);
        assert_eq!(v.get(191, 87), class::BACKGROUND);
        assert_eq!(v.get(191, 104), class::BACKGROUND);
    }

    #[test]
    fn one_boundary_pixel_per_row() {
        let mut p = SceneParams::minimal(3.3);
        p.multiclass[crate::schema::mc::LANES_RIGHT] = 2;
        p.continuous[Side::Right.lane_width(1)] = Some(3.1);
        p.continuous[Side::Right.lane_width(2)] = Some(2.9);
        let v = draw(&p);
        assert_eq!(v.class_counts()[class::LANE_BOUNDARY as usize], 2 * 192);
    }

    #[test]
    fn sidewalk_and_delimiter_bands() {
        let mut p = SceneParams::minimal(4.0);
        p.binary[bin::SIDEWALK_RIGHT] = true;
        p.continuous[cont::SIDEWALK_WIDTH_RIGHT] = Some(2.0);
        p.binary[bin::DELIMITER_RIGHT] = true;
        p.continuous[cont::DELIMITER_WIDTH_RIGHT] = Some(1.0);
        let v = draw(&p);
        let counts = v.class_counts();
        assert_eq!(counts[class::SIDEWALK as usize], 8 * 192);
        // road spans columns 88..104, delimiter 104..108, sidewalk 108..116
        assert_eq!(v.get(0, 105), class::BACKGROUND);
        assert_eq!(v.get(0, 108), class::SIDEWALK);
        assert_eq!(v.get(0, 115), class::SIDEWALK);
        assert_eq!(v.get(0, 116), class::BACKGROUND);
    }

    #[test]
    fn t_intersection_clips_main_road() {
        let mut p = SceneParams::minimal(4.0);
        p.binary[bin::SIDE_ROAD_LEFT] = true;
        p.continuous[cont::DIST_SIDE_ROAD_LEFT] = Some(20.0);
        p.continuous[cont::SIDE_ROAD_WIDTH_LEFT] = Some(8.0);
        p.binary[bin::MAIN_ROAD_ENDS] = true;
        let v = draw(&p);
        // beyond v = 24 m nothing is drawn: rows with y > 24 are r < 96
        assert!((0..95).all(|r| (0..192).all(|c| v.get(r, c) == class::BACKGROUND)));
        // inside the side road band the road extends to the left border
        let row = 192 - 80 - 1; // y = 20.125
        assert_eq!(v.get(row, 0), class::ROAD);
        assert_eq!(v.get(row, 191), class::BACKGROUND);
    }

    #[test]
    fn crosswalk_bands() {
        let mut p = SceneParams::minimal(4.0);
        p.binary[bin::CROSSWALK_NEAR] = true;
        let v = draw(&p);
        // mid-block band [17, 20] m: 12 rows by 16 columns
        assert_eq!(v.class_counts()[class::CROSSWALK as usize], 12 * 16);

        let mut q = SceneParams::minimal(4.0);
        q.binary[bin::SIDE_ROAD_RIGHT] = true;
        q.continuous[cont::DIST_SIDE_ROAD_RIGHT] = Some(20.0);
        q.continuous[cont::SIDE_ROAD_WIDTH_RIGHT] = Some(8.0);
        q.binary[bin::CROSSWALK_RIGHT] = true;
        let v = draw(&q);
        // across (2, 5] m: 12 columns; along |.| <= 4 m: 32 rows
        assert_eq!(v.class_counts()[class::CROSSWALK as usize], 12 * 32);
    }

    #[test]
    fn infeasible_scene_is_rejected() {
        let mut p = SceneParams::minimal(4.0);
        p.continuous[cont::DIST_SIDE_ROAD_LEFT] = Some(10.0);
        let err = render(&p, &default_schema(), &RenderConfig::default()).unwrap_err();
        assert!(matches!(err, RenderError::Infeasible(r) if r.len() == 1));
    }

    #[test]
    fn onehot_round_trip_and_histogram() {
        let p = sample_scene(&PriorConfig::default(), 7);
        let v = draw(&p);
        let stack = v.to_onehot();
        assert_eq!(SemanticTopView::from_onehot(&stack), v);
        let counts = v.class_counts();
        for k in 0..NUM_CLASSES - 1 {
            let s: usize = stack.index_axis(Axis(2), k).iter().map(|&x| x as usize).sum();
            assert_eq!(s, counts[k + 1]);
        }
        assert!(SemanticTopView::background(4, 4).to_onehot().iter().all(|&x| x == 0));
    }

    #[test]
    fn png_and_raw_round_trip() {
        let p = sample_scene(&PriorConfig::default(), 11);
        let v = draw(&p);
        let mut raw = Vec::new();
        v.write_raw(&mut raw).unwrap();
        assert_eq!(&raw[..4], b"BEVR");
        assert_eq!(raw.len(), 16 + 192 * 192);
        assert_eq!(SemanticTopView::read_raw(&raw[..]).unwrap(), v);

        let mut bytes = Vec::new();
        v.write_png(&mut bytes).unwrap();
        let mut decoder = png::Decoder::new(io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info().unwrap();
        assert_eq!(reader.info().palette.as_deref(), Some(&PALETTE.concat()[..]));
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        reader.next_frame(&mut buf).unwrap();
        assert_eq!(buf, v.to_bytes());
    }

    fn scene_strategy() -> impl Strategy<Value = SceneParams> {
        any::<u64>().prop_map(|seed| sample_scene(&PriorConfig::default(), seed))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mirror_symmetry(p in scene_strategy()) {
            let cfg = RenderConfig::default();
            let direct = render_unchecked(&p, &cfg).unwrap();
            prop_assert_eq!(render_unchecked(&p.mirrored(), &cfg).unwrap(), direct.flipped());
        }

        #[test]
        fn ego_width_monotone(p in scene_strategy(), w0 in 2.5f64..5.0, w1 in 2.5f64..5.0) {
            let mut p = p;
            p.binary[bin::MAIN_ROAD_CURVED] = false;
            p.continuous[cont::CURVATURE] = None;
            let (lo, hi) = if w0 <= w1 { (w0, w1) } else { (w1, w0) };
            p.continuous[cont::EGO_LANE_WIDTH] = Some(lo);
            let a = draw(&p).class_counts()[class::ROAD as usize];
            p.continuous[cont::EGO_LANE_WIDTH] = Some(hi);
            let b = draw(&p).class_counts()[class::ROAD as usize];
            prop_assert!(b >= a, "road pixels fell from {} to {}", a, b);
        }

        #[test]
        fn deterministic(p in scene_strategy()) {
            prop_assert_eq!(draw(&p), draw(&p));
        }
    }
}
