//! Attribute registry, the [`SceneParams`] container and feasibility checks.
//!
//! A scene is described by 14 binary attributes, 2 lane-count attributes and
//! 22 continuous attributes. The registry is static: [`default_schema`]
//! always returns the same ordering, and every other module addresses
//! attributes through the index constants in [`bin`], [`mc`] and [`cont`].

mod constraints;
mod record;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use constraints::{Constraint, ConstraintId, Literal, Rule};
pub use record::{deserialize_scene, serialize_scene, RecordError, SCHEMA_VERSION};

pub const NUM_BINARY: usize = 14;
pub const NUM_MULTICLASS: usize = 2;
pub const NUM_CONTINUOUS: usize = 22;
pub const NUM_ATTRIBUTES: usize = NUM_BINARY + NUM_MULTICLASS + NUM_CONTINUOUS;
/// Lane counts take values in `0..LANE_CLASSES`.
pub const LANE_CLASSES: usize = 7;
pub const MAX_SIDE_LANES: usize = 6;

/// Binary attribute indices.
pub mod bin {
    pub const SIDE_ROAD_LEFT: usize = 0;
    pub const SIDE_ROAD_RIGHT: usize = 1;
    pub const MAIN_ROAD_ENDS: usize = 2;
    pub const CROSSWALK_NEAR: usize = 3;
    pub const CROSSWALK_FAR: usize = 4;
    pub const CROSSWALK_LEFT: usize = 5;
    pub const CROSSWALK_RIGHT: usize = 6;
    pub const SIDEWALK_LEFT: usize = 7;
    pub const SIDEWALK_RIGHT: usize = 8;
    pub const DELIMITER_LEFT: usize = 9;
    pub const DELIMITER_RIGHT: usize = 10;
    pub const DELIMITER_MEDIAN: usize = 11;
    pub const ONEWAY_MAIN: usize = 12;
    pub const MAIN_ROAD_CURVED: usize = 13;
}

/// Multi-class attribute indices.
pub mod mc {
    pub const LANES_LEFT: usize = 0;
    pub const LANES_RIGHT: usize = 1;
}

/// Continuous attribute indices.
pub mod cont {
    pub const EGO_LANE_WIDTH: usize = 0;
    /// First of the six left lane widths (`lane_width_left_1`).
    pub const LANE_WIDTH_LEFT_1: usize = 1;
    /// First of the six right lane widths (`lane_width_right_1`).
    pub const LANE_WIDTH_RIGHT_1: usize = 7;
    pub const DIST_SIDE_ROAD_LEFT: usize = 13;
    pub const DIST_SIDE_ROAD_RIGHT: usize = 14;
    pub const SIDE_ROAD_WIDTH_LEFT: usize = 15;
    pub const SIDE_ROAD_WIDTH_RIGHT: usize = 16;
    pub const DELIMITER_WIDTH_LEFT: usize = 17;
    pub const DELIMITER_WIDTH_RIGHT: usize = 18;
    pub const SIDEWALK_WIDTH_LEFT: usize = 19;
    pub const SIDEWALK_WIDTH_RIGHT: usize = 20;
    pub const CURVATURE: usize = 21;
}

/// Left or right of the main road, as seen from the camera.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    fn pick(self, left: usize, right: usize) -> usize {
        match self {
            Side::Left => left,
            Side::Right => right,
        }
    }

    pub fn side_road(self) -> usize {
        self.pick(bin::SIDE_ROAD_LEFT, bin::SIDE_ROAD_RIGHT)
    }
    pub fn crosswalk(self) -> usize {
        self.pick(bin::CROSSWALK_LEFT, bin::CROSSWALK_RIGHT)
    }
    pub fn sidewalk(self) -> usize {
        self.pick(bin::SIDEWALK_LEFT, bin::SIDEWALK_RIGHT)
    }
    pub fn delimiter(self) -> usize {
        self.pick(bin::DELIMITER_LEFT, bin::DELIMITER_RIGHT)
    }
    pub fn lanes(self) -> usize {
        self.pick(mc::LANES_LEFT, mc::LANES_RIGHT)
    }
    /// Width of the `lane`-th lane on this side, `lane` in `1..=6`.
    pub fn lane_width(self, lane: usize) -> usize {
        debug_assert!((1..=MAX_SIDE_LANES).contains(&lane));
        self.pick(cont::LANE_WIDTH_LEFT_1, cont::LANE_WIDTH_RIGHT_1) + lane - 1
    }
    pub fn dist_side_road(self) -> usize {
        self.pick(cont::DIST_SIDE_ROAD_LEFT, cont::DIST_SIDE_ROAD_RIGHT)
    }
    pub fn side_road_width(self) -> usize {
        self.pick(cont::SIDE_ROAD_WIDTH_LEFT, cont::SIDE_ROAD_WIDTH_RIGHT)
    }
    pub fn delimiter_width(self) -> usize {
        self.pick(cont::DELIMITER_WIDTH_LEFT, cont::DELIMITER_WIDTH_RIGHT)
    }
    pub fn sidewalk_width(self) -> usize {
        self.pick(cont::SIDEWALK_WIDTH_LEFT, cont::SIDEWALK_WIDTH_RIGHT)
    }
}

/// Grouping used in the scene model overview.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttributeGroup {
    Lanes,
    Topology,
    Walkable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Meters,
    InverseMeters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryDef {
    pub name: String,
    pub group: AttributeGroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassDef {
    pub name: String,
    pub group: AttributeGroup,
    /// Domain is `0..classes`.
    pub classes: u8,
}

/// What switches an activatable continuous attribute on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Controller {
    /// Active iff the binary attribute is true.
    Binary(usize),
    /// Active iff the lane count is at least `min_count`.
    LaneCount { lanes: usize, min_count: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDef {
    pub name: String,
    pub group: AttributeGroup,
    pub min: f64,
    pub max: f64,
    pub unit: Unit,
    /// `None` for attributes that are always present.
    pub controller: Option<Controller>,
}

impl ContinuousDef {
    pub fn is_activatable(&self) -> bool {
        self.controller.is_some()
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, value: f64) -> bool {
        value.is_finite() && value >= self.min && value <= self.max
    }
}

/// The static attribute registry together with the feasibility constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub binary: Vec<BinaryDef>,
    pub multiclass: Vec<MulticlassDef>,
    pub continuous: Vec<ContinuousDef>,
    pub constraints: Vec<Constraint>,
}

/// A reference to one attribute by kind and index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributeRef {
    Binary(usize),
    Multiclass(usize),
    Continuous(usize),
}

impl AttributeSchema {
    pub fn name(&self, attr: AttributeRef) -> &str {
        match attr {
            AttributeRef::Binary(i) => &self.binary[i].name,
            AttributeRef::Multiclass(p) => &self.multiclass[p].name,
            AttributeRef::Continuous(m) => &self.continuous[m].name,
        }
    }

    pub fn lookup(&self, name: &str) -> Option<AttributeRef> {
        if let Some(i) = self.binary.iter().position(|d| d.name == name) {
            return Some(AttributeRef::Binary(i));
        }
        if let Some(p) = self.multiclass.iter().position(|d| d.name == name) {
            return Some(AttributeRef::Multiclass(p));
        }
        self.continuous
            .iter()
            .position(|d| d.name == name)
            .map(AttributeRef::Continuous)
    }

    /// All attributes in canonical (record) order.
    pub fn attributes(&self) -> impl Iterator<Item = AttributeRef> + '_ {
        (0..self.binary.len())
            .map(AttributeRef::Binary)
            .chain((0..self.multiclass.len()).map(AttributeRef::Multiclass))
            .chain((0..self.continuous.len()).map(AttributeRef::Continuous))
    }

    /// Continuous attributes switched on by `controller`.
    pub fn dependents_of_binary(&self, binary: usize) -> Vec<usize> {
        self.continuous
            .iter()
            .enumerate()
            .filter(|(_, d)| d.controller == Some(Controller::Binary(binary)))
            .map(|(m, _)| m)
            .collect()
    }

    pub fn dependents_of_lanes(&self, lanes: usize) -> Vec<usize> {
        self.continuous
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d.controller, Some(Controller::LaneCount { lanes: l, .. }) if l == lanes))
            .map(|(m, _)| m)
            .collect()
    }
}

fn binary_def(name: &str, group: AttributeGroup) -> BinaryDef {
    BinaryDef {
        name: name.to_string(),
        group,
    }
}

fn continuous_def(
    name: String,
    group: AttributeGroup,
    range: (f64, f64),
    controller: Option<Controller>,
) -> ContinuousDef {
    ContinuousDef {
        name,
        group,
        min: range.0,
        max: range.1,
        unit: Unit::Meters,
        controller,
    }
}

pub const LANE_WIDTH_RANGE: (f64, f64) = (2.5, 5.0);
pub const SIDE_ROAD_DISTANCE_RANGE: (f64, f64) = (6.0, 40.0);
pub const SIDE_ROAD_WIDTH_RANGE: (f64, f64) = (4.0, 16.0);
pub const DELIMITER_WIDTH_RANGE: (f64, f64) = (0.5, 2.0);
pub const SIDEWALK_WIDTH_RANGE: (f64, f64) = (1.0, 3.0);
pub const CURVATURE_RANGE: (f64, f64) = (-0.02, 0.02);

/// The fixed attribute registry.
pub fn default_schema() -> AttributeSchema {
    use AttributeGroup::*;

    let binary = vec![
        binary_def("side_road_left", Topology),
        binary_def("side_road_right", Topology),
        binary_def("main_road_ends", Topology),
        binary_def("crosswalk_near", Walkable),
        binary_def("crosswalk_far", Walkable),
        binary_def("crosswalk_left", Walkable),
        binary_def("crosswalk_right", Walkable),
        binary_def("sidewalk_left", Walkable),
        binary_def("sidewalk_right", Walkable),
        binary_def("delimiter_left", Lanes),
        binary_def("delimiter_right", Lanes),
        binary_def("delimiter_median", Lanes),
        binary_def("oneway_main", Lanes),
        binary_def("main_road_curved", Topology),
    ];

    let multiclass = vec![
        MulticlassDef {
            name: "lanes_left_count".into(),
            group: Lanes,
            classes: LANE_CLASSES as u8,
        },
        MulticlassDef {
            name: "lanes_right_count".into(),
            group: Lanes,
            classes: LANE_CLASSES as u8,
        },
    ];

    let mut continuous = vec![continuous_def(
        "ego_lane_width".into(),
        Lanes,
        LANE_WIDTH_RANGE,
        None,
    )];
    for (side, label) in [(Side::Left, "left"), (Side::Right, "right")] {
        for lane in 1..=MAX_SIDE_LANES {
            continuous.push(continuous_def(
                format!("lane_width_{label}_{lane}"),
                Lanes,
                LANE_WIDTH_RANGE,
                Some(Controller::LaneCount {
                    lanes: side.lanes(),
                    min_count: lane as u8,
                }),
            ));
        }
    }
    for side in Side::BOTH {
        let label = if side == Side::Left { "left" } else { "right" };
        continuous.push(continuous_def(
            format!("dist_side_road_{label}"),
            Topology,
            SIDE_ROAD_DISTANCE_RANGE,
            Some(Controller::Binary(side.side_road())),
        ));
    }
    for side in Side::BOTH {
        let label = if side == Side::Left { "left" } else { "right" };
        continuous.push(continuous_def(
            format!("side_road_width_{label}"),
            Topology,
            SIDE_ROAD_WIDTH_RANGE,
            Some(Controller::Binary(side.side_road())),
        ));
    }
    for side in Side::BOTH {
        let label = if side == Side::Left { "left" } else { "right" };
        continuous.push(continuous_def(
            format!("delimiter_width_{label}"),
            Lanes,
            DELIMITER_WIDTH_RANGE,
            Some(Controller::Binary(side.delimiter())),
        ));
    }
    for side in Side::BOTH {
        let label = if side == Side::Left { "left" } else { "right" };
        continuous.push(continuous_def(
            format!("sidewalk_width_{label}"),
            Walkable,
            SIDEWALK_WIDTH_RANGE,
            Some(Controller::Binary(side.sidewalk())),
        ));
    }
    let mut curvature = continuous_def(
        "curvature".into(),
        Topology,
        CURVATURE_RANGE,
        Some(Controller::Binary(bin::MAIN_ROAD_CURVED)),
    );
    curvature.unit = Unit::InverseMeters;
    continuous.push(curvature);

    AttributeSchema {
        binary,
        multiclass,
        continuous,
        constraints: constraints::constraint_table(),
    }
}

/// Read access shared by [`SceneParams`] and CRF labelings so both are
/// checked against the same constraint rules.
pub trait AttributeView {
    fn binary(&self, index: usize) -> bool;
    fn class(&self, index: usize) -> u8;
    fn is_active(&self, index: usize) -> bool;
}

/// One full assignment of all scene attributes.
///
/// Continuous values are in meters, except curvature in 1/m; `None` marks an
/// inactive attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams {
    pub binary: [bool; NUM_BINARY],
    pub multiclass: [u8; NUM_MULTICLASS],
    pub continuous: [Option<f64>; NUM_CONTINUOUS],
}

impl SceneParams {
    /// A straight one-way road consisting only of the ego lane.
    pub fn minimal(ego_lane_width: f64) -> Self {
        let mut binary = [false; NUM_BINARY];
        binary[bin::ONEWAY_MAIN] = true;
        let mut continuous = [None; NUM_CONTINUOUS];
        continuous[cont::EGO_LANE_WIDTH] = Some(ego_lane_width);
        SceneParams {
            binary,
            multiclass: [0; NUM_MULTICLASS],
            continuous,
        }
    }

    pub fn lanes(&self, side: Side) -> usize {
        self.multiclass[side.lanes()] as usize
    }

    /// Left/right reflection: swaps every left/right attribute pair and
    /// negates the curvature.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for side in [Side::Left] {
            let o = side.opposite();
            for (a, b) in [
                (side.side_road(), o.side_road()),
                (side.crosswalk(), o.crosswalk()),
                (side.sidewalk(), o.sidewalk()),
                (side.delimiter(), o.delimiter()),
            ] {
                out.binary.swap(a, b);
            }
            out.multiclass.swap(side.lanes(), o.lanes());
            let mut pairs = vec![
                (side.dist_side_road(), o.dist_side_road()),
                (side.side_road_width(), o.side_road_width()),
                (side.delimiter_width(), o.delimiter_width()),
                (side.sidewalk_width(), o.sidewalk_width()),
            ];
            pairs.extend((1..=MAX_SIDE_LANES).map(|l| (side.lane_width(l), o.lane_width(l))));
            for (a, b) in pairs {
                out.continuous.swap(a, b);
            }
        }
        out.continuous[cont::CURVATURE] = self.continuous[cont::CURVATURE].map(|k| -k);
        out
    }
}

impl AttributeView for SceneParams {
    fn binary(&self, index: usize) -> bool {
        self.binary[index]
    }
    fn class(&self, index: usize) -> u8 {
        self.multiclass[index]
    }
    fn is_active(&self, index: usize) -> bool {
        self.continuous[index].is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: ConstraintId,
    pub description: String,
}

/// Violated feasibility rules, sorted by constraint id. Empty means feasible.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn ids(&self) -> Vec<ConstraintId> {
        self.violations.iter().map(|v| v.id).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", v.id, v.description)?;
        }
        Ok(())
    }
}

/// Checks range, presence and every constraint of the schema.
pub fn validate(params: &SceneParams, schema: &AttributeSchema) -> ValidationReport {
    let mut violations = Vec::new();

    for (p, def) in schema.multiclass.iter().enumerate() {
        if params.multiclass[p] >= def.classes {
            violations.push(Violation {
                id: ConstraintId::ClassRange(p as u8),
                description: format!(
                    "{} = {} outside 0..{}",
                    def.name, params.multiclass[p], def.classes
                ),
            });
        }
    }

    for (m, def) in schema.continuous.iter().enumerate() {
        match params.continuous[m] {
            Some(v) if !def.contains(v) => violations.push(Violation {
                id: ConstraintId::Range(m as u8),
                description: format!("{} = {v} outside [{}, {}]", def.name, def.min, def.max),
            }),
            None if !def.is_activatable() => violations.push(Violation {
                id: ConstraintId::Presence(m as u8),
                description: format!("{} must always be present", def.name),
            }),
            _ => {}
        }
    }

    for c in &schema.constraints {
        if c.rule.violated(params) {
            violations.push(Violation {
                id: c.id,
                description: c.description.clone(),
            });
        }
    }

    violations.sort_by_key(|v| v.id);
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn feasible_scene() -> SceneParams {
        let mut s = SceneParams::minimal(3.5);
        s.binary[bin::SIDE_ROAD_LEFT] = true;
        s.continuous[cont::DIST_SIDE_ROAD_LEFT] = Some(20.0);
        s.continuous[cont::SIDE_ROAD_WIDTH_LEFT] = Some(8.0);
        s.binary[bin::SIDEWALK_RIGHT] = true;
        s.continuous[cont::SIDEWALK_WIDTH_RIGHT] = Some(2.0);
        s.multiclass[mc::LANES_RIGHT] = 2;
        s.continuous[Side::Right.lane_width(1)] = Some(3.0);
        s.continuous[Side::Right.lane_width(2)] = Some(3.2);
        s
    }

    #[test]
    fn schema_counts() {
        let s = default_schema();
        assert_eq!(s.binary.len(), NUM_BINARY);
        assert_eq!(s.multiclass.len(), NUM_MULTICLASS);
        assert_eq!(s.continuous.len(), NUM_CONTINUOUS);
        assert!(s.multiclass.iter().all(|d| d.classes == 7));
    }

    #[test]
    fn schema_is_deterministic() {
        let a = serde_json::to_string(&default_schema()).unwrap();
        let b = serde_json::to_string(&default_schema()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schema_invariants() {
        let s = default_schema();
        let mut names = HashSet::new();
        for a in s.attributes() {
            assert!(names.insert(s.name(a).to_string()), "duplicate {}", s.name(a));
        }
        assert_eq!(names.len(), NUM_ATTRIBUTES);
        for d in &s.continuous {
            assert!(d.min < d.max, "{}", d.name);
        }
        let activatable = s.continuous.iter().filter(|d| d.is_activatable()).count();
        assert_eq!(activatable, NUM_CONTINUOUS - 1);
        assert_eq!(s.continuous[cont::CURVATURE].unit, Unit::InverseMeters);
    }

    #[test]
    fn index_constants_match_names() {
        let s = default_schema();
        assert_eq!(s.binary[bin::MAIN_ROAD_CURVED].name, "main_road_curved");
        assert_eq!(s.continuous[cont::DIST_SIDE_ROAD_RIGHT].name, "dist_side_road_right");
        assert_eq!(s.continuous[Side::Left.lane_width(6)].name, "lane_width_left_6");
        assert_eq!(s.continuous[Side::Right.lane_width(1)].name, "lane_width_right_1");
        assert_eq!(s.continuous[cont::SIDEWALK_WIDTH_LEFT].name, "sidewalk_width_left");
        assert_eq!(
            s.lookup("lanes_right_count"),
            Some(AttributeRef::Multiclass(mc::LANES_RIGHT))
        );
    }

    #[test]
    fn feasible_scene_validates() {
        let s = default_schema();
        assert!(validate(&feasible_scene(), &s).is_feasible());
        assert!(validate(&SceneParams::minimal(4.0), &s).is_feasible());
    }

    #[test]
    fn q1_violation() {
        let s = default_schema();
        let mut p = SceneParams::minimal(3.5);
        p.continuous[cont::DIST_SIDE_ROAD_LEFT] = Some(12.0);
        let r = validate(&p, &s);
        assert_eq!(r.ids(), vec![ConstraintId::Q(1)]);
    }

    #[test]
    fn crosswalk_without_side_road_and_dead_end() {
        // crosswalk_left without side_road_left (c1) and a dead end with
        // no side road at all (c4); nothing else is wrong.
        let s = default_schema();
        let mut p = SceneParams::minimal(3.5);
        p.binary[bin::CROSSWALK_LEFT] = true;
        p.binary[bin::MAIN_ROAD_ENDS] = true;
        let r = validate(&p, &s);
        assert_eq!(r.ids(), vec![ConstraintId::C(1), ConstraintId::C(4)]);
    }

    #[test]
    fn range_and_presence() {
        let s = default_schema();
        let mut p = SceneParams::minimal(3.5);
        p.continuous[cont::EGO_LANE_WIDTH] = None;
        p.multiclass[mc::LANES_RIGHT] = 7;
        let r = validate(&p, &s);
        // presence + class range + six right lane widths missing (c12..c17)
        assert_eq!(r.len(), 8);
        assert!(r.ids().contains(&ConstraintId::Presence(cont::EGO_LANE_WIDTH as u8)));
        assert!(r.ids().contains(&ConstraintId::ClassRange(mc::LANES_RIGHT as u8)));

        let mut p = SceneParams::minimal(3.5);
        p.continuous[cont::EGO_LANE_WIDTH] = Some(5.5);
        assert_eq!(
            validate(&p, &s).ids(),
            vec![ConstraintId::Range(cont::EGO_LANE_WIDTH as u8)]
        );
        p.continuous[cont::EGO_LANE_WIDTH] = Some(f64::NAN);
        assert_eq!(validate(&p, &s).len(), 1);
    }

    #[test]
    fn report_is_sorted() {
        let s = default_schema();
        let mut p = SceneParams::minimal(3.5);
        p.binary[bin::ONEWAY_MAIN] = false;
        p.binary[bin::DELIMITER_MEDIAN] = true;
        p.continuous[cont::CURVATURE] = Some(0.01);
        p.binary[bin::CROSSWALK_RIGHT] = true;
        let r = validate(&p, &s);
        let ids = r.ids();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(
            ids,
            vec![
                ConstraintId::S(1),
                ConstraintId::S(2),
                ConstraintId::Q(9),
                ConstraintId::C(2),
            ]
        );
    }

    #[test]
    fn disabling_an_existence_binary_is_detected() {
        let s = default_schema();
        let base = feasible_scene();
        for b in 0..NUM_BINARY {
            let deps = s.dependents_of_binary(b);
            if deps.is_empty() || !base.binary[b] {
                continue;
            }
            let mut p = base.clone();
            p.binary[b] = false;
            assert!(!validate(&p, &s).is_feasible(), "{}", s.binary[b].name);
        }
    }

    #[test]
    fn mirror_is_an_involution() {
        let p = feasible_scene();
        assert_ne!(p.mirrored(), p);
        assert_eq!(p.mirrored().mirrored(), p);
        assert!(validate(&p.mirrored(), &default_schema()).is_feasible());
    }
}
