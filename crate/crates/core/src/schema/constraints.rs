use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use super::{bin, mc, AttributeRef, AttributeView, Side, MAX_SIDE_LANES};

/// Identifier of a feasibility rule. The ordering of this enum is the
/// ordering of validation reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    /// binary ↔ lane count
    S(u8),
    /// binary ↔ continuous activation
    Q(u8),
    /// higher-order conflicts
    C(u8),
    /// lane count outside its domain
    ClassRange(u8),
    /// a non-activatable continuous attribute is missing
    Presence(u8),
    /// a continuous value outside its range
    Range(u8),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::S(n) => write!(f, "s{n}"),
            ConstraintId::Q(n) => write!(f, "q{n}"),
            ConstraintId::C(n) => write!(f, "c{n}"),
            ConstraintId::ClassRange(n) => write!(f, "class_range{n}"),
            ConstraintId::Presence(n) => write!(f, "presence{n}"),
            ConstraintId::Range(n) => write!(f, "range{n}"),
        }
    }
}

impl FromStr for ConstraintId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| format!("bad constraint id {s:?}"))?;
        let (prefix, num) = s.split_at(split);
        let n: u8 = num.parse().map_err(|_| format!("bad constraint id {s:?}"))?;
        Ok(match prefix {
            "s" => ConstraintId::S(n),
            "q" => ConstraintId::Q(n),
            "c" => ConstraintId::C(n),
            "class_range" => ConstraintId::ClassRange(n),
            "presence" => ConstraintId::Presence(n),
            "range" => ConstraintId::Range(n),
            _ => return Err(format!("bad constraint id {s:?}")),
        })
    }
}

impl Serialize for ConstraintId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConstraintId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// An elementary condition on one attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Literal {
    Binary { index: usize, value: bool },
    ClassEq { index: usize, value: u8 },
    ClassAtLeast { index: usize, value: u8 },
    Active { index: usize, value: bool },
}

impl Literal {
    pub fn holds<V: AttributeView + ?Sized>(&self, view: &V) -> bool {
        match *self {
            Literal::Binary { index, value } => view.binary(index) == value,
            Literal::ClassEq { index, value } => view.class(index) == value,
            Literal::ClassAtLeast { index, value } => view.class(index) >= value,
            Literal::Active { index, value } => view.is_active(index) == value,
        }
    }

    pub fn attribute(&self) -> AttributeRef {
        match *self {
            Literal::Binary { index, .. } => AttributeRef::Binary(index),
            Literal::ClassEq { index, .. } | Literal::ClassAtLeast { index, .. } => {
                AttributeRef::Multiclass(index)
            }
            Literal::Active { index, .. } => AttributeRef::Continuous(index),
        }
    }
}

/// Conflict condition of a constraint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// Conflict iff every literal holds.
    AllOf(Vec<Literal>),
    /// Conflict iff exactly one of the two literals holds.
    Xor(Literal, Literal),
}

impl Rule {
    pub fn violated<V: AttributeView + ?Sized>(&self, view: &V) -> bool {
        match self {
            Rule::AllOf(lits) => lits.iter().all(|l| l.holds(view)),
            Rule::Xor(a, b) => a.holds(view) != b.holds(view),
        }
    }

    /// Distinct attributes in the clique, sorted.
    pub fn attributes(&self) -> Vec<AttributeRef> {
        let mut out: Vec<AttributeRef> = match self {
            Rule::AllOf(lits) => lits.iter().map(Literal::attribute).collect(),
            Rule::Xor(a, b) => vec![a.attribute(), b.attribute()],
        };
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: ConstraintId,
    pub description: String,
    pub rule: Rule,
}

fn is(index: usize, value: bool) -> Literal {
    Literal::Binary { index, value }
}

fn activation(id: u8, binary: usize, continuous: usize, what: &str) -> Constraint {
    Constraint {
        id: ConstraintId::Q(id),
        description: format!("{what} is present iff its existence flag is set"),
        rule: Rule::Xor(
            is(binary, true),
            Literal::Active {
                index: continuous,
                value: true,
            },
        ),
    }
}

pub(super) fn constraint_table() -> Vec<Constraint> {
    use Side::{Left, Right};

    let mut out = vec![
        Constraint {
            id: ConstraintId::S(1),
            description: "two-way traffic needs at least one lane on the left".into(),
            rule: Rule::AllOf(vec![
                is(bin::ONEWAY_MAIN, false),
                Literal::ClassEq {
                    index: mc::LANES_LEFT,
                    value: 0,
                },
            ]),
        },
        Constraint {
            id: ConstraintId::S(2),
            description: "a median delimiter needs at least one lane on the left".into(),
            rule: Rule::AllOf(vec![
                is(bin::DELIMITER_MEDIAN, true),
                Literal::ClassEq {
                    index: mc::LANES_LEFT,
                    value: 0,
                },
            ]),
        },
        activation(1, Left.side_road(), Left.dist_side_road(), "distance to the left side road"),
        activation(2, Left.side_road(), Left.side_road_width(), "width of the left side road"),
        activation(3, Right.side_road(), Right.dist_side_road(), "distance to the right side road"),
        activation(4, Right.side_road(), Right.side_road_width(), "width of the right side road"),
        activation(5, Left.sidewalk(), Left.sidewalk_width(), "left sidewalk width"),
        activation(6, Right.sidewalk(), Right.sidewalk_width(), "right sidewalk width"),
        activation(7, Left.delimiter(), Left.delimiter_width(), "left delimiter width"),
        activation(8, Right.delimiter(), Right.delimiter_width(), "right delimiter width"),
        activation(9, bin::MAIN_ROAD_CURVED, super::cont::CURVATURE, "curvature"),
        Constraint {
            id: ConstraintId::C(1),
            description: "left crosswalk requires a left side road".into(),
            rule: Rule::AllOf(vec![is(bin::CROSSWALK_LEFT, true), is(bin::SIDE_ROAD_LEFT, false)]),
        },
        Constraint {
            id: ConstraintId::C(2),
            description: "right crosswalk requires a right side road".into(),
            rule: Rule::AllOf(vec![
                is(bin::CROSSWALK_RIGHT, true),
                is(bin::SIDE_ROAD_RIGHT, false),
            ]),
        },
        Constraint {
            id: ConstraintId::C(3),
            description: "far crosswalk cannot exist when the main road ends".into(),
            rule: Rule::AllOf(vec![is(bin::CROSSWALK_FAR, true), is(bin::MAIN_ROAD_ENDS, true)]),
        },
        Constraint {
            id: ConstraintId::C(4),
            description: "main road can only end at an intersection".into(),
            rule: Rule::AllOf(vec![
                is(bin::MAIN_ROAD_ENDS, true),
                is(bin::SIDE_ROAD_LEFT, false),
                is(bin::SIDE_ROAD_RIGHT, false),
            ]),
        },
        Constraint {
            id: ConstraintId::C(5),
            description: "median delimiter requires two-way traffic".into(),
            rule: Rule::AllOf(vec![is(bin::DELIMITER_MEDIAN, true), is(bin::ONEWAY_MAIN, true)]),
        },
    ];

    let mut next = 6u8;
    for (side, label) in [(Left, "left"), (Right, "right")] {
        for lane in 1..=MAX_SIDE_LANES {
            out.push(Constraint {
                id: ConstraintId::C(next),
                description: format!(
                    "lane_width_{label}_{lane} is present iff there are at least {lane} lanes on the {label}"
                ),
                rule: Rule::Xor(
                    Literal::ClassAtLeast {
                        index: side.lanes(),
                        value: lane as u8,
                    },
                    Literal::Active {
                        index: side.lane_width(lane),
                        value: true,
                    },
                ),
            });
            next += 1;
        }
    }
    out
}
