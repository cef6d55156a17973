//! Discrete assignments of all attributes, as used by the CRF.

use serde::{Deserialize, Serialize};

use crate::probability::BinSpec;
use crate::schema::{
    bin, AttributeRef, AttributeView, SceneParams, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS,
};

/// One label per attribute. Continuous attributes hold the index of an
/// active bin in `0..K`, or `None` for the inactive bin.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labeling {
    pub binary: [bool; NUM_BINARY],
    pub multiclass: [u8; NUM_MULTICLASS],
    pub continuous: [Option<u16>; NUM_CONTINUOUS],
}

impl Labeling {
    /// Bins each active value (clamped to its range).
    pub fn from_scene(params: &SceneParams, specs: &[BinSpec]) -> Self {
        let mut continuous = [None; NUM_CONTINUOUS];
        for (m, (v, spec)) in params.continuous.iter().zip(specs).enumerate() {
            continuous[m] = v.map(|x| (spec.label_of(Some(x)) - usize::from(spec.inactive_bin)) as u16);
        }
        Labeling {
            binary: params.binary,
            multiclass: params.multiclass,
            continuous,
        }
    }

    /// Scene with every active continuous attribute at its bin center.
    pub fn to_scene(&self, specs: &[BinSpec]) -> SceneParams {
        let mut continuous = [None; NUM_CONTINUOUS];
        for (m, (b, spec)) in self.continuous.iter().zip(specs).enumerate() {
            continuous[m] = b.map(|j| spec.center(j as usize));
        }
        SceneParams {
            binary: self.binary,
            multiclass: self.multiclass,
            continuous,
        }
    }

    /// The straight one-way ego-lane-only layout with the ego width at
    /// `ego_bin`; feasible under every schema constraint.
    pub fn canonical(ego_bin: u16) -> Self {
        let mut binary = [false; NUM_BINARY];
        binary[bin::ONEWAY_MAIN] = true;
        let mut continuous = [None; NUM_CONTINUOUS];
        continuous[crate::schema::cont::EGO_LANE_WIDTH] = Some(ego_bin);
        Labeling {
            binary,
            multiclass: [0; NUM_MULTICLASS],
            continuous,
        }
    }

    /// Label of one attribute as an index into its domain (continuous
    /// labels count the inactive bin as 0 where there is one).
    pub fn get(&self, attr: AttributeRef, specs: &[BinSpec]) -> usize {
        match attr {
            AttributeRef::Binary(i) => usize::from(self.binary[i]),
            AttributeRef::Multiclass(p) => self.multiclass[p] as usize,
            AttributeRef::Continuous(m) => cont_label(self.continuous[m], &specs[m]),
        }
    }

    pub fn set(&mut self, attr: AttributeRef, label: usize, specs: &[BinSpec]) {
        match attr {
            AttributeRef::Binary(i) => self.binary[i] = label != 0,
            AttributeRef::Multiclass(p) => self.multiclass[p] = label as u8,
            AttributeRef::Continuous(m) => self.continuous[m] = cont_bin(label, &specs[m]),
        }
    }
}

/// Domain index of a continuous assignment.
pub fn cont_label(bin: Option<u16>, spec: &BinSpec) -> usize {
    match bin {
        None => 0,
        Some(j) => j as usize + usize::from(spec.inactive_bin),
    }
}

/// Inverse of [`cont_label`].
pub fn cont_bin(label: usize, spec: &BinSpec) -> Option<u16> {
    if spec.is_inactive_label(label) {
        None
    } else {
        Some((label - usize::from(spec.inactive_bin)) as u16)
    }
}

impl AttributeView for Labeling {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::{bin_specs, BinningConfig};
    use crate::sampler::{sample_scene, PriorConfig};
    use crate::schema::{default_schema, validate};

    #[test]
    fn scene_round_trip_keeps_feasibility() {
        let schema = default_schema();
        let specs = bin_specs(&schema, &BinningConfig::default());
        for seed in 0..200 {
            let p = sample_scene(&PriorConfig::default(), seed);
            let l = Labeling::from_scene(&p, &specs);
            let back = l.to_scene(&specs);
            assert!(validate(&back, &schema).is_feasible());
            assert_eq!(Labeling::from_scene(&back, &specs), l);
            for attr in schema.attributes() {
                let mut m = l.clone();
                m.set(attr, l.get(attr, &specs), &specs);
                assert_eq!(m, l);
            }
        }
    }

    #[test]
    fn canonical_is_feasible() {
        let schema = default_schema();
        let specs = bin_specs(&schema, &BinningConfig::default());
        let l = Labeling::canonical(10);
        assert!(validate(&l.to_scene(&specs), &schema).is_feasible());
    }
}
