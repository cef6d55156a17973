//! Exhaustive minimization over a search space, used as a test oracle.

use super::solver::{attribute_at, SearchSpace};
use super::InferenceError;
use crate::crf::EnergyModel;
use crate::labeling::Labeling;
use crate::schema::NUM_ATTRIBUTES;

/// Largest search space the oracle will enumerate.
pub const MAX_EXACT_STATES: u128 = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub labeling: Labeling,
    pub energy: f64,
    pub states: u64,
}

/// Global minimizer of one frame's energy by enumeration. Labelings are
/// visited in lexicographic order of their labels (canonical attribute
/// order, first attribute most significant) and the first minimum wins.
pub fn minimize_energy_exact(model: &EnergyModel, frame: usize, space: &SearchSpace) -> Result<ExactSolution, InferenceError> {
    if frame >= model.num_frames() {
        return Err(InferenceError::Frame {
            frame,
            frames: model.num_frames(),
        });
    }
    let states = space.size();
    if states > MAX_EXACT_STATES {
        return Err(InferenceError::TooLarge { states });
    }
    let attrs: Vec<_> = (0..NUM_ATTRIBUTES).map(attribute_at).collect();
    let domains: Vec<&[usize]> = attrs.iter().map(|&a| space.allowed(a)).collect();
    let mut digits = vec![0usize; NUM_ATTRIBUTES];
    let mut l = Labeling::canonical(0);
    for (a, d) in attrs.iter().zip(&domains) {
        l.set(*a, d[0], &model.specs);
    }
    let mut best = (f64::INFINITY, l.clone());
    loop {
        let e = model.frame_energy(frame, &l);
        if e < best.0 {
            best = (e, l.clone());
        }
        // odometer step, last attribute fastest
        let mut k = NUM_ATTRIBUTES;
        loop {
            if k == 0 {
                return Ok(ExactSolution {
                    labeling: best.1,
                    energy: best.0,
                    states: states as u64,
                });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < domains[k].len() {
                l.set(attrs[k], domains[k][digits[k]], &model.specs);
                break;
            }
            digits[k] = 0;
            l.set(attrs[k], domains[k][0], &model.specs);
        }
    }
}
