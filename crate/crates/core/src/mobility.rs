//! Biased random-walk user mobility.
//!
//! Each user keeps a persistent reference heading; every slot the actual
//! heading is the reference plus a bounded uniform perturbation, the speed is
//! drawn uniformly up to the cap, and the position advances accordingly.
//! Positions leaving the service rectangle are mirror-reflected back inside,
//! flipping both the momentary heading and the reference heading so the
//! directional trend bounces off the wall instead of pinning the user to it.

use rand::Rng;
use std::f64::consts::PI;

/// Axis-aligned service rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn square(side: f64) -> Self {
        Self {
            min: [0.0, 0.0],
            max: [side, side],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Kinematic state of one user (ground plane, z = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuKinematics {
    pub position: [f64; 2],
    /// Persistent reference heading the walk is biased toward.
    pub reference_heading: f64,
    /// Heading actually used in the latest slot.
    pub heading: f64,
    /// Speed used in the latest slot, m/s.
    pub speed: f64,
}

impl MuKinematics {
    pub fn new(position: [f64; 2], reference_heading: f64) -> Self {
        let heading = reference_heading.rem_euclid(2.0 * PI);
        Self {
            position,
            reference_heading: heading,
            heading,
            speed: 0.0,
        }
    }
}

fn wrap(angle: f64) -> f64 {
    angle.rem_euclid(2.0 * PI)
}

/// Reflects a coordinate into `[lo, hi]`, returning the reflected value and
/// how many reflections happened on each wall parity.
fn reflect_axis(mut x: f64, lo: f64, hi: f64) -> (f64, bool) {
    let mut flipped = false;
    // A slot displacement is small compared to the area, but stay safe.
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
            flipped = !flipped;
        } else if x > hi {
            x = 2.0 * hi - x;
            flipped = !flipped;
        } else {
            return (x, flipped);
        }
    }
    (x.clamp(lo, hi), flipped)
}

/// Advances one user by one slot: perturbed heading, uniform speed, mirror
/// reflection at the walls.
pub fn step_mobility(
    kin: &MuKinematics,
    dt: f64,
    heading_perturbation: f64,
    v_max: f64,
    bounds: &Bounds,
    rng: &mut impl Rng,
) -> MuKinematics {
    debug_assert!(dt > 0.0);
    let delta = if heading_perturbation > 0.0 {
        rng.random_range(-heading_perturbation..heading_perturbation)
    } else {
        0.0
    };
    let heading = wrap(kin.reference_heading + delta);
    let speed = if v_max > 0.0 {
        rng.random_range(0.0..v_max)
    } else {
        0.0
    };
    let x = kin.position[0] + speed * dt * heading.cos();
    let y = kin.position[1] + speed * dt * heading.sin();
    let (x, flip_x) = reflect_axis(x, bounds.min[0], bounds.max[0]);
    let (y, flip_y) = reflect_axis(y, bounds.min[1], bounds.max[1]);
    let mut heading = heading;
    let mut reference = kin.reference_heading;
    if flip_x {
        heading = wrap(PI - heading);
        reference = wrap(PI - reference);
    }
    if flip_y {
        heading = wrap(-heading);
        reference = wrap(-reference);
    }
    MuKinematics {
        position: [x, y],
        reference_heading: reference,
        heading,
        speed,
    }
}
