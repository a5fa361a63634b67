use super::{HandWorld, PhysicsConfig};
use crate::choreography::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finger {
    Thumb = 0,
    Index = 1,
    Middle = 2,
    Ring = 3,
    Little = 4,
}

/// Where each fingertip touches the stick when fully closed. Thumb and index
/// pinch the fulcrum; the last three sit along the butt.
pub(super) fn stations(hw: &HandWorld, p: &PhysicsConfig) -> [Vec3; 5] {
    let f = hw.fulcrum();
    let u = axis_of(hw);
    let butt = (1.0 - p.grasp_fraction) * p.stick_length;
    [
        f,
        f,
        f - u * (0.3 * butt),
        f - u * (0.55 * butt),
        f - u * (0.8 * butt),
    ]
}

fn axis_of(hw: &HandWorld) -> Vec3 {
    (hw.stick.head_pos - hw.stick.tail_pos).normalize()
}

fn open_directions(hw: &HandWorld) -> [Vec3; 5] {
    let u = axis_of(hw);
    let mut side = u.cross(&Vec3::z());
    if side.norm() < 1e-9 {
        side = Vec3::x();
    }
    let side = side.normalize();
    let below = side.cross(&u).normalize() * -1.0;
    [side, -side, below, below, below]
}

/// Fingertip positions: each tip moves linearly from its open pose
/// (`fingertip_open_offset` away from its station) to the station as its
/// closure goes from 0 to 1.
pub fn fingertip_positions(hw: &HandWorld, p: &PhysicsConfig) -> [Vec3; 5] {
    let st = stations(hw, p);
    let dirs = open_directions(hw);
    let mut out = [Vec3::zeros(); 5];
    for i in 0..5 {
        out[i] = st[i] + dirs[i] * ((1.0 - hw.hand.closure[i]) * p.fingertip_open_offset);
    }
    out
}
