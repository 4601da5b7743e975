//! Penalty contact between the bullet's front corner and the target's
//! rear-quarter side panel: corner-vs-edge detection, a damped-spring normal
//! force with a friction-bounded tangential component, and the mapping of the
//! contact-frame force pair into per-vehicle body wrenches.

use super::{BulletParams, BulletState, ContactForce, ContactFrame, ContactParams, TargetParams, TargetState};
use crate::math::{cross2, Rot2};

/// A detected contact: frame (outward panel normal heading + world contact
/// point), penetration depth, and the contact point expressed in each body's
/// own frame (the lever arms for the moment computation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub frame: ContactFrame,
    pub depth: f64,
    pub lever_target: [f64; 2],
    pub lever_bullet: [f64; 2],
}

/// Test the bullet's front corners against the rear half of the target's side
/// panels. Returns the deepest penetrating corner, if any; a corner exactly on
/// the panel counts as contact with zero depth.
pub fn contact_detect(
    target: &TargetState,
    bullet: &BulletState,
    tp: &TargetParams,
    bp: &BulletParams,
) -> Option<Contact> {
    let rot_b = Rot2::new(bullet.psi);
    let rot_t = Rot2::new(target.psi);
    let mut best: Option<Contact> = None;

    for sy in [1.0, -1.0] {
        // bullet front corner in its own frame, then in the world
        let corner_b = [0.5 * bp.length, sy * 0.5 * bp.width];
        let cw = rot_b.apply(corner_b);
        let corner_world = [bullet.x + cw[0], bullet.y + cw[1]];
        // same point in the target's frame
        let local = rot_t.apply_inv([corner_world[0] - target.x, corner_world[1] - target.y]);

        let in_rear_half = local[0] >= -0.5 * tp.length && local[0] <= 0.0;
        let depth = 0.5 * tp.width - local[1].abs();
        if !in_rear_half || depth < 0.0 {
            continue;
        }
        // which side panel was entered
        let side = if local[1] >= 0.0 { 1.0 } else { -1.0 };
        let gamma = target.psi + side * std::f64::consts::FRAC_PI_2;
        let contact = Contact {
            frame: ContactFrame { gamma, point: corner_world },
            depth,
            lever_target: local,
            lever_bullet: corner_b,
        };
        if best.map_or(true, |b| depth > b.depth) {
            best = Some(contact);
        }
    }
    best
}

/// Penalty contact force in the contact frame. `vn_closing` is the closing
/// speed along the normal (positive while the bodies approach), `vt` the
/// tangential velocity of the bullet's contact point relative to the
/// target's. The normal force never pulls; the tangential force is viscous
/// friction clamped to the friction cone.
pub fn contact_force(depth: f64, vn_closing: f64, vt: f64, p: &ContactParams) -> ContactForce {
    let normal = (p.k_c * depth + p.c_c * vn_closing).max(0.0);
    let limit = p.mu_c * normal;
    let tangential = (-p.c_t * vt).clamp(-limit, limit);
    ContactForce { normal, tangential }
}

/// Express a contact-frame force on a vehicle with heading `psi` as a body
/// wrench. The contact frame's axes sit at heading `gamma` (normal) and
/// `gamma + pi/2` (tangent); mapping its components into the body frame is a
/// rotation by `gamma - psi`, which keeps the world-frame pair of the two
/// vehicles summing to zero exactly. `lever` is the contact point in the
/// receiving vehicle's body frame.
pub fn map_to_body(f: &ContactForce, gamma: f64, psi: f64, lever: [f64; 2]) -> super::BodyWrench {
    let r = Rot2::new(gamma - psi);
    let fb = r.apply([f.normal, f.tangential]);
    super::BodyWrench { fx: fb[0], fy: fb[1], mz: cross2(lever, fb) }
}
