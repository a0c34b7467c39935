//! Desk-scale reconstruction of flows from circle actions.
//!
//! The pipeline runs from a group acting on the circle with a pair of
//! invariant almost laminations, through the collapsed bifoliated plane, to
//! sampled charts of the flow space and its ideal boundary. Every verdict is
//! tagged with the finite depth and radius it was computed at.

pub mod action;
pub mod certify;
pub mod circle;
pub mod error;
pub mod flow;
pub mod fried;
pub mod gallery;
pub mod io;
pub mod lamination;
pub mod plane;
pub mod sphere;
pub mod svg;
pub mod verify;

pub use action::{CircleHomeo, GroupAction, GroupBall, Mobius, Word};
pub use circle::{arc_contains, cyclic_order, CirclePoint, CyclicOrder, QuadraticNumber};
pub use error::{ForgeError, Result};
pub use lamination::{AlmostLamination, GapKind, GapReport, Leaf, Linkage, Sign};
pub use plane::PlaneApprox;
pub use verify::{Status, Verdict};
