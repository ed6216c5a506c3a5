//! Rational maps on the Riemann sphere: projective points, the chordal
//! metric, spherical derivatives, critical points and orbits.

pub mod critical;
pub mod map;
pub mod orbit;
pub mod point;
pub mod poly;
pub mod sampling;

pub use critical::{critical_points, max_local_degree, CriticalPoint};
pub use map::{Form, RationalMap};
pub use orbit::{iterate_orbit, DerivLedger, OrbitFragment};
pub use point::{chordal_distance, Chart, SpherePoint};
pub use sampling::{fibonacci_sphere, random_sphere};
