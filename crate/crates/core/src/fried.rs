//! Slope arithmetic for Dehn surgery along closed orbits.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

/// A slope `p/q` on a torus with multiplicity `k`, written `k·(p/q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slope {
    pub p: i64,
    pub q: i64,
    pub k: i64,
}

impl Slope {
    /// Normalizes to `q ≥ 0`, coprime `p, q`, and `p = 1` when `q = 0`.
    pub fn new(p: i64, q: i64, k: i64) -> Result<Self> {
        if p == 0 && q == 0 {
            return Err(ForgeError::Degenerate("slope 0/0".into()));
        }
        if k < 1 {
            return Err(ForgeError::Degenerate(format!("multiplicity {k} must be positive")));
        }
        let g = p.gcd(&q);
        let (mut p, mut q) = (p / g, q / g);
        if q < 0 || (q == 0 && p < 0) {
            (p, q) = (-p, -q);
        }
        Ok(Slope { p, q, k })
    }

    pub fn integral(p: i64) -> Self {
        Slope { p, q: 1, k: 1 }
    }

    pub fn times(self, k: i64) -> Result<Self> {
        Slope::new(self.p, self.q, self.k * k)
    }
}

impl fmt::Display for Slope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.k != 1 {
            write!(f, "{}*", self.k)?;
        }
        if self.q == 1 {
            write!(f, "{}", self.p)
        } else {
            write!(f, "{}/{}", self.p, self.q)
        }
    }
}

impl FromStr for Slope {
    type Err = ForgeError;

    /// Accepts `p`, `p/q`, `k*p` or `k*p/q`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || ForgeError::Parse(format!("bad slope {s:?}"));
        let (k, rest) = match s.split_once('*') {
            Some((k, r)) => (k.trim().parse().map_err(|_| bad())?, r),
            None => (1, s),
        };
        let (p, q) = match rest.split_once('/') {
            Some((p, q)) => (p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?),
            None => (rest.trim().parse().map_err(|_| bad())?, 1),
        };
        Slope::new(p, q, k)
    }
}

/// The geometric intersection number scaled by both multiplicities.
pub fn slope_distance(a: &Slope, b: &Slope) -> u64 {
    let det = (a.p as i128 * b.q as i128 - a.q as i128 * b.p as i128).unsigned_abs();
    (a.k as u128 * b.k as u128 * det) as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "orbit", rename_all = "snake_case")]
pub enum SurgeryOrbit {
    Regular { distance: u64 },
    Singular { distance: u64, prongs: u64 },
}

/// The orbit left after surgery along an orbit with the given degeneracy
/// locus. Distances below 2 are inadmissible.
pub fn surgery_prong(slope: &Slope, locus: &Slope) -> Result<SurgeryOrbit> {
    match slope_distance(slope, locus) {
        d @ 0..=1 => {
            Err(ForgeError::Precondition(format!("surgery at distance {d} from the degeneracy locus is inadmissible")))
        }
        2 => Ok(SurgeryOrbit::Regular { distance: 2 }),
        d => Ok(SurgeryOrbit::Singular { distance: d, prongs: d }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pretzel_slopes() {
        let (s18, s20) = (Slope::integral(18), Slope::integral(20));
        assert_eq!(slope_distance(&s18, &s20), 2);
        assert_eq!(surgery_prong(&s20, &s18).unwrap(), SurgeryOrbit::Regular { distance: 2 });
        assert_eq!(slope_distance(&s18, &s20.times(2).unwrap()), 4);
        assert_eq!(slope_distance(&s18, &s18), 0);
    }

    #[test]
    fn prong_counts() {
        let locus = Slope::integral(18);
        assert_eq!(
            surgery_prong(&Slope::integral(21), &locus).unwrap(),
            SurgeryOrbit::Singular { distance: 3, prongs: 3 }
        );
        assert!(matches!(surgery_prong(&Slope::integral(19), &locus), Err(ForgeError::Precondition(_))));
    }

    #[test]
    fn parsing_and_normalizing() {
        assert_eq!("2*20".parse::<Slope>().unwrap(), Slope { p: 20, q: 1, k: 2 });
        assert_eq!("-6/-4".parse::<Slope>().unwrap(), Slope { p: 3, q: 2, k: 1 });
        assert_eq!("1/0".parse::<Slope>().unwrap(), Slope { p: 1, q: 0, k: 1 });
        assert!("0/0".parse::<Slope>().is_err());
        assert!("x".parse::<Slope>().is_err());
        assert_eq!(Slope::new(-3, 0, 1).unwrap().p, 1);
        assert_eq!(Slope::new(4, 6, 3).unwrap().to_string(), "3*2/3");
    }

    fn slope() -> impl Strategy<Value = Slope> {
        (-200i64..200, 0i64..200, 1i64..5)
            .prop_filter("nonzero", |(p, q, _)| *p != 0 || *q != 0)
            .prop_map(|(p, q, k)| Slope::new(p, q, k).unwrap())
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_scales(a in slope(), b in slope(), k in 1i64..6) {
            prop_assert_eq!(slope_distance(&a, &b), slope_distance(&b, &a));
            prop_assert_eq!(slope_distance(&a, &b.times(k).unwrap()), k as u64 * slope_distance(&a, &b));
        }
    }
}
