//! The six extended-equality families carried by every consensus block.

use std::fmt;

/// Extended-equality family.
///
/// `PX`/`NX` are the split consensus constraints `X_i - Z + Y = 0` and
/// `Z - X_i + Y = 0`, `F` the quadratic inequalities, `G` the affine
/// inequalities, and `PH`/`NH` the split affine equalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    PX,
    NX,
    F,
    G,
    PH,
    NH,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::PX,
        Family::NX,
        Family::F,
        Family::G,
        Family::PH,
        Family::NH,
    ];

    /// Short lowercase key used in config files and trace headers.
    pub fn key(self) -> &'static str {
        match self {
            Family::PX => "px",
            Family::NX => "nx",
            Family::F => "f",
            Family::G => "g",
            Family::PH => "ph",
            Family::NH => "nh",
        }
    }

    pub fn from_key(key: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.key() == key)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One value per family.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerFamily<V> {
    pub px: V,
    pub nx: V,
    pub f: V,
    pub g: V,
    pub ph: V,
    pub nh: V,
}

impl<V> PerFamily<V> {
    pub fn from_fn(mut make: impl FnMut(Family) -> V) -> Self {
        PerFamily {
            px: make(Family::PX),
            nx: make(Family::NX),
            f: make(Family::F),
            g: make(Family::G),
            ph: make(Family::PH),
            nh: make(Family::NH),
        }
    }

    pub fn get(&self, family: Family) -> &V {
        match family {
            Family::PX => &self.px,
            Family::NX => &self.nx,
            Family::F => &self.f,
            Family::G => &self.g,
            Family::PH => &self.ph,
            Family::NH => &self.nh,
        }
    }

    pub fn get_mut(&mut self, family: Family) -> &mut V {
        match family {
            Family::PX => &mut self.px,
            Family::NX => &mut self.nx,
            Family::F => &mut self.f,
            Family::G => &mut self.g,
            Family::PH => &mut self.ph,
            Family::NH => &mut self.nh,
        }
    }

    pub fn map<W>(&self, mut op: impl FnMut(Family, &V) -> W) -> PerFamily<W> {
        PerFamily::from_fn(|fam| op(fam, self.get(fam)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Family, &V)> {
        Family::ALL.into_iter().map(move |fam| (fam, self.get(fam)))
    }
}

impl<V: Clone> PerFamily<V> {
    pub fn splat(value: V) -> Self {
        PerFamily::from_fn(|_| value.clone())
    }
}
