use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBracket {
    #[serde(rename = "<30")]
    Under30,
    #[serde(rename = "31-50")]
    From31To50,
    #[serde(rename = "51-70")]
    From51To70,
    #[serde(rename = ">70")]
    Over70,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ethnicity {
    White,
    Black,
    Asian,
    Other,
}

macro_rules! vocabulary {
    ($ty:ident, $field:literal, [$($variant:ident => $label:literal),+ $(,)?]) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];
            pub const FIELD: &'static str = $field;

            pub fn label(self) -> &'static str {
                match self {
                    $($ty::$variant => $label),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($label => Some($ty::$variant),)+
                    _ => None,
                }
            }

            pub fn labels() -> Vec<String> {
                Self::ALL.iter().map(|v| v.label().to_string()).collect()
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

vocabulary!(AgeBracket, "age_bracket", [
    Under30 => "<30",
    From31To50 => "31-50",
    From51To70 => "51-70",
    Over70 => ">70",
]);
vocabulary!(Sex, "sex", [M => "M", F => "F"]);
vocabulary!(Ethnicity, "ethnicity", [
    White => "White",
    Black => "Black",
    Asian => "Asian",
    Other => "Other",
]);

/// Intersectional demographic cell: one of 4 × 2 × 4 = 32.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubgroupKey {
    pub age: AgeBracket,
    pub sex: Sex,
    pub ethnicity: Ethnicity,
}

impl SubgroupKey {
    pub const COUNT: usize = 32;

    /// All 32 keys in canonical (age, sex, ethnicity) order.
    pub fn all() -> Vec<SubgroupKey> {
        let mut out = Vec::with_capacity(Self::COUNT);
        for &age in AgeBracket::ALL {
            for &sex in Sex::ALL {
                for &ethnicity in Ethnicity::ALL {
                    out.push(SubgroupKey { age, sex, ethnicity });
                }
            }
        }
        out
    }

    pub fn with_outcome(self, outcome: bool) -> Condition {
        Condition {
            age: self.age,
            sex: self.sex,
            ethnicity: self.ethnicity,
            outcome,
        }
    }
}

impl fmt::Display for SubgroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.age, self.sex, self.ethnicity)
    }
}

/// Static conditioning information for one stay: demographics plus the
/// binary outcome of the task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub age: AgeBracket,
    pub sex: Sex,
    pub ethnicity: Ethnicity,
    pub outcome: bool,
}

impl Condition {
    /// One-hot width: 4 age + 2 sex + 4 ethnicity + 2 outcome.
    pub const ONE_HOT_DIM: usize = 12;

    pub fn key(&self) -> SubgroupKey {
        SubgroupKey {
            age: self.age,
            sex: self.sex,
            ethnicity: self.ethnicity,
        }
    }

    /// Write the one-hot encoding into `out[..ONE_HOT_DIM]`, in the order
    /// age, sex, ethnicity, outcome (false, true).
    pub fn write_one_hot(&self, out: &mut [f64]) {
        out[..Self::ONE_HOT_DIM].fill(0.0);
        out[self.age.index()] = 1.0;
        out[4 + self.sex.index()] = 1.0;
        out[6 + self.ethnicity.index()] = 1.0;
        out[10 + usize::from(self.outcome)] = 1.0;
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} outcome={}", self.key(), u8::from(self.outcome))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_two_distinct_keys() {
        let keys = SubgroupKey::all();
        assert_eq!(keys.len(), 32);
        let set: std::collections::BTreeSet<_> = keys.iter().collect();
        assert_eq!(set.len(), 32);
    }

    #[test]
    fn labels_parse_back() {
        for a in AgeBracket::ALL {
            assert_eq!(AgeBracket::parse(a.label()), Some(*a));
        }
        assert_eq!(Ethnicity::parse("Hispanic"), None);
    }

    #[test]
    fn one_hot_has_four_ones() {
        let c = Condition {
            age: AgeBracket::Over70,
            sex: Sex::F,
            ethnicity: Ethnicity::Asian,
            outcome: true,
        };
        let mut v = [0.0; 12];
        c.write_one_hot(&mut v);
        assert_eq!(v.iter().sum::<f64>(), 4.0);
        assert_eq!(v[3], 1.0);
        assert_eq!(v[5], 1.0);
        assert_eq!(v[8], 1.0);
        assert_eq!(v[11], 1.0);
    }
}
