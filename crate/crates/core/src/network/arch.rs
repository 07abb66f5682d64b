use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Hidden-layer widths of a classifier head; the width-1 output layer is
/// implicit. This is also the genotype the architecture search evolves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture(Vec<usize>);

/// Search-space limits on layer count and width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchBounds {
    pub max_layers: usize,
    pub min_width: usize,
    pub max_width: usize,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::Validation("architecture needs at least one hidden layer".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Validation(format!("zero-width layer in {widths:?}")));
        }
        Ok(Architecture(widths))
    }

    /// Builds without validation; used by the search operators, which keep
    /// their outputs in bounds by construction.
    pub(crate) fn from_widths(widths: Vec<usize>) -> Self {
        Architecture(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn within(&self, bounds: &ArchBounds) -> bool {
        (1..=bounds.max_layers).contains(&self.0.len())
            && self
                .0
                .iter()
                .all(|w| (bounds.min_width..=bounds.max_width).contains(w))
    }

    pub fn check_bounds(&self, bounds: &ArchBounds) -> Result<()> {
        if self.within(bounds) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "architecture {self} outside 1..={} layers of width {}..={}",
                bounds.max_layers, bounds.min_width, bounds.max_width
            )))
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{w}")?;
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Parses a dash-separated width list such as `66-805-218-382`.
    fn from_str(s: &str) -> Result<Self> {
        let widths = s
            .trim()
            .split('-')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad layer width {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Architecture::new(widths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let a: Architecture = "66-805-218-382".parse().unwrap();
        assert_eq!(a.widths(), &[66, 805, 218, 382]);
        assert_eq!(a.to_string(), "66-805-218-382");
        assert_eq!("8".parse::<Architecture>().unwrap().widths(), &[8]);
        assert!("".parse::<Architecture>().is_err());
        assert!("4-x".parse::<Architecture>().is_err());
        assert!("4-0".parse::<Architecture>().is_err());
    }

    #[test]
    fn bounds() {
        let b = ArchBounds { max_layers: 5, min_width: 16, max_width: 1024 };
        assert!("66-805-218-382".parse::<Architecture>().unwrap().within(&b));
        assert!(!"8".parse::<Architecture>().unwrap().within(&b));
        assert!(!"16-16-16-16-16-16".parse::<Architecture>().unwrap().within(&b));
    }
}
