//! Unified land-cover legend.

use serde::Serialize;

use crate::error::{Error, Result};

/// Reserved id for pixels without a usable label.
pub const UNLABELED: u8 = 0;

pub const TR: u8 = 1;
pub const TC: u8 = 2;
pub const SL: u8 = 3;
pub const GL: u8 = 4;
pub const CL: u8 = 5;
pub const BD: u8 = 6;
pub const BLSV: u8 = 7;
pub const SI: u8 = 8;
pub const WT: u8 = 9;
pub const WL: u8 = 10;
pub const ML: u8 = 11;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassInfo {
    pub id: u8,
    pub code: String,
    pub name: String,
    pub color: [u8; 3],
}

/// Ordered class legend. Ids run contiguously from 1 to `len()`; 0 is
/// always [`UNLABELED`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassScheme {
    classes: Vec<ClassInfo>,
}

impl ClassScheme {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("class scheme has no classes".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if usize::from(c.id) != i + 1 {
                return Err(Error::Config(format!(
                    "class ids must be contiguous from 1, found {} at position {}",
                    c.id, i
                )));
            }
        }
        Ok(Self { classes })
    }

    /// The 11-class legend used for the unified product.
    pub fn default_scheme() -> Self {
        let raw: [(&str, &str, [u8; 3]); 11] = [
            ("TR", "Traffic route", [255, 0, 0]),
            ("TC", "Tree cover", [0, 100, 0]),
            ("SL", "Shrubland", [255, 187, 34]),
            ("GL", "Grassland", [255, 255, 76]),
            ("CL", "Cropland", [240, 150, 255]),
            ("BD", "Building", [250, 0, 0]),
            ("BL&SV", "Barren & sparse vegetation", [180, 180, 180]),
            ("S&I", "Snow & ice", [240, 240, 240]),
            ("WT", "Water", [0, 100, 200]),
            ("WL", "Wetland", [0, 150, 160]),
            ("M&L", "Moss & lichen", [250, 230, 160]),
        ];
        let classes = raw
            .iter()
            .enumerate()
            .map(|(i, (code, name, color))| ClassInfo {
                id: (i + 1) as u8,
                code: (*code).to_string(),
                name: (*name).to_string(),
                color: *color,
            })
            .collect();
        Self { classes }
    }

    /// Number of real classes, `L`.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn contains(&self, id: u8) -> bool {
        id != UNLABELED && usize::from(id) <= self.classes.len()
    }

    pub fn get(&self, id: u8) -> Option<&ClassInfo> {
        if id == UNLABELED {
            None
        } else {
            self.classes.get(usize::from(id) - 1)
        }
    }

    /// Looks a class up by its short code (`"TC"`) or full name.
    pub fn by_code(&self, code: &str) -> Option<&ClassInfo> {
        self.classes
            .iter()
            .find(|c| c.code.eq_ignore_ascii_case(code) || c.name.eq_ignore_ascii_case(code))
    }

    pub fn color(&self, id: u8) -> [u8; 3] {
        self.get(id).map(|c| c.color).unwrap_or([0, 0, 0])
    }
}

impl Default for ClassScheme {
    fn default() -> Self {
        Self::default_scheme()
    }
}
