//! The fixed label table shared by masks, detections, and requests.
//!
//! Ids are contiguous from 0; the four building damage levels occupy 1..=4 so
//! damage checks reduce to a range test.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoryKind {
    Background,
    DamageLevel,
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryInfo {
    pub id: u8,
    pub name: &'static str,
    pub kind: CategoryKind,
    /// Phrase used in generated request text.
    pub display: &'static str,
}

pub const CATEGORY_TABLE: [CategoryInfo; 11] = [
    info(0, "background", CategoryKind::Background, "background"),
    info(1, "building_no_damage", CategoryKind::DamageLevel, "buildings with no damage"),
    info(2, "building_minor_damage", CategoryKind::DamageLevel, "buildings with minor damage"),
    info(3, "building_major_damage", CategoryKind::DamageLevel, "buildings with major damage"),
    info(4, "building_total_destruction", CategoryKind::DamageLevel, "totally destroyed buildings"),
    info(5, "water", CategoryKind::Semantic, "water"),
    info(6, "vehicle", CategoryKind::Semantic, "vehicles"),
    info(7, "road_clear", CategoryKind::Semantic, "clear roads"),
    info(8, "road_blocked", CategoryKind::Semantic, "blocked roads"),
    info(9, "pool", CategoryKind::Semantic, "pools"),
    info(10, "tree", CategoryKind::Semantic, "trees"),
];

const fn info(id: u8, name: &'static str, kind: CategoryKind, display: &'static str) -> CategoryInfo {
    CategoryInfo { id, name, kind, display }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

/// A validated entry of [`CATEGORY_TABLE`], stored as its id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category(u8);

impl Category {
    pub const BACKGROUND: Category = Category(0);
    pub const WATER: Category = Category(5);
    pub const VEHICLE: Category = Category(6);
    pub const ROAD_CLEAR: Category = Category(7);
    pub const ROAD_BLOCKED: Category = Category(8);
    pub const POOL: Category = Category(9);
    pub const TREE: Category = Category(10);

    pub fn from_id(id: u8) -> Result<Self, UnknownCategory> {
        if (id as usize) < CATEGORY_TABLE.len() {
            Ok(Category(id))
        } else {
            Err(UnknownCategory(id.to_string()))
        }
    }

    /// Case-insensitive; spaces and hyphens are treated as underscores.
    pub fn from_name(name: &str) -> Result<Self, UnknownCategory> {
        let normalized = normalize_name(name);
        CATEGORY_TABLE
            .iter()
            .find(|c| c.name == normalized)
            .map(|c| Category(c.id))
            .ok_or_else(|| UnknownCategory(name.to_string()))
    }

    pub fn all() -> impl Iterator<Item = Category> {
        (0..CATEGORY_TABLE.len() as u8).map(Category)
    }

    pub fn foreground() -> impl Iterator<Item = Category> {
        Self::all().filter(|c| !c.is_background())
    }

    pub fn semantic() -> impl Iterator<Item = Category> {
        Self::all().filter(|c| c.kind() == CategoryKind::Semantic)
    }

    pub fn damage_levels() -> impl Iterator<Item = Category> {
        Self::all().filter(|c| c.is_damage_level())
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn info(self) -> &'static CategoryInfo {
        &CATEGORY_TABLE[self.0 as usize]
    }

    pub fn name(self) -> &'static str {
        self.info().name
    }

    pub fn kind(self) -> CategoryKind {
        self.info().kind
    }

    pub fn is_background(self) -> bool {
        self.0 == 0
    }

    pub fn is_damage_level(self) -> bool {
        (1..=4).contains(&self.0)
    }
}

fn normalize_name(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Category::from_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Lookup key accepted by [`category_lookup`].
#[derive(Debug, Clone, Copy)]
pub enum CategoryKey<'a> {
    Id(u8),
    Name(&'a str),
}

impl From<u8> for CategoryKey<'_> {
    fn from(id: u8) -> Self {
        CategoryKey::Id(id)
    }
}

impl<'a> From<&'a str> for CategoryKey<'a> {
    fn from(name: &'a str) -> Self {
        CategoryKey::Name(name)
    }
}

pub fn category_lookup<'a>(key: impl Into<CategoryKey<'a>>) -> Result<&'static CategoryInfo, UnknownCategory> {
    match key.into() {
        CategoryKey::Id(id) => Category::from_id(id),
        CategoryKey::Name(name) => Category::from_name(name),
    }
    .map(Category::info)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        for (i, c) in CATEGORY_TABLE.iter().enumerate() {
            assert_eq!(c.id as usize, i);
        }
        let count = |k| CATEGORY_TABLE.iter().filter(|c| c.kind == k).count();
        assert_eq!(count(CategoryKind::DamageLevel), 4);
        assert_eq!(count(CategoryKind::Semantic), 6);
        assert_eq!(count(CategoryKind::Background), 1);
        assert_eq!(CATEGORY_TABLE[0].kind, CategoryKind::Background);
    }

    #[test]
    fn lookup_examples() {
        let water = category_lookup("water").unwrap();
        assert_eq!((water.id, water.kind), (5, CategoryKind::Semantic));
        assert_eq!(category_lookup(0).unwrap().kind, CategoryKind::Background);
        assert_eq!(category_lookup("lava"), Err(UnknownCategory("lava".into())));
        assert!(category_lookup(11).is_err());
    }

    #[test]
    fn name_normalization() {
        assert_eq!(category_lookup("Road Clear").unwrap().id, 7);
        assert_eq!(category_lookup("BUILDING-MAJOR-damage").unwrap().id, 3);
    }

    #[test]
    fn lookup_round_trip() {
        for id in 0..11u8 {
            let c = category_lookup(id).unwrap();
            assert_eq!(category_lookup(c.name).unwrap().id, id);
        }
    }
}
