//! Field categories: named lists of validation/extraction patterns.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ExtractError;

/// A category whose patterns are compiled once at construction.
///
/// A pattern may contain a named group `value`; when it matches, that group
/// is the extracted text, otherwise the whole match is.
#[derive(Debug, Clone)]
pub struct FieldCategory {
    pub id: String,
    pub name: String,
    patterns: Vec<Regex>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryDef {
    pub id: String,
    pub name: String,
    pub regexes: Vec<String>,
}

impl FieldCategory {
    pub fn new(id: &str, name: &str, regexes: &[&str]) -> Result<Self, ExtractError> {
        if regexes.is_empty() {
            return Err(ExtractError::InvalidTemplate(format!(
                "category {id} has no regexes"
            )));
        }
        let patterns = regexes
            .iter()
            .map(|r| {
                Regex::new(r).map_err(|e| {
                    ExtractError::InvalidTemplate(format!("category {id}: bad regex {r:?}: {e}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            id: id.to_string(),
            name: name.to_string(),
            patterns,
        })
    }

    pub fn from_def(def: &CategoryDef) -> Result<Self, ExtractError> {
        let refs: Vec<&str> = def.regexes.iter().map(String::as_str).collect();
        Self::new(&def.id, &def.name, &refs)
    }

    pub fn to_def(&self) -> CategoryDef {
        CategoryDef {
            id: self.id.clone(),
            name: self.name.clone(),
            regexes: self.patterns.iter().map(|p| p.as_str().to_string()).collect(),
        }
    }

    pub fn regexes(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(Regex::as_str)
    }

    /// First pattern (in order) that matches the trimmed text decides the
    /// extracted value.
    pub fn extract(&self, text: &str) -> Option<String> {
        let text = text.trim();
        self.patterns.iter().find_map(|re| {
            let caps = re.captures(text)?;
            let m = caps.name("value").or_else(|| caps.get(0))?;
            let v = m.as_str().trim();
            (!v.is_empty()).then(|| v.to_string())
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct CategoryRegistry {
    categories: BTreeMap<String, FieldCategory>,
}

impl CategoryRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The stock categories for identity-style documents.
    pub fn defaults() -> Self {
        let mut r = Self::empty();
        let stock: &[(&str, &str, &[&str])] = &[
            ("cnp", "Personal numeric code", &[r"^[1-9]\d{12}$"]),
            ("series", "Document series", &[r"^[A-Z]{2}$"]),
            ("number", "Document number", &[r"^\d{6}$"]),
            ("date", "Date", &[r"^\d{2}\.\d{2}\.\d{4}$"]),
            (
                "date-range",
                "Validity range",
                &[r"^\d{2}\.\d{2}\.\d{4}-\d{2}\.\d{2}\.\d{4}$"],
            ),
            ("name", "Person name", &[r"^[A-Z]+(?:-[A-Z]+)*$"]),
            ("address", "Address", &[r"^.*\S.*$"]),
        ];
        for (id, name, res) in stock {
            r.insert(FieldCategory::new(id, name, res).expect("stock regexes compile"));
        }
        r
    }

    pub fn insert(&mut self, cat: FieldCategory) {
        self.categories.insert(cat.id.clone(), cat);
    }

    pub fn get(&self, id: &str) -> Option<&FieldCategory> {
        self.categories.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.categories.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FieldCategory> {
        self.categories.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_patterns() {
        let r = CategoryRegistry::defaults();
        let ok = |c: &str, t: &str| r.get(c).unwrap().extract(t).is_some();
        assert!(ok("cnp", "1970523123456"));
        assert!(!ok("cnp", "0970523123456"));
        assert!(!ok("cnp", "197052312345"));
        assert!(ok("series", "MZ"));
        assert!(!ok("series", "M2"));
        assert!(ok("number", "123456"));
        assert!(ok("date", "23.05.1997"));
        assert!(!ok("date", "23/05/1997"));
        assert!(ok("date-range", "01.02.2020-01.02.2030"));
        assert!(ok("name", "ANA-MARIA"));
        assert!(!ok("name", "Ana"));
        assert!(ok("address", " STR. X 1 "));
        assert!(!ok("address", "   "));
    }

    #[test]
    fn named_group_selects_value() {
        let c = FieldCategory::new("x", "x", &[r"^NO\.(?P<value>\d+)$"]).unwrap();
        assert_eq!(c.extract("NO.42").as_deref(), Some("42"));
    }

    #[test]
    fn invalid_definitions() {
        assert!(FieldCategory::new("x", "x", &[]).is_err());
        assert!(FieldCategory::new("x", "x", &["("]).is_err());
    }
}
