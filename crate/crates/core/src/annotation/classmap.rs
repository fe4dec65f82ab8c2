use std::collections::HashMap;

use super::AnnotationError;

/// The 15 vehicle classes, in report row order.
pub const DEFAULT_VEHICLE_CLASSES: [&str; 15] = [
    "bicycle",
    "bike",
    "boat",
    "bus",
    "car",
    "cng",
    "easybike",
    "horsecart",
    "launch",
    "leguna",
    "rickshaw",
    "tractor",
    "truck",
    "van",
    "wheelbarrow",
];

/// Ordered class names with dense 0-based indices.
///
/// Lookups by name ignore ASCII case, so `"Bus"` in a VOC file resolves to
/// `bus`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl ClassMap {
    pub fn new<I, S>(names: I) -> Result<Self, AnnotationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(AnnotationError::InvalidClassMap("no classes".into()));
        }
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() || name.trim() != name {
                return Err(AnnotationError::InvalidClassMap(format!(
                    "class {i} has an empty or padded name {name:?}"
                )));
            }
            if lookup.insert(name.to_ascii_lowercase(), i).is_some() {
                return Err(AnnotationError::InvalidClassMap(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(Self { names, lookup })
    }

    pub fn vehicles() -> Self {
        Self::new(DEFAULT_VEHICLE_CLASSES).expect("default class map is valid")
    }

    /// Parses a class list file: one name per line in index order. Blank
    /// lines are skipped.
    pub fn from_lines(text: &str) -> Result<Self, AnnotationError> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for name in &self.names {
            out.push_str(name);
            out.push('\n');
        }
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(&name.trim().to_ascii_lowercase()).copied()
    }

    pub fn resolve(&self, name: &str) -> Result<usize, AnnotationError> {
        self.index_of(name)
            .ok_or_else(|| AnnotationError::UnknownClass(name.trim().to_string()))
    }
}

impl Default for ClassMap {
    fn default() -> Self {
        Self::vehicles()
    }
}
