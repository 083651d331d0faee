//! Discrete attribute schema and cliques.
//!
//! A domain is an ordered list of attributes, each with an ordered list of
//! opaque value labels. Records store value *indices*; labels only matter at
//! the I/O boundary.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Value labels of one attribute.
///
/// `Range(k)` stands for the labels `"0".."k-1"` without materializing them,
/// which keeps 10^7-value census attributes cheap.
#[derive(Debug, Clone)]
pub enum Values {
    Labels(Vec<String>),
    Range(usize),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Labels(v) => v.len(),
            Values::Range(k) => *k,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Attribute {
    name: String,
    values: Values,
    lookup: HashMap<String, usize>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, values: Values) -> Self {
        let lookup = match &values {
            Values::Labels(v) => v.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect(),
            Values::Range(_) => HashMap::new(),
        };
        Attribute {
            name: name.into(),
            values,
            lookup,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn label(&self, index: usize) -> Cow<'_, str> {
        match &self.values {
            Values::Labels(v) => Cow::Borrowed(v[index].as_str()),
            Values::Range(_) => Cow::Owned(index.to_string()),
        }
    }

    /// Index of `label`, if it belongs to this attribute.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        match &self.values {
            Values::Labels(_) => self.lookup.get(label).copied(),
            Values::Range(k) => {
                // Canonical decimal only: "007" is not the label of 7.
                let i: usize = label.parse().ok()?;
                (i < *k && i.to_string() == label).then_some(i)
            }
        }
    }
}

/// Ordered attribute schema.
#[derive(Debug, Clone)]
pub struct Domain {
    attrs: Vec<Attribute>,
    by_name: HashMap<String, usize>,
}

impl Domain {
    pub fn new(attrs: Vec<Attribute>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(attrs.len());
        for (i, a) in attrs.iter().enumerate() {
            if a.size() == 0 {
                return Err(Error::EmptyDomain(a.name.clone()));
            }
            if by_name.insert(a.name.clone(), i).is_some() {
                return Err(Error::DuplicateAttribute(a.name.clone()));
            }
        }
        Ok(Domain { attrs, by_name })
    }

    /// Convenience constructor from `(name, labels)` pairs.
    pub fn from_labels<S: AsRef<str>>(spec: &[(&str, &[S])]) -> Result<Self> {
        let attrs = spec
            .iter()
            .map(|(n, ls)| {
                Attribute::new(
                    *n,
                    Values::Labels(ls.iter().map(|l| l.as_ref().to_string()).collect()),
                )
            })
            .collect();
        Domain::new(attrs)
    }

    /// Convenience constructor from `(name, size)` pairs with decimal labels.
    pub fn from_sizes(spec: &[(&str, usize)]) -> Result<Self> {
        Domain::new(
            spec.iter()
                .map(|(n, k)| Attribute::new(*n, Values::Range(*k)))
                .collect(),
        )
    }

    /// Number of attributes `d`.
    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn attribute(&self, i: usize) -> &Attribute {
        &self.attrs[i]
    }

    pub fn size(&self, i: usize) -> usize {
        self.attrs[i].size()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.attrs.iter().map(Attribute::size).collect()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.attrs[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    /// Cell count of a clique, as `f64` so it cannot overflow.
    pub fn cells_f64(&self, clique: &Clique) -> f64 {
        clique.attrs().iter().map(|&i| self.size(i) as f64).product()
    }

    /// Cell count of a clique, or `CliqueTooLarge` if it reaches `cap`.
    pub fn cells_capped(&self, clique: &Clique, cap: usize) -> Result<usize> {
        let cells = self.cells_f64(clique);
        if cells >= cap as f64 {
            return Err(Error::CliqueTooLarge { cells, cap });
        }
        Ok(cells as usize)
    }

    /// log10 of the full domain size `n`; the product itself is never formed.
    pub fn log10_size(&self) -> f64 {
        self.attrs.iter().map(|a| (a.size() as f64).log10()).sum()
    }

    pub fn check_clique(&self, clique: &Clique) -> Result<()> {
        match clique.attrs().last() {
            Some(&i) if i >= self.len() => Err(Error::InvalidClique(format!(
                "attribute index {i} out of range for {} attributes",
                self.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Clique from attribute names.
    pub fn clique<S: AsRef<str>>(&self, names: &[S]) -> Result<Clique> {
        let idx = names
            .iter()
            .map(|n| self.require(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Clique::new(idx)
    }

    pub fn clique_names(&self, clique: &Clique) -> Vec<String> {
        clique.attrs().iter().map(|&i| self.name(i).to_string()).collect()
    }

    /// Domain restricted to the given attributes (in clique order).
    pub fn project(&self, clique: &Clique) -> Domain {
        let attrs = clique.attrs().iter().map(|&i| self.attrs[i].clone()).collect();
        Domain::new(attrs).expect("subset of a valid domain is valid")
    }

    /// JSON document in the domain-spec format; `Range` attributes are
    /// written as integer sizes.
    pub fn to_spec(&self) -> Value {
        let mut map = serde_json::Map::new();
        for a in &self.attrs {
            let v = match &a.values {
                Values::Labels(ls) => Value::from(ls.clone()),
                Values::Range(k) => Value::from(*k),
            };
            map.insert(a.name.clone(), v);
        }
        Value::Object(map)
    }

    /// Stable content hash (hex SHA-256 of the spec document).
    pub fn content_hash(&self) -> String {
        let doc = serde_json::to_vec(&self.to_spec()).expect("domain spec serializes");
        hex::encode(Sha256::digest(&doc))
    }
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.attrs.len() == other.attrs.len()
            && self.attrs.iter().zip(&other.attrs).all(|(a, b)| {
                a.name == b.name
                    && a.size() == b.size()
                    && match (&a.values, &b.values) {
                        (Values::Range(_), Values::Range(_)) => true,
                        _ => (0..a.size()).all(|i| a.label(i) == b.label(i)),
                    }
            })
    }
}

/// Parses a domain-spec document: a JSON object mapping attribute name to
/// either a list of labels or an integer size. Document order is kept.
pub fn load_domain(spec: &str) -> Result<Domain> {
    let doc: Value = serde_json::from_str(spec).map_err(|e| Error::Parse(e.to_string()))?;
    let Value::Object(map) = doc else {
        return Err(Error::Parse("domain spec must be a JSON object".into()));
    };
    // serde_json silently keeps the last of duplicate keys, so scan the raw
    // text for repeated names first.
    check_duplicate_keys(spec)?;
    let mut attrs = Vec::with_capacity(map.len());
    for (name, v) in map {
        let values = match v {
            Value::Array(items) => {
                let mut labels = Vec::with_capacity(items.len());
                for it in items {
                    labels.push(match it {
                        Value::String(s) => s,
                        Value::Number(n) => n.to_string(),
                        Value::Bool(b) => b.to_string(),
                        other => {
                            return Err(Error::Parse(format!(
                                "attribute `{name}`: unsupported label {other}"
                            )))
                        }
                    });
                }
                let mut seen = std::collections::HashSet::new();
                if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
                    return Err(Error::Parse(format!(
                        "attribute `{name}` repeats label `{dup}`"
                    )));
                }
                Values::Labels(labels)
            }
            Value::Number(n) => match n.as_u64() {
                Some(k) => Values::Range(k as usize),
                None => {
                    return Err(Error::Parse(format!(
                        "attribute `{name}`: size must be a nonnegative integer"
                    )))
                }
            },
            other => {
                return Err(Error::Parse(format!(
                    "attribute `{name}`: expected a label list or a size, got {other}"
                )))
            }
        };
        attrs.push(Attribute::new(name, values));
    }
    Domain::new(attrs)
}

fn check_duplicate_keys(spec: &str) -> Result<()> {
    struct Keys(Vec<String>);
    impl<'de> Deserialize<'de> for Keys {
        fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
            struct V;
            impl<'de> serde::de::Visitor<'de> for V {
                type Value = Keys;
                fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                    f.write_str("a JSON object")
                }
                fn visit_map<A: serde::de::MapAccess<'de>>(
                    self,
                    mut m: A,
                ) -> std::result::Result<Keys, A::Error> {
                    let mut keys = Vec::new();
                    while let Some((k, _)) = m.next_entry::<String, serde::de::IgnoredAny>()? {
                        keys.push(k);
                    }
                    Ok(Keys(keys))
                }
            }
            d.deserialize_map(V)
        }
    }
    let Keys(keys) = serde_json::from_str(spec).map_err(|e| Error::Parse(e.to_string()))?;
    let mut seen = std::collections::HashSet::new();
    for k in keys {
        if !seen.insert(k.clone()) {
            return Err(Error::DuplicateAttribute(k));
        }
    }
    Ok(())
}

/// A nonempty, strictly increasing set of attribute indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Clique(Vec<usize>);

impl Clique {
    /// Sorts the indices; rejects empty input and repeats.
    pub fn new(mut attrs: Vec<usize>) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::InvalidClique("clique is empty".into()));
        }
        attrs.sort_unstable();
        if attrs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidClique(format!("repeated attribute in {attrs:?}")));
        }
        Ok(Clique(attrs))
    }

    pub fn single(i: usize) -> Self {
        Clique(vec![i])
    }

    pub fn pair(i: usize, j: usize) -> Result<Self> {
        Clique::new(vec![i, j])
    }

    pub fn attrs(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, attr: usize) -> bool {
        self.0.binary_search(&attr).is_ok()
    }

    pub fn is_subset_of(&self, other: &Clique) -> bool {
        self.0.iter().all(|a| other.contains(*a))
    }

    pub fn union(&self, other: &Clique) -> Clique {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        Clique(v)
    }
}

impl TryFrom<Vec<usize>> for Clique {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Clique::new(v)
    }
}

impl From<Clique> for Vec<usize> {
    fn from(c: Clique) -> Self {
        c.0
    }
}

impl fmt::Display for Clique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}
