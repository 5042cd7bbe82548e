//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;
use std::fmt;

type Factory<C, T> = Box<dyn Fn(&C) -> Box<T> + Send + Sync>;

/// Maps a strategy name to a factory building it from a shared config `C`.
pub struct Registry<C, T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<C, T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub known: Vec<&'static str>,
}

impl fmt::Display for UnknownStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown {} {:?} (expected one of: {})",
            self.kind,
            self.name,
            self.known.join(", ")
        )
    }
}

impl std::error::Error for UnknownStrategy {}

impl<C, T: ?Sized> Registry<C, T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Box<T> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
        self
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>, UnknownStrategy> {
        self.factories
            .get(name)
            .map(|f| f(config))
            .ok_or_else(|| UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names(),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }
}
