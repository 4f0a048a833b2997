//! Name-keyed registries of interchangeable strategies.
//!
//! Similarity kinds, optimizers and training arms are each exposed through a
//! trait object; a [`Registry`] maps the names used in configuration files and
//! on the command line to factories for those objects.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

type Factory<S, A> = Arc<dyn Fn(&A) -> Box<S> + Send + Sync>;

/// Factories for trait objects `S`, constructed from arguments `A`.
pub struct Registry<S: ?Sized, A = ()> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<S, A>>,
}

impl<S: ?Sized, A> Registry<S, A> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&A) -> Box<S> + Send + Sync + 'static,
    {
        self.factories
            .insert(name.to_ascii_lowercase(), Arc::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(&name.to_ascii_lowercase())
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    /// Builds the strategy registered as `name`.
    pub fn create(&self, name: &str, args: &A) -> Result<Box<S>> {
        match self.factories.get(&name.to_ascii_lowercase()) {
            Some(factory) => Ok(factory(args)),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }
}

impl<S: ?Sized, A> fmt::Debug for Registry<S, A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Plain(String);

    impl Greeter for Plain {
        fn greet(&self) -> String {
            format!("hello {}", self.0)
        }
    }

    #[test]
    fn lookup_is_case_insensitive_and_reports_known_names() {
        let mut reg: Registry<dyn Greeter, String> = Registry::new("greeter");
        reg.register("plain", |who: &String| Box::new(Plain(who.clone())));
        assert_eq!(reg.create("PLAIN", &"ecg".into()).unwrap().greet(), "hello ecg");
        let err = reg.create("fancy", &String::new()).err().unwrap();
        assert!(err.to_string().contains("plain"));
        assert_eq!(reg.names(), vec!["plain"]);
    }
}
