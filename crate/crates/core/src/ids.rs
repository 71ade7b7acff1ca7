//! Opaque identifiers. The engine generates them; callers never parse them.

use alloc::string::String;
use core::fmt;
use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.into())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }
    };
}

id_type!(
    /// Change request identifier.
    RequestId
);
id_type!(
    /// System requirement identifier.
    RequirementId
);
id_type!(
    /// Trace link identifier.
    LinkId
);
id_type!(
    /// Epic or user story identifier.
    WorkItemId
);
id_type!(SprintId);
id_type!(SessionId);
id_type!(ActorId);
id_type!(SiteId);

impl ActorId {
    /// Actor recorded on bootstrap events (site and actor registration).
    pub fn system() -> Self {
        Self::new("system")
    }
}
