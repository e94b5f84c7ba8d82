//! Cross-module tests: invariant properties and end-to-end surgery on
//! synthetic profiles.

mod properties;
