//! Engine for a photo-based second authentication factor that resists
//! real-time phishing.
//!
//! The server never trusts what the user's browser claims about where it is.
//! Instead the phone photographs the browser window, detectors locate the
//! address bar and the text on screen, and the hostname read from inside the
//! address bar is compared with the server's own hostnames.

pub mod decision;
pub mod domain;
pub mod geometry;
pub mod punycode;
pub mod service;
pub mod session;
pub mod simulator;
pub mod synth;
pub mod verify;

pub use domain::{DomainName, UrlText};
pub use geometry::{BoundingBox, Resolution};
