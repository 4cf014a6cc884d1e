//! Command-line front end: argument handling and SVG figure emission.

pub mod commands;
pub mod render;
pub mod svg;
