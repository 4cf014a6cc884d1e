#![allow(dead_code)]

pub mod lindblad;
pub mod phase_ode;
pub mod telegraph;
