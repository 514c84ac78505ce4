//! Pseudo-spectral toolkit for building and verifying an inverse-cascade
//! velocity/tracer pair on the 2-torus.
//!
//! The library constructs, level by level, a pair of fields (v, h) for the
//! incompressible 2D Navier-Stokes equations plus a passive tracer: pipe-flow
//! potentials are laid down along a fixed direction set, amplitude fields are
//! produced by exact pointwise stress decompositions, principal and Duhamel
//! fields follow by explicit Fourier-multiplier calculus, and a forced
//! corrector iteration closes the pair into an exact mild solution. Every
//! exact identity used along the way is checkable on a desk-scale grid, and
//! the crate ships the probes that check them.
//!
//! Layout:
//! - [`grid`], [`field`], [`ops`]: spectral core (FFTs, fields, multipliers)
//! - [`geometry`]: direction sets and pointwise stress decompositions
//! - [`ladder`]: frequency ladders, admissibility certificates
//! - [`pipes`]: pipe cutoffs, region masks, mask geometry
//! - [`cascade`]: potentials, stresses, amplitudes, principal/Duhamel fields,
//!   assembled forcing
//! - [`corrector`]: weighted path norms, background pairs, Picard solver
//! - [`probes`]: rate scans, norm scans, commutator checks
//! - [`config`], [`report`], [`snapshot`], [`svg`]: run harness

pub mod cascade;
pub mod config;
pub mod corrector;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod ladder;
pub mod ops;
pub mod pipes;
pub mod probes;
pub mod report;
pub mod snapshot;
pub mod svg;
