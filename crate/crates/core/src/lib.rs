//! Single-excitation transport and localization in disordered 2D clouds of
//! blockade-constrained dipolar spins.
//!
//! Lengths are in units of the blockade radius, energies in units of the
//! nearest-neighbour coupling at that distance, and times in the inverse.

pub mod analysis;
pub mod binning;
pub mod cli;
pub mod clusters;
pub mod coupling;
pub mod dephasing;
pub mod dynamics;
pub mod ensemble;
pub mod geometry;
pub mod levelstats;
pub mod rng;
pub mod spectra;
