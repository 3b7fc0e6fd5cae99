//! Classification and numerical verification of Hopf-like bifurcations in
//! planar piecewise-smooth ODE systems.

pub mod geometry;
pub mod hlb;
pub mod integrator;
pub mod numerics;
pub mod poincare;
pub mod pwsmodel;
pub mod returnmaps;
pub mod scaling;
pub mod zoo;
