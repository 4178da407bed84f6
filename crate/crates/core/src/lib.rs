pub mod cli;
pub mod config;
pub mod field;
pub mod filters;
pub mod geom;
pub mod mesh;
pub mod primitives;
pub mod raster;
pub mod render;
pub mod sampling;
pub mod synth;
pub mod texbake;
