pub mod audio;
pub mod generation;
pub mod model;
pub mod numerics;
pub mod training;
