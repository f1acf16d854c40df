pub mod autodiff;
pub mod data;
pub mod geometry;
pub mod model;
pub mod parallel;
pub mod so3;
pub mod training;
pub mod verify;
